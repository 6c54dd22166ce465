//! Recovery of piecewise-linear paths from truncated signatures.
//!
//! Two recovery problems are solved here. For axis paths (segments along
//! coordinate axes) the signature determines the path by exact coefficient
//! ratios; [`axis_invert`] reads the letters and displacements directly.
//! For general piecewise-linear paths the route goes through hyperbolic
//! development: as the scaling parameter grows, the developed direction
//! converges to the direction of the *last* segment at an exponential rate
//! given by that segment's length. [`estimate_last_piece`] measures both,
//! [`invert_piecewise_linear`] strips the estimated segment off the
//! signature algebraically and repeats, then cleans up the raw pieces
//! (merging, length polish, and an optional nonlinear refinement stage).

use crate::hyperbolic::{develop_f64, develop_from_signature, HyperbolicError, SeriesConfig};
use crate::numerics::{linear_fit, FitResult, NumericsError};
use crate::path_model::{AxisPath, PathError, PiecewisePath};
use crate::signature_engine::{strip_last_segment, SignatureError};
use crate::tensor_algebra::{word_iter, TensorError, TensorSeries};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from the inversion layer.
#[derive(Debug, Error)]
pub enum InversionError {
    /// The coefficients are not consistent with any axis path.
    #[error("not the signature of an axis path: {0}")]
    NotAxisSignature(String),
    /// The truncation level cannot certify the number of axis pieces.
    #[error(
        "truncation level {level} is too low to certify the axis-piece count \
         (significant candidate of length {pieces} at the top level)"
    )]
    LevelInsufficient { level: usize, pieces: usize },
    /// Direction residuals do not decay exponentially over the scale grid,
    /// so no last-segment rate can be read off. Carries the fitted slope of
    /// the log-residuals (zero when no fit was possible).
    #[error("no exponential decay of direction residuals observed (log-slope {residual_variation:.3e})")]
    DecayNotObserved { residual_variation: f64 },
    /// The endpoint-jet least-squares system is numerically rank deficient.
    #[error("endpoint-jet fit is ill conditioned (condition number {cond:.3e})")]
    IllConditionedFit { cond: f64 },
    /// The supplied direction jet has too few derivatives for the requested order.
    #[error("direction jet carries {have} derivative orders, need {need}")]
    InsufficientJet { have: usize, need: usize },
    /// A caller-supplied argument is malformed.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Fit(#[from] NumericsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Hyperbolic(#[from] HyperbolicError),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// Which last-segment estimator to run on the development curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Fit the decay of consecutive differences of the direction curve and
    /// extrapolate the limit with a geometric (Aitken) tail sum. Robust to
    /// the curve not having converged yet at the top of the grid.
    Differenced,
    /// Take the direction at the top of the grid as the limit and fit the
    /// decay of distances to it over a lower window. Biased when the
    /// remaining transient is comparable to the fit window.
    Staggered,
}

/// Tuning knobs for [`estimate_last_piece`] and [`invert_piecewise_linear`].
///
/// All fields have serde defaults, so a partial JSON object is enough to
/// override a single knob.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct InvertConfig {
    /// Cap on `lambda * estimated_length`; the scale grid tops out at
    /// `lambda_l_max / length_estimate`. Governs how much of the signature
    /// tail the series route must resolve.
    pub lambda_l_max: f64,
    /// Number of scale-grid points for the last-piece estimate.
    pub grid_points: usize,
    /// Bottom of the estimate grid as a fraction of the top scale.
    pub grid_lo_frac: f64,
    /// How many trailing difference points enter the decay fit.
    pub fit_tail: usize,
    pub estimator: EstimatorKind,
    /// Stop stripping when the remaining length falls below this fraction
    /// of the initial length estimate.
    pub stop_frac: f64,
    /// Stop stripping when the remaining level-1 norm falls below this.
    pub stop_abs_level1: f64,
    pub max_pieces: usize,
    /// Adjacent pieces within this angle (degrees) are merged; within this
    /// angle of opposite they are subtracted and flagged.
    pub merge_angle_deg: f64,
    /// Pieces shorter than this fraction of the initial length are dropped.
    pub drop_frac: f64,
    /// Run the nonlinear structure refinement after the strip loop
    /// (planar signatures only).
    pub refine: bool,
    /// Residual RMS below which a refined structure is accepted outright.
    pub refine_rms_tol: f64,
    /// Largest piece count the refinement searches over.
    pub refine_max_pieces: usize,
    /// Forwarded to the series evaluator: admissible truncation tail as a
    /// fraction of the developed radial coordinate.
    pub tail_fraction: f64,
    /// Seed for the refinement multi-starts.
    pub seed: u64,
    /// Slopes above `-eps_decay` count as "no decay observed".
    pub eps_decay: f64,
    /// Residual norms below this are treated as exactly converged.
    pub eps_zero: f64,
}

impl Default for InvertConfig {
    fn default() -> Self {
        InvertConfig {
            lambda_l_max: 6.0,
            grid_points: 10,
            grid_lo_frac: 0.4,
            fit_tail: 6,
            estimator: EstimatorKind::Differenced,
            stop_frac: 0.05,
            stop_abs_level1: 1e-6,
            max_pieces: 12,
            merge_angle_deg: 8.0,
            drop_frac: 0.01,
            refine: true,
            refine_rms_tol: 2e-5,
            refine_max_pieces: 4,
            tail_fraction: 0.5,
            seed: 20,
            eps_decay: 1e-4,
            eps_zero: 1e-9,
        }
    }
}

/// One last-segment measurement: limiting direction, decay rate, and the
/// diagnostics of the fit that produced them.
#[derive(Debug, Clone, Serialize)]
pub struct LastPieceEstimate {
    /// Unit estimate of the last segment's direction.
    pub theta_hat: Vec<f64>,
    /// Estimate of the last segment's length (the fitted decay rate).
    pub l_hat: f64,
    /// Distance between the directions at the top of the grid and at 70% of
    /// it; measures how far the curve still was from its limit.
    pub direction_residual: f64,
    /// The log-residual decay fit. Negative slope; `l_hat == -slope` for
    /// estimates that came from a fit (the single-piece fallback reports a
    /// zero fit with `n_points == 0`).
    pub slope_fit: FitResult,
    /// Scale grid the curve was sampled on.
    pub lambda_grid: Vec<f64>,
    /// Truncation level of the signature the estimate was read from.
    pub levels_used: usize,
}

/// Why the strip loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TerminationReason {
    /// The remaining signature was consistent with zero or one segment.
    TrivialRemainder,
    /// The piece budget ran out first.
    MaxPieces,
    /// An estimate failed mid-loop; the report carries the pieces found so far.
    EstimatorFailure,
}

/// Output of [`invert_piecewise_linear`].
#[derive(Debug, Clone, Serialize)]
pub struct InversionReport {
    pub recovered: PiecewisePath,
    /// One entry per recovered segment, in path order. Direction and length
    /// mirror `recovered`; the diagnostic fields come from the strip-loop
    /// estimate associated with that segment (the one whose raw direction is
    /// closest, when merging or refinement changed the piece count).
    pub per_piece: Vec<LastPieceEstimate>,
    pub terminated_by: TerminationReason,
    /// Total-length estimate from the radial growth fit on the full signature.
    pub total_length_estimate: f64,
    /// Set when two adjacent near-opposite pieces were subtracted during
    /// cleanup; the recovered length budget is unreliable around such seams.
    pub cancellation_flagged: bool,
}

/// Asymptotic expansion coefficients of the developed direction in inverse
/// powers of the scale: `eta(lambda) ~ A_0 + A_1/lambda + A_2/lambda^2 + ...`.
#[derive(Debug, Clone, Serialize)]
pub struct DerivativeExpansion {
    /// `coefficients[n]` is `A_n`; `A_0` is the unit terminal direction.
    pub coefficients: Vec<Vec<f64>>,
}

const LENGTH_FIT_FRACS: [f64; 5] = [0.4, 0.55, 0.7, 0.85, 1.0];

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    if n < 1e-12 || !n.is_finite() {
        return None;
    }
    Some(v.iter().map(|x| x / n).collect())
}

fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0).acos().to_degrees()
}

fn eta_rho(
    x: &TensorSeries,
    lambda: f64,
    series_cfg: &SeriesConfig,
) -> Result<(Vec<f64>, f64), HyperbolicError> {
    let (point, _) = develop_from_signature(x, lambda, series_cfg)?;
    Ok((point.eta_f64(), point.rho_f64()))
}

fn level1_f64(x: &TensorSeries) -> Vec<f64> {
    x.level_slice(1)
        .iter()
        .map(|c| c.to_f64())
        .collect()
}

/// Fits the total path length from the asymptotically linear growth of the
/// developed radial coordinate: `rho(lambda) = L * lambda + O(1)`, so the
/// slope of `rho` against `lambda` over a grid estimates `L`.
///
/// The grid must contain at least two distinct scales. The returned length
/// is clamped to be nonnegative.
pub fn estimate_total_length(
    x: &TensorSeries,
    lambda_grid: &[f64],
    config: &InvertConfig,
) -> Result<(f64, FitResult), InversionError> {
    let series_cfg = SeriesConfig {
        tail_fraction: config.tail_fraction,
        ..SeriesConfig::default()
    };
    let mut pts = Vec::with_capacity(lambda_grid.len());
    for &lam in lambda_grid {
        if !(lam > 0.0) || !lam.is_finite() {
            return Err(InversionError::InvalidInput(format!(
                "scale grid entries must be positive and finite, got {lam}"
            )));
        }
        let (_, rho) = eta_rho(x, lam, &series_cfg)?;
        pts.push((lam, rho));
    }
    let fit = linear_fit(&pts)?;
    Ok((fit.slope.max(0.0), fit))
}

/// Same radial-growth fit, but skips grid points the series route cannot
/// certify (truncation tail too large for the requested scale) and shrinks
/// the whole grid when fewer than two points survive. Used while
/// bootstrapping a length estimate from nothing, where the initial guess can
/// be far too small and the implied grid far too hot.
fn robust_length_fit(
    x: &TensorSeries,
    lambda_cap: f64,
    series_cfg: &SeriesConfig,
) -> Result<(f64, FitResult), InversionError> {
    let mut cap = lambda_cap;
    for _ in 0..8 {
        let mut pts = Vec::with_capacity(LENGTH_FIT_FRACS.len());
        for &f in &LENGTH_FIT_FRACS {
            let lam = f * cap;
            match eta_rho(x, lam, series_cfg) {
                Ok((_, rho)) => pts.push((lam, rho)),
                Err(HyperbolicError::TailTooLarge { .. })
                | Err(HyperbolicError::PrecisionTooLow { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        if pts.len() >= 2 {
            let fit = linear_fit(&pts)?;
            return Ok((fit.slope.max(0.0), fit));
        }
        cap /= 4.0;
    }
    Err(InversionError::InvalidInput(
        "no feasible scale grid for the length fit at this truncation level".into(),
    ))
}

/// Length bootstrap: start from the level-1 displacement norm (floored away
/// from zero) and refit the radial slope twice, each time on a grid capped
/// by the previous estimate.
fn bootstrap_length(
    x: &TensorSeries,
    config: &InvertConfig,
    series_cfg: &SeriesConfig,
) -> Result<(f64, FitResult), InversionError> {
    let mut l_hat = norm(&level1_f64(x)).max(0.1);
    let mut last_fit = None;
    for _ in 0..2 {
        let (l_new, fit) = robust_length_fit(x, config.lambda_l_max / l_hat, series_cfg)?;
        l_hat = l_new.max(1e-4);
        last_fit = Some(fit);
    }
    Ok((l_hat, last_fit.expect("two bootstrap passes ran")))
}

/// Evaluates the direction curve on a prefix of `grid`, stopping at the
/// first scale the series route cannot certify (the tail gate is effectively
/// monotone in the scale). Returns the feasible scales and their directions,
/// or the gate error when fewer than `min_points` survive.
fn feasible_eta_prefix(
    x: &TensorSeries,
    grid: &[f64],
    min_points: usize,
    series_cfg: &SeriesConfig,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), InversionError> {
    let mut used = Vec::with_capacity(grid.len());
    let mut etas = Vec::with_capacity(grid.len());
    let mut gate_err: Option<HyperbolicError> = None;
    for &lam in grid {
        match eta_rho(x, lam, series_cfg) {
            Ok((eta, _)) => {
                used.push(lam);
                etas.push(eta);
            }
            Err(e @ HyperbolicError::TailTooLarge { .. })
            | Err(e @ HyperbolicError::PrecisionTooLow { .. }) => {
                gate_err = Some(e);
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    if used.len() < min_points {
        return Err(match gate_err {
            Some(e) => e.into(),
            None => InversionError::InvalidInput(format!(
                "estimate grid has only {} points, need {min_points}",
                used.len()
            )),
        });
    }
    Ok((used, etas))
}

/// Steps a scale down by factors of 0.75 until the series gate certifies it,
/// returning the developed point at the first feasible scale along with that
/// scale. Late in a strip loop the remainder's mass can exceed what the
/// requested scale admits even though the remainder itself is small.
fn develop_at_feasible_scale(
    x: &TensorSeries,
    mut lambda: f64,
    series_cfg: &SeriesConfig,
) -> Result<(Vec<f64>, f64, f64), InversionError> {
    for attempt in 0..8 {
        match eta_rho(x, lambda, series_cfg) {
            Ok((eta, rho)) => return Ok((eta, rho, lambda)),
            Err(
                e @ (HyperbolicError::TailTooLarge { .. }
                | HyperbolicError::PrecisionTooLow { .. }),
            ) => {
                if attempt == 7 {
                    return Err(e.into());
                }
                lambda *= 0.75;
            }
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!("loop returns on success or on the final attempt")
}

fn differenced_estimate(
    x: &TensorSeries,
    config: &InvertConfig,
    lambda_max: f64,
    series_cfg: &SeriesConfig,
) -> Result<LastPieceEstimate, InversionError> {
    let n = config.grid_points.max(3);
    let lo = config.grid_lo_frac;
    // Step the whole grid down when even its low end fails the series gate.
    let mut lambda_max = lambda_max;
    let mut feasible = None;
    for attempt in 0..8 {
        let full_grid: Vec<f64> = (0..n)
            .map(|k| lambda_max * (lo + (1.0 - lo) * k as f64 / (n - 1) as f64))
            .collect();
        match feasible_eta_prefix(x, &full_grid, 4, series_cfg) {
            Ok(pair) => {
                feasible = Some(pair);
                break;
            }
            Err(
                e @ InversionError::Hyperbolic(
                    HyperbolicError::TailTooLarge { .. }
                    | HyperbolicError::PrecisionTooLow { .. },
                ),
            ) => {
                if attempt == 7 {
                    return Err(e);
                }
                lambda_max *= 0.75;
            }
            Err(e) => return Err(e),
        }
    }
    let (grid, etas) = feasible.expect("loop either sets the grid or returns");
    let n = grid.len();

    let diffs: Vec<Vec<f64>> = etas
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
        .collect();
    let usable: Vec<(f64, f64)> = diffs
        .iter()
        .enumerate()
        .filter(|(_, d)| norm(d) > config.eps_zero)
        .map(|(k, d)| ((grid[k] + grid[k + 1]) / 2.0, norm(d).ln()))
        .collect();
    let tail_start = usable.len().saturating_sub(config.fit_tail);
    let window = &usable[tail_start..];
    if window.len() < 3 {
        return Err(InversionError::DecayNotObserved {
            residual_variation: 0.0,
        });
    }
    let fit = linear_fit(window)?;
    if fit.slope > -config.eps_decay {
        return Err(InversionError::DecayNotObserved {
            residual_variation: fit.slope,
        });
    }
    let l_hat = -fit.slope;

    // The differences form (asymptotically) a geometric sequence with ratio
    // q = exp(-l * h); summing the remaining tail off the last difference
    // extrapolates the limiting direction.
    let h = grid[1] - grid[0];
    let q = (-l_hat * h).exp();
    let last = diffs.last().expect("n >= 3 so at least two differences");
    let gain = q / (1.0 - q);
    let raw: Vec<f64> = etas[n - 1]
        .iter()
        .zip(last)
        .map(|(e, d)| e + d * gain)
        .collect();
    let theta_hat = normalized(&raw).ok_or(InversionError::DecayNotObserved {
        residual_variation: fit.slope,
    })?;

    let (eta_mid, _) = eta_rho(x, 0.7 * grid[n - 1], series_cfg)?;
    let direction_residual = norm(
        &etas[n - 1]
            .iter()
            .zip(&eta_mid)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );

    Ok(LastPieceEstimate {
        theta_hat,
        l_hat,
        direction_residual,
        slope_fit: fit,
        lambda_grid: grid,
        levels_used: x.level(),
    })
}

fn staggered_estimate(
    x: &TensorSeries,
    config: &InvertConfig,
    lambda_max: f64,
    series_cfg: &SeriesConfig,
) -> Result<LastPieceEstimate, InversionError> {
    const N_GRID: usize = 8;
    const LO: f64 = 0.35;
    const HI: f64 = 0.7;
    // Step the top scale down until the series route certifies it.
    let (eta_top, _, lambda_max) = develop_at_feasible_scale(x, lambda_max, series_cfg)?;
    let grid: Vec<f64> = (0..N_GRID)
        .map(|k| lambda_max * (LO + (HI - LO) * k as f64 / (N_GRID - 1) as f64))
        .collect();
    let theta_hat = normalized(&eta_top).ok_or(InversionError::DecayNotObserved {
        residual_variation: 0.0,
    })?;

    let mut pts = Vec::with_capacity(N_GRID);
    let mut eta_hi = None;
    for &lam in &grid {
        let (eta, _) = eta_rho(x, lam, series_cfg)?;
        let r = norm(
            &eta.iter()
                .zip(&theta_hat)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        if r > config.eps_zero {
            pts.push((lam, r.ln()));
        }
        eta_hi = Some(eta);
    }
    if pts.len() < 3 {
        return Err(InversionError::DecayNotObserved {
            residual_variation: 0.0,
        });
    }
    let fit = linear_fit(&pts)?;
    if fit.slope > -config.eps_decay {
        return Err(InversionError::DecayNotObserved {
            residual_variation: fit.slope,
        });
    }
    let eta_hi = eta_hi.expect("grid is nonempty");
    let direction_residual = norm(
        &eta_top
            .iter()
            .zip(&eta_hi)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );

    Ok(LastPieceEstimate {
        theta_hat,
        l_hat: -fit.slope,
        direction_residual,
        slope_fit: fit,
        lambda_grid: grid,
        levels_used: x.level(),
    })
}

fn estimate_with_cap(
    x: &TensorSeries,
    config: &InvertConfig,
    lambda_max: f64,
    series_cfg: &SeriesConfig,
) -> Result<LastPieceEstimate, InversionError> {
    match config.estimator {
        EstimatorKind::Differenced => differenced_estimate(x, config, lambda_max, series_cfg),
        EstimatorKind::Staggered => staggered_estimate(x, config, lambda_max, series_cfg),
    }
}

/// Estimates the direction and length of the last segment of the path behind
/// a truncated signature.
///
/// Bootstraps a total-length estimate, picks a scale grid whose top keeps
/// `lambda * length` at `config.lambda_l_max`, and runs the configured decay
/// estimator on the developed direction curve. Fails with
/// [`InversionError::DecayNotObserved`] when the curve carries no readable
/// exponential transient — in particular for single-segment signatures,
/// whose developed direction is constant in the scale.
pub fn estimate_last_piece(
    x: &TensorSeries,
    config: &InvertConfig,
) -> Result<LastPieceEstimate, InversionError> {
    let series_cfg = SeriesConfig {
        tail_fraction: config.tail_fraction,
        ..SeriesConfig::default()
    };
    let (l_hat, _) = bootstrap_length(x, config, &series_cfg)?;
    estimate_with_cap(x, config, config.lambda_l_max / l_hat, &series_cfg)
}

fn merge_pieces(
    pieces: Vec<(Vec<f64>, f64)>,
    config: &InvertConfig,
    l_init: f64,
) -> (Vec<(Vec<f64>, f64)>, bool) {
    let mut ps = pieces;
    let mut flagged = false;
    loop {
        let mut changed = false;
        let mut i = 0;
        while i + 1 < ps.len() {
            let ang = angle_deg(&ps[i].0, &ps[i + 1].0);
            if ang < config.merge_angle_deg {
                // Near-collinear: keep the longer piece's direction, pool lengths.
                let dir = if ps[i].1 >= ps[i + 1].1 {
                    ps[i].0.clone()
                } else {
                    ps[i + 1].0.clone()
                };
                let len = ps[i].1 + ps[i + 1].1;
                ps[i] = (dir, len);
                ps.remove(i + 1);
                changed = true;
            } else if ang > 180.0 - config.merge_angle_deg {
                // Near-opposite: net displacement along the longer direction.
                flagged = true;
                let len = (ps[i].1 - ps[i + 1].1).abs();
                let dir = if ps[i].1 >= ps[i + 1].1 {
                    ps[i].0.clone()
                } else {
                    ps[i + 1].0.clone()
                };
                ps.remove(i + 1);
                if len < 1e-12 {
                    ps.remove(i);
                } else {
                    ps[i] = (dir, len);
                }
                changed = true;
            } else {
                i += 1;
            }
        }
        let before = ps.len();
        ps.retain(|(_, l)| *l >= config.drop_frac * l_init);
        changed |= ps.len() != before;
        if !changed {
            break;
        }
    }
    (ps, flagged)
}

/// Re-solves the piece lengths (directions fixed) against the level-1
/// displacement and the total-length estimate, in the least-squares sense.
/// The update is rejected when it drives a length nonpositive or moves any
/// length by more than half of itself.
fn polish_lengths(pieces: &mut [(Vec<f64>, f64)], disp: &[f64], l_init: f64) {
    let n = pieces.len();
    if n == 0 {
        return;
    }
    let d = disp.len();
    let a = DMatrix::from_fn(d + 1, n, |r, c| if r < d { pieces[c].0[r] } else { 1.0 });
    let mut b = DVector::zeros(d + 1);
    for (r, v) in disp.iter().enumerate() {
        b[r] = *v;
    }
    b[d] = l_init;
    let svd = a.svd(true, true);
    let sol = match svd.solve(&b, 1e-12) {
        Ok(s) => s,
        Err(_) => return,
    };
    for (j, p) in pieces.iter().enumerate() {
        let new = sol[j];
        if !(new > 0.0) || (new - p.1).abs() > 0.5 * p.1 {
            return;
        }
    }
    for (j, p) in pieces.iter_mut().enumerate() {
        p.1 = sol[j];
    }
}

// ---------------------------------------------------------------------------
// Nonlinear structure refinement (planar case).
// ---------------------------------------------------------------------------

/// Levenberg-Marquardt on a residual function, forward-difference Jacobian.
fn lm_fit<F>(residual: &F, p0: Vec<f64>, max_iters: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut p = p0;
    let mut r = residual(&p);
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    let m = r.len();
    let np = p.len();
    let mut mu = 1e-4;
    for _ in 0..max_iters {
        let mut jac = DMatrix::zeros(m, np);
        let step = 1e-7;
        for j in 0..np {
            let mut pj = p.clone();
            pj[j] += step;
            let rj = residual(&pj);
            for i in 0..m {
                jac[(i, j)] = (rj[i] - r[i]) / step;
            }
        }
        let rvec = DVector::from_column_slice(&r);
        let g = jac.transpose() * &rvec;
        let h = jac.transpose() * &jac;
        let mut improved = false;
        for _ in 0..8 {
            let mut damped = h.clone();
            for j in 0..np {
                damped[(j, j)] += mu * h[(j, j)].max(1e-12);
            }
            let dx = match damped.lu().solve(&(-&g)) {
                Some(dx) => dx,
                None => {
                    mu *= 10.0;
                    continue;
                }
            };
            let p_try: Vec<f64> = p.iter().zip(dx.iter()).map(|(a, b)| a + b).collect();
            let r_try = residual(&p_try);
            let cost_try: f64 = r_try.iter().map(|x| x * x).sum();
            if cost_try < cost {
                p = p_try;
                r = r_try;
                cost = cost_try;
                mu = (mu / 3.0).max(1e-10);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !improved || cost < 1e-28 {
            break;
        }
    }
    (p, cost)
}

/// Parameter layout: `[phi_1, ln l_1, phi_2, ln l_2, ...]`.
fn decode_params(params: &[f64]) -> Vec<(Vec<f64>, f64)> {
    params
        .chunks_exact(2)
        .map(|c| {
            let (phi, lnl) = (c[0], c[1].min(3.0));
            (vec![phi.cos(), phi.sin()], lnl.exp())
        })
        .collect()
}

fn encode_params(pieces: &[(Vec<f64>, f64)]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * pieces.len());
    for (dir, len) in pieces {
        out.push(dir[1].atan2(dir[0]));
        out.push(len.ln());
    }
    out
}

/// Multi-start structure search: for each candidate piece count, fit the
/// piece angles and log-lengths against the developed curve of the measured
/// signature plus its level-1 displacement, and keep the smallest count
/// whose residual is competitive. Returns `None` when no fit beats the
/// pipeline pieces' own residual or the measurement grid is infeasible.
fn refine_pieces(
    x: &TensorSeries,
    init_pieces: &[(Vec<f64>, f64)],
    l_init: f64,
    config: &InvertConfig,
    series_cfg: &SeriesConfig,
) -> Option<Vec<(Vec<f64>, f64)>> {
    const N_GRID: usize = 14;
    let lam_cap = config.lambda_l_max / l_init;
    let grid: Vec<f64> = (0..N_GRID)
        .map(|k| lam_cap * (0.15 + 0.85 * k as f64 / (N_GRID - 1) as f64))
        .collect();
    let mut data = Vec::with_capacity(N_GRID);
    for &lam in &grid {
        match eta_rho(x, lam, series_cfg) {
            Ok(er) => data.push(er),
            Err(_) => return None,
        }
    }
    let disp = level1_f64(x);

    let residual = |params: &[f64]| -> Vec<f64> {
        let pieces = decode_params(params);
        let mut res = Vec::with_capacity(N_GRID * 3 + 2);
        for (k, &lam) in grid.iter().enumerate() {
            let (eta_m, rho_m) = develop_f64(&pieces, lam);
            let (eta_d, rho_d) = &data[k];
            res.push(eta_m[0] - eta_d[0]);
            res.push(eta_m[1] - eta_d[1]);
            res.push((rho_m - rho_d) / rho_d.max(1.0));
        }
        let mut disp_m = [0.0f64; 2];
        for (dir, len) in &pieces {
            disp_m[0] += dir[0] * len;
            disp_m[1] += dir[1] * len;
        }
        res.push(disp_m[0] - disp[0]);
        res.push(disp_m[1] - disp[1]);
        res
    };
    let n_res = N_GRID * 3 + 2;
    let rms_of = |cost: f64| (cost / n_res as f64).sqrt();

    let chord = disp[1].atan2(disp[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let max_n = config.refine_max_pieces.max(1);
    let mut by_n: Vec<Option<(Vec<f64>, f64)>> = vec![None; max_n + 1];
    let seq_params = encode_params(init_pieces);

    for n in 1..=max_n {
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        if init_pieces.len() == n {
            candidates.push(seq_params.clone());
            for _ in 0..4 {
                let mut c = seq_params.clone();
                for v in c.chunks_exact_mut(2) {
                    v[0] += rng.gen_range(-0.6..0.6);
                    v[1] += rng.gen_range(-0.4..0.4);
                }
                candidates.push(c);
            }
        }
        let base_lnl = (l_init / n as f64).ln();
        for spread in [0.5, 1.0] {
            let mut fan = Vec::with_capacity(2 * n);
            let mut snake = Vec::with_capacity(2 * n);
            for j in 0..n {
                fan.push(chord + spread * (j as f64 - (n - 1) as f64 / 2.0));
                fan.push(base_lnl);
                snake.push(chord + spread * if j % 2 == 0 { 1.0 } else { -1.0 });
                snake.push(base_lnl);
            }
            candidates.push(fan);
            candidates.push(snake);
        }
        let n_rand = match n {
            1 => 2,
            2 => 8,
            _ => 16,
        };
        for _ in 0..n_rand {
            let mut c = Vec::with_capacity(2 * n);
            for _ in 0..n {
                c.push(chord + rng.gen_range(-2.2..2.2));
                c.push(base_lnl + rng.gen_range(-0.7..0.7));
            }
            candidates.push(c);
        }
        if n >= 2 {
            if let Some((prev, _)) = &by_n[n - 1] {
                let prev_pieces = decode_params(prev);
                for j in 0..prev_pieces.len() {
                    for kink in [0.5, -0.5] {
                        let mut c = Vec::with_capacity(2 * n);
                        for (k, (dir, len)) in prev_pieces.iter().enumerate() {
                            let phi = dir[1].atan2(dir[0]);
                            if k == j {
                                c.push(phi + kink);
                                c.push((len / 2.0).ln());
                                c.push(phi);
                                c.push((len / 2.0).ln());
                            } else {
                                c.push(phi);
                                c.push(len.ln());
                            }
                        }
                        candidates.push(c);
                    }
                }
            }
        }

        let mut best: Option<(Vec<f64>, f64)> = None;
        for cand in candidates {
            let (p, cost) = lm_fit(&residual, cand, 30);
            if best.as_ref().map_or(true, |(_, c)| cost < *c) {
                best = Some((p, cost));
            }
            // Distinct piece configurations can fit the curve to within an
            // order of magnitude of the tolerance, so only an essentially
            // exact fit justifies skipping the remaining starts.
            if let Some((_, c)) = &best {
                if rms_of(*c) < 0.05 * config.refine_rms_tol {
                    break;
                }
            }
        }
        // Basin-hop around the incumbent: nearly degenerate minima lie close
        // together in parameter space, so small jittered restarts find the
        // better basin when the sweep above landed in the wrong one.
        if let Some((mut bp, mut bc)) = best.take() {
            for _ in 0..10 {
                if rms_of(bc) < 0.05 * config.refine_rms_tol {
                    break;
                }
                let mut c = bp.clone();
                for v in c.chunks_exact_mut(2) {
                    v[0] += rng.gen_range(-0.3..0.3);
                    v[1] += rng.gen_range(-0.3..0.3);
                }
                let (p, cost) = lm_fit(&residual, c, 30);
                if cost < bc {
                    bp = p;
                    bc = cost;
                }
            }
            best = Some((bp, bc));
        }
        let stop = best
            .as_ref()
            .map_or(false, |(_, c)| rms_of(*c) < config.refine_rms_tol);
        by_n[n] = best;
        if stop {
            break;
        }
    }

    let best_rms = by_n
        .iter()
        .flatten()
        .map(|(_, c)| rms_of(*c))
        .fold(f64::INFINITY, f64::min);
    if !best_rms.is_finite() {
        return None;
    }
    let threshold = config.refine_rms_tol.max(3.0 * best_rms);
    for entry in by_n.iter().flatten() {
        if rms_of(entry.1) < threshold {
            return Some(decode_params(&entry.0));
        }
    }
    None
}

/// Recovers a piecewise-linear path from its truncated signature.
///
/// The strip loop alternates a last-segment estimate with an algebraic strip
/// (multiplying by the inverse of the estimated segment's exponential), then
/// the raw pieces are reversed into path order and cleaned up: near-parallel
/// neighbours merged, lengths re-solved against displacement and total
/// length, and — for planar signatures with `config.refine` set — a
/// multi-start nonlinear fit re-derives the structure from the development
/// curve directly. Estimator failures mid-loop terminate the loop and are
/// reported in `terminated_by` rather than as an error.
pub fn invert_piecewise_linear(
    x: &TensorSeries,
    config: &InvertConfig,
) -> Result<InversionReport, InversionError> {
    let d = x.dimension();
    if x.level() < 2 {
        return Err(InversionError::InvalidInput(
            "piecewise-linear inversion needs at least two signature levels".into(),
        ));
    }
    let series_cfg = SeriesConfig {
        tail_fraction: config.tail_fraction,
        ..SeriesConfig::default()
    };
    let disp = level1_f64(x);
    let (l_init, _) = bootstrap_length(x, config, &series_cfg)?;

    let mut cur = x.clone();
    let mut pieces: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut raw: Vec<LastPieceEstimate> = Vec::new();
    let mut terminated = TerminationReason::MaxPieces;
    let mut l_rem = l_init;
    let floor = 0.05 * l_init;

    for _ in 0..config.max_pieces {
        if cur.level1_norm() < config.stop_abs_level1 {
            terminated = TerminationReason::TrivialRemainder;
            break;
        }
        // Development probe: after every genuine piece is stripped, the
        // remainder is estimation noise whose displacement still exceeds the
        // absolute stop. Such a remainder develops far less than a
        // stop_frac-length segment would, so it is below the estimator's
        // resolution and the length refit below would misread its
        // small-rho regime as a spurious slope.
        let lambda_probe = 2.0 / l_rem.max(floor);
        if let Ok((_, rho, lam)) = develop_at_feasible_scale(&cur, lambda_probe, &series_cfg) {
            if rho < 0.5 * lam * floor {
                terminated = TerminationReason::TrivialRemainder;
                break;
            }
        }
        l_rem = match robust_length_fit(&cur, config.lambda_l_max / l_rem.max(floor), &series_cfg)
        {
            Ok((l, _)) => l,
            Err(_) => {
                terminated = TerminationReason::EstimatorFailure;
                break;
            }
        };
        if l_rem < config.stop_frac * l_init {
            terminated = TerminationReason::TrivialRemainder;
            break;
        }
        let lambda_max = config.lambda_l_max / l_rem.max(floor);
        match estimate_with_cap(&cur, config, lambda_max, &series_cfg) {
            Ok(est) => {
                cur = strip_last_segment(&cur, &est.theta_hat, est.l_hat)?;
                pieces.push((est.theta_hat.clone(), est.l_hat));
                raw.push(est);
            }
            Err(InversionError::DecayNotObserved { .. }) => {
                // No transient left: the remainder is a single segment whose
                // direction is the (already converged) development limit.
                match develop_at_feasible_scale(&cur, lambda_max, &series_cfg) {
                    Ok((eta, _, lam)) => {
                        if let Some(theta) = normalized(&eta) {
                            pieces.push((theta.clone(), l_rem));
                            raw.push(LastPieceEstimate {
                                theta_hat: theta,
                                l_hat: l_rem,
                                direction_residual: 0.0,
                                slope_fit: FitResult {
                                    slope: 0.0,
                                    intercept: 0.0,
                                    residual_rms: 0.0,
                                    n_points: 0,
                                },
                                lambda_grid: vec![lam],
                                levels_used: cur.level(),
                            });
                            terminated = TerminationReason::TrivialRemainder;
                        } else {
                            terminated = TerminationReason::EstimatorFailure;
                        }
                    }
                    Err(_) => {
                        terminated = TerminationReason::EstimatorFailure;
                    }
                }
                break;
            }
            Err(_) => {
                terminated = TerminationReason::EstimatorFailure;
                break;
            }
        }
    }

    pieces.reverse();
    raw.reverse();

    let (mut final_pieces, mut flagged) = merge_pieces(pieces, config, l_init);
    polish_lengths(&mut final_pieces, &disp, l_init);
    if config.refine && d == 2 && !final_pieces.is_empty() {
        if let Some(refined) = refine_pieces(x, &final_pieces, l_init, config, &series_cfg) {
            final_pieces = refined;
        }
        let (merged, f2) = merge_pieces(final_pieces, config, l_init);
        final_pieces = merged;
        flagged |= f2;
    }

    let recovered = PiecewisePath::from_unnormalized(d, &final_pieces)?;
    let per_piece = rebuild_per_piece(&recovered, &raw);
    Ok(InversionReport {
        recovered,
        per_piece,
        terminated_by: terminated,
        total_length_estimate: l_init,
        cancellation_flagged: flagged,
    })
}

/// One diagnostic entry per final segment. When cleanup preserved the piece
/// count the raw estimates map across positionally; otherwise each final
/// segment borrows the diagnostics of the raw estimate pointing most nearly
/// its way.
fn rebuild_per_piece(
    recovered: &PiecewisePath,
    raw: &[LastPieceEstimate],
) -> Vec<LastPieceEstimate> {
    let segs = recovered.segments();
    segs.iter()
        .enumerate()
        .map(|(i, seg)| {
            let source = if raw.len() == segs.len() {
                raw.get(i)
            } else {
                raw.iter().max_by(|a, b| {
                    let da: f64 = a.theta_hat.iter().zip(&seg.direction).map(|(x, y)| x * y).sum();
                    let db: f64 = b.theta_hat.iter().zip(&seg.direction).map(|(x, y)| x * y).sum();
                    da.total_cmp(&db)
                })
            };
            let mut entry = match source {
                Some(e) => e.clone(),
                None => LastPieceEstimate {
                    theta_hat: seg.direction.clone(),
                    l_hat: seg.length,
                    direction_residual: 0.0,
                    slope_fit: FitResult {
                        slope: 0.0,
                        intercept: 0.0,
                        residual_rms: 0.0,
                        n_points: 0,
                    },
                    lambda_grid: Vec::new(),
                    levels_used: 0,
                },
            };
            entry.theta_hat = seg.direction.clone();
            entry.l_hat = seg.length;
            entry
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Axis paths: exact inversion by coefficient ratios.
// ---------------------------------------------------------------------------

/// Recovers an axis path exactly from its truncated signature.
///
/// The longest word with no repeated adjacent letter that carries a
/// nonnegligible coefficient spells out the sequence of axes; doubling its
/// `k`-th letter and taking twice the coefficient ratio recovers the `k`-th
/// signed displacement. Requires the truncation level to exceed the number
/// of pieces — a significant square-free word at the top level means the
/// count cannot be certified and yields
/// [`InversionError::LevelInsufficient`].
pub fn axis_invert(x: &TensorSeries, eps_zero: f64) -> Result<AxisPath, InversionError> {
    let d = x.dimension();
    let top = x.level();
    if top < 1 {
        return Err(InversionError::LevelInsufficient { level: top, pieces: 1 });
    }

    let level_significant = |n: usize| -> Vec<Vec<usize>> {
        let coeffs = x.level_slice(n);
        let max_abs = coeffs
            .iter()
            .map(|c| c.to_f64().abs())
            .fold(0.0f64, f64::max);
        if max_abs == 0.0 {
            return Vec::new();
        }
        let mut found = Vec::new();
        for (iw, w) in word_iter(d, n).enumerate() {
            let letters = w.letters();
            if letters.windows(2).any(|p| p[0] == p[1]) {
                continue;
            }
            if coeffs[iw].to_f64().abs() > eps_zero * max_abs {
                found.push(letters.to_vec());
            }
        }
        found
    };

    for n in (1..=top).rev() {
        let found = level_significant(n);
        if found.is_empty() {
            continue;
        }
        if n == top {
            // Significant square-free words at the very top level are
            // inconclusive: an axis path with more pieces than the
            // truncation can show looks exactly like this.
            return Err(InversionError::LevelInsufficient {
                level: top,
                pieces: n,
            });
        }
        if found.len() > 1 {
            return Err(InversionError::NotAxisSignature(format!(
                "{} distinct square-free words of length {n} carry significant coefficients \
                 while longer ones vanish",
                found.len()
            )));
        }
        let letters = found.into_iter().next().expect("checked nonempty");
        let word = crate::tensor_algebra::Word::new(letters.clone(), d)?;
        let c_base = x.coeff(&word)?.to_f64();
        let mut displacements = Vec::with_capacity(n);
        for k in 0..n {
            let mut doubled = letters.clone();
            doubled.insert(k, letters[k]);
            let doubled = crate::tensor_algebra::Word::new(doubled, d)?;
            let c_doubled = x.coeff(&doubled)?.to_f64();
            displacements.push(2.0 * c_doubled / c_base);
        }
        return AxisPath::new(d, letters, displacements)
            .map_err(|e| InversionError::NotAxisSignature(e.to_string()));
    }
    Err(InversionError::NotAxisSignature(
        "all coefficients on square-free words vanish".into(),
    ))
}

// ---------------------------------------------------------------------------
// Asymptotic expansion of the developed direction.
// ---------------------------------------------------------------------------

/// Truncated jets: `jet[i]` holds the `i`-th derivative (not Taylor
/// coefficient) of a vector- or scalar-valued function of arclength.
type VJet = Vec<Vec<f64>>;
type SJet = Vec<f64>;

fn binomial_table(n: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; n + 1]; n + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = 1.0;
        for j in 1..=i {
            row[j] = if j == i { 1.0 } else { 0.0 };
        }
    }
    for i in 2..=n {
        for j in 1..i {
            t[i][j] = t[i - 1][j - 1] + t[i - 1][j];
        }
    }
    t
}

fn vjet_derivative(a: &VJet) -> VJet {
    a[1..].to_vec()
}

fn vjet_dot(a: &VJet, b: &VJet, binom: &[Vec<f64>]) -> SJet {
    let len = a.len().min(b.len());
    (0..len)
        .map(|i| {
            (0..=i)
                .map(|j| {
                    let dot: f64 = a[j].iter().zip(&b[i - j]).map(|(x, y)| x * y).sum();
                    binom[i][j] * dot
                })
                .sum()
        })
        .collect()
}

fn sjet_times_vjet(s: &SJet, v: &VJet, binom: &[Vec<f64>]) -> VJet {
    let len = s.len().min(v.len());
    let d = v[0].len();
    (0..len)
        .map(|i| {
            let mut out = vec![0.0; d];
            for j in 0..=i {
                let c = binom[i][j] * s[j];
                for (o, x) in out.iter_mut().zip(&v[i - j]) {
                    *o += c * x;
                }
            }
            out
        })
        .collect()
}

fn vjet_axpy(a: &mut VJet, coef: f64, b: &VJet) {
    for (ai, bi) in a.iter_mut().zip(b) {
        for (x, y) in ai.iter_mut().zip(bi) {
            *x += coef * y;
        }
    }
}

/// Computes the coefficients of the large-scale expansion of the developed
/// direction, `eta(lambda) ~ A_0 + A_1/lambda + ...`, from the jet of the
/// path's direction function at its endpoint.
///
/// `theta_jet[i]` is the `i`-th arclength derivative of the (unit) direction
/// at the endpoint; `order + 1` entries are required for `A_0..A_order`.
/// The recursion inverts, order by order, the stationarity relation the
/// expansion coefficients satisfy; the linear operator inverted at each step
/// acts as `w - theta (theta . w) / 2` on the previous residual.
pub fn derivative_expansion(
    theta_jet: &[Vec<f64>],
    order: usize,
) -> Result<DerivativeExpansion, InversionError> {
    if theta_jet.len() < order + 1 {
        return Err(InversionError::InsufficientJet {
            have: theta_jet.len(),
            need: order + 1,
        });
    }
    let d = theta_jet[0].len();
    if theta_jet.iter().any(|v| v.len() != d) || d == 0 {
        return Err(InversionError::InvalidInput(
            "direction jet entries must share a nonzero dimension".into(),
        ));
    }
    if (norm(&theta_jet[0]) - 1.0).abs() > 1e-9 {
        return Err(InversionError::InvalidInput(
            "direction jet must start from a unit vector".into(),
        ));
    }

    let m = order;
    let binom = binomial_table(m + 1);
    let theta: VJet = theta_jet[..=m].to_vec();
    // a[n] is the jet of A_n, truncated to the orders still needed.
    let mut a: Vec<VJet> = Vec::with_capacity(m + 1);
    a.push(theta.clone());
    for n in 0..m {
        let mut rhs = vjet_derivative(&a[n]);
        for j in 1..=n {
            let s = vjet_dot(&theta, &a[n + 1 - j], &binom);
            let term = sjet_times_vjet(&s, &a[j], &binom);
            let keep = rhs.len().min(term.len());
            rhs.truncate(keep);
            vjet_axpy(&mut rhs, 1.0, &term[..keep].to_vec());
        }
        // Apply -(I - theta theta^T / 2) to the residual jet.
        let dot = vjet_dot(&theta, &rhs, &binom);
        let corr = sjet_times_vjet(&dot, &theta, &binom);
        let keep = rhs.len().min(corr.len());
        rhs.truncate(keep);
        vjet_axpy(&mut rhs, -0.5, &corr[..keep].to_vec());
        for level in rhs.iter_mut() {
            for x in level.iter_mut() {
                *x = -*x;
            }
        }
        a.push(rhs);
    }

    Ok(DerivativeExpansion {
        coefficients: a.into_iter().map(|jet| jet[0].clone()).collect(),
    })
}

/// Fits the leading coefficients of `eta(lambda) ~ B_0 + B_1/lambda + ...`
/// from samples of the development limit on a scale grid, by least squares
/// in inverse powers of the scale (columns rescaled to unit size at the top
/// of the grid). `B_0` is normalized to a unit vector before returning.
pub fn recover_endpoint_jet<F>(
    eta_at: F,
    order: usize,
    lambda_grid: &[f64],
) -> Result<Vec<Vec<f64>>, InversionError>
where
    F: Fn(f64) -> Vec<f64>,
{
    if lambda_grid.is_empty() || lambda_grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(InversionError::InvalidInput(
            "scale grid must be nonempty, positive, and finite".into(),
        ));
    }
    let lam_ref = lambda_grid.iter().cloned().fold(0.0f64, f64::max);
    if order == 0 {
        let eta = eta_at(lam_ref);
        let theta = normalized(&eta).ok_or_else(|| {
            InversionError::InvalidInput("direction sample at the top scale is zero".into())
        })?;
        return Ok(vec![theta]);
    }
    if lambda_grid.len() < order + 1 {
        return Err(InversionError::InvalidInput(format!(
            "need at least {} grid points for order {order}",
            order + 1
        )));
    }

    let rows = lambda_grid.len();
    let samples: Vec<Vec<f64>> = lambda_grid.iter().map(|&l| eta_at(l)).collect();
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(InversionError::InvalidInput(
            "direction samples must share a dimension".into(),
        ));
    }
    let design = DMatrix::from_fn(rows, order + 1, |r, c| (lam_ref / lambda_grid[r]).powi(c as i32));
    let svd = design.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let cond = smax / smin;
    if !cond.is_finite() || cond > 1e10 {
        return Err(InversionError::IllConditionedFit { cond });
    }
    let rhs = DMatrix::from_fn(rows, d, |r, c| samples[r][c]);
    let sol = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| InversionError::InvalidInput(e.to_string()))?;

    let mut coeffs: Vec<Vec<f64>> = (0..=order)
        .map(|i| {
            let scale = lam_ref.powi(i as i32);
            (0..d).map(|c| sol[(i, c)] * scale).collect()
        })
        .collect();
    let theta = normalized(&coeffs[0]).ok_or_else(|| {
        InversionError::InvalidInput("fitted leading coefficient is zero".into())
    })?;
    coeffs[0] = theta;
    Ok(coeffs)
}
