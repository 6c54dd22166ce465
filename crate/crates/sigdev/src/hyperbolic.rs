//! Development of paths into hyperbolic space, by three deliberately
//! independent routes.
//!
//! The model is the hyperboloid `{x : x_1^2 + ... + x_d^2 - x_{d+1}^2 = -1,
//! x_{d+1} > 0}` in `R^{d+1}`, with base point `o = (0, ..., 0, 1)`.  A path
//! is developed by rolling: each straight piece of length `l` in unit
//! direction `theta`, traversed at rate `lambda`, acts by the boost
//! [`segment_matrix`]`(theta, lambda * l)`, and later pieces multiply on the
//! left, so the developed endpoint is `M_k ... M_2 M_1 o`.  Points are
//! reported in polar form: geodesic distance `rho` from the base point and a
//! unit direction `eta` in `R^d`.
//!
//! Routes:
//! * [`develop_exact`] - the matrix product, in multiple precision, with a
//!   log-domain rewrite for rate-length products too large for any
//!   reasonable mantissa;
//! * [`develop_from_signature`] - evaluation of the same endpooint from a
//!   truncated signature alone, with an a-priori bound on the truncation
//!   tail;
//! * [`develop_ode`] / [`develop_ode_path`] - fixed-step integration of the
//!   polar ODE satisfied by `(eta, rho)`.
//!
//! Agreement between the routes is checked in the tests; none of them is
//! ever validated against itself.

use crate::numerics::{big, required_precision, BigScalar, MIN_PRECISION};
use crate::path_model::PiecewisePath;
use crate::tensor_algebra::TensorSeries;
use rug::Float;
use thiserror::Error;

/// Above this rate-length product the matrix route is abandoned for the
/// log-domain rewrite, whose cost does not grow with `lambda`.
pub const EXACT_MATRIX_MAX_S: f64 = 300.0;

#[derive(Debug, Error)]
pub enum HyperbolicError {
    #[error("precision {have} bits is below the {need} bits this rate requires")]
    PrecisionTooLow { have: u32, need: u32 },
    #[error(
        "truncation tail bound {tail_bound:.3e} exceeds the configured fraction of the \
         spatial scale {scale:.3e} at lambda = {lambda}"
    )]
    TailTooLarge {
        lambda: f64,
        tail_bound: f64,
        scale: f64,
    },
    #[error("ODE grid too coarse ({steps} steps): {message}")]
    StepTooCoarse { steps: usize, message: String },
    #[error("ambient vector is off the hyperboloid: relative defect {defect:.3e}")]
    NotOnHyperboloid { defect: f64 },
}

/// A point of the hyperboloid in polar form: distance `rho >= 0` from the
/// base point and unit direction `eta` in `R^d`.  At `rho = 0` the direction
/// is meaningless; it is set to `e_1` and `degenerate` is raised.
#[derive(Debug, Clone)]
pub struct DevelopmentPoint {
    pub eta: Vec<BigScalar>,
    pub rho: BigScalar,
    pub degenerate: bool,
}

impl DevelopmentPoint {
    /// Ambient coordinates `((sinh rho) eta, cosh rho)`.
    pub fn ambient(&self) -> Vec<BigScalar> {
        let prec = self.rho.prec();
        let sh = Float::with_val(prec, self.rho.sinh_ref());
        let ch = Float::with_val(prec, self.rho.cosh_ref());
        let mut x: Vec<BigScalar> = self
            .eta
            .iter()
            .map(|e| Float::with_val(prec, e * &sh))
            .collect();
        x.push(ch);
        x
    }

    pub fn eta_f64(&self) -> Vec<f64> {
        self.eta.iter().map(|e| e.to_f64()).collect()
    }

    pub fn rho_f64(&self) -> f64 {
        self.rho.to_f64()
    }
}

/// The boost moving the base point distance `s` along direction `theta`:
/// spatial block `I + (cosh s - 1) theta theta^T`, off-diagonal blocks
/// `(sinh s) theta`, corner `cosh s`.  Rows and columns are ambient
/// (dimension `d + 1`, time last).
pub fn segment_matrix(theta: &[f64], s: &BigScalar) -> DevelopmentMatrix {
    let d = theta.len();
    let prec = s.prec().max(MIN_PRECISION);
    let th = unit_direction(theta, prec);
    let ch = Float::with_val(prec, s.cosh_ref());
    let sh = Float::with_val(prec, s.sinh_ref());
    let chm1 = Float::with_val(prec, &ch - &Float::with_val(prec, 1));
    let n = d + 1;
    let mut m = vec![Float::with_val(prec, 0); n * n];
    for i in 0..d {
        for j in 0..d {
            let mut v = Float::with_val(prec, &th[i] * &th[j]);
            v *= &chm1;
            if i == j {
                v += 1;
            }
            m[i * n + j] = v;
        }
        m[i * n + d] = Float::with_val(prec, &sh * &th[i]);
        m[d * n + i] = m[i * n + d].clone();
    }
    m[d * n + d] = ch;
    DevelopmentMatrix { d, m }
}

/// Convert a nominally unit `f64` direction to precision `prec` and
/// renormalize there, so downstream isometry defects are set by `prec`, not
/// by the `~1e-16` slack in the input's norm.
fn unit_direction(theta: &[f64], prec: u32) -> Vec<BigScalar> {
    let mut th: Vec<Float> = theta.iter().map(|&x| big(prec, x)).collect();
    let mut norm = Float::with_val(prec, 0);
    for t in &th {
        norm += t * t;
    }
    norm.sqrt_mut();
    assert!(!norm.is_zero(), "direction must be nonzero");
    for t in th.iter_mut() {
        *t /= &norm;
    }
    th
}

/// A `(d+1) x (d+1)` matrix preserving the hyperboloid's quadratic form,
/// stored row-major in multiple precision.
#[derive(Debug, Clone)]
pub struct DevelopmentMatrix {
    d: usize,
    m: Vec<BigScalar>,
}

impl DevelopmentMatrix {
    pub fn identity(d: usize, prec: u32) -> Self {
        let prec = prec.max(MIN_PRECISION);
        let n = d + 1;
        let mut m = vec![Float::with_val(prec, 0); n * n];
        for i in 0..n {
            m[i * n + i] = Float::with_val(prec, 1);
        }
        Self { d, m }
    }

    /// Path dimension `d` (the matrix is `(d+1) x (d+1)`).
    pub fn path_dim(&self) -> usize {
        self.d
    }

    pub fn precision(&self) -> u32 {
        self.m[0].prec()
    }

    pub fn entry(&self, i: usize, j: usize) -> &BigScalar {
        &self.m[i * (self.d + 1) + j]
    }

    pub fn apply(&self, v: &[BigScalar]) -> Vec<BigScalar> {
        let n = self.d + 1;
        assert_eq!(v.len(), n);
        let prec = self.precision().max(v[0].prec());
        let mut out = vec![Float::with_val(prec, 0); n];
        for i in 0..n {
            for j in 0..n {
                out[i] += &self.m[i * n + j] * &v[j];
            }
        }
        out
    }

    /// `self * rhs` (so `self` acts after `rhs`).
    pub fn mul(&self, rhs: &DevelopmentMatrix) -> DevelopmentMatrix {
        assert_eq!(self.d, rhs.d);
        let n = self.d + 1;
        let prec = self.precision().max(rhs.precision());
        let mut m = vec![Float::with_val(prec, 0); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = &self.m[i * n + k];
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    m[i * n + j] += a * &rhs.m[k * n + j];
                }
            }
        }
        DevelopmentMatrix { d: self.d, m }
    }

    /// Maximum entry of `M^T J M - J` relative to `max(1, max|M|^2)`, where
    /// `J = diag(1, ..., 1, -1)`.  Zero for an exact isometry of the form.
    pub fn isometry_defect(&self) -> f64 {
        let n = self.d + 1;
        let prec = self.precision();
        let mut worst = Float::with_val(prec, 0);
        let mut mmax = 0.0f64;
        for e in &self.m {
            mmax = mmax.max(e.to_f64().abs());
        }
        for i in 0..n {
            for j in i..n {
                // G_ij = sum_k M_ki J_kk M_kj
                let mut g = Float::with_val(prec, 0);
                for k in 0..n {
                    let term = Float::with_val(prec, &self.m[k * n + i] * &self.m[k * n + j]);
                    if k == n - 1 {
                        g -= term;
                    } else {
                        g += term;
                    }
                }
                if i == j {
                    g -= if i == n - 1 { -1.0 } else { 1.0 };
                }
                g.abs_mut();
                if g > worst {
                    worst = g;
                }
            }
        }
        worst.to_f64() / (mmax * mmax).max(1.0)
    }
}

/// The base point `o = (0, ..., 0, 1)` in ambient coordinates.
pub fn base_point(d: usize, prec: u32) -> Vec<BigScalar> {
    let prec = prec.max(MIN_PRECISION);
    let mut o = vec![Float::with_val(prec, 0); d + 1];
    o[d] = Float::with_val(prec, 1);
    o
}

fn point_from_ambient(x: &[BigScalar]) -> DevelopmentPoint {
    let d = x.len() - 1;
    let prec = x.iter().map(|v| v.prec()).max().unwrap();
    let mut t = Float::with_val(prec, &x[d]);
    if t < 1 {
        t = Float::with_val(prec, 1);
    }
    let rho = t.clone().acosh();
    let mut norm = Float::with_val(prec, 0);
    for xi in x.iter().take(d) {
        norm += xi * xi;
    }
    norm.sqrt_mut();
    let degenerate = norm.is_zero() || Float::with_val(prec, &t - &Float::with_val(prec, 1)) < 1e-40;
    let eta = if degenerate {
        let mut e = vec![Float::with_val(prec, 0); d];
        e[0] = Float::with_val(prec, 1);
        e
    } else {
        x.iter()
            .take(d)
            .map(|xi| Float::with_val(prec, xi / &norm))
            .collect()
    };
    DevelopmentPoint {
        eta,
        rho,
        degenerate,
    }
}

/// Polar form of an ambient vector that should lie on the hyperboloid.
/// The quadratic-form defect `|Q(x) + 1| / max(1, x_time^2)` must not exceed
/// `defect_tol`, and the time coordinate must be positive (upper sheet);
/// otherwise [`HyperbolicError::NotOnHyperboloid`].  The time coordinate is
/// clamped to `>= 1` before taking `arccosh`, and a vanishing spatial part
/// yields the degenerate point at the base.
pub fn decompose_ambient(
    x: &[BigScalar],
    defect_tol: f64,
) -> Result<DevelopmentPoint, HyperbolicError> {
    assert!(x.len() >= 2, "ambient dimension is d + 1 >= 2");
    let d = x.len() - 1;
    let prec = x.iter().map(|v| v.prec()).max().unwrap();
    let mut q = Float::with_val(prec, 0);
    for xi in x.iter().take(d) {
        q += xi * xi;
    }
    q -= Float::with_val(prec, &x[d] * &x[d]);
    q += 1;
    q.abs_mut();
    let t2 = x[d].to_f64().powi(2).max(1.0);
    let defect = q.to_f64() / t2;
    if !(defect <= defect_tol) || !(x[d].to_f64() > 0.0) {
        return Err(HyperbolicError::NotOnHyperboloid { defect });
    }
    Ok(point_from_ambient(x))
}

/// Development endpoint matrix of a whole path at rate `lambda`, by the
/// ordered product of segment boosts (later segments on the left).  The
/// entries reach `e^{lambda L}`, so the precision must cover the dynamic
/// range: below [`required_precision`]`(lambda * L)` bits this refuses with
/// [`HyperbolicError::PrecisionTooLow`].
pub fn develop_matrix(
    path: &PiecewisePath,
    lambda: f64,
    prec: u32,
) -> Result<DevelopmentMatrix, HyperbolicError> {
    assert!(lambda >= 0.0 && lambda.is_finite());
    let s_total = lambda * path.total_length();
    let need = required_precision(s_total);
    if prec < need {
        return Err(HyperbolicError::PrecisionTooLow { have: prec, need });
    }
    let mut m = DevelopmentMatrix::identity(path.dimension(), prec);
    for seg in path.segments() {
        let s = big(prec, lambda) * big(prec, seg.length);
        m = segment_matrix(&seg.direction, &s).mul(&m);
    }
    Ok(m)
}

/// One log-domain update: given the polar state after a prefix and one more
/// segment `(theta, s)`, return the new state.  Works entirely with the
/// bounded quantities `e^{-2 rho}`, `e^{-2 s}` and `theta . eta`, so it never
/// forms `e^{rho}` and is stable for arbitrarily large `rho` and `s`.
fn log_domain_step(
    eta: &mut Vec<BigScalar>,
    rho: &mut BigScalar,
    theta: &[f64],
    s: &BigScalar,
    prec: u32,
) {
    let one = Float::with_val(prec, 1);
    let e1 = Float::with_val(prec, Float::with_val(prec, -2 * rho.clone()).exp());
    let e2 = Float::with_val(prec, Float::with_val(prec, -2 * s.clone()).exp());
    let ems = Float::with_val(prec, Float::with_val(prec, -s.clone()).exp());
    // renormalized exactly as in segment_matrix, so the two exact routes see
    // bit-identical directions
    let th = unit_direction(theta, prec);
    let mut c = Float::with_val(prec, 0);
    for (t, e) in th.iter().zip(eta.iter()) {
        c += t * e;
    }
    // T = ((1+c)(1+E1 E2) + (1-c)(E1+E2)) / 4
    let e1e2 = Float::with_val(prec, &e1 * &e2);
    let mut t_big = Float::with_val(prec, &one + &c)
        * Float::with_val(prec, &one + &e1e2);
    t_big += Float::with_val(prec, &one - &c) * Float::with_val(prec, &e1 + &e2);
    t_big /= 4;
    // rho' = rho + s + log(T + sqrt(T^2 - E1 E2))
    let mut disc = Float::with_val(prec, &t_big * &t_big);
    disc -= &e1e2;
    if disc < 0 {
        disc = Float::with_val(prec, 0); // roundoff guard; exact value is >= 0
    }
    disc.sqrt_mut();
    let log_arg = Float::with_val(prec, &t_big + &disc);
    let mut new_rho = Float::with_val(prec, &*rho + s);
    new_rho += log_arg.ln();
    // unnormalized new direction:
    // y = e^{-s}(1-E1) eta
    //   + ((c(1-E1)(1+E2) - 2 c e^{-s}(1-E1) + (1-E2)(1+E1)) / 2) theta
    let om_e1 = Float::with_val(prec, &one - &e1);
    let a_eta = Float::with_val(prec, &ems * &om_e1);
    let mut b_th = Float::with_val(prec, &c * &om_e1);
    b_th *= Float::with_val(prec, &one + &e2);
    let mut corr = Float::with_val(prec, &c * &ems);
    corr *= &om_e1;
    corr *= 2;
    b_th -= corr;
    b_th += Float::with_val(prec, &one - &e2) * Float::with_val(prec, &one + &e1);
    b_th /= 2;
    let mut y: Vec<Float> = eta
        .iter()
        .zip(&th)
        .map(|(e, t)| {
            let mut v = Float::with_val(prec, e * &a_eta);
            v += t * &b_th;
            v
        })
        .collect();
    let mut ynorm = Float::with_val(prec, 0);
    for v in &y {
        ynorm += v * v;
    }
    ynorm.sqrt_mut();
    if !ynorm.is_zero() {
        for v in y.iter_mut() {
            *v /= &ynorm;
        }
    }
    *eta = y;
    *rho = new_rho;
}

fn develop_log_domain(path: &PiecewisePath, lambda: f64, prec: u32) -> DevelopmentPoint {
    let prec = prec.max(MIN_PRECISION);
    let d = path.dimension();
    let mut eta: Vec<Float> = {
        // placeholder until the first segment fixes the direction; the first
        // update's eta-coefficients all vanish at rho = 0
        let first = &path.segments()[0].direction;
        first.iter().map(|&x| big(prec, x)).collect()
    };
    let mut rho = Float::with_val(prec, 0);
    for seg in path.segments() {
        let s = big(prec, lambda) * big(prec, seg.length);
        log_domain_step(&mut eta, &mut rho, &seg.direction, &s, prec);
    }
    let degenerate = rho.to_f64() < 1e-18;
    if degenerate {
        let mut e = vec![Float::with_val(prec, 0); d];
        e[0] = Float::with_val(prec, 1);
        eta = e;
    }
    DevelopmentPoint {
        eta,
        rho,
        degenerate,
    }
}

/// Development endpoint of a piecewise-linear path at rate `lambda`, exactly
/// (up to rounding).  Uses the matrix product up to
/// `lambda * L <=` [`EXACT_MATRIX_MAX_S`] (requiring enough precision for
/// its `e^{lambda L}` dynamic range), and the log-domain rewrite beyond,
/// which runs at any precision `>= 64`.  `lambda = 0` gives the degenerate
/// base point.
pub fn develop_exact(
    path: &PiecewisePath,
    lambda: f64,
    prec: u32,
) -> Result<DevelopmentPoint, HyperbolicError> {
    assert!(lambda >= 0.0 && lambda.is_finite());
    assert!(!path.is_empty(), "development needs at least one segment");
    let s_total = lambda * path.total_length();
    if s_total == 0.0 {
        return Ok(point_from_ambient(&base_point(path.dimension(), prec)));
    }
    if s_total <= EXACT_MATRIX_MAX_S {
        let m = develop_matrix(path, lambda, prec)?;
        let x = m.apply(&base_point(path.dimension(), prec));
        Ok(point_from_ambient(&x))
    } else {
        Ok(develop_log_domain(path, lambda, prec))
    }
}

/// Controls for the signature-series route.
#[derive(Debug, Clone)]
pub struct SeriesConfig {
    /// The truncation tail bound may not exceed this fraction of the
    /// retained spatial scale `sinh(rho)`.
    pub tail_fraction: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            tail_fraction: 0.5,
        }
    }
}

/// Growth-rate estimate for the signature's level masses:
/// `max(|level-1 coefficients|_2, max_n (n! m_n)^{1/n})` where `m_n` is the
/// level-`n` l1 mass.  For an exact signature, `m_n <= L1^n / n!` with `L1`
/// the l1-norm path length, so this stays within `sqrt(d)` of the path
/// length; for perturbed series it grows with the perturbation, which keeps
/// the derived tail bound honest.
pub fn signature_mass_radius(x: &TensorSeries) -> f64 {
    if x.level() == 0 {
        return 0.0;
    }
    let mut l_hat = x.level1_norm();
    let masses = x.level_masses();
    let mut factorial = 1.0f64;
    for (n, &m) in masses.iter().enumerate().skip(1) {
        factorial *= n as f64;
        let r = (factorial * m).powf(1.0 / n as f64);
        if r.is_finite() && r > l_hat {
            l_hat = r;
        }
    }
    l_hat
}

/// `sum_{n > level} x^n / n!`, the remainder of the exponential series.
/// Returns infinity when the sum overflows `f64`.
pub fn tail_sum(x: f64, level: usize) -> f64 {
    assert!(x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    let mut term = 1.0f64;
    for k in 1..=(level + 1) {
        term *= x / k as f64;
        if !term.is_finite() {
            return f64::INFINITY;
        }
    }
    let mut sum = term;
    let mut k = level + 2;
    loop {
        term *= x / k as f64;
        if !term.is_finite() {
            return f64::INFINITY;
        }
        sum += term;
        if term < sum * 1e-19 || k > level + 10_000 {
            break;
        }
        k += 1;
    }
    sum
}

/// Bound on the ambient error of the truncated-series development: twice
/// the exponential tail at the observed mass radius.  The unobserved levels
/// beyond the truncation are covered by the mass-radius growth estimate plus
/// the factor two of safety; route-agreement tests check it empirically.
pub fn series_tail_bound(x: &TensorSeries, lambda: f64) -> f64 {
    2.0 * tail_sum(lambda * signature_mass_radius(x), x.level())
}

/// Evaluate the development endpoint from a truncated signature alone, by
/// contracting every level against the generator matrices, carrying a single
/// ambient vector from the base point.
///
/// This is the full dense contraction with exact zeros pruned: applying
/// generator `A_j` to a vector with one nonzero coordinate yields again one
/// nonzero coordinate (or zero), so the live states form a thin tree of
/// `O(d^{n/2})` words per level rather than `d^n`.
///
/// Returns the polar endpoint and the truncation tail bound.  Refuses with
/// [`HyperbolicError::PrecisionTooLow`] when the coefficient precision
/// cannot absorb the `e^{lambda L}` dynamic range, and with
/// [`HyperbolicError::TailTooLarge`] when the tail bound exceeds the
/// configured fraction of the retained spatial scale `sinh(rho)`.
pub fn develop_from_signature(
    x: &TensorSeries,
    lambda: f64,
    cfg: &SeriesConfig,
) -> Result<(DevelopmentPoint, f64), HyperbolicError> {
    assert!(lambda >= 0.0 && lambda.is_finite());
    let l_hat = signature_mass_radius(x);
    let s_hat = lambda * l_hat;
    if !s_hat.is_finite() {
        return Err(HyperbolicError::PrecisionTooLow {
            have: x.precision(),
            need: u32::MAX,
        });
    }
    let need = required_precision(s_hat);
    if x.precision() < need {
        return Err(HyperbolicError::PrecisionTooLow {
            have: x.precision(),
            need,
        });
    }
    let acc = contract_signature(x, lambda);
    let tail = 2.0 * tail_sum(s_hat, x.level());
    let point = point_from_ambient(&acc);
    let scale = Float::with_val(point.rho.prec(), point.rho.sinh_ref()).to_f64();
    if tail > cfg.tail_fraction * scale {
        return Err(HyperbolicError::TailTooLarge {
            lambda,
            tail_bound: tail,
            scale,
        });
    }
    Ok((point, tail))
}

/// The contraction itself: `sum_w lambda^{|w|} C(w) A_{i_n} ... A_{i_1} o`
/// where `A_j = e_j e_time^T + e_time e_j^T`.  Applying letters front to
/// back keeps exactly one nonzero coordinate (value 1) in the carried
/// vector, tracked as a slot index (`d` = time); each live word contributes
/// `lambda^n C(w)` to its slot's accumulator.
fn contract_signature(x: &TensorSeries, lambda: f64) -> Vec<BigScalar> {
    let d = x.dimension();
    let prec = x.precision();
    let mut acc = vec![Float::with_val(prec, 0); d + 1];
    acc[d] += 1; // empty word
    let lam = big(prec, lambda);
    let mut pow = Float::with_val(prec, 1);
    // (dense word index, nonzero slot of the carried vector)
    let mut states: Vec<(usize, usize)> = vec![(0, d)];
    let mut next: Vec<(usize, usize)> = Vec::new();
    for n in 1..=x.level() {
        pow *= &lam;
        next.clear();
        for &(idx, slot) in &states {
            if slot == d {
                // time carrier: any letter j moves it to spatial slot j
                for j in 0..d {
                    next.push((idx * d + j, j));
                }
            } else {
                // spatial carrier survives only under its own letter
                next.push((idx * d + slot, d));
            }
        }
        let lvl = x.level_slice(n);
        for &(idx, slot) in &next {
            let c = &lvl[idx];
            if !c.is_zero() {
                acc[slot] += c * &pow;
            }
        }
        std::mem::swap(&mut states, &mut next);
    }
    acc
}

/// Independent evaluation of `cosh rho` from the signature: only words of
/// the form `(j_1 j_1 j_2 j_2 ... j_m j_m)` contribute to the time
/// coordinate, each with weight `lambda^{2m}`.  Enumerates those words
/// directly (`d^m` at level `2m`), sharing no code with the contraction
/// walk.
pub fn cosh_rho_via_wordsets(x: &TensorSeries, lambda: f64) -> BigScalar {
    assert!(lambda >= 0.0 && lambda.is_finite());
    let d = x.dimension();
    let prec = x.precision();
    let lam2 = Float::with_val(prec, big(prec, lambda).square_ref());
    let mut total = Float::with_val(prec, 1);
    let mut pow = Float::with_val(prec, 1);
    let mut m = 1usize;
    while 2 * m <= x.level() {
        pow *= &lam2;
        let lvl = x.level_slice(2 * m);
        let mut level_sum = Float::with_val(prec, 0);
        // counter over (j_1, ..., j_m); dense index of the doubled word
        // folds as idx -> idx * d^2 + (j-1) * (d+1)
        let mut tuple = vec![0usize; m];
        loop {
            let mut idx = 0usize;
            for &j in &tuple {
                idx = idx * d * d + j * (d + 1);
            }
            level_sum += &lvl[idx];
            // increment the counter
            let mut pos = m;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                tuple[pos] += 1;
                if tuple[pos] < d {
                    break;
                }
                tuple[pos] = 0;
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
            }
            if pos == usize::MAX {
                break;
            }
        }
        total += Float::with_val(prec, &level_sum * &pow);
        m += 1;
    }
    total
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn renorm(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// One classic fourth-order step of the polar development ODE
/// `eta' = s coth(rho) (theta - (theta.eta) eta)`, `rho' = s theta.eta`,
/// where `theta` may depend on the integration variable `t` in `[0, 1]` and
/// `s` is the total rate-length product.
fn rk4_step<F: Fn(f64) -> Vec<f64>>(
    theta: &F,
    s: f64,
    t: f64,
    h: f64,
    eta: &mut Vec<f64>,
    rho: &mut f64,
) {
    let f = |t: f64, eta: &[f64], rho: f64| -> (Vec<f64>, f64) {
        let th = theta(t);
        let c = dot(&th, eta);
        let coth = 1.0 / rho.tanh();
        let deta: Vec<f64> = th
            .iter()
            .zip(eta)
            .map(|(ti, ei)| s * coth * (ti - c * ei))
            .collect();
        (deta, s * c)
    };
    let add = |eta: &[f64], d: &[f64], w: f64| -> Vec<f64> {
        eta.iter().zip(d).map(|(e, x)| e + w * x).collect()
    };
    let (k1e, k1r) = f(t, eta, *rho);
    let (k2e, k2r) = f(t + h / 2.0, &add(eta, &k1e, h / 2.0), *rho + h / 2.0 * k1r);
    let (k3e, k3r) = f(t + h / 2.0, &add(eta, &k2e, h / 2.0), *rho + h / 2.0 * k2r);
    let (k4e, k4r) = f(t + h, &add(eta, &k3e, h), *rho + h * k3r);
    for (i, e) in eta.iter_mut().enumerate() {
        *e += h / 6.0 * (k1e[i] + 2.0 * k2e[i] + 2.0 * k3e[i] + k4e[i]);
    }
    *rho += h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
    renorm(eta);
}

fn ode_run<F: Fn(f64) -> Vec<f64>>(theta: &F, s: f64, steps: usize) -> (Vec<f64>, f64) {
    let h = 1.0 / steps as f64;
    // the field is singular at rho = 0 but the solution is not: the first
    // step is the exact straight start eta = theta(0), rho = s h
    let mut eta = theta(0.0);
    renorm(&mut eta);
    let mut rho = s * h;
    for k in 1..steps {
        rk4_step(theta, s, k as f64 * h, h, &mut eta, &mut rho);
    }
    (eta, rho)
}

fn point_from_f64(eta: &[f64], rho: f64) -> DevelopmentPoint {
    let prec = MIN_PRECISION;
    let mut e: Vec<Float> = eta.iter().map(|&x| Float::with_val(prec, x)).collect();
    let mut norm = Float::with_val(prec, 0);
    for v in &e {
        norm += v * v;
    }
    norm.sqrt_mut();
    let degenerate = norm.is_zero() || rho <= 0.0;
    if degenerate {
        e.iter_mut().for_each(|v| *v = Float::with_val(prec, 0));
        e[0] = Float::with_val(prec, 1);
    } else {
        for v in e.iter_mut() {
            *v /= &norm;
        }
    }
    DevelopmentPoint {
        eta: e,
        rho: Float::with_val(prec, rho.max(0.0)),
        degenerate,
    }
}

const ODE_STEPS_PER_UNIT_S: f64 = 50.0;
const ODE_REL_TOL: f64 = 1e-7;

fn ode_precheck(s_total: f64, steps: usize) -> Result<(), HyperbolicError> {
    let min_steps = (ODE_STEPS_PER_UNIT_S * s_total).ceil() as usize;
    if steps < min_steps.max(1) {
        return Err(HyperbolicError::StepTooCoarse {
            steps,
            message: format!(
                "need at least {} steps to resolve the initial layer at s = {s_total:.3}",
                min_steps.max(1)
            ),
        });
    }
    Ok(())
}

fn ode_accept(
    coarse: (Vec<f64>, f64),
    fine: (Vec<f64>, f64),
    steps: usize,
) -> Result<DevelopmentPoint, HyperbolicError> {
    let (eta_c, rho_c) = coarse;
    let (eta_f, rho_f) = fine;
    let mut err = (rho_c - rho_f).abs();
    err += eta_c
        .iter()
        .zip(&eta_f)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let tol = ODE_REL_TOL * rho_f.max(1.0);
    if err > tol {
        return Err(HyperbolicError::StepTooCoarse {
            steps,
            message: format!("halved-step change {err:.3e} exceeds tolerance {tol:.3e}"),
        });
    }
    Ok(point_from_f64(&eta_f, rho_f))
}

/// Develop along a time-dependent unit direction `theta(t)`, `t` in
/// `[0, 1]`, with total rate-length product `s_total`, by fixed-step
/// fourth-order integration of the polar ODE (`theta` must be smooth; for
/// piecewise-linear paths use [`develop_ode_path`]).
///
/// Runs at `steps` and `2 * steps` and refuses with
/// [`HyperbolicError::StepTooCoarse`] if the two disagree beyond
/// `1e-7 * max(1, rho)`, or if `steps` cannot resolve the initial layer
/// (fewer than `50 * s_total`).  Returns the finer result.
pub fn develop_ode<F: Fn(f64) -> Vec<f64>>(
    theta: &F,
    s_total: f64,
    steps: usize,
) -> Result<DevelopmentPoint, HyperbolicError> {
    assert!(s_total >= 0.0 && s_total.is_finite());
    if s_total == 0.0 {
        let d = theta(0.0).len();
        return Ok(point_from_f64(&vec![0.0; d], 0.0));
    }
    ode_precheck(s_total, steps)?;
    let coarse = ode_run(theta, s_total, steps);
    let fine = ode_run(theta, s_total, 2 * steps);
    ode_accept(coarse, fine, steps)
}

/// ODE development of a piecewise-linear path at rate `lambda`.  Integration
/// restarts at each corner (the direction is constant within a segment), so
/// the fourth-order rate is not spoiled by the discontinuities; `steps` is
/// the total budget, split across segments proportionally to length.
pub fn develop_ode_path(
    path: &PiecewisePath,
    lambda: f64,
    steps: usize,
) -> Result<DevelopmentPoint, HyperbolicError> {
    assert!(lambda >= 0.0 && lambda.is_finite());
    assert!(!path.is_empty());
    let s_total = lambda * path.total_length();
    if s_total == 0.0 {
        return Ok(point_from_f64(&vec![0.0; path.dimension()], 0.0));
    }
    ode_precheck(s_total, steps)?;
    let run = |mult: usize| -> (Vec<f64>, f64) {
        let mut eta: Vec<f64> = Vec::new();
        let mut rho = 0.0f64;
        let mut started = false;
        for seg in path.segments() {
            let s_seg = lambda * seg.length;
            let seg_steps =
                ((steps as f64 * seg.length / path.total_length()).ceil() as usize).max(1) * mult;
            let h = 1.0 / seg_steps as f64;
            let th = seg.direction.clone();
            let theta = move |_t: f64| th.clone();
            let mut k0 = 0;
            if !started {
                eta = seg.direction.clone();
                rho = s_seg * h;
                started = true;
                k0 = 1;
            }
            for k in k0..seg_steps {
                rk4_step(&theta, s_seg, k as f64 * h, h, &mut eta, &mut rho);
            }
        }
        (eta, rho)
    };
    ode_accept(run(1), run(2), steps)
}

/// The piecewise-constant direction field of a path as a function of the
/// arclength fraction `t` in `[0, 1]`, for handing to [`develop_ode`]-style
/// consumers.
pub fn theta_fn_of_path(path: &PiecewisePath) -> impl Fn(f64) -> Vec<f64> + '_ {
    let total = path.total_length();
    move |t: f64| {
        let target = t.clamp(0.0, 1.0) * total;
        let mut acc = 0.0;
        for seg in path.segments() {
            acc += seg.length;
            if target <= acc {
                return seg.direction.clone();
            }
        }
        path.segments().last().expect("nonempty").direction.clone()
    }
}

/// Plain `f64` development endpoint (polar), for inner loops that evaluate
/// many candidate paths at moderate `lambda * L`.  Same convention as
/// [`develop_exact`]; no error control.
pub(crate) fn develop_f64(pieces: &[(Vec<f64>, f64)], lambda: f64) -> (Vec<f64>, f64) {
    let d = pieces[0].0.len();
    // carried ambient vector (spatial, time), boosted per segment
    let mut sp = vec![0.0f64; d];
    let mut t = 1.0f64;
    for (theta, len) in pieces {
        let s = lambda * len;
        let (ch, sh) = (s.cosh(), s.sinh());
        let proj = dot(theta, &sp);
        let coef = (ch - 1.0) * proj + sh * t;
        for (spi, thi) in sp.iter_mut().zip(theta) {
            *spi += coef * thi;
        }
        t = sh * proj + ch * t;
    }
    let norm = dot(&sp, &sp).sqrt();
    let rho = t.max(1.0).acosh();
    let eta = if norm > 1e-300 {
        sp.iter().map(|x| x / norm).collect()
    } else {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    };
    (eta, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_model::{gen_random_piecewise, PiecewisePath, RandomPathConfig, Segment};
    use crate::signature_engine::signature_of_path;
    use crate::tensor_algebra::ts_scale;
    use rug::ops::Pow;

    fn two_seg_path(l1: f64, l2: f64) -> PiecewisePath {
        PiecewisePath::new(
            2,
            vec![
                Segment {
                    direction: vec![1.0, 0.0],
                    length: l1,
                },
                Segment {
                    direction: vec![0.0, 1.0],
                    length: l2,
                },
            ],
        )
        .unwrap()
    }

    fn eta_dist(a: &DevelopmentPoint, b: &DevelopmentPoint) -> f64 {
        a.eta
            .iter()
            .zip(&b.eta)
            .map(|(x, y)| (x.to_f64() - y.to_f64()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn segment_matrix_moves_base_point_along_geodesic() {
        let s = Float::with_val(128, 0.8);
        let theta = [0.6, 0.8];
        let m = segment_matrix(&theta, &s);
        assert!(m.isometry_defect() < 1e-35);
        let x = m.apply(&base_point(2, 128));
        let sh = 0.8f64.sinh();
        assert!((x[0].to_f64() - sh * 0.6).abs() < 1e-15);
        assert!((x[1].to_f64() - sh * 0.8).abs() < 1e-15);
        assert!((x[2].to_f64() - 0.8f64.cosh()).abs() < 1e-15);
    }

    #[test]
    fn right_angle_path_has_closed_form_development() {
        // segments along e1 then e2: later boosts act on the left, so the
        // first direction keeps a pure sinh coordinate
        let (a, b) = (0.9f64, 0.35f64);
        let path = two_seg_path(a, b);
        let m = develop_matrix(&path, 1.0, 128).unwrap();
        assert!(m.isometry_defect() < 1e-30);
        let x = m.apply(&base_point(2, 128));
        assert!((x[0].to_f64() - a.sinh()).abs() < 1e-14);
        assert!((x[1].to_f64() - b.sinh() * a.cosh()).abs() < 1e-14);
        assert!((x[2].to_f64() - a.cosh() * b.cosh()).abs() < 1e-14);

        let p = decompose_ambient(&x, 1e-20).unwrap();
        assert!((p.rho.clone().cosh().to_f64() - a.cosh() * b.cosh()).abs() < 1e-13);
        let en: f64 = p.eta.iter().map(|e| e.to_f64().powi(2)).sum::<f64>();
        assert!((en - 1.0).abs() < 1e-25);
    }

    #[test]
    fn decompose_rejects_off_hyperboloid_vectors() {
        let prec = 96;
        let x = vec![
            Float::with_val(prec, 1.0),
            Float::with_val(prec, 0.0),
            Float::with_val(prec, 1.0), // Q = 0, defect 0.5
        ];
        assert!(matches!(
            decompose_ambient(&x, 1e-6),
            Err(HyperbolicError::NotOnHyperboloid { .. })
        ));
        // lower sheet
        let y = vec![
            Float::with_val(prec, 0.0),
            Float::with_val(prec, 0.0),
            Float::with_val(prec, -1.0),
        ];
        assert!(decompose_ambient(&y, 1e-6).is_err());
        // base point is degenerate
        let o = base_point(2, prec);
        let p = decompose_ambient(&o, 1e-20).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.rho.to_f64(), 0.0);
        assert_eq!(p.eta[0].to_f64(), 1.0);
    }

    #[test]
    fn development_distance_never_exceeds_rate_times_length() {
        let cfg = RandomPathConfig::default();
        for seed in 0..5 {
            let p = gen_random_piecewise(seed, 3, 2, &cfg);
            for lambda in [0.5, 2.0, 7.0] {
                let s = lambda * p.total_length();
                let prec = required_precision(s);
                let point = develop_exact(&p, lambda, prec).unwrap();
                assert!(point.rho.to_f64() <= s * (1.0 + 1e-12), "seed {seed}");
            }
            // log-domain regime
            let lambda = 1000.0 / p.total_length();
            let point = develop_exact(&p, lambda, 128).unwrap();
            assert!(point.rho.to_f64() <= 1000.0 * (1.0 + 1e-12));
            assert!(point.rho.to_f64() > 0.0);
        }
    }

    #[test]
    fn matrix_and_log_domain_routes_agree() {
        let cfg = RandomPathConfig::default();
        for seed in [0u64, 1] {
            let p = gen_random_piecewise(seed, 3, 2, &cfg);
            for s_target in [250.0, 350.0] {
                let lambda = s_target / p.total_length();
                let prec = required_precision(s_target) + 16;
                let via_matrix = {
                    let m = develop_matrix(&p, lambda, prec).unwrap();
                    point_from_ambient(&m.apply(&base_point(2, prec)))
                };
                let via_log = develop_log_domain(&p, lambda, prec);
                let dr = (via_matrix.rho.to_f64() - via_log.rho.to_f64()).abs();
                assert!(
                    dr / s_target < 1e-25,
                    "seed {seed} s {s_target}: rho defect {dr:.3e}"
                );
                assert!(
                    eta_dist(&via_matrix, &via_log) < 1e-25,
                    "seed {seed} s {s_target}"
                );
            }
        }
    }

    #[test]
    fn exact_route_dispatch_and_precision_gate() {
        let p = two_seg_path(0.7, 0.5);
        // matrix regime below the threshold demands precision
        let lambda = 100.0 / p.total_length();
        match develop_exact(&p, lambda, 64) {
            Err(HyperbolicError::PrecisionTooLow { have: 64, need }) => {
                assert_eq!(need, required_precision(lambda * p.total_length()));
            }
            other => panic!("expected PrecisionTooLow, got {other:?}"),
        }
        // above the threshold the log-domain route runs at minimum precision
        let lambda_big = 301.0 / p.total_length();
        assert!(develop_exact(&p, lambda_big, 64).is_ok());
        // lambda = 0 is the degenerate base point
        let at_zero = develop_exact(&p, 0.0, 64).unwrap();
        assert!(at_zero.degenerate);
        assert_eq!(at_zero.rho.to_f64(), 0.0);
    }

    #[test]
    fn series_route_matches_exact_route_within_tail_bound() {
        let cfg = RandomPathConfig::default();
        let series_cfg = SeriesConfig::default();
        for seed in 0..3 {
            let p = gen_random_piecewise(seed, 3, 2, &cfg);
            let sig = signature_of_path(&p, 14, 128).unwrap();
            for s_target in [1.0, 3.0] {
                let lambda = s_target / p.total_length();
                let (sp, tail) = develop_from_signature(&sig, lambda, &series_cfg).unwrap();
                let ep = develop_exact(&p, lambda, 128).unwrap();
                let dr = (sp.rho.to_f64() - ep.rho.to_f64()).abs();
                assert!(dr <= tail.max(1e-25), "seed {seed}: {dr:.3e} vs {tail:.3e}");
                assert!(
                    eta_dist(&sp, &ep) <= (3.0 * tail / ep.rho.to_f64().sinh()).max(1e-20),
                    "seed {seed}"
                );
            }
        }
    }

    #[test]
    fn pruned_contraction_equals_dense_contraction() {
        // dense reference: apply every generator word to the base point in
        // full (d+1)-vector arithmetic, no pruning
        let cfg = RandomPathConfig::default();
        let p = gen_random_piecewise(9, 2, 2, &cfg);
        let sig = signature_of_path(&p, 8, 128).unwrap();
        let lambda = 0.9;
        let d = 2usize;
        let prec = 128;
        let mut dense = base_point(d, prec);
        for n in 1..=8usize {
            let lvl = sig.level_slice(n);
            let lam_pow = Float::with_val(prec, lambda).pow(n as u32);
            for (idx, c) in lvl.iter().enumerate() {
                // decode the word, apply A_{i_1}, ..., A_{i_n} to o in order
                let mut letters = vec![0usize; n];
                let mut rem = idx;
                for slot in letters.iter_mut().rev() {
                    *slot = rem % d;
                    rem /= d;
                }
                let mut v = base_point(d, prec);
                for &j in &letters {
                    let mut w = vec![Float::with_val(prec, 0); d + 1];
                    w[j] = v[d].clone();
                    w[d] = v[j].clone();
                    v = w;
                }
                for (acc, vi) in dense.iter_mut().zip(&v) {
                    if !vi.is_zero() && !c.is_zero() {
                        *acc += Float::with_val(prec, c * vi) * &lam_pow;
                    }
                }
            }
        }
        let walked = contract_signature(&sig, lambda);
        for (a, b) in dense.iter().zip(&walked) {
            assert!(
                (a.to_f64() - b.to_f64()).abs() < 1e-30,
                "{} vs {}",
                a.to_f64(),
                b.to_f64()
            );
        }
    }

    #[test]
    fn wordset_time_coordinate_matches_contraction() {
        let cfg = RandomPathConfig::default();
        for seed in [3u64, 4] {
            let p = gen_random_piecewise(seed, 3, 2, &cfg);
            let sig = signature_of_path(&p, 12, 128).unwrap();
            for lambda in [0.4, 1.1] {
                let via_walk = contract_signature(&sig, lambda)[2].to_f64();
                let via_words = cosh_rho_via_wordsets(&sig, lambda).to_f64();
                assert!(
                    (via_walk - via_words).abs() <= 1e-25 * via_walk.abs().max(1.0),
                    "seed {seed} lambda {lambda}"
                );
            }
        }
    }

    #[test]
    fn dilated_signature_develops_like_scaled_rate() {
        let cfg = RandomPathConfig::default();
        let p = gen_random_piecewise(6, 2, 2, &cfg);
        let sig = signature_of_path(&p, 12, 128).unwrap();
        let lambda = 1.3;
        let scaled = ts_scale(&sig, lambda);
        let series_cfg = SeriesConfig::default();
        let (a, _) = develop_from_signature(&sig, lambda, &series_cfg).unwrap();
        let (b, _) = develop_from_signature(&scaled, 1.0, &series_cfg).unwrap();
        assert!((a.rho.to_f64() - b.rho.to_f64()).abs() < 1e-14);
        assert!(eta_dist(&a, &b) < 1e-14);
    }

    #[test]
    fn series_route_flags_infeasible_rates() {
        let p = two_seg_path(1.0, 1.0);
        let sig = signature_of_path(&p, 10, 2048).unwrap();
        // lambda L = 20 at level 10: the tail dwarfs everything
        match develop_from_signature(&sig, 10.0, &SeriesConfig::default()) {
            Err(HyperbolicError::TailTooLarge {
                lambda,
                tail_bound,
                scale,
            }) => {
                assert_eq!(lambda, 10.0);
                assert!(tail_bound > scale);
            }
            other => panic!("expected TailTooLarge, got {other:?}"),
        }
        // insufficient precision is caught before any work
        let lowp = signature_of_path(&p, 10, 64).unwrap();
        assert!(matches!(
            develop_from_signature(&lowp, 10.0, &SeriesConfig::default()),
            Err(HyperbolicError::PrecisionTooLow { .. })
        ));
    }

    #[test]
    fn mass_radius_bounds_path_length_tightly() {
        let cfg = RandomPathConfig::default();
        for seed in 0..5 {
            let p = gen_random_piecewise(seed, 3, 2, &cfg);
            let sig = signature_of_path(&p, 12, 128).unwrap();
            let l_hat = signature_mass_radius(&sig);
            // upper bound: the l1-norm length of the path
            let l1_len: f64 = p
                .segments()
                .iter()
                .map(|s| s.length * s.direction.iter().map(|x| x.abs()).sum::<f64>())
                .sum();
            assert!(l_hat <= l1_len * (1.0 + 1e-9), "seed {seed}: {l_hat} vs {l1_len}");
            let disp_norm = p
                .displacement()
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            assert!(l_hat >= disp_norm * (1.0 - 1e-12), "seed {seed}");
        }
    }

    #[test]
    fn ode_constant_direction_is_a_geodesic() {
        let theta = |_: f64| vec![0.6, 0.8];
        let s = 2.5;
        let point = develop_ode(&theta, s, 200).unwrap();
        assert!((point.rho.to_f64() - s).abs() < 1e-8);
        assert!((point.eta[0].to_f64() - 0.6).abs() < 1e-8);
        assert!((point.eta[1].to_f64() - 0.8).abs() < 1e-8);
    }

    #[test]
    fn ode_path_route_agrees_with_exact_route() {
        let cfg = RandomPathConfig::default();
        for seed in 0..4 {
            let p = gen_random_piecewise(seed, 3, 2, &cfg);
            let lambda = 4.0 / p.total_length();
            let ode = develop_ode_path(&p, lambda, 600).unwrap();
            let exact = develop_exact(&p, lambda, 128).unwrap();
            assert!(
                (ode.rho.to_f64() - exact.rho.to_f64()).abs() < 1e-6,
                "seed {seed}"
            );
            assert!(eta_dist(&ode, &exact) < 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn ode_rejects_coarse_grids() {
        let theta = |_: f64| vec![1.0, 0.0];
        match develop_ode(&theta, 10.0, 100) {
            Err(HyperbolicError::StepTooCoarse { steps: 100, .. }) => {}
            other => panic!("expected StepTooCoarse, got {other:?}"),
        }
    }

    #[test]
    fn theta_fn_reproduces_segment_directions() {
        let p = two_seg_path(1.0, 3.0);
        let th = theta_fn_of_path(&p);
        assert_eq!(th(0.0), vec![1.0, 0.0]);
        assert_eq!(th(0.2), vec![1.0, 0.0]);
        assert_eq!(th(0.5), vec![0.0, 1.0]);
        assert_eq!(th(1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn f64_development_matches_multiprecision() {
        let cfg = RandomPathConfig::default();
        for seed in 0..4 {
            let p = gen_random_piecewise(seed, 3, 2, &cfg);
            let pieces: Vec<(Vec<f64>, f64)> = p
                .segments()
                .iter()
                .map(|s| (s.direction.clone(), s.length))
                .collect();
            let lambda = 5.0 / p.total_length();
            let (eta, rho) = develop_f64(&pieces, lambda);
            let exact = develop_exact(&p, lambda, 128).unwrap();
            assert!((rho - exact.rho.to_f64()).abs() < 1e-11, "seed {seed}");
            for (a, b) in eta.iter().zip(&exact.eta) {
                assert!((a - b.to_f64()).abs() < 1e-11, "seed {seed}");
            }
        }
    }
}
