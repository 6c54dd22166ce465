//! Extended-precision scalars and the least-squares helpers shared by the
//! numeric modules.
//!
//! Hyperboloid computations mix magnitudes like `cosh(lambda L) ~ e^{lambda L}`
//! with cancellations of size `e^{-lambda l}`, which exceeds what 53-bit
//! doubles can represent once `lambda L` passes a few tens.  Everything that
//! touches that dynamic range is computed in MPFR floats, whose precision
//! travels with each value.

use rug::Float;
use serde::Serialize;
use thiserror::Error;

/// Arbitrary-precision scalar; `BigScalar::prec()` records the precision in
/// bits of every value.  All MPFR operations are correctly rounded (error at
/// most half an ulp, comfortably inside a 4-ulp budget).
pub type BigScalar = Float;

/// Floor on working precision: below this MPFR overhead buys nothing.
pub const MIN_PRECISION: u32 = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NumericsError {
    /// A line fit needs at least two points with distinct abscissae.
    #[error("degenerate fit: {n_points} point(s), {distinct_x} distinct x value(s)")]
    DegenerateFit { n_points: usize, distinct_x: usize },
}

/// A scalar with value `x` at `prec` bits (clamped to at least
/// [`MIN_PRECISION`]).
pub fn big(prec: u32, x: f64) -> BigScalar {
    Float::with_val(prec.max(MIN_PRECISION), x)
}

/// Working precision, in bits, that keeps at least 64 significant bits
/// through the `e^{lambda L}`-scale cancellations in hyperboloid
/// coordinates: `ceil(1.5 * lambda_times_l * log2(e)) + 64`.
pub fn required_precision(lambda_times_l: f64) -> u32 {
    assert!(
        lambda_times_l.is_finite() && lambda_times_l >= 0.0,
        "lambda * L must be finite and nonnegative"
    );
    let extra = (1.5 * lambda_times_l * std::f64::consts::LOG2_E).ceil();
    MIN_PRECISION + extra as u32
}

/// Result of an ordinary least-squares line fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square of the fit residuals (>= 0).
    pub residual_rms: f64,
    /// Number of points used (>= 2).
    pub n_points: usize,
}

/// Ordinary least-squares slope and intercept of `y` against `x`.
///
/// Least squares, rather than endpoint differencing, because the callers fit
/// asymptotic slopes (`rho_lambda` against `lambda`, `log|eta - theta|`
/// against `lambda`) where an O(1) intercept and pre-asymptotic wobble must
/// be averaged out.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<FitResult, NumericsError> {
    let n = points.len();
    let distinct_x = {
        let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        xs.dedup();
        xs.len()
    };
    if n < 2 || distinct_x < 2 {
        return Err(NumericsError::DegenerateFit {
            n_points: n,
            distinct_x,
        });
    }

    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss: f64 = points
        .iter()
        .map(|&(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok(FitResult {
        slope,
        intercept,
        residual_rms: (ss / nf).sqrt(),
        n_points: n,
    })
}
