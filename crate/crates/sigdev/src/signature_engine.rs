//! Signatures of piecewise-linear paths.
//!
//! Two independent routes are kept side by side on purpose: the exact
//! construction multiplies segment exponentials in the tensor algebra, while
//! [`signature_bruteforce`] approximates the defining iterated integrals with
//! left-point sums on a mesh and knows nothing about exponentials.  Agreement
//! between the two, including the oracle's first-order convergence rate as
//! its mesh doubles, is what validates the algebraic route.

use crate::path_model::PiecewisePath;
use crate::tensor_algebra::{
    check_storage_cap, ts_exp_segment, ts_mul, TensorError, TensorSeries,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("empty path has no signature")]
    EmptyPath,
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
}

/// Exact signature of a piecewise-linear path, truncated at `level`: the
/// ordered product of one exponential per segment, each with increment
/// `length * direction`.
pub fn signature_of_path(
    path: &PiecewisePath,
    level: usize,
    prec: u32,
) -> Result<TensorSeries, SignatureError> {
    if path.is_empty() {
        return Err(SignatureError::EmptyPath);
    }
    let mut sig: Option<TensorSeries> = None;
    for seg in path.segments() {
        let v: Vec<f64> = seg.direction.iter().map(|x| x * seg.length).collect();
        let e = ts_exp_segment(&v, level, prec)?;
        sig = Some(match sig {
            None => e,
            Some(s) => ts_mul(&s, &e)?,
        });
    }
    Ok(sig.expect("path is nonempty"))
}

/// Remove a final straight piece algebraically: returns `x * exp(-l theta)`,
/// the signature the path would have had before appending that piece
/// (exactly, when `(theta, l)` is exact).  No renormalization is applied, so
/// estimation error in `(theta, l)` propagates into the result.
pub fn strip_last_segment(
    x: &TensorSeries,
    theta: &[f64],
    l: f64,
) -> Result<TensorSeries, SignatureError> {
    if theta.len() != x.dimension() {
        return Err(SignatureError::InvalidSegment(format!(
            "direction has {} entries, signature dimension is {}",
            theta.len(),
            x.dimension()
        )));
    }
    let norm: f64 = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(SignatureError::InvalidSegment(format!(
            "|direction| = {norm}, expected a unit vector"
        )));
    }
    if !(l.is_finite() && l > 0.0) {
        return Err(SignatureError::InvalidSegment(format!(
            "length {l} must be positive and finite"
        )));
    }
    let v: Vec<f64> = theta.iter().map(|t| -l * t).collect();
    let e = ts_exp_segment(&v, x.level(), x.precision())?;
    Ok(ts_mul(x, &e)?)
}

/// Split `mesh` integration steps across segments proportionally to length
/// (largest-remainder rounding), giving every segment at least one step.
fn allocate_mesh(lengths: &[f64], mesh: usize) -> Vec<usize> {
    let total: f64 = lengths.iter().sum();
    let ideal: Vec<f64> = lengths
        .iter()
        .map(|l| mesh as f64 * l / total)
        .collect();
    let mut alloc: Vec<usize> = ideal.iter().map(|x| (x.floor() as usize).max(1)).collect();
    let mut assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = ideal[i] - ideal[i].floor();
        let fj = ideal[j] - ideal[j].floor();
        fj.total_cmp(&fi)
    });
    let mut cursor = 0;
    while assigned < mesh {
        alloc[order[cursor % order.len()]] += 1;
        assigned += 1;
        cursor += 1;
    }
    alloc
}

/// Numerical-integration oracle for the signature: left-point
/// Riemann-Stieltjes sums on a mesh of roughly `mesh` steps.
///
/// Per step with increment `dg`, levels update in descending order (so each
/// level sees the pre-step value below it):
/// `S_n[w] += S_{n-1}[w_prefix] * dg[w_last]`.
/// Returns dense per-level arrays in the same word order as
/// [`TensorSeries::level_slice`].  Error is `O(1/mesh)` for levels >= 2
/// (level 1 telescopes and is exact), so doubling the mesh should roughly
/// halve the defect against the exact route.
pub fn signature_bruteforce(
    path: &PiecewisePath,
    level: usize,
    mesh: usize,
) -> Result<Vec<Vec<f64>>, SignatureError> {
    if path.is_empty() {
        return Err(SignatureError::EmptyPath);
    }
    if mesh == 0 {
        return Err(SignatureError::InvalidSegment("mesh must be >= 1".into()));
    }
    let d = path.dimension();
    check_storage_cap(d, level)?;
    let mut s: Vec<Vec<f64>> = Vec::with_capacity(level + 1);
    let mut size = 1usize;
    for _ in 0..=level {
        s.push(vec![0.0; size]);
        size *= d;
    }
    s[0][0] = 1.0;
    let lengths: Vec<f64> = path.segments().iter().map(|seg| seg.length).collect();
    let alloc = allocate_mesh(&lengths, mesh);
    for (seg, &steps) in path.segments().iter().zip(&alloc) {
        let dg: Vec<f64> = seg
            .direction
            .iter()
            .map(|x| x * seg.length / steps as f64)
            .collect();
        for _ in 0..steps {
            for n in (1..=level).rev() {
                let (lower, upper) = s.split_at_mut(n);
                let prev = &lower[n - 1];
                let cur = &mut upper[0];
                for (iw, slot) in cur.iter_mut().enumerate() {
                    *slot += prev[iw / d] * dg[iw % d];
                }
            }
        }
    }
    Ok(s)
}
