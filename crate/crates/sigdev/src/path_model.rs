//! Piecewise-linear paths: storage, concatenation and reversal, generators
//! for special families, and the JSON interchange format.
//!
//! Paths are stored in segment form (unit direction, positive length), not as
//! sampled points: the inversion targets exactly this representation, and
//! constant-speed reparametrization is implicit (it never changes the
//! signature).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stored directions must be unit vectors within this tolerance.
pub const UNIT_NORM_TOL: f64 = 1e-14;
/// Consecutive directions closer than this (Euclidean) merge on `concat`.
pub const MERGE_DIRECTION_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("empty path")]
    EmptyPath,
    #[error("invalid path: {0}")]
    Invalid(String),
}

/// One straight piece: a unit direction and a positive length.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub direction: Vec<f64>,
    pub length: f64,
}

/// An ordered list of straight segments in `R^d`.
///
/// Invariants (enforced on construction): every direction has Euclidean norm
/// 1 within [`UNIT_NORM_TOL`], every length is positive and finite, and all
/// directions live in the declared dimension.  Consecutive segments may be
/// collinear or anti-parallel in storage (see [`PiecewisePath::antiparallel_seams`]);
/// [`concat`] is the operation that normalizes collinear seams away.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePath {
    dimension: usize,
    segments: Vec<Segment>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl PiecewisePath {
    /// A path from already-normalized segments.
    pub fn new(dimension: usize, segments: Vec<Segment>) -> Result<Self, PathError> {
        if dimension == 0 {
            return Err(PathError::Invalid("dimension must be >= 1".into()));
        }
        for (k, seg) in segments.iter().enumerate() {
            if seg.direction.len() != dimension {
                return Err(PathError::Invalid(format!(
                    "segment {k}: direction has {} entries, path dimension is {dimension}",
                    seg.direction.len()
                )));
            }
            if !(seg.length.is_finite() && seg.length > 0.0) {
                return Err(PathError::Invalid(format!(
                    "segment {k}: length {} is not positive and finite",
                    seg.length
                )));
            }
            let n = norm(&seg.direction);
            if !n.is_finite() || (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(PathError::Invalid(format!(
                    "segment {k}: |direction| = {n}, not a unit vector"
                )));
            }
        }
        Ok(Self {
            dimension,
            segments,
        })
    }

    /// A path from (direction, length) pairs, normalizing each direction.
    /// Rejects zero directions and nonpositive lengths.
    pub fn from_unnormalized(
        dimension: usize,
        parts: &[(Vec<f64>, f64)],
    ) -> Result<Self, PathError> {
        let mut segments = Vec::with_capacity(parts.len());
        for (k, (dir, len)) in parts.iter().enumerate() {
            let n = norm(dir);
            if !n.is_finite() || n == 0.0 {
                return Err(PathError::Invalid(format!(
                    "segment {k}: direction has zero or non-finite norm"
                )));
            }
            segments.push(Segment {
                direction: dir.iter().map(|x| x / n).collect(),
                length: *len,
            });
        }
        Self::new(dimension, segments)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Bounded-variation length: the sum of segment lengths.
    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Endpoint minus start point.
    pub fn displacement(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dimension];
        for seg in &self.segments {
            for (di, xi) in d.iter_mut().zip(&seg.direction) {
                *di += seg.length * xi;
            }
        }
        d
    }

    /// Indices `i` where segment `i+1` points opposite to segment `i`.
    /// Such seams are legal in storage but violate the hypotheses of the
    /// last-piece estimators, so callers may want to flag them.
    pub fn antiparallel_seams(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for i in 0..self.segments.len().saturating_sub(1) {
            let a = &self.segments[i].direction;
            let b = &self.segments[i + 1].direction;
            let sum_norm = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x + y) * (x + y))
                .sum::<f64>()
                .sqrt();
            if sum_norm <= MERGE_DIRECTION_TOL {
                out.push(i);
            }
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        let raw = PathJson {
            dimension: self.dimension,
            segments: self
                .segments
                .iter()
                .map(|s| SegmentJson {
                    direction: s.direction.clone(),
                    length: s.length,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("path serialization cannot fail")
    }

    /// Parse the JSON path format, normalizing directions on load and
    /// rejecting zero directions, nonpositive lengths, and empty segment
    /// lists.
    pub fn from_json_str(text: &str) -> Result<Self, PathError> {
        let raw: PathJson = serde_json::from_str(text)
            .map_err(|e| PathError::Invalid(format!("JSON parse error: {e}")))?;
        if raw.segments.is_empty() {
            return Err(PathError::Invalid("path has no segments".into()));
        }
        let parts: Vec<(Vec<f64>, f64)> = raw
            .segments
            .into_iter()
            .map(|s| (s.direction, s.length))
            .collect();
        Self::from_unnormalized(raw.dimension, &parts)
    }
}

impl Serialize for PiecewisePath {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PathJson {
            dimension: self.dimension,
            segments: self
                .segments
                .iter()
                .map(|s| SegmentJson {
                    direction: s.direction.clone(),
                    length: s.length,
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

#[derive(Serialize, Deserialize)]
struct PathJson {
    dimension: usize,
    segments: Vec<SegmentJson>,
}

#[derive(Serialize, Deserialize)]
struct SegmentJson {
    direction: Vec<f64>,
    length: f64,
}

/// Concatenation: segments of `a` followed by segments of `b`.  If `a`'s last
/// direction equals `b`'s first direction within [`MERGE_DIRECTION_TOL`], the
/// two seam segments merge into one with summed length.
pub fn concat(a: &PiecewisePath, b: &PiecewisePath) -> Result<PiecewisePath, PathError> {
    let mut joined = concat_raw(a, b)?;
    let seam = a.segments.len();
    if seam > 0 && seam < joined.segments.len() {
        let mergeable = dist(
            &joined.segments[seam - 1].direction,
            &joined.segments[seam].direction,
        ) <= MERGE_DIRECTION_TOL;
        if mergeable {
            let extra = joined.segments.remove(seam).length;
            joined.segments[seam - 1].length += extra;
        }
    }
    Ok(joined)
}

/// Concatenation that never merges (used where raw step counts matter, e.g.
/// [`gen_alpha_beta`]).
pub fn concat_raw(a: &PiecewisePath, b: &PiecewisePath) -> Result<PiecewisePath, PathError> {
    if a.dimension != b.dimension {
        return Err(PathError::DimensionMismatch {
            left: a.dimension,
            right: b.dimension,
        });
    }
    let mut segments = a.segments.clone();
    segments.extend(b.segments.iter().cloned());
    Ok(PiecewisePath {
        dimension: a.dimension,
        segments,
    })
}

/// The path run backwards: segments in reverse order with negated directions.
pub fn reverse(p: &PiecewisePath) -> PiecewisePath {
    let segments = p
        .segments
        .iter()
        .rev()
        .map(|s| Segment {
            direction: s.direction.iter().map(|x| -x).collect(),
            length: s.length,
        })
        .collect();
    PiecewisePath {
        dimension: p.dimension,
        segments,
    }
}

/// Direction of the final segment.
pub fn direction_at_end(p: &PiecewisePath) -> Result<Vec<f64>, PathError> {
    p.segments
        .last()
        .map(|s| s.direction.clone())
        .ok_or(PathError::EmptyPath)
}

/// The pair of lattice paths defined by the mutual recursion
/// `alpha^{n+1} = alpha^n * beta^n`, `beta^{n+1} = beta^n * alpha^n`,
/// starting from single unit steps in the x and y directions.  Both paths
/// have exactly `2^n` raw unit steps (collinear steps are *not* merged: the
/// step count is part of the construction), identical step multisets, and
/// differ at every step position.
pub fn gen_alpha_beta(n: usize) -> (PiecewisePath, PiecewisePath) {
    let e1 = Segment {
        direction: vec![1.0, 0.0],
        length: 1.0,
    };
    let e2 = Segment {
        direction: vec![0.0, 1.0],
        length: 1.0,
    };
    let mut alpha = PiecewisePath {
        dimension: 2,
        segments: vec![e1],
    };
    let mut beta = PiecewisePath {
        dimension: 2,
        segments: vec![e2],
    };
    for _ in 0..n {
        let next_alpha = concat_raw(&alpha, &beta).expect("same dimension");
        let next_beta = concat_raw(&beta, &alpha).expect("same dimension");
        alpha = next_alpha;
        beta = next_beta;
    }
    (alpha, beta)
}

/// A path moving only parallel to coordinate axes: letters `i_k` in `{1..d}`
/// with consecutive letters distinct, and nonzero signed displacements `r_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisPath {
    dimension: usize,
    letters: Vec<usize>,
    displacements: Vec<f64>,
}

impl AxisPath {
    pub fn new(
        dimension: usize,
        letters: Vec<usize>,
        displacements: Vec<f64>,
    ) -> Result<Self, PathError> {
        if letters.len() != displacements.len() {
            return Err(PathError::Invalid(format!(
                "{} letters but {} displacements",
                letters.len(),
                displacements.len()
            )));
        }
        if letters.is_empty() {
            return Err(PathError::EmptyPath);
        }
        for (k, &l) in letters.iter().enumerate() {
            if l == 0 || l > dimension {
                return Err(PathError::Invalid(format!(
                    "letter {l} at position {k} is outside 1..={dimension}"
                )));
            }
            if k > 0 && letters[k - 1] == l {
                return Err(PathError::Invalid(format!(
                    "consecutive equal letters at positions {} and {k}",
                    k - 1
                )));
            }
        }
        for (k, &r) in displacements.iter().enumerate() {
            if !(r.is_finite() && r != 0.0) {
                return Err(PathError::Invalid(format!(
                    "displacement {r} at position {k} must be nonzero and finite"
                )));
            }
        }
        Ok(Self {
            dimension,
            letters,
            displacements,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    pub fn displacements(&self) -> &[f64] {
        &self.displacements
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }
}

/// Each `(i_k, r_k)` becomes the segment `(sign(r_k) * e_{i_k}, |r_k|)`.
pub fn axis_to_piecewise(a: &AxisPath) -> PiecewisePath {
    let segments = a
        .letters
        .iter()
        .zip(&a.displacements)
        .map(|(&i, &r)| {
            let mut dir = vec![0.0; a.dimension];
            dir[i - 1] = if r >= 0.0 { 1.0 } else { -1.0 };
            Segment {
                direction: dir,
                length: r.abs(),
            }
        })
        .collect();
    PiecewisePath {
        dimension: a.dimension,
        segments,
    }
}

/// Shape constraints for [`gen_random_piecewise`].
#[derive(Debug, Clone)]
pub struct RandomPathConfig {
    /// Minimum angle between consecutive directions, degrees.
    pub min_angle_deg: f64,
    /// Maximum angle between consecutive directions, degrees (kept well away
    /// from 180 so generated paths satisfy the estimators' hypotheses).
    pub max_angle_deg: f64,
    /// Segment lengths are drawn uniformly from this range.
    pub length_range: (f64, f64),
}

impl Default for RandomPathConfig {
    fn default() -> Self {
        Self {
            min_angle_deg: 20.0,
            max_angle_deg: 120.0,
            length_range: (0.4, 1.0),
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-6 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Deterministic random piecewise-linear path: consecutive directions differ
/// by an angle drawn from the configured range, lengths from the configured
/// interval.  Requires `dimension >= 2`.
pub fn gen_random_piecewise(
    seed: u64,
    n_segments: usize,
    dimension: usize,
    cfg: &RandomPathConfig,
) -> PiecewisePath {
    assert!(dimension >= 2, "angle constraints need dimension >= 2");
    assert!(n_segments >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments: Vec<Segment> = Vec::with_capacity(n_segments);
    let mut dir = random_unit(&mut rng, dimension);
    for k in 0..n_segments {
        if k > 0 {
            let angle = rng
                .gen_range(cfg.min_angle_deg..=cfg.max_angle_deg)
                .to_radians();
            // random unit vector orthogonal to the previous direction
            let perp = loop {
                let cand = random_unit(&mut rng, dimension);
                let dot: f64 = cand.iter().zip(&dir).map(|(a, b)| a * b).sum();
                let mut p: Vec<f64> = cand
                    .iter()
                    .zip(&dir)
                    .map(|(c, d0)| c - dot * d0)
                    .collect();
                let n = norm(&p);
                if n > 1e-3 {
                    p.iter_mut().for_each(|x| *x /= n);
                    break p;
                }
            };
            let (c, s) = (angle.cos(), angle.sin());
            let new_dir: Vec<f64> = dir
                .iter()
                .zip(&perp)
                .map(|(d0, p0)| c * d0 + s * p0)
                .collect();
            let n = norm(&new_dir);
            dir = new_dir.iter().map(|x| x / n).collect();
        }
        let length = rng.gen_range(cfg.length_range.0..=cfg.length_range.1);
        segments.push(Segment {
            direction: dir.clone(),
            length,
        });
    }
    PiecewisePath {
        dimension,
        segments,
    }
}

/// Deterministic random axis path: adjacent-distinct letters in `1..=d`,
/// displacements with random sign and magnitude in `[0.2, 3]`.
pub fn gen_random_axis(seed: u64, n_pieces: usize, dimension: usize) -> AxisPath {
    assert!(dimension >= 2, "adjacent-distinct letters need dimension >= 2");
    assert!(n_pieces >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut letters = Vec::with_capacity(n_pieces);
    let mut displacements = Vec::with_capacity(n_pieces);
    let mut prev = 0usize;
    for _ in 0..n_pieces {
        let mut letter = rng.gen_range(1..=dimension);
        while letter == prev {
            letter = rng.gen_range(1..=dimension);
        }
        prev = letter;
        letters.push(letter);
        let magnitude = rng.gen_range(0.2..=3.0);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        displacements.push(sign * magnitude);
    }
    AxisPath::new(dimension, letters, displacements).expect("generator output is valid")
}
