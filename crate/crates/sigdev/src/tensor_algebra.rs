//! Truncated free tensor series over `R^d` with arbitrary-precision
//! coefficients.
//!
//! A series holds one coefficient per word over the alphabet `{1..d}` up to a
//! truncation level `N`, stored densely: level `n` is a flat array of `d^n`
//! values ordered lexicographically, so the word `(i_1, ..., i_n)` sits at
//! index `sum_k (i_k - 1) d^{n-k}` (big-endian base-`d`).  This makes the
//! concatenation product a family of per-level convolutions with pure index
//! arithmetic and no hash lookups.
//!
//! All coefficient arithmetic is correctly-rounded multiple precision; the
//! product kernel uses fused multiply-add so each accumulated term costs one
//! rounding.

use crate::numerics::{big, BigScalar, MIN_PRECISION};
use rug::ops::CompleteRound;
use rug::Float;
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

/// Default bound on the total number of stored coefficients
/// (`sum_{n<=N} d^n`).  Override with the `SIGDEV_MAX_COEFFS` environment
/// variable.
pub const DEFAULT_MAX_COEFFS: u128 = 1 << 27;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error(
        "level cap exceeded: dimension {dimension} at level {level} needs {needed} \
         coefficients, cap is {cap} (override with SIGDEV_MAX_COEFFS)"
    )]
    LevelCapExceeded {
        dimension: usize,
        level: usize,
        needed: u128,
        cap: u128,
    },
    #[error("series has zero constant term, no multiplicative inverse")]
    NotInvertible,
    #[error("invalid word: {0}")]
    InvalidWord(String),
}

/// A word over the alphabet `{1, ..., d}`; letters are 1-based.  The empty
/// word indexes the constant term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn new(letters: Vec<usize>, dimension: usize) -> Result<Self, TensorError> {
        for &l in &letters {
            if l == 0 || l > dimension {
                return Err(TensorError::InvalidWord(format!(
                    "letter {l} outside 1..={dimension}"
                )));
            }
        }
        Ok(Word(letters))
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Position of this word within the dense level array for dimension `d`.
    pub fn dense_index(&self, dimension: usize) -> usize {
        self.0.iter().fold(0, |acc, &l| acc * dimension + (l - 1))
    }

    /// Inverse of [`dense_index`](Word::dense_index) for words of length `len`.
    pub fn from_dense_index(dimension: usize, len: usize, mut index: usize) -> Self {
        let mut letters = vec![0usize; len];
        for slot in letters.iter_mut().rev() {
            *slot = index % dimension + 1;
            index /= dimension;
        }
        Word(letters)
    }

    /// Parse comma-separated 1-based letters; the empty string is the empty
    /// word.
    pub fn parse(text: &str, dimension: usize) -> Result<Self, TensorError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Ok(Word::empty());
        }
        let mut letters = Vec::new();
        for part in trimmed.split(',') {
            let l: usize = part.trim().parse().map_err(|_| {
                TensorError::InvalidWord(format!("cannot parse letter {part:?} in {text:?}"))
            })?;
            letters.push(l);
        }
        Word::new(letters, dimension)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for l in &self.0 {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
            first = false;
        }
        Ok(())
    }
}

/// All words of length `n` over `{1..d}` in lexicographic order, which is
/// exactly dense-index order.
pub fn word_iter(dimension: usize, n: usize) -> impl Iterator<Item = Word> {
    let count = (dimension as u128)
        .checked_pow(n as u32)
        .expect("word count overflow") as usize;
    (0..count).map(move |idx| Word::from_dense_index(dimension, n, idx))
}

fn coeff_cap() -> u128 {
    std::env::var("SIGDEV_MAX_COEFFS")
        .ok()
        .and_then(|s| s.trim().parse::<u128>().ok())
        .unwrap_or(DEFAULT_MAX_COEFFS)
}

fn total_coeffs(dimension: usize, level: usize) -> u128 {
    let mut total: u128 = 0;
    let mut pow: u128 = 1;
    for _ in 0..=level {
        total = total.saturating_add(pow);
        pow = pow.saturating_mul(dimension as u128);
    }
    total
}

/// Check that dense storage for `(dimension, level)` fits under the
/// coefficient cap (default [`DEFAULT_MAX_COEFFS`], overridable via
/// `SIGDEV_MAX_COEFFS`).
pub fn check_storage_cap(dimension: usize, level: usize) -> Result<(), TensorError> {
    let needed = total_coeffs(dimension, level);
    let cap = coeff_cap();
    if needed > cap {
        return Err(TensorError::LevelCapExceeded {
            dimension,
            level,
            needed,
            cap,
        });
    }
    Ok(())
}

/// A tensor series truncated at `level`, with dense per-level coefficient
/// arrays at a fixed working precision.
#[derive(Debug, Clone)]
pub struct TensorSeries {
    dimension: usize,
    level: usize,
    prec: u32,
    group_like: bool,
    /// `levels[n]` has `d^n` entries; `levels[0]` is the constant term.
    levels: Vec<Vec<BigScalar>>,
    masses: OnceLock<Vec<f64>>,
}

impl TensorSeries {
    /// The zero series.  Rejects shapes whose dense storage would exceed the
    /// coefficient cap.
    pub fn zero(dimension: usize, level: usize, prec: u32) -> Result<Self, TensorError> {
        if dimension == 0 {
            return Err(TensorError::InvalidWord(
                "dimension must be >= 1".to_string(),
            ));
        }
        check_storage_cap(dimension, level)?;
        let prec = prec.max(MIN_PRECISION);
        let mut levels = Vec::with_capacity(level + 1);
        let mut size = 1usize;
        for _ in 0..=level {
            levels.push(vec![Float::with_val(prec, 0); size]);
            size *= dimension;
        }
        Ok(Self {
            dimension,
            level,
            prec,
            group_like: false,
            levels,
            masses: OnceLock::new(),
        })
    }

    /// The multiplicative unit: constant term 1, all higher levels zero.
    pub fn unit(dimension: usize, level: usize, prec: u32) -> Result<Self, TensorError> {
        let mut s = Self::zero(dimension, level, prec)?;
        s.levels[0][0] = Float::with_val(s.prec, 1);
        s.group_like = true;
        Ok(s)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn precision(&self) -> u32 {
        self.prec
    }

    /// Whether this series was built purely from signature operations
    /// (segment exponentials, products, inverses, dilations).  Advisory:
    /// series loaded from JSON report `false`.
    pub fn is_group_like(&self) -> bool {
        self.group_like
    }

    /// The dense coefficient array of one level, lexicographic word order.
    pub fn level_slice(&self, n: usize) -> &[BigScalar] {
        &self.levels[n]
    }

    pub fn coeff(&self, word: &Word) -> Result<&BigScalar, TensorError> {
        if word.len() > self.level {
            return Err(TensorError::InvalidWord(format!(
                "word {word} has length {} but series is truncated at level {}",
                word.len(),
                self.level
            )));
        }
        for &l in word.letters() {
            if l == 0 || l > self.dimension {
                return Err(TensorError::InvalidWord(format!(
                    "letter {l} outside 1..={}",
                    self.dimension
                )));
            }
        }
        Ok(&self.levels[word.len()][word.dense_index(self.dimension)])
    }

    pub fn coeff_f64(&self, word: &Word) -> Result<f64, TensorError> {
        Ok(self.coeff(word)?.to_f64())
    }

    /// Per-level l1 mass `sum_w |C(w)|`, memoized.  Feeds the remainder
    /// bounds used by the series development route.
    pub fn level_masses(&self) -> &[f64] {
        self.masses.get_or_init(|| {
            self.levels
                .iter()
                .map(|lvl| lvl.iter().map(|c| c.to_f64().abs()).sum())
                .collect()
        })
    }

    /// l2 norm of the level-1 coefficients (the path displacement when the
    /// series is a signature).
    pub fn level1_norm(&self) -> f64 {
        self.levels[1]
            .iter()
            .map(|c| {
                let x = c.to_f64();
                x * x
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Serialize as JSON with decimal-string coefficients.  Strings carry
    /// enough digits to reproduce the exact binary value on reload; exact
    /// zeros are omitted.
    pub fn to_json_string(&self) -> String {
        let mut entries: Vec<(String, String)> = Vec::new();
        for n in 0..=self.level {
            for (idx, c) in self.levels[n].iter().enumerate() {
                if c.is_zero() && n > 0 {
                    continue;
                }
                let word = Word::from_dense_index(self.dimension, n, idx);
                entries.push((word.to_string(), c.to_string_radix(10, None)));
            }
        }
        let mut coeffs = serde_json::Map::new();
        for (k, v) in entries {
            coeffs.insert(k, serde_json::Value::String(v));
        }
        let doc = serde_json::json!({
            "dimension": self.dimension,
            "level": self.level,
            "precision_bits": self.prec,
            "coeffs": serde_json::Value::Object(coeffs),
        });
        serde_json::to_string_pretty(&doc).expect("signature serialization cannot fail")
    }

    /// Parse the JSON signature format.  Coefficient values may be JSON
    /// numbers or decimal strings; absent words are zero; absent
    /// `precision_bits` defaults to 128.
    pub fn from_json_str(text: &str) -> Result<Self, TensorError> {
        let doc: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| TensorError::InvalidWord(format!("JSON parse error: {e}")))?;
        let dimension = doc
            .get("dimension")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| TensorError::InvalidWord("missing integer field: dimension".into()))?
            as usize;
        let level = doc
            .get("level")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| TensorError::InvalidWord("missing integer field: level".into()))?
            as usize;
        let prec = doc
            .get("precision_bits")
            .map(|v| {
                v.as_u64()
                    .ok_or_else(|| TensorError::InvalidWord("precision_bits must be an integer".into()))
            })
            .transpose()?
            .unwrap_or(128) as u32;
        let coeffs = doc
            .get("coeffs")
            .and_then(|v| v.as_object())
            .ok_or_else(|| TensorError::InvalidWord("missing object field: coeffs".into()))?;
        let mut s = Self::zero(dimension, level, prec)?;
        for (key, value) in coeffs {
            let word = Word::parse(key, dimension)?;
            if word.len() > level {
                return Err(TensorError::InvalidWord(format!(
                    "coefficient key {key:?} is longer than level {level}"
                )));
            }
            let text = match value {
                serde_json::Value::String(t) => t.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                other => {
                    return Err(TensorError::InvalidWord(format!(
                        "coefficient {key:?} must be a number or decimal string, got {other}"
                    )))
                }
            };
            let parsed = Float::parse(&text).map_err(|e| {
                TensorError::InvalidWord(format!("coefficient {key:?}: bad value {text:?} ({e})"))
            })?;
            s.levels[word.len()][word.dense_index(dimension)] = parsed.complete(s.prec);
        }
        Ok(s)
    }
}

fn check_dims(a: &TensorSeries, b: &TensorSeries) -> Result<(), TensorError> {
    if a.dimension != b.dimension {
        return Err(TensorError::DimensionMismatch {
            left: a.dimension,
            right: b.dimension,
        });
    }
    Ok(())
}

/// Concatenation product, truncated at `min(a.level, b.level)`, computed at
/// `max(a.prec, b.prec)`.
///
/// Level `n` of the result is the convolution
/// `out[w] = sum_{w = u v} a[u] * b[v]` over the `n + 1` splits of each word;
/// in dense indexing the split of `iw` after `n - m` letters is
/// `(iw / d^m, iw % d^m)`.  Zero factors are skipped, which makes products
/// against sparse series (axis paths, unit) cheap.
pub fn ts_mul(a: &TensorSeries, b: &TensorSeries) -> Result<TensorSeries, TensorError> {
    check_dims(a, b)?;
    let level = a.level.min(b.level);
    let prec = a.prec.max(b.prec);
    let d = a.dimension;
    let mut out = TensorSeries::zero(d, level, prec)?;
    for n in 0..=level {
        let out_lvl = &mut out.levels[n];
        let mut dm = 1usize; // d^m
        for m in 0..=n {
            let a_lvl = &a.levels[n - m];
            let b_lvl = &b.levels[m];
            for (iw, slot) in out_lvl.iter_mut().enumerate() {
                let av = &a_lvl[iw / dm];
                if av.is_zero() {
                    continue;
                }
                let bv = &b_lvl[iw % dm];
                if bv.is_zero() {
                    continue;
                }
                // fused multiply-add: one rounding per accumulated term
                *slot += av * bv;
            }
            dm *= d;
        }
    }
    out.group_like = a.group_like && b.group_like;
    Ok(out)
}

/// Multiplicative inverse.  With `c0 = a[empty]`, the grading makes the
/// inverse computable level by level:
/// `inv[w] = -(1/c0) * sum_{w = u v, u nonempty} a[u] * inv[v]`,
/// at the cost of a single product.  Errors with
/// [`TensorError::NotInvertible`] when `c0 = 0`.
pub fn ts_inverse(a: &TensorSeries) -> Result<TensorSeries, TensorError> {
    let c0 = &a.levels[0][0];
    if c0.is_zero() {
        return Err(TensorError::NotInvertible);
    }
    let d = a.dimension;
    let prec = a.prec;
    let inv_c0 = Float::with_val(prec, c0.recip_ref());
    let neg_inv_c0 = Float::with_val(prec, -&inv_c0);
    let mut out = TensorSeries::zero(d, a.level, prec)?;
    out.levels[0][0] = inv_c0;
    for n in 1..=a.level {
        let (done, rest) = out.levels.split_at_mut(n);
        let out_lvl = &mut rest[0];
        // Split each word after its first k letters: the prefix indexes a's
        // level k, the suffix the already-built inverse level n-k.  The
        // suffix block holds d^{n-k} indices.
        let mut dsuf = 1usize; // d^{n-k}, k running from n down to 1
        for k in (1..=n).rev() {
            let a_lvl = &a.levels[k];
            let inv_lvl = &done[n - k];
            for (iw, slot) in out_lvl.iter_mut().enumerate() {
                let av = &a_lvl[iw / dsuf];
                if av.is_zero() {
                    continue;
                }
                let bv = &inv_lvl[iw % dsuf];
                if bv.is_zero() {
                    continue;
                }
                *slot += av * bv;
            }
            dsuf *= d;
        }
        for slot in out_lvl.iter_mut() {
            *slot *= &neg_inv_c0;
        }
    }
    out.group_like = a.group_like;
    Ok(out)
}

/// Dilation by `lambda`: level `n` is scaled by `lambda^n`.  This is an
/// algebra automorphism; `lambda = 0` maps everything to the unit-scaled
/// constant term.
pub fn ts_scale(a: &TensorSeries, lambda: f64) -> TensorSeries {
    let mut out = a.clone();
    out.masses = OnceLock::new();
    let lam = big(a.prec, lambda);
    let mut factor = Float::with_val(a.prec, 1);
    for lvl in out.levels.iter_mut().skip(1) {
        factor *= &lam;
        for c in lvl.iter_mut() {
            *c *= &factor;
        }
    }
    out
}

/// The signature of one line segment with increment vector `v` (direction
/// times length): level `n` holds `v_{i_1} ... v_{i_n} / n!`, built by the
/// recurrence `lvl_n[iw] = lvl_{n-1}[iw / d] * v[iw % d] / n`.  A zero
/// increment yields the unit series.
pub fn ts_exp_segment(
    increment: &[f64],
    level: usize,
    prec: u32,
) -> Result<TensorSeries, TensorError> {
    let d = increment.len();
    let mut out = TensorSeries::zero(d, level, prec)?;
    let prec = out.prec;
    out.levels[0][0] = Float::with_val(prec, 1);
    let v: Vec<BigScalar> = increment.iter().map(|&x| big(prec, x)).collect();
    for n in 1..=level {
        let (done, rest) = out.levels.split_at_mut(n);
        let prev = &done[n - 1];
        let lvl = &mut rest[0];
        let inv_n = Float::with_val(prec, n).recip();
        for (iw, slot) in lvl.iter_mut().enumerate() {
            let p = &prev[iw / d];
            if p.is_zero() {
                continue;
            }
            *slot += p * &v[iw % d];
            *slot *= &inv_n;
        }
    }
    out.group_like = true;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &TensorSeries, b: &TensorSeries) -> f64 {
        let mut worst = 0.0f64;
        for n in 0..=a.level().min(b.level()) {
            for (x, y) in a.level_slice(n).iter().zip(b.level_slice(n)) {
                let d = (x.to_f64() - y.to_f64()).abs();
                worst = worst.max(d);
            }
        }
        worst
    }

    fn random_group_like(rng: &mut ChaCha8Rng, d: usize, level: usize, prec: u32) -> TensorSeries {
        let mut s = TensorSeries::unit(d, level, prec).unwrap();
        for _ in 0..3 {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let seg = ts_exp_segment(&v, level, prec).unwrap();
            s = ts_mul(&s, &seg).unwrap();
        }
        s
    }

    #[test]
    fn word_indexing_round_trip_and_order() {
        let listed: Vec<Vec<usize>> = word_iter(2, 2).map(|w| w.letters().to_vec()).collect();
        assert_eq!(listed, vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);

        for d in 1..=4 {
            for n in 0..=3 {
                for (idx, w) in word_iter(d, n).enumerate() {
                    assert_eq!(w.dense_index(d), idx);
                    assert_eq!(Word::from_dense_index(d, n, idx), w);
                }
            }
        }
    }

    #[test]
    fn word_parse_display_round_trip() {
        let w = Word::parse("1,3,2", 3).unwrap();
        assert_eq!(w.letters(), &[1, 3, 2]);
        assert_eq!(w.to_string(), "1,3,2");
        assert_eq!(Word::parse("", 3).unwrap(), Word::empty());
        assert_eq!(Word::empty().to_string(), "");
        assert!(Word::parse("0,1", 3).is_err());
        assert!(Word::parse("4", 3).is_err());
        assert!(Word::parse("a", 3).is_err());
    }

    #[test]
    fn unit_is_left_and_right_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_group_like(&mut rng, 2, 4, 96);
        let u = TensorSeries::unit(2, 4, 96).unwrap();
        let left = ts_mul(&u, &a).unwrap();
        let right = ts_mul(&a, &u).unwrap();
        for n in 0..=4 {
            for (x, y) in a.level_slice(n).iter().zip(left.level_slice(n)) {
                assert_eq!(x, y);
            }
            for (x, y) in a.level_slice(n).iter().zip(right.level_slice(n)) {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn product_of_axis_exponentials() {
        let ex = ts_exp_segment(&[1.0, 0.0], 2, 64).unwrap();
        let ey = ts_exp_segment(&[0.0, 1.0], 2, 64).unwrap();
        let p = ts_mul(&ex, &ey).unwrap();
        assert!(p.is_group_like());
        let c = |s: &str| p.coeff_f64(&Word::parse(s, 2).unwrap()).unwrap();
        assert_eq!(c(""), 1.0);
        assert_eq!(c("1"), 1.0);
        assert_eq!(c("2"), 1.0);
        assert_eq!(c("1,2"), 1.0);
        assert_eq!(c("2,1"), 0.0);
        assert_eq!(c("1,1"), 0.5);
        assert_eq!(c("2,2"), 0.5);
    }

    #[test]
    fn product_truncates_to_min_level_and_max_precision() {
        let a = ts_exp_segment(&[1.0, 0.5], 3, 64).unwrap();
        let b = ts_exp_segment(&[0.2, -0.4], 5, 160).unwrap();
        let p = ts_mul(&a, &b).unwrap();
        assert_eq!(p.level(), 3);
        assert_eq!(p.precision(), 160);
    }

    #[test]
    fn product_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let a = random_group_like(&mut rng, 2, 5, 128);
            let b = random_group_like(&mut rng, 2, 5, 128);
            let c = random_group_like(&mut rng, 2, 5, 128);
            let ab_c = ts_mul(&ts_mul(&a, &b).unwrap(), &c).unwrap();
            let a_bc = ts_mul(&a, &ts_mul(&b, &c).unwrap()).unwrap();
            assert!(max_abs_diff(&ab_c, &a_bc) < 1e-12);
        }
    }

    #[test]
    fn inverse_recovers_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [2usize, 3] {
            let a = random_group_like(&mut rng, d, 4, 128);
            let inv = ts_inverse(&a).unwrap();
            assert!(inv.is_group_like());
            let u = TensorSeries::unit(d, 4, 128).unwrap();
            let p = ts_mul(&a, &inv).unwrap();
            let q = ts_mul(&inv, &a).unwrap();
            assert!(max_abs_diff(&p, &u) < 1e-12);
            assert!(max_abs_diff(&q, &u) < 1e-12);
        }
    }

    #[test]
    fn inverse_requires_nonzero_constant_term() {
        let z = TensorSeries::zero(2, 3, 64).unwrap();
        assert!(matches!(ts_inverse(&z), Err(TensorError::NotInvertible)));
    }

    #[test]
    fn exponentials_form_one_parameter_group() {
        let v = [0.3, -0.7, 0.2];
        let (s, t) = (0.6, 1.3);
        let vs: Vec<f64> = v.iter().map(|x| x * s).collect();
        let vt: Vec<f64> = v.iter().map(|x| x * t).collect();
        let vst: Vec<f64> = v.iter().map(|x| x * (s + t)).collect();
        let prod = ts_mul(
            &ts_exp_segment(&vs, 5, 128).unwrap(),
            &ts_exp_segment(&vt, 5, 128).unwrap(),
        )
        .unwrap();
        let direct = ts_exp_segment(&vst, 5, 128).unwrap();
        assert!(max_abs_diff(&prod, &direct) < 1e-12);
    }

    #[test]
    fn dilation_is_an_automorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..4 {
            let a = random_group_like(&mut rng, 2, 4, 128);
            let b = random_group_like(&mut rng, 2, 4, 128);
            let lam = rng.gen_range(0.2..2.0);
            let lhs = ts_scale(&ts_mul(&a, &b).unwrap(), lam);
            let rhs = ts_mul(&ts_scale(&a, lam), &ts_scale(&b, lam)).unwrap();
            assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
        }
    }

    #[test]
    fn dilation_matches_scaled_segment_and_zero_gives_unit() {
        let v = [0.4, 0.9];
        let lam = 1.7;
        let scaled = ts_scale(&ts_exp_segment(&v, 4, 128).unwrap(), lam);
        let direct = ts_exp_segment(&[v[0] * lam, v[1] * lam], 4, 128).unwrap();
        assert!(max_abs_diff(&scaled, &direct) < 1e-13);

        let z = ts_scale(&ts_exp_segment(&v, 4, 128).unwrap(), 0.0);
        let u = TensorSeries::unit(2, 4, 128).unwrap();
        assert_eq!(max_abs_diff(&z, &u), 0.0);
    }

    #[test]
    fn zero_increment_exponential_is_unit() {
        let z = ts_exp_segment(&[0.0, 0.0], 3, 64).unwrap();
        let u = TensorSeries::unit(2, 3, 64).unwrap();
        assert_eq!(max_abs_diff(&z, &u), 0.0);
    }

    #[test]
    fn level_masses_match_exponential_closed_form() {
        let v = [0.3, 0.5];
        let s = ts_exp_segment(&v, 6, 128).unwrap();
        let l1: f64 = v.iter().map(|x| x.abs()).sum();
        let mut expect = 1.0;
        for (n, m) in s.level_masses().iter().enumerate() {
            if n > 0 {
                expect *= l1 / n as f64;
            }
            assert!((m - expect).abs() <= 1e-12 * expect.max(1.0), "level {n}");
        }
    }

    #[test]
    fn storage_cap_is_enforced() {
        // 2^31 - 1 coefficients wanted, default cap is 2^27
        let err = TensorSeries::zero(2, 30, 64).unwrap_err();
        match err {
            TensorError::LevelCapExceeded { needed, cap, .. } => {
                assert_eq!(needed, (1u128 << 31) - 1);
                assert_eq!(cap, DEFAULT_MAX_COEFFS);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn coeff_rejects_words_beyond_level_or_alphabet() {
        let s = TensorSeries::unit(2, 2, 64).unwrap();
        assert!(s.coeff(&Word::parse("1,2,1", 2).unwrap()).is_err());
        let w = Word::new(vec![3], 3).unwrap();
        assert!(s.coeff(&w).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_group_like(&mut rng, 2, 4, 150);
        let text = s.to_json_string();
        let t = TensorSeries::from_json_str(&text).unwrap();
        assert_eq!(t.dimension(), 2);
        assert_eq!(t.level(), 4);
        assert_eq!(t.precision(), 150);
        for n in 0..=4 {
            for (x, y) in s.level_slice(n).iter().zip(t.level_slice(n)) {
                assert_eq!(x, y, "level {n} mismatch");
                assert_eq!(x.prec(), y.prec());
            }
        }
    }

    #[test]
    fn json_accepts_numbers_and_defaults_precision() {
        let text = r#"{"dimension": 2, "level": 2, "coeffs": {"": 1, "1": 0.5, "1,2": "0.25"}}"#;
        let s = TensorSeries::from_json_str(text).unwrap();
        assert_eq!(s.precision(), 128);
        assert_eq!(s.coeff_f64(&Word::parse("1", 2).unwrap()).unwrap(), 0.5);
        assert_eq!(s.coeff_f64(&Word::parse("1,2", 2).unwrap()).unwrap(), 0.25);
        assert_eq!(s.coeff_f64(&Word::parse("2,1", 2).unwrap()).unwrap(), 0.0);
        assert!(!s.is_group_like());

        for bad in [
            r#"{"level": 2, "coeffs": {}}"#,
            r#"{"dimension": 2, "coeffs": {}}"#,
            r#"{"dimension": 2, "level": 1, "coeffs": {"1,2": 1}}"#,
            r#"{"dimension": 2, "level": 1, "coeffs": {"3": 1}}"#,
            r#"{"dimension": 2, "level": 1, "coeffs": {"1": [1]}}"#,
        ] {
            assert!(TensorSeries::from_json_str(bad).is_err(), "{bad}");
        }
    }
}
