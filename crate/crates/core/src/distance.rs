//! Sentence distances and breakpoint thresholds.
//!
//! The joint distance between sentences `a` and `b` of an `n`-sentence
//! document is `lambda * |a - b| / n + (1 - lambda) * (1 - max(cos, 0))`.
//! Negative similarity is clipped, so every distance here lies in `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDistanceParams {
    /// Weight of the positional term.
    pub lambda: f64,
    /// Sentence count of the document.
    pub n: usize,
}

impl JointDistanceParams {
    pub fn new(lambda: f64, n: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Parameter(format!("lambda must be in [0, 1], got {lambda}")));
        }
        if n < 1 {
            return Err(Error::Parameter("sentence count must be >= 1".into()));
        }
        Ok(Self { lambda, n })
    }
}

/// Cosine similarity of two vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::Contract(format!(
            "dimension mismatch: {} vs {}",
            u.dim(),
            v.dim()
        )));
    }
    let denom = u.norm() * v.norm();
    if denom == 0.0 {
        return Err(Error::Contract("zero-length vector".into()));
    }
    Ok((u.dot(v) / denom).clamp(-1.0, 1.0))
}

pub fn cosine_clipped_distance(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    Ok(1.0 - cosine_similarity(u, v)?.max(0.0))
}

pub fn positional_distance(a: usize, b: usize, n: usize) -> Result<f64> {
    if a >= n || b >= n {
        return Err(Error::Contract(format!(
            "sentence index out of range: ({a}, {b}) with n = {n}"
        )));
    }
    Ok(a.abs_diff(b) as f64 / n as f64)
}

pub fn joint_distance(
    a: usize,
    b: usize,
    u: &EmbeddingVector,
    v: &EmbeddingVector,
    params: JointDistanceParams,
) -> Result<f64> {
    let pos = positional_distance(a, b, params.n)?;
    let cos = cosine_clipped_distance(u, v)?;
    Ok(params.lambda * pos + (1.0 - params.lambda) * cos)
}

/// Dense symmetric matrix of joint distances between all sentence pairs.
pub fn joint_distance_matrix(embeddings: &[EmbeddingVector], lambda: f64) -> Result<Vec<Vec<f64>>> {
    let n = embeddings.len();
    let params = JointDistanceParams::new(lambda, n.max(1))?;
    let mut m = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            let d = joint_distance(a, b, &embeddings[a], &embeddings[b], params)?;
            m[a][b] = d;
            m[b][a] = d;
        }
    }
    Ok(m)
}

/// Clipped cosine distance between each pair of neighbouring sentences.
pub fn consecutive_distances(embeddings: &[EmbeddingVector]) -> Result<Vec<f64>> {
    if embeddings.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 sentences for consecutive distances, got {}",
            embeddings.len()
        )));
    }
    embeddings
        .windows(2)
        .map(|w| cosine_clipped_distance(&w[0], &w[1]))
        .collect()
}

/// Central differences inside, one-sided first differences at both ends.
pub fn gradient(values: &[f64]) -> Result<Vec<f64>> {
    let len = values.len();
    if len < 2 {
        return Err(Error::Degenerate(format!(
            "gradient needs at least 2 values, got {len}"
        )));
    }
    let mut out = Vec::with_capacity(len);
    out.push(values[1] - values[0]);
    for i in 1..len - 1 {
        out.push((values[i + 1] - values[i - 1]) / 2.0);
    }
    out.push(values[len - 1] - values[len - 2]);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    Percentile,
    StdDev,
    Interquartile,
    GradientPercentile,
    AbsoluteDistance,
    AbsoluteGradient,
}

impl ThresholdKind {
    pub const ALL: [ThresholdKind; 6] = [
        ThresholdKind::Percentile,
        ThresholdKind::StdDev,
        ThresholdKind::Interquartile,
        ThresholdKind::GradientPercentile,
        ThresholdKind::AbsoluteDistance,
        ThresholdKind::AbsoluteGradient,
    ];

    /// Whether the threshold applies to the gradient of the distance array.
    pub fn on_gradient(self) -> bool {
        matches!(self, ThresholdKind::GradientPercentile | ThresholdKind::AbsoluteGradient)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdKind::Percentile => "percentile",
            ThresholdKind::StdDev => "std_dev",
            ThresholdKind::Interquartile => "interquartile",
            ThresholdKind::GradientPercentile => "gradient_percentile",
            ThresholdKind::AbsoluteDistance => "absolute_distance",
            ThresholdKind::AbsoluteGradient => "absolute_gradient",
        }
    }
}

impl fmt::Display for ThresholdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ThresholdKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ThresholdKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown threshold kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub kind: ThresholdKind,
    pub amount: f64,
}

impl ThresholdPolicy {
    pub fn new(kind: ThresholdKind, amount: f64) -> Result<Self> {
        let policy = Self { kind, amount };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            ThresholdKind::Percentile | ThresholdKind::GradientPercentile => {
                (0.0..=100.0).contains(&self.amount)
            }
            _ => self.amount >= 0.0,
        };
        if ok && self.amount.is_finite() {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "threshold amount {} out of range for {}",
                self.amount, self.kind
            )))
        }
    }
}

/// Which standard deviation the `std_dev` policy uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdMode {
    #[default]
    Population,
    Sample,
}

/// Linear-interpolation percentile (`p` in `[0, 100]`) of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Parameter("percentile of an empty array".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Parameter(format!("percentile {p} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn std_dev(values: &[f64], mode: StdMode) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    let denom = match mode {
        StdMode::Population => values.len() as f64,
        StdMode::Sample if values.len() > 1 => (values.len() - 1) as f64,
        StdMode::Sample => return 0.0,
    };
    (ss / denom).sqrt()
}

/// Threshold value for `values` under `policy`, with population std-dev.
pub fn threshold(values: &[f64], policy: ThresholdPolicy) -> Result<f64> {
    threshold_with(values, policy, StdMode::Population)
}

pub fn threshold_with(values: &[f64], policy: ThresholdPolicy, std_mode: StdMode) -> Result<f64> {
    policy.validate()?;
    let min_len = if policy.kind == ThresholdKind::GradientPercentile { 2 } else { 1 };
    if values.len() < min_len {
        return Err(Error::Parameter(format!(
            "{} threshold needs at least {min_len} values, got {}",
            policy.kind,
            values.len()
        )));
    }
    match policy.kind {
        ThresholdKind::Percentile => percentile(values, policy.amount),
        ThresholdKind::StdDev => Ok(mean(values) + policy.amount * std_dev(values, std_mode)),
        ThresholdKind::Interquartile => {
            let iqr = percentile(values, 75.0)? - percentile(values, 25.0)?;
            Ok(mean(values) + policy.amount * iqr)
        }
        ThresholdKind::GradientPercentile => percentile(&gradient(values)?, policy.amount),
        ThresholdKind::AbsoluteDistance | ThresholdKind::AbsoluteGradient => Ok(policy.amount),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::normalized(values.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn cosine_distance_cases() {
        let u = v(&[0.6, 0.8]);
        assert!(close(cosine_clipped_distance(&u, &u).unwrap(), 0.0));
        assert_eq!(cosine_clipped_distance(&u, &v(&[-0.6, -0.8])).unwrap(), 1.0);
        assert_eq!(cosine_clipped_distance(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 1.0);
        assert!(cosine_clipped_distance(&u, &v(&[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn positional_distance_cases() {
        assert!(close(positional_distance(2, 5, 10).unwrap(), 0.3));
        assert_eq!(positional_distance(4, 4, 10).unwrap(), 0.0);
        assert!(close(positional_distance(0, 9, 10).unwrap(), 0.9));
        assert!(positional_distance(0, 10, 10).is_err());
    }

    #[test]
    fn joint_distance_endpoints_and_midpoint() {
        let (u, w) = (v(&[1.0, 0.0]), v(&[0.0, 1.0]));
        let p0 = JointDistanceParams::new(0.0, 10).unwrap();
        let p1 = JointDistanceParams::new(1.0, 10).unwrap();
        assert_eq!(joint_distance(2, 5, &u, &w, p0).unwrap(), 1.0);
        assert!(close(joint_distance(2, 5, &u, &w, p1).unwrap(), 0.3));

        // cos = 0.5 gives d_cos = 0.5; with d_pos = 0.3 the midpoint is 0.4.
        let half = v(&[0.5, (0.75f32).sqrt()]);
        let p = JointDistanceParams::new(0.5, 10).unwrap();
        assert!((joint_distance(2, 5, &u, &half, p).unwrap() - 0.4).abs() < 1e-7);
        assert!(JointDistanceParams::new(1.5, 3).is_err());
    }

    #[test]
    fn consecutive_distance_arity() {
        let same = vec![v(&[1.0, 1.0]); 4];
        assert_eq!(consecutive_distances(&same).unwrap().len(), 3);
        assert!(consecutive_distances(&same).unwrap().iter().all(|&d| close(d, 0.0)));
        let alt: Vec<_> = (0..4).map(|i| if i % 2 == 0 { v(&[1.0, 0.0]) } else { v(&[0.0, 1.0]) }).collect();
        assert_eq!(consecutive_distances(&alt).unwrap(), vec![1.0, 1.0, 1.0]);
        assert!(matches!(consecutive_distances(&same[..1]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn gradient_cases() {
        // Oracle by hand: [0.3-0.1, (0.2-0.1)/2, 0.2-0.3].
        let g = gradient(&[0.1, 0.3, 0.2]).unwrap();
        let expected = [0.2, 0.05, -0.1];
        for (a, b) in g.iter().zip(expected) {
            assert!(close(*a, b), "{g:?}");
        }
        assert_eq!(gradient(&[0.4; 5]).unwrap(), vec![0.0; 5]);
        let ramp: Vec<f64> = (0..6).map(|i| 0.25 * i as f64).collect();
        assert!(gradient(&ramp).unwrap().iter().all(|&x| close(x, 0.25)));
        assert!(gradient(&[1.0]).is_err());
    }

    #[test]
    fn threshold_examples() {
        let arr = [0.1, 0.2, 0.3, 0.4, 0.5];
        let p = |amount| ThresholdPolicy::new(ThresholdKind::Percentile, amount).unwrap();
        assert!(close(threshold(&arr, p(50.0)).unwrap(), 0.3));
        assert!(close(threshold(&arr, p(90.0)).unwrap(), 0.46));
        let sd = ThresholdPolicy::new(ThresholdKind::StdDev, 1.0).unwrap();
        assert!(close(threshold(&[0.2, 0.4], sd).unwrap(), 0.4));
        let sample = threshold_with(&[0.2, 0.4], sd, StdMode::Sample).unwrap();
        assert!(close(sample, 0.3 + 0.02f64.sqrt()));
        let abs = ThresholdPolicy::new(ThresholdKind::AbsoluteGradient, 0.15).unwrap();
        assert_eq!(threshold(&arr, abs).unwrap(), 0.15);
    }

    #[test]
    fn threshold_parameter_errors() {
        assert!(ThresholdPolicy::new(ThresholdKind::Percentile, 101.0).is_err());
        assert!(ThresholdPolicy::new(ThresholdKind::StdDev, -1.0).is_err());
        let g = ThresholdPolicy::new(ThresholdKind::GradientPercentile, 50.0).unwrap();
        assert!(threshold(&[0.3], g).is_err());
        let p = ThresholdPolicy::new(ThresholdKind::Percentile, 50.0).unwrap();
        assert!(threshold(&[], p).is_err());
    }

    fn unit(dim: usize) -> impl Strategy<Value = EmbeddingVector> {
        prop::collection::vec(-1.0f32..1.0, dim)
            .prop_filter_map("zero vector", |xs| EmbeddingVector::normalized(xs).ok())
    }

    proptest! {
        #[test]
        fn distances_are_bounded_and_symmetric(
            u in unit(8), w in unit(8), lambda in 0.0f64..=1.0, n in 1usize..50,
            a_seed in 0usize..1000, b_seed in 0usize..1000,
        ) {
            let (a, b) = (a_seed % n, b_seed % n);
            let p = JointDistanceParams::new(lambda, n).unwrap();
            let d = joint_distance(a, b, &u, &w, p).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, joint_distance(b, a, &w, &u, p).unwrap());
            let c = cosine_clipped_distance(&u, &w).unwrap();
            prop_assert!((0.0..=1.0).contains(&c));
        }

        #[test]
        fn percentile_is_monotone(values in prop::collection::vec(0.0f64..1.0, 1..30), p in 0.0f64..=100.0, q in 0.0f64..=100.0) {
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(percentile(&values, lo).unwrap() <= percentile(&values, hi).unwrap());
        }

        #[test]
        fn gradient_is_linear(
            xs in prop::collection::vec(-1.0f64..1.0, 2..20),
            alpha in -3.0f64..3.0,
        ) {
            let ys: Vec<f64> = xs.iter().rev().cloned().collect();
            let combo: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| alpha * x + y).collect();
            let lhs = gradient(&combo).unwrap();
            let gx = gradient(&xs).unwrap();
            let gy = gradient(&ys).unwrap();
            for i in 0..lhs.len() {
                prop_assert!((lhs[i] - (alpha * gx[i] + gy[i])).abs() < 1e-9);
            }
        }
    }
}
