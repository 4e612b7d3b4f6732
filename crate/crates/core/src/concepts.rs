//! Concept directions estimated from counterfactual pairs.
//!
//! The raw direction is the mean pair difference
//! `γ̃_W = (1/n)·Σ[γ(y_i(1)) − γ(y_i(0))]`, normalized to unit causal norm.
//! Leave-one-out variants drop one pair at a time; projecting each held-out
//! difference on its LOO direction, next to projections of random word
//! pairs, shows whether the pairs share a common direction.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metric::{cip, riesz_map, MetricContext};
use crate::model_io::{ConceptPairSet, UnembeddingMatrix};

/// Causal norm below which a mean difference counts as null.
pub const NULL_DIRECTION_THRESHOLD: f64 = 1e-9;

/// Random word pairs drawn for the baseline by default.
pub const DEFAULT_BASELINE_SAMPLES: usize = 100_000;

/// Canonical unembedding direction of a concept and its Riesz image.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptDirection {
    pub name: String,
    /// Unit causal norm.
    pub gamma_bar: DVector<f64>,
    /// `M·gamma_bar`: the embedding-space (steering) direction.
    pub lambda_bar: DVector<f64>,
    pub n_pairs: usize,
    /// Mean pair difference before normalization.
    pub raw_mean: DVector<f64>,
}

impl ConceptDirection {
    /// Normalizes `raw_mean` to unit causal norm and fills its Riesz image.
    pub fn from_raw(
        name: impl Into<String>,
        raw_mean: DVector<f64>,
        n_pairs: usize,
        mc: &MetricContext,
    ) -> Result<Self> {
        let name = name.into();
        let norm = cip(&raw_mean, &raw_mean, mc)?.max(0.0).sqrt();
        if !(norm > NULL_DIRECTION_THRESHOLD) {
            return Err(Error::NullDirection {
                concept: name,
                norm,
            });
        }
        let gamma_bar = &raw_mean / norm;
        let lambda_bar = riesz_map(&gamma_bar, mc)?;
        Ok(Self {
            name,
            gamma_bar,
            lambda_bar,
            n_pairs,
            raw_mean,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma_bar.len()
    }
}

fn pair_diffs(gamma: &UnembeddingMatrix, pairs: &ConceptPairSet) -> Result<Vec<DVector<f64>>> {
    pairs.validate(gamma.vocab_size())?;
    pairs
        .pairs
        .iter()
        .map(|&(id0, id1)| gamma.diff(id1, id0))
        .collect()
}

fn sum(diffs: &[DVector<f64>], dim: usize) -> DVector<f64> {
    diffs.iter().fold(DVector::zeros(dim), |acc, d| acc + d)
}

/// Mean-then-normalize estimate of the canonical direction.
pub fn estimate_direction(
    gamma: &UnembeddingMatrix,
    pairs: &ConceptPairSet,
    mc: &MetricContext,
) -> Result<ConceptDirection> {
    Error::check_dim(mc.dim(), gamma.dim())?;
    let diffs = pair_diffs(gamma, pairs)?;
    let n = diffs.len();
    let mean = sum(&diffs, gamma.dim()) / n as f64;
    ConceptDirection::from_raw(pairs.name.clone(), mean, n, mc)
}

fn check_loo(pairs: &ConceptPairSet) -> Result<()> {
    if pairs.len() < 2 {
        return Err(Error::TooFewPairs {
            concept: pairs.name.clone(),
            found: pairs.len(),
            required: 2,
        });
    }
    Ok(())
}

fn loo_from_diffs(
    name: &str,
    diffs: &[DVector<f64>],
    dim: usize,
    mc: &MetricContext,
) -> Result<Vec<ConceptDirection>> {
    let n = diffs.len();
    let total = sum(diffs, dim);
    diffs
        .iter()
        .map(|d| {
            let mean = (&total - d) / (n - 1) as f64;
            ConceptDirection::from_raw(name, mean, n - 1, mc)
        })
        .collect()
}

/// Element `i` is the direction estimated without pair `i`.
pub fn loo_directions(
    gamma: &UnembeddingMatrix,
    pairs: &ConceptPairSet,
    mc: &MetricContext,
) -> Result<Vec<ConceptDirection>> {
    check_loo(pairs)?;
    Error::check_dim(mc.dim(), gamma.dim())?;
    let diffs = pair_diffs(gamma, pairs)?;
    loo_from_diffs(&pairs.name, &diffs, gamma.dim(), mc)
}

/// `⟨γ̄_{W,(−i)}, γ(y_i(1)) − γ(y_i(0))⟩_C` for every pair.
pub fn project_pairs(
    gamma: &UnembeddingMatrix,
    pairs: &ConceptPairSet,
    mc: &MetricContext,
) -> Result<Vec<f64>> {
    check_loo(pairs)?;
    Error::check_dim(mc.dim(), gamma.dim())?;
    let diffs = pair_diffs(gamma, pairs)?;
    let loo = loo_from_diffs(&pairs.name, &diffs, gamma.dim(), mc)?;
    loo.iter()
        .zip(&diffs)
        .map(|(dir, diff)| cip(&dir.gamma_bar, diff, mc))
        .collect()
}

/// Projections of `γ(a) − γ(b)` for `n_samples` uniformly drawn pairs with
/// `a ≠ b` (with replacement across draws), from a seeded ChaCha8 stream.
///
/// Uses `⟨γ̄, γ(a) − γ(b)⟩_C = λ̄ᵀγ(a) − λ̄ᵀγ(b)` so the vocabulary is scored once.
pub fn random_pair_projections(
    gamma: &UnembeddingMatrix,
    dir: &ConceptDirection,
    n_samples: usize,
    seed: u64,
    mc: &MetricContext,
) -> Result<Vec<f64>> {
    Error::check_dim(mc.dim(), gamma.dim())?;
    Error::check_dim(mc.dim(), dir.dim())?;
    let v = gamma.vocab_size();
    let scores = gamma.matrix() * &dir.lambda_bar;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_samples)
        .map(|_| {
            let a = rng.random_range(0..v);
            let mut b = rng.random_range(0..v - 1);
            if b >= a {
                b += 1;
            }
            scores[a] - scores[b]
        })
        .collect())
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty list");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
