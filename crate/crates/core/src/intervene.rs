//! Intervention experiments: steering context embeddings along `λ̄_C`.

use nalgebra::DVector;

use crate::concepts::ConceptDirection;
use crate::error::{Error, Result};
use crate::model_io::{ConceptQuadruple, EmbeddingSet, UnembeddingMatrix};
use crate::probe::pair_logit;

/// Largest α on the default grid.
pub const DEFAULT_ALPHA_MAX: f64 = 0.4;
pub const DEFAULT_ALPHA_STEP: f64 = 0.05;
pub const DEFAULT_TOP_K: usize = 5;

/// `0, 0.05, …, 0.4`.
pub fn default_alpha_grid() -> Vec<f64> {
    alpha_grid(0.0, DEFAULT_ALPHA_STEP, DEFAULT_ALPHA_MAX)
}

/// Inclusive grid `start, start + step, …` up to `stop`, computed as
/// `start + i·step` so endpoints do not drift.
pub fn alpha_grid(start: f64, step: f64, stop: f64) -> Vec<f64> {
    assert!(step > 0.0, "alpha step must be positive");
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// Log-odds series for one quadruple under one steering direction.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryReport {
    pub alphas: Vec<f64>,
    /// Per context: `log Pr(Y(1,0)) / Pr(Y(0,0))` along the grid.
    pub target_logits: Vec<Vec<f64>>,
    /// Per context: `log Pr(Y(0,1)) / Pr(Y(0,0))` along the grid.
    pub offtarget_logits: Vec<Vec<f64>>,
    pub concept_used: String,
}

/// `λ + α·λ̄_C`.
pub fn intervene(
    lambda: &DVector<f64>,
    dir: &ConceptDirection,
    alpha: f64,
) -> Result<DVector<f64>> {
    Error::check_dim(dir.dim(), lambda.len())?;
    Ok(lambda + &dir.lambda_bar * alpha)
}

fn check_grid(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::InvalidAlphaGrid("grid is empty".into()));
    }
    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidAlphaGrid("grid has non-finite values".into()));
    }
    if alphas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidAlphaGrid(
            "grid must be strictly ascending".into(),
        ));
    }
    Ok(())
}

pub fn logit_trajectory(
    contexts: &EmbeddingSet,
    quad: &ConceptQuadruple,
    dir: &ConceptDirection,
    gamma: &UnembeddingMatrix,
    alphas: &[f64],
) -> Result<TrajectoryReport> {
    check_grid(alphas)?;
    quad.validate(gamma.vocab_size())?;
    Error::check_dim(gamma.dim(), dir.dim())?;
    Error::check_dim(gamma.dim(), contexts.dim())?;

    let mut target_logits = Vec::with_capacity(contexts.len());
    let mut offtarget_logits = Vec::with_capacity(contexts.len());
    for lambda in contexts.rows() {
        let mut target = Vec::with_capacity(alphas.len());
        let mut offtarget = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            let steered = intervene(&lambda, dir, alpha)?;
            target.push(pair_logit(&steered, gamma, quad.y10(), quad.y00())?);
            offtarget.push(pair_logit(&steered, gamma, quad.y01(), quad.y00())?);
        }
        target_logits.push(target);
        offtarget_logits.push(offtarget);
    }
    Ok(TrajectoryReport {
        alphas: alphas.to_vec(),
        target_logits,
        offtarget_logits,
        concept_used: dir.name.clone(),
    })
}

/// Indices of the `k` largest values, descending; ties go to the lower index.
pub fn top_k_indices(values: &DVector<f64>, k: usize) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.into_iter().map(|i| (i, values[i])).collect()
}

/// Top-`k` tokens by raw logit `(λ + α·λ̄)ᵀγ(y)` over the full vocabulary.
pub fn topk_after_intervention(
    gamma: &UnembeddingMatrix,
    lambda: &DVector<f64>,
    dir: &ConceptDirection,
    alpha: f64,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    if k == 0 || k > gamma.vocab_size() {
        return Err(Error::KOutOfRange {
            k,
            vocab_size: gamma.vocab_size(),
        });
    }
    let steered = intervene(lambda, dir, alpha)?;
    let logits = gamma.logits(&steered)?;
    Ok(top_k_indices(&logits, k))
}
