//! Measurement experiments: concept directions used as linear probes.
//!
//! For a pair `(y0, y1)` the conditional log-odds
//! `log Pr(y1 | {y0, y1}, λ) − log Pr(y0 | {y0, y1}, λ)` equals
//! `λᵀ(γ(y1) − γ(y0))` because the softmax normalizer cancels.

use nalgebra::DVector;

use crate::concepts::ConceptDirection;
use crate::error::{Error, Result};
use crate::metric::{cip, MetricContext};
use crate::model_io::{EmbeddingSet, UnembeddingMatrix};

/// Scores of two labeled context groups on one direction, with their AUC.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub direction_name: String,
    pub scores_a: Vec<f64>,
    pub scores_b: Vec<f64>,
    /// Probability that a group-b score beats a group-a score, ties counted half.
    pub auc: f64,
}

/// `λᵀ(γ(id1) − γ(id0))`.
pub fn pair_logit(
    lambda: &DVector<f64>,
    gamma: &UnembeddingMatrix,
    id1: usize,
    id0: usize,
) -> Result<f64> {
    Error::check_dim(gamma.dim(), lambda.len())?;
    Ok(lambda.dot(&gamma.diff(id1, id0)?))
}

/// `γ̄ᵀλ`.
pub fn probe_score(dir: &ConceptDirection, lambda: &DVector<f64>) -> Result<f64> {
    Error::check_dim(dir.dim(), lambda.len())?;
    Ok(dir.gamma_bar.dot(lambda))
}

/// Coefficient of a pair difference on the canonical direction,
/// `⟨γ(id1) − γ(id0), γ̄⟩_C`.
pub fn alpha_hat(
    gamma: &UnembeddingMatrix,
    id1: usize,
    id0: usize,
    dir: &ConceptDirection,
    mc: &MetricContext,
) -> Result<f64> {
    cip(&gamma.diff(id1, id0)?, &dir.gamma_bar, mc)
}

/// Mann-Whitney AUC with `b` as the positive class.
pub fn rank_auc(scores_a: &[f64], scores_b: &[f64]) -> f64 {
    let mut tagged: Vec<(f64, bool)> = scores_a
        .iter()
        .map(|&s| (s, false))
        .chain(scores_b.iter().map(|&s| (s, true)))
        .collect();
    tagged.sort_by(|x, y| x.0.total_cmp(&y.0));

    // midranks over tie blocks
    let mut rank_sum_b = 0.0;
    let mut i = 0;
    while i < tagged.len() {
        let mut j = i;
        while j + 1 < tagged.len() && tagged[j + 1].0 == tagged[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_b += midrank * tagged[i..=j].iter().filter(|t| t.1).count() as f64;
        i = j + 1;
    }
    let (na, nb) = (scores_a.len() as f64, scores_b.len() as f64);
    (rank_sum_b - nb * (nb + 1.0) / 2.0) / (na * nb)
}

pub fn probe_report(
    dir: &ConceptDirection,
    contexts_a: &EmbeddingSet,
    contexts_b: &EmbeddingSet,
) -> Result<ProbeReport> {
    if contexts_a.is_empty() {
        return Err(Error::EmptyGroup("a".into()));
    }
    if contexts_b.is_empty() {
        return Err(Error::EmptyGroup("b".into()));
    }
    Error::check_dim(dir.dim(), contexts_a.dim())?;
    Error::check_dim(dir.dim(), contexts_b.dim())?;
    let scores_a: Vec<f64> = (contexts_a.matrix() * &dir.gamma_bar)
        .iter()
        .copied()
        .collect();
    let scores_b: Vec<f64> = (contexts_b.matrix() * &dir.gamma_bar)
        .iter()
        .copied()
        .collect();
    let auc = rank_auc(&scores_a, &scores_b);
    Ok(ProbeReport {
        direction_name: dir.name.clone(),
        scores_a,
        scores_b,
        auc,
    })
}
