//! A softmax model with planted concept structure.
//!
//! Latent layout: coordinates `i < k` carry concepts, the rest are word
//! noise. The vocabulary is a full factorial: `vocab_per_cell` word
//! families, each with one token for every one of the `2^k` concept-value
//! cells. Token id is `cell * vocab_per_cell + family`; bit `i` of `cell` is
//! the value of concept `i`.
//!
//! * Concept coordinate `i` of family `f` in a cell with bit `b` is
//!   `(b − ½)·δ[f, i]`. A random `expressed_fraction` of the families
//!   expresses each concept with `δ` drawn from `delta_range`; the others
//!   carry it only weakly. Counterfactual pairs are drawn from expressing
//!   families and differ by exactly `δ·e_i` in latent space when the noise
//!   is zero. Within each family the bits are balanced, so concept
//!   coordinates are exactly mean-zero and mutually uncorrelated.
//! * Non-concept coordinates are a whitened per-family vector plus
//!   `noise_sigma` times per-token noise, whitened and orthogonal to the
//!   family part. With zero noise the latent covariance is exactly
//!   diagonal; noise adds small concept/non-concept correlations.
//! * The observed model is `g(y) = A·x(y) + β` and `l(x) = A⁻ᵀ·λ(x)`, which
//!   leaves every softmax probability unchanged.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::concepts::{estimate_direction, ConceptDirection};
use crate::error::{Error, Result};
use crate::metric::{explicit_form_check, heatmap, MetricContext, MetricKind};
use crate::model_io::{
    save_concept_pairs, save_embedding_set, save_matrix, save_quadruples, save_unembeddings,
    ConceptPairSet, ConceptQuadruple, EmbeddingSet, MatrixKind, UnembeddingMatrix,
};

/// Weakly expressing families draw their gap from `[0.02, 0.1]·delta_range.0`.
const WEAK_DELTA: (f64, f64) = (0.02, 0.1);
/// Probe contexts put the concept coordinate at ±3 context-noise units.
const PROBE_SEPARATION: f64 = 3.0;
const MAX_TRANSFORM_COND: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub concepts: usize,
    pub vocab_per_cell: usize,
    /// Per-token noise on the non-concept coordinates.
    pub noise_sigma: f64,
    /// Gap between the two values of a concept in expressing families.
    pub delta_range: (f64, f64),
    /// Fraction of families that express each concept.
    pub expressed_fraction: f64,
    pub pairs_per_concept: usize,
    pub contexts_per_group: usize,
    /// Explicit `(A, β)`; drawn at random when `None`.
    pub transform: Option<(DMatrix<f64>, DVector<f64>)>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            dim: 16,
            concepts: 4,
            vocab_per_cell: 16,
            noise_sigma: 0.05,
            delta_range: (1.0, 1.5),
            expressed_fraction: 0.25,
            pairs_per_concept: 32,
            contexts_per_group: 200,
            transform: None,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn vocab_size(&self) -> usize {
        (1usize << self.concepts) * self.vocab_per_cell
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec(msg));
        if self.dim == 0 {
            return fail("dimension must be at least 1".into());
        }
        if self.concepts == 0 || self.concepts > self.dim {
            return fail(format!(
                "need 1 ≤ k ≤ d, got k = {} and d = {}",
                self.concepts, self.dim
            ));
        }
        if self.concepts > 20 {
            return fail(format!(
                "k = {} gives 2^k cells, limit is 20",
                self.concepts
            ));
        }
        if self.vocab_per_cell == 0 {
            return fail("vocab_per_cell must be at least 1".into());
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return fail(format!("noise_sigma must be ≥ 0, got {}", self.noise_sigma));
        }
        let (lo, hi) = self.delta_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return fail(format!("delta_range needs 0 < lo ≤ hi, got ({lo}, {hi})"));
        }
        if !(self.expressed_fraction > 0.0 && self.expressed_fraction <= 1.0) {
            return fail(format!(
                "expressed_fraction must be in (0, 1], got {}",
                self.expressed_fraction
            ));
        }
        if self.pairs_per_concept == 0 {
            return fail("pairs_per_concept must be at least 1".into());
        }
        let noise_dims = self.dim - self.concepts;
        if noise_dims > 0 && self.vocab_per_cell < noise_dims + 1 {
            return fail(format!(
                "need vocab_per_cell ≥ d − k + 1 = {} families to span the non-concept coordinates",
                noise_dims + 1
            ));
        }
        if let Some((a, b)) = &self.transform {
            if a.shape() != (self.dim, self.dim) || b.len() != self.dim {
                return fail("transform must be d×d with a d-vector shift".into());
            }
        }
        Ok(())
    }

    fn expressing_count(&self) -> usize {
        ((self.expressed_fraction * self.vocab_per_cell as f64).ceil() as usize)
            .clamp(1, self.vocab_per_cell)
    }
}

/// Planted directions, the true metric, and a full canonical basis.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Canonical unembedding direction per planted concept (observed coordinates).
    pub gamma_bars: Vec<DVector<f64>>,
    /// `metric_true · gamma_bar`.
    pub lambda_bars: Vec<DVector<f64>>,
    /// `A⁻ᵀ·diag(1/σ²)·A⁻¹`.
    pub metric_true: DMatrix<f64>,
    /// `A·diag(σ)`: canonical directions of every latent coordinate as columns.
    pub basis: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticModel {
    pub spec: SyntheticSpec,
    pub concept_names: Vec<String>,
    /// V×d latent unembeddings.
    pub latent: DMatrix<f64>,
    /// Population variance of each latent coordinate.
    pub latent_variances: DVector<f64>,
    /// Concept gap per (family, concept).
    pub deltas: DMatrix<f64>,
    /// Families expressing each concept, ascending.
    pub expressing: Vec<Vec<usize>>,
    pub transform: DMatrix<f64>,
    pub transform_inv: DMatrix<f64>,
    pub shift: DVector<f64>,
    /// Observed unembeddings `A·x + β`.
    pub gamma: UnembeddingMatrix,
    pub pair_sets: Vec<ConceptPairSet>,
    /// `(W, Z) = (i, i+1 mod k)` for every concept `i` (when k ≥ 2).
    pub quadruples: Vec<ConceptQuadruple>,
    /// One context per quadruple whose top-1 next token is `Y(0,0)`.
    pub king_contexts: EmbeddingSet,
    /// Probe contexts labeled `<concept>:0` / `<concept>:1`, observed coordinates.
    pub contexts: EmbeddingSet,
    /// The same contexts in latent coordinates.
    pub latent_contexts: DMatrix<f64>,
    quad_families: Vec<usize>,
}

pub fn build_synthetic(spec: SyntheticSpec) -> Result<SyntheticModel> {
    SyntheticModel::build(spec)
}

fn normal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn uniform<R: Rng>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Orthogonal `Q` from a QR factorization with signs fixed by `diag(R) > 0`.
fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

pub fn random_orthogonal<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    orthonormalize(normal_matrix(d, d, rng))
}

/// Ratio of the extreme singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

/// Hidden transform for synthetic models: `U·diag(s)·Wᵀ` with random
/// orthogonal `U`, `W` whose first column is `1/√d`, `s₁ ∈ [20, 40]` and the
/// remaining singular values in `[1, 2]`. Every latent axis shares the
/// dominant output direction, so condition number lies in `[10, 40]` and
/// Euclidean angles between mapped axes are far from 90°.
pub fn random_transform<R: Rng>(d: usize, rng: &mut R) -> (DMatrix<f64>, DVector<f64>) {
    let u = random_orthogonal(d, rng);
    let mut seed_cols = normal_matrix(d, d, rng);
    seed_cols.set_column(0, &DVector::from_element(d, 1.0));
    let w = orthonormalize(seed_cols);
    let s = DVector::from_fn(d, |i, _| {
        if i == 0 {
            uniform(20.0, 40.0, rng)
        } else {
            uniform(1.0, 2.0, rng)
        }
    });
    let a = u * DMatrix::from_diagonal(&s) * w.transpose();
    let beta = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    (a, beta)
}

/// Gaussian `(A, β)` resampled until `cond(A) ≤ max_cond`.
pub fn random_gaussian_transform<R: Rng>(
    d: usize,
    max_cond: f64,
    rng: &mut R,
) -> (DMatrix<f64>, DVector<f64>) {
    loop {
        let a = normal_matrix(d, d, rng) / (d as f64).sqrt();
        if condition_number(&a) <= max_cond {
            let beta = DVector::from_fn(d, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
            return (a, beta);
        }
    }
}

/// Applies `x ↦ A·x + β` to every row of `m`, one row at a time so equal
/// rows map to bit-identical rows.
fn affine_rows(m: &DMatrix<f64>, a: &DMatrix<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), a.nrows());
    for (r, row) in m.row_iter().enumerate() {
        let mapped = a * row.transpose() + beta;
        out.set_row(r, &mapped.transpose());
    }
    out
}

fn linear_rows(m: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    affine_rows(m, a, &DVector::zeros(a.nrows()))
}

fn column_variances(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_fn(m.ncols(), |c, _| {
        let col = m.column(c);
        let mean = col.sum() / n;
        col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
    })
}

impl SyntheticModel {
    pub fn build(spec: SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let d = spec.dim;
        let k = spec.concepts;
        let families = spec.vocab_per_cell;
        let cells = 1usize << k;
        let v = spec.vocab_size();
        let noise_dims = d - k;
        let (lo, hi) = spec.delta_range;

        let m = spec.expressing_count();
        let mut expressing = Vec::with_capacity(k);
        for _ in 0..k {
            let mut all: Vec<usize> = (0..families).collect();
            all.shuffle(&mut rng);
            let mut chosen = all[..m].to_vec();
            chosen.sort_unstable();
            expressing.push(chosen);
        }
        let deltas = DMatrix::from_fn(families, k, |f, i| {
            if expressing[i].binary_search(&f).is_ok() {
                uniform(lo, hi, &mut rng)
            } else {
                uniform(WEAK_DELTA.0 * lo, WEAK_DELTA.1 * lo, &mut rng)
            }
        });

        let mut latent = DMatrix::zeros(v, d);
        for cell in 0..cells {
            for f in 0..families {
                let id = cell * families + f;
                for i in 0..k {
                    let bit = ((cell >> i) & 1) as f64;
                    latent[(id, i)] = (bit - 0.5) * deltas[(f, i)];
                }
            }
        }

        if noise_dims > 0 {
            let family_part = whiten_rows(&normal_matrix(families, noise_dims, &mut rng))?;
            let mut block = DMatrix::zeros(v, noise_dims);
            for cell in 0..cells {
                for f in 0..families {
                    block.set_row(cell * families + f, &family_part.row(f));
                }
            }
            if spec.noise_sigma > 0.0 {
                // token noise orthogonal to the family columns keeps the
                // non-concept block diagonal; it still correlates weakly
                // with the concept coordinates
                let raw = normal_matrix(v, noise_dims, &mut rng);
                let coef = (block.transpose() * &block).try_inverse().ok_or_else(|| {
                    Error::InvalidSpec("family coordinates are degenerate".into())
                })? * block.transpose()
                    * &raw;
                let noise = whiten_rows(&(raw - &block * coef))?;
                block += noise * spec.noise_sigma;
            }
            let scales = DVector::from_fn(noise_dims, |_, _| uniform(0.5, 1.5, &mut rng));
            for mut row in block.row_iter_mut() {
                row.component_mul_assign(&scales.transpose());
            }
            latent.columns_mut(k, noise_dims).copy_from(&block);
        }
        let latent_variances = column_variances(&latent);

        let (transform, shift) = match &spec.transform {
            Some((a, b)) => (a.clone(), b.clone()),
            None => loop {
                let (a, b) = random_transform(d, &mut rng);
                if condition_number(&a) <= MAX_TRANSFORM_COND {
                    break (a, b);
                }
            },
        };
        let transform_inv = transform
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidSpec("transform is singular".into()))?;
        let gamma = UnembeddingMatrix::new(affine_rows(&latent, &transform, &shift))?;

        let concept_names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        let mut pair_sets = Vec::with_capacity(k);
        for i in 0..k {
            let mut candidates = Vec::new();
            for &f in &expressing[i] {
                for cell in 0..cells {
                    if cell & (1 << i) == 0 {
                        candidates.push((cell * families + f, (cell | (1 << i)) * families + f));
                    }
                }
            }
            candidates.shuffle(&mut rng);
            candidates.truncate(spec.pairs_per_concept);
            pair_sets.push(ConceptPairSet::new(concept_names[i].clone(), candidates)?);
        }

        // probe contexts: concept coordinate at ±3τ, others N(0, τ²), τ = 1/σ
        let per_group = spec.contexts_per_group;
        let tau = latent_variances.map(|var| 1.0 / var.sqrt());
        let mut latent_contexts = DMatrix::zeros(2 * k * per_group, d);
        let mut labels = Vec::with_capacity(2 * k * per_group);
        let mut row = 0;
        for i in 0..k {
            for value in 0..2 {
                let sign = if value == 0 { -1.0 } else { 1.0 };
                for _ in 0..per_group {
                    for c in 0..d {
                        latent_contexts[(row, c)] = tau[c] * rng.sample::<f64, _>(StandardNormal);
                    }
                    latent_contexts[(row, i)] = sign * PROBE_SEPARATION * tau[i];
                    labels.push(format!("{}:{value}", concept_names[i]));
                    row += 1;
                }
            }
        }
        let dual = transform_inv.transpose();
        let contexts = EmbeddingSet::new(linear_rows(&latent_contexts, &dual), Some(labels))?;

        let mut model = Self {
            spec,
            concept_names,
            latent,
            latent_variances,
            deltas,
            expressing,
            transform,
            transform_inv,
            shift,
            gamma,
            pair_sets,
            quadruples: Vec::new(),
            king_contexts: EmbeddingSet::new(DMatrix::zeros(0, d), Some(Vec::new()))?,
            contexts,
            latent_contexts,
            quad_families: Vec::new(),
        };
        if k >= 2 {
            model.build_quadruples()?;
        }
        Ok(model)
    }

    pub fn vocab_size(&self) -> usize {
        self.gamma.vocab_size()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn concepts(&self) -> usize {
        self.spec.concepts
    }

    pub fn token_id(&self, cell: usize, family: usize) -> usize {
        cell * self.spec.vocab_per_cell + family
    }

    /// Latent non-concept part shared by a family (exact when noise is zero).
    fn family_signature(&self, family: usize) -> DVector<f64> {
        let k = self.concepts();
        self.latent
            .row(self.token_id(0, family))
            .columns(k, self.dim() - k)
            .transpose()
    }

    /// Smallest gap by which `family`'s own signature direction separates it
    /// from every other family.
    fn exposure_margin(&self, family: usize) -> f64 {
        let own = self.family_signature(family);
        let unit = &own / own.norm();
        let own_score = unit.dot(&own);
        (0..self.spec.vocab_per_cell)
            .filter(|&f| f != family)
            .map(|f| own_score - unit.dot(&self.family_signature(f)))
            .fold(f64::INFINITY, f64::min)
    }

    fn quad_family(&self, w: usize, z: usize) -> usize {
        let both: Vec<usize> = self.expressing[w]
            .iter()
            .copied()
            .filter(|f| self.expressing[z].binary_search(f).is_ok())
            .collect();
        let candidates = if both.is_empty() {
            self.expressing[w].clone()
        } else {
            both
        };
        if self.dim() == self.concepts() {
            return candidates[0];
        }
        candidates
            .into_iter()
            .map(|f| (f, self.exposure_margin(f)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(f, _)| f)
            .unwrap()
    }

    fn build_quadruples(&mut self) -> Result<()> {
        let k = self.concepts();
        let mut quads = Vec::with_capacity(k);
        let mut families = Vec::with_capacity(k);
        let mut contexts = Vec::with_capacity(k);
        let mut labels = Vec::with_capacity(k);
        for w in 0..k {
            let z = (w + 1) % k;
            let f = self.quad_family(w, z);
            let ids = [
                self.token_id(0, f),
                self.token_id(1 << z, f),
                self.token_id(1 << w, f),
                self.token_id((1 << w) | (1 << z), f),
            ];
            let quad = ConceptQuadruple::new(
                self.concept_names[w].clone(),
                self.concept_names[z].clone(),
                ids,
            )?;
            families.push(f);
            labels.push(quad.to_string());
            contexts.push(self.king_context_for(w, f)?);
            quads.push(quad);
        }
        self.quadruples = quads;
        self.quad_families = families;
        self.king_contexts = EmbeddingSet::from_rows(&contexts, self.dim(), Some(labels))?;
        Ok(())
    }

    /// Observed context whose top-1 next token is `Y(0,0)` of the family, and
    /// where steering by `0.4·λ̄_W` puts `Y(1,0)` on top and pushes `Y(0,0)`
    /// below every `W = 1` token of the family. Built from the planted
    /// quantities; exact when the noise is zero.
    fn king_context_for(&self, w: usize, family: usize) -> Result<DVector<f64>> {
        let k = self.concepts();
        let d = self.dim();
        let alpha_max = crate::intervene::DEFAULT_ALPHA_MAX;
        let (lo, _) = self.spec.delta_range;
        let sigma_w = self.latent_variances[w].sqrt();

        // logit gain of a W-flip inside the family at α = alpha_max
        let gain = alpha_max * self.deltas[(family, w)] / sigma_w;
        let mut lambda = DVector::zeros(d);
        for i in 0..k {
            let gap = if i == w {
                gain / 2.0
            } else {
                gain / (4.0 * (k - 1) as f64)
            };
            lambda[i] = -gap / self.deltas[(family, i)].max(lo);
        }

        if d > k {
            let margin = self.exposure_margin(family);
            if !(margin > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "family {family} is not linearly exposed; cannot build a context for concept {w}"
                )));
            }
            let concept_range: f64 = (0..k)
                .map(|i| {
                    let max_delta = self.deltas.column(i).max();
                    lambda[i].abs() * max_delta / 2.0
                })
                .sum();
            let steer_range = alpha_max * self.deltas.column(w).max() / (2.0 * sigma_w);
            let strength = (2.0 * concept_range + 2.0 * steer_range + 1.0) / margin;
            let signature = self.family_signature(family);
            let unit = &signature / signature.norm();
            lambda.rows_mut(k, d - k).copy_from(&(unit * strength));
        }
        Ok(self.transform_inv.transpose() * lambda)
    }

    /// Family backing quadruple `index`.
    pub fn quadruple_family(&self, index: usize) -> usize {
        self.quad_families[index]
    }

    /// Pairs flipping every concept in `bits` together, drawn from families
    /// that express `bits[0]`. Two concepts sharing a latent coordinate are
    /// not causally separable; this builds such constructs on demand.
    pub fn subset_pairs(
        &self,
        name: impl Into<String>,
        bits: &[usize],
        n: usize,
        seed: u64,
    ) -> Result<ConceptPairSet> {
        let k = self.concepts();
        if bits.is_empty() || bits.iter().any(|&b| b >= k) {
            return Err(Error::InvalidSpec(format!(
                "concept subset {bits:?} outside 0..{k}"
            )));
        }
        let mask = bits.iter().fold(0usize, |m, &b| m | (1 << b));
        let mut candidates = Vec::new();
        for &f in &self.expressing[bits[0]] {
            for cell in 0..(1usize << k) {
                if cell & mask == 0 {
                    candidates.push((self.token_id(cell, f), self.token_id(cell | mask, f)));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        candidates.shuffle(&mut rng);
        candidates.truncate(n.max(1));
        ConceptPairSet::new(name, candidates)
    }

    /// Probe contexts for concept `i`: (value 0, value 1).
    pub fn probe_groups(&self, i: usize) -> Result<(EmbeddingSet, EmbeddingSet)> {
        let name = &self.concept_names[i];
        Ok((
            self.contexts.select_label(&format!("{name}:0"))?,
            self.contexts.select_label(&format!("{name}:1"))?,
        ))
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let sigma = self.latent_variances.map(f64::sqrt);
        let basis = &self.transform * DMatrix::from_diagonal(&sigma);
        let inv_t = self.transform_inv.transpose();
        let metric_true = &inv_t
            * DMatrix::from_diagonal(&self.latent_variances.map(|v| 1.0 / v))
            * &self.transform_inv;
        let gamma_bars = (0..self.concepts())
            .map(|i| basis.column(i).into_owned())
            .collect();
        let lambda_bars = (0..self.concepts())
            .map(|i| inv_t.column(i) / sigma[i])
            .collect();
        GroundTruth {
            gamma_bars,
            lambda_bars,
            metric_true,
            basis,
        }
    }

    /// The same model seen through one more softmax-preserving transform:
    /// `g ← A₀·g + β₀`, `l ← A₀⁻ᵀ·l`.
    pub fn reparameterize(&self, a0: &DMatrix<f64>, beta0: &DVector<f64>) -> Result<Self> {
        let d = self.dim();
        if a0.shape() != (d, d) || beta0.len() != d {
            return Err(Error::DimMismatch {
                expected: d,
                found: beta0.len(),
            });
        }
        let a0_inv = a0
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidSpec("reparameterization is singular".into()))?;
        let dual = a0_inv.transpose();
        let mut out = self.clone();
        out.gamma = UnembeddingMatrix::new(affine_rows(self.gamma.matrix(), a0, beta0))?;
        out.contexts = EmbeddingSet::new(
            linear_rows(self.contexts.matrix(), &dual),
            self.contexts.labels().map(<[String]>::to_vec),
        )?;
        out.king_contexts = EmbeddingSet::new(
            linear_rows(self.king_contexts.matrix(), &dual),
            self.king_contexts.labels().map(<[String]>::to_vec),
        )?;
        out.transform = a0 * &self.transform;
        out.transform_inv = &self.transform_inv * &a0_inv;
        out.shift = a0 * &self.shift + beta0;
        out.spec.transform = Some((out.transform.clone(), out.shift.clone()));
        Ok(out)
    }

    /// Writes the observed model in model_io formats:
    /// `unembeddings.cgt`, `pairs.txt`, `quads.txt`, `contexts.cgt` +
    /// `contexts.labels`, `king_contexts.cgt` + `king_contexts.labels`,
    /// and the planted directions as `truth_directions.cgt`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        save_unembeddings(dir.join("unembeddings.cgt"), &self.gamma)?;
        save_concept_pairs(dir.join("pairs.txt"), &self.pair_sets)?;
        save_quadruples(dir.join("quads.txt"), &self.quadruples)?;
        save_embedding_set(
            dir.join("contexts.cgt"),
            Some(&dir.join("contexts.labels")),
            &self.contexts,
        )?;
        save_embedding_set(
            dir.join("king_contexts.cgt"),
            Some(&dir.join("king_contexts.labels")),
            &self.king_contexts,
        )?;
        let truth = self.ground_truth();
        let rows = DMatrix::from_fn(self.concepts(), self.dim(), |r, c| truth.gamma_bars[r][c]);
        save_matrix(
            dir.join("truth_directions.cgt"),
            MatrixKind::Unembedding,
            &rows,
        )
    }
}

/// Centers the rows of `m` and maps them to identity population
/// covariance. Rows are mapped independently.
fn whiten_rows(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows() as f64;
    let mean = m.row_mean();
    let mut centered = m.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.transpose() * &centered / n;
    let eigen = SymmetricEigen::new(cov);
    let max = eigen.eigenvalues.max();
    let min = eigen.eigenvalues.min();
    if !(min > 1e-10 * max) {
        return Err(Error::InvalidSpec(
            "non-concept coordinates are rank deficient; raise vocab_per_cell".into(),
        ));
    }
    let q = &eigen.eigenvectors;
    let inv_sqrt =
        q * DMatrix::from_diagonal(&eigen.eigenvalues.map(|l| 1.0 / l.sqrt())) * q.transpose();
    Ok(linear_rows(&centered, &inv_sqrt))
}

/// Pearson correlation of `λ̄_aᵀγ(y)` and `λ̄_bᵀγ(y)` over the vocabulary.
pub fn uncorrelatedness_check(
    gamma: &UnembeddingMatrix,
    lambda_a: &DVector<f64>,
    lambda_b: &DVector<f64>,
) -> Result<f64> {
    if gamma.vocab_size() < 3 {
        return Err(Error::DegenerateVocab {
            required: 3,
            found: gamma.vocab_size(),
        });
    }
    let a = gamma.logits(lambda_a)?;
    let b = gamma.logits(lambda_b)?;
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    let scale = a.amax().max(b.amax()).max(f64::MIN_POSITIVE);
    let tiny = n * (scale * 1e-12).powi(2);
    if saa <= tiny || sbb <= tiny {
        return Err(Error::ZeroVariance);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Recovery of the planted structure by the estimation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub concept_names: Vec<String>,
    /// Causal cosine of each estimated `γ̄` with the planted one.
    pub dir_cos: Vec<f64>,
    /// Dual-metric cosine of each estimated `λ̄` with the planted one.
    pub riesz_cos: Vec<f64>,
    pub heatmap_offdiag_max: f64,
    /// Median off-diagonal of the Euclidean heatmap (informative: it is
    /// not invariant under reparameterization).
    pub euclidean_offdiag_median: f64,
    pub explicit_form_offdiag_rel: f64,
    pub explicit_form_m_residual: f64,
    pub uncorrelatedness_max: f64,
}

/// Pass thresholds for [`VerifyReport::checks`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyThresholds {
    pub min_cos: f64,
    pub max_heatmap_offdiag: f64,
    pub min_euclidean_median: f64,
    pub max_explicit_form_offdiag: f64,
    pub max_explicit_form_residual: f64,
    pub max_uncorrelated: f64,
}

impl VerifyThresholds {
    /// Noisy or ridge-regularized runs.
    pub fn approximate() -> Self {
        Self {
            min_cos: 0.99,
            max_heatmap_offdiag: 0.05,
            min_euclidean_median: 0.2,
            max_explicit_form_offdiag: 0.05,
            max_explicit_form_residual: 0.05,
            max_uncorrelated: 0.05,
        }
    }

    /// Noise 0 and ridge 0: the construction satisfies everything exactly.
    pub fn exact() -> Self {
        Self {
            min_cos: 1.0 - 1e-8,
            max_heatmap_offdiag: 1e-6,
            min_euclidean_median: 0.2,
            max_explicit_form_offdiag: 1e-6,
            max_explicit_form_residual: 1e-6,
            max_uncorrelated: 0.05,
        }
    }

    pub fn for_run(noise_sigma: f64, ridge_rel: f64) -> Self {
        if noise_sigma == 0.0 && ridge_rel == 0.0 {
            Self::exact()
        } else {
            Self::approximate()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    /// `"<"` or `">"`.
    pub relation: &'static str,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckOutcome {
    fn above(name: String, value: f64, threshold: f64) -> Self {
        Self {
            name,
            value,
            relation: ">",
            threshold,
            pass: value > threshold,
        }
    }

    fn below(name: String, value: f64, threshold: f64) -> Self {
        Self {
            name,
            value,
            relation: "<",
            threshold,
            pass: value < threshold,
        }
    }
}

impl VerifyReport {
    pub fn checks(&self, th: &VerifyThresholds) -> Vec<CheckOutcome> {
        let mut out = Vec::new();
        for (name, &c) in self.concept_names.iter().zip(&self.dir_cos) {
            out.push(CheckOutcome::above(
                format!("dir_cos[{name}]"),
                c,
                th.min_cos,
            ));
        }
        for (name, &c) in self.concept_names.iter().zip(&self.riesz_cos) {
            out.push(CheckOutcome::above(
                format!("riesz_cos[{name}]"),
                c,
                th.min_cos,
            ));
        }
        if self.concept_names.len() >= 2 {
            out.push(CheckOutcome::below(
                "heatmap_offdiag_max".into(),
                self.heatmap_offdiag_max,
                th.max_heatmap_offdiag,
            ));
            out.push(CheckOutcome::above(
                "euclidean_offdiag_median".into(),
                self.euclidean_offdiag_median,
                th.min_euclidean_median,
            ));
            out.push(CheckOutcome::below(
                "uncorrelatedness_max".into(),
                self.uncorrelatedness_max,
                th.max_uncorrelated,
            ));
        }
        out.push(CheckOutcome::below(
            "explicit_form_offdiag_rel".into(),
            self.explicit_form_offdiag_rel,
            th.max_explicit_form_offdiag,
        ));
        out.push(CheckOutcome::below(
            "explicit_form_m_residual".into(),
            self.explicit_form_m_residual,
            th.max_explicit_form_residual,
        ));
        out
    }

    pub fn passes(&self, th: &VerifyThresholds) -> bool {
        self.checks(th).iter().all(|c| c.pass)
    }
}

fn offdiag(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Estimates every planted concept from the model's own pair sets under
/// `mc` and compares against the planted truth.
pub fn verify_report(model: &SyntheticModel, mc: &MetricContext) -> Result<VerifyReport> {
    let truth = model.ground_truth();
    let dirs: Vec<ConceptDirection> = model
        .pair_sets
        .iter()
        .map(|p| estimate_direction(&model.gamma, p, mc))
        .collect::<Result<_>>()?;

    let dir_cos = dirs
        .iter()
        .zip(&truth.gamma_bars)
        .map(|(d, t)| mc.cosine(&d.gamma_bar, t))
        .collect::<Result<Vec<_>>>()?;
    let riesz_cos = dirs
        .iter()
        .zip(&truth.lambda_bars)
        .map(|(d, t)| mc.dual_cosine(&d.lambda_bar, t))
        .collect::<Result<Vec<_>>>()?;

    let causal = offdiag(&heatmap(&dirs, mc, MetricKind::Causal)?);
    let euclid = offdiag(&heatmap(&dirs, mc, MetricKind::Euclidean)?);
    let heatmap_offdiag_max = causal.iter().cloned().fold(0.0, f64::max);
    let euclidean_offdiag_median = if euclid.is_empty() {
        f64::NAN
    } else {
        crate::concepts::quantile(&euclid, 0.5)
    };

    let explicit = explicit_form_check(&truth.basis, &mc.cov)?;

    let mut uncorrelatedness_max: f64 = 0.0;
    for i in 0..dirs.len() {
        for j in (i + 1)..dirs.len() {
            let r = uncorrelatedness_check(&model.gamma, &dirs[i].lambda_bar, &dirs[j].lambda_bar)?;
            uncorrelatedness_max = uncorrelatedness_max.max(r.abs());
        }
    }

    Ok(VerifyReport {
        concept_names: model.concept_names.clone(),
        dir_cos,
        riesz_cos,
        heatmap_offdiag_max,
        euclidean_offdiag_median,
        explicit_form_offdiag_rel: explicit.offdiag_rel,
        explicit_form_m_residual: explicit.m_residual,
        uncorrelatedness_max,
    })
}
