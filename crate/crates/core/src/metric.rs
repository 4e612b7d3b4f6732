//! Causal inner product built from the vocabulary covariance of the
//! unembedding vectors.
//!
//! `⟨u, v⟩_C = uᵀ M v` with `M = (Cov(γ) + ρ·I)⁻¹`, where the ridge
//! `ρ = ridge_rel · trace(Cov)/d` is recorded in the [`MetricContext`].
//! `M` and its symmetric square root `A = M^{1/2}` come from one symmetric
//! eigendecomposition, so `A` is the unique symmetric positive definite root.
//! Under `A` the causal inner product becomes the Euclidean dot product and
//! the Riesz image `M·γ̄` of a direction coincides with the direction itself.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::concepts::ConceptDirection;
use crate::error::{Error, Result};
use crate::model_io::UnembeddingMatrix;

/// Default relative ridge applied to the covariance before inversion.
pub const DEFAULT_RIDGE_REL: f64 = 1e-6;

/// Covariance, causal metric and whitening factor for one unembedding matrix.
#[derive(Debug, Clone)]
pub struct MetricContext {
    /// Vocabulary mean of γ.
    pub mean: DVector<f64>,
    /// Population covariance Cov(γ).
    pub cov: DMatrix<f64>,
    /// `M = (cov + ridge·I)⁻¹`.
    pub metric: DMatrix<f64>,
    /// `M⁻¹ = cov + ridge·I`; the inner product on embedding-space vectors.
    pub metric_inv: DMatrix<f64>,
    /// Symmetric `A` with `A·A = M`.
    pub whitening: DMatrix<f64>,
    /// Relative ridge requested.
    pub ridge_rel: f64,
    /// Absolute ridge actually added to the diagonal.
    pub ridge: f64,
    /// Eigenvalues of the regularized covariance, ascending.
    pub eigenvalues: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetricKind {
    #[default]
    Causal,
    Euclidean,
}

impl MetricContext {
    /// Covariance and metric straight from an unembedding matrix.
    pub fn from_unembeddings(gamma: &UnembeddingMatrix, ridge_rel: f64) -> Result<Self> {
        let (mean, cov) = vocab_covariance(gamma)?;
        let mut mc = causal_metric(&cov, ridge_rel)?;
        mc.mean = mean;
        Ok(mc)
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    /// `uᵀ M v`.
    pub fn cip(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        cip(u, v, self)
    }

    /// Causal norm `√⟨u, u⟩_C`.
    pub fn norm(&self, u: &DVector<f64>) -> Result<f64> {
        Ok(cip(u, u, self)?.max(0.0).sqrt())
    }

    /// Causal cosine between two unembedding-space vectors.
    pub fn cosine(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        Ok(self.cip(u, v)? / (self.norm(u)? * self.norm(v)?))
    }

    /// Cosine between two embedding-space vectors under the dual form `M⁻¹`.
    pub fn dual_cosine(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        Error::check_dim(self.dim(), u.len())?;
        Error::check_dim(self.dim(), v.len())?;
        let uv = u.dot(&(&self.metric_inv * v));
        let uu = u.dot(&(&self.metric_inv * u));
        let vv = v.dot(&(&self.metric_inv * v));
        Ok(uv / (uu * vv).sqrt())
    }
}

/// Vocabulary mean and population covariance `(1/V)·Σ(γ−μ)(γ−μ)ᵀ`.
pub fn vocab_covariance(gamma: &UnembeddingMatrix) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let data = gamma.matrix();
    let v = data.nrows();
    if v < 2 {
        return Err(Error::DegenerateVocab {
            required: 2,
            found: v,
        });
    }
    let mean = data.row_mean().transpose();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.transpose() * &centered;
    cov /= v as f64;
    symmetrize(&mut cov);
    Ok((mean, cov))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `Q·diag(f(λ))·Qᵀ`.
fn spectral(eigen: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let q = &eigen.eigenvectors;
    let mut scaled = q.clone();
    for (mut col, &lambda) in scaled.column_iter_mut().zip(eigen.eigenvalues.iter()) {
        col *= f(lambda);
    }
    let mut out = scaled * q.transpose();
    symmetrize(&mut out);
    out
}

/// Builds `M = (cov + ρ·I)⁻¹` and `A = M^{1/2}` with `ρ = ridge_rel·trace(cov)/d`.
pub fn causal_metric(cov: &DMatrix<f64>, ridge_rel: f64) -> Result<MetricContext> {
    let (rows, cols) = cov.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Err(Error::InvalidShape("empty covariance".into()));
    }
    if !(ridge_rel >= 0.0) || !ridge_rel.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "ridge must be finite and non-negative, got {ridge_rel}"
        )));
    }
    let d = rows;
    let mut cov = cov.clone();
    symmetrize(&mut cov);
    let ridge = ridge_rel * cov.trace() / d as f64;

    let mut regularized = cov.clone();
    for i in 0..d {
        regularized[(i, i)] += ridge;
    }
    let mut eigen = SymmetricEigen::new(regularized);
    sort_ascending(&mut eigen);

    let min = eigen.eigenvalues[0];
    let max = eigen.eigenvalues[d - 1];
    // Floating point turns exact zeros into ±ε·λ_max.
    let floor = d as f64 * f64::EPSILON * max.abs();
    if !(min > floor) {
        return Err(Error::SingularAfterRidge {
            min_eigenvalue: min,
            ridge,
        });
    }

    let metric = spectral(&eigen, |l| 1.0 / l);
    let metric_inv = spectral(&eigen, |l| l);
    let whitening = spectral(&eigen, |l| 1.0 / l.sqrt());
    Ok(MetricContext {
        mean: DVector::zeros(d),
        cov,
        metric,
        metric_inv,
        whitening,
        ridge_rel,
        ridge,
        eigenvalues: eigen.eigenvalues,
    })
}

fn sort_ascending(eigen: &mut SymmetricEigen<f64, nalgebra::Dyn>) {
    let n = eigen.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    let values = DVector::from_fn(n, |i, _| eigen.eigenvalues[order[i]]);
    let vectors = eigen.eigenvectors.select_columns(order.iter());
    eigen.eigenvalues = values;
    eigen.eigenvectors = vectors;
}

/// Causal inner product `uᵀ M v`.
pub fn cip(u: &DVector<f64>, v: &DVector<f64>, mc: &MetricContext) -> Result<f64> {
    Error::check_dim(mc.dim(), u.len())?;
    Error::check_dim(mc.dim(), v.len())?;
    Ok(u.dot(&(&mc.metric * v)))
}

/// Riesz map `γ̄ ↦ M·γ̄`: the embedding-space vector representing `⟨γ̄, ·⟩_C`.
pub fn riesz_map(gamma_bar: &DVector<f64>, mc: &MetricContext) -> Result<DVector<f64>> {
    Error::check_dim(mc.dim(), gamma_bar.len())?;
    Ok(&mc.metric * gamma_bar)
}

/// `A·v`.
pub fn whiten(vec: &DVector<f64>, mc: &MetricContext) -> Result<DVector<f64>> {
    Error::check_dim(mc.dim(), vec.len())?;
    Ok(&mc.whitening * vec)
}

/// Applies `A` to every row of `m`.
pub fn whiten_matrix(m: &DMatrix<f64>, mc: &MetricContext) -> Result<DMatrix<f64>> {
    Error::check_dim(mc.dim(), m.ncols())?;
    // rows·Aᵀ, and A is symmetric
    Ok(m * &mc.whitening)
}

/// `|⟨γ̄_i, γ̄_j⟩|` with every direction re-normalized under the chosen metric.
pub fn heatmap(
    dirs: &[ConceptDirection],
    mc: &MetricContext,
    kind: MetricKind,
) -> Result<DMatrix<f64>> {
    if dirs.is_empty() {
        return Err(Error::InvalidShape(
            "heatmap needs at least one direction".into(),
        ));
    }
    let inner = |u: &DVector<f64>, v: &DVector<f64>| -> Result<f64> {
        match kind {
            MetricKind::Causal => cip(u, v, mc),
            MetricKind::Euclidean => {
                Error::check_dim(mc.dim(), u.len())?;
                Error::check_dim(mc.dim(), v.len())?;
                Ok(u.dot(v))
            }
        }
    };
    let k = dirs.len();
    let norms = dirs
        .iter()
        .map(|d| inner(&d.gamma_bar, &d.gamma_bar).map(f64::sqrt))
        .collect::<Result<Vec<_>>>()?;
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        out[(i, i)] = 1.0;
        for j in (i + 1)..k {
            let value =
                inner(&dirs[i].gamma_bar, &dirs[j].gamma_bar)?.abs() / (norms[i] * norms[j]);
            out[(i, j)] = value;
            out[(j, i)] = value;
        }
    }
    Ok(out)
}

/// Residuals of `M⁻¹ = G·Gᵀ` and `Gᵀ·Cov⁻¹·G = D` for a square basis `G`
/// whose columns are canonical directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitFormReport {
    /// max |off-diagonal| / min |diagonal| of `Gᵀ·Cov⁻¹·G`.
    pub offdiag_rel: f64,
    /// Diagonal of `Gᵀ·Cov⁻¹·G`.
    pub d_entries: DVector<f64>,
    /// `‖G·Gᵀ − Cov‖_F / ‖Cov‖_F` (the implied `M⁻¹` when `D = I`).
    pub m_residual: f64,
}

pub fn explicit_form_check(g: &DMatrix<f64>, cov: &DMatrix<f64>) -> Result<ExplicitFormReport> {
    let (rows, cols) = g.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    let (cr, cc) = cov.shape();
    if cr != cc {
        return Err(Error::NotSquare { rows: cr, cols: cc });
    }
    Error::check_dim(cr, rows)?;

    let solved = cov.clone().lu().solve(g).ok_or(Error::SingularCovariance)?;
    let product = g.transpose() * solved;
    let d_entries = product.diagonal();
    let min_diag = d_entries.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let mut max_off = 0.0f64;
    for i in 0..rows {
        for j in 0..rows {
            if i != j {
                max_off = max_off.max(product[(i, j)].abs());
            }
        }
    }
    let offdiag_rel = if rows == 1 { 0.0 } else { max_off / min_diag };
    let m_residual = (g * g.transpose() - cov).norm() / cov.norm();
    Ok(ExplicitFormReport {
        offdiag_rel,
        d_entries,
        m_residual,
    })
}
