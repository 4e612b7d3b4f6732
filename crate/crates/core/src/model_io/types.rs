use std::collections::HashSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn check_finite(data: &DMatrix<f64>) -> Result<()> {
    for col in 0..data.ncols() {
        for row in 0..data.nrows() {
            if !data[(row, col)].is_finite() {
                return Err(Error::NonFiniteEntry { row, col });
            }
        }
    }
    Ok(())
}

/// Output-word vectors γ(y), one row per vocabulary token.
///
/// Logits of a context with embedding λ are `Γ·λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnembeddingMatrix {
    data: DMatrix<f64>,
}

impl UnembeddingMatrix {
    /// Wraps a V×d matrix, enforcing V ≥ 2, d ≥ 1 and finite entries.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::DegenerateVocab {
                required: 2,
                found: data.nrows(),
            });
        }
        if data.ncols() == 0 {
            return Err(Error::InvalidShape(
                "unembedding dimension must be at least 1".into(),
            ));
        }
        check_finite(&data)?;
        Ok(Self { data })
    }

    pub fn vocab_size(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn check_id(&self, id: usize) -> Result<()> {
        if id < self.vocab_size() {
            Ok(())
        } else {
            Err(Error::IdOutOfRange {
                id,
                vocab_size: self.vocab_size(),
            })
        }
    }

    /// γ(id) as a column vector.
    pub fn row(&self, id: usize) -> Result<DVector<f64>> {
        self.check_id(id)?;
        Ok(self.data.row(id).transpose())
    }

    /// γ(id1) − γ(id0).
    pub fn diff(&self, id1: usize, id0: usize) -> Result<DVector<f64>> {
        self.check_id(id1)?;
        self.check_id(id0)?;
        Ok((self.data.row(id1) - self.data.row(id0)).transpose())
    }

    /// Logits `Γ·λ` over the whole vocabulary.
    pub fn logits(&self, lambda: &DVector<f64>) -> Result<DVector<f64>> {
        Error::check_dim(self.dim(), lambda.len())?;
        Ok(&self.data * lambda)
    }
}

/// Context embeddings λ(x), one row per context, with optional per-row tags.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    data: DMatrix<f64>,
    labels: Option<Vec<String>>,
}

impl EmbeddingSet {
    pub fn new(data: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::InvalidShape(
                "embedding dimension must be at least 1".into(),
            ));
        }
        check_finite(&data)?;
        if let Some(labels) = &labels {
            if labels.len() != data.nrows() {
                return Err(Error::LabelCountMismatch {
                    labels: labels.len(),
                    rows: data.nrows(),
                });
            }
        }
        Ok(Self { data, labels })
    }

    /// Stacks column vectors as rows.
    pub fn from_rows(
        rows: &[DVector<f64>],
        dim: usize,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        for row in rows {
            Error::check_dim(dim, row.len())?;
        }
        let data = DMatrix::from_fn(rows.len(), dim, |r, c| rows[r][c]);
        Self::new(data, labels)
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.as_ref().map(|l| l[index].as_str())
    }

    pub fn row(&self, index: usize) -> DVector<f64> {
        self.data.row(index).transpose()
    }

    pub fn rows(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        self.data.row_iter().map(|r| r.transpose())
    }

    /// Rows whose label equals `label`, labels dropped.
    pub fn select_label(&self, label: &str) -> Result<Self> {
        let indices: Vec<usize> = match &self.labels {
            Some(labels) => labels
                .iter()
                .enumerate()
                .filter(|(_, l)| l.as_str() == label)
                .map(|(i, _)| i)
                .collect(),
            None => Vec::new(),
        };
        let data = self.data.select_rows(indices.iter());
        Self::new(data, None)
    }

    /// Distinct labels in order of first appearance.
    pub fn distinct_labels(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        if let Some(labels) = &self.labels {
            for label in labels {
                if seen.insert(label.as_str()) {
                    out.push(label.clone());
                }
            }
        }
        out
    }
}

/// An ordered concept (e.g. `male⇒female`) with its counterfactual pairs
/// `(y(0), y(1))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptPairSet {
    pub name: String,
    pub pairs: Vec<(usize, usize)>,
}

impl ConceptPairSet {
    pub fn new(name: impl Into<String>, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let set = Self {
            name: name.into(),
            pairs,
        };
        set.check_structure()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Every pair with its order flipped, i.e. the opposite concept.
    pub fn reversed(&self) -> Self {
        Self {
            name: self.name.clone(),
            pairs: self.pairs.iter().map(|&(a, b)| (b, a)).collect(),
        }
    }

    fn check_structure(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::EmptyConcept(format!(
                "concept `{}` has no pairs",
                self.name
            )));
        }
        let mut seen = HashSet::with_capacity(self.pairs.len());
        for &(id0, id1) in &self.pairs {
            if id0 == id1 {
                return Err(Error::DuplicateTokenInPair {
                    concept: self.name.clone(),
                    id: id0,
                });
            }
            if !seen.insert((id0, id1)) {
                return Err(Error::DuplicatePair {
                    concept: self.name.clone(),
                    id0,
                    id1,
                });
            }
        }
        Ok(())
    }

    /// Structural invariants plus every id inside `[0, vocab_size)`.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        self.check_structure()?;
        for &(id0, id1) in &self.pairs {
            for id in [id0, id1] {
                if id >= vocab_size {
                    return Err(Error::IdOutOfRange { id, vocab_size });
                }
            }
        }
        Ok(())
    }
}

/// Four outputs `Y(w, z)` for two causally separable concepts W and Z.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptQuadruple {
    /// (W, Z) concept names.
    pub names: (String, String),
    /// Token ids ordered `Y(0,0), Y(0,1), Y(1,0), Y(1,1)`.
    pub ids: [usize; 4],
}

impl ConceptQuadruple {
    pub fn new(w: impl Into<String>, z: impl Into<String>, ids: [usize; 4]) -> Result<Self> {
        let quad = Self {
            names: (w.into(), z.into()),
            ids,
        };
        quad.check_distinct()?;
        Ok(quad)
    }

    pub fn y00(&self) -> usize {
        self.ids[0]
    }

    pub fn y01(&self) -> usize {
        self.ids[1]
    }

    pub fn y10(&self) -> usize {
        self.ids[2]
    }

    pub fn y11(&self) -> usize {
        self.ids[3]
    }

    fn check_distinct(&self) -> Result<()> {
        for i in 0..4 {
            for j in (i + 1)..4 {
                if self.ids[i] == self.ids[j] {
                    return Err(Error::RepeatedQuadrupleId {
                        names: self.to_string(),
                        id: self.ids[i],
                    });
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        self.check_distinct()?;
        for &id in &self.ids {
            if id >= vocab_size {
                return Err(Error::IdOutOfRange { id, vocab_size });
            }
        }
        Ok(())
    }
}

impl fmt::Display for ConceptQuadruple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.names.0, self.names.1)
    }
}
