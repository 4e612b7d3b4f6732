//! Loading and saving of matrices, embedding sets, concept pairs,
//! quadruples and context labels.
//!
//! Storage is 32-bit; everything in memory is 64-bit. Loaded objects are
//! plain immutable values and can be shared across threads.

mod binary;
mod text;
mod types;

use std::path::Path;

pub use binary::{
    decode_header, decode_matrix, encode_matrix, load_matrix, save_matrix, MatrixFile, MatrixKind,
    HEADER_LEN, MAGIC,
};
pub use text::{
    format_concept_pairs, format_quadruples, load_concept_pairs, load_labels, load_quadruples,
    parse_concept_pairs, parse_labels, parse_quadruples, save_concept_pairs, save_labels,
    save_quadruples,
};
pub use types::{ConceptPairSet, ConceptQuadruple, EmbeddingSet, UnembeddingMatrix};

use crate::error::{Error, Result};

fn expect_kind(file: &MatrixFile, expected: MatrixKind) -> Result<()> {
    if file.kind == expected {
        Ok(())
    } else {
        Err(Error::KindMismatch {
            expected: expected.name(),
            found: file.kind.name(),
        })
    }
}

/// Loads a kind-0 matrix file as an unembedding matrix.
pub fn load_unembeddings(path: impl AsRef<Path>) -> Result<UnembeddingMatrix> {
    let file = load_matrix(path)?;
    expect_kind(&file, MatrixKind::Unembedding)?;
    UnembeddingMatrix::new(file.data)
}

pub fn save_unembeddings(path: impl AsRef<Path>, gamma: &UnembeddingMatrix) -> Result<()> {
    save_matrix(path, MatrixKind::Unembedding, gamma.matrix())
}

/// Loads a kind-1 matrix file and, if given, its parallel label file.
pub fn load_embedding_set(path: impl AsRef<Path>, labels: Option<&Path>) -> Result<EmbeddingSet> {
    let file = load_matrix(path)?;
    expect_kind(&file, MatrixKind::Embedding)?;
    let labels = labels.map(load_labels).transpose()?;
    EmbeddingSet::new(file.data, labels)
}

pub fn save_embedding_set(
    path: impl AsRef<Path>,
    labels_path: Option<&Path>,
    set: &EmbeddingSet,
) -> Result<()> {
    save_matrix(path, MatrixKind::Embedding, set.matrix())?;
    if let (Some(labels_path), Some(labels)) = (labels_path, set.labels()) {
        save_labels(labels_path, labels)?;
    }
    Ok(())
}
