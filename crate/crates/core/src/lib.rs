//! Geometry of concept representations in softmax language models.
//!
//! Given an unembedding matrix Γ (one row `γ(y)` per output token), the
//! toolkit
//!
//! * estimates concept directions from counterfactual token pairs
//!   ([`concepts`]),
//! * builds the causal inner product `⟨u, v⟩ = uᵀ Cov(γ)⁻¹ v`, its
//!   whitening transform and the Riesz map to steering directions
//!   ([`metric`]),
//! * runs probing ([`probe`]) and steering ([`intervene`]) experiments,
//! * and provides a planted softmax model ([`synthetic`]) against which every
//!   step can be checked.
//!
//! File formats live in [`model_io`].

pub mod concepts;
pub mod error;
pub mod intervene;
pub mod metric;
pub mod model_io;
pub mod probe;
pub mod synthetic;

pub use concepts::{
    estimate_direction, loo_directions, project_pairs, random_pair_projections, ConceptDirection,
};
pub use error::{Error, Result};
pub use intervene::{intervene, logit_trajectory, topk_after_intervention, TrajectoryReport};
pub use metric::{
    causal_metric, cip, explicit_form_check, heatmap, riesz_map, vocab_covariance, whiten,
    whiten_matrix, ExplicitFormReport, MetricContext, MetricKind,
};
pub use model_io::{ConceptPairSet, ConceptQuadruple, EmbeddingSet, UnembeddingMatrix};
pub use probe::{alpha_hat, pair_logit, probe_report, probe_score, ProbeReport};
pub use synthetic::{
    build_synthetic, uncorrelatedness_check, verify_report, GroundTruth, SyntheticModel,
    SyntheticSpec, VerifyReport, VerifyThresholds,
};
