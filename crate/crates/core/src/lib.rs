//! Core of the loopsift pipeline: ingest, preprocess, classify, review,
//! balance, retrain and evaluate binary hate-speech classifiers.

pub mod corpus;
pub mod eval;
pub mod hitl;
pub mod mnb;
pub mod quality;
pub mod scorer;
pub mod textprep;
mod timefmt;

pub use corpus::{
    Annotation, AnnotationKind, CorpusStore, Example, Label, LabelState, Language, Resolution,
    Source, TargetGroup, TrainingSnapshot,
};
pub use eval::metrics::{compute_metrics, Metrics};
pub use mnb::{FeatureConfig, MnbModel, Weighting};
pub use scorer::{ScoreInput, Scorer, ScorerError, ScorerIdentity};
pub use textprep::{preprocess, Preprocessed, ProfileName};

pub(crate) fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
