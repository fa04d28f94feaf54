//! Urban-object landuse classification from a set of ground-view features and
//! one overhead feature per object.
//!
//! The crate covers the numerical core of a late-fusion classifier: pooling
//! of ground-view sets ([`aggregate`]), linear fusion heads trained with SGD
//! ([`fusion`]), a three-view CCA embedding ([`embedding`]) used to retrieve
//! substitute ground features when an object has none ([`retrieval`]), and
//! accuracy reporting ([`eval`]). Feature extraction from images happens
//! upstream; this crate reads the extracted features from `MMLU` files
//! ([`dataset`]).

pub mod aggregate;
pub mod cli;
pub mod config;
pub mod container;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod oracle;
pub mod pca;
pub mod pipeline;
pub mod retrieval;
pub mod split;
pub mod synth;

pub use aggregate::{aggregate, AggregatedFeature, Pooling};
pub use dataset::{DatasetManifest, FeatureVector, LabelVocabulary, UrbanObjectRecord};
pub use embedding::{fit_embedding, CcaHyperparams, EmbeddingModel, View};
pub use error::{Error, Result};
pub use eval::{average_reports, evaluate, EvaluationReport};
pub use fusion::{FusionModel, Mode, TrainConfig};
pub use retrieval::{build_index, predict_missing, RetrievalIndex};
pub use split::{stratified_split, SplitAssignment};
