//! Latent collaborative retrieval: ranking items for a `(query, user)`
//! pair with a factorized query x user x item scoring model trained by
//! WARP or AUC stochastic gradient descent.

pub mod baselines;
pub mod config;
pub mod content;
pub mod data;
pub mod error;
pub mod eval;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod persist;
pub mod synthetic;
pub mod training;

pub use content::{FeatureCatalog, FeatureContext, FeatureVector};
pub use data::{Dataset, DatasetSplit, Triple, Vocab};
pub use error::{Error, IdKind, Result};
pub use eval::{recall_at_k, EvalReport, LcrScorer, Scorer};
pub use model::{Dims, Layout, Model, Representation, ScoreVector, Task, Variant};
pub use training::{train, LossKind, TrainConfig, TrainHistory, Trainer};
