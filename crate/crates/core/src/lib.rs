//! Active-learning local explanations for black-box models.
//!
//! The engine grows a small surrogate dataset around a single index sample
//! by maximizing the FUR (faithful uncertainty reduction) acquisition score
//! over a Gaussian-process posterior, then turns the fitted process or the
//! surrogate data into per-feature importance scores.
//!
//! Layout:
//! - [`dataset`]: CSV ingestion, frequency encoding and standardization.
//! - [`blackbox`]: the model query interface, analytic builtins and the
//!   JSON-lines subprocess transport.
//! - [`gpr`]: kernels, exact GP posterior, marginal likelihood and
//!   hyperparameter search.
//! - [`acquisition`]: UCB / UR / FUR scores and the multi-start maximizer.
//! - [`engine`]: the active sampling loop.
//! - [`explainers`]: ARD, sparse-linear and LIME-style importance scores.
//! - [`evaluation`]: Jaccard stability and regret-difference harnesses.
//! - [`cli`]: the `unravel` command-line front end.

pub mod acquisition;
pub mod blackbox;
pub mod cli;
pub mod dataset;
pub mod engine;
pub mod evaluation;
pub mod explainers;
pub mod gpr;
pub mod optimize;

pub use acquisition::{AcquisitionKind, AcquisitionSpec, BoxDomain};
pub use blackbox::{builtin_model, BlackBoxModel, Builtin, ModelError};
pub use engine::{run_unravel, ExplainRequest, SurrogateDataset};
pub use explainers::ImportanceScores;
pub use gpr::{GpModel, KernelKind, KernelSpec};
