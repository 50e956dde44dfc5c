//! Resource-aware identity retrieval with multi-stage metric embeddings.
//!
//! A small staged encoder emits one embedding per stage plus a learnable
//! weighted fusion, trained end to end with a deeply-supervised
//! batch-hard soft-margin triplet loss. Identification then runs under
//! compute constraints: the anytime engine answers with the deepest
//! embedding a hard budget allows, and the budgeted-stream engine meets
//! a budget in expectation by exiting easy queries at early stages.
//!
//! Modules follow the pipeline: [`dataset`] generates and splits labeled
//! data, [`encoder`] defines the staged network and its Mul-Add cost
//! model, [`training`] owns the loss, gradients and the optimizer,
//! [`retrieval`] ranks galleries and scores CMC/mAP, and [`budget`]
//! houses the exit policies and both constrained-inference engines.
//! [`table`] is the on-disk interchange format, which also lets
//! externally computed embeddings replace the built-in encoder.

pub mod budget;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod linalg;
pub mod parallel;
pub mod retrieval;
pub mod table;
pub mod training;

pub use error::{Error, Result};
