//! Gene-token causal attribution toolkit.
//!
//! The crate is organised along the discovery pipeline:
//!
//! - [`corpus`]: gene vocabulary, cell records, QC, rank-value tokenization,
//!   stratified folds and a synthetic planted-biomarker generator.
//! - [`nnmodel`]: a small transformer encoder classifier whose forward pass
//!   records every hidden state and attention matrix and accepts
//!   corruption/restoration interventions.
//! - [`train`]: exact gradients, Adam, fitting with layer freezing, metrics
//!   and cross-validation.
//! - [`trace`]: clean/corrupted/restored runs, the indirect-effect grid and
//!   selection of the most causal neurons.
//! - [`backtrack`]: propagation of indirect effects back through attention
//!   to input-position scores and per-gene rankings.
//! - [`enrich`]: hypergeometric over-representation with BH-FDR.

pub mod backtrack;
pub mod corpus;
pub mod enrich;
mod error;
pub mod nnmodel;
pub mod seed;
pub mod trace;
pub mod train;

pub use error::{Error, Result};
