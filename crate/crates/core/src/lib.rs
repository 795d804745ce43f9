//! Multi-task pretraining and cross-lingual summarization at desk scale.
//!
//! A shared-vocabulary Transformer encoder-decoder is pretrained on a
//! weighted mix of five objectives (masked LM, denoising, monolingual
//! summarization, cross-lingual masked LM and translation) with task and
//! language control tokens, then finetuned for cross-lingual summarization
//! and scored with ROUGE.

pub mod corpus;
pub mod decoding;
pub mod error;
pub mod experiments;
pub mod model;
pub mod objectives;
pub mod rouge;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
