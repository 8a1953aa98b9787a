//! A trainable engine for multiple-choice science questions. Answer
//! candidates are scored by the best latent "entailing structure" — a
//! textbook/chapter/section path, a short snippet, external knowledge bits,
//! and a unit alignment — found by staged beam search under a linear model
//! trained with a max-margin alternating procedure.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod index;
pub mod knowledge;
pub mod learner;
pub mod pipeline;
pub mod question;
pub mod structure;

pub use error::{Error, Result};
