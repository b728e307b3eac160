//! Corpus-to-pretraining-examples pipeline and evaluation toolkit.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`] streams raw text files into normalized, deduplicated
//!   [`corpus::Document`]s, interleaving sources by weight.
//! - [`tokenizer`] trains and applies BPE, byte-level BPE and unigram
//!   vocabularies.
//! - [`objectives`] turns token sequences into training examples for masked
//!   LM, next-sentence prediction, causal LM packing, span corruption,
//!   replaced-token-detection inputs and the seven-denoiser mixture.
//! - [`templates`] renders Russian SuperGLUE task instances into prompts.
//! - [`metrics`] implements the classification and generation metrics plus
//!   the CO₂ estimate.
//! - [`toylm`] is a trainable bigram model used to exercise perplexity
//!   ranking, PenLP thresholding and beam search end to end.

pub mod corpus;
pub mod metrics;
pub mod objectives;
pub mod rng;
pub mod templates;
pub mod tokenizer;
pub mod toylm;

pub use corpus::{CorpusManifest, Document, Domain};

pub use objectives::{DenoiserSpec, ObjectiveExample, ObjectiveKind};
pub use tokenizer::{Scheme, TokenSeq, Vocab};
pub use toylm::ToyModel;

