//! Training-example construction for every pretraining objective: masked LM
//! (optionally with next-sentence prediction), causal LM packing, span
//! corruption, replaced-token-detection inputs and the mixture of denoisers.
//!
//! Every builder is a pure function of its inputs and a seed. Targets use
//! [`IGNORE_ID`] at positions that carry no loss.

mod clm;
mod denoiser;
mod format;
mod mlm;
mod span;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::tokenizer::TokenSeq;

pub use clm::{pack_clm, PackClm};
pub use denoiser::{fred_t5_denoisers, DenoiserKind, DenoiserSpec, SpanMean, EXTREME_RATE, EXTREME_SPAN};
pub use format::{read_example, read_examples, write_example, write_examples};
pub use mlm::{
    make_mlm, make_nsp_pair, make_nsp_pair_with, make_rtd_input, split_sentences, NspLabel,
    DEFAULT_MLM_PROBABILITY, DEFAULT_RTD_PROBABILITY,
};
pub use span::{mod_sample, mod_sample_with, reconstruct, span_corrupt, MixtureOptions};

/// Target id marking "no loss here" (−1 as a signed 32-bit value).
pub const IGNORE_ID: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("probability {0} outside (0, 1)")]
    BadProbability(f64),
    #[error("sequence has no maskable (non-special) tokens")]
    OnlySpecials,
    #[error("vocabulary lacks special token `{0}`")]
    MissingSpecial(String),
    #[error("sequence of {len} tokens is too short (need {need})")]
    TooShort { len: usize, need: usize },
    #[error("mean span {mean} exceeds sequence length {len}")]
    Unresolvable { mean: f64, len: usize },
    #[error("document has {0} sentence(s); need at least 2")]
    TooFewSentences(usize),
    #[error("no denoisers given")]
    NoDenoisers,
    #[error("invalid denoiser: {0}")]
    InvalidSpec(String),
    #[error("malformed example: {0}")]
    Malformed(String),
    #[error("context length must be at least 2, got {0}")]
    ContextTooShort(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ObjectiveError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectiveKind {
    Mlm,
    MlmNsp,
    Clm,
    SpanCorruption,
    RtdInput,
    Mod,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 6] = [
        ObjectiveKind::Mlm,
        ObjectiveKind::MlmNsp,
        ObjectiveKind::Clm,
        ObjectiveKind::SpanCorruption,
        ObjectiveKind::RtdInput,
        ObjectiveKind::Mod,
    ];

    /// Tag byte used in the example file format.
    pub fn tag(self) -> u8 {
        match self {
            ObjectiveKind::Mlm => 0,
            ObjectiveKind::MlmNsp => 1,
            ObjectiveKind::Clm => 2,
            ObjectiveKind::SpanCorruption => 3,
            ObjectiveKind::RtdInput => 4,
            ObjectiveKind::Mod => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveKind::Mlm => "mlm",
            ObjectiveKind::MlmNsp => "mlm-nsp",
            ObjectiveKind::Clm => "clm",
            ObjectiveKind::SpanCorruption => "sp",
            ObjectiveKind::RtdInput => "rtd",
            ObjectiveKind::Mod => "mod",
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectiveKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown objective `{s}` (mlm, mlm-nsp, clm, sp, rtd, mod)"))
    }
}

/// One training record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectiveExample {
    pub objective: ObjectiveKind,
    pub input_ids: TokenSeq,
    /// May contain [`IGNORE_ID`].
    pub target_ids: TokenSeq,
    pub meta: BTreeMap<String, String>,
}

impl ObjectiveExample {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }
}
