//! Trainable bigram language model used to exercise the evaluation
//! protocols end to end.
//!
//! `P(t | c) = λ · softmax(W[c])_t + (1 − λ) · softmax(u)_t`, with the first
//! token of a sequence drawn from `softmax(u)`. Rows of `W` are allocated on
//! first write; an untouched row is all zeros (uniform).

mod decode;
mod eval;
mod train;

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

use crate::tokenizer::Vocab;

pub use decode::{beam_search, greedy_decode, max_repeat, sequence_score, BeamConfig};
pub use eval::{fit_threshold, penlp, perplexity, zero_shot_classify, PenLpConfig, ScoreMode, ThresholdFit};
pub use train::{Gradient, TrainConfig, TrainingPairs};

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("learning rate must be positive, got {0}")]
    BadLearningRate(f64),
    #[error("interpolation weight {0} outside [0, 1]")]
    BadLambda(f64),
    #[error("token {token} outside a {size}-token model")]
    TokenOutOfRange { token: u32, size: usize },
    #[error("sequence of {len} tokens is too short (need {need})")]
    TooShort { len: usize, need: usize },
    #[error("model has {model} tokens but the vocabulary has {vocab}")]
    SizeMismatch { model: usize, vocab: usize },
    #[error("vocabulary id mismatch: model {model:016x}, data {data:016x}")]
    VocabMismatch { model: u64, data: u64 },
    #[error("need at least {0} candidates")]
    TooFewCandidates(usize),
    #[error("both classes must be present")]
    SingleClass,
    #[error("{have} examples cannot fill {folds} folds")]
    TooFewExamples { have: usize, folds: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ToyError>;

const MAGIC: &str = "denoiserforge-toylm";

pub struct ToyModel {
    size: usize,
    vocab_id: u64,
    lambda: f64,
    rows: Vec<Option<Box<[f64]>>>,
    unigram: Vec<f64>,
    // mixture distribution per context, and softmax(u)
    cache: Vec<OnceLock<Box<[f64]>>>,
    unigram_cache: OnceLock<Box<[f64]>>,
}

impl Clone for ToyModel {
    fn clone(&self) -> Self {
        ToyModel {
            size: self.size,
            vocab_id: self.vocab_id,
            lambda: self.lambda,
            rows: self.rows.clone(),
            unigram: self.unigram.clone(),
            cache: (0..self.size).map(|_| OnceLock::new()).collect(),
            unigram_cache: OnceLock::new(),
        }
    }
}

impl std::fmt::Debug for ToyModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToyModel")
            .field("size", &self.size)
            .field("vocab_id", &format_args!("{:016x}", self.vocab_id))
            .field("lambda", &self.lambda)
            .field("rows_allocated", &self.rows.iter().filter(|r| r.is_some()).count())
            .finish()
    }
}

impl PartialEq for ToyModel {
    fn eq(&self, other: &Self) -> bool {
        self.size == other.size
            && self.vocab_id == other.vocab_id
            && self.lambda == other.lambda
            && self.unigram == other.unigram
            && (0..self.size as u32).all(|c| self.row(c) == other.row(c))
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Box<[f64]> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Box<[f64]> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= sum;
    }
    out
}

impl ToyModel {
    /// Uniform model over `size` tokens.
    pub fn new(size: usize, vocab_id: u64, lambda: f64) -> Result<ToyModel> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(ToyError::BadLambda(lambda));
        }
        if size == 0 {
            return Err(ToyError::Config("model needs at least one token".into()));
        }
        Ok(ToyModel {
            size,
            vocab_id,
            lambda,
            rows: vec![None; size],
            unigram: vec![0.0; size],
            cache: (0..size).map(|_| OnceLock::new()).collect(),
            unigram_cache: OnceLock::new(),
        })
    }

    pub fn for_vocab(vocab: &Vocab, lambda: f64) -> Result<ToyModel> {
        ToyModel::new(vocab.size(), vocab.id(), lambda)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn vocab_id(&self) -> u64 {
        self.vocab_id
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub(crate) fn check_token(&self, t: u32) -> Result<()> {
        if (t as usize) < self.size {
            Ok(())
        } else {
            Err(ToyError::TokenOutOfRange { token: t, size: self.size })
        }
    }

    pub(crate) fn row(&self, ctx: u32) -> Row<'_> {
        Row {
            logits: self.rows[ctx as usize].as_deref(),
            size: self.size,
        }
    }

    pub fn logit(&self, ctx: u32, next: u32) -> f64 {
        self.rows[ctx as usize].as_ref().map_or(0.0, |r| r[next as usize])
    }

    pub fn unigram_logit(&self, t: u32) -> f64 {
        self.unigram[t as usize]
    }

    pub(crate) fn row_mut(&mut self, ctx: u32) -> &mut [f64] {
        self.cache[ctx as usize] = OnceLock::new();
        let size = self.size;
        self.rows[ctx as usize].get_or_insert_with(|| vec![0.0; size].into_boxed_slice())
    }

    pub fn set_logit(&mut self, ctx: u32, next: u32, value: f64) {
        self.row_mut(ctx)[next as usize] = value;
    }

    pub(crate) fn unigram_mut(&mut self) -> &mut [f64] {
        self.invalidate();
        &mut self.unigram
    }

    pub fn set_unigram_logit(&mut self, t: u32, value: f64) {
        self.unigram_mut()[t as usize] = value;
    }

    pub(crate) fn invalidate(&mut self) {
        self.unigram_cache = OnceLock::new();
        for c in self.cache.iter_mut() {
            *c = OnceLock::new();
        }
    }

    pub(crate) fn bigram_softmax(&self, ctx: u32) -> Box<[f64]> {
        match &self.rows[ctx as usize] {
            Some(r) => softmax(r),
            None => vec![1.0 / self.size as f64; self.size].into_boxed_slice(),
        }
    }

    /// `softmax(u)`, the first-token distribution.
    pub fn unigram_probs(&self) -> &[f64] {
        self.unigram_cache.get_or_init(|| softmax(&self.unigram))
    }

    /// `P(· | ctx)`.
    pub fn next_probs(&self, ctx: u32) -> &[f64] {
        self.cache[ctx as usize].get_or_init(|| {
            let a = self.bigram_softmax(ctx);
            if self.lambda == 1.0 {
                return a;
            }
            let b = self.unigram_probs();
            a.iter()
                .zip(b)
                .map(|(x, y)| self.lambda * x + (1.0 - self.lambda) * y)
                .collect()
        })
    }

    pub fn prob(&self, ctx: u32, next: u32) -> f64 {
        self.next_probs(ctx)[next as usize]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{MAGIC} v1 {} {}\n", self.size, self.lambda).into_bytes();
        out.reserve(4 * self.size * (self.size + 1));
        for c in 0..self.size {
            match &self.rows[c] {
                Some(r) => r.iter().for_each(|&z| out.extend_from_slice(&(z as f32).to_le_bytes())),
                None => out.resize(out.len() + 4 * self.size, 0),
            }
        }
        for &z in &self.unigram {
            out.extend_from_slice(&(z as f32).to_le_bytes());
        }
        out
    }

    /// Parses a model file and binds it to `vocab`.
    pub fn from_bytes(bytes: &[u8], vocab: &Vocab) -> Result<ToyModel> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| ToyError::Format("missing header".into()))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| ToyError::Format("header is not UTF-8".into()))?;
        let parts: Vec<&str> = header.split(' ').collect();
        if parts.len() != 4 || parts[0] != MAGIC || parts[1] != "v1" {
            return Err(ToyError::Format(format!("bad header `{header}`")));
        }
        let size: usize = parts[2].parse().map_err(|_| ToyError::Format(format!("bad size `{}`", parts[2])))?;
        let lambda: f64 = parts[3].parse().map_err(|_| ToyError::Format(format!("bad lambda `{}`", parts[3])))?;
        if size != vocab.size() {
            return Err(ToyError::SizeMismatch { model: size, vocab: vocab.size() });
        }
        let body = &bytes[nl + 1..];
        let want = size
            .checked_mul(size + 1)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| ToyError::Format("size overflow".into()))?;
        if body.len() != want {
            return Err(ToyError::Format(format!("expected {want} bytes of weights, found {}", body.len())));
        }
        let mut model = ToyModel::new(size, vocab.id(), lambda)?;
        let mut floats = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
        for c in 0..size {
            let row: Vec<f64> = floats.by_ref().take(size).collect();
            if row.iter().any(|&z| z != 0.0) {
                model.rows[c] = Some(row.into_boxed_slice());
            }
        }
        model.unigram = floats.collect();
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, vocab: &Vocab) -> Result<ToyModel> {
        ToyModel::from_bytes(&fs::read(path)?, vocab)
    }
}

/// Borrowed view of one logit row; missing rows read as zeros.
pub(crate) struct Row<'a> {
    logits: Option<&'a [f64]>,
    size: usize,
}

impl PartialEq for Row<'_> {
    fn eq(&self, other: &Self) -> bool {
        (0..self.size).all(|i| self.get(i) == other.get(i))
    }
}

impl Row<'_> {
    fn get(&self, i: usize) -> f64 {
        self.logits.map_or(0.0, |r| r[i])
    }
}
