use rand::seq::SliceRandom;

use super::{Result, ToyError, ToyModel};
use crate::metrics::mcc_from_confusion;
use crate::rng;
use crate::tokenizer::{TokenSeq, Vocab};

fn check_seq(model: &ToyModel, seq: &TokenSeq) -> Result<()> {
    if seq.vocab_id != model.vocab_id() {
        return Err(ToyError::VocabMismatch {
            model: model.vocab_id(),
            data: seq.vocab_id,
        });
    }
    for &t in &seq.ids {
        model.check_token(t)?;
    }
    Ok(())
}

fn mean_nll(model: &ToyModel, ids: &[u32], from: usize) -> f64 {
    let n = ids.len() - from;
    let sum: f64 = (from..ids.len()).map(|i| -model.prob(ids[i - 1], ids[i]).ln()).sum();
    sum / n as f64
}

/// `exp` of the mean negative log-likelihood of tokens 2..n given their
/// predecessors.
pub fn perplexity(model: &ToyModel, seq: &TokenSeq) -> Result<f64> {
    if seq.len() < 2 {
        return Err(ToyError::TooShort { len: seq.len(), need: 2 });
    }
    check_seq(model, seq)?;
    Ok(mean_nll(model, &seq.ids, 1).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenLpConfig {
    pub alpha: f64,
    pub pivot: f64,
}

impl Default for PenLpConfig {
    fn default() -> Self {
        PenLpConfig { alpha: 0.8, pivot: 5.0 }
    }
}

impl PenLpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ToyError::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.pivot >= 0.0) {
            return Err(ToyError::Config(format!("pivot {} is negative", self.pivot)));
        }
        Ok(())
    }
}

/// Total log-probability (first token from the unigram) divided by
/// `((pivot + |s|) / (pivot + 1))^alpha`.
pub fn penlp(model: &ToyModel, seq: &TokenSeq, cfg: &PenLpConfig) -> Result<f64> {
    cfg.validate()?;
    if seq.is_empty() {
        return Err(ToyError::TooShort { len: 0, need: 1 });
    }
    check_seq(model, seq)?;
    let ids = &seq.ids;
    let mut logp = model.unigram_probs()[ids[0] as usize].ln();
    for w in ids.windows(2) {
        logp += model.prob(w[0], w[1]).ln();
    }
    let n = ids.len() as f64;
    Ok(logp / ((cfg.pivot + n) / (cfg.pivot + 1.0)).powf(cfg.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreMode {
    /// Perplexity of the whole rendered string.
    #[default]
    FullPrompt,
    /// Only tokens after the text preceding the label, when the candidate
    /// ends with its label.
    Continuation,
}

fn candidate_score(model: &ToyModel, vocab: &Vocab, label: &str, text: &str, mode: ScoreMode) -> Result<f64> {
    let seq = vocab.encode(text);
    if seq.len() < 2 {
        return Err(ToyError::TooShort { len: seq.len(), need: 2 });
    }
    check_seq(model, &seq)?;
    let from = match mode {
        ScoreMode::Continuation if !label.is_empty() && text.ends_with(label) => {
            let prefix = vocab.encode(&text[..text.len() - label.len()]).len();
            prefix.clamp(1, seq.len() - 1)
        }
        _ => 1,
    };
    Ok(mean_nll(model, &seq.ids, from))
}

/// Label of the lowest-perplexity candidate; the earliest wins ties.
pub fn zero_shot_classify<L: AsRef<str>, S: AsRef<str>>(
    model: &ToyModel,
    candidates: &[(L, S)],
    vocab: &Vocab,
    mode: ScoreMode,
) -> Result<String> {
    if candidates.len() < 2 {
        return Err(ToyError::TooFewCandidates(2));
    }
    if vocab.id() != model.vocab_id() {
        return Err(ToyError::VocabMismatch {
            model: model.vocab_id(),
            data: vocab.id(),
        });
    }
    let mut best: Option<(f64, &str)> = None;
    for (label, text) in candidates {
        let nll = candidate_score(model, vocab, label.as_ref(), text.as_ref(), mode)?;
        if best.map_or(true, |(b, _)| nll < b) {
            best = Some((nll, label.as_ref()));
        }
    }
    Ok(best.map(|(_, l)| l.to_string()).unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdFit {
    /// Mean of the per-fold thresholds.
    pub threshold: f64,
    /// MCC of the pooled out-of-fold predictions.
    pub mcc: f64,
    pub fold_thresholds: Vec<f64>,
}

impl ThresholdFit {
    pub fn predict(&self, score: f64) -> bool {
        score > self.threshold
    }
}

/// Threshold maximizing MCC of `score > t` over `data`; candidates are the
/// midpoints between distinct scores plus one below and one above.
fn best_threshold(data: &mut [(f64, bool)]) -> f64 {
    data.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut distinct: Vec<f64> = data.iter().map(|d| d.0).collect();
    distinct.dedup();
    let mut candidates = Vec::with_capacity(distinct.len() + 1);
    candidates.push(distinct[0] - 1.0);
    candidates.extend(distinct.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    candidates.push(distinct[distinct.len() - 1] + 1.0);

    let pos = data.iter().filter(|d| d.1).count() as u64;
    let neg = data.len() as u64 - pos;
    // everything above the threshold is predicted positive
    let (mut tp, mut fp) = (pos, neg);
    let mut i = 0;
    let mut best = (f64::NEG_INFINITY, candidates[0]);
    for &t in &candidates {
        while i < data.len() && data[i].0 <= t {
            if data[i].1 {
                tp -= 1;
            } else {
                fp -= 1;
            }
            i += 1;
        }
        let m = mcc_from_confusion(tp, neg - fp, fp, pos - tp);
        if m > best.0 {
            best = (m, t);
        }
    }
    best.1
}

/// K-fold cross-validated threshold over `(score, is_positive)` pairs.
/// Examples are shuffled with `seed` and dealt round-robin into folds.
pub fn fit_threshold(scores: &[(f64, bool)], folds: usize, seed: u64) -> Result<ThresholdFit> {
    if folds < 2 {
        return Err(ToyError::Config(format!("need at least 2 folds, got {folds}")));
    }
    if scores.len() < folds {
        return Err(ToyError::TooFewExamples { have: scores.len(), folds });
    }
    if scores.iter().all(|s| s.1) || scores.iter().all(|s| !s.1) {
        return Err(ToyError::SingleClass);
    }
    if let Some(s) = scores.iter().find(|s| !s.0.is_finite()) {
        return Err(ToyError::Config(format!("score {} is not finite", s.0)));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    let fold_of: Vec<usize> = {
        let mut f = vec![0; scores.len()];
        for (pos, &i) in order.iter().enumerate() {
            f[i] = pos % folds;
        }
        f
    };
    let mut thresholds = Vec::with_capacity(folds);
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for k in 0..folds {
        let mut held_in: Vec<(f64, bool)> = (0..scores.len()).filter(|&i| fold_of[i] != k).map(|i| scores[i]).collect();
        let t = best_threshold(&mut held_in);
        thresholds.push(t);
        for i in (0..scores.len()).filter(|&i| fold_of[i] == k) {
            match (scores[i].0 > t, scores[i].1) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
            }
        }
    }
    let threshold = thresholds.iter().sum::<f64>() / folds as f64;
    Ok(ThresholdFit {
        threshold,
        mcc: mcc_from_confusion(tp, tn, fp, fn_),
        fold_thresholds: thresholds,
    })
}
