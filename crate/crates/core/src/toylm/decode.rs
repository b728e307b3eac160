use std::collections::BTreeMap;

use super::{Result, ToyError, ToyModel};
use crate::tokenizer::TokenSeq;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beams: usize,
    /// Log-probabilities of tokens already present in the prefix or the
    /// hypothesis are multiplied by this factor.
    pub rep_penalty: f64,
    /// Maximum number of generated tokens, eos included.
    pub max_len: usize,
    pub eos: Option<u32>,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beams: 5,
            rep_penalty: 1.05,
            max_len: 32,
            eos: None,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len < 1 {
            return Err(ToyError::Config("max_len must be at least 1".into()));
        }
        if self.beams < 1 {
            return Err(ToyError::Config("need at least one beam".into()));
        }
        if !(self.rep_penalty >= 1.0) {
            return Err(ToyError::Config(format!("repetition penalty {} is below 1", self.rep_penalty)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Hyp {
    tokens: Vec<u32>,
    score: f64,
    seen: Vec<bool>,
    done: bool,
}

impl Hyp {
    fn normalized(&self) -> f64 {
        self.score / self.tokens.len() as f64
    }

    fn step_scores(&self, model: &ToyModel, last: Option<u32>, penalty: f64) -> Vec<f64> {
        let probs = match last {
            Some(c) => model.next_probs(c),
            None => model.unigram_probs(),
        };
        probs
            .iter()
            .zip(&self.seen)
            .map(|(p, &seen)| {
                let lp = p.ln();
                if seen {
                    lp * penalty
                } else {
                    lp
                }
            })
            .collect()
    }

    fn extend(&self, t: u32, step: f64, eos: Option<u32>) -> Hyp {
        let mut h = self.clone();
        h.tokens.push(t);
        h.score += step;
        h.seen[t as usize] = true;
        h.done = Some(t) == eos;
        h
    }
}

fn start(model: &ToyModel, prefix: &TokenSeq, cfg: &BeamConfig) -> Result<Hyp> {
    cfg.validate()?;
    if prefix.vocab_id != model.vocab_id() {
        return Err(ToyError::VocabMismatch {
            model: model.vocab_id(),
            data: prefix.vocab_id,
        });
    }
    let mut seen = vec![false; model.size()];
    for &t in &prefix.ids {
        model.check_token(t)?;
        seen[t as usize] = true;
    }
    if let Some(e) = cfg.eos {
        model.check_token(e)?;
    }
    Ok(Hyp {
        tokens: Vec::new(),
        score: 0.0,
        seen,
        done: false,
    })
}

fn last_token(prefix: &TokenSeq, h: &Hyp) -> Option<u32> {
    h.tokens.last().or(prefix.ids.last()).copied()
}

fn output(h: &Hyp, eos: Option<u32>) -> Vec<u32> {
    let mut out = h.tokens.clone();
    if h.done && out.last().copied() == eos {
        out.pop();
    }
    out
}

fn greedy_hyp(model: &ToyModel, prefix: &TokenSeq, cfg: &BeamConfig) -> Result<Hyp> {
    let mut h = start(model, prefix, cfg)?;
    while !h.done && h.tokens.len() < cfg.max_len {
        let scores = h.step_scores(model, last_token(prefix, &h), cfg.rep_penalty);
        let mut best = 0;
        for (t, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = t;
            }
        }
        h = h.extend(best as u32, scores[best], cfg.eos);
    }
    Ok(h)
}

/// Picks the highest penalized log-probability token at every step; the
/// lowest id wins ties. The eos token is not returned.
pub fn greedy_decode(model: &ToyModel, prefix: &TokenSeq, cfg: &BeamConfig) -> Result<Vec<u32>> {
    Ok(output(&greedy_hyp(model, prefix, cfg)?, cfg.eos))
}

/// Beam search over penalized log-probabilities. Each step keeps the best
/// `beams` extensions of the live hypotheses; a hypothesis finishes on eos or
/// at `max_len`. The result maximizes the summed score divided by length,
/// with the greedy hypothesis always among the contenders.
pub fn beam_search(model: &ToyModel, prefix: &TokenSeq, cfg: &BeamConfig) -> Result<Vec<u32>> {
    let mut live = vec![start(model, prefix, cfg)?];
    let mut finished: Vec<Hyp> = Vec::new();
    for _ in 0..cfg.max_len {
        if live.is_empty() {
            break;
        }
        let mut candidates: Vec<(f64, usize, u32)> = Vec::with_capacity(live.len() * model.size());
        for (b, h) in live.iter().enumerate() {
            let scores = h.step_scores(model, last_token(prefix, h), cfg.rep_penalty);
            candidates.extend(scores.iter().enumerate().map(|(t, s)| (h.score + s, b, t as u32)));
        }
        candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut next = Vec::with_capacity(cfg.beams);
        for &(_, b, t) in candidates.iter().take(cfg.beams) {
            let h = &live[b];
            let step = candidates_step(h, model, prefix, cfg, t);
            let n = h.extend(t, step, cfg.eos);
            if n.done {
                finished.push(n);
            } else {
                next.push(n);
            }
        }
        live = next;
    }
    finished.extend(live);
    finished.push(greedy_hyp(model, prefix, cfg)?);
    let mut best = &finished[0];
    for h in &finished[1..] {
        if h.normalized() > best.normalized() {
            best = h;
        }
    }
    Ok(output(best, cfg.eos))
}

fn candidates_step(h: &Hyp, model: &ToyModel, prefix: &TokenSeq, cfg: &BeamConfig, t: u32) -> f64 {
    let p = match last_token(prefix, h) {
        Some(c) => model.prob(c, t),
        None => model.unigram_probs()[t as usize],
    };
    let lp = p.ln();
    if h.seen[t as usize] {
        lp * cfg.rep_penalty
    } else {
        lp
    }
}

/// Highest number of occurrences of any single token.
pub fn max_repeat(tokens: &[u32]) -> usize {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &t in tokens {
        *counts.entry(t).or_default() += 1;
    }
    counts.values().copied().max().unwrap_or(0)
}

/// Length-normalized penalized score of `tokens` after `prefix`, the
/// quantity beam search maximizes.
pub fn sequence_score(model: &ToyModel, prefix: &TokenSeq, tokens: &[u32], cfg: &BeamConfig) -> Result<f64> {
    let mut h = start(model, prefix, cfg)?;
    if tokens.is_empty() {
        return Err(ToyError::TooShort { len: 0, need: 1 });
    }
    for &t in tokens {
        model.check_token(t)?;
        let step = candidates_step(&h, model, prefix, cfg, t);
        h = h.extend(t, step, cfg.eos);
    }
    Ok(h.normalized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_model(rng: &mut impl Rng, v: usize) -> ToyModel {
        let mut m = ToyModel::new(v, 0, rng.gen_range(0.3..1.0)).unwrap();
        for c in 0..v as u32 {
            for t in 0..v as u32 {
                m.set_logit(c, t, rng.gen_range(-3.0..3.0));
            }
        }
        m
    }

    #[test]
    fn single_beam_is_greedy() {
        let mut rng = rng::seeded(4);
        for i in 0..200 {
            let m = random_model(&mut rng, 8);
            let prefix = TokenSeq::new(vec![rng.gen_range(0..8)], 0);
            let cfg = BeamConfig {
                beams: 1,
                rep_penalty: if i % 2 == 0 { 1.0 } else { 1.05 },
                max_len: 12,
                eos: Some(7),
            };
            assert_eq!(beam_search(&m, &prefix, &cfg).unwrap(), greedy_decode(&m, &prefix, &cfg).unwrap());
        }
    }

    #[test]
    fn chain_model_is_traced() {
        let mut m = ToyModel::new(4, 0, 1.0).unwrap();
        m.set_logit(0, 1, 20.0);
        m.set_logit(1, 2, 20.0);
        m.set_logit(2, 3, 20.0);
        let cfg = BeamConfig { eos: Some(3), max_len: 10, ..Default::default() };
        let prefix = TokenSeq::new(vec![0], 0);
        assert_eq!(beam_search(&m, &prefix, &cfg).unwrap(), vec![1, 2]);
        assert_eq!(greedy_decode(&m, &prefix, &cfg).unwrap(), vec![1, 2]);
    }

    #[test]
    fn beams_never_lose_to_greedy() {
        let mut rng = rng::seeded(6);
        for _ in 0..100 {
            let m = random_model(&mut rng, 6);
            let prefix = TokenSeq::new(vec![rng.gen_range(0..6)], 0);
            let cfg = BeamConfig { beams: 3, max_len: 8, eos: Some(5), ..Default::default() };
            let beam = beam_search(&m, &prefix, &cfg).unwrap();
            let greedy = greedy_decode(&m, &prefix, &cfg).unwrap();
            let with_eos = |mut v: Vec<u32>| {
                if v.len() < cfg.max_len {
                    v.push(5);
                }
                v
            };
            let b = sequence_score(&m, &prefix, &with_eos(beam), &cfg).unwrap();
            let g = sequence_score(&m, &prefix, &with_eos(greedy), &cfg).unwrap();
            assert!(b >= g, "{b} < {g}");
        }
    }

    #[test]
    fn config_is_validated() {
        let m = ToyModel::new(3, 0, 1.0).unwrap();
        let p = TokenSeq::new(vec![0], 0);
        for cfg in [
            BeamConfig { max_len: 0, ..Default::default() },
            BeamConfig { beams: 0, ..Default::default() },
            BeamConfig { rep_penalty: 0.9, ..Default::default() },
        ] {
            assert!(beam_search(&m, &p, &cfg).is_err());
        }
    }

    #[test]
    fn repeats_are_counted() {
        assert_eq!(max_repeat(&[]), 0);
        assert_eq!(max_repeat(&[1, 2, 1, 3, 1, 2]), 3);
    }
}
