use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{Result, ToyError, ToyModel};
use crate::objectives::{ObjectiveExample, ObjectiveKind, IGNORE_ID};
use crate::rng;
use crate::tokenizer::TokenSeq;

/// Weighted (context, next) counts, grouped by context in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPairs {
    vocab_id: u64,
    groups: Vec<(u32, Vec<(u32, f64)>)>,
    total: f64,
}

impl TrainingPairs {
    pub fn from_counts<I: IntoIterator<Item = (u32, u32, f64)>>(vocab_id: u64, counts: I) -> TrainingPairs {
        let mut m: BTreeMap<u32, BTreeMap<u32, f64>> = BTreeMap::new();
        for (c, t, n) in counts {
            if n > 0.0 {
                *m.entry(c).or_default().entry(t).or_default() += n;
            }
        }
        let groups: Vec<(u32, Vec<(u32, f64)>)> = m.into_iter().map(|(c, row)| (c, row.into_iter().collect())).collect();
        let total = groups.iter().flat_map(|(_, r)| r.iter().map(|(_, n)| n)).sum();
        TrainingPairs { vocab_id, groups, total }
    }

    /// Every adjacent pair of every sequence.
    pub fn from_sequences(seqs: &[TokenSeq]) -> TrainingPairs {
        let vocab_id = seqs.first().map_or(0, |s| s.vocab_id);
        TrainingPairs::from_counts(
            vocab_id,
            seqs.iter().flat_map(|s| s.ids.windows(2).map(|w| (w[0], w[1], 1.0))),
        )
    }

    /// Pairs whose next token is a target token:
    ///
    /// - causal LM: `(input[i], target[i])`;
    /// - span corruption and mixtures: the target read left to right, its
    ///   first token conditioned on the last input token;
    /// - masked LM, NSP and RTD: adjacent pairs of the original sequence
    ///   ending at a scored position.
    pub fn from_examples(examples: &[ObjectiveExample]) -> TrainingPairs {
        let vocab_id = examples.first().map_or(0, |e| e.input_ids.vocab_id);
        let mut counts = Vec::new();
        for ex in examples {
            let input = &ex.input_ids.ids;
            let target = &ex.target_ids.ids;
            match ex.objective {
                ObjectiveKind::Clm => {
                    counts.extend(input.iter().zip(target).map(|(&c, &t)| (c, t, 1.0)));
                }
                ObjectiveKind::SpanCorruption | ObjectiveKind::Mod => {
                    let mut prev = input.last().copied();
                    for &t in target {
                        if let Some(c) = prev {
                            counts.push((c, t, 1.0));
                        }
                        prev = Some(t);
                    }
                }
                ObjectiveKind::Mlm | ObjectiveKind::MlmNsp | ObjectiveKind::RtdInput => {
                    let original: Vec<u32> = input
                        .iter()
                        .zip(target)
                        .map(|(&i, &t)| if t == IGNORE_ID { i } else { t })
                        .collect();
                    for k in 1..original.len() {
                        if target[k] != IGNORE_ID {
                            counts.push((original[k - 1], original[k], 1.0));
                        }
                    }
                }
            }
        }
        TrainingPairs::from_counts(vocab_id, counts)
    }

    pub fn vocab_id(&self) -> u64 {
        self.vocab_id
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0.0
    }

    fn max_token(&self) -> Option<u32> {
        self.groups
            .iter()
            .flat_map(|(c, r)| std::iter::once(*c).chain(r.iter().map(|(t, _)| *t)))
            .max()
    }
}

const MAX_HALVINGS: usize = 30;

/// Gradient of the mean cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// Per context row that has data.
    pub rows: Vec<(u32, Vec<f64>)>,
    pub unigram: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Full batch when `None`.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Scale each context row's step by `N / n_c`, the inverse of its share
    /// of the batch. Still a descent direction; rare contexts learn as fast
    /// as common ones.
    pub per_context: bool,
    /// Full batch only: a step that raises the loss is undone and retried
    /// at half the rate, which is kept for later epochs.
    pub backtrack: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1.0,
            epochs: 10,
            batch_size: None,
            seed: 0,
            per_context: false,
            backtrack: false,
        }
    }
}

impl ToyModel {
    fn check_pairs(&self, pairs: &TrainingPairs) -> Result<()> {
        if !pairs.is_empty() && pairs.vocab_id != self.vocab_id {
            return Err(ToyError::VocabMismatch {
                model: self.vocab_id,
                data: pairs.vocab_id,
            });
        }
        if let Some(t) = pairs.max_token() {
            self.check_token(t)?;
        }
        Ok(())
    }

    /// Mean negative log-likelihood of the pairs.
    pub fn loss(&self, pairs: &TrainingPairs) -> Result<f64> {
        self.check_pairs(pairs)?;
        if pairs.is_empty() {
            return Ok(0.0);
        }
        let mut sum = 0.0;
        for (c, row) in &pairs.groups {
            let p = self.next_probs(*c);
            for &(t, n) in row {
                sum -= n * p[t as usize].ln();
            }
        }
        Ok(sum / pairs.total)
    }

    pub fn gradient(&self, pairs: &TrainingPairs) -> Result<Gradient> {
        self.check_pairs(pairs)?;
        let v = self.size();
        let lambda = self.lambda();
        let mut grad = Gradient {
            rows: Vec::with_capacity(pairs.groups.len()),
            unigram: vec![0.0; v],
        };
        if pairs.is_empty() {
            return Ok(grad);
        }
        let n_total = pairs.total;
        let b = self.unigram_probs();
        let mut uni_weight = vec![0.0; v];
        let mut uni_sum = 0.0;
        for (c, row) in &pairs.groups {
            let a = self.bigram_softmax(*c);
            let p = self.next_probs(*c);
            let mut w_sum = 0.0;
            let mut w = Vec::with_capacity(row.len());
            for &(t, n) in row {
                let t = t as usize;
                let wt = n * lambda * a[t] / p[t];
                w_sum += wt;
                w.push((t, wt));
                if lambda < 1.0 {
                    let vt = n * (1.0 - lambda) * b[t] / p[t];
                    uni_weight[t] += vt;
                    uni_sum += vt;
                }
            }
            if lambda > 0.0 {
                let mut g: Vec<f64> = a.iter().map(|aj| w_sum * aj / n_total).collect();
                for (t, wt) in w {
                    g[t] -= wt / n_total;
                }
                grad.rows.push((*c, g));
            }
        }
        if lambda < 1.0 {
            for j in 0..v {
                grad.unigram[j] = (uni_sum * b[j] - uni_weight[j]) / n_total;
            }
        }
        Ok(grad)
    }

    pub fn apply_gradient(&mut self, grad: &Gradient, lr: f64) {
        self.apply_scaled(grad, lr, None);
    }

    fn apply_scaled(&mut self, grad: &Gradient, lr: f64, pairs: Option<&TrainingPairs>) {
        for (i, (c, g)) in grad.rows.iter().enumerate() {
            let scale = match pairs {
                Some(p) => p.total / p.groups[i].1.iter().map(|(_, n)| n).sum::<f64>(),
                None => 1.0,
            };
            let row = self.row_mut(*c);
            for (z, d) in row.iter_mut().zip(g) {
                *z -= lr * scale * d;
            }
        }
        if grad.unigram.iter().any(|&d| d != 0.0) {
            for (z, d) in self.unigram_mut().iter_mut().zip(&grad.unigram) {
                *z -= lr * d;
            }
        }
    }

    /// Gradient descent on the mean cross-entropy. Returns the full-data
    /// loss after each epoch.
    pub fn train(&mut self, pairs: &TrainingPairs, cfg: &TrainConfig) -> Result<Vec<f64>> {
        if !(cfg.lr > 0.0) {
            return Err(ToyError::BadLearningRate(cfg.lr));
        }
        self.check_pairs(pairs)?;
        let mut curve = Vec::with_capacity(cfg.epochs);
        if pairs.is_empty() {
            return Ok(curve);
        }
        let flat: Option<Vec<(u32, u32, f64)>> = cfg.batch_size.map(|_| {
            pairs
                .groups
                .iter()
                .flat_map(|(c, r)| r.iter().map(move |&(t, n)| (*c, t, n)))
                .collect()
        });
        let mut rng = rng::seeded(cfg.seed);
        let mut lr = cfg.lr;
        let start = if cfg.backtrack { self.loss(pairs)? } else { f64::NAN };
        for _ in 0..cfg.epochs {
            match (&flat, cfg.batch_size) {
                (Some(flat), Some(bs)) => {
                    let mut order = flat.clone();
                    order.shuffle(&mut rng);
                    for chunk in order.chunks(bs.max(1)) {
                        let batch = TrainingPairs::from_counts(pairs.vocab_id, chunk.iter().copied());
                        let g = self.gradient(&batch)?;
                        self.apply_scaled(&g, lr, cfg.per_context.then_some(&batch));
                    }
                }
                _ if cfg.backtrack => {
                    let before = curve.last().copied().unwrap_or(start);
                    let g = self.gradient(pairs)?;
                    for _ in 0..MAX_HALVINGS {
                        let mut next = self.clone();
                        next.apply_scaled(&g, lr, cfg.per_context.then_some(pairs));
                        if next.loss(pairs)? <= before {
                            *self = next;
                            break;
                        }
                        lr /= 2.0;
                    }
                }
                _ => {
                    let g = self.gradient(pairs)?;
                    self.apply_scaled(&g, lr, cfg.per_context.then_some(pairs));
                }
            }
            curve.push(self.loss(pairs)?);
        }
        Ok(curve)
    }
}
