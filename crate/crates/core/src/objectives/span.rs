//! Span corruption and the mixture of denoisers.
//!
//! For R and X denoisers the corrupted-token count is `round(r · M)` over the
//! `M` maskable (non-special) tokens, clamped so at least one token is kept
//! and one corrupted. The span count is `N / μ` rounded stochastically, so
//! the expected mean span length is `μ`; it is raised to the minimum span
//! count and capped by the sentinel budget. Span lengths are a uniformly
//! random composition of `N`, and kept tokens are spread over the gaps with
//! at least one kept token between neighbouring spans, so spans never
//! overlap, never merge and never cover a special token.
//!
//! The input replaces span `k` with `sentinel_k`; the target lists
//! `sentinel_k` followed by the removed tokens for every span and ends with
//! one more sentinel. The S denoiser splits at `⌈(1 − r) · L⌉` instead.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng as _;

use super::{DenoiserKind, DenoiserSpec, ObjectiveError, ObjectiveExample, ObjectiveKind, Result, SpanMean};
use crate::rng::{self, Rng};
use crate::tokenizer::{TokenSeq, Vocab};

struct Corrupted {
    input: Vec<u32>,
    target: Vec<u32>,
    spans: usize,
    noise: usize,
}

/// Random composition of `total` into `parts` positive integers.
fn positive_composition(rng: &mut Rng, total: usize, parts: usize) -> Vec<usize> {
    debug_assert!(parts >= 1 && parts <= total);
    let mut cuts: Vec<usize> = index::sample(rng, total - 1, parts - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts {
        out.push(c - prev);
        prev = c;
    }
    out.push(total - prev);
    out
}

/// Random composition of `total` into `parts` non-negative integers.
fn composition(rng: &mut Rng, total: usize, parts: usize) -> Vec<usize> {
    positive_composition(rng, total + parts, parts)
        .into_iter()
        .map(|p| p - 1)
        .collect()
}

fn split_sequential(ids: &[u32], rate: f64) -> Corrupted {
    let len = ids.len();
    let split = (((1.0 - rate) * len as f64).ceil() as usize).clamp(1, len - 1);
    Corrupted {
        input: ids[..split].to_vec(),
        target: ids[split..].to_vec(),
        spans: 1,
        noise: len - split,
    }
}

fn corrupt_spans(ids: &[u32], mean: f64, rate: f64, min_spans: usize, vocab: &Vocab, rng: &mut Rng) -> Result<Corrupted> {
    let maskable: Vec<usize> = (0..ids.len()).filter(|&i| !vocab.is_special(ids[i])).collect();
    let m = maskable.len();
    if m == 0 {
        return Err(ObjectiveError::OnlySpecials);
    }
    let budget = vocab.num_sentinels();
    if budget < 2 {
        return Err(ObjectiveError::MissingSpecial(crate::tokenizer::sentinel_name(budget)));
    }
    let noise = if m == 1 {
        1
    } else {
        ((rate * m as f64).round() as usize).clamp(1, m - 1)
    };
    let kept = m - noise;

    let exact = noise as f64 / mean;
    let mut spans = exact.floor() as usize;
    if rng.gen::<f64>() < exact - exact.floor() {
        spans += 1;
    }
    let spans = spans
        .max(min_spans)
        .min(noise)
        .min(kept + 1)
        .min(budget - 1)
        .max(1);

    let lengths = positive_composition(rng, noise, spans);
    let inner = spans - 1;
    let mut gaps = composition(rng, kept - inner, spans + 1);
    for g in gaps.iter_mut().take(spans).skip(1) {
        *g += 1;
    }

    let mut is_noise = vec![false; ids.len()];
    let mut cursor = 0;
    for (gap, len) in gaps.iter().zip(&lengths) {
        cursor += gap;
        for &pos in &maskable[cursor..cursor + len] {
            is_noise[pos] = true;
        }
        cursor += len;
    }

    // a span that straddles a special token becomes two runs; runs past the
    // sentinel budget stay uncorrupted
    let mut input = Vec::with_capacity(ids.len() - noise + spans);
    let mut target = Vec::with_capacity(noise + spans + 1);
    let mut runs = 0;
    let mut corrupted = 0;
    let mut i = 0;
    while i < ids.len() {
        if is_noise[i] && runs < budget - 1 {
            let sentinel = vocab.sentinel(runs).expect("within budget");
            input.push(sentinel);
            target.push(sentinel);
            while i < ids.len() && is_noise[i] {
                target.push(ids[i]);
                corrupted += 1;
                i += 1;
            }
            runs += 1;
        } else {
            input.push(ids[i]);
            i += 1;
        }
    }
    target.push(vocab.sentinel(runs).expect("within budget"));
    Ok(Corrupted {
        input,
        target,
        spans: runs,
        noise: corrupted,
    })
}

fn corrupt(seq: &TokenSeq, spec: &DenoiserSpec, vocab: &Vocab, rng: &mut Rng) -> Result<Corrupted> {
    let len = seq.len();
    if len < 2 {
        return Err(ObjectiveError::TooShort { len, need: 2 });
    }
    let mean = spec.resolve_mean(len);
    if mean > len as f64 {
        return Err(ObjectiveError::Unresolvable { mean, len });
    }
    match spec.kind {
        DenoiserKind::S => Ok(split_sequential(&seq.ids, spec.rate)),
        DenoiserKind::R | DenoiserKind::X => corrupt_spans(&seq.ids, mean, spec.rate, spec.min_spans, vocab, rng),
    }
}

fn build(
    objective: ObjectiveKind,
    spec: &DenoiserSpec,
    c: Corrupted,
    prefix: Option<u32>,
    vocab_id: u64,
) -> ObjectiveExample {
    let mut input = Vec::with_capacity(c.input.len() + 1);
    input.extend(prefix);
    input.extend(c.input);
    let mut meta = BTreeMap::new();
    meta.insert("denoiser".to_string(), spec.control_token.clone());
    meta.insert("kind".to_string(), spec.kind.to_string());
    meta.insert("spans".to_string(), c.spans.to_string());
    meta.insert("noise".to_string(), c.noise.to_string());
    ObjectiveExample {
        objective,
        input_ids: TokenSeq::new(input, vocab_id),
        target_ids: TokenSeq::new(c.target, vocab_id),
        meta,
    }
}

/// Applies one denoiser. The S kind is a prefix/suffix split; R and X kinds
/// replace spans with sentinels.
pub fn span_corrupt(seq: &TokenSeq, spec: &DenoiserSpec, vocab: &Vocab, seed: u64) -> Result<ObjectiveExample> {
    let mut rng = rng::seeded(seed);
    let c = corrupt(seq, spec, vocab, &mut rng)?;
    Ok(build(ObjectiveKind::SpanCorruption, spec, c, None, seq.vocab_id))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MixtureOptions {
    /// When positive, each draw scales μ and r by independent factors
    /// uniform in `[1 − jitter, 1 + jitter]` (r is kept inside (0, 1), μ ≥ 1).
    pub jitter: f64,
}

/// Mixture of denoisers: picks one denoiser uniformly, corrupts, and prefixes the
/// input with the chosen denoiser's control token.
pub fn mod_sample(seq: &TokenSeq, specs: &[DenoiserSpec], vocab: &Vocab, seed: u64) -> Result<ObjectiveExample> {
    mod_sample_with(seq, specs, vocab, seed, &MixtureOptions::default())
}

pub fn mod_sample_with(
    seq: &TokenSeq,
    specs: &[DenoiserSpec],
    vocab: &Vocab,
    seed: u64,
    opts: &MixtureOptions,
) -> Result<ObjectiveExample> {
    if specs.is_empty() {
        return Err(ObjectiveError::NoDenoisers);
    }
    // the choice uses its own stream so corruption randomness matches span_corrupt
    let mut choice = rng::seeded(seed);
    choice.set_stream(1);
    let picked = &specs[choice.gen_range(0..specs.len())];
    let control = vocab
        .special(&picked.control_token)
        .ok_or_else(|| ObjectiveError::MissingSpecial(picked.control_token.clone()))?;
    let spec = if opts.jitter > 0.0 {
        jittered(picked, opts.jitter, &mut choice)
    } else {
        picked.clone()
    };
    let mut rng = rng::seeded(seed);
    let c = corrupt(seq, &spec, vocab, &mut rng)?;
    Ok(build(ObjectiveKind::Mod, &spec, c, Some(control), seq.vocab_id))
}

fn jittered(spec: &DenoiserSpec, jitter: f64, rng: &mut Rng) -> DenoiserSpec {
    let j = jitter.min(0.99);
    let mut out = spec.clone();
    out.rate = (spec.rate * rng.gen_range(1.0 - j..=1.0 + j)).clamp(1e-6, 1.0 - 1e-6);
    if let SpanMean::Tokens(mu) = spec.mean_span {
        out.mean_span = SpanMean::Tokens((mu * rng.gen_range(1.0 - j..=1.0 + j)).max(1.0));
    }
    out
}

/// Splices targets back into the input, yielding the original sequence.
pub fn reconstruct(example: &ObjectiveExample, vocab: &Vocab) -> Result<Vec<u32>> {
    let mut input: &[u32] = &example.input_ids.ids;
    match example.objective {
        ObjectiveKind::Mod => {
            input = input
                .split_first()
                .map(|(_, rest)| rest)
                .ok_or_else(|| ObjectiveError::Malformed("missing control token".into()))?;
        }
        ObjectiveKind::SpanCorruption => {}
        other => {
            return Err(ObjectiveError::Malformed(format!("{other} examples carry no spans")));
        }
    }
    let target = &example.target_ids.ids;
    if example.meta("kind") == Some("S") {
        let mut out = input.to_vec();
        out.extend_from_slice(target);
        return Ok(out);
    }

    let budget = vocab.num_sentinels();
    let sentinel_index = |id: u32| -> Option<usize> {
        if !vocab.is_special(id) {
            return None;
        }
        (0..budget).find(|&k| vocab.sentinel(k) == Some(id))
    };
    let mut segments: Vec<&[u32]> = Vec::new();
    let mut i = 0;
    while i < target.len() {
        let k = sentinel_index(target[i])
            .ok_or_else(|| ObjectiveError::Malformed(format!("target position {i} is not a sentinel")))?;
        if k != segments.len() {
            return Err(ObjectiveError::Malformed(format!("sentinel {k} out of order")));
        }
        let start = i + 1;
        let mut end = start;
        while end < target.len() && sentinel_index(target[end]).is_none() {
            end += 1;
        }
        segments.push(&target[start..end]);
        i = end;
    }
    // the final sentinel closes the list with an empty segment
    if segments.pop().is_none_or(|last| !last.is_empty()) {
        return Err(ObjectiveError::Malformed("target lacks its closing sentinel".into()));
    }
    let mut out = Vec::with_capacity(input.len() + target.len());
    for &id in input {
        match sentinel_index(id) {
            Some(k) => out.extend_from_slice(
                segments
                    .get(k)
                    .ok_or_else(|| ObjectiveError::Malformed(format!("no target for sentinel {k}")))?,
            ),
            None => out.push(id),
        }
    }
    Ok(out)
}
