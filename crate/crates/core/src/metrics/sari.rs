//! SARI for sentence simplification, n = 1..4 over whitespace tokens.
//!
//! N-grams are counted as sets. A reference n-gram carries weight `k / R`
//! where `k` of the `R` references with any n-gram of that order contain it.
//! Keep and addition are F1 scores, deletion is precision only, and an empty
//! selection or relevant set counts as 1. Weights are kept as integer
//! numerators over `R`, so the result does not depend on iteration order.

use std::collections::{BTreeMap, BTreeSet};

use super::{check_lengths, MetricError, MetricReport, Result};

const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SariComponents {
    pub keep: f64,
    pub deletion: f64,
    pub addition: f64,
    pub sari: f64,
}

fn gram_set<'a>(tokens: &'a [&'a str], n: usize) -> BTreeSet<&'a [&'a str]> {
    if tokens.len() < n {
        return BTreeSet::new();
    }
    tokens.windows(n).collect()
}

fn f1(tp: f64, selected_is_empty: bool, precision_denom: f64, relevant_is_empty: bool, recall_denom: f64) -> f64 {
    let precision = if selected_is_empty { 1.0 } else { tp / precision_denom };
    let recall = if relevant_is_empty { 1.0 } else { tp / recall_denom };
    if precision > 0.0 && recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn order_scores(source: &[&str], pred: &[&str], refs: &[Vec<&str>], n: usize) -> (f64, f64, f64) {
    let s = gram_set(source, n);
    let p = gram_set(pred, n);
    let mut k: BTreeMap<&[&str], u64> = BTreeMap::new();
    let mut r = 0u64;
    for reference in refs {
        let set = gram_set(reference, n);
        if !set.is_empty() {
            r += 1;
            for g in set {
                *k.entry(g).or_insert(0) += 1;
            }
        }
    }
    let r = r.max(1);
    let weight = |g: &[&str]| k.get(g).copied().unwrap_or(0);

    let kept: Vec<&&[&str]> = s.intersection(&p).collect();
    let keep_tp: u64 = kept.iter().map(|g| weight(g)).sum();
    let keep_rel: u64 = s.iter().map(|g| weight(g)).sum();
    let keep = f1(
        keep_tp as f64,
        kept.is_empty(),
        (r * kept.len() as u64) as f64,
        keep_rel == 0,
        keep_rel as f64,
    );

    let deleted: Vec<&&[&str]> = s.difference(&p).collect();
    let del_tp: u64 = deleted.iter().map(|g| r - weight(g)).sum();
    let deletion = if deleted.is_empty() {
        1.0
    } else {
        del_tp as f64 / (r * deleted.len() as u64) as f64
    };

    let added: Vec<&&[&str]> = p.difference(&s).collect();
    let add_tp = added.iter().filter(|g| weight(g) > 0).count();
    let add_rel = k.keys().filter(|g| !s.contains(*g)).count();
    let addition = f1(
        add_tp as f64,
        added.is_empty(),
        added.len() as f64,
        add_rel == 0,
        add_rel as f64,
    );
    (keep, deletion, addition)
}

/// Sentence-level SARI and its components, each in `[0, 100]`.
pub fn sari_components<R: AsRef<str>>(source: &str, prediction: &str, references: &[R]) -> SariComponents {
    let src: Vec<&str> = source.split_whitespace().collect();
    let pred: Vec<&str> = prediction.split_whitespace().collect();
    let refs: Vec<Vec<&str>> = references.iter().map(|r| r.as_ref().split_whitespace().collect()).collect();
    let (mut keep, mut deletion, mut addition) = (0.0, 0.0, 0.0);
    for n in 1..=MAX_ORDER {
        let (k, d, a) = order_scores(&src, &pred, &refs, n);
        keep += k;
        deletion += d;
        addition += a;
    }
    let keep = keep / MAX_ORDER as f64;
    let deletion = deletion / MAX_ORDER as f64;
    let addition = addition / MAX_ORDER as f64;
    let sari = (keep + addition + deletion) / 3.0;
    SariComponents {
        keep: 100.0 * keep,
        deletion: 100.0 * deletion,
        addition: 100.0 * addition,
        sari: 100.0 * sari,
    }
}

/// Mean sentence SARI.
pub fn sari<S: AsRef<str>, P: AsRef<str>, R: AsRef<str>>(
    sources: &[S],
    predictions: &[P],
    references: &[Vec<R>],
) -> Result<MetricReport> {
    check_lengths(predictions.len(), sources.len())?;
    check_lengths(predictions.len(), references.len())?;
    if let Some(i) = references.iter().position(Vec::is_empty) {
        return Err(MetricError::NoGold(i));
    }
    let per: Vec<f64> = sources
        .iter()
        .zip(predictions)
        .zip(references)
        .map(|((s, p), r)| sari_components(s.as_ref(), p.as_ref(), r).sari)
        .collect();
    let score = per.iter().sum::<f64>() / per.len() as f64;
    Ok(MetricReport::new("sari", score, per.len()).with_per_example(per))
}
