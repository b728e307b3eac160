use std::collections::{BTreeMap, BTreeSet};

use super::{check_lengths, MetricError, MetricReport, Result};

/// Multiclass Matthews correlation (Gorodkin's R_K). Zero when either side
/// predicts a single class.
pub fn mcc<L: Ord>(preds: &[L], golds: &[L]) -> Result<MetricReport> {
    check_lengths(preds.len(), golds.len())?;
    let mut pred_counts: BTreeMap<&L, f64> = BTreeMap::new();
    let mut gold_counts: BTreeMap<&L, f64> = BTreeMap::new();
    let mut correct = 0.0;
    for (p, g) in preds.iter().zip(golds) {
        *pred_counts.entry(p).or_default() += 1.0;
        *gold_counts.entry(g).or_default() += 1.0;
        if p == g {
            correct += 1.0;
        }
    }
    let s = preds.len() as f64;
    let cross: f64 = pred_counts
        .iter()
        .map(|(k, p)| p * gold_counts.get(k).copied().unwrap_or(0.0))
        .sum();
    let pp: f64 = pred_counts.values().map(|p| p * p).sum();
    let tt: f64 = gold_counts.values().map(|t| t * t).sum();
    let denom = ((s * s - pp) * (s * s - tt)).sqrt();
    let score = if denom == 0.0 { 0.0 } else { (correct * s - cross) / denom };
    Ok(MetricReport::new("mcc", score, preds.len()))
}

/// Binary MCC from confusion counts.
pub fn mcc_from_confusion(tp: u64, tn: u64, fp: u64, fn_: u64) -> f64 {
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / denom
    }
}

pub fn accuracy<L: PartialEq>(preds: &[L], golds: &[L]) -> Result<MetricReport> {
    check_lengths(preds.len(), golds.len())?;
    let per: Vec<f64> = preds.iter().zip(golds).map(|(p, g)| (p == g) as u8 as f64).collect();
    let score = per.iter().sum::<f64>() / per.len() as f64;
    Ok(MetricReport::new("accuracy", score, per.len()).with_per_example(per))
}

/// Lowercases, drops punctuation and collapses whitespace.
pub fn normalize_answer(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Bag-of-tokens F1 between two answers after normalization.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return (pt.is_empty() && gt.is_empty()) as u8 as f64;
    }
    let mut bag: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &gt {
        *bag.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pt {
        if let Some(c) = bag.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pt.len() as f64;
    let recall = common as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Exact match and token F1, each the maximum over an example's gold
/// answers, averaged over examples. Returns `(em, f1)`.
pub fn f1_em<P: AsRef<str>, G: AsRef<str>>(preds: &[P], golds: &[Vec<G>]) -> Result<(MetricReport, MetricReport)> {
    check_lengths(preds.len(), golds.len())?;
    let mut em = Vec::with_capacity(preds.len());
    let mut f1 = Vec::with_capacity(preds.len());
    for (i, (p, gs)) in preds.iter().zip(golds).enumerate() {
        if gs.is_empty() {
            return Err(MetricError::NoGold(i));
        }
        let np = normalize_answer(p.as_ref());
        em.push(gs.iter().any(|g| normalize_answer(g.as_ref()) == np) as u8 as f64);
        f1.push(gs.iter().map(|g| token_f1(p.as_ref(), g.as_ref())).fold(0.0, f64::max));
    }
    let n = preds.len();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    Ok((
        MetricReport::new("em", mean(&em), n).with_per_example(em),
        MetricReport::new("f1", mean(&f1), n).with_per_example(f1),
    ))
}

fn f1_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Binary F1 of the positive class within each question, averaged over
/// questions. A question with no positives on either side scores 1.
pub fn per_question_f1<Q: Ord>(questions: &[Q], preds: &[bool], golds: &[bool]) -> Result<MetricReport> {
    check_lengths(preds.len(), golds.len())?;
    check_lengths(questions.len(), golds.len())?;
    let mut groups: BTreeMap<&Q, (usize, usize, usize)> = BTreeMap::new();
    for ((q, &p), &g) in questions.iter().zip(preds).zip(golds) {
        let e = groups.entry(q).or_default();
        match (p, g) {
            (true, true) => e.0 += 1,
            (true, false) => e.1 += 1,
            (false, true) => e.2 += 1,
            (false, false) => {}
        }
    }
    let per: Vec<f64> = groups.values().map(|&(tp, fp, fn_)| f1_counts(tp, fp, fn_)).collect();
    let score = per.iter().sum::<f64>() / per.len() as f64;
    Ok(MetricReport::new("f1a", score, per.len()).with_per_example(per))
}

/// Unweighted mean of per-class F1 over every class seen on either side.
pub fn macro_f1<L: Ord>(preds: &[L], golds: &[L]) -> Result<MetricReport> {
    check_lengths(preds.len(), golds.len())?;
    let classes: BTreeSet<&L> = preds.iter().chain(golds).collect();
    let per: Vec<f64> = classes
        .iter()
        .map(|&c| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (p, g) in preds.iter().zip(golds) {
                match (p == c, g == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            f1_counts(tp, fp, fn_)
        })
        .collect();
    let score = per.iter().sum::<f64>() / per.len() as f64;
    Ok(MetricReport::new("macro_f1", score, preds.len()).with_per_example(per))
}
