use std::collections::BTreeMap;

use super::{check_lengths, MetricError, MetricReport, Result};

pub(crate) fn ngram_counts<T: Ord>(tokens: &[T], n: usize) -> BTreeMap<&[T], u64> {
    let mut m = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return m;
    }
    for w in tokens.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

fn check_refs<G>(golds: &[Vec<G>]) -> Result<()> {
    match golds.iter().position(Vec::is_empty) {
        Some(i) => Err(MetricError::NoGold(i)),
        None => Ok(()),
    }
}

/// Sufficient statistics for corpus BLEU.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    /// Clipped n-gram matches for n = 1..4.
    pub matches: [u64; 4],
    /// Hypothesis n-gram totals for n = 1..4.
    pub totals: [u64; 4],
    pub hyp_len: u64,
    /// Length of the reference closest to the hypothesis (shorter on ties).
    pub ref_len: u64,
}

impl BleuStats {
    pub fn sentence<T: Ord>(hyp: &[T], refs: &[&[T]]) -> BleuStats {
        let mut stats = BleuStats {
            hyp_len: hyp.len() as u64,
            ..Default::default()
        };
        let closest = refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&len| ((len as i64 - hyp.len() as i64).abs(), len))
            .unwrap_or(0);
        stats.ref_len = closest as u64;
        for n in 1..=4 {
            let hyp_counts = ngram_counts(hyp, n);
            let mut max_ref: BTreeMap<&[T], u64> = BTreeMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, c) in hyp_counts {
                stats.totals[n - 1] += c;
                stats.matches[n - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
            }
        }
        stats
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..4 {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// Geometric mean of the unigram precision and add-one smoothed
    /// 2- to 4-gram precisions, times the brevity penalty. Zero when there
    /// is no unigram match.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches[0] == 0 {
            return 0.0;
        }
        let mut log_sum = (self.matches[0] as f64 / self.totals[0] as f64).ln();
        for n in 1..4 {
            log_sum += ((self.matches[n] + 1) as f64 / (self.totals[n] + 1) as f64).ln();
        }
        let geo = (log_sum / 4.0).exp();
        let bp = if self.hyp_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        };
        bp * geo
    }
}

fn tokens(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Corpus-level BLEU over whitespace tokens.
pub fn bleu<P: AsRef<str>, G: AsRef<str>>(preds: &[P], golds: &[Vec<G>]) -> Result<MetricReport> {
    check_lengths(preds.len(), golds.len())?;
    check_refs(golds)?;
    let mut total = BleuStats::default();
    let mut per = Vec::with_capacity(preds.len());
    for (p, gs) in preds.iter().zip(golds) {
        let hyp = tokens(p.as_ref());
        let refs: Vec<Vec<&str>> = gs.iter().map(|g| tokens(g.as_ref())).collect();
        let ref_slices: Vec<&[&str]> = refs.iter().map(Vec::as_slice).collect();
        let s = BleuStats::sentence(&hyp, &ref_slices);
        per.push(s.score());
        total.add(&s);
    }
    Ok(MetricReport::new("bleu", total.score(), preds.len()).with_per_example(per))
}

pub const CHRF_ORDER: usize = 6;

#[derive(Debug, Clone, Copy, Default)]
struct ChrfStats {
    matches: [u64; CHRF_ORDER],
    hyp: [u64; CHRF_ORDER],
    refs: [u64; CHRF_ORDER],
}

impl ChrfStats {
    fn sentence(hyp: &[char], reference: &[char]) -> ChrfStats {
        let mut s = ChrfStats::default();
        for n in 1..=CHRF_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            s.hyp[n - 1] = h.values().sum();
            s.refs[n - 1] = r.values().sum();
            s.matches[n - 1] = h.iter().map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0))).sum();
        }
        s
    }

    fn add(&mut self, o: &ChrfStats) {
        for n in 0..CHRF_ORDER {
            self.matches[n] += o.matches[n];
            self.hyp[n] += o.hyp[n];
            self.refs[n] += o.refs[n];
        }
    }

    /// Precision and recall are averaged over the orders both sides reach,
    /// then combined with β = 1.
    fn score(&self) -> f64 {
        let (mut p, mut r, mut orders) = (0.0, 0.0, 0u32);
        for n in 0..CHRF_ORDER {
            if self.hyp[n] > 0 && self.refs[n] > 0 {
                p += self.matches[n] as f64 / self.hyp[n] as f64;
                r += self.matches[n] as f64 / self.refs[n] as f64;
                orders += 1;
            }
        }
        if orders == 0 {
            let both_empty = self.hyp[0] == 0 && self.refs[0] == 0;
            return if both_empty { 100.0 } else { 0.0 };
        }
        let p = p / orders as f64;
        let r = r / orders as f64;
        if p + r == 0.0 {
            0.0
        } else {
            100.0 * 2.0 * p * r / (p + r)
        }
    }
}

fn chars_no_space(s: &str) -> Vec<char> {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Character n-gram F-score (orders 1..6, whitespace ignored) in
/// `[0, 100]`. Each example uses its best-scoring reference; corpus
/// statistics are summed before scoring.
pub fn chrf<P: AsRef<str>, G: AsRef<str>>(preds: &[P], golds: &[Vec<G>]) -> Result<MetricReport> {
    check_lengths(preds.len(), golds.len())?;
    check_refs(golds)?;
    let mut total = ChrfStats::default();
    let mut per = Vec::with_capacity(preds.len());
    for (p, gs) in preds.iter().zip(golds) {
        let hyp = chars_no_space(p.as_ref());
        let mut best: Option<(f64, ChrfStats)> = None;
        for g in gs {
            let s = ChrfStats::sentence(&hyp, &chars_no_space(g.as_ref()));
            let score = s.score();
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, s));
            }
        }
        let (score, stats) = best.expect("references checked non-empty");
        per.push(score);
        total.add(&stats);
    }
    Ok(MetricReport::new("chrf", total.score(), preds.len()).with_per_example(per))
}

pub(crate) fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub(crate) fn rouge_l_sentence<T: PartialEq>(hyp: &[T], reference: &[T]) -> f64 {
    if hyp.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let lcs = lcs_len(hyp, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / hyp.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// LCS-based F1 over whitespace tokens, best reference per example,
/// averaged over examples.
pub fn rouge_l<P: AsRef<str>, G: AsRef<str>>(preds: &[P], golds: &[Vec<G>]) -> Result<MetricReport> {
    check_lengths(preds.len(), golds.len())?;
    check_refs(golds)?;
    let per: Vec<f64> = preds
        .iter()
        .zip(golds)
        .map(|(p, gs)| {
            let hyp = tokens(p.as_ref());
            gs.iter().map(|g| rouge_l_sentence(&hyp, &tokens(g.as_ref()))).fold(0.0, f64::max)
        })
        .collect();
    let score = per.iter().sum::<f64>() / per.len() as f64;
    Ok(MetricReport::new("rougeL", score, per.len()).with_per_example(per))
}

fn meteor_sentence(hyp: &[&str], reference: &[&str]) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return (hyp.is_empty() && reference.is_empty()) as u8 as f64;
    }
    // exact matches, each hypothesis token taking the first free reference token
    let mut used = vec![false; reference.len()];
    let mut align: Vec<(usize, usize)> = Vec::new();
    for (i, h) in hyp.iter().enumerate() {
        if let Some(j) = (0..reference.len()).find(|&j| !used[j] && reference[j] == *h) {
            used[j] = true;
            align.push((i, j));
        }
    }
    let m = align.len();
    if m == 0 {
        return 0.0;
    }
    let mut chunks = 1;
    for w in align.windows(2) {
        if !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1) {
            chunks += 1;
        }
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    fmean * (1.0 - penalty)
}

/// METEOR with exact unigram matching only: recall-weighted harmonic mean
/// times a fragmentation penalty. Best reference per example, averaged.
pub fn meteor_lite<P: AsRef<str>, G: AsRef<str>>(preds: &[P], golds: &[Vec<G>]) -> Result<MetricReport> {
    check_lengths(preds.len(), golds.len())?;
    check_refs(golds)?;
    let per: Vec<f64> = preds
        .iter()
        .zip(golds)
        .map(|(p, gs)| {
            let hyp = tokens(p.as_ref());
            gs.iter().map(|g| meteor_sentence(&hyp, &tokens(g.as_ref()))).fold(0.0, f64::max)
        })
        .collect();
    let score = per.iter().sum::<f64>() / per.len() as f64;
    Ok(MetricReport::new("meteor", score, per.len()).with_per_example(per))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one<'a>(p: &'a str, r: &'a str) -> (Vec<&'a str>, Vec<Vec<&'a str>>) {
        (vec![p], vec![vec![r]])
    }

    #[test]
    fn identical_texts_score_perfectly() {
        let (p, r) = one("мама мыла раму сегодня утром", "мама мыла раму сегодня утром");
        assert_eq!(bleu(&p, &r).unwrap().score, 1.0);
        assert_eq!(chrf(&p, &r).unwrap().score, 100.0);
        assert_eq!(rouge_l(&p, &r).unwrap().score, 1.0);
        assert!((meteor_lite(&p, &r).unwrap().score - (1.0 - 0.5 / 125.0)).abs() < 1e-12);
    }

    #[test]
    fn disjoint_texts_score_zero() {
        let (p, r) = one("a b c", "x y z");
        assert_eq!(bleu(&p, &r).unwrap().score, 0.0);
        assert_eq!(chrf(&p, &r).unwrap().score, 0.0);
        assert_eq!(rouge_l(&p, &r).unwrap().score, 0.0);
        assert_eq!(meteor_lite(&p, &r).unwrap().score, 0.0);
    }

    #[test]
    fn repeated_tokens_are_clipped() {
        let s = BleuStats::sentence(&["the", "the", "the"], &[&["the", "cat"]]);
        assert_eq!(s.matches, [1, 0, 0, 0]);
        assert_eq!(s.totals, [3, 2, 1, 0]);
        assert_eq!(s.ref_len, 2);
    }

    #[test]
    fn brevity_penalty_applies_to_short_hypotheses() {
        let s = BleuStats::sentence(&["a", "b"], &[&["a", "b", "c", "d"]]);
        let geo = ((1.0f64).ln() + (2.0f64 / 2.0).ln() + (1.0f64).ln() + (1.0f64).ln()) / 4.0;
        assert!((s.score() - geo.exp() * (1.0f64 - 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn closest_reference_prefers_shorter_on_ties() {
        let s = BleuStats::sentence(&["a", "b", "c"], &[&["a", "b", "c", "d"], &["a", "b"]]);
        assert_eq!(s.ref_len, 2);
    }

    #[test]
    fn lcs_small_cases() {
        assert_eq!(lcs_len(&[1, 2, 3, 4], &[2, 4, 3]), 2);
        assert_eq!(lcs_len::<u8>(&[], &[1]), 0);
        let f = rouge_l_sentence(&["a", "b", "c"], &["a", "c"]);
        assert!((f - 0.8).abs() < 1e-12);
    }

    #[test]
    fn meteor_fragmentation() {
        // two chunks of matches in reversed order
        let s = meteor_sentence(&["c", "d", "a", "b"], &["a", "b", "c", "d"]);
        let want = 1.0 * (1.0 - 0.5 * (2.0f64 / 4.0).powi(3));
        assert!((s - want).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths_are_errors() {
        assert!(bleu(&["a"], &Vec::<Vec<&str>>::new()).is_err());
        assert!(chrf(&["a"], &[Vec::<&str>::new()]).is_err());
    }
}
