//! Brute-force reference implementations of the n-gram and LCS metrics.
//!
//! Everything here is deliberately naive: n-grams are found by scanning all
//! windows, counts by rescanning, and the LCS by enumerating subsequences.
#![allow(dead_code)]

pub type Seq = Vec<u8>;

/// Distinct n-grams in order of first appearance.
fn distinct(seq: &[u8], n: usize) -> Vec<Seq> {
    let mut out: Vec<Seq> = Vec::new();
    if n == 0 || seq.len() < n {
        return out;
    }
    for i in 0..=seq.len() - n {
        let g = seq[i..i + n].to_vec();
        if !out.contains(&g) {
            out.push(g);
        }
    }
    out
}

fn occurrences(seq: &[u8], g: &[u8]) -> u64 {
    if seq.len() < g.len() {
        return 0;
    }
    (0..=seq.len() - g.len()).filter(|&i| &seq[i..i + g.len()] == g).count() as u64
}

fn windows(seq: &[u8], n: usize) -> u64 {
    (seq.len() + 1).saturating_sub(n) as u64
}

pub fn bleu(hyp: &[u8], reference: &[u8]) -> f64 {
    let mut matches = [0u64; 4];
    let mut totals = [0u64; 4];
    for n in 1..=4 {
        totals[n - 1] = windows(hyp, n);
        for g in distinct(hyp, n) {
            matches[n - 1] += occurrences(hyp, &g).min(occurrences(reference, &g));
        }
    }
    let c = hyp.len();
    let r = reference.len();
    if c == 0 || matches[0] == 0 {
        return 0.0;
    }
    let mut log_sum = (matches[0] as f64 / totals[0] as f64).ln();
    for n in 1..4 {
        log_sum += ((matches[n] + 1) as f64 / (totals[n] + 1) as f64).ln();
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (log_sum / 4.0).exp()
}

pub fn chrf(hyp: &[u8], reference: &[u8]) -> f64 {
    let (mut p, mut r, mut orders) = (0.0, 0.0, 0u32);
    for n in 1..=6 {
        let h = windows(hyp, n);
        let t = windows(reference, n);
        if h == 0 || t == 0 {
            continue;
        }
        let m: u64 = distinct(hyp, n)
            .iter()
            .map(|g| occurrences(hyp, g).min(occurrences(reference, g)))
            .sum();
        p += m as f64 / h as f64;
        r += m as f64 / t as f64;
        orders += 1;
    }
    if orders == 0 {
        return if hyp.is_empty() && reference.is_empty() { 100.0 } else { 0.0 };
    }
    let p = p / orders as f64;
    let r = r / orders as f64;
    if p + r == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * p * r / (p + r)
    }
}

fn is_subsequence(needle: &[u8], hay: &[u8]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|x| it.any(|y| y == x))
}

pub fn lcs(a: &[u8], b: &[u8]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let sub: Seq = (0..short.len()).filter(|&i| mask >> i & 1 == 1).map(|i| short[i]).collect();
        if sub.len() > best && is_subsequence(&sub, long) {
            best = sub.len();
        }
    }
    best
}

pub fn rouge_l(hyp: &[u8], reference: &[u8]) -> f64 {
    if hyp.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let l = lcs(hyp, reference);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / hyp.len() as f64;
    let r = l as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Weighted counter: (gram, value) pairs with positive values.
type Counter = Vec<(Seq, f64)>;

fn get(c: &Counter, g: &[u8]) -> f64 {
    c.iter().find(|(k, _)| k == g).map(|(_, v)| *v).unwrap_or(0.0)
}

fn keys(a: &Counter, b: &Counter) -> Vec<Seq> {
    let mut out: Vec<Seq> = a.iter().map(|(k, _)| k.clone()).collect();
    for (k, _) in b {
        if !out.contains(k) {
            out.push(k.clone());
        }
    }
    out
}

fn intersect(a: &Counter, b: &Counter) -> Counter {
    keys(a, b)
        .into_iter()
        .map(|k| {
            let v = get(a, &k).min(get(b, &k));
            (k, v)
        })
        .filter(|(_, v)| *v > 0.0)
        .collect()
}

fn subtract(a: &Counter, b: &Counter) -> Counter {
    keys(a, b)
        .into_iter()
        .map(|k| {
            let v = get(a, &k) - get(b, &k);
            (k, v)
        })
        .filter(|(_, v)| *v > 0.0)
        .collect()
}

fn total(c: &Counter) -> f64 {
    c.iter().map(|(_, v)| v).sum()
}

fn fbeta(tp: f64, selected: f64, relevant: f64, beta: f64) -> f64 {
    let precision = if selected > 0.0 { tp / selected } else { 1.0 };
    if beta == 0.0 {
        return precision;
    }
    let recall = if relevant > 0.0 { tp / relevant } else { 1.0 };
    if precision > 0.0 && recall > 0.0 {
        let b2 = beta * beta;
        (1.0 + b2) * precision * recall / (b2 * precision + recall)
    } else {
        0.0
    }
}

fn set_counter(seq: &[u8], n: usize) -> Counter {
    distinct(seq, n).into_iter().map(|g| (g, 1.0)).collect()
}

/// SARI with one or more references, in `[0, 100]`.
pub fn sari(source: &[u8], pred: &[u8], refs: &[Seq]) -> f64 {
    let (mut keep, mut add, mut del) = (0.0, 0.0, 0.0);
    for n in 1..=4 {
        let s = set_counter(source, n);
        let p = set_counter(pred, n);
        let mut weighted: Counter = Vec::new();
        let mut nonempty = 0.0;
        for r in refs {
            let rc = set_counter(r, n);
            if rc.is_empty() {
                continue;
            }
            nonempty += 1.0;
            for (g, _) in rc {
                match weighted.iter_mut().find(|(k, _)| *k == g) {
                    Some((_, v)) => *v += 1.0,
                    None => weighted.push((g, 1.0)),
                }
            }
        }
        let targets: Counter = weighted.iter().map(|(g, _)| (g.clone(), 1.0)).collect();
        for (_, v) in weighted.iter_mut() {
            *v /= nonempty;
        }

        let sp = intersect(&s, &p);
        let st = intersect(&s, &weighted);
        keep += fbeta(total(&intersect(&sp, &st)), total(&sp), total(&st), 1.0);

        let s_not_p = subtract(&s, &p);
        let s_not_t = subtract(&s, &weighted);
        del += fbeta(total(&intersect(&s_not_p, &s_not_t)), total(&s_not_p), total(&s_not_t), 0.0);

        let added = subtract(&p, &s);
        add += fbeta(total(&intersect(&added, &targets)), total(&added), total(&subtract(&targets, &s)), 1.0);
    }
    let keep = keep / 4.0;
    let add = add / 4.0;
    let del = del / 4.0;
    100.0 * ((keep + add + del) / 3.0)
}

/// All sequences over `alphabet` symbols of length at most `max_len`.
pub fn all_sequences(alphabet: u8, max_len: usize) -> Vec<Seq> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for a in 0..alphabet {
                let mut t: Seq = s.clone();
                t.push(a);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Sequences whose symbols first appear in the order 0, 1, 2, …; every
/// sequence equals one of these up to renaming symbols.
pub fn canonical_sequences(alphabet: u8, max_len: usize) -> Vec<Seq> {
    all_sequences(alphabet, max_len)
        .into_iter()
        .filter(|s| {
            let mut next = 0;
            s.iter().all(|&x| {
                if x < next {
                    true
                } else if x == next {
                    next += 1;
                    true
                } else {
                    false
                }
            })
        })
        .collect()
}

/// Space-separated symbols `a`, `b`, `c`, ….
pub fn render(seq: &[u8]) -> String {
    seq.iter().map(|&x| ((b'a' + x) as char).to_string()).collect::<Vec<_>>().join(" ")
}
