//! Unigram LM segmentation trained with EM and frequency pruning.

use std::collections::{BTreeSet, HashMap};

use super::{Result, Scheme, TokenizerError, Vocab};

const MAX_PIECE_CHARS: usize = 16;
const EM_ROUNDS: usize = 2;
const PRUNE_KEEP: f64 = 0.8;
const SMOOTHING: f64 = 0.01;

fn logsumexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Char-boundary byte offsets of `s`, including `s.len()`.
fn boundaries(s: &str) -> Vec<usize> {
    let mut b: Vec<usize> = s.char_indices().map(|(i, _)| i).collect();
    b.push(s.len());
    b
}

struct Lattice {
    // (start char, end char, piece index)
    edges: Vec<(usize, usize, usize)>,
    n: usize,
    freq: f64,
}

fn build_lattices(counts: &[(String, u64)], index: &HashMap<&str, usize>) -> Vec<Lattice> {
    counts
        .iter()
        .map(|(chunk, f)| {
            let b = boundaries(chunk);
            let n = b.len() - 1;
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..=(i + MAX_PIECE_CHARS).min(n) {
                    if let Some(&p) = index.get(&chunk[b[i]..b[j]]) {
                        edges.push((i, j, p));
                    }
                }
            }
            Lattice {
                edges,
                n,
                freq: *f as f64,
            }
        })
        .collect()
}

fn expected_counts(lattices: &[Lattice], scores: &[f64]) -> Vec<f64> {
    let mut counts = vec![0.0; scores.len()];
    for lat in lattices {
        let mut alpha = vec![f64::NEG_INFINITY; lat.n + 1];
        let mut beta = vec![f64::NEG_INFINITY; lat.n + 1];
        alpha[0] = 0.0;
        beta[lat.n] = 0.0;
        // edges are sorted by start
        for &(i, j, p) in &lat.edges {
            alpha[j] = logsumexp(alpha[j], alpha[i] + scores[p]);
        }
        for &(i, j, p) in lat.edges.iter().rev() {
            beta[i] = logsumexp(beta[i], beta[j] + scores[p]);
        }
        let z = alpha[lat.n];
        if !z.is_finite() {
            continue;
        }
        for &(i, j, p) in &lat.edges {
            let post = (alpha[i] + scores[p] + beta[j] - z).exp();
            counts[p] += post * lat.freq;
        }
    }
    counts
}

fn to_scores(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + SMOOTHING * counts.len() as f64;
    counts.iter().map(|c| ((c + SMOOTHING) / total).ln()).collect()
}

pub(super) fn train(counts: &[(String, u64)], target_size: usize, specials: &[String]) -> Result<Vocab> {
    let alphabet: BTreeSet<char> = counts.iter().flat_map(|(c, _)| c.chars()).collect();
    let minimum = alphabet.len() + specials.len();
    if target_size < minimum {
        return Err(TokenizerError::TargetTooSmall {
            target: target_size,
            minimum,
        });
    }
    let target_pieces = target_size - specials.len();

    let mut substrings: HashMap<&str, u64> = HashMap::new();
    for (chunk, f) in counts {
        let b = boundaries(chunk);
        let n = b.len() - 1;
        for i in 0..n {
            for j in (i + 2)..=(i + MAX_PIECE_CHARS).min(n) {
                *substrings.entry(&chunk[b[i]..b[j]]).or_default() += f;
            }
        }
    }
    let mut candidates: Vec<(&str, u64)> = substrings.into_iter().filter(|&(_, c)| c >= 2).collect();
    let achievable = alphabet.len() + candidates.len();
    if achievable < target_pieces {
        return Err(TokenizerError::CorpusTooSmall {
            achievable: achievable + specials.len(),
        });
    }
    // frequency x length, as a proxy for how much text a piece explains
    candidates.sort_unstable_by(|a, b| {
        let sa = a.1 * a.0.chars().count() as u64;
        let sb = b.1 * b.0.chars().count() as u64;
        sb.cmp(&sa).then_with(|| a.0.as_bytes().cmp(b.0.as_bytes()))
    });
    let seed_size = (target_pieces * 4).max(1000);
    candidates.truncate(seed_size.saturating_sub(alphabet.len()));

    let char_strings: Vec<String> = alphabet.iter().map(|c| c.to_string()).collect();
    let n_chars = char_strings.len();
    let mut pieces: Vec<String> = char_strings;
    pieces.extend(candidates.iter().map(|(s, _)| s.to_string()));
    let mut init = vec![1.0; n_chars];
    init.extend(candidates.iter().map(|&(_, c)| c as f64));
    let mut scores = to_scores(&init);

    loop {
        let index: HashMap<&str, usize> = pieces.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        let lattices = build_lattices(counts, &index);
        let mut expected = Vec::new();
        for _ in 0..EM_ROUNDS {
            expected = expected_counts(&lattices, &scores);
            scores = to_scores(&expected);
        }
        if pieces.len() <= target_pieces {
            break;
        }
        let keep = ((pieces.len() as f64 * PRUNE_KEEP) as usize).max(target_pieces);
        let mut order: Vec<usize> = (n_chars..pieces.len()).collect();
        order.sort_by(|&a, &b| {
            expected[b]
                .total_cmp(&expected[a])
                .then_with(|| pieces[a].as_bytes().cmp(pieces[b].as_bytes()))
        });
        order.truncate(keep - n_chars);
        order.sort_unstable();
        let mut next_pieces: Vec<String> = pieces[..n_chars].to_vec();
        let mut next_scores: Vec<f64> = scores[..n_chars].to_vec();
        for i in order {
            next_pieces.push(std::mem::take(&mut pieces[i]));
            next_scores.push(scores[i]);
        }
        pieces = next_pieces;
        scores = next_scores;
    }

    let mut multi: Vec<usize> = (n_chars..pieces.len()).collect();
    multi.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| pieces[a].as_bytes().cmp(pieces[b].as_bytes()))
    });
    let order: Vec<usize> = (0..n_chars).chain(multi).collect();
    let tokens: Vec<Vec<u8>> = order.iter().map(|&i| pieces[i].clone().into_bytes()).collect();
    let final_scores: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    Vocab::assemble(Scheme::Unigram, tokens, Vec::new(), final_scores, specials)
}

/// Best-scoring segmentation of one chunk. Characters without a piece map to
/// `unk` (or are dropped when the vocabulary has none).
pub(super) fn viterbi(chunk: &str, vocab: &Vocab, out: &mut Vec<u32>) {
    let b = boundaries(chunk);
    let n = b.len() - 1;
    if n == 0 {
        return;
    }
    let scores = vocab.scores();
    let unk_score = scores.iter().copied().fold(0.0f64, f64::min) - 10.0;
    let max_len = vocab.max_piece_chars();
    let mut best = vec![f64::NEG_INFINITY; n + 1];
    // (previous position, token id or None for unknown)
    let mut back: Vec<(usize, Option<u32>)> = vec![(0, None); n + 1];
    best[0] = 0.0;
    for i in 0..n {
        if best[i] == f64::NEG_INFINITY {
            continue;
        }
        let mut single_known = false;
        for j in (i + 1)..=(i + max_len).min(n) {
            if let Some(id) = vocab.piece_id(chunk[b[i]..b[j]].as_bytes()) {
                if j == i + 1 {
                    single_known = true;
                }
                let s = best[i] + scores[id as usize];
                if s > best[j] {
                    best[j] = s;
                    back[j] = (i, Some(id));
                }
            }
        }
        if !single_known {
            let s = best[i] + unk_score;
            if s > best[i + 1] {
                best[i + 1] = s;
                back[i + 1] = (i, None);
            }
        }
    }
    let mut path = Vec::new();
    let mut j = n;
    while j > 0 {
        let (i, id) = back[j];
        match id {
            Some(id) => path.push(id),
            None => path.extend(vocab.unk()),
        }
        j = i;
    }
    path.reverse();
    out.extend(path);
}
