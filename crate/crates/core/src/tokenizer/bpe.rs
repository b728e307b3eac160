//! Greedy pair-merge training and merge application for BPE and BBPE.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};

use super::{Result, Scheme, TokenizerError, Vocab};

type Pair = (u32, u32);

struct Candidate {
    count: u64,
    left: Vec<u8>,
    right: Vec<u8>,
    pair: Pair,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // max-heap: higher count first, then the lexicographically smaller pair
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

fn pairs_of(word: &[u32]) -> impl Iterator<Item = Pair> + '_ {
    word.windows(2).map(|w| (w[0], w[1]))
}

fn merge_word(word: &mut Vec<u32>, pair: Pair, new_id: u32) {
    let mut out = Vec::with_capacity(word.len());
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && word[i] == pair.0 && word[i + 1] == pair.1 {
            out.push(new_id);
            i += 2;
        } else {
            out.push(word[i]);
            i += 1;
        }
    }
    *word = out;
}

pub(super) fn train(
    counts: &[(String, u64)],
    scheme: Scheme,
    target_size: usize,
    specials: &[String],
) -> Result<Vocab> {
    let mut tokens: Vec<Vec<u8>> = Vec::new();
    let mut words: Vec<(Vec<u32>, u64)> = Vec::with_capacity(counts.len());
    match scheme {
        Scheme::Bbpe => {
            tokens.extend((0..=255u8).map(|b| vec![b]));
            for (chunk, n) in counts {
                words.push((chunk.bytes().map(u32::from).collect(), *n));
            }
        }
        Scheme::Bpe => {
            let alphabet: BTreeSet<char> = counts.iter().flat_map(|(c, _)| c.chars()).collect();
            let mut ids: HashMap<char, u32> = HashMap::new();
            for c in alphabet {
                ids.insert(c, tokens.len() as u32);
                tokens.push(c.to_string().into_bytes());
            }
            for (chunk, n) in counts {
                words.push((chunk.chars().map(|c| ids[&c]).collect(), *n));
            }
        }
        Scheme::Unigram => unreachable!("unigram is trained elsewhere"),
    }
    let minimum = tokens.len() + specials.len();
    if target_size < minimum {
        return Err(TokenizerError::TargetTooSmall {
            target: target_size,
            minimum,
        });
    }
    let wanted = target_size - minimum;

    let mut pair_counts: HashMap<Pair, u64> = HashMap::new();
    let mut where_seen: HashMap<Pair, HashSet<usize>> = HashMap::new();
    for (wi, (word, n)) in words.iter().enumerate() {
        for p in pairs_of(word) {
            *pair_counts.entry(p).or_default() += n;
            where_seen.entry(p).or_default().insert(wi);
        }
    }
    let mut heap: BinaryHeap<Candidate> = pair_counts
        .iter()
        .map(|(&pair, &count)| Candidate {
            count,
            left: tokens[pair.0 as usize].clone(),
            right: tokens[pair.1 as usize].clone(),
            pair,
        })
        .collect();

    let mut merges: Vec<Pair> = Vec::with_capacity(wanted);
    while merges.len() < wanted {
        let Some(best) = heap.pop() else {
            break;
        };
        let current = pair_counts.get(&best.pair).copied().unwrap_or(0);
        if current != best.count || current == 0 {
            continue;
        }
        let new_id = tokens.len() as u32;
        let mut bytes = best.left.clone();
        bytes.extend_from_slice(&best.right);
        tokens.push(bytes);
        merges.push(best.pair);

        let mut affected: Vec<usize> = where_seen
            .remove(&best.pair)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        affected.sort_unstable();
        let mut touched: HashSet<Pair> = HashSet::new();
        for wi in affected {
            let (word, n) = &mut words[wi];
            let n = *n;
            if !pairs_of(word).any(|p| p == best.pair) {
                continue;
            }
            for p in pairs_of(word) {
                if let Some(c) = pair_counts.get_mut(&p) {
                    *c -= n;
                }
                touched.insert(p);
            }
            merge_word(word, best.pair, new_id);
            for p in pairs_of(word) {
                *pair_counts.entry(p).or_default() += n;
                where_seen.entry(p).or_default().insert(wi);
                touched.insert(p);
            }
        }
        pair_counts.remove(&best.pair);
        let mut touched: Vec<Pair> = touched.into_iter().collect();
        touched.sort_unstable();
        for p in touched {
            match pair_counts.get(&p).copied() {
                Some(0) => {
                    pair_counts.remove(&p);
                }
                Some(count) => heap.push(Candidate {
                    count,
                    left: tokens[p.0 as usize].clone(),
                    right: tokens[p.1 as usize].clone(),
                    pair: p,
                }),
                None => {}
            }
        }
    }
    if merges.len() < wanted {
        return Err(TokenizerError::CorpusTooSmall {
            achievable: tokens.len() + specials.len(),
        });
    }
    Vocab::assemble(scheme, tokens, merges, Vec::new(), specials)
}

/// Repeatedly merges the adjacent pair with the lowest merge rank.
pub(super) fn apply_merges(mut symbols: Vec<u32>, vocab: &Vocab) -> Vec<u32> {
    let base = vocab.base_len() as u32;
    loop {
        let mut best: Option<(u32, usize)> = None;
        for (i, w) in symbols.windows(2).enumerate() {
            if let Some(rank) = vocab.merge_rank((w[0], w[1])) {
                if best.is_none_or(|(r, _)| rank < r) {
                    best = Some((rank, i));
                }
            }
        }
        let Some((rank, _)) = best else {
            return symbols;
        };
        let pair = vocab.merges()[rank as usize];
        merge_word(&mut symbols, pair, base + rank);
    }
}
