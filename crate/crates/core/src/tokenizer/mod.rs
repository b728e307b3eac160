//! Subword vocabularies: character BPE, byte-level BPE and a unigram LM
//! segmenter, with a versioned line-oriented vocabulary file.
//!
//! Token ids are dense. Base symbols come first (bytes for BBPE, characters
//! for BPE, pieces for unigram), then merged tokens in merge order, then the
//! special tokens in the order they were requested. Special tokens are
//! surfaced as `<name>` and are only ever produced by [`Vocab::encode_with`]
//! when `parse_specials` is set.

mod bpe;
mod file;
mod pretok;
mod unigram;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use pretok::pretokenize;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("target size {target} is below the minimum {minimum} (base alphabet + specials)")]
    TargetTooSmall { target: usize, minimum: usize },
    #[error("corpus too small: only {achievable} tokens are reachable")]
    CorpusTooSmall { achievable: usize },
    #[error("special token `{0}` listed twice")]
    DuplicateSpecial(String),
    #[error("token sequence belongs to vocab {found:016x}, not {expected:016x}")]
    VocabMismatch { expected: u64, found: u64 },
    #[error("token id {id} out of range for vocab of size {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("vocab file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TokenizerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Bpe,
    Bbpe,
    Unigram,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Bpe => "bpe",
            Scheme::Bbpe => "bbpe",
            Scheme::Unigram => "unigram",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bpe" => Ok(Scheme::Bpe),
            "bbpe" => Ok(Scheme::Bbpe),
            "unigram" => Ok(Scheme::Unigram),
            other => Err(format!("unknown scheme `{other}` (bpe, bbpe, unigram)")),
        }
    }
}

pub const NUM_SENTINELS: usize = 100;

/// Names of the seven denoiser control tokens.
pub const DENOISER_TOKENS: [&str; 7] = ["LM", "SC1", "SC2", "SC3", "SC4", "SC5", "SC6"];

pub fn sentinel_name(k: usize) -> String {
    format!("sentinel_{k}")
}

/// Surface form of a special token.
pub fn special_surface(name: &str) -> String {
    format!("<{name}>")
}

/// The default special-token list: control tokens, then the 100 sentinels
/// so that sentinels occupy the top ids of the vocabulary.
pub fn standard_specials() -> Vec<String> {
    let mut out: Vec<String> = ["pad", "eos", "unk", "mask", "cls", "sep"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    out.extend(DENOISER_TOKENS.iter().map(|s| s.to_string()));
    out.extend((0..NUM_SENTINELS).map(sentinel_name));
    out
}

/// Token ids bound to the vocabulary that produced them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub vocab_id: u64,
}

impl TokenSeq {
    pub fn new(ids: Vec<u32>, vocab_id: u64) -> Self {
        TokenSeq { ids, vocab_id }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EncodeOptions {
    /// Map `<name>` occurrences in the text to their special ids.
    pub parse_specials: bool,
}

/// An immutable trained vocabulary.
#[derive(Debug, Clone)]
pub struct Vocab {
    scheme: Scheme,
    tokens: Vec<Vec<u8>>,
    merges: Vec<(u32, u32)>,
    // unigram log-probabilities, one per non-special token
    scores: Vec<f64>,
    specials: BTreeMap<String, u32>,
    base_len: usize,
    num_specials: usize,
    piece_ids: HashMap<Vec<u8>, u32>,
    merge_ranks: HashMap<(u32, u32), u32>,
    surfaces: HashMap<String, u32>,
    max_piece_chars: usize,
    id: u64,
}

impl Vocab {
    /// Assembles a vocabulary from its parts; specials are appended last.
    pub(crate) fn assemble(
        scheme: Scheme,
        mut tokens: Vec<Vec<u8>>,
        merges: Vec<(u32, u32)>,
        scores: Vec<f64>,
        specials: &[String],
    ) -> Result<Vocab> {
        let regular = tokens.len();
        let base_len = match scheme {
            Scheme::Bpe | Scheme::Bbpe => regular - merges.len(),
            Scheme::Unigram => regular,
        };
        let mut special_map = BTreeMap::new();
        for name in specials {
            let id = tokens.len() as u32;
            if special_map.insert(name.clone(), id).is_some() {
                return Err(TokenizerError::DuplicateSpecial(name.clone()));
            }
            tokens.push(special_surface(name).into_bytes());
        }
        let mut v = Vocab {
            scheme,
            tokens,
            merges,
            scores,
            specials: special_map,
            base_len,
            num_specials: specials.len(),
            piece_ids: HashMap::new(),
            merge_ranks: HashMap::new(),
            surfaces: HashMap::new(),
            max_piece_chars: 1,
            id: 0,
        };
        v.index();
        Ok(v)
    }

    fn index(&mut self) {
        let regular = self.tokens.len() - self.num_specials;
        self.piece_ids.clear();
        for (i, t) in self.tokens[..regular].iter().enumerate() {
            self.piece_ids.entry(t.clone()).or_insert(i as u32);
            let chars = String::from_utf8_lossy(t).chars().count();
            self.max_piece_chars = self.max_piece_chars.max(chars);
        }
        self.merge_ranks = self
            .merges
            .iter()
            .enumerate()
            .map(|(rank, &pair)| (pair, rank as u32))
            .collect();
        self.surfaces = self
            .specials
            .iter()
            .map(|(name, &id)| (special_surface(name), id))
            .collect();
        let digest = Sha256::digest(self.to_file_string().as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        self.id = u64::from_le_bytes(head);
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    /// Hash of the serialized vocabulary; binds [`TokenSeq`]s to it.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn tokens(&self) -> &[Vec<u8>] {
        &self.tokens
    }

    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn specials(&self) -> &BTreeMap<String, u32> {
        &self.specials
    }

    pub fn special(&self, name: &str) -> Option<u32> {
        self.specials.get(name).copied()
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) >= self.tokens.len() - self.num_specials && (id as usize) < self.tokens.len()
    }

    /// Name of a special id, without brackets.
    pub fn special_name(&self, id: u32) -> Option<&str> {
        if !self.is_special(id) {
            return None;
        }
        self.specials
            .iter()
            .find(|(_, &v)| v == id)
            .map(|(k, _)| k.as_str())
    }

    pub fn eos(&self) -> Option<u32> {
        self.special("eos")
    }

    pub fn mask(&self) -> Option<u32> {
        self.special("mask")
    }

    pub fn unk(&self) -> Option<u32> {
        self.special("unk")
    }

    pub fn sentinel(&self, k: usize) -> Option<u32> {
        self.special(&sentinel_name(k))
    }

    /// Number of consecutive sentinels `sentinel_0..` present.
    pub fn num_sentinels(&self) -> usize {
        (0..).take_while(|&k| self.sentinel(k).is_some()).count()
    }

    /// Ids that are not special tokens: `0..regular_len()`.
    pub fn regular_len(&self) -> usize {
        self.tokens.len() - self.num_specials
    }

    pub(crate) fn base_len(&self) -> usize {
        self.base_len
    }

    pub(crate) fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn encode(&self, text: &str) -> TokenSeq {
        self.encode_with(text, EncodeOptions::default())
    }

    pub fn encode_with(&self, text: &str, opts: EncodeOptions) -> TokenSeq {
        let mut ids = Vec::with_capacity(text.len() / 3 + 1);
        if opts.parse_specials {
            let mut rest = text;
            while let Some((start, end, id)) = self.find_special(rest) {
                self.encode_plain(&rest[..start], &mut ids);
                ids.push(id);
                rest = &rest[end..];
            }
            self.encode_plain(rest, &mut ids);
        } else {
            self.encode_plain(text, &mut ids);
        }
        TokenSeq::new(ids, self.id)
    }

    fn find_special(&self, text: &str) -> Option<(usize, usize, u32)> {
        let mut from = 0;
        while let Some(off) = text[from..].find('<') {
            let start = from + off;
            if let Some(close) = text[start..].find('>') {
                let end = start + close + 1;
                if let Some(&id) = self.surfaces.get(&text[start..end]) {
                    return Some((start, end, id));
                }
            }
            from = start + 1;
        }
        None
    }

    fn encode_plain(&self, text: &str, out: &mut Vec<u32>) {
        for chunk in pretokenize(text) {
            match self.scheme {
                Scheme::Bbpe => {
                    let symbols: Vec<u32> = chunk.bytes().map(u32::from).collect();
                    out.extend(bpe::apply_merges(symbols, self));
                }
                Scheme::Bpe => {
                    let unk = self.unk();
                    let mut symbols = Vec::with_capacity(chunk.len());
                    let mut buf = [0u8; 4];
                    for c in chunk.chars() {
                        match self.piece_ids.get(c.encode_utf8(&mut buf).as_bytes()) {
                            Some(&id) if (id as usize) < self.base_len => symbols.push(id),
                            _ => symbols.extend(unk),
                        }
                    }
                    out.extend(bpe::apply_merges(symbols, self));
                }
                Scheme::Unigram => unigram::viterbi(chunk, self, out),
            }
        }
    }

    pub(crate) fn piece_id(&self, bytes: &[u8]) -> Option<u32> {
        self.piece_ids.get(bytes).copied()
    }

    pub(crate) fn merge_rank(&self, pair: (u32, u32)) -> Option<u32> {
        self.merge_ranks.get(&pair).copied()
    }

    pub(crate) fn max_piece_chars(&self) -> usize {
        self.max_piece_chars
    }

    /// Concatenates token bytes; specials appear as `<name>`. Bytes that do
    /// not form valid UTF-8 decode to U+FFFD.
    pub fn decode(&self, seq: &TokenSeq) -> Result<String> {
        if seq.vocab_id != self.id {
            return Err(TokenizerError::VocabMismatch {
                expected: self.id,
                found: seq.vocab_id,
            });
        }
        let bytes = self.decode_bytes(&seq.ids)?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    /// Raw concatenated token bytes for `ids`.
    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut bytes = Vec::new();
        for &id in ids {
            let t = self.tokens.get(id as usize).ok_or(TokenizerError::IdOutOfRange {
                id,
                size: self.tokens.len(),
            })?;
            bytes.extend_from_slice(t);
        }
        Ok(bytes)
    }

    pub fn to_file_string(&self) -> String {
        file::write(self)
    }

    pub fn from_file_str(text: &str) -> Result<Vocab> {
        file::read(text)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Vocab> {
        Self::from_file_str(&std::fs::read_to_string(path)?)
    }
}

/// Trains a vocabulary of exactly `target_size` tokens (specials included).
///
/// BPE and BBPE learn greedy merges; ties in pair frequency go to the pair
/// whose `(left bytes, right bytes)` is lexicographically smallest. Unigram
/// seeds candidate pieces from substrings and alternates EM with pruning.
pub fn train_vocab<I>(texts: I, scheme: Scheme, target_size: usize, specials: &[String]) -> Result<Vocab>
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    let counts = pretok::count_chunks(texts);
    match scheme {
        Scheme::Bpe | Scheme::Bbpe => bpe::train(&counts, scheme, target_size, specials),
        Scheme::Unigram => unigram::train(&counts, target_size, specials),
    }
}
