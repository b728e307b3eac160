use std::collections::BTreeMap;

use super::{ObjectiveError, ObjectiveExample, ObjectiveKind, Result};
use crate::tokenizer::{TokenSeq, Vocab};

/// Streaming causal-LM packer: documents are joined with `eos` and cut into
/// blocks of exactly `ctx_len` tokens. Each target is its input shifted left
/// by one (`ctx_len − 1` tokens). The trailing partial block is dropped.
pub struct PackClm<I> {
    docs: I,
    ctx_len: usize,
    eos: u32,
    vocab_id: u64,
    buf: Vec<u32>,
    dropped: usize,
    done: bool,
}

pub fn pack_clm<I>(docs: I, ctx_len: usize, vocab: &Vocab) -> Result<PackClm<I::IntoIter>>
where
    I: IntoIterator<Item = TokenSeq>,
{
    if ctx_len < 2 {
        return Err(ObjectiveError::ContextTooShort(ctx_len));
    }
    let eos = vocab.eos().ok_or_else(|| ObjectiveError::MissingSpecial("eos".into()))?;
    Ok(PackClm {
        docs: docs.into_iter(),
        ctx_len,
        eos,
        vocab_id: vocab.id(),
        buf: Vec::with_capacity(2 * ctx_len),
        dropped: 0,
        done: false,
    })
}

impl<I> PackClm<I> {
    /// Tokens discarded in the final partial block; meaningful once the
    /// iterator is exhausted.
    pub fn dropped(&self) -> usize {
        self.dropped
    }
}

impl<I: Iterator<Item = TokenSeq>> Iterator for PackClm<I> {
    type Item = ObjectiveExample;

    fn next(&mut self) -> Option<ObjectiveExample> {
        while self.buf.len() < self.ctx_len {
            if self.done {
                self.dropped = self.buf.len();
                return None;
            }
            match self.docs.next() {
                Some(doc) => {
                    self.buf.extend_from_slice(&doc.ids);
                    self.buf.push(self.eos);
                }
                None => self.done = true,
            }
        }
        let rest = self.buf.split_off(self.ctx_len);
        let input = std::mem::replace(&mut self.buf, rest);
        let target = input[1..].to_vec();
        Some(ObjectiveExample {
            objective: ObjectiveKind::Clm,
            input_ids: TokenSeq::new(input, self.vocab_id),
            target_ids: TokenSeq::new(target, self.vocab_id),
            meta: BTreeMap::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{standard_specials, train_vocab, Scheme};

    fn vocab() -> Vocab {
        train_vocab(["ab"], Scheme::Bbpe, 256 + 113, &standard_specials()).unwrap()
    }

    fn doc(v: &Vocab, len: usize) -> TokenSeq {
        TokenSeq::new((0..len).map(|i| (i % 256) as u32).collect(), v.id())
    }

    #[test]
    fn three_docs_make_two_blocks() {
        let v = vocab();
        // 1000 + 600 + 447 tokens plus three separators = 2050
        let docs = vec![doc(&v, 1000), doc(&v, 600), doc(&v, 447)];
        let mut packer = pack_clm(docs, 1024, &v).unwrap();
        let out: Vec<_> = packer.by_ref().collect();
        assert_eq!(out.len(), 2);
        assert_eq!(packer.dropped(), 2);
        for ex in &out {
            assert_eq!(ex.input_ids.len(), 1024);
            for i in 0..ex.target_ids.len() {
                assert_eq!(ex.target_ids.ids[i], ex.input_ids.ids[i + 1]);
            }
        }
        assert_eq!(out[0].input_ids.ids[1000], v.eos().unwrap());
    }

    #[test]
    fn short_doc_yields_nothing() {
        let v = vocab();
        let mut packer = pack_clm(vec![doc(&v, 10)], 64, &v).unwrap();
        assert!(packer.next().is_none());
        assert_eq!(packer.dropped(), 11);
    }

    #[test]
    fn context_must_be_at_least_two() {
        let v = vocab();
        assert!(pack_clm(Vec::new(), 1, &v).is_err());
    }
}
