use std::collections::BTreeMap;

use rand::Rng as _;

use super::{ObjectiveError, ObjectiveExample, ObjectiveKind, Result, IGNORE_ID};
use crate::corpus::Document;
use crate::rng::{self, Rng};
use crate::tokenizer::{TokenSeq, Vocab};

pub const DEFAULT_MLM_PROBABILITY: f64 = 0.15;
pub const DEFAULT_RTD_PROBABILITY: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NspLabel {
    IsNext,
    NotNext,
}

impl NspLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            NspLabel::IsNext => "IsNext",
            NspLabel::NotNext => "NotNext",
        }
    }
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(ObjectiveError::BadProbability(p))
    }
}

fn positions_string(selected: &[bool]) -> String {
    selected.iter().map(|&s| if s { '1' } else { '0' }).collect()
}

/// Applies the 80/10/10 rule in place. Returns the target and selection mask.
fn mask_in_place(ids: &mut [u32], p: f64, vocab: &Vocab, rng: &mut Rng) -> Result<(Vec<u32>, Vec<bool>)> {
    let mask = vocab.mask().ok_or_else(|| ObjectiveError::MissingSpecial("mask".into()))?;
    let regular = vocab.regular_len() as u32;
    let mut target = vec![IGNORE_ID; ids.len()];
    let mut selected = vec![false; ids.len()];
    for (i, id) in ids.iter_mut().enumerate() {
        if vocab.is_special(*id) || rng.gen::<f64>() >= p {
            continue;
        }
        selected[i] = true;
        target[i] = *id;
        let roll = rng.gen::<f64>();
        if roll < 0.8 {
            *id = mask;
        } else if roll < 0.9 {
            *id = rng.gen_range(0..regular);
        }
    }
    Ok((target, selected))
}

/// Masked-LM example. Targets carry the original id at selected positions
/// and [`IGNORE_ID`] elsewhere.
pub fn make_mlm(seq: &TokenSeq, p_mask: f64, vocab: &Vocab, seed: u64) -> Result<ObjectiveExample> {
    check_probability(p_mask)?;
    if seq.ids.iter().all(|&id| vocab.is_special(id)) {
        return Err(ObjectiveError::OnlySpecials);
    }
    let mut rng = rng::seeded(seed);
    let mut ids = seq.ids.clone();
    let (target, selected) = mask_in_place(&mut ids, p_mask, vocab, &mut rng)?;
    let mut meta = BTreeMap::new();
    meta.insert("positions".to_string(), positions_string(&selected));
    Ok(ObjectiveExample {
        objective: ObjectiveKind::Mlm,
        input_ids: TokenSeq::new(ids, seq.vocab_id),
        target_ids: TokenSeq::new(target, seq.vocab_id),
        meta,
    })
}

/// Generator input for replaced-token detection: selected positions become
/// the mask token, the target holds the original sequence, and meta
/// `positions` is a 0/1 string marking the masked locations.
pub fn make_rtd_input(seq: &TokenSeq, p_mask: f64, vocab: &Vocab, seed: u64) -> Result<ObjectiveExample> {
    check_probability(p_mask)?;
    if seq.ids.iter().all(|&id| vocab.is_special(id)) {
        return Err(ObjectiveError::OnlySpecials);
    }
    let mask = vocab.mask().ok_or_else(|| ObjectiveError::MissingSpecial("mask".into()))?;
    let mut rng = rng::seeded(seed);
    let mut ids = seq.ids.clone();
    let mut selected = vec![false; ids.len()];
    for (i, id) in ids.iter_mut().enumerate() {
        if !vocab.is_special(*id) && rng.gen::<f64>() < p_mask {
            *id = mask;
            selected[i] = true;
        }
    }
    let mut meta = BTreeMap::new();
    meta.insert("positions".to_string(), positions_string(&selected));
    Ok(ObjectiveExample {
        objective: ObjectiveKind::RtdInput,
        input_ids: TokenSeq::new(ids, seq.vocab_id),
        target_ids: seq.clone(),
        meta,
    })
}

/// Splits on `.`, `!`, `?` or `…` followed by whitespace.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((_, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?' | '…') {
            if let Some(&(j, next)) = chars.peek() {
                if next.is_whitespace() {
                    let s = text[start..j].trim();
                    if !s.is_empty() {
                        out.push(s);
                    }
                    start = j;
                }
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Next-sentence-prediction pair with MLM at the default rate on top.
pub fn make_nsp_pair(doc_a: &Document, doc_b: &Document, vocab: &Vocab, seed: u64) -> Result<ObjectiveExample> {
    make_nsp_pair_with(doc_a, doc_b, vocab, seed, None, DEFAULT_MLM_PROBABILITY)
}

/// As [`make_nsp_pair`], optionally forcing the branch.
///
/// Layout is `<cls> A <sep> B <sep>`; meta `nsp_label` holds the label.
pub fn make_nsp_pair_with(
    doc_a: &Document,
    doc_b: &Document,
    vocab: &Vocab,
    seed: u64,
    branch: Option<NspLabel>,
    p_mask: f64,
) -> Result<ObjectiveExample> {
    check_probability(p_mask)?;
    let cls = vocab.special("cls").ok_or_else(|| ObjectiveError::MissingSpecial("cls".into()))?;
    let sep = vocab.special("sep").ok_or_else(|| ObjectiveError::MissingSpecial("sep".into()))?;
    let sents_a = split_sentences(&doc_a.text);
    if sents_a.len() < 2 {
        return Err(ObjectiveError::TooFewSentences(sents_a.len()));
    }
    let sents_b = split_sentences(&doc_b.text);
    if sents_b.is_empty() {
        return Err(ObjectiveError::TooFewSentences(0));
    }

    let mut rng = rng::seeded(seed);
    let label = match branch {
        Some(l) => {
            // keep the stream aligned with the unforced case
            let _ = rng.gen::<f64>();
            l
        }
        None if rng.gen::<f64>() < 0.5 => NspLabel::IsNext,
        None => NspLabel::NotNext,
    };
    let (a, b) = match label {
        NspLabel::IsNext => {
            let i = rng.gen_range(0..sents_a.len() - 1);
            (sents_a[i], sents_a[i + 1])
        }
        NspLabel::NotNext => {
            let i = rng.gen_range(0..sents_a.len());
            (sents_a[i], sents_b[rng.gen_range(0..sents_b.len())])
        }
    };

    let mut ids = vec![cls];
    ids.extend(vocab.encode(a).ids);
    ids.push(sep);
    ids.extend(vocab.encode(b).ids);
    ids.push(sep);
    if ids.len() == 3 {
        return Err(ObjectiveError::OnlySpecials);
    }
    let (target, selected) = mask_in_place(&mut ids, p_mask, vocab, &mut rng)?;
    let mut meta = BTreeMap::new();
    meta.insert("nsp_label".to_string(), label.as_str().to_string());
    meta.insert("positions".to_string(), positions_string(&selected));
    Ok(ObjectiveExample {
        objective: ObjectiveKind::MlmNsp,
        input_ids: TokenSeq::new(ids, vocab.id()),
        target_ids: TokenSeq::new(target, vocab.id()),
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Domain;
    use crate::tokenizer::{standard_specials, train_vocab, Scheme};

    fn vocab() -> Vocab {
        train_vocab(["abcdef"], Scheme::Bbpe, 256 + 113, &standard_specials()).unwrap()
    }

    fn batch(v: &Vocab, len: usize) -> TokenSeq {
        TokenSeq::new((0..len).map(|i| (i % 200) as u32 + 32).collect(), v.id())
    }

    #[test]
    fn mlm_rate_on_ten_thousand_tokens() {
        let v = vocab();
        let ex = make_mlm(&batch(&v, 10_000), 0.15, &v, 0).unwrap();
        let selected = ex.target_ids.ids.iter().filter(|&&t| t != IGNORE_ID).count();
        let frac = selected as f64 / 10_000.0;
        assert!((0.14..=0.16).contains(&frac), "{frac}");
    }

    #[test]
    fn mlm_split_is_eighty_ten_ten() {
        let v = vocab();
        let s = batch(&v, 200_000);
        let ex = make_mlm(&s, 0.5, &v, 1).unwrap();
        let mask = v.mask().unwrap();
        let (mut masked, mut kept, mut total) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..s.len() {
            if ex.target_ids.ids[i] == IGNORE_ID {
                assert_eq!(ex.input_ids.ids[i], s.ids[i]);
                continue;
            }
            total += 1.0;
            if ex.input_ids.ids[i] == mask {
                masked += 1.0;
            } else if ex.input_ids.ids[i] == s.ids[i] {
                kept += 1.0;
            }
        }
        assert!((masked / total - 0.8).abs() < 0.01);
        // unchanged includes random draws that hit the original id
        assert!((kept / total - 0.1).abs() < 0.01);
    }

    #[test]
    fn tiny_probability_masks_nothing() {
        let v = vocab();
        let ex = make_mlm(&batch(&v, 50), 1e-9, &v, 3).unwrap();
        assert!(ex.target_ids.ids.iter().all(|&t| t == IGNORE_ID));
    }

    #[test]
    fn mlm_is_deterministic() {
        let v = vocab();
        let s = batch(&v, 20);
        assert_eq!(make_mlm(&s, 0.15, &v, 7).unwrap(), make_mlm(&s, 0.15, &v, 7).unwrap());
    }

    #[test]
    fn specials_only_is_an_error() {
        let v = vocab();
        let s = TokenSeq::new(vec![v.eos().unwrap(); 4], v.id());
        assert!(matches!(make_mlm(&s, 0.15, &v, 0), Err(ObjectiveError::OnlySpecials)));
        assert!(matches!(make_rtd_input(&s, 0.25, &v, 0), Err(ObjectiveError::OnlySpecials)));
        assert!(make_mlm(&batch(&v, 4), 1.0, &v, 0).is_err());
    }

    #[test]
    fn rtd_rate_and_positions() {
        let v = vocab();
        let s = batch(&v, 10_000);
        let ex = make_rtd_input(&s, 0.25, &v, 0).unwrap();
        let mask = v.mask().unwrap();
        let positions = ex.meta("positions").unwrap();
        let mut count = 0;
        for (i, c) in positions.chars().enumerate() {
            assert_eq!(c == '1', ex.input_ids.ids[i] == mask);
            count += (c == '1') as usize;
        }
        let frac = count as f64 / 10_000.0;
        assert!((0.235..=0.265).contains(&frac), "{frac}");
        assert_eq!(ex.target_ids, s);
        assert_eq!(ex, make_rtd_input(&s, 0.25, &v, 0).unwrap());
    }

    #[test]
    fn sentences_split_on_final_punctuation() {
        assert_eq!(split_sentences("Один. Два! Три? Четыре… пять"), vec!["Один.", "Два!", "Три?", "Четыре…", "пять"]);
        assert_eq!(split_sentences("v1.2 is out."), vec!["v1.2 is out."]);
    }

    fn doc(text: &str) -> Document {
        Document::new(text, Domain::Wikipedia).unwrap()
    }

    #[test]
    fn forced_branches() {
        let v = vocab();
        let a = doc("aa. bb.");
        let b = doc("cc. dd. ee.");
        let ex = make_nsp_pair_with(&a, &b, &v, 0, Some(NspLabel::IsNext), 1e-9).unwrap();
        let cls = v.special("cls").unwrap();
        let sep = v.special("sep").unwrap();
        let mut want = vec![cls];
        want.extend(v.encode("aa.").ids);
        want.push(sep);
        want.extend(v.encode("bb.").ids);
        want.push(sep);
        assert_eq!(ex.input_ids.ids, want);
        assert_eq!(ex.meta("nsp_label"), Some("IsNext"));

        let ex = make_nsp_pair_with(&a, &b, &v, 0, Some(NspLabel::NotNext), 1e-9).unwrap();
        assert_eq!(ex.meta("nsp_label"), Some("NotNext"));
        let text = v.decode(&ex.input_ids).unwrap();
        assert!(text.starts_with("<cls>aa.<sep>") || text.starts_with("<cls>bb.<sep>"), "{text}");
        let tail = text.split("<sep>").nth(1).unwrap();
        assert!(["cc.", "dd.", "ee."].contains(&tail), "{tail}");
    }

    #[test]
    fn one_sentence_document_is_rejected() {
        let v = vocab();
        let a = doc("just one");
        assert!(matches!(
            make_nsp_pair(&a, &a, &v, 0),
            Err(ObjectiveError::TooFewSentences(1))
        ));
    }

    #[test]
    fn is_next_fraction_is_half() {
        let v = vocab();
        let a = doc("aa. bb. cc.");
        let b = doc("dd. ee.");
        let is_next = (0..10_000u64)
            .filter(|&i| {
                let ex = make_nsp_pair(&a, &b, &v, rng::derive_seed(3, i)).unwrap();
                ex.meta("nsp_label") == Some("IsNext")
            })
            .count();
        let frac = is_next as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.015, "{frac}");
    }
}
