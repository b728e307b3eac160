mod oracle;

use denoiserforge::metrics::{bleu, chrf, rouge_l, sari_components};
use oracle::{all_sequences, render};

#[test]
fn pair_metrics_match_brute_force_up_to_length_four() {
    let seqs = all_sequences(4, 4);
    let texts: Vec<String> = seqs.iter().map(|s| render(s)).collect();
    for (h, ht) in seqs.iter().zip(&texts) {
        for (r, rt) in seqs.iter().zip(&texts) {
            let preds = [ht.as_str()];
            let refs = [vec![rt.as_str()]];
            assert_eq!(bleu(&preds, &refs).unwrap().score, oracle::bleu(h, r), "bleu {ht:?} {rt:?}");
            assert_eq!(chrf(&preds, &refs).unwrap().score, oracle::chrf(h, r), "chrf {ht:?} {rt:?}");
            assert_eq!(rouge_l(&preds, &refs).unwrap().score, oracle::rouge_l(h, r), "rouge {ht:?} {rt:?}");
        }
    }
}

#[test]
fn sari_matches_brute_force_on_short_triples() {
    let seqs = all_sequences(3, 3);
    for s in &seqs {
        for p in &seqs {
            for r in &seqs {
                let got = sari_components(&render(s), &render(p), &[render(r)]).sari;
                assert_eq!(got, oracle::sari(s, p, std::slice::from_ref(r)), "{s:?} {p:?} {r:?}");
            }
        }
    }
}

#[test]
fn sari_with_two_references_matches_brute_force() {
    let seqs = all_sequences(3, 3);
    let refs_a = &seqs[..seqs.len() / 2];
    for s in seqs.iter().step_by(3) {
        for p in &seqs {
            for (i, r1) in refs_a.iter().enumerate() {
                let r2 = &seqs[(i * 7) % seqs.len()];
                let got = sari_components(&render(s), &render(p), &[render(r1), render(r2)]).sari;
                let want = oracle::sari(s, p, &[r1.clone(), r2.clone()]);
                assert!((got - want).abs() < 1e-9, "{s:?} {p:?} {r1:?} {r2:?}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn degenerate_repetition_is_clipped() {
    let want = oracle::bleu(&[0, 0, 0], &[0, 1]);
    assert_eq!(bleu(&["a a a"], &[vec!["a b"]]).unwrap().score, want);
    assert!(want > 0.0 && want < 1.0);
}
