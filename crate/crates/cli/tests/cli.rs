use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const FORGE: &str = env!("CARGO_BIN_EXE_forge");

fn forge(dir: &Path, args: &[&str]) -> Output {
    Command::new(FORGE).current_dir(dir).args(args).output().expect("forge runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = forge(dir, args);
    assert!(
        out.status.success(),
        "forge {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Small two-source corpus with repeated sentences.
fn corpus(dir: &Path) {
    let words = ["кошка", "сидела", "на", "окне", "и", "смотрела", "вниз", "собака", "спала", "рядом"];
    let mut a = String::new();
    let mut b = String::new();
    for i in 0..120 {
        let sent = |k: usize| -> String {
            let mut s: Vec<&str> = (0..6).map(|j| words[(i * 7 + j * 3 + k) % words.len()]).collect();
            let first = s[0].to_string();
            let mut c = first.chars();
            let cap: String = c.next().unwrap().to_uppercase().chain(c).collect();
            s[0] = &cap;
            format!("{}.", s.join(" "))
        };
        let doc = format!("{} {} {}\n\n", sent(0), sent(1), sent(2));
        if i % 3 == 0 {
            b.push_str(&doc);
        } else {
            a.push_str(&doc);
        }
    }
    fs::write(dir.join("a.txt"), a).unwrap();
    fs::write(dir.join("b.txt"), b).unwrap();
    fs::write(dir.join("manifest.tsv"), "a.txt\twikipedia\t2\nb.txt\tnews\t1\n").unwrap();
}

fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    ok(d, &["ingest", "--manifest", "manifest.tsv", "--out", "docs.jsonl", "--seed", "3"]);
    ok(d, &["train-vocab", "--in", "docs.jsonl", "--size", "420", "--out", "vocab.txt"]);
    ok(d, &["encode", "--vocab", "vocab.txt", "--in", "docs.jsonl", "--out", "toks.bin"]);
    dir
}

#[test]
fn co2_hand_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["co2", "--pue", "1.3", "--kwh", "1000", "--intensity", "300"]);
    assert_eq!(out, "co2_kg=390\n");
    let out = ok(
        dir.path(),
        &["score", "--metric", "co2", "--pue", "1.3", "--kwh", "1000", "--intensity", "300"],
    );
    assert_eq!(out, "metric=co2 score=390 n=1\n");
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(forge(d, &["bogus"]).status.code(), Some(1));
    assert_eq!(forge(d, &["mod", "--out", "x.bin"]).status.code(), Some(1));
    assert_eq!(forge(d, &["score", "--metric", "nope", "--pred", "p"]).status.code(), Some(1));
    assert_eq!(
        forge(d, &["mod", "--in", "missing.bin", "--out", "x.bin"]).status.code(),
        Some(2)
    );
    fs::write(d.join("bad.bin"), b"not a token file").unwrap();
    let out = forge(d, &["mod", "--in", "bad.bin", "--out", "x.bin"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn ingest_reports_skips_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("a.txt"), "один два.\n\nодин два.\n\n\u{7}\n\nтри.\n").unwrap();
    fs::write(d.join("m.tsv"), "a.txt\tbooks\t1\n").unwrap();
    let out = forge(d, &["ingest", "--manifest", "m.tsv", "--out", "docs.jsonl"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stderr).trim(), "skipped=1 deduped=1");
    assert_eq!(fs::read_to_string(d.join("docs.jsonl")).unwrap().lines().count(), 2);
}

#[test]
fn render_danetqa_t5_style() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("data.jsonl"),
        "{\"idx\": 7, \"question\": \"Есть ли у кошки хвост?\", \"passage\": \"У кошки есть хвост.\", \"label\": true}\n",
    )
    .unwrap();
    ok(
        d,
        &["render", "--task", "danetqa", "--family", "t5_style", "--in", "data.jsonl", "--out", "p.tsv"],
    );
    let tsv = fs::read_to_string(d.join("p.tsv")).unwrap();
    assert_eq!(
        tsv,
        "7\tno\tdanetqa question: Есть ли у кошки хвост? text: У кошки есть хвост.\n\
         7\tyes\tdanetqa question: Есть ли у кошки хвост? text: У кошки есть хвост.\n"
    );
}

#[test]
fn objectives_are_deterministic_across_thread_counts() {
    let dir = prepared();
    let d = dir.path();
    for obj in ["mlm", "clm", "sp", "rtd", "mod"] {
        ok(d, &["examples", "--objective", obj, "--in", "toks.bin", "--out", "one.bin", "--seed", "1", "--ctx-len", "64"]);
        ok(
            d,
            &[obj, "--in", "toks.bin", "--out", "four.bin", "--seed", "1", "--threads", "4", "--ctx-len", "64"],
        );
        let one = fs::read(d.join("one.bin")).unwrap();
        assert!(!one.is_empty(), "{obj}");
        assert_eq!(one, fs::read(d.join("four.bin")).unwrap(), "{obj}");
    }
    ok(d, &["nsp", "--in", "docs.jsonl", "--vocab", "vocab.txt", "--out", "nsp.bin", "--seed", "2"]);
    assert!(fs::metadata(d.join("nsp.bin")).unwrap().len() > 0);
    assert_eq!(
        forge(d, &["nsp", "--in", "docs.jsonl", "--out", "nsp.bin"]).status.code(),
        Some(1)
    );
}

#[test]
fn config_file_supplies_flags() {
    let dir = prepared();
    let d = dir.path();
    fs::write(d.join("run.conf"), "seed = 5\ndenoisers = SC1,SC4\n").unwrap();
    ok(d, &["mod", "--in", "toks.bin", "--out", "a.bin", "--config", "run.conf"]);
    ok(d, &["mod", "--in", "toks.bin", "--out", "b.bin", "--seed", "5", "--denoisers", "SC1,SC4"]);
    ok(d, &["mod", "--in", "toks.bin", "--out", "c.bin", "--seed", "6", "--config", "run.conf"]);
    let a = fs::read(d.join("a.bin")).unwrap();
    assert_eq!(a, fs::read(d.join("b.bin")).unwrap());
    assert_ne!(a, fs::read(d.join("c.bin")).unwrap());
}

#[test]
fn toy_model_commands() {
    let dir = prepared();
    let d = dir.path();
    ok(d, &["mod", "--in", "toks.bin", "--out", "ex.bin", "--seed", "1"]);
    let out = ok(
        d,
        &["toylm", "train", "--examples", "ex.bin", "--vocab", "vocab.txt", "--out", "m.bin", "--epochs", "5", "--loss-out", "loss.tsv"],
    );
    assert!(out.starts_with("loss="));
    let curve: Vec<f64> = fs::read_to_string(d.join("loss.tsv"))
        .unwrap()
        .lines()
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(curve.len(), 5);
    assert!(curve[4] < curve[0]);

    fs::write(d.join("lines.txt"), "Кошка сидела на окне.\nСобака спала рядом.\n").unwrap();
    let ppl = ok(d, &["toylm", "ppl", "--model", "m.bin", "--vocab", "vocab.txt", "--in", "lines.txt"]);
    assert_eq!(ppl.lines().count(), 2);
    assert!(ppl.lines().all(|l| l.parse::<f64>().unwrap() > 1.0));

    let gen = ok(
        d,
        &["toylm", "generate", "--model", "m.bin", "--vocab", "vocab.txt", "--in", "lines.txt", "--max-len", "8"],
    );
    assert_eq!(gen.lines().count(), 2);

    fs::write(d.join("prompts.tsv"), "0\tno\tКошка сидела\n0\tyes\tКошка сидела\n1\ta\tх\n1\tb\tКошка спала\n").unwrap();
    let picks = ok(d, &["toylm", "zeroshot", "--model", "m.bin", "--vocab", "vocab.txt", "--in", "prompts.tsv"]);
    assert_eq!(picks.lines().count(), 2);
    assert!(picks.starts_with("0\t"));

    fs::write(d.join("acc.txt"), "Кошка сидела на окне.\t1\nвниз вниз вниз вниз.\t0\n").unwrap();
    let scores = ok(d, &["toylm", "penlp", "--model", "m.bin", "--vocab", "vocab.txt", "--in", "acc.txt"]);
    assert!(scores.lines().all(|l| l.split('\t').count() == 2));

    let mut lines = String::new();
    for i in 0..40 {
        lines.push_str(&format!("{}\t{}\n", if i % 2 == 0 { -5.0 - i as f64 * 0.1 } else { -25.0 - i as f64 * 0.1 }, (i % 2 == 0) as u8));
    }
    fs::write(d.join("scores.tsv"), lines).unwrap();
    let fit = ok(d, &["toylm", "fit-threshold", "--in", "scores.tsv", "--seed", "5"]);
    assert!(fit.contains("mcc=1 "), "{fit}");
}

#[test]
fn score_line_format() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("p.txt"), "a b c d\nx y\n").unwrap();
    fs::write(d.join("g.txt"), "a b c d\tq\nx y\n").unwrap();
    let out = ok(d, &["score", "--metric", "bleu", "--pred", "p.txt", "--gold", "g.txt"]);
    assert_eq!(out, "metric=bleu score=1 n=2\n");
    let out = ok(d, &["score", "--metric", "em", "--pred", "p.txt", "--gold", "g.txt"]);
    assert_eq!(out, "metric=em score=1 n=2\n");
    fs::write(d.join("j.txt"), "1\t0.5\t1\n0\t1\t1\n").unwrap();
    let out = ok(d, &["score", "--metric", "joint", "--pred", "j.txt"]);
    assert_eq!(out, "metric=joint score=25 n=2\n");
    fs::write(d.join("l1.txt"), "1\n0\n1\n0\n").unwrap();
    let out = ok(d, &["score", "--metric", "mcc", "--pred", "l1.txt", "--gold", "l1.txt"]);
    assert_eq!(out, "metric=mcc score=1 n=4\n");
}
