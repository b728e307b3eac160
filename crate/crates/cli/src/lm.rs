use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Subcommand;
use log::info;
use rayon::prelude::*;

use denoiserforge::toylm::{
    beam_search, fit_threshold, penlp, perplexity, zero_shot_classify, BeamConfig, PenLpConfig, ScoreMode,
    TrainConfig, TrainingPairs,
};
use denoiserforge::{TokenSeq, ToyModel, Vocab};

use crate::evaluate::{number, output, tsv_field};
use crate::{files, usage};

#[derive(Debug, Subcommand)]
pub enum ToyCommand {
    /// Fit a model to an example file or a token file.
    Train {
        /// Example file written by an objective subcommand.
        #[arg(long)]
        examples: Option<PathBuf>,
        /// Token file; every adjacent pair is used.
        #[arg(long)]
        tokens: Option<PathBuf>,
        /// Vocabulary file (required with --examples).
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Weight of the bigram table against the unigram.
        #[arg(long, default_value_t = 0.9)]
        lambda: f64,
        #[arg(long, default_value_t = 20.0)]
        lr: f64,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Scale each context row's step by its inverse share of the data.
        #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "true")]
        per_context: bool,
        /// Per-epoch loss curve, `epoch<TAB>loss`.
        #[arg(long)]
        loss_out: Option<PathBuf>,
    },
    /// Perplexity of each input line.
    Ppl {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lowest-perplexity label per instance of a rendered prompt file.
    Zeroshot {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// `id<TAB>label<TAB>text` rows as written by `render`.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Score only the label continuation.
        #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
        continuation: bool,
    },
    /// Length-penalized log-probability of each line (`text[<TAB>label]`).
    Penlp {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        alpha: f64,
        #[arg(long, default_value_t = 5.0)]
        pivot: f64,
    },
    /// Cross-validated MCC threshold over `score<TAB>label` lines.
    FitThreshold {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
    },
    /// Beam-search continuation of each prompt line.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        beams: usize,
        #[arg(long, default_value_t = 1.05)]
        rep_penalty: f64,
        #[arg(long, default_value_t = 32)]
        max_len: usize,
    },
}

fn load(model: &Path, vocab: &Path) -> Result<(ToyModel, Vocab)> {
    let vocab = files::load_vocab(vocab)?;
    let model = ToyModel::load(model, &vocab).with_context(|| format!("cannot load model {}", model.display()))?;
    Ok((model, vocab))
}

fn parse_label(s: &str, line: usize) -> Result<bool> {
    match s.trim() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        other => bail!("line {line}: label `{other}` is not 0/1"),
    }
}

pub fn run(cmd: ToyCommand, seed: u64) -> Result<()> {
    match cmd {
        ToyCommand::Train {
            examples,
            tokens,
            vocab,
            out,
            lambda,
            lr,
            epochs,
            batch_size,
            per_context,
            loss_out,
        } => {
            let (vocab, pairs) = match (examples, tokens) {
                (Some(ex), None) => {
                    let path = vocab.ok_or_else(|| usage("--examples needs --vocab"))?;
                    let vocab = files::load_vocab(&path)?;
                    let examples = files::read_example_file(&ex, vocab.id())?;
                    let pairs = TrainingPairs::from_examples(&examples);
                    (vocab, pairs)
                }
                (None, Some(tok)) => {
                    let (vocab, seqs) = files::read_tokens(&tok)?;
                    (vocab, TrainingPairs::from_sequences(&seqs))
                }
                _ => return Err(usage("give exactly one of --examples and --tokens")),
            };
            if !(0.0..=1.0).contains(&lambda) {
                return Err(usage(format!("lambda {lambda} outside [0, 1]")));
            }
            if lr <= 0.0 {
                return Err(usage(format!("learning rate must be positive, got {lr}")));
            }
            let mut model = ToyModel::for_vocab(&vocab, lambda)?;
            let cfg = TrainConfig {
                lr,
                epochs,
                batch_size,
                seed,
                per_context,
                backtrack: true,
            };
            let curve = model.train(&pairs, &cfg)?;
            info!("trained on {} pairs for {} epochs", pairs.total(), epochs);
            if let Some(p) = loss_out {
                let mut w = files::create(&p)?;
                for (i, l) in curve.iter().enumerate() {
                    writeln!(w, "{}\t{}", i + 1, l)?;
                }
                w.flush()?;
            }
            model.save(&out).with_context(|| format!("cannot write {}", out.display()))?;
            match curve.last() {
                Some(l) => println!("loss={l}"),
                None => println!("loss={}", model.loss(&pairs)?),
            }
            Ok(())
        }
        ToyCommand::Ppl { model, vocab, input, out } => {
            let (model, vocab) = load(&model, &vocab)?;
            let lines = files::read_lines(&input)?;
            let scores: Vec<Result<f64>> = lines
                .par_iter()
                .enumerate()
                .map(|(i, l)| perplexity(&model, &vocab.encode(l)).with_context(|| format!("line {}", i + 1)))
                .collect();
            let mut w = output(out.as_deref())?;
            for s in scores {
                writeln!(w, "{}", s?)?;
            }
            w.flush()?;
            Ok(())
        }
        ToyCommand::Zeroshot {
            model,
            vocab,
            input,
            out,
            continuation,
        } => {
            let (model, vocab) = load(&model, &vocab)?;
            let groups = read_prompt_groups(&input)?;
            let mode = if continuation { ScoreMode::Continuation } else { ScoreMode::FullPrompt };
            let picks: Vec<Result<String>> = groups
                .par_iter()
                .map(|(id, cands)| {
                    zero_shot_classify(&model, &scoring_candidates(cands), &vocab, mode)
                        .with_context(|| format!("instance {id}"))
                })
                .collect();
            let mut w = output(out.as_deref())?;
            for ((id, _), pick) in groups.iter().zip(picks) {
                writeln!(w, "{}\t{}", id, pick?)?;
            }
            w.flush()?;
            Ok(())
        }
        ToyCommand::Penlp {
            model,
            vocab,
            input,
            out,
            alpha,
            pivot,
        } => {
            let (model, vocab) = load(&model, &vocab)?;
            let cfg = PenLpConfig { alpha, pivot };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let lines = files::read_lines(&input)?;
            let rows: Vec<Result<String>> = lines
                .par_iter()
                .enumerate()
                .map(|(i, l)| {
                    let (text, label) = match l.rsplit_once('\t') {
                        Some((t, lab)) => (t, Some(lab)),
                        None => (l.as_str(), None),
                    };
                    let s = penlp(&model, &vocab.encode(text), &cfg).with_context(|| format!("line {}", i + 1))?;
                    Ok(match label {
                        Some(lab) => format!("{s}\t{lab}"),
                        None => format!("{s}"),
                    })
                })
                .collect();
            let mut w = output(out.as_deref())?;
            for r in rows {
                writeln!(w, "{}", r?)?;
            }
            w.flush()?;
            Ok(())
        }
        ToyCommand::FitThreshold { input, folds } => {
            let mut scores = Vec::new();
            for (i, l) in files::read_lines(&input)?.iter().enumerate() {
                if l.trim().is_empty() {
                    continue;
                }
                let (s, lab) = l
                    .split_once('\t')
                    .with_context(|| format!("line {}: expected score<TAB>label", i + 1))?;
                let s: f64 = s.trim().parse().with_context(|| format!("line {}: bad score", i + 1))?;
                scores.push((s, parse_label(lab, i + 1)?));
            }
            let fit = fit_threshold(&scores, folds, seed)?;
            println!("threshold={} mcc={} folds={}", number(fit.threshold), number(fit.mcc), folds);
            Ok(())
        }
        ToyCommand::Generate {
            model,
            vocab,
            input,
            out,
            beams,
            rep_penalty,
            max_len,
        } => {
            let (model, vocab) = load(&model, &vocab)?;
            let cfg = BeamConfig {
                beams,
                rep_penalty,
                max_len,
                eos: vocab.eos(),
            };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let lines = files::read_lines(&input)?;
            let outs: Vec<Result<String>> = lines
                .par_iter()
                .map(|l| {
                    let ids = beam_search(&model, &vocab.encode(l), &cfg)?;
                    Ok(vocab.decode(&TokenSeq::new(ids, vocab.id()))?)
                })
                .collect();
            let mut w = output(out.as_deref())?;
            for o in outs {
                writeln!(w, "{}", tsv_field(o?.trim()))?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

type Group = (String, Vec<(String, String)>);

/// Consecutive rows sharing an id form one instance.
fn read_prompt_groups(path: &Path) -> Result<Vec<Group>> {
    let mut groups: Vec<Group> = Vec::new();
    for (i, line) in files::read_lines(path)?.into_iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut cols = line.splitn(3, '\t');
        let (Some(id), Some(label), Some(text)) = (cols.next(), cols.next(), cols.next()) else {
            bail!("{} line {}: expected id<TAB>label<TAB>text", path.display(), i + 1);
        };
        match groups.last_mut() {
            Some((last, cands)) if last == id => cands.push((label.to_string(), text.to_string())),
            _ => groups.push((id.to_string(), vec![(label.to_string(), text.to_string())])),
        }
    }
    Ok(groups)
}

/// A text shared by every label is scored as `text label`.
fn scoring_candidates(cands: &[(String, String)]) -> Vec<(String, String)> {
    let shared = cands.len() > 1 && cands.iter().all(|c| c.1 == cands[0].1);
    if shared {
        cands.iter().map(|(l, t)| (l.clone(), format!("{t} {l}"))).collect()
    } else {
        cands.to_vec()
    }
}
