use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use log::info;
use rayon::prelude::*;

use denoiserforge::corpus::{self, CorpusManifest};
use denoiserforge::objectives::{
    fred_t5_denoisers, make_mlm, make_nsp_pair_with, make_rtd_input, mod_sample_with, pack_clm, span_corrupt,
    DenoiserSpec, MixtureOptions, ObjectiveError, ObjectiveExample, ObjectiveKind, SpanMean, DEFAULT_MLM_PROBABILITY,
    DEFAULT_RTD_PROBABILITY,
};
use denoiserforge::rng::derive_seed;
use denoiserforge::tokenizer::{standard_specials, train_vocab as train, Scheme};
use denoiserforge::TokenSeq;

use crate::{files, usage, ObjArgs};

pub fn ingest(manifest: &Path, out: &Path, seed: u64) -> Result<()> {
    let manifest = CorpusManifest::load(manifest)?;
    let mut stream = corpus::ingest(&manifest, seed)?;
    let mut docs = Vec::new();
    for doc in stream.by_ref() {
        docs.push(doc?);
    }
    eprintln!("{}", stream.report());
    info!("ingested {} documents from {} bytes", docs.len(), manifest.total_bytes());
    files::write_docs(out, &docs)
}

pub fn train_vocab(input: &Path, scheme: &str, size: usize, out: &Path) -> Result<()> {
    let scheme = Scheme::from_str(scheme).map_err(usage)?;
    let docs = files::read_docs(input)?;
    let vocab = train(docs.iter().map(|d| d.text.as_str()), scheme, size, &standard_specials())?;
    info!("trained {} vocabulary of {} tokens, id {:016x}", scheme, vocab.size(), vocab.id());
    vocab.save(out).with_context(|| format!("cannot write {}", out.display()))?;
    Ok(())
}

pub fn encode(vocab: &Path, input: &Path, out: &Path) -> Result<()> {
    let vocab = files::load_vocab(vocab)?;
    let docs = files::read_docs(input)?;
    let seqs: Vec<TokenSeq> = docs.par_iter().map(|d| vocab.encode(&d.text)).collect();
    info!("encoded {} documents into {} tokens", seqs.len(), seqs.iter().map(TokenSeq::len).sum::<usize>());
    files::write_tokens(out, &vocab, &seqs)
}

fn parse_mean(s: &str) -> Result<SpanMean> {
    if s.eq_ignore_ascii_case("L/4") {
        return Ok(SpanMean::QuarterOfInput);
    }
    s.parse::<f64>()
        .map(SpanMean::Tokens)
        .map_err(|_| usage(format!("bad mean span `{s}` (a number or L/4)")))
}

fn builtin(name: &str) -> Option<DenoiserSpec> {
    fred_t5_denoisers()
        .into_iter()
        .find(|d| d.control_token.eq_ignore_ascii_case(name))
}

fn parse_mixture(list: &str) -> Result<Vec<DenoiserSpec>> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        let spec = match parts.as_slice() {
            [name] => builtin(name).ok_or_else(|| usage(format!("unknown denoiser `{name}`")))?,
            [name, mean, rate] | [name, mean, rate, _] => {
                let rate: f64 = rate.parse().map_err(|_| usage(format!("bad rate in `{item}`")))?;
                let min = match parts.get(3) {
                    Some(m) => m.parse().map_err(|_| usage(format!("bad min spans in `{item}`")))?,
                    None => 1,
                };
                DenoiserSpec::new(name, parse_mean(mean)?, rate, min).map_err(|e| usage(e.to_string()))?
            }
            _ => return Err(usage(format!("bad denoiser `{item}` (NAME or NAME:mean:rate[:min])"))),
        };
        out.push(spec);
    }
    if out.is_empty() {
        return Err(usage("empty denoiser list"));
    }
    Ok(out)
}

fn single_spec(args: &ObjArgs) -> Result<DenoiserSpec> {
    if let Some(name) = &args.denoiser {
        let mut spec = builtin(name).ok_or_else(|| usage(format!("unknown denoiser `{name}`")))?;
        spec.min_spans = args.min_spans.max(1);
        return Ok(spec);
    }
    let mean = parse_mean(args.mean.as_deref().unwrap_or("3"))?;
    DenoiserSpec::new("sp", mean, args.rate.unwrap_or(0.15), args.min_spans).map_err(|e| usage(e.to_string()))
}

fn probability(p: Option<f64>, default: f64) -> Result<f64> {
    let p = p.unwrap_or(default);
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(usage(format!("probability {p} outside (0, 1)")))
    }
}

/// Inputs an objective cannot use; the example is dropped.
fn skippable(e: &ObjectiveError) -> bool {
    matches!(
        e,
        ObjectiveError::TooShort { .. }
            | ObjectiveError::Unresolvable { .. }
            | ObjectiveError::OnlySpecials
            | ObjectiveError::TooFewSentences(_)
    )
}

fn collect(results: Vec<Result<ObjectiveExample, ObjectiveError>>) -> Result<(Vec<ObjectiveExample>, usize)> {
    let mut out = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for r in results {
        match r {
            Ok(ex) => out.push(ex),
            Err(e) if skippable(&e) => skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    Ok((out, skipped))
}

pub fn objective(name: &str, args: &ObjArgs, seed: u64) -> Result<()> {
    let kind = ObjectiveKind::from_str(name).map_err(usage)?;
    let (examples, skipped) = if kind == ObjectiveKind::MlmNsp {
        let p = probability(args.p_mask, DEFAULT_MLM_PROBABILITY)?;
        let vocab_path = args.vocab.as_ref().ok_or_else(|| usage("nsp reads documents and needs --vocab"))?;
        let vocab = files::load_vocab(vocab_path)?;
        let docs = files::read_docs(&args.input)?;
        let n = docs.len();
        let results = (0..n)
            .into_par_iter()
            .map(|i| make_nsp_pair_with(&docs[i], &docs[(i + 1) % n], &vocab, derive_seed(seed, i as u64), None, p))
            .collect();
        collect(results)?
    } else {
        let (vocab, seqs) = files::read_tokens(&args.input)?;
        if let Some(path) = &args.vocab {
            let given = files::load_vocab(path)?;
            if given.id() != vocab.id() {
                anyhow::bail!("token file was encoded with a different vocabulary than {}", path.display());
            }
        }
        let per_seq = |f: &(dyn Fn(&TokenSeq, u64) -> Result<ObjectiveExample, ObjectiveError> + Sync)| {
            seqs.par_iter()
                .enumerate()
                .map(|(i, s)| f(s, derive_seed(seed, i as u64)))
                .collect::<Vec<_>>()
        };
        match kind {
            ObjectiveKind::Mlm => {
                let p = probability(args.p_mask, DEFAULT_MLM_PROBABILITY)?;
                collect(per_seq(&|s, sd| make_mlm(s, p, &vocab, sd)))?
            }
            ObjectiveKind::RtdInput => {
                let p = probability(args.p_mask, DEFAULT_RTD_PROBABILITY)?;
                collect(per_seq(&|s, sd| make_rtd_input(s, p, &vocab, sd)))?
            }
            ObjectiveKind::Clm => {
                let mut packer = pack_clm(seqs.iter().cloned(), args.ctx_len, &vocab).map_err(|e| usage(e.to_string()))?;
                let windows: Vec<ObjectiveExample> = packer.by_ref().collect();
                let dropped = packer.dropped();
                (windows, dropped)
            }
            ObjectiveKind::SpanCorruption => {
                let spec = single_spec(args)?;
                collect(per_seq(&|s, sd| span_corrupt(s, &spec, &vocab, sd)))?
            }
            ObjectiveKind::Mod => {
                let specs = parse_mixture(args.denoisers.as_deref().unwrap_or("LM,SC1,SC2,SC3,SC4,SC5,SC6"))?;
                if !(args.jitter >= 0.0 && args.jitter < 1.0) {
                    return Err(usage(format!("jitter {} outside [0, 1)", args.jitter)));
                }
                let opts = MixtureOptions { jitter: args.jitter };
                collect(per_seq(&|s, sd| mod_sample_with(s, &specs, &vocab, sd, &opts)))?
            }
            ObjectiveKind::MlmNsp => unreachable!(),
        }
    };
    info!("{}: wrote {} examples, skipped {}", kind, examples.len(), skipped);
    files::write_example_file(&args.out, &examples)
}
