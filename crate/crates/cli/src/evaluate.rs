use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;

use denoiserforge::metrics::{
    accuracy, bleu, chrf, co2_kg, f1_em, joint_detox, mcc, meteor_lite, rouge_l, sari, Co2Params, MetricReport,
};
use denoiserforge::templates::{load_instances, Family, Task, TemplateSpec};

use crate::{files, usage};

pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(files::create(p)?),
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    })
}

/// Tabs and newlines inside a field become spaces.
pub fn tsv_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

pub fn render(task: &str, family: &str, input: &Path, out: Option<&Path>) -> Result<()> {
    let task = Task::from_str(task).map_err(usage)?;
    let family = Family::from_str(family).map_err(usage)?;
    let spec = TemplateSpec::builtin(task, family);
    let instances = load_instances(input, task)?;
    let mut w = output(out)?;
    for inst in &instances {
        let rendering = spec.render(inst).with_context(|| format!("instance {}", inst.idx))?;
        for (label, text) in rendering.rows() {
            writeln!(w, "{}\t{}\t{}", tsv_field(&inst.idx), tsv_field(&label), tsv_field(&text))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Args, Clone)]
pub struct Co2Args {
    #[arg(long, default_value_t = 1.0)]
    pub pue: f64,
    #[arg(long)]
    pub kwh: f64,
    /// Grams of CO₂ per kWh.
    #[arg(long)]
    pub intensity: f64,
}

impl Co2Args {
    fn kg(&self) -> Result<f64> {
        let params = Co2Params {
            pue: self.pue,
            kwh: self.kwh,
            intensity: self.intensity,
        };
        co2_kg(&params).map_err(|e| usage(e.to_string()))
    }
}

/// Shortest decimal form after rounding to 9 places.
pub fn number(x: f64) -> String {
    let r = (x * 1e9).round() / 1e9;
    if r == 0.0 {
        "0".to_string()
    } else {
        format!("{r}")
    }
}

pub fn co2(args: &Co2Args) -> Result<()> {
    println!("co2_kg={}", number(args.kg()?));
    Ok(())
}

#[derive(Debug, Args, Clone)]
pub struct ScoreArgs {
    /// mcc, accuracy, f1, em, sari, bleu, chrf, rougeL, meteor, joint or co2.
    #[arg(long)]
    pub metric: String,
    /// One prediction per line. For joint, `sta<TAB>sim<TAB>fl` per line.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// One line per prediction; alternative references separated by tabs.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Source sentences (sari).
    #[arg(long)]
    pub src: Option<PathBuf>,
    #[arg(long)]
    pub pue: Option<f64>,
    #[arg(long)]
    pub kwh: Option<f64>,
    #[arg(long)]
    pub intensity: Option<f64>,
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str, metric: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| usage(format!("--metric {metric} needs --{flag}")))
}

fn references(lines: Vec<String>) -> Vec<Vec<String>> {
    lines.into_iter().map(|l| l.split('\t').map(str::to_string).collect()).collect()
}

fn joint_columns(lines: &[String]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (mut sta, mut sim, mut fl) = (Vec::new(), Vec::new(), Vec::new());
    for (i, l) in lines.iter().enumerate() {
        let cols: Vec<&str> = l.split('\t').collect();
        if cols.len() != 3 {
            bail!("line {}: expected sta<TAB>sim<TAB>fl", i + 1);
        }
        let parse = |s: &str| s.trim().parse::<f64>().with_context(|| format!("line {}: bad number `{s}`", i + 1));
        sta.push(parse(cols[0])?);
        sim.push(parse(cols[1])?);
        fl.push(parse(cols[2])?);
    }
    Ok((sta, sim, fl))
}

pub fn compute(args: &ScoreArgs) -> Result<MetricReport> {
    let m = args.metric.as_str();
    if m == "co2" {
        let (Some(pue), Some(kwh), Some(intensity)) = (args.pue, args.kwh, args.intensity) else {
            return Err(usage("--metric co2 needs --pue, --kwh and --intensity"));
        };
        let kg = Co2Args { pue, kwh, intensity }.kg()?;
        return Ok(MetricReport::new("co2", kg, 1));
    }
    let known = ["mcc", "accuracy", "f1", "em", "sari", "bleu", "chrf", "rougeL", "meteor", "joint"];
    if !known.contains(&m) {
        return Err(usage(format!("unknown metric `{m}` ({}, co2)", known.join(", "))));
    }
    let pred = files::read_lines(need(&args.pred, "pred", m)?)?;
    if m == "joint" {
        let (sta, sim, fl) = joint_columns(&pred)?;
        return Ok(joint_detox(&sta, &sim, &fl)?);
    }
    let gold = files::read_lines(need(&args.gold, "gold", m)?)?;
    let report = match m {
        "mcc" => mcc(&pred, &gold)?,
        "accuracy" => accuracy(&pred, &gold)?,
        "f1" => f1_em(&pred, &references(gold))?.1,
        "em" => f1_em(&pred, &references(gold))?.0,
        "bleu" => bleu(&pred, &references(gold))?,
        "chrf" => chrf(&pred, &references(gold))?,
        "rougeL" => rouge_l(&pred, &references(gold))?,
        "meteor" => meteor_lite(&pred, &references(gold))?,
        "sari" => {
            let src = files::read_lines(need(&args.src, "src", m)?)?;
            sari(&src, &pred, &references(gold))?
        }
        _ => unreachable!(),
    };
    Ok(report)
}

pub fn score(args: &ScoreArgs) -> Result<()> {
    let r = compute(args)?;
    println!("metric={} score={} n={}", args.metric, number(r.score), r.support);
    Ok(())
}
