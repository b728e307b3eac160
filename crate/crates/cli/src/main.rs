mod config;
mod evaluate;
mod files;
mod lm;
mod pipeline;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Pretraining-data pipeline and evaluation toolkit.
#[derive(Debug, Parser)]
#[command(name = "forge", version)]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; output does not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// `key = value` file supplying defaults for flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a manifest, normalize, interleave and deduplicate into JSONL.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a vocabulary on ingested documents.
    TrainVocab {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "bbpe")]
        scheme: String,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tokenize documents into a token file.
    Encode {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Masked-LM examples.
    Mlm(ObjArgs),
    /// Next-sentence pairs with masking, from JSONL documents.
    Nsp(ObjArgs),
    /// Packed causal-LM windows.
    Clm(ObjArgs),
    /// Single-denoiser span corruption.
    Sp(ObjArgs),
    /// Replaced-token-detection inputs.
    Rtd(ObjArgs),
    /// Mixture-of-denoisers examples.
    Mod(ObjArgs),
    /// Any objective, chosen by name.
    Examples {
        #[arg(long)]
        objective: String,
        #[command(flatten)]
        args: ObjArgs,
    },
    /// Render task instances into prompts (`id<TAB>label<TAB>text`).
    Render {
        #[arg(long)]
        task: String,
        #[arg(long, default_value = "t5_style")]
        family: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against references.
    Score(evaluate::ScoreArgs),
    /// Toy bigram language model.
    Toylm {
        #[command(subcommand)]
        command: lm::ToyCommand,
    },
    /// Training emissions in kilograms.
    Co2(evaluate::Co2Args),
}

#[derive(Debug, Args, Clone)]
pub struct ObjArgs {
    /// Token file (JSONL documents for nsp).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Vocabulary file, needed when reading documents.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Masking probability (mlm, nsp, rtd).
    #[arg(long)]
    pub p_mask: Option<f64>,
    /// Window length (clm).
    #[arg(long, default_value_t = 512)]
    pub ctx_len: usize,
    /// Built-in denoiser for sp, e.g. `SC1`.
    #[arg(long)]
    pub denoiser: Option<String>,
    /// Mean span length for sp; `L/4` for a prefix split.
    #[arg(long)]
    pub mean: Option<String>,
    /// Corruption rate for sp.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub min_spans: usize,
    /// Comma-separated mixture (mod): built-in names or `NAME:mean:rate[:min]`.
    #[arg(long)]
    pub denoisers: Option<String>,
    /// Relative jitter of span length and rate per mod draw.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
}

/// A problem with the invocation rather than with the data.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
        .ok();
    let seed = cli.seed;
    match cli.command {
        Command::Ingest { manifest, out } => pipeline::ingest(&manifest, &out, seed),
        Command::TrainVocab { input, scheme, size, out } => pipeline::train_vocab(&input, &scheme, size, &out),
        Command::Encode { vocab, input, out } => pipeline::encode(&vocab, &input, &out),
        Command::Mlm(a) => pipeline::objective("mlm", &a, seed),
        Command::Nsp(a) => pipeline::objective("mlm-nsp", &a, seed),
        Command::Clm(a) => pipeline::objective("clm", &a, seed),
        Command::Sp(a) => pipeline::objective("sp", &a, seed),
        Command::Rtd(a) => pipeline::objective("rtd", &a, seed),
        Command::Mod(a) => pipeline::objective("mod", &a, seed),
        Command::Examples { objective, args } => {
            let name = if objective == "nsp" { "mlm-nsp" } else { objective.as_str() };
            pipeline::objective(name, &args, seed)
        }
        Command::Render { task, family, input, out } => evaluate::render(&task, &family, &input, out.as_deref()),
        Command::Score(a) => evaluate::score(&a),
        Command::Toylm { command } => lm::run(command, seed),
        Command::Co2(a) => evaluate::co2(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FORGE_LOG", "error"))
        .format_timestamp(None)
        .init();
    let args = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) if e.downcast_ref::<Usage>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
