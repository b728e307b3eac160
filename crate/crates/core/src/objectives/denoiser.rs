use std::fmt;

use super::{ObjectiveError, Result};

/// Mean span length of a denoiser, possibly relative to the input length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpanMean {
    Tokens(f64),
    /// `L / 4` for an input of `L` tokens.
    QuarterOfInput,
}

/// UL2 regime: regular short spans, sequential prefix-LM split, or extreme
/// (long spans or heavy corruption).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DenoiserKind {
    R,
    S,
    X,
}

impl DenoiserKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DenoiserKind::R => "R",
            DenoiserKind::S => "S",
            DenoiserKind::X => "X",
        }
    }
}

impl fmt::Display for DenoiserKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Span lengths at or above this, or rates at or above [`EXTREME_RATE`],
/// make a denoiser extreme.
pub const EXTREME_SPAN: f64 = 12.0;
pub const EXTREME_RATE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserSpec {
    /// Control token name without brackets, e.g. `SC1`.
    pub control_token: String,
    pub mean_span: SpanMean,
    pub rate: f64,
    /// Lower bound on the number of corrupted spans.
    pub min_spans: usize,
    pub kind: DenoiserKind,
}

impl DenoiserSpec {
    pub fn new(control_token: &str, mean_span: SpanMean, rate: f64, min_spans: usize) -> Result<Self> {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(ObjectiveError::BadProbability(rate));
        }
        if min_spans < 1 {
            return Err(ObjectiveError::InvalidSpec("at least one span is required".into()));
        }
        let kind = match mean_span {
            SpanMean::QuarterOfInput => DenoiserKind::S,
            SpanMean::Tokens(mu) => {
                if !(mu >= 1.0) {
                    return Err(ObjectiveError::InvalidSpec(format!("mean span {mu} < 1")));
                }
                if mu >= EXTREME_SPAN || rate >= EXTREME_RATE {
                    DenoiserKind::X
                } else {
                    DenoiserKind::R
                }
            }
        };
        Ok(DenoiserSpec {
            control_token: control_token.to_string(),
            mean_span,
            rate,
            min_spans,
            kind,
        })
    }

    /// Mean span length for an input of `len` tokens.
    pub fn resolve_mean(&self, len: usize) -> f64 {
        match self.mean_span {
            SpanMean::Tokens(mu) => mu,
            SpanMean::QuarterOfInput => len as f64 / 4.0,
        }
    }
}

/// The seven FRED-T5 denoisers, in control-token order.
pub fn fred_t5_denoisers() -> Vec<DenoiserSpec> {
    let table: [(&str, SpanMean, f64); 7] = [
        ("LM", SpanMean::QuarterOfInput, 0.25),
        ("SC1", SpanMean::Tokens(3.0), 0.15),
        ("SC2", SpanMean::Tokens(8.0), 0.15),
        ("SC3", SpanMean::Tokens(64.0), 0.15),
        ("SC4", SpanMean::Tokens(3.0), 0.5),
        ("SC5", SpanMean::Tokens(8.0), 0.5),
        ("SC6", SpanMean::Tokens(64.0), 0.5),
    ];
    table
        .iter()
        .map(|&(name, mu, r)| DenoiserSpec::new(name, mu, r, 1).expect("built-in spec is valid"))
        .collect()
}
