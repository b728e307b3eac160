//! Classification, generation and detoxification metrics, and the CO₂
//! estimate for a training run.
//!
//! Text metrics tokenize on whitespace. Scales follow common reporting:
//! accuracy, F1, EM, BLEU and ROUGE-L in `[0, 1]`; MCC in `[-1, 1]`; chrF,
//! SARI and the joint detox score in `[0, 100]`.

mod classification;
mod generation;
mod sari;

use thiserror::Error;

pub use classification::{accuracy, f1_em, macro_f1, mcc, mcc_from_confusion, normalize_answer, per_question_f1, token_f1};
pub use generation::{bleu, chrf, meteor_lite, rouge_l, BleuStats, CHRF_ORDER};
pub use sari::{sari, sari_components, SariComponents};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {left} predictions vs {right} references")]
    LengthMismatch { left: usize, right: usize },
    #[error("no examples")]
    Empty,
    #[error("example {0} has no gold answers")]
    NoGold(usize),
    #[error("value {value} at example {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("invalid CO2 parameter: {0}")]
    Co2(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub name: String,
    pub score: f64,
    pub per_example: Option<Vec<f64>>,
    pub support: usize,
}

impl MetricReport {
    pub fn new(name: &str, score: f64, support: usize) -> Self {
        MetricReport {
            name: name.to_string(),
            score,
            per_example: None,
            support,
        }
    }

    pub fn with_per_example(mut self, values: Vec<f64>) -> Self {
        self.per_example = Some(values);
        self
    }

    /// Support-weighted mean of several reports of the same metric.
    pub fn merge(reports: &[MetricReport]) -> Option<MetricReport> {
        let first = reports.first()?;
        let support: usize = reports.iter().map(|r| r.support).sum();
        if support == 0 {
            return Some(MetricReport::new(&first.name, 0.0, 0));
        }
        let score = reports.iter().map(|r| r.score * r.support as f64).sum::<f64>() / support as f64;
        Some(MetricReport::new(&first.name, score, support))
    }
}

pub(crate) fn check_lengths(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(MetricError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Mean over examples of `sta · sim · fl`, times 100.
pub fn joint_detox(sta: &[f64], sim: &[f64], fl: &[f64]) -> Result<MetricReport> {
    check_lengths(sta.len(), sim.len())?;
    check_lengths(sta.len(), fl.len())?;
    let mut per = Vec::with_capacity(sta.len());
    for i in 0..sta.len() {
        for v in [sta[i], sim[i], fl[i]] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MetricError::OutOfRange { index: i, value: v });
            }
        }
        per.push(sta[i] * sim[i] * fl[i]);
    }
    let score = 100.0 * per.iter().sum::<f64>() / per.len() as f64;
    Ok(MetricReport::new("joint", score, per.len()).with_per_example(per))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Co2Params {
    /// Power usage effectiveness, at least 1.
    pub pue: f64,
    pub kwh: f64,
    /// Grams of CO₂ per kWh.
    pub intensity: f64,
}

impl Co2Params {
    pub fn validate(&self) -> Result<()> {
        let named = [("pue", self.pue), ("kwh", self.kwh), ("intensity", self.intensity)];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(MetricError::Co2(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.pue < 1.0 {
            return Err(MetricError::Co2(format!("pue must be at least 1, got {}", self.pue)));
        }
        Ok(())
    }
}

/// Emissions in kilograms: `pue · kwh · intensity / 1000`.
pub fn co2_kg(params: &Co2Params) -> Result<f64> {
    params.validate()?;
    Ok(params.pue * params.kwh * params.intensity / 1000.0)
}

/// Pluggable sentence similarity for content-preservation scores.
pub trait Similarity {
    /// A value in `[0, 1]`.
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Cosine similarity of bags of character n-grams.
#[derive(Debug, Clone, Copy)]
pub struct CharNgramCosine {
    pub n: usize,
}

impl Default for CharNgramCosine {
    fn default() -> Self {
        CharNgramCosine { n: 3 }
    }
}

impl Similarity for CharNgramCosine {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        use std::collections::BTreeMap;
        let bag = |s: &str| {
            let chars: Vec<char> = s.chars().collect();
            let mut m: BTreeMap<Vec<char>, f64> = BTreeMap::new();
            if chars.len() < self.n {
                if !chars.is_empty() {
                    m.insert(chars, 1.0);
                }
                return m;
            }
            for w in chars.windows(self.n) {
                *m.entry(w.to_vec()).or_default() += 1.0;
            }
            m
        };
        let x = bag(a);
        let y = bag(b);
        if x.is_empty() && y.is_empty() {
            return 1.0;
        }
        let dot: f64 = x.iter().filter_map(|(k, v)| y.get(k).map(|w| v * w)).sum();
        let nx: f64 = x.values().map(|v| v * v).sum::<f64>().sqrt();
        let ny: f64 = y.values().map(|v| v * v).sum::<f64>().sqrt();
        if nx == 0.0 || ny == 0.0 {
            0.0
        } else {
            (dot / (nx * ny)).clamp(0.0, 1.0)
        }
    }
}

/// Mean similarity between paired sentences.
pub fn similarity_score(sim: &dyn Similarity, preds: &[&str], refs: &[&str]) -> Result<MetricReport> {
    check_lengths(preds.len(), refs.len())?;
    let per: Vec<f64> = preds.iter().zip(refs).map(|(p, r)| sim.similarity(p, r)).collect();
    let score = per.iter().sum::<f64>() / per.len() as f64;
    Ok(MetricReport::new("similarity", score, per.len()).with_per_example(per))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn co2_hand_cases() {
        let kg = co2_kg(&Co2Params { pue: 1.3, kwh: 1000.0, intensity: 300.0 }).unwrap();
        assert!((kg - 390.0).abs() < 1e-9);
        assert_eq!(co2_kg(&Co2Params { pue: 1.0, kwh: 1000.0, intensity: 1000.0 }).unwrap(), 1000.0);
        assert_eq!(co2_kg(&Co2Params { pue: 1.3, kwh: 0.0, intensity: 300.0 }).unwrap(), 0.0);
        assert!(co2_kg(&Co2Params { pue: 1.3, kwh: -1.0, intensity: 300.0 }).is_err());
        assert!(co2_kg(&Co2Params { pue: 0.9, kwh: 1.0, intensity: 300.0 }).is_err());
    }

    #[test]
    fn co2_is_linear() {
        let base = co2_kg(&Co2Params { pue: 1.2, kwh: 10.0, intensity: 50.0 }).unwrap();
        let doubled = co2_kg(&Co2Params { pue: 1.2, kwh: 20.0, intensity: 50.0 }).unwrap();
        assert!((doubled - 2.0 * base).abs() < 1e-12);
    }

    #[test]
    fn joint_cases() {
        assert_eq!(joint_detox(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]).unwrap().score, 100.0);
        assert!((joint_detox(&[0.8], &[0.9], &[0.5]).unwrap().score - 36.0).abs() < 1e-9);
        let r = joint_detox(&[0.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r.per_example.unwrap()[0], 0.0);
        assert!(joint_detox(&[1.2], &[1.0], &[1.0]).is_err());
        assert!(joint_detox(&[1.0], &[1.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn joint_is_monotone() {
        let low = joint_detox(&[0.3, 0.6], &[0.5, 0.5], &[0.9, 0.1]).unwrap().score;
        let high = joint_detox(&[0.4, 0.6], &[0.5, 0.5], &[0.9, 0.1]).unwrap().score;
        assert!(high >= low);
    }

    #[test]
    fn char_cosine() {
        let s = CharNgramCosine::default();
        assert!((s.similarity("привет мир", "привет мир") - 1.0).abs() < 1e-12);
        assert_eq!(s.similarity("aaaa", "bbbb"), 0.0);
        let partial = s.similarity("привет мир", "привет всем");
        assert!(partial > 0.0 && partial < 1.0);
    }

    #[test]
    fn merge_is_support_weighted() {
        let m = MetricReport::merge(&[MetricReport::new("acc", 1.0, 3), MetricReport::new("acc", 0.0, 1)]).unwrap();
        assert_eq!(m.score, 0.75);
        assert_eq!(m.support, 4);
    }
}
