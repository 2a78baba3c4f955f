use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of `metrics.csv`. Scores are present only on evaluation updates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub update: usize,
    pub steps: usize,
    pub train_score: Option<f64>,
    pub test_score: Option<f64>,
    pub sm_mean: Option<f64>,
    pub sm_std: Option<f64>,
    pub pi_loss: f64,
    pub v_loss: f64,
    pub entropy: f64,
    pub vae_loss: Option<f64>,
    pub wall_ms: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<MetricsRecord>,
}

pub const CSV_HEADER: &str =
    "update,steps,train_score,test_score,sm_mean,sm_std,pi_loss,v_loss,entropy,vae_loss,wall_ms";

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("metrics csv: {e}"))
}

impl MetricsLog {
    pub fn push(&mut self, record: MetricsRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records that carry both a train and a test score.
    pub fn evaluations(&self) -> impl Iterator<Item = (&MetricsRecord, f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| Some((r, r.train_score?, r.test_score?)))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.records.is_empty() {
            w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
        }
        for r in &self.records {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        if header.join(",") != CSV_HEADER {
            return Err(Error::Config(format!(
                "unexpected metrics header `{}`",
                header.join(",")
            )));
        }
        let records = rd
            .deserialize()
            .collect::<std::result::Result<Vec<MetricsRecord>, _>>()
            .map_err(csv_err)?;
        Ok(MetricsLog { records })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Exponential smoothing: `s₁ = x₁`, `sₜ = w·sₜ₋₁ + (1 − w)·xₜ`.
pub fn smooth(series: &[f64], weight: f64) -> Vec<f64> {
    assert!((0.0..1.0).contains(&weight), "smoothing weight must lie in [0, 1)");
    let mut out = Vec::with_capacity(series.len());
    let mut prev: Option<f64> = None;
    for &x in series {
        let s = match prev {
            None => x,
            Some(p) => weight * p + (1.0 - weight) * x,
        };
        out.push(s);
        prev = Some(s);
    }
    out
}

/// Mean train score minus mean test score over the last `window` evaluations.
/// Negative means the test levels scored higher.
pub fn generalization_gap(log: &MetricsLog, window: usize) -> Result<f64> {
    let evals: Vec<(f64, f64)> = log.evaluations().map(|(_, tr, te)| (tr, te)).collect();
    trailing_gap(&evals, window)
}

/// Final-window means of the smoothed train and test score curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSummary {
    pub train: f64,
    pub test: f64,
    /// `train − test`.
    pub gap: f64,
    pub evaluations: usize,
}

/// Smooth both score curves with `weight`, then average their last `window` points.
pub fn final_window(log: &MetricsLog, window: usize, weight: f64) -> Result<WindowSummary> {
    let (train, test): (Vec<f64>, Vec<f64>) = log.evaluations().map(|(_, tr, te)| (tr, te)).unzip();
    let pairs: Vec<(f64, f64)> = smooth(&train, weight).into_iter().zip(smooth(&test, weight)).collect();
    let gap = trailing_gap(&pairs, window)?;
    let tail = &pairs[pairs.len() - window..];
    let n = window as f64;
    Ok(WindowSummary {
        train: tail.iter().map(|p| p.0).sum::<f64>() / n,
        test: tail.iter().map(|p| p.1).sum::<f64>() / n,
        gap,
        evaluations: pairs.len(),
    })
}

pub(crate) fn trailing_gap(pairs: &[(f64, f64)], window: usize) -> Result<f64> {
    if window == 0 || pairs.len() < window {
        return Err(Error::InsufficientData {
            needed: window.max(1),
            have: pairs.len(),
        });
    }
    let tail = &pairs[pairs.len() - window..];
    let n = window as f64;
    let train = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let test = tail.iter().map(|p| p.1).sum::<f64>() / n;
    Ok(train - test)
}
