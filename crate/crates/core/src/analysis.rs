//! Per-predicate mean output matrices for predicate-correlation heatmaps.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{GtCorpus, PredCorpus, ScoreKind};
use crate::error::{Error, Result};
use crate::fmt::{csv_field, significant};
use crate::matcher::LOG_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputSource {
    Logit,
    Prob,
}

impl std::str::FromStr for OutputSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(OutputSource::Logit),
            "prob" => Ok(OutputSource::Prob),
            _ => Err(Error::InvalidConfig(format!("unknown output source {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    GlobalSum,
    GlobalMinmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanOutputMatrix {
    pub labels: Vec<String>,
    /// Row r: normalized mean output over samples annotated with r.
    pub matrix: Vec<Vec<f64>>,
    pub normalization: Normalization,
    pub sample_counts: Vec<usize>,
    /// Ground-truth relations without a matching candidate pair.
    pub skipped: usize,
}

/// Averages each ground-truth relation's score vector by its predicate.
///
/// A relation (s, o, r) is looked up by its box indices among the
/// prediction's candidate pairs. Probability mode normalizes each pair,
/// averages, then divides by the sum over the whole map. Logit mode
/// averages raw logits (log-probabilities for probability inputs) and
/// rescales the map to [0, 1]; a constant map becomes all zeros.
pub fn mean_output_matrix(
    gt: &GtCorpus,
    preds: &PredCorpus,
    source: OutputSource,
) -> MeanOutputMatrix {
    let n_p = gt.vocab.num_predicates();
    let mut sums = vec![vec![0.0; n_p]; n_p];
    let mut counts = vec![0usize; n_p];
    let mut skipped = 0;
    for g in gt.iter() {
        let Some(p) = preds.get(&g.image_id) else {
            skipped += g.relations.len();
            continue;
        };
        let index: HashMap<(usize, usize), usize> = p
            .pairs
            .iter()
            .enumerate()
            .map(|(i, &pair)| (pair, i))
            .collect();
        for rel in &g.relations {
            let Some(&pair) = index.get(&(rel.subj, rel.obj)) else {
                skipped += 1;
                continue;
            };
            let row = match (source, p.score_kind) {
                (OutputSource::Prob, _) => p.pair_probabilities(pair),
                (OutputSource::Logit, ScoreKind::Logit) => p.predicate_scores[pair].clone(),
                (OutputSource::Logit, ScoreKind::Probability) => p.predicate_scores[pair]
                    .iter()
                    .map(|&v| v.max(LOG_FLOOR).ln())
                    .collect(),
            };
            for (acc, v) in sums[rel.pred].iter_mut().zip(row) {
                *acc += v;
            }
            counts[rel.pred] += 1;
        }
    }
    for (row, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            row.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    // Unsupported rows stay at zero and take no part in the scaling.
    let supported = || {
        sums.iter()
            .zip(&counts)
            .filter(|(_, &c)| c > 0)
            .flat_map(|(r, _)| r.iter().copied())
    };
    let (normalization, matrix) = match source {
        OutputSource::Prob => {
            let total: f64 = supported().sum();
            let mut m = sums.clone();
            if total > 0.0 {
                m.iter_mut().flatten().for_each(|v| *v /= total);
            }
            (Normalization::GlobalSum, m)
        }
        OutputSource::Logit => {
            let lo = supported().fold(f64::INFINITY, f64::min);
            let hi = supported().fold(f64::NEG_INFINITY, f64::max);
            let mut m = vec![vec![0.0; n_p]; n_p];
            if hi > lo {
                for (r, row) in m.iter_mut().enumerate() {
                    if counts[r] > 0 {
                        for (v, s) in row.iter_mut().zip(&sums[r]) {
                            *v = (s - lo) / (hi - lo);
                        }
                    }
                }
            }
            (Normalization::GlobalMinmax, m)
        }
    };
    MeanOutputMatrix {
        labels: gt.vocab.predicates().to_vec(),
        matrix,
        normalization,
        sample_counts: counts,
        skipped,
    }
}

impl MeanOutputMatrix {
    /// Header `predicate,<names...>,support`; one row per ground-truth predicate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("predicate");
        for name in &self.labels {
            out.push(',');
            out.push_str(&csv_field(name));
        }
        out.push_str(",support\n");
        for (r, row) in self.matrix.iter().enumerate() {
            out.push_str(&csv_field(&self.labels[r]));
            for v in row {
                out.push(',');
                out.push_str(&significant(*v, 9));
            }
            out.push_str(&format!(",{}\n", self.sample_counts[r]));
        }
        out
    }

    /// JSON keeps full precision so that it reloads to the same matrix.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serializes") + "\n"
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

pub fn export_matrix(m: &MeanOutputMatrix, path: &Path, format: ExportFormat) -> Result<()> {
    let text = match format {
        ExportFormat::Csv => m.to_csv(),
        ExportFormat::Json => m.to_json_string(),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
