//! Predicate knowledge on objects: a co-occurrence prior over predicates
//! given the subject and object categories, used both as an additive logit
//! bias and as a standalone predictor.
//!
//! For a subject category `i`, `q_s(k | i)` is the smoothed distribution of
//! subjects under predicate `k`, renormalized across predicates at column
//! `i`; `q_o(k | j)` likewise for objects. The bias for a pair is
//! `b_k = -ln q_s(k | i) - ln q_o(k | j)` and rescored logits are
//! `z = z_hat + b`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GtCorpus, PredCorpus, PredictionImage, ScoreKind, Split};
use crate::error::{Error, Result};
use crate::matcher::LOG_FLOOR;
use crate::stats::NormalizedStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignMode {
    /// `b = -ln q_s - ln q_o`.
    #[default]
    Paper,
    /// `b = ln q_s + ln q_o`.
    Flipped,
}

impl FromStr for SignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(SignMode::Paper),
            "flipped" => Ok(SignMode::Flipped),
            other => Err(Error::InvalidConfig(format!("unknown sign mode {other:?}"))),
        }
    }
}

impl fmt::Display for SignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignMode::Paper => "paper",
            SignMode::Flipped => "flipped",
        })
    }
}

/// Where the category ids for the prior lookup come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LabelSource {
    #[default]
    #[serde(rename = "gt")]
    GroundTruth,
    #[serde(rename = "pred")]
    Predicted,
}

impl FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" => Ok(LabelSource::GroundTruth),
            "pred" => Ok(LabelSource::Predicted),
            other => Err(Error::InvalidConfig(format!(
                "unknown label source {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PkoBias {
    pub values: Vec<f64>,
    pub sign_mode: SignMode,
}

/// `ln(m[k][col] / sum_c m[c][col])` for every predicate `k`.
fn log_conditional(matrix: &[Vec<f64>], col: usize) -> Vec<f64> {
    let total: f64 = matrix.iter().map(|row| row[col]).sum();
    matrix.iter().map(|row| (row[col] / total).ln()).collect()
}

fn combine(log_qs: f64, log_qo: f64, sign: SignMode) -> f64 {
    match sign {
        SignMode::Paper => -log_qs - log_qo,
        SignMode::Flipped => log_qs + log_qo,
    }
}

pub fn pko_bias(ns: &NormalizedStats, subj: usize, obj: usize, sign_mode: SignMode) -> PkoBias {
    let qs = log_conditional(&ns.at_subj, subj);
    let qo = log_conditional(&ns.at_obj, obj);
    PkoBias {
        values: qs
            .iter()
            .zip(&qo)
            .map(|(&s, &o)| combine(s, o, sign_mode))
            .collect(),
        sign_mode,
    }
}

/// Log-conditionals for every subject and object category, computed once.
#[derive(Debug, Clone)]
pub struct PriorTable {
    /// `[subject][predicate]`
    log_qs: Vec<Vec<f64>>,
    /// `[object][predicate]`
    log_qo: Vec<Vec<f64>>,
}

impl PriorTable {
    pub fn new(ns: &NormalizedStats) -> Self {
        let n_obj = ns.num_objects();
        PriorTable {
            log_qs: (0..n_obj)
                .map(|i| log_conditional(&ns.at_subj, i))
                .collect(),
            log_qo: (0..n_obj).map(|j| log_conditional(&ns.at_obj, j)).collect(),
        }
    }

    pub fn bias(&self, subj: usize, obj: usize, sign_mode: SignMode) -> PkoBias {
        PkoBias {
            values: self.log_qs[subj]
                .iter()
                .zip(&self.log_qo[obj])
                .map(|(&s, &o)| combine(s, o, sign_mode))
                .collect(),
            sign_mode,
        }
    }

    /// Prior log-likelihood `ln q_s(k | i) + ln q_o(k | j)`.
    pub fn log_prior(&self, subj: usize, obj: usize) -> Vec<f64> {
        self.log_qs[subj]
            .iter()
            .zip(&self.log_qo[obj])
            .map(|(s, o)| s + o)
            .collect()
    }
}

fn check_dims(ns: &NormalizedStats, corpus_vocab: &crate::corpus::Vocab) -> Result<()> {
    if ns.num_predicates() != corpus_vocab.num_predicates()
        || ns.num_objects() != corpus_vocab.num_objects()
    {
        return Err(Error::VocabMismatch(format!(
            "statistics cover {} objects x {} predicates, vocabulary has {} x {}",
            ns.num_objects(),
            ns.num_predicates(),
            corpus_vocab.num_objects(),
            corpus_vocab.num_predicates()
        )));
    }
    Ok(())
}

/// Category ids of a prediction pair under the given label source.
pub(crate) fn pair_categories(
    p: &PredictionImage,
    pair: usize,
    source: LabelSource,
    gt: Option<&GtCorpus>,
) -> Result<(usize, usize)> {
    let (s, o) = p.pairs[pair];
    match source {
        LabelSource::Predicted => Ok((p.labels[s], p.labels[o])),
        LabelSource::GroundTruth => {
            let g = gt
                .and_then(|g| g.get(&p.image_id))
                .ok_or_else(|| Error::MissingGroundTruth(p.image_id.clone()))?;
            let label = |idx: usize| {
                g.labels.get(idx).copied().ok_or(Error::IndexOutOfRange {
                    what: "ground-truth object",
                    index: idx,
                    len: g.labels.len(),
                })
            };
            Ok((label(s)?, label(o)?))
        }
    }
}

/// Adds the prior bias to every pair's logits. Probability inputs are
/// log-transformed first; the output is always in logit mode.
pub fn rescore(
    preds: &PredCorpus,
    ns: &NormalizedStats,
    sign_mode: SignMode,
    label_source: LabelSource,
    gt: Option<&GtCorpus>,
) -> Result<PredCorpus> {
    check_dims(ns, &preds.vocab)?;
    let table = PriorTable::new(ns);
    let mut out = Corpus::new(preds.vocab.clone(), preds.split);
    for p in preds.iter() {
        let mut img = p.clone();
        for pair in 0..p.pairs.len() {
            let (i, j) = pair_categories(p, pair, label_source, gt)?;
            let bias = table.bias(i, j, sign_mode);
            for (z, b) in img.predicate_scores[pair].iter_mut().zip(&bias.values) {
                let logit = match p.score_kind {
                    ScoreKind::Logit => *z,
                    ScoreKind::Probability => z.max(LOG_FLOOR).ln(),
                };
                *z = logit + b;
            }
        }
        img.score_kind = ScoreKind::Logit;
        out.insert(img)?;
    }
    Ok(out)
}

/// Predicts every ground-truth pair from the prior alone.
///
/// Candidate pairs are the distinct annotated subject-object pairs, boxes
/// and labels are copied from the ground truth, and each pair scores
/// `ln q_s(k | i) + ln q_o(k | j)` as logits.
pub fn pko_only_predict(ns: &NormalizedStats, gt: &GtCorpus) -> Result<PredCorpus> {
    check_dims(ns, &gt.vocab)?;
    let table = PriorTable::new(ns);
    let mut out = Corpus::new(gt.vocab.clone(), Split::Test);
    for g in gt.iter() {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for rel in &g.relations {
            if !pairs.contains(&(rel.subj, rel.obj)) {
                pairs.push((rel.subj, rel.obj));
            }
        }
        let predicate_scores = pairs
            .iter()
            .map(|&(s, o)| table.log_prior(g.labels[s], g.labels[o]))
            .collect();
        out.insert(PredictionImage {
            image_id: g.image_id.clone(),
            boxes: g.boxes.clone(),
            labels: g.labels.clone(),
            label_scores: vec![1.0; g.boxes.len()],
            pairs,
            predicate_scores,
            score_kind: ScoreKind::Logit,
        })?;
    }
    Ok(out)
}
