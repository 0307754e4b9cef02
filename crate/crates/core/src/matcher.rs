//! Candidate triplet ranking and ground-truth matching.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{softmax, BBox, GroundTruthImage, PredictionImage, ScoreKind};
use crate::error::{Error, Result};

/// Floor applied before taking logarithms of probabilities or label scores.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    PredCls,
    SgCls,
    SgDet,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predcls" => Ok(Task::PredCls),
            "sgcls" => Ok(Task::SgCls),
            "sgdet" => Ok(Task::SgDet),
            other => Err(Error::InvalidConfig(format!("unknown task {other:?}"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::PredCls => "predcls",
            Task::SgCls => "sgcls",
            Task::SgDet => "sgdet",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchMode {
    pub task: Task,
    pub iou_threshold: f64,
}

impl MatchMode {
    pub fn new(task: Task, iou_threshold: f64) -> Result<Self> {
        if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "iou threshold {iou_threshold} not in (0, 1]"
            )));
        }
        Ok(MatchMode {
            task,
            iou_threshold,
        })
    }
}

impl Default for MatchMode {
    fn default() -> Self {
        MatchMode {
            task: Task::PredCls,
            iou_threshold: 0.5,
        }
    }
}

/// Which per-class score the independent per-category rankings use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImrScore {
    /// Per-pair normalized probability times label confidences.
    #[default]
    Prob,
    /// The score as given. Logits are combined with label confidences in
    /// log space.
    Raw,
}

impl FromStr for ImrScore {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prob" => Ok(ImrScore::Prob),
            "raw" => Ok(ImrScore::Raw),
            other => Err(Error::InvalidConfig(format!("unknown imr score {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedTriplet {
    pub pair_index: usize,
    pub pred_id: usize,
    pub triplet_score: f64,
}

fn ranking_order(a: &RankedTriplet, b: &RankedTriplet) -> Ordering {
    b.triplet_score
        .total_cmp(&a.triplet_score)
        .then(a.pair_index.cmp(&b.pair_index))
        .then(a.pred_id.cmp(&b.pred_id))
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Product of subject and object confidences; 1 under PredCls.
fn label_weight(p: &PredictionImage, pair: usize, task: Task) -> f64 {
    if task == Task::PredCls {
        return 1.0;
    }
    let (s, o) = p.pairs[pair];
    p.label_scores[s] * p.label_scores[o]
}

/// Ranks the candidate triplets of one image, best first.
///
/// With `graph_constraint` each pair contributes only its highest scoring
/// predicate (lowest id on ties).
pub fn enumerate_triplets(
    p: &PredictionImage,
    graph_constraint: bool,
    task: Task,
) -> Vec<RankedTriplet> {
    let mut out = Vec::with_capacity(p.pairs.len());
    for pair in 0..p.pairs.len() {
        let probs = p.pair_probabilities(pair);
        let weight = label_weight(p, pair, task);
        if graph_constraint {
            let mut best = 0;
            for (k, v) in probs.iter().enumerate() {
                if *v > probs[best] {
                    best = k;
                }
            }
            out.push(RankedTriplet {
                pair_index: pair,
                pred_id: best,
                triplet_score: weight * probs[best],
            });
        } else {
            out.extend(probs.iter().enumerate().map(|(k, v)| RankedTriplet {
                pair_index: pair,
                pred_id: k,
                triplet_score: weight * v,
            }));
        }
    }
    out.sort_by(ranking_order);
    out
}

/// Ranks every pair by its score for a single category.
pub fn category_ranking(
    p: &PredictionImage,
    pred_id: usize,
    task: Task,
    score: ImrScore,
) -> Vec<RankedTriplet> {
    let mut out: Vec<RankedTriplet> = (0..p.pairs.len())
        .map(|pair| RankedTriplet {
            pair_index: pair,
            pred_id,
            triplet_score: category_score(p, pair, pred_id, task, score),
        })
        .collect();
    out.sort_by(ranking_order);
    out
}

fn category_score(
    p: &PredictionImage,
    pair: usize,
    pred_id: usize,
    task: Task,
    score: ImrScore,
) -> f64 {
    let raw = &p.predicate_scores[pair];
    match (score, p.score_kind) {
        (ImrScore::Raw, ScoreKind::Logit) => {
            let log_weight = if task == Task::PredCls {
                0.0
            } else {
                let (s, o) = p.pairs[pair];
                p.label_scores[s].max(LOG_FLOOR).ln() + p.label_scores[o].max(LOG_FLOOR).ln()
            };
            raw[pred_id] + log_weight
        }
        (_, ScoreKind::Probability) => label_weight(p, pair, task) * raw[pred_id],
        (ImrScore::Prob, ScoreKind::Logit) => label_weight(p, pair, task) * softmax(raw)[pred_id],
    }
}

fn boxes_match(pred: &BBox, gt: &BBox, mode: &MatchMode) -> bool {
    match mode.task {
        Task::PredCls | Task::SgCls => pred == gt,
        Task::SgDet => iou(pred, gt) >= mode.iou_threshold,
    }
}

/// Finds the first unused ground-truth relation matched by `t` and marks it
/// used.
pub fn match_triplet(
    t: &RankedTriplet,
    p: &PredictionImage,
    g: &GroundTruthImage,
    mode: &MatchMode,
    used: &mut [bool],
) -> Option<usize> {
    let (s, o) = p.pairs[t.pair_index];
    let (s_label, o_label) = (p.labels[s], p.labels[o]);
    let (s_box, o_box) = (&p.boxes[s], &p.boxes[o]);
    let hit = g.relations.iter().enumerate().position(|(i, rel)| {
        !used[i]
            && rel.pred == t.pred_id
            && g.labels[rel.subj] == s_label
            && g.labels[rel.obj] == o_label
            && boxes_match(s_box, &g.boxes[rel.subj], mode)
            && boxes_match(o_box, &g.boxes[rel.obj], mode)
    })?;
    used[hit] = true;
    Some(hit)
}

/// Scans `ranked` in order and returns, per ground-truth relation, the
/// 0-based rank of the candidate that matched it.
pub fn match_ranks(
    ranked: &[RankedTriplet],
    p: &PredictionImage,
    g: &GroundTruthImage,
    mode: &MatchMode,
) -> Vec<Option<usize>> {
    let mut used = vec![false; g.relations.len()];
    let mut ranks = vec![None; g.relations.len()];
    for (rank, t) in ranked.iter().enumerate() {
        if used.iter().all(|u| *u) {
            break;
        }
        if let Some(hit) = match_triplet(t, p, g, mode, &mut used) {
            ranks[hit] = Some(rank);
        }
    }
    ranks
}
