//! Random small corpora and a brute-force metric reference.
//!
//! The reference works on (pair, predicate) keys instead of box matching:
//! predictions reuse the ground-truth boxes by index, so a ground-truth
//! relation is hit exactly when its key sits in the top-K list with the
//! same subject and object labels.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use sgbench_core::corpus::softmax;
use sgbench_core::synthgen::Stream;
use sgbench_core::{
    BBox, Corpus, GroundTruthImage, GtCorpus, PredCorpus, PredictionImage, Relation, ScoreKind,
    Split, Vocab,
};

pub struct Case {
    pub gt: GtCorpus,
    pub preds: PredCorpus,
}

pub struct CaseShape {
    pub max_images: usize,
    pub max_predicates: usize,
    pub max_pairs: usize,
    /// Chance that a predicted label differs from the annotated one.
    pub label_noise: f64,
}

impl Default for CaseShape {
    fn default() -> Self {
        CaseShape {
            max_images: 5,
            max_predicates: 8,
            max_pairs: 30,
            label_noise: 0.0,
        }
    }
}

fn shuffled(r: &mut Stream, mut v: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    for i in (1..v.len()).rev() {
        let j = r.index(i + 1);
        v.swap(i, j);
    }
    v
}

pub fn random_case(seed: u64, shape: &CaseShape) -> Case {
    let mut r = Stream::new(seed);
    let n_obj = 2 + r.index(4);
    let n_pred = 1 + r.index(shape.max_predicates);
    let vocab = Vocab::new(
        (0..n_obj).map(|i| format!("o{i}")).collect(),
        (0..n_pred).map(|i| format!("p{i}")).collect(),
    )
    .unwrap();
    let logits = r.uniform() < 0.5;
    let n_images = 1 + r.index(shape.max_images);
    let mut gt = Corpus::new(vocab.clone(), Split::Test);
    let mut preds = Corpus::new(vocab, Split::Test);
    for i in 0..n_images {
        let n_boxes = 2 + r.index(6);
        let boxes: Vec<BBox> = (0..n_boxes)
            .map(|b| {
                let y = r.index(3) as f64;
                BBox::new(3.0 * b as f64, y, 3.0 * b as f64 + 2.0, y + 2.0).unwrap()
            })
            .collect();
        let labels: Vec<usize> = (0..n_boxes).map(|_| r.index(n_obj)).collect();
        let mut all = Vec::new();
        for s in 0..n_boxes {
            for o in 0..n_boxes {
                if s != o {
                    all.push((s, o));
                }
            }
        }
        let n_rel = r.index(7.min(all.len()) + 1);
        let relations = shuffled(&mut r, all.clone())[..n_rel]
            .iter()
            .map(|&(s, o)| Relation {
                subj: s,
                obj: o,
                pred: r.index(n_pred),
            })
            .collect();
        let n_cand = 1 + r.index(shape.max_pairs.min(all.len()));
        let pairs = shuffled(&mut r, all)[..n_cand].to_vec();
        let predicate_scores = pairs
            .iter()
            .map(|_| {
                if logits {
                    (0..n_pred)
                        .map(|_| (r.index(7) as f64 - 3.0) * 0.5)
                        .collect()
                } else {
                    // Coarse weights so that ties and zeros are common.
                    let mut w: Vec<f64> = (0..n_pred).map(|_| r.index(4) as f64).collect();
                    if w.iter().all(|v| *v == 0.0) {
                        w.iter_mut().for_each(|v| *v = 1.0);
                    }
                    let total: f64 = w.iter().sum();
                    w.iter().map(|v| v / total).collect()
                }
            })
            .collect();
        let pred_labels = labels
            .iter()
            .map(|&l| {
                if r.uniform() < shape.label_noise {
                    (l + 1) % n_obj
                } else {
                    l
                }
            })
            .collect();
        let label_scores = (0..n_boxes)
            .map(|_| (1 + r.index(10)) as f64 / 10.0)
            .collect();
        let id = format!("img{i}");
        let drop_prediction = r.uniform() < 0.1;
        gt.insert(GroundTruthImage {
            image_id: id.clone(),
            boxes: boxes.clone(),
            labels,
            relations,
        })
        .unwrap();
        if !drop_prediction {
            preds
                .insert(PredictionImage {
                    image_id: id,
                    boxes,
                    labels: pred_labels,
                    label_scores,
                    pairs,
                    predicate_scores,
                    score_kind: if logits {
                        ScoreKind::Logit
                    } else {
                        ScoreKind::Probability
                    },
                })
                .unwrap();
        }
    }
    Case { gt, preds }
}

fn probabilities(p: &PredictionImage, pair: usize) -> Vec<f64> {
    match p.score_kind {
        ScoreKind::Probability => p.predicate_scores[pair].clone(),
        ScoreKind::Logit => softmax(&p.predicate_scores[pair]),
    }
}

fn weight(p: &PredictionImage, pair: usize, use_labels: bool) -> f64 {
    if !use_labels {
        return 1.0;
    }
    let (s, o) = p.pairs[pair];
    p.label_scores[s] * p.label_scores[o]
}

/// (score, pair, predicate) sorted best first.
fn sort_entries(entries: &mut [(f64, usize, usize)]) {
    entries.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
}

fn hit(
    g: &GroundTruthImage,
    p: &PredictionImage,
    top: &[(f64, usize, usize)],
    rel: &Relation,
) -> bool {
    top.iter().any(|&(_, pair, pred)| {
        let (s, o) = p.pairs[pair];
        (s, o) == (rel.subj, rel.obj)
            && pred == rel.pred
            && p.labels[s] == g.labels[s]
            && p.labels[o] == g.labels[o]
    })
}

fn global_top(
    p: &PredictionImage,
    k: usize,
    gc: bool,
    use_labels: bool,
) -> Vec<(f64, usize, usize)> {
    let mut entries = Vec::new();
    for pair in 0..p.pairs.len() {
        let probs = probabilities(p, pair);
        let w = weight(p, pair, use_labels);
        if gc {
            let mut best = 0;
            for c in 1..probs.len() {
                if probs[c] > probs[best] {
                    best = c;
                }
            }
            entries.push((w * probs[best], pair, best));
        } else {
            for (c, v) in probs.iter().enumerate() {
                entries.push((w * v, pair, c));
            }
        }
    }
    sort_entries(&mut entries);
    entries.truncate(k);
    entries
}

fn category_top(
    p: &PredictionImage,
    c: usize,
    k: usize,
    use_labels: bool,
) -> Vec<(f64, usize, usize)> {
    let mut entries: Vec<(f64, usize, usize)> = (0..p.pairs.len())
        .map(|pair| {
            (
                weight(p, pair, use_labels) * probabilities(p, pair)[c],
                pair,
                c,
            )
        })
        .collect();
    sort_entries(&mut entries);
    entries.truncate(k);
    entries
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleValues {
    pub recall: f64,
    pub mean_recall: f64,
    pub imr: f64,
    pub per_category_imr: BTreeMap<usize, f64>,
}

fn average(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Brute-force R@K, mR@K and IMR@K (probability scoring for IMR).
pub fn oracle(
    gt: &GtCorpus,
    preds: &PredCorpus,
    k: usize,
    gc: bool,
    use_labels: bool,
) -> OracleValues {
    let mut recalls = Vec::new();
    let mut global_cat: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut indep_cat: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for g in gt.iter() {
        if g.relations.is_empty() {
            continue;
        }
        let p = preds.get(&g.image_id);
        let top = p
            .map(|p| global_top(p, k, gc, use_labels))
            .unwrap_or_default();
        let is_hit =
            |rel: &Relation, top: &[(f64, usize, usize)]| p.is_some_and(|p| hit(g, p, top, rel));
        let hits = g.relations.iter().filter(|r| is_hit(r, &top)).count();
        recalls.push(hits as f64 / g.relations.len() as f64);
        let cats: BTreeSet<usize> = g.relations.iter().map(|r| r.pred).collect();
        for c in cats {
            let of_c: Vec<&Relation> = g.relations.iter().filter(|r| r.pred == c).collect();
            let n = of_c.len() as f64;
            let global_hits = of_c.iter().filter(|r| is_hit(r, &top)).count();
            global_cat
                .entry(c)
                .or_default()
                .push(global_hits as f64 / n);
            let own = p
                .map(|p| category_top(p, c, k, use_labels))
                .unwrap_or_default();
            let own_hits = of_c.iter().filter(|r| is_hit(r, &own)).count();
            indep_cat.entry(c).or_default().push(own_hits as f64 / n);
        }
    }
    let per_category_imr: BTreeMap<usize, f64> =
        indep_cat.iter().map(|(c, v)| (*c, average(v))).collect();
    let mr: Vec<f64> = global_cat.values().map(|v| average(v)).collect();
    let imr: Vec<f64> = per_category_imr.values().copied().collect();
    OracleValues {
        recall: if recalls.is_empty() {
            0.0
        } else {
            average(&recalls)
        },
        mean_recall: if mr.is_empty() { 0.0 } else { average(&mr) },
        imr: if imr.is_empty() { 0.0 } else { average(&imr) },
        per_category_imr,
    }
}

/// Diversity-weighted mean of per-category values, weights `n^tau`.
pub fn oracle_wimr(per_category: &BTreeMap<usize, f64>, n: &[usize], tau: f64) -> f64 {
    let t: BTreeMap<usize, f64> = per_category
        .keys()
        .map(|&c| (c, (n[c].max(1) as f64).powf(tau)))
        .collect();
    let total: f64 = t.values().sum();
    per_category.iter().map(|(c, v)| t[c] / total * v).sum()
}
