//! Recall family metrics for scene graph predictions.
//!
//! Four metrics share one per-image pass:
//!
//! * `R@K`: fraction of an image's ground-truth triplets recovered by the
//!   top-K of a single ranking over all candidate triplets, averaged over
//!   images.
//! * `mR@K`: the same global top-K, but recall is computed per predicate
//!   category, averaged over the images where the category occurs, then
//!   averaged over categories.
//! * `IMR@K`: every category ranks all candidate pairs by its own score
//!   and keeps an independent top-K, so categories never compete for
//!   slots. Aggregated like `mR@K`.
//! * `wIMR@K`: `IMR@K` with category weights `n_c^tau / sum_k n_k^tau`
//!   where `n_c` is the number of distinct subject-object category pairs
//!   seen with predicate `c`.
//!
//! Images without ground-truth relations are skipped everywhere. Images
//! missing from the prediction corpus count as zero recall. Aggregation
//! walks images by ascending id and categories by ascending id, so the
//! output does not depend on thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{validate_alignment, GroundTruthImage, GtCorpus, PredCorpus, PredictionImage};
use crate::error::{Error, Result};
use crate::fmt::{csv_field, significant};
use crate::matcher::{category_ranking, enumerate_triplets, match_ranks, ImrScore, MatchMode};
use crate::stats::weight_terms;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Cutoffs for R@K and mR@K.
    pub k_global: Vec<usize>,
    /// Cutoffs for IMR@K and wIMR@K.
    pub k_independent: Vec<usize>,
    pub tau: f64,
    pub graph_constraint: bool,
    pub mode: MatchMode,
    pub imr_score: ImrScore,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            k_global: vec![20, 50, 100],
            k_independent: vec![10, 20, 50],
            tau: 0.5,
            graph_constraint: true,
            mode: MatchMode::default(),
            imr_score: ImrScore::Prob,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self
            .k_global
            .iter()
            .chain(&self.k_independent)
            .any(|&k| k == 0)
        {
            return Err(Error::InvalidConfig("every K must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidConfig(format!(
                "tau {} not in [0, 1]",
                self.tau
            )));
        }
        MatchMode::new(self.mode.task, self.mode.iou_threshold)?;
        Ok(())
    }

    fn sorted_ks(ks: &[usize]) -> Vec<usize> {
        let set: BTreeSet<usize> = ks.iter().copied().collect();
        set.into_iter().collect()
    }
}

/// Per-image matching outcome, reusable for every K up to the scan depth.
#[derive(Debug, Clone)]
struct ImageEval {
    image_id: String,
    /// Predicate of each ground-truth relation.
    gt_preds: Vec<usize>,
    /// Rank in the global list at which each relation was matched.
    global_rank: Vec<Option<usize>>,
    /// Rank in its own category's list at which each relation was matched.
    independent_rank: Vec<Option<usize>>,
}

fn within(rank: Option<usize>, k: usize) -> bool {
    rank.is_some_and(|r| r < k)
}

impl ImageEval {
    fn new(
        g: &GroundTruthImage,
        p: Option<&PredictionImage>,
        config: &MetricConfig,
        global_depth: usize,
        independent_depth: usize,
    ) -> Self {
        let n = g.relations.len();
        let gt_preds: Vec<usize> = g.relations.iter().map(|r| r.pred).collect();
        let mut global_rank = vec![None; n];
        let mut independent_rank = vec![None; n];
        if let Some(p) = p {
            if global_depth > 0 {
                let mut ranked = enumerate_triplets(p, config.graph_constraint, config.mode.task);
                ranked.truncate(global_depth);
                global_rank = match_ranks(&ranked, p, g, &config.mode);
            }
            if independent_depth > 0 {
                let categories: BTreeSet<usize> = gt_preds.iter().copied().collect();
                for c in categories {
                    let mut ranked = category_ranking(p, c, config.mode.task, config.imr_score);
                    ranked.truncate(independent_depth);
                    let ranks = match_ranks(&ranked, p, g, &config.mode);
                    for (i, &pred) in gt_preds.iter().enumerate() {
                        if pred == c {
                            independent_rank[i] = ranks[i];
                        }
                    }
                }
            }
        }
        ImageEval {
            image_id: g.image_id.clone(),
            gt_preds,
            global_rank,
            independent_rank,
        }
    }

    fn recall(&self, k: usize) -> f64 {
        let hits = self.global_rank.iter().filter(|r| within(**r, k)).count();
        hits as f64 / self.gt_preds.len() as f64
    }

    /// Recall restricted to each category present in the image.
    fn category_recalls(&self, ranks: &[Option<usize>], k: usize) -> BTreeMap<usize, f64> {
        let mut tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for (&pred, &rank) in self.gt_preds.iter().zip(ranks) {
            let entry = tally.entry(pred).or_default();
            entry.1 += 1;
            if within(rank, k) {
                entry.0 += 1;
            }
        }
        tally
            .into_iter()
            .map(|(c, (hit, total))| (c, hit as f64 / total as f64))
            .collect()
    }
}

/// Evaluates every image with ground truth, in ascending id order.
fn evaluate_images(
    gt: &GtCorpus,
    preds: &PredCorpus,
    config: &MetricConfig,
    global_depth: usize,
    independent_depth: usize,
) -> Result<Vec<ImageEval>> {
    config.validate()?;
    validate_alignment(gt, preds)?;
    let images: Vec<&GroundTruthImage> = gt.iter().filter(|g| !g.relations.is_empty()).collect();
    Ok(images
        .par_iter()
        .map(|g| {
            ImageEval::new(
                g,
                preds.get(&g.image_id),
                config,
                global_depth,
                independent_depth,
            )
        })
        .collect())
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Averages per-image category recalls over supporting images.
fn per_category_mean(
    evals: &[ImageEval],
    k: usize,
    ranks: impl Fn(&ImageEval) -> &[Option<usize>],
) -> BTreeMap<usize, f64> {
    let mut per_image: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for e in evals {
        for (c, r) in e.category_recalls(ranks(e), k) {
            per_image.entry(c).or_default().push(r);
        }
    }
    per_image.into_iter().map(|(c, v)| (c, mean(v))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallResult {
    pub value: f64,
    /// Recall of every image with ground truth, by image id.
    pub per_image: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryResult {
    /// Mean over the categories in `per_category`.
    pub value: f64,
    /// Categories with test support only.
    pub per_category: BTreeMap<usize, f64>,
    /// Categories without any test support.
    pub excluded: Vec<usize>,
}

impl CategoryResult {
    fn new(per_category: BTreeMap<usize, f64>, num_predicates: usize) -> Self {
        let excluded = (0..num_predicates)
            .filter(|c| !per_category.contains_key(c))
            .collect();
        CategoryResult {
            value: mean(per_category.values().copied()),
            per_category,
            excluded,
        }
    }
}

pub fn recall_at_k(
    gt: &GtCorpus,
    preds: &PredCorpus,
    k: usize,
    config: &MetricConfig,
) -> Result<RecallResult> {
    check_k(k)?;
    let evals = evaluate_images(gt, preds, config, k, 0)?;
    let per_image: BTreeMap<String, f64> = evals
        .iter()
        .map(|e| (e.image_id.clone(), e.recall(k)))
        .collect();
    Ok(RecallResult {
        value: mean(evals.iter().map(|e| e.recall(k))),
        per_image,
    })
}

pub fn mean_recall_at_k(
    gt: &GtCorpus,
    preds: &PredCorpus,
    k: usize,
    config: &MetricConfig,
) -> Result<CategoryResult> {
    check_k(k)?;
    let evals = evaluate_images(gt, preds, config, k, 0)?;
    let per_category = per_category_mean(&evals, k, |e| &e.global_rank);
    Ok(CategoryResult::new(per_category, gt.vocab.num_predicates()))
}

pub fn imr_at_k(
    gt: &GtCorpus,
    preds: &PredCorpus,
    k: usize,
    config: &MetricConfig,
) -> Result<CategoryResult> {
    check_k(k)?;
    let evals = evaluate_images(gt, preds, config, 0, k)?;
    let per_category = per_category_mean(&evals, k, |e| &e.independent_rank);
    Ok(CategoryResult::new(per_category, gt.vocab.num_predicates()))
}

/// Diversity-weighted IMR@K using the config's `tau`.
pub fn wimr_at_k(
    gt: &GtCorpus,
    preds: &PredCorpus,
    k: usize,
    config: &MetricConfig,
    n_counts: &[usize],
) -> Result<f64> {
    let imr = imr_at_k(gt, preds, k, config)?;
    let support: BTreeSet<usize> = imr.per_category.keys().copied().collect();
    weighted_mean(&imr.per_category, n_counts, config.tau, &support)
}

/// `sum_c t_c x_c / sum_c t_c` with `t_c = max(n_c, 1)^tau`. With `tau = 0`
/// this is bit-identical to the plain mean.
fn weighted_mean(
    values: &BTreeMap<usize, f64>,
    n_counts: &[usize],
    tau: f64,
    support: &BTreeSet<usize>,
) -> Result<f64> {
    if support.is_empty() {
        return Ok(0.0);
    }
    let terms = weight_terms(n_counts, tau, support)?;
    let total: f64 = terms.values().sum();
    let weighted: f64 = terms.iter().map(|(c, t)| t * values[c]).sum();
    Ok(weighted / total)
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::InvalidConfig("K must be at least 1".into()))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub name: String,
    pub support_images: usize,
    pub support_triplets: usize,
    /// Category recall from the shared global ranking, by K.
    pub recall_at: BTreeMap<usize, f64>,
    /// Category recall from the independent ranking, by K.
    pub imr_at: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    #[serde(rename = "R")]
    pub recall: BTreeMap<usize, f64>,
    #[serde(rename = "mR")]
    pub mean_recall: BTreeMap<usize, f64>,
    #[serde(rename = "IMR")]
    pub imr: BTreeMap<usize, f64>,
    /// Absent when no diversity counts were supplied.
    #[serde(rename = "wIMR")]
    pub wimr: Option<BTreeMap<usize, f64>>,
}

impl Aggregates {
    /// `(metric name, K, value)` in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, usize, f64)> {
        let mut out = Vec::new();
        let families: [(&'static str, Option<&BTreeMap<usize, f64>>); 4] = [
            ("R", Some(&self.recall)),
            ("mR", Some(&self.mean_recall)),
            ("IMR", Some(&self.imr)),
            ("wIMR", self.wimr.as_ref()),
        ];
        for (name, values) in families {
            if let Some(values) = values {
                out.extend(values.iter().map(|(&k, &v)| (name, k, v)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: MetricConfig,
    /// Images with at least one ground-truth relation.
    pub evaluated_images: usize,
    /// Ground-truth images without relations.
    pub skipped_images: usize,
    /// Ground-truth images absent from the predictions (scored as empty).
    pub missing_predictions: Vec<String>,
    /// Predicted images without ground truth (ignored).
    pub extra_predictions: usize,
    pub per_category: BTreeMap<usize, CategoryReport>,
    /// Categories without test support, left out of every category mean.
    pub excluded_categories: Vec<usize>,
    pub aggregates: Aggregates,
    /// Normalized diversity weights over the supported categories.
    pub weights_used: Option<BTreeMap<usize, f64>>,
}

impl MetricReport {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per predicate category. Unsupported categories carry empty
    /// metric cells.
    pub fn per_category_csv(&self, predicate_names: &[String]) -> String {
        let ks_g = MetricConfig::sorted_ks(&self.config.k_global);
        let ks_i = MetricConfig::sorted_ks(&self.config.k_independent);
        let mut out = String::from("pred_id,name,support_triplets");
        for k in &ks_g {
            out.push_str(&format!(",recall@{k}"));
        }
        for k in &ks_i {
            out.push_str(&format!(",imr@{k}"));
        }
        out.push('\n');
        for (id, name) in predicate_names.iter().enumerate() {
            let row = self.per_category.get(&id);
            out.push_str(&format!(
                "{id},{},{}",
                csv_field(name),
                row.map_or(0, |r| r.support_triplets)
            ));
            for (ks, values) in [
                (&ks_g, row.map(|r| &r.recall_at)),
                (&ks_i, row.map(|r| &r.imr_at)),
            ] {
                for k in ks {
                    out.push(',');
                    if let Some(v) = values.and_then(|m| m.get(k)) {
                        out.push_str(&significant(*v, 9));
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: impl AsRef<Path>, predicate_names: &[String]) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json_string()).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join("per_category.csv");
        std::fs::write(&csv, self.per_category_csv(predicate_names)).map_err(|e| Error::io(&csv, e))
    }
}

/// Computes every configured metric in one pass.
///
/// `n_counts` holds the compositional diversity per predicate id; without
/// it wIMR is left out of the report.
pub fn evaluate(
    gt: &GtCorpus,
    preds: &PredCorpus,
    config: &MetricConfig,
    n_counts: Option<&[usize]>,
) -> Result<MetricReport> {
    let ks_g = MetricConfig::sorted_ks(&config.k_global);
    let ks_i = MetricConfig::sorted_ks(&config.k_independent);
    let depth_g = ks_g.last().copied().unwrap_or(0);
    let depth_i = ks_i.last().copied().unwrap_or(0);
    let alignment = validate_alignment(gt, preds)?;
    let evals = evaluate_images(gt, preds, config, depth_g, depth_i)?;

    let mut per_category: BTreeMap<usize, CategoryReport> = BTreeMap::new();
    for e in &evals {
        let present: BTreeSet<usize> = e.gt_preds.iter().copied().collect();
        for &c in &e.gt_preds {
            per_category
                .entry(c)
                .or_insert_with(|| CategoryReport {
                    name: gt.vocab.predicate_name(c).to_string(),
                    support_images: 0,
                    support_triplets: 0,
                    recall_at: BTreeMap::new(),
                    imr_at: BTreeMap::new(),
                })
                .support_triplets += 1;
        }
        for c in present {
            per_category
                .get_mut(&c)
                .expect("inserted above")
                .support_images += 1;
        }
    }
    let support: BTreeSet<usize> = per_category.keys().copied().collect();

    let mut aggregates = Aggregates {
        recall: BTreeMap::new(),
        mean_recall: BTreeMap::new(),
        imr: BTreeMap::new(),
        wimr: n_counts.map(|_| BTreeMap::new()),
    };
    for &k in &ks_g {
        aggregates
            .recall
            .insert(k, mean(evals.iter().map(|e| e.recall(k))));
        let by_cat = per_category_mean(&evals, k, |e| &e.global_rank);
        aggregates
            .mean_recall
            .insert(k, mean(by_cat.values().copied()));
        for (c, v) in by_cat {
            per_category
                .get_mut(&c)
                .expect("supported")
                .recall_at
                .insert(k, v);
        }
    }
    for &k in &ks_i {
        let by_cat = per_category_mean(&evals, k, |e| &e.independent_rank);
        aggregates.imr.insert(k, mean(by_cat.values().copied()));
        if let (Some(n), Some(w)) = (n_counts, aggregates.wimr.as_mut()) {
            w.insert(k, weighted_mean(&by_cat, n, config.tau, &support)?);
        }
        for (c, v) in by_cat {
            per_category
                .get_mut(&c)
                .expect("supported")
                .imr_at
                .insert(k, v);
        }
    }
    let weights_used = match n_counts {
        Some(n) if !support.is_empty() => {
            Some(crate::stats::category_weights(n, config.tau, &support)?)
        }
        Some(_) => Some(BTreeMap::new()),
        None => None,
    };

    Ok(MetricReport {
        config: config.clone(),
        evaluated_images: evals.len(),
        skipped_images: gt.len() - evals.len(),
        missing_predictions: alignment.missing,
        extra_predictions: alignment.extra.len(),
        excluded_categories: (0..gt.vocab.num_predicates())
            .filter(|c| !support.contains(c))
            .collect(),
        per_category,
        aggregates,
        weights_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BBox, Corpus, Relation, ScoreKind, Split, Vocab};

    fn vocab(num_predicates: usize) -> Vocab {
        Vocab::new(
            (0..4).map(|i| format!("o{i}")).collect(),
            (0..num_predicates).map(|i| format!("p{i}")).collect(),
        )
        .unwrap()
    }

    fn boxes(n: usize) -> Vec<BBox> {
        (0..n)
            .map(|i| BBox::new(i as f64 * 10.0, 0.0, i as f64 * 10.0 + 5.0, 5.0).unwrap())
            .collect()
    }

    /// Ground truth over `num_boxes` objects all labelled 0.
    fn gt_image(id: &str, num_boxes: usize, rels: &[(usize, usize, usize)]) -> GroundTruthImage {
        GroundTruthImage {
            image_id: id.into(),
            boxes: boxes(num_boxes),
            labels: vec![0; num_boxes],
            relations: rels
                .iter()
                .map(|&(subj, obj, pred)| Relation { subj, obj, pred })
                .collect(),
        }
    }

    fn pred_image(
        id: &str,
        num_boxes: usize,
        pairs: &[(usize, usize)],
        scores: Vec<Vec<f64>>,
    ) -> PredictionImage {
        PredictionImage {
            image_id: id.into(),
            boxes: boxes(num_boxes),
            labels: vec![0; num_boxes],
            label_scores: vec![1.0; num_boxes],
            pairs: pairs.to_vec(),
            predicate_scores: scores,
            score_kind: ScoreKind::Probability,
        }
    }

    fn corpora(
        v: &Vocab,
        gts: Vec<GroundTruthImage>,
        preds: Vec<PredictionImage>,
    ) -> (GtCorpus, PredCorpus) {
        let mut g = Corpus::new(v.clone(), Split::Test);
        gts.into_iter().for_each(|i| g.insert(i).unwrap());
        let mut p = Corpus::new(v.clone(), Split::Test);
        preds.into_iter().for_each(|i| p.insert(i).unwrap());
        (g, p)
    }

    #[test]
    fn recall_scan_example() {
        // Ranked: pair0 hits gt#0, pair1 hits nothing, pair2 hits gt#1.
        let v = vocab(2);
        let g = gt_image("a", 4, &[(0, 1, 0), (2, 3, 1)]);
        let p = pred_image(
            "a",
            4,
            &[(0, 1), (1, 2), (2, 3)],
            vec![vec![0.9, 0.1], vec![0.8, 0.2], vec![0.3, 0.7]],
        );
        let (g, p) = corpora(&v, vec![g], vec![p]);
        let cfg = MetricConfig::default();
        assert_eq!(recall_at_k(&g, &p, 2, &cfg).unwrap().value, 0.5);
        assert_eq!(recall_at_k(&g, &p, 3, &cfg).unwrap().value, 1.0);
    }

    #[test]
    fn empty_predictions_score_zero() {
        let v = vocab(2);
        let (g, p) = corpora(&v, vec![gt_image("a", 2, &[(0, 1, 1)])], vec![]);
        let report = evaluate(&g, &p, &MetricConfig::default(), Some(&[1, 1])).unwrap();
        assert!(report
            .aggregates
            .entries()
            .iter()
            .all(|(_, _, v)| *v == 0.0));
        assert_eq!(report.per_category[&1].support_triplets, 1);
        assert_eq!(report.missing_predictions, vec!["a".to_string()]);
        assert_eq!(report.excluded_categories, vec![0]);
    }

    #[test]
    fn mean_recall_three_steps() {
        // Category 0 has 2 gt (1 recalled), category 1 has 1 gt (recalled).
        let v = vocab(2);
        let g = gt_image("a", 4, &[(0, 1, 0), (1, 2, 0), (2, 3, 1)]);
        let p = pred_image(
            "a",
            4,
            &[(0, 1), (1, 2), (2, 3)],
            vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.3, 0.7]],
        );
        let (g, p) = corpora(&v, vec![g], vec![p]);
        let r = mean_recall_at_k(&g, &p, 3, &MetricConfig::default()).unwrap();
        assert_eq!(r.per_category[&0], 0.5);
        assert_eq!(r.per_category[&1], 1.0);
        assert_eq!(r.value, 0.75);
    }

    #[test]
    fn independent_ranking_example() {
        // Class-0 scores [0.9, 0.2, 0.5]; gt-0 sits on the pair scored 0.5.
        let v = vocab(2);
        let g = gt_image("a", 4, &[(2, 3, 0)]);
        let p = pred_image(
            "a",
            4,
            &[(0, 1), (1, 2), (2, 3)],
            vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.5, 0.5]],
        );
        let (g, p) = corpora(&v, vec![g], vec![p]);
        let cfg = MetricConfig::default();
        assert_eq!(imr_at_k(&g, &p, 1, &cfg).unwrap().value, 0.0);
        assert_eq!(imr_at_k(&g, &p, 2, &cfg).unwrap().value, 1.0);
    }

    #[test]
    fn independent_lists_reuse_pairs() {
        // Both gt relations are second choices on their pairs; the global
        // graph-constrained list never recalls them, independent lists do.
        let v = vocab(3);
        let g = gt_image("a", 3, &[(0, 1, 1), (1, 2, 2)]);
        let p = pred_image(
            "a",
            3,
            &[(0, 1), (1, 2)],
            vec![vec![0.6, 0.3, 0.1], vec![0.6, 0.1, 0.3]],
        );
        let (g, p) = corpora(&v, vec![g], vec![p]);
        let cfg = MetricConfig::default();
        assert_eq!(mean_recall_at_k(&g, &p, 10, &cfg).unwrap().value, 0.0);
        assert_eq!(imr_at_k(&g, &p, 1, &cfg).unwrap().value, 1.0);
    }

    #[test]
    fn wimr_weighting() {
        let v = vocab(2);
        // Class-0 scores (a, b, c) on pairs (0,1), (2,3), (1,2). Category 0
        // is recalled at K=1 in 2 of 5 images, category 1 in 4 of 5.
        let class0 = [
            (0.9, 0.1, 0.5),
            (0.9, 0.1, 0.5),
            (0.4, 0.1, 0.6),
            (0.4, 0.1, 0.6),
            (0.5, 0.5, 0.9),
        ];
        let mut gts = Vec::new();
        let mut preds = Vec::new();
        for (i, &(a, b, c)) in class0.iter().enumerate() {
            let id = format!("{i}");
            gts.push(gt_image(&id, 4, &[(0, 1, 0), (2, 3, 1)]));
            preds.push(pred_image(
                &id,
                4,
                &[(0, 1), (2, 3), (1, 2)],
                vec![vec![a, 1.0 - a], vec![b, 1.0 - b], vec![c, 1.0 - c]],
            ));
        }
        let (g, p) = corpora(&v, gts, preds);
        let cfg = MetricConfig {
            tau: 1.0,
            ..MetricConfig::default()
        };
        let imr = imr_at_k(&g, &p, 1, &cfg).unwrap();
        assert_eq!(imr.per_category[&0], 0.4);
        assert_eq!(imr.per_category[&1], 0.8);
        // Weights 2/3 and 1/3.
        let w = wimr_at_k(&g, &p, 1, &cfg, &[2, 1]).unwrap();
        assert!((w - 8.0 / 15.0).abs() < 1e-15);

        let flat = MetricConfig {
            tau: 0.0,
            ..cfg.clone()
        };
        assert_eq!(wimr_at_k(&g, &p, 1, &flat, &[40, 1]).unwrap(), imr.value);
        let same_n = wimr_at_k(&g, &p, 1, &cfg, &[7, 7]).unwrap();
        assert!((same_n - imr.value).abs() < 1e-15);
        assert!(matches!(
            wimr_at_k(&g, &p, 1, &cfg, &[2]),
            Err(Error::MissingDiversity(1))
        ));
    }

    #[test]
    fn single_category_collapse() {
        let v = vocab(1);
        let g = gt_image("a", 4, &[(0, 1, 0), (2, 3, 0)]);
        let p = pred_image("a", 4, &[(0, 1), (1, 2), (2, 3)], vec![vec![1.0]; 3]);
        let (g, p) = corpora(&v, vec![g], vec![p]);
        let cfg = MetricConfig::default();
        for k in 1..5 {
            let r = recall_at_k(&g, &p, k, &cfg).unwrap().value;
            assert_eq!(mean_recall_at_k(&g, &p, k, &cfg).unwrap().value, r);
            assert_eq!(imr_at_k(&g, &p, k, &cfg).unwrap().value, r);
        }
    }

    #[test]
    fn zero_gt_images_are_skipped() {
        let v = vocab(1);
        let (g, p) = corpora(
            &v,
            vec![gt_image("a", 2, &[(0, 1, 0)]), gt_image("b", 2, &[])],
            vec![pred_image("a", 2, &[(0, 1)], vec![vec![1.0]])],
        );
        let report = evaluate(&g, &p, &MetricConfig::default(), None).unwrap();
        assert_eq!(report.evaluated_images, 1);
        assert_eq!(report.skipped_images, 1);
        assert_eq!(report.aggregates.recall[&20], 1.0);
        assert!(report.aggregates.wimr.is_none());
    }

    #[test]
    fn csv_layout() {
        let v = vocab(2);
        let (g, p) = corpora(
            &v,
            vec![gt_image("a", 2, &[(0, 1, 1)])],
            vec![pred_image("a", 2, &[(0, 1)], vec![vec![0.25, 0.75]])],
        );
        let cfg = MetricConfig {
            k_global: vec![5],
            k_independent: vec![1],
            ..MetricConfig::default()
        };
        let report = evaluate(&g, &p, &cfg, None).unwrap();
        let csv = report.per_category_csv(v.predicates());
        assert_eq!(
            csv,
            "pred_id,name,support_triplets,recall@5,imr@1\n0,p0,0,,\n1,p1,1,1,1\n"
        );
    }

    #[test]
    fn config_validation() {
        let bad_k = MetricConfig {
            k_global: vec![0],
            ..MetricConfig::default()
        };
        assert!(bad_k.validate().is_err());
        let bad_tau = MetricConfig {
            tau: 1.5,
            ..MetricConfig::default()
        };
        assert!(bad_tau.validate().is_err());
    }
}
