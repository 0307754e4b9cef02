//! Tail-replacement stress test.
//!
//! Takes the `N` predicates with the fewest distinct subject-object
//! category pairs in training, and for every test candidate whose category
//! pair was seen with one of them, blindly overwrites the prediction with
//! that predicate. No visual evidence is used, so any metric gain measures
//! how much the metric rewards subject-object priors.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::corpus::{softmax, Corpus, GtCorpus, PredCorpus, ScoreKind};
use crate::error::{Error, Result};
use crate::fmt::{csv_field, significant};
use crate::metrics::{evaluate, MetricConfig, MetricReport};
use crate::pko::{pair_categories, LabelSource};
use crate::stats::{compositional_diversity, CooccurrenceStats};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AttackPlan {
    /// Chosen predicates, ascending compositional diversity.
    pub selected: Vec<usize>,
    /// (subject category, object category) -> forced predicate.
    pub overrides: BTreeMap<(usize, usize), usize>,
}

pub fn build_plan(stats: &CooccurrenceStats, n: usize) -> Result<AttackPlan> {
    let max = stats.num_predicates();
    if n == 0 || n > max {
        return Err(Error::AttackSizeOutOfRange { n, max });
    }
    let order = compositional_diversity(stats).ascending;
    let selected: Vec<usize> = order[..n].to_vec();
    let mut overrides = BTreeMap::new();
    // Earlier entries have smaller diversity, so first insertion wins.
    for &pred in &selected {
        for &pair in &stats.pair_sets[pred] {
            overrides.entry(pair).or_insert(pred);
        }
    }
    Ok(AttackPlan {
        selected,
        overrides,
    })
}

/// Replaces the scores of every overridden pair by a one-hot probability
/// vector. The output is always in probability form; logits go through a
/// per-pair softmax first.
pub fn apply_replacement(
    preds: &PredCorpus,
    label_source: LabelSource,
    gt: Option<&GtCorpus>,
    plan: &AttackPlan,
) -> Result<PredCorpus> {
    let n_p = preds.vocab.num_predicates();
    let mut out = Corpus::new(preds.vocab.clone(), preds.split);
    for p in preds.iter() {
        let mut img = p.clone();
        if img.score_kind == ScoreKind::Logit {
            for scores in &mut img.predicate_scores {
                *scores = softmax(scores);
            }
            img.score_kind = ScoreKind::Probability;
        }
        for pair in 0..p.pairs.len() {
            let cats = pair_categories(p, pair, label_source, gt)?;
            if let Some(&forced) = plan.overrides.get(&cats) {
                let mut one_hot = vec![0.0; n_p];
                one_hot[forced] = 1.0;
                img.predicate_scores[pair] = one_hot;
            }
        }
        out.insert(img)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    /// Predicate added at this step; `None` for the untouched baseline.
    pub added_predicate: Option<usize>,
    /// Its number of distinct subject-object pairs in training.
    pub type_pair_count: Option<usize>,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSweep {
    pub rows: Vec<SweepRow>,
}

/// Evaluates the replacement attack for `N = 0..=n_max`. Diversity counts
/// for wIMR come from `stats`.
pub fn attack_sweep(
    gt: &GtCorpus,
    preds: &PredCorpus,
    stats: &CooccurrenceStats,
    n_max: usize,
    config: &MetricConfig,
    label_source: LabelSource,
) -> Result<AttackSweep> {
    if n_max > stats.num_predicates() {
        return Err(Error::AttackSizeOutOfRange {
            n: n_max,
            max: stats.num_predicates(),
        });
    }
    let order = compositional_diversity(stats).ascending;
    let rows = (0..=n_max)
        .into_par_iter()
        .map(|n| {
            let attacked = if n == 0 {
                preds.clone()
            } else {
                apply_replacement(preds, label_source, Some(gt), &build_plan(stats, n)?)?
            };
            let report = evaluate(gt, &attacked, config, Some(&stats.n))?;
            let added = n.checked_sub(1).map(|i| order[i]);
            Ok(SweepRow {
                n,
                added_predicate: added,
                type_pair_count: added.map(|p| stats.n[p]),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackSweep { rows })
}

impl AttackSweep {
    /// Columns: `N, added_predicate, type_pair_count`, every aggregate
    /// metric, then each metric's change against `N = 0`.
    pub fn to_csv(&self, predicate_names: &[String]) -> String {
        let Some(base) = self.rows.first() else {
            return String::new();
        };
        let base_entries = base.report.aggregates.entries();
        let mut out = String::from("N,added_predicate,type_pair_count");
        for (name, k, _) in &base_entries {
            out.push_str(&format!(",{name}@{k}"));
        }
        for (name, k, _) in &base_entries {
            out.push_str(&format!(",delta_{name}@{k}"));
        }
        out.push('\n');
        for row in &self.rows {
            let entries = row.report.aggregates.entries();
            out.push_str(&format!(
                "{},{},{}",
                row.n,
                row.added_predicate
                    .map(|p| csv_field(&predicate_names[p]))
                    .unwrap_or_default(),
                row.type_pair_count
                    .map(|c| c.to_string())
                    .unwrap_or_default()
            ));
            for (_, _, v) in &entries {
                out.push_str(&format!(",{}", significant(*v, 9)));
            }
            for ((_, _, v), (_, _, b)) in entries.iter().zip(&base_entries) {
                out.push_str(&format!(",{}", significant(v - b, 9)));
            }
            out.push('\n');
        }
        out
    }
}
