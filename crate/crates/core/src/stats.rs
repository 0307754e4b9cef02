//! Co-occurrence statistics over (subject, object, predicate) triplets.
//!
//! [`CooccurrenceStats`] tallies triplet instances from a ground-truth
//! corpus and derives the predicate-subject and predicate-object marginals,
//! the distinct subject-object pairs seen with each predicate and their
//! count (the compositional diversity of the predicate).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::GtCorpus;
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceStats {
    num_objects: usize,
    num_predicates: usize,
    /// (subject category, object category, predicate) -> instances.
    pub counts: BTreeMap<(usize, usize, usize), u64>,
    /// Distinct subject-object category pairs per predicate.
    pub pair_sets: Vec<BTreeSet<(usize, usize)>>,
    /// `n[c] == pair_sets[c].len()`.
    pub n: Vec<usize>,
    /// `N_p x N_s`.
    pub a_subj: Vec<Vec<u64>>,
    /// `N_p x N_o`.
    pub a_obj: Vec<Vec<u64>>,
}

impl CooccurrenceStats {
    pub fn empty(num_objects: usize, num_predicates: usize) -> Self {
        CooccurrenceStats {
            num_objects,
            num_predicates,
            counts: BTreeMap::new(),
            pair_sets: vec![BTreeSet::new(); num_predicates],
            n: vec![0; num_predicates],
            a_subj: vec![vec![0; num_objects]; num_predicates],
            a_obj: vec![vec![0; num_objects]; num_predicates],
        }
    }

    pub fn num_objects(&self) -> usize {
        self.num_objects
    }

    pub fn num_predicates(&self) -> usize {
        self.num_predicates
    }

    fn add(&mut self, subj: usize, obj: usize, pred: usize, count: u64) {
        *self.counts.entry((subj, obj, pred)).or_default() += count;
        self.a_subj[pred][subj] += count;
        self.a_obj[pred][obj] += count;
        if self.pair_sets[pred].insert((subj, obj)) {
            self.n[pred] += 1;
        }
    }

    /// Total triplet instances per predicate.
    pub fn instance_counts(&self) -> Vec<u64> {
        self.a_subj.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn save(&self, epsilon: f64, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json_string(epsilon);
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn to_json_string(&self, epsilon: f64) -> String {
        let file = StatsFile {
            a_obj: self.a_obj.clone(),
            a_subj: self.a_subj.clone(),
            counts: self
                .counts
                .iter()
                .map(|(&(s, o, p), &c)| [s as u64, o as u64, p as u64, c])
                .collect(),
            epsilon,
            n: self.n.iter().copied().enumerate().collect(),
            pair_sets: self
                .pair_sets
                .iter()
                .enumerate()
                .map(|(p, set)| (p, set.iter().map(|&(s, o)| [s, o]).collect()))
                .collect(),
        };
        serde_json::to_string(&file).expect("stats serialize")
    }

    /// Inverse of [`CooccurrenceStats::to_json_string`]; returns the stats
    /// and the recorded smoothing constant.
    pub fn from_json_str(text: &str) -> Result<(Self, f64)> {
        let file: StatsFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let num_predicates = file.a_subj.len();
        let num_objects = file.a_subj.first().map_or(0, Vec::len);
        let mut stats = CooccurrenceStats::empty(num_objects, num_predicates);
        for [s, o, p, c] in file.counts {
            let (s, o, p) = (s as usize, o as usize, p as usize);
            if s >= num_objects || o >= num_objects || p >= num_predicates {
                return Err(Error::IndexOutOfRange {
                    what: "stats count",
                    index: s.max(o).max(p),
                    len: num_objects.max(num_predicates),
                });
            }
            stats.add(s, o, p, c);
        }
        let consistent = stats.a_subj == file.a_subj
            && stats.a_obj == file.a_obj
            && file.n.len() == num_predicates
            && file.n.iter().all(|(&p, &n)| stats.n.get(p) == Some(&n))
            && file.pair_sets.iter().all(|(&p, pairs)| {
                stats.pair_sets.get(p).is_some_and(|set| {
                    set.len() == pairs.len() && pairs.iter().all(|&[s, o]| set.contains(&(s, o)))
                })
            });
        if !consistent {
            return Err(Error::Parse(
                "stats file marginals disagree with its counts".into(),
            ));
        }
        Ok((stats, file.epsilon))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, f64)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    a_obj: Vec<Vec<u64>>,
    a_subj: Vec<Vec<u64>>,
    /// `[subject, object, predicate, count]`
    counts: Vec<[u64; 4]>,
    epsilon: f64,
    n: BTreeMap<usize, usize>,
    pair_sets: BTreeMap<usize, Vec<[usize; 2]>>,
}

/// Counts triplet instances (not images) in a training corpus.
pub fn build_cooccurrence(train: &GtCorpus) -> CooccurrenceStats {
    build_cooccurrence_from(&[train])
}

/// Pools several corpora sharing one vocabulary, e.g. for whole-dataset
/// diversity counts.
pub fn build_cooccurrence_from(corpora: &[&GtCorpus]) -> CooccurrenceStats {
    let vocab = &corpora[0].vocab;
    let mut stats = CooccurrenceStats::empty(vocab.num_objects(), vocab.num_predicates());
    for corpus in corpora {
        for img in corpus.iter() {
            for rel in &img.relations {
                stats.add(img.labels[rel.subj], img.labels[rel.obj], rel.pred, 1);
            }
        }
    }
    stats
}

/// Row-stochastic predicate-conditioned subject and object distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedStats {
    /// `N_p x N_s`, each row sums to 1.
    pub at_subj: Vec<Vec<f64>>,
    /// `N_p x N_o`, each row sums to 1.
    pub at_obj: Vec<Vec<f64>>,
    pub epsilon: f64,
}

impl NormalizedStats {
    pub fn num_predicates(&self) -> usize {
        self.at_subj.len()
    }

    pub fn num_objects(&self) -> usize {
        self.at_subj.first().map_or(0, Vec::len)
    }
}

fn smooth_rows(counts: &[Vec<u64>], epsilon: f64) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|row| {
            let total: f64 = row.iter().map(|&c| c as f64 + epsilon).sum();
            row.iter().map(|&c| (c as f64 + epsilon) / total).collect()
        })
        .collect()
}

pub fn normalize_stats(s: &CooccurrenceStats, epsilon: f64) -> Result<NormalizedStats> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "smoothing epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(NormalizedStats {
        at_subj: smooth_rows(&s.a_subj, epsilon),
        at_obj: smooth_rows(&s.a_obj, epsilon),
        epsilon,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diversity {
    /// Distinct subject-object pairs per predicate.
    pub n: Vec<usize>,
    /// Predicate ids by ascending `n`, then ascending instance count, then id.
    pub ascending: Vec<usize>,
}

pub fn compositional_diversity(s: &CooccurrenceStats) -> Diversity {
    let instances = s.instance_counts();
    let mut ascending: Vec<usize> = (0..s.num_predicates).collect();
    ascending.sort_by_key(|&p| (s.n[p], instances[p], p));
    Diversity {
        n: s.n.clone(),
        ascending,
    }
}

/// Un-normalized weights `max(n_c, 1)^tau` over `support`.
pub(crate) fn weight_terms(
    n: &[usize],
    tau: f64,
    support: &BTreeSet<usize>,
) -> Result<BTreeMap<usize, f64>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidConfig(format!("tau {tau} not in [0, 1]")));
    }
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    support
        .iter()
        .map(|&c| {
            let count = *n.get(c).ok_or(Error::MissingDiversity(c))?;
            Ok((c, (count.max(1) as f64).powf(tau)))
        })
        .collect()
}

/// Diversity weights `n_c^tau / sum_k n_k^tau` over `support`.
pub fn category_weights(
    n: &[usize],
    tau: f64,
    support: &BTreeSet<usize>,
) -> Result<BTreeMap<usize, f64>> {
    let terms = weight_terms(n, tau, support)?;
    let total: f64 = terms.values().sum();
    Ok(terms.into_iter().map(|(c, t)| (c, t / total)).collect())
}
