//! Seeded synthetic corpora with controllable long tail, compositional
//! diversity and predicate correlation.
//!
//! Randomness comes from ChaCha8 seeded with the little-endian bytes of the
//! `u64` seed followed by 24 zero bytes. Uniforms are `(next_u64 >> 11) *
//! 2^-53`, indices are `floor(u * n)`, and normals use Box-Muller on
//! `(1 - u1, u2)` keeping only the cosine branch. The draw order is fixed:
//! all pair sets, then train images, then test images with their
//! predictions. Any implementation following the same recipe reproduces
//! the files byte for byte.

use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    save_ground_truth, save_predictions, write_vocab, BBox, Corpus, GroundTruthImage, GtCorpus,
    PredCorpus, PredictionImage, Relation, ScoreKind, Split, Vocab,
};
use crate::error::{Error, Result};

pub const RNG_DESCRIPTION: &str = "ChaCha8 (rand_chacha), seed = u64 little-endian zero-padded \
to 32 bytes; uniform = (next_u64 >> 11) * 2^-53; index = floor(uniform * n); \
normal = Box-Muller cos branch on (1 - u1, u2)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Row r: relative score mass the simulated model gives each predicate
    /// when the true predicate is r.
    pub correlation: Vec<Vec<f64>>,
    /// Distinct subject-object category pairs per predicate.
    pub diversity_profile: Vec<usize>,
    pub noise_sigma: f64,
    /// Test images.
    pub num_images: usize,
    pub num_objects: usize,
    pub num_predicates: usize,
    pub num_train_images: usize,
    pub pairs_per_image: usize,
    pub seed: u64,
    pub zipf_exponent: f64,
}

impl SynthParams {
    /// Identity kernel, three pairs per predicate, mild skew.
    pub fn basic(seed: u64, num_objects: usize, num_predicates: usize) -> Self {
        SynthParams {
            correlation: identity(num_predicates),
            diversity_profile: vec![3.min(grid_size(num_objects)).max(1); num_predicates],
            noise_sigma: 0.0,
            num_images: 20,
            num_objects,
            num_predicates,
            num_train_images: 50,
            pairs_per_image: 5,
            seed,
            zipf_exponent: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_objects < 2 {
            return bad("num_objects must be at least 2");
        }
        if self.num_predicates == 0 {
            return bad("num_predicates must be positive");
        }
        if self.pairs_per_image == 0 {
            return bad("pairs_per_image must be positive");
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return bad("zipf_exponent must be finite and non-negative");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if self.diversity_profile.len() != self.num_predicates {
            return Err(Error::LengthMismatch {
                what: "diversity_profile",
                expected: self.num_predicates,
                got: self.diversity_profile.len(),
            });
        }
        let grid = grid_size(self.num_objects);
        for (c, &size) in self.diversity_profile.iter().enumerate() {
            if size == 0 {
                return bad(&format!("predicate {c} has an empty pair set"));
            }
            if size > grid {
                return Err(Error::Infeasible(format!(
                    "predicate {c} needs {size} pairs but only {grid} exist"
                )));
            }
        }
        if self.correlation.len() != self.num_predicates {
            return Err(Error::LengthMismatch {
                what: "correlation",
                expected: self.num_predicates,
                got: self.correlation.len(),
            });
        }
        for row in &self.correlation {
            if row.len() != self.num_predicates {
                return Err(Error::LengthMismatch {
                    what: "correlation row",
                    expected: self.num_predicates,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return bad("correlation entries must be finite and non-negative");
            }
            if row.iter().sum::<f64>() <= 0.0 {
                return bad("every correlation row needs positive mass");
            }
        }
        Ok(())
    }
}

pub fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|r| (0..n).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Ordered category pairs with distinct subject and object.
fn grid_size(num_objects: usize) -> usize {
    num_objects * num_objects.saturating_sub(1)
}

fn grid(num_objects: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(grid_size(num_objects));
    for s in 0..num_objects {
        for o in 0..num_objects {
            if s != o {
                out.push((s, o));
            }
        }
    }
    out
}

pub struct Stream(ChaCha8Rng);

impl Stream {
    pub fn new(seed: u64) -> Self {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&seed.to_le_bytes());
        Stream(ChaCha8Rng::from_seed(bytes))
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn index(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// First `k` entries of a Fisher-Yates shuffle of `items`.
    fn sample<T: Copy>(&mut self, items: &[T], k: usize) -> Vec<T> {
        let mut pool = items.to_vec();
        for i in 0..k {
            let j = i + self.index(pool.len() - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }

    fn weighted(&mut self, cumulative: &[f64]) -> usize {
        let total = *cumulative.last().expect("non-empty weights");
        let u = self.uniform() * total;
        cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(cumulative.len() - 1)
    }
}

pub fn synthetic_vocab(num_objects: usize, num_predicates: usize) -> Result<Vocab> {
    Vocab::new(
        (0..num_objects).map(|i| format!("obj_{i}")).collect(),
        (0..num_predicates).map(|i| format!("pred_{i}")).collect(),
    )
}

/// Relation j of an image uses boxes 2j and 2j+1, laid out side by side
/// so no two boxes overlap.
fn relation_boxes(j: usize) -> (BBox, BBox) {
    let x = 20.0 * j as f64;
    (
        BBox::new(x, 0.0, x + 8.0, 8.0).expect("valid box"),
        BBox::new(x + 10.0, 0.0, x + 18.0, 8.0).expect("valid box"),
    )
}

fn image_from_pairs(image_id: String, rels: &[(usize, usize, usize)]) -> GroundTruthImage {
    let mut boxes = Vec::with_capacity(2 * rels.len());
    let mut labels = Vec::with_capacity(2 * rels.len());
    let mut relations = Vec::with_capacity(rels.len());
    for (j, &(s, o, p)) in rels.iter().enumerate() {
        let (bs, bo) = relation_boxes(j);
        boxes.extend([bs, bo]);
        labels.extend([s, o]);
        relations.push(Relation {
            subj: 2 * j,
            obj: 2 * j + 1,
            pred: p,
        });
    }
    GroundTruthImage {
        image_id,
        boxes,
        labels,
        relations,
    }
}

/// Prediction image whose candidates are exactly the ground-truth pairs.
fn prediction_for(g: &GroundTruthImage, scores: Vec<Vec<f64>>) -> PredictionImage {
    PredictionImage {
        image_id: g.image_id.clone(),
        boxes: g.boxes.clone(),
        labels: g.labels.clone(),
        label_scores: vec![1.0; g.labels.len()],
        pairs: g.relations.iter().map(|r| (r.subj, r.obj)).collect(),
        predicate_scores: scores,
        score_kind: ScoreKind::Probability,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub params: SynthParams,
    /// Sampled pair set of each predicate.
    pub pair_sets: Vec<Vec<(usize, usize)>>,
    pub train: GtCorpus,
    pub test: GtCorpus,
    pub preds: PredCorpus,
}

pub fn generate(params: &SynthParams) -> Result<SynthCorpus> {
    params.validate()?;
    let vocab = synthetic_vocab(params.num_objects, params.num_predicates)?;
    let mut rng = Stream::new(params.seed);
    let cells = grid(params.num_objects);
    let pair_sets: Vec<Vec<(usize, usize)>> = params
        .diversity_profile
        .iter()
        .map(|&size| rng.sample(&cells, size))
        .collect();
    let mut cumulative = Vec::with_capacity(params.num_predicates);
    let mut acc = 0.0;
    for c in 0..params.num_predicates {
        acc += ((c + 1) as f64).powf(-params.zipf_exponent);
        cumulative.push(acc);
    }
    let draw_image = |rng: &mut Stream, id: String| {
        let rels: Vec<(usize, usize, usize)> = (0..params.pairs_per_image)
            .map(|_| {
                let p = rng.weighted(&cumulative);
                let (s, o) = pair_sets[p][rng.index(pair_sets[p].len())];
                (s, o, p)
            })
            .collect();
        image_from_pairs(id, &rels)
    };

    let mut train = Corpus::new(vocab.clone(), Split::Train);
    for i in 0..params.num_train_images {
        train.insert(draw_image(&mut rng, format!("train_{i:06}")))?;
    }
    let mut test = Corpus::new(vocab.clone(), Split::Test);
    let mut preds = Corpus::new(vocab, Split::Test);
    for i in 0..params.num_images {
        let g = draw_image(&mut rng, format!("test_{i:06}"));
        let scores = g
            .relations
            .iter()
            .map(|r| {
                let kernel = &params.correlation[r.pred];
                let mut p: Vec<f64> = kernel
                    .iter()
                    .map(|&k| k * (params.noise_sigma * rng.normal()).exp())
                    .collect();
                let total: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= total);
                p
            })
            .collect();
        preds.insert(prediction_for(&g, scores))?;
        test.insert(g)?;
    }
    Ok(SynthCorpus {
        params: params.clone(),
        pair_sets,
        train,
        test,
        preds,
    })
}

#[derive(Serialize)]
struct Provenance<'a> {
    params: &'a SynthParams,
    rng: &'a str,
}

impl SynthCorpus {
    pub fn params_json(&self) -> String {
        let p = Provenance {
            params: &self.params,
            rng: RNG_DESCRIPTION,
        };
        serde_json::to_string_pretty(&p).expect("params serialize") + "\n"
    }

    /// Writes vocab.json, train.jsonl, test.jsonl, preds.jsonl and params.json.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_vocab(&self.train.vocab, dir.join("vocab.json"))?;
        save_ground_truth(&self.train, dir.join("train.jsonl"))?;
        save_ground_truth(&self.test, dir.join("test.jsonl"))?;
        save_predictions(&self.preds, dir.join("preds.jsonl"))?;
        let path = dir.join("params.json");
        std::fs::write(&path, self.params_json()).map_err(|e| Error::io(path, e))
    }
}

fn check_grid(num_objects: usize, needed: usize) -> Result<Vec<(usize, usize)>> {
    let available = grid_size(num_objects);
    if needed == 0 || needed > available {
        return Err(Error::Infeasible(format!(
            "{needed} disjoint pairs requested, {num_objects} objects give {available}"
        )));
    }
    Ok(grid(num_objects))
}

/// Each predicate owns exactly one category pair; train and test share the
/// mapping. At least eight images per split with up to five relations
/// each; predicates are cycled so every one appears in both splits and
/// none appears twice in one image.
pub fn deterministic_mapping_corpus(
    num_objects: usize,
    num_predicates: usize,
    seed: u64,
) -> Result<(GtCorpus, GtCorpus)> {
    let per_image = num_predicates.min(5);
    let images = 8.max(num_predicates.div_ceil(per_image));
    deterministic_mapping_corpus_with(num_objects, num_predicates, images, per_image, seed)
}

pub fn deterministic_mapping_corpus_with(
    num_objects: usize,
    num_predicates: usize,
    images_per_split: usize,
    relations_per_image: usize,
    seed: u64,
) -> Result<(GtCorpus, GtCorpus)> {
    let cells = check_grid(num_objects, num_predicates)?;
    if images_per_split * relations_per_image < num_predicates {
        return Err(Error::Infeasible(format!(
            "{images_per_split} images of {relations_per_image} relations cannot cover {num_predicates} predicates"
        )));
    }
    let vocab = synthetic_vocab(num_objects, num_predicates)?;
    let mapping = Stream::new(seed).sample(&cells, num_predicates);
    let make = |split: Split, prefix: &str| -> Result<GtCorpus> {
        let mut c = Corpus::new(vocab.clone(), split);
        for i in 0..images_per_split {
            let rels: Vec<(usize, usize, usize)> = (0..relations_per_image)
                .map(|j| {
                    let p = (i * relations_per_image + j) % num_predicates;
                    (mapping[p].0, mapping[p].1, p)
                })
                .collect();
            c.insert(image_from_pairs(format!("{prefix}_{i:06}"), &rels))?;
        }
        Ok(c)
    };
    Ok((make(Split::Train, "train")?, make(Split::Test, "test")?))
}

/// A corpus where head predicates own three category pairs each and tail
/// predicates one each, all disjoint. The simulated model is one-hot on
/// the true predicate for head samples and one-hot on head predicate 0 for
/// tail samples, so tail predicates never appear in its outputs.
///
/// Tail predicate `t` (id `num_head + t`) occurs `t + 1` times per image,
/// which makes the ascending-diversity order the tail in id order.
pub fn disjoint_tail_corpus(
    num_objects: usize,
    num_head: usize,
    num_tail: usize,
    seed: u64,
) -> Result<(GtCorpus, GtCorpus, PredCorpus)> {
    if num_head == 0 {
        return Err(Error::InvalidConfig(
            "need at least one head predicate".into(),
        ));
    }
    let head_pairs = 3;
    let cells = check_grid(num_objects, head_pairs * num_head + num_tail)?;
    let num_predicates = num_head + num_tail;
    let vocab = synthetic_vocab(num_objects, num_predicates)?;
    let drawn = Stream::new(seed).sample(&cells, head_pairs * num_head + num_tail);
    let owned: Vec<Vec<(usize, usize)>> = (0..num_predicates)
        .map(|p| {
            if p < num_head {
                drawn[p * head_pairs..(p + 1) * head_pairs].to_vec()
            } else {
                vec![drawn[head_pairs * num_head + p - num_head]]
            }
        })
        .collect();
    let mut rels = Vec::new();
    for (p, pairs) in owned.iter().enumerate() {
        let repeats = if p < num_head { 1 } else { p - num_head + 1 };
        for _ in 0..repeats {
            for &(s, o) in pairs {
                rels.push((s, o, p));
            }
        }
    }
    let images = 4;
    let mut train = Corpus::new(vocab.clone(), Split::Train);
    let mut test = Corpus::new(vocab.clone(), Split::Test);
    let mut preds = Corpus::new(vocab, Split::Test);
    for i in 0..images {
        train.insert(image_from_pairs(format!("train_{i:06}"), &rels))?;
        let g = image_from_pairs(format!("test_{i:06}"), &rels);
        let scores = g
            .relations
            .iter()
            .map(|r| {
                let mut v = vec![0.0; num_predicates];
                v[if r.pred < num_head { r.pred } else { 0 }] = 1.0;
                v
            })
            .collect();
        preds.insert(prediction_for(&g, scores))?;
        test.insert(g)?;
    }
    Ok((train, test, preds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ground_truth_to_string, predictions_to_string};

    #[test]
    fn stream_is_reproducible() {
        let mut a = Stream::new(7);
        let mut b = Stream::new(7);
        for _ in 0..100 {
            let u = a.uniform();
            assert_eq!(u, b.uniform());
            assert!((0.0..1.0).contains(&u));
        }
        assert_ne!(Stream::new(7).uniform(), Stream::new(8).uniform());
    }

    #[test]
    fn same_seed_same_bytes() {
        let mut p = SynthParams::basic(3, 6, 5);
        p.noise_sigma = 0.7;
        p.correlation = vec![vec![1.0; 5]; 5];
        let a = generate(&p).unwrap();
        let b = generate(&p).unwrap();
        assert_eq!(
            ground_truth_to_string(&a.test),
            ground_truth_to_string(&b.test)
        );
        assert_eq!(
            predictions_to_string(&a.preds).unwrap(),
            predictions_to_string(&b.preds).unwrap()
        );
        p.seed = 4;
        let c = generate(&p).unwrap();
        assert_ne!(
            ground_truth_to_string(&a.train),
            ground_truth_to_string(&c.train)
        );
    }

    #[test]
    fn pair_sets_have_requested_sizes() {
        let mut p = SynthParams::basic(1, 5, 4);
        p.diversity_profile = vec![1, 2, 5, 20];
        let out = generate(&p).unwrap();
        for (set, &want) in out.pair_sets.iter().zip(&p.diversity_profile) {
            let distinct: std::collections::BTreeSet<_> = set.iter().collect();
            assert_eq!(distinct.len(), want);
            assert!(set.iter().all(|(s, o)| s != o));
        }
        for img in out.train.iter() {
            for r in &img.relations {
                let pair = (img.labels[r.subj], img.labels[r.obj]);
                assert!(out.pair_sets[r.pred].contains(&pair));
            }
        }
    }

    #[test]
    fn infeasible_profile() {
        let mut p = SynthParams::basic(1, 3, 2);
        p.diversity_profile = vec![1, 7];
        assert!(matches!(generate(&p), Err(Error::Infeasible(_))));
        assert!(matches!(
            deterministic_mapping_corpus(3, 7, 0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn mapping_is_one_to_one() {
        let (train, test) = deterministic_mapping_corpus(3, 2, 9).unwrap();
        let mut owner = std::collections::BTreeMap::new();
        for img in train.iter().chain(test.iter()) {
            for r in &img.relations {
                let pair = (img.labels[r.subj], img.labels[r.obj]);
                assert_eq!(*owner.entry(pair).or_insert(r.pred), r.pred);
            }
        }
        assert_eq!(owner.len(), 2);
    }
}
