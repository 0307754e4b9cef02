//! Domain types and JSONL ingestion for vocabularies, ground-truth scene
//! graphs and prediction dumps.
//!
//! Every loader validates the full invariant set of the type it produces,
//! so downstream modules index into vocabularies and box lists without
//! further checks. Loaders never panic on malformed input; failures come
//! back as [`Error`] values wrapped with the 1-based line number.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability vectors whose sum is within this distance of 1 are accepted.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-3;

/// Sums closer to 1 than this are treated as exact and left untouched so
/// canonical files survive a load/write cycle byte for byte.
const RENORMALIZE_EPSILON: f64 = 1e-12;

/// Category names. The position of a name is its id everywhere else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    objects: Vec<String>,
    predicates: Vec<String>,
}

impl Vocab {
    pub fn new(objects: Vec<String>, predicates: Vec<String>) -> Result<Self> {
        check_names("objects", &objects)?;
        check_names("predicates", &predicates)?;
        Ok(Vocab {
            objects,
            predicates,
        })
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn num_predicates(&self) -> usize {
        self.predicates.len()
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn predicates(&self) -> &[String] {
        &self.predicates
    }

    pub fn predicate_name(&self, id: usize) -> &str {
        &self.predicates[id]
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            objects: Vec<String>,
            predicates: Vec<String>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Vocab::new(raw.objects, raw.predicates)
    }

    pub fn to_json_string(&self) -> String {
        // Field order is alphabetical, which keeps the output canonical.
        serde_json::to_string(self).expect("vocab serializes")
    }

    /// Errors with [`Error::VocabMismatch`] unless both vocabularies agree.
    pub fn ensure_same(&self, other: &Vocab) -> Result<()> {
        if self.objects.len() != other.objects.len() {
            return Err(Error::VocabMismatch(format!(
                "{} vs {} object categories",
                self.objects.len(),
                other.objects.len()
            )));
        }
        if self.predicates.len() != other.predicates.len() {
            return Err(Error::VocabMismatch(format!(
                "{} vs {} predicate categories",
                self.predicates.len(),
                other.predicates.len()
            )));
        }
        let first_diff = self
            .objects
            .iter()
            .zip(&other.objects)
            .chain(self.predicates.iter().zip(&other.predicates))
            .find(|(a, b)| a != b);
        match first_diff {
            Some((a, b)) => Err(Error::VocabMismatch(format!("{a:?} vs {b:?}"))),
            None => Ok(()),
        }
    }
}

fn check_names(list: &'static str, names: &[String]) -> Result<()> {
    if names.is_empty() {
        return Err(Error::EmptyVocab { list });
    }
    let mut seen = BTreeSet::new();
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateName {
                list,
                name: name.clone(),
            });
        }
    }
    Ok(())
}

pub fn load_vocab(path: impl AsRef<Path>) -> Result<Vocab> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Vocab::from_json_str(&text)
}

pub fn write_vocab(vocab: &Vocab, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = vocab.to_json_string();
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let valid = [x1, y1, x2, y2].iter().all(|v| v.is_finite()) && x1 < x2 && y1 < y2;
        if valid {
            Ok(BBox { x1, y1, x2, y2 })
        } else {
            Err(Error::MalformedBox(vec![x1, y1, x2, y2]))
        }
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        match *coords {
            [x1, y1, x2, y2] => BBox::new(x1, y1, x2, y2),
            _ => Err(Error::MalformedBox(coords.to_vec())),
        }
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

/// One ground-truth triplet, indexing into the image's boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Relation {
    pub subj: usize,
    pub obj: usize,
    pub pred: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthImage {
    pub image_id: String,
    pub boxes: Vec<BBox>,
    pub labels: Vec<usize>,
    pub relations: Vec<Relation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreKind {
    #[serde(rename = "prob")]
    Probability,
    #[serde(rename = "logit")]
    Logit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionImage {
    pub image_id: String,
    pub boxes: Vec<BBox>,
    pub labels: Vec<usize>,
    pub label_scores: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    /// One vector of length `N_p` per pair.
    pub predicate_scores: Vec<Vec<f64>>,
    pub score_kind: ScoreKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Anything a [`Corpus`] can hold.
pub trait CorpusImage {
    fn image_id(&self) -> &str;
    fn validate(&self, vocab: &Vocab) -> Result<()>;
}

fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { what, index, len })
    }
}

fn check_labels(labels: &[usize], boxes: usize, vocab: &Vocab) -> Result<()> {
    if labels.len() != boxes {
        return Err(Error::LengthMismatch {
            what: "labels",
            expected: boxes,
            got: labels.len(),
        });
    }
    for &label in labels {
        check_index("object category", label, vocab.num_objects())?;
    }
    Ok(())
}

impl CorpusImage for GroundTruthImage {
    fn image_id(&self) -> &str {
        &self.image_id
    }

    fn validate(&self, vocab: &Vocab) -> Result<()> {
        check_labels(&self.labels, self.boxes.len(), vocab)?;
        let mut pairs = BTreeMap::new();
        for rel in &self.relations {
            check_index("subject", rel.subj, self.boxes.len())?;
            check_index("object", rel.obj, self.boxes.len())?;
            check_index("predicate", rel.pred, vocab.num_predicates())?;
            if rel.subj == rel.obj {
                return Err(Error::SelfRelation(rel.subj));
            }
            match pairs.insert((rel.subj, rel.obj), rel.pred) {
                None => {}
                Some(p) if p == rel.pred => {
                    return Err(Error::DuplicateRelation(rel.subj, rel.obj, rel.pred))
                }
                Some(_) => return Err(Error::MultiLabelPair(rel.subj, rel.obj)),
            }
        }
        Ok(())
    }
}

impl CorpusImage for PredictionImage {
    fn image_id(&self) -> &str {
        &self.image_id
    }

    fn validate(&self, vocab: &Vocab) -> Result<()> {
        check_labels(&self.labels, self.boxes.len(), vocab)?;
        if self.label_scores.len() != self.boxes.len() {
            return Err(Error::LengthMismatch {
                what: "label_scores",
                expected: self.boxes.len(),
                got: self.label_scores.len(),
            });
        }
        for &s in &self.label_scores {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::ProbabilityOutOfRange {
                    what: "label score",
                    value: s,
                });
            }
        }
        if self.predicate_scores.len() != self.pairs.len() {
            return Err(Error::LengthMismatch {
                what: "predicate_scores",
                expected: self.pairs.len(),
                got: self.predicate_scores.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for &(s, o) in &self.pairs {
            check_index("subject", s, self.boxes.len())?;
            check_index("object", o, self.boxes.len())?;
            if s == o {
                return Err(Error::SelfRelation(s));
            }
            if !seen.insert((s, o)) {
                return Err(Error::DuplicatePair(s, o));
            }
        }
        for (pair, scores) in self.predicate_scores.iter().enumerate() {
            check_score_vector(pair, scores, vocab.num_predicates(), self.score_kind)?;
        }
        Ok(())
    }
}

fn check_score_vector(pair: usize, scores: &[f64], n_p: usize, kind: ScoreKind) -> Result<()> {
    if scores.len() != n_p {
        return Err(Error::ScoreLengthMismatch {
            pair,
            expected: n_p,
            got: scores.len(),
        });
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("predicate"));
    }
    if kind == ScoreKind::Probability {
        if let Some(&value) = scores.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ProbabilityOutOfRange {
                what: "predicate score",
                value,
            });
        }
        let sum: f64 = scores.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::NotNormalized { pair, sum });
        }
    }
    Ok(())
}

impl PredictionImage {
    /// Rescales probability vectors that sum to within the tolerance of 1.
    fn renormalize(&mut self) {
        if self.score_kind != ScoreKind::Probability {
            return;
        }
        for scores in &mut self.predicate_scores {
            let sum: f64 = scores.iter().sum();
            if (sum - 1.0).abs() > RENORMALIZE_EPSILON {
                scores.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }

    /// Predicate probabilities for one pair; logits go through a softmax.
    pub fn pair_probabilities(&self, pair: usize) -> Vec<f64> {
        let scores = &self.predicate_scores[pair];
        match self.score_kind {
            ScoreKind::Probability => scores.clone(),
            ScoreKind::Logit => softmax(scores),
        }
    }
}

/// Numerically stable normalized exponentiation.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / sum).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus<I> {
    pub vocab: Vocab,
    pub split: Split,
    pub images: BTreeMap<String, I>,
}

pub type GtCorpus = Corpus<GroundTruthImage>;
pub type PredCorpus = Corpus<PredictionImage>;

impl<I: CorpusImage> Corpus<I> {
    pub fn new(vocab: Vocab, split: Split) -> Self {
        Corpus {
            vocab,
            split,
            images: BTreeMap::new(),
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Validates `image` and adds it, rejecting repeated ids.
    pub fn insert(&mut self, image: I) -> Result<()> {
        image.validate(&self.vocab)?;
        let id = image.image_id().to_string();
        if self.images.contains_key(&id) {
            return Err(Error::DuplicateImageId(id));
        }
        self.images.insert(id, image);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&I> {
        self.images.get(image_id)
    }

    /// Images in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &I> {
        self.images.values()
    }
}

impl GtCorpus {
    pub fn num_triplets(&self) -> usize {
        self.iter().map(|img| img.relations.len()).sum()
    }
}

impl PredCorpus {
    /// The score kind shared by every image, `None` when empty.
    pub fn score_kind(&self) -> Result<Option<ScoreKind>> {
        let mut kinds = self.iter().map(|img| img.score_kind);
        let Some(first) = kinds.next() else {
            return Ok(None);
        };
        if kinds.any(|k| k != first) {
            return Err(Error::MixedScoreKind);
        }
        Ok(Some(first))
    }
}

// On-disk records. Field order is alphabetical so serialization emits
// sorted keys.

#[derive(Serialize, Deserialize)]
struct GtRecord {
    boxes: Vec<Vec<f64>>,
    image_id: String,
    labels: Vec<usize>,
    relations: Vec<[usize; 3]>,
}

#[derive(Serialize, Deserialize)]
struct PredRecord {
    boxes: Vec<Vec<f64>>,
    image_id: String,
    label_scores: Vec<f64>,
    labels: Vec<usize>,
    pairs: Vec<[usize; 2]>,
    predicate_scores: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct PredHeader {
    score_kind: ScoreKind,
}

fn parse_boxes(raw: &[Vec<f64>]) -> Result<Vec<BBox>> {
    raw.iter().map(|b| BBox::from_slice(b)).collect()
}

fn write_boxes(boxes: &[BBox]) -> Vec<Vec<f64>> {
    boxes.iter().map(|b| b.to_array().to_vec()).collect()
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

/// Non-blank lines with their 1-based numbers.
fn numbered_lines(reader: impl BufRead) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, line)| {
            line.map(|l| (i + 1, l))
                .map_err(|e| Error::Parse(e.to_string()).at_line(i + 1))
        })
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

pub fn parse_ground_truth(reader: impl BufRead, vocab: &Vocab) -> Result<GtCorpus> {
    let mut corpus = Corpus::new(vocab.clone(), Split::Test);
    for item in numbered_lines(reader) {
        let (line, text) = item?;
        let image = parse_gt_line(&text).map_err(|e| e.at_line(line))?;
        corpus.insert(image).map_err(|e| e.at_line(line))?;
    }
    Ok(corpus)
}

fn parse_gt_line(text: &str) -> Result<GroundTruthImage> {
    let rec: GtRecord = parse_json(text)?;
    Ok(GroundTruthImage {
        image_id: rec.image_id,
        boxes: parse_boxes(&rec.boxes)?,
        labels: rec.labels,
        relations: rec
            .relations
            .iter()
            .map(|&[subj, obj, pred]| Relation { subj, obj, pred })
            .collect(),
    })
}

pub fn load_ground_truth(path: impl AsRef<Path>, vocab: &Vocab) -> Result<GtCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth(BufReader::new(file), vocab)
}

pub fn write_ground_truth(corpus: &GtCorpus, mut out: impl Write) -> std::io::Result<()> {
    for img in corpus.iter() {
        let rec = GtRecord {
            boxes: write_boxes(&img.boxes),
            image_id: img.image_id.clone(),
            labels: img.labels.clone(),
            relations: img
                .relations
                .iter()
                .map(|r| [r.subj, r.obj, r.pred])
                .collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn parse_predictions(reader: impl BufRead, vocab: &Vocab) -> Result<PredCorpus> {
    let mut lines = numbered_lines(reader);
    let score_kind = match lines.next() {
        None => return Err(Error::MissingHeader.at_line(1)),
        Some(item) => {
            let (line, text) = item?;
            parse_json::<PredHeader>(&text)
                .map_err(|_| Error::MissingHeader.at_line(line))?
                .score_kind
        }
    };
    let mut corpus = Corpus::new(vocab.clone(), Split::Test);
    for item in lines {
        let (line, text) = item?;
        let image = parse_pred_line(&text, score_kind).map_err(|e| e.at_line(line))?;
        corpus.insert(image).map_err(|e| e.at_line(line))?;
    }
    for img in corpus.images.values_mut() {
        img.renormalize();
    }
    Ok(corpus)
}

fn parse_pred_line(text: &str, score_kind: ScoreKind) -> Result<PredictionImage> {
    let rec: PredRecord = parse_json(text)?;
    Ok(PredictionImage {
        image_id: rec.image_id,
        boxes: parse_boxes(&rec.boxes)?,
        labels: rec.labels,
        label_scores: rec.label_scores,
        pairs: rec.pairs.iter().map(|&[s, o]| (s, o)).collect(),
        predicate_scores: rec.predicate_scores,
        score_kind,
    })
}

pub fn load_predictions(path: impl AsRef<Path>, vocab: &Vocab) -> Result<PredCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(BufReader::new(file), vocab)
}

/// Writes the header line and one record per image. An empty corpus is
/// written with a `prob` header.
pub fn write_predictions(corpus: &PredCorpus, mut out: impl Write) -> Result<()> {
    let kind = corpus.score_kind()?.unwrap_or(ScoreKind::Probability);
    let io = |e: std::io::Error| Error::Parse(e.to_string());
    serde_json::to_writer(&mut out, &PredHeader { score_kind: kind })
        .map_err(|e| Error::Parse(e.to_string()))?;
    out.write_all(b"\n").map_err(io)?;
    for img in corpus.iter() {
        let rec = PredRecord {
            boxes: write_boxes(&img.boxes),
            image_id: img.image_id.clone(),
            label_scores: img.label_scores.clone(),
            labels: img.labels.clone(),
            pairs: img.pairs.iter().map(|&(s, o)| [s, o]).collect(),
            predicate_scores: img.predicate_scores.clone(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(|e| Error::Parse(e.to_string()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}

pub fn ground_truth_to_string(corpus: &GtCorpus) -> String {
    let mut buf = Vec::new();
    write_ground_truth(corpus, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn predictions_to_string(corpus: &PredCorpus) -> Result<String> {
    let mut buf = Vec::new();
    write_predictions(corpus, &mut buf)?;
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

pub fn save_ground_truth(corpus: &GtCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ground_truth_to_string(corpus)).map_err(|e| Error::io(path, e))
}

pub fn save_predictions(corpus: &PredCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, predictions_to_string(corpus)?).map_err(|e| Error::io(path, e))
}

/// Image-id bookkeeping between a ground-truth and a prediction corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    /// In ground truth but absent from predictions; scored as empty.
    pub missing: Vec<String>,
    /// Predicted but without ground truth; ignored.
    pub extra: Vec<String>,
}

pub fn validate_alignment(gt: &GtCorpus, preds: &PredCorpus) -> Result<ValidationReport> {
    gt.vocab.ensure_same(&preds.vocab)?;
    let missing = gt
        .images
        .keys()
        .filter(|id| !preds.images.contains_key(*id))
        .cloned()
        .collect();
    let extra = preds
        .images
        .keys()
        .filter(|id| !gt.images.contains_key(*id))
        .cloned()
        .collect();
    Ok(ValidationReport { missing, extra })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(objects: &[&str], predicates: &[&str]) -> Vocab {
        Vocab::new(
            objects.iter().map(|s| s.to_string()).collect(),
            predicates.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn vocab_echoes_input() {
        let v = Vocab::from_json_str(r#"{"objects":["cat","dog"],"predicates":["on"]}"#).unwrap();
        assert_eq!(v.num_objects(), 2);
        assert_eq!(v.num_predicates(), 1);
        assert_eq!(v.objects()[1], "dog");
    }

    #[test]
    fn vocab_rejects_duplicates_and_empty_lists() {
        let err =
            Vocab::from_json_str(r#"{"objects":["cat"],"predicates":["on","on"]}"#).unwrap_err();
        assert!(matches!(err, Error::DuplicateName { ref name, .. } if name == "on"));
        let err = Vocab::from_json_str(r#"{"objects":["cat"],"predicates":[]}"#).unwrap_err();
        assert!(matches!(err, Error::EmptyVocab { list: "predicates" }));
    }

    #[test]
    fn ground_truth_single_line() {
        let v = vocab(&["a", "b"], &["on", "in"]);
        let text = r#"{"image_id":"x","boxes":[[0,0,1,1],[1,1,2,2]],"labels":[0,1],"relations":[[0,1,0]]}"#;
        let corpus = parse_ground_truth(text.as_bytes(), &v).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.num_triplets(), 1);
    }

    #[test]
    fn ground_truth_errors_carry_line_numbers() {
        let v = vocab(&["a", "b"], &["on", "in"]);
        let ok = r#"{"image_id":"x","boxes":[[0,0,1,1],[1,1,2,2]],"labels":[0,1],"relations":[[0,1,0]]}"#;
        let self_rel = r#"{"image_id":"y","boxes":[[0,0,1,1],[1,1,2,2]],"labels":[0,1],"relations":[[0,0,0]]}"#;
        let err = parse_ground_truth(format!("{ok}\n{self_rel}\n").as_bytes(), &v).unwrap_err();
        assert_eq!(err.line(), Some(2));
        assert!(matches!(err.kind(), Error::SelfRelation(0)));

        let multi = r#"{"image_id":"y","boxes":[[0,0,1,1],[1,1,2,2]],"labels":[0,1],"relations":[[0,1,0],[0,1,1]]}"#;
        let err = parse_ground_truth(multi.as_bytes(), &v).unwrap_err();
        assert!(matches!(err.kind(), Error::MultiLabelPair(0, 1)));

        let dup = r#"{"image_id":"y","boxes":[[0,0,1,1],[1,1,2,2]],"labels":[0,1],"relations":[[0,1,0],[0,1,0]]}"#;
        let err = parse_ground_truth(dup.as_bytes(), &v).unwrap_err();
        assert!(matches!(err.kind(), Error::DuplicateRelation(0, 1, 0)));

        let bad_box = r#"{"image_id":"y","boxes":[[2,0,1,1]],"labels":[0],"relations":[]}"#;
        let err = parse_ground_truth(bad_box.as_bytes(), &v).unwrap_err();
        assert!(matches!(err.kind(), Error::MalformedBox(_)));

        let bad_label = r#"{"image_id":"y","boxes":[[0,0,1,1]],"labels":[7],"relations":[]}"#;
        let err = parse_ground_truth(bad_label.as_bytes(), &v).unwrap_err();
        assert!(matches!(
            err.kind(),
            Error::IndexOutOfRange { index: 7, .. }
        ));
    }

    const PRED_IMAGE: &str = r#"{"image_id":"x","boxes":[[0,0,1,1],[1,1,2,2]],"labels":[0,1],"label_scores":[1,1],"pairs":[[0,1]],"predicate_scores":"#;

    fn pred_file(kind: &str, scores: &str) -> String {
        format!("{{\"score_kind\":\"{kind}\"}}\n{PRED_IMAGE}[{scores}]}}\n")
    }

    #[test]
    fn predictions_validation() {
        let v = vocab(&["a", "b"], &["on", "in"]);
        let corpus = parse_predictions(pred_file("prob", "[0.7,0.3]").as_bytes(), &v).unwrap();
        assert_eq!(corpus.get("x").unwrap().predicate_scores[0], vec![0.7, 0.3]);

        let err = parse_predictions(pred_file("prob", "[0.5,0.3,0.2]").as_bytes(), &v).unwrap_err();
        assert!(matches!(
            err.kind(),
            Error::ScoreLengthMismatch { got: 3, .. }
        ));
        assert_eq!(err.line(), Some(2));

        let err = parse_predictions(pred_file("prob", "[0.9,0.9]").as_bytes(), &v).unwrap_err();
        assert!(matches!(err.kind(), Error::NotNormalized { .. }));

        let err = parse_predictions(pred_file("prob", "[1.2,-0.2]").as_bytes(), &v).unwrap_err();
        assert!(matches!(err.kind(), Error::ProbabilityOutOfRange { .. }));

        // Logits are unconstrained.
        parse_predictions(pred_file("logit", "[3.5,-7.0]").as_bytes(), &v).unwrap();

        let err = parse_predictions(&b"{}\n"[..], &v).unwrap_err();
        assert!(matches!(err.kind(), Error::MissingHeader));
    }

    #[test]
    fn near_normalized_vectors_are_rescaled() {
        let v = vocab(&["a", "b"], &["on", "in"]);
        let corpus = parse_predictions(pred_file("prob", "[0.6004,0.4]").as_bytes(), &v).unwrap();
        let s = &corpus.get("x").unwrap().predicate_scores[0];
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((s[0] - 0.6004 / 1.0004).abs() < 1e-15);
    }

    #[test]
    fn duplicate_pair_rejected() {
        let v = vocab(&["a", "b"], &["on", "in"]);
        let text = r#"{"score_kind":"prob"}
{"image_id":"x","boxes":[[0,0,1,1],[1,1,2,2]],"labels":[0,1],"label_scores":[1,1],"pairs":[[0,1],[0,1]],"predicate_scores":[[1,0],[1,0]]}"#;
        let err = parse_predictions(text.as_bytes(), &v).unwrap_err();
        assert!(matches!(err.kind(), Error::DuplicatePair(0, 1)));
    }

    #[test]
    fn alignment_report() {
        let v = vocab(&["a", "b"], &["on", "in"]);
        let gt_text = r#"{"image_id":"a","boxes":[],"labels":[],"relations":[]}
{"image_id":"b","boxes":[],"labels":[],"relations":[]}"#;
        let gt = parse_ground_truth(gt_text.as_bytes(), &v).unwrap();
        let preds = parse_predictions(
            &br#"{"score_kind":"prob"}
{"image_id":"a","boxes":[],"labels":[],"label_scores":[],"pairs":[],"predicate_scores":[]}
"#[..],
            &v,
        )
        .unwrap();
        let report = validate_alignment(&gt, &preds).unwrap();
        assert_eq!(report.missing, vec!["b".to_string()]);
        assert!(report.extra.is_empty());

        let same = validate_alignment(&gt, &Corpus::new(v.clone(), Split::Test)).unwrap();
        assert_eq!(same.missing.len(), 2);

        let other = vocab(&["a", "b"], &["on"]);
        let err = validate_alignment(&gt, &Corpus::new(other, Split::Test)).unwrap_err();
        assert!(matches!(err, Error::VocabMismatch(_)));
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[1.0, 2.0, 3.0]);
        let b = softmax(&[1001.0, 1002.0, 1003.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
