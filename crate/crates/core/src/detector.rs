//! Article-level event detection: a pluggable interface, a logistic
//! bag-of-words baseline, and precision/recall/F1 evaluation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_signals::{ArticleRecord, Label};

/// Anything that labels an article with a score in `[0, 1]`; the label is
/// positive exactly when the score reaches the detector's threshold.
pub trait Detector {
    fn classify(&self, record: &ArticleRecord) -> (Label, f64);
}

pub const LEARNING_RATE: f64 = 0.1;
pub const EPOCHS: usize = 100;
pub const MIN_TOKEN_COUNT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_token_count: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    /// F1 on the validation split at the chosen threshold.
    pub validation_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub weights: BTreeMap<String, f64>,
    pub bias: f64,
    pub threshold: f64,
    pub metadata: TrainingMetadata,
}

/// Lowercased alphanumeric tokens, each counted once per document.
pub fn document_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl BaselineModel {
    pub fn score(&self, record: &ArticleRecord) -> f64 {
        let z = self.bias + document_tokens(&record.text()).iter().filter_map(|t| self.weights.get(t)).sum::<f64>();
        sigmoid(z)
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let model: BaselineModel = serde_json::from_reader(reader)?;
        if model.weights.is_empty() || model.weights.values().any(|w| !w.is_finite()) || !model.bias.is_finite() {
            return Err(Error::parse("detector model", "weights must be nonempty and finite"));
        }
        if !(model.threshold > 0.0 && model.threshold < 1.0) {
            return Err(Error::parse("detector model", "threshold must lie in (0, 1)"));
        }
        Ok(model)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

impl Detector for BaselineModel {
    fn classify(&self, record: &ArticleRecord) -> (Label, f64) {
        let s = self.score(record);
        (Label::from_positive(s >= self.threshold), s)
    }
}

/// How labeled records are divided for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Fractions of the shuffled corpus; the test share is what remains.
    Fractions {
        train: f64,
        validation: f64,
    },
    Ids {
        train: Vec<String>,
        validation: Vec<String>,
        test: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

fn assign(corpus: &[ArticleRecord], split: &Split, rng: &mut ChaCha8Rng) -> Result<SplitAssignment> {
    match split {
        Split::Fractions { train, validation } => {
            if !(*train > 0.0 && *validation > 0.0 && train + validation <= 1.0) {
                return Err(Error::invalid(format!(
                    "split fractions train {train}, validation {validation} must be positive and sum to at most 1"
                )));
            }
            let mut ids: Vec<String> = corpus.iter().map(|r| r.id.clone()).collect();
            ids.shuffle(rng);
            let n = ids.len();
            let n_train = ((n as f64) * train).round() as usize;
            let n_val = (((n as f64) * validation).round() as usize).min(n - n_train);
            let test = ids.split_off(n_train + n_val);
            let val = ids.split_off(n_train);
            Ok(SplitAssignment { train: ids, validation: val, test })
        }
        Split::Ids { train, validation, test } => {
            let known: HashSet<&str> = corpus.iter().map(|r| r.id.as_str()).collect();
            let mut seen = HashSet::new();
            for id in train.iter().chain(validation).chain(test) {
                if !known.contains(id.as_str()) {
                    return Err(Error::invalid(format!("split id {id:?} is not in the corpus")));
                }
                if !seen.insert(id.as_str()) {
                    return Err(Error::invalid(format!("split id {id:?} assigned twice")));
                }
            }
            Ok(SplitAssignment { train: train.clone(), validation: validation.clone(), test: test.clone() })
        }
    }
}

/// Trains the baseline by per-example gradient descent on the logistic
/// loss, then picks the threshold that maximizes validation F1.
pub fn train_baseline(corpus: &[ArticleRecord], split: &Split, seed: u64) -> Result<(BaselineModel, SplitAssignment)> {
    let labeled: Vec<&ArticleRecord> = corpus.iter().filter(|r| r.gold_label.is_some()).collect();
    if labeled.len() < 50 {
        return Err(Error::invalid(format!(
            "baseline training needs at least 50 labeled records, got {}",
            labeled.len()
        )));
    }
    let labeled_owned: Vec<ArticleRecord> = labeled.iter().map(|r| (*r).clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assignment = assign(&labeled_owned, split, &mut rng)?;
    let by_id: HashMap<&str, &ArticleRecord> = labeled.iter().map(|r| (r.id.as_str(), *r)).collect();
    let pick = |ids: &[String]| -> Vec<&ArticleRecord> { ids.iter().map(|id| by_id[id.as_str()]).collect() };
    let train = pick(&assignment.train);
    let validation = pick(&assignment.validation);
    let gold = |r: &ArticleRecord| r.gold_label.expect("filtered to labeled").is_positive();
    let positives = train.iter().filter(|r| gold(r)).count();
    if positives == 0 || positives == train.len() {
        return Err(Error::invalid("training split contains a single class"));
    }

    let docs: Vec<BTreeSet<String>> = train.iter().map(|r| document_tokens(&r.text())).collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &docs {
        for t in d {
            *df.entry(t.as_str()).or_default() += 1;
        }
    }
    let vocab: BTreeMap<&str, usize> =
        df.iter().filter(|(_, c)| **c >= MIN_TOKEN_COUNT).enumerate().map(|(i, (t, _))| (*t, i)).collect();
    if vocab.is_empty() {
        return Err(Error::invalid("no token reaches the frequency cutoff"));
    }
    let features: Vec<Vec<usize>> =
        docs.iter().map(|d| d.iter().filter_map(|t| vocab.get(t.as_str()).copied()).collect()).collect();
    let targets: Vec<f64> = train.iter().map(|r| if gold(r) { 1.0 } else { 0.0 }).collect();

    let mut w = vec![0.0; vocab.len()];
    let mut bias = 0.0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..EPOCHS {
        order.shuffle(&mut rng);
        for &i in &order {
            let z = bias + features[i].iter().map(|&j| w[j]).sum::<f64>();
            let g = sigmoid(z) - targets[i];
            bias -= LEARNING_RATE * g;
            for &j in &features[i] {
                w[j] -= LEARNING_RATE * g;
            }
        }
    }
    let weights: BTreeMap<String, f64> = vocab.iter().map(|(t, &j)| (t.to_string(), w[j])).collect();
    let mut model = BaselineModel {
        weights,
        bias,
        threshold: 0.5,
        metadata: TrainingMetadata {
            seed,
            epochs: EPOCHS,
            learning_rate: LEARNING_RATE,
            min_token_count: MIN_TOKEN_COUNT,
            train_size: train.len(),
            validation_size: validation.len(),
            test_size: assignment.test.len(),
            validation_f1: 0.0,
        },
    };
    let scored: Vec<(f64, bool)> = validation.iter().map(|r| (model.score(r), gold(r))).collect();
    let (threshold, f1) = best_threshold(&scored);
    model.threshold = threshold;
    model.metadata.validation_f1 = f1;
    Ok((model, assignment))
}

/// Threshold among the observed scores with the highest F1; ties go to the
/// lower threshold. Falls back to 0.5 when no threshold yields a positive F1.
fn best_threshold(scored: &[(f64, bool)]) -> (f64, f64) {
    let mut candidates: Vec<f64> = scored.iter().map(|s| s.0).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best = (0.5, 0.0);
    for &t in &candidates {
        let mut c = ConfusionCounts::default();
        for &(s, y) in scored {
            c.add(s >= t, y);
        }
        let f1 = c.metrics().f1;
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    let eps = 1e-12;
    (best.0.clamp(eps, 1.0 - eps), best.1)
}

/// Labels every record, keeping its score.
pub fn classify_corpus(model: &dyn Detector, records: &[ArticleRecord]) -> Vec<ArticleRecord> {
    records
        .iter()
        .map(|r| {
            let (label, score) = model.classify(r);
            let mut out = r.clone();
            out.predicted_label = Some(label);
            out.score = Some(score);
            out
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Precision, recall and F1; a zero denominator gives 0.
    pub fn metrics(&self) -> Metrics {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Metrics {
            precision: ratio(self.tp, self.tp + self.fp),
            recall: ratio(self.tp, self.tp + self.fn_),
            f1: ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_),
            counts: *self,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

/// Harmonic mean of precision and recall (0 when both are 0).
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Compares predicted labels with gold labels, matched by id.
pub fn evaluate(predictions: &[ArticleRecord], gold: &[ArticleRecord]) -> Result<Metrics> {
    let gold_by_id: HashMap<&str, &ArticleRecord> = gold.iter().map(|r| (r.id.as_str(), r)).collect();
    if gold_by_id.len() != predictions.len() {
        return Err(Error::invalid(format!("{} predictions for {} gold records", predictions.len(), gold_by_id.len())));
    }
    let mut c = ConfusionCounts::default();
    for p in predictions {
        let g = gold_by_id
            .get(p.id.as_str())
            .ok_or_else(|| Error::invalid(format!("prediction {:?} has no gold record", p.id)))?;
        let actual = g.gold_label.ok_or_else(|| Error::invalid(format!("gold record {:?} has no label", g.id)))?;
        let predicted =
            p.predicted_label.ok_or_else(|| Error::invalid(format!("record {:?} has no predicted label", p.id)))?;
        c.add(predicted.is_positive(), actual.is_positive());
    }
    let m = c.metrics();
    if c.tp + c.fp == 0 {
        log::warn!("no positive predictions; precision set to 0");
    }
    if c.tp + c.fn_ == 0 {
        log::warn!("no positive gold labels; recall set to 0");
    }
    Ok(m)
}
