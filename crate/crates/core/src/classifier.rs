//! The desk-scale victim classifier and the scoring interface.
//!
//! A multinomial logistic regression over unigram counts stands in for the
//! transformer victims the defense ultimately wraps: it is fast enough to
//! retrain inside tests, fully deterministic under a seed, and exposes the
//! same scoring surface (`score`, `predict`, per-token scores) that a remote
//! model serves over HTTP. Anything that can score text implements
//! [`Scorer`], so detection and evaluation never care which backend they got.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, derive_seed};
use crate::text::{Dataset, LabelId, Sentence, Token};

/// A probability distribution over class labels: entries in [0, 1], summing
/// to 1 within 1e-6.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty score vector"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid(format!("score outside [0, 1]: {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("scores sum to {sum}, not 1")));
        }
        Ok(ScoreVector(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, label: LabelId) -> f64 {
        self.0[label]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability; ties break to the lowest index.
    pub fn argmax(&self) -> LabelId {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Anything that can score sentences against a fixed label set.
///
/// The local [`ClassifierModel`] never fails; remote scorers surface
/// transport and protocol errors through the `Result`.
pub trait Scorer {
    fn num_classes(&self) -> usize;

    fn score(&self, sentence: &Sentence) -> Result<ScoreVector>;

    fn score_batch(&self, sentences: &[Sentence]) -> Result<Vec<ScoreVector>> {
        sentences.iter().map(|s| self.score(s)).collect()
    }

    fn predict(&self, sentence: &Sentence) -> Result<LabelId> {
        Ok(self.score(sentence)?.argmax())
    }

    /// Scores a token as a one-token sentence; identical to `score` on it.
    fn score_token(&self, token: &Token) -> Result<ScoreVector> {
        self.score(&Sentence::new(vec![token.clone()]))
    }
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 30, learning_rate: 0.1, l2: 1e-4, seed: 0 }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid("l2 must be non-negative"));
        }
        Ok(())
    }
}

/// Provenance stored alongside trained weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

/// A trained bag-of-words softmax classifier.
///
/// `weights[c]` has one entry per vocabulary feature plus a trailing bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    num_classes: usize,
    vocabulary: BTreeMap<Token, usize>,
    weights: Vec<Vec<f64>>,
    training_meta: TrainingMeta,
}

impl ClassifierModel {
    /// Assembles a model from explicit parts, validating shapes: weights must
    /// be `num_classes` rows of `|vocabulary| + 1` entries, and vocabulary
    /// indices must form a dense permutation of `0..|vocabulary|`.
    pub fn from_parts(
        num_classes: usize,
        vocabulary: BTreeMap<Token, usize>,
        weights: Vec<Vec<f64>>,
        training_meta: TrainingMeta,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {num_classes}")));
        }
        if weights.len() != num_classes {
            return Err(Error::invalid(format!(
                "{} weight rows for {num_classes} classes",
                weights.len()
            )));
        }
        let width = vocabulary.len() + 1;
        if let Some(row) = weights.iter().find(|row| row.len() != width) {
            return Err(Error::invalid(format!(
                "weight row of width {} does not match vocabulary + bias width {width}",
                row.len()
            )));
        }
        let mut seen = vec![false; vocabulary.len()];
        for &idx in vocabulary.values() {
            if idx >= seen.len() || seen[idx] {
                return Err(Error::invalid("vocabulary indices are not a dense permutation"));
            }
            seen[idx] = true;
        }
        Ok(ClassifierModel { num_classes, vocabulary, weights, training_meta })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn vocabulary(&self) -> &BTreeMap<Token, usize> {
        &self.vocabulary
    }

    pub fn training_meta(&self) -> TrainingMeta {
        self.training_meta
    }

    /// Softmax class probabilities for a sentence. Unknown tokens contribute
    /// nothing; the empty sentence scores as the bias distribution.
    pub fn score(&self, sentence: &Sentence) -> ScoreVector {
        let features = self.features(sentence);
        let bias = self.vocabulary.len();
        let logits: Vec<f64> = self
            .weights
            .iter()
            .map(|row| {
                features.iter().map(|&(f, c)| row[f] * c).sum::<f64>() + row[bias]
            })
            .collect();
        ScoreVector(softmax(&logits))
    }

    /// Most probable label; ties break to the lowest index.
    pub fn predict(&self, sentence: &Sentence) -> LabelId {
        self.score(sentence).argmax()
    }

    /// Scores a token exactly as the one-token sentence containing it.
    pub fn score_token(&self, token: &Token) -> ScoreVector {
        self.score(&Sentence::new(vec![token.clone()]))
    }

    fn features(&self, sentence: &Sentence) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for token in sentence.iter() {
            if let Some(&idx) = self.vocabulary.get(token) {
                *counts.entry(idx).or_insert(0.0) += 1.0;
            }
        }
        counts.into_iter().collect()
    }

    /// Serializes to the model JSON format.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let raw: ClassifierModel = serde_json::from_str(json)?;
        // Re-validate shapes: hand-edited files must not bypass invariants.
        ClassifierModel::from_parts(raw.num_classes, raw.vocabulary, raw.weights, raw.training_meta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::fsutil::atomic_write(path.as_ref(), self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Scorer for ClassifierModel {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn score(&self, sentence: &Sentence) -> Result<ScoreVector> {
        Ok(ClassifierModel::score(self, sentence))
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Trains by plain SGD: zero-initialized weights, a fixed number of epochs,
/// and a per-epoch example order drawn from the seed, so identical inputs
/// give bit-identical weights. L2 decay is applied to the features each
/// update touches.
pub fn train(dataset: &Dataset, cfg: TrainConfig) -> Result<ClassifierModel> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if dataset.num_classes() < 2 {
        return Err(Error::invalid("cannot train on fewer than 2 classes"));
    }

    let mut vocabulary: BTreeMap<Token, usize> = BTreeMap::new();
    for example in dataset.iter() {
        for token in example.sentence.iter() {
            let next = vocabulary.len();
            vocabulary.entry(token.clone()).or_insert(next);
        }
    }
    // Re-index in sorted order so the mapping is independent of corpus order.
    for (rank, (_token, idx)) in vocabulary.iter_mut().enumerate() {
        *idx = rank;
    }

    let bias = vocabulary.len();
    let num_classes = dataset.num_classes();
    let mut weights = vec![vec![0.0f64; bias + 1]; num_classes];

    let examples: Vec<(Vec<(usize, f64)>, LabelId)> = dataset
        .iter()
        .map(|e| {
            let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
            for token in e.sentence.iter() {
                *counts.entry(vocabulary[token]).or_insert(0.0) += 1.0;
            }
            (counts.into_iter().collect(), e.label)
        })
        .collect();

    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(derive_seed(cfg.seed, epoch as u64)));
        for &i in &order {
            let (features, label) = &examples[i];
            let logits: Vec<f64> = weights
                .iter()
                .map(|row| features.iter().map(|&(f, c)| row[f] * c).sum::<f64>() + row[bias])
                .collect();
            let probs = softmax(&logits);
            for (c, row) in weights.iter_mut().enumerate() {
                let err = probs[c] - if c == *label { 1.0 } else { 0.0 };
                for &(f, count) in features {
                    row[f] -= cfg.learning_rate * (err * count + cfg.l2 * row[f]);
                }
                row[bias] -= cfg.learning_rate * (err + cfg.l2 * row[bias]);
            }
        }
    }

    ClassifierModel::from_parts(
        num_classes,
        vocabulary,
        weights,
        TrainingMeta {
            seed: cfg.seed,
            epochs: cfg.epochs,
            learning_rate: cfg.learning_rate,
            l2: cfg.l2,
        },
    )
}

/// Fraction of examples whose prediction matches the gold label.
pub fn evaluate_accuracy<S: Scorer>(scorer: &S, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot evaluate accuracy on an empty dataset"));
    }
    let mut correct = 0usize;
    for example in dataset.iter() {
        if scorer.predict(&example.sentence)? == example.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}
