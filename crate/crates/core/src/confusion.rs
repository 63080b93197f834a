//! Classifier-confusion collision detection.
//!
//! A bag-of-words linear SVM (one-vs-rest hinge loss, seeded SGD) is trained
//! on one dataset. Every query of a candidate intent from another dataset is
//! run through it, and the concentration of the predicted labels,
//! `max(d) / sum(d)`, is the collision score.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, Corpus, Intent};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;
use crate::similarity::tokenize;

/// Term to column map with lexicographic column assignment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BowVocabulary {
    terms: BTreeMap<String, usize>,
}

impl BowVocabulary {
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: std::collections::BTreeSet<String> = terms.into_iter().map(Into::into).collect();
        Self {
            terms: set.into_iter().enumerate().map(|(i, t)| (t, i)).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.terms.len()
    }

    pub fn index(&self, term: &str) -> Option<usize> {
        self.terms.get(term).copied()
    }

    /// Terms in column order.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.keys().map(String::as_str)
    }
}

pub fn build_vocab(corpus: &Corpus) -> Result<BowVocabulary> {
    if corpus.query_count() == 0 {
        return Err(Error::EmptyCorpus(corpus.dataset_id.clone()));
    }
    let terms = corpus
        .intents
        .values()
        .flat_map(|i| i.queries.iter())
        .flat_map(|q| tokenize(&q.norm_text));
    Ok(BowVocabulary::from_terms(terms))
}

/// Sparse term counts; indices strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureVector {
    pub entries: Vec<(usize, u32)>,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn featurize(text: &str, vocab: &BowVocabulary) -> FeatureVector {
    let norm = normalize_text(text);
    let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
    for tok in tokenize(&norm) {
        if let Some(i) = vocab.index(tok) {
            *counts.entry(i).or_default() += 1;
        }
    }
    FeatureVector {
        entries: counts.into_iter().collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionConfig {
    pub tau: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ConfusionConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            epochs: 10,
            learning_rate: 0.1,
            l2: 1e-4,
            seed: 13,
        }
    }
}

impl ConfusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        if !(self.learning_rate > 0.0) || !(self.l2 >= 0.0) || self.epochs == 0 {
            return Err(Error::Config(
                "epochs, learning rate and l2 must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One-vs-rest linear classifier. Weights are stored row-major, one row per
/// label, with the bias in the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub labels: Vec<String>,
    pub vocab: BowVocabulary,
    pub weights: Vec<f32>,
    pub trained_on: String,
    pub seed: u64,
}

impl LinearModel {
    fn row_len(&self) -> usize {
        self.vocab.size() + 1
    }

    pub fn scores(&self, x: &FeatureVector) -> Vec<f64> {
        let width = self.row_len();
        self.weights
            .chunks_exact(width)
            .map(|row| {
                let dot: f64 = x
                    .entries
                    .iter()
                    .map(|&(j, c)| f64::from(row[j]) * f64::from(c))
                    .sum();
                dot + f64::from(row[width - 1])
            })
            .collect()
    }

    pub fn predict_index(&self, text: &str) -> usize {
        argmax(&self.scores(&featurize(text, &self.vocab)))
    }
}

/// First index of the maximum; earlier labels win ties.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Labelled training rows in corpus order (intents by name, queries as
/// stored).
pub(crate) fn training_rows(corpus: &Corpus, vocab: &BowVocabulary) -> Vec<(FeatureVector, usize)> {
    corpus
        .intents
        .values()
        .enumerate()
        .flat_map(|(label, intent)| {
            intent
                .queries
                .iter()
                .map(move |q| (featurize(&q.norm_text, vocab), label))
        })
        .collect()
}

/// Weights kept as `scale * v` so the L2 shrink is O(1) per step.
pub(crate) struct ScaledWeights {
    pub v: Vec<f64>,
    pub scale: f64,
}

impl ScaledWeights {
    pub fn new(len: usize) -> Self {
        Self {
            v: vec![0.0; len],
            scale: 1.0,
        }
    }

    pub fn shrink(&mut self, factor: f64) {
        self.scale *= factor;
        if self.scale < 1e-9 {
            for w in &mut self.v {
                *w *= self.scale;
            }
            self.scale = 1.0;
        }
    }

    pub fn materialize(&self) -> Vec<f64> {
        self.v.iter().map(|w| w * self.scale).collect()
    }
}

/// Step size at update `t`: decays as 1/t measured in epochs.
pub(crate) fn step_size(learning_rate: f64, t: usize, n: usize) -> f64 {
    learning_rate / (1.0 + t as f64 / n as f64)
}

pub fn train_classifier(corpus: &Corpus, cfg: &ConfusionConfig) -> Result<LinearModel> {
    cfg.validate()?;
    if corpus.intent_count() < 2 {
        return Err(Error::TooFewIntents(corpus.intent_count()));
    }
    if let Some(intent) = corpus.intents.values().find(|i| i.is_empty()) {
        return Err(Error::EmptyIntent(intent.intent_ref().to_string()));
    }
    let vocab = build_vocab(corpus)?;
    let labels: Vec<String> = corpus.intents.keys().cloned().collect();
    let k = labels.len();
    let v = vocab.size();
    let rows = training_rows(corpus, &vocab);
    let n = rows.len();

    let mut w = ScaledWeights::new(k * v);
    let mut bias = vec![0.0f64; k];
    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, label) = &rows[i];
            let eta = step_size(cfg.learning_rate, t, n);
            w.shrink(1.0 - eta * cfg.l2);
            for c in 0..k {
                let row = &mut w.v[c * v..(c + 1) * v];
                let dot: f64 = x.entries.iter().map(|&(j, cnt)| row[j] * f64::from(cnt)).sum();
                let score = w.scale * dot + bias[c];
                let y = if c == *label { 1.0 } else { -1.0 };
                if y * score < 1.0 {
                    let step = eta * y / w.scale;
                    for &(j, cnt) in &x.entries {
                        row[j] += step * f64::from(cnt);
                    }
                    bias[c] += eta * y;
                }
            }
            t += 1;
        }
    }

    let dense = w.materialize();
    let mut weights = Vec::with_capacity(k * (v + 1));
    for c in 0..k {
        weights.extend(dense[c * v..(c + 1) * v].iter().map(|&x| x as f32));
        weights.push(bias[c] as f32);
    }
    Ok(LinearModel {
        labels,
        vocab,
        weights,
        trained_on: corpus.dataset_id.clone(),
        seed: cfg.seed,
    })
}

pub fn predict<'m>(model: &'m LinearModel, text: &str) -> &'m str {
    &model.labels[model.predict_index(text)]
}

/// Predicted-label counts over a candidate intent, in model label order,
/// zero counts omitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationDistribution {
    pub counts: Vec<(String, usize)>,
}

impl ClassificationDistribution {
    pub fn total(&self) -> usize {
        self.counts.iter().map(|(_, c)| c).sum()
    }

    /// Most frequent label; the earliest label in model order wins ties.
    pub fn target(&self) -> Option<&str> {
        let mut best: Option<&(String, usize)> = None;
        for entry in &self.counts {
            if best.is_none_or(|b| entry.1 > b.1) {
                best = Some(entry);
            }
        }
        best.map(|(l, _)| l.as_str())
    }
}

pub fn classification_distribution(
    model: &LinearModel,
    candidate: &Intent,
) -> Result<ClassificationDistribution> {
    if candidate.is_empty() {
        return Err(Error::EmptyIntent(candidate.intent_ref().to_string()));
    }
    if candidate.dataset_id == model.trained_on {
        return Err(Error::SameDataset(candidate.intent_ref().to_string()));
    }
    let predictions: Vec<usize> = candidate
        .queries
        .par_iter()
        .map(|q| model.predict_index(&q.norm_text))
        .collect();
    let mut counts = vec![0usize; model.labels.len()];
    for p in predictions {
        counts[p] += 1;
    }
    Ok(ClassificationDistribution {
        counts: model
            .labels
            .iter()
            .zip(counts)
            .filter(|(_, c)| *c > 0)
            .map(|(l, c)| (l.clone(), c))
            .collect(),
    })
}

/// `max(d) / sum(d)`.
pub fn collision_score(d: &ClassificationDistribution) -> Result<f64> {
    let total = d.total();
    if total == 0 {
        return Err(Error::EmptyDistribution);
    }
    let max = d.counts.iter().map(|(_, c)| *c).max().unwrap_or(0);
    Ok(max as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionResult {
    pub collide: bool,
    pub target: String,
    pub score: f64,
}

pub fn detect_collision_confusion(
    model: &LinearModel,
    candidate: &Intent,
    cfg: &ConfusionConfig,
) -> Result<ConfusionResult> {
    let d = classification_distribution(model, candidate)?;
    decide_confusion(&d, cfg.tau)
}

pub(crate) fn decide_confusion(d: &ClassificationDistribution, tau: f64) -> Result<ConfusionResult> {
    let score = collision_score(d)?;
    Ok(ConfusionResult {
        collide: score > tau,
        target: d.target().unwrap_or_default().to_string(),
        score,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    dataset_id: String,
    labels: Vec<String>,
    vocab: Vec<String>,
    seed: u64,
}

/// Writes the JSON header and the weight matrix (labels x (vocab + 1)).
pub fn save_model(model: &LinearModel, header_path: &Path, matrix_path: &Path) -> Result<()> {
    let header = ModelHeader {
        dataset_id: model.trained_on.clone(),
        labels: model.labels.clone(),
        vocab: model.vocab.terms().map(str::to_string).collect(),
        seed: model.seed,
    };
    let f = File::create(header_path).map_err(|e| Error::io(header_path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, &header)?;
    w.write_all(b"\n").map_err(|e| Error::io(header_path, e))?;
    w.flush().map_err(|e| Error::io(header_path, e))?;

    let matrix = Matrix::new(model.row_len(), model.labels.len(), model.weights.clone())?;
    let f = File::create(matrix_path).map_err(|e| Error::io(matrix_path, e))?;
    let mut w = BufWriter::new(f);
    matrix.write(&mut w).map_err(|e| Error::io(matrix_path, e))?;
    w.flush().map_err(|e| Error::io(matrix_path, e))
}

pub fn load_model(header_path: &Path, matrix_path: &Path) -> Result<LinearModel> {
    let f = File::open(header_path).map_err(|e| Error::io(header_path, e))?;
    let header: ModelHeader = serde_json::from_reader(BufReader::new(f))?;
    let f = File::open(matrix_path).map_err(|e| Error::io(matrix_path, e))?;
    let matrix = Matrix::read(BufReader::new(f))?;
    let vocab = BowVocabulary::from_terms(header.vocab.iter().cloned());
    if vocab.size() != header.vocab.len() {
        return Err(Error::Matrix("model vocabulary has duplicate terms".into()));
    }
    if matrix.rows != header.labels.len() || matrix.dim != vocab.size() + 1 {
        return Err(Error::Matrix(format!(
            "weight matrix is {}x{}, header needs {}x{}",
            matrix.rows,
            matrix.dim,
            header.labels.len(),
            vocab.size() + 1
        )));
    }
    Ok(LinearModel {
        labels: header.labels,
        vocab,
        weights: matrix.data,
        trained_on: header.dataset_id,
        seed: header.seed,
    })
}
