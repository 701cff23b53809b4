//! Multinomial logistic regression over bag-of-words features.
//!
//! Articles are labelled with the realized correlation class of their month.
//! Features are L2-normalised token counts plus a bias term, so the softmax
//! cross-entropy has a gradient Lipschitz constant of at most `1 + l2`;
//! full-batch steps of `1 / (1 + l2)` or smaller never increase the loss.

use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::correlation::{CodingScheme, MonthKey};
use crate::{Error, Result};

use super::{Predictor, PredictorOutput, PromptContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// `None` trains full-batch: one gradient step per epoch.
    pub batch_size: Option<usize>,
    /// Tokens seen fewer times than this across training are dropped.
    pub min_token_count: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1.0,
            l2: 0.0,
            batch_size: None,
            min_token_count: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub vocabulary: BTreeMap<String, usize>,
    /// One row per class, one column per vocabulary entry.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub scheme: CodingScheme,
    pub window: (MonthKey, MonthKey),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub examples: usize,
    /// Mean cross-entropy before training and after each epoch.
    pub loss_trace: Vec<f64>,
    pub absent_classes: Vec<usize>,
    pub skipped_unlabelled: usize,
}

/// Lower-cased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

type SparseDoc = Vec<(usize, f64)>;

fn featurize(vocabulary: &BTreeMap<String, usize>, text: &str) -> SparseDoc {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for tok in tokenize(text) {
        if let Some(&i) = vocabulary.get(&tok) {
            *counts.entry(i).or_default() += 1.0;
        }
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    counts
        .into_iter()
        .map(|(i, c)| (i, if norm > 0.0 { c / norm } else { 0.0 }))
        .collect()
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        total += *z;
    }
    for z in logits.iter_mut() {
        *z /= total;
    }
}

impl ClassifierModel {
    fn class_count(&self) -> usize {
        self.bias.len()
    }

    fn probabilities_for(&self, doc: &SparseDoc) -> Vec<f64> {
        let mut logits = self.bias.clone();
        for (c, z) in logits.iter_mut().enumerate() {
            for &(i, x) in doc {
                *z += self.weights[c][i] * x;
            }
        }
        softmax_in_place(&mut logits);
        logits
    }

    /// Class probabilities for `text`; unknown tokens are ignored.
    pub fn probabilities(&self, text: &str) -> Vec<f64> {
        self.probabilities_for(&featurize(&self.vocabulary, text))
    }

    fn mean_loss(&self, docs: &[(SparseDoc, usize)]) -> f64 {
        let total: f64 = docs
            .iter()
            .map(|(doc, y)| -self.probabilities_for(doc)[*y].max(f64::MIN_POSITIVE).ln())
            .sum();
        total / docs.len() as f64
    }
}

/// Argmax class with its softmax probability.
pub fn classifier_predict(model: &ClassifierModel, text: &str) -> PredictorOutput {
    let probs = model.probabilities(text);
    let (class, probability) = probs
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best });
    PredictorOutput {
        class,
        probability,
        probability_reported: true,
    }
}

/// Trains on every article whose month lies inside `window` (inclusive) and
/// has a label. Classes missing from the training data keep zero weights and
/// a smoothed prior bias.
pub fn train_classifier(
    corpus: &Corpus,
    labels: &BTreeMap<MonthKey, usize>,
    window: (MonthKey, MonthKey),
    scheme: CodingScheme,
    config: &ClassifierConfig,
) -> Result<(ClassifierModel, TrainingReport)> {
    let k = scheme.class_count();
    let mut texts = Vec::new();
    let mut skipped = 0;
    for record in corpus.records() {
        let m = record.month_key();
        if m < window.0 || m > window.1 {
            continue;
        }
        match labels.get(&m) {
            Some(&y) if y < k => texts.push((record.text.as_str(), y)),
            Some(&y) => {
                return Err(Error::Domain(format!(
                    "label {y} for {m} outside {} classes",
                    k
                )))
            }
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        warn!("{skipped} training articles have no realized label and were skipped");
    }
    if texts.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no labelled articles between {} and {}",
            window.0, window.1
        )));
    }

    let mut token_counts: BTreeMap<String, usize> = BTreeMap::new();
    for (text, _) in &texts {
        for tok in tokenize(text) {
            *token_counts.entry(tok).or_default() += 1;
        }
    }
    let vocabulary: BTreeMap<String, usize> = token_counts
        .into_iter()
        .filter(|(_, c)| *c >= config.min_token_count)
        .enumerate()
        .map(|(i, (tok, _))| (tok, i))
        .collect();
    let docs: Vec<(SparseDoc, usize)> = texts
        .iter()
        .map(|(text, y)| (featurize(&vocabulary, text), *y))
        .collect();

    let mut class_counts = vec![0usize; k];
    for (_, y) in &docs {
        class_counts[*y] += 1;
    }
    let absent: Vec<usize> = (0..k).filter(|&c| class_counts[c] == 0).collect();
    if !absent.is_empty() {
        warn!("classes {absent:?} absent from training data; keeping prior-only weights");
    }
    let n = docs.len() as f64;
    let mut model = ClassifierModel {
        weights: vec![vec![0.0; vocabulary.len()]; k],
        bias: class_counts
            .iter()
            .map(|&c| ((c as f64 + 1.0) / (n + k as f64)).ln())
            .collect(),
        vocabulary,
        scheme,
        window,
    };
    let trainable: Vec<bool> = class_counts.iter().map(|&c| c > 0).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let batch = config.batch_size.unwrap_or(docs.len()).max(1);
    let mut loss_trace = vec![model.mean_loss(&docs)];
    for _ in 0..config.epochs {
        if config.batch_size.is_some() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            gradient_step(&mut model, &docs, chunk, &trainable, config);
        }
        loss_trace.push(model.mean_loss(&docs));
    }

    let report = TrainingReport {
        examples: docs.len(),
        loss_trace,
        absent_classes: absent,
        skipped_unlabelled: skipped,
    };
    Ok((model, report))
}

fn gradient_step(
    model: &mut ClassifierModel,
    docs: &[(SparseDoc, usize)],
    batch: &[usize],
    trainable: &[bool],
    config: &ClassifierConfig,
) {
    let k = model.class_count();
    let m = batch.len() as f64;
    let mut grad_w: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
    let mut grad_b = vec![0.0; k];
    for &i in batch {
        let (doc, y) = &docs[i];
        let probs = model.probabilities_for(doc);
        for c in 0..k {
            let residual = probs[c] - if c == *y { 1.0 } else { 0.0 };
            grad_b[c] += residual / m;
            for &(j, x) in doc {
                *grad_w[c].entry(j).or_default() += residual * x / m;
            }
        }
    }
    let lr = config.learning_rate;
    for c in (0..k).filter(|&c| trainable[c]) {
        if config.l2 > 0.0 {
            let shrink = 1.0 - lr * config.l2;
            model.weights[c].iter_mut().for_each(|w| *w *= shrink);
        }
        for (&j, g) in &grad_w[c] {
            model.weights[c][j] -= lr * g;
        }
        model.bias[c] -= lr * grad_b[c];
    }
}

/// [`Predictor`] wrapper that classifies the context's article.
#[derive(Debug, Clone)]
pub struct ClassifierPredictor {
    name: String,
    model: ClassifierModel,
}

impl ClassifierPredictor {
    pub fn new(name: impl Into<String>, model: ClassifierModel) -> Self {
        Self {
            name: name.into(),
            model,
        }
    }

    pub fn model(&self) -> &ClassifierModel {
        &self.model
    }
}

impl Predictor for ClassifierPredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, ctx: &PromptContext) -> Result<PredictorOutput> {
        if ctx.scheme != self.model.scheme {
            return Err(Error::Domain(format!(
                "classifier trained for {} scheme, asked for {}",
                self.model.scheme.label(),
                ctx.scheme.label()
            )));
        }
        Ok(classifier_predict(&self.model, &ctx.article))
    }
}
