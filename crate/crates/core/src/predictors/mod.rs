//! Predictor contract and the monthly prediction pipeline.
//!
//! A predictor maps one article (plus the recent realized correlations) to a
//! class and the probability of that class. The pipeline runs a predictor
//! over every article of a month's Beige Book issue and turns the outputs
//! into the three strength-scaled correlation series.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::correlation::{
    aggregate_month, class_to_correlation, strength_scaled, CodingScheme, CorrelationSeries,
    MonthKey, Variant,
};
use crate::Result;

mod baseline;
mod classifier;
mod prompt;
mod remote;
mod segment;

pub use baseline::{baseline_predict, BaselinePredictor};
pub use classifier::{
    classifier_predict, tokenize, train_classifier, ClassifierConfig, ClassifierModel,
    ClassifierPredictor, TrainingReport,
};
pub use prompt::{build_prompt, parse_completion, parse_reply, Completion};
pub use remote::{
    ChatMessage, CompletionRequest, CompletionTransport, HttpTransport, RemoteConfig,
    RemotePredictor, RetryPolicy, TranscriptCache, API_KEY_ENV, API_URL_ENV,
};
pub use segment::{segment_article, split_segments, word_count, MAX_SAMPLED_SEGMENTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorOutput {
    pub class: usize,
    /// Probability of `class`.
    pub probability: f64,
    /// False when the source gave no probability and 1.0 was assumed.
    pub probability_reported: bool,
}

/// Everything a predictor may look at for one article.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    /// The month being predicted.
    pub month: MonthKey,
    pub article: String,
    /// Realized correlations of the months before `month`, oldest first.
    pub past_correlations: Vec<f64>,
    pub scheme: CodingScheme,
    /// Asset names for non stock/bond pairs.
    pub subject: Option<(String, String)>,
}

impl PromptContext {
    pub fn new(
        month: MonthKey,
        article: impl Into<String>,
        past_correlations: Vec<f64>,
        scheme: CodingScheme,
    ) -> Self {
        Self {
            month,
            article: article.into(),
            past_correlations,
            scheme,
            subject: None,
        }
    }
}

pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;

    /// Must be deterministic for fixed predictor state and context.
    fn predict(&self, ctx: &PromptContext) -> Result<PredictorOutput>;
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub scheme: CodingScheme,
    /// Realized months passed to the predictor as history.
    pub history_months: usize,
    /// Months predicted concurrently.
    pub concurrency: usize,
    pub subject: Option<(String, String)>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scheme: CodingScheme::ThreeLevel,
            history_months: 3,
            concurrency: 4,
            subject: None,
        }
    }
}

/// Per-article outputs for each predicted month.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionRun {
    pub scheme: Option<CodingScheme>,
    pub outputs: BTreeMap<MonthKey, Vec<PredictorOutput>>,
    /// Months with no issue available or no usable article prediction.
    pub missing: Vec<MonthKey>,
}

impl PredictionRun {
    /// Strength-scaled, article-averaged correlation per month.
    pub fn series(&self, source: &str, variant: Variant) -> Result<CorrelationSeries> {
        let scheme = self.scheme.unwrap_or(CodingScheme::ThreeLevel);
        let mut series = CorrelationSeries::new(source);
        for (month, outputs) in &self.outputs {
            let scaled = outputs
                .iter()
                .map(|o| strength_scaled(class_to_correlation(o.class, scheme)?, o.probability, variant))
                .collect::<Result<Vec<f64>>>()?;
            series.insert(*month, aggregate_month(&scaled)?)?;
        }
        Ok(series)
    }
}

/// Runs `predictor` over the articles of each month in `months`.
///
/// A month with no issue of its own reuses the latest earlier issue. Only
/// corpus records dated on or before the month and realized values dated
/// strictly before it are visible to the predictor.
pub fn predict_months(
    predictor: &dyn Predictor,
    corpus: &Corpus,
    realized: &CorrelationSeries,
    months: &[MonthKey],
    config: &PipelineConfig,
) -> PredictionRun {
    let results: Mutex<Vec<Option<Vec<PredictorOutput>>>> = Mutex::new(vec![None; months.len()]);
    let cursor = AtomicUsize::new(0);
    let workers = config.concurrency.max(1).min(months.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                let Some(&month) = months.get(i) else { break };
                let outputs = predict_one_month(predictor, corpus, realized, month, config);
                results.lock().expect("pipeline results poisoned")[i] = Some(outputs);
            });
        }
    });

    let mut run = PredictionRun {
        scheme: Some(config.scheme),
        ..Default::default()
    };
    let results = results.into_inner().expect("pipeline results poisoned");
    for (month, outputs) in months.iter().zip(results) {
        match outputs {
            Some(o) if !o.is_empty() => {
                run.outputs.insert(*month, o);
            }
            _ => run.missing.push(*month),
        }
    }
    run
}

fn predict_one_month(
    predictor: &dyn Predictor,
    corpus: &Corpus,
    realized: &CorrelationSeries,
    month: MonthKey,
    config: &PipelineConfig,
) -> Vec<PredictorOutput> {
    let Some((_, articles)) = corpus.latest_issue(month) else {
        warn!("{}: no Beige Book issue on or before {month}", predictor.name());
        return Vec::new();
    };
    let history = realized.last_before(month, config.history_months);
    let mut outputs = Vec::with_capacity(articles.len());
    for article in articles {
        let ctx = PromptContext {
            month,
            article: article.text.clone(),
            past_correlations: history.clone(),
            scheme: config.scheme,
            subject: config.subject.clone(),
        };
        match predictor.predict(&ctx) {
            Ok(out) => outputs.push(out),
            Err(e) => warn!(
                "{}: {month} {}: {e}",
                predictor.name(),
                article.district
            ),
        }
    }
    outputs
}
