use crate::correlation::{round_to_class, CodingScheme, CorrelationSeries};
use crate::market_data::ewma_mean;
use crate::{Error, Result};

use super::{Predictor, PredictorOutput, PromptContext};

/// EWMA of prior realized correlations, rounded to a class with
/// probability 1.
pub fn baseline_predict(history: &[f64], span: usize, scheme: CodingScheme) -> Result<PredictorOutput> {
    if history.is_empty() {
        return Err(Error::InsufficientData(
            "baseline needs at least one prior realized correlation".into(),
        ));
    }
    if span == 0 {
        return Err(Error::Domain("EWMA span must be positive".into()));
    }
    Ok(PredictorOutput {
        class: round_to_class(ewma_mean(history, span), scheme),
        probability: 1.0,
        probability_reported: true,
    })
}

/// Baseline over a realized series; only months before the queried one are
/// read.
#[derive(Debug, Clone)]
pub struct BaselinePredictor {
    realized: CorrelationSeries,
    span: usize,
}

impl BaselinePredictor {
    pub fn new(realized: CorrelationSeries, span: usize) -> Self {
        Self { realized, span }
    }
}

impl Predictor for BaselinePredictor {
    fn name(&self) -> &str {
        "baseline"
    }

    fn predict(&self, ctx: &PromptContext) -> Result<PredictorOutput> {
        baseline_predict(&self.realized.before(ctx.month), self.span, ctx.scheme)
    }
}
