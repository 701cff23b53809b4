//! Prompt construction and reply parsing for completion-style predictors.

use crate::correlation::CodingScheme;
use crate::{Error, Result};

use super::{PredictorOutput, PromptContext};

fn format_correlations(values: &[f64]) -> String {
    let items: Vec<String> = values
        .iter()
        .map(|v| {
            let s = format!("{v:.4}");
            if s == "-0.0000" {
                "0.0000".to_string()
            } else {
                s
            }
        })
        .collect();
    format!("[{}]", items.join(", "))
}

/// Renders the correlation-guessing prompt. The history paragraph is left
/// out entirely when there are no past correlations.
pub fn build_prompt(ctx: &PromptContext) -> String {
    let (pair_noun, returns_phrase) = match &ctx.subject {
        None => ("stocks and bonds".to_string(), "stock returns and bond returns".to_string()),
        Some((a, b)) => (format!("{a} and {b}"), format!("{a} returns and {b} returns")),
    };
    let mut paragraphs = Vec::with_capacity(7);
    paragraphs.push(format!(
        "You are a financial agent in the year {}. You don't know anything that happens during \
         this year or anything afterwards. The following data is an article regarding the \
         economic conditions: {}",
        ctx.month.year, ctx.article
    ));
    if !ctx.past_correlations.is_empty() {
        paragraphs.push(format!(
            "Furthermore, previous {} month's correlations of {pair_noun} are given by {} from \
             oldest to most recent.",
            ctx.past_correlations.len(),
            format_correlations(&ctx.past_correlations)
        ));
    }
    paragraphs.push(format!(
        "Only using the above data and nothing else, how do you think {returns_phrase} will be \
         correlated?"
    ));
    paragraphs.push(
        "Do not use any other outside information. You must choose a side, you don't need to be \
         certain about it."
            .to_string(),
    );
    match ctx.scheme {
        CodingScheme::ThreeLevel => {
            paragraphs.push(
                "Respond with only 0, 1 or 2, 0 being negatively correlated, 1 being uncorrelated, \
                 and 2 being positively correlated."
                    .to_string(),
            );
            paragraphs.push("You should return 1 digit and nothing else.".to_string());
            paragraphs.push(
                "Example: 1. This example implies the guess is positive correlation. Ensure the \
                 formatting is correct."
                    .to_string(),
            );
        }
        CodingScheme::ElevenBin => {
            paragraphs.push(
                "Respond with only a number from 0 to 10, 0 being perfectly negatively \
                 correlated, 5 being uncorrelated, and 10 being perfectly positively correlated."
                    .to_string(),
            );
            paragraphs.push("You should return 1 or 2 digits and nothing else.".to_string());
            paragraphs.push(
                "Example: 7. This example implies the guess is positive correlation. Ensure the \
                 formatting is correct."
                    .to_string(),
            );
        }
    }
    paragraphs.join("\n\n")
}

/// A raw completion plus the log-probability of its first token, if the
/// endpoint reported one.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Completion {
    pub text: String,
    #[serde(default)]
    pub first_token_logprob: Option<f64>,
}

/// Accepts a bare non-negative integer (surrounding whitespace allowed) in
/// the scheme's class range. Probability defaults to 1.0 when unreported.
pub fn parse_completion(raw: &str, scheme: CodingScheme) -> Result<PredictorOutput> {
    parse_reply(
        &Completion {
            text: raw.to_string(),
            first_token_logprob: None,
        },
        scheme,
    )
}

pub fn parse_reply(completion: &Completion, scheme: CodingScheme) -> Result<PredictorOutput> {
    let token = completion.text.trim();
    let malformed = || Error::MalformedReply(completion.text.clone());
    if token.is_empty() || token.len() > 2 || !token.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed());
    }
    let class: usize = token.parse().map_err(|_| malformed())?;
    if class >= scheme.class_count() {
        return Err(malformed());
    }
    let (probability, probability_reported) = match completion.first_token_logprob {
        Some(lp) if lp.is_finite() => (lp.exp().clamp(0.0, 1.0), true),
        _ => (1.0, false),
    };
    Ok(PredictorOutput {
        class,
        probability,
        probability_reported,
    })
}
