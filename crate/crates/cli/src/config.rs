//! TOML run configuration.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Secrets never live here; the API key is read from the environment
//! variable named by `predict.remote.key_env`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use corrcast_core::correlation::{CodingScheme, MonthKey, Variant};
use corrcast_core::stats::{Period, RmseNormalization};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; required when a sampling predictor is enabled.
    pub seed: Option<u64>,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    pub prices: PricesConfig,
    pub bond: Option<BondConfig>,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub predict: PredictConfig,
    pub backtest: BacktestSettings,
    #[serde(default)]
    pub stats: StatsConfig,
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricesConfig {
    /// Directory of `<ticker>.csv` files with a `date,close` header.
    pub source_dir: PathBuf,
    pub stock: String,
    pub bond: String,
    /// Assets beyond stock and bond for multi-asset portfolios.
    #[serde(default)]
    pub extra: Vec<String>,
    /// Display names used in prompts for non stock/bond pairs.
    #[serde(default)]
    pub names: std::collections::BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BondConfig {
    pub candidates: Vec<String>,
    #[serde(default = "default_split")]
    pub split: f64,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

fn default_split() -> f64 {
    0.8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    /// Existing JSONL corpus; takes precedence over fetching.
    pub path: Option<PathBuf>,
    pub fetch: Option<FetchSettings>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchSettings {
    pub url_template: String,
    pub first_year: i32,
    pub last_year: i32,
    pub months: Vec<u32>,
    pub districts: Vec<String>,
    #[serde(default = "default_delay_ms")]
    pub delay_ms: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_delay_ms() -> u64 {
    500
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    #[serde(default = "default_first_month")]
    pub start: MonthKey,
    #[serde(default = "default_last_month")]
    pub end: MonthKey,
    #[serde(default = "default_history")]
    pub history_months: usize,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<CodingScheme>,
    #[serde(default = "default_predictors")]
    pub predictors: Vec<String>,
    /// Months of realized history in the baseline EWMA span.
    #[serde(default = "default_baseline_span")]
    pub baseline_span: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub remote: RemoteSettings,
    #[serde(default)]
    pub classifier: ClassifierSettings,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            start: default_first_month(),
            end: default_last_month(),
            history_months: default_history(),
            schemes: default_schemes(),
            predictors: default_predictors(),
            baseline_span: default_baseline_span(),
            concurrency: default_concurrency(),
            remote: RemoteSettings::default(),
            classifier: ClassifierSettings::default(),
        }
    }
}

fn default_first_month() -> MonthKey {
    MonthKey { year: 1980, month: 1 }
}

fn default_last_month() -> MonthKey {
    MonthKey { year: 2024, month: 6 }
}

fn default_history() -> usize {
    3
}

fn default_schemes() -> Vec<CodingScheme> {
    CodingScheme::ALL.to_vec()
}

fn default_predictors() -> Vec<String> {
    vec!["baseline".into()]
}

fn default_baseline_span() -> usize {
    12
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSettings {
    #[serde(default = "default_model")]
    pub model: String,
    /// Endpoint URL; the `CORRCAST_API_URL` variable overrides it.
    pub url: Option<String>,
    #[serde(default = "default_key_env")]
    pub key_env: String,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub min_interval_ms: u64,
    #[serde(default = "default_segment_words")]
    pub max_tokens_per_segment: usize,
    #[serde(default = "default_true")]
    pub logprobs: bool,
    /// Also run the prompt without past correlations.
    #[serde(default = "default_true")]
    pub without_history: bool,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        Self {
            model: default_model(),
            url: None,
            key_env: default_key_env(),
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            timeout_ms: default_timeout_ms(),
            min_interval_ms: 0,
            max_tokens_per_segment: default_segment_words(),
            logprobs: true,
            without_history: true,
        }
    }
}

fn default_model() -> String {
    "gpt-3.5-turbo".into()
}

fn default_key_env() -> String {
    corrcast_core::predictors::API_KEY_ENV.into()
}

fn default_retries() -> usize {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_segment_words() -> usize {
    3000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSettings {
    #[serde(default = "default_train_start")]
    pub train_start: MonthKey,
    #[serde(default = "default_train_end")]
    pub train_end: MonthKey,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub l2: f64,
    pub batch_size: Option<usize>,
    #[serde(default = "default_min_count")]
    pub min_token_count: usize,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        Self {
            train_start: default_train_start(),
            train_end: default_train_end(),
            epochs: default_epochs(),
            learning_rate: default_lr(),
            l2: 0.0,
            batch_size: None,
            min_token_count: default_min_count(),
        }
    }
}

fn default_train_start() -> MonthKey {
    Period::train().start
}

fn default_train_end() -> MonthKey {
    Period::train().end
}

fn default_epochs() -> usize {
    10
}

fn default_lr() -> f64 {
    1.0
}

fn default_min_count() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestSettings {
    pub start: NaiveDate,
    pub end: NaiveDate,
    #[serde(default = "default_vol_span")]
    pub vol_span: usize,
    /// Annualized; omit to disable volatility targeting.
    #[serde(default = "default_target_vol")]
    pub target_vol: Option<f64>,
    #[serde(default = "default_cutoff")]
    pub covid_cutoff: NaiveDate,
    /// Daily risk-free rate for the cash leg.
    #[serde(default)]
    pub risk_free: f64,
    #[serde(default = "default_annualization")]
    pub annualization: f64,
    /// Strategies besides the always-present baseline.
    #[serde(default)]
    pub strategies: Vec<String>,
    #[serde(default = "default_scheme")]
    pub scheme: CodingScheme,
    #[serde(default = "default_variant")]
    pub variant: Variant,
}

fn default_vol_span() -> usize {
    60
}

fn default_target_vol() -> Option<f64> {
    Some(0.10)
}

fn default_cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

fn default_annualization() -> f64 {
    252.0
}

fn default_scheme() -> CodingScheme {
    CodingScheme::ThreeLevel
}

fn default_variant() -> Variant {
    Variant::V3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    #[serde(default)]
    pub normalization: RmseNormalization,
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
    #[serde(default = "default_train_start")]
    pub train_start: MonthKey,
    #[serde(default = "default_train_end")]
    pub train_end: MonthKey,
    #[serde(default = "default_test_start")]
    pub test_start: MonthKey,
    #[serde(default = "default_test_end")]
    pub test_end: MonthKey,
    /// Predictor checked for look-ahead bias.
    #[serde(default = "default_remote")]
    pub lookahead: String,
    /// `[without, with]` history prompts.
    #[serde(default = "default_history_pair")]
    pub history: [String; 2],
    /// `[a, b]`, testing that `a` has lower errors.
    #[serde(default = "default_comparison")]
    pub comparison: [String; 2],
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            normalization: RmseNormalization::Mean,
            ns: default_ns(),
            train_start: default_train_start(),
            train_end: default_train_end(),
            test_start: default_test_start(),
            test_end: default_test_end(),
            lookahead: default_remote(),
            history: default_history_pair(),
            comparison: default_comparison(),
        }
    }
}

impl StatsConfig {
    pub fn train(&self) -> Period {
        Period::new("train", self.train_start, self.train_end)
    }

    pub fn test(&self) -> Period {
        Period::new("test", self.test_start, self.test_end)
    }

    pub fn full(&self) -> Period {
        Period::new("full", self.train_start, self.test_end)
    }
}

fn default_ns() -> Vec<usize> {
    corrcast_core::stats::WINDOW_LENGTHS.to_vec()
}

fn default_test_start() -> MonthKey {
    Period::test().start
}

fn default_test_end() -> MonthKey {
    Period::test().end
}

fn default_remote() -> String {
    "remote".into()
}

fn default_history_pair() -> [String; 2] {
    ["remote-nohist".into(), "remote".into()]
}

fn default_comparison() -> [String; 2] {
    ["remote".into(), "classifier".into()]
}

/// Predictors whose outputs depend on sampled randomness.
const SAMPLING_PREDICTORS: [&str; 2] = ["remote", "classifier"];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.data_dir);
        resolve(&mut self.prices.source_dir);
        if let Some(p) = self.corpus.path.as_mut() {
            resolve(p);
        }
    }

    /// Checks cross-field invariants; `seed` may come from the command line.
    pub fn validate(&self) -> Result<()> {
        if !self.prices.source_dir.is_dir() {
            bail!("prices.source_dir {} does not exist", self.prices.source_dir.display());
        }
        if let Some(p) = &self.corpus.path {
            if !p.is_file() {
                bail!("corpus.path {} does not exist", p.display());
            }
        } else if self.corpus.fetch.is_none() {
            bail!("corpus needs either `path` or a `fetch` section");
        }
        let sampling = self
            .predict
            .predictors
            .iter()
            .any(|p| SAMPLING_PREDICTORS.contains(&p.as_str()));
        if sampling && self.seed.is_none() {
            bail!("`seed` is required when the remote or classifier predictor is enabled (set it in the config or pass --seed)");
        }
        if self.predict.start > self.predict.end {
            bail!("predict.start {} is after predict.end {}", self.predict.start, self.predict.end);
        }
        if self.backtest.start >= self.backtest.end {
            bail!("backtest.start must be before backtest.end");
        }
        if let Some(b) = &self.bond {
            if b.candidates.is_empty() {
                bail!("bond.candidates is empty");
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// All tickers, stock and bond first.
    pub fn assets(&self) -> Vec<String> {
        let mut out = vec![self.prices.stock.clone(), self.prices.bond.clone()];
        out.extend(self.prices.extra.iter().cloned());
        out
    }

    /// Every ticker that ingest should normalize.
    pub fn all_tickers(&self) -> Vec<String> {
        let mut out = self.assets();
        if let Some(b) = &self.bond {
            out.extend(b.candidates.iter().cloned());
        }
        let mut seen = std::collections::BTreeSet::new();
        out.retain(|t| seen.insert(t.clone()));
        out
    }
}
