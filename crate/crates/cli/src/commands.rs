//! One function per CLI verb.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context as _, Result};
use log::{info, warn};
use serde::Serialize;

use corrcast_core::backtest::{
    read_values_csv, run_backtest, summarize, BacktestConfig, BacktestSummary, BaselineForecaster,
    CorrelationForecaster, RiskFree, SeriesForecaster,
};
use corrcast_core::corpus::{fetch_articles, load_corpus_jsonl, Corpus, FetchConfig, UreqClient};
use corrcast_core::correlation::{
    realized_correlations, round_to_class, CodingScheme, CorrelationSeries, MonthKey, Variant,
};
use corrcast_core::market_data::{
    backfill_prices, best_subset_bond_regression, read_price_csv, write_price_csv, PriceSeries,
    RegressionModel,
};
use corrcast_core::portfolio::PairKey;
use corrcast_core::predictors::{
    predict_months, train_classifier, BaselinePredictor, ClassifierConfig, ClassifierPredictor,
    HttpTransport, PipelineConfig, Predictor, RemoteConfig, RemotePredictor, RetryPolicy,
    TranscriptCache, API_URL_ENV,
};
use corrcast_core::seed::fork;
use corrcast_core::stats::{
    experiment_history, experiment_lookahead, experiment_model_comparison, format_p, monthly_errors,
    Period, TestGrid, VariantSeries,
};

use crate::config::RunConfig;
use crate::store::{write_if_changed, write_json, write_with, DataLock, Layout};

/// Loaded configuration plus the data-directory layout.
pub struct Context {
    pub config: RunConfig,
    pub layout: Layout,
}

impl Context {
    pub fn new(config: RunConfig) -> Self {
        let layout = Layout::new(config.data_dir.clone());
        Self { config, layout }
    }
}

/// Runs `f` holding the data-directory lock. A failure leaves a `.partial`
/// marker in the stage directory; success clears it.
pub fn run_stage<T>(ctx: &Context, stage: &str, f: impl FnOnce(&Context) -> Result<T>) -> Result<T> {
    let _lock = DataLock::acquire(&ctx.layout.root)?;
    let marker = ctx.layout.partial_marker(stage);
    match f(ctx) {
        Ok(v) => {
            if marker.exists() {
                std::fs::remove_file(&marker)?;
            }
            Ok(v)
        }
        Err(e) => {
            if let Some(dir) = marker.parent() {
                let _ = std::fs::create_dir_all(dir);
            }
            let _ = std::fs::write(&marker, format!("{e:#}\n"));
            Err(e)
        }
    }
}

/// One correlation pair the pipeline tracks.
#[derive(Debug, Clone)]
pub struct PairSpec {
    pub tickers: (String, String),
    pub key: PairKey,
    /// `None` for the stock/bond pair, which uses unsuffixed file names.
    pub file_key: Option<PairKey>,
    pub subject: Option<(String, String)>,
}

/// The stock/bond pair first, then every other pair among the assets.
pub fn pairs(config: &RunConfig) -> Vec<PairSpec> {
    let assets = config.assets();
    let display = |t: &str| config.prices.names.get(t).cloned().unwrap_or_else(|| t.to_string());
    let mut out = Vec::new();
    for i in 0..assets.len() {
        for j in (i + 1)..assets.len() {
            let key = PairKey::new(assets[i].as_str(), assets[j].as_str());
            let main = i == 0 && j == 1;
            out.push(PairSpec {
                tickers: (assets[i].clone(), assets[j].clone()),
                file_key: (!main).then(|| key.clone()),
                subject: (!main).then(|| (display(&assets[i]), display(&assets[j]))),
                key,
            });
        }
    }
    out
}

fn source_price_file(config: &RunConfig, ticker: &str) -> Option<PathBuf> {
    let exact = config.prices.source_dir.join(format!("{ticker}.csv"));
    let slugged = config
        .prices
        .source_dir
        .join(format!("{}.csv", crate::store::slug(ticker)));
    [exact, slugged].into_iter().find(|p| p.is_file())
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestSummary {
    pub tickers: usize,
    pub articles: usize,
    pub files_changed: usize,
}

pub fn cmd_ingest(ctx: &Context) -> Result<IngestSummary> {
    let config = &ctx.config;
    let mut summary = IngestSummary::default();
    for ticker in config.all_tickers() {
        let src = source_price_file(config, &ticker).ok_or_else(|| {
            anyhow!(
                "no price file for ticker {ticker} in {}",
                config.prices.source_dir.display()
            )
        })?;
        let series = read_price_csv(&ticker, File::open(&src)?, &src)?;
        if write_with(&ctx.layout.price_file(&ticker), |w| write_price_csv(&series, w))? {
            summary.files_changed += 1;
        }
        summary.tickers += 1;
    }

    let corpus = match (&config.corpus.path, &config.corpus.fetch) {
        (Some(path), _) => load_corpus_jsonl(path)?,
        (None, Some(fetch)) => {
            let fetch_config = FetchConfig {
                url_template: fetch.url_template.clone(),
                years: fetch.first_year..=fetch.last_year,
                months: fetch.months.clone(),
                districts: fetch.districts.clone(),
                delay: Duration::from_millis(fetch.delay_ms),
                max_concurrency: fetch.concurrency,
            };
            let client = UreqClient::new(Duration::from_millis(fetch.timeout_ms));
            let (corpus, report) = fetch_articles(&fetch_config, &client).with_context(|| {
                format!(
                    "fetching articles from {}; check the URL template and network access, \
                     or point corpus.path at a local JSONL file",
                    fetch.url_template
                )
            })?;
            for f in &report.failures {
                warn!("missing article {}-{:02} {}: {}", f.year, f.month, f.district, f.reason);
            }
            corpus
        }
        (None, None) => bail!("corpus needs either `path` or a `fetch` section"),
    };
    summary.articles = corpus.len();
    if write_with(&ctx.layout.corpus(), |w| corpus.write_jsonl(w))? {
        summary.files_changed += 1;
    }
    Ok(summary)
}

/// Ingested prices for `ticker`; the reconstructed bond series wins over
/// the raw one when present.
pub fn load_prices(ctx: &Context, ticker: &str) -> Result<PriceSeries> {
    let spliced = ctx.layout.spliced_bond(ticker);
    let path = if ticker == ctx.config.prices.bond && spliced.is_file() {
        spliced
    } else {
        ctx.layout.price_file(ticker)
    };
    if !path.is_file() {
        bail!("no ingested prices for {ticker} at {}; run `corrcast ingest` first", path.display());
    }
    Ok(read_price_csv(ticker, File::open(&path)?, &path)?)
}

pub fn cmd_reconstruct_bond(ctx: &Context) -> Result<RegressionModel> {
    let bond = ctx
        .config
        .bond
        .as_ref()
        .ok_or_else(|| anyhow!("config has no [bond] section"))?;
    let target_ticker = &ctx.config.prices.bond;
    let target_path = ctx.layout.price_file(target_ticker);
    let target = read_price_csv(target_ticker, File::open(&target_path).with_context(|| {
        format!("{} missing; run `corrcast ingest` first", target_path.display())
    })?, &target_path)?;
    let mut candidates = BTreeMap::new();
    for c in &bond.candidates {
        candidates.insert(c.clone(), load_prices(ctx, c)?);
    }
    let model = best_subset_bond_regression(&candidates, &target, bond.split)?;
    let spliced = backfill_prices(&model, &candidates, &target, bond.start..=bond.end)?;

    write_with(&ctx.layout.spliced_bond(target_ticker), |w| write_price_csv(&spliced, w))?;
    write_json(&ctx.layout.bond_dir().join("model.json"), &model)?;
    let mut errors = String::from("date,error\n");
    for (d, e) in &model.holdout_residuals {
        errors.push_str(&format!("{d},{e}\n"));
    }
    write_if_changed(&ctx.layout.bond_dir().join("holdout_errors.csv"), errors.as_bytes())?;
    Ok(model)
}

pub fn cmd_realized_corr(ctx: &Context) -> Result<Vec<(PathBuf, usize)>> {
    let mut out = Vec::new();
    for pair in pairs(&ctx.config) {
        let a = load_prices(ctx, &pair.tickers.0)?.to_returns()?;
        let b = load_prices(ctx, &pair.tickers.1)?.to_returns()?;
        let series = realized_correlations(&a, &b);
        let path = ctx.layout.realized(pair.file_key.as_ref());
        write_with(&path, |w| series.write_csv(w))?;
        out.push((path, series.len()));
    }
    Ok(out)
}

fn load_realized(ctx: &Context, pair: &PairSpec) -> Result<CorrelationSeries> {
    let path = ctx.layout.realized(pair.file_key.as_ref());
    if !path.is_file() {
        bail!("{} missing; run `corrcast realized-corr` first", path.display());
    }
    Ok(CorrelationSeries::load(&path)?)
}

/// Overrides for `predict` from the command line.
#[derive(Debug, Clone, Default)]
pub struct PredictOptions {
    pub predictors: Vec<String>,
    pub start: Option<MonthKey>,
    pub end: Option<MonthKey>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictionFile {
    pub path: PathBuf,
    pub rows: usize,
    pub missing_months: usize,
}

fn remote_transport(ctx: &Context) -> Result<HttpTransport> {
    let settings = &ctx.config.predict.remote;
    let url = std::env::var(API_URL_ENV)
        .ok()
        .or_else(|| settings.url.clone())
        .ok_or_else(|| anyhow!("remote predictor needs {API_URL_ENV} or predict.remote.url"))?;
    let key = std::env::var(&settings.key_env).ok();
    if key.is_none() {
        warn!("{} is not set; sending requests without credentials", settings.key_env);
    }
    Ok(HttpTransport::new(url, key, Duration::from_millis(settings.timeout_ms)))
}

fn remote_predictor(ctx: &Context, name: &str, scheme: CodingScheme) -> Result<RemotePredictor> {
    let settings = &ctx.config.predict.remote;
    let config = RemoteConfig {
        model: settings.model.clone(),
        request_logprobs: settings.logprobs,
        retry: RetryPolicy {
            max_retries: settings.max_retries,
            base_backoff: Duration::from_millis(settings.backoff_ms),
            max_backoff: Duration::from_millis(settings.backoff_ms.saturating_mul(60)),
        },
        max_tokens_per_segment: settings.max_tokens_per_segment,
        seed: fork(ctx.config.seed(), "remote-segments"),
        min_interval: Duration::from_millis(settings.min_interval_ms),
    };
    let cache_path = ctx.layout.transcripts(name, scheme);
    if let Some(dir) = cache_path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let cache = TranscriptCache::open(&cache_path)?;
    Ok(RemotePredictor::new(name, config, Box::new(remote_transport(ctx)?), cache))
}

fn classifier_predictor(
    ctx: &Context,
    corpus: &Corpus,
    realized: &CorrelationSeries,
    scheme: CodingScheme,
    pair: &PairSpec,
) -> Result<ClassifierPredictor> {
    let settings = &ctx.config.predict.classifier;
    let window = (settings.train_start, settings.train_end);
    let labels: BTreeMap<MonthKey, usize> = realized
        .iter()
        .filter(|(m, _)| window.0 <= *m && *m <= window.1)
        .map(|(m, v)| (m, round_to_class(v, scheme)))
        .collect();
    let config = ClassifierConfig {
        epochs: settings.epochs,
        learning_rate: settings.learning_rate,
        l2: settings.l2,
        batch_size: settings.batch_size,
        min_token_count: settings.min_token_count,
        seed: fork(ctx.config.seed(), "classifier"),
    };
    let (model, report) = train_classifier(&corpus.up_to(window.1), &labels, window, scheme, &config)?;
    info!(
        "classifier/{}: {} examples, loss {:.4} -> {:.4}",
        scheme.label(),
        report.examples,
        report.loss_trace.first().copied().unwrap_or(f64::NAN),
        report.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    let suffix = pair
        .file_key
        .as_ref()
        .map_or_else(String::new, |k| format!("__{}__{}", crate::store::slug(k.first()), crate::store::slug(k.second())));
    let dir = ctx.layout.predictions_dir();
    write_json(&dir.join(format!("classifier-{}-model{suffix}.json", scheme.label())), &model)?;
    write_json(&dir.join(format!("classifier-{}-training{suffix}.json", scheme.label())), &report)?;
    Ok(ClassifierPredictor::new("classifier", model))
}

pub fn cmd_predict(ctx: &Context, options: &PredictOptions) -> Result<Vec<PredictionFile>> {
    let settings = &ctx.config.predict;
    let selected: Vec<String> = if options.predictors.is_empty() {
        settings.predictors.clone()
    } else {
        options.predictors.clone()
    };
    let start = options.start.unwrap_or(settings.start);
    let end = options.end.unwrap_or(settings.end);
    let months: Vec<MonthKey> = MonthKey::range(start, end).collect();
    let corpus_path = ctx.layout.corpus();
    if !corpus_path.is_file() {
        bail!("{} missing; run `corrcast ingest` first", corpus_path.display());
    }
    let corpus = load_corpus_jsonl(&corpus_path)?;

    let mut written = Vec::new();
    for pair in pairs(&ctx.config) {
        let realized = load_realized(ctx, &pair)?;
        for &scheme in &settings.schemes {
            for name in &selected {
                let mut runs: Vec<(String, Box<dyn Predictor>, usize)> = Vec::new();
                match name.as_str() {
                    "baseline" => runs.push((
                        name.clone(),
                        Box::new(BaselinePredictor::new(realized.clone(), settings.baseline_span)),
                        settings.history_months,
                    )),
                    "classifier" => runs.push((
                        name.clone(),
                        Box::new(classifier_predictor(ctx, &corpus, &realized, scheme, &pair)?),
                        settings.history_months,
                    )),
                    "remote" => {
                        runs.push((
                            name.clone(),
                            Box::new(remote_predictor(ctx, "remote", scheme)?),
                            settings.history_months,
                        ));
                        if settings.remote.without_history {
                            runs.push((
                                "remote-nohist".into(),
                                Box::new(remote_predictor(ctx, "remote-nohist", scheme)?),
                                0,
                            ));
                        }
                    }
                    other => bail!("unknown predictor {other:?} (expected baseline, classifier or remote)"),
                }
                for (label, predictor, history_months) in runs {
                    let pipeline = PipelineConfig {
                        scheme,
                        history_months,
                        concurrency: settings.concurrency,
                        subject: pair.subject.clone(),
                    };
                    let run = predict_months(predictor.as_ref(), &corpus, &realized, &months, &pipeline);
                    if !run.missing.is_empty() {
                        warn!(
                            "{label}/{}: {} of {} months without a prediction",
                            scheme.label(),
                            run.missing.len(),
                            months.len()
                        );
                    }
                    for variant in Variant::ALL {
                        let series = run.series(&label, variant)?;
                        let path = ctx.layout.prediction(&label, scheme, variant, pair.file_key.as_ref());
                        write_with(&path, |w| series.write_csv(w))?;
                        written.push(PredictionFile {
                            path,
                            rows: series.len(),
                            missing_months: run.missing.len(),
                        });
                    }
                }
            }
        }
    }
    Ok(written)
}

fn load_prediction(ctx: &Context, predictor: &str, scheme: CodingScheme, variant: Variant, pair: Option<&PairKey>) -> Result<CorrelationSeries> {
    let path = ctx.layout.prediction(predictor, scheme, variant, pair);
    if !path.is_file() {
        bail!("missing prediction file {}; run `corrcast predict` for {predictor}", path.display());
    }
    Ok(CorrelationSeries::load(&path)?)
}

fn load_variants(ctx: &Context, predictor: &str, scheme: CodingScheme) -> Result<VariantSeries> {
    Variant::ALL
        .iter()
        .map(|&v| Ok((v, load_prediction(ctx, predictor, scheme, v, None)?)))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub sharpe_tables: Vec<PathBuf>,
    pub summaries: Vec<BacktestSummary>,
}

fn strategy_forecaster(ctx: &Context, name: &str, pairs: &[PairSpec]) -> Result<Box<dyn CorrelationForecaster>> {
    if name == "baseline" {
        return Ok(Box::new(BaselineForecaster));
    }
    let bt = &ctx.config.backtest;
    let mut f = SeriesForecaster::new(name);
    for pair in pairs {
        f.insert(pair.key.clone(), load_prediction(ctx, name, bt.scheme, bt.variant, pair.file_key.as_ref())?);
    }
    Ok(Box::new(f))
}

fn format_sharpe(s: Option<f64>) -> String {
    s.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

pub fn cmd_simulate(ctx: &Context) -> Result<SimulateSummary> {
    let bt = &ctx.config.backtest;
    let all_assets = ctx.config.assets();
    let mut books: Vec<(&str, Vec<String>)> = vec![("two-asset", all_assets[..2].to_vec())];
    if all_assets.len() > 2 {
        books.push(("multi-asset", all_assets.clone()));
    }
    let mut strategies = vec!["baseline".to_string()];
    strategies.extend(bt.strategies.iter().filter(|s| *s != "baseline").cloned());

    let mut prices = BTreeMap::new();
    for t in &all_assets {
        prices.insert(t.clone(), load_prices(ctx, t)?);
    }
    let all_pairs = pairs(&ctx.config);
    let dir = ctx.layout.simulate_dir();
    let mut summary = SimulateSummary {
        sharpe_tables: Vec::new(),
        summaries: Vec::new(),
    };
    for (book, assets) in books {
        let book_pairs: Vec<PairSpec> = all_pairs
            .iter()
            .filter(|p| assets.contains(&p.tickers.0) && assets.contains(&p.tickers.1))
            .cloned()
            .collect();
        let mut config = BacktestConfig::new(assets.clone(), bt.start, bt.end);
        config.vol_span = bt.vol_span;
        config.history_months = ctx.config.predict.history_months;
        config.covid_cutoff = bt.covid_cutoff;
        config.risk_free = RiskFree::Constant(bt.risk_free);
        config.target_vol = bt.target_vol;
        config.annualization = bt.annualization;

        let mut table = format!("period,{}\n", strategies.join(","));
        let mut pre_row = vec!["pre-covid".to_string()];
        let mut post_row = vec!["post-covid".to_string()];
        for strategy in &strategies {
            let forecaster = strategy_forecaster(ctx, strategy, &book_pairs)?;
            let result = run_backtest(&config, &prices, forecaster.as_ref())?;
            let stem = format!("{book}-{strategy}");
            write_with(&dir.join(format!("{stem}-values.csv")), |w| result.write_values_csv(w))?;
            write_with(&dir.join(format!("{stem}-weights.csv")), |w| result.write_weights_csv(w))?;
            let s = summarize(&result, config.covid_cutoff)?;
            write_json(&dir.join(format!("{stem}-summary.json")), &s)?;
            let period = |label: &str| s.periods.iter().find(|p| p.period == label).and_then(|p| p.sharpe);
            pre_row.push(format_sharpe(period("pre")));
            post_row.push(format_sharpe(period("post")));
            summary.summaries.push(s);
        }
        table.push_str(&pre_row.join(","));
        table.push('\n');
        table.push_str(&post_row.join(","));
        table.push('\n');
        let path = dir.join(format!("sharpe-{book}.csv"));
        write_if_changed(&path, table.as_bytes())?;
        summary.sharpe_tables.push(path);
    }
    Ok(summary)
}

/// A grid, the file it went to and the predictors it compared.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRecord {
    pub name: String,
    pub file: PathBuf,
    pub series: Vec<String>,
    pub period: Period,
    pub grid: TestGrid,
}

pub fn cmd_test(ctx: &Context) -> Result<Vec<ExperimentRecord>> {
    let stats = &ctx.config.stats;
    let main_pair = pairs(&ctx.config).remove(0);
    let realized = load_realized(ctx, &main_pair)?;
    let dir = ctx.layout.tests_dir();
    let (train, test, full) = (stats.train(), stats.test(), stats.full());
    let mut records = Vec::new();
    for &scheme in &ctx.config.predict.schemes {
        let s = scheme.label();
        let look = load_variants(ctx, &stats.lookahead, scheme)?;
        let without = load_variants(ctx, &stats.history[0], scheme)?;
        let with = load_variants(ctx, &stats.history[1], scheme)?;
        let a = load_variants(ctx, &stats.comparison[0], scheme)?;
        let b = load_variants(ctx, &stats.comparison[1], scheme)?;

        let grid = experiment_lookahead(&look, &realized, scheme, &train, &test, &stats.ns, stats.normalization);
        records.push(ExperimentRecord {
            name: format!("lookahead-{s}"),
            file: dir.join(format!("lookahead-{s}.csv")),
            series: vec![stats.lookahead.clone()],
            period: full.clone(),
            grid,
        });
        let grid = experiment_history(&without, &with, &realized, scheme, &full, &stats.ns, stats.normalization);
        records.push(ExperimentRecord {
            name: format!("history-{s}"),
            file: dir.join(format!("history-{s}.csv")),
            series: stats.history.to_vec(),
            period: full.clone(),
            grid,
        });
        for period in [&train, &test] {
            let grid = experiment_model_comparison(&a, &b, &realized, scheme, period, &stats.ns, stats.normalization);
            records.push(ExperimentRecord {
                name: format!("comparison-{}-{s}", period.label),
                file: dir.join(format!("comparison-{}-{s}.csv", period.label)),
                series: stats.comparison.to_vec(),
                period: period.clone(),
                grid,
            });
        }
    }
    for r in &records {
        write_with(&r.file, |w| r.grid.write_csv(w))?;
        for rep in r.grid.reports.iter().filter(|rep| rep.error.is_some()) {
            warn!(
                "{} n={} {}: {}",
                r.name,
                rep.n,
                rep.variant.label(),
                rep.error.as_deref().unwrap_or_default()
            );
        }
    }
    write_json(&dir.join("archive.json"), &records)?;
    Ok(records)
}

fn render_grid_line(grid: &TestGrid) -> String {
    grid.reports
        .iter()
        .map(|r| r.p().map_or_else(|| "n/a".into(), format_p))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub error_files: Vec<(PathBuf, usize)>,
    pub value_files: Vec<PathBuf>,
}

pub fn cmd_report(ctx: &Context) -> Result<ReportSummary> {
    let stats = &ctx.config.stats;
    let archive = ctx.layout.tests_dir().join("archive.json");
    if !archive.is_file() {
        bail!("{} missing; run `corrcast test` first", archive.display());
    }
    let main_pair = pairs(&ctx.config).remove(0);
    let realized = load_realized(ctx, &main_pair)?;
    let (train, test, full) = (stats.train(), stats.test(), stats.full());
    let out_dir = ctx.layout.report_dir();
    let mut summary = ReportSummary {
        error_files: Vec::new(),
        value_files: Vec::new(),
    };

    let experiments: [(&str, Vec<String>); 3] = [
        ("lookahead", vec![stats.lookahead.clone()]),
        ("history", stats.history.to_vec()),
        ("comparison", stats.comparison.to_vec()),
    ];
    for &scheme in &ctx.config.predict.schemes {
        for (name, predictors) in &experiments {
            let mut columns: Vec<(String, CorrelationSeries)> = Vec::new();
            for p in predictors {
                for (v, series) in load_variants(ctx, p, scheme)? {
                    columns.push((format!("{p} {}", v.label()), series));
                }
            }
            let mut errors: Vec<BTreeMap<MonthKey, f64>> = Vec::new();
            for (_, series) in &columns {
                errors.push(monthly_errors(series, &realized, &full, &[]).into_iter().collect());
            }
            let mut text = format!(
                "year,month,period,{}\n",
                columns.iter().map(|(c, _)| c.as_str()).collect::<Vec<_>>().join(",")
            );
            let mut rows = 0;
            for m in MonthKey::range(full.start, full.end) {
                let period = if train.contains(m) {
                    "train"
                } else if test.contains(m) {
                    "test"
                } else {
                    ""
                };
                let cells: Vec<String> = errors
                    .iter()
                    .map(|e| e.get(&m).map_or_else(String::new, |v| format!("{v}")))
                    .collect();
                text.push_str(&format!("{},{},{period},{}\n", m.year, m.month, cells.join(",")));
                rows += 1;
            }
            let path = out_dir.join(format!("errors-{name}-{}.csv", scheme.label()));
            write_if_changed(&path, text.as_bytes())?;
            summary.error_files.push((path, rows));
        }
    }

    let sim = ctx.layout.simulate_dir();
    let mut strategies = vec!["baseline".to_string()];
    strategies.extend(ctx.config.backtest.strategies.iter().filter(|s| *s != "baseline").cloned());
    for book in ["two-asset", "multi-asset"] {
        let mut paths: Vec<(String, BTreeMap<chrono::NaiveDate, f64>)> = Vec::new();
        for s in &strategies {
            let path = sim.join(format!("{book}-{s}-values.csv"));
            if !path.is_file() {
                continue;
            }
            let values = read_values_csv(File::open(&path)?, &path)?;
            paths.push((s.clone(), values.into_iter().collect()));
        }
        if paths.is_empty() {
            continue;
        }
        let dates: std::collections::BTreeSet<chrono::NaiveDate> =
            paths.iter().flat_map(|(_, v)| v.keys().copied()).collect();
        let mut text = format!(
            "date,{}\n",
            paths.iter().map(|(s, _)| s.as_str()).collect::<Vec<_>>().join(",")
        );
        for d in dates {
            let cells: Vec<String> = paths
                .iter()
                .map(|(_, v)| v.get(&d).map_or_else(String::new, |x| format!("{x}")))
                .collect();
            text.push_str(&format!("{d},{}\n", cells.join(",")));
        }
        let path = out_dir.join(format!("values-{book}.csv"));
        write_if_changed(&path, text.as_bytes())?;
        summary.value_files.push(path);
    }
    Ok(summary)
}

/// Prints a one-line digest of a test grid for the terminal.
pub fn describe_grid(record: &ExperimentRecord) -> String {
    format!("{}: {}", record.name, render_grid_line(&record.grid))
}

pub fn display_path(p: &Path) -> String {
    p.display().to_string()
}
