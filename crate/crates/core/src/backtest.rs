//! Monthly rebalanced minimum-variance backtests.
//!
//! On the first trading day of each month the engine estimates EWMA
//! volatilities from returns strictly before that day, asks a forecaster for
//! every asset pair's correlation, solves for minimum-variance weights,
//! applies volatility targeting and holds the weights until the next month.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::correlation::{realized_correlations, CorrelationSeries, MonthKey};
use crate::market_data::{ewma_correlation, ewma_volatility, PriceSeries, ReturnSeries};
use crate::portfolio::{assemble_covariance, n_asset_weights, scale_weights, PairKey};
use crate::{Error, Result};

/// Return standard deviations at or below this make the Sharpe ratio undefined.
pub const SHARPE_STD_FLOOR: f64 = 1e-12;

/// Daily risk-free rate for the cash leg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RiskFree {
    Constant(f64),
    /// Daily rates by date; each day uses the latest rate on or before it,
    /// or zero before the first entry.
    Series(BTreeMap<NaiveDate, f64>),
}

impl Default for RiskFree {
    fn default() -> Self {
        RiskFree::Constant(0.0)
    }
}

impl RiskFree {
    pub fn rate(&self, date: NaiveDate) -> f64 {
        match self {
            RiskFree::Constant(r) => *r,
            RiskFree::Series(map) => map.range(..=date).next_back().map_or(0.0, |(_, r)| *r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub assets: Vec<String>,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// EWMA span in trading days for volatilities and the baseline correlation.
    pub vol_span: usize,
    /// Realized months handed to the forecaster as history.
    pub history_months: usize,
    pub covid_cutoff: NaiveDate,
    pub risk_free: RiskFree,
    /// Annualized volatility target; `None` disables scaling.
    pub target_vol: Option<f64>,
    pub annualization: f64,
}

impl BacktestConfig {
    pub fn new(assets: Vec<String>, start: NaiveDate, end: NaiveDate) -> Self {
        Self {
            assets,
            start,
            end,
            vol_span: 60,
            history_months: 3,
            covid_cutoff: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            risk_free: RiskFree::default(),
            target_vol: Some(0.10),
            annualization: 252.0,
        }
    }
}

/// What a forecaster may see when asked for one pair in one month.
#[derive(Debug, Clone, Copy)]
pub struct ForecastContext<'a> {
    pub pair: &'a PairKey,
    pub month: MonthKey,
    pub rebalance_day: NaiveDate,
    /// Realized monthly correlations of the pair before `month`, oldest first.
    pub history: &'a [f64],
    /// EWMA correlation of daily returns before `rebalance_day`, if defined.
    pub baseline: Option<f64>,
}

pub trait CorrelationForecaster: Send + Sync {
    fn name(&self) -> &str;

    /// `None` means no prediction; the engine then uses the baseline, or 0
    /// when the baseline is undefined too.
    fn forecast(&self, ctx: &ForecastContext<'_>) -> Option<f64>;
}

/// EWMA correlation of daily returns.
#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineForecaster;

impl CorrelationForecaster for BaselineForecaster {
    fn name(&self) -> &str {
        "baseline"
    }

    fn forecast(&self, ctx: &ForecastContext<'_>) -> Option<f64> {
        ctx.baseline
    }
}

/// Looks predictions up in precomputed monthly series, one per pair.
#[derive(Debug, Clone, Default)]
pub struct SeriesForecaster {
    name: String,
    series: BTreeMap<PairKey, CorrelationSeries>,
}

impl SeriesForecaster {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            series: BTreeMap::new(),
        }
    }

    pub fn with_pair(mut self, pair: PairKey, series: CorrelationSeries) -> Self {
        self.series.insert(pair, series);
        self
    }

    pub fn insert(&mut self, pair: PairKey, series: CorrelationSeries) {
        self.series.insert(pair, series);
    }
}

impl CorrelationForecaster for SeriesForecaster {
    fn name(&self) -> &str {
        &self.name
    }

    fn forecast(&self, ctx: &ForecastContext<'_>) -> Option<f64> {
        self.series.get(ctx.pair)?.get(ctx.month)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub month: MonthKey,
    pub rebalance_day: NaiveDate,
    pub weights: Vec<f64>,
    pub cash: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub strategy: String,
    pub assets: Vec<String>,
    /// Portfolio value by trading day, starting at 1.0.
    pub values: Vec<(NaiveDate, f64)>,
    /// Daily risk-free rate applied on each day; the first entry is unused.
    pub risk_free: Vec<f64>,
    pub weights: Vec<WeightRecord>,
    /// Pair and month where the forecaster gave nothing and the baseline was used.
    pub fallbacks: Vec<(MonthKey, String)>,
    pub annualization: f64,
}

impl BacktestResult {
    pub fn start(&self) -> NaiveDate {
        self.values[0].0
    }

    pub fn end(&self) -> NaiveDate {
        self.values[self.values.len() - 1].0
    }

    pub fn pnl(&self) -> f64 {
        self.values[self.values.len() - 1].1 / self.values[0].1 - 1.0
    }

    pub fn sharpe(&self) -> Result<f64> {
        let values: Vec<f64> = self.values.iter().map(|(_, v)| *v).collect();
        sharpe_ratio(&values, &self.risk_free[1..], self.annualization)
    }

    /// The weight record in force on `date`.
    pub fn weights_on(&self, date: NaiveDate) -> Option<&WeightRecord> {
        self.weights.iter().rev().find(|w| w.rebalance_day <= date)
    }

    pub fn write_values_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["date", "value"])?;
        for (d, v) in &self.values {
            wtr.write_record([d.to_string(), format!("{v}")])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_weights_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["year", "month", "asset", "weight"])?;
        for rec in &self.weights {
            let rows = self
                .assets
                .iter()
                .map(String::as_str)
                .zip(rec.weights.iter().copied())
                .chain(std::iter::once(("cash", rec.cash)));
            for (asset, w) in rows {
                wtr.write_record([
                    rec.month.year.to_string(),
                    rec.month.month.to_string(),
                    asset.to_string(),
                    format!("{w}"),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Reads a `date,value` path written by [`BacktestResult::write_values_csv`].
pub fn read_values_csv(reader: impl Read, path: &Path) -> Result<Vec<(NaiveDate, f64)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<(String, f64)>().enumerate() {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message,
        };
        let (date, value) = row.map_err(|e| parse_err(e.to_string()))?;
        let date = date
            .parse::<NaiveDate>()
            .map_err(|e| parse_err(format!("bad date {date:?}: {e}")))?;
        out.push((date, value));
    }
    Ok(out)
}

struct Aligned {
    dates: Vec<NaiveDate>,
    /// `returns[i][t]` is asset i's return on `dates[t]`.
    returns: Vec<Vec<f64>>,
    series: Vec<ReturnSeries>,
}

fn align_returns(config: &BacktestConfig, prices: &BTreeMap<String, PriceSeries>) -> Result<Aligned> {
    let mut per_asset = Vec::with_capacity(config.assets.len());
    for asset in &config.assets {
        let p = prices
            .get(asset)
            .ok_or_else(|| Error::Validation(format!("no prices for asset {asset}")))?;
        per_asset.push(p.to_returns()?);
    }
    let mut common: BTreeSet<NaiveDate> = per_asset
        .first()
        .map(|r| r.observations().iter().map(|(d, _)| *d).collect())
        .unwrap_or_default();
    for r in &per_asset[1..] {
        let dates: BTreeSet<NaiveDate> = r.observations().iter().map(|(d, _)| *d).collect();
        common = common.intersection(&dates).copied().collect();
    }
    if common.is_empty() {
        return Err(Error::Alignment(config.assets.join(", ")));
    }
    let dates: Vec<NaiveDate> = common.into_iter().collect();
    let mut returns = Vec::with_capacity(per_asset.len());
    let mut series = Vec::with_capacity(per_asset.len());
    for r in &per_asset {
        let obs: Vec<(NaiveDate, f64)> = dates
            .iter()
            .map(|d| (*d, r.get(*d).expect("date in intersection")))
            .collect();
        returns.push(obs.iter().map(|(_, x)| *x).collect());
        series.push(ReturnSeries::new(r.ticker(), obs)?);
    }
    Ok(Aligned {
        dates,
        returns,
        series,
    })
}

/// Runs the backtest over the common trading days in `[start, end]`.
pub fn run_backtest(
    config: &BacktestConfig,
    prices: &BTreeMap<String, PriceSeries>,
    forecaster: &dyn CorrelationForecaster,
) -> Result<BacktestResult> {
    if config.assets.is_empty() {
        return Err(Error::Validation("backtest needs at least one asset".into()));
    }
    if config.start >= config.end {
        return Err(Error::Validation(format!(
            "start {} is not before end {}",
            config.start, config.end
        )));
    }
    let aligned = align_returns(config, prices)?;
    let first = aligned.dates.partition_point(|d| *d < config.start);
    let last = aligned.dates.partition_point(|d| *d <= config.end);
    if last < first + 2 {
        return Err(Error::InsufficientData(format!(
            "fewer than two common trading days in {}..={}",
            config.start, config.end
        )));
    }
    let n = config.assets.len();
    let pairs: Vec<(usize, usize, PairKey)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, PairKey::new(config.assets[i].as_str(), config.assets[j].as_str())))
        .collect();
    let realized: Vec<CorrelationSeries> = pairs
        .iter()
        .map(|(i, j, _)| realized_correlations(&aligned.series[*i], &aligned.series[*j]))
        .collect();

    let mut result = BacktestResult {
        strategy: forecaster.name().to_string(),
        assets: config.assets.clone(),
        values: vec![(aligned.dates[first], 1.0)],
        risk_free: vec![0.0],
        weights: Vec::new(),
        fallbacks: Vec::new(),
        annualization: config.annualization,
    };
    let mut value = 1.0;
    for t in (first + 1)..last {
        let day = aligned.dates[t];
        let month = MonthKey::of(day);
        let needs_rebalance = result
            .weights
            .last()
            .is_none_or(|w| MonthKey::of(w.rebalance_day) != month);
        if needs_rebalance {
            let record = rebalance(config, &aligned, &pairs, &realized, forecaster, day, &mut result.fallbacks)?;
            result.weights.push(record);
        }
        let current = result.weights.last().expect("rebalanced above");
        let rf = config.risk_free.rate(day);
        let growth: f64 = current
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * aligned.returns[i][t])
            .sum::<f64>()
            + current.cash * rf;
        value *= 1.0 + growth;
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::Degenerate(format!(
                "portfolio value {value} on {day} (daily return {growth}, weights {:?}, cash {})",
                current.weights, current.cash
            )));
        }
        result.values.push((day, value));
        result.risk_free.push(rf);
    }
    info!(
        "{}: {} days, {} rebalances, {} baseline fallbacks",
        result.strategy,
        result.values.len(),
        result.weights.len(),
        result.fallbacks.len()
    );
    Ok(result)
}

fn rebalance(
    config: &BacktestConfig,
    aligned: &Aligned,
    pairs: &[(usize, usize, PairKey)],
    realized: &[CorrelationSeries],
    forecaster: &dyn CorrelationForecaster,
    day: NaiveDate,
    fallbacks: &mut Vec<(MonthKey, String)>,
) -> Result<WeightRecord> {
    let month = MonthKey::of(day);
    let vols = aligned
        .series
        .iter()
        .map(|r| ewma_volatility(r, config.vol_span, day))
        .collect::<Result<Vec<f64>>>()?;
    let mut correlations = BTreeMap::new();
    for ((i, j, pair), history) in pairs.iter().zip(realized) {
        let history = history.last_before(month, config.history_months);
        let baseline = ewma_correlation(&aligned.series[*i], &aligned.series[*j], config.vol_span, day).ok();
        let ctx = ForecastContext {
            pair,
            month,
            rebalance_day: day,
            history: &history,
            baseline,
        };
        let rho = match forecaster.forecast(&ctx) {
            Some(rho) => rho,
            None => {
                let rho = baseline.unwrap_or_else(|| {
                    warn!("{pair} {month}: baseline correlation undefined, using 0");
                    0.0
                });
                if forecaster.name() != BaselineForecaster.name() {
                    warn!("{}: no forecast for {pair} in {month}, using baseline {rho:.4}", forecaster.name());
                    fallbacks.push((month, pair.to_string()));
                }
                rho
            }
        };
        correlations.insert(pair.clone(), rho.clamp(-1.0, 1.0));
    }
    let cov = assemble_covariance(&config.assets, &vols, &correlations)?;
    let raw = n_asset_weights(&cov)?;
    let (weights, cash) = match config.target_vol {
        Some(target) => {
            let daily = cov.variance_of(&raw.weights).max(0.0).sqrt();
            scale_weights(&raw.weights, target, daily * config.annualization.sqrt())?
        }
        None => {
            let cash = 1.0 - raw.weights.iter().sum::<f64>();
            (raw.weights, cash)
        }
    };
    Ok(WeightRecord {
        month,
        rebalance_day: day,
        weights,
        cash,
    })
}

/// Annualized Sharpe ratio of a value path: mean daily excess return over
/// the sample standard deviation of daily returns, times `√annualization`.
/// `risk_free` holds one daily rate per return.
pub fn sharpe_ratio(values: &[f64], risk_free: &[f64], annualization: f64) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::UndefinedSharpe(format!("{} values, need at least 2", values.len())));
    }
    if risk_free.len() != values.len() - 1 {
        return Err(Error::Validation(format!(
            "{} risk-free rates for {} returns",
            risk_free.len(),
            values.len() - 1
        )));
    }
    let returns: Vec<f64> = values.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let n = returns.len() as f64;
    if returns.len() < 2 {
        return Err(Error::UndefinedSharpe("one return has no standard deviation".into()));
    }
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    if std <= SHARPE_STD_FLOOR {
        return Err(Error::UndefinedSharpe(format!("return standard deviation {std:e}")));
    }
    let excess = returns.iter().zip(risk_free).map(|(r, f)| r - f).sum::<f64>() / n;
    Ok(excess / std * annualization.sqrt())
}

/// Splits at the last trading day on or before `cutoff`; that day ends the
/// first period and starts the second. Both halves are rebased to 1.0.
pub fn split_periods(result: &BacktestResult, cutoff: NaiveDate) -> Result<(BacktestResult, BacktestResult)> {
    let (start, end) = (result.start(), result.end());
    if cutoff <= start || cutoff >= end {
        return Err(Error::Domain(format!("cutoff {cutoff} outside backtest range {start}..{end}")));
    }
    let b = result.values.partition_point(|(d, _)| *d <= cutoff) - 1;
    if b == 0 || b + 1 == result.values.len() {
        return Err(Error::Domain(format!("cutoff {cutoff} leaves an empty period")));
    }
    let boundary = result.values[b].0;
    let pre_weights: Vec<WeightRecord> = result
        .weights
        .iter()
        .filter(|w| w.rebalance_day <= boundary)
        .cloned()
        .collect();
    let mut post_weights: Vec<WeightRecord> = pre_weights.last().cloned().into_iter().collect();
    post_weights.extend(result.weights.iter().filter(|w| w.rebalance_day > boundary).cloned());
    let slice = |range: std::ops::RangeInclusive<usize>, weights: Vec<WeightRecord>| {
        let base = result.values[*range.start()].1;
        let mut risk_free = result.risk_free[range.clone()].to_vec();
        risk_free[0] = 0.0;
        BacktestResult {
            strategy: result.strategy.clone(),
            assets: result.assets.clone(),
            values: result.values[range.clone()].iter().map(|(d, v)| (*d, v / base)).collect(),
            risk_free,
            fallbacks: result
                .fallbacks
                .iter()
                .filter(|(m, _)| weights.iter().any(|w| w.month == *m))
                .cloned()
                .collect(),
            weights,
            annualization: result.annualization,
        }
    };
    Ok((
        slice(0..=b, pre_weights),
        slice(b..=result.values.len() - 1, post_weights),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSummary {
    pub period: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub pnl: f64,
    pub sharpe: Option<f64>,
    pub sharpe_error: Option<String>,
}

impl PeriodSummary {
    pub fn of(period: &str, result: &BacktestResult) -> Self {
        let (sharpe, sharpe_error) = match result.sharpe() {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            period: period.to_string(),
            start: result.start(),
            end: result.end(),
            pnl: result.pnl(),
            sharpe,
            sharpe_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub strategy: String,
    pub periods: Vec<PeriodSummary>,
    pub fallbacks: usize,
}

/// Full-range, pre-cutoff and post-cutoff PnL and Sharpe.
pub fn summarize(result: &BacktestResult, cutoff: NaiveDate) -> Result<BacktestSummary> {
    let (pre, post) = split_periods(result, cutoff)?;
    Ok(BacktestSummary {
        strategy: result.strategy.clone(),
        periods: vec![
            PeriodSummary::of("full", result),
            PeriodSummary::of("pre", &pre),
            PeriodSummary::of("post", &post),
        ],
        fallbacks: result.fallbacks.len(),
    })
}
