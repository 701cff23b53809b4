//! Price ingestion, daily returns, EWMA volatility and bond-index
//! reconstruction by best-subset least squares.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest candidate pool for exhaustive subset enumeration.
pub const MAX_CANDIDATES: usize = 12;

/// Two out-of-sample R² values closer than this are treated as tied.
pub const R2_TIE_TOLERANCE: f64 = 1e-12;

/// Dated adjusted-close levels for one ticker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    ticker: String,
    observations: Vec<(NaiveDate, f64)>,
}

impl PriceSeries {
    /// Sorts `observations` by date and validates them.
    pub fn new(ticker: impl Into<String>, mut observations: Vec<(NaiveDate, f64)>) -> Result<Self> {
        let ticker = ticker.into();
        observations.sort_by_key(|(d, _)| *d);
        for pair in observations.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::Validation(format!(
                    "{ticker}: duplicate date {}",
                    pair[0].0
                )));
            }
        }
        if let Some((d, p)) = observations.iter().find(|(_, p)| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Validation(format!(
                "{ticker}: nonpositive price {p} on {d}"
            )));
        }
        Ok(Self {
            ticker,
            observations,
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn observations(&self) -> &[(NaiveDate, f64)] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.observations.first().map(|(d, _)| *d)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.observations.last().map(|(d, _)| *d)
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.observations
            .binary_search_by_key(&date, |(d, _)| *d)
            .ok()
            .map(|i| self.observations[i].1)
    }

    /// Observations dated on or before `cutoff`.
    pub fn truncated(&self, cutoff: NaiveDate) -> Self {
        Self {
            ticker: self.ticker.clone(),
            observations: self
                .observations
                .iter()
                .copied()
                .filter(|(d, _)| *d <= cutoff)
                .collect(),
        }
    }

    pub fn to_returns(&self) -> Result<ReturnSeries> {
        to_returns(self)
    }
}

/// Simple daily returns; each return carries the later observation's date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    ticker: String,
    observations: Vec<(NaiveDate, f64)>,
}

impl ReturnSeries {
    pub fn new(ticker: impl Into<String>, observations: Vec<(NaiveDate, f64)>) -> Result<Self> {
        let ticker = ticker.into();
        if observations.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Validation(format!(
                "{ticker}: return dates must be strictly increasing"
            )));
        }
        Ok(Self {
            ticker,
            observations,
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn observations(&self) -> &[(NaiveDate, f64)] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Returns dated strictly before `as_of`.
    pub fn before(&self, as_of: NaiveDate) -> &[(NaiveDate, f64)] {
        let end = self.observations.partition_point(|(d, _)| *d < as_of);
        &self.observations[..end]
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.observations
            .binary_search_by_key(&date, |(d, _)| *d)
            .ok()
            .map(|i| self.observations[i].1)
    }

    /// Compounds the returns forward from `start`, yielding one level per return.
    pub fn compound(&self, start: f64) -> Vec<f64> {
        let mut level = start;
        self.observations
            .iter()
            .map(|(_, r)| {
                level *= 1.0 + r;
                level
            })
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    date: String,
    close: String,
}

/// Reads a `date,close` CSV; the ticker is the file stem.
pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let ticker = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let file = std::fs::File::open(path)?;
    read_price_csv(&ticker, file, path)
}

pub fn read_price_csv(ticker: &str, reader: impl Read, path: &Path) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["date", "close"] {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `date,close`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut observations = Vec::new();
    for (i, row) in rdr.deserialize::<PriceRow>().enumerate() {
        let line = i + 2;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
            .map_err(|e| parse_err(format!("bad date {:?}: {e}", row.date)))?;
        let close: f64 = row
            .close
            .parse()
            .map_err(|e| parse_err(format!("bad close {:?}: {e}", row.close)))?;
        observations.push((date, close));
    }
    PriceSeries::new(ticker, observations)
}

pub fn write_price_csv(series: &PriceSeries, writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["date", "close"])?;
    for (d, p) in series.observations() {
        wtr.write_record([d.format("%Y-%m-%d").to_string(), format!("{p}")])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `r_t = p_t / p_{t-1} - 1`.
pub fn to_returns(prices: &PriceSeries) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: need at least 2 prices for returns, have {}",
            prices.ticker(),
            prices.len()
        )));
    }
    let observations = prices
        .observations()
        .windows(2)
        .map(|w| (w[1].0, w[1].1 / w[0].1 - 1.0))
        .collect();
    Ok(ReturnSeries {
        ticker: prices.ticker().to_string(),
        observations,
    })
}

/// Smoothing factor for a span, `2 / (span + 1)`.
pub fn ewma_alpha(span: usize) -> f64 {
    2.0 / (span as f64 + 1.0)
}

/// Exponentially weighted mean and (biased, weight-normalised) variance of
/// `values`, oldest first. The newest value has weight 1, the one before it
/// `1 - alpha`, and so on.
pub fn ewma_moments(values: &[f64], span: usize) -> (f64, f64) {
    let decay = 1.0 - ewma_alpha(span);
    let mut weight = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    // weighted West update with all previous weights decayed per step
    for &x in values {
        weight *= decay;
        m2 *= decay;
        weight += 1.0;
        let delta = x - mean;
        mean += delta / weight;
        m2 += delta * (x - mean);
    }
    if weight == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    (mean, (m2 / weight).max(0.0))
}

pub fn ewma_mean(values: &[f64], span: usize) -> f64 {
    ewma_moments(values, span).0
}

/// EWMA standard deviation of daily returns dated strictly before `as_of`.
pub fn ewma_volatility(returns: &ReturnSeries, span: usize, as_of: NaiveDate) -> Result<f64> {
    if span == 0 {
        return Err(Error::Domain("EWMA span must be positive".into()));
    }
    let history = returns.before(as_of);
    if history.len() < span {
        return Err(Error::InsufficientData(format!(
            "{}: {} returns before {as_of}, span {span} needs at least {span}",
            returns.ticker(),
            history.len()
        )));
    }
    let values: Vec<f64> = history.iter().map(|(_, r)| *r).collect();
    Ok(ewma_moments(&values, span).1.sqrt())
}

/// EWMA correlation of two return series over their common dates strictly
/// before `as_of`.
pub fn ewma_correlation(
    a: &ReturnSeries,
    b: &ReturnSeries,
    span: usize,
    as_of: NaiveDate,
) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .before(as_of)
        .iter()
        .filter_map(|(d, x)| b.get(*d).map(|y| (*x, y)))
        .unzip();
    if xs.len() < span.max(2) {
        return Err(Error::InsufficientData(format!(
            "{}/{}: {} common returns before {as_of}",
            a.ticker(),
            b.ticker(),
            xs.len()
        )));
    }
    let decay = 1.0 - ewma_alpha(span);
    let n = xs.len();
    let mut weights = vec![0.0; n];
    let mut w = 1.0;
    for i in (0..n).rev() {
        weights[i] = w;
        w *= decay;
    }
    let total: f64 = weights.iter().sum();
    let mx = xs.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>() / total;
    let my = ys.iter().zip(&weights).map(|(y, w)| y * w).sum::<f64>() / total;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxy += weights[i] * dx * dy;
        sxx += weights[i] * dx * dx;
        syy += weights[i] * dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::UndefinedCorrelation(format!(
            "{}/{}: zero EWMA variance before {as_of}",
            a.ticker(),
            b.ticker()
        )));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Inner join of several series on date.
pub fn align(series: &[&PriceSeries]) -> Vec<(NaiveDate, Vec<f64>)> {
    let Some((first, rest)) = series.split_first() else {
        return Vec::new();
    };
    first
        .observations()
        .iter()
        .filter_map(|(d, p)| {
            let mut row = Vec::with_capacity(series.len());
            row.push(*p);
            for s in rest {
                row.push(s.get(*d)?);
            }
            Some((*d, row))
        })
        .collect()
}

/// OLS fit of a target level on a subset of candidate levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    /// Selected candidate identifiers, sorted.
    pub predictors: Vec<String>,
    /// Intercept first, then one slope per predictor.
    pub coefficients: Vec<f64>,
    pub out_of_sample_r2: f64,
    pub train_end: NaiveDate,
    /// `(date, actual - predicted)` over the hold-out segment.
    pub holdout_residuals: Vec<(NaiveDate, f64)>,
}

impl RegressionModel {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.coefficients[1..]
    }

    /// Prediction for predictor values given in `self.predictors` order.
    pub fn predict(&self, values: &[f64]) -> f64 {
        self.intercept()
            + self
                .slopes()
                .iter()
                .zip(values)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

/// Score of one evaluated subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetScore {
    pub predictors: Vec<String>,
    pub out_of_sample_r2: f64,
}

struct AlignedDesign {
    names: Vec<String>,
    dates: Vec<NaiveDate>,
    /// rows × candidates
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    n_train: usize,
}

fn prepare_design(
    candidates: &BTreeMap<String, PriceSeries>,
    target: &PriceSeries,
    split_fraction: f64,
) -> Result<AlignedDesign> {
    if candidates.is_empty() {
        return Err(Error::Validation("no regression candidates".into()));
    }
    if candidates.len() > MAX_CANDIDATES {
        return Err(Error::Validation(format!(
            "{} candidates exceeds the exhaustive limit of {MAX_CANDIDATES}",
            candidates.len()
        )));
    }
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "split fraction {split_fraction} must lie in (0, 1)"
        )));
    }
    let names: Vec<String> = candidates.keys().cloned().collect();
    let mut all: Vec<&PriceSeries> = vec![target];
    all.extend(candidates.values());
    let rows = align(&all);
    if rows.is_empty() {
        return Err(Error::Alignment(format!(
            "target {} and candidates {}",
            target.ticker(),
            names.join(", ")
        )));
    }
    let n = rows.len();
    let n_train = (n as f64 * split_fraction).floor() as usize;
    if n_train < 2 || n - n_train < 2 {
        return Err(Error::InsufficientData(format!(
            "{n} overlapping dates cannot be split {split_fraction}"
        )));
    }
    let dates = rows.iter().map(|(d, _)| *d).collect();
    let y = rows.iter().map(|(_, r)| r[0]).collect();
    let x = rows.iter().map(|(_, r)| r[1..].to_vec()).collect();
    Ok(AlignedDesign {
        names,
        dates,
        x,
        y,
        n_train,
    })
}

struct SubsetFit {
    predictors: Vec<String>,
    coefficients: Vec<f64>,
    r2: f64,
    residuals: Vec<(NaiveDate, f64)>,
}

fn fit_subset(design: &AlignedDesign, columns: &[usize]) -> Option<SubsetFit> {
    let p = columns.len() + 1;
    let n_train = design.n_train;
    let label = || {
        columns
            .iter()
            .map(|&c| design.names[c].as_str())
            .collect::<Vec<_>>()
            .join("+")
    };
    if n_train < p {
        warn!("subset {{{}}} skipped: {n_train} training rows for {p} coefficients", label());
        return None;
    }
    let row = |i: usize, j: usize| if j == 0 { 1.0 } else { design.x[i][columns[j - 1]] };
    let x = DMatrix::from_fn(n_train, p, row);
    let y = DVector::from_iterator(n_train, design.y[..n_train].iter().copied());
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * f64::EPSILON * n_train.max(p) as f64) {
        warn!("subset {{{}}} skipped: singular design matrix", label());
        return None;
    }
    let beta = svd.solve(&y, 0.0).ok()?;
    let coefficients: Vec<f64> = beta.iter().copied().collect();

    let test = n_train..design.y.len();
    let mean = design.y[test.clone()].iter().sum::<f64>() / test.len() as f64;
    let mut sse = 0.0;
    let mut sst = 0.0;
    let mut residuals = Vec::with_capacity(test.len());
    for i in test {
        let pred: f64 = (0..p).map(|j| coefficients[j] * row(i, j)).sum();
        let e = design.y[i] - pred;
        sse += e * e;
        sst += (design.y[i] - mean).powi(2);
        residuals.push((design.dates[i], e));
    }
    let r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Some(SubsetFit {
        predictors: columns.iter().map(|&c| design.names[c].clone()).collect(),
        coefficients,
        r2,
        residuals,
    })
}

fn evaluate_all(design: &AlignedDesign) -> Vec<SubsetFit> {
    let k = design.names.len();
    (1u32..(1 << k))
        .into_par_iter()
        .filter_map(|mask| {
            let columns: Vec<usize> = (0..k).filter(|b| mask & (1 << b) != 0).collect();
            fit_subset(design, &columns)
        })
        .collect()
}

/// Out-of-sample R² of every non-singular subset, in mask order.
pub fn evaluate_subsets(
    candidates: &BTreeMap<String, PriceSeries>,
    target: &PriceSeries,
    split_fraction: f64,
) -> Result<Vec<SubsetScore>> {
    let design = prepare_design(candidates, target, split_fraction)?;
    Ok(evaluate_all(&design)
        .into_iter()
        .map(|f| SubsetScore {
            predictors: f.predictors,
            out_of_sample_r2: f.r2,
        })
        .collect())
}

/// Exhaustive best-subset OLS of `target` on candidate level series.
///
/// Fits on the chronologically first `split_fraction` of the overlapping
/// dates and scores R² on the remainder. Ties (within
/// [`R2_TIE_TOLERANCE`]) go to fewer predictors, then to the
/// lexicographically smaller identifier list.
pub fn best_subset_bond_regression(
    candidates: &BTreeMap<String, PriceSeries>,
    target: &PriceSeries,
    split_fraction: f64,
) -> Result<RegressionModel> {
    let design = prepare_design(candidates, target, split_fraction)?;
    let mut best: Option<SubsetFit> = None;
    for fit in evaluate_all(&design) {
        let better = match &best {
            None => true,
            Some(b) => {
                if fit.r2 > b.r2 + R2_TIE_TOLERANCE {
                    true
                } else if fit.r2 >= b.r2 - R2_TIE_TOLERANCE {
                    (fit.predictors.len(), &fit.predictors) < (b.predictors.len(), &b.predictors)
                } else {
                    false
                }
            }
        };
        if better {
            best = Some(fit);
        }
    }
    let best = best.ok_or_else(|| Error::Degenerate("every subset was singular".into()))?;
    Ok(RegressionModel {
        predictors: best.predictors,
        coefficients: best.coefficients,
        out_of_sample_r2: best.r2,
        train_end: design.dates[design.n_train - 1],
        holdout_residuals: best.residuals,
    })
}

/// Predicts target levels for candidate dates before the target's first
/// observation and splices them onto the target's own observations within
/// `range`.
pub fn backfill_prices(
    model: &RegressionModel,
    candidates: &BTreeMap<String, PriceSeries>,
    target: &PriceSeries,
    range: RangeInclusive<NaiveDate>,
) -> Result<PriceSeries> {
    let inputs: Vec<&PriceSeries> = if model.predictors.is_empty() {
        candidates.values().collect()
    } else {
        model
            .predictors
            .iter()
            .map(|name| {
                candidates
                    .get(name)
                    .ok_or_else(|| Error::Validation(format!("candidate {name} not supplied")))
            })
            .collect::<Result<_>>()?
    };
    let target_start = target.first_date();
    let in_backfill = |d: &NaiveDate| range.contains(d) && target_start.is_none_or(|t| *d < t);
    let dates: BTreeSet<NaiveDate> = inputs
        .iter()
        .flat_map(|s| s.observations().iter().map(|(d, _)| *d))
        .filter(in_backfill)
        .collect();

    let mut gaps = Vec::new();
    let mut observations = Vec::with_capacity(dates.len() + target.len());
    for d in dates {
        let values: Option<Vec<f64>> = inputs.iter().map(|s| s.get(d)).collect();
        match values {
            Some(v) if gaps.is_empty() => {
                let level = if model.predictors.is_empty() {
                    model.intercept()
                } else {
                    model.predict(&v)
                };
                observations.push((d, level));
            }
            Some(_) => {}
            None => gaps.push(d.to_string()),
        }
    }
    if !gaps.is_empty() {
        return Err(Error::Gap(gaps));
    }
    observations.extend(
        target
            .observations()
            .iter()
            .copied()
            .filter(|(d, _)| range.contains(d)),
    );
    PriceSeries::new(target.ticker(), observations)
}
