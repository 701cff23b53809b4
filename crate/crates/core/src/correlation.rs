//! Realized monthly correlations, class coding and strength scaling.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::market_data::ReturnSeries;
use crate::{Error, Result};

/// Minimum overlapping daily returns for a realized monthly correlation.
pub const MIN_DAYS_PER_MONTH: usize = 3;

/// Calendar month; serialized as `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MonthKey {
    pub year: i32,
    pub month: u32,
}

impl MonthKey {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Domain(format!("month {month} outside 1..=12")));
        }
        Ok(Self { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month key")
    }

    pub fn contains(self, date: NaiveDate) -> bool {
        Self::of(date) == self
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            Self { year: self.year + 1, month: 1 }
        } else {
            Self { year: self.year, month: self.month + 1 }
        }
    }

    pub fn prev(self) -> Self {
        if self.month == 1 {
            Self { year: self.year - 1, month: 12 }
        } else {
            Self { year: self.year, month: self.month - 1 }
        }
    }

    /// Every month from `start` to `end`, inclusive.
    pub fn range(start: Self, end: Self) -> impl Iterator<Item = Self> {
        std::iter::successors(Some(start), |m| Some(m.next())).take_while(move |m| *m <= end)
    }
}

impl fmt::Display for MonthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::Domain(format!("month {s:?} is not YYYY-MM")))?;
        let year = y
            .parse()
            .map_err(|_| Error::Domain(format!("bad year in {s:?}")))?;
        let month = m
            .parse()
            .map_err(|_| Error::Domain(format!("bad month in {s:?}")))?;
        Self::new(year, month)
    }
}

impl TryFrom<String> for MonthKey {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MonthKey> for String {
    fn from(m: MonthKey) -> String {
        m.to_string()
    }
}

/// Discretisation of a correlation into classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "&'static str")]
pub enum CodingScheme {
    /// Classes 0, 1, 2 for negative, zero, positive.
    ThreeLevel,
    /// Classes 0..=10 on a uniform grid over [-1, 1].
    ElevenBin,
}

impl CodingScheme {
    pub const ALL: [CodingScheme; 2] = [CodingScheme::ThreeLevel, CodingScheme::ElevenBin];

    pub fn class_count(self) -> usize {
        match self {
            CodingScheme::ThreeLevel => 3,
            CodingScheme::ElevenBin => 11,
        }
    }

    /// Short label used in file names and reports.
    pub fn label(self) -> &'static str {
        match self {
            CodingScheme::ThreeLevel => "original",
            CodingScheme::ElevenBin => "bins",
        }
    }
}

impl FromStr for CodingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" | "three-level" => Ok(CodingScheme::ThreeLevel),
            "bins" | "eleven-bin" => Ok(CodingScheme::ElevenBin),
            _ => Err(Error::Domain(format!("unknown coding scheme {s:?}"))),
        }
    }
}

impl TryFrom<String> for CodingScheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CodingScheme> for &'static str {
    fn from(s: CodingScheme) -> &'static str {
        s.label()
    }
}

/// How a class probability modulates the class correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `c`
    V1,
    /// `p * c`
    V2,
    /// `(2p - 1) * c`
    V3,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::V1, Variant::V2, Variant::V3];

    pub fn label(self) -> &'static str {
        match self {
            Variant::V1 => "v1",
            Variant::V2 => "v2",
            Variant::V3 => "v3",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v1" => Ok(Variant::V1),
            "v2" => Ok(Variant::V2),
            "v3" => Ok(Variant::V3),
            _ => Err(Error::Domain(format!("unknown variant {s:?}"))),
        }
    }
}

/// Per-month correlation values from one source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub source: String,
    values: BTreeMap<MonthKey, f64>,
}

impl CorrelationSeries {
    pub fn new(source: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            values: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, month: MonthKey, value: f64) -> Result<()> {
        if !(-1.0..=1.0).contains(&value) {
            return Err(Error::Domain(format!(
                "{}: correlation {value} for {month} outside [-1, 1]",
                self.source
            )));
        }
        self.values.insert(month, value);
        Ok(())
    }

    pub fn get(&self, month: MonthKey) -> Option<f64> {
        self.values.get(&month).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (MonthKey, f64)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }

    /// Values for months strictly before `month`, oldest first.
    pub fn before(&self, month: MonthKey) -> Vec<f64> {
        self.values.range(..month).map(|(_, v)| *v).collect()
    }

    /// The last `count` values strictly before `month`, oldest first.
    pub fn last_before(&self, month: MonthKey, count: usize) -> Vec<f64> {
        let mut tail: Vec<f64> = self
            .values
            .range(..month)
            .rev()
            .take(count)
            .map(|(_, v)| *v)
            .collect();
        tail.reverse();
        tail
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["year", "month", "value"])?;
        for (k, v) in &self.values {
            wtr.write_record([k.year.to_string(), k.month.to_string(), format!("{v}")])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(source: &str, reader: impl Read, path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut series = Self::new(source);
        for (i, row) in rdr.deserialize::<(i32, u32, f64)>().enumerate() {
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message,
            };
            let (year, month, value) = row.map_err(|e| parse_err(e.to_string()))?;
            let key = MonthKey::new(year, month).map_err(|e| parse_err(e.to_string()))?;
            series
                .insert(key, value)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(series)
    }

    /// Loads `<source>.csv`; the source label is the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        Self::read_csv(&source, std::fs::File::open(path)?, path)
    }
}

impl FromIterator<(MonthKey, f64)> for CorrelationSeries {
    /// Values are clamped to [-1, 1].
    fn from_iter<T: IntoIterator<Item = (MonthKey, f64)>>(iter: T) -> Self {
        Self {
            source: String::new(),
            values: iter
                .into_iter()
                .map(|(k, v)| (k, v.clamp(-1.0, 1.0)))
                .collect(),
        }
    }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of the two legs' daily returns inside `month`.
pub fn realized_monthly_correlation(
    stock: &ReturnSeries,
    bond: &ReturnSeries,
    month: MonthKey,
) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = stock
        .observations()
        .iter()
        .filter(|(d, _)| month.contains(*d))
        .filter_map(|(d, x)| bond.get(*d).map(|y| (*x, y)))
        .unzip();
    if xs.len() < MIN_DAYS_PER_MONTH {
        return Err(Error::InsufficientData(format!(
            "{}/{} {month}: {} overlapping days",
            stock.ticker(),
            bond.ticker(),
            xs.len()
        )));
    }
    pearson(&xs, &ys).map_err(|_| {
        Error::UndefinedCorrelation(format!(
            "{}/{} {month}: zero variance in a leg",
            stock.ticker(),
            bond.ticker()
        ))
    })
}

/// Realized correlations for every month covered by both series; months
/// that cannot be computed are left out.
pub fn realized_correlations(stock: &ReturnSeries, bond: &ReturnSeries) -> CorrelationSeries {
    let mut months: Vec<MonthKey> = stock
        .observations()
        .iter()
        .map(|(d, _)| MonthKey::of(*d))
        .collect();
    months.dedup();
    let mut series = CorrelationSeries::new("realized");
    for m in months {
        match realized_monthly_correlation(stock, bond, m) {
            Ok(v) => series.insert(m, v).expect("pearson is clamped"),
            Err(e) => log::debug!("skipping realized correlation: {e}"),
        }
    }
    series
}

pub fn class_to_correlation(class: usize, scheme: CodingScheme) -> Result<f64> {
    let count = scheme.class_count();
    if class >= count {
        return Err(Error::Domain(format!(
            "class {class} outside 0..{count} for {} scheme",
            scheme.label()
        )));
    }
    let half = (count - 1) as f64 / 2.0;
    Ok((class as f64 - half) / half)
}

/// Nearest class on the scheme's grid; exact midpoints go to the class
/// whose correlation is closer to zero.
pub fn round_to_class(rho: f64, scheme: CodingScheme) -> usize {
    let half = (scheme.class_count() - 1) / 2;
    let scaled = rho.clamp(-1.0, 1.0) * half as f64;
    let magnitude = scaled.abs();
    let mut steps = magnitude.round();
    if magnitude - magnitude.floor() == 0.5 {
        steps = magnitude.floor();
    }
    let steps = steps as usize;
    if scaled < 0.0 {
        half - steps
    } else {
        half + steps
    }
}

pub fn strength_scaled(c: f64, p: f64, variant: Variant) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(match variant {
        Variant::V1 => c,
        Variant::V2 => p * c,
        Variant::V3 => (2.0 * p - 1.0) * c,
    })
}

/// Arithmetic mean clamped to [-1, 1].
pub fn aggregate_month(per_article: &[f64]) -> Result<f64> {
    if per_article.is_empty() {
        return Err(Error::InsufficientData("no article values to aggregate".into()));
    }
    let mean = per_article.iter().sum::<f64>() / per_article.len() as f64;
    Ok(mean.clamp(-1.0, 1.0))
}
