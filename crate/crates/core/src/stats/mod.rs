//! RMSE windows and one-sided two-sample t-tests.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{CodingScheme, CorrelationSeries, MonthKey, Variant};
use crate::{Error, Result};

mod tdist;

pub use tdist::{ln_gamma, regularized_beta, student_t_cdf};

/// Window lengths of the experiment grids.
pub const WINDOW_LENGTHS: [usize; 4] = [1, 3, 6, 12];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RmseNormalization {
    /// `sqrt(mean(e²))`.
    #[default]
    Mean,
    /// `sqrt(sum(e²))`.
    Sum,
}

impl std::str::FromStr for RmseNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            _ => Err(Error::Domain(format!("unknown RMSE normalization {s:?}"))),
        }
    }
}

/// Inclusive month range with a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub label: String,
    pub start: MonthKey,
    pub end: MonthKey,
}

impl Period {
    pub fn new(label: impl Into<String>, start: MonthKey, end: MonthKey) -> Self {
        Self {
            label: label.into(),
            start,
            end,
        }
    }

    /// 1980-01 through 2021-09.
    pub fn train() -> Self {
        Self::new("train", MonthKey { year: 1980, month: 1 }, MonthKey { year: 2021, month: 9 })
    }

    /// 2021-10 through 2024-06.
    pub fn test() -> Self {
        Self::new("test", MonthKey { year: 2021, month: 10 }, MonthKey { year: 2024, month: 6 })
    }

    pub fn contains(&self, month: MonthKey) -> bool {
        self.start <= month && month <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorWindows {
    pub n: usize,
    pub period: String,
    /// Months of each window, oldest first.
    pub months: Vec<Vec<MonthKey>>,
    pub values: Vec<f64>,
}

/// Signed monthly errors `predicted - realized` inside `period`, keeping only
/// months where `predicted`, `realized` and every series in `also` have a
/// value.
pub fn monthly_errors(
    predicted: &CorrelationSeries,
    realized: &CorrelationSeries,
    period: &Period,
    also: &[&CorrelationSeries],
) -> Vec<(MonthKey, f64)> {
    predicted
        .iter()
        .filter(|(m, _)| period.contains(*m))
        .filter(|(m, _)| also.iter().all(|s| s.get(*m).is_some()))
        .filter_map(|(m, p)| realized.get(m).map(|r| (m, p - r)))
        .collect()
}

fn windows_from_errors(
    errors: &[(MonthKey, f64)],
    n: usize,
    period: &Period,
    normalization: RmseNormalization,
) -> Result<ErrorWindows> {
    if n == 0 {
        return Err(Error::Domain("window length must be positive".into()));
    }
    if errors.len() < n {
        return Err(Error::InsufficientData(format!(
            "{}: {} usable months, window length {n}",
            period.label,
            errors.len()
        )));
    }
    let mut months = Vec::new();
    let mut values = Vec::new();
    for chunk in errors.chunks_exact(n) {
        let sq: f64 = chunk.iter().map(|(_, e)| e * e).sum();
        let v = match normalization {
            RmseNormalization::Mean => sq / n as f64,
            RmseNormalization::Sum => sq,
        };
        months.push(chunk.iter().map(|(m, _)| *m).collect());
        values.push(v.sqrt());
    }
    Ok(ErrorWindows {
        n,
        period: period.label.clone(),
        months,
        values,
    })
}

/// Non-overlapping windows of `n` usable months; a trailing partial window
/// is dropped.
pub fn rmse_windows(
    predicted: &CorrelationSeries,
    realized: &CorrelationSeries,
    n: usize,
    period: &Period,
    normalization: RmseNormalization,
) -> Result<ErrorWindows> {
    windows_from_errors(&monthly_errors(predicted, realized, period, &[]), n, period, normalization)
}

/// Windows for two predictors over the same months: a month missing from
/// either is dropped from both.
pub fn paired_rmse_windows(
    a: &CorrelationSeries,
    b: &CorrelationSeries,
    realized: &CorrelationSeries,
    n: usize,
    period: &Period,
    normalization: RmseNormalization,
) -> Result<(ErrorWindows, ErrorWindows)> {
    let ea = monthly_errors(a, realized, period, &[b]);
    let eb = monthly_errors(b, realized, period, &[a]);
    debug_assert_eq!(ea.len(), eb.len());
    Ok((
        windows_from_errors(&ea, n, period, normalization)?,
        windows_from_errors(&eb, n, period, normalization)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    /// Mean of `a` below mean of `b`.
    Less,
    /// Mean of `a` above mean of `b`.
    Greater,
}

impl Alternative {
    pub fn flipped(self) -> Self {
        match self {
            Self::Less => Self::Greater,
            Self::Greater => Self::Less,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub n_a: usize,
    pub n_b: usize,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn check_sample(name: &str, xs: &[f64]) -> Result<(f64, f64)> {
    let degenerate = |reason: String| Error::DegenerateSample {
        sample: name.to_string(),
        reason,
    };
    if xs.len() < 2 {
        return Err(degenerate(format!("{} value(s), need at least 2", xs.len())));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(degenerate("non-finite value".into()));
    }
    let (mean, var) = mean_var(xs);
    if !(var > 0.0) {
        return Err(degenerate("zero variance".into()));
    }
    Ok((mean, var))
}

/// Welch's unequal-variance t-test.
pub fn one_sided_t_test(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TTest> {
    t_test(a, b, alternative, false)
}

/// One-sided two-sample t-test; `pooled` selects the equal-variance form.
pub fn t_test(a: &[f64], b: &[f64], alternative: Alternative, pooled: bool) -> Result<TTest> {
    let (ma, va) = check_sample("a", a)?;
    let (mb, vb) = check_sample("b", b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (se2, df) = if pooled {
        let df = na + nb - 2.0;
        let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
        (sp2 * (1.0 / na + 1.0 / nb), df)
    } else {
        let (qa, qb) = (va / na, vb / nb);
        let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
        (qa + qb, df)
    };
    let t = (ma - mb) / se2.sqrt();
    let p = match alternative {
        Alternative::Less => student_t_cdf(t, df),
        Alternative::Greater => student_t_cdf(-t, df),
    };
    Ok(TTest {
        t,
        df,
        p,
        n_a: a.len(),
        n_b: b.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub hypothesis: String,
    pub period: String,
    pub n: usize,
    pub variant: Variant,
    pub scheme: CodingScheme,
    pub alternative: Alternative,
    /// `None` when the test could not run; see `error`.
    pub result: Option<TTest>,
    pub error: Option<String>,
}

impl TestReport {
    pub fn p(&self) -> Option<f64> {
        self.result.map(|r| r.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestGrid {
    pub hypothesis: String,
    pub period: String,
    pub scheme: CodingScheme,
    /// Row-major: every variant for the first `n`, then the next `n`.
    pub reports: Vec<TestReport>,
}

/// Table formatting of a p-value.
pub fn format_p(p: f64) -> String {
    if p >= 0.001 {
        format!("{p:.3}")
    } else {
        format!("{p:.2e}")
    }
}

impl TestGrid {
    pub fn ns(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = self.reports.iter().map(|r| r.n).collect();
        ns.dedup();
        ns
    }

    pub fn get(&self, n: usize, variant: Variant) -> Option<&TestReport> {
        self.reports.iter().find(|r| r.n == n && r.variant == variant)
    }

    /// Rows `n`, columns v1..v3; failed cells read `n/a`.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["n", "p-value (v1)", "p-value (v2)", "p-value (v3)"])?;
        for n in self.ns() {
            let mut row = vec![n.to_string()];
            for v in Variant::ALL {
                row.push(
                    self.get(n, v)
                        .and_then(TestReport::p)
                        .map_or_else(|| "n/a".to_string(), format_p),
                );
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// One cell of an experiment grid: the two samples to compare.
type CellSamples = Result<(Vec<f64>, Vec<f64>)>;

struct GridSpec<'a> {
    hypothesis: &'a str,
    period: String,
    scheme: CodingScheme,
    alternative: Alternative,
    ns: &'a [usize],
    normalization: RmseNormalization,
}

fn run_grid<F>(spec: GridSpec<'_>, variants: &[Variant], samples: F) -> TestGrid
where
    F: Fn(Variant, usize) -> CellSamples + Sync,
{
    let cells: Vec<(usize, Variant)> = spec
        .ns
        .iter()
        .flat_map(|&n| variants.iter().map(move |&v| (n, v)))
        .collect();
    let reports = cells
        .par_iter()
        .map(|&(n, variant)| {
            let outcome = samples(variant, n).and_then(|(a, b)| one_sided_t_test(&a, &b, spec.alternative));
            let (result, error) = match outcome {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            TestReport {
                hypothesis: spec.hypothesis.to_string(),
                period: spec.period.clone(),
                n,
                variant,
                scheme: spec.scheme,
                alternative: spec.alternative,
                result,
                error,
            }
        })
        .collect();
    TestGrid {
        hypothesis: spec.hypothesis.to_string(),
        period: spec.period,
        scheme: spec.scheme,
        reports,
    }
}

/// Predicted series for each variant of one predictor and scheme.
pub type VariantSeries = BTreeMap<Variant, CorrelationSeries>;

fn variant_series(set: &VariantSeries, v: Variant) -> Result<&CorrelationSeries> {
    set.get(&v)
        .ok_or_else(|| Error::InsufficientData(format!("no {} series", v.label())))
}

/// Tests `e_train < e_test`: a predictor that saw the training period does
/// better there than on later data.
pub fn experiment_lookahead(
    series: &VariantSeries,
    realized: &CorrelationSeries,
    scheme: CodingScheme,
    train: &Period,
    test: &Period,
    ns: &[usize],
    normalization: RmseNormalization,
) -> TestGrid {
    let spec = GridSpec {
        hypothesis: "lookahead",
        period: format!("{}/{}", train.label, test.label),
        scheme,
        alternative: Alternative::Less,
        ns,
        normalization,
    };
    let norm = spec.normalization;
    run_grid(spec, &Variant::ALL, |v, n| {
        let s = variant_series(series, v)?;
        let a = rmse_windows(s, realized, n, train, norm)?;
        let b = rmse_windows(s, realized, n, test, norm)?;
        Ok((a.values, b.values))
    })
}

/// Tests `e_without > e_with`: adding realized history to the prompt helps.
pub fn experiment_history(
    without: &VariantSeries,
    with: &VariantSeries,
    realized: &CorrelationSeries,
    scheme: CodingScheme,
    period: &Period,
    ns: &[usize],
    normalization: RmseNormalization,
) -> TestGrid {
    paired_grid("history", without, with, realized, scheme, period, Alternative::Greater, ns, normalization)
}

/// Tests `e_a < e_b` within one period, e.g. a remote model against the
/// local classifier.
pub fn experiment_model_comparison(
    a: &VariantSeries,
    b: &VariantSeries,
    realized: &CorrelationSeries,
    scheme: CodingScheme,
    period: &Period,
    ns: &[usize],
    normalization: RmseNormalization,
) -> TestGrid {
    paired_grid("model-comparison", a, b, realized, scheme, period, Alternative::Less, ns, normalization)
}

#[allow(clippy::too_many_arguments)]
fn paired_grid(
    hypothesis: &str,
    a: &VariantSeries,
    b: &VariantSeries,
    realized: &CorrelationSeries,
    scheme: CodingScheme,
    period: &Period,
    alternative: Alternative,
    ns: &[usize],
    normalization: RmseNormalization,
) -> TestGrid {
    let spec = GridSpec {
        hypothesis,
        period: period.label.clone(),
        scheme,
        alternative,
        ns,
        normalization,
    };
    run_grid(spec, &Variant::ALL, |v, n| {
        let (wa, wb) = paired_rmse_windows(
            variant_series(a, v)?,
            variant_series(b, v)?,
            realized,
            n,
            period,
            normalization,
        )?;
        Ok((wa.values, wb.values))
    })
}
