//! Minimum-variance weights, covariance assembly and volatility scaling.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Floor on the smallest eigenvalue before inversion.
pub const RIDGE_FLOOR: f64 = 1e-10;

/// Largest condition number accepted after the ridge.
pub const MAX_CONDITION: f64 = 1e14;

/// Minimum-variance stock weight for two assets; bonds get `1 - w`.
pub fn two_asset_weight(sigma_s: f64, sigma_b: f64, rho: f64) -> Result<f64> {
    if sigma_s < 0.0 || sigma_b < 0.0 {
        return Err(Error::Domain(format!(
            "volatilities must be nonnegative, got {sigma_s} and {sigma_b}"
        )));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("correlation {rho} outside [-1, 1]")));
    }
    let cross = rho * sigma_s * sigma_b;
    let denom = sigma_s * sigma_s + sigma_b * sigma_b - 2.0 * cross;
    if denom.abs() <= 1e-15 {
        return Err(Error::Degenerate(format!(
            "two-asset variance is flat in w (sigma_s={sigma_s}, sigma_b={sigma_b}, rho={rho})"
        )));
    }
    Ok((sigma_b * sigma_b - cross) / denom)
}

/// Unordered asset pair, stored with the smaller label first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey(String, String);

impl PairKey {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            Self(a, b)
        } else {
            Self(b, a)
        }
    }

    pub fn first(&self) -> &str {
        &self.0
    }

    pub fn second(&self) -> &str {
        &self.1
    }
}

impl std::fmt::Display for PairKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}~{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub labels: Vec<String>,
    pub entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn new(labels: Vec<String>, entries: DMatrix<f64>) -> Result<Self> {
        let n = labels.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::Validation(format!(
                "{n} labels for a {}x{} matrix",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self { labels, entries })
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        SymmetricEigen::new(self.entries.clone()).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().min()
    }

    /// `wᵀ Σ w`.
    pub fn variance_of(&self, weights: &[f64]) -> f64 {
        let w = DVector::from_column_slice(weights);
        (w.transpose() * &self.entries * &w)[(0, 0)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub labels: Vec<String>,
    pub weights: Vec<f64>,
    /// Residual held at the risk-free rate.
    pub cash: f64,
}

impl WeightVector {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.cash
    }
}

/// Projects a symmetric matrix onto the PSD cone by clipping negative
/// eigenvalues to zero.
pub fn nearest_psd(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(matrix.clone());
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize(&rebuilt)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// `Σ_ij = ρ_ij σ_i σ_j`, repaired to the nearest PSD matrix when the
/// pairwise correlations are mutually inconsistent.
pub fn assemble_covariance(
    labels: &[String],
    vols: &[f64],
    correlations: &BTreeMap<PairKey, f64>,
) -> Result<CovarianceMatrix> {
    let n = labels.len();
    if vols.len() != n {
        return Err(Error::Validation(format!("{n} assets but {} volatilities", vols.len())));
    }
    if let Some(v) = vols.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("volatility {v} is negative")));
    }
    let mut missing = Vec::new();
    let mut raw = DMatrix::zeros(n, n);
    for i in 0..n {
        raw[(i, i)] = vols[i] * vols[i];
        for j in (i + 1)..n {
            let key = PairKey::new(labels[i].as_str(), labels[j].as_str());
            match correlations.get(&key) {
                Some(&rho) if (-1.0..=1.0).contains(&rho) => {
                    let c = rho * vols[i] * vols[j];
                    raw[(i, j)] = c;
                    raw[(j, i)] = c;
                }
                Some(&rho) => {
                    return Err(Error::Domain(format!("correlation {rho} for {key} outside [-1, 1]")))
                }
                None => missing.push(key.to_string()),
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingPairs(missing));
    }
    let entries = if n > 1 && SymmetricEigen::new(raw.clone()).eigenvalues.min() < 0.0 {
        nearest_psd(&raw)
    } else {
        raw
    };
    CovarianceMatrix::new(labels.to_vec(), entries)
}

/// `Σ⁻¹1 / 1ᵀΣ⁻¹1`, after lifting the spectrum to at least [`RIDGE_FLOOR`].
pub fn n_asset_weights(cov: &CovarianceMatrix) -> Result<WeightVector> {
    let n = cov.dim();
    if n == 0 {
        return Err(Error::Validation("empty covariance matrix".into()));
    }
    let eig = SymmetricEigen::new(cov.entries.clone());
    let min = eig.eigenvalues.min();
    let ridge = (RIDGE_FLOOR - min).max(0.0);
    let lifted = &cov.entries + DMatrix::identity(n, n) * ridge;
    let max = eig.eigenvalues.max() + ridge;
    let condition = max / (min + ridge);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Conditioning(format!(
            "condition number {condition:.3e} after ridge {ridge:.3e}"
        )));
    }
    let ones = DVector::from_element(n, 1.0);
    let x = lifted
        .cholesky()
        .ok_or_else(|| Error::Conditioning("Cholesky failed after ridge".into()))?
        .solve(&ones);
    let total = x.sum();
    if !(total.abs() > 0.0) || !total.is_finite() {
        return Err(Error::Conditioning(format!("1ᵀΣ⁻¹1 = {total}")));
    }
    Ok(WeightVector {
        labels: cov.labels.clone(),
        weights: x.iter().map(|v| v / total).collect(),
        cash: 0.0,
    })
}

/// Volatility targeting: scales weights by `min(1, target / portfolio)` and
/// puts the remainder in cash. Zero portfolio volatility leaves weights
/// untouched.
pub fn scale_weights(weights: &[f64], target_vol: f64, portfolio_vol: f64) -> Result<(Vec<f64>, f64)> {
    if target_vol < 0.0 || target_vol.is_nan() {
        return Err(Error::Domain(format!("target volatility {target_vol} is negative")));
    }
    if portfolio_vol < 0.0 || portfolio_vol.is_nan() {
        return Err(Error::Domain(format!("portfolio volatility {portfolio_vol} is negative")));
    }
    let k = if portfolio_vol == 0.0 {
        1.0
    } else {
        (target_vol / portfolio_vol).min(1.0)
    };
    let scaled: Vec<f64> = weights.iter().map(|w| k * w).collect();
    let cash = 1.0 - scaled.iter().sum::<f64>();
    Ok((scaled, cash))
}
