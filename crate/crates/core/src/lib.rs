//! Evaluation toolkit for text-derived stock/bond correlation forecasts.
//!
//! The crate is organised around the pipeline it supports:
//!
//! * [`market_data`]: price ingestion, returns, EWMA volatility and best-subset
//!   bond-index reconstruction.
//! * [`corpus`]: Beige Book article storage, fetching and monthly lookup.
//! * [`correlation`]: realized monthly correlations and class/strength coding.
//! * [`predictors`]: the predictor contract plus the EWMA baseline, the remote
//!   completion adapter and the bag-of-words classifier.
//! * [`portfolio`]: closed-form minimum-variance weights and covariance assembly.
//! * [`backtest`]: monthly-rebalanced portfolio simulation and Sharpe ratios.
//! * [`stats`]: RMSE windows, Welch t-tests and the three experiments.

pub mod backtest;
pub mod corpus;
pub mod correlation;
mod error;
pub mod market_data;
pub mod portfolio;
pub mod predictors;
pub mod ratelimit;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
