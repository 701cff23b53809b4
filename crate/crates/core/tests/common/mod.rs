#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate};
use corrcast_core::correlation::MonthKey;
use corrcast_core::market_data::PriceSeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

pub fn business_days(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut day = start;
    while day <= end {
        if day.weekday().number_from_monday() <= 5 {
            out.push(day);
        }
        day += Duration::days(1);
    }
    out
}

/// Two assets with daily vols `vols` whose correlation is drawn each month
/// from `regimes`. Returns prices and the true correlation per month.
pub fn regime_market(
    seed: u64,
    start: NaiveDate,
    end: NaiveDate,
    vols: (f64, f64),
    regimes: &[f64],
) -> (BTreeMap<String, PriceSeries>, BTreeMap<MonthKey, f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let days = business_days(start, end);
    let mut rho_by_month = BTreeMap::new();
    let (mut s, mut b) = (100.0, 100.0);
    let mut s_obs = Vec::with_capacity(days.len());
    let mut b_obs = Vec::with_capacity(days.len());
    for (i, day) in days.iter().enumerate() {
        let month = MonthKey::of(*day);
        let rho = *rho_by_month
            .entry(month)
            .or_insert_with(|| regimes[rng.random_range(0..regimes.len())]);
        if i > 0 {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let e2 = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
            s *= 1.0 + 0.0002 + vols.0 * z1;
            b *= 1.0 + 0.0001 + vols.1 * e2;
        }
        s_obs.push((*day, s));
        b_obs.push((*day, b));
    }
    let prices = BTreeMap::from([
        ("stock".to_string(), PriceSeries::new("stock", s_obs).unwrap()),
        ("bond".to_string(), PriceSeries::new("bond", b_obs).unwrap()),
    ]);
    (prices, rho_by_month)
}

/// Independent-ish third asset added to a market.
pub fn add_asset(prices: &mut BTreeMap<String, PriceSeries>, name: &str, seed: u64, vol: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let days: Vec<NaiveDate> = prices.values().next().unwrap().observations().iter().map(|o| o.0).collect();
    let mut level = 50.0;
    let obs = days
        .iter()
        .enumerate()
        .map(|(i, d)| {
            if i > 0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                level *= 1.0 + vol * z;
            }
            (*d, level)
        })
        .collect();
    prices.insert(name.to_string(), PriceSeries::new(name, obs).unwrap());
}
