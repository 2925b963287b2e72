use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{calibrate_lambda, calibrate_xi, shares, Household, LogitMarket, Product};
use crate::error::{Error, Result};
use crate::seeds;

/// Generator settings for a synthetic rental-style market.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_products: usize,
    pub n_households: usize,
    /// Median observed price.
    pub price_scale: f64,
    /// Log-sd of observed prices around `price_scale`.
    pub price_spread: f64,
    /// Household price coefficients are uniform on this range.
    pub alpha_range: (f64, f64),
    /// Number of product characteristics entering `x_j' beta_h`.
    pub n_characteristics: usize,
    pub taste_sd: f64,
    /// Total inside share of the observed shares.
    pub inside_share: f64,
    pub calibration_tol: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_products: 20,
            n_households: 30,
            price_scale: 2.5,
            price_spread: 0.2,
            alpha_range: (-3.6, -2.0),
            n_characteristics: 3,
            taste_sd: 0.5,
            inside_share: 0.55,
            calibration_tol: 1e-12,
        }
    }
}

pub fn synth_market(config: &SynthConfig, seed: u64) -> Result<LogitMarket> {
    if config.n_products == 0 || config.n_households == 0 {
        return Err(Error::domain("synthetic market needs products and households"));
    }
    let (alo, ahi) = config.alpha_range;
    if !(alo <= ahi && ahi < 0.0) {
        return Err(Error::domain("alpha_range must be negative and ordered"));
    }
    if !(config.inside_share > 0.0 && config.inside_share < 1.0) {
        return Err(Error::domain("inside_share must lie in (0, 1)"));
    }
    let mut rng = seeds::rng_for(seed, &[]);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let x: Vec<Vec<f64>> = (0..config.n_products)
        .map(|_| (0..config.n_characteristics).map(|_| normal()).collect())
        .collect();
    let p0: Vec<f64> = (0..config.n_products)
        .map(|_| config.price_scale * (config.price_spread * normal()).exp())
        .collect();
    let tastes: Vec<Vec<f64>> = (0..config.n_households)
        .map(|_| {
            (0..config.n_characteristics)
                .map(|_| config.taste_sd * normal())
                .collect()
        })
        .collect();
    let households = tastes
        .into_iter()
        .map(|beta| Household {
            weight: rng.random_range(0.5..1.5),
            alpha: rng.random_range(alo..=ahi),
            base: x
                .iter()
                .map(|xj| xj.iter().zip(&beta).map(|(a, b)| a * b).sum())
                .collect(),
        })
        .collect();
    let mut market = LogitMarket {
        households,
        products: vec![Product::default(); config.n_products],
        s0: vec![0.5 / config.n_products as f64; config.n_products],
        p0,
        price_ceiling: None,
    };
    let raw = shares(&market, &market.p0);
    let total: f64 = raw.iter().sum();
    market.s0 = raw.iter().map(|s| s * config.inside_share / total).collect();
    calibrate_xi(&mut market, config.calibration_tol, 10_000)?;
    calibrate_lambda(&mut market)?;
    Ok(market)
}
