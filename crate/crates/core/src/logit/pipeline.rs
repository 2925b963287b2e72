use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{shares, LogitMarket};
use crate::error::{Error, Result};
use crate::moments::{ols_from_history, RunningMoments};
use crate::optimize::maximize_scalar;
use crate::seeds::{self, tag};
use crate::stats::quantiles;

/// Shares are clamped to `[SHARE_FLOOR, 1 - SHARE_FLOOR]` before taking
/// log-odds.
pub const SHARE_FLOOR: f64 = 1e-12;

/// Own-price log-odds model `log(s / (1 - s)) = eta + theta p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveLogitFit {
    pub eta: f64,
    pub theta: f64,
}

/// Log-odds of `s` after clamping, and whether the clamp was applied.
pub fn log_odds(s: f64) -> (f64, bool) {
    let c = s.clamp(SHARE_FLOOR, 1.0 - SHARE_FLOOR);
    ((c / (1.0 - c)).ln(), c != s)
}

pub fn naive_logit_fit(prices: &[f64], shares: &[f64]) -> Result<NaiveLogitFit> {
    let y: Vec<f64> = shares.iter().map(|&s| log_odds(s).0).collect();
    let fit = ols_from_history(prices, &y)?;
    Ok(NaiveLogitFit {
        eta: fit.alpha_hat,
        theta: fit.beta_hat,
    })
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Maximizer of predicted profit `(p - lambda) Lambda(eta + theta p)` over
/// `[0, ceiling]`.
pub fn logit_price_opt(fit: NaiveLogitFit, lambda: f64, ceiling: f64) -> f64 {
    let f = |p: f64| (p - lambda) * logistic(fit.eta + fit.theta * p);
    let df = |p: f64| {
        let l = logistic(fit.eta + fit.theta * p);
        l + (p - lambda) * fit.theta * l * (1.0 - l)
    };
    maximize_scalar(f, df, 0.0, ceiling, 1e-12)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Exploration mean level relative to `p0`.
    pub m: f64,
    /// Within-product relative exploration noise.
    pub sigma: f64,
    /// Cross-product dispersion of exploration means.
    pub sigma_nu: f64,
    pub k_explore: usize,
    pub t_exploit: usize,
    pub seed: u64,
    /// Log-sd of multiplicative noise on observed shares; zero keeps
    /// shares deterministic given prices.
    #[serde(default)]
    pub share_noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub terminal_prices: Vec<f64>,
    /// `100 (P_{K+T} / p0 - 1)` per product.
    pub delta_pct: Vec<f64>,
    /// 10th, 50th and 90th percentiles of `delta_pct`.
    pub percentiles: [f64; 3],
    /// Share observations clamped before the log-odds transform.
    pub clamp_events: u64,
}

impl PipelineResult {
    /// CSV with columns `product,p0,lambda,terminal_price,delta_pct`.
    pub fn write_csv<W: Write>(&self, market: &LogitMarket, mut w: W) -> Result<()> {
        writeln!(w, "product,p0,lambda,terminal_price,delta_pct")?;
        for j in 0..self.delta_pct.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                j, market.p0[j], market.products[j].lambda, self.terminal_prices[j], self.delta_pct[j]
            )?;
        }
        Ok(())
    }

    pub fn percentile_json(&self) -> serde_json::Value {
        serde_json::json!({
            "p10": self.percentiles[0],
            "p50": self.percentiles[1],
            "p90": self.percentiles[2],
            "clamp_events": self.clamp_events,
        })
    }
}

/// Exploration means `m p0 (1 + nu)`, then `K` noisy exploration periods
/// and `T` synchronous naive-logit exploitation periods.
pub fn run_calibrated_pipeline(market: &LogitMarket, config: &PipelineConfig) -> Result<PipelineResult> {
    let n = market.n_products();
    if config.k_explore < 2 {
        return Err(Error::domain("K >= 2 violated"));
    }
    if !(config.m > 0.0 && config.sigma >= 0.0 && config.sigma_nu >= 0.0 && config.share_noise >= 0.0) {
        return Err(Error::domain("need m > 0 and sigma, sigma_nu, share_noise >= 0"));
    }
    if market.products.iter().any(|p| !(p.lambda > 0.0)) {
        return Err(Error::domain("market shadow costs are not calibrated"));
    }
    let ceiling = market.ceiling();
    let half = 3f64.sqrt() * config.sigma_nu;
    let mu: Vec<f64> = (0..n)
        .map(|j| {
            let mut rng = seeds::rng_for(config.seed, &[tag::MEANS, j as u64]);
            let nu = if half > 0.0 {
                rng.random_range(-half..=half)
            } else {
                0.0
            };
            config.m * market.p0[j] * (1.0 + nu)
        })
        .collect();
    let noise = Normal::new(0.0, config.sigma).map_err(|e| Error::domain(e.to_string()))?;

    let mut fits = vec![RunningMoments::default(); n];
    let mut clamp_events = 0u64;
    let mut record = |fits: &mut [RunningMoments], prices: &[f64], t: usize| {
        for (j, mut s) in shares(market, prices).into_iter().enumerate() {
            if config.share_noise > 0.0 {
                let mut rng = seeds::rng_for(config.seed, &[tag::SHARE_NOISE, j as u64, t as u64]);
                let z: f64 = StandardNormal.sample(&mut rng);
                s *= (config.share_noise * z).exp();
            }
            let (y, clamped) = log_odds(s);
            clamp_events += clamped as u64;
            fits[j].push(prices[j], y);
        }
    };

    let mut prices = vec![0.0; n];
    for t in 1..=config.k_explore {
        for j in 0..n {
            let mut rng = seeds::rng_for(config.seed, &[tag::EXPLORE, j as u64, t as u64]);
            let v: f64 = noise.sample(&mut rng);
            prices[j] = (mu[j] * (1.0 + v)).clamp(0.0, ceiling);
        }
        record(&mut fits, &prices, t);
    }
    for step in 0..config.t_exploit {
        let next: Vec<f64> = (0..n)
            .map(|j| {
                let fit = fits[j].fit()?;
                let naive = NaiveLogitFit {
                    eta: fit.alpha_hat,
                    theta: fit.beta_hat,
                };
                Ok(logit_price_opt(naive, market.products[j].lambda, ceiling))
            })
            .collect::<Result<_>>()?;
        prices = next;
        // the terminal price's own share never enters a fit
        if step + 1 < config.t_exploit {
            record(&mut fits, &prices, config.k_explore + step + 1);
        }
    }
    let delta_pct: Vec<f64> = prices
        .iter()
        .zip(&market.p0)
        .map(|(p, p0)| 100.0 * (p / p0 - 1.0))
        .collect();
    let q = quantiles(&delta_pct, &[0.1, 0.5, 0.9]);
    Ok(PipelineResult {
        terminal_prices: prices,
        delta_pct,
        percentiles: [q[0], q[1], q[2]],
        clamp_events,
    })
}
