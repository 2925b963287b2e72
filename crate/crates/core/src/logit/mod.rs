//! Heterogeneous-household logit demand with an outside good, calibrated so
//! that observed prices are a Nash equilibrium, and the naive binary-logit
//! explore-then-exploit pipeline run on it.

mod calibrate;
mod pipeline;
mod solve;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use calibrate::{calibrate_lambda, calibrate_xi, foc_residuals};
pub use pipeline::{
    log_odds, logit_price_opt, naive_logit_fit, run_calibrated_pipeline, NaiveLogitFit,
    PipelineConfig, PipelineResult, SHARE_FLOOR,
};
pub use solve::{monopoly_solve, nash_solve, SolverConfig};
pub use synth::{synth_market, SynthConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Household {
    /// Unnormalized population weight.
    pub weight: f64,
    /// Price coefficient, negative.
    pub alpha: f64,
    /// Characteristic utility `x_j' beta_h` for each product.
    pub base: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Product {
    #[serde(default)]
    pub xi: f64,
    /// Shadow cost; zero until calibrated.
    #[serde(default)]
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitMarket {
    pub households: Vec<Household>,
    pub products: Vec<Product>,
    pub p0: Vec<f64>,
    pub s0: Vec<f64>,
    /// Upper end of the posted-price range; defaults to `3 max(p0)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_ceiling: Option<f64>,
}

impl LogitMarket {
    pub fn n_products(&self) -> usize {
        self.products.len()
    }

    pub fn ceiling(&self) -> f64 {
        self.price_ceiling
            .unwrap_or_else(|| 3.0 * self.p0.iter().cloned().fold(0.0, f64::max))
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.products.iter().map(|p| p.lambda).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_products();
        if n == 0 || self.households.is_empty() {
            return Err(Error::domain("market needs products and households"));
        }
        if self.p0.len() != n || self.s0.len() != n {
            return Err(Error::domain("p0 and s0 need one entry per product"));
        }
        let mut total_w = 0.0;
        for h in &self.households {
            if !(h.weight >= 0.0) || !h.weight.is_finite() {
                return Err(Error::domain("household weights must be finite and >= 0"));
            }
            if !(h.alpha < 0.0) {
                return Err(Error::domain("household alpha < 0 violated"));
            }
            if h.base.len() != n || !h.base.iter().all(|b| b.is_finite()) {
                return Err(Error::domain("household base needs one finite entry per product"));
            }
            total_w += h.weight;
        }
        if !(total_w > 0.0) {
            return Err(Error::domain("household weights sum to zero"));
        }
        if !self.s0.iter().all(|&s| s > 0.0 && s < 1.0) {
            return Err(Error::domain("observed shares must lie in (0, 1)"));
        }
        if !(self.s0.iter().sum::<f64>() < 1.0) {
            return Err(Error::domain("observed shares must leave a positive outside share"));
        }
        if !self.p0.iter().all(|&p| p >= 0.0 && p.is_finite()) {
            return Err(Error::domain("observed prices must be finite and >= 0"));
        }
        if let Some(c) = self.price_ceiling {
            if !(c > 0.0) {
                return Err(Error::domain("price_ceiling > 0 violated"));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: LogitMarket = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn normalized_weights(&self) -> impl Iterator<Item = f64> + '_ {
        let total: f64 = self.households.iter().map(|h| h.weight).sum();
        self.households.iter().map(move |h| h.weight / total)
    }

    /// Household choice probabilities at `prices` written into `out`
    /// (row per household, product-major inside).
    fn household_probs(&self, prices: &[f64], out: &mut Vec<f64>) {
        let n = self.n_products();
        out.clear();
        out.resize(self.households.len() * n, 0.0);
        for (h, hh) in self.households.iter().enumerate() {
            let row = &mut out[h * n..(h + 1) * n];
            let mut zmax = 0.0f64; // outside good utility
            for j in 0..n {
                row[j] = hh.alpha * prices[j] + hh.base[j] + self.products[j].xi;
                zmax = zmax.max(row[j]);
            }
            let mut denom = (-zmax).exp();
            for z in row.iter_mut() {
                *z = (*z - zmax).exp();
                denom += *z;
            }
            for z in row.iter_mut() {
                *z /= denom;
            }
        }
    }
}

/// Per-household probabilities with their normalized weights, reused by
/// share, derivative and gradient evaluations at one price vector.
pub(crate) struct ChoiceProbs {
    n: usize,
    weights: Vec<f64>,
    alphas: Vec<f64>,
    probs: Vec<f64>,
}

impl ChoiceProbs {
    pub(crate) fn new(market: &LogitMarket, prices: &[f64]) -> Self {
        let mut probs = Vec::new();
        market.household_probs(prices, &mut probs);
        ChoiceProbs {
            n: market.n_products(),
            weights: market.normalized_weights().collect(),
            alphas: market.households.iter().map(|h| h.alpha).collect(),
            probs,
        }
    }

    pub(crate) fn shares(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for (h, w) in self.weights.iter().enumerate() {
            let row = &self.probs[h * self.n..(h + 1) * self.n];
            for (sj, p) in s.iter_mut().zip(row) {
                *sj += w * p;
            }
        }
        s
    }

    pub(crate) fn share(&self, j: usize) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(h, w)| w * self.probs[h * self.n + j])
            .sum()
    }

    /// `d s_j / d p_j`.
    pub(crate) fn own_derivative(&self, j: usize) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(h, w)| {
                let p = self.probs[h * self.n + j];
                w * self.alphas[h] * p * (1.0 - p)
            })
            .sum()
    }

    /// `d/dp_j sum_k (p_k - c_k) s_k`.
    pub(crate) fn joint_profit_gradient(&self, prices: &[f64], costs: &[f64], j: usize) -> f64 {
        let mut g = 0.0;
        for (h, w) in self.weights.iter().enumerate() {
            let row = &self.probs[h * self.n..(h + 1) * self.n];
            let margin: f64 = row
                .iter()
                .zip(prices.iter().zip(costs))
                .map(|(p, (x, c))| p * (x - c))
                .sum();
            // d pi_k / d p_j = alpha pi_k (1{k=j} - pi_j)
            g += w * (row[j] + self.alphas[h] * row[j] * ((prices[j] - costs[j]) - margin));
        }
        g
    }
}

pub fn shares(market: &LogitMarket, prices: &[f64]) -> Vec<f64> {
    ChoiceProbs::new(market, prices).shares()
}

pub fn share_own_derivative(market: &LogitMarket, prices: &[f64], j: usize) -> f64 {
    ChoiceProbs::new(market, prices).own_derivative(j)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn single(alpha: f64, base: f64) -> LogitMarket {
        LogitMarket {
            households: vec![Household {
                weight: 1.0,
                alpha,
                base: vec![base],
            }],
            products: vec![Product::default()],
            p0: vec![1.0],
            s0: vec![0.3],
            price_ceiling: None,
        }
    }

    pub(crate) fn small_market() -> LogitMarket {
        LogitMarket {
            households: vec![
                Household {
                    weight: 2.0,
                    alpha: -2.0,
                    base: vec![0.5, 0.1, -0.2],
                },
                Household {
                    weight: 1.0,
                    alpha: -3.5,
                    base: vec![0.0, 0.6, 0.3],
                },
            ],
            products: vec![Product::default(); 3],
            p0: vec![1.0, 1.2, 0.9],
            s0: vec![0.15, 0.2, 0.1],
            price_ceiling: None,
        }
    }

    #[test]
    fn logistic_at_zero() {
        assert_relative_eq!(shares(&single(-1.0, 0.0), &[0.0])[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn outside_good_keeps_inside_share_below_one() {
        let m = small_market();
        for &p in &[0.0, 0.5, 5.0] {
            let s = shares(&m, &[p; 3]);
            assert!(s.iter().all(|&x| x > 0.0 && x < 1.0));
            assert!(s.iter().sum::<f64>() < 1.0);
        }
        // large utilities do not overflow
        let mut rich = small_market();
        rich.products[0].xi = 800.0;
        let s = shares(&rich, &[1.0; 3]);
        assert!(s.iter().all(|x| x.is_finite()) && s[0] > 0.5);
    }

    #[test]
    fn substitution_pattern() {
        let m = small_market();
        let base = shares(&m, &[1.0, 1.0, 1.0]);
        let up = shares(&m, &[1.1, 1.0, 1.0]);
        assert!(up[0] < base[0] && up[1] > base[1] && up[2] > base[2]);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let m = small_market();
        let p = [0.9, 1.3, 1.1];
        for j in 0..3 {
            let d = share_own_derivative(&m, &p, j);
            let h = 1e-6;
            let mut hi = p;
            let mut lo = p;
            hi[j] += h;
            lo[j] -= h;
            let fd = (shares(&m, &hi)[j] - shares(&m, &lo)[j]) / (2.0 * h);
            assert!(d < 0.0);
            assert_relative_eq!(d, fd, max_relative = 1e-6);
        }
        let one = single(-1.5, 0.2);
        let s = shares(&one, &[0.7])[0];
        assert_relative_eq!(share_own_derivative(&one, &[0.7], 0), -1.5 * s * (1.0 - s), epsilon = 1e-15);
    }

    #[test]
    fn joint_gradient_matches_finite_difference() {
        let m = small_market();
        let p = [0.9, 1.3, 1.1];
        let c = [0.5, 0.4, 0.6];
        let profit = |x: &[f64]| -> f64 {
            shares(&m, x).iter().zip(x.iter().zip(&c)).map(|(s, (p, c))| s * (p - c)).sum()
        };
        let probs = ChoiceProbs::new(&m, &p);
        for j in 0..3 {
            let h = 1e-6;
            let mut hi = p;
            let mut lo = p;
            hi[j] += h;
            lo[j] -= h;
            let fd = (profit(&hi) - profit(&lo)) / (2.0 * h);
            assert_relative_eq!(probs.joint_profit_gradient(&p, &c, j), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let m = small_market();
        let back: LogitMarket = serde_json::from_str(&m.to_json_string().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(m.validate().is_ok());
        let mut bad = m.clone();
        bad.s0 = vec![0.5, 0.4, 0.2];
        assert!(bad.validate().is_err());
        let mut bad = m;
        bad.households[0].alpha = 0.1;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn default_ceiling() {
        assert_relative_eq!(small_market().ceiling(), 3.6, epsilon = 1e-15);
    }
}
