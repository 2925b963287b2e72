use serde::{Deserialize, Serialize};

use super::{ChoiceProbs, LogitMarket};
use crate::error::{Error, Result};
use crate::optimize::maximize_scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Sup-norm price change (Nash) or gradient (monopoly) at which a sweep
    /// counts as converged.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Resolution of each one-dimensional search.
    pub line_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_sweeps: 20_000,
            line_tol: 1e-12,
        }
    }
}

fn with_price(prices: &[f64], j: usize, p: f64) -> Vec<f64> {
    let mut x = prices.to_vec();
    x[j] = p;
    x
}

/// Iterated best responses, updating products in index order, from
/// `start` until no price moves by more than `tol` in a sweep.
pub fn nash_solve(market: &LogitMarket, start: &[f64], config: &SolverConfig) -> Result<Vec<f64>> {
    let n = market.n_products();
    if start.len() != n {
        return Err(Error::domain("start needs one price per product"));
    }
    let hi = market.ceiling();
    let mut prices = start.to_vec();
    let mut change = f64::INFINITY;
    for _ in 0..config.max_sweeps {
        change = 0.0;
        for j in 0..n {
            let lam = market.products[j].lambda;
            let profit = |p: f64| {
                let x = with_price(&prices, j, p);
                (p - lam) * ChoiceProbs::new(market, &x).share(j)
            };
            let foc = |p: f64| {
                let x = with_price(&prices, j, p);
                let probs = ChoiceProbs::new(market, &x);
                probs.share(j) + (p - lam) * probs.own_derivative(j)
            };
            let best = maximize_scalar(profit, foc, 0.0, hi, config.line_tol);
            change = f64::max(change, (best - prices[j]).abs());
            prices[j] = best;
        }
        if change < config.tol {
            return Ok(prices);
        }
    }
    Err(Error::SolverNotConverged {
        solver: "nash best responses",
        iterations: config.max_sweeps,
        residual: change,
    })
}

/// Coordinate ascent on joint profit `sum_j (p_j - lambda_j) s_j` from
/// `start`, until the sup-norm gradient falls below `tol`.
pub fn monopoly_solve(
    market: &LogitMarket,
    start: &[f64],
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    let n = market.n_products();
    if start.len() != n {
        return Err(Error::domain("start needs one price per product"));
    }
    let hi = market.ceiling();
    let costs = market.lambdas();
    let joint = |x: &[f64]| -> f64 {
        ChoiceProbs::new(market, x)
            .shares()
            .iter()
            .zip(x.iter().zip(&costs))
            .map(|(s, (p, c))| s * (p - c))
            .sum()
    };
    let mut prices = start.to_vec();
    let mut grad = f64::INFINITY;
    for _ in 0..config.max_sweeps {
        for j in 0..n {
            let f = |p: f64| joint(&with_price(&prices, j, p));
            let df = |p: f64| {
                let x = with_price(&prices, j, p);
                ChoiceProbs::new(market, &x).joint_profit_gradient(&x, &costs, j)
            };
            prices[j] = maximize_scalar(f, df, 0.0, hi, config.line_tol);
        }
        let probs = ChoiceProbs::new(market, &prices);
        grad = (0..n)
            .filter(|&j| prices[j] > 0.0 && prices[j] < hi)
            .map(|j| probs.joint_profit_gradient(&prices, &costs, j).abs())
            .fold(0.0, f64::max);
        if grad < config.tol {
            return Ok(prices);
        }
    }
    Err(Error::SolverNotConverged {
        solver: "monopoly coordinate ascent",
        iterations: config.max_sweeps,
        residual: grad,
    })
}
