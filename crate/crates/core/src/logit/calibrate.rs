use super::{ChoiceProbs, LogitMarket};
use crate::error::{Error, Result};

/// Sets `xi` so that shares at `p0` equal `s0`, by the log-share
/// contraction `xi <- xi + ln s0 - ln s(p0; xi)`. Returns the number of
/// iterations used.
pub fn calibrate_xi(market: &mut LogitMarket, tol: f64, max_iter: usize) -> Result<usize> {
    market.validate()?;
    let p0 = market.p0.clone();
    let mut residual = f64::INFINITY;
    for iter in 0..=max_iter {
        let s = ChoiceProbs::new(market, &p0).shares();
        residual = s
            .iter()
            .zip(&market.s0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual < tol {
            return Ok(iter);
        }
        if iter == max_iter {
            break;
        }
        for (prod, (target, cur)) in market.products.iter_mut().zip(market.s0.iter().zip(&s)) {
            prod.xi += target.ln() - cur.ln();
        }
        if market.products.iter().any(|p| !p.xi.is_finite()) {
            return Err(Error::Calibration("xi iteration diverged".into()));
        }
    }
    Err(Error::SolverNotConverged {
        solver: "xi contraction",
        iterations: max_iter,
        residual,
    })
}

/// Shadow costs `lambda_j = p0_j + s0_j / (d s_j / d p_j)` that make `p0`
/// satisfy every product's first-order condition. Requires calibrated `xi`.
pub fn calibrate_lambda(market: &mut LogitMarket) -> Result<()> {
    let probs = ChoiceProbs::new(market, &market.p0);
    let mut lambdas = Vec::with_capacity(market.n_products());
    for j in 0..market.n_products() {
        let lam = market.p0[j] + market.s0[j] / probs.own_derivative(j);
        if !(lam > 0.0) {
            return Err(Error::Calibration(format!(
                "product {j}: shadow cost {lam} <= 0 (demand too inelastic at p0)"
            )));
        }
        lambdas.push(lam);
    }
    for (prod, lam) in market.products.iter_mut().zip(lambdas) {
        prod.lambda = lam;
    }
    Ok(())
}

/// `s_j + (p_j - lambda_j) d s_j / d p_j` at `prices`.
pub fn foc_residuals(market: &LogitMarket, prices: &[f64]) -> Vec<f64> {
    let probs = ChoiceProbs::new(market, prices);
    (0..market.n_products())
        .map(|j| probs.share(j) + (prices[j] - market.products[j].lambda) * probs.own_derivative(j))
        .collect()
}
