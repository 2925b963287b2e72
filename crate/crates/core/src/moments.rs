//! Misspecified own-price OLS demand fits and the myopic pricing rule they
//! induce, both from raw price/quantity histories and from the `(U, V)`
//! moment coordinates of the fluid limit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{leave_one_out_mean, MarketParams};

/// Scaled time, running price means and accumulated price co-movements.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentState {
    pub tau: f64,
    pub u: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl MomentState {
    /// State at the end of independent exploration: `U = mu`,
    /// `V = diag(sigma^2)`.
    pub fn from_exploration(mu: &[f64], sigma: &[f64]) -> Self {
        assert_eq!(mu.len(), sigma.len(), "mu and sigma lengths differ");
        let var: Vec<f64> = sigma.iter().map(|s| s * s).collect();
        MomentState {
            tau: 1.0,
            u: DVector::from_column_slice(mu),
            v: DMatrix::from_diagonal(&DVector::from_vec(var)),
        }
    }

    pub fn n_firms(&self) -> usize {
        self.u.len()
    }

    /// `mean_{j != i} U_j`.
    pub fn rival_mean(&self, i: usize) -> f64 {
        leave_one_out_mean(self.u.as_slice(), i)
    }

    /// `mean_{j != i} V_ij`.
    pub fn rival_covariance(&self, i: usize) -> f64 {
        let n = self.n_firms();
        let sum: f64 = (0..n).filter(|&j| j != i).map(|j| self.v[(i, j)]).sum();
        sum / (n - 1) as f64
    }
}

/// Fitted demand line `q(p) = alpha_hat + beta_hat * p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub alpha_hat: f64,
    pub beta_hat: f64,
}

/// Own-price OLS fit of `quantities` on `prices`, accumulated in centered
/// (Welford) form.
pub fn ols_from_history(prices: &[f64], quantities: &[f64]) -> Result<OlsFit> {
    if prices.len() != quantities.len() {
        return Err(Error::DegenerateHistory(format!(
            "{} prices vs {} quantities",
            prices.len(),
            quantities.len()
        )));
    }
    if prices.len() < 2 {
        return Err(Error::DegenerateHistory(
            "at least two observations required".into(),
        ));
    }
    let mut acc = RunningMoments::default();
    for (&p, &q) in prices.iter().zip(quantities) {
        acc.push(p, q);
    }
    acc.fit()
}

/// Argmax of `p (alpha_hat + beta_hat p)` over `[lo, hi]`.
///
/// A nonnegative slope selects the upper endpoint; this branch relies on the
/// fitted demand being positive there, which holds whenever the mean
/// observed quantity is positive.
pub fn price_from_ols(fit: OlsFit, mean_quantity: f64, bounds: (f64, f64)) -> f64 {
    debug_assert!(mean_quantity > 0.0, "mean quantity must be positive");
    let (lo, hi) = bounds;
    if fit.beta_hat < 0.0 {
        (-fit.alpha_hat / (2.0 * fit.beta_hat)).clamp(lo, hi)
    } else {
        hi
    }
}

/// Posted price of every firm at a moment state.
///
/// Firm `i` posts the clipped misspecified OLS price
/// `((a + c Ubar_-i) V_ii - c U_i Vbar_-i) / (2 (b V_ii - c Vbar_-i))`
/// when the fitted slope is negative, and `p_max` otherwise.
pub fn posted_price(params: &MarketParams, state: &MomentState) -> DVector<f64> {
    let n = state.n_firms();
    DVector::from_iterator(n, (0..n).map(|i| posted_price_firm(params, state, i)))
}

pub(crate) fn posted_price_firm(params: &MarketParams, state: &MomentState, i: usize) -> f64 {
    ols_price(
        params,
        state.u[i],
        state.rival_mean(i),
        state.v[(i, i)],
        state.rival_covariance(i),
    )
}

/// Scalar core of [`posted_price`] for one firm with own mean `u`, rival
/// mean `ubar`, own accumulated variance `vii` and mean rival covariance
/// `vbar`.
pub fn ols_price(params: &MarketParams, u: f64, ubar: f64, vii: f64, vbar: f64) -> f64 {
    let slope_gap = params.b * vii - params.c * vbar;
    if slope_gap > 0.0 {
        let numer = (params.a + params.c * ubar) * vii - params.c * u * vbar;
        params.clip(numer / (2.0 * slope_gap))
    } else {
        params.p_max
    }
}

/// Per-firm OLS coefficients implied by the moment state:
/// `beta_i = -b + c Vbar_-i / V_ii`, `alpha_i = a + c Ubar_-i - c U_i Vbar_-i / V_ii`.
pub fn ols_fit_from_moments(params: &MarketParams, state: &MomentState) -> Vec<OlsFit> {
    (0..state.n_firms())
        .map(|i| {
            let ratio = state.rival_covariance(i) / state.v[(i, i)];
            OlsFit {
                alpha_hat: params.a + params.c * state.rival_mean(i)
                    - params.c * state.u[i] * ratio,
                beta_hat: -params.b + params.c * ratio,
            }
        })
        .collect()
}

/// Welford-style running means, variance and covariance of a `(x, y)`
/// stream. Constant work per observation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningMoments {
    count: u64,
    mean_x: f64,
    mean_y: f64,
    /// Sum of squared deviations of x.
    m2_x: f64,
    /// Sum of co-deviations of x and y.
    c_xy: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64, y: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dx = x - self.mean_x;
        self.mean_x += dx / n;
        self.mean_y += (y - self.mean_y) / n;
        // pre-update x deviation times post-update y deviation
        let dy_new = y - self.mean_y;
        self.m2_x += dx * (x - self.mean_x);
        self.c_xy += dx * dy_new;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean_x(&self) -> f64 {
        self.mean_x
    }

    pub fn mean_y(&self) -> f64 {
        self.mean_y
    }

    /// Population variance of x.
    pub fn var_x(&self) -> f64 {
        self.m2_x / self.count as f64
    }

    /// Population covariance of x and y.
    pub fn cov_xy(&self) -> f64 {
        self.c_xy / self.count as f64
    }

    /// Least-squares line of y on x.
    pub fn fit(&self) -> Result<OlsFit> {
        if self.count < 2 {
            return Err(Error::DegenerateHistory(
                "at least two observations required".into(),
            ));
        }
        if self.m2_x <= 0.0 {
            return Err(Error::DegenerateHistory(
                "price series has zero variance".into(),
            ));
        }
        let beta_hat = self.c_xy / self.m2_x;
        Ok(OlsFit {
            alpha_hat: self.mean_y - beta_hat * self.mean_x,
            beta_hat,
        })
    }
}
