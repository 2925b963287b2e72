//! Linear demand primitives and the closed-form competitive and monopoly
//! benchmarks of the symmetric N-firm market.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric linear demand system
/// `Q_i = a - b p_i + c/(N-1) * sum_{j != i} p_j + eps_i` on the price box
/// `[p_min, p_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Demand intercept.
    pub a: f64,
    /// Own-price slope.
    pub b: f64,
    /// Cross-price slope, spread evenly over the `N - 1` rivals.
    pub c: f64,
    pub n_firms: usize,
    pub p_min: f64,
    pub p_max: f64,
}

/// Price floor used when a config leaves `p_min` unspecified.
pub fn default_p_min(a: f64, b: f64) -> f64 {
    0.05 * a / b
}

impl MarketParams {
    /// Builds and strictly validates a parameter set.
    pub fn new(a: f64, b: f64, c: f64, n_firms: usize, p_min: f64, p_max: f64) -> Result<Self> {
        MarketParams {
            a,
            b,
            c,
            n_firms,
            p_min,
            p_max,
        }
        .validate()
    }

    /// The `a = b = 1, c = 1/2` duopoly on `[p_min, 1]` used throughout the
    /// numerical experiments (`p_NE = 2/3`, `p_M = 1`).
    pub fn reference_duopoly() -> Self {
        MarketParams {
            a: 1.0,
            b: 1.0,
            c: 0.5,
            n_firms: 2,
            p_min: default_p_min(1.0, 1.0),
            p_max: 1.0,
        }
    }

    pub fn with_n_firms(mut self, n_firms: usize) -> Self {
        self.n_firms = n_firms;
        self
    }

    pub fn with_bounds(mut self, p_min: f64, p_max: f64) -> Self {
        self.p_min = p_min;
        self.p_max = p_max;
        self
    }

    /// Checks every inequality of the demand window, including
    /// `p_max <= a/b` so that expected demand is nonnegative on the box.
    pub fn validate(self) -> Result<Self> {
        self.validate_fluid()?;
        if self.p_max > self.a / self.b {
            return Err(Error::domain(format!(
                "p_max <= a/b violated (p_max = {}, a/b = {})",
                self.p_max,
                self.a / self.b
            )));
        }
        Ok(self)
    }

    /// Validation for deterministic (ODE and closed-form) use only. It drops
    /// the `p_max <= a/b` cap, which matters only for realized quantities,
    /// so the price box may extend past the demand choke price.
    pub fn validate_fluid(self) -> Result<Self> {
        let finite = [self.a, self.b, self.c, self.p_min, self.p_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain("parameters must be finite"));
        }
        if self.a <= 0.0 {
            return Err(Error::domain("a > 0 violated"));
        }
        if self.b <= 0.0 {
            return Err(Error::domain("b > 0 violated"));
        }
        if self.c <= 0.0 {
            return Err(Error::domain("c > 0 violated"));
        }
        if self.b <= self.c {
            return Err(Error::domain("b > c violated"));
        }
        if self.n_firms < 2 {
            return Err(Error::domain("N >= 2 violated"));
        }
        if self.p_min <= 0.0 {
            return Err(Error::domain("p_min > 0 violated"));
        }
        let p_ne = self.nash_price();
        if self.p_max <= p_ne {
            return Err(Error::domain(format!(
                "p_max below Nash price (p_max = {}, p_NE = {})",
                self.p_max, p_ne
            )));
        }
        if self.p_min > p_ne {
            return Err(Error::domain(format!(
                "p_min <= p_NE violated (p_min = {}, p_NE = {})",
                self.p_min, p_ne
            )));
        }
        Ok(self)
    }

    /// `a - b p_i + c * mean_{j != i} p_j`.
    pub fn expected_demand(&self, prices: &[f64], firm: usize) -> Result<f64> {
        if firm >= self.n_firms || prices.len() != self.n_firms {
            return Err(Error::Index {
                firm,
                n_firms: self.n_firms,
            });
        }
        Ok(self.a - self.b * prices[firm] + self.c * leave_one_out_mean(prices, firm))
    }

    /// Smallest expected demand anywhere on the price box.
    pub fn demand_floor(&self) -> f64 {
        self.a - self.b * self.p_max + self.c * self.p_min
    }

    /// True best response `(a + c pbar)/(2b)`, not clipped to the box.
    pub fn best_response(&self, pbar_opponents: f64) -> f64 {
        (self.a + self.c * pbar_opponents) / (2.0 * self.b)
    }

    pub fn nash_price(&self) -> f64 {
        self.a / (2.0 * self.b - self.c)
    }

    /// Symmetric joint-profit maximizer `a / (2(b - c))`.
    pub fn monopoly_price(&self) -> f64 {
        self.a / (2.0 * (self.b - self.c))
    }

    pub fn capped_monopoly(&self) -> f64 {
        self.monopoly_price().min(self.p_max)
    }

    pub fn clip(&self, p: f64) -> f64 {
        p.clamp(self.p_min, self.p_max)
    }

    /// Ratio `c / b` of cross- to own-price effect.
    pub fn cross_ratio(&self) -> f64 {
        self.c / self.b
    }
}

/// Mean of `values` with entry `i` left out. Requires `values.len() >= 2`.
pub fn leave_one_out_mean(values: &[f64], i: usize) -> f64 {
    let n = values.len();
    let sum: f64 = values
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, v)| v)
        .sum();
    sum / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base() -> MarketParams {
        MarketParams {
            a: 1.0,
            b: 1.0,
            c: 0.5,
            n_firms: 2,
            p_min: 0.1,
            p_max: 1.0,
        }
    }

    #[test]
    fn reference_parameters_validate() {
        assert!(base().validate().is_ok());
        assert!(MarketParams::reference_duopoly().validate().is_ok());
    }

    #[test]
    fn cross_slope_above_own_slope_is_rejected() {
        let err = MarketParams { c: 1.5, ..base() }.validate().unwrap_err();
        assert!(err.to_string().contains("b > c violated"), "{err}");
    }

    #[test]
    fn cap_below_nash_is_rejected() {
        let err = MarketParams { p_max: 0.6, ..base() }.validate().unwrap_err();
        assert!(err.to_string().contains("p_max below Nash price"), "{err}");
    }

    #[test]
    fn cap_above_choke_price_is_fluid_only() {
        let p = MarketParams {
            p_max: 4.0 / 3.0,
            ..base()
        };
        assert!(p.validate().is_err());
        assert!(p.validate_fluid().is_ok());
    }

    #[test]
    fn other_violations() {
        assert!(MarketParams { a: 0.0, ..base() }.validate().is_err());
        assert!(MarketParams { n_firms: 1, ..base() }.validate().is_err());
        assert!(MarketParams { p_min: 0.0, ..base() }.validate().is_err());
        assert!(MarketParams { p_min: 0.7, ..base() }.validate().is_err());
        assert!(MarketParams { b: f64::NAN, ..base() }.validate().is_err());
    }

    #[test]
    fn demand_at_nash() {
        let p = base();
        let q = p.expected_demand(&[2.0 / 3.0, 2.0 / 3.0], 0).unwrap();
        assert_relative_eq!(q, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn demand_at_cap_is_positive() {
        let p = base();
        let q = p.expected_demand(&[1.0, 1.0], 1).unwrap();
        assert_relative_eq!(q, p.c * p.p_max, epsilon = 1e-15);
        assert!(q > 0.0);
    }

    #[test]
    fn symmetric_demand_independent_of_n() {
        let pbar = 0.8;
        for n in 2..6 {
            let p = base().with_n_firms(n);
            let q = p.expected_demand(&vec![pbar; n], n - 1).unwrap();
            assert_relative_eq!(q, p.a - (p.b - p.c) * pbar, epsilon = 1e-14);
        }
    }

    #[test]
    fn demand_rejects_bad_firm() {
        assert!(matches!(
            base().expected_demand(&[0.5, 0.5], 2),
            Err(Error::Index { firm: 2, n_firms: 2 })
        ));
    }

    #[test]
    fn benchmarks() {
        let p = base();
        assert_eq!(p.nash_price(), 2.0 / 3.0);
        assert_eq!(p.monopoly_price(), 1.0);
        assert_relative_eq!(p.best_response(1.0), 0.75);
        assert_relative_eq!(MarketParams { a: 2.0, ..p }.nash_price(), 4.0 / 3.0);
        assert_eq!(MarketParams { p_max: 0.9, ..p }.capped_monopoly(), 0.9);
        let tiny = MarketParams { c: 1e-12, ..p };
        assert_relative_eq!(tiny.nash_price(), 0.5, epsilon = 1e-11);
        assert_relative_eq!(tiny.monopoly_price(), 0.5, epsilon = 1e-11);
        assert_relative_eq!(tiny.best_response(0.9), 0.5, epsilon = 1e-11);
    }

    #[test]
    fn nash_is_best_response_fixed_point() {
        for &(a, b, c) in &[(1.0, 1.0, 0.5), (2.0, 1.5, 0.3), (0.7, 3.0, 2.9)] {
            let p = MarketParams { a, b, c, ..base() };
            let ne = p.nash_price();
            assert!((p.best_response(ne) - ne).abs() <= 4.0 * f64::EPSILON * ne);
            assert!(ne < p.monopoly_price());
        }
    }
}
