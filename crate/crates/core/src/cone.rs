//! Best-response cones, the exploration-mean priors used to sample them,
//! the cone-membership lower bound, and the correlation/conduct mapping.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{leave_one_out_mean, MarketParams};
use crate::seeds::{self, tag};

pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConeLabel {
    /// Every firm explores above its best response to the rival mean.
    UpperCone,
    LowerCone,
    /// Some firm sits within tolerance of its best response.
    Boundary,
    Neither,
}

impl ConeLabel {
    pub fn in_cone(self) -> bool {
        matches!(self, ConeLabel::UpperCone | ConeLabel::LowerCone)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConeLabel::UpperCone => "upper",
            ConeLabel::LowerCone => "lower",
            ConeLabel::Boundary => "boundary",
            ConeLabel::Neither => "neither",
        }
    }
}

/// Signed gaps `mu_i - BR(mean_{j != i} mu_j)`.
pub fn best_response_gaps(params: &MarketParams, mu: &[f64]) -> Vec<f64> {
    (0..mu.len())
        .map(|i| mu[i] - params.best_response(leave_one_out_mean(mu, i)))
        .collect()
}

pub fn classify_cone(params: &MarketParams, mu: &[f64], tol: f64) -> ConeLabel {
    let gaps = best_response_gaps(params, mu);
    if gaps.iter().any(|g| g.abs() <= tol) {
        ConeLabel::Boundary
    } else if gaps.iter().all(|&g| g > 0.0) {
        ConeLabel::UpperCone
    } else if gaps.iter().all(|&g| g < 0.0) {
        ConeLabel::LowerCone
    } else {
        ConeLabel::Neither
    }
}

/// Outer band `[lower, upper]` from which the two anchor firms draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomIntervalBand {
    pub lower: f64,
    pub upper: f64,
}

impl RandomIntervalBand {
    /// The band must sit in the price box and contain `p_NE`. A zero-width
    /// band at `p_NE` is accepted.
    pub fn new(params: &MarketParams, lower: f64, upper: f64) -> Result<Self> {
        let ne = params.nash_price();
        if !(lower >= params.p_min && upper <= params.p_max) {
            return Err(Error::domain("band must lie in [p_min, p_max]"));
        }
        if !(lower <= ne && ne <= upper) {
            return Err(Error::domain(format!(
                "band [{lower}, {upper}] must contain p_NE = {ne}"
            )));
        }
        Ok(RandomIntervalBand { lower, upper })
    }

    /// `[p_NE - half_width, p_NE + half_width]`.
    pub fn around_nash(params: &MarketParams, half_width: f64) -> Result<Self> {
        let ne = params.nash_price();
        Self::new(params, ne - half_width, ne + half_width)
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Two anchors uniform on the band; the other `n - 2` firms uniform between
/// the anchors.
pub fn random_interval_sample<R: Rng + ?Sized>(
    band: &RandomIntervalBand,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    assert!(n >= 2, "random interval prior needs at least two firms");
    let m1 = uniform(rng, band.lower, band.upper);
    let m2 = uniform(rng, band.lower, band.upper);
    let (lo, hi) = (m1.min(m2), m1.max(m2));
    let mut mu = Vec::with_capacity(n);
    mu.push(m1);
    mu.push(m2);
    for _ in 2..n {
        mu.push(uniform(rng, lo, hi));
    }
    mu
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterDispersionDraw {
    pub mu: Vec<f64>,
    /// Support actually sampled after intersecting with the price box.
    pub support: (f64, f64),
    pub truncated: bool,
}

/// I.i.d. uniform means on `[s - sqrt(3) nu, s + sqrt(3) nu]` intersected
/// with the price box, so that `nu` is the spread before truncation.
pub fn center_dispersion_sample<R: Rng + ?Sized>(
    params: &MarketParams,
    s: f64,
    nu: f64,
    n: usize,
    rng: &mut R,
) -> Result<CenterDispersionDraw> {
    if !(nu >= 0.0) {
        return Err(Error::domain("nu >= 0 violated"));
    }
    let half = 3f64.sqrt() * nu;
    let (raw_lo, raw_hi) = (s - half, s + half);
    let lo = raw_lo.max(params.p_min);
    let hi = raw_hi.min(params.p_max);
    if !(lo <= hi) {
        return Err(Error::EmptySupport(format!(
            "[{raw_lo}, {raw_hi}] misses [{}, {}]",
            params.p_min, params.p_max
        )));
    }
    let mu = (0..n).map(|_| uniform(rng, lo, hi)).collect();
    Ok(CenterDispersionDraw {
        mu,
        support: (lo, hi),
        truncated: lo > raw_lo || hi < raw_hi,
    })
}

/// Lower bound `(N-1)(2-r) / (4(N-1) - r(N-2))` on the probability that a
/// random-interval draw lands in either cone, with `r = c/b`.
pub fn cone_probability_bound(n: usize, r: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain("N >= 2 violated"));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::domain("0 < c/b < 1 violated"));
    }
    let m = (n - 1) as f64;
    Ok(m * (2.0 - r) / (4.0 * m - r * (n as f64 - 2.0)))
}

/// Many-firm limit `(2 - r)/(4 - r)` of [`cone_probability_bound`].
pub fn cone_probability_limit(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::domain("0 < c/b < 1 violated"));
    }
    Ok((2.0 - r) / (4.0 - r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeEstimate {
    pub n_samples: u64,
    pub upper: u64,
    pub lower: u64,
    pub boundary: u64,
    pub estimate: f64,
    pub std_error: f64,
}

const MC_BATCH: u64 = 8192;

/// Monte Carlo cone-membership frequency under the random interval prior.
/// Batches draw from independent derived streams, so the result depends
/// only on `seed`.
pub fn cone_probability_mc(
    params: &MarketParams,
    band: &RandomIntervalBand,
    n_firms: usize,
    n_samples: u64,
    seed: u64,
) -> ConeEstimate {
    let n_batches = n_samples.div_ceil(MC_BATCH);
    let counts: Vec<[u64; 3]> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = seeds::rng_for(seed, &[tag::BATCH, b]);
            let size = MC_BATCH.min(n_samples - b * MC_BATCH);
            let mut c = [0u64; 3];
            for _ in 0..size {
                let mu = random_interval_sample(band, n_firms, &mut rng);
                match classify_cone(params, &mu, BOUNDARY_TOL) {
                    ConeLabel::UpperCone => c[0] += 1,
                    ConeLabel::LowerCone => c[1] += 1,
                    ConeLabel::Boundary => c[2] += 1,
                    ConeLabel::Neither => {}
                }
            }
            c
        })
        .collect();
    let (upper, lower, boundary) = counts
        .iter()
        .fold((0, 0, 0), |a, c| (a.0 + c[0], a.1 + c[1], a.2 + c[2]));
    let n = n_samples.max(1) as f64;
    let est = (upper + lower) as f64 / n;
    ConeEstimate {
        n_samples,
        upper,
        lower,
        boundary,
        estimate: est,
        std_error: (est * (1.0 - est) / n).sqrt(),
    }
}

/// Symmetric fixed point of the pricing rule when historical prices have
/// correlation `rho`: `min(p_max, a / (2b - c(1 + rho)))`.
pub fn conduct_price(params: &MarketParams, rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Range(format!("rho = {rho} outside [0, 1]")));
    }
    Ok((params.a / (2.0 * params.b - params.c * (1.0 + rho))).min(params.p_max))
}

/// Correlation `(2b - a/p)/c - 1` whose uncapped conduct price is `p`,
/// without range checks.
pub fn conduct_from_price(params: &MarketParams, p: f64) -> f64 {
    (2.0 * params.b - params.a / p) / params.c - 1.0
}

/// Inverse of [`conduct_price`] on `[p_NE, min(p_M, p_max)]`.
pub fn implied_conduct(params: &MarketParams, p: f64) -> Result<f64> {
    let (lo, hi) = (params.nash_price(), params.capped_monopoly());
    let slack = 1e-12 * hi;
    if !(p >= lo - slack && p <= hi + slack) {
        return Err(Error::Range(format!("p = {p} outside [{lo}, {hi}]")));
    }
    Ok(conduct_from_price(params, p).clamp(0.0, 1.0))
}
