//! Finite-horizon explore-then-exploit pipeline.
//!
//! Periods `1..=K` post independent random exploration prices. From period
//! `K` on, every firm refits the own-price OLS line to its full history and
//! posts the maximizer of predicted revenue for the next period. Realized
//! quantities are expected linear demand plus a bounded mean-zero shock.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::moments::{price_from_ols, MomentState, RunningMoments};
use crate::seeds::{self, tag};
use crate::stats::{quantiles, Histogram, RunningStats};

/// Distribution family for exploration prices and demand shocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Uniform on `mean +- sqrt(3) sd`.
    #[default]
    Uniform,
    /// Normal truncated symmetrically at `+-3` underlying standard
    /// deviations, rescaled so the truncated variance is `sd^2`.
    TruncatedGaussian,
}

/// Truncation point of the truncated-Gaussian family, in underlying sds.
const TRUNCATION: f64 = 3.0;

/// Variance of a standard normal truncated to `[-k, k]`.
fn truncated_normal_variance(k: f64) -> f64 {
    let n = Normal::standard();
    1.0 - 2.0 * k * n.pdf(k) / (2.0 * n.cdf(k) - 1.0)
}

fn sample_truncated_normal<R: Rng>(rng: &mut R, half_width: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= half_width {
            return z;
        }
    }
}

impl Family {
    /// Half-width of the support for a given standard deviation.
    pub fn half_width(self, sd: f64) -> f64 {
        match self {
            Family::Uniform => 3f64.sqrt() * sd,
            Family::TruncatedGaussian => {
                TRUNCATION * sd / truncated_normal_variance(TRUNCATION).sqrt()
            }
        }
    }

    /// Mean-zero draw with standard deviation `sd`.
    fn draw<R: Rng>(self, rng: &mut R, sd: f64) -> f64 {
        match self {
            Family::Uniform => {
                let w = self.half_width(sd);
                rng.random_range(-w..=w)
            }
            Family::TruncatedGaussian => {
                let scale = sd / truncated_normal_variance(TRUNCATION).sqrt();
                scale * sample_truncated_normal(rng, TRUNCATION)
            }
        }
    }
}

/// Independent per-firm exploration distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSpec {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub shape: Family,
}

impl ExplorationSpec {
    pub fn uniform(mu: Vec<f64>, sigma: f64) -> Self {
        let sigma = vec![sigma; mu.len()];
        ExplorationSpec {
            mu,
            sigma,
            shape: Family::Uniform,
        }
    }

    /// The support must sit inside the price box; draws are never clipped.
    pub fn validate(&self, params: &MarketParams) -> Result<()> {
        if self.mu.len() != params.n_firms || self.sigma.len() != params.n_firms {
            return Err(Error::domain(format!(
                "exploration spec has {} means and {} sds for {} firms",
                self.mu.len(),
                self.sigma.len(),
                params.n_firms
            )));
        }
        for (i, (&m, &s)) in self.mu.iter().zip(&self.sigma).enumerate() {
            if !(s > 0.0) {
                return Err(Error::domain(format!("sigma_{i} > 0 violated")));
            }
            let w = self.shape.half_width(s);
            if m - w < params.p_min || m + w > params.p_max {
                return Err(Error::domain(format!(
                    "exploration support [{}, {}] of firm {i} leaves the price box [{}, {}]",
                    m - w,
                    m + w,
                    params.p_min,
                    params.p_max
                )));
            }
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R, firm: usize) -> f64 {
        self.mu[firm] + self.shape.draw(rng, self.sigma[firm])
    }
}

/// I.i.d. bounded demand shocks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShockSpec {
    pub sigma_env: f64,
    #[serde(default)]
    pub family: Family,
}

impl ShockSpec {
    pub fn none() -> Self {
        ShockSpec {
            sigma_env: 0.0,
            family: Family::Uniform,
        }
    }

    pub fn uniform(sigma_env: f64) -> Self {
        ShockSpec {
            sigma_env,
            family: Family::Uniform,
        }
    }

    /// Largest shock magnitude. It never exceeds 99% of the smallest
    /// expected demand on the price box, so realized quantities stay
    /// positive.
    pub fn half_width(&self, params: &MarketParams) -> f64 {
        let cap = 0.99 * params.demand_floor();
        match self.family {
            Family::Uniform => (3f64.sqrt() * self.sigma_env).min(cap),
            Family::TruncatedGaussian => (TRUNCATION * self.sigma_env).min(cap),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R, half_width: f64) -> f64 {
        if half_width <= 0.0 {
            return 0.0;
        }
        match self.family {
            Family::Uniform => rng.random_range(-half_width..=half_width),
            Family::TruncatedGaussian => {
                let k = half_width / self.sigma_env;
                self.sigma_env * sample_truncated_normal(rng, k)
            }
        }
    }
}

/// Inputs of one pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub k_explore: usize,
    pub t_exploit: usize,
    pub exploration: ExplorationSpec,
    pub shock: ShockSpec,
    pub seed: u64,
    #[serde(default)]
    pub record_full_history: bool,
}

impl SimConfig {
    /// `T` giving the scaled horizon `tau = (K + T) / K`, rounded.
    pub fn t_for_tau(k_explore: usize, tau: f64) -> usize {
        ((tau - 1.0) * k_explore as f64).round().max(0.0) as usize
    }

    pub fn tau(&self) -> f64 {
        (self.k_explore + self.t_exploit) as f64 / self.k_explore as f64
    }

    pub fn validate(&self, params: &MarketParams) -> Result<()> {
        params.validate()?;
        if self.k_explore < 2 {
            return Err(Error::domain("K >= 2 violated"));
        }
        if !(self.shock.sigma_env >= 0.0) {
            return Err(Error::domain("sigma_env >= 0 violated"));
        }
        self.exploration.validate(params)
    }
}

/// Output of one pipeline run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub terminal_prices: Vec<f64>,
    /// `N x (K + T)` price history, when requested.
    pub price_history: Option<DMatrix<f64>>,
    pub quantity_history: Option<DMatrix<f64>>,
    /// Moment snapshot through the last period: `tau = t/K`, running means
    /// and `V = (t/K)` times the empirical price covariance.
    pub terminal_moments: MomentState,
}

/// Running cross-firm price means and co-moments.
#[derive(Clone, Debug)]
struct PriceCovariance {
    count: u64,
    mean: DVector<f64>,
    comoment: DMatrix<f64>,
}

impl PriceCovariance {
    fn new(n: usize) -> Self {
        PriceCovariance {
            count: 0,
            mean: DVector::zeros(n),
            comoment: DMatrix::zeros(n, n),
        }
    }

    fn push(&mut self, prices: &[f64]) {
        self.count += 1;
        let x = DVector::from_column_slice(prices);
        let d_old = &x - &self.mean;
        self.mean += &d_old / self.count as f64;
        let d_new = &x - &self.mean;
        self.comoment += &d_old * d_new.transpose();
    }

    fn snapshot(&self, k_explore: usize) -> MomentState {
        let mut v = &self.comoment / k_explore as f64;
        // symmetrize away rounding asymmetry of the rank-one updates
        v = (&v + v.transpose()) * 0.5;
        MomentState {
            tau: self.count as f64 / k_explore as f64,
            u: self.mean.clone(),
            v,
        }
    }
}

/// Runs one explore-then-exploit pipeline.
pub fn run_pipeline(params: &MarketParams, config: &SimConfig) -> Result<SimResult> {
    config.validate(params)?;
    let n = params.n_firms;
    let k = config.k_explore;
    let mut explore = DMatrix::zeros(n, k);
    for t in 0..k {
        for i in 0..n {
            let mut rng =
                seeds::rng_for(config.seed, &[tag::EXPLORE, i as u64, (t + 1) as u64]);
            explore[(i, t)] = config.exploration.draw(&mut rng, i);
        }
    }
    run_from_exploration(params, &explore, config)
}

/// Runs the pipeline on a given `N x K` matrix of exploration prices;
/// `config.exploration` is ignored.
pub fn run_from_exploration(
    params: &MarketParams,
    explore: &DMatrix<f64>,
    config: &SimConfig,
) -> Result<SimResult> {
    let n = params.n_firms;
    let k = explore.ncols();
    if explore.nrows() != n || k < 2 {
        return Err(Error::domain(format!(
            "exploration matrix must be {n} x K with K >= 2, got {} x {k}",
            explore.nrows()
        )));
    }
    let horizon = k + config.t_exploit;
    let shock_w = config.shock.half_width(params);

    let mut own = vec![RunningMoments::default(); n];
    let mut cov = PriceCovariance::new(n);
    let mut history = config
        .record_full_history
        .then(|| (DMatrix::zeros(n, horizon), DMatrix::zeros(n, horizon)));
    let mut prices = vec![0.0; n];
    let mut quantities = vec![0.0; n];

    for t in 1..=horizon {
        if t <= k {
            for (i, p) in prices.iter_mut().enumerate() {
                *p = explore[(i, t - 1)];
            }
        } else {
            for (i, p) in prices.iter_mut().enumerate() {
                let fit = own[i].fit().map_err(|e| match e {
                    Error::DegenerateHistory(msg) => {
                        Error::DegenerateHistory(format!("firm {i}, period {t}: {msg}"))
                    }
                    other => other,
                })?;
                *p = price_from_ols(fit, own[i].mean_y(), (params.p_min, params.p_max));
            }
        }
        for (i, q) in quantities.iter_mut().enumerate() {
            let mut rng = seeds::rng_for(config.seed, &[tag::SHOCK, i as u64, t as u64]);
            *q = params.expected_demand(&prices, i)? + config.shock.draw(&mut rng, shock_w);
        }
        for i in 0..n {
            own[i].push(prices[i], quantities[i]);
        }
        cov.push(&prices);
        if let Some((ph, qh)) = history.as_mut() {
            for i in 0..n {
                ph[(i, t - 1)] = prices[i];
                qh[(i, t - 1)] = quantities[i];
            }
        }
    }

    let (price_history, quantity_history) = match history {
        Some((p, q)) => (Some(p), Some(q)),
        None => (None, None),
    };
    Ok(SimResult {
        terminal_prices: prices,
        price_history,
        quantity_history,
        terminal_moments: cov.snapshot(k),
    })
}

/// Writes a recorded run as CSV `period,firm,price,quantity`.
pub fn write_trace<W: Write>(result: &SimResult, mut out: W) -> Result<()> {
    let (Some(ph), Some(qh)) = (&result.price_history, &result.quantity_history) else {
        return Err(Error::domain("run was not recorded with full history"));
    };
    writeln!(out, "period,firm,price,quantity")?;
    for t in 0..ph.ncols() {
        for i in 0..ph.nrows() {
            writeln!(out, "{},{},{},{}", t + 1, i, ph[(i, t)], qh[(i, t)])?;
        }
    }
    Ok(())
}

/// Summary of one firm's terminal prices across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirmStats {
    pub mean: f64,
    pub std: f64,
    /// 10/25/50/75/90 percentiles.
    pub quantiles: [f64; 5],
    pub histogram: Histogram,
}

pub const ENSEMBLE_QUANTILES: [f64; 5] = [0.10, 0.25, 0.50, 0.75, 0.90];
pub const DEFAULT_BINS: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_runs: usize,
    pub firms: Vec<FirmStats>,
    /// Terminal price vectors ordered by run index.
    pub terminal: Vec<Vec<f64>>,
}

impl EnsembleStats {
    fn from_terminal(params: &MarketParams, terminal: Vec<Vec<f64>>, bins: usize) -> Self {
        let n_runs = terminal.len();
        let firms = (0..params.n_firms)
            .map(|i| {
                let values: Vec<f64> = terminal.iter().map(|row| row[i]).collect();
                let rs: RunningStats = values.iter().copied().collect();
                let q = quantiles(&values, &ENSEMBLE_QUANTILES);
                FirmStats {
                    mean: rs.mean(),
                    std: rs.std_dev(),
                    quantiles: [q[0], q[1], q[2], q[3], q[4]],
                    histogram: Histogram::from_values(params.p_min, params.p_max, bins, &values),
                }
            })
            .collect();
        EnsembleStats {
            n_runs,
            firms,
            terminal,
        }
    }

    /// Fraction of runs whose terminal price of `firm` is below `threshold`.
    pub fn fraction_below(&self, firm: usize, threshold: f64) -> f64 {
        let hits = self.terminal.iter().filter(|r| r[firm] < threshold).count();
        hits as f64 / self.n_runs as f64
    }
}

/// Per-run seed derived from the ensemble seed and the run index.
pub fn run_seed(ensemble_seed: u64, run: usize) -> u64 {
    seeds::derive(ensemble_seed, &[run as u64])
}

/// Runs `n_runs` independent pipelines in parallel on the current rayon pool.
/// Results are merged by run index, so the output does not depend on the
/// number of worker threads.
pub fn run_ensemble(
    params: &MarketParams,
    config: &SimConfig,
    n_runs: usize,
) -> Result<EnsembleStats> {
    run_ensemble_with_bins(params, config, n_runs, DEFAULT_BINS)
}

pub fn run_ensemble_with_bins(
    params: &MarketParams,
    config: &SimConfig,
    n_runs: usize,
    bins: usize,
) -> Result<EnsembleStats> {
    if n_runs == 0 {
        return Err(Error::domain("n_runs >= 1 violated"));
    }
    config.validate(params)?;
    let base = SimConfig {
        record_full_history: false,
        ..config.clone()
    };
    let outcomes: Vec<Result<Vec<f64>>> = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let cfg = SimConfig {
                seed: run_seed(config.seed, run),
                ..base.clone()
            };
            run_pipeline(params, &cfg).map(|r| r.terminal_prices)
        })
        .collect();
    let mut terminal = Vec::with_capacity(n_runs);
    for (run, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(p) => terminal.push(p),
            Err(e) => {
                return Err(Error::Run {
                    run,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(EnsembleStats::from_terminal(params, terminal, bins))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{ols_from_history, posted_price};
    use approx::assert_relative_eq;

    fn params() -> MarketParams {
        MarketParams::new(1.0, 1.0, 0.5, 2, 0.25, 1.0).unwrap()
    }

    fn config(k: usize, t: usize, sigma_env: f64) -> SimConfig {
        SimConfig {
            k_explore: k,
            t_exploit: t,
            exploration: ExplorationSpec::uniform(vec![0.75, 0.85], 0.05),
            shock: ShockSpec::uniform(sigma_env),
            seed: 11,
            record_full_history: true,
        }
    }

    #[test]
    fn no_exploitation_returns_last_exploration_draw() {
        let r = run_pipeline(&params(), &config(20, 0, 0.05)).unwrap();
        let ph = r.price_history.unwrap();
        for i in 0..2 {
            assert_eq!(r.terminal_prices[i], ph[(i, 19)]);
        }
        assert_eq!(r.terminal_moments.tau, 1.0);
    }

    #[test]
    fn first_exploitation_price_replays_externally() {
        let p = params();
        let cfg = config(30, 1, 0.0);
        let r = run_pipeline(&p, &cfg).unwrap();
        let ph = r.price_history.unwrap();
        let qh = r.quantity_history.unwrap();
        for i in 0..2 {
            let prices: Vec<f64> = (0..30).map(|t| ph[(i, t)]).collect();
            let qs: Vec<f64> = (0..30).map(|t| qh[(i, t)]).collect();
            let fit = ols_from_history(&prices, &qs).unwrap();
            let mean_q = qs.iter().sum::<f64>() / 30.0;
            let expected = price_from_ols(fit, mean_q, (p.p_min, p.p_max));
            assert_relative_eq!(ph[(i, 30)], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn noiseless_history_matches_moment_price_map() {
        // without shocks the data OLS price equals the moment-coordinate price
        let p = params();
        let cfg = config(40, 25, 0.0);
        let r = run_pipeline(&p, &SimConfig { t_exploit: 24, ..cfg.clone() }).unwrap();
        let next = run_pipeline(&p, &cfg).unwrap();
        let predicted = posted_price(&p, &r.terminal_moments);
        for i in 0..2 {
            assert_relative_eq!(predicted[i], next.terminal_prices[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn incremental_fit_matches_full_refit_every_period() {
        let p = params();
        let cfg = config(15, 40, 0.05);
        let r = run_pipeline(&p, &cfg).unwrap();
        let ph = r.price_history.unwrap();
        let qh = r.quantity_history.unwrap();
        for t in 15..55 {
            for i in 0..2 {
                let prices: Vec<f64> = (0..t).map(|s| ph[(i, s)]).collect();
                let qs: Vec<f64> = (0..t).map(|s| qh[(i, s)]).collect();
                let fit = ols_from_history(&prices, &qs).unwrap();
                let mean_q = qs.iter().sum::<f64>() / t as f64;
                let refit = price_from_ols(fit, mean_q, (p.p_min, p.p_max));
                assert_relative_eq!(ph[(i, t)], refit, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn prices_in_box_and_quantities_positive() {
        let p = params();
        let r = run_pipeline(&p, &config(10, 200, 0.2)).unwrap();
        let ph = r.price_history.unwrap();
        let qh = r.quantity_history.unwrap();
        assert!(ph.iter().all(|&x| x >= p.p_min && x <= p.p_max));
        assert!(qh.iter().all(|&q| q > 0.0));
    }

    #[test]
    fn symmetric_noiseless_history_stays_symmetric() {
        let p = params().with_n_firms(3);
        let draws = [0.66, 0.71, 0.69, 0.74, 0.62, 0.70, 0.68, 0.73];
        let explore = DMatrix::from_fn(3, draws.len(), |_, t| draws[t]);
        let cfg = SimConfig {
            exploration: ExplorationSpec::uniform(vec![0.7; 3], 0.05),
            ..config(draws.len(), 60, 0.0)
        };
        let r = run_from_exploration(&p, &explore, &cfg).unwrap();
        let ph = r.price_history.unwrap();
        for t in draws.len()..ph.ncols() {
            assert_eq!(ph[(0, t)], ph[(1, t)]);
            assert_eq!(ph[(0, t)], ph[(2, t)]);
        }
    }

    #[test]
    fn exploration_support_must_fit_the_box() {
        let p = params();
        let cfg = SimConfig {
            exploration: ExplorationSpec::uniform(vec![0.26, 0.7], 0.05),
            ..config(10, 5, 0.0)
        };
        assert!(run_pipeline(&p, &cfg).is_err());
        assert!(run_pipeline(&p, &config(1, 5, 0.0)).is_err());
    }

    #[test]
    fn shock_width_respects_demand_floor() {
        let p = MarketParams::new(1.0, 1.0, 0.5, 2, 0.05, 1.0).unwrap();
        let w = ShockSpec::uniform(0.05).half_width(&p);
        assert_relative_eq!(w, 0.99 * 0.025);
        let wide = MarketParams::new(1.0, 1.0, 0.5, 2, 0.25, 1.0).unwrap();
        assert_relative_eq!(ShockSpec::uniform(0.05).half_width(&wide), 3f64.sqrt() * 0.05);
    }

    #[test]
    fn truncated_gaussian_has_requested_moments() {
        let mut rng = seeds::rng_for(3, &[]);
        let draws: Vec<f64> = (0..200_000)
            .map(|_| Family::TruncatedGaussian.draw(&mut rng, 0.05))
            .collect();
        let s: RunningStats = draws.iter().copied().collect();
        assert!(s.mean().abs() < 3.0 * 0.05 / (200_000f64).sqrt() * 1.5);
        assert!((s.std_dev() - 0.05).abs() < 0.001);
        let w = Family::TruncatedGaussian.half_width(0.05);
        assert!(draws.iter().all(|d| d.abs() <= w + 1e-12));
    }

    #[test]
    fn ensemble_single_run_collapses() {
        let p = params();
        let cfg = config(10, 20, 0.05);
        let stats = run_ensemble(&p, &cfg, 1).unwrap();
        let single = run_pipeline(
            &p,
            &SimConfig {
                seed: run_seed(cfg.seed, 0),
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(stats.terminal[0], single.terminal_prices);
        assert_eq!(stats.firms[0].mean, single.terminal_prices[0]);
        assert_eq!(stats.firms[0].std, 0.0);
    }

    #[test]
    fn ensemble_is_independent_of_worker_count() {
        let p = params();
        let cfg = config(10, 30, 0.05);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_ensemble(&p, &cfg, 40).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
