use misprice_core::cone::{
    center_dispersion_sample, cone_probability_bound, cone_probability_limit, cone_probability_mc,
    RandomIntervalBand,
};
use misprice_core::ode::MomentIntegrator;
use misprice_core::seeds;
use misprice_core::{MarketParams, MomentState};
use rand::Rng;

use super::{config_error, error_row, output, run_cells, CellRows, Ctx, ExperimentOutput};
use crate::grid::cartesian;
use crate::table::{num, Table};
use crate::SweepError;

pub const CONE_PROB_COLUMNS: [&str; 11] = [
    "n_firms",
    "r",
    "bound",
    "mc_estimate",
    "mc_std_error",
    "mc_upper",
    "mc_lower",
    "mc_boundary",
    "n_samples",
    "consistent",
    "error",
];

pub const DEFAULT_BAND_HALF_WIDTH: f64 = 0.5;
pub const DEFAULT_CONE_SAMPLES: u64 = 100_000;

/// Market with `c = r b` on the box `p_NE (1 +- w)`.
fn cone_market(ctx: &Ctx, n: usize, r: f64) -> misprice_core::Result<MarketParams> {
    let base = ctx.market();
    let w = ctx.cfg.settings.band_half_width.unwrap_or(DEFAULT_BAND_HALF_WIDTH);
    let mut p = MarketParams {
        c: r * base.b,
        n_firms: n,
        ..base
    };
    let ne = p.nash_price();
    p.p_min = ne * (1.0 - w);
    p.p_max = ne * (1.0 + w);
    p.validate_fluid()
}

pub(crate) fn cone_prob(ctx: &Ctx) -> Result<ExperimentOutput, SweepError> {
    let cells = cartesian(&ctx.ordered_axes());
    let n_samples = ctx.cfg.settings.n_samples.unwrap_or(DEFAULT_CONE_SAMPLES);
    let mut table = Table::new(&CONE_PROB_COLUMNS);
    let width = CONE_PROB_COLUMNS.len();
    let mut errors = run_cells(&cells, &mut table, |i, c| {
        let (n, r) = (c[0] as usize, c[1]);
        let lead = vec![n.to_string(), num(r)];
        let run = || -> misprice_core::Result<Vec<String>> {
            let bound = cone_probability_bound(n, r)?;
            let params = cone_market(ctx, n, r)?;
            let band = RandomIntervalBand::new(&params, params.p_min, params.p_max)?;
            let est = cone_probability_mc(&params, &band, n, n_samples, ctx.cell_seed(i));
            let mut row = lead.clone();
            row.extend([
                num(bound),
                num(est.estimate),
                num(est.std_error),
                est.upper.to_string(),
                est.lower.to_string(),
                est.boundary.to_string(),
                n_samples.to_string(),
                (est.estimate + 3.0 * est.std_error >= bound).to_string(),
                String::new(),
            ]);
            Ok(row)
        };
        match run() {
            Ok(row) => CellRows::ok(vec![row]),
            Err(e) => CellRows::failed(vec![error_row(lead.clone(), width, &e.to_string())]),
        }
    });
    // the large-N limit closes the table
    let mut rs = ctx.axis("r").to_vec();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    for r in rs {
        let lead = vec!["inf".to_string(), num(r)];
        match cone_probability_limit(r) {
            Ok(limit) => {
                let mut row = lead;
                row.push(num(limit));
                row.resize(width, String::new());
                table.push(row);
            }
            Err(e) => {
                errors += 1;
                table.push(error_row(lead, width, &e.to_string()));
            }
        }
    }
    let csv = table.to_csv(&ctx.header())?;
    Ok(output(ctx, vec![("cone_prob.csv".into(), csv)], cells.len(), errors))
}

/// Cross-firm mean of the ODE price at `tau` from the exploration state.
fn mean_terminal(params: &MarketParams, mu: &[f64], sigma: f64, tau: f64, step: f64) -> misprice_core::Result<f64> {
    let state = MomentState::from_exploration(mu, &vec![sigma; mu.len()]);
    let mut integ = MomentIntegrator::new(params, &state, step)?;
    integ.advance_to(tau)?;
    Ok(integ.prices().mean())
}

struct DrawSummary {
    mean: f64,
    min: f64,
    max: f64,
}

fn summarize(values: &[f64]) -> DrawSummary {
    DrawSummary {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

fn check_common(ctx: &Ctx, sigma_axis: &[f64]) -> Result<(), SweepError> {
    if ctx.axis("tau").iter().any(|&t| t < 1.0) {
        return Err(SweepError::Config("tau values must be >= 1".into()));
    }
    if sigma_axis.iter().any(|&s| !(s > 0.0)) {
        return Err(SweepError::Config("sigma_exp values must be > 0".into()));
    }
    Ok(())
}

pub const INTERVAL_SWEEP_COLUMNS: [&str; 10] = [
    "lower",
    "upper",
    "n_firms",
    "sigma_exp",
    "tau",
    "inner_draws",
    "mean_terminal",
    "min_terminal",
    "max_terminal",
    "error",
];

/// Means `(lower, upper, U[lower, upper], ...)`: two firms pinned at the
/// interval ends, the rest uniform in between.
fn interval_means<R: Rng>(lower: f64, upper: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let mut mu = vec![lower, upper];
    mu.extend((2..n).map(|_| rng.random_range(lower..=upper)));
    mu
}

pub(crate) fn interval_sweep(ctx: &Ctx) -> Result<ExperimentOutput, SweepError> {
    check_common(ctx, ctx.axis("sigma_exp"))?;
    let base = ctx.market();
    let cells: Vec<Vec<f64>> = cartesian(&ctx.ordered_axes())
        .into_iter()
        .filter(|c| c[3] < c[4])
        .collect();
    if cells.is_empty() {
        return Err(SweepError::Config("no (lower, upper) pair with lower < upper".into()));
    }
    let draws = ctx.inner_draws();
    let step = ctx.log_time_step();
    let mut table = Table::new(&INTERVAL_SWEEP_COLUMNS);
    let width = INTERVAL_SWEEP_COLUMNS.len();
    let errors = run_cells(&cells, &mut table, |i, c| {
        let (n, sigma, tau, lower, upper) = (c[0] as usize, c[1], c[2], c[3], c[4]);
        let lead = vec![
            num(lower),
            num(upper),
            n.to_string(),
            num(sigma),
            num(tau),
            draws.to_string(),
        ];
        let run = || -> misprice_core::Result<DrawSummary> {
            let params = MarketParams { n_firms: n, ..base }.validate_fluid()?;
            if lower < params.p_min || upper > params.p_max {
                return Err(misprice_core::Error::domain("interval leaves the price box"));
            }
            let values = (0..draws)
                .map(|d| {
                    let mut rng = seeds::rng_for(ctx.cell_seed(i), &[d as u64]);
                    let mu = interval_means(lower, upper, n, &mut rng);
                    mean_terminal(&params, &mu, sigma, tau, step)
                })
                .collect::<misprice_core::Result<Vec<f64>>>()?;
            Ok(summarize(&values))
        };
        match run() {
            Ok(s) => {
                let mut row = lead;
                row.extend([num(s.mean), num(s.min), num(s.max), String::new()]);
                CellRows::ok(vec![row])
            }
            Err(e) => CellRows::failed(vec![error_row(lead, width, &e.to_string())]),
        }
    });
    let csv = table.to_csv(&ctx.header())?;
    Ok(output(ctx, vec![("interval_sweep.csv".into(), csv)], cells.len(), errors))
}

pub const CENTER_SWEEP_COLUMNS: [&str; 11] = [
    "s",
    "nu",
    "sigma_exp",
    "n_firms",
    "tau",
    "inner_draws",
    "mean_terminal",
    "min_terminal",
    "max_terminal",
    "truncated",
    "error",
];

pub(crate) fn center_sweep(ctx: &Ctx) -> Result<ExperimentOutput, SweepError> {
    check_common(ctx, ctx.axis("sigma_exp"))?;
    let base = ctx.market();
    base.validate_fluid().map_err(config_error)?;
    let cells = cartesian(&ctx.ordered_axes());
    let draws = ctx.inner_draws();
    let step = ctx.log_time_step();
    let mut table = Table::new(&CENTER_SWEEP_COLUMNS);
    let width = CENTER_SWEEP_COLUMNS.len();
    let errors = run_cells(&cells, &mut table, |i, c| {
        let (n, nu, sigma, tau, s) = (c[0] as usize, c[1], c[2], c[3], c[4]);
        let lead = vec![
            num(s),
            num(nu),
            num(sigma),
            n.to_string(),
            num(tau),
            draws.to_string(),
        ];
        let run = || -> misprice_core::Result<(DrawSummary, bool)> {
            let params = MarketParams { n_firms: n, ..base }.validate_fluid()?;
            let mut truncated = false;
            let values = (0..draws)
                .map(|d| {
                    let mut rng = seeds::rng_for(ctx.cell_seed(i), &[d as u64]);
                    let draw = center_dispersion_sample(&params, s, nu, n, &mut rng)?;
                    truncated |= draw.truncated;
                    mean_terminal(&params, &draw.mu, sigma, tau, step)
                })
                .collect::<misprice_core::Result<Vec<f64>>>()?;
            Ok((summarize(&values), truncated))
        };
        match run() {
            Ok((s, truncated)) => {
                let mut row = lead;
                row.extend([
                    num(s.mean),
                    num(s.min),
                    num(s.max),
                    truncated.to_string(),
                    String::new(),
                ]);
                CellRows::ok(vec![row])
            }
            Err(e) => CellRows::failed(vec![error_row(lead, width, &e.to_string())]),
        }
    });
    let csv = table.to_csv(&ctx.header())?;
    Ok(output(ctx, vec![("center_sweep.csv".into(), csv)], cells.len(), errors))
}
