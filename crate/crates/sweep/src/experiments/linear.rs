use misprice_core::cone::{classify_cone, BOUNDARY_TOL};
use misprice_core::ode::{prices_at, symmetric_limit, symmetric_reduce, IntegratorConfig};
use misprice_core::sim::{run_ensemble_with_bins, EnsembleStats, ExplorationSpec, ShockSpec, SimConfig};
use misprice_core::stats::is_bimodal;
use misprice_core::MarketParams;

use super::{config_error, error_row, output, run_cells, CellRows, Ctx, ExperimentOutput};
use crate::grid::cartesian;
use crate::table::{num, Table};
use crate::SweepError;

fn ascending_taus(ctx: &Ctx) -> Result<Vec<f64>, SweepError> {
    let mut taus = ctx.axis("tau").to_vec();
    taus.sort_by(f64::total_cmp);
    if taus[0] < 1.0 {
        return Err(SweepError::Config("tau values must be >= 1".into()));
    }
    Ok(taus)
}

pub const ODE_HEATMAP_COLUMNS: [&str; 8] = [
    "mu1",
    "mu2",
    "tau",
    "sigma_exp",
    "terminal_price_firm1",
    "terminal_price_firm2",
    "cone",
    "error",
];

pub(crate) fn ode_heatmap(ctx: &Ctx) -> Result<ExperimentOutput, SweepError> {
    let params = ctx.market().validate_fluid().map_err(config_error)?;
    if params.n_firms != 2 {
        return Err(SweepError::Config("ode-heatmap needs a duopoly".into()));
    }
    let taus = ascending_taus(ctx)?;
    let cells = cartesian(&[
        ctx.axis("sigma_exp").to_vec(),
        ctx.axis("mu1").to_vec(),
        ctx.axis("mu2").to_vec(),
    ]);
    let mut table = Table::new(&ODE_HEATMAP_COLUMNS);
    let width = ODE_HEATMAP_COLUMNS.len();
    let step = ctx.log_time_step();
    let errors = run_cells(&cells, &mut table, |_, c| {
        let (sigma, mu) = (c[0], [c[1], c[2]]);
        let lead = |tau: f64| vec![num(mu[0]), num(mu[1]), num(tau), num(sigma)];
        match prices_at(&params, &mu, &[sigma, sigma], &taus, step) {
            Ok(prices) => {
                let cone = classify_cone(&params, &mu, BOUNDARY_TOL).as_str();
                let rows = taus
                    .iter()
                    .zip(prices)
                    .map(|(&tau, p)| {
                        let mut row = lead(tau);
                        row.extend([num(p[0]), num(p[1]), cone.to_string(), String::new()]);
                        row
                    })
                    .collect();
                CellRows::ok(rows)
            }
            Err(e) => CellRows::failed(
                taus.iter()
                    .map(|&tau| error_row(lead(tau), width, &e.to_string()))
                    .collect(),
            ),
        }
    });
    let csv = table.to_csv(&ctx.header())?;
    Ok(output(ctx, vec![("ode_heatmap.csv".into(), csv)], cells.len(), errors))
}

fn sim_config(ctx: &Ctx, mu: Vec<f64>, k: usize, tau: f64, sigma: f64, shock: f64, seed: u64) -> SimConfig {
    let n = mu.len();
    SimConfig {
        k_explore: k,
        t_exploit: SimConfig::t_for_tau(k, tau),
        exploration: ExplorationSpec {
            mu,
            sigma: vec![sigma; n],
            shape: ctx.exploration_family(),
        },
        shock: ShockSpec {
            sigma_env: shock,
            family: ctx.shock_family(),
        },
        seed,
        record_full_history: false,
    }
}

/// Ensemble statistics and the ODE prices at the same realized horizon.
fn ensemble_and_ode(
    ctx: &Ctx,
    params: &MarketParams,
    cfg: &SimConfig,
) -> misprice_core::Result<(EnsembleStats, Vec<f64>)> {
    let stats = run_ensemble_with_bins(params, cfg, ctx.n_runs(), ctx.bins())?;
    let ode = prices_at(
        params,
        &cfg.exploration.mu,
        &cfg.exploration.sigma,
        &[cfg.tau()],
        ctx.log_time_step(),
    )?;
    Ok((stats, ode[0].iter().copied().collect()))
}

pub const STOCH_HEATMAP_COLUMNS: [&str; 15] = [
    "mu1",
    "mu2",
    "k_explore",
    "t_exploit",
    "tau",
    "sigma_exp",
    "shock_sd",
    "n_runs",
    "mean_terminal",
    "std_terminal",
    "mean_terminal_firm2",
    "std_terminal_firm2",
    "ode_terminal",
    "ode_terminal_firm2",
    "error",
];

fn stochastic_params(ctx: &Ctx) -> Result<MarketParams, SweepError> {
    let params = ctx.market().validate().map_err(config_error)?;
    if params.n_firms != 2 {
        return Err(SweepError::Config(format!("{} needs a duopoly", ctx.kind.name())));
    }
    Ok(params)
}

pub(crate) fn stoch_heatmap(ctx: &Ctx) -> Result<ExperimentOutput, SweepError> {
    let params = stochastic_params(ctx)?;
    let cells = cartesian(&ctx.ordered_axes());
    let mut table = Table::new(&STOCH_HEATMAP_COLUMNS);
    let width = STOCH_HEATMAP_COLUMNS.len();
    let n_runs = ctx.n_runs();
    let errors = run_cells(&cells, &mut table, |i, c| {
        let (k, tau, sigma, shock, mu) = (c[0] as usize, c[1], c[2], c[3], vec![c[4], c[5]]);
        let cfg = sim_config(ctx, mu.clone(), k, tau, sigma, shock, ctx.cell_seed(i));
        let lead = vec![
            num(mu[0]),
            num(mu[1]),
            k.to_string(),
            cfg.t_exploit.to_string(),
            num(cfg.tau()),
            num(sigma),
            num(shock),
            n_runs.to_string(),
        ];
        match ensemble_and_ode(ctx, &params, &cfg) {
            Ok((stats, ode)) => {
                let mut row = lead;
                row.extend([
                    num(stats.firms[0].mean),
                    num(stats.firms[0].std),
                    num(stats.firms[1].mean),
                    num(stats.firms[1].std),
                    num(ode[0]),
                    num(ode[1]),
                    String::new(),
                ]);
                CellRows::ok(vec![row])
            }
            Err(e) => CellRows::failed(vec![error_row(lead, width, &e.to_string())]),
        }
    });
    let csv = table.to_csv(&ctx.header())?;
    Ok(output(ctx, vec![("stoch_heatmap.csv".into(), csv)], cells.len(), errors))
}

pub const HISTOGRAM_COLUMNS: [&str; 14] = [
    "mu1",
    "mu2",
    "k_explore",
    "t_exploit",
    "tau",
    "sigma_exp",
    "shock_sd",
    "n_runs",
    "firm",
    "bin",
    "bin_lo",
    "bin_hi",
    "count",
    "error",
];

pub const HISTOGRAM_SUMMARY_COLUMNS: [&str; 18] = [
    "mu1",
    "mu2",
    "k_explore",
    "t_exploit",
    "tau",
    "sigma_exp",
    "shock_sd",
    "n_runs",
    "firm",
    "mean",
    "std",
    "p10",
    "p50",
    "p90",
    "mode_split",
    "fraction_below_split",
    "bimodal",
    "ode_terminal",
];

pub const DEFAULT_POINTS: [[f64; 2]; 2] = [[0.66, 0.66], [0.75, 0.85]];
pub const DEFAULT_MODE_SPLIT: f64 = 0.75;
pub const DEFAULT_MIN_PEAK_FRAC: f64 = 0.05;

pub(crate) fn histogram(ctx: &Ctx) -> Result<ExperimentOutput, SweepError> {
    let params = stochastic_params(ctx)?;
    let points = ctx
        .cfg
        .settings
        .points
        .clone()
        .unwrap_or_else(|| DEFAULT_POINTS.to_vec());
    if points.is_empty() {
        return Err(SweepError::Config("histogram needs at least one point".into()));
    }
    let split = ctx.cfg.settings.mode_split.unwrap_or(DEFAULT_MODE_SPLIT);
    let peak = ctx.cfg.settings.min_peak_frac.unwrap_or(DEFAULT_MIN_PEAK_FRAC);
    let cells: Vec<(Vec<f64>, [f64; 2])> = cartesian(&ctx.ordered_axes())
        .into_iter()
        .flat_map(|c| points.iter().map(move |&p| (c.clone(), p)))
        .collect();
    let n_runs = ctx.n_runs();
    let results: Vec<_> = {
        use rayon::prelude::*;
        cells
            .par_iter()
            .enumerate()
            .map(|(i, (c, mu))| {
                let (k, tau, sigma, shock) = (c[0] as usize, c[1], c[2], c[3]);
                let cfg = sim_config(ctx, mu.to_vec(), k, tau, sigma, shock, ctx.cell_seed(i));
                let lead = vec![
                    num(mu[0]),
                    num(mu[1]),
                    k.to_string(),
                    cfg.t_exploit.to_string(),
                    num(cfg.tau()),
                    num(sigma),
                    num(shock),
                    n_runs.to_string(),
                ];
                (lead, ensemble_and_ode(ctx, &params, &cfg))
            })
            .collect()
    };
    let mut bins = Table::new(&HISTOGRAM_COLUMNS);
    let mut summary = Table::new(&HISTOGRAM_SUMMARY_COLUMNS);
    let mut errors = 0;
    for (lead, result) in results {
        match result {
            Ok((stats, ode)) => {
                for (firm, fs) in stats.firms.iter().enumerate() {
                    for b in 0..fs.histogram.bins() {
                        let (lo, hi) = fs.histogram.edges(b);
                        let mut row = lead.clone();
                        row.extend([
                            (firm + 1).to_string(),
                            b.to_string(),
                            num(lo),
                            num(hi),
                            fs.histogram.counts[b].to_string(),
                            String::new(),
                        ]);
                        bins.push(row);
                    }
                    let mut row = lead.clone();
                    row.extend([
                        (firm + 1).to_string(),
                        num(fs.mean),
                        num(fs.std),
                        num(fs.quantiles[0]),
                        num(fs.quantiles[2]),
                        num(fs.quantiles[4]),
                        num(split),
                        num(stats.fraction_below(firm, split)),
                        is_bimodal(&fs.histogram, peak).to_string(),
                        num(ode[firm]),
                    ]);
                    summary.push(row);
                }
            }
            Err(e) => {
                errors += 1;
                bins.push(error_row(lead, HISTOGRAM_COLUMNS.len(), &e.to_string()));
            }
        }
    }
    let header = ctx.header();
    let files = vec![
        ("histogram.csv".to_string(), bins.to_csv(&header)?),
        ("histogram_summary.csv".to_string(), summary.to_csv(&header)?),
    ];
    Ok(output(ctx, files, cells.len(), errors))
}

pub const SYMMETRIC_CURVE_COLUMNS: [&str; 6] =
    ["s", "sigma_exp", "tau", "terminal_price", "closed_form", "error"];

pub(crate) fn symmetric_curve(ctx: &Ctx) -> Result<ExperimentOutput, SweepError> {
    let params = ctx.market().validate_fluid().map_err(config_error)?;
    ascending_taus(ctx)?;
    let cells = cartesian(&ctx.ordered_axes());
    let mut table = Table::new(&SYMMETRIC_CURVE_COLUMNS);
    let width = SYMMETRIC_CURVE_COLUMNS.len();
    let step = ctx.log_time_step();
    let errors = run_cells(&cells, &mut table, |_, c| {
        let (sigma, tau, s) = (c[0], c[1], c[2]);
        let lead = vec![num(s), num(sigma), num(tau)];
        let cfg = IntegratorConfig {
            log_time_step: step,
            tau_end: tau,
            record_every: usize::MAX,
            ..Default::default()
        };
        match symmetric_reduce(&params, s, sigma, &cfg) {
            Ok(traj) => {
                let mut row = lead;
                row.extend([
                    num(*traj.p.last().unwrap()),
                    num(symmetric_limit(&params, s)),
                    String::new(),
                ]);
                CellRows::ok(vec![row])
            }
            Err(e) => CellRows::failed(vec![error_row(lead, width, &e.to_string())]),
        }
    });
    let csv = table.to_csv(&ctx.header())?;
    Ok(output(ctx, vec![("symmetric_curve.csv".into(), csv)], cells.len(), errors))
}
