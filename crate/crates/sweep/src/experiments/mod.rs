//! The nine experiments. Each one expands its axes into cells, evaluates
//! the cells on a bounded rayon pool and renders rows in cell order.
//!
//! Defaults (desk scale; `--full-scale` raises run counts to 2500 and inner
//! draws to 100):
//!
//! | experiment      | axes (default values)                                              |
//! |-----------------|--------------------------------------------------------------------|
//! | ode-heatmap     | sigma_exp {0.02, 0.1}, mu1, mu2 in 0.4..4/3 step 0.01, tau {2, 6, 100} |
//! | stoch-heatmap   | k_explore {10, 100}, tau 6, sigma_exp 0.05, shock_sd 0.05, mu1, mu2 in 0.5..0.85 |
//! | histogram       | k_explore 100, tau 100, sigma_exp 0.05, shock_sd 0.05 (points in settings) |
//! | symmetric-curve | sigma_exp {0.001, 0.02, 0.1}, tau 1e5, s in 0.1..1 step 0.01         |
//! | cone-prob       | n_firms {2, 3, 5, 10}, r {0.25, 0.5, 0.75, 0.999999}                 |
//! | interval-sweep  | n_firms 10, sigma_exp 0.1, tau 100, lower < upper in 0.4..1 step 0.01 |
//! | center-sweep    | n_firms 10, nu {0.02, 0.1}, sigma_exp {0.02, 0.1}, tau 100, s in 0.4..1.3 step 0.02 |
//! | logit-sweep     | k_explore 50, t_exploit 450, sigma, sigma_nu {0.02, 0.1}, m in 0.8..1.3 step 0.02 |
//! | logit-time      | k_explore {10, 50}, m {0.8, 1.2}, sigma 0.05, sigma_nu 0.05, t_exploit 5..200 geometric |

mod appendix;
mod linear;
mod logit;

use std::collections::BTreeMap;

use misprice_core::seeds;
use misprice_core::sim::Family;
use misprice_core::MarketParams;
use rayon::prelude::*;

use crate::config::{ExperimentKind, SweepConfig};
use crate::grid::Axis;
use crate::table::Table;
use crate::SweepError;

pub const DESK_RUNS: usize = 250;
pub const DESK_HISTOGRAM_RUNS: usize = 500;
pub const FULL_RUNS: usize = 2500;
pub const DESK_INNER_DRAWS: usize = 20;
pub const FULL_INNER_DRAWS: usize = 100;
pub const DEFAULT_SEED: u64 = 20_240_611;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Replaces the config's root seed.
    pub seed: Option<u64>,
    pub full_scale: bool,
    /// Worker threads; `None` uses the config, then `MISPRICE_WORKERS`, then
    /// the available parallelism.
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// `(file name, contents)` in a fixed order.
    pub files: Vec<(String, String)>,
    pub n_cells: usize,
    pub n_cell_errors: usize,
}

impl ExperimentOutput {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }
}

const INTEGER_AXES: [&str; 3] = ["k_explore", "t_exploit", "n_firms"];

fn default_axes(kind: ExperimentKind) -> Vec<(&'static str, Axis)> {
    use ExperimentKind::*;
    let v = Axis::values;
    match kind {
        OdeHeatmap => vec![
            ("sigma_exp", v(&[0.02, 0.1])),
            ("mu1", Axis::range(0.4, 4.0 / 3.0, 0.01)),
            ("mu2", Axis::range(0.4, 4.0 / 3.0, 0.01)),
            ("tau", v(&[2.0, 6.0, 100.0])),
        ],
        StochHeatmap => vec![
            ("k_explore", v(&[10.0, 100.0])),
            ("tau", v(&[6.0])),
            ("sigma_exp", v(&[0.05])),
            ("shock_sd", v(&[0.05])),
            ("mu1", Axis::range(0.5, 0.85, 0.01)),
            ("mu2", Axis::range(0.5, 0.85, 0.01)),
        ],
        Histogram => vec![
            ("k_explore", v(&[100.0])),
            ("tau", v(&[100.0])),
            ("sigma_exp", v(&[0.05])),
            ("shock_sd", v(&[0.05])),
        ],
        SymmetricCurve => vec![
            ("sigma_exp", v(&[0.001, 0.02, 0.1])),
            ("tau", v(&[1e5])),
            ("s", Axis::range(0.1, 1.0, 0.01)),
        ],
        ConeProb => vec![
            ("n_firms", v(&[2.0, 3.0, 5.0, 10.0])),
            ("r", v(&[0.25, 0.5, 0.75, 0.999999])),
        ],
        IntervalSweep => vec![
            ("n_firms", v(&[10.0])),
            ("sigma_exp", v(&[0.1])),
            ("tau", v(&[100.0])),
            ("lower", Axis::range(0.4, 1.0, 0.01)),
            ("upper", Axis::range(0.4, 1.0, 0.01)),
        ],
        CenterSweep => vec![
            ("n_firms", v(&[10.0])),
            ("nu", v(&[0.02, 0.1])),
            ("sigma_exp", v(&[0.02, 0.1])),
            ("tau", v(&[100.0])),
            ("s", Axis::range(0.4, 1.3, 0.02)),
        ],
        LogitSweep => vec![
            ("k_explore", v(&[50.0])),
            ("t_exploit", v(&[450.0])),
            ("sigma", v(&[0.02, 0.1])),
            ("sigma_nu", v(&[0.02, 0.1])),
            ("m", Axis::range(0.8, 1.3, 0.02)),
        ],
        LogitTime => vec![
            ("k_explore", v(&[10.0, 50.0])),
            ("m", v(&[0.8, 1.2])),
            ("sigma", v(&[0.05])),
            ("sigma_nu", v(&[0.05])),
            ("t_exploit", Axis::geometric(5.0, 200.0, 12)),
        ],
    }
}

/// Axis names an experiment accepts, in cell-order.
pub fn axis_names(kind: ExperimentKind) -> Vec<&'static str> {
    default_axes(kind).into_iter().map(|(n, _)| n).collect()
}

/// CSV files an experiment writes, with their columns. Logit experiments
/// also write `market.json` and `market_summary.json`.
pub fn output_columns(kind: ExperimentKind) -> Vec<(&'static str, &'static [&'static str])> {
    use ExperimentKind::*;
    match kind {
        OdeHeatmap => vec![("ode_heatmap.csv", &linear::ODE_HEATMAP_COLUMNS)],
        StochHeatmap => vec![("stoch_heatmap.csv", &linear::STOCH_HEATMAP_COLUMNS)],
        Histogram => vec![
            ("histogram.csv", &linear::HISTOGRAM_COLUMNS),
            ("histogram_summary.csv", &linear::HISTOGRAM_SUMMARY_COLUMNS),
        ],
        SymmetricCurve => vec![("symmetric_curve.csv", &linear::SYMMETRIC_CURVE_COLUMNS)],
        ConeProb => vec![("cone_prob.csv", &appendix::CONE_PROB_COLUMNS)],
        IntervalSweep => vec![("interval_sweep.csv", &appendix::INTERVAL_SWEEP_COLUMNS)],
        CenterSweep => vec![("center_sweep.csv", &appendix::CENTER_SWEEP_COLUMNS)],
        LogitSweep => vec![("logit_sweep.csv", &logit::LOGIT_COLUMNS)],
        LogitTime => vec![("logit_time.csv", &logit::LOGIT_COLUMNS)],
    }
}

/// Market defaults `(p_min, p_max)` of the linear experiments.
fn default_box(kind: ExperimentKind) -> (f64, f64) {
    use ExperimentKind::*;
    match kind {
        OdeHeatmap | CenterSweep => (0.05, 4.0 / 3.0),
        // the floor keeps demand 0.25 above zero, so shocks of sd 0.05 are
        // realized at full width
        StochHeatmap | Histogram => (0.25, 1.0),
        _ => (0.05, 1.0),
    }
}

/// Resolved view of a config for one experiment.
pub(crate) struct Ctx<'a> {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub full_scale: bool,
    pub cfg: &'a SweepConfig,
    axes: BTreeMap<&'static str, Vec<f64>>,
}

impl<'a> Ctx<'a> {
    fn new(kind: ExperimentKind, cfg: &'a SweepConfig, opts: &RunOptions) -> Result<Self, SweepError> {
        if let Some(k) = cfg.experiment {
            if k != kind {
                return Err(SweepError::Config(format!(
                    "config is for {}, not {}",
                    k.name(),
                    kind.name()
                )));
            }
        }
        let defaults = default_axes(kind);
        for name in cfg.axes.keys() {
            if !defaults.iter().any(|(n, _)| n == name) {
                return Err(SweepError::Config(format!(
                    "unknown axis {name} for {}; known: {}",
                    kind.name(),
                    axis_names(kind).join(", ")
                )));
            }
        }
        let mut axes = BTreeMap::new();
        for (name, default) in defaults {
            let axis = cfg.axes.get(name).unwrap_or(&default);
            axes.insert(name, axis.expand(name, INTEGER_AXES.contains(&name))?);
        }
        Ok(Ctx {
            kind,
            seed: opts.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
            full_scale: opts.full_scale,
            cfg,
            axes,
        })
    }

    pub fn axis(&self, name: &str) -> &[f64] {
        &self.axes[name]
    }

    /// Axes in the experiment's cell order.
    pub fn ordered_axes(&self) -> Vec<Vec<f64>> {
        axis_names(self.kind)
            .into_iter()
            .map(|n| self.axes[n].clone())
            .collect()
    }

    pub fn cell_seed(&self, cell: usize) -> u64 {
        seeds::derive(self.seed, &[self.kind.id(), cell as u64])
    }

    pub fn header(&self) -> String {
        format!(
            "# experiment={} seed={} scale={}",
            self.kind.name(),
            self.seed,
            if self.full_scale { "full" } else { "desk" }
        )
    }

    /// Linear market with the experiment's default box; validated by the
    /// caller.
    pub fn market(&self) -> MarketParams {
        let m = &self.cfg.market;
        let (lo, hi) = default_box(self.kind);
        MarketParams {
            a: m.a.unwrap_or(1.0),
            b: m.b.unwrap_or(1.0),
            c: m.c.unwrap_or(0.5),
            n_firms: m.n_firms.unwrap_or(2),
            p_min: m.p_min.unwrap_or(lo),
            p_max: m.p_max.unwrap_or(hi),
        }
    }

    pub fn n_runs(&self) -> usize {
        if self.full_scale {
            return FULL_RUNS;
        }
        let desk = match self.kind {
            ExperimentKind::Histogram => DESK_HISTOGRAM_RUNS,
            _ => DESK_RUNS,
        };
        self.cfg.settings.n_runs.unwrap_or(desk)
    }

    pub fn inner_draws(&self) -> usize {
        if self.full_scale {
            FULL_INNER_DRAWS
        } else {
            self.cfg.settings.inner_draws.unwrap_or(DESK_INNER_DRAWS)
        }
    }

    pub fn log_time_step(&self) -> f64 {
        self.cfg.settings.log_time_step.unwrap_or(1e-3)
    }

    pub fn bins(&self) -> usize {
        self.cfg.settings.bins.unwrap_or(misprice_core::sim::DEFAULT_BINS)
    }

    pub fn exploration_family(&self) -> Family {
        self.cfg.settings.exploration_family.unwrap_or_default()
    }

    pub fn shock_family(&self) -> Family {
        self.cfg.settings.shock_family.unwrap_or_default()
    }

    fn check_settings(&self) -> Result<(), SweepError> {
        let s = &self.cfg.settings;
        let bad = |m: &str| Err(SweepError::Config(m.to_string()));
        if self.n_runs() == 0 {
            return bad("n_runs >= 1 required");
        }
        if self.inner_draws() == 0 {
            return bad("inner_draws >= 1 required");
        }
        if s.n_samples == Some(0) {
            return bad("n_samples >= 1 required");
        }
        if self.bins() == 0 {
            return bad("bins >= 1 required");
        }
        if !(self.log_time_step() > 0.0 && self.log_time_step() <= 0.1) {
            return bad("log_time_step must lie in (0, 0.1]");
        }
        if let Some(w) = s.band_half_width {
            if !(w > 0.0 && w < 1.0) {
                return bad("band_half_width must lie in (0, 1)");
            }
        }
        if let Some(x) = s.share_noise {
            if !(x >= 0.0) {
                return bad("share_noise >= 0 required");
            }
        }
        Ok(())
    }
}

/// Rows produced by one cell.
pub(crate) struct CellRows {
    pub rows: Vec<Vec<String>>,
    pub failed: bool,
}

impl CellRows {
    pub fn ok(rows: Vec<Vec<String>>) -> Self {
        CellRows {
            rows,
            failed: false,
        }
    }

    pub fn failed(rows: Vec<Vec<String>>) -> Self {
        CellRows { rows, failed: true }
    }
}

/// Evaluates `cells` in parallel and appends their rows to `table` in cell
/// order. Returns the number of failed cells.
pub(crate) fn run_cells<C: Sync>(
    cells: &[C],
    table: &mut Table,
    f: impl Fn(usize, &C) -> CellRows + Sync,
) -> usize {
    let results: Vec<CellRows> = cells
        .par_iter()
        .enumerate()
        .map(|(i, c)| f(i, c))
        .collect();
    let mut failed = 0;
    for r in results {
        failed += r.failed as usize;
        for row in r.rows {
            table.push(row);
        }
    }
    failed
}

pub(crate) fn config_error(e: misprice_core::Error) -> SweepError {
    SweepError::Config(e.to_string())
}

pub(crate) fn output(
    ctx: &Ctx,
    files: Vec<(String, String)>,
    n_cells: usize,
    n_cell_errors: usize,
) -> ExperimentOutput {
    ExperimentOutput {
        kind: ctx.kind,
        seed: ctx.seed,
        files,
        n_cells,
        n_cell_errors,
    }
}

/// A row of parameter values, empty result fields and an error message.
pub(crate) fn error_row(params: Vec<String>, width: usize, msg: &str) -> Vec<String> {
    let mut row = params;
    row.resize(width - 1, String::new());
    row.push(msg.to_string());
    row
}

fn resolve_workers(cfg: &SweepConfig, opts: &RunOptions) -> Result<usize, SweepError> {
    workers_from(opts.workers.or(cfg.workers), std::env::var("MISPRICE_WORKERS").ok())
}

fn workers_from(explicit: Option<usize>, env: Option<String>) -> Result<usize, SweepError> {
    if let Some(w) = explicit {
        return if w == 0 {
            Err(SweepError::Config("workers >= 1 required".into()))
        } else {
            Ok(w)
        };
    }
    match env {
        Some(text) => match text.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(w),
            _ => Err(SweepError::Config(format!(
                "MISPRICE_WORKERS must be a positive integer, got {text:?}"
            ))),
        },
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs one experiment and returns its files. Cell failures are reported in
/// the rows and counted; configuration problems are returned as errors
/// before any cell runs.
pub fn run_experiment(
    kind: ExperimentKind,
    cfg: &SweepConfig,
    opts: &RunOptions,
) -> Result<ExperimentOutput, SweepError> {
    let ctx = Ctx::new(kind, cfg, opts)?;
    ctx.check_settings()?;
    let workers = resolve_workers(cfg, opts)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SweepError::Config(e.to_string()))?;
    pool.install(|| {
        use ExperimentKind::*;
        match kind {
            OdeHeatmap => linear::ode_heatmap(&ctx),
            StochHeatmap => linear::stoch_heatmap(&ctx),
            Histogram => linear::histogram(&ctx),
            SymmetricCurve => linear::symmetric_curve(&ctx),
            ConeProb => appendix::cone_prob(&ctx),
            IntervalSweep => appendix::interval_sweep(&ctx),
            CenterSweep => appendix::center_sweep(&ctx),
            LogitSweep | LogitTime => logit::logit(&ctx),
        }
    })
}
