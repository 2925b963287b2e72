//! Experiment configuration documents (TOML or JSON).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use misprice_core::logit::SynthConfig;
use misprice_core::sim::Family;
use serde::{Deserialize, Serialize};

use crate::grid::Axis;
use crate::SweepError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    OdeHeatmap,
    StochHeatmap,
    Histogram,
    SymmetricCurve,
    ConeProb,
    IntervalSweep,
    CenterSweep,
    LogitSweep,
    LogitTime,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::OdeHeatmap,
        ExperimentKind::StochHeatmap,
        ExperimentKind::Histogram,
        ExperimentKind::SymmetricCurve,
        ExperimentKind::ConeProb,
        ExperimentKind::IntervalSweep,
        ExperimentKind::CenterSweep,
        ExperimentKind::LogitSweep,
        ExperimentKind::LogitTime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::OdeHeatmap => "ode-heatmap",
            ExperimentKind::StochHeatmap => "stoch-heatmap",
            ExperimentKind::Histogram => "histogram",
            ExperimentKind::SymmetricCurve => "symmetric-curve",
            ExperimentKind::ConeProb => "cone-prob",
            ExperimentKind::IntervalSweep => "interval-sweep",
            ExperimentKind::CenterSweep => "center-sweep",
            ExperimentKind::LogitSweep => "logit-sweep",
            ExperimentKind::LogitTime => "logit-time",
        }
    }

    /// Seed-path component of the experiment.
    pub fn id(self) -> u64 {
        Self::ALL.iter().position(|&k| k == self).unwrap() as u64 + 1
    }
}

/// Linear-market overrides; unset fields take the experiment's defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub n_firms: Option<usize>,
    pub p_min: Option<f64>,
    pub p_max: Option<f64>,
}

/// Run-size and numerical settings. Unset fields take per-experiment
/// defaults; see [`crate::experiments`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Pipelines per stochastic cell.
    pub n_runs: Option<usize>,
    /// Exploration-mean draws averaged per interval/center cell.
    pub inner_draws: Option<usize>,
    /// Monte Carlo samples per cone-probability cell.
    pub n_samples: Option<u64>,
    pub log_time_step: Option<f64>,
    /// Histogram bins over `[p_min, p_max]`.
    pub bins: Option<usize>,
    pub exploration_family: Option<Family>,
    pub shock_family: Option<Family>,
    /// `(mu1, mu2)` points of the histogram experiment.
    pub points: Option<Vec<[f64; 2]>>,
    /// Terminal prices below this count as Nash-adjacent.
    pub mode_split: Option<f64>,
    /// Least smoothed-peak mass for a histogram mode.
    pub min_peak_frac: Option<f64>,
    /// Half-width of the cone-probability price box relative to `p_NE`.
    pub band_half_width: Option<f64>,
    /// Log-sd of observed-share noise in the logit pipeline.
    pub share_noise: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Must match the subcommand when present.
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub market: MarketSpec,
    /// Logit market JSON; relative paths resolve against the config file.
    pub market_file: Option<PathBuf>,
    /// Synthetic logit market used when no `market_file` is given.
    pub synth: Option<SynthConfig>,
    pub synth_seed: Option<u64>,
    #[serde(default)]
    pub axes: BTreeMap<String, Axis>,
    #[serde(default)]
    pub settings: Settings,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SweepError> {
        toml::from_str(text).map_err(|e| SweepError::Config(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self, SweepError> {
        serde_json::from_str(text).map_err(|e| SweepError::Config(e.to_string()))
    }

    /// Reads a `.json` or TOML document. A relative `market_file` is
    /// rebased onto the config's directory.
    pub fn load(path: &Path) -> Result<Self, SweepError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SweepError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
        .map_err(|e| SweepError::Config(format!("{}: {e}", path.display())))?;
        if let (Some(file), Some(dir)) = (&cfg.market_file, path.parent()) {
            if file.is_relative() {
                cfg.market_file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }
}
