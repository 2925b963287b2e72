//! The `misprice` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use crate::experiments::{axis_names, output_columns};
use crate::{run_experiment, ExperimentKind, RunOptions, SweepConfig, SweepError};

pub const EXIT_IO: u8 = 1;
pub const EXIT_CELL_ERRORS: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;

/// Explore-then-exploit pricing experiments: parameter sweeps written as CSV.
#[derive(Parser)]
#[command(name = "misprice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML, or JSON by extension).
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: config `out`, then out/<experiment>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: config `workers`, then MISPRICE_WORKERS,
    /// then all cores].
    #[arg(long)]
    workers: Option<usize>,
    /// Root seed, replacing the config's.
    #[arg(long)]
    seed: Option<u64>,
    /// Full-scale run counts (2500 runs per stochastic cell, 100 inner
    /// draws) instead of the desk-scale defaults.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Terminal ODE prices over a duopoly grid of exploration means.
    OdeHeatmap(Common),
    /// Ensemble-mean terminal prices of the stochastic pipeline over a grid.
    StochHeatmap(Common),
    /// Terminal-price histograms of the stochastic pipeline at chosen points.
    Histogram(Common),
    /// Terminal price of symmetric exploration against its closed-form limit.
    SymmetricCurve(Common),
    /// Cone probability bound and Monte Carlo estimate.
    ConeProb(Common),
    /// Mean terminal ODE price under interval sampling of exploration means.
    IntervalSweep(Common),
    /// Mean terminal ODE price under center-dispersion sampling.
    CenterSweep(Common),
    /// Terminal price changes of the calibrated logit pipeline over m.
    LogitSweep(Common),
    /// Terminal price changes of the calibrated logit pipeline over T.
    LogitTime(Common),
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        use ExperimentKind as K;
        match self {
            Command::OdeHeatmap(c) => (K::OdeHeatmap, c),
            Command::StochHeatmap(c) => (K::StochHeatmap, c),
            Command::Histogram(c) => (K::Histogram, c),
            Command::SymmetricCurve(c) => (K::SymmetricCurve, c),
            Command::ConeProb(c) => (K::ConeProb, c),
            Command::IntervalSweep(c) => (K::IntervalSweep, c),
            Command::CenterSweep(c) => (K::CenterSweep, c),
            Command::LogitSweep(c) => (K::LogitSweep, c),
            Command::LogitTime(c) => (K::LogitTime, c),
        }
    }
}

fn columns_help(kind: ExperimentKind) -> String {
    let mut text = format!("Axes: {}\n\nOutput files:\n", axis_names(kind).join(", "));
    for (file, cols) in output_columns(kind) {
        text += &format!("  {file}: {}\n", cols.join(","));
    }
    if matches!(kind, ExperimentKind::LogitSweep | ExperimentKind::LogitTime) {
        text += "  market.json: the calibrated market\n";
        text += "  market_summary.json: shadow-cost ratios and joint-monopoly price changes\n";
    }
    text += "\nEvery CSV starts with a `# experiment=... seed=... scale=...` line. \
             Failed cells keep their parameter columns and carry the message in `error`.\n\
             Exit codes: 0 success, 1 I/O failure, 2 some cell failed, 3 config error.";
    text
}

fn write_files(dir: &Path, files: &[(String, String)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, contents) in files {
        std::fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

/// Parses `args` (program name first), runs the experiment, writes its
/// files and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut cmd = Cli::command();
    for kind in ExperimentKind::ALL {
        cmd = cmd.mut_subcommand(kind.name(), |c| c.after_help(columns_help(kind)));
    }
    let cli = match cmd
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_CONFIG
            } else {
                0
            };
        }
    };
    let (kind, args) = cli.command.split();
    let cfg = match SweepConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("misprice: {e}");
            return EXIT_CONFIG;
        }
    };
    let opts = RunOptions {
        seed: args.seed,
        full_scale: args.full_scale,
        workers: args.workers,
    };
    let out = match run_experiment(kind, &cfg, &opts) {
        Ok(out) => out,
        Err(SweepError::Config(m)) => {
            eprintln!("misprice: config error: {m}");
            return EXIT_CONFIG;
        }
        Err(e) => {
            eprintln!("misprice: {e}");
            return EXIT_IO;
        }
    };
    let dir = args
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| Path::new("out").join(kind.name()));
    if let Err(e) = write_files(&dir, &out.files) {
        eprintln!("misprice: writing {}: {e}", dir.display());
        return EXIT_IO;
    }
    eprintln!(
        "{}: seed {}, {} cells, {} failed; wrote {} file(s) to {}",
        kind.name(),
        out.seed,
        out.n_cells,
        out.n_cell_errors,
        out.files.len(),
        dir.display()
    );
    if out.n_cell_errors > 0 {
        EXIT_CELL_ERRORS
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::parse_csv;

    fn misprice(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> u8 {
        let path = dir.join("cfg.toml");
        std::fs::write(&path, config).unwrap();
        let out = dir.join("out");
        let mut args: Vec<OsString> = vec!["misprice".into(), sub.into(), "--config".into()];
        args.extend([path.into_os_string(), "--out".into(), out.into_os_string()]);
        args.extend(extra.iter().map(OsString::from));
        run(args)
    }

    fn read(dir: &Path, file: &str) -> (String, Vec<Vec<String>>) {
        let text = std::fs::read_to_string(dir.join("out").join(file)).unwrap();
        let first = text.lines().next().unwrap().to_string();
        (first, parse_csv(&text).unwrap().1)
    }

    const SMALL_HEATMAP: &str = r#"
experiment = "ode-heatmap"
seed = 5
[market]
p_max = 1.3333333333333333
[axes]
sigma_exp = [0.05]
mu1 = [0.5, 0.9, 1.1]
mu2 = [0.5, 0.9, 1.1]
tau = [100]
"#;

    #[test]
    fn heatmap_diagonal_is_symmetric_and_upper_cone_is_supra_competitive() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(misprice(dir.path(), "ode-heatmap", SMALL_HEATMAP, &["--workers", "2"]), 0);
        let (header, rows) = read(dir.path(), "ode_heatmap.csv");
        assert_eq!(header, "# experiment=ode-heatmap seed=5 scale=desk");
        assert_eq!(rows.len(), 9);
        assert!(rows.iter().any(|r| r[6] == "upper") && rows.iter().any(|r| r[6] == "lower"));
        for r in &rows {
            let f = |k: usize| r[k].parse::<f64>().unwrap();
            if r[0] == r[1] {
                assert!((f(4) - f(5)).abs() < 1e-12, "{r:?}");
            }
            if r[6] == "upper" {
                assert!(f(4) > 2.0 / 3.0 && f(5) > 2.0 / 3.0, "{r:?}");
            }
        }
    }

    #[test]
    fn seed_flag_overrides_config_and_worker_count_does_not_matter() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("out/ode_heatmap.csv");
        misprice(dir.path(), "ode-heatmap", SMALL_HEATMAP, &["--seed", "9", "--workers", "1"]);
        let one = std::fs::read(&file).unwrap();
        misprice(dir.path(), "ode-heatmap", SMALL_HEATMAP, &["--seed", "9", "--workers", "3"]);
        let three = std::fs::read(&file).unwrap();
        assert_eq!(one, three);
        assert!(String::from_utf8(one).unwrap().starts_with("# experiment=ode-heatmap seed=9 "));
    }

    #[test]
    fn interval_means_above_a_tight_band_end_above_nash() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = r#"
experiment = "interval-sweep"
seed = 1
[market]
p_max = 1.0
[axes]
n_firms = [4]
sigma_exp = [0.1]
tau = [100]
lower = [0.8]
upper = [0.9]
[settings]
inner_draws = 3
"#;
        assert_eq!(misprice(dir.path(), "interval-sweep", cfg, &["--workers", "1"]), 0);
        let (_, rows) = read(dir.path(), "interval_sweep.csv");
        assert_eq!(rows.len(), 1);
        let min: f64 = rows[0][7].parse().unwrap();
        assert!(min > 0.6, "{:?}", rows[0]);
    }

    #[test]
    fn cell_errors_exit_two_and_keep_their_row() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = r#"
experiment = "interval-sweep"
[market]
p_max = 1.0
[axes]
n_firms = [3]
sigma_exp = [0.1]
tau = [10]
lower = [0.5]
upper = [0.9, 1.2]
[settings]
inner_draws = 2
"#;
        assert_eq!(misprice(dir.path(), "interval-sweep", cfg, &["--workers", "1"]), EXIT_CELL_ERRORS);
        let (_, rows) = read(dir.path(), "interval_sweep.csv");
        assert_eq!(rows.len(), 2);
        assert!(rows[0].last().unwrap().is_empty());
        assert!(rows[1].last().unwrap().contains("box"), "{:?}", rows[1]);
    }

    #[test]
    fn config_problems_exit_three() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let unknown = "experiment = \"ode-heatmap\"\nbogus = 1\n";
        assert_eq!(misprice(d, "ode-heatmap", unknown, &[]), EXIT_CONFIG);
        assert_eq!(misprice(d, "cone-prob", SMALL_HEATMAP, &["--workers", "1"]), EXIT_CONFIG);
        let bad_axis = "experiment = \"ode-heatmap\"\n[axes]\nzeta = [1]\n";
        assert_eq!(misprice(d, "ode-heatmap", bad_axis, &["--workers", "1"]), EXIT_CONFIG);
        assert_eq!(misprice(d, "ode-heatmap", SMALL_HEATMAP, &["--workers", "x"]), EXIT_CONFIG);
        assert_eq!(misprice(d, "ode-heatmap", SMALL_HEATMAP, &["--workers", "0"]), EXIT_CONFIG);
        assert!(!d.join("out").exists());
    }
}
