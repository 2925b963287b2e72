use misprice_core::logit::{
    calibrate_lambda, calibrate_xi, monopoly_solve, run_calibrated_pipeline, synth_market,
    LogitMarket, PipelineConfig, SolverConfig,
};
use misprice_core::seeds;
use misprice_core::stats::quantiles;

use super::{error_row, output, run_cells, CellRows, Ctx, ExperimentOutput};
use crate::config::ExperimentKind;
use crate::grid::cartesian;
use crate::table::{num, Table};
use crate::SweepError;

pub const LOGIT_COLUMNS: [&str; 11] = [
    "m",
    "sigma",
    "sigma_nu",
    "k_explore",
    "t_exploit",
    "p10",
    "p50",
    "p90",
    "mean_delta_pct",
    "clamp_events",
    "error",
];

/// The configured market file, calibrated when its shadow costs are unset;
/// otherwise a synthetic market.
pub(crate) fn load_market(ctx: &Ctx) -> Result<LogitMarket, SweepError> {
    let bad = |e: misprice_core::Error| SweepError::Config(format!("logit market: {e}"));
    match &ctx.cfg.market_file {
        Some(path) => {
            let mut m = LogitMarket::from_json_file(path)
                .map_err(|e| SweepError::Config(format!("{}: {e}", path.display())))?;
            if m.products.iter().any(|p| !(p.lambda > 0.0)) {
                calibrate_xi(&mut m, 1e-12, 10_000).map_err(bad)?;
                calibrate_lambda(&mut m).map_err(bad)?;
            }
            Ok(m)
        }
        None => {
            let synth = ctx.cfg.synth.clone().unwrap_or_default();
            synth_market(&synth, ctx.cfg.synth_seed.unwrap_or(ctx.seed)).map_err(bad)
        }
    }
}

fn delta_quartiles(market: &LogitMarket, prices: &[f64]) -> serde_json::Value {
    let d: Vec<f64> = prices
        .iter()
        .zip(&market.p0)
        .map(|(p, p0)| 100.0 * (p / p0 - 1.0))
        .collect();
    let q = quantiles(&d, &[0.1, 0.5, 0.9]);
    serde_json::json!({ "p10": q[0], "p50": q[1], "p90": q[2] })
}

fn market_summary(ctx: &Ctx, market: &LogitMarket) -> serde_json::Value {
    let ratios: Vec<f64> = market
        .products
        .iter()
        .zip(&market.p0)
        .map(|(p, p0)| p.lambda / p0)
        .collect();
    let q = quantiles(&ratios, &[0.25, 0.5, 0.75]);
    let monopoly = match monopoly_solve(market, &market.p0, &SolverConfig::default()) {
        Ok(p) => delta_quartiles(market, &p),
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    };
    serde_json::json!({
        "experiment": ctx.kind.name(),
        "seed": ctx.seed,
        "n_products": market.n_products(),
        "n_households": market.households.len(),
        "price_ceiling": market.ceiling(),
        "lambda_over_p0": { "q25": q[0], "q50": q[1], "q75": q[2] },
        "monopoly_delta_pct": monopoly,
    })
}

pub(crate) fn logit(ctx: &Ctx) -> Result<ExperimentOutput, SweepError> {
    let market = load_market(ctx)?;
    let cells = cartesian(&ctx.ordered_axes());
    // (k, t, sigma, sigma_nu, m) for the sweep, (k, m, sigma, sigma_nu, t) over time
    let unpack = |c: &[f64]| match ctx.kind {
        ExperimentKind::LogitTime => (c[0] as usize, c[4] as usize, c[2], c[3], c[1]),
        _ => (c[0] as usize, c[1] as usize, c[2], c[3], c[4]),
    };
    // every cell shares one random stream, so curves differ only by their
    // parameters
    let seed = seeds::derive(ctx.seed, &[ctx.kind.id()]);
    let share_noise = ctx.cfg.settings.share_noise.unwrap_or(0.0);
    let mut table = Table::new(&LOGIT_COLUMNS);
    let width = LOGIT_COLUMNS.len();
    let errors = run_cells(&cells, &mut table, |_, c| {
        let (k, t, sigma, sigma_nu, m) = unpack(c);
        let lead = vec![
            num(m),
            num(sigma),
            num(sigma_nu),
            k.to_string(),
            t.to_string(),
        ];
        let cfg = PipelineConfig {
            m,
            sigma,
            sigma_nu,
            k_explore: k,
            t_exploit: t,
            seed,
            share_noise,
        };
        match run_calibrated_pipeline(&market, &cfg) {
            Ok(r) => {
                let mean = r.delta_pct.iter().sum::<f64>() / r.delta_pct.len() as f64;
                let mut row = lead;
                row.extend([
                    num(r.percentiles[0]),
                    num(r.percentiles[1]),
                    num(r.percentiles[2]),
                    num(mean),
                    r.clamp_events.to_string(),
                    String::new(),
                ]);
                CellRows::ok(vec![row])
            }
            Err(e) => CellRows::failed(vec![error_row(lead, width, &e.to_string())]),
        }
    });
    let stem = ctx.kind.name().replace('-', "_");
    let market_json = market
        .to_json_string()
        .map_err(|e| SweepError::Io(std::io::Error::other(e)))?;
    let summary = serde_json::to_string_pretty(&market_summary(ctx, &market))
        .map_err(|e| SweepError::Io(std::io::Error::other(e)))?;
    let files = vec![
        (format!("{stem}.csv"), table.to_csv(&ctx.header())?),
        ("market.json".into(), market_json + "\n"),
        ("market_summary.json".into(), summary + "\n"),
    ];
    Ok(output(ctx, files, cells.len(), errors))
}
