use serde::Serialize;

use super::{
    AppError, BoundsArg, CalibrateArgs, Cli, Context, DecodeArgs, DiagnoseArgs, DumpTableArgs,
    Output, PayoffArg, PriceArgs, SamplerArg, SimArgs, SynthArgs,
};
use crate::copula::{
    calibrate_atm_flat_correlation, skew_rows, CopulaEngine, CopulaSpec, Sampler, SkewRow,
};
use crate::corrfam::{
    build_table, default_shift, CenterSpec, CorrelationFamily, CorrelationMatrix,
};
use crate::dupire::{FloorCounts, GridSpec, LocalVolParams, LocalVolSurface};
use crate::error::Error;
use crate::lcm::{
    average_correlation, correlation_by_strike, price_european, write_correlation_csv,
    BoundsPolicy, CorrelationMode, CorrelationRow, LcmModel, PathCube, Payoff, SimulationConfig,
};
use crate::marketdata::{implied_vol, load_snapshot, save_snapshot, MarketSnapshot};
use crate::synth::{synthesize, Generator, SynthRecipe};

fn snapshot(cli: &Cli) -> Result<MarketSnapshot, AppError> {
    let path = cli
        .input
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("--input <snapshot> is required".into()))
        .context("reading snapshot")?;
    load_snapshot(path).context(format!("loading {}", path.display()))
}

fn family(center: &str, n: usize) -> Result<CorrelationFamily, AppError> {
    let spec = CenterSpec::parse(center).context("parsing --center")?;
    let m = spec.build(n).context("building center matrix")?;
    Ok(CorrelationFamily::new(m))
}

pub(super) fn synth(cli: &Cli, args: &SynthArgs, out: &Output) -> Result<Vec<String>, AppError> {
    let path = cli
        .input
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("--input <recipe> is required".into()))
        .context("reading recipe")?;
    let raw = std::fs::read_to_string(path)
        .map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })
        .context("reading recipe")?;
    let mut recipe: SynthRecipe = serde_json::from_str(&raw)
        .map_err(|e| Error::Schema(e.to_string()))
        .context(format!("parsing {}", path.display()))?;
    if let Some(seed) = cli.seed {
        recipe.seed = seed;
    }
    if recipe.generator == Generator::CopulaConsistent && recipe.n_assets > 1 {
        let center = recipe
            .correlation
            .build(recipe.n_assets)
            .context("building recipe correlation")?;
        // negative entries let the copula index fall under the
        // independent-basket variance
        if center.min_off_diagonal() < 0.0 {
            return Err(Error::InvalidInput(format!(
                "copula-consistent index with correlation {:.4} breaks the lower dispersion bound",
                center.min_off_diagonal()
            )))
            .context("checking recipe bounds");
        }
    }
    let snap = synthesize(&recipe).context("synthesizing snapshot")?;
    save_snapshot(&snap, out.path(&args.out)).context("writing snapshot")?;
    log::info!("wrote {} with {} assets", args.out, snap.n_assets());
    Ok(vec![args.out.clone()])
}

#[derive(Serialize)]
struct DecodeRun {
    label: String,
    correlation: Vec<Vec<f64>>,
    max_gap_vol_points: f64,
    consistent: bool,
    rows: Vec<DecodeRow>,
}

#[derive(Serialize)]
struct DecodeRow {
    #[serde(flatten)]
    row: SkewRow,
    gap_vol_points: f64,
}

#[derive(Serialize)]
struct DecodeReport {
    maturity: f64,
    tolerance_vol_points: f64,
    calibrated_flat_correlation: Option<f64>,
    consistent: bool,
    runs: Vec<DecodeRun>,
}

pub(super) fn decode(
    cli: &Cli,
    args: &DecodeArgs,
    seed: u64,
    out: &Output,
) -> Result<Vec<String>, AppError> {
    let snap = snapshot(cli)?;
    let n = snap.n_assets();
    let sampler = match args.sampler {
        SamplerArg::Sobol => Sampler::Sobol,
        SamplerArg::PseudoRandom => Sampler::PseudoRandom,
    };
    let base = CopulaSpec::new(CorrelationMatrix::identity(n), args.samples, sampler, seed)
        .context("configuring copula")?;
    let mut calibrated = None;
    let mut runs: Vec<(String, CorrelationMatrix)> = Vec::new();
    if let Some(c) = &args.center {
        let m = CenterSpec::parse(c)
            .and_then(|s| s.build(n))
            .context("building --center")?;
        runs.push((c.clone(), m));
    } else if !args.rho.is_empty() {
        for &rho in &args.rho {
            let m = CorrelationMatrix::flat(n, rho).context("building flat correlation")?;
            runs.push((format!("flat:{rho}"), m));
        }
    } else if n > 1 {
        let rho = calibrate_atm_flat_correlation(&snap, &base, args.maturity)
            .context("calibrating flat correlation")?;
        log::info!("at-the-money flat correlation {rho:.6}");
        calibrated = Some(rho);
        runs.push((
            format!("flat:{rho}"),
            CorrelationMatrix::flat(n, rho).context("building flat correlation")?,
        ));
    } else {
        runs.push(("identity".into(), CorrelationMatrix::identity(1)));
    }

    let mut report = DecodeReport {
        maturity: args.maturity,
        tolerance_vol_points: args.tolerance,
        calibrated_flat_correlation: calibrated,
        consistent: true,
        runs: Vec::new(),
    };
    for (label, m) in runs {
        let engine = CopulaEngine::new(&snap, &base.with_correlation(m.clone()), args.maturity)
            .context(format!("sampling copula {label}"))?;
        let rows = skew_rows(&snap, &engine, &args.strikes).context("pricing copula skew")?;
        let rows: Vec<DecodeRow> = rows
            .into_iter()
            .map(|row| DecodeRow {
                gap_vol_points: 100.0 * (row.market_vol - row.copula_vol),
                row,
            })
            .collect();
        let max_gap = rows
            .iter()
            .map(|r| r.gap_vol_points.abs())
            .fold(0.0, f64::max);
        let consistent = max_gap <= args.tolerance;
        report.consistent &= consistent;
        report.runs.push(DecodeRun {
            label,
            correlation: m.to_rows(),
            max_gap_vol_points: max_gap,
            consistent,
            rows,
        });
    }
    if !report.consistent {
        log::warn!("index smile is not reproduced by the copula");
    }
    out.with_writer("decode.csv", |w| {
        use std::io::Write;
        writeln!(
            w,
            "correlation,moneyness,strike,market_vol,copula_vol,gap_vol_points,copula_price,std_error"
        )?;
        for run in &report.runs {
            for r in &run.rows {
                let s = &r.row;
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    run.label,
                    s.moneyness,
                    s.strike,
                    s.market_vol,
                    s.copula_vol,
                    r.gap_vol_points,
                    s.copula_price,
                    s.std_error
                )?;
            }
        }
        Ok(())
    })?;
    out.json("decode.json", &report)?;
    Ok(vec!["decode.csv".into(), "decode.json".into()])
}

#[derive(Serialize)]
struct CalibrateEntry {
    id: String,
    file: String,
    floors: FloorCounts,
}

pub(super) fn calibrate(
    cli: &Cli,
    args: &CalibrateArgs,
    out: &Output,
) -> Result<Vec<String>, AppError> {
    let snap = snapshot(cli)?;
    let horizon = args
        .horizon
        .unwrap_or_else(|| *snap.index.vol_surface.maturities().last().unwrap_or(&1.0));
    if !(horizon > 0.0) || args.steps_per_year == 0 {
        return Err(Error::InvalidInput(
            "horizon and steps per year must be positive".into(),
        ))
        .context("building time grid");
    }
    let steps = (horizon * args.steps_per_year as f64).ceil() as usize;
    let times: Vec<f64> = (0..=steps)
        .map(|i| horizon * i as f64 / steps as f64)
        .collect();
    let spec = GridSpec {
        nodes: args.nodes,
        width_sd: args.width,
    };
    let params = LocalVolParams::default();
    let mut surfaces = Vec::new();
    for i in 0..snap.n_assets() {
        let cs = snap
            .asset_call_surface(i)
            .context(format!("asset {}", snap.assets[i].id))?;
        surfaces.push(LocalVolSurface::new(&snap.assets[i].id, cs, params));
    }
    let cs = snap.index_call_surface().context("index surface")?;
    surfaces.push(LocalVolSurface::new(&snap.index.id, cs, params));

    let mut entries = Vec::new();
    let mut files = Vec::new();
    for lv in &surfaces {
        let grid = lv.grid(&times, spec);
        let file = format!("localvol_{}.csv", lv.id());
        out.with_writer(&file, |w| grid.write_csv(w))?;
        entries.push(CalibrateEntry {
            id: lv.id().to_string(),
            file: file.clone(),
            floors: lv.floor_counts(),
        });
        files.push(file);
    }
    out.json(
        "calibrate.json",
        &serde_json::json!({"horizon": horizon, "times": times.len(), "surfaces": entries}),
    )?;
    files.push("calibrate.json".into());
    Ok(files)
}

fn sim_config(sim: &SimArgs, dates: &[f64], seed: u64) -> Result<SimulationConfig, AppError> {
    let mut cfg = SimulationConfig::new(sim.paths, dates, sim.steps_per_year, seed)
        .context("building simulation grid")?;
    cfg.states = sim.states;
    cfg.shift = sim.shift;
    cfg.bounds_policy = match sim.bounds_policy {
        BoundsArg::Clamp => BoundsPolicy::Clamp,
        BoundsArg::Strict => BoundsPolicy::Strict,
    };
    if sim.exact {
        cfg.mode = CorrelationMode::Exact;
    }
    Ok(cfg)
}

fn run_lcm(
    snap: &MarketSnapshot,
    sim: &SimArgs,
    maturity: f64,
    seed: u64,
) -> Result<PathCube, AppError> {
    let fam = family(&sim.center, snap.n_assets())?;
    let cfg = sim_config(sim, &[maturity], seed)?;
    let model = LcmModel::calibrate(snap, fam, cfg.local_vol).context("calibrating local vols")?;
    model.simulate(&cfg).context("simulating paths")
}

// the index simulated on its own local vol, as a one-asset model
fn run_index_alone(
    snap: &MarketSnapshot,
    sim: &SimArgs,
    maturity: f64,
    seed: u64,
) -> Result<PathCube, AppError> {
    let cfg = sim_config(sim, &[maturity], seed)?;
    let cs = snap.index_call_surface().context("index surface")?;
    let lv = LocalVolSurface::new(&snap.index.id, cs, cfg.local_vol);
    let fwd = snap.index_forward();
    let model = LcmModel {
        assets: vec![lv.clone()],
        index: lv,
        forwards: vec![fwd.clone()],
        index_forward: fwd,
        weights: vec![1.0],
        spots: vec![snap.index.spot],
        family: CorrelationFamily::new(CorrelationMatrix::identity(1)),
        discount: snap.discount_curve.clone(),
    };
    model.simulate(&cfg).context("simulating index")
}

#[derive(Serialize)]
struct PriceRow {
    moneyness: f64,
    strike: f64,
    price: f64,
    std_error: f64,
    /// Black vol of the simulated price, index options only.
    implied_vol: Option<f64>,
    market_vol: Option<f64>,
    conditioned_correlation: Option<f64>,
}

#[derive(Serialize)]
struct PriceReport {
    payoff: PayoffArg,
    maturity: f64,
    paths: usize,
    center: String,
    index_as_asset: bool,
    average_correlation: f64,
    clamp_fraction: f64,
    violation_fraction: f64,
    table_shift: f64,
    results: Vec<PriceRow>,
}

pub(super) fn price(
    cli: &Cli,
    args: &PriceArgs,
    seed: u64,
    out: &Output,
) -> Result<Vec<String>, AppError> {
    let snap = snapshot(cli)?;
    let t = args.maturity;
    let cube = if args.index_as_asset {
        if args.payoff == PayoffArg::WorstOfPut {
            return Err(Error::InvalidInput(
                "--index-as-asset prices index options only".into(),
            ))
            .context("checking payoff");
        }
        run_index_alone(&snap, &args.sim, t, seed)?
    } else {
        run_lcm(&snap, &args.sim, t, seed)?
    };
    let index = snap.index_call_surface().context("index surface")?;
    let (fwd, df) = (index.forward(t), index.discount(t));
    let mut rows = Vec::new();
    for &m in &args.strikes {
        let strike = match args.payoff {
            PayoffArg::WorstOfPut => m,
            _ => m * snap.index.spot,
        };
        let payoff = match args.payoff {
            PayoffArg::IndexCall => Payoff::IndexCall {
                maturity: t,
                strike,
            },
            PayoffArg::IndexPut => Payoff::IndexPut {
                maturity: t,
                strike,
            },
            PayoffArg::WorstOfPut => Payoff::WorstOfPut {
                maturity: t,
                strike,
            },
        };
        let r = price_european(&cube, &payoff).context("pricing")?;
        // implied vol from the out-of-the-money side, which carries no
        // forward sampling error
        let call = match args.payoff {
            PayoffArg::WorstOfPut => None,
            _ if strike >= fwd => {
                let c = Payoff::IndexCall {
                    maturity: t,
                    strike,
                };
                Some(price_european(&cube, &c).context("pricing")?.price)
            }
            _ => {
                let p = Payoff::IndexPut {
                    maturity: t,
                    strike,
                };
                Some(price_european(&cube, &p).context("pricing")?.price + df * (fwd - strike))
            }
        };
        rows.push(PriceRow {
            moneyness: m,
            strike,
            price: r.price,
            std_error: r.std_error,
            implied_vol: call.and_then(|c| implied_vol(c, fwd, strike, t, df).ok()),
            market_vol: call.map(|_| index.implied_vol(t, strike)),
            conditioned_correlation: r.diagnostics.conditioned_correlation,
        });
    }
    let report = PriceReport {
        payoff: args.payoff,
        maturity: t,
        paths: args.sim.paths,
        center: args.sim.center.clone(),
        index_as_asset: args.index_as_asset,
        average_correlation: average_correlation(&cube, t).context("averaging correlation")?,
        clamp_fraction: cube.clamp_fraction(),
        violation_fraction: cube.violation_fraction(),
        table_shift: cube.table_shift,
        results: rows,
    };
    if report.violation_fraction > 0.0 {
        log::warn!(
            "dispersion bounds violated on {:.4}% of steps",
            100.0 * report.violation_fraction
        );
    }
    out.json("price.json", &report)?;
    out.with_writer("price.csv", |w| {
        use std::io::Write;
        writeln!(
            w,
            "moneyness,strike,price,std_error,implied_vol,market_vol,conditioned_correlation_pct"
        )?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &report.results {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.moneyness,
                r.strike,
                r.price,
                r.std_error,
                opt(r.implied_vol),
                opt(r.market_vol),
                opt(r.conditioned_correlation)
            )?;
        }
        Ok(())
    })?;
    Ok(vec!["price.json".into(), "price.csv".into()])
}

#[derive(Serialize)]
struct DiagnoseReport {
    maturity: f64,
    paths: usize,
    center: String,
    average_correlation: f64,
    /// Conditioned correlation strictly decreasing across the buckets.
    decreasing: bool,
    /// First bucket minus last bucket, in correlation points.
    low_high_gap: Option<f64>,
    mean_state_below_forward: f64,
    mean_state_above_forward: f64,
    clamp_fraction: f64,
    violation_fraction: f64,
    off_center_fraction: f64,
    rows: Vec<CorrelationRow>,
}

pub(super) fn diagnose(
    cli: &Cli,
    args: &DiagnoseArgs,
    seed: u64,
    out: &Output,
) -> Result<Vec<String>, AppError> {
    let snap = snapshot(cli)?;
    let cube = run_lcm(&snap, &args.sim, args.maturity, seed)?;
    let rows = correlation_by_strike(&cube, args.maturity, &args.moneyness).context("bucketing")?;
    let cond: Vec<Option<f64>> = rows.iter().map(|r| r.conditioned).collect();
    let decreasing = cond.windows(2).all(|w| match (w[0], w[1]) {
        (Some(a), Some(b)) => a > b,
        _ => false,
    });
    let low_high_gap = match (cond.first(), cond.last()) {
        (Some(Some(a)), Some(Some(b))) => Some(a - b),
        _ => None,
    };
    let (below, above) = cube.mean_state_by_side();
    let report = DiagnoseReport {
        maturity: args.maturity,
        paths: args.sim.paths,
        center: args.sim.center.clone(),
        average_correlation: average_correlation(&cube, args.maturity)
            .context("averaging correlation")?,
        decreasing,
        low_high_gap,
        mean_state_below_forward: below,
        mean_state_above_forward: above,
        clamp_fraction: cube.clamp_fraction(),
        violation_fraction: cube.violation_fraction(),
        off_center_fraction: cube.off_center_fraction(),
        rows,
    };
    out.with_writer("correlation.csv", |w| {
        write_correlation_csv(&report.rows, w)
    })?;
    out.json("diagnose.json", &report)?;
    Ok(vec!["correlation.csv".into(), "diagnose.json".into()])
}

pub(super) fn dump_table(
    cli: &Cli,
    args: &DumpTableArgs,
    out: &Output,
) -> Result<Vec<String>, AppError> {
    let n = match (args.assets, &cli.input) {
        (Some(n), _) => n,
        (None, Some(_)) => snapshot(cli)?.n_assets(),
        (None, None) => {
            return Err(Error::InvalidInput(
                "give --input <snapshot> or --assets <n>".into(),
            ))
            .context("sizing table")
        }
    };
    let fam = family(&args.center, n)?;
    let shift = args
        .shift
        .unwrap_or_else(|| default_shift(&fam, args.states));
    let table = build_table(&fam, args.states, shift).context("building table")?;
    out.with_writer("table.csv", |w| table.write_csv(w))?;
    let min_eig = table
        .entries()
        .iter()
        .map(|e| e.min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    out.json(
        "table.json",
        &serde_json::json!({
            "assets": n,
            "center": args.center,
            "states": table.len(),
            "shift": table.shift(),
            "min_state": table.min_state(),
            "max_state": table.max_state(),
            "min_eigenvalue": min_eig,
        }),
    )?;
    Ok(vec!["table.csv".into(), "table.json".into()])
}
