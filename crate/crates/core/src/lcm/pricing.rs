use std::io::Write;

use serde::{Deserialize, Serialize};

use super::engine::PathCube;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Payoff {
    IndexCall {
        maturity: f64,
        strike: f64,
    },
    IndexPut {
        maturity: f64,
        strike: f64,
    },
    /// `(K − min_i S_i(T)/S_i(0))⁺`, strike in units of initial spot.
    WorstOfPut {
        maturity: f64,
        strike: f64,
    },
    AssetCall {
        asset: usize,
        maturity: f64,
        strike: f64,
    },
    AssetPut {
        asset: usize,
        maturity: f64,
        strike: f64,
    },
}

impl Payoff {
    /// Parse the CLI payoff names.
    pub fn from_name(name: &str, maturity: f64, strike: f64) -> Result<Self> {
        match name {
            "index-call" => Ok(Payoff::IndexCall { maturity, strike }),
            "index-put" => Ok(Payoff::IndexPut { maturity, strike }),
            "worst-of-put" => Ok(Payoff::WorstOfPut { maturity, strike }),
            other => Err(Error::UnknownPayoff(other.to_string())),
        }
    }

    pub fn maturity(&self) -> f64 {
        match *self {
            Payoff::IndexCall { maturity, .. }
            | Payoff::IndexPut { maturity, .. }
            | Payoff::WorstOfPut { maturity, .. }
            | Payoff::AssetCall { maturity, .. }
            | Payoff::AssetPut { maturity, .. } => maturity,
        }
    }

    fn value(&self, cube: &PathCube, path: usize, date: usize) -> f64 {
        match *self {
            Payoff::IndexCall { strike, .. } => (cube.index_value(path, date) - strike).max(0.0),
            Payoff::IndexPut { strike, .. } => (strike - cube.index_value(path, date)).max(0.0),
            Payoff::WorstOfPut { strike, .. } => {
                let worst = cube
                    .slice(path, date)
                    .iter()
                    .zip(&cube.initial_spots)
                    .map(|(s, s0)| s / s0)
                    .fold(f64::INFINITY, f64::min);
                (strike - worst).max(0.0)
            }
            Payoff::AssetCall { asset, strike, .. } => {
                (cube.value(path, asset, date) - strike).max(0.0)
            }
            Payoff::AssetPut { asset, strike, .. } => {
                (strike - cube.value(path, asset, date)).max(0.0)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceDiagnostics {
    /// Mean off-diagonal correlation over paths and steps, in percent.
    pub average_correlation: f64,
    /// Same, over the paths that finish in the money, in percent.
    pub conditioned_correlation: Option<f64>,
    pub clamp_fraction: f64,
    pub violation_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceResult {
    pub price: f64,
    pub std_error: f64,
    pub diagnostics: PriceDiagnostics,
}

/// Discounted Monte Carlo mean of the payoff.
pub fn price_european(cube: &PathCube, payoff: &Payoff) -> Result<PriceResult> {
    let date = cube.date_position(payoff.maturity())?;
    if let Payoff::AssetCall { asset, .. } | Payoff::AssetPut { asset, .. } = *payoff {
        if asset >= cube.n_assets {
            return Err(Error::Dimension {
                expected: cube.n_assets,
                actual: asset + 1,
            });
        }
    }
    let n = cube.n_paths as f64;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for p in 0..cube.n_paths {
        let v = payoff.value(cube, p, date);
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n;
    let var = if cube.n_paths > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let df = cube.discount_factors[date];
    let conditioned = match *payoff {
        Payoff::IndexCall { .. } | Payoff::IndexPut { .. } | Payoff::WorstOfPut { .. } => {
            conditioned_average(cube, date, |p| payoff.value(cube, p, date) > 0.0)
        }
        _ => None,
    };
    Ok(PriceResult {
        price: df * mean,
        std_error: df * (var / n).sqrt(),
        diagnostics: PriceDiagnostics {
            average_correlation: average_correlation(cube, payoff.maturity())?,
            conditioned_correlation: conditioned,
            clamp_fraction: cube.clamp_fraction(),
            violation_fraction: cube.violation_fraction(),
        },
    })
}

fn path_average(cube: &PathCube, path: usize, date: usize) -> f64 {
    cube.summaries[path].correlation_sums[date] / cube.date_steps[date] as f64
}

fn conditioned_average(
    cube: &PathCube,
    date: usize,
    select: impl Fn(usize) -> bool,
) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for p in 0..cube.n_paths {
        if select(p) {
            sum += path_average(cube, p, date);
            count += 1;
        }
    }
    (count > 0).then(|| 100.0 * sum / count as f64)
}

/// Mean off-diagonal correlation over all paths and the steps up to
/// `maturity`, in percent.
pub fn average_correlation(cube: &PathCube, maturity: f64) -> Result<f64> {
    let date = cube.date_position(maturity)?;
    let sum: f64 = (0..cube.n_paths).map(|p| path_average(cube, p, date)).sum();
    Ok(100.0 * sum / cube.n_paths as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    /// Strike over initial index level.
    pub moneyness: f64,
    pub strike: f64,
    /// Unconditional path-time average, percent.
    pub unconditional: f64,
    /// Average over paths finishing in the money, percent: puts below 100%
    /// moneyness, calls from 100% up.
    pub conditioned: Option<f64>,
    pub itm_paths: usize,
}

/// Average correlation per strike of an index option.
pub fn correlation_by_strike(
    cube: &PathCube,
    maturity: f64,
    moneyness: &[f64],
) -> Result<Vec<CorrelationRow>> {
    let date = cube.date_position(maturity)?;
    let unconditional = average_correlation(cube, maturity)?;
    let s0: f64 = cube
        .initial_spots
        .iter()
        .zip(&cube.weights)
        .map(|(s, a)| s * a)
        .sum();
    Ok(moneyness
        .iter()
        .map(|&m| {
            let strike = m * s0;
            let itm = |p: usize| {
                let level = cube.index_value(p, date);
                if m < 1.0 {
                    level < strike
                } else {
                    level > strike
                }
            };
            CorrelationRow {
                moneyness: m,
                strike,
                unconditional,
                conditioned: conditioned_average(cube, date, itm),
                itm_paths: (0..cube.n_paths).filter(|&p| itm(p)).count(),
            }
        })
        .collect())
}

pub fn write_correlation_csv<W: Write>(rows: &[CorrelationRow], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "moneyness,strike,unconditional_pct,conditioned_pct,itm_paths"
    )?;
    for r in rows {
        let c = r.conditioned.map_or(String::new(), |v| v.to_string());
        writeln!(
            w,
            "{},{},{},{},{}",
            r.moneyness, r.strike, r.unconditional, c, r.itm_paths
        )?;
    }
    Ok(())
}
