//! Gaussian-copula basket pricing from the constituents' implied marginals.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrfam::{cholesky, CorrelationMatrix};
use crate::dupire::InverseCdfTable;
use crate::error::{Error, Result};
use crate::marketdata::{implied_vol, MarketSnapshot};
use crate::math::normal;

/// Independent randomizations used for the error estimate.
pub const REPLICATES: usize = 16;
const MAX_SOBOL_POINTS: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Owen-scrambled Sobol points, one scramble per replicate.
    Sobol,
    PseudoRandom,
}

#[derive(Clone, Debug)]
pub struct CopulaSpec {
    pub correlation: CorrelationMatrix,
    pub n_samples: usize,
    pub sampler: Sampler,
    pub seed: u64,
}

impl CopulaSpec {
    pub fn new(
        correlation: CorrelationMatrix,
        n_samples: usize,
        sampler: Sampler,
        seed: u64,
    ) -> Result<Self> {
        if n_samples < 1000 {
            return Err(Error::InvalidInput(format!(
                "copula needs at least 1000 samples, got {n_samples}"
            )));
        }
        if sampler == Sampler::Sobol {
            if n_samples > REPLICATES * MAX_SOBOL_POINTS * 64 {
                return Err(Error::InvalidInput("too many Sobol samples".into()));
            }
            if correlation.n() > sobol_burley::NUM_DIMENSIONS as usize {
                return Err(Error::InvalidInput(format!(
                    "Sobol sampler supports at most {} assets",
                    sobol_burley::NUM_DIMENSIONS
                )));
            }
        }
        Ok(Self {
            correlation,
            n_samples,
            sampler,
            seed,
        })
    }

    pub fn with_correlation(&self, correlation: CorrelationMatrix) -> Self {
        Self {
            correlation,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopulaEstimate {
    pub price: f64,
    pub std_error: f64,
}

// Randomized point stream for one replicate.
enum Stream {
    Sobol { seed: u32, offset: u32 },
    Pseudo(Box<ChaCha8Rng>),
}

impl Stream {
    fn normals(&mut self, index: usize, out: &mut [f64]) {
        match self {
            Stream::Sobol { seed, offset } => {
                for (d, z) in out.iter_mut().enumerate() {
                    let v = sobol_burley::sample(index as u32, d as u32, seed.wrapping_add(*offset))
                        as f64;
                    // centre of the 2^-24 cell the f32 value identifies
                    *z = normal::inv_cdf(v + 0.5f64.powi(25));
                }
            }
            Stream::Pseudo(rng) => {
                for z in out.iter_mut() {
                    *z = rng.sample(StandardNormal);
                }
            }
        }
    }
}

/// Sampled basket values at one maturity, reused across strikes.
#[derive(Clone, Debug)]
pub struct CopulaEngine {
    t: f64,
    df: f64,
    sampler: Sampler,
    // basket values per replicate
    baskets: Vec<Vec<f64>>,
    // asset values per replicate, row-major sample × asset, when kept
    assets: Option<Vec<Vec<f64>>>,
    n_assets: usize,
    clamped: u64,
}

impl CopulaEngine {
    pub fn new(snapshot: &MarketSnapshot, spec: &CopulaSpec, t: f64) -> Result<Self> {
        Self::build(snapshot, spec, t, false)
    }

    /// Like [`CopulaEngine::new`], also keeping every simulated constituent value.
    pub fn with_asset_samples(
        snapshot: &MarketSnapshot,
        spec: &CopulaSpec,
        t: f64,
    ) -> Result<Self> {
        Self::build(snapshot, spec, t, true)
    }

    fn build(snapshot: &MarketSnapshot, spec: &CopulaSpec, t: f64, keep: bool) -> Result<Self> {
        let n = snapshot.n_assets();
        if spec.correlation.n() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: spec.correlation.n(),
            });
        }
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidInput(format!(
                "maturity must be positive, got {t}"
            )));
        }
        let factor = cholesky(&spec.correlation)?;
        let tables = (0..n)
            .map(|i| Ok(InverseCdfTable::new(&snapshot.asset_call_surface(i)?, t)))
            .collect::<Result<Vec<_>>>()?;
        let weights = snapshot.weights();

        let reps = replicate_count(spec);
        let per_rep = spec.n_samples.div_ceil(reps);
        let results: Vec<(Vec<f64>, Option<Vec<f64>>, u64)> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut stream = replicate_stream(spec, r);
                let mut z = vec![0.0; n];
                let mut values = vec![0.0; n];
                let mut baskets = Vec::with_capacity(per_rep);
                let mut kept = keep.then(|| Vec::with_capacity(per_rep * n));
                let mut clamped = 0u64;
                for i in 0..per_rep {
                    stream.normals(i % MAX_SOBOL_POINTS, &mut z);
                    if let Stream::Sobol { offset, .. } = &mut stream {
                        // fresh scramble once the 2^16 points are used up
                        if (i + 1) % MAX_SOBOL_POINTS == 0 {
                            *offset = offset.wrapping_add(0x9e37_79b9);
                        }
                    }
                    let b = correlated_basket(
                        &factor,
                        &z,
                        &tables,
                        &weights,
                        &mut values,
                        &mut clamped,
                    );
                    baskets.push(b);
                    if let Some(k) = kept.as_mut() {
                        k.extend_from_slice(&values);
                    }
                }
                (baskets, kept, clamped)
            })
            .collect();

        let mut baskets = Vec::with_capacity(reps);
        let mut assets = keep.then(Vec::new);
        let mut clamped = 0;
        for (b, a, c) in results {
            baskets.push(b);
            if let (Some(all), Some(a)) = (assets.as_mut(), a) {
                all.push(a);
            }
            clamped += c;
        }
        Ok(Self {
            t,
            df: snapshot.discount_curve.discount(t),
            sampler: spec.sampler,
            baskets,
            assets,
            n_assets: n,
            clamped,
        })
    }

    pub fn maturity(&self) -> f64 {
        self.t
    }

    pub fn n_samples(&self) -> usize {
        self.baskets.iter().map(Vec::len).sum()
    }

    /// Marginal draws that fell outside an inverse-CDF table.
    pub fn clamped_draws(&self) -> u64 {
        self.clamped
    }

    /// Simulated values of constituent `asset`, in sample order.
    pub fn asset_samples(&self, asset: usize) -> Option<Vec<f64>> {
        let n = self.n_assets;
        self.assets.as_ref().map(|reps| {
            reps.iter()
                .flat_map(|r| r.iter().skip(asset).step_by(n).copied())
                .collect()
        })
    }

    pub fn basket_samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.baskets.iter().flatten().copied()
    }

    pub fn estimate(&self, payoff: impl Fn(f64) -> f64) -> CopulaEstimate {
        let means: Vec<f64> = self
            .baskets
            .iter()
            .map(|b| b.iter().map(|&x| payoff(x)).sum::<f64>() / b.len() as f64)
            .collect();
        let m = means.len() as f64;
        let mean = means.iter().sum::<f64>() / m;
        let std_error = match self.sampler {
            Sampler::Sobol => {
                let var = means.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
                (var / m).sqrt()
            }
            Sampler::PseudoRandom => {
                let count = self.n_samples() as f64;
                let ss: f64 = self
                    .basket_samples()
                    .map(|x| (payoff(x) - mean).powi(2))
                    .sum();
                (ss / (count - 1.0) / count).sqrt()
            }
        };
        CopulaEstimate {
            price: self.df * mean,
            std_error: self.df * std_error,
        }
    }

    pub fn call(&self, strike: f64) -> CopulaEstimate {
        self.estimate(|b| (b - strike).max(0.0))
    }

    pub fn put(&self, strike: f64) -> CopulaEstimate {
        self.estimate(|b| (strike - b).max(0.0))
    }
}

fn replicate_count(spec: &CopulaSpec) -> usize {
    match spec.sampler {
        Sampler::Sobol => REPLICATES.max(spec.n_samples.div_ceil(MAX_SOBOL_POINTS)),
        Sampler::PseudoRandom => REPLICATES,
    }
}

fn replicate_stream(spec: &CopulaSpec, r: usize) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(r as u64);
    match spec.sampler {
        Sampler::Sobol => Stream::Sobol {
            seed: rng.next_u32(),
            offset: 0,
        },
        Sampler::PseudoRandom => Stream::Pseudo(Box::new(rng)),
    }
}

#[inline]
fn correlated_basket(
    factor: &DMatrix<f64>,
    z: &[f64],
    tables: &[InverseCdfTable],
    weights: &[f64],
    values: &mut [f64],
    clamped: &mut u64,
) -> f64 {
    let n = z.len();
    let mut basket = 0.0;
    for i in 0..n {
        let mut w = 0.0;
        for (j, zj) in z.iter().enumerate().take(i + 1) {
            w += factor[(i, j)] * zj;
        }
        let q = tables[i].quantile(normal::cdf(w));
        if q.clamped {
            *clamped += 1;
        }
        values[i] = q.strike;
        basket += weights[i] * q.strike;
    }
    basket
}

/// Discounted basket call under the Gaussian copula.
pub fn copula_basket_call(
    snapshot: &MarketSnapshot,
    spec: &CopulaSpec,
    t: f64,
    strike: f64,
) -> Result<CopulaEstimate> {
    Ok(CopulaEngine::new(snapshot, spec, t)?.call(strike))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewRow {
    /// Strike over index spot.
    pub moneyness: f64,
    pub strike: f64,
    pub market_vol: f64,
    pub copula_vol: f64,
    pub copula_price: f64,
    pub std_error: f64,
}

/// Index market vol against the copula-implied vol per strike, with strikes
/// given as fractions of the index spot.
pub fn skew_comparison(
    snapshot: &MarketSnapshot,
    spec: &CopulaSpec,
    t: f64,
    moneyness: &[f64],
) -> Result<Vec<SkewRow>> {
    let engine = CopulaEngine::new(snapshot, spec, t)?;
    skew_rows(snapshot, &engine, moneyness)
}

/// [`skew_comparison`] on an already sampled engine.
pub fn skew_rows(
    snapshot: &MarketSnapshot,
    engine: &CopulaEngine,
    moneyness: &[f64],
) -> Result<Vec<SkewRow>> {
    let t = engine.maturity();
    let index = snapshot.index_call_surface()?;
    let fwd = index.forward(t);
    let df = index.discount(t);
    moneyness
        .iter()
        .map(|&m| {
            let strike = m * snapshot.index.spot;
            let est = engine.call(strike);
            Ok(SkewRow {
                moneyness: m,
                strike,
                market_vol: index.implied_vol(t, strike),
                copula_vol: implied_vol(est.price, fwd, strike, t, df)?,
                copula_price: est.price,
                std_error: est.std_error,
            })
        })
        .collect()
}

pub fn write_skew_csv<W: Write>(rows: &[SkewRow], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "moneyness,strike,market_vol,copula_vol,copula_price,std_error"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.moneyness, r.strike, r.market_vol, r.copula_vol, r.copula_price, r.std_error
        )?;
    }
    Ok(())
}

/// Flat correlation at which the copula matches the index vol at the
/// at-the-money-spot strike. Bisection with common random numbers.
pub fn calibrate_atm_flat_correlation(
    snapshot: &MarketSnapshot,
    spec: &CopulaSpec,
    t: f64,
) -> Result<f64> {
    let n = snapshot.n_assets();
    if n < 2 {
        return Err(Error::Calibration(
            "flat correlation needs at least two assets".into(),
        ));
    }
    let strike = snapshot.index.spot;
    let index = snapshot.index_call_surface()?;
    let target = index.implied_vol(t, strike);
    let (fwd, df) = (index.forward(t), index.discount(t));
    let vol_at = |rho: f64| -> Result<f64> {
        let s = spec.with_correlation(CorrelationMatrix::flat(n, rho)?);
        let price = copula_basket_call(snapshot, &s, t, strike)?.price;
        implied_vol(price, fwd, strike, t, df)
    };
    let mut lo = (-1.0 / (n - 1) as f64).max(-0.99) + 1e-9;
    let mut hi = 1.0;
    let (vlo, vhi) = (vol_at(lo)?, vol_at(hi)?);
    if target < vlo || target > vhi {
        return Err(Error::Calibration(format!(
            "index vol {target:.4} outside copula range [{vlo:.4}, {vhi:.4}]"
        )));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if vol_at(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
