//! Synthetic markets with known structure, for experiments and tests.
//!
//! Constituent smiles follow `σ(T, k) = σ_atm − s·ℓ·tanh(k / (ℓ√T))` in
//! log-moneyness `k = ln(K/F(T))`. The index smile comes from one of three
//! generators: the Gaussian copula itself, the copula with a correlation that
//! rises with decreasing strike, or a multi-asset local-vol simulation whose
//! correlation rises as the index falls.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{CopulaEngine, CopulaSpec, Sampler};
use crate::corrfam::{Branch, CenterSpec, CorrelationFamily};
use crate::dupire::{GridSpec, LocalVolParams, LocalVolSurface};
use crate::error::{Error, Result};
use crate::marketdata::{
    implied_vol, AssetQuote, IndexComposition, MarketSnapshot, RateCurve, VolSurface,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Generator {
    /// Index smile priced by the copula with the recipe's correlation.
    CopulaConsistent,
    /// Copula smile where each strike uses its own member of the flat-mode
    /// family around the center, `τ(k) = −δ·tanh(k/(ℓ√T))` with the member
    /// `(1−τ)·center + τ·ones` above zero and `(1+τ)·center − τ·I` below.
    /// `δ` is solved per maturity so the index vol at 70% of spot sits `bump`
    /// (0.03 = 3 points) above the plain copula. `ℓ` is `length`.
    Steepened {
        bump: f64,
        #[serde(default = "default_steep_length")]
        length: f64,
    },
    /// Local-vol simulation with flat correlation
    /// `clamp(rho_atm − slope·ln(I/F), 0, 0.99)` where `I/F` is the index
    /// over its forward.
    LcmGroundTruth {
        rho_atm: f64,
        slope: f64,
        paths: usize,
        steps_per_year: usize,
    },
}

fn default_steep_length() -> f64 {
    0.25
}
fn default_spot() -> Vec<f64> {
    vec![100.0]
}
fn default_skew_length() -> f64 {
    0.5
}
fn default_maturities() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 1.5, 2.0, 3.0]
}
fn default_samples() -> usize {
    1 << 18
}
fn default_as_of() -> String {
    "2009-07-31".into()
}

/// Everything needed to generate a synthetic snapshot. Per-asset lists of
/// length one apply to every asset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRecipe {
    pub n_assets: usize,
    #[serde(default = "default_spot")]
    pub spots: Vec<f64>,
    pub atm_vols: Vec<f64>,
    /// Smile slope `−∂σ/∂k` at the money for one-year options.
    #[serde(default)]
    pub skews: Vec<f64>,
    #[serde(default = "default_skew_length")]
    pub skew_length: f64,
    #[serde(default)]
    pub rate: f64,
    #[serde(default)]
    pub dividends: Vec<f64>,
    /// Index weights; equal weights summing to one when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_maturities")]
    pub maturities: Vec<f64>,
    pub correlation: CenterSpec,
    pub generator: Generator,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_as_of")]
    pub as_of: String,
}

impl SynthRecipe {
    /// Flat smiles, no rates, copula-consistent index.
    pub fn flat(n_assets: usize, vol: f64, correlation: CenterSpec) -> Self {
        Self {
            n_assets,
            spots: default_spot(),
            atm_vols: vec![vol],
            skews: vec![0.0],
            skew_length: default_skew_length(),
            rate: 0.0,
            dividends: vec![0.0],
            weights: None,
            maturities: default_maturities(),
            correlation,
            generator: Generator::CopulaConsistent,
            samples: default_samples(),
            seed: 0,
            as_of: default_as_of(),
        }
    }

    fn per_asset(&self, v: &[f64], what: &str, default: f64) -> Result<Vec<f64>> {
        match v.len() {
            0 => Ok(vec![default; self.n_assets]),
            1 => Ok(vec![v[0]; self.n_assets]),
            l if l == self.n_assets => Ok(v.to_vec()),
            l => Err(Error::InvalidInput(format!(
                "{what}: expected 1 or {} values, got {l}",
                self.n_assets
            ))),
        }
    }
}

/// Quoted standardized moneyness for constituents.
const ASSET_Z: (f64, f64) = (-4.5, 4.5);
/// Quoted standardized moneyness for the index; the copula tails are noisy
/// beyond this.
const INDEX_Z: (f64, f64) = (-3.0, 3.0);
const Z_STEP: f64 = 0.25;

fn z_grid((lo, hi): (f64, f64)) -> Vec<f64> {
    let n = ((hi - lo) / Z_STEP).round() as usize;
    (0..=n).map(|i| lo + Z_STEP * i as f64).collect()
}

fn tanh_smile(atm: f64, skew: f64, length: f64, t: f64, k: f64) -> f64 {
    atm - skew * length * (k / (length * t.sqrt())).tanh()
}

/// Build the snapshot a recipe describes.
pub fn synthesize(recipe: &SynthRecipe) -> Result<MarketSnapshot> {
    let n = recipe.n_assets;
    if n == 0 {
        return Err(Error::InvalidInput(
            "recipe needs at least one asset".into(),
        ));
    }
    let spots = recipe.per_asset(&recipe.spots, "spots", 100.0)?;
    let vols = recipe.per_asset(&recipe.atm_vols, "atm_vols", 0.2)?;
    let skews = recipe.per_asset(&recipe.skews, "skews", 0.0)?;
    let divs = recipe.per_asset(&recipe.dividends, "dividends", 0.0)?;
    let weights = match &recipe.weights {
        Some(w) => recipe.per_asset(w, "weights", 0.0)?,
        None => vec![1.0 / n as f64; n],
    };
    let as_of = NaiveDate::parse_from_str(&recipe.as_of, "%Y-%m-%d")
        .map_err(|e| Error::InvalidInput(format!("as_of: {e}")))?;
    let rates = RateCurve::flat(recipe.rate);
    let mats = recipe.maturities.clone();

    let mut assets = Vec::with_capacity(n);
    for i in 0..n {
        let q = RateCurve::flat(divs[i]);
        let (mut ks, mut vs) = (Vec::new(), Vec::new());
        for &t in &mats {
            let fwd = spots[i] * ((recipe.rate - divs[i]) * t).exp();
            let zs = z_grid(ASSET_Z);
            ks.push(
                zs.iter()
                    .map(|z| fwd * (z * vols[i] * t.sqrt()).exp())
                    .collect(),
            );
            vs.push(
                zs.iter()
                    .map(|z| {
                        tanh_smile(
                            vols[i],
                            skews[i],
                            recipe.skew_length,
                            t,
                            z * vols[i] * t.sqrt(),
                        )
                    })
                    .collect::<Vec<f64>>(),
            );
        }
        if vs.iter().flatten().any(|v| *v <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "asset {i}: skew too steep for the vol level"
            )));
        }
        let id = format!("S{:02}", i + 1);
        assets.push(AssetQuote::new(
            id,
            spots[i],
            q,
            VolSurface::new(mats.clone(), ks, vs)?,
        )?);
    }

    let index_spot: f64 = weights.iter().zip(&spots).map(|(a, s)| a * s).sum();
    let composition = IndexComposition::new(
        assets
            .iter()
            .map(|a| a.id.clone())
            .zip(weights.clone())
            .collect(),
    )?;
    // placeholder index smile, replaced below
    let placeholder = assets[0].vol_surface.scale_strikes(index_spot / spots[0]);
    let index = AssetQuote::new("IDX", index_spot, RateCurve::flat(0.0), placeholder)?;
    let mut snap = MarketSnapshot::new(as_of, rates, assets, index, composition)?;

    let center = recipe.correlation.build(n)?;
    let (surface, meta) = if n == 1 {
        (
            snap.assets[0].vol_surface.scale_strikes(weights[0]),
            serde_json::json!({"single_asset": true}),
        )
    } else {
        match &recipe.generator {
            Generator::CopulaConsistent => {
                let spec = CopulaSpec::new(center, recipe.samples, Sampler::Sobol, recipe.seed)?;
                (
                    copula_index_surface(&snap, &spec, &mats)?,
                    serde_json::json!({}),
                )
            }
            Generator::Steepened { bump, length } => {
                let spec = CopulaSpec::new(center, recipe.samples, Sampler::Sobol, recipe.seed)?;
                let (surface, deltas) =
                    steepened_index_surface(&snap, &spec, &mats, *bump, *length)?;
                (
                    surface,
                    serde_json::json!({"copula_inconsistent": *bump != 0.0, "steepening": deltas}),
                )
            }
            Generator::LcmGroundTruth {
                rho_atm,
                slope,
                paths,
                steps_per_year,
            } => {
                let cfg = GroundTruth {
                    rho_atm: *rho_atm,
                    slope: *slope,
                    paths: *paths,
                    steps_per_year: *steps_per_year,
                    seed: recipe.seed,
                };
                (
                    ground_truth_index_surface(&snap, &mats, &cfg)?,
                    serde_json::json!({}),
                )
            }
        }
    };
    snap.index.vol_surface = surface;
    let mut generator = serde_json::json!({ "recipe": recipe });
    if let (Some(g), Some(extra)) = (generator.as_object_mut(), meta.as_object()) {
        for (k, v) in extra {
            g.insert(k.clone(), v.clone());
        }
    }
    snap.generator = Some(generator);
    Ok(snap)
}

fn copula_index_surface(
    snap: &MarketSnapshot,
    spec: &CopulaSpec,
    mats: &[f64],
) -> Result<VolSurface> {
    let (mut ks, mut vs) = (Vec::new(), Vec::new());
    for &t in mats {
        let engine = CopulaEngine::new(snap, spec, t)?;
        let df = snap.discount_curve.discount(t);
        let fwd = sample_forward(&engine);
        let atm = engine_vol(&engine, fwd, fwd, df)?;
        let (mut row_k, mut row_v) = (Vec::new(), Vec::new());
        for z in z_grid(INDEX_Z) {
            let strike = fwd * (z * atm * t.sqrt()).exp();
            if let Ok(vol) = engine_vol(&engine, fwd, strike, df) {
                row_k.push(strike);
                row_v.push(vol);
            }
        }
        ks.push(row_k);
        vs.push(row_v);
    }
    VolSurface::new(mats.to_vec(), ks, vs)
}

// sample mean as the forward keeps put-call parity exact
fn sample_forward(engine: &CopulaEngine) -> f64 {
    engine.basket_samples().sum::<f64>() / engine.n_samples() as f64
}

// implied vol from the out-of-the-money side
fn engine_vol(engine: &CopulaEngine, fwd: f64, strike: f64, df: f64) -> Result<f64> {
    let call = if strike < fwd {
        engine.put(strike).price + df * (fwd - strike)
    } else {
        engine.call(strike).price
    };
    let vol = implied_vol(call, fwd, strike, engine.maturity(), df)?;
    // a tail strike no sample reaches carries no time value
    if vol > 0.0 {
        Ok(vol)
    } else {
        Err(Error::Calibration(format!(
            "no time value at strike {strike} for maturity {}",
            engine.maturity()
        )))
    }
}

/// Signed family parameters priced for the steepened smile.
const STEEP_TAUS: (i32, i32, f64) = (-8, 18, 0.05);

fn steep_tau(delta: f64, k: f64, length: f64, t: f64) -> f64 {
    let lo = STEEP_TAUS.0 as f64 * STEEP_TAUS.2;
    let hi = STEEP_TAUS.1 as f64 * STEEP_TAUS.2;
    (-delta * (k / (length * t.sqrt())).tanh()).clamp(lo, hi)
}

// family member at signed weight τ toward ones (τ > 0) or identity (τ < 0)
fn tau_member(family: &CorrelationFamily, tau: f64) -> crate::corrfam::CorrelationMatrix {
    let u = (tau.abs() / (1.0 - tau.abs())).sqrt();
    family.eval(u, if tau < 0.0 { Branch::Down } else { Branch::Up })
}

fn steepened_index_surface(
    snap: &MarketSnapshot,
    spec: &CopulaSpec,
    mats: &[f64],
    bump: f64,
    length: f64,
) -> Result<(VolSurface, Vec<f64>)> {
    let family = CorrelationFamily::new(spec.correlation.clone());
    let taus: Vec<f64> = (STEEP_TAUS.0..=STEEP_TAUS.1)
        .map(|i| i as f64 * STEEP_TAUS.2)
        .collect();
    let zero = (-STEEP_TAUS.0) as usize;
    let index_fwd = snap.index_forward();
    let (mut ks, mut vs, mut deltas) = (Vec::new(), Vec::new(), Vec::new());
    for &t in mats {
        let df = snap.discount_curve.discount(t);
        let engines = taus
            .iter()
            .map(|&tau| {
                CopulaEngine::new(snap, &spec.with_correlation(tau_member(&family, tau)), t)
            })
            .collect::<Result<Vec<_>>>()?;
        let fwds: Vec<f64> = engines.iter().map(sample_forward).collect();
        let atm = engine_vol(&engines[zero], fwds[zero], fwds[zero], df)?;
        let f0 = index_fwd.forward(t);
        let k70 = 0.7 * snap.index.spot;
        let mut strikes: Vec<f64> = z_grid(INDEX_Z)
            .iter()
            .map(|z| fwds[zero] * (z * atm * t.sqrt()).exp())
            .collect();
        strikes.push(k70);
        // implied variance per family weight and strike
        let var: Vec<Vec<f64>> = engines
            .iter()
            .zip(&fwds)
            .map(|(e, &f)| {
                strikes
                    .iter()
                    .map(|&k| engine_vol(e, f, k, df).map_or(f64::NAN, |v| v * v))
                    .collect()
            })
            .collect();
        let vol_at = |tau: f64, col: usize| {
            let x = (tau / STEEP_TAUS.2 - STEEP_TAUS.0 as f64).clamp(0.0, (taus.len() - 1) as f64);
            let i = (x.floor() as usize).min(taus.len() - 2);
            let w = x - i as f64;
            ((1.0 - w) * var[i][col] + w * var[i + 1][col]).sqrt()
        };
        let last = strikes.len() - 1;
        let base = vol_at(0.0, last);
        let bump_at =
            |delta: f64| vol_at(steep_tau(delta, (k70 / f0).ln(), length, t), last) - base;
        let delta = if bump == 0.0 {
            0.0
        } else {
            let mut hi = 1.0;
            while bump_at(hi) < bump {
                hi *= 2.0;
                if hi > 1e3 {
                    return Err(Error::Calibration(format!(
                        "steepening of {bump} at 70% unattainable for maturity {t}"
                    )));
                }
            }
            crate::math::roots::bisect(|d| bump_at(d) - bump, 0.0, hi, 200)
        };
        let (mut row_k, mut row_v) = (Vec::new(), Vec::new());
        for (c, &k) in strikes[..last].iter().enumerate() {
            let v = vol_at(steep_tau(delta, (k / f0).ln(), length, t), c);
            if v.is_finite() {
                row_k.push(k);
                row_v.push(v);
            }
        }
        ks.push(row_k);
        vs.push(row_v);
        deltas.push(delta);
    }
    Ok((VolSurface::new(mats.to_vec(), ks, vs)?, deltas))
}

struct GroundTruth {
    rho_atm: f64,
    slope: f64,
    paths: usize,
    steps_per_year: usize,
    seed: u64,
}

fn ground_truth_index_surface(
    snap: &MarketSnapshot,
    mats: &[f64],
    cfg: &GroundTruth,
) -> Result<VolSurface> {
    let n = snap.n_assets();
    let weights = snap.weights();
    let config = crate::lcm::SimulationConfig::new(cfg.paths, mats, cfg.steps_per_year, cfg.seed)?;
    let times = config.time_grid.clone();
    let left = &times[..times.len() - 1];
    let grids = (0..n)
        .into_par_iter()
        .map(|i| {
            let lv = LocalVolSurface::new(
                &snap.assets[i].id,
                snap.asset_call_surface(i)?,
                LocalVolParams::default(),
            );
            Ok(lv.grid(left, GridSpec::default()))
        })
        .collect::<Result<Vec<_>>>()?;
    let forwards: Vec<_> = (0..n).map(|i| snap.asset_forward(i)).collect();
    let index_fwd = snap.index_forward();
    let date_steps: Vec<usize> = mats
        .iter()
        .map(|&d| times.iter().position(|&t| (t - d).abs() < 1e-12).unwrap())
        .collect();

    // index level per (path, maturity)
    let levels: Vec<Vec<f64>> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
            rng.set_stream(p as u64);
            let mut s = snap.spots();
            let mut out = Vec::with_capacity(mats.len());
            let mut next = 0;
            for m in 0..times.len() - 1 {
                let (t0, t1) = (times[m], times[m + 1]);
                let dt = t1 - t0;
                let level: f64 = weights.iter().zip(&s).map(|(a, v)| a * v).sum();
                let rho = (cfg.rho_atm - cfg.slope * (level / index_fwd.forward(t0)).ln())
                    .clamp(0.0, 0.99);
                let common: f64 = rng.sample(StandardNormal);
                for i in 0..n {
                    let own: f64 = rng.sample(StandardNormal);
                    let eps = rho.sqrt() * common + (1.0 - rho).sqrt() * own;
                    let v = grids[i].vol(m, s[i]);
                    s[i] *= forwards[i].growth(t0, t1)
                        * (-0.5 * v * v * dt + v * dt.sqrt() * eps).exp();
                }
                while next < date_steps.len() && date_steps[next] == m + 1 {
                    out.push(weights.iter().zip(&s).map(|(a, v)| a * v).sum());
                    next += 1;
                }
            }
            out
        })
        .collect();

    let (mut ks, mut vs) = (Vec::new(), Vec::new());
    for (j, &t) in mats.iter().enumerate() {
        let df = snap.discount_curve.discount(t);
        let sample: Vec<f64> = levels.iter().map(|l| l[j]).collect();
        let fwd = sample.iter().sum::<f64>() / sample.len() as f64;
        let price = |k: f64| {
            let put = sample.iter().map(|x| (k - x).max(0.0)).sum::<f64>() / sample.len() as f64;
            // call through parity, exact with the sample-mean forward
            df * (put + fwd - k)
        };
        let atm = implied_vol(price(fwd), fwd, fwd, t, df)?;
        let zs = z_grid((-2.5, 2.5));
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for &z in &zs {
            let strike = fwd * (z * atm * t.sqrt()).exp();
            if let Ok(v) = implied_vol(price(strike), fwd, strike, t, df) {
                xs.push((strike / fwd).ln());
                ys.push(v);
            }
        }
        let fit = fit_polynomial(&xs, &ys, 3)?;
        let row_k: Vec<f64> = zs
            .iter()
            .map(|z| fwd * (z * atm * t.sqrt()).exp())
            .collect();
        let row_v: Vec<f64> = row_k
            .iter()
            .map(|k| eval_polynomial(&fit, (k / fwd).ln()))
            .collect();
        ks.push(row_k);
        vs.push(row_v);
    }
    VolSurface::new(mats.to_vec(), ks, vs)
}

/// Least-squares polynomial coefficients, lowest degree first.
fn fit_polynomial(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    if x.len() <= degree {
        return Err(Error::Calibration(
            "too few points for the smile fit".into(),
        ));
    }
    let a = DMatrix::from_fn(x.len(), degree + 1, |i, j| x[i].powi(j as i32));
    let b = DVector::from_column_slice(y);
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Calibration(e.to_string()))?;
    Ok(sol.iter().copied().collect())
}

fn eval_polynomial(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrfam::CorrelationMatrix;

    #[test]
    fn single_asset_index_copies_constituent() {
        let mut r = SynthRecipe::flat(1, 0.25, CenterSpec::Identity);
        r.skews = vec![0.1];
        r.weights = Some(vec![1.0]);
        let s = synthesize(&r).unwrap();
        assert_eq!(s.index.vol_surface, s.assets[0].vol_surface);
    }

    #[test]
    fn smile_shape() {
        assert_eq!(tanh_smile(0.2, 0.1, 0.5, 1.0, 0.0), 0.2);
        assert!(tanh_smile(0.2, 0.1, 0.5, 1.0, -0.3) > 0.2);
        // at-the-money slope is the skew over root maturity
        let h = 1e-6;
        let d =
            (tanh_smile(0.2, 0.1, 0.5, 4.0, h) - tanh_smile(0.2, 0.1, 0.5, 4.0, -h)) / (2.0 * h);
        assert!((d + 0.05).abs() < 1e-8);
    }

    #[test]
    fn steepening_weight_shape() {
        assert_eq!(steep_tau(0.5, 0.0, 0.5, 1.0), 0.0);
        assert!(steep_tau(0.5, -0.2, 0.5, 1.0) > 0.0);
        assert!(steep_tau(0.5, 0.2, 0.5, 1.0) < 0.0);
        assert_eq!(steep_tau(50.0, -1.0, 0.5, 1.0), 0.9);
        assert_eq!(steep_tau(50.0, 1.0, 0.5, 1.0), -0.4);
    }

    #[test]
    fn tau_member_interpolates() {
        let fam = CorrelationFamily::new(CorrelationMatrix::flat(3, 0.4).unwrap());
        assert!((tau_member(&fam, 0.5).get(0, 1) - 0.7).abs() < 1e-12);
        assert!((tau_member(&fam, -0.5).get(0, 1) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn polynomial_fit_recovers_cubic() {
        let x: Vec<f64> = (0..20).map(|i| -1.0 + 0.1 * i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.2 - 0.1 * v + 0.05 * v * v - 0.01 * v * v * v)
            .collect();
        let c = fit_polynomial(&x, &y, 3).unwrap();
        for (a, b) in c.iter().zip([0.2, -0.1, 0.05, -0.01]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
