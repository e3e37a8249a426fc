//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use chrono::NaiveDate;
use localcorr::marketdata::{AssetQuote, IndexComposition, MarketSnapshot, RateCurve, VolSurface};
use nalgebra::{DMatrix, SymmetricEigen};

/// Gauss-Hermite rule for `E[f(Z)]`, `Z ~ N(0,1)`, by Golub-Welsch.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Jacobi matrix of the probabilists' Hermite polynomials
    let j = DMatrix::from_fn(n, n, |a, b| {
        if a + 1 == b || b + 1 == a {
            (a.max(b) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Undiscounted Black call.
pub fn black(f: f64, k: f64, s: f64) -> f64 {
    if k <= 0.0 {
        return f - k;
    }
    if s <= 0.0 {
        return (f - k).max(0.0);
    }
    let d1 = (f / k).ln() / s + 0.5 * s;
    f * norm_cdf(d1) - k * norm_cdf(d1 - s)
}

/// Call on `a1 S1 + a2 S2` for two lognormal assets with correlation `rho`,
/// undiscounted. The first factor is integrated by Gauss-Hermite and the
/// second in closed form, conditionally Black.
pub fn two_asset_basket_call(
    a: [f64; 2],
    f: [f64; 2],
    vol: [f64; 2],
    t: f64,
    rho: f64,
    k: f64,
    nodes: usize,
) -> f64 {
    let (x, w) = gauss_hermite(nodes);
    let (s1, s2) = (vol[0] * t.sqrt(), vol[1] * t.sqrt());
    let resid = s2 * (1.0 - rho * rho).max(0.0).sqrt();
    x.iter()
        .zip(&w)
        .map(|(&z, &wt)| {
            let x1 = f[0] * (s1 * z - 0.5 * s1 * s1).exp();
            let f2 = f[1] * (s2 * rho * z - 0.5 * s2 * s2 * rho * rho).exp();
            let k2 = (k - a[0] * x1) / a[1];
            wt * a[1] * black(f2, k2, resid)
        })
        .sum()
}

/// Flat-vol asset quoted on a wide strike grid.
pub fn flat_asset(id: &str, spot: f64, vol: f64, q: f64) -> AssetQuote {
    let mats = vec![0.25, 0.5, 1.0, 1.5, 2.0, 3.0];
    let strikes: Vec<f64> = (0..=40).map(|i| spot * (0.2 + 0.05 * i as f64)).collect();
    let surface = VolSurface::flat(vol, mats, strikes).unwrap();
    AssetQuote::new(id, spot, RateCurve::flat(q), surface).unwrap()
}

/// Snapshot of flat-vol assets whose index surface is a placeholder copy of
/// the first constituent, scaled to the index level.
pub fn flat_snapshot(vols: &[f64], weights: &[f64], rate: f64) -> MarketSnapshot {
    let assets: Vec<AssetQuote> = vols
        .iter()
        .enumerate()
        .map(|(i, &v)| flat_asset(&format!("A{i}"), 100.0, v, 0.0))
        .collect();
    let spot: f64 = weights.iter().sum::<f64>() * 100.0;
    let index = AssetQuote::new(
        "IDX",
        spot,
        RateCurve::flat(0.0),
        assets[0].vol_surface.scale_strikes(spot / 100.0),
    )
    .unwrap();
    let comp = IndexComposition::new(
        assets
            .iter()
            .map(|a| a.id.clone())
            .zip(weights.iter().copied())
            .collect(),
    )
    .unwrap();
    MarketSnapshot::new(
        NaiveDate::from_ymd_opt(2009, 7, 31).unwrap(),
        RateCurve::flat(rate),
        assets,
        index,
        comp,
    )
    .unwrap()
}

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
        .join(name)
}

/// Read a golden JSON file, or write `fresh` there when `LOCALCORR_BLESS` is
/// set.
pub fn golden_json(name: &str, fresh: &serde_json::Value) -> serde_json::Value {
    let path = golden_path(name);
    if std::env::var_os("LOCALCORR_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        let mut text = serde_json::to_string_pretty(fresh).unwrap();
        text.push('\n');
        std::fs::write(&path, text).unwrap();
    }
    let raw = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}; rerun with LOCALCORR_BLESS=1", path.display()));
    serde_json::from_str(&raw).unwrap()
}
