mod common;

use common::*;
use localcorr::copula::*;
use localcorr::corrfam::{CenterSpec, CorrelationMatrix};
use localcorr::dupire::cumulative;
use localcorr::marketdata::implied_vol;
use localcorr::synth::{synthesize, Generator, SynthRecipe};

const STRIKES: [f64; 5] = [70.0, 90.0, 100.0, 110.0, 130.0];
const RHOS: [f64; 3] = [0.0, 0.5, 0.9];

fn oracle_table() -> serde_json::Value {
    let rows: Vec<serde_json::Value> = RHOS
        .iter()
        .map(|&rho| {
            let prices: Vec<f64> = STRIKES
                .iter()
                .map(|&k| two_asset_basket_call([0.5, 0.5], [100.0; 2], [0.2; 2], 1.0, rho, k, 160))
                .collect();
            serde_json::json!({"rho": rho, "strikes": STRIKES, "prices": prices})
        })
        .collect();
    serde_json::json!({
        "forward": 100.0, "vol": 0.2, "maturity": 1.0, "weights": [0.5, 0.5],
        "nodes": 160, "rows": rows
    })
}

#[test]
fn hermite_rule_integrates_moments() {
    let (x, w) = gauss_hermite(40);
    let m = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
    assert!((m(0) - 1.0).abs() < 1e-13);
    assert!(m(1).abs() < 1e-13);
    assert!((m(2) - 1.0).abs() < 1e-12);
    assert!((m(4) - 3.0).abs() < 1e-11);
    let e: f64 = x.iter().zip(&w).map(|(x, w)| w * (0.3 * x).exp()).sum();
    assert!((e - (0.045f64).exp()).abs() < 1e-14);
}

#[test]
fn basket_oracle_limits() {
    // integrating either factor gives the same price
    for k in STRIKES {
        let b12 = two_asset_basket_call([0.4, 0.6], [100.0, 90.0], [0.2, 0.3], 1.5, 0.5, k, 160);
        let b21 = two_asset_basket_call([0.6, 0.4], [90.0, 100.0], [0.3, 0.2], 1.5, 0.5, k, 160);
        assert!((b12 - b21).abs() < 1e-6 * b12, "K={k}: {b12} vs {b21}");
    }
    // no weight on the integrated factor leaves the closed-form one
    let b = two_asset_basket_call([0.0, 1.0], [100.0; 2], [0.2, 0.3], 2.0, 0.4, 90.0, 120);
    assert!((b - black(100.0, 90.0, 0.3 * 2f64.sqrt())).abs() < 1e-10);
}

#[test]
fn golden_quadrature_values() {
    let fresh = oracle_table();
    let golden = golden_json("two_asset_basket.json", &fresh);
    for (g, f) in golden["rows"]
        .as_array()
        .unwrap()
        .iter()
        .zip(fresh["rows"].as_array().unwrap())
    {
        for (a, b) in g["prices"]
            .as_array()
            .unwrap()
            .iter()
            .zip(f["prices"].as_array().unwrap())
        {
            let (a, b) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            assert!((a - b).abs() <= 1e-12 * a, "{a} vs {b}");
        }
    }
}

#[test]
fn independent_pair_matches_quadrature() {
    let snap = flat_snapshot(&[0.2, 0.2], &[0.5, 0.5], 0.0);
    let spec = CopulaSpec::new(CorrelationMatrix::identity(2), 1 << 20, Sampler::Sobol, 1).unwrap();
    let engine = CopulaEngine::new(&snap, &spec, 1.0).unwrap();
    for k in STRIKES {
        let want = two_asset_basket_call([0.5, 0.5], [100.0; 2], [0.2; 2], 1.0, 0.0, k, 160);
        let got = engine.call(k).price;
        assert!((got - want).abs() <= 1e-3 * want, "K={k}: {got} vs {want}");
    }
}

#[test]
fn price_is_decreasing_and_convex_in_strike() {
    let snap = flat_snapshot(&[0.2, 0.3, 0.25], &[0.3, 0.3, 0.4], 0.01);
    let spec = CopulaSpec::new(
        CorrelationMatrix::flat(3, 0.4).unwrap(),
        1 << 16,
        Sampler::Sobol,
        3,
    )
    .unwrap();
    let engine = CopulaEngine::new(&snap, &spec, 1.0).unwrap();
    let ks: Vec<f64> = (0..30).map(|i| 60.0 + 3.0 * i as f64).collect();
    let p: Vec<_> = ks.iter().map(|&k| engine.call(k)).collect();
    for w in p.windows(3) {
        assert!(w[1].price <= w[0].price);
        let fly = w[0].price - 2.0 * w[1].price + w[2].price;
        let se = w[0].std_error + 2.0 * w[1].std_error + w[2].std_error;
        assert!(fly >= -3.0 * se, "butterfly {fly}");
    }
}

#[test]
fn more_correlation_widens_the_basket() {
    let snap = flat_snapshot(&[0.2, 0.3], &[0.5, 0.5], 0.0);
    let mut last_var = 0.0;
    for rho in [-0.5, 0.0, 0.3, 0.6, 0.9, 1.0] {
        let spec = CopulaSpec::new(
            CorrelationMatrix::flat(2, rho).unwrap(),
            1 << 16,
            Sampler::Sobol,
            5,
        )
        .unwrap();
        let e = CopulaEngine::new(&snap, &spec, 1.0).unwrap();
        let b: Vec<f64> = e.basket_samples().collect();
        let mean = b.iter().sum::<f64>() / b.len() as f64;
        let var = b.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / b.len() as f64;
        assert!(var >= last_var, "rho={rho}");
        last_var = var;
    }
}

#[test]
fn marginals_pass_kolmogorov_band() {
    let snap = flat_snapshot(&[0.2, 0.35, 0.25], &[0.3, 0.3, 0.4], 0.02);
    let n = 20_000;
    let spec = CopulaSpec::new(
        CorrelationMatrix::flat(3, 0.6).unwrap(),
        n,
        Sampler::PseudoRandom,
        9,
    )
    .unwrap();
    let engine = CopulaEngine::with_asset_samples(&snap, &spec, 1.5).unwrap();
    for i in 0..3 {
        let cs = snap.asset_call_surface(i).unwrap();
        let mut s = engine.asset_samples(i).unwrap();
        s.sort_by(f64::total_cmp);
        let m = s.len() as f64;
        let d = s
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let c = cumulative(&cs, 1.5, x);
                (c - j as f64 / m).abs().max((c - (j + 1) as f64 / m).abs())
            })
            .fold(0.0, f64::max);
        assert!(d <= 1.36 / m.sqrt(), "asset {i}: D = {d}");
    }
}

#[test]
fn self_generated_index_decodes_within_tolerance() {
    let mut r = SynthRecipe::flat(3, 0.25, CenterSpec::Flat { rho: 0.4 });
    r.atm_vols = vec![0.2, 0.25, 0.3];
    r.skews = vec![0.1];
    r.maturities = vec![0.5, 1.0, 2.0];
    let snap = synthesize(&r).unwrap();
    let spec = CopulaSpec::new(
        CorrelationMatrix::flat(3, 0.4).unwrap(),
        1 << 18,
        Sampler::Sobol,
        17,
    )
    .unwrap();
    let m = [0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3];
    for row in skew_comparison(&snap, &spec, 1.0, &m).unwrap() {
        assert!((row.market_vol - row.copula_vol).abs() <= 0.003, "{row:?}");
    }
}

#[test]
fn two_flat_independent_assets_synthesize_quadrature_smile() {
    let mut r = SynthRecipe::flat(2, 0.2, CenterSpec::Identity);
    r.maturities = vec![0.5, 1.0, 2.0];
    let snap = synthesize(&r).unwrap();
    let cs = snap.index_call_surface().unwrap();
    for m in [0.8, 0.9, 1.0, 1.1, 1.2] {
        let k = 100.0 * m;
        let want = two_asset_basket_call([0.5, 0.5], [100.0; 2], [0.2; 2], 1.0, 0.0, k, 160);
        let want_vol = implied_vol(want, 100.0, k, 1.0, 1.0).unwrap();
        let got = cs.implied_vol(1.0, k);
        assert!((got - want_vol).abs() < 1e-3, "K={k}: {got} vs {want_vol}");
    }
}

#[test]
fn steepened_index_is_steeper_than_copula_at_70() {
    let mut r = SynthRecipe::flat(3, 0.25, CenterSpec::Flat { rho: 0.4 });
    r.skews = vec![0.1];
    r.maturities = vec![0.5, 1.0, 2.0];
    r.samples = 1 << 16;
    r.generator = Generator::Steepened {
        bump: 0.03,
        length: 0.25,
    };
    let snap = synthesize(&r).unwrap();
    assert_eq!(
        snap.generator.as_ref().unwrap()["copula_inconsistent"],
        true
    );
    let spec = CopulaSpec::new(
        CorrelationMatrix::flat(3, 0.4).unwrap(),
        1 << 16,
        Sampler::Sobol,
        17,
    )
    .unwrap();
    let rows = skew_comparison(&snap, &spec, 1.0, &[0.7, 1.0]).unwrap();
    let gap70 = rows[0].market_vol - rows[0].copula_vol;
    let gap100 = rows[1].market_vol - rows[1].copula_vol;
    assert!((gap70 - 0.03).abs() < 0.003, "gap at 70%: {gap70}");
    assert!(gap100.abs() < gap70);
}

#[test]
fn atm_flat_correlation_anchors_the_smile() {
    let mut r = SynthRecipe::flat(3, 0.25, CenterSpec::Flat { rho: 0.55 });
    r.atm_vols = vec![0.2, 0.25, 0.3];
    r.skews = vec![0.1];
    r.maturities = vec![0.5, 1.0, 2.0];
    r.samples = 1 << 16;
    let snap = synthesize(&r).unwrap();
    let spec = CopulaSpec::new(CorrelationMatrix::identity(3), 1 << 16, Sampler::Sobol, 2).unwrap();
    let rho = calibrate_atm_flat_correlation(&snap, &spec, 1.0).unwrap();
    let spec = spec.with_correlation(CorrelationMatrix::flat(3, rho).unwrap());
    let row = &skew_comparison(&snap, &spec, 1.0, &[1.0]).unwrap()[0];
    assert!((row.market_vol - row.copula_vol).abs() < 0.002);
    assert!((rho - 0.55).abs() < 0.02, "{rho}");
}
