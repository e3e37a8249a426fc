mod common;

use chrono::NaiveDate;
use common::*;
use localcorr::corrfam::{Branch, CenterSpec, CorrelationFamily, CorrelationMatrix};
use localcorr::dupire::LocalVolParams;
use localcorr::error::Error;
use localcorr::lcm::*;
use localcorr::marketdata::{AssetQuote, IndexComposition, MarketSnapshot, RateCurve, VolSurface};
use localcorr::synth::{synthesize, Generator, SynthRecipe};
use proptest::prelude::*;

fn model(snap: &MarketSnapshot, center: CorrelationMatrix) -> LcmModel {
    LcmModel::calibrate(
        snap,
        CorrelationFamily::new(center),
        LocalVolParams::default(),
    )
    .unwrap()
}

fn skewed_surface(spot: f64) -> VolSurface {
    let mats = vec![0.25, 0.5, 1.0, 1.5, 2.0, 3.0];
    let m: Vec<f64> = (0..=40).map(|i| 0.3 + 0.05 * i as f64).collect();
    VolSurface::new(
        mats.clone(),
        vec![m.iter().map(|x| x * spot).collect(); mats.len()],
        mats.iter()
            .map(|&t| {
                m.iter()
                    .map(|x| 0.25 - 0.05 * (x.ln() / (0.5 * t.sqrt())).tanh())
                    .collect()
            })
            .collect(),
    )
    .unwrap()
}

/// Three identical skewed constituents and an index carrying the same smile.
fn identical_market() -> MarketSnapshot {
    let assets: Vec<AssetQuote> = (0..3)
        .map(|i| {
            AssetQuote::new(
                format!("A{i}"),
                100.0,
                RateCurve::flat(0.0),
                skewed_surface(100.0),
            )
            .unwrap()
        })
        .collect();
    let index = AssetQuote::new("IDX", 100.0, RateCurve::flat(0.0), skewed_surface(100.0)).unwrap();
    let comp =
        IndexComposition::new(assets.iter().map(|a| (a.id.clone(), 1.0 / 3.0)).collect()).unwrap();
    MarketSnapshot::new(
        NaiveDate::from_ymd_opt(2009, 7, 31).unwrap(),
        RateCurve::flat(0.0),
        assets,
        index,
        comp,
    )
    .unwrap()
}

#[test]
fn single_asset_log_mean_is_lognormal() {
    let (mu, sig, t) = (0.03, 0.2, 1.0);
    let snap = flat_snapshot(&[sig], &[1.0], mu);
    let m = model(&snap, CorrelationMatrix::identity(1));
    let cube = m
        .simulate(&SimulationConfig::new(20_000, &[t], 50, 7).unwrap())
        .unwrap();
    let logs: Vec<f64> = (0..cube.n_paths)
        .map(|p| (cube.value(p, 0, 0) / 100.0).ln())
        .collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let want = (mu - 0.5 * sig * sig) * t;
    let se = (var / n).sqrt();
    assert!((mean - want).abs() < 3.0 * se, "{mean} vs {want} (se {se})");
    assert!((var.sqrt() - sig * t.sqrt()).abs() < 0.01);
}

#[test]
fn perfectly_correlated_identical_market_stays_at_center() {
    let snap = identical_market();
    let m = model(&snap, CorrelationMatrix::ones(3));
    let mut cfg = SimulationConfig::new(2_000, &[1.0], 50, 3).unwrap();
    cfg.states = 2001;
    cfg.record_steps = true;
    let cube = m.simulate(&cfg).unwrap();
    assert!(
        cube.off_center_fraction() < 0.01,
        "{}",
        cube.off_center_fraction()
    );
    let recs = cube.records.as_ref().unwrap();
    let near_zero = recs
        .iter()
        .flatten()
        .filter(|r| r.state.abs() < 1e-3)
        .count();
    assert!(near_zero as f64 > 0.99 * (recs.len() * recs[0].len()) as f64);
}

#[test]
fn state_is_higher_below_the_forward_on_a_skewed_market() {
    let mut recipe = SynthRecipe::flat(3, 0.25, CenterSpec::Flat { rho: 0.5 });
    recipe.skews = vec![0.1];
    recipe.maturities = vec![0.25, 0.5, 1.0, 1.5];
    recipe.samples = 1 << 15;
    recipe.generator = Generator::Steepened {
        bump: 0.03,
        length: 0.25,
    };
    let snap = synthesize(&recipe).unwrap();
    let m = model(&snap, CorrelationMatrix::flat(3, 0.5).unwrap());
    let mut cfg = SimulationConfig::new(2_000, &[1.0], 50, 11).unwrap();
    cfg.states = 2001;
    let cube = m.simulate(&cfg).unwrap();
    let (below, above) = cube.mean_state_by_side();
    assert!(below > above, "below {below}, above {above}");
}

#[test]
fn zero_strike_index_call_is_discounted_forward() {
    let snap = flat_snapshot(&[0.2, 0.3], &[0.5, 0.5], 0.03);
    let m = model(&snap, CorrelationMatrix::flat(2, 0.5).unwrap());
    let cube = m
        .simulate(&SimulationConfig::new(20_000, &[1.0], 25, 1).unwrap())
        .unwrap();
    let r = price_european(
        &cube,
        &Payoff::IndexCall {
            maturity: 1.0,
            strike: 1e-9,
        },
    )
    .unwrap();
    let want = (-0.03f64).exp() * snap.index_forward().forward(1.0);
    assert!(
        (r.price - want).abs() < 3.0 * r.std_error,
        "{} vs {want} ± {}",
        r.price,
        r.std_error
    );
}

#[test]
fn single_asset_worst_of_is_a_vanilla_put() {
    let snap = flat_snapshot(&[0.25], &[1.0], 0.01);
    let m = model(&snap, CorrelationMatrix::identity(1));
    let cube = m
        .simulate(&SimulationConfig::new(5_000, &[1.0], 25, 2).unwrap())
        .unwrap();
    let wo = price_european(
        &cube,
        &Payoff::WorstOfPut {
            maturity: 1.0,
            strike: 0.9,
        },
    )
    .unwrap();
    let put = price_european(
        &cube,
        &Payoff::AssetPut {
            asset: 0,
            maturity: 1.0,
            strike: 90.0,
        },
    )
    .unwrap();
    assert!((wo.price * 100.0 - put.price).abs() < 1e-9 * put.price);
    // and close to Black on the same paths
    let f = 100.0 * 0.01f64.exp();
    let black_put = (-0.01f64).exp() * (black(f, 90.0, 0.25) - (f - 90.0));
    assert!((put.price - black_put).abs() < 3.0 * put.std_error);
}

#[test]
fn forced_state_sets_average_correlation() {
    let snap = flat_snapshot(&[0.2, 0.2, 0.2], &[1.0 / 3.0; 3], 0.0);
    let m = model(&snap, CorrelationMatrix::flat(3, 0.3).unwrap());
    for (state, want) in [(1.0, 0.65), (-1.0, 0.15), (0.0, 0.3)] {
        let mut cfg = SimulationConfig::new(200, &[0.5], 10, 4).unwrap();
        cfg.states = 21;
        cfg.shift = Some(0.5);
        cfg.mode = CorrelationMode::Forced(state);
        let cube = m.simulate(&cfg).unwrap();
        let avg = average_correlation(&cube, 0.5).unwrap();
        assert!((avg - 100.0 * want).abs() < 1e-9, "state {state}: {avg}");
    }
    let ident = model(&snap, CorrelationMatrix::identity(3));
    let mut cfg = SimulationConfig::new(200, &[0.5], 10, 4).unwrap();
    cfg.mode = CorrelationMode::Forced(0.0);
    let cube = ident.simulate(&cfg).unwrap();
    assert_eq!(average_correlation(&cube, 0.5).unwrap(), 0.0);
}

#[test]
fn consistent_independent_market_is_inside_the_bounds() {
    let mut recipe = SynthRecipe::flat(2, 0.2, CenterSpec::Identity);
    recipe.maturities = vec![0.25, 0.5, 1.0, 1.5];
    recipe.samples = 1 << 16;
    let snap = synthesize(&recipe).unwrap();
    let m = model(&snap, CorrelationMatrix::identity(2));
    let w = snap.weights();
    // constituents level with the index: conditional dispersion only adds
    // index variance, so the target cannot fall below the diagonal
    for t in [0.25, 0.5, 1.0] {
        for z in [-1.5, -0.75, 0.0, 0.75, 1.5] {
            let level = m.index_forward.forward(t) * (z * 0.15 * f64::sqrt(t)).exp();
            let spots = [level, level];
            let vols = [
                m.assets[0].local_vol(t, level),
                m.assets[1].local_vol(t, level),
            ];
            let terms =
                cov_terms(&m.family, &w, &spots, &vols, m.index.local_vol(t, level)).unwrap();
            let b = check_bounds(&terms);
            assert!(!b.violated(), "t={t} z={z}: {b:?}");
            assert!(terms.target >= terms.diag && terms.target <= terms.cov_ones);
        }
    }
}

#[test]
fn unattainable_target_is_flagged_or_aborts() {
    // index vol 30% on a basket of 30% and 10% names exceeds full correlation
    let snap = flat_snapshot(&[0.3, 0.1], &[0.5, 0.5], 0.0);
    let m = model(&snap, CorrelationMatrix::flat(2, 0.5).unwrap());
    let mut cfg = SimulationConfig::new(100, &[0.5], 10, 6).unwrap();
    let cube = m.simulate(&cfg).unwrap();
    assert!(cube.violation_fraction() > 0.9);
    assert!(cube.clamp_fraction() >= cube.violation_fraction());
    cfg.bounds_policy = BoundsPolicy::Strict;
    assert!(matches!(
        m.simulate(&cfg),
        Err(Error::BoundViolation { .. })
    ));

    // and below the lower bound
    let low = flat_snapshot(&[0.05, 0.3], &[0.5, 0.5], 0.0);
    let m = model(&low, CorrelationMatrix::flat(2, 0.5).unwrap());
    let mut cfg = SimulationConfig::new(100, &[0.5], 10, 6).unwrap();
    cfg.record_steps = true;
    let cube = m.simulate(&cfg).unwrap();
    let recs = cube.records.unwrap();
    assert!(recs.iter().flatten().all(|r| r.bound_violated && r.clamped));
    assert!(recs
        .iter()
        .flatten()
        .all(|r| r.kappa == Branch::Down.kappa()));
}

#[test]
fn exact_mode_matches_the_index_variance() {
    let mut recipe = SynthRecipe::flat(3, 0.22, CenterSpec::Flat { rho: 0.4 });
    recipe.skews = vec![0.08];
    recipe.maturities = vec![0.25, 0.5, 1.0, 1.5];
    recipe.samples = 1 << 15;
    recipe.generator = Generator::Steepened {
        bump: 0.02,
        length: 0.25,
    };
    let snap = synthesize(&recipe).unwrap();
    let m = model(&snap, CorrelationMatrix::flat(3, 0.4).unwrap());
    let mut cfg = SimulationConfig::new(200, &[1.0], 25, 8).unwrap();
    cfg.mode = CorrelationMode::Exact;
    cfg.record_steps = true;
    let cube = m.simulate(&cfg).unwrap();
    let mut checked = 0;
    for r in cube.records.as_ref().unwrap().iter().flatten() {
        if !r.bound_violated {
            assert!((r.realized - r.target).abs() <= 1e-10 * r.target, "{r:?}");
            checked += 1;
        }
    }
    assert!(checked > 1000);

    // the table reproduces it to within its quantization
    cfg.mode = CorrelationMode::Table;
    cfg.states = 2001;
    let cube = m.simulate(&cfg).unwrap();
    let recs = cube.records.as_ref().unwrap();
    let inside: Vec<_> = recs.iter().flatten().filter(|r| !r.clamped).collect();
    let worst = inside
        .iter()
        .map(|r| (r.realized - r.target).abs() / r.target)
        .fold(0.0, f64::max);
    assert!(worst < 5e-3, "worst table residual {worst}");
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let snap = flat_snapshot(&[0.2, 0.3, 0.25], &[0.3, 0.3, 0.4], 0.02);
    let m = model(&snap, CorrelationMatrix::flat(3, 0.5).unwrap());
    let cfg = SimulationConfig::new(3_000, &[0.5, 1.0], 20, 99).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let cube = m.simulate(&cfg).unwrap();
            let mut v = Vec::new();
            for p in 0..cube.n_paths {
                for d in 0..2 {
                    v.extend_from_slice(cube.slice(p, d));
                }
            }
            let put = price_european(
                &cube,
                &Payoff::IndexPut {
                    maturity: 1.0,
                    strike: 100.0,
                },
            )
            .unwrap();
            (v, put)
        })
    };
    let (a, pa) = run(1);
    let (b, pb) = run(4);
    assert_eq!(a, b);
    assert_eq!(pa, pb);
}

#[test]
fn unknown_payoff_name_is_rejected() {
    assert!(matches!(
        Payoff::from_name("digital", 1.0, 1.0),
        Err(Error::UnknownPayoff(_))
    ));
    assert_eq!(
        Payoff::from_name("worst-of-put", 1.0, 0.8).unwrap(),
        Payoff::WorstOfPut {
            maturity: 1.0,
            strike: 0.8
        }
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_is_monotone_along_each_branch(
        rho in 0.0..0.9f64,
        x in prop::collection::vec(0.5..20.0f64, 2..6),
        u in prop::collection::vec(0.0..10.0f64, 8),
    ) {
        let fam = CorrelationFamily::new(CorrelationMatrix::flat(x.len(), rho).unwrap());
        let mut u = u;
        u.sort_by(f64::total_cmp);
        for w in u.windows(2) {
            let (a, b) = (w[0], w[1]);
            prop_assert!(fam.covariance(&x, b, Branch::Up) >= fam.covariance(&x, a, Branch::Up) - 1e-9);
            prop_assert!(fam.covariance(&x, b, Branch::Down) <= fam.covariance(&x, a, Branch::Down) + 1e-9);
        }
    }

    #[test]
    fn flat_mode_root_reproduces_the_target(
        rho in 0.05..0.9f64,
        x in prop::collection::vec(0.5..20.0f64, 2..6),
        s in 0.01..0.99f64,
    ) {
        let fam = CorrelationFamily::new(CorrelationMatrix::flat(x.len(), rho).unwrap());
        let probe = cov_terms_scaled(&fam, &x, 0.0);
        let target = probe.cov_down + s * (probe.cov_up - probe.cov_down);
        let t = cov_terms_scaled(&fam, &x, target);
        let r = solve_u_star(&t);
        prop_assert!(!r.bounds.violated());
        let got = fam.covariance(&x, r.u, r.branch);
        prop_assert!((got - target).abs() <= 1e-9 * target, "{} vs {}", got, target);
    }

    #[test]
    fn single_asset_terms_collapse(w in 0.1..5.0f64, s in 1.0..500.0f64, v in 0.05..1.0f64) {
        let fam = CorrelationFamily::new(CorrelationMatrix::identity(1));
        let t = cov_terms(&fam, &[w], &[s], &[v], v).unwrap();
        let want = (w * s * v).powi(2);
        for got in [t.cov_down, t.cov_center, t.cov_ones, t.cov_up, t.diag, t.target] {
            prop_assert!((got - want).abs() <= 1e-12 * want);
        }
    }
}
