//! Simulate a skewed index basket under local correlation and check that the
//! index and its constituents reprice their own smiles.
//!
//! cargo run --release --example lcm_repricing [paths]

use localcorr::corrfam::{CenterSpec, CorrelationFamily};
use localcorr::lcm::{price_european, LcmModel, Payoff, SimulationConfig};
use localcorr::marketdata::{black_call, implied_vol};
use localcorr::synth::{synthesize, Generator, SynthRecipe};

fn main() -> localcorr::Result<()> {
    let paths = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20_000);
    let mut recipe = SynthRecipe::flat(3, 0.25, CenterSpec::Flat { rho: 0.4 });
    recipe.atm_vols = vec![0.2, 0.25, 0.3];
    recipe.skews = vec![0.1];
    recipe.rate = 0.02;
    recipe.samples = 1 << 16;
    recipe.generator = Generator::Steepened {
        bump: 0.02,
        length: 0.25,
    };
    let snap = synthesize(&recipe)?;
    let family = CorrelationFamily::new(recipe.correlation.build(3)?);
    let mut cfg = SimulationConfig::new(paths, &[1.0], 100, 7)?;
    cfg.states = 2001;
    let model = LcmModel::calibrate(&snap, family, cfg.local_vol)?;
    let cube = model.simulate(&cfg)?;
    println!(
        "{paths} paths, clamped steps {:.3}%, bound violations {:.3}%",
        100.0 * cube.clamp_fraction(),
        100.0 * cube.violation_fraction()
    );

    let t = 1.0;
    let index = snap.index_call_surface()?;
    let (f, df) = (index.forward(t), index.discount(t));
    println!("strike  market   lcm    gap(vp)  se(vp)");
    for m in [0.8, 0.9, 1.0, 1.1, 1.2] {
        let k = m * snap.index.spot;
        // out-of-the-money side, converted to a call by parity
        let (payoff, to_call) = if k < f {
            (
                Payoff::IndexPut {
                    maturity: t,
                    strike: k,
                },
                df * (f - k),
            )
        } else {
            (
                Payoff::IndexCall {
                    maturity: t,
                    strike: k,
                },
                0.0,
            )
        };
        let r = price_european(&cube, &payoff)?;
        let vol = implied_vol(r.price + to_call, f, k, t, df)?;
        let vega = (black_call(f, k, t, vol + 1e-4, df)? - black_call(f, k, t, vol, df)?) / 1e-4;
        let market = index.implied_vol(t, k);
        println!(
            "{:5.0}%  {:6.2}  {:6.2}  {:+7.2}  {:6.2}",
            100.0 * m,
            100.0 * market,
            100.0 * vol,
            100.0 * (vol - market),
            100.0 * r.std_error / vega
        );
    }
    for i in 0..3 {
        let cs = snap.asset_call_surface(i)?;
        let k = snap.assets[i].spot;
        let r = price_european(
            &cube,
            &Payoff::AssetCall {
                asset: i,
                maturity: t,
                strike: k,
            },
        )?;
        let vol = implied_vol(r.price, cs.forward(t), k, t, cs.discount(t))?;
        println!(
            "{} at-the-money: market {:.2} lcm {:.2}",
            snap.assets[i].id,
            100.0 * cs.implied_vol(t, k),
            100.0 * vol
        );
    }
    Ok(())
}
