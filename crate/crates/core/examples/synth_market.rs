//! Build a synthetic five-asset market whose index smile is steeper than any
//! Gaussian copula can produce, and save it as a snapshot file.
//!
//! cargo run --release --example synth_market [out.json]

use localcorr::corrfam::CenterSpec;
use localcorr::marketdata::save_snapshot;
use localcorr::synth::{synthesize, Generator, SynthRecipe};

fn main() -> localcorr::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "steepened_snapshot.json".into());
    let mut recipe = SynthRecipe::flat(5, 0.25, CenterSpec::Flat { rho: 0.5 });
    recipe.atm_vols = vec![0.2, 0.22, 0.25, 0.28, 0.3];
    recipe.skews = vec![0.1];
    recipe.rate = 0.02;
    recipe.dividends = vec![0.01];
    recipe.samples = 1 << 16;
    recipe.generator = Generator::Steepened {
        bump: 0.03,
        length: 0.25,
    };
    let snap = synthesize(&recipe)?;
    let index = snap.index_call_surface()?;
    println!("index spot {:.4}", snap.index.spot);
    println!("maturity  vol@70%  vol@100%  vol@130%");
    for &t in snap.index.vol_surface.maturities() {
        let v = |m: f64| 100.0 * index.implied_vol(t, m * snap.index.spot);
        println!("{t:8.2}  {:7.2}  {:8.2}  {:8.2}", v(0.7), v(1.0), v(1.3));
    }
    save_snapshot(&snap, &out)?;
    println!("wrote {out}");
    Ok(())
}
