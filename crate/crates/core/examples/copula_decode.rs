//! Compare an index smile with the Gaussian copula basket smile at the
//! at-the-money implied flat correlation, on a consistent and on a steepened
//! market.
//!
//! cargo run --release --example copula_decode

use localcorr::copula::{calibrate_atm_flat_correlation, skew_comparison, CopulaSpec, Sampler};
use localcorr::corrfam::{CenterSpec, CorrelationMatrix};
use localcorr::synth::{synthesize, Generator, SynthRecipe};

fn main() -> localcorr::Result<()> {
    let t = 1.0;
    let moneyness = [0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3];
    for generator in [
        Generator::CopulaConsistent,
        Generator::Steepened {
            bump: 0.03,
            length: 0.25,
        },
    ] {
        let mut recipe = SynthRecipe::flat(4, 0.25, CenterSpec::Flat { rho: 0.5 });
        recipe.skews = vec![0.1];
        recipe.samples = 1 << 16;
        recipe.generator = generator.clone();
        let snap = synthesize(&recipe)?;
        let base = CopulaSpec::new(CorrelationMatrix::identity(4), 1 << 16, Sampler::Sobol, 1)?;
        let rho = calibrate_atm_flat_correlation(&snap, &base, t)?;
        let spec = base.with_correlation(CorrelationMatrix::flat(4, rho)?);
        println!("{generator:?}: implied flat correlation {rho:.4}");
        println!("  strike  market  copula   gap(vp)");
        for r in skew_comparison(&snap, &spec, t, &moneyness)? {
            println!(
                "  {:5.0}%  {:6.2}  {:6.2}  {:+7.2}",
                100.0 * r.moneyness,
                100.0 * r.market_vol,
                100.0 * r.copula_vol,
                100.0 * (r.market_vol - r.copula_vol)
            );
        }
    }
    Ok(())
}
