//! Average local correlation on paths that finish in the money, by strike.
//! Downside strikes see higher correlation on a steep index skew.
//!
//! cargo run --release --example correlation_skew [paths]

use localcorr::corrfam::{CenterSpec, CorrelationFamily};
use localcorr::lcm::{correlation_by_strike, simulate, SimulationConfig};
use localcorr::synth::{synthesize, Generator, SynthRecipe};

fn main() -> localcorr::Result<()> {
    let paths = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20_000);
    let mut recipe = SynthRecipe::flat(4, 0.25, CenterSpec::Flat { rho: 0.5 });
    recipe.skews = vec![0.1];
    recipe.samples = 1 << 16;
    recipe.generator = Generator::Steepened {
        bump: 0.03,
        length: 0.25,
    };
    let snap = synthesize(&recipe)?;
    let family = CorrelationFamily::new(recipe.correlation.build(4)?);
    let mut cfg = SimulationConfig::new(paths, &[1.0, 2.0], 50, 3)?;
    cfg.states = 2001;
    let cube = simulate(&snap, family, &cfg)?;
    let (below, above) = cube.mean_state_by_side();
    println!("mean state below forward {below:+.3}, above {above:+.3}");
    for t in [1.0, 2.0] {
        println!("T = {t}");
        for r in correlation_by_strike(&cube, t, &[0.7, 0.8, 0.9, 1.0, 1.1, 1.2])? {
            println!(
                "  {:5.0}%  conditioned {:>6}  unconditional {:.2}  paths {}",
                100.0 * r.moneyness,
                r.conditioned.map_or("-".into(), |c| format!("{c:.2}")),
                r.unconditional,
                r.itm_paths
            );
        }
    }
    Ok(())
}
