//! Local volatility and risk-neutral density of a skewed single name.
//!
//! cargo run --release --example local_vol_surface

use localcorr::corrfam::CenterSpec;
use localcorr::dupire::{cumulative, implied_density, GridSpec, LocalVolParams, LocalVolSurface};
use localcorr::synth::{synthesize, SynthRecipe};

fn main() -> localcorr::Result<()> {
    let mut recipe = SynthRecipe::flat(1, 0.22, CenterSpec::Identity);
    recipe.skews = vec![0.15];
    recipe.rate = 0.03;
    recipe.dividends = vec![0.01];
    let snap = synthesize(&recipe)?;
    let surface = snap.asset_call_surface(0)?;
    let lv = LocalVolSurface::new("A0", surface.clone(), LocalVolParams::default());

    println!("   T   strike  implied  local   density    cdf");
    for t in [0.5, 1.0, 2.0] {
        for m in [0.7, 0.85, 1.0, 1.15, 1.3] {
            let k = m * surface.forward(t);
            println!(
                "{t:4.1} {k:8.2} {:8.4} {:6.4} {:9.6} {:6.4}",
                surface.implied_vol(t, k),
                lv.local_vol(t, k),
                implied_density(&surface, t, k).value,
                cumulative(&surface, t, k)
            );
        }
    }
    let grid = lv.grid(&[0.5, 1.0], GridSpec::default());
    let mut csv = Vec::new();
    grid.write_csv(&mut csv).expect("in-memory write");
    println!("grid: {} rows", csv.split(|b| *b == b'\n').count() - 2);
    let floors = lv.floor_counts();
    println!(
        "evaluations {}, denominator floors {}",
        floors.evaluations, floors.denominator_floors
    );
    Ok(())
}
