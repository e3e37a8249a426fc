//! Load a snapshot file, reconcile the basket with the index, and print the
//! largest constituents.
//!
//! cargo run --release --example snapshot_io <snapshot.json>

use localcorr::marketdata::load_snapshot;

fn main() -> localcorr::Result<()> {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: snapshot_io <snapshot.json>  (see the synth_market example)");
        std::process::exit(2);
    };
    let snap = load_snapshot(&path)?;
    println!(
        "{} as of {}: {} constituents, index {:.4}, basket {:.4}",
        snap.index.id,
        snap.as_of,
        snap.n_assets(),
        snap.index.spot,
        snap.basket_spot()
    );
    let mut weights: Vec<(usize, f64)> = snap
        .weights()
        .iter()
        .zip(snap.spots())
        .map(|(w, s)| w * s)
        .enumerate()
        .collect();
    weights.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (i, contribution) in weights.iter().take(5) {
        let a = &snap.assets[*i];
        let cs = snap.asset_call_surface(*i)?;
        println!(
            "  {:<8} spot {:9.3}  index points {:8.3}  1y atm vol {:.2}%",
            a.id,
            a.spot,
            contribution,
            100.0 * cs.implied_vol(1.0, a.spot)
        );
    }
    Ok(())
}
