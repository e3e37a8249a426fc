//! Walk the correlation family away from a sector center and inspect the
//! precomputed Cholesky table.
//!
//! cargo run --release --example correlation_table

use localcorr::corrfam::{build_table, default_shift, CenterSpec, CorrelationFamily};

fn main() -> localcorr::Result<()> {
    let center = CenterSpec::parse("sectors:3,3:0.7:0.2")?.build(6)?;
    let family = CorrelationFamily::new(center);
    println!("state   mean corr  within  across");
    for state in [-20.0, -2.0, -0.5, 0.0, 0.5, 2.0, 20.0] {
        let m = family.eval_state(state);
        println!(
            "{state:6.1}  {:9.4}  {:6.4}  {:6.4}",
            m.mean_off_diagonal(),
            m.get(0, 1),
            m.get(0, 3)
        );
    }
    let states = 101;
    let shift = default_shift(&family, states);
    let table = build_table(&family, states, shift)?;
    println!(
        "table: {} entries, spacing {shift:.4}, states {:.2}..{:.2}",
        table.len(),
        table.min_state(),
        table.max_state()
    );
    for s in [-100.0, -1.01, 0.0, 0.4, 1e6] {
        let hit = table.lookup_state(s);
        let e = table.entry(hit.index);
        println!(
            "lookup {s:>8}: entry {:3} state {:+.4} mean corr {:.4}{}",
            hit.index,
            e.state,
            e.mean_correlation,
            if hit.clamped { " (clamped)" } else { "" }
        );
    }
    Ok(())
}
