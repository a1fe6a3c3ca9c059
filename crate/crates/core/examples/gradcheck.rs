//! Runs the finite-difference gradient check over every module.
//!
//! `cargo run --release --example gradcheck -- [seed]`

use kanrecon::pipeline::run_gradchecks;

fn main() -> kanrecon::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(0), |s| s.parse()).expect("seed");
    let suite = run_gradchecks(seed)?;
    for m in &suite.modules {
        println!(
            "{:18} {:6} entries  max rel err {:.3e}  worst {}  {}",
            m.module,
            m.checked,
            m.max_rel_err,
            m.worst,
            if m.pass { "ok" } else { "FAIL" }
        );
    }
    println!(
        "tolerance {:e}, step {:e}: {}",
        suite.tolerance,
        suite.step,
        if suite.pass { "pass" } else { "FAIL" }
    );
    Ok(())
}
