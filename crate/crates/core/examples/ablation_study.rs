//! Trains all five architecture variants under shared seeds and step
//! budget, then compares median test-split CD and NC against the full
//! model. Writes the study as JSON.
//!
//! `cargo run --release --example ablation_study -- [steps] [seeds] [out.json]`

use kanrecon::pipeline::{run_ablation_study, Dataset, RunConfig};

fn main() -> kanrecon::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2500);
    let n_seeds: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let out = args.get(3).cloned().unwrap_or_else(|| "ablation_study.json".into());
    let cfg = RunConfig {
        eval_res: 32,
        eval_samples: 2000,
        ..RunConfig::desk()
    };
    let ds = Dataset::generate(&cfg)?;
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let study = run_ablation_study(&cfg, &ds, &seeds, steps)?;
    for r in &study.runs {
        println!(
            "seed {} {:9} loss {:.4} -> {:.4}  CD {:8.3}  NC {:.4}  F {:6.2}  IoU {:.3}  failed {}",
            r.seed,
            r.variant,
            r.first_loss,
            r.final_loss,
            r.summary.overall.cd,
            r.summary.overall.nc,
            r.summary.overall.fscore,
            r.summary.overall.iou,
            r.summary.failures()
        );
    }
    for m in &study.medians {
        println!(
            "median {:9} CD {:8.3}  NC {:.4}  failures {}",
            m.variant, m.cd, m.nc, m.failures
        );
    }
    if study.holds() {
        println!("full model is strictly best on median CD and NC");
    } else {
        for i in &study.inversions {
            println!("inversion: {i}");
        }
    }
    std::fs::write(&out, serde_json::to_string_pretty(&study)?).map_err(|e| kanrecon::Error::Io {
        path: out.into(),
        source: e,
    })?;
    Ok(())
}
