//! Trains one desk-profile variant end to end and scores the test split.
//!
//! `cargo run --release --example desk_run -- [steps] [ablation] [seed]`

use std::time::Instant;

use kanrecon::pipeline::{build_priors, evaluate_split, Ablation, Dataset, RunConfig, Split, Trainer};

fn main() -> kanrecon::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps = args.get(1).map_or(Ok(1000), |s| s.parse()).expect("steps");
    let ablate: Ablation = args.get(2).map_or(Ok(Ablation::Full), |s| s.parse())?;
    let seed = args.get(3).map_or(Ok(0), |s| s.parse()).expect("seed");
    let cfg = RunConfig {
        steps,
        ablate,
        seed,
        eval_res: 32,
        eval_samples: 2000,
        ..RunConfig::desk()
    };
    let t0 = Instant::now();
    let ds = Dataset::generate(&RunConfig { seed: 0, ..cfg.clone() })?;
    println!("data {:.1}s", t0.elapsed().as_secs_f64());
    let lib = ablate
        .uses_prior()
        .then(|| build_priors(&ds, &cfg))
        .transpose()?
        .map(|b| b.library);
    println!("priors {:.1}s", t0.elapsed().as_secs_f64());
    let mut t = Trainer::new(&cfg, &ds, lib.as_ref())?;
    let t1 = Instant::now();
    let chunk = (steps / 10).max(1);
    while t.step < t.total_steps {
        t.run(&ds, t.step + chunk, None)?;
        let w = &t.losses[t.step.saturating_sub(chunk)..];
        println!(
            "step {:5}  loss {:.5}  {:.1} ms/step",
            t.step,
            w.iter().sum::<f64>() / w.len() as f64,
            1e3 * t1.elapsed().as_secs_f64() / t.step as f64
        );
    }
    let t2 = Instant::now();
    let s = evaluate_split(&t.model, &ds, Split::Test, &cfg)?;
    println!("eval {:.1}s", t2.elapsed().as_secs_f64());
    print!("{}", s.to_csv());
    Ok(())
}
