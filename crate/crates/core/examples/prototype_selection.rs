//! Picks each category's prototype on a small dataset and prints the
//! encoded library.
//!
//! `cargo run --release --example prototype_selection`

use kanrecon::pipeline::{build_priors, Dataset, RunConfig};

fn main() -> kanrecon::Result<()> {
    let cfg = RunConfig {
        instances_per_category: 8,
        samples_per_instance: 1000,
        image_res: 16,
        ..RunConfig::desk()
    };
    let ds = Dataset::generate(&cfg)?;
    let build = build_priors(&ds, &cfg)?;
    for c in &build.choices {
        println!(
            "{:8} prototype {:3} of candidates {:?}",
            ds.manifest.categories[c.category], c.instance, c.candidates
        );
    }
    let lib = &build.library;
    println!(
        "library: {} prototypes, {} points each, {}-d features",
        lib.num_categories(),
        lib.points_per_prototype(),
        lib.feature_width()
    );
    for (c, x, y) in &build.pca {
        println!("pca category {c}: ({x:+.4}, {y:+.4})");
    }
    Ok(())
}
