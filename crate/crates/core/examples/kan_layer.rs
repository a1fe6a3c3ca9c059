//! A KAN layer before and after grid adaptation on a skewed batch.
//!
//! `cargo run --example kan_layer`

use kanrecon::kan::{adapted_grid, KanLayer};
use kanrecon::numcore::{rng, Tensor2};
use kanrecon::spline::SplineGrid;

fn main() -> kanrecon::Result<()> {
    let mut r = rng::stream(7, &[0]);
    let grid = SplineGrid::uniform(-1.0, 1.0, 8, 3)?;
    let mut layer = KanLayer::init(2, 3, &grid, &mut r);
    // inputs crowd towards -1
    let mut x = Tensor2::zeros(256, 2);
    for i in 0..256 {
        let u = (i as f64 + 0.5) / 256.0;
        x.set(i, 0, 2.0 * u * u - 1.0);
        x.set(i, 1, 2.0 * u - 1.0);
    }
    let before = layer.eval(&x)?;
    let col0: Vec<f64> = (0..x.rows()).map(|i| x.get(i, 0)).collect();
    for eps in [1.0, 0.02, 0.0] {
        let g = adapted_grid(&col0, 8, 3, eps)?;
        let (lo, hi) = g.interior();
        let k = g.knots();
        println!(
            "eps {eps:<4} interior [{lo:.3}, {hi:.3}] knots {:.3?}",
            &k[3..k.len() - 3]
        );
    }
    layer.adapt_grid(&x, 0.02, true)?;
    let after = layer.eval(&x)?;
    let rel = after.sub(&before)?.sum_squares().sqrt() / before.sum_squares().sqrt();
    println!("refit after adaptation: relative output change {rel:.4}");
    Ok(())
}
