//! Evaluates a cubic B-spline basis, checks partition of unity and fits a
//! spline to `sin`.
//!
//! `cargo run --example spline_basis`

use kanrecon::spline::{fit_coefficients, SplineGrid};

fn main() -> kanrecon::Result<()> {
    let grid = SplineGrid::uniform(-1.0, 1.0, 5, 3)?;
    println!("knots {:?}", grid.knots());
    println!("{} basis functions", grid.num_basis());
    for x in [-0.9, -0.3, 0.0, 0.45, 0.99] {
        let b = grid.local_basis(x);
        let parts: Vec<String> = b.iter().map(|(j, v, _)| format!("B{j}={v:.4}")).collect();
        let sum: f64 = b.iter().map(|(_, v, _)| v).sum();
        println!("x={x:+.2}  {}  sum={sum:.15}", parts.join(" "));
    }
    let xs: Vec<f64> = (0..200).map(|i| -1.0 + 2.0 * i as f64 / 199.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin()).collect();
    let c = fit_coefficients(&xs, &ys, &grid)?;
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(&x, y)| (grid.evaluate(&c, x) - y).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    println!("least-squares fit of sin(3x): rms {rms:.2e}");
    Ok(())
}
