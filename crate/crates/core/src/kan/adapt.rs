use crate::error::{Error, Result};
use crate::spline::SplineGrid;

/// Tie-breaking offset applied when blended knots coincide.
pub const KNOT_JITTER: f64 = 1e-9;

/// Linear-interpolated quantiles of sorted data at `count` evenly spaced
/// levels `0, 1/(count−1), …, 1`.
pub fn sample_quantiles(sorted: &[f64], count: usize) -> Vec<f64> {
    let n = sorted.len();
    if count == 1 {
        return vec![sorted[0]];
    }
    (0..count)
        .map(|j| {
            let pos = (n - 1) as f64 * j as f64 / (count - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        })
        .collect()
}

/// Dynamic grid adaptation for one set of input samples.
///
/// The interior knots blend the empirical quantiles of `values` with the
/// uniform grid over `[min, max]`:
/// `G' = (1 − eps)·G_adapt + eps·G_uni`. Outside the interior the grid is
/// continued with `order` uniform steps of `h = (max − min)/grid_size`.
pub fn adapted_grid(values: &[f64], grid_size: usize, order: usize, eps: f64) -> Result<SplineGrid> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Config(format!("smoothing factor {eps} outside [0, 1]")));
    }
    if grid_size == 0 {
        return Err(Error::Config("grid_size must be at least 1".into()));
    }
    if values.len() < grid_size + 1 {
        return Err(Error::dim(
            "adapted_grid",
            format!("{} samples", values.len()),
            format!("at least grid_size+1 = {}", grid_size + 1),
        ));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite grid input {bad}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (x_min, x_max) = (sorted[0], sorted[sorted.len() - 1]);
    if !(x_max > x_min) {
        return Err(Error::DegenerateRange { min: x_min, max: x_max });
    }
    let h = (x_max - x_min) / grid_size as f64;
    let adaptive = sample_quantiles(&sorted, grid_size + 1);

    let mut interior: Vec<f64> = adaptive
        .iter()
        .enumerate()
        .map(|(j, &q)| {
            let uniform = x_min + h * j as f64;
            (1.0 - eps) * q + eps * uniform
        })
        .collect();
    // exact endpoints: quantiles at levels 0 and 1 are min and max
    interior[0] = x_min;
    for j in 1..interior.len() {
        if interior[j] <= interior[j - 1] {
            interior[j] = interior[j - 1] + KNOT_JITTER;
        }
    }

    let first = interior[0];
    let last = interior[interior.len() - 1];
    let mut knots = Vec::with_capacity(grid_size + 2 * order + 1);
    knots.extend((1..=order).rev().map(|m| first - h * m as f64));
    knots.extend_from_slice(&interior);
    knots.extend((1..=order).map(|m| last + h * m as f64));
    SplineGrid::from_knots(knots, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::rng;

    #[test]
    fn eps_one_is_uniform() {
        let mut r = rng::seeded(1);
        let xs: Vec<f64> = (0..300).map(|_| rng::normal(&mut r).powi(3)).collect();
        let g = adapted_grid(&xs, 6, 3, 1.0).unwrap();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let h = (hi - lo) / 6.0;
        for (j, &t) in g.knots().iter().enumerate() {
            let want = lo + h * (j as f64 - 3.0);
            assert!((t - want).abs() < 1e-12 * (1.0 + want.abs()), "{j}: {t} vs {want}");
        }
    }

    #[test]
    fn eps_zero_recovers_quantiles_of_uniform_sample() {
        let mut r = rng::seeded(2);
        let xs: Vec<f64> = (0..4000).map(|_| rng::uniform(&mut r, 0.0, 1.0)).collect();
        let g = adapted_grid(&xs, 4, 3, 0.0).unwrap();
        let interior = &g.knots()[3..8];
        for (got, want) in interior.iter().zip([0.0, 0.25, 0.5, 0.75, 1.0]) {
            assert!((got - want).abs() < 0.03, "{got} vs {want}");
        }
    }

    #[test]
    fn ties_are_split() {
        let mut xs = vec![0.0; 50];
        xs.push(1.0);
        let g = adapted_grid(&xs, 4, 2, 0.0).unwrap();
        assert!(g.knots().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        assert!(matches!(
            adapted_grid(&[2.0; 10], 4, 3, 0.5),
            Err(Error::DegenerateRange { .. })
        ));
        assert!(adapted_grid(&[0.0, 1.0], 4, 3, 0.5).is_err());
        assert!(adapted_grid(&[0.0, 1.0, 2.0], 2, 3, 1.5).is_err());
    }

    #[test]
    fn quantiles_match_linear_interpolation() {
        let s = [0.0, 1.0, 2.0, 10.0];
        assert_eq!(sample_quantiles(&s, 3), vec![0.0, 1.5, 10.0]);
    }
}
