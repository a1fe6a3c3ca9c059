use proptest::prelude::*;

use kanrecon::decoder::sdf_loss;
use kanrecon::fusion::MultiHeadFusion;
use kanrecon::geometry::ShapeFamily;
use kanrecon::kan::adapted_grid;
use kanrecon::metrics::{chamfer, fscore};
use kanrecon::numcore::{adam_step, linear_forward, rng, AdamState, Param, Tensor2};
use kanrecon::pipeline::{split_counts, TensorArchive};
use kanrecon::prior::select_prototype;

fn tensor(seed: u64, rows: usize, cols: usize) -> Tensor2 {
    rng::normal_tensor(&mut rng::seeded(seed), rows, cols, 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_matches_triple_loop(b in 1usize..=16, i in 1usize..=16, o in 1usize..=16, seed in any::<u64>()) {
        let (x, w, bias) = (tensor(seed, b, i), tensor(seed ^ 1, o, i), tensor(seed ^ 2, 1, o));
        let y = linear_forward(&x, &w, &bias).unwrap();
        for r in 0..b {
            for c in 0..o {
                let mut acc = bias.get(0, c);
                for k in 0..i {
                    acc += x.get(r, k) * w.get(c, k);
                }
                prop_assert!((y.get(r, c) - acc).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn adam_with_zero_gradient_is_identity(rows in 1usize..6, cols in 1usize..6, steps in 1usize..5, seed in any::<u64>()) {
        let mut p = Param::new(tensor(seed, rows, cols));
        let before = p.value.clone();
        let mut s = AdamState::for_param(&p, 1e-2);
        for _ in 0..steps {
            adam_step(&mut p, &mut s).unwrap();
        }
        prop_assert_eq!(p.value, before);
    }

    #[test]
    fn adapted_grid_is_increasing_and_extended(
        values in prop::collection::vec(-50.0f64..50.0, 12..200), gs in 1usize..10, k in 1usize..4, eps in 0.0f64..=1.0
    ) {
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        prop_assume!(hi - lo > 1e-6 && values.len() > gs);
        let g = adapted_grid(&values, gs, k, eps).unwrap();
        let kn = g.knots();
        let h = (hi - lo) / gs as f64;
        prop_assert_eq!(kn.len(), gs + 2 * k + 1);
        prop_assert!(kn.windows(2).all(|w| w[1] > w[0]));
        prop_assert!((kn[0] - (lo - k as f64 * h)).abs() <= 1e-9 * (1.0 + lo.abs()));
        prop_assert!((kn[kn.len() - 1] - (hi + k as f64 * h)).abs() <= 1e-6 * (1.0 + hi.abs()));
    }

    #[test]
    fn prototype_choice_ignores_instance_order(n in 1usize..8, rot in 0usize..8, seed in any::<u64>()) {
        let clouds: Vec<Tensor2> = (0..n as u64).map(|i| tensor(seed.wrapping_add(i), 10, 3)).collect();
        let refs: Vec<&Tensor2> = clouds.iter().collect();
        let chosen = select_prototype(0, &refs).unwrap();
        let r = rot % n;
        let rotated: Vec<&Tensor2> = refs[r..].iter().chain(&refs[..r]).copied().collect();
        let again = select_prototype(0, &rotated).unwrap();
        if !std::ptr::eq(rotated[again], refs[chosen]) {
            // only a tie may resolve differently
            let mut mean = Tensor2::zeros(10, 3);
            for t in &refs {
                mean.add_assign(t).unwrap();
            }
            let mean = mean.scale(1.0 / n as f64);
            let d = |t: &Tensor2| t.sub(&mean).unwrap().sum_squares();
            let (a, b) = (d(refs[chosen]), d(rotated[again]));
            prop_assert!((a - b).abs() <= 1e-9 * a.max(b));
        }
    }

    #[test]
    fn fusion_is_token_order_invariant(per_cat in 1usize..5, seed in any::<u64>(), shift in 0usize..20) {
        let cats = 3;
        let f = MultiHeadFusion::init(5, cats, 4, 8, 6, 4, std::f64::consts::E, &mut rng::seeded(seed)).unwrap();
        let t = cats * per_cat;
        let tokens = tensor(seed ^ 7, t, 4);
        let token_cats: Vec<usize> = (0..t).map(|i| i / per_cat).collect();
        let f_img = tensor(seed ^ 9, 1, 5);
        let base = f.fuse(f_img.row(0), 1, &tokens, &token_cats).unwrap();
        prop_assert_eq!(base.len(), 6);
        let order: Vec<usize> = (0..t).map(|i| (i + shift) % t).rev().collect();
        let pt = Tensor2::from_rows(&order.iter().map(|&i| tokens.row(i).to_vec()).collect::<Vec<_>>());
        let pc: Vec<usize> = order.iter().map(|&i| token_cats[i]).collect();
        let moved = f.fuse(f_img.row(0), 1, &pt, &pc).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn shape_sdfs_are_one_lipschitz(family in 0usize..9, seed in any::<u64>()) {
        let shape = ShapeFamily::for_category(family).sample(&mut rng::seeded(seed));
        prop_assert!(shape.fits_domain());
        let mut r = rng::seeded(seed ^ 3);
        for _ in 0..200 {
            let p = [rng::uniform(&mut r, -1.0, 1.0), rng::uniform(&mut r, -1.0, 1.0), rng::uniform(&mut r, -1.0, 1.0)];
            let q = [rng::uniform(&mut r, -1.0, 1.0), rng::uniform(&mut r, -1.0, 1.0), rng::uniform(&mut r, -1.0, 1.0)];
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
            prop_assert!((shape.sdf(p) - shape.sdf(q)).abs() <= d * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn sdf_loss_is_zero_only_when_clamped_values_agree(
        pairs in prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5), 1..40), delta in 0.01f64..0.3
    ) {
        let pred = Tensor2::from_rows(&pairs.iter().map(|p| [p.0]).collect::<Vec<_>>());
        let gt = Tensor2::from_rows(&pairs.iter().map(|p| [p.1]).collect::<Vec<_>>());
        let (loss, _) = sdf_loss(&pred, &gt, delta).unwrap();
        prop_assert!(loss >= 0.0);
        let agree = pairs.iter().all(|p| p.0.clamp(-delta, delta) == p.1.clamp(-delta, delta));
        prop_assert_eq!(loss == 0.0, agree);
        let (self_loss, g) = sdf_loss(&pred, &pred, delta).unwrap();
        prop_assert_eq!(self_loss, 0.0);
        prop_assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn point_metrics_stay_in_range(n in 1usize..60, m in 1usize..60, seed in any::<u64>(), tau in 0.01f64..1.0) {
        let (a, b) = (tensor(seed, n, 3), tensor(seed ^ 5, m, 3));
        let ab = chamfer(&a, &b).unwrap();
        prop_assert!(ab >= 0.0 && (ab - chamfer(&b, &a).unwrap()).abs() <= 1e-9 * ab.max(1.0));
        let f = fscore(&a, &b, tau).unwrap();
        prop_assert!((0.0..=100.0).contains(&f));
    }

    #[test]
    fn split_counts_sum_and_track_fractions(n in 0usize..5000) {
        let c = split_counts(n);
        prop_assert_eq!(c.iter().sum::<usize>(), n);
        if n % 10 == 0 {
            prop_assert!((c[0] as f64 - 0.556 * n as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn archive_round_trip_is_bit_exact(
        entries in prop::collection::vec(("[a-z.]{1,12}", 0usize..5, 0usize..5, any::<u64>()), 0..6)
    ) {
        let mut a = TensorArchive::new();
        for (name, r, c, seed) in &entries {
            a.insert(name.clone(), tensor(*seed, *r, *c));
        }
        let b = TensorArchive::from_bytes(&a.to_bytes()).unwrap();
        prop_assert_eq!(b.to_bytes(), a.to_bytes());
    }
}
