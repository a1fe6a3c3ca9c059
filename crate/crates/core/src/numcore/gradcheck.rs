//! Central-difference verification of hand-derived backward passes.
//!
//! A check drives an `objective(model, with_grad)` closure that returns a
//! scalar. With `with_grad = true` it must also run the backward pass so
//! that parameter gradients accumulate; the checker zeroes them first.
//! Every parameter entry (or an evenly spaced subset, for big tensors) is
//! then nudged by `±h` and the numeric slope compared against the analytic
//! one using `|a − n| / max(|a|, |n|, 1e-8)`.

use super::param::{Param, Parameterized};
use super::tensor::Tensor2;
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradcheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Upper bound on probed entries per tensor; `0` probes everything.
    pub max_entries_per_tensor: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            max_entries_per_tensor: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    /// `tensor[index]` with the largest relative error.
    pub worst: String,
    pub checked: usize,
    pub pass: bool,
    pub failure: Option<String>,
}

/// Fixed-probe scalar loss `Σ out ⊙ probe`; its gradient w.r.t. `out` is `probe`.
pub fn probe_loss(out: &Tensor2, probe: &Tensor2) -> f64 {
    out.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
}

fn with_param<M: Parameterized>(model: &mut M, target: usize, f: impl FnOnce(&mut Param)) {
    let mut i = 0;
    let mut f = Some(f);
    model.for_each_param(|_, p| {
        if i == target {
            if let Some(f) = f.take() {
                f(p);
            }
        }
        i += 1;
    });
}

fn probe_indices(len: usize, max: usize) -> Vec<usize> {
    if max == 0 || len <= max {
        return (0..len).collect();
    }
    // evenly spaced, always including both ends
    let mut idx: Vec<usize> = (0..max).map(|j| j * (len - 1) / (max - 1).max(1)).collect();
    idx.dedup();
    idx
}

pub fn gradcheck<M, F>(model: &mut M, cfg: GradcheckConfig, mut objective: F) -> Result<GradcheckReport>
where
    M: Parameterized,
    F: FnMut(&mut M, bool) -> Result<f64>,
{
    model.zero_grad();
    objective(model, true)?;

    let mut analytic: Vec<(String, Tensor2)> = Vec::new();
    model.for_each_param(|name, p| analytic.push((name.to_string(), p.grad.clone())));

    for (name, g) in &analytic {
        if let Some(pos) = g.data().iter().position(|x| !x.is_finite()) {
            return Ok(GradcheckReport {
                max_rel_err: f64::INFINITY,
                worst: format!("{name}[{pos}]"),
                checked: 0,
                pass: false,
                failure: Some(format!("non-finite analytic gradient at {name}[{pos}]")),
            });
        }
    }

    let h = cfg.step;
    let mut max_rel = 0.0f64;
    let mut worst = String::new();
    let mut checked = 0;
    for (t, (name, grad)) in analytic.iter().enumerate() {
        for j in probe_indices(grad.len(), cfg.max_entries_per_tensor) {
            let mut orig = 0.0;
            with_param(model, t, |p| {
                orig = p.value.data()[j];
                p.value.data_mut()[j] = orig + h;
            });
            let plus = objective(model, false)?;
            with_param(model, t, |p| p.value.data_mut()[j] = orig - h);
            let minus = objective(model, false)?;
            with_param(model, t, |p| p.value.data_mut()[j] = orig);

            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            checked += 1;
            if !(rel <= max_rel) {
                max_rel = rel;
                worst = format!("{name}[{j}] analytic={a:.6e} numeric={numeric:.6e}");
            }
        }
    }
    let pass = max_rel < cfg.tolerance;
    Ok(GradcheckReport {
        max_rel_err: max_rel,
        failure: (!pass).then(|| format!("max relative error {max_rel:.3e} at {worst}")),
        worst,
        checked,
        pass,
    })
}

/// Wraps loose tensors (model inputs) so they can be checked like parameters.
#[derive(Debug, Clone)]
pub struct Inputs(pub Vec<(String, Param)>);

impl Inputs {
    pub fn new(items: Vec<(&str, Tensor2)>) -> Self {
        Self(items.into_iter().map(|(n, t)| (n.to_string(), Param::new(t))).collect())
    }

    pub fn value(&self, i: usize) -> &Tensor2 {
        &self.0[i].1.value
    }

    pub fn add_grad(&mut self, i: usize, g: &Tensor2) -> Result<()> {
        self.0[i].1.grad.add_assign(g)
    }
}

impl Parameterized for Inputs {
    fn visit(&mut self, v: &mut super::param::Visitor<'_>) {
        for (name, p) in &mut self.0 {
            v.param(name, p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::layers::{Activation, ActivationLayer, Linear};
    use crate::numcore::param::Visitor;
    use crate::numcore::rng;

    struct Fragment {
        lin: Linear,
        act: ActivationLayer,
        x: Inputs,
        probe: Tensor2,
        corrupt: f64,
    }

    impl Parameterized for Fragment {
        fn visit(&mut self, v: &mut Visitor<'_>) {
            v.scope("lin", |v| self.lin.visit(v));
            v.scope("input", |v| self.x.visit(v));
        }
    }

    fn objective(m: &mut Fragment, grad: bool) -> Result<f64> {
        let h = m.lin.forward(m.x.value(0))?;
        let y = m.act.forward(&h);
        if grad {
            let g = m.act.backward(&m.probe)?;
            let gx = m.lin.backward(&g)?;
            m.x.add_grad(0, &gx.scale(m.corrupt))?;
        }
        Ok(probe_loss(&y, &m.probe))
    }

    fn fragment(kind: Activation, corrupt: f64) -> Fragment {
        let mut r = rng::seeded(3);
        Fragment {
            lin: Linear::new(
                rng::normal_tensor(&mut r, 5, 3, 1.0),
                rng::normal_tensor(&mut r, 1, 5, 1.0),
            )
            .unwrap(),
            act: ActivationLayer::new(kind),
            x: Inputs::new(vec![("x", rng::normal_tensor(&mut r, 4, 3, 1.0))]),
            probe: rng::normal_tensor(&mut r, 4, 5, 1.0),
            corrupt,
        }
    }

    #[test]
    fn linear_and_activations_pass() {
        for kind in [Activation::Silu, Activation::Softplus, Activation::Identity] {
            let mut f = fragment(kind, 1.0);
            let rep = gradcheck(&mut f, GradcheckConfig::default(), objective).unwrap();
            assert!(rep.pass, "{kind:?}: {rep:?}");
            assert_eq!(rep.checked, 15 + 5 + 12);
        }
    }

    #[test]
    fn corrupted_gradient_fails() {
        let mut f = fragment(Activation::Silu, 1.01);
        let rep = gradcheck(&mut f, GradcheckConfig::default(), objective).unwrap();
        assert!(!rep.pass);
        assert!(rep.worst.starts_with("input.x"), "{}", rep.worst);
    }

    #[test]
    fn non_finite_gradient_reports_location() {
        let mut f = fragment(Activation::Silu, f64::NAN);
        let rep = gradcheck(&mut f, GradcheckConfig::default(), objective).unwrap();
        assert!(!rep.pass);
        assert!(rep.failure.unwrap().contains("input.x"));
    }

    #[test]
    fn subsampling_keeps_endpoints() {
        assert_eq!(probe_indices(10, 3), vec![0, 4, 9]);
        assert_eq!(probe_indices(3, 10), vec![0, 1, 2]);
    }
}
