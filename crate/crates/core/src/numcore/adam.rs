use super::param::{Param, Parameterized};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Per-tensor Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Tensor2,
    pub v: Tensor2,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, lr: f64) -> Self {
        Self {
            m: Tensor2::zeros(rows, cols),
            v: Tensor2::zeros(rows, cols),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_param(p: &Param, lr: f64) -> Self {
        Self::new(p.value.rows(), p.value.cols(), lr)
    }
}

/// One bias-corrected Adam update. The gradient is left in place.
pub fn adam_step(param: &mut Param, state: &mut AdamState) -> Result<()> {
    if param.value.shape() != state.m.shape() || param.grad.shape() != state.m.shape() {
        return Err(Error::dim("adam_step", param.value.shape_str(), state.m.shape_str()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = state.lr;
    let eps = state.eps;
    let w = param.value.data_mut();
    let g = param.grad.data();
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for i in 0..w.len() {
        let gi = g[i];
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam over every parameter of a model, in visitor order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub states: Vec<AdamState>,
    lr: f64,
}

impl Adam {
    pub fn new<M: Parameterized>(model: &mut M, lr: f64) -> Self {
        let mut states = Vec::new();
        model.for_each_param(|_, p| states.push(AdamState::for_param(p, lr)));
        Self { states, lr }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
        for s in &mut self.states {
            s.lr = lr;
        }
    }

    pub fn step<M: Parameterized>(&mut self, model: &mut M) -> Result<()> {
        let mut i = 0;
        let mut result = Ok(());
        let states = &mut self.states;
        model.for_each_param(|name, p| {
            if result.is_err() {
                return;
            }
            result = match states.get_mut(i) {
                Some(s) => adam_step(p, s).map_err(|e| match e {
                    Error::Dimension { lhs, rhs, .. } => Error::dim("Adam::step", format!("{name} {lhs}"), rhs),
                    e => e,
                }),
                None => Err(Error::State(format!("no optimizer state for {name}"))),
            };
            i += 1;
        });
        result?;
        if i != self.states.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} tensors, model has {i}",
                self.states.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Param::new(Tensor2::filled(1, 1, 1.0));
        p.grad.fill(2.0);
        let mut s = AdamState::for_param(&p, 0.1);
        adam_step(&mut p, &mut s).unwrap();
        assert!((p.value.get(0, 0) - 0.9).abs() < 1e-8);
        assert_eq!(s.step, 1);
        assert_eq!(p.grad.get(0, 0), 2.0);
    }

    #[test]
    fn zero_grad_is_identity() {
        let mut p = Param::new(Tensor2::from_rows(&[[1.5, -2.0]]));
        let before = p.value.clone();
        let mut s = AdamState::for_param(&p, 0.1);
        for _ in 0..5 {
            adam_step(&mut p, &mut s).unwrap();
        }
        assert_eq!(p.value, before);
    }

    #[test]
    fn quadratic_converges() {
        let mut p = Param::new(Tensor2::zeros(1, 1));
        let mut s = AdamState::for_param(&p, 0.05);
        for _ in 0..100 {
            let w = p.value.get(0, 0);
            p.grad.set(0, 0, 2.0 * (w - 3.0));
            adam_step(&mut p, &mut s).unwrap();
        }
        assert!((p.value.get(0, 0) - 3.0).abs() < 0.5);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Param::zeros(2, 2);
        let mut s = AdamState::new(1, 2, 0.1);
        assert!(matches!(adam_step(&mut p, &mut s), Err(Error::Dimension { .. })));
    }
}
