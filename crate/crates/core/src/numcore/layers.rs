use super::param::{Param, Parameterized, Visitor};
use super::rng::{self, Rng};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Pointwise nonlinearities used across the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Silu,
    Softplus,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Silu => silu(t),
            Activation::Softplus => softplus(t),
            Activation::Relu => t.max(0.0),
            Activation::Identity => t,
        }
    }

    #[inline]
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Activation::Silu => silu_grad(t),
            Activation::Softplus => sigmoid(t),
            Activation::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn silu(t: f64) -> f64 {
    t * sigmoid(t)
}

#[inline]
pub fn silu_grad(t: f64) -> f64 {
    let s = sigmoid(t);
    s * (1.0 + t * (1.0 - s))
}

#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else if t < -30.0 {
        t.exp()
    } else {
        t.exp().ln_1p()
    }
}

/// Elementwise activation of a whole tensor.
pub fn activation(x: &Tensor2, kind: Activation) -> Tensor2 {
    x.map(|t| kind.apply(t))
}

/// `out[r][c] = Σ_i x[r][i]·w[c][i] + b[0][c]`
pub fn linear_forward(x: &Tensor2, w: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if x.cols() != w.cols() {
        return Err(Error::dim("linear_forward", x.shape_str(), w.shape_str()));
    }
    if b.rows() != 1 || b.cols() != w.rows() {
        return Err(Error::dim("linear_forward bias", w.shape_str(), b.shape_str()));
    }
    let mut out = x.matmul_nt(w)?;
    let bias = b.row(0);
    for r in 0..out.rows() {
        for (o, bi) in out.row_mut(r).iter_mut().zip(bias) {
            *o += bi;
        }
    }
    Ok(out)
}

/// Affine layer `y = x·Wᵀ + b` with cached input for the backward pass.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    cache: Option<Tensor2>,
}

impl Linear {
    pub fn new(weight: Tensor2, bias: Tensor2) -> Result<Self> {
        if bias.rows() != 1 || bias.cols() != weight.rows() {
            return Err(Error::dim("Linear::new", weight.shape_str(), bias.shape_str()));
        }
        Ok(Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
            cache: None,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self::new(Tensor2::zeros(out_dim, in_dim), Tensor2::zeros(1, out_dim)).expect("shape by construction")
    }

    /// Xavier-uniform weights, zero bias.
    pub fn xavier(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let bound = rng::xavier_bound(in_dim, out_dim);
        Self::new(
            rng::uniform_tensor(rng, out_dim, in_dim, bound),
            Tensor2::zeros(1, out_dim),
        )
        .expect("shape by construction")
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.rows()
    }

    /// Stateless evaluation; does not touch the cache.
    pub fn eval(&self, x: &Tensor2) -> Result<Tensor2> {
        linear_forward(x, &self.weight.value, &self.bias.value)
    }

    pub fn forward(&mut self, x: &Tensor2) -> Result<Tensor2> {
        let y = self.eval(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    /// Accumulates weight/bias grads and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor2) -> Result<Tensor2> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("Linear::backward called before forward".into()))?;
        if grad_out.rows() != x.rows() || grad_out.cols() != self.out_dim() {
            return Err(Error::dim(
                "Linear::backward",
                format!("{}x{}", x.rows(), self.out_dim()),
                grad_out.shape_str(),
            ));
        }
        grad_out.accumulate_tn(x, &mut self.weight.grad)?;
        self.bias.grad.add_assign(&grad_out.column_sums())?;
        grad_out.matmul(&self.weight.value)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

impl Parameterized for Linear {
    fn visit(&mut self, v: &mut Visitor<'_>) {
        v.param("weight", &mut self.weight);
        v.param("bias", &mut self.bias);
    }
}

/// Caches pre-activations so the elementwise derivative can be applied later.
#[derive(Debug, Clone)]
pub struct ActivationLayer {
    pub kind: Activation,
    cache: Option<Tensor2>,
}

impl ActivationLayer {
    pub fn new(kind: Activation) -> Self {
        Self { kind, cache: None }
    }

    pub fn forward(&mut self, x: &Tensor2) -> Tensor2 {
        let y = activation(x, self.kind);
        self.cache = Some(x.clone());
        y
    }

    pub fn backward(&mut self, grad_out: &Tensor2) -> Result<Tensor2> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("activation backward called before forward".into()))?;
        x.same_shape(grad_out, "ActivationLayer::backward")?;
        let kind = self.kind;
        let data = x
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&t, &g)| g * kind.derivative(t))
            .collect();
        Tensor2::from_vec(x.rows(), x.cols(), data)
    }
}

/// Stack of linear layers with an activation between consecutive layers
/// (none after the last).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    acts: Vec<ActivationLayer>,
}

impl Mlp {
    pub fn new(layers: Vec<Linear>, act: Activation) -> Result<Self> {
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::dim(
                    "Mlp::new",
                    w[0].weight.value.shape_str(),
                    w[1].weight.value.shape_str(),
                ));
            }
        }
        let acts = (1..layers.len()).map(|_| ActivationLayer::new(act)).collect();
        Ok(Self { layers, acts })
    }

    /// Xavier-initialised MLP over the given widths.
    pub fn xavier(widths: &[usize], act: Activation, rng: &mut Rng) -> Self {
        let layers = widths.windows(2).map(|w| Linear::xavier(w[0], w[1], rng)).collect();
        Self::new(layers, act).expect("widths chain by construction")
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn activation(&self) -> Option<Activation> {
        self.acts.first().map(|a| a.kind)
    }

    pub fn eval(&self, x: &Tensor2) -> Result<Tensor2> {
        let mut h = self.layers[0].eval(x)?;
        for (layer, act) in self.layers[1..].iter().zip(&self.acts) {
            h = layer.eval(&activation(&h, act.kind))?;
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &Tensor2) -> Result<Tensor2> {
        let mut h = self.layers[0].forward(x)?;
        for (layer, act) in self.layers[1..].iter_mut().zip(self.acts.iter_mut()) {
            let a = act.forward(&h);
            h = layer.forward(&a)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad_out: &Tensor2) -> Result<Tensor2> {
        let n = self.layers.len();
        let mut g = self.layers[n - 1].backward(grad_out)?;
        for i in (0..n - 1).rev() {
            g = self.acts[i].backward(&g)?;
            g = self.layers[i].backward(&g)?;
        }
        Ok(g)
    }
}

impl Parameterized for Mlp {
    fn visit(&mut self, v: &mut Visitor<'_>) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            v.scope(&format!("l{i}"), |v| layer.visit(v));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_identity_and_bias() {
        let x = Tensor2::from_rows(&[[1.0, 2.0]]);
        let out = linear_forward(&x, &Tensor2::identity(2), &Tensor2::zeros(1, 2)).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);

        let z = Tensor2::zeros(1, 2);
        let w = Tensor2::from_rows(&[[0.3, -7.0], [2.0, 5.0]]);
        let b = Tensor2::from_rows(&[[3.0, -1.0]]);
        assert_eq!(linear_forward(&z, &w, &b).unwrap().data(), &[3.0, -1.0]);
    }

    #[test]
    fn linear_shape_error_names_both_shapes() {
        let err = linear_forward(&Tensor2::zeros(1, 3), &Tensor2::zeros(2, 2), &Tensor2::zeros(1, 2)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1x3") && msg.contains("2x2"), "{msg}");
    }

    #[test]
    fn activation_values() {
        assert_eq!(silu(0.0), 0.0);
        assert!((silu(1.0) - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(silu_grad(0.0), 0.5);
        for t in [-800.0, -31.0, 31.0, 800.0] {
            assert!(softplus(t).is_finite() && silu(t).is_finite());
            assert!(silu_grad(t).is_finite());
        }
    }

    #[test]
    fn linear_backward_all_ones_gives_column_sums() {
        let w = Tensor2::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]]);
        let mut l = Linear::new(w.clone(), Tensor2::zeros(1, 2)).unwrap();
        l.forward(&Tensor2::from_rows(&[[0.1, 0.2, 0.3]])).unwrap();
        let g = l.backward(&Tensor2::filled(1, 2, 1.0)).unwrap();
        assert_eq!(g.data(), w.column_sums().data());
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut l = Linear::zeros(2, 2);
        assert!(matches!(l.backward(&Tensor2::zeros(1, 2)), Err(Error::State(_))));
        let mut a = ActivationLayer::new(Activation::Silu);
        assert!(matches!(a.backward(&Tensor2::zeros(1, 2)), Err(Error::State(_))));
    }
}
