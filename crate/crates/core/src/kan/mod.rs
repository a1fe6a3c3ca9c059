//! KAN layers, the multi-scale decoder stack, and grid adaptation.

mod adapt;
mod layer;

pub use adapt::{adapted_grid, sample_quantiles, KNOT_JITTER};
pub use layer::KanLayer;

use crate::error::{Error, Result};
use crate::numcore::rng::Rng;
use crate::numcore::{Parameterized, Tensor2, Visitor};
use crate::spline::SplineGrid;

/// Layer widths of a KAN stack, ending in the scalar SDF output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderSchedule(Vec<usize>);

impl DecoderSchedule {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "schedule needs at least two widths, got {dims:?}"
            )));
        }
        if dims.last() != Some(&1) {
            return Err(Error::Config(format!("schedule must end in 1, got {dims:?}")));
        }
        if dims.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(format!(
                "schedule widths must strictly decrease, got {dims:?}"
            )));
        }
        Ok(Self(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn input_width(&self) -> usize {
        self.0[0]
    }
}

/// Sequential KAN layers following a [`DecoderSchedule`].
#[derive(Debug, Clone)]
pub struct KanStack {
    pub layers: Vec<KanLayer>,
}

impl KanStack {
    pub fn init(schedule: &DecoderSchedule, grid: &SplineGrid, rng: &mut Rng) -> Self {
        let layers = schedule
            .dims()
            .windows(2)
            .map(|w| KanLayer::init(w[0], w[1], grid, rng))
            .collect();
        Self { layers }
    }

    pub fn zeros(schedule: &DecoderSchedule, grid: &SplineGrid) -> Self {
        let layers = schedule
            .dims()
            .windows(2)
            .map(|w| KanLayer::new(w[0], w[1], grid))
            .collect();
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_dim()
    }

    fn check(&self, x: &Tensor2) -> Result<()> {
        if x.cols() != self.input_width() {
            return Err(Error::dim(
                "stack_forward",
                x.shape_str(),
                format!("schedule input width {}", self.input_width()),
            ));
        }
        Ok(())
    }

    pub fn eval(&self, x: &Tensor2) -> Result<Tensor2> {
        self.check(x)?;
        let mut h = x.clone();
        for l in &self.layers {
            h = l.eval(&h)?;
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &Tensor2) -> Result<Tensor2> {
        self.check(x)?;
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad_out: &Tensor2) -> Result<Tensor2> {
        let mut g = grad_out.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    /// Adapts every layer in order, feeding each the (post-adaptation)
    /// output of the previous one.
    pub fn adapt_grids(&mut self, x: &Tensor2, eps: f64, refit: bool) -> Result<()> {
        self.check(x)?;
        let mut h = x.clone();
        for l in &mut self.layers {
            l.adapt_grid(&h, eps, refit)?;
            h = l.eval(&h)?;
        }
        Ok(())
    }
}

impl Parameterized for KanStack {
    fn visit(&mut self, v: &mut Visitor<'_>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            v.scope(&format!("kan{i}"), |v| l.visit(v));
        }
    }
}
