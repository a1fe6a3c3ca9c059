use crate::error::{Error, Result};
use crate::numcore::rng::Rng;
use crate::numcore::{Activation, Mlp, Parameterized, Tensor2, Visitor};

/// Per-point prototype encoder: coordinates and SDF values pass through
/// separate two-layer MLPs, are concatenated, and are fused by a third.
#[derive(Debug, Clone)]
pub struct PrototypeEncoder {
    pub coord: Mlp,
    pub sdf: Mlp,
    pub fuse: Mlp,
}

impl PrototypeEncoder {
    pub fn init(d_p: usize, rng: &mut Rng) -> Result<Self> {
        if d_p < 2 || !d_p.is_multiple_of(2) {
            return Err(Error::Config(format!("prior feature width must be even, got {d_p}")));
        }
        let half = d_p / 2;
        Ok(Self {
            coord: Mlp::xavier(&[3, half, half], Activation::Silu, rng),
            sdf: Mlp::xavier(&[1, half, half], Activation::Silu, rng),
            fuse: Mlp::xavier(&[d_p, d_p, d_p], Activation::Silu, rng),
        })
    }

    pub fn width(&self) -> usize {
        self.fuse.out_dim()
    }

    fn split(samples: &Tensor2) -> Result<(Tensor2, Tensor2)> {
        if samples.cols() != 4 {
            return Err(Error::dim(
                "encode_prototype",
                samples.shape_str(),
                "K×4 (x, y, z, sdf)",
            ));
        }
        Ok((samples.slice_cols(0, 3), samples.slice_cols(3, 4)))
    }

    pub fn eval(&self, samples: &Tensor2) -> Result<Tensor2> {
        let (p, s) = Self::split(samples)?;
        let h = Tensor2::hcat(&[&self.coord.eval(&p)?, &self.sdf.eval(&s)?])?;
        self.fuse.eval(&h)
    }

    pub fn forward(&mut self, samples: &Tensor2) -> Result<Tensor2> {
        let (p, s) = Self::split(samples)?;
        let h = Tensor2::hcat(&[&self.coord.forward(&p)?, &self.sdf.forward(&s)?])?;
        self.fuse.forward(&h)
    }

    /// Accumulates parameter gradients; the raw samples are fixed, so no
    /// input gradient is returned.
    pub fn backward(&mut self, grad_out: &Tensor2) -> Result<()> {
        let g = self.fuse.backward(grad_out)?;
        let half = self.coord.out_dim();
        self.coord.backward(&g.slice_cols(0, half))?;
        self.sdf.backward(&g.slice_cols(half, 2 * half))?;
        Ok(())
    }
}

impl Parameterized for PrototypeEncoder {
    fn visit(&mut self, v: &mut Visitor<'_>) {
        v.scope("coord", |v| self.coord.visit(v));
        v.scope("sdf", |v| self.sdf.visit(v));
        v.scope("fuse", |v| self.fuse.visit(v));
    }
}
