use super::adapt::adapted_grid;
use crate::error::{Error, Result};
use crate::numcore::layers::{silu, silu_grad};
use crate::numcore::rng::{self, Rng};
use crate::numcore::{Param, Parameterized, Tensor2, Visitor};
use crate::spline::{fit_coefficients_multi, SplineGrid};

/// Smallest channel range the input normalisation will stretch to `[-1, 1]`.
const MIN_CHANNEL_SPAN: f64 = 1e-3;

/// One KAN layer: `y = W_base·silu(x) + Σ_i (scaler ⊙ W_spline)_i · B(u_i)`.
///
/// `u_i = (x_i − shift_i)·scale_i` is a per-channel affine map onto the
/// layer's shared knot grid. It starts as the identity and is refreshed on
/// every grid adaptation when `channel_norm` is set.
#[derive(Debug, Clone)]
pub struct KanLayer {
    pub w_base: Param,
    /// `O × (I·nb)`: block `i` of row `o` holds the coefficients of edge `(o, i)`.
    pub w_spline: Param,
    pub spline_scaler: Param,
    knots: Tensor2,
    order: usize,
    /// Row 0: shift, row 1: scale.
    norm: Tensor2,
    pub channel_norm: bool,
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    x: Tensor2,
    act: Tensor2,
    phi: Tensor2,
    dphi: Tensor2,
    eff: Tensor2,
}

impl KanLayer {
    pub fn new(in_dim: usize, out_dim: usize, grid: &SplineGrid) -> Self {
        let nb = grid.num_basis();
        let mut norm = Tensor2::zeros(2, in_dim);
        norm.row_mut(1).fill(1.0);
        Self {
            w_base: Param::zeros(out_dim, in_dim),
            w_spline: Param::zeros(out_dim, in_dim * nb),
            spline_scaler: Param::new(Tensor2::filled(out_dim, in_dim, 1.0)),
            knots: Tensor2::row_vector(grid.knots()),
            order: grid.order(),
            norm,
            channel_norm: true,
            cache: None,
        }
    }

    /// Kaiming-uniform base weights, spline weights `~ N(0, (0.1/grid_size)²)`,
    /// unit scalers.
    pub fn init(in_dim: usize, out_dim: usize, grid: &SplineGrid, rng: &mut Rng) -> Self {
        let mut l = Self::new(in_dim, out_dim, grid);
        l.w_base.value = rng::uniform_tensor(rng, out_dim, in_dim, rng::kaiming_bound(in_dim));
        let std = 0.1 / grid.grid_size() as f64;
        l.w_spline.value = rng::normal_tensor(rng, out_dim, in_dim * grid.num_basis(), std);
        l
    }

    pub fn in_dim(&self) -> usize {
        self.w_base.value.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w_base.value.rows()
    }

    pub fn grid(&self) -> SplineGrid {
        SplineGrid::from_knots(self.knots.data().to_vec(), self.order).expect("knots validated on every update")
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.order - 1
    }

    pub fn channel_shift(&self) -> &[f64] {
        self.norm.row(0)
    }

    pub fn channel_scale(&self) -> &[f64] {
        self.norm.row(1)
    }

    pub fn set_grid(&mut self, grid: &SplineGrid) -> Result<()> {
        if grid.num_basis() != self.num_basis() {
            return Err(Error::dim(
                "KanLayer::set_grid",
                format!("{} basis functions", self.num_basis()),
                format!("{}", grid.num_basis()),
            ));
        }
        self.knots = Tensor2::row_vector(grid.knots());
        self.order = grid.order();
        Ok(())
    }

    fn check_input(&self, x: &Tensor2) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::dim(
                "kan_forward",
                x.shape_str(),
                format!("{}x{} layer", self.out_dim(), self.in_dim()),
            ));
        }
        Ok(())
    }

    /// `scaler ⊙ w_spline` broadcast over the basis index.
    fn effective_spline(&self) -> Tensor2 {
        let nb = self.num_basis();
        let mut eff = self.w_spline.value.clone();
        for o in 0..self.out_dim() {
            let sc = self.spline_scaler.value.row(o);
            for (i, block) in eff.row_mut(o).chunks_exact_mut(nb).enumerate() {
                block.iter_mut().for_each(|w| *w *= sc[i]);
            }
        }
        eff
    }

    /// Dense basis features `Φ` (and `dΦ/du` when requested) of shape `B × (I·nb)`.
    fn features(&self, x: &Tensor2, with_deriv: bool) -> (Tensor2, Option<Tensor2>) {
        let grid = self.grid();
        let nb = grid.num_basis();
        let i_dim = self.in_dim();
        let mut phi = Tensor2::zeros(x.rows(), i_dim * nb);
        let mut dphi = with_deriv.then(|| Tensor2::zeros(x.rows(), i_dim * nb));
        let (shift, scale) = (self.norm.row(0), self.norm.row(1));
        for b in 0..x.rows() {
            let xr = x.row(b);
            for i in 0..i_dim {
                let u = (xr[i] - shift[i]) * scale[i];
                let lb = grid.local_basis(u);
                let base = i * nb;
                let prow = phi.row_mut(b);
                for (j, v, _) in lb.iter() {
                    prow[base + j] = v;
                }
                if let Some(d) = dphi.as_mut() {
                    let drow = d.row_mut(b);
                    for (j, _, dv) in lb.iter() {
                        drow[base + j] = dv * scale[i];
                    }
                }
            }
        }
        (phi, dphi)
    }

    /// Pure forward pass.
    pub fn eval(&self, x: &Tensor2) -> Result<Tensor2> {
        self.check_input(x)?;
        let act = x.map(silu);
        let mut out = act.matmul_nt(&self.w_base.value)?;
        let (phi, _) = self.features(x, false);
        out.add_assign(&phi.matmul_nt(&self.effective_spline())?)?;
        Ok(out)
    }

    pub fn forward(&mut self, x: &Tensor2) -> Result<Tensor2> {
        self.check_input(x)?;
        let act = x.map(silu);
        let mut out = act.matmul_nt(&self.w_base.value)?;
        let (phi, dphi) = self.features(x, true);
        let eff = self.effective_spline();
        out.add_assign(&phi.matmul_nt(&eff)?)?;
        self.cache = Some(Cache {
            x: x.clone(),
            act,
            phi,
            dphi: dphi.expect("requested"),
            eff,
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor2) -> Result<Tensor2> {
        let c = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("KanLayer::backward called before forward".into()))?;
        if grad_out.rows() != c.x.rows() || grad_out.cols() != self.out_dim() {
            return Err(Error::dim(
                "kan_backward",
                format!("{}x{}", c.x.rows(), self.out_dim()),
                grad_out.shape_str(),
            ));
        }
        let nb = self.num_basis();

        grad_out.accumulate_tn(&c.act, &mut self.w_base.grad)?;

        let mut g_eff = Tensor2::zeros(self.out_dim(), c.phi.cols());
        grad_out.accumulate_tn(&c.phi, &mut g_eff)?;
        for o in 0..self.out_dim() {
            let sc = self.spline_scaler.value.row(o).to_vec();
            let w = self.w_spline.value.row(o);
            let ge = g_eff.row(o);
            let gw = self.w_spline.grad.row_mut(o);
            for i in 0..sc.len() {
                for j in i * nb..(i + 1) * nb {
                    gw[j] += ge[j] * sc[i];
                }
            }
            let gs = self.spline_scaler.grad.row_mut(o);
            for (i, g) in gs.iter_mut().enumerate() {
                let block = i * nb..(i + 1) * nb;
                *g += ge[block.clone()].iter().zip(&w[block]).map(|(a, b)| a * b).sum::<f64>();
            }
        }

        let mut gx = grad_out.matmul(&self.w_base.value)?;
        for (g, &t) in gx.data_mut().iter_mut().zip(c.x.data()) {
            *g *= silu_grad(t);
        }
        let g_phi = grad_out.matmul(&c.eff)?;
        for b in 0..gx.rows() {
            let gp = g_phi.row(b);
            let dp = c.dphi.row(b);
            for (i, g) in gx.row_mut(b).iter_mut().enumerate() {
                let block = i * nb..(i + 1) * nb;
                *g += gp[block.clone()]
                    .iter()
                    .zip(&dp[block])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
        }
        Ok(gx)
    }

    /// Moves the knots to follow `batch` (dynamic grid adaptation) and,
    /// if `refit`, re-solves the spline weights so the layer output on
    /// `batch` is preserved in the least-squares sense.
    pub fn adapt_grid(&mut self, batch: &Tensor2, eps: f64, refit: bool) -> Result<()> {
        self.check_input(batch)?;
        let old_grid = self.grid();
        let old_norm = self.norm.clone();
        let grid_size = old_grid.grid_size();
        if batch.rows() < grid_size + 1 {
            return Err(Error::dim(
                "adapt_grid",
                format!("{} rows", batch.rows()),
                format!("at least grid_size+1 = {}", grid_size + 1),
            ));
        }

        let mut new_norm = old_norm.clone();
        if self.channel_norm {
            for i in 0..self.in_dim() {
                let (lo, hi) = (0..batch.rows())
                    .map(|b| batch.get(b, i))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
                let half = ((hi - lo) / 2.0).max(MIN_CHANNEL_SPAN / 2.0);
                new_norm.set(0, i, (lo + hi) / 2.0);
                new_norm.set(1, i, 1.0 / half);
            }
        }
        let u_new = normalize(batch, &new_norm);
        let new_grid = adapted_grid(u_new.data(), grid_size, old_grid.order(), eps)?;

        if refit {
            let nb = old_grid.num_basis();
            let u_old = normalize(batch, &old_norm);
            let (o_dim, rows) = (self.out_dim(), batch.rows());
            for i in 0..self.in_dim() {
                let xs_old: Vec<f64> = (0..rows).map(|b| u_old.get(b, i)).collect();
                let xs_new: Vec<f64> = (0..rows).map(|b| u_new.get(b, i)).collect();
                let basis_old = old_grid.basis(&xs_old);
                let mut targets = Tensor2::zeros(rows, o_dim);
                for o in 0..o_dim {
                    let coeffs = &self.w_spline.value.row(o)[i * nb..(i + 1) * nb];
                    for b in 0..rows {
                        let v: f64 = basis_old.row(b).iter().zip(coeffs).map(|(p, c)| p * c).sum();
                        targets.set(b, o, v);
                    }
                }
                let fitted = fit_coefficients_multi(&xs_new, &targets, &new_grid)?;
                for o in 0..o_dim {
                    self.w_spline.value.row_mut(o)[i * nb..(i + 1) * nb].copy_from_slice(fitted.row(o));
                }
            }
        }
        self.norm = new_norm;
        self.set_grid(&new_grid)?;
        self.cache = None;
        Ok(())
    }
}

fn normalize(x: &Tensor2, norm: &Tensor2) -> Tensor2 {
    let mut u = x.clone();
    let (shift, scale) = (norm.row(0), norm.row(1));
    for b in 0..u.rows() {
        for (i, v) in u.row_mut(b).iter_mut().enumerate() {
            *v = (*v - shift[i]) * scale[i];
        }
    }
    u
}

impl Parameterized for KanLayer {
    fn visit(&mut self, v: &mut Visitor<'_>) {
        v.param("w_base", &mut self.w_base);
        v.param("w_spline", &mut self.w_spline);
        v.param("spline_scaler", &mut self.spline_scaler);
        v.buffer("knots", &mut self.knots);
        v.buffer("norm", &mut self.norm);
    }
}
