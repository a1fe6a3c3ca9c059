//! Implicit SDF decoder: positional encoding, a Softplus front-end with a
//! mid-layer skip, and an interchangeable head (KAN stack by default).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kan::{DecoderSchedule, KanStack};
use crate::numcore::layers::{sigmoid, softplus};
use crate::numcore::rng::{self, Rng};
use crate::numcore::{Activation, Linear, Mlp, Param, Parameterized, Tensor2, Visitor};
use crate::spline::SplineGrid;

/// Frequency pairs per axis in the positional encoding.
pub const PE_FREQUENCIES: usize = 6;
/// Standard deviation of the final front-end layer's weights.
pub const FINAL_WEIGHT_STD: f64 = 1e-4;
/// Bias of the final front-end layer, and the head's initial output.
pub const FINAL_BIAS: f64 = -1.0;
/// Gain on input-layer columns that read positional features.
pub const POSITIONAL_GAIN: f64 = 2.0;
/// Gain on the skip-connection columns.
pub const SKIP_GAIN: f64 = 0.5;

pub fn encoding_width(freqs: usize) -> usize {
    3 + 6 * freqs
}

/// `[p, sin(2⁰πp), cos(2⁰πp), …, sin(2^{L−1}πp), cos(2^{L−1}πp)]`, each
/// term a 3-vector.
pub fn positional_encode(points: &Tensor2, freqs: usize) -> Result<Tensor2> {
    if points.cols() != 3 {
        return Err(Error::dim("positional_encode", points.shape_str(), "B×3"));
    }
    let w = encoding_width(freqs);
    let mut out = Tensor2::zeros(points.rows(), w);
    for r in 0..points.rows() {
        let p = points.row(r).to_vec();
        let row = out.row_mut(r);
        row[..3].copy_from_slice(&p);
        for l in 0..freqs {
            let f = (1u64 << l) as f64 * PI;
            for a in 0..3 {
                let (s, c) = (f * p[a]).sin_cos();
                row[3 + 6 * l + a] = s;
                row[6 + 6 * l + a] = c;
            }
        }
    }
    Ok(out)
}

/// Decoder inputs: per-query encodings plus per-instance features, with
/// `owner[q]` naming the feature row of query `q`. Features are shared
/// by every query of an instance, so their projections are computed once.
#[derive(Debug, Clone)]
pub struct DecoderInput {
    pub encoded: Tensor2,
    pub features: Tensor2,
    pub owner: Vec<usize>,
}

impl DecoderInput {
    pub fn new(points: &Tensor2, features: Tensor2, owner: Vec<usize>, freqs: usize) -> Result<Self> {
        if owner.len() != points.rows() {
            return Err(Error::dim(
                "decoder_input",
                points.shape_str(),
                format!("{} owners", owner.len()),
            ));
        }
        if let Some(&o) = owner.iter().find(|&&o| o >= features.rows()) {
            return Err(Error::dim("decoder_input", format!("owner {o}"), features.shape_str()));
        }
        Ok(Self {
            encoded: positional_encode(points, freqs)?,
            features,
            owner,
        })
    }

    /// All queries share one feature row.
    pub fn single(points: &Tensor2, features: &[f64], freqs: usize) -> Result<Self> {
        Self::new(points, Tensor2::row_vector(features), vec![0; points.rows()], freqs)
    }

    pub fn rows(&self) -> usize {
        self.encoded.rows()
    }

    /// The literal per-query concatenation `[encoding ‖ features]`.
    pub fn dense(&self) -> Tensor2 {
        let feats = gather(&self.features, &self.owner);
        Tensor2::hcat(&[&self.encoded, &feats]).expect("rows match by construction")
    }
}

fn gather(t: &Tensor2, idx: &[usize]) -> Tensor2 {
    let mut out = Tensor2::zeros(idx.len(), t.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(t.row(i));
    }
    out
}

fn scatter_add(t: &Tensor2, idx: &[usize], rows: usize) -> Tensor2 {
    let mut out = Tensor2::zeros(rows, t.cols());
    for (r, &i) in idx.iter().enumerate() {
        for (d, s) in out.row_mut(i).iter_mut().zip(t.row(r)) {
            *d += s;
        }
    }
    out
}

/// Adds `features·w_fᵀ` (gathered by owner) to `acc`.
fn add_feature_term(acc: &mut Tensor2, input: &DecoderInput, w_f: &Tensor2) -> Result<()> {
    let proj = input.features.matmul_nt(w_f)?;
    for (r, &o) in input.owner.iter().enumerate() {
        for (d, s) in acc.row_mut(r).iter_mut().zip(proj.row(o)) {
            *d += s;
        }
    }
    Ok(())
}

fn add_bias(acc: &mut Tensor2, b: &Tensor2) {
    for r in 0..acc.rows() {
        for (d, s) in acc.row_mut(r).iter_mut().zip(b.data()) {
            *d += s;
        }
    }
}

#[derive(Debug, Clone)]
struct FrontCache {
    input: DecoderInput,
    z0: Tensor2,
    a0: Tensor2,
    z1: Tensor2,
    a1: Tensor2,
}

/// `x → h₁ → h₂ → out` with Softplus after the first two layers. The middle
/// layer also reads the raw input `x` (the skip). Weight column layouts:
/// layer 0 `[encoding ‖ features]`, layer 1 `[h₁ ‖ encoding ‖ features]`.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    pub l0: Linear,
    pub l1: Linear,
    pub l2: Linear,
    pe_width: usize,
    cache: Option<FrontCache>,
}

impl FrontEnd {
    pub fn init(pe_width: usize, feat_width: usize, hidden: [usize; 2], out: usize, rng: &mut Rng) -> Self {
        let input = pe_width + feat_width;
        let mut l0 = Linear::xavier(input, hidden[0], rng);
        for r in 0..hidden[0] {
            for v in &mut l0.weight.value.row_mut(r)[..pe_width] {
                *v *= POSITIONAL_GAIN;
            }
        }
        let mut l1 = Linear::xavier(hidden[0] + input, hidden[1], rng);
        for r in 0..hidden[1] {
            for v in &mut l1.weight.value.row_mut(r)[hidden[0]..] {
                *v *= SKIP_GAIN;
            }
        }
        let l2 = Linear::new(
            rng::normal_tensor(rng, out, hidden[1], FINAL_WEIGHT_STD),
            Tensor2::filled(1, out, FINAL_BIAS),
        )
        .expect("shapes by construction");
        Self {
            l0,
            l1,
            l2,
            pe_width,
            cache: None,
        }
    }

    pub fn input_width(&self) -> usize {
        self.l0.in_dim()
    }

    pub fn out_width(&self) -> usize {
        self.l2.out_dim()
    }

    fn check(&self, x: &DecoderInput) -> Result<()> {
        if x.encoded.cols() != self.pe_width || x.encoded.cols() + x.features.cols() != self.input_width() {
            return Err(Error::dim(
                "decode_sdf",
                format!("encoding {} + features {}", x.encoded.cols(), x.features.cols()),
                format!(
                    "encoding {} + features {} (image ‖ geometry)",
                    self.pe_width,
                    self.input_width() - self.pe_width
                ),
            ));
        }
        Ok(())
    }

    fn run(&self, x: &DecoderInput) -> Result<(Tensor2, FrontCache)> {
        self.check(x)?;
        let pw = self.pe_width;
        let w0 = &self.l0.weight.value;
        let mut z0 = x.encoded.matmul_nt(&w0.slice_cols(0, pw))?;
        add_feature_term(&mut z0, x, &w0.slice_cols(pw, w0.cols()))?;
        add_bias(&mut z0, &self.l0.bias.value);
        let a0 = z0.map(softplus);

        let h0 = self.l0.out_dim();
        let w1 = &self.l1.weight.value;
        let mut z1 = a0.matmul_nt(&w1.slice_cols(0, h0))?;
        z1.add_assign(&x.encoded.matmul_nt(&w1.slice_cols(h0, h0 + pw))?)?;
        add_feature_term(&mut z1, x, &w1.slice_cols(h0 + pw, w1.cols()))?;
        add_bias(&mut z1, &self.l1.bias.value);
        let a1 = z1.map(softplus);

        let out = self.l2.eval(&a1)?;
        Ok((
            out,
            FrontCache {
                input: x.clone(),
                z0,
                a0,
                z1,
                a1,
            },
        ))
    }

    pub fn eval(&self, x: &DecoderInput) -> Result<Tensor2> {
        Ok(self.run(x)?.0)
    }

    pub fn forward(&mut self, x: &DecoderInput) -> Result<Tensor2> {
        let (out, cache) = self.run(x)?;
        self.cache = Some(cache);
        Ok(out)
    }

    /// Accumulates parameter gradients; returns the gradient with respect
    /// to the per-instance feature rows.
    pub fn backward(&mut self, grad_out: &Tensor2) -> Result<Tensor2> {
        let c = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("front-end backward called before forward".into()))?;
        let (pw, h0) = (self.pe_width, self.l0.out_dim());
        let n_feat = c.input.features.rows();

        grad_out.accumulate_tn(&c.a1, &mut self.l2.weight.grad)?;
        self.l2.bias.grad.add_assign(&grad_out.column_sums())?;
        let da1 = grad_out.matmul(&self.l2.weight.value)?;
        let mut dz1 = da1;
        for (g, &z) in dz1.data_mut().iter_mut().zip(c.z1.data()) {
            *g *= sigmoid(z);
        }

        // layer 1 over [a0 ‖ encoding ‖ features]
        let dz1_feat = scatter_add(&dz1, &c.input.owner, n_feat);
        let mut gw1 = Tensor2::zeros(self.l1.out_dim(), h0);
        dz1.accumulate_tn(&c.a0, &mut gw1)?;
        let mut gw1_pe = Tensor2::zeros(self.l1.out_dim(), pw);
        dz1.accumulate_tn(&c.input.encoded, &mut gw1_pe)?;
        let mut gw1_f = Tensor2::zeros(self.l1.out_dim(), c.input.features.cols());
        dz1_feat.accumulate_tn(&c.input.features, &mut gw1_f)?;
        self.l1
            .weight
            .grad
            .add_assign(&Tensor2::hcat(&[&gw1, &gw1_pe, &gw1_f])?)?;
        self.l1.bias.grad.add_assign(&dz1.column_sums())?;
        let w1 = &self.l1.weight.value;
        let mut d_feat = dz1_feat.matmul(&w1.slice_cols(h0 + pw, w1.cols()))?;
        let mut dz0 = dz1.matmul(&w1.slice_cols(0, h0))?;
        for (g, &z) in dz0.data_mut().iter_mut().zip(c.z0.data()) {
            *g *= sigmoid(z);
        }

        // layer 0 over [encoding ‖ features]
        let dz0_feat = scatter_add(&dz0, &c.input.owner, n_feat);
        let mut gw0_pe = Tensor2::zeros(h0, pw);
        dz0.accumulate_tn(&c.input.encoded, &mut gw0_pe)?;
        let mut gw0_f = Tensor2::zeros(h0, c.input.features.cols());
        dz0_feat.accumulate_tn(&c.input.features, &mut gw0_f)?;
        self.l0.weight.grad.add_assign(&Tensor2::hcat(&[&gw0_pe, &gw0_f])?)?;
        self.l0.bias.grad.add_assign(&dz0.column_sums())?;
        let w0 = &self.l0.weight.value;
        d_feat.add_assign(&dz0_feat.matmul(&w0.slice_cols(pw, w0.cols()))?)?;
        Ok(d_feat)
    }
}

impl Parameterized for FrontEnd {
    fn visit(&mut self, v: &mut Visitor<'_>) {
        v.scope("l0", |v| self.l0.visit(v));
        v.scope("l1", |v| self.l1.visit(v));
        v.scope("l2", |v| self.l2.visit(v));
    }
}

/// Which head maps front-end features to the SDF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Kan,
    /// A single linear layer.
    Linear,
    /// ReLU MLP with two hidden layers sized to match the KAN stack's
    /// parameter count.
    Mlp,
}

#[derive(Debug, Clone)]
pub enum Head {
    /// KAN stack plus a learnable scalar output offset (KAN layers carry
    /// no bias).
    Kan {
        stack: KanStack,
        offset: Param,
    },
    Linear(Linear),
    Mlp(Mlp),
}

/// Parameters of a KAN stack over `schedule` with `num_basis` splines per edge.
pub fn kan_param_count(schedule: &DecoderSchedule, num_basis: usize) -> usize {
    schedule.dims().windows(2).map(|w| w[0] * w[1] * (num_basis + 2)).sum()
}

fn mlp_param_count(input: usize, hidden: usize) -> usize {
    input * hidden + hidden + hidden * hidden + hidden + hidden + 1
}

/// Hidden width whose two-hidden-layer MLP best matches `target` parameters.
pub fn matched_mlp_width(input: usize, target: usize) -> usize {
    (1..4096)
        .min_by_key(|&h| (mlp_param_count(input, h) as i64 - target as i64).unsigned_abs())
        .expect("non-empty range")
}

fn small_output(layer: &mut Linear, rng: &mut Rng) {
    layer.weight.value = rng::normal_tensor(rng, layer.out_dim(), layer.in_dim(), FINAL_WEIGHT_STD);
    layer.bias.value.fill(FINAL_BIAS);
}

impl Head {
    /// Every head starts out as a near-constant `−1`: its last layer gets
    /// tiny weights and the output offset (or bias) starts at `−1`.
    pub fn init(kind: HeadKind, schedule: &DecoderSchedule, grid: &SplineGrid, rng: &mut Rng) -> Self {
        let input = schedule.input_width();
        match kind {
            HeadKind::Kan => {
                let mut stack = KanStack::init(schedule, grid, rng);
                let last = stack.layers.last_mut().expect("schedule has a layer");
                let (o, i) = last.w_base.value.shape();
                last.w_base.value = rng::normal_tensor(rng, o, i, FINAL_WEIGHT_STD);
                let (o, s) = last.w_spline.value.shape();
                last.w_spline.value = rng::normal_tensor(rng, o, s, FINAL_WEIGHT_STD);
                Head::Kan {
                    stack,
                    offset: Param::new(Tensor2::filled(1, 1, FINAL_BIAS)),
                }
            }
            HeadKind::Linear => {
                let mut l = Linear::zeros(input, 1);
                small_output(&mut l, rng);
                Head::Linear(l)
            }
            HeadKind::Mlp => {
                let h = matched_mlp_width(input, kan_param_count(schedule, grid.num_basis()) + 1);
                let mut m = Mlp::xavier(&[input, h, h, 1], Activation::Relu, rng);
                small_output(m.layers.last_mut().expect("three layers"), rng);
                Head::Mlp(m)
            }
        }
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Kan { .. } => HeadKind::Kan,
            Head::Linear(_) => HeadKind::Linear,
            Head::Mlp(_) => HeadKind::Mlp,
        }
    }

    pub fn eval(&self, x: &Tensor2) -> Result<Tensor2> {
        match self {
            Head::Kan { stack, offset } => Ok(stack.eval(x)?.map(|v| v + offset.value.get(0, 0))),
            Head::Linear(l) => l.eval(x),
            Head::Mlp(m) => m.eval(x),
        }
    }

    pub fn forward(&mut self, x: &Tensor2) -> Result<Tensor2> {
        match self {
            Head::Kan { stack, offset } => Ok(stack.forward(x)?.map(|v| v + offset.value.get(0, 0))),
            Head::Linear(l) => l.forward(x),
            Head::Mlp(m) => m.forward(x),
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor2) -> Result<Tensor2> {
        match self {
            Head::Kan { stack, offset } => {
                let g = offset.grad.get(0, 0) + grad_out.sum();
                offset.grad.set(0, 0, g);
                stack.backward(grad_out)
            }
            Head::Linear(l) => l.backward(grad_out),
            Head::Mlp(m) => m.backward(grad_out),
        }
    }

    /// Grid adaptation on the head input; a no-op for non-KAN heads.
    pub fn adapt_grids(&mut self, x: &Tensor2, eps: f64, refit: bool) -> Result<()> {
        match self {
            Head::Kan { stack, .. } => stack.adapt_grids(x, eps, refit),
            _ => Ok(()),
        }
    }
}

impl Parameterized for Head {
    fn visit(&mut self, v: &mut Visitor<'_>) {
        match self {
            Head::Kan { stack, offset } => {
                stack.visit(v);
                v.param("offset", offset);
            }
            Head::Linear(l) => v.scope("linear", |v| l.visit(v)),
            Head::Mlp(m) => v.scope("mlp", |v| m.visit(v)),
        }
    }
}

/// Front-end followed by a head.
#[derive(Debug, Clone)]
pub struct SdfDecoder {
    pub front: FrontEnd,
    pub head: Head,
    pub freqs: usize,
    head_input: Option<Tensor2>,
}

impl SdfDecoder {
    pub fn init(
        feat_width: usize,
        hidden: [usize; 2],
        schedule: &DecoderSchedule,
        grid: &SplineGrid,
        head: HeadKind,
        rng: &mut Rng,
    ) -> Self {
        let pe = encoding_width(PE_FREQUENCIES);
        let front = FrontEnd::init(pe, feat_width, hidden, schedule.input_width(), rng);
        let head = Head::init(head, schedule, grid, rng);
        Self {
            front,
            head,
            freqs: PE_FREQUENCIES,
            head_input: None,
        }
    }

    pub fn feature_width(&self) -> usize {
        self.front.input_width() - encoding_width(self.freqs)
    }

    pub fn input(&self, points: &Tensor2, features: Tensor2, owner: Vec<usize>) -> Result<DecoderInput> {
        DecoderInput::new(points, features, owner, self.freqs)
    }

    pub fn eval(&self, x: &DecoderInput) -> Result<Tensor2> {
        self.head.eval(&self.front.eval(x)?)
    }

    pub fn forward(&mut self, x: &DecoderInput) -> Result<Tensor2> {
        let h = self.front.forward(x)?;
        let out = self.head.forward(&h)?;
        self.head_input = Some(h);
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor2) -> Result<Tensor2> {
        let g = self.head.backward(grad_out)?;
        self.front.backward(&g)
    }

    /// Adapts the head's grids to the front-end output of the last forward.
    pub fn adapt_grids(&mut self, eps: f64, refit: bool) -> Result<()> {
        let h = self
            .head_input
            .take()
            .ok_or_else(|| Error::State("grid adaptation needs a prior forward pass".into()))?;
        self.head.adapt_grids(&h, eps, refit)
    }

    /// Redraws the front-end output layer and the head's final weights
    /// from `N(0, std²)`. The real initialisation keeps them near zero,
    /// which leaves upstream gradients too small to verify by finite
    /// differences; gradient checks call this first.
    pub fn randomize_output_layers(&mut self, std: f64, rng: &mut Rng) {
        let w = &mut self.front.l2.weight.value;
        *w = rng::normal_tensor(rng, w.rows(), w.cols(), std);
        let w = match &mut self.head {
            Head::Kan { stack, .. } => {
                let last = stack.layers.last_mut().expect("non-empty stack");
                let b = &mut last.w_base.value;
                *b = rng::normal_tensor(rng, b.rows(), b.cols(), std);
                &mut last.w_spline.value
            }
            Head::Linear(l) => &mut l.weight.value,
            Head::Mlp(m) => &mut m.layers.last_mut().expect("non-empty mlp").weight.value,
        };
        *w = rng::normal_tensor(rng, w.rows(), w.cols(), std);
    }

    /// Head input of the last forward pass.
    pub fn last_head_input(&self) -> Option<&Tensor2> {
        self.head_input.as_ref()
    }
}

impl Parameterized for SdfDecoder {
    fn visit(&mut self, v: &mut Visitor<'_>) {
        v.scope("front", |v| self.front.visit(v));
        v.scope("head", |v| self.head.visit(v));
    }
}

/// Mean clamped L1, `mean |clamp(p, ±δ) − clamp(g, ±δ)|`, and its
/// gradient with respect to `pred`.
///
/// Inside the band the gradient is exact. A prediction beyond the band
/// still receives the sign of the clamped residual when that residual is
/// nonzero, so predictions saturated on the wrong side keep moving; once
/// the clamped values agree the gradient is zero.
pub fn sdf_loss(pred: &Tensor2, gt: &Tensor2, delta: f64) -> Result<(f64, Tensor2)> {
    pred.same_shape(gt, "sdf_loss")?;
    if !(delta > 0.0) {
        return Err(Error::Config(format!("loss clamp must be positive, got {delta}")));
    }
    let n = pred.len().max(1) as f64;
    let mut grad = Tensor2::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(gt.data()) {
        let d = p.clamp(-delta, delta) - t.clamp(-delta, delta);
        loss += d.abs();
        if d != 0.0 {
            *g = d.signum() / n;
        }
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::gradcheck::{gradcheck, probe_loss, GradcheckConfig, Inputs};

    fn desk_decoder(kind: HeadKind, seed: u64) -> SdfDecoder {
        let s = DecoderSchedule::new(vec![8, 4, 2, 1]).unwrap();
        let grid = SplineGrid::uniform(-1.0, 1.0, 5, 3).unwrap();
        SdfDecoder::init(6, [12, 10], &s, &grid, kind, &mut rng::seeded(seed))
    }

    #[test]
    fn encoding_examples() {
        let p = Tensor2::from_rows(&[[0.0, 0.0, 0.0], [0.3, -0.2, 0.7]]);
        let e = positional_encode(&p, 6).unwrap();
        assert_eq!(e.cols(), 39);
        for l in 0..6 {
            for a in 0..3 {
                assert_eq!(e.get(0, 3 + 6 * l + a), 0.0);
                assert_eq!(e.get(0, 6 + 6 * l + a), 1.0);
            }
        }
        let m = positional_encode(&p.map(|v| -v), 6).unwrap();
        for l in 0..6 {
            for a in 0..3 {
                assert!((e.get(1, 3 + 6 * l + a) + m.get(1, 3 + 6 * l + a)).abs() < 1e-15);
                assert_eq!(e.get(1, 6 + 6 * l + a), m.get(1, 6 + 6 * l + a));
            }
        }
        let want = (4.0 * PI * 0.7).sin();
        assert!((e.get(1, 3 + 12 + 2) - want).abs() < 1e-15);
    }

    #[test]
    fn front_end_init_contract() {
        let mut r = rng::seeded(3);
        let f = FrontEnd::init(39, 128, [256, 256], 128, &mut r);
        assert!(f.l2.bias.value.data().iter().all(|&b| b == -1.0));
        let w = f.l2.weight.value.data();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(w.len() >= 10_000);
        assert!((0.00008..=0.00012).contains(&std), "{std}");
        // positional columns are drawn from a bound twice as wide
        let l0 = &f.l0.weight.value;
        let bound = rng::xavier_bound(39 + 128, 256);
        let max_pe = (0..256)
            .flat_map(|r| l0.row(r)[..39].to_vec())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let max_f = (0..256)
            .flat_map(|r| l0.row(r)[39..].to_vec())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(max_pe > bound && max_pe <= 2.0 * bound);
        assert!(max_f <= bound);
        let l1 = &f.l1.weight.value;
        let b1 = rng::xavier_bound(256 + 167, 256);
        let max_skip = (0..256)
            .flat_map(|r| l1.row(r)[256..].to_vec())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(max_skip <= 0.5 * b1);
    }

    #[test]
    fn init_output_near_minus_one() {
        for kind in [HeadKind::Kan, HeadKind::Linear, HeadKind::Mlp] {
            let s = DecoderSchedule::new(vec![64, 32, 16, 8, 1]).unwrap();
            let grid = SplineGrid::uniform(-1.0, 1.0, 5, 3).unwrap();
            let mut r = rng::seeded(1);
            let d = SdfDecoder::init(128, [128, 128], &s, &grid, kind, &mut r);
            let pts = rng::uniform_tensor(&mut r, 200, 3, 1.0);
            let feats = rng::normal_tensor(&mut r, 4, 128, 1.0);
            let owner = (0..200).map(|i| i % 4).collect();
            let out = d.eval(&d.input(&pts, feats, owner).unwrap()).unwrap();
            assert!(out.data().iter().all(|v| (-1.02..=-0.98).contains(v)), "{kind:?}");
            let mean = out.sum() / 200.0;
            assert!((-1.05..=-0.95).contains(&mean));
        }
    }

    #[test]
    fn batch_shape_and_determinism() {
        let d = desk_decoder(HeadKind::Kan, 2);
        let pts = Tensor2::from_rows(&[[0.1, 0.2, 0.3]; 7]);
        let x = DecoderInput::single(&pts, &[0.5; 6], PE_FREQUENCIES).unwrap();
        let y = d.eval(&x).unwrap();
        assert_eq!(y.shape(), (7, 1));
        assert!(y.data().iter().all(|&v| v == y.get(0, 0)));
        assert!(DecoderInput::single(&pts, &[0.5; 5], PE_FREQUENCIES)
            .and_then(|x| d.eval(&x))
            .is_err());
    }

    #[test]
    fn split_projection_matches_dense_concat() {
        let d = desk_decoder(HeadKind::Kan, 5);
        let mut r = rng::seeded(6);
        let pts = rng::uniform_tensor(&mut r, 9, 3, 1.0);
        let x = d
            .input(
                &pts,
                rng::normal_tensor(&mut r, 3, 6, 1.0),
                (0..9).map(|i| i / 3).collect(),
            )
            .unwrap();
        let dense = x.dense();
        let h0 = d.front.l0.eval(&dense).unwrap().map(softplus);
        let h1 = d
            .front
            .l1
            .eval(&Tensor2::hcat(&[&h0, &dense]).unwrap())
            .unwrap()
            .map(softplus);
        let want = d.front.l2.eval(&h1).unwrap();
        let got = d.front.eval(&x).unwrap();
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    struct Harness {
        dec: SdfDecoder,
        feats: Inputs,
        pts: Tensor2,
        owner: Vec<usize>,
        probe: Tensor2,
    }

    impl Parameterized for Harness {
        fn visit(&mut self, v: &mut Visitor<'_>) {
            self.dec.visit(v);
            self.feats.visit(v);
        }
    }

    fn decode_gradcheck(kind: HeadKind) {
        let mut r = rng::seeded(11);
        let mut dec = desk_decoder(kind, 12);
        dec.randomize_output_layers(0.5, &mut r);
        if kind == HeadKind::Kan {
            let pts = rng::uniform_tensor(&mut r, 64, 3, 1.0);
            let feats = rng::normal_tensor(&mut r, 8, 6, 1.0);
            let x = dec.input(&pts, feats, (0..64).map(|i| i % 8).collect()).unwrap();
            dec.forward(&x).unwrap();
            dec.adapt_grids(0.1, true).unwrap();
        }
        let pts = rng::uniform_tensor(&mut r, 16, 3, 1.0);
        let mut h = Harness {
            dec,
            feats: Inputs::new(vec![("features", rng::normal_tensor(&mut r, 2, 6, 1.0))]),
            pts,
            owner: (0..16).map(|i| i % 2).collect(),
            probe: rng::normal_tensor(&mut r, 16, 1, 1.0),
        };
        let rep = gradcheck(&mut h, GradcheckConfig::default(), |h, grad| {
            let x = h.dec.input(&h.pts, h.feats.value(0).clone(), h.owner.clone())?;
            let y = h.dec.forward(&x)?;
            if grad {
                let g = h.dec.backward(&h.probe)?;
                h.feats.add_grad(0, &g)?;
            }
            Ok(probe_loss(&y, &h.probe))
        })
        .unwrap();
        assert!(rep.pass, "{kind:?} {rep:?}");
    }

    #[test]
    fn decode_gradcheck_kan() {
        decode_gradcheck(HeadKind::Kan);
    }

    #[test]
    fn decode_gradcheck_linear_and_mlp() {
        decode_gradcheck(HeadKind::Linear);
        decode_gradcheck(HeadKind::Mlp);
    }

    #[test]
    fn mlp_head_matches_kan_parameter_count() {
        let s = DecoderSchedule::new(vec![64, 32, 16, 8, 1]).unwrap();
        let grid = SplineGrid::uniform(-1.0, 1.0, 5, 3).unwrap();
        let mut r = rng::seeded(0);
        let mut kan = Head::init(HeadKind::Kan, &s, &grid, &mut r);
        let mut mlp = Head::init(HeadKind::Mlp, &s, &grid, &mut r);
        let (a, b) = (kan.param_count() as f64, mlp.param_count() as f64);
        assert_eq!(a as usize, kan_param_count(&s, 8) + 1);
        assert!((b - a).abs() / a <= 0.05, "{a} vs {b}");
    }

    #[test]
    fn loss_examples() {
        let g = Tensor2::from_rows(&[[0.02], [-0.03], [0.0]]);
        assert_eq!(sdf_loss(&g, &g, 0.1).unwrap().0, 0.0);
        let p = g.map(|v| v + 0.05);
        assert!((sdf_loss(&p, &g, 0.1).unwrap().0 - 0.05).abs() < 1e-15);
        let far = Tensor2::from_rows(&[[10.0]]);
        let at = Tensor2::from_rows(&[[0.1]]);
        let (l, gr) = sdf_loss(&at, &far, 0.1).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(gr.get(0, 0), 0.0);
        // saturated on the wrong side still gets pushed toward the target
        let (_, gr) = sdf_loss(&Tensor2::from_rows(&[[-1.0]]), &Tensor2::from_rows(&[[0.5]]), 0.1).unwrap();
        assert!(gr.get(0, 0) < 0.0);
    }

    #[test]
    fn loss_gradient_is_exact_inside_band() {
        let mut r = rng::seeded(2);
        let p = rng::uniform_tensor(&mut r, 10, 1, 0.09);
        let g = rng::uniform_tensor(&mut r, 10, 1, 0.09);
        let (_, grad) = sdf_loss(&p, &g, 0.1).unwrap();
        let h = 1e-6;
        for i in 0..10 {
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi.data_mut()[i] += h;
            lo.data_mut()[i] -= h;
            let fd = (sdf_loss(&hi, &g, 0.1).unwrap().0 - sdf_loss(&lo, &g, 0.1).unwrap().0) / (2.0 * h);
            assert!((fd - grad.data()[i]).abs() < 1e-6);
        }
    }
}
