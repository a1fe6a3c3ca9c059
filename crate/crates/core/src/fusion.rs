//! Multi-head attention that turns an image feature and a category vector
//! into a geometric feature by attending over all prototype tokens.

use crate::error::{Error, Result};
use crate::numcore::rng::{self, Rng};
use crate::numcore::tensor::dot;
use crate::numcore::{Param, Parameterized, Tensor2, Visitor};

/// Default matched-category weighting `α = e`, i.e. a logit bias of `+1`.
pub const DEFAULT_ALPHA: f64 = std::f64::consts::E;

#[derive(Debug, Clone)]
struct Cache {
    query_in: Tensor2,
    tokens: Tensor2,
    q: Tensor2,
    k: Tensor2,
    v: Tensor2,
    /// Attention weights per head, each `B×T`.
    attn: Vec<Tensor2>,
    /// Concatenated head outputs, `B×D_model`.
    o: Tensor2,
}

/// Scaled dot-product attention with `heads` heads and a single query per
/// row. Tokens of the query's own category get an additive logit bias of
/// `ln α`; `α → ∞` restricts attention to that category.
#[derive(Debug, Clone)]
pub struct MultiHeadFusion {
    pub w_q: Param,
    pub w_k: Param,
    pub w_v: Param,
    pub w_o: Param,
    pub heads: usize,
    pub alpha: f64,
    num_categories: usize,
    cache: Option<Cache>,
}

/// Input layout of the query projection: image feature then one-hot.
pub fn query_input(f_img: &Tensor2, categories: &[usize], num_categories: usize) -> Result<Tensor2> {
    if f_img.rows() != categories.len() {
        return Err(Error::dim(
            "query_input",
            f_img.shape_str(),
            format!("{} category labels", categories.len()),
        ));
    }
    let mut onehot = Tensor2::zeros(categories.len(), num_categories);
    for (r, &c) in categories.iter().enumerate() {
        if c >= num_categories {
            return Err(Error::dim(
                "one_hot",
                format!("category {c}"),
                format!("C = {num_categories}"),
            ));
        }
        onehot.set(r, c, 1.0);
    }
    Tensor2::hcat(&[f_img, &onehot])
}

impl MultiHeadFusion {
    pub fn init(
        d_img: usize,
        num_categories: usize,
        d_p: usize,
        d_model: usize,
        d_geo: usize,
        heads: usize,
        alpha: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if heads == 0 || !d_model.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "model width {d_model} not divisible by {heads} heads"
            )));
        }
        if !(alpha >= 0.0) {
            return Err(Error::Config(format!("category weighting must be ≥ 0, got {alpha}")));
        }
        let dq = d_img + num_categories;
        let xavier =
            |r: &mut Rng, o: usize, i: usize| Param::new(rng::uniform_tensor(r, o, i, rng::xavier_bound(i, o)));
        Ok(Self {
            w_q: xavier(rng, d_model, dq),
            w_k: xavier(rng, d_model, d_p),
            w_v: xavier(rng, d_model, d_p),
            w_o: xavier(rng, d_geo, d_model),
            heads,
            alpha,
            num_categories,
            cache: None,
        })
    }

    pub fn d_model(&self) -> usize {
        self.w_q.value.rows()
    }

    pub fn d_geo(&self) -> usize {
        self.w_o.value.rows()
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    fn head_dim(&self) -> usize {
        self.d_model() / self.heads
    }

    fn log_alpha(&self) -> f64 {
        if self.alpha == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.alpha.ln()
        }
    }

    fn check(&self, query_in: &Tensor2, categories: &[usize], tokens: &Tensor2, token_cats: &[usize]) -> Result<()> {
        if query_in.cols() != self.w_q.value.cols() || query_in.rows() != categories.len() {
            return Err(Error::dim(
                "fuse",
                query_in.shape_str(),
                format!(
                    "{}×{} (image feature ‖ one-hot)",
                    categories.len(),
                    self.w_q.value.cols()
                ),
            ));
        }
        if tokens.cols() != self.w_k.value.cols() || tokens.rows() != token_cats.len() || tokens.rows() == 0 {
            return Err(Error::dim(
                "fuse",
                tokens.shape_str(),
                format!("{}×{} prototype tokens", token_cats.len(), self.w_k.value.cols()),
            ));
        }
        if let Some(&c) = token_cats.iter().chain(categories).find(|&&c| c >= self.num_categories) {
            return Err(Error::dim(
                "fuse",
                format!("category {c}"),
                format!("C = {}", self.num_categories),
            ));
        }
        Ok(())
    }

    fn run(
        &self,
        query_in: &Tensor2,
        categories: &[usize],
        tokens: &Tensor2,
        token_cats: &[usize],
    ) -> Result<(Tensor2, Cache)> {
        self.check(query_in, categories, tokens, token_cats)?;
        let q = query_in.matmul_nt(&self.w_q.value)?;
        let k = tokens.matmul_nt(&self.w_k.value)?;
        let v = tokens.matmul_nt(&self.w_v.value)?;
        let (b, t, dh) = (q.rows(), k.rows(), self.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let bias = self.log_alpha();
        let mut o = Tensor2::zeros(b, self.d_model());
        let mut attn = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let mut a = Tensor2::zeros(b, t);
            for r in 0..b {
                let qr = &q.row(r)[cols.clone()];
                let row = a.row_mut(r);
                for (j, slot) in row.iter_mut().enumerate() {
                    let mut logit = scale * dot(qr, &k.row(j)[cols.clone()]);
                    if token_cats[j] == categories[r] {
                        logit += bias;
                    }
                    *slot = logit;
                }
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    sum += *x;
                }
                for x in row.iter_mut() {
                    *x /= sum;
                }
                let orow = &mut o.row_mut(r)[cols.clone()];
                for (j, &w) in a.row(r).iter().enumerate() {
                    if w != 0.0 {
                        for (dst, &vv) in orow.iter_mut().zip(&v.row(j)[cols.clone()]) {
                            *dst += w * vv;
                        }
                    }
                }
            }
            attn.push(a);
        }
        let out = o.matmul_nt(&self.w_o.value)?;
        Ok((
            out,
            Cache {
                query_in: query_in.clone(),
                tokens: tokens.clone(),
                q,
                k,
                v,
                attn,
                o,
            },
        ))
    }

    /// Fused geometric features, one row per query (`B×D_geo`).
    pub fn eval(
        &self,
        query_in: &Tensor2,
        categories: &[usize],
        tokens: &Tensor2,
        token_cats: &[usize],
    ) -> Result<Tensor2> {
        Ok(self.run(query_in, categories, tokens, token_cats)?.0)
    }

    pub fn forward(
        &mut self,
        query_in: &Tensor2,
        categories: &[usize],
        tokens: &Tensor2,
        token_cats: &[usize],
    ) -> Result<Tensor2> {
        let (out, cache) = self.run(query_in, categories, tokens, token_cats)?;
        self.cache = Some(cache);
        Ok(out)
    }

    /// Attention weights of the last forward pass, one `B×T` matrix per head.
    pub fn attention(&self) -> Option<&[Tensor2]> {
        self.cache.as_ref().map(|c| c.attn.as_slice())
    }

    /// Accumulates parameter gradients and returns the gradients with
    /// respect to the query input and the tokens.
    pub fn backward(&mut self, grad_out: &Tensor2) -> Result<(Tensor2, Tensor2)> {
        let c = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("fusion backward called before forward".into()))?;
        if grad_out.shape() != (c.o.rows(), self.d_geo()) {
            return Err(Error::dim(
                "fuse_backward",
                grad_out.shape_str(),
                format!("{}×{}", c.o.rows(), self.d_geo()),
            ));
        }
        grad_out.accumulate_tn(&c.o, &mut self.w_o.grad)?;
        let d_o = grad_out.matmul(&self.w_o.value)?;
        let (b, t, dh) = (c.q.rows(), c.k.rows(), self.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let mut d_q = Tensor2::zeros(b, self.d_model());
        let mut d_k = Tensor2::zeros(t, self.d_model());
        let mut d_v = Tensor2::zeros(t, self.d_model());
        let mut d_a = vec![0.0; t];
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let a = &c.attn[h];
            for r in 0..b {
                let go = &d_o.row(r)[cols.clone()];
                let ar = a.row(r);
                let mut weighted = 0.0;
                for j in 0..t {
                    d_a[j] = dot(go, &c.v.row(j)[cols.clone()]);
                    weighted += ar[j] * d_a[j];
                }
                let qr = &c.q.row(r)[cols.clone()];
                for j in 0..t {
                    if ar[j] == 0.0 {
                        continue;
                    }
                    for (dst, &g) in d_v.row_mut(j)[cols.clone()].iter_mut().zip(go) {
                        *dst += ar[j] * g;
                    }
                    let dl = scale * ar[j] * (d_a[j] - weighted);
                    for (dst, &kv) in d_q.row_mut(r)[cols.clone()].iter_mut().zip(&c.k.row(j)[cols.clone()]) {
                        *dst += dl * kv;
                    }
                    for (dst, &qv) in d_k.row_mut(j)[cols.clone()].iter_mut().zip(qr) {
                        *dst += dl * qv;
                    }
                }
            }
        }
        d_q.accumulate_tn(&c.query_in, &mut self.w_q.grad)?;
        d_k.accumulate_tn(&c.tokens, &mut self.w_k.grad)?;
        d_v.accumulate_tn(&c.tokens, &mut self.w_v.grad)?;
        let d_in = d_q.matmul(&self.w_q.value)?;
        let mut d_tok = d_k.matmul(&self.w_k.value)?;
        d_tok.add_assign(&d_v.matmul(&self.w_v.value)?)?;
        Ok((d_in, d_tok))
    }

    /// Single-query convenience wrapper.
    pub fn fuse(&self, f_img: &[f64], category: usize, tokens: &Tensor2, token_cats: &[usize]) -> Result<Vec<f64>> {
        let q = query_input(&Tensor2::row_vector(f_img), &[category], self.num_categories)?;
        Ok(self.eval(&q, &[category], tokens, token_cats)?.into_vec())
    }
}

impl Parameterized for MultiHeadFusion {
    fn visit(&mut self, v: &mut Visitor<'_>) {
        v.param("w_q", &mut self.w_q);
        v.param("w_k", &mut self.w_k);
        v.param("w_v", &mut self.w_v);
        v.param("w_o", &mut self.w_o);
    }
}
