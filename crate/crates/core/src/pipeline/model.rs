use crate::decoder::{kan_param_count, DecoderInput, HeadKind, SdfDecoder};
use crate::error::{Error, Result};
use crate::fusion::{query_input, MultiHeadFusion};
use crate::numcore::rng::{self, Rng};
use crate::numcore::{Activation, Mlp, Param, Parameterized, Tensor2, Visitor};
use crate::prior::{PrototypeEncoder, PrototypeLibrary};
use crate::spline::SplineGrid;

use super::config::RunConfig;

/// RNG stream tags, one per component, so that every ablation initialises
/// the components it shares with the full model identically.
const TAG_MODEL: u64 = 0x30de1;
const TAG_IMAGE: u64 = 0;
const TAG_PRIOR_ENCODER: u64 = 1;
const TAG_FUSION: u64 = 2;
const TAG_DECODER: u64 = 3;

pub(crate) fn component_rng(seed: u64, tag: u64) -> Rng {
    rng::stream(seed, &[TAG_MODEL, tag])
}

/// The prototype encoder the library is built with; also the initial
/// state of the model's trainable encoder.
pub fn initial_prototype_encoder(cfg: &RunConfig) -> Result<PrototypeEncoder> {
    PrototypeEncoder::init(cfg.d_p, &mut component_rng(cfg.seed, TAG_PRIOR_ENCODER))
}

/// Depth render mapped from `[0, 2]` to `[-1, 1]`.
pub fn image_input(depth: &Tensor2) -> Tensor2 {
    depth.map(|d| d - 1.0)
}

/// Prototype encoder, fusion and the fixed library samples.
#[derive(Debug, Clone)]
pub struct PriorBranch {
    pub encoder: PrototypeEncoder,
    pub fusion: MultiHeadFusion,
    samples: Tensor2,
    token_cats: Vec<usize>,
}

impl PriorBranch {
    pub fn tokens(&self) -> Result<Tensor2> {
        self.encoder.eval(&self.samples)
    }

    pub fn token_categories(&self) -> &[usize] {
        &self.token_cats
    }
}

impl Parameterized for PriorBranch {
    fn visit(&mut self, v: &mut Visitor<'_>) {
        v.scope("encoder", |v| self.encoder.visit(v));
        v.scope("fusion", |v| self.fusion.visit(v));
        v.buffer("samples", &mut self.samples);
    }
}

/// One training or decoding batch: `B` instances, each with its own
/// query points.
#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Tensor2,
    pub categories: Vec<usize>,
    pub points: Tensor2,
    /// Instance row of every query point.
    pub owner: Vec<usize>,
}

/// Toy depth encoder, optional prior branch and SDF decoder.
#[derive(Debug, Clone)]
pub struct ReconModel {
    pub image: Mlp,
    pub prior: Option<PriorBranch>,
    pub decoder: SdfDecoder,
    num_categories: usize,
    d_img: usize,
}

impl ReconModel {
    /// Builds the architecture selected by `cfg.ablate`. The library is
    /// required exactly when the ablation keeps the prior.
    pub fn init(cfg: &RunConfig, library: Option<&PrototypeLibrary>) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.seed;
        let pixels = cfg.image_res * cfg.image_res;
        let image = Mlp::xavier(
            &[pixels, cfg.image_hidden, cfg.d_img],
            Activation::Silu,
            &mut component_rng(seed, TAG_IMAGE),
        );
        let prior = if cfg.ablate.uses_prior() {
            let lib =
                library.ok_or_else(|| Error::Config(format!("ablation {} needs a prototype library", cfg.ablate)))?;
            if lib.num_categories() != cfg.categories
                || lib.feature_width() != cfg.d_p
                || lib.points_per_prototype() != cfg.k
            {
                return Err(Error::Config(format!(
                    "library is C={} K={} D_p={}, config wants C={} K={} D_p={}",
                    lib.num_categories(),
                    lib.points_per_prototype(),
                    lib.feature_width(),
                    cfg.categories,
                    cfg.k,
                    cfg.d_p
                )));
            }
            let fusion = MultiHeadFusion::init(
                cfg.d_img,
                cfg.categories,
                cfg.d_p,
                cfg.d_model,
                cfg.d_geo,
                cfg.heads,
                cfg.alpha,
                &mut component_rng(seed, TAG_FUSION),
            )?;
            Some(PriorBranch {
                encoder: initial_prototype_encoder(cfg)?,
                fusion,
                samples: lib.stacked_samples(),
                token_cats: lib.token_categories(),
            })
        } else {
            None
        };
        let schedule = cfg.decoder_schedule()?;
        let grid = SplineGrid::uniform(-1.0, 1.0, cfg.grid_size, cfg.spline_order)?;
        let decoder = SdfDecoder::init(
            cfg.feature_width(),
            cfg.front_hidden,
            &schedule,
            &grid,
            cfg.ablate.head(),
            &mut component_rng(seed, TAG_DECODER),
        );
        Ok(Self {
            image,
            prior,
            decoder,
            num_categories: cfg.categories,
            d_img: cfg.d_img,
        })
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    /// Per-instance decoder features `[f_img ‖ f_geo]`, or `f_img` alone
    /// without the prior.
    pub fn features(&self, images: &Tensor2, categories: &[usize]) -> Result<Tensor2> {
        let f_img = self.image.eval(images)?;
        match &self.prior {
            None => Ok(f_img),
            Some(p) => {
                let tokens = p.tokens()?;
                let q = query_input(&f_img, categories, self.num_categories)?;
                let f_geo = p.fusion.eval(&q, categories, &tokens, &p.token_cats)?;
                Tensor2::hcat(&[&f_img, &f_geo])
            }
        }
    }

    fn features_forward(&mut self, images: &Tensor2, categories: &[usize]) -> Result<Tensor2> {
        let f_img = self.image.forward(images)?;
        match &mut self.prior {
            None => Ok(f_img),
            Some(p) => {
                let tokens = p.encoder.forward(&p.samples)?;
                let q = query_input(&f_img, categories, self.num_categories)?;
                let f_geo = p.fusion.forward(&q, categories, &tokens, &p.token_cats)?;
                Tensor2::hcat(&[&f_img, &f_geo])
            }
        }
    }

    pub fn decoder_input(&self, batch: &Batch, features: Tensor2) -> Result<DecoderInput> {
        self.decoder.input(&batch.points, features, batch.owner.clone())
    }

    /// Predicted SDF for every query point (`N×1`), without caching.
    pub fn eval(&self, batch: &Batch) -> Result<Tensor2> {
        let f = self.features(&batch.images, &batch.categories)?;
        self.decoder.eval(&self.decoder_input(batch, f)?)
    }

    pub fn forward(&mut self, batch: &Batch) -> Result<Tensor2> {
        let f = self.features_forward(&batch.images, &batch.categories)?;
        let x = self.decoder_input(batch, f)?;
        self.decoder.forward(&x)
    }

    /// Accumulates gradients of every component from `d pred`.
    pub fn backward(&mut self, grad_out: &Tensor2) -> Result<()> {
        let d_feat = self.decoder.backward(grad_out)?;
        let mut d_img = d_feat.slice_cols(0, self.d_img);
        if let Some(p) = &mut self.prior {
            let d_geo = d_feat.slice_cols(self.d_img, d_feat.cols());
            let (d_q, d_tok) = p.fusion.backward(&d_geo)?;
            d_img.add_assign(&d_q.slice_cols(0, self.d_img))?;
            p.encoder.backward(&d_tok)?;
        }
        self.image.backward(&d_img)?;
        Ok(())
    }

    /// Adapts the KAN head's grids to the front-end outputs on `batch`.
    /// Other heads have no grids and are left untouched.
    pub fn adapt_grids(&mut self, batch: &Batch, eps: f64, refit: bool) -> Result<()> {
        if self.decoder.head.kind() != HeadKind::Kan {
            return Ok(());
        }
        let f = self.features(&batch.images, &batch.categories)?;
        let h = self.decoder.front.eval(&self.decoder_input(batch, f)?)?;
        self.decoder.head.adapt_grids(&h, eps, refit)
    }

    /// Trainable scalars in the decoder head.
    pub fn head_param_count(&mut self) -> usize {
        let mut n = 0;
        self.decoder.head.for_each_param(|_, p: &mut Param| n += p.len());
        n
    }
}

impl Parameterized for ReconModel {
    fn visit(&mut self, v: &mut Visitor<'_>) {
        v.scope("image", |v| self.image.visit(v));
        if let Some(p) = &mut self.prior {
            v.scope("prior", |v| p.visit(v));
        }
        v.scope("decoder", |v| self.decoder.visit(v));
    }
}

/// KAN-stack parameter count of a config, the budget the MLP head matches.
pub fn kan_budget(cfg: &RunConfig) -> Result<usize> {
    Ok(kan_param_count(
        &cfg.decoder_schedule()?,
        cfg.grid_size + cfg.spline_order,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{gradcheck, probe_loss, GradcheckConfig};
    use crate::pipeline::config::Ablation;
    use crate::prior::PrototypeLibrary;

    fn tiny(ablate: Ablation) -> RunConfig {
        RunConfig {
            ablate,
            image_res: 4,
            image_hidden: 8,
            d_img: 6,
            d_geo: 6,
            d_p: 4,
            d_model: 8,
            heads: 2,
            k: 5,
            front_hidden: [10, 10],
            schedule: vec![6, 4, 1],
            ..RunConfig::desk()
        }
    }

    fn library(cfg: &RunConfig) -> PrototypeLibrary {
        let mut r = rng::seeded(5);
        let enc = initial_prototype_encoder(cfg).unwrap();
        let protos = (0..cfg.categories)
            .map(|c| (c, rng::uniform_tensor(&mut r, cfg.k, 4, 1.0)))
            .collect();
        PrototypeLibrary::encode(protos, &enc).unwrap()
    }

    fn batch(cfg: &RunConfig) -> Batch {
        let mut r = rng::seeded(9);
        let b = 3;
        let q = 4;
        Batch {
            images: rng::uniform_tensor(&mut r, b, cfg.image_res * cfg.image_res, 1.0),
            categories: vec![0, 2, 1],
            points: rng::uniform_tensor(&mut r, b * q, 3, 1.0),
            owner: (0..b * q).map(|i| i / q).collect(),
        }
    }

    #[test]
    fn ablations_select_components() {
        for a in Ablation::ALL {
            let cfg = tiny(a);
            let lib = library(&cfg);
            let m = ReconModel::init(&cfg, Some(&lib)).unwrap();
            assert_eq!(m.prior.is_some(), a.uses_prior());
            assert_eq!(m.decoder.head.kind(), a.head());
            let out = m.eval(&batch(&cfg)).unwrap();
            assert_eq!(out.shape(), (12, 1));
        }
        assert!(ReconModel::init(&tiny(Ablation::Full), None).is_err());
        assert!(ReconModel::init(&tiny(Ablation::NoPrior), None).is_ok());
    }

    #[test]
    fn library_features_match_initial_tokens() {
        let cfg = tiny(Ablation::Full);
        let lib = library(&cfg);
        let m = ReconModel::init(&cfg, Some(&lib)).unwrap();
        assert_eq!(m.prior.as_ref().unwrap().tokens().unwrap(), lib.stacked_features());
    }

    #[test]
    fn end_to_end_gradients() {
        for a in [Ablation::Full, Ablation::NoBoth] {
            let cfg = tiny(a);
            let lib = library(&cfg);
            let mut m = ReconModel::init(&cfg, Some(&lib)).unwrap();
            let b = batch(&cfg);
            m.adapt_grids(&b, 0.02, true).unwrap();
            let mut r = rng::seeded(4);
            m.decoder.randomize_output_layers(0.5, &mut r);
            let probe = rng::normal_tensor(&mut r, 12, 1, 1.0);
            let report = gradcheck(&mut m, GradcheckConfig::default(), |m, forward| {
                let pred = if forward { m.forward(&b)? } else { m.eval(&b)? };
                if forward {
                    m.backward(&probe)?;
                }
                Ok(probe_loss(&pred, &probe))
            })
            .unwrap();
            assert!(report.pass, "{a}: {report:?}");
        }
    }
}
