use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decoder::HeadKind;
use crate::error::{Error, Result};
use crate::kan::DecoderSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!("unknown profile {s:?} (desk|paper)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

/// Architecture variants compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    Full,
    /// Linear head in place of the KAN stack.
    NoKan,
    /// No prototype library, encoder or fusion; the decoder sees only the
    /// image feature.
    NoPrior,
    NoBoth,
    /// ReLU MLP head with the KAN stack's parameter count.
    MlpHead,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::NoKan,
        Ablation::NoPrior,
        Ablation::NoBoth,
        Ablation::MlpHead,
    ];

    pub fn head(self) -> HeadKind {
        match self {
            Ablation::Full | Ablation::NoPrior => HeadKind::Kan,
            Ablation::NoKan | Ablation::NoBoth => HeadKind::Linear,
            Ablation::MlpHead => HeadKind::Mlp,
        }
    }

    pub fn uses_prior(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoKan | Ablation::MlpHead)
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoKan => "no-kan",
            Ablation::NoPrior => "no-prior",
            Ablation::NoBoth => "no-both",
            Ablation::MlpHead => "mlp-head",
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown ablation {s:?} (full|no-kan|no-prior|no-both|mlp-head)"
            ))
        })
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every knob of a run. Loaded from a flat `key = value` file on top of a
/// profile's defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub ablate: Ablation,
    // data
    pub categories: usize,
    pub instances_per_category: usize,
    pub samples_per_instance: usize,
    pub image_res: usize,
    // widths
    pub d_img: usize,
    pub d_geo: usize,
    pub d_p: usize,
    pub d_model: usize,
    pub image_hidden: usize,
    pub front_hidden: [usize; 2],
    pub schedule: Vec<usize>,
    // prior and fusion
    pub k: usize,
    pub heads: usize,
    pub alpha: f64,
    // kan
    pub grid_size: usize,
    pub spline_order: usize,
    pub eps: f64,
    pub adapt_every: usize,
    pub refit: bool,
    // optimisation
    pub lr: f64,
    pub batch_size: usize,
    pub queries_per_instance: usize,
    pub steps: usize,
    /// When nonzero, overrides `steps` with `epochs · ⌈train / batch⌉`.
    pub epochs: usize,
    pub loss_delta: f64,
    pub checkpoint_every: usize,
    // evaluation
    pub eval_res: usize,
    pub eval_samples: usize,
    pub fscore_tau: f64,
}

impl RunConfig {
    pub fn desk() -> Self {
        Self {
            profile: Profile::Desk,
            seed: 0,
            ablate: Ablation::Full,
            categories: 3,
            instances_per_category: 20,
            samples_per_instance: 4000,
            image_res: 32,
            d_img: 64,
            d_geo: 64,
            d_p: 32,
            d_model: 64,
            image_hidden: 128,
            front_hidden: [128, 128],
            schedule: vec![64, 32, 16, 8, 1],
            k: 512,
            heads: 4,
            alpha: std::f64::consts::E,
            grid_size: 5,
            spline_order: 3,
            eps: 0.02,
            adapt_every: 200,
            refit: true,
            lr: 1e-3,
            batch_size: 16,
            queries_per_instance: 32,
            steps: 5000,
            epochs: 0,
            loss_delta: 0.1,
            checkpoint_every: 1000,
            eval_res: 64,
            eval_samples: 10_000,
            fscore_tau: 0.05,
        }
    }

    pub fn paper() -> Self {
        Self {
            profile: Profile::Paper,
            categories: 9,
            d_img: 256,
            d_geo: 256,
            d_p: 128,
            d_model: 256,
            front_hidden: [256, 256],
            schedule: vec![128, 32, 16, 8, 1],
            k: 6272,
            lr: 6e-5,
            epochs: 200,
            ..Self::desk()
        }
    }

    pub fn for_profile(p: Profile) -> Self {
        match p {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    pub fn decoder_schedule(&self) -> Result<DecoderSchedule> {
        DecoderSchedule::new(self.schedule.clone())
    }

    pub fn num_instances(&self) -> usize {
        self.categories * self.instances_per_category
    }

    /// Width of the per-instance feature row fed to the decoder.
    pub fn feature_width(&self) -> usize {
        if self.ablate.uses_prior() {
            self.d_img + self.d_geo
        } else {
            self.d_img
        }
    }

    /// Optimiser steps for a training split of `train` instances.
    pub fn total_steps(&self, train: usize) -> usize {
        if self.epochs > 0 {
            self.epochs * train.div_ceil(self.batch_size)
        } else {
            self.steps
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.decoder_schedule()?;
        if self.categories == 0 || self.instances_per_category == 0 {
            return bad("need at least one category and instance".into());
        }
        if !self.d_model.is_multiple_of(self.heads.max(1)) || self.heads == 0 {
            return bad(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            ));
        }
        if !self.d_p.is_multiple_of(2) {
            return bad(format!("d_p must be even, got {}", self.d_p));
        }
        if !(0.0..=1.0).contains(&self.eps) {
            return bad(format!("eps {} outside [0, 1]", self.eps));
        }
        if self.grid_size == 0 || self.spline_order == 0 {
            return bad("grid_size and spline_order must be positive".into());
        }
        if !(self.lr > 0.0) || !(self.loss_delta > 0.0) || !(self.fscore_tau > 0.0) || !(self.alpha >= 0.0) {
            return bad("lr, loss_delta, fscore_tau must be positive and alpha non-negative".into());
        }
        if self.batch_size == 0 || self.queries_per_instance == 0 || self.samples_per_instance == 0 {
            return bad("batch_size, queries_per_instance, samples_per_instance must be positive".into());
        }
        if self.batch_size * self.queries_per_instance < self.grid_size + self.spline_order + 1 {
            return bad("a training batch must hold at least grid_size + spline_order + 1 queries".into());
        }
        if self.eval_res < 2 || self.image_res == 0 || self.k == 0 {
            return bad("eval_res ≥ 2, image_res and k positive".into());
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Profile defaults (the file's own `profile` key wins over `profile`),
    /// then the file's settings.
    pub fn from_text(text: &str, profile: Profile) -> Result<Self> {
        let declared = text
            .lines()
            .filter_map(|l| l.split('#').next())
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == "profile")
            .map(|(_, v)| v.trim().parse::<Profile>())
            .transpose()?;
        let mut cfg = Self::for_profile(declared.unwrap_or(profile));
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, profile: Profile) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, profile)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<usize>> {
            v.split(',').map(|x| num(key, x.trim())).collect()
        }
        match key {
            "profile" => self.profile = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "ablate" => self.ablate = value.parse()?,
            "categories" => self.categories = num(key, value)?,
            "instances_per_category" => self.instances_per_category = num(key, value)?,
            "samples_per_instance" => self.samples_per_instance = num(key, value)?,
            "image_res" => self.image_res = num(key, value)?,
            "d_img" => self.d_img = num(key, value)?,
            "d_geo" => self.d_geo = num(key, value)?,
            "d_p" => self.d_p = num(key, value)?,
            "d_model" => self.d_model = num(key, value)?,
            "image_hidden" => self.image_hidden = num(key, value)?,
            "front_hidden" => {
                let v = list(key, value)?;
                self.front_hidden = v
                    .try_into()
                    .map_err(|_| Error::Config("front_hidden takes exactly two widths".into()))?;
            }
            "schedule" => self.schedule = list(key, value)?,
            "k" => self.k = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "grid_size" => self.grid_size = num(key, value)?,
            "spline_order" => self.spline_order = num(key, value)?,
            "eps" => self.eps = num(key, value)?,
            "adapt_every" => self.adapt_every = num(key, value)?,
            "refit" => self.refit = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "queries_per_instance" => self.queries_per_instance = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "loss_delta" => self.loss_delta = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "eval_res" => self.eval_res = num(key, value)?,
            "eval_samples" => self.eval_samples = num(key, value)?,
            "fscore_tau" => self.fscore_tau = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// The config as `key = value` text that [`RunConfig::from_text`] reads back.
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let pairs: Vec<(&str, String)> = vec![
            ("profile", self.profile.to_string()),
            ("seed", self.seed.to_string()),
            ("ablate", self.ablate.to_string()),
            ("categories", self.categories.to_string()),
            ("instances_per_category", self.instances_per_category.to_string()),
            ("samples_per_instance", self.samples_per_instance.to_string()),
            ("image_res", self.image_res.to_string()),
            ("d_img", self.d_img.to_string()),
            ("d_geo", self.d_geo.to_string()),
            ("d_p", self.d_p.to_string()),
            ("d_model", self.d_model.to_string()),
            ("image_hidden", self.image_hidden.to_string()),
            ("front_hidden", join(&self.front_hidden)),
            ("schedule", join(&self.schedule)),
            ("k", self.k.to_string()),
            ("heads", self.heads.to_string()),
            ("alpha", format!("{:?}", self.alpha)),
            ("grid_size", self.grid_size.to_string()),
            ("spline_order", self.spline_order.to_string()),
            ("eps", format!("{:?}", self.eps)),
            ("adapt_every", self.adapt_every.to_string()),
            ("refit", self.refit.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("batch_size", self.batch_size.to_string()),
            ("queries_per_instance", self.queries_per_instance.to_string()),
            ("steps", self.steps.to_string()),
            ("epochs", self.epochs.to_string()),
            ("loss_delta", format!("{:?}", self.loss_delta)),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("eval_res", self.eval_res.to_string()),
            ("eval_samples", self.eval_samples.to_string()),
            ("fscore_tau", format!("{:?}", self.fscore_tau)),
        ];
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
