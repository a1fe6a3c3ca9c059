use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoder::sdf_loss;
use crate::error::{Error, Result};
use crate::numcore::rng;
use crate::numcore::{Adam, Parameterized, Tensor2};
use crate::prior::PrototypeLibrary;

use super::archive::TensorArchive;
use super::config::RunConfig;
use super::dataset::{file_hash, Dataset, Split};
use super::model::{image_input, Batch, ReconModel};

const TAG_BATCH: u64 = 0xba7c;

/// Learning rate after step decay: halved at one and two thirds of training.
pub fn lr_at(base: f64, step: usize, total: usize) -> f64 {
    let phase = (3 * step).checked_div(total).unwrap_or(0).min(2);
    base * 0.5f64.powi(phase as i32)
}

/// Whether grids are adapted before `step` (0-based): every
/// `adapt_every` steps during the first half.
pub fn adapts_at(step: usize, adapt_every: usize, total: usize) -> bool {
    adapt_every > 0 && step.is_multiple_of(adapt_every) && 2 * step < total
}

/// Batch `step` of a run: `batch_size` train instances drawn with
/// replacement and `queries_per_instance` samples each. Depends only on
/// the seed, the step and the dataset, never on the architecture.
pub fn training_batch(cfg: &RunConfig, ds: &Dataset, train_ids: &[usize], step: usize) -> Result<(Batch, Tensor2)> {
    if train_ids.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let mut r = rng::stream(cfg.seed, &[TAG_BATCH, step as u64]);
    let (b, q) = (cfg.batch_size, cfg.queries_per_instance);
    let pixels = ds.data[train_ids[0]].depth.cols();
    let mut images = Tensor2::zeros(b, pixels);
    let mut categories = Vec::with_capacity(b);
    let mut points = Tensor2::zeros(b * q, 3);
    let mut targets = Tensor2::zeros(b * q, 1);
    let mut owner = Vec::with_capacity(b * q);
    for row in 0..b {
        let id = train_ids[rng::index(&mut r, train_ids.len())];
        let d = &ds.data[id];
        images.row_mut(row).copy_from_slice(d.depth.row(0));
        categories.push(ds.record(id).category);
        for j in 0..q {
            let s = d.samples.row(rng::index(&mut r, d.samples.rows()));
            let n = row * q + j;
            points.row_mut(n).copy_from_slice(&s[..3]);
            targets.set(n, 0, s[3]);
            owner.push(row);
        }
    }
    Ok((
        Batch {
            images: image_input(&images),
            categories,
            points,
            owner,
        },
        targets,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub step: usize,
    pub path: String,
    pub sha256: String,
    /// Mean training loss over the steps since the previous checkpoint.
    pub mean_loss: f64,
}

/// Model, optimiser and progress of one training run.
pub struct Trainer {
    pub cfg: RunConfig,
    pub model: ReconModel,
    pub adam: Adam,
    /// Completed steps.
    pub step: usize,
    pub total_steps: usize,
    /// Loss of every completed step.
    pub losses: Vec<f64>,
    train_ids: Vec<usize>,
}

impl Trainer {
    pub fn new(cfg: &RunConfig, ds: &Dataset, library: Option<&PrototypeLibrary>) -> Result<Self> {
        if ds.num_categories() != cfg.categories {
            return Err(Error::Config(format!(
                "dataset has {} categories, config {}",
                ds.num_categories(),
                cfg.categories
            )));
        }
        let mut model = ReconModel::init(cfg, library)?;
        let adam = Adam::new(&mut model, cfg.lr);
        let train_ids = ds.ids(Split::Train);
        Ok(Self {
            cfg: cfg.clone(),
            model,
            adam,
            step: 0,
            total_steps: cfg.total_steps(train_ids.len()),
            losses: Vec::new(),
            train_ids,
        })
    }

    /// Runs one optimiser step and returns its loss.
    pub fn train_step(&mut self, ds: &Dataset) -> Result<f64> {
        let s = self.step;
        let (batch, targets) = training_batch(&self.cfg, ds, &self.train_ids, s)?;
        if adapts_at(s, self.cfg.adapt_every, self.total_steps) {
            self.model.adapt_grids(&batch, self.cfg.eps, self.cfg.refit)?;
        }
        self.adam.set_lr(lr_at(self.cfg.lr, s, self.total_steps));
        self.model.zero_grad();
        let pred = self.model.forward(&batch)?;
        let (loss, grad) = sdf_loss(&pred, &targets, self.cfg.loss_delta)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss at step {}", s + 1)));
        }
        self.model.backward(&grad)?;
        self.adam.step(&mut self.model)?;
        self.step += 1;
        self.losses.push(loss);
        Ok(loss)
    }

    /// Trains up to `until` completed steps (capped at the run length),
    /// writing checkpoints and the loss log under `out` when given.
    pub fn run(&mut self, ds: &Dataset, until: usize, out: Option<&Path>) -> Result<Vec<CheckpointRecord>> {
        let until = until.min(self.total_steps);
        let mut records = Vec::new();
        let mut last_good: Option<PathBuf> = None;
        let ckpt_dir = out.map(|o| o.join("checkpoints"));
        if let Some(d) = &ckpt_dir {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        let mut window_start = self.step;
        while self.step < until {
            if let Err(e) = self.train_step(ds) {
                return Err(match e {
                    Error::Numerical(msg) => Error::Numerical(match &last_good {
                        Some(p) => format!("{msg}; last good checkpoint: {}", p.display()),
                        None => format!("{msg}; no checkpoint written yet"),
                    }),
                    e => e,
                });
            }
            let every = self.cfg.checkpoint_every;
            let at_ckpt = (every > 0 && self.step.is_multiple_of(every)) || self.step == self.total_steps;
            if let (Some(dir), true) = (&ckpt_dir, at_ckpt) {
                let path = dir.join(format!("step_{:06}.ckpt", self.step));
                self.checkpoint().save(&path)?;
                let window = &self.losses[window_start..self.step];
                records.push(CheckpointRecord {
                    step: self.step,
                    path: format!("checkpoints/step_{:06}.ckpt", self.step),
                    sha256: file_hash(&path)?,
                    mean_loss: window.iter().sum::<f64>() / window.len().max(1) as f64,
                });
                window_start = self.step;
                last_good = Some(path);
            }
        }
        if let Some(o) = out {
            let p = o.join("loss.csv");
            std::fs::write(&p, self.loss_csv()).map_err(|e| Error::io(&p, e))?;
        }
        Ok(records)
    }

    /// `step,loss,lr` with 1-based steps.
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("step,loss,lr\n");
        for (i, l) in self.losses.iter().enumerate() {
            let _ = writeln!(s, "{},{:?},{:?}", i + 1, l, lr_at(self.cfg.lr, i, self.total_steps));
        }
        s
    }

    /// Parameters, buffers, Adam moments, step counter and loss history.
    pub fn checkpoint(&mut self) -> TensorArchive {
        let mut a = TensorArchive::new();
        let mut i = 0;
        let states = &self.adam.states;
        self.model.for_each_param(|name, p| {
            a.insert(format!("param.{name}"), p.value.clone());
            a.insert(format!("adam.m.{name}"), states[i].m.clone());
            a.insert(format!("adam.v.{name}"), states[i].v.clone());
            a.insert_scalar(format!("adam.t.{name}"), states[i].step as f64);
            i += 1;
        });
        self.model
            .for_each_buffer(|name, t| a.insert(format!("buffer.{name}"), t.clone()));
        a.insert_scalar("step", self.step as f64);
        a.insert_scalar("total_steps", self.total_steps as f64);
        a.insert("losses", Tensor2::row_vector(&self.losses));
        a
    }

    /// Loads a checkpoint written by a trainer with the same config.
    pub fn restore(&mut self, a: &TensorArchive) -> Result<()> {
        let total = a.scalar("total_steps")? as usize;
        if total != self.total_steps {
            return Err(Error::Config(format!(
                "checkpoint run length {total}, config {}",
                self.total_steps
            )));
        }
        load_model_state(&mut self.model, a)?;
        let mut i = 0;
        let mut result = Ok(());
        let states = &mut self.adam.states;
        self.model.for_each_param(|name, _| {
            let s = &mut states[i];
            i += 1;
            let r = (|| -> Result<()> {
                s.m = shaped(a, &format!("adam.m.{name}"), &s.m)?;
                s.v = shaped(a, &format!("adam.v.{name}"), &s.v)?;
                s.step = a.scalar(&format!("adam.t.{name}"))? as u64;
                Ok(())
            })();
            if result.is_ok() {
                result = r;
            }
        });
        result?;
        self.step = a.scalar("step")? as usize;
        self.losses = a.get("losses")?.data().to_vec();
        if self.losses.len() != self.step {
            return Err(Error::Format("loss history does not match step counter".into()));
        }
        Ok(())
    }
}

fn shaped(a: &TensorArchive, name: &str, like: &Tensor2) -> Result<Tensor2> {
    let t = a.get(name)?;
    if t.shape() != like.shape() {
        return Err(Error::dim(
            "checkpoint",
            format!("{name} {}", t.shape_str()),
            like.shape_str(),
        ));
    }
    Ok(t.clone())
}

/// Copies parameters and buffers from a checkpoint into `model`, which
/// must have the same architecture.
pub fn load_model_state(model: &mut ReconModel, a: &TensorArchive) -> Result<()> {
    let mut result = Ok(());
    model.for_each_param(|name, p| {
        if result.is_ok() {
            result = shaped(a, &format!("param.{name}"), &p.value).map(|t| p.value = t);
        }
    });
    result?;
    let mut result = Ok(());
    model.for_each_buffer(|name, t| {
        if result.is_ok() {
            result = shaped(a, &format!("buffer.{name}"), t).map(|v| *t = v);
        }
    });
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_halves_at_thirds() {
        let l: Vec<f64> = [0, 32, 33, 65, 66, 98].iter().map(|&s| lr_at(1.0, s, 99)).collect();
        assert_eq!(l, [1.0, 1.0, 0.5, 0.5, 0.25, 0.25]);
    }

    #[test]
    fn adaptation_schedule() {
        let at: Vec<usize> = (0..1000).filter(|&s| adapts_at(s, 200, 1000)).collect();
        assert_eq!(at, [0, 200, 400]);
        assert!(!adapts_at(5, 0, 1000));
    }
}
