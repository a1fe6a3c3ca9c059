use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::write_obj;
use crate::metrics::Summary;
use crate::numcore::{Parameterized, Tensor2};
use crate::prior::{load_library, pca_csv, save_library, PrototypeEntry, PrototypeLibrary};

use super::archive::TensorArchive;
use super::config::{Ablation, RunConfig};
use super::dataset::{file_hash, hex, Dataset, Split};
use super::gradcheck_suite::{run_gradchecks, GradcheckSuite};
use super::model::{kan_budget, ReconModel};
use super::priors::{build_priors, PrototypeChoice};
use super::reconstruct::{evaluate_split, reconstruct_instance};
use super::train::{load_model_state, CheckpointRecord, Trainer};

pub const MANIFEST: &str = "manifest.json";
pub const LIBRARY_FILE: &str = "library.mgpk";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCount {
    pub variant: String,
    pub total: usize,
    pub head: usize,
}

/// Everything needed to reproduce a command's outputs. Wall-clock time
/// lives in a separate `timing.json` so manifests stay byte-identical
/// across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    /// SHA-256 over the config text and every input digest.
    pub input_hash: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(default)]
    pub checkpoints: Vec<CheckpointRecord>,
    #[serde(default)]
    pub param_counts: Vec<ParamCount>,
    #[serde(default)]
    pub prototypes: Vec<PrototypeChoice>,
}

impl RunManifest {
    fn new(command: &str, cfg: &RunConfig, inputs: Vec<FileDigest>) -> Self {
        let mut h = Sha256::new();
        h.update(cfg.to_text().as_bytes());
        for d in &inputs {
            h.update(d.path.as_bytes());
            h.update(d.sha256.as_bytes());
        }
        Self {
            command: command.to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            input_hash: hex(&h.finalize()),
            inputs,
            outputs: Vec::new(),
            checkpoints: Vec::new(),
            param_counts: Vec::new(),
            prototypes: Vec::new(),
        }
    }

    fn output(&mut self, out: &Path, rel: &str) -> Result<()> {
        self.outputs.push(digest(&out.join(rel), rel)?);
        Ok(())
    }

    fn write(&self, out: &Path, started: Instant) -> Result<PathBuf> {
        let path = out.join(MANIFEST);
        write_text(&path, &serde_json::to_string_pretty(self)?)?;
        let timing = serde_json::json!({ "command": self.command, "wall_clock_s": started.elapsed().as_secs_f64() });
        write_text(&out.join("timing.json"), &timing.to_string())?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn digest(path: &Path, label: &str) -> Result<FileDigest> {
    Ok(FileDigest {
        path: label.to_string(),
        sha256: file_hash(path)?,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Generates the synthetic dataset into `out`.
pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<RunManifest> {
    let t0 = Instant::now();
    ensure_dir(out)?;
    let ds = Dataset::generate(cfg)?;
    ds.save(out)?;
    let mut m = RunManifest::new("gen-data", cfg, vec![]);
    m.output(out, super::dataset::DATASET_MANIFEST)?;
    m.write(out, t0)?;
    Ok(m)
}

/// Builds the prototype library from the train split of `data`.
pub fn cmd_build_priors(cfg: &RunConfig, data: &Path, out: &Path) -> Result<RunManifest> {
    let t0 = Instant::now();
    ensure_dir(out)?;
    let ds = Dataset::load(data)?;
    let build = build_priors(&ds, cfg)?;
    save_library(out.join(LIBRARY_FILE), &build.library)?;
    write_text(&out.join("prototypes_pca.csv"), &pca_csv(&build.pca))?;
    let mut m = RunManifest::new(
        "build-priors",
        cfg,
        vec![digest(&data.join(super::dataset::DATASET_MANIFEST), "dataset.json")?],
    );
    m.prototypes = build.choices;
    m.output(out, LIBRARY_FILE)?;
    m.output(out, "prototypes_pca.csv")?;
    m.write(out, t0)?;
    Ok(m)
}

/// Trains into `out`, optionally resuming from a checkpoint. The library
/// may be omitted for ablations without the prior.
pub fn cmd_train(
    cfg: &RunConfig,
    data: &Path,
    library: Option<&Path>,
    out: &Path,
    resume: Option<&Path>,
) -> Result<RunManifest> {
    let t0 = Instant::now();
    ensure_dir(out)?;
    let ds = Dataset::load(data)?;
    let mut inputs = vec![digest(&data.join(super::dataset::DATASET_MANIFEST), "dataset.json")?];
    let lib = match library {
        Some(p) if cfg.ablate.uses_prior() => {
            inputs.push(digest(p, LIBRARY_FILE)?);
            Some(load_library(p)?)
        }
        None if cfg.ablate.uses_prior() => {
            return Err(Error::Config(format!("ablation {} needs --library", cfg.ablate)));
        }
        _ => None,
    };
    write_text(&out.join(CONFIG_FILE), &cfg.to_text())?;
    let mut trainer = Trainer::new(cfg, &ds, lib.as_ref())?;
    let mut prior: Vec<CheckpointRecord> = Vec::new();
    if let Some(r) = resume {
        trainer.restore(&TensorArchive::load(r)?)?;
        // keep the records of checkpoints written before the resume point
        if let Ok(old) = RunManifest::load(out.join(MANIFEST)) {
            prior = old.checkpoints.into_iter().filter(|c| c.step <= trainer.step).collect();
        }
    }
    let records = trainer.run(&ds, trainer.total_steps, Some(out))?;
    let mut m = RunManifest::new("train", cfg, inputs);
    m.checkpoints = prior.into_iter().chain(records).collect();
    m.param_counts = vec![param_count(cfg.ablate, &mut trainer.model)];
    m.output(out, CONFIG_FILE)?;
    m.output(out, "loss.csv")?;
    m.write(out, t0)?;
    Ok(m)
}

fn param_count(a: Ablation, model: &mut ReconModel) -> ParamCount {
    ParamCount {
        variant: a.name().to_string(),
        total: model.param_count(),
        head: model.head_param_count(),
    }
}

/// Parameter counts of all five architecture variants of `cfg`.
pub fn ablation_param_counts(cfg: &RunConfig) -> Result<Vec<ParamCount>> {
    Ablation::ALL
        .into_iter()
        .map(|a| {
            let c = RunConfig {
                ablate: a,
                ..cfg.clone()
            };
            let mut m = model_skeleton(&c)?;
            Ok(param_count(a, &mut m))
        })
        .collect()
}

/// A model of the right architecture whose values will be overwritten
/// from a checkpoint, so the library contents do not matter.
fn model_skeleton(cfg: &RunConfig) -> Result<ReconModel> {
    let entry = PrototypeEntry {
        prototype_id: 0,
        samples: Tensor2::zeros(cfg.k, 4),
        features: Tensor2::zeros(cfg.k, cfg.d_p),
    };
    let lib = PrototypeLibrary::new(vec![entry; cfg.categories])?;
    ReconModel::init(cfg, Some(&lib))
}

/// Rebuilds a trained model from its checkpoint.
pub fn load_model(cfg: &RunConfig, checkpoint: &Path) -> Result<ReconModel> {
    let mut model = model_skeleton(cfg)?;
    load_model_state(&mut model, &TensorArchive::load(checkpoint)?)?;
    Ok(model)
}

/// Highest-step checkpoint of a run directory.
pub fn latest_checkpoint(run: &Path) -> Result<PathBuf> {
    let dir = run.join("checkpoints");
    let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    names.sort();
    names
        .pop()
        .ok_or_else(|| Error::Data(format!("no checkpoints in {}", dir.display())))
}

/// The config a run was trained with.
pub fn run_config(run: &Path) -> Result<RunConfig> {
    let p = run.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    RunConfig::from_text(&text, crate::pipeline::Profile::Desk)
}

/// Decodes one instance on a `resolution³` lattice and writes its mesh.
pub fn cmd_reconstruct(run: &Path, data: &Path, instance: usize, resolution: usize, out: &Path) -> Result<PathBuf> {
    ensure_dir(out)?;
    let cfg = run_config(run)?;
    let ds = Dataset::load(data)?;
    if instance >= ds.len() {
        return Err(Error::Config(format!(
            "instance {instance} out of range (dataset has {})",
            ds.len()
        )));
    }
    let model = load_model(&cfg, &latest_checkpoint(run)?)?;
    let pred = reconstruct_instance(&model, &ds, instance, resolution)?;
    let path = out.join(format!("instance_{instance:04}.obj"));
    write_obj(&path, &pred.mesh)?;
    Ok(path)
}

/// Scores every instance of a split; writes `eval.csv` and `eval.json`.
pub fn cmd_eval(run: &Path, data: &Path, split: Split, out: &Path) -> Result<(Summary, RunManifest)> {
    let t0 = Instant::now();
    ensure_dir(out)?;
    let cfg = run_config(run)?;
    let ds = Dataset::load(data)?;
    let ckpt = latest_checkpoint(run)?;
    let model = load_model(&cfg, &ckpt)?;
    let summary = evaluate_split(&model, &ds, split, &cfg)?;
    write_text(&out.join("eval.csv"), &summary.to_csv())?;
    write_text(&out.join("eval.json"), &summary.to_json()?)?;
    let inputs = vec![
        digest(&data.join(super::dataset::DATASET_MANIFEST), "dataset.json")?,
        digest(&ckpt, "checkpoint")?,
    ];
    let mut m = RunManifest::new("eval", &cfg, inputs);
    m.param_counts = ablation_param_counts(&cfg)?;
    m.output(out, "eval.csv")?;
    m.output(out, "eval.json")?;
    m.write(out, t0)?;
    Ok((summary, m))
}

/// Runs the gradient-check suite; a failing module is a numerical error.
pub fn cmd_gradcheck(cfg: &RunConfig, out: &Path) -> Result<GradcheckSuite> {
    ensure_dir(out)?;
    let suite = run_gradchecks(cfg.seed)?;
    write_text(&out.join("gradcheck.json"), &serde_json::to_string_pretty(&suite)?)?;
    if !suite.pass {
        let bad: Vec<&str> = suite
            .modules
            .iter()
            .filter(|m| !m.pass)
            .map(|m| m.module.as_str())
            .collect();
        return Err(Error::Numerical(format!(
            "gradient check failed for {}",
            bad.join(", ")
        )));
    }
    Ok(suite)
}

/// KAN budget and the matched MLP head's count, for reporting.
pub fn head_budget(cfg: &RunConfig) -> Result<(usize, usize)> {
    let kan = kan_budget(cfg)?;
    let mut m = model_skeleton(&RunConfig {
        ablate: Ablation::MlpHead,
        ..cfg.clone()
    })?;
    Ok((kan, m.head_param_count()))
}
