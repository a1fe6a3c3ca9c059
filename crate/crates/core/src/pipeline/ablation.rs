use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::Summary;

use super::config::{Ablation, RunConfig};
use super::dataset::{Dataset, Split};
use super::priors::build_priors;
use super::reconstruct::evaluate_split;
use super::train::Trainer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRun {
    pub variant: String,
    pub seed: u64,
    pub steps: usize,
    pub first_loss: f64,
    pub final_loss: f64,
    pub params: usize,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantMedian {
    pub variant: String,
    pub cd: f64,
    pub nc: f64,
    /// Instances whose reconstruction failed, summed over seeds.
    pub failures: usize,
}

/// Every variant trained and evaluated under the same seeds, data order
/// and step budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationStudy {
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub runs: Vec<VariantRun>,
    pub medians: Vec<VariantMedian>,
    /// Comparisons where the full model is not strictly better.
    pub inversions: Vec<String>,
}

impl AblationStudy {
    pub fn holds(&self) -> bool {
        self.inversions.is_empty()
    }

    pub fn median(&self, a: Ablation) -> Option<&VariantMedian> {
        self.medians.iter().find(|m| m.variant == a.name())
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Trains one variant for `steps` steps and scores it on `split`.
pub fn train_and_evaluate(cfg: &RunConfig, ds: &Dataset, split: Split) -> Result<VariantRun> {
    train_and_evaluate_with(cfg, ds, split, |_, _| Ok(()))
}

/// As [`train_and_evaluate`], handing the finished trainer to `inspect`
/// before it is dropped.
pub fn train_and_evaluate_with(
    cfg: &RunConfig,
    ds: &Dataset,
    split: Split,
    inspect: impl FnOnce(&VariantRun, &Trainer) -> Result<()>,
) -> Result<VariantRun> {
    use crate::numcore::Parameterized;
    let lib = if cfg.ablate.uses_prior() {
        Some(build_priors(ds, cfg)?.library)
    } else {
        None
    };
    let mut t = Trainer::new(cfg, ds, lib.as_ref())?;
    t.run(ds, t.total_steps, None)?;
    let summary = evaluate_split(&t.model, ds, split, cfg)?;
    let run = VariantRun {
        variant: cfg.ablate.name().to_string(),
        seed: cfg.seed,
        steps: t.step,
        first_loss: t.losses.first().copied().unwrap_or(f64::NAN),
        final_loss: t.losses.last().copied().unwrap_or(f64::NAN),
        params: t.model.param_count(),
        summary,
    };
    inspect(&run, &t)?;
    Ok(run)
}

/// Runs all five variants for each seed with `steps` optimiser steps and
/// compares median test-split CD and NC against the full model.
pub fn run_ablation_study(base: &RunConfig, ds: &Dataset, seeds: &[u64], steps: usize) -> Result<AblationStudy> {
    run_ablation_study_with(base, ds, seeds, steps, |_, _| Ok(()))
}

/// As [`run_ablation_study`], calling `inspect` on every trained run.
pub fn run_ablation_study_with(
    base: &RunConfig,
    ds: &Dataset,
    seeds: &[u64],
    steps: usize,
    mut inspect: impl FnMut(&VariantRun, &Trainer) -> Result<()>,
) -> Result<AblationStudy> {
    let mut runs = Vec::new();
    for &seed in seeds {
        for a in Ablation::ALL {
            let cfg = RunConfig {
                seed,
                ablate: a,
                steps,
                epochs: 0,
                ..base.clone()
            };
            runs.push(train_and_evaluate_with(&cfg, ds, Split::Test, &mut inspect)?);
        }
    }
    let medians: Vec<VariantMedian> = Ablation::ALL
        .into_iter()
        .map(|a| {
            let mine: Vec<&VariantRun> = runs.iter().filter(|r| r.variant == a.name()).collect();
            // a run with no valid reconstruction ranks last on both metrics
            let ok = |r: &&VariantRun| r.summary.overall.is_valid();
            let mut cd: Vec<f64> = mine
                .iter()
                .map(|r| if ok(r) { r.summary.overall.cd } else { f64::MAX })
                .collect();
            let mut nc: Vec<f64> = mine
                .iter()
                .map(|r| if ok(r) { r.summary.overall.nc } else { 0.0 })
                .collect();
            VariantMedian {
                variant: a.name().to_string(),
                cd: median(&mut cd),
                nc: median(&mut nc),
                failures: mine.iter().map(|r| r.summary.failures()).sum(),
            }
        })
        .collect();
    let full = medians[0].clone();
    let mut inversions = Vec::new();
    for m in &medians[1..] {
        if !(full.cd < m.cd) {
            inversions.push(format!("CD: full {:.4} vs {} {:.4}", full.cd, m.variant, m.cd));
        }
        if !(full.nc > m.nc) {
            inversions.push(format!("NC: full {:.4} vs {} {:.4}", full.nc, m.variant, m.nc));
        }
        if full.failures > m.failures {
            inversions.push(format!(
                "failures: full {} vs {} {}",
                full.failures, m.variant, m.failures
            ));
        }
    }
    Ok(AblationStudy {
        seeds: seeds.to_vec(),
        steps,
        runs,
        medians,
        inversions,
    })
}
