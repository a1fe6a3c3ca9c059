//! Batch pipeline: configuration, synthetic data, prior construction,
//! training with checkpoints, reconstruction, evaluation and the ablation
//! study. Each `cmd_*` function backs one CLI subcommand.

mod ablation;
mod archive;
mod commands;
mod config;
mod dataset;
mod gradcheck_suite;
mod model;
mod priors;
mod reconstruct;
mod train;

pub use ablation::{
    median, run_ablation_study, run_ablation_study_with, train_and_evaluate, train_and_evaluate_with, AblationStudy,
    VariantMedian, VariantRun,
};
pub use archive::{TensorArchive, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use commands::{
    ablation_param_counts, cmd_build_priors, cmd_eval, cmd_gen_data, cmd_gradcheck, cmd_reconstruct, cmd_train,
    head_budget, latest_checkpoint, load_model, run_config, FileDigest, ParamCount, RunManifest, CONFIG_FILE,
    LIBRARY_FILE, MANIFEST,
};
pub use config::{Ablation, Profile, RunConfig};
pub use dataset::{
    file_hash, split_counts, Dataset, DatasetManifest, InstanceData, InstanceRecord, Split, DATASET_MANIFEST,
    SPLIT_FRACTIONS,
};
pub use gradcheck_suite::{run_gradchecks, GradcheckSuite, ModuleCheck};
pub use model::{image_input, initial_prototype_encoder, kan_budget, Batch, PriorBranch, ReconModel};
pub use priors::{build_priors, canonical_points, PriorBuild, PrototypeChoice};
pub use reconstruct::{decode_grid, eval_config, evaluate_split, extract, reconstruct_instance, DECODE_CHUNK};
pub use train::{adapts_at, load_model_state, lr_at, training_batch, CheckpointRecord, Trainer};
