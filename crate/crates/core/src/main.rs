use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kanrecon::pipeline::{
    cmd_build_priors, cmd_eval, cmd_gen_data, cmd_gradcheck, cmd_reconstruct, cmd_train, Ablation, Profile, RunConfig,
    Split, LIBRARY_FILE,
};
use kanrecon::Result;

#[derive(Parser)]
#[command(
    name = "kanrecon",
    version,
    about = "Single-view SDF reconstruction with category priors and a KAN decoder"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file layered over the profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_profile)]
    profile: Option<Profile>,
    /// full, no-kan, no-prior, no-both or mlp-head.
    #[arg(long, global = true, value_parser = parse_ablation)]
    ablate: Option<Ablation>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic dataset.
    GenData,
    /// Build the prototype library from the train split.
    BuildPriors {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a model; checkpoints and loss log go under --out.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Library file, or a build-priors output directory.
        #[arg(long)]
        library: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Decode one instance on a lattice and write an OBJ mesh.
    Reconstruct {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        instance: usize,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
    },
    /// Score every instance of a split against ground truth.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Finite-difference check of every differentiable module.
    Gradcheck,
}

fn parse_profile(s: &str) -> std::result::Result<Profile, String> {
    s.parse().map_err(|e: kanrecon::Error| e.to_string())
}

fn parse_ablation(s: &str) -> std::result::Result<Ablation, String> {
    s.parse().map_err(|e: kanrecon::Error| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    s.parse().map_err(|e: kanrecon::Error| e.to_string())
}

fn resolve_config(c: &Common) -> Result<RunConfig> {
    let profile = c.profile.unwrap_or(Profile::Desk);
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p, profile)?,
        None => RunConfig::for_profile(profile),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(a) = c.ablate {
        cfg.ablate = a;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn library_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(LIBRARY_FILE)
    } else {
        p.to_path_buf()
    }
}

fn run(cli: Cli) -> Result<()> {
    let out = |default: &str| {
        cli.common
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("out").join(default))
    };
    match &cli.cmd {
        Cmd::GenData => {
            let cfg = resolve_config(&cli.common)?;
            let dir = out("data");
            let m = cmd_gen_data(&cfg, &dir)?;
            println!("dataset written to {} (hash {})", dir.display(), m.outputs[0].sha256);
        }
        Cmd::BuildPriors { data } => {
            let cfg = resolve_config(&cli.common)?;
            let dir = out("priors");
            let m = cmd_build_priors(&cfg, data, &dir)?;
            for p in &m.prototypes {
                println!("category {}: prototype instance {}", p.category, p.instance);
            }
            println!("library written to {}", dir.join(LIBRARY_FILE).display());
        }
        Cmd::Train { data, library, resume } => {
            let cfg = resolve_config(&cli.common)?;
            let dir = out("run");
            let lib = library.as_deref().map(library_path);
            let m = cmd_train(&cfg, data, lib.as_deref(), &dir, resume.as_deref())?;
            if let Some(last) = m.checkpoints.last() {
                println!("step {} mean loss {:.6}", last.step, last.mean_loss);
            }
            println!("run written to {}", dir.display());
        }
        Cmd::Reconstruct {
            run,
            data,
            instance,
            resolution,
        } => {
            let path = cmd_reconstruct(run, data, *instance, *resolution, &out("meshes"))?;
            println!("{}", path.display());
        }
        Cmd::Eval { run, data, split } => {
            let (summary, _) = cmd_eval(run, data, *split, &out("eval"))?;
            print!("{}", summary.to_csv());
        }
        Cmd::Gradcheck => {
            let cfg = resolve_config(&cli.common)?;
            let suite = cmd_gradcheck(&cfg, &out("gradcheck"))?;
            for m in &suite.modules {
                println!("{:18} max_rel_err {:.3e}  pass", m.module, m.max_rel_err);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
