use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qcsac_core::harness::{
    derive_seed, evaluate, export_trajectory_table, generate_demos, run_training, write_report, DemoSource, HarnessError,
    RunConfig,
};
use qcsac_core::learner::read_checkpoint;
use qcsac_core::{Algorithm, OBS_DIM};

#[derive(Parser)]
#[command(
    name = "qcsac",
    version,
    about = "Oversteer recovery benchmark: demonstrations, training and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML). Built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the scripted driver and write a demonstration dataset.
    GenDemos {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of episodes.
        #[arg(long)]
        episodes: Option<usize>,
        /// Dataset file; defaults to `<output root>/demos-seed<seed>.bin`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record uniformly random actions instead of the scripted driver.
        #[arg(long)]
        uniform_random: bool,
    },
    /// Train one learner to the episode budget.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        algo: Option<Algorithm>,
        /// Training budget in episodes.
        #[arg(long)]
        episodes: Option<usize>,
        /// Disable training the critics on demonstration transitions.
        #[arg(long)]
        no_qnfd: bool,
        /// Disable growing the dataset with successful own episodes.
        #[arg(long)]
        no_sddu: bool,
        /// Demonstration dataset to load instead of generating one.
        #[arg(long)]
        demos: Option<PathBuf>,
        /// Generate the dataset from uniformly random actions.
        #[arg(long, conflicts_with = "demos")]
        uniform_random_demos: bool,
        /// Print a progress line every this many episodes.
        #[arg(long, default_value_t = 50)]
        progress_every: usize,
    },
    /// Evaluate a checkpoint with deterministic actions.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        /// Directory for eval.json and eval.txt; defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a trajectory log into a plot-ready CSV table.
    ReplayExport {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print the default configuration.
    PrintConfig,
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn validated(cfg: RunConfig) -> Result<RunConfig, HarnessError> {
    cfg.validate().map_err(HarnessError::Config)?;
    Ok(cfg)
}

fn gen_demos(args: &ConfigArgs, episodes: Option<usize>, out: Option<PathBuf>, uniform_random: bool) -> Result<(), HarnessError> {
    let mut cfg = load_config(args)?;
    if let Some(n) = episodes {
        cfg.demo.episodes = n;
    }
    if uniform_random {
        cfg.demo.source = DemoSource::UniformRandom;
    }
    let cfg = validated(cfg)?;
    let out = out.unwrap_or_else(|| cfg.output_root().join(format!("demos-seed{}.bin", cfg.seed)));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let (ds, stats) = generate_demos(&cfg)?;
    ds.save(&out)?;
    println!("config hash         {}", cfg.hash());
    print!("{stats}");
    println!("wrote {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train(
    args: &ConfigArgs,
    algo: Option<Algorithm>,
    episodes: Option<usize>,
    no_qnfd: bool,
    no_sddu: bool,
    demos: Option<PathBuf>,
    uniform_random_demos: bool,
    progress_every: usize,
) -> Result<(), HarnessError> {
    let mut cfg = load_config(args)?;
    if let Some(a) = algo {
        cfg.algorithm = a;
    }
    if let Some(n) = episodes {
        cfg.episodes = n;
    }
    if no_qnfd {
        cfg.flags.use_qnfd = false;
    }
    if no_sddu {
        cfg.flags.use_sddu = false;
    }
    if demos.is_some() {
        cfg.demo.path = demos;
    }
    if uniform_random_demos {
        cfg.demo.source = DemoSource::UniformRandom;
    }
    let cfg = validated(cfg)?;
    let run_dir = cfg.run_dir();
    println!("run {} (config hash {}) -> {}", cfg.run_name(), cfg.hash(), run_dir.display());

    let mut successes = 0usize;
    let mut window_return = 0.0;
    let mut on_episode = |ep: &qcsac_core::learner::EpisodeSummary| {
        successes += ep.cause.is_success() as usize;
        window_return += ep.episode_return;
        let n = ep.episode + 1;
        if progress_every > 0 && n.is_multiple_of(progress_every) {
            println!(
                "episode {n:>6}  mean return {:>9.3}  successes {successes}/{progress_every}",
                window_return / progress_every as f64
            );
            successes = 0;
            window_return = 0.0;
        }
    };
    let summary = run_training(&cfg, &run_dir, &mut on_episode)?;
    println!(
        "finished {} episodes, {} env steps, {} gradient steps",
        summary.episodes, summary.env_steps, summary.gradient_steps
    );
    if let Some(b) = summary.best {
        println!(
            "best checkpoint at episode {} ({:.1}% success)",
            b.episode,
            100.0 * b.success_rate
        );
    }
    print!("{}", summary.report);
    Ok(())
}

fn eval(args: &ConfigArgs, checkpoint: &Path, episodes: Option<usize>, out: Option<PathBuf>) -> Result<(), HarnessError> {
    let cfg = validated(load_config(args)?)?;
    let file = std::fs::File::open(checkpoint)
        .map_err(|e| HarnessError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", checkpoint.display()))))?;
    let (learner, hash) = read_checkpoint(&mut std::io::BufReader::new(file))?;
    if learner.obs_dim() != OBS_DIM {
        return Err(HarnessError::Config(format!(
            "checkpoint expects {} features, environment gives {OBS_DIM}",
            learner.obs_dim()
        )));
    }
    if !learner.policy.net.all_finite() {
        return Err(HarnessError::Numeric("checkpoint policy holds non-finite parameters".into()));
    }
    if hash != cfg.hash() {
        eprintln!(
            "note: checkpoint was trained under config {hash}, evaluating with config {}",
            cfg.hash()
        );
    }
    let n = episodes.unwrap_or(cfg.eval_episodes);
    let report = evaluate(&learner.policy, &cfg.env, n, derive_seed(cfg.seed, "eval"), &hash);
    let out = out.unwrap_or_else(|| checkpoint.parent().map_or_else(PathBuf::new, Path::to_path_buf));
    std::fs::create_dir_all(&out)?;
    write_report(&out, &report)?;
    print!("{report}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenDemos {
            cfg,
            episodes,
            out,
            uniform_random,
        } => gen_demos(&cfg, episodes, out, uniform_random),
        Command::Train {
            cfg,
            algo,
            episodes,
            no_qnfd,
            no_sddu,
            demos,
            uniform_random_demos,
            progress_every,
        } => train(
            &cfg,
            algo,
            episodes,
            no_qnfd,
            no_sddu,
            demos,
            uniform_random_demos,
            progress_every,
        ),
        Command::Eval {
            cfg,
            checkpoint,
            episodes,
            out,
        } => eval(&cfg, &checkpoint, episodes, out),
        Command::ReplayExport { input, output } => export_trajectory_table(&input, &output).map(|rows| {
            println!("wrote {rows} rows to {}", output.display());
        }),
        Command::PrintConfig => {
            let cfg = RunConfig::default();
            print!("# config_hash = \"{}\"\n{}", cfg.hash(), cfg.to_toml());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
