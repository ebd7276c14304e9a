//! Training runs and the files they leave behind.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demonstrator::{generate_dataset, generate_uniform_dataset, DemoStats};
use crate::env::{EpisodeHeader, TrajectoryRecord, OBS_DIM};
use crate::learner::{write_checkpoint, EpisodeSummary, Learner, StepMetrics, TrainSeeds, Trainer};
use crate::replay::DemoDataset;

use super::{derive_seed, evaluate, DemoSource, HarnessError, RunConfig, SuccessReport};

pub const CONFIG_TOML: &str = "config.toml";
pub const METRICS_CSV: &str = "metrics.csv";
pub const EPISODES_CSV: &str = "episodes.csv";
pub const EVALS_CSV: &str = "checkpoint_evals.csv";
pub const TRAJECTORY_JSONL: &str = "trajectories.jsonl";
pub const EVAL_JSON: &str = "eval.json";
pub const EVAL_TXT: &str = "eval.txt";

const METRICS_HEADER: &str =
    "gradient_step,env_step,episode,j_q,j_sac,j_bc,mean_c,frac_c_pos,alpha,alpha_loss,q_batch,r_epi,demo_episodes";
const EPISODES_HEADER: &str = "episode,return,length,terminal_cause,admitted,env_steps";

/// Generate the configured demonstration dataset with the run's demonstration seed.
pub fn generate_demos(cfg: &RunConfig) -> Result<(DemoDataset, DemoStats), HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "demo"));
    let hash = cfg.hash();
    match cfg.demo.source {
        DemoSource::Scripted => generate_dataset(cfg.demo.episodes, &cfg.env, &cfg.demo.driver, &hash, &mut rng),
        DemoSource::UniformRandom => generate_uniform_dataset(cfg.demo.episodes, &cfg.env, &hash, &mut rng),
    }
    .map_err(|e| HarnessError::Config(e.to_string()))
}

/// The dataset a run trains on: none for the pure RL baseline, otherwise the
/// configured file or a freshly generated one.
pub fn load_or_generate_demos(cfg: &RunConfig) -> Result<Option<DemoDataset>, HarnessError> {
    if !cfg.algorithm.uses_demos() {
        return Ok(None);
    }
    let ds = match &cfg.demo.path {
        Some(path) => DemoDataset::load(path)
            .map_err(|e| HarnessError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?,
        None => generate_demos(cfg)?.0,
    };
    let dims_ok = ds
        .episodes()
        .iter()
        .flatten()
        .all(|t| t.obs.len() == OBS_DIM && t.next_obs.len() == OBS_DIM);
    if !dims_ok {
        return Err(HarnessError::Config(format!(
            "demonstration observations must have {OBS_DIM} features"
        )));
    }
    Ok(Some(ds))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEval {
    pub episode: usize,
    pub success_rate: f64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub config_hash: String,
    pub episodes: usize,
    pub env_steps: u64,
    pub gradient_steps: u64,
    pub best: Option<CheckpointEval>,
    /// Final evaluation of the last policy.
    pub report: SuccessReport,
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    let f =
        File::create(path).map_err(|e| HarnessError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(BufWriter::new(f))
}

fn save_checkpoint(path: &Path, learner: &Learner, hash: &str) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    write_checkpoint(&mut w, learner, hash)?;
    w.flush()?;
    Ok(())
}

fn metrics_row(
    w: &mut impl Write,
    grad_step: u64,
    env_step: u64,
    episode: usize,
    m: &StepMetrics,
    r_epi: f64,
    demo_episodes: usize,
) -> std::io::Result<()> {
    writeln!(
        w,
        "{grad_step},{env_step},{episode},{},{},{},{},{},{},{},{},{r_epi},{demo_episodes}",
        m.j_q, m.j_sac, m.j_bc, m.mean_c, m.frac_c_pos, m.alpha, m.alpha_loss, m.q_batch
    )
}

pub fn write_report(dir: &Path, report: &SuccessReport) -> Result<(), HarnessError> {
    let mut w = create(&dir.join(EVAL_JSON))?;
    serde_json::to_writer_pretty(&mut w, report).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    fs::write(dir.join(EVAL_TXT), report.to_string())?;
    Ok(())
}

/// Train to the episode budget, writing metrics, episode and trajectory logs,
/// periodic and best checkpoints, and the final evaluation into `run_dir`.
pub fn run_training(
    cfg: &RunConfig,
    run_dir: &Path,
    on_episode: &mut dyn FnMut(&EpisodeSummary),
) -> Result<TrainSummary, HarnessError> {
    cfg.validate().map_err(HarnessError::Config)?;
    let hash = cfg.hash();
    let demo = load_or_generate_demos(cfg)?;

    let ckpt_dir = run_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    fs::write(
        run_dir.join(CONFIG_TOML),
        format!("# config_hash = \"{hash}\"\n{}", cfg.to_toml()),
    )?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "init"));
    let learner = Learner::new(cfg.algorithm, cfg.flags, cfg.hyperparams.clone(), OBS_DIM, &mut init_rng);
    let seeds = TrainSeeds {
        env: derive_seed(cfg.seed, "env"),
        action: derive_seed(cfg.seed, "action"),
        sampling: derive_seed(cfg.seed, "sampling"),
        gradient: derive_seed(cfg.seed, "gradient"),
    };
    let mut trainer = Trainer::new(learner, cfg.env.clone(), demo, seeds)?;

    let mut metrics = create(&run_dir.join(METRICS_CSV))?;
    writeln!(metrics, "# config_hash={hash}\n{METRICS_HEADER}")?;
    let mut episodes = create(&run_dir.join(EPISODES_CSV))?;
    writeln!(episodes, "# config_hash={hash}\n{EPISODES_HEADER}")?;
    let mut evals = create(&run_dir.join(EVALS_CSV))?;
    writeln!(evals, "# config_hash={hash}\nepisode,success_rate,mean_return")?;
    let mut traj = create(&run_dir.join(TRAJECTORY_JSONL))?;

    let log_episode = |i: usize| cfg.log.trajectory_every > 0 && i.is_multiple_of(cfg.log.trajectory_every);
    let write_header = |w: &mut BufWriter<File>, trainer: &Trainer, i: usize| -> Result<(), HarnessError> {
        let header = EpisodeHeader {
            episode: i,
            config_hash: hash.clone(),
            scenario: trainer.env().scenario().expect("trainer keeps the env reset").clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&header).map_err(std::io::Error::from)?)?;
        Ok(())
    };
    if log_episode(0) {
        write_header(&mut traj, &trainer, 0)?;
    }

    let ckpt_eval_seed = derive_seed(cfg.seed, "checkpoint-eval");
    let mut best: Option<CheckpointEval> = None;
    while trainer.episodes_done() < cfg.episodes {
        let episode = trainer.episodes_done();
        let report = trainer.train_iteration()?;
        if log_episode(episode) {
            writeln!(
                traj,
                "{}",
                serde_json::to_string(&report.record).map_err(std::io::Error::from)?
            )?;
        }
        let first_step = trainer.gradient_steps() - report.steps.len() as u64;
        for (k, m) in report.steps.iter().enumerate() {
            let g = first_step + k as u64 + 1;
            if g.is_multiple_of(cfg.log.metrics_every as u64) {
                metrics_row(
                    &mut metrics,
                    g,
                    trainer.env_steps(),
                    episode,
                    m,
                    report.mean_episode_reward,
                    report.demo_episodes,
                )?;
            }
        }
        let Some(done) = report.finished else { continue };
        writeln!(
            episodes,
            "{},{},{},{},{},{}",
            done.episode,
            done.episode_return,
            done.length,
            done.cause.as_str(),
            done.admitted,
            trainer.env_steps()
        )?;
        on_episode(&done);
        let finished = trainer.episodes_done();
        if finished < cfg.episodes && log_episode(finished) {
            write_header(&mut traj, &trainer, finished)?;
        }
        if finished % cfg.log.checkpoint_every == 0 {
            save_checkpoint(&ckpt_dir.join(format!("episode_{finished:06}.ckpt")), &trainer.learner, &hash)?;
            if cfg.log.checkpoint_eval_episodes > 0 {
                let r = evaluate(
                    &trainer.learner.policy,
                    &cfg.env,
                    cfg.log.checkpoint_eval_episodes,
                    ckpt_eval_seed,
                    &hash,
                );
                let cand = CheckpointEval {
                    episode: finished,
                    success_rate: r.success_rate,
                    mean_return: r.mean_return,
                };
                writeln!(evals, "{},{},{}", cand.episode, cand.success_rate, cand.mean_return)?;
                let better = best.is_none_or(|b| (cand.success_rate, cand.mean_return) > (b.success_rate, b.mean_return));
                if better {
                    save_checkpoint(&ckpt_dir.join("best.ckpt"), &trainer.learner, &hash)?;
                    best = Some(cand);
                }
            }
        }
    }
    for w in [&mut metrics, &mut episodes, &mut evals, &mut traj] {
        w.flush()?;
    }
    save_checkpoint(&ckpt_dir.join("final.ckpt"), &trainer.learner, &hash)?;

    let report = evaluate(
        &trainer.learner.policy,
        &cfg.env,
        cfg.eval_episodes,
        derive_seed(cfg.seed, "eval"),
        &hash,
    );
    write_report(run_dir, &report)?;
    Ok(TrainSummary {
        run_dir: run_dir.to_path_buf(),
        config_hash: hash,
        episodes: trainer.episodes_done(),
        env_steps: trainer.env_steps(),
        gradient_steps: trainer.gradient_steps(),
        best,
        report,
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TrajectoryLine {
    Header(EpisodeHeader),
    Record(Box<TrajectoryRecord>),
}

/// Flatten a trajectory log into one CSV row per step, tagged with the
/// episode index. Returns the number of rows written.
pub fn export_trajectory_table(input: &Path, output: &Path) -> Result<usize, HarnessError> {
    let reader = BufReader::new(
        File::open(input).map_err(|e| HarnessError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", input.display()))))?,
    );
    let mut rows = Vec::new();
    let mut hash = None;
    let mut episode = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TrajectoryLine = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Config(format!("{} line {}: not a trajectory record ({e})", input.display(), i + 1)))?;
        match parsed {
            TrajectoryLine::Header(h) => {
                hash.get_or_insert(h.config_hash);
                episode = Some(h.episode);
            }
            TrajectoryLine::Record(r) => {
                let ep = episode.ok_or_else(|| {
                    HarnessError::Config(format!(
                        "{} line {}: record before any episode header",
                        input.display(),
                        i + 1
                    ))
                })?;
                let c = r.reward_components;
                rows.push(format!(
                    "{ep},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.t,
                    r.x,
                    r.y,
                    r.yaw,
                    r.v_long,
                    r.v_lat,
                    r.beta_deg,
                    r.delta_deg,
                    r.pedal,
                    r.steer_rate_cmd,
                    r.reward,
                    c.safe,
                    c.prog,
                    c.aux,
                    c.term,
                    r.terminal_cause.map_or("", |c| c.as_str())
                ));
            }
        }
    }
    let mut w = create(output)?;
    writeln!(w, "# config_hash={}", hash.unwrap_or_default())?;
    writeln!(
        w,
        "episode,t,x,y,yaw,v_long,v_lat,beta_deg,delta_deg,pedal,steer_rate_cmd,reward,r_safe,r_prog,r_aux,r_term,terminal_cause"
    )?;
    for row in &rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(rows.len())
}
