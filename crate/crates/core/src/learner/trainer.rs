//! Interaction loop: environment steps feeding the replay buffer and the
//! selective demonstration update, interleaved with gradient steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, OversteerEnv, TerminalCause, TrajectoryRecord};
use crate::replay::{Batch, DemoDataset, ReplayBuffer, Transition};

use super::{Algorithm, Learner, LearnerError, StepMetrics};

/// Independent random streams of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSeeds {
    /// Scenario randomization.
    pub env: u64,
    /// Exploration noise of the behavior policy.
    pub action: u64,
    /// Minibatch sampling from both buffers.
    pub sampling: u64,
    /// Reparameterization noise inside gradient steps.
    pub gradient: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub episode_return: f64,
    pub length: usize,
    pub cause: TerminalCause,
    pub admitted: bool,
}

/// Everything that happened during one iteration.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub record: TrajectoryRecord,
    pub steps: Vec<StepMetrics>,
    pub finished: Option<EpisodeSummary>,
    /// Running mean episode return of the demonstration dataset (0 without one).
    pub mean_episode_reward: f64,
    pub demo_episodes: usize,
}

pub struct Trainer {
    pub learner: Learner,
    env: OversteerEnv,
    replay: ReplayBuffer,
    demo: Option<DemoDataset>,
    episode_buf: Vec<Transition>,
    episode_return: f64,
    obs: Vec<f64>,
    env_steps: u64,
    gradient_steps: u64,
    episodes_done: usize,
    rng_env: ChaCha8Rng,
    rng_action: ChaCha8Rng,
    rng_sample: ChaCha8Rng,
    rng_grad: ChaCha8Rng,
}

impl Trainer {
    pub fn new(learner: Learner, env_cfg: EnvConfig, demo: Option<DemoDataset>, seeds: TrainSeeds) -> Result<Self, LearnerError> {
        if learner.algorithm.uses_demos() && demo.is_none() {
            return Err(LearnerError::MissingDemos(learner.algorithm.as_str()));
        }
        // the pure RL baseline never touches a dataset
        let demo = if learner.algorithm == Algorithm::Sac { None } else { demo };
        let mut env = OversteerEnv::new(env_cfg);
        let mut rng_env = ChaCha8Rng::seed_from_u64(seeds.env);
        let obs = env.reset(&mut rng_env).features(&env.config().obs_scales);
        Ok(Self {
            replay: ReplayBuffer::new(learner.hp.buffer_capacity),
            learner,
            env,
            demo,
            episode_buf: Vec::new(),
            episode_return: 0.0,
            obs,
            env_steps: 0,
            gradient_steps: 0,
            episodes_done: 0,
            rng_env,
            rng_action: ChaCha8Rng::seed_from_u64(seeds.action),
            rng_sample: ChaCha8Rng::seed_from_u64(seeds.sampling),
            rng_grad: ChaCha8Rng::seed_from_u64(seeds.gradient),
        })
    }

    pub fn demo(&self) -> Option<&DemoDataset> {
        self.demo.as_ref()
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn env(&self) -> &OversteerEnv {
        &self.env
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn gradient_steps(&self) -> u64 {
        self.gradient_steps
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    /// One environment step followed by the configured number of gradient steps.
    pub fn train_iteration(&mut self) -> Result<IterationReport, LearnerError> {
        let (action, _) = self.learner.policy.act_stochastic(&self.obs, &mut self.rng_action);
        let action = [action[0], action[1]];
        let t = self.env.time();
        let out = self.env.step(action).expect("the trainer resets after every terminal step");
        let record = TrajectoryRecord::new(t + crate::dynamics::CONTROL_DT, self.env.state(), action, &out);
        let next_obs = out.observation.features(&self.env.config().obs_scales);
        let terminal = out.info.cause.is_some_and(|c| c.is_absorbing());
        let tr = Transition::new(&self.obs, action, out.reward, &next_obs, terminal);
        self.replay.push(tr.clone());
        self.episode_buf.push(tr);
        self.episode_return += out.reward;
        self.env_steps += 1;
        self.obs = next_obs;

        let mut finished = None;
        if out.done {
            let episode = std::mem::take(&mut self.episode_buf);
            let length = episode.len();
            let admitted = match self.demo.as_mut() {
                Some(demo) if self.learner.sddu_active() => demo.sddu_consider(episode, self.episode_return),
                _ => false,
            };
            finished = Some(EpisodeSummary {
                episode: self.episodes_done,
                episode_return: self.episode_return,
                length,
                cause: out.info.cause.unwrap_or(TerminalCause::Timeout),
                admitted,
            });
            self.episodes_done += 1;
            self.episode_return = 0.0;
            self.obs = self.env.reset(&mut self.rng_env).features(&self.env.config().obs_scales);
        }

        let mut steps = Vec::new();
        if self.env_steps >= self.learner.hp.learning_starts as u64 {
            for _ in 0..self.learner.hp.gradient_steps_per_env_step {
                steps.push(self.gradient_step()?);
            }
        }
        Ok(IterationReport {
            record,
            steps,
            finished,
            mean_episode_reward: self.demo.as_ref().map_or(0.0, DemoDataset::mean_episode_reward),
            demo_episodes: self.demo.as_ref().map_or(0, DemoDataset::episode_count),
        })
    }

    fn gradient_step(&mut self) -> Result<StepMetrics, LearnerError> {
        let hp = &self.learner.hp;
        let rl = if self.learner.algorithm == Algorithm::Bc {
            None
        } else {
            let items = self
                .replay
                .sample_fer(hp.batch_rl, hp.fer_sigma_fraction, &mut self.rng_sample)?;
            Some(Batch::from_transitions(&items))
        };
        let bc = match self.demo.as_ref() {
            Some(demo) => Some(Batch::from_transitions(&demo.sample_demo(hp.batch_bc, &mut self.rng_sample)?)),
            None => None,
        };
        let empty;
        let rl_ref = match rl.as_ref() {
            Some(b) => b,
            None => {
                empty = Batch::from_transitions(&[]);
                &empty
            }
        };
        let m = self.learner.gradient_step(rl_ref, bc.as_ref(), &mut self.rng_grad)?;
        self.gradient_steps += 1;
        Ok(m)
    }
}
