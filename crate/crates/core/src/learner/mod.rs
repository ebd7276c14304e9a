//! Actor-critic update rules: the Q-compared hybrid learner and the BC, SAC and
//! BC-SAC baselines sharing one set of networks and optimizers.

mod checkpoint;
mod trainer;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::ACTION_DIM;
use crate::nn::policy::{log_prob_of, log_prob_of_backward, reparam_backward, sample, standard_normal};
use crate::nn::{polyak_update, Adam, Mlp, NnError, PolicyNet};
use crate::replay::{Batch, ReplayError};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use trainer::{EpisodeSummary, IterationReport, TrainSeeds, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Qcsac,
    Bcsac,
    Sac,
    Bc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Qcsac, Algorithm::Bcsac, Algorithm::Sac, Algorithm::Bc];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Qcsac => "qcsac",
            Algorithm::Bcsac => "bcsac",
            Algorithm::Sac => "sac",
            Algorithm::Bc => "bc",
        }
    }

    /// Whether the algorithm reads the demonstration dataset at all.
    pub fn uses_demos(&self) -> bool {
        !matches!(self, Algorithm::Sac)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected qcsac, bcsac, sac or bc)"))
    }
}

/// Ablation switches. Only the Q-compared learner honors them; the baselines
/// always train their critics on the RL batch and never grow the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub use_qnfd: bool,
    pub use_sddu: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            use_qnfd: true,
            use_sddu: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub gamma: f64,
    pub tau: f64,
    pub target_entropy: f64,
    pub batch_rl: usize,
    pub batch_bc: usize,
    pub gradient_steps_per_env_step: usize,
    pub bcsac_lambda: f64,
    /// Upper clip on the Q-compared weight; `inf` disables it, `0` zeroes it.
    pub c_max: f64,
    pub lr_q: f64,
    pub lr_pi: f64,
    pub lr_alpha: f64,
    pub init_alpha: f64,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    /// Half-normal scale of replay ages as a fraction of the buffer size.
    pub fer_sigma_fraction: f64,
    /// Environment steps collected before the first gradient step.
    pub learning_starts: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            target_entropy: -(ACTION_DIM as f64),
            batch_rl: 256,
            batch_bc: 256,
            gradient_steps_per_env_step: 1,
            bcsac_lambda: 1.0,
            c_max: 100.0,
            lr_q: 3e-4,
            lr_pi: 3e-4,
            lr_alpha: 3e-4,
            init_alpha: 1.0,
            hidden: vec![256, 256],
            buffer_capacity: 1_000_000,
            fer_sigma_fraction: 1.0 / 3.0,
            learning_starts: 1000,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), String> {
        let mut errs = Vec::new();
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            errs.push(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            errs.push(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.batch_rl == 0 || self.batch_bc == 0 {
            errs.push("batch sizes must be at least 1".into());
        }
        if self.gradient_steps_per_env_step == 0 {
            errs.push("gradient_steps_per_env_step must be at least 1".into());
        }
        if !(self.c_max >= 0.0) {
            errs.push(format!("c_max must be non-negative, got {}", self.c_max));
        }
        if !(self.bcsac_lambda >= 0.0 && self.bcsac_lambda.is_finite()) {
            errs.push(format!(
                "bcsac_lambda must be finite and non-negative, got {}",
                self.bcsac_lambda
            ));
        }
        for (name, lr) in [("lr_q", self.lr_q), ("lr_pi", self.lr_pi), ("lr_alpha", self.lr_alpha)] {
            if !(lr > 0.0 && lr.is_finite()) {
                errs.push(format!("{name} must be positive, got {lr}"));
            }
        }
        if !(self.init_alpha > 0.0 && self.init_alpha.is_finite()) {
            errs.push(format!("init_alpha must be positive, got {}", self.init_alpha));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            errs.push("hidden must list at least one positive width".into());
        }
        if self.buffer_capacity == 0 {
            errs.push("buffer_capacity must be positive".into());
        }
        if !(self.fer_sigma_fraction > 0.0 && self.fer_sigma_fraction.is_finite()) {
            errs.push("fer_sigma_fraction must be positive".into());
        }
        if !self.target_entropy.is_finite() {
            errs.push("target_entropy must be finite".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs.join("; "))
        }
    }
}

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{0} needs a demonstration batch")]
    MissingDemos(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("checkpoint: {0}")]
    Io(#[from] std::io::Error),
}

/// Diagnostics of one gradient step. Terms that an algorithm does not
/// compute are left at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub j_q: f64,
    pub j_sac: f64,
    pub j_bc: f64,
    pub mean_c: f64,
    pub frac_c_pos: f64,
    pub alpha: f64,
    pub alpha_loss: f64,
    pub q_batch: usize,
}

/// Value and policy-parameter gradient of an actor objective.
#[derive(Debug, Clone)]
pub struct PolicyLoss {
    pub total: f64,
    pub j_sac: f64,
    pub j_bc: f64,
    /// Per-sample weights on the demonstration batch (Q-compared learner only).
    pub weights: Array1<f64>,
    /// Log-densities of the reparameterized samples on the RL batch.
    pub log_probs: Array1<f64>,
    pub grads: Mlp,
}

/// Standard-normal noise consumed by one actor evaluation.
#[derive(Debug, Clone)]
pub struct PolicyNoise {
    pub rl: Array2<f64>,
    pub bc: Option<Array2<f64>>,
}

/// Policy, twin critics with target copies, temperature and optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub algorithm: Algorithm,
    pub flags: AblationFlags,
    pub hp: HyperParams,
    pub policy: PolicyNet,
    pub q: [Mlp; 2],
    pub q_target: [Mlp; 2],
    pub log_alpha: f64,
    pub opt_policy: Adam,
    pub opt_q: [Adam; 2],
    pub opt_alpha: Adam,
}

pub fn q_input(obs: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[obs, actions]).expect("obs and actions share the batch axis")
}

fn q_values(net: &Mlp, obs: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array1<f64> {
    net.predict(q_input(obs, actions).view()).column(0).to_owned()
}

fn min_q(nets: &[Mlp; 2], obs: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array1<f64> {
    let a = q_values(&nets[0], obs, actions);
    let b = q_values(&nets[1], obs, actions);
    ndarray::Zip::from(&a).and(&b).map_collect(|x, y| x.min(*y))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(
        algorithm: Algorithm,
        flags: AblationFlags,
        hp: HyperParams,
        obs_dim: usize,
        rng: &mut R,
    ) -> Self {
        let policy = PolicyNet::new(obs_dim, &hp.hidden, ACTION_DIM, rng);
        let mut widths = vec![obs_dim + ACTION_DIM];
        widths.extend_from_slice(&hp.hidden);
        widths.push(1);
        let q = [Mlp::new(&widths, rng), Mlp::new(&widths, rng)];
        let q_target = q.clone();
        let opt_policy = Adam::new(policy.net.num_params(), hp.lr_pi);
        let opt_q = [Adam::new(q[0].num_params(), hp.lr_q), Adam::new(q[1].num_params(), hp.lr_q)];
        let opt_alpha = Adam::new(1, hp.lr_alpha);
        Self {
            algorithm,
            flags,
            log_alpha: hp.init_alpha.ln(),
            hp,
            policy,
            q,
            q_target,
            opt_policy,
            opt_q,
            opt_alpha,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.net.input_dim()
    }

    /// Critics see the demonstration batch too.
    pub fn qnfd_active(&self) -> bool {
        self.algorithm == Algorithm::Qcsac && self.flags.use_qnfd
    }

    /// Training episodes may be admitted into the demonstration dataset.
    pub fn sddu_active(&self) -> bool {
        self.algorithm == Algorithm::Qcsac && self.flags.use_sddu
    }

    /// Soft Bellman targets `r + (1 - done) * gamma * (min Q_target(s', a') - alpha * log pi(a'|s'))`
    /// with `a' = tanh(mean + std * eps_next)`.
    pub fn q_targets(&self, batch: &Batch, eps_next: Array2<f64>) -> Array1<f64> {
        let fw = self.policy.forward(batch.next_obs.view());
        let smp = sample(&fw, eps_next);
        let q_next = min_q(&self.q_target, batch.next_obs.view(), smp.action.view());
        let alpha = self.alpha();
        let mut out = Array1::zeros(batch.len());
        for i in 0..batch.len() {
            let soft = q_next[i] - alpha * smp.log_prob[i];
            out[i] = batch.rewards[i] + (1.0 - batch.dones[i]) * self.hp.gamma * soft;
        }
        out
    }

    /// Mean squared error of critic `idx` against fixed targets, with its gradient.
    pub fn q_loss(&self, idx: usize, obs: ArrayView2<f64>, actions: ArrayView2<f64>, targets: &Array1<f64>) -> (f64, Mlp) {
        let net = &self.q[idx];
        let cache = net.forward(q_input(obs, actions).view());
        let n = targets.len() as f64;
        let resid = &cache.output().column(0) - targets;
        let loss = resid.mapv(|r| r * r).sum() / n;
        let d_out = resid.mapv(|r| 2.0 * r / n).insert_axis(Axis(1));
        let mut grads = net.zeros_like();
        net.backward(&cache, d_out.view(), Some(&mut grads));
        (loss, grads)
    }

    /// Per-sample weights `min(c_max, max(Q_target(s_d, a_d) - Q(s_d, a), 0))`,
    /// both sides reduced by the minimum over the critic pair.
    pub fn qc_weights(
        &self,
        demo_obs: ArrayView2<f64>,
        demo_actions: ArrayView2<f64>,
        policy_actions: ArrayView2<f64>,
    ) -> Array1<f64> {
        let q_demo = min_q(&self.q_target, demo_obs, demo_actions);
        let q_pol = min_q(&self.q, demo_obs, policy_actions);
        let c_max = self.hp.c_max;
        ndarray::Zip::from(&q_demo)
            .and(&q_pol)
            .map_collect(|d, p| (d - p).max(0.0).min(c_max))
    }

    /// `mean(alpha * log pi(a|s) - min Q(s, a))` over reparameterized samples,
    /// accumulating its gradient into `grads`. Returns the value and the log-densities.
    fn sac_term(&self, obs: ArrayView2<f64>, eps: &Array2<f64>, grads: &mut Mlp) -> (f64, Array1<f64>) {
        let fw = self.policy.forward(obs);
        let smp = sample(&fw, eps.clone());
        let n = obs.nrows();
        let nf = n as f64;
        let input = q_input(obs, smp.action.view());
        let c0 = self.q[0].forward(input.view());
        let c1 = self.q[1].forward(input.view());
        let alpha = self.alpha();
        let mut loss = 0.0;
        // route -1/n through whichever critic is the minimum per sample
        let mut d0 = Array2::zeros((n, 1));
        let mut d1 = Array2::zeros((n, 1));
        for i in 0..n {
            let (v0, v1) = (c0.output()[[i, 0]], c1.output()[[i, 0]]);
            if v0 <= v1 {
                d0[[i, 0]] = -1.0 / nf;
            } else {
                d1[[i, 0]] = -1.0 / nf;
            }
            loss += alpha * smp.log_prob[i] - v0.min(v1);
        }
        let g0 = self.q[0].backward(&c0, d0.view(), None);
        let g1 = self.q[1].backward(&c1, d1.view(), None);
        let obs_dim = obs.ncols();
        let d_action = &g0.slice(s![.., obs_dim..]) + &g1.slice(s![.., obs_dim..]);
        let d_log_prob = Array1::from_elem(n, alpha / nf);
        let (d_mean, d_ls) = reparam_backward(&fw, &smp, &d_action, &d_log_prob);
        self.policy.backward(&fw, &d_mean, &d_ls, grads);
        (loss / nf, smp.log_prob)
    }

    /// `mean(C * |a - a_d|_1)` with `a` reparameterized at `s_d` and `C` held constant.
    fn qc_bc_term(&self, batch: &Batch, eps: &Array2<f64>, frozen: Option<&Array1<f64>>, grads: &mut Mlp) -> (f64, Array1<f64>) {
        let fw = self.policy.forward(batch.obs.view());
        let smp = sample(&fw, eps.clone());
        let c = match frozen {
            Some(c) => c.clone(),
            None => self.qc_weights(batch.obs.view(), batch.actions.view(), smp.action.view()),
        };
        let (n, k) = smp.action.dim();
        let nf = n as f64;
        let mut loss = 0.0;
        let mut d_action = Array2::zeros((n, k));
        for i in 0..n {
            for j in 0..k {
                let diff = smp.action[[i, j]] - batch.actions[[i, j]];
                loss += c[i] * diff.abs();
                d_action[[i, j]] = c[i] * sign(diff) / nf;
            }
        }
        let (d_mean, d_ls) = reparam_backward(&fw, &smp, &d_action, &Array1::zeros(n));
        self.policy.backward(&fw, &d_mean, &d_ls, grads);
        (loss / nf, c)
    }

    /// `-lambda * mean log pi(a_d | s_d)`.
    fn bcsac_term(&self, batch: &Batch, grads: &mut Mlp) -> f64 {
        let fw = self.policy.forward(batch.obs.view());
        let lp = log_prob_of(&fw, batch.actions.view());
        let n = batch.len() as f64;
        let lambda = self.hp.bcsac_lambda;
        let weight = Array1::from_elem(batch.len(), -lambda / n);
        let (d_mean, d_ls) = log_prob_of_backward(&fw, batch.actions.view(), &weight);
        self.policy.backward(&fw, &d_mean, &d_ls, grads);
        -lambda * lp.sum() / n
    }

    /// Behavior cloning: mean L1 distance between `tanh(mean)` and the demo action.
    pub fn bc_loss(&self, batch: &Batch) -> (f64, Mlp) {
        let fw = self.policy.forward(batch.obs.view());
        let (n, k) = fw.mean.dim();
        let nf = n as f64;
        let mut loss = 0.0;
        let mut d_mean = Array2::zeros((n, k));
        for i in 0..n {
            for j in 0..k {
                let a = fw.mean[[i, j]].tanh();
                let diff = a - batch.actions[[i, j]];
                loss += diff.abs();
                d_mean[[i, j]] = sign(diff) * (1.0 - a * a) / nf;
            }
        }
        let mut grads = self.policy.net.zeros_like();
        self.policy.backward(&fw, &d_mean, &Array2::zeros((n, k)), &mut grads);
        (loss / nf, grads)
    }

    /// Actor objective of the configured algorithm with fixed sampling noise.
    pub fn policy_loss(&self, rl: &Batch, bc: Option<&Batch>, noise: &PolicyNoise) -> Result<PolicyLoss, LearnerError> {
        self.policy_loss_with_weights(rl, bc, noise, None)
    }

    /// As [`Self::policy_loss`], optionally substituting given Q-compared weights
    /// for the ones computed from the critics (the gradient treats them as
    /// constants either way).
    pub fn policy_loss_with_weights(
        &self,
        rl: &Batch,
        bc: Option<&Batch>,
        noise: &PolicyNoise,
        weights: Option<&Array1<f64>>,
    ) -> Result<PolicyLoss, LearnerError> {
        let mut grads = self.policy.net.zeros_like();
        if self.algorithm == Algorithm::Bc {
            let bc = bc.ok_or(LearnerError::MissingDemos("behavior cloning"))?;
            let (loss, grads) = self.bc_loss(bc);
            return Ok(PolicyLoss {
                total: loss,
                j_sac: 0.0,
                j_bc: loss,
                weights: Array1::zeros(0),
                log_probs: Array1::zeros(0),
                grads,
            });
        }
        let (j_sac, log_probs) = self.sac_term(rl.obs.view(), &noise.rl, &mut grads);
        let (j_bc, weights) = match self.algorithm {
            Algorithm::Qcsac => {
                let bc = bc.ok_or(LearnerError::MissingDemos("the Q-compared objective"))?;
                let eps = noise
                    .bc
                    .as_ref()
                    .ok_or(LearnerError::MissingDemos("the Q-compared objective"))?;
                self.qc_bc_term(bc, eps, weights, &mut grads)
            }
            Algorithm::Bcsac => {
                let bc = bc.ok_or(LearnerError::MissingDemos("BC-SAC"))?;
                (self.bcsac_term(bc, &mut grads), Array1::zeros(0))
            }
            _ => (0.0, Array1::zeros(0)),
        };
        Ok(PolicyLoss {
            total: j_sac + j_bc,
            j_sac,
            j_bc,
            weights,
            log_probs,
            grads,
        })
    }

    /// Temperature loss `mean(-alpha * (log pi + target_entropy))` and its
    /// derivative with respect to `log alpha`; log-densities are constants here.
    pub fn alpha_loss(&self, log_probs: &Array1<f64>) -> (f64, f64) {
        let alpha = self.alpha();
        let m = log_probs.iter().map(|lp| lp + self.hp.target_entropy).sum::<f64>() / log_probs.len().max(1) as f64;
        (-alpha * m, -alpha * m)
    }

    /// Noise for one actor evaluation, drawn in a fixed order (RL batch, then demos).
    pub fn draw_policy_noise<R: Rng + ?Sized>(&self, rl_len: usize, bc_len: Option<usize>, rng: &mut R) -> PolicyNoise {
        let rl = standard_normal(rl_len, ACTION_DIM, rng);
        let bc = match (self.algorithm, bc_len) {
            (Algorithm::Qcsac, Some(n)) => Some(standard_normal(n, ACTION_DIM, rng)),
            _ => None,
        };
        PolicyNoise { rl, bc }
    }

    /// One update of critics, actor, temperature and targets, in that order.
    pub fn gradient_step<R: Rng + ?Sized>(
        &mut self,
        rl: &Batch,
        bc: Option<&Batch>,
        rng: &mut R,
    ) -> Result<StepMetrics, LearnerError> {
        if self.algorithm == Algorithm::Bc {
            let bc = bc.ok_or(LearnerError::MissingDemos("behavior cloning"))?;
            let (loss, grads) = self.bc_loss(bc);
            if !loss.is_finite() {
                return Err(LearnerError::NonFinite("behavior cloning loss"));
            }
            self.opt_policy.step(self.policy.net.tensors_mut(), grads.tensors());
            if !self.policy.net.all_finite() {
                return Err(LearnerError::NonFinite("policy parameters"));
            }
            return Ok(StepMetrics {
                j_bc: loss,
                ..StepMetrics::default()
            });
        }

        let union;
        let q_batch = match bc {
            Some(bc) if self.qnfd_active() => {
                union = rl.concat(bc);
                &union
            }
            _ => rl,
        };
        let eps_next = standard_normal(q_batch.len(), ACTION_DIM, rng);
        let targets = self.q_targets(q_batch, eps_next);
        if !targets.iter().all(|v| v.is_finite()) {
            return Err(LearnerError::NonFinite("critic targets"));
        }
        let mut j_q = 0.0;
        for i in 0..2 {
            let (loss, grads) = self.q_loss(i, q_batch.obs.view(), q_batch.actions.view(), &targets);
            j_q += 0.5 * loss;
            self.opt_q[i].step(self.q[i].tensors_mut(), grads.tensors());
        }

        let noise = self.draw_policy_noise(rl.len(), bc.map(Batch::len), rng);
        let pl = self.policy_loss(rl, bc, &noise)?;
        if !pl.total.is_finite() {
            return Err(LearnerError::NonFinite("actor loss"));
        }
        self.opt_policy.step(self.policy.net.tensors_mut(), pl.grads.tensors());

        let (alpha_loss, d_log_alpha) = self.alpha_loss(&pl.log_probs);
        let mut log_alpha = self.log_alpha;
        self.opt_alpha.step_scalar(&mut log_alpha, d_log_alpha);
        self.log_alpha = log_alpha;

        for i in 0..2 {
            polyak_update(&mut self.q_target[i], &self.q[i], self.hp.tau)?;
        }
        if !(self.policy.net.all_finite() && self.q.iter().all(Mlp::all_finite) && self.log_alpha.is_finite()) {
            return Err(LearnerError::NonFinite("learner parameters"));
        }

        let n_c = pl.weights.len().max(1) as f64;
        Ok(StepMetrics {
            j_q,
            j_sac: pl.j_sac,
            j_bc: pl.j_bc,
            mean_c: pl.weights.sum() / n_c,
            frac_c_pos: pl.weights.iter().filter(|c| **c > 0.0).count() as f64 / n_c,
            alpha: self.alpha(),
            alpha_loss,
            q_batch: q_batch.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_batch(n: usize, obs_dim: usize, rng: &mut ChaCha8Rng) -> Batch {
        let items: Vec<Transition> = (0..n)
            .map(|i| {
                let obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let next: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                Transition::new(
                    &obs,
                    [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                    rng.random_range(-1.0..1.0),
                    &next,
                    i % 7 == 0,
                )
            })
            .collect();
        Batch::from_transitions(&items.iter().collect::<Vec<_>>())
    }

    fn small_hp() -> HyperParams {
        HyperParams {
            hidden: vec![16, 16],
            batch_rl: 8,
            batch_bc: 8,
            ..HyperParams::default()
        }
    }

    #[test]
    fn terminal_targets_are_not_bootstrapped() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let learner = Learner::new(Algorithm::Sac, AblationFlags::default(), small_hp(), 5, &mut rng);
        let mut b = toy_batch(4, 5, &mut rng);
        b.dones.fill(1.0);
        b.rewards[0] = -50.0;
        let t = learner.q_targets(&b, standard_normal(4, 2, &mut rng));
        assert_eq!(t[0], -50.0);
        assert_eq!(t, b.rewards);
    }

    #[test]
    fn target_arithmetic_with_constant_critic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut learner = Learner::new(Algorithm::Sac, AblationFlags::default(), small_hp(), 3, &mut rng);
        for net in learner.q_target.iter_mut() {
            let last = net.layers.last_mut().unwrap();
            last.w.fill(0.0);
            last.b.fill(2.0);
        }
        // alpha -> 0 leaves r + gamma * Q_target
        learner.log_alpha = -800.0;
        let mut b = toy_batch(3, 3, &mut rng);
        b.dones.fill(0.0);
        b.rewards.fill(1.0);
        let t = learner.q_targets(&b, standard_normal(3, 2, &mut rng));
        for v in t.iter() {
            assert!((v - 2.98).abs() < 1e-12);
        }
    }

    #[test]
    fn q_loss_of_constant_offset_is_its_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut learner = Learner::new(Algorithm::Sac, AblationFlags::default(), small_hp(), 3, &mut rng);
        let last = learner.q[0].layers.last_mut().unwrap();
        last.w.fill(0.0);
        last.b.fill(1.5);
        let b = toy_batch(6, 3, &mut rng);
        let (loss, _) = learner.q_loss(0, b.obs.view(), b.actions.view(), &Array1::from_elem(6, 1.5));
        assert_eq!(loss, 0.0);
        let (loss, _) = learner.q_loss(0, b.obs.view(), b.actions.view(), &Array1::from_elem(6, 1.0));
        assert!((loss - 0.25).abs() < 1e-15);
    }

    #[test]
    fn qc_weight_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut learner = Learner::new(Algorithm::Qcsac, AblationFlags::default(), small_hp(), 3, &mut rng);
        let set_const = |net: &mut Mlp, v: f64| {
            let last = net.layers.last_mut().unwrap();
            last.w.fill(0.0);
            last.b.fill(v);
        };
        let b = toy_batch(2, 3, &mut rng);
        for (target, online, expected) in [(2.0, 1.5, 0.5), (1.0, 1.5, 0.0), (1.5, 1.5, 0.0), (500.0, 0.0, 100.0)] {
            set_const(&mut learner.q_target[0], target);
            set_const(&mut learner.q_target[1], target + 1.0);
            set_const(&mut learner.q[0], online + 3.0);
            set_const(&mut learner.q[1], online);
            let c = learner.qc_weights(b.obs.view(), b.actions.view(), b.actions.view());
            assert!(c.iter().all(|v| (v - expected).abs() < 1e-12), "{c:?} vs {expected}");
        }
    }

    #[test]
    fn alpha_gradient_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let learner = Learner::new(Algorithm::Sac, AblationFlags::default(), small_hp(), 3, &mut rng);
        let h = learner.hp.target_entropy;
        let (_, g) = learner.alpha_loss(&Array1::from_elem(4, -h));
        assert_eq!(g, 0.0);
        // entropy too low (log pi above -H): descent must raise alpha
        let (_, g) = learner.alpha_loss(&Array1::from_elem(4, -h + 1.0));
        assert!(g < 0.0);
    }

    #[test]
    fn qnfd_widens_the_critic_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let hp = small_hp();
        let rl = toy_batch(8, 4, &mut rng);
        let bc = toy_batch(8, 4, &mut rng);
        let mut full = Learner::new(Algorithm::Qcsac, AblationFlags::default(), hp.clone(), 4, &mut rng);
        assert_eq!(full.gradient_step(&rl, Some(&bc), &mut rng).unwrap().q_batch, 16);
        let flags = AblationFlags {
            use_qnfd: false,
            use_sddu: true,
        };
        let mut ablated = Learner::new(Algorithm::Qcsac, flags, hp, 4, &mut rng);
        assert_eq!(ablated.gradient_step(&rl, Some(&bc), &mut rng).unwrap().q_batch, 8);
    }

    #[test]
    fn demo_actions_at_the_bound_give_finite_bcsac_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let learner = Learner::new(Algorithm::Bcsac, AblationFlags::default(), small_hp(), 3, &mut rng);
        let rl = toy_batch(4, 3, &mut rng);
        let mut bc = toy_batch(4, 3, &mut rng);
        bc.actions.fill(1.0);
        let noise = learner.draw_policy_noise(4, Some(4), &mut rng);
        let pl = learner.policy_loss(&rl, Some(&bc), &noise).unwrap();
        assert!(pl.total.is_finite());
        assert!(pl.grads.all_finite());
    }

    #[test]
    fn missing_demos_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut learner = Learner::new(Algorithm::Qcsac, AblationFlags::default(), small_hp(), 3, &mut rng);
        let rl = toy_batch(4, 3, &mut rng);
        assert!(matches!(
            learner.gradient_step(&rl, None, &mut rng),
            Err(LearnerError::MissingDemos(_))
        ));
    }
}
