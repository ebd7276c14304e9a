//! Tanh-squashed diagonal Gaussian policy with reparameterized sampling.

use ndarray::{s, Array1, Array2, ArrayView2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{ForwardCache, Mlp};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_TAU: f64 = 0.918_938_533_204_672_8;

/// Clip applied to demonstration actions before `atanh`.
pub const ATANH_CLIP: f64 = 1.0 - 1e-6;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 - tanh(u)^2)`, stable for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    /// Trunk plus a linear head emitting `[mean | log_std]`.
    pub net: Mlp,
    pub action_dim: usize,
}

/// Forward pass of the policy over a batch.
#[derive(Debug, Clone)]
pub struct PolicyForward {
    pub cache: ForwardCache,
    pub mean: Array2<f64>,
    /// Clamped log standard deviation.
    pub log_std: Array2<f64>,
    /// True where the clamp is inactive (gradient passes through).
    pub log_std_free: Array2<bool>,
}

/// Reparameterized samples `a = tanh(mean + std * eps)`.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub eps: Array2<f64>,
    pub pre_tanh: Array2<f64>,
    pub action: Array2<f64>,
    pub log_prob: Array1<f64>,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], action_dim: usize, rng: &mut R) -> Self {
        let mut widths = vec![obs_dim];
        widths.extend_from_slice(hidden);
        widths.push(2 * action_dim);
        Self {
            net: Mlp::new(&widths, rng),
            action_dim,
        }
    }

    pub fn forward(&self, obs: ArrayView2<f64>) -> PolicyForward {
        let cache = self.net.forward(obs);
        let out = cache.output();
        let k = self.action_dim;
        let mean = out.slice(s![.., ..k]).to_owned();
        let raw = out.slice(s![.., k..]);
        let log_std = raw.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        let log_std_free = raw.mapv(|v| (LOG_STD_MIN..=LOG_STD_MAX).contains(&v));
        PolicyForward {
            cache,
            mean,
            log_std,
            log_std_free,
        }
    }

    /// Deterministic action `tanh(mean)` for a single observation.
    pub fn act_deterministic(&self, obs: &[f64]) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("contiguous observation");
        let out = self.net.predict(x);
        (0..self.action_dim).map(|j| out[[0, j]].tanh()).collect()
    }

    /// Stochastic action for a single observation; returns `(action, log_prob)`.
    pub fn act_stochastic<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("contiguous observation");
        let fw = self.forward(x);
        let eps = standard_normal(1, self.action_dim, rng);
        let smp = sample(&fw, eps);
        (smp.action.row(0).to_vec(), smp.log_prob[0])
    }

    /// Push `d_mean` / `d_log_std` (w.r.t. the clamped values) through the network.
    pub fn backward(&self, fw: &PolicyForward, d_mean: &Array2<f64>, d_log_std: &Array2<f64>, grads: &mut Mlp) {
        let n = d_mean.nrows();
        let k = self.action_dim;
        let mut d_out = Array2::zeros((n, 2 * k));
        d_out.slice_mut(s![.., ..k]).assign(d_mean);
        let mut d_ls = d_out.slice_mut(s![.., k..]);
        Zip::from(&mut d_ls)
            .and(d_log_std)
            .and(&fw.log_std_free)
            .for_each(|o, &g, &free| *o = if free { g } else { 0.0 });
        self.net.backward(&fw.cache, d_out.view(), Some(grads));
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal))
}

/// Draw `a = tanh(mean + exp(log_std) * eps)` with its log-density, including
/// the tanh change-of-variables term.
pub fn sample(fw: &PolicyForward, eps: Array2<f64>) -> PolicySample {
    let std = fw.log_std.mapv(f64::exp);
    let pre_tanh = &fw.mean + &(&std * &eps);
    let action = pre_tanh.mapv(f64::tanh);
    let n = eps.nrows();
    let mut log_prob = Array1::zeros(n);
    for i in 0..n {
        let mut lp = 0.0;
        for j in 0..eps.ncols() {
            let e = eps[[i, j]];
            lp += -0.5 * e * e - fw.log_std[[i, j]] - HALF_LN_TAU - log_one_minus_tanh_sq(pre_tanh[[i, j]]);
        }
        log_prob[i] = lp;
    }
    PolicySample {
        eps,
        pre_tanh,
        action,
        log_prob,
    }
}

/// Chain rule through the reparameterized sample: given `dL/da` and `dL/dlog_prob`
/// per sample, returns `(dL/dmean, dL/dlog_std)`.
pub fn reparam_backward(
    fw: &PolicyForward,
    smp: &PolicySample,
    d_action: &Array2<f64>,
    d_log_prob: &Array1<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let (n, k) = smp.action.dim();
    let mut d_mean = Array2::zeros((n, k));
    let mut d_log_std = Array2::zeros((n, k));
    for i in 0..n {
        for j in 0..k {
            let a = smp.action[[i, j]];
            // d/du of -ln(1 - tanh(u)^2) is 2 tanh(u)
            let du = d_action[[i, j]] * (1.0 - a * a) + d_log_prob[i] * 2.0 * a;
            d_mean[[i, j]] = du;
            d_log_std[[i, j]] = du * fw.log_std[[i, j]].exp() * smp.eps[[i, j]] - d_log_prob[i];
        }
    }
    (d_mean, d_log_std)
}

/// Log-density of given actions under the squashed Gaussian.
pub fn log_prob_of(fw: &PolicyForward, actions: ArrayView2<f64>) -> Array1<f64> {
    let (n, k) = fw.mean.dim();
    Array1::from_shape_fn(n, |i| {
        (0..k)
            .map(|j| {
                let a = actions[[i, j]].clamp(-ATANH_CLIP, ATANH_CLIP);
                let u = a.atanh();
                let z = (u - fw.mean[[i, j]]) * (-fw.log_std[[i, j]]).exp();
                -0.5 * z * z - fw.log_std[[i, j]] - HALF_LN_TAU - log_one_minus_tanh_sq(u)
            })
            .sum()
    })
}

/// Gradients of [`log_prob_of`] scaled per sample by `weight[i]`: `(d_mean, d_log_std)`.
pub fn log_prob_of_backward(fw: &PolicyForward, actions: ArrayView2<f64>, weight: &Array1<f64>) -> (Array2<f64>, Array2<f64>) {
    let (n, k) = fw.mean.dim();
    let mut d_mean = Array2::zeros((n, k));
    let mut d_log_std = Array2::zeros((n, k));
    for i in 0..n {
        for j in 0..k {
            let u = actions[[i, j]].clamp(-ATANH_CLIP, ATANH_CLIP).atanh();
            let inv_std = (-fw.log_std[[i, j]]).exp();
            let z = (u - fw.mean[[i, j]]) * inv_std;
            d_mean[[i, j]] = weight[i] * z * inv_std;
            d_log_std[[i, j]] = weight[i] * (z * z - 1.0);
        }
    }
    (d_mean, d_log_std)
}
