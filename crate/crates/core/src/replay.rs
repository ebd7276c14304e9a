//! Experience storage: the recency-focused RL replay buffer and the
//! episode-structured demonstration dataset with selective admission.

use std::io::{self, Read, Write};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::nn::io::{
    invalid, read_f32s, read_f64, read_f64s, read_str, read_u32, read_u64, read_u8, write_f32s, write_f64, write_f64s, write_str,
    write_u32, write_u64,
};

const DEMO_MAGIC: &[u8; 8] = b"QCSACDMO";
const DEMO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot sample from an empty {0}")]
    Empty(&'static str),
    #[error("dataset i/o: {0}")]
    Io(#[from] io::Error),
}

/// One `(s, a, r, s', done)` record. Observations are stored as scaled
/// features in single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Box<[f32]>,
    pub action: [f64; 2],
    pub reward: f64,
    pub next_obs: Box<[f32]>,
    pub done: bool,
}

impl Transition {
    pub fn new(obs: &[f64], action: [f64; 2], reward: f64, next_obs: &[f64], done: bool) -> Self {
        Self {
            obs: obs.iter().map(|v| *v as f32).collect(),
            action,
            reward,
            next_obs: next_obs.iter().map(|v| *v as f32).collect(),
            done,
        }
    }
}

/// Column-stacked minibatch ready for the networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Self {
        let n = items.len();
        let d = items.first().map(|t| t.obs.len()).unwrap_or(0);
        Self {
            obs: Array2::from_shape_fn((n, d), |(i, j)| items[i].obs[j] as f64),
            actions: Array2::from_shape_fn((n, 2), |(i, j)| items[i].action[j]),
            rewards: Array1::from_shape_fn(n, |i| items[i].reward),
            next_obs: Array2::from_shape_fn((n, d), |(i, j)| items[i].next_obs[j] as f64),
            dones: Array1::from_shape_fn(n, |i| if items[i].done { 1.0 } else { 0.0 }),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Row-wise concatenation `self` then `other`.
    pub fn concat(&self, other: &Batch) -> Batch {
        use ndarray::{concatenate, Axis};
        Batch {
            obs: concatenate(Axis(0), &[self.obs.view(), other.obs.view()]).expect("matching widths"),
            actions: concatenate(Axis(0), &[self.actions.view(), other.actions.view()]).expect("matching widths"),
            rewards: concatenate(Axis(0), &[self.rewards.view(), other.rewards.view()]).expect("1-d"),
            next_obs: concatenate(Axis(0), &[self.next_obs.view(), other.next_obs.view()]).expect("matching widths"),
            dones: concatenate(Axis(0), &[self.dones.view(), other.dones.view()]).expect("1-d"),
        }
    }
}

/// Fixed-capacity ring of transitions with oldest-first eviction.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    head: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::new(),
            capacity,
            head: 0,
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total insertions since creation, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
        }
        self.head = (self.head + 1) % self.capacity;
        self.inserted += 1;
    }

    /// Transition `age` slots before the newest (age 0 is the newest).
    pub fn by_age(&self, age: usize) -> Option<&Transition> {
        let n = self.items.len();
        if age >= n {
            return None;
        }
        let newest = (self.head + n - 1) % n;
        Some(&self.items[(newest + n - age) % n])
    }

    /// Recency-focused draw of one age: `floor(|z| * sigma)` with `sigma =
    /// sigma_fraction * len`, clamped to the buffer.
    pub fn draw_fer_age<R: Rng + ?Sized>(&self, sigma_fraction: f64, rng: &mut R) -> usize {
        let n = self.items.len();
        let sigma = sigma_fraction * n as f64;
        let z: f64 = rng.sample(StandardNormal);
        ((z.abs() * sigma).floor() as usize).min(n - 1)
    }

    /// `n` independent draws with replacement from the half-normal age distribution.
    pub fn sample_fer<R: Rng + ?Sized>(
        &self,
        n: usize,
        sigma_fraction: f64,
        rng: &mut R,
    ) -> Result<Vec<&Transition>, ReplayError> {
        if self.is_empty() {
            return Err(ReplayError::Empty("replay buffer"));
        }
        Ok((0..n)
            .map(|_| {
                self.by_age(self.draw_fer_age(sigma_fraction, rng))
                    .expect("age clamped to size")
            })
            .collect())
    }
}

/// Demonstration episodes plus the running mean episode return.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    episodes: Vec<Vec<Transition>>,
    mean_episode_reward: f64,
    /// Cumulative transition counts, `offsets[i]` = transitions before episode `i`.
    offsets: Vec<usize>,
    total: usize,
    pub obs_dim: usize,
    pub config_hash: String,
}

pub fn episode_return(episode: &[Transition]) -> f64 {
    episode.iter().map(|t| t.reward).sum()
}

impl DemoDataset {
    /// Build from episodes, computing the mean episode return from scratch.
    pub fn from_episodes(episodes: Vec<Vec<Transition>>, config_hash: impl Into<String>) -> Result<Self, ReplayError> {
        if episodes.is_empty() || episodes.iter().any(|e| e.is_empty()) {
            return Err(ReplayError::Empty("demonstration dataset"));
        }
        let obs_dim = episodes[0][0].obs.len();
        let mut ds = Self {
            episodes,
            mean_episode_reward: 0.0,
            offsets: Vec::new(),
            total: 0,
            obs_dim,
            config_hash: config_hash.into(),
        };
        ds.reindex();
        ds.mean_episode_reward = ds.recompute_mean_episode_reward()?;
        Ok(ds)
    }

    fn reindex(&mut self) {
        self.offsets.clear();
        let mut acc = 0;
        for e in &self.episodes {
            self.offsets.push(acc);
            acc += e.len();
        }
        self.total = acc;
    }

    pub fn episodes(&self) -> &[Vec<Transition>] {
        &self.episodes
    }

    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    pub fn transition_count(&self) -> usize {
        self.total
    }

    /// Running mean episode return maintained by [`Self::sddu_consider`].
    pub fn mean_episode_reward(&self) -> f64 {
        self.mean_episode_reward
    }

    /// Mean over episodes of the per-episode reward sums, from the stored data.
    pub fn recompute_mean_episode_reward(&self) -> Result<f64, ReplayError> {
        if self.episodes.is_empty() {
            return Err(ReplayError::Empty("demonstration dataset"));
        }
        Ok(self.episodes.iter().map(|e| episode_return(e)).sum::<f64>() / self.episodes.len() as f64)
    }

    /// Admit `episode` if its return strictly beats the running mean, then fold
    /// it into the mean with the post-admission episode count.
    pub fn sddu_consider(&mut self, episode: Vec<Transition>, r_epi: f64) -> bool {
        if episode.is_empty() || !(r_epi > self.mean_episode_reward) {
            return false;
        }
        self.offsets.push(self.total);
        self.total += episode.len();
        self.episodes.push(episode);
        let n = self.episodes.len() as f64;
        self.mean_episode_reward = (self.mean_episode_reward * (n - 1.0) + r_epi) / n;
        true
    }

    pub fn get(&self, flat_index: usize) -> &Transition {
        let ep = self.offsets.partition_point(|&o| o <= flat_index) - 1;
        &self.episodes[ep][flat_index - self.offsets[ep]]
    }

    /// `n` transitions uniformly over all stored transitions, with replacement.
    pub fn sample_demo<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>, ReplayError> {
        if self.total == 0 {
            return Err(ReplayError::Empty("demonstration dataset"));
        }
        Ok((0..n).map(|_| self.get(rng.random_range(0..self.total))).collect())
    }

    /// Binary layout: magic, version, config hash, episode count, obs and action
    /// dims, mean episode return, then per episode a transition count followed
    /// by the transitions.
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(DEMO_MAGIC)?;
        write_u32(w, DEMO_VERSION)?;
        write_str(w, &self.config_hash)?;
        write_u64(w, self.episodes.len() as u64)?;
        write_u32(w, self.obs_dim as u32)?;
        write_u32(w, 2)?;
        write_f64(w, self.mean_episode_reward)?;
        for e in &self.episodes {
            write_u64(w, e.len() as u64)?;
            for t in e {
                write_f32s(w, &t.obs)?;
                write_f64s(w, &t.action)?;
                write_f64(w, t.reward)?;
                write_f32s(w, &t.next_obs)?;
                w.write_all(&[t.done as u8])?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> io::Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DEMO_MAGIC {
            return Err(invalid("not a demonstration dataset"));
        }
        let version = read_u32(r)?;
        if version != DEMO_VERSION {
            return Err(invalid(&format!("unsupported dataset version {version}")));
        }
        let config_hash = read_str(r)?;
        let count = read_u64(r)? as usize;
        let obs_dim = read_u32(r)? as usize;
        let action_dim = read_u32(r)? as usize;
        if action_dim != 2 || obs_dim == 0 || obs_dim > 1 << 16 || count == 0 {
            return Err(invalid("dataset header out of range"));
        }
        let mean_episode_reward = read_f64(r)?;
        let mut episodes = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let len = read_u64(r)? as usize;
            if len == 0 {
                return Err(invalid("empty episode in dataset"));
            }
            let mut ep = Vec::with_capacity(len.min(1 << 16));
            for _ in 0..len {
                let obs = read_f32s(r, obs_dim)?.into_boxed_slice();
                let a = read_f64s(r, 2)?;
                let reward = read_f64(r)?;
                let next_obs = read_f32s(r, obs_dim)?.into_boxed_slice();
                let done = read_u8(r)? != 0;
                ep.push(Transition {
                    obs,
                    action: [a[0], a[1]],
                    reward,
                    next_obs,
                    done,
                });
            }
            episodes.push(ep);
        }
        let mut ds = Self {
            episodes,
            mean_episode_reward,
            offsets: Vec::new(),
            total: 0,
            obs_dim,
            config_hash,
        };
        ds.reindex();
        Ok(ds)
    }

    pub fn save(&self, path: &std::path::Path) -> io::Result<()> {
        let mut w = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn load(path: &std::path::Path) -> io::Result<Self> {
        Self::read_from(&mut io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(tag: f64, reward: f64, done: bool) -> Transition {
        Transition::new(&[tag, 0.5], [0.1, -0.2], reward, &[tag + 1.0, 0.5], done)
    }

    fn episode(rewards: &[f64]) -> Vec<Transition> {
        let n = rewards.len();
        rewards
            .iter()
            .enumerate()
            .map(|(i, r)| tr(i as f64, *r, i + 1 == n))
            .collect()
    }

    #[test]
    fn mean_episode_reward_examples() {
        let ds = DemoDataset::from_episodes(vec![episode(&[4.0, 6.0]), episode(&[20.0])], "h").unwrap();
        assert_eq!(ds.mean_episode_reward(), 15.0);
        let ds = DemoDataset::from_episodes(vec![episode(&[1.0, 2.0, 3.0])], "h").unwrap();
        assert_eq!(ds.mean_episode_reward(), 6.0);
        assert!(DemoDataset::from_episodes(vec![], "h").is_err());
    }

    #[test]
    fn sddu_update_formula_and_strictness() {
        let eps: Vec<_> = (0..200).map(|_| episode(&[10.0])).collect();
        let mut ds = DemoDataset::from_episodes(eps, "h").unwrap();
        assert!(!ds.sddu_consider(episode(&[10.0]), 10.0));
        assert_eq!(ds.episode_count(), 200);
        assert!(ds.sddu_consider(episode(&[12.0]), 12.0));
        assert_eq!(ds.episode_count(), 201);
        assert!((ds.mean_episode_reward() - 10.009_950_248_756_219).abs() < 1e-12);
    }

    #[test]
    fn ring_evicts_oldest_first() {
        let mut buf = ReplayBuffer::new(4);
        for i in 0..7 {
            buf.push(tr(i as f64, 0.0, false));
        }
        assert_eq!(buf.len(), 4);
        let tags: Vec<f32> = (0..4).map(|a| buf.by_age(a).unwrap().obs[0]).collect();
        assert_eq!(tags, vec![6.0, 5.0, 4.0, 3.0]);
        assert!(buf.by_age(4).is_none());
    }

    #[test]
    fn fer_on_single_element_and_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut buf = ReplayBuffer::new(10);
        assert!(buf.sample_fer(3, 1.0 / 3.0, &mut rng).is_err());
        buf.push(tr(7.0, 1.0, true));
        for t in buf.sample_fer(50, 1.0 / 3.0, &mut rng).unwrap() {
            assert_eq!(t.obs[0], 7.0);
        }
    }

    #[test]
    fn uniform_demo_sampling_covers_episodes() {
        let ds = DemoDataset::from_episodes(vec![episode(&[1.0]), episode(&[1.0, 2.0, 3.0])], "h").unwrap();
        assert_eq!(ds.get(0).reward, 1.0);
        assert_eq!(ds.get(1).reward, 1.0);
        assert_eq!(ds.get(3).reward, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let single = DemoDataset::from_episodes(vec![episode(&[5.0])], "h").unwrap();
        assert!(single
            .sample_demo(20, &mut rng)
            .unwrap()
            .iter()
            .all(|t| t.reward == 5.0 && t.next_obs.len() == 2));
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let mut ds = DemoDataset::from_episodes(vec![episode(&[0.1, 0.2]), episode(&[1.0 / 3.0])], "abc").unwrap();
        ds.sddu_consider(episode(&[7.0, 0.7]), 7.7);
        let mut bytes = Vec::new();
        ds.write_to(&mut bytes).unwrap();
        let back = DemoDataset::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.mean_episode_reward().to_bits(), ds.mean_episode_reward().to_bits());
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, bytes);
        assert!(DemoDataset::read_from(&mut &bytes[..10]).is_err());
    }
}
