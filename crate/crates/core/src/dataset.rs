//! Offline transition datasets: generation from scripted policies,
//! multi-task reward relabeling, mixing, batch sampling, state
//! normalization, and a binary on-disk format.
//!
//! Provenance labels (which scripted mode produced each transition) exist
//! for analysis and plotting only. Trainers consume a [`TrainView`], which
//! structurally has no access to them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::{make_env, rollout, Env, ExpertMode};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, Domain};
use crate::wire;

const MAGIC: &[u8; 4] = b"LAPD";
const FORMAT_VERSION: u32 = 1;
/// Floor applied to per-dimension state standard deviations.
pub const STD_FLOOR: f64 = 1e-6;

/// One (state, action, reward, next-state, terminal) tuple. `terminal` is
/// set only on environmental termination, never on horizon truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Per-dimension state normalization statistics. `std` is already floored.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Identity statistics (used when normalization is disabled).
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply(&self, state: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

/// An offline dataset tied to one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    env_name: String,
    state_dim: usize,
    action_dim: usize,
    transitions: Vec<Transition>,
    norm: Option<NormStats>,
    provenance: Vec<u8>,
}

/// What trainers see: transitions and normalization statistics, no
/// provenance labels.
#[derive(Clone, Copy)]
pub struct TrainView<'a> {
    pub env_name: &'a str,
    pub transitions: &'a [Transition],
    pub norm: Option<&'a NormStats>,
}

/// Dense minibatch matrices (batch on rows).
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array2<f64>,
    pub next_states: Array2<f64>,
    /// 1.0 where the transition is terminal, else 0.0.
    pub terminal_mask: Array2<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn mode_tag(mode: ExpertMode) -> u8 {
    match mode {
        ExpertMode::Left => 0,
        ExpertMode::Right => 1,
        ExpertMode::Forward => 2,
        ExpertMode::Backward => 3,
        ExpertMode::Still => 4,
        ExpertMode::Expert => 5,
        ExpertMode::Noisy => 6,
    }
}

/// Mode for a stored provenance tag, for analysis tooling.
pub fn mode_from_tag(tag: u8) -> Option<ExpertMode> {
    Some(match tag {
        0 => ExpertMode::Left,
        1 => ExpertMode::Right,
        2 => ExpertMode::Forward,
        3 => ExpertMode::Backward,
        4 => ExpertMode::Still,
        5 => ExpertMode::Expert,
        6 => ExpertMode::Noisy,
        _ => return None,
    })
}

/// Episode counts per mode by largest remainder, each within ±1 of
/// `fraction * n_episodes`.
fn allocate_episodes(mix: &[(ExpertMode, f64)], n_episodes: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = mix
        .iter()
        .map(|(_, f)| (f * n_episodes as f64).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..mix.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = mix[a].1 * n_episodes as f64;
        let fb = mix[b].1 * n_episodes as f64;
        (fb - fb.floor())
            .partial_cmp(&(fa - fa.floor()))
            .unwrap()
            .then(a.cmp(&b))
    });
    for i in 0..(n_episodes - assigned) {
        counts[order[i % order.len()]] += 1;
    }
    counts
}

/// Generate a dataset by rolling out scripted experts according to a mode
/// mix. Episode `e` draws from a generator derived from `(seed, e)`, so the
/// dataset is a pure function of its arguments.
pub fn generate(
    env: &dyn Env,
    mode_mix: &[(ExpertMode, f64)],
    n_episodes: usize,
    seed: u64,
) -> Result<TransitionDataset> {
    if mode_mix.is_empty() {
        return Err(Error::Config("empty mode mix".into()));
    }
    if n_episodes == 0 {
        return Err(Error::Config("n_episodes must be at least 1".into()));
    }
    let total: f64 = mode_mix.iter().map(|(_, f)| f).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "mode-mix fractions must sum to 1, got {total}"
        )));
    }
    for (mode, frac) in mode_mix {
        if !env.modes().contains(mode) {
            return Err(Error::Config(format!(
                "mode \"{}\" is not defined for {}",
                mode.as_str(),
                env.name()
            )));
        }
        if *frac < 0.0 {
            return Err(Error::Config("mode fractions must be nonnegative".into()));
        }
    }

    let counts = allocate_episodes(mode_mix, n_episodes);
    let mut transitions = Vec::new();
    let mut provenance = Vec::new();
    let mut episode = 0u64;
    for (&(mode, _), &count) in mode_mix.iter().zip(&counts) {
        for _ in 0..count {
            let mut rng = derive_rng(seed, Domain::DataGen, episode, 0);
            let res = rollout(
                env,
                |s, r| env.expert_action(mode, s, r).expect("mode validated"),
                &mut rng,
            );
            for step in res.steps {
                transitions.push(Transition {
                    state: step.state,
                    action: step.action,
                    reward: step.reward,
                    next_state: step.next_state,
                    terminal: step.terminal,
                });
                provenance.push(mode_tag(mode));
            }
            episode += 1;
        }
    }
    Ok(TransitionDataset {
        env_name: env.name(),
        state_dim: env.spec().state_dim,
        action_dim: env.spec().action_dim,
        transitions,
        norm: None,
        provenance,
    })
}

impl TransitionDataset {
    pub fn env_name(&self) -> &str {
        &self.env_name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn norm_stats(&self) -> Option<&NormStats> {
        self.norm.as_ref()
    }

    /// Provenance tags, one per transition. Analysis only; the training
    /// path never sees these.
    pub fn provenance(&self) -> &[u8] {
        &self.provenance
    }

    /// The label-free view handed to trainers.
    pub fn train_view(&self) -> TrainView<'_> {
        TrainView {
            env_name: &self.env_name,
            transitions: &self.transitions,
            norm: self.norm.as_ref(),
        }
    }

    /// Build a dataset directly from parts (used by tests and tooling).
    pub fn from_parts(
        env_name: String,
        state_dim: usize,
        action_dim: usize,
        transitions: Vec<Transition>,
        provenance: Vec<u8>,
    ) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::Contract("dataset must be nonempty".into()));
        }
        if provenance.len() != transitions.len() {
            return Err(Error::Contract(
                "provenance length must match transition count".into(),
            ));
        }
        for t in &transitions {
            if t.state.len() != state_dim
                || t.next_state.len() != state_dim
                || t.action.len() != action_dim
            {
                return Err(Error::Shape("transition dimensions are inconsistent".into()));
            }
        }
        Ok(Self {
            env_name,
            state_dim,
            action_dim,
            transitions,
            norm: None,
            provenance,
        })
    }

    /// Recompute every reward under the named reward function of this
    /// dataset's environment. States, actions, next-states, terminals, and
    /// provenance are untouched.
    pub fn relabel(&self, reward_name: &str) -> Result<TransitionDataset> {
        let env = make_env(&self.env_name)?;
        let mut out = self.clone();
        for t in &mut out.transitions {
            t.reward = env.relabel_reward(reward_name, &t.state, &t.action, &t.next_state)?;
        }
        out.env_name = format!("{}:{}", env.base_name(), reward_name);
        Ok(out)
    }

    /// Concatenate datasets over the same environment dynamics.
    pub fn mix(datasets: &[TransitionDataset]) -> Result<TransitionDataset> {
        let first = datasets
            .first()
            .ok_or_else(|| Error::Config("mix needs at least one dataset".into()))?;
        let base = make_env(&first.env_name)?.base_name();
        for ds in datasets {
            if ds.norm.is_some() {
                return Err(Error::Config(
                    "mix operates on unnormalized datasets".into(),
                ));
            }
            if make_env(&ds.env_name)?.base_name() != base
                || ds.state_dim != first.state_dim
                || ds.action_dim != first.action_dim
            {
                return Err(Error::Config(format!(
                    "cannot mix datasets from {} and {}",
                    first.env_name, ds.env_name
                )));
            }
        }
        let same_name = datasets.iter().all(|d| d.env_name == first.env_name);
        let env_name = if same_name {
            first.env_name.clone()
        } else {
            base.to_string()
        };
        let mut transitions = Vec::new();
        let mut provenance = Vec::new();
        for ds in datasets {
            transitions.extend(ds.transitions.iter().cloned());
            provenance.extend(ds.provenance.iter().copied());
        }
        Ok(TransitionDataset {
            env_name,
            state_dim: first.state_dim,
            action_dim: first.action_dim,
            transitions,
            norm: None,
            provenance,
        })
    }

    /// Uniform-with-replacement index sample.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        (0..batch_size)
            .map(|_| rng.random_range(0..self.transitions.len()))
            .collect()
    }

    /// Uniform-with-replacement batch of transitions.
    pub fn sample_batch(&self, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<&Transition> {
        self.sample_indices(batch_size, rng)
            .into_iter()
            .map(|i| &self.transitions[i])
            .collect()
    }

    /// Center and scale states (and next-states, with the same statistics)
    /// to zero mean and unit variance per dimension, with the std floored
    /// at [`STD_FLOOR`]. Returns the transformed dataset and the statistics.
    pub fn normalize_states(&self) -> (TransitionDataset, NormStats) {
        let n = self.transitions.len() as f64;
        let d = self.state_dim;
        let mut mean = vec![0.0; d];
        for t in &self.transitions {
            for (m, x) in mean.iter_mut().zip(&t.state) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for t in &self.transitions {
            for (v, (x, m)) in var.iter_mut().zip(t.state.iter().zip(&mean)) {
                *v += (x - m) * (x - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        let stats = NormStats { mean, std };
        let mut out = self.clone();
        for t in &mut out.transitions {
            t.state = stats.apply(&t.state);
            t.next_state = stats.apply(&t.next_state);
        }
        out.norm = Some(stats.clone());
        (out, stats)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        wire::write_u32(w, FORMAT_VERSION)?;
        wire::write_str(w, &self.env_name)?;
        wire::write_u64(w, self.transitions.len() as u64)?;
        wire::write_u32(w, self.state_dim as u32)?;
        wire::write_u32(w, self.action_dim as u32)?;
        for t in &self.transitions {
            wire::write_f64_raw(w, &t.state)?;
        }
        for t in &self.transitions {
            wire::write_f64_raw(w, &t.action)?;
        }
        for t in &self.transitions {
            wire::write_f64(w, t.reward)?;
        }
        for t in &self.transitions {
            wire::write_f64_raw(w, &t.next_state)?;
        }
        for t in &self.transitions {
            wire::write_u8(w, t.terminal as u8)?;
        }
        for p in &self.provenance {
            wire::write_u8(w, *p)?;
        }
        match &self.norm {
            None => wire::write_u8(w, 0)?,
            Some(stats) => {
                wire::write_u8(w, 1)?;
                wire::write_f64_raw(w, &stats.mean)?;
                wire::write_f64_raw(w, &stats.std)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TransitionDataset> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<TransitionDataset> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("truncated file".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic bytes {magic:?}; not a dataset file"
            )));
        }
        let version = wire::read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "dataset format version {version} unsupported; this build reads version {FORMAT_VERSION}"
            )));
        }
        let env_name = wire::read_str(r)?;
        let n = wire::read_u64(r)? as usize;
        let state_dim = wire::read_u32(r)? as usize;
        let action_dim = wire::read_u32(r)? as usize;
        let mut states = Vec::with_capacity(n);
        for _ in 0..n {
            states.push(wire::read_f64_raw(r, state_dim)?);
        }
        let mut actions = Vec::with_capacity(n);
        for _ in 0..n {
            actions.push(wire::read_f64_raw(r, action_dim)?);
        }
        let mut rewards = Vec::with_capacity(n);
        for _ in 0..n {
            rewards.push(wire::read_f64(r)?);
        }
        let mut next_states = Vec::with_capacity(n);
        for _ in 0..n {
            next_states.push(wire::read_f64_raw(r, state_dim)?);
        }
        let mut terminals = Vec::with_capacity(n);
        for _ in 0..n {
            terminals.push(wire::read_u8(r)? != 0);
        }
        let mut provenance = Vec::with_capacity(n);
        for _ in 0..n {
            provenance.push(wire::read_u8(r)?);
        }
        let norm = match wire::read_u8(r)? {
            0 => None,
            1 => Some(NormStats {
                mean: wire::read_f64_raw(r, state_dim)?,
                std: wire::read_f64_raw(r, state_dim)?,
            }),
            other => {
                return Err(Error::Format(format!(
                    "bad normalization flag {other}"
                )));
            }
        };
        let transitions = states
            .into_iter()
            .zip(actions)
            .zip(rewards)
            .zip(next_states)
            .zip(terminals)
            .map(|((((state, action), reward), next_state), terminal)| Transition {
                state,
                action,
                reward,
                next_state,
                terminal,
            })
            .collect();
        Ok(TransitionDataset {
            env_name,
            state_dim,
            action_dim,
            transitions,
            norm,
            provenance,
        })
    }
}

impl<'a> TrainView<'a> {
    pub fn state_dim(&self) -> usize {
        self.transitions[0].state.len()
    }

    pub fn action_dim(&self) -> usize {
        self.transitions[0].action.len()
    }

    /// Dense matrices for the given transition indices.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        let b = indices.len();
        let sd = self.state_dim();
        let ad = self.action_dim();
        let mut states = Array2::zeros((b, sd));
        let mut actions = Array2::zeros((b, ad));
        let mut rewards = Array2::zeros((b, 1));
        let mut next_states = Array2::zeros((b, sd));
        let mut terminal_mask = Array2::zeros((b, 1));
        for (row, &i) in indices.iter().enumerate() {
            let t = &self.transitions[i];
            states.row_mut(row).assign(&ndarray::ArrayView1::from(&t.state[..]));
            actions
                .row_mut(row)
                .assign(&ndarray::ArrayView1::from(&t.action[..]));
            next_states
                .row_mut(row)
                .assign(&ndarray::ArrayView1::from(&t.next_state[..]));
            rewards[[row, 0]] = t.reward;
            terminal_mask[[row, 0]] = f64::from(t.terminal);
        }
        Batch {
            states,
            actions,
            rewards,
            next_states,
            terminal_mask,
        }
    }

    /// All states as one matrix (used for normalization checks and tests).
    pub fn state_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.transitions.len(), self.state_dim()));
        for (row, t) in self.transitions.iter().enumerate() {
            m.row_mut(row)
                .assign(&ndarray::ArrayView1::from(&t.state[..]));
        }
        m
    }
}

/// Mean along rows of a state matrix (helper for tests).
pub fn column_means(m: &Array2<f64>) -> Vec<f64> {
    m.mean_axis(Axis(0)).unwrap().to_vec()
}
