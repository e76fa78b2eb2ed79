//! DDPG over a softmax actor, and the hybrid whose exploratory actions come
//! from an inner Aquila search.
//!
//! Both solvers share one training loop; they differ only in what happens
//! when the epsilon gate fires. With epsilon pinned at zero the two produce
//! identical traces.

use std::io::{Read, Write};
use std::time::Instant;

use rand::Rng;

use super::ao::{aquila, AoConfig};
use super::env::Environment;
use super::trace::{IterationRecord, StepRecord, TrainTrace};
use super::{decode, encode};
use crate::nn::{adam_step, AdamState, Mlp, OutputActivation, ReplayBuffer, Transition};
use crate::objective::ObjectiveReport;
use crate::phy::Assignment;
use crate::{rng, Error, Result};

const TAG_NET: u64 = 0x20;
const TAG_TRAIN: u64 = 0x21;

/// Multiplicative per-step decay with a floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub decay: f64,
    pub floor: f64,
}

impl EpsilonSchedule {
    pub fn constant(value: f64) -> Self {
        Self { start: value, decay: 1.0, floor: value }
    }

    /// Epsilon in force at global step `step` (0-based).
    pub fn at(&self, step: usize) -> f64 {
        (self.start * self.decay.powi(step.min(i32::MAX as usize) as i32)).max(self.floor)
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 1.0, decay: 0.995, floor: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdpgHyper {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub tau: f64,
    /// Half-width of the uniform logit perturbation used when exploring.
    pub noise: f64,
    pub epsilon: EpsilonSchedule,
    pub hidden: Vec<usize>,
    /// Steps per episode.
    pub horizon: usize,
}

impl Default for DdpgHyper {
    fn default() -> Self {
        Self {
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            gamma: 0.9,
            buffer_capacity: 10_000,
            batch_size: 32,
            tau: 0.01,
            noise: 0.3,
            epsilon: EpsilonSchedule::default(),
            hidden: vec![64, 32],
            horizon: 20,
        }
    }
}

impl DdpgHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 || self.horizon == 0 {
            return bad("buffer capacity, batch size and horizon must be positive");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be nonnegative");
        }
        let e = &self.epsilon;
        if !((0.0..=1.0).contains(&e.start) && (0.0..=1.0).contains(&e.floor) && e.decay > 0.0 && e.decay <= 1.0) {
            return bad("epsilon schedule out of range");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty and positive");
        }
        Ok(())
    }
}

/// What the agent does when the epsilon gate fires.
#[derive(Debug, Clone, PartialEq)]
pub enum Exploration {
    /// Sample from the actor's distribution after perturbing its logits.
    Noise,
    /// Run an inner AO seeded with the actor's greedy proposal.
    Aquila(AoConfig),
}

/// Online and target networks plus the hyperparameters that built them.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBundle {
    pub hyper: DdpgHyper,
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
}

impl AgentBundle {
    pub fn new(state_dim: usize, rows: usize, choices: usize, hyper: &DdpgHyper, seed: u64) -> Result<Self> {
        let action_dim = rows * choices;
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend(&hyper.hidden);
        actor_sizes.push(action_dim);
        let mut critic_sizes = vec![state_dim + action_dim];
        critic_sizes.extend(&hyper.hidden);
        critic_sizes.push(1);
        let actor = Mlp::new(&actor_sizes, OutputActivation::Softmax { group: choices }, &mut rng::stream(seed, &[TAG_NET, 0]))?;
        let critic = Mlp::new(&critic_sizes, OutputActivation::Identity, &mut rng::stream(seed, &[TAG_NET, 1]))?;
        Ok(Self { hyper: hyper.clone(), target_actor: actor.clone(), target_critic: critic.clone(), actor, critic })
    }

    /// Critic regression target `r + gamma * Q'(s', mu'(s'))` from the target networks.
    pub fn td_target(&self, reward: f64, next_state: &[f64]) -> Result<f64> {
        let next_action = self.target_actor.forward(next_state)?;
        let next_q = self.target_critic.forward(&[next_state, next_action.as_slice()].concat())?[0];
        Ok(reward + self.hyper.gamma * next_q)
    }

    /// Greedy action: row-wise argmax of the actor output, ties to the lower index.
    pub fn act(&self, state: &[f64]) -> Result<Assignment> {
        let probs = self.actor.forward(state)?;
        Ok(greedy(&probs, self.choices()))
    }

    fn choices(&self) -> usize {
        match self.actor.output_activation() {
            OutputActivation::Softmax { group } => group,
            OutputActivation::Identity => self.actor.output_dim(),
        }
    }

    /// `DDPG` magic, hyperparameter header, then actor and critic blobs.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let h = &self.hyper;
        w.write_all(b"DDPG")?;
        for v in [h.actor_lr, h.critic_lr, h.gamma, h.tau, h.noise, h.epsilon.start, h.epsilon.decay, h.epsilon.floor] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [h.buffer_capacity, h.batch_size, h.horizon, h.hidden.len()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for &v in &h.hidden {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        self.actor.write_to(&mut w)?;
        self.critic.write_to(&mut w)?;
        Ok(())
    }

    /// Restores the networks; targets start as copies of the online nets.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"DDPG" {
            return Err(Error::Format { what: "agent file", detail: "bad magic".into() });
        }
        let mut b = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut b)?;
            Ok(b)
        };
        let mut f = [0.0; 8];
        for v in &mut f {
            *v = f64::from_le_bytes(next(&mut r)?);
        }
        let mut u = [0usize; 4];
        for v in &mut u {
            *v = u64::from_le_bytes(next(&mut r)?) as usize;
        }
        if u[3] > 64 {
            return Err(Error::Format { what: "agent file", detail: "implausible hidden layer count".into() });
        }
        let hidden = (0..u[3]).map(|_| next(&mut r).map(|b| u64::from_le_bytes(b) as usize)).collect::<Result<Vec<_>>>()?;
        let hyper = DdpgHyper {
            actor_lr: f[0],
            critic_lr: f[1],
            gamma: f[2],
            tau: f[3],
            noise: f[4],
            epsilon: EpsilonSchedule { start: f[5], decay: f[6], floor: f[7] },
            buffer_capacity: u[0],
            batch_size: u[1],
            horizon: u[2],
            hidden,
        };
        let actor = Mlp::read_from(&mut r)?;
        let critic = Mlp::read_from(&mut r)?;
        Ok(Self { hyper, target_actor: actor.clone(), target_critic: critic.clone(), actor, critic })
    }
}

fn greedy(probs: &[f64], choices: usize) -> Assignment {
    let idx: Vec<usize> = probs
        .chunks(choices)
        .map(|row| (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b }))
        .collect();
    Assignment::from_indices(&idx, choices).expect("argmax is in range")
}

fn sample_perturbed<R: Rng>(probs: &[f64], choices: usize, noise: f64, r: &mut R) -> Assignment {
    let idx: Vec<usize> = probs
        .chunks(choices)
        .map(|row| {
            let logits: Vec<f64> = row.iter().map(|p| p.max(1e-300).ln() + noise * (2.0 * r.random::<f64>() - 1.0)).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
            let mut u = r.random::<f64>() * weights.iter().sum::<f64>();
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    return i;
                }
                u -= w;
            }
            choices - 1
        })
        .collect();
    Assignment::from_indices(&idx, choices).expect("sampled indices are in range")
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: AgentBundle,
    pub trace: TrainTrace,
    /// Best executed action and its reward.
    pub best: Option<(Assignment, f64)>,
    pub best_report: Option<ObjectiveReport>,
}

struct Learner {
    actor_opt: AdamState,
    critic_opt: AdamState,
}

impl Learner {
    /// One critic and one actor step on a minibatch, then soft target
    /// updates. Returns `(actor_loss, critic_loss)`.
    fn update(&mut self, agent: &mut AgentBundle, batch: &[&Transition]) -> Result<(f64, f64)> {
        let h = agent.hyper.clone();
        let n = batch.len() as f64;

        let mut critic_grad = vec![0.0; agent.critic.params().len()];
        let mut critic_loss = 0.0;
        for t in batch {
            let target = agent.td_target(t.reward, &t.next_state)?;
            let cache = agent.critic.forward_cached(&[t.state.as_slice(), &t.action].concat())?;
            let err = cache.output()[0] - target;
            critic_loss += err * err / n;
            let g = agent.critic.backward(&cache, &[2.0 * err / n])?;
            critic_grad.iter_mut().zip(&g.params).for_each(|(a, b)| *a += b);
        }
        adam_step(agent.critic.params_mut(), &critic_grad, &mut self.critic_opt, h.critic_lr);

        let state_dim = agent.actor.input_dim();
        let mut actor_grad = vec![0.0; agent.actor.params().len()];
        let mut actor_loss = 0.0;
        for t in batch {
            let a_cache = agent.actor.forward_cached(&t.state)?;
            let c_cache = agent.critic.forward_cached(&[t.state.as_slice(), a_cache.output()].concat())?;
            actor_loss -= c_cache.output()[0] / n;
            let dq = agent.critic.backward(&c_cache, &[1.0])?.input;
            let grad_out: Vec<f64> = dq[state_dim..].iter().map(|g| -g / n).collect();
            let g = agent.actor.backward(&a_cache, &grad_out)?;
            actor_grad.iter_mut().zip(&g.params).for_each(|(a, b)| *a += b);
        }
        adam_step(agent.actor.params_mut(), &actor_grad, &mut self.actor_opt, h.actor_lr);

        agent.target_actor.soft_update(&agent.actor, h.tau)?;
        agent.target_critic.soft_update(&agent.critic, h.tau)?;
        Ok((actor_loss, critic_loss))
    }
}

/// Shared training loop. Records one [`IterationRecord`] per episode and one
/// [`StepRecord`] per environment step.
pub fn train<E: Environment>(
    env: &E,
    hyper: &DdpgHyper,
    exploration: &Exploration,
    episodes: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    hyper.validate()?;
    let (rows, choices) = (env.num_rows(), env.num_choices());
    if rows == 0 || choices == 0 {
        return Err(Error::InvalidConfig("environment has an empty action space".into()));
    }
    let mut agent = AgentBundle::new(env.state_dim(), rows, choices, hyper, seed)?;
    let mut learner =
        Learner { actor_opt: AdamState::new(agent.actor.params().len()), critic_opt: AdamState::new(agent.critic.params().len()) };
    let mut buffer = ReplayBuffer::new(hyper.buffer_capacity);
    let mut r = rng::stream(seed, &[TAG_TRAIN]);
    let start = Instant::now();
    let mut trace = TrainTrace::default();
    let mut best: Option<(Assignment, f64)> = None;
    let mut best_report = None;
    let mut global_step = 0usize;

    for episode in 0..episodes {
        let mut state = env.initial_state();
        let (mut ep_reward, mut skipped) = (0.0, 0);
        let (mut a_loss, mut c_loss, mut updates) = (0.0, 0.0, 0usize);
        let mut eps = hyper.epsilon.at(global_step);
        for step in 0..hyper.horizon {
            eps = hyper.epsilon.at(global_step);
            let probs = agent.actor.forward(&state)?;
            let proposal = greedy(&probs, choices);
            let explored = r.random::<f64>() < eps;
            let (action, proposal_reward, ao_generated) = if !explored {
                (proposal.clone(), None, false)
            } else {
                match exploration {
                    Exploration::Noise => (sample_perturbed(&probs, choices, hyper.noise, &mut r), None, false),
                    Exploration::Aquila(cfg) => {
                        let inner_seed = r.random::<u64>();
                        let cfg = AoConfig { parallel: false, ..cfg.clone() };
                        let objective = |x: &[f64]| env.reward(&state, &decode(x, choices));
                        let out = aquila(
                            &objective,
                            &vec![0.0; rows],
                            &vec![choices as f64; rows],
                            &cfg,
                            inner_seed,
                            &[encode(&proposal)],
                            |_, _, _| {},
                        );
                        (decode(&out.best_x, choices), Some(out.initial_values[0]), true)
                    }
                }
            };
            let (next_state, reward) = env.step(&state, &action);
            ep_reward += reward;
            trace.steps.push(StepRecord {
                episode: episode + 1,
                step,
                explored,
                ao_generated,
                differs_from_greedy: action != proposal,
                reward,
                proposal_reward,
            });
            if best.as_ref().is_none_or(|(_, v)| reward > *v) {
                best_report = env.report(&action);
                best = Some((action.clone(), reward));
            }
            buffer.push(Transition { state: std::mem::take(&mut state), action: action.one_hot(), reward, next_state: next_state.clone() });
            match buffer.sample(hyper.batch_size, &mut r) {
                Some(batch) => {
                    let (al, cl) = learner.update(&mut agent, &batch)?;
                    a_loss += al;
                    c_loss += cl;
                    updates += 1;
                }
                None => skipped += 1,
            }
            state = next_state;
            global_step += 1;
        }
        let mut rec = IterationRecord::from_best(episode + 1, best_report.as_ref(), start);
        if best_report.is_none() {
            rec.best_objective = best.as_ref().map_or(f64::NEG_INFINITY, |(_, v)| *v);
        }
        rec.episode_reward = Some(ep_reward);
        rec.actor_loss = (updates > 0).then(|| a_loss / updates as f64);
        rec.critic_loss = (updates > 0).then(|| c_loss / updates as f64);
        rec.epsilon = Some(eps);
        rec.skipped_updates = skipped;
        trace.records.push(rec);
    }
    Ok(TrainOutcome { agent, trace, best, best_report })
}

/// Plain DDPG with perturbed-logit exploration.
pub fn ddpg_train<E: Environment>(env: &E, hyper: &DdpgHyper, episodes: usize, seed: u64) -> Result<TrainOutcome> {
    train(env, hyper, &Exploration::Noise, episodes, seed)
}

/// DDPG whose exploratory actions are produced by an inner AO run.
pub fn hybrid_train<E: Environment>(
    env: &E,
    hyper: &DdpgHyper,
    inner: &AoConfig,
    episodes: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    train(env, hyper, &Exploration::Aquila(inner.clone()), episodes, seed)
}
