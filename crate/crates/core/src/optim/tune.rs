//! Random search over DDPG hyperparameters.

use rand::Rng;
use rayon::prelude::*;

use super::ddpg::DdpgHyper;
use crate::{rng, Error, Result};

const TAG_TRIAL: u64 = 0x30;

/// Sampling ranges. Learning rates and buffer capacity are drawn
/// log-uniformly, the rest uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperRanges {
    pub lr: (f64, f64),
    pub gamma: (f64, f64),
    pub capacity: (usize, usize),
    pub batch: (usize, usize),
    pub tau: (f64, f64),
    pub noise: (f64, f64),
}

impl Default for HyperRanges {
    fn default() -> Self {
        Self {
            lr: (1e-5, 1e-3),
            gamma: (0.9, 0.99),
            capacity: (10_000, 1_000_000),
            batch: (32, 256),
            tau: (0.001, 0.01),
            noise: (0.1, 0.5),
        }
    }
}

impl HyperRanges {
    pub fn validate(&self) -> Result<()> {
        let ok = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if !(ok(self.lr) && ok(self.gamma) && ok(self.tau) && ok(self.noise))
            || self.lr.0 <= 0.0
            || self.capacity.0 == 0
            || self.capacity.0 > self.capacity.1
            || self.batch.0 == 0
            || self.batch.0 > self.batch.1
        {
            return Err(Error::InvalidConfig("hyperparameter ranges must be ordered and positive".into()));
        }
        Ok(())
    }

    /// Whether `h` lies inside every range.
    pub fn contains(&self, h: &DdpgHyper) -> bool {
        let within = |v: f64, (a, b): (f64, f64)| v >= a && v <= b;
        within(h.actor_lr, self.lr)
            && within(h.critic_lr, self.lr)
            && within(h.gamma, self.gamma)
            && (self.capacity.0..=self.capacity.1).contains(&h.buffer_capacity)
            && (self.batch.0..=self.batch.1).contains(&h.batch_size)
            && within(h.tau, self.tau)
            && within(h.noise, self.noise)
    }

    /// Draws one configuration; fields not covered by the ranges come from `base`.
    pub fn sample<R: Rng>(&self, base: &DdpgHyper, r: &mut R) -> DdpgHyper {
        let log_uniform = |r: &mut R, (a, b): (f64, f64)| (a.ln() + r.random::<f64>() * (b.ln() - a.ln())).exp().clamp(a, b);
        let uniform = |r: &mut R, (a, b): (f64, f64)| a + r.random::<f64>() * (b - a);
        let lr = log_uniform(r, self.lr);
        let capacity = log_uniform(r, (self.capacity.0 as f64, self.capacity.1 as f64)).round() as usize;
        DdpgHyper {
            actor_lr: lr,
            critic_lr: lr,
            gamma: uniform(r, self.gamma),
            buffer_capacity: capacity.clamp(self.capacity.0, self.capacity.1),
            batch_size: r.random_range(self.batch.0..=self.batch.1),
            tau: uniform(r, self.tau),
            noise: uniform(r, self.noise),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    /// 1-based trial number.
    pub trial: usize,
    pub hyper: DdpgHyper,
    pub score: f64,
}

/// Samples `trials` configurations, scores each with `trainer(trial, hyper, seed)`
/// (higher is better) and returns the best, ties to the earliest trial.
/// Trials run in parallel; results do not depend on scheduling.
pub fn random_search<F>(
    trials: usize,
    ranges: &HyperRanges,
    base: &DdpgHyper,
    seed: u64,
    trainer: F,
) -> Result<(TrialSummary, Vec<TrialSummary>)>
where
    F: Fn(usize, &DdpgHyper, u64) -> Result<f64> + Sync,
{
    ranges.validate()?;
    if trials == 0 {
        return Err(Error::InvalidConfig("random search needs at least one trial".into()));
    }
    let configs: Vec<(usize, DdpgHyper, u64)> = (0..trials)
        .map(|i| {
            let mut r = rng::stream(seed, &[TAG_TRIAL, i as u64]);
            let h = ranges.sample(base, &mut r);
            (i + 1, h, r.random::<u64>())
        })
        .collect();
    let summaries = configs
        .into_par_iter()
        .map(|(trial, hyper, trial_seed)| {
            let score = trainer(trial, &hyper, trial_seed)?;
            Ok(TrialSummary { trial, hyper, score: if score.is_nan() { f64::NEG_INFINITY } else { score } })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = summaries.iter().fold(&summaries[0], |b, t| if t.score > b.score { t } else { b }).clone();
    Ok((best, summaries))
}
