//! Per-iteration and per-step solver records.

use std::time::Instant;

use crate::objective::ObjectiveReport;

/// One solver iteration (AO) or episode (DDPG, hybrid).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub best_objective: f64,
    pub total_se: f64,
    pub gini: f64,
    pub lambda_min: f64,
    pub violations: usize,
    /// Sum of rewards collected during the episode; `None` for AO.
    pub episode_reward: Option<f64>,
    pub actor_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub epsilon: Option<f64>,
    /// Steps whose learning update was skipped for lack of replay data.
    pub skipped_updates: usize,
    pub wall_ms: f64,
}

impl IterationRecord {
    pub fn from_best(iteration: usize, best: Option<&ObjectiveReport>, start: Instant) -> Self {
        let (obj, se, gini, lambda, viol) = best.map_or((f64::NEG_INFINITY, 0.0, 0.0, 0.0, 0), |r| {
            (r.normalized_value, r.total_se, r.gini, r.lambda_min, r.violations.count())
        });
        Self {
            iteration,
            best_objective: obj,
            total_se: se,
            gini,
            lambda_min: lambda,
            violations: viol,
            episode_reward: None,
            actor_loss: None,
            critic_loss: None,
            epsilon: None,
            skipped_updates: 0,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        }
    }

    /// Field-wise bitwise equality, ignoring wall-clock time.
    pub fn same_as(&self, other: &Self) -> bool {
        let bits = |x: f64| x.to_bits();
        let opt = |x: Option<f64>| x.map(f64::to_bits);
        self.iteration == other.iteration
            && bits(self.best_objective) == bits(other.best_objective)
            && bits(self.total_se) == bits(other.total_se)
            && bits(self.gini) == bits(other.gini)
            && bits(self.lambda_min) == bits(other.lambda_min)
            && self.violations == other.violations
            && opt(self.episode_reward) == opt(other.episode_reward)
            && opt(self.actor_loss) == opt(other.actor_loss)
            && opt(self.critic_loss) == opt(other.critic_loss)
            && opt(self.epsilon) == opt(other.epsilon)
            && self.skipped_updates == other.skipped_updates
    }
}

/// One environment step of a learning solver.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub episode: usize,
    pub step: usize,
    /// The epsilon gate fired.
    pub explored: bool,
    /// The executed action came from the inner optimiser.
    pub ao_generated: bool,
    /// The executed action differs from the actor's greedy decoding.
    pub differs_from_greedy: bool,
    pub reward: f64,
    /// Reward of the actor's greedy proposal, when it was scored.
    pub proposal_reward: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<IterationRecord>,
    pub steps: Vec<StepRecord>,
}

impl TrainTrace {
    /// Bitwise equality of everything except timing.
    pub fn same_trajectory(&self, other: &Self) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| a.same_as(b))
            && self.steps.len() == other.steps.len()
            && self.steps.iter().zip(&other.steps).all(|(a, b)| {
                a.episode == b.episode
                    && a.step == b.step
                    && a.explored == b.explored
                    && a.ao_generated == b.ao_generated
                    && a.differs_from_greedy == b.differs_from_greedy
                    && a.reward.to_bits() == b.reward.to_bits()
                    && a.proposal_reward.map(f64::to_bits) == b.proposal_reward.map(f64::to_bits)
            })
    }

    pub fn final_best(&self) -> Option<f64> {
        self.records.last().map(|r| r.best_objective)
    }
}
