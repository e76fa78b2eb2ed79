//! Subband-allocation solvers: Aquila Optimizer, DDPG and the AO-guided
//! hybrid, plus random search over the DDPG hyperparameters.

pub mod ao;
pub mod ddpg;
pub mod env;
pub mod trace;
pub mod tune;

pub use ao::{ao_optimize, aquila, AoConfig, AoOutcome};
pub use ddpg::{ddpg_train, hybrid_train, train, AgentBundle, DdpgHyper, EpsilonSchedule, Exploration};
pub use env::{AllocationEnv, Environment};
pub use trace::{IterationRecord, StepRecord, TrainTrace};
pub use tune::{random_search, HyperRanges, TrialSummary};

use crate::objective::ObjectiveReport;
use crate::phy::Assignment;

/// Continuous-to-discrete decoding: `x_k` in `[0, S]` maps to subband
/// `min(floor(x_k), S - 1)`.
pub fn decode(x: &[f64], num_subbands: usize) -> Assignment {
    let top = num_subbands.saturating_sub(1);
    let idx: Vec<usize> = x.iter().map(|&v| (v.max(0.0).floor() as usize).min(top)).collect();
    Assignment::from_indices(&idx, num_subbands.max(1)).expect("decoded indices are in range")
}

/// Centre of each assigned subband's cell; unassigned UEs map to 0.
pub fn encode(assignment: &Assignment) -> Vec<f64> {
    assignment.as_slice().iter().map(|s| s.map_or(0.0, |s| s as f64 + 0.5)).collect()
}

/// Best assignment seen so far, compared on the normalised objective.
#[derive(Debug, Clone, Default)]
pub struct BestSoFar {
    inner: Option<(Assignment, ObjectiveReport)>,
}

impl BestSoFar {
    pub fn value(&self) -> f64 {
        self.inner.as_ref().map_or(f64::NEG_INFINITY, |(_, r)| r.normalized_value)
    }

    /// Keeps the candidate if it is strictly better.
    pub fn offer(&mut self, assignment: Assignment, report: ObjectiveReport) -> bool {
        if report.normalized_value > self.value() {
            self.inner = Some((assignment, report));
            true
        } else {
            false
        }
    }

    pub fn assignment(&self) -> Option<&Assignment> {
        self.inner.as_ref().map(|(a, _)| a)
    }

    pub fn report(&self) -> Option<&ObjectiveReport> {
        self.inner.as_ref().map(|(_, r)| r)
    }

    pub fn into_parts(self) -> Option<(Assignment, ObjectiveReport)> {
        self.inner
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_clamps_and_floors() {
        let a = decode(&[0.0, 0.99, 1.0, 3.7, 4.0, -0.2], 4);
        assert_eq!(a.as_slice(), &[Some(0), Some(0), Some(1), Some(3), Some(3), Some(0)]);
    }

    #[test]
    fn encode_round_trips() {
        let a = Assignment::from_indices(&[2, 0, 3, 1], 4).unwrap();
        assert_eq!(decode(&encode(&a), 4), a);
    }
}
