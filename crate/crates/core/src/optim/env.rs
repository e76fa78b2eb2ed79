//! Environments for the learning solvers.
//!
//! Environments are pure: `step` maps a state and an action to the next
//! state and reward without hidden mutation, which keeps training runs
//! reproducible and lets the hybrid score candidate actions freely.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::objective::{Evaluator, ObjectiveReport};
use crate::phy::Assignment;

/// A one-subband-per-row action space: `num_rows` rows, each picking one of
/// `num_choices` options.
pub trait Environment: Sync {
    fn state_dim(&self) -> usize;
    fn num_rows(&self) -> usize;
    fn num_choices(&self) -> usize;
    fn initial_state(&self) -> Vec<f64>;
    /// `(next_state, reward)`.
    fn step(&self, state: &[f64], action: &Assignment) -> (Vec<f64>, f64);

    fn reward(&self, state: &[f64], action: &Assignment) -> f64 {
        self.step(state, action).1
    }

    /// Full metrics for an action, if the environment has them.
    fn report(&self, _action: &Assignment) -> Option<ObjectiveReport> {
        None
    }
}

const MEMO_LIMIT: usize = 1 << 16;

/// Subband allocation on one channel instance.
///
/// The state is the standardised log masked gain of every (UE, subband)
/// pair followed by the one-hot of the current assignment; the reward is
/// the normalised objective of the action.
#[derive(Debug)]
pub struct AllocationEnv<'a> {
    evaluator: &'a Evaluator,
    features: Vec<f64>,
    initial: Assignment,
    memo: Mutex<HashMap<Assignment, f64>>,
}

impl<'a> AllocationEnv<'a> {
    pub fn new(evaluator: &'a Evaluator) -> Self {
        let ch = evaluator.channels();
        let cm = evaluator.cluster();
        let (k, s) = (ch.num_ues(), ch.num_subbands());
        let mut features = Vec::with_capacity(k * s);
        for ue in 0..k {
            for sb in 0..s {
                let gain: f64 =
                    cm.serves(ue).iter().map(|&l| ch.link(ue, l, sb).iter().map(|z| z.norm_sqr()).sum::<f64>()).sum();
                features.push(gain.max(1e-300).log10());
            }
        }
        let n = features.len().max(1) as f64;
        let mean = features.iter().sum::<f64>() / n;
        let std = (features.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        for f in &mut features {
            *f = if std > 0.0 { (*f - mean) / std } else { 0.0 };
        }
        let round_robin: Vec<usize> = (0..k).map(|ue| ue % s.max(1)).collect();
        let initial = Assignment::from_indices(&round_robin, s.max(1)).expect("round robin is in range");
        Self { evaluator, features, initial, memo: Mutex::new(HashMap::new()) }
    }

    pub fn evaluator(&self) -> &Evaluator {
        self.evaluator
    }

    pub fn initial_assignment(&self) -> &Assignment {
        &self.initial
    }

    fn state_for(&self, a: &Assignment) -> Vec<f64> {
        let mut st = self.features.clone();
        st.extend(a.one_hot());
        st
    }

    fn score(&self, a: &Assignment) -> f64 {
        if let Some(v) = self.memo.lock().expect("memo lock").get(a) {
            return *v;
        }
        let v = self.evaluator.evaluate(a).normalized_value;
        let mut memo = self.memo.lock().expect("memo lock");
        if memo.len() >= MEMO_LIMIT {
            memo.clear();
        }
        memo.insert(a.clone(), v);
        v
    }
}

impl Environment for AllocationEnv<'_> {
    fn state_dim(&self) -> usize {
        2 * self.features.len()
    }

    fn num_rows(&self) -> usize {
        self.evaluator.num_ues()
    }

    fn num_choices(&self) -> usize {
        self.evaluator.num_subbands()
    }

    fn initial_state(&self) -> Vec<f64> {
        self.state_for(&self.initial)
    }

    fn step(&self, _state: &[f64], action: &Assignment) -> (Vec<f64>, f64) {
        (self.state_for(action), self.score(action))
    }

    fn reward(&self, _state: &[f64], action: &Assignment) -> f64 {
        self.score(action)
    }

    fn report(&self, action: &Assignment) -> Option<ObjectiveReport> {
        Some(self.evaluator.evaluate(action))
    }
}
