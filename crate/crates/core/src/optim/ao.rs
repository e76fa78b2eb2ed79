//! Aquila Optimizer.
//!
//! Four moves, chosen per individual and iteration: expanded exploration
//! (high soar), narrowed exploration (contour flight with Levy steps),
//! expanded exploitation (low flight) and narrowed exploitation (walk and
//! grab). The first two are used for the first two thirds of the run.
//! Candidates are clipped to the box and accepted greedily.

use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::trace::{IterationRecord, TrainTrace};
use super::{decode, BestSoFar};
use crate::objective::{Evaluator, ObjectiveReport};
use crate::phy::Assignment;
use crate::rng;

const TAG_INIT: u64 = 0x10;
const TAG_AGENT: u64 = 0x11;

#[derive(Debug, Clone, PartialEq)]
pub struct AoConfig {
    pub population: usize,
    pub iterations: usize,
    /// Levy exponent.
    pub beta: f64,
    pub alpha: f64,
    pub delta: f64,
    /// Evaluate the population on the rayon pool.
    pub parallel: bool,
}

impl Default for AoConfig {
    fn default() -> Self {
        Self { population: 20, iterations: 200, beta: 1.5, alpha: 0.1, delta: 0.1, parallel: true }
    }
}

impl AoConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.population < 2 || self.iterations < 1 {
            return Err(crate::Error::InvalidConfig("AO needs population >= 2 and iterations >= 1".into()));
        }
        if !(self.beta > 0.0 && self.beta < 2.0) {
            return Err(crate::Error::InvalidConfig("Levy exponent must lie in (0, 2)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoOutcome {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    /// Best value after each iteration.
    pub history: Vec<f64>,
    /// Objective values of the initial population, seeded individuals first.
    pub initial_values: Vec<f64>,
    pub evaluations: usize,
}

struct Levy {
    beta: f64,
    sigma: f64,
}

impl Levy {
    fn new(beta: f64) -> Self {
        let num = libm::tgamma(1.0 + beta) * (PI * beta / 2.0).sin();
        let den = libm::tgamma((1.0 + beta) / 2.0) * beta * 2f64.powf((beta - 1.0) / 2.0);
        Self { beta, sigma: (num / den).powf(1.0 / beta) }
    }

    fn sample<R: Rng>(&self, r: &mut R, dim: usize) -> Vec<f64> {
        (0..dim)
            .map(|_| {
                let u: f64 = StandardNormal.sample(r);
                let v: f64 = StandardNormal.sample(r);
                0.01 * u * self.sigma / v.abs().powf(1.0 / self.beta)
            })
            .collect()
    }
}

/// Maximises `objective` over the box `[lower, upper]`.
///
/// `seeds` are placed first in the initial population; the rest is drawn
/// uniformly. Every individual owns its random stream, so parallel and
/// serial runs agree. `on_iteration(t, best_x, best_value)` runs after each
/// iteration.
pub fn aquila<F, C>(
    objective: &F,
    lower: &[f64],
    upper: &[f64],
    cfg: &AoConfig,
    seed: u64,
    seeds: &[Vec<f64>],
    mut on_iteration: C,
) -> AoOutcome
where
    F: Fn(&[f64]) -> f64 + Sync,
    C: FnMut(usize, &[f64], f64),
{
    let dim = lower.len();
    let pop_size = cfg.population.max(seeds.len()).max(2);
    let iterations = cfg.iterations.max(1);
    let levy = Levy::new(cfg.beta);
    let clip = |x: &mut [f64]| {
        for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
            *v = if v.is_finite() { v.clamp(*lo, *hi) } else { *lo };
        }
    };

    let mut init_rng = rng::stream(seed, &[TAG_INIT]);
    let mut pop: Vec<Vec<f64>> = seeds.to_vec();
    pop.iter_mut().for_each(|x| clip(x));
    while pop.len() < pop_size {
        pop.push(lower.iter().zip(upper).map(|(lo, hi)| lo + init_rng.random::<f64>() * (hi - lo)).collect());
    }
    let eval_all = |xs: &[Vec<f64>]| -> Vec<f64> {
        if cfg.parallel {
            xs.par_iter().map(|x| objective(x)).collect()
        } else {
            xs.iter().map(|x| objective(x)).collect()
        }
    };
    let mut fitness = eval_all(&pop);
    let initial_values = fitness.clone();
    let mut evaluations = pop.len();
    let mut rngs: Vec<rng::Rng> = (0..pop_size).map(|i| rng::stream(seed, &[TAG_AGENT, i as u64])).collect();

    let argmax = |f: &[f64]| (0..f.len()).fold(0, |b, i| if f[i] > f[b] { i } else { b });
    let mut b = argmax(&fitness);
    let mut best_x = pop[b].clone();
    let mut best_value = fitness[b];
    let mut history = Vec::with_capacity(iterations);

    let t_max = iterations as f64;
    for t in 1..=iterations {
        let tf = t as f64;
        let mean: Vec<f64> = (0..dim).map(|d| pop.iter().map(|x| x[d]).sum::<f64>() / pop_size as f64).collect();
        let snapshot = &pop;
        let best = &best_x;
        let propose = |i: usize, r: &mut rng::Rng| -> Vec<f64> {
            let x = &snapshot[i];
            let mut cand: Vec<f64> = if tf <= 2.0 / 3.0 * t_max {
                if r.random::<f64>() < 0.5 {
                    let rand = r.random::<f64>();
                    (0..dim).map(|d| best[d] * (1.0 - tf / t_max) + (mean[d] - best[d] * rand)).collect()
                } else {
                    let step = levy.sample(r, dim);
                    let other = &snapshot[r.random_range(0..pop_size)];
                    let r1 = r.random_range(1..=20) as f64;
                    let rand = r.random::<f64>();
                    (0..dim)
                        .map(|d| {
                            let d1 = (d + 1) as f64;
                            let radius = r1 + 0.00565 * d1;
                            let theta = -0.005 * d1 + 3.0 * PI / 2.0;
                            let (sx, sy) = (radius * theta.sin(), radius * theta.cos());
                            best[d] * step[d] + other[d] + (sy - sx) * rand
                        })
                        .collect()
                }
            } else if r.random::<f64>() < 0.5 {
                let (r_a, r_b) = (r.random::<f64>(), r.random::<f64>());
                (0..dim)
                    .map(|d| (best[d] - mean[d]) * cfg.alpha - r_a + ((upper[d] - lower[d]) * r_b + lower[d]) * cfg.delta)
                    .collect()
            } else {
                let qf = tf.powf((2.0 * r.random::<f64>() - 1.0) / (1.0 - t_max).powi(2));
                let g1 = 2.0 * r.random::<f64>() - 1.0;
                let g2 = 2.0 * (1.0 - tf / t_max);
                let step = levy.sample(r, dim);
                let (r_a, r_b) = (r.random::<f64>(), r.random::<f64>());
                (0..dim).map(|d| qf * best[d] - g1 * x[d] * r_a - g2 * step[d] + r_b * g1).collect()
            };
            clip(&mut cand);
            cand
        };
        let scored: Vec<(Vec<f64>, f64)> = if cfg.parallel {
            rngs.par_iter_mut()
                .enumerate()
                .map(|(i, r)| {
                    let c = propose(i, r);
                    let f = objective(&c);
                    (c, f)
                })
                .collect()
        } else {
            rngs.iter_mut()
                .enumerate()
                .map(|(i, r)| {
                    let c = propose(i, r);
                    let f = objective(&c);
                    (c, f)
                })
                .collect()
        };
        evaluations += pop_size;
        for (i, (cand, f)) in scored.into_iter().enumerate() {
            if f > fitness[i] {
                pop[i] = cand;
                fitness[i] = f;
            }
        }
        b = argmax(&fitness);
        if fitness[b] > best_value {
            best_value = fitness[b];
            best_x = pop[b].clone();
        }
        history.push(best_value);
        on_iteration(t, &best_x, best_value);
    }
    AoOutcome { best_x, best_value, history, initial_values, evaluations }
}

/// Runs AO over the continuous assignment encoding and records a trace.
pub fn ao_optimize(evaluator: &Evaluator, cfg: &AoConfig, seed: u64) -> (Assignment, ObjectiveReport, TrainTrace) {
    let (k, s) = (evaluator.num_ues(), evaluator.num_subbands());
    let lower = vec![0.0; k];
    let upper = vec![s as f64; k];
    let objective = |x: &[f64]| evaluator.evaluate(&decode(x, s)).normalized_value;
    let start = Instant::now();
    let mut best = BestSoFar::default();
    let mut trace = TrainTrace::default();
    aquila(&objective, &lower, &upper, cfg, seed, &[], |t, x, value| {
        if value > best.value() {
            let a = decode(x, s);
            let report = evaluator.evaluate(&a);
            best.offer(a, report);
        }
        trace.records.push(IterationRecord::from_best(t, best.report(), start));
    });
    let (assignment, report) = best.into_parts().expect("AO ran at least one iteration");
    (assignment, report, trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levy_sigma_for_default_beta() {
        // Mantegna's sigma for beta = 1.5.
        assert!((Levy::new(1.5).sigma - 0.696_574_502_557_182_5).abs() < 1e-9);
    }

    #[test]
    fn seeded_optimum_never_degrades() {
        let f = |x: &[f64]| -(x[0] - 0.3).powi(2) - (x[1] + 0.2).powi(2);
        let cfg = AoConfig { population: 6, iterations: 30, ..Default::default() };
        let seeds = vec![vec![0.3, -0.2]; 6];
        let out = aquila(&f, &[-1.0, -1.0], &[1.0, 1.0], &cfg, 4, &seeds, |_, _, _| {});
        assert_eq!(out.best_value, 0.0);
        assert!(out.history.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parallel_and_serial_agree() {
        let f = |x: &[f64]| -x.iter().map(|v| v * v).sum::<f64>();
        let lo = vec![-1.0; 3];
        let hi = vec![1.0; 3];
        let par = AoConfig { population: 8, iterations: 20, ..Default::default() };
        let ser = AoConfig { parallel: false, ..par.clone() };
        let a = aquila(&f, &lo, &hi, &par, 9, &[], |_, _, _| {});
        let b = aquila(&f, &lo, &hi, &ser, 9, &[], |_, _, _| {});
        assert_eq!(a, b);
    }

    #[test]
    fn history_is_monotone_and_in_bounds() {
        let f = |x: &[f64]| (3.0 * x[0]).sin() + (5.0 * x[1]).cos();
        let cfg = AoConfig { population: 10, iterations: 40, ..Default::default() };
        let mut inside = true;
        let out = aquila(&f, &[0.0, 0.0], &[2.0, 2.0], &cfg, 1, &[], |_, x, _| {
            inside &= x.iter().all(|v| (0.0..=2.0).contains(v));
        });
        assert!(inside);
        assert!(out.history.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(out.evaluations, 10 * 41);
    }

    #[test]
    fn single_iteration_is_well_defined() {
        let f = |x: &[f64]| -x[0].abs();
        let cfg = AoConfig { population: 4, iterations: 1, ..Default::default() };
        let out = aquila(&f, &[-1.0], &[1.0], &cfg, 2, &[], |_, _, _| {});
        assert!(out.best_value.is_finite());
    }
}
