//! Shared fixtures for the benchmarks.

use std::time::Instant;

use ucfalloc_core::chanmodel::{generate_cfr, generate_deployment, noise_power};
use ucfalloc_core::clustering::select_serving_aps;
use ucfalloc_core::optim::{ao_optimize, AoConfig};
use ucfalloc_core::{DeploymentConfig, Evaluator, FadingParams, ObjectiveWeights};

/// Desk-scale instance: 16 two-antenna APs, top-4 clustering.
pub fn desk_instance(num_ues: usize, num_subbands: usize, seed: u64) -> Evaluator {
    let cfg = DeploymentConfig { num_aps: 16, antennas_per_ap: 2, num_ues, num_subbands, seed, ..Default::default() };
    let fading = FadingParams::default();
    let dep = generate_deployment(&cfg).expect("valid deployment");
    let ch = generate_cfr(&dep, &fading, &cfg).expect("valid channels");
    let cm = select_serving_aps(&ch.large_scale_gains(), 4).expect("valid clustering");
    Evaluator::new(ch, cm, ObjectiveWeights::default(), noise_power(&cfg, &fading), 0.2, 10).expect("valid evaluator")
}

/// Wall-time ratio of an AO run with population `2 * population` over one
/// with `population`, same iteration budget, serial evaluation. Returns the
/// median ratio over `repeats` runs.
pub fn population_doubling_ratio(ev: &Evaluator, population: usize, iterations: usize, repeats: usize) -> f64 {
    let time = |p: usize, seed: u64| {
        let cfg = AoConfig { population: p, iterations, parallel: false, ..Default::default() };
        let t = Instant::now();
        std::hint::black_box(ao_optimize(ev, &cfg, seed));
        t.elapsed().as_secs_f64()
    };
    let mut ratios: Vec<f64> = (0..repeats.max(1) as u64).map(|s| time(2 * population, s) / time(population, s)).collect();
    ratios.sort_by(f64::total_cmp);
    ratios[ratios.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Timing smoke: doubling the population should roughly double AO time.
    /// Printed for inspection; timing noise makes it unsuitable as a gate.
    #[test]
    fn population_doubling_smoke() {
        let ev = desk_instance(8, 4, 1);
        let ratio = population_doubling_ratio(&ev, 10, 15, 3);
        println!("AO wall time ratio for P=20 vs P=10: {ratio:.2} (expected roughly 1.6-4.4)");
        assert!(ratio.is_finite() && ratio > 0.0);
    }
}
