#![allow(dead_code)]

use ucfalloc_core::chanmodel::{generate_cfr, generate_deployment, noise_power};
use ucfalloc_core::clustering::select_serving_aps;
use ucfalloc_core::{DeploymentConfig, Evaluator, FadingParams, ObjectiveWeights};

/// A 16-AP, two-antenna instance with four serving APs per UE.
pub fn small_instance(k: usize, s: usize, seed: u64) -> Evaluator {
    let cfg = DeploymentConfig { num_aps: 16, antennas_per_ap: 2, num_ues: k, num_subbands: s, seed, ..Default::default() };
    let fading = FadingParams::default();
    let dep = generate_deployment(&cfg).unwrap();
    let ch = generate_cfr(&dep, &fading, &cfg).unwrap();
    let cm = select_serving_aps(&ch.large_scale_gains(), 4).unwrap();
    Evaluator::new(ch, cm, ObjectiveWeights::default(), noise_power(&cfg, &fading), 0.2, 10).unwrap()
}
