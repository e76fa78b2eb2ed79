//! Scoring of candidate assignments.
//!
//! Three criteria are combined: total spectral efficiency (normalised to an
//! interference-free reference so it lies in `[0, 1]`), the smallest
//! eigenvalue of the per-subband Gram matrix of unit-normalised masked
//! channels, and the Gini index of per-UE SE. QoS shortfalls are penalised
//! rather than rejected.

use nalgebra::DMatrix;

use crate::chanmodel::ChannelTensor;
use crate::clustering::ClusterMap;
use crate::phy::{equal_power, evaluate_phy, Assignment, PowerNormalization, PrecodeResult};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveWeights {
    pub w_eta: f64,
    pub w_evd: f64,
    pub w_gini: f64,
    /// SE floor per assigned UE, bits/s/Hz.
    pub eta_th: f64,
    /// Total power cap in watts; `None` means `K * P_max / tau_p`.
    pub rho_max: Option<f64>,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self { w_eta: 0.6, w_evd: 0.2, w_gini: 0.2, eta_th: 1.0, rho_max: None }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_eta, self.w_evd, self.w_gini];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidConfig("objective weights must be finite and nonnegative".into()));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidConfig("objective weights must not all be zero".into()));
        }
        if !self.eta_th.is_finite() {
            return Err(Error::InvalidConfig("eta_th must be finite".into()));
        }
        if let Some(r) = self.rho_max {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::InvalidConfig("rho_max must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

pub fn total_se(se: &[f64]) -> f64 {
    se.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gini {
    pub value: f64,
    /// Mean SE was zero (or there were no UEs); the value is defined as 0.
    pub degenerate: bool,
}

/// Gini index `(1 / (2 K^2 mean)) * sum_i sum_{j != i} |x_i - x_j|`.
///
/// Uses the sorted closed form `sum |x_i - x_j| = 2 * sum_i (2i - K + 1) x_(i)`.
pub fn gini(se: &[f64]) -> Gini {
    let k = se.len();
    let mean = se.iter().sum::<f64>() / k.max(1) as f64;
    if k == 0 || mean <= 0.0 {
        return Gini { value: 0.0, degenerate: true };
    }
    let mut sorted = se.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pair_sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - k as f64 + 1.0) * x)
        .sum::<f64>()
        * 2.0;
    let value = pair_sum / (2.0 * (k * k) as f64 * mean);
    Gini { value: value.max(0.0), degenerate: false }
}

/// Hermitian Gram matrix of the unit-normalised rows `h_{i,s} D_i` for the
/// given co-channel UEs.
pub fn gram_matrix(channels: &ChannelTensor, cluster: &ClusterMap, members: &[usize], s: usize) -> DMatrix<C64> {
    let norms: Vec<f64> = members
        .iter()
        .map(|&i| {
            cluster
                .serves(i)
                .iter()
                .map(|&l| channels.link(i, l, s).iter().map(C64::norm_sqr).sum::<f64>())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let m = members.len();
    DMatrix::from_fn(m, m, |a, b| {
        let (i, j) = (members[a], members[b]);
        if norms[a] == 0.0 || norms[b] == 0.0 {
            return C64::new(0.0, 0.0);
        }
        // Masked rows only overlap on APs serving both UEs.
        let acc: C64 = cluster
            .serves(i)
            .iter()
            .filter(|&&l| cluster.is_served_by(j, l))
            .flat_map(|&l| channels.link(i, l, s).iter().zip(channels.link(j, l, s)))
            .map(|(x, y)| x * y.conj())
            .sum();
        acc / (norms[a] * norms[b])
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinEigen {
    pub value: f64,
    /// No occupied subband; the value is defined as 1.
    pub vacuous: bool,
}

/// Smallest Gram eigenvalue over all occupied subbands.
pub fn min_eigenvalue(channels: &ChannelTensor, cluster: &ClusterMap, assignment: &Assignment) -> MinEigen {
    let mut best: Option<f64> = None;
    for (s, members) in assignment.occupancy().iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let lam = if members.len() == 1 {
            let g = gram_matrix(channels, cluster, members, s);
            g[(0, 0)].re
        } else {
            gram_matrix(channels, cluster, members, s)
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        };
        best = Some(best.map_or(lam, |b| b.min(lam)));
    }
    match best {
        Some(value) => MinEigen { value, vacuous: false },
        None => MinEigen { value: 1.0, vacuous: true },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Violations {
    /// Total power above `rho_max`.
    pub c1: bool,
    /// Assigned UEs below the SE floor.
    pub c2: Vec<usize>,
    /// UEs holding more than one subband.
    pub c3: Vec<usize>,
    /// More assignments than UEs.
    pub c4: bool,
}

impl Violations {
    pub fn any(&self) -> bool {
        self.c1 || !self.c2.is_empty() || !self.c3.is_empty() || self.c4
    }

    /// Number of violated constraint instances.
    pub fn count(&self) -> usize {
        self.c1 as usize + self.c2.len() + self.c3.len() + self.c4 as usize
    }
}

/// Checks a raw binary `S x K` assignment matrix for C3/C4.
pub fn validate_assignment_matrix(matrix: &[Vec<u8>]) -> Violations {
    let num_ues = matrix.first().map_or(0, Vec::len);
    let per_ue: Vec<usize> = (0..num_ues)
        .map(|k| matrix.iter().map(|row| (row.get(k).copied().unwrap_or(0) != 0) as usize).sum())
        .collect();
    let total: usize = per_ue.iter().sum();
    Violations {
        c3: (0..num_ues).filter(|&k| per_ue[k] > 1).collect(),
        c4: total > num_ues,
        ..Default::default()
    }
}

pub fn check_constraints(rho: &[f64], se: &[f64], assignment: &Assignment, rho_max: f64, eta_th: f64) -> Violations {
    let power: f64 = rho.iter().sum();
    let mut v = validate_assignment_matrix(&assignment.to_matrix());
    v.c1 = power > rho_max * (1.0 + 1e-12);
    v.c2 = (0..se.len())
        .filter(|&k| assignment.subband_of(k).is_some() && se[k] < eta_th)
        .collect();
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReport {
    pub total_se: f64,
    pub gini: f64,
    pub lambda_min: f64,
    pub normalized_value: f64,
    pub violations: Violations,
    pub feasible: bool,
    pub se: Vec<f64>,
    pub zf_outages: usize,
    pub gini_degenerate: bool,
    pub lambda_vacuous: bool,
}

/// Scores assignments on one fixed instance. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Evaluator {
    channels: ChannelTensor,
    cluster: ClusterMap,
    weights: ObjectiveWeights,
    sigma2: f64,
    rho: Vec<f64>,
    rho_max: f64,
    eta_ref: f64,
    normalization: PowerNormalization,
}

impl Evaluator {
    pub fn new(
        channels: ChannelTensor,
        cluster: ClusterMap,
        weights: ObjectiveWeights,
        sigma2: f64,
        p_max: f64,
        tau_p: usize,
    ) -> Result<Self> {
        weights.validate()?;
        if cluster.num_ues() != channels.num_ues() {
            return Err(Error::ShapeMismatch { expected: channels.num_ues(), got: cluster.num_ues() });
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidConfig("noise power must be positive".into()));
        }
        let k = channels.num_ues();
        let per_ue = equal_power(p_max, tau_p);
        let rho = vec![per_ue; k];
        let rho_max = weights.rho_max.unwrap_or(k as f64 * per_ue);
        let eta_ref = reference_se(&channels, &cluster, &rho, sigma2);
        Ok(Self { channels, cluster, weights, sigma2, rho, rho_max, eta_ref, normalization: PowerNormalization::Unit })
    }

    pub fn with_normalization(mut self, normalization: PowerNormalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn channels(&self) -> &ChannelTensor {
        &self.channels
    }
    pub fn cluster(&self) -> &ClusterMap {
        &self.cluster
    }
    pub fn weights(&self) -> &ObjectiveWeights {
        &self.weights
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }
    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }
    pub fn num_ues(&self) -> usize {
        self.channels.num_ues()
    }
    pub fn num_subbands(&self) -> usize {
        self.channels.num_subbands()
    }

    /// `K * log2(1 + mean_k SNR_k)` with `SNR_k` the best-subband
    /// interference-free matched-filter SNR. Bounds the total SE of any
    /// assignment from above.
    pub fn eta_ref(&self) -> f64 {
        self.eta_ref
    }

    pub fn phy(&self, assignment: &Assignment) -> Result<PrecodeResult> {
        evaluate_phy(&self.channels, &self.cluster, assignment, self.sigma2, &self.rho, self.normalization)
    }

    /// Lower than any attainable score; used for assignments that cannot be
    /// evaluated at all.
    pub fn floor_value(&self) -> f64 {
        -self.weights.w_eta * self.num_ues() as f64 - self.weights.w_gini - 1.0
    }

    pub fn evaluate(&self, assignment: &Assignment) -> ObjectiveReport {
        let phy = match self.phy(assignment) {
            Ok(p) => p,
            Err(_) => return self.unscorable(),
        };
        let total = total_se(&phy.se);
        let g = gini(&phy.se);
        let lam = min_eigenvalue(&self.channels, &self.cluster, assignment);
        let violations = check_constraints(&phy.rho, &phy.se, assignment, self.rho_max, self.weights.eta_th);
        let w = &self.weights;
        let se_term = if self.eta_ref > 0.0 { total / self.eta_ref } else { 0.0 };
        let normalized_value =
            w.w_eta * se_term + w.w_evd * lam.value - w.w_gini * g.value - w.w_eta * violations.c2.len() as f64;
        ObjectiveReport {
            total_se: total,
            gini: g.value,
            lambda_min: lam.value,
            normalized_value,
            feasible: !violations.any(),
            violations,
            zf_outages: phy.infeasible_count(),
            se: phy.se,
            gini_degenerate: g.degenerate,
            lambda_vacuous: lam.vacuous,
        }
    }

    fn unscorable(&self) -> ObjectiveReport {
        let k = self.num_ues();
        ObjectiveReport {
            total_se: 0.0,
            gini: 0.0,
            lambda_min: 0.0,
            normalized_value: self.floor_value(),
            violations: Violations { c1: true, c2: (0..k).collect(), c3: Vec::new(), c4: true },
            feasible: false,
            se: vec![0.0; k],
            zf_outages: k,
            gini_degenerate: true,
            lambda_vacuous: true,
        }
    }
}

fn reference_se(channels: &ChannelTensor, cluster: &ClusterMap, rho: &[f64], sigma2: f64) -> f64 {
    let k = channels.num_ues();
    if k == 0 {
        return 0.0;
    }
    let mean_snr = (0..k)
        .map(|ue| {
            (0..channels.num_subbands())
                .map(|s| {
                    cluster
                        .serves(ue)
                        .iter()
                        .map(|&l| channels.link(ue, l, s).iter().map(C64::norm_sqr).sum::<f64>())
                        .sum::<f64>()
                })
                .fold(0.0, f64::max)
                * rho[ue]
                / sigma2
        })
        .sum::<f64>()
        / k as f64;
    k as f64 * (1.0 + mean_snr).log2()
}

/// One-shot scoring without a cached [`Evaluator`].
pub fn evaluate(
    assignment: &Assignment,
    channels: &ChannelTensor,
    cluster: &ClusterMap,
    weights: &ObjectiveWeights,
    sigma2: f64,
    p_max: f64,
    tau_p: usize,
) -> Result<ObjectiveReport> {
    Ok(Evaluator::new(channels.clone(), cluster.clone(), weights.clone(), sigma2, p_max, tau_p)?.evaluate(assignment))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn double_loop_gini(x: &[f64]) -> f64 {
        let k = x.len() as f64;
        let mean = x.iter().sum::<f64>() / k;
        let mut acc = 0.0;
        for i in 0..x.len() {
            for j in 0..x.len() {
                if i != j {
                    acc += (x[i] - x[j]).abs();
                }
            }
        }
        acc / (2.0 * k * k * mean)
    }

    #[test]
    fn total_se_cases() {
        assert_eq!(total_se(&[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(total_se(&[0.0; 5]), 0.0);
        let mut r = rng::stream(1, &[]);
        let x: Vec<f64> = (0..40).map(|_| r.random::<f64>() * 10.0).collect();
        let rev: f64 = x.iter().rev().fold(0.0, |a, b| a + b);
        assert!((total_se(&x) - rev).abs() < 1e-12);
    }

    #[test]
    fn gini_cases() {
        assert_eq!(gini(&[2.0, 2.0, 2.0]).value, 0.0);
        assert!((gini(&[1.0, 3.0]).value - 0.25).abs() < 1e-12);
        assert!((gini(&[0.0, 4.0]).value - 0.5).abs() < 1e-12);
        let z = gini(&[0.0, 0.0]);
        assert!(z.degenerate && z.value == 0.0);
        let mut r = rng::stream(2, &[]);
        for _ in 0..100 {
            let x: Vec<f64> = (0..1 + r.random_range(0..30)).map(|_| r.random::<f64>() * 5.0).collect();
            assert!((gini(&x).value - double_loop_gini(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_matrix_validator() {
        let ok = Assignment::from_indices(&[0, 1, 1], 2).unwrap();
        assert!(!validate_assignment_matrix(&ok.to_matrix()).any());
        let crafted = vec![vec![1, 0, 1], vec![1, 1, 0]];
        let v = validate_assignment_matrix(&crafted);
        assert_eq!(v.c3, vec![0]);
        assert!(v.c4);
    }

    #[test]
    fn constraint_checks() {
        let a = Assignment::from_indices(&[0, 1], 2).unwrap();
        let rho = [0.02, 0.02];
        let v = check_constraints(&rho, &[2.0, 0.0], &a, 2.0 * 0.02, 1.0);
        assert!(!v.c1);
        assert_eq!(v.c2, vec![1]);
        assert!(v.c3.is_empty() && !v.c4);
        assert!(check_constraints(&rho, &[2.0, 2.0], &a, 0.03, 1.0).c1);
    }

    #[test]
    fn weight_validation() {
        assert!(ObjectiveWeights::default().validate().is_ok());
        let zero = ObjectiveWeights { w_eta: 0.0, w_evd: 0.0, w_gini: 0.0, ..Default::default() };
        assert!(zero.validate().is_err());
        let neg = ObjectiveWeights { w_evd: -1.0, ..Default::default() };
        assert!(neg.validate().is_err());
    }
}
