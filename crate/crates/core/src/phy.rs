//! Zero-forcing downlink evaluation of a subband assignment.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::chanmodel::{norm_sqr, ChannelTensor};
use crate::clustering::{clusters_overlap, ClusterMap};
use crate::{Error, Result, C64};

/// Largest tolerated condition number of the normalised ZF Gram matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Subband index per UE. A UE can hold at most one subband, so double
/// assignment is unrepresentable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    subband_of: Vec<Option<usize>>,
    num_subbands: usize,
}

impl Assignment {
    pub fn new(subband_of: Vec<Option<usize>>, num_subbands: usize) -> Result<Self> {
        if let Some(s) = subband_of.iter().flatten().find(|&&s| s >= num_subbands) {
            return Err(Error::InvalidConfig(format!("subband {s} out of range 0..{num_subbands}")));
        }
        Ok(Self { subband_of, num_subbands })
    }

    /// Every UE assigned.
    pub fn from_indices(indices: &[usize], num_subbands: usize) -> Result<Self> {
        Self::new(indices.iter().map(|&s| Some(s)).collect(), num_subbands)
    }

    pub fn unassigned(num_ues: usize, num_subbands: usize) -> Self {
        Self { subband_of: vec![None; num_ues], num_subbands }
    }

    /// Mixed-radix enumeration: index `i` in `0..S^K`, UE 0 least significant.
    pub fn from_ordinal(mut i: u64, num_ues: usize, num_subbands: usize) -> Self {
        let subband_of = (0..num_ues)
            .map(|_| {
                let s = (i % num_subbands as u64) as usize;
                i /= num_subbands as u64;
                Some(s)
            })
            .collect();
        Self { subband_of, num_subbands }
    }

    pub fn num_ues(&self) -> usize {
        self.subband_of.len()
    }

    pub fn num_subbands(&self) -> usize {
        self.num_subbands
    }

    pub fn subband_of(&self, k: usize) -> Option<usize> {
        self.subband_of[k]
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.subband_of
    }

    pub fn num_assigned(&self) -> usize {
        self.subband_of.iter().flatten().count()
    }

    /// UEs on subband `s`, ascending.
    pub fn members(&self, s: usize) -> Vec<usize> {
        (0..self.subband_of.len()).filter(|&k| self.subband_of[k] == Some(s)).collect()
    }

    pub fn occupancy(&self) -> Vec<Vec<usize>> {
        let mut occ = vec![Vec::new(); self.num_subbands];
        for (k, s) in self.subband_of.iter().enumerate() {
            if let Some(s) = s {
                occ[*s].push(k);
            }
        }
        occ
    }

    /// Binary `S x K` matrix.
    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        let mut m = vec![vec![0u8; self.subband_of.len()]; self.num_subbands];
        for (k, s) in self.subband_of.iter().enumerate() {
            if let Some(s) = s {
                m[*s][k] = 1;
            }
        }
        m
    }

    /// Row-major `K x S` one-hot encoding; unassigned rows are all zero.
    pub fn one_hot(&self) -> Vec<f64> {
        let s = self.num_subbands;
        let mut v = vec![0.0; self.subband_of.len() * s];
        for (k, sb) in self.subband_of.iter().enumerate() {
            if let Some(sb) = sb {
                v[k * s + sb] = 1.0;
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PowerNormalization {
    /// `w <- sqrt(rho) * w / ||w||`, so that `||w||^2 = rho`.
    #[default]
    Unit,
    /// `w <- sqrt(rho / ||w||) * w`, the literal printed form.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ZfError {
    #[error("{users} co-channel users exceed {dof} serving antennas")]
    TooManyUsers { users: usize, dof: usize },
    #[error("ill-conditioned ZF Gram matrix (condition number {0:e})")]
    IllConditioned(f64),
}

/// Equal per-UE power `P_max / tau_p`.
pub fn equal_power(p_max: f64, tau_p: usize) -> f64 {
    p_max / tau_p.max(1) as f64
}

/// `C_{k,s}`: UEs sharing `k`'s subband and at least one serving AP, plus `k`.
pub fn interference_members(assignment: &Assignment, cluster: &ClusterMap, k: usize) -> Result<Vec<usize>> {
    let s = assignment.subband_of(k).ok_or(Error::Unassigned(k))?;
    Ok(assignment
        .members(s)
        .into_iter()
        .filter(|&i| i == k || clusters_overlap(cluster, i, k))
        .collect())
}

/// ZF precoder for UE `k` from the stacked channel rows of `C_{k,s}`.
///
/// `rows[0]` must be UE `k`'s full length-NL row. The result is the first
/// column of `D_k H^H (H D_k H^H)^{-1}`, scaled to power `rho`. Rows are
/// normalised before solving; this only rescales the first column and is
/// undone by the power normalisation.
pub fn zf_precoder(
    rows: &[Vec<C64>],
    cluster: &ClusterMap,
    k: usize,
    rho: f64,
    normalization: PowerNormalization,
) -> Result<Vec<C64>, ZfError> {
    let nl = rows[0].len();
    let n = nl / cluster.num_aps();
    let cols: Vec<usize> = cluster.serves(k).iter().flat_map(|&l| l * n..(l + 1) * n).collect();
    let dof = cols.len();

    let mut stacked: Vec<Vec<C64>> = Vec::with_capacity(rows.len());
    let mut lead_norm = 0.0;
    for (idx, row) in rows.iter().enumerate() {
        let masked: Vec<C64> = cols.iter().map(|&c| row[c]).collect();
        let norm = norm_sqr(&masked).sqrt();
        if norm == 0.0 {
            if idx == 0 {
                return Err(ZfError::IllConditioned(f64::INFINITY));
            }
            // Already orthogonal to anything supported on D_k.
            continue;
        }
        if idx == 0 {
            lead_norm = norm;
        }
        stacked.push(masked.into_iter().map(|z| z / norm).collect());
    }
    let m = stacked.len();
    if m > dof {
        return Err(ZfError::TooManyUsers { users: m, dof });
    }

    // A^H as a dof x m matrix.
    let a_h = DMatrix::from_fn(dof, m, |r, c| stacked[c][r].conj());
    let gram = a_h.adjoint() * &a_h;
    let eig = gram.symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if cond > MAX_CONDITION {
        return Err(ZfError::IllConditioned(cond));
    }

    // A^H = QR  =>  w = Q R^{-H} e_1 solves A w = e_1 with w in range(A^H).
    let qr = a_h.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut e1 = DVector::from_element(m, C64::new(0.0, 0.0));
    e1[0] = C64::new(1.0, 0.0);
    let y = r
        .adjoint()
        .solve_lower_triangular(&e1)
        .ok_or(ZfError::IllConditioned(f64::INFINITY))?;
    let compact = q * y;

    let norm = compact.norm();
    let scale = match normalization {
        _ if rho == 0.0 => 0.0,
        PowerNormalization::Unit => rho.sqrt() / norm,
        // The unnormalised column is `compact / lead_norm`.
        PowerNormalization::AsPrinted => (rho * lead_norm / norm).sqrt() / lead_norm,
    };
    let mut w = vec![C64::new(0.0, 0.0); nl];
    for (i, &c) in cols.iter().enumerate() {
        w[c] = compact[i] * scale;
    }
    Ok(w)
}

pub(crate) fn dot(h: &[C64], w: &[C64]) -> C64 {
    h.iter().zip(w).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecodeResult {
    /// Length-NL precoders; `None` for unassigned or ZF-infeasible UEs.
    pub w: Vec<Option<Vec<C64>>>,
    /// Allocated power per UE (zero when unassigned).
    pub rho: Vec<f64>,
    pub sinr: Vec<f64>,
    /// Spectral efficiency per UE, bits/s/Hz.
    pub se: Vec<f64>,
    pub zf_infeasible: Vec<bool>,
}

impl PrecodeResult {
    pub fn infeasible_count(&self) -> usize {
        self.zf_infeasible.iter().filter(|&&b| b).count()
    }

    /// `ue_index,subband,sinr_db,se_bps_hz`; unassigned UEs have an empty subband.
    pub fn write_csv<W: Write>(&self, mut out: W, assignment: &Assignment) -> Result<()> {
        writeln!(out, "ue_index,subband,sinr_db,se_bps_hz")?;
        for k in 0..self.se.len() {
            let sb = assignment.subband_of(k).map(|s| s.to_string()).unwrap_or_default();
            writeln!(out, "{k},{sb},{},{}", 10.0 * self.sinr[k].log10(), self.se[k])?;
        }
        Ok(())
    }
}

/// Precoders, SINR and SE for every UE. `rho[k]` is UE `k`'s power.
pub fn evaluate_phy(
    channels: &ChannelTensor,
    cluster: &ClusterMap,
    assignment: &Assignment,
    sigma2: f64,
    rho: &[f64],
    normalization: PowerNormalization,
) -> Result<PrecodeResult> {
    let num_ues = channels.num_ues();
    for got in [cluster.num_ues(), assignment.num_ues(), rho.len()] {
        if got != num_ues {
            return Err(Error::ShapeMismatch { expected: num_ues, got });
        }
    }
    if assignment.num_subbands() > channels.num_subbands() {
        return Err(Error::ShapeMismatch { expected: channels.num_subbands(), got: assignment.num_subbands() });
    }
    let mut w: Vec<Option<Vec<C64>>> = vec![None; num_ues];
    let mut zf_infeasible = vec![false; num_ues];
    let mut rows: Vec<Option<Vec<C64>>> = vec![None; num_ues];
    for k in 0..num_ues {
        if let Some(s) = assignment.subband_of(k) {
            rows[k] = Some(channels.row(k, s));
        }
    }
    let row = |i: usize| rows[i].as_ref().expect("assigned UE has a row");

    for k in 0..num_ues {
        if assignment.subband_of(k).is_none() {
            continue;
        }
        let group = interference_members(assignment, cluster, k)?;
        let mut stacked = vec![row(k).clone()];
        stacked.extend(group.iter().filter(|&&i| i != k).map(|&i| row(i).clone()));
        match zf_precoder(&stacked, cluster, k, rho[k], normalization) {
            Ok(v) => w[k] = Some(v),
            Err(_) => zf_infeasible[k] = true,
        }
    }

    let mut sinr = vec![0.0; num_ues];
    let mut se = vec![0.0; num_ues];
    for members in assignment.occupancy() {
        for &k in &members {
            let Some(wk) = &w[k] else { continue };
            let hk = row(k);
            let signal = dot(hk, wk).norm_sqr();
            let interference: f64 = members
                .iter()
                .filter(|&&i| i != k)
                .filter_map(|&i| w[i].as_ref())
                .map(|wi| dot(hk, wi).norm_sqr())
                .sum();
            sinr[k] = signal / (interference + sigma2);
            se[k] = (1.0 + sinr[k]).log2();
        }
    }
    let rho = (0..num_ues)
        .map(|k| if assignment.subband_of(k).is_some() { rho[k] } else { 0.0 })
        .collect();
    Ok(PrecodeResult { w, rho, sinr, se, zf_infeasible })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::mask_channel;
    use crate::rng;
    use rand::Rng;

    fn random_row(r: &mut rng::Rng, len: usize) -> Vec<C64> {
        (0..len).map(|_| C64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)).collect()
    }

    #[test]
    fn assignment_basics() {
        let a = Assignment::new(vec![Some(1), None, Some(1), Some(0)], 2).unwrap();
        assert_eq!(a.members(1), vec![0, 2]);
        assert_eq!(a.num_assigned(), 3);
        assert_eq!(a.occupancy(), vec![vec![3], vec![0, 2]]);
        assert_eq!(a.to_matrix(), vec![vec![0, 0, 0, 1], vec![1, 0, 1, 0]]);
        assert_eq!(a.one_hot(), vec![0., 1., 0., 0., 0., 1., 1., 0.]);
        assert!(Assignment::new(vec![Some(2)], 2).is_err());
        let all: std::collections::HashSet<_> = (0..16).map(|i| Assignment::from_ordinal(i, 2, 4)).collect();
        assert_eq!(all.len(), 16);
    }

    #[test]
    fn equal_power_cases() {
        assert!((equal_power(0.2, 10) - 0.02).abs() < 1e-15);
        assert_eq!(equal_power(0.2, 1), 0.2);
        assert_eq!(equal_power(0.0, 10), 0.0);
    }

    #[test]
    fn interference_members_cases() {
        let cm = ClusterMap::from_sets(vec![vec![0], vec![1], vec![0, 1], vec![2]], 3).unwrap();
        let a = Assignment::new(vec![Some(0), Some(0), Some(0), Some(1)], 2).unwrap();
        assert_eq!(interference_members(&a, &cm, 3).unwrap(), vec![3]);
        assert_eq!(interference_members(&a, &cm, 0).unwrap(), vec![0, 2]);
        assert_eq!(interference_members(&a, &cm, 2).unwrap(), vec![0, 1, 2]);
        let u = Assignment::new(vec![None, Some(0), Some(0), Some(1)], 2).unwrap();
        assert!(matches!(interference_members(&u, &cm, 0), Err(Error::Unassigned(0))));
    }

    #[test]
    fn single_user_is_matched_filter() {
        let mut r = rng::stream(3, &[]);
        let cm = ClusterMap::from_sets(vec![vec![0, 2]], 3).unwrap();
        let h = random_row(&mut r, 6);
        let rho = 0.02;
        let w = zf_precoder(&[h.clone()], &cm, 0, rho, PowerNormalization::Unit).unwrap();
        let masked = mask_channel(&h, &cm, 0).unwrap();
        let mnorm = norm_sqr(&masked).sqrt();
        for (wi, mi) in w.iter().zip(&masked) {
            assert!((wi - mi.conj() * (rho.sqrt() / mnorm)).norm() < 1e-12);
        }
        let g = dot(&masked, &w);
        assert!(g.im.abs() < 1e-14 && (g.re - mnorm * rho.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn two_users_on_one_ap_are_nulled() {
        let mut r = rng::stream(8, &[]);
        let cm = ClusterMap::from_sets(vec![vec![0], vec![0]], 1).unwrap();
        for _ in 0..20 {
            let (h0, h1) = (random_row(&mut r, 4), random_row(&mut r, 4));
            let w = zf_precoder(&[h0.clone(), h1.clone()], &cm, 0, 0.5, PowerNormalization::Unit).unwrap();
            let leak = dot(&h1, &w).norm() / (norm_sqr(&h1).sqrt() * norm_sqr(&w).sqrt());
            assert!(leak <= 1e-10, "leak {leak}");
            assert!((norm_sqr(&w) - 0.5).abs() < 1e-12);
            // Least-squares oracle: w must be orthogonal (in the bilinear sense)
            // to h1 and lie in span{conj(h0), conj(h1)}; check via the residual
            // of projecting w onto that span.
            let basis = [h0.iter().map(|z| z.conj()).collect::<Vec<_>>(), h1.iter().map(|z| z.conj()).collect()];
            let b = DMatrix::from_fn(4, 2, |i, j| basis[j][i]);
            let wv = DVector::from_vec(w.clone());
            let coef = (b.adjoint() * &b).try_inverse().unwrap() * b.adjoint() * &wv;
            assert!((b * coef - wv).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_power_and_infeasible() {
        let mut r = rng::stream(9, &[]);
        let cm = ClusterMap::from_sets(vec![vec![0], vec![0], vec![0]], 1).unwrap();
        let rows: Vec<_> = (0..3).map(|_| random_row(&mut r, 2)).collect();
        assert_eq!(
            zf_precoder(&rows, &cm, 0, 1.0, PowerNormalization::Unit),
            Err(ZfError::TooManyUsers { users: 3, dof: 2 })
        );
        let w = zf_precoder(&rows[..2], &cm, 0, 0.0, PowerNormalization::Unit).unwrap();
        assert!(w.iter().all(|z| z.norm() == 0.0));
        let dup = vec![rows[0].clone(), rows[0].clone()];
        assert!(matches!(zf_precoder(&dup, &cm, 0, 1.0, PowerNormalization::Unit), Err(ZfError::IllConditioned(_))));
    }

    #[test]
    fn printed_normalisation_differs() {
        let mut r = rng::stream(10, &[]);
        let cm = ClusterMap::from_sets(vec![vec![0]], 1).unwrap();
        let h = random_row(&mut r, 4);
        let w = zf_precoder(&[h.clone()], &cm, 0, 0.04, PowerNormalization::AsPrinted).unwrap();
        // Unnormalised single-user column is conj(h)/||h||^2, of norm 1/||h||,
        // so the printed rule gives ||w||^2 = rho / ||h||.
        let hn = norm_sqr(&h).sqrt();
        assert!((norm_sqr(&w) - 0.04 / hn).abs() < 1e-12);
    }

    fn tensor_from_rows(rows: &[Vec<Vec<C64>>], num_aps: usize) -> ChannelTensor {
        // rows[k][s] is a length-NL row.
        let (k, s) = (rows.len(), rows[0].len());
        let n = rows[0][0].len() / num_aps;
        let mut flat = Vec::new();
        for ue in rows {
            for l in 0..num_aps {
                for sb in ue {
                    flat.extend_from_slice(&sb[l * n..(l + 1) * n]);
                }
            }
        }
        ChannelTensor::from_raw(k, num_aps, s, n, flat).unwrap()
    }

    #[test]
    fn sinr_and_se_arithmetic() {
        // One UE, numerator equal to sigma^2 => SINR 1, SE 1.
        let h = vec![vec![vec![C64::new(0.6, 0.8), C64::new(0.0, 0.0)]]];
        let ch = tensor_from_rows(&h, 1);
        let cm = ClusterMap::from_sets(vec![vec![0]], 1).unwrap();
        let a = Assignment::from_indices(&[0], 1).unwrap();
        let res = evaluate_phy(&ch, &cm, &a, 0.25, &[0.25], PowerNormalization::Unit).unwrap();
        assert!((res.sinr[0] - 1.0).abs() < 1e-12);
        assert!((res.se[0] - 1.0).abs() < 1e-12);
        let res = evaluate_phy(&ch, &cm, &a, 0.25 / 3.0, &[0.25], PowerNormalization::Unit).unwrap();
        assert!((res.se[0] - 2.0).abs() < 1e-12);
        let none = Assignment::unassigned(1, 1);
        let res = evaluate_phy(&ch, &cm, &none, 0.25, &[0.25], PowerNormalization::Unit).unwrap();
        assert_eq!(res.se[0], 0.0);
        assert_eq!(res.rho[0], 0.0);
    }

    #[test]
    fn interference_matches_naive_double_loop() {
        let mut r = rng::stream(12, &[]);
        let (k, s, l, n) = (4, 2, 3, 2);
        let rows: Vec<Vec<Vec<C64>>> = (0..k).map(|_| (0..s).map(|_| random_row(&mut r, l * n)).collect()).collect();
        let ch = tensor_from_rows(&rows, l);
        let cm = ClusterMap::from_sets(vec![vec![0, 1], vec![1], vec![2], vec![0, 2]], l).unwrap();
        let a = Assignment::from_indices(&[0, 0, 1, 0], s).unwrap();
        let rho = vec![0.1; k];
        let sigma2 = 0.01;
        let res = evaluate_phy(&ch, &cm, &a, sigma2, &rho, PowerNormalization::Unit).unwrap();
        for ue in 0..k {
            let sb = a.subband_of(ue).unwrap();
            let hk = &rows[ue][sb];
            let wk = res.w[ue].as_ref().unwrap();
            let mut num = C64::new(0.0, 0.0);
            for j in 0..l * n {
                num += hk[j] * wk[j];
            }
            let mut interf = 0.0;
            for other in 0..k {
                if other == ue || a.subband_of(other) != Some(sb) {
                    continue;
                }
                let wi = res.w[other].as_ref().unwrap();
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..l * n {
                    // D_i w_i == w_i for a precoder supported on serves[i].
                    let d = if cm.is_served_by(other, j / n) { 1.0 } else { 0.0 };
                    acc += hk[j] * wi[j] * d;
                }
                interf += acc.norm_sqr();
            }
            let expect = num.norm_sqr() / (interf + sigma2);
            assert!((res.sinr[ue] - expect).abs() <= 1e-12 * expect.max(1.0));
        }
        // UE 2 is alone on subband 1.
        let w2 = res.w[2].as_ref().unwrap();
        let h2 = &rows[2][1];
        let iso = dot(h2, w2).norm_sqr() / sigma2;
        assert!((res.sinr[2] - iso).abs() <= 1e-12 * iso);
    }

    #[test]
    fn csv_export() {
        let h = vec![vec![vec![C64::new(1.0, 0.0)]]];
        let ch = tensor_from_rows(&h, 1);
        let cm = ClusterMap::from_sets(vec![vec![0]], 1).unwrap();
        let a = Assignment::from_indices(&[0], 1).unwrap();
        let res = evaluate_phy(&ch, &cm, &a, 1.0, &[1.0], PowerNormalization::Unit).unwrap();
        let mut out = Vec::new();
        res.write_csv(&mut out, &a).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "ue_index,subband,sinr_db,se_bps_hz\n0,0,0,1\n");
    }
}
