//! User-centric AP clustering.
//!
//! The block-diagonal selector `D_k` is never materialised: a UE's serving
//! set is the representation, and masking zeroes the blocks outside it.

use std::io::Write;

use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterMap {
    serves: Vec<Vec<usize>>,
    num_aps: usize,
    cluster_size: usize,
    /// Set when the requested cluster size exceeded the AP count.
    pub clamped: bool,
}

impl ClusterMap {
    /// Builds a map from explicit serving sets. Each set is sorted and deduplicated.
    pub fn from_sets(serves: Vec<Vec<usize>>, num_aps: usize) -> Result<Self> {
        let mut serves = serves;
        for set in &mut serves {
            set.sort_unstable();
            set.dedup();
            if let Some(&bad) = set.iter().find(|&&l| l >= num_aps) {
                return Err(Error::InvalidConfig(format!("AP index {bad} out of range 0..{num_aps}")));
            }
        }
        let cluster_size = serves.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self { serves, num_aps, cluster_size, clamped: false })
    }

    pub fn num_ues(&self) -> usize {
        self.serves.len()
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn cluster_size(&self) -> usize {
        self.cluster_size
    }

    /// Serving APs of UE `k`, ascending.
    pub fn serves(&self, k: usize) -> &[usize] {
        &self.serves[k]
    }

    pub fn is_served_by(&self, k: usize, l: usize) -> bool {
        self.serves[k].binary_search(&l).is_ok()
    }

    /// `ue_index,ap_index_list` rows with `;`-separated AP indices.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "ue_index,ap_index_list")?;
        for (k, set) in self.serves.iter().enumerate() {
            let list: Vec<String> = set.iter().map(usize::to_string).collect();
            writeln!(w, "{k},{}", list.join(";"))?;
        }
        Ok(())
    }
}

/// Top-`M` APs by large-scale gain for every UE, ties to the lower index.
pub fn select_serving_aps(gains: &[Vec<f64>], cluster_size: usize) -> Result<ClusterMap> {
    if cluster_size == 0 {
        return Err(Error::InvalidConfig("cluster size must be at least 1".into()));
    }
    let num_aps = gains.first().map_or(0, Vec::len);
    if num_aps == 0 {
        return Err(Error::InvalidConfig("no APs to select from".into()));
    }
    let m = cluster_size.min(num_aps);
    let mut serves = Vec::with_capacity(gains.len());
    for row in gains {
        if row.len() != num_aps {
            return Err(Error::ShapeMismatch { expected: num_aps, got: row.len() });
        }
        if row.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidConfig("gains must be finite and nonnegative".into()));
        }
        let mut order: Vec<usize> = (0..num_aps).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        let mut set = order[..m].to_vec();
        set.sort_unstable();
        serves.push(set);
    }
    Ok(ClusterMap { serves, num_aps, cluster_size: m, clamped: cluster_size > num_aps })
}

/// `h D_k`: zeroes every AP block of a length-NL row not serving UE `k`.
pub fn mask_channel(h: &[C64], cluster: &ClusterMap, k: usize) -> Result<Vec<C64>> {
    let l = cluster.num_aps();
    if l == 0 || h.len() % l != 0 {
        return Err(Error::ShapeMismatch { expected: l, got: h.len() });
    }
    let n = h.len() / l;
    let mut out = vec![C64::new(0.0, 0.0); h.len()];
    for &ap in cluster.serves(k) {
        out[ap * n..(ap + 1) * n].copy_from_slice(&h[ap * n..(ap + 1) * n]);
    }
    Ok(out)
}

/// `D_i D_k != 0`, i.e. the two UEs share a serving AP.
pub fn clusters_overlap(cluster: &ClusterMap, i: usize, k: usize) -> bool {
    let (a, b) = (cluster.serves(i), cluster.serves(k));
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_gains(seed: u64, k: usize, l: usize) -> Vec<Vec<f64>> {
        let mut r = rng::stream(seed, &[]);
        (0..k).map(|_| (0..l).map(|_| r.random::<f64>()).collect()).collect()
    }

    /// Dense `NL x NL` block-diagonal selector.
    fn dense_selector(cluster: &ClusterMap, k: usize, n: usize) -> Vec<Vec<f64>> {
        let nl = n * cluster.num_aps();
        let mut d = vec![vec![0.0; nl]; nl];
        for &l in cluster.serves(k) {
            for j in 0..n {
                d[l * n + j][l * n + j] = 1.0;
            }
        }
        d
    }

    #[test]
    fn full_cooperation() {
        let cm = select_serving_aps(&random_gains(1, 3, 5), 5).unwrap();
        for k in 0..3 {
            assert_eq!(cm.serves(k), &[0, 1, 2, 3, 4]);
        }
        let h: Vec<C64> = (0..10).map(|i| C64::new(i as f64, -1.0)).collect();
        assert_eq!(mask_channel(&h, &cm, 1).unwrap(), h);
    }

    #[test]
    fn single_ap_matches_argmax_scan() {
        let gains = random_gains(7, 3, 4);
        let cm = select_serving_aps(&gains, 1).unwrap();
        for (k, row) in gains.iter().enumerate() {
            let mut best = 0;
            for l in 1..row.len() {
                if row[l] > row[best] {
                    best = l;
                }
            }
            assert_eq!(cm.serves(k), &[best]);
        }
    }

    #[test]
    fn ties_prefer_lower_index() {
        let cm = select_serving_aps(&[vec![0.5, 0.9, 0.5, 0.5]], 2).unwrap();
        assert_eq!(cm.serves(0), &[0, 1]);
    }

    #[test]
    fn oversized_cluster_is_clamped() {
        let cm = select_serving_aps(&random_gains(3, 2, 3), 8).unwrap();
        assert!(cm.clamped);
        assert_eq!(cm.cluster_size(), 3);
        assert!(!select_serving_aps(&random_gains(3, 2, 3), 2).unwrap().clamped);
    }

    #[test]
    fn empty_cluster_masks_everything() {
        let cm = ClusterMap::from_sets(vec![vec![]], 3).unwrap();
        let h = vec![C64::new(1.0, 1.0); 6];
        assert!(mask_channel(&h, &cm, 0).unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn single_block_survives() {
        let cm = ClusterMap::from_sets(vec![vec![2]], 3).unwrap();
        let h: Vec<C64> = (1..=6).map(|i| C64::new(i as f64, 0.5)).collect();
        let masked = mask_channel(&h, &cm, 0).unwrap();
        // Oracle: h * D as an explicit row-vector/matrix product.
        let d = dense_selector(&cm, 0, 2);
        for j in 0..6 {
            let expect: C64 = (0..6).map(|i| h[i] * d[i][j]).sum();
            assert_eq!(masked[j], expect);
        }
        assert!(masked[..4].iter().all(|z| z.norm() == 0.0));
        assert_eq!(masked[4..], h[4..]);
    }

    #[test]
    fn overlap_examples() {
        let cm = ClusterMap::from_sets(vec![vec![1, 2], vec![2, 3], vec![1], vec![3]], 4).unwrap();
        assert!(clusters_overlap(&cm, 0, 1));
        assert!(!clusters_overlap(&cm, 2, 3));
    }

    #[test]
    fn overlap_matches_dense_product() {
        let n = 2;
        for seed in 0..100 {
            let l = 2 + (seed as usize % 5);
            let m = 1 + (seed as usize % 3);
            let cm = select_serving_aps(&random_gains(seed, 4, l), m).unwrap();
            for i in 0..4 {
                for k in 0..4 {
                    let (di, dk) = (dense_selector(&cm, i, n), dense_selector(&cm, k, n));
                    let nl = n * l;
                    let nonzero = (0..nl).any(|r| (0..nl).any(|c| (0..nl).map(|t| di[r][t] * dk[t][c]).sum::<f64>() != 0.0));
                    assert_eq!(clusters_overlap(&cm, i, k), nonzero);
                    assert_eq!(clusters_overlap(&cm, i, k), clusters_overlap(&cm, k, i));
                }
            }
        }
    }

    #[test]
    fn masking_matches_dense_product() {
        let mut r = rng::stream(5, &[]);
        for seed in 0..50 {
            let (n, l) = (3, 4);
            let cm = select_serving_aps(&random_gains(seed, 2, l), 2).unwrap();
            let h: Vec<C64> = (0..n * l).map(|_| C64::new(r.random(), r.random())).collect();
            let d = dense_selector(&cm, 1, n);
            let masked = mask_channel(&h, &cm, 1).unwrap();
            for j in 0..n * l {
                let expect: C64 = (0..n * l).map(|i| h[i] * d[i][j]).sum();
                assert!((masked[j] - expect).norm() <= 1e-15);
            }
        }
    }

    #[test]
    fn top_sets_nest() {
        let gains = random_gains(21, 5, 9);
        for m in 1..9 {
            let a = select_serving_aps(&gains, m).unwrap();
            let b = select_serving_aps(&gains, m + 1).unwrap();
            for k in 0..5 {
                assert!(a.serves(k).iter().all(|l| b.is_served_by(k, *l)));
            }
        }
    }

    #[test]
    fn csv_rows() {
        let cm = ClusterMap::from_sets(vec![vec![3, 1], vec![0]], 4).unwrap();
        let mut out = Vec::new();
        cm.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "ue_index,ap_index_list\n0,1;3\n1,0\n");
    }
}
