//! Small agglomerative clustering helpers used by the STO estimator and the
//! geometry calibration.

/// Single-linkage clustering of scalar values: sort, then split wherever the
/// gap between neighbors exceeds `threshold`. Returns per-input cluster ids
/// (0-based, ordered by ascending cluster value).
pub fn cluster_1d(values: &[f64], threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ids = vec![0usize; values.len()];
    let mut current = 0;
    for w in 0..order.len() {
        if w > 0 && values[order[w]] - values[order[w - 1]] > threshold {
            current += 1;
        }
        ids[order[w]] = current;
    }
    ids
}

/// Greedy agglomerative clustering of 2-D points with a merge threshold on
/// the centroid distance. Returns per-input cluster ids.
///
/// Clusters are merged while the closest pair of centroids is nearer than
/// `threshold`; ids are assigned in order of first appearance.
pub fn cluster_2d(points: &[[f64; 2]], threshold: f64) -> Vec<usize> {
    #[derive(Clone)]
    struct Cluster {
        sum: [f64; 2],
        count: usize,
        members: Vec<usize>,
    }
    impl Cluster {
        fn centroid(&self) -> [f64; 2] {
            [self.sum[0] / self.count as f64, self.sum[1] / self.count as f64]
        }
    }

    let mut clusters: Vec<Cluster> = points
        .iter()
        .enumerate()
        .map(|(i, p)| Cluster {
            sum: *p,
            count: 1,
            members: vec![i],
        })
        .collect();

    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let ca = clusters[a].centroid();
                let cb = clusters[b].centroid();
                let d = ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2)).sqrt();
                if d < threshold && best.map_or(true, |(_, _, bd)| d < bd) {
                    best = Some((a, b, d));
                }
            }
        }
        match best {
            Some((a, b, _)) => {
                let merged = clusters.remove(b);
                clusters[a].sum[0] += merged.sum[0];
                clusters[a].sum[1] += merged.sum[1];
                clusters[a].count += merged.count;
                clusters[a].members.extend(merged.members);
            }
            None => break,
        }
    }

    let mut ids = vec![0usize; points.len()];
    let mut ordered: Vec<&Cluster> = clusters.iter().collect();
    ordered.sort_by_key(|c| *c.members.iter().min().unwrap());
    for (id, c) in ordered.iter().enumerate() {
        for &m in &c.members {
            ids[m] = id;
        }
    }
    ids
}

/// Group indices by cluster id.
pub fn group_by_id(ids: &[usize]) -> Vec<Vec<usize>> {
    let n = ids.iter().max().map_or(0, |&m| m + 1);
    let mut groups = vec![Vec::new(); n];
    for (i, &id) in ids.iter().enumerate() {
        groups[id].push(i);
    }
    groups
}
