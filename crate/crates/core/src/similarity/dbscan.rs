//! DBSCAN over cosine distance.
//!
//! Neighborhoods are closed balls (`dist <= eps`) that include the point
//! itself. Border points attach to the cluster of their nearest core
//! point (ties to the lowest point index), so the resulting partition is
//! independent of input order.

use super::word2vec::cosine;

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - cosine(a, b)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbscanResult {
    /// Clusters as sorted member-index lists, ordered by first member.
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

/// Queue-based DBSCAN: discover core components by BFS over the core
/// points, then attach borders.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> DbscanResult {
    assert!(eps > 0.0 && eps <= 2.0, "eps must lie in (0, 2]");
    assert!(min_pts >= 2, "min_pts must be >= 2");
    let n = points.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| cosine_distance(&points[i], &points[j]) <= eps)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= min_pts).collect();

    let mut cluster_of = vec![usize::MAX; n];
    let mut n_clusters = 0;
    for start in 0..n {
        if !core[start] || cluster_of[start] != usize::MAX {
            continue;
        }
        let id = n_clusters;
        n_clusters += 1;
        let mut queue = vec![start];
        cluster_of[start] = id;
        while let Some(p) = queue.pop() {
            for &q in &neighbors[p] {
                if core[q] && cluster_of[q] == usize::MAX {
                    cluster_of[q] = id;
                    queue.push(q);
                }
            }
        }
    }

    // Borders: non-core points within eps of a core point join the
    // nearest core's cluster.
    let mut noise = Vec::new();
    for p in 0..n {
        if core[p] {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &q in &neighbors[p] {
            if !core[q] {
                continue;
            }
            let d = cosine_distance(&points[p], &points[q]);
            if best.map_or(true, |(bd, bq)| d < bd || (d == bd && q < bq)) {
                best = Some((d, q));
            }
        }
        match best {
            Some((_, q)) => cluster_of[p] = cluster_of[q],
            None => noise.push(p),
        }
    }

    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for p in 0..n {
        if cluster_of[p] != usize::MAX {
            clusters[cluster_of[p]].push(p);
        }
    }
    for c in clusters.iter_mut() {
        c.sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);
    DbscanResult { clusters, noise }
}

/// Independent O(n^2) reference: union-find over core pairs, then the
/// same nearest-core border rule. Used as the oracle in tests.
pub fn dbscan_reference(points: &[Vec<f64>], eps: f64, min_pts: usize) -> DbscanResult {
    let n = points.len();
    let dist = |i: usize, j: usize| -> f64 { cosine_distance(&points[i], &points[j]) };
    let degree: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| dist(i, j) <= eps).count())
        .collect();
    let core: Vec<bool> = degree.iter().map(|&d| d >= min_pts).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if core[i] && core[j] && dist(i, j) <= eps {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }

    let mut member_of: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        if core[i] {
            member_of[i] = Some(find(&mut parent, i));
        }
    }
    let mut noise = Vec::new();
    for i in 0..n {
        if core[i] {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for j in 0..n {
            if !core[j] || dist(i, j) > eps {
                continue;
            }
            let d = dist(i, j);
            if best.map_or(true, |(bd, bj)| d < bd || (d == bd && j < bj)) {
                best = Some((d, j));
            }
        }
        match best {
            Some((_, j)) => member_of[i] = member_of[j],
            None => noise.push(i),
        }
    }

    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        if let Some(root) = member_of[i] {
            groups.entry(root).or_default().push(i);
        }
    }
    let mut clusters: Vec<Vec<usize>> = groups.into_values().collect();
    for c in clusters.iter_mut() {
        c.sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);
    DbscanResult { clusters, noise }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_points(rng: &mut Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.next_gaussian()).collect())
            .collect()
    }

    #[test]
    fn two_tight_groups() {
        let mut points = Vec::new();
        for _ in 0..5 {
            points.push(vec![1.0, 0.0, 0.0]);
        }
        for _ in 0..5 {
            points.push(vec![-1.0, 0.0, 0.0]);
        }
        let res = dbscan(&points, 0.1, 3);
        assert_eq!(res.clusters.len(), 2);
        assert!(res.noise.is_empty());
    }

    #[test]
    fn all_distant_all_noise() {
        // Mutually orthogonal: cosine distance 1 > eps.
        let points = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let res = dbscan(&points, 0.5, 2);
        assert!(res.clusters.is_empty());
        assert_eq!(res.noise.len(), 3);
    }

    #[test]
    fn matches_reference_on_random_instances() {
        let mut rng = Rng::seed_from(17);
        for trial in 0..50 {
            let points = random_points(&mut rng, 30, 4);
            let eps = rng.range_f64(0.05, 0.8);
            let min_pts = 2 + rng.below(4);
            let a = dbscan(&points, eps, min_pts);
            let b = dbscan_reference(&points, eps, min_pts);
            assert_eq!(a, b, "trial {} eps {} min_pts {}", trial, eps, min_pts);
        }
    }

    #[test]
    fn partition_invariant_under_permutation() {
        let mut rng = Rng::seed_from(5);
        for _ in 0..20 {
            let points = random_points(&mut rng, 20, 3);
            let res = dbscan(&points, 0.3, 3);
            let mut perm: Vec<usize> = (0..points.len()).collect();
            rng.shuffle(&mut perm);
            let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| points[i].clone()).collect();
            let res_shuffled = dbscan(&shuffled, 0.3, 3);
            // Map shuffled indices back to original ids and compare partitions.
            let mut mapped: Vec<Vec<usize>> = res_shuffled
                .clusters
                .iter()
                .map(|c| {
                    let mut m: Vec<usize> = c.iter().map(|&i| perm[i]).collect();
                    m.sort_unstable();
                    m
                })
                .collect();
            mapped.sort();
            let mut expected = res.clusters.clone();
            expected.sort();
            assert_eq!(mapped, expected);
            let mut mapped_noise: Vec<usize> =
                res_shuffled.noise.iter().map(|&i| perm[i]).collect();
            mapped_noise.sort_unstable();
            assert_eq!(mapped_noise, res.noise);
        }
    }
}
