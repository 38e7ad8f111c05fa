//! Individual-fairness measures and distributional distance between groups.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Dataset, GroupIndex};
use crate::error::{Error, Result};
use crate::lipschitz::DistanceMatrix;

/// Neighborhood size for [`knn_inconsistency`]. Distances are Euclidean over
/// the non-sensitive feature columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KnnSpec {
    pub k: usize,
}

impl Default for KnnSpec {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Indices of the `k` nearest other records to `i`, nearest first, ties
/// broken by lower record index.
fn nearest(rows: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let xi = &rows[i];
    let mut cand: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, xj)| {
            let d2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, j)
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_unstable_by(cmp);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Mean absolute difference between each record's value and the mean value
/// of its `k` nearest neighbours (the record itself excluded).
///
/// `values` may be labels, hard predictions or scores in `[0, 1]`.
pub fn knn_inconsistency(values: &[f64], ds: &Dataset, spec: &KnnSpec) -> Result<f64> {
    let n = ds.n_records();
    if values.len() != n {
        return Err(Error::DimensionMismatch {
            what: "values for kNN inconsistency",
            expected: n,
            actual: values.len(),
        });
    }
    if spec.k == 0 || spec.k >= n {
        return Err(Error::Validation(format!(
            "k must satisfy 1 <= k < n_records, got k={} with n={n}",
            spec.k
        )));
    }
    let columns = ds.non_sensitive_columns();
    let rows: Vec<Vec<f64>> = ds
        .rows()
        .map(|r| columns.iter().map(|&j| r[j]).collect())
        .collect();
    let terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let neighbours = nearest(&rows, i, spec.k);
            let mean = neighbours.iter().map(|&j| values[j]).sum::<f64>() / spec.k as f64;
            (values[i] - mean).abs()
        })
        .collect();
    Ok(terms.iter().sum::<f64>() / n as f64)
}

/// Empirical Wasserstein-1 distance between two one-dimensional samples,
/// the integral over `(0, 1)` of the gap between their step quantile
/// functions.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Validation("wasserstein1 needs two non-empty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let (n, m) = (a.len() as u64, b.len() as u64);

    // Quantile breakpoints i/n and j/m, kept exact on the common grid 1/(n m).
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos = 0u64;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let next_a = (i as u64 + 1) * m;
        let next_b = (j as u64 + 1) * n;
        let next = next_a.min(next_b);
        total += (next - pos) as f64 * (a[i] - b[j]).abs();
        pos = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok(total / (n * m) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDistance {
    pub group_w1_per_feature: Vec<f64>,
    pub group_w1_mean: f64,
}

/// Per-feature Wasserstein-1 distance between the two groups of `gi`, and
/// its mean over features.
pub fn group_feature_distance(ds: &Dataset, gi: &GroupIndex) -> Result<GroupDistance> {
    gi.require_two_groups()?;
    if ds.n_features() == 0 {
        return Err(Error::Validation("group distance needs at least one feature".into()));
    }
    let [a, b] = [&gi.groups()[0], &gi.groups()[1]];
    let per_feature = (0..ds.n_features())
        .map(|j| {
            let col_a: Vec<f64> = a.members.iter().map(|&i| ds.row(i)[j]).collect();
            let col_b: Vec<f64> = b.members.iter().map(|&i| ds.row(i)[j]).collect();
            wasserstein1(&col_a, &col_b)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = per_feature.iter().sum::<f64>() / per_feature.len() as f64;
    Ok(GroupDistance {
        group_w1_per_feature: per_feature,
        group_w1_mean: mean,
    })
}

/// Total variation distance `1/2 * sum |P(a) - Q(a)|` between two
/// distributions over the same finite outcome set.
pub fn statistical_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Statistical distance between two binary-outcome distributions given by
/// their probabilities of outcome 1.
pub fn outcome_distance(px: f64, py: f64) -> f64 {
    statistical_distance(&[1.0 - px, px], &[1.0 - py, py])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzViolations {
    pub count: usize,
    pub max_excess: f64,
}

/// Pairs whose outcome probabilities differ by more than their distance.
pub fn lipschitz_violations(p: &[f64], d: &DistanceMatrix) -> Result<LipschitzViolations> {
    lipschitz_violations_where(p, d, |_, _| true)
}

/// As [`lipschitz_violations`], restricted to pairs accepted by `pair`.
pub fn lipschitz_violations_where(
    p: &[f64],
    d: &DistanceMatrix,
    pair: impl Fn(usize, usize) -> bool,
) -> Result<LipschitzViolations> {
    if p.len() != d.len() {
        return Err(Error::DimensionMismatch {
            what: "outcome probabilities vs distance matrix",
            expected: d.len(),
            actual: p.len(),
        });
    }
    let mut out = LipschitzViolations {
        count: 0,
        max_excess: 0.0,
    };
    for x in 0..p.len() {
        for y in x + 1..p.len() {
            if !pair(x, y) {
                continue;
            }
            let excess = (p[x] - p[y]).abs() - d.get(x, y);
            // rounding slack from the solver is not a violation
            if excess > 1e-9 {
                out.count += 1;
                out.max_excess = out.max_excess.max(excess);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ProtectedAttr;
    use proptest::prelude::*;

    fn points(rows: Vec<Vec<f64>>) -> Dataset {
        let n = rows.len();
        let d = rows[0].len();
        Dataset::new(
            rows,
            (0..d).map(|j| format!("f{j}")).collect(),
            vec![0; n],
            vec![ProtectedAttr::new("g", vec!["a".into(); n])],
        )
        .unwrap()
    }

    #[test]
    fn knn_zero_and_hand_cases() {
        let ds = points(vec![vec![0.0], vec![1.0], vec![3.0]]);
        let spec = KnnSpec { k: 1 };
        assert_eq!(knn_inconsistency(&[0.7; 3], &ds, &spec).unwrap(), 0.0);
        let pair = points(vec![vec![0.0], vec![1.0]]);
        assert_eq!(knn_inconsistency(&[1.0, 0.0], &pair, &spec).unwrap(), 1.0);
        assert!(knn_inconsistency(&[1.0, 0.0], &pair, &KnnSpec { k: 2 }).is_err());
    }

    #[test]
    fn knn_separated_clusters_with_constant_values() {
        let mut rows = Vec::new();
        let mut values = Vec::new();
        for c in 0..2 {
            for i in 0..6 {
                rows.push(vec![100.0 * c as f64 + i as f64 * 0.1, (i % 2) as f64 * 0.1]);
                values.push(c as f64);
            }
        }
        let ds = points(rows.clone());
        let spec = KnnSpec { k: 4 };
        // exhaustive-sort oracle: every neighbour set stays within the cluster
        for i in 0..rows.len() {
            let mut order: Vec<usize> = (0..rows.len()).filter(|&j| j != i).collect();
            order.sort_by(|&x, &y| {
                let dx: f64 = rows[i].iter().zip(&rows[x]).map(|(a, b)| (a - b).powi(2)).sum();
                let dy: f64 = rows[i].iter().zip(&rows[y]).map(|(a, b)| (a - b).powi(2)).sum();
                dx.partial_cmp(&dy).unwrap().then(x.cmp(&y))
            });
            assert!(order[..4].iter().all(|&j| values[j] == values[i]));
            assert_eq!(nearest(&rows, i, 4), order[..4]);
        }
        assert_eq!(knn_inconsistency(&values, &ds, &spec).unwrap(), 0.0);
    }

    #[test]
    fn knn_ignores_sensitive_columns() {
        let ds = points(vec![vec![0.0, 0.0], vec![0.1, 50.0], vec![5.0, 0.0]])
            .with_sensitive_features(vec!["f1".into()])
            .unwrap();
        // without the sensitive column, records 0 and 1 are mutual neighbours
        let v = knn_inconsistency(&[1.0, 1.0, 0.0], &ds, &KnnSpec { k: 1 }).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_hand_cases() {
        assert_eq!(wasserstein1(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(wasserstein1(&[3.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let a = [0.25, -1.5, 3.0, 0.5];
        let shifted: Vec<f64> = a.iter().map(|x| x + 0.75).collect();
        assert_eq!(wasserstein1(&a, &shifted).unwrap(), 0.75);
        // unequal sizes: quantile functions {0 on (0,1/2], 1 on (1/2,1)} vs {0}
        assert_eq!(wasserstein1(&[0.0, 1.0], &[0.0]).unwrap(), 0.5);
        // {0,1,2} vs {0,2}: |q_a - q_b| is 1 on (1/3, 1/2] and on (1/2, 2/3]
        assert!((wasserstein1(&[0.0, 1.0, 2.0], &[0.0, 2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(wasserstein1(&[], &[1.0]).is_err());
    }

    #[test]
    fn duplicate_group_has_zero_distance() {
        let rows = vec![vec![0.3, 1.0], vec![-2.0, 4.0], vec![0.3, 1.0], vec![-2.0, 4.0]];
        let ds = Dataset::new(
            rows,
            vec!["a".into(), "b".into()],
            vec![0; 4],
            vec![ProtectedAttr::new("g", ["x", "x", "y", "y"].map(String::from).to_vec())],
        )
        .unwrap();
        let gi = GroupIndex::new(&ds, &["g"]).unwrap();
        let dist = group_feature_distance(&ds, &gi).unwrap();
        assert_eq!(dist.group_w1_per_feature, vec![0.0, 0.0]);
        assert_eq!(dist.group_w1_mean, 0.0);
    }

    #[test]
    fn group_distance_needs_two_groups() {
        let ds = points(vec![vec![0.0], vec![1.0]]);
        let gi = GroupIndex::new(&ds, &["g"]).unwrap();
        assert!(matches!(group_feature_distance(&ds, &gi), Err(Error::Unsupported(_))));
    }

    #[test]
    fn lipschitz_violation_hand_cases() {
        let d = DistanceMatrix::new(vec![vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        let v = lipschitz_violations(&[1.0, 0.0], &d).unwrap();
        assert_eq!(v.count, 1);
        assert_eq!(v.max_excess, 0.5);
        let v = lipschitz_violations(&[0.3, 0.3], &d).unwrap();
        assert_eq!((v.count, v.max_excess), (0, 0.0));
        assert!(lipschitz_violations(&[0.3], &d).is_err());
    }

    proptest! {
        #[test]
        fn binary_statistical_distance_is_probability_gap(px in 0.0..=1.0f64, py in 0.0..=1.0f64) {
            prop_assert!((outcome_distance(px, py) - (px - py).abs()).abs() < 1e-15);
        }

        #[test]
        fn wasserstein_is_a_metric(
            a in prop::collection::vec(-10.0..10.0f64, 1..12),
            b in prop::collection::vec(-10.0..10.0f64, 1..12),
            c in prop::collection::vec(-10.0..10.0f64, 1..12),
        ) {
            let ab = wasserstein1(&a, &b).unwrap();
            let ba = wasserstein1(&b, &a).unwrap();
            let ac = wasserstein1(&a, &c).unwrap();
            let cb = wasserstein1(&c, &b).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab <= ac + cb + 1e-12);
            prop_assert!(ab >= 0.0);
        }

        #[test]
        fn knn_in_unit_interval_and_permutation_invariant(
            pts in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, 0.0..=1.0f64), 4..20),
            k in 1usize..3,
            rot in 0usize..20,
        ) {
            let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0, p.1]).collect();
            let values: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let base = knn_inconsistency(&values, &points(rows.clone()), &KnnSpec { k }).unwrap();
            prop_assert!((0.0..=1.0).contains(&base));
            let n = rows.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let rows_p: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
            let values_p: Vec<f64> = perm.iter().map(|&i| values[i]).collect();
            let permuted = knn_inconsistency(&values_p, &points(rows_p), &KnnSpec { k }).unwrap();
            prop_assert!((base - permuted).abs() < 1e-12);
        }
    }
}
