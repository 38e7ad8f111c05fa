use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, GroupIndex};
use crate::error::{Error, Result};
use crate::rng;

/// Stratified train/test split over the groups formed by every protected
/// attribute. Each group contributes `round(size * test_fraction)` records
/// to the test side and must leave at least one record on each side.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let gi = GroupIndex::all_attributes(ds)?;
    let mut rng = rng::stream(seed, "split");
    let mut train = Vec::new();
    let mut test = Vec::new();
    for group in gi.groups() {
        let size = group.len();
        let n_test = (size as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test >= size {
            return Err(Error::Split {
                group: group.label(),
                size,
                fraction: test_fraction,
            });
        }
        let mut members = group.members.clone();
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Per-feature affine map fit on a training set: `(x - mean) / sd`, with
/// population standard deviation and constant features mapped to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Result<Self> {
        let n = train.n_records();
        if n == 0 {
            return Err(Error::Validation("cannot standardize on an empty dataset".into()));
        }
        let d = train.n_features();
        let mut means = vec![0.0; d];
        for row in train.rows() {
            for (m, x) in means.iter_mut().zip(row) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut sds = vec![0.0; d];
        for row in train.rows() {
            for ((s, x), m) in sds.iter_mut().zip(row).zip(&means) {
                *s += (x - m) * (x - m);
            }
        }
        sds.iter_mut().for_each(|s| *s = (*s / n as f64).sqrt());
        Ok(Self { means, sds })
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.n_features() != self.means.len() {
            return Err(Error::DimensionMismatch {
                what: "features to standardize",
                expected: self.means.len(),
                actual: ds.n_features(),
            });
        }
        let d = self.means.len();
        let features = ds
            .flat_features()
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let j = k % d;
                if self.sds[j] > 0.0 {
                    (x - self.means[j]) / self.sds[j]
                } else {
                    0.0
                }
            })
            .collect();
        Ok(ds.with_flat_features(features))
    }
}

/// Fits a [`Standardizer`] on `train` and applies it to `train` and `others`.
pub fn standardize(train: &Dataset, others: &[Dataset]) -> Result<(Dataset, Vec<Dataset>)> {
    let map = Standardizer::fit(train)?;
    let train_std = map.apply(train)?;
    let others_std = others
        .iter()
        .map(|ds| map.apply(ds))
        .collect::<Result<Vec<_>>>()?;
    Ok((train_std, others_std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ProtectedAttr;
    use std::collections::BTreeMap;

    fn balanced(n_per_group: usize) -> Dataset {
        let n = 2 * n_per_group;
        let groups = (0..n)
            .map(|i| if i % 2 == 0 { "a" } else { "b" }.to_string())
            .collect();
        Dataset::new(
            (0..n).map(|i| vec![i as f64, (i * i) as f64]).collect(),
            vec!["f".into(), "g".into()],
            (0..n).map(|i| (i % 3 == 0) as u8).collect(),
            vec![ProtectedAttr::new("s", groups)],
        )
        .unwrap()
    }

    fn row_key(ds: &Dataset, i: usize) -> String {
        format!(
            "{:?}/{}/{:?}",
            ds.row(i),
            ds.labels()[i],
            ds.protected_values("s").unwrap()[i]
        )
    }

    #[test]
    fn stratified_counts() {
        let ds = balanced(50);
        let (train, test) = split(&ds, 0.2, 1).unwrap();
        let count = |d: &Dataset, g: &str| {
            d.protected_values("s").unwrap().iter().filter(|v| *v == g).count()
        };
        for g in ["a", "b"] {
            assert!((9..=11).contains(&count(&test, g)));
            assert_eq!(count(&train, g) + count(&test, g), 50);
        }
    }

    #[test]
    fn split_is_a_partition() {
        let ds = balanced(37);
        let (train, test) = split(&ds, 0.3, 9).unwrap();
        let mut expected: BTreeMap<String, usize> = BTreeMap::new();
        for i in 0..ds.n_records() {
            *expected.entry(row_key(&ds, i)).or_default() += 1;
        }
        let mut got: BTreeMap<String, usize> = BTreeMap::new();
        for part in [&train, &test] {
            for i in 0..part.n_records() {
                *got.entry(row_key(part, i)).or_default() += 1;
            }
        }
        assert_eq!(expected, got);
        assert_eq!(split(&ds, 0.3, 9).unwrap().1, test);
    }

    #[test]
    fn tiny_group_cannot_be_split() {
        let ds = Dataset::new(
            vec![vec![0.0]; 5],
            vec!["f".into()],
            vec![0; 5],
            vec![ProtectedAttr::new(
                "s",
                ["a", "a", "a", "a", "lonely"].map(String::from).to_vec(),
            )],
        )
        .unwrap();
        let err = split(&ds, 0.5, 0).unwrap_err();
        assert!(err.to_string().contains("lonely"), "{err}");
    }

    #[test]
    fn standardize_uses_population_sd() {
        let ds = Dataset::new(
            vec![vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]],
            vec!["f".into(), "c".into()],
            vec![0, 1, 0],
            vec![ProtectedAttr::new("s", vec!["a".into(); 3])],
        )
        .unwrap();
        let (std, _) = standardize(&ds, &[]).unwrap();
        let col = std.column(0);
        for (got, want) in col.iter().zip([-1.224_744_871, 0.0, 1.224_744_871]) {
            assert!((got - want).abs() < 1e-6);
        }
        assert_eq!(std.column(1), vec![0.0; 3]);
    }

    #[test]
    fn others_use_train_statistics() {
        let train = balanced(5);
        let other = train.subset(&[0, 1]);
        let (train_std, others) = standardize(&train, std::slice::from_ref(&other)).unwrap();
        assert_eq!(others[0].row(0), train_std.row(0));
        // re-fitting on the already standardized data is not a no-op on `other`
        let (_, twice) = standardize(&others[0], std::slice::from_ref(&others[0])).unwrap();
        assert_ne!(twice[0], others[0]);
    }
}
