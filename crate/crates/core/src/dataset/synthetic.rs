use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, ProtectedAttr};
use crate::error::{Error, Result};
use crate::rng;

/// Knobs for the two-group synthetic generator.
///
/// Group A features are standard normal; group B features are normal with
/// mean `mean_shift` and variance `variance_ratio`, independently per feature.
/// Labels follow `P(y = 1) = sigmoid(x0 + c_g)` with `c_A = 0` and
/// `c_B = 4 * base_rate_offset`, so near `x0 = 0` the offset is the
/// difference in label probability between the groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_per_group: [usize; 2],
    pub mean_shift: f64,
    pub variance_ratio: f64,
    pub base_rate_offset: f64,
    pub n_features: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_per_group: [500, 500],
            mean_shift: 0.0,
            variance_ratio: 1.0,
            base_rate_offset: 0.0,
            n_features: 2,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_group.iter().any(|&n| n < 10) {
            return Err(Error::Validation(format!(
                "each group needs at least 10 records, got {:?}",
                self.n_per_group
            )));
        }
        if !(self.variance_ratio.is_finite() && self.variance_ratio > 0.0) {
            return Err(Error::Validation(format!(
                "variance_ratio must be positive, got {}",
                self.variance_ratio
            )));
        }
        if !self.mean_shift.is_finite() {
            return Err(Error::Validation("mean_shift must be finite".into()));
        }
        if !(-0.5..=0.5).contains(&self.base_rate_offset) {
            return Err(Error::Validation(format!(
                "base_rate_offset must lie in [-0.5, 0.5], got {}",
                self.base_rate_offset
            )));
        }
        if self.n_features == 0 {
            return Err(Error::Validation("n_features must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draws a two-group dataset. Group A records come first, then group B;
/// B is designated privileged. A pure function of `(spec, seed)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng::stream(seed, "synthetic");
    let [n_a, n_b] = spec.n_per_group;
    let d = spec.n_features;

    let group_a = Normal::new(0.0, 1.0).expect("unit normal");
    let group_b = Normal::new(spec.mean_shift, spec.variance_ratio.sqrt())
        .map_err(|e| Error::Validation(e.to_string()))?;
    let intercept_b = 4.0 * spec.base_rate_offset;

    let mut features = Vec::with_capacity((n_a + n_b) * d);
    let mut labels = Vec::with_capacity(n_a + n_b);
    let mut groups = Vec::with_capacity(n_a + n_b);
    for (name, count, dist, intercept) in
        [("A", n_a, group_a, 0.0), ("B", n_b, group_b, intercept_b)]
    {
        for _ in 0..count {
            let start = features.len();
            features.extend((0..d).map(|_| dist.sample(&mut rng)));
            let z = features[start] + intercept;
            let p = 1.0 / (1.0 + (-z).exp());
            labels.push(u8::from(rng.random::<f64>() < p));
            groups.push(name.to_string());
        }
    }

    let names = (0..d).map(|j| format!("x{j}")).collect();
    Ok(
        Dataset::from_flat(features, names, labels, vec![ProtectedAttr::new("group", groups)])?
            .with_label_name("y")
            .with_privileged("group", "B")?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::GroupIndex;
    use crate::individual::wasserstein1;

    fn per_feature_w1(ds: &Dataset) -> Vec<f64> {
        let gi = GroupIndex::new(ds, &["group"]).unwrap();
        (0..ds.n_features())
            .map(|j| {
                let col = ds.column(j);
                let a: Vec<f64> = gi.groups()[0].members.iter().map(|&i| col[i]).collect();
                let b: Vec<f64> = gi.groups()[1].members.iter().map(|&i| col[i]).collect();
                wasserstein1(&a, &b).unwrap()
            })
            .collect()
    }

    #[test]
    fn identical_groups_are_close_in_w1() {
        let spec = SyntheticSpec::default();
        for seed in 0..5 {
            let ds = generate_synthetic(&spec, seed).unwrap();
            for w in per_feature_w1(&ds) {
                assert!(w < 0.15, "seed {seed}: w1 {w}");
            }
        }
    }

    #[test]
    fn mean_shift_shows_up_as_w1() {
        let spec = SyntheticSpec {
            n_per_group: [1000, 1000],
            mean_shift: 2.0,
            ..SyntheticSpec::default()
        };
        for seed in 0..5 {
            let ds = generate_synthetic(&spec, seed).unwrap();
            for w in per_feature_w1(&ds) {
                assert!((1.6..=2.4).contains(&w), "seed {seed}: w1 {w}");
            }
        }
    }

    #[test]
    fn deterministic_in_spec_and_seed() {
        let spec = SyntheticSpec {
            mean_shift: 1.0,
            base_rate_offset: 0.2,
            ..SyntheticSpec::default()
        };
        let a = generate_synthetic(&spec, 3).unwrap();
        let b = generate_synthetic(&spec, 3).unwrap();
        let c = generate_synthetic(&spec, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn base_rate_offset_moves_group_b_rate() {
        let spec = |offset| SyntheticSpec {
            n_per_group: [4000, 4000],
            base_rate_offset: offset,
            n_features: 1,
            ..SyntheticSpec::default()
        };
        let rate_b = |ds: &Dataset| {
            ds.labels()[4000..].iter().map(|&y| f64::from(y)).sum::<f64>() / 4000.0
        };
        let low = rate_b(&generate_synthetic(&spec(-0.2), 1).unwrap());
        let high = rate_b(&generate_synthetic(&spec(0.2), 1).unwrap());
        assert!(high - low > 0.3, "{low} {high}");
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = [
            SyntheticSpec { n_per_group: [9, 100], ..Default::default() },
            SyntheticSpec { variance_ratio: 0.0, ..Default::default() },
            SyntheticSpec { base_rate_offset: 0.6, ..Default::default() },
            SyntheticSpec { n_features: 0, ..Default::default() },
        ];
        for spec in bad {
            assert!(generate_synthetic(&spec, 0).is_err(), "{spec:?}");
        }
    }
}
