use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroupIndex};
use crate::error::{Error, Result};

/// Confidence level for reject-option classification; the critical band is
/// `[1 - theta, theta]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocSpec {
    pub theta: f64,
}

impl RocSpec {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.5 && theta <= 1.0) {
            return Err(Error::Validation(format!("theta must lie in (0.5, 1], got {theta}")));
        }
        Ok(Self { theta })
    }
}

/// Scores above `theta` predict 1, below `1 - theta` predict 0; inside the
/// band (boundaries included) the unprivileged group gets 1 and every other
/// group 0.
pub fn roc_reject_option(scores: &[f64], ds: &Dataset, gi: &GroupIndex, spec: &RocSpec) -> Result<Vec<u8>> {
    let spec = RocSpec::new(spec.theta)?;
    gi.check_len("scores", scores.len())?;
    gi.check_len("dataset records", ds.n_records())?;
    let (unprivileged, _) = gi.privilege_pair()?;
    Ok(scores
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if s > spec.theta {
                1
            } else if 1.0 - s > spec.theta {
                0
            } else {
                u8::from(gi.group_of(i) == unprivileged)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::two_groups;

    #[test]
    fn band_favours_unprivileged() {
        let ds = two_groups(&[0, 0, 0], &[0, 0, 0]);
        let gi = GroupIndex::new(&ds, &["group"]).unwrap();
        let scores = [0.6, 0.3, 0.9, 0.6, 0.2, 0.9];
        let preds = roc_reject_option(&scores, &ds, &gi, &RocSpec::new(0.7).unwrap()).unwrap();
        assert_eq!(preds, vec![1, 1, 1, 0, 0, 1]);
    }

    #[test]
    fn narrow_band_is_plain_thresholding() {
        let ds = two_groups(&[0; 4], &[0; 4]);
        let gi = GroupIndex::new(&ds, &["group"]).unwrap();
        let scores = [0.1, 0.49, 0.51, 0.99, 0.0, 0.499, 0.501, 1.0];
        let theta = 0.5 + 1e-9;
        let preds = roc_reject_option(&scores, &ds, &gi, &RocSpec::new(theta).unwrap()).unwrap();
        let plain: Vec<u8> = scores.iter().map(|&s| u8::from(s >= 0.5)).collect();
        assert_eq!(preds, plain);
    }

    #[test]
    fn theta_outside_range_is_rejected() {
        for theta in [0.5, 0.3, 1.01, f64::NAN] {
            assert!(RocSpec::new(theta).is_err());
        }
        assert!(RocSpec::new(1.0).is_ok());
    }

    #[test]
    fn requires_designated_privilege() {
        let ds = two_groups(&[0, 1], &[1, 0]);
        let plain = crate::dataset::Dataset::new(
            ds.rows().map(<[f64]>::to_vec).collect(),
            ds.feature_names().to_vec(),
            ds.labels().to_vec(),
            ds.protected().to_vec(),
        )
        .unwrap();
        let gi = GroupIndex::new(&plain, &["group"]).unwrap();
        assert!(roc_reject_option(&[0.5; 4], &plain, &gi, &RocSpec { theta: 0.7 }).is_err());
    }
}
