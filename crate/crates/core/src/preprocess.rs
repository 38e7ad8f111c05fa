//! Pre-processing repairs: unawareness, suppression of proxies, reweighting,
//! label massaging and the rank-preserving disparate-impact remover.

use serde::Serialize;

use crate::dataset::{Dataset, GroupIndex};
use crate::error::{Error, Result};
use crate::groupmetrics::{Metric, DEFAULT_TAU_DI};

/// Default `|rho|` at or above which a feature counts as a group proxy.
pub const DEFAULT_RHO_THRESHOLD: f64 = 0.4;

/// Removes feature columns flagged as sensitive. Protected attributes stay
/// attached for auditing.
pub fn drop_sensitive(ds: &Dataset) -> Dataset {
    ds.select_features(&ds.non_sensitive_columns())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureCorrelation {
    pub feature: String,
    pub rho: Metric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suppression {
    pub dataset: Dataset,
    pub dropped: Vec<String>,
    pub correlations: Vec<FeatureCorrelation>,
    pub warnings: Vec<String>,
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Drops every feature whose |Pearson correlation| with the 0/1 indicator
/// of the second group reaches `rho_threshold`. Constant features are kept.
pub fn suppress_correlated(ds: &Dataset, gi: &GroupIndex, rho_threshold: f64) -> Result<Suppression> {
    gi.require_two_groups()?;
    if !(rho_threshold > 0.0 && rho_threshold <= 1.0) {
        return Err(Error::Validation(format!(
            "rho threshold must lie in (0, 1], got {rho_threshold}"
        )));
    }
    let indicator: Vec<f64> = (0..ds.n_records())
        .map(|i| gi.group_of(i) as f64)
        .collect();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    let mut correlations = Vec::new();
    let mut warnings = Vec::new();
    for (j, name) in ds.feature_names().iter().enumerate() {
        let rho = pearson(&ds.column(j), &indicator);
        match rho {
            // Rounding can leave a perfect correlation a few ulps below 1.
            Some(r) if r.abs() >= rho_threshold || (r.abs() - 1.0).abs() < 1e-12 => {
                dropped.push(name.clone())
            }
            Some(_) => keep.push(j),
            None => {
                warnings.push(format!("feature {name} is constant; correlation undefined, kept"));
                keep.push(j);
            }
        }
        correlations.push(FeatureCorrelation {
            feature: name.clone(),
            rho: rho.into(),
        });
    }
    Ok(Suppression {
        dataset: ds.select_features(&keep),
        dropped,
        correlations,
        warnings,
    })
}

/// Per-record weights `P(S=s) P(Y=y) / P(S=s, Y=y)` from empirical counts,
/// which make group membership and label independent in the weighted data.
pub fn reweight(ds: &Dataset, gi: &GroupIndex) -> Result<Vec<f64>> {
    gi.check_len("dataset records", ds.n_records())?;
    let n = ds.n_records() as f64;
    let mut cell = vec![[0usize; 2]; gi.len()];
    for (i, &y) in ds.labels().iter().enumerate() {
        cell[gi.group_of(i)][usize::from(y)] += 1;
    }
    let label_totals = [0, 1].map(|y| cell.iter().map(|c| c[y]).sum::<usize>() as f64);
    for (g, c) in cell.iter().enumerate() {
        for y in 0..2 {
            if c[y] == 0 {
                return Err(Error::Validation(format!(
                    "cannot reweight: group {} has no records with label {y}",
                    gi.groups()[g].label()
                )));
            }
        }
    }
    Ok((0..ds.n_records())
        .map(|i| {
            let c = &cell[gi.group_of(i)];
            let y = usize::from(ds.labels()[i]);
            let group_total = (c[0] + c[1]) as f64;
            group_total * label_totals[y] / (n * c[y] as f64)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassageLog {
    pub pairs: usize,
    /// Unprivileged records relabelled 0 -> 1.
    pub promoted: Vec<usize>,
    /// Privileged records relabelled 1 -> 0.
    pub demoted: Vec<usize>,
    pub positive_rate_before: [f64; 2],
    pub positive_rate_after: [f64; 2],
}

/// Relabels the `M` highest-scored negative unprivileged records to positive
/// and the `M` lowest-scored positive privileged records to negative, where
/// `M` is the smallest number of pairs that brings the two positive rates
/// within `1 / n` of each other. Score ties go to the lower record index.
pub fn massage(ds: &Dataset, gi: &GroupIndex, scores: &[f64]) -> Result<(Dataset, MassageLog)> {
    let (u, p) = gi.privilege_pair()?;
    gi.check_len("scores", scores.len())?;
    let labels = ds.labels();
    let members = |g: usize, label: u8| -> Vec<usize> {
        gi.groups()[g]
            .members
            .iter()
            .copied()
            .filter(|&i| labels[i] == label)
            .collect()
    };
    let mut neg_u = members(u, 0);
    let mut pos_p = members(p, 1);
    let n = ds.n_records() as i128;
    let n_u = gi.groups()[u].len() as i128;
    let n_p = gi.groups()[p].len() as i128;
    let pos_u0 = n_u - neg_u.len() as i128;
    let pos_p0 = pos_p.len() as i128;

    // |r_u - r_p| <= 1/n  <=>  |(pos_u + M) n_p - (pos_p - M) n_u| n <= n_u n_p
    let gap_num = |m: i128| ((pos_u0 + m) * n_p - (pos_p0 - m) * n_u).abs();
    let available = neg_u.len().min(pos_p.len());
    let pairs = (0..=available as i128)
        .find(|&m| gap_num(m) * n <= n_u * n_p)
        .ok_or_else(|| {
            let best = (0..=available as i128).map(gap_num).min().unwrap_or(0);
            Error::MassageInfeasible {
                available,
                residual_gap: best as f64 / (n_u * n_p) as f64,
            }
        })? as usize;

    neg_u.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    pos_p.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let promoted = neg_u[..pairs].to_vec();
    let demoted = pos_p[..pairs].to_vec();
    let mut new_labels = labels.to_vec();
    promoted.iter().for_each(|&i| new_labels[i] = 1);
    demoted.iter().for_each(|&i| new_labels[i] = 0);

    let m = pairs as i128;
    let rate = |pos: i128, size: i128| pos as f64 / size as f64;
    let log = MassageLog {
        pairs,
        promoted,
        demoted,
        positive_rate_before: [rate(pos_u0, n_u), rate(pos_p0, n_p)],
        positive_rate_after: [rate(pos_u0 + m, n_u), rate(pos_p0 - m, n_p)],
    };
    Ok((ds.with_labels(new_labels)?, log))
}

/// Disparate-impact remover settings: the ratio threshold that defines
/// disparate impact and how far (`repair_amount` in [0, 1]) to repair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiSpec {
    pub tau_di: f64,
    pub repair_amount: f64,
}

impl Default for DiSpec {
    fn default() -> Self {
        Self {
            tau_di: DEFAULT_TAU_DI,
            repair_amount: 1.0,
        }
    }
}

impl DiSpec {
    pub fn new(tau_di: f64, repair_amount: f64) -> Result<Self> {
        if !(tau_di > 0.0 && tau_di <= 1.0) {
            return Err(Error::Validation(format!("tau_di must lie in (0, 1], got {tau_di}")));
        }
        if !(0.0..=1.0).contains(&repair_amount) {
            return Err(Error::Validation(format!(
                "repair amount must lie in [0, 1], got {repair_amount}"
            )));
        }
        Ok(Self {
            tau_di,
            repair_amount,
        })
    }
}

/// Quantile of a sorted sample at the rational level `num / den`, using the
/// inverse empirical CDF and averaging where the CDF is flat.
fn quantile(sorted: &[f64], num: u128, den: u128) -> f64 {
    let m = sorted.len() as u128;
    let h_num = num * m; // h = q * m = h_num / den
    let k = h_num / den;
    let last = sorted.len() - 1;
    if h_num % den == 0 {
        // h is an integer k: average the k-th and (k+1)-th order statistics
        let lo = (k as usize).saturating_sub(1).min(last);
        let hi = (k as usize).min(last);
        0.5 * (sorted[lo] + sorted[hi])
    } else {
        sorted[(k as usize).min(last)]
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Moves every feature value toward the across-group median of the group
/// quantile functions at the value's within-group quantile:
/// `x' = (1 - lambda) x + lambda T(q)`. Equal values share the averaged
/// rank, so within-group order is preserved.
pub fn di_repair(ds: &Dataset, gi: &GroupIndex, spec: &DiSpec) -> Result<Dataset> {
    DiSpec::new(spec.tau_di, spec.repair_amount)?;
    gi.check_len("dataset records", ds.n_records())?;
    let lambda = spec.repair_amount;
    if lambda == 0.0 {
        return Ok(ds.clone());
    }
    let d = ds.n_features();
    let mut repaired = ds.flat_features().to_vec();
    for j in 0..d {
        let sorted: Vec<Vec<f64>> = gi
            .groups()
            .iter()
            .map(|g| {
                let mut v: Vec<f64> = g.members.iter().map(|&i| ds.row(i)[j]).collect();
                v.sort_unstable_by(f64::total_cmp);
                v
            })
            .collect();
        for (g, group) in gi.groups().iter().enumerate() {
            let own = &sorted[g];
            let m_g = own.len() as u128;
            for &i in &group.members {
                let x = ds.row(i)[j];
                // ranks occupied by x within its group (0-based, inclusive)
                let r_lo = own.partition_point(|&v| v < x) as u128;
                let r_hi = own.partition_point(|&v| v <= x) as u128 - 1;
                // mid-rank level q = (r_lo + r_hi + 1) / (2 m_g)
                let (num, den) = (r_lo + r_hi + 1, 2 * m_g);
                let mut at_q: Vec<f64> = sorted.iter().map(|s| quantile(s, num, den)).collect();
                let target = median(&mut at_q);
                repaired[i * d + j] = (1.0 - lambda) * x + lambda * target;
            }
        }
    }
    Ok(ds.with_flat_features(repaired))
}
