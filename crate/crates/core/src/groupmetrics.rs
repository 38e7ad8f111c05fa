//! Group fairness measures: confusion counts per group, parity gaps, the
//! disparate-impact ratio, the cost-weighted error loss, and intersectional
//! subgroup audits.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::dataset::{Dataset, GroupIndex};
use crate::error::{Error, Result};

/// Version tag carried by every serialized report.
pub const REPORT_VERSION: u32 = 1;

/// Default disparate-impact threshold (the four-fifths rule).
pub const DEFAULT_TAU_DI: f64 = 0.8;

/// A rate or gap that may be undefined because a denominator is empty.
/// Serializes as a number or as the string `"undefined"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined,
}

impl Metric {
    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Metric::Value(_))
    }
}

impl From<Option<f64>> for Metric {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Metric::Undefined, Metric::Value)
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Metric::Value(v) => s.serialize_f64(*v),
            Metric::Undefined => s.serialize_str("undefined"),
        }
    }
}

/// Confusion counts of one group. Counts are sums of record weights, which
/// equal plain counts for unweighted data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ConfusionCounts {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

impl ConfusionCounts {
    pub fn add(&mut self, label: u8, pred: u8, weight: f64) {
        match (label, pred) {
            (1, 1) => self.tp += weight,
            (1, _) => self.fn_ += weight,
            (_, 1) => self.fp += weight,
            _ => self.tn += weight,
        }
    }

    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> f64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> f64 {
        self.fp + self.tn
    }

    /// Miss rate `fn / (fn + tp)`.
    pub fn fnr(&self) -> Option<f64> {
        ratio(self.fn_, self.positives())
    }

    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.negatives())
    }

    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.positives())
    }

    /// `P(y = 1 | prediction = 1)`.
    pub fn ppv(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `P(prediction = 1)`.
    pub fn positive_rate(&self) -> Option<f64> {
        ratio(self.tp + self.fp, self.total())
    }
}

/// Loss per false negative (`alpha`) and per false positive (`beta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl CostSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(alpha) && ok(beta) && alpha + beta > 0.0) {
            return Err(Error::Validation(format!(
                "costs must be non-negative with a positive sum, got alpha={alpha} beta={beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self {
            alpha: self.alpha * factor,
            beta: self.beta * factor,
        }
    }
}

pub(crate) fn check_predictions(preds: &[u8], gi: &GroupIndex) -> Result<()> {
    gi.check_len("predictions", preds.len())?;
    match preds.iter().position(|&p| p > 1) {
        Some(i) => Err(Error::InvalidRecord {
            row: i + 1,
            message: format!("prediction {} is not 0 or 1", preds[i]),
        }),
        None => Ok(()),
    }
}

/// Confusion counts per group, aligned with `gi.groups()`.
pub fn confusion_by_group(preds: &[u8], ds: &Dataset, gi: &GroupIndex) -> Result<Vec<ConfusionCounts>> {
    check_predictions(preds, gi)?;
    gi.check_len("dataset records", ds.n_records())?;
    let mut counts = vec![ConfusionCounts::default(); gi.len()];
    for (i, (&y, &p)) in ds.labels().iter().zip(preds).enumerate() {
        counts[gi.group_of(i)].add(y, p, ds.weight(i));
    }
    Ok(counts)
}

/// `sum_g (alpha * FNR_g + beta * FPR_g) * W_g`; undefined rates contribute 0.
pub fn weighted_error_loss(counts: &[ConfusionCounts], gi: &GroupIndex, costs: &CostSpec) -> f64 {
    counts
        .iter()
        .zip(gi.weights())
        .map(|(c, w)| group_loss(c, *w, costs, true))
        .sum()
}

/// One group's share of the weighted loss.
pub(crate) fn group_loss(c: &ConfusionCounts, weight: f64, costs: &CostSpec, include_fp: bool) -> f64 {
    let fn_term = costs.alpha * c.fnr().unwrap_or(0.0);
    let fp_term = if include_fp {
        costs.beta * c.fpr().unwrap_or(0.0)
    } else {
        0.0
    };
    (fn_term + fp_term) * weight
}

/// Largest pairwise gap between defined values; 0 with fewer than two.
pub(crate) fn max_gap(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut seen = 0;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
        seen += 1;
    }
    if seen < 2 {
        0.0
    } else {
        hi - lo
    }
}

/// Largest pairwise miss-rate gap over groups whose miss rate is defined.
pub fn fn_gap_max(counts: &[ConfusionCounts]) -> f64 {
    max_gap(counts.iter().filter_map(ConfusionCounts::fnr))
}

/// Disparate impact is flagged when the ratio is at or below `tau_di`.
/// The comparison allows one part in 1e12 for ratios of counts that are
/// mathematically equal to the threshold.
pub fn flags_disparate_impact(dp_ratio: Metric, tau_di: f64) -> bool {
    match dp_ratio {
        Metric::Value(r) => r <= tau_di * (1.0 + 1e-12),
        Metric::Undefined => false,
    }
}

/// Per-group block of a [`FairnessReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub weight: f64,
    pub size: usize,
    pub counts: ConfusionCounts,
    pub positive_rate: Metric,
    pub tpr: Metric,
    pub fpr: Metric,
    pub fnr: Metric,
    pub ppv: Metric,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_score: Option<f64>,
}

/// All group-fairness measurements for one set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    pub report_version: u32,
    pub grouping: Vec<String>,
    /// How `dp_ratio` was oriented.
    pub dp_orientation: String,
    pub dp_ratio: Metric,
    pub tau_di: f64,
    pub disparate_impact: bool,
    pub tpr_gap: Metric,
    pub fpr_gap: Metric,
    pub eopp_gap: Metric,
    pub ppv_gap: Metric,
    pub fn_gap_max: f64,
    pub weighted_loss: f64,
    pub alpha: f64,
    pub beta: f64,
    pub per_group: BTreeMap<String, GroupSummary>,
    pub warnings: Vec<String>,
}

fn rate_gap(
    name: &str,
    counts: &[ConfusionCounts],
    labels: &[String],
    rate: impl Fn(&ConfusionCounts) -> Option<f64>,
    warnings: &mut Vec<String>,
) -> Metric {
    let mut values = Vec::with_capacity(counts.len());
    for (c, label) in counts.iter().zip(labels) {
        match rate(c) {
            Some(v) => values.push(v),
            None => {
                warnings.push(format!("{name} undefined for group {label}: empty denominator"));
                return Metric::Undefined;
            }
        }
    }
    Metric::Value(max_gap(values))
}

/// Ratio of positive-prediction rates. With two groups and a designated
/// privileged group this is unprivileged over privileged; otherwise it is
/// the minimum over ordered pairs of groups.
pub fn dp_ratio(counts: &[ConfusionCounts], gi: &GroupIndex) -> (Metric, String) {
    let rates: Vec<Option<f64>> = counts.iter().map(ConfusionCounts::positive_rate).collect();
    let labels = gi.labels();
    if let Ok((u, p)) = gi.privilege_pair() {
        let value = match (rates[u], rates[p]) {
            (Some(ru), Some(rp)) if rp > 0.0 => Metric::Value(ru / rp),
            _ => Metric::Undefined,
        };
        return (value, format!("{} / {}", labels[u], labels[p]));
    }
    let mut best: Option<f64> = None;
    for (i, ri) in rates.iter().enumerate() {
        for (j, rj) in rates.iter().enumerate() {
            if let (true, Some(ri), Some(rj)) = (i != j, ri, rj) {
                if *rj > 0.0 {
                    let r = ri / rj;
                    best = Some(best.map_or(r, |b: f64| b.min(r)));
                }
            }
        }
    }
    let value = if gi.len() < 2 {
        Metric::Value(1.0)
    } else {
        best.into()
    };
    (value, "min over ordered group pairs".to_string())
}

/// Full parity audit of hard predictions. `scores`, when given, adds the
/// per-group mean score to the report.
pub fn parity_report(
    preds: &[u8],
    scores: Option<&[f64]>,
    ds: &Dataset,
    gi: &GroupIndex,
    costs: &CostSpec,
    tau_di: f64,
) -> Result<FairnessReport> {
    let counts = confusion_by_group(preds, ds, gi)?;
    if let Some(s) = scores {
        gi.check_len("scores", s.len())?;
    }
    let labels = gi.labels();
    let mut warnings = Vec::new();

    let (dp, orientation) = dp_ratio(&counts, gi);
    if !dp.is_defined() {
        warnings.push("dp_ratio undefined: a reference group has no positive predictions".into());
    }
    let tpr_gap = rate_gap("tpr", &counts, &labels, ConfusionCounts::tpr, &mut warnings);
    let fpr_gap = rate_gap("fpr", &counts, &labels, ConfusionCounts::fpr, &mut warnings);
    let ppv_gap = rate_gap("ppv", &counts, &labels, ConfusionCounts::ppv, &mut warnings);

    let per_group = gi
        .groups()
        .iter()
        .zip(&counts)
        .zip(gi.weights())
        .map(|((g, c), &w)| {
            let mean_score = scores.map(|s| {
                g.members.iter().map(|&i| s[i]).sum::<f64>() / g.len() as f64
            });
            let summary = GroupSummary {
                weight: w,
                size: g.len(),
                counts: *c,
                positive_rate: c.positive_rate().into(),
                tpr: c.tpr().into(),
                fpr: c.fpr().into(),
                fnr: c.fnr().into(),
                ppv: c.ppv().into(),
                mean_score,
            };
            (g.label(), summary)
        })
        .collect();

    Ok(FairnessReport {
        report_version: REPORT_VERSION,
        grouping: gi.attrs().to_vec(),
        dp_orientation: orientation,
        dp_ratio: dp,
        tau_di,
        disparate_impact: flags_disparate_impact(dp, tau_di),
        tpr_gap,
        fpr_gap,
        eopp_gap: tpr_gap,
        ppv_gap,
        fn_gap_max: fn_gap_max(&counts),
        weighted_loss: weighted_error_loss(&counts, gi, costs),
        alpha: costs.alpha,
        beta: costs.beta,
        per_group,
        warnings,
    })
}

/// One intersectional cell of a subgroup audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupCell {
    pub key: Vec<String>,
    pub size: usize,
    pub fnr: Metric,
    pub fpr: Metric,
    pub supported: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupReport {
    pub attrs: Vec<String>,
    /// Number of distinct observed values per attribute.
    pub observed_values: Vec<usize>,
    /// Size of the Cartesian product of observed values.
    pub potential_intersections: u128,
    pub nonempty: usize,
    pub supported: usize,
    pub min_support: usize,
    /// `g (g - 1) / 2` pairwise equalization constraints over supported cells.
    pub pairwise_constraints: u128,
    pub fn_gap_supported: f64,
    pub cells: Vec<SubgroupCell>,
}

/// Enumerates intersections of the given protected attributes and counts the
/// pairwise miss-rate equalization constraints they would impose.
pub fn audit_subgroups<S: AsRef<str>>(
    ds: &Dataset,
    preds: &[u8],
    attrs: &[S],
    min_support: usize,
) -> Result<SubgroupReport> {
    if attrs.is_empty() {
        return Err(Error::Validation("subgroup audit needs at least one attribute".into()));
    }
    let gi = GroupIndex::new(ds, attrs)?;
    let counts = confusion_by_group(preds, ds, &gi)?;

    let observed_values: Vec<usize> = attrs
        .iter()
        .map(|a| {
            let values = ds.protected_values(a.as_ref()).expect("checked by GroupIndex");
            values.iter().collect::<std::collections::BTreeSet<_>>().len()
        })
        .collect();
    let potential_intersections = observed_values.iter().map(|&v| v as u128).product();

    let cells: Vec<SubgroupCell> = gi
        .groups()
        .iter()
        .zip(&counts)
        .map(|(g, c)| SubgroupCell {
            key: g.key.clone(),
            size: g.len(),
            fnr: c.fnr().into(),
            fpr: c.fpr().into(),
            supported: g.len() >= min_support,
        })
        .collect();
    let supported = cells.iter().filter(|c| c.supported).count();
    let fn_gap_supported = max_gap(
        cells
            .iter()
            .filter(|c| c.supported)
            .filter_map(|c| c.fnr.value()),
    );

    Ok(SubgroupReport {
        attrs: attrs.iter().map(|a| a.as_ref().to_string()).collect(),
        observed_values,
        potential_intersections,
        nonempty: cells.len(),
        supported,
        min_support,
        pairwise_constraints: pairwise_constraints(supported as u128),
        fn_gap_supported,
        cells,
    })
}

/// Number of unordered pairs among `groups` groups.
pub fn pairwise_constraints(groups: u128) -> u128 {
    groups * groups.saturating_sub(1) / 2
}
