use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroupIndex};
use crate::error::{Error, Result};
use crate::groupmetrics::{check_predictions, confusion_by_group, CostSpec};
use crate::lp::{simplex_solve, Constraint, LinearProgram, LpStatus, Sense};
use crate::rng;

/// Randomized relabelling per group: a positive prediction stays positive
/// with probability `q1`; a negative one becomes positive with probability `q0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingPolicy {
    pub groups: Vec<String>,
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
}

impl MixingPolicy {
    pub fn identity(gi: &GroupIndex) -> Self {
        Self {
            groups: gi.labels(),
            q0: vec![0.0; gi.len()],
            q1: vec![1.0; gi.len()],
        }
    }
}

/// Expected rates of the mixed predictor, computed from counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingOutcome {
    pub policy: MixingPolicy,
    pub base_tpr: Vec<f64>,
    pub base_fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    /// `sum_g (alpha (1 - TPR_g) + beta FPR_g) W_g`.
    pub cost: f64,
}

pub fn mixed_rates(base_tpr: f64, base_fpr: f64, q0: f64, q1: f64) -> (f64, f64) {
    (
        q0 * (1.0 - base_tpr) + q1 * base_tpr,
        q0 * (1.0 - base_fpr) + q1 * base_fpr,
    )
}

fn outcome(policy: MixingPolicy, base_tpr: Vec<f64>, base_fpr: Vec<f64>, weights: &[f64], costs: &CostSpec) -> MixingOutcome {
    let (tpr, fpr): (Vec<f64>, Vec<f64>) = (0..weights.len())
        .map(|g| mixed_rates(base_tpr[g], base_fpr[g], policy.q0[g], policy.q1[g]))
        .unzip();
    let cost = (0..weights.len())
        .map(|g| (costs.alpha * (1.0 - tpr[g]) + costs.beta * fpr[g]) * weights[g])
        .sum();
    MixingOutcome {
        policy,
        base_tpr,
        base_fpr,
        tpr,
        fpr,
        cost,
    }
}

/// Cheapest per-group mixing whose expected TPR and FPR agree across groups.
/// Variables are `(q0_g, q1_g)` per group plus the shared targets.
pub fn equalize_odds_mixing(preds: &[u8], ds: &Dataset, gi: &GroupIndex, costs: &CostSpec) -> Result<MixingOutcome> {
    let counts = confusion_by_group(preds, ds, gi)?;
    let labels = gi.labels();
    let mut base_tpr = Vec::with_capacity(gi.len());
    let mut base_fpr = Vec::with_capacity(gi.len());
    for (c, label) in counts.iter().zip(&labels) {
        match (c.tpr(), c.fpr()) {
            (Some(t), Some(f)) => {
                base_tpr.push(t);
                base_fpr.push(f);
            }
            _ => {
                return Err(Error::Validation(format!(
                    "group {label} needs at least one positive and one negative label for mixing"
                )))
            }
        }
    }
    let weights = gi.weights();
    let identity = MixingPolicy::identity(gi);
    if gi.len() < 2 {
        return Ok(outcome(identity, base_tpr, base_fpr, weights, costs));
    }

    let k = gi.len();
    let (t_star, f_star) = (2 * k, 2 * k + 1);
    let total_w: f64 = weights.iter().sum();
    let mut objective = vec![0.0; 2 * k + 2];
    objective[t_star] = -costs.alpha * total_w;
    objective[f_star] = costs.beta * total_w;
    let mut lp = LinearProgram::new(Sense::Minimize, objective).with_bounds(vec![(0.0, 1.0); 2 * k + 2]);
    for g in 0..k {
        let (q0, q1) = (2 * g, 2 * g + 1);
        let (t, f) = (base_tpr[g], base_fpr[g]);
        lp.push(Constraint::eq(vec![(q0, 1.0 - t), (q1, t), (t_star, -1.0)], 0.0));
        lp.push(Constraint::eq(vec![(q0, 1.0 - f), (q1, f), (f_star, -1.0)], 0.0));
    }
    let sol = simplex_solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp(format!("mixing program ended {:?}", sol.status)));
    }
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    let policy = MixingPolicy {
        groups: labels,
        q0: (0..k).map(|g| clamp(sol.x[2 * g])).collect(),
        q1: (0..k).map(|g| clamp(sol.x[2 * g + 1])).collect(),
    };
    let mixed = outcome(policy, base_tpr.clone(), base_fpr.clone(), weights, costs);

    // prefer the identity when it is already fair and no worse
    let equal = |v: &[f64]| v.iter().all(|&x| (x - v[0]).abs() <= 1e-12);
    if equal(&base_tpr) && equal(&base_fpr) {
        let keep = outcome(identity, base_tpr, base_fpr, weights, costs);
        if keep.cost <= mixed.cost + 1e-12 {
            return Ok(keep);
        }
    }
    Ok(snap_targets(mixed, weights, costs))
}

/// Re-solves each group's 2x2 system against the best-conditioned
/// group's rates so the derived rates agree to rounding.
fn snap_targets(mut out: MixingOutcome, weights: &[f64], costs: &CostSpec) -> MixingOutcome {
    let k = weights.len();
    let det = |g: usize| out.base_tpr[g] - out.base_fpr[g];
    let Some(anchor) = (0..k).max_by(|&a, &b| det(a).abs().total_cmp(&det(b).abs())) else {
        return out;
    };
    let (target_t, target_f) = (out.tpr[anchor], out.fpr[anchor]);
    for g in 0..k {
        let (t, f) = (out.base_tpr[g], out.base_fpr[g]);
        let dg = t - f;
        if g == anchor || dg.abs() < 1e-9 {
            continue;
        }
        // q0 (1 - t) + q1 t = T ; q0 (1 - f) + q1 f = F
        let q1 = (target_t * (1.0 - f) - target_f * (1.0 - t)) / dg;
        let q0 = (target_f * t - target_t * f) / dg;
        if (-1e-9..=1.0 + 1e-9).contains(&q0) && (-1e-9..=1.0 + 1e-9).contains(&q1) {
            out.policy.q0[g] = q0.clamp(0.0, 1.0);
            out.policy.q1[g] = q1.clamp(0.0, 1.0);
        }
    }
    let policy = out.policy.clone();
    outcome(policy, out.base_tpr, out.base_fpr, weights, costs)
}

/// Samples mixed predictions from the seeded stream `"mixing"`.
pub fn apply_mixing(policy: &MixingPolicy, preds: &[u8], gi: &GroupIndex, seed: u64) -> Result<Vec<u8>> {
    check_predictions(preds, gi)?;
    if policy.groups != gi.labels() {
        return Err(Error::Validation(format!(
            "mixing policy groups {:?} do not match data groups {:?}",
            policy.groups,
            gi.labels()
        )));
    }
    let mut rng = rng::stream(seed, "mixing");
    Ok(preds
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let g = gi.group_of(i);
            let q = if p == 1 { policy.q1[g] } else { policy.q0[g] };
            u8::from(rng.random::<f64>() < q)
        })
        .collect())
}
