use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroupIndex};
use crate::error::{Error, Result};
use crate::groupmetrics::{
    group_loss, parity_report, ConfusionCounts, CostSpec, FairnessReport, Metric, DEFAULT_TAU_DI,
};

/// Default miss-rate tolerance: five percentage points.
pub const DEFAULT_TAU_FN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSpec {
    /// Largest allowed miss-rate gap between any two groups.
    pub tau_fn: f64,
    /// Whether the objective carries the `beta * FPR` term.
    pub include_fp: bool,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self {
            tau_fn: DEFAULT_TAU_FN,
            include_fp: true,
        }
    }
}

impl ToleranceSpec {
    pub fn new(tau_fn: f64, include_fp: bool) -> Result<Self> {
        if !(tau_fn.is_finite() && tau_fn >= 0.0) {
            return Err(Error::Validation(format!("tau_fn must be non-negative, got {tau_fn}")));
        }
        Ok(Self { tau_fn, include_fp })
    }
}

/// One decision threshold per group: predict 1 iff `score >= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub grouping: Vec<String>,
    pub groups: Vec<String>,
    pub thresholds: Vec<f64>,
}

impl ThresholdPolicy {
    pub fn uniform(gi: &GroupIndex, threshold: f64) -> Self {
        Self {
            grouping: gi.attrs().to_vec(),
            groups: gi.labels(),
            thresholds: vec![threshold; gi.len()],
        }
    }
}

/// Applies `policy` to `scores`. The policy's groups must match `gi`'s.
pub fn apply_policy(policy: &ThresholdPolicy, scores: &[f64], gi: &GroupIndex) -> Result<Vec<u8>> {
    gi.check_len("scores", scores.len())?;
    if policy.groups != gi.labels() || policy.grouping != gi.attrs() {
        return Err(Error::Validation(format!(
            "policy groups {:?} do not match data groups {:?}",
            policy.groups,
            gi.labels()
        )));
    }
    Ok(scores
        .iter()
        .enumerate()
        .map(|(i, &s)| u8::from(s >= policy.thresholds[gi.group_of(i)]))
        .collect())
}

fn check_scores(scores: &[f64], gi: &GroupIndex) -> Result<()> {
    gi.check_len("scores", scores.len())?;
    match scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
        Some(i) => Err(Error::InvalidRecord {
            row: i + 1,
            message: format!("score {} is outside [0, 1]", scores[i]),
        }),
        None => Ok(()),
    }
}

/// `{0, 1}` plus midpoints between consecutive distinct sorted scores.
pub fn candidate_thresholds(group_scores: &[f64]) -> Vec<f64> {
    let mut s = group_scores.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    s.dedup();
    let mut c = vec![0.0, 1.0];
    c.extend(s.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    c.sort_unstable_by(f64::total_cmp);
    c.dedup();
    c
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    threshold: f64,
    fnr: Option<f64>,
    loss: f64,
}

/// Each candidate's confusion outcome for one group, by prefix sums over
/// the group's records sorted by score.
fn group_candidates(
    members: &[usize],
    scores: &[f64],
    ds: &Dataset,
    weight: f64,
    costs: &CostSpec,
    include_fp: bool,
) -> Vec<Candidate> {
    let mut order = members.to_vec();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    // below[k] = counts of the k lowest-scored records, all predicted 0
    let mut below = vec![ConfusionCounts::default()];
    for &i in &order {
        let mut c = *below.last().unwrap();
        c.add(ds.labels()[i], 0, ds.weight(i));
        below.push(c);
    }
    let total = *below.last().unwrap();
    let sorted: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    candidate_thresholds(&sorted)
        .into_iter()
        .map(|t| {
            let k = sorted.partition_point(|&s| s < t);
            let b = below[k];
            let c = ConfusionCounts {
                tp: total.fn_ - b.fn_,
                fp: total.tn - b.tn,
                tn: b.tn,
                fn_: b.fn_,
            };
            Candidate {
                threshold: t,
                fnr: c.fnr(),
                loss: group_loss(&c, weight, costs, include_fp),
            }
        })
        .collect()
}

fn by_loss_then_threshold(a: &Candidate, b: &Candidate) -> Ordering {
    a.loss.total_cmp(&b.loss).then(a.threshold.total_cmp(&b.threshold))
}

/// Result of one tolerance-bounded solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSolution {
    pub policy: ThresholdPolicy,
    /// Objective value `sum_g (alpha FNR_g + [include_fp] beta FPR_g) W_g`.
    pub loss: f64,
    pub fn_gap: f64,
    pub fnr: Vec<Metric>,
}

struct Prepared {
    candidates: Vec<Vec<Candidate>>,
    constrained: Vec<usize>,
    levels: Vec<f64>,
}

fn prepare(scores: &[f64], ds: &Dataset, gi: &GroupIndex, costs: &CostSpec, include_fp: bool) -> Result<Prepared> {
    check_scores(scores, gi)?;
    gi.check_len("dataset records", ds.n_records())?;
    let candidates: Vec<Vec<Candidate>> = gi
        .groups()
        .iter()
        .zip(gi.weights())
        .map(|(g, &w)| group_candidates(&g.members, scores, ds, w, costs, include_fp))
        .collect();
    // groups without positives have no miss rate and impose no constraint
    let constrained: Vec<usize> = (0..gi.len())
        .filter(|&g| candidates[g][0].fnr.is_some())
        .collect();
    let mut levels: Vec<f64> = constrained
        .iter()
        .flat_map(|&g| candidates[g].iter().filter_map(|c| c.fnr))
        .collect();
    levels.sort_unstable_by(f64::total_cmp);
    levels.dedup();
    Ok(Prepared {
        candidates,
        constrained,
        levels,
    })
}

fn solve_prepared(p: &Prepared, gi: &GroupIndex, tau_fn: f64) -> ThresholdSolution {
    let free_choice = |g: usize| *p.candidates[g].iter().min_by(|a, b| by_loss_then_threshold(a, b)).unwrap();
    let mut base: Vec<Candidate> = (0..gi.len()).map(free_choice).collect();

    // Any feasible choice has its smallest miss rate at some achievable
    // level L and every other within [L, L + tau]; scanning windows anchored
    // at each level therefore covers the whole feasible set.
    let mut best: Option<(f64, f64, Vec<Candidate>)> = None;
    for &low in &p.levels {
        let mut pick = Vec::with_capacity(p.constrained.len());
        for &g in &p.constrained {
            let choice = p.candidates[g]
                .iter()
                .filter(|c| c.fnr.is_some_and(|f| f >= low && f - low <= tau_fn))
                .min_by(|a, b| by_loss_then_threshold(a, b));
            match choice {
                Some(c) => pick.push(*c),
                None => break,
            }
        }
        if pick.len() < p.constrained.len() {
            continue;
        }
        for (&g, c) in p.constrained.iter().zip(&pick) {
            base[g] = *c;
        }
        let loss: f64 = base.iter().map(|c| c.loss).sum();
        let fnrs = pick.iter().filter_map(|c| c.fnr);
        let gap = fnrs.clone().fold(f64::NEG_INFINITY, f64::max) - fnrs.fold(f64::INFINITY, f64::min);
        let better = match &best {
            None => true,
            Some((bl, bg, bc)) => loss
                .total_cmp(bl)
                .then(gap.total_cmp(bg))
                .then_with(|| {
                    base.iter()
                        .map(|c| c.threshold)
                        .partial_cmp(bc.iter().map(|c| c.threshold))
                        .unwrap_or(Ordering::Equal)
                })
                .is_lt(),
        };
        if better {
            best = Some((loss, gap, base.clone()));
        }
    }
    let (loss, gap, chosen) = match best {
        Some(b) => b,
        // no constrained groups: every group takes its free optimum
        None => (base.iter().map(|c| c.loss).sum(), 0.0, base),
    };
    ThresholdSolution {
        policy: ThresholdPolicy {
            grouping: gi.attrs().to_vec(),
            groups: gi.labels(),
            thresholds: chosen.iter().map(|c| c.threshold).collect(),
        },
        loss,
        fn_gap: if p.constrained.len() < 2 { 0.0 } else { gap },
        fnr: chosen.iter().map(|c| c.fnr.into()).collect(),
    }
}

/// Minimum-loss per-group thresholds subject to every pairwise miss-rate gap
/// being at most `tol.tau_fn`. Exact over the candidate grid; ties go to the
/// smaller gap, then the lexicographically smaller threshold vector among
/// window-optimal choices.
pub fn solve_thresholds(
    scores: &[f64],
    ds: &Dataset,
    gi: &GroupIndex,
    costs: &CostSpec,
    tol: &ToleranceSpec,
) -> Result<ThresholdSolution> {
    ToleranceSpec::new(tol.tau_fn, tol.include_fp)?;
    let prepared = prepare(scores, ds, gi, costs, tol.include_fp)?;
    Ok(solve_prepared(&prepared, gi, tol.tau_fn))
}

/// [`solve_thresholds`] plus a full audit of the resulting predictions.
/// The report's `weighted_loss` always includes the false-positive term.
pub fn optimize_thresholds(
    scores: &[f64],
    ds: &Dataset,
    gi: &GroupIndex,
    costs: &CostSpec,
    tol: &ToleranceSpec,
) -> Result<(ThresholdPolicy, FairnessReport)> {
    let solution = solve_thresholds(scores, ds, gi, costs, tol)?;
    let preds = apply_policy(&solution.policy, scores, gi)?;
    let report = parity_report(&preds, Some(scores), ds, gi, costs, DEFAULT_TAU_DI)?;
    Ok((solution.policy, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub tau: f64,
    pub loss: f64,
    pub fn_gap: f64,
    pub fnr: Vec<Metric>,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub groups: Vec<String>,
    pub include_fp: bool,
    pub rows: Vec<SweepRow>,
}

/// One solve per tolerance, rows in input order. `taus` must be non-empty
/// and ascending.
pub fn sweep_tau(
    scores: &[f64],
    ds: &Dataset,
    gi: &GroupIndex,
    costs: &CostSpec,
    taus: &[f64],
    include_fp: bool,
) -> Result<SweepResult> {
    if taus.is_empty() {
        return Err(Error::Validation("tau list is empty".into()));
    }
    for &t in taus {
        ToleranceSpec::new(t, include_fp)?;
    }
    if taus.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Validation(format!("taus must be ascending, got {taus:?}")));
    }
    let prepared = prepare(scores, ds, gi, costs, include_fp)?;
    let rows = taus
        .par_iter()
        .map(|&tau| {
            let s = solve_prepared(&prepared, gi, tau);
            SweepRow {
                tau,
                loss: s.loss,
                fn_gap: s.fn_gap,
                fnr: s.fnr,
                thresholds: s.policy.thresholds,
            }
        })
        .collect();
    Ok(SweepResult {
        groups: gi.labels(),
        include_fp,
        rows,
    })
}

fn metric_cell(m: &Metric) -> String {
    match m {
        Metric::Value(v) => v.to_string(),
        Metric::Undefined => "undefined".into(),
    }
}

impl SweepResult {
    /// Header `tau,loss,fn_gap,t_<group>...,fnr_<group>...`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["tau".to_string(), "loss".into(), "fn_gap".into()];
        header.extend(self.groups.iter().map(|g| format!("t_{g}")));
        header.extend(self.groups.iter().map(|g| format!("fnr_{g}")));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.tau.to_string(), row.loss.to_string(), row.fn_gap.to_string()];
            rec.extend(row.thresholds.iter().map(f64::to_string));
            rec.extend(row.fnr.iter().map(metric_cell));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_writer(&self, out: &mut impl Write) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}
