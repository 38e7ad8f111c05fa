//! Individual fairness as a linear program over binary-outcome probabilities.
//!
//! Each individual `x` receives outcome 1 with probability `p[x]`. With two
//! outcomes the statistical distance between the outcome distributions of
//! `x` and `y` is `|p[x] - p[y]|`, so the Lipschitz condition is a pair of
//! linear inequalities per pair of individuals.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::lp::{simplex_solve, Constraint, LinearProgram, LpStatus, Sense};

/// Largest instance accepted by the solvers.
pub const MAX_INDIVIDUALS: usize = 200;

/// Symmetric, non-negative distance matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "distance matrix row",
                    expected: n,
                    actual: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Validation(format!(
                        "distance d({i},{j}) = {v} must be finite and non-negative"
                    )));
                }
            }
            if row[i] != 0.0 {
                return Err(Error::Validation(format!("distance d({i},{i}) must be 0")));
            }
            data.extend_from_slice(row);
        }
        for i in 0..n {
            for j in i + 1..n {
                if (data[i * n + j] - data[j * n + i]).abs() > 1e-12 {
                    return Err(Error::Validation(format!(
                        "distance matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    /// Euclidean distance over the non-sensitive feature columns, rescaled
    /// so the median pairwise distance is 0.5. Callers standardize first.
    pub fn from_features(ds: &Dataset) -> Result<Self> {
        let n = ds.n_records();
        let columns = ds.non_sensitive_columns();
        let mut data = vec![0.0; n * n];
        let mut pairwise = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (ds.row(i), ds.row(j));
                let d = columns
                    .iter()
                    .map(|&c| (a[c] - b[c]) * (a[c] - b[c]))
                    .sum::<f64>()
                    .sqrt();
                data[i * n + j] = d;
                data[j * n + i] = d;
                pairwise.push(d);
            }
        }
        if !pairwise.is_empty() {
            pairwise.sort_unstable_by(f64::total_cmp);
            let k = pairwise.len();
            let median = if k % 2 == 1 {
                pairwise[k / 2]
            } else {
                0.5 * (pairwise[k / 2 - 1] + pairwise[k / 2])
            };
            if median > 0.0 {
                let scale = 0.5 / median;
                data.iter_mut().for_each(|d| *d *= scale);
            }
        }
        Ok(Self { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Number of ordered triples with `d(i,k) > d(i,j) + d(j,k)`.
    pub fn triangle_violations(&self) -> usize {
        let n = self.n;
        let mut count = 0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if self.get(i, k) > self.get(i, j) + self.get(j, k) + 1e-12 {
                        count += 1;
                    }
                }
            }
        }
        count
    }
}

/// Distances and per-individual losses `(L(x, 0), L(x, 1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzInstance {
    pub d: DistanceMatrix,
    pub loss: Vec<[f64; 2]>,
}

impl LipschitzInstance {
    pub fn new(d: DistanceMatrix, loss: Vec<[f64; 2]>) -> Result<Self> {
        if loss.len() != d.len() {
            return Err(Error::DimensionMismatch {
                what: "losses vs distance matrix",
                expected: d.len(),
                actual: loss.len(),
            });
        }
        if d.len() > MAX_INDIVIDUALS {
            return Err(Error::Unsupported(format!(
                "instance has {} individuals; the exact solver is capped at {MAX_INDIVIDUALS}",
                d.len()
            )));
        }
        if loss.iter().flatten().any(|l| !l.is_finite()) {
            return Err(Error::Validation("losses must be finite".into()));
        }
        Ok(Self { d, loss })
    }

    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    /// Expected loss `sum_x p[x] L(x,1) + (1 - p[x]) L(x,0)`.
    pub fn expected_loss(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(&self.loss)
            .map(|(&px, l)| px * l[1] + (1.0 - px) * l[0])
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzSolution {
    pub p: Vec<f64>,
    pub objective: f64,
    pub warnings: Vec<String>,
}

/// Group membership for the relaxed program: `true` marks group S.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParitySpec {
    pub in_s: Vec<bool>,
    pub epsilon: f64,
}

impl ParitySpec {
    pub fn new(in_s: Vec<bool>, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::Validation(format!("epsilon must be >= 0, got {epsilon}")));
        }
        let s = in_s.iter().filter(|&&b| b).count();
        if s == 0 || s == in_s.len() {
            return Err(Error::Validation("both groups S and T must be non-empty".into()));
        }
        Ok(Self { in_s, epsilon })
    }

    pub fn same_group(&self, x: usize, y: usize) -> bool {
        self.in_s[x] == self.in_s[y]
    }

    /// `mean_S p - mean_T p`.
    pub fn parity_bias(&self, p: &[f64]) -> f64 {
        let (mut s, mut ns, mut t, mut nt) = (0.0, 0.0, 0.0, 0.0);
        for (&px, &in_s) in p.iter().zip(&self.in_s) {
            if in_s {
                s += px;
                ns += 1.0;
            } else {
                t += px;
                nt += 1.0;
            }
        }
        s / ns - t / nt
    }
}

/// Builds the program over `p in [0,1]^n` minimizing expected loss, with a
/// Lipschitz pair of rows for every pair accepted by `constrained`.
fn base_program(inst: &LipschitzInstance, constrained: impl Fn(usize, usize) -> bool) -> LinearProgram {
    let n = inst.len();
    // expected loss = sum L0 + sum p (L1 - L0); the constant is added back later
    let objective = inst.loss.iter().map(|l| l[1] - l[0]).collect();
    let mut lp = LinearProgram::new(Sense::Minimize, objective).with_bounds(vec![(0.0, 1.0); n]);
    for x in 0..n {
        for y in x + 1..n {
            let d = inst.d.get(x, y);
            // |p_x - p_y| <= 1 always holds inside the box.
            if d >= 1.0 || !constrained(x, y) {
                continue;
            }
            lp.push(Constraint::le(vec![(x, 1.0), (y, -1.0)], d));
            lp.push(Constraint::le(vec![(y, 1.0), (x, -1.0)], d));
        }
    }
    lp
}

fn solve(inst: &LipschitzInstance, lp: &LinearProgram) -> Result<LipschitzSolution> {
    let sol = simplex_solve(lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp(format!(
            "solver reported {:?} on an always-feasible program",
            sol.status
        )));
    }
    let p: Vec<f64> = sol.x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut warnings = Vec::new();
    let triangles = inst.d.triangle_violations();
    if triangles > 0 {
        warnings.push(format!(
            "distance matrix violates the triangle inequality on {triangles} ordered triple(s)"
        ));
    }
    Ok(LipschitzSolution {
        objective: inst.expected_loss(&p),
        p,
        warnings,
    })
}

/// Minimum expected loss subject to `|p[x] - p[y]| <= d(x, y)` for all pairs.
pub fn solve_lipschitz_lp(inst: &LipschitzInstance) -> Result<LipschitzSolution> {
    solve(inst, &base_program(inst, |_, _| true))
}

/// Fair affirmative action: Lipschitz rows only within S and within T, plus
/// `|mean_S p - mean_T p| <= epsilon`.
pub fn solve_fair_affirmative(inst: &LipschitzInstance, parity: &ParitySpec) -> Result<LipschitzSolution> {
    if parity.in_s.len() != inst.len() {
        return Err(Error::DimensionMismatch {
            what: "group assignment vs instance",
            expected: inst.len(),
            actual: parity.in_s.len(),
        });
    }
    let mut lp = base_program(inst, |x, y| parity.same_group(x, y));
    let n_s = parity.in_s.iter().filter(|&&b| b).count() as f64;
    let n_t = inst.len() as f64 - n_s;
    let mean_gap: Vec<(usize, f64)> = parity
        .in_s
        .iter()
        .enumerate()
        .map(|(x, &s)| (x, if s { 1.0 / n_s } else { -1.0 / n_t }))
        .collect();
    lp.push(Constraint::le(mean_gap.clone(), parity.epsilon));
    lp.push(Constraint::ge(mean_gap, -parity.epsilon));
    solve(inst, &lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::individual::{lipschitz_violations, lipschitz_violations_where};

    fn instance(d: Vec<Vec<f64>>, loss: Vec<[f64; 2]>) -> LipschitzInstance {
        LipschitzInstance::new(DistanceMatrix::new(d).unwrap(), loss).unwrap()
    }

    #[test]
    fn distance_matrix_validation() {
        assert!(DistanceMatrix::new(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(DistanceMatrix::new(vec![vec![1.0]]).is_err());
        assert!(DistanceMatrix::new(vec![vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
        assert!(DistanceMatrix::new(vec![vec![0.0, 1.0]]).is_err());
        let d = DistanceMatrix::new(vec![
            vec![0.0, 0.1, 1.0],
            vec![0.1, 0.0, 0.1],
            vec![1.0, 0.1, 0.0],
        ])
        .unwrap();
        assert_eq!(d.triangle_violations(), 2);
    }

    #[test]
    fn vacuous_constraints_pick_cheaper_outcome() {
        let inst = instance(
            vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.5], vec![2.0, 1.5, 0.0]],
            vec![[0.3, 0.9], [2.0, 0.5], [1.0, 1.0]],
        );
        let sol = solve_lipschitz_lp(&inst).unwrap();
        assert!((sol.objective - (0.3 + 0.5 + 1.0)).abs() < 1e-12);
        assert_eq!(&sol.p[..2], &[0.0, 1.0]);
    }

    #[test]
    fn zero_distance_ties_outcomes() {
        let inst = instance(vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![[2.0, 0.0], [0.0, 1.0]]);
        let sol = solve_lipschitz_lp(&inst).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!((sol.p[0] - 1.0).abs() < 1e-12 && (sol.p[1] - 1.0).abs() < 1e-12);
        assert_eq!(lipschitz_violations(&sol.p, &inst.d).unwrap().count, 0);
    }

    #[test]
    fn relaxed_program_respects_parity_and_within_group_rows() {
        let inst = instance(
            vec![
                vec![0.0, 0.2, 0.0, 0.0],
                vec![0.2, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.3],
                vec![0.0, 0.0, 0.3, 0.0],
            ],
            vec![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]],
        );
        let parity = ParitySpec::new(vec![true, true, false, false], 0.1).unwrap();
        let sol = solve_fair_affirmative(&inst, &parity).unwrap();
        assert!(parity.parity_bias(&sol.p).abs() <= 0.1 + 1e-9);
        let v = lipschitz_violations_where(&sol.p, &inst.d, |x, y| parity.same_group(x, y)).unwrap();
        assert_eq!(v.count, 0);
        // S wants 1, T wants 0: cost is 2 - 2 (mean_S - mean_T) >= 1.8
        assert!((sol.objective - 1.8).abs() < 1e-9, "{}", sol.objective);
    }

    #[test]
    fn parity_spec_validation() {
        assert!(ParitySpec::new(vec![true, true], 0.1).is_err());
        assert!(ParitySpec::new(vec![true, false], -0.1).is_err());
    }

    #[test]
    fn feature_distances_have_median_half() {
        use crate::dataset::ProtectedAttr;
        let ds = Dataset::new(
            vec![vec![0.0], vec![1.0], vec![3.0], vec![7.0]],
            vec!["x".into()],
            vec![0; 4],
            vec![ProtectedAttr::new("g", vec!["a".into(); 4])],
        )
        .unwrap();
        let d = DistanceMatrix::from_features(&ds).unwrap();
        // pairwise distances 1,3,7,2,6,4 have median 3.5
        assert!((d.get(0, 1) - 1.0 / 7.0).abs() < 1e-12);
        assert!((d.get(0, 3) - 1.0).abs() < 1e-12);
        assert_eq!(d.triangle_violations(), 0);
    }

    #[test]
    fn oversized_instances_are_rejected() {
        let n = MAX_INDIVIDUALS + 1;
        let d = DistanceMatrix::new(vec![vec![0.0; n]; n]).unwrap();
        assert!(matches!(
            LipschitzInstance::new(d, vec![[0.0, 0.0]; n]),
            Err(Error::Unsupported(_))
        ));
    }
}
