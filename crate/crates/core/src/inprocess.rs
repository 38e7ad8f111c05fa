//! Logistic regression trained by full-batch gradient descent, optionally
//! penalizing the squared gap between the two groups' mean scores.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroupIndex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub iterations: usize,
    pub lambda_fair: f64,
    pub l2: f64,
    /// Recorded for provenance; initialization is always zero.
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            iterations: 1000,
            lambda_fair: 0.0,
            l2: 0.0,
            seed: 0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Validation(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Validation("iterations must be at least 1".into()));
        }
        for (name, v) in [("lambda_fair", self.lambda_fair), ("l2", self.l2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub spec: TrainSpec,
}

impl Model {
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(linear(&self.coefficients, self.intercept, x))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn linear(w: &[f64], b: f64, x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b
}

/// Objective value with gradients for the coefficients and the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub grad_w: Vec<f64>,
    pub grad_b: f64,
}

fn record_weights<'a>(ds: &'a Dataset, weights: Option<&'a [f64]>) -> Result<Option<&'a [f64]>> {
    let weights = weights.or(ds.weights());
    if let Some(w) = weights {
        if w.len() != ds.n_records() {
            return Err(Error::DimensionMismatch {
                what: "record weights",
                expected: ds.n_records(),
                actual: w.len(),
            });
        }
        if w.iter().any(|&x| !(x.is_finite() && x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Validation(
                "record weights must be non-negative with a positive sum".into(),
            ));
        }
    }
    Ok(weights)
}

/// `J = sum_i v_i BCE_i / sum_i v_i + l2 |w|^2 + lambda_fair (mean_A s - mean_B s)^2`
/// where `v` are the record weights (explicit, else the dataset's, else 1),
/// the intercept is not penalized and the group means are unweighted.
pub fn objective_and_gradient(
    ds: &Dataset,
    gi: &GroupIndex,
    spec: &TrainSpec,
    weights: Option<&[f64]>,
    w: &[f64],
    b: f64,
) -> Result<Evaluation> {
    if w.len() != ds.n_features() {
        return Err(Error::DimensionMismatch {
            what: "coefficients",
            expected: ds.n_features(),
            actual: w.len(),
        });
    }
    gi.check_len("dataset records", ds.n_records())?;
    let weights = record_weights(ds, weights)?;
    Ok(evaluate(ds, gi, spec, weights, w, b))
}

fn evaluate(
    ds: &Dataset,
    gi: &GroupIndex,
    spec: &TrainSpec,
    weights: Option<&[f64]>,
    w: &[f64],
    b: f64,
) -> Evaluation {
    let n = ds.n_records();
    let total_weight = weights.map_or(n as f64, |v| v.iter().sum());
    let mut z = Vec::with_capacity(n);
    let mut bce = 0.0;
    for (i, x) in ds.rows().enumerate() {
        let zi = linear(w, b, x);
        let vi = weights.map_or(1.0, |v| v[i]);
        bce += vi * (softplus(zi) - f64::from(ds.labels()[i]) * zi);
        z.push(zi);
    }
    let s: Vec<f64> = z.iter().map(|&zi| sigmoid(zi)).collect();

    // dJ/dz_i
    let mut dz: Vec<f64> = (0..n)
        .map(|i| weights.map_or(1.0, |v| v[i]) * (s[i] - f64::from(ds.labels()[i])) / total_weight)
        .collect();

    let mut penalty = 0.0;
    if spec.lambda_fair > 0.0 && gi.len() >= 2 {
        let mean = |g: usize| {
            let m = &gi.groups()[g].members;
            m.iter().map(|&i| s[i]).sum::<f64>() / m.len() as f64
        };
        let gap = mean(0) - mean(1);
        penalty = spec.lambda_fair * gap * gap;
        for (g, sign) in [(0, 1.0), (1, -1.0)] {
            let members = &gi.groups()[g].members;
            let scale = 2.0 * spec.lambda_fair * gap * sign / members.len() as f64;
            for &i in members {
                dz[i] += scale * s[i] * (1.0 - s[i]);
            }
        }
    }

    let mut grad_w: Vec<f64> = w.iter().map(|&wj| 2.0 * spec.l2 * wj).collect();
    let mut grad_b = 0.0;
    for (x, &d) in ds.rows().zip(&dz) {
        for (g, xj) in grad_w.iter_mut().zip(x) {
            *g += d * xj;
        }
        grad_b += d;
    }
    let ridge: f64 = w.iter().map(|v| v * v).sum::<f64>() * spec.l2;
    Evaluation {
        loss: bce / total_weight + ridge + penalty,
        grad_w,
        grad_b,
    }
}

/// Like [`train_logreg`] but also returns the objective before every step
/// and after the last one.
pub fn train_logreg_traced(
    ds: &Dataset,
    gi: &GroupIndex,
    spec: &TrainSpec,
    weights: Option<&[f64]>,
) -> Result<(Model, Vec<f64>)> {
    spec.validate()?;
    gi.check_len("dataset records", ds.n_records())?;
    if spec.lambda_fair > 0.0 {
        gi.require_two_groups()?;
    }
    let weights = record_weights(ds, weights)?;
    let mut w = vec![0.0; ds.n_features()];
    let mut b = 0.0;
    let mut history = Vec::with_capacity(spec.iterations + 1);
    for iteration in 0..=spec.iterations {
        let eval = evaluate(ds, gi, spec, weights, &w, b);
        if !eval.loss.is_finite() {
            return Err(Error::Divergence { iteration });
        }
        history.push(eval.loss);
        if iteration == spec.iterations {
            break;
        }
        for (wj, g) in w.iter_mut().zip(&eval.grad_w) {
            *wj -= spec.learning_rate * g;
        }
        b -= spec.learning_rate * eval.grad_b;
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::Divergence {
            iteration: spec.iterations,
        });
    }
    Ok((
        Model {
            coefficients: w,
            intercept: b,
            spec: *spec,
        },
        history,
    ))
}

/// Fits from zero initialization; a pure function of its inputs.
pub fn train_logreg(ds: &Dataset, gi: &GroupIndex, spec: &TrainSpec, weights: Option<&[f64]>) -> Result<Model> {
    train_logreg_traced(ds, gi, spec, weights).map(|(m, _)| m)
}

pub fn predict_scores(model: &Model, ds: &Dataset) -> Result<Vec<f64>> {
    if model.coefficients.len() != ds.n_features() {
        return Err(Error::DimensionMismatch {
            what: "model coefficients vs dataset features",
            expected: ds.n_features(),
            actual: model.coefficients.len(),
        });
    }
    Ok(ds.rows().map(|x| model.score(x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, standardize, ProtectedAttr, SyntheticSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
        let rows = (0..n)
            .map(|_| (0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
            .collect();
        let labels = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let groups = (0..n)
            .map(|i| if i % 3 == 0 { "A" } else { "B" }.to_string())
            .collect();
        Dataset::new(
            rows,
            (0..d).map(|j| format!("x{j}")).collect(),
            labels,
            vec![ProtectedAttr::new("group", groups)],
        )
        .unwrap()
    }

    fn gi(ds: &Dataset) -> GroupIndex {
        GroupIndex::new(ds, &["group"]).unwrap()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for lambda_fair in [0.0, 1.0, 10.0] {
            for _ in 0..10 {
                let ds = random_instance(&mut rng, 20, 3);
                let spec = TrainSpec {
                    lambda_fair,
                    l2: 0.1,
                    ..TrainSpec::default()
                };
                let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
                let b = rng.random::<f64>() - 0.5;
                let g = gi(&ds);
                let eval = objective_and_gradient(&ds, &g, &spec, None, &w, b).unwrap();
                let h = 1e-5;
                let f = |w: &[f64], b: f64| objective_and_gradient(&ds, &g, &spec, None, w, b).unwrap().loss;
                for j in 0..3 {
                    let (mut up, mut down) = (w.clone(), w.clone());
                    up[j] += h;
                    down[j] -= h;
                    let fd = (f(&up, b) - f(&down, b)) / (2.0 * h);
                    assert!((fd - eval.grad_w[j]).abs() <= 1e-5 * fd.abs().max(1e-3), "{fd} {}", eval.grad_w[j]);
                }
                let fd = (f(&w, b + h) - f(&w, b - h)) / (2.0 * h);
                assert!((fd - eval.grad_b).abs() <= 1e-5 * fd.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn l2_gradient_is_exact() {
        // zero features: the data term contributes nothing to grad_w
        let mut ds = random_instance(&mut ChaCha8Rng::seed_from_u64(1), 6, 2);
        ds = ds.with_flat_features(vec![0.0; 12]);
        let spec = TrainSpec {
            l2: 0.3,
            ..TrainSpec::default()
        };
        let eval = objective_and_gradient(&ds, &gi(&ds), &spec, None, &[1.5, -2.0], 0.0).unwrap();
        assert_eq!(eval.grad_w, vec![2.0 * 0.3 * 1.5, 2.0 * 0.3 * -2.0]);
    }

    #[test]
    fn penalty_vanishes_on_mirrored_data() {
        let rows = vec![vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]];
        let groups = ["A", "A", "B", "B"].map(String::from).to_vec();
        let ds = Dataset::new(rows, vec!["x".into()], vec![1, 0, 0, 1], vec![ProtectedAttr::new("group", groups)]).unwrap();
        let plain = TrainSpec::default();
        let fair = TrainSpec {
            lambda_fair: 5.0,
            ..plain
        };
        let g = gi(&ds);
        let a = objective_and_gradient(&ds, &g, &plain, None, &[0.7], 0.2).unwrap();
        let b = objective_and_gradient(&ds, &g, &fair, None, &[0.7], 0.2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 - 9.5, (i % 3) as f64]).collect();
        let labels = (0..20).map(|i| u8::from(i >= 10)).collect();
        let groups = (0..20).map(|i| if i % 2 == 0 { "A" } else { "B" }.to_string()).collect();
        let ds = Dataset::new(rows, vec!["a".into(), "b".into()], labels, vec![ProtectedAttr::new("group", groups)]).unwrap();
        let model = train_logreg(&ds, &gi(&ds), &TrainSpec::default(), None).unwrap();
        let scores = predict_scores(&model, &ds).unwrap();
        let correct = scores
            .iter()
            .zip(ds.labels())
            .filter(|(s, &y)| u8::from(**s >= 0.5) == y)
            .count();
        assert_eq!(correct, 20);
    }

    #[test]
    fn zero_penalty_reduces_to_plain_bce_descent() {
        let ds = random_instance(&mut ChaCha8Rng::seed_from_u64(9), 30, 2);
        let spec = TrainSpec {
            iterations: 200,
            ..TrainSpec::default()
        };
        let model = train_logreg(&ds, &gi(&ds), &spec, None).unwrap();
        // reference: textbook descent on mean BCE
        let (mut w, mut b) = ([0.0f64; 2], 0.0f64);
        let n = ds.n_records() as f64;
        for _ in 0..spec.iterations {
            let mut gw = [0.0; 2];
            let mut gb = 0.0;
            for (x, &y) in ds.rows().zip(ds.labels()) {
                let p = 1.0 / (1.0 + (-(w[0] * x[0] + w[1] * x[1] + b)).exp());
                let r = (p - f64::from(y)) / n;
                gw[0] += r * x[0];
                gw[1] += r * x[1];
                gb += r;
            }
            w[0] -= spec.learning_rate * gw[0];
            w[1] -= spec.learning_rate * gw[1];
            b -= spec.learning_rate * gb;
        }
        for (a, r) in model.coefficients.iter().zip(w) {
            assert!((a - r).abs() < 1e-12);
        }
        assert!((model.intercept - b).abs() < 1e-12);
        assert_eq!(model, train_logreg(&ds, &gi(&ds), &spec, None).unwrap());
    }

    #[test]
    fn objective_decreases_with_small_step() {
        let ds = generate_synthetic(
            &SyntheticSpec {
                n_per_group: [200, 200],
                mean_shift: 1.0,
                ..SyntheticSpec::default()
            },
            4,
        )
        .unwrap();
        let (ds, _) = standardize(&ds, &[]).unwrap();
        let spec = TrainSpec {
            learning_rate: 0.01,
            iterations: 300,
            lambda_fair: 1.0,
            l2: 0.01,
            seed: 0,
        };
        let (_, history) = train_logreg_traced(&ds, &gi(&ds), &spec, None).unwrap();
        assert!(history.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn fairness_sweep_shrinks_score_gap() {
        for seed in 0..3 {
            let raw = generate_synthetic(
                &SyntheticSpec {
                    n_per_group: [200, 200],
                    mean_shift: 1.0,
                    ..SyntheticSpec::default()
                },
                seed,
            )
            .unwrap();
            let (ds, _) = standardize(&raw, &[]).unwrap();
            let g = gi(&ds);
            let gaps: Vec<f64> = [0.0, 1.0, 10.0, 100.0]
                .iter()
                .map(|&lambda_fair| {
                    let spec = TrainSpec {
                        learning_rate: 0.05,
                        iterations: 500,
                        lambda_fair,
                        ..TrainSpec::default()
                    };
                    let m = train_logreg(&ds, &g, &spec, None).unwrap();
                    let s = predict_scores(&m, &ds).unwrap();
                    let mean = |k: usize| {
                        let members = &g.groups()[k].members;
                        members.iter().map(|&i| s[i]).sum::<f64>() / members.len() as f64
                    };
                    (mean(0) - mean(1)).abs()
                })
                .collect();
            assert!(gaps.windows(2).all(|p| p[1] <= p[0]), "seed {seed}: {gaps:?}");
        }
    }

    #[test]
    fn diverging_step_is_reported() {
        let ds = random_instance(&mut ChaCha8Rng::seed_from_u64(2), 10, 2);
        let ds = ds.with_flat_features(ds.flat_features().iter().map(|x| x * 1e200).collect());
        let spec = TrainSpec {
            learning_rate: 1e200,
            iterations: 5,
            ..TrainSpec::default()
        };
        assert!(matches!(train_logreg(&ds, &gi(&ds), &spec, None), Err(Error::Divergence { .. })));
    }

    #[test]
    fn scores_by_hand() {
        let ds = random_instance(&mut ChaCha8Rng::seed_from_u64(0), 2, 2)
            .with_flat_features(vec![1.0, 2.0, -1.0, 0.5]);
        let model = Model {
            coefficients: vec![0.5, -0.25],
            intercept: 0.1,
            spec: TrainSpec::default(),
        };
        let s = predict_scores(&model, &ds).unwrap();
        // z = 0.5 - 0.5 + 0.1 = 0.1 ; z = -0.5 - 0.125 + 0.1 = -0.525
        assert!((s[0] - 1.0 / (1.0 + (-0.1f64).exp())).abs() < 1e-15);
        assert!((s[1] - 1.0 / (1.0 + 0.525f64.exp())).abs() < 1e-15);

        let zero = Model {
            coefficients: vec![0.0; 2],
            intercept: 0.0,
            spec: TrainSpec::default(),
        };
        assert!(predict_scores(&zero, &ds).unwrap().iter().all(|&s| s == 0.5));
        let saturated = Model {
            intercept: 50.0,
            ..zero
        };
        assert!(predict_scores(&saturated, &ds).unwrap().iter().all(|&s| s >= 1.0 - 1e-20));
        let wrong = Model {
            coefficients: vec![0.0; 3],
            intercept: 0.0,
            spec: TrainSpec::default(),
        };
        assert!(predict_scores(&wrong, &ds).is_err());
    }
}
