use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use fairbound::dataset::{generate_synthetic, load_csv, read_vector, write_csv, write_vector, SyntheticSpec};
use fairbound::groupmetrics::{audit_subgroups, parity_report, DEFAULT_TAU_DI};
use fairbound::inprocess::{predict_scores, train_logreg, TrainSpec};
use fairbound::lipschitz::{solve_fair_affirmative, solve_lipschitz_lp, DistanceMatrix, LipschitzInstance, ParitySpec};
use fairbound::individual::{group_feature_distance, knn_inconsistency, lipschitz_violations, KnnSpec};
use fairbound::postprocess::{
    apply_mixing, apply_policy, equalize_odds_mixing, optimize_thresholds, roc_reject_option, sweep_tau, RocSpec,
    ToleranceSpec, DEFAULT_TAU_FN,
};
use fairbound::preprocess::{
    di_repair, drop_sensitive, massage, reweight, suppress_correlated, DiSpec, DEFAULT_RHO_THRESHOLD,
};
use fairbound::{CostSpec, Dataset, Error, GroupIndex, Schema};

#[derive(Parser)]
#[command(name = "fairbound", version, about = "Fairness auditing, repair and tolerance-bounded thresholds")]
struct Cli {
    /// Seed for every random stream used by the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Headed CSV data file.
    #[arg(long)]
    data: PathBuf,
    /// JSON file assigning column roles.
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args, Clone, Copy)]
struct Costs {
    /// Cost of a false negative.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Cost of a false positive.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

impl Costs {
    fn spec(self) -> fairbound::Result<CostSpec> {
        CostSpec::new(self.alpha, self.beta)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Drop,
    Suppress,
    Massage,
    Reweight,
    Di,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a two-group synthetic dataset and its schema.
    Generate {
        #[arg(long, default_value_t = 500)]
        n_a: usize,
        #[arg(long, default_value_t = 500)]
        n_b: usize,
        /// Mean shift of group B's features.
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        variance_ratio: f64,
        #[arg(long, default_value_t = 0.0)]
        base_rate_offset: f64,
        #[arg(long, default_value_t = 2)]
        features: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        schema_out: PathBuf,
    },
    /// Group-fairness report for hard predictions.
    Audit {
        #[command(flatten)]
        input: Input,
        /// Single-column CSV of 0/1 predictions.
        #[arg(long)]
        preds: PathBuf,
        /// Optional single-column CSV of scores, adding per-group mean scores.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[command(flatten)]
        costs: Costs,
        #[arg(long, default_value_t = DEFAULT_TAU_DI)]
        tau_di: f64,
        /// Comma-separated protected attributes to group by (default: all).
        #[arg(long, value_delimiter = ',')]
        attrs: Vec<String>,
        /// Also write an intersectional audit with this minimum cell size.
        #[arg(long, requires = "subgroups_out")]
        min_support: Option<usize>,
        #[arg(long)]
        subgroups_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-processing repair of the training data.
    Repair {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum)]
        method: Method,
        /// Repair amount for the disparate-impact remover.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = DEFAULT_RHO_THRESHOLD)]
        rho_threshold: f64,
        #[arg(long, default_value_t = DEFAULT_TAU_DI)]
        tau_di: f64,
        /// Ranking scores for massaging.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Repaired data CSV.
        #[arg(long)]
        out: PathBuf,
        /// Schema for the repaired data.
        #[arg(long)]
        schema_out: PathBuf,
        /// Repair log JSON.
        #[arg(long)]
        log: PathBuf,
    },
    /// Fit a logistic-regression scorer.
    Train {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 0.0)]
        lambda_fair: f64,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 0.0)]
        l2: f64,
        /// Single-column CSV of record weights.
        #[arg(long)]
        weights_from: Option<PathBuf>,
        /// Model JSON.
        #[arg(long)]
        out: PathBuf,
        /// Scores of the training records.
        #[arg(long)]
        scores_out: Option<PathBuf>,
    },
    /// Per-group thresholds minimizing loss under a miss-rate gap bound.
    Thresholds {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        scores: PathBuf,
        #[command(flatten)]
        costs: Costs,
        #[arg(long, default_value_t = DEFAULT_TAU_FN)]
        tau_fn: f64,
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        include_fp: bool,
        /// Policy and audit JSON.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        preds_out: Option<PathBuf>,
    },
    /// Optimal loss along a list of tolerances.
    Sweep {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        scores: PathBuf,
        #[command(flatten)]
        costs: Costs,
        /// Ascending, comma-separated tolerances.
        #[arg(long, value_delimiter = ',', required = true)]
        taus: Vec<f64>,
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        include_fp: bool,
        /// Sweep CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Randomized relabelling that equalizes TPR and FPR across groups.
    Eqodds {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        preds: PathBuf,
        #[command(flatten)]
        costs: Costs,
        #[arg(long)]
        out: PathBuf,
        /// Sampled mixed predictions, drawn with --seed.
        #[arg(long)]
        preds_out: Option<PathBuf>,
    },
    /// Reject-option classification around the decision boundary.
    Roc {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        theta: f64,
        /// Predictions CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimum-loss outcome probabilities under the Lipschitz condition.
    Lipschitz {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        costs: Costs,
        /// Relax to within-group constraints plus parity up to this bias.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(input: &Input) -> fairbound::Result<Dataset> {
    load_csv(&input.data, &Schema::from_path(&input.schema)?)
}

fn read_preds(path: &Path) -> fairbound::Result<Vec<u8>> {
    read_vector(path)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| match v {
            0.0 => Ok(0),
            1.0 => Ok(1),
            _ => Err(Error::InvalidRecord {
                row: i + 1,
                message: format!("prediction {v} is not 0 or 1"),
            }),
        })
        .collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> fairbound::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn all_groups(ds: &Dataset) -> fairbound::Result<GroupIndex> {
    GroupIndex::all_attributes(ds)
}

fn run(cli: Cli) -> fairbound::Result<String> {
    let seed = cli.seed;
    match cli.command {
        Command::Generate {
            n_a,
            n_b,
            delta,
            variance_ratio,
            base_rate_offset,
            features,
            out,
            schema_out,
        } => {
            let spec = SyntheticSpec {
                n_per_group: [n_a, n_b],
                mean_shift: delta,
                variance_ratio,
                base_rate_offset,
                n_features: features,
            };
            let ds = generate_synthetic(&spec, seed)?;
            write_csv(&ds, &out)?;
            fs::write(&schema_out, Schema::for_dataset(&ds).to_json() + "\n")?;
            Ok(format!("generated {} records with {} features", ds.n_records(), ds.n_features()))
        }
        Command::Audit {
            input,
            preds,
            scores,
            costs,
            tau_di,
            attrs,
            min_support,
            subgroups_out,
            out,
        } => {
            let ds = load(&input)?;
            let gi = if attrs.is_empty() {
                all_groups(&ds)?
            } else {
                GroupIndex::new(&ds, &attrs)?
            };
            let preds = read_preds(&preds)?;
            let scores = scores.map(|p| read_vector(&p)).transpose()?;
            let report = parity_report(&preds, scores.as_deref(), &ds, &gi, &costs.spec()?, tau_di)?;
            let mut full = serde_json::to_value(&report)?;
            let values: Vec<f64> = match &scores {
                Some(s) => s.clone(),
                None => preds.iter().map(|&p| f64::from(p)).collect(),
            };
            full["knn_inconsistency"] = json!(knn_inconsistency(&values, &ds, &KnnSpec::default())?);
            if gi.len() == 2 && ds.n_features() > 0 {
                let dist = group_feature_distance(&ds, &gi)?;
                full["group_w1_per_feature"] = json!(dist.group_w1_per_feature);
                full["group_w1_mean"] = json!(dist.group_w1_mean);
            }
            write_json(&out, &full)?;
            if let (Some(min), Some(path)) = (min_support, subgroups_out) {
                let names: Vec<&str> = if attrs.is_empty() {
                    ds.protected().iter().map(|a| a.name.as_str()).collect()
                } else {
                    attrs.iter().map(String::as_str).collect()
                };
                write_json(&path, &audit_subgroups(&ds, &preds, &names, min)?)?;
            }
            Ok(format!(
                "dp_ratio {} disparate_impact {} fn_gap_max {:.4} weighted_loss {:.4}",
                serde_json::to_string(&report.dp_ratio)?,
                report.disparate_impact,
                report.fn_gap_max,
                report.weighted_loss
            ))
        }
        Command::Repair {
            input,
            method,
            lambda,
            rho_threshold,
            tau_di,
            scores,
            out,
            schema_out,
            log,
        } => {
            let ds = load(&input)?;
            let (repaired, details, summary) = match method {
                Method::Drop => {
                    let r = drop_sensitive(&ds);
                    let dropped = ds.sensitive_features().to_vec();
                    let summary = format!("dropped {} sensitive feature(s)", dropped.len());
                    (r, json!({ "method": "drop", "dropped": dropped }), summary)
                }
                Method::Suppress => {
                    let gi = all_groups(&ds)?;
                    let s = suppress_correlated(&ds, &gi, rho_threshold)?;
                    let summary = format!("suppressed {} feature(s)", s.dropped.len());
                    let details = json!({
                        "method": "suppress",
                        "rho_threshold": rho_threshold,
                        "dropped": s.dropped,
                        "correlations": s.correlations,
                        "warnings": s.warnings,
                    });
                    (s.dataset, details, summary)
                }
                Method::Massage => {
                    let gi = all_groups(&ds)?;
                    let path = scores.ok_or_else(|| Error::Validation("massaging needs --scores".into()))?;
                    let (r, m) = massage(&ds, &gi, &read_vector(&path)?)?;
                    let summary = format!("massaged {} label pair(s)", m.pairs);
                    (r, json!({ "method": "massage", "flips": m }), summary)
                }
                Method::Reweight => {
                    let gi = all_groups(&ds)?;
                    let w = reweight(&ds, &gi)?;
                    let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
                    let summary = format!("weights range {lo:.4} to {hi:.4}");
                    (ds.clone().with_weights(w)?, json!({ "method": "reweight", "min_weight": lo, "max_weight": hi }), summary)
                }
                Method::Di => {
                    let gi = all_groups(&ds)?;
                    let spec = DiSpec::new(tau_di, lambda)?;
                    let r = di_repair(&ds, &gi, &spec)?;
                    let before = fairbound::individual::group_feature_distance(&ds, &gi)?;
                    let after = fairbound::individual::group_feature_distance(&r, &gi)?;
                    let summary = format!(
                        "group W1 {:.4} -> {:.4}",
                        before.group_w1_mean, after.group_w1_mean
                    );
                    let details = json!({
                        "method": "di",
                        "lambda": lambda,
                        "tau_di": tau_di,
                        "w1_before": before,
                        "w1_after": after,
                    });
                    (r, details, summary)
                }
            };
            write_csv(&repaired, &out)?;
            fs::write(&schema_out, Schema::for_dataset(&repaired).to_json() + "\n")?;
            write_json(&log, &details)?;
            Ok(summary)
        }
        Command::Train {
            input,
            lambda_fair,
            lr,
            iters,
            l2,
            weights_from,
            out,
            scores_out,
        } => {
            let ds = load(&input)?;
            let gi = all_groups(&ds)?;
            let spec = TrainSpec {
                learning_rate: lr,
                iterations: iters,
                lambda_fair,
                l2,
                seed,
            };
            let weights = weights_from.map(|p| read_vector(&p)).transpose()?;
            let model = train_logreg(&ds, &gi, &spec, weights.as_deref())?;
            write_json(&out, &model)?;
            let scores = predict_scores(&model, &ds)?;
            if let Some(path) = scores_out {
                write_vector(&path, "score", &scores)?;
            }
            let accuracy = scores
                .iter()
                .zip(ds.labels())
                .filter(|(s, &y)| u8::from(**s >= 0.5) == y)
                .count() as f64
                / ds.n_records() as f64;
            Ok(format!("trained on {} records, training accuracy {accuracy:.4}", ds.n_records()))
        }
        Command::Thresholds {
            input,
            scores,
            costs,
            tau_fn,
            include_fp,
            out,
            preds_out,
        } => {
            let ds = load(&input)?;
            let gi = all_groups(&ds)?;
            let scores = read_vector(&scores)?;
            let tol = ToleranceSpec::new(tau_fn, include_fp)?;
            let (policy, report) = optimize_thresholds(&scores, &ds, &gi, &costs.spec()?, &tol)?;
            write_json(&out, &json!({ "tolerance": tol, "policy": policy, "report": report }))?;
            if let Some(path) = preds_out {
                write_vector(&path, "prediction", &apply_policy(&policy, &scores, &gi)?)?;
            }
            Ok(format!(
                "thresholds {:?} fn_gap_max {:.4} weighted_loss {:.4}",
                policy.thresholds, report.fn_gap_max, report.weighted_loss
            ))
        }
        Command::Sweep {
            input,
            scores,
            costs,
            taus,
            include_fp,
            out,
        } => {
            let ds = load(&input)?;
            let gi = all_groups(&ds)?;
            let sweep = sweep_tau(&read_vector(&scores)?, &ds, &gi, &costs.spec()?, &taus, include_fp)?;
            sweep.write_csv(&out)?;
            let first = sweep.rows.first().map_or(0.0, |r| r.loss);
            let last = sweep.rows.last().map_or(0.0, |r| r.loss);
            Ok(format!("{} tolerance(s), loss {first:.4} -> {last:.4}", sweep.rows.len()))
        }
        Command::Eqodds {
            input,
            preds,
            costs,
            out,
            preds_out,
        } => {
            let ds = load(&input)?;
            let gi = all_groups(&ds)?;
            let preds = read_preds(&preds)?;
            let outcome = equalize_odds_mixing(&preds, &ds, &gi, &costs.spec()?)?;
            write_json(&out, &outcome)?;
            if let Some(path) = preds_out {
                write_vector(&path, "prediction", &apply_mixing(&outcome.policy, &preds, &gi, seed)?)?;
            }
            Ok(format!("mixed TPR {:.4} FPR {:.4} cost {:.4}", outcome.tpr[0], outcome.fpr[0], outcome.cost))
        }
        Command::Roc {
            input,
            scores,
            theta,
            out,
        } => {
            let ds = load(&input)?;
            let gi = all_groups(&ds)?;
            let preds = roc_reject_option(&read_vector(&scores)?, &ds, &gi, &RocSpec::new(theta)?)?;
            write_vector(&out, "prediction", &preds)?;
            let positives = preds.iter().filter(|&&p| p == 1).count();
            Ok(format!("{positives} of {} predicted positive", preds.len()))
        }
        Command::Lipschitz {
            input,
            costs,
            epsilon,
            out,
        } => {
            let ds = load(&input)?;
            let costs = costs.spec()?;
            let d = DistanceMatrix::from_features(&ds)?;
            let loss = ds
                .labels()
                .iter()
                .map(|&y| if y == 1 { [costs.alpha, 0.0] } else { [0.0, costs.beta] })
                .collect();
            let inst = LipschitzInstance::new(d, loss)?;
            let solution = match epsilon {
                None => solve_lipschitz_lp(&inst)?,
                Some(eps) => {
                    let gi = all_groups(&ds)?;
                    let (unprivileged, _) = gi.privilege_pair()?;
                    let in_s = (0..ds.n_records()).map(|i| gi.group_of(i) == unprivileged).collect();
                    solve_fair_affirmative(&inst, &ParitySpec::new(in_s, eps)?)?
                }
            };
            let violations = lipschitz_violations(&solution.p, &inst.d)?;
            write_json(&out, &json!({ "solution": solution, "epsilon": epsilon, "violations": violations }))?;
            Ok(format!("expected loss {:.4} over {} individuals", solution.objective, inst.len()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Schema(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
