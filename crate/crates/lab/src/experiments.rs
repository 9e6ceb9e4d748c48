//! Cross-validation, the search-strategy comparison and invariance audits.

use std::time::Instant;

use anisocanon::canon::{invariance_oracle, Budget, InvarianceMode};
use anisocanon::groups::haar_rotation3;
use anisocanon::rng::hash_tags;
use anisocanon::spectral::OrthogonalBlock;
use anisocanon::RngStream;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SearchStrategy};
use crate::dataset::Prepared;
use crate::error::{LabError, LabResult};
use crate::models::{build_model, AnyModel, Inputs};
use crate::report::{class_audit, mean_std, FoldResult, MetricsReport, Timing};
use crate::train::{stratified_folds, Evaluation, TrainOutcome};

const INIT_TAG: u64 = 0x696e_6974;
const TRAIN_TAG: u64 = 0x7472_6169;
const EVAL_TAG: u64 = 0x6576_616c;
const AUDIT_TAG: u64 = 0x6175_6469;

/// Environment variable that sets the worker-thread count.
pub const THREADS_ENV: &str = "ANISOCANON_THREADS";

pub fn threads_from_env() -> LabResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(LabError::Data(format!("{THREADS_ENV} must be a positive integer, found `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global
/// pool when `threads` is `None`.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> LabResult<R> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| LabError::Data(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub struct FoldRun {
    pub fold: usize,
    pub model: AnyModel,
    pub init_seed: u64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub outcome: TrainOutcome,
    pub evaluation: Evaluation,
    pub seconds: f64,
}

pub fn fold_seeds(master: u64, fold: usize) -> (u64, u64, u64) {
    let f = fold as u64;
    (hash_tags(master, &[INIT_TAG, f]), hash_tags(master, &[TRAIN_TAG, f]), hash_tags(master, &[EVAL_TAG, f]))
}

/// Trains a fresh model on every fold but `fold` and tests on `fold`.
pub fn run_fold(cfg: &ExperimentConfig, data: &Prepared, folds: &[Vec<usize>], fold: usize) -> LabResult<FoldRun> {
    let start = Instant::now();
    let test = folds.get(fold).ok_or(LabError::BadFoldCount { folds: folds.len(), samples: data.labels.len() })?;
    let train: Vec<usize> = {
        let mut t: Vec<usize> = folds.iter().enumerate().filter(|(i, _)| *i != fold).flat_map(|(_, f)| f.iter().copied()).collect();
        t.sort_unstable();
        t
    };
    let (init_seed, train_seed, eval_seed) = fold_seeds(cfg.seed, fold);
    let mut model = build_model(cfg, &data.shape, init_seed)?;
    let outcome = model.train(&data.train, &data.labels, &train, &cfg.train_config(train_seed))?;
    let evaluation = model.evaluate(&data.test, &data.labels, test, &cfg.effective_eval_budget(), eval_seed)?;
    Ok(FoldRun {
        fold,
        model,
        init_seed,
        train_indices: train,
        test_indices: test.clone(),
        outcome,
        evaluation,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Stratified k-fold cross-validation with a fresh initialization per fold.
pub fn kfold_evaluate(cfg: &ExperimentConfig, data: &Prepared) -> LabResult<(MetricsReport, Timing, Vec<FoldRun>)> {
    let start = Instant::now();
    let folds = stratified_folds(&data.labels, cfg.folds, cfg.seed)?;
    let count = if cfg.run_folds == 0 { cfg.folds } else { cfg.run_folds };
    let runs = (0..count).map(|f| run_fold(cfg, data, &folds, f)).collect::<LabResult<Vec<_>>>()?;
    let fold_results: Vec<FoldResult> = runs
        .iter()
        .map(|r| FoldResult {
            fold: r.fold,
            accuracy: r.evaluation.accuracy(),
            correct: r.evaluation.correct,
            total: r.evaluation.total,
            best_epoch: r.outcome.best_epoch,
            epochs_run: r.outcome.history.len(),
            train_evaluations: r.outcome.evaluations,
            eval_evaluations: r.evaluation.evaluations,
        })
        .collect();
    let (mean, std) = mean_std(&fold_results.iter().map(|f| f.accuracy).collect::<Vec<_>>());
    let records: Vec<_> = runs.iter().flat_map(|r| r.evaluation.decisions.iter().cloned()).collect();
    let report = MetricsReport {
        task: cfg.task.name().into(),
        model: cfg.model.name().into(),
        canonicalize: cfg.canonicalize,
        folds_total: cfg.folds,
        mean_accuracy: mean,
        std_accuracy: std,
        class_audit: class_audit(&records, data.shape.classes),
        train_evaluations: fold_results.iter().map(|f| f.train_evaluations).sum(),
        eval_evaluations: fold_results.iter().map(|f| f.eval_evaluations).sum(),
        folds: fold_results,
        config: cfg.to_text(),
    };
    let timing = Timing { total_seconds: start.elapsed().as_secs_f64(), fold_seconds: runs.iter().map(|r| r.seconds).collect() };
    Ok((report, timing, runs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: String,
    pub candidates: usize,
    pub refine_steps: usize,
    pub accuracy: f64,
    pub evaluations: u64,
    /// Mean score evaluations per (sample, class) decision.
    pub evaluations_per_decision: f64,
    pub seconds: f64,
}

/// Trains one model on fold 0's training part with the configured training
/// budget, then tests every strategy on fold 0 with the same search seed.
/// Sharing the model and seed isolates the effect of the search itself.
pub fn compare_search_strategies(
    cfg: &ExperimentConfig,
    data: &Prepared,
    strategies: &[SearchStrategy],
) -> LabResult<(Vec<StrategyRow>, FoldRun)> {
    if strategies.len() < 2 {
        return Err(LabError::Data("comparing strategies needs at least two of them".into()));
    }
    let folds = stratified_folds(&data.labels, cfg.folds, cfg.seed)?;
    let run = run_fold(cfg, data, &folds, 0)?;
    let (_, _, eval_seed) = fold_seeds(cfg.seed, 0);
    let decisions = (run.test_indices.len() * data.shape.classes) as f64;
    let rows = strategies
        .iter()
        .map(|s| {
            let start = Instant::now();
            let budget = s.budget(cfg.eval_budget.step_size);
            let e = run.model.evaluate(&data.test, &data.labels, &run.test_indices, &budget, eval_seed)?;
            Ok(StrategyRow {
                strategy: s.label(),
                candidates: s.candidates,
                refine_steps: s.refine_steps,
                accuracy: e.accuracy(),
                evaluations: e.evaluations,
                evaluations_per_decision: e.evaluations as f64 / decisions,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<LabResult<Vec<_>>>()?;
    Ok((rows, run))
}

pub fn strategies_csv(rows: &[StrategyRow]) -> String {
    let mut s = String::from("strategy,candidates,refine_steps,accuracy,evaluations,evaluations_per_decision,seconds\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{:.3}\n",
            r.strategy, r.candidates, r.refine_steps, r.accuracy, r.evaluations, r.evaluations_per_decision, r.seconds
        ));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

/// Sampling-only rows must be non-decreasing in accuracy as `K` grows; each
/// refined row must match the largest sampling row's accuracy with at most
/// a quarter of its evaluations.
pub fn strategy_checks(rows: &[StrategyRow]) -> Vec<Check> {
    let mut sampling: Vec<&StrategyRow> = rows.iter().filter(|r| r.refine_steps == 0).collect();
    sampling.sort_by_key(|r| r.candidates);
    let mut checks = Vec::new();
    let monotone = sampling.windows(2).all(|w| w[1].accuracy >= w[0].accuracy);
    let trail: Vec<String> = sampling.iter().map(|r| format!("{}:{:.4}", r.strategy, r.accuracy)).collect();
    checks.push(Check::new("accuracy non-decreasing in K", monotone, trail.join(" ")));
    if let Some(large) = sampling.last() {
        for r in rows.iter().filter(|r| r.refine_steps > 0) {
            checks.push(Check::new(
                format!("{} accuracy vs {}", r.strategy, large.strategy),
                r.accuracy >= large.accuracy,
                format!("{:.4} vs {:.4}", r.accuracy, large.accuracy),
            ));
            checks.push(Check::new(
                format!("{} evaluations vs {}", r.strategy, large.strategy),
                r.evaluations_per_decision <= 0.25 * large.evaluations_per_decision,
                format!(
                    "{:.2} vs {:.2} per decision (limit 25 %)",
                    r.evaluations_per_decision, large.evaluations_per_decision
                ),
            ));
        }
    }
    checks
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub mode: String,
    pub trials: usize,
    pub agreements: usize,
    pub agreement_rate: f64,
    pub max_logit_delta: f64,
    /// Trials whose logits all moved by at most `1e-9`.
    pub logits_within_1e9: usize,
}

/// Tolerance for orbit-consistent logit agreement.
pub const ORBIT_TOLERANCE: f64 = 1e-9;

/// Acts on `trials` samples (cycling through `indices`) with random group
/// elements and compares decisions before and after.
pub fn invariance_audit(
    model: &AnyModel,
    inputs: &Inputs,
    indices: &[usize],
    trials: usize,
    mode: InvarianceMode,
    budget: &Budget,
    seed: u64,
) -> LabResult<AuditReport> {
    if indices.is_empty() {
        return Err(LabError::Data("no samples to audit".into()));
    }
    let base = RngStream::new(seed, AUDIT_TAG);
    let mut agreements = 0;
    let mut within = 0;
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let i = indices[t % indices.len()];
        let mut rng = base.derive(&[t as u64]);
        let search = base.derive(&[t as u64, 1]);
        let r = match (model, inputs) {
            (AnyModel::Anlsf(m), Inputs::Spectral(x)) => {
                let v = OrthogonalBlock::haar(&x[i].dims(), &mut rng);
                invariance_oracle(m, &x[i], &v, mode, budget, &search)?
            }
            (AnyModel::Set(m), Inputs::Matrices(x)) => {
                invariance_oracle(m, &x[i], &haar_rotation3(&mut rng), mode, budget, &search)?
            }
            (AnyModel::Dgcnn(m), Inputs::Matrices(x)) => {
                invariance_oracle(m, &x[i], &haar_rotation3(&mut rng), mode, budget, &search)?
            }
            (AnyModel::NodeMlp(m), Inputs::Matrices(x)) => invariance_oracle(m, &x[i], &(), mode, budget, &search)?,
            _ => return Err(LabError::Data("model and inputs do not match".into())),
        };
        agreements += usize::from(r.agree);
        within += usize::from(r.max_logit_delta <= ORBIT_TOLERANCE);
        worst = worst.max(r.max_logit_delta);
    }
    Ok(AuditReport {
        mode: match mode {
            InvarianceMode::OrbitConsistent => "orbit-consistent".into(),
            InvarianceMode::Resampled => "resampled".into(),
        },
        trials,
        agreements,
        agreement_rate: if trials == 0 { 1.0 } else { agreements as f64 / trials as f64 },
        max_logit_delta: worst,
        logits_within_1e9: within,
    })
}

/// Orbit-consistent audits must agree everywhere with logits within
/// [`ORBIT_TOLERANCE`]; resampled audits must agree at least `min_rate`
/// of the time.
pub fn audit_check(a: &AuditReport, min_rate: f64) -> Check {
    let passed = if a.mode == "orbit-consistent" {
        a.agreements == a.trials && a.logits_within_1e9 == a.trials
    } else {
        a.agreement_rate >= min_rate
    };
    Check::new(
        format!("{} invariance", a.mode),
        passed,
        format!("{}/{} agree, max logit change {:.3e}", a.agreements, a.trials, a.max_logit_delta),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize, r: usize, acc: f64, per: f64) -> StrategyRow {
        StrategyRow {
            strategy: format!("{k}+{r}"),
            candidates: k,
            refine_steps: r,
            accuracy: acc,
            evaluations: 0,
            evaluations_per_decision: per,
            seconds: 0.0,
        }
    }

    #[test]
    fn strategy_checks_catch_each_failure() {
        let good = [row(8, 0, 0.8, 8.0), row(80, 0, 0.9, 80.0), row(8, 6, 0.9, 17.0)];
        assert!(strategy_checks(&good).iter().all(|c| c.passed));
        let non_monotone = [row(8, 0, 0.95, 8.0), row(80, 0, 0.9, 80.0)];
        assert!(!strategy_checks(&non_monotone)[0].passed);
        let too_costly = [row(8, 0, 0.8, 8.0), row(80, 0, 0.9, 80.0), row(8, 6, 0.95, 21.0)];
        let c = strategy_checks(&too_costly);
        assert!(c[1].passed && !c[2].passed);
        let worse = [row(80, 0, 0.9, 80.0), row(8, 6, 0.85, 10.0)];
        let c = strategy_checks(&worse);
        assert!(!c[1].passed && c[2].passed);
    }

    #[test]
    fn thread_override_is_honoured() {
        let n = with_threads(Some(3), rayon::current_num_threads).unwrap();
        assert_eq!(n, 3);
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let csv = strategies_csv(&[row(8, 0, 0.5, 8.0), row(8, 6, 0.5, 10.0)]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("strategy,"));
    }
}
