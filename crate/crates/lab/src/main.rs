use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anisocanon::canon::{Budget, InvarianceMode};
use anisocanon_lab::config::ExperimentConfig;
use anisocanon_lab::dataset::{generate, prepare, Dataset, Prepared};
use anisocanon_lab::experiments::{
    audit_check, compare_search_strategies, fold_seeds, invariance_audit, kfold_evaluate, strategies_csv,
    strategy_checks, threads_from_env, with_threads, Check,
};
use anisocanon_lab::formats::{load_model, read_dataset, save_model, write_audit_log, write_dataset, write_decomposition};
use anisocanon_lab::report::MetricsReport;
use anisocanon_lab::spectra::DecompositionCache;
use anisocanon_lab::train::stratified_folds;
use anisocanon_lab::{LabError, LabResult};
use clap::{Parser, Subcommand, ValueEnum};

/// Adaptive canonicalization experiments.
///
/// Set ANISOCANON_THREADS to fix the worker-thread count. Results do not
/// depend on it. The exit code is 0 exactly when every check a command
/// performs passes.
#[derive(Parser)]
#[command(name = "anisocanon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured task's dataset with its manifest.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate: metrics.json, timing.json and one checkpoint per fold.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory from gen-data; generated in memory when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Fail unless the mean accuracy reaches this value.
        #[arg(long)]
        min_accuracy: Option<f64>,
        /// Fail unless the mean accuracy stays at or below this value.
        #[arg(long)]
        max_accuracy: Option<f64>,
    },
    /// Evaluate a checkpoint on its held-out fold and write the decision log.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        min_accuracy: Option<f64>,
    },
    /// Compare search budgets on one trained model (CSV output).
    CompareSearch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Act on held-out inputs with random group elements and compare decisions.
    AuditInvariance {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        mode: AuditMode,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 64)]
        candidates: usize,
        #[arg(long, default_value_t = 10)]
        refine_steps: usize,
        #[arg(long, default_value_t = 0.95)]
        min_rate: f64,
    },
    /// Summarize metrics files and re-check their internal consistency.
    Report {
        metrics: Vec<PathBuf>,
        #[arg(long)]
        min_accuracy: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AuditMode {
    Orbit,
    Resampled,
    Both,
}

fn read_config(path: &Path) -> LabResult<ExperimentConfig> {
    ExperimentConfig::parse(&fs::read_to_string(path)?)
}

fn load_data(cfg: &ExperimentConfig, data: Option<&Path>) -> LabResult<Dataset> {
    match data {
        Some(dir) => Ok(read_dataset(dir)?.0),
        None => Ok(generate(cfg)?.0),
    }
}

fn load_prepared(cfg: &ExperimentConfig, data: Option<&Path>) -> LabResult<Prepared> {
    prepare(cfg, &load_data(cfg, data)?, &DecompositionCache::new())
}

fn report_checks(checks: &[Check]) -> bool {
    for c in checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    checks.iter().all(|c| c.passed)
}

fn threshold_checks(mean: f64, min: Option<f64>, max: Option<f64>) -> Vec<Check> {
    let mut out = Vec::new();
    if let Some(m) = min {
        out.push(Check::new("minimum accuracy", mean >= m, format!("{mean:.4} >= {m}")));
    }
    if let Some(m) = max {
        out.push(Check::new("maximum accuracy", mean <= m, format!("{mean:.4} <= {m}")));
    }
    out
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> LabResult<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn run(cmd: Command) -> LabResult<bool> {
    match cmd {
        Command::GenData { config, out } => {
            let cfg = read_config(&config)?;
            let (data, info) = generate(&cfg)?;
            let manifest = write_dataset(&out, &data, &info)?;
            fs::write(out.join("generator.conf"), cfg.to_text())?;
            if let (Dataset::Graphs(g), true) = (&data, cfg.model == anisocanon_lab::config::ModelId::Anlsf) {
                let first = g[0].graph.shared_adjacency();
                if g.iter().all(|s| std::sync::Arc::ptr_eq(s.graph.shared_adjacency(), first)) {
                    let cache = DecompositionCache::new();
                    let d = cache.get(&g[0].graph, &cfg.band_settings())?;
                    let mut f = fs::File::create(out.join("decomposition.bin"))?;
                    write_decomposition(&mut f, &d.0, &d.1)?;
                }
            }
            println!("wrote {} samples ({}) sha256 {}", manifest.samples, manifest.generator, manifest.sha256);
            Ok(true)
        }
        Command::Train { config, data, out, min_accuracy, max_accuracy } => {
            let cfg = read_config(&config)?;
            let prepared = load_prepared(&cfg, data.as_deref())?;
            let (report, timing, runs) = kfold_evaluate(&cfg, &prepared)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("metrics.json"), report.to_json())?;
            write_json(&out.join("timing.json"), &timing)?;
            let histories: Vec<_> = runs.iter().map(|r| &r.outcome).collect();
            write_json(&out.join("history.json"), &histories)?;
            for r in &runs {
                let mut f = fs::File::create(out.join(format!("fold{}.ckpt", r.fold)))?;
                save_model(&mut f, &cfg, &prepared.shape, &r.model, r.init_seed, r.fold)?;
            }
            println!("{}  [{:.1} s]", report.summary_line(), timing.total_seconds);
            let mut checks = vec![Check::new("report consistency", report.is_consistent(), "mean/std recomputed from folds")];
            checks.extend(threshold_checks(report.mean_accuracy, min_accuracy, max_accuracy));
            Ok(report_checks(&checks))
        }
        Command::Eval { checkpoint, data, out, min_accuracy } => {
            let (cfg, _, model, header) = load_model(&mut fs::File::open(&checkpoint)?)?;
            let prepared = load_prepared(&cfg, data.as_deref())?;
            let folds = stratified_folds(&prepared.labels, cfg.folds, cfg.seed)?;
            let test = &folds[header.fold];
            let (_, _, eval_seed) = fold_seeds(cfg.seed, header.fold);
            let e = model.evaluate(&prepared.test, &prepared.labels, test, &cfg.effective_eval_budget(), eval_seed)?;
            fs::create_dir_all(&out)?;
            let mut log = fs::File::create(out.join("decisions.jsonl"))?;
            write_audit_log(&mut log, &e.decisions)?;
            write_json(
                &out.join("eval.json"),
                &serde_json::json!({
                    "fold": header.fold, "accuracy": e.accuracy(), "correct": e.correct,
                    "total": e.total, "evaluations": e.evaluations, "predictions": e.predictions,
                }),
            )?;
            println!("fold {}: accuracy {:.4} ({}/{})", header.fold, e.accuracy(), e.correct, e.total);
            Ok(report_checks(&threshold_checks(e.accuracy(), min_accuracy, None)))
        }
        Command::CompareSearch { config, data, out } => {
            let cfg = read_config(&config)?;
            if cfg.strategies.len() < 2 {
                return Err(LabError::Config { line: 0, message: "`strategies` needs at least two entries".into() });
            }
            let prepared = load_prepared(&cfg, data.as_deref())?;
            let (rows, _) = compare_search_strategies(&cfg, &prepared, &cfg.strategies)?;
            fs::create_dir_all(&out)?;
            let csv = strategies_csv(&rows);
            fs::write(out.join("search.csv"), &csv)?;
            print!("{csv}");
            let checks = strategy_checks(&rows);
            write_json(&out.join("search_checks.json"), &checks)?;
            Ok(report_checks(&checks))
        }
        Command::AuditInvariance { checkpoint, data, out, mode, trials, candidates, refine_steps, min_rate } => {
            let (cfg, _, model, header) = load_model(&mut fs::File::open(&checkpoint)?)?;
            let prepared = load_prepared(&cfg, data.as_deref())?;
            let folds = stratified_folds(&prepared.labels, cfg.folds, cfg.seed)?;
            let test = &folds[header.fold];
            let budget = Budget {
                candidates,
                refine_steps,
                step_size: cfg.eval_budget.step_size,
                refine_top_only: true,
                include_identity: false,
            };
            let modes = match mode {
                AuditMode::Orbit => vec![InvarianceMode::OrbitConsistent],
                AuditMode::Resampled => vec![InvarianceMode::Resampled],
                AuditMode::Both => vec![InvarianceMode::OrbitConsistent, InvarianceMode::Resampled],
            };
            let audits = modes
                .into_iter()
                .map(|m| invariance_audit(&model, &prepared.test, test, trials, m, &budget, cfg.seed))
                .collect::<LabResult<Vec<_>>>()?;
            fs::create_dir_all(&out)?;
            write_json(&out.join("audit.json"), &audits)?;
            let checks: Vec<Check> = audits.iter().map(|a| audit_check(a, min_rate)).collect();
            Ok(report_checks(&checks))
        }
        Command::Report { metrics, min_accuracy } => {
            let mut checks = Vec::new();
            for path in &metrics {
                let r: MetricsReport = serde_json::from_slice(&fs::read(path)?)?;
                println!("{}", r.summary_line());
                for f in &r.folds {
                    println!("  fold {:>2}: {:.4} ({}/{})", f.fold, f.accuracy, f.correct, f.total);
                }
                checks.push(Check::new(format!("{} consistency", path.display()), r.is_consistent(), "mean/std recomputed"));
                checks.extend(threshold_checks(r.mean_accuracy, min_accuracy, None));
            }
            Ok(report_checks(&checks))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|t| with_threads(t, || run(cli.command))).and_then(|r| r);
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
