//! Cross-validation metrics. Everything in [`MetricsReport`] is a pure
//! function of config and seed; wall-clock time lives in [`Timing`] and is
//! written to its own file.

use serde::{Deserialize, Serialize};

use crate::train::DecisionRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub train_evaluations: u64,
    pub eval_evaluations: u64,
}

/// Summary of the test-time decisions for one class head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAudit {
    pub class: usize,
    pub decisions: usize,
    pub mean_logit: f64,
    pub mean_refine_gain: f64,
    /// Share of decisions where refinement improved on the best candidate.
    pub refined_fraction: f64,
    pub mean_candidate_index: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub model: String,
    pub canonicalize: bool,
    pub folds_total: usize,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    /// Population standard deviation of the per-fold accuracies.
    pub std_accuracy: f64,
    pub class_audit: Vec<ClassAudit>,
    pub train_evaluations: u64,
    pub eval_evaluations: u64,
    pub config: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub fold_seconds: Vec<f64>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn class_audit(records: &[DecisionRecord], classes: usize) -> Vec<ClassAudit> {
    (0..classes)
        .map(|c| {
            let mine: Vec<&DecisionRecord> = records.iter().filter(|r| r.class == c).collect();
            let n = mine.len().max(1) as f64;
            ClassAudit {
                class: c,
                decisions: mine.len(),
                mean_logit: mine.iter().map(|r| r.logit).sum::<f64>() / n,
                mean_refine_gain: mine.iter().map(|r| r.refine_gain).sum::<f64>() / n,
                refined_fraction: mine.iter().filter(|r| r.refine_gain > 0.0).count() as f64 / n,
                mean_candidate_index: mine.iter().map(|r| r.candidate_index as f64).sum::<f64>() / n,
            }
        })
        .collect()
}

impl MetricsReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.accuracy).collect()
    }

    /// Whether the stored mean and std match the per-fold values within
    /// `1e-12`, and every fold accuracy matches its counts.
    pub fn is_consistent(&self) -> bool {
        let (m, s) = mean_std(&self.accuracies());
        let folds_ok = self
            .folds
            .iter()
            .all(|f| f.total > 0 && (f.accuracy - f.correct as f64 / f.total as f64).abs() <= 1e-12);
        folds_ok && (m - self.mean_accuracy).abs() <= 1e-12 && (s - self.std_accuracy).abs() <= 1e-12
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {}{}: {:.2} ± {:.2} % over {} fold(s)",
            self.task,
            self.model,
            if self.canonicalize { "" } else { " (frozen)" },
            100.0 * self.mean_accuracy,
            100.0 * self.std_accuracy,
            self.folds.len()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report(acc: &[(usize, usize)]) -> MetricsReport {
        let folds: Vec<FoldResult> = acc
            .iter()
            .enumerate()
            .map(|(i, &(c, t))| FoldResult {
                fold: i,
                accuracy: c as f64 / t as f64,
                correct: c,
                total: t,
                best_epoch: 0,
                epochs_run: 0,
                train_evaluations: 0,
                eval_evaluations: 0,
            })
            .collect();
        let (m, s) = mean_std(&folds.iter().map(|f| f.accuracy).collect::<Vec<_>>());
        MetricsReport {
            task: "t".into(),
            model: "m".into(),
            canonicalize: true,
            folds_total: acc.len(),
            folds,
            mean_accuracy: m,
            std_accuracy: s,
            class_audit: vec![],
            train_evaluations: 0,
            eval_evaluations: 0,
            config: String::new(),
        }
    }

    #[test]
    fn mean_std_of_known_values() {
        assert_eq!(mean_std(&[]), (0.0, 0.0));
        let (m, s) = mean_std(&[0.5, 1.0]);
        assert_eq!(m, 0.75);
        assert_eq!(s, 0.25);
    }

    #[test]
    fn tampering_breaks_consistency() {
        let mut r = report(&[(9, 10), (10, 10)]);
        assert!(r.is_consistent());
        r.mean_accuracy += 1e-9;
        assert!(!r.is_consistent());
    }

    #[test]
    fn audit_splits_by_class() {
        let rec = |class, gain| DecisionRecord {
            sample: 0,
            class,
            candidate_index: 2,
            refine_gain: gain,
            logit: 1.0,
            objective: 0.0,
            evaluations: 3,
        };
        let a = class_audit(&[rec(0, 0.0), rec(0, 0.5), rec(1, 0.0)], 3);
        assert_eq!(a[0].decisions, 2);
        assert_eq!(a[0].refined_fraction, 0.5);
        assert_eq!(a[0].mean_refine_gain, 0.25);
        assert_eq!(a[2].decisions, 0);
        assert_eq!(a[2].mean_logit, 0.0);
    }

    proptest! {
        #[test]
        fn json_round_trips(counts in proptest::collection::vec((0usize..50, 50usize..60), 1..12)) {
            let r = report(&counts);
            prop_assert!(r.is_consistent());
            let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
            prop_assert_eq!(&back, &r);
            prop_assert_eq!(back.to_json(), r.to_json());
        }
    }
}
