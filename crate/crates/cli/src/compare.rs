//! Metric deltas between two reports of the same experiment.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Delta {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    /// `b - a`.
    pub delta: f64,
    pub higher_is_better: bool,
    pub regression: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub experiment: String,
    pub tolerance: f64,
    pub deltas: Vec<Delta>,
    pub regressions: usize,
}

/// Headline metrics per experiment and whether larger values are better.
fn metrics(experiment: &str) -> Option<&'static [(&'static str, bool)]> {
    Some(match experiment {
        "classify" | "node-classify" => &[("mean_accuracy", true)],
        "graph-recon" => &[("f1", true), ("edge_density", false)],
        "kernel" => &[("B", false), ("C", false), ("D", false)],
        _ => return None,
    })
}

pub fn read_report(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Compare(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Compare(format!("{}: not a JSON report ({e})", path.display())))
}

fn field<'v>(report: &'v Value, key: &str, name: &str) -> Result<&'v Value> {
    report.get(key).ok_or_else(|| CliError::Compare(format!("{name}: missing key `{key}`")))
}

fn number(report: &Value, key: &str, name: &str) -> Result<f64> {
    field(report, key, name)?
        .as_f64()
        .ok_or_else(|| CliError::Compare(format!("{name}: key `{key}` is not a number")))
}

/// `a` is the reference; a metric regresses when `b` is worse by more than `tolerance`.
pub fn compare(a: &Value, b: &Value, names: (&str, &str), tolerance: f64) -> Result<Comparison> {
    let exp_a = field(a, "experiment", names.0)?.as_str().unwrap_or_default().to_string();
    let exp_b = field(b, "experiment", names.1)?.as_str().unwrap_or_default();
    if exp_a != exp_b {
        return Err(CliError::Compare(format!("experiment mismatch: `{exp_a}` vs `{exp_b}`")));
    }
    let list = metrics(&exp_a).ok_or_else(|| CliError::Compare(format!("unknown experiment `{exp_a}`")))?;
    let mut deltas = Vec::new();
    for &(metric, higher_is_better) in list {
        let (va, vb) = (number(a, metric, names.0)?, number(b, metric, names.1)?);
        let delta = vb - va;
        let worse = if higher_is_better { -delta } else { delta };
        deltas.push(Delta { metric: metric.into(), a: va, b: vb, delta, higher_is_better, regression: worse > tolerance });
    }
    let regressions = deltas.iter().filter(|d| d.regression).count();
    Ok(Comparison { experiment: exp_a, tolerance, deltas, regressions })
}

impl Comparison {
    pub fn lines(&self) -> Vec<String> {
        self.deltas
            .iter()
            .map(|d| {
                format!(
                    "{:<14} {:>12.6} -> {:>12.6}  delta {:+.6}{}",
                    d.metric,
                    d.a,
                    d.b,
                    d.delta,
                    if d.regression { "  REGRESSION" } else { "" }
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn identical_reports_have_zero_deltas() {
        let r = json!({"experiment": "kernel", "B": 3.0, "C": 1.0, "D": 0.5});
        let c = compare(&r, &r, ("a", "b"), 0.0).unwrap();
        assert!(c.deltas.iter().all(|d| d.delta == 0.0 && !d.regression));
    }

    #[test]
    fn direction_decides_regression() {
        let a = json!({"experiment": "kernel", "B": 3.0, "C": 1.0, "D": 0.5});
        let b = json!({"experiment": "kernel", "B": 2.0, "C": 1.0, "D": 0.7});
        let c = compare(&a, &b, ("a", "b"), 0.1).unwrap();
        assert_eq!(c.deltas.iter().map(|d| d.regression).collect::<Vec<_>>(), [false, false, true]);

        let a = json!({"experiment": "classify", "mean_accuracy": 0.36});
        let b = json!({"experiment": "classify", "mean_accuracy": 0.84});
        let c = compare(&a, &b, ("a", "b"), 0.01).unwrap();
        assert!((c.deltas[0].delta - 0.48).abs() < 1e-12 && c.regressions == 0);
        assert_eq!(compare(&b, &a, ("b", "a"), 0.01).unwrap().regressions, 1);
    }

    #[test]
    fn schema_errors_name_the_key() {
        let a = json!({"experiment": "graph-recon", "f1": 1.0, "edge_density": 0.05});
        let b = json!({"experiment": "graph-recon", "f1": 1.0});
        let e = compare(&a, &b, ("a.json", "b.json"), 0.0).unwrap_err();
        assert!(e.to_string().contains("`edge_density`") && e.to_string().contains("b.json"), "{e}");
        let e = compare(&a, &json!({"f1": 1.0}), ("a", "b"), 0.0).unwrap_err();
        assert!(e.to_string().contains("`experiment`"));
        let e = compare(&a, &json!({"experiment": "kernel"}), ("a", "b"), 0.0).unwrap_err();
        assert!(e.to_string().contains("mismatch"));
    }
}
