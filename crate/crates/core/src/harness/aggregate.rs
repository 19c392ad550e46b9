use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::trial::RunRecord;
use crate::error::{contract, Result};

/// Median of finite or infinite values; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a == b {
            a
        } else {
            (a + b) / 2.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub median: f64,
    pub per_seed: Vec<f64>,
}

/// Cross-seed summary of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub seeds: Vec<u64>,
    pub curve: Vec<CurvePoint>,
    /// Median steps-to-solve with unsolved trials counted as infinite.
    pub median_steps_to_solve: f64,
    /// Same, with unsolved trials clamped to the training horizon.
    pub median_steps_to_solve_clamped: f64,
    pub solved: usize,
    pub final_median_score: Option<f64>,
}

/// Median learning curve and steps-to-solve over `records`.
///
/// Every record must share the same evaluation steps.
pub fn aggregate(label: &str, records: &[RunRecord], horizon: u64) -> Result<Summary> {
    let first = records.first().ok_or_else(|| contract("aggregate needs at least one record"))?;
    let steps: Vec<u64> = first.eval_points.iter().map(|p| p.step).collect();
    for r in records {
        if r.eval_points.iter().map(|p| p.step).ne(steps.iter().copied()) {
            return Err(contract("records have different evaluation steps"));
        }
    }
    let curve: Vec<CurvePoint> = steps
        .iter()
        .enumerate()
        .map(|(i, &step)| {
            let per_seed: Vec<f64> = records.iter().map(|r| r.eval_points[i].score).collect();
            CurvePoint {
                step,
                median: median(&per_seed),
                per_seed,
            }
        })
        .collect();
    let solve: Vec<f64> = records
        .iter()
        .map(|r| r.steps_to_solve.map_or(f64::INFINITY, |s| s as f64))
        .collect();
    let clamped: Vec<f64> = solve.iter().map(|&s| s.min(horizon as f64)).collect();
    Ok(Summary {
        label: label.to_string(),
        seeds: records.iter().map(|r| r.seed).collect(),
        final_median_score: curve.last().map(|p| p.median),
        curve,
        median_steps_to_solve: median(&solve),
        median_steps_to_solve_clamped: median(&clamped),
        solved: records.iter().filter(|r| r.steps_to_solve.is_some()).count(),
    })
}

impl Summary {
    /// `step,median,seed_<s>...` rows.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("step,median");
        for s in &self.seeds {
            let _ = write!(out, ",seed_{s}");
        }
        out.push('\n');
        for p in &self.curve {
            let _ = write!(out, "{},{}", p.step, p.median);
            for v in &p.per_seed {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn fmt_steps(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.0}")
    } else {
        "unsolved".to_string()
    }
}

/// Median steps-to-solve, one row per method and one column per task.
pub fn summary_table(tasks: &[&str], rows: &[(String, Vec<Option<&Summary>>)]) -> String {
    let mut out = String::from("| |");
    for t in tasks {
        let _ = write!(out, " {t} |");
    }
    out.push_str("\n|---|");
    for _ in tasks {
        out.push_str("---|");
    }
    out.push('\n');
    for (label, cells) in rows {
        let _ = write!(out, "| {label} |");
        for c in cells {
            match c {
                Some(s) => {
                    let _ = write!(
                        out,
                        " {} ({}) |",
                        fmt_steps(s.median_steps_to_solve),
                        fmt_steps(s.median_steps_to_solve_clamped)
                    );
                }
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}
