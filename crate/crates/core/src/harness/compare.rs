//! Comparison tables across runs.
//!
//! Runs are grouped by (algorithm, reward kind); each group becomes one row
//! holding the median of every metric over its seeds. Within an algorithm,
//! every pair of reward kinds gets a delta line per metric, with the kind
//! later in [`RewardKind::ALL`] as the subject and the earlier one as baseline.

use super::RunSummary;
use crate::rewards::RewardKind;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub algorithm: String,
    pub reward_kind: String,
    pub runs: usize,
    pub converged: usize,
    /// Median over converged runs.
    pub e_start: Option<f64>,
    pub mean_reward: f64,
    pub mean_steps: f64,
    pub v_stdev: Option<f64>,
    pub eval_success: Option<f64>,
    pub eval_reward: Option<f64>,
    pub eval_steps: Option<f64>,
    /// Set for rows whose summary could not be read.
    pub invalid: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaLine {
    pub algorithm: String,
    pub subject: String,
    pub baseline: String,
    pub metric: &'static str,
    pub value: f64,
    /// `%` or `pp`.
    pub unit: &'static str,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonTable {
    pub rows: Vec<TableRow>,
    pub deltas: Vec<DeltaLine>,
}

/// Percentage by which convergence at `subject` episodes is faster than at `baseline`.
pub fn percent_faster(subject: f64, baseline: f64) -> f64 {
    (baseline - subject) / baseline * 100.0
}

/// Cuts `v` toward zero to one decimal, so 46.95 prints as 46.9.
pub fn truncate_tenths(v: f64) -> f64 {
    let scaled = v * 10.0;
    // absorb representation error such as 12.3 * 10 = 122.99999999999999
    let cut = (scaled + 1e-9 * scaled.signum()).trunc() / 10.0;
    if cut == 0.0 {
        0.0
    } else {
        cut
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn kind_rank(kind: &str) -> usize {
    RewardKind::ALL
        .iter()
        .position(|k| k.as_str() == kind)
        .unwrap_or(RewardKind::ALL.len())
}

pub fn compare(summaries: &[RunSummary]) -> ComparisonTable {
    let mut keys: Vec<(String, String)> = Vec::new();
    for s in summaries {
        let key = (s.algorithm.clone(), s.reward_kind.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(kind_rank(&a.1).cmp(&kind_rank(&b.1))).then(a.1.cmp(&b.1)));

    let rows: Vec<TableRow> = keys
        .iter()
        .map(|(alg, kind)| {
            let group: Vec<&RunSummary> = summaries
                .iter()
                .filter(|s| &s.algorithm == alg && &s.reward_kind == kind)
                .collect();
            let collect = |f: &dyn Fn(&RunSummary) -> Option<f64>| group.iter().filter_map(|s| f(s)).collect::<Vec<_>>();
            TableRow {
                algorithm: alg.clone(),
                reward_kind: kind.clone(),
                runs: group.len(),
                converged: group.iter().filter(|s| s.converged()).count(),
                e_start: median(collect(&|s| s.e_start.map(|e| e as f64))),
                mean_reward: median(collect(&|s| Some(s.mean_reward))).unwrap_or(f64::NAN),
                mean_steps: median(collect(&|s| Some(s.mean_steps))).unwrap_or(f64::NAN),
                v_stdev: median(collect(&|s| s.v_stdev)),
                eval_success: median(collect(&|s| s.eval.map(|e| e.success_rate))),
                eval_reward: median(collect(&|s| s.eval.map(|e| e.mean_reward))),
                eval_steps: median(collect(&|s| s.eval.map(|e| e.mean_steps))),
                invalid: None,
            }
        })
        .collect();

    let mut deltas = Vec::new();
    for (i, base) in rows.iter().enumerate() {
        for subj in rows.iter().skip(i + 1).filter(|r| r.algorithm == base.algorithm) {
            let mut push = |metric, value: Option<f64>, unit| {
                if let Some(value) = value.filter(|v| v.is_finite()) {
                    deltas.push(DeltaLine {
                        algorithm: base.algorithm.clone(),
                        subject: subj.reward_kind.clone(),
                        baseline: base.reward_kind.clone(),
                        metric,
                        value,
                        unit,
                    });
                }
            };
            let both = |a: Option<f64>, b: Option<f64>| a.zip(b);
            push(
                "convergence faster",
                both(subj.e_start, base.e_start).map(|(s, b)| percent_faster(s, b)),
                "%",
            );
            push(
                "reward change",
                Some((subj.mean_reward - base.mean_reward) / base.mean_reward.abs() * 100.0),
                "%",
            );
            push(
                "steps fewer",
                Some((base.mean_steps - subj.mean_steps) / base.mean_steps * 100.0),
                "%",
            );
            push(
                "stdev decrease",
                both(subj.v_stdev, base.v_stdev).map(|(s, b)| {
                    if b == 0.0 && s == 0.0 {
                        0.0
                    } else {
                        (b - s) / b * 100.0
                    }
                }),
                "%",
            );
            push(
                "success rate change",
                both(subj.eval_success, base.eval_success).map(|(s, b)| (s - b) * 100.0),
                "pp",
            );
        }
    }
    // normalise negative zero
    for d in &mut deltas {
        if d.value == 0.0 {
            d.value = 0.0;
        }
    }
    ComparisonTable { rows, deltas }
}

const HEADER: [&str; 12] = [
    "algorithm",
    "reward",
    "runs",
    "converged",
    "e_start",
    "mean_reward",
    "mean_steps",
    "v_stdev",
    "eval_success",
    "eval_reward",
    "eval_steps",
    "invalid",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

impl ComparisonTable {
    /// Adds a row for a run whose summary could not be loaded.
    pub fn push_invalid(&mut self, label: &str, reason: &str) {
        self.rows.push(TableRow {
            algorithm: label.to_string(),
            reward_kind: String::new(),
            runs: 0,
            converged: 0,
            e_start: None,
            mean_reward: f64::NAN,
            mean_steps: f64::NAN,
            v_stdev: None,
            eval_success: None,
            eval_reward: None,
            eval_steps: None,
            invalid: Some(reason.to_string()),
        });
    }

    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let valid = r.invalid.is_none();
                let f = |x: f64| if valid { format!("{x:.4}") } else { String::new() };
                vec![
                    r.algorithm.clone(),
                    r.reward_kind.clone(),
                    r.runs.to_string(),
                    r.converged.to_string(),
                    r.e_start.map(|e| format!("{e:.1}")).unwrap_or_default(),
                    f(r.mean_reward),
                    f(r.mean_steps),
                    opt(r.v_stdev),
                    opt(r.eval_success),
                    opt(r.eval_reward),
                    opt(r.eval_steps),
                    r.invalid.clone().unwrap_or_default(),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for row in self.cells() {
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }

    pub fn delta_lines(&self) -> Vec<String> {
        self.deltas
            .iter()
            .map(|d| {
                format!(
                    "{} {} vs {}: {} {:.1}{}",
                    d.algorithm,
                    d.subject,
                    d.baseline,
                    d.metric,
                    truncate_tenths(d.value),
                    d.unit
                )
            })
            .collect()
    }

    /// Column-aligned table followed by the delta lines.
    pub fn to_text(&self) -> String {
        let cells = self.cells();
        let mut widths: Vec<usize> = HEADER.iter().map(|h| h.len()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: Vec<&str>| {
            let s: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", s.join("  ").trim_end());
        };
        line(&mut out, HEADER.to_vec());
        for row in &cells {
            line(&mut out, row.iter().map(String::as_str).collect());
        }
        let deltas = self.delta_lines();
        if !deltas.is_empty() {
            out.push('\n');
            for d in deltas {
                let _ = writeln!(out, "{d}");
            }
        }
        out
    }
}
