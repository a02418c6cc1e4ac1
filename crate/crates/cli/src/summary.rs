//! summary.md: per-(method, fraction) aggregates of results.csv.

use std::fmt::Write as _;

use crate::experiment::RunRecord;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub method: String,
    pub fraction: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub val_f1: Vec<f64>,
    pub failed: usize,
}

/// Groups in order of first appearance; failed runs are counted but not averaged.
pub fn group(records: &[RunRecord]) -> Vec<Group> {
    let mut groups: Vec<Group> = Vec::new();
    for r in records {
        let i = match groups.iter().position(|g| g.method == r.method && g.fraction == r.fraction) {
            Some(i) => i,
            None => {
                groups.push(Group {
                    method: r.method.clone(),
                    fraction: r.fraction,
                    precision: Vec::new(),
                    recall: Vec::new(),
                    f1: Vec::new(),
                    val_f1: Vec::new(),
                    failed: 0,
                });
                groups.len() - 1
            }
        };
        let g = &mut groups[i];
        match (r.ok(), r.precision, r.recall, r.f1, r.val_f1) {
            (true, Some(p), Some(rc), Some(f1), Some(v)) => {
                g.precision.push(p);
                g.recall.push(rc);
                g.f1.push(f1);
                g.val_f1.push(v);
            }
            _ => g.failed += 1,
        }
    }
    groups
}

const GUIDED_FINAL: &str = "bde:guided_bond+guided_bond";
const SUPERVISED_FINAL: &str = "bde:guided_bond+supervised";

pub fn render_summary(records: &[RunRecord]) -> String {
    let groups = group(records);
    let failed: usize = groups.iter().map(|g| g.failed).sum();
    let mut out = String::from("# Experiment summary\n\n");
    let _ = writeln!(out, "{} runs, {failed} failed. Standard deviations use the n-1 denominator.\n", records.len());
    out.push_str("| method | fraction | runs | failed | f1 mean | f1 std | precision mean | recall mean | val_f1 mean |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for g in &groups {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {:.12} | {:.12} | {:.12} | {:.12} | {:.12} |",
            g.method,
            g.fraction,
            g.f1.len(),
            g.failed,
            mean(&g.f1),
            sample_std(&g.f1),
            mean(&g.precision),
            mean(&g.recall),
            mean(&g.val_f1)
        );
    }

    let gaps: Vec<(f64, f64)> = groups
        .iter()
        .filter(|g| g.method == GUIDED_FINAL && !g.f1.is_empty())
        .filter_map(|guided| {
            groups
                .iter()
                .find(|s| s.method == SUPERVISED_FINAL && s.fraction == guided.fraction && !s.f1.is_empty())
                .map(|s| (guided.fraction, (mean(&guided.f1) - mean(&s.f1)).abs()))
        })
        .collect();
    if !gaps.is_empty() {
        let _ = writeln!(out, "\n## Final-method ablation\n\n| fraction | abs(f1 mean {GUIDED_FINAL} - f1 mean {SUPERVISED_FINAL}) |");
        out.push_str("|---|---|\n");
        for (fraction, gap) in gaps {
            let _ = writeln!(out, "| {fraction} | {gap:.12} |");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(method: &str, fraction: f64, f1: Option<f64>) -> RunRecord {
        RunRecord {
            method: method.into(),
            fraction,
            seed: 0,
            precision: f1,
            recall: f1,
            f1,
            val_f1: f1,
            kept_entities: 0,
            wall_ms: 0,
            error: if f1.is_some() { String::new() } else { "boom".into() },
        }
    }

    #[test]
    fn statistics() {
        assert_eq!(mean(&[]), 0.0);
        assert_eq!(sample_std(&[0.3]), 0.0);
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn groups_skip_failures() {
        let records =
            vec![record("a", 0.1, Some(0.5)), record("a", 0.1, None), record("b", 0.1, Some(1.0)), record("a", 0.1, Some(0.7))];
        let groups = group(&records);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].f1, vec![0.5, 0.7]);
        assert_eq!(groups[0].failed, 1);
        let text = render_summary(&records);
        assert!(text.contains("| a | 0.1 | 2 | 1 | 0.600000000000 |"));
        assert!(!text.contains("ablation"));
    }

    #[test]
    fn ablation_gap_is_reported() {
        let records = vec![record(GUIDED_FINAL, 0.05, Some(0.25)), record(SUPERVISED_FINAL, 0.05, Some(0.75))];
        assert!(render_summary(&records).contains("| 0.05 | 0.500000000000 |"));
    }
}
