//! Report emission: JSON lines for machines, fixed-width tables for people.

use std::fmt::Write as _;

use crate::aggregation::SafetyReport;
use crate::error::{Error, Result};

pub fn to_json_line(report: &SafetyReport) -> String {
    serde_json::to_string(report).expect("reports contain only finite numbers")
}

pub fn to_json_lines(reports: &[SafetyReport]) -> String {
    reports.iter().map(|r| to_json_line(r) + "\n").collect()
}

/// Parses one report per non-empty line.
pub fn parse_json_lines(text: &str, source: &str) -> Result<Vec<SafetyReport>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let de = &mut serde_json::Deserializer::from_str(line);
            serde_path_to_error::deserialize(de).map_err(|e| {
                let path = e.path().to_string();
                Error::input(format!("{source} line {}, {path}", i + 1), e.into_inner().to_string())
            })
        })
        .collect()
}

const COLUMNS: [&str; 12] = [
    "Scenario", "Precision", "Recall", "mAP", "MODA", "MODP", "MOTA", "MOTP [m]", "S_D", "S_T", "S", "Class",
];

fn metric_values(r: &SafetyReport) -> [Option<f64>; 10] {
    [
        r.precision, r.recall, r.map, r.moda, r.modp, r.mota, r.motp, r.s_d, r.s_t, r.s,
    ]
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

fn signed_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:+.2}"))
}

fn render(rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (v, w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    out
}

fn header() -> Vec<String> {
    COLUMNS.iter().map(|c| c.to_string()).collect()
}

/// One row per report, values rounded to two decimals.
pub fn format_table(reports: &[SafetyReport]) -> String {
    let mut rows = vec![header()];
    for r in reports {
        let mut row = vec![r.scenario.clone()];
        row.extend(metric_values(r).into_iter().map(cell));
        row.push(r.label.map_or_else(|| "-".to_string(), |l| l.to_string()));
        rows.push(row);
    }
    render(&rows)
}

/// Signed difference of every metric relative to the first report.
pub fn deltas(base: &SafetyReport, other: &SafetyReport) -> [Option<f64>; 10] {
    let a = metric_values(base);
    let b = metric_values(other);
    std::array::from_fn(|i| match (a[i], b[i]) {
        (Some(x), Some(y)) => Some(y - x),
        _ => None,
    })
}

/// Side-by-side table: each report followed by its deltas against the first one.
pub fn format_comparison(reports: &[SafetyReport]) -> Result<String> {
    if reports.len() < 2 {
        return Err(Error::input("compare", format!("need >= 2 reports, got {}", reports.len())));
    }
    let base = &reports[0];
    let mut rows = vec![header()];
    for (i, r) in reports.iter().enumerate() {
        let mut row = vec![r.scenario.clone()];
        row.extend(metric_values(r).into_iter().map(cell));
        row.push(r.label.map_or_else(|| "-".to_string(), |l| l.to_string()));
        rows.push(row);
        if i > 0 {
            let mut row = vec![format!("  delta vs {}", base.scenario)];
            row.extend(deltas(base, r).into_iter().map(signed_cell));
            row.push(String::new());
            rows.push(row);
        }
    }
    Ok(render(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::{evaluate_scenario, MetricWeights, SafetyLabel};
    use crate::config::EvaluationConfig;
    use crate::scenario::{parse_scenario, PerceptionLog};

    fn sample() -> SafetyReport {
        SafetyReport {
            scenario: "demo".into(),
            precision: Some(1.0 / 3.0),
            recall: Some(0.1 + 0.2),
            map: None,
            moda: Some(-0.25),
            modp: Some(0.812345678901234),
            mota: Some(0.5),
            motp: Some(1.23456789),
            motp_s: Some(0.7),
            f_c: 0.75,
            f_t: 1.0,
            t_dw: Some(-0.1),
            braking_time: 2.5,
            time_ramp_degenerate: false,
            s_d: Some(0.4),
            s_t: Some(0.45),
            s: Some(0.425),
            label: Some(SafetyLabel::Good),
            weights: MetricWeights::default(),
            frames: vec![],
            timings: vec![],
            critical: vec![],
            warnings: vec!["a".into()],
        }
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        let back = parse_json_lines(&to_json_lines(&[r.clone(), r.clone()]), "mem").unwrap();
        assert_eq!(back, vec![r.clone(), r]);
    }

    #[test]
    fn evaluated_report_round_trips() {
        let text = "{\"meta\":{\"name\":\"rt\"}}\n\
            {\"index\":0,\"ego\":{\"x\":0,\"y\":0,\"yaw\":0,\"v\":12.3},\"objects\":[{\"id\":\"p\",\"class\":\"pedestrian\",\"x\":9.1,\"y\":1.7,\"yaw\":0.3,\"l\":0.7,\"w\":0.6,\"vx\":0.1,\"vy\":-1.3}]}\n";
        let sc = parse_scenario(text, "mem").unwrap();
        let mut log = PerceptionLog::mirror_of(&sc);
        log.frames[0].detections[0].bbox.center_x += 0.137;
        let r = evaluate_scenario(&sc, &log, &EvaluationConfig::default()).unwrap();
        let back = parse_json_lines(&to_json_line(&r), "mem").unwrap();
        assert_eq!(back, vec![r]);
    }

    #[test]
    fn table_layout() {
        let t = format_table(&[sample()]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Scenario"));
        assert!(lines[2].contains("0.33"));
        assert!(lines[2].contains("-0.25"));
        assert!(lines[2].ends_with("good"));
    }

    #[test]
    fn comparison_deltas() {
        let a = sample();
        let mut b = sample();
        b.scenario = "other".into();
        b.s = Some(0.5);
        let d = deltas(&a, &b);
        assert!((d[9].unwrap() - 0.075).abs() < 1e-12);
        assert_eq!(d[0], Some(0.0));
        assert_eq!(d[2], None);
        assert!(format_comparison(&[a.clone(), b]).unwrap().contains("delta vs demo"));
        let err = format_comparison(&[a]).unwrap_err();
        assert!(err.to_string().contains("need >= 2"));
    }

    #[test]
    fn bad_line_reports_location() {
        let err = parse_json_lines("\n{\"scenario\": 3}\n", "r.jsonl").unwrap_err();
        assert!(err.to_string().contains("r.jsonl line 2"), "{err}");
    }
}
