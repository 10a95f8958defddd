//! Rendering evaluation reports as JSON, CSV or text.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eval::EvalReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
    Text,
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
            out.push(b'\n');
            out
        }
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Text => render_text(report).into_bytes(),
    }
}

pub fn parse_report_json(bytes: &[u8]) -> Result<EvalReport, serde_json::Error> {
    serde_json::from_slice(bytes)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn render_csv(report: &EvalReport) -> Vec<u8> {
    let slots = report
        .records
        .iter()
        .map(|r| r.scores.len())
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());

    let mut header: Vec<String> = ["id", "decision", "gold", "correct", "tie", "failure"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..slots).map(|i| format!("score_{i}")));
    w.write_record(&header).expect("in-memory write");

    for r in &report.records {
        let mut row = vec![
            r.instance_id.clone(),
            opt(r.decision),
            opt(r.gold_index),
            opt(r.correct),
            r.tie_flag.to_string(),
            opt(r.failure.map(|f| f.as_str())),
        ];
        row.extend((0..slots).map(|i| opt(r.scores.get(i))));
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn render_text(report: &EvalReport) -> String {
    let mut s = String::new();
    let failed = report.total - report.scored;
    let _ = writeln!(s, "dataset: {}", report.dataset.label());
    let _ = writeln!(
        s,
        "instances: {} (scored {}, failed {}, ties {})",
        report.total, report.scored, failed, report.tie_count
    );
    let _ = writeln!(
        s,
        "accuracy: {:.2}% ({}/{})",
        report.accuracy * 100.0,
        report.correct_count,
        report.total
    );

    if !report.baselines.is_empty() {
        let width = report
            .baselines
            .iter()
            .map(|b| b.name.len())
            .max()
            .unwrap_or(0);
        let _ = writeln!(s, "\nreported accuracies:");
        for b in &report.baselines {
            let _ = writeln!(s, "  {:<width$}  {:>5.1}%", b.name, b.percent);
        }
    }

    let failures: Vec<_> = report
        .records
        .iter()
        .filter(|r| r.failure.is_some())
        .collect();
    if !failures.is_empty() {
        let _ = writeln!(s, "\nfailures:");
        for r in failures {
            let _ = writeln!(
                s,
                "  {}  {}  {}",
                r.instance_id,
                opt(r.failure.map(|f| f.as_str())),
                r.failure_detail.as_deref().unwrap_or("")
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Source;
    use crate::eval::{summarize, FailureReason, InstanceRecord};

    fn record(id: &str, correct: bool) -> InstanceRecord {
        InstanceRecord {
            instance_id: id.into(),
            scores: vec![0.75, 0.25],
            decision: Some(0),
            gold_index: Some(if correct { 0 } else { 1 }),
            correct: Some(correct),
            tie_flag: false,
            failure: None,
            failure_detail: None,
        }
    }

    fn pdp_report() -> EvalReport {
        let records = (0..60)
            .map(|i| record(&format!("pdp60-{:03}", i + 1), i < 41))
            .collect();
        summarize(Source::Pdp60, records)
    }

    #[test]
    fn text_accuracy_line() {
        let text = String::from_utf8(render_report(&pdp_report(), ReportFormat::Text)).unwrap();
        assert!(text.contains("accuracy: 68.33% (41/60)\n"), "{text}");
        let liu = text.find("Quan Liu").unwrap();
        let dhondt = text.find("Patric Dhondt").unwrap();
        assert!(dhondt < liu);
    }

    #[test]
    fn empty_report_json() {
        let report = summarize(Source::Custom, Vec::new());
        let json: serde_json::Value =
            serde_json::from_slice(&render_report(&report, ReportFormat::Json)).unwrap();
        assert_eq!(json["total"], 0);
        assert_eq!(json["accuracy"], 0.0);
        assert_eq!(json["records"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn json_round_trip() {
        let mut report = pdp_report();
        report.records[3] = InstanceRecord {
            scores: Vec::new(),
            decision: None,
            correct: None,
            failure: Some(FailureReason::DumpMissing),
            failure_detail: Some("no dump".into()),
            ..report.records[3].clone()
        };
        report.records[4].scores = vec![0.1 + 0.2, 1.0 / 3.0];
        let bytes = render_report(&report, ReportFormat::Json);
        assert_eq!(parse_report_json(&bytes).unwrap(), report);
    }

    #[test]
    fn csv_rows_and_columns() {
        let mut report = pdp_report();
        report.records[0].scores = vec![0.5, 0.3, 0.2];
        let bytes = render_report(&report, ReportFormat::Csv);
        let mut reader = csv::Reader::from_reader(bytes.as_slice());
        let header = reader.headers().unwrap().clone();
        assert_eq!(
            header.iter().collect::<Vec<_>>(),
            vec![
                "id", "decision", "gold", "correct", "tie", "failure", "score_0", "score_1",
                "score_2"
            ]
        );
        let rows: Vec<_> = reader.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), report.total);
        assert_eq!(&rows[1][8], "");
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), report.total + 1);
    }
}
