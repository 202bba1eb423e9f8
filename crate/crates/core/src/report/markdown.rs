use std::collections::BTreeSet;
use std::fmt::Write;

use super::{BackboneRow, BenchmarkReport};

/// Placeholder for a value that was not computed (an em dash).
const MISSING: &str = "\u{2014}";

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |v| format!("{v:.4}"))
}

fn table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
}

/// Backbone name, with a footnote marker when the row failed.
fn name_cell(row: &BackboneRow, footnotes: &mut Vec<String>) -> String {
    match &row.error {
        None => row.backbone_name.clone(),
        Some(error) => {
            let note = error.replace('\n', " ");
            let n = match footnotes.iter().position(|e| *e == note) {
                Some(n) => n + 1,
                None => {
                    footnotes.push(note);
                    footnotes.len()
                }
            };
            format!("{}[^{n}]", row.backbone_name)
        }
    }
}

/// Human-readable summary tables. Failed rows show dash cells and a footnote
/// with the error.
pub fn render_markdown(report: &BenchmarkReport) -> String {
    let config = &report.config;
    let (seen, unseen) = (config.eval_split, config.unseen_split);
    let mut footnotes: Vec<String> = Vec::new();
    let names: Vec<String> = report
        .rows
        .iter()
        .map(|r| name_cell(r, &mut footnotes))
        .collect();

    let mut out = String::from("# Separability benchmark\n\n");
    let _ = writeln!(
        out,
        "Seed {}, {} clusters, {} restarts, decision threshold {}. Probe trained on split {}.\n",
        config.seed, config.clusters, config.restarts, config.threshold, config.train_split
    );

    out.push_str("## Overview\n\n");
    let mut header = vec!["Backbone".to_string()];
    header.extend(
        config
            .separability_splits
            .iter()
            .map(|s| format!("Separability {s}")),
    );
    header.push(format!("Probe EER {seen}"));
    let overview: Vec<Vec<String>> = report
        .rows
        .iter()
        .zip(&names)
        .map(|(row, name)| {
            let mut cells = vec![name.clone()];
            cells.extend(
                config
                    .separability_splits
                    .iter()
                    .map(|s| fmt(row.separability.get(s).map(|r| r.accuracy))),
            );
            cells.push(fmt(row.evaluation.get(&seen).map(|m| m.eer)));
            cells
        })
        .collect();
    table(&mut out, &header, &overview);

    let methods: BTreeSet<&str> = report
        .rows
        .iter()
        .filter_map(|r| r.evaluation.get(&unseen))
        .flat_map(|m| m.per_method.keys().map(String::as_str))
        .collect();
    let _ = write!(out, "\n## Unseen split {unseen}\n\n");
    let mut header: Vec<String> = [
        "Backbone",
        "Accuracy",
        "EER",
        "EER threshold",
        "AUC",
        "HTER",
        "HTER at EER threshold",
    ]
    .map(String::from)
    .to_vec();
    header.extend(methods.iter().map(|m| format!("Accuracy {m}")));
    let unseen_rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .zip(&names)
        .map(|(row, name)| {
            let m = row.evaluation.get(&unseen);
            let mut cells = vec![
                name.clone(),
                fmt(m.map(|m| m.accuracy_at_half)),
                fmt(m.map(|m| m.eer)),
                fmt(m.map(|m| m.eer_threshold)),
                fmt(m.map(|m| m.auc)),
                fmt(m.map(|m| m.hter_at_half)),
                fmt(m.map(|m| m.at_eer_threshold.hter)),
            ];
            cells.extend(
                methods
                    .iter()
                    .map(|tag| fmt(m.and_then(|m| m.per_method.get(*tag).copied()))),
            );
            cells
        })
        .collect();
    table(&mut out, &header, &unseen_rows);

    let _ = write!(out, "\n## Threshold shift {seen} to {unseen}\n\n");
    let header: Vec<String> = vec![
        "Backbone".into(),
        format!("EER threshold {seen}"),
        format!("EER threshold {unseen}"),
        format!("HTER {unseen} at {seen} threshold"),
        format!("HTER {unseen} at own threshold"),
    ];
    let shift_rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .zip(&names)
        .map(|(row, name)| {
            let u = row.evaluation.get(&unseen);
            vec![
                name.clone(),
                fmt(row.evaluation.get(&seen).map(|m| m.eer_threshold)),
                fmt(u.map(|m| m.eer_threshold)),
                fmt(row.threshold_transfer.as_ref().map(|t| t.hter)),
                fmt(u.map(|m| m.at_eer_threshold.hter)),
            ]
        })
        .collect();
    table(&mut out, &header, &shift_rows);

    if !report.manifest_warnings.is_empty() {
        out.push_str("\n## Manifest warnings\n\n");
        for w in &report.manifest_warnings {
            let _ = writeln!(out, "- {w}");
        }
    }
    if !footnotes.is_empty() {
        out.push('\n');
        for (i, note) in footnotes.iter().enumerate() {
            let _ = writeln!(out, "[^{}]: {note}", i + 1);
        }
    }
    out
}
