//! CSV and SVG output. Column schemas are listed in the README.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::compare::{ComparisonSummary, Stat};
use crate::error::{Error, Result};
use crate::metrics::{Event, RunReport};

pub const EVENTS_HEADER: [&str; 15] = [
    "time",
    "event",
    "part",
    "variant",
    "label",
    "verdict",
    "reason",
    "due",
    "destroyed",
    "batch",
    "samples_seen",
    "labels",
    "balanced_accuracy",
    "fault",
    "message",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn event_record(e: &Event) -> [String; 15] {
    let mut r: [String; 15] = Default::default();
    r[0] = e.time().to_string();
    r[1] = e.kind().to_string();
    match e {
        Event::PartProduced {
            t,
            variant,
            defective,
        } => {
            r[2] = t.to_string();
            r[3] = variant.to_string();
            r[4] = if *defective { "NOK" } else { "OK" }.to_string();
        }
        Event::Decision { t, decision } => {
            r[2] = t.to_string();
            r[5] = decision.verdict.as_str().to_string();
            r[6] = decision.reason.as_str().to_string();
        }
        Event::Submitted {
            part,
            due,
            destructive,
            ..
        } => {
            r[2] = part.to_string();
            r[7] = due.to_string();
            r[8] = destructive.to_string();
        }
        Event::ResultReturned {
            part,
            label,
            destroyed,
            ..
        } => {
            r[2] = part.to_string();
            r[4] = label.as_str().to_string();
            r[8] = destroyed.to_string();
        }
        Event::ModelRetrained {
            batch,
            samples_seen,
            ..
        } => {
            r[9] = batch.to_string();
            r[10] = samples_seen.to_string();
        }
        Event::FaultOnset { fault, .. } => r[13] = fault.to_string(),
        Event::EvalCheckpoint {
            labels,
            balanced_accuracy,
            ..
        } => {
            r[11] = labels.to_string();
            r[12] = opt(*balanced_accuracy);
        }
        Event::Warning { message, .. } => r[14] = message.clone(),
    }
    r
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(EVENTS_HEADER)?;
    for e in events {
        w.write_record(event_record(e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_curve(path: &Path, report: &RunReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time", "labels_collected", "balanced_accuracy"])?;
    for c in &report.curve {
        w.write_record([
            c.t.to_string(),
            c.labels.to_string(),
            opt(c.balanced_accuracy),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const SUMMARY_HEADER: [&str; 15] = [
    "strategy",
    "seed",
    "produced",
    "inspections",
    "destroyed",
    "shipped_ok",
    "shipped_defective",
    "labels",
    "nok_labels",
    "balance",
    "final_balanced_accuracy",
    "total_cost",
    "quality_ratio",
    "scrap_run_total",
    "latencies",
];

pub fn write_summary(path: &Path, report: &RunReport) -> Result<()> {
    let t = &report.totals;
    let oee = report.oee_proxy();
    let latencies = report
        .latencies
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(";");
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    w.write_record([
        report.strategy.name().to_string(),
        report.seed.to_string(),
        t.produced.to_string(),
        t.inspections.to_string(),
        t.destroyed.to_string(),
        t.shipped_ok.to_string(),
        t.shipped_defective.to_string(),
        report.labels.total.to_string(),
        report.labels.nok.to_string(),
        opt(report.dataset_balance()),
        opt(report.final_balanced_accuracy()),
        report.total_cost().to_string(),
        oee.quality_ratio.to_string(),
        oee.scrap_run_total.to_string(),
        latencies,
    ])?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub const COMPARISON_HEADER: [&str; 14] = [
    "row",
    "strategy",
    "replication",
    "seed",
    "inspections",
    "labels",
    "nok_labels",
    "balance",
    "final_balanced_accuracy",
    "total_cost",
    "mean_latency",
    "undetected_faults",
    "quality_ratio",
    "scrap_run_total",
];

/// Per-run rows (`row = run`) followed by `mean` and `std` rows per strategy.
pub fn write_comparison(path: &Path, summary: &ComparisonSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(COMPARISON_HEADER)?;
    for r in &summary.rows {
        w.write_record([
            "run".to_string(),
            r.strategy.name().to_string(),
            r.replication.to_string(),
            r.seed.to_string(),
            r.inspections.to_string(),
            r.labels.to_string(),
            r.nok_labels.to_string(),
            opt(r.balance),
            opt(r.final_balanced_accuracy),
            r.total_cost.to_string(),
            opt(r.mean_latency),
            r.undetected_faults.to_string(),
            r.quality_ratio.to_string(),
            r.scrap_run_total.to_string(),
        ])?;
    }
    for a in &summary.aggregates {
        for (row, pick) in [("mean", 0), ("std", 1)] {
            let f = |s: Option<Stat>| opt(s.map(|s| if pick == 0 { s.mean } else { s.std }));
            w.write_record([
                row.to_string(),
                a.strategy.name().to_string(),
                String::new(),
                String::new(),
                f(a.inspections),
                f(a.labels),
                String::new(),
                f(a.balance),
                f(a.final_balanced_accuracy),
                f(a.total_cost),
                f(a.mean_latency),
                String::new(),
                f(a.quality_ratio),
                f(a.scrap_run_total),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Line chart of mean balanced accuracy against labels collected, one
/// series per strategy.
pub fn curve_svg(summary: &ComparisonSummary) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let points = summary.aggregates.iter().flat_map(|a| a.mean_curve.iter());
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !x_min.is_finite() {
        (x_min, x_max, y_min, y_max) = (0.0, 1.0, 0.0, 1.0);
    }
    if x_max - x_min < 1e-9 {
        x_max = x_min + 1.0;
    }
    y_min = y_min.min(0.5);
    y_max = y_max.max(y_min + 0.05).min(1.0);
    let sx = |x: f64| PAD + (x - x_min) / (x_max - x_min) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y_min) / (y_max - y_min) * (H - 2.0 * PAD);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = H - PAD,
        r = W - PAD
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">labels collected ({x_min:.0} to {x_max:.0})</text>\n",
        W / 2.0,
        H - 15.0
    ));
    s.push_str(&format!(
        "<text x=\"15\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 {})\">balanced accuracy ({y_min:.2} to {y_max:.2})</text>\n",
        H / 2.0,
        H / 2.0
    ));
    for (i, a) in summary.aggregates.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let pts: Vec<String> = a
            .mean_curve
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{colour}\">{}</text>\n",
            W - PAD - 80.0,
            PAD + 15.0 * i as f64,
            a.strategy.name()
        ));
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_curve_svg(path: &Path, summary: &ComparisonSummary) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(curve_svg(summary).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Writes `events.csv`, `curve.csv` and `summary.csv` for one run.
pub fn write_run(dir: &Path, report: &RunReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_events(&dir.join("events.csv"), &report.events)?;
    write_curve(&dir.join("curve.csv"), report)?;
    write_summary(&dir.join("summary.csv"), report)
}
