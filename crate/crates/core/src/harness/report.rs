//! Rendering of sweep results as csv, json, markdown tables and plot data.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::router::{cost_at, CostFamily};

use super::sweep::SweepResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
    Plotdata,
}

impl ReportFormat {
    pub fn file_name(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "sweep.csv",
            ReportFormat::Json => "result.json",
            ReportFormat::Markdown => "sweep.md",
            ReportFormat::Plotdata => "plotdata.csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "plotdata" | "plot" => Ok(ReportFormat::Plotdata),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

pub fn emit_report(result: &SweepResult, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => csv(result),
        ReportFormat::Json => serde_json::to_string_pretty(result).expect("sweep result serializes") + "\n",
        ReportFormat::Markdown => markdown(result),
        ReportFormat::Plotdata => plotdata(result),
    }
}

fn num(v: f64) -> String {
    format!("{v:.4}")
}

pub fn split_label(p: f64) -> String {
    format!("{:.0}%-{:.0}%", p * 100.0, (1.0 - p) * 100.0)
}

type Metric = (&'static str, &'static str, fn(&EvalReport) -> f64);

const METRICS: [Metric; 3] = [
    ("ap", "Average Precision (AP)", |r| r.ap),
    ("disc_roc", "Area under the discrete ROC curve (DiscROC)", |r| r.disc_roc),
    ("cont_roc", "Area under the continuous ROC curve (ContROC)", |r| r.cont_roc),
];

fn csv(result: &SweepResult) -> String {
    let mut out = String::from("criterion,easy_fraction,metric,value\n");
    let mut row = |who: &str, p: f64, metric: &str, v: f64| {
        let _ = writeln!(out, "{who},{},{metric},{}", num(p), num(v));
    };
    for c in &result.cells {
        let who = c.criterion.to_string();
        for (key, _, get) in METRICS {
            row(&who, c.easy_fraction, key, get(&c.report));
        }
        row(&who, c.easy_fraction, "tp", c.tp as f64);
        row(&who, c.easy_fraction, "fp", c.fp as f64);
        row(&who, c.easy_fraction, "achieved_easy_fraction", c.achieved_easy_fraction);
        row(&who, c.easy_fraction, "detection_s", c.cost.detection);
        row(&who, c.easy_fraction, "criterion_overhead_s", c.cost.criterion_overhead);
        row(&who, c.easy_fraction, "seconds_per_image", c.cost.avg_seconds_per_image);
    }
    for b in &result.baseline {
        for (key, _, get) in METRICS {
            row("random", b.easy_fraction, key, get(&b.mean));
            row("random", b.easy_fraction, &format!("{key}_stddev"), get(&b.stddev));
        }
        row("random", b.easy_fraction, "tp", b.mean_tp);
        row("random", b.easy_fraction, "fp", b.mean_fp);
        row("random", b.easy_fraction, "seconds_per_image", b.cost.avg_seconds_per_image);
    }
    out
}

fn markdown(result: &SweepResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Dataset `{}`: {} images, {} faces.\n",
        result.dataset, result.num_images, result.num_faces
    );
    let cols = result.splits.len();
    let _ = write!(out, "| Splitting criterion |");
    for &p in &result.splits {
        let _ = write!(out, " {} |", split_label(p));
    }
    let _ = write!(out, "\n|---|");
    out.push_str(&"---:|".repeat(cols));
    out.push('\n');

    let section = |out: &mut String, title: &str| {
        let _ = writeln!(out, "| **{title}** |{}", " |".repeat(cols));
    };

    for (_, title, get) in METRICS {
        section(&mut out, title);
        let _ = write!(out, "| Random (baseline) |");
        for &p in &result.splits {
            match result.baseline_at(p) {
                Some(b) => {
                    let _ = write!(out, " {} ± {} |", num(get(&b.mean)), num(get(&b.stddev)));
                }
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
        for criterion in &result.criteria {
            let _ = write!(out, "| {criterion} |");
            for &p in &result.splits {
                match result.cell(criterion, p) {
                    Some(c) => {
                        let _ = write!(out, " {} |", num(get(&c.report)));
                    }
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
    }

    section(&mut out, "Time (seconds)");
    let t = &result.timing;
    let interior_only = |out: &mut String, label: &str, v: f64| {
        let _ = write!(out, "| {label} |");
        for &p in &result.splits {
            if p > 0.0 && p < 1.0 {
                let _ = write!(out, " {} |", num(v));
            } else {
                out.push_str(" - |");
            }
        }
        out.push('\n');
    };
    interior_only(&mut out, "Image difficulty prediction", t.t_pred);
    interior_only(&mut out, "Estimation of n, avg (fast detector)", t.t_fast);
    for (label, family) in [
        ("Face detection", CostFamily::Free),
        ("Face detection + difficulty prediction", CostFamily::ScoreTable),
        ("Face detection + estimation of n, avg", CostFamily::Detector),
    ] {
        let _ = write!(out, "| {label} |");
        for &p in &result.splits {
            let _ = write!(out, " {} |", num(cost_at(family, p, t).avg_seconds_per_image));
        }
        out.push('\n');
    }
    out
}

fn plotdata(result: &SweepResult) -> String {
    let mut out = String::from("strategy,easy_fraction,seconds_per_image,ap,disc_roc,cont_roc\n");
    let mut row = |who: &str, p: f64, secs: f64, r: &EvalReport| {
        let _ = writeln!(
            out,
            "{who},{},{},{},{},{}",
            num(p),
            num(secs),
            num(r.ap),
            num(r.disc_roc),
            num(r.cont_roc)
        );
    };
    for c in &result.cells {
        row(&c.criterion.to_string(), c.easy_fraction, c.cost.avg_seconds_per_image, &c.report);
    }
    for b in &result.baseline {
        row("random", b.easy_fraction, b.cost.avg_seconds_per_image, &b.mean);
    }
    out
}
