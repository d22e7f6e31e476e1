//! Order files in, plan artifacts out.
//!
//! Orders come as JSON
//!
//! ```json
//! {"board_len": 9.0,
//!  "sizes": [{"label": "XS", "marker_len": 3.0, "consumption": 3.0}],
//!  "demands": [78]}
//! ```
//!
//! or as CSV with the header `label,marker_len,consumption,demand`, in which
//! case the board length is supplied separately.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::{fabric_used, layer_length, validate_plan, CutPlan, Order, Section, SizeSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderFormat {
    Json,
    Csv,
}

impl OrderFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "json" => Some(OrderFormat::Json),
            "csv" => Some(OrderFormat::Csv),
            _ => None,
        }
    }
}

impl std::str::FromStr for OrderFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(OrderFormat::Json),
            "csv" => Ok(OrderFormat::Csv),
            other => Err(Error::Config(format!("unknown order format {other:?}"))),
        }
    }
}

fn parse_error(path: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        message: message.into(),
    }
}

pub fn parse_order_json(text: &str, source: &str) -> Result<Order> {
    serde_json::from_str(text).map_err(|e| parse_error(source, e.to_string()))
}

#[derive(Deserialize)]
struct CsvRow {
    label: String,
    marker_len: f64,
    consumption: f64,
    demand: i64,
}

const CSV_HEADER: [&str; 4] = ["label", "marker_len", "consumption", "demand"];

pub fn parse_order_csv(text: &str, board_len: f64, source: &str) -> Result<Order> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_error(source, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(parse_error(
            source,
            format!("line 1: header must be `{}`", CSV_HEADER.join(",")),
        ));
    }
    let mut sizes = Vec::new();
    let mut demands = Vec::new();
    for record in reader.deserialize::<CsvRow>() {
        let row = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(source, format!("line {line}: {e}"))
        })?;
        let line = sizes.len() + 2;
        if row.demand < 0 {
            return Err(parse_error(
                source,
                format!(
                    "line {line} (size {}): demand must be non-negative, got {}",
                    row.label, row.demand
                ),
            ));
        }
        sizes.push(SizeSpec::new(row.label, row.marker_len, row.consumption));
        demands.push(row.demand as u64);
    }
    Order::new(sizes, demands, board_len).map_err(|e| parse_error(source, e.to_string()))
}

/// Reads an order file. The format is taken from `format`, else from the
/// file extension. CSV files need `board_len`.
pub fn read_order(path: &Path, format: Option<OrderFormat>, board_len: Option<f64>) -> Result<Order> {
    let source = path.display().to_string();
    let format = format
        .or_else(|| OrderFormat::from_path(path))
        .ok_or_else(|| parse_error(&source, "cannot infer format; pass --format json|csv"))?;
    let text = fs::read_to_string(path).map_err(|e| parse_error(&source, e.to_string()))?;
    match format {
        OrderFormat::Json => parse_order_json(&text, &source),
        OrderFormat::Csv => {
            let board = board_len
                .ok_or_else(|| parse_error(&source, "CSV orders need a board length (--board-len)"))?;
            parse_order_csv(&text, board, &source)
        }
    }
}

/// One section of a plan artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionRow {
    pub iteration: usize,
    pub plies: u64,
    pub counts: Vec<u32>,
    pub garments: Vec<u64>,
    /// Garments per marker.
    pub marker_total: u64,
    /// Garments cut by the section.
    pub garment_total: u64,
    pub layer_len: f64,
}

/// A plan together with its accounting against an order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanArtifact {
    pub planner: String,
    pub labels: Vec<String>,
    pub board_len: f64,
    pub demands: Vec<u64>,
    pub sections: Vec<SectionRow>,
    pub total_produce: Vec<u64>,
    pub balance: Vec<i64>,
    pub total_garments: u64,
    pub fabric_used: f64,
    pub required_fabric: f64,
    pub waste: f64,
    pub feasible_exact: bool,
}

impl PlanArtifact {
    pub fn new(planner: &str, plan: &CutPlan, order: &Order) -> Result<Self> {
        let report = validate_plan(plan, order);
        let mut sections = Vec::with_capacity(plan.len());
        for (i, s) in plan.sections.iter().enumerate() {
            let garments: Vec<u64> = s.garments().collect();
            sections.push(SectionRow {
                iteration: i + 1,
                plies: s.plies,
                counts: s.counts.clone(),
                marker_total: s.counts.iter().map(|&c| c as u64).sum(),
                garment_total: garments.iter().sum(),
                garments,
                layer_len: layer_length(s, order)?,
            });
        }
        let fabric = fabric_used(plan, order)?;
        let required = order.required_fabric();
        Ok(PlanArtifact {
            planner: planner.to_string(),
            labels: order.labels().map(str::to_string).collect(),
            board_len: order.board_len(),
            demands: order.demands().to_vec(),
            total_garments: report.production.iter().sum(),
            total_produce: report.production,
            balance: report.balance,
            sections,
            fabric_used: fabric,
            required_fabric: required,
            waste: fabric - required,
            feasible_exact: report.feasible_exact,
        })
    }

    pub fn plan(&self) -> CutPlan {
        self.sections
            .iter()
            .map(|r| Section::new(r.plies, r.counts.clone()))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| parse_error("plan", e.to_string()))
    }

    /// Aligned text table: two lines per section (marker counts, then
    /// garments cut), followed by `Total Produce` and `Balance`.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["Iteration".to_string(), "Plies".to_string()];
        header.extend(self.labels.iter().cloned());
        header.push("Total".into());
        rows.push(header);
        for s in &self.sections {
            let mut counts = vec![s.iteration.to_string(), s.plies.to_string()];
            counts.extend(s.counts.iter().map(u32::to_string));
            counts.push(s.marker_total.to_string());
            rows.push(counts);
            let mut garments = vec![String::new(), String::new()];
            garments.extend(s.garments.iter().map(u64::to_string));
            garments.push(s.garment_total.to_string());
            rows.push(garments);
        }
        let mut produce = vec!["Total Produce".to_string(), "--".to_string()];
        produce.extend(self.total_produce.iter().map(u64::to_string));
        produce.push(self.total_garments.to_string());
        rows.push(produce);
        let mut balance = vec!["Balance".to_string(), "--".to_string()];
        balance.extend(self.balance.iter().map(i64::to_string));
        balance.push(self.balance.iter().sum::<i64>().to_string());
        rows.push(balance);

        let cols = rows[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1));
        let mut out = String::new();
        let n_sections = self.sections.len();
        for (i, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, w))| {
                    if c == 0 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
            // Rule under the header, after each section pair, and before totals.
            if i == 0 || (i % 2 == 0 && i <= 2 * n_sections) {
                let _ = writeln!(out, "{rule}");
            }
        }
        out
    }
}
