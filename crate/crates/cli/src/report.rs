//! Summary tables built from stage outputs, written as CSV, JSON or Markdown.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use fedlab::analysis::BucketedF1;

use crate::error::{CliError, CliResult};
use crate::pipeline::{read_json, AttackSummary, CostRow, DeviationRow, GammaRow, RunDir, SweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Markdown,
}

/// Every table the report stage knows, with the stage that feeds it.
pub const TABLES: [(&str, &str); 7] = [
    ("attack_f1", "attack"),
    ("ldp_grid", "sweep (lambda)"),
    ("defense_grid", "sweep (mu)"),
    ("cost", "analyze (cost)"),
    ("deviation", "analyze (deviation)"),
    ("buckets", "analyze (buckets)"),
    ("gamma", "sweep (gamma)"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(name: &str, title: &str, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            title: title.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(cell).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("tables serialize");
        s.push('\n');
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        writeln!(out, "## {}\n", self.title).unwrap();
        writeln!(out, "| {} |", self.columns.join(" | ")).unwrap();
        writeln!(out, "|{}", "---|".repeat(self.columns.len())).unwrap();
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(md_cell).collect();
            writeln!(out, "| {} |", cells.join(" | ")).unwrap();
        }
        out
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn md_cell(v: &Value) -> String {
    match v.as_f64() {
        Some(x) if v.is_f64() => format!("{x:.4}"),
        _ => cell(v),
    }
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn build(dir: &RunDir, name: &str) -> CliResult<Table> {
    Ok(match name {
        "attack_f1" => {
            let rows: Vec<AttackSummary> = read_json(&dir.attack_summary(), "attack")?;
            let mut t = Table::new(name, "Attacker performance", &["attack", "precision", "recall", "f1", "f1_std", "users"]);
            for r in rows {
                t.push(vec![
                    r.attack.name().into(),
                    num(r.metrics.precision),
                    num(r.metrics.recall),
                    num(r.metrics.f1),
                    num(r.metrics.f1_std),
                    r.metrics.users.into(),
                ]);
            }
            t
        }
        "ldp_grid" | "defense_grid" => {
            let (family, title, param) = if name == "ldp_grid" {
                ("lambda", "IMIA F1 and Hit@10 under LDP", "lambda")
            } else {
                ("mu", "IMIA F1 and Hit@10 under the proximal defense", "mu")
            };
            let rows: Vec<SweepRow> = read_json(&dir.sweep_table(family), "sweep")?;
            let mut t = Table::new(name, title, &[param, "imia_f1", "random_f1", "hit10"]);
            for r in rows {
                t.push(vec![num(r.value), num(r.imia_f1), num(r.random_f1), num(r.test_hit)]);
            }
            t
        }
        "cost" => {
            let rows: Vec<CostRow> = read_json(&dir.analysis("cost"), "analyze")?;
            let mut t = Table::new(
                name,
                "Cost-effectiveness |dF1| / |dHit@10|",
                &["defense", "value", "reached_random_level", "delta_f1", "delta_hit", "ratio"],
            );
            for r in rows {
                let ratio = match (r.cost.infinite, r.cost.ratio) {
                    (true, _) => "inf".into(),
                    (false, Some(x)) => num(x),
                    (false, None) => Value::Null,
                };
                t.push(vec![
                    r.defense.into(),
                    num(r.value),
                    r.reached_random_level.into(),
                    num(r.cost.delta_f1),
                    num(r.cost.delta_hit),
                    ratio,
                ]);
            }
            t
        }
        "deviation" => {
            let rows: Vec<DeviationRow> = read_json(&dir.analysis("deviation"), "analyze")?;
            let mut t = Table::new(name, "Mean squared deviation from initialization", &["mu", "item", "user"]);
            for r in rows {
                t.push(vec![num(r.mu), num(r.item), num(r.user)]);
            }
            t
        }
        "buckets" => {
            let b: BucketedF1 = read_json(&dir.analysis("buckets"), "analyze")?;
            let mut t = Table::new(name, "IMIA F1 by interaction-count bucket", &["bucket", "users", "mean_f1"]);
            for r in b.rows {
                t.push(vec![r.bucket.into(), r.users.into(), num(r.mean_f1)]);
            }
            t
        }
        "gamma" => {
            let rows: Vec<GammaRow> = read_json(&dir.sweep_table("gamma"), "sweep")?;
            let mut t = Table::new(name, "IMIA F1 against gamma", &["gamma", "f1", "f1_std", "mean_iterations"]);
            for r in rows {
                t.push(vec![num(r.gamma), num(r.f1), num(r.f1_std), num(r.mean_iterations)]);
            }
            t
        }
        other => return Err(CliError::config("--table", format!("unknown table {other:?}"))),
    })
}

/// Builds the named tables, or every available one when `only` is empty.
/// Naming a table whose inputs are missing is an error; so is having no
/// tables at all.
pub fn collect_tables(dir: &RunDir, only: &[String]) -> CliResult<Vec<Table>> {
    if !only.is_empty() {
        let mut tables = Vec::new();
        let mut missing = Vec::new();
        for name in only {
            match build(dir, name) {
                Ok(t) => tables.push(t),
                Err(CliError::Missing(_)) => missing.push(format!("{name}: {}", stage_of(name))),
                Err(e) => return Err(e),
            }
        }
        if !missing.is_empty() {
            return Err(CliError::Missing(missing));
        }
        return Ok(tables);
    }
    let mut tables = Vec::new();
    let mut missing = Vec::new();
    for (name, stage) in TABLES {
        match build(dir, name) {
            Ok(t) => tables.push(t),
            Err(CliError::Missing(_)) => missing.push(format!("{name}: {stage}")),
            Err(e) => return Err(e),
        }
    }
    if tables.is_empty() {
        return Err(CliError::Missing(missing));
    }
    Ok(tables)
}

fn stage_of(name: &str) -> &'static str {
    TABLES.iter().find(|(n, _)| *n == name).map_or("unknown", |(_, s)| s)
}

/// Writes the tables under `<run>/report/` and returns the files written.
pub fn emit_report(dir: &RunDir, formats: &[Format], only: &[String]) -> CliResult<Vec<PathBuf>> {
    let tables = collect_tables(dir, only)?;
    let out = dir.path("report");
    fs::create_dir_all(&out)?;
    let mut written = Vec::new();
    for &format in formats {
        match format {
            Format::Csv | Format::Json => {
                for t in &tables {
                    let (ext, body) = match format {
                        Format::Csv => ("csv", t.to_csv()),
                        _ => ("json", t.to_json()),
                    };
                    let path = out.join(format!("{}.{ext}", t.name));
                    fs::write(&path, body)?;
                    written.push(path);
                }
            }
            Format::Markdown => {
                let mut body = String::from("# Experiment summary\n");
                for t in &tables {
                    body.push('\n');
                    body.push_str(&t.to_markdown());
                }
                let path = out.join("summary.md");
                fs::write(&path, body)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_lists_every_missing_stage() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_report(&RunDir::new(dir.path()), &[Format::Csv], &[]).unwrap_err();
        let text = err.to_string();
        for (name, _) in TABLES {
            assert!(text.contains(name), "{text}");
        }
        let named = emit_report(&RunDir::new(dir.path()), &[Format::Csv], &["gamma".into()]).unwrap_err();
        assert!(named.to_string().contains("gamma: sweep (gamma)"));
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let mut t = Table::new("x", "X", &["a", "b", "c"]);
        t.push(vec!["imia".into(), num(0.1 + 0.2), 3.into()]);
        t.push(vec!["inf".into(), num(1e-17), Value::Null]);
        let first = t.to_json();
        let back: Table = serde_json::from_str(&first).unwrap();
        assert_eq!(back.to_json(), first);
        assert_eq!(t.to_csv(), "a,b,c\nimia,0.30000000000000004,3\ninf,1e-17,\n");
    }

    #[test]
    fn markdown_layout() {
        let mut t = Table::new("x", "Title", &["k", "v"]);
        t.push(vec!["random".into(), num(0.2)]);
        assert_eq!(t.to_markdown(), "## Title\n\n| k | v |\n|---|---|\n| random | 0.2000 |\n");
    }
}
