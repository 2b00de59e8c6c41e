use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{attack_f1, macro_average, MacroMetrics};
use crate::attacks::{AttackKind, Prediction};
use crate::data::DatasetSplit;
use crate::error::{Error, Result};

/// One line of the per-user attack output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub attack: AttackKind,
    pub user: usize,
    pub touched: usize,
    pub predicted: Vec<usize>,
    pub iterations: usize,
    pub complete: bool,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScore {
    pub attack: AttackKind,
    pub records: Vec<AttackRecord>,
    pub summary: MacroMetrics,
}

/// Scores predictions against each client's training positives.
pub fn score_predictions(kind: AttackKind, predictions: &[Prediction], split: &DatasetSplit) -> Result<AttackScore> {
    let mut records = Vec::with_capacity(predictions.len());
    let mut metrics = Vec::with_capacity(predictions.len());
    for p in predictions {
        let client = split
            .client(p.user)
            .ok_or_else(|| Error::Argument(format!("prediction for unknown user {}", p.user)))?;
        let m = attack_f1(&p.predicted, &client.positives)?;
        metrics.push(m);
        records.push(AttackRecord {
            attack: kind,
            user: p.user,
            touched: p.touched,
            predicted: p.predicted.clone(),
            iterations: p.iterations,
            complete: p.complete,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        });
    }
    Ok(AttackScore {
        attack: kind,
        records,
        summary: macro_average(&metrics),
    })
}

/// One JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, rows: &[T]) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Header plus one row per record. Records must serialize to flat structs.
pub fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(crate::federation::csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Whitespace-separated columns with a `#` header line, as plotting tools
/// expect.
pub fn write_columns<W: Write>(mut w: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "# {}", header.join(" "))?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::shape("column row", header.len(), r.len()));
        }
        let cells: Vec<String> = r.iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{}", cells.join(" "))?;
    }
    w.flush()?;
    Ok(())
}
