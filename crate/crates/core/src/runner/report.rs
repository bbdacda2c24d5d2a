use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{probe_name, sample_std, RunError};
use crate::probe::ProbeSpec;
use crate::taskgen::Task;

/// One row of `report.csv`: a single shuffle of a single experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: String,
    pub format: String,
    pub range_lo: i64,
    pub range_hi: i64,
    pub mode: String,
    pub embedding: String,
    pub probe: String,
    pub shuffle_index: u64,
    pub metric: String,
    pub value: f64,
}

impl RunRecord {
    fn key(&self) -> (&str, &str, i64, i64, &str, &str, &str, &str) {
        (
            &self.task,
            &self.format,
            self.range_lo,
            self.range_hi,
            &self.mode,
            &self.embedding,
            &self.probe,
            &self.metric,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub task: String,
    pub format: String,
    pub range_lo: i64,
    pub range_hi: i64,
    pub mode: String,
    pub embedding: String,
    pub probe: String,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation; absent for a single shuffle.
    pub std: Option<f64>,
    pub n: usize,
}

/// Where a report came from. The timestamp is supplied by the caller so
/// that identical runs write identical files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub generator: String,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance {
            generator: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: None,
        }
    }
}

fn csv_err(e: csv::Error) -> RunError {
    RunError::Io(e.to_string())
}

pub fn write_report<W: Write>(w: W, records: &[RunRecord]) -> Result<(), RunError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record([
        "task",
        "format",
        "range_lo",
        "range_hi",
        "mode",
        "embedding",
        "probe",
        "shuffle_index",
        "metric",
        "value",
    ])
    .map_err(csv_err)?;
    for r in records {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_report<R: Read>(r: R) -> Result<Vec<RunRecord>, RunError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| RunError::Config(format!("report.csv: {e}")))
}

/// Groups records by everything except the shuffle, in first-seen order.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut groups: Vec<(&RunRecord, Vec<f64>)> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|(g, _)| g.key() == r.key()) {
            Some((_, v)) => v.push(r.value),
            None => groups.push((r, vec![r.value])),
        }
    }
    groups
        .into_iter()
        .map(|(r, v)| AggregateRow {
            task: r.task.clone(),
            format: r.format.clone(),
            range_lo: r.range_lo,
            range_hi: r.range_hi,
            mode: r.mode.clone(),
            embedding: r.embedding.clone(),
            probe: r.probe.clone(),
            metric: r.metric.clone(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            std: sample_std(&v),
            n: v.len(),
        })
        .collect()
}

#[derive(Serialize)]
struct AggregateFile<'a> {
    provenance: &'a Provenance,
    results: &'a [AggregateRow],
}

pub fn write_aggregate_json<W: Write>(mut w: W, rows: &[AggregateRow], provenance: &Provenance) -> Result<(), RunError> {
    serde_json::to_writer_pretty(
        &mut w,
        &AggregateFile {
            provenance,
            results: rows,
        },
    )
    .map_err(|e| RunError::Io(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

fn default_probe(task: &str) -> Option<String> {
    [Task::ListMax, Task::Decode, Task::Add]
        .into_iter()
        .find(|t| t.name() == task)
        .map(|t| probe_name(&ProbeSpec::for_task(t)))
}

/// Embeddings down, task and range across, `mean ± std` in each cell.
pub fn write_table_csv<W: Write>(w: W, rows: &[AggregateRow]) -> Result<(), RunError> {
    let mut cols: Vec<String> = Vec::new();
    let mut lines: Vec<String> = Vec::new();
    let col_of = |r: &AggregateRow| {
        let mut c = format!("{} {} [{},{}]", r.task, r.format, r.range_lo, r.range_hi);
        if r.mode != "interpolate" {
            c.push_str(&format!(" {}", r.mode));
        }
        c
    };
    let line_of = |r: &AggregateRow| {
        if default_probe(&r.task).is_some_and(|p| p == r.probe) {
            r.embedding.clone()
        } else {
            format!("{} ({})", r.embedding, r.probe)
        }
    };
    for r in rows {
        for (v, x) in [(&mut cols, col_of(r)), (&mut lines, line_of(r))] {
            if !v.contains(&x) {
                v.push(x);
            }
        }
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(std::iter::once("embedding".to_string()).chain(cols.iter().cloned()))
        .map_err(csv_err)?;
    for line in &lines {
        let mut rec = vec![line.clone()];
        for c in &cols {
            let cell = rows
                .iter()
                .find(|r| &line_of(r) == line && &col_of(r) == c)
                .map(|r| match r.std {
                    Some(s) => format!("{:.2} ± {:.2}", r.mean, s),
                    None => format!("{:.2}", r.mean),
                })
                .unwrap_or_default();
            rec.push(cell);
        }
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `report.csv`, `aggregate.json` and `table.csv`.
pub fn write_reports(dir: &Path, records: &[RunRecord], provenance: &Provenance) -> Result<(), RunError> {
    let create = |name: &str| -> Result<BufWriter<File>, RunError> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
    write_report(create("report.csv")?, records)?;
    let rows = aggregate(records);
    let mut w = create("aggregate.json")?;
    write_aggregate_json(&mut w, &rows, provenance)?;
    w.flush()?;
    let mut w = create("table.csv")?;
    write_table_csv(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}
