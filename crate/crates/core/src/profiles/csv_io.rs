use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::{Dataset, LabelSet, MarkerPanel, RateTable, Replicate, Sample, MAX_REPLICATES, MIN_REPLICATES};
use crate::error::{Error, Result};

const ID_COLUMN: &str = "sample_id";
const LABEL_COLUMN: &str = "fluid_labels";
const REPLICATE_COLUMN: &str = "replicate_id";

/// What happened while loading a profile table.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub rows: usize,
    pub samples_kept: usize,
    /// Ids of samples dropped by the housekeeping filter.
    pub excluded: Vec<String>,
}

struct PendingSample {
    labels: LabelSet,
    first_row: usize,
    replicates: Vec<Replicate>,
}

fn parse_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Reads one-row-per-replicate CSV into a [`Dataset`].
///
/// Rows sharing a `sample_id` form one sample (in order of first
/// appearance). Samples failing the housekeeping filter are dropped and
/// listed in the returned [`LoadReport`]. Row numbers in errors are file
/// line numbers, the header being line 1.
pub fn parse_profile_table(text: &str, panel: &MarkerPanel) -> Result<(Dataset, LoadReport)> {
    panel.validate()?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, "header", e.to_string()))?
        .clone();

    let position = |name: &str| headers.iter().position(|h| h == name);
    let mut columns = BTreeMap::new();
    for required in [ID_COLUMN, LABEL_COLUMN, REPLICATE_COLUMN]
        .into_iter()
        .chain(panel.markers.iter().map(String::as_str))
        .chain(panel.housekeeping.iter().map(String::as_str))
    {
        let idx = position(required).ok_or_else(|| parse_err(1, required, format!("missing column {required}")))?;
        columns.insert(required.to_string(), idx);
    }
    if let Some(extra) = headers.iter().find(|h| !columns.contains_key(*h)) {
        return Err(parse_err(1, extra, format!("unknown marker column {extra}")));
    }

    let mut order: Vec<String> = Vec::new();
    let mut pending: BTreeMap<String, PendingSample> = BTreeMap::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, "record", e.to_string()))?;
        rows += 1;
        let field = |name: &str| record.get(columns[name]).unwrap_or("");

        let id = field(ID_COLUMN).to_string();
        if id.is_empty() {
            return Err(parse_err(line, ID_COLUMN, "empty sample id"));
        }
        let labels: LabelSet = field(LABEL_COLUMN)
            .parse()
            .map_err(|e: Error| parse_err(line, LABEL_COLUMN, e.to_string()))?;

        let mut rfu = Vec::with_capacity(panel.len());
        for marker in &panel.markers {
            let raw = field(marker);
            let value: f64 = raw
                .parse()
                .map_err(|_| parse_err(line, marker, format!("non-numeric rfu '{raw}'")))?;
            if !(value >= 0.0) || !value.is_finite() {
                return Err(parse_err(line, marker, format!("rfu must be non-negative, got {raw}")));
            }
            rfu.push(value);
        }
        let mut hk = Vec::with_capacity(panel.housekeeping.len());
        for marker in &panel.housekeeping {
            hk.push(match field(marker) {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(parse_err(line, marker, format!("expected 0 or 1, got '{other}'"))),
            });
        }

        let entry = pending.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            PendingSample {
                labels,
                first_row: line,
                replicates: Vec::new(),
            }
        });
        if entry.labels != labels {
            return Err(parse_err(line, LABEL_COLUMN, format!("sample {id} has inconsistent fluid labels")));
        }
        entry.replicates.push(Replicate {
            rfu,
            housekeeping_detected: hk,
        });
    }

    let mut report = LoadReport {
        rows,
        ..LoadReport::default()
    };
    let mut samples = Vec::with_capacity(order.len());
    for id in order {
        let p = pending.remove(&id).expect("sample recorded in order");
        if !(MIN_REPLICATES..=MAX_REPLICATES).contains(&p.replicates.len()) {
            return Err(parse_err(
                p.first_row,
                REPLICATE_COLUMN,
                format!(
                    "sample {id} has {} replicates, expected {MIN_REPLICATES} to {MAX_REPLICATES}",
                    p.replicates.len()
                ),
            ));
        }
        let sample = Sample {
            id,
            labels: p.labels,
            replicates: p.replicates,
        };
        if sample.passes_housekeeping() {
            samples.push(sample);
        } else {
            report.excluded.push(sample.id);
        }
    }
    report.samples_kept = samples.len();
    Ok((Dataset::new(panel.clone(), samples)?, report))
}

/// Renders a dataset in the same schema [`parse_profile_table`] reads.
pub fn write_profile_table(ds: &Dataset) -> String {
    let mut out = String::new();
    let header: Vec<&str> = [ID_COLUMN, LABEL_COLUMN, REPLICATE_COLUMN]
        .into_iter()
        .chain(ds.panel.markers.iter().map(String::as_str))
        .chain(ds.panel.housekeeping.iter().map(String::as_str))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for s in &ds.samples {
        for (j, r) in s.replicates.iter().enumerate() {
            let _ = write!(out, "{},{},{}", s.id, s.labels, j + 1);
            for v in &r.rfu {
                let _ = write!(out, ",{v}");
            }
            for &h in &r.housekeeping_detected {
                let _ = write!(out, ",{}", u8::from(h));
            }
            out.push('\n');
        }
    }
    out
}

/// Reads a rate table: header `fluid_labels,<marker>...`, one row per label set.
pub fn read_rate_table(text: &str) -> Result<RateTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, "header", e.to_string()))?
        .clone();
    if headers.get(0) != Some(LABEL_COLUMN) {
        return Err(parse_err(1, LABEL_COLUMN, "first column must be fluid_labels"));
    }
    let markers: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, "record", e.to_string()))?;
        let labels: LabelSet = record[0]
            .parse()
            .map_err(|e: Error| parse_err(line, LABEL_COLUMN, e.to_string()))?;
        let mut rates = Vec::with_capacity(markers.len());
        for (m, raw) in markers.iter().zip(record.iter().skip(1)) {
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(line, m, format!("non-numeric rate '{raw}'")))?;
            rates.push(v);
        }
        if rates.len() != markers.len() {
            return Err(parse_err(line, "record", "wrong number of rate values"));
        }
        rows.insert(labels, rates);
    }
    let table = RateTable { markers, rows };
    table.validate()?;
    Ok(table)
}

pub fn write_rate_table(table: &RateTable) -> String {
    let mut out = String::from(LABEL_COLUMN);
    for m in &table.markers {
        let _ = write!(out, ",{m}");
    }
    out.push('\n');
    for (labels, rates) in &table.rows {
        let _ = write!(out, "{labels}");
        for r in rates {
            let _ = write!(out, ",{r}");
        }
        out.push('\n');
    }
    out
}
