//! Readers and writers for the on-disk formats.
//!
//! Delimited files may carry `#` comment lines (the provenance header written by this tool).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use decentralab_core::attribution::{AttributionOutcome, QuarantineEntry};
use decentralab_core::records::{self, collect_node_days, NodeDayBatch, NodeDayRecord, RawBlockRecord};
use decentralab_core::{LabelRegistry, MetricsRow};
use serde::Deserialize;

use crate::error::CliError;

pub type Result<T> = std::result::Result<T, CliError>;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(open(path)?))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    parse_error(path, line, e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeDayFormat {
    Delimited,
    JsonLines,
}

impl NodeDayFormat {
    /// `.jsonl` / `.ndjson` files are JSON lines; anything else is delimited.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson") => NodeDayFormat::JsonLines,
            _ => NodeDayFormat::Delimited,
        }
    }
}

#[derive(Deserialize)]
struct NodeDayRow {
    chain_id: String,
    day: NaiveDate,
    node_id: String,
    blocks: f64,
}

impl From<NodeDayRow> for NodeDayRecord {
    fn from(r: NodeDayRow) -> Self {
        NodeDayRecord {
            chain_id: r.chain_id,
            day: r.day,
            node_id: r.node_id,
            blocks: r.blocks,
        }
    }
}

/// Reads node-day production from a delimited file with a `chain_id,day,node_id,blocks`
/// header, or from JSON lines with the same keys.
pub fn parse_node_day_file(path: &Path, format: NodeDayFormat) -> Result<NodeDayBatch> {
    let mut rows = Vec::new();
    match format {
        NodeDayFormat::Delimited => {
            let mut rdr = csv_reader(path)?;
            let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
            for col in ["chain_id", "day", "node_id", "blocks"] {
                if !headers.iter().any(|h| h == col) {
                    return Err(parse_error(path, 1, format!("header lacks column `{col}`")));
                }
            }
            for rec in rdr.records() {
                let rec = rec.map_err(|e| csv_error(path, e))?;
                let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
                let row: NodeDayRow = rec
                    .deserialize(Some(&headers))
                    .map_err(|e| parse_error(path, line, e.to_string()))?;
                rows.push((line, row.into()));
            }
        }
        NodeDayFormat::JsonLines => {
            for (i, line) in BufReader::new(open(path)?).lines().enumerate() {
                let line = line.map_err(|source| CliError::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                if line.trim().is_empty() || line.starts_with('#') {
                    continue;
                }
                let row: NodeDayRow =
                    serde_json::from_str(&line).map_err(|e| parse_error(path, i + 1, e.to_string()))?;
                rows.push((i + 1, row.into()));
            }
        }
    }
    let batch = collect_node_days(rows).map_err(|e| CliError::in_file(path, e))?;
    if batch.zero_rows_dropped > 0 {
        log::warn!("{}: dropped {} zero-block rows", path.display(), batch.zero_rows_dropped);
    }
    Ok(batch)
}

/// Reads several node-day files and checks keys across all of them.
pub fn read_node_days(paths: &[PathBuf]) -> Result<NodeDayBatch> {
    let mut all = NodeDayBatch::default();
    for p in paths {
        let b = parse_node_day_file(p, NodeDayFormat::from_path(p))?;
        all.records.extend(b.records);
        all.zero_rows_dropped += b.zero_rows_dropped;
    }
    if paths.len() > 1 {
        let rows = all.records.iter().cloned().enumerate().map(|(i, r)| (i + 1, r));
        let dropped = all.zero_rows_dropped;
        all = collect_node_days(rows)?;
        all.zero_rows_dropped = dropped;
    }
    Ok(all)
}

/// Reads JSON-lines raw blocks, renormalizing shares and rejecting duplicate heights.
pub fn parse_raw_block_file(path: &Path) -> Result<Vec<RawBlockRecord>> {
    let mut blocks = Vec::new();
    for (i, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line.map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let block: RawBlockRecord =
            serde_json::from_str(&line).map_err(|e| parse_error(path, i + 1, e.to_string()))?;
        blocks.push(block.normalized().map_err(|e| CliError::in_file(path, e))?);
    }
    records::check_unique_heights(&blocks).map_err(|e| CliError::in_file(path, e))?;
    Ok(blocks)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(BufReader::new(open(path)?)).map_err(|e| parse_error(path, e.line(), e.to_string()))
}

pub fn read_registry(path: &Path) -> Result<LabelRegistry> {
    let reg: LabelRegistry = read_json(path)?;
    reg.validate().map_err(|e| CliError::in_file(path, e))?;
    Ok(reg)
}

/// Reads a metrics table as written by [`metrics_csv`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv_reader(path)?;
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let row: MetricsRow = rec.map_err(|e| csv_error(path, e))?;
        rows.push(row);
    }
    Ok(rows)
}

/// True when the delimited file's header names a `node_id` column.
pub fn is_node_day_file(path: &Path) -> Result<bool> {
    if NodeDayFormat::from_path(path) == NodeDayFormat::JsonLines {
        return Ok(true);
    }
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?;
    Ok(headers.iter().any(|h| h == "node_id"))
}

/// Reads a dated series with a `day` column and one value column (`value` or `column`).
pub fn read_series(path: &Path, column: Option<&str>) -> Result<Vec<(NaiveDate, f64)>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let day_col = headers
        .iter()
        .position(|h| h == "day" || h == "date")
        .ok_or_else(|| parse_error(path, 1, "header lacks a `day` column"))?;
    let value_col = match column {
        Some(c) => headers.iter().position(|h| h == c),
        None => headers.iter().position(|h| h == "value"),
    }
    .ok_or_else(|| parse_error(path, 1, format!("header lacks column `{}`", column.unwrap_or("value"))))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let day: NaiveDate = rec[day_col]
            .parse()
            .map_err(|e| parse_error(path, line, format!("bad date: {e}")))?;
        let v: f64 = rec[value_col]
            .parse()
            .map_err(|e| parse_error(path, line, format!("bad number: {e}")))?;
        out.push((day, v));
    }
    out.sort_by_key(|(d, _)| *d);
    Ok(out)
}

/// Column names of a delimited file.
pub fn headers(path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv_reader(path)?;
    let h = rdr.headers().map_err(|e| csv_error(path, e))?;
    Ok(h.iter().map(String::from).collect())
}

/// Dated series per chain. Long files carry a `chain_id` column; otherwise the file stem names
/// the chain.
pub fn read_chain_series(path: &Path, column: Option<&str>) -> Result<BTreeMap<String, Vec<(NaiveDate, f64)>>> {
    let cols = headers(path)?;
    let Some(chain_col) = cols.iter().position(|h| h == "chain_id") else {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok(BTreeMap::from([(stem, read_series(path, column)?)]));
    };
    let name = column.unwrap_or("value");
    let day_col = cols
        .iter()
        .position(|h| h == "day" || h == "date")
        .ok_or_else(|| parse_error(path, 1, "header lacks a `day` column"))?;
    let value_col = cols
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| parse_error(path, 1, format!("header lacks column `{name}`")))?;
    let mut out: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    let mut rdr = csv_reader(path)?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let day: NaiveDate = rec[day_col]
            .parse()
            .map_err(|e| parse_error(path, line, format!("bad date: {e}")))?;
        let v: f64 = rec[value_col]
            .parse()
            .map_err(|e| parse_error(path, line, format!("bad number: {e}")))?;
        out.entry(rec[chain_col].to_string()).or_default().push((day, v));
    }
    for v in out.values_mut() {
        v.sort_by_key(|(d, _)| *d);
    }
    Ok(out)
}

/// Exposure per chain from a JSON object `{chain: fraction}`; a `provenance` key is skipped.
pub fn read_exposures(path: &Path) -> Result<BTreeMap<String, f64>> {
    let raw: BTreeMap<String, serde_json::Value> = read_json(path)?;
    let mut map = BTreeMap::new();
    for (k, v) in raw {
        if k == "provenance" {
            continue;
        }
        let x = v
            .as_f64()
            .ok_or_else(|| parse_error(path, 0, format!("exposure for {k} is not a number")))?;
        map.insert(k, x);
    }
    if let Some((c, v)) = map.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(parse_error(path, 0, format!("exposure {v} for {c} is outside [0, 1]")));
    }
    Ok(map)
}

/// Covariates in wide form: `chain_id,day,<name>,<name>...`.
/// Covariate name → (chain, day) → value.
pub type CovariateTable = BTreeMap<String, BTreeMap<(String, NaiveDate), f64>>;

pub fn read_covariates(path: &Path) -> Result<CovariateTable> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.get(0) != Some("chain_id") || headers.get(1) != Some("day") {
        return Err(parse_error(path, 1, "covariate file must start with chain_id,day"));
    }
    let mut out: BTreeMap<String, BTreeMap<(String, NaiveDate), f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let day: NaiveDate = rec[1]
            .parse()
            .map_err(|e| parse_error(path, line, format!("bad date: {e}")))?;
        for (i, name) in headers.iter().enumerate().skip(2) {
            if rec[i].is_empty() {
                continue;
            }
            let v: f64 = rec[i]
                .parse()
                .map_err(|e| parse_error(path, line, format!("bad number in {name}: {e}")))?;
            out.entry(name.to_string()).or_default().insert((rec[0].to_string(), day), v);
        }
    }
    Ok(out)
}

/// Shortest decimal that round-trips after rounding to nine significant digits.
pub fn fmt_sig9(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    format!("{rounded:?}")
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from("chain_id,day,entropy,nodes,gini,nakamoto,hhi\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.chain_id,
            r.day,
            fmt_sig9(r.entropy),
            r.nodes as u64,
            fmt_sig9(r.gini),
            r.nakamoto as u64,
            fmt_sig9(r.hhi)
        );
    }
    s
}

pub fn node_days_csv(rows: &[NodeDayRecord]) -> String {
    let mut s = String::from("chain_id,day,node_id,blocks\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.chain_id, r.day, r.node_id, fmt_sig9(r.blocks));
    }
    s
}

pub fn quarantine_csv(rows: &[QuarantineEntry]) -> String {
    let mut s = String::from("chain_id,height,recipient,reason\n");
    for q in rows {
        let _ = writeln!(s, "{},{},{},{}", q.chain_id, q.height, quote(&q.recipient), quote(&q.reason));
    }
    s
}

pub fn outcomes_csv(rows: &[AttributionOutcome]) -> String {
    let mut s = String::from("height,producer_id,method,weight\n");
    for o in rows {
        let method = serde_json::to_value(o.method).expect("enum serializes");
        let _ = writeln!(
            s,
            "{},{},{},{}",
            o.block_height,
            o.producer_id,
            method.as_str().unwrap_or_default(),
            fmt_sig9(o.weight)
        );
    }
    s
}

/// CSV-quotes a field when needed.
pub fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}
