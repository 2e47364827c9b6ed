//! Sweep result tables and run manifests.
//!
//! The long table has one row per cell and is the canonical artifact: it
//! round-trips losslessly (floats are written in the shortest form that
//! parses back to the same bits).  The wide table is a convenience pivot for
//! eyeballing method columns side by side and is write-only.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::Method;
use crate::{Error, Result};

const LONG_MAGIC: &str = "#drfo-report v1";
const WIDE_MAGIC: &str = "#drfo-report-wide v1";
const LONG_COLUMNS: &str = "method\tretention\tflip\tforbid\treplicate\tstatus\titeration\tqualified\tval_rmse\tval_dp\ttest_rmse\ttest_dp\trho0\trho1\ttau";

/// Metrics of one successfully trained and selected cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMetrics {
    /// Iteration of the selected checkpoint.
    pub selected_iteration: usize,
    /// Whether the accuracy budget held during selection.
    pub rmse_qualified: bool,
    pub val_rmse: f64,
    pub val_dp: f64,
    pub test_rmse: f64,
    pub test_dp: f64,
    /// Ambiguity radii handed to the adversary (0 when the method has none).
    pub rho: [f64; 2],
    /// Confidence threshold chosen by the gated method.
    pub tau: Option<f64>,
}

/// One sweep cell: a (method, scenario, replicate) triple plus its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRow {
    pub method: Method,
    pub retention: f64,
    pub flip_ratio: f64,
    pub forbid_fraction: f64,
    pub replicate: u64,
    /// `"ok"` or a one-line failure description.
    pub status: String,
    /// Present exactly when `status == "ok"`.
    pub metrics: Option<CellMetrics>,
}

impl CellRow {
    pub fn ok(
        method: Method,
        retention: f64,
        flip_ratio: f64,
        forbid_fraction: f64,
        replicate: u64,
        metrics: CellMetrics,
    ) -> CellRow {
        CellRow {
            method,
            retention,
            flip_ratio,
            forbid_fraction,
            replicate,
            status: "ok".into(),
            metrics: Some(metrics),
        }
    }

    pub fn failed(
        method: Method,
        retention: f64,
        flip_ratio: f64,
        forbid_fraction: f64,
        replicate: u64,
        reason: &str,
    ) -> CellRow {
        let mut status: String =
            reason.chars().map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c }).collect();
        if status.is_empty() {
            status = "failed".into();
        }
        CellRow { method, retention, flip_ratio, forbid_fraction, replicate, status, metrics: None }
    }

    /// Scenario sort key: rows group by method, then scenario, then replicate.
    fn sort_key(&self) -> (Method, u64, u64, u64, u64) {
        (
            self.method,
            self.retention.to_bits(),
            self.flip_ratio.to_bits(),
            self.forbid_fraction.to_bits(),
            self.replicate,
        )
    }
}

/// Sorts rows into the canonical report order in place.
pub fn sort_rows(rows: &mut [CellRow]) {
    rows.sort_by_key(|r| r.sort_key());
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Numerical(format!("{name} is not finite in a report row")));
    }
    Ok(())
}

fn push_f64(line: &mut String, v: f64) {
    let _ = write!(line, "\t{v}");
}

/// Renders the long-form table.  Rows are written in canonical order no
/// matter how the caller produced them.
pub fn write_report(kind: &str, rows: &[CellRow]) -> Result<String> {
    let mut sorted: Vec<CellRow> = rows.to_vec();
    sort_rows(&mut sorted);
    let mut out = format!("{LONG_MAGIC} kind={kind} rows={}\n{LONG_COLUMNS}\n", sorted.len());
    for row in &sorted {
        for (name, v) in [
            ("retention", row.retention),
            ("flip", row.flip_ratio),
            ("forbid", row.forbid_fraction),
        ] {
            check_finite(name, v)?;
        }
        let mut line = String::new();
        let _ = write!(
            line,
            "{}\t{}\t{}\t{}\t{}\t{}",
            row.method, row.retention, row.flip_ratio, row.forbid_fraction, row.replicate, row.status
        );
        match (&row.metrics, row.status.as_str()) {
            (Some(m), "ok") => {
                for (name, v) in [
                    ("val_rmse", m.val_rmse),
                    ("val_dp", m.val_dp),
                    ("test_rmse", m.test_rmse),
                    ("test_dp", m.test_dp),
                    ("rho0", m.rho[0]),
                    ("rho1", m.rho[1]),
                ] {
                    check_finite(name, v)?;
                }
                let _ = write!(line, "\t{}\t{}", m.selected_iteration, m.rmse_qualified);
                push_f64(&mut line, m.val_rmse);
                push_f64(&mut line, m.val_dp);
                push_f64(&mut line, m.test_rmse);
                push_f64(&mut line, m.test_dp);
                push_f64(&mut line, m.rho[0]);
                push_f64(&mut line, m.rho[1]);
                match m.tau {
                    Some(tau) => {
                        check_finite("tau", tau)?;
                        push_f64(&mut line, tau);
                    }
                    None => line.push('\t'),
                }
            }
            (None, "ok") => {
                return Err(Error::Usage("report row marked ok without metrics".into()))
            }
            (Some(_), _) => {
                return Err(Error::Usage("failed report row carries metrics".into()))
            }
            (None, _) => line.push_str("\t\t\t\t\t\t\t\t\t"),
        }
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(line_no: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse::<T>().map_err(|_| Error::parse(line_no, format!("bad {name} field {raw:?}")))
}

/// Parses a long-form table back into rows, checking the header, the column
/// line, the advertised row count and per-row field shapes.
pub fn read_report(text: &str) -> Result<(String, Vec<CellRow>)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty report"))?;
    let rest = header
        .strip_prefix(LONG_MAGIC)
        .ok_or_else(|| Error::parse(1, format!("missing {LONG_MAGIC:?} header")))?;
    let mut kind: Option<String> = None;
    let mut expected_rows: Option<usize> = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("kind=") {
            kind = Some(v.to_string());
        } else if let Some(v) = tok.strip_prefix("rows=") {
            expected_rows = Some(parse_field(1, "rows", v)?);
        } else {
            return Err(Error::parse(1, format!("unknown header token {tok:?}")));
        }
    }
    let kind = kind.ok_or_else(|| Error::parse(1, "header lacks kind="))?;
    let expected_rows = expected_rows.ok_or_else(|| Error::parse(1, "header lacks rows="))?;
    let (_, columns) = lines.next().ok_or_else(|| Error::parse(2, "missing column header"))?;
    if columns != LONG_COLUMNS {
        return Err(Error::parse(2, "column header does not match the v1 layout"));
    }
    let mut rows = Vec::with_capacity(expected_rows);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 15 {
            return Err(Error::parse(
                line_no,
                format!("expected 15 tab-separated fields, found {}", fields.len()),
            ));
        }
        let method = Method::parse(fields[0])
            .map_err(|_| Error::parse(line_no, format!("unknown method {:?}", fields[0])))?;
        let retention: f64 = parse_field(line_no, "retention", fields[1])?;
        let flip_ratio: f64 = parse_field(line_no, "flip", fields[2])?;
        let forbid_fraction: f64 = parse_field(line_no, "forbid", fields[3])?;
        let replicate: u64 = parse_field(line_no, "replicate", fields[4])?;
        let status = fields[5].to_string();
        if status.is_empty() {
            return Err(Error::parse(line_no, "empty status field"));
        }
        let metrics = if status == "ok" {
            let tau = if fields[14].is_empty() {
                None
            } else {
                Some(parse_field(line_no, "tau", fields[14])?)
            };
            Some(CellMetrics {
                selected_iteration: parse_field(line_no, "iteration", fields[6])?,
                rmse_qualified: parse_field(line_no, "qualified", fields[7])?,
                val_rmse: parse_field(line_no, "val_rmse", fields[8])?,
                val_dp: parse_field(line_no, "val_dp", fields[9])?,
                test_rmse: parse_field(line_no, "test_rmse", fields[10])?,
                test_dp: parse_field(line_no, "test_dp", fields[11])?,
                rho: [
                    parse_field(line_no, "rho0", fields[12])?,
                    parse_field(line_no, "rho1", fields[13])?,
                ],
                tau,
            })
        } else {
            for (i, f) in fields.iter().enumerate().skip(6) {
                if !f.is_empty() {
                    return Err(Error::parse(
                        line_no,
                        format!("failed row has non-empty metric column {i}"),
                    ));
                }
            }
            None
        };
        rows.push(CellRow {
            method,
            retention,
            flip_ratio,
            forbid_fraction,
            replicate,
            status,
            metrics,
        });
    }
    if rows.len() != expected_rows {
        return Err(Error::Integrity(format!(
            "report advertises {expected_rows} rows but contains {}",
            rows.len()
        )));
    }
    Ok((kind, rows))
}

/// Renders the pivoted table: one row per (scenario, replicate), one
/// `<method>_test_dp` / `<method>_test_rmse` column pair per method.
pub fn write_wide_report(kind: &str, rows: &[CellRow]) -> Result<String> {
    let mut sorted: Vec<CellRow> = rows.to_vec();
    sort_rows(&mut sorted);
    let methods: Vec<Method> = {
        let set: BTreeSet<Method> = sorted.iter().map(|r| r.method).collect();
        set.into_iter().collect()
    };
    let mut cells: Vec<(u64, u64, u64, u64)> = sorted
        .iter()
        .map(|r| {
            (r.retention.to_bits(), r.flip_ratio.to_bits(), r.forbid_fraction.to_bits(), r.replicate)
        })
        .collect();
    cells.sort_unstable();
    cells.dedup();
    let mut out = format!("{WIDE_MAGIC} kind={kind} rows={}\n", cells.len());
    out.push_str("retention\tflip\tforbid\treplicate");
    for m in &methods {
        let _ = write!(out, "\t{m}_test_dp\t{m}_test_rmse");
    }
    out.push('\n');
    for (ret_bits, flip_bits, forbid_bits, replicate) in cells {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}",
            f64::from_bits(ret_bits),
            f64::from_bits(flip_bits),
            f64::from_bits(forbid_bits),
            replicate
        );
        for m in &methods {
            let hit = sorted.iter().find(|r| {
                r.method == *m
                    && r.retention.to_bits() == ret_bits
                    && r.flip_ratio.to_bits() == flip_bits
                    && r.forbid_fraction.to_bits() == forbid_bits
                    && r.replicate == replicate
            });
            match hit.and_then(|r| r.metrics.as_ref()) {
                Some(metrics) => {
                    push_f64(&mut out, metrics.test_dp);
                    push_f64(&mut out, metrics.test_rmse);
                }
                None => out.push_str("\t\t"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Hex SHA-256 of a byte string; used to fingerprint run inputs.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Renders the sidecar manifest for a run: resolved configuration, base seed,
/// row count and fingerprints of any file inputs.
pub fn write_manifest(
    cfg: &ExperimentConfig,
    base_seed: u64,
    rows: usize,
    inputs: &[(String, String)],
) -> Result<String> {
    let mut root = toml::map::Map::new();
    root.insert("version".into(), toml::Value::Integer(1));
    root.insert("tool".into(), toml::Value::String(format!("drfo {}", env!("CARGO_PKG_VERSION"))));
    root.insert("kind".into(), toml::Value::String(cfg.sweep.kind.name().into()));
    root.insert(
        "base_seed".into(),
        toml::Value::String(base_seed.to_string()),
    );
    root.insert("rows".into(), toml::Value::Integer(i64::try_from(rows).unwrap_or(i64::MAX)));
    let mut input_table = toml::map::Map::new();
    for (path, digest) in inputs {
        input_table.insert(path.clone(), toml::Value::String(digest.clone()));
    }
    root.insert("inputs".into(), toml::Value::Table(input_table));
    let cfg_value = toml::Value::try_from(cfg)
        .map_err(|e| Error::Config(format!("could not serialise config: {e}")))?;
    root.insert("config".into(), cfg_value);
    toml::to_string_pretty(&toml::Value::Table(root))
        .map_err(|e| Error::Config(format!("could not serialise manifest: {e}")))
}

/// Writes `text` to `path`, creating parent directories as needed.
pub fn write_text_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}
