//! Deterministic CSV and manifest output.
//!
//! Every file an experiment produces goes through this module so that the
//! same run on the same seed yields byte-identical output: floats are printed
//! with 17 significant digits (exact `f64` round trip), rows are written in a
//! fixed order, and manifests carry content hashes instead of timestamps.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::path::{Path, PathBuf};

use crate::config::ExperimentSpec;
use crate::engine::{StepSink, TrajectoryStep};
use crate::error::{Error, Result};

/// Fixed-width scientific notation with 17 significant digits; parsing the
/// result recovers the exact bit pattern.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidConfig(format!("not a float: {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::InvalidConfig(format!("not a count: {s:?}")))
}

fn parse_bool(s: &str) -> Result<bool> {
    s.trim()
        .parse::<bool>()
        .map_err(|_| Error::InvalidConfig(format!("not a bool: {s:?}")))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(Error::from)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(Error::from)
}

fn expect_header(reader: &mut csv::Reader<File>, expected: &[&str], path: &Path) -> Result<()> {
    let got = reader.headers()?;
    if got.len() != expected.len() || got.iter().zip(expected).any(|(g, e)| g != *e) {
        return Err(Error::InvalidConfig(format!(
            "{} has header {:?}, expected {:?}",
            path.display(),
            got.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    Ok(())
}

fn field<'a>(record: &'a csv::StringRecord, idx: usize, path: &Path) -> Result<&'a str> {
    record.get(idx).ok_or_else(|| {
        Error::InvalidConfig(format!("{}: row is missing column {idx}", path.display()))
    })
}

// ---------------------------------------------------------------------------
// Trajectory stream

/// One row of a recorded trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub n: usize,
    pub u: Vec<f64>,
    pub u_star: Option<Vec<f64>>,
    pub tracking_sq_error: Option<f64>,
    pub stage_cost: f64,
}

/// Writes steps to CSV as they are produced, so horizon-3e5 runs never hold
/// the trajectory in memory. Columns: `n`, the setpoint coordinates, the
/// instantaneous-optimizer coordinates plus squared tracking error when an
/// oracle runs alongside, and the realized stage cost.
pub struct TrajectoryCsvSink {
    writer: csv::Writer<File>,
    dim_u: usize,
    with_oracle: bool,
    rows: usize,
}

impl TrajectoryCsvSink {
    pub fn create(path: &Path, dim_u: usize, with_oracle: bool) -> Result<Self> {
        if dim_u == 0 {
            return Err(Error::InvalidConfig("trajectory needs dim_u >= 1".into()));
        }
        let mut writer = csv_writer(path)?;
        let mut header = vec!["n".to_string()];
        header.extend((0..dim_u).map(|j| format!("u_{j}")));
        if with_oracle {
            header.extend((0..dim_u).map(|j| format!("u_star_{j}")));
            header.push("tracking_sq_error".to_string());
        }
        header.push("stage_cost".to_string());
        writer.write_record(&header)?;
        Ok(TrajectoryCsvSink { writer, dim_u, with_oracle, rows: 0 })
    }

    /// Flush and return the number of data rows written.
    pub fn finish(mut self) -> Result<usize> {
        self.writer.flush()?;
        Ok(self.rows)
    }
}

impl StepSink for TrajectoryCsvSink {
    fn record(&mut self, row: &TrajectoryStep) -> Result<()> {
        if row.u.len() != self.dim_u {
            return Err(Error::DimensionMismatch(format!(
                "trajectory sink expects dim {}, got {}",
                self.dim_u,
                row.u.len()
            )));
        }
        let mut rec = Vec::with_capacity(2 * self.dim_u + 3);
        rec.push(row.n.to_string());
        rec.extend(row.u.iter().map(|v| fmt_f64(*v)));
        if self.with_oracle {
            let (u_star, err) = match (&row.u_star, row.tracking_sq_error) {
                (Some(u_star), Some(err)) if u_star.len() == self.dim_u => (u_star, err),
                _ => {
                    return Err(Error::InvalidConfig(
                        "trajectory sink was opened with oracle columns but the step \
                         carries no optimizer"
                            .into(),
                    ))
                }
            };
            rec.extend(u_star.iter().map(|v| fmt_f64(*v)));
            rec.push(fmt_f64(err));
        }
        rec.push(fmt_f64(row.stage_cost));
        self.writer.write_record(&rec)?;
        self.rows += 1;
        Ok(())
    }
}

/// Parsed trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub dim_u: usize,
    pub with_oracle: bool,
    pub rows: Vec<TrajectoryRow>,
}

pub fn read_trajectory_csv(path: &Path) -> Result<TrajectoryTable> {
    let mut reader = csv_reader(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("n")
        || header.last().map(String::as_str) != Some("stage_cost")
    {
        return Err(Error::InvalidConfig(format!(
            "{} is not a trajectory file",
            path.display()
        )));
    }
    let dim_u = header.iter().filter(|h| h.starts_with("u_") && !h.starts_with("u_star_")).count();
    let with_oracle = header.iter().any(|h| h == "tracking_sq_error");
    let expected_cols = 1 + dim_u + if with_oracle { dim_u + 1 } else { 0 } + 1;
    if dim_u == 0 || header.len() != expected_cols {
        return Err(Error::InvalidConfig(format!(
            "{} has a malformed trajectory header",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let n = parse_usize(field(&record, 0, path)?)?;
        let mut col = 1;
        let mut u = Vec::with_capacity(dim_u);
        for _ in 0..dim_u {
            u.push(parse_f64(field(&record, col, path)?)?);
            col += 1;
        }
        let (u_star, tracking_sq_error) = if with_oracle {
            let mut s = Vec::with_capacity(dim_u);
            for _ in 0..dim_u {
                s.push(parse_f64(field(&record, col, path)?)?);
                col += 1;
            }
            let err = parse_f64(field(&record, col, path)?)?;
            col += 1;
            (Some(s), Some(err))
        } else {
            (None, None)
        };
        let stage_cost = parse_f64(field(&record, col, path)?)?;
        rows.push(TrajectoryRow { n, u, u_star, tracking_sq_error, stage_cost });
    }
    Ok(TrajectoryTable { dim_u, with_oracle, rows })
}

// ---------------------------------------------------------------------------
// Step-size sweep

/// One step size of an error-vs-step-size sweep. `tau_linear` and
/// `tau_quadratic` are the reference curves proportional to the step size and
/// its square, for plotting next to the measured error. `stable` marks runs
/// that stayed bounded; unstable points are reported but excluded from fits.
#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub alpha: f64,
    pub mse: f64,
    pub tau_linear: f64,
    pub tau_quadratic: f64,
    pub stable: bool,
}

const MSE_HEADER: [&str; 5] = ["alpha", "mse", "tau_linear", "tau_quadratic", "stable"];

pub fn write_mse_csv(path: &Path, rows: &[MseRow]) -> Result<()> {
    let mut writer = csv_writer(path)?;
    writer.write_record(MSE_HEADER)?;
    for r in rows {
        writer.write_record(&[
            fmt_f64(r.alpha),
            fmt_f64(r.mse),
            fmt_f64(r.tau_linear),
            fmt_f64(r.tau_quadratic),
            r.stable.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_mse_csv(path: &Path) -> Result<Vec<MseRow>> {
    let mut reader = csv_reader(path)?;
    expect_header(&mut reader, &MSE_HEADER, path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(MseRow {
            alpha: parse_f64(field(&record, 0, path)?)?,
            mse: parse_f64(field(&record, 1, path)?)?,
            tau_linear: parse_f64(field(&record, 2, path)?)?,
            tau_quadratic: parse_f64(field(&record, 3, path)?)?,
            stable: parse_bool(field(&record, 4, path)?)?,
        });
    }
    Ok(rows)
}

/// Least-squares line through the log-log sweep points that were stable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub points_used: usize,
}

const FIT_HEADER: [&str; 3] = ["slope", "intercept", "points_used"];

pub fn write_fit_csv(path: &Path, fit: &SlopeFit) -> Result<()> {
    let mut writer = csv_writer(path)?;
    writer.write_record(FIT_HEADER)?;
    writer.write_record(&[
        fmt_f64(fit.slope),
        fmt_f64(fit.intercept),
        fit.points_used.to_string(),
    ])?;
    writer.flush()?;
    Ok(())
}

pub fn read_fit_csv(path: &Path) -> Result<SlopeFit> {
    let mut reader = csv_reader(path)?;
    expect_header(&mut reader, &FIT_HEADER, path)?;
    let record = reader
        .records()
        .next()
        .ok_or_else(|| Error::InvalidConfig(format!("{} is empty", path.display())))??;
    Ok(SlopeFit {
        slope: parse_f64(field(&record, 0, path)?)?,
        intercept: parse_f64(field(&record, 1, path)?)?,
        points_used: parse_usize(field(&record, 2, path)?)?,
    })
}

// ---------------------------------------------------------------------------
// Feeder comparison

/// One (compliance distribution, algorithm) cell of the feeder comparison,
/// in long form so the whole table plots with a single groupby.
#[derive(Debug, Clone, PartialEq)]
pub struct OpfTableRow {
    pub family: String,
    pub support_lo: f64,
    pub support_hi: f64,
    /// `sofo` or `dofo`.
    pub algorithm: String,
    pub pc_kw2: f64,
    pub vd_pu2: f64,
    pub band_violation_fraction: f64,
    pub inverter_violation_steps: usize,
    pub replications_used: usize,
    pub aborted_replications: usize,
    pub baseline_vd_pu2: f64,
    pub baseline_band_violation_fraction: f64,
}

const OPF_HEADER: [&str; 12] = [
    "family",
    "support_lo",
    "support_hi",
    "algorithm",
    "pc_kw2",
    "vd_pu2",
    "band_violation_fraction",
    "inverter_violation_steps",
    "replications_used",
    "aborted_replications",
    "baseline_vd_pu2",
    "baseline_band_violation_fraction",
];

pub fn write_opf_table_csv(path: &Path, rows: &[OpfTableRow]) -> Result<()> {
    let mut writer = csv_writer(path)?;
    writer.write_record(OPF_HEADER)?;
    for r in rows {
        writer.write_record(&[
            r.family.clone(),
            fmt_f64(r.support_lo),
            fmt_f64(r.support_hi),
            r.algorithm.clone(),
            fmt_f64(r.pc_kw2),
            fmt_f64(r.vd_pu2),
            fmt_f64(r.band_violation_fraction),
            r.inverter_violation_steps.to_string(),
            r.replications_used.to_string(),
            r.aborted_replications.to_string(),
            fmt_f64(r.baseline_vd_pu2),
            fmt_f64(r.baseline_band_violation_fraction),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_opf_table_csv(path: &Path) -> Result<Vec<OpfTableRow>> {
    let mut reader = csv_reader(path)?;
    expect_header(&mut reader, &OPF_HEADER, path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(OpfTableRow {
            family: field(&record, 0, path)?.to_string(),
            support_lo: parse_f64(field(&record, 1, path)?)?,
            support_hi: parse_f64(field(&record, 2, path)?)?,
            algorithm: field(&record, 3, path)?.to_string(),
            pc_kw2: parse_f64(field(&record, 4, path)?)?,
            vd_pu2: parse_f64(field(&record, 5, path)?)?,
            band_violation_fraction: parse_f64(field(&record, 6, path)?)?,
            inverter_violation_steps: parse_usize(field(&record, 7, path)?)?,
            replications_used: parse_usize(field(&record, 8, path)?)?,
            aborted_replications: parse_usize(field(&record, 9, path)?)?,
            baseline_vd_pu2: parse_f64(field(&record, 10, path)?)?,
            baseline_band_violation_fraction: parse_f64(field(&record, 11, path)?)?,
        });
    }
    Ok(rows)
}

/// Voltage magnitude at the traced agent, one row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub n: usize,
    pub baseline: f64,
    pub sofo: f64,
    pub dofo: f64,
}

const TRACE_HEADER: [&str; 4] = ["n", "baseline", "sofo", "dofo"];

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut writer = csv_writer(path)?;
    writer.write_record(TRACE_HEADER)?;
    for r in rows {
        writer.write_record(&[
            r.n.to_string(),
            fmt_f64(r.baseline),
            fmt_f64(r.sofo),
            fmt_f64(r.dofo),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut reader = csv_reader(path)?;
    expect_header(&mut reader, &TRACE_HEADER, path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(TraceRow {
            n: parse_usize(field(&record, 0, path)?)?,
            baseline: parse_f64(field(&record, 1, path)?)?,
            sofo: parse_f64(field(&record, 2, path)?)?,
            dofo: parse_f64(field(&record, 3, path)?)?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Contraction probes

/// One probed state of a one-step contraction check: measured mean-square
/// next-distance against the certified bound, with the Monte-Carlo standard
/// error that scales the slack.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRow {
    pub state_distance_sq: f64,
    pub lhs_mean: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub slack: f64,
    pub normalized_slack: f64,
}

const CONTRACTION_HEADER: [&str; 6] =
    ["state_distance_sq", "lhs_mean", "lhs_se", "rhs", "slack", "normalized_slack"];

pub fn write_contraction_csv(path: &Path, rows: &[ContractionRow]) -> Result<()> {
    let mut writer = csv_writer(path)?;
    writer.write_record(CONTRACTION_HEADER)?;
    for r in rows {
        writer.write_record(&[
            fmt_f64(r.state_distance_sq),
            fmt_f64(r.lhs_mean),
            fmt_f64(r.lhs_se),
            fmt_f64(r.rhs),
            fmt_f64(r.slack),
            fmt_f64(r.normalized_slack),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_contraction_csv(path: &Path) -> Result<Vec<ContractionRow>> {
    let mut reader = csv_reader(path)?;
    expect_header(&mut reader, &CONTRACTION_HEADER, path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(ContractionRow {
            state_distance_sq: parse_f64(field(&record, 0, path)?)?,
            lhs_mean: parse_f64(field(&record, 1, path)?)?,
            lhs_se: parse_f64(field(&record, 2, path)?)?,
            rhs: parse_f64(field(&record, 3, path)?)?,
            slack: parse_f64(field(&record, 4, path)?)?,
            normalized_slack: parse_f64(field(&record, 5, path)?)?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Key-value reports

const KV_HEADER: [&str; 2] = ["key", "value"];

/// Flat `key,value` file; used for constants reports and scalar summaries.
pub fn write_key_values(path: &Path, pairs: &[(&str, f64)]) -> Result<()> {
    let mut writer = csv_writer(path)?;
    writer.write_record(KV_HEADER)?;
    for (key, value) in pairs {
        writer.write_record(&[(*key).to_string(), fmt_f64(*value)])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_key_values(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut reader = csv_reader(path)?;
    expect_header(&mut reader, &KV_HEADER, path)?;
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record?;
        pairs.push((
            field(&record, 0, path)?.to_string(),
            parse_f64(field(&record, 1, path)?)?,
        ));
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Manifest

/// A produced file, addressed relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Run provenance: what was run, from which config, producing which bytes.
/// Deliberately carries no timestamps or host details, so re-running a
/// (config, seed) pair reproduces the manifest exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub code_version: String,
    pub spec_version: u32,
    /// Hash of the canonical JSON form of the experiment spec.
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub replications: usize,
    pub outputs: Vec<OutputFile>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    /// Hash the spec and the listed files (paths relative to `dir`).
    pub fn build(spec: &ExperimentSpec, dir: &Path, files: &[String]) -> Result<Manifest> {
        let config_sha256 = sha256_hex(spec.to_canonical_json()?.as_bytes());
        let mut outputs = Vec::with_capacity(files.len());
        for rel in files {
            outputs.push(OutputFile { path: rel.clone(), sha256: file_sha256(&dir.join(rel))? });
        }
        Ok(Manifest {
            kind: spec.kind.as_str().to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            spec_version: spec.spec_version,
            config_sha256,
            seeds: spec.seeds.clone(),
            replications: spec.replications,
            outputs,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Re-hash every listed output and fail on the first mismatch.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for out in &self.outputs {
            let actual = file_sha256(&dir.join(&out.path))?;
            if actual != out.sha256 {
                return Err(Error::InvalidConfig(format!(
                    "{} does not match its manifest hash",
                    out.path
                )));
            }
        }
        Ok(())
    }
}
