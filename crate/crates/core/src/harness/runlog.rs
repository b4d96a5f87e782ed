//! Run logs on disk.
//!
//! A run log is a pretty-printed JSON document `run_NNNNN.json` holding the
//! effective configuration, its fingerprint and the [`RunOutcome`]. When the
//! run kept its trace, two more files sit next to it: `run_NNNNN.csv`
//! (`t,d,log2_phi,psi,increment`) and `run_NNNNN.phi`, a binary sidecar
//! with the stored Φ values in full:
//!
//! ```text
//! "SWLPHI01"                      magic
//! u64 delta_t, u64 first_sample, u64 rows, u64 dims, u64 zero count
//! u64 × zero count                 zero-potential sample indices
//! u8 truncated
//! rows × dims × { u32 bits, u8 negative, i32 exp, u32 len, len bytes }
//! ```
//!
//! All integers are little-endian; the mantissa bytes are big-endian
//! magnitude digits. The value is `±magnitude · 2^exp`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::RunOutcome;
use super::HarnessError;
use crate::numerics::{BigReal, RawParts};
use crate::potential::PotentialTrace;

pub const FORMAT_VERSION: u64 = 1;

const PHI_MAGIC: &[u8; 8] = b"SWLPHI01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub format_version: u64,
    pub fingerprint: String,
    pub config: ExperimentConfig,
    /// File name of the trace CSV, when a trace was kept.
    pub trace_file: Option<String>,
    pub outcome: RunOutcome,
}

impl RunLog {
    pub fn new(config: &ExperimentConfig, outcome: RunOutcome) -> Self {
        let trace_file = outcome.trace.as_ref().map(|_| format!("{}.csv", stem(outcome.run_index)));
        RunLog {
            format_version: FORMAT_VERSION,
            fingerprint: config.fingerprint(),
            config: ExperimentConfig { output_dir: None, ..config.clone() },
            trace_file,
            outcome,
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>, HarnessError> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

fn stem(index: usize) -> String {
    format!("run_{index:05}")
}

/// Writes the log (and its trace files) into `dir`; returns the JSON path.
pub fn persist_runlog(log: &RunLog, dir: &Path) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir)?;
    let name = stem(log.outcome.run_index);
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, log.to_json()?)?;
    if let Some(trace) = &log.outcome.trace {
        trace.write_csv(BufWriter::new(fs::File::create(dir.join(format!("{name}.csv")))?))?;
        write_phi_sidecar(trace, BufWriter::new(fs::File::create(dir.join(format!("{name}.phi")))?))?;
    }
    Ok(path)
}

/// Reads a log, checking its format version and fingerprint, and attaches
/// the trace when its files are present.
pub fn load_runlog(path: &Path) -> Result<RunLog, HarnessError> {
    let bytes = fs::read(path)?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| HarnessError::CorruptLog(format!("{}: no format version", path.display())))?;
    if found != FORMAT_VERSION {
        return Err(HarnessError::VersionMismatch { found, expected: FORMAT_VERSION });
    }
    let mut log: RunLog = serde_json::from_value(value)
        .map_err(|e| HarnessError::CorruptLog(format!("{}: {e}", path.display())))?;
    if log.fingerprint != log.config.fingerprint() {
        return Err(HarnessError::CorruptLog(format!(
            "{}: fingerprint {} does not match its configuration",
            path.display(),
            log.fingerprint
        )));
    }
    if let Some(file) = &log.trace_file {
        let dir = path.parent().unwrap_or(Path::new("."));
        let csv_path = dir.join(file);
        let phi_path = csv_path.with_extension("phi");
        let mut trace = read_phi_sidecar(BufReader::new(fs::File::open(&phi_path)?))?;
        let dims = trace.phi.first().map_or(0, Vec::len);
        let (log2_phi, psi) = read_trace_csv(&csv_path, dims)?;
        if log2_phi.len() != trace.phi.len() {
            return Err(HarnessError::CorruptLog(format!("{}: row count differs from the sidecar", csv_path.display())));
        }
        trace.log2_phi = log2_phi;
        trace.psi = psi;
        log.outcome.trace = Some(trace);
    }
    Ok(log)
}

/// Loads every `run_*.json` in `dir`, ordered by run index.
pub fn load_runlogs(dir: &Path) -> Result<Vec<RunLog>, HarnessError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("run_"))
        })
        .collect();
    paths.sort();
    let mut logs = paths.iter().map(|p| load_runlog(p)).collect::<Result<Vec<_>, _>>()?;
    logs.sort_by_key(|l| l.outcome.run_index);
    Ok(logs)
}

/// `(log2_phi, psi)` rows.
type TraceColumns = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn read_trace_csv(path: &Path, dims: usize) -> Result<TraceColumns, HarnessError> {
    #[derive(Deserialize)]
    struct Row {
        d: usize,
        log2_phi: f64,
        psi: f64,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let (mut log2_phi, mut psi) = (Vec::new(), Vec::new());
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row?;
        if dims == 0 || row.d != i % dims + 1 {
            return Err(HarnessError::CorruptLog(format!("{}: unexpected dimension on row {}", path.display(), i + 2)));
        }
        if row.d == 1 {
            log2_phi.push(Vec::with_capacity(dims));
            psi.push(Vec::with_capacity(dims));
        }
        log2_phi.last_mut().expect("row started").push(row.log2_phi);
        psi.last_mut().expect("row started").push(row.psi);
    }
    Ok((log2_phi, psi))
}

pub fn write_phi_sidecar<W: Write>(trace: &PotentialTrace, mut out: W) -> Result<(), HarnessError> {
    out.write_all(PHI_MAGIC)?;
    for v in [trace.delta_t, trace.first_sample, trace.phi.len() as u64, trace.phi.first().map_or(0, Vec::len) as u64, trace.zero_samples.len() as u64] {
        out.write_all(&v.to_le_bytes())?;
    }
    for &z in &trace.zero_samples {
        out.write_all(&z.to_le_bytes())?;
    }
    out.write_all(&[u8::from(trace.truncated)])?;
    for value in trace.phi.iter().flatten() {
        let parts = value.to_parts();
        out.write_all(&parts.bits.to_le_bytes())?;
        out.write_all(&[u8::from(parts.negative)])?;
        out.write_all(&parts.exp.to_le_bytes())?;
        out.write_all(&(parts.magnitude.len() as u32).to_le_bytes())?;
        out.write_all(&parts.magnitude)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a sidecar into a trace holding Φ only (no Ψ rows).
pub fn read_phi_sidecar<R: Read>(mut input: R) -> Result<PotentialTrace, HarnessError> {
    let corrupt = |what: &str| HarnessError::CorruptLog(format!("Φ sidecar: {what}"));
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != PHI_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut u64s = [0u64; 5];
    for v in &mut u64s {
        *v = read_u64(&mut input)?;
    }
    let [delta_t, first_sample, rows, dims, zeros] = u64s;
    if delta_t == 0 {
        return Err(corrupt("zero step width"));
    }
    let mut trace = PotentialTrace::new(delta_t);
    trace.first_sample = first_sample;
    trace.zero_samples = (0..zeros).map(|_| read_u64(&mut input)).collect::<Result<_, _>>()?;
    let mut flag = [0u8; 1];
    input.read_exact(&mut flag)?;
    trace.truncated = flag[0] != 0;
    for _ in 0..rows {
        let mut row = Vec::with_capacity(dims as usize);
        for _ in 0..dims {
            let mut head = [0u8; 13];
            input.read_exact(&mut head)?;
            let bits = u32::from_le_bytes(head[0..4].try_into().expect("4 bytes"));
            let negative = head[4] != 0;
            let exp = i32::from_le_bytes(head[5..9].try_into().expect("4 bytes"));
            let len = u32::from_le_bytes(head[9..13].try_into().expect("4 bytes"));
            if len > bits.div_ceil(8) + 1 {
                return Err(corrupt("mantissa longer than its precision"));
            }
            let mut magnitude = vec![0u8; len as usize];
            input.read_exact(&mut magnitude)?;
            row.push(BigReal::from_parts(&RawParts { bits, negative, exp, magnitude }).map_err(|e| corrupt(&e.to_string()))?);
        }
        trace.phi.push(row);
    }
    Ok(trace)
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64, HarnessError> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
