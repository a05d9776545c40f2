//! Run log persistence.
//!
//! `run.jsonl` holds one JSON object per line: a header carrying the
//! effective config, one bare `EpochRecord` per epoch, and an end marker
//! once the run is over. Lines are flushed as they are written, so a crash
//! loses at most the epoch in flight. `run.csv` is a flat projection for
//! plotting tools. Every float is written with 17 significant digits.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use serde_json::Value;
use yescert_core::{EpochRecord, StopReason};

use crate::config::SessionConfig;
use crate::error::{Result, RunError};

pub const LOG_FORMAT: &str = "yescert-run-log";
pub const LOG_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "epoch,loss,yes0,yes_best,region,lr";

/// JSON formatter writing every `f64` as `d.dddddddddddddddde±x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sig17;

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with 17-significant-digit floats. Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17);
    value.serialize(&mut ser).expect("in-memory serialization cannot fail");
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunEnd {
    pub reason: StopReason,
    /// Last epoch that was trained; 0 when none were.
    pub last_epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub config: SessionConfig,
}

#[derive(Serialize)]
struct HeaderLine<'a> {
    header: &'a LogHeader,
}

#[derive(Serialize)]
struct EndLine<'a> {
    end: &'a RunEnd,
}

pub fn csv_row(r: &EpochRecord) -> String {
    let (yes0, best) = match &r.bounds {
        Some(b) => (fmt_f64(b.yes0), fmt_f64(b.cloud_bottom)),
        None => (String::new(), String::new()),
    };
    format!("{},{},{},{},{},{}", r.epoch, fmt_f64(r.train_loss), yes0, best, r.region.as_str(), fmt_f64(r.lr))
}

/// Appends records to `run.jsonl` and `run.csv`.
#[derive(Debug)]
pub struct RunLogWriter {
    jsonl: BufWriter<File>,
    csv: BufWriter<File>,
    jsonl_path: PathBuf,
    csv_path: PathBuf,
}

impl RunLogWriter {
    pub fn create(jsonl_path: &Path, csv_path: &Path, config: &SessionConfig) -> Result<Self> {
        for p in [jsonl_path, csv_path] {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
            }
        }
        let open = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| RunError::io(p, e));
        let mut w = Self {
            jsonl: open(jsonl_path)?,
            csv: open(csv_path)?,
            jsonl_path: jsonl_path.to_path_buf(),
            csv_path: csv_path.to_path_buf(),
        };
        let header = LogHeader { format: LOG_FORMAT.into(), version: LOG_VERSION, config: config.clone() };
        w.jsonl_line(&to_json(&HeaderLine { header: &header }))?;
        w.csv_line(CSV_HEADER)?;
        Ok(w)
    }

    fn jsonl_line(&mut self, line: &str) -> Result<()> {
        let path = &self.jsonl_path;
        writeln!(self.jsonl, "{line}").and_then(|_| self.jsonl.flush()).map_err(|e| RunError::io(path, e))
    }

    fn csv_line(&mut self, line: &str) -> Result<()> {
        let path = &self.csv_path;
        writeln!(self.csv, "{line}").and_then(|_| self.csv.flush()).map_err(|e| RunError::io(path, e))
    }

    pub fn append(&mut self, record: &EpochRecord) -> Result<()> {
        self.jsonl_line(&to_json(record))?;
        self.csv_line(&csv_row(record))
    }

    pub fn finish(&mut self, end: &RunEnd) -> Result<()> {
        self.jsonl_line(&to_json(&EndLine { end }))
    }
}

/// A parsed `run.jsonl`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub header: Option<LogHeader>,
    pub records: Vec<EpochRecord>,
    pub end: Option<RunEnd>,
}

pub fn parse_run_log(text: &str) -> std::result::Result<RunLog, String> {
    let mut log = RunLog::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let value: Value = serde_json::from_str(line).map_err(|e| format!("line {lineno}: {e}"))?;
        if let Some(h) = value.get("header") {
            log.header = Some(serde_json::from_value(h.clone()).map_err(|e| format!("line {lineno}: header: {e}"))?);
        } else if let Some(end) = value.get("end") {
            log.end = Some(serde_json::from_value(end.clone()).map_err(|e| format!("line {lineno}: end: {e}"))?);
        } else {
            let rec: EpochRecord = serde_json::from_value(value).map_err(|e| format!("line {lineno}: {e}"))?;
            log.records.push(rec);
        }
    }
    Ok(log)
}

pub fn read_run_log(path: &Path) -> Result<RunLog> {
    let file = File::open(path).map_err(|e| RunError::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| RunError::io(path, e))?);
        text.push('\n');
    }
    parse_run_log(&text).map_err(|msg| RunError::io(path, io::Error::new(io::ErrorKind::InvalidData, msg)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use yescert_core::{CheckpointSet, CloudRegion, EpochEvent, YesBoundSet};

    fn record(epoch: u64, bounds: bool) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: 0.1 + epoch as f64 / 3.0,
            bounds: bounds.then(|| YesBoundSet {
                yes0: 2.0,
                yes_k: vec![1.5, 1.25],
                cloud_top: 2.0,
                cloud_bottom: 1.25,
                best_checkpoints: CheckpointSet::new(vec![2, 3], 3).unwrap(),
            }),
            region: CloudRegion::Yellow,
            region_stale: !bounds,
            lr: 1e-3,
            weight_change: 0.0,
            guidance_active: false,
            success_rate: None,
            wall_time_ms: 5,
            events: vec![EpochEvent::EnteredRegion { region: CloudRegion::Yellow }],
        }
    }

    #[test]
    fn floats_have_seventeen_significant_digits() {
        assert_eq!(to_json(&0.1f64), "1.0000000000000001e-1");
        assert_eq!(to_json(&-2.0f64), "-2.0000000000000000e0");
        assert_eq!(to_json(&f64::NAN), "null");
        for v in [0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -7.5e-9, f64::MIN_POSITIVE] {
            let back: f64 = serde_json::from_str(&to_json(&v)).unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn csv_rows() {
        assert_eq!(
            csv_row(&record(1, true)),
            "1,4.3333333333333335e-1,2.0000000000000000e0,1.2500000000000000e0,yellow,1.0000000000000000e-3"
        );
        assert_eq!(csv_row(&record(2, false)), "2,7.6666666666666661e-1,,,yellow,1.0000000000000000e-3");
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = std::env::temp_dir().join(format!("yescert-runlog-{}", std::process::id()));
        let (j, c) = (dir.join("run.jsonl"), dir.join("run.csv"));
        let cfg = SessionConfig::default();
        let mut w = RunLogWriter::create(&j, &c, &cfg).unwrap();
        let recs = vec![record(1, true), record(2, false)];
        for r in &recs {
            w.append(r).unwrap();
        }
        let end = RunEnd { reason: StopReason::MaxEpochs, last_epoch: 2 };
        w.finish(&end).unwrap();
        drop(w);
        let log = read_run_log(&j).unwrap();
        assert_eq!(log.header.unwrap().config, cfg);
        assert_eq!(log.records, recs);
        assert_eq!(log.end, Some(end));
        let csv = fs::read_to_string(&c).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().next(), Some(CSV_HEADER));
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn nan_loss_survives_the_log() {
        let mut r = record(3, false);
        r.train_loss = f64::NAN;
        let log = parse_run_log(&to_json(&r)).unwrap();
        assert!(log.records[0].train_loss.is_nan());
    }
}
