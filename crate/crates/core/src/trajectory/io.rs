//! Trajectory and label file formats.
//!
//! CSV header: `t_ns,x_mm,y_mm,z_mm,grasper_rad`. JSONL: one object per line
//! with the same keys. JIGSAWS kinematics files are whitespace-separated with
//! no header and no timestamps; those are synthesized from the row index.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{SubtaskId, Trajectory, TrajectorySample, NANOS_PER_SEC};
use crate::error::{Error, Result};

const CSV_HEADER: [&str; 5] = ["t_ns", "x_mm", "y_mm", "z_mm", "grasper_rad"];

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryFormat {
    Csv,
    Jsonl,
    Jigsaws(JigsawsLayout),
}

/// Column layout of a JIGSAWS-style kinematics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JigsawsLayout {
    /// Zero-based columns of tooltip x, y, z.
    pub position_cols: [usize; 3],
    pub grasper_col: usize,
    pub rate_hz: f64,
    /// Multiplier taking file units to millimeters.
    pub position_scale: f64,
    /// Clamp grasper angles into [0, pi] instead of rejecting them.
    pub clamp_grasper: bool,
}

impl Default for JigsawsLayout {
    /// Patient-side left manipulator: tooltip at columns 39-41 and gripper
    /// angle at column 57 (one-based), positions in meters, 30 Hz.
    fn default() -> Self {
        Self {
            position_cols: [38, 39, 40],
            grasper_col: 56,
            rate_hz: 30.0,
            position_scale: 1000.0,
            clamp_grasper: false,
        }
    }
}

pub fn parse_trajectory<R: Read>(source: R, format: &TrajectoryFormat) -> Result<Trajectory> {
    match format {
        TrajectoryFormat::Csv => parse_csv(source),
        TrajectoryFormat::Jsonl => parse_jsonl(source),
        TrajectoryFormat::Jigsaws(layout) => parse_jigsaws(source, layout),
    }
}

fn finish(samples: Vec<(usize, TrajectorySample)>, rate_hz: f64) -> Result<Trajectory> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (k, (line, s)) in samples.iter().enumerate() {
        s.check(*line)?;
        if k > 0 && s.t_ns <= samples[k - 1].1.t_ns {
            return Err(Error::Ordering { line: *line, prev_ns: samples[k - 1].1.t_ns, t_ns: s.t_ns });
        }
    }
    Trajectory::new(samples.into_iter().map(|(_, s)| s).collect(), rate_hz)
}

fn csv_line(pos: Option<&csv::Position>) -> usize {
    pos.map_or(0, |p| p.line() as usize)
}

fn parse_csv<R: Read>(source: R) -> Result<Trajectory> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
    if headers.is_empty() {
        return Err(Error::EmptyInput);
    }
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header {}, found {}",
                CSV_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse { line: csv_line(e.position()), message: e.to_string() })?;
        let line = csv_line(record.position());
        let s: TrajectorySample = record
            .deserialize(Some(&csv::StringRecord::from(CSV_HEADER.to_vec())))
            .map_err(|e| Error::Parse { line, message: e.to_string() })?;
        samples.push((line, s));
    }
    finish(samples, Trajectory::DEFAULT_RATE_HZ)
}

fn parse_jsonl<R: Read>(source: R) -> Result<Trajectory> {
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: TrajectorySample =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        samples.push((line_no, s));
    }
    finish(samples, Trajectory::DEFAULT_RATE_HZ)
}

fn parse_jigsaws<R: Read>(source: R, layout: &JigsawsLayout) -> Result<Trajectory> {
    if !(layout.rate_hz.is_finite() && layout.rate_hz > 0.0) {
        return Err(Error::Config("JIGSAWS rate must be positive".into()));
    }
    let needed = layout.position_cols.iter().copied().chain([layout.grasper_col]).max().unwrap_or(0);
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() <= needed {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least {} columns, found {}", needed + 1, cols.len()),
            });
        }
        let col = |c: usize| -> Result<f64> {
            cols[c].parse::<f64>().map_err(|e| Error::Parse { line: line_no, message: format!("column {c}: {e}") })
        };
        let mut grasper = col(layout.grasper_col)?;
        if layout.clamp_grasper {
            grasper = grasper.clamp(0.0, std::f64::consts::PI);
        }
        let k = samples.len() as f64;
        let t_ns = (k * NANOS_PER_SEC as f64 / layout.rate_hz).round() as i64;
        let s = TrajectorySample::new(
            t_ns,
            col(layout.position_cols[0])? * layout.position_scale,
            col(layout.position_cols[1])? * layout.position_scale,
            col(layout.position_cols[2])? * layout.position_scale,
            grasper,
        );
        samples.push((line_no, s));
    }
    let traj = finish(samples, layout.rate_hz)?;
    Ok(traj)
}

/// Writes CSV or JSONL. JIGSAWS is input-only and is rejected here.
pub fn write_trajectory<W: Write>(traj: &Trajectory, sink: W, format: &TrajectoryFormat) -> Result<()> {
    match format {
        TrajectoryFormat::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            for s in traj.samples() {
                w.serialize(s).map_err(|e| Error::Input(e.to_string()))?;
            }
            w.flush()?;
        }
        TrajectoryFormat::Jsonl => {
            let mut sink = std::io::BufWriter::new(sink);
            for s in traj.samples() {
                serde_json::to_writer(&mut sink, s)?;
                sink.write_all(b"\n")?;
            }
            sink.flush()?;
        }
        TrajectoryFormat::Jigsaws(_) => {
            return Err(Error::Input("JIGSAWS layout is read-only".into()));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    sample_index: usize,
    subtask_id: SubtaskId,
}

/// `labels.csv`: `sample_index,subtask_id`, one row per sample in order.
pub fn write_labels<W: Write>(labels: &[SubtaskId], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for (sample_index, &subtask_id) in labels.iter().enumerate() {
        w.serialize(LabelRow { sample_index, subtask_id }).map_err(|e| Error::Input(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_labels<R: Read>(source: R) -> Result<Vec<SubtaskId>> {
    let mut reader = csv::Reader::from_reader(source);
    let mut labels = Vec::new();
    for row in reader.deserialize::<LabelRow>() {
        let row = row.map_err(|e| Error::Parse { line: csv_line(e.position()), message: e.to_string() })?;
        if row.sample_index != labels.len() {
            return Err(Error::Parse {
                line: labels.len() + 2,
                message: format!("expected sample_index {}, found {}", labels.len(), row.sample_index),
            });
        }
        labels.push(row.subtask_id);
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(labels)
}
