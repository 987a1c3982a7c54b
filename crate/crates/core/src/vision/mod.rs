//! Vision-only failure oracle.
//!
//! Works on rendered or recorded grayscale frames and never looks at the
//! kinematics. Sudden changes between adjacent frames show up as SSIM
//! dissimilarity peaks; positional failures show up as the largest step
//! cost on a DTW alignment of block centroids against a fault-free run.

mod dtw;
mod ssim;

pub use dtw::{dtw, dtw_with, DtwAlignment};
pub use ssim::{ssim, SsimParams};

use std::collections::VecDeque;
use std::io::Write;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{BlockTrace, FailureKind};
use crate::trajectory::FrameSequence;

pub const DEFAULT_BLOCK_THRESHOLD: u8 = 192;
pub const DEFAULT_SSIM_THRESHOLD: f64 = 0.026;
pub const DEFAULT_DTW_THRESHOLD_PX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Detector {
    Ssim,
    Dtw,
    Physics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub kind: FailureKind,
    pub frame: usize,
    pub t_ns: i64,
    pub detector: Detector,
    pub score: f64,
}

impl FailureEvent {
    /// The simulator's own record, for comparison with the detectors.
    pub fn from_physics(trace: &BlockTrace) -> Option<Self> {
        let f = trace.failure?;
        let frame = f.frame?;
        Some(Self { kind: f.kind, frame, t_ns: trace.frames[frame].t_ns, detector: Detector::Physics, score: 1.0 })
    }
}

/// `1 - ssim` for each adjacent frame pair.
pub fn dissimilarity_series(frames: &FrameSequence, p: &SsimParams) -> Result<Vec<f64>> {
    frames.frames().windows(2).map(|w| ssim(&w[0].raster, &w[1].raster, p).map(|s| 1.0 - s)).collect()
}

/// Frame after the largest adjacent-pair dissimilarity, if it reaches
/// `threshold`. Ties go to the earlier pair.
pub fn detect_failure_ssim(frames: &FrameSequence, threshold: f64, p: &SsimParams) -> Result<Option<FailureEvent>> {
    if frames.len() < 2 {
        return Err(Error::Input("ssim detection needs at least two frames".into()));
    }
    let d = dissimilarity_series(frames, p)?;
    let (mut best, mut best_v) = (0, f64::NEG_INFINITY);
    for (i, &v) in d.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    Ok((best_v >= threshold).then(|| FailureEvent {
        kind: FailureKind::UnintentionalRelease,
        frame: best + 1,
        t_ns: frames.frames()[best + 1].t_ns,
        detector: Detector::Ssim,
        score: best_v,
    }))
}

/// Centroid (pixel-center coordinates) of the largest 4-connected region at
/// or above `threshold`. Ties between equal regions go to the one found
/// first in raster order.
pub fn locate_block(frame: &GrayImage, threshold: u8) -> Option<[f64; 2]> {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let px = frame.as_raw();
    let mut seen = vec![false; w * h];
    let mut best: Option<(usize, f64, f64)> = None;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || px[start] < threshold {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut count, mut sx, mut sy) = (0usize, 0.0, 0.0);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            count += 1;
            sx += x as f64 + 0.5;
            sy += y as f64 + 0.5;
            let mut visit = |j: usize| {
                if !seen[j] && px[j] >= threshold {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if best.is_none_or(|b| count > b.0) {
            best = Some((count, sx, sy));
        }
    }
    best.map(|(n, sx, sy)| [sx / n as f64, sy / n as f64])
}

pub fn centroid_trace(frames: &FrameSequence, threshold: u8) -> Vec<Option<[f64; 2]>> {
    frames.frames().iter().map(|f| locate_block(&f.raster, threshold)).collect()
}

/// Fills gaps with the last known centroid (the first known one for a
/// leading gap). The flags mark imputed entries.
pub fn impute_missing(trace: &[Option<[f64; 2]>]) -> Result<(Vec<[f64; 2]>, Vec<bool>)> {
    let first = trace.iter().flatten().next().ok_or_else(|| Error::Input("no frame shows the block".into()))?;
    let mut last = *first;
    let mut out = Vec::with_capacity(trace.len());
    let mut flags = Vec::with_capacity(trace.len());
    for c in trace {
        if let Some(c) = c {
            last = *c;
        }
        out.push(last);
        flags.push(c.is_none());
    }
    Ok((out, flags))
}

/// Trace-side frame of the costliest step on the optimal alignment, if
/// that cost reaches `threshold`. Ties go to the earlier step.
pub fn detect_failure_dtw(
    trace: &[[f64; 2]],
    reference: &[[f64; 2]],
    threshold: f64,
    frame_ts: &[i64],
) -> Result<Option<FailureEvent>> {
    if frame_ts.len() != trace.len() {
        return Err(Error::Input(format!("{} timestamps for {} centroids", frame_ts.len(), trace.len())));
    }
    let al = dtw(trace, reference)?;
    let (mut best, mut best_v) = (0, f64::NEG_INFINITY);
    for (k, &c) in al.step_costs.iter().enumerate() {
        if c > best_v {
            best = k;
            best_v = c;
        }
    }
    let frame = al.path[best].0;
    Ok((best_v >= threshold).then(|| FailureEvent {
        kind: FailureKind::FailureToDropoff,
        frame,
        t_ns: frame_ts[frame],
        detector: Detector::Dtw,
        score: best_v,
    }))
}

pub fn write_failures_jsonl<W: Write>(events: &[FailureEvent], mut sink: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut sink, e)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_centroids_csv<W: Write>(trace: &[Option<[f64; 2]>], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["frame", "x_px", "y_px"]).map_err(|e| Error::Input(e.to_string()))?;
    for (i, c) in trace.iter().enumerate() {
        let (x, y) = c.map_or((String::new(), String::new()), |c| (c[0].to_string(), c[1].to_string()));
        w.write_record([i.to_string(), x, y]).map_err(|e| Error::Input(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
