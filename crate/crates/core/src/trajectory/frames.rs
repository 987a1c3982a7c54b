//! Grayscale frame sequences and kinematics/vision timestamp alignment.

use std::fs;
use std::path::Path;

use image::GrayImage;

use super::{Trajectory, NANOS_PER_SEC};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t_ns: i64,
    pub raster: GrayImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    rate_fps: f64,
}

impl FrameSequence {
    pub const DEFAULT_RATE_FPS: f64 = 30.0;

    pub fn new(frames: Vec<Frame>, rate_fps: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyInput);
        }
        if !(rate_fps.is_finite() && rate_fps > 0.0) {
            return Err(Error::Config(format!("frame rate must be positive, got {rate_fps}")));
        }
        let dims = frames[0].raster.dimensions();
        for (i, f) in frames.iter().enumerate() {
            if f.raster.dimensions() != dims {
                let (w, h) = f.raster.dimensions();
                return Err(Error::Dimension(dims.0, dims.1, w, h));
            }
            if i > 0 && f.t_ns <= frames[i - 1].t_ns {
                return Err(Error::Ordering { line: i, prev_ns: frames[i - 1].t_ns, t_ns: f.t_ns });
            }
        }
        Ok(Self { frames, rate_fps })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn rate_fps(&self) -> f64 {
        self.rate_fps
    }

    pub fn period_ns(&self) -> i64 {
        (NANOS_PER_SEC as f64 / self.rate_fps).round() as i64
    }
}

/// Writes `frame_<index>_<t_ns>.pgm` (binary P5) files into `dir`.
pub fn write_pgm_dir(seq: &FrameSequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, f) in seq.frames().iter().enumerate() {
        let path = dir.join(format!("frame_{i:06}_{}.pgm", f.t_ns));
        let mut bytes = Vec::with_capacity(f.raster.as_raw().len() + 32);
        image::codecs::pnm::PnmEncoder::new(&mut bytes)
            .with_subtype(image::codecs::pnm::PnmSubtype::Graymap(image::codecs::pnm::SampleEncoding::Binary))
            .encode(f.raster.as_raw().as_slice(), f.raster.width(), f.raster.height(), image::ExtendedColorType::L8)?;
        fs::write(path, bytes)?;
    }
    Ok(())
}

fn parse_frame_name(name: &str) -> Option<(usize, i64)> {
    let stem = name.strip_prefix("frame_")?.strip_suffix(".pgm")?;
    let (index, t) = stem.split_once('_')?;
    Some((index.parse().ok()?, t.parse().ok()?))
}

/// Reads a frame directory written by [`write_pgm_dir`], ordered by index.
pub fn read_pgm_dir(dir: &Path, rate_fps: f64) -> Result<FrameSequence> {
    let mut entries = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some((index, t_ns)) = parse_frame_name(&name) {
            entries.push((index, t_ns, entry.path()));
        }
    }
    entries.sort_by_key(|e| e.0);
    let mut frames = Vec::with_capacity(entries.len());
    for (_, t_ns, path) in entries {
        let img = image::ImageReader::open(&path)?.with_guessed_format()?.decode()?;
        frames.push(Frame { t_ns, raster: img.into_luma8() });
    }
    FrameSequence::new(frames, rate_fps)
}

#[derive(Debug, Clone)]
pub struct SyncedRecording {
    pub trajectory: Trajectory,
    pub frames: FrameSequence,
    pub frame_to_sample: Vec<usize>,
}

/// Nearest-sample index for each frame timestamp, ties toward the earlier
/// sample. Frames further than one frame period outside the sample range are
/// rejected.
pub fn frame_to_sample_indices(sample_ts: &[i64], frame_ts: &[i64], frame_period_ns: i64) -> Result<Vec<usize>> {
    if sample_ts.is_empty() || frame_ts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let first = sample_ts[0];
    let last = sample_ts[sample_ts.len() - 1];
    let mut mapping = Vec::with_capacity(frame_ts.len());
    for (frame, &tf) in frame_ts.iter().enumerate() {
        if tf < first - frame_period_ns || tf > last + frame_period_ns {
            return Err(Error::Sync { frame, t_ns: tf });
        }
        let after = sample_ts.partition_point(|&t| t < tf);
        let idx = if after == 0 {
            0
        } else if after == sample_ts.len() {
            sample_ts.len() - 1
        } else if tf - sample_ts[after - 1] <= sample_ts[after] - tf {
            after - 1
        } else {
            after
        };
        mapping.push(idx);
    }
    Ok(mapping)
}

pub fn synchronize(traj: &Trajectory, frames: &FrameSequence) -> Result<SyncedRecording> {
    let sample_ts: Vec<i64> = traj.timestamps().collect();
    let frame_ts: Vec<i64> = frames.frames().iter().map(|f| f.t_ns).collect();
    let frame_to_sample = frame_to_sample_indices(&sample_ts, &frame_ts, frames.period_ns())?;
    Ok(SyncedRecording { trajectory: traj.clone(), frames: frames.clone(), frame_to_sample })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrajectorySample;
    use proptest::prelude::*;

    fn traj(n: usize, rate_hz: f64, offset_ns: i64) -> Trajectory {
        let samples = (0..n)
            .map(|i| {
                let t = offset_ns + (i as f64 * 1e9 / rate_hz).round() as i64;
                TrajectorySample::new(t, 0.0, 0.0, 0.0, 0.5)
            })
            .collect();
        Trajectory::new(samples, rate_hz).unwrap()
    }

    fn blank_frames(ts: &[i64], fps: f64) -> FrameSequence {
        let frames = ts.iter().map(|&t_ns| Frame { t_ns, raster: GrayImage::new(4, 3) }).collect();
        FrameSequence::new(frames, fps).unwrap()
    }

    #[test]
    fn khz_samples_30fps_frames() {
        let t = traj(2001, 1000.0, 0);
        let ts: Vec<i64> = (0..60).map(|i| (i as f64 * 1e9 / 30.0).round() as i64).collect();
        let rec = synchronize(&t, &blank_frames(&ts, 30.0)).unwrap();
        for (i, &s) in rec.frame_to_sample.iter().enumerate() {
            assert_eq!(s, (i as f64 * 1000.0 / 30.0).round() as usize);
        }
    }

    #[test]
    fn identical_timestamps_identity() {
        let t = traj(50, 30.0, 0);
        let ts: Vec<i64> = t.timestamps().collect();
        let rec = synchronize(&t, &blank_frames(&ts, 30.0)).unwrap();
        assert_eq!(rec.frame_to_sample, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn frame_before_start_is_rejected() {
        let t = traj(100, 1000.0, 0);
        let err = synchronize(&t, &blank_frames(&[-1_000_000_000, 0], 30.0)).unwrap_err();
        assert!(matches!(err, Error::Sync { frame: 0, .. }));
    }

    #[test]
    fn tie_goes_to_earlier_sample() {
        assert_eq!(frame_to_sample_indices(&[0, 10], &[5], 100).unwrap(), vec![0]);
        assert_eq!(frame_to_sample_indices(&[0, 10], &[6], 100).unwrap(), vec![1]);
    }

    #[test]
    fn pgm_dir_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = GrayImage::new(5, 4);
        a.put_pixel(2, 1, image::Luma([224]));
        let seq = FrameSequence::new(
            vec![Frame { t_ns: 0, raster: a.clone() }, Frame { t_ns: 33_333_333, raster: GrayImage::new(5, 4) }],
            30.0,
        )
        .unwrap();
        write_pgm_dir(&seq, dir.path()).unwrap();
        let bytes = fs::read(dir.path().join("frame_000000_0.pgm")).unwrap();
        assert!(bytes.starts_with(b"P5"));
        let back = read_pgm_dir(dir.path(), 30.0).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let frames =
            vec![Frame { t_ns: 0, raster: GrayImage::new(4, 4) }, Frame { t_ns: 1, raster: GrayImage::new(5, 4) }];
        assert!(matches!(FrameSequence::new(frames, 30.0), Err(Error::Dimension(..))));
    }

    proptest! {
        #[test]
        fn mapping_monotone_and_total(
            rate in 50.0f64..2000.0,
            fps in 5.0f64..120.0,
            n in 2usize..400,
            offset in -20_000_000i64..20_000_000,
        ) {
            let t = traj(n, rate, 0);
            let last = t.samples()[n - 1].t_ns;
            let period = (1e9 / fps).round() as i64;
            let mut ts = Vec::new();
            let mut k = 0i64;
            loop {
                let tf = offset.max(-period) + k * period;
                if tf > last + period { break; }
                ts.push(tf);
                k += 1;
            }
            prop_assume!(!ts.is_empty());
            let map = frame_to_sample_indices(&t.timestamps().collect::<Vec<_>>(), &ts, period).unwrap();
            prop_assert_eq!(map.len(), ts.len());
            prop_assert!(map.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(map.iter().all(|&m| m < n));
        }
    }
}
