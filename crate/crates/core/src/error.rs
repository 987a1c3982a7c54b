use thiserror::Error;

use crate::trajectory::SubtaskId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: timestamp {t_ns} ns does not follow {prev_ns} ns")]
    Ordering { line: usize, prev_ns: i64, t_ns: i64 },

    #[error("line {line}: {field} = {value} is out of range")]
    Range { line: usize, field: &'static str, value: f64 },

    #[error("empty input")]
    EmptyInput,

    #[error("frame {frame} at {t_ns} ns lies outside the kinematics time range")]
    Sync { frame: usize, t_ns: i64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("mixture component {component} collapsed after re-seeding")]
    Degenerate { component: usize },

    #[error("no training samples for subtask {0}")]
    Coverage(SubtaskId),

    #[error("expected 6 transitions, found {0}")]
    Mapping(usize),

    #[error("invalid fault spec: {0}")]
    Spec(String),

    #[error("raster dimensions differ: {0}x{1} vs {2}x{3}")]
    Dimension(u32, u32, u32, u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
