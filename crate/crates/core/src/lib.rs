//! Context-aware safety monitoring for surgical robot kinematics.
//!
//! Learning phase: segment fault-free trajectories into subtasks and learn
//! per-subtask safety envelopes. Deployment phase: track the subtask online
//! and alert on sustained envelope violations. A dry-lab simulator, a fault
//! injector and a vision-only failure oracle close the evaluation loop.

pub mod constraints;
pub mod error;
pub mod eval;
pub mod fault;
pub mod monitor;
pub mod segmentation;
pub mod sim;
pub mod trajectory;
pub mod vision;

pub use error::{Error, Result};
