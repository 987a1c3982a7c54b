//! Overhead grayscale renderer for the block-transfer scene.
//!
//! Orthographic top-down view with an elevation shear: a point at height z
//! is drawn `z_shear * z` millimeters further up the image, so a block that
//! falls to the table visibly jumps even though its x/y do not change.

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use super::physics::{BlockFrame, BlockTrace};
use super::ScenarioConfig;
use crate::error::Result;
use crate::trajectory::{Frame, FrameSequence};

pub const BACKGROUND: u8 = 32;
pub const RECEPTACLE: u8 = 96;
pub const END_EFFECTOR: u8 = 160;
pub const BLOCK: u8 = 224;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraGeometry {
    pub width: u32,
    pub height: u32,
    /// Workspace (x, y + z_shear * z) point drawn at the raster center.
    pub center_mm: [f64; 2],
    pub px_per_mm: f64,
    pub z_shear: f64,
    pub block_size_px: u32,
    pub receptacle_size_px: u32,
    pub end_effector_radius_px: f64,
}

impl Default for CameraGeometry {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            center_mm: [0.0, 55.0],
            px_per_mm: 0.5,
            z_shear: 1.0,
            block_size_px: 10,
            receptacle_size_px: 24,
            end_effector_radius_px: 3.0,
        }
    }
}

impl CameraGeometry {
    /// Continuous pixel coordinates (column, row) of a workspace point.
    pub fn project(&self, p: [f64; 3]) -> (f64, f64) {
        let col = f64::from(self.width) / 2.0 + (p[0] - self.center_mm[0]) * self.px_per_mm;
        let row = f64::from(self.height) / 2.0 - (p[1] + self.z_shear * p[2] - self.center_mm[1]) * self.px_per_mm;
        (col, row)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderFlags {
    /// The block projected (partly) outside the raster and was clamped.
    pub block_clamped: bool,
}

fn fill_square(img: &mut GrayImage, center: (f64, f64), side: u32, value: u8) -> bool {
    let (w, h) = (i64::from(img.width()), i64::from(img.height()));
    let side_i = i64::from(side);
    let half = f64::from(side) / 2.0;
    let x0 = (center.0 - half).round();
    let y0 = (center.1 - half).round();
    let x0 = if x0.is_finite() { x0 as i64 } else { 0 };
    let y0 = if y0.is_finite() { y0 as i64 } else { 0 };
    let cx = x0.clamp(0, (w - side_i).max(0));
    let cy = y0.clamp(0, (h - side_i).max(0));
    for y in cy..(cy + side_i).min(h) {
        for x in cx..(cx + side_i).min(w) {
            img.put_pixel(x as u32, y as u32, Luma([value]));
        }
    }
    cx != x0 || cy != y0
}

fn fill_disc(img: &mut GrayImage, center: (f64, f64), radius: f64, value: u8) {
    let (w, h) = (f64::from(img.width()), f64::from(img.height()));
    if !(center.0.is_finite() && center.1.is_finite()) {
        return;
    }
    let x_lo = (center.0 - radius).floor().max(0.0);
    let x_hi = (center.0 + radius).ceil().min(w - 1.0);
    let y_lo = (center.1 - radius).floor().max(0.0);
    let y_hi = (center.1 + radius).ceil().min(h - 1.0);
    if x_lo > x_hi || y_lo > y_hi {
        return;
    }
    for y in y_lo as u32..=y_hi as u32 {
        for x in x_lo as u32..=x_hi as u32 {
            let dx = f64::from(x) + 0.5 - center.0;
            let dy = f64::from(y) + 0.5 - center.1;
            if dx * dx + dy * dy <= radius * radius {
                img.put_pixel(x, y, Luma([value]));
            }
        }
    }
}

/// Draws background, receptacle, end-effector disc, then the block on top.
pub fn render_frame(state: &BlockFrame, cfg: &ScenarioConfig, geometry: &CameraGeometry) -> (GrayImage, RenderFlags) {
    let mut img = GrayImage::from_pixel(geometry.width, geometry.height, Luma([BACKGROUND]));
    fill_square(&mut img, geometry.project(cfg.receptacle_position), geometry.receptacle_size_px, RECEPTACLE);
    fill_disc(&mut img, geometry.project(state.end_effector), geometry.end_effector_radius_px, END_EFFECTOR);
    let block_clamped = fill_square(&mut img, geometry.project(state.position), geometry.block_size_px, BLOCK);
    (img, RenderFlags { block_clamped })
}

/// Renders every frame of a block trace. The returned log lists frames
/// whose block had to be clamped to the border.
pub fn render_frames(
    trace: &BlockTrace,
    cfg: &ScenarioConfig,
    geometry: &CameraGeometry,
) -> Result<(FrameSequence, Vec<usize>)> {
    let mut clamped = Vec::new();
    let frames = trace
        .frames
        .iter()
        .map(|bf| {
            let (raster, flags) = render_frame(bf, cfg, geometry);
            if flags.block_clamped {
                clamped.push(bf.frame);
            }
            Frame { t_ns: bf.t_ns, raster }
        })
        .collect();
    Ok((FrameSequence::new(frames, cfg.frame_rate_fps)?, clamped))
}
