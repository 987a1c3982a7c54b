//! Structural similarity over uniform square windows.
//!
//! Window sums come from integer integral images, so every window statistic
//! is exact before the final division. Identical rasters score exactly 1.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsimParams {
    /// Side of the square window in pixels, slid with stride 1.
    pub window: u32,
    pub dynamic_range: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { window: 8, dynamic_range: 255.0, k1: 0.01, k2: 0.03 }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        if self.window < 2 || self.window > width.min(height) {
            return Err(Error::Input(format!("window {} does not fit a {width}x{height} raster", self.window)));
        }
        if !(self.c1() > 0.0 && self.c2() > 0.0) {
            return Err(Error::Input("stabilizing constants must be positive".into()));
        }
        Ok(())
    }
}

/// Summed-area table with a zero row and column in front.
struct Integral {
    stride: usize,
    data: Vec<i64>,
}

impl Integral {
    fn build(w: usize, h: usize, value: impl Fn(usize, usize) -> i64) -> Self {
        let stride = w + 1;
        let mut data = vec![0i64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0i64;
            for x in 0..w {
                row += value(x, y);
                data[(y + 1) * stride + x + 1] = data[y * stride + x + 1] + row;
            }
        }
        Self { stride, data }
    }

    #[inline]
    fn window(&self, x: usize, y: usize, n: usize) -> i64 {
        let s = self.stride;
        self.data[(y + n) * s + x + n] - self.data[y * s + x + n] - self.data[(y + n) * s + x] + self.data[y * s + x]
    }
}

/// Mean SSIM over all window positions.
pub fn ssim(a: &GrayImage, b: &GrayImage, p: &SsimParams) -> Result<f64> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::Dimension(a.width(), a.height(), b.width(), b.height()));
    }
    let (w, h) = (a.width() as usize, a.height() as usize);
    p.validate(a.width(), a.height())?;
    let pa = a.as_raw();
    let pb = b.as_raw();
    let px = |buf: &[u8], x: usize, y: usize| i64::from(buf[y * w + x]);
    let sa = Integral::build(w, h, |x, y| px(pa, x, y));
    let sb = Integral::build(w, h, |x, y| px(pb, x, y));
    let saa = Integral::build(w, h, |x, y| px(pa, x, y).pow(2));
    let sbb = Integral::build(w, h, |x, y| px(pb, x, y).pow(2));
    let sab = Integral::build(w, h, |x, y| px(pa, x, y) * px(pb, x, y));

    let n = p.window as usize;
    let nn = (n * n) as i64;
    let c1 = p.c1() * (nn * nn) as f64;
    let c2 = p.c2() * (nn * nn) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - n {
        for x in 0..=w - n {
            let (ma, mb) = (sa.window(x, y, n), sb.window(x, y, n));
            let (qa, qb, qab) = (saa.window(x, y, n), sbb.window(x, y, n), sab.window(x, y, n));
            // All terms scaled by n^4 relative to the textbook form.
            let lum = (2 * ma * mb) as f64 + c1;
            let lum_d = (ma * ma + mb * mb) as f64 + c1;
            let cs = (2 * (nn * qab - ma * mb)) as f64 + c2;
            let cs_d = ((nn * qa - ma * ma) + (nn * qb - mb * mb)) as f64 + c2;
            total += (lum * cs) / (lum_d * cs_d);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;

    #[test]
    fn identical_is_exactly_one() {
        let a = GrayImage::from_fn(20, 17, |x, y| Luma([((x * 31 + y * 7) % 256) as u8]));
        assert_eq!(ssim(&a, &a, &SsimParams::default()).unwrap(), 1.0);
    }

    #[test]
    fn constant_rasters_single_window() {
        let a = GrayImage::from_pixel(8, 8, Luma([50]));
        let b = GrayImage::from_pixel(8, 8, Luma([150]));
        let c1 = 6.5025;
        let expect = (2.0 * 50.0 * 150.0 + c1) / (50.0f64.powi(2) + 150.0f64.powi(2) + c1);
        let got = ssim(&a, &b, &SsimParams::default()).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn one_pixel_change_lowers_score() {
        let a = GrayImage::from_pixel(16, 16, Luma([90]));
        let mut b = a.clone();
        b.put_pixel(3, 4, Luma([91]));
        assert!(ssim(&a, &b, &SsimParams::default()).unwrap() < 1.0);
    }

    #[test]
    fn rejects_mismatch_and_bad_window() {
        let a = GrayImage::new(8, 8);
        let b = GrayImage::new(9, 8);
        assert!(matches!(ssim(&a, &b, &SsimParams::default()), Err(Error::Dimension(..))));
        let p = SsimParams { window: 9, ..SsimParams::default() };
        assert!(ssim(&a, &a, &p).is_err());
    }
}
