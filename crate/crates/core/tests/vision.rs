use image::{GrayImage, Luma};
use proptest::prelude::*;

use ctxmon_core::fault::{inject, CampaignSpec};
use ctxmon_core::sim::{block_trace, generate_trajectory, render_frames, CameraGeometry, NoiseSigma, ScenarioConfig};
use ctxmon_core::vision::{detect_failure_ssim, dtw, ssim, FailureEvent, SsimParams, DEFAULT_SSIM_THRESHOLD};

fn raster(w: u32, h: u32, px: &[u8]) -> GrayImage {
    GrayImage::from_fn(w, h, |x, y| Luma([px[(y * w + x) as usize % px.len()]]))
}

proptest! {
    #[test]
    fn ssim_is_bounded(w in 8u32..24, h in 8u32..24, a in prop::collection::vec(any::<u8>(), 1..600), b in prop::collection::vec(any::<u8>(), 1..600)) {
        let s = ssim(&raster(w, h, &a), &raster(w, h, &b), &SsimParams::default()).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s), "{}", s);
    }

    #[test]
    fn one_pixel_change_lowers_ssim(w in 8u32..24, h in 8u32..24, a in prop::collection::vec(any::<u8>(), 1..600), x in 0u32..24, y in 0u32..24, delta in 1u8..=255) {
        let img = raster(w, h, &a);
        let mut other = img.clone();
        let (x, y) = (x % w, y % h);
        let v = img.get_pixel(x, y).0[0];
        other.put_pixel(x, y, Luma([v.wrapping_add(delta)]));
        let p = SsimParams::default();
        prop_assert_eq!(ssim(&img, &img, &p).unwrap(), 1.0);
        prop_assert!(ssim(&img, &other, &p).unwrap() < 1.0);
    }

    #[test]
    fn dtw_is_bounded_by_index_matching(pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0), 1..40)) {
        let a: Vec<[f64; 2]> = pts.iter().map(|p| [p.0, p.1]).collect();
        let b: Vec<[f64; 2]> = pts.iter().map(|p| [p.2, p.3]).collect();
        let naive: f64 = a.iter().zip(&b).map(|(u, v)| ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt()).sum();
        let d = dtw(&a, &b).unwrap().distance;
        prop_assert!(d >= 0.0 && d <= naive + 1e-9);
        prop_assert!((dtw(&b, &a).unwrap().distance - d).abs() <= 1e-9);
    }
}

#[test]
fn ssim_and_physics_agree_on_presence_without_noise() {
    let camp = CampaignSpec::block_drop(100, 404);
    let g = CameraGeometry::default();
    let p = SsimParams::default();
    let mut agree = 0;
    for trial in 0..100 {
        let mut cfg = ScenarioConfig::default().with_seed(30_000 + trial as u64);
        cfg.noise_sigma = NoiseSigma { position_mm: 0.0, grasper_rad: 0.0 };
        let (t, labels) = generate_trajectory(&cfg).unwrap();
        let faulty = inject(&t, &camp.sample_trial(trial, &labels.labels).unwrap()).unwrap();
        let trace = block_trace(&faulty, &labels.labels, &cfg).unwrap();
        let (frames, _) = render_frames(&trace, &cfg, &g).unwrap();
        let seen = detect_failure_ssim(&frames, DEFAULT_SSIM_THRESHOLD, &p).unwrap();
        if seen.is_some() == FailureEvent::from_physics(&trace).is_some() {
            agree += 1;
        }
    }
    assert_eq!(agree, 100);
}
