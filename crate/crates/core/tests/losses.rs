mod common;

use common::*;
use decomp_splat::error::Error;
use decomp_splat::image::Image;
use decomp_splat::losses::ssim::{gaussian_taps, C1, C2, WINDOW};
use decomp_splat::losses::*;
use proptest::prelude::*;
use rand::Rng;

fn random_image(r: &mut impl Rng, w: usize, h: usize, c: usize) -> Image<f64> {
    Image::from_vec(w, h, c, (0..w * h * c).map(|_| r.random_range(0.0..1.0)).collect()).unwrap()
}

/// SSIM from explicit windowed sums at every pixel, zero outside the image.
fn ssim_oracle(x: &Image<f64>, y: &Image<f64>) -> f64 {
    let taps = gaussian_taps();
    let r = (WINDOW / 2) as i64;
    let mut total = 0.0;
    for c in 0..x.channels {
        for py in 0..x.height as i64 {
            for px in 0..x.width as i64 {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (qx, qy) = (px + dx, py + dy);
                        if qx < 0 || qy < 0 || qx >= x.width as i64 || qy >= x.height as i64 {
                            continue;
                        }
                        let wgt = taps[(dx + r) as usize] * taps[(dy + r) as usize];
                        let a = x.get(qx as usize, qy as usize, c);
                        let b = y.get(qx as usize, qy as usize, c);
                        mx += wgt * a;
                        my += wgt * b;
                        xx += wgt * a * a;
                        yy += wgt * b * b;
                        xy += wgt * a * b;
                    }
                }
                let (vx, vy, cxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
                total += (2.0 * mx * my + C1) * (2.0 * cxy + C2) / ((mx * mx + my * my + C1) * (vx + vy + C2));
            }
        }
    }
    total / (x.width * x.height * x.channels) as f64
}

#[test]
fn l1_examples() {
    let mut r = rng(1);
    let a = random_image(&mut r, 5, 4, 3);
    assert_eq!(l1_loss(&a, &a).unwrap().0, 0.0);
    let b = a.map(|v| v + 0.1);
    assert!((l1_loss(&b, &a).unwrap().0 - 0.1).abs() < 1e-12);
    let c = random_image(&mut r, 5, 4, 3);
    let oracle: f64 = a.data.iter().zip(&c.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / 60.0;
    assert!((l1_loss(&a, &c).unwrap().0 - oracle).abs() < 1e-12);
    assert!(matches!(l1_loss(&a, &Image::zeros(4, 4, 3)), Err(Error::ShapeMismatch(_))));
}

#[test]
fn ssim_identity_and_inverse_binary() {
    let mut r = rng(2);
    let a = random_image(&mut r, 16, 16, 3);
    assert!(dssim_loss(&a, &a).unwrap().0.abs() < 1e-12);
    let bin = a.map(|v| if v > 0.5 { 1.0 } else { 0.0 });
    let inv = bin.map(|v| 1.0 - v);
    let d = dssim_loss(&inv, &bin).unwrap().0;
    // every window of an inverted binary image is anticorrelated, so SSIM is
    // negative and the dissimilarity lies above one half
    assert!(d > 0.5 && d <= 1.0);
    assert!((d - (1.0 - ssim_oracle(&inv, &bin)) / 2.0).abs() < 1e-12);
}

#[test]
fn ssim_matches_windowed_oracle() {
    let mut r = rng(3);
    for (w, h) in [(11, 11), (16, 13), (23, 17)] {
        let a = random_image(&mut r, w, h, 3);
        let b = random_image(&mut r, w, h, 3);
        assert!((ssim(&a, &b).unwrap() - ssim_oracle(&a, &b)).abs() < 1e-12);
    }
}

#[test]
fn ssim_rejects_small_images() {
    let a = Image::<f64>::zeros(10, 20, 3);
    assert!(matches!(ssim(&a, &a), Err(Error::ImageTooSmall { window: 11, .. })));
}

#[test]
fn dssim_gradient_matches_finite_differences() {
    let mut r = rng(4);
    let a = random_image(&mut r, 16, 16, 3);
    let b = random_image(&mut r, 16, 16, 3);
    let (_, g) = dssim_loss(&a, &b).unwrap();
    let h = 1e-5;
    for i in 0..a.data.len() {
        let mut p = a.clone();
        p.data[i] += h;
        let up = dssim_loss(&p, &b).unwrap().0;
        p.data[i] -= 2.0 * h;
        let dn = dssim_loss(&p, &b).unwrap().0;
        let fd = (up - dn) / (2.0 * h);
        assert!(rel_err(g.data[i], fd, 1e-8) < 1e-3, "pixel {i}: {} vs {fd}", g.data[i]);
    }
}

#[test]
fn alpha_regularizer_examples() {
    let ones = Image::<f64>::filled(6, 6, 1, 1.0);
    let zeros = Image::<f64>::zeros(6, 6, 1);
    assert_eq!(alpha_regularizers(&ones, &zeros, 0.01, 0.01).unwrap().value, 0.0);
    assert!((alpha_regularizers(&zeros, &ones, 0.01, 0.01).unwrap().value - 0.02).abs() < 1e-15);
    let mut r = rng(5);
    let a = random_image(&mut r, 6, 6, 1);
    let b = random_image(&mut r, 6, 6, 1);
    assert_eq!(alpha_regularizers(&a, &b, 0.0, 0.0).unwrap().value, 0.0);
    let reg = alpha_regularizers(&a, &b, 0.3, 0.7).unwrap();
    assert!(reg.d_alpha_s.data.iter().all(|&g| (g + 0.3 / 36.0).abs() < 1e-15));
    assert!(reg.d_alpha_d.data.iter().all(|&g| (g - 0.7 / 36.0).abs() < 1e-15));
}

#[test]
fn background_mask_examples() {
    let mut r = rng(6);
    let gt = random_image(&mut r, 9, 7, 3);
    let m = background_mask(&gt, &gt, 0.003, 0.6).unwrap();
    assert!(m.smooth.data.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    assert!(m.selected.iter().all(|&b| b));

    let far = gt.map(|v| v + 0.5);
    let mut one = far.clone();
    for c in 0..3 {
        one.set(4, 3, c, gt.get(4, 3, c));
    }
    let m = background_mask(&one, &gt, 0.003, 0.6).unwrap();
    assert!((m.smooth.get(4, 3, 0) - 1.0 / 9.0).abs() < 1e-15);
    assert!(!m.selected.iter().any(|&b| b));

    let m = background_mask(&far, &gt, 0.003, 0.6).unwrap();
    assert!(m.smooth.data.iter().all(|&v| v == 0.0));
    assert_eq!(m.count(), 0);
}

#[test]
fn background_mask_replicates_the_border() {
    let gt = Image::<f64>::zeros(4, 4, 3);
    let mut bg = Image::filled(4, 4, 3, 1.0);
    for c in 0..3 {
        bg.set(0, 0, c, 0.0);
    }
    // the corner pixel is replicated into four of its own window cells
    let m = background_mask(&bg, &gt, 0.003, 0.6).unwrap();
    assert!((m.smooth.get(0, 0, 0) - 4.0 / 9.0).abs() < 1e-15);
}

#[test]
fn background_opacity_loss_examples() {
    let zeros = Image::<f64>::zeros(5, 5, 1);
    let all = vec![true; 25];
    assert_eq!(bg_opacity_loss(&zeros, &zeros, &all, 0.15).unwrap().value, 0.0);
    assert_eq!(bg_opacity_loss(&zeros, &zeros, &vec![false; 25], 0.15).unwrap().value, 0.0);

    let mut r = rng(7);
    let ad = random_image(&mut r, 5, 5, 1);
    let as_ = random_image(&mut r, 5, 5, 1);
    let sel: Vec<bool> = (0..25).map(|_| r.random_bool(0.5)).collect();
    let out = bg_opacity_loss(&ad, &as_, &sel, 0.15).unwrap();
    let n = sel.iter().filter(|&&b| b).count() as f64;
    let oracle: f64 =
        (0..25).filter(|&p| sel[p]).map(|p| ad.data[p] + (1.0 - ad.data[p]) * as_.data[p]).sum::<f64>() * 0.15 / n;
    assert!((out.value - oracle).abs() < 1e-14);

    // a saturated distractor pixel contributes exactly one
    let ones = Image::filled(5, 5, 1, 1.0);
    let mut one_px = vec![false; 25];
    one_px[12] = true;
    assert!((bg_opacity_loss(&ones, &as_, &one_px, 1.0).unwrap().value - 1.0).abs() < 1e-15);
}

#[test]
fn total_loss_fixed_point_and_l1_only() {
    let mut r = rng(8);
    let gt = random_image(&mut r, 12, 12, 3);
    let ones = Image::filled(12, 12, 1, 1.0);
    let zeros = Image::zeros(12, 12, 1);
    let w = LossWeights::default();
    let out = total_loss(&gt, &ones, &zeros, None, &gt, &w).unwrap();
    assert!(out.total.abs() < 1e-12);

    let pred = random_image(&mut r, 12, 12, 3);
    let l1_only = LossWeights { lambda_ssim: 0.0, lambda_s: 0.0, lambda_d: 0.0, lambda_bg: 0.0, ..w };
    let a = random_image(&mut r, 12, 12, 1);
    let out = total_loss(&pred, &a, &a, Some(&gt), &gt, &l1_only).unwrap();
    assert_eq!(out.total, l1_loss(&pred, &gt).unwrap().0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn losses_are_non_negative(seed in 0u64..100_000) {
        let mut r = rng(seed);
        let a = random_image(&mut r, 12, 12, 3);
        let b = random_image(&mut r, 12, 12, 3);
        let s = random_image(&mut r, 12, 12, 1);
        let d = random_image(&mut r, 12, 12, 1);
        let out = total_loss(&a, &s, &d, Some(&b), &b, &LossWeights::default()).unwrap();
        for v in [out.total, out.l1, out.dssim, out.alpha_reg, out.bg_reg] {
            prop_assert!(v >= 0.0);
        }
    }

    #[test]
    fn background_mask_is_translation_equivariant(seed in 0u64..100_000, sx in 1usize..4, sy in 1usize..4) {
        let mut r = rng(seed);
        let (w, h) = (14, 12);
        let gt = random_image(&mut r, w, h, 3);
        let bg = Image::from_vec(w, h, 3, gt.data.iter().map(|&v| if r.random_bool(0.6) { v } else { v + 0.3 }).collect()).unwrap();
        let shift = |img: &Image<f64>| {
            let mut out = Image::zeros(w, h, 3);
            for y in 0..h {
                for x in 0..w {
                    for c in 0..3 {
                        out.set(x, y, c, img.get((x + w - sx) % w, (y + h - sy) % h, c));
                    }
                }
            }
            out
        };
        let m0 = background_mask(&bg, &gt, 0.003, 0.6).unwrap();
        let m1 = background_mask(&shift(&bg), &shift(&gt), 0.003, 0.6).unwrap();
        // interior pixels away from both the border and the wrap seam
        for y in (sy + 2)..(h - 2) {
            for x in (sx + 2)..(w - 2) {
                prop_assert_eq!(m1.selected[y * w + x], m0.selected[(y - sy) * w + (x - sx)]);
            }
        }
    }
}
