//! Real spherical harmonics up to degree 4.
//!
//! Basis ordering is `l = 0..=L`, `m = -l..=l`, with the Condon-Shortley
//! phase folded into the constants (the usual splatting convention).

use std::f64::consts::PI;

use crate::scalar::Real;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Number of basis functions for degree `degree`.
#[inline]
pub const fn num_coeffs(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Evaluates the basis at unit direction `d` into `out[..num_coeffs(degree)]`.
pub fn sh_basis<T: Real>(degree: usize, d: [T; 3], out: &mut [T]) {
    assert!(degree <= 4, "SH degree {degree} not supported");
    let c = T::lit;
    let [x, y, z] = d;
    out[0] = c(SH_C0);
    if degree == 0 {
        return;
    }
    out[1] = -c(SH_C1) * y;
    out[2] = c(SH_C1) * z;
    out[3] = -c(SH_C1) * x;
    if degree == 1 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    out[4] = c(SH_C2[0]) * xy;
    out[5] = c(SH_C2[1]) * yz;
    out[6] = c(SH_C2[2]) * (c(2.0) * zz - xx - yy);
    out[7] = c(SH_C2[3]) * xz;
    out[8] = c(SH_C2[4]) * (xx - yy);
    if degree == 2 {
        return;
    }
    out[9] = c(SH_C3[0]) * y * (c(3.0) * xx - yy);
    out[10] = c(SH_C3[1]) * xy * z;
    out[11] = c(SH_C3[2]) * y * (c(4.0) * zz - xx - yy);
    out[12] = c(SH_C3[3]) * z * (c(2.0) * zz - c(3.0) * xx - c(3.0) * yy);
    out[13] = c(SH_C3[4]) * x * (c(4.0) * zz - xx - yy);
    out[14] = c(SH_C3[5]) * z * (xx - yy);
    out[15] = c(SH_C3[6]) * x * (xx - c(3.0) * yy);
    if degree == 3 {
        return;
    }
    let k44 = 0.75 * (35.0 / PI).sqrt();
    let k43 = 0.75 * (35.0 / (2.0 * PI)).sqrt();
    let k42 = 0.75 * (5.0 / PI).sqrt();
    let k41 = 0.75 * (5.0 / (2.0 * PI)).sqrt();
    let k40 = 3.0 / 16.0 * (1.0 / PI).sqrt();
    let k42p = 3.0 / 8.0 * (5.0 / PI).sqrt();
    let k44p = 3.0 / 16.0 * (35.0 / PI).sqrt();
    out[16] = c(k44) * xy * (xx - yy);
    out[17] = -c(k43) * yz * (c(3.0) * xx - yy);
    out[18] = c(k42) * xy * (c(7.0) * zz - T::one());
    out[19] = -c(k41) * yz * (c(7.0) * zz - c(3.0));
    out[20] = c(k40) * (c(35.0) * zz * zz - c(30.0) * zz + c(3.0));
    out[21] = -c(k41) * xz * (c(7.0) * zz - c(3.0));
    out[22] = c(k42p) * (xx - yy) * (c(7.0) * zz - T::one());
    out[23] = -c(k43) * xz * (xx - c(3.0) * yy);
    out[24] = c(k44p) * (xx * (xx - c(3.0) * yy) - yy * (c(3.0) * xx - yy));
}

/// Basis values and their partial derivatives with respect to the three
/// direction components (treated as independent), degree at most 3.
pub fn sh_basis_grad<T: Real>(degree: usize, d: [T; 3], val: &mut [T], dx: &mut [T], dy: &mut [T], dz: &mut [T]) {
    assert!(degree <= 3, "SH gradient only implemented up to degree 3");
    sh_basis(degree, d, val);
    let n = num_coeffs(degree);
    for s in [&mut *dx, &mut *dy, &mut *dz] {
        s[..n].iter_mut().for_each(|v| *v = T::zero());
    }
    if degree == 0 {
        return;
    }
    let c = T::lit;
    let [x, y, z] = d;
    dy[1] = -c(SH_C1);
    dz[2] = c(SH_C1);
    dx[3] = -c(SH_C1);
    if degree == 1 {
        return;
    }
    let two = c(2.0);
    dx[4] = c(SH_C2[0]) * y;
    dy[4] = c(SH_C2[0]) * x;
    dy[5] = c(SH_C2[1]) * z;
    dz[5] = c(SH_C2[1]) * y;
    dx[6] = c(SH_C2[2]) * -two * x;
    dy[6] = c(SH_C2[2]) * -two * y;
    dz[6] = c(SH_C2[2]) * c(4.0) * z;
    dx[7] = c(SH_C2[3]) * z;
    dz[7] = c(SH_C2[3]) * x;
    dx[8] = c(SH_C2[4]) * two * x;
    dy[8] = c(SH_C2[4]) * -two * y;
    if degree == 2 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let three = c(3.0);
    let four = c(4.0);
    let six = c(6.0);
    dx[9] = c(SH_C3[0]) * six * x * y;
    dy[9] = c(SH_C3[0]) * three * (xx - yy);
    dx[10] = c(SH_C3[1]) * y * z;
    dy[10] = c(SH_C3[1]) * x * z;
    dz[10] = c(SH_C3[1]) * x * y;
    dx[11] = c(SH_C3[2]) * -two * x * y;
    dy[11] = c(SH_C3[2]) * (four * zz - xx - three * yy);
    dz[11] = c(SH_C3[2]) * c(8.0) * y * z;
    dx[12] = c(SH_C3[3]) * -six * x * z;
    dy[12] = c(SH_C3[3]) * -six * y * z;
    dz[12] = c(SH_C3[3]) * (six * zz - three * xx - three * yy);
    dx[13] = c(SH_C3[4]) * (four * zz - three * xx - yy);
    dy[13] = c(SH_C3[4]) * -two * x * y;
    dz[13] = c(SH_C3[4]) * c(8.0) * x * z;
    dx[14] = c(SH_C3[5]) * two * x * z;
    dy[14] = c(SH_C3[5]) * -two * y * z;
    dz[14] = c(SH_C3[5]) * (xx - yy);
    dx[15] = c(SH_C3[6]) * three * (xx - yy);
    dy[15] = c(SH_C3[6]) * -six * x * y;
}

/// Raw SH color (before the +0.5 offset and clamp) for a coefficient block in
/// coefficient-major layout.
pub fn sh_raw_color<T: Real>(coeffs: &[T], degree: usize, dir: [T; 3]) -> [T; 3] {
    let mut basis = [T::zero(); 25];
    sh_basis(degree, dir, &mut basis);
    let mut rgb = [T::zero(); 3];
    for (k, &b) in basis[..num_coeffs(degree)].iter().enumerate() {
        for ch in 0..3 {
            rgb[ch] += coeffs[3 * k + ch] * b;
        }
    }
    rgb
}

/// View-dependent RGB: `max(SH(dir) + 0.5, 0)` per channel.
pub fn eval_sh_color<T: Real>(coeffs: &[T], degree: usize, dir: [T; 3]) -> [T; 3] {
    let raw = sh_raw_color(coeffs, degree, dir);
    raw.map(|v| (v + T::lit(0.5)).max(T::zero()))
}

/// Backward of [`eval_sh_color`]: accumulates `dL/dcoeffs` into `d_coeffs`
/// and returns `dL/d dir` (with respect to the unit direction components).
pub fn eval_sh_color_backward<T: Real>(
    coeffs: &[T],
    degree: usize,
    dir: [T; 3],
    d_rgb: [T; 3],
    d_coeffs: &mut [T],
) -> [T; 3] {
    let n = num_coeffs(degree);
    let mut val = [T::zero(); 16];
    let mut dx = [T::zero(); 16];
    let mut dy = [T::zero(); 16];
    let mut dz = [T::zero(); 16];
    sh_basis_grad(degree, dir, &mut val, &mut dx, &mut dy, &mut dz);
    let mut raw = [T::lit(0.5); 3];
    for k in 0..n {
        for ch in 0..3 {
            raw[ch] += coeffs[3 * k + ch] * val[k];
        }
    }
    // clamp at zero kills the gradient
    let g = [0, 1, 2].map(|ch| if raw[ch] < T::zero() { T::zero() } else { d_rgb[ch] });
    let mut d_dir = [T::zero(); 3];
    for k in 0..n {
        let mut proj = T::zero();
        for ch in 0..3 {
            d_coeffs[3 * k + ch] += g[ch] * val[k];
            proj += g[ch] * coeffs[3 * k + ch];
        }
        d_dir[0] += proj * dx[k];
        d_dir[1] += proj * dy[k];
        d_dir[2] += proj * dz[k];
    }
    d_dir
}

/// Converts an RGB value in [0, 1] into the DC coefficient reproducing it.
pub fn rgb_to_sh_dc<T: Real>(rgb: T) -> T {
    (rgb - T::lit(0.5)) / T::lit(SH_C0)
}
