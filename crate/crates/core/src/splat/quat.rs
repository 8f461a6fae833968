use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Normalizes a `(w, x, y, z)` quaternion, returning it together with its
/// original norm. `None` for a zero (or non-finite) quaternion.
pub fn normalize_quat<T: Real>(q: &[T; 4]) -> Option<([T; 4], T)> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(n > T::zero()) || !n.is_finite_val() {
        return None;
    }
    Some(([q[0] / n, q[1] / n, q[2] / n, q[3] / n], n))
}

/// Rotation of an already unit-norm quaternion.
pub fn unit_quat_to_rotation<T: Real>(q: &[T; 4]) -> Matrix3<T> {
    let two = T::lit(2.0);
    let one = T::one();
    let [r, x, y, z] = *q;
    Matrix3::new(
        one - two * (y * y + z * z),
        two * (x * y - r * z),
        two * (x * z + r * y),
        two * (x * y + r * z),
        one - two * (x * x + z * z),
        two * (y * z - r * x),
        two * (x * z - r * y),
        two * (y * z + r * x),
        one - two * (x * x + y * y),
    )
}

/// Rotation matrix of `q / |q|`.
pub fn quat_to_rotation<T: Real>(q: &[T; 4]) -> Result<Matrix3<T>> {
    let (qn, _) = normalize_quat(q).ok_or(Error::DegenerateQuaternion)?;
    Ok(unit_quat_to_rotation(&qn))
}

/// Pulls `dL/dR` back to the raw (unnormalized) quaternion.
pub fn quat_to_rotation_backward<T: Real>(q: &[T; 4], d_rot: &Matrix3<T>) -> [T; 4] {
    let Some((qn, norm)) = normalize_quat(q) else {
        return [T::zero(); 4];
    };
    let [r, x, y, z] = qn;
    let g = |i: usize, j: usize| d_rot[(i, j)];
    let two = T::lit(2.0);
    let gr = two * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let gx = two
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - two * x * g(1, 1) - r * g(1, 2)
            + z * g(2, 0)
            + r * g(2, 1)
            - two * x * g(2, 2));
    let gy = two
        * (-two * y * g(0, 0) + x * g(0, 1) + r * g(0, 2) + x * g(1, 0) + z * g(1, 2) - r * g(2, 0)
            + z * g(2, 1)
            - two * y * g(2, 2));
    let gz = two
        * (-two * z * g(0, 0) - r * g(0, 1) + x * g(0, 2) + r * g(1, 0) - two * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    let gn = [gr, gx, gy, gz];
    // d(q/|q|)/dq = (I - q̂ q̂ᵀ) / |q|
    let dot = gn.iter().zip(&qn).fold(T::zero(), |a, (&g, &q)| a + g * q);
    [
        (gn[0] - qn[0] * dot) / norm,
        (gn[1] - qn[1] * dot) / norm,
        (gn[2] - qn[2] * dot) / norm,
        (gn[3] - qn[3] * dot) / norm,
    ]
}

/// Hamilton product `a ⊗ b`.
pub fn quat_mul<T: Real>(a: &[T; 4], b: &[T; 4]) -> [T; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_half_turn() {
        let id = quat_to_rotation(&[1.0f64, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(id, Matrix3::identity());
        let zturn = quat_to_rotation(&[0.0f64, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(zturn, Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn zero_quaternion_rejected() {
        assert!(matches!(quat_to_rotation(&[0.0f64; 4]), Err(Error::DegenerateQuaternion)));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let q = [0.3f64, -0.7, 0.2, 0.55];
        let weights = Matrix3::new(0.3, -1.2, 0.5, 0.7, 0.1, -0.4, 1.1, 0.9, -0.6);
        let loss = |q: &[f64; 4]| quat_to_rotation(q).unwrap().component_mul(&weights).sum();
        let g = quat_to_rotation_backward(&q, &weights);
        for k in 0..4 {
            let h = 1e-6;
            let mut qp = q;
            let mut qm = q;
            qp[k] += h;
            qm[k] -= h;
            let fd = (loss(&qp) - loss(&qm)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7, "k={k} fd={fd} an={}", g[k]);
        }
    }

    proptest! {
        #[test]
        fn rotation_is_orthonormal(w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            prop_assume!(w * w + x * x + y * y + z * z > 1e-3);
            let r = quat_to_rotation(&[w, x, y, z]).unwrap();
            let err = (r * r.transpose() - Matrix3::identity()).abs().max();
            prop_assert!(err < 1e-6);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-6);
        }
    }
}
