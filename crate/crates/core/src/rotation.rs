//! Continuous 6D rotation codec (two matrix columns, Gram-Schmidt decode).

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::pose::{Rotation6D, ROT6D_EPS};

/// Orthonormality tolerance accepted by [`matrix_to_rot6d`].
pub const ROTATION_TOL: f64 = 1e-6;

/// Decodes by Gram-Schmidt: `b1 = a1/|a1|`, `b2` the normalized part of `a2`
/// orthogonal to `b1`, `b3 = b1 x b2`; the result has columns `(b1, b2, b3)`.
pub fn rot6d_to_matrix(r: &Rotation6D) -> Result<Matrix3<f64>> {
    let a1 = Vector3::from(r.first());
    let a2 = Vector3::from(r.second());
    let n1 = a1.norm();
    if n1 < ROT6D_EPS {
        return Err(Error::DegenerateRotation("first column has zero length"));
    }
    let b1 = a1 / n1;
    let ortho = a2 - b1 * b1.dot(&a2);
    let n2 = ortho.norm();
    if n2 < ROT6D_EPS * a2.norm().max(1.0) {
        return Err(Error::DegenerateRotation("second column parallel to the first"));
    }
    let b2 = ortho / n2;
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

/// Reads off the first two columns of a proper rotation matrix.
pub fn matrix_to_rot6d(m: &Matrix3<f64>) -> Result<Rotation6D> {
    let err = (m.transpose() * m - Matrix3::identity()).abs().max();
    if !err.is_finite() || err > ROTATION_TOL {
        return Err(Error::NotARotation(err));
    }
    let det = m.determinant();
    if (det - 1.0).abs() > ROTATION_TOL {
        return Err(Error::NotARotation((det - 1.0).abs()));
    }
    Rotation6D::new([
        m[(0, 0)],
        m[(1, 0)],
        m[(2, 0)],
        m[(0, 1)],
        m[(1, 1)],
        m[(2, 1)],
    ])
}

/// Rotation by `angle` radians about `axis` (need not be normalized).
pub fn axis_angle(axis: [f64; 3], angle: f64) -> Matrix3<f64> {
    let v = Vector3::from(axis);
    if v.norm() == 0.0 {
        return Matrix3::identity();
    }
    Rotation3::from_axis_angle(&Unit::new_normalize(v), angle).into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use nalgebra::UnitQuaternion;

    /// Uniform rotations from normalized Gaussian quaternions, independent of
    /// the axis-angle helper under test.
    fn random_rotation(rng: &mut SplitMix64) -> Matrix3<f64> {
        let q = nalgebra::Quaternion::new(rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian());
        UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
    }

    #[test]
    fn identity_and_scaled_identity() {
        let r = Rotation6D::new([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(rot6d_to_matrix(&r).unwrap(), Matrix3::identity());
        let r = Rotation6D::new([2.0, 0.0, 0.0, 0.0, 3.0, 0.0]).unwrap();
        assert_eq!(rot6d_to_matrix(&r).unwrap(), Matrix3::identity());
        assert_eq!(
            matrix_to_rot6d(&Matrix3::identity()).unwrap().values(),
            [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn quarter_turn_about_z() {
        let m = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_eq!(matrix_to_rot6d(&m).unwrap().values(), [0.0, 1.0, 0.0, -1.0, 0.0, 0.0]);
        let a = axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        assert!((a - m).abs().max() < 1e-15);
    }

    #[test]
    fn rejects_non_rotations() {
        let mut m = Matrix3::identity();
        m[(2, 2)] = -1.0;
        assert!(matches!(matrix_to_rot6d(&m), Err(Error::NotARotation(_))));
        assert!(matrix_to_rot6d(&(Matrix3::identity() * 1.1)).is_err());
    }

    #[test]
    fn round_trip_random_rotations() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..1000 {
            let m = random_rotation(&mut rng);
            let back = rot6d_to_matrix(&matrix_to_rot6d(&m).unwrap()).unwrap();
            assert!((back - m).norm() < 1e-9);
            assert!((back.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn decode_is_scale_invariant_and_orthonormal() {
        let mut rng = SplitMix64::new(8);
        for _ in 0..200 {
            let v: [f64; 6] = std::array::from_fn(|_| rng.gaussian());
            let Ok(r) = Rotation6D::new(v) else { continue };
            let m = rot6d_to_matrix(&r).unwrap();
            assert!((m.transpose() * m - Matrix3::identity()).abs().max() < 1e-12);
            assert!((m.determinant() - 1.0).abs() < 1e-12);
            let (s1, s2) = (0.1 + 3.0 * rng.uniform(), 0.1 + 3.0 * rng.uniform());
            let scaled = Rotation6D::new([
                v[0] * s1, v[1] * s1, v[2] * s1, v[3] * s2, v[4] * s2, v[5] * s2,
            ])
            .unwrap();
            assert!((rot6d_to_matrix(&scaled).unwrap() - m).abs().max() < 1e-12);
        }
    }
}
