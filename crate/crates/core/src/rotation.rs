//! Gripper orientation parameterization.
//!
//! A gripper orientation is the intrinsic ZYZ product `R_z(θ) R_y(φ) R_z(γ)`.
//! Its third column is the approach axis `n_g = [sφ cθ, sφ sθ, cφ]`, so `θ`
//! and `φ` are the azimuth and polar angle of `n_g` while `γ` spins the cup
//! layout about it.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::real::Real;

const UNIT_TOLERANCE: f64 = 1e-6;
const DOWN_TOLERANCE: f64 = 1e-9;

/// ZYZ rotation matrix `R_z(theta) R_y(phi) R_z(gamma)`.
pub fn zyz_rotation<T: Real>(theta: T, phi: T, gamma: T) -> Matrix3<T> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    Matrix3::new(
        cp * ct * cg - st * sg,
        -cp * ct * sg - st * cg,
        sp * ct,
        cp * st * cg + ct * sg,
        -cp * st * sg + ct * cg,
        sp * st,
        -sp * cg,
        sp * sg,
        cp,
    )
}

/// Unit vector with azimuth `theta` and polar angle `phi`.
pub fn angles_to_vec<T: Real>(theta: T, phi: T) -> Vector3<T> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(ct * sp, st * sp, cp)
}

/// Azimuth `θ ∈ (−π, π]` and polar angle `φ ∈ [0, π/2]` of an up-facing unit vector.
///
/// At the pole the azimuth is undefined and is reported as 0.
pub fn vec_to_angles<T: Real>(v: &Vector3<T>) -> Result<(T, T)> {
    let norm = v.norm();
    if !norm.is_finite_value() || (norm - T::one()).abs() > T::lit(UNIT_TOLERANCE) {
        return Err(Error::InvalidVector(format!(
            "expected unit length, got norm {norm}"
        )));
    }
    if v.z < -T::lit(DOWN_TOLERANCE) {
        return Err(Error::InvalidVector(format!(
            "expected an up-facing vector, got z = {}",
            v.z
        )));
    }
    let phi = v.z.clamp(T::zero(), T::one()).acos();
    if v.x == T::zero() && v.y == T::zero() {
        return Ok((T::zero(), phi));
    }
    let mut theta = v.y.atan2(v.x);
    if theta <= -T::pi() {
        theta = T::pi();
    }
    Ok((theta, phi))
}

/// Angle between two unit vectors, robust to round-off outside `[-1, 1]`.
pub fn angle_between<T: Real>(a: &Vector3<T>, b: &Vector3<T>) -> T {
    a.dot(b).clamp(-T::one(), T::one()).acos()
}

/// Whether `m` is a proper rotation to within `tol`.
pub fn is_rotation<T: Real>(m: &Matrix3<T>, tol: T) -> bool {
    let gram = m.transpose() * m - Matrix3::identity();
    gram.amax() <= tol && (m.determinant() - T::one()).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn identity_at_zero() {
        let r = zyz_rotation(0.0, 0.0, 0.0);
        assert_relative_eq!(r, Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn approach_axis_permutations() {
        let r = zyz_rotation(0.0, FRAC_PI_2, 0.0);
        assert_relative_eq!(r.column(2).into_owned(), Vector3::x(), epsilon = 1e-15);
        let r = zyz_rotation(FRAC_PI_2, FRAC_PI_2, 0.0);
        assert_relative_eq!(r.column(2).into_owned(), Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn matches_product_of_elementary_rotations() {
        let rz = |a: f64| nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), a);
        let ry = |a: f64| nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), a);
        let (t, p, g) = (0.7, 0.4, -2.1);
        let expected = (rz(t) * ry(p) * rz(g)).into_inner();
        assert_relative_eq!(zyz_rotation(t, p, g), expected, epsilon = 1e-14);
    }

    #[test]
    fn angles_of_axes() {
        assert_eq!(vec_to_angles(&Vector3::<f64>::z()).unwrap(), (0.0, 0.0));
        let (t, p) = vec_to_angles(&Vector3::<f64>::x()).unwrap();
        assert_relative_eq!(t, 0.0);
        assert_relative_eq!(p, FRAC_PI_2);
        let (t, p) = vec_to_angles(&Vector3::<f64>::y()).unwrap();
        assert_relative_eq!(t, FRAC_PI_2);
        assert_relative_eq!(p, FRAC_PI_2);
    }

    #[test]
    fn azimuth_range_is_half_open_at_minus_pi() {
        let (t, _) = vec_to_angles(&Vector3::new(-1.0, -0.0, 0.0)).unwrap();
        assert_eq!(t, PI);
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(vec_to_angles(&Vector3::new(0.0, 0.0, 2.0)).is_err());
        assert!(vec_to_angles(&Vector3::new(0.0, 0.6, -0.8)).is_err());
        assert!(vec_to_angles(&Vector3::new(f64::NAN, 0.0, 1.0)).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let r = zyz_rotation(0.3f32, 0.2, 1.0);
        assert!(is_rotation(&r, 1e-5));
        let (t, p) = vec_to_angles(&r.column(2).into_owned()).unwrap();
        assert!((t - 0.3).abs() < 1e-5 && (p - 0.2).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn approach_axis_ignores_spin(t in -PI..PI, p in 0.0..FRAC_PI_2, g1 in -PI..PI, g2 in -PI..PI) {
            let a = zyz_rotation(t, p, g1);
            let b = zyz_rotation(t, p, g2);
            prop_assert!((a.column(2) - b.column(2)).amax() < 1e-12);
            prop_assert!(is_rotation(&a, 1e-12));
            prop_assert!((a.column(2).into_owned() - angles_to_vec(t, p)).amax() < 1e-12);
        }

        #[test]
        fn lattice_round_trip(ii in 0usize..72, jj in 1usize..=18) {
            let step = 5f64.to_radians();
            let theta = ii as f64 * step - PI;
            let phi = jj as f64 * step;
            let v = angles_to_vec(theta, phi);
            let (t, p) = vec_to_angles(&v).unwrap();
            let back = angles_to_vec(t, p);
            prop_assert!((back - v).amax() < 1e-9);
            prop_assert!((p - phi).abs() < 1e-9);
        }
    }
}
