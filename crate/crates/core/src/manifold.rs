//! Minimal SO(3)/SE(3) calculus.
//!
//! Rotations are plain [`Rotation3`] values, poses pair a position with a
//! rotation, and 6-vectors are always ordered `(translation, rotation)`.
//! The retraction pair used by the filter perturbs translation additively
//! and rotation on the right: `φ(X, ξ) = (p + ξ_t, R·exp(ξ_R))` with the
//! inverse `φ⁻¹(X, X̂) = (p − p̂, log(R̂ᵀ·R))`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3, Vector6};
use thiserror::Error;

/// A proper rotation matrix.
pub type Rotation = Rotation3<f64>;

/// Below this angle `exp`/`log` fall back to their series expansions.
const SMALL_ANGLE: f64 = 1e-6;

/// `log` switches to diagonal axis extraction once `sin θ` drops below this
/// on the far side of π/2.
const NEAR_PI_SIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ManifoldError {
    #[error("matrix is rank deficient (smallest singular value {sigma_min:e})")]
    DegenerateMatrix { sigma_min: f64 },
    #[error("vectors are antiparallel (cosine {cosine})")]
    AntiparallelVectors { cosine: f64 },
    #[error("relative rotation of {angle} rad is on the logarithm branch cut")]
    BranchCut { angle: f64 },
}

/// Rigid transform: maps points of a child frame into its parent frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: Rotation,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(position: Vector3<f64>, rotation: Rotation) -> Self {
        Self { position, rotation }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), Rotation::identity())
    }

    pub fn from_translation(position: Vector3<f64>) -> Self {
        Self::new(position, Rotation::identity())
    }

    pub fn from_rotation(rotation: Rotation) -> Self {
        Self::new(Vector3::zeros(), rotation)
    }

    /// `self ∘ other`: the pose of `other`'s child frame in `self`'s parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.position + self.rotation * other.position,
            self.rotation * other.rotation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let r_inv = self.rotation.inverse();
        Pose::new(-(r_inv * self.position), r_inv)
    }

    pub fn transform_point(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.position
    }

    pub fn transform_vector(&self, vector: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * vector
    }

    /// `(position, log(rotation))` stacked as a 6-vector.
    pub fn to_vector(&self) -> Vector6<f64> {
        let w = log_so3(&self.rotation);
        Vector6::new(self.position.x, self.position.y, self.position.z, w.x, w.y, w.z)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite()) && self.rotation.matrix().iter().all(|v| v.is_finite())
    }
}

/// Spatial velocity. The linear part is the velocity of the frame origin;
/// both parts are expressed in the same frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn scale(&self, s: f64) -> Twist {
        Twist::new(self.linear * s, self.angular * s)
    }

    /// Same rigid motion, referred to a point displaced by `offset` from the
    /// current reference point (axes unchanged).
    pub fn shift_origin(&self, offset: &Vector3<f64>) -> Twist {
        Twist::new(self.linear + self.angular.cross(offset), self.angular)
    }

    /// Re-express both parts in a frame rotated by `rotation` relative to
    /// the current one (`v' = rotation · v`).
    pub fn rotate(&self, rotation: &Rotation) -> Twist {
        Twist::new(rotation * self.linear, rotation * self.angular)
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| v.is_finite())
    }
}

/// `[z]ₓ`, so that `skew(z) · w = z × w`.
#[inline]
pub fn skew(z: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -z.z, z.y, z.z, 0.0, -z.x, -z.y, z.x, 0.0)
}

/// Inverse of [`skew`] applied to the antisymmetric part of `m`.
#[inline]
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// Rodrigues' formula.
pub fn exp_so3(axis_angle: &Vector3<f64>) -> Rotation {
    let theta2 = axis_angle.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(axis_angle);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation::from_matrix_unchecked(Matrix3::identity() + k * a + k * k * b)
}

/// Axis-angle vector of `r` with angle in `[0, π]`.
pub fn log_so3(r: &Rotation) -> Vector3<f64> {
    let m = r.matrix();
    let w = vee(m);
    let s = w.norm();
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = s.atan2(c);

    if theta < SMALL_ANGLE {
        return w;
    }
    if c < 0.0 && s < NEAR_PI_SIN {
        // (R + Rᵀ)/2 = cI + (1 − c)uuᵀ; read u off the dominant diagonal entry.
        let sym = (m + m.transpose()) * 0.5;
        let uut = (sym - Matrix3::identity() * c) / (1.0 - c);
        let k = (0..3).max_by(|&i, &j| uut[(i, i)].total_cmp(&uut[(j, j)])).unwrap_or(0);
        let mut axis = uut.column(k).into_owned() / uut[(k, k)].max(0.0).sqrt();
        axis.normalize_mut();
        if axis.dot(&w) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    w * (theta / s)
}

/// Rotation angle in `[0, π]`.
pub fn rotation_angle(r: &Rotation) -> f64 {
    let m = r.matrix();
    let s = vee(m).norm();
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    s.atan2(c)
}

/// Closest proper rotation to `m` in Frobenius norm: `U·diag(1, 1, det(UVᵀ))·Vᵀ`.
///
/// A mirrored input (negative determinant) is still projected, flipping the
/// direction of least stretch.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Result<Rotation, ManifoldError> {
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => {
            return Err(ManifoldError::DegenerateMatrix { sigma_min: 0.0 });
        }
    };
    let sv = svd.singular_values;
    let (k_min, sigma_min) = sv
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((2, 0.0));
    if !(sigma_min > 1e-12) {
        return Err(ManifoldError::DegenerateMatrix { sigma_min });
    }
    let mut sigma_star = Matrix3::identity();
    sigma_star[(k_min, k_min)] = (u * v_t).determinant().signum();
    Ok(Rotation::from_matrix_unchecked(u * sigma_star * v_t))
}

/// Smallest rotation taking unit vector `v` onto unit vector `n`:
/// `I + [w]ₓ + [w]ₓ²/(1 + c)` with `w = v × n`, `c = v · n`.
pub fn minimal_rotation(v: &Vector3<f64>, n: &Vector3<f64>) -> Result<Rotation, ManifoldError> {
    debug_assert!((v.norm() - 1.0).abs() < 1e-6, "v must be unit length");
    debug_assert!((n.norm() - 1.0).abs() < 1e-6, "n must be unit length");
    let c = v.dot(n);
    if c <= -1.0 + 1e-6 {
        return Err(ManifoldError::AntiparallelVectors { cosine: c });
    }
    let k = skew(&v.cross(n));
    Ok(Rotation::from_matrix_unchecked(
        Matrix3::identity() + k + k * k / (1.0 + c),
    ))
}

/// `φ(X, ξ)`: translation by vector addition, rotation perturbed on the right.
pub fn retract(x: &Pose, xi: &Vector6<f64>) -> Pose {
    let dp = Vector3::new(xi[0], xi[1], xi[2]);
    let dr = Vector3::new(xi[3], xi[4], xi[5]);
    Pose::new(x.position + dp, x.rotation * exp_so3(&dr))
}

/// `φ⁻¹(X, X̂)`: the ξ with `retract(X̂, ξ) = X`.
pub fn inverse_retract(x: &Pose, x_hat: &Pose) -> Result<Vector6<f64>, ManifoldError> {
    let rel = x_hat.rotation.inverse() * x.rotation;
    let w = log_so3(&rel);
    let angle = w.norm();
    if angle >= PI - 1e-6 {
        return Err(ManifoldError::BranchCut { angle });
    }
    let dp = x.position - x_hat.position;
    Ok(Vector6::new(dp.x, dp.y, dp.z, w.x, w.y, w.z))
}

/// Rotation about a principal axis, used throughout for readable geometry.
pub fn rot_x(angle: f64) -> Rotation {
    Rotation::from_axis_angle(&Vector3::x_axis(), angle)
}

pub fn rot_y(angle: f64) -> Rotation {
    Rotation::from_axis_angle(&Vector3::y_axis(), angle)
}

pub fn rot_z(angle: f64) -> Rotation {
    Rotation::from_axis_angle(&Vector3::z_axis(), angle)
}

/// Gram–Schmidt re-orthonormalization; keeps long integrations on SO(3).
pub fn renormalize(r: &Rotation) -> Rotation {
    let m = r.matrix();
    let x = m.column(0).normalize();
    let y0 = m.column(1).into_owned();
    let y = (y0 - x * x.dot(&y0)).normalize();
    let z = x.cross(&y);
    Rotation::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n;
            }
        }
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
        let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
        q.to_rotation_matrix()
    }

    fn series_exp(m: &Matrix3<f64>, terms: usize) -> Matrix3<f64> {
        let mut sum = Matrix3::identity();
        let mut term = Matrix3::identity();
        for k in 1..terms {
            term = term * m / k as f64;
            sum += term;
        }
        sum
    }

    fn assert_valid_rotation(r: &Rotation) {
        let m = r.matrix();
        assert_relative_eq!(m.transpose() * m, Matrix3::identity(), epsilon = 1e-9);
        assert_relative_eq!(m.determinant(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn skew_zero_and_unit_axis() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        let k = skew(&Vector3::z());
        assert_eq!(k[(0, 1)], -1.0);
        assert_eq!(k[(1, 0)], 1.0);
        assert_eq!(k * Vector3::x(), Vector3::y());
    }

    #[test]
    fn skew_matches_cross_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let z = random_unit(&mut rng) * rng.random_range(0.0..5.0);
            let w = random_unit(&mut rng) * rng.random_range(0.0..5.0);
            assert_relative_eq!(skew(&z) * w, z.cross(&w), epsilon = 1e-12);
        }
    }

    #[test]
    fn exp_identity_and_quarter_turn() {
        assert_eq!(exp_so3(&Vector3::zeros()), Rotation::identity());
        let r = exp_so3(&Vector3::new(0.0, 0.0, PI / 2.0));
        assert_relative_eq!(r * Vector3::x(), Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn exp_matches_truncated_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            // 20 terms truncate below 1e-12 for angles up to 2 rad.
            let v = random_unit(&mut rng) * rng.random_range(0.0..2.0);
            let oracle = series_exp(&skew(&v), 20);
            let err = (exp_so3(&v).matrix() - oracle).norm();
            assert!(err < 1e-10, "series mismatch {err} for {v:?}");
        }
    }

    #[test]
    fn log_identity_and_round_trip() {
        assert_eq!(log_so3(&Rotation::identity()), Vector3::zeros());
        let v = Vector3::new(0.1, -0.2, 0.3);
        assert_relative_eq!(log_so3(&exp_so3(&v)), v, epsilon = 1e-10);
    }

    #[test]
    fn log_at_pi_branch() {
        let r = exp_so3(&Vector3::new(PI, 0.0, 0.0));
        let w = log_so3(&r);
        assert_relative_eq!(w.x.abs(), PI, epsilon = 1e-9);
        assert!(w.y.abs() < 1e-9 && w.z.abs() < 1e-9);
        assert_relative_eq!(exp_so3(&w).matrix(), r.matrix(), epsilon = 1e-9);

        // Oblique axes just short of π exercise the diagonal extraction.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let axis = random_unit(&mut rng);
            let angle = PI - rng.random_range(0.0..1e-4);
            let r = exp_so3(&(axis * angle));
            let w = log_so3(&r);
            assert!(w.norm() <= PI + 1e-12);
            assert_relative_eq!(exp_so3(&w).matrix(), r.matrix(), epsilon = 1e-9);
        }
    }

    #[test]
    fn log_small_angle_series() {
        let v = Vector3::new(3e-7, -1e-7, 2e-7);
        assert_relative_eq!(log_so3(&exp_so3(&v)), v, epsilon = 1e-15);
    }

    #[test]
    fn nearest_rotation_fixed_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = random_rotation(&mut rng);
        assert_relative_eq!(
            nearest_rotation(r.matrix()).unwrap().matrix(),
            r.matrix(),
            epsilon = 1e-12
        );
        let scaled = Matrix3::identity() * 2.5;
        assert_relative_eq!(
            nearest_rotation(&scaled).unwrap().matrix(),
            &Matrix3::identity(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn nearest_rotation_rejects_rank_deficient() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            nearest_rotation(&m),
            Err(ManifoldError::DegenerateMatrix { .. })
        ));
    }

    #[test]
    fn nearest_rotation_handles_mirrored_input() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0) * 2.0;
        let r = nearest_rotation(&m).unwrap();
        assert_valid_rotation(&r);
    }

    #[test]
    fn minimal_rotation_fixed_cases() {
        let r = minimal_rotation(&Vector3::x(), &Vector3::x()).unwrap();
        assert_eq!(r, Rotation::identity());
        let r = minimal_rotation(&Vector3::x(), &Vector3::y()).unwrap();
        assert_relative_eq!(r.matrix(), rot_z(PI / 2.0).matrix(), epsilon = 1e-15);
        assert!(matches!(
            minimal_rotation(&Vector3::x(), &-Vector3::x()),
            Err(ManifoldError::AntiparallelVectors { .. })
        ));
    }

    /// Grid oracle: among sampled rotations that also carry `v` onto `n`,
    /// none turns through a smaller angle than the closed form.
    #[test]
    fn minimal_rotation_is_minimal_against_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let axes: Vec<Vector3<f64>> = (0..600).map(|_| random_unit(&mut rng)).collect();
        for _ in 0..10 {
            let v = random_unit(&mut rng);
            let n = random_unit(&mut rng);
            if v.dot(&n) < -0.9 {
                continue;
            }
            let r = minimal_rotation(&v, &n).unwrap();
            assert_relative_eq!(r * v, n, epsilon = 1e-9);
            let best = rotation_angle(&r);
            for axis in &axes {
                for k in 0..=180 {
                    let angle = PI * k as f64 / 180.0;
                    let q = exp_so3(&(axis * angle));
                    if (q * v - n).norm() < 1e-2 {
                        // ‖Qv − n‖ < δ bounds the angle deficit by ~δ.
                        assert!(angle >= best - 1.2e-2, "grid {angle} beat {best}");
                    }
                }
            }
        }
    }

    #[test]
    fn retract_fixed_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Pose::new(Vector3::new(0.3, -0.1, 2.0), random_rotation(&mut rng));
        assert_eq!(retract(&x, &Vector6::zeros()), x);
        let moved = retract(&Pose::identity(), &Vector6::new(1.0, 2.0, 3.0, 0.0, 0.0, 0.0));
        assert_eq!(moved.position, Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(moved.rotation, Rotation::identity());
    }

    #[test]
    fn inverse_retract_fixed_cases() {
        let x = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(inverse_retract(&x, &x).unwrap(), Vector6::zeros());
        let xi = inverse_retract(&x, &Pose::identity()).unwrap();
        assert_eq!(xi, Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        let flipped = Pose::from_rotation(exp_so3(&Vector3::new(0.0, PI, 0.0)));
        assert!(matches!(
            inverse_retract(&flipped, &Pose::identity()),
            Err(ManifoldError::BranchCut { .. })
        ));
    }

    #[test]
    fn twist_shift_and_rotate() {
        let t = Twist::new(Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.0, 0.0, 1.0));
        let shifted = t.shift_origin(&Vector3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(shifted.linear, Vector3::new(0.1, 1.0, 0.0), epsilon = 1e-15);
        let r = rot_z(PI / 2.0);
        assert_relative_eq!(t.rotate(&r).linear, Vector3::new(0.0, 0.1, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn pose_inverse_composes_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Pose::new(Vector3::new(0.4, 1.0, -0.2), random_rotation(&mut rng));
        let e = x.compose(&x.inverse());
        assert_relative_eq!(e.position, Vector3::zeros(), epsilon = 1e-14);
        assert_relative_eq!(e.rotation.matrix(), &Matrix3::identity(), epsilon = 1e-14);
    }

    fn vec3() -> impl Strategy<Value = Vector3<f64>> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn prop_skew_linear_and_antisymmetric(a in vec3(), b in vec3(), s in -3.0..3.0f64) {
            let lhs = skew(&(a * s + b));
            let rhs = skew(&a) * s + skew(&b);
            prop_assert!((lhs - rhs).norm() < 1e-12);
            prop_assert!((skew(&a).transpose() + skew(&a)).norm() == 0.0);
        }

        #[test]
        fn prop_exp_log_round_trip(axis in vec3(), angle in 1e-6..(PI - 1e-3)) {
            prop_assume!(axis.norm() > 1e-3);
            let v = axis.normalize() * angle;
            let r = exp_so3(&v);
            assert_valid_rotation(&r);
            let back = log_so3(&r);
            prop_assert!((back - v).norm() < 1e-9);
            prop_assert!((exp_so3(&back).matrix() - r.matrix()).norm() < 1e-9);
        }

        #[test]
        fn prop_nearest_rotation_scale_invariant(seed in 0u64..1000, s in 0.01..100.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            prop_assume!(m.svd(false, false).singular_values.min() > 1e-3);
            let a = nearest_rotation(&m).unwrap();
            let b = nearest_rotation(&(m * s)).unwrap();
            assert_valid_rotation(&a);
            prop_assert!((a.matrix() - b.matrix()).norm() < 1e-9);
            let again = nearest_rotation(a.matrix()).unwrap();
            prop_assert!((again.matrix() - a.matrix()).norm() < 1e-12);
        }

        #[test]
        fn prop_minimal_rotation_bound(a in vec3(), b in vec3()) {
            prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3);
            let v = a.normalize();
            let n = b.normalize();
            prop_assume!(v.dot(&n) > -0.99);
            let r = minimal_rotation(&v, &n).unwrap();
            prop_assert!((r * v - n).norm() < 1e-9);
            let bound = v.dot(&n).clamp(-1.0, 1.0).acos();
            prop_assert!(rotation_angle(&r) <= bound + 1e-9);
            let axis = log_so3(&r);
            if axis.norm() > 1e-6 {
                prop_assert!(axis.normalize().dot(&v).abs() < 1e-9);
                prop_assert!(axis.normalize().dot(&n).abs() < 1e-9);
            }
        }

        #[test]
        fn prop_retract_round_trip(seed in 0u64..1000, xi_t in vec3(), dir in vec3(), angle in 0.0..(PI - 1e-3)) {
            prop_assume!(dir.norm() > 1e-3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Pose::new(xi_t * 3.0, random_rotation(&mut rng));
            let w = dir.normalize() * angle;
            let xi = Vector6::new(xi_t.x, xi_t.y, xi_t.z, w.x, w.y, w.z);
            let y = retract(&x, &xi);
            let back = inverse_retract(&y, &x).unwrap();
            prop_assert!((back - xi).norm() < 1e-9);
        }
    }
}
