//! Serial revolute chains: forward kinematics, geometric Jacobian, damped
//! pseudo-inverse, capsule self-collision and iterative inverse kinematics.

mod collision;
mod file;
mod ik;

pub use collision::{segment_distance, Capsule, CollisionGeometry};
pub(crate) use file::toml_error;
pub use file::{ChainFileError, RobotModel};
pub use ik::{ik_step, pose_error, solve_ik, IkFailure, IkSolution, IkSolver};

use nalgebra::{DMatrix, SMatrix, SVector, Unit, Vector3};

use crate::manifold::{Pose, Rotation};

/// Joint vector of the 7-DOF arm.
pub type JointConfig = SVector<f64, 7>;

/// The 7-DOF arm used throughout the pipeline.
pub type KinematicChain = SerialChain<7>;

pub const DEFAULT_DAMPING: f64 = 1e-6;

/// One revolute joint: a fixed transform from the previous link frame
/// followed by a rotation about `axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub origin: Pose,
    pub axis: Unit<Vector3<f64>>,
    pub lower: f64,
    pub upper: f64,
}

impl Joint {
    pub fn revolute_z(origin: Pose, lower: f64, upper: f64) -> Self {
        Self {
            origin,
            axis: Vector3::z_axis(),
            lower,
            upper,
        }
    }
}

/// Serial chain of `N` revolute joints mounted at `base`, ending at `flange`.
///
/// Link frame 0 is the base; link frame `i` is the frame after joint `i`'s
/// rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct SerialChain<const N: usize> {
    pub base: Pose,
    pub joints: [Joint; N],
    /// Last link frame to flange.
    pub flange: Pose,
}

impl<const N: usize> SerialChain<N> {
    pub fn lower_limits(&self) -> SVector<f64, N> {
        SVector::from_fn(|i, _| self.joints[i].lower)
    }

    pub fn upper_limits(&self) -> SVector<f64, N> {
        SVector::from_fn(|i, _| self.joints[i].upper)
    }

    pub fn within_limits(&self, q: &SVector<f64, N>) -> bool {
        self.first_limit_violation(q).is_none()
    }

    pub fn first_limit_violation(&self, q: &SVector<f64, N>) -> Option<usize> {
        (0..N).find(|&i| !(q[i] >= self.joints[i].lower && q[i] <= self.joints[i].upper))
    }

    /// Link frames `0..=N` in the world.
    pub fn link_frames(&self, q: &SVector<f64, N>) -> Vec<Pose> {
        let mut frames = Vec::with_capacity(N + 1);
        let mut t = self.base;
        frames.push(t);
        for (joint, &qi) in self.joints.iter().zip(q.iter()) {
            t = t
                .compose(&joint.origin)
                .compose(&Pose::from_rotation(Rotation::from_axis_angle(&joint.axis, qi)));
            frames.push(t);
        }
        frames
    }

    /// Flange pose in the world, κ(q).
    pub fn forward_kinematics(&self, q: &SVector<f64, N>) -> Pose {
        let mut t = self.base;
        for (joint, &qi) in self.joints.iter().zip(q.iter()) {
            t = t
                .compose(&joint.origin)
                .compose(&Pose::from_rotation(Rotation::from_axis_angle(&joint.axis, qi)));
        }
        t.compose(&self.flange)
    }

    /// Pose of a frame rigidly attached to the flange.
    pub fn tool_pose(&self, q: &SVector<f64, N>, tool: &Pose) -> Pose {
        self.forward_kinematics(q).compose(tool)
    }

    /// Geometric Jacobian at the flange origin, world frame, rows ordered
    /// (linear, angular).
    pub fn jacobian(&self, q: &SVector<f64, N>) -> SMatrix<f64, 6, N> {
        self.tool_jacobian(q, &Pose::identity()).1
    }

    /// Tool pose together with the geometric Jacobian at the tool origin.
    pub fn tool_jacobian(&self, q: &SVector<f64, N>, tool: &Pose) -> (Pose, SMatrix<f64, 6, N>) {
        let mut t = self.base;
        let mut axes = [Vector3::zeros(); N];
        let mut origins = [Vector3::zeros(); N];
        for (i, (joint, &qi)) in self.joints.iter().zip(q.iter()).enumerate() {
            t = t.compose(&joint.origin);
            axes[i] = t.rotation * joint.axis.into_inner();
            origins[i] = t.position;
            t = t.compose(&Pose::from_rotation(Rotation::from_axis_angle(&joint.axis, qi)));
        }
        let end = t.compose(&self.flange).compose(tool);
        let mut j = SMatrix::<f64, 6, N>::zeros();
        for i in 0..N {
            let lin = axes[i].cross(&(end.position - origins[i]));
            j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, i).copy_from(&axes[i]);
        }
        (end, j)
    }
}

/// Damped least-squares pseudo-inverse `Jᵀ(JJᵀ + λ²I)⁻¹` (or its
/// `(JᵀJ + λ²I)⁻¹Jᵀ` twin for tall matrices). With zero damping and a
/// rank-deficient `J` this falls back to the SVD Moore–Penrose inverse.
pub fn pseudo_inverse<const N: usize>(j: &SMatrix<f64, 6, N>, damping: f64) -> SMatrix<f64, N, 6> {
    let l2 = damping * damping;
    if N >= 6 {
        let a = j * j.transpose() + SMatrix::<f64, 6, 6>::identity() * l2;
        if let Some(ch) = a.cholesky() {
            return j.transpose() * ch.inverse();
        }
    } else {
        let a = j.transpose() * j + SMatrix::<f64, N, N>::identity() * l2;
        if let Some(ch) = a.cholesky() {
            return ch.inverse() * j.transpose();
        }
    }
    let dynamic = DMatrix::from_column_slice(6, N, j.as_slice());
    let pinv = dynamic.pseudo_inverse(1e-12).unwrap_or_else(|_| DMatrix::zeros(N, 6));
    SMatrix::<f64, N, 6>::from_column_slice(pinv.as_slice())
}

/// Smallest singular value of a 6×N Jacobian.
pub fn min_singular_value<const N: usize>(j: &SMatrix<f64, 6, N>) -> f64 {
    let dynamic = DMatrix::from_column_slice(6, N, j.as_slice());
    dynamic.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}
