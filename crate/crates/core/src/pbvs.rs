//! Pose-based visual servo law and its mapping to joint velocities.
//!
//! The error is the relative target `(t, R_e)`: the desired frame seen from
//! the current one. The feature vector is `s = (R_eᵀ·t, log R_e)`, "desired
//! minus current" with the translation in desired axes. Under a camera
//! twist `v` it moves as `ds/dt = −L·v` with
//! `L = blockdiag(R_eᵀ, L_θu(log R_e))`, so `v_c = λ·L⁺·s` reduces to
//! `v = λ·t`, `ω = λ·log R_e` and the error decays as `e^(−λt)`.

use nalgebra::{Matrix3, Matrix6, SVector, Vector3, Vector6};
use thiserror::Error;

use crate::kinematics::{min_singular_value, pseudo_inverse, JointConfig, KinematicChain, DEFAULT_DAMPING};
use crate::manifold::{log_so3, skew, Pose, Rotation, Twist};
use crate::perception::RelativeTarget;

/// Below this angle `sinc` uses its series.
const SINC_SERIES: f64 = 1e-4;
/// Jacobians with a smaller singular value are flagged as near singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-4;
/// Distance from a joint limit (rad) at which the joint counts as resting on it.
const LIMIT_MARGIN: f64 = 1e-6;
/// Width of the band next to each joint limit where avoidance acts (rad).
pub const LIMIT_BUFFER: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PbvsError {
    #[error("joint {joint} is outside its limits")]
    JointOutOfLimits { joint: usize },
}

/// Gain as a function of the error norm `‖s‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainSchedule {
    Constant(f64),
    /// `λ(x) = (λ₀ − λ∞)·exp(−k·x/(λ₀ − λ∞)) + λ∞`: large gain near
    /// convergence, bounded gain far from it.
    Adaptive {
        at_zero: f64,
        at_infinity: f64,
        slope_at_zero: f64,
    },
}

impl GainSchedule {
    pub fn gain(&self, error_norm: f64) -> f64 {
        match *self {
            GainSchedule::Constant(l) => l,
            GainSchedule::Adaptive {
                at_zero,
                at_infinity,
                slope_at_zero,
            } => {
                let span = at_zero - at_infinity;
                if span.abs() < 1e-12 {
                    at_infinity
                } else {
                    span * (-slope_at_zero * error_norm / span).exp() + at_infinity
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlParams {
    pub gain: GainSchedule,
    /// Bound on the linear twist norm (m/s).
    pub max_linear: f64,
    /// Bound on the angular twist norm (rad/s).
    pub max_angular: f64,
    /// Per-joint speed bound (rad/s).
    pub joint_velocity_limits: JointConfig,
    pub damping: f64,
    /// Speed (rad/s) of the null-space motion pushing a joint off a limit
    /// it touches; 0 disables it.
    pub limit_avoidance: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            gain: GainSchedule::Constant(0.5),
            max_linear: 0.15,
            max_angular: 0.5,
            joint_velocity_limits: JointConfig::repeat(1.0),
            damping: DEFAULT_DAMPING,
            limit_avoidance: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    /// Twist the joint command realizes, after all saturation.
    pub twist: Twist,
    pub joint_velocities: JointConfig,
    pub saturated: bool,
    pub near_singular: bool,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < SINC_SERIES {
        1.0 - x * x / 6.0 + x.powi(4) / 120.0
    } else {
        x.sin() / x
    }
}

/// `L_θu = I − (θ/2)[u]ₓ + (1 − sinc θ / sinc²(θ/2))[u]ₓ²` for `θu = theta_u`.
pub fn rotation_interaction(theta_u: &Vector3<f64>) -> Matrix3<f64> {
    let theta = theta_u.norm();
    // written in terms of [θu]ₓ so that θ → 0 needs no axis
    let k = skew(theta_u);
    let h = theta / 2.0;
    let c = if theta < SINC_SERIES {
        // (1 − sinc θ / sinc² (θ/2)) / θ² → 1/12
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        (1.0 - sinc(theta) / (sinc(h) * sinc(h))) / (theta * theta)
    };
    Matrix3::identity() - k * 0.5 + k * k * c
}

/// `blockdiag(R_eᵀ, L_θu(log R_e))` for the error rotation `R_e`.
pub fn interaction_matrix(error_rotation: &Rotation) -> Matrix6<f64> {
    let mut l = Matrix6::zeros();
    l.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&error_rotation.matrix().transpose());
    l.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&rotation_interaction(&log_so3(error_rotation)));
    l
}

/// `s = (R_eᵀ·t, log R_e)`.
pub fn feature_vector(error: &RelativeTarget) -> Vector6<f64> {
    let t = error.rotation.inverse() * error.translation;
    let w = log_so3(&error.rotation);
    Vector6::new(t.x, t.y, t.z, w.x, w.y, w.z)
}

/// Scale `twist` uniformly into the limits. Returns whether it was scaled.
pub fn clamp_twist(twist: &Twist, max_linear: f64, max_angular: f64) -> (Twist, bool) {
    let scale = [(twist.linear.norm(), max_linear), (twist.angular.norm(), max_angular)]
        .iter()
        .filter(|(n, _)| *n > 0.0)
        .map(|(n, limit)| limit / n)
        .fold(1.0f64, f64::min);
    if scale < 1.0 {
        (twist.scale(scale), true)
    } else {
        (*twist, false)
    }
}

/// `λ·L⁺·s` in the servoed frame, limited to the twist bounds.
pub fn camera_twist(error: &RelativeTarget, params: &ControlParams) -> (Twist, bool) {
    let s = feature_vector(error);
    let l = interaction_matrix(&error.rotation);
    let l_pinv = l.pseudo_inverse(1e-12).unwrap_or_else(|_| Matrix6::zeros());
    let raw = Twist::from_vector(&(l_pinv * s * params.gain.gain(s.norm())));
    clamp_twist(&raw, params.max_linear, params.max_angular)
}

/// Geometric Jacobian of `tool` with both rows expressed in tool axes.
pub fn frame_jacobian(chain: &KinematicChain, q: &JointConfig, tool: &Pose) -> nalgebra::SMatrix<f64, 6, 7> {
    let (pose, mut j) = chain.tool_jacobian(q, tool);
    let rt = pose.rotation.inverse().into_inner();
    for c in 0..7 {
        let lin = rt * j.fixed_view::<3, 1>(0, c);
        let ang = rt * j.fixed_view::<3, 1>(3, c);
        j.fixed_view_mut::<3, 1>(0, c).copy_from(&lin);
        j.fixed_view_mut::<3, 1>(3, c).copy_from(&ang);
    }
    j
}

/// Inward joint motion for joints within `LIMIT_BUFFER` of a limit,
/// ramping linearly from 0 at the buffer edge to `gain` at the limit.
pub fn limit_avoidance_motion(chain: &KinematicChain, q: &JointConfig, gain: f64) -> JointConfig {
    let lo = chain.lower_limits();
    let hi = chain.upper_limits();
    JointConfig::from_fn(|i, _| {
        let buffer = LIMIT_BUFFER.min(0.25 * (hi[i] - lo[i]));
        let up = (buffer - (q[i] - lo[i])).max(0.0) / buffer;
        let down = (buffer - (hi[i] - q[i])).max(0.0) / buffer;
        gain * (up - down)
    })
}

/// Joint velocities realizing `twist` at `tool` (given in tool axes), plus
/// limit avoidance projected into the Jacobian's null space, scaled
/// uniformly so every joint respects its speed bound. Joints sitting on a
/// limit are never driven further out; the twist is then realized by the
/// remaining joints as far as they can.
pub fn joint_command(
    chain: &KinematicChain,
    q: &JointConfig,
    tool: &Pose,
    twist: &Twist,
    params: &ControlParams,
) -> Result<ControlCommand, PbvsError> {
    if let Some(joint) = chain.first_limit_violation(q) {
        return Err(PbvsError::JointOutOfLimits { joint });
    }
    let j = frame_jacobian(chain, q, tool);
    let near_singular = min_singular_value(&j) < SINGULAR_THRESHOLD;
    let lo = chain.lower_limits();
    let hi = chain.upper_limits();
    let avoid = if params.limit_avoidance > 0.0 {
        limit_avoidance_motion(chain, q, params.limit_avoidance)
    } else {
        JointConfig::zeros()
    };
    // joints resting on a limit and driven outward are locked and the rest re-solved
    let mut locked = [false; 7];
    let mut v_q: SVector<f64, 7>;
    loop {
        let mut j_free = j;
        let mut secondary = avoid;
        for c in (0..7).filter(|&c| locked[c]) {
            j_free.column_mut(c).fill(0.0);
            secondary[c] = 0.0;
        }
        let j_pinv = pseudo_inverse(&j_free, params.damping);
        v_q = j_pinv * twist.to_vector() + (nalgebra::SMatrix::<f64, 7, 7>::identity() - j_pinv * j_free) * secondary;
        let mut changed = false;
        for c in 0..7 {
            let pushing_out =
                (q[c] <= lo[c] + LIMIT_MARGIN && v_q[c] < 0.0) || (q[c] >= hi[c] - LIMIT_MARGIN && v_q[c] > 0.0);
            if pushing_out && !locked[c] {
                locked[c] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let scale = v_q
        .iter()
        .zip(params.joint_velocity_limits.iter())
        .filter(|(v, _)| v.abs() > 0.0)
        .map(|(v, limit)| limit / v.abs())
        .fold(1.0f64, f64::min);
    let saturated = scale < 1.0;
    let scale = scale.min(1.0);
    let realized = if locked.iter().any(|&l| l) {
        Twist::from_vector(&(j * v_q))
    } else {
        *twist
    };
    Ok(ControlCommand {
        twist: realized.scale(scale),
        joint_velocities: v_q * scale,
        saturated,
        near_singular,
    })
}

/// Error to joint velocities in one call.
pub fn control(
    chain: &KinematicChain,
    q: &JointConfig,
    tool: &Pose,
    error: &RelativeTarget,
    params: &ControlParams,
) -> Result<ControlCommand, PbvsError> {
    let (twist, clamped) = camera_twist(error, params);
    let mut command = joint_command(chain, q, tool, &twist, params)?;
    command.saturated |= clamped;
    Ok(command)
}
