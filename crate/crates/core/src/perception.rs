//! Measurement pipeline: face rotation from the weak-projection matrix,
//! nostril position from depth, swab pose from keypoint rays, and the
//! relative targets servoed in stages 2 and 3.
//!
//! Face frame convention: x right, y down, z into the head. The nostril
//! normal `n` is the swab approach direction, the face's inward axis tilted
//! upward by the desired pitch: `n = R·(0, −sin θ, cos θ)`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::manifold::{
    exp_so3, minimal_rotation, nearest_rotation, rot_x, rotation_angle, ManifoldError, Pose, Rotation,
};
use crate::scene::{FaceObservation, MorphableFaceModel, SceneError, SwabObservation};

/// Camera distance from the nostril at the end of stage 2 (m).
pub const CAMERA_STANDOFF: f64 = 0.30;
/// Upward tilt of the approach direction relative to the face (rad).
pub const DESIRED_PITCH: f64 = 0.2;
/// Largest angle between a keypoint ray and its schematic point.
pub const MAX_RAY_ANGLE: f64 = std::f64::consts::FRAC_PI_4;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PerceptionError {
    #[error("projection matrix is degenerate (smallest singular value {sigma_min:e})")]
    DegenerateProjection { sigma_min: f64 },
    #[error("face center is not in front of the camera")]
    BehindCamera,
    #[error("no depth sample at the nostril pixel")]
    MissingDepth,
    #[error("intrinsic matrix is singular")]
    SingularIntrinsics,
    #[error("keypoint ray {keypoint} is {angle} rad from its schematic point")]
    IllConditionedRay { keypoint: usize, angle: f64 },
}

/// `ū + Wβ` as a V×3 matrix.
pub fn morphable_vertices(model: &MorphableFaceModel, beta: &DVector<f64>) -> Result<DMatrix<f64>, SceneError> {
    model.vertices(beta)
}

/// Face rotation from the left 3×3 block of `P`: the closest rotation, then
/// the counter rotation `exp([φx, φy, 0])ᵀ` for the face center `center`.
pub fn recover_rotation(p: &nalgebra::Matrix3x4<f64>, center: &Vector3<f64>) -> Result<Rotation, PerceptionError> {
    if !(center.z > 0.0) {
        return Err(PerceptionError::BehindCamera);
    }
    let block: Matrix3<f64> = p.fixed_view::<3, 3>(0, 0).into_owned();
    let r_tilde = nearest_rotation(&block).map_err(|e| match e {
        ManifoldError::DegenerateMatrix { sigma_min } => PerceptionError::DegenerateProjection { sigma_min },
        _ => unreachable!("nearest_rotation only fails on degenerate input"),
    })?;
    let phi = Vector3::new(center.y.atan2(center.z), center.x.atan2(center.z), 0.0);
    Ok(exp_so3(&phi).inverse() * r_tilde)
}

/// `K⁻¹[c, r, 1]ᵀ·d`.
pub fn backproject_nostril(
    k: &Matrix3<f64>,
    pixel: &Vector2<f64>,
    depth: Option<f64>,
) -> Result<Vector3<f64>, PerceptionError> {
    let depth = depth.filter(|d| *d > 0.0).ok_or(PerceptionError::MissingDepth)?;
    let k_inv = k.try_inverse().ok_or(PerceptionError::SingularIntrinsics)?;
    Ok(k_inv * Vector3::new(pixel.x, pixel.y, 1.0) * depth)
}

/// Why a decode should not be fed to the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QualityFlags {
    pub dropped: bool,
    pub missing_depth: bool,
    pub degenerate: bool,
    pub outlier: bool,
}

impl QualityFlags {
    pub fn ok(&self) -> bool {
        !(self.dropped || self.missing_depth || self.degenerate || self.outlier)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedFacePose {
    /// Face rotation in the camera frame.
    pub rotation: Rotation,
    /// Nostril position in the camera frame (m).
    pub nostril: Vector3<f64>,
    pub flags: QualityFlags,
}

impl DecodedFacePose {
    pub fn valid(&self) -> bool {
        self.flags.ok()
    }
}

/// Rejects decodes whose rotation jumps more than `threshold` from the last
/// accepted one. After `reset_after` consecutive rejections the reference is
/// dropped and the next decode is accepted.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierGate {
    pub threshold: f64,
    pub reset_after: usize,
    last: Option<Rotation>,
    rejected: usize,
}

impl Default for OutlierGate {
    fn default() -> Self {
        Self::new(0.5, 15)
    }
}

impl OutlierGate {
    pub fn new(threshold: f64, reset_after: usize) -> Self {
        Self {
            threshold,
            reset_after,
            last: None,
            rejected: 0,
        }
    }

    pub fn admit(&mut self, rotation: &Rotation) -> bool {
        if let Some(last) = &self.last {
            if rotation_angle(&(last.inverse() * rotation)) > self.threshold {
                self.rejected += 1;
                if self.rejected >= self.reset_after {
                    self.last = None;
                    self.rejected = 0;
                }
                return false;
            }
        }
        self.last = Some(*rotation);
        self.rejected = 0;
        true
    }
}

/// Decode one face observation. Failures are reported through the flags;
/// the gate only sees frames that decoded cleanly.
pub fn decode_face(obs: &FaceObservation, k: &Matrix3<f64>, gate: &mut OutlierGate) -> DecodedFacePose {
    let mut flags = QualityFlags {
        dropped: !obs.valid,
        ..QualityFlags::default()
    };
    let rotation = match recover_rotation(&obs.p_measured, &obs.face_center) {
        Ok(r) => r,
        Err(_) => {
            flags.degenerate = true;
            Rotation::identity()
        }
    };
    let nostril = match backproject_nostril(k, &obs.nostril_pixel, obs.depth) {
        Ok(p) => p,
        Err(_) => {
            flags.missing_depth = true;
            Vector3::zeros()
        }
    };
    if flags.ok() && !gate.admit(&rotation) {
        flags.outlier = true;
    }
    DecodedFacePose {
        rotation,
        nostril,
        flags,
    }
}

/// Swab keypoints in the camera frame and the shaft direction (tip minus shaft).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwabPose {
    pub tip: Vector3<f64>,
    pub shaft: Vector3<f64>,
    pub direction: Vector3<f64>,
}

/// Point on the back-projected ray of `pixel` closest to `schematic`.
fn ray_point(
    k_inv: &Matrix3<f64>,
    pixel: &Vector2<f64>,
    schematic: &Vector3<f64>,
    keypoint: usize,
) -> Result<Vector3<f64>, PerceptionError> {
    let ray = k_inv * Vector3::new(pixel.x, pixel.y, 1.0);
    let cos = ray.dot(schematic) / (ray.norm() * schematic.norm());
    let angle = cos.clamp(-1.0, 1.0).acos();
    if !(angle < MAX_RAY_ANGLE) {
        return Err(PerceptionError::IllConditionedRay { keypoint, angle });
    }
    Ok(ray * (ray.dot(schematic) / ray.dot(&ray)))
}

/// Swab pose from keypoint pixels: each keypoint is the point of its ray
/// nearest to the schematic estimate (closed-form 1-D least squares).
pub fn fit_swab(obs: &SwabObservation, k: &Matrix3<f64>) -> Result<SwabPose, PerceptionError> {
    let k_inv = k.try_inverse().ok_or(PerceptionError::SingularIntrinsics)?;
    let tip = ray_point(&k_inv, &obs.tip_pixel, &obs.tip_schematic, 0)?;
    let shaft = ray_point(&k_inv, &obs.shaft_pixel, &obs.shaft_schematic, 1)?;
    let axis = tip - shaft;
    if axis.norm() < 1e-9 {
        return Err(PerceptionError::IllConditionedRay {
            keypoint: 1,
            angle: 0.0,
        });
    }
    Ok(SwabPose {
        tip,
        shaft,
        direction: axis.normalize(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetStage {
    Approach,
    FinalAlign,
}

impl TargetStage {
    /// Stage number in the motion sequence (sentry is 1).
    pub fn number(self) -> u8 {
        match self {
            TargetStage::Approach => 2,
            TargetStage::FinalAlign => 3,
        }
    }
}

/// Pose of the desired servo frame in the current one: the translation
/// takes the current origin to the desired one, the rotation is the desired
/// orientation expressed in current axes. Stage 2 servoes the camera frame,
/// stage 3 the swab tip (camera axes, origin at the tip).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeTarget {
    pub translation: Vector3<f64>,
    pub rotation: Rotation,
    pub stage: TargetStage,
}

impl RelativeTarget {
    pub fn pose(&self) -> Pose {
        Pose::new(self.translation, self.rotation)
    }

    pub fn from_pose(pose: &Pose, stage: TargetStage) -> Self {
        Self {
            translation: pose.position,
            rotation: pose.rotation,
            stage,
        }
    }
}

pub fn nostril_normal(face_rotation: &Rotation, pitch: f64) -> Vector3<f64> {
    face_rotation * Vector3::new(0.0, -pitch.sin(), pitch.cos())
}

/// Stage 2: camera `standoff` metres back from the nostril along `n`,
/// optical axis along `n`, image axes aligned with the face.
pub fn relative_target_stage2(decoded: &DecodedFacePose, standoff: f64, pitch: f64) -> RelativeTarget {
    let n = nostril_normal(&decoded.rotation, pitch);
    RelativeTarget {
        translation: decoded.nostril - n * standoff,
        rotation: decoded.rotation * rot_x(pitch),
        stage: TargetStage::Approach,
    }
}

/// Stage 3: swab tip onto the nostril, shaft along `n` by the minimal rotation.
pub fn relative_target_stage3(
    decoded: &DecodedFacePose,
    swab: &SwabPose,
    pitch: f64,
) -> Result<RelativeTarget, ManifoldError> {
    let n = nostril_normal(&decoded.rotation, pitch);
    Ok(RelativeTarget {
        translation: decoded.nostril - swab.tip,
        rotation: minimal_rotation(&swab.direction, &n)?,
        stage: TargetStage::FinalAlign,
    })
}
