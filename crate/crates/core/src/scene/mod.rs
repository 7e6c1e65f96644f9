//! Synthetic ground truth standing in for the vision stack: a linear
//! morphable face, head placement and sway, a pinhole camera with depth, and
//! noisy emulations of the face regressor and swab keypoints.

mod camera;
mod config;
mod face;

pub use camera::CameraModel;
pub use config::{CameraConfig, NoiseLevel, PlacementConfig, SceneConfig, StageNoise, SwabPerturbation, SwayConfig};
pub use face::{
    step_head_motion, synthesize_face, GroundTruthFace, HeadSway, Landmarks, MorphableFaceModel, Nostril, BASIS_SIZE,
    BASIS_VERTEX_BOUND,
};

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::lut::neutral_orientation;
use crate::manifold::{exp_so3, rot_x, rot_y, rot_z, Pose, Rotation};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("point {point:?} is outside the camera frustum")]
    OutOfFrustum { point: Vector3<f64> },
    #[error("expected {expected} shape coefficients, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vertex {index} out of range for {count} vertices")]
    VertexIndex { index: usize, count: usize },
    #[error("{}", match line { Some(l) => format!("line {l}: {message}"), None => message.clone() })]
    InvalidConfig { line: Option<usize>, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One frame of the emulated face regressor plus depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceObservation {
    /// Weak-projection matrix `[sR* | s·t]`; `R*` carries the off-axis
    /// viewing artifact and regression noise.
    pub p_measured: Matrix3x4<f64>,
    pub nostril_pixel: Vector2<f64>,
    /// Depth (m) at the nostril pixel, `None` outside the sensor range.
    pub depth: Option<f64>,
    /// Camera-frame estimate of the face center (m).
    pub face_center: Vector3<f64>,
    pub valid: bool,
    pub timestamp: f64,
}

/// Swab `(tip, shaft)` keypoints.
pub type Keypoints = (Vector3<f64>, Vector3<f64>);

/// Swab keypoint pixels and the schematic (nominal) 3D keypoints, camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwabObservation {
    pub tip_pixel: Vector2<f64>,
    pub shaft_pixel: Vector2<f64>,
    pub tip_schematic: Vector3<f64>,
    pub shaft_schematic: Vector3<f64>,
}

/// Rotation the weak-projection regressor reports for a face seen off the
/// optical axis: the true rotation pre-multiplied by `exp([φx, φy, 0])`,
/// with `φx = atan2(p_y, p_z)`, `φy = atan2(p_x, p_z)`.
pub fn off_axis_rotation(center: &Vector3<f64>) -> Rotation {
    exp_so3(&Vector3::new(center.y.atan2(center.z), center.x.atan2(center.z), 0.0))
}

fn gaussian3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

/// Emulate one observation of `face` from a camera at `camera_pose` (world).
#[allow(clippy::too_many_arguments)]
pub fn project_face(
    model: &MorphableFaceModel,
    face: &GroundTruthFace,
    nostril: Nostril,
    camera: &CameraModel,
    camera_pose: &Pose,
    noise: &NoiseLevel,
    dropout: f64,
    t: f64,
    rng: &mut ChaCha8Rng,
) -> Result<FaceObservation, SceneError> {
    let face_in_camera = camera_pose.inverse().compose(&face.pose());
    let center = face_in_camera.transform_point(&model.center(&face.beta)?);
    let target = face_in_camera.transform_point(&model.nostril(nostril, &face.beta)?);
    camera.project_visible(&center)?;
    let pixel = camera.project_visible(&target)?;

    let f = camera.focal();
    let scale = f / center.z;
    let e = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)) * (noise.rotation * 2f64.sqrt());
    let apparent = (off_axis_rotation(&center) * face_in_camera.rotation).into_inner() + e;
    let mut p = Matrix3x4::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&(apparent * scale));
    p.fixed_view_mut::<3, 1>(0, 3).copy_from(&(center * scale));

    let pixel_sigma = f * noise.position / target.z;
    let pixel_noise = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample(StandardNormal));
    let depth_noise: f64 = rng.sample(StandardNormal);
    let center_noise = gaussian3(rng);
    let keep: f64 = rng.random();
    Ok(FaceObservation {
        p_measured: p,
        nostril_pixel: pixel + pixel_noise * pixel_sigma,
        depth: camera.depth_sample(target.z).map(|d| d + depth_noise * noise.position),
        face_center: center + center_noise * noise.position,
        valid: keep >= dropout,
        timestamp: t,
    })
}

fn random_perpendicular(d: &Vector3<f64>, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let g = gaussian3(rng);
        let perp = g - d * d.dot(&g);
        if perp.norm() > 1e-3 {
            return perp.normalize();
        }
    }
}

/// Mounted swab keypoints `(tip, shaft)` given the nominal ones: the
/// midpoint moves perpendicular to the shaft by `|N(μ, σ)|` and the shaft
/// tilts by `|N(μ, σ)|` degrees towards a random perpendicular direction.
pub fn perturb_swab(
    tip: &Vector3<f64>,
    shaft: &Vector3<f64>,
    params: &SwabPerturbation,
    rng: &mut ChaCha8Rng,
) -> (Vector3<f64>, Vector3<f64>) {
    let mid = (tip + shaft) * 0.5;
    let half = (tip - shaft).norm() * 0.5;
    let d = (tip - shaft).normalize();
    let shift_dir = random_perpendicular(&d, rng);
    let tilt_dir = random_perpendicular(&d, rng);
    let shift = (params.position_mean + params.position_std * rng.sample::<f64, _>(StandardNormal)).abs();
    let tilt = (params.angle_mean_deg + params.angle_std_deg * rng.sample::<f64, _>(StandardNormal))
        .abs()
        .to_radians();
    let mid = mid + shift_dir * shift;
    let dir = d * tilt.cos() + tilt_dir * tilt.sin();
    (mid + dir * half, mid - dir * half)
}

/// Pixels of the mounted keypoints paired with the schematic estimates.
pub fn observe_swab(
    camera: &CameraModel,
    nominal: (Vector3<f64>, Vector3<f64>),
    mounted: (Vector3<f64>, Vector3<f64>),
) -> Result<SwabObservation, SceneError> {
    Ok(SwabObservation {
        tip_pixel: camera.project_visible(&mounted.0)?,
        shaft_pixel: camera.project_visible(&mounted.1)?,
        tip_schematic: nominal.0,
        shaft_schematic: nominal.1,
    })
}

/// Where the face stands: target nostril position (world) and head turn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacePlacement {
    pub nostril_world: Vector3<f64>,
    pub yaw: f64,
    pub pitch: f64,
    pub nostril: Nostril,
}

/// Orientation of a face looking back at a robot at the world origin from
/// bearing `phi`, then turned by `yaw` (about the face's down axis) and
/// `pitch` (about its lateral axis).
pub fn facing_rotation(phi: f64, yaw: f64, pitch: f64) -> Rotation {
    rot_z(phi) * neutral_orientation() * rot_y(yaw) * rot_x(pitch)
}

fn clipped_gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    let g: f64 = rng.sample(StandardNormal);
    std * g.clamp(-3.0, 3.0)
}

pub fn sample_placement(cfg: &PlacementConfig, rng: &mut ChaCha8Rng) -> FacePlacement {
    let mut uniform = |[lo, hi]: [f64; 2]| lo + (hi - lo) * rng.random::<f64>();
    let (phi, r, z) = (uniform(cfg.phi), uniform(cfg.r), uniform(cfg.z));
    let nostril = if rng.random::<bool>() {
        Nostril::Right
    } else {
        Nostril::Left
    };
    FacePlacement {
        nostril_world: Vector3::new(r * phi.cos(), r * phi.sin(), z),
        yaw: clipped_gaussian(rng, cfg.yaw_std),
        pitch: clipped_gaussian(rng, cfg.pitch_std),
        nostril,
    }
}

/// Rest pose that puts the chosen nostril at the placement point.
pub fn placement_pose(
    model: &MorphableFaceModel,
    face: &GroundTruthFace,
    placement: &FacePlacement,
) -> Result<Pose, SceneError> {
    let p = placement.nostril_world;
    let rotation = facing_rotation(p.y.atan2(p.x), placement.yaw, placement.pitch);
    let local = model.nostril(placement.nostril, &face.beta)?;
    Ok(Pose::new(p - rotation * local, rotation))
}

/// Random sway phases with the configured amplitudes.
pub fn sample_sway(cfg: &SwayConfig, rng: &mut ChaCha8Rng) -> HeadSway {
    let mut phases = [0.0; 6];
    for p in phases.iter_mut() {
        *p = 2.0 * PI * rng.random::<f64>();
    }
    HeadSway {
        translation_amplitude: Vector3::from(cfg.translation_amplitude),
        translation_frequency: cfg.translation_frequency,
        rotation_amplitude: Vector3::from(cfg.rotation_amplitude),
        rotation_frequency: cfg.rotation_frequency,
        phases,
    }
}

/// A placed face with its camera and noise stream, stepped by the caller.
#[derive(Debug, Clone)]
pub struct Scene {
    pub camera: CameraModel,
    pub model: MorphableFaceModel,
    pub face: GroundTruthFace,
    pub nostril: Nostril,
    pub dropout: f64,
    rng: ChaCha8Rng,
}

impl Scene {
    /// Face shape from `face_seed`; placement, sway and observation noise
    /// from `noise_seed`.
    pub fn new(
        config: &SceneConfig,
        face_seed: u64,
        noise_seed: u64,
        placement: &FacePlacement,
    ) -> Result<Self, SceneError> {
        let (model, mut face) = synthesize_face(face_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        face.rest_pose = placement_pose(&model, &face, placement)?;
        face.sway = sample_sway(&config.sway, &mut rng);
        Ok(Self {
            camera: config.camera_model()?,
            model,
            face,
            nostril: placement.nostril,
            dropout: config.dropout,
            rng,
        })
    }

    pub fn advance(&mut self, dt: f64) {
        self.face = step_head_motion(&self.face, dt);
    }

    pub fn time(&self) -> f64 {
        self.face.time
    }

    pub fn nostril_world(&self) -> Vector3<f64> {
        let local = self
            .model
            .nostril(self.nostril, &self.face.beta)
            .expect("model-owned index");
        self.face.to_world(&local)
    }

    pub fn face_pose(&self) -> Pose {
        self.face.pose()
    }

    pub fn observe_face(&mut self, camera_pose: &Pose, noise: &NoiseLevel) -> Result<FaceObservation, SceneError> {
        project_face(
            &self.model,
            &self.face,
            self.nostril,
            &self.camera,
            camera_pose,
            noise,
            self.dropout,
            self.face.time,
            &mut self.rng,
        )
    }

    /// Draw the mounting error for the nominal swab and observe it.
    pub fn mount_swab(
        &mut self,
        nominal: (Vector3<f64>, Vector3<f64>),
        params: &SwabPerturbation,
    ) -> Result<(Keypoints, SwabObservation), SceneError> {
        let mounted = perturb_swab(&nominal.0, &nominal.1, params, &mut self.rng);
        Ok((mounted, observe_swab(&self.camera, nominal, mounted)?))
    }
}

/// CSV dump of an observation stream.
pub fn write_observations_csv<W: Write>(observations: &[FaceObservation], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "valid".into(), "c".into(), "r".into(), "depth".into()];
    header.extend(["cx", "cy", "cz"].map(String::from));
    header.extend((0..12).map(|i| format!("p{}{}", i / 4, i % 4)));
    w.write_record(&header)?;
    for o in observations {
        let mut row = vec![
            format!("{:.6}", o.timestamp),
            (o.valid as u8).to_string(),
            format!("{:.6}", o.nostril_pixel.x),
            format!("{:.6}", o.nostril_pixel.y),
            o.depth.map(|d| format!("{d:.9}")).unwrap_or_default(),
        ];
        row.extend(o.face_center.iter().map(|v| format!("{v:.9}")));
        for i in 0..3 {
            for j in 0..4 {
                row.push(format!("{:.9}", o.p_measured[(i, j)]));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
