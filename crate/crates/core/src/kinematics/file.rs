use std::path::Path;

use nalgebra::{Unit, Vector3};
use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use super::{Capsule, CollisionGeometry, Joint, JointConfig, KinematicChain, SerialChain};
use crate::manifold::{rot_x, rot_y, rot_z, Pose};

const REFERENCE_CHAIN: &str = include_str!("../../data/reference_chain.toml");

#[derive(Debug, Error)]
pub enum ChainFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

/// An arm together with everything mounted on it.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub chain: KinematicChain,
    pub geometry: CollisionGeometry,
    /// Flange to camera, ᵉM_c.
    pub camera: Pose,
    /// Nominal swab tip in the flange frame.
    pub swab_tip: Vector3<f64>,
    /// Nominal swab shaft keypoint in the flange frame.
    pub swab_shaft: Vector3<f64>,
    pub home: JointConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileModel {
    home: Spanned<[f64; 7]>,
    base: Spanned<FilePose>,
    joint: Spanned<Vec<Spanned<FileJoint>>>,
    flange: Spanned<FilePose>,
    camera: Spanned<FilePose>,
    swab: Spanned<FileSwab>,
    #[serde(default)]
    capsule: Vec<Spanned<FileCapsule>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FilePose {
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileJoint {
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
    axis: [f64; 3],
    limits: [f64; 2],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSwab {
    tip: [f64; 3],
    shaft: [f64; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileCapsule {
    link: usize,
    a: [f64; 3],
    b: [f64; 3],
    radius: f64,
}

/// 1-based line of a byte offset.
pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

pub(crate) fn toml_error(text: &str, err: &toml::de::Error) -> (usize, String) {
    let line = err.span().map(|s| line_of(text, s.start)).unwrap_or(1);
    (line, err.message().trim().to_string())
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

impl FilePose {
    fn to_pose(&self) -> Pose {
        let [r, p, y] = self.rpy;
        Pose::new(Vector3::from(self.xyz), rot_z(y) * rot_y(p) * rot_x(r))
    }
}

impl RobotModel {
    /// The shipped reference arm.
    pub fn reference() -> Self {
        Self::from_toml_str(REFERENCE_CHAIN).expect("shipped reference chain is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ChainFileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ChainFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ChainFileError> {
        let invalid = |offset: usize, message: String| ChainFileError::Invalid {
            line: line_of(text, offset),
            message,
        };
        let file: FileModel = toml::from_str(text).map_err(|e| {
            let (line, message) = toml_error(text, &e);
            ChainFileError::Invalid { line, message }
        })?;

        let joint_list = &file.joint;
        if joint_list.get_ref().len() != 7 {
            return Err(invalid(
                joint_list.span().start,
                format!("expected 7 joints, found {}", joint_list.get_ref().len()),
            ));
        }
        let mut joints = Vec::with_capacity(7);
        for spanned in joint_list.get_ref() {
            let j = spanned.get_ref();
            let at = spanned.span().start;
            if !finite(&j.xyz) || !finite(&j.rpy) || !finite(&j.limits) {
                return Err(invalid(at, "joint parameters must be finite".into()));
            }
            if j.limits[0] >= j.limits[1] {
                return Err(invalid(at, "joint limits must satisfy min < max".into()));
            }
            let axis = Vector3::from(j.axis);
            if axis.norm() < 1e-9 {
                return Err(invalid(at, "joint axis must be nonzero".into()));
            }
            joints.push(Joint {
                origin: FilePose { xyz: j.xyz, rpy: j.rpy }.to_pose(),
                axis: Unit::new_normalize(axis),
                lower: j.limits[0],
                upper: j.limits[1],
            });
        }

        for pose in [&file.base, &file.flange, &file.camera] {
            let p = pose.get_ref();
            if !finite(&p.xyz) || !finite(&p.rpy) {
                return Err(invalid(pose.span().start, "pose values must be finite".into()));
            }
        }
        let swab = file.swab.get_ref();
        if !finite(&swab.tip) || !finite(&swab.shaft) || swab.tip == swab.shaft {
            return Err(invalid(
                file.swab.span().start,
                "swab keypoints must be finite and distinct".into(),
            ));
        }

        let mut capsules = Vec::with_capacity(file.capsule.len());
        for spanned in &file.capsule {
            let c = spanned.get_ref();
            let at = spanned.span().start;
            if !(c.radius > 0.0) || !c.radius.is_finite() {
                return Err(invalid(at, "capsule radius must be positive".into()));
            }
            if c.link > 7 {
                return Err(invalid(at, format!("capsule link {} out of range 0..=7", c.link)));
            }
            if !finite(&c.a) || !finite(&c.b) {
                return Err(invalid(at, "capsule endpoints must be finite".into()));
            }
            capsules.push(Capsule {
                link: c.link,
                a: Vector3::from(c.a),
                b: Vector3::from(c.b),
                radius: c.radius,
            });
        }

        let joints: [Joint; 7] = joints.try_into().expect("length checked");
        let chain = SerialChain {
            base: file.base.get_ref().to_pose(),
            joints,
            flange: file.flange.get_ref().to_pose(),
        };
        let home = JointConfig::from(*file.home.get_ref());
        if !chain.within_limits(&home) {
            return Err(invalid(
                file.home.span().start,
                "home configuration violates joint limits".into(),
            ));
        }
        Ok(Self {
            chain,
            geometry: CollisionGeometry { capsules },
            camera: file.camera.get_ref().to_pose(),
            swab_tip: Vector3::from(swab.tip),
            swab_shaft: Vector3::from(swab.shaft),
            home,
        })
    }

    pub fn camera_pose(&self, q: &JointConfig) -> Pose {
        self.chain.tool_pose(q, &self.camera)
    }

    /// Swab tip in the camera frame.
    pub fn swab_tip_in_camera(&self) -> Vector3<f64> {
        self.camera.inverse().transform_point(&self.swab_tip)
    }

    /// Swab shaft keypoint in the camera frame.
    pub fn swab_shaft_in_camera(&self) -> Vector3<f64> {
        self.camera.inverse().transform_point(&self.swab_shaft)
    }

    /// Frame at the swab tip with the camera's axes, relative to the flange.
    pub fn swab_tip_frame(&self) -> Pose {
        Pose::new(self.swab_tip, self.camera.rotation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_loads() {
        let m = RobotModel::reference();
        assert_eq!(m.geometry.capsules.len(), 8);
        assert!(m.chain.within_limits(&m.home));
    }

    #[test]
    fn syntax_error_reports_line() {
        let bad = REFERENCE_CHAIN.replacen("[flange]", "[flange", 1);
        let expected = REFERENCE_CHAIN.lines().position(|l| l.starts_with("[flange")).unwrap() + 1;
        match RobotModel::from_toml_str(&bad) {
            Err(ChainFileError::Invalid { line, .. }) => assert_eq!(line, expected),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn semantic_error_reports_joint_line() {
        let bad = REFERENCE_CHAIN.replacen("limits = [-1.7628, 1.7628]", "limits = [1.7628, -1.7628]", 1);
        let Err(ChainFileError::Invalid { line, message }) = RobotModel::from_toml_str(&bad) else {
            panic!("expected failure");
        };
        assert!(message.contains("limits"));
        // The second [[joint]] header sits just above the offending entry.
        let header = REFERENCE_CHAIN
            .lines()
            .enumerate()
            .filter(|(_, l)| l.trim() == "[[joint]]")
            .nth(1)
            .unwrap()
            .0
            + 1;
        assert!(line >= header && line <= header + 5, "line {line}, header {header}");
    }

    #[test]
    fn wrong_joint_count_rejected() {
        let idx = REFERENCE_CHAIN.rfind("[[joint]]").unwrap();
        let end = REFERENCE_CHAIN[idx..].find("[flange]").unwrap() + idx;
        let bad = format!("{}{}", &REFERENCE_CHAIN[..idx], &REFERENCE_CHAIN[end..]);
        assert!(matches!(
            RobotModel::from_toml_str(&bad),
            Err(ChainFileError::Invalid { .. })
        ));
    }
}
