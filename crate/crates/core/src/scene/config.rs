use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CameraModel, SceneError};
use crate::kinematics::toml_error;

const PAPER_SCENE: &str = include_str!("../../data/scene_paper.toml");

/// Per-frame Gaussian measurement noise, as 1σ per axis of the decoded
/// nostril position (m) and face rotation (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseLevel {
    pub position: f64,
    pub rotation: f64,
}

impl NoiseLevel {
    pub const ZERO: NoiseLevel = NoiseLevel {
        position: 0.0,
        rotation: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageNoise {
    pub approach: NoiseLevel,
    pub final_align: NoiseLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
}

/// Swab mounting error: the keypoint midpoint is offset perpendicular to the
/// shaft and the shaft direction is tilted, each by a Gaussian magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwabPerturbation {
    pub position_mean: f64,
    pub position_std: f64,
    pub angle_mean_deg: f64,
    pub angle_std_deg: f64,
}

impl SwabPerturbation {
    pub const NONE: SwabPerturbation = SwabPerturbation {
        position_mean: 0.0,
        position_std: 0.0,
        angle_mean_deg: 0.0,
        angle_std_deg: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwayConfig {
    /// Per world axis (m).
    pub translation_amplitude: [f64; 3],
    pub translation_frequency: f64,
    /// Per face axis (rad).
    pub rotation_amplitude: [f64; 3],
    pub rotation_frequency: f64,
}

impl SwayConfig {
    pub const STILL: SwayConfig = SwayConfig {
        translation_amplitude: [0.0; 3],
        translation_frequency: 0.0,
        rotation_amplitude: [0.0; 3],
        rotation_frequency: 0.0,
    };
}

/// Where trial faces stand: the target nostril is drawn uniformly in a
/// cylindrical box around the robot, the head turned by Gaussian yaw and
/// pitch (clipped at 3σ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementConfig {
    pub phi: [f64; 2],
    pub r: [f64; 2],
    pub z: [f64; 2],
    pub yaw_std: f64,
    pub pitch_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Default trial seed when none is given on the command line.
    pub seed: u64,
    /// Observation rate (Hz).
    pub observation_rate: f64,
    /// Per-frame probability that an observation is lost.
    pub dropout: f64,
    pub camera: CameraConfig,
    pub noise: StageNoise,
    pub swab: SwabPerturbation,
    pub sway: SwayConfig,
    pub placement: PlacementConfig,
}

impl SceneConfig {
    /// Noise, dropout and swab error at the levels reported for the physical
    /// system, with slight head sway.
    pub fn paper() -> Self {
        Self::from_toml_str(PAPER_SCENE).expect("shipped scene config is valid")
    }

    /// Same geometry as [`SceneConfig::paper`] with every noise source off.
    pub fn noiseless() -> Self {
        Self {
            dropout: 0.0,
            noise: StageNoise {
                approach: NoiseLevel::ZERO,
                final_align: NoiseLevel::ZERO,
            },
            swab: SwabPerturbation::NONE,
            sway: SwayConfig::STILL,
            ..Self::paper()
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SceneError> {
        let config: SceneConfig = toml::from_str(text).map_err(|e| {
            let (line, message) = toml_error(text, &e);
            SceneError::InvalidConfig {
                line: Some(line),
                message,
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }

    pub fn camera_model(&self) -> Result<CameraModel, SceneError> {
        let c = &self.camera;
        CameraModel::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height, c.near, c.far)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |message: String| Err(SceneError::InvalidConfig { line: None, message });
        self.camera_model()?;
        if !(self.observation_rate > 0.0) {
            return bad(format!(
                "observation_rate must be positive, got {}",
                self.observation_rate
            ));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1], got {}", self.dropout));
        }
        for (name, n) in [
            ("approach", self.noise.approach),
            ("final_align", self.noise.final_align),
        ] {
            if !(n.position >= 0.0 && n.rotation >= 0.0) {
                return bad(format!("noise.{name} levels must be non-negative"));
            }
        }
        let s = &self.swab;
        if [s.position_mean, s.position_std, s.angle_mean_deg, s.angle_std_deg]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return bad("swab perturbation parameters must be non-negative".into());
        }
        let w = &self.sway;
        if w.translation_amplitude
            .iter()
            .chain(&w.rotation_amplitude)
            .any(|v| !(*v >= 0.0))
            || !(w.translation_frequency >= 0.0 && w.rotation_frequency >= 0.0)
        {
            return bad("sway amplitudes and frequencies must be non-negative".into());
        }
        let p = &self.placement;
        for (name, [lo, hi]) in [("phi", p.phi), ("r", p.r), ("z", p.z)] {
            if !(lo <= hi) {
                return bad(format!("placement.{name} range [{lo}, {hi}] is empty"));
            }
        }
        if !(p.r[0] > 0.0) {
            return bad("placement.r must be positive".into());
        }
        if !(p.yaw_std >= 0.0 && p.pitch_std >= 0.0) {
            return bad("placement angle spreads must be non-negative".into());
        }
        Ok(())
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self::paper()
    }
}
