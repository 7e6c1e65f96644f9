use nalgebra::{Matrix3, Vector2, Vector3};

use super::SceneError;

/// Pinhole camera with a depth channel. Camera frame: x right, y down, z
/// along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub k: Matrix3<f64>,
    pub width: u32,
    pub height: u32,
    /// Depth acquisition range (m); samples outside it are missing.
    pub near: f64,
    pub far: f64,
}

impl CameraModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        near: f64,
        far: f64,
    ) -> Result<Self, SceneError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(SceneError::InvalidCamera("focal lengths must be positive".into()));
        }
        if !(near > 0.0 && near < far) {
            return Err(SceneError::InvalidCamera(format!(
                "depth range [{near}, {far}] is empty"
            )));
        }
        if width == 0 || height == 0 {
            return Err(SceneError::InvalidCamera("resolution must be nonzero".into()));
        }
        Ok(Self {
            k: Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0),
            width,
            height,
            near,
            far,
        })
    }

    pub fn focal(&self) -> f64 {
        0.5 * (self.k[(0, 0)] + self.k[(1, 1)])
    }

    /// Pixel of a camera-frame point; `None` behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        if p.z <= 0.0 {
            return None;
        }
        let h = self.k * p;
        Some(Vector2::new(h.x / h.z, h.y / h.z))
    }

    pub fn in_image(&self, px: &Vector2<f64>) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x < self.width as f64 && px.y < self.height as f64
    }

    /// Projection that must land inside the image.
    pub fn project_visible(&self, p: &Vector3<f64>) -> Result<Vector2<f64>, SceneError> {
        self.project(p)
            .filter(|px| self.in_image(px))
            .ok_or(SceneError::OutOfFrustum { point: *p })
    }

    /// Depth sample for a surface at camera-frame z, honoring the range.
    pub fn depth_sample(&self, z: f64) -> Option<f64> {
        (z >= self.near && z <= self.far).then_some(z)
    }
}

impl Default for CameraModel {
    fn default() -> Self {
        Self::new(600.0, 600.0, 320.0, 240.0, 640, 480, 0.11, 3.0).expect("valid default camera")
    }
}
