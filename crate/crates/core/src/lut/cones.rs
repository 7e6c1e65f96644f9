use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::manifold::{rot_x, rot_y, rot_z, Pose, Rotation};

/// Grid of candidate face positions around the robot (cylindrical sector).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeStartSpec {
    pub phi_min: f64,
    pub phi_max: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Approach pitch shared by every cell.
    pub theta_x: f64,
    /// Cell counts along (φ, r, z).
    pub resolution: [usize; 3],
}

impl Default for ConeStartSpec {
    fn default() -> Self {
        Self {
            phi_min: -PI / 4.0,
            phi_max: PI / 4.0,
            r_min: 0.48,
            r_max: 0.68,
            z_min: 1.0,
            z_max: 1.85,
            theta_x: 0.2,
            resolution: [9, 3, 9],
        }
    }
}

/// Cone of follow-on targets used to grade a start configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeEndSpec {
    pub d: f64,
    pub phi_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    /// Sample counts along (φ, ζ, θ_x, θ_y).
    pub samples: [usize; 4],
}

impl Default for ConeEndSpec {
    fn default() -> Self {
        Self {
            d: 0.35,
            phi_max: 15f64.to_radians(),
            theta_min: (-10f64).to_radians(),
            theta_max: 10f64.to_radians(),
            samples: [3, 8, 3, 3],
        }
    }
}

/// Tool orientation looking horizontally along the base +x axis with image
/// x to the right and image y down.
pub fn neutral_orientation() -> Rotation {
    Rotation::from_matrix_unchecked(Matrix3::new(
        0.0, 0.0, 1.0, //
        -1.0, 0.0, 0.0, //
        0.0, -1.0, 0.0,
    ))
}

fn centers(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / n as f64;
    (0..n).map(move |i| lo + (i as f64 + 0.5) * step)
}

fn inclusive(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    })
}

impl ConeStartSpec {
    pub fn validate(&self) -> Result<(), String> {
        let finite = [
            self.phi_min,
            self.phi_max,
            self.r_min,
            self.r_max,
            self.z_min,
            self.z_max,
            self.theta_x,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err("start cone bounds must be finite".into());
        }
        if !(self.phi_min < self.phi_max && self.r_min < self.r_max && self.z_min < self.z_max) {
            return Err("start cone bounds must satisfy min < max".into());
        }
        if self.r_min <= 0.0 || self.phi_max - self.phi_min >= 2.0 * PI {
            return Err("start cone radius must be positive and the sector under a full turn".into());
        }
        if self.resolution.contains(&0) {
            return Err("start cone resolution must be at least 1 per axis".into());
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn phi_centers(&self) -> Vec<f64> {
        centers(self.phi_min, self.phi_max, self.resolution[0]).collect()
    }

    pub fn r_centers(&self) -> Vec<f64> {
        centers(self.r_min, self.r_max, self.resolution[1]).collect()
    }

    pub fn z_centers(&self) -> Vec<f64> {
        centers(self.z_min, self.z_max, self.resolution[2]).collect()
    }

    /// Flat index, φ varying slowest and z fastest.
    pub fn cell_index(&self, i_phi: usize, i_r: usize, i_z: usize) -> usize {
        (i_phi * self.resolution[1] + i_r) * self.resolution[2] + i_z
    }

    pub fn cell_coords(&self, index: usize) -> (usize, usize, usize) {
        let [_, nr, nz] = self.resolution;
        (index / (nr * nz), (index / nz) % nr, index % nz)
    }

    /// Pose at a given (φ, r, z): yaw φ, pitch θ_x, looking radially outward.
    pub fn pose_at(&self, phi: f64, r: f64, z: f64) -> Pose {
        Pose::new(
            Vector3::new(r * phi.cos(), r * phi.sin(), z),
            rot_z(phi) * neutral_orientation() * rot_x(self.theta_x),
        )
    }

    pub fn cell_pose(&self, index: usize) -> Pose {
        let (i, j, k) = self.cell_coords(index);
        let step = |lo: f64, hi: f64, n: usize, i: usize| lo + (i as f64 + 0.5) * (hi - lo) / n as f64;
        self.pose_at(
            step(self.phi_min, self.phi_max, self.resolution[0], i),
            step(self.r_min, self.r_max, self.resolution[1], j),
            step(self.z_min, self.z_max, self.resolution[2], k),
        )
    }

    /// Nearest cell center to `p` by Euclidean distance, clamped to the grid.
    ///
    /// For any fixed radius the angularly nearest φ row is closest, and for a
    /// fixed φ row the best radius is the one nearest `ρ·cos Δφ`, so three
    /// independent roundings give the exact minimizer.
    pub fn nearest_cell(&self, p: &Vector3<f64>) -> usize {
        let [nphi, nr, nz] = self.resolution;
        let round = |value: f64, lo: f64, hi: f64, n: usize| -> usize {
            let step = (hi - lo) / n as f64;
            let x = ((value - lo) / step - 0.5).round();
            if x.is_nan() || x < 0.0 {
                0
            } else {
                (x as usize).min(n - 1)
            }
        };
        let rho = (p.x * p.x + p.y * p.y).sqrt();
        let mid = 0.5 * (self.phi_min + self.phi_max);
        let phi = mid + wrap_angle(p.y.atan2(p.x) - mid);
        let i = round(phi, self.phi_min, self.phi_max, nphi);
        let phi_i = self.phi_min + (i as f64 + 0.5) * (self.phi_max - self.phi_min) / nphi as f64;
        let j = round(rho * (phi - phi_i).cos(), self.r_min, self.r_max, nr);
        let k = round(p.z, self.z_min, self.z_max, nz);
        self.cell_index(i, j, k)
    }

    /// Whether `p` lies inside the sampled sector (boundaries inclusive).
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let rho = (p.x * p.x + p.y * p.y).sqrt();
        let mid = 0.5 * (self.phi_min + self.phi_max);
        let phi = mid + wrap_angle(p.y.atan2(p.x) - mid);
        phi >= self.phi_min
            && phi <= self.phi_max
            && rho >= self.r_min
            && rho <= self.r_max
            && p.z >= self.z_min
            && p.z <= self.z_max
    }
}

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// One pose per grid cell at the cell centers, in flat-index order.
pub fn sample_cone_start(spec: &ConeStartSpec) -> Vec<Pose> {
    (0..spec.cell_count()).map(|i| spec.cell_pose(i)).collect()
}

impl ConeEndSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err("end cone distance must be positive".into());
        }
        if !(self.phi_max >= 0.0 && self.phi_max < PI / 2.0) {
            return Err("end cone half-angle must lie in [0, π/2)".into());
        }
        if !(self.theta_min < self.theta_max) {
            return Err("end cone orientation bounds must satisfy min < max".into());
        }
        if self.samples.contains(&0) {
            return Err("end cone sample counts must be at least 1".into());
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        self.samples.iter().product()
    }

    /// Target offsets relative to the start frame. The cone opens along the
    /// start frame's forward (z) axis: half-angle φ, azimuth ζ about the axis.
    pub fn local_targets(&self) -> Vec<Pose> {
        let [nphi, nzeta, ntx, nty] = self.samples;
        let mut out = Vec::with_capacity(self.sample_count());
        for phi in inclusive(0.0, self.phi_max, nphi) {
            let phi = if nphi == 1 { 0.0 } else { phi };
            for k in 0..nzeta {
                let zeta = 2.0 * PI * k as f64 / nzeta as f64;
                let offset = Vector3::new(
                    self.d * phi.sin() * zeta.cos(),
                    -self.d * phi.sin() * zeta.sin(),
                    self.d * phi.cos(),
                );
                for tx in inclusive(self.theta_min, self.theta_max, ntx) {
                    for ty in inclusive(self.theta_min, self.theta_max, nty) {
                        out.push(Pose::new(offset, rot_x(tx) * rot_y(ty)));
                    }
                }
            }
        }
        out
    }
}

/// C_end expressed in the world: each local offset composed onto `start`.
pub fn sample_cone_end(spec: &ConeEndSpec, start: &Pose) -> Vec<Pose> {
    spec.local_targets().iter().map(|t| start.compose(t)).collect()
}
