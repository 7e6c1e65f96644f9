use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::SceneError;
use crate::manifold::{exp_so3, Pose};

/// Number of shape coefficients.
pub const BASIS_SIZE: usize = 8;

/// Largest per-vertex displacement `max_v ‖W_v‖_F` of the synthetic basis,
/// so `‖β‖ ≤ 1` moves no vertex further than this.
pub const BASIS_VERTEX_BOUND: f64 = 0.02;

const HALF_WIDTH: f64 = 0.075;
const HALF_HEIGHT: f64 = 0.095;

/// Named vertices of the face mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Landmarks {
    pub center: usize,
    pub nose_tip: usize,
    /// (left, right) as seen in the image.
    pub eyes: [usize; 2],
    pub nostrils: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nostril {
    Left,
    Right,
}

impl Nostril {
    pub fn index(self) -> usize {
        match self {
            Nostril::Left => 0,
            Nostril::Right => 1,
        }
    }
}

/// Linear shape model `u = ū + Wβ`.
///
/// Face frame: x to the image right of a face looking at the camera, y down
/// (towards the chin), z into the head. Vertices are stacked `(x, y, z)` per
/// vertex, so row `3v + a` of `W` is axis `a` of vertex `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphableFaceModel {
    pub mean: DVector<f64>,
    pub basis: DMatrix<f64>,
    pub landmarks: Landmarks,
}

impl MorphableFaceModel {
    pub fn vertex_count(&self) -> usize {
        self.mean.len() / 3
    }

    pub fn basis_size(&self) -> usize {
        self.basis.ncols()
    }

    fn check(&self, beta: &DVector<f64>) -> Result<(), SceneError> {
        if beta.len() != self.basis_size() {
            return Err(SceneError::DimensionMismatch {
                expected: self.basis_size(),
                found: beta.len(),
            });
        }
        Ok(())
    }

    /// All vertices as a V×3 matrix.
    pub fn vertices(&self, beta: &DVector<f64>) -> Result<DMatrix<f64>, SceneError> {
        self.check(beta)?;
        let u = &self.mean + &self.basis * beta;
        Ok(DMatrix::from_row_slice(self.vertex_count(), 3, u.as_slice()))
    }

    /// Selected vertices, evaluated from the matching rows of `ū` and `W` only.
    pub fn vertices_subset(&self, indices: &[usize], beta: &DVector<f64>) -> Result<DMatrix<f64>, SceneError> {
        self.check(beta)?;
        let v = self.vertex_count();
        if let Some(&bad) = indices.iter().find(|&&i| i >= v) {
            return Err(SceneError::VertexIndex { index: bad, count: v });
        }
        let rows: Vec<usize> = indices.iter().flat_map(|&i| [3 * i, 3 * i + 1, 3 * i + 2]).collect();
        let u = self.mean.select_rows(&rows) + self.basis.select_rows(&rows) * beta;
        Ok(DMatrix::from_row_slice(indices.len(), 3, u.as_slice()))
    }

    pub fn vertex(&self, index: usize, beta: &DVector<f64>) -> Result<Vector3<f64>, SceneError> {
        let m = self.vertices_subset(&[index], beta)?;
        Ok(Vector3::new(m[(0, 0)], m[(0, 1)], m[(0, 2)]))
    }

    pub fn center(&self, beta: &DVector<f64>) -> Result<Vector3<f64>, SceneError> {
        self.vertex(self.landmarks.center, beta)
    }

    pub fn nostril(&self, which: Nostril, beta: &DVector<f64>) -> Result<Vector3<f64>, SceneError> {
        self.vertex(self.landmarks.nostrils[which.index()], beta)
    }
}

/// Mean face surface depth (m, face z) at face-plane coordinates.
fn surface_depth(x: f64, y: f64) -> f64 {
    let (xn, yn) = (x / HALF_WIDTH, y / HALF_HEIGHT);
    let curvature = 0.045 * (xn * xn + yn * yn);
    let nose = 0.025 * (-(x * x / (0.015 * 0.015) + (y - 0.01) * (y - 0.01) / (0.03 * 0.03))).exp();
    curvature - nose
}

fn mean_vertices() -> (Vec<Vector3<f64>>, Landmarks) {
    let mut verts = Vec::new();
    for iy in 0..11 {
        for ix in 0..9 {
            let x = -0.07 + 0.0175 * ix as f64;
            let y = -0.09 + 0.018 * iy as f64;
            let (xn, yn) = (x / HALF_WIDTH, y / HALF_HEIGHT);
            if xn * xn + yn * yn <= 1.0 {
                verts.push(Vector3::new(x, y, surface_depth(x, y)));
            }
        }
    }
    let mut add = |x: f64, y: f64| {
        verts.push(Vector3::new(x, y, surface_depth(x, y)));
        verts.len() - 1
    };
    let center = add(0.0, 0.0);
    let nose_tip = add(0.0, 0.018);
    let eyes = [add(-0.032, -0.032), add(0.032, -0.032)];
    let nostrils = [add(-0.011, 0.034), add(0.011, 0.034)];
    (
        verts,
        Landmarks {
            center,
            nose_tip,
            eyes,
            nostrils,
        },
    )
}

/// Smooth, orthogonal displacement fields scaled to [`BASIS_VERTEX_BOUND`].
fn synthetic_basis(verts: &[Vector3<f64>], rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = 3 * verts.len();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(BASIS_SIZE);
    while cols.len() < BASIS_SIZE {
        let coeffs: Vec<f64> = (0..18).map(|_| rng.sample(StandardNormal)).collect();
        let mut col = DVector::zeros(n);
        for (v, p) in verts.iter().enumerate() {
            let (x, y) = (p.x / HALF_WIDTH, p.y / HALF_HEIGHT);
            let features = [1.0, x, y, x * y, x * x, y * y];
            for a in 0..3 {
                col[3 * v + a] = features.iter().zip(&coeffs[6 * a..6 * a + 6]).map(|(f, c)| f * c).sum();
            }
        }
        for prev in &cols {
            let proj = prev.dot(&col);
            col -= prev * proj;
        }
        let norm = col.norm();
        if norm > 1e-6 {
            cols.push(col / norm);
        }
    }
    let mut basis = DMatrix::from_columns(&cols);
    let worst = (0..verts.len())
        .map(|v| basis.rows(3 * v, 3).norm())
        .fold(0.0, f64::max);
    basis *= BASIS_VERTEX_BOUND / worst;
    basis
}

/// Periodic head sway: a sinusoidal translation (world frame) and a
/// sinusoidal rotation (face frame) superposed on the rest pose.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeadSway {
    pub translation_amplitude: Vector3<f64>,
    pub translation_frequency: f64,
    pub rotation_amplitude: Vector3<f64>,
    pub rotation_frequency: f64,
    pub phases: [f64; 6],
}

impl HeadSway {
    pub fn is_still(&self) -> bool {
        self.translation_amplitude == Vector3::zeros() && self.rotation_amplitude == Vector3::zeros()
    }

    /// Offset pose at time `t`: translation in the parent frame, rotation
    /// applied in the face frame.
    pub fn offset(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let wt = 2.0 * PI * self.translation_frequency * t;
        let wr = 2.0 * PI * self.rotation_frequency * t;
        let p = &self.phases;
        (
            self.translation_amplitude.component_mul(&Vector3::new(
                (wt + p[0]).sin(),
                (wt + p[1]).sin(),
                (wt + p[2]).sin(),
            )),
            self.rotation_amplitude.component_mul(&Vector3::new(
                (wr + p[3]).sin(),
                (wr + p[4]).sin(),
                (wr + p[5]).sin(),
            )),
        )
    }
}

/// A face instance: shape, rest pose (face frame to world) and sway.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFace {
    pub beta: DVector<f64>,
    pub rest_pose: Pose,
    pub sway: HeadSway,
    pub time: f64,
}

impl GroundTruthFace {
    /// Face frame to world at the current time.
    pub fn pose(&self) -> Pose {
        if self.sway.is_still() {
            return self.rest_pose;
        }
        let (dp, dw) = self.sway.offset(self.time);
        Pose::new(self.rest_pose.position + dp, self.rest_pose.rotation * exp_so3(&dw))
    }

    /// World position of a face-frame point.
    pub fn to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.pose().transform_point(p)
    }
}

/// Advance the head-motion clock by `dt`.
pub fn step_head_motion(face: &GroundTruthFace, dt: f64) -> GroundTruthFace {
    debug_assert!(dt > 0.0);
    GroundTruthFace {
        time: face.time + dt,
        ..face.clone()
    }
}

/// Deterministic face model and shape draw for `seed`. The face rests at the
/// world origin with no sway; placement is up to the caller.
pub fn synthesize_face(seed: u64) -> (MorphableFaceModel, GroundTruthFace) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (verts, landmarks) = mean_vertices();
    let basis = synthetic_basis(&verts, &mut rng);
    let mean = DVector::from_iterator(3 * verts.len(), verts.iter().flat_map(|v| [v.x, v.y, v.z]));
    let mut beta = DVector::from_fn(BASIS_SIZE, |_, _| 0.35 * rng.sample::<f64, _>(StandardNormal));
    let norm = beta.norm();
    if norm > 1.0 {
        beta /= norm;
    }
    (
        MorphableFaceModel { mean, basis, landmarks },
        GroundTruthFace {
            beta,
            rest_pose: Pose::identity(),
            sway: HeadSway::default(),
            time: 0.0,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn synthesis_is_deterministic() {
        let (a, fa) = synthesize_face(11);
        let (b, fb) = synthesize_face(11);
        assert_eq!(a, b);
        assert_eq!(fa, fb);
        let (c, _) = synthesize_face(12);
        assert_ne!(a.basis, c.basis);
    }

    #[test]
    fn geometry_is_face_like() {
        let (m, _) = synthesize_face(3);
        assert!(m.vertex_count() >= 50);
        assert_eq!(m.basis_size(), BASIS_SIZE);
        let zero = DVector::zeros(BASIS_SIZE);
        let v = m.vertices(&zero).unwrap();
        let ys = v.column(1);
        let height = ys.max() - ys.min();
        assert!((0.16..=0.2).contains(&height), "height {height}");
        let l = m.landmarks;
        let eye = |i| m.vertex(l.eyes[i], &zero).unwrap();
        let nostril = |i| m.vertex(l.nostrils[i], &zero).unwrap();
        for i in 0..2 {
            // below the eyes (y down) and between them
            assert!(nostril(i).y > eye(0).y.max(eye(1).y));
            assert!(nostril(i).x > eye(0).x && nostril(i).x < eye(1).x);
        }
    }

    #[test]
    fn basis_columns_are_orthogonal() {
        let (m, _) = synthesize_face(5);
        let g = m.basis.transpose() * &m.basis;
        for i in 0..BASIS_SIZE {
            for j in 0..BASIS_SIZE {
                if i != j {
                    assert!(g[(i, j)].abs() < 1e-12 * g[(i, i)].max(1.0));
                }
            }
        }
    }

    #[test]
    fn zero_and_unit_coefficients() {
        let (m, _) = synthesize_face(2);
        let zero = DVector::zeros(BASIS_SIZE);
        let v = m.vertices(&zero).unwrap();
        assert_eq!(v.transpose().as_slice(), m.mean.as_slice());
        let mut e = DVector::zeros(BASIS_SIZE);
        e[3] = 1.0;
        let v = m.vertices(&e).unwrap();
        let expected = &m.mean + m.basis.column(3);
        assert_eq!(v.transpose().as_slice(), expected.as_slice());
        assert!(matches!(
            m.vertices(&DVector::zeros(3)),
            Err(SceneError::DimensionMismatch { expected: 8, found: 3 })
        ));
    }

    #[test]
    fn subset_rows_match_full_evaluation() {
        let (m, face) = synthesize_face(9);
        let full = m.vertices(&face.beta).unwrap();
        let idx = [m.landmarks.nostrils[0], m.landmarks.center, 4, m.landmarks.nostrils[1]];
        let sub = m.vertices_subset(&idx, &face.beta).unwrap();
        for (r, &i) in idx.iter().enumerate() {
            for a in 0..3 {
                assert_eq!(sub[(r, a)], full[(i, a)]);
            }
        }
    }

    proptest! {
        #[test]
        fn bounded_coefficients_stay_near_mean(seed in 0u64..50, raw in prop::collection::vec(-1.0f64..1.0, BASIS_SIZE)) {
            let (m, _) = synthesize_face(seed);
            let mut beta = DVector::from_vec(raw);
            if beta.norm() > 1.0 {
                beta /= beta.norm();
            }
            let v = m.vertices(&beta).unwrap();
            let mean = m.vertices(&DVector::zeros(BASIS_SIZE)).unwrap();
            for i in 0..m.vertex_count() {
                let d = (v.row(i) - mean.row(i)).norm();
                prop_assert!(d <= 0.05);
                prop_assert!(d <= BASIS_VERTEX_BOUND + 1e-12);
            }
        }
    }

    fn swaying(face: &GroundTruthFace) -> GroundTruthFace {
        GroundTruthFace {
            sway: HeadSway {
                translation_amplitude: Vector3::new(0.005, 0.002, 0.001),
                translation_frequency: 0.3,
                rotation_amplitude: Vector3::new(0.02, 0.01, 0.0),
                rotation_frequency: 0.3,
                phases: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            },
            ..face.clone()
        }
    }

    #[test]
    fn still_head_does_not_move() {
        let (_, face) = synthesize_face(1);
        let next = step_head_motion(&face, 0.1);
        assert_eq!(next.pose(), face.pose());
    }

    #[test]
    fn sway_is_periodic() {
        let (_, face) = synthesize_face(1);
        let face = swaying(&face);
        let period = 1.0 / 0.3;
        let later = step_head_motion(&face, period);
        assert_relative_eq!(later.pose().position, face.pose().position, epsilon = 1e-9);
        assert_relative_eq!(later.pose().rotation, face.pose().rotation, epsilon = 1e-9);
    }

    #[test]
    fn sway_frame_to_frame_displacement_is_bounded() {
        let (_, face) = synthesize_face(1);
        let mut face = GroundTruthFace {
            sway: HeadSway {
                translation_amplitude: Vector3::new(0.005, 0.0, 0.0),
                translation_frequency: 0.3,
                ..HeadSway::default()
            },
            ..face
        };
        let dt = 1.0 / 30.0;
        let bound = 2.0 * PI * 0.3 * 0.005 * dt;
        let mut worst: f64 = 0.0;
        for _ in 0..300 {
            let next = step_head_motion(&face, dt);
            worst = worst.max((next.pose().position - face.pose().position).norm());
            face = next;
        }
        assert!(worst <= bound);
        assert!(worst > 0.95 * bound);
    }
}
