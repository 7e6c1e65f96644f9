use nalgebra::{SVector, Vector3};

use super::SerialChain;

/// Capsule rigidly attached to a link frame (0 = base).
#[derive(Debug, Clone, PartialEq)]
pub struct Capsule {
    pub link: usize,
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
}

/// Per-link capsules. Pairs on the same or adjacent links are never tested.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollisionGeometry {
    pub capsules: Vec<Capsule>,
}

impl CollisionGeometry {
    /// Index pair of the first intersecting non-adjacent capsule pair.
    pub fn first_collision<const N: usize>(
        &self,
        chain: &SerialChain<N>,
        q: &SVector<f64, N>,
    ) -> Option<(usize, usize)> {
        let frames = chain.link_frames(q);
        let world: Vec<(Vector3<f64>, Vector3<f64>)> = self
            .capsules
            .iter()
            .map(|c| {
                let f = &frames[c.link.min(N)];
                (f.transform_point(&c.a), f.transform_point(&c.b))
            })
            .collect();
        for i in 0..self.capsules.len() {
            for j in (i + 1)..self.capsules.len() {
                let (ci, cj) = (&self.capsules[i], &self.capsules[j]);
                if ci.link.abs_diff(cj.link) <= 1 {
                    continue;
                }
                let d = segment_distance(&world[i].0, &world[i].1, &world[j].0, &world[j].1);
                if d < ci.radius + cj.radius {
                    return Some((i, j));
                }
            }
        }
        None
    }

    pub fn check_self_collision<const N: usize>(&self, chain: &SerialChain<N>, q: &SVector<f64, N>) -> bool {
        self.first_collision(chain, q).is_some()
    }
}

/// Distance between segments `p1q1` and `p2q2` (closest-point clamping).
pub fn segment_distance(p1: &Vector3<f64>, q1: &Vector3<f64>, p2: &Vector3<f64>, q2: &Vector3<f64>) -> f64 {
    const EPS: f64 = 1e-14;
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let (s, t);
    if a <= EPS && e <= EPS {
        return r.norm();
    }
    if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > EPS {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}
