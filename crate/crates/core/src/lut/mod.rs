//! Joint lookup table: for each cell of the start cone, the random-seeded IK
//! candidate that can reach the most targets of the end cone.

mod cones;
mod io;

pub use cones::{neutral_orientation, sample_cone_end, sample_cone_start, ConeEndSpec, ConeStartSpec};
pub use io::{read_table, write_csv, write_table, FORMAT_VERSION, MAGIC};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::kinematics::{IkSolver, JointConfig, RobotModel};
use crate::manifold::Pose;

/// Residual (m + rad) below which an IK solve counts as reaching its target.
pub const IK_TOL: f64 = 1e-4;
const CANDIDATE_ITERS: usize = 300;
const GRADE_ITERS: usize = 100;

#[derive(Debug, Error)]
pub enum LutError {
    #[error("invalid cone specification: {0}")]
    InvalidSpec(String),
    #[error("no IK candidate reached the start pose")]
    NoFeasibleCandidate,
    #[error("cell {cell} has no feasible configuration")]
    InfeasibleCell { cell: usize },
    #[error("table file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Build parameters recorded alongside the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LutConfig {
    pub start: ConeStartSpec,
    pub end: ConeEndSpec,
    pub candidates: usize,
    pub seed: u64,
    /// Distance along the optical axis from the camera to the frame that is
    /// placed on each start-cone pose.
    pub focus_distance: f64,
}

impl Default for LutConfig {
    fn default() -> Self {
        Self {
            start: ConeStartSpec::default(),
            end: ConeEndSpec::default(),
            candidates: 128,
            seed: 0,
            focus_distance: 0.30,
        }
    }
}

impl LutConfig {
    pub fn validate(&self) -> Result<(), LutError> {
        self.start.validate().map_err(LutError::InvalidSpec)?;
        self.end.validate().map_err(LutError::InvalidSpec)?;
        if self.candidates == 0 {
            return Err(LutError::InvalidSpec("candidate count must be at least 1".into()));
        }
        if !(self.focus_distance >= 0.0 && self.focus_distance.is_finite()) {
            return Err(LutError::InvalidSpec("focus distance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LutEntry {
    pub cell: usize,
    /// Start-cone pose of the cell, ε_start.
    pub pose: Pose,
    pub q: JointConfig,
    pub reach: u32,
    pub total: u32,
}

impl LutEntry {
    pub fn feasible(&self) -> bool {
        self.reach > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LutTable {
    pub config: LutConfig,
    pub entries: Vec<LutEntry>,
}

/// Frame driven onto start-cone poses: the camera pushed `focus_distance`
/// forward along its optical axis.
pub fn focus_tool(model: &RobotModel, focus_distance: f64) -> Pose {
    model
        .camera
        .compose(&Pose::from_translation(Vector3::new(0.0, 0.0, focus_distance)))
}

fn solver(model: &RobotModel, focus_distance: f64, max_iters: usize) -> IkSolver {
    IkSolver {
        max_iters,
        tol: IK_TOL,
        ..IkSolver::default()
    }
    .with_tool(focus_tool(model, focus_distance))
}

/// Independent per-cell seed so parallel and serial builds agree.
pub fn cell_seed(seed: u64, cell: usize) -> u64 {
    seed ^ (cell as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// IK solutions for `start` from `count` uniform-within-limits seeds;
/// failed solves are dropped.
pub fn generate_candidates(
    model: &RobotModel,
    start: &Pose,
    focus_distance: f64,
    count: usize,
    rng_seed: u64,
) -> Result<Vec<JointConfig>, LutError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let ik = solver(model, focus_distance, CANDIDATE_ITERS);
    let chain = &model.chain;
    let mut out = Vec::new();
    for _ in 0..count {
        let q0 = JointConfig::from_fn(|i, _| rng.random_range(chain.joints[i].lower..=chain.joints[i].upper));
        if let Ok(sol) = ik.solve(chain, &model.geometry, &q0, start) {
            out.push(sol.q);
        }
    }
    if out.is_empty() {
        Err(LutError::NoFeasibleCandidate)
    } else {
        Ok(out)
    }
}

/// Number of `targets` reachable by IK from `q` without limit or collision
/// violations.
pub fn grade_candidate(model: &RobotModel, focus_distance: f64, q: &JointConfig, targets: &[Pose]) -> u32 {
    let ik = solver(model, focus_distance, GRADE_ITERS);
    targets
        .iter()
        .filter(|t| ik.solve(&model.chain, &model.geometry, q, t).is_ok())
        .count() as u32
}

/// Best graded candidate for one cell; infeasible cells keep `home` with N = 0.
pub fn build_cell(model: &RobotModel, config: &LutConfig, cell: usize) -> LutEntry {
    let pose = config.start.cell_pose(cell);
    let total = config.end.sample_count() as u32;
    let mut entry = LutEntry {
        cell,
        pose,
        q: model.home,
        reach: 0,
        total,
    };
    let Ok(candidates) = generate_candidates(
        model,
        &pose,
        config.focus_distance,
        config.candidates,
        cell_seed(config.seed, cell),
    ) else {
        return entry;
    };
    let targets = sample_cone_end(&config.end, &pose);
    for q in candidates {
        let n = grade_candidate(model, config.focus_distance, &q, &targets);
        // Strict comparison keeps the earliest candidate on ties.
        if n > entry.reach {
            entry.reach = n;
            entry.q = q;
        }
    }
    entry
}

/// Builds every cell, in parallel on the current rayon pool.
pub fn build_table(model: &RobotModel, config: &LutConfig) -> Result<LutTable, LutError> {
    config.validate()?;
    let entries = (0..config.start.cell_count())
        .into_par_iter()
        .map(|cell| build_cell(model, config, cell))
        .collect();
    Ok(LutTable {
        config: *config,
        entries,
    })
}

impl LutTable {
    /// Entry of the cell nearest `face_position` (clamped to the grid).
    pub fn query(&self, face_position: &Vector3<f64>) -> Result<&LutEntry, LutError> {
        let cell = self.config.start.nearest_cell(face_position);
        let entry = &self.entries[cell];
        if entry.feasible() {
            Ok(entry)
        } else {
            Err(LutError::InfeasibleCell { cell })
        }
    }

    pub fn contains(&self, face_position: &Vector3<f64>) -> bool {
        self.config.start.contains(face_position)
    }

    /// Histogram of reach counts in `bins` equal-width bins over `[0, total]`.
    pub fn reach_histogram(&self, bins: usize) -> Vec<usize> {
        let mut hist = vec![0; bins.max(1)];
        for e in &self.entries {
            let frac = if e.total == 0 {
                0.0
            } else {
                e.reach as f64 / e.total as f64
            };
            let b = ((frac * hist.len() as f64) as usize).min(hist.len() - 1);
            hist[b] += 1;
        }
        hist
    }

    pub fn feasible_count(&self) -> usize {
        self.entries.iter().filter(|e| e.feasible()).count()
    }
}
