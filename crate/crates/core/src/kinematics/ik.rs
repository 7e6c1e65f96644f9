use nalgebra::{SVector, Vector6};
use thiserror::Error;

use super::{pseudo_inverse, CollisionGeometry, SerialChain, DEFAULT_DAMPING};
use crate::manifold::{log_so3, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum IkFailure {
    #[error("iterate {iterate}: joint {joint} outside its limits")]
    JointLimitHit { iterate: usize, joint: usize },
    #[error("iterate {iterate}: capsules {pair:?} intersect")]
    SelfCollision { iterate: usize, pair: (usize, usize) },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    MaxItersExceeded { iterations: usize, residual: f64 },
}

impl IkFailure {
    /// Index of the iterate at which the solve stopped.
    pub fn iterate(&self) -> usize {
        match *self {
            IkFailure::JointLimitHit { iterate, .. } | IkFailure::SelfCollision { iterate, .. } => iterate,
            IkFailure::MaxItersExceeded { iterations, .. } => iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution<const N: usize> {
    pub q: SVector<f64, N>,
    pub iterations: usize,
    pub residual: f64,
}

/// `(p_target − p, log(R_target·Rᵀ))`, weighted 1:1.
pub fn pose_error(current: &Pose, target: &Pose) -> Vector6<f64> {
    let dp = target.position - current.position;
    let dr = log_so3(&(target.rotation * current.rotation.inverse()));
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// Euler-integrated pseudo-inverse IK.
#[derive(Debug, Clone, PartialEq)]
pub struct IkSolver {
    /// Frame driven to the target, relative to the flange.
    pub tool: Pose,
    pub step_scale: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
    /// Largest joint change per iterate; larger steps are scaled down uniformly.
    pub max_joint_step: f64,
}

impl Default for IkSolver {
    fn default() -> Self {
        Self {
            tool: Pose::identity(),
            step_scale: 0.5,
            max_iters: 200,
            tol: 1e-5,
            damping: DEFAULT_DAMPING,
            max_joint_step: 0.2,
        }
    }
}

impl IkSolver {
    pub fn with_tool(mut self, tool: Pose) -> Self {
        self.tool = tool;
        self
    }

    /// One update `q + step_scale·J†·e`.
    pub fn step<const N: usize>(&self, chain: &SerialChain<N>, q: &SVector<f64, N>, target: &Pose) -> SVector<f64, N> {
        let (pose, j) = chain.tool_jacobian(q, &self.tool);
        self.step_from(q, &j, &pose_error(&pose, target))
    }

    fn step_from<const N: usize>(
        &self,
        q: &SVector<f64, N>,
        j: &nalgebra::SMatrix<f64, 6, N>,
        err: &Vector6<f64>,
    ) -> SVector<f64, N> {
        let mut dq = pseudo_inverse(j, self.damping) * err * self.step_scale;
        let peak = dq.amax();
        if peak > self.max_joint_step {
            dq *= self.max_joint_step / peak;
        }
        q + dq
    }

    /// Iterates [`IkSolver::step`] from `q0`, checking limits and collisions at
    /// every iterate including `q0` itself.
    pub fn solve<const N: usize>(
        &self,
        chain: &SerialChain<N>,
        geometry: &CollisionGeometry,
        q0: &SVector<f64, N>,
        target: &Pose,
    ) -> Result<IkSolution<N>, IkFailure> {
        self.solve_inner(chain, geometry, q0, target, None)
    }

    /// Like [`IkSolver::solve`], also returning every iterate visited.
    pub fn solve_recording<const N: usize>(
        &self,
        chain: &SerialChain<N>,
        geometry: &CollisionGeometry,
        q0: &SVector<f64, N>,
        target: &Pose,
    ) -> (Result<IkSolution<N>, IkFailure>, Vec<SVector<f64, N>>) {
        let mut path = Vec::new();
        let result = self.solve_inner(chain, geometry, q0, target, Some(&mut path));
        (result, path)
    }

    fn solve_inner<const N: usize>(
        &self,
        chain: &SerialChain<N>,
        geometry: &CollisionGeometry,
        q0: &SVector<f64, N>,
        target: &Pose,
        mut path: Option<&mut Vec<SVector<f64, N>>>,
    ) -> Result<IkSolution<N>, IkFailure> {
        let mut q = *q0;
        for iterate in 0..=self.max_iters {
            if let Some(p) = path.as_deref_mut() {
                p.push(q);
            }
            if let Some(joint) = chain.first_limit_violation(&q) {
                return Err(IkFailure::JointLimitHit { iterate, joint });
            }
            if let Some(pair) = geometry.first_collision(chain, &q) {
                return Err(IkFailure::SelfCollision { iterate, pair });
            }
            let (pose, j) = chain.tool_jacobian(&q, &self.tool);
            let err = pose_error(&pose, target);
            let residual = err.norm();
            if residual < self.tol {
                return Ok(IkSolution {
                    q,
                    iterations: iterate,
                    residual,
                });
            }
            if iterate == self.max_iters {
                return Err(IkFailure::MaxItersExceeded {
                    iterations: iterate,
                    residual,
                });
            }
            q = self.step_from(&q, &j, &err);
        }
        unreachable!("loop returns on its last iterate")
    }
}

/// One flange-frame IK update with default damping and no step clamp.
pub fn ik_step<const N: usize>(
    chain: &SerialChain<N>,
    q: &SVector<f64, N>,
    target: &Pose,
    step_scale: f64,
) -> SVector<f64, N> {
    let solver = IkSolver {
        step_scale,
        max_joint_step: f64::INFINITY,
        ..IkSolver::default()
    };
    solver.step(chain, q, target)
}

/// Flange-frame IK with default step settings.
pub fn solve_ik<const N: usize>(
    chain: &SerialChain<N>,
    geometry: &CollisionGeometry,
    q0: &SVector<f64, N>,
    target: &Pose,
    max_iters: usize,
    tol: f64,
) -> Result<IkSolution<N>, IkFailure> {
    let solver = IkSolver {
        max_iters,
        tol,
        ..IkSolver::default()
    };
    solver.solve(chain, geometry, q0, target)
}
