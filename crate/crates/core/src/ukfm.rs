//! Unscented Kalman filter on SE(3) for the relative target pose.
//!
//! The state is the pose of the desired frame in the current camera frame.
//! It is propagated with the commanded camera twist and corrected with
//! decoded relative poses. Sigma points live in the tangent chart of
//! [`retract`]/[`inverse_retract`].
//!
//! Process noise enters as a perturbation of the commanded twist, so the
//! per-step covariance inflation is `Δt²·Q` to first order.

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use thiserror::Error;

use crate::manifold::{exp_so3, inverse_retract, renormalize, retract, ManifoldError, Pose, Twist};

const DIM: usize = 6;
/// Eigenvalue floor applied when a covariance needs repair.
const EIGEN_FLOOR: f64 = 1e-12;
/// Largest total negative eigenvalue mass that is silently repaired.
const MAX_REPAIR_MASS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum UkfError {
    #[error("covariance lost positive semidefiniteness (negative mass {mass:e})")]
    CovarianceNotPsd { mass: f64 },
    #[error("time step must be positive, got {dt}")]
    NonPositiveStep { dt: f64 },
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfParams {
    /// Covariance of the commanded twist noise, `(linear, angular)`.
    pub process: Matrix6<f64>,
    pub measurement: Matrix6<f64>,
    pub alpha_state: f64,
    pub alpha_noise: f64,
    pub alpha_update: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            process: Matrix6::identity() * 0.01,
            measurement: Matrix6::from_diagonal(&Vector6::new(0.005, 0.005, 0.005, 0.05, 0.05, 0.05)),
            alpha_state: 0.01,
            alpha_noise: 0.1,
            alpha_update: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfState {
    pub mean: Pose,
    pub covariance: Matrix6<f64>,
    /// Filter clock (s), advanced by every propagation.
    pub time: f64,
    /// Time of the last accepted measurement.
    pub last_update: Option<f64>,
}

impl UkfState {
    pub fn new(mean: Pose, covariance: Matrix6<f64>, time: f64) -> Self {
        Self {
            mean,
            covariance,
            time,
            last_update: None,
        }
    }

    pub fn covariance_trace(&self) -> f64 {
        self.covariance.trace()
    }
}

/// Unscented transform weights for one spread parameter α.
#[derive(Debug, Clone, Copy)]
struct Weights {
    spread: f64,
    wm: f64,
    w0: f64,
    wj: f64,
}

impl Weights {
    fn new(dim: usize, alpha: f64) -> Self {
        let d = dim as f64;
        let lambda = (alpha * alpha - 1.0) * d;
        Self {
            spread: (d + lambda).sqrt(),
            wm: lambda / (lambda + d),
            w0: lambda / (lambda + d) + 3.0 - alpha * alpha,
            wj: 1.0 / (2.0 * (d + lambda)),
        }
    }
}

/// The process equations with twist noise `w = (w_v, w_ω)`:
/// `p ← p + Δt(−v − ω×p)`, `R ← R·exp(−Δt·ω)`.
pub fn process(x: &Pose, command: &Twist, noise: &Vector6<f64>, dt: f64) -> Pose {
    let v = command.linear + noise.fixed_rows::<3>(0);
    let w = command.angular + noise.fixed_rows::<3>(3);
    Pose::new(
        x.position + (-v - w.cross(&x.position)) * dt,
        x.rotation * exp_so3(&(-w * dt)),
    )
}

/// Symmetrize and, if needed, lift negative eigenvalues to a small floor.
pub fn repair_covariance(p: &Matrix6<f64>) -> Result<Matrix6<f64>, UkfError> {
    let sym = (p + p.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(sym);
    if eigen.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(sym);
    }
    let mass: f64 = eigen.eigenvalues.iter().map(|&l| (-l).max(0.0)).sum();
    if !(mass <= MAX_REPAIR_MASS) {
        return Err(UkfError::CovarianceNotPsd { mass });
    }
    let clamped = eigen.eigenvalues.map(|l| l.max(EIGEN_FLOOR));
    let m = eigen.eigenvectors * Matrix6::from_diagonal(&clamped) * eigen.eigenvectors.transpose();
    Ok((m + m.transpose()) * 0.5)
}

/// A square root `S` with `S·Sᵀ = P`; semidefinite input is accepted.
fn psd_sqrt(p: &Matrix6<f64>) -> Matrix6<f64> {
    if let Some(chol) = p.cholesky() {
        return chol.l();
    }
    let eigen = SymmetricEigen::new(*p);
    eigen.eigenvectors * Matrix6::from_diagonal(&eigen.eigenvalues.map(|l| l.max(0.0).sqrt()))
}

/// Covariance of chart offsets `xis` about their weighted mean.
fn spread_covariance(xis: &[Vector6<f64>], w: &Weights) -> Matrix6<f64> {
    let mean: Vector6<f64> = xis.iter().sum::<Vector6<f64>>() * w.wj;
    let mut cov = mean * mean.transpose() * w.w0;
    for xi in xis {
        let d = xi - mean;
        cov += d * d.transpose() * w.wj;
    }
    cov
}

pub fn propagate(state: &UkfState, command: &Twist, dt: f64, params: &UkfParams) -> Result<UkfState, UkfError> {
    if !(dt > 0.0) {
        return Err(UkfError::NonPositiveStep { dt });
    }
    let zero = Vector6::zeros();
    let mean = process(&state.mean, command, &zero, dt);

    let ws = Weights::new(DIM, params.alpha_state);
    let s = psd_sqrt(&state.covariance) * ws.spread;
    let mut xis = Vec::with_capacity(2 * DIM);
    for sign in [1.0, -1.0] {
        for j in 0..DIM {
            let sigma = retract(&state.mean, &(s.column(j) * sign));
            xis.push(inverse_retract(&process(&sigma, command, &zero, dt), &mean)?);
        }
    }
    let p_state = spread_covariance(&xis, &ws);

    let wn = Weights::new(DIM, params.alpha_noise);
    let s = psd_sqrt(&params.process) * wn.spread;
    xis.clear();
    for sign in [1.0, -1.0] {
        for j in 0..DIM {
            let moved = process(&state.mean, command, &(s.column(j) * sign), dt);
            xis.push(inverse_retract(&moved, &mean)?);
        }
    }
    let p_noise = spread_covariance(&xis, &wn);

    Ok(UkfState {
        mean: Pose::new(mean.position, renormalize(&mean.rotation)),
        covariance: repair_covariance(&(p_state + p_noise))?,
        time: state.time + dt,
        last_update: state.last_update,
    })
}

/// Full-pose measurement update; the innovation is taken in the chart at
/// the prior mean.
pub fn update(state: &UkfState, measurement: &Pose, params: &UkfParams) -> Result<UkfState, UkfError> {
    let w = Weights::new(DIM, params.alpha_update);
    let s = psd_sqrt(&state.covariance) * w.spread;
    let y_mean = inverse_retract(&state.mean, &state.mean)?;
    let mut xis = Vec::with_capacity(2 * DIM);
    let mut ys = Vec::with_capacity(2 * DIM);
    for sign in [1.0, -1.0] {
        for j in 0..DIM {
            let xi: Vector6<f64> = s.column(j) * sign;
            ys.push(inverse_retract(&retract(&state.mean, &xi), &state.mean)?);
            xis.push(xi);
        }
    }
    let y_bar = y_mean * w.wm + ys.iter().sum::<Vector6<f64>>() * w.wj;
    let mut p_yy = (y_mean - y_bar) * (y_mean - y_bar).transpose() * w.w0 + params.measurement;
    let mut p_xy = Matrix6::zeros();
    for (xi, y) in xis.iter().zip(&ys) {
        let d = y - y_bar;
        p_yy += d * d.transpose() * w.wj;
        p_xy += xi * d.transpose() * w.wj;
    }
    let p_yy_inv = p_yy
        .try_inverse()
        .ok_or(UkfError::CovarianceNotPsd { mass: f64::NAN })?;
    let gain = p_xy * p_yy_inv;
    let innovation = inverse_retract(measurement, &state.mean)? - y_bar;
    let mean = retract(&state.mean, &(gain * innovation));
    Ok(UkfState {
        mean: Pose::new(mean.position, renormalize(&mean.rotation)),
        covariance: repair_covariance(&(state.covariance - gain * p_yy * gain.transpose()))?,
        time: state.time,
        last_update: Some(state.time),
    })
}

/// Propagate, then update when a measurement is available.
pub fn step(
    state: &UkfState,
    command: &Twist,
    dt: f64,
    measurement: Option<&Pose>,
    params: &UkfParams,
) -> Result<UkfState, UkfError> {
    let predicted = propagate(state, command, dt, params)?;
    match measurement {
        Some(m) => update(&predicted, m, params),
        None => Ok(predicted),
    }
}
