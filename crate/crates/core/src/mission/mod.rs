//! The three-stage alignment sequence: sentry (table lookup), approach
//! (camera servoed to a standoff in front of the nostril) and final
//! alignment (swab tip servoed onto the nostril), followed by the terminal
//! workspace check.

mod log;
mod stats;

pub use log::{write_log_csv, LogRow, LOG_HEADER};
pub use stats::{
    score_outcomes, write_results_csv, write_summary_csv, AxisStats, BatchSummary, StageStats, EXTENSION_OK,
};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::kinematics::{IkSolver, JointConfig, RobotModel};
use crate::lut::LutTable;
use crate::manifold::{inverse_retract, rotation_angle, Pose, Twist};
use crate::pbvs::{control, frame_jacobian, ControlParams};
use crate::perception::{
    decode_face, fit_swab, relative_target_stage2, relative_target_stage3, DecodedFacePose, OutlierGate, QualityFlags,
    RelativeTarget, SwabPose, TargetStage, CAMERA_STANDOFF, DESIRED_PITCH,
};
use crate::scene::{sample_placement, FacePlacement, Keypoints, NoiseLevel, Scene, SceneConfig};
use crate::ukfm::{propagate, update, UkfParams, UkfState};

/// Salt separating the observation-noise stream from the face-shape stream.
const NOISE_SALT: u64 = 0x5EED_0FC0_FFEE;
/// Salt for the placement stream.
const PLACEMENT_SALT: u64 = 0x9AC3_11E5_7AB1_E000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Sentry,
    Approach,
    FinalAlign,
    Done,
}

impl Stage {
    /// 1 = sentry, 2 = approach, 3 = final alignment, 4 = done.
    pub fn number(self) -> u8 {
        match self {
            Stage::Sentry => 1,
            Stage::Approach => 2,
            Stage::FinalAlign => 3,
            Stage::Done => 4,
        }
    }

    fn next(self) -> Stage {
        match self {
            Stage::Sentry => Stage::Approach,
            Stage::Approach => Stage::FinalAlign,
            Stage::FinalAlign | Stage::Done => Stage::Done,
        }
    }
}

/// Convergence box on the filtered error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageThresholds {
    pub position: f64,
    pub rotation: f64,
}

impl StageThresholds {
    pub fn admits(&self, error: &RelativeTarget) -> bool {
        error.translation.norm() < self.position && rotation_angle(&error.rotation) < self.rotation
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageContext {
    pub stage: Stage,
    pub entry_time: f64,
    pub approach: StageThresholds,
    pub final_align: StageThresholds,
    /// Consecutive in-threshold ticks needed to advance.
    pub debounce: usize,
    pub timeout: f64,
    streak: usize,
}

impl StageContext {
    pub fn new(config: &MissionConfig, stage: Stage, entry_time: f64) -> Self {
        Self {
            stage,
            entry_time,
            approach: config.approach,
            final_align: config.final_align,
            debounce: config.debounce,
            timeout: config.stage_timeout,
            streak: 0,
        }
    }

    pub fn thresholds(&self) -> Option<&StageThresholds> {
        match self.stage {
            Stage::Approach => Some(&self.approach),
            Stage::FinalAlign => Some(&self.final_align),
            _ => None,
        }
    }

    /// Advance after `debounce` consecutive ticks inside the thresholds.
    pub fn transition(&self, filtered_error: &RelativeTarget, t: f64) -> StageContext {
        let mut next = *self;
        let Some(th) = self.thresholds() else {
            return next;
        };
        next.streak = if th.admits(filtered_error) { self.streak + 1 } else { 0 };
        if next.streak >= self.debounce {
            next.stage = self.stage.next();
            next.entry_time = t;
            next.streak = 0;
        }
        next
    }

    pub fn timed_out(&self, t: f64) -> bool {
        matches!(self.stage, Stage::Approach | Stage::FinalAlign) && t - self.entry_time > self.timeout
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissionConfig {
    pub scene: SceneConfig,
    pub ukf: UkfParams,
    pub control: ControlParams,
    /// Control loop rate (Hz); the filter propagates at this rate.
    pub control_rate: f64,
    pub approach: StageThresholds,
    pub final_align: StageThresholds,
    pub debounce: usize,
    /// Per-stage time budget (s).
    pub stage_timeout: f64,
    /// Servo time kept after final alignment converges (s).
    pub settle_time: f64,
    /// Tip-to-nostril distance counted as reaching the nostril (m).
    pub success_radius: f64,
    pub standoff: f64,
    pub pitch: f64,
    pub extension_max: f64,
    pub extension_step: f64,
    /// Placement redraws allowed while looking for a feasible table cell.
    pub placement_attempts: usize,
    /// Time after a stage starts before noise statistics are collected (s).
    pub stats_warmup: f64,
}

impl MissionConfig {
    pub fn with_scene(scene: SceneConfig) -> Self {
        Self {
            scene,
            ukf: UkfParams::default(),
            control: ControlParams::default(),
            control_rate: 100.0,
            approach: StageThresholds {
                position: 0.010,
                rotation: 2f64.to_radians(),
            },
            final_align: StageThresholds {
                position: 0.003,
                rotation: 1f64.to_radians(),
            },
            debounce: 10,
            stage_timeout: 60.0,
            settle_time: 3.0,
            success_radius: 0.005,
            standoff: CAMERA_STANDOFF,
            pitch: DESIRED_PITCH,
            extension_max: 0.30,
            extension_step: 0.005,
            placement_attempts: 100,
            stats_warmup: 1.0,
        }
    }

    pub fn paper() -> Self {
        Self::with_scene(SceneConfig::paper())
    }

    pub fn noiseless() -> Self {
        Self::with_scene(SceneConfig::noiseless())
    }
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self::paper()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Completed,
    /// The face position has no usable table entry.
    LutInfeasible {
        cell: Option<usize>,
    },
    StageTimeout {
        stage: u8,
    },
    /// Numerical or geometric failure inside the loop.
    Fault(String),
}

impl TrialOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            TrialOutcome::Completed => "completed",
            TrialOutcome::LutInfeasible { .. } => "lut_infeasible",
            TrialOutcome::StageTimeout { .. } => "stage_timeout",
            TrialOutcome::Fault(_) => "fault",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    pub outcome: TrialOutcome,
    pub reached_nostril: bool,
    /// True tip to true nostril at the end of the trial (m).
    pub terminal_distance: f64,
    /// Achieved minus desired swab pitch in the face frame (deg).
    pub pitch_error_deg: f64,
    /// Achieved swab yaw in the face frame (deg); the target is 0.
    pub yaw_error_deg: f64,
    pub duration: f64,
    /// Forward tip travel available from the terminal configuration (m).
    pub extension: f64,
    pub nostril_world: Vector3<f64>,
    pub approach: StageStats,
    pub final_align: StageStats,
    /// Where the caller stored the tick log, if anywhere.
    pub log_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRun {
    pub result: TrialResult,
    pub log: Vec<LogRow>,
}

/// Largest forward tip displacement, swept in `step` increments up to
/// `max_extend`, that stays reachable without limit or collision
/// violations. The direction is the horizontal heading of the swab pitched
/// up by `pitch`; the tip orientation is held.
pub fn workspace_extension(
    model: &RobotModel,
    q_terminal: &JointConfig,
    pitch: f64,
    max_extend: f64,
    step: f64,
) -> f64 {
    let tool = model.swab_tip_frame();
    let start = model.chain.tool_pose(q_terminal, &tool);
    let forward = start.rotation * Vector3::z();
    let heading = Vector3::new(forward.x, forward.y, 0.0);
    if heading.norm() < 1e-9 || !(step > 0.0) {
        return 0.0;
    }
    let direction = heading.normalize() * pitch.cos() + Vector3::z() * pitch.sin();
    let solver = IkSolver {
        tol: 1e-4,
        ..IkSolver::default()
    }
    .with_tool(tool);
    let mut seed = *q_terminal;
    let mut reached = 0.0;
    let steps = (max_extend / step + 1e-9).floor() as usize;
    for i in 1..=steps {
        let d = i as f64 * step;
        let target = Pose::new(start.position + direction * d, start.rotation);
        match solver.solve(&model.chain, &model.geometry, &seed, &target) {
            Ok(sol) => {
                seed = sol.q;
                reached = d;
            }
            Err(_) => break,
        }
    }
    reached
}

/// Relative target the pipeline would compute from a perfect decode.
fn true_decode(scene: &Scene, camera_pose: &Pose) -> DecodedFacePose {
    let face_in_camera = camera_pose.inverse().compose(&scene.face_pose());
    DecodedFacePose {
        rotation: face_in_camera.rotation,
        nostril: camera_pose.inverse().transform_point(&scene.nostril_world()),
        flags: QualityFlags::default(),
    }
}

fn stage_target(
    stage: Stage,
    decoded: &DecodedFacePose,
    swab: &SwabPose,
    config: &MissionConfig,
) -> Result<RelativeTarget, String> {
    match stage {
        Stage::Approach => Ok(relative_target_stage2(decoded, config.standoff, config.pitch)),
        _ => relative_target_stage3(decoded, swab, config.pitch).map_err(|e| e.to_string()),
    }
}

fn target_stage(stage: Stage) -> TargetStage {
    match stage {
        Stage::Approach => TargetStage::Approach,
        _ => TargetStage::FinalAlign,
    }
}

/// Draw placements until one lands on a feasible table cell, then run.
pub fn run_trial(model: &RobotModel, table: &LutTable, config: &MissionConfig, seed: u64) -> TrialRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PLACEMENT_SALT);
    let mut placement = sample_placement(&config.scene.placement, &mut rng);
    for _ in 1..config.placement_attempts {
        if table.contains(&placement.nostril_world) && table.query(&placement.nostril_world).is_ok() {
            break;
        }
        placement = sample_placement(&config.scene.placement, &mut rng);
    }
    run_trial_at(model, table, config, seed, &placement)
}

struct Trial<'a> {
    model: &'a RobotModel,
    config: &'a MissionConfig,
    seed: u64,
    nostril_world: Vector3<f64>,
    log: Vec<LogRow>,
    approach: StageStats,
    final_align: StageStats,
}

impl Trial<'_> {
    fn finish(self, outcome: TrialOutcome, end: Option<(&Scene, &JointConfig, Keypoints)>, t: f64) -> TrialRun {
        let mut result = TrialResult {
            seed: self.seed,
            reached_nostril: false,
            terminal_distance: f64::NAN,
            pitch_error_deg: f64::NAN,
            yaw_error_deg: f64::NAN,
            duration: t,
            extension: 0.0,
            nostril_world: self.nostril_world,
            approach: self.approach,
            final_align: self.final_align,
            log_path: None,
            outcome,
        };
        if let Some((scene, q, (tip, shaft))) = end {
            let camera = self.model.camera_pose(q);
            let tip_world = camera.transform_point(&tip);
            result.terminal_distance = (tip_world - scene.nostril_world()).norm();
            let face = scene.face_pose();
            let d = face.rotation.inverse() * (camera.rotation * (tip - shaft).normalize());
            result.pitch_error_deg = ((-d.y).atan2(d.z) - self.config.pitch).to_degrees();
            result.yaw_error_deg = d.x.atan2(d.z).to_degrees();
            if result.outcome == TrialOutcome::Completed {
                result.reached_nostril = result.terminal_distance < self.config.success_radius;
                result.extension = workspace_extension(
                    self.model,
                    q,
                    self.config.pitch,
                    self.config.extension_max,
                    self.config.extension_step,
                );
            }
        }
        TrialRun { result, log: self.log }
    }
}

/// One trial with an explicit face placement.
pub fn run_trial_at(
    model: &RobotModel,
    table: &LutTable,
    config: &MissionConfig,
    seed: u64,
    placement: &FacePlacement,
) -> TrialRun {
    let mut trial = Trial {
        model,
        config,
        seed,
        nostril_world: placement.nostril_world,
        log: Vec::new(),
        approach: StageStats::default(),
        final_align: StageStats::default(),
    };
    let mut scene = match Scene::new(&config.scene, seed, seed ^ NOISE_SALT, placement) {
        Ok(s) => s,
        Err(e) => return trial.finish(TrialOutcome::Fault(e.to_string()), None, 0.0),
    };

    // stage 1: table lookup with the true face position, direct joint move
    if !table.contains(&placement.nostril_world) {
        return trial.finish(TrialOutcome::LutInfeasible { cell: None }, None, 0.0);
    }
    let mut q = match table.query(&placement.nostril_world) {
        Ok(entry) => entry.q,
        Err(_) => {
            let cell = table.config.start.nearest_cell(&placement.nostril_world);
            return trial.finish(TrialOutcome::LutInfeasible { cell: Some(cell) }, None, 0.0);
        }
    };
    trial.log.push(LogRow::idle(0.0, Stage::Sentry, q));

    let k = scene.camera.k;
    let nominal = (model.swab_tip_in_camera(), model.swab_shaft_in_camera());
    let (mounted, swab_obs) = match scene.mount_swab(nominal, &config.scene.swab) {
        Ok(m) => m,
        Err(e) => return trial.finish(TrialOutcome::Fault(e.to_string()), None, 0.0),
    };
    let swab = match fit_swab(&swab_obs, &k) {
        Ok(s) => s,
        Err(e) => return trial.finish(TrialOutcome::Fault(e.to_string()), None, 0.0),
    };
    let tip_tool = model.camera.compose(&Pose::from_translation(swab.tip));

    let dt = 1.0 / config.control_rate;
    let obs_per_tick = config.scene.observation_rate / config.control_rate;
    let mut ctx = StageContext::new(config, Stage::Approach, 0.0);
    let mut filter: Option<UkfState> = None;
    let mut gate = OutlierGate::default();
    let mut last_obs: Option<u64> = None;
    let mut settle_until = f64::INFINITY;
    let lo = model.chain.lower_limits();
    let hi = model.chain.upper_limits();

    let mut tick: u64 = 0;
    loop {
        let t = tick as f64 * dt;
        if ctx.stage == Stage::Done && t >= settle_until - 1e-9 {
            return trial.finish(TrialOutcome::Completed, Some((&scene, &q, mounted)), t);
        }
        if ctx.timed_out(t) {
            let stage = ctx.stage.number();
            return trial.finish(TrialOutcome::StageTimeout { stage }, Some((&scene, &q, mounted)), t);
        }
        let servo = if ctx.stage == Stage::Done {
            Stage::FinalAlign
        } else {
            ctx.stage
        };
        let (noise, tool): (&NoiseLevel, &Pose) = match servo {
            Stage::Approach => (&config.scene.noise.approach, &model.camera),
            _ => (&config.scene.noise.final_align, &tip_tool),
        };
        let camera_pose = model.camera_pose(&q);

        // perceive
        let obs_index = (tick as f64 * obs_per_tick + 1e-9).floor() as u64;
        let mut raw: Option<RelativeTarget> = None;
        let mut truth: Option<RelativeTarget> = None;
        if last_obs != Some(obs_index) {
            last_obs = Some(obs_index);
            if let Ok(obs) = scene.observe_face(&camera_pose, noise) {
                let decoded = decode_face(&obs, &k, &mut gate);
                if decoded.valid() {
                    let true_face = true_decode(&scene, &camera_pose);
                    let warm = t - ctx.entry_time >= config.stats_warmup;
                    match stage_target(servo, &decoded, &swab, config) {
                        Ok(m) => raw = Some(m),
                        Err(e) => return trial.finish(TrialOutcome::Fault(e), None, t),
                    }
                    if warm {
                        truth = stage_target(servo, &true_face, &swab, config).ok();
                        let stats = if servo == Stage::Approach {
                            &mut trial.approach
                        } else {
                            &mut trial.final_align
                        };
                        stats.raw_nostril.push(&(decoded.nostril - true_face.nostril));
                    }
                }
            }
        }

        // filter update; a fresh filter starts at the first measurement of a stage
        if let Some(m) = &raw {
            filter = match filter {
                None => Some(UkfState::new(m.pose(), config.ukf.measurement, t)),
                Some(s) => match update(&s, &m.pose(), &config.ukf) {
                    Ok(s) => Some(s),
                    Err(e) => return trial.finish(TrialOutcome::Fault(e.to_string()), None, t),
                },
            };
        }
        let filtered = filter.map(|s| RelativeTarget::from_pose(&s.mean, target_stage(servo)));
        if let (Some(m), Some(f), Some(truth)) = (&raw, &filtered, &truth) {
            let stats = if servo == Stage::Approach {
                &mut trial.approach
            } else {
                &mut trial.final_align
            };
            if let (Ok(er), Ok(ef)) = (
                inverse_retract(&m.pose(), &truth.pose()),
                inverse_retract(&f.pose(), &truth.pose()),
            ) {
                stats.raw_target.push6(&er);
                stats.filtered_target.push6(&ef);
            }
        }

        // stage logic on the filtered error
        let stage_before = ctx.stage;
        if let Some(f) = &filtered {
            ctx = ctx.transition(f, t);
        }
        let mut row = LogRow {
            t,
            stage: servo.number(),
            raw: raw.map(|m| m.pose().to_vector()),
            filtered: filter.map(|s| s.mean.to_vector()),
            covariance_trace: filter.map(|s| s.covariance_trace()),
            twist: Twist::zero(),
            joint_velocities: JointConfig::zeros(),
            q,
        };
        if ctx.stage != stage_before {
            match ctx.stage {
                Stage::FinalAlign => filter = None,
                Stage::Done => settle_until = t + config.settle_time,
                _ => {}
            }
        }

        // control and integrate
        if let (Some(s), Some(f)) = (filter, filtered) {
            let command = match control(&model.chain, &q, tool, &f, &config.control) {
                Ok(c) => c,
                Err(e) => return trial.finish(TrialOutcome::Fault(e.to_string()), None, t),
            };
            let unclamped = q + command.joint_velocities * dt;
            let next = unclamped.zip_zip_map(&lo, &hi, |v, l, h| v.clamp(l, h));
            let mut twist = command.twist;
            let mut joint_velocities = command.joint_velocities;
            if next != unclamped {
                // a joint ran into its stop; the filter gets the motion that happened
                joint_velocities = (next - q) / dt;
                twist = Twist::from_vector(&(frame_jacobian(&model.chain, &q, tool) * joint_velocities));
            }
            q = next;
            filter = match propagate(&s, &twist, dt, &config.ukf) {
                Ok(s) => Some(s),
                Err(e) => return trial.finish(TrialOutcome::Fault(e.to_string()), None, t),
            };
            row.twist = twist;
            row.joint_velocities = joint_velocities;
        }
        trial.log.push(row);
        scene.advance(dt);
        tick += 1;
    }
}

/// Trials for every seed, in parallel, returned in seed order. `jobs`
/// caps the worker count; `None` uses the global pool.
pub fn run_batch(
    model: &RobotModel,
    table: &LutTable,
    config: &MissionConfig,
    seeds: &[u64],
    jobs: Option<usize>,
) -> Vec<TrialRun> {
    let work = || {
        seeds
            .par_iter()
            .map(|&seed| run_trial(model, table, config, seed))
            .collect()
    };
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map(|pool| pool.install(work))
            .unwrap_or_else(|_| work()),
        None => work(),
    }
}
