mod common;

use nalgebra::{Vector3, Vector6};
use swabservo::kinematics::{JointConfig, RobotModel};
use swabservo::manifold::{exp_so3, rotation_angle, Pose};
use swabservo::mission::{run_batch, run_trial, run_trial_at, workspace_extension, MissionConfig, TrialOutcome};
use swabservo::pbvs::frame_jacobian;
use swabservo::ukfm::process;

use common::{central_placement, reference_table};

fn pose_of(v: &Vector6<f64>) -> Pose {
    Pose::new(v.fixed_rows::<3>(0).into(), exp_so3(&v.fixed_rows::<3>(3).into()))
}

#[test]
fn noiseless_central_trial_lands_on_the_nostril() {
    let model = RobotModel::reference();
    let table = reference_table();
    let run = run_trial_at(&model, table, &MissionConfig::noiseless(), 1, &central_placement(table));
    let r = &run.result;
    assert_eq!(r.outcome, TrialOutcome::Completed);
    assert!(r.reached_nostril);
    assert!(r.terminal_distance < 1e-3, "distance {}", r.terminal_distance);
    assert!(r.pitch_error_deg.abs() < 0.1, "pitch {}", r.pitch_error_deg);
    assert!(r.yaw_error_deg.abs() < 0.1, "yaw {}", r.yaw_error_deg);
    // stages appear in order and never regress
    let stages: Vec<u8> = run.log.iter().map(|row| row.stage).collect();
    assert_eq!(stages[0], 1);
    assert!(stages.windows(2).all(|w| w[0] <= w[1]));
    assert!(stages.contains(&2) && stages.contains(&3));
}

#[test]
fn placement_outside_the_grid_is_infeasible() {
    let model = RobotModel::reference();
    let table = reference_table();
    let mut placement = central_placement(table);
    placement.nostril_world = Vector3::new(-2.0, 0.0, 3.0);
    let run = run_trial_at(&model, table, &MissionConfig::paper(), 3, &placement);
    assert_eq!(run.result.outcome, TrialOutcome::LutInfeasible { cell: None });
    assert!(!run.result.reached_nostril);
}

#[test]
fn placement_on_an_empty_cell_is_infeasible() {
    let model = RobotModel::reference();
    let table = reference_table();
    let empty = table
        .entries
        .iter()
        .find(|e| !e.feasible())
        .expect("some cell is infeasible");
    let mut placement = central_placement(table);
    placement.nostril_world = table.config.start.cell_pose(empty.cell).position;
    let run = run_trial_at(&model, table, &MissionConfig::paper(), 3, &placement);
    assert_eq!(
        run.result.outcome,
        TrialOutcome::LutInfeasible { cell: Some(empty.cell) }
    );
}

#[test]
fn trials_are_deterministic() {
    let model = RobotModel::reference();
    let table = reference_table();
    let config = MissionConfig::paper();
    let a = run_trial(&model, table, &config, 11);
    let b = run_trial(&model, table, &config, 11);
    assert_eq!(a.result, b.result);
    assert_eq!(a.log, b.log);
    let c = run_trial(&model, table, &config, 12);
    assert_ne!(a.result.nostril_world, c.result.nostril_world);
}

#[test]
fn batch_matches_serial_runs_regardless_of_workers() {
    let model = RobotModel::reference();
    let table = reference_table();
    let config = MissionConfig::paper();
    let seeds = [4, 5, 6];
    let one = run_batch(&model, table, &config, &seeds, Some(1));
    let three = run_batch(&model, table, &config, &seeds, Some(3));
    for ((a, b), seed) in one.iter().zip(&three).zip(seeds) {
        assert_eq!(a.result, b.result);
        assert_eq!(a.result, run_trial(&model, table, &config, seed).result);
    }
}

#[test]
fn logged_commands_close_the_loop() {
    let model = RobotModel::reference();
    let table = reference_table();
    let run = run_trial(&model, table, &MissionConfig::paper(), 8);
    let dt = 0.01;
    let mut checked_filter = 0;
    for w in run.log.windows(2) {
        let (now, next) = (&w[0], &w[1]);
        // joints integrate the logged joint velocities
        let q_next: JointConfig = now.q + now.joint_velocities * dt;
        assert!((q_next - next.q).amax() < 1e-12);
        if now.stage == 2 {
            // logged twist is the one the joint motion realizes at the camera
            let j = frame_jacobian(&model.chain, &now.q, &model.camera);
            assert!((j * now.joint_velocities - now.twist.to_vector()).norm() < 1e-9);
        }
        // between measurements the filter mean follows the logged twist
        if let (Some(f0), Some(f1), None, true) = (now.filtered, next.filtered, next.raw, now.stage == next.stage) {
            let predicted = process(&pose_of(&f0), &now.twist, &Vector6::zeros(), dt);
            let actual = pose_of(&f1);
            assert!((predicted.position - actual.position).norm() < 1e-6);
            assert!(rotation_angle(&(predicted.rotation.inverse() * actual.rotation)) < 1e-6);
            checked_filter += 1;
        }
    }
    assert!(checked_filter > 100);
}

fn terminal_configuration() -> JointConfig {
    let model = RobotModel::reference();
    let table = reference_table();
    let run = run_trial_at(&model, table, &MissionConfig::noiseless(), 1, &central_placement(table));
    assert_eq!(run.result.outcome, TrialOutcome::Completed);
    run.log.last().unwrap().q
}

#[test]
fn extension_from_mid_workspace_reaches_175_mm() {
    let model = RobotModel::reference();
    let ext = workspace_extension(&model, &terminal_configuration(), 0.2, 0.30, 0.005);
    assert!(ext >= 0.175, "extension {ext}");
}

#[test]
fn extension_sweep_is_prefix_consistent() {
    let model = RobotModel::reference();
    let q = terminal_configuration();
    let full = workspace_extension(&model, &q, 0.2, 0.30, 0.005);
    for max in [0.0, 0.05, 0.1, 0.2] {
        let ext = workspace_extension(&model, &q, 0.2, max, 0.005);
        assert!((ext - full.min(max)).abs() < 1e-12, "max {max}: {ext} vs {full}");
    }
    assert_eq!(workspace_extension(&model, &q, 0.2, 0.30, 0.0), 0.0);
}

#[test]
fn wrist_jammed_against_the_motion_blocks_extension() {
    use swabservo::kinematics::pseudo_inverse;
    let model = RobotModel::reference();
    let lo = model.chain.lower_limits();
    let hi = model.chain.upper_limits();
    let tool = model.swab_tip_frame();
    // joint rates the forward motion asks for at q, in world axes
    let demand = |q: &JointConfig| {
        let (pose, j) = model.chain.tool_jacobian(q, &tool);
        let f = pose.rotation * Vector3::z();
        let d = Vector3::new(f.x, f.y, 0.0).normalize() * 0.2f64.cos() + Vector3::z() * 0.2f64.sin();
        pseudo_inverse(&j, 1e-6) * Vector6::new(d.x, d.y, d.z, 0.0, 0.0, 0.0)
    };
    // park a wrist joint on the limit the forward motion drives it into
    let base = terminal_configuration();
    let q = (4..7)
        .flat_map(|j| [(j, lo[j]), (j, hi[j])])
        .map(|(j, limit)| {
            let mut q = base;
            q[j] = limit;
            (j, q)
        })
        .find(|(j, q)| {
            let d = demand(q)[*j];
            (q[*j] == hi[*j] && d > 1e-3) || (q[*j] == lo[*j] && d < -1e-3)
        })
        .map(|(_, q)| q)
        .expect("a wrist joint can be jammed against the motion");
    let ext = workspace_extension(&model, &q, 0.2, 0.30, 0.005);
    assert!(ext < 0.13, "extension {ext}");
}
