mod common;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Matrix3x4, Matrix6, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use swabservo::kinematics::{IkSolver, JointConfig, RobotModel};
use swabservo::lut::{build_table, focus_tool, LutConfig, LutTable, IK_TOL};
use swabservo::manifold::{
    exp_so3, inverse_retract, minimal_rotation, nearest_rotation, rotation_angle, Pose, Rotation, Twist,
};
use swabservo::mission::{run_batch, score_outcomes, MissionConfig, EXTENSION_OK};
use swabservo::pbvs::{control, ControlParams};
use swabservo::perception::{
    decode_face, fit_swab, recover_rotation, relative_target_stage2, DecodedFacePose, OutlierGate, QualityFlags,
    RelativeTarget, TargetStage, CAMERA_STANDOFF, DESIRED_PITCH,
};
use swabservo::scene::{observe_swab, perturb_swab, FacePlacement, Nostril, Scene, SceneConfig, SwayConfig};
use swabservo::ukfm::{propagate, step, update, UkfParams, UkfState};

/// Runtime criteria are timed one at a time.
fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

/// Written straight to stderr so the line shows without `--nocapture`.
fn report(id: &str, pass: bool, detail: String) {
    let line = format!("{id} {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

/// Default table built fresh in this process, with its build time.
fn fresh_table() -> &'static (LutTable, Duration) {
    static TABLE: OnceLock<(LutTable, Duration)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let start = Instant::now();
        let table = build_table(&RobotModel::reference(), &LutConfig::default()).expect("default table builds");
        let elapsed = start.elapsed();
        common::store_table(&table);
        (table, elapsed)
    })
}

fn gaussian3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let g = gaussian3(rng);
        if g.norm() > 1e-6 {
            return g.normalize();
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    let q = nalgebra::Quaternion::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix()
}

#[test]
fn ac1_noiseless_convergence() {
    let _guard = serial();
    let model = RobotModel::reference();
    let (table, _) = fresh_table();
    // best-graded cell, well inside the workspace
    let mut q: JointConfig = table
        .entries
        .iter()
        .filter(|e| e.feasible())
        .max_by_key(|e| (e.reach, std::cmp::Reverse(e.cell)))
        .unwrap()
        .q;

    let params = ControlParams::default();
    let t0 = Vector3::new(1.0, -1.0, 0.5).normalize() * 0.1;
    let r0 = exp_so3(&(Vector3::new(0.3, 1.0, -0.6).normalize() * 20f64.to_radians()));
    let desired = model.camera_pose(&q).compose(&Pose::new(t0, r0));
    let error_at = |q: &JointConfig| {
        let rel = model.camera_pose(q).inverse().compose(&desired);
        (rel.position.norm(), rotation_angle(&rel.rotation))
    };

    let dt = 0.01;
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checkpoints = Vec::new();
    let mut final_error = (f64::NAN, f64::NAN);
    for tick in 0..=1400u32 {
        let t = tick as f64 * dt;
        let (e_t, e_r) = error_at(&q);
        if [100, 200, 400, 600].contains(&tick) {
            let expected = (-0.5 * t).exp();
            let rel_t = (e_t / 0.1 - expected).abs() / expected;
            let rel_r = (e_r / 20f64.to_radians() - expected).abs() / expected;
            worst = worst.max(rel_t).max(rel_r);
            checkpoints.push(format!(
                "t={t:.0}:{:.3}/{:.3}",
                e_t / 0.1 / expected,
                e_r / 20f64.to_radians() / expected
            ));
        }
        if tick == 1400 {
            final_error = (e_t, e_r);
            break;
        }
        let rel = model.camera_pose(&q).inverse().compose(&desired);
        let error = RelativeTarget::from_pose(&rel, TargetStage::Approach);
        let cmd = control(&model.chain, &q, &model.camera, &error, &params).expect("in limits");
        q += cmd.joint_velocities * dt;
    }
    let runtime = start.elapsed().as_secs_f64();
    let pass = worst <= 0.05 && final_error.0 < 1e-3 && final_error.1.to_degrees() < 0.1 && runtime < 5.0;
    report(
        "AC1",
        pass,
        format!(
            "worst decay deviation {:.2}% [{}], error at 14 s {:.4} mm / {:.4} deg, runtime {runtime:.3} s",
            worst * 100.0,
            checkpoints.join(" "),
            final_error.0 * 1e3,
            final_error.1.to_degrees()
        ),
    );
    assert!(pass);
}

/// Camera at the stage-2 goal for a still face, and the face frame itself.
fn standoff_camera(scene: &Scene) -> Pose {
    let face = scene.face_pose();
    let rotation = face.rotation * swabservo::manifold::rot_x(DESIRED_PITCH);
    Pose::new(
        scene.nostril_world() - rotation * Vector3::z() * CAMERA_STANDOFF,
        rotation,
    )
}

fn true_decode(scene: &Scene, camera: &Pose) -> DecodedFacePose {
    DecodedFacePose {
        rotation: camera.rotation.inverse() * scene.face_pose().rotation,
        nostril: camera.inverse().transform_point(&scene.nostril_world()),
        flags: QualityFlags::default(),
    }
}

fn axis_std(samples: &[nalgebra::Vector6<f64>], axis: usize) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s[axis]).sum::<f64>() / n;
    (samples.iter().map(|s| (s[axis] - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[test]
fn ac2_noise_attenuation() {
    let _guard = serial();
    let start = Instant::now();
    let scene_config = SceneConfig {
        sway: SwayConfig::STILL,
        ..SceneConfig::paper()
    };
    let noise = scene_config.noise.approach;
    let placement = FacePlacement {
        nostril_world: Vector3::new(0.58, 0.0, 1.45),
        yaw: 0.0,
        pitch: 0.0,
        nostril: Nostril::Right,
    };
    let mut scene = Scene::new(&scene_config, 7, 7, &placement).unwrap();
    let camera = standoff_camera(&scene);
    let truth = relative_target_stage2(&true_decode(&scene, &camera), CAMERA_STANDOFF, DESIRED_PITCH).pose();
    let k = scene.camera.k;
    let params = UkfParams::default();
    let mut gate = OutlierGate::default();

    // 100 Hz propagation with a 30 Hz camera, as in the mission loop
    let dt = 0.01;
    let frames = 1000;
    let warmup = 30;
    let mut filter: Option<UkfState> = None;
    let (mut raw, mut filtered) = (Vec::new(), Vec::new());
    let mut frame = 0;
    let mut tick: u64 = 0;
    while frame < frames {
        let due = (tick as f64 * 0.3 + 1e-9).floor() as u64;
        if tick == 0 || due != ((tick - 1) as f64 * 0.3 + 1e-9).floor() as u64 {
            let obs = scene.observe_face(&camera, &noise).unwrap();
            frame += 1;
            let decoded = decode_face(&obs, &k, &mut gate);
            if decoded.valid() {
                let m = relative_target_stage2(&decoded, CAMERA_STANDOFF, DESIRED_PITCH).pose();
                let next = match filter {
                    None => UkfState::new(m, params.measurement, 0.0),
                    Some(s) => update(&s, &m, &params).unwrap(),
                };
                if frame > warmup {
                    raw.push(inverse_retract(&m, &truth).unwrap());
                    filtered.push(inverse_retract(&next.mean, &truth).unwrap());
                }
                filter = Some(next);
            }
        }
        if let Some(s) = filter {
            filter = Some(propagate(&s, &Twist::zero(), dt, &params).unwrap());
        }
        scene.advance(dt);
        tick += 1;
    }
    let runtime = start.elapsed().as_secs_f64();
    let ratios: Vec<f64> = (0..6).map(|a| axis_std(&filtered, a) / axis_std(&raw, a)).collect();
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    let pass = worst <= 1.0 / 3.0 && runtime < 10.0;
    report(
        "AC2",
        pass,
        format!(
            "filtered/raw std per axis [{}] over {} valid frames (first {warmup} skipped), raw position std {:.2} mm, runtime {runtime:.2} s",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", "),
            raw.len(),
            axis_std(&raw, 0) * 1e3,
        ),
    );
    assert!(pass);
}

#[test]
fn ac3_linear_kalman_oracle() {
    let mut q = Matrix6::zeros();
    q.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * 0.01));
    let params = UkfParams {
        process: q,
        ..UkfParams::default()
    };
    let dt = 0.01;
    let r = params.measurement.fixed_view::<3, 3>(0, 0).into_owned();
    let mut s = UkfState::new(
        Pose::from_translation(Vector3::new(0.1, -0.05, 0.3)),
        Matrix6::identity() * 0.005,
        0.0,
    );
    let mut x = s.mean.position;
    let mut p = Matrix3::identity() * 0.005;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut worst_mean, mut worst_cov): (f64, f64) = (0.0, 0.0);
    for k in 0..500 {
        let v = Vector3::new(0.02 * (k as f64 * 0.03).sin(), -0.01, 0.005);
        let meas = (k % 3 == 0).then(|| Pose::from_translation(x + gaussian3(&mut rng) * 0.008));
        s = step(&s, &Twist::new(v, Vector3::zeros()), dt, meas.as_ref(), &params).unwrap();
        x -= v * dt;
        p += Matrix3::identity() * 0.01 * dt * dt;
        if let Some(m) = &meas {
            let gain = p * (p + r).try_inverse().unwrap();
            x += gain * (m.position - x);
            p = (Matrix3::identity() - gain) * p;
        }
        worst_mean = worst_mean.max((s.mean.position - x).amax());
        worst_cov = worst_cov.max((s.covariance.fixed_view::<3, 3>(0, 0) - p).amax());
        worst_mean = worst_mean.max(rotation_angle(&s.mean.rotation));
    }
    let pass = worst_mean < 1e-6 && worst_cov < 1e-6;
    report(
        "AC3",
        pass,
        format!("500 steps, max mean deviation {worst_mean:.2e}, max covariance deviation {worst_cov:.2e}"),
    );
    assert!(pass);
}

#[test]
fn ac4_minimal_rotation() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pairs: Vec<(Vector3<f64>, Vector3<f64>)> = std::iter::repeat_with(|| (unit(&mut rng), unit(&mut rng)))
        .filter(|(v, n)| v.dot(n) > -0.99)
        .take(100_000)
        .collect();
    let start = Instant::now();
    let (mut worst_map, mut worst_angle): (f64, f64) = (0.0, 0.0);
    for (v, n) in &pairs {
        let r = minimal_rotation(v, n).unwrap();
        worst_map = worst_map.max((r * v - n).amax());
        // arccos(v·n), evaluated stably
        let expected = v.cross(n).norm().atan2(v.dot(n));
        worst_angle = worst_angle.max((rotation_angle(&r) - expected).abs());
    }
    let runtime = start.elapsed().as_secs_f64();
    let pass = worst_map < 1e-9 && worst_angle < 1e-9 && runtime < 2.0;
    report(
        "AC4",
        pass,
        format!(
            "{} pairs, max |Rv - n| {worst_map:.2e}, max angle error {worst_angle:.2e}, runtime {runtime:.3} s",
            pairs.len()
        ),
    );
    assert!(pass);
}

/// Best rotation found by random search followed by shrinking random steps.
fn stochastic_nearest(m: &Matrix3<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let dist = |r: &Rotation| (r.matrix() - m).norm();
    let mut best = Rotation::identity();
    let mut best_d = dist(&best);
    for _ in 0..2000 {
        let r = random_rotation(rng);
        let d = dist(&r);
        if d < best_d {
            best = r;
            best_d = d;
        }
    }
    let mut scale = 0.3;
    while scale > 1e-9 {
        let mut improved = false;
        for _ in 0..40 {
            let r = best * Rotation3::new(gaussian3(rng) * scale);
            let d = dist(&r);
            if d < best_d {
                best = r;
                best_d = d;
                improved = true;
            }
        }
        if !improved {
            scale *= 0.5;
        }
    }
    best_d
}

#[test]
fn ac5_nearest_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_gap, mut worst_det) = (f64::NEG_INFINITY, 0.0f64);
    for _ in 0..100 {
        let m = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let r = nearest_rotation(&m).unwrap();
        let oracle = stochastic_nearest(&m, &mut rng);
        worst_gap = worst_gap.max((r.matrix() - m).norm() - oracle);
        worst_det = worst_det.max((r.matrix().determinant() - 1.0).abs());
    }
    let pass = worst_gap <= 1e-6 && worst_det < 1e-9;
    report(
        "AC5",
        pass,
        format!("100 matrices, max (distance - oracle) {worst_gap:.2e}, max |det - 1| {worst_det:.2e}"),
    );
    assert!(pass);
}

#[test]
fn ac6_off_axis_compensation() {
    let (mut worst_comp, mut worst_raw): (f64, f64) = (0.0, 0.0);
    let mut cases = 0;
    for x in [-0.12, -0.05, 0.0, 0.04, 0.1] {
        for y in [-0.09, 0.0, 0.03, 0.08] {
            for z in [0.25, 0.4, 0.7] {
                let p = Vector3::<f64>::new(x, y, z);
                let offsets = Vector3::new(p.y.atan2(p.z), p.x.atan2(p.z), 0.0);
                // world-parallel face seen at p: the weak projection reports it turned
                let apparent = Rotation3::new(offsets).into_inner() * (600.0 / z);
                let mut proj = Matrix3x4::zeros();
                proj.fixed_view_mut::<3, 3>(0, 0).copy_from(&apparent);
                proj.fixed_view_mut::<3, 1>(0, 3).copy_from(&(p * (600.0 / z)));
                let compensated = recover_rotation(&proj, &p).unwrap();
                worst_comp = worst_comp.max(rotation_angle(&compensated));
                let raw = nearest_rotation(&apparent).unwrap();
                let decoded = swabservo::manifold::log_so3(&raw);
                worst_raw = worst_raw.max((decoded - offsets).amax());
                cases += 1;
            }
        }
    }
    let pass = worst_comp < 1e-6 && worst_raw < 1e-6;
    report(
        "AC6",
        pass,
        format!("{cases} offsets, compensated error {worst_comp:.2e} rad, uncompensated vs atan2 offsets {worst_raw:.2e} rad"),
    );
    assert!(pass);
}

#[test]
fn ac7_swab_fit() {
    let model = RobotModel::reference();
    let camera = SceneConfig::paper().camera_model().unwrap();
    let nominal = (model.swab_tip_in_camera(), model.swab_shaft_in_camera());
    let exact = fit_swab(&observe_swab(&camera, nominal, nominal).unwrap(), &camera.k).unwrap();
    let exact_err = (exact.tip - nominal.0).amax().max((exact.shaft - nominal.1).amax());

    let params = SceneConfig::paper().swab;
    let nominal_mid = (nominal.0 + nominal.1) * 0.5;
    let nominal_dir = (nominal.0 - nominal.1).normalize();
    let (mut offset_sum, mut tilt_sum) = (0.0, 0.0);
    let (mut fit_err_sum, mut fit_offset_sum, mut fit_tilt_sum) = (0.0, 0.0, 0.0);
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mounted = perturb_swab(&nominal.0, &nominal.1, &params, &mut rng);
        let fit = fit_swab(&observe_swab(&camera, nominal, mounted).unwrap(), &camera.k).unwrap();
        let mid = (mounted.0 + mounted.1) * 0.5 - nominal_mid;
        offset_sum += (mid - nominal_dir * nominal_dir.dot(&mid)).norm();
        let dir = (mounted.0 - mounted.1).normalize();
        tilt_sum += dir.cross(&nominal_dir).norm().atan2(dir.dot(&nominal_dir)).to_degrees();
        fit_err_sum += (fit.tip - mounted.0).norm();
        let fit_mid = (fit.tip + fit.shaft) * 0.5 - nominal_mid;
        fit_offset_sum += (fit_mid - nominal_dir * nominal_dir.dot(&fit_mid)).norm();
        fit_tilt_sum += fit
            .direction
            .cross(&nominal_dir)
            .norm()
            .atan2(fit.direction.dot(&nominal_dir))
            .to_degrees();
    }
    let offset_mean = offset_sum / 1000.0;
    let tilt_mean = tilt_sum / 1000.0;
    // mean of |N(μ, σ)| by quadrature
    let folded = |mu: f64, sigma: f64| {
        let (lo, hi, n) = (mu - 10.0 * sigma, mu + 10.0 * sigma, 20_000);
        let h = (hi - lo) / n as f64;
        (0..=n)
            .map(|i| {
                let x = lo + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * x.abs() * (-0.5 * ((x - mu) / sigma).powi(2)).exp()
            })
            .sum::<f64>()
            * h
            / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    };
    let offset_expected = folded(params.position_mean, params.position_std);
    let tilt_expected = folded(params.angle_mean_deg, params.angle_std_deg);
    let offset_dev = (offset_mean / offset_expected - 1.0).abs();
    let tilt_dev = (tilt_mean / tilt_expected - 1.0).abs();
    let fit_offset_dev = (fit_offset_sum / 1000.0 / offset_expected - 1.0).abs();
    let fit_tilt_dev = (fit_tilt_sum / 1000.0 / tilt_expected - 1.0).abs();
    let pass = exact_err < 1e-9 && offset_dev.max(tilt_dev).max(fit_offset_dev).max(fit_tilt_dev) <= 0.1;
    report(
        "AC7",
        pass,
        format!(
            "zero-perturbation error {exact_err:.2e} m, mean offset {:.2} mm (generator {:.2}), mean tilt {tilt_mean:.2} deg (generator {tilt_expected:.2}), fitted offset {:.2} mm, fitted tilt {:.2} deg, mean fitted tip error {:.2} mm",
            offset_mean * 1e3,
            offset_expected * 1e3,
            fit_offset_sum / 1000.0 * 1e3,
            fit_tilt_sum / 1000.0,
            fit_err_sum / 1000.0 * 1e3
        ),
    );
    assert!(pass);
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn ac8_lookup_table() {
    let _guard = serial();
    let (table, build_time) = fresh_table();
    let model = RobotModel::reference();
    let ik = IkSolver {
        tol: IK_TOL,
        ..IkSolver::default()
    }
    .with_tool(focus_tool(&model, table.config.focus_distance));
    let feasible: Vec<_> = table.entries.iter().filter(|e| e.feasible()).collect();
    let replay_failures = feasible
        .iter()
        .filter(|e| ik.solve(&model.chain, &model.geometry, &e.q, &e.pose).is_err())
        .count();

    let spec = &table.config.start;
    let [n_phi, _, n_z] = spec.resolution;
    let (mut central, mut fringe) = (Vec::new(), Vec::new());
    for e in &table.entries {
        let (i_phi, _, i_z) = spec.cell_coords(e.cell);
        let edge = |i: usize, n: usize| i == 0 || i + 1 == n;
        let inner = |i: usize, n: usize| 4 * i >= n && 4 * i < 3 * n;
        if edge(i_phi, n_phi) || edge(i_z, n_z) {
            fringe.push(e.reach as f64);
        } else if inner(i_phi, n_phi) && inner(i_z, n_z) {
            central.push(e.reach as f64);
        }
    }
    let (central_median, fringe_median) = (median(central), median(fringe));

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let points: Vec<Vector3<f64>> = (0..1000)
        .map(|_| {
            let phi = rng.random_range(spec.phi_min..spec.phi_max);
            let r = rng.random_range(spec.r_min..spec.r_max);
            Vector3::new(r * phi.cos(), r * phi.sin(), rng.random_range(spec.z_min..spec.z_max))
        })
        .collect();
    let start = Instant::now();
    let mut hits = 0usize;
    for p in &points {
        hits += table.query(p).is_ok() as usize;
    }
    let per_query = start.elapsed().as_secs_f64() / points.len() as f64;

    let build = build_time.as_secs_f64();
    let pass = build < 600.0 && replay_failures == 0 && central_median > fringe_median && per_query < 1e-3;
    report(
        "AC8",
        pass,
        format!(
            "build {build:.1} s, {} feasible cells, {replay_failures} replay failures, median N central {central_median} vs fringe {fringe_median}, query {:.2} us ({hits} feasible hits)",
            feasible.len(),
            per_query * 1e6
        ),
    );
    assert!(pass);
}

fn paper_batch() -> &'static swabservo::mission::BatchSummary {
    static SUMMARY: OnceLock<swabservo::mission::BatchSummary> = OnceLock::new();
    SUMMARY.get_or_init(|| {
        let (table, _) = fresh_table();
        let seeds: Vec<u64> = (0..100).collect();
        let runs = run_batch(&RobotModel::reference(), table, &MissionConfig::paper(), &seeds, None);
        let results: Vec<_> = runs.into_iter().map(|r| r.result).collect();
        score_outcomes(&results)
    })
}

#[test]
fn ac9_workspace_extension() {
    let _guard = serial();
    let s = paper_batch();
    let pass = s.extension_ok_fraction >= 0.95 && s.extension_median >= 0.175;
    report(
        "AC9",
        pass,
        format!(
            "{} terminal configurations, {:.1}% reach {:.0} mm, median extension {:.0} mm",
            s.completed,
            s.extension_ok_fraction * 100.0,
            EXTENSION_OK * 1e3,
            s.extension_median * 1e3
        ),
    );
    assert!(pass);
}

#[test]
fn ac10_success_floor() {
    let _guard = serial();
    let s = paper_batch();
    let pass = s.success_rate >= 0.84;
    report(
        "AC10",
        pass,
        format!(
            "{}/{} reached the nostril within 5 mm ({} completed, {} timeouts, {} infeasible, {} faults)",
            s.reached, s.trials, s.completed, s.timeouts, s.infeasible, s.faults
        ),
    );
    assert!(pass);
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn ac11_determinism() {
    let _guard = serial();
    let work = tempfile::tempdir().unwrap();
    let table_path = work.path().join("table.lut");
    swabservo::lut::write_table(&fresh_table().0, fs::File::create(&table_path).unwrap()).unwrap();
    let table = table_path.to_str().unwrap();
    let mut outputs = Vec::new();
    for round in ["a", "b"] {
        let out = work.path().join(round);
        fs::create_dir_all(&out).unwrap();
        let o = out.to_str().unwrap();
        let commands: Vec<Vec<String>> = vec![
            vec![
                "lut",
                "build",
                "--out",
                &format!("{o}/small.lut"),
                "--res",
                "3,1,3",
                "--candidates",
                "8",
                "--seed",
                "3",
            ],
            vec![
                "lut",
                "export-csv",
                "--table",
                table,
                "--out",
                &format!("{o}/table.csv"),
                "--plot",
                &format!("{o}/table.svg"),
            ],
            vec!["trial", "run", "--table", table, "--seed", "17", "--out", o, "--plot"],
            vec![
                "batch", "run", "--table", table, "--trials", "6", "--seed", "40", "--jobs", "2", "--out", o,
            ],
            vec![
                "workspace",
                "analyze",
                "--table",
                table,
                "--trials",
                "4",
                "--seed",
                "9",
                "--out",
                o,
            ],
        ]
        .into_iter()
        .map(|c| c.into_iter().map(String::from).collect())
        .collect();
        for c in &commands {
            let r = swabservo::cli::run(std::iter::once("swabservo".to_string()).chain(c.iter().cloned()));
            assert!(r.is_ok(), "{c:?}: {r:?}");
        }
        outputs.push(read_dir_sorted(&out));
    }
    let names: Vec<&String> = outputs[0].iter().map(|f| &f.0).collect();
    let differing: Vec<&String> = outputs[0]
        .iter()
        .zip(&outputs[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| &a.0)
        .collect();
    let pass = outputs[0].len() == outputs[1].len() && differing.is_empty() && !names.is_empty();
    report(
        "AC11",
        pass,
        format!(
            "{} files from 5 commands compared across two runs, {} differ {:?}",
            names.len(),
            differing.len(),
            differing
        ),
    );
    assert!(pass);
}
