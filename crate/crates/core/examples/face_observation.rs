//! Observe a synthetic face and decode its pose, with and without the
//! off-axis correction.

use nalgebra::Vector3;
use swabservo::manifold::{nearest_rotation, rot_x, rotation_angle, Pose};
use swabservo::perception::{decode_face, OutlierGate, CAMERA_STANDOFF, DESIRED_PITCH};
use swabservo::scene::{FacePlacement, NoiseLevel, Nostril, Scene, SceneConfig};

fn main() {
    let config = SceneConfig::noiseless();
    let placement = FacePlacement {
        nostril_world: Vector3::new(0.58, 0.1, 1.42),
        yaw: 0.05,
        pitch: -0.03,
        nostril: Nostril::Left,
    };
    let mut scene = Scene::new(&config, 3, 3, &placement).expect("valid placement");
    let face = scene.face_pose();

    // camera looking at the nostril from the standoff, then shifted sideways
    let base = face.rotation * rot_x(DESIRED_PITCH);
    let on_axis = Pose::new(scene.nostril_world() - base * Vector3::z() * CAMERA_STANDOFF, base);
    let off_axis = Pose::new(on_axis.position + base * Vector3::new(0.06, -0.04, 0.0), base);

    for (label, camera) in [("on axis", on_axis), ("off axis", off_axis)] {
        let obs = scene.observe_face(&camera, &NoiseLevel::ZERO).expect("face in view");
        let decoded = decode_face(&obs, &scene.camera.k, &mut OutlierGate::default());
        let truth = camera.rotation.inverse() * face.rotation;
        let block = obs.p_measured.fixed_view::<3, 3>(0, 0).into_owned();
        let uncorrected = nearest_rotation(&block).expect("full rank");
        println!(
            "{label}: rotation error corrected {:.2e} rad, uncorrected {:.4} rad, nostril error {:.2e} m",
            rotation_angle(&(truth.inverse() * decoded.rotation)),
            rotation_angle(&(truth.inverse() * uncorrected)),
            (decoded.nostril - camera.inverse().transform_point(&scene.nostril_world())).norm()
        );
    }

    let noisy = SceneConfig::paper().noise.approach;
    let obs = scene.observe_face(&on_axis, &noisy).expect("face in view");
    println!(
        "noisy frame: nostril pixel {:?}, depth {:?}, valid {}",
        obs.nostril_pixel, obs.depth, obs.valid
    );
}
