//! Fit the mounted swab from its keypoint pixels over many mounting errors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swabservo::kinematics::RobotModel;
use swabservo::perception::fit_swab;
use swabservo::scene::{observe_swab, perturb_swab, SceneConfig};

fn main() {
    let model = RobotModel::reference();
    let config = SceneConfig::paper();
    let camera = config.camera_model().expect("valid camera");
    let nominal = (model.swab_tip_in_camera(), model.swab_shaft_in_camera());
    println!("nominal tip {:?}, shaft {:?} (camera frame)", nominal.0, nominal.1);

    let trials = 1000;
    let (mut schematic_err, mut fit_err, mut worst) = (0.0, 0.0, 0.0f64);
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mounted = perturb_swab(&nominal.0, &nominal.1, &config.swab, &mut rng);
        let fit =
            fit_swab(&observe_swab(&camera, nominal, mounted).expect("in view"), &camera.k).expect("well conditioned");
        schematic_err += (nominal.0 - mounted.0).norm();
        let e = (fit.tip - mounted.0).norm();
        fit_err += e;
        worst = worst.max(e);
    }
    println!(
        "mean tip error using the schematic: {:.2} mm",
        schematic_err / trials as f64 * 1e3
    );
    println!(
        "mean tip error after the ray fit:   {:.2} mm (worst {:.2} mm)",
        fit_err / trials as f64 * 1e3,
        worst * 1e3
    );
}
