//! Forward kinematics of the reference arm and a pseudo-inverse IK solve.

use nalgebra::Vector3;
use swabservo::kinematics::{IkSolver, RobotModel};
use swabservo::manifold::{rot_x, Pose};

fn main() {
    let model = RobotModel::reference();
    let home = model.home;
    let camera = model.camera_pose(&home);
    println!("home q: {:?}", home.as_slice());
    println!("camera at home: {:?}", camera.position);

    // move the camera 8 cm forward along its optical axis and tilt it slightly
    let target = camera.compose(&Pose::new(Vector3::new(0.0, 0.0, 0.08), rot_x(0.1)));
    let solver = IkSolver::default().with_tool(model.camera);
    match solver.solve(&model.chain, &model.geometry, &home, &target) {
        Ok(sol) => {
            println!(
                "IK converged in {} iterations, residual {:.2e}",
                sol.iterations, sol.residual
            );
            println!("solution q: {:?}", sol.q.as_slice());
            let reached = model.camera_pose(&sol.q);
            println!("position error {:.2e} m", (reached.position - target.position).norm());
        }
        Err(e) => println!("IK failed: {e:?}"),
    }

    let (_, j) = model.chain.tool_jacobian(&home, &model.camera);
    println!(
        "camera Jacobian at home, smallest singular value {:.4}",
        swabservo::kinematics::min_singular_value(&j)
    );
}
