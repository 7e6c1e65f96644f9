//! Closed-loop pose-based servo on the reference arm with exact pose error.

use nalgebra::Vector3;
use swabservo::kinematics::RobotModel;
use swabservo::manifold::{exp_so3, rotation_angle, Pose};
use swabservo::pbvs::{control, ControlParams};
use swabservo::perception::{RelativeTarget, TargetStage};

fn main() {
    let model = RobotModel::reference();
    let params = ControlParams::default();
    let mut q = model.home;
    let goal = model.camera_pose(&q).compose(&Pose::new(
        Vector3::new(0.06, -0.05, 0.05),
        exp_so3(&(Vector3::new(0.2, 1.0, -0.4).normalize() * 20f64.to_radians())),
    ));
    let dt = 0.01;
    println!("   t    translation (mm)   rotation (deg)   e^(-0.5t)");
    for tick in 0..=1400 {
        let rel = model.camera_pose(&q).inverse().compose(&goal);
        if tick % 100 == 0 {
            let t = tick as f64 * dt;
            println!(
                "{t:5.1}   {:12.4}   {:14.4}   {:9.4}",
                rel.position.norm() * 1e3,
                rotation_angle(&rel.rotation).to_degrees(),
                (-0.5 * t).exp()
            );
        }
        let error = RelativeTarget::from_pose(&rel, TargetStage::Approach);
        let command = control(&model.chain, &q, &model.camera, &error, &params).expect("joints in limits");
        q += command.joint_velocities * dt;
    }
}
