//! Rotations and poses: exp/log, retraction, minimal and nearest rotations.

use nalgebra::{Matrix3, Vector3, Vector6};
use swabservo::manifold::{
    exp_so3, inverse_retract, log_so3, minimal_rotation, nearest_rotation, retract, rotation_angle, Pose,
};

fn main() {
    let w = Vector3::new(0.3, -0.2, 0.9);
    let r = exp_so3(&w);
    println!("exp/log round trip: {:?} -> {:?}", w, log_so3(&r));
    println!("rotation angle {:.6} rad (|w| = {:.6})", rotation_angle(&r), w.norm());

    let x = Pose::new(Vector3::new(0.1, 0.0, 0.4), r);
    let xi = Vector6::new(0.01, -0.02, 0.0, 0.05, 0.0, -0.03);
    let moved = retract(&x, &xi);
    let back = inverse_retract(&moved, &x).expect("small perturbation");
    println!("retract then inverse-retract recovers xi: {:.2e}", (back - xi).norm());

    let v = Vector3::new(0.2, -0.1, 1.0).normalize();
    let n = Vector3::z();
    let m = minimal_rotation(&v, &n).expect("not antiparallel");
    println!(
        "minimal rotation taking v onto n: angle {:.4} rad, residual {:.1e}",
        rotation_angle(&m),
        (m * v - n).norm()
    );

    let noisy = r.into_inner() + Matrix3::new(0.05, -0.02, 0.0, 0.01, 0.03, -0.04, 0.0, 0.02, -0.01);
    let fixed = nearest_rotation(&noisy).expect("full rank");
    println!(
        "nearest rotation: det {:.12}, Frobenius distance {:.4}",
        fixed.matrix().determinant(),
        (fixed.matrix() - noisy).norm()
    );
}
