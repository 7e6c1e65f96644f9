//! Filter noisy pose measurements of a still target on SE(3).

use nalgebra::{Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use swabservo::manifold::{exp_so3, inverse_retract, retract, Pose, Twist};
use swabservo::ukfm::{step, UkfParams, UkfState};

fn std_dev(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn main() {
    let truth = Pose::new(Vector3::new(0.02, -0.01, 0.3), exp_so3(&Vector3::new(0.1, -0.05, 0.02)));
    let params = UkfParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sigma = Vector6::new(0.0082, 0.0082, 0.0082, 0.03, 0.03, 0.03);
    let mut state: Option<UkfState> = None;
    let (mut raw, mut filtered): (Vec<Vector6<f64>>, Vec<Vector6<f64>>) = (Vec::new(), Vec::new());

    // 100 Hz filter, a measurement every third tick
    for tick in 0..3000 {
        let measurement = (tick % 3 == 0).then(|| {
            let noise = Vector6::from_fn(|i, _| sigma[i] * rng.sample::<f64, _>(StandardNormal));
            retract(&truth, &noise)
        });
        state = Some(match (state, &measurement) {
            (None, Some(m)) => UkfState::new(*m, params.measurement, 0.0),
            (None, None) => continue,
            (Some(s), m) => step(&s, &Twist::zero(), 0.01, m.as_ref(), &params).expect("filter step"),
        });
        if let (Some(m), Some(s), true) = (&measurement, &state, tick >= 100) {
            raw.push(inverse_retract(m, &truth).unwrap());
            filtered.push(inverse_retract(&s.mean, &truth).unwrap());
        }
    }
    println!("axis   raw std    filtered std   ratio");
    for (axis, name) in ["px", "py", "pz", "rx", "ry", "rz"].iter().enumerate() {
        let r = std_dev(&raw.iter().map(|v| v[axis]).collect::<Vec<_>>());
        let f = std_dev(&filtered.iter().map(|v| v[axis]).collect::<Vec<_>>());
        println!("{name}     {r:.5}    {f:.5}        {:.3}", f / r);
    }
}
