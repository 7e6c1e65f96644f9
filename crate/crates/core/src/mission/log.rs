use std::io::Write;

use nalgebra::Vector6;

use super::Stage;
use crate::kinematics::JointConfig;
use crate::manifold::Twist;

/// One control tick. Poses are `(p, log R)` of the relative target.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub stage: u8,
    pub raw: Option<Vector6<f64>>,
    pub filtered: Option<Vector6<f64>>,
    pub covariance_trace: Option<f64>,
    /// Twist commanded to the servoed frame and fed to the filter.
    pub twist: Twist,
    pub joint_velocities: JointConfig,
    pub q: JointConfig,
}

impl LogRow {
    pub(crate) fn idle(t: f64, stage: Stage, q: JointConfig) -> Self {
        Self {
            t,
            stage: stage.number(),
            raw: None,
            filtered: None,
            covariance_trace: None,
            twist: Twist::zero(),
            joint_velocities: JointConfig::zeros(),
            q,
        }
    }
}

const POSE_COLS: [&str; 6] = ["px", "py", "pz", "rx", "ry", "rz"];

pub static LOG_HEADER: std::sync::LazyLock<Vec<String>> = std::sync::LazyLock::new(|| {
    let mut h = vec!["t".to_string(), "stage".to_string()];
    h.extend(POSE_COLS.iter().map(|c| format!("raw_{c}")));
    h.extend(POSE_COLS.iter().map(|c| format!("filt_{c}")));
    h.push("cov_trace".into());
    h.extend(["vx", "vy", "vz", "wx", "wy", "wz"].iter().map(|c| format!("vc_{c}")));
    h.extend((1..=7).map(|i| format!("vq{i}")));
    h.extend((1..=7).map(|i| format!("q{i}")));
    h
});

fn num(v: f64) -> String {
    format!("{v:.9}")
}

pub fn write_log_csv<W: Write>(rows: &[LogRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LOG_HEADER.iter())?;
    let blank6 = || std::iter::repeat_n(String::new(), 6);
    for r in rows {
        let mut rec: Vec<String> = vec![format!("{:.4}", r.t), r.stage.to_string()];
        match &r.raw {
            Some(v) => rec.extend(v.iter().map(|x| num(*x))),
            None => rec.extend(blank6()),
        }
        match &r.filtered {
            Some(v) => rec.extend(v.iter().map(|x| num(*x))),
            None => rec.extend(blank6()),
        }
        rec.push(r.covariance_trace.map(num).unwrap_or_default());
        rec.extend(r.twist.to_vector().iter().map(|x| num(*x)));
        rec.extend(r.joint_velocities.iter().map(|x| num(*x)));
        rec.extend(r.q.iter().map(|x| num(*x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
