use std::fmt;
use std::io::Write;

use nalgebra::{Vector3, Vector6};

use super::{TrialOutcome, TrialResult};

/// Running per-axis mean and variance (Welford), up to six axes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AxisStats {
    pub count: usize,
    mean: [f64; 6],
    m2: [f64; 6],
}

impl AxisStats {
    fn push_slice(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for (i, &v) in x.iter().enumerate() {
            let d = v - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (v - self.mean[i]);
        }
    }

    pub fn push(&mut self, x: &Vector3<f64>) {
        self.push_slice(x.as_slice());
    }

    pub fn push6(&mut self, x: &Vector6<f64>) {
        self.push_slice(x.as_slice());
    }

    pub fn mean(&self, axis: usize) -> f64 {
        self.mean[axis]
    }

    /// Sample standard deviation of one axis.
    pub fn std(&self, axis: usize) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        (self.m2[axis] / (self.count - 1) as f64).sqrt()
    }

    /// Root mean of the variances of the first three axes.
    pub fn position_std(&self) -> f64 {
        ((0..3).map(|i| self.std(i).powi(2)).sum::<f64>() / 3.0).sqrt()
    }
}

/// Noise statistics of one servo stage, collected on observation ticks
/// after the stage's warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageStats {
    /// Decoded minus true nostril position (camera frame).
    pub raw_nostril: AxisStats,
    /// Raw measured relative target minus the true one, in the filter chart.
    pub raw_target: AxisStats,
    /// Filtered relative target minus the true one.
    pub filtered_target: AxisStats,
}

impl StageStats {
    pub fn raw_position_std(&self) -> f64 {
        self.raw_nostril.position_std()
    }

    /// Raw over filtered translation error spread.
    pub fn attenuation(&self) -> f64 {
        self.raw_target.position_std() / self.filtered_target.position_std()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub trials: usize,
    pub reached: usize,
    pub success_rate: f64,
    pub completed: usize,
    pub infeasible: usize,
    pub timeouts: usize,
    pub faults: usize,
    pub pitch_error_mean: f64,
    pub pitch_error_std: f64,
    pub yaw_error_mean: f64,
    pub yaw_error_std: f64,
    pub terminal_distance_mean: f64,
    pub extension_median: f64,
    /// Completed trials with at least 130 mm of extension.
    pub extension_ok_fraction: f64,
    /// Extension counts in 25 mm bins over [0, 300] mm (last bin closed).
    pub extension_histogram: Vec<usize>,
    pub approach_raw_position_std: f64,
    pub final_raw_position_std: f64,
    pub approach_attenuation: f64,
    pub final_attenuation: f64,
}

pub const EXTENSION_OK: f64 = 0.130;
const HIST_BIN: f64 = 0.025;
const HIST_BINS: usize = 12;

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation, so repeated identical values give 0.
fn std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Aggregate statistics over trial results. Angle and extension figures
/// cover completed trials; noise figures cover every trial with samples.
pub fn score_outcomes(results: &[TrialResult]) -> BatchSummary {
    let completed: Vec<&TrialResult> = results
        .iter()
        .filter(|r| r.outcome == TrialOutcome::Completed)
        .collect();
    let collect = |f: &dyn Fn(&TrialResult) -> f64| completed.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let pitch = collect(&|r| r.pitch_error_deg);
    let yaw = collect(&|r| r.yaw_error_deg);
    let dist = collect(&|r| r.terminal_distance);
    let ext = collect(&|r| r.extension);
    let noise =
        |f: &dyn Fn(&TrialResult) -> f64| mean(&results.iter().map(f).filter(|v| v.is_finite()).collect::<Vec<f64>>());
    let mut hist = vec![0; HIST_BINS];
    for e in &ext {
        hist[((e / HIST_BIN + 1e-9) as usize).min(HIST_BINS - 1)] += 1;
    }
    let reached = results.iter().filter(|r| r.reached_nostril).count();
    let count = |label: &str| results.iter().filter(|r| r.outcome.label() == label).count();
    BatchSummary {
        trials: results.len(),
        reached,
        success_rate: reached as f64 / results.len().max(1) as f64,
        completed: completed.len(),
        infeasible: count("lut_infeasible"),
        timeouts: count("stage_timeout"),
        faults: count("fault"),
        pitch_error_mean: mean(&pitch),
        pitch_error_std: std(&pitch),
        yaw_error_mean: mean(&yaw),
        yaw_error_std: std(&yaw),
        terminal_distance_mean: mean(&dist),
        extension_median: median(&ext),
        extension_ok_fraction: if ext.is_empty() {
            f64::NAN
        } else {
            ext.iter().filter(|&&e| e >= EXTENSION_OK - 1e-9).count() as f64 / ext.len() as f64
        },
        extension_histogram: hist,
        approach_raw_position_std: noise(&|r| r.approach.raw_position_std()),
        final_raw_position_std: noise(&|r| r.final_align.raw_position_std()),
        approach_attenuation: noise(&|r| r.approach.attenuation()),
        final_attenuation: noise(&|r| r.final_align.attenuation()),
    }
}

impl BatchSummary {
    fn fields(&self) -> Vec<(&'static str, String)> {
        let f = |v: f64| format!("{v:.6}");
        let mut out = vec![
            ("trials", self.trials.to_string()),
            ("reached", self.reached.to_string()),
            ("success_rate", f(self.success_rate)),
            ("completed", self.completed.to_string()),
            ("lut_infeasible", self.infeasible.to_string()),
            ("stage_timeout", self.timeouts.to_string()),
            ("fault", self.faults.to_string()),
            ("pitch_error_mean_deg", f(self.pitch_error_mean)),
            ("pitch_error_std_deg", f(self.pitch_error_std)),
            ("yaw_error_mean_deg", f(self.yaw_error_mean)),
            ("yaw_error_std_deg", f(self.yaw_error_std)),
            ("terminal_distance_mean_m", f(self.terminal_distance_mean)),
            ("extension_median_m", f(self.extension_median)),
            ("extension_ge_130mm", f(self.extension_ok_fraction)),
            ("approach_raw_position_std_m", f(self.approach_raw_position_std)),
            ("final_raw_position_std_m", f(self.final_raw_position_std)),
            ("approach_attenuation", f(self.approach_attenuation)),
            ("final_attenuation", f(self.final_attenuation)),
        ];
        const BIN_NAMES: [&str; HIST_BINS] = [
            "ext_000_025",
            "ext_025_050",
            "ext_050_075",
            "ext_075_100",
            "ext_100_125",
            "ext_125_150",
            "ext_150_175",
            "ext_175_200",
            "ext_200_225",
            "ext_225_250",
            "ext_250_275",
            "ext_275_300",
        ];
        out.extend(
            BIN_NAMES
                .iter()
                .zip(&self.extension_histogram)
                .map(|(n, c)| (*n, c.to_string())),
        );
        out
    }
}

/// One header row and one value row.
pub fn write_summary_csv<W: Write>(summary: &BatchSummary, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let fields = summary.fields();
    w.write_record(fields.iter().map(|(k, _)| *k))?;
    w.write_record(fields.iter().map(|(_, v)| v.as_str()))?;
    w.flush()?;
    Ok(())
}

/// One row per trial.
pub fn write_results_csv<W: Write>(results: &[TrialResult], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seed",
        "outcome",
        "detail",
        "reached",
        "terminal_distance_m",
        "pitch_error_deg",
        "yaw_error_deg",
        "duration_s",
        "extension_m",
        "nostril_x",
        "nostril_y",
        "nostril_z",
        "approach_raw_position_std_m",
        "approach_attenuation",
        "final_raw_position_std_m",
        "final_attenuation",
    ])?;
    let f = |v: f64| format!("{v:.6}");
    for r in results {
        let detail = match &r.outcome {
            TrialOutcome::LutInfeasible { cell: Some(c) } => format!("cell {c}"),
            TrialOutcome::LutInfeasible { cell: None } => "outside grid".into(),
            TrialOutcome::StageTimeout { stage } => format!("stage {stage}"),
            TrialOutcome::Fault(m) => m.clone(),
            TrialOutcome::Completed => String::new(),
        };
        w.write_record([
            r.seed.to_string(),
            r.outcome.label().to_string(),
            detail,
            r.reached_nostril.to_string(),
            f(r.terminal_distance),
            f(r.pitch_error_deg),
            f(r.yaw_error_deg),
            format!("{:.2}", r.duration),
            format!("{:.3}", r.extension),
            f(r.nostril_world.x),
            f(r.nostril_world.y),
            f(r.nostril_world.z),
            f(r.approach.raw_position_std()),
            f(r.approach.attenuation()),
            f(r.final_align.raw_position_std()),
            f(r.final_align.attenuation()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

impl fmt::Display for BatchSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.fields() {
            writeln!(f, "{k:<30} {v}")?;
        }
        Ok(())
    }
}
