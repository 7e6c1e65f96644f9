//! Seeded Monte Carlo batch with calibrated noise, scored in aggregate.
//!
//! `cargo run --release --example monte_carlo_batch [table.lut] [trials]`

use std::fs::File;
use std::io::BufReader;

use swabservo::kinematics::RobotModel;
use swabservo::lut::{build_table, read_table, LutConfig};
use swabservo::mission::{run_batch, score_outcomes, write_summary_csv, MissionConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let model = RobotModel::reference();
    let table = match args.first() {
        Some(p) => read_table(BufReader::new(File::open(p).expect("table file opens"))).expect("valid table"),
        None => {
            eprintln!("building the default table...");
            build_table(&model, &LutConfig::default()).expect("default config is valid")
        }
    };
    let trials: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let seeds: Vec<u64> = (0..trials).collect();

    let runs = run_batch(&model, &table, &MissionConfig::paper(), &seeds, None);
    let results: Vec<_> = runs.into_iter().map(|r| r.result).collect();
    let s = score_outcomes(&results);
    println!(
        "{}/{} trials reached the nostril ({:.0}%)",
        s.reached,
        s.trials,
        s.success_rate * 100.0
    );
    println!(
        "pitch error {:.2} ± {:.2} deg, yaw error {:.2} ± {:.2} deg",
        s.pitch_error_mean, s.pitch_error_std, s.yaw_error_mean, s.yaw_error_std
    );
    println!(
        "approach attenuation {:.1}x, final attenuation {:.1}x",
        s.approach_attenuation, s.final_attenuation
    );
    write_summary_csv(&s, std::io::stdout()).expect("stdout");
}
