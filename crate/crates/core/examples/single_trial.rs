//! One seeded trial from table lookup to final alignment.
//!
//! `cargo run --release --example single_trial [table.lut] [seed]`; without a
//! table file the default table is built first (under a minute in release).

use std::fs::File;
use std::io::BufReader;

use swabservo::kinematics::RobotModel;
use swabservo::lut::{build_table, read_table, LutConfig, LutTable};
use swabservo::mission::{run_trial, MissionConfig};

fn load_or_build(model: &RobotModel, path: Option<&String>) -> LutTable {
    match path {
        Some(p) => read_table(BufReader::new(File::open(p).expect("table file opens"))).expect("valid table"),
        None => {
            eprintln!("building the default table...");
            build_table(model, &LutConfig::default()).expect("default config is valid")
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let model = RobotModel::reference();
    let table = load_or_build(&model, args.first());
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2);

    let run = run_trial(&model, &table, &MissionConfig::paper(), seed);
    let r = &run.result;
    println!("seed {seed}: {} after {:.2} s", r.outcome.label(), r.duration);
    println!("nostril at {:?}", r.nostril_world);
    println!(
        "tip distance {:.2} mm, pitch error {:.2} deg, yaw error {:.2} deg",
        r.terminal_distance * 1e3,
        r.pitch_error_deg,
        r.yaw_error_deg
    );
    println!("forward extension available {:.0} mm", r.extension * 1e3);
    println!(
        "noise attenuation: approach {:.1}x, final {:.1}x",
        r.approach.attenuation(),
        r.final_align.attenuation()
    );
    for stage in 1..=3 {
        if let Some(row) = run.log.iter().find(|row| row.stage == stage) {
            println!("stage {stage} starts at t = {:.2} s", row.t);
        }
    }
}
