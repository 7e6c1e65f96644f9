//! Forward extension left at the terminal configuration of noiseless trials.
//!
//! `cargo run --release --example workspace_extension [table.lut]`

use std::fs::File;
use std::io::BufReader;

use swabservo::kinematics::RobotModel;
use swabservo::lut::{build_table, read_table, LutConfig};
use swabservo::mission::{run_trial, workspace_extension, MissionConfig, TrialOutcome, EXTENSION_OK};

fn main() {
    let model = RobotModel::reference();
    let table = match std::env::args().nth(1) {
        Some(p) => read_table(BufReader::new(File::open(p).expect("table file opens"))).expect("valid table"),
        None => {
            eprintln!("building the default table...");
            build_table(&model, &LutConfig::default()).expect("default config is valid")
        }
    };
    let config = MissionConfig::noiseless();
    println!("seed  extension (mm)  at pitch 0 / 0.2 / 0.4 rad");
    for seed in 0..8 {
        let run = run_trial(&model, &table, &config, seed);
        if run.result.outcome != TrialOutcome::Completed {
            println!("{seed:4}  {}", run.result.outcome.label());
            continue;
        }
        let q = run.log.last().expect("completed trials log ticks").q;
        let ext: Vec<String> = [0.0, 0.2, 0.4]
            .iter()
            .map(|&pitch| format!("{:.0}", workspace_extension(&model, &q, pitch, 0.30, 0.005) * 1e3))
            .collect();
        println!("{seed:4}  {}", ext.join(" / "));
    }
    println!("success needs {:.0} mm at 0.2 rad", EXTENSION_OK * 1e3);
}
