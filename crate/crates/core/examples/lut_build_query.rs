//! Build a coarse lookup table, save and reload it, and query it.

use nalgebra::Vector3;
use swabservo::kinematics::RobotModel;
use swabservo::lut::{build_table, read_table, write_table, ConeStartSpec, LutConfig};

fn main() {
    let model = RobotModel::reference();
    let config = LutConfig {
        start: ConeStartSpec {
            resolution: [5, 1, 5],
            ..ConeStartSpec::default()
        },
        candidates: 32,
        ..LutConfig::default()
    };
    let start = std::time::Instant::now();
    let table = build_table(&model, &config).expect("valid config");
    println!(
        "built {} cells in {:.1} s, {} feasible",
        table.entries.len(),
        start.elapsed().as_secs_f64(),
        table.feasible_count()
    );
    println!("reach histogram (10 bins): {:?}", table.reach_histogram(10));

    let mut bytes = Vec::new();
    write_table(&table, &mut bytes).expect("in-memory write");
    let reloaded = read_table(bytes.as_slice()).expect("valid table");
    println!(
        "round trip of {} bytes preserves the table: {}",
        bytes.len(),
        reloaded.entries == table.entries
    );

    let face = Vector3::new(0.56, 0.05, 1.42);
    match table.query(&face) {
        Ok(entry) => println!(
            "cell {} for {:?}: N = {}/{} q = {:?}",
            entry.cell,
            face,
            entry.reach,
            entry.total,
            entry.q.as_slice()
        ),
        Err(e) => println!("query failed: {e}"),
    }
}
