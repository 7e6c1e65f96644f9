#![allow(dead_code)]

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::sync::OnceLock;

use swabservo::kinematics::RobotModel;
use swabservo::lut::{build_table, read_table, write_table, LutConfig, LutTable};
use swabservo::scene::{FacePlacement, Nostril};

fn cache_path() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("reference_table.lut")
}

/// Default table for the reference arm, built once per target directory.
pub fn reference_table() -> &'static LutTable {
    static TABLE: OnceLock<LutTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let config = LutConfig::default();
        let path = cache_path();
        if let Ok(f) = File::open(&path) {
            if let Ok(t) = read_table(BufReader::new(f)) {
                if t.config == config {
                    return t;
                }
            }
        }
        let table = build_table(&RobotModel::reference(), &config).expect("default table builds");
        store_table(&table);
        table
    })
}

/// Write through a temporary name so concurrent test binaries never see a
/// partial file.
pub fn store_table(table: &LutTable) {
    let path = cache_path();
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    if let Ok(f) = File::create(&tmp) {
        if write_table(table, BufWriter::new(f)).is_ok() {
            let _ = std::fs::rename(&tmp, &path);
        }
    }
}

/// Face square on to the robot at the best-graded cell of the table.
pub fn central_placement(table: &LutTable) -> FacePlacement {
    let best = table
        .entries
        .iter()
        .filter(|e| e.feasible())
        .max_by_key(|e| (e.reach, std::cmp::Reverse(e.cell)))
        .expect("a feasible cell");
    FacePlacement {
        nostril_world: table.config.start.cell_pose(best.cell).position,
        yaw: 0.0,
        pitch: 0.0,
        nostril: Nostril::Right,
    }
}
