use std::io::{Read, Write};

use super::{ConeEndSpec, ConeStartSpec, LutConfig, LutEntry, LutError, LutTable};
use crate::kinematics::JointConfig;

pub const MAGIC: [u8; 8] = *b"SWABLUT\0";
pub const FORMAT_VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const K: usize>(&mut self) -> Result<[u8; K], LutError> {
        let mut buf = [0u8; K];
        self.0.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => LutError::Format("truncated table".into()),
            _ => LutError::Io(e),
        })?;
        Ok(buf)
    }
    fn u32(&mut self) -> Result<u32, LutError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64, LutError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64, LutError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

/// Little-endian binary layout: magic, version, specs, seed, candidate count,
/// focus distance, entry count, then one fixed-width record per cell
/// (cell index u32, 7 × f64 joint values, reach u32, total u32).
pub fn write_table<W: Write>(table: &LutTable, out: W) -> std::io::Result<()> {
    let mut w = Writer(out);
    let c = &table.config;
    w.0.write_all(&MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    let s = &c.start;
    for v in [s.phi_min, s.phi_max, s.r_min, s.r_max, s.z_min, s.z_max, s.theta_x] {
        w.f64(v)?;
    }
    for n in s.resolution {
        w.u32(n as u32)?;
    }
    let e = &c.end;
    for v in [e.d, e.phi_max, e.theta_min, e.theta_max] {
        w.f64(v)?;
    }
    for n in e.samples {
        w.u32(n as u32)?;
    }
    w.u64(c.seed)?;
    w.u32(c.candidates as u32)?;
    w.f64(c.focus_distance)?;
    w.u32(table.entries.len() as u32)?;
    for entry in &table.entries {
        w.u32(entry.cell as u32)?;
        for v in entry.q.iter() {
            w.f64(*v)?;
        }
        w.u32(entry.reach)?;
        w.u32(entry.total)?;
    }
    w.0.flush()
}

pub fn read_table<R: Read>(input: R) -> Result<LutTable, LutError> {
    let mut r = Reader(input);
    if r.bytes::<8>()? != MAGIC {
        return Err(LutError::Format("not a lookup table file".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(LutError::Format(format!("unsupported table version {version}")));
    }
    let mut f = [0.0; 7];
    for v in f.iter_mut() {
        *v = r.f64()?;
    }
    let resolution = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let start = ConeStartSpec {
        phi_min: f[0],
        phi_max: f[1],
        r_min: f[2],
        r_max: f[3],
        z_min: f[4],
        z_max: f[5],
        theta_x: f[6],
        resolution,
    };
    let end = ConeEndSpec {
        d: r.f64()?,
        phi_max: r.f64()?,
        theta_min: r.f64()?,
        theta_max: r.f64()?,
        samples: [
            r.u32()? as usize,
            r.u32()? as usize,
            r.u32()? as usize,
            r.u32()? as usize,
        ],
    };
    let config = LutConfig {
        start,
        end,
        seed: r.u64()?,
        candidates: r.u32()? as usize,
        focus_distance: r.f64()?,
    };
    config.validate()?;
    let count = r.u32()? as usize;
    if count != start.cell_count() {
        return Err(LutError::Format(format!(
            "entry count {count} does not match grid of {} cells",
            start.cell_count()
        )));
    }
    let mut entries = Vec::with_capacity(count);
    for expected in 0..count {
        let cell = r.u32()? as usize;
        if cell != expected {
            return Err(LutError::Format(format!("entry {expected} carries cell index {cell}")));
        }
        let mut q = JointConfig::zeros();
        for v in q.iter_mut() {
            *v = r.f64()?;
        }
        let reach = r.u32()?;
        let total = r.u32()?;
        if reach > total {
            return Err(LutError::Format(format!(
                "cell {cell}: reach {reach} exceeds total {total}"
            )));
        }
        entries.push(LutEntry {
            cell,
            pose: start.cell_pose(cell),
            q,
            reach,
            total,
        });
    }
    if r.0.read(&mut [0u8; 1])? != 0 {
        return Err(LutError::Format("trailing bytes after last entry".into()));
    }
    Ok(LutTable { config, entries })
}

/// One row per cell, for plotting.
pub fn write_csv<W: Write>(table: &LutTable, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "cell", "i_phi", "i_r", "i_z", "x", "y", "z", "yaw", "reach", "total", "q1", "q2", "q3", "q4", "q5", "q6", "q7",
    ])?;
    for e in &table.entries {
        let (i, j, k) = table.config.start.cell_coords(e.cell);
        let p = e.pose.position;
        let mut row = vec![
            e.cell.to_string(),
            i.to_string(),
            j.to_string(),
            k.to_string(),
            format!("{:.6}", p.x),
            format!("{:.6}", p.y),
            format!("{:.6}", p.z),
            format!("{:.6}", p.y.atan2(p.x)),
            e.reach.to_string(),
            e.total.to_string(),
        ];
        row.extend(e.q.iter().map(|v| format!("{v:.9}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
