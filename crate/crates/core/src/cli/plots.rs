//! Static SVG figures.

use std::error::Error;
use std::path::Path;

use nalgebra::Vector6;
use plotters::prelude::*;

use crate::lut::LutTable;
use crate::mission::{LogRow, TrialOutcome, TrialResult, EXTENSION_OK};

type PlotResult = Result<(), Box<dyn Error>>;
type Metric<'a> = &'a dyn Fn(&Vector6<f64>) -> f64;

const RAW: RGBColor = RGBColor(150, 150, 150);
const FILTERED: RGBColor = RGBColor(20, 90, 200);

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    padded(lo, hi)
}

/// Raw and filtered translation error (mm) and rotation error (deg) of the
/// relative target over a trial.
pub fn plot_convergence(log: &[LogRow], path: &Path) -> PlotResult {
    let root = SVGBackend::new(path, (900, 640)).into_drawing_area();
    root.fill(&WHITE)?;
    let panels = root.split_evenly((2, 1));
    let t_end = log.last().map(|r| r.t).unwrap_or(1.0).max(1e-3);
    let translation = |v: &Vector6<f64>| v.fixed_rows::<3>(0).norm() * 1e3;
    let rotation = |v: &Vector6<f64>| v.fixed_rows::<3>(3).norm().to_degrees();
    let series: [(&str, Metric); 2] = [
        ("translation error (mm)", &translation),
        ("rotation error (deg)", &rotation),
    ];
    for (area, (label, f)) in panels.iter().zip(series) {
        let raw: Vec<(f64, f64)> = log.iter().filter_map(|r| r.raw.as_ref().map(|v| (r.t, f(v)))).collect();
        let filtered: Vec<(f64, f64)> = log
            .iter()
            .filter_map(|r| r.filtered.as_ref().map(|v| (r.t, f(v))))
            .collect();
        let (_, hi) = bounds(raw.iter().chain(&filtered).map(|p| p.1));
        let mut chart = ChartBuilder::on(area)
            .margin(10)
            .x_label_area_size(35)
            .y_label_area_size(55)
            .build_cartesian_2d(0.0..t_end, 0.0..hi.max(1e-3))?;
        chart.configure_mesh().x_desc("t (s)").y_desc(label).draw()?;
        chart
            .draw_series(raw.iter().map(|&p| Circle::new(p, 2, RAW.filled())))?
            .label("raw")
            .legend(|(x, y)| Circle::new((x + 10, y), 3, RAW.filled()));
        // the filter restarts at the stage change; draw each stretch separately
        let mut segments: Vec<Vec<(f64, f64)>> = Vec::new();
        let mut last_stage = None;
        for r in log {
            match r.filtered.as_ref() {
                Some(v) => {
                    if last_stage != Some(r.stage) || segments.is_empty() {
                        segments.push(Vec::new());
                    }
                    segments.last_mut().unwrap().push((r.t, f(v)));
                    last_stage = Some(r.stage);
                }
                None => last_stage = None,
            }
        }
        for (i, seg) in segments.into_iter().enumerate() {
            let s = chart.draw_series(LineSeries::new(seg, FILTERED.stroke_width(2)))?;
            if i == 0 {
                s.label("filtered")
                    .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], FILTERED.stroke_width(2)));
            }
        }
        chart
            .configure_series_labels()
            .border_style(BLACK)
            .background_style(WHITE.mix(0.8))
            .draw()?;
    }
    root.present()?;
    Ok(())
}

/// Terminal yaw against pitch error of completed trials.
pub fn plot_angles(results: &[TrialResult], path: &Path) -> PlotResult {
    let pts: Vec<(f64, f64)> = results
        .iter()
        .filter(|r| r.outcome == TrialOutcome::Completed)
        .map(|r| (r.yaw_error_deg, r.pitch_error_deg))
        .collect();
    let (x0, x1) = bounds(pts.iter().map(|p| p.0).chain([-1.0, 1.0]));
    let (y0, y1) = bounds(pts.iter().map(|p| p.1).chain([-1.0, 1.0]));
    let root = SVGBackend::new(path, (640, 560)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("terminal swab angle error", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(x0..x1, y0..y1)?;
    chart
        .configure_mesh()
        .x_desc("yaw error (deg)")
        .y_desc("pitch error (deg)")
        .draw()?;
    chart.draw_series(pts.iter().map(|&p| Circle::new(p, 3, FILTERED.filled())))?;
    root.present()?;
    Ok(())
}

/// Histogram of forward extension over completed trials, in 25 mm bins,
/// with the 130 mm success threshold marked.
pub fn plot_extension(results: &[TrialResult], path: &Path) -> PlotResult {
    let ext: Vec<f64> = results
        .iter()
        .filter(|r| r.outcome == TrialOutcome::Completed)
        .map(|r| r.extension * 1e3)
        .collect();
    let max_mm = ext.iter().cloned().fold(300.0f64, f64::max);
    let bins = (max_mm / 25.0).ceil() as usize;
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for e in &ext {
        counts[((e / 25.0 + 1e-9) as usize).min(bins - 1)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(1).max(1) as f64 * 1.1;
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("forward extension from terminal pose", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..(counts.len() as f64 * 25.0), 0.0..top)?;
    chart
        .configure_mesh()
        .x_desc("extension (mm)")
        .y_desc("trials")
        .draw()?;
    chart.draw_series(counts.iter().enumerate().map(|(i, &c)| {
        let x = i as f64 * 25.0;
        Rectangle::new([(x + 1.0, 0.0), (x + 24.0, c as f64)], FILTERED.mix(0.7).filled())
    }))?;
    let thr = EXTENSION_OK * 1e3;
    chart.draw_series(LineSeries::new(vec![(thr, 0.0), (thr, top)], RED.stroke_width(2)))?;
    root.present()?;
    Ok(())
}

/// Reach fraction of every start cell, drawn as bearing against height and
/// averaged over radius; green cells keep the most follow-on motion.
pub fn plot_table(table: &LutTable, path: &Path) -> PlotResult {
    let spec = &table.config.start;
    let [n_phi, n_r, n_z] = spec.resolution;
    let phis = spec.phi_centers();
    let zs = spec.z_centers();
    let dphi = (spec.phi_max - spec.phi_min).to_degrees() / n_phi as f64;
    let dz = (spec.z_max - spec.z_min) / n_z as f64;
    let root = SVGBackend::new(path, (720, 560)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("lookup table reach fraction", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(
            spec.phi_min.to_degrees()..spec.phi_max.to_degrees(),
            spec.z_min..spec.z_max,
        )?;
    chart
        .configure_mesh()
        .x_desc("bearing (deg)")
        .y_desc("height (m)")
        .draw()?;
    let mut cells = Vec::new();
    for (i_phi, phi) in phis.iter().enumerate() {
        for (i_z, z) in zs.iter().enumerate() {
            let frac = (0..n_r)
                .map(|i_r| {
                    let e = &table.entries[spec.cell_index(i_phi, i_r, i_z)];
                    if e.total == 0 {
                        0.0
                    } else {
                        e.reach as f64 / e.total as f64
                    }
                })
                .sum::<f64>()
                / n_r as f64;
            let colour = RGBColor((255.0 * (1.0 - frac)) as u8, (200.0 * frac) as u8, 40);
            let x = phi.to_degrees();
            cells.push(Rectangle::new(
                [(x - 0.45 * dphi, z - 0.45 * dz), (x + 0.45 * dphi, z + 0.45 * dz)],
                colour.filled(),
            ));
        }
    }
    chart.draw_series(cells)?;
    root.present()?;
    Ok(())
}
