//! Command-line front end: table builds and queries, single trials,
//! seeded batches and workspace analysis, with CSV and SVG outputs.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 an output
//! could not be written, 4 a `--strict` run recorded a failed trial (or a
//! table query hit an empty cell).

mod plots;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use crate::kinematics::{JointConfig, RobotModel};
use crate::lut::{build_table, read_table, write_csv, write_table, LutConfig, LutError, LutTable};
use crate::mission::{
    run_batch, run_trial, score_outcomes, workspace_extension, write_log_csv, write_results_csv, write_summary_csv,
    MissionConfig, TrialOutcome, TrialRun,
};
use crate::scene::{SceneConfig, SwabPerturbation, SwayConfig};

pub use plots::{plot_angles, plot_convergence, plot_extension, plot_table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Write(String),
    #[error("{0}")]
    Strict(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Write(_) => 3,
            CliError::Strict(_) => 4,
        }
    }
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "swabservo",
    version,
    about = "Swab alignment pipeline: lookup tables, simulated trials and batch statistics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build, query or export the joint lookup table.
    #[command(subcommand)]
    Lut(LutCommand),
    /// Run one simulated trial.
    #[command(subcommand)]
    Trial(TrialCommand),
    /// Run a seeded Monte Carlo batch of trials.
    #[command(subcommand)]
    Batch(BatchCommand),
    /// Forward-extension analysis of terminal configurations.
    #[command(subcommand)]
    Workspace(WorkspaceCommand),
}

#[derive(Debug, Subcommand)]
pub enum LutCommand {
    /// Grade candidate configurations for every start cell and write the table.
    Build(LutBuildArgs),
    /// Look up the configuration for a face position.
    Query(LutQueryArgs),
    /// Write the table as CSV, one row per cell.
    ExportCsv(LutExportArgs),
}

#[derive(Debug, Subcommand)]
pub enum TrialCommand {
    /// Run one trial and write its tick log and result.
    Run(TrialArgs),
}

#[derive(Debug, Subcommand)]
pub enum BatchCommand {
    /// Run seeds `seed..seed+trials` and write per-trial and summary CSVs.
    Run(BatchArgs),
}

#[derive(Debug, Subcommand)]
pub enum WorkspaceCommand {
    /// Extension reachable from the terminal configuration of each trial,
    /// or from one configuration given with `--q`.
    Analyze(WorkspaceArgs),
}

#[derive(Debug, Args)]
pub struct LutBuildArgs {
    /// Chain description (TOML); the shipped reference arm when omitted.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Output table file.
    #[arg(long)]
    pub out: PathBuf,
    /// Candidate sampling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Start-grid resolution as `phi,r,z` cell counts.
    #[arg(long, value_parser = parse_resolution)]
    pub res: Option<[usize; 3]>,
    /// Random IK candidates per cell.
    #[arg(long)]
    pub candidates: Option<usize>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LutQueryArgs {
    /// Table file written by `lut build`.
    #[arg(long)]
    pub table: PathBuf,
    /// Face position in the robot base frame as `x,y,z` (m).
    #[arg(long, value_parser = parse_vector3, allow_hyphen_values = true)]
    pub pos: Vector3<f64>,
}

#[derive(Debug, Args)]
pub struct LutExportArgs {
    /// Table file written by `lut build`.
    #[arg(long)]
    pub table: PathBuf,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also draw the per-cell reach map to this SVG file.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoisePreset {
    /// Noise, dropout, swab error and head sway at the reported levels.
    Paper,
    /// Every noise source off.
    None,
}

/// Inputs shared by every command that runs trials.
#[derive(Debug, Args)]
pub struct SimArgs {
    /// Table file written by `lut build`.
    #[arg(long)]
    pub table: PathBuf,
    /// Chain description (TOML); the shipped reference arm when omitted.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Scene configuration (TOML); explicit flags take precedence over it.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Noise preset applied over the scene configuration.
    #[arg(long, value_enum)]
    pub noise: Option<NoisePreset>,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Exit with code 4 when a trial ends infeasible or timed out.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct TrialArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Trial seed; the scene file's seed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also draw the raw-vs-filtered convergence figure.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Number of trials.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// First seed; the scene file's seed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Also write every trial's tick log under `<out>/logs`.
    #[arg(long)]
    pub logs: bool,
}

#[derive(Debug, Args)]
pub struct WorkspaceArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Number of trials whose terminal configurations are analyzed.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// First seed; the scene file's seed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Analyze this configuration (`q1,...,q7`, rad) instead of running trials.
    #[arg(long, value_parser = parse_joints, allow_hyphen_values = true)]
    pub q: Option<JointConfig>,
    /// Upward pitch of the extension direction (rad).
    #[arg(long, default_value_t = 0.2)]
    pub pitch: f64,
    /// Longest extension tried (m).
    #[arg(long, default_value_t = 0.30)]
    pub max_extend: f64,
    /// Sweep increment (m).
    #[arg(long, default_value_t = 0.005)]
    pub step: f64,
}

fn parse_list(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated values, got {}", v.len()));
    }
    Ok(v)
}

fn parse_vector3(s: &str) -> Result<Vector3<f64>, String> {
    let v = parse_list(s, 3)?;
    Ok(Vector3::new(v[0], v[1], v[2]))
}

fn parse_joints(s: &str) -> Result<JointConfig, String> {
    Ok(JointConfig::from_vec(parse_list(s, 7)?))
}

fn parse_resolution(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [a, b, c] if *a > 0 && *b > 0 && *c > 0 => Ok([*a, *b, *c]),
        _ => Err("expected three positive counts `phi,r,z`".into()),
    }
}

fn load_model(chain: &Option<PathBuf>) -> Result<RobotModel, CliError> {
    match chain {
        Some(path) => RobotModel::load(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display()))),
        None => Ok(RobotModel::reference()),
    }
}

fn load_table(path: &Path) -> Result<LutTable, CliError> {
    let f = File::open(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    read_table(BufReader::new(f)).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn scene_config(sim: &SimArgs) -> Result<SceneConfig, CliError> {
    let mut scene = match &sim.scene {
        Some(path) => SceneConfig::load(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?,
        None => SceneConfig::paper(),
    };
    match sim.noise {
        Some(NoisePreset::None) => {
            let quiet = SceneConfig::noiseless();
            scene.dropout = quiet.dropout;
            scene.noise = quiet.noise;
            scene.swab = SwabPerturbation::NONE;
            scene.sway = SwayConfig::STILL;
        }
        Some(NoisePreset::Paper) => {
            let paper = SceneConfig::paper();
            scene.dropout = paper.dropout;
            scene.noise = paper.noise;
            scene.swab = paper.swab;
            scene.sway = paper.sway;
        }
        None => {}
    }
    Ok(scene)
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Write(format!("{}: {e}", dir.display())))
}

/// Create `path` and hand a buffered writer to `body`.
fn write_file<F, E>(path: &Path, body: F) -> CliResult
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), E>,
    E: std::fmt::Display,
{
    let fail = |e: &dyn std::fmt::Display| CliError::Write(format!("{}: {e}", path.display()));
    let f = File::create(path).map_err(|e| fail(&e))?;
    let mut w = BufWriter::new(f);
    body(&mut w).map_err(|e| fail(&e))?;
    w.flush().map_err(|e| fail(&e))
}

fn with_pool<T: Send>(jobs: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map(|pool| pool.install(work))
            .map_err(|e| CliError::Invalid(format!("worker pool: {e}"))),
        None => Ok(work()),
    }
}

fn strict_check(strict: bool, runs: &[TrialRun]) -> CliResult {
    if !strict {
        return Ok(());
    }
    let failed: Vec<String> = runs
        .iter()
        .filter(|r| {
            matches!(
                r.result.outcome,
                TrialOutcome::LutInfeasible { .. } | TrialOutcome::StageTimeout { .. }
            )
        })
        .map(|r| format!("seed {} ({})", r.result.seed, r.result.outcome.label()))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Strict(format!("failed trials: {}", failed.join(", "))))
    }
}

fn cmd_lut_build(args: &LutBuildArgs) -> CliResult {
    let model = load_model(&args.chain)?;
    let mut config = LutConfig {
        seed: args.seed,
        ..LutConfig::default()
    };
    if let Some(res) = args.res {
        config.start.resolution = res;
    }
    if let Some(k) = args.candidates {
        config.candidates = k;
    }
    let start = Instant::now();
    let table = with_pool(args.jobs, || build_table(&model, &config))?.map_err(|e| CliError::Invalid(e.to_string()))?;
    let elapsed = start.elapsed();
    write_file(&args.out, |w| write_table(&table, w))?;
    println!(
        "cells {}  feasible {}  targets per cell {}  built in {:.1} s",
        table.entries.len(),
        table.feasible_count(),
        config.end.sample_count(),
        elapsed.as_secs_f64()
    );
    println!("reach fraction histogram:");
    let hist = table.reach_histogram(10);
    for (i, n) in hist.iter().enumerate() {
        println!(
            "  [{:.1}, {:.1}{} {n}",
            i as f64 / 10.0,
            (i + 1) as f64 / 10.0,
            if i == 9 { "]" } else { ")" }
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_lut_query(args: &LutQueryArgs) -> CliResult {
    let table = load_table(&args.table)?;
    if !table.contains(&args.pos) {
        println!("position lies outside the grid; reporting the nearest cell");
    }
    let start = Instant::now();
    let result = table.query(&args.pos);
    let elapsed = start.elapsed();
    match result {
        Ok(entry) => {
            println!("cell {}  reach {}/{}", entry.cell, entry.reach, entry.total);
            let q: Vec<String> = entry.q.iter().map(|v| format!("{v:.6}")).collect();
            println!("q {}", q.join(","));
            println!("query {:.1} us", elapsed.as_secs_f64() * 1e6);
            Ok(())
        }
        Err(LutError::InfeasibleCell { cell }) => {
            Err(CliError::Strict(format!("cell {cell} has no feasible configuration")))
        }
        Err(e) => Err(CliError::Invalid(e.to_string())),
    }
}

fn cmd_lut_export(args: &LutExportArgs) -> CliResult {
    let table = load_table(&args.table)?;
    write_file(&args.out, |w| write_csv(&table, w))?;
    println!("wrote {}", args.out.display());
    if let Some(svg) = &args.plot {
        plot_table(&table, svg).map_err(|e| CliError::Write(format!("{}: {e}", svg.display())))?;
        println!("wrote {}", svg.display());
    }
    Ok(())
}

fn trial_log(dir: &Path, run: &TrialRun) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("trial_{}_log.csv", run.result.seed));
    write_file(&path, |w| write_log_csv(&run.log, w))?;
    Ok(path)
}

fn cmd_trial(args: &TrialArgs) -> CliResult {
    let model = load_model(&args.sim.chain)?;
    let table = load_table(&args.sim.table)?;
    let scene = scene_config(&args.sim)?;
    let seed = args.seed.unwrap_or(scene.seed);
    let config = MissionConfig::with_scene(scene);
    create_dir(&args.sim.out)?;

    let mut run = run_trial(&model, &table, &config, seed);
    let log = trial_log(&args.sim.out, &run)?;
    run.result.log_path = Some(log.display().to_string());
    let results = std::slice::from_ref(&run.result);
    let summary_path = args.sim.out.join(format!("trial_{seed}_result.csv"));
    write_file(&summary_path, |w| write_results_csv(results, w))?;

    let r = &run.result;
    println!("seed {seed}: {}", r.outcome.label());
    println!("  reached nostril      {}", r.reached_nostril);
    println!("  terminal distance    {:.2} mm", r.terminal_distance * 1e3);
    println!(
        "  pitch / yaw error    {:.2} / {:.2} deg",
        r.pitch_error_deg, r.yaw_error_deg
    );
    println!("  duration             {:.2} s", r.duration);
    println!("  extension            {:.0} mm", r.extension * 1e3);
    println!(
        "  raw / filtered std   approach {:.1}x  final {:.1}x",
        r.approach.attenuation(),
        r.final_align.attenuation()
    );
    println!("wrote {}", log.display());
    println!("wrote {}", summary_path.display());
    if args.plot {
        let svg = args.sim.out.join(format!("trial_{seed}_convergence.svg"));
        plot_convergence(&run.log, &svg).map_err(|e| CliError::Write(format!("{}: {e}", svg.display())))?;
        println!("wrote {}", svg.display());
    }
    strict_check(args.sim.strict, std::slice::from_ref(&run))
}

fn run_seeds(
    sim: &SimArgs,
    first: Option<u64>,
    trials: u64,
    jobs: Option<usize>,
) -> Result<(MissionConfig, Vec<TrialRun>), CliError> {
    let model = load_model(&sim.chain)?;
    let table = load_table(&sim.table)?;
    let scene = scene_config(sim)?;
    let first = first.unwrap_or(scene.seed);
    let seeds: Vec<u64> = (0..trials).map(|i| first.wrapping_add(i)).collect();
    let config = MissionConfig::with_scene(scene);
    let runs = with_pool(jobs, || run_batch(&model, &table, &config, &seeds, None))?;
    Ok((config, runs))
}

fn cmd_batch(args: &BatchArgs) -> CliResult {
    create_dir(&args.sim.out)?;
    let (_, mut runs) = run_seeds(&args.sim, args.seed, args.trials, args.jobs)?;
    if args.logs {
        let dir = args.sim.out.join("logs");
        create_dir(&dir)?;
        for run in &mut runs {
            let path = trial_log(&dir, run)?;
            run.result.log_path = Some(path.display().to_string());
        }
    }
    let results: Vec<_> = runs.iter().map(|r| r.result.clone()).collect();
    let summary = score_outcomes(&results);
    let out = &args.sim.out;
    write_file(&out.join("batch_trials.csv"), |w| write_results_csv(&results, w))?;
    write_file(&out.join("batch_summary.csv"), |w| write_summary_csv(&summary, w))?;
    write_file(&out.join("batch_summary.txt"), |w| write!(w, "{summary}"))?;
    let plot_err = |p: &Path, e: Box<dyn std::error::Error>| CliError::Write(format!("{}: {e}", p.display()));
    let angles = out.join("batch_angles.svg");
    plot_angles(&results, &angles).map_err(|e| plot_err(&angles, e))?;
    let ext = out.join("batch_extension.svg");
    plot_extension(&results, &ext).map_err(|e| plot_err(&ext, e))?;
    print!("{summary}");
    println!(
        "wrote batch_trials.csv, batch_summary.csv, batch_summary.txt, batch_angles.svg, batch_extension.svg in {}",
        out.display()
    );
    strict_check(args.sim.strict, &runs)
}

fn cmd_workspace(args: &WorkspaceArgs) -> CliResult {
    if !(args.step > 0.0 && args.max_extend >= 0.0) {
        return Err(CliError::Invalid(
            "--step must be positive and --max-extend non-negative".into(),
        ));
    }
    if let Some(q) = &args.q {
        let model = load_model(&args.sim.chain)?;
        if let Some(joint) = model.chain.first_limit_violation(q) {
            return Err(CliError::Invalid(format!(
                "joint {} of --q is outside its limits",
                joint + 1
            )));
        }
        let ext = workspace_extension(&model, q, args.pitch, args.max_extend, args.step);
        println!("extension {:.0} mm", ext * 1e3);
        return Ok(());
    }
    create_dir(&args.sim.out)?;
    let (_, runs) = run_seeds(&args.sim, args.seed, args.trials, args.jobs)?;
    let model = load_model(&args.sim.chain)?;
    let path = args.sim.out.join("workspace_extension.csv");
    let mut results = Vec::new();
    write_file(&path, |w| -> Result<(), std::io::Error> {
        writeln!(w, "seed,outcome,extension_m")?;
        for run in &runs {
            let mut r = run.result.clone();
            if r.outcome == TrialOutcome::Completed {
                let q = run.log.last().map(|row| row.q).unwrap_or_else(JointConfig::zeros);
                r.extension = workspace_extension(&model, &q, args.pitch, args.max_extend, args.step);
            }
            writeln!(w, "{},{},{:.3}", r.seed, r.outcome.label(), r.extension)?;
            results.push(r);
        }
        Ok(())
    })?;
    let summary = score_outcomes(&results);
    let svg = args.sim.out.join("workspace_extension.svg");
    plot_extension(&results, &svg).map_err(|e| CliError::Write(format!("{}: {e}", svg.display())))?;
    println!("terminal configurations  {}", summary.completed);
    println!("median extension         {:.0} mm", summary.extension_median * 1e3);
    println!(
        "reaching 130 mm          {:.1} %",
        summary.extension_ok_fraction * 100.0
    );
    println!("wrote {}", path.display());
    println!("wrote {}", svg.display());
    strict_check(args.sim.strict, &runs)
}

/// Parse `args` (program name first) and run the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // help and version are successful exits
            let _ = e.print();
            return if e.use_stderr() {
                Err(CliError::Invalid(String::new()))
            } else {
                Ok(())
            };
        }
    };
    match &cli.command {
        Command::Lut(LutCommand::Build(a)) => cmd_lut_build(a),
        Command::Lut(LutCommand::Query(a)) => cmd_lut_query(a),
        Command::Lut(LutCommand::ExportCsv(a)) => cmd_lut_export(a),
        Command::Trial(TrialCommand::Run(a)) => cmd_trial(a),
        Command::Batch(BatchCommand::Run(a)) => cmd_batch(a),
        Command::Workspace(WorkspaceCommand::Analyze(a)) => cmd_workspace(a),
    }
}

pub fn main() -> ExitCode {
    match run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string();
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
