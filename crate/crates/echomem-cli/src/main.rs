//! Command-line front end: `simulate` runs one schedule and writes the
//! exit-face series and detected echoes, `sweep` tabulates retrieval
//! efficiency against optical depth and renders the efficiency figure,
//! `check` prints the analytic predictions without simulating.
//!
//! Exit codes: 0 success, 2 invalid configuration or schedule, 3 numerical
//! blowup, 4 horizon too short for the predicted echo.

mod config;
mod svg;

use clap::{Parser, Subcommand};
use config::{ConfigError, RunConfig};
use echomem::analytic::{self, StageMarker};
use echomem::ensemble::{efficiency_sweep, run_simulation, RunOutput, SimError};
use echomem::protocol::{
    build_schedule, PulseKind, PulseSchedule, ScheduleError,
};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "echomem", version, about = "Photon-echo quantum memory simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write run.csv and echoes.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's [output] dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the optical depth and write sweep.csv and fig2.svg.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated list of optical depths, e.g. 0.5,1,2,3.
        #[arg(long = "alphaL")]
        alpha_l: String,
    },
    /// Print echo times, wavevectors, silent flags, and coherence signs.
    Check {
        #[arg(long)]
        config: PathBuf,
        /// Also write the report to <out>/check.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Invalid(String),
    Blowup(String),
    Horizon(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Blowup(_) => 3,
            Failure::Horizon(_) => 4,
            Failure::Io(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Blowup(m) | Failure::Horizon(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Invalid(format!("invalid config: {e}"))
    }
}

impl From<ScheduleError> for Failure {
    fn from(e: ScheduleError) -> Self {
        Failure::Invalid(format!("invalid schedule: {e}"))
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NumericalBlowup { .. } => Failure::Blowup(e.to_string()),
            SimError::HorizonTooShort { .. } => Failure::Horizon(e.to_string()),
            SimError::Io(io) => Failure::Io(io.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out } => cmd_simulate(&config, out),
        Command::Sweep { config, out, alpha_l } => cmd_sweep(&config, out, &alpha_l),
        Command::Check { config, out } => cmd_check(&config, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

fn load(config_path: &Path) -> Result<(RunConfig, PulseSchedule), Failure> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", config_path.display())))?;
    let cfg = RunConfig::parse(&text)?;
    cfg.medium.validate().map_err(|e| Failure::Invalid(e.to_string()))?;
    let schedule = build_schedule(cfg.protocol, cfg.params.clone())?;
    Ok((cfg, schedule))
}

/// Create the output directory and drop the resolved configuration (all
/// defaults filled in) next to the artifacts.
fn out_dir(cfg: &RunConfig, out: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = out.unwrap_or_else(|| cfg.out_dir.clone());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("resolved.cfg"), cfg.to_config_string())?;
    Ok(dir)
}

fn cmd_simulate(config_path: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let (cfg, schedule) = load(config_path)?;
    let dir = out_dir(&cfg, out)?;
    let output = run_simulation(&schedule, &cfg.medium, &cfg.grid)?;

    let run_path = dir.join("run.csv");
    let mut file = fs::File::create(&run_path)?;
    output.write_run_csv(&mut file)?;

    let echo_path = dir.join("echoes.csv");
    fs::write(&echo_path, echoes_csv(&output))?;

    println!(
        "alphaL = {}; {} echo(es) detected; wrote {} and {}",
        output.optical_depth,
        output.echoes.len(),
        run_path.display(),
        echo_path.display()
    );
    for echo in &output.echoes {
        let label = echo
            .predicted
            .map(|p| p.label.to_string())
            .unwrap_or_else(|| "unmatched".to_string());
        println!(
            "  {label}: t = {:.4}, direction {:+}, efficiency {:.4}",
            echo.echo_time, echo.direction, echo.efficiency
        );
    }
    Ok(())
}

fn echoes_csv(output: &RunOutput) -> String {
    let mut s = String::from("time,direction,efficiency,predicted_time,predicted_sign\n");
    for echo in &output.echoes {
        let (pt, ps) = echo
            .predicted
            .map(|p| (format!("{:.9e}", p.time), p.sign.value().to_string()))
            .unwrap_or_else(|| ("nan".to_string(), "0".to_string()));
        let _ = writeln!(
            s,
            "{:.9e},{},{:.9e},{},{}",
            echo.echo_time, echo.direction, echo.efficiency, pt, ps
        );
    }
    s
}

fn cmd_sweep(config_path: &Path, out: Option<PathBuf>, alpha_l: &str) -> Result<(), Failure> {
    let (cfg, schedule) = load(config_path)?;
    let dir = out_dir(&cfg, out)?;
    let alphas: Vec<f64> = alpha_l
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Failure::Invalid(format!("invalid alphaL value `{s}`")))
        })
        .collect::<Result<_, _>>()?;
    if alphas.is_empty() {
        return Err(Failure::Invalid("the alphaL list is empty".to_string()));
    }

    let table = efficiency_sweep(&schedule, &cfg.medium, &alphas, &cfg.grid)?;

    let sweep_path = dir.join("sweep.csv");
    let mut csv = String::from("alphaL,measured,closed_form,rel_error\n");
    for row in &table.rows {
        let _ = writeln!(
            csv,
            "{:.9e},{:.9e},{:.9e},{:.9e}",
            row.alpha_l,
            row.measured,
            row.closed_form,
            row.rel_error()
        );
    }
    fs::write(&sweep_path, csv)?;

    let svg_path = dir.join("fig2.svg");
    fs::write(&svg_path, svg::render(&table))?;

    let peak = table.peak();
    println!(
        "swept {} depths; peak efficiency {:.4} at alphaL = {}; monotonic: {}",
        table.rows.len(),
        peak.measured,
        peak.alpha_l,
        table.monotonic_increasing()
    );
    println!("wrote {} and {}", sweep_path.display(), svg_path.display());
    Ok(())
}

fn cmd_check(config_path: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let (cfg, schedule) = load(config_path)?;
    let report = check_report(&cfg, &schedule);
    print!("{report}");
    if let Some(dir) = out {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("check.txt"), &report)?;
    }
    Ok(())
}

fn check_report(cfg: &RunConfig, schedule: &PulseSchedule) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "protocol: {} (control order: {})",
        cfg.protocol, cfg.params.control_order
    );
    let _ = writeln!(s, "optical depth alphaL = {}", cfg.medium.optical_depth());
    let _ = writeln!(s, "pulses:");
    let mut counts = (0usize, 0usize);
    let mut markers = Vec::new();
    for p in schedule.pulses() {
        let name = match p.kind {
            PulseKind::Data => {
                markers.push(("D", StageMarker::AfterD));
                "D ".to_string()
            }
            PulseKind::Rephase => {
                counts.0 += 1;
                let m = if counts.0 == 1 { StageMarker::AfterR1 } else { StageMarker::AfterR2 };
                markers.push((if counts.0 == 1 { "R1" } else { "R2" }, m));
                format!("R{}", counts.0)
            }
            PulseKind::Control => {
                counts.1 += 1;
                let m = if counts.1 == 1 { StageMarker::AfterC1 } else { StageMarker::AfterC2 };
                markers.push((if counts.1 == 1 { "C1" } else { "C2" }, m));
                format!("C{}", counts.1)
            }
        };
        let _ = writeln!(
            s,
            "  {name} t = {:<8} area = {:.4} rad, k = {}",
            p.arrival, p.area.0, p.k
        );
    }
    let _ = writeln!(s, "predicted echoes:");
    for p in schedule.predictions() {
        let status = if p.silent {
            "silent".to_string()
        } else if p.radiates() {
            let dir = if p.k.0 * schedule.data_pulse().unwrap().k.0 > 0 {
                "forward"
            } else {
                "backward"
            };
            format!("{dir}, {}", p.sign)
        } else {
            format!("{} - not radiated", p.sign)
        };
        let _ = writeln!(s, "  {}: t = {:.4}, k = {}, {}", p.label, p.time, p.k, status);
    }
    let _ = writeln!(s, "coherence sign by stage:");
    for (name, marker) in markers {
        match analytic::coherence_after(schedule, marker) {
            Ok(expr) if expr.locked => {
                let _ = writeln!(s, "  after {name}: locked (spin storage)");
            }
            Ok(expr) => {
                let _ = writeln!(
                    s,
                    "  after {name}: {:+} ({})",
                    expr.prefactor_sign.value(),
                    expr.prefactor_sign
                );
            }
            Err(_) => {}
        }
    }
    if let Ok(st) = schedule.storage_time() {
        let _ = writeln!(s, "storage time: t_C2 - t_C1 = {st}");
    }
    s
}
