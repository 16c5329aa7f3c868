use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ssicl::controller::size_limiter_resistor;
use ssicl::report::{emit_report, Format, Report};
use ssicl::scenario::{load_scenario, run_scenario, Scenario};
use ssicl::sweep::{linspace, sweep};
use ssicl::Error;

#[derive(Parser)]
#[command(name = "ssicl", version, about = "Inrush current limiter simulator")]
struct Cli {
    /// Format of the report printed to stdout.
    #[arg(long, value_enum, global = true, default_value_t = OutFormat::Table)]
    format: OutFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes waveforms.csv and metrics.csv.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Sweep energization angle and remnant flux; writes sweep.csv.
    Sweep {
        scenario: PathBuf,
        /// Angle grid in degrees, `start:end:count`.
        #[arg(long, value_parser = parse_grid)]
        angles: Grid,
        /// Remnant flux grid in per unit, `start:end:count`.
        #[arg(long, value_parser = parse_grid)]
        remnants: Grid,
        /// Run each cell with and without the controller.
        #[arg(long)]
        paired: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Analytic limiter resistance for a permitted peak current.
    SizeResistor {
        scenario: PathBuf,
        /// Permitted peak current (A).
        #[arg(long)]
        i2: f64,
        /// Fraction of a cycle from saturation onset to the peak.
        #[arg(long)]
        k: f64,
    },
}

#[derive(Clone, Copy, Debug)]
struct Grid {
    start: f64,
    end: f64,
    count: usize,
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts[..] else {
        return Err(format!("expected start:end:count, got `{s}`"));
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    let count = n.trim().parse::<usize>().map_err(|e| format!("`{n}`: {e}"))?;
    if count == 0 {
        return Err("count must be at least 1".into());
    }
    Ok(Grid {
        start: num(a)?,
        end: num(b)?,
        count,
    })
}

enum Failure {
    Lib(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(load_scenario(&text)?)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| io_err(&path, e))
}

fn execute(cli: Cli) -> Result<String, Failure> {
    let format = match cli.format {
        OutFormat::Csv => Format::Csv,
        OutFormat::Table => Format::Table,
    };
    match cli.command {
        Command::Run { scenario, out } => {
            let s = load(&scenario)?;
            let (rec, metrics) = run_scenario(&s)?;
            write(&out, "waveforms.csv", &rec.to_csv())?;
            write(
                &out,
                "metrics.csv",
                &emit_report(&Report::Metrics(&[metrics]), Format::Csv),
            )?;
            Ok(emit_report(&Report::Metrics(&[metrics]), format))
        }
        Command::Sweep {
            scenario,
            angles,
            remnants,
            paired,
            out,
        } => {
            let s = load(&scenario)?;
            let report = sweep(
                &s,
                &linspace(angles.start, angles.end, angles.count),
                &linspace(remnants.start, remnants.end, remnants.count),
                paired,
            )?;
            write(&out, "sweep.csv", &emit_report(&Report::Sweep(&report), Format::Csv))?;
            Ok(emit_report(&Report::Sweep(&report), format))
        }
        Command::SizeResistor { scenario, i2, k } => {
            let s = load(&scenario)?;
            // Saturated core: source, winding and air-core inductance in series.
            let core = s.core_model()?;
            let c = &s.circuit;
            let l_total = c.series_l() + core.l_sat;
            let z = c.series_r().hypot(c.omega() * l_total);
            let sizing = size_limiter_resistor(l_total, k, c.period(), c.v_peak, z, i2)?;
            let mut text = match format {
                Format::Csv => format!("resistance_ohm\n{}\n", sizing.resistance),
                Format::Table => format!("resistance_ohm: {:.6}\n", sizing.resistance),
            };
            if let Some(w) = sizing.warning {
                text.push_str(&format!("# warning: {w}\n"));
            }
            Ok(text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            if e.is_fault() {
                ExitCode::from(3)
            } else if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
