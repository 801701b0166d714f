use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qkdsim::calibrate::calibrate;
use qkdsim::config::ScenarioFile;
use qkdsim::decoy::{secure_rate, DecoyEstimate, IntensityStats, KeyRateParams};
use qkdsim::presets::{preset_file, preset_text, PRESET_NAMES};
use qkdsim::report::{analytic_report, montecarlo_report, verify, SCHEMA_VERSION, TOOL, VERSION};
use qkdsim::reproduce::{fig2, fig3, write_csv};
use qkdsim::simulate::{run_montecarlo_with, write_events, RunOptions};
use qkdsim::stats_table::{decoy_inputs, load_stats_table, load_targets};
use qkdsim::Error;

/// Field-link simulator and decoy-state analyzer for 625 MHz time-bin BB84.
#[derive(Parser)]
#[command(name = "qkdsim", version, about)]
struct Cli {
    /// Worker threads for the simulator (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo run of a scenario file or preset; prints a JSON report.
    Simulate {
        scenario: String,
        #[arg(long)]
        pulses: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Cross-check against the analytic expectation (4 sigma).
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write the detection event stream to this file.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Closed-form expectation of a scenario; prints a JSON report.
    Expect {
        scenario: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Decoy-state bounds and secure key rate from a stats table (.csv) or
    /// from the expected statistics of a scenario.
    Decoy {
        input: String,
        /// Clock rate used to convert sifted rates in a stats table.
        #[arg(long, default_value_t = 625e6)]
        clock_hz: f64,
        #[arg(long)]
        sift_factor: Option<f64>,
        #[arg(long)]
        ec_inefficiency: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the datasets of a result figure as CSV.
    Reproduce {
        figure: Figure,
        /// Output directory.
        #[arg(long, default_value = ".")]
        output: PathBuf,
        /// Pulses per window (fig2) or per point (fig3).
        #[arg(long, default_value_t = 100_000_000)]
        pulses: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Fit insertion transmittance, visibility and vacuum yield to targets.
    Calibrate {
        targets: PathBuf,
        /// Device template (file or preset).
        #[arg(long, default_value = "97km-wdm")]
        scenario: String,
        /// Write the calibration overlay (TOML) here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// List presets, or print one as TOML.
    Presets { name: Option<String> },
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    Fig2,
    Fig3,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_CALIBRATION: u8 = 4;

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Domain(_) => EXIT_CONFIG,
            Error::Data(_) | Error::UndefinedBound(_) => EXIT_DATA,
            Error::Calibration(_) => EXIT_CALIBRATION,
            Error::InvalidState(_) => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn io_failure(what: &Path, e: std::io::Error) -> Failure {
    Failure { code: EXIT_DATA, message: format!("{}: {e}", what.display()) }
}

/// A scenario file, or a preset name when no such file exists.
fn load_scenario(arg: &str) -> Result<ScenarioFile, Failure> {
    let path = Path::new(arg);
    if path.exists() {
        return Ok(ScenarioFile::load(path)?);
    }
    if preset_text(arg).is_some() {
        return Ok(preset_file(arg)?);
    }
    Err(Error::Config(format!("{arg}: no such scenario file or preset (presets: {})", PRESET_NAMES.join(", "))).into())
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| io_failure(Path::new("stdout"), e))
        }
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct DecoyReport<'a> {
    schema_version: u32,
    tool: &'a str,
    version: &'a str,
    source: String,
    params: KeyRateParams,
    inputs: Vec<IntensityStats>,
    estimate: DecoyEstimate,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure { code: EXIT_CONFIG, message: format!("--threads: {e}") })?;
    }
    match cli.command {
        Command::Simulate { scenario, pulses, seed, verify: check, output, events } => {
            let file = load_scenario(&scenario)?;
            let s = file.to_scenario()?;
            let pulses = pulses.or(file.run.pulses).unwrap_or(100_000_000);
            let seed = seed.or(file.run.seed).unwrap_or(1);
            let opts = RunOptions { record_events: events.is_some(), ..Default::default() };
            let out = run_montecarlo_with(&s, pulses, seed, &opts)?;
            if let (Some(p), Some(ev)) = (&events, &out.events) {
                let f = fs::File::create(p).map_err(|e| io_failure(p, e))?;
                write_events(std::io::BufWriter::new(f), ev).map_err(|e| io_failure(p, e))?;
            }
            let mut report = montecarlo_report(&file, &out.stats, seed)?;
            if check {
                report.verify = Some(verify(&report, 4.0)?);
            }
            emit(output.as_deref(), &report.to_json())?;
            if report.verify.as_ref().is_some_and(|v| !v.passed) {
                return Err(Failure { code: 1, message: "Monte-Carlo run disagrees with the analytic expectation".into() });
            }
        }
        Command::Expect { scenario, output } => {
            let file = load_scenario(&scenario)?;
            emit(output.as_deref(), &analytic_report(&file)?.to_json())?;
        }
        Command::Decoy { input, clock_hz, sift_factor, ec_inefficiency, output } => {
            let (source, inputs, mut params) = if input.ends_with(".csv") {
                let rows = load_stats_table(Path::new(&input))?;
                let params = KeyRateParams { clock_rate_hz: clock_hz, ..Default::default() };
                (format!("stats table {input}"), decoy_inputs(&rows, clock_hz)?, params)
            } else {
                let file = load_scenario(&input)?;
                let report = analytic_report(&file)?;
                let inputs = report.intensities.iter().map(|i| i.stats()).collect();
                (format!("expected statistics of {input}"), inputs, file.key_rate_params())
            };
            if let Some(q) = sift_factor {
                params.sift_factor = q;
            }
            if let Some(f) = ec_inefficiency {
                params.ec_inefficiency = f;
            }
            let estimate = secure_rate(&inputs, &params).map_err(|e| match e {
                Error::Config(m) => Error::Data(m),
                other => other,
            })?;
            let report =
                DecoyReport { schema_version: SCHEMA_VERSION, tool: TOOL, version: VERSION, source, params, inputs, estimate };
            emit(output.as_deref(), &json(&report))?;
        }
        Command::Reproduce { figure, output, pulses, seed } => {
            fs::create_dir_all(&output).map_err(|e| io_failure(&output, e))?;
            let (name, buf) = match figure {
                Figure::Fig2 => {
                    let mut buf = Vec::new();
                    write_csv(&mut buf, &fig2(pulses, seed)?)?;
                    ("fig2_time_series.csv", buf)
                }
                Figure::Fig3 => {
                    let mut buf = Vec::new();
                    write_csv(&mut buf, &fig3(pulses, seed)?)?;
                    ("fig3_mu_sweep.csv", buf)
                }
            };
            let path = output.join(name);
            fs::write(&path, buf).map_err(|e| io_failure(&path, e))?;
            eprintln!("wrote {}", path.display());
        }
        Command::Calibrate { targets, scenario, output } => {
            let template = load_scenario(&scenario)?.to_scenario()?;
            let rows = load_targets(&targets)?;
            let cal = calibrate(&template, &rows)?;
            if let Some(p) = &output {
                fs::write(p, cal.overlay_toml()).map_err(|e| io_failure(p, e))?;
            }
            emit(None, &json(&cal))?;
        }
        Command::Presets { name } => match name {
            None => emit(None, &(PRESET_NAMES.join("\n") + "\n"))?,
            Some(n) => {
                let text = preset_text(&n).ok_or_else(|| Error::Config(format!("unknown preset `{n}`")))?;
                emit(None, text)?;
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("qkdsim: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
