//! Command-line front end.
//!
//! Exit codes: 0 ok, 2 usage or I/O (including a missing input file or an
//! unwritable output path), 3 validation, 4 invariant violation during a
//! run, 5 config parse error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Matrix3;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::calibration::{
    accuracy_report, fit_calibration, read_samples_csv, synthesize_samples, write_samples_csv, CalibrationError,
    DEFAULT_FULL_SCALE,
};
use crate::config::{self, ConfigError};
use crate::sensor::{calibration_matrix, SensorParams, Wrench3, DEFAULT_DEFLECTION_LIMIT};
use crate::teleop::sim::{run_scenario, SimError, SummaryStats};
use crate::teleop::trace::CsvTraceWriter;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;
pub const EXIT_PARSE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "endohaptics", version, about = "F/T sensor calibration tools and teleoperation scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a teleoperation scenario.
    Run(RunArgs),
    /// Fit a calibration matrix from a samples CSV, or print the analytic one.
    Calibrate(CalibrateArgs),
    /// Write synthetic calibration samples.
    GenSamples(GenArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    config: PathBuf,
    /// Override a config value, e.g. `--set sensor.sigma=0`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Trace CSV path (overrides output.trace).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Summary JSON path (overrides output.summary).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Binary message log path (overrides output.messages).
    #[arg(long)]
    messages: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Samples CSV (dA_mm,dB_mm,dC_mm,Fz_N,Mx_Nmm,My_Nmm).
    #[arg(required_unless_present = "emit_analytic")]
    samples: Option<PathBuf>,
    /// Spring stiffness, N/mm, for the analytic comparison.
    #[arg(long, default_value_t = 0.196)]
    k: f64,
    /// Spring radius, mm, for the analytic comparison.
    #[arg(long, default_value_t = 16.0)]
    d: f64,
    /// Full scale for the accuracy metric: FZ,MX,MY.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    full_scale: Option<Vec<f64>>,
    /// Print the analytic matrix for stiffness K and radius D and exit.
    #[arg(long, num_args = 2, value_names = ["K", "D"], allow_negative_numbers = true)]
    emit_analytic: Option<Vec<f64>>,
    /// Print machine-readable JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0.196, allow_negative_numbers = true)]
    k: f64,
    #[arg(long, default_value_t = 16.0, allow_negative_numbers = true)]
    d: f64,
    #[arg(long)]
    n: usize,
    /// Photo-sensor noise, mm.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    sigma: f64,
    /// Quantization step, mm; 0 disables.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    quantization: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl std::fmt::Display) -> Failure {
    Failure { code, message: message.to_string() }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, out),
        Command::Calibrate(a) => cmd_calibrate(&a, out),
        Command::GenSamples(a) => cmd_gen_samples(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn run() -> i32 {
    run_with(std::env::args_os(), &mut io::stdout().lock(), &mut io::stderr().lock())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| fail(EXIT_USAGE, format!("cannot write {}: {e}", path.display())))
}

/// Writes through to an optional inner writer while hashing everything.
struct HashingWriter<W: Write> {
    inner: Option<W>,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = match &mut self.inner {
            Some(w) => w.write(buf)?,
            None => buf.len(),
        };
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.as_mut().map_or(Ok(()), |w| w.flush())
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    trace_sha256: &'a str,
    #[serde(flatten)]
    summary: &'a SummaryStats,
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = config::load(&a.config, &a.overrides).map_err(|e| {
        let code = match e {
            ConfigError::Read { .. } | ConfigError::Override(_) => EXIT_USAGE,
            ConfigError::Parse(_) => EXIT_PARSE,
            ConfigError::Invalid(_) => EXIT_INVALID,
        };
        fail(code, e)
    })?;
    let scenario = cfg.to_scenario().map_err(|e| fail(EXIT_INVALID, e))?;

    let trace_path = a.trace.clone().or(cfg.output.trace.clone());
    let summary_path = a.summary.clone().or(cfg.output.summary.clone());
    let messages_path = a.messages.clone().or(cfg.output.messages.clone());

    let trace_file = trace_path.as_deref().map(create).transpose()?;
    let mut messages_file = messages_path.as_deref().map(create).transpose()?;
    let mut sink = CsvTraceWriter::new(HashingWriter { inner: trace_file, hasher: Sha256::new() });

    let summary = run_scenario(&scenario, &mut sink, messages_file.as_mut().map(|w| w as &mut dyn Write))
        .map_err(|e| match e {
            SimError::Invariant { .. } => fail(EXIT_INVARIANT, e),
            SimError::Setup(_) => fail(EXIT_INVALID, e),
            SimError::Io(_) => fail(EXIT_USAGE, e),
        })?;
    let digest = sink.into_inner().hasher.finalize();
    let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();

    let io_fail = |e: io::Error| fail(EXIT_USAGE, e);
    writeln!(out, "{summary}").map_err(io_fail)?;
    writeln!(out, "trace sha256:          {hash}").map_err(io_fail)?;
    if let Some(p) = &summary_path {
        let mut w = create(p)?;
        let json = serde_json::to_string_pretty(&RunReport { trace_sha256: &hash, summary: &summary })
            .map_err(|e| fail(EXIT_USAGE, e))?;
        writeln!(w, "{json}").and_then(|_| w.flush()).map_err(io_fail)?;
    }
    Ok(())
}

fn format_matrix(m: &Matrix3<f64>) -> String {
    (0..3)
        .map(|i| format!("  [{:>10.4} {:>10.4} {:>10.4}]", m[(i, 0)], m[(i, 1)], m[(i, 2)]))
        .collect::<Vec<_>>()
        .join("\n")
}

fn calibration_failure(e: CalibrationError) -> Failure {
    match e {
        CalibrationError::Csv(_) | CalibrationError::Header { .. } => fail(EXIT_PARSE, e),
        _ => fail(EXIT_INVALID, e),
    }
}

#[derive(Serialize)]
struct CalibrateReport {
    fitted_printed_form: [[f64; 3]; 3],
    analytic_printed_form: [[f64; 3]; 3],
    max_abs_difference: f64,
    residual_rms: [f64; 3],
    accuracy: crate::calibration::AccuracyReport,
}

fn rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn cmd_calibrate(a: &CalibrateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let io_fail = |e: io::Error| fail(EXIT_USAGE, e);
    if let Some(kd) = &a.emit_analytic {
        let p = SensorParams::new(kd[0], kd[1], DEFAULT_DEFLECTION_LIMIT).map_err(|e| fail(EXIT_INVALID, e))?;
        let cal = calibration_matrix(&p).map_err(|e| fail(EXIT_INVALID, e))?;
        if a.json {
            let json = serde_json::json!({ "k": kd[0], "d": kd[1], "printed_form": rows(&cal.printed_form()) });
            writeln!(out, "{json}").map_err(io_fail)?;
        } else {
            writeln!(out, "analytic calibration (k = {} N/mm, d = {} mm), wrench = -M·readings:", kd[0], kd[1])
                .map_err(io_fail)?;
            writeln!(out, "{}", format_matrix(&cal.printed_form())).map_err(io_fail)?;
        }
        return Ok(());
    }

    let path = a.samples.as_ref().expect("clap requires samples");
    let file = File::open(path).map_err(|e| fail(EXIT_USAGE, format!("cannot read {}: {e}", path.display())))?;
    let samples = read_samples_csv(file).map_err(calibration_failure)?;
    let full_scale = match &a.full_scale {
        Some(v) => Wrench3::new(v[0], v[1], v[2]),
        None => DEFAULT_FULL_SCALE,
    };
    let fit = fit_calibration(&samples).map_err(calibration_failure)?;
    let params = SensorParams::new(a.k, a.d, DEFAULT_DEFLECTION_LIMIT).map_err(|e| fail(EXIT_INVALID, e))?;
    let analytic = calibration_matrix(&params).map_err(|e| fail(EXIT_INVALID, e))?;
    let report = accuracy_report(&fit.matrix, &samples, full_scale).map_err(calibration_failure)?;
    let fitted = fit.matrix.printed_form();
    let reference = analytic.printed_form();
    let max_diff = (fitted - reference).abs().max();

    if a.json {
        let r = CalibrateReport {
            fitted_printed_form: rows(&fitted),
            analytic_printed_form: rows(&reference),
            max_abs_difference: max_diff,
            residual_rms: fit.residual_rms.to_array(),
            accuracy: report,
        };
        let json = serde_json::to_string_pretty(&r).map_err(|e| fail(EXIT_USAGE, e))?;
        writeln!(out, "{json}").map_err(io_fail)?;
        return Ok(());
    }
    let acc = report.per_axis_accuracy;
    let text = format!(
        "samples:            {}\n\
         fitted matrix (wrench = -M·readings):\n{}\n\
         analytic matrix (k = {} N/mm, d = {} mm):\n{}\n\
         max |fitted - analytic|: {:.3e}\n\
         residual rms:       Fz {:.4e} N, Mx {:.4e} N·mm, My {:.4e} N·mm\n\
         accuracy:           Fz {:.2}%, Mx {:.2}%, My {:.2}%, overall {:.2}%{}",
        report.sample_count,
        format_matrix(&fitted),
        a.k,
        a.d,
        format_matrix(&reference),
        max_diff,
        fit.residual_rms.fz,
        fit.residual_rms.mx,
        fit.residual_rms.my,
        acc[0],
        acc[1],
        acc[2],
        report.overall_accuracy,
        if report.below_zero { " (an axis is below zero)" } else { "" },
    );
    writeln!(out, "{text}").map_err(io_fail)
}

fn cmd_gen_samples(a: &GenArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let params = SensorParams::new(a.k, a.d, DEFAULT_DEFLECTION_LIMIT).map_err(|e| fail(EXIT_INVALID, e))?;
    let samples = synthesize_samples(&params, a.n, a.sigma, a.quantization, a.seed).map_err(|e| fail(EXIT_INVALID, e))?;
    let w = create(&a.out)?;
    write_samples_csv(w, &samples).map_err(|e| fail(EXIT_USAGE, e))?;
    writeln!(out, "wrote {} samples to {}", samples.len(), a.out.display()).map_err(|e| fail(EXIT_USAGE, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(std::iter::once("endohaptics").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(call(&[]).0, EXIT_USAGE);
        assert_eq!(call(&["fly"]).0, EXIT_USAGE);
        assert_eq!(call(&["gen-samples", "--n", "3"]).0, EXIT_USAGE);
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn emit_analytic_prints_reference_matrix() {
        let (code, out, _) = call(&["calibrate", "--emit-analytic", "0.196", "16"]);
        assert_eq!(code, 0);
        assert!(out.contains("0.1960"), "{out}");
        assert!(out.contains("3.1360"), "{out}");
        assert!(out.contains("-2.7159"), "{out}");
    }

    #[test]
    fn invalid_sensor_params_exit_3() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let (code, _, err) = call(&["gen-samples", "--k", "-1", "--n", "3", "--out", p.to_str().unwrap()]);
        assert_eq!(code, EXIT_INVALID);
        assert!(err.contains('k'), "{err}");
    }

    #[test]
    fn missing_config_exits_2() {
        let (code, _, err) = call(&["run", "/nonexistent/scenario.toml"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("cannot read"));
    }
}
