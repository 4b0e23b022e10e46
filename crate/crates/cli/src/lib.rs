//! `qab` command-line front end.
//!
//! Reports are `key = value` lines in SI units with nine significant digits. Exit
//! codes: 0 success, 1 invalid configuration or arguments, 2 solver non-convergence,
//! 3 I/O failure, 4 verification mismatch.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use qab_core::circuit::{assemble_matrices, Port, QabConfig};
use qab_core::config::load_config;
use qab_core::harmonic_balance::{Network, PowerReport};
use qab_core::powerflow::{solve_phase_shifts, PowerFlowError, PowerFlowProblem};
use qab_core::sweep::{
    power_ratio_map, power_sweep, ratio_map, redundancy_scan, GridAxis, GridResult, RATED_POWER,
};
use qab_core::timedomain::{simulate_cycles_with, steady_state};
use qab_core::zvs::{zvs_check, zvs_check_timedomain, ZvsReport};
use qab_core::QabError;

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "qab",
    version,
    about = "Quad-active-bridge steady-state, power-flow and ZVS analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Converter description (TOML, SI units)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
}

#[derive(Debug, Args)]
struct Demand {
    /// Power absorbed by port 2, W
    #[arg(
        long,
        value_name = "W",
        allow_hyphen_values = true,
        requires = "p4",
        conflicts_with = "p_total"
    )]
    p2: Option<f64>,
    /// Power absorbed by port 4, W
    #[arg(
        long,
        value_name = "W",
        allow_hyphen_values = true,
        requires = "p2",
        conflicts_with = "p_total"
    )]
    p4: Option<f64>,
    /// Total load power, W, divided by --split
    #[arg(long, value_name = "W", allow_hyphen_values = true)]
    p_total: Option<f64>,
    /// Fraction of the total load taken by port 2 (0..1)
    #[arg(long, value_name = "F", default_value_t = 0.5)]
    split: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the periodic steady state and write the waveform CSV
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Waveform CSV output (t, v1..v4, i1..i4, i5, vac)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Number of switching periods to record
        #[arg(long, value_name = "N", default_value_t = 2)]
        cycles: usize,
        /// Samples per switching period (at least 64)
        #[arg(long, value_name = "N", default_value_t = 512)]
        samples_per_cycle: usize,
    },
    /// Harmonic-balance power report at the configured phase shifts
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Also write the report to this file
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Solve phase shifts for commanded load powers (W)
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        demand: Demand,
        /// Also write the report to this file
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Switching-instant currents and ZVS verdicts at the configured phase shifts
    Zvs {
        #[command(flatten)]
        common: Common,
        /// Read the currents from the simulated waveform instead of the fundamental
        #[arg(long)]
        timedomain: bool,
        /// Also write the report to this file
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// ZVS map over the load conversion ratios m2 and m4 (grid CSV)
    ZvsMap {
        #[command(flatten)]
        common: Common,
        /// Port-2 conversion ratio axis, min:max:count
        #[arg(
            long,
            value_name = "a:b:n",
            allow_hyphen_values = true,
            default_value = "0.8:1.5:21"
        )]
        m2: String,
        /// Port-4 conversion ratio axis, min:max:count
        #[arg(
            long,
            value_name = "a:b:n",
            allow_hyphen_values = true,
            default_value = "0.75:1.25:21"
        )]
        m4: String,
        /// Total load power, W (default: 10% of 500 W)
        #[arg(long, value_name = "W", allow_hyphen_values = true, default_value_t = 0.1 * RATED_POWER)]
        p_total: f64,
        /// Fraction of the total load taken by port 2 (0..1)
        #[arg(long, value_name = "F", default_value_t = 0.5)]
        split: f64,
        /// Grid CSV output (standard output when absent)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Phase shifts, powers and ZVS versus total load power (grid CSV)
    PowerSweep {
        #[command(flatten)]
        common: Common,
        /// Total load power axis in W, min:max:count
        #[arg(
            long,
            value_name = "a:b:n",
            allow_hyphen_values = true,
            default_value = "0:500:51"
        )]
        p: String,
        /// Fraction of the total load taken by port 2 (0..1)
        #[arg(long, value_name = "F", default_value_t = 0.5)]
        split: f64,
        /// Grid CSV output (standard output when absent)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// ZVS map over the port-4 conversion ratio and total load power (grid CSV)
    PowerRatioMap {
        #[command(flatten)]
        common: Common,
        /// Port-4 conversion ratio axis, min:max:count
        #[arg(
            long,
            value_name = "a:b:n",
            allow_hyphen_values = true,
            default_value = "0.75:1.25:21"
        )]
        m4: String,
        /// Total load power axis in W, min:max:count
        #[arg(
            long,
            value_name = "a:b:n",
            allow_hyphen_values = true,
            default_value = "0:380:20"
        )]
        p: String,
        /// Fraction of the total load taken by port 2 (0..1)
        #[arg(long, value_name = "F", default_value_t = 0.5)]
        split: f64,
        /// Grid CSV output (standard output when absent)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Port-1 power and current under a common phase offset
    Redundancy {
        #[command(flatten)]
        common: Common,
        /// Total load power, W
        #[arg(long, value_name = "W", allow_hyphen_values = true)]
        p_total: f64,
        /// Fraction of the total load taken by port 2 (0..1)
        #[arg(long, value_name = "F", default_value_t = 0.5)]
        split: f64,
        /// Common offset axis in phase-shift-ratio units, min:max:count
        #[arg(
            long,
            value_name = "a:b:n",
            allow_hyphen_values = true,
            default_value = "-1:1:21"
        )]
        offset: String,
        /// CSV output (offset, p1, i1_peak)
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Check harmonic-balance currents against the simulated fundamentals
    Compare {
        #[command(flatten)]
        common: Common,
        /// Amplitude tolerance, percent
        #[arg(long, value_name = "PCT", default_value_t = 2.0)]
        tol_amp: f64,
        /// Phase tolerance, degrees
        #[arg(long, value_name = "DEG", default_value_t = 2.0)]
        tol_phase: f64,
        /// Samples per switching period (at least 64)
        #[arg(long, value_name = "N", default_value_t = 4096)]
        samples_per_cycle: usize,
        /// Also write the report to this file
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

type CliResult<T> = Result<T, Failure>;

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

impl From<QabError> for Failure {
    fn from(e: QabError) -> Self {
        let code = match e {
            QabError::File { .. } | QabError::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        fail(code, e.to_string())
    }
}

impl From<PowerFlowError> for Failure {
    fn from(e: PowerFlowError) -> Self {
        match e {
            PowerFlowError::Model(inner) => inner.into(),
            PowerFlowError::InvalidProblem(_) => fail(EXIT_CONFIG, e.to_string()),
            _ => fail(EXIT_NO_CONVERGENCE, e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    fail(EXIT_IO, format!("{}: {e}", path.display()))
}

/// Opens every output before any computation so an unwritable path fails fast.
fn create(path: &Option<PathBuf>) -> CliResult<Option<(PathBuf, BufWriter<File>)>> {
    path.as_ref()
        .map(|p| {
            File::create(p)
                .map(|f| (p.clone(), BufWriter::new(f)))
                .map_err(|e| io_failure(p, e))
        })
        .transpose()
}

fn finish(file: Option<(PathBuf, BufWriter<File>)>, body: &[u8]) -> CliResult<()> {
    if let Some((path, mut w)) = file {
        w.write_all(body)
            .and_then(|_| w.flush())
            .map_err(|e| io_failure(&path, e))?;
    }
    Ok(())
}

fn g(v: f64) -> String {
    format!("{v:.8e}")
}

struct Report(String);

impl Report {
    fn new() -> Self {
        Report(String::new())
    }

    fn num(&mut self, key: &str, v: f64) {
        self.0 += &format!("{key} = {}\n", g(v));
    }

    fn text(&mut self, key: &str, v: impl std::fmt::Display) {
        self.0 += &format!("{key} = {v}\n");
    }
}

fn power_lines(r: &mut Report, p: &PowerReport) {
    for k in 0..4 {
        r.num(&format!("p{}", k + 1), p.p[k]);
    }
    for k in 0..4 {
        r.num(&format!("q{}", k + 1), p.q[k]);
    }
    for k in 0..4 {
        r.num(&format!("i_peak{}", k + 1), p.i_peak[k]);
    }
    r.num("p13", p.p13);
    r.num("p_copper", p.p_copper);
}

fn zvs_lines(r: &mut Report, z: &ZvsReport) {
    for k in 0..4 {
        let n = k + 1;
        r.num(&format!("i_sw{n}"), z.i_sw[k]);
        r.num(&format!("margin{n}"), z.margin[k]);
        r.num(&format!("q{n}"), z.q[k]);
        r.text(&format!("zvs{n}"), z.zvs[k]);
    }
}

fn delta_lines(r: &mut Report, delta: &[f64; 4]) {
    for (k, d) in delta.iter().enumerate() {
        r.num(&format!("delta{}", k + 1), *d);
    }
}

fn grid_csv(g: &GridResult) -> Vec<u8> {
    let mut buf = Vec::new();
    g.write_csv(&mut buf).expect("writing to memory");
    buf
}

fn emit_grid(
    out: &mut dyn Write,
    file: Option<(PathBuf, BufWriter<File>)>,
    grid: &GridResult,
) -> CliResult<()> {
    let csv = grid_csv(grid);
    let mut r = Report::new();
    r.text("cells", grid.cells.len());
    r.text("converged", grid.converged_count());
    match file {
        Some(f) => {
            finish(Some(f), &csv)?;
            write_out(out, r.0.as_bytes())
        }
        None => write_out(out, &csv),
    }
}

fn write_out(out: &mut dyn Write, body: &[u8]) -> CliResult<()> {
    out.write_all(body)
        .map_err(|e| fail(EXIT_IO, format!("standard output: {e}")))
}

fn report_out(
    out: &mut dyn Write,
    file: Option<(PathBuf, BufWriter<File>)>,
    r: &Report,
) -> CliResult<()> {
    write_out(out, r.0.as_bytes())?;
    finish(file, r.0.as_bytes())
}

fn demands(d: &Demand) -> CliResult<(f64, f64)> {
    match (d.p2, d.p4, d.p_total) {
        (Some(p2), Some(p4), None) => Ok((p2, p4)),
        (None, None, Some(p)) => {
            if !(0.0..=1.0).contains(&d.split) {
                return Err(fail(
                    EXIT_CONFIG,
                    format!("--split must lie in [0, 1], got {}", d.split),
                ));
            }
            Ok((d.split * p, (1.0 - d.split) * p))
        }
        _ => Err(fail(EXIT_CONFIG, "give either --p2 and --p4 or --p-total")),
    }
}

fn axis(name: &str, spec: &str) -> CliResult<GridAxis> {
    Ok(GridAxis::parse(name, spec)?)
}

fn execute(cmd: Command, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Simulate {
            common,
            out: path,
            cycles,
            samples_per_cycle,
        } => {
            let file = create(&path)?;
            let cfg = load_config(&common.config)?;
            if cycles == 0 {
                return Err(fail(EXIT_CONFIG, "--cycles must be at least 1"));
            }
            let mats = assemble_matrices(&cfg)?;
            let x0 = steady_state(&cfg, &mats)?;
            let rec = simulate_cycles_with(&cfg, &mats, x0, cycles, samples_per_cycle)?;
            let mut r = Report::new();
            r.text("samples", rec.len());
            r.num("period", cfg.period());
            let avg = rec.average_power();
            for (k, p) in avg.iter().enumerate() {
                r.num(&format!("p{}_avg", k + 1), *p);
            }
            for p in Port::ALL {
                let i = rec.current(p);
                let peak = i.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                r.num(&format!("i{}_max_abs", p.number()), peak);
            }
            if let Some((path, mut w)) = file {
                rec.write_csv(&mut w)
                    .and_then(|_| w.flush())
                    .map_err(|e| io_failure(&path, e))?;
            }
            write_out(out, r.0.as_bytes())
        }
        Command::Analyze { common, out: path } => {
            let file = create(&path)?;
            let cfg = load_config(&common.config)?;
            let network = Network::new(&cfg)?;
            let (_, p) = network.evaluate(&cfg);
            let mut r = Report::new();
            delta_lines(&mut r, &cfg.delta);
            power_lines(&mut r, &p);
            report_out(out, file, &r)
        }
        Command::Solve {
            common,
            demand,
            out: path,
        } => {
            let file = create(&path)?;
            let cfg = load_config(&common.config)?;
            let (p2, p4) = demands(&demand)?;
            let sol = solve_phase_shifts(&PowerFlowProblem::new(cfg, p2, p4))?;
            let mut r = Report::new();
            delta_lines(&mut r, &sol.delta);
            r.text("iterations", sol.iterations);
            r.num("residual", sol.residual_norm);
            power_lines(&mut r, &sol.report);
            report_out(out, file, &r)
        }
        Command::Zvs {
            common,
            timedomain,
            out: path,
        } => {
            let file = create(&path)?;
            let cfg = load_config(&common.config)?;
            let z = if timedomain {
                zvs_check_timedomain(&cfg)?
            } else {
                zvs_check(&cfg)?
            };
            let mut r = Report::new();
            zvs_lines(&mut r, &z);
            report_out(out, file, &r)
        }
        Command::ZvsMap {
            common,
            m2,
            m4,
            p_total,
            split,
            out: path,
        } => {
            let file = create(&path)?;
            let cfg = load_config(&common.config)?;
            let grid = ratio_map(&cfg, &axis("m2", &m2)?, &axis("m4", &m4)?, p_total, split)?;
            emit_grid(out, file, &grid)
        }
        Command::PowerSweep {
            common,
            p,
            split,
            out: path,
        } => {
            let file = create(&path)?;
            let cfg = load_config(&common.config)?;
            let a = axis("p_total", &p)?;
            if a.min != 0.0 {
                return Err(fail(EXIT_CONFIG, "power sweep axis starts at 0 W"));
            }
            let grid = power_sweep(&cfg, a.max, a.points, split)?;
            emit_grid(out, file, &grid)
        }
        Command::PowerRatioMap {
            common,
            m4,
            p,
            split,
            out: path,
        } => {
            let file = create(&path)?;
            let cfg = load_config(&common.config)?;
            let grid = power_ratio_map(&cfg, &axis("m4", &m4)?, &axis("p_total", &p)?, split)?;
            emit_grid(out, file, &grid)
        }
        Command::Redundancy {
            common,
            p_total,
            split,
            offset,
            out: path,
        } => {
            let file = create(&path)?;
            let cfg = load_config(&common.config)?;
            let rows = redundancy_scan(&cfg, p_total, split, &axis("offset", &offset)?)?;
            let mut csv = String::from("offset,p1,i1_peak\n");
            for row in &rows {
                csv += &format!("{},{},{}\n", row.offset, row.p1, row.i1_peak);
            }
            let (p_lo, p_hi) = min_max(rows.iter().map(|r| r.p1));
            let (i_lo, i_hi) = min_max(rows.iter().map(|r| r.i1_peak));
            let mut r = Report::new();
            r.text("rows", rows.len());
            r.num("p1_min", p_lo);
            r.num("p1_max", p_hi);
            r.num("i1_peak_min", i_lo);
            r.num("i1_peak_max", i_hi);
            write_out(out, r.0.as_bytes())?;
            finish(file, csv.as_bytes())
        }
        Command::Compare {
            common,
            tol_amp,
            tol_phase,
            samples_per_cycle,
            out: path,
        } => {
            let file = create(&path)?;
            let cfg = load_config(&common.config)?;
            let (r, ok) = compare(&cfg, tol_amp, tol_phase, samples_per_cycle)?;
            report_out(out, file, &r)?;
            if ok {
                Ok(())
            } else {
                Err(fail(
                    EXIT_MISMATCH,
                    "harmonic-balance currents exceed the tolerance",
                ))
            }
        }
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn compare(
    cfg: &QabConfig,
    tol_amp: f64,
    tol_phase: f64,
    samples: usize,
) -> CliResult<(Report, bool)> {
    let network = Network::new(cfg)?;
    let (ph, _) = network.evaluate(cfg);
    let mats = assemble_matrices(cfg)?;
    let x0 = steady_state(cfg, &mats)?;
    let rec = simulate_cycles_with(cfg, &mats, x0, 1, samples)?;
    let mut pairs = Vec::with_capacity(5);
    for p in Port::ALL {
        pairs.push((
            format!("i{}", p.number()),
            ph.i_hat[p.index()],
            rec.fundamental_of(&rec.current(p))?,
        ));
    }
    pairs.push((
        "i5".to_string(),
        ph.link_current(),
        rec.fundamental_of(&rec.i5)?,
    ));

    let mut r = Report::new();
    let mut ok = true;
    for (name, hb, td) in pairs {
        let amp = if td.norm() > 0.0 {
            100.0 * (hb.norm() - td.norm()).abs() / td.norm()
        } else {
            100.0 * hb.norm()
        };
        let phase = (hb * td.conj()).arg().to_degrees().abs();
        let pass = amp <= tol_amp && (phase <= tol_phase || td.norm() == 0.0);
        ok &= pass;
        r.num(&format!("{name}_amp_hb"), hb.norm());
        r.num(&format!("{name}_amp_td"), td.norm());
        r.num(&format!("{name}_amp_err_pct"), amp);
        r.num(&format!("{name}_phase_err_deg"), phase);
        r.text(&format!("{name}_pass"), pass);
    }
    r.text("pass", ok);
    Ok((r, ok))
}

/// Parses `args` (program name first) and runs one command, writing the report to
/// `out` and diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demand(p2: Option<f64>, p4: Option<f64>, p_total: Option<f64>, split: f64) -> Demand {
        Demand {
            p2,
            p4,
            p_total,
            split,
        }
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(g(0.456), "4.56000000e-1");
        assert_eq!(g(-250.0), "-2.50000000e2");
        assert_eq!(g(1.0 / 3.0), "3.33333333e-1");
    }

    #[test]
    fn demand_forms() {
        assert_eq!(
            demands(&demand(Some(1.0), Some(2.0), None, 0.5)).unwrap(),
            (1.0, 2.0)
        );
        assert_eq!(
            demands(&demand(None, None, Some(400.0), 0.25)).unwrap(),
            (100.0, 300.0)
        );
        assert_eq!(
            demands(&demand(None, None, Some(1.0), 1.5))
                .unwrap_err()
                .code,
            EXIT_CONFIG
        );
        assert_eq!(
            demands(&demand(None, None, None, 0.5)).unwrap_err().code,
            EXIT_CONFIG
        );
    }

    #[test]
    fn run_in_memory() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["qab", "--help"], &mut out, &mut err), 0);
        assert!(String::from_utf8_lossy(&out).contains("power-ratio-map"));
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["qab", "zvs"], &mut out, &mut err), EXIT_CONFIG);
        assert!(String::from_utf8_lossy(&err).contains("--config"));
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(
            run(
                ["qab", "analyze", "--config", "/missing.toml"],
                &mut out,
                &mut err
            ),
            EXIT_IO
        );
        assert!(out.is_empty());
    }

    #[test]
    fn error_codes() {
        assert_eq!(
            Failure::from(QabError::NoUniqueSteadyState).code,
            EXIT_CONFIG
        );
        assert_eq!(
            Failure::from(QabError::Io(std::io::Error::other("x"))).code,
            EXIT_IO
        );
        assert_eq!(
            Failure::from(PowerFlowError::JacobianSingular { iteration: 1 }).code,
            EXIT_NO_CONVERGENCE
        );
    }
}
