//! Command-line front end. Every subcommand writes CSV (6 significant
//! digits) preceded by a `#` line echoing the seed and the configuration.
//!
//! Exit codes: 0 success, 2 configuration error, 3 unsupported
//! configuration, 1 anything else (I/O).

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::density::{self, DeOptions};
use crate::ensemble::{EnsembleSpec, LabelKind};
use crate::exit;
use crate::sim;
use crate::{fmt6, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_UNSUPPORTED: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "nbldpc",
    version,
    about = "Density evolution, EXIT bounds and simulation for non-binary LDPC ensembles on the BEC"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// BP threshold by density evolution.
    Threshold {
        #[command(flatten)]
        common: Common,
    },
    /// Density-evolution trace at one erasure probability.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
    },
    /// BP EXIT curve and the area-theorem upper bound on the MAP threshold.
    Exit {
        #[command(flatten)]
        common: Common,
        /// Grid spacing of the curve.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
    },
    /// Erasure probability at which the zero fixed point loses stability.
    Stability {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo decoding of sampled codes.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: f64,
        /// Symbols per code.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
        /// Also compute density-evolution predictions.
        #[arg(long, value_enum, default_value_t = Analysis::De)]
        analysis: Analysis,
        /// Where to write the `iter,dim,count` histogram CSV.
        #[arg(long)]
        hist_out: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Analysis {
    De,
    None,
}

/// Ensemble and output flags shared by every subcommand. Values given on the
/// command line override those read from `--config`.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// `key = value` file with `lambda`, `rho`, `m` and optional `labels`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Edge-perspective variable degree distribution, e.g. "0.5y + 0.5y^4".
    #[arg(long)]
    pub lambda: Option<String>,
    /// Edge-perspective check degree distribution.
    #[arg(long)]
    pub rho: Option<String>,
    /// Symbols are vectors of m bits.
    #[arg(long)]
    pub m: Option<usize>,
    /// `GL` or `GF:<polynomial mask>`.
    #[arg(long)]
    pub labels: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    /// Builds and validates the ensemble.
    pub fn ensemble(&self) -> crate::Result<EnsembleSpec> {
        let base = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
                    line: 0,
                    field: "config".into(),
                    msg: format!("{}: {e}", path.display()),
                })?;
                Some(EnsembleSpec::from_config_str(&text)?)
            }
            None => None,
        };
        let field = |name: &str, e: Error| match e {
            Error::Parse { msg, .. } => Error::Parse {
                line: 0,
                field: name.into(),
                msg,
            },
            other => other,
        };
        let missing = |name: &str| Error::Parse {
            line: 0,
            field: name.into(),
            msg: "required (flag or config file)".into(),
        };
        let lambda = match (&self.lambda, &base) {
            (Some(s), _) => s.parse().map_err(|e| field("lambda", e))?,
            (None, Some(b)) => b.lambda.clone(),
            (None, None) => return Err(missing("lambda")),
        };
        let rho = match (&self.rho, &base) {
            (Some(s), _) => s.parse().map_err(|e| field("rho", e))?,
            (None, Some(b)) => b.rho.clone(),
            (None, None) => return Err(missing("rho")),
        };
        let m = match (self.m, &base) {
            (Some(m), _) => m,
            (None, Some(b)) => b.m,
            (None, None) => return Err(missing("m")),
        };
        let labels = match (&self.labels, &base) {
            (Some(s), _) => s.parse::<LabelKind>().map_err(|e| field("labels", e))?,
            (None, Some(b)) => b.labels.clone(),
            (None, None) => LabelKind::GeneralLinear,
        };
        EnsembleSpec::new(lambda, rho, m, labels)
    }

    fn header(&self, cmd: &str, e: &EnsembleSpec, extra: &str) -> String {
        let mut h = format!(
            "# nbldpc {cmd} seed={} lambda=\"{}\" rho=\"{}\" m={} labels={}",
            self.seed, e.lambda, e.rho, e.m, e.labels
        );
        if !extra.is_empty() {
            h.push(' ');
            h.push_str(extra);
        }
        h
    }

    fn sink<'a>(&self, stdout: &'a mut dyn Write) -> crate::Result<Box<dyn Write + 'a>> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(stdout),
        })
    }
}

/// Maps a library error to an exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Unsupported(_) => EXIT_UNSUPPORTED,
        Error::Io(_) => EXIT_RUNTIME,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command, stdout) {
        Ok(()) => EXIT_OK,
        // A closed pipe (`| head`) is not a failure of the computation.
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn check_epsilon(eps: f64) -> crate::Result<()> {
    if (0.0..=1.0).contains(&eps) {
        Ok(())
    } else {
        Err(Error::EpsilonOutOfRange(eps))
    }
}

pub fn execute(cmd: &Command, stdout: &mut dyn Write) -> crate::Result<()> {
    match cmd {
        Command::Threshold { common } => {
            let e = common.ensemble()?;
            let t = density::bp_threshold(&e, &DeOptions::default())?;
            let mut out = common.sink(stdout)?;
            writeln!(out, "{}", common.header("threshold", &e, ""))?;
            writeln!(out, "threshold")?;
            writeln!(out, "{}", fmt6(t))?;
            out.flush()?;
        }
        Command::Evolve {
            common,
            epsilon,
            max_iter,
        } => {
            let e = common.ensemble()?;
            check_epsilon(*epsilon)?;
            let opts = DeOptions {
                max_iters: (*max_iter).max(1),
                ..DeOptions::default()
            };
            let trace = density::evolve(&e, *epsilon, &opts)?;
            let mut out = common.sink(stdout)?;
            let extra = format!(
                "epsilon={} outcome={:?} linear_gain={}",
                fmt6(*epsilon),
                trace.outcome,
                fmt6(trace.linear_gain)
            );
            writeln!(out, "{}", common.header("evolve", &e, &extra))?;
            let cols: Vec<String> = (0..=e.m).map(|k| format!("p{k}")).collect();
            writeln!(out, "iter,{},expected_dim", cols.join(","))?;
            for (l, st) in trace.states.iter().enumerate() {
                let ps: Vec<String> = st.probs().iter().map(|&p| fmt6(p)).collect();
                writeln!(out, "{},{},{}", l + 1, ps.join(","), fmt6(st.expected_dim()))?;
            }
            out.flush()?;
        }
        Command::Exit { common, step } => {
            let e = common.ensemble()?;
            if !(*step > 0.0 && *step <= 1e-3) {
                return Err(Error::InvalidEnsemble(format!(
                    "--step {step} outside (0, 0.001]"
                )));
            }
            let opts = DeOptions::default();
            let curve = exit::exit_curve(&e, *step, &opts)?;
            let bound = exit::map_bound_from_curve(&curve, e.design_rate());
            let extra = format!(
                "step={} bp_threshold={} map_bound={} area={} design_rate={} reached={}",
                fmt6(*step),
                fmt6(bound.bp_threshold),
                fmt6(bound.epsilon),
                fmt6(curve.area_from(bound.epsilon)),
                fmt6(bound.design_rate),
                bound.reached
            );
            let mut out = common.sink(stdout)?;
            writeln!(out, "{}", common.header("exit", &e, &extra))?;
            curve.write_csv(&mut out)?;
            out.flush()?;
            drop(out);
            if common.out.is_some() {
                writeln!(stdout, "map_bound={} area={}", fmt6(bound.epsilon), fmt6(curve.area_from(bound.epsilon)))?;
            }
        }
        Command::Stability { common } => {
            let e = common.ensemble()?;
            let bound = density::stability_bound(&e);
            let mut out = common.sink(stdout)?;
            writeln!(out, "{}", common.header("stability", &e, ""))?;
            if e.lambda_prime_zero() == 0.0 {
                writeln!(out, "# condition vacuous, bound = 1")?;
            }
            writeln!(out, "stability_bound")?;
            writeln!(out, "{}", fmt6(bound))?;
            out.flush()?;
        }
        Command::Simulate {
            common,
            epsilon,
            n,
            trials,
            max_iter,
            analysis,
            hist_out,
        } => {
            let e = common.ensemble()?;
            check_epsilon(*epsilon)?;
            if *trials == 0 {
                return Err(Error::InvalidEnsemble("--trials must be at least 1".into()));
            }
            let prediction = match analysis {
                Analysis::De => {
                    let opts = DeOptions::default();
                    let trace = density::evolve(&e, *epsilon, &opts)?;
                    let dec = density::decision_distribution(&e, *epsilon, &opts)?;
                    Some((trace.outcome, dec))
                }
                Analysis::None => None,
            };
            let x = sim::run_experiment(&e, *n, *epsilon, *trials, *max_iter, common.seed)?;
            let (sym, sym_se) = x.symbol_erasure_rate();
            let (bit, bit_se) = x.bit_erasure_rate();
            let mut summary = format!(
                "failure_rate={} block_failure_rate={} symbol_erasure_rate={} symbol_erasure_se={} bit_erasure_rate={} bit_erasure_se={}",
                fmt6(x.failure_rate(sim::FAILURE_FRACTION)),
                fmt6(x.block_failure_rate()),
                fmt6(sym),
                fmt6(sym_se),
                fmt6(bit),
                fmt6(bit_se)
            );
            if let Some((outcome, dec)) = &prediction {
                summary.push_str(&format!(
                    " de_outcome={outcome:?} de_symbol_erasure_rate={} de_decision_dim={}",
                    fmt6(dec.prob_nonzero()),
                    fmt6(dec.expected_dim())
                ));
            }
            let extra = format!(
                "epsilon={} n={n} trials={trials} max_iter={max_iter}",
                fmt6(*epsilon)
            );
            let mut out = common.sink(stdout)?;
            writeln!(out, "{}", common.header("simulate", &e, &extra))?;
            writeln!(out, "# {summary}")?;
            write_trials(&x, &mut out)?;
            out.flush()?;
            drop(out);
            if let Some(path) = hist_out {
                let mut h = BufWriter::new(File::create(path)?);
                writeln!(h, "{}", common.header("simulate", &e, &extra))?;
                write_histogram(&x, &mut h)?;
                h.flush()?;
            }
            if common.out.is_some() {
                writeln!(stdout, "{summary}")?;
            }
        }
    }
    Ok(())
}

fn write_trials(x: &sim::Experiment, out: &mut dyn Write) -> std::io::Result<()> {
    let mut buf = Vec::new();
    x.write_trials_csv(&mut buf)?;
    out.write_all(skip_header(&buf))
}

fn write_histogram(x: &sim::Experiment, out: &mut dyn Write) -> std::io::Result<()> {
    let mut buf = Vec::new();
    x.write_histogram_csv(&mut buf)?;
    out.write_all(skip_header(&buf))
}

/// Drops the experiment's own `#` line; the CLI writes a fuller one.
fn skip_header(buf: &[u8]) -> &[u8] {
    match buf.iter().position(|&b| b == b'\n') {
        Some(i) if buf.first() == Some(&b'#') => &buf[i + 1..],
        _ => buf,
    }
}
