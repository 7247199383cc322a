//! Command-line front end. [`dispatch`] is the whole program; `main` only
//! wires it to the process streams.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::estimators::{cumulants, estimate, invert_to_theta};
use crate::experiments::{report_csv, run_experiment, write_report, ExperimentConfig};
use crate::kernels::{cov, make_kernel, KernelFamily, KernelSpec, TimeGrid};
use crate::ou_covariance::{fou_acf, ou_cov_pair, ou_gram, OUSpec, QuadConfig};
use crate::rates::{tv_branch, SeriesConfig};
use crate::simulate::{path_oracle_batch, sample, PathConfig, SampleBatch};

/// Environment variable that caps the worker thread count.
pub const THREADS_ENV: &str = "QV_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "qv",
    version,
    about = "Quadratic-variation estimation for fractional OU processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct KernelArgs {
    #[arg(long)]
    family: KernelFamily,
    #[arg(long)]
    hurst: f64,
    /// Bifractional index, bifbm only.
    #[arg(long)]
    k: Option<f64>,
}

impl KernelArgs {
    fn spec(&self) -> Result<KernelSpec> {
        make_kernel(self.family, self.hurst, self.k)
    }

    fn ou(&self, theta: f64) -> Result<OUSpec> {
        OUSpec::new(self.spec()?, theta)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Driver covariance R(s, t).
    Kernel {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        t: f64,
    },
    /// OU covariance E[X_s X_t].
    OuCov {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        t: f64,
    },
    /// Stationary autocovariance table `lag,value`.
    Acf {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        max_lag: u64,
    },
    /// f̂_n (and θ̂ when a kernel is given) for every row of a sample file.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        family: Option<KernelFamily>,
        #[arg(long, requires = "family")]
        hurst: Option<f64>,
        #[arg(long, requires = "family")]
        k: Option<f64>,
    },
    /// v_n and the third and fourth cumulants of the estimator.
    Cumulants {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        n: usize,
    },
    /// Total-variation envelope for covariance decay |t|^{-beta}.
    Rates {
        #[arg(long)]
        beta: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
    },
    /// Limiting variance σ² of √n (f̂_n - f).
    Sigma2 {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        theta: f64,
    },
    /// Draws replications of X_1..X_n, one per row.
    Simulate {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use the fine-grid path simulator instead of the exact sampler.
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = 0.01)]
        fine_step: f64,
    },
    /// Runs a Monte-Carlo experiment described by a JSON file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
}

fn num(x: f64) -> String {
    format!("{x:.15e}")
}

fn batch_csv(batch: &SampleBatch) -> String {
    let mut s = (1..=batch.n)
        .map(|i| format!("x{i}"))
        .collect::<Vec<_>>()
        .join(",");
    s.push('\n');
    for row in batch.rows() {
        s.push_str(&row.iter().map(|&x| num(x)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

fn read_samples(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    })?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        let row = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("not a number: '{f}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(rows)
}

fn execute(cmd: Command) -> Result<String> {
    let q = QuadConfig::default();
    Ok(match cmd {
        Command::Kernel { kernel, s, t } => {
            if !(s >= 0.0 && t >= 0.0 && s.is_finite() && t.is_finite()) {
                return Err(Error::InvalidGrid(format!(
                    "times must be finite and >= 0, got s = {s}, t = {t}"
                )));
            }
            format!("{}\n", num(cov(&kernel.spec()?, s, t)))
        }
        Command::OuCov { kernel, theta, s, t } => {
            format!("{}\n", num(ou_cov_pair(&kernel.ou(theta)?, s, t, &q)?))
        }
        Command::Acf {
            alpha,
            theta,
            max_lag,
        } => {
            let mut out = String::from("lag,value\n");
            for lag in 0..=max_lag {
                out.push_str(&format!(
                    "{lag},{}\n",
                    num(fou_acf(alpha, theta, lag as f64, &q)?)
                ));
            }
            out
        }
        Command::Estimate {
            input,
            family,
            hurst,
            k,
        } => {
            let spec = match family {
                Some(f) => {
                    let h = hurst
                        .ok_or_else(|| Error::ConfigInvalid("--hurst is required with --family".into()))?;
                    Some(make_kernel(f, h, k)?)
                }
                None => None,
            };
            let mut out = String::from("row,n,f_hat,theta_hat\n");
            for (i, row) in read_samples(&input)?.iter().enumerate() {
                let e = estimate(row, None, 0.0)?;
                let theta = match &spec {
                    Some(s) => num(invert_to_theta(e.f_hat, s)?),
                    None => String::new(),
                };
                out.push_str(&format!("{},{},{},{theta}\n", i + 1, e.n, num(e.f_hat)));
            }
            out
        }
        Command::Cumulants { kernel, theta, n } => {
            let c = ou_gram(&kernel.ou(theta)?, &TimeGrid::integers(n), &q)?;
            let r = cumulants(&c)?;
            format!(
                "n,v_n,kappa3,kappa4,tv_bound\n{},{},{},{},{}\n",
                r.n,
                num(r.v_n),
                num(r.kappa3),
                num(r.kappa4),
                num(r.tv_bound)
            )
        }
        Command::Rates { beta, n_list } => {
            let branch = tv_branch(beta)?;
            let mut out = String::from("n,branch,exponent,log_power,envelope\n");
            for n in n_list {
                let env = crate::rates::tv_envelope(beta, n)?;
                out.push_str(&format!(
                    "{n},{},{},{},{}\n",
                    branch.label,
                    num(branch.exponent),
                    num(branch.log_power),
                    num(env)
                ));
            }
            out
        }
        Command::Sigma2 { kernel, theta } => {
            let spec = kernel.ou(theta)?;
            let s2 = crate::experiments::series_sigma2(&spec, &SeriesConfig::default(), &q)?;
            format!("sigma2\n{}\n", num(s2))
        }
        Command::Simulate {
            kernel,
            theta,
            n,
            reps,
            seed,
            out,
            oracle,
            fine_step,
        } => {
            let spec = kernel.ou(theta)?;
            if n == 0 {
                return Err(Error::InvalidGrid("n must be at least 1".into()));
            }
            let batch = if oracle {
                let cfg = PathConfig {
                    fine_step,
                    horizon: n as f64,
                };
                path_oracle_batch(&spec, &cfg, reps, seed)?
            } else {
                sample(&ou_gram(&spec, &TimeGrid::integers(n), &q)?, reps, seed)?
            };
            let text = batch_csv(&batch);
            match out {
                Some(path) => {
                    fs::write(path, text)?;
                    String::new()
                }
                None => text,
            }
        }
        Command::Experiment { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg)?;
            if let Some(path) = &cfg.output_path {
                write_report(&report, path)?;
            }
            report_csv(&report)
        }
    })
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    match execute(cli.command) {
        Ok(text) => match out.write_all(text.as_bytes()) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                EXIT_COMPUTE
            }
        },
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_COMPUTE
            }
        }
    }
}

/// Reads [`THREADS_ENV`] and sizes the global worker pool accordingly.
pub fn configure_threads() -> std::result::Result<(), String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got '{v}'"))?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| e.to_string())
        }
        Err(_) => Ok(()),
    }
}
