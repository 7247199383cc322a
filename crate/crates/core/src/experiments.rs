//! Monte-Carlo harness: normal-approximation distances, consistency runs,
//! rate regressions and report persistence.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::{a_n, f_hat, v_n};
use crate::kernels::{make_kernel, KernelFamily, TimeGrid};
use crate::ou_covariance::{limit_variance, ou_gram, OUSpec, QuadConfig};
use crate::rates::{
    log_case_variance, log_case_variance_bifou, phi, psi, sigma2_bifou, sigma2_sfou, wasserstein_bound,
    SeriesConfig, BRANCH_TOL,
};
use crate::simulate::{chol, sample_map, GENERATOR_ID};

/// Fewest samples accepted by the empirical distances and by a config.
pub const MIN_SAMPLES: usize = 100;

const CSV_HEADER: &str = "n,distance,envelope,bias_term,v_n,sigma2,slope";

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            min: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    Ok(xs)
}

/// `W1` between the empirical law of `samples` and N(0,1), by quantile
/// coupling against `Φ^{-1}((i - 1/2)/m)`.
pub fn empirical_wasserstein_to_normal(samples: &[f64]) -> Result<f64> {
    let xs = sorted(samples)?;
    let m = xs.len() as f64;
    let z = standard_normal();
    let total: f64 = xs
        .iter()
        .enumerate()
        .map(|(i, x)| (x - z.inverse_cdf((i as f64 + 0.5) / m)).abs())
        .sum();
    Ok(total / m)
}

/// Kolmogorov distance `sup |F_m - Φ|`.
pub fn empirical_ks_to_normal(samples: &[f64]) -> Result<f64> {
    let xs = sorted(samples)?;
    let m = xs.len() as f64;
    let z = standard_normal();
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let p = z.cdf(x);
            ((i as f64 + 1.0) / m - p).max(p - i as f64 / m)
        })
        .fold(0.0, f64::max))
}

/// Least-squares slope of `log distance` against `log n`.
pub fn rate_fit(n_list: &[usize], distances: &[f64]) -> Result<f64> {
    if n_list.len() != distances.len() {
        return Err(Error::DegenerateFit("n_list and distances differ in length"));
    }
    if n_list.len() < 3 {
        return Err(Error::DegenerateFit("at least three points are needed"));
    }
    if distances.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(Error::DegenerateFit("distances must be positive"));
    }
    let xs: Vec<f64> = n_list.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = distances.iter().map(|d| d.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all n are equal"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the limiting `σ` from the autocovariance series.
    SeriesSigma,
    /// Divide by `sqrt(v_n)` computed from the exact covariance.
    ExactVn,
    /// Divide by `σ sqrt(log n)`, for memory index exactly 3/4.
    LogSigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    Wasserstein1,
    Kolmogorov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Clt,
    Consistency,
}

/// The JSON form of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub family: KernelFamily,
    pub hurst: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    pub theta: f64,
    pub n_list: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    pub normalization: Normalization,
    pub distance: Distance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub kind: ExperimentKind,
}

fn default_reps() -> usize {
    2000
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub process: OUSpec,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub normalization: Normalization,
    pub distance: Distance,
    pub output_path: Option<PathBuf>,
    pub kind: ExperimentKind,
    pub quad: QuadConfig,
    pub series: SeriesConfig,
}

impl ExperimentConfig {
    pub fn from_file(file: &ConfigFile) -> Result<Self> {
        let kernel = make_kernel(file.family, file.hurst, file.k)?;
        let process = OUSpec::new(kernel, file.theta)?;
        let cfg = ExperimentConfig {
            process,
            n_list: file.n_list.clone(),
            reps: file.reps,
            seed: file.seed,
            normalization: file.normalization,
            distance: file.distance,
            output_path: file.output.clone(),
            kind: file.kind,
            quad: QuadConfig::default(),
            series: SeriesConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        ExperimentConfig::from_file(&file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ExperimentConfig::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> ConfigFile {
        let k = self.process.kernel;
        ConfigFile {
            family: k.family,
            hurst: k.hurst,
            k: (k.family == KernelFamily::Bifbm).then_some(k.k),
            theta: self.process.theta,
            n_list: self.n_list.clone(),
            reps: self.reps,
            seed: self.seed,
            normalization: self.normalization,
            distance: self.distance,
            output: self.output_path.clone(),
            kind: self.kind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < MIN_SAMPLES {
            return Err(Error::ConfigInvalid(format!(
                "reps = {} is below the minimum of {MIN_SAMPLES}",
                self.reps
            )));
        }
        if self.n_list.is_empty() {
            return Err(Error::ConfigInvalid("n_list is empty".into()));
        }
        if self.n_list[0] < 2 {
            return Err(Error::ConfigInvalid("every n must be at least 2".into()));
        }
        if self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::ConfigInvalid("n_list must be strictly ascending".into()));
        }
        let a = self.memory_index();
        match self.normalization {
            Normalization::SeriesSigma if a >= 0.75 - BRANCH_TOL => Err(Error::ConfigInvalid(format!(
                "series_sigma needs memory index below 3/4, got {a}"
            ))),
            Normalization::LogSigma if (a - 0.75).abs() > BRANCH_TOL => Err(Error::ConfigInvalid(format!(
                "log_sigma needs memory index exactly 3/4, got {a}"
            ))),
            _ => Ok(()),
        }
    }

    /// `H`, or `HK` for bifBm.
    pub fn memory_index(&self) -> f64 {
        self.process.kernel.memory_index()
    }
}

/// Limiting variance of `√n (f̂_n - f)`.
pub fn series_sigma2(spec: &OUSpec, cfg: &SeriesConfig, q: &QuadConfig) -> Result<f64> {
    let k = spec.kernel;
    match k.family {
        KernelFamily::Bifbm => sigma2_bifou(spec.theta, k.hurst, k.k, cfg, q),
        _ => sigma2_sfou(spec.theta, k.hurst, cfg, q),
    }
}

/// `lim v_n / log n` at memory index 3/4.
pub fn log_sigma2(spec: &OUSpec) -> f64 {
    match spec.kernel.family {
        KernelFamily::Bifbm => log_case_variance_bifou(spec.theta, spec.kernel.k),
        _ => log_case_variance(spec.theta),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    /// For CLT runs, the distance to N(0,1); for consistency runs,
    /// `|mean f̂_n - f|`.
    pub distance: f64,
    /// Rate shape the distance is compared against; absent where the theory
    /// gives none.
    pub envelope: Option<f64>,
    /// `√n |A_n - f|`.
    pub bias_term: f64,
    pub v_n: f64,
    /// Normalizing variance: series `σ²`, `v_n`, or the log-case constant.
    pub sigma2: f64,
    pub mean_f_hat: f64,
    pub sd_f_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ConfigFile,
    pub generator_id: String,
    pub crate_version: String,
    pub rows: Vec<ReportRow>,
    /// Log-log slope of distance against `n`, when at least three rows exist.
    pub slope: Option<f64>,
    pub wall_time_secs: f64,
}

fn envelope(cfg: &ExperimentConfig, n: usize, bias: f64, vn: f64) -> Result<Option<f64>> {
    let a = cfg.memory_index();
    let bif = cfg.process.kernel.family == KernelFamily::Bifbm;
    if bif && (a - 0.5).abs() <= BRANCH_TOL {
        // covariance decay is not established at HK = 1/2
        return Ok(None);
    }
    if cfg.kind == ExperimentKind::Consistency {
        return Ok(Some(phi(a, n)?));
    }
    Ok(Some(match cfg.normalization {
        Normalization::SeriesSigma => psi(a, n)?.sqrt(),
        Normalization::LogSigma => (n as f64).ln().powf(-0.5),
        Normalization::ExactVn => {
            let beta = 2.0 - 2.0 * a;
            if beta < 0.5 {
                return Ok(None);
            }
            wasserstein_bound(bias, vn, beta, n)?
        }
    }))
}

fn cell_seed(seed: u64, n: usize) -> u64 {
    seed.wrapping_add((n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let spec = &cfg.process;
    let f = limit_variance(spec);
    let series = match cfg.normalization {
        Normalization::SeriesSigma => Some(series_sigma2(spec, &cfg.series, &cfg.quad)?),
        _ => None,
    };
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let cov = ou_gram(spec, &TimeGrid::integers(n), &cfg.quad)?;
        let an = a_n(&cov);
        let vn = v_n(&cov);
        let nf = n as f64;
        let bias = (an - f).abs();
        let sigma2 = match cfg.normalization {
            Normalization::SeriesSigma => series.expect("computed above"),
            Normalization::ExactVn => vn,
            Normalization::LogSigma => log_sigma2(spec),
        };
        let scale = match cfg.normalization {
            Normalization::LogSigma => (sigma2 * nf.ln()).sqrt(),
            _ => sigma2.sqrt(),
        };

        let factor = chol(&cov)?;
        let fh = sample_map(&factor, cfg.reps, cell_seed(cfg.seed, n), |x| {
            f_hat(x).expect("n >= 2")
        });
        let m = fh.len() as f64;
        let mean = fh.iter().sum::<f64>() / m;
        let sd = (fh.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();

        let distance = match cfg.kind {
            ExperimentKind::Consistency => (mean - f).abs(),
            ExperimentKind::Clt => {
                let z: Vec<f64> = fh.iter().map(|v| nf.sqrt() * (v - f) / scale).collect();
                match cfg.distance {
                    Distance::Wasserstein1 => empirical_wasserstein_to_normal(&z)?,
                    Distance::Kolmogorov => empirical_ks_to_normal(&z)?,
                }
            }
        };
        rows.push(ReportRow {
            n,
            distance,
            envelope: envelope(cfg, n, bias, vn)?,
            bias_term: nf.sqrt() * bias,
            v_n: vn,
            sigma2,
            mean_f_hat: mean,
            sd_f_hat: sd,
        });
    }
    let slope = if rows.len() >= 3 && rows.iter().all(|r| r.distance > 0.0) {
        let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
        let ds: Vec<f64> = rows.iter().map(|r| r.distance).collect();
        Some(rate_fit(&ns, &ds)?)
    } else {
        None
    };
    Ok(ExperimentReport {
        config: cfg.to_file(),
        generator_id: GENERATOR_ID.to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        rows,
        slope,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Distance of the normalized estimator to N(0,1) for every `n`.
pub fn run_clt(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut c = cfg.clone();
    c.kind = ExperimentKind::Clt;
    run(&c)
}

/// Monte-Carlo mean and spread of `f̂_n` against the limit `f`.
pub fn run_consistency(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut c = cfg.clone();
    c.kind = ExperimentKind::Consistency;
    run(&c)
}

/// Runs whichever kind the config names.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// The CSV form of a report. Floats use shortest round-trip formatting.
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{:e},{},{:e},{:e},{:e},{}\n",
            r.n,
            r.distance,
            fmt_opt(r.envelope),
            r.bias_term,
            r.v_n,
            r.sigma2,
            fmt_opt(report.slope)
        ));
    }
    out
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the CSV to `path` and the full report to `path.json`.
pub fn write_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    fs::write(path, report_csv(report))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

fn parse_opt(field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field).map(Some)
    }
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Format(format!("not a number: '{field}'")))
}

/// Reads a report written by [`write_report`], checking that the CSV and
/// its sidecar agree.
pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    let csv = fs::read_to_string(path)?;
    let json = fs::read_to_string(sidecar_path(path))?;
    let report: ExperimentReport = serde_json::from_str(&json).map_err(|e| Error::Format(e.to_string()))?;
    let mut lines = csv.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Format("missing or wrong CSV header".into()));
    }
    let lines: Vec<&str> = lines.collect();
    if lines.len() != report.rows.len() {
        return Err(Error::Format("CSV and sidecar have different row counts".into()));
    }
    for (line, row) in lines.iter().zip(&report.rows) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::Format(format!("expected 7 fields, got {}", f.len())));
        }
        let n: usize = f[0]
            .parse()
            .map_err(|_| Error::Format(format!("bad n: '{}'", f[0])))?;
        let same = n == row.n
            && parse_f64(f[1])? == row.distance
            && parse_opt(f[2])? == row.envelope
            && parse_f64(f[3])? == row.bias_term
            && parse_f64(f[4])? == row.v_n
            && parse_f64(f[5])? == row.sigma2
            && parse_opt(f[6])? == report.slope;
        if !same {
            return Err(Error::Format(format!(
                "CSV row for n = {n} disagrees with the sidecar"
            )));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quantiles(m: usize) -> Vec<f64> {
        let z = standard_normal();
        (0..m)
            .map(|i| z.inverse_cdf((i as f64 + 0.5) / m as f64))
            .collect()
    }

    #[test]
    fn wasserstein_basics() {
        let q = quantiles(500);
        assert_abs_diff_eq!(empirical_wasserstein_to_normal(&q).unwrap(), 0.0, epsilon = 1e-15);
        let shifted: Vec<f64> = q.iter().map(|x| x + 0.3).collect();
        assert_abs_diff_eq!(
            empirical_wasserstein_to_normal(&shifted).unwrap(),
            0.3,
            epsilon = 1e-12
        );
        assert!(matches!(
            empirical_wasserstein_to_normal(&[0.0; 99]),
            Err(Error::TooFewSamples { min: 100, got: 99 })
        ));
    }

    #[test]
    fn kolmogorov_basics() {
        let m = 400;
        let z = standard_normal();
        let at_cdf: Vec<f64> = (0..m)
            .map(|i| z.inverse_cdf((i as f64 + 0.5) / m as f64))
            .collect();
        assert!(empirical_ks_to_normal(&at_cdf).unwrap() <= 1.0 / m as f64);
        assert_abs_diff_eq!(empirical_ks_to_normal(&[0.0; 100]).unwrap(), 0.5, epsilon = 1e-15);
        assert!(empirical_ks_to_normal(&[1.0; 3]).is_err());
    }

    #[test]
    fn normal_draws_are_close() {
        use crate::simulate::replication_normals;
        let mut x = vec![0.0; 100_000];
        replication_normals(42, 0, &mut x);
        assert!(empirical_wasserstein_to_normal(&x).unwrap() < 0.01);
        assert!(empirical_ks_to_normal(&x).unwrap() < 0.005);
    }

    #[test]
    fn rate_fit_cases() {
        let ns = [100usize, 200, 400, 800];
        let d: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powf(-0.5)).collect();
        assert_abs_diff_eq!(rate_fit(&ns, &d).unwrap(), -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(rate_fit(&ns, &[0.2; 4]).unwrap(), 0.0, epsilon = 1e-12);
        let noise = [1.01, 0.99, 1.005, 0.995];
        let d: Vec<f64> = ns
            .iter()
            .zip(noise)
            .map(|(&n, e)| (n as f64).powf(-0.3) * e)
            .collect();
        assert!((rate_fit(&ns, &d).unwrap() + 0.3).abs() < 0.05);
        assert!(rate_fit(&ns[..2], &d[..2]).is_err());
        assert!(rate_fit(&ns, &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    fn base_file() -> ConfigFile {
        ConfigFile {
            family: KernelFamily::Sfbm,
            hurst: 0.6,
            k: None,
            theta: 1.0,
            n_list: vec![20, 40],
            reps: 200,
            seed: 1,
            normalization: Normalization::SeriesSigma,
            distance: Distance::Wasserstein1,
            output: None,
            kind: ExperimentKind::Clt,
        }
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::from_file(&base_file()).is_ok());
        let bad = |f: ConfigFile| matches!(ExperimentConfig::from_file(&f), Err(Error::ConfigInvalid(_)));
        assert!(bad(ConfigFile {
            reps: 99,
            ..base_file()
        }));
        assert!(bad(ConfigFile {
            n_list: vec![],
            ..base_file()
        }));
        assert!(bad(ConfigFile {
            n_list: vec![40, 20],
            ..base_file()
        }));
        assert!(bad(ConfigFile {
            n_list: vec![20, 20],
            ..base_file()
        }));
        assert!(bad(ConfigFile {
            hurst: 0.75,
            ..base_file()
        }));
        assert!(bad(ConfigFile {
            normalization: Normalization::LogSigma,
            ..base_file()
        }));
        assert!(ExperimentConfig::from_file(&ConfigFile {
            hurst: 0.75,
            normalization: Normalization::LogSigma,
            ..base_file()
        })
        .is_ok());
        assert!(matches!(
            ExperimentConfig::from_json("{"),
            Err(Error::ConfigInvalid(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_json(
                r#"{"family":"sfbm","hurst":0.6,"theta":1,"n_list":[10],"normalization":"exact_vn","distance":"kolmogorov","bogus":1}"#
            ),
            Err(Error::ConfigInvalid(_))
        ));
        let parsed = ExperimentConfig::from_json(
            r#"{"family":"bifbm","hurst":0.6,"k":0.8,"theta":1,"n_list":[10],"normalization":"exact_vn","distance":"kolmogorov"}"#,
        )
        .unwrap();
        assert_eq!(parsed.reps, 2000);
        assert_eq!(parsed.kind, ExperimentKind::Clt);
    }

    #[test]
    fn report_round_trip_and_errors() {
        let cfg = ExperimentConfig::from_file(&ConfigFile {
            n_list: vec![10, 20, 40],
            ..base_file()
        })
        .unwrap();
        let report = run_clt(&cfg).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert!(report.slope.is_some());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_report(&report, &path).unwrap();
        assert_eq!(read_report(&path).unwrap(), report);

        fs::write(&path, "garbage\n").unwrap();
        assert!(matches!(read_report(&path), Err(Error::Format(_))));
        fs::write(sidecar_path(&path), "{").unwrap();
        assert!(matches!(read_report(&path), Err(Error::Format(_))));
        assert!(matches!(
            write_report(&report, &dir.path().join("missing/r.csv")),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn consistency_contract() {
        for (family, h, k) in [
            (KernelFamily::Sfbm, 0.6, None),
            (KernelFamily::Bifbm, 0.6, Some(0.8)),
        ] {
            let cfg = ExperimentConfig::from_file(&ConfigFile {
                family,
                hurst: h,
                k,
                n_list: vec![300],
                reps: 500,
                ..base_file()
            })
            .unwrap();
            let r = run_consistency(&cfg).unwrap();
            assert_eq!(r.rows.len(), 1);
            assert!(r.slope.is_none());
            let row = &r.rows[0];
            let slack = 3.0 * row.sd_f_hat / (cfg.reps as f64).sqrt() + row.bias_term / (row.n as f64).sqrt();
            assert!(row.distance <= slack, "{family}: {} > {slack}", row.distance);
        }
    }
}
