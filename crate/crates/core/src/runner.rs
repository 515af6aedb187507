//! Command implementations behind the `reclab` binary: CSV emission and run manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiment::{limit_law, AnnealedResult, ExperimentConfig, LawComparison, MeanRow, QuenchedResult, System};
use crate::models::theta_ratio_sequence;
use crate::polya_aeppli::{Pmf, PolyaAeppli, DEFAULT_TAIL_EPS};
use crate::returns::fmt_num;
use crate::symbolic::PeriodicPoint;

/// Provenance of every file a command writes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the config file bytes.
    pub config_digest: Option<String>,
    pub code_version: String,
    pub master_seed: Option<u64>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<String>,
}

pub fn config_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Collects output files under one directory and finishes with `manifest.json`.
struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
    started: u64,
}

impl OutputDir {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir { root: root.to_path_buf(), files: Vec::new(), started: unix_now() })
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.root.join(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn with_writer(&mut self, name: &str, f: impl FnOnce(fs::File) -> Result<bool>) -> Result<()> {
        let path = self.root.join(name);
        if f(fs::File::create(&path)?)? {
            self.files.push(name.to_string());
        } else {
            fs::remove_file(path)?;
        }
        Ok(())
    }

    fn finish(mut self, command: &str, digest: Option<String>, seed: Option<u64>) -> Result<RunManifest> {
        self.files.push("manifest.json".into());
        let manifest = RunManifest {
            command: command.into(),
            config_digest: digest,
            code_version: env!("CARGO_PKG_VERSION").into(),
            master_seed: seed,
            started_unix: self.started,
            finished_unix: unix_now(),
            outputs: self.files,
        };
        fs::write(self.root.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PaReport {
    pub t: f64,
    pub p: f64,
    pub pmf: Pmf<f64>,
    pub mean: f64,
    pub variance: f64,
    /// `(k, Q_k)` for `k ≤ 5`.
    pub binomial_moments: Vec<(u64, f64)>,
}

/// Pólya-Aeppli table and moments; `r_max = None` truncates adaptively.
pub fn pa_report(t: f64, p: f64, r_max: Option<usize>) -> Result<PaReport> {
    let law = PolyaAeppli::new(t, p)?;
    let pmf = match r_max {
        Some(r) => law.pmf_table(r),
        None => law.pmf_adaptive(DEFAULT_TAIL_EPS),
    };
    let (mean, variance) = law.mean_variance();
    let binomial_moments = (0..=5).map(|k| (k, law.binomial_moment(k))).collect();
    Ok(PaReport { t, p, pmf, mean, variance, binomial_moments })
}

/// Writes `pmf.csv (r, mass)`, `moments.csv (quantity, value)` and the manifest.
pub fn cmd_pa(t: f64, p: f64, r_max: Option<usize>, out: &Path) -> Result<(PaReport, RunManifest)> {
    let report = pa_report(t, p, r_max)?;
    let mut dir = OutputDir::create(out)?;
    write_pmf(&mut dir, "pmf.csv", &report.pmf)?;
    let mut rows = vec![
        vec!["mean".to_string(), fmt_num(report.mean)],
        vec!["variance".to_string(), fmt_num(report.variance)],
        vec!["tail_mass".to_string(), fmt_num(report.pmf.tail_mass)],
    ];
    rows.extend(report.binomial_moments.iter().map(|&(k, q)| vec![format!("Q_{k}"), fmt_num(q)]));
    dir.csv("moments.csv", &["quantity", "value"], rows)?;
    let manifest = dir.finish("pa", None, None)?;
    Ok((report, manifest))
}

fn write_pmf(dir: &mut OutputDir, name: &str, pmf: &Pmf<f64>) -> Result<()> {
    dir.csv(
        name,
        &["r", "mass"],
        pmf.masses.iter().enumerate().map(|(r, &m)| vec![r.to_string(), fmt_num(m)]),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaReport {
    pub point: String,
    pub period: usize,
    pub theta: f64,
    /// `(n, μ(A_{n+m}) / μ(A_n), |ratio - ϑ|)`.
    pub ratios: Vec<(usize, f64, f64)>,
    /// Fitted `C κ^n` for the ratio deviations (Gibbs systems only).
    pub decay_rate: Option<f64>,
}

/// `ϑ` in closed form with the cylinder-ratio sequence as a cross-check.
pub fn theta_report(system: &System<f64>, point: &PeriodicPoint, n_max: usize) -> Result<ThetaReport> {
    let m = point.period();
    let n_max = n_max.max(2 * m);
    let (theta, ratios, decay_rate) = match system {
        System::Gibbs(g) => {
            let rc = g.theta_ratio_convergence(point, n_max)?;
            (rc.theta, rc.rows, Some(rc.fit.rate))
        }
        System::TwoElement(model) => product_ratios(model, point, n_max)?,
        System::Countable(model) => product_ratios(model, point, n_max)?,
    };
    Ok(ThetaReport { point: point.to_string(), period: m, theta, ratios, decay_rate })
}

type Ratios = (f64, Vec<(usize, f64, f64)>, Option<f64>);

fn product_ratios<M: crate::models::BernoulliFamily<f64>>(model: &M, point: &PeriodicPoint, n_max: usize) -> Result<Ratios> {
    let theta = crate::models::theta_closed_form(model, point)?;
    let ns: Vec<usize> = (1..=n_max).collect();
    let seq = theta_ratio_sequence(model, point, &ns)?;
    Ok((theta, ns.into_iter().zip(seq).map(|(n, r)| (n, r, (r - theta).abs())).collect(), None))
}

/// Writes `theta.csv (n, ratio, abs_error)` and the manifest.
pub fn cmd_theta(config_path: &Path, point: Option<&str>, n_max: usize, out: &Path) -> Result<(ThetaReport, RunManifest)> {
    let (cfg, bytes) = RunConfig::load(config_path)?;
    let point = match point {
        Some(s) => PeriodicPoint::new(s.parse()?),
        None => cfg.periodic_point()?,
    };
    let report = theta_report(&cfg.model.build()?, &point, n_max)?;
    let mut dir = OutputDir::create(out)?;
    dir.csv(
        "theta.csv",
        &["n", "ratio", "abs_error"],
        report.ratios.iter().map(|&(n, r, e)| vec![n.to_string(), fmt_num(r), fmt_num(e)]),
    )?;
    let manifest = dir.finish("theta", Some(config_digest(&bytes)), None)?;
    Ok((report, manifest))
}

/// Everything a convergence run computes.
#[derive(Debug, Clone)]
pub struct ConvergeOutcome {
    pub experiment: ExperimentConfig<f64>,
    pub theta: f64,
    pub quenched: Vec<QuenchedResult<f64>>,
    pub annealed: AnnealedResult<f64>,
    pub means: Vec<MeanRow<f64>>,
    pub manifest: RunManifest,
}

const SUMMARY_HEADER: [&str; 8] = ["n", "engine", "tv", "mean_err", "theta", "N_n", "tail", "bias_bound"];

fn summary_row(row: &LawComparison<f64>, theta: f64) -> Vec<String> {
    vec![
        row.n.to_string(),
        row.engine.to_string(),
        fmt_num(row.tv),
        fmt_num(row.mean_abs_error),
        fmt_num(theta),
        row.horizon.to_string(),
        fmt_num(row.distribution.tail_mass),
        fmt_num(row.distribution.bias_bound),
    ]
}

/// Runs the quenched and annealed experiments described by a config file.
///
/// Files: `summary.csv` (environment averages), `quenched.csv` (one row per
/// environment, `n` and engine), `means.csv`, `pmf.csv` (the limit law), per-law
/// tables `dist_*.csv`, environment exports `env_*.csv`, and `manifest.json`.
pub fn cmd_converge(config_path: &Path, out: &Path, seed: Option<u64>, budget: Option<u64>) -> Result<ConvergeOutcome> {
    let (cfg, bytes) = RunConfig::load(config_path)?;
    let exp = cfg.experiment(seed, budget).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", config_path.display())),
        other => other,
    })?;
    run_converge(exp, Some(config_digest(&bytes)), out)
}

pub fn run_converge(exp: ExperimentConfig<f64>, digest: Option<String>, out: &Path) -> Result<ConvergeOutcome> {
    let theta = exp.theta()?;
    let envs = exp.draw_environments()?;
    let quenched = exp.run_quenched(&envs)?;
    let annealed = exp.run_annealed(&quenched)?;
    let means = exp.overlap_count_check(&envs, &exp.u_list)?;

    let mut dir = OutputDir::create(out)?;
    dir.csv("summary.csv", &SUMMARY_HEADER, annealed.rows.iter().map(|r| summary_row(r, theta)))?;
    let mut header = vec!["env", "seed"];
    header.extend_from_slice(&SUMMARY_HEADER);
    dir.csv(
        "quenched.csv",
        &header,
        quenched.iter().flat_map(|q| {
            q.rows.iter().map(move |r| {
                let mut row = vec![q.env_id.to_string(), q.env_seed.to_string()];
                row.extend(summary_row(r, theta));
                row
            })
        }),
    )?;
    dir.csv(
        "means.csv",
        &["n", "env", "u", "N_n", "expectation", "target", "abs_error"],
        means.iter().map(|m| {
            vec![
                m.n.to_string(),
                m.env_id.to_string(),
                m.u.to_string(),
                m.horizon.to_string(),
                fmt_num(m.expectation),
                fmt_num(m.target),
                fmt_num(m.abs_error),
            ]
        }),
    )?;
    write_pmf(&mut dir, "pmf.csv", &limit_law(exp.t, theta)?.pmf_table(exp.r_max))?;
    for q in &quenched {
        for r in &q.rows {
            let name = format!("dist_e{}_n{}_{}.csv", q.env_id, r.n, r.engine);
            dir.with_writer(&name, |f| r.distribution.write_csv(f).map(|_| true))?;
        }
    }
    for r in &annealed.rows {
        let name = format!("dist_annealed_n{}_{}.csv", r.n, r.engine);
        dir.with_writer(&name, |f| r.distribution.write_csv(f).map(|_| true))?;
    }
    for r in &annealed.marginal {
        let name = format!("dist_marginal_n{}_{}.csv", r.n, r.engine);
        dir.with_writer(&name, |f| r.distribution.write_csv(f).map(|_| true))?;
    }
    for i in 0..envs.len() {
        dir.with_writer(&format!("env_{i}.csv"), |f| envs.write_csv(i, f))?;
    }
    let manifest = dir.finish("converge", digest, Some(exp.master_seed))?;
    Ok(ConvergeOutcome { experiment: exp, theta, quenched, annealed, means, manifest })
}
