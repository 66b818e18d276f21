//! Algorithm dispatch and parameter sweeps over generated scenarios.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::anneal::{camd_deploy, SaParams, SweepTrace};
use crate::baselines::{
    ceil_sized_deploy, exhaustive_optimal, greedy_spread_deploy, random_deploy, SearchBounds,
};
use crate::error::{Error, Result};
use crate::generator::{generate_scenario, GeneratorConfig, PriorityMode};
use crate::io::{fmt_float, write_text};
use crate::latency::{objective, LatencyReport};
use crate::model::{DeploymentScheme, Scenario};
use crate::par::{self, ExecMode};
use crate::repair::RepairLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Camd,
    Greedy,
    Ceil,
    Random,
    Exhaustive,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Camd,
        Algorithm::Greedy,
        Algorithm::Ceil,
        Algorithm::Random,
        Algorithm::Exhaustive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Camd => "camd",
            Algorithm::Greedy => "greedy",
            Algorithm::Ceil => "ceil",
            Algorithm::Random => "random",
            Algorithm::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                format!("unknown algorithm {s:?}, expected one of {}", names.join(", "))
            })
    }
}

/// One deployer run.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub algorithm: Algorithm,
    pub scheme: DeploymentScheme,
    /// Empty for the exhaustive search, which only visits feasible schemes.
    pub repair: RepairLog,
    /// Annealing trace; CAMD only.
    pub trace: Option<SweepTrace>,
    pub runtime: Duration,
}

/// Runs `algorithm` on `s`. `seed` replaces `params.seed` for CAMD and seeds
/// the randomized baselines.
pub fn deploy(s: &Scenario, algorithm: Algorithm, params: &SaParams, seed: u64) -> Result<Deployment> {
    let start = Instant::now();
    let (scheme, repair, trace) = match algorithm {
        Algorithm::Camd => {
            let p = SaParams {
                seed,
                ..params.clone()
            };
            let out = camd_deploy(s, &p)?;
            (out.scheme, out.repair, Some(out.trace))
        }
        Algorithm::Greedy => {
            let out = greedy_spread_deploy(s, seed)?;
            (out.scheme, out.repair, None)
        }
        Algorithm::Ceil => {
            let out = ceil_sized_deploy(s, seed)?;
            (out.scheme, out.repair, None)
        }
        Algorithm::Random => {
            let out = random_deploy(s, seed)?;
            (out.scheme, out.repair, None)
        }
        Algorithm::Exhaustive => {
            let out = exhaustive_optimal(s, &SearchBounds::default())?;
            (out.scheme, RepairLog::default(), None)
        }
    };
    Ok(Deployment {
        algorithm,
        scheme,
        repair,
        trace,
        runtime: start.elapsed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Requests per application per slot.
    Requests,
    Servers,
    /// Microservices per application.
    ChainLength,
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVariable::Requests => "requests",
            SweepVariable::Servers => "servers",
            SweepVariable::ChainLength => "chain_length",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Prefix of the plot-data file.
    pub name: String,
    pub sweep: SweepVariable,
    pub values: Vec<u64>,
    pub replications: u32,
    /// Replication `r` uses seed `base_seed + r` for both the scenario and
    /// the randomized deployers.
    pub base_seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub sa: SaParams,
    /// Scenario settings not overridden by the sweep variable.
    pub generator: GeneratorConfig,
    pub mode: ExecMode,
    /// Output file names, resolved against the output directory when relative.
    pub results_file: PathBuf,
    pub summary_file: PathBuf,
    pub plot_file: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::fig2()
    }
}

impl ExperimentConfig {
    fn preset(name: &str, sweep: SweepVariable, values: Vec<u64>, generator: GeneratorConfig) -> Self {
        Self {
            name: name.into(),
            sweep,
            values,
            replications: 10,
            base_seed: 0,
            algorithms: vec![Algorithm::Camd, Algorithm::Greedy, Algorithm::Ceil, Algorithm::Random],
            sa: SaParams::default(),
            generator,
            mode: ExecMode::default(),
            results_file: "results.csv".into(),
            summary_file: "summary.csv".into(),
            plot_file: None,
        }
    }

    fn preset_generator() -> GeneratorConfig {
        GeneratorConfig {
            server_count: 3,
            app_count: 3,
            priority_mode: PriorityMode::Explicit(vec![0.5, 0.3, 0.2]),
            ..GeneratorConfig::default()
        }
    }

    /// Requests per application from 2000 to 3000; 3 servers, 3 applications,
    /// chains of 2 to 4.
    pub fn fig2() -> Self {
        let g = GeneratorConfig {
            chain_length_range: [2, 4],
            ..Self::preset_generator()
        };
        Self::preset("fig2", SweepVariable::Requests, vec![2000, 2250, 2500, 2750, 3000], g)
    }

    /// 3, 5 and 7 servers; 2000 requests per application, chains of 5 to 7.
    pub fn fig3() -> Self {
        let g = GeneratorConfig {
            chain_length_range: [5, 7],
            request_total_range: [2000, 2000],
            ..Self::preset_generator()
        };
        Self::preset("fig3", SweepVariable::Servers, vec![3, 5, 7], g)
    }

    /// Chains of 3, 5 and 7 microservices; 3 servers, 2000 requests per application.
    pub fn fig4() -> Self {
        let g = GeneratorConfig {
            request_total_range: [2000, 2000],
            ..Self::preset_generator()
        };
        Self::preset("fig4", SweepVariable::ChainLength, vec![3, 5, 7], g)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "fig2" => Some(Self::fig2()),
            "fig3" => Some(Self::fig3()),
            "fig4" => Some(Self::fig4()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParams("replications must be at least 1".into()));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidParams("no sweep values".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidParams("no algorithms".into()));
        }
        if self.values.contains(&0) {
            return Err(Error::InvalidParams(format!("{} values must be positive", self.sweep)));
        }
        self.sa.validate()?;
        for &v in &self.values {
            self.generator_for(v, 0).validate()?;
        }
        Ok(())
    }

    /// Generator settings for one sweep point and replication.
    pub fn generator_for(&self, value: u64, replication: u32) -> GeneratorConfig {
        let mut g = self.generator.clone();
        g.seed = self.seed_for(replication);
        match self.sweep {
            SweepVariable::Requests => g.request_total_range = [value, value],
            SweepVariable::Servers => g.server_count = value as usize,
            SweepVariable::ChainLength => g.chain_length_range = [value as usize, value as usize],
        }
        g
    }

    pub fn seed_for(&self, replication: u32) -> u64 {
        self.base_seed.wrapping_add(replication as u64)
    }

    pub fn plot_file(&self) -> PathBuf {
        self.plot_file
            .clone()
            .unwrap_or_else(|| format!("{}_plot.csv", self.name).into())
    }
}

/// One (sweep value, replication, algorithm) outcome.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub sweep_value: u64,
    pub replication: u32,
    pub algorithm: Algorithm,
    pub seed: u64,
    /// `Err` holds the message when the scenario or the deployer failed.
    pub report: std::result::Result<LatencyReport, String>,
    pub runtime: Duration,
}

impl ResultRow {
    /// Objective when every application is served.
    pub fn objective(&self) -> Option<f64> {
        self.report.as_ref().ok().filter(|r| r.servable()).map(|r| r.objective)
    }
}

/// Per (sweep value, algorithm) aggregate. `sweep_value` is `None` for the
/// aggregate over all sweep values.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sweep_value: Option<u64>,
    pub algorithm: Algorithm,
    pub runs: usize,
    pub servable_runs: usize,
    pub mean_objective: Option<f64>,
    pub mean_runtime_ms: f64,
    /// `(mean_self - mean_camd) / mean_self` over scenarios where both served
    /// every application. `None` for CAMD itself or without CAMD rows.
    pub camd_reduction: Option<f64>,
    /// Fraction of those scenarios where CAMD's objective is not larger.
    pub camd_not_worse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

/// Generates every (value, replication) scenario, runs each algorithm on it
/// and aggregates. Scenarios are processed concurrently under
/// `ExecMode::Parallel`; rows come out sorted by (value, replication,
/// algorithm position in the config) either way.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let jobs: Vec<(u64, u32)> = cfg
        .values
        .iter()
        .flat_map(|&v| (0..cfg.replications).map(move |r| (v, r)))
        .collect();

    let per_job = par::map(cfg.mode, &jobs, |&(value, rep)| {
        let seed = cfg.seed_for(rep);
        let scenario = generate_scenario(&cfg.generator_for(value, rep));
        cfg.algorithms
            .iter()
            .map(|&algorithm| {
                let outcome = scenario
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|s| {
                        deploy(s, algorithm, &cfg.sa, seed)
                            .map(|d| (objective(s, &d.scheme), d.runtime))
                            .map_err(|e| e.to_string())
                    });
                let (report, runtime) = match outcome {
                    Ok((r, t)) => (Ok(r), t),
                    Err(e) => (Err(e), Duration::ZERO),
                };
                ResultRow {
                    sweep_value: value,
                    replication: rep,
                    algorithm,
                    seed,
                    report,
                    runtime,
                }
            })
            .collect::<Vec<_>>()
    });

    let position = |a: Algorithm| cfg.algorithms.iter().position(|&b| b == a).unwrap_or(usize::MAX);
    let mut rows: Vec<ResultRow> = per_job.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.sweep_value, r.replication, position(r.algorithm)));
    let summary = summarize(cfg, &rows);
    Ok(ExperimentResults {
        config: cfg.clone(),
        rows,
        summary,
    })
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn summarize(cfg: &ExperimentConfig, rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: Vec<Option<u64>> = cfg.values.iter().map(|&v| Some(v)).collect();
    groups.push(None);
    let mut out = Vec::new();
    for value in groups {
        let in_group = |r: &&ResultRow| value.is_none_or(|v| r.sweep_value == v);
        for &algorithm in &cfg.algorithms {
            let mine: Vec<&ResultRow> = rows.iter().filter(in_group).filter(|r| r.algorithm == algorithm).collect();
            let objectives: Vec<f64> = mine.iter().filter_map(|r| r.objective()).collect();

            // Pair with CAMD on the same scenario.
            let pairs: Vec<(f64, f64)> = if algorithm == Algorithm::Camd {
                Vec::new()
            } else {
                mine.iter()
                    .filter_map(|r| {
                        let camd = rows.iter().find(|c| {
                            c.algorithm == Algorithm::Camd
                                && c.sweep_value == r.sweep_value
                                && c.replication == r.replication
                        })?;
                        Some((r.objective()?, camd.objective()?))
                    })
                    .collect()
            };
            let camd_reduction = mean(pairs.iter().map(|p| p.0))
                .zip(mean(pairs.iter().map(|p| p.1)))
                .map(|(theirs, camd)| (theirs - camd) / theirs);
            let camd_not_worse = (!pairs.is_empty())
                .then(|| pairs.iter().filter(|(theirs, camd)| camd <= theirs).count() as f64 / pairs.len() as f64);

            out.push(SummaryRow {
                sweep_value: value,
                algorithm,
                runs: mine.len(),
                servable_runs: objectives.len(),
                mean_objective: mean(objectives.iter().copied()),
                mean_runtime_ms: mean(mine.iter().map(|r| r.runtime.as_secs_f64() * 1e3)).unwrap_or(0.0),
                camd_reduction,
                camd_not_worse,
            });
        }
    }
    out
}

pub const RESULT_COLUMNS: [&str; 12] = [
    "sweep_value",
    "replication",
    "algorithm",
    "seed",
    "objective",
    "feasible",
    "servable",
    "cpu_violation_hz",
    "mem_violation_bytes",
    "per_app_latency",
    "runtime_ms",
    "error",
];

pub const SUMMARY_COLUMNS: [&str; 8] = [
    "sweep_value",
    "algorithm",
    "runs",
    "servable_runs",
    "mean_objective",
    "mean_runtime_ms",
    "camd_reduction",
    "camd_not_worse",
];

fn opt_float(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn write_results_csv<W: Write>(w: W, rows: &[ResultRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RESULT_COLUMNS)?;
    for r in rows {
        let mut rec = vec![
            r.sweep_value.to_string(),
            r.replication.to_string(),
            r.algorithm.to_string(),
            r.seed.to_string(),
        ];
        match &r.report {
            Ok(rep) => {
                rec.extend(crate::io::report_record(rep));
                rec.push(fmt_float(r.runtime.as_secs_f64() * 1e3));
                rec.push(String::new());
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 7));
                rec.push(e.clone());
            }
        }
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.sweep_value.map_or_else(|| "all".into(), |v| v.to_string()),
            r.algorithm.to_string(),
            r.runs.to_string(),
            r.servable_runs.to_string(),
            opt_float(r.mean_objective),
            fmt_float(r.mean_runtime_ms),
            opt_float(r.camd_reduction),
            opt_float(r.camd_not_worse),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Wide table: one row per sweep value, one mean-objective column per algorithm.
pub fn write_plot_csv<W: Write>(w: W, cfg: &ExperimentConfig, rows: &[SummaryRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![cfg.sweep.to_string()];
    header.extend(cfg.algorithms.iter().map(|a| a.to_string()));
    out.write_record(&header)?;
    for &v in &cfg.values {
        let mut rec = vec![v.to_string()];
        for &a in &cfg.algorithms {
            let m = rows
                .iter()
                .find(|r| r.sweep_value == Some(v) && r.algorithm == a)
                .and_then(|r| r.mean_objective);
            rec.push(opt_float(m));
        }
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn csv_string(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

/// Writes results, summary and plot data under `dir`; returns the paths written.
pub fn write_outputs(dir: &Path, results: &ExperimentResults) -> Result<Vec<PathBuf>> {
    let cfg = &results.config;
    let files = [
        (dir.join(&cfg.results_file), csv_string(|b| write_results_csv(b, &results.rows))?),
        (dir.join(&cfg.summary_file), csv_string(|b| write_summary_csv(b, &results.summary))?),
        (dir.join(cfg.plot_file()), csv_string(|b| write_plot_csv(b, cfg, &results.summary))?),
    ];
    let mut written = Vec::new();
    for (path, text) in files {
        write_text(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            values: vec![200, 300],
            replications: 2,
            sa: SaParams {
                max_sweeps: 2,
                moves_per_temp: 5,
                ..SaParams::default()
            },
            ..ExperimentConfig::fig2()
        }
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("gurobi".parse::<Algorithm>().is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(ExperimentConfig::fig2().values, vec![2000, 2250, 2500, 2750, 3000]);
        assert_eq!(ExperimentConfig::fig3().values, vec![3, 5, 7]);
        assert_eq!(ExperimentConfig::fig4().sweep, SweepVariable::ChainLength);
        for name in ["fig2", "fig3", "fig4"] {
            ExperimentConfig::by_name(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn sweep_overrides_generator() {
        let cfg = ExperimentConfig::fig3();
        let g = cfg.generator_for(7, 4);
        assert_eq!(g.server_count, 7);
        assert_eq!(g.seed, 4);
        let s = generate_scenario(&g).unwrap();
        assert_eq!(s.server_count(), 7);
        assert!(s.applications.iter().all(|a| (5..=7).contains(&a.chain.len())));
    }

    #[test]
    fn row_count_and_order() {
        let cfg = small();
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.rows.len(), 2 * 2 * 4);
        let keys: Vec<_> = res.rows.iter().map(|r| (r.sweep_value, r.replication, r.algorithm)).collect();
        assert_eq!(keys[0], (200, 0, Algorithm::Camd));
        assert_eq!(keys[3], (200, 0, Algorithm::Random));
        assert_eq!(keys[4], (200, 1, Algorithm::Camd));
        assert_eq!(keys[15], (300, 1, Algorithm::Random));
        // Per value and algorithm, plus the overall group.
        assert_eq!(res.summary.len(), 3 * 4);
        assert!(res.rows.iter().all(|r| r.report.as_ref().unwrap().within_capacity()));
    }

    #[test]
    fn modes_produce_identical_tables() {
        let seq = run_experiment(&ExperimentConfig { mode: ExecMode::Sequential, ..small() }).unwrap();
        let par = run_experiment(&ExperimentConfig { mode: ExecMode::Parallel, ..small() }).unwrap();
        let strip = |rows: &[ResultRow]| -> Vec<_> {
            rows.iter().map(|r| (r.sweep_value, r.replication, r.algorithm, r.report.clone().ok())).collect()
        };
        assert_eq!(strip(&seq.rows), strip(&par.rows));
    }

    #[test]
    fn outputs_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let res = run_experiment(&small()).unwrap();
        let paths = write_outputs(dir.path(), &res).unwrap();
        assert_eq!(paths.len(), 3);
        let results = std::fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(results.lines().count(), 1 + 16);
        assert!(results.starts_with(&RESULT_COLUMNS.join(",")));
        let plot = std::fs::read_to_string(dir.path().join("fig2_plot.csv")).unwrap();
        assert_eq!(plot.lines().next().unwrap(), "requests,camd,greedy,ceil,random");
        assert_eq!(plot.lines().count(), 3);
    }

    #[test]
    fn zero_replications_rejected() {
        let cfg = ExperimentConfig { replications: 0, ..small() };
        assert!(run_experiment(&cfg).is_err());
    }
}
