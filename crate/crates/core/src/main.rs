use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use camd::anneal::SaParams;
use camd::experiment::{deploy, run_experiment, write_outputs, Algorithm, ExperimentConfig};
use camd::generator::{generate_scenario, GeneratorConfig};
use camd::io::{
    config_from_str, read_sa_params, read_scenario, read_scheme, read_text, report_record,
    write_repair_csv, write_report_csv, write_scenario, write_scheme, write_text,
    write_trace_csv, fmt_float, REPORT_COLUMNS,
};
use camd::latency::objective;
use camd::par::ExecMode;

/// Place chained microservices on an edge cluster.
#[derive(Parser)]
#[command(name = "camd", version)]
struct Cli {
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, env = "CAMD_OUTPUT_DIR", default_value = ".")]
    output_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random scenario and write it as a scenario file.
    Generate(GenerateArgs),
    /// Report the objective and constraint violations of a scheme.
    Evaluate(EvaluateArgs),
    /// Compute a scheme with one algorithm.
    Deploy(DeployArgs),
    /// Run several algorithms on one scenario and tabulate the results.
    Compare(CompareArgs),
    /// Run a parameter sweep over generated scenarios.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator settings (TOML); missing fields take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    servers: Option<usize>,
    #[arg(long)]
    apps: Option<usize>,
    #[arg(long, default_value = "scenario.toml")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    scheme: PathBuf,
    /// Report CSV; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SaArgs {
    /// Annealing parameters (TOML).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Overrides the seed in the parameter file.
    #[arg(long)]
    seed: Option<u64>,
}

impl SaArgs {
    fn load(&self) -> Result<(SaParams, u64)> {
        let params = match &self.params {
            Some(p) => read_sa_params(p)?,
            None => SaParams::default(),
        };
        params.validate()?;
        let seed = self.seed.unwrap_or(params.seed);
        Ok((params, seed))
    }
}

#[derive(Args)]
struct DeployArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "camd")]
    algo: Algorithm,
    #[command(flatten)]
    sa: SaArgs,
    #[arg(long, default_value = "scheme.toml")]
    out: PathBuf,
    /// Per-sweep annealing trace (CAMD only).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Actions taken by the capacity repair pass.
    #[arg(long)]
    repair_log: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "camd,greedy,ceil,random")]
    algos: Vec<Algorithm>,
    #[command(flatten)]
    sa: SaArgs,
    /// Table CSV; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Built-in experiment: fig2 (requests), fig3 (servers) or fig4 (chain length).
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// Experiment settings (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replications: Option<u32>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Run scenarios one after another.
    #[arg(long)]
    sequential: bool,
}

fn resolve(dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        dir.join(path)
    }
}

fn emit(dir: &Path, out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            let p = resolve(dir, p);
            write_text(&p, text)?;
            eprintln!("wrote {}", p.display());
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn csv_text(f: impl FnOnce(&mut Vec<u8>) -> camd::Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(String::from_utf8(buf)?)
}

fn generate(dir: &Path, a: &GenerateArgs) -> Result<()> {
    let mut cfg: GeneratorConfig = match &a.config {
        Some(p) => config_from_str(&read_text(p)?, &p.display().to_string())?,
        None => GeneratorConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.servers {
        cfg.server_count = n;
    }
    if let Some(n) = a.apps {
        cfg.app_count = n;
    }
    let s = generate_scenario(&cfg)?;
    let out = resolve(dir, &a.out);
    write_scenario(&out, &s)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn evaluate(dir: &Path, a: &EvaluateArgs) -> Result<()> {
    let s = read_scenario(&a.scenario)?;
    let d = read_scheme(&a.scheme)?;
    d.check_shape(&s)?;
    let report = objective(&s, &d);
    emit(dir, a.out.as_deref(), &csv_text(|b| write_report_csv(b, &report))?)
}

fn deploy_cmd(dir: &Path, a: &DeployArgs) -> Result<()> {
    let s = read_scenario(&a.scenario)?;
    let (params, seed) = a.sa.load()?;
    let dep = deploy(&s, a.algo, &params, seed)?;
    let out = resolve(dir, &a.out);
    write_scheme(&out, &dep.scheme)?;
    eprintln!("wrote {}", out.display());

    if let Some(t) = &a.trace {
        match &dep.trace {
            Some(trace) => emit(dir, Some(t), &csv_text(|b| write_trace_csv(b, trace))?)?,
            None => eprintln!("no trace: {} does not anneal", a.algo),
        }
    }
    if let Some(r) = &a.repair_log {
        emit(dir, Some(r), &csv_text(|b| write_repair_csv(b, &dep.repair))?)?;
    }
    let report = objective(&s, &dep.scheme);
    if !report.servable() {
        eprintln!("warning: some applications are left without a replica");
    }
    eprintln!("objective {}", fmt_float(report.objective));
    Ok(())
}

fn compare(dir: &Path, a: &CompareArgs) -> Result<()> {
    if a.algos.is_empty() {
        bail!("no algorithms given");
    }
    let s = read_scenario(&a.scenario)?;
    let (params, seed) = a.sa.load()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["algorithm"];
    header.extend(REPORT_COLUMNS);
    header.extend(["runtime_ms", "migrations", "removals"]);
    w.write_record(&header)?;
    for &algo in &a.algos {
        let dep = deploy(&s, algo, &params, seed).with_context(|| format!("running {algo}"))?;
        let mut rec = vec![algo.to_string()];
        rec.extend(report_record(&objective(&s, &dep.scheme)));
        rec.push(fmt_float(dep.runtime.as_secs_f64() * 1e3));
        rec.push(dep.repair.migrations().to_string());
        rec.push(dep.repair.removals().to_string());
        w.write_record(&rec)?;
    }
    let text = String::from_utf8(w.into_inner()?)?;
    emit(dir, a.out.as_deref(), &text)
}

fn sweep(dir: &Path, a: &SweepArgs) -> Result<()> {
    let mut cfg = match (&a.preset, &a.config) {
        (Some(name), _) => ExperimentConfig::by_name(name)
            .with_context(|| format!("unknown preset {name:?}, expected fig2, fig3 or fig4"))?,
        (None, Some(p)) => config_from_str(&read_text(p)?, &p.display().to_string())?,
        (None, None) => bail!("give --preset or --config"),
    };
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    if let Some(s) = a.base_seed {
        cfg.base_seed = s;
    }
    if a.sequential {
        cfg.mode = ExecMode::Sequential;
    }
    let results = run_experiment(&cfg)?;
    for p in write_outputs(dir, &results)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let dir = &cli.output_dir;
    match &cli.command {
        Command::Generate(a) => generate(dir, a),
        Command::Evaluate(a) => evaluate(dir, a),
        Command::Deploy(a) => deploy_cmd(dir, a),
        Command::Compare(a) => compare(dir, a),
        Command::Sweep(a) => sweep(dir, a),
    }
}
