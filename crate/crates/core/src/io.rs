//! File formats: scenario and scheme files (TOML), parameter files, and the
//! CSV outputs for reports, sweep traces and repair logs.
//!
//! Scenario files carry explicit units on every physical quantity (see
//! [`crate::units`]); rendering writes canonical units so that parsing a
//! rendered scenario gives back the same values bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::anneal::{SaParams, SweepTrace};
use crate::error::{Error, Result};
use crate::latency::LatencyReport;
use crate::model::{
    ApplicationSpec, BandwidthMatrix, DeploymentScheme, MicroserviceSpec, RequestDistribution,
    Scenario, ServerSpec,
};
use crate::repair::{RepairAction, RepairLog};
use crate::units::{Dimension, Quantity};

/// Renders `x` with 9 significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    servers: Vec<ServerEntry>,
    bandwidth: BandwidthEntry,
    applications: Vec<ApplicationEntry>,
    requests: RequestsEntry,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServerEntry {
    id: usize,
    cpu_capacity: Quantity,
    mem_capacity: Quantity,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BandwidthEntry {
    bw: Vec<Vec<Quantity>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApplicationEntry {
    id: usize,
    priority: f64,
    request_data_size: Quantity,
    chain: Vec<MicroserviceEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MicroserviceEntry {
    cpu_demand: Quantity,
    mem_demand: Quantity,
    cycles_per_request: Quantity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_edge_data: Option<Quantity>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestsEntry {
    arrivals: Vec<Vec<f64>>,
}

fn positive(q: &Quantity, dim: Dimension, field: &str) -> Result<u64> {
    q.to_positive_integer(dim).map_err(|m| Error::parse(field, m))
}

/// Parses a scenario file. `context` names the source in error messages.
/// The result is not validated; call [`Scenario::validate`].
pub fn scenario_from_str(text: &str, context: &str) -> Result<Scenario> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| Error::parse(context, e.to_string()))?;

    let servers = file
        .servers
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(ServerSpec {
                id: s.id,
                cpu_capacity: positive(&s.cpu_capacity, Dimension::Frequency, &format!("servers[{i}].cpu_capacity"))?,
                mem_capacity: positive(&s.mem_capacity, Dimension::Bytes, &format!("servers[{i}].mem_capacity"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = file
        .bandwidth
        .bw
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, q)| {
                    q.to_canonical(Dimension::BitRate)
                        .map_err(|m| Error::parse(format!("bandwidth.bw[{i}][{j}]"), m))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let bandwidth = BandwidthMatrix::from_rows(rows)?;

    let applications = file
        .applications
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let chain = a
                .chain
                .iter()
                .enumerate()
                .map(|(v, m)| {
                    let f = |name: &str| format!("applications[{k}].chain[{v}].{name}");
                    Ok(MicroserviceSpec {
                        cpu_demand: positive(&m.cpu_demand, Dimension::Frequency, &f("cpu_demand"))?,
                        mem_demand: positive(&m.mem_demand, Dimension::Bytes, &f("mem_demand"))?,
                        cycles_per_request: positive(&m.cycles_per_request, Dimension::Cycles, &f("cycles_per_request"))?,
                        out_edge_data: m
                            .out_edge_data
                            .as_ref()
                            .map(|q| positive(q, Dimension::Bytes, &f("out_edge_data")))
                            .transpose()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ApplicationSpec {
                id: a.id,
                priority: a.priority,
                request_data_size: positive(
                    &a.request_data_size,
                    Dimension::Bytes,
                    &format!("applications[{k}].request_data_size"),
                )?,
                chain,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Scenario {
        servers,
        bandwidth,
        applications,
        requests: RequestDistribution {
            arrivals: file.requests.arrivals,
        },
    })
}

/// Renders a scenario in canonical units.
pub fn scenario_to_string(s: &Scenario) -> String {
    let file = ScenarioFile {
        servers: s
            .servers
            .iter()
            .map(|sv| ServerEntry {
                id: sv.id,
                cpu_capacity: Quantity::integral(sv.cpu_capacity, Dimension::Frequency),
                mem_capacity: Quantity::integral(sv.mem_capacity, Dimension::Bytes),
            })
            .collect(),
        bandwidth: BandwidthEntry {
            bw: s
                .bandwidth
                .rows()
                .into_iter()
                .map(|row| row.into_iter().map(|r| Quantity::real(r, Dimension::BitRate)).collect())
                .collect(),
        },
        applications: s
            .applications
            .iter()
            .map(|a| ApplicationEntry {
                id: a.id,
                priority: a.priority,
                request_data_size: Quantity::integral(a.request_data_size, Dimension::Bytes),
                chain: a
                    .chain
                    .iter()
                    .map(|m| MicroserviceEntry {
                        cpu_demand: Quantity::integral(m.cpu_demand, Dimension::Frequency),
                        mem_demand: Quantity::integral(m.mem_demand, Dimension::Bytes),
                        cycles_per_request: Quantity::integral(m.cycles_per_request, Dimension::Cycles),
                        out_edge_data: m.out_edge_data.map(|w| Quantity::integral(w, Dimension::Bytes)),
                    })
                    .collect(),
            })
            .collect(),
        requests: RequestsEntry {
            arrivals: s.requests.arrivals.clone(),
        },
    };
    toml::to_string(&file).expect("scenario serializes")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemeFile {
    servers: usize,
    blocks: Vec<SchemeBlock>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemeBlock {
    app: usize,
    position: usize,
    counts: Vec<u32>,
}

pub fn scheme_from_str(text: &str, context: &str) -> Result<DeploymentScheme> {
    let file: SchemeFile = toml::from_str(text).map_err(|e| Error::parse(context, e.to_string()))?;
    let mut by_block: BTreeMap<(usize, usize), Vec<u32>> = BTreeMap::new();
    for (i, b) in file.blocks.into_iter().enumerate() {
        if b.counts.len() != file.servers {
            return Err(Error::parse(
                format!("{context}: blocks[{i}].counts"),
                format!("expected {} entries, found {}", file.servers, b.counts.len()),
            ));
        }
        if by_block.insert((b.app, b.position), b.counts).is_some() {
            return Err(Error::parse(
                format!("{context}: blocks[{i}]"),
                format!("duplicate entry for app {} position {}", b.app, b.position),
            ));
        }
    }
    let mut counts: Vec<Vec<Vec<u32>>> = Vec::new();
    for ((app, pos), row) in by_block {
        if app > counts.len() || (app == counts.len() && pos != 0) {
            return Err(Error::parse(context, format!("missing entries before app {app} position {pos}")));
        }
        if app == counts.len() {
            counts.push(Vec::new());
        }
        if pos != counts[app].len() {
            return Err(Error::parse(context, format!("missing entries before app {app} position {pos}")));
        }
        counts[app].push(row);
    }
    DeploymentScheme::from_counts(file.servers, counts)
}

pub fn scheme_to_string(d: &DeploymentScheme) -> String {
    let file = SchemeFile {
        servers: d.server_count(),
        blocks: d
            .blocks()
            .map(|b| SchemeBlock {
                app: b.app,
                position: b.pos,
                counts: d.block(b).expect("own block").to_vec(),
            })
            .collect(),
    };
    toml::to_string(&file).expect("scheme serializes")
}

/// Parses any TOML config (parameters, generator or experiment settings).
pub fn config_from_str<T: DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::parse(context, e.to_string()))
}

pub fn config_to_string<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("config serializes")
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    scenario_from_str(&read_text(path)?, &path.display().to_string())
}

pub fn write_scenario(path: &Path, s: &Scenario) -> Result<()> {
    write_text(path, &scenario_to_string(s))
}

pub fn read_scheme(path: &Path) -> Result<DeploymentScheme> {
    scheme_from_str(&read_text(path)?, &path.display().to_string())
}

pub fn write_scheme(path: &Path, d: &DeploymentScheme) -> Result<()> {
    write_text(path, &scheme_to_string(d))
}

pub fn read_sa_params(path: &Path) -> Result<SaParams> {
    config_from_str(&read_text(path)?, &path.display().to_string())
}

/// Column names of one [`LatencyReport`] row.
pub const REPORT_COLUMNS: [&str; 6] = [
    "objective",
    "feasible",
    "servable",
    "cpu_violation_hz",
    "mem_violation_bytes",
    "per_app_latency",
];

/// One CSV record for a report. The objective is empty when an application
/// has no latency; `per_app_latency` joins per-application seconds with `;`.
pub fn report_record(r: &LatencyReport) -> Vec<String> {
    vec![
        if r.servable() { fmt_float(r.objective) } else { String::new() },
        r.feasible().to_string(),
        r.servable().to_string(),
        fmt_float(r.total_cpu_violation()),
        fmt_float(r.total_mem_violation()),
        r.per_app_latency
            .iter()
            .map(|t| t.map(fmt_float).unwrap_or_default())
            .collect::<Vec<_>>()
            .join(";"),
    ]
}

pub fn write_report_csv<W: Write>(w: W, r: &LatencyReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(REPORT_COLUMNS)?;
    out.write_record(report_record(r))?;
    out.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(w: W, trace: &SweepTrace) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sweep", "current_objective", "best_objective", "accepted_moves"])?;
    out.write_record(["0", &fmt_float(trace.initial_objective), &fmt_float(trace.initial_objective), "0"])?;
    for rec in &trace.sweeps {
        out.write_record([
            rec.sweep.to_string(),
            fmt_float(rec.current_objective),
            fmt_float(rec.best_objective),
            rec.accepted_moves.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

pub fn write_repair_csv<W: Write>(w: W, log: &RepairLog) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["action", "app", "position", "from", "to"])?;
    for a in &log.actions {
        let rec = match *a {
            RepairAction::Migrate { block, from, to } => [
                "migrate".to_string(),
                block.app.to_string(),
                block.pos.to_string(),
                from.to_string(),
                to.to_string(),
            ],
            RepairAction::Remove { block, from } => [
                "remove".to_string(),
                block.app.to_string(),
                block.pos.to_string(),
                from.to_string(),
                String::new(),
            ],
        };
        out.write_record(rec)?;
    }
    out.flush().map_err(|e| Error::io("<repair log>", e))?;
    Ok(())
}
