//! Problem instance types: servers, the bandwidth matrix, chained applications,
//! request arrivals, and the deployment scheme that is optimized over.
//!
//! All quantities are held in canonical units: Hz for CPU, bytes for memory and
//! payloads, bits per second for bandwidth, cycles for per-request work and
//! requests per slot for arrivals. Unit conversion happens once, at the file
//! boundary (see [`crate::units`]).

use std::fmt;

use crate::error::{Error, Result};

/// Tolerance on the priority sum.
pub const PRIORITY_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerSpec {
    pub id: usize,
    /// Hz.
    pub cpu_capacity: u64,
    /// Bytes.
    pub mem_capacity: u64,
}

/// Symmetric link rates between servers in bits per second.
///
/// The diagonal is never read: traffic between co-located instances costs
/// nothing regardless of what is stored there.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthMatrix {
    size: usize,
    rates: Vec<f64>,
}

impl BandwidthMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        let mut rates = Vec::with_capacity(size * size);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != size {
                return Err(Error::parse(
                    format!("bandwidth row {i}"),
                    format!("expected {size} entries, found {}", row.len()),
                ));
            }
            rates.extend(row);
        }
        Ok(Self { size, rates })
    }

    /// Every off-diagonal link at `rate`, diagonal zero.
    pub fn uniform(size: usize, rate: f64) -> Self {
        let mut rates = vec![rate; size * size];
        for i in 0..size {
            rates[i * size + i] = 0.0;
        }
        Self { size, rates }
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    #[inline]
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[from * self.size + to]
    }

    pub fn set_symmetric(&mut self, a: usize, b: usize, rate: f64) {
        self.rates[a * self.size + b] = rate;
        self.rates[b * self.size + a] = rate;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.rates.chunks(self.size.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Relabels servers: entry `(i, j)` of the result is `(perm[i], perm[j])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.size;
        let mut rates = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                rates[i * n + j] = self.rate(perm[i], perm[j]);
            }
        }
        Self { size: n, rates }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MicroserviceSpec {
    /// Hz reserved per instance.
    pub cpu_demand: u64,
    /// Bytes reserved per instance.
    pub mem_demand: u64,
    /// CPU cycles needed to process one request.
    pub cycles_per_request: u64,
    /// Bytes shipped to the next stage; `None` only for the last stage.
    pub out_edge_data: Option<u64>,
}

impl MicroserviceSpec {
    /// Requests per second a single instance sustains.
    #[inline]
    pub fn processing_rate(&self) -> f64 {
        self.cpu_demand as f64 / self.cycles_per_request as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApplicationSpec {
    pub id: usize,
    /// Relative weight in the objective. Priorities sum to one across a scenario.
    pub priority: f64,
    /// Bytes carried from the ingress server to the first stage.
    pub request_data_size: u64,
    pub chain: Vec<MicroserviceSpec>,
}

impl ApplicationSpec {
    /// Bytes moved on hop `hop`, where hop 0 is ingress to the first stage and
    /// hop `v` (v >= 1) leaves stage `v - 1`.
    pub fn hop_data(&self, hop: usize) -> u64 {
        if hop == 0 {
            self.request_data_size
        } else {
            self.chain[hop - 1].out_edge_data.unwrap_or(0)
        }
    }
}

/// Requests per slot arriving at each server, one row per application.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestDistribution {
    pub arrivals: Vec<Vec<f64>>,
}

impl RequestDistribution {
    pub fn total(&self, app: usize) -> f64 {
        self.arrivals[app].iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub servers: Vec<ServerSpec>,
    pub bandwidth: BandwidthMatrix,
    pub applications: Vec<ApplicationSpec>,
    pub requests: RequestDistribution,
}

/// One broken invariant, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Identifies one microservice: application index and chain position, both 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId {
    pub app: usize,
    pub pos: usize,
}

impl BlockId {
    pub const fn new(app: usize, pos: usize) -> Self {
        Self { app, pos }
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(app {}, position {})", self.app, self.pos)
    }
}

impl Scenario {
    pub fn server_count(&self) -> usize {
        self.servers.len()
    }

    pub fn app_count(&self) -> usize {
        self.applications.len()
    }

    pub fn microservice(&self, id: BlockId) -> Option<&MicroserviceSpec> {
        self.applications.get(id.app)?.chain.get(id.pos)
    }

    /// Every microservice, application-major, chain order within an application.
    pub fn blocks(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.applications
            .iter()
            .enumerate()
            .flat_map(|(a, app)| (0..app.chain.len()).map(move |p| BlockId::new(a, p)))
    }

    pub fn total_requests(&self, app: usize) -> f64 {
        self.requests.total(app)
    }

    pub fn total_cpu(&self) -> u128 {
        self.servers.iter().map(|s| s.cpu_capacity as u128).sum()
    }

    pub fn total_mem(&self) -> u128 {
        self.servers.iter().map(|s| s.mem_capacity as u128).sum()
    }

    /// Checks every invariant of the instance. Violations are returned as data;
    /// an empty list means the scenario is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.servers.len();
        if n == 0 {
            out.push(Violation::new("servers", "at least one server is required"));
        }
        for (i, s) in self.servers.iter().enumerate() {
            if s.id != i {
                out.push(Violation::new(
                    format!("servers[{i}].id"),
                    format!("ids must be dense 0..{n}, found {}", s.id),
                ));
            }
            if s.cpu_capacity == 0 {
                out.push(Violation::new(format!("servers[{i}].cpu_capacity"), "must be positive"));
            }
            if s.mem_capacity == 0 {
                out.push(Violation::new(format!("servers[{i}].mem_capacity"), "must be positive"));
            }
        }

        if self.bandwidth.len() != n {
            out.push(Violation::new(
                "bandwidth",
                format!("matrix is {0}x{0}, expected {n}x{n}", self.bandwidth.len()),
            ));
        } else {
            for i in 0..n {
                for j in (i + 1)..n {
                    let a = self.bandwidth.rate(i, j);
                    let b = self.bandwidth.rate(j, i);
                    if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
                        out.push(Violation::new(
                            format!("bandwidth[{i}][{j}]"),
                            "non-positive bandwidth",
                        ));
                    } else if a != b {
                        out.push(Violation::new(
                            format!("bandwidth[{i}][{j}]"),
                            format!("asymmetric bandwidth ({a} vs {b})"),
                        ));
                    }
                }
            }
        }

        if self.applications.is_empty() {
            out.push(Violation::new("applications", "at least one application is required"));
        }
        let mut priority_sum = 0.0;
        for (k, app) in self.applications.iter().enumerate() {
            let field = |f: &str| format!("applications[{k}].{f}");
            if app.id != k {
                out.push(Violation::new(field("id"), format!("ids must be dense, found {}", app.id)));
            }
            if !(app.priority > 0.0 && app.priority <= 1.0) {
                out.push(Violation::new(
                    field("priority"),
                    format!("must lie in (0, 1], found {}", app.priority),
                ));
            }
            priority_sum += app.priority;
            if app.request_data_size == 0 {
                out.push(Violation::new(field("request_data_size"), "must be positive"));
            }
            if app.chain.is_empty() {
                out.push(Violation::new(field("chain"), "chain must hold at least one microservice"));
            }
            let last = app.chain.len().saturating_sub(1);
            for (v, ms) in app.chain.iter().enumerate() {
                let field = |f: &str| format!("applications[{k}].chain[{v}].{f}");
                if ms.cpu_demand == 0 {
                    out.push(Violation::new(field("cpu_demand"), "must be positive"));
                }
                if ms.mem_demand == 0 {
                    out.push(Violation::new(field("mem_demand"), "must be positive"));
                }
                if ms.cycles_per_request == 0 {
                    out.push(Violation::new(field("cycles_per_request"), "must be positive"));
                }
                match (v == last, ms.out_edge_data) {
                    (true, Some(_)) => out.push(Violation::new(
                        field("out_edge_data"),
                        "last microservice of a chain has no successor",
                    )),
                    (false, None) => out.push(Violation::new(
                        field("out_edge_data"),
                        "required for every microservice with a successor",
                    )),
                    (false, Some(0)) => {
                        out.push(Violation::new(field("out_edge_data"), "must be positive"))
                    }
                    _ => {}
                }
            }
        }
        if !self.applications.is_empty() && (priority_sum - 1.0).abs() > PRIORITY_SUM_TOLERANCE {
            out.push(Violation::new(
                "applications.priority",
                format!("priority sum ≠ 1 (found {priority_sum})"),
            ));
        }

        let arrivals = &self.requests.arrivals;
        if arrivals.len() != self.applications.len() {
            out.push(Violation::new(
                "requests.arrivals",
                format!("expected {} rows, found {}", self.applications.len(), arrivals.len()),
            ));
        }
        for (k, row) in arrivals.iter().enumerate() {
            if row.len() != n {
                out.push(Violation::new(
                    format!("requests.arrivals[{k}]"),
                    format!("expected {n} entries, found {}", row.len()),
                ));
            }
            if row.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                out.push(Violation::new(
                    format!("requests.arrivals[{k}]"),
                    "request counts must be finite and non-negative",
                ));
            } else if row.iter().sum::<f64>() <= 0.0 {
                out.push(Violation::new(
                    format!("requests.arrivals[{k}]"),
                    "application receives no requests",
                ));
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(v))
        }
    }

    /// Same instance with every arrival multiplied by `factor`.
    pub fn with_scaled_requests(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.requests.arrivals {
            for r in row.iter_mut() {
                *r *= factor;
            }
        }
        out
    }

    /// Relabels servers so that new server `i` is old server `perm[i]`.
    pub fn permuted_servers(&self, perm: &[usize]) -> Self {
        let servers = perm
            .iter()
            .enumerate()
            .map(|(i, &old)| ServerSpec {
                id: i,
                ..self.servers[old]
            })
            .collect();
        let arrivals = self
            .requests
            .arrivals
            .iter()
            .map(|row| perm.iter().map(|&old| row[old]).collect())
            .collect();
        Self {
            servers,
            bandwidth: self.bandwidth.permuted(perm),
            applications: self.applications.clone(),
            requests: RequestDistribution { arrivals },
        }
    }
}

/// Per-server instance counts for every microservice of a scenario.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeploymentScheme {
    servers: usize,
    counts: Vec<Vec<Vec<u32>>>,
}

impl DeploymentScheme {
    /// A scheme shaped for `scenario` with no instances anywhere.
    pub fn empty(scenario: &Scenario) -> Self {
        let servers = scenario.server_count();
        let counts = scenario
            .applications
            .iter()
            .map(|a| vec![vec![0; servers]; a.chain.len()])
            .collect();
        Self { servers, counts }
    }

    /// Builds a scheme from `counts[app][pos][server]`.
    pub fn from_counts(servers: usize, counts: Vec<Vec<Vec<u32>>>) -> Result<Self> {
        for (a, app) in counts.iter().enumerate() {
            for (p, row) in app.iter().enumerate() {
                if row.len() != servers {
                    return Err(Error::SchemeShape(format!(
                        "{} has {} counts, expected {servers}",
                        BlockId::new(a, p),
                        row.len()
                    )));
                }
            }
        }
        Ok(Self { servers, counts })
    }

    pub fn server_count(&self) -> usize {
        self.servers
    }

    pub fn app_count(&self) -> usize {
        self.counts.len()
    }

    pub fn chain_len(&self, app: usize) -> usize {
        self.counts.get(app).map_or(0, Vec::len)
    }

    pub fn counts(&self) -> &[Vec<Vec<u32>>] {
        &self.counts
    }

    pub fn blocks(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(a, app)| (0..app.len()).map(move |p| BlockId::new(a, p)))
    }

    pub fn block(&self, id: BlockId) -> Result<&[u32]> {
        self.counts
            .get(id.app)
            .and_then(|a| a.get(id.pos))
            .map(Vec::as_slice)
            .ok_or(Error::UnknownBlock(id))
    }

    pub fn block_mut(&mut self, id: BlockId) -> Result<&mut [u32]> {
        self.counts
            .get_mut(id.app)
            .and_then(|a| a.get_mut(id.pos))
            .map(Vec::as_mut_slice)
            .ok_or(Error::UnknownBlock(id))
    }

    /// Total replicas of one microservice across all servers.
    pub fn total_instances(&self, app: usize, pos: usize) -> Result<u32> {
        Ok(self.block(BlockId::new(app, pos))?.iter().sum())
    }

    /// Checks that the scheme has one count vector of the right length for
    /// every microservice of `scenario`.
    pub fn check_shape(&self, scenario: &Scenario) -> Result<()> {
        if self.servers != scenario.server_count() {
            return Err(Error::SchemeShape(format!(
                "scheme covers {} servers, scenario has {}",
                self.servers,
                scenario.server_count()
            )));
        }
        if self.counts.len() != scenario.app_count() {
            return Err(Error::SchemeShape(format!(
                "scheme covers {} applications, scenario has {}",
                self.counts.len(),
                scenario.app_count()
            )));
        }
        for (a, app) in scenario.applications.iter().enumerate() {
            if self.counts[a].len() != app.chain.len() {
                return Err(Error::SchemeShape(format!(
                    "application {a} has {} microservices in the scheme, {} in the scenario",
                    self.counts[a].len(),
                    app.chain.len()
                )));
            }
        }
        Ok(())
    }

    /// CPU reserved on each server, in Hz.
    pub fn cpu_usage(&self, scenario: &Scenario) -> Vec<u128> {
        self.usage(scenario, |ms| ms.cpu_demand)
    }

    /// Memory reserved on each server, in bytes.
    pub fn mem_usage(&self, scenario: &Scenario) -> Vec<u128> {
        self.usage(scenario, |ms| ms.mem_demand)
    }

    fn usage(&self, scenario: &Scenario, demand: impl Fn(&MicroserviceSpec) -> u64) -> Vec<u128> {
        let mut out = vec![0u128; self.servers];
        for id in self.blocks() {
            let d = scenario.microservice(id).map_or(0, &demand) as u128;
            for (s, &n) in self.counts[id.app][id.pos].iter().enumerate() {
                out[s] += n as u128 * d;
            }
        }
        out
    }

    /// Constraints (a) and (b): no server's CPU or memory is over-committed.
    pub fn fits_capacity(&self, scenario: &Scenario) -> bool {
        let cpu = self.cpu_usage(scenario);
        let mem = self.mem_usage(scenario);
        scenario
            .servers
            .iter()
            .enumerate()
            .all(|(i, s)| cpu[i] <= s.cpu_capacity as u128 && mem[i] <= s.mem_capacity as u128)
    }

    /// Relabels servers with the same convention as [`Scenario::permuted_servers`].
    pub fn permuted_servers(&self, perm: &[usize]) -> Self {
        let counts = self
            .counts
            .iter()
            .map(|app| {
                app.iter()
                    .map(|row| perm.iter().map(|&old| row[old]).collect())
                    .collect()
            })
            .collect();
        Self {
            servers: self.servers,
            counts,
        }
    }
}
