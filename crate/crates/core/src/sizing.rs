//! Instance-count calculation and the random initial placement.
//!
//! Applications get resource shares proportional to `R * priority`; within an
//! application, stages get replicas inversely proportional to their processing
//! rate. With both ratio structures pinned, the per-application chain count
//! and the per-stage counts multiply into `N[k][v] = lambda * base[k][v]`, so
//! each total-resource budget equation has a single scalar unknown. The CPU
//! and memory equations each give a `lambda`; the smaller one wins.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ApplicationSpec, DeploymentScheme, Scenario};

/// Relative slack when flooring continuous counts, so that `2.9999999999`
/// produced by the budget division still rounds to 3.
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    Cpu,
    Memory,
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resource::Cpu => "cpu",
            Resource::Memory => "memory",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizingPlan {
    /// Continuous chain count per application (`lambda * chain weight`).
    /// Informational only; nothing downstream reads it.
    pub chain_count: Vec<f64>,
    /// Pre-rounding replica counts `[app][pos]` at the binding scale.
    pub continuous_counts: Vec<Vec<f64>>,
    /// Floored replica counts, at least 1 each.
    pub instance_counts: Vec<Vec<u32>>,
    /// Scale that exactly exhausts total cluster CPU.
    pub lambda_cpu: f64,
    /// Scale that exactly exhausts total cluster memory.
    pub lambda_mem: f64,
    pub binding_resource: Resource,
}

impl SizingPlan {
    pub fn lambda(&self) -> f64 {
        self.lambda_cpu.min(self.lambda_mem)
    }
}

/// Per-application weights proportional to `R * priority`, summing to 1.
pub fn chain_ratios(s: &Scenario) -> Vec<f64> {
    let raw: Vec<f64> = s
        .applications
        .iter()
        .enumerate()
        .map(|(k, a)| s.total_requests(k) * a.priority)
        .collect();
    normalize(raw)
}

/// Per-stage weights proportional to `1 / processing_rate`, summing to 1.
pub fn intra_app_ratios(app: &ApplicationSpec) -> Vec<f64> {
    normalize(app.chain.iter().map(|m| 1.0 / m.processing_rate()).collect())
}

fn normalize(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Solves the CPU and memory budget equations and floors the smaller solution.
pub fn solve_scale(s: &Scenario) -> Result<SizingPlan> {
    s.ensure_valid()?;

    let min_cpu: u128 = s.blocks().map(|b| s.microservice(b).unwrap().cpu_demand as u128).sum();
    let min_mem: u128 = s.blocks().map(|b| s.microservice(b).unwrap().mem_demand as u128).sum();
    if min_cpu > s.total_cpu() {
        return Err(Error::UndersizedCluster(format!(
            "one replica of every microservice needs {min_cpu} Hz, cluster has {} Hz",
            s.total_cpu()
        )));
    }
    if min_mem > s.total_mem() {
        return Err(Error::UndersizedCluster(format!(
            "one replica of every microservice needs {min_mem} bytes, cluster has {} bytes",
            s.total_mem()
        )));
    }

    let chain = chain_ratios(s);
    let base: Vec<Vec<f64>> = s
        .applications
        .iter()
        .zip(&chain)
        .map(|(a, w)| intra_app_ratios(a).into_iter().map(|u| w * u).collect())
        .collect();

    let demand = |f: &dyn Fn(usize, usize) -> u64| -> f64 {
        base.iter()
            .enumerate()
            .flat_map(|(k, row)| row.iter().enumerate().map(move |(v, b)| (k, v, b)))
            .map(|(k, v, b)| b * f(k, v) as f64)
            .sum()
    };
    let cpu_per_unit = demand(&|k, v| s.applications[k].chain[v].cpu_demand);
    let mem_per_unit = demand(&|k, v| s.applications[k].chain[v].mem_demand);
    let lambda_cpu = s.total_cpu() as f64 / cpu_per_unit;
    let lambda_mem = s.total_mem() as f64 / mem_per_unit;

    let (lambda, binding_resource) = if lambda_cpu <= lambda_mem {
        (lambda_cpu, Resource::Cpu)
    } else {
        (lambda_mem, Resource::Memory)
    };

    let continuous_counts: Vec<Vec<f64>> = base
        .iter()
        .map(|row| row.iter().map(|b| lambda * b).collect())
        .collect();
    let instance_counts = continuous_counts
        .iter()
        .map(|row| row.iter().map(|&x| floor_count(x)).collect())
        .collect();

    Ok(SizingPlan {
        chain_count: chain.iter().map(|w| lambda * w).collect(),
        continuous_counts,
        instance_counts,
        lambda_cpu,
        lambda_mem,
        binding_resource,
    })
}

fn floor_count(x: f64) -> u32 {
    let f = (x + FLOOR_SLACK * x.abs().max(1.0)).floor();
    f.clamp(1.0, u32::MAX as f64) as u32
}

/// Scatters each microservice's `instance_counts` over servers, one uniform
/// draw per instance. Capacity is ignored.
pub fn random_initial_placement<R: Rng + ?Sized>(
    s: &Scenario,
    instance_counts: &[Vec<u32>],
    rng: &mut R,
) -> DeploymentScheme {
    let servers = s.server_count();
    let mut d = DeploymentScheme::empty(s);
    for id in s.blocks() {
        let n = instance_counts[id.app][id.pos];
        let row = d.block_mut(id).expect("scheme shaped from scenario");
        for _ in 0..n {
            row[rng.gen_range(0..servers)] += 1;
        }
    }
    d
}
