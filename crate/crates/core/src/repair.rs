//! Turns a scheme that over-commits some servers into one that fits.
//!
//! Servers are visited in index order. While a server is over its CPU or
//! memory capacity, an instance is evicted from it: lowest application
//! priority first, then largest CPU demand. The evicted instance migrates to
//! the best-fit server with room for it, or is removed if none has room.
//!
//! A microservice's last replica is never removed outright. Such an instance
//! is skipped while other candidates remain on the server; if only protected
//! replicas are left, it is taken off the server and retried once every
//! server has been processed. If it still fits nowhere it is dropped and the
//! microservice is reported unservable.

use std::cmp::Ordering;

use crate::model::{BlockId, DeploymentScheme, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepairAction {
    Migrate { block: BlockId, from: usize, to: usize },
    Remove { block: BlockId, from: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RepairLog {
    pub actions: Vec<RepairAction>,
    /// Microservices left with no replica.
    pub unservable: Vec<BlockId>,
}

impl RepairLog {
    pub fn is_empty(&self) -> bool {
        self.actions.is_empty() && self.unservable.is_empty()
    }

    pub fn migrations(&self) -> usize {
        self.actions
            .iter()
            .filter(|a| matches!(a, RepairAction::Migrate { .. }))
            .count()
    }

    pub fn removals(&self) -> usize {
        self.actions.len() - self.migrations()
    }
}

/// Free capacity per server. Negative on over-committed servers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Residuals {
    pub cpu: Vec<i128>,
    pub mem: Vec<i128>,
}

impl Residuals {
    pub fn of(s: &Scenario, d: &DeploymentScheme) -> Self {
        let cpu = d
            .cpu_usage(s)
            .into_iter()
            .zip(&s.servers)
            .map(|(u, sv)| sv.cpu_capacity as i128 - u as i128)
            .collect();
        let mem = d
            .mem_usage(s)
            .into_iter()
            .zip(&s.servers)
            .map(|(u, sv)| sv.mem_capacity as i128 - u as i128)
            .collect();
        Self { cpu, mem }
    }

    pub fn overloaded(&self, server: usize) -> bool {
        self.cpu[server] < 0 || self.mem[server] < 0
    }

    fn take(&mut self, server: usize, cpu: u64, mem: u64) {
        self.cpu[server] -= cpu as i128;
        self.mem[server] -= mem as i128;
    }

    fn give(&mut self, server: usize, cpu: u64, mem: u64) {
        self.cpu[server] += cpu as i128;
        self.mem[server] += mem as i128;
    }
}

/// Best-fit target for one instance: among servers whose residual CPU and
/// memory both cover the demand, the one with the most residual CPU, then the
/// most residual memory, then the lowest index.
pub fn pick_target(residual: &Residuals, cpu: u64, mem: u64) -> Option<usize> {
    (0..residual.cpu.len())
        .filter(|&i| residual.cpu[i] >= cpu as i128 && residual.mem[i] >= mem as i128)
        .min_by(|&a, &b| {
            residual.cpu[b]
                .cmp(&residual.cpu[a])
                .then(residual.mem[b].cmp(&residual.mem[a]))
                .then(a.cmp(&b))
        })
}

/// Lowest priority first, then largest CPU demand; ties broken by higher
/// application index, then lower chain position.
fn eviction_order(s: &Scenario, a: BlockId, b: BlockId) -> Ordering {
    let pa = s.applications[a.app].priority;
    let pb = s.applications[b.app].priority;
    let ca = s.applications[a.app].chain[a.pos].cpu_demand;
    let cb = s.applications[b.app].chain[b.pos].cpu_demand;
    pa.total_cmp(&pb)
        .then(cb.cmp(&ca))
        .then(b.app.cmp(&a.app))
        .then(a.pos.cmp(&b.pos))
}

/// Restores CPU and memory feasibility on every server.
///
/// # Panics
///
/// If `d` is not shaped for `s`.
pub fn repair(s: &Scenario, d: &DeploymentScheme) -> (DeploymentScheme, RepairLog) {
    d.check_shape(s).expect("scheme shaped for scenario");
    let mut out = d.clone();
    let mut log = RepairLog::default();
    let mut residual = Residuals::of(s, &out);

    let mut order: Vec<BlockId> = s.blocks().collect();
    order.sort_by(|&a, &b| eviction_order(s, a, b));
    let mut totals: Vec<Vec<u32>> = out
        .counts()
        .iter()
        .map(|app| app.iter().map(|row| row.iter().sum()).collect())
        .collect();

    let mut stranded: Vec<(BlockId, usize)> = Vec::new();
    for server in 0..s.server_count() {
        while residual.overloaded(server) {
            let hosted: Vec<BlockId> = order
                .iter()
                .copied()
                .filter(|&b| out.counts()[b.app][b.pos][server] > 0)
                .collect();
            let mut acted = false;
            for &block in &hosted {
                let ms = s.applications[block.app].chain[block.pos];
                residual.give(server, ms.cpu_demand, ms.mem_demand);
                let target = pick_target(&residual, ms.cpu_demand, ms.mem_demand);
                let total = &mut totals[block.app][block.pos];
                match target {
                    Some(to) => {
                        residual.take(to, ms.cpu_demand, ms.mem_demand);
                        let row = out.block_mut(block).unwrap();
                        row[server] -= 1;
                        row[to] += 1;
                        log.actions.push(RepairAction::Migrate { block, from: server, to });
                    }
                    None if *total > 1 => {
                        *total -= 1;
                        out.block_mut(block).unwrap()[server] -= 1;
                        log.actions.push(RepairAction::Remove { block, from: server });
                    }
                    None => {
                        residual.take(server, ms.cpu_demand, ms.mem_demand);
                        continue;
                    }
                }
                acted = true;
                break;
            }
            if !acted {
                // Only last replicas remain here and none can move yet.
                let block = *hosted.first().expect("overloaded server hosts something");
                let ms = s.applications[block.app].chain[block.pos];
                residual.give(server, ms.cpu_demand, ms.mem_demand);
                out.block_mut(block).unwrap()[server] -= 1;
                stranded.push((block, server));
            }
        }
    }

    for (block, from) in stranded {
        let ms = s.applications[block.app].chain[block.pos];
        match pick_target(&residual, ms.cpu_demand, ms.mem_demand) {
            Some(to) => {
                residual.take(to, ms.cpu_demand, ms.mem_demand);
                out.block_mut(block).unwrap()[to] += 1;
                log.actions.push(RepairAction::Migrate { block, from, to });
            }
            None => {
                log.actions.push(RepairAction::Remove { block, from });
            }
        }
    }

    log.unservable = s
        .blocks()
        .filter(|&b| out.total_instances(b.app, b.pos).unwrap_or(0) == 0)
        .collect();
    (out, log)
}
