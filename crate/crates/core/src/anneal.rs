//! Block coordinate descent over microservices, each block annealed in turn.
//!
//! A block is one microservice's per-server count vector. Blocks are visited
//! in priority order (highest first), chain order within an application, and
//! each is optimized by simulated annealing with every other block frozen.
//! Moves shift one replica between servers, so per-microservice totals never
//! change here. Sweeps repeat until a full pass leaves the scheme unchanged or
//! the sweep budget runs out; the result then goes through [`crate::repair`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::{app_latency_rows, UNSERVABLE_OBJECTIVE};
use crate::model::{BlockId, DeploymentScheme, Scenario};
use crate::repair::{repair, RepairLog};
use crate::rng_from_seed;
use crate::sizing::{random_initial_placement, solve_scale, SizingPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaParams {
    /// Initial temperature as a fraction of the objective at block start.
    pub t_initial_fraction: f64,
    /// Final temperature as a fraction of the initial one.
    pub t_min_ratio: f64,
    /// Geometric cooling factor.
    pub alpha: f64,
    /// Proposals per temperature level.
    pub moves_per_temp: u32,
    pub max_sweeps: u32,
    pub seed: u64,
    /// Seconds added per unit of relative capacity overload (summed over
    /// servers and both resources). Zero leaves capacity entirely to repair.
    pub penalty_weight: f64,
}

impl Default for SaParams {
    fn default() -> Self {
        Self {
            t_initial_fraction: 0.1,
            t_min_ratio: 1e-3,
            alpha: 0.95,
            moves_per_temp: 50,
            max_sweeps: 10,
            seed: 0,
            penalty_weight: 0.0,
        }
    }
}

impl SaParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.t_min_ratio > 0.0 && self.t_min_ratio < 1.0) {
            return bad("t_min_ratio must lie in (0, 1)");
        }
        if !(self.t_initial_fraction > 0.0 && self.t_initial_fraction.is_finite()) {
            return bad("t_initial_fraction must be positive");
        }
        if self.moves_per_temp == 0 {
            return bad("moves_per_temp must be at least 1");
        }
        if self.max_sweeps == 0 {
            return bad("max_sweeps must be at least 1");
        }
        if !(self.penalty_weight >= 0.0 && self.penalty_weight.is_finite()) {
            return bad("penalty_weight must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxSweeps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    /// 1-based.
    pub sweep: usize,
    /// Search energy of the scheme after the sweep.
    pub current_objective: f64,
    /// Lowest energy of any state visited so far.
    pub best_objective: f64,
    pub accepted_moves: u64,
    /// Accepted moves per block, in visiting order.
    pub block_accepts: Vec<(BlockId, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTrace {
    pub initial_objective: f64,
    pub sweeps: Vec<SweepRecord>,
    pub termination: Termination,
}

/// Blocks by application priority (descending, ties by lower index), chain order within.
pub fn block_order(s: &Scenario) -> Vec<BlockId> {
    let mut apps: Vec<usize> = (0..s.app_count()).collect();
    apps.sort_by(|&a, &b| {
        s.applications[b]
            .priority
            .total_cmp(&s.applications[a].priority)
            .then(a.cmp(&b))
    });
    apps.into_iter()
        .flat_map(|a| (0..s.applications[a].chain.len()).map(move |p| BlockId::new(a, p)))
        .collect()
}

/// Picks a source server uniformly among those hosting a replica and a
/// destination uniformly among all other servers. `None` when no move exists.
pub fn propose_move<R: Rng + ?Sized>(block: &[u32], rng: &mut R) -> Option<(usize, usize)> {
    if block.len() < 2 {
        return None;
    }
    let hosting = block.iter().filter(|&&n| n > 0).count();
    if hosting == 0 {
        return None;
    }
    let mut k = rng.gen_range(0..hosting);
    let src = block
        .iter()
        .position(|&n| {
            if n == 0 {
                return false;
            }
            if k == 0 {
                return true;
            }
            k -= 1;
            false
        })
        .expect("k < hosting");
    let mut dst = rng.gen_range(0..block.len() - 1);
    if dst >= src {
        dst += 1;
    }
    Some((src, dst))
}

/// The neighbour obtained by moving one replica, or the block unchanged when
/// no move exists (single server or empty block).
pub fn propose_swap<R: Rng + ?Sized>(block: &[u32], rng: &mut R) -> Vec<u32> {
    let mut out = block.to_vec();
    if let Some((src, dst)) = propose_move(block, rng) {
        out[src] -= 1;
        out[dst] += 1;
    }
    out
}

/// Incrementally maintained search energy: weighted latency, cached per
/// application, plus the optional overload penalty.
struct Energy<'a> {
    s: &'a Scenario,
    penalty_weight: f64,
    app_latency: Vec<f64>,
    cpu: Vec<i128>,
    mem: Vec<i128>,
}

impl<'a> Energy<'a> {
    fn new(s: &'a Scenario, d: &DeploymentScheme, penalty_weight: f64) -> Option<Self> {
        let app_latency = (0..s.app_count())
            .map(|k| app_latency_rows(s, k, &d.counts()[k]).ok())
            .collect::<Option<Vec<f64>>>()?;
        let cpu = d.cpu_usage(s).into_iter().map(|u| u as i128).collect();
        let mem = d.mem_usage(s).into_iter().map(|u| u as i128).collect();
        Some(Self {
            s,
            penalty_weight,
            app_latency,
            cpu,
            mem,
        })
    }

    fn latency(&self) -> f64 {
        self.s
            .applications
            .iter()
            .zip(&self.app_latency)
            .map(|(a, t)| a.priority * t)
            .sum()
    }

    fn penalty(&self) -> f64 {
        if self.penalty_weight == 0.0 {
            return 0.0;
        }
        let over: f64 = self
            .s
            .servers
            .iter()
            .enumerate()
            .map(|(i, sv)| {
                let c = (self.cpu[i] - sv.cpu_capacity as i128).max(0) as f64;
                let m = (self.mem[i] - sv.mem_capacity as i128).max(0) as f64;
                c / sv.cpu_capacity as f64 + m / sv.mem_capacity as f64
            })
            .sum();
        self.penalty_weight * over
    }

    fn total(&self) -> f64 {
        self.latency() + self.penalty()
    }

    fn shift(&mut self, block: BlockId, from: usize, to: usize) {
        let ms = &self.s.applications[block.app].chain[block.pos];
        self.cpu[from] -= ms.cpu_demand as i128;
        self.mem[from] -= ms.mem_demand as i128;
        self.cpu[to] += ms.cpu_demand as i128;
        self.mem[to] += ms.mem_demand as i128;
    }
}

/// Outcome of annealing one block in place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockOutcome {
    pub accepted: u64,
    pub final_energy: f64,
    pub best_energy: f64,
}

/// Anneals `block` of `d` in place; every other block is left untouched.
///
/// Schemes with an unservable microservice are left as they are.
pub fn anneal_block_in_place<R: Rng + ?Sized>(
    s: &Scenario,
    d: &mut DeploymentScheme,
    block: BlockId,
    p: &SaParams,
    rng: &mut R,
) -> BlockOutcome {
    let Some(mut energy) = Energy::new(s, d, p.penalty_weight) else {
        return BlockOutcome {
            accepted: 0,
            final_energy: UNSERVABLE_OBJECTIVE,
            best_energy: UNSERVABLE_OBJECTIVE,
        };
    };
    let app = block.app;
    let mut current = energy.total();
    let mut best = current;
    let t_initial = p.t_initial_fraction * current;
    let t_min = p.t_min_ratio * t_initial;
    let mut temperature = t_initial;
    let mut accepted = 0;

    while temperature > t_min {
        for _ in 0..p.moves_per_temp {
            let Some((src, dst)) = propose_move(&d.counts()[app][block.pos], rng) else {
                continue;
            };
            apply(d, block, src, dst);
            energy.shift(block, src, dst);
            let previous = energy.app_latency[app];
            energy.app_latency[app] =
                app_latency_rows(s, app, &d.counts()[app]).expect("totals are conserved");
            let candidate = energy.total();
            let delta = candidate - current;
            if delta < 0.0 || (-delta / temperature).exp() > rng.gen::<f64>() {
                current = candidate;
                best = best.min(current);
                accepted += 1;
            } else {
                apply(d, block, dst, src);
                energy.shift(block, dst, src);
                energy.app_latency[app] = previous;
            }
        }
        temperature *= p.alpha;
    }
    BlockOutcome {
        accepted,
        final_energy: current,
        best_energy: best,
    }
}

fn apply(d: &mut DeploymentScheme, block: BlockId, from: usize, to: usize) {
    let row = d.block_mut(block).expect("block belongs to scheme");
    row[from] -= 1;
    row[to] += 1;
}

/// Anneals one block and returns the updated scheme.
pub fn anneal_block<R: Rng + ?Sized>(
    s: &Scenario,
    d: &DeploymentScheme,
    block: BlockId,
    p: &SaParams,
    rng: &mut R,
) -> DeploymentScheme {
    let mut out = d.clone();
    anneal_block_in_place(s, &mut out, block, p, rng);
    out
}

#[derive(Debug, Clone)]
pub struct CamdOutcome {
    /// Repaired scheme.
    pub scheme: DeploymentScheme,
    /// Scheme before repair.
    pub unrepaired: DeploymentScheme,
    pub plan: SizingPlan,
    pub trace: SweepTrace,
    pub repair: RepairLog,
}

/// Sizing, random placement, block-coordinate annealing, then repair.
pub fn camd_deploy(s: &Scenario, p: &SaParams) -> Result<CamdOutcome> {
    p.validate()?;
    let plan = solve_scale(s)?;
    let mut rng = rng_from_seed(p.seed);
    let initial = random_initial_placement(s, &plan.instance_counts, &mut rng);
    let (unrepaired, trace) = bcd_sweeps(s, initial, p, &mut rng);
    let (scheme, repair) = repair(s, &unrepaired);
    Ok(CamdOutcome {
        scheme,
        unrepaired,
        plan,
        trace,
        repair,
    })
}

/// Runs sweeps from `initial` until convergence or `p.max_sweeps`.
pub fn bcd_sweeps<R: Rng + ?Sized>(
    s: &Scenario,
    initial: DeploymentScheme,
    p: &SaParams,
    rng: &mut R,
) -> (DeploymentScheme, SweepTrace) {
    let order = block_order(s);
    let mut d = initial;
    let initial_objective = Energy::new(s, &d, p.penalty_weight)
        .map_or(UNSERVABLE_OBJECTIVE, |e| e.total());
    let mut best = initial_objective;
    let mut current = initial_objective;
    let mut sweeps = Vec::new();
    let mut termination = Termination::MaxSweeps;

    for sweep in 1..=p.max_sweeps as usize {
        let snapshot = d.clone();
        let mut block_accepts = Vec::with_capacity(order.len());
        for &block in &order {
            let out = anneal_block_in_place(s, &mut d, block, p, rng);
            best = best.min(out.best_energy);
            current = out.final_energy;
            block_accepts.push((block, out.accepted));
        }
        sweeps.push(SweepRecord {
            sweep,
            current_objective: current,
            best_objective: best,
            accepted_moves: block_accepts.iter().map(|(_, n)| n).sum(),
            block_accepts,
        });
        if d == snapshot {
            termination = Termination::Converged;
            break;
        }
    }
    (
        d,
        SweepTrace {
            initial_objective,
            sweeps,
            termination,
        },
    )
}
