//! Comparison deployers and an exhaustive optimum for tiny instances.

use crate::error::{Error, Result};
use crate::latency::{app_latency_rows, weighted_latency, UNSERVABLE_OBJECTIVE};
use crate::model::{BlockId, DeploymentScheme, Scenario};
use crate::par::{self, ExecMode};
use crate::repair::{repair, RepairLog, Residuals};
use crate::rng_from_seed;
use crate::sizing::{random_initial_placement, solve_scale};
use crate::anneal::block_order;

/// A repaired scheme plus the log of what repair changed.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub scheme: DeploymentScheme,
    pub repair: RepairLog,
}

impl BaselineOutcome {
    fn repaired(s: &Scenario, d: &DeploymentScheme) -> Self {
        let (scheme, repair) = repair(s, d);
        Self { scheme, repair }
    }
}

/// Greedy placement with sizing-plan totals. Each instance goes to the server
/// with room that minimizes its application's latency over the stages placed
/// so far; after a microservice is fully placed, its already-placed chain
/// neighbours are lifted and re-placed once the same way. The seed is
/// accepted for interface symmetry; placement has no random element.
pub fn greedy_spread_deploy(s: &Scenario, _seed: u64) -> Result<BaselineOutcome> {
    let plan = solve_scale(s)?;
    let d = greedy_place(s, &plan.instance_counts, true);
    Ok(BaselineOutcome::repaired(s, &d))
}

/// `ceil(R / o)` replicas per microservice, latency-greedy placement, then repair.
pub fn ceil_sized_deploy(s: &Scenario, _seed: u64) -> Result<BaselineOutcome> {
    s.ensure_valid()?;
    let counts = ceil_counts(s);
    let d = greedy_place(s, &counts, false);
    Ok(BaselineOutcome::repaired(s, &d))
}

/// Replica counts `ceil(R / o)`, at least one.
pub fn ceil_counts(s: &Scenario) -> Vec<Vec<u32>> {
    s.applications
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let load = s.total_requests(k);
            a.chain
                .iter()
                .map(|ms| {
                    let x = load / ms.processing_rate();
                    // Tolerate rounding noise just above an integer.
                    (x - 1e-9 * x.max(1.0)).ceil().clamp(1.0, u32::MAX as f64) as u32
                })
                .collect()
        })
        .collect()
}

/// Sizing-plan totals placed uniformly at random, then repaired.
pub fn random_deploy(s: &Scenario, seed: u64) -> Result<BaselineOutcome> {
    let plan = solve_scale(s)?;
    let mut rng = rng_from_seed(seed);
    let d = random_initial_placement(s, &plan.instance_counts, &mut rng);
    Ok(BaselineOutcome::repaired(s, &d))
}

fn greedy_place(s: &Scenario, counts: &[Vec<u32>], redeploy_neighbours: bool) -> DeploymentScheme {
    let mut d = DeploymentScheme::empty(s);
    let mut residual = Residuals::of(s, &d);
    let mut placed_upto: Vec<Option<usize>> = vec![None; s.app_count()];

    for block in block_order(s) {
        place_instances(s, &mut d, &mut residual, block, counts[block.app][block.pos], block.pos);
        placed_upto[block.app] = Some(block.pos);
        if !redeploy_neighbours {
            continue;
        }
        let last = block.pos;
        let neighbours = [block.pos.checked_sub(1), Some(block.pos + 1)];
        for pos in neighbours.into_iter().flatten().filter(|&p| p <= last) {
            let nb = BlockId::new(block.app, pos);
            let ms = s.applications[nb.app].chain[nb.pos];
            let row = d.block_mut(nb).expect("block in scheme");
            let n: u32 = row.iter().sum();
            for (server, c) in row.iter_mut().enumerate() {
                residual.cpu[server] += *c as i128 * ms.cpu_demand as i128;
                residual.mem[server] += *c as i128 * ms.mem_demand as i128;
                *c = 0;
            }
            place_instances(s, &mut d, &mut residual, nb, n, last);
        }
    }
    d
}

/// Adds `n` replicas of `block` one at a time, each on the server with room
/// that minimizes the latency of stages `0..=horizon` of the application.
/// Once nothing fits, remaining replicas are dropped, except that a
/// microservice with no replica yet gets one on the server with the most
/// free CPU so that repair can deal with it.
fn place_instances(
    s: &Scenario,
    d: &mut DeploymentScheme,
    residual: &mut Residuals,
    block: BlockId,
    n: u32,
    horizon: usize,
) {
    let ms = s.applications[block.app].chain[block.pos];
    for _ in 0..n {
        let mut best: Option<(usize, f64)> = None;
        for server in 0..s.server_count() {
            if residual.cpu[server] < ms.cpu_demand as i128 || residual.mem[server] < ms.mem_demand as i128 {
                continue;
            }
            d.block_mut(block).unwrap()[server] += 1;
            let t = app_latency_rows(s, block.app, &d.counts()[block.app][..=horizon])
                .unwrap_or(UNSERVABLE_OBJECTIVE);
            d.block_mut(block).unwrap()[server] -= 1;
            if best.is_none_or(|(_, b)| t < b) {
                best = Some((server, t));
            }
        }
        let target = match best {
            Some((server, _)) => server,
            None if d.block(block).unwrap().iter().all(|&c| c == 0) => (0..s.server_count())
                .max_by(|&a, &b| residual.cpu[a].cmp(&residual.cpu[b]).then(b.cmp(&a)))
                .expect("at least one server"),
            None => break,
        };
        d.block_mut(block).unwrap()[target] += 1;
        residual.cpu[target] -= ms.cpu_demand as i128;
        residual.mem[target] -= ms.mem_demand as i128;
    }
}

/// Limits on the exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBounds {
    /// Largest replica total considered per microservice.
    pub max_total_per_block: u32,
    /// Refuse to search more candidate schemes than this.
    pub max_states: u128,
    pub mode: ExecMode,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self {
            max_total_per_block: 3,
            max_states: 10_000_000,
            mode: ExecMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveOutcome {
    pub scheme: DeploymentScheme,
    pub objective: f64,
    /// Feasible schemes evaluated.
    pub evaluated: u64,
}

/// All count vectors over `servers` with total in `1..=cap`, in lexicographic order.
fn block_options(servers: usize, cap: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, left: usize, budget: u32, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            if prefix.iter().any(|&c| c > 0) {
                out.push(prefix.clone());
            }
            return;
        }
        for c in 0..=budget {
            prefix.push(c);
            rec(prefix, left - 1, budget - c, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(servers), servers, cap, &mut out);
    out
}

/// Minimum weighted latency over every scheme with per-microservice totals in
/// `1..=max_total_per_block` that fits every server. Ties keep the scheme
/// found first in lexicographic order.
pub fn exhaustive_optimal(s: &Scenario, bounds: &SearchBounds) -> Result<ExhaustiveOutcome> {
    s.ensure_valid()?;
    let options = block_options(s.server_count(), bounds.max_total_per_block);
    let blocks: Vec<BlockId> = s.blocks().collect();
    let states = blocks
        .iter()
        .fold(1u128, |acc, _| acc.saturating_mul(options.len() as u128));
    if states > bounds.max_states {
        return Err(Error::SearchSpaceTooLarge {
            states,
            cap: bounds.max_states,
        });
    }
    if blocks.is_empty() || options.is_empty() {
        return Err(Error::InvalidParams("empty search space".into()));
    }

    let first: Vec<usize> = (0..options.len()).collect();
    let partials = par::map(bounds.mode, &first, |&i| {
        let mut d = DeploymentScheme::empty(s);
        let mut residual = Residuals::of(s, &d);
        let mut best = None;
        let mut evaluated = 0;
        if assign(s, &mut d, &mut residual, blocks[0], &options[i], 1) {
            search(s, &blocks, &options, 1, &mut d, &mut residual, &mut best, &mut evaluated);
        }
        (best, evaluated)
    });

    let mut evaluated = 0;
    let mut best: Option<(f64, DeploymentScheme)> = None;
    for (candidate, n) in partials {
        evaluated += n;
        if let Some((t, d)) = candidate {
            if best.as_ref().is_none_or(|(b, _)| t < *b) {
                best = Some((t, d));
            }
        }
    }
    let (objective, scheme) = best.ok_or_else(|| {
        Error::UndersizedCluster("no scheme within the search bounds fits the servers".into())
    })?;
    Ok(ExhaustiveOutcome {
        scheme,
        objective,
        evaluated,
    })
}

/// Adds (`sign` = 1) or removes (`sign` = -1) `row` for `block`. When adding,
/// returns whether every server still fits.
fn assign(
    s: &Scenario,
    d: &mut DeploymentScheme,
    residual: &mut Residuals,
    block: BlockId,
    row: &[u32],
    sign: i128,
) -> bool {
    let ms = s.applications[block.app].chain[block.pos];
    let dst = d.block_mut(block).expect("block in scheme");
    let mut fits = true;
    for (server, &c) in row.iter().enumerate() {
        dst[server] = if sign > 0 { c } else { 0 };
        residual.cpu[server] -= sign * c as i128 * ms.cpu_demand as i128;
        residual.mem[server] -= sign * c as i128 * ms.mem_demand as i128;
        fits &= residual.cpu[server] >= 0 && residual.mem[server] >= 0;
    }
    fits
}

#[allow(clippy::too_many_arguments)]
fn search(
    s: &Scenario,
    blocks: &[BlockId],
    options: &[Vec<u32>],
    depth: usize,
    d: &mut DeploymentScheme,
    residual: &mut Residuals,
    best: &mut Option<(f64, DeploymentScheme)>,
    evaluated: &mut u64,
) {
    if depth == blocks.len() {
        let t = weighted_latency(s, d);
        *evaluated += 1;
        if best.as_ref().is_none_or(|(b, _)| t < *b) {
            *best = Some((t, d.clone()));
        }
        return;
    }
    let block = blocks[depth];
    for row in options {
        if assign(s, d, residual, block, row, 1) {
            search(s, blocks, options, depth + 1, d, residual, best, evaluated);
        }
        assign(s, d, residual, block, row, -1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latency::objective;
    use crate::model::fixtures::*;

    #[test]
    fn block_options_enumerate_compositions() {
        // Totals 1..=3 over 2 servers: 2 + 3 + 4 vectors.
        assert_eq!(block_options(2, 3).len(), 9);
        assert_eq!(block_options(3, 2).len(), 9);
        assert_eq!(block_options(1, 3), vec![vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn single_server_takes_everything() {
        let s = simple(1, &[0.5, 0.5], 2, 100.0);
        let g = greedy_spread_deploy(&s, 0).unwrap();
        let c = ceil_sized_deploy(&s, 0).unwrap();
        let r = random_deploy(&s, 0).unwrap();
        for out in [&g, &c, &r] {
            assert!(out.scheme.fits_capacity(&s));
            assert!(objective(&s, &out.scheme).feasible());
        }
        // Sizing saturates the 10 GHz server with 0.5 GHz replicas.
        let total: u32 = s.blocks().map(|b| g.scheme.total_instances(b.app, b.pos).unwrap()).sum();
        assert_eq!(total, 20);
    }

    #[test]
    fn greedy_prefers_lowest_index_on_ties() {
        // Symmetric servers, split ingress: (2,0) and (0,2) tie, and (1,1)
        // has the same expected transfer as (2,0) (half the requests cross
        // either way), so the lowest index wins each time.
        let mut s = simple(2, &[1.0], 1, 100.0);
        s.servers[0].cpu_capacity = GHZ;
        s.servers[1].cpu_capacity = GHZ;
        let two_zero = DeploymentScheme::from_counts(2, vec![vec![vec![2, 0]]]).unwrap();
        let one_one = DeploymentScheme::from_counts(2, vec![vec![vec![1, 1]]]).unwrap();
        assert_eq!(weighted_latency(&s, &two_zero), weighted_latency(&s, &one_one));

        let g = greedy_spread_deploy(&s, 0).unwrap();
        // 2 GHz total at 0.5 GHz each: 4 replicas, 2 per 1 GHz server.
        assert_eq!(g.scheme.block(BlockId::new(0, 0)).unwrap(), &[2, 2]);
    }

    #[test]
    fn greedy_follows_ingress() {
        let mut s = simple(2, &[1.0], 2, 100.0);
        s.requests.arrivals[0] = vec![100.0, 0.0];
        s.servers[0].cpu_capacity = 2 * GHZ;
        let g = greedy_spread_deploy(&s, 0).unwrap();
        // 12 GHz total -> 12 replicas of each 0.5 GHz stage... but only 4
        // fit on s0; those go to the first stage, at the ingress.
        let first = g.scheme.block(BlockId::new(0, 0)).unwrap();
        assert!(first[0] >= 2, "{first:?}");
        assert!(g.scheme.fits_capacity(&s));
    }

    #[test]
    fn ceil_counts_examples() {
        let mut s = simple(1, &[1.0], 1, 100.0);
        assert_eq!(ceil_counts(&s), vec![vec![1]]);
        s.requests.arrivals[0] = vec![101.0];
        assert_eq!(ceil_counts(&s), vec![vec![2]]);
        s.requests.arrivals[0] = vec![0.5];
        assert_eq!(ceil_counts(&s), vec![vec![1]]);
    }

    #[test]
    fn deployers_are_deterministic() {
        let mut s = simple(3, &[0.5, 0.3, 0.2], 3, 300.0);
        s.servers[1].cpu_capacity = 3 * GHZ;
        for f in [greedy_spread_deploy, ceil_sized_deploy, random_deploy] {
            let a = f(&s, 5).unwrap();
            let b = f(&s, 5).unwrap();
            assert_eq!(a.scheme, b.scheme);
            assert!(a.scheme.fits_capacity(&s));
        }
    }

    #[test]
    fn exhaustive_single_server_uses_the_most_replicas() {
        // 2 GHz server, two 0.5 GHz stages: at most 4 replicas in total.
        let mut s = simple(1, &[1.0], 2, 100.0);
        s.servers[0].cpu_capacity = 2 * GHZ;
        let out = exhaustive_optimal(&s, &SearchBounds::default()).unwrap();
        assert_eq!(out.scheme.counts(), &[vec![vec![2], vec![2]]]);
        // 2 * 100 / (2 * 100)
        assert_eq!(out.objective, 1.0);
        // Options per block: totals 1..=3; feasible pairs have sum <= 4.
        assert_eq!(out.evaluated, 6);
    }

    #[test]
    fn exhaustive_mirror_is_also_optimal() {
        let s = simple(2, &[1.0], 2, 10.0);
        let out = exhaustive_optimal(&s, &SearchBounds::default()).unwrap();
        let mirror = out.scheme.permuted_servers(&[1, 0]);
        assert_eq!(weighted_latency(&s, &mirror), out.objective);
    }

    #[test]
    fn exhaustive_respects_state_cap() {
        let s = simple(3, &[1.0], 3, 10.0);
        let bounds = SearchBounds {
            max_states: 1000,
            ..Default::default()
        };
        // 19 options per block over 3 blocks: 6859 states.
        assert!(matches!(
            exhaustive_optimal(&s, &bounds),
            Err(Error::SearchSpaceTooLarge { states: 6859, cap: 1000 })
        ));
    }

    #[test]
    fn exhaustive_modes_agree() {
        let mut s = simple(2, &[0.6, 0.4], 1, 7.0);
        s.requests.arrivals[0] = vec![7.0, 0.0];
        s.servers[0].cpu_capacity = GHZ;
        let seq = exhaustive_optimal(&s, &SearchBounds { mode: ExecMode::Sequential, ..Default::default() }).unwrap();
        let par = exhaustive_optimal(&s, &SearchBounds { mode: ExecMode::Parallel, ..Default::default() }).unwrap();
        assert_eq!(seq, par);
    }
}
