//! Expected response latency of chained applications under round-robin routing.
//!
//! A request for application `k` enters at a server drawn from the arrival
//! distribution, then visits one server per chain stage, each drawn in
//! proportion to that stage's per-server replica counts. Per-hop choices are
//! independent, so the expected transmission delay factorizes over hops:
//! `O(|chain| * |S|^2)` per application instead of `|S|^(|chain| + 1)` paths.
//! [`enumerate_paths_latency`] keeps the explicit path sum as a test oracle.
//!
//! Computing delay is the fluid term `R / (N * o)` per stage: total slot load
//! divided by replica count and per-instance rate. There is no queueing model.

use crate::error::{Error, Result};
use crate::model::{BandwidthMatrix, BlockId, DeploymentScheme, Scenario};

/// Default limit on explicitly enumerated processing paths.
pub const DEFAULT_PATH_CAP: u128 = 1_000_000;

/// Objective assigned to schemes that leave some microservice without replicas.
/// Compares worse than every servable scheme.
pub const UNSERVABLE_OBJECTIVE: f64 = f64::MAX;

/// Probability that a request for `app` enters the cluster at each server.
pub fn ingress_distribution(s: &Scenario, app: usize) -> Result<Vec<f64>> {
    let row = s.requests.arrivals.get(app).ok_or(Error::NoArrivals(app))?;
    let total: f64 = row.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoArrivals(app));
    }
    Ok(row.iter().map(|r| r / total).collect())
}

/// Probability that a request for microservice `(app, pos)` is served on each server.
pub fn routing_distribution(
    _s: &Scenario,
    d: &DeploymentScheme,
    app: usize,
    pos: usize,
) -> Result<Vec<f64>> {
    let id = BlockId::new(app, pos);
    let row = d.block(id)?;
    let total: u32 = row.iter().sum();
    if total == 0 {
        return Err(Error::Unservable(id));
    }
    let total = total as f64;
    Ok(row.iter().map(|&n| n as f64 / total).collect())
}

/// Sum over stages of `R / (N_v * o_v)`, in seconds.
pub fn computing_delay(s: &Scenario, d: &DeploymentScheme, app: usize) -> Result<f64> {
    let rows = app_rows(s, d, app)?;
    computing_delay_rows(s, app, rows)
}

/// Expected data-transfer time along the chain (ingress hop included), in seconds.
pub fn expected_transmission_delay(s: &Scenario, d: &DeploymentScheme, app: usize) -> Result<f64> {
    let rows = app_rows(s, d, app)?;
    transmission_delay_rows(s, app, rows)
}

/// Expected response latency of one application: computing plus transmission.
pub fn app_latency(s: &Scenario, d: &DeploymentScheme, app: usize) -> Result<f64> {
    let rows = app_rows(s, d, app)?;
    app_latency_rows(s, app, rows)
}

/// Latency of `app` given its count vectors `rows[pos][server]`.
pub(crate) fn app_latency_rows(s: &Scenario, app: usize, rows: &[Vec<u32>]) -> Result<f64> {
    Ok(computing_delay_rows(s, app, rows)? + transmission_delay_rows(s, app, rows)?)
}

fn app_rows<'a>(s: &Scenario, d: &'a DeploymentScheme, app: usize) -> Result<&'a [Vec<u32>]> {
    let rows = d
        .counts()
        .get(app)
        .ok_or(Error::UnknownBlock(BlockId::new(app, 0)))?;
    let expected = s.applications.get(app).map_or(0, |a| a.chain.len());
    if rows.len() != expected {
        return Err(Error::SchemeShape(format!(
            "application {app} has {} microservices in the scheme, {expected} in the scenario",
            rows.len()
        )));
    }
    Ok(rows)
}

fn computing_delay_rows(s: &Scenario, app: usize, rows: &[Vec<u32>]) -> Result<f64> {
    let load = s.total_requests(app);
    let spec = &s.applications[app];
    let mut total = 0.0;
    for (pos, (ms, row)) in spec.chain.iter().zip(rows).enumerate() {
        let n: u32 = row.iter().sum();
        if n == 0 {
            return Err(Error::Unservable(BlockId::new(app, pos)));
        }
        total += load / (n as f64 * ms.processing_rate());
    }
    Ok(total)
}

fn transmission_delay_rows(s: &Scenario, app: usize, rows: &[Vec<u32>]) -> Result<f64> {
    let spec = &s.applications[app];
    let ingress = &s.requests.arrivals[app];
    let ingress_total: f64 = ingress.iter().sum();
    if !(ingress_total > 0.0) {
        return Err(Error::NoArrivals(app));
    }
    let totals = rows
        .iter()
        .enumerate()
        .map(|(pos, row)| match row.iter().sum::<u32>() {
            0 => Err(Error::Unservable(BlockId::new(app, pos))),
            n => Ok(n as f64),
        })
        .collect::<Result<Vec<f64>>>()?;

    let bits = |hop: usize| spec.hop_data(hop) as f64 * 8.0;
    let mut total = hop_delay(&s.bandwidth, ingress, ingress_total, &rows[0], totals[0], bits(0));
    for v in 1..rows.len() {
        total += hop_delay(
            &s.bandwidth,
            &rows[v - 1],
            totals[v - 1],
            &rows[v],
            totals[v],
            bits(v),
        );
    }
    Ok(total)
}

/// `sum_{i != j} p_i q_j bits / bw(i, j)` with `p = src / src_total`, `q = dst / dst_total`.
#[inline]
fn hop_delay<A, B>(
    bw: &BandwidthMatrix,
    src: &[A],
    src_total: f64,
    dst: &[B],
    dst_total: f64,
    bits: f64,
) -> f64
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    let mut acc = 0.0;
    for (i, &a) in src.iter().enumerate() {
        let a: f64 = a.into();
        if a == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for (j, &b) in dst.iter().enumerate() {
            let b: f64 = b.into();
            if j == i || b == 0.0 {
                continue;
            }
            inner += b / bw.rate(i, j);
        }
        acc += a * inner;
    }
    acc * bits / (src_total * dst_total)
}

/// Exact expected latency of `app` by summing over every processing path.
///
/// Fails with [`Error::EnumerationInfeasible`] when the number of paths with
/// non-zero probability exceeds `cap`.
pub fn enumerate_paths_latency(
    s: &Scenario,
    d: &DeploymentScheme,
    app: usize,
    cap: u128,
) -> Result<f64> {
    let spec = s.applications.get(app).ok_or(Error::NoArrivals(app))?;
    let mut hops: Vec<Vec<(usize, f64)>> = Vec::with_capacity(spec.chain.len() + 1);
    hops.push(support(&ingress_distribution(s, app)?));
    for pos in 0..spec.chain.len() {
        hops.push(support(&routing_distribution(s, d, app, pos)?));
    }
    let paths = hops.iter().fold(1u128, |acc, h| acc.saturating_mul(h.len() as u128));
    if paths > cap {
        return Err(Error::EnumerationInfeasible { paths, cap });
    }

    let load = s.total_requests(app);
    let compute: f64 = spec
        .chain
        .iter()
        .enumerate()
        .map(|(pos, ms)| {
            let n = d.total_instances(app, pos).unwrap_or(0) as f64;
            load / (n * ms.processing_rate())
        })
        .sum();

    let mut cursor = vec![0usize; hops.len()];
    let mut expected = 0.0;
    loop {
        let mut prob = 1.0;
        let mut transfer = 0.0;
        for (h, &c) in cursor.iter().enumerate() {
            let (server, p) = hops[h][c];
            prob *= p;
            if h > 0 {
                let prev = hops[h - 1][cursor[h - 1]].0;
                if prev != server {
                    transfer += spec.hop_data(h - 1) as f64 * 8.0 / s.bandwidth.rate(prev, server);
                }
            }
        }
        expected += prob * (transfer + compute);

        let mut h = hops.len();
        loop {
            if h == 0 {
                return Ok(expected);
            }
            h -= 1;
            cursor[h] += 1;
            if cursor[h] < hops[h].len() {
                break;
            }
            cursor[h] = 0;
        }
    }
}

fn support(p: &[f64]) -> Vec<(usize, f64)> {
    p.iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(i, &x)| (i, x))
        .collect()
}

/// Priority-weighted latency, or [`UNSERVABLE_OBJECTIVE`] if any
/// microservice has no replica. Capacity is not checked.
pub fn weighted_latency(s: &Scenario, d: &DeploymentScheme) -> f64 {
    let mut total = 0.0;
    for (k, app) in s.applications.iter().enumerate() {
        match d.counts().get(k).map(|rows| app_latency_rows(s, k, rows)) {
            Some(Ok(t)) => total += app.priority * t,
            _ => return UNSERVABLE_OBJECTIVE,
        }
    }
    total
}

/// Latencies, the weighted objective, and constraint status of one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    /// Seconds per application; `None` when the application has an unservable stage.
    pub per_app_latency: Vec<Option<f64>>,
    /// `sum_k priority_k * latency_k` in seconds, or [`UNSERVABLE_OBJECTIVE`]
    /// when any application latency is absent.
    pub objective: f64,
    /// Hz over capacity per server (0 when within capacity).
    pub cpu_violation: Vec<f64>,
    /// Bytes over capacity per server.
    pub mem_violation: Vec<f64>,
    /// `min_instance_ok[app][pos]`: at least one replica deployed.
    pub min_instance_ok: Vec<Vec<bool>>,
}

impl LatencyReport {
    pub fn servable(&self) -> bool {
        self.min_instance_ok.iter().flatten().all(|&ok| ok)
    }

    pub fn within_capacity(&self) -> bool {
        self.cpu_violation.iter().chain(&self.mem_violation).all(|&v| v == 0.0)
    }

    /// All three constraints hold.
    pub fn feasible(&self) -> bool {
        self.servable() && self.within_capacity()
    }

    pub fn total_cpu_violation(&self) -> f64 {
        self.cpu_violation.iter().sum()
    }

    pub fn total_mem_violation(&self) -> f64 {
        self.mem_violation.iter().sum()
    }
}

/// Evaluates `d` against `s`. Infeasible schemes are reported, not rejected.
pub fn objective(s: &Scenario, d: &DeploymentScheme) -> LatencyReport {
    let per_app_latency: Vec<Option<f64>> = (0..s.app_count())
        .map(|k| app_latency(s, d, k).ok())
        .collect();
    let objective = if per_app_latency.iter().all(Option::is_some) {
        s.applications
            .iter()
            .zip(&per_app_latency)
            .map(|(a, t)| a.priority * t.unwrap_or_default())
            .sum()
    } else {
        UNSERVABLE_OBJECTIVE
    };

    let over = |usage: Vec<u128>, cap: &dyn Fn(usize) -> u64| -> Vec<f64> {
        usage
            .into_iter()
            .enumerate()
            .map(|(i, u)| u.saturating_sub(cap(i) as u128) as f64)
            .collect()
    };
    let cpu_violation = over(d.cpu_usage(s), &|i| s.servers[i].cpu_capacity);
    let mem_violation = over(d.mem_usage(s), &|i| s.servers[i].mem_capacity);

    let min_instance_ok = s
        .applications
        .iter()
        .enumerate()
        .map(|(k, a)| {
            (0..a.chain.len())
                .map(|p| d.total_instances(k, p).is_ok_and(|n| n >= 1))
                .collect()
        })
        .collect();

    LatencyReport {
        per_app_latency,
        objective,
        cpu_violation,
        mem_violation,
        min_instance_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::*;

    fn scheme(s: &Scenario, rows: &[&[u32]]) -> DeploymentScheme {
        let mut d = DeploymentScheme::empty(s);
        for (id, row) in s.blocks().collect::<Vec<_>>().into_iter().zip(rows) {
            d.block_mut(id).unwrap().copy_from_slice(row);
        }
        d
    }

    #[test]
    fn routing_is_proportional_to_counts() {
        let s = simple(2, &[1.0], 1, 100.0);
        assert_eq!(routing_distribution(&s, &scheme(&s, &[&[1, 1]]), 0, 0).unwrap(), vec![0.5, 0.5]);
        assert_eq!(routing_distribution(&s, &scheme(&s, &[&[3, 1]]), 0, 0).unwrap(), vec![0.75, 0.25]);
        assert!(matches!(
            routing_distribution(&s, &scheme(&s, &[&[0, 0]]), 0, 0),
            Err(Error::Unservable(BlockId { app: 0, pos: 0 }))
        ));
    }

    #[test]
    fn ingress_follows_arrivals() {
        let mut s = simple(2, &[1.0], 1, 1000.0);
        assert_eq!(ingress_distribution(&s, 0).unwrap(), vec![0.5, 0.5]);
        s.requests.arrivals[0] = vec![750.0, 250.0];
        assert_eq!(ingress_distribution(&s, 0).unwrap(), vec![0.75, 0.25]);

        let mut s3 = simple(3, &[1.0], 1, 2000.0);
        s3.requests.arrivals[0] = vec![2000.0, 0.0, 0.0];
        assert_eq!(ingress_distribution(&s3, 0).unwrap(), vec![1.0, 0.0, 0.0]);

        s3.requests.arrivals[0] = vec![0.0; 3];
        assert!(matches!(ingress_distribution(&s3, 0), Err(Error::NoArrivals(0))));
    }

    #[test]
    fn computing_delay_hand_values() {
        // o = 0.5 GHz / 5 Mcycles = 100 req/s, R = 100.
        let s = simple(2, &[1.0], 1, 100.0);
        assert_eq!(computing_delay(&s, &scheme(&s, &[&[2, 0]]), 0).unwrap(), 0.5);
        assert_eq!(computing_delay(&s, &scheme(&s, &[&[1, 0]]), 0).unwrap(), 1.0);
        assert_eq!(computing_delay(&s, &scheme(&s, &[&[1, 1]]), 0).unwrap(), 0.5);

        let two = simple(2, &[1.0], 2, 100.0);
        assert_eq!(computing_delay(&two, &scheme(&two, &[&[2, 0], &[0, 2]]), 0).unwrap(), 1.0);
        assert!(matches!(
            computing_delay(&two, &scheme(&two, &[&[2, 0], &[0, 0]]), 0),
            Err(Error::Unservable(BlockId { app: 0, pos: 1 }))
        ));
    }

    #[test]
    fn transmission_delay_hand_values() {
        let mut s = simple(2, &[1.0], 1, 100.0);
        s.requests.arrivals[0] = vec![100.0, 0.0];
        assert_eq!(expected_transmission_delay(&s, &scheme(&s, &[&[3, 0]]), 0).unwrap(), 0.0);
        // 100 KB * 8 / 1 Gbps
        let t = expected_transmission_delay(&s, &scheme(&s, &[&[0, 1]]), 0).unwrap();
        assert!((t - 8.0e-4).abs() < 1e-15, "{t}");

        s.requests.arrivals[0] = vec![50.0, 50.0];
        let t = expected_transmission_delay(&s, &scheme(&s, &[&[1, 1]]), 0).unwrap();
        assert!((t - 4.0e-4).abs() < 1e-15, "{t}");
    }

    #[test]
    fn enumeration_matches_single_server_computing() {
        let s = simple(1, &[1.0], 3, 250.0);
        let d = scheme(&s, &[&[2], &[3], &[1]]);
        let e = enumerate_paths_latency(&s, &d, 0, DEFAULT_PATH_CAP).unwrap();
        assert_eq!(e, computing_delay(&s, &d, 0).unwrap());
    }

    #[test]
    fn enumeration_four_equiprobable_paths() {
        // Ingress pinned on s1, both stages split (1,1): paths are the four
        // (s1, x, y) with x, y in {s1, s2}, each with probability 1/4.
        let mut s = simple(2, &[1.0], 2, 100.0);
        s.requests.arrivals[0] = vec![100.0, 0.0];
        let d = scheme(&s, &[&[1, 1], &[1, 1]]);
        let hop = 100.0 * 1000.0 * 8.0 / 1e9;
        // (1,1,1): 0, (1,1,2): hop, (1,2,1): 2 hop, (1,2,2): hop.
        let expected_tran = 0.25 * (0.0 + hop + 2.0 * hop + hop);
        let compute = computing_delay(&s, &d, 0).unwrap();
        let e = enumerate_paths_latency(&s, &d, 0, DEFAULT_PATH_CAP).unwrap();
        assert!((e - (compute + expected_tran)).abs() < 1e-15);
        let f = app_latency(&s, &d, 0).unwrap();
        assert!((e - f).abs() < 1e-15);
    }

    #[test]
    fn enumeration_cap() {
        let s = simple(3, &[1.0], 3, 90.0);
        let d = scheme(&s, &[&[1, 1, 1], &[1, 1, 1], &[1, 1, 1]]);
        assert!(matches!(
            enumerate_paths_latency(&s, &d, 0, 80),
            Err(Error::EnumerationInfeasible { paths: 81, cap: 80 })
        ));
        assert!(enumerate_paths_latency(&s, &d, 0, 81).is_ok());
    }

    #[test]
    fn objective_is_weighted_sum() {
        // Two apps whose latencies are 1.0 s and 2.0 s on one server.
        let mut s = simple(1, &[0.7, 0.3], 1, 100.0);
        s.requests.arrivals[1] = vec![200.0];
        let d = scheme(&s, &[&[1], &[1]]);
        let r = objective(&s, &d);
        assert_eq!(r.per_app_latency, vec![Some(1.0), Some(2.0)]);
        assert!((r.objective - 1.3).abs() < 1e-12);
        assert!(r.feasible());
        assert_eq!(weighted_latency(&s, &d), r.objective);
    }

    #[test]
    fn objective_reports_cpu_violation() {
        let s = simple(2, &[1.0], 1, 100.0);
        // 20 instances at 0.5 GHz on a 10 GHz server is at capacity; 21 is 0.5 GHz over.
        let r = objective(&s, &scheme(&s, &[&[21, 0]]));
        assert_eq!(r.cpu_violation, vec![0.5e9, 0.0]);
        assert_eq!(r.mem_violation, vec![0.0, 0.0]);
        assert!(!r.within_capacity());
        assert!(r.servable());
    }

    #[test]
    fn objective_flags_unservable() {
        let s = simple(2, &[0.5, 0.5], 2, 100.0);
        let r = objective(&s, &scheme(&s, &[&[1, 0], &[0, 0], &[1, 1], &[1, 0]]));
        assert_eq!(r.min_instance_ok, vec![vec![true, false], vec![true, true]]);
        assert_eq!(r.per_app_latency[0], None);
        assert!(r.per_app_latency[1].is_some());
        assert_eq!(r.objective, UNSERVABLE_OBJECTIVE);
        assert!(!r.feasible());
    }

    #[test]
    fn latency_is_in_seconds() {
        // 1 GHz capacity per instance-second: R = 10 requests, o = 100/s, N = 1 -> 0.1 s,
        // plus one 1 KB transfer over 8 Mbps -> 1 ms.
        let mut s = simple(2, &[1.0], 1, 10.0);
        s.requests.arrivals[0] = vec![10.0, 0.0];
        s.applications[0].request_data_size = 1000;
        s.bandwidth = BandwidthMatrix::uniform(2, 8e6);
        let t = app_latency(&s, &scheme(&s, &[&[0, 1]]), 0).unwrap();
        assert!((t - 0.101).abs() < 1e-12, "{t}");
    }
}
