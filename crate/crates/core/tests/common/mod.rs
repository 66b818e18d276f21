//! Scenario builders shared by the integration tests.

#![allow(dead_code)]

use camd::generator::{generate_scenario, GeneratorConfig};
use camd::model::{
    ApplicationSpec, BandwidthMatrix, DeploymentScheme, MicroserviceSpec, RequestDistribution,
    Scenario, ServerSpec,
};
use camd::rng_from_seed;
use rand::Rng;

/// A generated scenario small enough for path enumeration: 1-3 servers,
/// 1-2 applications, chains of 1-3.
pub fn small_scenario(seed: u64) -> Scenario {
    let mut rng = rng_from_seed(seed ^ 0x5eed);
    let chain = rng.gen_range(1..=3);
    generate_scenario(&GeneratorConfig {
        server_count: rng.gen_range(1..=3),
        app_count: rng.gen_range(1..=2),
        chain_length_range: [1, chain],
        request_total_range: [1, 3000],
        seed,
        ..GeneratorConfig::default()
    })
    .expect("valid generator config")
}

/// Every block gets 1..=max replicas scattered uniformly; capacity ignored.
pub fn random_scheme<R: Rng>(s: &Scenario, max: u32, rng: &mut R) -> DeploymentScheme {
    let mut d = DeploymentScheme::empty(s);
    let blocks: Vec<_> = s.blocks().collect();
    for b in blocks {
        let n = rng.gen_range(1..=max);
        let row = d.block_mut(b).unwrap();
        for _ in 0..n {
            row[rng.gen_range(0..row.len())] += 1;
        }
    }
    d
}

/// Two servers, one application of two microservices, with demands drawn
/// from the evaluation ranges. Total CPU is set so that instance sizing asks
/// for at most 3 replicas of each stage and split between the servers at a
/// random ratio, each server holding at least one replica of either stage.
/// Memory is plentiful. Draws that miss these conditions are redrawn.
pub fn tiny_instance(seed: u64) -> Scenario {
    let mut rng = rng_from_seed(seed);
    loop {
        let s = tiny_candidate(&mut rng);
        let counts = camd::sizing::solve_scale(&s).map(|p| p.instance_counts);
        if counts.is_ok_and(|c| c[0].iter().all(|&n| n <= 3)) {
            return s;
        }
    }
}

fn tiny_candidate<R: Rng>(rng: &mut R) -> Scenario {
    let chain: Vec<MicroserviceSpec> = (0..2)
        .map(|v| MicroserviceSpec {
            cpu_demand: rng.gen_range(100_000_000..=500_000_000),
            mem_demand: rng.gen_range(500_000_000..=4_000_000_000),
            cycles_per_request: rng.gen_range(2_400_000..=12_000_000),
            out_edge_data: (v == 0).then(|| rng.gen_range(1_000..=100_000)),
        })
        .collect();

    // Replicas of stage v are proportional to 1/o_v; scale the largest to k.
    let inv: Vec<f64> = chain.iter().map(|m| 1.0 / m.processing_rate()).collect();
    let inv_max = inv.iter().cloned().fold(0.0, f64::max);
    let weighted: f64 = inv.iter().zip(&chain).map(|(u, m)| u * m.cpu_demand as f64).sum();
    let k: f64 = rng.gen_range(1.0..3.99);
    let total = (k * weighted / inv_max).ceil() as u64;
    let share: f64 = rng.gen_range(0.25..0.75);
    let first = (total as f64 * share).round() as u64;
    let largest = chain.iter().map(|m| m.cpu_demand).max().unwrap();
    let cpu = [first.max(largest), (total - first).max(largest)];

    let requests: f64 = rng.gen_range(2000..=3000) as f64;
    let split: f64 = rng.gen_range(0.0..=1.0);
    let at_first = (requests * split).round();

    let mut bandwidth = BandwidthMatrix::uniform(2, 1e9);
    bandwidth.set_symmetric(0, 1, rng.gen_range(0.8e9..=1.2e9));

    Scenario {
        servers: (0..2)
            .map(|id| ServerSpec {
                id,
                cpu_capacity: cpu[id],
                mem_capacity: 100_000_000_000,
            })
            .collect(),
        bandwidth,
        applications: vec![ApplicationSpec {
            id: 0,
            priority: 1.0,
            request_data_size: rng.gen_range(1_000..=100_000),
            chain,
        }],
        requests: RequestDistribution {
            arrivals: vec![vec![at_first, requests - at_first]],
        },
    }
}

/// Relative difference, with an absolute floor for values near zero.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
