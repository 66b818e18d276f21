//! Seeded random scenarios.
//!
//! Defaults reproduce the evaluation setup: servers with 5-20 GHz and
//! 80-640 GB, links at 1 ± 0.2 Gbps, microservices needing 0.1-0.5 GHz,
//! 2.4-12 Mcycles per request and 0.5-4 GB, and 1-100 KB between stages.
//! Request payloads are drawn from the same 1-100 KB range. All values are in
//! canonical units (Hz, bytes, bits per second, cycles).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ApplicationSpec, BandwidthMatrix, MicroserviceSpec, RequestDistribution, Scenario, ServerSpec,
};
use crate::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityMode {
    /// Independent uniform draws, normalized to sum to one.
    UniformNormalized,
    /// Fixed weights, normalized to sum to one.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub server_count: usize,
    pub app_count: usize,
    /// Inclusive bounds on microservices per application.
    pub chain_length_range: [usize; 2],
    /// Inclusive bounds on requests per application per slot.
    pub request_total_range: [u64; 2],
    pub cpu_capacity_range: [f64; 2],
    pub mem_capacity_range: [f64; 2],
    pub bandwidth_mean: f64,
    pub bandwidth_jitter: f64,
    pub ms_cpu_range: [f64; 2],
    pub ms_cycles_range: [f64; 2],
    pub ms_mem_range: [f64; 2],
    pub edge_data_range: [f64; 2],
    pub request_data_range: [f64; 2],
    pub priority_mode: PriorityMode,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            server_count: 3,
            app_count: 3,
            chain_length_range: [2, 4],
            request_total_range: [2000, 3000],
            cpu_capacity_range: [5e9, 20e9],
            mem_capacity_range: [80e9, 640e9],
            bandwidth_mean: 1e9,
            bandwidth_jitter: 0.2e9,
            ms_cpu_range: [0.1e9, 0.5e9],
            ms_cycles_range: [2.4e6, 12e6],
            ms_mem_range: [0.5e9, 4e9],
            edge_data_range: [1e3, 100e3],
            request_data_range: [1e3, 100e3],
            priority_mode: PriorityMode::UniformNormalized,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.server_count == 0 {
            return bad("server_count must be at least 1".into());
        }
        if self.app_count == 0 {
            return bad("app_count must be at least 1".into());
        }
        let [lo, hi] = self.chain_length_range;
        if lo == 0 || lo > hi {
            return bad(format!("chain_length_range [{lo}, {hi}] must satisfy 1 <= min <= max"));
        }
        let [lo, hi] = self.request_total_range;
        if lo == 0 || lo > hi {
            return bad(format!("request_total_range [{lo}, {hi}] must satisfy 1 <= min <= max"));
        }
        for (name, [lo, hi]) in [
            ("cpu_capacity_range", self.cpu_capacity_range),
            ("mem_capacity_range", self.mem_capacity_range),
            ("ms_cpu_range", self.ms_cpu_range),
            ("ms_cycles_range", self.ms_cycles_range),
            ("ms_mem_range", self.ms_mem_range),
            ("edge_data_range", self.edge_data_range),
            ("request_data_range", self.request_data_range),
        ] {
            // Values are rounded to integers, so the range must contain one >= 1.
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && hi.floor() >= lo.ceil().max(1.0)) {
                return bad(format!("{name} [{lo}, {hi}] must be a non-empty positive range"));
            }
        }
        if !(self.bandwidth_jitter >= 0.0 && self.bandwidth_mean - self.bandwidth_jitter > 0.0) {
            return bad("bandwidth_mean - bandwidth_jitter must be positive".into());
        }
        if let PriorityMode::Explicit(w) = &self.priority_mode {
            if w.len() != self.app_count {
                return bad(format!("{} explicit priorities for {} applications", w.len(), self.app_count));
            }
            if w.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return bad("explicit priorities must be positive".into());
            }
        }
        Ok(())
    }
}

fn draw_int<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> u64 {
    let lo = lo.ceil().max(1.0) as u64;
    let hi = hi.floor() as u64;
    rng.gen_range(lo..=hi)
}

fn draw_real<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn normalized(w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Draws one scenario. Deterministic in `cfg` (including its seed).
pub fn generate_scenario(cfg: &GeneratorConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let n = cfg.server_count;

    let servers = (0..n)
        .map(|id| ServerSpec {
            id,
            cpu_capacity: draw_int(&mut rng, cfg.cpu_capacity_range),
            mem_capacity: draw_int(&mut rng, cfg.mem_capacity_range),
        })
        .collect();

    let mut bandwidth = BandwidthMatrix::uniform(n, cfg.bandwidth_mean);
    for i in 0..n {
        for j in (i + 1)..n {
            let rate = draw_real(
                &mut rng,
                cfg.bandwidth_mean - cfg.bandwidth_jitter,
                cfg.bandwidth_mean + cfg.bandwidth_jitter,
            );
            bandwidth.set_symmetric(i, j, rate);
        }
    }

    let priorities = normalized(match &cfg.priority_mode {
        PriorityMode::UniformNormalized => {
            (0..cfg.app_count).map(|_| 1.0 - rng.gen::<f64>()).collect()
        }
        PriorityMode::Explicit(w) => w.clone(),
    });

    let mut applications = Vec::with_capacity(cfg.app_count);
    let mut arrivals = Vec::with_capacity(cfg.app_count);
    for (id, priority) in priorities.into_iter().enumerate() {
        let [lo, hi] = cfg.chain_length_range;
        let len = rng.gen_range(lo..=hi);
        let chain = (0..len)
            .map(|v| MicroserviceSpec {
                cpu_demand: draw_int(&mut rng, cfg.ms_cpu_range),
                mem_demand: draw_int(&mut rng, cfg.ms_mem_range),
                cycles_per_request: draw_int(&mut rng, cfg.ms_cycles_range),
                out_edge_data: (v + 1 < len).then(|| draw_int(&mut rng, cfg.edge_data_range)),
            })
            .collect();
        let request_data_size = draw_int(&mut rng, cfg.request_data_range);
        let [lo, hi] = cfg.request_total_range;
        let total = rng.gen_range(lo..=hi);
        let mut row = vec![0.0; n];
        for _ in 0..total {
            row[rng.gen_range(0..n)] += 1.0;
        }
        arrivals.push(row);
        applications.push(ApplicationSpec {
            id,
            priority,
            request_data_size,
            chain,
        });
    }

    Ok(Scenario {
        servers,
        bandwidth,
        applications,
        requests: RequestDistribution { arrivals },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ranges_are_respected() {
        for seed in 0..200 {
            let s = generate_scenario(&GeneratorConfig {
                seed,
                ..Default::default()
            })
            .unwrap();
            assert!(s.validate().is_empty(), "seed {seed}: {:?}", s.validate());
            for sv in &s.servers {
                assert!((5_000_000_000..=20_000_000_000).contains(&sv.cpu_capacity));
                assert!((80_000_000_000..=640_000_000_000).contains(&sv.mem_capacity));
            }
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        let b = s.bandwidth.rate(i, j);
                        assert!((0.8e9..=1.2e9).contains(&b), "{b}");
                    }
                }
            }
            for (k, app) in s.applications.iter().enumerate() {
                assert!((2..=4).contains(&app.chain.len()));
                assert!((2000.0..=3000.0).contains(&s.total_requests(k)));
                assert!((1000..=100_000).contains(&app.request_data_size));
                for ms in &app.chain {
                    assert!((100_000_000..=500_000_000).contains(&ms.cpu_demand));
                    assert!((2_400_000..=12_000_000).contains(&ms.cycles_per_request));
                    assert!((500_000_000..=4_000_000_000).contains(&ms.mem_demand));
                    if let Some(w) = ms.out_edge_data {
                        assert!((1000..=100_000).contains(&w));
                    }
                }
            }
        }
    }

    #[test]
    fn same_seed_same_scenario() {
        let cfg = GeneratorConfig {
            seed: 99,
            ..Default::default()
        };
        assert_eq!(generate_scenario(&cfg).unwrap(), generate_scenario(&cfg).unwrap());
        let other = GeneratorConfig { seed: 100, ..cfg };
        assert_ne!(generate_scenario(&other).unwrap(), generate_scenario(&GeneratorConfig { seed: 99, ..Default::default() }).unwrap());
    }

    #[test]
    fn explicit_priorities_are_normalized() {
        let s = generate_scenario(&GeneratorConfig {
            priority_mode: PriorityMode::Explicit(vec![5.0, 3.0, 2.0]),
            ..Default::default()
        })
        .unwrap();
        let p: Vec<f64> = s.applications.iter().map(|a| a.priority).collect();
        assert_eq!(p, vec![0.5, 0.3, 0.2]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            GeneratorConfig { server_count: 0, ..Default::default() },
            GeneratorConfig { chain_length_range: [3, 2], ..Default::default() },
            GeneratorConfig { ms_cpu_range: [2.0, 1.0], ..Default::default() },
            GeneratorConfig { bandwidth_jitter: 2e9, ..Default::default() },
            GeneratorConfig { priority_mode: PriorityMode::Explicit(vec![1.0]), ..Default::default() },
        ] {
            assert!(generate_scenario(&cfg).is_err(), "{cfg:?}");
        }
    }
}
