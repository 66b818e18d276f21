//! Contention-aware deployment of chained microservices on edge clusters.
//!
//! Given servers with CPU/memory capacities, a bandwidth matrix, and
//! applications made of microservice chains with priorities and request
//! arrivals, the crate chooses how many replicas of each microservice to run
//! and on which servers, minimizing priority-weighted expected response time.
//!
//! The main entry point is [`anneal::camd_deploy`]: instance sizing from
//! priorities and processing rates, block coordinate descent with simulated
//! annealing per microservice, then capacity repair. [`baselines`] holds the
//! comparison deployers and an exhaustive oracle for tiny instances.

pub mod anneal;
pub mod baselines;
pub mod error;
pub mod experiment;
pub mod generator;
pub mod io;
pub mod latency;
pub mod model;
pub mod par;
pub mod repair;
pub mod sizing;
pub mod units;

pub use error::{Error, Result};
pub use model::{
    ApplicationSpec, BandwidthMatrix, BlockId, DeploymentScheme, MicroserviceSpec,
    RequestDistribution, Scenario, ServerSpec, Violation,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere randomness is needed. Portable across
/// platforms, so a seed pins results bit-for-bit.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}
