mod common;

use camd::anneal::{propose_swap, SaParams};
use camd::baselines::{ceil_sized_deploy, greedy_spread_deploy, random_deploy};
use camd::io::{scenario_from_str, scenario_to_string, scheme_from_str, scheme_to_string};
use camd::latency::{
    app_latency, computing_delay, expected_transmission_delay, ingress_distribution,
    routing_distribution, weighted_latency,
};
use camd::repair::repair;
use camd::rng_from_seed;
use camd::sizing::{random_initial_placement, solve_scale};
use camd::{BlockId, DeploymentScheme};
use common::{random_scheme, rel_diff, small_scenario};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distributions_are_normalized(seed in any::<u64>()) {
        let s = small_scenario(seed);
        let d = random_scheme(&s, 4, &mut rng_from_seed(seed));
        for k in 0..s.app_count() {
            let p: f64 = ingress_distribution(&s, k).unwrap().iter().sum();
            prop_assert!((p - 1.0).abs() < 1e-12);
            for v in 0..s.applications[k].chain.len() {
                let q: f64 = routing_distribution(&s, &d, k, v).unwrap().iter().sum();
                prop_assert!((q - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relabeling_servers_keeps_the_objective(seed in any::<u64>()) {
        let s = small_scenario(seed);
        let mut rng = rng_from_seed(seed);
        let d = random_scheme(&s, 4, &mut rng);
        let mut perm: Vec<usize> = (0..s.server_count()).collect();
        perm.shuffle(&mut rng);
        let t = weighted_latency(&s, &d);
        let u = weighted_latency(&s.permuted_servers(&perm), &d.permuted_servers(&perm));
        prop_assert!(rel_diff(t, u) < 1e-12, "{t} vs {u}");
    }

    #[test]
    fn computing_delay_ignores_placement(seed in any::<u64>()) {
        let s = small_scenario(seed);
        let mut rng = rng_from_seed(seed);
        let d = random_scheme(&s, 4, &mut rng);
        let totals: Vec<Vec<u32>> = (0..s.app_count())
            .map(|k| (0..s.applications[k].chain.len()).map(|v| d.total_instances(k, v).unwrap()).collect())
            .collect();
        let e = random_initial_placement(&s, &totals, &mut rng);
        for k in 0..s.app_count() {
            let a = computing_delay(&s, &d, k).unwrap();
            let b = computing_delay(&s, &e, k).unwrap();
            prop_assert!(rel_diff(a, b) < 1e-12);
        }
    }

    #[test]
    fn colocating_at_the_single_ingress_removes_transmission(seed in any::<u64>()) {
        let mut s = small_scenario(seed);
        let n = s.server_count();
        let target = (seed % n as u64) as usize;
        for row in &mut s.requests.arrivals {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|r| *r = 0.0);
            row[target] = total;
        }
        let mut d = DeploymentScheme::empty(&s);
        let blocks: Vec<BlockId> = s.blocks().collect();
        for b in blocks {
            d.block_mut(b).unwrap()[target] = 2;
        }
        for k in 0..s.app_count() {
            prop_assert_eq!(expected_transmission_delay(&s, &d, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn an_extra_replica_never_slows_computing(seed in any::<u64>()) {
        let s = small_scenario(seed);
        let mut rng = rng_from_seed(seed);
        let d = random_scheme(&s, 4, &mut rng);
        let blocks: Vec<BlockId> = s.blocks().collect();
        let b = blocks[rng.gen_range(0..blocks.len())];
        let mut e = d.clone();
        e.block_mut(b).unwrap()[rng.gen_range(0..s.server_count())] += 1;
        prop_assert!(computing_delay(&s, &e, b.app).unwrap() < computing_delay(&s, &d, b.app).unwrap());
    }

    #[test]
    fn sizing_is_invariant_to_uniform_load_scaling(seed in any::<u64>(), factor in 0.1f64..10.0) {
        let s = small_scenario(seed);
        let a = solve_scale(&s).unwrap();
        let b = solve_scale(&s.with_scaled_requests(factor)).unwrap();
        prop_assert_eq!(a.binding_resource, b.binding_resource);
        for (x, y) in a.continuous_counts.iter().flatten().zip(b.continuous_counts.iter().flatten()) {
            prop_assert!(rel_diff(*x, *y) < 1e-9);
        }
    }

    #[test]
    fn repair_yields_a_fixed_point(seed in any::<u64>(), max in 1u32..120) {
        let s = small_scenario(seed);
        let d = random_scheme(&s, max, &mut rng_from_seed(seed));
        let (once, log) = repair(&s, &d);
        prop_assert!(once.fits_capacity(&s));
        let (twice, again) = repair(&s, &once);
        prop_assert_eq!(&twice, &once);
        prop_assert!(again.is_empty());
        // Totals only shrink; a microservice reaches zero only when flagged.
        for b in s.blocks() {
            let before = d.total_instances(b.app, b.pos).unwrap();
            let after = once.total_instances(b.app, b.pos).unwrap();
            prop_assert!(after <= before);
            prop_assert_eq!(after == 0, log.unservable.contains(&b));
        }
    }

    #[test]
    fn deployers_respect_capacity(seed in any::<u64>()) {
        let s = small_scenario(seed);
        for out in [greedy_spread_deploy(&s, seed), ceil_sized_deploy(&s, seed), random_deploy(&s, seed)] {
            prop_assert!(out.unwrap().scheme.fits_capacity(&s));
        }
        let camd = camd::anneal::camd_deploy(&s, &SaParams { max_sweeps: 2, ..SaParams::with_seed(seed) }).unwrap();
        prop_assert!(camd.scheme.fits_capacity(&s));
    }

    #[test]
    fn files_round_trip(seed in any::<u64>()) {
        let s = small_scenario(seed);
        let back = scenario_from_str(&scenario_to_string(&s), "generated").unwrap();
        prop_assert_eq!(&back, &s);
        let d = random_scheme(&s, 9, &mut rng_from_seed(seed));
        prop_assert_eq!(scheme_from_str(&scheme_to_string(&d), "generated").unwrap(), d);
    }
}

#[test]
fn swaps_conserve_the_row_total() {
    let mut rng = rng_from_seed(42);
    for _ in 0..100_000 {
        let n = rng.gen_range(1..=6);
        let row: Vec<u32> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let next = propose_swap(&row, &mut rng);
        assert_eq!(next.iter().sum::<u32>(), row.iter().sum::<u32>());
        let moved: u32 = row.iter().zip(&next).map(|(a, b)| a.abs_diff(*b)).sum();
        let possible = n > 1 && row.iter().any(|&c| c > 0);
        assert_eq!(moved, if possible { 2 } else { 0 }, "{row:?} -> {next:?}");
    }
}

#[test]
fn latency_is_finite_and_positive_for_servable_schemes() {
    for seed in 0..200 {
        let s = small_scenario(seed);
        let d = random_scheme(&s, 3, &mut rng_from_seed(seed));
        for k in 0..s.app_count() {
            let t = app_latency(&s, &d, k).unwrap();
            assert!(t.is_finite() && t > 0.0);
        }
    }
}
