//! Randomized invariant checks shared by the proptest suite and the
//! acceptance target.

#![allow(dead_code)]

use hetnet::allocator::{maximize_log_mixture, Allocation, SolverOptions};
use hetnet::patterns::{Pattern, PatternSet};
use hetnet::rates::{build_interference_table, FadingLaw, FadingModel, Storage};
use hetnet::search::{
    initial_association, tabu_search, tabu_search_observed, Problem, SearchParams, Solution, TabuKey, TabuList,
};
use hetnet::{Association, RateTensor};
use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub type Property = fn(u32) -> Result<(), String>;

/// Name, case count and check for every invariant.
pub const PROPERTIES: &[(&str, u32, Property)] = &[
    ("simplex feasibility", 200, simplex_feasibility),
    ("interference monotonicity", 200, interference_monotonicity),
    ("incremental utility", 200, incremental_utility),
    ("incumbent monotonicity", 100, incumbent_monotonicity),
    ("tabu expiry", 300, tabu_expiry),
    ("search determinism", 50, search_determinism),
    ("unit fading equals deterministic", 100, unit_fading),
];

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn finish<T: std::fmt::Debug>(r: Result<(), proptest::test_runner::TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

/// Per-Hz link powers over `users x cells`, spanning 60 dB around unit noise.
fn signal(users: usize, cells: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0f64..3.0, users * cells)
        .prop_map(move |v| Array2::from_shape_vec((users, cells), v.into_iter().map(|x| 10f64.powf(x)).collect()).unwrap())
}

/// Distinct non-empty patterns over `cells` that switch every cell on at
/// least once.
fn pattern_set(cells: usize, max: usize) -> impl Strategy<Value = PatternSet> {
    let full = (1u64 << cells) - 1;
    prop::collection::btree_set(1u64..=full, 1..=max).prop_map(move |masks| {
        let mut masks: Vec<u64> = masks.into_iter().collect();
        let covered = masks.iter().fold(0, |a, m| a | m);
        if covered != full {
            masks.push(full & !covered);
            masks.sort_unstable();
            masks.dedup();
        }
        PatternSet::new(masks.into_iter().map(|m| Pattern::new(m, cells).unwrap()).collect()).unwrap()
    })
}

#[derive(Debug)]
struct Instance {
    rates: RateTensor,
    weights: Vec<f64>,
    serving: Vec<usize>,
}

fn instance(max_users: usize, max_cells: usize, max_patterns: usize) -> impl Strategy<Value = Instance> {
    (1..=max_users, 1..=max_cells)
        .prop_flat_map(move |(k, b)| {
            (
                signal(k, b),
                pattern_set(b, max_patterns),
                prop::collection::vec(0.5f64..2.0, k),
                prop::collection::vec(-10.0f64..10.0, b),
            )
        })
        .prop_map(|(sig, set, weights, biases)| {
            let strength = sig.mapv(f64::log10) * 10.0;
            let serving = initial_association(strength.view(), &biases).unwrap();
            let rates = RateTensor::from_signal(sig, 1.0, &set, FadingModel::Deterministic, Storage::Dense).unwrap();
            Instance {
                rates,
                weights,
                serving,
            }
        })
}

fn small_params(users: usize, seed: u64) -> SearchParams {
    SearchParams {
        max_iter_total: 40,
        diversification: (users / 3).max(1),
        seed,
        ..SearchParams::default()
    }
}

pub fn simplex_feasibility(cases: u32) -> Result<(), String> {
    let strategy = (1usize..8, 1usize..12).prop_flat_map(|(k, n)| {
        (
            prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0f64..5.0], k * n),
            prop::collection::vec(0.1f64..3.0, k),
            Just((k, n)),
        )
    });
    finish(runner(cases).run(&strategy, |(c, w, (k, n))| {
        let mut coeffs = Array2::from_shape_vec((k, n), c).unwrap();
        // keep every user servable somewhere
        for r in 0..k {
            if coeffs.row(r).iter().all(|&v| v == 0.0) {
                coeffs[[r, r % n]] = 1.0;
            }
        }
        let rep = maximize_log_mixture(coeffs.view(), &w, None, &SolverOptions::absolute(1e-7))
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let pi = rep.allocation.as_slice();
        prop_assert!(pi.iter().all(|&p| p >= 0.0));
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(rep.gap <= 1e-7);
        Ok(())
    }))
}

pub fn interference_monotonicity(cases: u32) -> Result<(), String> {
    let strategy = (1usize..5, 2usize..7).prop_flat_map(|(k, b)| {
        let full = (1u64 << b) - 1;
        (signal(k, b), 1u64..=full, 1u64..=full, Just(b))
    });
    finish(runner(cases).run(&strategy, |(sig, m1, m2, b)| {
        // m1 and its superset m1 | m2
        let small = Pattern::new(m1, b).unwrap();
        let big = Pattern::new(m1 | m2, b).unwrap();
        let set = PatternSet::new(if m1 == m1 | m2 { vec![small] } else { vec![small, big] }).unwrap();
        let last = set.len() - 1;
        let table = build_interference_table(&sig, &set).unwrap();
        let rates = RateTensor::from_signal(sig.clone(), 1.0, &set, FadingModel::Deterministic, Storage::Dense).unwrap();
        for k in 0..sig.nrows() {
            prop_assert!(table.total[[k, last]] >= table.total[[k, 0]]);
            for cell in (0..b).filter(|&c| small.is_active(c)) {
                prop_assert!(rates.efficiency(k, cell, last) <= rates.efficiency(k, cell, 0));
            }
            for cell in (0..b).filter(|&c| !big.is_active(c)) {
                prop_assert_eq!(rates.efficiency(k, cell, last), 0.0);
            }
        }
        Ok(())
    }))
}

pub fn incremental_utility(cases: u32) -> Result<(), String> {
    let strategy = (instance(10, 5, 6), prop::collection::vec(0.01f64..1.0, 6), any::<prop::sample::Index>(), any::<prop::sample::Index>());
    finish(runner(cases).run(&strategy, |(inst, raw, user, cell)| {
        let n = inst.rates.pattern_count();
        let total: f64 = raw[..n].iter().sum();
        let pi = Allocation::new(raw[..n].iter().map(|p| p / total).collect()).unwrap();
        let problem = Problem::new(&inst.rates, &inst.weights, 1e7).unwrap();
        let b = inst.rates.cell_count();
        let assoc = Association::new(inst.serving.clone(), b, &inst.weights).unwrap();
        let sol = Solution::new(&problem, assoc.clone(), pi.clone()).unwrap();
        let (u, to) = (user.index(inst.weights.len()), cell.index(b));
        let fast = sol.evaluate_reassign(&problem, u, to);
        let mut moved = assoc;
        moved.reassign(u, to, inst.weights[u]);
        let slow = Solution::new(&problem, moved, pi).unwrap().utility;
        if slow == f64::NEG_INFINITY || fast == f64::NEG_INFINITY {
            prop_assert!(fast == slow || sol.utility == f64::NEG_INFINITY);
        } else {
            prop_assert!((fast - slow).abs() <= 1e-9 * slow.abs().max(1.0), "{} vs {}", fast, slow);
        }
        Ok(())
    }))
}

pub fn incumbent_monotonicity(cases: u32) -> Result<(), String> {
    finish(runner(cases).run(&(instance(8, 4, 5), any::<u64>()), |(inst, seed)| {
        let problem = Problem::new(&inst.rates, &inst.weights, 1e7).unwrap();
        let b = inst.rates.cell_count();
        let start = Association::new(inst.serving.clone(), b, &inst.weights).unwrap();
        let params = small_params(inst.weights.len(), seed);
        let mut last = f64::NEG_INFINITY;
        let mut ok = true;
        let mut worst = 0.0f64;
        let out = tabu_search_observed(&problem, start, &params, &mut |obs| {
            ok &= obs.incumbent.utility >= last && obs.tabu.len() <= params.tenure;
            last = obs.incumbent.utility;
            worst = worst.max(obs.current.cache_error(&problem));
        })
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(ok);
        prop_assert!(worst <= 1e-9, "cache drift {}", worst);
        prop_assert!(out.best.utility >= out.initial_utility);
        Ok(())
    }))
}

pub fn tabu_expiry(cases: u32) -> Result<(), String> {
    let strategy = (1usize..6, prop::collection::vec((0usize..4, 0usize..3, 0usize..3), 1..30));
    finish(runner(cases).run(&strategy, |(tenure, pushes)| {
        let mut list = TabuList::new(tenure);
        let mut t = 0;
        let mut log: Vec<(TabuKey, usize)> = Vec::new();
        for (user, cell, gap) in pushes {
            t += gap;
            let key = TabuKey::User { user, cell };
            list.push(key, t);
            log.push((key, t));
            prop_assert!(list.len() <= tenure);
            // reference: the last `tenure` pushes, each blocking [from, from + tenure)
            let live = &log[log.len().saturating_sub(tenure)..];
            for probe_user in 0..4 {
                for probe_cell in 0..3 {
                    let probe = TabuKey::User { user: probe_user, cell: probe_cell };
                    for at in t..t + tenure + 2 {
                        let expected = live.iter().any(|&(k, from)| k == probe && from <= at && at < from + tenure);
                        prop_assert_eq!(list.is_tabu(&probe, at), expected);
                    }
                }
            }
        }
        Ok(())
    }))
}

pub fn search_determinism(cases: u32) -> Result<(), String> {
    finish(runner(cases).run(&(instance(8, 4, 4), any::<u64>()), |(inst, seed)| {
        let problem = Problem::new(&inst.rates, &inst.weights, 1e7).unwrap();
        let b = inst.rates.cell_count();
        let params = small_params(inst.weights.len(), seed);
        let run = || tabu_search(&problem, Association::new(inst.serving.clone(), b, &inst.weights).unwrap(), &params);
        let (x, y) = (run().unwrap(), run().unwrap());
        prop_assert_eq!(x.best, y.best);
        prop_assert_eq!(x.trace, y.trace);
        Ok(())
    }))
}

pub fn unit_fading(cases: u32) -> Result<(), String> {
    let strategy = (1usize..5, 1usize..5)
        .prop_flat_map(|(k, b)| (signal(k, b), pattern_set(b, 4), 1usize..20, any::<u64>()));
    finish(runner(cases).run(&strategy, |(sig, set, samples, seed)| {
        let det = RateTensor::from_signal(sig.clone(), 1.0, &set, FadingModel::Deterministic, Storage::Dense).unwrap();
        let mc = RateTensor::from_signal(
            sig.clone(),
            1.0,
            &set,
            FadingModel::MonteCarlo {
                samples,
                seed,
                law: FadingLaw::Unit,
            },
            Storage::Dense,
        )
        .unwrap();
        for k in 0..sig.nrows() {
            for b in 0..sig.ncols() {
                for i in 0..set.len() {
                    prop_assert_eq!(det.efficiency(k, b, i), mc.efficiency(k, b, i));
                }
            }
        }
        Ok(())
    }))
}
