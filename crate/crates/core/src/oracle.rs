//! Exhaustive references for desk-scale instances: a simplex grid for the
//! bandwidth split and full enumeration of associations for the joint
//! problem.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::allocator::{log_utility, optimize_allocation, Allocation, SolverOptions};
use crate::association::Association;
use crate::error::{Error, Result};
use crate::linear_to_db;
use crate::patterns::{enumerate_all, PatternSet};
use crate::rates::{aggregate_rate, FadingModel, RateTensor, Storage};
use crate::search::{initial_association, tabu_search, Problem, SearchParams};

pub const MAX_USERS: usize = 8;
pub const MAX_CELLS: usize = 4;
pub const MAX_PATTERNS: usize = 4;
pub const MAX_GRID_PATTERNS: usize = 3;

/// A small explicit instance of the joint problem.
#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub rates: RateTensor,
    pub weights: Vec<f64>,
    pub bandwidth: f64,
    /// Per-link received strength in dB, used for the biased initial
    /// association.
    pub strength_db: Array2<f64>,
}

impl SmallInstance {
    pub fn new(rates: RateTensor, weights: Vec<f64>, bandwidth: f64, strength_db: Array2<f64>) -> Result<Self> {
        let (k, b, i) = (rates.user_count(), rates.cell_count(), rates.pattern_count());
        if k > MAX_USERS || b > MAX_CELLS || i > MAX_PATTERNS {
            return Err(Error::TooLarge {
                what: "oracle instance",
                size: k.max(b).max(i),
                limit: MAX_USERS,
            });
        }
        if weights.len() != k || strength_db.dim() != (k, b) {
            return Err(Error::Dimension("weights or strengths do not match the rate tensor".into()));
        }
        Problem::new(&rates, &weights, bandwidth)?;
        Ok(Self {
            rates,
            weights,
            bandwidth,
            strength_db,
        })
    }

    /// Random physical instance: link powers log-uniform over 50 dB around
    /// the noise floor and `patterns` distinct reuse patterns that together
    /// switch on every cell.
    pub fn random(seed: u64, users: usize, cells: usize, patterns: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all = enumerate_all(cells)?;
        if patterns > all.len() {
            return Err(Error::Config(format!("only {} patterns exist over {cells} cells", all.len())));
        }
        let set = loop {
            let mut pool: Vec<_> = all.iter().copied().collect();
            pool.shuffle(&mut rng);
            pool.truncate(patterns);
            let covered = pool.iter().fold(0u64, |m, p| m | p.mask());
            if covered.count_ones() as usize == cells {
                break PatternSet::new(pool)?;
            }
        };
        let signal = Array2::from_shape_fn((users, cells), |_| 10f64.powf(rng.random_range(-2.0..3.0)));
        let strength = signal.mapv(linear_to_db);
        let weights = (0..users).map(|_| rng.random_range(0.5..2.0)).collect();
        let rates = RateTensor::from_signal(signal, 1.0, &set, FadingModel::Deterministic, Storage::Dense)?;
        Self::new(rates, weights, 1e6, strength)
    }

    pub fn problem(&self) -> Problem<'_> {
        Problem {
            rates: &self.rates,
            weights: &self.weights,
            bandwidth: self.bandwidth,
        }
    }
}

fn split_utility(association: &Association, rates: &RateTensor, weights: &[f64], bandwidth: f64, pi: &[f64]) -> f64 {
    let r: Vec<f64> = (0..association.user_count())
        .map(|k| aggregate_rate(association, rates, bandwidth, pi, k))
        .collect();
    log_utility(&r, weights)
}

/// Best point of the simplex grid with spacing `resolution`, for at most
/// three patterns. Ties keep the first point in lexicographic order.
pub fn grid_allocation(
    association: &Association,
    rates: &RateTensor,
    weights: &[f64],
    bandwidth: f64,
    resolution: f64,
) -> Result<(Allocation, f64)> {
    let n_pat = rates.pattern_count();
    if n_pat > MAX_GRID_PATTERNS {
        return Err(Error::TooLarge {
            what: "pattern count for grid search",
            size: n_pat,
            limit: MAX_GRID_PATTERNS,
        });
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::Config("grid resolution must lie in (0, 1]".into()));
    }
    let steps = (1.0 / resolution).round() as usize;
    let n = steps as f64;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut consider = |pi: Vec<f64>| {
        let u = split_utility(association, rates, weights, bandwidth, &pi);
        if best.as_ref().is_none_or(|(_, b)| u > *b) {
            best = Some((pi, u));
        }
    };
    match n_pat {
        1 => consider(vec![1.0]),
        2 => (0..=steps).for_each(|a| consider(vec![a as f64 / n, (steps - a) as f64 / n])),
        _ => {
            for a in 0..=steps {
                for b in 0..=steps - a {
                    consider(vec![a as f64 / n, b as f64 / n, (steps - a - b) as f64 / n]);
                }
            }
        }
    }
    let (pi, u) = best.expect("grid is never empty");
    Ok((Allocation::new(pi)?, u))
}

#[derive(Debug, Clone)]
pub struct JointOptimum {
    pub association: Association,
    pub allocation: Allocation,
    pub utility: f64,
    /// Associations with at least one user left without service.
    pub infeasible: usize,
}

/// Enumerates all `B^K` associations and solves the split for each
/// (Frank-Wolfe at gap 1e-9, plus the grid at `resolution` when `I <= 3`,
/// keeping whichever is better). The first association in base-`B`
/// counting order wins ties.
pub fn brute_force_joint(instance: &SmallInstance, resolution: f64) -> Result<JointOptimum> {
    let rates = &instance.rates;
    let (k_count, b_count) = (rates.user_count(), rates.cell_count());
    if k_count > MAX_USERS || b_count > MAX_CELLS || rates.pattern_count() > MAX_PATTERNS {
        return Err(Error::TooLarge {
            what: "oracle instance",
            size: k_count.max(b_count),
            limit: MAX_USERS,
        });
    }
    let opts = SolverOptions::absolute(1e-9);
    let total = b_count.pow(k_count as u32);
    let mut best: Option<JointOptimum> = None;
    let mut infeasible = 0;
    let mut serving = vec![0usize; k_count];
    for code in 0..total {
        let mut c = code;
        for s in serving.iter_mut().rev() {
            *s = c % b_count;
            c /= b_count;
        }
        let assoc = Association::new(serving.clone(), b_count, &instance.weights)?;
        let rep = match optimize_allocation(&assoc, rates, &instance.weights, instance.bandwidth, None, &opts) {
            Ok(rep) => rep,
            Err(Error::Infeasible { .. }) => {
                infeasible += 1;
                continue;
            }
            Err(Error::NotConverged { allocation, .. }) => {
                let allocation = Allocation::new(allocation)?;
                let objective = split_utility(&assoc, rates, &instance.weights, instance.bandwidth, allocation.as_slice());
                crate::allocator::SolveReport {
                    allocation,
                    objective,
                    gap: f64::NAN,
                    iterations: 0,
                    trace: Vec::new(),
                }
            }
            Err(e) => return Err(e),
        };
        let mut candidate = (rep.allocation, rep.objective);
        if rates.pattern_count() <= MAX_GRID_PATTERNS {
            let grid = grid_allocation(&assoc, rates, &instance.weights, instance.bandwidth, resolution)?;
            if grid.1 > candidate.1 {
                candidate = grid;
            }
        }
        if best.as_ref().is_none_or(|b| candidate.1 > b.utility) {
            best = Some(JointOptimum {
                association: assoc,
                allocation: candidate.0,
                utility: candidate.1,
                infeasible: 0,
            });
        }
    }
    let mut best = best.ok_or(Error::Infeasible { user: 0 })?;
    best.infeasible = infeasible;
    Ok(best)
}

/// One random instance checked against both references.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationRow {
    pub seed: u64,
    pub users: usize,
    pub cells: usize,
    pub patterns: usize,
    pub brute_force: f64,
    pub tabu: f64,
    /// Frank-Wolfe utility at the brute-force association.
    pub frank_wolfe: f64,
    pub fw_gap: f64,
    /// Grid utility at the brute-force association (`I <= 3` only).
    pub grid: Option<f64>,
}

/// Runs tabu search, brute force, Frank-Wolfe and the grid on `count`
/// random instances with seeds `seed..seed + count`.
pub fn validation_suite(count: usize, seed: u64, params: &SearchParams) -> Result<Vec<ValidationRow>> {
    (0..count as u64)
        .map(|j| {
            let s = seed.wrapping_add(j);
            let users = 4 + (j % 3) as usize;
            let patterns = 1 + (j % 4) as usize;
            let inst = SmallInstance::random(s, users, 3, patterns)?;
            let best = brute_force_joint(&inst, 1e-2)?;

            let serving = initial_association(inst.strength_db.view(), &[0.0; 3])?;
            let start = Association::new(serving, 3, &inst.weights)?;
            let p = SearchParams {
                seed: s,
                ..params.clamped_to(users)
            };
            let tabu = tabu_search(&inst.problem(), start, &p)?;

            let fw = optimize_allocation(
                &best.association,
                &inst.rates,
                &inst.weights,
                inst.bandwidth,
                None,
                &SolverOptions::absolute(1e-6),
            )?;
            let grid = if patterns <= MAX_GRID_PATTERNS {
                Some(grid_allocation(&best.association, &inst.rates, &inst.weights, inst.bandwidth, 1e-3)?.1)
            } else {
                None
            };
            Ok(ValidationRow {
                seed: s,
                users,
                cells: 3,
                patterns,
                brute_force: best.utility,
                tabu: tabu.best.utility,
                frank_wolfe: fw.objective,
                fw_gap: fw.gap,
                grid,
            })
        })
        .collect()
}
