//! Tabu search over user associations and bandwidth splits.
//!
//! A solution is an association (one serving cell per user) plus a split
//! `pi` of the band over the pattern set. Its neighbors move one user to a
//! different cell with `pi` fixed, or re-solve `pi` for the current
//! association. The search always steps to the best admissible neighbor,
//! even when that is worse than the current solution, and restarts from a
//! perturbed copy of the best solution found whenever the inner loop stalls.

mod memory;
mod trace;

pub use memory::{ActivityCounts, TabuEntry, TabuKey, TabuList};
pub use trace::{write_trace_csv, EventKind, TraceRecord};

use log::warn;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{maximize_log_mixture, Allocation, SolverOptions};
use crate::association::Association;
use crate::error::{Error, Result};
use crate::rates::RateTensor;

/// Rates, user weights and bandwidth: everything the objective depends on.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub rates: &'a RateTensor,
    pub weights: &'a [f64],
    pub bandwidth: f64,
}

impl<'a> Problem<'a> {
    pub fn new(rates: &'a RateTensor, weights: &'a [f64], bandwidth: f64) -> Result<Self> {
        if weights.len() != rates.user_count() {
            return Err(Error::Dimension(format!(
                "{} weights for {} users",
                weights.len(),
                rates.user_count()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Config("user weights must be positive".into()));
        }
        if !(bandwidth > 0.0) {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        Ok(Self {
            rates,
            weights,
            bandwidth,
        })
    }

    pub fn users(&self) -> usize {
        self.rates.user_count()
    }

    pub fn cells(&self) -> usize {
        self.rates.cell_count()
    }

    pub fn patterns(&self) -> usize {
        self.rates.pattern_count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    /// Tabu tenure `r`.
    pub tenure: usize,
    /// Non-improving moves allowed per inner loop before diversifying.
    pub max_iter_inner: usize,
    /// Total number of executed moves.
    pub max_iter_total: usize,
    /// Diversification amplitude: users reassigned per restart.
    pub diversification: usize,
    pub seed: u64,
    /// Relative Frank-Wolfe gap tolerance for the bandwidth split.
    pub solver_tol: f64,
    pub solver_max_iters: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            tenure: 2,
            max_iter_inner: 4,
            max_iter_total: 800,
            diversification: 15,
            seed: 0,
            solver_tol: 1e-6,
            solver_max_iters: 20_000,
        }
    }
}

impl SearchParams {
    pub fn validate(&self, users: usize) -> Result<()> {
        if self.tenure == 0 || self.max_iter_inner == 0 || self.max_iter_total == 0 {
            return Err(Error::Config("tenure and iteration limits must be positive".into()));
        }
        if self.diversification == 0 || self.diversification > users {
            return Err(Error::Config(format!(
                "diversification amplitude {} must lie in 1..={users}",
                self.diversification
            )));
        }
        if !(self.solver_tol > 0.0) || self.solver_max_iters == 0 {
            return Err(Error::Config("solver tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }

    /// Copy with the diversification amplitude capped at `users`.
    pub fn clamped_to(&self, users: usize) -> Self {
        Self {
            diversification: self.diversification.min(users).max(1),
            ..self.clone()
        }
    }

    fn solver(&self, utility: f64) -> SolverOptions {
        SolverOptions {
            tol: self.solver_tol * utility.abs().max(1.0),
            relative: false,
            max_iters: self.solver_max_iters,
            away_steps: true,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Reassign { user: usize, from: usize, to: usize },
    Reallocate,
}

impl Move {
    /// Key checked against the tabu list before executing this move.
    pub fn tabu_key(&self) -> TabuKey {
        match *self {
            Move::Reassign { user, to, .. } => TabuKey::User { user, cell: to },
            Move::Reallocate => TabuKey::Profile,
        }
    }

    /// Key recorded after executing this move (forbids undoing it).
    pub fn reverse_key(&self) -> TabuKey {
        match *self {
            Move::Reassign { user, from, .. } => TabuKey::User { user, cell: from },
            Move::Reallocate => TabuKey::Profile,
        }
    }
}

/// Picks `argmax_b (rx[k, b] + bias[b])` for each user, lowest cell on ties.
pub fn initial_association(rx_power_dbm: ArrayView2<f64>, biases_db: &[f64]) -> Result<Vec<usize>> {
    let (users, cells) = rx_power_dbm.dim();
    if biases_db.len() != cells {
        return Err(Error::Dimension(format!("{} biases for {cells} cells", biases_db.len())));
    }
    Ok((0..users)
        .map(|k| {
            let mut best = 0;
            for b in 1..cells {
                if rx_power_dbm[[k, b]] + biases_db[b] > rx_power_dbm[[k, best]] + biases_db[best] {
                    best = b;
                }
            }
            best
        })
        .collect())
}

/// All single-user reassignments (user-major, cell-minor) followed by the
/// bandwidth re-split: `K (B - 1) + 1` moves.
pub fn neighborhood(association: &Association) -> Vec<Move> {
    let cells = association.cell_count();
    let mut moves = Vec::with_capacity(association.user_count() * cells.saturating_sub(1) + 1);
    for (user, &from) in association.serving().iter().enumerate() {
        for to in (0..cells).filter(|&b| b != from) {
            moves.push(Move::Reassign { user, from, to });
        }
    }
    moves.push(Move::Reallocate);
    moves
}

/// A point of the search space with cached per-(user, cell) spectral mixes
/// `mix[[k, b]] = sum_i pi_i r[k, b, i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub association: Association,
    pub allocation: Allocation,
    pub mix: Array2<f64>,
    pub utility: f64,
}

fn spectral_mix(rates: &RateTensor, pi: &[f64]) -> Array2<f64> {
    let support: Vec<(usize, f64)> = pi.iter().copied().enumerate().filter(|&(_, p)| p > 0.0).collect();
    let mut mix = Array2::zeros((rates.user_count(), rates.cell_count()));
    for ((k, b), v) in mix.indexed_iter_mut() {
        *v = support.iter().map(|&(i, p)| p * rates.efficiency(k, b, i)).sum();
    }
    mix
}

fn utility_from_mix(association: &Association, mix: &Array2<f64>, weights: &[f64], bandwidth: f64) -> f64 {
    let mut total = 0.0;
    for (k, &b) in association.serving().iter().enumerate() {
        let s = mix[[k, b]];
        if !(s > 0.0) {
            return f64::NEG_INFINITY;
        }
        total += weights[k] * (bandwidth * s / association.load(b) as f64).ln();
    }
    total
}

impl Solution {
    pub fn new(problem: &Problem, association: Association, allocation: Allocation) -> Result<Self> {
        if association.user_count() != problem.users() || association.cell_count() != problem.cells() {
            return Err(Error::Dimension("association does not match problem".into()));
        }
        if allocation.len() != problem.patterns() {
            return Err(Error::Dimension("allocation does not match pattern count".into()));
        }
        let mix = spectral_mix(problem.rates, allocation.as_slice());
        let utility = utility_from_mix(&association, &mix, problem.weights, problem.bandwidth);
        Ok(Self {
            association,
            allocation,
            mix,
            utility,
        })
    }

    pub fn per_user_rates(&self, bandwidth: f64) -> Vec<f64> {
        self.association
            .serving()
            .iter()
            .enumerate()
            .map(|(k, &b)| bandwidth * self.mix[[k, b]] / self.association.load(b) as f64)
            .collect()
    }

    /// Utility after moving `user` to `to` with the split unchanged, from
    /// cached mixes and loads in O(1).
    pub fn evaluate_reassign(&self, problem: &Problem, user: usize, to: usize) -> f64 {
        let from = self.association.serving_cell(user);
        if from == to {
            return self.utility;
        }
        let s_to = self.mix[[user, to]];
        if !(s_to > 0.0) || self.utility == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let w = problem.weights[user];
        let n_from = self.association.load(from) as f64;
        let n_to = self.association.load(to) as f64;
        let mut delta = w * (s_to.ln() - self.mix[[user, from]].ln() + n_from.ln() - (n_to + 1.0).ln());
        if self.association.load(from) > 1 {
            let rest = self.association.weight_sums()[from] - w;
            delta += rest * (n_from.ln() - (n_from - 1.0).ln());
        }
        if self.association.load(to) > 0 {
            delta -= self.association.weight_sums()[to] * ((n_to + 1.0).ln() - n_to.ln());
        }
        self.utility + delta
    }

    /// Largest absolute deviation between the caches (mixes, loads, weight
    /// sums, utility) and a from-scratch recomputation.
    pub fn cache_error(&self, problem: &Problem) -> f64 {
        let fresh = spectral_mix(problem.rates, self.allocation.as_slice());
        let mut err = self
            .mix
            .iter()
            .zip(fresh.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let assoc = Association::new(self.association.serving().to_vec(), problem.cells(), problem.weights)
            .expect("serving vector stays valid");
        if assoc.loads() != self.association.loads() {
            return f64::INFINITY;
        }
        for (a, b) in assoc.weight_sums().iter().zip(self.association.weight_sums()) {
            err = err.max((a - b).abs());
        }
        let u = utility_from_mix(&assoc, &fresh, problem.weights, problem.bandwidth);
        if u.is_finite() || self.utility.is_finite() {
            err = err.max((u - self.utility).abs());
        }
        err
    }

    fn apply_reassign(&mut self, problem: &Problem, user: usize, to: usize) {
        self.association.reassign(user, to, problem.weights[user]);
        self.utility = utility_from_mix(&self.association, &self.mix, problem.weights, problem.bandwidth);
    }

    fn set_allocation(&mut self, problem: &Problem, allocation: Allocation) {
        self.mix = spectral_mix(problem.rates, allocation.as_slice());
        self.allocation = allocation;
        self.utility = utility_from_mix(&self.association, &self.mix, problem.weights, problem.bandwidth);
    }
}

/// Picks the `gamma` least active users (ties by index) and moves each to a
/// uniformly drawn other cell that can serve it. Each change is recorded in
/// `activity` and its reverse is made tabu from iteration `now`.
///
/// Returns the new association and the users that were moved.
pub fn diversify_association<R: Rng>(
    problem: &Problem,
    incumbent: &Association,
    activity: &mut ActivityCounts,
    gamma: usize,
    rng: &mut R,
    tabu: &mut TabuList,
    now: usize,
) -> (Association, Vec<usize>) {
    let mut assoc = incumbent.clone();
    if problem.cells() < 2 {
        if gamma > 0 {
            warn!("single-cell network: diversification is a no-op");
        }
        return (assoc, Vec::new());
    }
    let mut moved = Vec::with_capacity(gamma);
    for user in activity.least_active(gamma) {
        let from = assoc.serving_cell(user);
        let options: Vec<usize> = (0..problem.cells())
            .filter(|&b| b != from && problem.rates.servable(user, b))
            .collect();
        if options.is_empty() {
            warn!("user {} has no alternative serving cell", user + 1);
            continue;
        }
        let to = options[rng.random_range(0..options.len())];
        assoc.reassign(user, to, problem.weights[user]);
        activity.record_user(user);
        tabu.push(TabuKey::User { user, cell: from }, now);
        moved.push(user);
    }
    (assoc, moved)
}

/// Restarts from `incumbent`: reassigns `gamma` least-active users and
/// re-solves the split for the new association.
#[allow(clippy::too_many_arguments)]
pub fn diversify<R: Rng>(
    problem: &Problem,
    incumbent: &Solution,
    activity: &mut ActivityCounts,
    gamma: usize,
    rng: &mut R,
    tabu: &mut TabuList,
    now: usize,
    params: &SearchParams,
) -> Result<Solution> {
    if gamma == 0 {
        return Ok(incumbent.clone());
    }
    let (assoc, moved) = diversify_association(problem, &incumbent.association, activity, gamma, rng, tabu, now);
    if moved.is_empty() {
        return Ok(incumbent.clone());
    }
    let served = served_rows(problem, &assoc);
    let allocation = solve_split(problem, &served, incumbent.allocation.as_slice(), &params.solver(incumbent.utility))?;
    Solution::new(problem, assoc, allocation)
}

/// Row `k` holds `r[k, b(k), i]` over all patterns.
fn served_rows(problem: &Problem, assoc: &Association) -> Array2<f64> {
    let mut served = Array2::zeros((problem.users(), problem.patterns()));
    for k in 0..problem.users() {
        let mut row = served.row_mut(k);
        problem
            .rates
            .fill_row(k, assoc.serving_cell(k), row.as_slice_mut().expect("standard layout"));
    }
    served
}

/// Re-solves the split. The per-user factor `W / N_b` is constant in `pi`,
/// so the served efficiencies alone define the maximizer.
fn solve_split(problem: &Problem, served: &Array2<f64>, warm: &[f64], opts: &SolverOptions) -> Result<Allocation> {
    let warm_feasible = served
        .rows()
        .into_iter()
        .all(|row| row.iter().zip(warm).map(|(r, p)| r * p).sum::<f64>() > 0.0);
    match maximize_log_mixture(served.view(), problem.weights, Some(warm), opts) {
        Ok(rep) if rep.iterations == 0 && warm_feasible => {
            // Already optimal: keep the warm start bit-for-bit.
            Allocation::new(warm.to_vec()).or(Ok(rep.allocation))
        }
        Ok(rep) => Ok(rep.allocation),
        Err(Error::NotConverged {
            iterations,
            gap,
            allocation,
        }) => {
            warn!("split solver stopped after {iterations} iterations, gap {gap:e}");
            Allocation::new(allocation)
        }
        Err(e) => Err(e),
    }
}

/// Predicted utilities carry rounding error from the incremental update, so
/// a tabu move must beat the incumbent by more than this relative margin.
pub const ASPIRATION_MARGIN: f64 = 1e-12;

/// Everything visible to an observer after each trace event.
pub struct Observation<'a> {
    pub record: &'a TraceRecord,
    pub current: &'a Solution,
    pub incumbent: &'a Solution,
    pub tabu: &'a TabuList,
    pub activity: &'a ActivityCounts,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: Solution,
    pub initial_utility: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRecord>,
    pub activity: ActivityCounts,
}

pub fn tabu_search(problem: &Problem, initial: Association, params: &SearchParams) -> Result<SearchOutcome> {
    tabu_search_observed(problem, initial, params, &mut |_| {})
}

/// Tabu search with a callback invoked after every trace event.
pub fn tabu_search_observed(
    problem: &Problem,
    initial: Association,
    params: &SearchParams,
    observer: &mut dyn FnMut(&Observation),
) -> Result<SearchOutcome> {
    params.validate(problem.users())?;
    if initial.user_count() != problem.users() || initial.cell_count() != problem.cells() {
        return Err(Error::Dimension("initial association does not match problem".into()));
    }

    let mut served = served_rows(problem, &initial);
    let pi0 = match maximize_log_mixture(served.view(), problem.weights, None, &params.solver(1.0)) {
        Ok(rep) => rep.allocation,
        Err(Error::NotConverged { allocation, .. }) => Allocation::new(allocation)?,
        Err(Error::Infeasible { user }) => {
            log::error!(
                "user {} cannot be served by cell {} under any pattern",
                user + 1,
                initial.serving_cell(user) + 1
            );
            return Err(Error::Infeasible { user });
        }
        Err(e) => return Err(e),
    };
    let mut current = Solution::new(problem, initial, pi0)?;
    let mut incumbent = current.clone();
    let initial_utility = current.utility;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut tabu = TabuList::new(params.tenure);
    let mut activity = ActivityCounts::new(problem.users());
    let mut trace = Vec::new();
    let mut t = 0;

    let mut emit = |record: TraceRecord,
                    current: &Solution,
                    incumbent: &Solution,
                    tabu: &TabuList,
                    activity: &ActivityCounts,
                    trace: &mut Vec<TraceRecord>| {
        observer(&Observation {
            record: &record,
            current,
            incumbent,
            tabu,
            activity,
        });
        trace.push(record);
    };

    emit(
        TraceRecord {
            iteration: 0,
            kind: EventKind::Start,
            chosen: None,
            utility: current.utility,
            incumbent: incumbent.utility,
            tabu_hit: false,
            aspiration: false,
            diversified: Vec::new(),
        },
        &current,
        &incumbent,
        &tabu,
        &activity,
        &mut trace,
    );

    let moves_per_user = problem.cells() - 1;
    let mut idle_rounds = 0;
    while t < params.max_iter_total {
        let round_start = t;
        let mut stalls = 0;
        while stalls < params.max_iter_inner && t < params.max_iter_total {
            // Evaluate the whole neighborhood.
            let mut candidates: Vec<(Move, f64)> =
                Vec::with_capacity(problem.users() * moves_per_user + 1);
            for (user, &from) in current.association.serving().iter().enumerate() {
                for to in (0..problem.cells()).filter(|&b| b != from) {
                    candidates.push((
                        Move::Reassign { user, from, to },
                        current.evaluate_reassign(problem, user, to),
                    ));
                }
            }
            let split = solve_split(
                problem,
                &served,
                current.allocation.as_slice(),
                &params.solver(current.utility),
            )?;
            let split_utility = if split == current.allocation {
                current.utility
            } else {
                let mix = served.dot(&ndarray::ArrayView1::from(split.as_slice()));
                let mut u = 0.0;
                for (k, &b) in current.association.serving().iter().enumerate() {
                    u += problem.weights[k]
                        * (problem.bandwidth * mix[k] / current.association.load(b) as f64).ln();
                }
                if u.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    u
                }
            };
            candidates.push((Move::Reallocate, split_utility));

            // Best admissible: highest utility, generation order on ties.
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            order.sort_by(|&a, &b| candidates[b].1.total_cmp(&candidates[a].1).then(a.cmp(&b)));
            let mut tabu_hit = false;
            let mut chosen = None;
            for idx in order {
                let (mv, u) = candidates[idx];
                if u == f64::NEG_INFINITY {
                    break;
                }
                if tabu.is_tabu(&mv.tabu_key(), t) {
                    if u > incumbent.utility + ASPIRATION_MARGIN * incumbent.utility.abs().max(1.0) {
                        chosen = Some((mv, u, true));
                        break;
                    }
                    tabu_hit = true;
                    continue;
                }
                chosen = Some((mv, u, false));
                break;
            }

            let Some((mv, _, aspiration)) = chosen else {
                emit(
                    TraceRecord {
                        iteration: t,
                        kind: EventKind::NoAdmissible,
                        chosen: None,
                        utility: current.utility,
                        incumbent: incumbent.utility,
                        tabu_hit,
                        aspiration: false,
                        diversified: Vec::new(),
                    },
                    &current,
                    &incumbent,
                    &tabu,
                    &activity,
                    &mut trace,
                );
                break;
            };

            let previous = current.utility;
            match mv {
                Move::Reassign { user, to, .. } => {
                    current.apply_reassign(problem, user, to);
                    let mut row = served.row_mut(user);
                    problem.rates.fill_row(user, to, row.as_slice_mut().expect("standard layout"));
                    activity.record_user(user);
                }
                Move::Reallocate => {
                    if split != current.allocation {
                        current.set_allocation(problem, split);
                    }
                    activity.record_profile();
                }
            }
            t += 1;
            tabu.push(mv.reverse_key(), t);

            // Non-improving moves accumulate over the whole inner loop; a
            // reset on every uptick lets short cycles run forever.
            if current.utility <= previous {
                stalls += 1;
            } else if current.utility > incumbent.utility {
                incumbent = current.clone();
            }

            emit(
                TraceRecord {
                    iteration: t,
                    kind: EventKind::Move,
                    chosen: Some(mv),
                    utility: current.utility,
                    incumbent: incumbent.utility,
                    tabu_hit,
                    aspiration,
                    diversified: Vec::new(),
                },
                &current,
                &incumbent,
                &tabu,
                &activity,
                &mut trace,
            );
        }

        if t >= params.max_iter_total {
            break;
        }
        if t == round_start {
            idle_rounds += 1;
            if idle_rounds > 1 {
                // A restart that cannot move at all would repeat forever.
                warn!("no admissible move after diversification; stopping at iteration {t}");
                break;
            }
        } else {
            idle_rounds = 0;
        }

        tabu.clear();
        let (assoc, moved) = diversify_association(
            problem,
            &incumbent.association,
            &mut activity,
            params.diversification,
            &mut rng,
            &mut tabu,
            t,
        );
        // Refresh only the rows whose serving cell differs from the current one.
        for k in 0..problem.users() {
            if assoc.serving_cell(k) != current.association.serving_cell(k) {
                let mut row = served.row_mut(k);
                problem
                    .rates
                    .fill_row(k, assoc.serving_cell(k), row.as_slice_mut().expect("standard layout"));
            }
        }
        current = if moved.is_empty() {
            incumbent.clone()
        } else {
            let allocation = solve_split(
                problem,
                &served,
                incumbent.allocation.as_slice(),
                &params.solver(incumbent.utility),
            )?;
            Solution::new(problem, assoc, allocation)?
        };
        emit(
            TraceRecord {
                iteration: t,
                kind: EventKind::Diversify,
                chosen: None,
                utility: current.utility,
                incumbent: incumbent.utility,
                tabu_hit: false,
                aspiration: false,
                diversified: moved,
            },
            &current,
            &incumbent,
            &tabu,
            &activity,
            &mut trace,
        );
    }

    Ok(SearchOutcome {
        best: incumbent,
        initial_utility,
        iterations: t,
        trace,
        activity,
    })
}
