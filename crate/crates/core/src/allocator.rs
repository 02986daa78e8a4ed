//! Weighted log-utility and the bandwidth split for a fixed association.
//!
//! With the association fixed, user `k` earns `sum_i pi_i c[k, i]` where
//! `c[k, i]` is its rate if the whole band ran pattern `i`. Maximizing
//! `sum_k w_k ln(sum_i pi_i c[k, i])` over the simplex is concave, and it is
//! solved here with Frank-Wolfe plus away steps. Every step uses an exact
//! line search (bisection on the directional derivative), so the objective
//! never decreases, and the Frank-Wolfe gap `max_i g_i - <pi, g>` is the
//! stopping certificate.

use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::association::Association;
use crate::error::{Error, Result};
use crate::rates::{aggregate_rate, RateTensor};

const SIMPLEX_TOL: f64 = 1e-9;
const LINE_SEARCH_STEPS: usize = 60;
const REFRESH_EVERY: usize = 64;

/// Bandwidth fractions over the pattern set.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation(Vec<f64>);

impl Allocation {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::Dimension("allocation over zero patterns".into()));
        }
        if pi.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config("allocation entries must be finite and non-negative".into()));
        }
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Config(format!("allocation sums to {sum}, not 1")));
        }
        Ok(Self(pi))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn vertex(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices with weight above `threshold`.
    pub fn support(&self, threshold: f64) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > threshold).collect()
    }

    /// Zeroes entries at or below `threshold` and renormalizes.
    pub fn truncated(&self, threshold: f64) -> Self {
        let mut v: Vec<f64> = self.0.iter().map(|&p| if p > threshold { p } else { 0.0 }).collect();
        normalize(&mut v);
        Self(v)
    }
}

fn normalize(v: &mut [f64]) {
    for p in v.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let sum: f64 = v.iter().sum();
    for p in v.iter_mut() {
        *p /= sum;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityReport {
    /// `sum_k w_k ln(R_k)`; `-inf` when any user has zero rate.
    pub value: f64,
    pub per_user_rates: Vec<f64>,
    pub feasible: bool,
}

/// `sum_k w_k ln(rate_k)`, or `-inf` if any rate is not positive.
pub fn log_utility(rates: &[f64], weights: &[f64]) -> f64 {
    if rates.iter().any(|&r| !(r > 0.0)) {
        return f64::NEG_INFINITY;
    }
    rates.iter().zip(weights).map(|(r, w)| w * r.ln()).sum()
}

pub fn utility(
    association: &Association,
    pi: &[f64],
    rates: &RateTensor,
    weights: &[f64],
    bandwidth: f64,
) -> Result<UtilityReport> {
    let k_count = association.user_count();
    if weights.len() != k_count || rates.user_count() != k_count {
        return Err(Error::Dimension(format!(
            "{} users in association, {} weights, {} in rate tensor",
            k_count,
            weights.len(),
            rates.user_count()
        )));
    }
    if pi.len() != rates.pattern_count() || association.cell_count() != rates.cell_count() {
        return Err(Error::Dimension("allocation or cell count does not match rate tensor".into()));
    }
    let per_user_rates: Vec<f64> = (0..k_count)
        .map(|k| aggregate_rate(association, rates, bandwidth, pi, k))
        .collect();
    let value = log_utility(&per_user_rates, weights);
    Ok(UtilityReport {
        value,
        feasible: value > f64::NEG_INFINITY,
        per_user_rates,
    })
}

/// `max_i grad_i - sum_i pi_i grad_i`.
pub fn fw_gap(pi: &[f64], grad: &[f64]) -> f64 {
    let best = grad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let avg: f64 = pi.iter().zip(grad).map(|(p, g)| p * g).sum();
    best - avg
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    /// When set, the stopping threshold is `tol * max(1, |objective|)`.
    pub relative: bool,
    pub max_iters: usize,
    /// Allow away steps. Plain Frank-Wolfe zig-zags when the optimum sits on
    /// a face of the simplex.
    pub away_steps: bool,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            relative: true,
            max_iters: 20_000,
            away_steps: true,
            record_trace: false,
        }
    }
}

impl SolverOptions {
    pub fn absolute(tol: f64) -> Self {
        Self {
            tol,
            relative: false,
            ..Self::default()
        }
    }

    fn threshold(&self, objective: f64) -> f64 {
        if self.relative {
            self.tol * objective.abs().max(1.0)
        } else {
            self.tol
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub allocation: Allocation,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
}

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[TracePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["iteration", "objective", "gap"])?;
    for t in trace {
        w.write_record([t.iteration.to_string(), t.objective.to_string(), t.gap.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

fn mixture(coeffs: &ArrayView2<f64>, x: &[f64], out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = coeffs
            .row(k)
            .iter()
            .zip(x)
            .filter(|(_, &p)| p != 0.0)
            .map(|(c, p)| c * p)
            .sum();
    }
}

fn objective(mix: &[f64], weights: &[f64]) -> f64 {
    log_utility(mix, weights)
}

/// Maximizes `sum_k w_k ln(sum_i pi_i coeffs[k, i])` over the simplex.
///
/// `init` warm-starts the solver; if it leaves some user with zero rate the
/// uniform split is used instead. On hitting `max_iters` the best iterate is
/// returned inside [`Error::NotConverged`].
pub fn maximize_log_mixture(
    coeffs: ArrayView2<f64>,
    weights: &[f64],
    init: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let (k_count, n) = coeffs.dim();
    if weights.len() != k_count {
        return Err(Error::Dimension(format!("{} weights for {} users", weights.len(), k_count)));
    }
    if n == 0 {
        return Err(Error::Dimension("no patterns to allocate".into()));
    }
    if let Some(k) = (0..k_count).find(|&k| coeffs.row(k).iter().all(|&c| !(c > 0.0))) {
        return Err(Error::Infeasible { user: k });
    }

    let mut x = match init {
        Some(v) if v.len() != n => {
            return Err(Error::Dimension(format!("warm start has {} entries, need {n}", v.len())))
        }
        Some(v) => {
            let mut v = v.to_vec();
            normalize(&mut v);
            v
        }
        None => vec![1.0 / n as f64; n],
    };
    let mut mix = vec![0.0; k_count];
    mixture(&coeffs, &x, &mut mix);
    if mix.iter().any(|&m| !(m > 0.0)) {
        x = vec![1.0 / n as f64; n];
        mixture(&coeffs, &x, &mut mix);
    }

    let mut grad = vec![0.0; n];
    let mut dir = vec![0.0; k_count];
    let mut trace = Vec::new();
    let mut iter = 0;
    loop {
        if iter > 0 && iter % REFRESH_EVERY == 0 {
            mixture(&coeffs, &x, &mut mix);
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        for k in 0..k_count {
            let scale = weights[k] / mix[k];
            for (g, c) in grad.iter_mut().zip(coeffs.row(k)) {
                *g += scale * c;
            }
        }
        let xg: f64 = x.iter().zip(&grad).map(|(p, g)| p * g).sum();
        let mut s = 0;
        for i in 1..n {
            if grad[i] > grad[s] {
                s = i;
            }
        }
        let gap = (grad[s] - xg).max(0.0);
        let obj = objective(&mix, weights);
        if opts.record_trace {
            trace.push(TracePoint {
                iteration: iter,
                objective: obj,
                gap,
            });
        }
        let converged = gap <= opts.threshold(obj);
        if converged || iter >= opts.max_iters {
            normalize(&mut x);
            mixture(&coeffs, &x, &mut mix);
            let objective = objective(&mix, weights);
            if !converged {
                return Err(Error::NotConverged {
                    iterations: iter,
                    gap,
                    allocation: x,
                });
            }
            return Ok(SolveReport {
                allocation: Allocation(x),
                objective,
                gap,
                iterations: iter,
                trace,
            });
        }

        // Away vertex: worst pattern currently in the support.
        let mut away = None;
        if opts.away_steps {
            for i in 0..n {
                if x[i] > 0.0 && away.is_none_or(|v: usize| grad[i] < grad[v]) {
                    away = Some(i);
                }
            }
        }
        let use_away = match away {
            Some(v) => x[v] < 1.0 && xg - grad[v] > gap,
            None => false,
        };

        let gamma_max = if use_away {
            let v = away.unwrap();
            for k in 0..k_count {
                dir[k] = mix[k] - coeffs[[k, v]];
            }
            x[v] / (1.0 - x[v])
        } else {
            for k in 0..k_count {
                dir[k] = coeffs[[k, s]] - mix[k];
            }
            1.0
        };

        let slope = |gamma: f64| -> f64 {
            let mut d = 0.0;
            for k in 0..k_count {
                let m = mix[k] + gamma * dir[k];
                if !(m > 0.0) {
                    return f64::NEG_INFINITY;
                }
                d += weights[k] * dir[k] / m;
            }
            d
        };
        let gamma = if slope(gamma_max) >= 0.0 {
            gamma_max
        } else {
            let (mut lo, mut hi) = (0.0, gamma_max);
            for _ in 0..LINE_SEARCH_STEPS {
                let mid = 0.5 * (lo + hi);
                if slope(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };

        if use_away {
            let v = away.unwrap();
            for p in x.iter_mut() {
                *p *= 1.0 + gamma;
            }
            if gamma == gamma_max {
                x[v] = 0.0;
            } else {
                x[v] -= gamma;
            }
        } else {
            for p in x.iter_mut() {
                *p *= 1.0 - gamma;
            }
            x[s] += gamma;
        }
        for k in 0..k_count {
            mix[k] += gamma * dir[k];
        }
        iter += 1;
    }
}

/// Per-user coefficients `c[k, i] = W r[k, b(k), i] / N_b(k)`.
pub fn allocation_coefficients(association: &Association, rates: &RateTensor, bandwidth: f64) -> Array2<f64> {
    let k_count = association.user_count();
    let n = rates.pattern_count();
    let mut c = Array2::zeros((k_count, n));
    for k in 0..k_count {
        let b = association.serving_cell(k);
        let scale = bandwidth / association.load(b) as f64;
        let mut row = c.row_mut(k);
        let row = row.as_slice_mut().expect("standard layout");
        rates.fill_row(k, b, row);
        row.iter_mut().for_each(|v| *v *= scale);
    }
    c
}

/// Best bandwidth split for a fixed association. The returned objective is
/// the network utility at that split.
pub fn optimize_allocation(
    association: &Association,
    rates: &RateTensor,
    weights: &[f64],
    bandwidth: f64,
    init: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    if association.user_count() != rates.user_count() || association.cell_count() != rates.cell_count() {
        return Err(Error::Dimension("association does not match rate tensor".into()));
    }
    let c = allocation_coefficients(association, rates, bandwidth);
    maximize_log_mixture(c.view(), weights, init, opts)
}
