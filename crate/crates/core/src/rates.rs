//! Per-pattern spectral efficiencies and the user rates derived from them.
//!
//! All powers are per Hz: a cell that is ON spreads its total transmit
//! power evenly over the band, so `P_b = P_tx / W`, and the noise is the
//! per-Hz noise density. Spectral efficiencies are in bit/s/Hz and become
//! bit/s once multiplied by the bandwidth share a user gets.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::association::Association;
use crate::error::{Error, Result};
use crate::patterns::PatternSet;
use crate::scenario::{GainTable, Scenario};

/// Above this many `(user, cell, pattern)` entries the tensor keeps only the
/// interference table and evaluates efficiencies on demand.
pub const DENSE_LIMIT: usize = 20_000_000;

/// Distribution of the per-link fast-fading power `|h|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FadingLaw {
    /// Unit-mean exponential power (Rayleigh amplitude).
    Rayleigh,
    /// `|h|^2 = 1` on every draw.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FadingModel {
    /// No fast fading: the expectation collapses to a single Shannon term.
    #[default]
    Deterministic,
    /// Sample mean over `samples` i.i.d. fading draws per link.
    MonteCarlo {
        samples: usize,
        seed: u64,
        law: FadingLaw,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Storage {
    #[default]
    Auto,
    Dense,
    OnDemand,
}

/// Total received power per Hz for every (user, pattern): the sum of
/// `P_l G_lk` over the pattern's active cells.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceTable {
    pub total: Array2<f64>,
}

/// `signal[[k, b]] = P_b G_bk` (mW/Hz). Sums run over active cells in
/// ascending order.
pub fn build_interference_table(signal: &Array2<f64>, patterns: &PatternSet) -> Result<InterferenceTable> {
    let (k_count, b_count) = signal.dim();
    if patterns.cell_count() != b_count {
        return Err(Error::Dimension(format!(
            "patterns cover {} cells, signal table has {}",
            patterns.cell_count(),
            b_count
        )));
    }
    let actives: Vec<Vec<usize>> = patterns.iter().map(|p| p.active_set()).collect();
    let mut total = Array2::zeros((k_count, patterns.len()));
    for k in 0..k_count {
        let row = signal.row(k);
        for (i, active) in actives.iter().enumerate() {
            total[[k, i]] = active.iter().map(|&l| row[l]).sum();
        }
    }
    Ok(InterferenceTable { total })
}

/// Per-Hz received signal power `P_b G_bk` for every link.
pub fn signal_table(scenario: &Scenario, gains: &GainTable) -> Array2<f64> {
    let power = scenario.tx_power_per_hz_mw();
    let mut signal = gains.gains.clone();
    for mut row in signal.rows_mut() {
        for (v, p) in row.iter_mut().zip(&power) {
            *v *= p;
        }
    }
    signal
}

/// `log2(1 + signal / (noise + interference))`, zero when there is no signal.
#[inline]
pub fn shannon(signal: f64, interference: f64, noise: f64) -> f64 {
    if signal <= 0.0 {
        return 0.0;
    }
    (signal / (noise + interference.max(0.0))).ln_1p() / std::f64::consts::LN_2
}

#[derive(Debug, Clone)]
enum Backend {
    Dense(Vec<f64>),
    OnDemand {
        signal: Array2<f64>,
        noise: f64,
        masks: Vec<u64>,
        table: InterferenceTable,
    },
}

/// Spectral efficiency `r[k, b, i]` of user `k` served by cell `b` under
/// pattern `i`, zero whenever `b` is OFF in `i`.
#[derive(Debug, Clone)]
pub struct RateTensor {
    users: usize,
    cells: usize,
    patterns: usize,
    backend: Backend,
}

fn counter_seed(seed: u64, k: usize, b: usize, i: usize) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    [k as u64, b as u64, i as u64]
        .into_iter()
        .fold(splitmix(seed), |acc, v| splitmix(acc ^ v))
}

/// Sample mean of the Shannon rate over fading draws for one link and pattern.
/// `active` must be in ascending order and contain `b`.
fn monte_carlo_efficiency(
    signal_row: &[f64],
    active: &[usize],
    b: usize,
    noise: f64,
    samples: usize,
    law: FadingLaw,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = 0.0;
    for n in 0..samples {
        let mut total = 0.0;
        let mut wanted = 0.0;
        for &l in active {
            let h = match law {
                FadingLaw::Rayleigh => rng.sample::<f64, _>(Exp1),
                FadingLaw::Unit => 1.0,
            };
            let p = signal_row[l] * h;
            total += p;
            if l == b {
                wanted = p;
            }
        }
        let v = shannon(wanted, total - wanted, noise);
        mean += (v - mean) / (n + 1) as f64;
    }
    mean
}

impl RateTensor {
    pub fn build(
        scenario: &Scenario,
        gains: &GainTable,
        patterns: &PatternSet,
        fading: FadingModel,
    ) -> Result<Self> {
        Self::build_with(scenario, gains, patterns, fading, Storage::Auto)
    }

    pub fn build_with(
        scenario: &Scenario,
        gains: &GainTable,
        patterns: &PatternSet,
        fading: FadingModel,
        storage: Storage,
    ) -> Result<Self> {
        if gains.gains.dim() != (scenario.user_count(), scenario.cell_count()) {
            return Err(Error::Dimension("gain table does not match scenario".into()));
        }
        let signal = signal_table(scenario, gains);
        Self::from_signal(signal, scenario.radio.noise_per_hz_mw(), patterns, fading, storage)
    }

    /// Builds the tensor from per-Hz link powers and per-Hz noise. Monte Carlo
    /// fading always uses dense storage.
    pub fn from_signal(
        signal: Array2<f64>,
        noise: f64,
        patterns: &PatternSet,
        fading: FadingModel,
        storage: Storage,
    ) -> Result<Self> {
        if signal.iter().any(|v| !v.is_finite() || *v < 0.0) || !(noise >= 0.0) {
            return Err(Error::Config("link powers and noise must be finite and non-negative".into()));
        }
        let (users, cells) = signal.dim();
        let table = build_interference_table(&signal, patterns)?;
        let n_pat = patterns.len();
        let size = users * cells * n_pat;
        let masks: Vec<u64> = patterns.iter().map(|p| p.mask()).collect();

        let dense = match (fading, storage) {
            (FadingModel::MonteCarlo { .. }, _) => true,
            (_, Storage::Dense) => true,
            (_, Storage::OnDemand) => false,
            (_, Storage::Auto) => size <= DENSE_LIMIT,
        };
        if let FadingModel::MonteCarlo { samples: 0, .. } = fading {
            return Err(Error::Config("Monte Carlo fading needs at least one sample".into()));
        }

        let backend = if dense {
            let mut values = vec![0.0; size];
            let actives: Vec<Vec<usize>> = patterns.iter().map(|p| p.active_set()).collect();
            for k in 0..users {
                let row = signal.row(k);
                let row = row.as_slice().expect("standard layout");
                for b in 0..cells {
                    let base = (k * cells + b) * n_pat;
                    for (i, active) in actives.iter().enumerate() {
                        if masks[i] >> b & 1 == 0 {
                            continue;
                        }
                        values[base + i] = match fading {
                            FadingModel::Deterministic => {
                                let t = table.total[[k, i]];
                                shannon(row[b], t - row[b], noise)
                            }
                            FadingModel::MonteCarlo { samples, seed, law } => monte_carlo_efficiency(
                                row,
                                active,
                                b,
                                noise,
                                samples,
                                law,
                                counter_seed(seed, k, b, i),
                            ),
                        };
                    }
                }
            }
            Backend::Dense(values)
        } else {
            Backend::OnDemand {
                signal: signal.as_standard_layout().to_owned(),
                noise,
                masks,
                table,
            }
        };
        Ok(Self {
            users,
            cells,
            patterns: n_pat,
            backend,
        })
    }

    /// Wraps explicit efficiencies laid out as `[(k * cells + b) * patterns + i]`.
    pub fn from_values(users: usize, cells: usize, patterns: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != users * cells * patterns {
            return Err(Error::Dimension(format!(
                "{} values for a {users}x{cells}x{patterns} tensor",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("efficiencies must be finite and non-negative".into()));
        }
        Ok(Self {
            users,
            cells,
            patterns,
            backend: Backend::Dense(values),
        })
    }

    pub fn user_count(&self) -> usize {
        self.users
    }

    pub fn cell_count(&self) -> usize {
        self.cells
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.backend, Backend::Dense(_))
    }

    #[inline]
    pub fn efficiency(&self, k: usize, b: usize, i: usize) -> f64 {
        match &self.backend {
            Backend::Dense(v) => v[(k * self.cells + b) * self.patterns + i],
            Backend::OnDemand {
                signal,
                noise,
                masks,
                table,
            } => {
                if masks[i] >> b & 1 == 0 {
                    return 0.0;
                }
                let s = signal[[k, b]];
                shannon(s, table.total[[k, i]] - s, *noise)
            }
        }
    }

    /// Fills `out[i] = r[k, b, i]` for every pattern.
    pub fn fill_row(&self, k: usize, b: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.patterns);
        match &self.backend {
            Backend::Dense(v) => {
                let base = (k * self.cells + b) * self.patterns;
                out.copy_from_slice(&v[base..base + self.patterns]);
            }
            Backend::OnDemand { .. } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.efficiency(k, b, i);
                }
            }
        }
    }

    /// True if cell `b` gives user `k` a positive rate under some pattern.
    pub fn servable(&self, k: usize, b: usize) -> bool {
        (0..self.patterns).any(|i| self.efficiency(k, b, i) > 0.0)
    }

    /// Dumps efficiencies for the chosen pattern indices as
    /// `user,cell,pattern,bits,efficiency` rows (1-based labels).
    pub fn write_csv(&self, path: impl AsRef<Path>, patterns: &PatternSet, subset: &[usize]) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["user", "cell", "pattern", "bits", "efficiency_bps_hz"])?;
        for &i in subset {
            let bits = patterns
                .get(i)
                .ok_or_else(|| Error::Dimension(format!("pattern {i} out of range")))?
                .to_string();
            for k in 0..self.users {
                for b in 0..self.cells {
                    w.write_record([
                        (k + 1).to_string(),
                        (b + 1).to_string(),
                        (i + 1).to_string(),
                        bits.clone(),
                        self.efficiency(k, b, i).to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }
}

/// Rate of user `k` in bit/s if the whole band used pattern `i`: its cell's
/// efficiency times the bandwidth, shared round-robin among the cell's users.
pub fn user_rate_per_pattern(
    association: &Association,
    rates: &RateTensor,
    bandwidth: f64,
    k: usize,
    i: usize,
) -> f64 {
    let b = association.serving_cell(k);
    let load = association.load(b);
    assert!(load >= 1, "user {k} counted in an empty cell {b}");
    bandwidth * rates.efficiency(k, b, i) / load as f64
}

/// Rate of user `k` in bit/s once the band is split according to `pi`.
pub fn aggregate_rate(
    association: &Association,
    rates: &RateTensor,
    bandwidth: f64,
    pi: &[f64],
    k: usize,
) -> f64 {
    pi.iter()
        .enumerate()
        .filter(|(_, &p)| p != 0.0)
        .map(|(i, &p)| p * user_rate_per_pattern(association, rates, bandwidth, k, i))
        .sum()
}
