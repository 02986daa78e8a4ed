//! Experiment driver: drops, baselines, the restricted-vs-full pattern
//! study and CSV reports.

mod metrics;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::allocator::Allocation;
use crate::association::Association;
use crate::error::{Error, Result};
use crate::patterns::{candidate_patterns, enumerate_all, Pattern, PatternSet};
use crate::rates::{FadingModel, RateTensor};
use crate::scenario::{realize, CellKind, GainTable, Scenario, ScenarioConfig};
use crate::search::{initial_association, tabu_search, write_trace_csv, Problem, SearchParams, Solution, TraceRecord};

pub use metrics::{compute_metrics, mean_metrics, nearest_rank, MetricsReport};

/// Pattern entries at or below this share count as inactive.
pub const SUPPORT_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternSource {
    Candidates,
    Full,
    File(PathBuf),
}

impl PatternSource {
    pub fn resolve(&self, scenario: &Scenario) -> Result<PatternSet> {
        match self {
            PatternSource::Candidates => candidate_patterns(scenario),
            PatternSource::Full => enumerate_all(scenario.cell_count()),
            PatternSource::File(path) => {
                let set = PatternSet::load(path)?;
                if set.iter().any(|p| p.cell_count() != scenario.cell_count()) {
                    return Err(Error::Pattern(format!(
                        "{} holds patterns that do not cover {} cells",
                        path.display(),
                        scenario.cell_count()
                    )));
                }
                Ok(set)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Tabu search over the configured pattern source.
    Proposed,
    /// Tabu search over every pattern.
    ProposedFull,
    /// Biased max-power association with every cell always on.
    Reuse1(f64),
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Proposed => f.write_str("proposed"),
            Strategy::ProposedFull => f.write_str("proposed_full"),
            Strategy::Reuse1(bias) => write!(f, "reuse1_{bias}dB"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub user_counts: Vec<usize>,
    pub drops: usize,
    /// Drop `d` uses seed `seed_base + d`.
    pub seed_base: u64,
    pub strategies: Vec<Strategy>,
    pub patterns: PatternSource,
    /// Pico bias of the association the search starts from.
    pub init_pico_bias_db: f64,
    /// Write one decision trace per search run.
    pub record_traces: bool,
    pub scenario: ScenarioConfig,
    pub search: SearchParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            user_counts: vec![90],
            drops: 5,
            seed_base: 1,
            strategies: vec![
                Strategy::Proposed,
                Strategy::Reuse1(0.0),
                Strategy::Reuse1(5.0),
                Strategy::Reuse1(10.0),
                Strategy::Reuse1(15.0),
            ],
            patterns: PatternSource::Candidates,
            init_pico_bias_db: 5.0,
            record_traces: false,
            scenario: ScenarioConfig::default(),
            search: SearchParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.drops == 0 {
            return Err(Error::Config("drops must be at least 1".into()));
        }
        if self.user_counts.is_empty() || self.user_counts.contains(&0) {
            return Err(Error::Config("user counts must be a non-empty list of positive values".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies configured".into()));
        }
        for s in &self.strategies {
            if let Strategy::Reuse1(bias) = s {
                if !bias.is_finite() {
                    return Err(Error::Config(format!("pico bias {bias} is not finite")));
                }
            }
        }
        if !self.init_pico_bias_db.is_finite() {
            return Err(Error::Config("initial pico bias is not finite".into()));
        }
        for &k in &self.user_counts {
            self.search.clamped_to(k).validate(k)?;
        }
        self.scenario.validate()
    }

    pub fn drop_seed(&self, drop: usize) -> u64 {
        self.seed_base.wrapping_add(drop as u64)
    }

    /// The resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is serializable")
    }
}

/// Cell range-expansion offsets: 0 dB for macros, `pico_bias_db` for picos.
pub fn cell_biases(scenario: &Scenario, pico_bias_db: f64) -> Vec<f64> {
    scenario
        .cells
        .iter()
        .map(|c| match c.kind {
            CellKind::Macro => 0.0,
            CellKind::Pico => pico_bias_db,
        })
        .collect()
}

/// Biased max-power association with the whole band on the all-ON pattern.
pub fn baseline_reuse1(
    scenario: &Scenario,
    gains: &GainTable,
    patterns: &PatternSet,
    rates: &RateTensor,
    pico_bias_db: f64,
) -> Result<Solution> {
    let reuse1 = Pattern::reuse_one(scenario.cell_count())?;
    let index = patterns
        .position(&reuse1)
        .ok_or_else(|| Error::Pattern("reuse-1 pattern missing from pattern set".into()))?;
    let weights = scenario.weights();
    let problem = Problem::new(rates, &weights, scenario.radio.bandwidth_hz)?;
    let serving = initial_association(gains.rx_power_dbm.view(), &cell_biases(scenario, pico_bias_db))?;
    let association = Association::new(serving, scenario.cell_count(), &weights)?;
    Solution::new(&problem, association, Allocation::vertex(patterns.len(), index))
}

/// One strategy evaluated on one drop.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub strategy: Strategy,
    pub patterns: PatternSet,
    pub solution: Solution,
    pub per_user_rates: Vec<f64>,
    pub metrics: MetricsReport,
    pub initial_utility: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRecord>,
}

impl RunResult {
    pub fn active_patterns(&self) -> usize {
        self.solution.allocation.support(SUPPORT_THRESHOLD).len()
    }
}

/// A realized drop with lazily built pattern sets and rate tensors.
pub struct Realization {
    pub seed: u64,
    pub scenario: Scenario,
    pub gains: GainTable,
    tensors: Vec<(PatternSet, RateTensor)>,
}

impl Realization {
    pub fn new(config: &ScenarioConfig, seed: u64) -> Result<Self> {
        let (scenario, gains) = realize(config, seed)?;
        Ok(Self {
            seed,
            scenario,
            gains,
            tensors: Vec::new(),
        })
    }

    fn tensor(&mut self, patterns: PatternSet) -> Result<usize> {
        if let Some(i) = self.tensors.iter().position(|(p, _)| *p == patterns) {
            return Ok(i);
        }
        let rates = RateTensor::build(&self.scenario, &self.gains, &patterns, FadingModel::Deterministic)?;
        self.tensors.push((patterns, rates));
        Ok(self.tensors.len() - 1)
    }

    pub fn run(&mut self, strategy: Strategy, config: &ExperimentConfig) -> Result<RunResult> {
        let patterns = match strategy {
            Strategy::Proposed => config.patterns.resolve(&self.scenario)?,
            Strategy::ProposedFull => PatternSource::Full.resolve(&self.scenario)?,
            Strategy::Reuse1(_) => PatternSet::new(vec![Pattern::reuse_one(self.scenario.cell_count())?])?,
        };
        let slot = self.tensor(patterns)?;
        let (patterns, rates) = &self.tensors[slot];
        let weights = self.scenario.weights();
        let bandwidth = self.scenario.radio.bandwidth_hz;
        let (solution, initial_utility, iterations, trace) = match strategy {
            Strategy::Reuse1(bias) => {
                let s = baseline_reuse1(&self.scenario, &self.gains, patterns, rates, bias)?;
                let u = s.utility;
                (s, u, 0, Vec::new())
            }
            Strategy::Proposed | Strategy::ProposedFull => {
                let problem = Problem::new(rates, &weights, bandwidth)?;
                let biases = cell_biases(&self.scenario, config.init_pico_bias_db);
                let serving = initial_association(self.gains.rx_power_dbm.view(), &biases)?;
                let initial = Association::new(serving, self.scenario.cell_count(), &weights)?;
                let params = SearchParams {
                    seed: config.search.seed.wrapping_add(self.seed),
                    ..config.search.clamped_to(weights.len())
                };
                let out = tabu_search(&problem, initial, &params)?;
                (out.best, out.initial_utility, out.iterations, out.trace)
            }
        };
        let per_user_rates = solution.per_user_rates(bandwidth);
        let metrics = compute_metrics(&per_user_rates, &weights)?;
        Ok(RunResult {
            strategy,
            patterns: patterns.clone(),
            solution,
            per_user_rates,
            metrics,
            initial_utility,
            iterations,
            trace,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropRow {
    pub user_count: usize,
    pub drop: usize,
    pub seed: u64,
    pub strategy: String,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    pub sum_rate: f64,
    pub log_utility: f64,
    pub initial_utility: f64,
    pub active_patterns: usize,
    pub iterations: usize,
}

impl DropRow {
    pub fn metrics(&self) -> MetricsReport {
        MetricsReport {
            p5: self.p5,
            p50: self.p50,
            p95: self.p95,
            sum_rate: self.sum_rate,
            log_utility: self.log_utility,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub user_count: usize,
    pub strategy: String,
    pub drops: usize,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    pub sum_rate: f64,
    pub log_utility: f64,
    pub mean_active_patterns: f64,
}

impl SummaryRow {
    pub fn metrics(&self) -> MetricsReport {
        MetricsReport {
            p5: self.p5,
            p50: self.p50,
            p95: self.p95,
            sum_rate: self.sum_rate,
            log_utility: self.log_utility,
        }
    }
}

/// Restricted-set performance as a share of the full-enumeration one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub user_count: usize,
    pub metric: String,
    pub restricted: f64,
    pub full: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub user_count: usize,
    pub drop: usize,
    pub strategy: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub rows: Vec<DropRow>,
    pub summary: Vec<SummaryRow>,
    pub study: Vec<StudyRow>,
    pub failures: Vec<Failure>,
}

impl ExperimentReport {
    pub fn summary_for(&self, user_count: usize, strategy: Strategy) -> Option<&SummaryRow> {
        let label = strategy.to_string();
        self.summary
            .iter()
            .find(|s| s.user_count == user_count && s.strategy == label)
    }
}

/// Means over drops per (user count, strategy), in first-seen order, plus
/// the restricted/full ratios wherever both proposed variants ran.
pub fn summarize(rows: &[DropRow]) -> (Vec<SummaryRow>, Vec<StudyRow>) {
    let mut keys: Vec<(usize, &str)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.user_count, r.strategy.as_str())) {
            keys.push((r.user_count, &r.strategy));
        }
    }
    let summary: Vec<SummaryRow> = keys
        .iter()
        .map(|&(k, s)| {
            let group: Vec<&DropRow> = rows.iter().filter(|r| r.user_count == k && r.strategy == s).collect();
            let m = mean_metrics(&group.iter().map(|r| r.metrics()).collect::<Vec<_>>()).expect("group is non-empty");
            SummaryRow {
                user_count: k,
                strategy: s.to_string(),
                drops: group.len(),
                p5: m.p5,
                p50: m.p50,
                p95: m.p95,
                sum_rate: m.sum_rate,
                log_utility: m.log_utility,
                mean_active_patterns: group.iter().map(|r| r.active_patterns as f64).sum::<f64>() / group.len() as f64,
            }
        })
        .collect();

    let mut study = Vec::new();
    let restricted_label = Strategy::Proposed.to_string();
    let full_label = Strategy::ProposedFull.to_string();
    for r in summary.iter().filter(|s| s.strategy == restricted_label) {
        let Some(f) = summary
            .iter()
            .find(|s| s.user_count == r.user_count && s.strategy == full_label)
        else {
            continue;
        };
        let (rm, fm) = (r.metrics(), f.metrics());
        for (name, a, b) in [
            ("log_utility", rm.log_utility, fm.log_utility),
            ("sum_rate", rm.sum_rate, fm.sum_rate),
            ("p5", rm.p5, fm.p5),
            ("p50", rm.p50, fm.p50),
            ("p95", rm.p95, fm.p95),
        ] {
            study.push(StudyRow {
                user_count: r.user_count,
                metric: name.into(),
                restricted: a,
                full: b,
                ratio: a / b,
            });
        }
    }
    (summary, study)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    })?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_drop_rows(path: impl AsRef<Path>) -> Result<Vec<DropRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    })?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes `summary.csv` and, when present, `pattern_study.csv` into `dir`.
pub fn write_summary(dir: impl AsRef<Path>, summary: &[SummaryRow], study: &[StudyRow]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_rows(&dir.join("summary.csv"), summary)?;
    if !study.is_empty() {
        write_rows(&dir.join("pattern_study.csv"), study)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct UserRow<'a> {
    user_count: usize,
    drop: usize,
    strategy: &'a str,
    user: usize,
    serving_cell: usize,
    rate_bps: f64,
}

#[derive(Serialize)]
struct ShareRow<'a> {
    user_count: usize,
    drop: usize,
    strategy: &'a str,
    pattern: String,
    share: f64,
}

/// Output files of one run, written incrementally.
struct Sink {
    dir: PathBuf,
    users: csv::Writer<fs::File>,
    shares: csv::Writer<fs::File>,
}

impl Sink {
    fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str| {
            let path = dir.join(name);
            fs::File::create(&path)
                .map(csv::Writer::from_writer)
                .map_err(|e| Error::io(&path, e))
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            users: open("users.csv")?,
            shares: open("allocations.csv")?,
        })
    }

    fn record(&mut self, user_count: usize, drop: usize, run: &RunResult, traces: bool) -> Result<()> {
        let label = run.strategy.to_string();
        for (k, &rate) in run.per_user_rates.iter().enumerate() {
            self.users.serialize(UserRow {
                user_count,
                drop,
                strategy: &label,
                user: k + 1,
                serving_cell: run.solution.association.serving_cell(k) + 1,
                rate_bps: rate,
            })?;
        }
        for (i, &share) in run.solution.allocation.as_slice().iter().enumerate() {
            if share > SUPPORT_THRESHOLD {
                self.shares.serialize(ShareRow {
                    user_count,
                    drop,
                    strategy: &label,
                    pattern: run.patterns[i].to_string(),
                    share,
                })?;
            }
        }
        if traces && !run.trace.is_empty() {
            let path = self.dir.join(format!("trace_{user_count}_{drop}_{label}.csv"));
            write_trace_csv(path, user_count, &run.trace)?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.users.flush().map_err(|e| Error::io(&self.dir, e))?;
        self.shares.flush().map_err(|e| Error::io(&self.dir, e))
    }
}

/// Runs every (user count, drop, strategy) combination. Failed runs are
/// logged, recorded in the report and skipped. With `out` set, writes
/// `drops.csv`, `users.csv`, `allocations.csv`, `summary.csv`,
/// `pattern_study.csv` (if applicable), `failures.csv` (if any) and
/// `metadata.txt`.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    config.validate()?;
    let mut sink = out.map(Sink::open).transpose()?;
    let mut report = ExperimentReport::default();
    for &user_count in &config.user_counts {
        let scenario_cfg = ScenarioConfig {
            user_count,
            ..config.scenario.clone()
        };
        for d in 0..config.drops {
            let seed = config.drop_seed(d);
            let mut drop = match Realization::new(&scenario_cfg, seed) {
                Ok(drop) => drop,
                Err(e) => {
                    warn!("drop {d} with {user_count} users failed: {e}");
                    for s in &config.strategies {
                        report.failures.push(Failure {
                            user_count,
                            drop: d,
                            strategy: s.to_string(),
                            message: e.to_string(),
                        });
                    }
                    continue;
                }
            };
            for &strategy in &config.strategies {
                let started = std::time::Instant::now();
                let run = match drop.run(strategy, config) {
                    Ok(run) => run,
                    Err(e) => {
                        warn!("{strategy} on drop {d} with {user_count} users failed: {e}");
                        report.failures.push(Failure {
                            user_count,
                            drop: d,
                            strategy: strategy.to_string(),
                            message: e.to_string(),
                        });
                        continue;
                    }
                };
                info!(
                    "K={user_count} drop {d} {strategy}: U={:.2} sum={:.3e} in {:.1}s",
                    run.metrics.log_utility,
                    run.metrics.sum_rate,
                    started.elapsed().as_secs_f64()
                );
                if let Some(sink) = sink.as_mut() {
                    sink.record(user_count, d, &run, config.record_traces)?;
                }
                report.rows.push(DropRow {
                    user_count,
                    drop: d,
                    seed,
                    strategy: strategy.to_string(),
                    p5: run.metrics.p5,
                    p50: run.metrics.p50,
                    p95: run.metrics.p95,
                    sum_rate: run.metrics.sum_rate,
                    log_utility: run.metrics.log_utility,
                    initial_utility: run.initial_utility,
                    active_patterns: run.active_patterns(),
                    iterations: run.iterations,
                });
            }
        }
    }
    let (summary, study) = summarize(&report.rows);
    report.summary = summary;
    report.study = study;

    if let (Some(sink), Some(dir)) = (sink, out) {
        sink.finish()?;
        write_rows(&dir.join("drops.csv"), &report.rows)?;
        write_summary(dir, &report.summary, &report.study)?;
        if !report.failures.is_empty() {
            write_rows(&dir.join("failures.csv"), &report.failures)?;
        }
        let meta = format!(
            "hetnet {}\nruns: {}\nfailures: {}\n\n{}",
            env!("CARGO_PKG_VERSION"),
            report.rows.len(),
            report.failures.len(),
            config.to_toml()
        );
        let path = dir.join("metadata.txt");
        fs::write(&path, meta).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}
