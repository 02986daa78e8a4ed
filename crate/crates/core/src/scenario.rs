//! Network topology and large-scale channel gains.
//!
//! A drop places `macro_count` macro sites on a hexagonal grid, scatters
//! `picos_per_macro` picos inside each macro's coverage disc and then drops
//! users uniformly over the union of the macro discs. Every placement is
//! rejection-sampled against the configured minimum distances.
//!
//! Cells are ordered macros first, then the picos of macro 0, macro 1, ...
//! so a 3-site layout with 4 picos per site gives labels 1..3 for macros,
//! 4..7 for the picos of macro 1 and so on.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{db_to_linear, linear_to_db};

const SHADOWING_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Macro,
    Pico,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Macro => "macro",
            CellKind::Pico => "pico",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub kind: CellKind,
    /// Host macro index for picos; `None` for macros.
    pub host: Option<usize>,
    pub position: Point,
    pub tx_power_dbm: f64,
    pub antenna_gain_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub index: usize,
    pub position: Point,
    pub weight: f64,
}

/// Scenario knobs. Every field has a default taken from the standard
/// 3GPP-style HetNet evaluation setup, so a config file only needs the
/// fields it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub macro_count: usize,
    pub picos_per_macro: usize,
    pub user_count: usize,
    pub inter_site_distance_m: f64,
    /// Radius of the disc picos and users are dropped in. Defaults to the
    /// hexagon circumradius `ISD / sqrt(3)`.
    pub macro_radius_m: Option<f64>,
    pub user_weight: f64,

    pub macro_tx_power_dbm: f64,
    pub pico_tx_power_dbm: f64,
    pub macro_antenna_gain_db: f64,
    pub pico_antenna_gain_db: f64,
    pub penetration_loss_db: f64,

    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,

    pub shadowing_std_macro_db: f64,
    pub shadowing_std_pico_db: f64,
    pub shadowing_corr_macro: f64,
    pub shadowing_corr_pico: f64,

    pub min_macro_ue_m: f64,
    pub min_pico_ue_m: f64,
    pub min_macro_pico_m: f64,
    pub min_pico_pico_m: f64,
    pub max_placement_attempts: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            macro_count: 3,
            picos_per_macro: 4,
            user_count: 90,
            inter_site_distance_m: 500.0,
            macro_radius_m: None,
            user_weight: 1.0,
            macro_tx_power_dbm: 46.0,
            pico_tx_power_dbm: 30.0,
            macro_antenna_gain_db: 15.0,
            pico_antenna_gain_db: 5.0,
            penetration_loss_db: 20.0,
            bandwidth_hz: 10e6,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            shadowing_std_macro_db: 8.0,
            shadowing_std_pico_db: 10.0,
            shadowing_corr_macro: 1.0,
            shadowing_corr_pico: 0.5,
            min_macro_ue_m: 35.0,
            min_pico_ue_m: 10.0,
            min_macro_pico_m: 75.0,
            min_pico_pico_m: 40.0,
            max_placement_attempts: 10_000,
        }
    }
}

impl ScenarioConfig {
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

    pub fn macro_radius(&self) -> f64 {
        self.macro_radius_m
            .unwrap_or(self.inter_site_distance_m / 3f64.sqrt())
    }

    pub fn cell_count(&self) -> usize {
        self.macro_count * (1 + self.picos_per_macro)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.macro_count == 0 {
            return bad("macro_count must be at least 1");
        }
        if self.user_count == 0 {
            return bad("user_count must be at least 1");
        }
        if !(self.inter_site_distance_m > 0.0) || !(self.macro_radius() > 0.0) {
            return bad("inter-site distance and macro radius must be positive");
        }
        if !(self.bandwidth_hz > 0.0) {
            return bad("bandwidth must be positive");
        }
        if !(self.user_weight > 0.0) {
            return bad("user weight must be positive");
        }
        if !(self.shadowing_std_macro_db >= 0.0) || !(self.shadowing_std_pico_db >= 0.0) {
            return bad("shadowing standard deviations must be non-negative");
        }
        for rho in [self.shadowing_corr_macro, self.shadowing_corr_pico] {
            if !(0.0..=1.0).contains(&rho) {
                return bad("shadowing correlations must lie in [0, 1]");
            }
        }
        for d in [
            self.min_macro_ue_m,
            self.min_pico_ue_m,
            self.min_macro_pico_m,
            self.min_pico_pico_m,
        ] {
            if !(d >= 0.0) {
                return bad("minimum distances must be non-negative");
            }
        }
        if self.max_placement_attempts == 0 {
            return bad("max_placement_attempts must be positive");
        }
        Ok(())
    }

    pub fn radio(&self) -> RadioConstants {
        RadioConstants {
            bandwidth_hz: self.bandwidth_hz,
            noise_psd_dbm_hz: self.noise_psd_dbm_hz,
            noise_figure_db: self.noise_figure_db,
            penetration_loss_db: self.penetration_loss_db,
            shadowing: Shadowing {
                std_macro_db: self.shadowing_std_macro_db,
                std_pico_db: self.shadowing_std_pico_db,
                corr_macro: self.shadowing_corr_macro,
                corr_pico: self.shadowing_corr_pico,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shadowing {
    pub std_macro_db: f64,
    pub std_pico_db: f64,
    pub corr_macro: f64,
    pub corr_pico: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioConstants {
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub penetration_loss_db: f64,
    pub shadowing: Shadowing,
}

impl RadioConstants {
    /// Noise power per Hz in mW.
    pub fn noise_per_hz_mw(&self) -> f64 {
        db_to_linear(self.noise_psd_dbm_hz + self.noise_figure_db)
    }

    /// Noise over the full band in dBm.
    pub fn noise_total_dbm(&self) -> f64 {
        self.noise_psd_dbm_hz + self.noise_figure_db + linear_to_db(self.bandwidth_hz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub cells: Vec<Cell>,
    pub users: Vec<User>,
    pub radio: RadioConstants,
}

impl Scenario {
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn macros(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.kind == CellKind::Macro)
    }

    pub fn picos(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.kind == CellKind::Pico)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.weight).collect()
    }

    /// Per-Hz transmit power of each cell in mW/Hz.
    pub fn tx_power_per_hz_mw(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| db_to_linear(c.tx_power_dbm) / self.radio.bandwidth_hz)
            .collect()
    }

    /// Writes `cells.csv` and `users.csv` into `dir`.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let mut w = csv::Writer::from_path(dir.join("cells.csv"))?;
        w.write_record(["cell", "kind", "host", "x_m", "y_m", "tx_power_dbm", "antenna_gain_db"])?;
        for c in &self.cells {
            w.write_record([
                (c.index + 1).to_string(),
                c.kind.as_str().to_string(),
                c.host.map(|h| (h + 1).to_string()).unwrap_or_default(),
                c.position.x.to_string(),
                c.position.y.to_string(),
                c.tx_power_dbm.to_string(),
                c.antenna_gain_db.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(dir.join("cells.csv"), e))?;

        let mut w = csv::Writer::from_path(dir.join("users.csv"))?;
        w.write_record(["user", "x_m", "y_m", "weight"])?;
        for u in &self.users {
            w.write_record([
                (u.index + 1).to_string(),
                u.position.x.to_string(),
                u.position.y.to_string(),
                u.weight.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(dir.join("users.csv"), e))?;
        Ok(())
    }
}

/// Macro site positions: the `count` hexagonal-lattice points closest to the
/// centroid of the first lattice triangle, so three sites form a triangle
/// with side `isd`.
fn macro_sites(count: usize, isd: f64) -> Vec<Point> {
    let h = isd * 3f64.sqrt() / 2.0;
    let centre = Point::new(isd / 2.0, isd / (2.0 * 3f64.sqrt()));
    let n = count as i64 + 1;
    let mut pts = Vec::new();
    for a in -n..=n {
        for b in -n..=n {
            let p = Point::new(a as f64 * isd + b as f64 * isd / 2.0, b as f64 * h);
            let d = (p.distance(&centre) * 1e6).round() as i64;
            let angle = (p.y - centre.y).atan2(p.x - centre.x);
            pts.push((d, angle, p));
        }
    }
    pts.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
    pts.into_iter().take(count).map(|(_, _, p)| p).collect()
}

fn uniform_in_disc(rng: &mut ChaCha8Rng, centre: Point, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    Point::new(centre.x + r * theta.cos(), centre.y + r * theta.sin())
}

/// Drops cells and users for one seed. Identical `(config, seed)` pairs give
/// bit-identical scenarios.
pub fn generate_topology(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = config.macro_radius();
    let sites = macro_sites(config.macro_count, config.inter_site_distance_m);

    let mut cells: Vec<Cell> = sites
        .iter()
        .enumerate()
        .map(|(i, &p)| Cell {
            index: i,
            kind: CellKind::Macro,
            host: None,
            position: p,
            tx_power_dbm: config.macro_tx_power_dbm,
            antenna_gain_db: config.macro_antenna_gain_db,
        })
        .collect();

    for (host, &site) in sites.iter().enumerate() {
        for slot in 0..config.picos_per_macro {
            let mut placed = None;
            for _ in 0..config.max_placement_attempts {
                let p = uniform_in_disc(&mut rng, site, radius);
                let ok = cells.iter().all(|c| {
                    let min = match c.kind {
                        CellKind::Macro => config.min_macro_pico_m,
                        CellKind::Pico => config.min_pico_pico_m,
                    };
                    c.position.distance(&p) >= min
                });
                if ok {
                    placed = Some(p);
                    break;
                }
            }
            let position = placed.ok_or_else(|| Error::Placement {
                what: format!("pico {} of macro {}", slot + 1, host + 1),
                attempts: config.max_placement_attempts,
            })?;
            cells.push(Cell {
                index: cells.len(),
                kind: CellKind::Pico,
                host: Some(host),
                position,
                tx_power_dbm: config.pico_tx_power_dbm,
                antenna_gain_db: config.pico_antenna_gain_db,
            });
        }
    }

    let min_x = sites.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - radius;
    let max_x = sites.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + radius;
    let min_y = sites.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - radius;
    let max_y = sites.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + radius;

    let mut users = Vec::with_capacity(config.user_count);
    for k in 0..config.user_count {
        let mut placed = None;
        for _ in 0..config.max_placement_attempts {
            let p = Point::new(
                rng.random_range(min_x..max_x),
                rng.random_range(min_y..max_y),
            );
            if !sites.iter().any(|s| s.distance(&p) <= radius) {
                continue;
            }
            let ok = cells.iter().all(|c| {
                let min = match c.kind {
                    CellKind::Macro => config.min_macro_ue_m,
                    CellKind::Pico => config.min_pico_ue_m,
                };
                c.position.distance(&p) >= min
            });
            if ok {
                placed = Some(p);
                break;
            }
        }
        let position = placed.ok_or_else(|| Error::Placement {
            what: format!("user {}", k + 1),
            attempts: config.max_placement_attempts,
        })?;
        users.push(User {
            index: k,
            position,
            weight: config.user_weight,
        });
    }

    Ok(Scenario {
        cells,
        users,
        radio: config.radio(),
    })
}

/// Distance-dependent path loss in dB for a link of `distance_km`.
pub fn path_loss_db(kind: CellKind, distance_km: f64) -> Result<f64> {
    if !(distance_km > 0.0) {
        return Err(Error::NonPositiveDistance(distance_km));
    }
    Ok(match kind {
        CellKind::Macro => 128.1 + 37.6 * distance_km.log10(),
        CellKind::Pico => 140.7 + 36.7 * distance_km.log10(),
    })
}

/// Log-normal shadowing in dB, one row per user and one column per cell.
///
/// For each user a common draw per cell kind is mixed with an independent
/// per-cell draw as `sqrt(rho) * common + sqrt(1 - rho) * own`, then scaled
/// by the kind's standard deviation. The draw order is fixed (user-major:
/// macro common, pico common, then one draw per cell) so results only depend
/// on the seed.
pub fn sample_shadowing(scenario: &Scenario, seed: u64) -> Result<Array2<f64>> {
    let sh = scenario.radio.shadowing;
    if !(sh.std_macro_db >= 0.0) || !(sh.std_pico_db >= 0.0) {
        return Err(Error::Config(
            "shadowing standard deviations must be non-negative".into(),
        ));
    }
    for rho in [sh.corr_macro, sh.corr_pico] {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Config(
                "shadowing correlations must lie in [0, 1]".into(),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHADOWING_STREAM);

    let k_count = scenario.user_count();
    let b_count = scenario.cell_count();
    let mut out = Array2::zeros((k_count, b_count));
    for k in 0..k_count {
        let common_macro: f64 = rng.sample(StandardNormal);
        let common_pico: f64 = rng.sample(StandardNormal);
        for (b, cell) in scenario.cells.iter().enumerate() {
            let own: f64 = rng.sample(StandardNormal);
            let (std, rho, common) = match cell.kind {
                CellKind::Macro => (sh.std_macro_db, sh.corr_macro, common_macro),
                CellKind::Pico => (sh.std_pico_db, sh.corr_pico, common_pico),
            };
            out[[k, b]] = std * (rho.sqrt() * common + (1.0 - rho).sqrt() * own);
        }
    }
    Ok(out)
}

/// Large-scale linear gains and received powers for every (user, cell) link.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    /// `gains[[k, b]]`: linear power gain from cell `b` to user `k`.
    pub gains: Array2<f64>,
    /// `rx_power_dbm[[k, b]]`: total received power in dBm.
    pub rx_power_dbm: Array2<f64>,
}

impl GainTable {
    pub fn user_count(&self) -> usize {
        self.gains.nrows()
    }

    pub fn cell_count(&self) -> usize {
        self.gains.ncols()
    }
}

pub fn compute_gains(scenario: &Scenario, shadowing: &Array2<f64>) -> Result<GainTable> {
    let dims = (scenario.user_count(), scenario.cell_count());
    if shadowing.dim() != dims {
        return Err(Error::Dimension(format!(
            "shadowing is {:?}, scenario needs {:?}",
            shadowing.dim(),
            dims
        )));
    }
    let mut gains = Array2::zeros(dims);
    let mut rx = Array2::zeros(dims);
    for (k, user) in scenario.users.iter().enumerate() {
        for (b, cell) in scenario.cells.iter().enumerate() {
            let km = user.position.distance(&cell.position) / 1000.0;
            let gain_db = -path_loss_db(cell.kind, km)? + cell.antenna_gain_db
                - scenario.radio.penetration_loss_db
                - shadowing[[k, b]];
            gains[[k, b]] = db_to_linear(gain_db);
            rx[[k, b]] = cell.tx_power_dbm + gain_db;
        }
    }
    Ok(GainTable {
        gains,
        rx_power_dbm: rx,
    })
}

/// Topology, shadowing and gains for one drop.
pub fn realize(config: &ScenarioConfig, seed: u64) -> Result<(Scenario, GainTable)> {
    let scenario = generate_topology(config, seed)?;
    let shadowing = sample_shadowing(&scenario, seed)?;
    let gains = compute_gains(&scenario, &shadowing)?;
    Ok((scenario, gains))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_shadow() -> ScenarioConfig {
        ScenarioConfig {
            shadowing_std_macro_db: 0.0,
            shadowing_std_pico_db: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn default_layout_has_fifteen_cells() {
        let s = generate_topology(&ScenarioConfig::default(), 7).unwrap();
        assert_eq!(s.cell_count(), 15);
        assert_eq!(s.user_count(), 90);
        assert_eq!(s.macros().count(), 3);
        for (i, c) in s.cells.iter().enumerate().skip(3) {
            assert_eq!(c.host, Some((i - 3) / 4));
        }
    }

    #[test]
    fn three_sites_form_triangle() {
        let sites = macro_sites(3, 500.0);
        assert!((sites[0].distance(&sites[1]) - 500.0).abs() < 1e-9);
        assert!((sites[1].distance(&sites[2]) - 500.0).abs() < 1e-9);
        assert!((sites[0].distance(&sites[2]) - 500.0).abs() < 1e-9);
    }

    #[test]
    fn single_cell_degenerate_case() {
        let cfg = ScenarioConfig {
            macro_count: 1,
            picos_per_macro: 0,
            user_count: 1,
            ..Default::default()
        };
        let s = generate_topology(&cfg, 0).unwrap();
        assert_eq!(s.cell_count(), 1);
        assert_eq!(s.user_count(), 1);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = ScenarioConfig::default();
        let a = realize(&cfg, 11).unwrap();
        let b = realize(&cfg, 11).unwrap();
        assert_eq!(a, b);
        let c = realize(&cfg, 12).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn placement_respects_minimum_distances() {
        let cfg = ScenarioConfig::default();
        for seed in 0..5 {
            let s = generate_topology(&cfg, seed).unwrap();
            for (i, a) in s.cells.iter().enumerate() {
                for b in &s.cells[i + 1..] {
                    let d = a.position.distance(&b.position);
                    match (a.kind, b.kind) {
                        (CellKind::Macro, CellKind::Pico) | (CellKind::Pico, CellKind::Macro) => {
                            assert!(d >= cfg.min_macro_pico_m)
                        }
                        (CellKind::Pico, CellKind::Pico) => assert!(d >= cfg.min_pico_pico_m),
                        _ => {}
                    }
                }
                for u in &s.users {
                    let d = a.position.distance(&u.position);
                    match a.kind {
                        CellKind::Macro => assert!(d >= cfg.min_macro_ue_m),
                        CellKind::Pico => assert!(d >= cfg.min_pico_ue_m),
                    }
                }
            }
        }
    }

    #[test]
    fn impossible_distances_fail_with_placement_error() {
        let cfg = ScenarioConfig {
            min_pico_pico_m: 10_000.0,
            max_placement_attempts: 50,
            ..Default::default()
        };
        assert!(matches!(
            generate_topology(&cfg, 1),
            Err(Error::Placement { attempts: 50, .. })
        ));
    }

    #[test]
    fn path_loss_reference_values() {
        assert!((path_loss_db(CellKind::Macro, 1.0).unwrap() - 128.1).abs() < 1e-12);
        assert!((path_loss_db(CellKind::Pico, 1.0).unwrap() - 140.7).abs() < 1e-12);
        assert!((path_loss_db(CellKind::Macro, 0.1).unwrap() - 90.5).abs() < 1e-12);
        assert!(path_loss_db(CellKind::Macro, 0.0).is_err());
        assert!(path_loss_db(CellKind::Pico, -1.0).is_err());
    }

    fn one_link(kind: CellKind) -> Scenario {
        let cfg = ScenarioConfig::default();
        let (tx, gain) = match kind {
            CellKind::Macro => (cfg.macro_tx_power_dbm, cfg.macro_antenna_gain_db),
            CellKind::Pico => (cfg.pico_tx_power_dbm, cfg.pico_antenna_gain_db),
        };
        Scenario {
            cells: vec![Cell {
                index: 0,
                kind,
                host: None,
                position: Point::new(0.0, 0.0),
                tx_power_dbm: tx,
                antenna_gain_db: gain,
            }],
            users: vec![User {
                index: 0,
                position: Point::new(1000.0, 0.0),
                weight: 1.0,
            }],
            radio: cfg.radio(),
        }
    }

    #[test]
    fn received_power_link_budgets() {
        let macro_link = one_link(CellKind::Macro);
        let g = compute_gains(&macro_link, &Array2::zeros((1, 1))).unwrap();
        assert!((g.rx_power_dbm[[0, 0]] - -87.1).abs() < 1e-9);

        let pico_link = one_link(CellKind::Pico);
        let g = compute_gains(&pico_link, &Array2::zeros((1, 1))).unwrap();
        assert!((g.rx_power_dbm[[0, 0]] - -125.7).abs() < 1e-9);
    }

    #[test]
    fn noise_over_ten_megahertz() {
        let r = ScenarioConfig::default().radio();
        assert!((r.noise_total_dbm() - -95.0).abs() < 1e-9);
        assert!((linear_to_db(r.noise_per_hz_mw()) - -165.0).abs() < 1e-9);
    }

    #[test]
    fn rx_power_matches_gains() {
        let (s, g) = realize(&ScenarioConfig::default(), 3).unwrap();
        for k in 0..s.user_count() {
            for b in 0..s.cell_count() {
                let gain = g.gains[[k, b]];
                assert!(gain.is_finite() && gain > 0.0);
                let expect = s.cells[b].tx_power_dbm + linear_to_db(gain);
                assert!((g.rx_power_dbm[[k, b]] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gains_decrease_with_distance_without_shadowing() {
        let (s, g) = realize(&no_shadow(), 5).unwrap();
        for b in 0..s.cell_count() {
            let mut links: Vec<(f64, f64)> = s
                .users
                .iter()
                .map(|u| (u.position.distance(&s.cells[b].position), g.gains[[u.index, b]]))
                .collect();
            links.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in links.windows(2) {
                assert!(w[1].1 <= w[0].1);
            }
        }
    }

    #[test]
    fn macro_shadowing_fully_correlated() {
        let s = generate_topology(&ScenarioConfig::default(), 9).unwrap();
        let sh = sample_shadowing(&s, 9).unwrap();
        for k in 0..s.user_count() {
            assert_eq!(sh[[k, 0]], sh[[k, 1]]);
            assert_eq!(sh[[k, 0]], sh[[k, 2]]);
        }
    }

    #[test]
    fn zero_std_gives_zero_shadowing() {
        let s = generate_topology(&no_shadow(), 2).unwrap();
        let sh = sample_shadowing(&s, 2).unwrap();
        assert!(sh.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_std_rejected() {
        let mut s = generate_topology(&ScenarioConfig::default(), 2).unwrap();
        s.radio.shadowing.std_pico_db = -1.0;
        assert!(matches!(sample_shadowing(&s, 2), Err(Error::Config(_))));
    }

    #[test]
    fn pico_shadowing_correlation_is_half() {
        // Positions are irrelevant to shadowing, so clone one user many times.
        let mut s = generate_topology(&ScenarioConfig::default(), 4).unwrap();
        let template = s.users[0].clone();
        s.users = (0..100_000)
            .map(|i| User {
                index: i,
                ..template.clone()
            })
            .collect();
        let sh = sample_shadowing(&s, 4).unwrap();
        let a = sh.column(3);
        let b = sh.column(9);
        let n = a.len() as f64;
        let (ma, mb) = (a.sum() / n, b.sum() / n);
        let cov = a.iter().zip(b.iter()).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
        let vb = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
        let corr = cov / (va * vb).sqrt();
        assert!((corr - 0.5).abs() < 0.02, "corr = {corr}");
        assert!((va.sqrt() - 10.0).abs() < 0.1);
    }

    #[test]
    fn config_parses_partial_toml() {
        let cfg = ScenarioConfig::from_toml_str("user_count = 180\npico_tx_power_dbm = 24.0\n").unwrap();
        assert_eq!(cfg.user_count, 180);
        assert_eq!(cfg.pico_tx_power_dbm, 24.0);
        assert_eq!(cfg.macro_count, 3);
        assert!(ScenarioConfig::from_toml_str("bogus = 1").is_err());
        assert!(ScenarioConfig::from_toml_str("bandwidth_hz = 0.0").is_err());
    }
}
