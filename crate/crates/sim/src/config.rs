//! Experiment configuration.
//!
//! A single TOML document with a `schema_version` key. Unknown keys are
//! rejected. Presets for the bundled scenarios are compiled in and can be
//! referenced as `preset:<name>`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use demandplan_core::net::{BaseStation, LinkBudgetParams, Position, StationState, Tier, UserTerminal};
use demandplan_core::planner::{CompressionProfile, ContentType, LabelPolicy, ShapingScope};
use demandplan_core::switching::PowerModel;
use demandplan_core::{StationId, UserId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub const SCHEMA_VERSION: u32 = 1;

pub const PRESETS: &[(&str, &str)] = &[
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("t1", include_str!("../presets/t1.toml")),
    ("s1", include_str!("../presets/s1.toml")),
    ("disaster", include_str!("../presets/disaster.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default)]
    pub link: LinkBudgetParams,
    #[serde(default, rename = "topology", skip_serializing_if = "Vec::is_empty")]
    pub topologies: Vec<TopologyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traffic: Option<TrafficConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interference: Option<InterferenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub profile: CompressionProfile,
    #[serde(default)]
    pub labeling: LabelingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planning: Option<PlanningConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub name: String,
    /// Co-channel interference level assumed when tabulating link SE for
    /// cell switching.
    #[serde(default)]
    pub interference_utilization: f64,
    #[serde(rename = "station")]
    pub stations: Vec<StationConfig>,
    pub users: UsersConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    pub id: u32,
    pub tier: Tier,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub tx_power_dbm: f64,
    pub n_rbs: u32,
    #[serde(default = "default_rb_bandwidth")]
    pub rb_bandwidth_hz: f64,
    #[serde(default = "default_carrier")]
    pub carrier_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerModel>,
    /// Absent means fiber (unbounded).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backhaul_capacity_bps: Option<f64>,
    #[serde(default)]
    pub green_powered: bool,
}

fn default_rb_bandwidth() -> f64 {
    180e3
}

fn default_carrier() -> f64 {
    2e9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// `per_station` users in an annulus around each station of `tiers`.
    AroundStations,
    /// `count` users uniform over a square of half-width `half_width_m`.
    Uniform,
    /// Positions listed in `positions`.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsersConfig {
    pub placement: Placement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_station: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiers: Option<Vec<Tier>>,
    #[serde(default = "default_min_radius")]
    pub min_radius_m: f64,
    #[serde(default = "default_radius")]
    pub radius_m: f64,
    #[serde(default = "default_half_width")]
    pub half_width_m: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub positions: Vec<[f64; 2]>,
    #[serde(default = "default_noise_figure")]
    pub noise_figure_db: f64,
}

fn default_min_radius() -> f64 {
    15.0
}
fn default_radius() -> f64 {
    50.0
}
fn default_half_width() -> f64 {
    1000.0
}
fn default_noise_figure() -> f64 {
    9.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficSource {
    Synthetic,
    File,
    /// Same per-station volume in every slot, listed in `constant`.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationBits {
    pub station: u32,
    pub bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    pub source: TrafficSource,
    #[serde(default = "default_slots")]
    pub n_slots: u32,
    #[serde(default = "default_slot_hours")]
    pub slot_hours: f64,
    /// Per-tier peak volume of one station in one slot (synthetic source).
    #[serde(default)]
    pub peak_bits: BTreeMap<Tier, f64>,
    #[serde(default = "default_t_peak")]
    pub t_peak: f64,
    /// Demand CSV (`station_id,slot,bits`) for the file source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constant: Vec<StationBits>,
    #[serde(default = "default_content")]
    pub content: ContentType,
    #[serde(default = "default_true")]
    pub shapeable: bool,
}

fn default_slots() -> u32 {
    24
}
fn default_slot_hours() -> f64 {
    1.0
}
fn default_t_peak() -> f64 {
    14.0
}
fn default_content() -> ContentType {
    ContentType::Video
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceConfig {
    /// Mean per-user rate before shaping.
    pub rate_bps: f64,
    /// Rates are drawn uniformly in `rate_bps * [1 - spread, 1 + spread]`.
    #[serde(default)]
    pub rate_spread: f64,
    #[serde(default = "default_content")]
    pub content: ContentType,
    #[serde(default = "default_true")]
    pub shapeable: bool,
    #[serde(default = "default_max_iters")]
    pub max_iters: u32,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
}

fn default_max_iters() -> u32 {
    50
}
fn default_tol() -> f64 {
    1e-6
}
fn default_damping() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub ratios: Vec<f64>,
    #[serde(default = "default_true")]
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LabelingConfig {
    #[serde(default)]
    pub critical_content: BTreeSet<ContentType>,
    /// Users whose demands may be shaped; empty means network-wide.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub shaping_users: BTreeSet<u32>,
}

impl LabelingConfig {
    pub fn policy(&self) -> LabelPolicy {
        LabelPolicy {
            critical_content: self.critical_content.clone(),
        }
    }

    pub fn scope(&self) -> ShapingScope {
        if self.shaping_users.is_empty() {
            ShapingScope::NetworkWide
        } else {
            ShapingScope::Users(self.shaping_users.iter().map(|&u| UserId(u)).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningConfig {
    /// Capacity of each slot of the planning horizon.
    pub slot_capacity_bits: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_out() }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| format!("byte {}", s.start))
                .unwrap_or_else(|| "<root>".to_string());
            SimError::config(path, e.message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is serializable")
    }

    /// Loads `preset:<name>` or a file path.
    pub fn load(spec: &str) -> Result<Self> {
        if let Some(name) = spec.strip_prefix("preset:") {
            return Self::preset(name);
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative traffic paths resolve against the config file
        if let Some(t) = cfg.traffic.as_mut() {
            if let (Some(p), Some(dir)) = (t.path.as_mut(), path.parent()) {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| SimError::config("preset", format!("unknown preset `{name}`")))?;
        Self::from_toml(text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SimError::config(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        self.link
            .validate()
            .map_err(|e| SimError::config("link", e))?;
        let mut names = BTreeSet::new();
        for (ti, topo) in self.topologies.iter().enumerate() {
            let at = format!("topology[{ti}]");
            if !names.insert(topo.name.as_str()) {
                return Err(SimError::config(format!("{at}.name"), "duplicate topology name"));
            }
            if !(0.0..=1.0).contains(&topo.interference_utilization) {
                return Err(SimError::config(
                    format!("{at}.interference_utilization"),
                    "must lie in [0, 1]",
                ));
            }
            if topo.stations.is_empty() {
                return Err(SimError::config(format!("{at}.station"), "at least one station required"));
            }
            let mut ids = BTreeSet::new();
            for (si, s) in topo.stations.iter().enumerate() {
                let sat = format!("{at}.station[{si}]");
                if !ids.insert(s.id) {
                    return Err(SimError::config(format!("{sat}.id"), format!("duplicate station id {}", s.id)));
                }
                s.build()
                    .validate()
                    .map_err(|e| SimError::config(format!("{sat}.{}", param_name(&e)), e))?;
            }
            topo.users.validate(&format!("{at}.users"))?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.ratios.is_empty() {
                return Err(SimError::config("sweep.ratios", "sweep list is empty"));
            }
            for (i, &c) in sweep.ratios.iter().enumerate() {
                if !(0.0..1.0).contains(&c) {
                    return Err(SimError::config(format!("sweep.ratios[{i}]"), format!("{c} outside [0, 1)")));
                }
            }
        }
        self.profile
            .validate()
            .map_err(|e| SimError::config("profile", e))?;
        if let Some(t) = &self.traffic {
            if t.n_slots == 0 {
                return Err(SimError::config("traffic.n_slots", "must be >= 1"));
            }
            if !(t.slot_hours > 0.0) {
                return Err(SimError::config("traffic.slot_hours", "must be > 0"));
            }
            if t.source == TrafficSource::File && t.path.is_none() {
                return Err(SimError::config("traffic.path", "required for the file source"));
            }
            if t.source == TrafficSource::Constant && t.constant.is_empty() {
                return Err(SimError::config("traffic.constant", "required for the constant source"));
            }
            for (i, c) in t.constant.iter().enumerate() {
                if !(c.bits >= 0.0) {
                    return Err(SimError::config(format!("traffic.constant[{i}].bits"), "must be >= 0"));
                }
            }
            for (tier, &b) in &t.peak_bits {
                if !(b >= 0.0) {
                    return Err(SimError::config(format!("traffic.peak_bits.{}", tier_name(*tier)), "must be >= 0"));
                }
            }
        }
        if let Some(i) = &self.interference {
            if !(i.rate_bps >= 0.0) {
                return Err(SimError::config("interference.rate_bps", "must be >= 0"));
            }
            if !(0.0..1.0).contains(&i.rate_spread) {
                return Err(SimError::config("interference.rate_spread", "must lie in [0, 1)"));
            }
            if i.max_iters == 0 {
                return Err(SimError::config("interference.max_iters", "must be >= 1"));
            }
            if !(i.tol > 0.0) {
                return Err(SimError::config("interference.tol", "must be > 0"));
            }
            if !(i.damping > 0.0 && i.damping <= 1.0) {
                return Err(SimError::config("interference.damping", "must lie in (0, 1]"));
            }
        }
        if let Some(p) = &self.planning {
            if p.slot_capacity_bits.is_empty() {
                return Err(SimError::config("planning.slot_capacity_bits", "at least one slot required"));
            }
        }
        Ok(())
    }

    pub fn sweep_ratios(&self) -> Result<Vec<f64>> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| SimError::config("sweep", "section required for this experiment"))?;
        let mut r = sweep.ratios.clone();
        r.sort_by(f64::total_cmp);
        r.dedup();
        Ok(r)
    }
}

fn param_name(e: &demandplan_core::Error) -> &'static str {
    match e {
        demandplan_core::Error::InvalidParameter { name, .. } => name,
        _ => "value",
    }
}

pub fn tier_name(t: Tier) -> &'static str {
    match t {
        Tier::Mbs => "mbs",
        Tier::Sbs => "sbs",
        Tier::Hibs => "hibs",
    }
}

impl StationConfig {
    pub fn build(&self) -> BaseStation {
        BaseStation {
            id: StationId(self.id),
            tier: self.tier,
            pos: Position::new(self.x, self.y, self.z),
            tx_power_dbm: self.tx_power_dbm,
            n_rbs: self.n_rbs,
            rb_bandwidth_hz: self.rb_bandwidth_hz,
            carrier_hz: self.carrier_hz,
            power_model: self.power.unwrap_or(match self.tier {
                Tier::Sbs => PowerModel::SBS_DEFAULT,
                Tier::Mbs | Tier::Hibs => PowerModel::MBS_DEFAULT,
            }),
            backhaul_capacity_bps: self.backhaul_capacity_bps.unwrap_or(f64::INFINITY),
            state: StationState::Active,
            green_powered: self.green_powered,
        }
    }
}

impl UsersConfig {
    fn validate(&self, at: &str) -> Result<()> {
        match self.placement {
            Placement::AroundStations => {
                if self.per_station.is_none() {
                    return Err(SimError::config(format!("{at}.per_station"), "required for around-stations"));
                }
                if !(self.min_radius_m >= 0.0 && self.radius_m > self.min_radius_m) {
                    return Err(SimError::config(format!("{at}.radius_m"), "must exceed min_radius_m >= 0"));
                }
            }
            Placement::Uniform => {
                if self.count.is_none() {
                    return Err(SimError::config(format!("{at}.count"), "required for uniform placement"));
                }
                if !(self.half_width_m > 0.0) {
                    return Err(SimError::config(format!("{at}.half_width_m"), "must be > 0"));
                }
            }
            Placement::Explicit => {}
        }
        Ok(())
    }
}

impl TopologyConfig {
    pub fn stations(&self) -> Vec<BaseStation> {
        self.stations.iter().map(StationConfig::build).collect()
    }

    /// Places users deterministically from `seed`. Users closer than
    /// `link.ref_distance_m` to any station are redrawn.
    pub fn users(&self, seed: u64, link: &LinkBudgetParams) -> Result<Vec<UserTerminal>> {
        let stations = self.stations();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = &self.users;
        let clear = |p: &Position| stations.iter().all(|s| s.pos.distance(p) >= link.ref_distance_m);
        let mut out = Vec::new();
        let push = |x: f64, y: f64, out: &mut Vec<UserTerminal>| {
            let mut u = UserTerminal::new(UserId(out.len() as u32), x, y);
            u.noise_figure_db = cfg.noise_figure_db;
            out.push(u);
        };
        const MAX_DRAWS: u32 = 10_000;
        match cfg.placement {
            Placement::AroundStations => {
                let tiers = cfg.tiers.clone().unwrap_or_else(|| vec![Tier::Mbs, Tier::Sbs]);
                let mut hosts: Vec<&BaseStation> = stations.iter().filter(|s| tiers.contains(&s.tier)).collect();
                hosts.sort_by_key(|s| s.id);
                for host in hosts {
                    for _ in 0..cfg.per_station.unwrap_or(0) {
                        let mut placed = false;
                        for _ in 0..MAX_DRAWS {
                            let r2 = rng.random_range(cfg.min_radius_m.powi(2)..cfg.radius_m.powi(2));
                            let theta = rng.random_range(0.0..std::f64::consts::TAU);
                            let r = r2.sqrt();
                            let (x, y) = (host.pos.x + r * theta.cos(), host.pos.y + r * theta.sin());
                            if clear(&Position::new(x, y, demandplan_core::net::DEFAULT_UE_HEIGHT_M)) {
                                push(x, y, &mut out);
                                placed = true;
                                break;
                            }
                        }
                        if !placed {
                            return Err(SimError::config(
                                format!("topology.{}.users", self.name),
                                "could not place a user clear of every station",
                            ));
                        }
                    }
                }
            }
            Placement::Uniform => {
                let h = cfg.half_width_m;
                for _ in 0..cfg.count.unwrap_or(0) {
                    let mut placed = false;
                    for _ in 0..MAX_DRAWS {
                        let (x, y) = (rng.random_range(-h..h), rng.random_range(-h..h));
                        if clear(&Position::new(x, y, demandplan_core::net::DEFAULT_UE_HEIGHT_M)) {
                            push(x, y, &mut out);
                            placed = true;
                            break;
                        }
                    }
                    if !placed {
                        return Err(SimError::config(
                            format!("topology.{}.users", self.name),
                            "could not place a user clear of every station",
                        ));
                    }
                }
            }
            Placement::Explicit => {
                for &[x, y] in &cfg.positions {
                    push(x, y, &mut out);
                }
            }
        }
        Ok(out)
    }
}
