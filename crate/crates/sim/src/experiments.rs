//! The cell-switching and interference sweeps and the planning pipeline.
//!
//! Every runner returns its outputs as named in-memory files so that callers
//! (the CLI, tests) decide where they land. All sweep points of one run share
//! the network and traffic drawn from the base seed; only the compression
//! ratio varies, which is what makes the curves comparable point to point.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use demandplan_core::net::associate_users;
use demandplan_core::planner::{
    plan_demands_scoped, reschedule, CompressionProfile, Decision, DemandPlan, TrafficDemand,
};
use demandplan_core::spectrum::{allocate_rbs, sum_spectral_efficiency, FixedPointOptions, RbAllocation, SpectrumNetwork};
use demandplan_core::switching::{daily_energy, DailyEnergy, LinkDemand, Optimizer, SwitchingNetwork};
use demandplan_core::traffic::{demands_from_series, synth_traffic, DemandSeries, SynthParams};
use demandplan_core::{DemandId, StationId, UserId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chart::render_svg;
use crate::config::{ExperimentConfig, TopologyConfig, TrafficConfig, TrafficSource};
use crate::error::{Result, SimError};
use crate::io::{csv_string, read_series};
use crate::sweep::SweepResult;

/// Per-purpose offsets added to the base seed.
const USER_SEED: u64 = 0;
const TRAFFIC_SEED: u64 = 1;
const RATE_SEED: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outputs {
    pub files: Vec<OutputFile>,
}

impl Outputs {
    fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push(OutputFile { name: name.into(), contents });
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.name == name).map(|f| f.contents.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
        for f in &self.files {
            let path = dir.join(&f.name);
            std::fs::write(&path, &f.contents).map_err(|e| SimError::io(path, e))?;
        }
        Ok(())
    }
}

/// `c20` for ratio 0.2, used in file names.
pub fn ratio_tag(c: f64) -> String {
    format!("c{:02}", (c * 100.0).round() as u32)
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|ch| if ch.is_ascii_alphanumeric() { ch.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn sweep_map<T: Send>(ratios: &[f64], parallel: bool, f: impl Fn(f64) -> Result<T> + Sync) -> Result<Vec<T>> {
    if parallel {
        ratios.par_iter().map(|&c| f(c)).collect()
    } else {
        ratios.iter().map(|&c| f(c)).collect()
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// A topology ready for the cell-switching sweep.
pub struct SwitchingScenario {
    pub name: String,
    pub network: SwitchingNetwork,
    pub slots: Vec<Vec<LinkDemand>>,
    pub slot_hours: f64,
}

fn station_series(topo: &TopologyConfig, traffic: &TrafficConfig, seed: u64) -> Result<Vec<DemandSeries>> {
    let mut ids: Vec<(u32, demandplan_core::net::Tier)> = topo.stations.iter().map(|s| (s.id, s.tier)).collect();
    ids.sort();
    match traffic.source {
        TrafficSource::Synthetic => {
            // unit-peak profiles scaled per tier, one generator per topology
            let unit = synth_traffic(&SynthParams {
                n_stations: ids.len() as u32,
                n_slots: traffic.n_slots,
                peak_bits: 1.0,
                seed: seed.wrapping_add(TRAFFIC_SEED),
                t_peak: traffic.t_peak,
                slot_hours: traffic.slot_hours,
            })?;
            Ok(unit
                .into_iter()
                .zip(&ids)
                .map(|(s, &(id, tier))| {
                    let peak = traffic.peak_bits.get(&tier).copied().unwrap_or(0.0);
                    DemandSeries {
                        station_id: StationId(id),
                        slots: s.slots.into_iter().map(|(t, v)| (t, v * peak)).collect(),
                    }
                })
                .collect())
        }
        TrafficSource::File => {
            let path = traffic.path.as_ref().ok_or_else(|| SimError::config("traffic.path", "missing"))?;
            read_series(path)
        }
        TrafficSource::Constant => Ok(traffic
            .constant
            .iter()
            .map(|c| DemandSeries {
                station_id: StationId(c.station),
                slots: (0..traffic.n_slots).map(|t| (t, c.bits)).collect(),
            })
            .collect()),
    }
}

/// Builds the network and per-slot demands of every configured topology.
pub fn switching_scenarios(cfg: &ExperimentConfig) -> Result<Vec<SwitchingScenario>> {
    let traffic = cfg
        .traffic
        .as_ref()
        .ok_or_else(|| SimError::config("traffic", "section required for cell switching"))?;
    if cfg.topologies.is_empty() {
        return Err(SimError::config("topology", "at least one topology required"));
    }
    cfg.topologies
        .iter()
        .map(|topo| {
            let users = topo.users(cfg.seed.wrapping_add(USER_SEED), &cfg.link)?;
            let network = SwitchingNetwork::new(topo.stations(), &users, &cfg.link, topo.interference_utilization)?;
            let series = station_series(topo, traffic, cfg.seed)?;
            let slots = demands_from_series(
                &series,
                network.association(),
                traffic.n_slots,
                traffic.slot_hours,
                traffic.content,
                traffic.shapeable,
            )?;
            Ok(SwitchingScenario { name: topo.name.clone(), network, slots, slot_hours: traffic.slot_hours })
        })
        .collect()
}

#[derive(Serialize)]
struct TraceRow {
    slot: usize,
    off_set: String,
    total_power_w: f64,
    mbs_load_fraction: f64,
    feasible_count: usize,
}

fn trace_csv(energy: &DailyEnergy) -> Result<String> {
    csv_string(energy.trace.iter().map(|t| TraceRow {
        slot: t.slot,
        off_set: t.config.off_set.iter().map(|s| s.0.to_string()).collect::<Vec<_>>().join(" "),
        total_power_w: t.config.total_power_w.unwrap_or(f64::NAN),
        mbs_load_fraction: t.config.mbs_load_fraction,
        feasible_count: t.config.feasible_count,
    }))
}

pub struct CellSwitchingRun {
    /// Metric `energy_wh:<topology>` per ratio.
    pub sweep: SweepResult,
    /// `[topology][ratio index]`
    pub energy: Vec<(String, Vec<DailyEnergy>)>,
    pub ratios: Vec<f64>,
    pub outputs: Outputs,
}

impl CellSwitchingRun {
    pub fn energy_wh(&self, topology: &str) -> Option<Vec<f64>> {
        self.energy
            .iter()
            .find(|(n, _)| n == topology)
            .map(|(_, e)| e.iter().map(|d| d.total_wh).collect())
    }
}

/// Daily network energy under exhaustive switching at every sweep ratio.
pub fn run_cell_switching(cfg: &ExperimentConfig) -> Result<CellSwitchingRun> {
    let ratios = cfg.sweep_ratios()?;
    let parallel = cfg.sweep.as_ref().is_some_and(|s| s.parallel);
    let scenarios = switching_scenarios(cfg)?;

    let per_ratio = sweep_map(&ratios, parallel, |c| {
        let start = Instant::now();
        let profile = CompressionProfile::uniform(c);
        let runs = scenarios
            .iter()
            .map(|s| daily_energy(&s.network, &s.slots, &profile, Optimizer::Exhaustive, s.slot_hours))
            .collect::<demandplan_core::Result<Vec<_>>>()?;
        Ok((runs, elapsed_ms(start)))
    })?;

    let mut sweep = SweepResult::default();
    let mut energy: Vec<(String, Vec<DailyEnergy>)> = scenarios.iter().map(|s| (s.name.clone(), Vec::new())).collect();
    let mut outputs = Outputs::default();
    for (&c, (runs, ms)) in ratios.iter().zip(per_ratio) {
        for (k, run) in runs.into_iter().enumerate() {
            let name = &scenarios[k].name;
            sweep.push(c, format!("energy_wh:{name}"), run.total_wh, ms);
            outputs.add(format!("trace_{}_{}.csv", slug(name), ratio_tag(c)), trace_csv(&run)?);
            energy[k].1.push(run);
        }
    }
    outputs.files.sort_by(|a, b| a.name.cmp(&b.name));
    outputs.add("cell_switching.csv", sweep.to_csv()?);
    outputs.add("cell_switching.svg", render_svg(&sweep, "compression ratio", "daily energy (Wh)")?);
    Ok(CellSwitchingRun { sweep, energy, ratios, outputs })
}

/// A topology ready for the interference sweep.
pub struct InterferenceScenario {
    pub network: SpectrumNetwork,
    pub demands: Vec<LinkDemand>,
    pub options: FixedPointOptions,
}

pub fn interference_scenario(cfg: &ExperimentConfig) -> Result<InterferenceScenario> {
    let icfg = cfg
        .interference
        .as_ref()
        .ok_or_else(|| SimError::config("interference", "section required for the interference sweep"))?;
    let topo = cfg
        .topologies
        .first()
        .ok_or_else(|| SimError::config("topology", "at least one topology required"))?;
    let stations = topo.stations();
    let users = topo.users(cfg.seed.wrapping_add(USER_SEED), &cfg.link)?;
    let association = if users.is_empty() { BTreeMap::new() } else { associate_users(&users, &stations, &cfg.link)? };
    let network = SpectrumNetwork::new(stations, &users, &association, &cfg.link)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(RATE_SEED));
    let demands = users
        .iter()
        .map(|u| {
            let f = if icfg.rate_spread > 0.0 {
                rng.random_range(1.0 - icfg.rate_spread..=1.0 + icfg.rate_spread)
            } else {
                1.0
            };
            LinkDemand { user: u.id, rate_bps: icfg.rate_bps * f, content: icfg.content, shapeable: icfg.shapeable }
        })
        .collect();
    Ok(InterferenceScenario {
        network,
        demands,
        options: FixedPointOptions { max_iters: icfg.max_iters, tol: icfg.tol, damping: icfg.damping },
    })
}

#[derive(Serialize)]
struct AllocationRow {
    user_id: u32,
    station_id: u32,
    rbs: u32,
    sinr_db: f64,
    se: f64,
}

fn allocation_csv(net: &SpectrumNetwork, alloc: &RbAllocation) -> Result<String> {
    csv_string(alloc.per_user_rbs.iter().map(|(&u, &rbs)| {
        let sinr = alloc.per_user_sinr.get(&u).copied().unwrap_or(0.0);
        AllocationRow {
            user_id: u.0,
            station_id: net.serving(u).map_or(u32::MAX, |s| s.0),
            rbs,
            sinr_db: alloc.sinr_db(u).unwrap_or(f64::NEG_INFINITY),
            se: if rbs > 0 && !alloc.unserved.contains(&u) { demandplan_core::net::se_per_rb(sinr) } else { 0.0 },
        }
    }))
}

#[derive(Serialize)]
struct InterferenceRow {
    compression_ratio: f64,
    sum_se: f64,
    unserved_count: usize,
    iterations: u32,
    converged: bool,
}

pub struct InterferenceRun {
    /// Metrics `sum_se` and `unserved_count` per ratio.
    pub sweep: SweepResult,
    pub allocations: Vec<RbAllocation>,
    pub ratios: Vec<f64>,
    pub outputs: Outputs,
}

impl InterferenceRun {
    pub fn sum_se(&self) -> Vec<f64> {
        self.sweep.metric("sum_se").into_iter().map(|p| p.1).collect()
    }

    pub fn unserved(&self) -> Vec<usize> {
        self.allocations.iter().map(|a| a.unserved.len()).collect()
    }
}

/// Sum spectral efficiency and unserved users at every sweep ratio.
pub fn run_interference(cfg: &ExperimentConfig) -> Result<InterferenceRun> {
    let ratios = cfg.sweep_ratios()?;
    let parallel = cfg.sweep.as_ref().is_some_and(|s| s.parallel);
    let sc = interference_scenario(cfg)?;

    let per_ratio = sweep_map(&ratios, parallel, |c| {
        let start = Instant::now();
        let profile = CompressionProfile::uniform(c);
        let rates: BTreeMap<UserId, f64> = sc.demands.iter().map(|d| (d.user, d.shaped(&profile).rate_bps)).collect();
        let alloc = allocate_rbs(&sc.network, &rates, &sc.options)?;
        Ok((alloc, elapsed_ms(start)))
    })?;

    let mut sweep = SweepResult::default();
    let mut summary = Vec::new();
    let mut outputs = Outputs::default();
    let mut allocations = Vec::new();
    for (&c, (alloc, ms)) in ratios.iter().zip(per_ratio) {
        let se = sum_spectral_efficiency(&alloc);
        sweep.push(c, "sum_se", se, ms);
        sweep.push(c, "unserved_count", alloc.unserved.len() as f64, ms);
        summary.push(InterferenceRow {
            compression_ratio: c,
            sum_se: se,
            unserved_count: alloc.unserved.len(),
            iterations: alloc.iterations,
            converged: alloc.converged,
        });
        outputs.add(format!("allocation_{}.csv", ratio_tag(c)), allocation_csv(&sc.network, &alloc)?);
        allocations.push(alloc);
    }
    outputs.add("interference.csv", csv_string(summary)?);
    outputs.add("interference_sweep.csv", sweep.to_csv()?);
    let se_only = SweepResult { rows: sweep.rows.iter().filter(|r| r.metric == "sum_se").cloned().collect() };
    outputs.add("interference.svg", render_svg(&se_only, "compression ratio", "sum spectral efficiency (bit/s/Hz)")?);
    Ok(InterferenceRun { sweep, allocations, ratios, outputs })
}

/// Why a demand misses its deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Critical, but did not fit in its arrival slot.
    Infeasible,
    /// Deferred, but no later slot up to the deadline had room.
    NoSlot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanOutcome {
    /// Final decision per demand, in input order.
    pub decisions: Vec<(DemandId, Decision)>,
    /// Bits used per slot, transmit-now and rescheduled together.
    pub used_bits: Vec<u64>,
    pub capacity_bits: Vec<u64>,
    pub violations: Vec<(DemandId, ViolationKind)>,
    pub outputs: Outputs,
}

impl PlanOutcome {
    pub fn decision(&self, id: DemandId) -> Option<Decision> {
        self.decisions.iter().find(|(d, _)| *d == id).map(|&(_, x)| x)
    }
}

fn decision_name(d: &Decision) -> &'static str {
    match d {
        Decision::TransmitNowShaped { .. } => "transmit_now_shaped",
        Decision::TransmitNowUnshaped => "transmit_now_unshaped",
        Decision::Rescheduled { .. } => "rescheduled",
        Decision::Infeasible => "infeasible",
    }
}

#[derive(Serialize)]
struct PlanRow {
    demand_id: u32,
    decision: &'static str,
    effective_bits: u64,
    target_slot: Option<u32>,
}

#[derive(Serialize)]
struct SlotRow {
    slot: usize,
    capacity_bits: u64,
    used_bits: u64,
    utilization: f64,
}

/// Label, plan and reschedule slot by slot over the configured horizon.
///
/// Each slot plans the demands arriving in it against whatever capacity
/// earlier reschedules left; its deferred demands are then placed into later
/// slots before the next slot is planned.
pub fn run_plan(cfg: &ExperimentConfig, demands: &[TrafficDemand]) -> Result<PlanOutcome> {
    let planning = cfg
        .planning
        .as_ref()
        .ok_or_else(|| SimError::config("planning", "section required for planning"))?;
    let horizon = planning.slot_capacity_bits.len();
    let policy = cfg.labeling.policy();
    let scope = cfg.labeling.scope();
    for d in demands {
        if d.arrival_slot as usize >= horizon {
            return Err(SimError::config(
                "planning.slot_capacity_bits",
                format!("demand {} arrives in slot {} beyond the {horizon}-slot horizon", d.id, d.arrival_slot),
            ));
        }
    }

    let mut remaining = planning.slot_capacity_bits.clone();
    let mut final_decisions: BTreeMap<DemandId, Decision> = BTreeMap::new();
    let mut violations = Vec::new();
    for slot in 0..horizon {
        let arriving: Vec<TrafficDemand> = demands.iter().filter(|d| d.arrival_slot as usize == slot).cloned().collect();
        if arriving.is_empty() {
            continue;
        }
        let plan: DemandPlan = plan_demands_scoped(&arriving, remaining[slot], &cfg.profile, &policy, &scope);
        let mut deferred = Vec::new();
        for (d, (id, decision)) in arriving.iter().zip(&plan.decisions) {
            match decision {
                Decision::TransmitNowShaped { effective_bits } => remaining[slot] -= effective_bits,
                Decision::TransmitNowUnshaped => remaining[slot] -= d.volume_bits,
                Decision::Rescheduled { .. } => deferred.push(d.clone()),
                Decision::Infeasible => violations.push((*id, ViolationKind::Infeasible)),
            }
            final_decisions.insert(*id, *decision);
        }
        let schedule = reschedule(&deferred, &remaining, horizon)?;
        remaining = schedule.remaining;
        for (id, s) in &schedule.assignments {
            final_decisions.insert(*id, Decision::Rescheduled { target_slot: Some(*s) });
        }
        violations.extend(schedule.violations.iter().map(|&id| (id, ViolationKind::NoSlot)));
    }

    let decisions: Vec<(DemandId, Decision)> = demands.iter().map(|d| (d.id, final_decisions[&d.id])).collect();
    let used_bits: Vec<u64> = planning
        .slot_capacity_bits
        .iter()
        .zip(&remaining)
        .map(|(cap, rem)| cap - rem)
        .collect();

    let mut outputs = Outputs::default();
    let rows = demands.iter().zip(&decisions).map(|(d, (id, dec))| PlanRow {
        demand_id: id.0,
        decision: decision_name(dec),
        effective_bits: match dec {
            Decision::TransmitNowShaped { effective_bits } => *effective_bits,
            Decision::Infeasible | Decision::Rescheduled { target_slot: None } => 0,
            _ => d.volume_bits,
        },
        target_slot: match dec {
            Decision::Rescheduled { target_slot } => *target_slot,
            Decision::TransmitNowShaped { .. } | Decision::TransmitNowUnshaped => Some(d.arrival_slot),
            Decision::Infeasible => None,
        },
    });
    outputs.add("plan.csv", csv_string(rows)?);
    outputs.add(
        "slots.csv",
        csv_string(planning.slot_capacity_bits.iter().zip(&used_bits).enumerate().map(|(slot, (&cap, &used))| SlotRow {
            slot,
            capacity_bits: cap,
            used_bits: used,
            utilization: if cap == 0 { 0.0 } else { used as f64 / cap as f64 },
        }))?,
    );
    let mut report = format!(
        "demands {}\ntransmitted_now {}\nrescheduled {}\nviolations {}\n",
        demands.len(),
        decisions.iter().filter(|(_, d)| d.is_transmit_now()).count(),
        decisions.iter().filter(|(_, d)| matches!(d, Decision::Rescheduled { target_slot: Some(_) })).count(),
        violations.len(),
    );
    if !violations.is_empty() {
        report.push_str("\n[deadline violations]\n");
        for (id, kind) in &violations {
            let why = match kind {
                ViolationKind::Infeasible => "critical demand exceeds slot capacity",
                ViolationKind::NoSlot => "no slot with capacity before deadline",
            };
            report.push_str(&format!("demand {id}: {why}\n"));
        }
    }
    outputs.add("report.txt", report);
    Ok(PlanOutcome { decisions, used_bits, capacity_bits: planning.slot_capacity_bits.clone(), violations, outputs })
}
