//! Load-dependent station power and cell switching.
//!
//! Small stations (SBSs) may be put to sleep when the macro station (MBS),
//! or an optional HIBS acting as a second host, can absorb their users. The
//! offloaded users' RB needs are recomputed at the host's link quality.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::net::{
    associate_users, required_rbs, rb_received_mw, se_per_rb, BaseStation, LinkBudgetParams, Tier,
    UserTerminal,
};
use crate::planner::{CompressionProfile, ContentType};
use crate::units::{StationId, UserId};

/// Upper bound on SBS count for the `2^N` enumeration.
pub const EXHAUSTIVE_LIMIT: usize = 20;

/// Affine load-dependent power: `P0 + slope * Pmax * load` when active,
/// a constant when asleep.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PowerModel {
    pub p_static_w: f64,
    pub load_slope: f64,
    pub p_tx_max_w: f64,
    pub p_sleep_w: f64,
}

impl PowerModel {
    pub const MBS_DEFAULT: PowerModel = PowerModel {
        p_static_w: 130.0,
        load_slope: 4.7,
        p_tx_max_w: 20.0,
        p_sleep_w: 75.0,
    };

    pub const SBS_DEFAULT: PowerModel = PowerModel {
        p_static_w: 56.0,
        load_slope: 2.6,
        p_tx_max_w: 6.3,
        p_sleep_w: 39.0,
    };

    pub fn validate(&self) -> Result<()> {
        let all_positive = [self.p_static_w, self.load_slope, self.p_tx_max_w, self.p_sleep_w]
            .iter()
            .all(|&v| v > 0.0);
        if !all_positive {
            return Err(Error::param("power_model", "all fields must be > 0"));
        }
        if !(self.p_sleep_w < self.p_static_w) {
            return Err(Error::param("power_model", "p_sleep_w must be below p_static_w"));
        }
        Ok(())
    }

    pub fn active_power(&self, load: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&load) {
            return Err(Error::InvalidLoad(load));
        }
        Ok(self.p_static_w + self.load_slope * self.p_tx_max_w * load)
    }
}

pub fn bs_power(bs: &BaseStation, load: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&load) {
        return Err(Error::InvalidLoad(load));
    }
    if bs.is_active() {
        bs.power_model.active_power(load)
    } else {
        Ok(bs.power_model.p_sleep_w)
    }
}

/// Downlink rate requested by one user in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDemand {
    pub user: UserId,
    pub rate_bps: f64,
    pub content: ContentType,
    pub shapeable: bool,
}

impl LinkDemand {
    pub fn new(user: UserId, rate_bps: f64) -> Self {
        LinkDemand {
            user,
            rate_bps,
            content: ContentType::Video,
            shapeable: true,
        }
    }

    pub fn shaped(&self, profile: &CompressionProfile) -> LinkDemand {
        if !self.shapeable {
            return *self;
        }
        LinkDemand {
            rate_bps: profile.shape_amount(self.rate_bps, self.content),
            content: profile.shaped_content(self.content),
            ..*self
        }
    }
}

pub fn shape_link_demands(demands: &[LinkDemand], profile: &CompressionProfile) -> Vec<LinkDemand> {
    demands.iter().map(|d| d.shaped(profile)).collect()
}

/// Topology with a fixed association and a per-link spectral efficiency table.
#[derive(Debug, Clone)]
pub struct SwitchingNetwork {
    stations: Vec<BaseStation>,
    association: BTreeMap<UserId, StationId>,
    link_se: BTreeMap<(UserId, StationId), f64>,
    mbs: usize,
    hibs: Option<usize>,
    sbs: Vec<usize>,
}

impl SwitchingNetwork {
    /// Associates users with all stations on and derives every user-station
    /// SE. `interference_utilization` scales co-channel interference from
    /// the other stations (0 gives SNR-limited links).
    pub fn new(
        stations: Vec<BaseStation>,
        users: &[UserTerminal],
        params: &LinkBudgetParams,
        interference_utilization: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&interference_utilization) {
            return Err(Error::InvalidLoad(interference_utilization));
        }
        let mut stations = stations;
        for s in &mut stations {
            s.state = crate::net::StationState::Active;
        }
        let association = associate_users(users, &stations, params)?;
        let mut link_se = BTreeMap::new();
        for u in users {
            for (k, serving) in stations.iter().enumerate() {
                let signal = rb_received_mw(serving, u, params)?;
                let mut interference = 0.0;
                if interference_utilization > 0.0 {
                    for (j, other) in stations.iter().enumerate() {
                        if j != k {
                            interference += interference_utilization * rb_received_mw(other, u, params)?;
                        }
                    }
                }
                let noise = params.rb_noise_mw(serving.rb_bandwidth_hz, u.noise_figure_db);
                link_se.insert((u.id, serving.id), se_per_rb(signal / (noise + interference)));
            }
        }
        Self::from_parts(stations, association, link_se)
    }

    /// Builds a network from an explicit association and SE table.
    pub fn from_parts(
        mut stations: Vec<BaseStation>,
        association: BTreeMap<UserId, StationId>,
        link_se: BTreeMap<(UserId, StationId), f64>,
    ) -> Result<Self> {
        stations.sort_by_key(|s| s.id);
        for w in stations.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::InvalidTopology(format!("duplicate station id {}", w[0].id)));
            }
        }
        for s in &stations {
            s.validate()?;
        }
        let of_tier = |t: Tier| -> Vec<usize> {
            stations
                .iter()
                .enumerate()
                .filter(|(_, s)| s.tier == t)
                .map(|(i, _)| i)
                .collect()
        };
        let mbs = of_tier(Tier::Mbs);
        let hibs = of_tier(Tier::Hibs);
        if mbs.len() != 1 {
            return Err(Error::InvalidTopology(format!(
                "cell switching needs exactly one MBS, found {}",
                mbs.len()
            )));
        }
        if hibs.len() > 1 {
            return Err(Error::InvalidTopology("at most one HIBS host is supported".into()));
        }
        for sid in association.values() {
            if !stations.iter().any(|s| s.id == *sid) {
                return Err(Error::UnknownStation(*sid));
            }
        }
        Ok(SwitchingNetwork {
            mbs: mbs[0],
            hibs: hibs.first().copied(),
            sbs: of_tier(Tier::Sbs),
            stations,
            association,
            link_se,
        })
    }

    pub fn stations(&self) -> &[BaseStation] {
        &self.stations
    }

    pub fn mbs(&self) -> &BaseStation {
        &self.stations[self.mbs]
    }

    pub fn hibs(&self) -> Option<&BaseStation> {
        self.hibs.map(|i| &self.stations[i])
    }

    pub fn sbs_ids(&self) -> Vec<StationId> {
        self.sbs.iter().map(|&i| self.stations[i].id).collect()
    }

    pub fn association(&self) -> &BTreeMap<UserId, StationId> {
        &self.association
    }

    pub fn link_se(&self, user: UserId, station: StationId) -> Option<f64> {
        self.link_se.get(&(user, station)).copied()
    }

    fn station(&self, id: StationId) -> Result<&BaseStation> {
        self.stations
            .binary_search_by_key(&id, |s| s.id)
            .map(|i| &self.stations[i])
            .map_err(|_| Error::UnknownStation(id))
    }

    fn rbs_on(&self, d: &LinkDemand, host: &BaseStation) -> Result<u32> {
        let se = self.link_se(d.user, host.id).ok_or(Error::UnknownUser(d.user))?;
        required_rbs(d.rate_bps, se, host.rb_bandwidth_hz, d.user)
    }

    fn serving(&self, user: UserId) -> Result<StationId> {
        self.association.get(&user).copied().ok_or(Error::UnknownUser(user))
    }

    /// Per-station loads for one slot of already shaped demands.
    fn load_table(&self, shaped: &[LinkDemand]) -> Result<LoadTable> {
        let n = self.stations.len();
        let mut own_rbs = alloc::vec![0u64; n];
        let mut own_rate = alloc::vec![0.0f64; n];
        let mut offload = alloc::vec![[Some(0u64); 2]; n];
        let hosts = [Some(self.mbs), self.hibs];
        for d in shaped {
            let sid = self.serving(d.user)?;
            let k = self.stations.binary_search_by_key(&sid, |s| s.id).map_err(|_| Error::UnknownStation(sid))?;
            own_rbs[k] += self.rbs_on(d, &self.stations[k])? as u64;
            own_rate[k] += d.rate_bps;
            if self.stations[k].tier == Tier::Sbs {
                for (slot, host) in hosts.iter().enumerate() {
                    let Some(h) = *host else {
                        offload[k][slot] = None;
                        continue;
                    };
                    offload[k][slot] = match (offload[k][slot], self.rbs_on(d, &self.stations[h])) {
                        (Some(acc), Ok(r)) => Some(acc + r as u64),
                        _ => None,
                    };
                }
            }
        }
        if self.hibs.is_none() {
            for o in &mut offload {
                o[1] = None;
            }
        }
        Ok(LoadTable {
            own_rbs,
            own_rate,
            offload,
        })
    }

    fn evaluate(&self, loads: &LoadTable, off: &[bool]) -> Evaluation {
        let mut host_rbs = [0u64; 2];
        let mut host_rate = [0.0f64; 2];
        let host_idx = [Some(self.mbs), self.hibs];
        for (slot, h) in host_idx.iter().enumerate() {
            if let Some(h) = *h {
                host_rbs[slot] = loads.own_rbs[h];
                host_rate[slot] = loads.own_rate[h];
            }
        }
        let mut extra = [0u64; 2];
        let mut feasible = host_rbs[0] <= self.mbs().n_rbs as u64
            && host_rate[0] <= self.mbs().backhaul_capacity_bps;
        if let Some(h) = self.hibs() {
            feasible &= host_rbs[1] <= h.n_rbs as u64 && host_rate[1] <= h.backhaul_capacity_bps;
        }

        // Whole SBSs go to the MBS when they fit, otherwise to the HIBS.
        for (bit, &k) in self.sbs.iter().enumerate() {
            if !feasible || !off[bit] {
                continue;
            }
            let placed = (0..2).find(|&slot| {
                let (Some(h), Some(rbs)) = (host_idx[slot], loads.offload[k][slot]) else {
                    return false;
                };
                let host = &self.stations[h];
                host_rbs[slot] + rbs <= host.n_rbs as u64
                    && host_rate[slot] + loads.own_rate[k] <= host.backhaul_capacity_bps
            });
            match placed {
                Some(slot) => {
                    let rbs = loads.offload[k][slot].unwrap_or(0);
                    host_rbs[slot] += rbs;
                    extra[slot] += rbs;
                    host_rate[slot] += loads.own_rate[k];
                }
                None => feasible = false,
            }
        }
        if !feasible {
            return Evaluation {
                feasible: false,
                power_w: f64::NAN,
                extra,
                mbs_load: f64::NAN,
            };
        }
        debug_assert!(host_rbs[0] <= self.mbs().n_rbs as u64);

        let mut power = 0.0;
        let mut mbs_load = 0.0;
        for (k, bs) in self.stations.iter().enumerate() {
            let load = |rbs: u64| (rbs as f64 / bs.n_rbs as f64).min(1.0);
            let p = match bs.tier {
                Tier::Mbs => {
                    mbs_load = load(host_rbs[0]);
                    bs.power_model.p_static_w + bs.power_model.load_slope * bs.power_model.p_tx_max_w * mbs_load
                }
                Tier::Hibs if bs.green_powered => 0.0,
                Tier::Hibs => {
                    bs.power_model.p_static_w
                        + bs.power_model.load_slope * bs.power_model.p_tx_max_w * load(host_rbs[1])
                }
                Tier::Sbs => {
                    let bit = self.sbs.iter().position(|&i| i == k).unwrap_or(0);
                    if off[bit] {
                        bs.power_model.p_sleep_w
                    } else {
                        bs.power_model.p_static_w
                            + bs.power_model.load_slope * bs.power_model.p_tx_max_w * load(loads.own_rbs[k])
                    }
                }
            };
            power += p;
        }
        Evaluation {
            feasible: true,
            power_w: power,
            extra,
            mbs_load,
        }
    }

    fn config_from(&self, off: &[bool], eval: &Evaluation, feasible_count: usize) -> SwitchConfig {
        let off_set = self
            .sbs
            .iter()
            .zip(off)
            .filter(|(_, &o)| o)
            .map(|(&k, _)| self.stations[k].id)
            .collect();
        let mut offload_rbs = BTreeMap::new();
        if eval.feasible {
            offload_rbs.insert(self.mbs().id, eval.extra[0] as u32);
            if let Some(h) = self.hibs() {
                offload_rbs.insert(h.id, eval.extra[1] as u32);
            }
        }
        SwitchConfig {
            off_set,
            feasible: eval.feasible,
            total_power_w: eval.feasible.then_some(eval.power_w),
            offload_rbs,
            mbs_load_fraction: if eval.feasible { eval.mbs_load } else { f64::NAN },
            feasible_count,
        }
    }

    fn mask_for(&self, off_set: &BTreeSet<StationId>) -> Result<Vec<bool>> {
        for id in off_set {
            let bs = self.station(*id)?;
            if bs.tier != Tier::Sbs {
                return Err(Error::InvalidTopology(format!("station {id} is not an SBS")));
            }
        }
        Ok(self.sbs.iter().map(|&k| off_set.contains(&self.stations[k].id)).collect())
    }
}

struct LoadTable {
    own_rbs: Vec<u64>,
    own_rate: Vec<f64>,
    /// RBs an SBS's users need at `[MBS, HIBS]`; `None` if unservable there.
    offload: Vec<[Option<u64>; 2]>,
}

struct Evaluation {
    feasible: bool,
    power_w: f64,
    extra: [u64; 2],
    mbs_load: f64,
}

/// An on/off assignment over the SBSs.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchConfig {
    pub off_set: BTreeSet<StationId>,
    pub feasible: bool,
    /// Total network power; only present for feasible configurations.
    pub total_power_w: Option<f64>,
    /// Extra RBs hosted per host station.
    pub offload_rbs: BTreeMap<StationId, u32>,
    pub mbs_load_fraction: f64,
    /// Feasible configurations the optimizer looked at.
    pub feasible_count: usize,
}

/// RBs the host needs to absorb all users of `sbs`, at the host link SE.
pub fn offload_requirement(
    net: &SwitchingNetwork,
    sbs: StationId,
    host: StationId,
    shaped: &[LinkDemand],
) -> Result<u32> {
    let host = net.station(host)?;
    if !host.is_active() {
        return Err(Error::StationAsleep(host.id));
    }
    let mut total = 0u32;
    for d in shaped {
        if net.serving(d.user)? == sbs {
            total = total.saturating_add(net.rbs_on(d, host)?);
        }
    }
    Ok(total)
}

/// Whether switching off `off_set` keeps every host within its RBs and backhaul.
pub fn feasible(net: &SwitchingNetwork, off_set: &BTreeSet<StationId>, shaped: &[LinkDemand]) -> bool {
    let Ok(mask) = net.mask_for(off_set) else {
        return false;
    };
    match net.load_table(shaped) {
        Ok(loads) => net.evaluate(&loads, &mask).feasible,
        Err(_) => false,
    }
}

/// Power and bookkeeping of one specific configuration.
pub fn evaluate_config(
    net: &SwitchingNetwork,
    off_set: &BTreeSet<StationId>,
    demands: &[LinkDemand],
    profile: &CompressionProfile,
) -> Result<SwitchConfig> {
    let mask = net.mask_for(off_set)?;
    let loads = net.load_table(&shape_link_demands(demands, profile))?;
    let eval = net.evaluate(&loads, &mask);
    Ok(net.config_from(&mask, &eval, eval.feasible as usize))
}

/// Ranking used by the optimizers: lower power, then more sleeping
/// stations, then the lexicographically smaller id list.
fn prefer(a_power: f64, a_off: &[StationId], b_power: f64, b_off: &[StationId]) -> Ordering {
    a_power
        .partial_cmp(&b_power)
        .unwrap_or(Ordering::Equal)
        .then_with(|| b_off.len().cmp(&a_off.len()))
        .then_with(|| a_off.cmp(b_off))
}

/// Minimum-power configuration over all `2^N` SBS off-sets.
pub fn exhaustive_switch(
    net: &SwitchingNetwork,
    demands: &[LinkDemand],
    profile: &CompressionProfile,
) -> Result<SwitchConfig> {
    let n = net.sbs.len();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLargeForExhaustive {
            sbs_count: n,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let loads = net.load_table(&shape_link_demands(demands, profile))?;
    let ids = net.sbs_ids();

    let mut best: Option<(Vec<bool>, Evaluation, Vec<StationId>)> = None;
    let mut feasible_count = 0usize;
    let mut mask = alloc::vec![false; n];
    for bits in 0u32..(1u32 << n) {
        for (i, m) in mask.iter_mut().enumerate() {
            *m = bits & (1 << i) != 0;
        }
        let eval = net.evaluate(&loads, &mask);
        if !eval.feasible {
            continue;
        }
        feasible_count += 1;
        let off: Vec<StationId> = ids.iter().zip(&mask).filter(|(_, &m)| m).map(|(&id, _)| id).collect();
        let better = match &best {
            None => true,
            Some((_, b, b_off)) => prefer(eval.power_w, &off, b.power_w, b_off) == Ordering::Less,
        };
        if better {
            best = Some((mask.clone(), eval, off));
        }
    }
    Ok(match best {
        Some((mask, eval, _)) => net.config_from(&mask, &eval, feasible_count),
        None => {
            let all_on = alloc::vec![false; n];
            let eval = net.evaluate(&loads, &all_on);
            net.config_from(&all_on, &eval, 0)
        }
    })
}

/// Repeatedly switches off the SBS with the largest feasible power
/// reduction until no move improves.
pub fn greedy_switch(
    net: &SwitchingNetwork,
    demands: &[LinkDemand],
    profile: &CompressionProfile,
) -> Result<SwitchConfig> {
    let loads = net.load_table(&shape_link_demands(demands, profile))?;
    let n = net.sbs.len();
    let mut mask = alloc::vec![false; n];
    let mut current = net.evaluate(&loads, &mask);
    if !current.feasible {
        return Ok(net.config_from(&mask, &current, 0));
    }
    let mut feasible_count = 1;
    loop {
        let mut best: Option<(usize, Evaluation)> = None;
        for i in 0..n {
            if mask[i] {
                continue;
            }
            mask[i] = true;
            let eval = net.evaluate(&loads, &mask);
            mask[i] = false;
            if !eval.feasible {
                continue;
            }
            feasible_count += 1;
            let improves = eval.power_w < current.power_w;
            let beats = best.as_ref().is_none_or(|(_, b)| eval.power_w < b.power_w);
            if improves && beats {
                best = Some((i, eval));
            }
        }
        match best {
            Some((i, eval)) => {
                mask[i] = true;
                current = eval;
            }
            None => break,
        }
    }
    Ok(net.config_from(&mask, &current, feasible_count))
}

/// Every SBS on.
pub fn all_on(net: &SwitchingNetwork, demands: &[LinkDemand], profile: &CompressionProfile) -> Result<SwitchConfig> {
    evaluate_config(net, &BTreeSet::new(), demands, profile)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    AllOn,
    Greedy,
    Exhaustive,
}

impl Optimizer {
    pub fn run(
        self,
        net: &SwitchingNetwork,
        demands: &[LinkDemand],
        profile: &CompressionProfile,
    ) -> Result<SwitchConfig> {
        match self {
            Optimizer::AllOn => all_on(net, demands, profile),
            Optimizer::Greedy => greedy_switch(net, demands, profile),
            Optimizer::Exhaustive => exhaustive_switch(net, demands, profile),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotTrace {
    pub slot: usize,
    pub config: SwitchConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyEnergy {
    pub total_wh: f64,
    pub trace: Vec<SlotTrace>,
}

/// Runs the optimizer on every slot and integrates network power.
pub fn daily_energy(
    net: &SwitchingNetwork,
    slots: &[Vec<LinkDemand>],
    profile: &CompressionProfile,
    optimizer: Optimizer,
    slot_hours: f64,
) -> Result<DailyEnergy> {
    if !(slot_hours > 0.0) {
        return Err(Error::param("slot_hours", "must be > 0"));
    }
    let mut total_wh = 0.0;
    let mut trace = Vec::with_capacity(slots.len());
    for (slot, demands) in slots.iter().enumerate() {
        let config = optimizer.run(net, demands, profile)?;
        let power = config.total_power_w.ok_or(Error::NoFeasibleConfig { slot })?;
        total_wh += power * slot_hours;
        trace.push(SlotTrace { slot, config });
    }
    Ok(DailyEnergy { total_wh, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::fixtures::station;
    use crate::net::StationState;
    use proptest::prelude::*;

    #[test]
    fn power_model_examples() {
        let mut sbs = station(1, Tier::Sbs, 0.0, 0.0, 10.0, 30.0);
        assert_eq!(bs_power(&sbs, 0.0).unwrap(), 56.0);
        assert!((bs_power(&sbs, 0.5).unwrap() - 64.19).abs() < 1e-9);
        assert_eq!(bs_power(&sbs, 1.5), Err(Error::InvalidLoad(1.5)));
        sbs.state = StationState::Sleep;
        assert_eq!(bs_power(&sbs, 0.0).unwrap(), 39.0);
        assert_eq!(bs_power(&sbs, 0.7).unwrap(), 39.0);
    }

    #[test]
    fn power_model_validation() {
        assert!(PowerModel::MBS_DEFAULT.validate().is_ok());
        let bad = PowerModel {
            p_sleep_w: 200.0,
            ..PowerModel::MBS_DEFAULT
        };
        assert!(bad.validate().is_err());
    }

    /// MBS 0 with 100 RBs, SBSs 1..=n with 50 RBs, users 10*k + j on SBS k.
    fn table_net(n_sbs: u32, se_mbs: f64, hibs: bool) -> SwitchingNetwork {
        let mut stations = alloc::vec![station(0, Tier::Mbs, 0.0, 0.0, 25.0, 43.0)];
        for k in 1..=n_sbs {
            let mut s = station(k, Tier::Sbs, 300.0 * k as f64, 0.0, 10.0, 30.0);
            s.n_rbs = 50;
            stations.push(s);
        }
        if hibs {
            let mut h = station(99, Tier::Hibs, 0.0, 0.0, 20_000.0, 46.0);
            h.power_model = PowerModel::MBS_DEFAULT;
            h.green_powered = true;
            stations.push(h);
        }
        let mut association = BTreeMap::new();
        let mut se = BTreeMap::new();
        association.insert(UserId(0), StationId(0));
        se.insert((UserId(0), StationId(0)), 6.0);
        se.insert((UserId(0), StationId(99)), 1.0);
        for k in 1..=n_sbs {
            let u = UserId(10 * k);
            association.insert(u, StationId(k));
            se.insert((u, StationId(k)), 5.0);
            se.insert((u, StationId(0)), se_mbs);
            se.insert((u, StationId(99)), 1.0);
        }
        SwitchingNetwork::from_parts(stations, association, se).unwrap()
    }

    #[test]
    fn offload_requirement_examples() {
        let net = table_net(1, 6.658, false);
        assert_eq!(offload_requirement(&net, StationId(1), StationId(0), &[]).unwrap(), 0);
        let d = [LinkDemand::new(UserId(10), 1e6)];
        assert_eq!(offload_requirement(&net, StationId(1), StationId(0), &d).unwrap(), 1);
        let net = table_net(1, 3.335, false);
        assert_eq!(offload_requirement(&net, StationId(1), StationId(0), &d).unwrap(), 2);
    }

    #[test]
    fn feasibility_compares_free_rbs_with_offload() {
        // MBS own load: 50 RBs at SE 1 -> rate 50 * 180e3
        let net = table_net(1, 1.0, false);
        let own = LinkDemand::new(UserId(0), 50.0 * 180e3 * 6.0);
        let off: BTreeSet<_> = [StationId(1)].into_iter().collect();
        assert!(feasible(&net, &BTreeSet::new(), &[own]));
        let needs_30 = LinkDemand::new(UserId(10), 30.0 * 180e3);
        assert!(feasible(&net, &off, &[own, needs_30]));
        let needs_70 = LinkDemand::new(UserId(10), 70.0 * 180e3);
        assert!(!feasible(&net, &off, &[own, needs_70]));
        assert!(feasible(&net, &BTreeSet::new(), &[own, needs_70]));
    }

    #[test]
    fn backhaul_limits_offload() {
        let mut net = table_net(1, 6.0, false);
        net.stations[0].backhaul_capacity_bps = 2e6;
        let off: BTreeSet<_> = [StationId(1)].into_iter().collect();
        let d = [LinkDemand::new(UserId(0), 1.5e6), LinkDemand::new(UserId(10), 1e6)];
        assert!(feasible(&net, &BTreeSet::new(), &d));
        assert!(!feasible(&net, &off, &d));
    }

    #[test]
    fn idle_network_sleeps_every_sbs() {
        let net = table_net(3, 6.0, false);
        let p = CompressionProfile::uniform(0.0);
        let cfg = exhaustive_switch(&net, &[], &p).unwrap();
        assert_eq!(cfg.off_set.len(), 3);
        assert_eq!(cfg.feasible_count, 8);
        assert_eq!(cfg.total_power_w, Some(130.0 + 3.0 * 39.0));
        assert_eq!(greedy_switch(&net, &[], &p).unwrap().off_set, cfg.off_set);
    }

    #[test]
    fn hibs_hosts_what_the_mbs_cannot() {
        let net = table_net(2, 1.0, true);
        let d = [
            LinkDemand::new(UserId(0), 85.0 * 180e3 * 6.0),
            LinkDemand::new(UserId(10), 10.0 * 180e3),
            LinkDemand::new(UserId(20), 10.0 * 180e3),
        ];
        let cfg = exhaustive_switch(&net, &d, &CompressionProfile::uniform(0.0)).unwrap();
        assert_eq!(cfg.off_set.len(), 2);
        assert_eq!(cfg.offload_rbs[&StationId(0)], 10);
        assert_eq!(cfg.offload_rbs[&StationId(99)], 10);
        // green HIBS draws nothing from the grid
        let expected = 130.0 + 4.7 * 20.0 * 0.95 + 2.0 * 39.0;
        assert!((cfg.total_power_w.unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn exhaustive_guard() {
        let net = table_net(21, 6.0, false);
        assert!(matches!(
            exhaustive_switch(&net, &[], &CompressionProfile::uniform(0.0)),
            Err(Error::TooLargeForExhaustive { sbs_count: 21, .. })
        ));
    }

    #[test]
    fn single_sbs_greedy_matches_exhaustive() {
        let net = table_net(1, 2.0, false);
        let p = CompressionProfile::uniform(0.0);
        for rate in [0.0, 1e6, 5e6, 9e6, 2e7, 5e7] {
            let d = [LinkDemand::new(UserId(0), 4e6), LinkDemand::new(UserId(10), rate)];
            let g = greedy_switch(&net, &d, &p).unwrap();
            let e = exhaustive_switch(&net, &d, &p).unwrap();
            assert_eq!(g.off_set, e.off_set);
            assert_eq!(g.total_power_w, e.total_power_w);
        }
    }

    #[test]
    fn overloaded_mbs_makes_every_configuration_infeasible() {
        let net = table_net(2, 6.0, false);
        let d = [LinkDemand::new(UserId(0), 200.0 * 180e3 * 6.0)];
        let e = exhaustive_switch(&net, &d, &CompressionProfile::uniform(0.0)).unwrap();
        assert!(!e.feasible);
        assert_eq!(e.total_power_w, None);
        assert!(matches!(
            daily_energy(&net, &[d.to_vec()], &CompressionProfile::uniform(0.0), Optimizer::Exhaustive, 1.0),
            Err(Error::NoFeasibleConfig { slot: 0 })
        ));
    }

    #[test]
    fn zero_traffic_day_has_closed_form_energy() {
        let net = table_net(4, 6.0, false);
        let day = alloc::vec![Vec::new(); 24];
        let e = daily_energy(&net, &day, &CompressionProfile::uniform(0.0), Optimizer::Exhaustive, 1.0).unwrap();
        assert_eq!(e.total_wh, 24.0 * (130.0 + 4.0 * 39.0));
        assert_eq!(e.trace.len(), 24);
    }

    fn arb_instance() -> impl Strategy<Value = (u32, f64, Vec<f64>)> {
        (1u32..=5, 0.5f64..6.0).prop_flat_map(|(n, se)| {
            (Just(n), Just(se), proptest::collection::vec(0.0f64..3e6, (n + 1) as usize))
        })
    }

    proptest! {
        #[test]
        fn exhaustive_never_worse_than_greedy_or_all_on((n, se, rates) in arb_instance(), c in 0.0f64..0.9) {
            let net = table_net(n, se, false);
            let p = CompressionProfile::uniform(c);
            let mut d = alloc::vec![LinkDemand::new(UserId(0), rates[0])];
            for k in 1..=n {
                d.push(LinkDemand::new(UserId(10 * k), rates[k as usize]));
            }
            let e = exhaustive_switch(&net, &d, &p).unwrap();
            let g = greedy_switch(&net, &d, &p).unwrap();
            let a = all_on(&net, &d, &p).unwrap();
            prop_assert!(a.feasible);
            prop_assert!(e.total_power_w.unwrap() <= g.total_power_w.unwrap());
            prop_assert!(e.total_power_w.unwrap() <= a.total_power_w.unwrap());
            let own = net.load_table(&shape_link_demands(&d, &p)).unwrap().own_rbs[0];
            prop_assert!(e.offload_rbs[&StationId(0)] as u64 + own <= 100);
        }

        #[test]
        fn power_non_increasing_in_compression((n, se, rates) in arb_instance(), c in 0.0f64..0.85, dc in 0.0f64..0.1) {
            let net = table_net(n, se, false);
            let mut d = alloc::vec![LinkDemand::new(UserId(0), rates[0])];
            for k in 1..=n {
                d.push(LinkDemand::new(UserId(10 * k), rates[k as usize]));
            }
            let lo = exhaustive_switch(&net, &d, &CompressionProfile::uniform(c)).unwrap();
            let hi = exhaustive_switch(&net, &d, &CompressionProfile::uniform(c + dc)).unwrap();
            prop_assert!(hi.total_power_w.unwrap() <= lo.total_power_w.unwrap());
            prop_assert!(hi.feasible_count >= lo.feasible_count);
        }
    }
}
