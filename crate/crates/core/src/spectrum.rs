//! RB allocation over a shared band with utilization-coupled interference.
//!
//! Every station reuses the same band, so a user's SINR depends on how many
//! RBs the other stations occupy. The allocator iterates: utilizations give
//! SINRs, SINRs give RB needs, RB grants give new utilizations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::net::{rb_received_mw, required_rbs, se_per_rb, BaseStation, LinkBudgetParams, UserTerminal};
use crate::planner::CompressionProfile;
use crate::switching::LinkDemand;
use crate::units::{linear_to_db, StationId, UserId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub max_iters: u32,
    pub tol: f64,
    /// Weight of the new target in the utilization update.
    pub damping: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            max_iters: 50,
            tol: 1e-6,
            damping: 0.5,
        }
    }
}

/// Contiguous RBs `first_rb..first_rb + rbs` of one station granted to one user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RbGrant {
    pub station: StationId,
    pub user: UserId,
    pub first_rb: u32,
    pub rbs: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RbAllocation {
    /// Ordered by station id, then by RB index.
    pub grants: Vec<RbGrant>,
    /// Final SINR of every associated user, served or not.
    pub per_user_sinr: BTreeMap<UserId, f64>,
    /// SE of served users.
    pub per_user_se: BTreeMap<UserId, f64>,
    /// RBs granted per user. The first misfit of a station holds the leftover
    /// RBs while still counted unserved.
    pub per_user_rbs: BTreeMap<UserId, u32>,
    pub sum_se: f64,
    /// Users with positive demand that did not fit.
    pub unserved: BTreeSet<UserId>,
    /// Allocated RBs over `n_rbs`, per active station.
    pub utilization: BTreeMap<StationId, f64>,
    pub iterations: u32,
    pub converged: bool,
}

impl RbAllocation {
    /// `(station, rb index, user)` for every granted RB.
    pub fn assignments(&self) -> impl Iterator<Item = (StationId, u32, UserId)> + '_ {
        self.grants
            .iter()
            .flat_map(|g| (g.first_rb..g.first_rb + g.rbs).map(move |rb| (g.station, rb, g.user)))
    }

    pub fn serving_station(&self, user: UserId) -> Option<StationId> {
        self.grants.iter().find(|g| g.user == user).map(|g| g.station)
    }

    pub fn sinr_db(&self, user: UserId) -> Option<f64> {
        self.per_user_sinr.get(&user).map(|&s| linear_to_db(s))
    }
}

/// Stations, associated users and precomputed per-RB link gains.
#[derive(Debug, Clone)]
pub struct SpectrumNetwork {
    stations: Vec<BaseStation>,
    /// Associated users grouped by serving station, ascending id.
    served_by: BTreeMap<StationId, Vec<UserId>>,
    serving: BTreeMap<UserId, StationId>,
    /// Per-RB received power, `[user][station]` in mW.
    rx_mw: BTreeMap<UserId, Vec<f64>>,
    noise_mw: BTreeMap<UserId, f64>,
}

impl SpectrumNetwork {
    pub fn new(
        stations: Vec<BaseStation>,
        users: &[UserTerminal],
        association: &BTreeMap<UserId, StationId>,
        params: &LinkBudgetParams,
    ) -> Result<Self> {
        let mut stations = stations;
        stations.retain(|s| s.is_active());
        stations.sort_by_key(|s| s.id);
        let mut served_by: BTreeMap<StationId, Vec<UserId>> =
            stations.iter().map(|s| (s.id, Vec::new())).collect();
        let mut rx_mw = BTreeMap::new();
        let mut noise_mw = BTreeMap::new();
        let mut serving = BTreeMap::new();
        for u in users {
            let sid = *association.get(&u.id).ok_or(Error::UnknownUser(u.id))?;
            let bs = stations
                .iter()
                .find(|s| s.id == sid)
                .ok_or(Error::StationAsleep(sid))?;
            served_by.entry(sid).or_default().push(u.id);
            serving.insert(u.id, sid);
            let gains = stations
                .iter()
                .map(|s| rb_received_mw(s, u, params))
                .collect::<Result<Vec<_>>>()?;
            rx_mw.insert(u.id, gains);
            noise_mw.insert(u.id, params.rb_noise_mw(bs.rb_bandwidth_hz, u.noise_figure_db));
        }
        for v in served_by.values_mut() {
            v.sort();
        }
        Ok(SpectrumNetwork {
            stations,
            served_by,
            serving,
            rx_mw,
            noise_mw,
        })
    }

    pub fn stations(&self) -> &[BaseStation] {
        &self.stations
    }

    pub fn serving(&self, user: UserId) -> Option<StationId> {
        self.serving.get(&user).copied()
    }

    fn index_of(&self, id: StationId) -> usize {
        self.stations.iter().position(|s| s.id == id).expect("station present")
    }

    /// SINR of every user when the stations occupy `utilization` of their RBs.
    pub fn link_sinr(&self, utilization: &BTreeMap<StationId, f64>) -> BTreeMap<UserId, f64> {
        let u: Vec<f64> = self
            .stations
            .iter()
            .map(|s| utilization.get(&s.id).copied().unwrap_or(0.0))
            .collect();
        self.serving
            .iter()
            .map(|(&uid, &sid)| {
                let k = self.index_of(sid);
                let gains = &self.rx_mw[&uid];
                let interference: f64 = gains
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(j, &g)| u[j] * g)
                    .sum();
                (uid, gains[k] / (self.noise_mw[&uid] + interference))
            })
            .collect()
    }

    /// One allocation pass at fixed SINRs. Users are admitted in ascending
    /// id order; the first one whose need no longer fits gets the RBs that
    /// are left, so the band is used up, but is reported unserved together
    /// with everyone after it. A station is therefore either fully occupied
    /// or carries its whole demand, which keeps utilization monotone in
    /// interference.
    fn allocate_at(&self, sinr: &BTreeMap<UserId, f64>, rates: &BTreeMap<UserId, f64>) -> RbAllocation {
        let mut out = RbAllocation {
            per_user_sinr: sinr.clone(),
            ..RbAllocation::default()
        };
        for bs in &self.stations {
            let mut next_rb = 0u32;
            for &uid in &self.served_by[&bs.id] {
                let rate = rates.get(&uid).copied().unwrap_or(0.0);
                if rate <= 0.0 {
                    continue;
                }
                let free = bs.n_rbs - next_rb;
                let se = se_per_rb(sinr[&uid]);
                let need = required_rbs(rate, se, bs.rb_bandwidth_hz, uid).ok();
                let (rbs, served) = match need {
                    Some(k) if k <= free => (k, true),
                    _ => (free, false),
                };
                if rbs > 0 {
                    out.grants.push(RbGrant {
                        station: bs.id,
                        user: uid,
                        first_rb: next_rb,
                        rbs,
                    });
                    next_rb += rbs;
                    out.per_user_rbs.insert(uid, rbs);
                }
                if served {
                    out.per_user_se.insert(uid, se);
                } else {
                    out.unserved.insert(uid);
                }
            }
            assert!(next_rb <= bs.n_rbs, "station {} over-allocated", bs.id);
            out.utilization.insert(bs.id, next_rb as f64 / bs.n_rbs as f64);
        }
        out.sum_se = sum_spectral_efficiency(&out);
        out
    }
}

/// Fixed-point RB allocation for already shaped per-user rates.
///
/// Starts from full utilization everywhere. The first update jumps straight
/// to the computed utilization; later ones are damped, except that a target
/// repeated twice in a row is adopted as is. Stops once the allocation
/// reproduces the utilization it was computed from (within `tol`).
///
/// Because a pass either fills a station or carries all of its demand, the
/// computed utilization only grows with the utilization it is fed. Starting
/// from the top, the iterates therefore descend onto the greatest fixed point
/// instead of cycling.
pub fn allocate_rbs(
    net: &SpectrumNetwork,
    rates: &BTreeMap<UserId, f64>,
    options: &FixedPointOptions,
) -> Result<RbAllocation> {
    if options.max_iters == 0 {
        return Err(Error::param("max_iters", "must be >= 1"));
    }
    if !(options.tol > 0.0) {
        return Err(Error::param("tol", "must be > 0"));
    }
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::param("damping", "must lie in (0, 1]"));
    }

    let mut u: BTreeMap<StationId, f64> = net.stations.iter().map(|s| (s.id, 1.0)).collect();
    let mut prev_target: Option<BTreeMap<StationId, f64>> = None;
    let mut iter = 0;
    loop {
        iter += 1;
        let mut alloc = net.allocate_at(&net.link_sinr(&u), rates);
        let target = &alloc.utilization;
        let delta = target
            .iter()
            .map(|(id, &t)| libm::fabs(t - u[id]))
            .fold(0.0, f64::max);
        if delta < options.tol || iter >= options.max_iters {
            alloc.iterations = iter;
            alloc.converged = delta < options.tol;
            return Ok(alloc);
        }
        let jump = iter == 1 || prev_target.as_ref() == Some(target);
        for (id, v) in u.iter_mut() {
            let t = target[id];
            *v = if jump { t } else { *v + options.damping * (t - *v) };
        }
        prev_target = Some(alloc.utilization);
    }
}

/// Sum over served users of `log2(1 + SINR)`.
pub fn sum_spectral_efficiency(alloc: &RbAllocation) -> f64 {
    alloc
        .per_user_rbs
        .iter()
        .filter(|(uid, &rbs)| rbs > 0 && !alloc.unserved.contains(uid))
        .map(|(uid, _)| se_per_rb(alloc.per_user_sinr.get(uid).copied().unwrap_or(0.0)))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackhaulAdmission {
    pub shaping_triggered: bool,
    /// Rate carried over the backhaul after any shaping.
    pub carried_bps: f64,
}

/// Checks carried demand against the station's backhaul, shaping once with
/// `profile` when the raw demand does not fit.
pub fn backhaul_admission(
    station: &BaseStation,
    demands: &[LinkDemand],
    profile: &CompressionProfile,
) -> Result<BackhaulAdmission> {
    let raw: f64 = demands.iter().map(|d| d.rate_bps).sum();
    if raw <= station.backhaul_capacity_bps {
        return Ok(BackhaulAdmission {
            shaping_triggered: false,
            carried_bps: raw,
        });
    }
    let shaped: f64 = demands.iter().map(|d| d.shaped(profile).rate_bps).sum();
    if shaped <= station.backhaul_capacity_bps {
        Ok(BackhaulAdmission {
            shaping_triggered: true,
            carried_bps: shaped,
        })
    } else {
        Err(Error::BackhaulCongested {
            station: station.id,
            carried_bps: shaped,
            capacity_bps: station.backhaul_capacity_bps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::fixtures::{station, user_at};
    use crate::net::{associate_users, Tier};
    use proptest::prelude::*;

    #[test]
    fn zero_demand_is_an_empty_allocation() {
        let p = LinkBudgetParams::default();
        let stations = alloc::vec![station(1, Tier::Mbs, 0.0, 0.0, 25.0, 43.0)];
        let users = [user_at(1, 100.0, 0.0, 1.5)];
        let assoc = associate_users(&users, &stations, &p).unwrap();
        let net = SpectrumNetwork::new(stations, &users, &assoc, &p).unwrap();
        let rates = [(UserId(1), 0.0)].into_iter().collect();
        let a = allocate_rbs(&net, &rates, &FixedPointOptions::default()).unwrap();
        assert_eq!(a.sum_se, 0.0);
        assert_eq!(a.utilization[&StationId(1)], 0.0);
        assert!(a.grants.is_empty());
        assert!(a.converged);
    }

    #[test]
    fn isolated_station_converges_in_two_iterations() {
        let p = LinkBudgetParams::default();
        let stations = alloc::vec![station(1, Tier::Mbs, 0.0, 0.0, 25.0, 43.0)];
        let users = [user_at(1, 200.0, 0.0, 1.5)];
        let assoc = associate_users(&users, &stations, &p).unwrap();
        let net = SpectrumNetwork::new(stations.clone(), &users, &assoc, &p).unwrap();

        let sinr = rb_received_mw(&stations[0], &users[0], &p).unwrap() / p.rb_noise_mw(180e3, 9.0);
        let se = se_per_rb(sinr);
        let rate = 7.5 * se * 180e3; // needs 8 RBs
        let rates = [(UserId(1), rate)].into_iter().collect();
        let a = allocate_rbs(&net, &rates, &FixedPointOptions::default()).unwrap();
        assert_eq!(a.per_user_rbs[&UserId(1)], 8);
        assert_eq!(a.utilization[&StationId(1)], 0.08);
        assert_eq!(a.iterations, 2);
        assert!(a.converged);
        assert!(((a.sum_se - se) / se).abs() < 1e-12);
    }

    #[test]
    fn sum_se_examples() {
        assert_eq!(sum_spectral_efficiency(&RbAllocation::default()), 0.0);
        let mut a = RbAllocation::default();
        a.per_user_sinr.insert(UserId(1), 100.0);
        a.per_user_rbs.insert(UserId(1), 3);
        assert!((sum_spectral_efficiency(&a) - 6.65821).abs() < 1e-5);
        a.per_user_sinr.insert(UserId(2), 1e-9 / 1.1e-10);
        a.per_user_rbs.insert(UserId(2), 1);
        assert!((sum_spectral_efficiency(&a) - 9.99321).abs() < 1e-4);
        // unserved users do not count, even holding leftover RBs
        a.per_user_sinr.insert(UserId(3), 50.0);
        a.per_user_rbs.insert(UserId(3), 2);
        a.unserved.insert(UserId(3));
        assert!((sum_spectral_efficiency(&a) - 9.99321).abs() < 1e-4);
    }

    #[test]
    fn first_misfit_takes_the_leftover_and_is_unserved() {
        let p = LinkBudgetParams::default();
        let mut bs = station(1, Tier::Mbs, 0.0, 0.0, 25.0, 43.0);
        bs.n_rbs = 10;
        let users = [user_at(1, 100.0, 0.0, 1.5), user_at(2, 0.0, 100.0, 1.5), user_at(3, -100.0, 0.0, 1.5)];
        let assoc = associate_users(&users, &[bs.clone()], &p).unwrap();
        let net = SpectrumNetwork::new(alloc::vec![bs.clone()], &users, &assoc, &p).unwrap();
        let se = se_per_rb(rb_received_mw(&bs, &users[0], &p).unwrap() / p.rb_noise_mw(180e3, 9.0));
        let per_rb = se * 180e3;
        let rates = [
            (UserId(1), 6.0 * per_rb),
            (UserId(2), 6.0 * per_rb),
            (UserId(3), 1.0 * per_rb),
        ]
        .into_iter()
        .collect();
        let a = allocate_rbs(&net, &rates, &FixedPointOptions::default()).unwrap();
        assert_eq!(a.per_user_rbs[&UserId(1)], 6);
        assert_eq!(a.per_user_rbs[&UserId(2)], 4);
        assert!(!a.per_user_rbs.contains_key(&UserId(3)));
        assert_eq!(a.unserved, [UserId(2), UserId(3)].into_iter().collect());
        assert_eq!(a.utilization[&StationId(1)], 1.0);
        assert_eq!(a.per_user_se.len(), 1);
        assert!(((a.sum_se - se) / se).abs() < 1e-12);
    }

    #[test]
    fn backhaul_examples() {
        let mut bs = station(1, Tier::Hibs, 0.0, 0.0, 20_000.0, 40.0);
        bs.backhaul_capacity_bps = 100e6;
        let p = CompressionProfile::uniform(0.2);
        let ok = backhaul_admission(&bs, &[LinkDemand::new(UserId(1), 10e6)], &p).unwrap();
        assert!(!ok.shaping_triggered);
        let shaped = backhaul_admission(&bs, &[LinkDemand::new(UserId(1), 120e6)], &p).unwrap();
        assert!(shaped.shaping_triggered);
        assert_eq!(shaped.carried_bps, 96e6);
        assert!(matches!(
            backhaul_admission(&bs, &[LinkDemand::new(UserId(1), 200e6)], &p),
            Err(Error::BackhaulCongested { .. })
        ));
    }

    #[test]
    fn rejects_bad_options() {
        let p = LinkBudgetParams::default();
        let stations = alloc::vec![station(1, Tier::Mbs, 0.0, 0.0, 25.0, 43.0)];
        let net = SpectrumNetwork::new(stations, &[], &BTreeMap::new(), &p).unwrap();
        let bad = FixedPointOptions {
            max_iters: 0,
            ..FixedPointOptions::default()
        };
        assert!(allocate_rbs(&net, &BTreeMap::new(), &bad).is_err());
    }

    fn three_station_net(xs: &[(f64, f64)], users: &[(f64, f64)]) -> SpectrumNetwork {
        let p = LinkBudgetParams::default();
        let stations: Vec<_> = xs
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| station(i as u32, Tier::Mbs, x, y, 25.0, 43.0))
            .collect();
        let users: Vec<_> = users
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| user_at(i as u32, x, y, 1.5))
            .collect();
        let assoc = associate_users(&users, &stations, &p).unwrap();
        SpectrumNetwork::new(stations, &users, &assoc, &p).unwrap()
    }

    proptest! {
        #[test]
        fn lowering_one_utilization_never_lowers_others_sinr(
            xs in proptest::collection::vec((-800.0f64..800.0, -800.0f64..800.0), 3),
            users in proptest::collection::vec((-1000.0f64..1000.0, -1000.0f64..1000.0), 1..10),
            u in proptest::collection::vec(0.0f64..=1.0, 3),
            which in 0usize..3,
            cut in 0.0f64..=1.0,
        ) {
            let net = three_station_net(&xs, &users);
            let before: BTreeMap<_, _> = net.stations().iter().zip(&u).map(|(s, &v)| (s.id, v)).collect();
            let mut after = before.clone();
            let id = net.stations()[which].id;
            *after.get_mut(&id).unwrap() *= cut;
            let a = net.link_sinr(&before);
            let b = net.link_sinr(&after);
            for (uid, &s) in &a {
                prop_assert!(se_per_rb(b[uid]) >= se_per_rb(s));
            }
        }

        #[test]
        fn allocation_respects_capacity(
            xs in proptest::collection::vec((-800.0f64..800.0, -800.0f64..800.0), 3),
            users in proptest::collection::vec((-1000.0f64..1000.0, -1000.0f64..1000.0, 0.0f64..2e7), 1..20),
        ) {
            let pos: Vec<_> = users.iter().map(|&(x, y, _)| (x, y)).collect();
            let net = three_station_net(&xs, &pos);
            let rates = users.iter().enumerate().map(|(i, &(_, _, r))| (UserId(i as u32), r)).collect();
            let a = allocate_rbs(&net, &rates, &FixedPointOptions::default()).unwrap();
            let mut seen = BTreeSet::new();
            for (sid, rb, _) in a.assignments() {
                prop_assert!(seen.insert((sid, rb)));
            }
            for bs in net.stations() {
                let used: u32 = a.grants.iter().filter(|g| g.station == bs.id).map(|g| g.rbs).sum();
                prop_assert!(used <= bs.n_rbs);
                prop_assert_eq!(a.utilization[&bs.id], used as f64 / bs.n_rbs as f64);
            }
            let recomputed: f64 = a.per_user_se.values().sum();
            prop_assert!((recomputed - a.sum_se).abs() <= 1e-9 * recomputed.max(1.0));
        }

        #[test]
        fn fixed_point_always_converges(
            xs in proptest::collection::vec((0.0f64..1000.0, 0.0f64..1000.0), 3),
            users in proptest::collection::vec((0.0f64..1000.0, 0.0f64..1000.0, 1e5f64..2e7), 1..20),
        ) {
            let pos: Vec<_> = users.iter().map(|&(x, y, _)| (x, y)).collect();
            let net = three_station_net(&xs, &pos);
            let rates = users.iter().enumerate().map(|(i, &(_, _, r))| (UserId(i as u32), r)).collect();
            let a = allocate_rbs(&net, &rates, &FixedPointOptions::default()).unwrap();
            prop_assert!(a.converged, "{} iterations", a.iterations);
        }
    }
}
