//! Topology and physical-layer model.
//!
//! All link arithmetic happens in linear units (milliwatts, ratios); dB and
//! dBm only appear on struct fields and return values of the `*_db` helpers.

use alloc::collections::BTreeMap;
use alloc::format;

use crate::error::{Error, Result};
use crate::switching::PowerModel;
use crate::units::{ceil_snapped, dbm_to_mw, StationId, UserId};

/// HIBS platforms fly in the stratosphere.
pub const HIBS_ALTITUDE_RANGE_M: (f64, f64) = (18_000.0, 25_000.0);

/// Default user-terminal antenna height.
pub const DEFAULT_UE_HEIGHT_M: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Position {
    pub x: f64,
    pub y: f64,
    /// Altitude above ground.
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Position { x, y, z }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        libm::sqrt(dx * dx + dy * dy + dz * dz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Tier {
    Mbs,
    Sbs,
    Hibs,
}

impl Tier {
    pub fn is_terrestrial(self) -> bool {
        !matches!(self, Tier::Hibs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum StationState {
    #[default]
    Active,
    Sleep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseStation {
    pub id: StationId,
    pub tier: Tier,
    pub pos: Position,
    /// Total transmit power, split evenly over `n_rbs`.
    pub tx_power_dbm: f64,
    pub n_rbs: u32,
    pub rb_bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub power_model: PowerModel,
    /// `f64::INFINITY` for fiber backhaul.
    pub backhaul_capacity_bps: f64,
    pub state: StationState,
    /// Powered from on-site renewables; left out of grid energy totals.
    pub green_powered: bool,
}

impl BaseStation {
    pub fn is_active(&self) -> bool {
        self.state == StationState::Active
    }

    /// Per-RB transmit power under an equal split.
    pub fn per_rb_tx_dbm(&self) -> f64 {
        self.tx_power_dbm - 10.0 * libm::log10(self.n_rbs as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rbs == 0 {
            return Err(Error::param("n_rbs", format!("station {}: must be >= 1", self.id)));
        }
        if !(self.rb_bandwidth_hz > 0.0) {
            return Err(Error::param(
                "rb_bandwidth_hz",
                format!("station {}: must be > 0", self.id),
            ));
        }
        if !(self.carrier_hz > 0.0) {
            return Err(Error::param("carrier_hz", format!("station {}: must be > 0", self.id)));
        }
        if !(self.pos.z >= 0.0) {
            return Err(Error::param("pos.z", format!("station {}: must be >= 0", self.id)));
        }
        if self.tier == Tier::Hibs {
            let (lo, hi) = HIBS_ALTITUDE_RANGE_M;
            if !(lo..=hi).contains(&self.pos.z) {
                return Err(Error::param(
                    "pos.z",
                    format!("station {}: HIBS altitude must lie in [{lo}, {hi}] m", self.id),
                ));
            }
        }
        if !(self.backhaul_capacity_bps > 0.0) {
            return Err(Error::param(
                "backhaul_capacity_bps",
                format!("station {}: must be > 0", self.id),
            ));
        }
        self.power_model.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UserTerminal {
    pub id: UserId,
    pub pos: Position,
    pub noise_figure_db: f64,
    pub serving_bs: Option<StationId>,
}

impl UserTerminal {
    pub fn new(id: UserId, x: f64, y: f64) -> Self {
        UserTerminal {
            id,
            pos: Position::new(x, y, DEFAULT_UE_HEIGHT_M),
            noise_figure_db: 9.0,
            serving_bs: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct LinkBudgetParams {
    pub pl_exponent_terrestrial: f64,
    /// Path loss at `ref_distance_m`.
    pub pl_ref_db: f64,
    pub ref_distance_m: f64,
    pub noise_psd_dbm_hz: f64,
}

impl Default for LinkBudgetParams {
    fn default() -> Self {
        LinkBudgetParams {
            pl_exponent_terrestrial: 3.7,
            pl_ref_db: 38.0,
            ref_distance_m: 10.0,
            noise_psd_dbm_hz: -174.0,
        }
    }
}

impl LinkBudgetParams {
    pub fn validate(&self) -> Result<()> {
        if !(2.0..=6.0).contains(&self.pl_exponent_terrestrial) {
            return Err(Error::param("pl_exponent_terrestrial", "must lie in [2, 6]"));
        }
        if !(self.ref_distance_m > 0.0) {
            return Err(Error::param("ref_distance_m", "must be > 0"));
        }
        Ok(())
    }

    /// Noise power over one RB at a receiver with the given noise figure, in mW.
    pub fn rb_noise_mw(&self, rb_bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
        dbm_to_mw(self.noise_psd_dbm_hz + 10.0 * libm::log10(rb_bandwidth_hz) + noise_figure_db)
    }
}

/// Log-distance path loss for terrestrial tiers, free-space over the slant
/// range for HIBS.
pub fn path_loss_db(tx: &BaseStation, rx: &UserTerminal, params: &LinkBudgetParams) -> Result<f64> {
    path_loss_at(tx.tier, tx.carrier_hz, tx.pos.distance(&rx.pos), params)
}

pub(crate) fn path_loss_at(
    tier: Tier,
    carrier_hz: f64,
    d: f64,
    params: &LinkBudgetParams,
) -> Result<f64> {
    if !(d >= params.ref_distance_m) {
        return Err(Error::DegenerateGeometry {
            distance_m: d,
            ref_distance_m: params.ref_distance_m,
        });
    }
    Ok(match tier {
        Tier::Mbs | Tier::Sbs => {
            params.pl_ref_db
                + 10.0 * params.pl_exponent_terrestrial * libm::log10(d / params.ref_distance_m)
        }
        Tier::Hibs => {
            // slant range in km, carrier in MHz
            20.0 * libm::log10(d / 1000.0) + 20.0 * libm::log10(carrier_hz / 1e6) + 32.44
        }
    })
}

/// Received power over the whole band (dBm). Used for association.
pub fn received_power_dbm(tx: &BaseStation, rx: &UserTerminal, params: &LinkBudgetParams) -> Result<f64> {
    Ok(tx.tx_power_dbm - path_loss_db(tx, rx, params)?)
}

/// Received power on a single RB, in mW.
pub fn rb_received_mw(tx: &BaseStation, rx: &UserTerminal, params: &LinkBudgetParams) -> Result<f64> {
    Ok(dbm_to_mw(tx.per_rb_tx_dbm() - path_loss_db(tx, rx, params)?))
}

/// `S / (N + sum u_i * I_i)` with everything in mW.
pub fn sinr_from_powers(signal_mw: f64, interference: &[(f64, f64)], noise_mw: f64) -> f64 {
    let i: f64 = interference.iter().map(|&(p, u)| u * p).sum();
    signal_mw / (noise_mw + i)
}

/// Downlink SINR of `user` on one RB of `serving`, with each interferer's
/// contribution scaled by its RB utilization.
pub fn sinr_linear(
    user: &UserTerminal,
    serving: &BaseStation,
    interferers: &[(&BaseStation, f64)],
    params: &LinkBudgetParams,
) -> Result<f64> {
    if !serving.is_active() {
        return Err(Error::StationAsleep(serving.id));
    }
    let signal = rb_received_mw(serving, user, params)?;
    let noise = params.rb_noise_mw(serving.rb_bandwidth_hz, user.noise_figure_db);
    let mut interference = 0.0;
    for &(bs, u) in interferers {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::InvalidLoad(u));
        }
        interference += u * rb_received_mw(bs, user, params)?;
    }
    Ok(signal / (noise + interference))
}

/// Shannon spectral efficiency of one RB.
pub fn se_per_rb(sinr: f64) -> f64 {
    libm::log2(1.0 + sinr)
}

/// RBs needed to carry `rate_bps` at spectral efficiency `se`.
pub fn required_rbs(rate_bps: f64, se: f64, rb_bandwidth_hz: f64, user: UserId) -> Result<u32> {
    if rate_bps <= 0.0 {
        return Ok(0);
    }
    if !(se > 0.0) {
        return Err(Error::Unservable(user));
    }
    let rbs = ceil_snapped(rate_bps / (se * rb_bandwidth_hz));
    Ok(if rbs >= u32::MAX as f64 { u32::MAX } else { rbs as u32 })
}

/// Assigns every user to the active station with the strongest received
/// power. Ties go to the smaller station id.
pub fn associate_users(
    users: &[UserTerminal],
    stations: &[BaseStation],
    params: &LinkBudgetParams,
) -> Result<BTreeMap<UserId, StationId>> {
    let mut active: alloc::vec::Vec<&BaseStation> = stations.iter().filter(|s| s.is_active()).collect();
    if active.is_empty() {
        return Err(Error::NoCoverage);
    }
    active.sort_by_key(|s| s.id);

    let mut out = BTreeMap::new();
    for user in users {
        let mut best: Option<(StationId, f64)> = None;
        for bs in &active {
            let p = received_power_dbm(bs, user, params)?;
            // strict comparison keeps the first (smallest id) on ties
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((bs.id, p));
            }
        }
        let (id, _) = best.expect("at least one active station");
        out.insert(user.id, id);
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn path_loss_reference_distance_identity() {
        let p = LinkBudgetParams::default();
        let bs = station(1, Tier::Sbs, 0.0, 0.0, 0.0, 30.0);
        let ue = user_at(1, 10.0, 0.0, 0.0);
        assert!((path_loss_db(&bs, &ue, &p).unwrap() - 38.0).abs() < 1e-12);
    }

    #[test]
    fn path_loss_log_distance() {
        let p = LinkBudgetParams::default();
        let bs = station(1, Tier::Mbs, 0.0, 0.0, 0.0, 43.0);
        let ue = user_at(1, 100.0, 0.0, 0.0);
        assert!((path_loss_db(&bs, &ue, &p).unwrap() - 75.0).abs() < 1e-12);
    }

    #[test]
    fn path_loss_free_space_for_hibs() {
        let p = LinkBudgetParams::default();
        let bs = station(1, Tier::Hibs, 0.0, 0.0, 20_000.0, 40.0);
        let ue = user_at(1, 0.0, 0.0, 0.0);
        // 20 log10(20 km) + 20 log10(2000 MHz) + 32.44
        let expected = 26.020599913279625 + 66.02059991327963 + 32.44;
        assert!((path_loss_db(&bs, &ue, &p).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 124.48).abs() < 0.01);
    }

    #[test]
    fn path_loss_rejects_short_links() {
        let p = LinkBudgetParams::default();
        let bs = station(1, Tier::Sbs, 0.0, 0.0, 0.0, 30.0);
        let ue = user_at(1, 5.0, 0.0, 0.0);
        assert!(matches!(
            path_loss_db(&bs, &ue, &p),
            Err(Error::DegenerateGeometry { .. })
        ));
    }

    #[test]
    fn sinr_examples() {
        let s = 1e-9; // -90 dBm
        let n = 1e-11; // -110 dBm
        assert!(rel(sinr_from_powers(s, &[], n), 100.0) < 1e-12);
        let with_i = sinr_from_powers(s, &[(1e-10, 1.0)], n);
        assert!(rel(with_i, 1e-9 / 1.1e-10) < 1e-12);
        assert!((with_i - 9.0909).abs() < 1e-4);
        assert!(rel(sinr_from_powers(s, &[(1e-10, 0.0)], n), 100.0) < 1e-12);
    }

    #[test]
    fn se_examples() {
        assert_eq!(se_per_rb(0.0), 0.0);
        assert!((se_per_rb(100.0) - 6.65821).abs() < 1e-5);
        assert!((se_per_rb(1e-9 / 1.1e-10) - 3.33500).abs() < 1e-4);
        assert!((se_per_rb(1e-9 / 1.1e-10) - (1.0f64 + 1e-9 / 1.1e-10).log2()).abs() < 1e-15);
    }

    #[test]
    fn required_rbs_examples() {
        let u = UserId(0);
        assert_eq!(required_rbs(0.0, 3.335, 180e3, u).unwrap(), 0);
        assert_eq!(required_rbs(0.0, 0.0, 180e3, u).unwrap(), 0);
        assert_eq!(required_rbs(1e6, 3.335, 180e3, u).unwrap(), 2);
        assert_eq!(required_rbs(600_300.0, 3.335, 180e3, u).unwrap(), 1);
        assert_eq!(required_rbs(600_301.0, 3.335, 180e3, u).unwrap(), 2);
        assert_eq!(required_rbs(1.0, 0.0, 180e3, u), Err(Error::Unservable(u)));
    }

    #[test]
    fn association_examples() {
        let p = LinkBudgetParams::default();
        let single = [station(7, Tier::Mbs, 0.0, 0.0, 0.0, 43.0)];
        let ue = user_at(1, 200.0, 0.0, 0.0);
        assert_eq!(associate_users(std::slice::from_ref(&ue), &single, &p).unwrap()[&UserId(1)], StationId(7));

        // equidistant, identical: the smaller id wins regardless of list order
        let pair = [
            station(2, Tier::Sbs, 100.0, 0.0, 0.0, 30.0),
            station(1, Tier::Sbs, -100.0, 0.0, 0.0, 30.0),
        ];
        let mid = user_at(1, 0.0, 0.0, 0.0);
        assert_eq!(associate_users(&[mid], &pair, &p).unwrap()[&UserId(1)], StationId(1));

        // SBS at 50 m (30 dBm) vs MBS at 500 m (43 dBm):
        // 30 - (38 + 37 log10 5) = -33.86 dBm against 43 - (38 + 37 log10 50) = -57.86 dBm
        let mixed = [
            station(1, Tier::Mbs, 0.0, 0.0, 0.0, 43.0),
            station(2, Tier::Sbs, 550.0, 0.0, 0.0, 30.0),
        ];
        let ue = user_at(1, 500.0, 0.0, 0.0);
        let sbs_rx = 30.0 - (38.0 + 37.0 * 5f64.log10());
        let mbs_rx = 43.0 - (38.0 + 37.0 * 50f64.log10());
        assert!(sbs_rx > mbs_rx);
        assert_eq!(associate_users(&[ue], &mixed, &p).unwrap()[&UserId(1)], StationId(2));
    }

    #[test]
    fn association_needs_an_active_station() {
        let p = LinkBudgetParams::default();
        let mut bs = station(1, Tier::Mbs, 0.0, 0.0, 0.0, 43.0);
        bs.state = StationState::Sleep;
        assert_eq!(
            associate_users(&[user_at(1, 50.0, 0.0, 0.0)], &[bs], &p),
            Err(Error::NoCoverage)
        );
    }

    #[test]
    fn hibs_altitude_is_validated() {
        let mut bs = station(1, Tier::Hibs, 0.0, 0.0, 20_000.0, 40.0);
        assert!(bs.validate().is_ok());
        bs.pos.z = 5_000.0;
        assert!(bs.validate().is_err());
    }

    proptest! {
        #[test]
        fn path_loss_monotone_in_distance(d1 in 10.0f64..50_000.0, extra in 0.0f64..50_000.0, hibs in any::<bool>()) {
            let p = LinkBudgetParams::default();
            let tier = if hibs { Tier::Hibs } else { Tier::Mbs };
            let a = path_loss_at(tier, 2e9, d1, &p).unwrap();
            let b = path_loss_at(tier, 2e9, d1 + extra, &p).unwrap();
            prop_assert!(b >= a);
        }

        #[test]
        fn lowering_interference_never_lowers_sinr(
            s in 1e-12f64..1e-6,
            n in 1e-14f64..1e-10,
            powers in proptest::collection::vec((1e-13f64..1e-7, 0.0f64..=1.0), 0..6),
            pick in 0usize..6,
            cut in 0.0f64..=1.0,
        ) {
            let base = sinr_from_powers(s, &powers, n);
            let mut reduced = powers.clone();
            if !reduced.is_empty() {
                let k = pick % reduced.len();
                reduced[k].1 *= cut;
            }
            prop_assert!(sinr_from_powers(s, &reduced, n) >= base);
            let mut removed = powers.clone();
            if !removed.is_empty() {
                removed.remove(pick % powers.len());
            }
            prop_assert!(sinr_from_powers(s, &removed, n) >= base);
        }

        #[test]
        fn se_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(se_per_rb(lo) <= se_per_rb(hi));
        }

        #[test]
        fn required_rbs_monotone(rate in 0.0f64..1e9, extra in 0.0f64..1e9, se in 0.01f64..10.0, se_up in 0.0f64..10.0) {
            let u = UserId(0);
            let base = required_rbs(rate, se, 180e3, u).unwrap();
            prop_assert!(required_rbs(rate + extra, se, 180e3, u).unwrap() >= base);
            prop_assert!(required_rbs(rate, se + se_up, 180e3, u).unwrap() <= base);
        }

        #[test]
        fn association_invariant_under_uniform_power_offset(
            coords in proptest::collection::vec((-1000.0f64..1000.0, -1000.0f64..1000.0, 20.0f64..47.0), 1..6),
            ux in -2000.0f64..2000.0,
            uy in -2000.0f64..2000.0,
            offset in -20.0f64..20.0,
        ) {
            let p = LinkBudgetParams::default();
            let stations: alloc::vec::Vec<_> = coords.iter().enumerate()
                .map(|(i, &(x, y, tx))| station(i as u32, Tier::Mbs, x, y, 30.0, tx))
                .collect();
            let shifted: alloc::vec::Vec<_> = stations.iter().cloned()
                .map(|mut s| { s.tx_power_dbm += offset; s })
                .collect();
            let ue = user_at(0, ux, uy, 1.5);
            let far_enough = stations.iter().all(|s| s.pos.distance(&ue.pos) >= 10.0);
            prop_assume!(far_enough);
            let a = associate_users(std::slice::from_ref(&ue), &stations, &p).unwrap();
            let b = associate_users(&[ue], &shifted, &p).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
