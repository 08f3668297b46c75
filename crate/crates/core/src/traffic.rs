//! Traffic inputs: Milan-style CDR records and synthetic diurnal series.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::planner::ContentType;
use crate::switching::LinkDemand;
use crate::units::{StationId, UserId};

/// CDR records are aggregated over ten-minute intervals.
pub const CDR_INTERVAL_MS: u64 = 600_000;
const DAY_MS: u64 = 86_400_000;
const HOUR_MS: u64 = 3_600_000;

/// One row of the telecommunications activity dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct CdrRecord {
    pub square_id: u32,
    /// Start of the ten-minute interval, epoch milliseconds.
    pub timestamp_ms: u64,
    pub country_code: u32,
    pub sms_in: Option<f64>,
    pub sms_out: Option<f64>,
    pub call_in: Option<f64>,
    pub call_out: Option<f64>,
    pub internet: Option<f64>,
}

/// Parses one tab-separated CDR line. `line_no` is only used in errors.
///
/// Fields: square id, timestamp, country code, sms in, sms out, call in,
/// call out, internet. Empty activity fields (including missing trailing
/// ones) are absent.
pub fn parse_milan_cdr(line: &str, line_no: usize) -> Result<CdrRecord> {
    let err = |reason: String| Error::Parse {
        line: line_no,
        reason,
    };
    let line = line.trim_end_matches(['\r', '\n']);
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 3 {
        return Err(err(format!("expected at least 3 fields, found {}", fields.len())));
    }
    if fields.len() > 8 {
        return Err(err(format!("expected at most 8 fields, found {}", fields.len())));
    }
    let square_id: u32 = fields[0]
        .trim()
        .parse()
        .map_err(|_| err(format!("malformed square id {:?}", fields[0])))?;
    let timestamp_ms: u64 = fields[1]
        .trim()
        .parse()
        .map_err(|_| err(format!("malformed timestamp {:?}", fields[1])))?;
    if !timestamp_ms.is_multiple_of(CDR_INTERVAL_MS) {
        return Err(err(format!("timestamp {timestamp_ms} not on a 10-minute boundary")));
    }
    let country_code: u32 = fields[2]
        .trim()
        .parse()
        .map_err(|_| err(format!("malformed country code {:?}", fields[2])))?;

    let mut activity = [None; 5];
    for (slot, raw) in activity.iter_mut().zip(fields[3..].iter()) {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let v: f64 = raw
            .parse()
            .map_err(|_| err(format!("malformed activity value {raw:?}")))?;
        if !v.is_finite() || v < 0.0 {
            return Err(err(format!("negative or non-finite activity {raw}")));
        }
        *slot = Some(v);
    }
    let [sms_in, sms_out, call_in, call_out, internet] = activity;
    Ok(CdrRecord {
        square_id,
        timestamp_ms,
        country_code,
        sms_in,
        sms_out,
        call_in,
        call_out,
        internet,
    })
}

/// Aggregate demand of one station, slot by slot.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSeries {
    pub station_id: StationId,
    /// `(slot index, bits)`, strictly increasing slot indices.
    pub slots: Vec<(u32, f64)>,
}

impl DemandSeries {
    pub fn total_bits(&self) -> f64 {
        self.slots.iter().map(|&(_, b)| b).sum()
    }

    /// Bits in `slot`, zero when the slot is missing.
    pub fn bits_at(&self, slot: u32) -> f64 {
        self.slots
            .binary_search_by_key(&slot, |&(s, _)| s)
            .map(|i| self.slots[i].1)
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Aggregation {
    /// Sorted by station, then slot.
    pub series: Vec<DemandSeries>,
    /// Records per square that had no station mapping.
    pub unmapped: BTreeMap<u32, usize>,
    /// Epoch milliseconds of slot 0.
    pub origin_ms: u64,
}

/// Grid squares split into `n_stations` contiguous, equally sized blocks.
pub fn uniform_square_mapping(n_squares: u32, n_stations: u32) -> BTreeMap<u32, StationId> {
    (1..=n_squares)
        .map(|sq| {
            let k = ((sq - 1) as u64 * n_stations as u64 / n_squares as u64) as u32;
            (sq, StationId(k))
        })
        .collect()
}

/// Sums internet activity per station and slot, scaled to bits.
///
/// Slot 0 starts at midnight (UTC) of the earliest record's day. Records are
/// summed in input order.
pub fn aggregate_demands(
    records: &[CdrRecord],
    mapping: &BTreeMap<u32, StationId>,
    scale_bits_per_unit: f64,
    slot_hours: u32,
) -> Result<Aggregation> {
    if slot_hours == 0 || 24 % slot_hours != 0 {
        return Err(Error::param("slot_hours", format!("{slot_hours} does not divide 24")));
    }
    let Some(first) = records.iter().map(|r| r.timestamp_ms).min() else {
        return Ok(Aggregation::default());
    };
    let origin_ms = first / DAY_MS * DAY_MS;
    let slot_ms = slot_hours as u64 * HOUR_MS;

    let mut sums: BTreeMap<StationId, BTreeMap<u32, f64>> = BTreeMap::new();
    let mut unmapped = BTreeMap::new();
    for r in records {
        let Some(&station) = mapping.get(&r.square_id) else {
            *unmapped.entry(r.square_id).or_insert(0) += 1;
            continue;
        };
        let slot = ((r.timestamp_ms - origin_ms) / slot_ms) as u32;
        *sums.entry(station).or_default().entry(slot).or_insert(0.0) += r.internet.unwrap_or(0.0);
    }
    let series = sums
        .into_iter()
        .map(|(station_id, slots)| DemandSeries {
            station_id,
            slots: slots.into_iter().map(|(s, v)| (s, v * scale_bits_per_unit)).collect(),
        })
        .collect();
    Ok(Aggregation {
        series,
        unmapped,
        origin_ms,
    })
}

/// Knobs of the synthetic diurnal generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub n_stations: u32,
    pub n_slots: u32,
    pub peak_bits: f64,
    pub seed: u64,
    /// Phase offset of the sinusoid, in hours.
    pub t_peak: f64,
    /// Length of one slot, in hours.
    pub slot_hours: f64,
}

impl SynthParams {
    pub fn hourly(n_stations: u32, n_slots: u32, peak_bits: f64, seed: u64) -> Self {
        SynthParams {
            n_stations,
            n_slots,
            peak_bits,
            seed,
            t_peak: 14.0,
            slot_hours: 1.0,
        }
    }
}

/// `peak * (0.5 + 0.5 sin(2 pi (t - t_peak) / 24))` times seeded noise in
/// `[0.9, 1.1]`, for stations `0..n_stations`.
pub fn synth_traffic(params: &SynthParams) -> Result<Vec<DemandSeries>> {
    if params.n_slots == 0 {
        return Err(Error::param("n_slots", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let two_pi = 2.0 * core::f64::consts::PI;
    Ok((0..params.n_stations)
        .map(|k| {
            let slots = (0..params.n_slots)
                .map(|t| {
                    let hour = t as f64 * params.slot_hours;
                    let shape = 0.5 + 0.5 * libm::sin(two_pi * (hour - params.t_peak) / 24.0);
                    let noise: f64 = rng.random_range(0.9..=1.1);
                    (t, params.peak_bits * shape * noise)
                })
                .collect();
            DemandSeries {
                station_id: StationId(k),
                slots,
            }
        })
        .collect())
}

/// Splits each station's per-slot volume evenly over its associated users,
/// giving per-slot rate demands.
pub fn demands_from_series(
    series: &[DemandSeries],
    association: &BTreeMap<UserId, StationId>,
    n_slots: u32,
    slot_hours: f64,
    content: ContentType,
    shapeable: bool,
) -> Result<Vec<Vec<LinkDemand>>> {
    let mut users_of: BTreeMap<StationId, Vec<UserId>> = BTreeMap::new();
    for (&u, &s) in association {
        users_of.entry(s).or_default().push(u);
    }
    let seconds = slot_hours * 3600.0;
    let mut out = alloc::vec![Vec::new(); n_slots as usize];
    for s in series {
        let users = users_of.get(&s.station_id).map(Vec::as_slice).unwrap_or(&[]);
        for &(slot, bits) in &s.slots {
            if slot >= n_slots || bits <= 0.0 {
                continue;
            }
            if users.is_empty() {
                return Err(Error::InvalidTopology(format!(
                    "station {} has demand but no associated users",
                    s.station_id
                )));
            }
            let rate = bits / seconds / users.len() as f64;
            for &user in users {
                out[slot as usize].push(LinkDemand {
                    user,
                    rate_bps: rate,
                    content,
                    shapeable,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_full_record() {
        let r = parse_milan_cdr("10000\t1383260400000\t39\t0.23\t0.11\t0.38\t0.42\t13.02", 1).unwrap();
        assert_eq!(r.square_id, 10000);
        assert_eq!(r.timestamp_ms, 1_383_260_400_000);
        assert_eq!(r.country_code, 39);
        assert_eq!(r.sms_in, Some(0.23));
        assert_eq!(r.call_out, Some(0.42));
        assert_eq!(r.internet, Some(13.02));
    }

    #[test]
    fn empty_fields_are_absent() {
        let r = parse_milan_cdr("1\t1383260400000\t39\t\t\t\t\t", 1).unwrap();
        assert_eq!(r.square_id, 1);
        assert!([r.sms_in, r.sms_out, r.call_in, r.call_out, r.internet].iter().all(Option::is_none));
        let short = parse_milan_cdr("1\t1383260400000\t0", 1).unwrap();
        assert_eq!(short.internet, None);
    }

    #[test]
    fn rejects_malformed_lines_with_line_numbers() {
        for (line, bad) in [
            (7, "x\t1383260400000\t39\t\t\t\t\t1.0"),
            (8, "1\tnot-a-time\t39"),
            (9, "1\t1383260400001\t39"),
            (10, "1\t1383260400000\t39\t-1.0"),
            (11, "1\t1383260400000\t39\t1\t2\t3\t4\t5\t6"),
            (12, ""),
        ] {
            match parse_milan_cdr(bad, line) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line),
                other => panic!("{bad:?} gave {other:?}"),
            }
        }
    }

    fn rec(square: u32, ts: u64, internet: Option<f64>) -> CdrRecord {
        CdrRecord {
            square_id: square,
            timestamp_ms: ts,
            country_code: 39,
            sms_in: None,
            sms_out: None,
            call_in: None,
            call_out: None,
            internet,
        }
    }

    #[test]
    fn aggregation_examples() {
        let mapping = uniform_square_mapping(10_000, 2);
        assert!(aggregate_demands(&[], &mapping, 1e6, 1).unwrap().series.is_empty());

        let t0 = 1_383_260_400_000; // 2013-11-01 00:00 CET, 23:00 UTC the day before
        let same_hour = [rec(5, t0, Some(1.0)), rec(5, t0 + CDR_INTERVAL_MS, Some(2.0))];
        let agg = aggregate_demands(&same_hour, &mapping, 1e6, 1).unwrap();
        assert_eq!(agg.series.len(), 1);
        assert_eq!(agg.series[0].slots, [(23, 3e6)]);

        let two_hours = [rec(5, t0, Some(1.0)), rec(5, t0 + HOUR_MS, Some(2.0)), rec(6, t0, None)];
        let agg = aggregate_demands(&two_hours, &mapping, 1e6, 1).unwrap();
        assert_eq!(agg.series[0].slots, [(23, 1e6), (24, 2e6)]);
    }

    #[test]
    fn unmapped_squares_are_reported() {
        let mapping: BTreeMap<u32, StationId> = [(1, StationId(0))].into_iter().collect();
        let agg = aggregate_demands(&[rec(1, 0, Some(1.0)), rec(2, 0, Some(5.0)), rec(2, 0, None)], &mapping, 1.0, 1)
            .unwrap();
        assert_eq!(agg.unmapped[&2], 2);
        assert_eq!(agg.series[0].total_bits(), 1.0);
    }

    #[test]
    fn slot_hours_must_divide_the_day() {
        assert!(aggregate_demands(&[], &BTreeMap::new(), 1.0, 5).is_err());
        assert!(aggregate_demands(&[], &BTreeMap::new(), 1.0, 0).is_err());
    }

    #[test]
    fn uniform_mapping_partitions_squares() {
        let m = uniform_square_mapping(10_000, 4);
        assert_eq!(m[&1], StationId(0));
        assert_eq!(m[&2500], StationId(0));
        assert_eq!(m[&2501], StationId(1));
        assert_eq!(m[&10_000], StationId(3));
    }

    #[test]
    fn synthetic_traffic_is_seeded() {
        let zero = synth_traffic(&SynthParams::hourly(3, 24, 0.0, 1)).unwrap();
        assert!(zero.iter().flat_map(|s| &s.slots).all(|&(_, b)| b == 0.0));
        let a = synth_traffic(&SynthParams::hourly(3, 24, 1e9, 7)).unwrap();
        let b = synth_traffic(&SynthParams::hourly(3, 24, 1e9, 7)).unwrap();
        assert_eq!(a, b);
        let c = synth_traffic(&SynthParams::hourly(3, 24, 1e9, 8)).unwrap();
        assert_ne!(a, c);
        assert!(synth_traffic(&SynthParams::hourly(1, 0, 1.0, 0)).is_err());
    }

    #[test]
    fn series_split_over_users() {
        let series = [DemandSeries {
            station_id: StationId(1),
            slots: alloc::vec![(0, 7.2e9), (1, 0.0)],
        }];
        let assoc: BTreeMap<_, _> = [(UserId(1), StationId(1)), (UserId(2), StationId(1))].into_iter().collect();
        let d = demands_from_series(&series, &assoc, 2, 1.0, ContentType::Video, true).unwrap();
        assert_eq!(d[0].len(), 2);
        assert_eq!(d[0][0].rate_bps, 1e6);
        assert!(d[1].is_empty());
        let orphan = [DemandSeries {
            station_id: StationId(9),
            slots: alloc::vec![(0, 1.0)],
        }];
        assert!(demands_from_series(&orphan, &assoc, 2, 1.0, ContentType::Video, true).is_err());
    }

    proptest! {
        #[test]
        fn synthetic_traffic_in_envelope(peak in 0.0f64..1e10, seed in any::<u64>()) {
            let s = synth_traffic(&SynthParams::hourly(2, 48, peak, seed)).unwrap();
            for series in &s {
                for &(t, b) in &series.slots {
                    let shape = 0.5 + 0.5 * (2.0 * core::f64::consts::PI * (t as f64 - 14.0) / 24.0).sin();
                    prop_assert!(b >= 0.0);
                    prop_assert!(b >= peak * shape * 0.9 * (1.0 - 1e-12));
                    prop_assert!(b <= peak * shape * 1.1 * (1.0 + 1e-12));
                }
            }
        }

        #[test]
        fn parse_accepts_any_well_formed_line(
            sq in 1u32..10_001,
            k in 0u64..10_000,
            cc in 0u32..1000,
            vals in proptest::collection::vec(proptest::option::of(0.0f64..1e4), 5),
        ) {
            let ts = 1_383_260_400_000 + k * CDR_INTERVAL_MS;
            let mut line = format!("{sq}\t{ts}\t{cc}");
            for v in &vals {
                line.push('\t');
                if let Some(v) = v {
                    line.push_str(&format!("{v}"));
                }
            }
            let r = parse_milan_cdr(&line, 1).unwrap();
            prop_assert_eq!(r.square_id, sq);
            prop_assert_eq!(r.internet, vals[4]);
        }
    }
}
