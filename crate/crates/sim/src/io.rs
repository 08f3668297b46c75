//! CSV file formats: station demand series, planner demands and CDR ingest.

use std::collections::BTreeMap;
use std::path::Path;

use demandplan_core::planner::{ContentType, TrafficDemand};
use demandplan_core::traffic::{aggregate_demands, parse_milan_cdr, uniform_square_mapping, Aggregation, CdrRecord, DemandSeries};
use demandplan_core::{DemandId, StationId, UserId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))
}

pub(crate) fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| SimError::config("csv", e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::config("csv", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn read_csv<T: for<'de> Deserialize<'de>>(text: &str, file: &str) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| {
            rec.map_err(|e| SimError::Input {
                file: file.to_string(),
                line: e.position().map(|p| p.line() as usize).unwrap_or(i + 2),
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct SeriesRow {
    station_id: u32,
    slot: u32,
    bits: f64,
}

/// Writes `station_id,slot,bits` rows in series order.
pub fn series_to_csv(series: &[DemandSeries]) -> Result<String> {
    csv_string(series.iter().flat_map(|s| {
        s.slots.iter().map(move |&(slot, bits)| SeriesRow { station_id: s.station_id.0, slot, bits })
    }))
}

/// Reads a demand CSV back into per-station series sorted by station and slot.
pub fn series_from_csv(text: &str, file: &str) -> Result<Vec<DemandSeries>> {
    let rows: Vec<SeriesRow> = read_csv(text, file)?;
    let mut map: BTreeMap<u32, BTreeMap<u32, f64>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        if !(r.bits >= 0.0) {
            return Err(SimError::Input { file: file.to_string(), line: i + 2, message: "bits must be >= 0".into() });
        }
        if map.entry(r.station_id).or_default().insert(r.slot, r.bits).is_some() {
            return Err(SimError::Input {
                file: file.to_string(),
                line: i + 2,
                message: format!("duplicate row for station {} slot {}", r.station_id, r.slot),
            });
        }
    }
    Ok(map
        .into_iter()
        .map(|(id, slots)| DemandSeries { station_id: StationId(id), slots: slots.into_iter().collect() })
        .collect())
}

pub fn read_series(path: &Path) -> Result<Vec<DemandSeries>> {
    series_from_csv(&read_text(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DemandRow {
    demand_id: u32,
    user_id: u32,
    content: ContentType,
    volume_bits: u64,
    priority: bool,
    shapeable: bool,
    arrival_slot: u32,
    deadline_slot: u32,
}

/// Planner input: `demand_id,user_id,content,volume_bits,priority,shapeable,arrival_slot,deadline_slot`.
pub fn demands_from_csv(text: &str, file: &str) -> Result<Vec<TrafficDemand>> {
    let rows: Vec<DemandRow> = read_csv(text, file)?;
    let mut seen = std::collections::BTreeSet::new();
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let d = TrafficDemand {
                id: DemandId(r.demand_id),
                user_id: UserId(r.user_id),
                content: r.content,
                volume_bits: r.volume_bits,
                priority_flag: r.priority,
                shapeable: r.shapeable,
                arrival_slot: r.arrival_slot,
                deadline_slot: r.deadline_slot,
            };
            let bad = |message: String| SimError::Input { file: file.to_string(), line: i + 2, message };
            d.validate().map_err(|e| bad(e.to_string()))?;
            if !seen.insert(d.id) {
                return Err(bad(format!("duplicate demand id {}", d.id)));
            }
            Ok(d)
        })
        .collect()
}

pub fn read_demands(path: &Path) -> Result<Vec<TrafficDemand>> {
    demands_from_csv(&read_text(path)?, &path.display().to_string())
}

/// Every record of a tab-separated CDR text, or the error of every bad line.
///
/// Lines are parsed in parallel; blank lines are skipped. Line numbers are
/// 1-based.
pub fn parse_cdr_text(text: &str) -> std::result::Result<Vec<CdrRecord>, Vec<demandplan_core::Error>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    let parsed: Vec<_> = lines.par_iter().map(|&(n, l)| parse_milan_cdr(l, n)).collect();
    let (ok, bad): (Vec<_>, Vec<_>) = parsed.into_iter().partition(|r| r.is_ok());
    if bad.is_empty() {
        Ok(ok.into_iter().map(|r| r.unwrap()).collect())
    } else {
        Err(bad.into_iter().map(|r| r.unwrap_err()).collect())
    }
}

/// Options of `ingest milan`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    /// Squares `1..=n_squares` are split evenly over the stations.
    pub n_squares: u32,
    pub n_stations: u32,
    pub scale_bits_per_unit: f64,
    pub slot_hours: u32,
}

impl Default for IngestOptions {
    fn default() -> Self {
        // the Milan grid is 100 x 100 squares
        IngestOptions { n_squares: 10_000, n_stations: 1, scale_bits_per_unit: 1e6, slot_hours: 1 }
    }
}

/// Parses a CDR file and aggregates it into per-station demand series.
pub fn ingest_milan(path: &Path, opts: &IngestOptions) -> Result<Aggregation> {
    let text = read_text(path)?;
    let records = parse_cdr_text(&text).map_err(|errs| {
        let first = &errs[0];
        let line = match first {
            demandplan_core::Error::Parse { line, .. } => *line,
            _ => 0,
        };
        SimError::Input {
            file: path.display().to_string(),
            line,
            message: format!("{first} ({} malformed lines)", errs.len()),
        }
    })?;
    if opts.n_stations == 0 || opts.n_squares == 0 {
        return Err(SimError::config("ingest", "n_squares and n_stations must be >= 1"));
    }
    let mapping = uniform_square_mapping(opts.n_squares, opts.n_stations);
    Ok(aggregate_demands(&records, &mapping, opts.scale_bits_per_unit, opts.slot_hours)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_round_trip() {
        let s = vec![
            DemandSeries { station_id: StationId(0), slots: vec![(0, 1.5), (1, 2.0)] },
            DemandSeries { station_id: StationId(3), slots: vec![(0, 0.0)] },
        ];
        let text = series_to_csv(&s).unwrap();
        assert_eq!(text, "station_id,slot,bits\n0,0,1.5\n0,1,2.0\n3,0,0.0\n");
        assert_eq!(series_from_csv(&text, "x").unwrap(), s);
    }

    #[test]
    fn duplicate_series_row_is_rejected() {
        let err = series_from_csv("station_id,slot,bits\n0,0,1\n0,0,2\n", "f").unwrap_err();
        assert!(matches!(err, SimError::Input { line: 3, .. }));
    }

    #[test]
    fn demand_rows_parse() {
        let text = "demand_id,user_id,content,volume_bits,priority,shapeable,arrival_slot,deadline_slot\n\
                    1,7,video,1000,false,true,0,3\n";
        let d = demands_from_csv(text, "f").unwrap();
        assert_eq!(d[0].user_id, UserId(7));
        assert_eq!(d[0].content, ContentType::Video);
        let bad = "demand_id,user_id,content,volume_bits,priority,shapeable,arrival_slot,deadline_slot\n\
                   1,7,video,1000,false,true,4,3\n";
        assert!(matches!(demands_from_csv(bad, "f").unwrap_err(), SimError::Input { line: 2, .. }));
        let unknown = "demand_id,user_id,content,volume_bits,priority,shapeable,arrival_slot,deadline_slot\n\
                       1,7,hologram,1000,false,true,0,3\n";
        assert!(demands_from_csv(unknown, "f").is_err());
    }

    #[test]
    fn cdr_errors_carry_every_line() {
        let text = "x\t1\t1\ny\t2\t3\n\n1\t1383260400000\t39\n";
        let errs = parse_cdr_text(text).unwrap_err();
        let lines: Vec<usize> = errs
            .iter()
            .map(|e| match e {
                demandplan_core::Error::Parse { line, .. } => *line,
                _ => 0,
            })
            .collect();
        assert_eq!(lines, vec![1, 2]);
    }
}
