use alloc::string::String;
use alloc::vec::Vec;

use crate::units::{DemandId, StationId, UserId};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("distance {distance_m} m is below the reference distance {ref_distance_m} m")]
    DegenerateGeometry { distance_m: f64, ref_distance_m: f64 },

    #[error("user {0} cannot be served: zero spectral efficiency with positive demand")]
    Unservable(UserId),

    #[error("no active station available for association")]
    NoCoverage,

    #[error("demand {0} is not shapeable")]
    ShapingForbidden(DemandId),

    #[error("load fraction {0} outside [0, 1]")]
    InvalidLoad(f64),

    #[error("{sbs_count} small stations exceed the exhaustive search limit of {limit}")]
    TooLargeForExhaustive { sbs_count: usize, limit: usize },

    #[error("no slot before the deadline for demands {0:?}")]
    DeadlineViolation(Vec<DemandId>),

    #[error("station {station}: carried {carried_bps} bit/s exceeds backhaul {capacity_bps} bit/s after shaping")]
    BackhaulCongested {
        station: StationId,
        carried_bps: f64,
        capacity_bps: f64,
    },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unknown station {0}")]
    UnknownStation(StationId),

    #[error("unknown user {0}")]
    UnknownUser(UserId),

    #[error("station {0} is asleep and cannot serve users")]
    StationAsleep(StationId),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("slot {slot}: no feasible switching configuration")]
    NoFeasibleConfig { slot: usize },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
