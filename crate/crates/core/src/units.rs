//! Identifiers and unit conversions shared by every model.

use core::fmt;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        #[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
        #[cfg_attr(feature = "serde", serde(transparent))]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl From<u32> for $name {
            fn from(v: u32) -> Self {
                $name(v)
            }
        }
    };
}

id_type!(
    /// Base station identifier. Ordering is the tie-break order used everywhere.
    StationId
);
id_type!(UserId);
id_type!(DemandId);

/// Relative slack under which a float is treated as sitting exactly on an
/// integer before rounding up. Keeps `ceil(1000 * 0.05)` at 50 instead of 51.
pub const CEIL_SLACK: f64 = 1e-9;

/// Ceiling that snaps values within [`CEIL_SLACK`] (relative) of an integer
/// onto that integer. Monotone non-decreasing in `x`.
pub fn ceil_snapped(x: f64) -> f64 {
    let nearest = libm::round(x);
    if libm::fabs(x - nearest) <= CEIL_SLACK * libm::fmax(1.0, libm::fabs(x)) {
        nearest
    } else {
        libm::ceil(x)
    }
}

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

#[inline]
pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * libm::log10(lin)
}

/// dBm to milliwatts.
#[inline]
pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_linear(dbm)
}

#[inline]
pub fn mw_to_dbm(mw: f64) -> f64 {
    linear_to_db(mw)
}
