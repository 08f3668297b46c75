//! Demand planning for wireless networks.
//!
//! The crate models a cellular network at desk scale and measures what
//! happens when user demand is labeled, shaped (compressed or converted) and
//! rescheduled before it reaches the radio:
//!
//! - [`net`]: geometry, path loss, SINR, spectral efficiency, RB requirements
//!   and user association.
//! - [`planner`]: labeling, shaping and rescheduling of traffic demands.
//! - [`switching`]: load-dependent base-station power and the cell-switching
//!   optimizers (exhaustive and greedy) plus the daily energy loop.
//! - [`spectrum`]: utilization-coupled RB allocation over a shared band and
//!   backhaul admission.
//! - [`traffic`]: Milan CDR parsing, aggregation into per-station series and
//!   seeded synthetic diurnal traffic.
//!
//! Everything here is pure and deterministic. The crate is `no_std` and only
//! needs `alloc`; file formats and the command-line front end live in
//! `demandplan-sim`.

#![cfg_attr(not(test), no_std)]
// Validation is written as `!(x >= lo)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod net;
pub mod planner;
pub mod spectrum;
pub mod switching;
pub mod traffic;
pub mod units;

pub use error::{Error, Result};
pub use units::{DemandId, StationId, UserId};
