//! Bundled test systems: the IEEE 30-bus transmission grid prepared with
//! five PCC buses, the radial IEEE 33-bus feeder, and three meshed 33-bus
//! distribution systems with DGs.

use crate::error::Result;
use crate::netmodel::{build_integrated, parse_case, NetworkCase};

pub const IEEE30: &str = include_str!("../fixtures/ieee30.case");
pub const IEEE33: &str = include_str!("../fixtures/ieee33.case");
pub const DS1: &str = include_str!("../fixtures/ds1.case");
pub const DS2: &str = include_str!("../fixtures/ds2.case");
pub const DS3: &str = include_str!("../fixtures/ds3.case");

pub fn ieee30() -> Result<NetworkCase> {
    parse_case(IEEE30)
}

pub fn ieee33() -> Result<NetworkCase> {
    parse_case(IEEE33)
}

/// Distribution systems 1, 2 and 3 in that order.
pub fn distribution_systems() -> Result<Vec<NetworkCase>> {
    [DS1, DS2, DS3].iter().map(|t| parse_case(t)).collect()
}

/// Transmission grid with all three distribution systems attached.
pub fn integrated() -> Result<NetworkCase> {
    build_integrated(&ieee30()?, &distribution_systems()?)
}
