//! Geodetic and rotation primitives.

mod so3;
mod wgs84;

pub use so3::{right_jacobian, right_jacobian_inv, skew, so3_exp, so3_log, vee, Rotation3};
pub use wgs84::*;

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum GeoError {
    #[error("position is at the Earth's center; geodetic coordinates are undefined")]
    EarthCenter,
    #[error("non-finite ECEF coordinates")]
    NonFinite,
}
