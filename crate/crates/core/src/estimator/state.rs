use nalgebra::Vector3;

use crate::geo::Rotation3;
use crate::gnss::ClockState;
use crate::preint::ImuBias;

/// Navigation state in a local NED frame. `attitude` maps body vectors to
/// navigation vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct NavState {
    pub timestamp: f64,
    pub attitude: Rotation3,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub bias: ImuBias,
    pub clock: ClockState,
}

impl NavState {
    /// A state with every field NaN, used for epochs without a solution.
    pub fn undefined(timestamp: f64) -> Self {
        let nan = Vector3::repeat(f64::NAN);
        Self {
            timestamp,
            attitude: Rotation3::from_matrix_unchecked(nalgebra::Matrix3::repeat(f64::NAN)),
            position: nan,
            velocity: nan,
            bias: ImuBias::new(nan, nan),
            clock: ClockState {
                gps_bias: f64::NAN,
                gps_drift: f64::NAN,
                ..Default::default()
            },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(self.velocity.iter())
            .all(|x| x.is_finite())
            && self.attitude.matrix().iter().all(|x| x.is_finite())
            && self.clock.gps_bias.is_finite()
    }
}
