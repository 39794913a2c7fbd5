use nalgebra::{DMatrix, DVector, RowVector3, Vector3};

use super::{doppler_eval, pseudorange_eval, CorrectedObservation};
use crate::geo::LocalFrame;
use crate::graph::{Factor, Loss, NoiseModel, Value, VariableKey};

fn clock_total(v: &Value, slot: usize) -> f64 {
    let c = v.as_vector().expect("clock block");
    if slot == 0 {
        c[0]
    } else {
        c[0] + c[slot]
    }
}

fn clock_jacobian(dim: usize, slot: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(1, dim);
    j[(0, 0)] = -1.0;
    if slot > 0 {
        j[(0, slot)] = -1.0;
    }
    j
}

fn position_block(d_ecef: &RowVector3<f64>, frame: &LocalFrame) -> DMatrix<f64> {
    let g = d_ecef * frame.r_ne.matrix();
    let mut j = DMatrix::zeros(1, 6);
    for i in 0..3 {
        j[(0, 3 + i)] = g[i];
    }
    j
}

fn v3(v: &Value) -> Vector3<f64> {
    let x = v.as_vector().expect("velocity");
    Vector3::new(x[0], x[1], x[2])
}

/// Pseudorange factor on `[pose, clock_bias]` at one epoch. The navigation
/// frame position is mapped to ECEF through `frame`.
#[derive(Clone, Debug)]
pub struct PseudorangeFactor {
    keys: [VariableKey; 2],
    pub obs: CorrectedObservation,
    frame: LocalFrame,
    slot: usize,
    clock_dim: usize,
    noise: NoiseModel,
}

impl PseudorangeFactor {
    pub fn new(
        epoch: u32,
        obs: CorrectedObservation,
        frame: LocalFrame,
        slot: usize,
        clock_dim: usize,
        sigma: f64,
        loss: Loss,
    ) -> Result<Self, crate::graph::GraphError> {
        Ok(Self {
            keys: [VariableKey::pose(epoch), VariableKey::clock_bias(epoch)],
            obs,
            frame,
            slot,
            clock_dim,
            noise: NoiseModel::isotropic(1, sigma)?.with_loss(loss),
        })
    }
}

impl Factor for PseudorangeFactor {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn noise(&self) -> &NoiseModel {
        &self.noise
    }
    fn residual(&self, values: &[&Value]) -> DVector<f64> {
        let p = self
            .frame
            .to_ecef(&values[0].as_pose().expect("pose").translation);
        let e = pseudorange_eval(&p, clock_total(values[1], self.slot), &self.obs);
        DVector::from_element(1, e.residual)
    }
    fn jacobians(&self, values: &[&Value]) -> Option<Vec<DMatrix<f64>>> {
        let p = self
            .frame
            .to_ecef(&values[0].as_pose().expect("pose").translation);
        let e = pseudorange_eval(&p, clock_total(values[1], self.slot), &self.obs);
        Some(vec![
            position_block(&e.d_rx_pos, &self.frame),
            clock_jacobian(self.clock_dim, self.slot),
        ])
    }
    fn name(&self) -> &'static str {
        "pseudorange"
    }
}

/// Range-rate factor on `[pose, velocity, clock_drift]` at one epoch.
#[derive(Clone, Debug)]
pub struct DopplerFactor {
    keys: [VariableKey; 3],
    pub obs: CorrectedObservation,
    frame: LocalFrame,
    slot: usize,
    clock_dim: usize,
    noise: NoiseModel,
}

impl DopplerFactor {
    pub fn new(
        epoch: u32,
        obs: CorrectedObservation,
        frame: LocalFrame,
        slot: usize,
        clock_dim: usize,
        sigma: f64,
        loss: Loss,
    ) -> Result<Self, crate::graph::GraphError> {
        Ok(Self {
            keys: [
                VariableKey::pose(epoch),
                VariableKey::velocity(epoch),
                VariableKey::clock_drift(epoch),
            ],
            obs,
            frame,
            slot,
            clock_dim,
            noise: NoiseModel::isotropic(1, sigma)?.with_loss(loss),
        })
    }

    fn eval(&self, values: &[&Value]) -> super::DopplerEval {
        let p = self
            .frame
            .to_ecef(&values[0].as_pose().expect("pose").translation);
        let v = self.frame.vec_to_ecef(&v3(values[1]));
        doppler_eval(&p, &v, clock_total(values[2], self.slot), &self.obs)
    }
}

impl Factor for DopplerFactor {
    fn keys(&self) -> &[VariableKey] {
        &self.keys
    }
    fn noise(&self) -> &NoiseModel {
        &self.noise
    }
    fn residual(&self, values: &[&Value]) -> DVector<f64> {
        DVector::from_element(1, self.eval(values).residual)
    }
    fn jacobians(&self, values: &[&Value]) -> Option<Vec<DMatrix<f64>>> {
        let e = self.eval(values);
        let jv = e.d_rx_vel * self.frame.r_ne.matrix();
        Some(vec![
            position_block(&e.d_rx_pos, &self.frame),
            DMatrix::from_row_slice(1, 3, jv.as_slice()),
            clock_jacobian(self.clock_dim, self.slot),
        ])
    }
    fn name(&self) -> &'static str {
        "doppler"
    }
}
