use crate::geo::Rotation3;
use nalgebra::{DVector, Vector3};
use std::collections::BTreeMap;
use std::fmt;

use super::GraphError;

/// Kind of a state block. The declaration order fixes the column order of
/// blocks within one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VariableKind {
    Pose,
    Velocity,
    ImuBias,
    ClockBias,
    ClockDrift,
}

impl VariableKind {
    /// Required tangent dimension, `None` for the per-constellation clock
    /// blocks whose size is set by the configuration.
    pub fn fixed_dim(self) -> Option<usize> {
        match self {
            VariableKind::Pose => Some(6),
            VariableKind::Velocity => Some(3),
            VariableKind::ImuBias => Some(6),
            VariableKind::ClockBias | VariableKind::ClockDrift => None,
        }
    }

    fn symbol(self) -> char {
        match self {
            VariableKind::Pose => 'x',
            VariableKind::Velocity => 'v',
            VariableKind::ImuBias => 'b',
            VariableKind::ClockBias => 'c',
            VariableKind::ClockDrift => 'd',
        }
    }
}

/// Identifies one variable block. Keys sort by epoch first, which is the
/// elimination order used by the linear solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VariableKey {
    pub epoch: u32,
    pub kind: VariableKind,
}

impl VariableKey {
    pub const fn new(kind: VariableKind, epoch: u32) -> Self {
        Self { epoch, kind }
    }
    pub const fn pose(epoch: u32) -> Self {
        Self::new(VariableKind::Pose, epoch)
    }
    pub const fn velocity(epoch: u32) -> Self {
        Self::new(VariableKind::Velocity, epoch)
    }
    pub const fn imu_bias(epoch: u32) -> Self {
        Self::new(VariableKind::ImuBias, epoch)
    }
    pub const fn clock_bias(epoch: u32) -> Self {
        Self::new(VariableKind::ClockBias, epoch)
    }
    pub const fn clock_drift(epoch: u32) -> Self {
        Self::new(VariableKind::ClockDrift, epoch)
    }
}

impl fmt::Display for VariableKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.symbol(), self.epoch)
    }
}

/// Attitude (body→navigation) and position. Tangent order is `(δθ, δp)` with
/// the rotation perturbed on the right and the position additively.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Pose3 {
    pub rotation: Rotation3,
    pub translation: Vector3<f64>,
}

impl Pose3 {
    pub fn new(rotation: Rotation3, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }
}

/// A point on a variable's manifold.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Pose(Pose3),
    Vector(DVector<f64>),
}

impl Value {
    pub fn vector(v: &[f64]) -> Self {
        Value::Vector(DVector::from_column_slice(v))
    }

    pub fn dim(&self) -> usize {
        match self {
            Value::Pose(_) => 6,
            Value::Vector(v) => v.len(),
        }
    }

    /// `self ⊞ δ`
    pub fn retract(&self, delta: &[f64]) -> Value {
        debug_assert_eq!(delta.len(), self.dim());
        match self {
            Value::Pose(p) => {
                let dth = Vector3::new(delta[0], delta[1], delta[2]);
                let dp = Vector3::new(delta[3], delta[4], delta[5]);
                Value::Pose(Pose3::new(p.rotation.retract(&dth), p.translation + dp))
            }
            Value::Vector(v) => Value::Vector(v + DVector::from_column_slice(delta)),
        }
    }

    /// `self ⊟ base`
    pub fn local(&self, base: &Value) -> DVector<f64> {
        match (self, base) {
            (Value::Pose(a), Value::Pose(b)) => {
                let th = a.rotation.local(&b.rotation);
                let dp = a.translation - b.translation;
                DVector::from_column_slice(&[th.x, th.y, th.z, dp.x, dp.y, dp.z])
            }
            (Value::Vector(a), Value::Vector(b)) => a - b,
            _ => panic!("local() between values of different manifolds"),
        }
    }

    pub fn as_pose(&self) -> Option<&Pose3> {
        match self {
            Value::Pose(p) => Some(p),
            Value::Vector(_) => None,
        }
    }

    pub fn as_vector(&self) -> Option<&DVector<f64>> {
        match self {
            Value::Vector(v) => Some(v),
            Value::Pose(_) => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Value::Pose(p) => {
                p.translation.iter().all(|x| x.is_finite())
                    && p.rotation.matrix().iter().all(|x| x.is_finite())
            }
            Value::Vector(v) => v.iter().all(|x| x.is_finite()),
        }
    }

    /// Magnitude used to scale finite-difference steps for this value.
    pub(crate) fn fd_scale(&self, i: usize) -> f64 {
        match self {
            Value::Pose(p) if i >= 3 => p.translation[i - 3].abs().max(1.0),
            Value::Pose(_) => 1.0,
            Value::Vector(v) => v[i].abs().max(1.0),
        }
    }
}

/// A variable together with its initial value.
#[derive(Clone, Debug)]
pub struct VariableBlock {
    pub key: VariableKey,
    pub value: Value,
}

impl VariableBlock {
    pub fn new(key: VariableKey, value: Value) -> Self {
        Self { key, value }
    }

    pub fn manifold_dim(&self) -> usize {
        self.value.dim()
    }

    pub(crate) fn validate(&self) -> Result<(), GraphError> {
        let ok = match (self.key.kind, &self.value) {
            (VariableKind::Pose, Value::Pose(_)) => true,
            (VariableKind::Pose, _) | (_, Value::Pose(_)) => false,
            (kind, v) => kind.fixed_dim().is_none_or(|d| d == v.dim()) && v.dim() > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(GraphError::WrongDimension {
                key: self.key,
                dim: self.value.dim(),
            })
        }
    }
}

/// An ordered assignment of values to keys.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Values(BTreeMap<VariableKey, Value>);

impl Values {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: VariableKey, value: Value) -> Option<Value> {
        self.0.insert(key, value)
    }

    pub fn get(&self, key: &VariableKey) -> Option<&Value> {
        self.0.get(key)
    }

    pub fn get_mut(&mut self, key: &VariableKey) -> Option<&mut Value> {
        self.0.get_mut(key)
    }

    pub fn remove(&mut self, key: &VariableKey) -> Option<Value> {
        self.0.remove(key)
    }

    pub fn contains(&self, key: &VariableKey) -> bool {
        self.0.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &VariableKey> {
        self.0.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VariableKey, &Value)> {
        self.0.iter()
    }

    pub fn pose(&self, key: &VariableKey) -> Option<&Pose3> {
        self.get(key).and_then(Value::as_pose)
    }

    pub fn vector(&self, key: &VariableKey) -> Option<&DVector<f64>> {
        self.get(key).and_then(Value::as_vector)
    }

    pub fn extend(&mut self, other: Values) {
        self.0.extend(other.0);
    }
}

impl FromIterator<(VariableKey, Value)> for Values {
    fn from_iter<T: IntoIterator<Item = (VariableKey, Value)>>(iter: T) -> Self {
        Values(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::so3_exp;
    use proptest::prelude::*;

    #[test]
    fn key_order_is_epoch_major() {
        let mut keys = vec![
            VariableKey::velocity(1),
            VariableKey::clock_drift(0),
            VariableKey::pose(1),
            VariableKey::pose(0),
        ];
        keys.sort();
        assert_eq!(
            keys,
            vec![
                VariableKey::pose(0),
                VariableKey::clock_drift(0),
                VariableKey::pose(1),
                VariableKey::velocity(1)
            ]
        );
    }

    #[test]
    fn block_dimensions_are_checked() {
        assert!(
            VariableBlock::new(VariableKey::velocity(0), Value::vector(&[0.0; 3]))
                .validate()
                .is_ok()
        );
        assert!(
            VariableBlock::new(VariableKey::velocity(0), Value::vector(&[0.0; 2]))
                .validate()
                .is_err()
        );
        assert!(
            VariableBlock::new(VariableKey::pose(0), Value::vector(&[0.0; 6]))
                .validate()
                .is_err()
        );
        assert!(
            VariableBlock::new(VariableKey::clock_bias(0), Value::vector(&[0.0; 2]))
                .validate()
                .is_ok()
        );
    }

    proptest! {
        #[test]
        fn pose_retraction_round_trip(
            w in prop::array::uniform3(-3.0f64..3.0),
            t in prop::array::uniform3(-1e4f64..1e4),
            d in prop::array::uniform6(-0.05f64..0.05),
        ) {
            let base = Value::Pose(Pose3::new(
                so3_exp(&Vector3::from(w)),
                Vector3::from(t),
            ));
            prop_assert!(base.retract(&[0.0; 6]).local(&base).norm() < 1e-12);
            let moved = base.retract(&d);
            let back = moved.local(&base);
            for i in 0..6 {
                prop_assert!((back[i] - d[i]).abs() < 1e-9);
            }
        }
    }
}
