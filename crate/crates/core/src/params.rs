use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every protocol tunable in one place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Slot length in seconds.
    pub slot_len: f64,
    /// Minimum relative priority margin for a strict winner.
    pub epsilon: f64,
    /// Distance to target below which an agent counts as arrived (m).
    pub r_min: f64,
    /// Transmission parameter broadcast while en route. Only its being nonzero matters.
    pub c_const: f64,
    /// True distance below which two agents have collided (m).
    pub collision_dist: f64,
    /// Staleness cap as a multiple of the active-set size. Once some active
    /// agent has gone this many slots unheard, the stalest agent gets the slot
    /// regardless of priority. At 1.0 nobody waits longer than a periodic
    /// assignment over the active set would make it. `None` disables preemption.
    #[serde(default)]
    pub staleness_factor: Option<f64>,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            slot_len: 0.010,
            epsilon: 0.5,
            r_min: 0.3,
            c_const: 1.0,
            collision_dist: 0.2,
            staleness_factor: Some(1.0),
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.slot_len.is_finite() && self.slot_len > 0.0) {
            return Err(Error::config("slot-ms", "slot length must be positive"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::config("epsilon", "must be finite and >= 0"));
        }
        if !(self.r_min.is_finite() && self.r_min > 0.0) {
            return Err(Error::config("rmin", "must be positive"));
        }
        if !self.c_const.is_finite() || self.c_const == 0.0 {
            return Err(Error::config("c-const", "must be finite and nonzero"));
        }
        if !(self.collision_dist.is_finite() && self.collision_dist > 0.0) {
            return Err(Error::config("collision-dist", "must be positive"));
        }
        if let Some(f) = self.staleness_factor {
            if !(f.is_finite() && f >= 1.0) {
                return Err(Error::config("staleness", "must be finite and >= 1"));
            }
        }
        Ok(())
    }

    /// Slot count at which preemption kicks in for `n_active` agents.
    pub fn staleness_cap(&self, n_active: usize) -> Option<u64> {
        self.staleness_factor
            .map(|f| (f * n_active as f64).ceil().max(1.0) as u64)
    }

    /// Copy with the slot length multiplied by `factor`.
    pub fn with_slot_scaled(self, factor: f64) -> Self {
        Self {
            slot_len: self.slot_len * factor,
            ..self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ProtocolParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_each_bad_field() {
        let base = ProtocolParams::default();
        let cases = [
            (ProtocolParams { slot_len: 0.0, ..base }, "slot-ms"),
            (ProtocolParams { epsilon: -0.1, ..base }, "epsilon"),
            (ProtocolParams { r_min: 0.0, ..base }, "rmin"),
            (ProtocolParams { c_const: 0.0, ..base }, "c-const"),
            (ProtocolParams { collision_dist: -1.0, ..base }, "collision-dist"),
            (ProtocolParams { staleness_factor: Some(0.5), ..base }, "staleness"),
        ];
        for (params, expected) in cases {
            match params.validate() {
                Err(Error::Config { field, .. }) => assert_eq!(field, expected),
                other => panic!("expected config error for {expected}, got {other:?}"),
            }
        }
    }

    #[test]
    fn staleness_cap_scales_with_active_set() {
        let p = ProtocolParams::default();
        assert_eq!(p.staleness_cap(12), Some(12));
        assert_eq!(p.staleness_cap(0), Some(1));
        let off = ProtocolParams { staleness_factor: None, ..p };
        assert_eq!(off.staleness_cap(12), None);
    }
}
