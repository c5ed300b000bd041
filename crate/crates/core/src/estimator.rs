//! Linear dead reckoning of every swarm member, including the table owner.
//!
//! An agent keeps an estimate of its own position built only from its own
//! broadcasts, so that all tables evolve identically from the same packets.

use crate::channel::Packet;
use crate::error::{Error, Result};
use crate::geom::{AgentId, KinematicState, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeerEstimate {
    pub last_position: Vec3,
    pub last_velocity: Vec3,
    pub last_update_slot: u64,
    /// Member of the potential-sender set.
    pub active: bool,
}

impl PeerEstimate {
    pub fn new(state: KinematicState, slot: u64) -> Self {
        Self {
            last_position: state.position,
            last_velocity: state.velocity,
            last_update_slot: slot,
            active: true,
        }
    }
}

/// `p_m + (i - m) * v_m * t_s`.
pub fn estimate_position(est: &PeerEstimate, current_slot: u64, slot_len: f64) -> Result<Vec3> {
    if current_slot < est.last_update_slot {
        return Err(Error::SlotOrder {
            requested: current_slot,
            last_update: est.last_update_slot,
        });
    }
    let elapsed = (current_slot - est.last_update_slot) as f64;
    Ok(est.last_position + est.last_velocity * (elapsed * slot_len))
}

/// One agent's view of the whole swarm, indexed by agent id.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerTable {
    entries: Vec<PeerEstimate>,
}

impl PeerTable {
    /// Table seeded from a shared snapshot taken at slot 0.
    pub fn seeded(initial: &[KinematicState]) -> Self {
        Self {
            entries: initial.iter().map(|s| PeerEstimate::new(*s, 0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: AgentId) -> Option<&PeerEstimate> {
        id.0.checked_sub(1)
            .and_then(|i| self.entries.get(i as usize))
    }

    pub fn entries(&self) -> &[PeerEstimate] {
        &self.entries
    }

    pub fn is_active(&self, id: AgentId) -> bool {
        self.get(id).is_some_and(|e| e.active)
    }

    /// Ids in the potential-sender set, ascending.
    pub fn active_ids(&self) -> Vec<AgentId> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.active)
            .map(|(i, _)| AgentId::from_index(i))
            .collect()
    }

    pub fn n_active(&self) -> usize {
        self.entries.iter().filter(|e| e.active).count()
    }

    /// Last-writer-wins refresh of the sender's entry. A zero transmission
    /// parameter removes the sender from the potential-sender set for good.
    pub fn apply_packet(&mut self, pkt: &Packet) -> Result<()> {
        let entry = pkt
            .sender
            .0
            .checked_sub(1)
            .and_then(|i| self.entries.get_mut(i as usize))
            .ok_or(Error::UnknownAgent(pkt.sender))?;
        entry.last_position = pkt.position;
        entry.last_velocity = pkt.velocity;
        entry.last_update_slot = pkt.slot;
        if pkt.c_r == 0.0 {
            entry.active = false;
        }
        Ok(())
    }

    pub fn estimate(&self, id: AgentId, slot: u64, slot_len: f64) -> Result<Vec3> {
        let e = self.get(id).ok_or(Error::UnknownAgent(id))?;
        estimate_position(e, slot, slot_len)
    }

    /// Estimated position and last reported velocity of every agent at `slot`.
    pub fn estimated_states(&self, slot: u64, slot_len: f64) -> Result<Vec<KinematicState>> {
        self.entries
            .iter()
            .map(|e| {
                Ok(KinematicState::new(
                    estimate_position(e, slot, slot_len)?,
                    e.last_velocity,
                ))
            })
            .collect()
    }
}
