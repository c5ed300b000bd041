//! Slot-synchronous broadcast medium and the per-run slot log.
//!
//! At most one packet occupies a slot. By default every agent receives every
//! packet in the slot it was sent, so a packet from slot `i` is already
//! reflected in the selection of the sender of slot `i + 1`.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{AgentId, KinematicState, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub sender: AgentId,
    pub position: Vec3,
    pub velocity: Vec3,
    /// Transmission parameter: `C` while en route, 0 once arrived.
    pub c_r: f64,
    pub slot: u64,
}

impl Packet {
    pub fn new(sender: AgentId, state: KinematicState, c_r: f64, slot: u64) -> Self {
        Self {
            sender,
            position: state.position,
            velocity: state.velocity,
            c_r,
            slot,
        }
    }

    pub fn state(&self) -> KinematicState {
        KinematicState::new(self.position, self.velocity)
    }
}

/// Lossy or lossless broadcast with its own seeded random stream.
#[derive(Debug, Clone)]
pub struct Channel {
    loss_probability: f64,
    rng: ChaCha8Rng,
}

impl Channel {
    pub fn new(loss_probability: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&loss_probability) {
            return Err(Error::config("loss", "must lie in [0, 1)"));
        }
        Ok(Self {
            loss_probability,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn lossless() -> Self {
        Self {
            loss_probability: 0.0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn loss_probability(&self) -> f64 {
        self.loss_probability
    }

    /// Returns the ids that receive `pkt`, in ascending order. The sender
    /// always "receives" its own packet.
    pub fn broadcast(&mut self, pkt: &Packet, n_agents: u32) -> Vec<AgentId> {
        (1..=n_agents)
            .map(AgentId)
            .filter(|&id| {
                // No draw on the lossless path so its output never depends on the stream.
                id == pkt.sender
                    || self.loss_probability == 0.0
                    || self.rng.gen::<f64>() >= self.loss_probability
            })
            .collect()
    }
}

/// One line of the slot log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub sender: Option<AgentId>,
    pub position: Option<Vec3>,
    pub velocity: Option<Vec3>,
    pub c_r: Option<f64>,
}

impl SlotRecord {
    pub fn idle(slot: u64) -> Self {
        Self {
            slot,
            sender: None,
            position: None,
            velocity: None,
            c_r: None,
        }
    }

    pub fn packet(&self) -> Option<Packet> {
        Some(Packet {
            sender: self.sender?,
            position: self.position?,
            velocity: self.velocity?,
            c_r: self.c_r?,
            slot: self.slot,
        })
    }
}

impl From<&Packet> for SlotRecord {
    fn from(p: &Packet) -> Self {
        Self {
            slot: p.slot,
            sender: Some(p.sender),
            position: Some(p.position),
            velocity: Some(p.velocity),
            c_r: Some(p.c_r),
        }
    }
}

/// Append-only record of what occupied each slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotLog {
    records: Vec<SlotRecord>,
}

impl SlotLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the outcome of `slot`. Slots must be strictly increasing, which
    /// also enforces one packet per slot.
    pub fn push(&mut self, slot: u64, packet: Option<&Packet>) {
        if let Some(last) = self.records.last() {
            assert!(slot > last.slot, "slot log must be strictly increasing");
        }
        let record = match packet {
            Some(p) => {
                debug_assert_eq!(p.slot, slot);
                SlotRecord::from(p)
            }
            None => SlotRecord::idle(slot),
        };
        self.records.push(record);
    }

    pub fn records(&self) -> &[SlotRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn packets(&self) -> impl Iterator<Item = Packet> + '_ {
        self.records.iter().filter_map(SlotRecord::packet)
    }

    /// Slots in which `id` transmitted.
    pub fn transmissions_of(&self, id: AgentId) -> Vec<u64> {
        self.records
            .iter()
            .filter(|r| r.sender == Some(id))
            .map(|r| r.slot)
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")
                .map_err(|e| Error::io("<slot log>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut log = SlotLog::new();
        for line in input.lines() {
            let line = line.map_err(|e| Error::io("<slot log>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            log.records.push(serde_json::from_str(&line)?);
        }
        Ok(log)
    }
}
