//! Static round-robin baseline: slot `i` belongs to agent `(i mod N) + 1`.

use crate::geom::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TdmaSchedule {
    n_agents: u32,
}

impl TdmaSchedule {
    /// Returns `None` for an empty swarm.
    pub fn new(n_agents: u32) -> Option<Self> {
        (n_agents >= 1).then_some(Self { n_agents })
    }

    pub fn n_agents(&self) -> u32 {
        self.n_agents
    }

    pub fn sender_for_slot(&self, slot: u64) -> AgentId {
        tdma_sender_for_slot(*self, slot)
    }
}

pub fn tdma_sender_for_slot(sched: TdmaSchedule, slot: u64) -> AgentId {
    AgentId((slot % u64::from(sched.n_agents)) as u32 + 1)
}

/// Time an agent waits between two of its own slots.
pub fn tdma_update_time(n_agents: u32, slot_len: f64) -> f64 {
    f64::from(n_agents) * slot_len
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_round_starts_at_one() {
        let s = TdmaSchedule::new(4).unwrap();
        assert_eq!(s.sender_for_slot(0), AgentId(1));
        assert_eq!(s.sender_for_slot(3), AgentId(4));
        assert_eq!(s.sender_for_slot(4), AgentId(1));
    }

    #[test]
    fn single_agent_owns_every_slot() {
        let s = TdmaSchedule::new(1).unwrap();
        for slot in [0, 1, 17, 1_000_000] {
            assert_eq!(s.sender_for_slot(slot), AgentId(1));
        }
    }

    #[test]
    fn empty_swarm_rejected() {
        assert!(TdmaSchedule::new(0).is_none());
    }

    #[test]
    fn update_time_examples() {
        assert!((tdma_update_time(18, 0.010) - 0.18).abs() < 1e-15);
        assert_eq!(tdma_update_time(1, 0.010), 0.010);
        assert!((tdma_update_time(12, 0.020) - 0.24).abs() < 1e-15);
    }

    #[test]
    fn every_agent_once_per_window() {
        for n in 1..=20u32 {
            let s = TdmaSchedule::new(n).unwrap();
            for start in [0u64, 3, 41] {
                let mut seen: Vec<u32> = (start..start + u64::from(n))
                    .map(|slot| s.sender_for_slot(slot).0)
                    .collect();
                seen.sort_unstable();
                assert_eq!(seen, (1..=n).collect::<Vec<_>>());
            }
        }
    }
}
