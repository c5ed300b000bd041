//! Dynamic time slot allocation.
//!
//! Every agent runs the same deterministic pipeline on its own [`PeerTable`]:
//!
//! 1. dead-reckon every swarm member to the current slot,
//! 2. score each potential sender `k` by summing, over all other agents `j`,
//!    how fast `j` and `k` close in on each other relative to their distance,
//!    weighted by how head-on the approach is ([`eta`]),
//! 3. pick the next sender with an ε-margin comparison, falling back to the
//!    staleness counters and finally to the smallest id ([`select_next_sender`]),
//! 4. unless some agent has been silent past the staleness cap, in which case
//!    the stalest agent preempts the slot ([`preempt_stale`]).
//!
//! With identical packet histories every agent reaches the same decision, so
//! no coordinator is needed.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::PeerTable;
use crate::geom::{euclidean_distance, relative_velocity, AgentId, KinematicState, Vec3};
use crate::params::ProtocolParams;

/// Distance from the current position to the target.
pub fn position_error(current: Vec3, target: Vec3) -> f64 {
    euclidean_distance(target, current)
}

/// `C` while the agent is farther than `r_min` from its target, else 0.
pub fn transmission_param(p_e: f64, params: &ProtocolParams) -> f64 {
    if p_e > params.r_min {
        params.c_const
    } else {
        0.0
    }
}

/// Angle in `[0, π]` between the relative velocity `v_jk` and the relative
/// position `p_kj` (vector from `j` to `k`). Zero means head-on.
pub fn approach_angle(v_jk: Vec3, p_kj: Vec3) -> Result<f64> {
    let nv = v_jk.norm();
    if nv == 0.0 {
        return Err(Error::ZeroLength("relative velocity"));
    }
    let np = p_kj.norm();
    if np == 0.0 {
        return Err(Error::ZeroLength("relative position"));
    }
    let cos = (v_jk.dot(p_kj) / (nv * np)).clamp(-1.0, 1.0);
    Ok(cos.acos())
}

/// `η / t_s`: relative speed over distance, weighted by `(π − α)/π`.
///
/// Kept separate so a priority can be formed as `t_s · Σ rate`, which makes
/// the time-scale factor exact across the whole sum.
fn closing_rate(v_jk: Vec3, p_kj: Vec3) -> Result<f64> {
    let dist = p_kj.norm();
    if dist == 0.0 {
        return Err(Error::ZeroLength("relative position"));
    }
    let speed = v_jk.norm();
    if speed == 0.0 {
        return Ok(0.0);
    }
    let alpha = approach_angle(v_jk, p_kj)?;
    Ok(speed / dist * ((PI - alpha) / PI))
}

/// Pairwise collision-proneness of `j` relative to `k`:
/// `(‖v_jk‖ t_s / ‖p_kj‖) · (π − α_jk) / π`.
///
/// Zero when the relative velocity vanishes; an error when the agents coincide.
pub fn eta(v_jk: Vec3, p_kj: Vec3, slot_len: f64) -> Result<f64> {
    Ok(closing_rate(v_jk, p_kj)? * slot_len)
}

/// Priorities of the potential senders plus the pairwise `η` terms behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityTable {
    n: usize,
    values: Vec<Option<f64>>,
    eta: Vec<Option<f64>>,
}

impl PriorityTable {
    /// Priority of `k`, or `None` if `k` is not a potential sender.
    pub fn get(&self, k: AgentId) -> Option<f64> {
        self.values.get(k.index()).copied().flatten()
    }

    /// `η_{j,k}` as used for `k`'s priority.
    pub fn eta(&self, j: AgentId, k: AgentId) -> Option<f64> {
        if j.index() >= self.n || k.index() >= self.n {
            return None;
        }
        self.eta[j.index() * self.n + k.index()]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `(id, g)` for every potential sender, ascending by id.
    pub fn iter(&self) -> impl Iterator<Item = (AgentId, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.map(|g| (AgentId::from_index(i), g)))
    }

    /// Builds a table directly from priority values, e.g. for selection tests.
    pub fn from_values(values: &[(AgentId, f64)]) -> Self {
        let n = values.iter().map(|(id, _)| id.0 as usize).max().unwrap_or(0);
        let mut v = vec![None; n];
        for &(id, g) in values {
            v[id.index()] = Some(g);
        }
        Self {
            n,
            values: v,
            eta: vec![None; n * n],
        }
    }
}

/// Priorities for every active agent from already-estimated swarm states.
///
/// `states[i]` belongs to agent `i + 1`; `active[i]` marks membership of the
/// potential-sender set. An agent whose own estimated speed is zero gets
/// priority 0 regardless of the others.
pub fn priority_from_states(
    states: &[KinematicState],
    active: &[bool],
    slot_len: f64,
) -> Result<PriorityTable> {
    let n = states.len();
    debug_assert_eq!(active.len(), n);
    let mut values = vec![None; n];
    let mut etas = vec![None; n * n];
    for k in 0..n {
        if !active[k] {
            continue;
        }
        let sk = states[k];
        let mut rate_sum = 0.0;
        for (j, sj) in states.iter().enumerate() {
            if j == k {
                continue;
            }
            let v_jk = relative_velocity(sj.velocity, sk.velocity);
            let p_kj = sk.position - sj.position;
            let rate = closing_rate(v_jk, p_kj).map_err(|_| {
                let (a, b) = (j.min(k), j.max(k));
                Error::Coincident(AgentId::from_index(a), AgentId::from_index(b))
            })?;
            etas[j * n + k] = Some(rate * slot_len);
            rate_sum += rate;
        }
        values[k] = Some(if sk.velocity.norm() == 0.0 {
            0.0
        } else {
            slot_len * rate_sum
        });
    }
    Ok(PriorityTable {
        n,
        values,
        eta: etas,
    })
}

/// Priorities as seen by the owner of `table` at `current_slot`.
pub fn priority_values(
    table: &PeerTable,
    current_slot: u64,
    params: &ProtocolParams,
) -> Result<PriorityTable> {
    let states = table.estimated_states(current_slot, params.slot_len)?;
    let active: Vec<bool> = table.entries().iter().map(|e| e.active).collect();
    priority_from_states(&states, &active, params.slot_len)
}

/// Slots since each agent last transmitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterTable {
    counts: Vec<u64>,
}

impl CounterTable {
    pub fn new(n_agents: usize) -> Self {
        Self {
            counts: vec![0; n_agents],
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn get(&self, id: AgentId) -> Option<u64> {
        self.counts.get(id.index()).copied()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Resets the sender's counter and increments all others. On an idle slot
    /// every counter increments.
    pub fn advance(&mut self, sender: Option<AgentId>) -> Result<()> {
        if let Some(s) = sender {
            if s.0 == 0 || s.index() >= self.counts.len() {
                return Err(Error::UnknownAgent(s));
            }
        }
        for (i, h) in self.counts.iter_mut().enumerate() {
            if Some(AgentId::from_index(i)) == sender {
                *h = 0;
            } else {
                *h += 1;
            }
        }
        Ok(())
    }
}

pub fn update_counters(counters: &CounterTable, sender: Option<AgentId>) -> Result<CounterTable> {
    let mut next = counters.clone();
    next.advance(sender)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionReason {
    PriorityWin,
    CounterTiebreak,
    IdTiebreak,
    StalenessCap,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenderDecision {
    pub next_sender: Option<AgentId>,
    pub reason: SelectionReason,
}

impl SenderDecision {
    pub const IDLE: SenderDecision = SenderDecision {
        next_sender: None,
        reason: SelectionReason::Idle,
    };
}

/// Relative priority margin of `g_k` over `g_j`.
pub fn comparison_value(g_k: f64, g_j: f64) -> f64 {
    (g_k - g_j) / g_k
}

/// Picks the sender of the next slot among `active`.
///
/// The agent with the largest priority wins outright if its margin over every
/// other candidate exceeds `epsilon`. Otherwise the candidates within the
/// margin form a near-tie group, and the one with the largest staleness
/// counter wins, then the smallest id. No candidate with a positive priority
/// means an idle slot.
pub fn select_next_sender(
    priorities: &PriorityTable,
    counters: &CounterTable,
    active: &[AgentId],
    epsilon: f64,
) -> SenderDecision {
    let candidates: Vec<(AgentId, f64)> = active
        .iter()
        .filter_map(|&id| priorities.get(id).map(|g| (id, g)))
        .collect();
    debug_assert_eq!(candidates.len(), active.len(), "missing priority for an active agent");

    let g_max = candidates.iter().map(|&(_, g)| g).fold(0.0, f64::max);
    if g_max <= 0.0 {
        return SenderDecision::IDLE;
    }

    let group: Vec<AgentId> = candidates
        .iter()
        .filter(|&&(_, g)| comparison_value(g_max, g) <= epsilon)
        .map(|&(id, _)| id)
        .collect();
    if let [winner] = group[..] {
        return SenderDecision {
            next_sender: Some(winner),
            reason: SelectionReason::PriorityWin,
        };
    }

    let stalest = group
        .iter()
        .map(|&id| counters.get(id).unwrap_or(0))
        .max()
        .unwrap_or(0);
    let mut oldest = group
        .iter()
        .copied()
        .filter(|&id| counters.get(id).unwrap_or(0) == stalest);
    // group is ascending by id, so the first of the stalest is the smallest id
    let first = oldest.next().expect("near-tie group is never empty");
    let reason = if oldest.next().is_none() {
        SelectionReason::CounterTiebreak
    } else {
        SelectionReason::IdTiebreak
    };
    SenderDecision {
        next_sender: Some(first),
        reason,
    }
}

/// The stalest active agent (largest counter, then smallest id) once its
/// counter has reached `cap`, otherwise `None`.
pub fn preempt_stale(counters: &CounterTable, active: &[AgentId], cap: u64) -> Option<SenderDecision> {
    let mut best: Option<(AgentId, u64)> = None;
    for &id in active {
        let h = counters.get(id).unwrap_or(0);
        if best.is_none_or(|(_, b)| h > b) {
            best = Some((id, h));
        }
    }
    best.filter(|&(_, h)| h >= cap).map(|(id, _)| SenderDecision {
        next_sender: Some(id),
        reason: SelectionReason::StalenessCap,
    })
}

/// Full per-agent decision: staleness preemption, then estimate, prioritize, select.
pub fn decide(
    table: &PeerTable,
    counters: &CounterTable,
    current_slot: u64,
    params: &ProtocolParams,
) -> Result<SenderDecision> {
    let active = table.active_ids();
    if let Some(cap) = params.staleness_cap(active.len()) {
        if let Some(d) = preempt_stale(counters, &active, cap) {
            return Ok(d);
        }
    }
    let priorities = priority_values(table, current_slot, params)?;
    Ok(select_next_sender(
        &priorities,
        counters,
        &active,
        params.epsilon,
    ))
}

/// Update time if the active agents were served round-robin.
pub fn dtsa_update_time(n_active: u32, slot_len: f64) -> f64 {
    f64::from(n_active) * slot_len
}
