//! Per-run metrics and campaign aggregation.
//!
//! All metrics use true positions. Runs that ended in a collision are counted
//! but never enter an average.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::SlotLog;
use crate::error::Result;
use crate::geom::{euclidean_distance, AgentId, Vec3};
use crate::sim::Protocol;

/// Minimum pairwise distance over all slots, by exhaustive search.
///
/// `trajectories[a][t]` is the position of agent `a + 1` at slot `t`.
pub fn min_distance(trajectories: &[Vec<Vec3>]) -> f64 {
    let slots = trajectories.iter().map(Vec::len).min().unwrap_or(0);
    let mut best = f64::INFINITY;
    for t in 0..slots {
        for a in 0..trajectories.len() {
            for b in a + 1..trajectories.len() {
                best = best.min(euclidean_distance(trajectories[a][t], trajectories[b][t]));
            }
        }
    }
    best
}

/// Running minimum of the pairwise distance, fed one slot at a time.
#[derive(Debug, Clone, Copy)]
pub struct MinDistanceTracker {
    best: f64,
}

impl Default for MinDistanceTracker {
    fn default() -> Self {
        Self {
            best: f64::INFINITY,
        }
    }
}

impl MinDistanceTracker {
    pub fn observe<I>(&mut self, positions: I)
    where
        I: IntoIterator<Item = Vec3>,
        I::IntoIter: Clone,
    {
        let it = positions.into_iter();
        for (i, a) in it.clone().enumerate() {
            for b in it.clone().skip(i + 1) {
                let d = euclidean_distance(a, b);
                if d < self.best {
                    self.best = d;
                }
            }
        }
    }

    pub fn value(&self) -> f64 {
        self.best
    }
}

/// Straight-line distance from `start` to `target` over the distance flown.
///
/// The flown distance is the summed per-slot displacement of `trajectory`
/// plus the straight remainder from its last point to `target`, so a path
/// that stopped short is charged for the leg it still had to fly. Returns
/// `None` if nothing was flown.
pub fn trajectory_efficiency(trajectory: &[Vec3], start: Vec3, target: Vec3) -> Option<f64> {
    let first = *trajectory.first()?;
    let last = *trajectory.last()?;
    let flown: f64 = euclidean_distance(start, first)
        + trajectory
            .windows(2)
            .map(|w| euclidean_distance(w[0], w[1]))
            .sum::<f64>();
    if flown == 0.0 {
        return None;
    }
    let remaining = euclidean_distance(last, target);
    Some(euclidean_distance(start, target) / (flown + remaining))
}

/// Slot at which the last mover arrived, or `None` if any mover never did.
pub fn completion_slot(arrivals: &[Option<u64>]) -> Option<u64> {
    arrivals
        .iter()
        .try_fold(0u64, |acc, a| a.map(|slot| acc.max(slot)))
}

/// Gaps in slots between consecutive transmissions of `id`.
pub fn transmission_gaps(log: &SlotLog, id: AgentId) -> Vec<u64> {
    log.transmissions_of(id)
        .windows(2)
        .map(|w| w[1] - w[0])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Completed,
    Collided,
    Timeout,
}

/// Parameters that define one campaign cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub protocol: Protocol,
    pub n_agents: u32,
    pub n_moving: u32,
    pub t_s_ms: f64,
    pub epsilon: f64,
    pub r_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: CellKey,
    pub run_index: u32,
    pub seed: u64,
    pub outcome: Outcome,
    pub min_distance: f64,
    /// Indexed by agent; `None` for agents that never moved.
    pub trajectory_efficiency: Vec<Option<f64>>,
    pub completion_slots: Option<u64>,
    pub slots_simulated: u64,
    pub collision: Option<(AgentId, AgentId)>,
    /// Slot log location relative to the campaign output directory, once written.
    pub slot_log: Option<String>,
}

impl RunRecord {
    pub fn mean_efficiency(&self) -> Option<f64> {
        mean(self.trajectory_efficiency.iter().flatten().copied())
    }

    pub fn completion_s(&self) -> Option<f64> {
        self.completion_slots
            .map(|s| s as f64 * self.cell.t_s_ms / 1000.0)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Spread {
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        Self {
            mean: mean(values.iter().copied()),
            min: values.iter().copied().reduce(f64::min),
            max: values.iter().copied().reduce(f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: CellKey,
    pub runs: usize,
    pub collisions: usize,
    pub timeouts: usize,
    /// Runs that contribute to the metric spreads.
    pub counted: usize,
    pub min_distance: Spread,
    pub trajectory_efficiency: Spread,
    pub completion_s: Spread,
}

impl CellSummary {
    pub fn collision_rate(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.collisions as f64 / self.runs as f64
        }
    }
}

/// One summary per distinct cell, in order of first appearance.
pub fn aggregate_campaign(records: &[RunRecord]) -> Vec<CellSummary> {
    let mut cells: Vec<CellKey> = Vec::new();
    for r in records {
        if !cells.contains(&r.cell) {
            cells.push(r.cell);
        }
    }
    cells
        .into_iter()
        .map(|cell| {
            let rs: Vec<&RunRecord> = records.iter().filter(|r| r.cell == cell).collect();
            let counted: Vec<&&RunRecord> =
                rs.iter().filter(|r| r.outcome != Outcome::Collided).collect();
            let min_d: Vec<f64> = counted.iter().map(|r| r.min_distance).collect();
            let eff: Vec<f64> = counted.iter().filter_map(|r| r.mean_efficiency()).collect();
            let comp: Vec<f64> = counted.iter().filter_map(|r| r.completion_s()).collect();
            CellSummary {
                cell,
                runs: rs.len(),
                collisions: rs.iter().filter(|r| r.outcome == Outcome::Collided).count(),
                timeouts: rs.iter().filter(|r| r.outcome == Outcome::Timeout).count(),
                counted: counted.len(),
                min_distance: Spread::of(&min_d),
                trajectory_efficiency: Spread::of(&eff),
                completion_s: Spread::of(&comp),
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    protocol: Protocol,
    n_agents: u32,
    n_moving: u32,
    t_s_ms: f64,
    epsilon: f64,
    r_min: f64,
    runs: usize,
    collisions: usize,
    collision_rate: f64,
    timeouts: usize,
    counted: usize,
    min_distance_mean: Option<f64>,
    min_distance_min: Option<f64>,
    min_distance_max: Option<f64>,
    traj_eff_mean: Option<f64>,
    traj_eff_min: Option<f64>,
    traj_eff_max: Option<f64>,
    completion_s_mean: Option<f64>,
    completion_s_min: Option<f64>,
    completion_s_max: Option<f64>,
}

impl From<&CellSummary> for SummaryRow {
    fn from(s: &CellSummary) -> Self {
        Self {
            protocol: s.cell.protocol,
            n_agents: s.cell.n_agents,
            n_moving: s.cell.n_moving,
            t_s_ms: s.cell.t_s_ms,
            epsilon: s.cell.epsilon,
            r_min: s.cell.r_min,
            runs: s.runs,
            collisions: s.collisions,
            collision_rate: s.collision_rate(),
            timeouts: s.timeouts,
            counted: s.counted,
            min_distance_mean: s.min_distance.mean,
            min_distance_min: s.min_distance.min,
            min_distance_max: s.min_distance.max,
            traj_eff_mean: s.trajectory_efficiency.mean,
            traj_eff_min: s.trajectory_efficiency.min,
            traj_eff_max: s.trajectory_efficiency.max,
            completion_s_mean: s.completion_s.mean,
            completion_s_min: s.completion_s.min,
            completion_s_max: s.completion_s.max,
        }
    }
}

pub fn write_summary_csv<W: Write>(summaries: &[CellSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in summaries {
        w.serialize(SummaryRow::from(s))?;
    }
    w.flush().map_err(|e| crate::error::Error::io("<summary>", e))?;
    Ok(())
}
