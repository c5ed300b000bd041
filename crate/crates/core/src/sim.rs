//! Slot-by-slot simulation of one position-exchange run.
//!
//! Each slot runs the same cycle for every agent: decide who sends, send and
//! receive, update counters, then move. Every agent owns its own peer table and
//! counter table; nothing is shared between agents except the packets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{Channel, Packet, SlotLog};
use crate::dtsa::{self, position_error, transmission_param, CounterTable, SenderDecision};
use crate::dynamics::{
    check_collision, generate_scenario, reached_target, step_agent, AgentBody, AvoidanceParams,
    Scenario,
};
use crate::error::{Error, Result};
use crate::estimator::PeerTable;
use crate::geom::{AgentId, KinematicState, Vec3};
use crate::metrics::{
    completion_slot, trajectory_efficiency, CellKey, MinDistanceTracker, Outcome, RunRecord,
};
use crate::params::ProtocolParams;
use crate::tdma::TdmaSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Tdma,
    Dtsa,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Tdma => "tdma",
            Protocol::Dtsa => "dtsa",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tdma" => Ok(Protocol::Tdma),
            "dtsa" => Ok(Protocol::Dtsa),
            other => Err(Error::config("protocol", format!("unknown protocol `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub params: ProtocolParams,
    pub avoidance: AvoidanceParams,
    pub protocol: Protocol,
    pub seed: u64,
    pub timeout_slots: u64,
    pub loss_probability: f64,
    /// Have every agent compute its own sender decision instead of sharing the
    /// result between agents whose tables are identical.
    pub verify_consensus: bool,
}

impl SimConfig {
    pub fn new(scenario: Scenario, protocol: Protocol, seed: u64) -> Self {
        let params = ProtocolParams::default();
        Self {
            scenario,
            params,
            avoidance: AvoidanceParams::default(),
            protocol,
            seed,
            timeout_slots: (60.0 / params.slot_len).round() as u64,
            loss_probability: 0.0,
            verify_consensus: false,
        }
    }

    pub fn cell_key(&self) -> CellKey {
        CellKey {
            protocol: self.protocol,
            n_agents: self.scenario.n_agents,
            n_moving: self.scenario.n_moving,
            t_s_ms: self.params.slot_len * 1000.0,
            epsilon: self.params.epsilon,
            r_min: self.params.r_min,
        }
    }
}

/// One agent's private state.
#[derive(Debug, Clone)]
pub struct AgentNode {
    pub body: AgentBody,
    pub table: PeerTable,
    pub counters: CounterTable,
    pub arrived: Option<u64>,
}

/// What happened in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotReport {
    pub slot: u64,
    /// Each agent's own sender decision (DTSA only).
    pub decisions: Vec<SenderDecision>,
    pub packet: Option<Packet>,
    /// Agents disagreed on the sender.
    pub divergent: bool,
    /// More than one agent believed it owned the slot; nothing got through.
    pub medium_collision: bool,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: SimConfig,
    agents: Vec<AgentNode>,
    starts: Vec<Vec3>,
    channel: Channel,
    tdma: TdmaSchedule,
    log: SlotLog,
    slot: u64,
    trajectories: Vec<Vec<KinematicState>>,
    tracker: MinDistanceTracker,
    outcome: Option<Outcome>,
    collision: Option<(AgentId, AgentId)>,
    divergences: u64,
    medium_collisions: u64,
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub record: RunRecord,
    pub log: SlotLog,
    /// `trajectories[a][t]`: true state of agent `a + 1` at slot `t`.
    pub trajectories: Vec<Vec<KinematicState>>,
    pub bodies: Vec<AgentBody>,
    pub arrivals: Vec<Option<u64>>,
    pub divergences: u64,
    pub medium_collisions: u64,
}

fn positions(agents: &[AgentNode]) -> impl Iterator<Item = Vec3> + Clone + '_ {
    agents.iter().map(|a| a.body.state.position)
}

/// Channel randomness must not be correlated with the scenario stream.
fn channel_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.params.validate()?;
        let bodies = generate_scenario(&cfg.scenario, cfg.seed)?;
        if cfg.scenario.min_spacing() <= cfg.params.collision_dist {
            return Err(Error::config(
                "agents",
                "formation spacing does not exceed the collision distance",
            ));
        }
        if cfg.timeout_slots == 0 {
            return Err(Error::config("timeout-s", "must allow at least one slot"));
        }
        let channel = Channel::new(cfg.loss_probability, channel_seed(cfg.seed))?;
        let initial: Vec<KinematicState> = bodies.iter().map(|b| b.state).collect();
        let n = bodies.len();
        let agents = bodies
            .into_iter()
            .map(|body| AgentNode {
                body,
                table: PeerTable::seeded(&initial),
                counters: CounterTable::new(n),
                arrived: None,
            })
            .collect();
        let mut sim = Self {
            cfg,
            agents,
            starts: initial.iter().map(|s| s.position).collect(),
            channel,
            tdma: TdmaSchedule::new(n as u32).expect("validated non-empty"),
            log: SlotLog::new(),
            slot: 0,
            trajectories: initial.iter().map(|s| vec![*s]).collect(),
            tracker: MinDistanceTracker::default(),
            outcome: None,
            collision: None,
            divergences: 0,
            medium_collisions: 0,
        };
        sim.tracker.observe(positions(&sim.agents));
        sim.settle();
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn agents(&self) -> &[AgentNode] {
        &self.agents
    }

    pub fn log(&self) -> &SlotLog {
        &self.log
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn is_finished(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn divergences(&self) -> u64 {
        self.divergences
    }

    /// Collision, arrival and termination checks for the current slot.
    fn settle(&mut self) {
        let bodies: Vec<AgentBody> = self.agents.iter().map(|a| a.body).collect();
        if let Some(pair) = check_collision(&bodies, self.cfg.params.collision_dist) {
            self.collision = Some(pair);
            self.outcome = Some(Outcome::Collided);
            return;
        }
        for a in &mut self.agents {
            if a.body.moving && a.arrived.is_none() && reached_target(&a.body, self.cfg.params.r_min) {
                a.arrived = Some(self.slot);
                a.body.enter_hover();
            }
        }
        if self
            .agents
            .iter()
            .all(|a| !a.body.moving || a.arrived.is_some())
        {
            self.outcome = Some(Outcome::Completed);
        } else if self.slot >= self.cfg.timeout_slots {
            self.outcome = Some(Outcome::Timeout);
        }
    }

    /// Every agent's decision for the current slot.
    fn dtsa_decisions(&self) -> Result<Vec<SenderDecision>> {
        let params = &self.cfg.params;
        if self.cfg.verify_consensus {
            return self
                .agents
                .iter()
                .map(|a| dtsa::decide(&a.table, &a.counters, self.slot, params))
                .collect();
        }
        // Identical inputs give identical decisions; compute once per distinct view.
        let mut seen: Vec<(usize, SenderDecision)> = Vec::new();
        let mut out = Vec::with_capacity(self.agents.len());
        for (i, a) in self.agents.iter().enumerate() {
            let known = seen.iter().find(|(r, _)| {
                let rep = &self.agents[*r];
                rep.table == a.table && rep.counters == a.counters
            });
            let d = match known {
                Some(&(_, d)) => d,
                None => {
                    let d = dtsa::decide(&a.table, &a.counters, self.slot, params)?;
                    seen.push((i, d));
                    d
                }
            };
            out.push(d);
        }
        Ok(out)
    }

    fn packet_from(&self, id: AgentId) -> Packet {
        let body = &self.agents[id.index()].body;
        let p_e = position_error(body.state.position, body.target);
        Packet::new(id, body.state, transmission_param(p_e, &self.cfg.params), self.slot)
    }

    /// Advances the run by one slot. Calling it on a finished run is an error.
    pub fn step(&mut self) -> Result<SlotReport> {
        assert!(!self.is_finished(), "step called on a finished run");
        let slot = self.slot;
        let n = self.agents.len() as u32;

        // who owns this slot, according to each agent
        let (decisions, beliefs): (Vec<SenderDecision>, Vec<Option<AgentId>>) =
            match self.cfg.protocol {
                Protocol::Tdma => {
                    let s = self.tdma.sender_for_slot(slot);
                    (Vec::new(), vec![Some(s); n as usize])
                }
                Protocol::Dtsa => match self.dtsa_decisions() {
                    Ok(ds) => {
                        let b = ds.iter().map(|d| d.next_sender).collect();
                        (ds, b)
                    }
                    Err(Error::Coincident(a, b)) => {
                        // estimates coincide: the protocol cannot continue
                        self.collision = Some((a, b));
                        self.outcome = Some(Outcome::Collided);
                        return Ok(SlotReport {
                            slot,
                            decisions: Vec::new(),
                            packet: None,
                            divergent: false,
                            medium_collision: false,
                        });
                    }
                    Err(e) => return Err(e),
                },
            };
        let divergent = beliefs.windows(2).any(|w| w[0] != w[1]);
        if divergent {
            self.divergences += 1;
        }

        let transmitters: Vec<AgentId> = beliefs
            .iter()
            .enumerate()
            .filter(|&(i, b)| *b == Some(AgentId::from_index(i)))
            .map(|(i, _)| AgentId::from_index(i))
            .collect();
        let medium_collision = transmitters.len() > 1;
        if medium_collision {
            self.medium_collisions += 1;
        }
        let packet = match transmitters[..] {
            [s] => Some(self.packet_from(s)),
            _ => None,
        };
        if let Some(pkt) = &packet {
            for id in self.channel.broadcast(pkt, n) {
                self.agents[id.index()].table.apply_packet(pkt)?;
            }
        }
        self.log.push(slot, packet.as_ref());
        for (a, belief) in self.agents.iter_mut().zip(&beliefs) {
            a.counters.advance(*belief)?;
        }

        // move, using only what each agent believes about the others
        let slot_len = self.cfg.params.slot_len;
        let mut next = Vec::with_capacity(self.agents.len());
        for (i, a) in self.agents.iter().enumerate() {
            if a.body.hovering || !a.body.moving {
                next.push(a.body);
                continue;
            }
            let mut peers = a.table.estimated_states(slot, slot_len)?;
            peers.remove(i);
            next.push(step_agent(&a.body, &peers, slot_len, &self.cfg.avoidance));
        }
        for (a, body) in self.agents.iter_mut().zip(next) {
            a.body = body;
        }

        self.slot += 1;
        for (traj, a) in self.trajectories.iter_mut().zip(&self.agents) {
            traj.push(a.body.state);
        }
        self.tracker.observe(positions(&self.agents));
        self.settle();

        Ok(SlotReport {
            slot,
            decisions,
            packet,
            divergent,
            medium_collision,
        })
    }

    /// Runs to completion, collision or timeout.
    pub fn run(mut self) -> Result<RunResult> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(self.finish())
    }

    fn finish(self) -> RunResult {
        let outcome = self.outcome.expect("run finished");
        let arrivals: Vec<Option<u64>> = self.agents.iter().map(|a| a.arrived).collect();
        let mover_arrivals: Vec<Option<u64>> = self
            .agents
            .iter()
            .filter(|a| a.body.moving)
            .map(|a| a.arrived)
            .collect();
        let efficiency = self
            .agents
            .iter()
            .zip(&self.trajectories)
            .zip(&self.starts)
            .map(|((a, traj), start)| {
                if !a.body.moving {
                    return None;
                }
                let path: Vec<Vec3> = traj.iter().map(|s| s.position).collect();
                trajectory_efficiency(&path, *start, a.body.target)
            })
            .collect();
        let completion_slots = match outcome {
            Outcome::Completed => completion_slot(&mover_arrivals),
            _ => None,
        };
        let record = RunRecord {
            cell: self.cfg.cell_key(),
            run_index: 0,
            seed: self.cfg.seed,
            outcome,
            min_distance: self.tracker.value(),
            trajectory_efficiency: efficiency,
            completion_slots,
            slots_simulated: self.slot,
            collision: self.collision,
            slot_log: None,
        };
        RunResult {
            record,
            log: self.log,
            trajectories: self.trajectories,
            bodies: self.agents.iter().map(|a| a.body).collect(),
            arrivals,
            divergences: self.divergences,
            medium_collisions: self.medium_collisions,
        }
    }
}

pub fn simulate(cfg: SimConfig) -> Result<RunResult> {
    Simulation::new(cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::min_distance;

    fn cfg(protocol: Protocol, n: u32, moving: u32, seed: u64) -> SimConfig {
        SimConfig::new(
            Scenario {
                n_agents: n,
                n_moving: moving,
                ..Scenario::default()
            },
            protocol,
            seed,
        )
    }

    #[test]
    fn protocol_parses() {
        assert_eq!("DTSA".parse::<Protocol>().unwrap(), Protocol::Dtsa);
        assert_eq!("tdma".parse::<Protocol>().unwrap(), Protocol::Tdma);
        assert!("csma".parse::<Protocol>().is_err());
    }

    #[test]
    fn tdma_sends_every_slot_in_order() {
        let r = simulate(cfg(Protocol::Tdma, 4, 2, 1)).unwrap();
        for rec in r.log.records() {
            assert_eq!(rec.sender, Some(AgentId((rec.slot % 4) as u32 + 1)));
        }
    }

    #[test]
    fn two_movers_finish() {
        for p in [Protocol::Tdma, Protocol::Dtsa] {
            let r = simulate(cfg(p, 12, 2, 5)).unwrap();
            assert_eq!(r.record.outcome, Outcome::Completed, "{p}");
            assert!(r.record.completion_slots.unwrap() > 0);
        }
    }

    #[test]
    fn hoverers_never_move() {
        let r = simulate(cfg(Protocol::Dtsa, 12, 4, 2)).unwrap();
        for (a, traj) in r.bodies.iter().zip(&r.trajectories) {
            if !a.moving {
                assert!(traj.iter().all(|s| s.position == traj[0].position));
            }
        }
    }

    #[test]
    fn streamed_min_distance_matches_brute_force() {
        let r = simulate(cfg(Protocol::Tdma, 8, 8, 3)).unwrap();
        let paths: Vec<Vec<Vec3>> = r
            .trajectories
            .iter()
            .map(|t| t.iter().map(|s| s.position).collect())
            .collect();
        assert_eq!(r.record.min_distance, min_distance(&paths));
    }

    #[test]
    fn vacuous_task_completes_at_slot_zero() {
        let r = simulate(cfg(Protocol::Dtsa, 6, 0, 0)).unwrap();
        assert_eq!(r.record.outcome, Outcome::Completed);
        assert_eq!(r.record.completion_slots, Some(0));
        assert!(r.log.is_empty());
    }

    #[test]
    fn tight_formation_rejected() {
        let mut c = cfg(Protocol::Dtsa, 40, 2, 0);
        c.scenario.formation = crate::dynamics::Formation::Circle { radius: 1.0 };
        assert!(matches!(Simulation::new(c), Err(Error::Config { field: "agents", .. })));
    }
}
