//! Point-mass agents, the antipodal position-exchange task, and a
//! velocity-obstacle avoidance planner.
//!
//! The controller is a stand-in: the schedulers only influence it through the
//! estimated peer states it is fed. Swap [`velocity_command`] for any planner
//! with the same inputs.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dtsa::position_error;
use crate::error::{Error, Result};
use crate::geom::{euclidean_distance, AgentId, KinematicState, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Formation {
    Circle { radius: f64 },
    Ellipse { radius_x: f64, radius_y: f64 },
}

impl Formation {
    fn radii(&self) -> (f64, f64) {
        match *self {
            Formation::Circle { radius } => (radius, radius),
            Formation::Ellipse { radius_x, radius_y } => (radius_x, radius_y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLimits {
    /// m/s
    pub max_speed: f64,
    /// m/s²
    pub max_accel: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        Self {
            max_speed: 0.5,
            max_accel: 2.0,
        }
    }
}

/// Tuning of the velocity-obstacle planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceParams {
    /// Preferred speed per meter of remaining distance (1/s), saturated at max speed.
    pub attraction_gain: f64,
    /// Peers farther than this (m) are ignored.
    pub sensing_radius: f64,
    /// Two agents closer than this (m) count as a conflict for planning.
    pub safety_radius: f64,
    /// Conflicts predicted further ahead than this (s) are ignored.
    pub horizon: f64,
    /// Weight of imminence against deviation from the preferred velocity (m).
    pub conflict_weight: f64,
    /// Number of sampled headings.
    pub heading_samples: u32,
    /// Number of sampled speeds per heading, evenly spaced up to max speed.
    pub speed_samples: u32,
    /// Cost of standing still, falling linearly to 0 at the preferred speed.
    /// Keeps agents from parking in front of an obstacle when a detour exists.
    pub stall_penalty: f64,
    /// Reward per m/s of sideways speed to the right of the preferred
    /// direction. Below 1 it never beats a conflict-free preferred velocity,
    /// but it breaks head-on standoffs into a roundabout.
    pub right_bias: f64,
}

impl Default for AvoidanceParams {
    fn default() -> Self {
        Self {
            attraction_gain: 0.5,
            sensing_radius: 1.0,
            safety_radius: 0.3,
            horizon: 2.0,
            conflict_weight: 0.5,
            heading_samples: 32,
            speed_samples: 3,
            stall_penalty: 0.3,
            right_bias: 0.2,
        }
    }
}

/// Geometry and size of one position-exchange task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_agents: u32,
    pub n_moving: u32,
    pub formation: Formation,
    /// Height of the formation plane relative to the room center (m).
    pub altitude: f64,
    /// Room extents (m), centered on the origin.
    pub room: Vec3,
    pub limits: MotionLimits,
    /// Speed movers already have at slot 0 (m/s).
    pub initial_speed: f64,
    /// Half-width of the uniform random heading offset applied to movers (rad).
    pub heading_jitter: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            n_agents: 12,
            n_moving: 2,
            formation: Formation::Circle { radius: 1.4 },
            altitude: 0.0,
            room: Vec3::new(3.0, 4.6, 1.9),
            limits: MotionLimits::default(),
            initial_speed: 0.25,
            heading_jitter: 0.3,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::config("agents", "need at least one agent"));
        }
        if self.n_moving > self.n_agents {
            return Err(Error::config("moving", "more movers than agents"));
        }
        if self.n_moving != self.n_agents {
            if !self.n_moving.is_multiple_of(2) {
                return Err(Error::config(
                    "moving",
                    "a partial set of movers must consist of antipodal pairs (even count)",
                ));
            }
            if !self.n_agents.is_multiple_of(2) && self.n_moving > 0 {
                return Err(Error::config(
                    "moving",
                    "antipodal pairs need an even number of agents",
                ));
            }
        }
        let (rx, ry) = self.formation.radii();
        if !(rx > 0.0 && ry > 0.0 && rx.is_finite() && ry.is_finite()) {
            return Err(Error::config("radius", "must be positive"));
        }
        if rx > self.room.x / 2.0 || ry > self.room.y / 2.0 {
            return Err(Error::config("radius", "formation does not fit in the room"));
        }
        if self.altitude.abs() > self.room.z / 2.0 {
            return Err(Error::config("altitude", "outside the room"));
        }
        let l = self.limits;
        if !(l.max_speed > 0.0 && l.max_accel > 0.0) {
            return Err(Error::config("max-speed", "limits must be positive"));
        }
        if !(0.0..=l.max_speed).contains(&self.initial_speed) {
            return Err(Error::config("initial-speed", "must lie in [0, max-speed]"));
        }
        if !(self.heading_jitter >= 0.0 && self.heading_jitter <= PI) {
            return Err(Error::config("heading-jitter", "must lie in [0, pi]"));
        }
        Ok(())
    }

    /// Smallest distance between two formation slots.
    pub fn min_spacing(&self) -> f64 {
        let p = formation_positions(self);
        let mut best = f64::INFINITY;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                best = best.min(euclidean_distance(p[i], p[j]));
            }
        }
        best
    }

    /// Zero-based index of the agent opposite `i`.
    pub fn partner(&self, i: usize) -> usize {
        let n = self.n_agents as usize;
        (i + n / 2) % n
    }

    pub fn is_mover(&self, i: usize) -> bool {
        let n = self.n_agents as usize;
        let m = self.n_moving as usize;
        if m == n {
            return true;
        }
        let pairs = m / 2;
        i < pairs || (i >= n / 2 && i < n / 2 + pairs)
    }
}

fn formation_positions(sc: &Scenario) -> Vec<Vec3> {
    let (rx, ry) = sc.formation.radii();
    let n = sc.n_agents as usize;
    (0..n)
        .map(|i| {
            let theta = TAU * i as f64 / n as f64;
            Vec3::new(rx * theta.cos(), ry * theta.sin(), sc.altitude)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentBody {
    pub id: AgentId,
    pub state: KinematicState,
    pub target: Vec3,
    pub limits: MotionLimits,
    /// Part of the exchange; non-movers hover at their start for the whole run.
    pub moving: bool,
    /// Holding position after arrival.
    pub hovering: bool,
}

impl AgentBody {
    /// Arrival switches the agent into position hold.
    pub fn enter_hover(&mut self) {
        self.hovering = true;
        self.state.velocity = Vec3::ZERO;
    }
}

/// Agents evenly spaced on the formation, each targeting the start of its
/// antipodal partner. Movers get an initial velocity toward their target,
/// rotated about the vertical by a seeded random heading offset.
pub fn generate_scenario(sc: &Scenario, seed: u64) -> Result<Vec<AgentBody>> {
    sc.validate()?;
    let starts = formation_positions(sc);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bodies = (0..sc.n_agents as usize)
        .map(|i| {
            let moving = sc.is_mover(i);
            let target = if moving { starts[sc.partner(i)] } else { starts[i] };
            let mut velocity = Vec3::ZERO;
            if moving {
                let offset = if sc.heading_jitter > 0.0 {
                    rng.gen_range(-sc.heading_jitter..=sc.heading_jitter)
                } else {
                    0.0
                };
                if let Some(dir) = (target - starts[i]).normalized() {
                    velocity = rotate_about_z(dir, offset) * sc.initial_speed;
                }
            }
            AgentBody {
                id: AgentId::from_index(i),
                state: KinematicState::new(starts[i], velocity),
                target,
                limits: sc.limits,
                moving,
                hovering: !moving,
            }
        })
        .collect();
    Ok(bodies)
}

fn rotate_about_z(v: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

/// Time until a point starting at `rel` and moving with `-closing` enters
/// the disc of radius `r` around the origin. Infinite if it never does, zero
/// if already inside and still closing in.
fn time_to_conflict(rel: Vec3, closing: Vec3, r: f64) -> f64 {
    let c = rel.norm_squared() - r * r;
    let b = rel.dot(closing);
    if c < 0.0 {
        return if b > 0.0 { 0.0 } else { f64::INFINITY };
    }
    let a = closing.norm_squared();
    let disc = b * b - a * c;
    if b <= 0.0 || a == 0.0 || disc <= 0.0 {
        return f64::INFINITY;
    }
    (b - disc.sqrt()) / a
}

/// Desired velocity of an agent at `own` heading for `target`.
///
/// Sampling-based reciprocal velocity obstacles: among a fixed fan of
/// candidate velocities, pick the one minimizing the distance to the
/// preferred velocity plus `conflict_weight / t`, where `t` is the earliest
/// predicted conflict with any sensed peer. Moving peers are assumed to take
/// half of the avoidance effort, peers that report zero velocity none of it.
/// Sideways motion to the right is slightly favored to break symmetric standoffs.
/// Ties go to the earliest candidate, so the result is deterministic.
pub fn velocity_command(
    own: KinematicState,
    target: Vec3,
    peers: &[KinematicState],
    limits: &MotionLimits,
    avoid: &AvoidanceParams,
) -> Vec3 {
    let preferred = ((target - own.position) * avoid.attraction_gain).clamp_norm(limits.max_speed);
    let near: Vec<&KinematicState> = peers
        .iter()
        .filter(|p| euclidean_distance(p.position, own.position) < avoid.sensing_radius)
        .collect();
    if near.is_empty() {
        return preferred;
    }
    let pref_speed = preferred.norm();
    let right = preferred
        .normalized()
        .map_or(Vec3::ZERO, |d| d.cross(Vec3::new(0.0, 0.0, 1.0)));
    let stall_and_pull = |v: Vec3| {
        let stall = if pref_speed > 0.0 {
            avoid.stall_penalty * (1.0 - v.norm() / pref_speed).max(0.0)
        } else {
            0.0
        };
        (stall, (v - preferred).norm(), avoid.right_bias * v.dot(right))
    };
    let conflict = |v: Vec3| {
        let mut t_min = f64::INFINITY;
        for peer in &near {
            let closing = if peer.velocity == Vec3::ZERO {
                v
            } else {
                v * 2.0 - own.velocity - peer.velocity
            };
            t_min = t_min.min(time_to_conflict(peer.position - own.position, closing, avoid.safety_radius));
            if t_min == 0.0 {
                break;
            }
        }
        if t_min <= avoid.horizon {
            avoid.conflict_weight / t_min.max(1e-3)
        } else {
            0.0
        }
    };
    let penalty = |v: Vec3| {
        let (stall, pull, bias) = stall_and_pull(v);
        conflict(v) + stall + pull - bias
    };
    let mut best = preferred;
    let mut best_cost = penalty(preferred);
    // every term is nonnegative once the bias is at most 1, so a free
    // preferred velocity cannot be beaten
    if best_cost == 0.0 && avoid.right_bias <= 1.0 {
        return best;
    }
    let k = avoid.heading_samples.max(1);
    let m = avoid.speed_samples.max(1);
    let candidates = std::iter::once(own.velocity.clamp_norm(limits.max_speed))
        .chain(std::iter::once(Vec3::ZERO))
        .chain((0..k).flat_map(|h| {
            let (sin, cos) = (TAU * f64::from(h) / f64::from(k)).sin_cos();
            (1..=m).map(move |s| Vec3::new(cos, sin, 0.0) * (limits.max_speed * f64::from(s) / f64::from(m)))
        }));
    for v in candidates {
        // the conflict term is nonnegative, so this bound is exact
        let (stall, pull, bias) = stall_and_pull(v);
        if stall + pull - bias >= best_cost {
            continue;
        }
        let cost = conflict(v) + stall + pull - bias;
        if cost < best_cost {
            best = v;
            best_cost = cost;
        }
    }
    best
}

/// Advances one agent by one slot using estimated peer states.
///
/// The commanded velocity change is limited by `max_accel · slot_len`, the
/// speed by `max_speed`, and the position is integrated with the new velocity.
/// Hovering agents are returned unchanged.
pub fn step_agent(
    body: &AgentBody,
    peers: &[KinematicState],
    slot_len: f64,
    avoid: &AvoidanceParams,
) -> AgentBody {
    if body.hovering || !body.moving {
        return *body;
    }
    let cmd = velocity_command(body.state, body.target, peers, &body.limits, avoid);
    let dv = (cmd - body.state.velocity).clamp_norm(body.limits.max_accel * slot_len);
    let velocity = (body.state.velocity + dv).clamp_norm(body.limits.max_speed);
    let position = body.state.position + velocity * slot_len;
    AgentBody {
        state: KinematicState::new(position, velocity),
        ..*body
    }
}

/// First pair (lowest ids) closer than `collision_dist`.
pub fn check_collision(bodies: &[AgentBody], collision_dist: f64) -> Option<(AgentId, AgentId)> {
    for (i, a) in bodies.iter().enumerate() {
        for b in &bodies[i + 1..] {
            if euclidean_distance(a.state.position, b.state.position) < collision_dist {
                return Some((a.id, b.id));
            }
        }
    }
    None
}

pub fn reached_target(body: &AgentBody, r_min: f64) -> bool {
    position_error(body.state.position, body.target) <= r_min
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body_at(pos: Vec3, target: Vec3) -> AgentBody {
        AgentBody {
            id: AgentId(1),
            state: KinematicState::at_rest(pos),
            target,
            limits: MotionLimits::default(),
            moving: true,
            hovering: false,
        }
    }

    #[test]
    fn antipodal_targets_on_circle() {
        let sc = Scenario {
            n_moving: 12,
            ..Scenario::default()
        };
        let b = generate_scenario(&sc, 3).unwrap();
        assert_eq!(b.len(), 12);
        assert_eq!(b[0].target, b[6].state.position);
        assert_eq!(b[6].target, b[0].state.position);
        for x in &b {
            assert!(x.moving);
        }
    }

    #[test]
    fn two_movers_out_of_twelve() {
        let b = generate_scenario(&Scenario::default(), 3).unwrap();
        let movers: Vec<u32> = b.iter().filter(|x| x.moving).map(|x| x.id.0).collect();
        assert_eq!(movers, vec![1, 7]);
        for x in b.iter().filter(|x| !x.moving) {
            assert_eq!(x.target, x.state.position);
            assert_eq!(x.state.velocity, Vec3::ZERO);
        }
    }

    #[test]
    fn two_agent_swarm_targets_diametrically_opposite() {
        let sc = Scenario {
            n_agents: 2,
            n_moving: 2,
            formation: Formation::Circle { radius: 1.2 },
            ..Scenario::default()
        };
        let b = generate_scenario(&sc, 0).unwrap();
        assert!((euclidean_distance(b[0].state.position, b[0].target) - 2.4).abs() < 1e-12);
        assert_eq!(b[0].target, b[1].state.position);
    }

    #[test]
    fn seed_only_changes_headings() {
        let sc = Scenario {
            n_moving: 12,
            ..Scenario::default()
        };
        let a = generate_scenario(&sc, 1).unwrap();
        let b = generate_scenario(&sc, 2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.state.position, y.state.position);
            assert_eq!(x.target, y.target);
            assert!((x.state.velocity.norm() - y.state.velocity.norm()).abs() < 1e-12);
        }
        assert_ne!(a[0].state.velocity, b[0].state.velocity);
    }

    #[test]
    fn oversized_formation_rejected() {
        let sc = Scenario {
            formation: Formation::Circle { radius: 1.6 },
            ..Scenario::default()
        };
        assert!(matches!(
            generate_scenario(&sc, 0),
            Err(Error::Config { field: "radius", .. })
        ));
        let ok = Scenario {
            formation: Formation::Ellipse {
                radius_x: 1.4,
                radius_y: 2.2,
            },
            ..Scenario::default()
        };
        assert!(generate_scenario(&ok, 0).is_ok());
    }

    #[test]
    fn odd_partial_movers_rejected() {
        let sc = Scenario {
            n_agents: 18,
            n_moving: 9,
            ..Scenario::default()
        };
        assert!(matches!(sc.validate(), Err(Error::Config { field: "moving", .. })));
    }

    #[test]
    fn free_space_points_at_target() {
        let b = body_at(Vec3::ZERO, Vec3::new(2.0, 1.0, 0.0));
        let cmd = velocity_command(b.state, b.target, &[], &b.limits, &AvoidanceParams::default());
        let dir = (b.target - b.state.position).normalized().unwrap();
        assert!((cmd.normalized().unwrap() - dir).norm() < 1e-12);
        assert!(cmd.norm() <= b.limits.max_speed + 1e-12);
    }

    #[test]
    fn zero_command_at_target() {
        let p = Vec3::new(0.4, -0.2, 0.0);
        let cmd = velocity_command(KinematicState::at_rest(p), p, &[], &MotionLimits::default(), &AvoidanceParams::default());
        assert_eq!(cmd, Vec3::ZERO);
    }

    #[test]
    fn obstacle_on_path_deflects_sideways() {
        let avoid = AvoidanceParams::default();
        let limits = MotionLimits::default();
        let pos = Vec3::ZERO;
        let target = Vec3::new(2.0, 0.0, 0.0);
        let obstacle = KinematicState::at_rest(Vec3::new(0.4, 0.0, 0.0));
        let own = KinematicState::at_rest(pos);
        let free = velocity_command(own, target, &[], &limits, &avoid);
        let with = velocity_command(own, target, &[obstacle], &limits, &avoid);
        let toward = (obstacle.position - pos).normalized().unwrap();
        assert!(with.dot(toward) < free.dot(toward));
        assert!(with.y.abs() > 1e-6, "expected a lateral component, got {with}");
        assert_eq!(free.y, 0.0);
    }

    #[test]
    fn step_respects_limits() {
        let mut b = body_at(Vec3::ZERO, Vec3::new(3.0, 0.0, 0.0));
        let avoid = AvoidanceParams::default();
        let ts = 0.01;
        for _ in 0..800 {
            let next = step_agent(&b, &[], ts, &avoid);
            let dv = (next.state.velocity - b.state.velocity).norm();
            assert!(dv <= b.limits.max_accel * ts + 1e-12);
            assert!(next.state.velocity.norm() <= b.limits.max_speed + 1e-12);
            b = next;
        }
        assert!(reached_target(&b, 0.3));
    }

    #[test]
    fn hovering_body_is_identity() {
        let mut b = body_at(Vec3::new(1.0, 1.0, 0.0), Vec3::ZERO);
        b.enter_hover();
        let peers = [KinematicState::at_rest(Vec3::new(1.1, 1.0, 0.0))];
        assert_eq!(step_agent(&b, &peers, 0.01, &AvoidanceParams::default()), b);
    }

    #[test]
    fn collision_threshold_is_strict() {
        let mk = |id, x| AgentBody {
            id: AgentId(id),
            ..body_at(Vec3::new(x, 0.0, 0.0), Vec3::ZERO)
        };
        assert_eq!(
            check_collision(&[mk(1, 0.0), mk(2, 0.19)], 0.2),
            Some((AgentId(1), AgentId(2)))
        );
        assert_eq!(check_collision(&[mk(1, 0.0), mk(2, 0.2)], 0.2), None);
        assert_eq!(
            check_collision(&[mk(1, 0.0), mk(2, 1.0), mk(3, 1.1), mk(4, 0.05)], 0.2),
            Some((AgentId(1), AgentId(4)))
        );
    }

    #[test]
    fn reached_boundary() {
        let t = Vec3::new(1.0, 0.0, 0.0);
        assert!(reached_target(&body_at(t, t), 0.3));
        assert!(!reached_target(&body_at(Vec3::new(0.69, 0.0, 0.0), t), 0.3));
        assert!(reached_target(&body_at(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.3, 0.0)), 0.3));
    }
}
