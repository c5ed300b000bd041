//! Seeded Monte Carlo campaigns and parameter sweeps with file output.
//!
//! Output layout:
//!
//! ```text
//! <out>/summary.csv
//! <out>/<cell-name>/run-<k>/trajectory.csv
//! <out>/<cell-name>/run-<k>/slots.jsonl
//! ```
//!
//! Run `k` of every cell uses seed `seed + k`, so both protocols see the same
//! scenario randomness and metric differences come from scheduling alone.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{AvoidanceParams, Formation, MotionLimits, Scenario};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_campaign, write_summary_csv, CellSummary, RunRecord};
use crate::params::ProtocolParams;
use crate::sim::{simulate, Protocol, RunResult, SimConfig};

/// How many agents move: an explicit count, half the swarm, or everyone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MovingRepr", into = "MovingRepr")]
pub enum MovingSpec {
    Count(u32),
    Half,
    All,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MovingRepr {
    Count(u32),
    Word(String),
}

impl TryFrom<MovingRepr> for MovingSpec {
    type Error = Error;

    fn try_from(r: MovingRepr) -> Result<Self> {
        match r {
            MovingRepr::Count(n) => Ok(MovingSpec::Count(n)),
            MovingRepr::Word(w) => w.parse(),
        }
    }
}

impl From<MovingSpec> for MovingRepr {
    fn from(m: MovingSpec) -> Self {
        match m {
            MovingSpec::Count(n) => MovingRepr::Count(n),
            other => MovingRepr::Word(other.to_string()),
        }
    }
}

impl MovingSpec {
    /// Number of movers in a swarm of `n_agents`. Half the swarm is rounded
    /// up to an even count so movers always come in antipodal pairs.
    pub fn resolve(self, n_agents: u32) -> u32 {
        match self {
            MovingSpec::Count(m) => m,
            MovingSpec::All => n_agents,
            MovingSpec::Half => {
                let h = n_agents.div_ceil(2);
                (h + h % 2).min(n_agents)
            }
        }
    }
}

impl FromStr for MovingSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "half" => Ok(MovingSpec::Half),
            "all" => Ok(MovingSpec::All),
            other => other
                .parse()
                .map(MovingSpec::Count)
                .map_err(|_| Error::config("moving", format!("expected a count, `half` or `all`, got `{s}`"))),
        }
    }
}

impl fmt::Display for MovingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MovingSpec::Count(n) => write!(f, "{n}"),
            MovingSpec::Half => f.write_str("half"),
            MovingSpec::All => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormationKind {
    Circle,
    Ellipse,
}

impl FromStr for FormationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "circle" => Ok(FormationKind::Circle),
            "ellipse" => Ok(FormationKind::Ellipse),
            other => Err(Error::config("formation", format!("unknown formation `{other}`"))),
        }
    }
}

/// Optional grid over which [`sweep`] runs one campaign per cell. An empty
/// axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SweepGrid {
    pub protocol: Vec<Protocol>,
    pub moving: Vec<MovingSpec>,
    pub agents: Vec<u32>,
    pub slot_ms: Vec<f64>,
}

/// Everything needed to reproduce a campaign. Keys match the CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CampaignConfig {
    pub protocol: Protocol,
    pub agents: u32,
    pub moving: MovingSpec,
    pub formation: FormationKind,
    /// Circle radius, or the x semi-axis of an ellipse (m).
    pub radius: f64,
    /// y semi-axis of an ellipse (m). Defaults to `radius`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_y: Option<f64>,
    pub altitude: f64,
    pub slot_ms: f64,
    pub epsilon: f64,
    pub rmin: f64,
    pub c_const: f64,
    pub collision_dist: f64,
    /// Staleness cap in multiples of the active-set size; 0 disables it.
    pub staleness: f64,
    pub loss: f64,
    pub runs: u32,
    pub seed: u64,
    pub timeout_s: f64,
    pub out: PathBuf,
    pub max_speed: f64,
    pub max_accel: f64,
    pub initial_speed: f64,
    pub heading_jitter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        let sc = Scenario::default();
        let p = ProtocolParams::default();
        let radius = match sc.formation {
            Formation::Circle { radius } => radius,
            Formation::Ellipse { radius_x, .. } => radius_x,
        };
        Self {
            protocol: Protocol::Dtsa,
            agents: sc.n_agents,
            moving: MovingSpec::Count(sc.n_moving),
            formation: FormationKind::Circle,
            radius,
            radius_y: None,
            altitude: sc.altitude,
            slot_ms: p.slot_len * 1000.0,
            epsilon: p.epsilon,
            rmin: p.r_min,
            c_const: p.c_const,
            collision_dist: p.collision_dist,
            staleness: p.staleness_factor.unwrap_or(0.0),
            loss: 0.0,
            runs: 10,
            seed: 0,
            timeout_s: 60.0,
            out: PathBuf::from("out"),
            max_speed: sc.limits.max_speed,
            max_accel: sc.limits.max_accel,
            initial_speed: sc.initial_speed,
            heading_jitter: sc.heading_jitter,
            sweep: None,
        }
    }
}

impl CampaignConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigFile {
            path: PathBuf::from("<inline>"),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::ConfigFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("campaign config is always representable")
    }

    pub fn scenario(&self) -> Scenario {
        let formation = match self.formation {
            FormationKind::Circle => Formation::Circle { radius: self.radius },
            FormationKind::Ellipse => Formation::Ellipse {
                radius_x: self.radius,
                radius_y: self.radius_y.unwrap_or(self.radius),
            },
        };
        Scenario {
            n_agents: self.agents,
            n_moving: self.moving.resolve(self.agents),
            formation,
            altitude: self.altitude,
            limits: MotionLimits {
                max_speed: self.max_speed,
                max_accel: self.max_accel,
            },
            initial_speed: self.initial_speed,
            heading_jitter: self.heading_jitter,
            ..Scenario::default()
        }
    }

    pub fn params(&self) -> ProtocolParams {
        ProtocolParams {
            slot_len: self.slot_ms / 1000.0,
            epsilon: self.epsilon,
            r_min: self.rmin,
            c_const: self.c_const,
            collision_dist: self.collision_dist,
            staleness_factor: (self.staleness != 0.0).then_some(self.staleness),
        }
    }

    /// Simulation settings of run `k`.
    pub fn sim_config(&self, k: u32) -> SimConfig {
        let params = self.params();
        SimConfig {
            scenario: self.scenario(),
            params,
            avoidance: AvoidanceParams::default(),
            protocol: self.protocol,
            seed: self.seed.wrapping_add(u64::from(k)),
            timeout_slots: (self.timeout_s / params.slot_len).round() as u64,
            loss_probability: self.loss,
            verify_consensus: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::config("runs", "must be at least 1"));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(Error::config("timeout-s", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.loss) {
            return Err(Error::config("loss", "must lie in [0, 1)"));
        }
        if let Some(ry) = self.radius_y {
            if !(ry.is_finite() && ry > 0.0) {
                return Err(Error::config("radius-y", "must be positive"));
            }
        }
        self.params().validate()?;
        self.scenario().validate()?;
        let cfg = self.sim_config(0);
        if cfg.timeout_slots == 0 {
            return Err(Error::config("timeout-s", "shorter than one slot"));
        }
        if cfg.scenario.min_spacing() <= cfg.params.collision_dist {
            return Err(Error::config(
                "agents",
                "formation spacing does not exceed the collision distance",
            ));
        }
        Ok(())
    }

    /// Directory name of this cell, unique across a sweep grid.
    pub fn cell_name(&self) -> String {
        format!(
            "{}-n{}-m{}-ts{}ms",
            self.protocol,
            self.agents,
            self.moving.resolve(self.agents),
            self.slot_ms
        )
    }

    /// One config per grid cell, ordered protocol, moving, agents, slot length.
    /// Without a grid this is the config itself.
    pub fn cells(&self) -> Vec<CampaignConfig> {
        let base = CampaignConfig {
            sweep: None,
            ..self.clone()
        };
        let Some(grid) = &self.sweep else {
            return vec![base];
        };
        fn axis<T: Copy>(values: &[T], fallback: T) -> Vec<T> {
            if values.is_empty() {
                vec![fallback]
            } else {
                values.to_vec()
            }
        }
        let mut out = Vec::new();
        for &protocol in &axis(&grid.protocol, base.protocol) {
            for &moving in &axis(&grid.moving, base.moving) {
                for &agents in &axis(&grid.agents, base.agents) {
                    for &slot_ms in &axis(&grid.slot_ms, base.slot_ms) {
                        out.push(CampaignConfig {
                            protocol,
                            moving,
                            agents,
                            slot_ms,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// Records of every run plus the per-cell summary rows.
#[derive(Debug, Clone)]
pub struct CampaignOutput {
    pub records: Vec<RunRecord>,
    pub summaries: Vec<CellSummary>,
}

#[derive(Serialize)]
struct TrajectoryRow {
    slot: usize,
    id: u32,
    x: f64,
    y: f64,
    z: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    moving: bool,
    reached: bool,
}

/// Per-slot true states of every agent as CSV.
pub fn write_trajectory_csv<W: Write>(result: &RunResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let slots = result.trajectories.first().map_or(0, Vec::len);
    for slot in 0..slots {
        for ((traj, body), arrived) in result.trajectories.iter().zip(&result.bodies).zip(&result.arrivals) {
            let s = traj[slot];
            w.serialize(TrajectoryRow {
                slot,
                id: body.id.0,
                x: s.position.x,
                y: s.position.y,
                z: s.position.z,
                vx: s.velocity.x,
                vy: s.velocity.y,
                vz: s.velocity.z,
                moving: body.moving,
                reached: arrived.is_some_and(|a| a as usize <= slot),
            })?;
        }
    }
    w.flush().map_err(|e| Error::io("<trajectory>", e))?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn run_cell(cell: &CampaignConfig, out: &Path) -> Result<Vec<RunRecord>> {
    let name = cell.cell_name();
    (0..cell.runs)
        .map(|k| {
            let result = simulate(cell.sim_config(k))?;
            let rel = PathBuf::from(&name).join(format!("run-{k}"));
            let dir = out.join(&rel);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let traj_path = dir.join("trajectory.csv");
            write_trajectory_csv(&result, create(&traj_path)?)?;
            let log_path = dir.join("slots.jsonl");
            let mut w = create(&log_path)?;
            result.log.write_jsonl(&mut w)?;
            w.flush().map_err(|e| Error::io(&log_path, e))?;
            let mut record = result.record;
            record.run_index = k;
            record.slot_log = Some(rel.join("slots.jsonl").to_string_lossy().into_owned());
            Ok(record)
        })
        .collect()
}

/// Runs every grid cell (or the single base cell) and writes all outputs
/// below `config.out`.
pub fn sweep(config: &CampaignConfig) -> Result<CampaignOutput> {
    let cells = config.cells();
    for cell in &cells {
        cell.validate()?;
    }
    let out = &config.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut records = Vec::new();
    for cell in &cells {
        records.extend(run_cell(cell, out)?);
    }
    let summaries = aggregate_campaign(&records);
    let summary_path = out.join("summary.csv");
    let mut w = create(&summary_path)?;
    write_summary_csv(&summaries, &mut w)?;
    w.flush().map_err(|e| Error::io(&summary_path, e))?;
    Ok(CampaignOutput { records, summaries })
}

/// Runs the base cell only, ignoring any sweep grid.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignOutput> {
    sweep(&CampaignConfig {
        sweep: None,
        ..config.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_spec_parses_and_resolves() {
        assert_eq!("half".parse::<MovingSpec>().unwrap(), MovingSpec::Half);
        assert_eq!("ALL".parse::<MovingSpec>().unwrap(), MovingSpec::All);
        assert_eq!("4".parse::<MovingSpec>().unwrap(), MovingSpec::Count(4));
        assert!("some".parse::<MovingSpec>().is_err());
        assert_eq!(MovingSpec::Half.resolve(12), 6);
        assert_eq!(MovingSpec::Half.resolve(18), 10);
        assert_eq!(MovingSpec::Half.resolve(2), 2);
        assert_eq!(MovingSpec::All.resolve(7), 7);
    }

    #[test]
    fn default_config_round_trips() {
        let cfg = CampaignConfig::default();
        let back = CampaignConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_with_grid_round_trips() {
        let text = r#"
protocol = "tdma"
agents = 18
moving = "half"
formation = "ellipse"
radius = 1.2
radius-y = 1.6
slot-ms = 20.0
runs = 3
seed = 42
out = "results"

[sweep]
protocol = ["tdma", "dtsa"]
moving = [2, "half", "all"]
"#;
        let cfg = CampaignConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.protocol, Protocol::Tdma);
        assert_eq!(cfg.moving, MovingSpec::Half);
        assert_eq!(cfg.radius_y, Some(1.6));
        assert_eq!(cfg.epsilon, 0.5);
        let grid = cfg.sweep.as_ref().unwrap();
        assert_eq!(grid.moving, vec![MovingSpec::Count(2), MovingSpec::Half, MovingSpec::All]);
        let back = CampaignConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.cells().len(), 6);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(
            CampaignConfig::from_toml_str("agnets = 3"),
            Err(Error::ConfigFile { .. })
        ));
    }

    #[test]
    fn validation_names_the_field() {
        let bad = [
            (CampaignConfig { runs: 0, ..Default::default() }, "runs"),
            (CampaignConfig { loss: 1.0, ..Default::default() }, "loss"),
            (CampaignConfig { epsilon: -1.0, ..Default::default() }, "epsilon"),
            (CampaignConfig { agents: 0, ..Default::default() }, "agents"),
            (CampaignConfig { moving: MovingSpec::Count(3), ..Default::default() }, "moving"),
            (CampaignConfig { radius: 9.0, ..Default::default() }, "radius"),
            (CampaignConfig { timeout_s: 0.0, ..Default::default() }, "timeout-s"),
            (CampaignConfig { agents: 60, moving: MovingSpec::All, ..Default::default() }, "agents"),
        ];
        for (cfg, field) in bad {
            match cfg.validate() {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected error on {field}, got {other:?}"),
            }
        }
        CampaignConfig::default().validate().unwrap();
    }

    #[test]
    fn paired_seeds_across_protocols() {
        let a = CampaignConfig { seed: 7, protocol: Protocol::Tdma, ..Default::default() };
        let b = CampaignConfig { protocol: Protocol::Dtsa, ..a.clone() };
        for k in 0..4 {
            assert_eq!(a.sim_config(k).seed, 7 + u64::from(k));
            assert_eq!(a.sim_config(k).seed, b.sim_config(k).seed);
        }
    }

    #[test]
    fn grid_cells_have_distinct_names() {
        let cfg = CampaignConfig {
            agents: 18,
            sweep: Some(SweepGrid {
                protocol: vec![Protocol::Tdma, Protocol::Dtsa],
                moving: vec![MovingSpec::Count(2), MovingSpec::Half, MovingSpec::All],
                slot_ms: vec![10.0, 20.0],
                ..Default::default()
            }),
            ..Default::default()
        };
        let names: Vec<String> = cfg.cells().iter().map(CampaignConfig::cell_name).collect();
        assert_eq!(names.len(), 12);
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 12);
        assert_eq!(names[0], "tdma-n18-m2-ts10ms");
        assert!(names.contains(&"dtsa-n18-m18-ts20ms".to_string()));
    }
}
