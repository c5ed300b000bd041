use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use swarm_dtsa::campaign::{self, CampaignConfig, CampaignOutput, FormationKind, MovingSpec, SweepGrid};
use swarm_dtsa::{Protocol, Result};

#[derive(Parser)]
#[command(version, about = "Compare TDMA and dynamic slot allocation on simulated swarm tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one campaign of seeded simulations.
    Run(Overrides),
    /// Run a campaign for every cell of a parameter grid.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Protocols to sweep, comma separated.
        #[arg(long, value_delimiter = ',')]
        grid_protocol: Vec<Protocol>,
        /// Mover counts to sweep (`half` and `all` allowed), comma separated.
        #[arg(long, value_delimiter = ',')]
        grid_moving: Vec<MovingSpec>,
        /// Swarm sizes to sweep, comma separated.
        #[arg(long, value_delimiter = ',')]
        grid_agents: Vec<u32>,
        /// Slot lengths in milliseconds to sweep, comma separated.
        #[arg(long, value_delimiter = ',')]
        grid_slot_ms: Vec<f64>,
    },
    /// Print the effective configuration as TOML.
    Config(Overrides),
}

/// Every flag overrides the key of the same name in the config file.
#[derive(Args)]
struct Overrides {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    protocol: Option<Protocol>,
    #[arg(long)]
    agents: Option<u32>,
    /// Mover count, `half` or `all`.
    #[arg(long)]
    moving: Option<MovingSpec>,
    /// `circle` or `ellipse`.
    #[arg(long)]
    formation: Option<FormationKind>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    radius_y: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    altitude: Option<f64>,
    #[arg(long)]
    slot_ms: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    rmin: Option<f64>,
    #[arg(long)]
    c_const: Option<f64>,
    #[arg(long)]
    collision_dist: Option<f64>,
    /// Staleness cap in multiples of the active-set size, 0 to disable.
    #[arg(long)]
    staleness: Option<f64>,
    /// Packet loss probability.
    #[arg(long)]
    loss: Option<f64>,
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    timeout_s: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_speed: Option<f64>,
    #[arg(long)]
    max_accel: Option<f64>,
}

macro_rules! apply {
    ($cfg:ident, $o:ident, $($field:ident),*) => {
        $(if let Some(v) = $o.$field.clone() { $cfg.$field = v; })*
    };
}

impl Overrides {
    fn resolve(&self) -> Result<CampaignConfig> {
        let mut cfg = match &self.config {
            Some(path) => CampaignConfig::load(path)?,
            None => CampaignConfig::default(),
        };
        apply!(
            cfg, self, protocol, agents, moving, formation, radius, altitude, slot_ms, epsilon, rmin,
            c_const, collision_dist, staleness, loss, runs, seed, timeout_s, out, max_speed, max_accel
        );
        if self.radius_y.is_some() {
            cfg.radius_y = self.radius_y;
        }
        Ok(cfg)
    }
}

fn report(out: &CampaignOutput, cfg: &CampaignConfig) {
    for s in &out.summaries {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        println!(
            "{:<5} N={:<3} moving={:<3} t_s={}ms  runs={} collisions={} timeouts={}  min_dist={} traj_eff={} completion_s={}",
            s.cell.protocol,
            s.cell.n_agents,
            s.cell.n_moving,
            s.cell.t_s_ms,
            s.runs,
            s.collisions,
            s.timeouts,
            fmt(s.min_distance.mean),
            fmt(s.trajectory_efficiency.mean),
            fmt(s.completion_s.mean),
        );
    }
    println!("wrote {}", cfg.out.join("summary.csv").display());
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(o) => {
            let cfg = o.resolve()?;
            let out = campaign::run_campaign(&cfg)?;
            report(&out, &cfg);
        }
        Command::Sweep {
            overrides,
            grid_protocol,
            grid_moving,
            grid_agents,
            grid_slot_ms,
        } => {
            let mut cfg = overrides.resolve()?;
            let mut grid = cfg.sweep.take().unwrap_or_default();
            if !grid_protocol.is_empty() {
                grid.protocol = grid_protocol;
            }
            if !grid_moving.is_empty() {
                grid.moving = grid_moving;
            }
            if !grid_agents.is_empty() {
                grid.agents = grid_agents;
            }
            if !grid_slot_ms.is_empty() {
                grid.slot_ms = grid_slot_ms;
            }
            if grid == SweepGrid::default() {
                grid.protocol = vec![Protocol::Tdma, Protocol::Dtsa];
            }
            cfg.sweep = Some(grid);
            let out = campaign::sweep(&cfg)?;
            report(&out, &cfg);
        }
        Command::Config(o) => {
            let cfg = o.resolve()?;
            cfg.validate()?;
            print!("{}", cfg.to_toml_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
