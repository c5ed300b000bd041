//! Slot-synchronous swarm communication: a dynamic time slot allocation
//! scheduler, its static TDMA baseline, and a point-mass simulator that
//! compares them on antipodal position-exchange tasks.

pub mod campaign;
pub mod channel;
pub mod dtsa;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod geom;
pub mod metrics;
pub mod params;
pub mod sim;
pub mod tdma;

pub use error::{Error, Result};
pub use geom::{AgentId, KinematicState, Vec3};
pub use params::ProtocolParams;
pub use sim::{simulate, Protocol, SimConfig, Simulation};
