//! Round-based simulator for federated learning over a bandwidth- and
//! energy-constrained wireless uplink.
//!
//! Each round plays a two-level exchange between a central server and the
//! devices it schedules:
//!
//! * the **server** picks which devices should upload this round, weighting
//!   staleness (age of update) against local data volume ([`selection`]);
//! * the **devices** answer with the cheapest way to deliver those uploads:
//!   a per-pair latency-minimal compute/transmit split ([`allocator`]) and a
//!   swap-stable assignment of devices to sub-channels ([`matching`]).
//!
//! The learning side ([`learning`]) runs synchronous full-batch rounds on a
//! ridge-regression (or logistic) task and carries an exactly verifiable
//! convergence bound driven by the realized participation trace.
//! [`orchestrator`] ties the loop together and [`output`] persists runs as
//! `rounds.csv` / `summary.json` / `config_echo.toml`.
//!
//! Everything is deterministic given the master seed: every random draw comes
//! from a named substream (see [`rng`]), so two runs with the same resolved
//! configuration produce byte-identical outputs.

pub mod allocator;
pub mod config;
pub mod error;
pub mod follower;
pub mod learning;
pub mod matching;
pub mod orchestrator;
pub mod output;
pub mod rng;
pub mod selection;
pub mod system;

pub use error::Error;
