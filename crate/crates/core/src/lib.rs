//! Deterministic simulator for fair federated learning over a simulated
//! wireless multiple-access channel.
//!
//! The library trains a shared model across agents that communicate only
//! through analog superposition: all agents transmit simultaneously and
//! the server receives channel-weighted sums, never individual updates.
//! Two methods share that machinery:
//!
//! - the fair engine ([`engine::run`]) minimizes the worst agent's loss
//!   via a penalized epigraph reformulation and projected subgradient
//!   steps, using three superposition rounds per iteration regardless of
//!   the number of agents;
//! - the averaging baseline ([`fedavg::run_fedavg`]) minimizes the mean
//!   loss over orthogonal time slots, one per agent per round.
//!
//! Runs are bitwise deterministic given a master seed: data generation,
//! channel draws, and trace output all derive from it. [`experiment`]
//! wires data generation, both methods, and CSV reporting together; the
//! `fedfair-sim` binary in the companion CLI crate exposes it.
//!
//! The numeric type is generic over [`scalar::Scalar`] (implemented for
//! `f32` and `f64`); the `*64` aliases at the crate root fix the common
//! double-precision case.

pub mod channel;
pub mod config;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod fedavg;
pub mod geometry;
pub mod loss;
pub mod metrics;
pub mod oracle;
pub mod scalar;
pub mod seeds;
pub mod trace;

/// The two training methods the simulator implements. Used for slot
/// accounting and output labeling wherever both run side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    FedFair,
    FedAvg,
}

pub use channel::{ChannelRealization, ChannelSpec, NormalizedCoefficients, ReceivedSignals};
pub use config::{PenaltyWeights, RunConfig, StepSchedule};
pub use datagen::DataGenSpec;
pub use engine::{Agent, LocalUpdate, ModelState, TraceSettings};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, ExperimentSummary, MethodChoice, Overrides};
pub use fedavg::SlotLedger;
pub use geometry::BallSet;
pub use loss::{AgentDataset, LogisticLoss, LossFunction, QuadraticLoss};
pub use metrics::ConfusionMatrix;
pub use oracle::OracleSolution;
pub use scalar::Scalar;
pub use trace::{RunTrace, TraceRow};

/// Double-precision aliases for the generic core types.
pub type Real = f64;
pub type AgentDataset64 = loss::AgentDataset<f64>;
pub type Agent64 = engine::Agent<f64>;
pub type BallSet64 = geometry::BallSet<f64>;
pub type ChannelSpec64 = channel::ChannelSpec<f64>;
pub type DataGenSpec64 = datagen::DataGenSpec<f64>;
pub type ExperimentConfig64 = experiment::ExperimentConfig<f64>;
pub type ModelState64 = engine::ModelState<f64>;
pub type RunConfig64 = config::RunConfig<f64>;
pub type RunTrace64 = trace::RunTrace<f64>;
