//! Joint design of wideband OFDM transmit beamformers, IRS phase shifts and
//! Doppler receive filters for a dual-function radar-communications base
//! station assisted by several intelligent reflecting surfaces.
//!
//! The numerical core is generic over the real scalar ([`scalar::Real`],
//! implemented for `f32` and `f64`); the aliases at the crate root fix it to
//! `f64`.

pub mod ao;
pub mod beamformer;
pub mod channel;
pub mod config;
pub mod detection;
pub mod error;
pub mod experiment;
pub mod filterbank;
pub mod metrics;
pub mod phase;
pub mod qcqp;
pub mod scalar;
pub mod scenario;

pub use ao::{optimize, run_variants, SolveReport, SolverOptions, Variant};
pub use config::{default_scenario, load_scenario, parse_document, Document};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentKind, ExperimentSpec};
pub use scenario::Scenario;

pub type ChannelSet64 = channel::ChannelSet<f64>;
pub type ChannelSet32 = channel::ChannelSet<f32>;
pub type DesignVariables64 = metrics::DesignVariables<f64>;
pub type DesignVariables32 = metrics::DesignVariables<f32>;
pub type SolveReport64 = ao::SolveReport<f64>;
