//! Particle simulation of the latent/revealed book on a price lattice.

mod config;
mod run;
mod state;
mod volatility;

pub use config::{SimConfig, WrongSideMode};
pub use run::{
    average_profiles, run, run_ensemble, AveragedProfile, EnsembleOutput, MemberSummary, PriceSeries, RunMetadata,
    RunOutput,
};
pub use state::{best_quotes, fair_edge, SimState, StepStats};
pub use volatility::{volatility, windows, Ohlc, Volatility};
