//! Metaorder impact: static-book inversions and simulated executions.

mod geometric;
mod metaorder;

pub use geometric::{
    dilogarithm, geometric_impact_dr0, geometric_impact_dreq, llob_reference, volume_dr0_closed, volume_dreq_closed,
    GeometricImpact, Regime,
};
pub use metaorder::{
    crossover_time, fit_impact_exponent, run_metaorder, ImpactTrajectory, MetaorderSpec, RegimeNumbers,
};
