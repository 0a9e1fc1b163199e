use latent_lob::bvp::{stationary_profile, BvpConfig};
use latent_lob::exec::Execution;
use latent_lob::sim::{run_ensemble, SimConfig};
use latent_lob::ModelParams;
use serde::{Deserialize, Serialize};

use crate::run::{CliError, Job, Output, Status};

/// Particle simulation started from the stationary book of the lattice's
/// continuum parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateJob {
    pub sim: SimConfig,
    #[serde(default = "default_members")]
    pub members: usize,
    #[serde(default)]
    pub solver: BvpConfig,
}

fn default_members() -> usize {
    4
}

/// `kℓ_ℓ = 0.35`, `ℓ_r/ℓ_ℓ = 0.32`, twenty bins per `1/k`.
pub fn default_lattice(n_steps: u64) -> SimConfig {
    let (k, l) = (0.05, 7.0);
    let d = 0.5;
    let p = ModelParams::new(d, d * 0.32 * 0.32, d / (l * l), k, 10.0).expect("valid defaults");
    let mut c = SimConfig::for_params(&p, 400, 1.0, 1.0, n_steps).expect("valid defaults");
    c.burn_in_steps = Some(5000);
    c
}

impl Default for SimulateJob {
    fn default() -> Self {
        SimulateJob { sim: default_lattice(20_000), members: default_members(), solver: BvpConfig::default() }
    }
}

#[derive(Serialize)]
struct VolatilityRow {
    member: u64,
    trade_rs: Option<f64>,
    trade_parkinson: Option<f64>,
    fair_rs: Option<f64>,
    fair_parkinson: Option<f64>,
}

impl Job for SimulateJob {
    const NAME: &'static str = "simulate";

    fn set_seed(&mut self, seed: u64) {
        self.sim.seed = seed;
    }

    fn seed(&self) -> Option<u64> {
        Some(self.sim.seed)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.sim.validate()?;
        if self.members == 0 {
            return Err(CliError::Config("members must be ≥ 1".into()));
        }
        Ok(())
    }

    fn execute(&self, out: &mut Output, exec: Execution) -> Result<Status, CliError> {
        let init = stationary_profile(&self.sim.params()?, &self.solver)?;
        let e = run_ensemble(&self.sim, &init, self.members, exec)?;
        let meta = e.metadata(&self.sim);
        if let Some(p) = &e.profile {
            out.write("profile.csv", |w| p.write_csv(w))?;
        }
        let mut vol = Vec::new();
        for r in &e.runs {
            out.write(&format!("series_{:03}.csv", r.member), |w| r.series.write_csv(w))?;
            let t = r.series.trade_volatility().ok();
            let f = r.series.fair_volatility().ok();
            vol.push(VolatilityRow {
                member: r.member,
                trade_rs: t.map(|v| v.rs2.sqrt()),
                trade_parkinson: t.map(|v| v.p2.sqrt()),
                fair_rs: f.map(|v| v.rs2.sqrt()),
                fair_parkinson: f.map(|v| v.p2.sqrt()),
            });
        }
        out.json("volatility.json", &vol)?;
        out.json("metadata.json", &meta)?;
        if meta.any_overflow {
            return Ok(Status::Partial("a run left the price domain and stopped early".into()));
        }
        Ok(Status::Complete)
    }
}
