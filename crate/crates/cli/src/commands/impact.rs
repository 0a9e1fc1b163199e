use latent_lob::bvp::{stationary_profile, BvpConfig};
use latent_lob::exec::Execution;
use latent_lob::grid::log_space;
use latent_lob::impact::{
    crossover_time, fit_impact_exponent, run_metaorder, GeometricImpact, MetaorderSpec, RegimeNumbers,
};
use latent_lob::sim::SimConfig;
use latent_lob::ModelParams;
use serde::{Deserialize, Serialize};

use super::simulate::default_lattice;
use crate::run::{CliError, Job, Output, Status};

/// Simulated metaorder execution, with the static-book prediction alongside
/// when the book has a closed form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactJob {
    pub sim: SimConfig,
    pub metaorder: MetaorderSpec,
    #[serde(default = "default_members")]
    pub members: usize,
    #[serde(default)]
    pub solver: BvpConfig,
    /// Executed volume range for the exponent fit; `None` uses the last
    /// decade of the trajectory.
    #[serde(default)]
    pub exponent_window: Option<(f64, f64)>,
    /// Early and late time windows for the linear to square-root crossover.
    #[serde(default)]
    pub crossover_windows: Option<((f64, f64), (f64, f64))>,
    #[serde(default = "default_geometric_points")]
    pub geometric_points: usize,
}

fn default_members() -> usize {
    8
}

fn default_geometric_points() -> usize {
    200
}

impl Default for ImpactJob {
    fn default() -> Self {
        let mut sim = default_lattice(0);
        sim.p_diff_revealed = 0.0;
        ImpactJob {
            sim,
            metaorder: MetaorderSpec { rate: 20.0, duration: 100.0 },
            members: default_members(),
            solver: BvpConfig::default(),
            exponent_window: None,
            crossover_windows: None,
            geometric_points: default_geometric_points(),
        }
    }
}

#[derive(Serialize)]
struct Report {
    regime: RegimeNumbers,
    executed_volume: f64,
    points: usize,
    crisis: bool,
    exponent_window: Option<(f64, f64)>,
    exponent: Option<f64>,
    crossover_time: Option<f64>,
    /// Static-book supremum of executable volume.
    q_sup: Option<f64>,
    geometric: Option<String>,
}

fn geometric_rows(p: &ModelParams, n: usize) -> Result<(f64, Vec<(f64, f64)>), CliError> {
    let g = GeometricImpact::new(p)?;
    let qs = log_space(1e-4 * g.q_sup(), 0.99 * g.q_sup(), n.max(2));
    let rows = qs.iter().map(|&q| g.price(q).map(|x| (q, x))).collect::<Result<Vec<_>, _>>()?;
    Ok((g.q_sup(), rows))
}

impl Job for ImpactJob {
    const NAME: &'static str = "impact";

    fn set_seed(&mut self, seed: u64) {
        self.sim.seed = seed;
    }

    fn seed(&self) -> Option<u64> {
        Some(self.sim.seed)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.sim.validate()?;
        self.metaorder.validate()?;
        if self.members == 0 {
            return Err(CliError::Config("members must be ≥ 1".into()));
        }
        if let Some((lo, hi)) = self.exponent_window {
            if !(lo > 0.0 && hi > lo) {
                return Err(CliError::Config(format!("bad exponent window ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    fn execute(&self, out: &mut Output, exec: Execution) -> Result<Status, CliError> {
        let params = self.sim.params()?;
        let init = stationary_profile(&params, &self.solver)?;
        let traj = run_metaorder(&self.sim, &init, &self.metaorder, self.members, exec)?;
        out.write("trajectory.csv", |w| traj.write_csv(w))?;

        let executed = traj.q.last().copied().unwrap_or(0.0);
        let window = self.exponent_window.or((executed > 0.0).then_some((0.1 * executed, executed)));
        let exponent = window.and_then(|(lo, hi)| fit_impact_exponent(&traj, lo, hi).ok());
        let crossover = self.crossover_windows.and_then(|(e, l)| crossover_time(&traj, e, l).ok());
        let mut report = Report {
            regime: traj.regime,
            executed_volume: executed,
            points: traj.len(),
            crisis: traj.crisis,
            exponent_window: window,
            exponent,
            crossover_time: crossover,
            q_sup: None,
            geometric: None,
        };
        match geometric_rows(&params, self.geometric_points) {
            Ok((q_sup, rows)) => {
                report.q_sup = Some(q_sup);
                report.geometric = Some("geometric.csv".into());
                out.write("geometric.csv", |w| {
                    let mut wr = csv::Writer::from_writer(w);
                    wr.write_record(["q", "price"])?;
                    for (q, x) in &rows {
                        wr.write_record([format!("{q:e}"), format!("{x:e}")])?;
                    }
                    wr.flush()?;
                    Ok(())
                })?;
            }
            Err(e) => report.geometric = Some(format!("unavailable: {e}")),
        }
        out.json("report.json", &report)?;
        if traj.crisis {
            return Ok(Status::Partial("liquidity crisis: a member emptied the revealed book".into()));
        }
        Ok(Status::Complete)
    }
}
