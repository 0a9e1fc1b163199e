use latent_lob::analytic::{jump_at_origin, stationary_dr0, stationary_dreq, DreqSolution};
use latent_lob::bvp::{solve_stationary, BvpConfig};
use latent_lob::exec::Execution;
use latent_lob::grid::{clustered_grid, default_xi_max};
use latent_lob::{BookProfile, ModelParams};
use serde::{Deserialize, Serialize};

use crate::run::{CliError, Job, Output, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    AnalyticDr0,
    AnalyticDreq,
    Bvp,
}

/// Rescaled stationary book (`k = 𝓛 = ω = 1`). The analytic modes fix the
/// revealed length themselves and ignore `ratio`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationaryJob {
    pub mode: Mode,
    pub k_ll: f64,
    /// `ℓ_r/ℓ_ℓ`
    pub ratio: f64,
    pub solver: BvpConfig,
    /// Compare a solver run against the closed form when one exists.
    pub compare: bool,
}

impl Default for StationaryJob {
    fn default() -> Self {
        StationaryJob { mode: Mode::Bvp, k_ll: 0.35, ratio: 0.32, solver: BvpConfig::default(), compare: true }
    }
}

#[derive(Serialize)]
struct Summary {
    mode: Mode,
    k_ll: f64,
    k_lr: f64,
    points: usize,
    phi_at_origin: f64,
    /// `φ_r(0⁻) − φ_r(0⁺)`, present when the revealed book is discontinuous.
    phi_jump_at_origin: Option<f64>,
    slope_at_origin_rescaled: Option<f64>,
    reference: Option<Mode>,
    max_relative_error: Option<f64>,
}

impl StationaryJob {
    fn k_lr(&self) -> f64 {
        match self.mode {
            Mode::AnalyticDr0 => 0.0,
            Mode::AnalyticDreq => self.k_ll,
            Mode::Bvp => self.k_ll * self.ratio,
        }
    }

    fn grid(&self) -> Vec<f64> {
        let xi_max = self.solver.xi_max.unwrap_or_else(|| default_xi_max(1.0, self.k_ll));
        clustered_grid(self.solver.n_points, xi_max, self.solver.clustering)
    }
}

impl Job for StationaryJob {
    const NAME: &'static str = "stationary";

    fn validate(&self) -> Result<(), CliError> {
        if !(self.k_ll > 0.0 && self.k_ll.is_finite()) {
            return Err(CliError::Config(format!("k_ll = {} must be positive", self.k_ll)));
        }
        if !(self.ratio >= 0.0 && self.ratio.is_finite()) {
            return Err(CliError::Config(format!("ratio = {} must be ≥ 0", self.ratio)));
        }
        if self.solver.n_points < 101 {
            return Err(CliError::Config(format!("solver.n_points = {} < 101", self.solver.n_points)));
        }
        Ok(())
    }

    fn execute(&self, out: &mut Output, _exec: Execution) -> Result<Status, CliError> {
        let p = ModelParams::dimensionless(self.k_ll, self.k_lr())?;
        let dr0 = p.d_revealed() == 0.0;
        let mut summary = Summary {
            mode: self.mode,
            k_ll: self.k_ll,
            k_lr: self.k_lr(),
            points: 0,
            phi_at_origin: 0.0,
            phi_jump_at_origin: if dr0 { Some(jump_at_origin(&p)?) } else { None },
            slope_at_origin_rescaled: None,
            reference: None,
            max_relative_error: None,
        };
        let profile: BookProfile = match self.mode {
            Mode::AnalyticDr0 => stationary_dr0(&p, &self.grid())?,
            Mode::AnalyticDreq => {
                summary.slope_at_origin_rescaled = Some(DreqSolution::new(&p)?.slope_at_origin_rescaled());
                stationary_dreq(&p, &self.grid())?
            }
            Mode::Bvp => {
                let sol = solve_stationary(&p, &self.solver)?;
                summary.slope_at_origin_rescaled = sol.diagnostics.slope_rescaled;
                out.write("diagnostics.json", |w| sol.diagnostics.write_json(w))?;
                if self.compare && (dr0 || self.ratio == 1.0) {
                    let (mode, exact) = if dr0 {
                        (Mode::AnalyticDr0, stationary_dr0(&p, &sol.profile.grid)?)
                    } else {
                        (Mode::AnalyticDreq, stationary_dreq(&p, &sol.profile.grid)?)
                    };
                    summary.reference = Some(mode);
                    summary.max_relative_error = Some(sol.profile.relative_deviation(&exact)?);
                }
                sol.profile
            }
        };
        summary.points = profile.len();
        summary.phi_at_origin = profile.phi_revealed[0];
        out.write("profile.csv", |w| profile.write_csv(w))?;
        out.json("summary.json", &summary)?;
        Ok(Status::Complete)
    }
}
