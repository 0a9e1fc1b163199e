use latent_lob::bvp::BvpConfig;
use latent_lob::exec::Execution;
use latent_lob::grid::{lin_space, log_space};
use latent_lob::stability::{critical_from_cells, critical_line, sweep, write_cells_csv, CriticalSearch};
use serde::{Deserialize, Serialize};

use crate::run::{CliError, Job, Output, Status};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    #[serde(default)]
    pub log: bool,
}

impl Axis {
    fn points(&self) -> Vec<f64> {
        if self.log {
            log_space(self.lo, self.hi, self.n)
        } else {
            lin_space(self.lo, self.hi, self.n)
        }
    }

    fn check(&self, name: &str) -> Result<(), CliError> {
        let ok = self.n >= 1 && self.lo.is_finite() && self.hi >= self.lo && (!self.log || self.lo > 0.0);
        let ok = ok && self.lo >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(CliError::Config(format!("bad {name} axis {self:?}")))
        }
    }
}

/// Stability map over `(kℓ_ℓ, kℓ_r)` plus the critical line sampled at
/// fixed ratios.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapJob {
    pub k_ll: Axis,
    pub k_lr: Axis,
    pub ratios: Vec<f64>,
    pub solver: BvpConfig,
    pub search: CriticalSearch,
}

impl Default for MapJob {
    fn default() -> Self {
        MapJob {
            k_ll: Axis { lo: 0.01, hi: 3.0, n: 25, log: true },
            k_lr: Axis { lo: 0.001, hi: 3.0, n: 25, log: true },
            ratios: log_space(0.01, 1.0, 9),
            solver: BvpConfig::with_points(801),
            search: CriticalSearch::default(),
        }
    }
}

#[derive(Serialize)]
struct Summary {
    cells: usize,
    stable: usize,
    unstable: usize,
    failed: usize,
    /// `(kℓ_r, kℓ_ℓ)` where stability flips along each `kℓ_r` column.
    boundary_from_cells: Vec<(f64, f64)>,
    excluded_ratios: Vec<(f64, String)>,
}

impl Job for MapJob {
    const NAME: &'static str = "map";

    fn validate(&self) -> Result<(), CliError> {
        self.k_ll.check("k_ll")?;
        self.k_lr.check("k_lr")?;
        if self.ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(CliError::Config("ratios must be positive".into()));
        }
        if self.ratios.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config("ratios must be increasing".into()));
        }
        Ok(())
    }

    fn execute(&self, out: &mut Output, exec: Execution) -> Result<Status, CliError> {
        let cells = sweep(&self.k_ll.points(), &self.k_lr.points(), &self.solver, exec);
        out.write("cells.csv", |w| write_cells_csv(&cells, w))?;
        let line = critical_line(&self.ratios, &self.solver, &self.search, exec);
        out.write("critical_line.csv", |w| line.write_csv(w))?;
        let failed = cells.iter().filter(|c| c.error.is_some()).count();
        let stable = cells.iter().filter(|c| c.error.is_none() && c.stable).count();
        out.json(
            "summary.json",
            &Summary {
                cells: cells.len(),
                stable,
                unstable: cells.len() - failed - stable,
                failed,
                boundary_from_cells: critical_from_cells(&cells),
                excluded_ratios: line.excluded.clone(),
            },
        )?;
        Ok(Status::Complete)
    }
}
