use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use latent_lob::bvp::BvpConfig;
use latent_lob::calibration::{
    fit, ingest_snapshots, stability_report, write_table, BinningConfig, FitConfig, TableRow,
};
use latent_lob::exec::Execution;
use latent_lob::grid::log_space;
use latent_lob::stability::{critical_line, CriticalSearch};
use serde::{Deserialize, Serialize};

use crate::run::{CliError, Job, Output, Status};

/// Snapshot files to empirical profile to fitted parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateJob {
    pub snapshots: Vec<PathBuf>,
    pub stock: String,
    /// Average daily volume, copied into the table when known.
    pub daily_volume: Option<f64>,
    pub binning: BinningConfig,
    pub fit: FitConfig,
    pub solver: BvpConfig,
    /// Ratios where the critical line is computed for the stability check.
    pub stability_ratios: Vec<f64>,
    pub stability_solver: BvpConfig,
}

impl Default for CalibrateJob {
    fn default() -> Self {
        CalibrateJob {
            snapshots: vec![],
            stock: "asset".into(),
            daily_volume: None,
            binning: BinningConfig::default(),
            fit: FitConfig::default(),
            solver: BvpConfig::with_points(1201),
            stability_ratios: log_space(0.02, 1.0, 7),
            stability_solver: BvpConfig::with_points(801),
        }
    }
}

impl Job for CalibrateJob {
    const NAME: &'static str = "calibrate";

    fn validate(&self) -> Result<(), CliError> {
        if self.snapshots.is_empty() {
            return Err(CliError::Config("no snapshot files given".into()));
        }
        if let Some(v) = self.daily_volume {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("daily_volume = {v} must be positive")));
            }
        }
        if self.stability_ratios.iter().any(|r| !(*r > 0.0)) || self.stability_ratios.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config("stability_ratios must be positive and increasing".into()));
        }
        self.fit.validate()?;
        Ok(())
    }

    fn execute(&self, out: &mut Output, exec: Execution) -> Result<Status, CliError> {
        let files = self
            .snapshots
            .iter()
            .map(|p| File::open(p).map(BufReader::new).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))))
            .collect::<Result<Vec<_>, _>>()?;
        let mut profile = ingest_snapshots(files, &self.binning, exec)?;
        profile.daily_volume = self.daily_volume;
        out.write("profile.csv", |w| profile.write_csv(w))?;
        #[derive(Serialize)]
        struct Ingest<'a> {
            snapshots: usize,
            average_price: f64,
            average_spread: f64,
            tick: f64,
            bin_width: f64,
            skipped: &'a latent_lob::calibration::SkipCounts,
        }
        out.json(
            "ingest.json",
            &Ingest {
                snapshots: profile.snapshots,
                average_price: profile.average_price,
                average_spread: profile.average_spread,
                tick: profile.tick,
                bin_width: profile.bin_width,
                skipped: &profile.skipped,
            },
        )?;
        let result = fit(&profile, &self.solver, &self.fit, exec)?;
        out.write("fit.json", |w| result.write_json(w))?;
        let row = TableRow::new(&self.stock, &profile, &result);
        out.write("table.csv", |w| write_table(&[row], w))?;
        if !self.stability_ratios.is_empty() {
            let line = critical_line(&self.stability_ratios, &self.stability_solver, &CriticalSearch::default(), exec);
            let location = stability_report(&result, &line).map_err(|e| e.to_string());
            #[derive(Serialize)]
            struct Stability<'a> {
                location: Option<latent_lob::stability::AssetLocation>,
                error: Option<String>,
                excluded_ratios: &'a [(f64, String)],
            }
            let (location, error) = match location {
                Ok(l) => (Some(l), None),
                Err(e) => (None, Some(e)),
            };
            out.json("stability.json", &Stability { location, error, excluded_ratios: &line.excluded })?;
        }
        Ok(Status::Complete)
    }
}
