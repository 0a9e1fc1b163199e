//! Stability map over `(kℓ_ℓ, kℓ_r)` and the critical line `φ_r'(0⁺) = 0`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bvp::{solve_stationary, BvpConfig};
use crate::error::{LobError, Result};
use crate::exec::Execution;
use crate::model::ModelParams;
use crate::profile::fmt_f64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCell {
    pub k_ll: f64,
    pub k_lr: f64,
    /// `φ_r'(0⁺)/𝓛`
    pub slope0: f64,
    /// `kρ_B(0⁺)/𝓛`
    pub overlap0: f64,
    /// `𝒱_r k²/𝓛`
    pub vol_revealed: f64,
    pub stable: bool,
    /// Solver failure for this cell; the numeric fields are NaN.
    pub error: Option<String>,
}

pub fn solve_cell(k_ll: f64, k_lr: f64, cfg: &BvpConfig) -> StabilityCell {
    let attempt = || -> Result<StabilityCell> {
        if !(k_lr > 0.0) {
            return Err(LobError::InvalidConfig(format!("kℓ_r = {k_lr} must be positive")));
        }
        let p = ModelParams::dimensionless(k_ll, k_lr)?;
        let d = solve_stationary(&p, cfg)?.diagnostics;
        let slope0 = d.slope_rescaled.unwrap_or(f64::NAN);
        Ok(StabilityCell {
            k_ll,
            k_lr,
            slope0,
            overlap0: d.overlap_rescaled,
            vol_revealed: d.revealed_volume_rescaled,
            stable: slope0 < 0.0,
            error: None,
        })
    };
    attempt().unwrap_or_else(|e| StabilityCell {
        k_ll,
        k_lr,
        slope0: f64::NAN,
        overlap0: f64::NAN,
        vol_revealed: f64::NAN,
        stable: false,
        error: Some(e.to_string()),
    })
}

/// One solve per cell; cells are ordered with `kℓ_r` outer and `kℓ_ℓ` inner.
pub fn sweep(k_ll: &[f64], k_lr: &[f64], cfg: &BvpConfig, exec: Execution) -> Vec<StabilityCell> {
    let coords: Vec<(f64, f64)> = k_lr.iter().flat_map(|&r| k_ll.iter().map(move |&l| (l, r))).collect();
    exec.map(&coords, |&(l, r)| solve_cell(l, r, cfg))
}

pub fn write_cells_csv<W: Write>(cells: &[StabilityCell], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["k_ll", "k_lr", "slope0", "overlap0", "vol_revealed", "stable"])?;
    for c in cells {
        wr.write_record(&[
            fmt_f64(c.k_ll),
            fmt_f64(c.k_lr),
            fmt_f64(c.slope0),
            fmt_f64(c.overlap0),
            fmt_f64(c.vol_revealed),
            c.stable.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoint {
    /// `ℓ_r/ℓ_ℓ`
    pub ratio: f64,
    pub zeta_c: f64,
    /// `kℓ_r = ratio·ζ_c` on the line.
    pub k_lr: f64,
}

/// Critical line sampled at increasing ratios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalLine {
    pub points: Vec<CriticalPoint>,
    /// Ratios without a bracketing sign change, with the reason.
    pub excluded: Vec<(f64, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticalSearch {
    /// Bracketing scan over `kℓ_ℓ`.
    pub scan_lo: f64,
    pub scan_hi: f64,
    pub scan_steps: usize,
    /// Bisection stops once the bracket is narrower than this.
    pub tolerance: f64,
}

impl Default for CriticalSearch {
    fn default() -> Self {
        CriticalSearch { scan_lo: 0.5, scan_hi: 3.0, scan_steps: 11, tolerance: 1e-4 }
    }
}

fn slope_along(ratio: f64, k_ll: f64, cfg: &BvpConfig) -> Result<f64> {
    let p = ModelParams::dimensionless(k_ll, ratio * k_ll)?;
    solve_stationary(&p, cfg)?
        .diagnostics
        .slope_rescaled
        .ok_or_else(|| LobError::Unsupported("slope undefined at ratio 0".into()))
}

/// Root of the origin slope in `kℓ_ℓ` at fixed `ℓ_r/ℓ_ℓ`.
pub fn critical_zeta_at(ratio: f64, cfg: &BvpConfig, search: &CriticalSearch) -> Result<f64> {
    if !(ratio > 0.0) {
        return Err(LobError::InvalidConfig(format!("ratio = {ratio} must be positive")));
    }
    let n = search.scan_steps.max(2);
    let zs: Vec<f64> =
        (0..n).map(|i| search.scan_lo + (search.scan_hi - search.scan_lo) * i as f64 / (n - 1) as f64).collect();
    let mut prev = (zs[0], slope_along(ratio, zs[0], cfg)?);
    for &z in &zs[1..] {
        let s = slope_along(ratio, z, cfg)?;
        if prev.1 < 0.0 && s >= 0.0 {
            let (mut lo, mut hi) = (prev.0, z);
            while hi - lo > search.tolerance {
                let mid = 0.5 * (lo + hi);
                if slope_along(ratio, mid, cfg)? < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        prev = (z, s);
    }
    Err(LobError::NoConvergence(format!(
        "no sign change of the origin slope for kℓ_ℓ in [{}, {}] at ratio {ratio}",
        search.scan_lo, search.scan_hi
    )))
}

pub fn critical_line(ratios: &[f64], cfg: &BvpConfig, search: &CriticalSearch, exec: Execution) -> CriticalLine {
    let results = exec.map(ratios, |&r| (r, critical_zeta_at(r, cfg, search)));
    let mut line = CriticalLine { points: vec![], excluded: vec![] };
    for (ratio, res) in results {
        match res {
            Ok(z) => line.points.push(CriticalPoint { ratio, zeta_c: z, k_lr: ratio * z }),
            Err(e) => line.excluded.push((ratio, e.to_string())),
        }
    }
    line.points.sort_by(|a, b| a.ratio.total_cmp(&b.ratio));
    line
}

impl CriticalLine {
    /// `ζ_c` at an arbitrary ratio: linear in `log ratio` between samples,
    /// constant beyond the sampled range.
    pub fn zeta_c_at(&self, ratio: f64) -> Result<f64> {
        let pts = &self.points;
        if pts.is_empty() {
            return Err(LobError::InvalidConfig("empty critical line".into()));
        }
        if ratio <= pts[0].ratio || pts.len() == 1 {
            return Ok(pts[0].zeta_c);
        }
        let last = pts.len() - 1;
        if ratio >= pts[last].ratio {
            return Ok(pts[last].zeta_c);
        }
        let i = pts.partition_point(|p| p.ratio <= ratio) - 1;
        let (a, b) = (&pts[i], &pts[i + 1]);
        let t = (ratio.ln() - a.ratio.ln()) / (b.ratio.ln() - a.ratio.ln());
        Ok(a.zeta_c + t * (b.zeta_c - a.zeta_c))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["ratio", "zeta_c", "k_lr"])?;
        for p in &self.points {
            wr.write_record(&[fmt_f64(p.ratio), fmt_f64(p.zeta_c), fmt_f64(p.k_lr)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Critical `kℓ_ℓ` per `kℓ_r` column of a sweep, by linear interpolation of
/// the first sign change of `slope0`.
pub fn critical_from_cells(cells: &[StabilityCell]) -> Vec<(f64, f64)> {
    let mut cols: Vec<f64> = cells.iter().map(|c| c.k_lr).collect();
    cols.sort_by(f64::total_cmp);
    cols.dedup();
    let mut out = vec![];
    for r in cols {
        let mut col: Vec<&StabilityCell> = cells.iter().filter(|c| c.k_lr == r && c.slope0.is_finite()).collect();
        col.sort_by(|a, b| a.k_ll.total_cmp(&b.k_ll));
        if let Some(w) = col.windows(2).find(|w| w[0].slope0 < 0.0 && w[1].slope0 >= 0.0) {
            let (a, b) = (w[0], w[1]);
            let t = -a.slope0 / (b.slope0 - a.slope0);
            out.push((r, a.k_ll + t * (b.k_ll - a.k_ll)));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssetLocation {
    pub k_ll: f64,
    pub k_lr: f64,
    pub ratio: f64,
    pub zeta_c: f64,
    /// `ζ_c − kℓ_ℓ`; positive means stable.
    pub margin: f64,
    pub stable: bool,
}

pub fn locate_asset(p: &ModelParams, line: &CriticalLine) -> Result<AssetLocation> {
    locate(p.k_ll(), p.k_lr(), line)
}

pub fn locate(k_ll: f64, k_lr: f64, line: &CriticalLine) -> Result<AssetLocation> {
    let ratio = k_lr / k_ll;
    let zeta_c = line.zeta_c_at(ratio)?;
    let margin = zeta_c - k_ll;
    Ok(AssetLocation { k_ll, k_lr, ratio, zeta_c, margin, stable: margin > 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::log_space;

    fn cfg() -> BvpConfig {
        BvpConfig::with_points(801)
    }

    #[test]
    fn sweep_examples() {
        let cells = sweep(&[0.05, 0.35, 2.2], &[0.01, 0.35], &cfg(), Execution::default());
        assert_eq!(cells.len(), 6);
        assert_eq!((cells[0].k_ll, cells[0].k_lr), (0.05, 0.01));
        assert!(cells[0].stable && cells[0].slope0 < 0.0);
        assert!(!cells[2].stable);
        let eq = &cells[4];
        assert!((eq.overlap0 - crate::model::g_factor(0.35)).abs() < 1e-4);
        let seq = sweep(&[0.05, 0.35, 2.2], &[0.01, 0.35], &cfg(), Execution::Sequential);
        assert_eq!(cells, seq);
    }

    #[test]
    fn failed_cells_are_recorded() {
        let cells = sweep(&[0.3], &[0.0], &cfg(), Execution::Sequential);
        assert!(cells[0].error.is_some() && cells[0].slope0.is_nan());
    }

    #[test]
    fn single_sign_change_and_monotone_diagnostics() {
        let kll = log_space(0.05, 3.0, 25);
        for r in [0.1, 0.5] {
            let cells = sweep(&kll, &[r], &cfg(), Execution::default());
            let changes = cells.windows(2).filter(|w| (w[0].slope0 < 0.0) != (w[1].slope0 < 0.0)).count();
            assert_eq!(changes, 1, "kℓ_r = {r}");
            let stable: Vec<_> = cells.iter().filter(|c| c.stable).collect();
            assert!(stable.windows(2).all(|w| w[1].overlap0 > w[0].overlap0));
            // |slope0| rises to a single maximum, then falls towards the line
            let mags: Vec<f64> = stable.iter().map(|c| c.slope0.abs()).collect();
            let top = mags.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert!(mags[..=top].windows(2).all(|w| w[1] > w[0]));
            assert!(mags[top..].windows(2).all(|w| w[1] < w[0]));
            assert!(stable[top].k_ll < 1.0, "kℓ_r = {r}: peak at {}", stable[top].k_ll);
        }
    }

    #[test]
    fn critical_line_limits() {
        let line = critical_line(&[1e-3, 1.0], &BvpConfig::default(), &CriticalSearch::default(), Execution::default());
        assert!(line.excluded.is_empty());
        assert!((line.points[0].zeta_c - 2.0).abs() < 0.01, "{:?}", line.points[0]);
        assert!((line.points[1].zeta_c - crate::analytic::zeta_c_dreq()).abs() < 1e-3, "{:?}", line.points[1]);
    }

    #[test]
    fn critical_line_is_quasi_vertical() {
        let search = CriticalSearch { tolerance: 1e-3, ..Default::default() };
        let line = critical_line(&[0.05, 0.2, 1.0], &cfg(), &search, Execution::default());
        let z: Vec<f64> = line.points.iter().map(|p| p.zeta_c).collect();
        assert!(z.windows(2).all(|w| w[1] < w[0]));
        assert!(z[0] - z[2] <= 0.2, "{z:?}");
    }

    fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
        let n = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x.ln(), b + y.abs().ln()));
        let (mx, my) = (sx / n, sy / n);
        let num: f64 = pts.iter().map(|(x, y)| (x.ln() - mx) * (y.abs().ln() - my)).sum();
        let den: f64 = pts.iter().map(|(x, _)| (x.ln() - mx).powi(2)).sum();
        num / den
    }

    #[test]
    fn slope_scaling_near_the_line() {
        let c = BvpConfig::default();
        let search = CriticalSearch { tolerance: 1e-6, ..Default::default() };
        let slope = |z: f64, r: f64| solve_cell(z, r * z, &c).slope0;
        // linear in the distance to the line
        let r = 0.2;
        let zc = critical_zeta_at(r, &c, &search).unwrap();
        let pts: Vec<(f64, f64)> = [0.01, 0.02, 0.05, 0.1].iter().map(|&d| (d, slope(zc - d, r))).collect();
        let e = loglog_slope(&pts);
        assert!((e - 1.0).abs() < 0.1, "distance exponent {e}");
        // sublinear growth with ℓ_ℓ/ℓ_r at fixed distance
        let pts: Vec<(f64, f64)> = [0.05, 0.1, 0.2, 0.4]
            .iter()
            .map(|&r| {
                let zc = critical_zeta_at(r, &c, &search).unwrap();
                (1.0 / r, slope(zc - 0.02, r))
            })
            .collect();
        let e = loglog_slope(&pts);
        assert!(e > 0.6 && e < 0.9, "ratio exponent {e}");
    }

    #[test]
    fn locate_examples() {
        let line = CriticalLine {
            points: vec![
                CriticalPoint { ratio: 0.01, zeta_c: 1.99, k_lr: 0.0199 },
                CriticalPoint { ratio: 1.0, zeta_c: 1.875, k_lr: 1.875 },
            ],
            excluded: vec![],
        };
        let euro = ModelParams::from_lengths(0.042, 0.0084, 1.0, 2.12, 4599.0).unwrap();
        let loc = locate_asset(&euro, &line).unwrap();
        assert!((loc.k_ll - 0.08904).abs() < 1e-4);
        assert!(loc.margin > 1.7 && loc.stable);
        let stressed = ModelParams::from_lengths(0.3, 0.0084, 1.0, 2.12, 4599.0).unwrap();
        assert!(locate_asset(&stressed, &line).unwrap().margin < loc.margin);
        let edge = locate(1.875, 1.875, &line).unwrap();
        assert_eq!(edge.margin, 0.0);
        assert!(!edge.stable);
    }

    #[test]
    fn csv_schemas() {
        let cells = sweep(&[0.35], &[0.1], &cfg(), Execution::Sequential);
        let mut buf = Vec::new();
        write_cells_csv(&cells, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("k_ll,k_lr,slope0,overlap0,vol_revealed,stable\n"));
        let line =
            CriticalLine { points: vec![CriticalPoint { ratio: 0.5, zeta_c: 1.9, k_lr: 0.95 }], excluded: vec![] };
        let mut buf = Vec::new();
        line.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "ratio,zeta_c,k_lr\n5e-1,1.9e0,9.5e-1\n");
    }
}
