use std::io::Write;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DVector, Dyn, Matrix3, OMatrix, Vector3, U3};
use serde::{Deserialize, Serialize};

use super::EmpiricalBookProfile;
use crate::bvp::{solve_stationary, BvpConfig};
use crate::error::{LobError, Result};
use crate::exec::Execution;
use crate::model::ModelParams;
use crate::stability::{locate, AssetLocation, CriticalLine};

/// The four observable book parameters, in percent-price units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BookParams {
    /// Shares per percent price, per percent price.
    pub liquidity: f64,
    /// Inverse percent price.
    pub k: f64,
    pub l_latent: f64,
    pub l_revealed: f64,
}

impl BookParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("liquidity", self.liquidity), ("k", self.k), ("l_latent", self.l_latent), ("l_revealed", self.l_revealed)]
        {
            crate::error::check_positive(name, v)?;
        }
        Ok(())
    }

    pub fn k_ll(&self) -> f64 {
        self.k * self.l_latent
    }

    pub fn k_lr(&self) -> f64 {
        self.k * self.l_revealed
    }

    /// Full model parameters once a latent rate `ω` is chosen; the static
    /// book does not identify it.
    pub fn to_model(&self, omega: f64) -> Result<ModelParams> {
        ModelParams::from_lengths(self.l_latent, self.l_revealed, omega, self.k, self.liquidity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    /// Inverse snapshot variance of each bin's mean.
    InverseVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub starts: usize,
    pub k_ll_range: (f64, f64),
    pub ratio_range: (f64, f64),
    pub weighting: Weighting,
    /// Residual evaluations allowed per start; each Jacobian costs six more
    /// model solves.
    pub max_evaluations: usize,
    pub tolerance: f64,
    pub min_informative_bins: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            starts: 8,
            k_ll_range: (0.05, 1.5),
            ratio_range: (0.05, 1.0),
            weighting: Weighting::Uniform,
            max_evaluations: 400,
            tolerance: 1e-12,
            min_informative_bins: 20,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |(a, b): (f64, f64)| a > 0.0 && b >= a && b.is_finite();
        if self.starts == 0 || !range_ok(self.k_ll_range) || !range_ok(self.ratio_range) {
            return Err(LobError::InvalidConfig(format!("bad multi-start settings {self:?}")));
        }
        if !(self.tolerance > 0.0) || self.max_evaluations < 8 {
            return Err(LobError::InvalidConfig(format!("bad optimizer settings {self:?}")));
        }
        Ok(())
    }

    /// Starting `(kℓ_ℓ, ℓ_r/ℓ_ℓ)` pairs: half the starts on each of two
    /// ratios, log-spaced in `kℓ_ℓ`.
    pub fn start_points(&self) -> Vec<(f64, f64)> {
        let per = self.starts.div_ceil(2);
        let span = |(a, b): (f64, f64), t: f64| a * (b / a).powf(t);
        let ratios = [span(self.ratio_range, 0.25), span(self.ratio_range, 0.75)];
        let mut out = Vec::with_capacity(self.starts);
        for r in ratios {
            for i in 0..per {
                let t = if per == 1 { 0.5 } else { i as f64 / (per - 1) as f64 };
                out.push((span(self.k_ll_range, t), r));
            }
        }
        out.truncate(self.starts);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartReport {
    pub k_ll: f64,
    pub ratio: f64,
    pub relative_residual: Option<f64>,
    pub evaluations: usize,
    pub termination: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub params: BookParams,
    /// Weighted RMS of `data − model`, in density units.
    pub residual_rms: f64,
    /// Weighted residual norm over the weighted data norm.
    pub relative_residual: f64,
    /// `s²(JᵀJ)⁻¹` in `(ln k, ln ℓ_ℓ, ln ℓ_r)`; `None` if singular.
    pub covariance: Option<[[f64; 3]; 3]>,
    pub k_ll: f64,
    pub k_lr: f64,
    pub ratio: f64,
    pub bins: usize,
    pub starts: Vec<StartReport>,
}

impl FitResult {
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }

    /// Standard deviations of the log parameters.
    pub fn log_std(&self) -> Option<[f64; 3]> {
        self.covariance.map(|c| [c[0][0].sqrt(), c[1][1].sqrt(), c[2][2].sqrt()])
    }
}

/// `|φ_r|` of the rescaled stationary book (`k = 𝓛 = 1`), cubic Hermite in
/// rescaled price, zero past the solver domain.
#[derive(Debug, Clone)]
struct Shape {
    x: Vec<f64>,
    y: Vec<f64>,
    dy: Vec<f64>,
}

impl Shape {
    fn new(k_ll: f64, k_lr: f64, cfg: &BvpConfig) -> Result<Shape> {
        let p = ModelParams::dimensionless(k_ll, k_lr)?;
        let cfg = BvpConfig { xi_max: None, ..*cfg };
        let prof = solve_stationary(&p, &cfg)?.profile;
        let x = prof.grid;
        let y: Vec<f64> = prof.phi_revealed.iter().map(|v| v.abs()).collect();
        let n = x.len();
        let mut dy = vec![0.0; n];
        dy[0] = (y[1] - y[0]) / (x[1] - x[0]);
        dy[n - 1] = (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]);
        for i in 1..n - 1 {
            let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
            dy[i] = -h1 / (h0 * (h0 + h1)) * y[i - 1] + (h1 - h0) / (h0 * h1) * y[i] + h0 / (h1 * (h0 + h1)) * y[i + 1];
        }
        Ok(Shape { x, y, dy })
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x <= self.x[0] {
            return self.y[0];
        }
        if x >= self.x[n - 1] {
            return 0.0;
        }
        let i = self.x.partition_point(|&v| v <= x) - 1;
        let h = self.x[i + 1] - self.x[i];
        let t = (x - self.x[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.y[i]
            + (t3 - 2.0 * t2 + t) * h * self.dy[i]
            + (-2.0 * t3 + 3.0 * t2) * self.y[i + 1]
            + (t3 - t2) * h * self.dy[i + 1]
    }
}

/// Bin-averaged model density per unit liquidity at the given bin centers.
fn unit_density(k: f64, l: f64, lr: f64, centers: &[f64], width: f64, cfg: &BvpConfig) -> Result<Vec<f64>> {
    let shape = Shape::new(k * l, k * lr, cfg)?;
    let h = 0.5 * width;
    Ok(centers
        .iter()
        .map(|&c| {
            let f = |x: f64| shape.eval(k * x.max(0.0)) / k;
            (f(c - h) + 4.0 * f(c) + f(c + h)) / 6.0
        })
        .collect())
}

/// Model density averaged over bins of `width` centred on `centers`.
pub fn model_density(p: &BookParams, centers: &[f64], width: f64, cfg: &BvpConfig) -> Result<Vec<f64>> {
    p.validate()?;
    Ok(unit_density(p.k, p.l_latent, p.l_revealed, centers, width, cfg)?.into_iter().map(|f| p.liquidity * f).collect())
}

struct Data<'a> {
    x: &'a [f64],
    width: f64,
    y: &'a [f64],
    w: Vec<f64>,
    norm: f64,
    cfg: &'a BvpConfig,
}

struct Eval {
    liquidity: f64,
    /// Weighted residuals over the weighted data norm.
    r: DVector<f64>,
}

impl Data<'_> {
    fn eval(&self, theta: &Vector3<f64>) -> Result<Eval> {
        let (k, l, lr) = (theta[0].exp(), theta[1].exp(), theta[2].exp());
        let f = unit_density(k, l, lr, self.x, self.width, self.cfg)?;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..f.len() {
            let w2 = self.w[i] * self.w[i];
            num += w2 * self.y[i] * f[i];
            den += w2 * f[i] * f[i];
        }
        let liquidity = num / den;
        if !(liquidity > 0.0) || !liquidity.is_finite() {
            return Err(LobError::DegenerateBook(format!("no positive liquidity at θ = {theta:?}")));
        }
        let r = DVector::from_iterator(
            f.len(),
            (0..f.len()).map(|i| self.w[i] * (self.y[i] - liquidity * f[i]) / self.norm),
        );
        Ok(Eval { liquidity, r })
    }

    fn jacobian(&self, theta: &Vector3<f64>) -> Option<OMatrix<f64, Dyn, U3>> {
        const H: f64 = 1e-5;
        let mut j = OMatrix::<f64, Dyn, U3>::zeros(self.x.len());
        for c in 0..3 {
            let mut tp = *theta;
            let mut tm = *theta;
            tp[c] += H;
            tm[c] -= H;
            let rp = self.eval(&tp).ok()?.r;
            let rm = self.eval(&tm).ok()?.r;
            j.set_column(c, &((rp - rm) / (2.0 * H)));
        }
        Some(j)
    }
}

struct Problem<'a> {
    data: &'a Data<'a>,
    theta: Vector3<f64>,
    current: Option<Eval>,
}

impl LeastSquaresProblem<f64, Dyn, U3> for Problem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U3>;
    type ParameterStorage = Owned<f64, U3>;

    fn set_params(&mut self, x: &Vector3<f64>) {
        self.theta = *x;
        self.current = self.data.eval(x).ok();
    }

    fn params(&self) -> Vector3<f64> {
        self.theta
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        self.current.as_ref().map(|e| e.r.clone())
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U3>> {
        self.data.jacobian(&self.theta)
    }
}

/// Least-squares fit of `𝓛|φ_r|` to an empirical profile, `𝓛` solved in
/// closed form at every iterate.
pub fn fit(profile: &EmpiricalBookProfile, solver: &BvpConfig, cfg: &FitConfig, exec: Execution) -> Result<FitResult> {
    cfg.validate()?;
    let y = &profile.density;
    let informative = y.iter().filter(|v| **v > 0.0).count();
    if informative < cfg.min_informative_bins {
        return Err(LobError::DegenerateBook(format!(
            "{informative} informative bins, need {}",
            cfg.min_informative_bins
        )));
    }
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if hi - lo <= 1e-12 * hi.abs() || y.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(LobError::DegenerateBook("flat or invalid density profile".into()));
    }
    let w: Vec<f64> = match cfg.weighting {
        Weighting::Uniform => vec![1.0; y.len()],
        Weighting::InverseVariance => {
            let n = profile.snapshots.max(1) as f64;
            let floor = profile.density_sd.iter().copied().filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
            if !floor.is_finite() {
                return Err(LobError::DegenerateBook("no snapshot dispersion for inverse-variance weights".into()));
            }
            profile.density_sd.iter().map(|s| n.sqrt() / s.max(floor)).collect()
        }
    };
    let norm = y.iter().zip(&w).map(|(y, w)| (w * y).powi(2)).sum::<f64>().sqrt();
    let data = Data { x: &profile.offsets, width: profile.bin_width, y, w, norm, cfg: solver };

    let mean_offset = y.iter().zip(data.x).map(|(y, x)| y * x).sum::<f64>() / y.iter().sum::<f64>();
    let k0 = 2.0 / mean_offset;
    let starts = cfg.start_points();
    let lm = LevenbergMarquardt::new()
        .with_ftol(cfg.tolerance)
        .with_xtol(cfg.tolerance)
        .with_gtol(cfg.tolerance)
        .with_patience(cfg.max_evaluations.div_ceil(4));
    let runs = exec.map(&starts, |&(kl, ratio)| {
        let l = kl / k0;
        let theta = Vector3::new(k0.ln(), l.ln(), (ratio * l).ln());
        let mut prob = Problem { data: &data, theta, current: None };
        prob.set_params(&theta);
        let (prob, report) = lm.minimize(prob);
        let res = prob.current.as_ref().map(|e| e.r.norm()).filter(|r| r.is_finite());
        let rep = StartReport {
            k_ll: kl,
            ratio,
            relative_residual: res,
            evaluations: report.number_of_evaluations,
            termination: format!("{:?}", report.termination),
        };
        (rep, prob.theta)
    });
    let best = runs.iter().filter_map(|(r, t)| r.relative_residual.map(|v| (v, *t))).min_by(|a, b| a.0.total_cmp(&b.0));
    let Some((rel, theta)) = best else {
        return Err(LobError::NoConvergence("every start failed".into()));
    };
    let e = data.eval(&theta)?;
    let m = y.len();
    let params =
        BookParams { liquidity: e.liquidity, k: theta[0].exp(), l_latent: theta[1].exp(), l_revealed: theta[2].exp() };
    let residual_rms = rel * norm / (m as f64).sqrt();
    let covariance = data.jacobian(&theta).and_then(|j| {
        let j = j * norm;
        let s2 = (rel * norm).powi(2) / (m.saturating_sub(4).max(1)) as f64;
        let jtj: Matrix3<f64> = j.transpose() * &j;
        jtj.try_inverse().map(|inv| {
            let c = inv * s2;
            [[c[(0, 0)], c[(0, 1)], c[(0, 2)]], [c[(1, 0)], c[(1, 1)], c[(1, 2)]], [c[(2, 0)], c[(2, 1)], c[(2, 2)]]]
        })
    });
    Ok(FitResult {
        params,
        residual_rms,
        relative_residual: rel,
        covariance,
        k_ll: params.k_ll(),
        k_lr: params.k_lr(),
        ratio: params.l_revealed / params.l_latent,
        bins: m,
        starts: runs.into_iter().map(|(r, _)| r).collect(),
    })
}

pub fn stability_report(fit: &FitResult, line: &CriticalLine) -> Result<AssetLocation> {
    locate(fit.k_ll, fit.k_lr, line)
}

/// One line of a per-asset calibration table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub stock: String,
    pub price: f64,
    /// Average spread in ticks.
    pub spread: f64,
    pub daily_volume: Option<f64>,
    pub params: BookParams,
}

fn plain(v: f64) -> String {
    format!("{v}")
}

pub const TABLE_HEADER: [&str; 8] = ["stock", "price", "S", "V_d", "L", "k", "l_latent", "l_revealed"];

impl TableRow {
    pub fn new(stock: &str, profile: &EmpiricalBookProfile, fit: &FitResult) -> Self {
        TableRow {
            stock: stock.to_string(),
            price: profile.average_price,
            spread: profile.average_spread,
            daily_volume: profile.daily_volume,
            params: fit.params,
        }
    }

    pub fn record(&self) -> [String; 8] {
        let p = &self.params;
        [
            self.stock.clone(),
            plain(self.price),
            plain(self.spread),
            self.daily_volume.map(plain).unwrap_or_default(),
            plain(p.liquidity),
            plain(p.k),
            plain(p.l_latent),
            plain(p.l_revealed),
        ]
    }
}

pub fn write_table<W: Write>(rows: &[TableRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(TABLE_HEADER)?;
    for r in rows {
        wr.write_record(r.record())?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::synthetic_profile;
    use crate::stability::CriticalPoint;

    const TYPICAL: BookParams = BookParams { liquidity: 4599.0, k: 2.12, l_latent: 0.042, l_revealed: 0.0084 };

    fn solver() -> BvpConfig {
        BvpConfig::with_points(1201)
    }

    fn rel_err(a: &BookParams, b: &BookParams) -> f64 {
        [a.liquidity / b.liquidity, a.k / b.k, a.l_latent / b.l_latent, a.l_revealed / b.l_revealed]
            .iter()
            .map(|r| (r - 1.0).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn start_points_span_the_ranges() {
        let s = FitConfig::default().start_points();
        assert_eq!(s.len(), 8);
        assert_eq!(s[0].0, 0.05);
        assert!((s[3].0 - 1.5).abs() < 1e-12);
        assert!(s.iter().all(|&(_, r)| (0.05..=1.0).contains(&r)));
        let one = FitConfig { starts: 1, ..Default::default() }.start_points();
        assert_eq!(one.len(), 1);
        assert!(FitConfig { starts: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn noiseless_round_trip_is_exact() {
        let prof = synthetic_profile(&TYPICAL, 400, 0.01, 0.0, 1, &solver()).unwrap();
        let f = fit(&prof, &solver(), &FitConfig::default(), Execution::default()).unwrap();
        assert!(f.relative_residual < 1e-8, "{}", f.relative_residual);
        assert!(rel_err(&f.params, &TYPICAL) < 1e-6, "{:?}", f.params);
        assert_eq!(f.starts.len(), 8);
        assert!((f.ratio - 0.2).abs() < 1e-6);
    }

    #[test]
    fn doubling_volumes_doubles_liquidity_only() {
        let prof = synthetic_profile(&TYPICAL, 400, 0.01, 0.01, 3, &solver()).unwrap();
        let mut twice = prof.clone();
        twice.density.iter_mut().for_each(|d| *d *= 2.0);
        let a = fit(&prof, &solver(), &FitConfig::default(), Execution::default()).unwrap();
        let b = fit(&twice, &solver(), &FitConfig::default(), Execution::default()).unwrap();
        assert!((b.params.liquidity / a.params.liquidity - 2.0).abs() < 2e-6);
        for (x, y) in [
            (a.params.k, b.params.k),
            (a.params.l_latent, b.params.l_latent),
            (a.params.l_revealed, b.params.l_revealed),
        ] {
            assert!((x / y - 1.0).abs() < 1e-6, "{x} vs {y}");
        }
        assert!((a.relative_residual - b.relative_residual).abs() < 1e-9);
    }

    #[test]
    fn recovery_improves_with_less_noise() {
        let errs: Vec<f64> = [0.05, 0.01, 0.002]
            .iter()
            .map(|&n| {
                let prof = synthetic_profile(&TYPICAL, 400, 0.01, n, 11, &solver()).unwrap();
                rel_err(&fit(&prof, &solver(), &FitConfig::default(), Execution::default()).unwrap().params, &TYPICAL)
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn inverse_variance_weights_fit_too() {
        let prof = synthetic_profile(&TYPICAL, 400, 0.01, 0.0, 1, &solver()).unwrap();
        let mut noisy = prof.clone();
        noisy.density_sd = prof.density.iter().map(|d| 0.01 * d + 1.0).collect();
        let cfg = FitConfig { weighting: Weighting::InverseVariance, ..Default::default() };
        let f = fit(&noisy, &solver(), &cfg, Execution::default()).unwrap();
        assert!(rel_err(&f.params, &TYPICAL) < 1e-6);
    }

    #[test]
    fn degenerate_profiles_are_rejected() {
        let mut prof = synthetic_profile(&TYPICAL, 400, 0.01, 0.0, 1, &solver()).unwrap();
        prof.density.iter_mut().for_each(|d| *d = 3.0);
        assert!(matches!(
            fit(&prof, &solver(), &FitConfig::default(), Execution::default()),
            Err(LobError::DegenerateBook(_))
        ));
        let short = synthetic_profile(&TYPICAL, 10, 0.01, 0.0, 1, &solver()).unwrap();
        assert!(matches!(
            fit(&short, &solver(), &FitConfig::default(), Execution::default()),
            Err(LobError::DegenerateBook(_))
        ));
    }

    #[test]
    fn stability_report_boundary() {
        let line = CriticalLine {
            points: vec![
                CriticalPoint { ratio: 0.1, zeta_c: 1.95, k_lr: 0.195 },
                CriticalPoint { ratio: 1.0, zeta_c: 1.9, k_lr: 1.9 },
            ],
            excluded: vec![],
        };
        let prof = synthetic_profile(&TYPICAL, 400, 0.01, 0.0, 1, &solver()).unwrap();
        let mut f = fit(&prof, &solver(), &FitConfig::default(), Execution::default()).unwrap();
        let r = stability_report(&f, &line).unwrap();
        assert!(r.stable && r.ratio < 1.0);
        assert!(r.margin / r.k_ll > 5.0);
        f.k_ll = 1.9;
        f.k_lr = 1.9;
        let edge = stability_report(&f, &line).unwrap();
        assert_eq!(edge.margin, 0.0);
        assert!(!edge.stable);
    }

    #[test]
    fn table_rows_follow_the_schema() {
        let prof = synthetic_profile(&TYPICAL, 400, 0.01, 0.0, 1, &solver()).unwrap();
        let f = fit(&prof, &solver(), &FitConfig::default(), Execution::default()).unwrap();
        let mut row = TableRow::new("BAC", &prof, &f);
        row.daily_volume = Some(1.5e8);
        let mut buf = Vec::new();
        write_table(&[row.clone(), TableRow { daily_volume: None, ..row }], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "stock,price,S,V_d,L,k,l_latent,l_revealed");
        assert!(lines[1].starts_with("BAC,100,1,150000000,"));
        assert_eq!(lines[2].split(',').nth(3), Some(""));
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 8));
    }
}
