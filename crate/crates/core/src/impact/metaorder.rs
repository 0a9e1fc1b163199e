use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LobError, Result};
use crate::exec::Execution;
use crate::model::ModelParams;
use crate::profile::{fmt_f64, BookProfile};
use crate::sim::{best_quotes, SimConfig, SimState};

/// Constant-rate metaorder; `rate > 0` buys, `rate < 0` sells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaorderSpec {
    /// Volume per unit time.
    pub rate: f64,
    pub duration: f64,
}

/// `m₀/𝒥` with `𝒥 = 𝓛ω/k²`, and `m₀/J_r` with `J_r = D_r𝓛`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeNumbers {
    pub m0_over_j: f64,
    pub m0_over_j_r: f64,
}

impl MetaorderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rate == 0.0 || !self.rate.is_finite() {
            return Err(LobError::InvalidConfig(format!("metaorder rate must be nonzero, got {}", self.rate)));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(LobError::InvalidConfig(format!("metaorder duration must be positive, got {}", self.duration)));
        }
        Ok(())
    }

    pub fn regime(&self, p: &ModelParams) -> RegimeNumbers {
        let s = p.derived_scales();
        let m0 = self.rate.abs();
        RegimeNumbers {
            m0_over_j: m0 / s.j,
            m0_over_j_r: if s.j_revealed > 0.0 { m0 / s.j_revealed } else { f64::INFINITY },
        }
    }
}

/// Ensemble-averaged price path during execution. Prices are displacements
/// from the mid-price at the start; `price` follows the executing quote
/// (best ask for buys, best bid for sells).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactTrajectory {
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    pub price_mean: Vec<f64>,
    pub price_stderr: Vec<f64>,
    pub mid_mean: Vec<f64>,
    pub fair_mean: Vec<f64>,
    /// `(V_bid − V_ask)/(V_bid + V_ask)` of the revealed books.
    pub imbalance_mean: Vec<f64>,
    pub rate: f64,
    pub members: usize,
    /// A member ran out of liquidity; the arrays stop at the first such step.
    pub crisis: bool,
    pub regime: RegimeNumbers,
    pub params: ModelParams,
}

impl ImpactTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "Q", "price_mean", "price_stderr", "fair_price_mean", "imbalance_mean"])?;
        for i in 0..self.len() {
            wr.write_record([
                fmt_f64(self.t[i]),
                fmt_f64(self.q[i]),
                fmt_f64(self.price_mean[i]),
                fmt_f64(self.price_stderr[i]),
                fmt_f64(self.fair_mean[i]),
                fmt_f64(self.imbalance_mean[i]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// `|p_t − p_t^f| / |p_t − p_0|` from the ensemble means.
    pub fn relative_fair_distance(&self) -> Vec<f64> {
        self.price_mean.iter().zip(&self.fair_mean).map(|(p, f)| (p - f).abs() / p.abs()).collect()
    }
}

struct MemberPath {
    price: Vec<f64>,
    mid: Vec<f64>,
    fair: Vec<f64>,
    imbalance: Vec<f64>,
    crisis: bool,
}

fn run_member(
    cfg: &SimConfig,
    init: &BookProfile,
    spec: &MetaorderSpec,
    n_steps: u64,
    member: u64,
) -> Result<MemberPath> {
    let mut s = SimState::from_profile(cfg, init, member)?;
    for _ in 0..cfg.burn_in() {
        s.step(cfg, 0.0);
    }
    let buy = spec.rate > 0.0;
    let p0 = cfg.bin_price(s.mid);
    let f0 = s.fair_price(cfg).unwrap_or(p0);
    let rate = spec.rate * cfg.tau;
    let mut path =
        MemberPath { price: Vec::new(), mid: Vec::new(), fair: Vec::new(), imbalance: Vec::new(), crisis: false };
    for k in 1..=n_steps {
        s.step(cfg, rate);
        let (b, a) = best_quotes(&s.revealed_bid, &s.revealed_ask);
        let quote = if buy { a } else { b };
        let Some(quote) = quote else {
            path.crisis = true;
            break;
        };
        if k % cfg.record_every == 0 {
            let (vb, va) = s.revealed_volumes();
            let tot = (vb + va) as f64;
            path.price.push(cfg.bin_price(quote as f64) - p0);
            path.mid.push(cfg.bin_price(s.mid) - p0);
            path.fair.push(s.fair_price(cfg).unwrap_or(f0) - p0);
            path.imbalance.push(if tot > 0.0 { (vb as f64 - va as f64) / tot } else { 0.0 });
        }
    }
    Ok(path)
}

/// Runs `members` independent executions from burned-in stationary books.
pub fn run_metaorder(
    cfg: &SimConfig,
    init: &BookProfile,
    spec: &MetaorderSpec,
    members: usize,
    exec: Execution,
) -> Result<ImpactTrajectory> {
    cfg.validate()?;
    spec.validate()?;
    let params = cfg.params()?;
    let n_steps = (spec.duration / cfg.tau).round().max(1.0) as u64;
    let members = members.max(1);
    let paths = exec
        .map_range(members, |m| run_member(cfg, init, spec, n_steps, m as u64))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let len = paths.iter().map(|p| p.price.len()).min().unwrap_or(0);
    let crisis = paths.iter().any(|p| p.crisis);
    let m = paths.len() as f64;
    let mean = |f: &dyn Fn(&MemberPath) -> &Vec<f64>, i: usize| paths.iter().map(|p| f(p)[i]).sum::<f64>() / m;
    let mut traj = ImpactTrajectory {
        t: Vec::with_capacity(len),
        q: Vec::with_capacity(len),
        price_mean: Vec::with_capacity(len),
        price_stderr: Vec::with_capacity(len),
        mid_mean: Vec::with_capacity(len),
        fair_mean: Vec::with_capacity(len),
        imbalance_mean: Vec::with_capacity(len),
        rate: spec.rate,
        members,
        crisis,
        regime: spec.regime(&params),
        params,
    };
    for i in 0..len {
        let t = ((i as u64 + 1) * cfg.record_every) as f64 * cfg.tau;
        let pm = mean(&|p| &p.price, i);
        let se = if members > 1 {
            let var = paths.iter().map(|p| (p.price[i] - pm).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        } else {
            f64::NAN
        };
        traj.t.push(t);
        traj.q.push(spec.rate.abs() * t);
        traj.price_mean.push(pm);
        traj.price_stderr.push(se);
        traj.mid_mean.push(mean(&|p| &p.mid, i));
        traj.fair_mean.push(mean(&|p| &p.fair, i));
        traj.imbalance_mean.push(mean(&|p| &p.imbalance, i));
    }
    Ok(traj)
}

/// Least-squares slope of `log I` against `log Q` for `Q` in `[q_lo, q_hi]`,
/// with `I` the signed displacement in the direction of execution.
pub fn fit_impact_exponent(traj: &ImpactTrajectory, q_lo: f64, q_hi: f64) -> Result<f64> {
    let sign = traj.rate.signum();
    let pts: Vec<(f64, f64)> = traj
        .q
        .iter()
        .zip(&traj.price_mean)
        .filter(|(q, _)| **q >= q_lo && **q <= q_hi)
        .map(|(&q, &p)| (q, sign * p))
        .collect();
    if pts.len() < 2 {
        return Err(LobError::InvalidConfig(format!("fewer than 2 points in [{q_lo}, {q_hi}]")));
    }
    if let Some((q, i)) = pts.iter().find(|(q, i)| *q <= 0.0 || *i <= 0.0) {
        return Err(LobError::Domain(format!("nonpositive impact {i} at Q = {q}")));
    }
    let xy: Vec<(f64, f64)> = pts.iter().map(|(q, i)| (q.ln(), i.ln())).collect();
    Ok(ls_slope(&xy))
}

fn ls_slope(xy: &[(f64, f64)]) -> f64 {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Crossover time between an early linear law `I ≈ a·t` and a late square
/// root law `I ≈ b·√t`, each fitted through the origin on its window:
/// `t* = (b/a)²`.
pub fn crossover_time(traj: &ImpactTrajectory, early: (f64, f64), late: (f64, f64)) -> Result<f64> {
    let sign = traj.rate.signum();
    let sel = |w: (f64, f64)| -> Vec<(f64, f64)> {
        traj.t
            .iter()
            .zip(&traj.price_mean)
            .filter(|(t, _)| **t >= w.0 && **t <= w.1)
            .map(|(&t, &p)| (t, sign * p))
            .collect()
    };
    let (e, l) = (sel(early), sel(late));
    if e.is_empty() || l.is_empty() {
        return Err(LobError::InvalidConfig("empty crossover window".into()));
    }
    let a = e.iter().map(|(t, i)| t * i).sum::<f64>() / e.iter().map(|(t, _)| t * t).sum::<f64>();
    let b = l.iter().map(|(t, i)| t.sqrt() * i).sum::<f64>() / l.iter().map(|(t, _)| *t).sum::<f64>();
    if !(a > 0.0 && b > 0.0) {
        return Err(LobError::Domain(format!("crossover needs positive fits, got a = {a}, b = {b}")));
    }
    Ok((b / a).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64, rate: f64) -> ImpactTrajectory {
        let t: Vec<f64> = (1..=400).map(|i| i as f64 * 0.5).collect();
        let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        ImpactTrajectory {
            q: t.iter().map(|x| rate.abs() * x).collect(),
            price_mean: t.iter().map(|&x| rate.signum() * f(rate.abs() * x)).collect(),
            price_stderr: vec![0.0; t.len()],
            mid_mean: vec![0.0; t.len()],
            fair_mean: vec![0.0; t.len()],
            imbalance_mean: vec![0.0; t.len()],
            t,
            rate,
            members: 1,
            crisis: false,
            regime: MetaorderSpec { rate, duration: 1.0 }.regime(&p),
            params: p,
        }
    }

    #[test]
    fn exponent_of_exact_power_laws() {
        let tr = synthetic(|q| 3.0 * q.sqrt(), 2.0);
        assert!((fit_impact_exponent(&tr, 1.0, 400.0).unwrap() - 0.5).abs() < 1e-12);
        let tr = synthetic(|q| 0.2 * q, -1.0);
        assert!((fit_impact_exponent(&tr, 1.0, 100.0).unwrap() - 1.0).abs() < 1e-12);
        let bad = synthetic(|q| q - 5.0, 1.0);
        assert!(fit_impact_exponent(&bad, 1.0, 100.0).is_err());
    }

    #[test]
    fn crossover_of_piecewise_law() {
        // I = t for t < 16, 4√t afterwards: t* = 16
        let tr = synthetic(|t| if t < 16.0 { t } else { 4.0 * t.sqrt() }, 1.0);
        let ts = crossover_time(&tr, (0.5, 10.0), (50.0, 200.0)).unwrap();
        assert!((ts - 16.0).abs() < 1e-9);
    }

    #[test]
    fn spec_validation_and_regimes() {
        assert!(MetaorderSpec { rate: 0.0, duration: 1.0 }.validate().is_err());
        assert!(MetaorderSpec { rate: 1.0, duration: 0.0 }.validate().is_err());
        let p = ModelParams::new(2.0, 0.5, 0.1, 0.5, 4.0).unwrap();
        let r = MetaorderSpec { rate: -8.0, duration: 1.0 }.regime(&p);
        // 𝒥 = 𝓛ω/k² = 1.6, J_r = D_r𝓛 = 2
        assert!((r.m0_over_j - 5.0).abs() < 1e-12);
        assert!((r.m0_over_j_r - 4.0).abs() < 1e-12);
    }

    #[test]
    fn metaorder_run_shapes() {
        let p = ModelParams::from_lengths(5.0, 5.0, 0.02, 0.1, 2.0).unwrap();
        let mut c = SimConfig::for_params(&p, 200, 1.0, 1.0, 0).unwrap();
        c.burn_in_steps = Some(300);
        c.record_every = 5;
        let init = crate::bvp::stationary_profile(&p, &crate::bvp::BvpConfig::with_points(801)).unwrap();
        let spec = MetaorderSpec { rate: 2.0 / c.tau, duration: 200.0 * c.tau };
        let a = run_metaorder(&c, &init, &spec, 4, Execution::Parallel).unwrap();
        let b = run_metaorder(&c, &init, &spec, 4, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        assert!((a.q[9] - 2.0 * a.t[9] / c.tau * c.tau).abs() < 1e-12);
        assert!(a.price_mean.last().unwrap() > &0.0);
        assert!(a.price_stderr.iter().all(|s| s.is_finite()));
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("t,Q,price_mean,price_stderr,fair_price_mean,imbalance_mean\n"));
    }
}
