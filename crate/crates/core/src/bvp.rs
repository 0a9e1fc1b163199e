//! Finite-difference solver for the stationary system with arbitrary
//! `D_r ≥ 0`, plus scalar diagnostics of stationary profiles.
//!
//! The solve is done in rescaled variables (`k = 𝓛 = ω = 1`) for the
//! unknowns `ρ_B`, `u = ρ_A − ξ` and `φ_r`, interleaved node by node so
//! the matrix is banded. Results are mapped back to physical units, so
//! profiles are exactly linear in `𝓛`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::banded::{solve_refined, BandMatrix};
use crate::error::{LobError, Result};
use crate::grid::{clustered_grid, default_xi_max, DEFAULT_CLUSTERING, DEFAULT_POINTS};
use crate::model::ModelParams;
use crate::profile::{BookProfile, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BvpConfig {
    pub n_points: usize,
    /// Physical truncation; `None` uses `20·max(1/k, ℓ_ℓ)`.
    pub xi_max: Option<f64>,
    /// sinh grading factor of the grid.
    pub clustering: f64,
    /// Bound on the scaled residual `‖Ax − b‖∞ / (‖A‖‖x‖ + ‖b‖)`.
    pub tolerance: f64,
    /// Iterative-refinement passes allowed on the linear solve.
    pub max_refinements: usize,
}

impl Default for BvpConfig {
    fn default() -> Self {
        BvpConfig {
            n_points: DEFAULT_POINTS,
            xi_max: None,
            clustering: DEFAULT_CLUSTERING,
            tolerance: 1e-10,
            max_refinements: 3,
        }
    }
}

impl BvpConfig {
    pub fn with_points(n_points: usize) -> Self {
        BvpConfig { n_points, ..Default::default() }
    }

    fn resolve_xi_max(&self, p: &ModelParams) -> Result<f64> {
        if self.n_points < 101 {
            return Err(LobError::InvalidConfig(format!("n_points = {} < 101", self.n_points)));
        }
        if !(self.tolerance > 0.0) {
            return Err(LobError::InvalidConfig(format!("tolerance = {} must be positive", self.tolerance)));
        }
        if !self.clustering.is_finite() || self.clustering < 0.0 {
            return Err(LobError::InvalidConfig(format!("clustering = {} must be ≥ 0", self.clustering)));
        }
        let scale = (1.0 / p.k()).max(p.l_latent_len());
        match self.xi_max {
            None => Ok(default_xi_max(p.k(), p.l_latent_len())),
            Some(x) if x.is_finite() && x >= 10.0 * scale * (1.0 - 1e-12) => Ok(x),
            Some(x) => {
                Err(LobError::InvalidConfig(format!("xi_max = {x} is below 10·max(1/k, ℓ_ℓ) = {}", 10.0 * scale)))
            }
        }
    }
}

/// Solver diagnostics, written as a JSON sidecar next to the profile CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BvpDiagnostics {
    pub n_points: usize,
    pub xi_max: f64,
    pub clustering: f64,
    pub residual: f64,
    pub refinements: usize,
    pub k_ll: f64,
    pub k_lr: f64,
    /// `φ_r'(0⁺)/𝓛`; absent when `D_r = 0`.
    pub slope_rescaled: Option<f64>,
    /// `kρ_B(0⁺)/𝓛`
    pub overlap_rescaled: f64,
    /// `𝒱_r k²/𝓛`
    pub revealed_volume_rescaled: f64,
    /// Minimum of all four densities in units of `𝓛/k`.
    pub min_density_rescaled: f64,
    /// Origin slope of the revealed book is not negative.
    pub unstable: bool,
    /// Some density is negative somewhere on the grid.
    pub hole: bool,
}

impl BvpDiagnostics {
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub profile: BookProfile,
    pub diagnostics: BvpDiagnostics,
}

const B: usize = 0;
const U: usize = 1;
const P: usize = 2;

#[inline]
fn col(node: usize, comp: usize) -> usize {
    3 * node + comp
}

/// Weights of the one-sided second-order first derivative at `x[0]` from
/// `x[0..3]`.
fn forward_d1(x0: f64, x1: f64, x2: f64) -> [f64; 3] {
    let h1 = x1 - x0;
    let h2 = x2 - x1;
    [-(2.0 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2))]
}

/// Lagrange weights evaluating the quadratic through `xs` at `x`.
fn lagrange3(xs: [f64; 3], x: f64) -> [f64; 3] {
    let [a, b, c] = xs;
    [
        (x - b) * (x - c) / ((a - b) * (a - c)),
        (x - a) * (x - c) / ((b - a) * (b - c)),
        (x - a) * (x - b) / ((c - a) * (c - b)),
    ]
}

/// Solves the rescaled system on the given grid of `ξ̃ = kξ` (starting at 0).
/// Returns `(ρ̃_B, ũ, φ̃)` and the linear-solve report.
/// Rescaled `ρ_B`, `ρ_A − ξ` and `φ_r` with the linear-solve report.
type Fields = (Vec<f64>, Vec<f64>, Vec<f64>, crate::banded::SolveReport);

fn solve_rescaled(
    zeta: f64,
    zeta_r: f64,
    x: &[f64],
    p: &ModelParams,
    tolerance: f64,
    max_refinements: usize,
) -> Result<Fields> {
    let n = x.len();
    let last = n - 1;
    let prof = p.profile();
    let z2 = zeta * zeta;
    let zr2 = zeta_r * zeta_r;
    let dr_zero = zeta_r == 0.0;
    let dim = 3 * n;
    let mut a = BandMatrix::zeros(dim, 6, 9);
    let mut rhs = vec![0.0; dim];

    // origin: ρ_B = ρ_A, ρ_B' + ρ_A' = 0
    a.add(col(0, B), col(0, B), 1.0);
    a.add(col(0, B), col(0, U), -1.0);
    let w = forward_d1(x[0], x[1], x[2]);
    for (j, wj) in w.iter().enumerate() {
        a.add(col(0, U), col(j, B), *wj);
        a.add(col(0, U), col(j, U), *wj);
    }
    rhs[col(0, U)] = -1.0;
    if dr_zero {
        // φ_r jumps at the origin; store the 0⁺ limit by extrapolation
        let l = lagrange3([x[1], x[2], x[3]], x[0]);
        a.add(col(0, P), col(0, P), 1.0);
        for (j, lj) in l.iter().enumerate() {
            a.add(col(0, P), col(j + 1, P), -lj);
        }
    } else {
        a.add(col(0, P), col(0, P), 1.0);
    }

    for i in 1..last {
        let hm = x[i] - x[i - 1];
        let hp = x[i + 1] - x[i];
        let d2 = [2.0 / (hm * (hm + hp)), -2.0 / (hm * hp), 2.0 / (hp * (hm + hp))];
        let g = prof.gamma(x[i]);
        let omg = prof.one_minus_gamma(x[i]);
        for (off, dj) in d2.iter().enumerate() {
            let j = i + off - 1;
            a.add(col(i, B), col(j, B), z2 * dj);
            a.add(col(i, U), col(j, U), z2 * dj);
            if !dr_zero {
                a.add(col(i, P), col(j, P), zr2 * dj);
            }
        }
        a.add(col(i, B), col(i, B), -1.0);
        a.add(col(i, U), col(i, U), -g);
        a.add(col(i, U), col(i, P), -omg);
        rhs[col(i, U)] = g * x[i];
        a.add(col(i, P), col(i, U), -g);
        a.add(col(i, P), col(i, P), -omg);
        a.add(col(i, P), col(i, B), 1.0);
        rhs[col(i, P)] = g * x[i];
    }

    // far field: ρ_B = 0, φ_r = 0 (or its algebraic relation when D_r = 0).
    // ζ²(u − ρ_B) − ζ_r²φ_r is linear in ξ, vanishes at the origin and is
    // bounded, so it vanishes identically; imposing it at ξ_max pins the
    // otherwise weakly damped affine mode of u.
    a.add(col(last, B), col(last, B), 1.0);
    a.add(col(last, U), col(last, U), 1.0);
    a.add(col(last, U), col(last, B), -1.0);
    if !dr_zero {
        a.add(col(last, U), col(last, P), -zr2 / z2);
    }
    if dr_zero {
        let g = prof.gamma(x[last]);
        a.add(col(last, P), col(last, U), -g);
        a.add(col(last, P), col(last, P), -prof.one_minus_gamma(x[last]));
        a.add(col(last, P), col(last, B), 1.0);
        rhs[col(last, P)] = g * x[last];
    } else {
        a.add(col(last, P), col(last, P), 1.0);
    }

    let (sol, report) = solve_refined(&a, &rhs, tolerance, max_refinements)?;
    let mut rb = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut ph = Vec::with_capacity(n);
    for i in 0..n {
        rb.push(sol[col(i, B)]);
        u.push(sol[col(i, U)]);
        ph.push(sol[col(i, P)]);
    }
    Ok((rb, u, ph, report))
}

/// Solves the stationary half-line problem for any `D_r ≥ 0` with `ω_r = ω_ℓ`.
///
/// Unstable or non-positive solutions are returned with the corresponding
/// flags set in the diagnostics.
pub fn solve_stationary(p: &ModelParams, cfg: &BvpConfig) -> Result<BvpSolution> {
    p.require_equal_rates()?;
    let xi_max = cfg.resolve_xi_max(p)?;
    let k = p.k();
    let nd = p.nondim();
    let xt = clustered_grid(cfg.n_points, k * xi_max, cfg.clustering);
    let zeta = p.k_ll();
    let zeta_r = p.k_lr();
    let (rb, u, ph, report) = solve_rescaled(zeta, zeta_r, &xt, p, cfg.tolerance, cfg.max_refinements)?;

    let grid: Vec<f64> = xt.iter().map(|&v| nd.price_back(v)).collect();
    let rho_latent_bid: Vec<f64> = rb.iter().map(|&v| nd.density_back(v)).collect();
    let rho_latent_ask: Vec<f64> = u.iter().zip(&xt).map(|(&v, &x)| nd.density_back(v + x)).collect();
    let phi_revealed: Vec<f64> = ph.iter().map(|&v| nd.density_back(v)).collect();
    let profile =
        BookProfile { grid, rho_latent_bid, rho_latent_ask, phi_revealed, params: *p, provenance: Provenance::Bvp };

    let slope_rescaled = if zeta_r > 0.0 { Some(nd.slope(slope_at_origin(&profile)?)) } else { None };
    let jump_side = ph[0];
    let unstable = match slope_rescaled {
        Some(s) => s >= 0.0,
        None => jump_side >= 0.0,
    };
    let min_density_rescaled = nd.density(profile.min_density());
    let diagnostics = BvpDiagnostics {
        n_points: cfg.n_points,
        xi_max,
        clustering: cfg.clustering,
        residual: report.residual,
        refinements: report.refinements,
        k_ll: zeta,
        k_lr: zeta_r,
        slope_rescaled,
        overlap_rescaled: nd.density(overlap_proxy(&profile)),
        revealed_volume_rescaled: nd.volume(revealed_volume(&profile)),
        min_density_rescaled,
        unstable,
        hole: min_density_rescaled < -1e-9,
    };
    Ok(BvpSolution { profile, diagnostics })
}

/// One-sided second-order estimate of `φ_r'(0⁺)`.
///
/// Only defined for `D_r > 0`; with `D_r = 0` the revealed book jumps at the
/// origin and `jump_at_origin` applies instead.
pub fn slope_at_origin(b: &BookProfile) -> Result<f64> {
    if b.params.d_revealed() == 0.0 {
        return Err(LobError::Unsupported("D_r = 0: the revealed book jumps at the origin, use jump_at_origin".into()));
    }
    if b.len() < 3 {
        return Err(LobError::InvalidConfig("slope needs at least three grid points".into()));
    }
    let g = &b.grid;
    let f = &b.phi_revealed;
    if g[0] == 0.0 {
        let w = forward_d1(g[0], g[1], g[2]);
        Ok(w[0] * f[0] + w[1] * f[1] + w[2] * f[2])
    } else {
        // quadratic through (0, 0) and the first two nodes
        let w = forward_d1(0.0, g[0], g[1]);
        Ok(w[1] * f[0] + w[2] * f[1])
    }
}

/// Latent-book overlap `ρ_B(0⁺)`.
pub fn overlap_proxy(b: &BookProfile) -> f64 {
    let g = &b.grid;
    let f = &b.rho_latent_bid;
    if g[0] == 0.0 || b.len() < 3 {
        return f[0];
    }
    let l = lagrange3([g[0], g[1], g[2]], 0.0);
    l[0] * f[0] + l[1] * f[1] + l[2] * f[2]
}

/// Revealed ask volume `|∫ φ_r 1_{φ_r<0} dξ|`.
///
/// Trapezoidal on the piecewise-linear interpolant, with sign changes
/// located inside their interval.
pub fn revealed_volume(b: &BookProfile) -> f64 {
    let g = &b.grid;
    let f = &b.phi_revealed;
    let mut v = 0.0;
    for i in 0..b.len() - 1 {
        let (x0, x1) = (g[i], g[i + 1]);
        let (a, c) = (-f[i], -f[i + 1]);
        let h = x1 - x0;
        if a >= 0.0 && c >= 0.0 {
            v += 0.5 * h * (a + c);
        } else if a > 0.0 && c < 0.0 {
            v += 0.5 * h * a * a / (a - c);
        } else if a < 0.0 && c > 0.0 {
            v += 0.5 * h * c * c / (c - a);
        }
    }
    v
}

/// Stationary profile from the closed form where one exists, otherwise from
/// the solver, on the solver's grid.
pub fn stationary_profile(p: &ModelParams, cfg: &BvpConfig) -> Result<BookProfile> {
    if p.d_revealed() == 0.0 {
        let xi_max = cfg.resolve_xi_max(p)?;
        let grid = clustered_grid(cfg.n_points, xi_max, cfg.clustering);
        return crate::analytic::stationary_dr0(p, &grid);
    }
    if p.d_revealed() == p.d_latent() && p.equal_rates() {
        let xi_max = cfg.resolve_xi_max(p)?;
        let grid = clustered_grid(cfg.n_points, xi_max, cfg.clustering);
        return crate::analytic::stationary_dreq(p, &grid);
    }
    Ok(solve_stationary(p, cfg)?.profile)
}
