//! Closed-form stationary books for `D_r = 0` and `D_r = D_ℓ`, critical
//! thresholds and amplitude estimates.

use crate::error::{LobError, Result};
use crate::grid;
use crate::model::{g_factor, ModelParams};
use crate::profile::{BookProfile, Provenance};

/// Critical `kℓ_ℓ` for `D_r = 0`.
pub const ZETA_C_DR0: f64 = 2.0;

/// Critical `kℓ_ℓ` for `D_r = D_ℓ`, the positive root of
/// `ζ³ + 2ζ² − 3ζ − 8`.
pub fn zeta_c_dreq() -> f64 {
    let s = 6.0 * 87f64.sqrt();
    (-2.0 + (73.0 - s).cbrt() + (73.0 + s).cbrt()) / 3.0
}

/// Critical `kℓ_ℓ` for the two closed-form ratios `ℓ_r/ℓ_ℓ ∈ {0, 1}`.
/// Other ratios need the numerical critical line.
pub fn critical_zeta(ratio: f64) -> Result<f64> {
    if ratio == 0.0 {
        Ok(ZETA_C_DR0)
    } else if ratio == 1.0 {
        Ok(zeta_c_dreq())
    } else {
        Err(LobError::Unsupported(format!("no closed-form critical kℓ_ℓ for ℓ_r/ℓ_ℓ = {ratio}; use the stability map")))
    }
}

fn require_dr0(p: &ModelParams) -> Result<()> {
    if p.d_revealed() != 0.0 {
        return Err(LobError::Unsupported(format!("closed form requires D_revealed = 0, got {}", p.d_revealed())));
    }
    Ok(())
}

fn require_dreq(p: &ModelParams) -> Result<()> {
    if p.d_revealed() != p.d_latent() {
        return Err(LobError::Unsupported(format!(
            "closed form requires D_revealed = D_latent, got {} vs {}",
            p.d_revealed(),
            p.d_latent()
        )));
    }
    p.require_equal_rates()
}

/// `ξ/(e^{kξ} − 1)`, i.e. `ξΓ(kξ)/(1 − Γ(kξ))`, with its `1/k` limit at 0.
fn xi_over_expm1(k: f64, xi: f64) -> f64 {
    let y = k * xi;
    if y < 1e-8 {
        (1.0 - 0.5 * y) / k
    } else {
        xi / y.exp_m1()
    }
}

/// Stationary solution with no revealed diffusion.
#[derive(Debug, Clone, Copy)]
pub struct Dr0Solution {
    liquidity: f64,
    k: f64,
    l: f64,
    /// `ω_r/ω_ℓ`
    rate_ratio: f64,
}

impl Dr0Solution {
    pub fn new(p: &ModelParams) -> Result<Self> {
        require_dr0(p)?;
        Ok(Dr0Solution {
            liquidity: p.liquidity(),
            k: p.k(),
            l: p.l_latent_len(),
            rate_ratio: p.omega_reveal() / p.omega_unreveal(),
        })
    }

    pub fn rho_bid(&self, xi: f64) -> f64 {
        0.5 * self.liquidity * self.l * (-xi / self.l).exp()
    }

    pub fn rho_ask(&self, xi: f64) -> f64 {
        self.liquidity * xi + self.rho_bid(xi)
    }

    /// `φ_r(ξ)` for `ξ > 0`; at `ξ = 0` returns the `0⁺` limit.
    pub fn phi(&self, xi: f64) -> f64 {
        self.rate_ratio * (self.rho_bid(xi) - self.liquidity * xi_over_expm1(self.k, xi))
    }

    /// `φ_r(0⁺) = 𝓛(ℓ_ℓ/2 − 1/k)` (times `ω_r/ω_ℓ`).
    pub fn phi_at_origin(&self) -> f64 {
        self.rate_ratio * self.liquidity * (0.5 * self.l - 1.0 / self.k)
    }
}

/// Evaluates the `D_r = 0` closed form on `grid` (`ω_r ≠ ω_ℓ` allowed).
pub fn stationary_dr0(p: &ModelParams, grid: &[f64]) -> Result<BookProfile> {
    let sol = Dr0Solution::new(p)?;
    let prof = BookProfile {
        grid: grid.to_vec(),
        rho_latent_bid: grid.iter().map(|&x| sol.rho_bid(x)).collect(),
        rho_latent_ask: grid.iter().map(|&x| sol.rho_ask(x)).collect(),
        phi_revealed: grid.iter().map(|&x| sol.phi(x)).collect(),
        params: *p,
        provenance: Provenance::AnalyticDr0,
    };
    prof.validate()?;
    Ok(prof)
}

/// `φ_r(0⁻) − φ_r(0⁺) = −𝓛[ℓ_ℓ + 2/(Γ'(0⁺)k)]` for `D_r = 0`.
pub fn jump_at_origin(p: &ModelParams) -> Result<f64> {
    require_dr0(p)?;
    let slope = p.profile().slope_at_zero();
    if slope == 0.0 {
        return Err(LobError::Unsupported("Γ'(0⁺) = 0: jump is not defined".into()));
    }
    let rate_ratio = p.omega_reveal() / p.omega_unreveal();
    Ok(-rate_ratio * p.liquidity() * (p.l_latent_len() + 2.0 / (slope * p.k())))
}

/// `F(x) = (e^{−x} − 1 + x)/x²`, smooth with `F(0) = 1/2`.
fn f_aux(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let x2 = x * x;
        0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0 + x2 * x2 / 720.0 - x2 * x2 * x / 5040.0
    } else {
        ((-x).exp_m1() + x) / (x * x)
    }
}

/// Stationary solution for equal diffusivities.
///
/// The `1/((kℓ_ℓ)² − 1)` poles of the textbook form cancel between the
/// `e^{−kξ}` and `e^{−ξ/ℓ_ℓ}` terms; the combination is evaluated as
/// `−ξe^{−kξ}[1 + 2ζ(ξ/ℓ)F((1−ζ)ξ/ℓ)]/(1+ζ)²`, which is regular at `ζ = 1`.
#[derive(Debug, Clone, Copy)]
pub struct DreqSolution {
    liquidity: f64,
    k: f64,
    l: f64,
    zeta: f64,
    g: f64,
    gamma_c: f64,
    eta_c: f64,
}

impl DreqSolution {
    pub fn new(p: &ModelParams) -> Result<Self> {
        require_dreq(p)?;
        let k = p.k();
        let l = p.l_latent_len();
        let zeta = k * l;
        let g = g_factor(zeta);
        Ok(DreqSolution {
            liquidity: p.liquidity(),
            k,
            l,
            zeta,
            g,
            gamma_c: g / (k * k * l * (zeta + 2.0)),
            eta_c: g / (2.0 * k * l),
        })
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn rho_bid(&self, xi: f64) -> f64 {
        self.liquidity / self.k * self.g * (-xi / self.l).exp()
    }

    pub fn rho_ask(&self, xi: f64) -> f64 {
        self.liquidity * xi + self.rho_bid(xi) + self.phi(xi)
    }

    /// The pole-carrying part `a(ξ+b)e^{−kξ} − ab·e^{−ξ/ℓ}` (per unit `𝓛`).
    fn singular_part(&self, xi: f64) -> f64 {
        let z = self.zeta;
        let x = (1.0 - z) * xi / self.l;
        let ek = (-self.k * xi).exp();
        if x.abs() < 1.0 {
            -xi * ek * (1.0 + 2.0 * z * (xi / self.l) * f_aux(x)) / (1.0 + z).powi(2)
        } else {
            let d = z * z - 1.0;
            let el = (-xi / self.l).exp();
            (xi * d * ek + 2.0 * self.k * self.l * self.l * (ek - el)) / (d * d)
        }
    }

    pub fn phi(&self, xi: f64) -> f64 {
        let el = (-xi / self.l).exp();
        let ek = (-self.k * xi).exp();
        self.liquidity * (self.singular_part(xi) + self.gamma_c * el * (ek - 1.0) + self.eta_c * xi * el)
    }

    /// `φ_r'(0⁺)/𝓛 = (ζ³ + 2ζ² − 3ζ − 8)/[(1+ζ)²(3ζ+8)]`.
    pub fn slope_at_origin_rescaled(&self) -> f64 {
        dreq_slope_rescaled(self.zeta)
    }

    /// Sign of `φ_r` as `ξ → ∞`: negative for `kℓ_ℓ ≤ 1`, positive above
    /// (the ask half-line then carries revealed bids far from the price).
    pub fn tail_sign(&self) -> f64 {
        if self.zeta > 1.0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// `φ_r'(0⁺)/𝓛` for `D_r = D_ℓ` as a function of `ζ = kℓ_ℓ`.
pub fn dreq_slope_rescaled(zeta: f64) -> f64 {
    let z = zeta;
    (z * z * z + 2.0 * z * z - 3.0 * z - 8.0) / ((1.0 + z).powi(2) * (3.0 * z + 8.0))
}

pub fn stationary_dreq(p: &ModelParams, grid: &[f64]) -> Result<BookProfile> {
    let sol = DreqSolution::new(p)?;
    let prof = BookProfile {
        grid: grid.to_vec(),
        rho_latent_bid: grid.iter().map(|&x| sol.rho_bid(x)).collect(),
        rho_latent_ask: grid.iter().map(|&x| sol.rho_ask(x)).collect(),
        phi_revealed: grid.iter().map(|&x| sol.phi(x)).collect(),
        params: *p,
        provenance: Provenance::AnalyticDreq,
    };
    prof.validate()?;
    Ok(prof)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxAmplitude {
    /// Exact for `D_r = 0`; a scaling estimate for `D_r = D_ℓ`.
    pub value: f64,
    pub exact: bool,
    /// Grid maximum of the revealed ask depth `−φ_r` on the default grid
    /// (`D_r = D_ℓ` only). Equals `max|φ_r|` for `kℓ_ℓ ≤ 1`; above that the
    /// positive far tail is excluded.
    pub grid_max: Option<f64>,
    pub zeta_c: f64,
}

/// Maximum revealed amplitude `max_ξ |φ_r(ξ)|`.
pub fn max_amplitude(p: &ModelParams) -> Result<MaxAmplitude> {
    let zeta = p.k_ll();
    let liq = p.liquidity();
    let k = p.k();
    if p.d_revealed() == 0.0 {
        if zeta > ZETA_C_DR0 {
            return Err(LobError::Unstable { k_ll: zeta, zeta_c: ZETA_C_DR0 });
        }
        let sol = Dr0Solution::new(p)?;
        return Ok(MaxAmplitude { value: -sol.phi_at_origin(), exact: true, grid_max: None, zeta_c: ZETA_C_DR0 });
    }
    let zc = zeta_c_dreq();
    let sol = DreqSolution::new(p)?;
    if zeta > zc {
        return Err(LobError::Unstable { k_ll: zeta, zeta_c: zc });
    }
    let pref = zc * (3.0 * zc * zc + 4.0 * zc - 3.0) / ((1.0 + zc).powi(2) * (8.0 + 3.0 * zc));
    let value = liq / (std::f64::consts::E * k) * pref * (1.0 - zeta / zc);
    let g = grid::default_grid(k, p.l_latent_len());
    let grid_max = g.iter().map(|&x| -sol.phi(x)).fold(0.0, f64::max);
    Ok(MaxAmplitude { value, exact: false, grid_max: Some(grid_max), zeta_c: zc })
}
