//! Model parameters, the conversion profile Γ and derived scales.
//!
//! Everything downstream works either in physical units or in the single
//! dimensionless frame `ξ̃ = kξ`, `t̃ = ωt`, `ρ̃ = kρ/𝓛` exposed here.

use serde::{Deserialize, Serialize};

use crate::analytic::critical_zeta;
use crate::error::{check_non_negative, check_positive, LobError, Result};

/// Probability that a latent order at scaled distance `y = ±kξ` from the
/// price gets revealed. The complementary flow (revealed → latent) uses
/// `1 − Γ(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversionProfile {
    /// `Γ(y) = 1` for `y ≤ 0`, `e^{−y}` for `y > 0`.
    #[default]
    Exponential,
}

impl ConversionProfile {
    #[inline]
    pub fn gamma(self, y: f64) -> f64 {
        match self {
            ConversionProfile::Exponential => {
                if y <= 0.0 {
                    1.0
                } else {
                    (-y).exp()
                }
            }
        }
    }

    /// `1 − Γ(y)`, computed without cancellation for small positive `y`.
    #[inline]
    pub fn one_minus_gamma(self, y: f64) -> f64 {
        match self {
            ConversionProfile::Exponential => {
                if y <= 0.0 {
                    0.0
                } else {
                    -(-y).exp_m1()
                }
            }
        }
    }

    /// Right derivative `Γ'(0⁺)`.
    pub fn slope_at_zero(self) -> f64 {
        match self {
            ConversionProfile::Exponential => -1.0,
        }
    }
}

/// Free function form of [`ConversionProfile::gamma`].
#[inline]
pub fn gamma(profile: ConversionProfile, y: f64) -> f64 {
    profile.gamma(y)
}

/// `g(ζ) = 2ζ²(2+ζ)² / [(1+ζ)²(8+3ζ)]`, the latent intercept factor for
/// equal diffusivities.
pub fn g_factor(zeta: f64) -> f64 {
    let num = 2.0 * zeta * zeta * (2.0 + zeta).powi(2);
    let den = (1.0 + zeta).powi(2) * (8.0 + 3.0 * zeta);
    num / den
}

/// Physical parameters of the latent/revealed book.
///
/// Constructed only through [`ModelParams::new`] (or JSON), which validates
/// every field; afterwards the value is immutable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    #[serde(rename = "D_latent")]
    d_latent: f64,
    #[serde(rename = "D_revealed")]
    d_revealed: f64,
    #[serde(rename = "omega")]
    omega_reveal: f64,
    omega_unreveal: f64,
    k: f64,
    #[serde(rename = "L_latent")]
    l_latent: f64,
    #[serde(skip)]
    profile: ConversionProfile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(rename = "D_latent")]
    d_latent: f64,
    #[serde(rename = "D_revealed")]
    d_revealed: f64,
    omega: f64,
    k: f64,
    #[serde(rename = "L_latent")]
    l_latent: f64,
    #[serde(default)]
    omega_unreveal: Option<f64>,
}

impl<'de> Deserialize<'de> for ModelParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawParams::deserialize(d)?;
        let omega_unreveal = raw.omega_unreveal.unwrap_or(raw.omega);
        ModelParams::with_rates(raw.d_latent, raw.d_revealed, raw.omega, omega_unreveal, raw.k, raw.l_latent)
            .map_err(serde::de::Error::custom)
    }
}

impl ModelParams {
    /// Equal reveal/unreveal rates `ω_r = ω_ℓ = ω`.
    pub fn new(d_latent: f64, d_revealed: f64, omega: f64, k: f64, l_latent: f64) -> Result<Self> {
        Self::with_rates(d_latent, d_revealed, omega, omega, k, l_latent)
    }

    pub fn with_rates(
        d_latent: f64,
        d_revealed: f64,
        omega_reveal: f64,
        omega_unreveal: f64,
        k: f64,
        l_latent: f64,
    ) -> Result<Self> {
        let p = ModelParams {
            d_latent: check_positive("D_latent", d_latent)?,
            d_revealed: check_non_negative("D_revealed", d_revealed)?,
            omega_reveal: check_positive("omega", omega_reveal)?,
            omega_unreveal: check_positive("omega_unreveal", omega_unreveal)?,
            k: check_positive("k", k)?,
            l_latent: check_positive("L_latent", l_latent)?,
            profile: ConversionProfile::Exponential,
        };
        let s = p.derived_scales();
        if !(s.l_latent.is_finite() && s.l_revealed.is_finite()) {
            return Err(LobError::InvalidConfig("diffusion lengths are not finite".into()));
        }
        Ok(p)
    }

    /// Builds parameters from length scales rather than diffusivities:
    /// `D_ℓ = ωℓ_ℓ²`, `D_r = ωℓ_r²`.
    pub fn from_lengths(l_latent_len: f64, l_revealed_len: f64, omega: f64, k: f64, liquidity: f64) -> Result<Self> {
        check_positive("l_latent", l_latent_len)?;
        check_non_negative("l_revealed", l_revealed_len)?;
        check_positive("omega", omega)?;
        Self::new(omega * l_latent_len * l_latent_len, omega * l_revealed_len * l_revealed_len, omega, k, liquidity)
    }

    /// Dimensionless parameters with `k = 𝓛 = ω = 1`.
    pub fn dimensionless(k_ll: f64, k_lr: f64) -> Result<Self> {
        Self::from_lengths(k_ll, k_lr, 1.0, 1.0, 1.0)
    }

    pub fn d_latent(&self) -> f64 {
        self.d_latent
    }
    pub fn d_revealed(&self) -> f64 {
        self.d_revealed
    }
    pub fn omega(&self) -> f64 {
        self.omega_reveal
    }
    pub fn omega_reveal(&self) -> f64 {
        self.omega_reveal
    }
    pub fn omega_unreveal(&self) -> f64 {
        self.omega_unreveal
    }
    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn liquidity(&self) -> f64 {
        self.l_latent
    }
    pub fn profile(&self) -> ConversionProfile {
        self.profile
    }

    pub fn equal_rates(&self) -> bool {
        self.omega_reveal == self.omega_unreveal
    }

    /// Errors unless `ω_r = ω_ℓ`; only the `D_r = 0` closed form supports
    /// unequal rates.
    pub fn require_equal_rates(&self) -> Result<()> {
        if self.equal_rates() {
            Ok(())
        } else {
            Err(LobError::Unsupported(format!(
                "ω_r = {} ≠ ω_ℓ = {} is only supported by the D_r = 0 closed form",
                self.omega_reveal, self.omega_unreveal
            )))
        }
    }

    pub fn l_latent_len(&self) -> f64 {
        (self.d_latent / self.omega_reveal).sqrt()
    }
    pub fn l_revealed_len(&self) -> f64 {
        (self.d_revealed / self.omega_reveal).sqrt()
    }
    /// `kℓ_ℓ`, the main stability coordinate.
    pub fn k_ll(&self) -> f64 {
        self.k * self.l_latent_len()
    }
    pub fn k_lr(&self) -> f64 {
        self.k * self.l_revealed_len()
    }

    pub fn with_liquidity(&self, liquidity: f64) -> Result<Self> {
        Self::with_rates(self.d_latent, self.d_revealed, self.omega_reveal, self.omega_unreveal, self.k, liquidity)
    }

    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::new(self.d_latent, self.d_revealed, omega, self.k, self.l_latent)
    }

    pub fn derived_scales(&self) -> DerivedScales {
        derived_scales(self)
    }

    pub fn nondim(&self) -> Nondim {
        Nondim { k: self.k, omega: self.omega_reveal, liquidity: self.l_latent }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedScales {
    /// `ℓ_ℓ = sqrt(D_ℓ/ω)`
    pub l_latent: f64,
    /// `ℓ_r = sqrt(D_r/ω)`
    pub l_revealed: f64,
    /// `J = 𝓛ω/k²`, rate scale of revelation.
    pub j: f64,
    /// `J_r = D_r𝓛`
    pub j_revealed: f64,
    /// `ω_c = D_ℓk²/ζ_c²`, known in closed form only for `ℓ_r/ℓ_ℓ ∈ {0, 1}`.
    pub omega_c: Option<f64>,
}

impl DerivedScales {
    /// Critical conversion rate for a given critical `ζ_c`.
    pub fn omega_c_for(d_latent: f64, k: f64, zeta_c: f64) -> f64 {
        d_latent * k * k / (zeta_c * zeta_c)
    }
}

pub fn derived_scales(p: &ModelParams) -> DerivedScales {
    let l_latent = p.l_latent_len();
    let l_revealed = p.l_revealed_len();
    let ratio = l_revealed / l_latent;
    let omega_c = if p.d_revealed == 0.0 || p.d_revealed == p.d_latent {
        critical_zeta(ratio).ok().map(|zc| DerivedScales::omega_c_for(p.d_latent, p.k, zc))
    } else {
        None
    };
    DerivedScales {
        l_latent,
        l_revealed,
        j: p.l_latent * p.omega_reveal / (p.k * p.k),
        j_revealed: p.d_revealed * p.l_latent,
        omega_c,
    }
}

/// Conversions to and from the canonical dimensionless frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nondim {
    pub k: f64,
    pub omega: f64,
    pub liquidity: f64,
}

impl Nondim {
    pub fn price(&self, xi: f64) -> f64 {
        self.k * xi
    }
    pub fn price_back(&self, xi_t: f64) -> f64 {
        xi_t / self.k
    }
    pub fn time(&self, t: f64) -> f64 {
        self.omega * t
    }
    pub fn time_back(&self, t_t: f64) -> f64 {
        t_t / self.omega
    }
    pub fn density(&self, rho: f64) -> f64 {
        self.k * rho / self.liquidity
    }
    pub fn density_back(&self, rho_t: f64) -> f64 {
        rho_t * self.liquidity / self.k
    }
    /// Volumes scale as `𝓛/k²`.
    pub fn volume(&self, q: f64) -> f64 {
        q * self.k * self.k / self.liquidity
    }
    pub fn volume_back(&self, q_t: f64) -> f64 {
        q_t * self.liquidity / (self.k * self.k)
    }
    /// Slopes `∂ξ ρ` scale as `𝓛`.
    pub fn slope(&self, s: f64) -> f64 {
        s / self.liquidity
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn gamma_examples() {
        let p = ConversionProfile::Exponential;
        assert_eq!(p.gamma(0.0), 1.0);
        assert_eq!(p.gamma(-3.0), 1.0);
        assert_relative_eq!(p.gamma(2f64.ln()), 0.5, epsilon = 1e-15);
        assert_eq!(p.slope_at_zero(), -1.0);
    }

    #[test]
    fn g_factor_examples() {
        assert_eq!(g_factor(0.0), 0.0);
        assert_relative_eq!(g_factor(1.0), 9.0 / 22.0, epsilon = 1e-15);
        assert_relative_eq!(g_factor(2.0), 128.0 / 126.0, epsilon = 1e-15);
    }

    #[test]
    fn g_factor_small_zeta() {
        for &z in &[1e-3, 1e-4, 1e-6] {
            let r = g_factor(z) / (z * z);
            assert!((r - 1.0).abs() < 0.01, "ratio {r} at {z}");
        }
    }

    #[test]
    fn derived_scale_examples() {
        let p = ModelParams::new(1.0, 0.5, 1.0, 2.0, 3.0).unwrap();
        assert_eq!(p.l_latent_len(), 1.0);
        let p0 = ModelParams::new(1.0, 0.0, 1.0, 2.0, 3.0).unwrap();
        let s = p0.derived_scales();
        assert_eq!(s.l_revealed, 0.0);
        assert_eq!(s.j_revealed, 0.0);
        assert_relative_eq!(s.j, 3.0 / 4.0);
        assert_relative_eq!(s.omega_c.unwrap(), 4.0 / 4.0);
    }

    #[test]
    fn euro_stoxx_products() {
        let p = ModelParams::from_lengths(0.042, 0.0084, 1.0, 2.12, 4599.0).unwrap();
        assert!((p.k_ll() - 0.0890).abs() < 5e-5);
        assert!((p.k_lr() - 0.0178).abs() < 5e-5);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ModelParams::new(-1.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, -1e-9, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, f64::NAN, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0, f64::INFINITY, 1.0).is_err());
        assert!(ModelParams::with_rates(1.0, 0.0, 1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn json_strict_parsing() {
        let p: ModelParams =
            serde_json::from_str(r#"{"D_latent":1.0,"D_revealed":0.1,"omega":2.0,"k":3.0,"L_latent":5.0}"#).unwrap();
        assert!(p.equal_rates());
        assert_eq!(p.omega_unreveal(), 2.0);
        let q: ModelParams = serde_json::from_str(
            r#"{"D_latent":1.0,"D_revealed":0.1,"omega":2.0,"k":3.0,"L_latent":5.0,"omega_unreveal":1.0}"#,
        )
        .unwrap();
        assert!(!q.equal_rates());
        assert!(q.require_equal_rates().is_err());
        let bad = serde_json::from_str::<ModelParams>(
            r#"{"D_latent":1.0,"D_revealed":0.1,"omega":2.0,"k":3.0,"L_latent":5.0,"nu":0.1}"#,
        );
        assert!(bad.is_err());
        let neg = serde_json::from_str::<ModelParams>(
            r#"{"D_latent":1.0,"D_revealed":0.1,"omega":-2.0,"k":3.0,"L_latent":5.0}"#,
        );
        assert!(neg.is_err());
    }

    #[test]
    fn nondim_round_trip() {
        let p = ModelParams::new(0.3, 0.1, 2.0, 4.0, 7.0).unwrap();
        let n = p.nondim();
        assert_relative_eq!(n.price_back(n.price(0.37)), 0.37);
        assert_relative_eq!(n.density_back(n.density(11.0)), 11.0);
        assert_relative_eq!(n.volume_back(n.volume(5.0)), 5.0);
        assert_relative_eq!(n.time_back(n.time(1.5)), 1.5);
    }

    proptest! {
        #[test]
        fn gamma_nonincreasing(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let p = ConversionProfile::Exponential;
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(p.gamma(lo) >= p.gamma(hi));
            let g = p.gamma(a);
            prop_assert!((0.0..=1.0).contains(&g));
            prop_assert_eq!(g + (1.0 - g), 1.0);
            prop_assert!((p.one_minus_gamma(a) - (1.0 - g)).abs() < 1e-15);
        }

        #[test]
        fn scales_are_scale_consistent(dl in 0.01f64..10.0, dr in 0.0f64..10.0, w in 0.1f64..10.0, c in 0.1f64..10.0) {
            let p = ModelParams::new(dl, dr, w, 1.0, 1.0).unwrap();
            let q = ModelParams::new(dl * c * c, dr * c * c, w, 1.0, 1.0).unwrap();
            prop_assert!((q.l_latent_len() - c * p.l_latent_len()).abs() <= 1e-12 * q.l_latent_len().max(1.0));
            prop_assert!((q.l_revealed_len() - c * p.l_revealed_len()).abs() <= 1e-12 * q.l_revealed_len().max(1.0));
        }
    }
}
