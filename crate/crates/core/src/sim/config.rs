use serde::{Deserialize, Serialize};

use crate::error::{LobError, Result};
use crate::model::ModelParams;

/// Where a latent order revealed on the wrong side of the book goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WrongSideMode {
    /// Stays at its own price.
    #[default]
    InPlace,
    /// Moves to the best opposite quote, where it is matched.
    ToBestQuote,
}

/// Lattice simulation parameters.
///
/// Diffusivities follow from `D = p·Δ²/(2τ)`; `𝓛` is volume per price², so
/// the far latent books hold `𝓛Δ²` extra particles per bin and bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    pub price_step: f64,
    pub tau: f64,
    pub p_diff_latent: f64,
    pub p_diff_revealed: f64,
    pub omega: f64,
    pub k: f64,
    #[serde(rename = "L_latent")]
    pub l_latent: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub wrong_side_mode: WrongSideMode,
    pub n_steps: u64,
    /// Steps before averaging starts; `None` = `10·max(1/ω, depth²/D_ℓ)` with
    /// depth `max(1/k, ℓ_ℓ)`.
    #[serde(default)]
    pub burn_in_steps: Option<u64>,
    /// OHLC window length in steps.
    #[serde(default = "default_window")]
    pub window: u64,
    /// Price series sampling period in steps.
    #[serde(default = "one")]
    pub record_every: u64,
    /// Profile sampling period in steps (after burn-in).
    #[serde(default = "default_sample_every")]
    pub sample_every: u64,
    /// The run aborts when the trade price comes this close (in bins) to an edge.
    #[serde(default)]
    pub edge_margin: Option<usize>,
}

fn default_bins() -> usize {
    2000
}
fn default_window() -> u64 {
    100
}
fn one() -> u64 {
    1
}
fn default_sample_every() -> u64 {
    10
}

impl SimConfig {
    /// Lattice for given physical parameters, picking `τ` so that the larger
    /// of the two diffusion probabilities equals `p_max`.
    pub fn for_params(p: &ModelParams, n_bins: usize, price_step: f64, p_max: f64, n_steps: u64) -> Result<Self> {
        p.require_equal_rates()?;
        let d_max = p.d_latent().max(p.d_revealed());
        let tau = p_max * price_step * price_step / (2.0 * d_max);
        let cfg = SimConfig {
            n_bins,
            price_step,
            tau,
            p_diff_latent: 2.0 * p.d_latent() * tau / (price_step * price_step),
            p_diff_revealed: 2.0 * p.d_revealed() * tau / (price_step * price_step),
            omega: p.omega(),
            k: p.k(),
            l_latent: p.liquidity(),
            seed: 0,
            wrong_side_mode: WrongSideMode::InPlace,
            n_steps,
            burn_in_steps: None,
            window: default_window(),
            record_every: 1,
            sample_every: default_sample_every(),
            edge_margin: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LobError::InvalidConfig(m));
        if self.n_bins < 10 {
            return bad(format!("n_bins = {} < 10", self.n_bins));
        }
        for (name, v) in [
            ("price_step", self.price_step),
            ("tau", self.tau),
            ("omega", self.omega),
            ("k", self.k),
            ("L_latent", self.l_latent),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        for (name, v) in [("p_diff_latent", self.p_diff_latent), ("p_diff_revealed", self.p_diff_revealed)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.omega * self.tau > 1.0 {
            return bad(format!("ω·τ = {} exceeds 1", self.omega * self.tau));
        }
        if self.window == 0 || self.record_every == 0 || self.sample_every == 0 {
            return bad("window, record_every and sample_every must be positive".into());
        }
        if self.p_diff_latent == 0.0 {
            return bad("p_diff_latent must be positive (no injection current otherwise)".into());
        }
        Ok(())
    }

    pub fn d_latent(&self) -> f64 {
        self.p_diff_latent * self.price_step * self.price_step / (2.0 * self.tau)
    }

    pub fn d_revealed(&self) -> f64 {
        self.p_diff_revealed * self.price_step * self.price_step / (2.0 * self.tau)
    }

    /// Continuum parameters represented by the lattice.
    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.d_latent(), self.d_revealed(), self.omega, self.k, self.l_latent)
    }

    /// Injected latent particles per step at each edge, `J·τ = D_ℓ𝓛τ`.
    pub fn injection_per_step(&self) -> f64 {
        self.d_latent() * self.l_latent * self.tau
    }

    pub fn burn_in(&self) -> u64 {
        if let Some(b) = self.burn_in_steps {
            return b;
        }
        let l = (self.d_latent() / self.omega).sqrt();
        let depth = (1.0 / self.k).max(l);
        let t = 10.0 * (1.0 / self.omega).max(depth * depth / self.d_latent());
        (t / self.tau).ceil() as u64
    }

    pub fn edge_margin_bins(&self) -> usize {
        self.edge_margin.unwrap_or(self.n_bins / 20).max(1)
    }

    /// Price of bin `i`'s center; the domain center is 0.
    pub fn bin_price(&self, i: f64) -> f64 {
        (i - 0.5 * (self.n_bins as f64 - 1.0)) * self.price_step
    }

    pub fn price_to_bin(&self, x: f64) -> f64 {
        x / self.price_step + 0.5 * (self.n_bins as f64 - 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_matches_continuum() {
        let p = ModelParams::from_lengths(7.0, 7.0 * 0.32, 0.01, 1.0 / 20.0, 1.0).unwrap();
        let c = SimConfig::for_params(&p, 400, 1.0, 1.0, 10).unwrap();
        assert!((c.p_diff_latent - 1.0).abs() < 1e-12);
        assert!((c.p_diff_revealed - 0.1024).abs() < 1e-12);
        let q = c.params().unwrap();
        assert!((q.k_ll() - 0.35).abs() < 1e-12);
        assert!((q.l_revealed_len() / q.l_latent_len() - 0.32).abs() < 1e-12);
        assert!((c.injection_per_step() - 0.5).abs() < 1e-12);
        assert_eq!(c.bin_price(199.5), 0.0);
        assert_eq!(c.price_to_bin(0.0), 199.5);
    }

    #[test]
    fn rejects_invalid() {
        let p = ModelParams::from_lengths(7.0, 7.0, 0.01, 0.05, 1.0).unwrap();
        let mut c = SimConfig::for_params(&p, 400, 1.0, 1.0, 10).unwrap();
        c.p_diff_revealed = 1.5;
        assert!(c.validate().is_err());
        let mut c = SimConfig::for_params(&p, 400, 1.0, 1.0, 10).unwrap();
        c.omega = 10.0 / c.tau;
        assert!(c.validate().is_err());
        let json = r#"{"price_step":1,"tau":1,"p_diff_latent":0.5,"p_diff_revealed":0.5,"omega":0.01,"k":0.05,"L_latent":1,"n_steps":5,"bogus":1}"#;
        assert!(serde_json::from_str::<SimConfig>(json).is_err());
    }
}
