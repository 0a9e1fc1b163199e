//! Half-line stationary book profiles and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LobError, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    AnalyticDr0,
    AnalyticDreq,
    Bvp,
    Simulation,
}

/// Densities on the ask half-line `ξ ≥ 0`.
///
/// A first grid node at `ξ = 0` stores the one-sided `0⁺` limits; the bid
/// half follows from `ρ_B(ξ) = ρ_A(−ξ)` and `φ_r(ξ) = −φ_r(−ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BookProfile {
    pub grid: Vec<f64>,
    pub rho_latent_bid: Vec<f64>,
    pub rho_latent_ask: Vec<f64>,
    pub phi_revealed: Vec<f64>,
    pub params: ModelParams,
    pub provenance: Provenance,
}

/// Full-line view reconstructed by symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct FullLine {
    pub x: Vec<f64>,
    pub rho_latent_bid: Vec<f64>,
    pub rho_latent_ask: Vec<f64>,
    pub phi_revealed: Vec<f64>,
}

impl BookProfile {
    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        if n < 2 {
            return Err(LobError::InvalidConfig("profile needs at least two points".into()));
        }
        if self.rho_latent_bid.len() != n || self.rho_latent_ask.len() != n || self.phi_revealed.len() != n {
            return Err(LobError::InvalidConfig("profile arrays have different lengths".into()));
        }
        if self.grid[0] < 0.0 {
            return Err(LobError::InvalidConfig("profile grid must start at ξ ≥ 0".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LobError::InvalidConfig("profile grid must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Revealed ask density `ρ_A^(r) = −φ_r 1_{φ_r<0}`.
    pub fn revealed_ask(&self) -> Vec<f64> {
        self.phi_revealed.iter().map(|&p| (-p).max(0.0)).collect()
    }

    /// Linear interpolation of `(ρ_B, ρ_A, φ_r)` at `ξ ≥ 0`. Past the last
    /// node the ask book continues with slope `𝓛` and the others vanish.
    pub fn sample(&self, xi: f64) -> (f64, f64, f64) {
        let n = self.len();
        let last = n - 1;
        if xi >= self.grid[last] {
            let ra = self.rho_latent_ask[last] + self.params.liquidity() * (xi - self.grid[last]);
            return (0.0, ra, 0.0);
        }
        if xi <= self.grid[0] {
            return (self.rho_latent_bid[0], self.rho_latent_ask[0], self.phi_revealed[0]);
        }
        let j = self.grid.partition_point(|&g| g <= xi);
        let (x0, x1) = (self.grid[j - 1], self.grid[j]);
        let w = (xi - x0) / (x1 - x0);
        let lerp = |v: &[f64]| v[j - 1] + w * (v[j] - v[j - 1]);
        (lerp(&self.rho_latent_bid), lerp(&self.rho_latent_ask), lerp(&self.phi_revealed))
    }

    /// Minimum over the grid of all four densities on the ask half-line
    /// (the bid half mirrors it).
    pub fn min_density(&self) -> f64 {
        let lat = self.rho_latent_bid.iter().chain(self.rho_latent_ask.iter()).fold(f64::INFINITY, |m, &v| m.min(v));
        // a positive φ_r on the ask half-line is a negative revealed density
        let rev = self.phi_revealed.iter().fold(f64::INFINITY, |m, &v| m.min(-v));
        lat.min(rev)
    }

    pub fn full_line(&self) -> FullLine {
        let start = usize::from(self.grid[0] == 0.0);
        let mut x = Vec::with_capacity(2 * self.len());
        let mut rb = Vec::with_capacity(2 * self.len());
        let mut ra = Vec::with_capacity(2 * self.len());
        let mut ph = Vec::with_capacity(2 * self.len());
        for i in (start..self.len()).rev() {
            x.push(-self.grid[i]);
            rb.push(self.rho_latent_ask[i]);
            ra.push(self.rho_latent_bid[i]);
            ph.push(-self.phi_revealed[i]);
        }
        x.extend_from_slice(&self.grid);
        rb.extend_from_slice(&self.rho_latent_bid);
        ra.extend_from_slice(&self.rho_latent_ask);
        ph.extend_from_slice(&self.phi_revealed);
        FullLine { x, rho_latent_bid: rb, rho_latent_ask: ra, phi_revealed: ph }
    }

    /// Largest deviation from `reference` on a shared grid, each component
    /// relative to its own maximum. The latent ask book is compared through
    /// `ρ_A − 𝓛ξ` since it grows without bound.
    pub fn relative_deviation(&self, reference: &BookProfile) -> Result<f64> {
        if self.grid != reference.grid {
            return Err(LobError::InvalidConfig("profiles are on different grids".into()));
        }
        let liq = reference.params.liquidity();
        let excess =
            |p: &BookProfile| -> Vec<f64> { p.rho_latent_ask.iter().zip(&p.grid).map(|(r, x)| r - liq * x).collect() };
        let rel = |a: &[f64], b: &[f64]| {
            let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            if scale > 0.0 {
                diff / scale
            } else {
                diff
            }
        };
        Ok(rel(&self.rho_latent_bid, &reference.rho_latent_bid)
            .max(rel(&excess(self), &excess(reference)))
            .max(rel(&self.phi_revealed, &reference.phi_revealed)))
    }

    /// Copy with `ξ̃ = kξ` and densities `kρ/𝓛`.
    pub fn rescaled(&self) -> BookProfile {
        let n = self.params.nondim();
        let map = |v: &[f64]| v.iter().map(|&r| n.density(r)).collect::<Vec<_>>();
        BookProfile {
            grid: self.grid.iter().map(|&x| n.price(x)).collect(),
            rho_latent_bid: map(&self.rho_latent_bid),
            rho_latent_ask: map(&self.rho_latent_ask),
            phi_revealed: map(&self.phi_revealed),
            params: self.params,
            provenance: self.provenance,
        }
    }

    /// Multiplies every density by `c` (profiles are linear in `𝓛`).
    pub fn scaled(&self, c: f64) -> BookProfile {
        let map = |v: &[f64]| v.iter().map(|&r| r * c).collect::<Vec<_>>();
        BookProfile {
            grid: self.grid.clone(),
            rho_latent_bid: map(&self.rho_latent_bid),
            rho_latent_ask: map(&self.rho_latent_ask),
            phi_revealed: map(&self.phi_revealed),
            params: self.params,
            provenance: self.provenance,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["xi", "rho_latent_bid", "rho_latent_ask", "phi_revealed"])?;
        for i in 0..self.len() {
            wr.write_record(&[
                fmt_f64(self.grid[i]),
                fmt_f64(self.rho_latent_bid[i]),
                fmt_f64(self.rho_latent_ask[i]),
                fmt_f64(self.phi_revealed[i]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the four-column CSV; `params` and `provenance` are not part of
    /// the file and must be supplied.
    pub fn read_csv<R: Read>(r: R, params: ModelParams, provenance: Provenance) -> Result<BookProfile> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let expected = ["xi", "rho_latent_bid", "rho_latent_ask", "phi_revealed"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(LobError::InvalidConfig(format!("unexpected profile header {headers:?}")));
        }
        let mut p = BookProfile {
            grid: vec![],
            rho_latent_bid: vec![],
            rho_latent_ask: vec![],
            phi_revealed: vec![],
            params,
            provenance,
        };
        for rec in rd.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| LobError::InvalidConfig(format!("bad profile row {rec:?}")))
            };
            p.grid.push(f(0)?);
            p.rho_latent_bid.push(f(1)?);
            p.rho_latent_ask.push(f(2)?);
            p.phi_revealed.push(f(3)?);
        }
        p.validate()?;
        Ok(p)
    }
}

/// Shortest representation that round-trips, so reruns are byte-identical.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> BookProfile {
        BookProfile {
            grid: vec![0.0, 0.5, 1.0],
            rho_latent_bid: vec![1.0, 0.5, 0.25],
            rho_latent_ask: vec![1.0, 1.0, 1.25],
            phi_revealed: vec![0.0, -0.3, -0.1],
            params: ModelParams::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap(),
            provenance: Provenance::AnalyticDreq,
        }
    }

    #[test]
    fn full_line_symmetry() {
        let p = toy();
        let f = p.full_line();
        assert_eq!(f.x, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let n = f.x.len();
        for i in 0..n {
            let j = n - 1 - i;
            assert_eq!(f.rho_latent_bid[i], f.rho_latent_ask[j]);
            assert_eq!(f.phi_revealed[i], -f.phi_revealed[j]);
        }
    }

    #[test]
    fn csv_round_trip() {
        let p = toy();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("xi,rho_latent_bid,rho_latent_ask,phi_revealed\n"));
        let q = BookProfile::read_csv(&buf[..], p.params, p.provenance).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_bad_grid() {
        let mut p = toy();
        p.grid[2] = 0.5;
        assert!(p.validate().is_err());
        let mut q = toy();
        q.phi_revealed.pop();
        assert!(q.validate().is_err());
        let bad = "xi,foo\n1,2\n";
        assert!(BookProfile::read_csv(bad.as_bytes(), toy().params, Provenance::Bvp).is_err());
    }
}
