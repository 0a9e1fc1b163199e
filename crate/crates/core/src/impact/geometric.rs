use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::analytic::{Dr0Solution, DreqSolution};
use crate::error::{LobError, Result};
use crate::model::{g_factor, ModelParams};

/// `Li₂(y) = Σ y^k/k²` on `[0, 1]`.
pub fn dilogarithm(y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&y) {
        return Err(LobError::Domain(format!("dilogarithm needs 0 ≤ y ≤ 1, got {y}")));
    }
    Ok(li2(y, 1.0 - y))
}

/// `Li₂(y)` given both `y` and `1 − y`, so callers can pass an accurate
/// complement near `y = 1`.
fn li2(y: f64, one_minus_y: f64) -> f64 {
    if y <= 0.5 {
        series(y)
    } else if one_minus_y == 0.0 {
        PI * PI / 6.0
    } else {
        PI * PI / 6.0 - y.ln() * one_minus_y.ln() - series(one_minus_y)
    }
}

fn series(y: f64) -> f64 {
    let mut sum = 0.0;
    let mut pow = y;
    for k in 1..200 {
        let term = pow / (k * k) as f64;
        sum += term;
        if term < 1e-18 * sum.max(f64::MIN_POSITIVE) {
            break;
        }
        pow *= y;
    }
    sum
}

#[derive(Debug, Clone, Copy)]
enum Book {
    Dr0(Dr0Solution),
    Dreq(DreqSolution),
}

impl Book {
    fn phi(&self, xi: f64) -> f64 {
        match self {
            Book::Dr0(s) => s.phi(xi),
            Book::Dreq(s) => s.phi(xi),
        }
    }
}

/// Static-book impact: the executed volume equals the revealed ask volume
/// consumed between the initial price and `p`, `Q(p) = −∫₀^p φ_r`.
#[derive(Debug, Clone)]
pub struct GeometricImpact {
    params: ModelParams,
    book: Book,
    /// End of the monotone branch: first sign change of `φ_r` to positive.
    p_max: f64,
    q_sup: f64,
    rule: GaussLegendre,
    panel: f64,
}

impl GeometricImpact {
    /// Requires equal conversion rates and either `D_r = 0` or `D_r = D_ℓ`.
    pub fn new(p: &ModelParams) -> Result<Self> {
        p.require_equal_rates()?;
        let book =
            if p.d_revealed() == 0.0 { Book::Dr0(Dr0Solution::new(p)?) } else { Book::Dreq(DreqSolution::new(p)?) };
        let (k, l) = (p.k(), p.l_latent_len());
        let short = (1.0 / k).min(l);
        let end = 50.0 * (1.0 / k).max(l);
        let mut g = GeometricImpact {
            params: *p,
            book,
            p_max: end,
            q_sup: 0.0,
            rule: GaussLegendre::new(NonZeroUsize::new(20).expect("nonzero")),
            panel: 0.5 * short,
        };
        g.p_max = g.first_positive_root(short / 8.0, end);
        g.q_sup = g.volume_raw(g.p_max);
        Ok(g)
    }

    fn first_positive_root(&self, h: f64, end: f64) -> f64 {
        if self.book.phi(0.0) > 0.0 {
            return 0.0;
        }
        let mut a = 0.0;
        while a < end {
            let b = (a + h).min(end);
            if self.book.phi(b) > 0.0 {
                let (mut lo, mut hi) = (a, b);
                for _ in 0..200 {
                    let m = 0.5 * (lo + hi);
                    if self.book.phi(m) > 0.0 {
                        hi = m;
                    } else {
                        lo = m;
                    }
                    if hi - lo <= 1e-15 * hi {
                        break;
                    }
                }
                return lo;
            }
            a = b;
        }
        end
    }

    /// Largest executable volume before the impact diverges (the revealed
    /// ask volume on the monotone branch).
    pub fn q_sup(&self) -> f64 {
        self.q_sup
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    /// `−∫₀^p φ_r` by composite Gauss-Legendre quadrature.
    pub fn volume_quadrature(&self, price: f64) -> f64 {
        if price <= 0.0 {
            return 0.0;
        }
        let n = (price / self.panel).ceil().max(1.0) as usize;
        let h = price / n as f64;
        (0..n)
            .map(|i| {
                let a = i as f64 * h;
                -self.rule.integrate(a, a + h, |x| self.book.phi(x))
            })
            .sum()
    }

    fn volume_raw(&self, price: f64) -> f64 {
        let (k, l) = (self.params.k(), self.params.l_latent_len());
        let closed_ok = match self.book {
            Book::Dr0(_) => true,
            Book::Dreq(s) => (s.zeta() - 1.0).abs() >= 0.02,
        };
        // closed forms cancel badly at small prices
        if closed_ok && k * price >= 0.05 && price / l >= 0.05 {
            match self.book {
                Book::Dr0(_) => volume_dr0_closed(&self.params, price),
                Book::Dreq(_) => volume_dreq_closed(&self.params, price),
            }
        } else {
            self.volume_quadrature(price)
        }
    }

    /// `Q(p)`, saturating at [`q_sup`](Self::q_sup) past the monotone branch.
    pub fn volume(&self, price: f64) -> f64 {
        if price <= 0.0 {
            0.0
        } else if price >= self.p_max {
            self.q_sup
        } else {
            self.volume_raw(price)
        }
    }

    /// Inverts `Q(p)` by bisection.
    pub fn price(&self, q: f64) -> Result<f64> {
        if !(q >= 0.0) || !q.is_finite() {
            return Err(LobError::Domain(format!("executed volume must be ≥ 0, got {q}")));
        }
        if q == 0.0 {
            return Ok(0.0);
        }
        if q >= self.q_sup {
            return Err(LobError::ImpactDivergence { requested: q, available: self.q_sup });
        }
        let (mut lo, mut hi) = (0.0, self.p_max);
        for _ in 0..300 {
            let m = 0.5 * (lo + hi);
            if self.volume(m) < q {
                lo = m;
            } else {
                hi = m;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Closed form of `Q(p)` for `D_r = 0` (equal rates).
pub fn volume_dr0_closed(p: &ModelParams, price: f64) -> f64 {
    let (liq, k, l) = (p.liquidity(), p.k(), p.l_latent_len());
    let x = k * price;
    let y = (-x).exp();
    let omy = -(-x).exp_m1();
    -0.5 * liq * l * l * (-(-price / l).exp_m1()) + liq * price / k * omy.ln()
        - liq / (k * k) * (li2(y, omy) - PI * PI / 6.0)
}

/// Closed form of `Q(p)` for `D_r = D_ℓ`, singular at `kℓ_ℓ = 1`.
pub fn volume_dreq_closed(p: &ModelParams, price: f64) -> f64 {
    let (liq, k, l) = (p.liquidity(), p.k(), p.l_latent_len());
    let z = k * l;
    let g = g_factor(z);
    let alpha = 1.0 / (z * z - 1.0);
    let beta = 2.0 * alpha * k * l * l;
    let gamma = g / (k * k * l * (z + 2.0));
    let eta = g / (2.0 * k * l);
    let ek = (-k * price).exp();
    let el = (-price / l).exp();
    liq * alpha / (k * k) * ((k * (price + beta) + 1.0) * ek - (k * beta + 1.0))
        - liq * l * gamma / (1.0 + z) * (1.0 - (-(k + 1.0 / l) * price).exp())
        + liq * l * eta * price * el
        - liq * (eta * l * l - l * (alpha * beta + gamma)) * (1.0 - el)
}

/// Static-book price after executing `q` for `D_r = 0`.
pub fn geometric_impact_dr0(p: &ModelParams, q: f64) -> Result<f64> {
    if p.d_revealed() != 0.0 {
        return Err(LobError::Unsupported("geometric_impact_dr0 needs D_revealed = 0".into()));
    }
    GeometricImpact::new(p)?.price(q)
}

/// Static-book price after executing `q` for `D_r = D_ℓ`.
pub fn geometric_impact_dreq(p: &ModelParams, q: f64) -> Result<f64> {
    if p.d_revealed() == 0.0 {
        return Err(LobError::Unsupported("geometric_impact_dreq needs D_revealed = D_latent".into()));
    }
    GeometricImpact::new(p)?.price(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Fast,
    Slow,
}

/// Locally linear book reference: fast `√(2Q/𝓛)`, slow `√(αQ/(π𝓛))` with
/// `α = m₀/(D_ℓ𝓛)`.
pub fn llob_reference(p: &ModelParams, q: f64, regime: Regime, m0: f64) -> f64 {
    let liq = p.liquidity();
    match regime {
        Regime::Fast => (2.0 * q / liq).sqrt(),
        Regime::Slow => {
            let alpha = m0.abs() / (p.d_latent() * liq);
            (alpha * q / (PI * liq)).sqrt()
        }
    }
}
