//! Half-line grids clustered towards `ξ = 0`.

/// `ξ_i = ξ_max · sinh(β s_i) / sinh(β)` with uniform `s_i ∈ [0, 1]`.
///
/// `β → 0` recovers a uniform grid. The map is smooth, so three-point
/// differences on it keep second-order accuracy.
pub fn clustered_grid(n_points: usize, xi_max: f64, beta: f64) -> Vec<f64> {
    assert!(n_points >= 2);
    let last = (n_points - 1) as f64;
    if beta.abs() < 1e-12 {
        return (0..n_points).map(|i| xi_max * i as f64 / last).collect();
    }
    let sb = beta.sinh();
    let mut g: Vec<f64> = (0..n_points).map(|i| xi_max * (beta * i as f64 / last).sinh() / sb).collect();
    g[n_points - 1] = xi_max;
    g
}

/// Default extent `20·max(1/k, ℓ_ℓ)`.
pub fn default_xi_max(k: f64, l_latent: f64) -> f64 {
    20.0 * (1.0 / k).max(l_latent)
}

pub const DEFAULT_POINTS: usize = 2001;
pub const DEFAULT_CLUSTERING: f64 = 8.0;

/// Default grid for a parameter set: 2001 clustered points on
/// `[0, 20·max(1/k, ℓ_ℓ)]`.
pub fn default_grid(k: f64, l_latent: f64) -> Vec<f64> {
    clustered_grid(DEFAULT_POINTS, default_xi_max(k, l_latent), DEFAULT_CLUSTERING)
}

/// Log-spaced points between `lo` and `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > 0.0 && n >= 1);
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Trapezoidal rule on a nonuniform grid.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let g = clustered_grid(101, 10.0, 6.0);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[100], 10.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(g[1] - g[0] < g[100] - g[99]);
        let u = clustered_grid(11, 1.0, 0.0);
        assert!((u[3] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_exact_for_linear() {
        let x = clustered_grid(50, 2.0, 3.0);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        assert!((trapezoid(&x, &y) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn log_space_endpoints() {
        let v = log_space(0.02, 3.0, 60);
        assert!((v[0] - 0.02).abs() < 1e-15);
        assert!((v[59] - 3.0).abs() < 1e-12);
    }
}
