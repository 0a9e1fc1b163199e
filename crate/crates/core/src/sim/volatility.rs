use serde::Serialize;

use crate::error::{LobError, Result};

/// Open/high/low/close of one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ohlc {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl Ohlc {
    pub fn new(p: f64) -> Self {
        Ohlc { open: p, high: p, low: p, close: p }
    }

    pub fn push(&mut self, p: f64) {
        self.high = self.high.max(p);
        self.low = self.low.min(p);
        self.close = p;
    }
}

/// Splits a price path into consecutive windows of `window` samples; a
/// trailing partial window is dropped.
pub fn windows(prices: &[f64], window: usize) -> Vec<Ohlc> {
    if window == 0 {
        return Vec::new();
    }
    prices
        .chunks_exact(window)
        .map(|c| {
            let mut o = Ohlc::new(c[0]);
            c[1..].iter().for_each(|&p| o.push(p));
            o
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Volatility {
    /// Rogers-Satchell variance per window.
    pub rs2: f64,
    /// Parkinson variance per window.
    pub p2: f64,
}

/// Range estimators on raw (not log) prices.
pub fn volatility(w: &[Ohlc]) -> Result<Volatility> {
    if w.len() < 2 {
        return Err(LobError::InvalidConfig(format!("volatility needs at least 2 windows, got {}", w.len())));
    }
    let n = w.len() as f64;
    let rs2 =
        w.iter().map(|o| (o.high - o.open) * (o.high - o.close) + (o.low - o.open) * (o.low - o.close)).sum::<f64>()
            / n;
    let p2 = w.iter().map(|o| (o.high - o.low).powi(2)).sum::<f64>() / n / (4.0 * std::f64::consts::LN_2);
    Ok(Volatility { rs2, p2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_price_has_no_volatility() {
        let w = windows(&[3.0; 40], 10);
        assert_eq!(w.len(), 4);
        let v = volatility(&w).unwrap();
        assert_eq!(v.rs2, 0.0);
        assert_eq!(v.p2, 0.0);
    }

    #[test]
    fn hand_evaluated_window() {
        let o = Ohlc { open: 0.0, high: 2.0, low: 0.0, close: 2.0 };
        let v = volatility(&[o, o]).unwrap();
        assert_eq!(v.rs2, 0.0);
        assert!((v.p2 - 1.0 / std::f64::consts::LN_2).abs() < 1e-15);
        assert!(volatility(&[o]).is_err());
    }

    #[test]
    fn windows_respect_ordering() {
        let p: Vec<f64> = (0..95).map(|i| ((i * 37) % 11) as f64).collect();
        for o in windows(&p, 7) {
            assert!(o.low <= o.open && o.open <= o.high);
            assert!(o.low <= o.close && o.close <= o.high);
        }
        assert_eq!(windows(&p, 7).len(), 13);
    }
}
