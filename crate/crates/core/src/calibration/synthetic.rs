use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{model_density, BookParams, EmpiricalBookProfile, SkipCounts};
use crate::bvp::BvpConfig;
use crate::error::{LobError, Result};

/// Noisy folded profile straight from the model: each bin is multiplied by
/// `1 + noise·N(0, 1)` and clipped at zero.
pub fn synthetic_profile(
    params: &BookParams,
    bins: usize,
    bin_width: f64,
    noise: f64,
    seed: u64,
    cfg: &BvpConfig,
) -> Result<EmpiricalBookProfile> {
    if bins == 0 || !(bin_width > 0.0) || !(noise >= 0.0) {
        return Err(LobError::InvalidConfig(format!("bins = {bins}, width = {bin_width}, noise = {noise}")));
    }
    let offsets: Vec<f64> = (0..bins).map(|i| (i as f64 + 0.5) * bin_width).collect();
    let clean = model_density(params, &offsets, bin_width, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let density: Vec<f64> = clean
        .iter()
        .map(|&d| {
            let e: f64 = normal.sample(&mut rng);
            (d * (1.0 + noise * e)).max(0.0)
        })
        .collect();
    Ok(EmpiricalBookProfile {
        density_sd: clean.iter().map(|d| (noise * d).max(f64::MIN_POSITIVE)).collect(),
        offsets,
        density,
        snapshots: 1,
        average_price: 100.0,
        average_spread: 1.0,
        tick: 0.01,
        bin_width,
        daily_volume: None,
        skipped: SkipCounts::default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotSpec {
    pub price: f64,
    pub tick: f64,
    /// Price levels per side.
    pub levels: usize,
    pub snapshots: usize,
    pub seed: u64,
}

/// Snapshot rows with Poisson volumes around a fixed one-tick spread. The
/// best level on each side is kept non-empty so the origin stays put.
pub fn synthetic_snapshots(
    params: &BookParams,
    spec: &SnapshotSpec,
    cfg: &BvpConfig,
) -> Result<Vec<super::SnapshotRecord>> {
    if !(spec.price > 0.0) || !(spec.tick > 0.0) || spec.levels == 0 || spec.snapshots == 0 {
        return Err(LobError::InvalidConfig(format!("bad snapshot spec {spec:?}")));
    }
    let tick_pct = 100.0 * spec.tick / spec.price;
    // level j carries the model volume between j and j + 1 ticks
    let centers: Vec<f64> = (0..spec.levels).map(|j| (j as f64 + 0.5) * tick_pct).collect();
    let mean: Vec<f64> = model_density(params, &centers, tick_pct, cfg)?.iter().map(|d| d * tick_pct).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let best_bid = spec.price - 0.5 * spec.tick;
    let best_ask = spec.price + 0.5 * spec.tick;
    let mut out = Vec::new();
    for s in 0..spec.snapshots {
        let ts = format!("{s:06}");
        for (side, sign, best) in [(super::Side::Bid, -1.0, best_bid), (super::Side::Ask, 1.0, best_ask)] {
            for (j, &m) in mean.iter().enumerate() {
                let mut q = if m > 0.0 { Poisson::new(m).map(|d| d.sample(&mut rng)).unwrap_or(m) } else { 0.0 };
                if j == 0 {
                    q = q.max(1.0);
                }
                if q > 0.0 {
                    out.push(super::SnapshotRecord {
                        timestamp: ts.clone(),
                        side,
                        price: best + sign * j as f64 * spec.tick,
                        size: q,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Prices are printed with enough decimals for `tick`, sizes as integers
/// when they are whole.
pub fn write_snapshots_csv<W: Write>(rows: &[super::SnapshotRecord], tick: f64, w: W) -> Result<()> {
    let decimals = (0..12)
        .find(|&d| {
            let x = tick * 10f64.powi(d as i32);
            (x - x.round()).abs() < 1e-9 * x.max(1.0)
        })
        .unwrap_or(12);
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["timestamp", "side", "price", "size"])?;
    for r in rows {
        let side = match r.side {
            super::Side::Bid => "B",
            super::Side::Ask => "A",
        };
        wr.write_record([r.timestamp.as_str(), side, &format!("{:.decimals$}", r.price), &r.size.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}
