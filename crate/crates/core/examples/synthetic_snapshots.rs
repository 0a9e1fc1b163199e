//! Writes synthetic order book snapshots drawn from the stationary model.
//!
//! `cargo run --release --example synthetic_snapshots -- OUT.csv`

use std::fs::File;
use std::io::BufWriter;

use latent_lob::bvp::BvpConfig;
use latent_lob::calibration::{synthetic_snapshots, write_snapshots_csv, BookParams, SnapshotSpec};

fn main() -> latent_lob::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic_snapshots.csv".into());
    let params = BookParams { liquidity: 3.0e5, k: 2.0, l_latent: 0.15, l_revealed: 0.05 };
    let spec = SnapshotSpec { price: 100.005, tick: 0.01, levels: 300, snapshots: 30, seed: 7 };
    let rows = synthetic_snapshots(&params, &spec, &BvpConfig::with_points(1201))?;
    write_snapshots_csv(&rows, spec.tick, BufWriter::new(File::create(&out)?))?;
    println!("{} rows to {out}", rows.len());
    Ok(())
}
