use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LobError, Result};
use crate::exec::Execution;
use crate::profile::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "B")]
    Bid,
    #[serde(rename = "A")]
    Ask,
}

/// One price level of one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub timestamp: String,
    pub side: Side,
    pub price: f64,
    pub size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinningConfig {
    /// Bin width in percent of the average price.
    #[serde(default = "default_width")]
    pub bin_width: f64,
    /// Largest folded offset kept, in percent; `None` keeps everything.
    #[serde(default)]
    pub max_offset: Option<f64>,
    /// Tick size in price units; `None` infers it from the data.
    #[serde(default)]
    pub tick: Option<f64>,
}

fn default_width() -> f64 {
    0.01
}

impl Default for BinningConfig {
    fn default() -> Self {
        BinningConfig { bin_width: default_width(), max_offset: None, tick: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SkipCounts {
    pub crossed: usize,
    pub empty_side: usize,
    pub malformed: usize,
}

impl SkipCounts {
    fn merge(&mut self, o: SkipCounts) {
        self.crossed += o.crossed;
        self.empty_side += o.empty_side;
        self.malformed += o.malformed;
    }
}

/// Snapshot-averaged book with the bid side folded onto the ask side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalBookProfile {
    /// Bin centers, in percent of the average price, measured from the
    /// opposite best quote.
    pub offsets: Vec<f64>,
    /// Shares per percent price.
    pub density: Vec<f64>,
    /// Standard deviation of the per-snapshot density.
    pub density_sd: Vec<f64>,
    pub snapshots: usize,
    pub average_price: f64,
    /// Average spread in ticks.
    pub average_spread: f64,
    pub tick: f64,
    pub bin_width: f64,
    /// Average daily volume, when known.
    pub daily_volume: Option<f64>,
    pub skipped: SkipCounts,
}

impl EmpiricalBookProfile {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["offset", "density", "density_sd"])?;
        for i in 0..self.len() {
            wr.write_record([fmt_f64(self.offsets[i]), fmt_f64(self.density[i]), fmt_f64(self.density_sd[i])])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Folds a two-sided profile given on symmetric offsets; for an already
    /// folded profile (both sides equal) this is the identity.
    pub fn fold_sides(bid: &[f64], ask: &[f64]) -> Vec<f64> {
        bid.iter().zip(ask).map(|(b, a)| 0.5 * (b + a)).collect()
    }
}

#[derive(Debug, Clone)]
struct Snapshot {
    best_bid: f64,
    best_ask: f64,
    bids: Vec<(f64, f64)>,
    asks: Vec<(f64, f64)>,
}

#[derive(Debug, Default)]
struct Parsed {
    snapshots: Vec<Snapshot>,
    skipped: SkipCounts,
}

#[derive(Default)]
struct Pending {
    timestamp: String,
    bids: Vec<(f64, f64)>,
    asks: Vec<(f64, f64)>,
    bad: bool,
}

fn finish(p: Pending, out: &mut Parsed) {
    if p.timestamp.is_empty() && p.bids.is_empty() && p.asks.is_empty() {
        return;
    }
    if p.bad {
        out.skipped.malformed += 1;
        return;
    }
    if p.bids.is_empty() || p.asks.is_empty() {
        out.skipped.empty_side += 1;
        return;
    }
    let best_bid = p.bids.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
    let best_ask = p.asks.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    if best_bid >= best_ask {
        out.skipped.crossed += 1;
        return;
    }
    out.snapshots.push(Snapshot { best_bid, best_ask, bids: p.bids, asks: p.asks });
}

/// Rows sharing a timestamp form one snapshot; snapshots are contiguous.
fn parse<R: Read>(r: R) -> Result<Parsed> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rd.headers()?.clone();
    let want = ["timestamp", "side", "price", "size"];
    if headers.len() < 4 || want.iter().zip(headers.iter()).any(|(a, b)| a != &b) {
        return Err(LobError::InvalidConfig(format!("snapshot header must be {}, got {:?}", want.join(","), headers)));
    }
    let mut out = Parsed::default();
    let mut cur = Pending::default();
    for rec in rd.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(_) => {
                cur.bad = true;
                continue;
            }
        };
        let ts = rec.get(0).unwrap_or("").to_string();
        if ts != cur.timestamp {
            finish(std::mem::take(&mut cur), &mut out);
            cur.timestamp = ts;
        }
        let side = rec.get(1);
        let price = rec.get(2).and_then(|s| s.parse::<f64>().ok());
        let size = rec.get(3).and_then(|s| s.parse::<f64>().ok());
        match (side, price, size) {
            (Some(s), Some(p), Some(q)) if p > 0.0 && q > 0.0 && p.is_finite() && q.is_finite() => match s {
                "B" => cur.bids.push((p, q)),
                "A" => cur.asks.push((p, q)),
                _ => cur.bad = true,
            },
            _ => cur.bad = true,
        }
    }
    finish(cur, &mut out);
    Ok(out)
}

fn infer_tick(snaps: &[Snapshot]) -> f64 {
    let mut tick = f64::INFINITY;
    for s in snaps {
        let mut prices: Vec<f64> = s.bids.iter().chain(&s.asks).map(|x| x.0).collect();
        prices.sort_by(f64::total_cmp);
        for w in prices.windows(2) {
            let d = w[1] - w[0];
            // ignore float noise between identical levels
            if d > 1e-9 * w[1] {
                tick = tick.min(d);
            }
        }
    }
    tick
}

/// Parses snapshot CSV sources (in parallel) and averages the folded books.
pub fn ingest_snapshots<R: Read + Send>(
    sources: Vec<R>,
    cfg: &BinningConfig,
    exec: Execution,
) -> Result<EmpiricalBookProfile> {
    if !(cfg.bin_width > 0.0) {
        return Err(LobError::InvalidConfig(format!("bin_width must be positive, got {}", cfg.bin_width)));
    }
    let cells: Vec<std::sync::Mutex<Option<R>>> = sources.into_iter().map(|s| std::sync::Mutex::new(Some(s))).collect();
    let parts = exec.map(&cells, |c| {
        let r = c.lock().expect("poisoned").take().expect("read once");
        parse(r)
    });
    let mut snaps = Vec::new();
    let mut skipped = SkipCounts::default();
    for p in parts {
        let p = p?;
        snaps.extend(p.snapshots);
        skipped.merge(p.skipped);
    }
    if snaps.is_empty() {
        return Err(LobError::DegenerateBook(format!("no usable snapshot ({skipped:?})")));
    }
    let n = snaps.len() as f64;
    let avg_price = snaps.iter().map(|s| 0.5 * (s.best_bid + s.best_ask)).sum::<f64>() / n;
    let tick = cfg.tick.unwrap_or_else(|| infer_tick(&snaps));
    let tick = if tick.is_finite() { tick } else { snaps[0].best_ask - snaps[0].best_bid };
    let avg_spread = snaps.iter().map(|s| (s.best_ask - s.best_bid) / tick).sum::<f64>() / n;

    let to_pct = |d: f64| 100.0 * d / avg_price;
    let max_off = snaps
        .iter()
        .flat_map(|s| {
            s.asks
                .iter()
                .map(move |a| to_pct(a.0 - s.best_bid))
                .chain(s.bids.iter().map(move |b| to_pct(s.best_ask - b.0)))
        })
        .fold(0.0, f64::max);
    let max_off = cfg.max_offset.map_or(max_off, |m| m.min(max_off));
    let n_bins = ((max_off / cfg.bin_width).floor() as usize + 1).max(1);
    let mut sum = vec![0.0; n_bins];
    let mut sumsq = vec![0.0; n_bins];
    let mut one = vec![0.0; n_bins];
    for s in &snaps {
        one.iter_mut().for_each(|v| *v = 0.0);
        let mut put = |off: f64, q: f64| {
            let b = (to_pct(off) / cfg.bin_width).floor();
            if b >= 0.0 && (b as usize) < n_bins {
                one[b as usize] += 0.5 * q / cfg.bin_width;
            }
        };
        for &(p, q) in &s.asks {
            put(p - s.best_bid, q);
        }
        for &(p, q) in &s.bids {
            put(s.best_ask - p, q);
        }
        for i in 0..n_bins {
            sum[i] += one[i];
            sumsq[i] += one[i] * one[i];
        }
    }
    let density: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let density_sd = sumsq
        .iter()
        .zip(&density)
        .map(|(s2, m)| if n > 1.0 { ((s2 - n * m * m) / (n - 1.0)).max(0.0).sqrt() } else { 0.0 })
        .collect();
    Ok(EmpiricalBookProfile {
        offsets: (0..n_bins).map(|i| (i as f64 + 0.5) * cfg.bin_width).collect(),
        density,
        density_sd,
        snapshots: snaps.len(),
        average_price: avg_price,
        average_spread: avg_spread,
        tick,
        bin_width: cfg.bin_width,
        daily_volume: None,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(texts: &[&str], cfg: &BinningConfig) -> Result<EmpiricalBookProfile> {
        ingest_snapshots(texts.iter().map(|t| t.as_bytes()).collect(), cfg, Execution::Sequential)
    }

    const SYM: &str = "timestamp,side,price,size\n\
        t0,B,99.99,10\nt0,B,99.98,20\nt0,B,99.97,5\n\
        t0,A,100.01,10\nt0,A,100.02,20\nt0,A,100.03,5\n";

    #[test]
    fn symmetric_snapshot_folds_onto_either_side() {
        let cfg = BinningConfig { bin_width: 0.01, ..Default::default() };
        let p = ingest(&[SYM], &cfg).unwrap();
        assert_eq!(p.snapshots, 1);
        assert!((p.average_price - 100.0).abs() < 1e-12);
        assert!((p.tick - 0.01).abs() < 1e-9);
        assert!((p.average_spread - 2.0).abs() < 1e-6);
        // asks at 0.02, 0.03, 0.04 above the best bid, i.e. 0.02%...0.04%
        let total: f64 = p.density.iter().sum::<f64>() * p.bin_width;
        assert!((total - 35.0).abs() < 1e-9);
        let i = (0.025 / 0.01) as usize;
        assert!((p.density[i] - 10.0 / 0.01).abs() < 1e-6 || (p.density[i - 1] - 10.0 / 0.01).abs() < 1e-6);
    }

    #[test]
    fn duplicate_snapshots_average_to_one() {
        let cfg = BinningConfig::default();
        let one = ingest(&[SYM], &cfg).unwrap();
        let two_text =
            format!("{SYM}{}", SYM.lines().skip(1).map(|l| l.replace("t0", "t1") + "\n").collect::<String>());
        let two = ingest(&[&two_text], &cfg).unwrap();
        assert_eq!(two.snapshots, 2);
        assert_eq!(one.density, two.density);
        assert!(two.density_sd.iter().all(|s| *s == 0.0));
        let split = ingest(&[SYM, SYM], &cfg).unwrap();
        assert_eq!(split.density, one.density);
    }

    #[test]
    fn bad_snapshots_are_skipped_and_counted() {
        let text = "timestamp,side,price,size\n\
            a,B,10.0,1\na,A,9.9,1\n\
            b,B,10.0,1\n\
            c,B,10.0,x\nc,A,10.1,1\n\
            d,B,10.0,1\nd,A,10.1,2\n";
        let p = ingest(&[text], &BinningConfig::default()).unwrap();
        assert_eq!(p.snapshots, 1);
        assert_eq!(p.skipped, SkipCounts { crossed: 1, empty_side: 1, malformed: 1 });
        assert!(ingest(&["timestamp,side,price,size\nx,B,1,1\n"], &BinningConfig::default()).is_err());
        assert!(ingest(&["ts,side,price,size\n"], &BinningConfig::default()).is_err());
    }

    #[test]
    fn folding_is_idempotent() {
        let a = vec![1.0, 2.0, 3.5];
        let f = EmpiricalBookProfile::fold_sides(&a, &a);
        assert_eq!(f, a);
        assert_eq!(EmpiricalBookProfile::fold_sides(&f, &f), a);
    }
}
