use std::io::Write;

use serde::Serialize;

use super::config::SimConfig;
use super::state::{SimState, StepStats};
use super::volatility::{volatility, windows, Ohlc, Volatility};
use crate::error::Result;
use crate::exec::Execution;
use crate::profile::{fmt_f64, BookProfile, Provenance};

/// Recorded prices after burn-in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriceSeries {
    pub t: Vec<f64>,
    pub trade: Vec<f64>,
    pub fair: Vec<f64>,
    pub trade_ohlc: Vec<Ohlc>,
    pub fair_ohlc: Vec<Ohlc>,
}

impl PriceSeries {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "trade_price", "fair_price"])?;
        for i in 0..self.t.len() {
            wr.write_record([fmt_f64(self.t[i]), fmt_f64(self.trade[i]), fmt_f64(self.fair[i])])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn trade_volatility(&self) -> Result<Volatility> {
        volatility(&self.trade_ohlc)
    }

    pub fn fair_volatility(&self) -> Result<Volatility> {
        volatility(&self.fair_ohlc)
    }
}

/// Running sums of the books on the half-bin offset grid `o = 2(i − mid)`.
#[derive(Debug, Clone)]
struct ProfileSums {
    half: usize,
    latent_bid: Vec<f64>,
    latent_ask: Vec<f64>,
    phi: Vec<f64>,
    count: Vec<u64>,
}

impl ProfileSums {
    fn new(n_bins: usize) -> Self {
        let half = 2 * n_bins;
        let m = 2 * half + 1;
        ProfileSums { half, latent_bid: vec![0.0; m], latent_ask: vec![0.0; m], phi: vec![0.0; m], count: vec![0; m] }
    }

    fn add(&mut self, s: &SimState) {
        let twice_mid = (2.0 * s.mid).round() as i64;
        for i in 0..s.n_bins() {
            let o = (2 * i as i64 - twice_mid + self.half as i64) as usize;
            self.latent_bid[o] += s.latent_bid[i] as f64;
            self.latent_ask[o] += s.latent_ask[i] as f64;
            self.phi[o] += s.revealed_bid[i] as f64 - s.revealed_ask[i] as f64;
            self.count[o] += 1;
        }
    }

    /// Folded time averages `(ρ_B, ρ_A, φ_r)` in counts per bin on offsets
    /// `0..=half`; `None` where either mirror offset is poorly sampled.
    fn folded(&self) -> Vec<Option<[f64; 3]>> {
        let max = self.count.iter().copied().max().unwrap_or(0);
        let thresh = (max / 20).max(1);
        (0..=self.half)
            .map(|o| {
                let (p, m) = (self.half + o, self.half - o);
                if self.count[p] < thresh || self.count[m] < thresh {
                    return None;
                }
                let (cp, cm) = (self.count[p] as f64, self.count[m] as f64);
                Some([
                    0.5 * (self.latent_bid[p] / cp + self.latent_ask[m] / cm),
                    0.5 * (self.latent_ask[p] / cp + self.latent_bid[m] / cm),
                    0.5 * (self.phi[p] / cp - self.phi[m] / cm),
                ])
            })
            .collect()
    }
}

/// Outcome of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub member: u64,
    pub series: PriceSeries,
    pub steps_done: u64,
    /// Steps (after burn-in) with an empty revealed side.
    pub crisis_steps: u64,
    pub overflow_step: Option<u64>,
    pub totals: StepStats,
    pub conservation_ok: bool,
    pub final_state: SimState,
    sums: ProfileSums,
}

/// Runs `cfg.n_steps` steps (burn-in included) from `init`.
pub fn run(cfg: &SimConfig, mut state: SimState, member: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let burn_in = cfg.burn_in();
    let margin = cfg.edge_margin_bins() as f64;
    let hi_edge = (cfg.n_bins - 1) as f64 - margin;
    let mut series = PriceSeries::default();
    let mut trade_path = Vec::new();
    let mut fair_path = Vec::new();
    let mut sums = ProfileSums::new(cfg.n_bins);
    let mut totals = StepStats::default();
    let mut crisis_steps = 0;
    let mut overflow_step = None;
    let mut conservation_ok = true;
    let mut total = state.total();

    for s in 0..cfg.n_steps {
        let st = state.step(cfg, 0.0);
        let now = state.total();
        if now as i128 - total as i128 != st.injected as i128 - 2 * st.matched as i128 - st.executed as i128 {
            conservation_ok = false;
        }
        total = now;
        totals.injected += st.injected;
        totals.matched += st.matched;
        totals.executed += st.executed;
        totals.unfilled += st.unfilled;

        if state.mid < margin || state.mid > hi_edge {
            overflow_step = Some(state.step);
            break;
        }
        if s < burn_in {
            continue;
        }
        if state.crisis {
            crisis_steps += 1;
        }
        let trade = cfg.bin_price(state.mid);
        let fair = state.fair_price(cfg).unwrap_or(f64::NAN);
        trade_path.push(trade);
        fair_path.push(fair);
        let k = s - burn_in;
        if k.is_multiple_of(cfg.record_every) {
            series.t.push(state.time);
            series.trade.push(trade);
            series.fair.push(fair);
        }
        if k.is_multiple_of(cfg.sample_every) {
            sums.add(&state);
        }
    }
    series.trade_ohlc = windows(&trade_path, cfg.window as usize);
    series.fair_ohlc = windows(&fair_path, cfg.window as usize);
    Ok(RunOutput {
        member,
        series,
        steps_done: state.step,
        crisis_steps,
        overflow_step,
        totals,
        conservation_ok,
        final_state: state,
        sums,
    })
}

/// Time-averaged stationary books with ensemble standard errors.
#[derive(Debug, Clone)]
pub struct AveragedProfile {
    /// Ask half-line profile in physical densities (grid measured from the mid).
    pub profile: BookProfile,
    pub se_latent_bid: Vec<f64>,
    pub se_latent_ask: Vec<f64>,
    pub se_phi: Vec<f64>,
    pub members: usize,
}

impl AveragedProfile {
    /// BookProfile columns followed by the three standard errors.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "xi",
            "rho_latent_bid",
            "rho_latent_ask",
            "phi_revealed",
            "se_latent_bid",
            "se_latent_ask",
            "se_phi",
        ])?;
        let p = &self.profile;
        for i in 0..p.len() {
            wr.write_record([
                fmt_f64(p.grid[i]),
                fmt_f64(p.rho_latent_bid[i]),
                fmt_f64(p.rho_latent_ask[i]),
                fmt_f64(p.phi_revealed[i]),
                fmt_f64(self.se_latent_bid[i]),
                fmt_f64(self.se_latent_ask[i]),
                fmt_f64(self.se_phi[i]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Per-member run summary for the metadata file.
#[derive(Debug, Clone, Serialize)]
pub struct MemberSummary {
    pub member: u64,
    pub steps_done: u64,
    pub crisis_steps: u64,
    pub overflow_step: Option<u64>,
    pub injected: u64,
    pub matched: u64,
    pub conservation_ok: bool,
    pub trade_volatility: Option<Volatility>,
    pub fair_volatility: Option<Volatility>,
}

impl From<&RunOutput> for MemberSummary {
    fn from(r: &RunOutput) -> Self {
        MemberSummary {
            member: r.member,
            steps_done: r.steps_done,
            crisis_steps: r.crisis_steps,
            overflow_step: r.overflow_step,
            injected: r.totals.injected,
            matched: r.totals.matched,
            conservation_ok: r.conservation_ok,
            trade_volatility: r.series.trade_volatility().ok(),
            fair_volatility: r.series.fair_volatility().ok(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub config: SimConfig,
    pub burn_in_steps: u64,
    pub members: Vec<MemberSummary>,
    pub any_crisis: bool,
    pub any_overflow: bool,
}

#[derive(Debug, Clone)]
pub struct EnsembleOutput {
    pub runs: Vec<RunOutput>,
    pub profile: Option<AveragedProfile>,
}

impl EnsembleOutput {
    pub fn metadata(&self, cfg: &SimConfig) -> RunMetadata {
        let members: Vec<MemberSummary> = self.runs.iter().map(MemberSummary::from).collect();
        RunMetadata {
            seed: cfg.seed,
            config: *cfg,
            burn_in_steps: cfg.burn_in(),
            any_crisis: members.iter().any(|m| m.crisis_steps > 0),
            any_overflow: members.iter().any(|m| m.overflow_step.is_some()),
            members,
        }
    }
}

/// Independent runs started from `init`, one RNG stream per member.
pub fn run_ensemble(cfg: &SimConfig, init: &BookProfile, members: usize, exec: Execution) -> Result<EnsembleOutput> {
    cfg.validate()?;
    let runs = exec
        .map_range(members.max(1), |m| {
            let st = SimState::from_profile(cfg, init, m as u64)?;
            run(cfg, st, m as u64)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let profile = average_profiles(cfg, init, &runs);
    Ok(EnsembleOutput { runs, profile })
}

/// Ensemble mean of per-member folded time averages; the standard error is
/// the member spread over `√M` (NaN for a single member).
pub fn average_profiles(cfg: &SimConfig, like: &BookProfile, runs: &[RunOutput]) -> Option<AveragedProfile> {
    let folded: Vec<Vec<Option<[f64; 3]>>> = runs.iter().map(|r| r.sums.folded()).collect();
    let len = folded.first()?.len();
    let m = folded.len() as f64;
    let d = cfg.price_step;
    let (mut grid, mut rb, mut ra, mut ph) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut sb, mut sa, mut sp) = (Vec::new(), Vec::new(), Vec::new());
    for o in 0..len {
        let vals: Option<Vec<[f64; 3]>> = folded.iter().map(|f| f[o]).collect();
        let Some(vals) = vals else { continue };
        let mut mean = [0.0; 3];
        for v in &vals {
            for c in 0..3 {
                mean[c] += v[c] / m;
            }
        }
        let mut se = [f64::NAN; 3];
        if vals.len() > 1 {
            for c in 0..3 {
                let var = vals.iter().map(|v| (v[c] - mean[c]).powi(2)).sum::<f64>() / (m - 1.0);
                se[c] = (var / m).sqrt() / d;
            }
        }
        grid.push(0.5 * o as f64 * d);
        rb.push(mean[0] / d);
        ra.push(mean[1] / d);
        ph.push(mean[2] / d);
        sb.push(se[0]);
        sa.push(se[1]);
        sp.push(se[2]);
    }
    if grid.len() < 2 {
        return None;
    }
    Some(AveragedProfile {
        profile: BookProfile {
            grid,
            rho_latent_bid: rb,
            rho_latent_ask: ra,
            phi_revealed: ph,
            params: like.params,
            provenance: Provenance::Simulation,
        },
        se_latent_bid: sb,
        se_latent_ask: sa,
        se_phi: sp,
        members: runs.len(),
    })
}
