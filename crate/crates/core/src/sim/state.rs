use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use super::config::{SimConfig, WrongSideMode};
use crate::error::{LobError, Result};
use crate::profile::BookProfile;

#[inline]
pub(crate) fn binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("probability checked").sample(rng)
    }
}

/// Per-step particle bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub injected: u64,
    /// Pairs annihilated by bid/ask matching.
    pub matched: u64,
    /// Revealed particles consumed by market orders.
    pub executed: u64,
    /// Market-order volume that found no liquidity.
    pub unfilled: u64,
}

/// Particle counts for the four books plus clock, price and RNG.
#[derive(Debug, Clone)]
pub struct SimState {
    pub latent_bid: Vec<u64>,
    pub latent_ask: Vec<u64>,
    pub revealed_bid: Vec<u64>,
    pub revealed_ask: Vec<u64>,
    pub step: u64,
    pub time: f64,
    /// Mid-price in bin-index units (integer or half-integer).
    pub mid: f64,
    /// Set while one revealed side is empty.
    pub crisis: bool,
    pub rng: ChaCha8Rng,
    inject_acc: f64,
    market_acc: f64,
    moves: Vec<i64>,
}

/// Best revealed quotes as bin indices.
pub fn best_quotes(bid: &[u64], ask: &[u64]) -> (Option<usize>, Option<usize>) {
    (bid.iter().rposition(|&c| c > 0), ask.iter().position(|&c| c > 0))
}

fn stochastic_round<R: Rng>(rng: &mut R, x: f64) -> u64 {
    if !(x > 0.0) {
        return 0;
    }
    let f = x.floor();
    f as u64 + u64::from(rng.random::<f64>() < x - f)
}

impl SimState {
    pub fn empty(cfg: &SimConfig, stream: u64) -> Self {
        let n = cfg.n_bins;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        SimState {
            latent_bid: vec![0; n],
            latent_ask: vec![0; n],
            revealed_bid: vec![0; n],
            revealed_ask: vec![0; n],
            step: 0,
            time: 0.0,
            mid: 0.5 * (n as f64 - 1.0),
            crisis: false,
            rng,
            inject_acc: 0.0,
            market_acc: 0.0,
            moves: vec![0; n],
        }
    }

    /// Books drawn around the domain center from a stationary half-line
    /// profile (expected counts rounded stochastically).
    pub fn from_profile(cfg: &SimConfig, profile: &BookProfile, stream: u64) -> Result<Self> {
        profile.validate()?;
        let mut s = Self::empty(cfg, stream);
        let d = cfg.price_step;
        for i in 0..cfg.n_bins {
            let x = cfg.bin_price(i as f64);
            let (rb_h, ra_h, ph_h) = profile.sample(x.abs());
            // full line from the half-line by symmetry
            let (lb, la, phi) = if x > 0.0 { (rb_h, ra_h, ph_h) } else { (ra_h, rb_h, -ph_h) };
            s.latent_bid[i] = stochastic_round(&mut s.rng, lb * d);
            s.latent_ask[i] = stochastic_round(&mut s.rng, la * d);
            s.revealed_bid[i] = stochastic_round(&mut s.rng, phi.max(0.0) * d);
            s.revealed_ask[i] = stochastic_round(&mut s.rng, (-phi).max(0.0) * d);
        }
        s.match_books();
        s.update_mid();
        Ok(s)
    }

    pub fn n_bins(&self) -> usize {
        self.latent_bid.len()
    }

    pub fn total(&self) -> u64 {
        [&self.latent_bid, &self.latent_ask, &self.revealed_bid, &self.revealed_ask]
            .iter()
            .map(|v| v.iter().sum::<u64>())
            .sum()
    }

    fn diffuse(book: &mut [u64], moves: &mut [i64], p: f64, rng: &mut ChaCha8Rng) {
        if p <= 0.0 {
            return;
        }
        let n = book.len();
        moves.iter_mut().for_each(|m| *m = 0);
        for i in 0..n {
            let movers = binomial(rng, book[i], p);
            if movers == 0 {
                continue;
            }
            let left = binomial(rng, movers, 0.5);
            let right = movers - left;
            moves[i] -= movers as i64;
            // reflect at the edges
            let l = if i == 0 { 0 } else { i - 1 };
            let r = if i + 1 == n { n - 1 } else { i + 1 };
            moves[l] += left as i64;
            moves[r] += right as i64;
        }
        for (b, m) in book.iter_mut().zip(moves.iter()) {
            *b = (*b as i64 + m) as u64;
        }
    }

    fn match_books(&mut self) -> u64 {
        let mut matched = 0;
        for (b, a) in self.revealed_bid.iter_mut().zip(self.revealed_ask.iter_mut()) {
            let m = (*b).min(*a);
            *b -= m;
            *a -= m;
            matched += m;
        }
        // orders that hopped past each other still cross: execute them
        // best against best until the books separate
        let n = self.n_bins();
        let (mut a, mut b) = (0usize, n - 1);
        loop {
            while a < n && self.revealed_ask[a] == 0 {
                a += 1;
            }
            while b > 0 && self.revealed_bid[b] == 0 {
                b -= 1;
            }
            if a >= n || self.revealed_bid[b] == 0 || b <= a {
                break;
            }
            let m = self.revealed_bid[b].min(self.revealed_ask[a]);
            self.revealed_bid[b] -= m;
            self.revealed_ask[a] -= m;
            matched += m;
        }
        matched
    }

    fn update_mid(&mut self) {
        match best_quotes(&self.revealed_bid, &self.revealed_ask) {
            (Some(b), Some(a)) => {
                self.mid = 0.5 * (a as f64 + b as f64);
                self.crisis = false;
            }
            _ => self.crisis = true,
        }
    }

    /// Market orders for `qty` particles: buys (`qty > 0`) consume the lowest
    /// asks, sells the highest bids. Returns the executed count.
    pub fn execute_market(&mut self, buy: bool, qty: u64) -> u64 {
        let mut left = qty;
        let n = self.n_bins();
        let book = if buy { &mut self.revealed_ask } else { &mut self.revealed_bid };
        let order: Box<dyn Iterator<Item = usize>> = if buy { Box::new(0..n) } else { Box::new((0..n).rev()) };
        for i in order {
            if left == 0 {
                break;
            }
            let t = book[i].min(left);
            book[i] -= t;
            left -= t;
        }
        qty - left
    }

    /// One cycle: diffusion, edge injection, conversion, matching, optional
    /// metaorder flow (`meta_rate` particles per step, sign = side), price
    /// update.
    pub fn step(&mut self, cfg: &SimConfig, meta_rate: f64) -> StepStats {
        let mut st = StepStats::default();
        let n = cfg.n_bins;

        Self::diffuse(&mut self.latent_bid, &mut self.moves, cfg.p_diff_latent, &mut self.rng);
        Self::diffuse(&mut self.latent_ask, &mut self.moves, cfg.p_diff_latent, &mut self.rng);
        Self::diffuse(&mut self.revealed_bid, &mut self.moves, cfg.p_diff_revealed, &mut self.rng);
        Self::diffuse(&mut self.revealed_ask, &mut self.moves, cfg.p_diff_revealed, &mut self.rng);

        self.inject_acc += cfg.injection_per_step();
        let whole = self.inject_acc.floor();
        self.inject_acc -= whole;
        let whole = whole as u64;
        self.latent_bid[0] += whole;
        self.latent_ask[n - 1] += whole;
        st.injected = 2 * whole;

        self.convert(cfg);
        st.matched = self.match_books();

        if meta_rate != 0.0 {
            self.market_acc += meta_rate.abs();
            let q = self.market_acc.floor();
            self.market_acc -= q;
            let q = q as u64;
            let done = self.execute_market(meta_rate > 0.0, q);
            st.executed = done;
            st.unfilled = q - done;
        }

        self.update_mid();
        self.step += 1;
        self.time += cfg.tau;
        st
    }

    fn convert(&mut self, cfg: &SimConfig) {
        let wt = cfg.omega * cfg.tau;
        let kd = cfg.k * cfg.price_step;
        let mid = self.mid;
        let (best_bid, best_ask) = best_quotes(&self.revealed_bid, &self.revealed_ask);
        let to_quote = cfg.wrong_side_mode == WrongSideMode::ToBestQuote;
        for i in 0..cfg.n_bins {
            let y = kd * (i as f64 - mid);
            // ask side sees Γ(kξ), bid side Γ(−kξ)
            let (g_ask, omg_ask) = gamma_pair(y);
            let (g_bid, omg_bid) = gamma_pair(-y);

            let up_a = binomial(&mut self.rng, self.latent_ask[i], wt * g_ask);
            let down_a = binomial(&mut self.rng, self.revealed_ask[i], wt * omg_ask);
            let up_b = binomial(&mut self.rng, self.latent_bid[i], wt * g_bid);
            let down_b = binomial(&mut self.rng, self.revealed_bid[i], wt * omg_bid);

            self.latent_ask[i] = self.latent_ask[i] - up_a + down_a;
            self.revealed_ask[i] -= down_a;
            self.latent_bid[i] = self.latent_bid[i] - up_b + down_b;
            self.revealed_bid[i] -= down_b;

            let ask_dest = match best_bid {
                Some(b) if to_quote && i <= b => b,
                _ => i,
            };
            let bid_dest = match best_ask {
                Some(a) if to_quote && i >= a => a,
                _ => i,
            };
            self.revealed_ask[ask_dest] += up_a;
            self.revealed_bid[bid_dest] += up_b;
        }
    }

    /// Trade price: mid-point of the best revealed quotes (bin centers).
    pub fn trade_price(&self, cfg: &SimConfig) -> Result<f64> {
        match best_quotes(&self.revealed_bid, &self.revealed_ask) {
            (Some(b), Some(a)) => Ok(cfg.bin_price(0.5 * (a as f64 + b as f64))),
            _ => Err(LobError::LiquidityCrisis("a revealed side is empty".into())),
        }
    }

    /// Fair price: where cumulative ask volume below equals cumulative bid
    /// volume above, counting latent and revealed orders and spreading each
    /// bin uniformly over its width.
    pub fn fair_price(&self, cfg: &SimConfig) -> Result<f64> {
        let n = self.n_bins();
        let asks: Vec<u64> = (0..n).map(|i| self.latent_ask[i] + self.revealed_ask[i]).collect();
        let bids: Vec<u64> = (0..n).map(|i| self.latent_bid[i] + self.revealed_bid[i]).collect();
        let e = fair_edge(&asks, &bids)?;
        // edge j sits at the lower boundary of bin j
        Ok(cfg.bin_price(e - 0.5))
    }

    /// Signed revealed volumes `(V_bid, V_ask)`.
    pub fn revealed_volumes(&self) -> (u64, u64) {
        (self.revealed_bid.iter().sum(), self.revealed_ask.iter().sum())
    }
}

#[inline]
fn gamma_pair(y: f64) -> (f64, f64) {
    if y <= 0.0 {
        (1.0, 0.0)
    } else {
        ((-y).exp(), -(-y).exp_m1())
    }
}

/// Fractional bin-edge index of the fair price (edge `j` is the lower edge
/// of bin `j`).
pub fn fair_edge(asks: &[u64], bids: &[u64]) -> Result<f64> {
    let n = asks.len();
    let total_a: u64 = asks.iter().sum();
    let total_b: u64 = bids.iter().sum();
    if total_a == 0 || total_b == 0 {
        return Err(LobError::DegenerateBook("no volume on one side".into()));
    }
    // G(j) = asks below edge j − bids above edge j, nondecreasing in j
    let mut ask_below = vec![0i128; n + 1];
    let mut bid_above = vec![0i128; n + 1];
    for j in 0..n {
        ask_below[j + 1] = ask_below[j] + asks[j] as i128;
    }
    for j in (0..n).rev() {
        bid_above[j] = bid_above[j + 1] + bids[j] as i128;
    }
    let g = |j: usize| ask_below[j] - bid_above[j];
    // first edge with G ≥ 0 by bisection
    let (mut lo, mut hi) = (0usize, n);
    if g(0) >= 0 {
        return Ok(0.0);
    }
    while hi - lo > 1 {
        let m = (lo + hi) / 2;
        if g(m) >= 0 {
            hi = m;
        } else {
            lo = m;
        }
    }
    let (g0, g1) = (g(lo) as f64, g(hi) as f64);
    Ok(lo as f64 + (-g0) / (g1 - g0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn cfg(n: usize) -> SimConfig {
        let p = ModelParams::from_lengths(5.0, 5.0, 0.02, 0.05, 1.0).unwrap();
        SimConfig::for_params(&p, n, 1.0, 1.0, 100).unwrap()
    }

    #[test]
    fn frozen_dynamics_only_match() {
        let mut c = cfg(40);
        c.p_diff_latent = 1e-300;
        c.p_diff_revealed = 0.0;
        c.omega = 1e-300;
        let mut s = SimState::empty(&c, 0);
        s.revealed_bid[10] = 5;
        s.revealed_ask[10] = 3;
        s.revealed_ask[20] = 7;
        s.latent_ask[30] = 4;
        let st = s.step(&c, 0.0);
        assert_eq!(st.matched, 3);
        assert_eq!(s.revealed_bid[10], 2);
        assert_eq!(s.revealed_ask[10], 0);
        assert_eq!(s.revealed_ask[20], 7);
        assert_eq!(s.latent_ask[30], 4);
    }

    #[test]
    fn trade_price_examples() {
        let c = cfg(40);
        let mut s = SimState::empty(&c, 0);
        s.revealed_bid[10] = 1;
        s.revealed_ask[20] = 1;
        assert_eq!(s.trade_price(&c).unwrap(), c.bin_price(15.0));
        s.revealed_ask[20] = 0;
        assert!(matches!(s.trade_price(&c), Err(LobError::LiquidityCrisis(_))));
    }

    #[test]
    fn buy_consumption_moves_price_up_weakly() {
        let c = cfg(40);
        let mut s = SimState::empty(&c, 0);
        s.revealed_bid[18] = 3;
        for i in 20..30 {
            s.revealed_ask[i] = 2;
        }
        s.update_mid();
        let mut last = s.trade_price(&c).unwrap();
        for _ in 0..15 {
            assert_eq!(s.execute_market(true, 1), 1);
            s.update_mid();
            let p = s.trade_price(&c).unwrap();
            assert!(p >= last);
            last = p;
        }
        assert!(last > c.bin_price(19.0));
    }

    #[test]
    fn fair_price_examples() {
        let c = cfg(40);
        let mut s = SimState::empty(&c, 0);
        for i in 0..20 {
            s.latent_bid[i] = 3;
            s.latent_ask[39 - i] = 3;
        }
        s.revealed_bid[19] = 2;
        s.revealed_ask[20] = 2;
        s.update_mid();
        let fair = s.fair_price(&c).unwrap();
        assert!(fair.abs() < 1e-12);
        assert_eq!(s.trade_price(&c).unwrap(), 0.0);

        // latent bids far below the price sit below the crossing: no effect
        let mut t = s.clone();
        t.latent_bid[2] += 50;
        assert!((t.fair_price(&c).unwrap() - fair).abs() < 1e-12);
        assert_eq!(t.trade_price(&c).unwrap(), 0.0);

        // latent asks far below the price: cumulative asks grow, fair price drops
        let mut u = s.clone();
        u.latent_ask[2] += 6;
        let f = u.fair_price(&c).unwrap();
        assert!(f < fair - 0.5);
        // oracle by direct cumulative sums at the returned price
        let asks: Vec<u64> = (0..40).map(|i| u.latent_ask[i] + u.revealed_ask[i]).collect();
        let bids: Vec<u64> = (0..40).map(|i| u.latent_bid[i] + u.revealed_bid[i]).collect();
        let e = c.price_to_bin(f) + 0.5;
        let below: f64 = (0..40).map(|i| asks[i] as f64 * (e - i as f64).clamp(0.0, 1.0)).sum();
        let above: f64 = (0..40).map(|i| bids[i] as f64 * (i as f64 + 1.0 - e).clamp(0.0, 1.0)).sum();
        assert!((below - above).abs() < 1e-9);
        assert_eq!(u.trade_price(&c).unwrap(), 0.0);

        let empty = SimState::empty(&c, 0);
        assert!(matches!(empty.fair_price(&c), Err(LobError::DegenerateBook(_))));
    }

    #[test]
    fn wrong_side_reveal_goes_to_best_quote() {
        let mut c = cfg(40);
        c.p_diff_latent = 1e-300;
        c.p_diff_revealed = 0.0;
        c.omega = 1.0 / c.tau;
        // Γ ≈ 1 everywhere: nothing unreveals
        c.k = 1e-12;
        for (mode, deep, best) in [(WrongSideMode::ToBestQuote, 2, 6), (WrongSideMode::InPlace, 0, 8)] {
            c.wrong_side_mode = mode;
            let mut s = SimState::empty(&c, 0);
            s.revealed_bid[5] = 2;
            s.revealed_bid[19] = 10;
            s.revealed_ask[25] = 10;
            s.update_mid();
            // latent asks deep on the bid side reveal with probability ωτ = 1
            s.latent_ask[5] = 4;
            let st = s.step(&c, 0.0);
            assert_eq!(s.revealed_ask[5], 0);
            assert_eq!(st.matched, 4);
            assert_eq!(s.revealed_bid[5], deep);
            assert_eq!(s.revealed_bid[19], best);
        }
    }

    #[test]
    fn balance_is_exact() {
        let c = cfg(200);
        let p = c.params().unwrap();
        let prof = crate::analytic::stationary_dreq(&p, &crate::grid::default_grid(p.k(), p.l_latent_len())).unwrap();
        let mut s = SimState::from_profile(&c, &prof, 3).unwrap();
        let mut total = s.total();
        for t in 0..2000 {
            let st = s.step(&c, if t % 2 == 0 { 0.7 } else { -0.7 });
            let now = s.total();
            assert_eq!(now as i128 - total as i128, st.injected as i128 - 2 * st.matched as i128 - st.executed as i128);
            total = now;
        }
    }

    #[test]
    fn same_seed_same_state() {
        let c = cfg(100);
        let p = c.params().unwrap();
        let prof = crate::analytic::stationary_dreq(&p, &crate::grid::default_grid(p.k(), p.l_latent_len())).unwrap();
        let mut a = SimState::from_profile(&c, &prof, 1).unwrap();
        let mut b = SimState::from_profile(&c, &prof, 1).unwrap();
        let mut d = SimState::from_profile(&c, &prof, 2).unwrap();
        for _ in 0..200 {
            a.step(&c, 0.0);
            b.step(&c, 0.0);
            d.step(&c, 0.0);
        }
        assert_eq!(a.revealed_ask, b.revealed_ask);
        assert_eq!(a.latent_bid, b.latent_bid);
        assert_ne!(a.latent_bid, d.latent_bid);
    }
}
