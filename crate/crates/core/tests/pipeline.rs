use latent_lob::analytic::stationary_dreq;
use latent_lob::bvp::{solve_stationary, stationary_profile, BvpConfig};
use latent_lob::exec::Execution;
use latent_lob::impact::{fit_impact_exponent, run_metaorder, MetaorderSpec};
use latent_lob::sim::{run_ensemble, SimConfig};
use latent_lob::{BookProfile, ModelParams, Provenance};

fn lattice(ratio: f64, steps: u64) -> (SimConfig, BookProfile) {
    let p = ModelParams::new(0.5, 0.5 * ratio * ratio, 0.5 / 49.0, 0.05, 10.0).unwrap();
    let mut cfg = SimConfig::for_params(&p, 400, 1.0, 1.0, steps).unwrap();
    cfg.seed = 17;
    cfg.burn_in_steps = Some(3000);
    (cfg, stationary_profile(&p, &BvpConfig::default()).unwrap())
}

#[test]
fn solver_profile_survives_a_csv_round_trip() {
    let p = ModelParams::dimensionless(0.35, 0.35).unwrap();
    let s = solve_stationary(&p, &BvpConfig::default()).unwrap();
    let mut buf = Vec::new();
    s.profile.write_csv(&mut buf).unwrap();
    let back = BookProfile::read_csv(&buf[..], p, Provenance::Bvp).unwrap();
    assert_eq!(back, s.profile);
    let exact = stationary_dreq(&p, &back.grid).unwrap();
    assert!(back.relative_deviation(&exact).unwrap() < 1e-4);
}

#[test]
fn simulated_book_stays_near_the_stationary_one() {
    let (cfg, init) = lattice(0.32, 13_000);
    let e = run_ensemble(&cfg, &init, 2, Execution::default()).unwrap();
    assert!(e.runs.iter().all(|r| r.conservation_ok && r.overflow_step.is_none()));
    let av = e.profile.unwrap();
    let mut worst = 0.0f64;
    for (i, &xi) in av.profile.grid.iter().enumerate().take_while(|(_, x)| **x < 100.0) {
        let (_, _, phi) = init.sample(xi);
        worst = worst.max((av.profile.phi_revealed[i] - phi).abs());
    }
    let scale = init.phi_revealed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst / scale < 0.1, "{}", worst / scale);
}

#[test]
fn buy_and_sell_metaorders_mirror_each_other() {
    let (cfg, init) = lattice(1.0, 1);
    let run = |rate: f64| {
        run_metaorder(&cfg, &init, &MetaorderSpec { rate, duration: 150.0 }, 6, Execution::default()).unwrap()
    };
    let (buy, sell) = (run(30.0), run(-30.0));
    assert!(!buy.crisis && !sell.crisis);
    let n = buy.len().min(sell.len());
    let last = n - 1;
    let gap = (buy.price_mean[last] + sell.price_mean[last]).abs();
    let err = 3.0 * (buy.price_stderr[last].powi(2) + sell.price_stderr[last].powi(2)).sqrt() + 1.0;
    assert!(gap < err, "{} vs {}", buy.price_mean[last], sell.price_mean[last]);
    assert!(buy.price_mean[last] > 0.0);
    let e = fit_impact_exponent(&buy, 0.1 * buy.q[last], buy.q[last]).unwrap();
    assert!(e > 0.2 && e < 1.2, "{e}");
}
