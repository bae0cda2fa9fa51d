mod common;

use common::*;
use dfrc_core::ao::{initialize, optimize_channels, Termination};
use dfrc_core::channel::ChannelSet;
use dfrc_core::phase::modulus_error;
use dfrc_core::scalar::to_db;
use dfrc_core::{load_scenario, optimize, SolverOptions, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn radar_only_single_subcarrier_reaches_the_matched_filter_bound() {
    let s = load_scenario(
        "[scenario]\nirs_positions = []\nirs_element_counts = []\nclutter_positions = []\nn_subcarriers = 1\nn_rx = 1\n",
    )
    .unwrap();
    let ch = ChannelSet::<f64>::synthesize(&s).unwrap();
    let opts = SolverOptions::default().with_variant("non-irs-radar-only".parse().unwrap());
    let r = optimize::<f64>(&s, &opts).unwrap();
    for (p, &got_db) in r.final_metrics.radar_sinr_db.iter().enumerate() {
        let gain = ch.radar.gain_direct[p][0].norm_sqr();
        let bound = ch.power[0] * gain * s.n_tx as f64 / ch.radar_noise_var;
        let got = 10f64.powf(got_db / 10.0);
        assert!(rel_err(got, bound) <= 0.01, "slice {p}: {got} vs {bound}");
    }
}

fn small_run(seed: u64, variant: &str) -> (ChannelSet<f64>, dfrc_core::SolveReport64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = loop {
        let s = small_scenario(&mut rng);
        if s.n_irs() > 0 {
            break s;
        }
    };
    s.comm_sinr_threshold = 1.0;
    let ch = ChannelSet::<f64>::synthesize(&s).unwrap();
    let mut opts = SolverOptions::default().with_variant(variant.parse().unwrap());
    opts.max_outer = 8;
    let r = optimize_channels(&ch, 7, &opts).unwrap();
    (ch, r)
}

#[test]
fn trace_is_nondecreasing_and_design_is_feasible() {
    for seed in 0..6 {
        let (ch, r) = small_run(seed, "multi-irs");
        for w in r.trace_db().windows(2) {
            assert!(w[1] >= w[0], "trace decreased: {:?}", r.trace_db());
        }
        for (k, &p) in r.final_metrics.power_w.iter().enumerate() {
            assert!(p <= ch.power[k] * (1.0 + 1e-8));
        }
        for &c in &r.final_metrics.comm_sinr_db {
            assert!(c >= to_db(ch.comm_sinr_threshold) - 0.05, "comm SINR {c} dB");
        }
        assert!(modulus_error(&r.variables.phases) <= 1e-15);
        assert!(r.iterations.len() <= 8);
        if r.termination == Termination::Converged {
            assert!(r.iterations.last().unwrap().relative_step <= SolverOptions::default().outer_tol);
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let (_, a) = small_run(3, "single-irs");
    let (_, b) = small_run(3, "single-irs");
    assert_eq!(a.trace_db(), b.trace_db());
    assert_eq!(a.final_variables, b.final_variables);
}

#[test]
fn random_phase_variant_keeps_its_phases() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = loop {
        let s = small_scenario(&mut rng);
        if s.n_irs() > 0 {
            break s;
        }
    };
    let ch = ChannelSet::<f64>::synthesize(&s).unwrap();
    let opts = SolverOptions::default().with_variant("multi-irs+random-phase".parse().unwrap());
    let r = optimize_channels(&ch, 5, &opts).unwrap();
    assert_eq!(r.variables.phases, initialize(&ch, 5).phases);
    assert!(r.iterations.iter().all(|it| !it.accepted.phases));
}

#[test]
fn narrowband_replicates_one_beamformer() {
    let (_, r) = small_run(2, "multi-irs+narrowband");
    let first = &r.variables.beamformers[0];
    assert!(r.variables.beamformers.iter().all(|f| f == first));
}

#[test]
fn initialization_spends_the_budget_on_the_circle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let s = small_scenario(&mut rng);
        let ch = ChannelSet::<f64>::synthesize(&s).unwrap();
        let v = initialize(&ch, 9);
        for (k, f) in v.beamformers.iter().enumerate() {
            assert!(rel_err(f.norm_squared(), ch.power[k]) <= 1e-12);
        }
        assert!(modulus_error(&v.phases) <= 1e-15);
        for w in &v.filters {
            assert!((w.norm() - 1.0).abs() <= 1e-12);
        }
        assert_eq!(v.phases, initialize(&ch, 9).phases);
    }
}

#[test]
fn variant_names_round_trip() {
    for name in [
        "multi-irs",
        "single-irs",
        "non-irs-dfrc",
        "non-irs-radar-only",
        "multi-irs+random-phase",
        "single-irs+narrowband",
        "multi-irs+radar-only",
    ] {
        let v: Variant = name.parse().unwrap();
        assert_eq!(v.to_string(), name);
    }
    assert!("non-irs-dfrc+random-phase".parse::<Variant>().is_err());
    assert!("multi-irs+single-irs".parse::<Variant>().is_err());
    assert!("bogus".parse::<Variant>().is_err());
}
