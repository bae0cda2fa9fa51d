use approx::assert_relative_eq;
use dfrc_core::config::{document_to_toml, parse_document, scenario_to_toml, Document, RawScenario};
use dfrc_core::scalar::to_db;
use dfrc_core::scenario::{DopplerModel, SPEED_OF_LIGHT};
use dfrc_core::{default_scenario, load_scenario, Error};
use proptest::prelude::*;

#[test]
fn empty_document_gives_defaults() {
    let s = load_scenario("").unwrap();
    assert_eq!((s.n_tx, s.n_rx, s.n_users), (6, 4, 2));
    assert_eq!(s.n_subcarriers, 32);
    assert_eq!(s.carrier_hz, 10e9);
    assert_eq!(s.subcarrier_step_hz, 20e6);
    assert_eq!(s.n_irs(), 2);
    assert_eq!(s.irs_element_counts, vec![20, 20]);
    assert_eq!(s.n_doppler_slices, 5);
    assert_relative_eq!(to_db(s.comm_sinr_threshold), 10.0, epsilon = 1e-12);
    assert_relative_eq!(to_db(s.radar_noise_var), 5.0, epsilon = 1e-12);
    assert_relative_eq!(to_db(s.comm_noise_var), -5.0, epsilon = 1e-12);
    for p in &s.tx_power_per_subcarrier_w {
        assert_relative_eq!(to_db(*p), 1.0, epsilon = 1e-12);
    }
    assert_eq!(s, default_scenario());
}

#[test]
fn derived_quantities() {
    let s = default_scenario();
    assert_eq!(s.ofdm_symbol_s() * s.subcarrier_step_hz, 1.0);
    let f_max = 10e9 + 31.0 * 20e6;
    assert_relative_eq!(s.element_spacing_m(), SPEED_OF_LIGHT / (2.0 * f_max), max_relative = 1e-15);
}

#[test]
fn degenerate_narrowband_without_irs_is_valid() {
    let s = load_scenario("[scenario]\nn_subcarriers = 1\nirs_positions = []\n").unwrap();
    assert_eq!(s.n_subcarriers, 1);
    assert_eq!(s.n_irs(), 0);
    assert_eq!(s.tx_power_per_subcarrier_w.len(), 1);
}

#[test]
fn inconsistent_symbol_duration_is_rejected() {
    let err = load_scenario("[scenario]\nsubcarrier_step_hz = 10e6\nofdm_symbol_s = 5e-8\n").unwrap_err();
    match err {
        Error::Invalid { field, .. } => assert_eq!(field, "ofdm_symbol_s"),
        other => panic!("unexpected {other:?}"),
    }
    // The consistent value is accepted.
    load_scenario("[scenario]\nsubcarrier_step_hz = 10e6\nofdm_symbol_s = 1e-7\n").unwrap();
}

#[test]
fn invalid_values_name_their_field() {
    let cases = [
        ("[scenario]\nn_tx = 0\n", "n_tx"),
        ("[scenario]\nradar_noise_var = -1.0\n", "radar_noise_var"),
        ("[scenario]\ncomm_sinr_threshold_db = 10.0\ncomm_sinr_threshold = 10.0\n", "comm_sinr_threshold"),
        ("[scenario]\nirs_element_counts = [20]\n", "irs_element_counts"),
        ("[scenario]\nn_subcarriers = 4\ntx_power_w = [1.0, 1.0]\n", "tx_power_per_subcarrier_w"),
    ];
    for (text, field) in cases {
        match load_scenario(text) {
            Err(Error::Invalid { field: f, .. }) => assert_eq!(f, field, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn unknown_keys_are_parse_errors() {
    assert!(matches!(load_scenario("[scenario]\nn_antennas = 3\n"), Err(Error::Parse(_))));
    assert!(load_scenario("[scenario]\nn_antennas = 3\n").unwrap_err().is_config());
}

#[test]
fn velocity_grid_rules() {
    let s = default_scenario();
    let g = s.velocity_grid();
    let vx: Vec<f64> = g.iter().map(|p| p[0]).collect();
    assert_eq!(vx, vec![180.0, 260.0, 340.0, 420.0, 500.0]);
    for w in g.windows(2) {
        assert!(w[1][0] > w[0][0] && w[1][1] > w[0][1]);
    }
    let one = load_scenario("[scenario]\nn_doppler_slices = 1\n").unwrap();
    assert_eq!(one.velocity_grid(), vec![[500.0, 50.0]]);
    let two = load_scenario("[scenario]\nn_doppler_slices = 2\nvelocity_box = { vx = [0.0, 2.0], vy = [0.0, 2.0] }\n").unwrap();
    assert_eq!(two.velocity_grid(), vec![[1.0, 1.0], [2.0, 2.0]]);
}

#[test]
fn propagation_delays_follow_distances() {
    let s = default_scenario();
    let d = s.propagation_delays();
    assert_relative_eq!(d.tau_dt, 5000.0 / 3e8, max_relative = 1e-15);
    assert_relative_eq!(d.tau_dim[0], 2500.0 * 2f64.sqrt() / 3e8, max_relative = 1e-15);
    let mut swapped = s.clone();
    swapped.target_position = s.dfbs_position;
    swapped.dfbs_position = s.target_position;
    assert_eq!(swapped.propagation_delays().tau_dt, d.tau_dt);
    let mut same = s.clone();
    same.target_position = s.dfbs_position;
    assert_eq!(same.propagation_delays().tau_dt, 0.0);
}

#[test]
fn doppler_values_as_printed() {
    let s = default_scenario();
    let z = s.doppler_frequencies([0.0, 0.0]).unwrap();
    assert_eq!(z.f_direct, 0.0);
    assert!(z.f_path2.iter().chain(&z.f_path3).chain(&z.f_path4).all(|&f| f == 0.0));
    let d = s.doppler_frequencies([100.0, 10.0]).unwrap();
    assert_relative_eq!(d.f_direct, 1e10 / 3e8 * 2.0 * 10.0, max_relative = 1e-12);
    assert_eq!(d.f_path2, d.f_path3);
    let mut colocated = s.clone();
    colocated.target_position = s.dfbs_position;
    assert!(matches!(
        colocated.doppler_frequencies([1.0, 1.0]),
        Err(Error::DegenerateGeometry(_))
    ));
}

#[test]
fn corrected_doppler_uses_target_line_for_path_four() {
    let mut s = default_scenario();
    s.doppler_model = DopplerModel::Corrected;
    let v = [120.0, -30.0];
    let d = s.doppler_frequencies(v).unwrap();
    let pi = s.irs_positions[0];
    let (dx, dy) = (s.target_position[0] - pi[0], s.target_position[1] - pi[1]);
    let n = dx.hypot(dy);
    let expect = 1e10 / 3e8 * 2.0 * (v[0] * dx + v[1] * dy) / n;
    assert_relative_eq!(d.f_path4[0], expect, max_relative = 1e-12);
}

proptest! {
    #[test]
    fn doppler_is_linear_in_velocity(vx in -500.0f64..500.0, vy in -500.0f64..500.0) {
        let s = default_scenario();
        let a = s.doppler_frequencies([vx, vy]).unwrap();
        let b = s.doppler_frequencies([2.0 * vx, 2.0 * vy]).unwrap();
        let close = |x: f64, y: f64| (2.0 * x - y).abs() <= 1e-9 * (1.0 + y.abs());
        prop_assert!(close(a.f_direct, b.f_direct));
        for m in 0..s.n_irs() {
            prop_assert!(close(a.f_path2[m], b.f_path2[m]));
            prop_assert!(close(a.f_path3[m], b.f_path3[m]));
            prop_assert!(close(a.f_path4[m], b.f_path4[m]));
        }
    }

    #[test]
    fn scenario_round_trips(k in 1usize..40, nt in 1usize..9, seed in any::<u64>(), p_db in -10.0f64..10.0, xi in 0.0f64..20.0) {
        let text = format!("[scenario]\nn_subcarriers = {k}\nn_tx = {nt}\nrng_seed = {seed}\ntx_power_dbw = {p_db}\ncomm_sinr_threshold_db = {xi}\n");
        let s = load_scenario(&text).unwrap();
        let again = load_scenario(&scenario_to_toml(&s)).unwrap();
        prop_assert_eq!(s, again);
    }
}

#[test]
fn full_document_round_trips() {
    let mut doc = Document::default();
    doc.scenario = RawScenario::from_scenario(&default_scenario());
    doc.solver.max_outer = 7;
    doc.solver.variant = "single-irs+narrowband".parse().unwrap();
    let text = document_to_toml(&doc);
    let back = parse_document(&text).unwrap();
    assert_eq!(back.solver, doc.solver);
    assert_eq!(back.scenario.resolve().unwrap(), default_scenario());
    assert!(text.contains("n_subcarriers = 32"));
    assert!(text.contains("carrier_hz = 10000000000.0"));
}
