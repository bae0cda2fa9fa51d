use approx::assert_relative_eq;
use dfrc_core::channel::{cluster_channel, raised_cosine, steering_vector, ArrayKind, ChannelSet, Cluster};
use dfrc_core::config::load_scenario;
use dfrc_core::default_scenario;
use dfrc_core::scalar::{CMat, CVec};
use dfrc_core::scenario::SPEED_OF_LIGHT;
use nalgebra::SVD;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn unimodular(n: usize, rng: &mut ChaCha8Rng) -> CVec<f64> {
    CVec::from_fn(n, |_, _| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
}

fn small() -> dfrc_core::Scenario {
    load_scenario(
        "[scenario]\nn_tx = 3\nn_rx = 2\nn_subcarriers = 3\nirs_element_counts = [3, 2]\nn_doppler_slices = 2\n",
    )
    .unwrap()
}

#[test]
fn steering_vector_basics() {
    let s = default_scenario();
    let sv = steering_vector::<f64>(&s, ArrayKind::Tx, 0.0, 40e6).unwrap();
    assert!(sv.entries.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    let sv = steering_vector::<f64>(&s, ArrayKind::Irs(1), 0.4, 60e6).unwrap();
    assert_eq!(sv.entries.len(), 20);
    assert_eq!(sv.entries[0], Complex64::new(1.0, 0.0));
    assert!(sv.entries.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
    let neg = steering_vector::<f64>(&s, ArrayKind::Rx, -0.4, 60e6).unwrap();
    let pos = steering_vector::<f64>(&s, ArrayKind::Rx, 0.4, 60e6).unwrap();
    for (a, b) in neg.entries.iter().zip(pos.entries.iter()) {
        assert_relative_eq!(a.re, b.re, epsilon = 1e-14);
        assert_relative_eq!(a.im, -b.im, epsilon = 1e-14);
    }
    assert!(steering_vector::<f64>(&s, ArrayKind::Irs(5), 0.0, 0.0).is_err());
}

#[test]
fn half_wavelength_endfire_alternates_sign() {
    // f_c + f_k = c/(2d) at the highest subcarrier.
    let mut s = load_scenario("[scenario]\nn_tx = 2\n").unwrap();
    s.n_tx = 2;
    let fk = s.f_max() - s.carrier_hz;
    assert_relative_eq!(s.carrier_hz + fk, SPEED_OF_LIGHT / (2.0 * s.element_spacing_m()), max_relative = 1e-14);
    let sv = steering_vector::<f64>(&s, ArrayKind::Tx, PI / 2.0, fk).unwrap();
    assert_relative_eq!(sv.entries[1].re, -1.0, epsilon = 1e-12);
    assert_relative_eq!(sv.entries[1].im, 0.0, epsilon = 1e-9);
}

#[test]
fn raised_cosine_values() {
    assert_eq!(raised_cosine(0.0, 0.25, 1.0), 1.0);
    for n in [1.0, 2.0, 3.0, -3.0] {
        assert!(raised_cosine(n, 0.25, 1.0).abs() < 1e-15);
        assert!(raised_cosine(n, 0.7, 1.0).abs() < 1e-15);
    }
    let x: f64 = 1.0 / (2.0 * 0.25);
    let limit = PI / 4.0 * (PI * x).sin() / (PI * x);
    assert_relative_eq!(raised_cosine(2.0, 0.25, 1.0), limit, epsilon = 1e-15);
    // Continuity around the singular point.
    assert_relative_eq!(raised_cosine(2.0 + 1e-6, 0.25, 1.0), limit, epsilon = 1e-6);
}

#[test]
fn single_broadside_cluster_gives_equal_antennas() {
    let s = default_scenario();
    let h = cluster_channel::<f64>(&s, 6, &[Cluster { gain: Complex64::new(1.0, 0.0), delay: 0.0, aod: 0.0 }]);
    for hk in &h {
        // An on-grid delay keeps only the d = 0 tap, whose value is r(0) = 1.
        for z in hk.iter() {
            assert_relative_eq!(z.re, 1.0, epsilon = 1e-12);
            assert!(z.im.abs() < 1e-12);
        }
    }
    // Delay of two taps: a pure linear phase across subcarriers.
    let h = cluster_channel::<f64>(&s, 1, &[Cluster { gain: Complex64::new(1.0, 0.0), delay: 2.0, aod: 0.0 }]);
    for (k, hk) in h.iter().enumerate() {
        let expect = Complex64::from_polar(1.0, -2.0 * PI * (2 * k) as f64 / 32.0);
        assert!((hk[0] - expect).norm() < 1e-12);
    }
}

#[test]
fn channels_are_deterministic() {
    let s = default_scenario();
    let a = ChannelSet::<f64>::synthesize(&s).unwrap();
    let b = ChannelSet::<f64>::synthesize(&s).unwrap();
    assert_eq!(a.comm.h_direct, b.comm.h_direct);
    assert_eq!(a.comm.h_irs, b.comm.h_irs);
    let mut other = s.clone();
    other.rng_seed += 1;
    let c = ChannelSet::<f64>::synthesize(&other).unwrap();
    assert_ne!(a.comm.h_direct, c.comm.h_direct);
}

#[test]
fn dropping_an_irs_keeps_other_links() {
    let s = default_scenario();
    let full = ChannelSet::<f64>::synthesize(&s).unwrap();
    let single = ChannelSet::<f64>::synthesize(&s.with_irs_subset(&[0])).unwrap();
    assert_eq!(full.comm.h_direct, single.comm.h_direct);
    assert_eq!(full.comm.h_irs[0][0], single.comm.h_irs[0][0]);
    let selected = full.select_irs(&[0]);
    assert_eq!(selected.radar.paths[0][3].g, single.radar.paths[0][3].g);
}

fn numerical_rank(m: &CMat<f64>) -> usize {
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|&&x| x > 1e-12 * top).count()
}

#[test]
fn radar_path_matrices_are_rank_one() {
    let ch = ChannelSet::<f64>::synthesize(&small()).unwrap();
    for k in 0..ch.n_subcarriers() {
        assert_eq!(numerical_rank(&ch.radar.a_dir[k]), 1);
        for m in 0..ch.n_irs() {
            let p = &ch.radar.paths[m][k];
            for mat in [&p.e, &p.d, &p.b, &p.g, &p.w] {
                assert_eq!(numerical_rank(mat), 1);
            }
            assert_eq!(p.w, p.w.transpose());
        }
    }
}

#[test]
fn effective_gains_are_phase_only() {
    let s = default_scenario();
    let ch = ChannelSet::<f64>::synthesize(&s).unwrap();
    for p in 0..ch.n_slices {
        for k in 0..ch.n_subcarriers() {
            assert_relative_eq!(ch.radar.gain_direct[p][k].norm(), 1.0, epsilon = 1e-12);
            for m in 0..ch.n_irs() {
                for g in ch.radar.gain_irs[p][k][m] {
                    assert_relative_eq!(g.norm(), 0.3, epsilon = 1e-12);
                }
            }
        }
    }
}

#[test]
fn zero_velocity_has_no_doppler_phase() {
    let mut s = load_scenario("[scenario]\nn_doppler_slices = 1\nvelocity_box = { vx = [-1.0, 0.0], vy = [-1.0, 0.0] }\n").unwrap();
    s.target_position = [0.0, 4500.0];
    let ch = ChannelSet::<f64>::synthesize(&s).unwrap();
    let tau = 2.0 * 4500.0 / SPEED_OF_LIGHT;
    for k in 0..4 {
        let rf = s.carrier_hz + s.subcarrier_hz(k);
        let cycles = rf * tau;
        let expect = Complex64::from_polar(1.0, -2.0 * PI * (cycles - cycles.round()));
        assert!((ch.radar.gain_direct[0][k] - expect).norm() < 1e-9);
    }
}

#[test]
fn direct_channel_at_broadside_is_all_gain() {
    let ch = ChannelSet::<f64>::synthesize(&default_scenario()).unwrap();
    // The default target sits at broadside (θ_t = 0).
    let k = 5;
    let g = ch.radar.gain_direct[0][k];
    let m = &ch.radar.a_dir[k] * g;
    assert!(m.iter().all(|z| (z - g).norm() < 1e-12));
}

#[test]
fn composite_channel_special_cases() {
    let s = small();
    let ch = ChannelSet::<f64>::synthesize(&s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let phi = unimodular(ch.n_phases(), &mut rng);
    let none = ch.select_irs(&[]);
    let h = none.composite_radar_channel(&CVec::zeros(0), 1, 1).unwrap();
    assert_eq!(h, &none.radar.a_dir[1] * none.radar.gain_direct[1][1]);
    let mut zero_gain = s.clone();
    for g in zero_gain.gains.alpha_irs.iter_mut() {
        g.path2 = Complex64::new(0.0, 0.0);
        g.path3 = Complex64::new(0.0, 0.0);
        g.path4 = Complex64::new(0.0, 0.0);
    }
    let chz = ChannelSet::<f64>::synthesize(&zero_gain).unwrap();
    let h = chz.composite_radar_channel(&phi, 2, 0).unwrap();
    assert!((h - &chz.radar.a_dir[2] * chz.radar.gain_direct[0][2]).norm() < 1e-14);
    assert!(ch.composite_radar_channel(&CVec::zeros(2), 0, 0).is_err());
}

#[test]
fn scalar_composite_channel_by_hand() {
    let s = load_scenario(
        "[scenario]\nn_tx = 1\nn_rx = 1\nn_subcarriers = 2\nirs_positions = [[2500.0, 2500.0]]\nirs_element_counts = 1\nn_doppler_slices = 1\n",
    )
    .unwrap();
    let ch = ChannelSet::<f64>::synthesize(&s).unwrap();
    let k = 1;
    let ph = 0.9;
    let phi = CVec::from_element(1, Complex64::from_polar(1.0, ph));
    let p = &ch.radar.paths[0][k];
    let [a2, a3, a4] = ch.radar.gain_irs[0][k][0];
    let e = Complex64::from_polar(1.0, ph);
    let expect = ch.radar.a_dir[k][(0, 0)] * ch.radar.gain_direct[0][k]
        + a2 * p.e[(0, 0)] * p.g[(0, 0)] * e
        + a3 * p.d[(0, 0)] * p.b[(0, 0)] * e
        + a4 * p.d[(0, 0)] * p.w[(0, 0)] * p.g[(0, 0)] * e * e;
    let h = ch.composite_radar_channel(&phi, k, 0).unwrap();
    assert!((h[(0, 0)] - expect).norm() < 1e-14);
}

#[test]
fn composite_channel_is_quadratic_in_a_single_phase() {
    let s = load_scenario(
        "[scenario]\nn_tx = 2\nn_rx = 2\nn_subcarriers = 1\nirs_positions = [[2500.0, 2500.0]]\nirs_element_counts = 1\nn_doppler_slices = 1\n",
    )
    .unwrap();
    let ch = ChannelSet::<f64>::synthesize(&s).unwrap();
    let at = |t: f64| ch.composite_radar_channel(&CVec::from_element(1, Complex64::from_polar(1.0, t)), 0, 0).unwrap();
    // H(z) = A + B z + C z^2 in z = e^{jt}; fit on three phases and predict a fourth.
    let ts = [0.1, 1.3, 2.9];
    let zs: Vec<Complex64> = ts.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
    let hs: Vec<CMat<f64>> = ts.iter().map(|&t| at(t)).collect();
    let t4 = 4.4;
    let z4 = Complex64::from_polar(1.0, t4);
    // Lagrange interpolation in z.
    let mut pred = CMat::<f64>::zeros(2, 2);
    for i in 0..3 {
        let mut l = Complex64::new(1.0, 0.0);
        for j in 0..3 {
            if i != j {
                l *= (z4 - zs[j]) / (zs[i] - zs[j]);
            }
        }
        pred += &hs[i] * l;
    }
    assert!((pred - at(t4)).norm() < 1e-10);
}

#[test]
fn single_element_irs_preserves_path_gain() {
    let s = load_scenario("[scenario]\nirs_positions = [[2500.0, 2500.0]]\nirs_element_counts = 1\n").unwrap();
    let ch = ChannelSet::<f64>::synthesize(&s).unwrap();
    let p = &ch.radar.paths[0][4];
    let base = (&p.e * &p.g).norm();
    for t in [0.0, 1.0, 2.5] {
        let ph = CVec::from_element(1, Complex64::from_polar(1.0, t));
        let egp = &p.e * dfrc_core::channel::scale_rows(&p.g, &ph);
        assert_relative_eq!(egp.norm(), base, max_relative = 1e-12);
    }
}

#[test]
fn clutter_channel_cases() {
    let s = small();
    let ch = ChannelSet::<f64>::synthesize(&s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let phi = unimodular(ch.n_phases(), &mut rng);
    let mut none = s.clone();
    none.clutter_positions.clear();
    let chn = ChannelSet::<f64>::synthesize(&none).unwrap();
    assert!(chn.clutter_channel(&phi, 0).unwrap().iter().all(|z| z.norm() == 0.0));
    let no_irs = ch.select_irs(&[]);
    assert_eq!(no_irs.clutter_channel(&CVec::zeros(0), 2).unwrap(), ch.clutter.a_dir[2]);
    // Symmetric clutter at ±20°: the direct response is a sum of two
    // conjugate steering outer products.
    let k = 1;
    let rf = s.carrier_hz + s.subcarrier_hz(k);
    let th = 20f64.to_radians();
    let a = |n: usize, t: f64| dfrc_core::channel::ula_response::<f64>(n, t, rf, s.element_spacing_m());
    let expect = a(s.n_rx, th) * a(s.n_tx, th).transpose() + a(s.n_rx, -th) * a(s.n_tx, -th).transpose();
    assert!((&ch.clutter.a_dir[k] - expect).norm() < 1e-12);
    for (x, y) in a(s.n_rx, th).iter().zip(a(s.n_rx, -th).iter()) {
        assert!((x - y.conj()).norm() < 1e-14);
    }
}
