#![allow(dead_code)]

use dfrc_core::channel::ChannelSet;
use dfrc_core::metrics::DesignVariables;
use dfrc_core::scalar::{CMat, CVec};
use dfrc_core::{default_scenario, Scenario};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let a: f64 = rng.random_range(-1.0..1.0);
    let b: f64 = rng.random_range(-1.0..1.0);
    Complex64::new(a, b)
}

pub fn random_vec<R: Rng>(n: usize, rng: &mut R) -> CVec<f64> {
    CVec::from_fn(n, |_, _| cn(rng))
}

pub fn random_mat<R: Rng>(r: usize, c: usize, rng: &mut R) -> CMat<f64> {
    CMat::from_fn(r, c, |_, _| cn(rng))
}

pub fn unimodular<R: Rng>(n: usize, rng: &mut R) -> CVec<f64> {
    CVec::from_fn(n, |_, _| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
}

/// Random PSD matrix of the given rank.
pub fn random_psd<R: Rng>(n: usize, rank: usize, rng: &mut R) -> CMat<f64> {
    let a = random_mat(n, rank, rng);
    &a * a.adjoint()
}

/// Small random scenario: K <= 4, N_t <= 3, N_r <= 3, M <= 2, N_m <= 3.
pub fn small_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let base = default_scenario();
    let m = rng.random_range(0..=2usize);
    let keep: Vec<usize> = (0..m).collect();
    let mut s = base.with_irs_subset(&keep);
    s.n_tx = rng.random_range(1..=3);
    s.n_rx = rng.random_range(1..=3);
    s.n_users = rng.random_range(1..=2);
    s.n_subcarriers = rng.random_range(1..=4);
    s.tx_power_per_subcarrier_w = (0..s.n_subcarriers).map(|_| rng.random_range(0.5..2.0)).collect();
    s.irs_element_counts = (0..m).map(|_| rng.random_range(1..=3)).collect();
    s.n_doppler_slices = rng.random_range(1..=3);
    s.rng_seed = rng.random();
    s.validate().expect("random small scenario is valid");
    s
}

pub fn random_vars<R: Rng>(ch: &ChannelSet<f64>, rng: &mut R) -> DesignVariables<f64> {
    DesignVariables {
        beamformers: (0..ch.n_subcarriers()).map(|_| random_mat(ch.n_tx, ch.n_users, rng)).collect(),
        phases: unimodular(ch.n_phases(), rng),
        filters: (0..ch.n_slices).map(|_| random_vec(ch.n_rx, rng)).collect(),
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Composite target channel built from dense diagonal matrices, independent
/// of the library's row-scaling path.
pub fn dense_target_channel(ch: &ChannelSet<f64>, phi: &CVec<f64>, k: usize, p: usize) -> CMat<f64> {
    let mut h = &ch.radar.a_dir[k] * ch.radar.gain_direct[p][k];
    let mut off = 0;
    for m in 0..ch.n_irs() {
        let nm = ch.irs_sizes[m];
        let d = CMat::from_diagonal(&phi.rows(off, nm).into_owned());
        off += nm;
        let pm = &ch.radar.paths[m][k];
        let [a2, a3, a4] = ch.radar.gain_irs[p][k][m];
        h += &pm.e * &d * &pm.g * a2 + &pm.d * &d * &pm.b * a3 + &pm.d * &d * &pm.w * &d * &pm.g * a4;
    }
    h
}

pub fn dense_clutter_channel(ch: &ChannelSet<f64>, phi: &CVec<f64>, k: usize) -> CMat<f64> {
    let mut h = ch.clutter.a_dir[k].clone();
    let [b2, b3, b4] = ch.clutter.beta;
    let mut off = 0;
    for m in 0..ch.n_irs() {
        let nm = ch.irs_sizes[m];
        let d = CMat::from_diagonal(&phi.rows(off, nm).into_owned());
        off += nm;
        let pm = &ch.radar.paths[m][k];
        h += &ch.clutter.e[m][k] * &d * &pm.g * b2
            + &pm.d * &d * &ch.clutter.b[m][k] * b3
            + &pm.d * &d * &ch.clutter.w[m][k] * &d * &pm.g * b4;
    }
    h
}

/// Radar numerator and clutter power of slice `p`, summed over subcarriers.
pub fn dense_radar_powers(ch: &ChannelSet<f64>, v: &DesignVariables<f64>, p: usize) -> (f64, f64) {
    let w = &v.filters[p];
    let mut num = 0.0;
    let mut clu = 0.0;
    for k in 0..ch.n_subcarriers() {
        num += (w.adjoint() * dense_target_channel(ch, &v.phases, k, p) * &v.beamformers[k]).norm_squared();
        clu += (w.adjoint() * dense_clutter_channel(ch, &v.phases, k) * &v.beamformers[k]).norm_squared();
    }
    (num, clu)
}

/// Desired and interference power of user `u` from the per-IRS links.
pub fn dense_comm_powers(ch: &ChannelSet<f64>, v: &DesignVariables<f64>, u: usize) -> (f64, f64) {
    let mut des = 0.0;
    let mut mui = 0.0;
    for k in 0..ch.n_subcarriers() {
        let mut z = ch.comm.h_direct[u][k].transpose();
        let mut off = 0;
        for m in 0..ch.n_irs() {
            let nm = ch.irs_sizes[m];
            let d = CMat::from_diagonal(&v.phases.rows(off, nm).into_owned());
            off += nm;
            z += ch.comm.h_irs[u][m][k].transpose() * d * &ch.radar.paths[m][k].g;
        }
        let y = z * &v.beamformers[k];
        for i in 0..ch.n_users {
            if i == u {
                des += y[i].norm_sqr();
            } else {
                mui += y[i].norm_sqr();
            }
        }
    }
    (des, mui)
}
