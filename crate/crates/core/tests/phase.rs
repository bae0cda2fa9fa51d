mod common;

use common::*;
use dfrc_core::channel::ChannelSet;
use dfrc_core::metrics::{self, lift_phase_forms, DesignVariables, PhaseForms};
use dfrc_core::phase::{
    cadmm_solve, comm_constraint_linearize, modulus_error, retract, riemannian_project, rsd_solve, worst_case_weights,
    PhaseBlock, PhaseOptions, PhaseSubproblem,
};
use dfrc_core::scalar::CVec;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small random instance with at least one IRS.
fn irs_instance(rng: &mut ChaCha8Rng) -> (ChannelSet<f64>, DesignVariables<f64>) {
    loop {
        let s = small_scenario(rng);
        if s.n_irs() == 0 {
            continue;
        }
        let ch = ChannelSet::<f64>::synthesize(&s).unwrap();
        let v = random_vars(&ch, rng);
        return (ch, v);
    }
}

fn random_subproblem(
    block: PhaseBlock,
    ch: &ChannelSet<f64>,
    v: &DesignVariables<f64>,
    rng: &mut ChaCha8Rng,
) -> (PhaseForms<f64>, PhaseSubproblem<f64>) {
    let n = ch.n_phases();
    let psi = unimodular(n, rng);
    let phi = unimodular(n, rng);
    let forms = lift_phase_forms(ch, &v.beamformers, &v.filters, &psi, &phi).unwrap();
    let comm = (ch.n_users > 0).then(|| comm_constraint_linearize(&forms, &phi, rng.random_range(0.1..2.0)));
    let (anchor, other) = match block {
        PhaseBlock::Phi => (phi, psi),
        PhaseBlock::Psi => (psi, phi),
    };
    let sub = PhaseSubproblem::new(
        block,
        &forms,
        rng.random_range(0.0..2.0),
        rng.random_range(0.1..2.0),
        random_vec(n, rng),
        (0..ch.n_users).map(|_| rng.random_range(0.0..1.0)).collect(),
        comm,
        anchor,
        other,
    );
    (forms, sub)
}

#[test]
fn euclidean_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let h = 1e-6;
    for trial in 0..50 {
        let (ch, v) = irs_instance(&mut rng);
        let block = if trial % 2 == 0 { PhaseBlock::Phi } else { PhaseBlock::Psi };
        let (_, sub) = random_subproblem(block, &ch, &v, &mut rng);
        let x = unimodular(ch.n_phases(), &mut rng);
        let omega = worst_case_weights(&sub.slice_values(&x));
        let g = sub.euclidean_gradient(&x, &omega);
        let mut err = 0.0;
        let mut norm = 0.0;
        for i in 0..x.len() {
            for (dir, analytic) in [(Complex64::new(1.0, 0.0), g[i].re), (Complex64::new(0.0, 1.0), g[i].im)] {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += dir * h;
                xm[i] -= dir * h;
                let fd = (sub.weighted_objective(&xp, &omega) - sub.weighted_objective(&xm, &omega)) / (2.0 * h);
                err += (fd - analytic).powi(2);
                norm += analytic.powi(2);
            }
        }
        let rel = (err / norm.max(1e-300)).sqrt();
        assert!(rel <= 1e-5, "trial {trial}: relative error {rel}");
    }
}

#[test]
fn riemannian_gradient_is_tangent() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for trial in 0..50 {
        let (ch, v) = irs_instance(&mut rng);
        let block = if trial % 2 == 0 { PhaseBlock::Phi } else { PhaseBlock::Psi };
        let (_, sub) = random_subproblem(block, &ch, &v, &mut rng);
        let x = unimodular(ch.n_phases(), &mut rng);
        let omega = worst_case_weights(&sub.slice_values(&x));
        let rg = riemannian_project(&sub.euclidean_gradient(&x, &omega), &x);
        for i in 0..x.len() {
            assert!((rg[i] * x[i].conj()).re.abs() <= 1e-12);
        }
    }
}

#[test]
fn retraction_lands_on_the_circle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..200 {
        let n = rng.random_range(1..40);
        let phi = unimodular(n, &mut rng);
        let g = random_vec(n, &mut rng);
        let alpha = 10f64.powf(rng.random_range(-8.0..4.0));
        let next = retract(&phi, &g, alpha);
        assert!(modulus_error(&next) <= 1e-15);
    }
    // An element whose update vanishes keeps its value.
    let phi = CVec::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, 0.3)]);
    let g = CVec::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
    let next = retract(&phi, &g, 1.0);
    assert_eq!(next[0], phi[0]);
    assert_eq!(next[1], phi[1]);
}

#[test]
fn phase_minorant_is_tight_and_below_the_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..200 {
        let (ch, v) = irs_instance(&mut rng);
        let n = ch.n_phases();
        let psi = unimodular(n, &mut rng);
        let phi = unimodular(n, &mut rng);
        let forms = lift_phase_forms(&ch, &v.beamformers, &v.filters, &psi, &phi).unwrap();
        let sub = PhaseSubproblem::new(
            PhaseBlock::Phi,
            &forms,
            0.0,
            0.0,
            CVec::zeros(n),
            vec![],
            None,
            phi.clone(),
            psi.clone(),
        );
        // With λ = 0 each slice value is minus the minorant.
        for p in 0..ch.n_slices {
            let t = &forms.slices[p].target_phi;
            let scale = t.value(&phi).abs().max(1.0);
            assert!((t.value(&phi) + sub.slice_values(&phi)[p]).abs() <= 1e-12 * scale);
            for _ in 0..10 {
                let x = random_vec(n, &mut rng);
                let slack = t.value(&x) + sub.slice_values(&x)[p];
                assert!(slack >= -1e-10 * scale.max(t.value(&x)));
            }
        }
    }
}

#[test]
fn comm_linearization_is_tight_and_conservative_on_the_circle() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut checked = 0;
    while checked < 50 {
        let (ch, v) = irs_instance(&mut rng);
        if ch.n_users == 0 {
            continue;
        }
        let n = ch.n_phases();
        let phi_t = unimodular(n, &mut rng);
        let forms = lift_phase_forms(&ch, &v.beamformers, &v.filters, &phi_t, &phi_t).unwrap();
        let xi = rng.random_range(0.1..5.0);
        let lin = comm_constraint_linearize(&forms, &phi_t, xi);
        let exact = |u: usize, x: &CVec<f64>| {
            let f = &forms.users[u];
            xi * (f.interference.value(x) + forms.comm_noise) - f.desired.value(x)
        };
        let res_t = lin.residuals(&phi_t);
        for u in 0..ch.n_users {
            let scale = exact(u, &phi_t).abs().max(forms.comm_noise);
            assert!((res_t[u] - exact(u, &phi_t)).abs() <= 1e-9 * scale);
        }
        for _ in 0..50 {
            let x = unimodular(n, &mut rng);
            let res = lin.residuals(&x);
            for u in 0..ch.n_users {
                let scale = exact(u, &x).abs().max(forms.comm_noise);
                assert!(res[u] >= exact(u, &x) - 1e-9 * scale);
            }
        }
        checked += 1;
    }
}

#[test]
fn comm_linearization_without_irs_reduces_to_the_constant_test() {
    let s = dfrc_core::load_scenario("[scenario]\nirs_positions = []\nn_subcarriers = 2\n").unwrap();
    let ch = ChannelSet::<f64>::synthesize(&s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let v = random_vars(&ch, &mut rng);
    let empty = CVec::zeros(0);
    let forms = lift_phase_forms(&ch, &v.beamformers, &v.filters, &empty, &empty).unwrap();
    let lin = comm_constraint_linearize(&forms, &empty, 2.0);
    for u in 0..ch.n_users {
        let f = &forms.users[u];
        let expect = f.desired.constant - 2.0 * (f.interference.constant + forms.comm_noise);
        assert!((lin.d[u] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        assert_eq!(lin.r[u].len(), 0);
    }
}

#[test]
fn worst_case_weights_split_ties() {
    assert_eq!(worst_case_weights(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.0]);
    assert_eq!(worst_case_weights(&[3.0, 1.0, 3.0]), vec![0.5, 0.0, 0.5]);
}

#[test]
fn rsd_descends_and_stays_unimodular() {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let opts = PhaseOptions::default();
    for trial in 0..30 {
        let (ch, v) = irs_instance(&mut rng);
        let block = if trial % 2 == 0 { PhaseBlock::Phi } else { PhaseBlock::Psi };
        let (_, sub) = random_subproblem(block, &ch, &v, &mut rng);
        let entry = sub.anchor.clone();
        let out = rsd_solve(&sub, &entry, f64::INFINITY, &opts, 1.0);
        assert_eq!(out.objective_trace.len(), out.iterations + 1);
        for w in out.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(modulus_error(&out.x) <= 1e-15);
    }
}

#[test]
fn rsd_stops_once_the_entry_ratio_is_reached() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let opts = PhaseOptions::default();
    let (ch, v) = irs_instance(&mut rng);
    let (_, sub) = random_subproblem(PhaseBlock::Phi, &ch, &v, &mut rng);
    let entry = sub.anchor.clone();
    // Any ratio clears a threshold of zero, so one step is taken at most.
    let out = rsd_solve(&sub, &entry, 0.0, &opts, 1.0);
    assert!(out.iterations <= 1);
}

#[test]
fn cadmm_never_returns_a_worse_feasible_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(48);
    let opts = PhaseOptions::default();
    for trial in 0..10 {
        let (mut ch, v) = irs_instance(&mut rng);
        let comm_enabled = trial % 2 == 1 && ch.n_users > 0;
        if comm_enabled {
            // Keep the entry point feasible.
            let worst = metrics::comm_sinrs(&v, &ch).into_iter().fold(f64::INFINITY, f64::min);
            ch.comm_sinr_threshold = 0.5 * worst;
        }
        let (entry_sinr, _) = metrics::min_radar_sinr(&v, &ch).unwrap();
        let out = cadmm_solve(&ch, &v, comm_enabled, &opts, 1.0).unwrap();
        assert!(modulus_error(&out.phi) <= 1e-15);
        assert!(out.min_sinr >= entry_sinr);
        let mut w = v.clone();
        w.phases = out.phi.clone();
        let (sinr, _) = metrics::min_radar_sinr(&w, &ch).unwrap();
        assert!(rel_err(sinr, out.min_sinr) < 1e-12);
        if comm_enabled {
            for s in metrics::comm_sinrs(&w, &ch) {
                assert!(s >= ch.comm_sinr_threshold);
            }
        }
        assert!(out.trace.len() <= opts.max_admm_iter);
    }
}
