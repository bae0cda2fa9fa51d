//! IRS phase block: consensus ADMM over the split `φ = ψ` with a Dinkelbach
//! parameter, an inner approximation of the communications constraints, and
//! Riemannian steepest descent on the complex circle manifold for both
//! halves of the split.

use crate::channel::ChannelSet;
use crate::error::Result;
use crate::metrics::{self, lift_phase_forms, DesignVariables, PhaseForms, QuadForm};
use crate::scalar::{abs2, modulus, norm2, CMat, CVec, Real, C};
use nalgebra::linalg::SymmetricEigen;
use serde::{Deserialize, Serialize};

/// Initial trial step of each RSD iteration (before Armijo halving).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StepRule {
    /// Absolute step `α`, multiplied by `decay^n` at outer iteration `n`.
    Fixed { alpha: f64 },
    /// Step chosen so that the largest element rotates by at most
    /// `radians · decay^n`.
    MaxRotation { radians: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseOptions {
    pub rho: f64,
    pub rho_w: f64,
    /// `ζ_2 = tol_per_element · ΣN_m`.
    pub tol_per_element: f64,
    pub max_admm_iter: usize,
    pub max_rsd_iter: usize,
    pub max_halvings: usize,
    pub step: StepRule,
    pub schedule: StepSchedule,
    /// Multiplier applied to the trial step by the schedule.
    pub step_decay: f64,
    /// Adaptive schedule only: extra phase-block attempts per outer
    /// iteration, each at `step_decay` times the previous scale.
    pub max_backtracks: usize,
}

/// How the trial step evolves across outer iterations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `step_decay^(n-1)` at outer iteration `n`.
    Geometric,
    /// Retries a rejected phase block at a smaller scale within the same
    /// outer iteration; the next iteration starts one `step_decay` above
    /// the accepted scale (capped at 1).
    Adaptive,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        PhaseOptions {
            rho: 1.0,
            rho_w: 1.0,
            tol_per_element: 1e-3,
            max_admm_iter: 20,
            max_rsd_iter: 100,
            max_halvings: 20,
            step: StepRule::MaxRotation {
                radians: std::f64::consts::PI / 8.0,
            },
            schedule: StepSchedule::Adaptive,
            step_decay: 0.5,
            max_backtracks: 4,
        }
    }
}

/// Affine inner approximation `2 Re(r_u^H φ) <= d_u` of each user's SINR
/// constraint around `φ_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct CommLinearization<T: Real> {
    pub r: Vec<CVec<T>>,
    pub d: Vec<T>,
}

impl<T: Real> CommLinearization<T> {
    /// `c_u(φ) = 2 Re(r_u^H φ) - d_u`.
    pub fn residuals(&self, phi: &CVec<T>) -> Vec<T> {
        self.r
            .iter()
            .zip(&self.d)
            .map(|(r, d)| T::lit(2.0) * r.dotc(phi).re - *d)
            .collect()
    }
}

fn max_eigenvalue<T: Real>(m: &CMat<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    let h = (m + m.adjoint()) * C::new(T::lit(0.5), T::zero());
    SymmetricEigen::new(h).eigenvalues.max()
}

pub fn comm_constraint_linearize<T: Real>(
    forms: &PhaseForms<T>,
    phi_t: &CVec<T>,
    xi: T,
) -> CommLinearization<T> {
    let n = T::lit(phi_t.len() as f64);
    let two = T::lit(2.0);
    let mut r = Vec::with_capacity(forms.users.len());
    let mut d = Vec::with_capacity(forms.users.len());
    for uf in &forms.users {
        let (q, qb) = (&uf.desired, &uf.interference);
        let eta = max_eigenvalue(&qb.mat);
        let qbar_phi = &qb.mat * phi_t;
        let q_phi = &q.mat * phi_t;
        let xi_c = C::new(xi, T::zero());
        let ru = (&qbar_phi - phi_t * C::new(eta, T::zero())) * xi_c + &qb.vec * xi_c - &q.vec - &q_phi;
        let du = q.constant
            - phi_t.dotc(&q_phi).re
            - xi * (qb.constant + forms.comm_noise + two * eta * n - phi_t.dotc(&qbar_phi).re);
        r.push(ru);
        d.push(du);
    }
    CommLinearization { r, d }
}

/// Simplex weights attaining `max_p values_p`: all mass on the maximizer,
/// spread uniformly over exact ties.
pub fn worst_case_weights<T: Real>(values: &[T]) -> Vec<T> {
    let best = values.iter().fold(T::min_value().unwrap(), |a, &b| a.max(b));
    let ties = values.iter().filter(|&&v| v == best).count();
    let share = T::one() / T::lit(ties as f64);
    values
        .iter()
        .map(|&v| if v == best { share } else { T::zero() })
        .collect()
}

/// Projection onto the tangent space of the circle manifold at `phi`.
pub fn riemannian_project<T: Real>(g: &CVec<T>, phi: &CVec<T>) -> CVec<T> {
    CVec::from_fn(g.len(), |i, _| {
        let radial = (g[i] * phi[i].conj()).re;
        g[i] - phi[i] * C::new(radial, T::zero())
    })
}

/// Elementwise normalization of `phi - α grad`; an element whose update
/// vanishes keeps its old value.
pub fn retract<T: Real>(phi: &CVec<T>, grad: &CVec<T>, alpha: T) -> CVec<T> {
    CVec::from_fn(phi.len(), |i, _| {
        let z = phi[i] - grad[i] * C::new(alpha, T::zero());
        let m = modulus(z);
        if m > T::zero() {
            z / C::new(m, T::zero())
        } else {
            phi[i]
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseBlock {
    Phi,
    Psi,
}

/// One manifold subproblem of the split: minimize the first-order minorant
/// surrogate of the worst-slice Dinkelbach objective plus the consensus
/// penalty (and, for `φ`, the communications multiplier term).
#[derive(Clone, Debug)]
pub struct PhaseSubproblem<T: Real> {
    pub block: PhaseBlock,
    /// Per-slice target forms in the block variable.
    pub target: Vec<QuadForm<T>>,
    /// Per-slice clutter-plus-noise forms in the block variable.
    pub clutter: Vec<QuadForm<T>>,
    pub lambda: T,
    pub rho: T,
    pub dual_u: CVec<T>,
    pub dual_w: Vec<T>,
    pub comm: Option<CommLinearization<T>>,
    /// Linearization point of the target forms.
    pub anchor: CVec<T>,
    /// The fixed half of the split (`ψ` for the `φ` block and vice versa).
    pub other: CVec<T>,
}

impl<T: Real> PhaseSubproblem<T> {
    pub fn new(
        block: PhaseBlock,
        forms: &PhaseForms<T>,
        lambda: T,
        rho: T,
        dual_u: CVec<T>,
        dual_w: Vec<T>,
        comm: Option<CommLinearization<T>>,
        anchor: CVec<T>,
        other: CVec<T>,
    ) -> Self {
        let (target, clutter) = match block {
            PhaseBlock::Phi => (
                forms.slices.iter().map(|s| s.target_phi.clone()).collect(),
                forms.slices.iter().map(|s| s.clutter_phi.clone()).collect(),
            ),
            PhaseBlock::Psi => (
                forms.slices.iter().map(|s| s.target_psi.clone()).collect(),
                forms.slices.iter().map(|s| s.clutter_psi.clone()).collect(),
            ),
        };
        PhaseSubproblem {
            block,
            target,
            clutter,
            lambda,
            rho,
            dual_u,
            dual_w,
            comm: if block == PhaseBlock::Phi { comm } else { None },
            anchor,
            other,
        }
    }

    /// `2Re(x^H(U x_n + u)) - x_n^H U x_n + u°`, a minorant of the target form.
    fn target_minorant(&self, p: usize, x: &CVec<T>) -> T {
        let f = &self.target[p];
        let ua = &f.mat * &self.anchor;
        T::lit(2.0) * x.dotc(&(&ua + &f.vec)).re - self.anchor.dotc(&ua).re + f.constant
    }

    /// `λ g_p(x) - f̂_p(x)` per slice.
    pub fn slice_values(&self, x: &CVec<T>) -> Vec<T> {
        (0..self.target.len())
            .map(|p| self.lambda * self.clutter[p].value(x) - self.target_minorant(p, x))
            .collect()
    }

    /// Consensus residual `x - ψ + u` (φ block) or `x - φ - u` (ψ block).
    fn consensus(&self, x: &CVec<T>) -> CVec<T> {
        match self.block {
            PhaseBlock::Phi => x - &self.other + &self.dual_u,
            PhaseBlock::Psi => x - &self.other - &self.dual_u,
        }
    }

    fn penalty(&self, x: &CVec<T>) -> T {
        let mut v = self.rho * T::lit(0.5) * norm2(&self.consensus(x));
        if let Some(c) = &self.comm {
            for (w, r) in self.dual_w.iter().zip(c.residuals(x)) {
                v += *w * r;
            }
        }
        v
    }

    /// Objective at fixed slice weights (smooth in `x`).
    pub fn weighted_objective(&self, x: &CVec<T>, omega: &[T]) -> T {
        let vals = self.slice_values(x);
        omega.iter().zip(&vals).fold(T::zero(), |a, (w, v)| a + *w * *v) + self.penalty(x)
    }

    /// Objective with the inner maximization over the simplex.
    pub fn objective(&self, x: &CVec<T>) -> T {
        let vals = self.slice_values(x);
        vals.iter().fold(T::min_value().unwrap(), |a, &b| a.max(b)) + self.penalty(x)
    }

    /// Euclidean gradient of [`Self::weighted_objective`].
    pub fn euclidean_gradient(&self, x: &CVec<T>, omega: &[T]) -> CVec<T> {
        let two = T::lit(2.0);
        let mut g = CVec::<T>::zeros(x.len());
        for (p, &w) in omega.iter().enumerate() {
            if w == T::zero() {
                continue;
            }
            let gc = &self.clutter[p];
            let ft = &self.target[p];
            let term = (&gc.mat * x + &gc.vec) * C::new(two * self.lambda, T::zero())
                - (&ft.mat * &self.anchor + &ft.vec) * C::new(two, T::zero());
            g += term * C::new(w, T::zero());
        }
        g += self.consensus(x) * C::new(self.rho, T::zero());
        if let Some(c) = &self.comm {
            for (w, r) in self.dual_w.iter().zip(&c.r) {
                g += r * C::new(two * *w, T::zero());
            }
        }
        g
    }

    /// True Dinkelbach ratio `min_p f̄_p / ḡ_p` in the block variable.
    pub fn ratio(&self, x: &CVec<T>) -> T {
        (0..self.target.len())
            .map(|p| self.target[p].value(x) / self.clutter[p].value(x))
            .fold(T::max_value().unwrap(), |a, b| a.min(b))
    }
}

#[derive(Clone, Debug)]
pub struct RsdOutcome<T: Real> {
    pub x: CVec<T>,
    pub iterations: usize,
    /// Surrogate objective after each accepted step (entry value first).
    pub objective_trace: Vec<f64>,
    pub ratio: T,
}

/// Riemannian steepest descent with Armijo halving; stops once the true
/// ratio reaches `lambda_entry` or after `max_rsd_iter` steps.
pub fn rsd_solve<T: Real>(
    sub: &PhaseSubproblem<T>,
    entry: &CVec<T>,
    lambda_entry: T,
    opts: &PhaseOptions,
    step_scale: f64,
) -> RsdOutcome<T> {
    let mut x = entry.clone();
    let mut obj = sub.objective(&x);
    let mut trace = vec![obj.as_f64()];
    let mut iterations = 0;
    let mut ratio = sub.ratio(&x);
    for _ in 0..opts.max_rsd_iter {
        let omega = worst_case_weights(&sub.slice_values(&x));
        let g = sub.euclidean_gradient(&x, &omega);
        let rg = riemannian_project(&g, &x);
        let gmax = rg.iter().fold(T::zero(), |a, z| a.max(modulus(*z)));
        if gmax == T::zero() {
            break;
        }
        let mut alpha = match opts.step {
            StepRule::Fixed { alpha } => T::lit(alpha * step_scale),
            StepRule::MaxRotation { radians } => T::lit(radians * step_scale) / gmax,
        };
        let mut moved = false;
        for _ in 0..=opts.max_halvings {
            let cand = retract(&x, &rg, alpha);
            let val = sub.objective(&cand);
            if val <= obj {
                moved = cand != x;
                x = cand;
                obj = val;
                break;
            }
            alpha *= T::lit(0.5);
        }
        if !moved {
            break;
        }
        iterations += 1;
        trace.push(obj.as_f64());
        ratio = sub.ratio(&x);
        if ratio >= lambda_entry {
            break;
        }
    }
    RsdOutcome {
        x,
        iterations,
        objective_trace: trace,
        ratio,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CadmmStep {
    pub iter: usize,
    pub lambda: f64,
    pub consensus_residual: f64,
    pub min_sinr_db: f64,
    pub min_comm_margin_db: f64,
    pub rsd_phi_iters: usize,
    pub rsd_psi_iters: usize,
}

#[derive(Clone, Debug)]
pub struct CadmmOutcome<T: Real> {
    pub phi: CVec<T>,
    pub min_sinr: T,
    pub trace: Vec<CadmmStep>,
    pub consensus_residual: T,
}

/// True min-SINR of a phase candidate and whether every user clears `ξ`.
fn evaluate_candidate<T: Real>(
    ch: &ChannelSet<T>,
    vars: &DesignVariables<T>,
    phi: &CVec<T>,
    comm_enabled: bool,
) -> Result<(T, T, bool)> {
    let mut v = vars.clone();
    v.phases = phi.clone();
    let (min_sinr, _) = metrics::min_radar_sinr(&v, ch)?;
    if !comm_enabled || ch.n_users == 0 {
        return Ok((min_sinr, T::max_value().unwrap(), true));
    }
    let margin = metrics::comm_sinrs(&v, ch)
        .into_iter()
        .map(|s| s / ch.comm_sinr_threshold)
        .fold(T::max_value().unwrap(), |a, b| a.min(b));
    Ok((min_sinr, margin, margin >= T::one()))
}

/// Consensus ADMM over `φ = ψ` starting from `vars.phases`. Returns the best
/// communications-feasible iterate by the true min-SINR (the entry point is
/// always a candidate).
pub fn cadmm_solve<T: Real>(
    ch: &ChannelSet<T>,
    vars: &DesignVariables<T>,
    comm_enabled: bool,
    opts: &PhaseOptions,
    step_scale: f64,
) -> Result<CadmmOutcome<T>> {
    let n = ch.n_phases();
    let entry = vars.phases.clone();
    let (entry_sinr, _, entry_ok) = evaluate_candidate(ch, vars, &entry, comm_enabled)?;
    let mut best = (entry.clone(), entry_sinr, entry_ok);
    let mut trace = Vec::new();
    if n == 0 {
        return Ok(CadmmOutcome {
            phi: entry,
            min_sinr: entry_sinr,
            trace,
            consensus_residual: T::zero(),
        });
    }
    let xi = ch.comm_sinr_threshold;
    let rho = T::lit(opts.rho);
    let rho_w = T::lit(opts.rho_w);
    let zeta2 = T::lit(opts.tol_per_element * n as f64);
    let mut phi = entry.clone();
    let mut psi = entry.clone();
    let mut dual_u = CVec::<T>::zeros(n);
    let mut dual_w = vec![T::zero(); ch.n_users];
    let mut residual = T::zero();
    for iter in 1..=opts.max_admm_iter {
        // φ half: ψ fixed inside the forms.
        let forms = lift_phase_forms(ch, &vars.beamformers, &vars.filters, &psi, &phi)?;
        let lambda = (0..forms.slices.len())
            .map(|p| {
                let s = &forms.slices[p];
                s.target_phi.value(&phi) / s.clutter_phi.value(&phi)
            })
            .fold(T::max_value().unwrap(), |a, b| a.min(b));
        let comm = comm_enabled.then(|| comm_constraint_linearize(&forms, &phi, xi));
        let sub_phi = PhaseSubproblem::new(
            PhaseBlock::Phi,
            &forms,
            lambda,
            rho,
            dual_u.clone(),
            dual_w.clone(),
            comm.clone(),
            phi.clone(),
            psi.clone(),
        );
        let out_phi = rsd_solve(&sub_phi, &phi, lambda, opts, step_scale);
        let phi_new = out_phi.x;

        // ψ half: φ fixed inside the forms.
        let forms_psi = lift_phase_forms(ch, &vars.beamformers, &vars.filters, &psi, &phi_new)?;
        let lambda_psi = (0..forms_psi.slices.len())
            .map(|p| {
                let s = &forms_psi.slices[p];
                s.target_psi.value(&psi) / s.clutter_psi.value(&psi)
            })
            .fold(T::max_value().unwrap(), |a, b| a.min(b));
        let sub_psi = PhaseSubproblem::new(
            PhaseBlock::Psi,
            &forms_psi,
            lambda_psi,
            rho,
            dual_u.clone(),
            dual_w.clone(),
            None,
            psi.clone(),
            phi_new.clone(),
        );
        let out_psi = rsd_solve(&sub_psi, &psi, lambda_psi, opts, step_scale);
        let psi_new = out_psi.x;

        // Scaled dual ascent.
        let diff = &phi_new - &psi_new;
        dual_u += &diff;
        if let Some(c) = &comm {
            for (w, r) in dual_w.iter_mut().zip(c.residuals(&phi_new)) {
                *w = (*w + rho_w * r).max(T::zero());
            }
        }
        residual = norm2(&diff).sqrt();
        let step = norm2(&(&phi_new - &phi));
        phi = phi_new;
        psi = psi_new;

        let mut iter_best = T::min_value().unwrap();
        let mut iter_margin = T::min_value().unwrap();
        for cand in [&phi, &psi] {
            let (s, margin, ok) = evaluate_candidate(ch, vars, cand, comm_enabled)?;
            iter_best = iter_best.max(s);
            iter_margin = iter_margin.max(margin);
            if ok && (!best.2 || s > best.1) {
                best = (cand.clone(), s, true);
            }
        }
        trace.push(CadmmStep {
            iter,
            lambda: lambda.as_f64(),
            consensus_residual: residual.as_f64(),
            min_sinr_db: crate::scalar::to_db(iter_best.as_f64()),
            min_comm_margin_db: if comm_enabled {
                crate::scalar::to_db(iter_margin.as_f64())
            } else {
                f64::INFINITY
            },
            rsd_phi_iters: out_phi.iterations,
            rsd_psi_iters: out_psi.iterations,
        });
        if step <= zeta2 {
            break;
        }
    }
    Ok(CadmmOutcome {
        phi: best.0,
        min_sinr: best.1,
        trace,
        consensus_residual: residual,
    })
}

/// `max_i ||φ_i| - 1|`.
pub fn modulus_error<T: Real>(phi: &CVec<T>) -> T {
    phi.iter()
        .fold(T::zero(), |a, z| a.max((abs2(*z).sqrt() - T::one()).abs()))
}
