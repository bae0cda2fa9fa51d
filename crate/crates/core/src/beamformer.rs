//! Transmit beamformer block: Dinkelbach iterations on the linearized
//! max-min radar SINR, each step an epigraph QCQP solved by the
//! interior-point method in [`crate::qcqp`].

use crate::error::{Error, Result};
use crate::metrics::BeamformerForms;
use crate::qcqp::{IpmOptions, Qcqp, QcqpConstraint};
use crate::scalar::{to_db, CMat, CVec, Real, C};
use nalgebra::linalg::SymmetricEigen;
use serde::Serialize;

/// Affine functional `x ↦ 2 Re(w^H x) + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMinorant<T: Real> {
    pub w: CVec<T>,
    pub c: T,
}

impl<T: Real> AffineMinorant<T> {
    pub fn value(&self, x: &CVec<T>) -> T {
        T::lit(2.0) * self.w.dotc(x).re + self.c
    }
}

/// First-order minorant of `x^H H x` at `x_anchor`, tight at the anchor.
pub fn linearize_quadratic<T: Real>(h: &CMat<T>, x_anchor: &CVec<T>) -> Result<AffineMinorant<T>> {
    if h.nrows() != h.ncols() || h.nrows() != x_anchor.len() {
        return Err(Error::Dimension("matrix and anchor sizes disagree".into()));
    }
    let herm = (h + h.adjoint()) * C::new(T::lit(0.5), T::zero());
    let eig = SymmetricEigen::new(herm);
    let min_eig = eig.eigenvalues.min();
    let scale = eig.eigenvalues.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    if min_eig < -T::lit(1e-8) * scale {
        return Err(Error::NotPsd {
            min_eig: min_eig.as_f64(),
            scale: scale.as_f64(),
        });
    }
    let w = h * x_anchor;
    let c = -x_anchor.dotc(&w).re;
    Ok(AffineMinorant { w, c })
}

#[derive(Clone, Debug)]
pub struct BeamformerSubproblem<T: Real> {
    /// Current outer iterate `f^(n)`.
    pub anchor: CVec<T>,
    pub forms: BeamformerForms<T>,
    pub power_budget: Vec<T>,
    pub comm_threshold: T,
    /// False for radar-only designs.
    pub comm_enabled: bool,
    pub tol: T,
    pub max_iter: usize,
    pub ipm: IpmOptions,
}

#[derive(Clone, Debug)]
pub struct ConvexQcqpSolution<T: Real> {
    pub f_star: CVec<T>,
    /// Optimal epigraph value `min_p (linearized numerator - λ denominator)`.
    pub t_star: T,
    pub kkt_residual: T,
    /// Indices (radar slices first, then subcarriers, then users) of
    /// constraints that are active at the solution.
    pub active_set: Vec<usize>,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DinkelbachStep {
    pub iter: usize,
    pub lambda: f64,
    pub f_lambda: f64,
    pub min_sinr_db: f64,
}

#[derive(Clone, Debug)]
pub struct DinkelbachOutcome<T: Real> {
    pub f: CVec<T>,
    pub trace: Vec<DinkelbachStep>,
    pub converged: bool,
}

impl<T: Real> BeamformerSubproblem<T> {
    fn n_slices(&self) -> usize {
        self.forms.n_slices()
    }

    /// Linearized numerator `2Re(f0^H Ξ_t f) - f0^H Ξ_t f0` of slice `p`.
    pub fn linearized_numerator(&self, p: usize, f: &CVec<T>) -> T {
        let b = self.forms.target_apply(p, &self.anchor);
        T::lit(2.0) * b.dotc(f).re - self.anchor.dotc(&b).re
    }

    pub fn denominator(&self, p: usize, f: &CVec<T>) -> T {
        self.forms.clutter_power(p, f) + self.forms.radar_noise[p]
    }

    /// `min_p` of the linearized ratio, lowest index on ties.
    pub fn linearized_ratio(&self, f: &CVec<T>) -> T {
        (0..self.n_slices())
            .map(|p| self.linearized_numerator(p, f) / self.denominator(p, f))
            .fold(T::max_value().unwrap(), |a, b| a.min(b))
    }

    /// `min_p (N̂_p(f) - λ D_p(f))`.
    pub fn parametric_value(&self, f: &CVec<T>, lambda: T) -> T {
        (0..self.n_slices())
            .map(|p| self.linearized_numerator(p, f) - lambda * self.denominator(p, f))
            .fold(T::max_value().unwrap(), |a, b| a.min(b))
    }

    /// Linearized communications constraint value (`<= 0` is feasible).
    pub fn comm_constraint(&self, u: usize, f: &CVec<T>) -> T {
        let rf0 = self.forms.comm_desired_apply(u, &self.anchor);
        self.comm_threshold * (self.forms.comm_interference(u, f) + self.forms.comm_noise)
            - T::lit(2.0) * rf0.dotc(f).re
            + self.anchor.dotc(&rf0).re
    }

    fn block_count(&self) -> usize {
        self.forms.n_subcarriers() * self.forms.n_users
    }

    fn power_constraints(&self) -> Vec<QcqpConstraint<T>> {
        let u_count = self.forms.n_users;
        let nt = self.forms.n_tx;
        self.power_budget
            .iter()
            .enumerate()
            .map(|(k, &pk)| QcqpConstraint {
                blocks: (0..u_count).map(|u| (k * u_count + u, CMat::identity(nt, nt))).collect(),
                lin: None,
                constant: -pk,
                kappa: T::zero(),
            })
            .collect()
    }

    fn comm_constraints(&self, kappa: T) -> Vec<QcqpConstraint<T>> {
        let forms = &self.forms;
        let xi = self.comm_threshold;
        (0..forms.n_users)
            .map(|u| {
                let mut blocks = Vec::new();
                for (k, v) in forms.comm[u].iter().enumerate() {
                    let vv = v * v.adjoint() * C::new(xi, T::zero());
                    for i in (0..forms.n_users).filter(|&i| i != u) {
                        blocks.push((forms.block_index(k, i), vv.clone()));
                    }
                }
                let rf0 = forms.comm_desired_apply(u, &self.anchor);
                QcqpConstraint {
                    blocks,
                    constant: xi * forms.comm_noise + self.anchor.dotc(&rf0).re,
                    lin: Some(-rf0),
                    kappa,
                }
            })
            .collect()
    }

    fn build_qcqp(&self, lambda: T) -> Qcqp<T> {
        let forms = &self.forms;
        let u_count = forms.n_users;
        let mut constraints = Vec::new();
        for p in 0..self.n_slices() {
            let b = forms.target_apply(p, &self.anchor);
            let mut blocks = Vec::new();
            if lambda > T::zero() {
                for (k, c) in forms.clutter[p].iter().enumerate() {
                    let cc = c * c.adjoint() * C::new(lambda, T::zero());
                    for u in 0..u_count {
                        blocks.push((forms.block_index(k, u), cc.clone()));
                    }
                }
            }
            constraints.push(QcqpConstraint {
                blocks,
                constant: self.anchor.dotc(&b).re + lambda * forms.radar_noise[p],
                lin: Some(-b),
                kappa: T::one(),
            });
        }
        constraints.extend(self.power_constraints());
        if self.comm_enabled {
            constraints.extend(self.comm_constraints(T::zero()));
        }
        Qcqp {
            block_size: forms.n_tx,
            n_blocks: self.block_count(),
            constraints,
            sigma: -T::one(),
        }
    }

    /// Solves `max_{f,t} t` subject to the slice epigraph constraints
    /// `N̂_p(f) - λ D_p(f) >= t`, the power budgets and the linearized
    /// communications constraints.
    pub fn inner_qcqp(&self, lambda: T) -> Result<ConvexQcqpSolution<T>> {
        let qp = self.build_qcqp(lambda);
        let p_count = self.n_slices();
        let k_count = self.power_budget.len();
        let res = match qp.solve_epigraph(&self.anchor, &self.ipm)? {
            Ok(r) => r,
            Err(i) if i >= p_count + k_count => {
                return Err(Error::CommInfeasible {
                    user: i - p_count - k_count,
                })
            }
            Err(i) => return Err(Error::Solver(format!("constraint {i} has no strictly feasible point"))),
        };
        let tol = T::lit(1e-6);
        let active_set = res
            .values
            .iter()
            .enumerate()
            .filter(|(i, v)| {
                let mag = qp.constraints[*i].constant.abs().max(T::one());
                **v > -tol * mag
            })
            .map(|(i, _)| i)
            .collect();
        Ok(ConvexQcqpSolution {
            t_star: res.tau,
            kkt_residual: res.kkt_residual(),
            active_set,
            iterations: res.iterations,
            f_star: res.x,
        })
    }

    /// Generalized Dinkelbach iterations on the linearized problem.
    pub fn dinkelbach_solve(&self) -> Result<DinkelbachOutcome<T>> {
        let mut lambda = self.linearized_ratio(&self.anchor);
        let mut f = self.anchor.clone();
        let mut trace = Vec::new();
        let mut converged = false;
        for iter in 1..=self.max_iter {
            let sol = self.inner_qcqp(lambda.max(T::zero()))?;
            let f_lambda = self.parametric_value(&sol.f_star, lambda);
            let next = self.linearized_ratio(&sol.f_star);
            // The inner optimum can never be worse than the current point.
            if next >= self.linearized_ratio(&f) {
                f = sol.f_star;
            }
            let min_true = (0..self.n_slices())
                .map(|p| self.forms.radar_sinr(p, &f))
                .fold(T::max_value().unwrap(), |a, b| a.min(b));
            trace.push(DinkelbachStep {
                iter,
                lambda: lambda.as_f64(),
                f_lambda: f_lambda.as_f64(),
                min_sinr_db: to_db(min_true.as_f64()),
            });
            if next > lambda {
                lambda = next;
            }
            if f_lambda <= self.tol {
                converged = true;
                break;
            }
        }
        Ok(DinkelbachOutcome { f, trace, converged })
    }
}

/// Signal-to-leakage-plus-noise beamformer: per subcarrier and user, the
/// principal generalized eigenvector of (desired, leakage + noise/P), with
/// the budget split evenly across users.
pub fn slnr_beamformer<T: Real>(forms: &BeamformerForms<T>, power_budget: &[T]) -> Result<CVec<T>> {
    let nt = forms.n_tx;
    let u_count = forms.n_users;
    let k_count = forms.n_subcarriers();
    let mut f = CVec::<T>::zeros(k_count * u_count * nt);
    for (k, &pk) in power_budget.iter().enumerate() {
        let share = pk / T::lit(u_count as f64);
        let load = forms.comm_noise / (T::lit(k_count as f64) * pk);
        for u in 0..u_count {
            let v = &forms.comm[u][k];
            let desired = v * v.adjoint();
            let mut leak = CMat::<T>::identity(nt, nt) * C::new(load, T::zero());
            for i in (0..u_count).filter(|&i| i != u) {
                let vi = &forms.comm[i][k];
                leak += vi * vi.adjoint();
            }
            let sol = crate::filterbank::solve_filter(&crate::filterbank::CovariancePair {
                target_cov: desired,
                loaded_clutter_cov: leak,
            })?;
            let w = &sol.w * C::new((share / crate::scalar::norm2(&sol.w)).sqrt(), T::zero());
            f.rows_mut(forms.block_index(k, u) * nt, nt).copy_from(&w);
        }
    }
    Ok(f)
}

/// Convex-concave feasibility phase for the communications constraints:
/// repeatedly minimizes the largest normalized linearized violation around
/// the current point until every user's true SINR clears the threshold.
pub fn comm_feasibility_phase<T: Real>(
    forms: &BeamformerForms<T>,
    start: &CVec<T>,
    power_budget: &[T],
    comm_threshold: T,
    max_iter: usize,
    ipm: &IpmOptions,
) -> Result<CVec<T>> {
    let u_count = forms.n_users;
    let feasible = |f: &CVec<T>| (0..u_count).all(|u| forms.comm_sinr(u, f) >= comm_threshold);
    let mut f = start.clone();
    if feasible(&f) {
        return Ok(f);
    }
    let worst = |f: &CVec<T>| {
        (0..u_count)
            .map(|u| forms.comm_sinr(u, f))
            .fold(T::max_value().unwrap(), |a, b| a.min(b))
    };
    if let Ok(g) = slnr_beamformer(forms, power_budget) {
        if feasible(&g) {
            return Ok(g);
        }
        if worst(&g) > worst(&f) {
            f = g;
        }
    }
    let xi_db = to_db(comm_threshold.as_f64());
    let mut last = T::max_value().unwrap();
    for _ in 0..max_iter {
        // Pull strictly inside the power ball.
        f *= C::new(T::lit(1.0 - 1e-6), T::zero());
        let sub = BeamformerSubproblem {
            anchor: f.clone(),
            forms: forms.clone(),
            power_budget: power_budget.to_vec(),
            comm_threshold,
            comm_enabled: true,
            tol: T::lit(1e-4),
            max_iter: 1,
            ipm: *ipm,
        };
        let mut constraints = sub.power_constraints();
        let comm = sub.comm_constraints(T::zero());
        for (u, mut c) in comm.into_iter().enumerate() {
            let mag = (comm_threshold * forms.comm_noise + forms.comm_desired(u, &f)).max(T::lit(1e-300));
            let s = T::one() / mag;
            c = QcqpConstraint {
                blocks: c.blocks.into_iter().map(|(b, q)| (b, q * C::new(s, T::zero()))).collect(),
                lin: c.lin.map(|a| a * C::new(s, T::zero())),
                constant: c.constant * s,
                kappa: -T::one(),
            };
            constraints.push(c);
        }
        let qp = Qcqp {
            block_size: forms.n_tx,
            n_blocks: sub.block_count(),
            constraints,
            sigma: T::one(),
        };
        let worst = qp
            .values(&f, T::zero())
            .iter()
            .skip(power_budget.len())
            .fold(T::min_value().unwrap(), |a, &b| a.max(b));
        let tau0 = worst + T::lit(0.1) * worst.abs().max(T::lit(1e-3));
        let res = qp.solve_from(&f, tau0, ipm, Some(T::lit(-1e-3)))?;
        f = res.x;
        if feasible(&f) {
            return Ok(f);
        }
        if res.tau >= T::zero() && last - res.tau <= T::lit(1e-9) {
            return Err(Error::InitInfeasible { xi_db });
        }
        last = res.tau;
    }
    if feasible(&f) {
        Ok(f)
    } else {
        Err(Error::InitInfeasible { xi_db })
    }
}
