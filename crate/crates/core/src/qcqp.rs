//! Barrier interior-point solver for convex QCQPs in a complex vector
//! `x` and one real epigraph scalar `τ`:
//!
//! ```text
//! minimize    σ τ
//! subject to  x^H Q_i x + 2 Re(a_i^H x) + c_i + κ_i τ <= 0
//! ```
//!
//! Every `Q_i` is Hermitian PSD and block diagonal over equal-size blocks of
//! `x`. Every Newton system is the sum of a block-diagonal Hessian and one
//! real rank-one term per constraint, so it is solved with per-block
//! Cholesky factors and a Woodbury correction of size `m × m`; `τ` is
//! eliminated by a bordered Schur complement.

use crate::error::{Error, Result};
use crate::scalar::{norm2, CMat, CVec, Real, C};
use nalgebra::linalg::Cholesky;
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct QcqpConstraint<T: Real> {
    /// Nonzero Hessian blocks `(block index, Q_b)`.
    pub blocks: Vec<(usize, CMat<T>)>,
    /// Linear coefficient `a_i` (full length), or `None` for zero.
    pub lin: Option<CVec<T>>,
    pub constant: T,
    pub kappa: T,
}

impl<T: Real> QcqpConstraint<T> {
    /// Value without the `κ τ` term, and the gradient `2(Q x + a)`.
    fn eval(&self, x: &CVec<T>, bs: usize) -> (T, CVec<T>) {
        let mut grad = CVec::<T>::zeros(x.len());
        let mut val = self.constant;
        for (b, q) in &self.blocks {
            let xb = x.rows(b * bs, bs);
            let qx = q * xb;
            val += xb.dotc(&qx).re;
            grad.rows_mut(b * bs, bs).copy_from(&qx);
        }
        if let Some(a) = &self.lin {
            val += T::lit(2.0) * a.dotc(x).re;
            grad += a;
        }
        grad *= C::new(T::lit(2.0), T::zero());
        (val, grad)
    }

    fn value(&self, x: &CVec<T>, bs: usize) -> T {
        let mut val = self.constant;
        for (b, q) in &self.blocks {
            let xb = x.rows(b * bs, bs);
            val += xb.dotc(&(q * xb)).re;
        }
        if let Some(a) = &self.lin {
            val += T::lit(2.0) * a.dotc(x).re;
        }
        val
    }

    fn scaled(&self, s: T) -> Self {
        let cs = C::new(s, T::zero());
        QcqpConstraint {
            blocks: self.blocks.iter().map(|(b, q)| (*b, q * cs)).collect(),
            lin: self.lin.as_ref().map(|a| a * cs),
            constant: self.constant * s,
            kappa: self.kappa * s,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Qcqp<T: Real> {
    pub block_size: usize,
    pub n_blocks: usize,
    pub constraints: Vec<QcqpConstraint<T>>,
    /// Objective coefficient of `τ` (minimized).
    pub sigma: T,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IpmOptions {
    /// Target duality gap `m / t`, relative to `max(1, |σ τ|)`.
    pub tol: f64,
    /// Total Newton steps over all centering rounds.
    pub max_iter: usize,
    /// Barrier parameter growth factor.
    pub mu: f64,
    /// Armijo fraction and backtracking factor of the line search.
    pub alpha: f64,
    pub beta: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            tol: 1e-8,
            max_iter: 300,
            mu: 10.0,
            alpha: 0.01,
            beta: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QcqpResult<T: Real> {
    pub x: CVec<T>,
    pub tau: T,
    /// Constraint values (original scaling, including `κ τ`).
    pub values: Vec<T>,
    /// Dual variables (for the original scaling).
    pub lambda: Vec<T>,
    /// Duality gap bound `m / t`, relative to `max(1, |σ τ|)`.
    pub gap: T,
    /// Stationarity residual of the barrier problem, relative to the size
    /// of its terms.
    pub dual_residual: T,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Real> QcqpResult<T> {
    pub fn kkt_residual(&self) -> T {
        self.gap.max(self.dual_residual)
    }
}

impl<T: Real> Qcqp<T> {
    pub fn dim(&self) -> usize {
        self.block_size * self.n_blocks
    }

    /// All constraint values at `(x, τ)`.
    pub fn values(&self, x: &CVec<T>, tau: T) -> Vec<T> {
        self.constraints
            .iter()
            .map(|c| c.value(x, self.block_size) + c.kappa * tau)
            .collect()
    }

    fn check(&self, x: &CVec<T>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "QCQP variable has length {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        for c in &self.constraints {
            if c.blocks.iter().any(|(b, q)| *b >= self.n_blocks || q.shape() != (self.block_size, self.block_size))
                || c.lin.as_ref().is_some_and(|a| a.len() != self.dim())
            {
                return Err(Error::Dimension("QCQP constraint shape mismatch".into()));
            }
        }
        Ok(())
    }

    /// Barrier path following from a strictly feasible `(x0, τ0)`: damped
    /// Newton centering of `t σ τ - Σ log(-g_i)` with `t ← μ t` until the
    /// duality gap `m / t` meets the tolerance. With `stop_below = Some(v)`
    /// the run ends as soon as `τ < v`.
    pub fn solve_from(
        &self,
        x0: &CVec<T>,
        tau0: T,
        opts: &IpmOptions,
        stop_below: Option<T>,
    ) -> Result<QcqpResult<T>> {
        self.check(x0)?;
        let bs = self.block_size;
        let m = self.constraints.len();
        // Normalize each constraint by its magnitude at the start.
        let scales: Vec<T> = self
            .constraints
            .iter()
            .map(|c| {
                let mut mag = c.constant.abs() + (c.kappa * tau0).abs();
                for (b, q) in &c.blocks {
                    let xb = x0.rows(b * bs, bs);
                    mag += xb.dotc(&(q * xb)).re.abs() + q.norm() * T::lit(1e-3);
                }
                if let Some(a) = &c.lin {
                    mag += T::lit(2.0) * crate::scalar::modulus(a.dotc(x0));
                }
                if mag > T::zero() {
                    T::one() / mag
                } else {
                    T::one()
                }
            })
            .collect();
        let cons: Vec<QcqpConstraint<T>> = self
            .constraints
            .iter()
            .zip(&scales)
            .map(|(c, &s)| c.scaled(s))
            .collect();
        let values_only = |x: &CVec<T>, tau: T| -> Vec<T> {
            cons.iter().map(|c| c.value(x, bs) + c.kappa * tau).collect()
        };
        let barrier = |x: &CVec<T>, tau: T, t: T| -> Option<T> {
            let mut acc = t * self.sigma * tau;
            for v in values_only(x, tau) {
                if !(v < T::zero()) {
                    return None;
                }
                acc -= (-v).ln();
            }
            Some(acc)
        };

        let mut x = x0.clone();
        let mut tau = tau0;
        if let Some(i) = values_only(&x, tau).iter().position(|&g| !(g < T::zero())) {
            return Err(Error::Solver(format!(
                "interior-point start is not strictly feasible (constraint {i})"
            )));
        }
        let tol = T::lit(opts.tol);
        let mu = T::lit(opts.mu);
        let two = T::lit(2.0);
        let mf = T::lit(m.max(1) as f64);
        let obj_scale = |tau: T| T::one().max((self.sigma * tau).abs());
        let mut t = mf / obj_scale(tau);
        let mut iterations = 0;
        let mut converged = false;
        let mut dual_res = T::zero();
        let mut pd_gap = T::zero();
        let mut lambda_est = vec![T::zero(); m];

        'outer: loop {
            // Centering at the current t.
            let mut prev_dec = T::max_value().unwrap();
            loop {
                if iterations >= opts.max_iter {
                    break 'outer;
                }
                iterations += 1;
                let mut g = Vec::with_capacity(m);
                let mut grads = Vec::with_capacity(m);
                for c in &cons {
                    let (v, gr) = c.eval(&x, bs);
                    g.push(v + c.kappa * tau);
                    grads.push(gr);
                }
                let inv: Vec<T> = g.iter().map(|&gi| T::one() / (-gi)).collect();
                let grad_x = grads
                    .iter()
                    .zip(&inv)
                    .fold(CVec::<T>::zeros(x.len()), |acc, (gr, &d)| acc + gr * C::new(d, T::zero()));
                let grad_t = t * self.sigma + cons.iter().zip(&inv).fold(T::zero(), |a, (c, d)| a + c.kappa * *d);

                // Hessian: block-diagonal Σ 2Q_i/(-g_i) plus rank one terms
                // (γ_i, κ_i)(γ_i, κ_i)^T / g_i^2.
                let mut dblocks: Vec<CMat<T>> = vec![CMat::zeros(bs, bs); self.n_blocks];
                for (c, &d) in cons.iter().zip(&inv) {
                    for (b, q) in &c.blocks {
                        dblocks[*b] += q * C::new(two * d, T::zero());
                    }
                }
                let dfac = factor_blocks(&dblocks)?;
                let dsolve = |r: &CVec<T>| -> CVec<T> {
                    let mut out = r.clone();
                    for (b, f) in dfac.iter().enumerate() {
                        let rb = out.rows(b * bs, bs).into_owned();
                        out.rows_mut(b * bs, bs).copy_from(&f.solve(&rb));
                    }
                    out
                };
                let w: Vec<T> = inv.iter().map(|d| *d * *d).collect();
                let sw: Vec<T> = inv.clone();
                let y: Vec<CVec<T>> = grads.iter().map(|gr| dsolve(gr)).collect();
                // S = I + W^{1/2} G W^{1/2}, G_ij = Re(γ_i^H D^{-1} γ_j).
                let s_mat = DMatrix::<T>::from_fn(m, m, |i, j| {
                    let base = sw[i] * sw[j] * grads[i].dotc(&y[j]).re;
                    if i == j {
                        base + T::one()
                    } else {
                        base
                    }
                });
                let s_sym = (&s_mat + s_mat.transpose()) * T::lit(0.5);
                let s_fac = Cholesky::new(s_sym).ok_or_else(|| Error::Solver("Woodbury system is not positive definite".into()))?;
                let asolve = |r: &CVec<T>| -> CVec<T> {
                    let dr = dsolve(r);
                    let proj = DVector::<T>::from_fn(m, |i, _| sw[i] * grads[i].dotc(&dr).re);
                    let coef = s_fac.solve(&proj);
                    let mut out = dr;
                    for i in 0..m {
                        out -= &y[i] * C::new(sw[i] * coef[i], T::zero());
                    }
                    out
                };
                let mut m_xt = CVec::<T>::zeros(x.len());
                let mut m_tt = T::zero();
                for i in 0..m {
                    let k = cons[i].kappa;
                    if k != T::zero() {
                        m_xt += &grads[i] * C::new(w[i] * k, T::zero());
                        m_tt += w[i] * k * k;
                    }
                }
                let z_m = (m_tt > T::zero()).then(|| asolve(&m_xt));
                let schur = z_m.as_ref().map(|z| m_tt - m_xt.dotc(z).re).unwrap_or(T::zero());
                let solve = |rx: &CVec<T>, rt: T| -> (CVec<T>, T) {
                    let z_v = asolve(rx);
                    match &z_m {
                        Some(z_m) if schur > T::zero() => {
                            let dt = (rt - m_xt.dotc(&z_v).re) / schur;
                            (z_v - z_m * C::new(dt, T::zero()), dt)
                        }
                        _ => (z_v, T::zero()),
                    }
                };
                let apply = |dx: &CVec<T>, dt: T| -> (CVec<T>, T) {
                    let mut ox = CVec::<T>::zeros(dx.len());
                    for (b, q) in dblocks.iter().enumerate() {
                        ox.rows_mut(b * bs, bs).copy_from(&(q * dx.rows(b * bs, bs)));
                    }
                    let mut ot = T::zero();
                    for i in 0..m {
                        let c = w[i] * (grads[i].dotc(dx).re + cons[i].kappa * dt);
                        ox += &grads[i] * C::new(c, T::zero());
                        ot += c * cons[i].kappa;
                    }
                    (ox, ot)
                };
                let rhs_x = -&grad_x;
                let rhs_t = -grad_t;
                let (mut dx, mut dt) = solve(&rhs_x, rhs_t);
                // Iterative refinement against the exact Hessian operator.
                for _ in 0..2 {
                    let (hx, ht) = apply(&dx, dt);
                    let (cx, ct) = solve(&(&rhs_x - hx), rhs_t - ht);
                    dx += cx;
                    dt += ct;
                }
                // Newton decrement and the multiplier estimate
                // λ_i = (1 + dg_i/(-g_i)) / (-t g_i) it implies.
                let dec = -(grad_x.dotc(&dx).re + grad_t * dt);
                let lam: Vec<T> = (0..m)
                    .map(|i| {
                        let dg = grads[i].dotc(&dx).re + cons[i].kappa * dt;
                        (inv[i] / t * (T::one() + dg * inv[i])).max(T::zero())
                    })
                    .collect();
                let mut r_x = CVec::<T>::zeros(x.len());
                let mut r_t = self.sigma;
                let mut r_scale = self.sigma.abs();
                let mut comp = T::zero();
                for i in 0..m {
                    r_x += &grads[i] * C::new(lam[i], T::zero());
                    r_t += lam[i] * cons[i].kappa;
                    r_scale += lam[i] * (norm2(&grads[i]) + cons[i].kappa * cons[i].kappa).sqrt();
                    comp += lam[i] * (-g[i]);
                }
                dual_res = (norm2(&r_x) + r_t * r_t).sqrt() / r_scale.max(T::lit(1e-300));
                pd_gap = comp;
                lambda_est = lam;
                // The last round is centred until the multiplier estimate
                // is stationary to the tolerance as well.
                let last_round = mf / t <= T::lit(0.5) * tol * obj_scale(tau);
                if last_round && dual_res <= tol && pd_gap <= tol * obj_scale(tau) {
                    break;
                }
                let stalled = last_round && dec > T::lit(0.25) * prev_dec;
                prev_dec = dec;
                if stalled || !(dec > if last_round { T::lit(1e-20) } else { T::lit(1e-7) }) {
                    break;
                }
                let f0 = barrier(&x, tau, t).expect("iterate is strictly feasible");
                let mut s = T::one();
                let mut accepted = false;
                for _ in 0..80 {
                    let xn = &x + &dx * C::new(s, T::zero());
                    let tn = tau + s * dt;
                    if let Some(fv) = barrier(&xn, tn, t) {
                        if fv <= f0 - T::lit(opts.alpha) * s * dec {
                            x = xn;
                            tau = tn;
                            accepted = true;
                            break;
                        }
                    }
                    s *= T::lit(opts.beta);
                }
                if let Some(v) = stop_below {
                    if tau < v {
                        converged = true;
                        break 'outer;
                    }
                }
                if !accepted || s < T::lit(1e-10) {
                    // No further progress at working precision.
                    break;
                }
            }
            if mf / t <= T::lit(0.5) * tol * obj_scale(tau) {
                converged = true;
                break;
            }
            t *= mu;
        }
        let gap = (mf / t).max(pd_gap) / obj_scale(tau);
        let values = self.values(&x, tau);
        let lambda = lambda_est.iter().zip(&scales).map(|(l, s)| *l * *s).collect();
        Ok(QcqpResult {
            x,
            tau,
            values,
            lambda,
            gap,
            dual_residual: dual_res,
            iterations,
            converged,
        })
    }

    /// Finds a point with every `κ = 0` constraint strictly satisfied by
    /// minimizing their common violation bound `s` (phase I). Returns the
    /// point, or the index of the most violated constraint when the
    /// feasible set has no interior.
    pub fn phase_one(&self, x0: &CVec<T>, opts: &IpmOptions) -> Result<std::result::Result<CVec<T>, usize>> {
        self.check(x0)?;
        let hard: Vec<usize> = (0..self.constraints.len())
            .filter(|&i| self.constraints[i].kappa == T::zero())
            .collect();
        if hard.is_empty() {
            return Ok(Ok(x0.clone()));
        }
        let vals: Vec<T> = hard
            .iter()
            .map(|&i| self.constraints[i].value(x0, self.block_size))
            .collect();
        let worst = vals.iter().fold(T::min_value().unwrap(), |a, &b| a.max(b));
        if worst < T::zero() {
            return Ok(Ok(x0.clone()));
        }
        // Normalize per constraint so that a common slack is meaningful.
        let aux = Qcqp {
            block_size: self.block_size,
            n_blocks: self.n_blocks,
            constraints: hard
                .iter()
                .zip(&vals)
                .map(|(&i, &v)| {
                    let c = &self.constraints[i];
                    let mag = v.abs().max(c.constant.abs()).max(T::lit(1e-300));
                    let mut sc = c.scaled(T::one() / mag);
                    sc.kappa = -T::one();
                    sc
                })
                .collect(),
            sigma: T::one(),
        };
        let s0 = aux
            .values(x0, T::zero())
            .into_iter()
            .fold(T::min_value().unwrap(), |a, b| a.max(b));
        let start = s0.abs().max(T::one()) * T::lit(0.1) + s0;
        let res = aux.solve_from(x0, start, opts, Some(T::lit(-1e-6)))?;
        if res.tau < T::zero() {
            Ok(Ok(res.x))
        } else {
            let v = aux.values(&res.x, T::zero());
            let (imax, _) = v
                .iter()
                .enumerate()
                .fold((0, T::min_value().unwrap()), |b, (i, &x)| if x > b.1 { (i, x) } else { b });
            Ok(Err(hard[imax]))
        }
    }

    /// Solves the epigraph problem (`σ = -1`, `κ_i >= 0`) from an arbitrary
    /// `x0`: strict feasibility of the hard constraints is restored first and
    /// `τ` is started below every soft constraint's bound.
    pub fn solve_epigraph(&self, x0: &CVec<T>, opts: &IpmOptions) -> Result<std::result::Result<QcqpResult<T>, usize>> {
        let x = match self.phase_one(x0, opts)? {
            Ok(x) => x,
            Err(i) => return Ok(Err(i)),
        };
        let mut tau_max = T::max_value().unwrap();
        for c in &self.constraints {
            if c.kappa > T::zero() {
                tau_max = tau_max.min(-c.value(&x, self.block_size) / c.kappa);
            }
        }
        let tau0 = tau_max - T::lit(0.1) * tau_max.abs().max(T::one());
        Ok(Ok(self.solve_from(&x, tau0, opts, None)?))
    }
}

fn factor_blocks<T: Real>(blocks: &[CMat<T>]) -> Result<Vec<Cholesky<C<T>, nalgebra::Dyn>>> {
    blocks
        .iter()
        .map(|b| {
            let h = (b + b.adjoint()) * C::new(T::lit(0.5), T::zero());
            if let Some(f) = Cholesky::new(h.clone()) {
                return Ok(f);
            }
            // Tiny ridge for blocks that carry no strictly convex term.
            let ridge = T::lit(1e-12) * T::one().max(h.norm());
            let mut r = h;
            for i in 0..r.nrows() {
                r[(i, i)] += C::new(ridge, T::zero());
            }
            Cholesky::new(r).ok_or_else(|| Error::Solver("Hessian block is not positive definite".into()))
        })
        .collect()
}
