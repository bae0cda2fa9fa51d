//! Radar and communications SINR evaluation, and the lifted quadratic forms
//! consumed by the three block solvers.

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::scalar::{abs2, norm2, CMat, CVec, Real, C};

/// The optimization triple: per-subcarrier beamformers `F_k` (`N_t × U`),
/// the stacked unit-modulus IRS phases `φ` and the Doppler filter bank.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignVariables<T: Real> {
    pub beamformers: Vec<CMat<T>>,
    pub phases: CVec<T>,
    pub filters: Vec<CVec<T>>,
}

impl<T: Real> DesignVariables<T> {
    /// `f = [vec(F_1); ...; vec(F_K)]` (column-major `vec`).
    pub fn stacked_beamformers(&self) -> CVec<T> {
        stack_beamformers(&self.beamformers)
    }

    pub fn set_stacked_beamformers(&mut self, f: &CVec<T>) {
        self.beamformers = unstack_beamformers(f, &self.beamformers);
    }

    pub fn power_per_subcarrier(&self) -> Vec<T> {
        self.beamformers.iter().map(|f| f.norm_squared()).collect()
    }
}

pub fn stack_beamformers<T: Real>(fs: &[CMat<T>]) -> CVec<T> {
    let total: usize = fs.iter().map(|f| f.len()).sum();
    let mut out = CVec::<T>::zeros(total);
    let mut off = 0;
    for f in fs {
        for (i, z) in f.iter().enumerate() {
            out[off + i] = *z;
        }
        off += f.len();
    }
    out
}

/// Inverse of [`stack_beamformers`] using `like` for the shapes.
pub fn unstack_beamformers<T: Real>(f: &CVec<T>, like: &[CMat<T>]) -> Vec<CMat<T>> {
    let mut off = 0;
    like.iter()
        .map(|m| {
            let (r, c) = m.shape();
            let out = CMat::from_column_slice(r, c, &f.as_slice()[off..off + r * c]);
            off += r * c;
            out
        })
        .collect()
}

/// Numerator, clutter power and noise term of the radar SINR of slice `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadarTerms<T> {
    pub signal: T,
    pub clutter: T,
    pub noise: T,
}

impl<T: Real> RadarTerms<T> {
    pub fn sinr(&self) -> T {
        self.signal / (self.clutter + self.noise)
    }
}

pub fn radar_terms<T: Real>(
    vars: &DesignVariables<T>,
    ch: &ChannelSet<T>,
    p: usize,
) -> Result<RadarTerms<T>> {
    let w = &vars.filters[p];
    let wn = norm2(w);
    if wn == T::zero() {
        return Err(Error::Degenerate(format!("receive filter of slice {p} is zero")));
    }
    let k_count = ch.n_subcarriers();
    let mut signal = T::zero();
    let mut clutter = T::zero();
    for k in 0..k_count {
        let f = &vars.beamformers[k];
        let h = ch.composite_radar_channel(&vars.phases, k, p)?;
        signal += (w.adjoint() * &h * f).norm_squared();
        let hc = ch.clutter_channel(&vars.phases, k)?;
        clutter += (w.adjoint() * &hc * f).norm_squared();
    }
    let noise = T::lit(k_count as f64) * ch.radar_noise_var * wn;
    Ok(RadarTerms { signal, clutter, noise })
}

/// Radar SINR of Doppler slice `p`, linear scale.
pub fn radar_sinr<T: Real>(vars: &DesignVariables<T>, ch: &ChannelSet<T>, p: usize) -> Result<T> {
    Ok(radar_terms(vars, ch, p)?.sinr())
}

pub fn radar_sinrs<T: Real>(vars: &DesignVariables<T>, ch: &ChannelSet<T>) -> Result<Vec<T>> {
    (0..ch.n_slices).map(|p| radar_sinr(vars, ch, p)).collect()
}

/// `min_p SINR_p`, ties resolved to the lowest index.
pub fn min_radar_sinr<T: Real>(vars: &DesignVariables<T>, ch: &ChannelSet<T>) -> Result<(T, usize)> {
    let all = radar_sinrs(vars, ch)?;
    Ok(argmin(&all))
}

pub(crate) fn argmin<T: Real>(v: &[T]) -> (T, usize) {
    let mut best = (v[0], 0);
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < best.0 {
            best = (x, i);
        }
    }
    best
}

/// Desired power and interference power (summed over subcarriers) of user `u`.
pub fn comm_terms<T: Real>(vars: &DesignVariables<T>, ch: &ChannelSet<T>, u: usize) -> (T, T) {
    let mut desired = T::zero();
    let mut mui = T::zero();
    for k in 0..ch.n_subcarriers() {
        let z = ch.effective_comm(&vars.phases, u, k);
        let row = z.transpose() * &vars.beamformers[k];
        for (i, y) in row.iter().enumerate() {
            if i == u {
                desired += abs2(*y);
            } else {
                mui += abs2(*y);
            }
        }
    }
    (desired, mui)
}

/// Communications SINR of user `u`, linear scale.
pub fn comm_sinr<T: Real>(vars: &DesignVariables<T>, ch: &ChannelSet<T>, u: usize) -> T {
    let (d, i) = comm_terms(vars, ch, u);
    d / (i + T::lit(ch.n_subcarriers() as f64) * ch.comm_noise_var)
}

pub fn comm_sinrs<T: Real>(vars: &DesignVariables<T>, ch: &ChannelSet<T>) -> Vec<T> {
    (0..ch.n_users).map(|u| comm_sinr(vars, ch, u)).collect()
}

/// Lifted beamformer forms, stored through their rank-one generators.
///
/// With `f` stacked per subcarrier and, inside a subcarrier, per user
/// column, every lifted matrix is block diagonal with `N_t × N_t` blocks
/// indexed `(k, u)`:
/// * `Ξ_{p,t}` has block `a a^H` with `a = target[p][k]` for every `u`;
/// * `Ξ_{p,c}` likewise with `clutter[p][k]`;
/// * `R_u` has block `v v^H` with `v = comm[u][k]` only at `(k, u)`, and
///   `R̄_u` the same generator at every `(k, i)`, `i ≠ u`.
#[derive(Clone, Debug)]
pub struct BeamformerForms<T: Real> {
    pub n_tx: usize,
    pub n_users: usize,
    pub target: Vec<Vec<CVec<T>>>,
    pub clutter: Vec<Vec<CVec<T>>>,
    pub comm: Vec<Vec<CVec<T>>>,
    /// `K σ_R² w_p^H w_p`.
    pub radar_noise: Vec<T>,
    /// `K σ_C²`.
    pub comm_noise: T,
}

impl<T: Real> BeamformerForms<T> {
    pub fn n_subcarriers(&self) -> usize {
        self.comm.first().map(|c| c.len()).unwrap_or(self.target[0].len())
    }

    pub fn n_slices(&self) -> usize {
        self.target.len()
    }

    /// Block index of `(k, u)` inside `f`.
    pub fn block_index(&self, k: usize, u: usize) -> usize {
        k * self.n_users + u
    }

    fn block<'a>(&self, f: &'a CVec<T>, k: usize, u: usize) -> nalgebra::DVectorView<'a, C<T>> {
        f.rows(self.block_index(k, u) * self.n_tx, self.n_tx)
    }

    fn rank1_all_users(&self, gens: &[CVec<T>], f: &CVec<T>) -> T {
        let mut acc = T::zero();
        for (k, a) in gens.iter().enumerate() {
            for u in 0..self.n_users {
                acc += abs2(a.dotc(&self.block(f, k, u)));
            }
        }
        acc
    }

    /// `f^H Ξ_{p,t} f`.
    pub fn target_power(&self, p: usize, f: &CVec<T>) -> T {
        self.rank1_all_users(&self.target[p], f)
    }

    /// `f^H Ξ_{p,c} f`.
    pub fn clutter_power(&self, p: usize, f: &CVec<T>) -> T {
        self.rank1_all_users(&self.clutter[p], f)
    }

    /// `f^H R_u f`.
    pub fn comm_desired(&self, u: usize, f: &CVec<T>) -> T {
        self.comm[u]
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (k, v)| acc + abs2(v.dotc(&self.block(f, k, u))))
    }

    /// `f^H R̄_u f`.
    pub fn comm_interference(&self, u: usize, f: &CVec<T>) -> T {
        let mut acc = T::zero();
        for (k, v) in self.comm[u].iter().enumerate() {
            for i in (0..self.n_users).filter(|&i| i != u) {
                acc += abs2(v.dotc(&self.block(f, k, i)));
            }
        }
        acc
    }

    pub fn radar_sinr(&self, p: usize, f: &CVec<T>) -> T {
        self.target_power(p, f) / (self.clutter_power(p, f) + self.radar_noise[p])
    }

    pub fn comm_sinr(&self, u: usize, f: &CVec<T>) -> T {
        self.comm_desired(u, f) / (self.comm_interference(u, f) + self.comm_noise)
    }

    /// `Ξ_{p,t} f` (the linear coefficient of the minorant at anchor `f`).
    pub fn target_apply(&self, p: usize, f: &CVec<T>) -> CVec<T> {
        self.rank1_apply(&self.target[p], f, None)
    }

    pub fn clutter_apply(&self, p: usize, f: &CVec<T>) -> CVec<T> {
        self.rank1_apply(&self.clutter[p], f, None)
    }

    /// `R_u f`.
    pub fn comm_desired_apply(&self, u: usize, f: &CVec<T>) -> CVec<T> {
        self.rank1_apply(&self.comm[u], f, Some(u))
    }

    fn rank1_apply(&self, gens: &[CVec<T>], f: &CVec<T>, only: Option<usize>) -> CVec<T> {
        let mut out = CVec::<T>::zeros(f.len());
        for (k, a) in gens.iter().enumerate() {
            for u in 0..self.n_users {
                if only.is_some_and(|o| o != u) {
                    continue;
                }
                let off = self.block_index(k, u) * self.n_tx;
                let c = a.dotc(&self.block(f, k, u));
                for i in 0..self.n_tx {
                    out[off + i] += a[i] * c;
                }
            }
        }
        out
    }

    /// Dense `N_t U × N_t U` block `k` of `Ξ_{p,t}`; used by tests and
    /// diagnostics only.
    pub fn dense_target_block(&self, p: usize, k: usize) -> CMat<T> {
        let a = &self.target[p][k];
        let aa = a * a.adjoint();
        let n = self.n_tx * self.n_users;
        let mut out = CMat::<T>::zeros(n, n);
        for u in 0..self.n_users {
            out.view_mut((u * self.n_tx, u * self.n_tx), (self.n_tx, self.n_tx))
                .copy_from(&aa);
        }
        out
    }
}

/// Lifts the beamformer subproblem for fixed phases and filter bank.
pub fn lift_beamformer_forms<T: Real>(
    ch: &ChannelSet<T>,
    phi: &CVec<T>,
    filters: &[CVec<T>],
) -> Result<BeamformerForms<T>> {
    let k_count = ch.n_subcarriers();
    let kk = T::lit(k_count as f64);
    let clutter_h = (0..k_count)
        .map(|k| ch.clutter_channel(phi, k))
        .collect::<Result<Vec<_>>>()?;
    let mut target = Vec::with_capacity(ch.n_slices);
    let mut clutter = Vec::with_capacity(ch.n_slices);
    for (p, w) in filters.iter().enumerate() {
        let mut tp = Vec::with_capacity(k_count);
        let mut cp = Vec::with_capacity(k_count);
        for (k, hc) in clutter_h.iter().enumerate() {
            let h = ch.composite_radar_channel(phi, k, p)?;
            tp.push(h.adjoint() * w);
            cp.push(hc.adjoint() * w);
        }
        target.push(tp);
        clutter.push(cp);
    }
    let comm = (0..ch.n_users)
        .map(|u| {
            (0..k_count)
                .map(|k| ch.effective_comm(phi, u, k).conjugate())
                .collect()
        })
        .collect();
    Ok(BeamformerForms {
        n_tx: ch.n_tx,
        n_users: ch.n_users,
        target,
        clutter,
        comm,
        radar_noise: filters.iter().map(|w| kk * ch.radar_noise_var * norm2(w)).collect(),
        comm_noise: kk * ch.comm_noise_var,
    })
}

/// `x^H A x + 2 Re(x^H b) + c` with `A` Hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadForm<T: Real> {
    pub mat: CMat<T>,
    pub vec: CVec<T>,
    pub constant: T,
}

impl<T: Real> QuadForm<T> {
    pub fn zeros(n: usize) -> Self {
        QuadForm {
            mat: CMat::zeros(n, n),
            vec: CVec::zeros(n),
            constant: T::zero(),
        }
    }

    pub fn value(&self, x: &CVec<T>) -> T {
        let ax = &self.mat * x;
        x.dotc(&ax).re + T::lit(2.0) * x.dotc(&self.vec).re + self.constant
    }

    /// Euclidean (Wirtinger, doubled) gradient `2(A x + b)`.
    pub fn gradient(&self, x: &CVec<T>) -> CVec<T> {
        (&self.mat * x + &self.vec) * C::new(T::lit(2.0), T::zero())
    }

    /// Accumulates `|a + m^T x|²` into the form.
    fn add_amplitude(&mut self, m: &CVec<T>, a: C<T>) {
        let mc = m.conjugate();
        self.mat.gerc(C::new(T::one(), T::zero()), &mc, &mc, C::new(T::one(), T::zero()));
        self.vec.axpy(a, &mc, C::new(T::one(), T::zero()));
        self.constant += abs2(a);
    }
}

/// Phase-subproblem forms of one Doppler slice.
#[derive(Clone, Debug)]
pub struct SlicePhaseForms<T: Real> {
    /// Target power as a form in `φ` at fixed `ψ` (`U_p`, `u_p`, `u°_p`).
    pub target_phi: QuadForm<T>,
    /// Clutter power plus noise in `φ` (`Ũ_p`, `ũ_p`, `ũ°_p`).
    pub clutter_phi: QuadForm<T>,
    /// Target power as a form in `ψ` at fixed `φ` (`V_p`, `v_p`, `v°_p`).
    pub target_psi: QuadForm<T>,
    /// Clutter power plus noise in `ψ` (`Ṽ_p`, `ṽ_p`, `ṽ°_p`).
    pub clutter_psi: QuadForm<T>,
}

/// Communications forms of one user in `φ`.
#[derive(Clone, Debug)]
pub struct UserPhaseForms<T: Real> {
    /// Desired power `q° + 2Re(φ^H q) + φ^H Q φ`.
    pub desired: QuadForm<T>,
    /// Interference power `q̄° + 2Re(φ^H q̄) + φ^H Q̄ φ`.
    pub interference: QuadForm<T>,
}

#[derive(Clone, Debug)]
pub struct PhaseForms<T: Real> {
    pub slices: Vec<SlicePhaseForms<T>>,
    pub users: Vec<UserPhaseForms<T>>,
    /// `K σ_C²`.
    pub comm_noise: T,
}

/// Lifts the phase subproblem for fixed beamformers and filter bank. The
/// `φ`-forms hold `ψ` fixed inside the IRS-target-IRS term; the `ψ`-forms
/// hold `φ` fixed everywhere else.
pub fn lift_phase_forms<T: Real>(
    ch: &ChannelSet<T>,
    beamformers: &[CMat<T>],
    filters: &[CVec<T>],
    psi: &CVec<T>,
    phi: &CVec<T>,
) -> Result<PhaseForms<T>> {
    let n = ch.n_phases();
    if psi.len() != n || phi.len() != n {
        return Err(Error::Dimension(format!(
            "phase vectors have lengths {} and {}, expected {n}",
            phi.len(),
            psi.len()
        )));
    }
    let k_count = ch.n_subcarriers();
    let kk = T::lit(k_count as f64);
    let mut slices = Vec::with_capacity(filters.len());
    for (p, w) in filters.iter().enumerate() {
        let mut t_phi = QuadForm::zeros(n);
        let mut c_phi = QuadForm::zeros(n);
        let mut t_psi = QuadForm::zeros(n);
        let mut c_psi = QuadForm::zeros(n);
        for k in 0..k_count {
            // Row-vector pieces w^H X, stored as columns of their conjugates.
            let wa = ch.radar.a_dir[k].adjoint() * w;
            let a_dir_row = wa.adjoint() * ch.radar.gain_direct[p][k];
            let ca_row = (ch.clutter.a_dir[k].adjoint() * w).adjoint();
            // U_k (n × N_t) and V_k, plus the ψ-independent part for the ψ-form.
            let mut u_t = CMat::<T>::zeros(n, ch.n_tx);
            let mut u_c = CMat::<T>::zeros(n, ch.n_tx);
            let mut v_t = CMat::<T>::zeros(n, ch.n_tx);
            let mut v_c = CMat::<T>::zeros(n, ch.n_tx);
            let mut rest_t = a_dir_row.clone();
            let mut rest_c = ca_row.clone();
            let [b2, b3, b4] = ch.clutter.beta;
            for m in 0..ch.n_irs() {
                let off = ch.irs_offset(m);
                let nm = ch.irs_sizes[m];
                let pm = &ch.radar.paths[m][k];
                let [a2, a3, a4] = ch.radar.gain_irs[p][k][m];
                let ph = ch.irs_phase_block(phi, m);
                let ps = ch.irs_phase_block(psi, m);
                let we = (pm.e.adjoint() * w).adjoint();
                let wd = (pm.d.adjoint() * w).adjoint();
                let wec = (ch.clutter.e[m][k].adjoint() * w).adjoint();
                let w_psi_g = crate::channel::scale_rows(&pm.g, &ps);
                let ww_psi_g = &pm.w * &w_psi_g;
                let wc_psi_g = &ch.clutter.w[m][k] * &w_psi_g;
                for i in 0..nm {
                    for j in 0..ch.n_tx {
                        u_t[(off + i, j)] = a2 * we[i] * pm.g[(i, j)]
                            + a3 * wd[i] * pm.b[(i, j)]
                            + a4 * wd[i] * ww_psi_g[(i, j)];
                        u_c[(off + i, j)] = b2 * wec[i] * pm.g[(i, j)]
                            + b3 * wd[i] * ch.clutter.b[m][k][(i, j)]
                            + b4 * wd[i] * wc_psi_g[(i, j)];
                    }
                }
                // ψ-form: w^H D Φ W diag(ψ) G f = ψ^T diag(w^H D Φ W) G f.
                let wdphi = wd.component_mul(&ph.transpose());
                let wdphi_w = &wdphi * &pm.w;
                let wdphi_wc = &wdphi * &ch.clutter.w[m][k];
                for i in 0..nm {
                    for j in 0..ch.n_tx {
                        v_t[(off + i, j)] = a4 * wdphi_w[i] * pm.g[(i, j)];
                        v_c[(off + i, j)] = b4 * wdphi_wc[i] * pm.g[(i, j)];
                    }
                }
                let g_phi = crate::channel::scale_rows(&pm.g, &ph);
                let b_phi = crate::channel::scale_rows(&pm.b, &ph);
                let bc_phi = crate::channel::scale_rows(&ch.clutter.b[m][k], &ph);
                rest_t += (&we * &g_phi) * a2 + (&wd * &b_phi) * a3;
                rest_c += (&wec * &g_phi) * b2 + (&wd * &bc_phi) * b3;
            }
            let f = &beamformers[k];
            for u in 0..f.ncols() {
                let col = f.column(u);
                let a_t = (&a_dir_row * col)[0];
                let a_c = (&ca_row * col)[0];
                t_phi.add_amplitude(&(&u_t * col), a_t);
                c_phi.add_amplitude(&(&u_c * col), a_c);
                t_psi.add_amplitude(&(&v_t * col), (&rest_t * col)[0]);
                c_psi.add_amplitude(&(&v_c * col), (&rest_c * col)[0]);
            }
        }
        let noise = kk * ch.radar_noise_var * norm2(w);
        c_phi.constant += noise;
        c_psi.constant += noise;
        slices.push(SlicePhaseForms {
            target_phi: t_phi,
            clutter_phi: c_phi,
            target_psi: t_psi,
            clutter_psi: c_psi,
        });
    }
    let mut users = Vec::with_capacity(ch.n_users);
    for u in 0..ch.n_users {
        let mut desired = QuadForm::zeros(n);
        let mut interference = QuadForm::zeros(n);
        for k in 0..k_count {
            let hk = ch.cascaded_comm(u, k);
            let h0 = &ch.comm.h_direct[u][k];
            let f = &beamformers[k];
            for i in 0..f.ncols() {
                let col = f.column(i).into_owned();
                let m = &hk * &col;
                let a = h0.dot(&col);
                if i == u {
                    desired.add_amplitude(&m, a);
                } else {
                    interference.add_amplitude(&m, a);
                }
            }
        }
        users.push(UserPhaseForms {
            desired,
            interference,
        });
    }
    Ok(PhaseForms {
        slices,
        users,
        comm_noise: kk * ch.comm_noise_var,
    })
}

impl<T: Real> PhaseForms<T> {
    /// Radar SINR of slice `p` at `φ = ψ = x` through the `φ`-forms (which
    /// must have been lifted with `ψ = x`).
    pub fn radar_sinr_phi(&self, p: usize, x: &CVec<T>) -> T {
        let s = &self.slices[p];
        s.target_phi.value(x) / s.clutter_phi.value(x)
    }

    pub fn comm_sinr(&self, u: usize, x: &CVec<T>) -> T {
        let f = &self.users[u];
        f.desired.value(x) / (f.interference.value(x) + self.comm_noise)
    }
}

/// Normalized transmit beampattern `‖a_t^T(θ, f_k) F_k‖²` over an angle grid
/// (radians) and every subcarrier; `out[k][i]` corresponds to `angles[i]`.
/// The normalization is global over `(θ, k)`.
pub fn transmit_beampattern<T: Real>(
    beamformers: &[CMat<T>],
    angles: &[f64],
    rf_hz: &[f64],
    spacing_m: f64,
) -> Result<Vec<Vec<f64>>> {
    if angles.is_empty() {
        return Err(Error::Degenerate("empty angle grid".into()));
    }
    let raw: Vec<Vec<f64>> = beamformers
        .iter()
        .zip(rf_hz)
        .map(|(f, &rf)| {
            angles
                .iter()
                .map(|&th| {
                    let a = crate::channel::ula_response::<T>(f.nrows(), th, rf, spacing_m);
                    (a.transpose() * f).norm_squared().as_f64()
                })
                .collect()
        })
        .collect();
    let peak = raw.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    if !(peak > 0.0) {
        return Err(Error::Degenerate("beampattern is identically zero".into()));
    }
    Ok(raw
        .into_iter()
        .map(|row| row.into_iter().map(|v| v / peak).collect())
        .collect())
}
