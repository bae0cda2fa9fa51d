//! Doppler filter bank: per slice, the receive filter maximizing the
//! target-to-(clutter + noise) ratio. The semidefinite relaxation of this
//! problem is tight, so the optimum is the principal generalized
//! eigenvector of the (target, loaded clutter) covariance pair.

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::scalar::{modulus, quad_form, CMat, CVec, Real, C};
use log::warn;
use nalgebra::linalg::{Cholesky, SymmetricEigen};

#[derive(Clone, Debug, PartialEq)]
pub struct CovariancePair<T: Real> {
    /// `Υ_{p,t}`.
    pub target_cov: CMat<T>,
    /// `Υ_c + K σ_R² I`.
    pub loaded_clutter_cov: CMat<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterSolution<T: Real> {
    pub w: CVec<T>,
    /// Achieved `w^H Υ_t w / w^H Υ̃_c w`.
    pub ratio: T,
    /// False when the target covariance vanished and the minimum clutter
    /// response direction was returned instead.
    pub target_visible: bool,
}

pub fn covariance_pair<T: Real>(
    ch: &ChannelSet<T>,
    beamformers: &[CMat<T>],
    phi: &CVec<T>,
    p: usize,
) -> Result<CovariancePair<T>> {
    let n = ch.n_rx;
    let mut target_cov = CMat::<T>::zeros(n, n);
    let mut clutter_cov = CMat::<T>::zeros(n, n);
    let one = C::new(T::one(), T::zero());
    for (k, f) in beamformers.iter().enumerate() {
        let hf = ch.composite_radar_channel(phi, k, p)? * f;
        target_cov.gemm(one, &hf, &hf.adjoint(), one);
        let cf = ch.clutter_channel(phi, k)? * f;
        clutter_cov.gemm(one, &cf, &cf.adjoint(), one);
    }
    let load = T::lit(ch.n_subcarriers() as f64) * ch.radar_noise_var;
    for i in 0..n {
        clutter_cov[(i, i)] += C::new(load, T::zero());
    }
    Ok(CovariancePair {
        target_cov: hermitize(&target_cov),
        loaded_clutter_cov: hermitize(&clutter_cov),
    })
}

fn hermitize<T: Real>(m: &CMat<T>) -> CMat<T> {
    (m + m.adjoint()) * C::new(T::lit(0.5), T::zero())
}

/// Rotates `w` so that its first non-negligible entry is real positive.
pub fn fix_phase<T: Real>(w: &mut CVec<T>) {
    let scale = w.iter().fold(T::zero(), |a, z| a.max(modulus(*z)));
    if scale == T::zero() {
        return;
    }
    let tiny = scale * T::lit(1e-12);
    if let Some(z) = w.iter().find(|z| modulus(**z) > tiny).copied() {
        let rot = z.conj() / C::new(modulus(z), T::zero());
        *w *= rot;
    }
}

pub fn solve_filter<T: Real>(cp: &CovariancePair<T>) -> Result<FilterSolution<T>> {
    let n = cp.target_cov.nrows();
    if n == 0 || cp.loaded_clutter_cov.shape() != (n, n) {
        return Err(Error::Dimension("covariance pair shapes disagree".into()));
    }
    let chol = Cholesky::new(cp.loaded_clutter_cov.clone()).ok_or(Error::NotPsd {
        min_eig: f64::NAN,
        scale: cp.loaded_clutter_cov.norm().as_f64(),
    })?;
    let l = chol.l();
    let t_norm = cp.target_cov.norm();
    if t_norm > T::zero() {
        // C = L^{-1} Υ_t L^{-H}
        let linv_t = l
            .solve_lower_triangular(&cp.target_cov)
            .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
        let c = l
            .solve_lower_triangular(&linv_t.adjoint())
            .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?
            .adjoint();
        let eig = SymmetricEigen::new(hermitize(&c));
        let (imax, lmax) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, T::min_value().unwrap()), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        if lmax > T::zero() {
            let y = eig.eigenvectors.column(imax).into_owned();
            let mut w = l
                .adjoint()
                .solve_upper_triangular(&y)
                .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
            let tw = quad_form(&cp.target_cov, &w);
            w /= C::new(tw.sqrt(), T::zero());
            fix_phase(&mut w);
            let ratio = quad_form(&cp.target_cov, &w) / quad_form(&cp.loaded_clutter_cov, &w);
            return Ok(FilterSolution {
                w,
                ratio,
                target_visible: true,
            });
        }
    }
    warn!("target covariance vanishes; returning the minimum clutter response filter");
    let eig = SymmetricEigen::new(cp.loaded_clutter_cov.clone());
    let imin = eig.eigenvalues.imin();
    let mut w = eig.eigenvectors.column(imin).into_owned();
    w /= C::new(w.norm(), T::zero());
    fix_phase(&mut w);
    Ok(FilterSolution {
        w,
        ratio: T::zero(),
        target_visible: false,
    })
}

/// Solves every slice of the bank for fixed beamformers and phases.
pub fn solve_filterbank<T: Real>(
    ch: &ChannelSet<T>,
    beamformers: &[CMat<T>],
    phi: &CVec<T>,
) -> Result<Vec<FilterSolution<T>>> {
    (0..ch.n_slices)
        .map(|p| solve_filter(&covariance_pair(ch, beamformers, phi, p)?))
        .collect()
}
