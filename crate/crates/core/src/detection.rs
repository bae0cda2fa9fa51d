//! Monte-Carlo detection experiment: time-domain receive blocks under
//! H0 (clutter and noise) and H1 (target, clutter and noise), the Doppler
//! filter-bank statistic and threshold sweeps.

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::metrics::DesignVariables;
use crate::scalar::{abs2, cplx, CMat, CVec, Real, C};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hypothesis {
    H0,
    H1,
}

/// Stream id offset of the Monte-Carlo trials.
const TRIAL_STREAM: u64 = 1 << 61;

fn gaussian<T: Real, R: Rng>(rng: &mut R, var: f64) -> C<T> {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    cplx(T::lit(re * s), T::lit(im * s))
}

/// Per-subcarrier transmit and clutter operators of a design, precomputed
/// for repeated draws.
#[derive(Clone, Debug)]
pub struct ReceiveModel<T: Real> {
    /// `target[p][k] = H_{p,k}(φ) F_k`.
    pub target: Vec<Vec<CMat<T>>>,
    /// `clutter[k] = C_k(φ) F_k`.
    pub clutter: Vec<CMat<T>>,
    pub noise_var: f64,
    pub n_rx: usize,
    pub n_users: usize,
}

impl<T: Real> ReceiveModel<T> {
    pub fn new(vars: &DesignVariables<T>, ch: &ChannelSet<T>) -> Result<Self> {
        let k_count = ch.n_subcarriers();
        let target = (0..ch.n_slices)
            .map(|p| {
                (0..k_count)
                    .map(|k| Ok(ch.composite_radar_channel(&vars.phases, k, p)? * &vars.beamformers[k]))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let clutter = (0..k_count)
            .map(|k| Ok(ch.clutter_channel(&vars.phases, k)? * &vars.beamformers[k]))
            .collect::<Result<Vec<_>>>()?;
        Ok(ReceiveModel {
            target,
            clutter,
            noise_var: ch.radar_noise_var.as_f64(),
            n_rx: ch.n_rx,
            n_users: ch.n_users,
        })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.clutter.len()
    }

    /// Frequency-domain receive vectors `y_k`, one per subcarrier.
    pub fn frequency_domain<R: Rng>(&self, hyp: Hypothesis, p: usize, rng: &mut R) -> Vec<CVec<T>> {
        (0..self.n_subcarriers())
            .map(|k| {
                let s = CVec::<T>::from_fn(self.n_users, |_, _| gaussian(rng, 1.0));
                let mut y = &self.clutter[k] * &s;
                if hyp == Hypothesis::H1 {
                    y += &self.target[p][k] * &s;
                }
                for v in y.iter_mut() {
                    *v += gaussian(rng, self.noise_var);
                }
                y
            })
            .collect()
    }
}

/// Unitary `K`-point IFFT across subcarriers, applied per receive antenna.
pub fn to_time_domain<T: Real>(freq: &[CVec<T>]) -> Vec<CVec<T>> {
    let k = freq.len();
    if k == 0 {
        return Vec::new();
    }
    let n_rx = freq[0].len();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(k);
    let scale = 1.0 / (k as f64).sqrt();
    let mut out = vec![CVec::<T>::zeros(n_rx); k];
    let mut buf = vec![num_complex::Complex::<f64>::new(0.0, 0.0); k];
    for r in 0..n_rx {
        for (b, y) in buf.iter_mut().zip(freq) {
            *b = num_complex::Complex::new(y[r].re.as_f64(), y[r].im.as_f64());
        }
        ifft.process(&mut buf);
        for (n, b) in buf.iter().enumerate() {
            out[n][r] = cplx(T::lit(b.re * scale), T::lit(b.im * scale));
        }
    }
    out
}

/// Unitary `K`-point FFT, the inverse of [`to_time_domain`].
pub fn to_frequency_domain<T: Real>(time: &[CVec<T>]) -> Vec<CVec<T>> {
    let k = time.len();
    if k == 0 {
        return Vec::new();
    }
    let n_rx = time[0].len();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(k);
    let scale = 1.0 / (k as f64).sqrt();
    let mut out = vec![CVec::<T>::zeros(n_rx); k];
    let mut buf = vec![num_complex::Complex::<f64>::new(0.0, 0.0); k];
    for r in 0..n_rx {
        for (b, y) in buf.iter_mut().zip(time) {
            *b = num_complex::Complex::new(y[r].re.as_f64(), y[r].im.as_f64());
        }
        fft.process(&mut buf);
        for (n, b) in buf.iter().enumerate() {
            out[n][r] = cplx(T::lit(b.re * scale), T::lit(b.im * scale));
        }
    }
    out
}

/// Time-domain receive block of one trial under `hyp`; `p` is the target's
/// Doppler slice (ignored under H0).
pub fn synthesize_receive<T: Real, R: Rng>(model: &ReceiveModel<T>, hyp: Hypothesis, p: usize, rng: &mut R) -> Vec<CVec<T>> {
    to_time_domain(&model.frequency_domain(hyp, p, rng))
}

/// `max_p Σ_n |w_p^H y[n]|^2`.
pub fn test_statistic<T: Real>(filters: &[CVec<T>], y: &[CVec<T>]) -> T {
    filters
        .iter()
        .map(|w| y.iter().fold(T::zero(), |a, yn| a + abs2(w.dotc(yn))))
        .fold(T::zero(), |a, b| a.max(b))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub p_fa: Vec<f64>,
    pub p_d: Vec<f64>,
    pub n_mont: usize,
    /// Noise-only mean statistic the thresholds are scaled by.
    pub normalizer: f64,
}

impl RocCurve {
    /// Index of the threshold whose false-alarm rate is closest to `target`
    /// (the largest threshold on ties).
    pub fn index_near_pfa(&self, target: f64) -> usize {
        let mut best = 0;
        for (i, &pfa) in self.p_fa.iter().enumerate() {
            if (pfa - target).abs() <= (self.p_fa[best] - target).abs() {
                best = i;
            }
        }
        best
    }

    pub fn p_d_near_pfa(&self, target: f64) -> (f64, f64) {
        let i = self.index_near_pfa(target);
        (self.p_fa[i], self.p_d[i])
    }
}

/// The threshold grid `0, 0.1, ..., 10`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 10.0).collect()
}

/// Mean of the statistic's per-slice average under noise only:
/// `K σ_R^2 · mean_p ||w_p||^2`.
pub fn noise_normalizer<T: Real>(filters: &[CVec<T>], n_subcarriers: usize, noise_var: f64) -> f64 {
    let mean_norm = filters.iter().map(|w| w.norm_squared().as_f64()).sum::<f64>() / filters.len().max(1) as f64;
    n_subcarriers as f64 * noise_var * mean_norm
}

/// Runs `n_mont` paired H0/H1 trials. Trial `i` uses its own ChaCha stream
/// derived from `seed`, so results do not depend on thread scheduling.
pub fn simulate_roc<T: Real>(
    vars: &DesignVariables<T>,
    ch: &ChannelSet<T>,
    n_mont: usize,
    thresholds: &[f64],
    seed: u64,
) -> Result<RocCurve> {
    if n_mont == 0 {
        return Err(Error::invalid("n_mont", "must be >= 1"));
    }
    let model = ReceiveModel::new(vars, ch)?;
    let normalizer = noise_normalizer(&vars.filters, ch.n_subcarriers(), model.noise_var);
    let norm = if normalizer > 0.0 { normalizer } else { 1.0 };
    let stats: Vec<(f64, f64)> = (0..n_mont)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(TRIAL_STREAM + i as u64);
            let y0 = synthesize_receive(&model, Hypothesis::H0, 0, &mut rng);
            let p = rng.random_range(0..ch.n_slices);
            let y1 = synthesize_receive(&model, Hypothesis::H1, p, &mut rng);
            (
                test_statistic(&vars.filters, &y0).as_f64() / norm,
                test_statistic(&vars.filters, &y1).as_f64() / norm,
            )
        })
        .collect();
    let n = n_mont as f64;
    let p_fa = thresholds
        .iter()
        .map(|&g| stats.iter().filter(|s| s.0 > g).count() as f64 / n)
        .collect();
    let p_d = thresholds
        .iter()
        .map(|&g| stats.iter().filter(|s| s.1 > g).count() as f64 / n)
        .collect();
    Ok(RocCurve {
        thresholds: thresholds.to_vec(),
        p_fa,
        p_d,
        n_mont,
        normalizer,
    })
}
