//! Channel synthesis: steering vectors, radar path matrices with their
//! effective gains, clutter responses and the clustered wideband downlink
//! channels. Everything is computed once per scenario and cached in a
//! [`ChannelSet`]; solvers only read from it.

use crate::error::{Error, Result};
use crate::scalar::{c64, cis64, CMat, CVec, Real, C};
use crate::scenario::{Scenario, SPEED_OF_LIGHT};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArrayKind {
    Tx,
    Rx,
    Irs(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteeringVector<T: Real> {
    pub entries: CVec<T>,
    pub angle: f64,
    pub subcarrier_hz: f64,
}

/// Uniform linear array response: entry `n` is `exp(-j n 2π f d sinθ / c)`
/// with `f` the RF frequency.
pub fn ula_response<T: Real>(n: usize, theta: f64, rf_hz: f64, spacing_m: f64) -> CVec<T> {
    let v = 2.0 * PI * rf_hz * spacing_m * theta.sin() / SPEED_OF_LIGHT;
    CVec::from_fn(n, |i, _| cis64(-(i as f64) * v))
}

/// Space-frequency steering vector of one of the scenario's arrays at
/// baseband subcarrier frequency `f_k`.
pub fn steering_vector<T: Real>(
    s: &Scenario,
    array: ArrayKind,
    theta: f64,
    f_k: f64,
) -> Result<SteeringVector<T>> {
    let n = match array {
        ArrayKind::Tx => s.n_tx,
        ArrayKind::Rx => s.n_rx,
        ArrayKind::Irs(m) => *s.irs_element_counts.get(m).ok_or_else(|| {
            Error::Dimension(format!("IRS index {m} out of range (M = {})", s.n_irs()))
        })?,
    };
    Ok(SteeringVector {
        entries: ula_response(n, theta, s.carrier_hz + f_k, s.element_spacing_m()),
        angle: theta,
        subcarrier_hz: f_k,
    })
}

/// Raised-cosine pulse with rolloff `beta` and symbol period `ts`.
pub fn raised_cosine(t: f64, beta: f64, ts: f64) -> f64 {
    let x = t / ts;
    let sinc = |x: f64| {
        if x == 0.0 {
            1.0
        } else {
            (PI * x).sin() / (PI * x)
        }
    };
    if beta > 0.0 {
        let edge = 1.0 / (2.0 * beta);
        if (x.abs() - edge).abs() < 1e-9 * edge.max(1.0) {
            return PI / 4.0 * sinc(edge);
        }
    }
    let den = 1.0 - (2.0 * beta * x).powi(2);
    sinc(x) * (PI * beta * x).cos() / den
}

/// `exp(-j 2π f τ)` with the phase reduced modulo one cycle before the
/// trigonometric call (f τ reaches ~1e6 cycles at X band).
fn delay_phase(rf_hz: f64, delay_s: f64) -> Complex64 {
    let cycles = rf_hz * delay_s;
    let frac = cycles - cycles.round();
    Complex64::from_polar(1.0, -2.0 * PI * frac)
}

/// Rank-one path matrices of one IRS at one subcarrier.
#[derive(Clone, Debug)]
pub struct IrsPaths<T: Real> {
    /// IRS to Rx via the target, `a_r(θ_t) b^T(θ_{t,i})`.
    pub e: CMat<T>,
    /// IRS to Rx, `a_r(θ_i) b^T(θ_{d,i})`.
    pub d: CMat<T>,
    /// Tx to IRS via the target, `b(θ_{t,i}) a_t^T(θ_t)`.
    pub b: CMat<T>,
    /// Tx to IRS, `b(θ_{d,i}) a_t^T(θ_i)`.
    pub g: CMat<T>,
    /// IRS-target-IRS, `b(θ_{t,i}) b^T(θ_{t,i})`.
    pub w: CMat<T>,
}

#[derive(Clone, Debug)]
pub struct RadarPathMatrices<T: Real> {
    /// Unit-gain direct response `a_r(θ_t) a_t^T(θ_t)`, per subcarrier.
    pub a_dir: Vec<CMat<T>>,
    /// `paths[m][k]`.
    pub paths: Vec<Vec<IrsPaths<T>>>,
    /// Effective direct gain `gain_direct[p][k]`.
    pub gain_direct: Vec<Vec<C<T>>>,
    /// Effective indirect gains `gain_irs[p][k][m]` for paths 2, 3, 4.
    pub gain_irs: Vec<Vec<Vec<[C<T>; 3]>>>,
}

#[derive(Clone, Debug)]
pub struct ClutterMatrices<T: Real> {
    /// `Ã_dir,k`, including `β_1`.
    pub a_dir: Vec<CMat<T>>,
    /// `Ẽ`, `B̃`, `W̃` per `[m][k]` (gains not applied).
    pub e: Vec<Vec<CMat<T>>>,
    pub b: Vec<Vec<CMat<T>>>,
    pub w: Vec<Vec<CMat<T>>>,
    /// `β_2, β_3, β_4`.
    pub beta: [C<T>; 3],
}

#[derive(Clone, Debug)]
pub struct CommChannels<T: Real> {
    /// `h_direct[u][k]`, length `N_t`.
    pub h_direct: Vec<Vec<CVec<T>>>,
    /// `h_irs[u][m][k]`, length `N_m`.
    pub h_irs: Vec<Vec<Vec<CVec<T>>>>,
}

/// Every channel quantity of one scenario, plus the scalars the solvers need.
#[derive(Clone, Debug)]
pub struct ChannelSet<T: Real> {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_users: usize,
    pub n_slices: usize,
    pub irs_sizes: Vec<usize>,
    /// Original subcarrier index of each retained subcarrier.
    pub subcarriers: Vec<usize>,
    pub power: Vec<T>,
    pub radar_noise_var: T,
    pub comm_noise_var: T,
    pub comm_sinr_threshold: T,
    pub radar: RadarPathMatrices<T>,
    pub clutter: ClutterMatrices<T>,
    pub comm: CommChannels<T>,
}

fn outer<T: Real>(a: &CVec<T>, b: &CVec<T>) -> CMat<T> {
    a * b.transpose()
}

/// Tapped-delay frequency response of one cluster at subcarrier `k`:
/// `Σ_d exp(-j2πkd/K) r(d T_s - τ)`.
fn cluster_response(k: usize, n_sub: usize, tau: f64, beta: f64, ts: f64) -> Complex64 {
    (0..n_sub)
        .map(|d| {
            let r = raised_cosine(d as f64 * ts - tau, beta, ts);
            let ang = -2.0 * PI * ((k * d) % n_sub) as f64 / n_sub as f64;
            Complex64::from_polar(r, ang)
        })
        .sum()
}

fn cn01(rng: &mut ChaCha20Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One propagation cluster of the downlink model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cluster {
    pub gain: Complex64,
    /// Delay in seconds (`T_s` units when `T_s = 1`).
    pub delay: f64,
    /// Angle of departure, radians.
    pub aod: f64,
}

/// Draws `n_clusters` clusters: CN(0,1) gains, delays uniform on
/// `[0, K T_s]`, angles uniform on `(0, 2π]`.
pub fn draw_clusters(s: &Scenario, n_clusters: usize, rng: &mut ChaCha20Rng) -> Vec<Cluster> {
    let cm = s.comm_model;
    (0..n_clusters)
        .map(|_| {
            let gain = cn01(rng);
            let delay = rng.random_range(0.0..=s.n_subcarriers as f64 * cm.sample_period);
            let aod = 2.0 * PI * (1.0 - rng.random::<f64>());
            Cluster { gain, delay, aod }
        })
        .collect()
}

/// Frequency response of an `n`-element array's clustered channel, one
/// vector per subcarrier.
pub fn cluster_channel<T: Real>(s: &Scenario, n: usize, clusters: &[Cluster]) -> Vec<CVec<T>> {
    let cm = s.comm_model;
    let k_total = s.n_subcarriers;
    let spacing = s.element_spacing_m();
    (0..k_total)
        .map(|k| {
            let rf = s.carrier_hz + s.subcarrier_hz(k);
            let mut h = DMatrix::<Complex64>::zeros(n, 1);
            for c in clusters {
                let coef = c.gain * cluster_response(k, k_total, c.delay, cm.rolloff, cm.sample_period);
                let a: CVec<f64> = ula_response(n, c.aod, rf, spacing);
                h += a * coef;
            }
            CVec::from_fn(n, |i, _| c64(h[i]))
        })
        .collect()
}

/// Seeded stream for user `u` and IRS `m` (`None` for the direct link).
/// Each link owns its stream, so dropping an IRS never perturbs the others.
fn link_rng(seed: u64, u: usize, m: Option<usize>) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let link = match m {
        None => 0,
        Some(m) => m as u64 + 1,
    };
    rng.set_stream(((u as u64) << 32) | link);
    rng
}

/// Downlink channels of every user.
pub fn comm_channels<T: Real>(s: &Scenario) -> CommChannels<T> {
    let h_direct = (0..s.n_users)
        .map(|u| {
            let mut rng = link_rng(s.rng_seed, u, None);
            cluster_channel(s, s.n_tx, &draw_clusters(s, s.comm_model.n_clusters, &mut rng))
        })
        .collect();
    let h_irs = (0..s.n_users)
        .map(|u| {
            s.irs_element_counts
                .iter()
                .enumerate()
                .map(|(m, &nm)| {
                    let mut rng = link_rng(s.rng_seed, u, Some(m));
                    cluster_channel(s, nm, &draw_clusters(s, s.comm_model.n_clusters_irs, &mut rng))
                })
                .collect()
        })
        .collect();
    CommChannels { h_direct, h_irs }
}

impl<T: Real> ChannelSet<T> {
    pub fn synthesize(s: &Scenario) -> Result<Self> {
        s.validate()?;
        let ang = s.angles()?;
        let delays = s.propagation_delays();
        let grid = s.velocity_grid();
        let dopplers = grid
            .iter()
            .map(|&v| s.doppler_frequencies(v))
            .collect::<Result<Vec<_>>>()?;
        let spacing = s.element_spacing_m();
        let dt = s.ofdm_symbol_s();
        let m_count = s.n_irs();
        let k_count = s.n_subcarriers;
        let g = &s.gains;

        let rf: Vec<f64> = (0..k_count).map(|k| s.carrier_hz + s.subcarrier_hz(k)).collect();
        let at = |theta: f64, k: usize| -> CVec<T> { ula_response(s.n_tx, theta, rf[k], spacing) };
        let ar = |theta: f64, k: usize| -> CVec<T> { ula_response(s.n_rx, theta, rf[k], spacing) };
        let bm = |m: usize, theta: f64, k: usize| -> CVec<T> {
            ula_response(s.irs_element_counts[m], theta, rf[k], spacing)
        };

        let a_dir: Vec<CMat<T>> = (0..k_count)
            .map(|k| outer(&ar(ang.target, k), &at(ang.target, k)))
            .collect();
        let paths: Vec<Vec<IrsPaths<T>>> = (0..m_count)
            .map(|m| {
                (0..k_count)
                    .map(|k| {
                        let b_t = bm(m, ang.target_at_irs[m], k);
                        let b_d = bm(m, ang.dfbs_at_irs[m], k);
                        IrsPaths {
                            e: outer(&ar(ang.target, k), &b_t),
                            d: outer(&ar(ang.irs[m], k), &b_d),
                            b: outer(&b_t, &at(ang.target, k)),
                            g: outer(&b_d, &at(ang.irs[m], k)),
                            w: outer(&b_t, &b_t),
                        }
                    })
                    .collect()
            })
            .collect();

        let doppler_phase = |f: f64| Complex64::from_polar(1.0, 2.0 * PI * f * dt);
        let gain_direct = dopplers
            .iter()
            .map(|ds| {
                (0..k_count)
                    .map(|k| {
                        c64(g.alpha_direct
                            * doppler_phase(ds.f_direct)
                            * delay_phase(rf[k], 2.0 * delays.tau_dt))
                    })
                    .collect()
            })
            .collect();
        let gain_irs = dopplers
            .iter()
            .map(|ds| {
                (0..k_count)
                    .map(|k| {
                        (0..m_count)
                            .map(|m| {
                                let ag = g.alpha_irs[m];
                                let d23 = delays.tau_dim[m] + delays.tau_tim[m] + delays.tau_dt;
                                let d4 = 2.0 * delays.tau_dim[m] + 2.0 * delays.tau_tim[m];
                                [
                                    c64(ag.path2 * doppler_phase(ds.f_path2[m]) * delay_phase(rf[k], d23)),
                                    c64(ag.path3 * doppler_phase(ds.f_path3[m]) * delay_phase(rf[k], d23)),
                                    c64(ag.path4 * doppler_phase(ds.f_path4[m]) * delay_phase(rf[k], d4)),
                                ]
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();

        let beta1: C<T> = c64(g.beta[0]);
        let clutter_dir = (0..k_count)
            .map(|k| {
                let mut acc = CMat::<T>::zeros(s.n_rx, s.n_tx);
                for &th in &ang.clutter {
                    acc += outer(&ar(th, k), &at(th, k));
                }
                acc * beta1
            })
            .collect();
        let mut ce = Vec::with_capacity(m_count);
        let mut cb = Vec::with_capacity(m_count);
        let mut cw = Vec::with_capacity(m_count);
        for m in 0..m_count {
            let nm = s.irs_element_counts[m];
            let (mut ev, mut bv, mut wv) = (Vec::new(), Vec::new(), Vec::new());
            for k in 0..k_count {
                let mut e = CMat::<T>::zeros(s.n_rx, nm);
                let mut b = CMat::<T>::zeros(nm, s.n_tx);
                let mut w = CMat::<T>::zeros(nm, nm);
                for (q, &th) in ang.clutter.iter().enumerate() {
                    let bq = bm(m, ang.clutter_at_irs[m][q], k);
                    e += outer(&ar(th, k), &bq);
                    b += outer(&bq, &at(th, k));
                    w += outer(&bq, &bq);
                }
                ev.push(e);
                bv.push(b);
                wv.push(w);
            }
            ce.push(ev);
            cb.push(bv);
            cw.push(wv);
        }

        Ok(ChannelSet {
            n_tx: s.n_tx,
            n_rx: s.n_rx,
            n_users: s.n_users,
            n_slices: s.n_doppler_slices,
            irs_sizes: s.irs_element_counts.clone(),
            subcarriers: (0..k_count).collect(),
            power: s.tx_power_per_subcarrier_w.iter().map(|&p| T::lit(p)).collect(),
            radar_noise_var: T::lit(s.radar_noise_var),
            comm_noise_var: T::lit(s.comm_noise_var),
            comm_sinr_threshold: T::lit(s.comm_sinr_threshold),
            radar: RadarPathMatrices {
                a_dir,
                paths,
                gain_direct,
                gain_irs,
            },
            clutter: ClutterMatrices {
                a_dir: clutter_dir,
                e: ce,
                b: cb,
                w: cw,
                beta: [c64(g.beta[1]), c64(g.beta[2]), c64(g.beta[3])],
            },
            comm: comm_channels(s),
        })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.power.len()
    }

    pub fn n_irs(&self) -> usize {
        self.irs_sizes.len()
    }

    /// Total number of reflecting elements, the length of `φ`.
    pub fn n_phases(&self) -> usize {
        self.irs_sizes.iter().sum()
    }

    /// Offset of IRS `m`'s block inside `φ`.
    pub fn irs_offset(&self, m: usize) -> usize {
        self.irs_sizes[..m].iter().sum()
    }

    /// Length of `f = [vec(F_1); ...; vec(F_K)]`.
    pub fn beamformer_len(&self) -> usize {
        self.n_subcarriers() * self.n_tx * self.n_users
    }

    /// Keeps only the IRSs listed in `keep`, in that order.
    pub fn select_irs(&self, keep: &[usize]) -> Self {
        let mut out = self.clone();
        out.irs_sizes = keep.iter().map(|&m| self.irs_sizes[m]).collect();
        out.radar.paths = keep.iter().map(|&m| self.radar.paths[m].clone()).collect();
        out.radar.gain_irs = self
            .radar
            .gain_irs
            .iter()
            .map(|per_k| {
                per_k
                    .iter()
                    .map(|per_m| keep.iter().map(|&m| per_m[m]).collect())
                    .collect()
            })
            .collect();
        out.clutter.e = keep.iter().map(|&m| self.clutter.e[m].clone()).collect();
        out.clutter.b = keep.iter().map(|&m| self.clutter.b[m].clone()).collect();
        out.clutter.w = keep.iter().map(|&m| self.clutter.w[m].clone()).collect();
        out.comm.h_irs = self
            .comm
            .h_irs
            .iter()
            .map(|per_m| keep.iter().map(|&m| per_m[m].clone()).collect())
            .collect();
        out
    }

    /// Keeps only the listed subcarriers (positions into the current set).
    pub fn select_subcarriers(&self, keep: &[usize]) -> Self {
        let pick = |v: &Vec<CMat<T>>| keep.iter().map(|&k| v[k].clone()).collect::<Vec<_>>();
        let mut out = self.clone();
        out.subcarriers = keep.iter().map(|&k| self.subcarriers[k]).collect();
        out.power = keep.iter().map(|&k| self.power[k]).collect();
        out.radar.a_dir = pick(&self.radar.a_dir);
        out.radar.paths = self
            .radar
            .paths
            .iter()
            .map(|per_k| keep.iter().map(|&k| per_k[k].clone()).collect())
            .collect();
        out.radar.gain_direct = self
            .radar
            .gain_direct
            .iter()
            .map(|per_k| keep.iter().map(|&k| per_k[k]).collect())
            .collect();
        out.radar.gain_irs = self
            .radar
            .gain_irs
            .iter()
            .map(|per_k| keep.iter().map(|&k| per_k[k].clone()).collect())
            .collect();
        out.clutter.a_dir = pick(&self.clutter.a_dir);
        out.clutter.e = self.clutter.e.iter().map(pick).collect();
        out.clutter.b = self.clutter.b.iter().map(pick).collect();
        out.clutter.w = self.clutter.w.iter().map(pick).collect();
        out.comm.h_direct = self
            .comm
            .h_direct
            .iter()
            .map(|per_k| keep.iter().map(|&k| per_k[k].clone()).collect())
            .collect();
        out.comm.h_irs = self
            .comm
            .h_irs
            .iter()
            .map(|per_m| {
                per_m
                    .iter()
                    .map(|per_k| keep.iter().map(|&k| per_k[k].clone()).collect())
                    .collect()
            })
            .collect();
        out
    }

    fn check_phases(&self, phi: &CVec<T>) -> Result<()> {
        if phi.len() != self.n_phases() {
            return Err(Error::Dimension(format!(
                "phase vector has {} entries, expected {}",
                phi.len(),
                self.n_phases()
            )));
        }
        Ok(())
    }

    /// `A_dir,k,p + A_ind,k,p(Φ)`.
    pub fn composite_radar_channel(&self, phi: &CVec<T>, k: usize, p: usize) -> Result<CMat<T>> {
        self.check_phases(phi)?;
        let mut h = &self.radar.a_dir[k] * self.radar.gain_direct[p][k];
        for m in 0..self.n_irs() {
            let ph = self.irs_phase_block(phi, m);
            let pm = &self.radar.paths[m][k];
            let [a2, a3, a4] = self.radar.gain_irs[p][k][m];
            let g_phi = scale_rows(&pm.g, &ph);
            h += (&pm.e * &g_phi) * a2;
            h += (&pm.d * scale_rows(&pm.b, &ph)) * a3;
            h += (&pm.d * scale_rows(&(&pm.w * &g_phi), &ph)) * a4;
        }
        Ok(h)
    }

    /// `Ã_dir,k + Ã_ind,k(Φ)`. Clutter is stationary, so there is no slice index.
    pub fn clutter_channel(&self, phi: &CVec<T>, k: usize) -> Result<CMat<T>> {
        self.check_phases(phi)?;
        let mut h = self.clutter.a_dir[k].clone();
        let [b2, b3, b4] = self.clutter.beta;
        for m in 0..self.n_irs() {
            let ph = self.irs_phase_block(phi, m);
            let pm = &self.radar.paths[m][k];
            let g_phi = scale_rows(&pm.g, &ph);
            h += (&self.clutter.e[m][k] * &g_phi) * b2;
            h += (&pm.d * scale_rows(&self.clutter.b[m][k], &ph)) * b3;
            h += (&pm.d * scale_rows(&(&self.clutter.w[m][k] * &g_phi), &ph)) * b4;
        }
        Ok(h)
    }

    /// Cascaded IRS channel of user `u` at subcarrier `k`: the stacked
    /// `diag(h_{u,m,k}) G_{m,k}`, so that the effective channel is
    /// `h_{u,k}^T + φ^T H_{u,k}`.
    pub fn cascaded_comm(&self, u: usize, k: usize) -> CMat<T> {
        let n = self.n_phases();
        let mut out = CMat::<T>::zeros(n, self.n_tx);
        for m in 0..self.n_irs() {
            let off = self.irs_offset(m);
            let hm = &self.comm.h_irs[u][m][k];
            let g = &self.radar.paths[m][k].g;
            for i in 0..self.irs_sizes[m] {
                for j in 0..self.n_tx {
                    out[(off + i, j)] = hm[i] * g[(i, j)];
                }
            }
        }
        out
    }

    /// Effective channel row `h_{u,k}^T + φ^T H_{u,k}` as a column vector.
    pub fn effective_comm(&self, phi: &CVec<T>, u: usize, k: usize) -> CVec<T> {
        let mut z = self.comm.h_direct[u][k].clone();
        if self.n_phases() > 0 {
            z += self.cascaded_comm(u, k).transpose() * phi;
        }
        z
    }

    pub fn irs_phase_block(&self, phi: &CVec<T>, m: usize) -> CVec<T> {
        phi.rows(self.irs_offset(m), self.irs_sizes[m]).into_owned()
    }
}

/// `diag(d) M`.
pub fn scale_rows<T: Real>(m: &CMat<T>, d: &CVec<T>) -> CMat<T> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= d[i];
    }
    out
}
