//! Scene geometry, waveform parameters and the deterministic delay/Doppler
//! bookkeeping.
//!
//! All quantities are linear-scale SI values. Decibel inputs are converted
//! exactly once, when a config document is parsed (see [`crate::config`]).

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Speed of light used throughout, m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

pub type Point = [f64; 2];

/// Which variant of the per-path Doppler formulas to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DopplerModel {
    /// Direct path uses the doubled DFBS-target projection, paths 2 and 3
    /// share one expression and path 4 projects onto the DFBS-IRS line.
    #[default]
    Printed,
    /// Path 4 uses the IRS-target line twice (physically consistent
    /// monostatic bounce via the IRS).
    Corrected,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityBox {
    /// Half-open interval `(lo, hi]` for `v_x`, m/s.
    pub vx: [f64; 2],
    /// Half-open interval `(lo, hi]` for `v_y`, m/s.
    pub vy: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IrsPathGains {
    pub path2: Complex64,
    pub path3: Complex64,
    pub path4: Complex64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelGains {
    /// Direct target path.
    pub alpha_direct: Complex64,
    /// Per-IRS target path gains for the three indirect paths.
    pub alpha_irs: Vec<IrsPathGains>,
    /// Clutter gains: direct, then the three indirect paths.
    pub beta: [Complex64; 4],
}

/// Parameters of the clustered wideband communications channel model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommModel {
    pub n_clusters: usize,
    pub n_clusters_irs: usize,
    pub rolloff: f64,
    pub sample_period: f64,
}

impl Default for CommModel {
    fn default() -> Self {
        CommModel {
            n_clusters: 15,
            n_clusters_irs: 15,
            rolloff: 0.25,
            sample_period: 1.0,
        }
    }
}

/// A fully validated scene. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub dfbs_position: Point,
    pub target_position: Point,
    pub clutter_positions: Vec<Point>,
    pub irs_positions: Vec<Point>,
    pub irs_element_counts: Vec<usize>,
    /// Broadside direction of each IRS in degrees (clockwise from +y). `None`
    /// points every IRS along the bisector of its DFBS and target lines.
    pub irs_broadside_deg: Option<Vec<f64>>,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_users: usize,
    pub carrier_hz: f64,
    pub subcarrier_step_hz: f64,
    pub n_subcarriers: usize,
    pub tx_power_per_subcarrier_w: Vec<f64>,
    pub radar_noise_var: f64,
    pub comm_noise_var: f64,
    pub comm_sinr_threshold: f64,
    pub velocity_box: VelocityBox,
    pub n_doppler_slices: usize,
    pub gains: ChannelGains,
    pub comm_model: CommModel,
    pub doppler_model: DopplerModel,
    pub rng_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelaySet {
    pub tau_dt: f64,
    pub tau_dim: Vec<f64>,
    pub tau_tim: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DopplerSet {
    pub f_direct: f64,
    pub f_path2: Vec<f64>,
    pub f_path3: Vec<f64>,
    pub f_path4: Vec<f64>,
}

/// Angles (radians, broadside referenced, clockwise positive) of every
/// line of sight the channel model needs.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneAngles {
    pub target: f64,
    pub clutter: Vec<f64>,
    pub irs: Vec<f64>,
    pub target_at_irs: Vec<f64>,
    pub dfbs_at_irs: Vec<f64>,
    /// `clutter_at_irs[m][q]`.
    pub clutter_at_irs: Vec<Vec<f64>>,
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Bearing of `d` in degrees-free radians, clockwise from +y.
fn bearing(d: Point) -> f64 {
    d[0].atan2(d[1])
}

fn wrap(theta: f64) -> f64 {
    let mut t = theta;
    while t > PI {
        t -= 2.0 * PI;
    }
    while t <= -PI {
        t += 2.0 * PI;
    }
    t
}

impl Scenario {
    pub fn n_irs(&self) -> usize {
        self.irs_positions.len()
    }

    pub fn total_irs_elements(&self) -> usize {
        self.irs_element_counts.iter().sum()
    }

    /// OFDM symbol duration without cyclic prefix, `1/Δf`.
    pub fn ofdm_symbol_s(&self) -> f64 {
        1.0 / self.subcarrier_step_hz
    }

    /// Highest RF frequency, `f_c + (K-1) Δf`.
    pub fn f_max(&self) -> f64 {
        self.carrier_hz + (self.n_subcarriers as f64 - 1.0) * self.subcarrier_step_hz
    }

    /// Half wavelength at the highest frequency; shared by all arrays.
    pub fn element_spacing_m(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.f_max())
    }

    /// Baseband frequency of subcarrier `k` (zero based), `k Δf`.
    pub fn subcarrier_hz(&self, k: usize) -> f64 {
        k as f64 * self.subcarrier_step_hz
    }

    /// Checks every scene invariant; called by all constructors.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::invalid(name, "must be >= 1"))
            } else {
                Ok(())
            }
        };
        positive("n_tx", self.n_tx)?;
        positive("n_rx", self.n_rx)?;
        positive("n_users", self.n_users)?;
        positive("n_subcarriers", self.n_subcarriers)?;
        positive("n_doppler_slices", self.n_doppler_slices)?;
        let finite_pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be finite and > 0 (got {v})")))
            }
        };
        finite_pos("carrier_hz", self.carrier_hz)?;
        finite_pos("subcarrier_step_hz", self.subcarrier_step_hz)?;
        finite_pos("radar_noise_var", self.radar_noise_var)?;
        finite_pos("comm_noise_var", self.comm_noise_var)?;
        finite_pos("comm_sinr_threshold", self.comm_sinr_threshold)?;
        if self.tx_power_per_subcarrier_w.len() != self.n_subcarriers {
            return Err(Error::invalid(
                "tx_power_per_subcarrier_w",
                format!(
                    "must have n_subcarriers = {} entries (got {})",
                    self.n_subcarriers,
                    self.tx_power_per_subcarrier_w.len()
                ),
            ));
        }
        for &p in &self.tx_power_per_subcarrier_w {
            finite_pos("tx_power_per_subcarrier_w", p)?;
        }
        let m = self.irs_positions.len();
        if self.irs_element_counts.len() != m {
            return Err(Error::invalid(
                "irs_element_counts",
                format!("must have one entry per IRS ({m})"),
            ));
        }
        if self.irs_element_counts.iter().any(|&n| n == 0) {
            return Err(Error::invalid("irs_element_counts", "entries must be >= 1"));
        }
        if self.gains.alpha_irs.len() != m {
            return Err(Error::invalid(
                "gains.irs",
                format!("must have one entry per IRS ({m})"),
            ));
        }
        if let Some(b) = &self.irs_broadside_deg {
            if b.len() != m {
                return Err(Error::invalid(
                    "irs_broadside_deg",
                    format!("must have one entry per IRS ({m})"),
                ));
            }
        }
        let all_points = std::iter::once(&self.dfbs_position)
            .chain(std::iter::once(&self.target_position))
            .chain(self.clutter_positions.iter())
            .chain(self.irs_positions.iter());
        for p in all_points {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid("positions", "coordinates must be finite"));
            }
        }
        for (name, iv) in [("velocity_box.vx", self.velocity_box.vx), ("velocity_box.vy", self.velocity_box.vy)] {
            if !(iv[0].is_finite() && iv[1].is_finite() && iv[1] > iv[0]) {
                return Err(Error::invalid(name, "must be a finite interval (lo, hi] with hi > lo"));
            }
        }
        let cm = &self.comm_model;
        positive("comm_model.n_clusters", cm.n_clusters)?;
        positive("comm_model.n_clusters_irs", cm.n_clusters_irs)?;
        if !(0.0..=1.0).contains(&cm.rolloff) {
            return Err(Error::invalid("comm_model.rolloff", "must lie in [0, 1]"));
        }
        finite_pos("comm_model.sample_period", cm.sample_period)?;
        Ok(())
    }

    /// Uniform upper-inclusive sampling of the velocity box: point `j`
    /// (1-based) is `lo + j (hi - lo) / P` on both axes.
    pub fn velocity_grid(&self) -> Vec<Point> {
        let p = self.n_doppler_slices;
        let [xl, xh] = self.velocity_box.vx;
        let [yl, yh] = self.velocity_box.vy;
        (1..=p)
            .map(|j| {
                let frac = j as f64 / p as f64;
                [xl + frac * (xh - xl), yl + frac * (yh - yl)]
            })
            .collect()
    }

    pub fn propagation_delays(&self) -> DelaySet {
        let pd = self.dfbs_position;
        let pt = self.target_position;
        DelaySet {
            tau_dt: norm(sub(pt, pd)) / SPEED_OF_LIGHT,
            tau_dim: self
                .irs_positions
                .iter()
                .map(|&pi| norm(sub(pd, pi)) / SPEED_OF_LIGHT)
                .collect(),
            tau_tim: self
                .irs_positions
                .iter()
                .map(|&pi| norm(sub(pt, pi)) / SPEED_OF_LIGHT)
                .collect(),
        }
    }

    /// Per-path Doppler frequencies for target velocity `v`.
    pub fn doppler_frequencies(&self, v: Point) -> Result<DopplerSet> {
        let pd = self.dfbs_position;
        let pt = self.target_position;
        let scale = self.carrier_hz / SPEED_OF_LIGHT;
        let proj = |a: Point, b: Point, what: &str| -> Result<f64> {
            let d = sub(a, b);
            let n = norm(d);
            if n == 0.0 {
                return Err(Error::DegenerateGeometry(format!("{what} has zero length")));
            }
            Ok(dot(v, d) / n)
        };
        let dt = proj(pt, pd, "target-DFBS line")?;
        let f_direct = scale * (dt + dt);
        let mut f_path2 = Vec::with_capacity(self.n_irs());
        let mut f_path4 = Vec::with_capacity(self.n_irs());
        for (m, &pi) in self.irs_positions.iter().enumerate() {
            let ti = proj(pt, pi, &format!("target-IRS {m} line"))?;
            f_path2.push(scale * (dt + ti));
            let f4 = match self.doppler_model {
                DopplerModel::Printed => {
                    let di = proj(pd, pi, &format!("DFBS-IRS {m} line"))?;
                    scale * (di + di)
                }
                DopplerModel::Corrected => scale * (ti + ti),
            };
            f_path4.push(f4);
        }
        Ok(DopplerSet {
            f_direct,
            f_path3: f_path2.clone(),
            f_path2,
            f_path4,
        })
    }

    fn irs_broadside(&self, m: usize) -> f64 {
        match &self.irs_broadside_deg {
            Some(b) => b[m].to_radians(),
            None => {
                let pi = self.irs_positions[m];
                let to_d = sub(self.dfbs_position, pi);
                let to_t = sub(self.target_position, pi);
                let (nd, nt) = (norm(to_d), norm(to_t));
                if nd == 0.0 || nt == 0.0 {
                    return 0.0;
                }
                let bis = [to_d[0] / nd + to_t[0] / nt, to_d[1] / nd + to_t[1] / nt];
                if norm(bis) < 1e-12 {
                    bearing(to_d)
                } else {
                    bearing(bis)
                }
            }
        }
    }

    /// Line-of-sight angles for all arrays. The DFBS arrays face +y.
    pub fn angles(&self) -> Result<SceneAngles> {
        let pd = self.dfbs_position;
        let pt = self.target_position;
        let from = |origin: Point, to: Point, broadside: f64, what: &str| -> Result<f64> {
            let d = sub(to, origin);
            if norm(d) == 0.0 {
                return Err(Error::DegenerateGeometry(format!("{what} colocated")));
            }
            Ok(wrap(bearing(d) - broadside))
        };
        let target = from(pd, pt, 0.0, "target and DFBS")?;
        let clutter = self
            .clutter_positions
            .iter()
            .enumerate()
            .map(|(q, &c)| from(pd, c, 0.0, &format!("clutter {q} and DFBS")))
            .collect::<Result<Vec<_>>>()?;
        let mut irs = Vec::new();
        let mut target_at_irs = Vec::new();
        let mut dfbs_at_irs = Vec::new();
        let mut clutter_at_irs = Vec::new();
        for (m, &pi) in self.irs_positions.iter().enumerate() {
            let bs = self.irs_broadside(m);
            irs.push(from(pd, pi, 0.0, &format!("IRS {m} and DFBS"))?);
            target_at_irs.push(from(pi, pt, bs, &format!("target and IRS {m}"))?);
            dfbs_at_irs.push(from(pi, pd, bs, &format!("DFBS and IRS {m}"))?);
            clutter_at_irs.push(
                self.clutter_positions
                    .iter()
                    .enumerate()
                    .map(|(q, &c)| from(pi, c, bs, &format!("clutter {q} and IRS {m}")))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(SceneAngles {
            target,
            clutter,
            irs,
            target_at_irs,
            dfbs_at_irs,
            clutter_at_irs,
        })
    }

    /// Same scene restricted to the IRSs listed in `keep` (original order).
    pub fn with_irs_subset(&self, keep: &[usize]) -> Scenario {
        let mut s = self.clone();
        s.irs_positions = keep.iter().map(|&m| self.irs_positions[m]).collect();
        s.irs_element_counts = keep.iter().map(|&m| self.irs_element_counts[m]).collect();
        s.gains.alpha_irs = keep.iter().map(|&m| self.gains.alpha_irs[m]).collect();
        s.irs_broadside_deg = self
            .irs_broadside_deg
            .as_ref()
            .map(|b| keep.iter().map(|&m| b[m]).collect());
        s
    }
}
