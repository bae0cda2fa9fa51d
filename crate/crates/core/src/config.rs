//! Declarative config document: `[scenario]`, `[solver]` and `[experiment]`
//! sections in TOML. Every scenario key is optional and falls back to the
//! built-in defaults. Power and noise keys accept either a `_db` or a linear
//! spelling; decibels are converted here and nowhere else.

use crate::ao::SolverOptions;
use crate::error::{Error, Result};
use crate::experiment::ExperimentSpec;
use crate::scalar::{from_db, to_db};
use crate::scenario::{
    ChannelGains, CommModel, DopplerModel, IrsPathGains, Point, Scenario, VelocityBox,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A complex config value: either a bare real number or `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexValue {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexValue {
    fn get(self) -> Complex64 {
        match self {
            ComplexValue::Real(r) => Complex64::new(r, 0.0),
            ComplexValue::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

impl From<Complex64> for ComplexValue {
    fn from(z: Complex64) -> Self {
        ComplexValue::Pair([z.re, z.im])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn expand(&self, n: usize) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone(); n],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawIrsGains {
    pub path2: ComplexValue,
    pub path3: ComplexValue,
    pub path4: ComplexValue,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGains {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_direct: Option<ComplexValue>,
    /// One entry per IRS, or a single entry applied to every IRS.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_irs: Option<OneOrMany<RawIrsGains>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<[ComplexValue; 4]>,
}

/// The `[scenario]` section as written by a user.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dfbs_position: Option<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_position: Option<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clutter_positions: Option<Vec<Point>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub irs_positions: Option<Vec<Point>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub irs_element_counts: Option<OneOrMany<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub irs_broadside_deg: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_tx: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_rx: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_users: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub carrier_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subcarrier_step_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_subcarriers: Option<usize>,
    /// Derived (`1/Δf`); accepted only when consistent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ofdm_symbol_s: Option<f64>,
    /// Derived (`c / 2 f_max`); accepted only when consistent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub element_spacing_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_power_dbw: Option<OneOrMany<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_power_w: Option<OneOrMany<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radar_noise_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radar_noise_var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comm_noise_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comm_noise_var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comm_sinr_threshold_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comm_sinr_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub velocity_box: Option<VelocityBox>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_doppler_slices: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub doppler_model: Option<DopplerModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comm_model: Option<CommModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gains: Option<RawGains>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    #[serde(default)]
    pub scenario: RawScenario,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSpec>,
}

fn pick_db(
    db: Option<f64>,
    lin: Option<f64>,
    db_name: &str,
    lin_name: &str,
    default_db: f64,
) -> Result<f64> {
    match (db, lin) {
        (Some(_), Some(_)) => Err(Error::invalid(
            lin_name,
            format!("conflicts with `{db_name}`; give only one"),
        )),
        (Some(d), None) => Ok(from_db(d)),
        (None, Some(l)) => Ok(l),
        (None, None) => Ok(from_db(default_db)),
    }
}

fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

impl RawScenario {
    /// Applies defaults, converts units and validates.
    pub fn resolve(&self) -> Result<Scenario> {
        let irs_positions = self
            .irs_positions
            .clone()
            .unwrap_or_else(|| vec![[2500.0, 2500.0], [-2500.0, 2500.0]]);
        let m = irs_positions.len();
        let n_subcarriers = self.n_subcarriers.unwrap_or(32);
        let irs_element_counts = self
            .irs_element_counts
            .as_ref()
            .map(|c| c.expand(m))
            .unwrap_or_else(|| vec![20; m]);
        let tx_power_per_subcarrier_w = match (&self.tx_power_dbw, &self.tx_power_w) {
            (Some(_), Some(_)) => {
                return Err(Error::invalid("tx_power_w", "conflicts with `tx_power_dbw`; give only one"))
            }
            (Some(d), None) => d.expand(n_subcarriers).into_iter().map(from_db).collect(),
            (None, Some(l)) => l.expand(n_subcarriers),
            (None, None) => vec![from_db(1.0); n_subcarriers],
        };
        let gains = self.gains.clone().unwrap_or_default();
        let default_irs = IrsPathGains {
            path2: Complex64::new(0.3, 0.0),
            path3: Complex64::new(0.3, 0.0),
            path4: Complex64::new(0.3, 0.0),
        };
        let alpha_irs = match &gains.alpha_irs {
            None => vec![default_irs; m],
            Some(g) => g
                .expand(m)
                .into_iter()
                .map(|r| IrsPathGains {
                    path2: r.path2.get(),
                    path3: r.path3.get(),
                    path4: r.path4.get(),
                })
                .collect(),
        };
        let beta = gains
            .beta
            .map(|b| [b[0].get(), b[1].get(), b[2].get(), b[3].get()])
            .unwrap_or([
                Complex64::new(1.0, 0.0),
                Complex64::new(0.3, 0.0),
                Complex64::new(0.3, 0.0),
                Complex64::new(0.3, 0.0),
            ]);
        let range = 5000.0;
        let clutter_default = vec![
            [range * 20f64.to_radians().sin(), range * 20f64.to_radians().cos()],
            [-range * 20f64.to_radians().sin(), range * 20f64.to_radians().cos()],
        ];
        let s = Scenario {
            dfbs_position: self.dfbs_position.unwrap_or([0.0, 0.0]),
            target_position: self.target_position.unwrap_or([0.0, 5000.0]),
            clutter_positions: self.clutter_positions.clone().unwrap_or(clutter_default),
            irs_positions,
            irs_element_counts,
            irs_broadside_deg: self.irs_broadside_deg.clone(),
            n_tx: self.n_tx.unwrap_or(6),
            n_rx: self.n_rx.unwrap_or(4),
            n_users: self.n_users.unwrap_or(2),
            carrier_hz: self.carrier_hz.unwrap_or(10e9),
            subcarrier_step_hz: self.subcarrier_step_hz.unwrap_or(20e6),
            n_subcarriers,
            tx_power_per_subcarrier_w,
            radar_noise_var: pick_db(
                self.radar_noise_db,
                self.radar_noise_var,
                "radar_noise_db",
                "radar_noise_var",
                5.0,
            )?,
            comm_noise_var: pick_db(
                self.comm_noise_db,
                self.comm_noise_var,
                "comm_noise_db",
                "comm_noise_var",
                -5.0,
            )?,
            comm_sinr_threshold: pick_db(
                self.comm_sinr_threshold_db,
                self.comm_sinr_threshold,
                "comm_sinr_threshold_db",
                "comm_sinr_threshold",
                10.0,
            )?,
            velocity_box: self.velocity_box.unwrap_or(VelocityBox {
                vx: [100.0, 500.0],
                vy: [10.0, 50.0],
            }),
            n_doppler_slices: self.n_doppler_slices.unwrap_or(5),
            gains: ChannelGains {
                alpha_direct: gains
                    .alpha_direct
                    .map(ComplexValue::get)
                    .unwrap_or(Complex64::new(1.0, 0.0)),
                alpha_irs,
                beta,
            },
            comm_model: self.comm_model.unwrap_or_default(),
            doppler_model: self.doppler_model.unwrap_or_default(),
            rng_seed: self.rng_seed.unwrap_or(2023),
        };
        s.validate()?;
        if let Some(dt) = self.ofdm_symbol_s {
            if !close_rel(dt * s.subcarrier_step_hz, 1.0, 1e-12) {
                return Err(Error::invalid(
                    "ofdm_symbol_s",
                    format!(
                        "must equal 1/subcarrier_step_hz = {} (got {dt})",
                        s.ofdm_symbol_s()
                    ),
                ));
            }
        }
        if let Some(d) = self.element_spacing_m {
            if !close_rel(d, s.element_spacing_m(), 1e-12) {
                return Err(Error::invalid(
                    "element_spacing_m",
                    format!(
                        "must equal c/(2 f_max) = {} (got {d})",
                        s.element_spacing_m()
                    ),
                ));
            }
        }
        Ok(s)
    }

    /// Fully explicit linear-scale form of a scenario, including the
    /// derived keys for reference.
    pub fn from_scenario(s: &Scenario) -> RawScenario {
        RawScenario {
            dfbs_position: Some(s.dfbs_position),
            target_position: Some(s.target_position),
            clutter_positions: Some(s.clutter_positions.clone()),
            irs_positions: Some(s.irs_positions.clone()),
            irs_element_counts: Some(OneOrMany::Many(s.irs_element_counts.clone())),
            irs_broadside_deg: s.irs_broadside_deg.clone(),
            n_tx: Some(s.n_tx),
            n_rx: Some(s.n_rx),
            n_users: Some(s.n_users),
            carrier_hz: Some(s.carrier_hz),
            subcarrier_step_hz: Some(s.subcarrier_step_hz),
            n_subcarriers: Some(s.n_subcarriers),
            ofdm_symbol_s: Some(s.ofdm_symbol_s()),
            element_spacing_m: Some(s.element_spacing_m()),
            tx_power_dbw: None,
            tx_power_w: Some(OneOrMany::Many(s.tx_power_per_subcarrier_w.clone())),
            radar_noise_db: None,
            radar_noise_var: Some(s.radar_noise_var),
            comm_noise_db: None,
            comm_noise_var: Some(s.comm_noise_var),
            comm_sinr_threshold_db: None,
            comm_sinr_threshold: Some(s.comm_sinr_threshold),
            velocity_box: Some(s.velocity_box),
            n_doppler_slices: Some(s.n_doppler_slices),
            doppler_model: Some(s.doppler_model),
            rng_seed: Some(s.rng_seed),
            comm_model: Some(s.comm_model),
            gains: Some(RawGains {
                alpha_direct: Some(s.gains.alpha_direct.into()),
                alpha_irs: Some(OneOrMany::Many(
                    s.gains
                        .alpha_irs
                        .iter()
                        .map(|g| RawIrsGains {
                            path2: g.path2.into(),
                            path3: g.path3.into(),
                            path4: g.path4.into(),
                        })
                        .collect(),
                )),
                beta: Some(s.gains.beta.map(ComplexValue::from)),
            }),
        }
    }
}

pub fn parse_document(text: &str) -> Result<Document> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

/// Parses a config document and returns its validated scenario.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    parse_document(text)?.scenario.resolve()
}

/// The built-in scenario (all keys defaulted).
pub fn default_scenario() -> Scenario {
    RawScenario::default()
        .resolve()
        .expect("built-in defaults are valid")
}

pub fn scenario_to_toml(s: &Scenario) -> String {
    let doc = Document {
        scenario: RawScenario::from_scenario(s),
        solver: SolverOptions::default(),
        experiment: None,
    };
    document_to_toml(&doc)
}

pub fn document_to_toml(doc: &Document) -> String {
    toml::to_string(doc).expect("config document serializes")
}

/// Human-readable summary of the scale-converted noise and power levels.
pub fn describe_levels(s: &Scenario) -> String {
    format!(
        "P_k = {:.3} dBW, sigma_R^2 = {:.3} dB, sigma_C^2 = {:.3} dB, xi = {:.3} dB",
        to_db(s.tx_power_per_subcarrier_w[0]),
        to_db(s.radar_noise_var),
        to_db(s.comm_noise_var),
        to_db(s.comm_sinr_threshold)
    )
}
