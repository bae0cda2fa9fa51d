//! Experiment orchestration: convergence studies, beampatterns, parameter
//! sweeps, wideband/narrowband tables and ROC curves, written as CSV files
//! plus a JSON manifest.

use crate::ao::{design_channels, run_variants, SolveReport, Variant};
use crate::channel::ChannelSet;
use crate::config::{Document, RawScenario};
use crate::detection::{default_thresholds, simulate_roc};
use crate::error::{Error, Result};
use crate::metrics::transmit_beampattern;
use crate::scalar::{from_db, C};
use crate::scenario::Scenario;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Convergence,
    Beampattern,
    Sweep,
    Table,
    Roc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Per-subcarrier transmit power, dBW.
    PowerDbw,
    /// Communications SINR threshold, dB.
    SinrThresholdDb,
    /// Transmit antennas.
    NTx,
    /// Elements per IRS (applied to every surface).
    IrsElements,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::PowerDbw => "power_dbw",
            SweepAxis::SinrThresholdDb => "sinr_threshold_db",
            SweepAxis::NTx => "n_tx",
            SweepAxis::IrsElements => "irs_elements",
        }
    }

    /// Returns `s` with this axis set to `value`.
    pub fn apply(&self, s: &Scenario, value: f64) -> Result<Scenario> {
        let mut out = s.clone();
        let count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::invalid("experiment.sweep.values", format!("{v} is not a positive integer")))
            }
        };
        match self {
            SweepAxis::PowerDbw => out.tx_power_per_subcarrier_w = vec![from_db(value); s.n_subcarriers],
            SweepAxis::SinrThresholdDb => out.comm_sinr_threshold = from_db(value),
            SweepAxis::NTx => out.n_tx = count(value)?,
            SweepAxis::IrsElements => {
                let n = count(value)?;
                out.irs_element_counts = vec![n; s.irs_positions.len()];
            }
        }
        out.validate()?;
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Variants to run; each kind has its own default list.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Monte-Carlo trials of the ROC experiment.
    #[serde(default = "default_n_mont")]
    pub n_mont: usize,
    /// Beampattern angle grid step in degrees over [-90, 90].
    #[serde(default = "default_angle_step")]
    pub angle_step_deg: f64,
    /// Transmit power change (dB) applied to every design before the
    /// Monte-Carlo trials; noise is unchanged.
    #[serde(default)]
    pub detection_power_offset_db: f64,
}

fn default_n_mont() -> usize {
    10_000
}

fn default_angle_step() -> f64 {
    0.5
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentSpec {
            kind,
            variants: Vec::new(),
            sweep: None,
            output_dir: None,
            seed: None,
            n_mont: default_n_mont(),
            angle_step_deg: default_angle_step(),
            detection_power_offset_db: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ExperimentKind::Sweep {
            let sw = self
                .sweep
                .as_ref()
                .ok_or_else(|| Error::invalid("experiment.sweep", "required for kind = \"sweep\""))?;
            if sw.values.is_empty() {
                return Err(Error::invalid("experiment.sweep.values", "must not be empty"));
            }
            if sw.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("experiment.sweep.values", "must be finite"));
            }
        }
        if self.n_mont == 0 {
            return Err(Error::invalid("experiment.n_mont", "must be >= 1"));
        }
        if !(self.angle_step_deg > 0.0 && self.angle_step_deg <= 90.0) {
            return Err(Error::invalid("experiment.angle_step_deg", "must be in (0, 90]"));
        }
        if !self.detection_power_offset_db.is_finite() {
            return Err(Error::invalid("experiment.detection_power_offset_db", "must be finite"));
        }
        Ok(())
    }

    /// The explicit variant list, or the kind's default.
    pub fn variant_list(&self) -> Vec<Variant> {
        if !self.variants.is_empty() {
            return self.variants.clone();
        }
        let parse = |names: &[&str]| names.iter().map(|n| n.parse().expect("built-in variant")).collect();
        match self.kind {
            ExperimentKind::Convergence => parse(&[
                "multi-irs",
                "multi-irs+random-phase",
                "single-irs",
                "single-irs+random-phase",
                "non-irs-dfrc",
                "non-irs-radar-only",
            ]),
            ExperimentKind::Table => parse(&["non-irs-dfrc", "single-irs", "multi-irs"]),
            ExperimentKind::Beampattern | ExperimentKind::Sweep => parse(&["multi-irs", "single-irs", "non-irs-dfrc"]),
            ExperimentKind::Roc => parse(&["multi-irs", "single-irs", "non-irs-dfrc", "non-irs-radar-only"]),
        }
    }
}

/// Files written by one experiment, relative to its output directory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    kind: ExperimentKind,
    seed: u64,
    scenario_sha256: String,
    variants: Vec<String>,
    files: &'a [String],
    document: &'a Document,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the scenario's canonical TOML form.
pub fn scenario_hash(s: &Scenario) -> String {
    let text = toml::to_string(&RawScenario::from_scenario(s)).expect("scenario serializes");
    hex(&Sha256::digest(text.as_bytes()))
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn csv<R: Serialize>(&mut self, name: &str, rows: &[R], header: &[&str]) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<V: Serialize>(&mut self, name: &str, value: &V) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        fs::write(self.dir.join(name), text + "\n")?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn file_stem(v: &Variant) -> String {
    v.to_string().replace('+', "_")
}

#[derive(Serialize)]
struct ConvergenceRow {
    variant: String,
    iter: usize,
    min_radar_sinr_db: f64,
    min_comm_sinr_db: f64,
    consensus_residual: f64,
    relative_step: f64,
}

#[derive(Serialize)]
struct DinkelbachRow {
    variant: String,
    outer: usize,
    iter: usize,
    lambda: f64,
    f_lambda: f64,
    min_radar_sinr_db: f64,
}

#[derive(Serialize)]
struct AdmmRow {
    variant: String,
    outer: usize,
    iter: usize,
    lambda: f64,
    consensus_residual: f64,
    min_radar_sinr_db: f64,
    min_comm_margin_db: f64,
}

#[derive(Serialize)]
struct SummaryRow {
    variant: String,
    min_radar_sinr_db: f64,
    radar_spread_db: f64,
    min_comm_sinr_db: f64,
    iterations: usize,
    termination: String,
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn summary_row(r: &SolveReport<f64>) -> SummaryRow {
    SummaryRow {
        variant: r.variant.to_string(),
        min_radar_sinr_db: r.final_metrics.min_radar_sinr_db,
        radar_spread_db: r.final_metrics.radar_spread_db(),
        min_comm_sinr_db: min_of(&r.final_metrics.comm_sinr_db),
        iterations: r.iterations.len(),
        termination: serde_json::to_value(r.termination)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
    }
}

const SUMMARY_HEADER: &[&str] = &[
    "variant",
    "min_radar_sinr_db",
    "radar_spread_db",
    "min_comm_sinr_db",
    "iterations",
    "termination",
];

fn write_reports(w: &mut Writer, reports: &[SolveReport<f64>]) -> Result<()> {
    for r in reports {
        w.json(&format!("report_{}.json", file_stem(&r.variant)), r)?;
    }
    let rows: Vec<_> = reports.iter().map(summary_row).collect();
    w.csv("summary.csv", &rows, SUMMARY_HEADER)
}

fn convergence(w: &mut Writer, reports: &[SolveReport<f64>]) -> Result<()> {
    let mut conv = Vec::new();
    let mut dk = Vec::new();
    let mut admm = Vec::new();
    for r in reports {
        let name = r.variant.to_string();
        conv.push(ConvergenceRow {
            variant: name.clone(),
            iter: 0,
            min_radar_sinr_db: r.initial.min_radar_sinr_db,
            min_comm_sinr_db: min_of(&r.initial.comm_sinr_db),
            consensus_residual: 0.0,
            relative_step: 0.0,
        });
        for it in &r.iterations {
            conv.push(ConvergenceRow {
                variant: name.clone(),
                iter: it.iter,
                min_radar_sinr_db: it.snapshot.min_radar_sinr_db,
                min_comm_sinr_db: min_of(&it.snapshot.comm_sinr_db),
                consensus_residual: it.consensus_residual,
                relative_step: it.relative_step,
            });
        }
        for (o, trace) in r.dinkelbach_traces.iter().enumerate() {
            for s in trace {
                dk.push(DinkelbachRow {
                    variant: name.clone(),
                    outer: o + 1,
                    iter: s.iter,
                    lambda: s.lambda,
                    f_lambda: s.f_lambda,
                    min_radar_sinr_db: s.min_sinr_db,
                });
            }
        }
        for (o, trace) in r.phase_traces.iter().enumerate() {
            for s in trace {
                admm.push(AdmmRow {
                    variant: name.clone(),
                    outer: o + 1,
                    iter: s.iter,
                    lambda: s.lambda,
                    consensus_residual: s.consensus_residual,
                    min_radar_sinr_db: s.min_sinr_db,
                    min_comm_margin_db: s.min_comm_margin_db,
                });
            }
        }
    }
    w.csv(
        "convergence.csv",
        &conv,
        &["variant", "iter", "min_radar_sinr_db", "min_comm_sinr_db", "consensus_residual", "relative_step"],
    )?;
    w.csv(
        "dinkelbach.csv",
        &dk,
        &["variant", "outer", "iter", "lambda", "f_lambda", "min_radar_sinr_db"],
    )?;
    w.csv(
        "admm.csv",
        &admm,
        &["variant", "outer", "iter", "lambda", "consensus_residual", "min_radar_sinr_db", "min_comm_margin_db"],
    )
}

#[derive(Serialize)]
struct BeampatternRow {
    variant: String,
    theta_deg: f64,
    subcarrier: usize,
    rf_hz: f64,
    gain: f64,
}

/// Transmit beampattern rows of one design over `[-90, 90]` degrees.
pub fn beampattern_rows(s: &Scenario, r: &SolveReport<f64>, step_deg: f64) -> Result<Vec<(f64, usize, f64, f64)>> {
    let n = (180.0 / step_deg).round() as usize;
    let degs: Vec<f64> = (0..=n).map(|i| -90.0 + i as f64 * step_deg).collect();
    let angles: Vec<f64> = degs.iter().map(|d| d.to_radians()).collect();
    let rf: Vec<f64> = (0..s.n_subcarriers).map(|k| s.carrier_hz + s.subcarrier_hz(k)).collect();
    let pattern = transmit_beampattern(&r.variables.beamformers, &angles, &rf, s.element_spacing_m())?;
    let mut rows = Vec::new();
    for (k, row) in pattern.iter().enumerate() {
        for (i, g) in row.iter().enumerate() {
            rows.push((degs[i], k, rf[k], *g));
        }
    }
    Ok(rows)
}

fn beampattern(w: &mut Writer, s: &Scenario, reports: &[SolveReport<f64>], step: f64) -> Result<()> {
    let mut rows = Vec::new();
    for r in reports {
        for (theta_deg, subcarrier, rf_hz, gain) in beampattern_rows(s, r, step)? {
            rows.push(BeampatternRow {
                variant: r.variant.to_string(),
                theta_deg,
                subcarrier,
                rf_hz,
                gain,
            });
        }
    }
    w.csv("beampattern.csv", &rows, &["variant", "theta_deg", "subcarrier", "rf_hz", "gain"])
}

#[derive(Serialize)]
struct SweepRow {
    axis: &'static str,
    value: f64,
    variant: String,
    min_radar_sinr_db: f64,
    min_comm_sinr_db: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct TableRow {
    system: String,
    beamforming: &'static str,
    min_radar_sinr_db: f64,
}

#[derive(Serialize)]
struct RocRow {
    gamma: f64,
    p_fa: f64,
    p_d: f64,
    n_mont: usize,
    variant: String,
}

fn solver_failure(context: &str, e: Error) -> Error {
    match e {
        Error::Solver(m) => Error::Solver(format!("{context}: {m}")),
        other => other,
    }
}

/// Runs `spec` and writes its files into `out_dir` (created if needed).
pub fn run_experiment(doc: &Document, spec: &ExperimentSpec, out_dir: &Path) -> Result<ExperimentOutput> {
    spec.validate()?;
    let scenario = doc.scenario.resolve()?;
    let mut solver = doc.solver.clone();
    if let Some(seed) = spec.seed {
        solver.seed = Some(seed);
    }
    solver.validate()?;
    let seed = solver.seed.unwrap_or(scenario.rng_seed);
    let variants = spec.variant_list();
    let mut w = Writer::new(out_dir)?;
    match spec.kind {
        ExperimentKind::Convergence => {
            let reports = run_variants::<f64>(&scenario, &variants, &solver).map_err(|e| solver_failure("convergence", e))?;
            write_reports(&mut w, &reports)?;
            convergence(&mut w, &reports)?;
        }
        ExperimentKind::Beampattern => {
            let reports = run_variants::<f64>(&scenario, &variants, &solver).map_err(|e| solver_failure("beampattern", e))?;
            write_reports(&mut w, &reports)?;
            beampattern(&mut w, &scenario, &reports, spec.angle_step_deg)?;
        }
        ExperimentKind::Sweep => {
            let sw = spec.sweep.as_ref().expect("validated");
            let points: Vec<(f64, Scenario)> = sw
                .values
                .iter()
                .map(|&v| Ok((v, sw.axis.apply(&scenario, v)?)))
                .collect::<Result<_>>()?;
            let results: Vec<Vec<SolveReport<f64>>> = points
                .par_iter()
                .map(|(v, s)| {
                    run_variants::<f64>(s, &variants, &solver)
                        .map_err(|e| solver_failure(&format!("{} = {v}", sw.axis.name()), e))
                })
                .collect::<Result<_>>()?;
            let mut rows = Vec::new();
            for ((v, _), reports) in points.iter().zip(&results) {
                for r in reports {
                    rows.push(SweepRow {
                        axis: sw.axis.name(),
                        value: *v,
                        variant: r.variant.to_string(),
                        min_radar_sinr_db: r.final_metrics.min_radar_sinr_db,
                        min_comm_sinr_db: min_of(&r.final_metrics.comm_sinr_db),
                        iterations: r.iterations.len(),
                    });
                }
            }
            w.csv(
                "sweep.csv",
                &rows,
                &["axis", "value", "variant", "min_radar_sinr_db", "min_comm_sinr_db", "iterations"],
            )?;
        }
        ExperimentKind::Table => {
            let mut all = Vec::new();
            for v in &variants {
                all.push(v.narrowband());
                all.push(v.wideband());
            }
            let reports = run_variants::<f64>(&scenario, &all, &solver).map_err(|e| solver_failure("table", e))?;
            write_reports(&mut w, &reports)?;
            let rows: Vec<TableRow> = reports
                .iter()
                .map(|r| TableRow {
                    system: r.variant.wideband().to_string(),
                    beamforming: if r.variant.narrowband { "narrowband" } else { "wideband" },
                    min_radar_sinr_db: r.final_metrics.min_radar_sinr_db,
                })
                .collect();
            w.csv("table.csv", &rows, &["system", "beamforming", "min_radar_sinr_db"])?;
        }
        ExperimentKind::Roc => {
            let full = ChannelSet::<f64>::synthesize(&scenario)?;
            let reports = run_variants::<f64>(&scenario, &variants, &solver).map_err(|e| solver_failure("roc", e))?;
            write_reports(&mut w, &reports)?;
            let thresholds = default_thresholds();
            let mut rows = Vec::new();
            for r in &reports {
                let ch = design_channels(&full, r.variant, &solver)?;
                let mut vars = r.variables.clone();
                let g = from_db(spec.detection_power_offset_db).sqrt();
                for f in vars.beamformers.iter_mut() {
                    *f *= C::new(g, 0.0);
                }
                let roc = simulate_roc(&vars, &ch, spec.n_mont, &thresholds, seed)?;
                for i in 0..roc.thresholds.len() {
                    rows.push(RocRow {
                        gamma: roc.thresholds[i],
                        p_fa: roc.p_fa[i],
                        p_d: roc.p_d[i],
                        n_mont: roc.n_mont,
                        variant: r.variant.to_string(),
                    });
                }
            }
            w.csv("roc.csv", &rows, &["gamma", "p_fa", "p_d", "n_mont", "variant"])?;
        }
    }
    let files = w.files.clone();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        kind: spec.kind,
        seed,
        scenario_sha256: scenario_hash(&scenario),
        variants: variants.iter().map(|v| v.to_string()).collect(),
        files: &files,
        document: doc,
    };
    w.json("manifest.json", &manifest)?;
    Ok(ExperimentOutput {
        dir: out_dir.to_path_buf(),
        files: w.files,
    })
}

#[derive(Serialize)]
struct ChannelRow {
    kind: &'static str,
    index_a: usize,
    index_b: usize,
    subcarrier: usize,
    row: usize,
    col: usize,
    re: f64,
    im: f64,
}

fn row_matrix(v: &crate::scalar::CVec<f64>) -> crate::scalar::CMat<f64> {
    crate::scalar::CMat::from_iterator(1, v.len(), v.iter().cloned())
}

/// Writes the communications channels and the composite radar/clutter
/// channels at phases `phi` as long-format CSV with `re,im` columns.
pub fn dump_channels(ch: &ChannelSet<f64>, phi: &crate::scalar::CVec<f64>, path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    let mut push_mat = |kind, a, b, k, m: &crate::scalar::CMat<f64>| {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                rows.push(ChannelRow {
                    kind,
                    index_a: a,
                    index_b: b,
                    subcarrier: k,
                    row: r,
                    col: c,
                    re: m[(r, c)].re,
                    im: m[(r, c)].im,
                });
            }
        }
    };
    for k in 0..ch.n_subcarriers() {
        for u in 0..ch.n_users {
            push_mat("comm_direct", u, 0, k, &row_matrix(&ch.comm.h_direct[u][k]));
            for m in 0..ch.n_irs() {
                push_mat("comm_irs", u, m, k, &row_matrix(&ch.comm.h_irs[u][m][k]));
            }
        }
        for p in 0..ch.n_slices {
            push_mat("radar", p, 0, k, &ch.composite_radar_channel(phi, k, p)?);
        }
        push_mat("clutter", 0, 0, k, &ch.clutter_channel(phi, k)?);
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
