//! Alternating maximization over the filter bank, the wideband beamformers
//! and the IRS phases, with a monotone acceptance safeguard per block.

use crate::beamformer::{comm_feasibility_phase, BeamformerSubproblem, DinkelbachStep};
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::filterbank::solve_filterbank;
use crate::metrics::{self, lift_beamformer_forms, DesignVariables};
use crate::phase::{cadmm_solve, modulus_error, CadmmStep, PhaseOptions, StepSchedule};
use crate::qcqp::IpmOptions;
use crate::scalar::{cis64, cplx, norm2, to_db, CMat, CVec, Real, C};
use crate::scenario::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

/// Stream id of the initialization RNG (channel draws use small ids).
const INIT_STREAM: u64 = 1 << 62;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IrsMode {
    Multi,
    Single,
    None,
}

/// A system configuration to design: which IRSs are present, whether the
/// communications constraints apply, whether phases are optimized and
/// whether the beamformer is frequency independent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Variant {
    pub irs: IrsMode,
    pub radar_only: bool,
    pub random_phase: bool,
    pub narrowband: bool,
}

impl Variant {
    pub const MULTI_IRS: Variant = Variant {
        irs: IrsMode::Multi,
        radar_only: false,
        random_phase: false,
        narrowband: false,
    };

    pub fn comm_enabled(&self) -> bool {
        !self.radar_only
    }

    pub fn optimizes_phases(&self) -> bool {
        !self.random_phase && self.irs != IrsMode::None
    }

    pub fn narrowband(mut self) -> Self {
        self.narrowband = true;
        self
    }

    pub fn wideband(mut self) -> Self {
        self.narrowband = false;
        self
    }
}

impl Default for Variant {
    fn default() -> Self {
        Variant::MULTI_IRS
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut v = Variant::MULTI_IRS;
        let mut base = None;
        for tok in s.split('+').map(str::trim) {
            let set_base = |b: &mut Option<IrsMode>, m| {
                if b.is_some() {
                    Err(Error::invalid("variant", format!("`{s}` names more than one IRS configuration")))
                } else {
                    *b = Some(m);
                    Ok(())
                }
            };
            match tok {
                "multi-irs" => set_base(&mut base, IrsMode::Multi)?,
                "single-irs" => set_base(&mut base, IrsMode::Single)?,
                "non-irs-dfrc" | "non-irs" => set_base(&mut base, IrsMode::None)?,
                "non-irs-radar-only" => {
                    set_base(&mut base, IrsMode::None)?;
                    v.radar_only = true;
                }
                "radar-only" => v.radar_only = true,
                "random-phase" => v.random_phase = true,
                "narrowband" => v.narrowband = true,
                "wideband" => v.narrowband = false,
                other => {
                    return Err(Error::invalid(
                        "variant",
                        format!("unknown variant `{other}` (expected multi-irs, single-irs, non-irs-dfrc, non-irs-radar-only, random-phase, narrowband, radar-only)"),
                    ))
                }
            }
        }
        v.irs = base.unwrap_or(IrsMode::Multi);
        if v.random_phase && v.irs == IrsMode::None {
            return Err(Error::invalid("variant", "random-phase needs an IRS configuration"));
        }
        Ok(v)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match (self.irs, self.radar_only) {
            (IrsMode::Multi, _) => "multi-irs",
            (IrsMode::Single, _) => "single-irs",
            (IrsMode::None, false) => "non-irs-dfrc",
            (IrsMode::None, true) => "non-irs-radar-only",
        };
        f.write_str(base)?;
        if self.radar_only && self.irs != IrsMode::None {
            f.write_str("+radar-only")?;
        }
        if self.random_phase {
            f.write_str("+random-phase")?;
        }
        if self.narrowband {
            f.write_str("+narrowband")?;
        }
        Ok(())
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub variant: Variant,
    /// `ζ_3 = outer_tol · ||f||^2`.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Seed of the random initialization; the scenario seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `ζ_1`.
    pub dinkelbach_tol: f64,
    /// `T_1`.
    pub dinkelbach_max_iter: usize,
    pub feasibility_max_iter: usize,
    /// Index of the surface kept by single-IRS variants.
    pub single_irs_index: usize,
    pub ipm: IpmOptions,
    pub phase: PhaseOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            variant: Variant::MULTI_IRS,
            outer_tol: 1e-4,
            max_outer: 30,
            seed: None,
            dinkelbach_tol: 1e-4,
            dinkelbach_max_iter: 20,
            feasibility_max_iter: 50,
            single_irs_index: 0,
            ipm: IpmOptions::default(),
            phase: PhaseOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, "must be finite and > 0"))
            }
        };
        if self.max_outer == 0 {
            return Err(Error::invalid("solver.max_outer", "must be >= 1"));
        }
        positive("solver.outer_tol", self.outer_tol)?;
        positive("solver.dinkelbach_tol", self.dinkelbach_tol)?;
        positive("solver.ipm.tol", self.ipm.tol)?;
        positive("solver.phase.rho", self.phase.rho)?;
        positive("solver.phase.rho_w", self.phase.rho_w)?;
        positive("solver.phase.tol_per_element", self.phase.tol_per_element)?;
        positive("solver.phase.step_decay", self.phase.step_decay)?;
        match self.phase.step {
            crate::phase::StepRule::Fixed { alpha } => positive("solver.phase.step.alpha", alpha)?,
            crate::phase::StepRule::MaxRotation { radians } => positive("solver.phase.step.radians", radians)?,
        }
        if self.dinkelbach_max_iter == 0 {
            return Err(Error::invalid("solver.dinkelbach_max_iter", "must be >= 1"));
        }
        Ok(())
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        SolverOptions {
            variant,
            ..self.clone()
        }
    }
}

/// Restricts a full channel set to the surfaces present in `variant`.
pub fn design_channels<T: Real>(full: &ChannelSet<T>, variant: Variant, opts: &SolverOptions) -> Result<ChannelSet<T>> {
    Ok(match variant.irs {
        IrsMode::Multi => full.clone(),
        IrsMode::Single => {
            if opts.single_irs_index >= full.n_irs() {
                return Err(Error::invalid(
                    "solver.single_irs_index",
                    format!("{} but the scenario has {} IRS", opts.single_irs_index, full.n_irs()),
                ));
            }
            full.select_irs(&[opts.single_irs_index])
        }
        IrsMode::None => full.select_irs(&[]),
    })
}

fn gaussian<T: Real, R: Rng>(rng: &mut R) -> C<T> {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    cplx(T::lit(re * std::f64::consts::FRAC_1_SQRT_2), T::lit(im * std::f64::consts::FRAC_1_SQRT_2))
}

/// Random starting point on the full scenario: Gaussian `F_k` scaled to
/// exactly `P_k`, uniform phases and unit-norm Gaussian filters.
pub fn initialize<T: Real>(ch: &ChannelSet<T>, seed: u64) -> DesignVariables<T> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let beamformers = (0..ch.n_subcarriers())
        .map(|k| {
            let mut fk = CMat::<T>::from_fn(ch.n_tx, ch.n_users, |_, _| gaussian(&mut rng));
            let norm = fk.norm_squared();
            if norm > T::zero() {
                fk *= C::new((ch.power[k] / norm).sqrt(), T::zero());
            }
            fk
        })
        .collect();
    let phases = CVec::<T>::from_fn(ch.n_phases(), |_, _| {
        let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        cis64(t)
    });
    let filters = (0..ch.n_slices)
        .map(|_| {
            let w = CVec::<T>::from_fn(ch.n_rx, |_, _| gaussian(&mut rng));
            let n = norm2(&w).sqrt();
            w / C::new(n, T::zero())
        })
        .collect();
    DesignVariables {
        beamformers,
        phases,
        filters,
    }
}

/// Keeps the phases of the surfaces in `keep` (in order).
pub fn select_phases<T: Real>(ch: &ChannelSet<T>, phases: &CVec<T>, keep: &[usize]) -> CVec<T> {
    let mut out = Vec::new();
    for &m in keep {
        let off = ch.irs_offset(m);
        out.extend(phases.rows(off, ch.irs_sizes[m]).iter().copied());
    }
    CVec::from_vec(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BlockAcceptance {
    pub filters: bool,
    pub beamformers: bool,
    pub phases: bool,
}

/// Metrics of one iterate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Snapshot {
    pub min_radar_sinr_db: f64,
    pub radar_sinr_db: Vec<f64>,
    pub comm_sinr_db: Vec<f64>,
    pub power_w: Vec<f64>,
    pub max_modulus_error: f64,
}

impl Snapshot {
    pub fn of<T: Real>(vars: &DesignVariables<T>, ch: &ChannelSet<T>) -> Result<Self> {
        let radar: Vec<f64> = metrics::radar_sinrs(vars, ch)?.iter().map(|s| to_db(s.as_f64())).collect();
        Ok(Snapshot {
            min_radar_sinr_db: radar.iter().cloned().fold(f64::INFINITY, f64::min),
            radar_sinr_db: radar,
            comm_sinr_db: metrics::comm_sinrs(vars, ch).iter().map(|s| to_db(s.as_f64())).collect(),
            power_w: vars.power_per_subcarrier().iter().map(|p| p.as_f64()).collect(),
            max_modulus_error: modulus_error(&vars.phases).as_f64(),
        })
    }

    pub fn radar_spread_db(&self) -> f64 {
        let max = self.radar_sinr_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max - self.min_radar_sinr_db
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(flatten)]
    pub snapshot: Snapshot,
    pub accepted: BlockAcceptance,
    pub dinkelbach_iterations: usize,
    pub admm_iterations: usize,
    pub consensus_residual: f64,
    /// `||f^(n) - f^(n-1)||^2 / ||f^(n)||^2`.
    pub relative_step: f64,
    pub wall_time_s: f64,
}

/// Design variables flattened to `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableDump {
    /// `beamformers[k][u][n]`.
    pub beamformers: Vec<Vec<Vec<[f64; 2]>>>,
    pub phases: Vec<[f64; 2]>,
    pub filters: Vec<Vec<[f64; 2]>>,
}

impl VariableDump {
    pub fn of<T: Real>(vars: &DesignVariables<T>) -> Self {
        let pair = |z: &C<T>| [z.re.as_f64(), z.im.as_f64()];
        VariableDump {
            beamformers: vars
                .beamformers
                .iter()
                .map(|fk| fk.column_iter().map(|c| c.iter().map(pair).collect()).collect())
                .collect(),
            phases: vars.phases.iter().map(pair).collect(),
            filters: vars.filters.iter().map(|w| w.iter().map(pair).collect()).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport<T: Real> {
    pub variant: Variant,
    pub seed: u64,
    /// Metrics at the feasible starting point (iteration 0).
    pub initial: Snapshot,
    pub iterations: Vec<IterationRecord>,
    pub dinkelbach_traces: Vec<Vec<DinkelbachStep>>,
    pub phase_traces: Vec<Vec<CadmmStep>>,
    /// Metrics of the final point on the full (wideband) channel.
    #[serde(rename = "final")]
    pub final_metrics: Snapshot,
    pub termination: Termination,
    pub wall_time_s: f64,
    /// Variables on the variant's channel set.
    #[serde(skip)]
    pub variables: DesignVariables<T>,
    pub final_variables: VariableDump,
    /// Block failures that were skipped (the previous value was kept).
    pub notes: Vec<String>,
}

impl<T: Real> SolveReport<T> {
    pub fn min_radar_sinr_db(&self) -> f64 {
        self.final_metrics.min_radar_sinr_db
    }

    pub fn trace_db(&self) -> Vec<f64> {
        std::iter::once(self.initial.min_radar_sinr_db)
            .chain(self.iterations.iter().map(|r| r.snapshot.min_radar_sinr_db))
            .collect()
    }
}

fn comm_ok<T: Real>(vars: &DesignVariables<T>, ch: &ChannelSet<T>, enabled: bool) -> bool {
    // Interior-point tolerances may land a hair under the threshold.
    let slack = T::lit(1.0 - 1e-6);
    !enabled || metrics::comm_sinrs(vars, ch).iter().all(|&s| s >= ch.comm_sinr_threshold * slack)
}

/// Runs the alternating maximization on a prepared channel set (already
/// restricted to the variant's surfaces and subcarriers).
fn alternate<T: Real>(
    ch: &ChannelSet<T>,
    mut vars: DesignVariables<T>,
    opts: &SolverOptions,
    comm: bool,
    optimize_phases: bool,
) -> Result<(DesignVariables<T>, Snapshot, Vec<IterationRecord>, Vec<Vec<DinkelbachStep>>, Vec<Vec<CadmmStep>>, Termination, Vec<String>)> {
    let power = ch.power.clone();
    let mut notes = Vec::new();
    // Optimal filters for the starting point, then feasibility.
    let sols = solve_filterbank(ch, &vars.beamformers, &vars.phases)?;
    vars.filters = sols.into_iter().map(|s| s.w).collect();
    if comm && !comm_ok(&vars, ch, true) {
        let forms = lift_beamformer_forms(ch, &vars.phases, &vars.filters)?;
        let f = comm_feasibility_phase(
            &forms,
            &vars.stacked_beamformers(),
            &power,
            ch.comm_sinr_threshold,
            opts.feasibility_max_iter,
            &opts.ipm,
        )?;
        vars.set_stacked_beamformers(&f);
        let sols = solve_filterbank(ch, &vars.beamformers, &vars.phases)?;
        vars.filters = sols.into_iter().map(|s| s.w).collect();
    }
    let initial = Snapshot::of(&vars, ch)?;
    let (mut current, _) = metrics::min_radar_sinr(&vars, ch)?;
    let mut records = Vec::new();
    let mut dk_traces = Vec::new();
    let mut ph_traces = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut phase_scale = 1.0f64;
    for n in 1..=opts.max_outer {
        let started = Instant::now();
        let f_prev = vars.stacked_beamformers();
        let mut accepted = BlockAcceptance::default();

        // Filter bank.
        let sols = solve_filterbank(ch, &vars.beamformers, &vars.phases)?;
        let mut cand = vars.clone();
        cand.filters = sols.into_iter().map(|s| s.w).collect();
        let (s, _) = metrics::min_radar_sinr(&cand, ch)?;
        if s >= current {
            vars = cand;
            current = s;
            accepted.filters = true;
        }

        // Beamformers.
        let forms = lift_beamformer_forms(ch, &vars.phases, &vars.filters)?;
        let sub = BeamformerSubproblem {
            anchor: f_prev.clone(),
            forms,
            power_budget: power.clone(),
            comm_threshold: ch.comm_sinr_threshold,
            comm_enabled: comm,
            tol: T::lit(opts.dinkelbach_tol),
            max_iter: opts.dinkelbach_max_iter,
            ipm: opts.ipm,
        };
        let mut dk_iters = 0;
        match sub.dinkelbach_solve() {
            Ok(out) => {
                dk_iters = out.trace.len();
                dk_traces.push(out.trace);
                let mut cand = vars.clone();
                cand.set_stacked_beamformers(&out.f);
                let (s, _) = metrics::min_radar_sinr(&cand, ch)?;
                if s >= current && comm_ok(&cand, ch, comm) {
                    vars = cand;
                    current = s;
                    accepted.beamformers = true;
                }
            }
            Err(e @ (Error::Solver(_) | Error::CommInfeasible { .. })) => {
                log::warn!("iteration {n}: beamformer block skipped: {e}");
                notes.push(format!("iteration {n}: beamformer block skipped: {e}"));
                dk_traces.push(Vec::new());
            }
            Err(e) => return Err(e),
        }

        // Phases.
        let mut admm_iters = 0;
        let mut residual = 0.0;
        if optimize_phases && ch.n_phases() > 0 {
            let (mut scale, tries) = match opts.phase.schedule {
                StepSchedule::Geometric => (opts.phase.step_decay.powi(n as i32 - 1), 1),
                StepSchedule::Adaptive => (phase_scale, 1 + opts.phase.max_backtracks),
            };
            for _ in 0..tries {
                let out = cadmm_solve(ch, &vars, comm, &opts.phase, scale)?;
                admm_iters += out.trace.len();
                residual = out.consensus_residual.as_f64();
                ph_traces.push(out.trace);
                let mut cand = vars.clone();
                cand.phases = out.phi;
                let (s, _) = metrics::min_radar_sinr(&cand, ch)?;
                if s > current && comm_ok(&cand, ch, comm) {
                    vars = cand;
                    current = s;
                    accepted.phases = true;
                    break;
                }
                scale *= opts.phase.step_decay;
            }
            phase_scale = if accepted.phases {
                (scale / opts.phase.step_decay).min(1.0)
            } else {
                scale.max(f64::EPSILON)
            };
        }

        let f = vars.stacked_beamformers();
        let fnorm = norm2(&f).as_f64();
        let step = norm2(&(&f - &f_prev)).as_f64();
        records.push(IterationRecord {
            iter: n,
            snapshot: Snapshot::of(&vars, ch)?,
            accepted,
            dinkelbach_iterations: dk_iters,
            admm_iterations: admm_iters,
            consensus_residual: residual,
            relative_step: if fnorm > 0.0 { step / fnorm } else { 0.0 },
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        if step <= opts.outer_tol * fnorm {
            termination = Termination::Converged;
            break;
        }
    }
    Ok((vars, initial, records, dk_traces, ph_traces, termination, notes))
}

/// Designs `opts.variant` on a channel set synthesized for the full scenario.
pub fn optimize_channels<T: Real>(full: &ChannelSet<T>, seed: u64, opts: &SolverOptions) -> Result<SolveReport<T>> {
    opts.validate()?;
    let started = Instant::now();
    let variant = opts.variant;
    let init = initialize(full, seed);
    let keep: Vec<usize> = match variant.irs {
        IrsMode::Multi => (0..full.n_irs()).collect(),
        IrsMode::Single => vec![opts.single_irs_index],
        IrsMode::None => vec![],
    };
    let ch = design_channels(full, variant, opts)?;
    let mut vars = DesignVariables {
        phases: select_phases(full, &init.phases, &keep),
        ..init
    };
    let comm = variant.comm_enabled() && ch.n_users > 0;
    let (vars_out, initial, iterations, dk, ph, termination, notes) = if variant.narrowband {
        // Frequency-independent design: optimize the centre subcarrier only,
        // replicate its F across the band and evaluate on the full band.
        let centre = ch.n_subcarriers() / 2;
        let narrow = ch.select_subcarriers(&[centre]);
        vars.beamformers = vec![vars.beamformers[centre].clone()];
        let (mut v, initial, iters, dk, ph, term, notes) = alternate(&narrow, vars, opts, comm, variant.optimizes_phases())?;
        v.beamformers = vec![v.beamformers[0].clone(); ch.n_subcarriers()];
        let sols = solve_filterbank(&ch, &v.beamformers, &v.phases)?;
        v.filters = sols.into_iter().map(|s| s.w).collect();
        (v, initial, iters, dk, ph, term, notes)
    } else {
        alternate(&ch, vars, opts, comm, variant.optimizes_phases())?
    };
    let final_metrics = Snapshot::of(&vars_out, &ch)?;
    Ok(SolveReport {
        variant,
        seed,
        initial,
        iterations,
        dinkelbach_traces: dk,
        phase_traces: ph,
        final_metrics,
        termination,
        wall_time_s: started.elapsed().as_secs_f64(),
        final_variables: VariableDump::of(&vars_out),
        variables: vars_out,
        notes,
    })
}

/// Synthesizes the channels of `s` and designs `opts.variant`.
pub fn optimize<T: Real>(s: &Scenario, opts: &SolverOptions) -> Result<SolveReport<T>> {
    let ch = ChannelSet::<T>::synthesize(s)?;
    optimize_channels(&ch, opts.seed.unwrap_or(s.rng_seed), opts)
}

/// Designs every variant on the same channel realization and seed, in
/// parallel.
pub fn run_variants<T: Real>(s: &Scenario, variants: &[Variant], opts: &SolverOptions) -> Result<Vec<SolveReport<T>>> {
    let ch = ChannelSet::<T>::synthesize(s)?;
    let seed = opts.seed.unwrap_or(s.rng_seed);
    variants
        .par_iter()
        .map(|v| optimize_channels(&ch, seed, &opts.with_variant(*v)))
        .collect()
}
