use clap::{Args, Parser, Subcommand};
use dfrc_core::ao::Variant;
use dfrc_core::config::{document_to_toml, parse_document, Document, RawScenario};
use dfrc_core::experiment::{dump_channels, run_experiment, ExperimentKind, ExperimentSpec, SweepAxis, SweepSpec};
use dfrc_core::{ChannelSet64, Error};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dfrc", version, about = "Wideband multi-IRS DFRC beamforming design and evaluation")]
struct Cli {
    /// Print the built-in default configuration and exit.
    #[arg(long)]
    dump_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the built-in default configuration.
    Defaults,
    /// Run the alternating optimization and record its convergence.
    Optimize(Common),
    /// Sweep one scenario parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// power-dbw, sinr-threshold-db, n-tx or irs-elements.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Transmit beampatterns of the optimized designs.
    Beampattern {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        angle_step_deg: Option<f64>,
    },
    /// Monte-Carlo ROC curves.
    Roc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_mont: Option<usize>,
        #[arg(long)]
        power_offset_db: Option<f64>,
    },
    /// Wideband versus narrowband comparison table.
    Table(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration ([scenario], [solver], optional [experiment]).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Seed of the random initialization.
    #[arg(long)]
    seed: Option<u64>,
    /// Variants to run (repeatable), e.g. multi-irs, single-irs+narrowband.
    #[arg(long = "variant")]
    variants: Vec<String>,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    outer_tol: Option<f64>,
    #[arg(long)]
    dinkelbach_tol: Option<f64>,
    #[arg(long)]
    ipm_tol: Option<f64>,
    /// Also write the synthesized channels (at the initial phases) as CSV.
    #[arg(long)]
    dump_channels: Option<PathBuf>,
}

impl Common {
    fn document(&self) -> Result<Document, Error> {
        let mut doc = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
                parse_document(&text)?
            }
            None => Document::default(),
        };
        if let Some(v) = self.max_outer {
            doc.solver.max_outer = v;
        }
        if let Some(v) = self.outer_tol {
            doc.solver.outer_tol = v;
        }
        if let Some(v) = self.dinkelbach_tol {
            doc.solver.dinkelbach_tol = v;
        }
        if let Some(v) = self.ipm_tol {
            doc.solver.ipm.tol = v;
        }
        if let Some(v) = self.seed {
            doc.solver.seed = Some(v);
        }
        Ok(doc)
    }

    fn spec(&self, doc: &Document, kind: ExperimentKind) -> Result<ExperimentSpec, Error> {
        let mut spec = match &doc.experiment {
            Some(e) if e.kind == kind => e.clone(),
            _ => ExperimentSpec::new(kind),
        };
        if !self.variants.is_empty() {
            spec.variants = self.variants.iter().map(|v| v.parse::<Variant>()).collect::<Result<_, _>>()?;
        } else if kind == ExperimentKind::Convergence && spec.variants.is_empty() {
            spec.variants = vec![doc.solver.variant];
        }
        Ok(spec)
    }
}

fn defaults_text() -> String {
    let mut doc = Document::default();
    let resolved = RawScenario::default().resolve().expect("built-in defaults are valid");
    doc.scenario = RawScenario::from_scenario(&resolved);
    document_to_toml(&doc)
}

fn run(common: &Common, kind: ExperimentKind, edit: impl FnOnce(&mut ExperimentSpec) -> Result<(), Error>) -> Result<(), Error> {
    let doc = common.document()?;
    let mut spec = common.spec(&doc, kind)?;
    edit(&mut spec)?;
    let out = spec.output_dir.clone().filter(|_| common.out == PathBuf::from("out")).unwrap_or(common.out.clone());
    if let Some(path) = &common.dump_channels {
        let s = doc.scenario.resolve()?;
        let ch = ChannelSet64::synthesize(&s)?;
        let init = dfrc_core::ao::initialize(&ch, doc.solver.seed.unwrap_or(s.rng_seed));
        dump_channels(&ch, &init.phases, path)?;
    }
    let result = run_experiment(&doc, &spec, &out)?;
    for f in &result.files {
        println!("{}", result.dir.join(f).display());
    }
    Ok(())
}

fn parse_axis(s: &str) -> Result<SweepAxis, Error> {
    match s {
        "power-dbw" | "power" => Ok(SweepAxis::PowerDbw),
        "sinr-threshold-db" | "xi" => Ok(SweepAxis::SinrThresholdDb),
        "n-tx" => Ok(SweepAxis::NTx),
        "irs-elements" => Ok(SweepAxis::IrsElements),
        other => Err(Error::Invalid {
            field: "--axis".into(),
            constraint: format!("unknown axis `{other}` (power-dbw, sinr-threshold-db, n-tx, irs-elements)"),
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match (&cli.command, cli.dump_defaults) {
        (_, true) | (Some(Command::Defaults), _) => {
            print!("{}", defaults_text());
            Ok(())
        }
        (None, false) => {
            eprintln!("no command given; see `dfrc --help`");
            return ExitCode::from(2);
        }
        (Some(Command::Optimize(c)), _) => run(c, ExperimentKind::Convergence, |_| Ok(())),
        (Some(Command::Table(c)), _) => run(c, ExperimentKind::Table, |_| Ok(())),
        (Some(Command::Sweep { common, axis, values }), _) => run(common, ExperimentKind::Sweep, |spec| {
            if let Some(a) = axis {
                let axis = parse_axis(a)?;
                let values = if values.is_empty() {
                    spec.sweep.as_ref().map(|s| s.values.clone()).unwrap_or_default()
                } else {
                    values.clone()
                };
                spec.sweep = Some(SweepSpec { axis, values });
            } else if !values.is_empty() {
                match spec.sweep.as_mut() {
                    Some(s) => s.values = values.clone(),
                    None => {
                        return Err(Error::Invalid {
                            field: "--axis".into(),
                            constraint: "required when the config has no [experiment.sweep]".into(),
                        })
                    }
                }
            }
            Ok(())
        }),
        (Some(Command::Beampattern { common, angle_step_deg }), _) => run(common, ExperimentKind::Beampattern, |spec| {
            if let Some(s) = angle_step_deg {
                spec.angle_step_deg = *s;
            }
            Ok(())
        }),
        (Some(Command::Roc { common, n_mont, power_offset_db }), _) => run(common, ExperimentKind::Roc, |spec| {
            if let Some(n) = n_mont {
                spec.n_mont = *n;
            }
            if let Some(o) = power_offset_db {
                spec.detection_power_offset_db = *o;
            }
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
