use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use celltrack::events::GbtParams;
use celltrack::hypothesis::HypothesisConfig;
use celltrack::metrics::DEFAULT_MATCH_RADIUS;
use celltrack::pipeline::{self, Mode, TrackConfig};
use celltrack::synth::SynthConfig;

#[derive(Parser)]
#[command(
    name = "celltrack",
    version,
    about = "Joint detection and lineage tracking of dividing cells"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build hierarchical ellipse hypotheses from a mask directory.
    Hypotheses {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        kappa_min: Option<f64>,
        #[arg(long)]
        max_leaves: Option<usize>,
    },
    /// Train the migration and division classifiers from sample directories.
    Train {
        /// Directories holding migration.csv, division.csv and counts.json.
        #[arg(long = "samples", required = true, num_args = 1..)]
        samples: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = GbtParams::default().rounds)]
        rounds: usize,
        #[arg(long, default_value_t = GbtParams::default().shrinkage)]
        shrinkage: f64,
    },
    /// Track cells through a mask sequence.
    Track(TrackArgs),
    /// Score tracking results against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Mask directory, defaults to the ground-truth directory.
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MATCH_RADIUS)]
        radius: f64,
        /// Also write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Write the integer program of a sequence in LP format.
    ExportLp {
        #[command(flatten)]
        track: TrackArgs,
        #[arg(long)]
        lp: PathBuf,
    },
}

#[derive(Args)]
struct TrackArgs {
    /// TOML file with `TrackConfig` fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Directory with migration.json, division.json and priors.json.
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    migration_model: Option<PathBuf>,
    #[arg(long)]
    division_model: Option<PathBuf>,
    #[arg(long)]
    priors: Option<PathBuf>,
    #[arg(long)]
    rho_a: Option<f64>,
    #[arg(long)]
    rho_d: Option<f64>,
    /// `full`, `cl`, `nc`, `fd[:p]`, `bh` or `lp`
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    gate_distance: Option<f64>,
    #[arg(long)]
    rel_gap: Option<f64>,
    #[arg(long)]
    max_nodes: Option<usize>,
}

impl TrackArgs {
    fn resolve(self) -> Result<TrackConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrackConfig::load(p)?,
            None => TrackConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f {
                    cfg.$f = v;
                }
            )*};
        }
        macro_rules! set_opt {
            ($($f:ident),*) => {$(
                if self.$f.is_some() {
                    cfg.$f = self.$f;
                }
            )*};
        }
        set!(input, output, mode, gate_distance, rel_gap, max_nodes);
        set_opt!(
            models,
            migration_model,
            division_model,
            priors,
            rho_a,
            rho_d
        );
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// TOML file with `SynthConfig` fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<u32>,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    division_prob: Option<f64>,
    #[arg(long)]
    disappearance_prob: Option<f64>,
    #[arg(long)]
    clumping: Option<f64>,
    /// Also write per-cell label masks.
    #[arg(long)]
    labels: bool,
    /// Also write training samples into `<output>/samples`.
    #[arg(long)]
    samples: bool,
}

impl SynthArgs {
    fn resolve(&self) -> Result<SynthConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => SynthConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.frames {
            cfg.frames = v;
        }
        if let Some(v) = self.cells {
            cfg.initial_cells = v;
        }
        if let Some(v) = self.width {
            cfg.width = v;
        }
        if let Some(v) = self.height {
            cfg.height = v;
        }
        if let Some(v) = self.division_prob {
            cfg.division_prob = v;
        }
        if let Some(v) = self.disappearance_prob {
            cfg.disappearance_prob = v;
        }
        if let Some(v) = self.clumping {
            cfg.clumping = v;
        }
        Ok(cfg)
    }
}

fn print_log(log: &pipeline::SolverLog) {
    println!(
        "{} tracks, objective {:.4}, gap {:.2e}, {} vertices, {} variables, {} constraints, {} ms",
        log.tracks,
        log.objective,
        log.gap,
        log.vertices,
        log.variables,
        log.constraints,
        log.runtime_ms
    );
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = pipeline::configure_workers()? {
        log::info!("using {n} workers");
    }
    match cli.command {
        Command::Hypotheses {
            input,
            output,
            kappa_min,
            max_leaves,
        } => {
            let mut hyp = HypothesisConfig::default();
            if let Some(k) = kappa_min {
                hyp.kappa_min = k;
            }
            if let Some(m) = max_leaves {
                hyp.max_leaves = m;
            }
            let n = pipeline::cmd_hypotheses(&input, &output, &hyp)?;
            println!(
                "{n} hypotheses written to {}",
                output.join(pipeline::HYPOTHESES_FILE).display()
            );
        }
        Command::Train {
            samples,
            output,
            rounds,
            shrinkage,
        } => {
            let params = GbtParams {
                rounds,
                shrinkage,
                ..GbtParams::default()
            };
            let m = pipeline::cmd_train(&samples, &output, &params)?;
            println!(
                "trained on {} sample dirs; priors rho_a {:.3e} rho_d {:.3e} p_div {:.3e}",
                samples.len(),
                m.priors.rho_a,
                m.priors.rho_d,
                m.priors.p_div
            );
        }
        Command::Track(args) => {
            let cfg = args.resolve()?;
            let out = pipeline::cmd_track(&cfg)?;
            print_log(&out.log);
        }
        Command::Eval {
            pred,
            gt,
            masks,
            radius,
            report,
        } => {
            let r = pipeline::cmd_eval(&pred, &gt, masks.as_deref(), radius)?;
            print!("{}", r.table());
            if let Some(path) = report {
                pipeline::write_report(&path, &r)?;
            }
        }
        Command::Synth(args) => {
            let cfg = args.resolve()?;
            let seq = pipeline::cmd_synth(&cfg, &args.output, args.labels, args.samples)?;
            println!(
                "{} frames, {} tracks, {} divisions written to {}",
                cfg.frames,
                seq.gt.tracks.len(),
                seq.divisions,
                args.output.display()
            );
        }
        Command::ExportLp { track, lp } => {
            let cfg = track.resolve()?;
            let model = pipeline::cmd_export_lp(&cfg, &lp)?;
            println!(
                "{} variables, {} rows written to {}",
                model.num_vars(),
                model.num_rows(),
                lp.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
