use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pushmpc::commands;
use pushmpc::config::{ControllerKind, ExperimentConfig, Overrides, OUT_ENV};
use pushmpc::CliResult;
use pushmpc_core::sim::PerturbationKind;
use pushmpc_core::tracks::TrackKind;

#[derive(Parser)]
#[command(name = "pushmpc", version, about = "MPC for planar pushing with analytical and learned models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate random training pushes.
    Generate(Common),
    /// Fit a GP push model.
    Train(Common),
    /// Run one closed-loop tracking experiment.
    Track(Common),
    /// Sweep the training-set size of the learned controller.
    Sweep(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum CtrlArg {
    Analytical,
    Learned,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrackArg {
    Eight,
    Square,
}

#[derive(Clone, Copy, ValueEnum)]
enum PerturbArg {
    None,
    Tangential,
    Normal,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    controller: Option<CtrlArg>,
    #[arg(long, value_enum)]
    track: Option<TrackArg>,
    /// Track speed in m/s.
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long, value_enum)]
    perturb: Option<PerturbArg>,
    /// Perturbation size in m.
    #[arg(long)]
    magnitude: Option<f64>,
    /// Keep only the first rows of the dataset.
    #[arg(long)]
    subset: Option<usize>,
    /// Number of pushes to generate.
    #[arg(long)]
    n: Option<usize>,
    /// Existing dataset CSV.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Existing model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> CliResult<ExperimentConfig> {
        let ov = Overrides {
            seed: self.seed,
            controller: self.controller.map(|c| match c {
                CtrlArg::Analytical => ControllerKind::Analytical,
                CtrlArg::Learned => ControllerKind::Learned,
            }),
            track: self.track.map(|t| match t {
                TrackArg::Eight => TrackKind::EightTrack,
                TrackArg::Square => TrackKind::SquareTrack,
            }),
            speed: self.speed,
            perturb: self.perturb.map(|p| match p {
                PerturbArg::None => PerturbationKind::None,
                PerturbArg::Tangential => PerturbationKind::Tangential,
                PerturbArg::Normal => PerturbationKind::Normal,
            }),
            magnitude: self.magnitude,
            subset: self.subset,
            n: self.n,
            dataset: self.dataset.clone(),
            model: self.model.clone(),
            out: self.out.clone(),
        };
        let env_out = std::env::var_os(OUT_ENV).map(PathBuf::from);
        ExperimentConfig::resolve(self.config.as_deref(), &ov, env_out)
    }
}

fn run(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Generate(c) => {
            let r = commands::cmd_generate(&c.resolve()?)?;
            println!("wrote {} pushes to {} ({} resampled)", r.rows, r.dataset.display(), r.resampled);
        }
        Cmd::Train(c) => {
            let r = commands::cmd_train(&c.resolve()?)?;
            println!("trained on {} rows in {:.1} s, model at {}", r.rows, r.fit_seconds, r.model.display());
            for o in &r.outputs {
                let h = o.hyperparams;
                println!(
                    "  {:9} sigma_f2 {:.4e}  lambda [{:.4e}, {:.4e}]  sigma_n2 {:.4e}  lml {:.2}",
                    o.output, h.sigma_f2, h.lambda[0], h.lambda[1], h.sigma_n2, o.log_marginal_likelihood
                );
            }
        }
        Cmd::Track(c) => {
            let cfg = c.resolve()?;
            let s = commands::cmd_track(&cfg)?;
            println!(
                "{} controller: mean error {:.2} mm, rms {:.2} mm, completed {}, artifacts in {}",
                s.controller,
                s.mean_error_mm,
                s.rms_error_mm,
                s.completed,
                cfg.out.display()
            );
        }
        Cmd::Sweep(c) => {
            let cfg = c.resolve()?;
            let r = commands::cmd_sweep(&cfg)?;
            println!("{:>6} {:>12} {:>10}", "n", "median_mm", "completed");
            for p in &r.points {
                println!("{:>6} {:>12.2} {:>7}/{}", p.n, p.median_error_mm, p.completed_runs, p.runs);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
