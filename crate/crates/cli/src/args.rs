use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Figure, Format, ModelSource, RunConfig, DEFAULT_MC_SAMPLES};

#[derive(Debug, Parser)]
#[command(name = "qcrb", version, about = "Quantum Fisher information and Cramér-Rao bound audits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report every QFI quantity at one parameter value.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
        #[command(flatten)]
        numerics: NumericArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Tabulate QFI quantities over a parameter grid.
    Scan {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        numerics: NumericArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Regenerate the bias (fig1) or variance-versus-bound (fig2) curves.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        samples: SampleArgs,
        #[command(flatten)]
        numerics: NumericArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Check estimator statistics against the bounds; exits 1 if a biased
    /// bound is violated.
    Audit {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        samples: SampleArgs,
        #[command(flatten)]
        numerics: NumericArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Displacement for the Yang-Chiribella-Hayashi check.
        #[arg(long)]
        ych_eps: Option<f64>,
        /// Second parameter value for the purification bound (flip model).
        #[arg(long)]
        purification_thetap: Option<f64>,
        /// Add seeded Monte Carlo estimates next to the exact statistics.
        #[arg(long)]
        mc_check: bool,
        #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Built-in model name (flip, trig) or path to a JSON model spec.
    #[arg(long)]
    pub model: ModelSource,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub from: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub to: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Comma-separated sample counts.
    #[arg(long = "n", value_delimiter = ',', default_values_t = crate::config::DEFAULT_NS)]
    pub ns: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct NumericArgs {
    /// Absolute rank tolerance (default: 1e-12 times the largest eigenvalue, floor 1).
    #[arg(long)]
    pub rank_tol: Option<f64>,
    /// Base step of the fidelity finite differences.
    #[arg(long, default_value_t = 1e-3)]
    pub fd_eps: f64,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

fn base(numerics: NumericArgs, output: OutputArgs) -> RunConfig {
    RunConfig {
        rank_tol: numerics.rank_tol,
        fd_eps: numerics.fd_eps,
        out: output.out,
        format: output.format,
        ..RunConfig::default()
    }
}

fn with_grid(cfg: RunConfig, g: GridArgs) -> RunConfig {
    RunConfig {
        from: g.from,
        to: g.to,
        steps: g.steps,
        ..cfg
    }
}

impl Command {
    pub fn into_config(self) -> RunConfig {
        match self {
            Command::Eval { model, theta, numerics, output } => RunConfig {
                model: model.model,
                theta: Some(theta),
                ..base(numerics, output)
            },
            Command::Scan { model, grid, numerics, output } => with_grid(
                RunConfig {
                    model: model.model,
                    ..base(numerics, output)
                },
                grid,
            ),
            Command::Reproduce { grid, samples, numerics, output, .. } => with_grid(
                RunConfig {
                    ns: samples.ns,
                    ..base(numerics, output)
                },
                grid,
            ),
            Command::Audit {
                model,
                grid,
                samples,
                numerics,
                output,
                ych_eps,
                purification_thetap,
                mc_check,
                mc_samples,
                seed,
            } => with_grid(
                RunConfig {
                    model: model.model,
                    ns: samples.ns,
                    ych_eps,
                    purification_thetap,
                    mc_check,
                    mc_samples,
                    seed,
                    ..base(numerics, output)
                },
                grid,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn audit_flags() {
        let cli = Cli::try_parse_from([
            "qcrb", "audit", "--model", "flip", "--n", "1,5", "--from", "0.1", "--steps", "3", "--ych-eps", "0.01",
            "--mc-check", "--seed", "9", "--format", "json",
        ])
        .unwrap();
        let cfg = cli.command.into_config();
        assert_eq!(cfg.ns, [1, 5]);
        assert_eq!((cfg.from, cfg.steps, cfg.ych_eps, cfg.seed), (Some(0.1), Some(3), Some(0.01), 9));
        assert!(cfg.mc_check);
        assert_eq!(cfg.format, Format::Json);
    }

    #[test]
    fn reproduce_defaults() {
        let cli = Cli::try_parse_from(["qcrb", "reproduce", "fig2"]).unwrap();
        assert!(matches!(cli.command, Command::Reproduce { figure: Figure::Fig2, .. }));
        let cfg = cli.command.into_config();
        assert_eq!(cfg.ns, [10, 100, 1000]);
        assert!(Cli::try_parse_from(["qcrb", "reproduce", "fig3"]).is_err());
    }
}
