//! Command-line front end: QFI evaluation and scans, figure tables and
//! bound audits, written as CSV or JSON.

pub mod args;
pub mod commands;
pub mod config;
pub mod table;

use std::io::Write;

pub use args::{Cli, Command};
pub use commands::{cmd_audit, cmd_eval, cmd_reproduce, cmd_scan, AuditOutcome, SCAN_COLUMNS};
pub use config::{CliError, Figure, Format, ModelSource, RunConfig};
pub use table::{Cell, KeyValues, Table};

/// Rendered output of one command plus an optional stderr summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub body: String,
    pub summary: Option<String>,
    pub exit_code: u8,
}

enum Kind {
    Eval,
    Scan,
    Reproduce(Figure),
    Audit,
}

pub fn execute(command: Command) -> Result<(RunOutput, RunConfig), CliError> {
    let kind = match &command {
        Command::Eval { .. } => Kind::Eval,
        Command::Scan { .. } => Kind::Scan,
        Command::Reproduce { figure, .. } => Kind::Reproduce(*figure),
        Command::Audit { .. } => Kind::Audit,
    };
    let cfg = command.into_config();
    let plain = |body: String| RunOutput {
        body,
        summary: None,
        exit_code: 0,
    };
    let out = match kind {
        Kind::Eval => plain(cmd_eval(&cfg)?.render(cfg.format)?),
        Kind::Scan => plain(cmd_scan(&cfg)?.render(cfg.format)?),
        Kind::Reproduce(fig) => plain(cmd_reproduce(fig, &cfg)?.render(cfg.format)?),
        Kind::Audit => {
            let a = cmd_audit(&cfg)?;
            RunOutput {
                body: a.table.render(cfg.format)?,
                summary: Some(a.summary()),
                exit_code: a.exit_code(),
            }
        }
    };
    Ok((out, cfg))
}

/// Runs a parsed command line, writing the body to `--out` or stdout and
/// the summary to stderr. Returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    match execute(cli.command) {
        Ok((out, cfg)) => {
            let written = match &cfg.out {
                Some(path) => std::fs::write(path, &out.body),
                None => std::io::stdout().lock().write_all(out.body.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: {}", CliError::from(e));
                return 2;
            }
            if let Some(s) = out.summary {
                eprint!("{s}");
            }
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
