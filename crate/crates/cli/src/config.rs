use std::path::PathBuf;
use std::str::FromStr;

use qcrb::estimation::EstimationError;
use qcrb::models::{builtin, from_spec, grid, Builtin, ModelError, ModelSpec, ParametricModel};
use qcrb::qfi::{QfiConfig, QfiError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Qfi(#[from] QfiError),

    #[error(transparent)]
    Estimation(#[from] EstimationError),

    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),

    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("writing JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Every error is a usage or input problem; `1` is reserved for audit
    /// violations.
    pub fn exit_code(&self) -> u8 {
        2
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Builtin(Builtin),
    Spec(PathBuf),
}

impl FromStr for ModelSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some(b) = Builtin::from_name(s) {
            return Ok(ModelSource::Builtin(b));
        }
        let path = PathBuf::from(s);
        if path.exists() || path.extension().is_some() || s.contains(std::path::MAIN_SEPARATOR) {
            Ok(ModelSource::Spec(path))
        } else {
            Err(format!("'{s}' is neither a built-in model (flip, trig) nor a spec file"))
        }
    }
}

impl ModelSource {
    pub fn load(&self) -> Result<ParametricModel> {
        match self {
            ModelSource::Builtin(b) => Ok(builtin(*b)),
            ModelSource::Spec(path) => {
                let spec = ModelSpec::from_file(path)?;
                Ok(from_spec(&spec)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    Fig1,
    Fig2,
}

pub const DEFAULT_NS: [usize; 3] = [10, 100, 1000];
pub const DEFAULT_MC_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSource,
    pub theta: Option<f64>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub steps: Option<usize>,
    pub rank_tol: Option<f64>,
    pub fd_eps: f64,
    pub probe_steps: [f64; 3],
    pub ns: Vec<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub ych_eps: Option<f64>,
    pub purification_thetap: Option<f64>,
    pub mc_check: bool,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let q = QfiConfig::default();
        Self {
            model: ModelSource::Builtin(Builtin::Trig),
            theta: None,
            from: None,
            to: None,
            steps: None,
            rank_tol: q.rank_tol,
            fd_eps: q.fd_eps,
            probe_steps: q.probe_steps,
            ns: DEFAULT_NS.to_vec(),
            out: None,
            format: Format::Csv,
            ych_eps: None,
            purification_thetap: None,
            mc_check: false,
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn with_model(model: ModelSource) -> Self {
        Self {
            model,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.steps {
            if s < 2 {
                return Err(config_err(format!("--steps must be at least 2, got {s}")));
            }
        }
        if let (Some(a), Some(b)) = (self.from, self.to) {
            if !(a < b) {
                return Err(config_err(format!("--from ({a}) must be less than --to ({b})")));
            }
        }
        for (name, v) in [
            ("--rank-tol", self.rank_tol),
            ("--fd-eps", Some(self.fd_eps)),
            ("--ych-eps", self.ych_eps),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(config_err(format!("{name} must be a positive number, got {v}")));
                }
            }
        }
        if self.probe_steps.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(config_err("probe steps must be positive"));
        }
        if self.ns.is_empty() || self.ns.contains(&0) {
            return Err(config_err("--n needs a non-empty list of positive sample counts"));
        }
        if self.mc_check && self.mc_samples < 2 {
            return Err(config_err("Monte Carlo check needs at least 2 samples"));
        }
        Ok(())
    }

    pub fn qfi_config(&self) -> QfiConfig {
        QfiConfig {
            rank_tol: self.rank_tol,
            fd_eps: self.fd_eps,
            probe_steps: self.probe_steps,
        }
    }

    /// Grid over `[from, to]`, defaulting to the domain `(lo, hi)` and
    /// `default_steps` points; rejected if it leaves the domain.
    pub fn grid_points(&self, (lo, hi): (f64, f64), default_steps: usize) -> Result<Vec<f64>> {
        let a = self.from.unwrap_or(lo);
        let b = self.to.unwrap_or(hi);
        if !(a < b) {
            return Err(config_err(format!("empty grid [{a}, {b}]")));
        }
        if a < lo || b > hi {
            return Err(config_err(format!("grid [{a}, {b}] leaves the domain [{lo}, {hi}]")));
        }
        Ok(grid(a, b, self.steps.unwrap_or(default_steps)))
    }
}
