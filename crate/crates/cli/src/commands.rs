use qcrb::estimation::{audit_scan, monte_carlo_stats, AuditOptions, BoundRecord, Estimator, Parameterization};
use qcrb::models::{builtin, Builtin, EigencurveSource, ParametricModel};
use qcrb::qfi::{qfi_report, QConstruction, QfiReport, Quantity};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{CliError, Figure, Result, RunConfig};
use crate::table::{Cell, KeyValues, Table};

pub const SCAN_COLUMNS: [&str; 9] = [
    "theta",
    "rank",
    "f1_q",
    "f2",
    "f3",
    "delta",
    "sld_sup",
    "sld_bounded",
    "f3_divergent",
];

pub const SCAN_STEPS: usize = 101;
pub const FIGURE_STEPS: usize = 201;

fn load(cfg: &RunConfig) -> Result<ParametricModel> {
    cfg.validate()?;
    cfg.model.load()
}

fn opt_qty(q: Option<Quantity>) -> Cell {
    match q {
        Some(q) => Cell::Qty(q),
        None => Cell::Text("none".into()),
    }
}

/// Key-value report for a single parameter value.
pub fn cmd_eval(cfg: &RunConfig) -> Result<KeyValues> {
    let model = load(cfg)?;
    let theta = cfg
        .theta
        .ok_or_else(|| CliError::Config("eval needs --theta".into()))?;
    model.check_domain(theta)?;
    let r = qfi_report(&model, theta, &cfg.qfi_config())?;
    Ok(eval_report(&model, &r))
}

pub fn eval_report(model: &ParametricModel, r: &QfiReport) -> KeyValues {
    let mut kv = KeyValues::default();
    kv.push("model", model.name());
    kv.push("theta", r.theta);
    kv.push("rank", r.rank);
    kv.push("singular", r.is_singular);
    kv.push("f1_q", r.f1_q());
    kv.push("f2", r.f2);
    kv.push("f3", r.f3_value());
    kv.push("f3_divergent", r.f3_value().is_divergent());
    kv.push("f3_eps", r.f3.eps);
    kv.push("f3_symmetric", opt_qty(r.f3_symmetric.map(|s| s.value)));
    kv.push("delta", r.delta.delta);
    kv.push("delta_limit", opt_qty(r.delta.limit_form));
    kv.push("continuous_qfi", r.continuous_qfi());
    kv.push("sld_sup", r.sld_sup_element);
    kv.push("sld_bounded", r.sld_bounded);
    kv.push(
        "q_construction",
        match r.q.construction {
            QConstruction::Product => "product",
            QConstruction::Limit => "limit",
        },
    );
    kv.push("q_divergent", r.f1_q().is_divergent());
    kv.push("q_residual_sld", r.q.residual_sld);
    kv.push("q_residual_hermitian", r.q.residual_hermitian);
    kv.push(
        "eigencurves",
        match r.eigencurve_source {
            EigencurveSource::Analytic => "analytic",
            EigencurveSource::Numeric => "numeric",
        },
    );
    kv.push("curves_reliable", r.delta.reliable);
    kv.push("warnings", r.warnings.len());
    kv
}

/// One row of QFI quantities per grid point, in grid order.
pub fn cmd_scan(cfg: &RunConfig) -> Result<Table> {
    let model = load(cfg)?;
    let qcfg = cfg.qfi_config();
    let mut table = Table::new(SCAN_COLUMNS);
    for theta in cfg.grid_points(model.domain(), SCAN_STEPS)? {
        let r = qfi_report(&model, theta, &qcfg)?;
        table.push(vec![
            theta.into(),
            r.rank.into(),
            r.f1_q().into(),
            r.f2.into(),
            r.f3_value().into(),
            r.delta.delta.into(),
            r.sld_sup_element.into(),
            r.sld_bounded.into(),
            r.f3_value().is_divergent().into(),
        ]);
    }
    Ok(table)
}

/// Bias (`fig1`) or rescaled variance against the bounds (`fig2`) of the
/// maximum-likelihood estimator of `theta` in the trig model. The model
/// setting of `cfg` is not used.
pub fn cmd_reproduce(figure: Figure, cfg: &RunConfig) -> Result<Table> {
    cfg.validate()?;
    let model = builtin(Builtin::Trig);
    let thetas = cfg.grid_points(model.domain(), FIGURE_STEPS)?;
    let recs = audit_scan(&model, &Estimator::mle_theta(), &cfg.ns, &thetas, &cfg.qfi_config(), &AuditOptions::default())?;
    let cell = |i: usize, k: usize| &recs[k * thetas.len() + i];
    let mut columns = vec!["theta".to_string()];
    for n in &cfg.ns {
        match figure {
            Figure::Fig1 => columns.push(format!("bias_n{n}")),
            Figure::Fig2 => {
                columns.push(format!("nvar_n{n}"));
                columns.push(format!("biased_bound_n{n}"));
            }
        }
    }
    if figure == Figure::Fig2 {
        columns.push("unbiased_bound".into());
    }
    let mut table = Table::new(columns);
    for (i, &theta) in thetas.iter().enumerate() {
        let mut row = vec![Cell::Real(theta)];
        for k in 0..cfg.ns.len() {
            let r = cell(i, k);
            match figure {
                Figure::Fig1 => row.push(r.bias.into()),
                Figure::Fig2 => {
                    row.push(r.scaled_variance().into());
                    row.push(r.scaled_biased_bound().into());
                }
            }
        }
        if figure == Figure::Fig2 {
            let r = cell(i, 0);
            row.push((r.unbiased_bound * r.n as f64).into());
        }
        table.push(row);
    }
    Ok(table)
}

#[derive(Debug, Clone)]
pub struct AuditOutcome {
    pub table: Table,
    pub records: Vec<BoundRecord>,
    pub unbiased_violations: usize,
    pub unbiased_f2_violations: usize,
    pub biased_violations: usize,
    pub ych_failures: usize,
    pub purification_failures: usize,
}

impl AuditOutcome {
    /// `0` when every biased bound holds, `1` otherwise.
    pub fn exit_code(&self) -> u8 {
        u8::from(self.biased_violations > 0)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "cells: {}\nunbiased-violations: {}\nunbiased-f2-violations: {}\nbiased-violations: {}\n",
            self.records.len(),
            self.unbiased_violations,
            self.unbiased_f2_violations,
            self.biased_violations
        );
        if self.records.iter().any(|r| r.ych.is_some()) {
            s.push_str(&format!("ych-failures: {}\n", self.ych_failures));
        }
        if self.records.iter().any(|r| r.purification.is_some()) {
            s.push_str(&format!("purification-failures: {}\n", self.purification_failures));
        }
        s
    }
}

const INEQUALITY_TOL: f64 = 1e-12;

/// Exact estimator statistics and bounds for the maximum-likelihood
/// estimator of a built-in model, over every `n` and grid point.
pub fn cmd_audit(cfg: &RunConfig) -> Result<AuditOutcome> {
    let model = load(cfg)?;
    let param = match model.builtin() {
        Some(Builtin::Flip) => Parameterization::Q,
        Some(Builtin::Trig) => Parameterization::Theta,
        None => {
            return Err(CliError::Config(
                "audit runs the binomial experiment and needs a built-in model (flip or trig)".into(),
            ))
        }
    };
    let est = Estimator::mle(param);
    if cfg.purification_thetap.is_some() && param != Parameterization::Q {
        return Err(CliError::Config(
            "the purification bound requires an unbiased estimator; use --model flip".into(),
        ));
    }
    if let Some(tp) = cfg.purification_thetap {
        param.check(tp)?;
    }
    let thetas = cfg.grid_points(model.domain(), FIGURE_STEPS)?;
    let opts = AuditOptions {
        ych_eps: cfg.ych_eps,
        purification_thetap: cfg.purification_thetap,
    };
    let records = audit_scan(&model, &est, &cfg.ns, &thetas, &cfg.qfi_config(), &opts)?;

    let mut columns: Vec<String> = [
        "theta",
        "n",
        "mean",
        "bias",
        "mse",
        "variance",
        "dmean",
        "qfi",
        "f2",
        "unbiased_bound",
        "unbiased_bound_f2",
        "biased_bound",
        "violated_unbiased",
        "violated_unbiased_f2",
        "holds_biased",
    ]
    .map(String::from)
    .to_vec();
    let unbiased_est = param == Parameterization::Q;
    if cfg.ych_eps.is_some() {
        columns.extend(["ych_eps", "ych_lhs", "ych_rhs", "ych_biased_lhs", "ych_biased_rhs", "ych_holds"].map(String::from));
    }
    if cfg.purification_thetap.is_some() {
        columns.extend(["purification_thetap", "purification_bound", "purification_holds"].map(String::from));
    }
    if cfg.mc_check {
        columns.extend(["mc_mean", "mc_variance", "mc_mean_z"].map(String::from));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = Table::new(columns);
    let mut out = AuditOutcome {
        table: Table::default(),
        records: Vec::new(),
        unbiased_violations: 0,
        unbiased_f2_violations: 0,
        biased_violations: 0,
        ych_failures: 0,
        purification_failures: 0,
    };
    for r in &records {
        out.unbiased_violations += usize::from(r.violated_unbiased);
        out.unbiased_f2_violations += usize::from(r.violated_unbiased_f2);
        out.biased_violations += usize::from(!r.holds_biased);
        let mut row: Vec<Cell> = vec![
            r.theta.into(),
            r.n.into(),
            r.mean.into(),
            r.bias.into(),
            r.mse.into(),
            r.variance.into(),
            r.dmean.into(),
            r.qfi.into(),
            r.f2.into(),
            r.unbiased_bound.into(),
            r.unbiased_bound_f2.into(),
            r.biased_bound.into(),
            r.violated_unbiased.into(),
            r.violated_unbiased_f2.into(),
            r.holds_biased.into(),
        ];
        if let Some(y) = &r.ych {
            // the unbiased form only applies to an unbiased estimator
            let holds = y.biased.holds(INEQUALITY_TOL) && (!unbiased_est || y.unbiased.holds(INEQUALITY_TOL));
            out.ych_failures += usize::from(!holds);
            row.extend([
                y.eps.into(),
                y.unbiased.lhs.into(),
                y.unbiased.rhs.into(),
                y.biased.lhs.into(),
                y.biased.rhs.into(),
                holds.into(),
            ]);
        }
        if let Some(p) = &r.purification {
            let holds = p.holds(INEQUALITY_TOL);
            out.purification_failures += usize::from(!holds);
            row.extend([p.theta_prime.into(), p.bound.into(), holds.into()]);
        }
        if cfg.mc_check {
            let mc = monte_carlo_stats(&est, r.n, r.theta, cfg.mc_samples, &mut rng)?;
            let z = if mc.mean_stderr > 0.0 {
                (mc.mean - r.mean) / mc.mean_stderr
            } else {
                0.0
            };
            if z.abs() > 5.0 {
                log::warn!("Monte Carlo mean off by {z:.1} standard errors at n = {}, theta = {}", r.n, r.theta);
            }
            row.extend([mc.mean.into(), mc.variance.into(), z.into()]);
        }
        table.push(row);
    }
    out.table = table;
    out.records = records;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelSource;
    use std::f64::consts::FRAC_PI_4;

    fn cfg(model: Builtin) -> RunConfig {
        RunConfig::with_model(ModelSource::Builtin(model))
    }

    fn real(c: &Cell) -> f64 {
        match c {
            Cell::Real(x) | Cell::Qty(Quantity::Finite(x)) => *x,
            other => panic!("not a finite real: {other:?}"),
        }
    }

    #[test]
    fn eval_examples() {
        let kv = cmd_eval(&RunConfig { theta: Some(0.0), ..cfg(Builtin::Trig) }).unwrap();
        assert_eq!(real(kv.get("f2").unwrap()), 0.0);
        assert!((real(kv.get("f3").unwrap()) - 4.0).abs() < 1e-5);
        assert_eq!(real(kv.get("delta").unwrap()), 4.0);

        let kv = cmd_eval(&RunConfig { theta: Some(0.5), ..cfg(Builtin::Flip) }).unwrap();
        assert!((real(kv.get("f2").unwrap()) - 4.0).abs() < 1e-12);
        assert!((real(kv.get("f3").unwrap()) - 4.0).abs() < 1e-5);

        let err = cmd_eval(&RunConfig { theta: Some(2.0), ..cfg(Builtin::Trig) }).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(cmd_eval(&cfg(Builtin::Trig)).is_err());
    }

    #[test]
    fn scan_columns_and_degenerate_grid() {
        let t = cmd_scan(&RunConfig { steps: Some(2), ..cfg(Builtin::Flip) }).unwrap();
        assert_eq!(t.columns, SCAN_COLUMNS);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0][8], Cell::Bool(true));
    }

    #[test]
    fn reproduce_layout() {
        let c = RunConfig { ns: vec![10], steps: Some(5), ..cfg(Builtin::Trig) };
        let f1 = cmd_reproduce(Figure::Fig1, &c).unwrap();
        assert_eq!(f1.columns, ["theta", "bias_n10"]);
        assert_eq!(real(&f1.rows[0][1]), 0.0);
        assert!(real(&f1.rows[2][1]).abs() < 1e-12);
        let f2 = cmd_reproduce(Figure::Fig2, &c).unwrap();
        assert_eq!(f2.columns, ["theta", "nvar_n10", "biased_bound_n10", "unbiased_bound"]);
        assert_eq!(real(&f2.rows[0][1]), 0.0);
        for row in &f2.rows {
            assert!((real(&row[3]) - 0.25).abs() < 1e-12);
            assert!(real(&row[1]) >= real(&row[2]) - 1e-9);
        }
    }

    #[test]
    fn audit_outcomes() {
        let trig = cmd_audit(&RunConfig { ns: vec![10], ..cfg(Builtin::Trig) }).unwrap();
        assert_eq!(trig.exit_code(), 0);
        assert!(trig.unbiased_violations > 0);

        let flip = cmd_audit(&RunConfig {
            ns: vec![10],
            ych_eps: Some(0.05),
            purification_thetap: Some(0.5),
            steps: Some(21),
            ..cfg(Builtin::Flip)
        })
        .unwrap();
        assert_eq!(flip.exit_code(), 0);
        assert_eq!(flip.unbiased_violations, 0);
        assert_eq!(flip.ych_failures + flip.purification_failures, 0);
        // the F2 bound fails exactly at the two endpoints
        assert_eq!(flip.unbiased_f2_violations, 2);
    }

    #[test]
    fn audit_rejects_spec_models_and_biased_purification() {
        let c = RunConfig { purification_thetap: Some(FRAC_PI_4), ..cfg(Builtin::Trig) };
        assert_eq!(cmd_audit(&c).unwrap_err().exit_code(), 2);

        let path = std::env::temp_dir().join(format!("qcrb-audit-spec-{}.json", std::process::id()));
        std::fs::write(
            &path,
            r#"{"name": "d", "dim": 2, "domain": [0, 1], "kind": "diagonal", "eigenvalues": ["1 - theta", "theta"]}"#,
        )
        .unwrap();
        let c = RunConfig::with_model(ModelSource::Spec(path.clone()));
        assert!(cmd_scan(&RunConfig { steps: Some(3), ..c.clone() }).is_ok());
        assert_eq!(cmd_audit(&c).unwrap_err().exit_code(), 2);
        std::fs::remove_file(path).unwrap();
    }

    #[test]
    fn monte_carlo_columns_are_seeded() {
        let c = RunConfig { ns: vec![10], steps: Some(5), mc_check: true, mc_samples: 2000, seed: 3, ..cfg(Builtin::Trig) };
        let a = cmd_audit(&c).unwrap().table.to_csv().unwrap();
        let b = cmd_audit(&c).unwrap().table.to_csv().unwrap();
        assert_eq!(a, b);
        assert!(a.lines().next().unwrap().ends_with("mc_mean,mc_variance,mc_mean_z"));
    }
}
