//! One-parameter density-operator models.
//!
//! Two qubit families are built in: the bit-flip model `diag(1-q, q)` on
//! `[0, 1]` and its reparametrization `diag(cos^2 t, sin^2 t)` on `[0, pi/2]`.
//! Further models are loaded from JSON model-spec files whose matrix entries
//! are [`crate::expr`] expressions; derivatives then come from dual-number
//! evaluation.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Dual2, EvalError, Expr, ParseError};
use crate::numlin::{
    eigh, CMatrix, DensityOperator, HermitianOperator, NumlinError, SpectralDecomposition, C64,
};

/// Trace / Hermiticity tolerance applied to spec-file models.
pub const SPEC_TOL: f64 = 1e-10;
/// Number of domain points checked when a spec is loaded.
pub const VALIDATION_GRID: usize = 101;
/// Two eigenvector overlaps closer than this make a curve match ambiguous.
pub const MATCH_AMBIGUITY: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("theta = {theta} outside the model domain [{min}, {max}]")]
    OutOfDomain { theta: f64, min: f64, max: f64 },

    #[error("unknown built-in model '{0}' (expected 'flip' or 'trig')")]
    UnknownBuiltin(String),

    #[error("invalid model spec: {0}")]
    Schema(String),

    #[error("model spec JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("reading model spec: {0}")]
    Io(#[from] std::io::Error),

    #[error("expression {field}: {source}")]
    Parse {
        field: String,
        #[source]
        source: ParseError,
    },

    #[error("expression {field}: {source}")]
    Eval {
        field: String,
        #[source]
        source: EvalError,
    },

    #[error("trace deviates from 1 by {deviation:.3e} at theta = {theta}")]
    Trace { theta: f64, deviation: f64 },

    #[error("not Hermitian (asymmetry {asymmetry:.3e}) at theta = {theta}")]
    Hermiticity { theta: f64, asymmetry: f64 },

    #[error("negative eigenvalue {eigenvalue:.3e} at theta = {theta}")]
    NotPsd { theta: f64, eigenvalue: f64 },

    #[error("domain too narrow for a finite-difference stencil at theta = {theta}")]
    StencilOutsideDomain { theta: f64 },

    #[error(transparent)]
    Numlin(#[from] NumlinError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// `diag(1 - q, q)`, `q` in `[0, 1]`.
    Flip,
    /// `diag(cos^2 t, sin^2 t)`, `t` in `[0, pi/2]`.
    Trig,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        match name {
            "flip" => Some(Builtin::Flip),
            "trig" => Some(Builtin::Trig),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Flip => "flip",
            Builtin::Trig => "trig",
        }
    }
}

/// How eigenvalue curves and their derivatives are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EigencurveSource {
    Analytic,
    Numeric,
}

/// `(sin t, cos t)` with the endpoints `0` and `pi/2` snapped to exact values.
pub fn sin_cos_exact(theta: f64) -> (f64, f64) {
    if theta == 0.0 {
        (0.0, 1.0)
    } else if theta == FRAC_PI_2 {
        (1.0, 0.0)
    } else {
        theta.sin_cos()
    }
}

#[derive(Debug, Clone)]
enum ModelKind {
    Builtin(Builtin),
    Diagonal(Vec<Expr>),
    Dense(Vec<Vec<(Expr, Expr)>>),
}

#[derive(Debug, Clone)]
pub struct ParametricModel {
    name: String,
    dim: usize,
    domain: (f64, f64),
    kind: ModelKind,
}

pub fn builtin_flip() -> ParametricModel {
    ParametricModel {
        name: "flip".into(),
        dim: 2,
        domain: (0.0, 1.0),
        kind: ModelKind::Builtin(Builtin::Flip),
    }
}

pub fn builtin_trig() -> ParametricModel {
    ParametricModel {
        name: "trig".into(),
        dim: 2,
        domain: (0.0, FRAC_PI_2),
        kind: ModelKind::Builtin(Builtin::Trig),
    }
}

pub fn builtin(b: Builtin) -> ParametricModel {
    match b {
        Builtin::Flip => builtin_flip(),
        Builtin::Trig => builtin_trig(),
    }
}

impl ParametricModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn builtin(&self) -> Option<Builtin> {
        match self.kind {
            ModelKind::Builtin(b) => Some(b),
            _ => None,
        }
    }

    /// True when every `rho_at` is diagonal in the computational basis.
    pub fn is_diagonal(&self) -> bool {
        !matches!(self.kind, ModelKind::Dense(_))
    }

    pub fn eigencurve_source(&self) -> EigencurveSource {
        match self.kind {
            ModelKind::Dense(_) => EigencurveSource::Numeric,
            _ => EigencurveSource::Analytic,
        }
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.domain.0 && theta <= self.domain.1
    }

    pub fn check_domain(&self, theta: f64) -> Result<()> {
        if self.contains(theta) {
            Ok(())
        } else {
            Err(ModelError::OutOfDomain {
                theta,
                min: self.domain.0,
                max: self.domain.1,
            })
        }
    }

    pub fn rho_at(&self, theta: f64) -> Result<DensityOperator> {
        Ok(self.rho_and_drho_at(theta)?.0)
    }

    pub fn drho_at(&self, theta: f64) -> Result<HermitianOperator> {
        Ok(self.rho_and_drho_at(theta)?.1)
    }

    pub fn rho_and_drho_at(&self, theta: f64) -> Result<(DensityOperator, HermitianOperator)> {
        self.check_domain(theta)?;
        let (rho, drho) = self.raw_entries(theta)?;
        let rho = HermitianOperator::with_tolerance(rho, SPEC_TOL)?;
        let drho = HermitianOperator::with_tolerance(drho, SPEC_TOL)?;
        let trace = rho.trace();
        let rho = if matches!(self.kind, ModelKind::Builtin(_)) || trace == 1.0 {
            rho
        } else if (trace - 1.0).abs() <= SPEC_TOL {
            HermitianOperator::new(rho.into_matrix() / C64::new(trace, 0.0))?
        } else {
            return Err(ModelError::Trace {
                theta,
                deviation: trace - 1.0,
            });
        };
        Ok((DensityOperator::new(rho)?, drho))
    }

    /// Diagonal eigenvalue curves in declared order (analytic models only).
    fn declared_curves(&self, theta: f64) -> Result<Option<Vec<Dual2>>> {
        Ok(match &self.kind {
            ModelKind::Builtin(Builtin::Flip) => Some(vec![
                Dual2::new(1.0 - theta, -1.0, 0.0),
                Dual2::new(theta, 1.0, 0.0),
            ]),
            ModelKind::Builtin(Builtin::Trig) => {
                let (s, c) = sin_cos_exact(theta);
                let sin2 = 2.0 * s * c;
                let cos2 = c * c - s * s;
                Some(vec![
                    Dual2::new(c * c, -sin2, -2.0 * cos2),
                    Dual2::new(s * s, sin2, 2.0 * cos2),
                ])
            }
            ModelKind::Diagonal(exprs) => Some(
                exprs
                    .iter()
                    .enumerate()
                    .map(|(j, e)| {
                        e.eval_dual2(theta).map_err(|source| ModelError::Eval {
                            field: format!("eigenvalues[{j}]"),
                            source,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            ModelKind::Dense(_) => None,
        })
    }

    fn raw_entries(&self, theta: f64) -> Result<(CMatrix, CMatrix)> {
        let d = self.dim;
        let mut rho = CMatrix::zeros(d, d);
        let mut drho = CMatrix::zeros(d, d);
        if let Some(curves) = self.declared_curves(theta)? {
            for (j, c) in curves.iter().enumerate() {
                rho[(j, j)] = C64::new(c.v, 0.0);
                drho[(j, j)] = C64::new(c.d1, 0.0);
            }
            return Ok((rho, drho));
        }
        let ModelKind::Dense(entries) = &self.kind else {
            unreachable!("non-dense models declare their curves")
        };
        for (j, row) in entries.iter().enumerate() {
            for (k, (re, im)) in row.iter().enumerate() {
                let field = |part: &str| format!("entries[{j}][{k}].{part}");
                let re = re.eval_dual2(theta).map_err(|source| ModelError::Eval {
                    field: field("re"),
                    source,
                })?;
                let im = im.eval_dual2(theta).map_err(|source| ModelError::Eval {
                    field: field("im"),
                    source,
                })?;
                rho[(j, k)] = C64::new(re.v, im.v);
                drho[(j, k)] = C64::new(re.d1, im.d1);
            }
        }
        Ok((rho, drho))
    }

    pub fn decompose(&self, theta: f64, rank_tol: Option<f64>) -> Result<SpectralDecomposition> {
        Ok(eigh(self.rho_at(theta)?.op(), rank_tol))
    }

    /// Finite-difference step used by every numeric derivative on this model.
    pub fn fd_step(theta: f64) -> f64 {
        1e-4 * theta.abs().max(1.0)
    }
}

// ---------------------------------------------------------------------------
// Model-spec files

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecKind {
    Diagonal,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntrySpec {
    pub re: String,
    pub im: String,
}

/// JSON model description. Exactly one of `eigenvalues` (diagonal kind) or
/// `entries` (dense kind) is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub dim: usize,
    pub domain: [f64; 2],
    pub kind: SpecKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<Vec<EntrySpec>>>,
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn diagonal(name: &str, domain: [f64; 2], eigenvalues: &[&str]) -> Self {
        Self {
            name: name.into(),
            dim: eigenvalues.len(),
            domain,
            kind: SpecKind::Diagonal,
            eigenvalues: Some(eigenvalues.iter().map(|s| s.to_string()).collect()),
            entries: None,
        }
    }
}

fn parse_field(field: String, text: &str) -> Result<Expr> {
    expr::parse(text).map_err(|source| ModelError::Parse { field, source })
}

/// Builds a model from a spec, validating trace, Hermiticity and positivity
/// on a 101-point grid over the domain.
pub fn from_spec(spec: &ModelSpec) -> Result<ParametricModel> {
    let [lo, hi] = spec.domain;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(ModelError::Schema(format!(
            "domain [{lo}, {hi}] must be finite with min < max"
        )));
    }
    if spec.dim == 0 {
        return Err(ModelError::Schema("dim must be positive".into()));
    }
    let kind = match (spec.kind, &spec.eigenvalues, &spec.entries) {
        (SpecKind::Diagonal, Some(eigs), None) => {
            if eigs.len() != spec.dim {
                return Err(ModelError::Schema(format!(
                    "{} eigenvalue expressions for dim {}",
                    eigs.len(),
                    spec.dim
                )));
            }
            ModelKind::Diagonal(
                eigs.iter()
                    .enumerate()
                    .map(|(j, s)| parse_field(format!("eigenvalues[{j}]"), s))
                    .collect::<Result<_>>()?,
            )
        }
        (SpecKind::Dense, None, Some(rows)) => {
            if rows.len() != spec.dim || rows.iter().any(|r| r.len() != spec.dim) {
                return Err(ModelError::Schema(format!(
                    "entries must be a {0}x{0} grid",
                    spec.dim
                )));
            }
            let mut grid = Vec::with_capacity(spec.dim);
            for (j, row) in rows.iter().enumerate() {
                let mut out = Vec::with_capacity(spec.dim);
                for (k, e) in row.iter().enumerate() {
                    out.push((
                        parse_field(format!("entries[{j}][{k}].re"), &e.re)?,
                        parse_field(format!("entries[{j}][{k}].im"), &e.im)?,
                    ));
                }
                grid.push(out);
            }
            ModelKind::Dense(grid)
        }
        (SpecKind::Diagonal, _, _) => {
            return Err(ModelError::Schema(
                "diagonal kind needs 'eigenvalues' and no 'entries'".into(),
            ))
        }
        (SpecKind::Dense, _, _) => {
            return Err(ModelError::Schema(
                "dense kind needs 'entries' and no 'eigenvalues'".into(),
            ))
        }
    };
    let model = ParametricModel {
        name: spec.name.clone(),
        dim: spec.dim,
        domain: (lo, hi),
        kind,
    };
    validate_on_grid(&model)?;
    Ok(model)
}

fn validate_on_grid(model: &ParametricModel) -> Result<()> {
    let (lo, hi) = model.domain;
    let mut worst_trace = (0.0_f64, lo);
    let mut worst_herm = (0.0_f64, lo);
    let mut worst_eig = (0.0_f64, lo);
    for i in 0..VALIDATION_GRID {
        let theta = grid_point(lo, hi, VALIDATION_GRID, i);
        let (rho, _) = model.raw_entries(theta)?;
        let trace: f64 = rho.diagonal().iter().map(|z| z.re).sum();
        let mut asym = 0.0_f64;
        for j in 0..model.dim {
            for k in 0..model.dim {
                asym = asym.max((rho[(j, k)] - rho[(k, j)].conj()).norm());
            }
        }
        if (trace - 1.0).abs() > worst_trace.0 {
            worst_trace = ((trace - 1.0).abs(), theta);
        }
        if asym > worst_herm.0 {
            worst_herm = (asym, theta);
        }
        if asym <= SPEC_TOL {
            let h = HermitianOperator::with_tolerance(rho, SPEC_TOL)?;
            let min = eigh(&h, None).eigenvalues()[0];
            if min < worst_eig.0 {
                worst_eig = (min, theta);
            }
        }
    }
    if worst_herm.0 > SPEC_TOL {
        return Err(ModelError::Hermiticity {
            theta: worst_herm.1,
            asymmetry: worst_herm.0,
        });
    }
    if worst_trace.0 > SPEC_TOL {
        return Err(ModelError::Trace {
            theta: worst_trace.1,
            deviation: worst_trace.0,
        });
    }
    if worst_eig.0 < -crate::numlin::PSD_TOL {
        return Err(ModelError::NotPsd {
            theta: worst_eig.1,
            eigenvalue: worst_eig.0,
        });
    }
    Ok(())
}

/// `i`-th of `steps` equally spaced points on `[lo, hi]`; the last point is
/// exactly `hi`.
pub fn grid_point(lo: f64, hi: f64, steps: usize, i: usize) -> f64 {
    if steps < 2 || i == 0 {
        lo
    } else if i + 1 == steps {
        hi
    } else {
        lo + (hi - lo) * (i as f64) / ((steps - 1) as f64)
    }
}

pub fn grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..steps).map(|i| grid_point(lo, hi, steps, i)).collect()
}

// ---------------------------------------------------------------------------
// Eigenvalue curves

/// `(lambda, lambda', lambda'')` of one eigenvalue curve at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl From<Dual2> for CurvePoint {
    fn from(d: Dual2) -> Self {
        Self {
            value: d.v,
            d1: d.d1,
            d2: d.d2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingPolicy {
    /// Curves follow the declared eigenvalue expressions, never re-sorted.
    Declared,
    /// Eigenvalues matched across the stencil by maximal eigenvector overlap.
    OverlapMatched,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenCurvesAt {
    pub theta: f64,
    pub curves: Vec<CurvePoint>,
    pub policy: MatchingPolicy,
    /// False when some overlap match was ambiguous.
    pub reliable: bool,
    pub warnings: Vec<String>,
}

/// Eigenvalue curves of a model, labelled consistently near an anchor point.
///
/// Analytic models ignore the anchor. Numeric models label curves by the
/// eigenvectors of `rho(anchor)` so evaluations at nearby points stay
/// comparable.
pub struct EigenCurves<'a> {
    model: &'a ParametricModel,
    anchor: Option<CMatrix>,
}

impl<'a> EigenCurves<'a> {
    pub fn new(model: &'a ParametricModel, anchor_theta: f64) -> Result<Self> {
        let anchor = match model.eigencurve_source() {
            EigencurveSource::Analytic => None,
            EigencurveSource::Numeric => {
                Some(model.decompose(anchor_theta, None)?.eigenvectors().clone())
            }
        };
        Ok(Self { model, anchor })
    }

    pub fn model(&self) -> &ParametricModel {
        self.model
    }

    pub fn at(&self, theta: f64) -> Result<EigenCurvesAt> {
        self.model.check_domain(theta)?;
        if let Some(curves) = self.model.declared_curves(theta)? {
            return Ok(EigenCurvesAt {
                theta,
                curves: curves.into_iter().map(CurvePoint::from).collect(),
                policy: MatchingPolicy::Declared,
                reliable: true,
                warnings: Vec::new(),
            });
        }
        let anchor = match &self.anchor {
            Some(a) => a.clone(),
            None => self.model.decompose(theta, None)?.eigenvectors().clone(),
        };
        self.numeric_at(theta, &anchor)
    }

    fn numeric_at(&self, theta: f64, anchor: &CMatrix) -> Result<EigenCurvesAt> {
        let (lo, hi) = self.model.domain;
        let h = ParametricModel::fd_step(theta);
        // offsets in units of h
        let offsets: [i32; 5] = if theta - 2.0 * h >= lo && theta + 2.0 * h <= hi {
            [-2, -1, 0, 1, 2]
        } else if theta + 4.0 * h <= hi {
            [0, 1, 2, 3, 4]
        } else if theta - 4.0 * h >= lo {
            [0, -1, -2, -3, -4]
        } else {
            return Err(ModelError::StencilOutsideDomain { theta });
        };
        let d = self.model.dim;
        let mut values = vec![[0.0_f64; 5]; d];
        let mut reliable = true;
        let mut warnings = Vec::new();
        for (slot, &k) in offsets.iter().enumerate() {
            let t = if k == 0 { theta } else { theta + f64::from(k) * h };
            let dec = self.model.decompose(t, None)?;
            let (perm, ok) = match_by_overlap(anchor, dec.eigenvectors());
            if !ok {
                reliable = false;
                warnings.push(format!("ambiguous eigenvector matching at theta = {t}"));
            }
            for (j, &i) in perm.iter().enumerate() {
                values[j][slot] = dec.eigenvalues()[i];
            }
        }
        let curves = values
            .iter()
            .map(|f| {
                let (d1, d2) = match offsets[0] {
                    -2 => (
                        (-f[4] + 8.0 * f[3] - 8.0 * f[1] + f[0]) / (12.0 * h),
                        (-f[4] + 16.0 * f[3] - 30.0 * f[2] + 16.0 * f[1] - f[0]) / (12.0 * h * h),
                    ),
                    _ => {
                        let s = f64::from(offsets[1]);
                        (
                            s * (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4])
                                / (12.0 * h),
                            (35.0 * f[0] - 104.0 * f[1] + 114.0 * f[2] - 56.0 * f[3] + 11.0 * f[4])
                                / (12.0 * h * h),
                        )
                    }
                };
                let value = if offsets[0] == -2 { f[2] } else { f[0] };
                CurvePoint { value, d1, d2 }
            })
            .collect();
        Ok(EigenCurvesAt {
            theta,
            curves,
            policy: MatchingPolicy::OverlapMatched,
            reliable,
            warnings,
        })
    }
}

/// For each anchor column `j`, the column of `vecs` with the largest overlap.
/// Falls back to the identity labelling when the result is not a
/// permutation. The flag is false on ambiguity.
fn match_by_overlap(anchor: &CMatrix, vecs: &CMatrix) -> (Vec<usize>, bool) {
    let d = anchor.ncols();
    let mut perm = Vec::with_capacity(d);
    let mut ok = true;
    for j in 0..d {
        let a: DVector<C64> = anchor.column(j).into_owned();
        let mut ov: Vec<(f64, usize)> = (0..d)
            .map(|i| (a.dotc(&vecs.column(i)).norm(), i))
            .collect();
        ov.sort_by(|x, y| y.0.total_cmp(&x.0));
        if d > 1 && ov[0].0 - ov[1].0 < MATCH_AMBIGUITY {
            ok = false;
        }
        perm.push(ov[0].1);
    }
    let mut seen = vec![false; d];
    for &i in &perm {
        if seen[i] {
            return ((0..d).collect(), false);
        }
        seen[i] = true;
    }
    (perm, ok)
}

/// Curves of `model` at `theta`, anchored at `theta` itself.
pub fn eigencurves(model: &ParametricModel, theta: f64) -> Result<EigenCurvesAt> {
    EigenCurves::new(model, theta)?.at(theta)
}
