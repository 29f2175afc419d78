//! Quantum Fisher information under its three expressions.
//!
//! * `F2`: the spectral sum `sum 2/(l_j + l_k) |<e_j|drho|e_k>|^2` over
//!   pairs with `l_j + l_k > tau`.
//! * `F3`: eight times the second-order coefficient of `1 - fidelity`
//!   between `rho(theta)` and `rho(theta + eps)`, i.e. the Bures metric.
//! * `F1`: `||Q||_2^2` with `Q` the bounded stand-in for `L sqrt(rho)`.
//!
//! All three agree where the rank of `rho` is locally constant. At a
//! rank-changing point `F3 - F2 = sum 2 lambda_k''` over the vanishing
//! eigenvalue curves, and a positive gap forces the SLD to be unbounded
//! near that point.

use serde::Serialize;
use thiserror::Error;

use crate::models::{EigenCurves, EigencurveSource, ModelError, ParametricModel};
use crate::numlin::{
    eigh, fidelity, frobenius_sq, max_abs, sqrt_from_decomp, CMatrix, HermitianOperator,
    NumlinError, SpectralDecomposition, C64,
};

#[derive(Debug, Error)]
pub enum QfiError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Numlin(#[from] NumlinError),

    #[error("finite-difference step {eps} does not fit in the domain around theta = {theta}")]
    StepTooLarge { theta: f64, eps: f64 },
}

pub type Result<T> = std::result::Result<T, QfiError>;

/// A value that is either finite or flagged as divergent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Quantity {
    Finite(f64),
    Divergent,
}

impl Quantity {
    pub fn finite(self) -> Option<f64> {
        match self {
            Quantity::Finite(x) => Some(x),
            Quantity::Divergent => None,
        }
    }

    pub fn is_divergent(self) -> bool {
        matches!(self, Quantity::Divergent)
    }

    /// `1 / self`, zero when divergent.
    pub fn reciprocal(self) -> Quantity {
        match self {
            Quantity::Finite(x) if x == 0.0 => Quantity::Divergent,
            Quantity::Finite(x) => Quantity::Finite(1.0 / x),
            Quantity::Divergent => Quantity::Finite(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QfiConfig {
    /// Absolute rank tolerance; `None` uses `1e-12 * max(lambda_max, 1)`.
    pub rank_tol: Option<f64>,
    /// Base displacement for the fidelity finite differences.
    pub fd_eps: f64,
    /// Probe offsets for one-sided limits (scaled by `max(1, |theta|)`).
    pub probe_steps: [f64; 3],
}

impl Default for QfiConfig {
    fn default() -> Self {
        Self {
            rank_tol: None,
            fd_eps: 1e-3,
            probe_steps: [1e-3, 1e-4, 1e-5],
        }
    }
}

fn pair_defined(decomp: &SpectralDecomposition, j: usize, k: usize, tau: f64) -> bool {
    decomp.eigenvalues()[j] + decomp.eigenvalues()[k] > tau
}

// ---------------------------------------------------------------------------
// SLD

/// Symmetric logarithmic derivative restricted to the pairs where it is
/// determined (`l_j + l_k > tau`). Undetermined elements are stored as zero.
#[derive(Debug, Clone)]
pub struct SldOperator {
    /// `<e_j|L|e_k>`.
    eigen: CMatrix,
    /// `L` in the computational basis.
    op: CMatrix,
    defined: Vec<Vec<bool>>,
    sup_element: f64,
}

impl SldOperator {
    pub fn matrix(&self) -> &CMatrix {
        &self.op
    }

    pub fn eigenbasis_matrix(&self) -> &CMatrix {
        &self.eigen
    }

    /// Pair mask in eigenbasis order.
    pub fn defined_mask(&self) -> &[Vec<bool>] {
        &self.defined
    }

    pub fn is_defined(&self, j: usize, k: usize) -> bool {
        self.defined[j][k]
    }

    pub fn fully_defined(&self) -> bool {
        self.defined.iter().all(|r| r.iter().all(|&b| b))
    }

    /// Largest modulus over defined elements.
    pub fn sup_element(&self) -> f64 {
        self.sup_element
    }

    /// `|| (L rho + rho L)/2 - P(drho) ||_2` where `P` keeps only the pairs on
    /// which `L` is defined.
    pub fn residual(&self, decomp: &SpectralDecomposition, drho: &HermitianOperator) -> f64 {
        let d = decomp.dim();
        let mut dr = decomp.to_eigenbasis(drho.matrix());
        for j in 0..d {
            for k in 0..d {
                if !self.defined[j][k] {
                    dr[(j, k)] = C64::new(0.0, 0.0);
                }
            }
        }
        let lam = decomp.eigenvalues();
        let mut res = CMatrix::zeros(d, d);
        for j in 0..d {
            for k in 0..d {
                res[(j, k)] = self.eigen[(j, k)] * (0.5 * (lam[j] + lam[k])) - dr[(j, k)];
            }
        }
        frobenius_sq(&res).sqrt()
    }
}

pub fn solve_sld(decomp: &SpectralDecomposition, drho: &HermitianOperator, tau: f64) -> SldOperator {
    let d = decomp.dim();
    let dr = decomp.to_eigenbasis(drho.matrix());
    let lam = decomp.eigenvalues();
    let mut eigen = CMatrix::zeros(d, d);
    let mut defined = vec![vec![false; d]; d];
    let mut sup = 0.0_f64;
    for j in 0..d {
        for k in 0..d {
            if pair_defined(decomp, j, k, tau) {
                let l = dr[(j, k)] * (2.0 / (lam[j] + lam[k]));
                eigen[(j, k)] = l;
                defined[j][k] = true;
                sup = sup.max(l.norm());
            }
        }
    }
    let op = decomp.from_eigenbasis(&eigen);
    SldOperator {
        eigen,
        op,
        defined,
        sup_element: sup,
    }
}

/// Spectral-sum QFI over pairs with `l_j + l_k > tau`.
pub fn qfi_f2(decomp: &SpectralDecomposition, drho: &HermitianOperator, tau: f64) -> f64 {
    let d = decomp.dim();
    let dr = decomp.to_eigenbasis(drho.matrix());
    let lam = decomp.eigenvalues();
    let mut sum = 0.0;
    for j in 0..d {
        for k in 0..d {
            if pair_defined(decomp, j, k, tau) {
                sum += 2.0 / (lam[j] + lam[k]) * dr[(j, k)].norm_sqr();
            }
        }
    }
    sum
}

/// `sum_j l_j <e_j|L^2|e_j>` over defined SLD elements; equals [`qfi_f2`].
pub fn qfi_from_sld(decomp: &SpectralDecomposition, sld: &SldOperator) -> f64 {
    let d = decomp.dim();
    let lam = decomp.eigenvalues();
    let mut sum = 0.0;
    for j in 0..d {
        for k in 0..d {
            if sld.defined[j][k] {
                sum += lam[j].max(0.0) * sld.eigen[(j, k)].norm_sqr();
            }
        }
    }
    sum
}

// ---------------------------------------------------------------------------
// F3 from fidelity

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F3Estimate {
    pub value: Quantity,
    /// Largest displacement actually used.
    pub eps: f64,
    pub direction: Direction,
    /// True when the requested step had to be reduced to fit the domain.
    pub shrunk: bool,
    /// Raw difference quotients at `eps`, `eps/2`, `eps/4`.
    pub sequence: [f64; 3],
}

const GROWTH_RATIO: f64 = 1.25;

fn richardson3(g: [f64; 3], even: bool) -> f64 {
    if even {
        let a = (4.0 * g[1] - g[0]) / 3.0;
        let b = (4.0 * g[2] - g[1]) / 3.0;
        (16.0 * b - a) / 15.0
    } else {
        let a = 2.0 * g[1] - g[0];
        let b = 2.0 * g[2] - g[1];
        (4.0 * b - a) / 3.0
    }
}

fn classify(g: [f64; 3], even: bool) -> Quantity {
    let grows = g[1] > GROWTH_RATIO * g[0] && g[2] > GROWTH_RATIO * g[1] && g[2] > 1.0;
    let r = richardson3(g, even);
    if grows || !r.is_finite() || r > 1e12 {
        Quantity::Divergent
    } else {
        Quantity::Finite(r)
    }
}

fn fid_quotient(model: &ParametricModel, a: f64, b: f64, eps: f64) -> Result<f64> {
    let ra = model.rho_at(a)?;
    let rb = model.rho_at(b)?;
    let f = fidelity(&ra, &rb)?;
    Ok(8.0 * (1.0 - f) / (eps * eps))
}

/// One-sided Bures-metric QFI at `theta`.
///
/// Uses `rho(theta + eps)` when that fits in the domain, otherwise
/// `rho(theta - eps)`; when neither fits the step is shrunk to the larger
/// room available. The quotients at `eps, eps/2, eps/4` are combined by
/// Richardson extrapolation; a sequence that keeps growing is reported as
/// divergent.
pub fn qfi_f3_fd(model: &ParametricModel, theta: f64, eps0: f64) -> Result<F3Estimate> {
    model.check_domain(theta)?;
    let (lo, hi) = model.domain();
    let (mut eps, mut direction, mut shrunk) = (eps0, Direction::Forward, false);
    if theta + eps0 > hi {
        if theta - eps0 >= lo {
            direction = Direction::Backward;
        } else {
            let (up, down) = (hi - theta, theta - lo);
            shrunk = true;
            if up >= down {
                eps = up;
            } else {
                eps = down;
                direction = Direction::Backward;
            }
            if eps <= 0.0 {
                return Err(QfiError::StepTooLarge { theta, eps: eps0 });
            }
        }
    }
    let sign = if direction == Direction::Forward { 1.0 } else { -1.0 };
    let mut g = [0.0; 3];
    for (i, gi) in g.iter_mut().enumerate() {
        let e = eps / f64::from(1u32 << i);
        *gi = fid_quotient(model, theta, theta + sign * e, e)?;
    }
    Ok(F3Estimate {
        value: classify(g, false),
        eps,
        direction,
        shrunk,
        sequence: g,
    })
}

/// Symmetric-displacement variant `8 (1 - F(rho(t - e/2), rho(t + e/2))) / e^2`.
/// This is the limit of the spectral sum, so it tracks `F2` rather than
/// `F3` at rank-changing points. `None` when `theta +- eps0/2` leaves the
/// domain.
pub fn qfi_f3_symmetric(model: &ParametricModel, theta: f64, eps0: f64) -> Result<Option<F3Estimate>> {
    model.check_domain(theta)?;
    let (lo, hi) = model.domain();
    if theta - eps0 / 2.0 < lo || theta + eps0 / 2.0 > hi {
        return Ok(None);
    }
    let mut g = [0.0; 3];
    for (i, gi) in g.iter_mut().enumerate() {
        let e = eps0 / f64::from(1u32 << i);
        *gi = fid_quotient(model, theta - e / 2.0, theta + e / 2.0, e)?;
    }
    Ok(Some(F3Estimate {
        value: classify(g, true),
        eps: eps0,
        direction: Direction::Symmetric,
        shrunk: false,
        sequence: g,
    }))
}

// ---------------------------------------------------------------------------
// Q operator

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QConstruction {
    /// `Q = L sqrt(rho)` evaluated at the point itself.
    Product,
    /// One-sided limit of the product form towards a rank-changing point.
    Limit,
}

#[derive(Debug, Clone)]
pub struct QOperator {
    /// `None` when the limit does not converge (unbounded `Q`).
    pub op: Option<CMatrix>,
    pub construction: QConstruction,
    /// `||Q||_2^2`.
    pub norm_sq: Quantity,
    /// Largest `||(Q sqrt(rho) + sqrt(rho) Q^dag)/2 - drho||_2` over the
    /// points where `Q` was formed (the probes, for a limit).
    pub residual_sld: f64,
    /// Largest `||sqrt(rho) Q - Q^dag sqrt(rho)||_2` over the same points.
    pub residual_hermitian: f64,
    /// Parameter values at which the product form was evaluated.
    pub probes: Vec<f64>,
}

/// `L sqrt(rho)` from the spectral data, in the computational basis.
pub fn product_q(decomp: &SpectralDecomposition, drho: &HermitianOperator, tau: f64) -> CMatrix {
    let d = decomp.dim();
    let dr = decomp.to_eigenbasis(drho.matrix());
    let lam = decomp.eigenvalues();
    let mut q = CMatrix::zeros(d, d);
    for j in 0..d {
        for k in 0..d {
            if pair_defined(decomp, j, k, tau) {
                let sk = if decomp.in_kernel(k) { 0.0 } else { lam[k].max(0.0).sqrt() };
                q[(j, k)] = dr[(j, k)] * (2.0 * sk / (lam[j] + lam[k]));
            }
        }
    }
    decomp.from_eigenbasis(&q)
}

/// Residuals of the two defining conditions of `Q`.
pub fn q_residuals(q: &CMatrix, sqrt_rho: &CMatrix, drho: &HermitianOperator) -> (f64, f64) {
    let a = q * sqrt_rho;
    let b = sqrt_rho * q.adjoint();
    let r1 = (&a + &b) * C64::new(0.5, 0.0) - drho.matrix();
    let r2 = sqrt_rho * q - q.adjoint() * sqrt_rho;
    (frobenius_sq(&r1).sqrt(), frobenius_sq(&r2).sqrt())
}

struct ProductAt {
    q: CMatrix,
    residuals: (f64, f64),
}

fn product_at(model: &ParametricModel, theta: f64, rank_tol: Option<f64>) -> Result<ProductAt> {
    let (rho, drho) = model.rho_and_drho_at(theta)?;
    let decomp = eigh(rho.op(), rank_tol);
    let tau = decomp.rank_tol();
    let q = product_q(&decomp, &drho, tau);
    let sqrt_rho = sqrt_from_decomp(&decomp);
    let residuals = q_residuals(&q, sqrt_rho.matrix(), &drho);
    Ok(ProductAt { q, residuals })
}

/// Rank of `rho(theta)` and whether it differs from the rank at the probe
/// points `theta +- h` that lie in the domain.
pub fn rank_change(model: &ParametricModel, theta: f64, rank_tol: Option<f64>) -> Result<(usize, bool)> {
    let rank = model.decompose(theta, rank_tol)?.rank();
    let h = ParametricModel::fd_step(theta);
    let mut singular = false;
    for t in [theta - h, theta + h] {
        if model.contains(t) && model.decompose(t, rank_tol)?.rank() != rank {
            singular = true;
        }
    }
    Ok((rank, singular))
}

/// Side (+1 or -1) on which all probe points fit in the domain, preferring +1.
fn probe_side(model: &ParametricModel, theta: f64, steps: &[f64; 3]) -> Option<f64> {
    let scale = theta.abs().max(1.0);
    let max_h = steps.iter().copied().fold(0.0, f64::max) * scale;
    if model.contains(theta + max_h) {
        Some(1.0)
    } else if model.contains(theta - max_h) {
        Some(-1.0)
    } else {
        None
    }
}

pub fn build_q(model: &ParametricModel, theta: f64, cfg: &QfiConfig) -> Result<QOperator> {
    let (_, singular) = rank_change(model, theta, cfg.rank_tol)?;
    if !singular {
        let p = product_at(model, theta, cfg.rank_tol)?;
        let norm_sq = frobenius_sq(&p.q);
        return Ok(QOperator {
            op: Some(p.q),
            construction: QConstruction::Product,
            norm_sq: Quantity::Finite(norm_sq),
            residual_sld: p.residuals.0,
            residual_hermitian: p.residuals.1,
            probes: vec![theta],
        });
    }
    let side = probe_side(model, theta, &cfg.probe_steps)
        .ok_or(QfiError::StepTooLarge { theta, eps: cfg.probe_steps[0] })?;
    let scale = theta.abs().max(1.0);
    let probes: Vec<f64> = cfg
        .probe_steps
        .iter()
        .map(|h| theta + side * h * scale)
        .collect();
    let samples = probes
        .iter()
        .map(|&t| product_at(model, t, cfg.rank_tol))
        .collect::<Result<Vec<_>>>()?;
    let residual_sld = samples.iter().map(|s| s.residuals.0).fold(0.0, f64::max);
    let residual_hermitian = samples.iter().map(|s| s.residuals.1).fold(0.0, f64::max);
    let (q1, q2, q3) = (&samples[0].q, &samples[1].q, &samples[2].q);
    let c1 = max_abs(&(q2 - q1));
    let c2 = max_abs(&(q3 - q2));
    let converged = c2 < c1 || c2 <= 1e-12 * (1.0 + max_abs(q3));
    if !converged {
        return Ok(QOperator {
            op: None,
            construction: QConstruction::Limit,
            norm_sq: Quantity::Divergent,
            residual_sld,
            residual_hermitian,
            probes,
        });
    }
    // probe steps shrink by a common ratio (10 for the defaults)
    let ratio = cfg.probe_steps[0] / cfg.probe_steps[1];
    let r1a = (q2 * C64::new(ratio, 0.0) - q1) / C64::new(ratio - 1.0, 0.0);
    let r1b = (q3 * C64::new(ratio, 0.0) - q2) / C64::new(ratio - 1.0, 0.0);
    let r2 = (r1b * C64::new(ratio * ratio, 0.0) - r1a) / C64::new(ratio * ratio - 1.0, 0.0);
    let norm_sq = frobenius_sq(&r2);
    Ok(QOperator {
        op: Some(r2),
        construction: QConstruction::Limit,
        norm_sq: Quantity::Finite(norm_sq),
        residual_sld,
        residual_hermitian,
        probes,
    })
}

// ---------------------------------------------------------------------------
// Discrepancy between F3 and F2

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaReport {
    /// `sum 2 lambda_k''` over the vanishing curves.
    pub delta: f64,
    /// Curves with `lambda_k <= tau` at the point but not at both
    /// neighbours `theta +- h`.
    pub kernel_curves: Vec<usize>,
    /// Extrapolated `sum lambda_k'^2 / lambda_k` approaching the point;
    /// `None` when there is no vanishing curve.
    pub limit_form: Option<Quantity>,
    /// Whether the limit form agrees with `delta` within 1e-3 relative;
    /// `None` unless both are finite.
    pub consistent: Option<bool>,
    pub reliable: bool,
    pub warnings: Vec<String>,
}

pub fn delta_discrepancy(curves: &EigenCurves<'_>, theta: f64, tau: f64) -> Result<DeltaReport> {
    let at = curves.at(theta)?;
    let mut warnings = at.warnings.clone();
    let mut reliable = at.reliable;
    let mut kernel_curves: Vec<usize> = at
        .curves
        .iter()
        .enumerate()
        .filter(|(_, c)| c.value <= tau)
        .map(|(k, _)| k)
        .collect();
    // A curve that is also zero at both neighbours is identically zero
    // there; its stencil second derivative is rounding noise.
    if !kernel_curves.is_empty() {
        let h = ParametricModel::fd_step(theta);
        let mut flat = vec![true; at.curves.len()];
        for t in [theta - h, theta + h] {
            if curves.model().contains(t) {
                let near = curves.at(t)?;
                reliable &= near.reliable;
                for (k, c) in near.curves.iter().enumerate() {
                    flat[k] &= c.value <= tau;
                }
            }
        }
        kernel_curves.retain(|&k| !flat[k]);
    }
    let delta: f64 = kernel_curves.iter().map(|&k| 2.0 * at.curves[k].d2).sum();

    let limit_form = if kernel_curves.is_empty() {
        None
    } else {
        let model = curves.model();
        let (lo, hi) = model.domain();
        let scale = theta.abs().max(1.0);
        let hs = [1e-3 * scale, 1e-4 * scale];
        let side = if theta + hs[0] <= hi {
            1.0
        } else if theta - hs[0] >= lo {
            -1.0
        } else {
            0.0
        };
        if side == 0.0 {
            warnings.push("no room for the limit-form check".into());
            None
        } else {
            let mut r = [0.0_f64; 2];
            for (i, h) in hs.iter().enumerate() {
                let probe = curves.at(theta + side * h)?;
                reliable &= probe.reliable;
                warnings.extend(probe.warnings);
                r[i] = kernel_curves
                    .iter()
                    .map(|&k| {
                        let c = probe.curves[k];
                        if c.value > 0.0 {
                            c.d1 * c.d1 / c.value
                        } else if c.d1.abs() <= 1e-12 {
                            0.0
                        } else {
                            f64::INFINITY
                        }
                    })
                    .sum();
            }
            let grows = r[1] > 5.0 * r[0] && r[1] > 1.0;
            if grows || !r[1].is_finite() {
                Some(Quantity::Divergent)
            } else {
                Some(Quantity::Finite((10.0 * r[1] - r[0]) / 9.0))
            }
        }
    };
    let consistent = match limit_form {
        Some(Quantity::Finite(l)) => Some((l - delta).abs() <= 1e-3 * delta.abs().max(1.0)),
        _ => None,
    };
    if consistent == Some(false) {
        warnings.push(format!(
            "limit form {:?} disagrees with second-derivative delta {delta}",
            limit_form
        ));
    }
    Ok(DeltaReport {
        delta,
        kernel_curves,
        limit_form,
        consistent,
        reliable,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Per-point report

/// Sup of the defined SLD elements at probe points approaching `theta`.
/// The SLD is judged unbounded when, on some side, the sup grows by more
/// than a factor 2 at each step towards `theta`.
pub fn sld_growth(model: &ParametricModel, theta: f64, cfg: &QfiConfig) -> Result<(bool, Vec<[f64; 3]>)> {
    let scale = theta.abs().max(1.0);
    let mut sides = Vec::new();
    let mut bounded = true;
    for side in [1.0, -1.0] {
        let ts: Vec<f64> = cfg
            .probe_steps
            .iter()
            .map(|h| theta + side * h * scale)
            .collect();
        if !ts.iter().all(|&t| model.contains(t)) {
            continue;
        }
        let mut s = [0.0; 3];
        for (i, &t) in ts.iter().enumerate() {
            let (rho, drho) = model.rho_and_drho_at(t)?;
            let decomp = eigh(rho.op(), cfg.rank_tol);
            s[i] = solve_sld(&decomp, &drho, decomp.rank_tol()).sup_element();
        }
        if s[1] > 2.0 * s[0] && s[2] > 2.0 * s[1] {
            bounded = false;
        }
        sides.push(s);
    }
    Ok((bounded, sides))
}

#[derive(Debug, Clone)]
pub struct QfiReport {
    pub theta: f64,
    pub rank: usize,
    pub is_singular: bool,
    pub f2: f64,
    pub f3: F3Estimate,
    pub f3_symmetric: Option<F3Estimate>,
    pub q: QOperator,
    pub delta: DeltaReport,
    pub sld_sup_element: f64,
    pub sld_residual: f64,
    pub sld_bounded: bool,
    pub eigencurve_source: EigencurveSource,
    pub warnings: Vec<String>,
}

impl QfiReport {
    pub fn f1_q(&self) -> Quantity {
        self.q.norm_sq
    }

    pub fn f3_value(&self) -> Quantity {
        self.f3.value
    }

    /// The QFI that enters the Cramér-Rao bound: the spectral sum where the
    /// rank is locally constant, `F2 + delta` at a rank-changing point, and
    /// divergent when the fidelity metric diverges there.
    pub fn continuous_qfi(&self) -> Quantity {
        if !self.is_singular {
            Quantity::Finite(self.f2)
        } else if self.f3.value.is_divergent() {
            Quantity::Divergent
        } else {
            Quantity::Finite(self.f2 + self.delta.delta)
        }
    }

    /// Human-readable list of report invariants that do not hold.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let f2 = self.f2;
        if self.delta.delta < -1e-8 {
            out.push(format!("delta = {} < 0", self.delta.delta));
        }
        if !self.is_singular {
            if let Quantity::Finite(f3) = self.f3.value {
                if (f2 - f3).abs() >= 1e-4 * f3.max(1.0) {
                    out.push(format!("|f2 - f3| = {}", (f2 - f3).abs()));
                }
            }
            if let Quantity::Finite(f1) = self.f1_q() {
                if (f1 - f2).abs() >= 1e-6 * f2.max(1.0) {
                    out.push(format!("|f1_q - f2| = {}", (f1 - f2).abs()));
                }
            }
        } else if let Quantity::Finite(f3) = self.f3.value {
            let gap = f3 - f2 - self.delta.delta;
            if gap.abs() >= 1e-4 * f3.max(1.0) {
                out.push(format!("f3 - f2 - delta = {gap}"));
            }
        }
        if self.delta.delta > 1e-6 && self.sld_bounded {
            out.push("positive delta with a bounded SLD".into());
        }
        if self.q.op.is_some() && (self.q.residual_sld >= 1e-7 || self.q.residual_hermitian >= 1e-7) {
            out.push(format!(
                "Q residuals {} / {}",
                self.q.residual_sld, self.q.residual_hermitian
            ));
        }
        out
    }
}

pub fn qfi_report(model: &ParametricModel, theta: f64, cfg: &QfiConfig) -> Result<QfiReport> {
    let (rho, drho) = model.rho_and_drho_at(theta)?;
    let decomp = eigh(rho.op(), cfg.rank_tol);
    let tau = decomp.rank_tol();
    let (rank, is_singular) = rank_change(model, theta, cfg.rank_tol)?;
    let f2 = qfi_f2(&decomp, &drho, tau);
    let sld = solve_sld(&decomp, &drho, tau);
    let f3 = qfi_f3_fd(model, theta, cfg.fd_eps)?;
    let f3_symmetric = qfi_f3_symmetric(model, theta, cfg.fd_eps)?;
    let q = build_q(model, theta, cfg)?;
    let curves = EigenCurves::new(model, theta)?;
    let delta = delta_discrepancy(&curves, theta, tau)?;
    let (sld_bounded, _) = sld_growth(model, theta, cfg)?;

    let mut warnings = delta.warnings.clone();
    if f3.shrunk {
        warnings.push(format!("fidelity step shrunk to {}", f3.eps));
    }
    let report = QfiReport {
        theta,
        rank,
        is_singular,
        f2,
        f3,
        f3_symmetric,
        sld_sup_element: sld.sup_element(),
        sld_residual: sld.residual(&decomp, &drho),
        q,
        delta,
        sld_bounded,
        eigencurve_source: model.eigencurve_source(),
        warnings,
    };
    for w in &report.warnings {
        log::warn!("theta = {theta}: {w}");
    }
    Ok(report)
}
