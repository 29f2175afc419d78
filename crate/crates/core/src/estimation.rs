//! Exact statistics for the binomial qubit experiment and the bounds
//! audited against them.
//!
//! Each of `n` copies of `rho = (1 - q)|0><0| + q|1><1|` is measured in the
//! computational basis. The count `t` of 1-outcomes is sufficient, so every
//! expectation is a finite sum over `t = 0..=n` weighted by the binomial pmf.
//! The parameter is either `q` itself (the flip model) or `theta` with
//! `q = sin^2 theta` (the trig model).

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;
use thiserror::Error;

use crate::models::{sin_cos_exact, Builtin, ParametricModel};
use crate::numlin::{CMatrix, DensityOperator, C64};
use crate::qfi::{qfi_report, QfiConfig, QfiError, Quantity};

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("sample count must be at least 1")]
    ZeroSamples,

    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("theta = {theta} outside the domain [{lo}, {hi}]")]
    OutOfDomain { theta: f64, lo: f64, hi: f64 },

    #[error("outcome t = {t} exceeds n = {n}")]
    OutcomeOutOfRange { t: usize, n: usize },

    #[error("estimator '{estimator}' is parameterized by {estimator_param} but the model '{model}' is not the matching binomial model")]
    ParameterizationMismatch {
        estimator: String,
        estimator_param: &'static str,
        model: String,
    },

    #[error("estimator '{name}' is not finite at t = {t}")]
    NonFiniteEstimate { name: String, t: usize },

    #[error(transparent)]
    Qfi(#[from] QfiError),
}

pub type Result<T> = std::result::Result<T, EstimationError>;

/// Compensated (Neumaier) summation.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut c = 0.0_f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

// ---------------------------------------------------------------------------
// Outcome distribution

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    n: usize,
    q: f64,
    pmf: Vec<f64>,
    dpmf_dq: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn dpmf_dq(&self) -> &[f64] {
        &self.dpmf_dq
    }
}

/// Binomial pmf of `t` and its `q`-derivative.
pub fn pmf_family(n: usize, q: f64) -> Result<OutcomeDistribution> {
    pmf_family_split(n, q, 1.0 - q)
}

/// As [`pmf_family`] with the complement `1 - q` supplied separately, so
/// callers that know it more accurately (e.g. `cos^2 theta`) keep that
/// accuracy near `q = 1`.
///
/// The pmf is built by the ratio recurrence outward from the mode and then
/// normalized, which stays accurate to a few ulps times `n` and never
/// overflows.
pub fn pmf_family_split(n: usize, q: f64, qc: f64) -> Result<OutcomeDistribution> {
    if n == 0 {
        return Err(EstimationError::ZeroSamples);
    }
    for p in [q, qc] {
        if !(0.0..=1.0).contains(&p) {
            return Err(EstimationError::ProbabilityOutOfRange(q));
        }
    }
    let nf = n as f64;
    let mut pmf = vec![0.0; n + 1];
    let mut dpmf = vec![0.0; n + 1];
    if q == 0.0 {
        pmf[0] = 1.0;
        dpmf[0] = -nf;
        dpmf[1] = nf;
    } else if qc == 0.0 {
        pmf[n] = 1.0;
        dpmf[n] = nf;
        dpmf[n - 1] = -nf;
    } else {
        let mode = (((n + 1) as f64 * q).floor() as usize).min(n);
        let up = q / qc;
        let down = qc / q;
        pmf[mode] = 1.0;
        for t in mode..n {
            pmf[t + 1] = pmf[t] * ((n - t) as f64 / (t + 1) as f64) * up;
        }
        for t in (1..=mode).rev() {
            pmf[t - 1] = pmf[t] * (t as f64 / (n - t + 1) as f64) * down;
        }
        let total = compensated_sum(pmf.iter().copied());
        for p in pmf.iter_mut() {
            *p /= total;
        }
        let denom = q * qc;
        for t in 0..=n {
            dpmf[t] = pmf[t] * (t as f64 - nf * q) / denom;
        }
    }
    Ok(OutcomeDistribution {
        n,
        q,
        pmf,
        dpmf_dq: dpmf,
    })
}

// ---------------------------------------------------------------------------
// Parameterizations and estimators

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    /// The parameter is `q` on `[0, 1]`.
    Q,
    /// The parameter is `theta` on `[0, pi/2]` with `q = sin^2 theta`.
    Theta,
}

/// `q`, `1 - q` and `dq/dparam` at a parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QPoint {
    pub q: f64,
    pub qc: f64,
    pub dq: f64,
}

impl Parameterization {
    pub fn name(self) -> &'static str {
        match self {
            Parameterization::Q => "q",
            Parameterization::Theta => "theta",
        }
    }

    pub fn domain(self) -> (f64, f64) {
        match self {
            Parameterization::Q => (0.0, 1.0),
            Parameterization::Theta => (0.0, FRAC_PI_2),
        }
    }

    pub fn builtin(self) -> Builtin {
        match self {
            Parameterization::Q => Builtin::Flip,
            Parameterization::Theta => Builtin::Trig,
        }
    }

    pub fn check(self, theta: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if theta.is_finite() && (lo..=hi).contains(&theta) {
            Ok(())
        } else {
            Err(EstimationError::OutOfDomain { theta, lo, hi })
        }
    }

    pub fn q_point(self, theta: f64) -> Result<QPoint> {
        self.check(theta)?;
        Ok(match self {
            Parameterization::Q => QPoint {
                q: theta,
                qc: 1.0 - theta,
                dq: 1.0,
            },
            Parameterization::Theta => {
                let (s, c) = sin_cos_exact(theta);
                QPoint {
                    q: s * s,
                    qc: c * c,
                    dq: 2.0 * s * c,
                }
            }
        })
    }

    pub fn distribution(self, n: usize, theta: f64) -> Result<(OutcomeDistribution, QPoint)> {
        let qp = self.q_point(theta)?;
        Ok((pmf_family_split(n, qp.q, qp.qc)?, qp))
    }

    fn matches(self, model: &ParametricModel) -> bool {
        model.builtin() == Some(self.builtin())
    }
}

pub fn mle_q(t: usize, n: usize) -> f64 {
    t as f64 / n as f64
}

pub fn mle_theta(t: usize, n: usize) -> f64 {
    if t == n {
        return FRAC_PI_2;
    }
    mle_q(t, n).sqrt().asin()
}

/// A function of the sufficient statistic, tagged with the parameter it
/// estimates.
#[derive(Debug, Clone)]
pub struct Estimator {
    name: String,
    parameterization: Parameterization,
    f: fn(usize, usize) -> f64,
}

impl Estimator {
    pub fn new(name: impl Into<String>, parameterization: Parameterization, f: fn(usize, usize) -> f64) -> Self {
        Self {
            name: name.into(),
            parameterization,
            f,
        }
    }

    pub fn mle_q() -> Self {
        Self::new("q_ml", Parameterization::Q, mle_q)
    }

    pub fn mle_theta() -> Self {
        Self::new("theta_ml", Parameterization::Theta, mle_theta)
    }

    /// Maximum-likelihood estimator of the given parameterization.
    pub fn mle(p: Parameterization) -> Self {
        match p {
            Parameterization::Q => Self::mle_q(),
            Parameterization::Theta => Self::mle_theta(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn parameterization(&self) -> Parameterization {
        self.parameterization
    }

    pub fn estimate(&self, t: usize, n: usize) -> Result<f64> {
        if t > n {
            return Err(EstimationError::OutcomeOutOfRange { t, n });
        }
        Ok((self.f)(t, n))
    }

    fn table(&self, n: usize) -> Result<Vec<f64>> {
        (0..=n)
            .map(|t| {
                let v = (self.f)(t, n);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(EstimationError::NonFiniteEstimate {
                        name: self.name.clone(),
                        t,
                    })
                }
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Exact statistics

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorStats {
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    /// Derivative of the mean with respect to the parameter.
    pub dmean: f64,
}

fn stats_from(est: &[f64], dist: &OutcomeDistribution, dq: f64, theta: f64) -> EstimatorStats {
    let p = dist.pmf();
    let mean = compensated_sum(est.iter().zip(p).map(|(e, p)| e * p));
    let variance = compensated_sum(est.iter().zip(p).map(|(e, p)| p * (e - mean) * (e - mean)));
    let mse = compensated_sum(est.iter().zip(p).map(|(e, p)| p * (e - theta) * (e - theta)));
    let dmean = dq * compensated_sum(est.iter().zip(dist.dpmf_dq()).map(|(e, d)| e * d));
    EstimatorStats {
        mean,
        bias: mean - theta,
        variance,
        mse,
        dmean,
    }
}

/// Mean, bias, variance, MSE and mean derivative by exact summation over
/// the sufficient statistic.
pub fn exact_stats(est: &Estimator, n: usize, theta: f64) -> Result<EstimatorStats> {
    let (dist, qp) = est.parameterization.distribution(n, theta)?;
    let table = est.table(n)?;
    Ok(stats_from(&table, &dist, qp.dq, theta))
}

/// `dmean^2 / qfi_total`; zero for a divergent QFI.
pub fn biased_bound(stats: &EstimatorStats, qfi_total: Quantity) -> f64 {
    match qfi_total {
        Quantity::Finite(f) if f > 0.0 => stats.dmean * stats.dmean / f,
        Quantity::Finite(_) => f64::INFINITY,
        Quantity::Divergent => 0.0,
    }
}

/// `1 / qfi_total`; zero for a divergent QFI.
pub fn unbiased_bound(qfi_total: Quantity) -> f64 {
    match qfi_total {
        Quantity::Finite(f) if f > 0.0 => 1.0 / f,
        Quantity::Finite(_) => f64::INFINITY,
        Quantity::Divergent => 0.0,
    }
}

// ---------------------------------------------------------------------------
// Distance between n-copy states

/// Squared Bures distance between the `n`-copy states, summed as
/// `sum_t (sqrt p(t) - sqrt p'(t))^2`.
pub fn bures_sq_binomial(a: &OutcomeDistribution, b: &OutcomeDistribution) -> f64 {
    compensated_sum(a.pmf().iter().zip(b.pmf()).map(|(x, y)| {
        let d = x.sqrt() - y.sqrt();
        d * d
    }))
}

/// Same distance through the single-copy fidelity raised to the `n`-th
/// power.
pub fn bures_sq_product(n: usize, a: QPoint, b: QPoint) -> f64 {
    let f1 = (a.qc * b.qc).sqrt() + (a.q * b.q).sqrt();
    (2.0 * (1.0 - f1.min(1.0).powi(n as i32))).max(0.0)
}

// ---------------------------------------------------------------------------
// Yang-Chiribella-Hayashi

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YchSides {
    pub lhs: f64,
    pub rhs: f64,
}

impl YchSides {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs >= self.rhs - tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YchCheck {
    pub theta: f64,
    pub eps: f64,
    /// `(E_t + E_{t+e} + e^2)/2` against `e^2 / (4 d^2)`.
    pub unbiased: YchSides,
    /// `V_t + V_{t+e} + dm^2` against `dm^2 / (2 d^2)`.
    pub biased: YchSides,
    pub bures_sq: f64,
    /// `d = 0` with a nonzero mean shift.
    pub degenerate: bool,
}

/// Both forms of the YCH inequality between `theta` and `theta + eps`.
/// `eps` may be negative.
pub fn ych_check(n: usize, est: &Estimator, theta: f64, eps: f64) -> Result<YchCheck> {
    let p = est.parameterization;
    let other = theta + eps;
    let (d0, q0) = p.distribution(n, theta)?;
    let (d1, q1) = p.distribution(n, other)?;
    let table = est.table(n)?;
    let s0 = stats_from(&table, &d0, q0.dq, theta);
    let s1 = stats_from(&table, &d1, q1.dq, other);
    let d2 = bures_sq_binomial(&d0, &d1);
    let dm = s1.mean - s0.mean;
    let ratio = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };
    let degenerate = d2 == 0.0 && dm != 0.0;
    Ok(YchCheck {
        theta,
        eps,
        unbiased: YchSides {
            lhs: (s0.mse + s1.mse + eps * eps) / 2.0,
            rhs: ratio(eps * eps, 4.0 * d2),
        },
        biased: YchSides {
            lhs: s0.variance + s1.variance + dm * dm,
            rhs: ratio(dm * dm, 2.0 * d2),
        },
        bures_sq: d2,
        degenerate,
    })
}

// ---------------------------------------------------------------------------
// Purification bound

/// An amplitude `A` of a density operator, `A A^dag = rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct Amplitude {
    op: CMatrix,
}

impl Amplitude {
    pub fn new(op: CMatrix) -> Self {
        Self { op }
    }

    /// `A = diag(sqrt p)`.
    pub fn from_probabilities(p: &[f64]) -> Self {
        let d = p.len();
        let mut op = CMatrix::zeros(d, d);
        for (i, &x) in p.iter().enumerate() {
            op[(i, i)] = C64::new(x.max(0.0).sqrt(), 0.0);
        }
        Self { op }
    }

    /// `A = sqrt(rho)`.
    pub fn sqrt_of(rho: &DensityOperator) -> Self {
        Self {
            op: crate::numlin::mat_sqrt(rho).into_matrix(),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.op
    }

    pub fn reconstruct(&self) -> CMatrix {
        &self.op * self.op.adjoint()
    }

    pub fn reconstruction_error(&self, rho: &DensityOperator) -> f64 {
        crate::numlin::max_abs(&(self.reconstruct() - rho.matrix()))
    }

    /// `A^dag A'` is Hermitian and positive semidefinite within `tol`.
    pub fn is_parallel(&self, other: &Amplitude, tol: f64) -> bool {
        let m = self.op.adjoint() * &other.op;
        let herm = crate::numlin::max_abs(&(&m - m.adjoint()));
        if herm > tol {
            return false;
        }
        match crate::numlin::HermitianOperator::with_tolerance(m, tol) {
            Ok(h) => crate::numlin::eigh(&h, None)
                .eigenvalues()
                .iter()
                .all(|&l| l >= -tol),
            Err(_) => false,
        }
    }

    pub fn distance_sq(&self, other: &Amplitude) -> f64 {
        crate::numlin::frobenius_sq(&(&other.op - &self.op))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PurificationBound {
    pub theta: f64,
    pub theta_prime: f64,
    pub beta: f64,
    /// `||A' - A||_2^2`.
    pub amplitude_distance_sq: f64,
    pub bound: f64,
    /// MSE of the estimator at `theta`.
    pub mse: f64,
    /// The estimator is unbiased at both points (within 1e-12), which the
    /// inequality `mse >= bound` requires.
    pub unbiased_at_both: bool,
}

impl PurificationBound {
    pub fn holds(&self, tol: f64) -> bool {
        self.mse >= self.bound - tol
    }
}

/// `beta^2 / (4 ||A' - A||_2^2)` with
/// `beta = theta' - theta - sum_t eta_t ||sqrt(E_t)(A' - A)||_2^2`,
/// `eta_t = est(t) - theta`, using the parallel amplitudes
/// `A = diag(sqrt p(t))` of the outcome-class distributions.
pub fn purification_bound(n: usize, est: &Estimator, theta: f64, theta_prime: f64) -> Result<PurificationBound> {
    let p = est.parameterization;
    let (d0, q0) = p.distribution(n, theta)?;
    let (d1, q1) = p.distribution(n, theta_prime)?;
    let table = est.table(n)?;
    let s0 = stats_from(&table, &d0, q0.dq, theta);
    let s1 = stats_from(&table, &d1, q1.dq, theta_prime);
    let a = Amplitude::from_probabilities(d0.pmf());
    let b = Amplitude::from_probabilities(d1.pmf());
    let diff = b.matrix() - a.matrix();
    let row_sq: Vec<f64> = (0..=n).map(|t| diff.row(t).iter().map(|z| z.norm_sqr()).sum()).collect();
    let dist_sq = compensated_sum(row_sq.iter().copied());
    let beta = theta_prime - theta - compensated_sum(table.iter().zip(&row_sq).map(|(e, r)| (e - theta) * r));
    let bound = if dist_sq == 0.0 { 0.0 } else { beta * beta / (4.0 * dist_sq) };
    Ok(PurificationBound {
        theta,
        theta_prime,
        beta,
        amplitude_distance_sq: dist_sq,
        bound,
        mse: s0.mse,
        unbiased_at_both: s0.bias.abs() <= 1e-12 && s1.bias.abs() <= 1e-12,
    })
}

// ---------------------------------------------------------------------------
// Audit

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AuditOptions {
    /// Displacement for the YCH check; flipped in sign where `theta + eps`
    /// leaves the domain.
    pub ych_eps: Option<f64>,
    /// Second point for the purification bound.
    pub purification_thetap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRecord {
    pub theta: f64,
    pub n: usize,
    pub mean: f64,
    pub bias: f64,
    pub mse: f64,
    pub variance: f64,
    pub dmean: f64,
    /// Single-copy QFI entering the bounds (continuous `F3`).
    pub qfi: Quantity,
    /// Single-copy spectral-sum QFI.
    pub f2: f64,
    /// `1 / (n F3)`, zero where `F3` diverges.
    pub unbiased_bound: f64,
    /// `1 / (n F2)`.
    pub unbiased_bound_f2: f64,
    /// `dmean^2 / (n F3)`.
    pub biased_bound: f64,
    pub violated_unbiased: bool,
    pub violated_unbiased_f2: bool,
    pub holds_biased: bool,
    pub ych: Option<YchCheck>,
    pub purification: Option<PurificationBound>,
}

impl BoundRecord {
    /// `n V`, the rescaled variance plotted against the per-copy bounds.
    pub fn scaled_variance(&self) -> f64 {
        self.n as f64 * self.variance
    }

    pub fn scaled_biased_bound(&self) -> f64 {
        self.n as f64 * self.biased_bound
    }
}

/// Relative slack used when comparing a variance with a bound it may
/// saturate.
pub const SATURATION_RTOL: f64 = 1e-9;
/// Absolute slack for the biased-bound check.
pub const BIASED_ATOL: f64 = 1e-9;

/// Exact statistics and bounds for every `(n, theta)` cell, ordered by `n`
/// then `theta`.
pub fn audit_scan(
    model: &ParametricModel,
    est: &Estimator,
    ns: &[usize],
    thetas: &[f64],
    qfi_cfg: &QfiConfig,
    opts: &AuditOptions,
) -> Result<Vec<BoundRecord>> {
    let p = est.parameterization;
    if !p.matches(model) {
        return Err(EstimationError::ParameterizationMismatch {
            estimator: est.name.clone(),
            estimator_param: p.name(),
            model: model.name().to_string(),
        });
    }
    let mut qfi = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        p.check(theta)?;
        let report = qfi_report(model, theta, qfi_cfg)?;
        qfi.push((report.continuous_qfi(), report.f2));
    }
    let (lo, hi) = p.domain();
    let mut out = Vec::with_capacity(ns.len() * thetas.len());
    for &n in ns {
        let nf = n as f64;
        for (&theta, &(f, f2)) in thetas.iter().zip(&qfi) {
            let stats = exact_stats(est, n, theta)?;
            let total = match f {
                Quantity::Finite(x) => Quantity::Finite(nf * x),
                Quantity::Divergent => Quantity::Divergent,
            };
            let ub = unbiased_bound(total);
            let ub2 = unbiased_bound(Quantity::Finite(nf * f2));
            let bb = biased_bound(&stats, total);
            let ych = match opts.ych_eps {
                Some(e) => {
                    let e = if theta + e > hi || theta + e < lo { -e } else { e };
                    Some(ych_check(n, est, theta, e)?)
                }
                None => None,
            };
            let purification = match opts.purification_thetap {
                Some(tp) => Some(purification_bound(n, est, theta, tp)?),
                None => None,
            };
            out.push(BoundRecord {
                theta,
                n,
                mean: stats.mean,
                bias: stats.bias,
                mse: stats.mse,
                variance: stats.variance,
                dmean: stats.dmean,
                qfi: f,
                f2,
                unbiased_bound: ub,
                unbiased_bound_f2: ub2,
                biased_bound: bb,
                violated_unbiased: stats.variance < ub * (1.0 - SATURATION_RTOL),
                violated_unbiased_f2: stats.variance < ub2 * (1.0 - SATURATION_RTOL),
                holds_biased: bb - stats.variance <= BIASED_ATOL,
                ych,
                purification,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Monte Carlo cross-check

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloStats {
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    pub mse: f64,
    /// Standard error of `mean`.
    pub mean_stderr: f64,
}

/// Sampled counterpart of [`exact_stats`] drawing `t ~ Binomial(n, q)`.
pub fn monte_carlo_stats<R: Rng + ?Sized>(
    est: &Estimator,
    n: usize,
    theta: f64,
    samples: usize,
    rng: &mut R,
) -> Result<MonteCarloStats> {
    let qp = est.parameterization.q_point(theta)?;
    if samples < 2 {
        return Err(EstimationError::ZeroSamples);
    }
    let table = est.table(n)?;
    let dist = Binomial::new(n as u64, qp.q.clamp(0.0, 1.0))
        .map_err(|_| EstimationError::ProbabilityOutOfRange(qp.q))?;
    let draws: Vec<f64> = (0..samples).map(|_| table[dist.sample(rng) as usize]).collect();
    let m = samples as f64;
    let mean = compensated_sum(draws.iter().copied()) / m;
    let variance = compensated_sum(draws.iter().map(|x| (x - mean) * (x - mean))) / (m - 1.0);
    let mse = compensated_sum(draws.iter().map(|x| (x - theta) * (x - theta))) / m;
    Ok(MonteCarloStats {
        samples,
        mean,
        variance,
        mse,
        mean_stderr: (variance / m).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin_flip, builtin_trig};
    use std::f64::consts::{FRAC_PI_4, PI};

    /// Pascal recurrence `p_n(t) = (1-q) p_{n-1}(t) + q p_{n-1}(t-1)`; all
    /// terms are nonnegative so the relative error stays near `n` ulps.
    fn pascal_pmf(n: usize, q: f64) -> Vec<f64> {
        let mut p = vec![1.0];
        for _ in 0..n {
            let mut next = vec![0.0; p.len() + 1];
            for (t, &v) in p.iter().enumerate() {
                next[t] += (1.0 - q) * v;
                next[t + 1] += q * v;
            }
            p = next;
        }
        p
    }

    #[test]
    fn pmf_examples() {
        let d = pmf_family(1, 0.3).unwrap();
        assert!((d.pmf()[0] - 0.7).abs() < 1e-15 && (d.pmf()[1] - 0.3).abs() < 1e-15);
        let d = pmf_family(2, 0.5).unwrap();
        assert_eq!(d.pmf(), &[0.25, 0.5, 0.25]);
        let d = pmf_family(10, 0.0).unwrap();
        assert_eq!(d.pmf()[0], 1.0);
        assert!(d.pmf()[1..].iter().all(|&p| p == 0.0));
        assert!(pmf_family(3, 1.2).is_err());
        assert!(pmf_family(0, 0.2).is_err());
    }

    #[test]
    fn pmf_matches_pascal_recurrence_and_sums() {
        for &n in &[1usize, 7, 100, 1000] {
            for &q in &[0.0, 1e-3, 0.3, 0.5, 0.77, 1.0] {
                let d = pmf_family(n, q).unwrap();
                assert!((compensated_sum(d.pmf().iter().copied()) - 1.0).abs() < 1e-12);
                assert!(compensated_sum(d.dpmf_dq().iter().copied()).abs() < 1e-10);
                let oracle = pascal_pmf(n, q);
                for t in 0..=n {
                    let want = oracle[t];
                    assert!((d.pmf()[t] - want).abs() < 1e-12 * want.max(1e-3), "n={n} q={q} t={t}");
                }
            }
        }
    }

    #[test]
    fn pmf_derivative_matches_difference_quotient() {
        let n = 12;
        let h = 1e-6;
        for &q in &[0.0, 0.2, 0.6, 1.0] {
            let d = pmf_family(n, q).unwrap();
            let (a, b) = if q == 0.0 { (0.0, h) } else if q == 1.0 { (1.0 - h, 1.0) } else { (q - h, q + h) };
            let pa = pmf_family(n, a).unwrap();
            let pb = pmf_family(n, b).unwrap();
            for t in 0..=n {
                let fd = (pb.pmf()[t] - pa.pmf()[t]) / (b - a);
                assert!((fd - d.dpmf_dq()[t]).abs() < 1e-3, "q={q} t={t}");
            }
        }
    }

    #[test]
    fn mle_examples() {
        assert_eq!(mle_q(3, 10), 0.3);
        assert_eq!(mle_theta(0, 10), 0.0);
        assert_eq!(mle_theta(10, 10), FRAC_PI_2);
        assert!((mle_theta(5, 10) - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn q_mle_is_unbiased_with_binomial_variance() {
        let e = Estimator::mle_q();
        for &n in &[1usize, 10, 100] {
            for &q in &[0.0, 0.1, 0.3, 0.5, 1.0] {
                let s = exact_stats(&e, n, q).unwrap();
                assert!(s.bias.abs() < 1e-14);
                assert!((s.variance - q * (1.0 - q) / n as f64).abs() < 1e-14);
                assert!((s.dmean - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn theta_mle_endpoint_and_quarter() {
        let e = Estimator::mle_theta();
        for &n in &[1usize, 10, 1000] {
            let s = exact_stats(&e, n, 0.0).unwrap();
            assert_eq!((s.mean, s.variance, s.dmean), (0.0, 0.0, 0.0));
        }
        let s = exact_stats(&e, 1, FRAC_PI_4).unwrap();
        assert!(s.bias.abs() < 1e-15);
        assert!((s.variance - PI * PI / 16.0).abs() < 1e-14);
        assert!((s.dmean - FRAC_PI_2).abs() < 1e-14);
    }

    #[test]
    fn stats_invariants() {
        let e = Estimator::mle_theta();
        for &n in &[3usize, 40] {
            for &t in &[0.1, 0.7, 1.3] {
                let s = exact_stats(&e, n, t).unwrap();
                assert!((s.mse - s.variance - s.bias * s.bias).abs() < 1e-12);
                let h = 1e-5;
                let fd = (exact_stats(&e, n, t + h).unwrap().mean - exact_stats(&e, n, t - h).unwrap().mean) / (2.0 * h);
                assert!((fd - s.dmean).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn biased_bound_examples() {
        let e = Estimator::mle_theta();
        let s = exact_stats(&e, 1, FRAC_PI_4).unwrap();
        let b = biased_bound(&s, Quantity::Finite(4.0));
        assert!((b - PI * PI / 16.0).abs() < 1e-14);
        assert!((b - s.variance).abs() < 1e-12);
        let s0 = exact_stats(&e, 10, 0.0).unwrap();
        assert_eq!(biased_bound(&s0, Quantity::Finite(40.0)), 0.0);
        let sq = exact_stats(&Estimator::mle_q(), 10, 0.3).unwrap();
        let b = biased_bound(&sq, Quantity::Finite(10.0 / 0.21));
        assert!((b - 0.021).abs() < 1e-14);
        assert_eq!(biased_bound(&sq, Quantity::Divergent), 0.0);
    }

    #[test]
    fn ych_examples() {
        let e = Estimator::mle_q();
        let c = ych_check(10, &e, 0.3, 0.1).unwrap();
        assert!(c.unbiased.holds(0.0) && c.biased.holds(0.0));
        let c = ych_check(10, &e, 0.3, 1e-3).unwrap();
        let want = 0.21 / 10.0;
        assert!((c.unbiased.rhs - want).abs() < 1e-3 * want);
        let c = ych_check(10, &e, 0.3, 0.0).unwrap();
        assert_eq!(c.unbiased.rhs, 0.0);
        assert!((c.unbiased.lhs - 0.021).abs() < 1e-15);
        assert!(!c.degenerate);
    }

    #[test]
    fn bures_routes_agree() {
        for &n in &[1usize, 5, 50] {
            for &(a, b) in &[(0.0, 0.3), (0.2, 0.5), (0.9, 1.0), (0.3, 0.3)] {
                let da = pmf_family(n, a).unwrap();
                let db = pmf_family(n, b).unwrap();
                let pa = Parameterization::Q.q_point(a).unwrap();
                let pb = Parameterization::Q.q_point(b).unwrap();
                assert!((bures_sq_binomial(&da, &db) - bures_sq_product(n, pa, pb)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn purification_examples() {
        let e = Estimator::mle_q();
        let p = purification_bound(5, &e, 0.2, 0.5).unwrap();
        assert!(p.unbiased_at_both && p.holds(0.0));
        let p = purification_bound(5, &e, 0.2, 0.2).unwrap();
        assert_eq!((p.beta, p.bound), (0.0, 0.0));
        let p = purification_bound(1, &e, 0.3, 0.3 + 1e-4).unwrap();
        assert!((p.bound - 0.21).abs() < 1e-3 * 0.21);
    }

    #[test]
    fn amplitudes() {
        let rho = DensityOperator::from_diagonal(&[0.3, 0.7]).unwrap();
        let sigma = DensityOperator::from_diagonal(&[0.6, 0.4]).unwrap();
        let a = Amplitude::sqrt_of(&rho);
        let b = Amplitude::from_probabilities(&[0.6, 0.4]);
        assert!(a.reconstruction_error(&rho) < 1e-12);
        assert!(b.reconstruction_error(&sigma) < 1e-12);
        assert!(a.is_parallel(&b, 1e-10));
        let mut flipped = b.matrix().clone();
        flipped[(0, 0)] = -flipped[(0, 0)];
        assert!(!a.is_parallel(&Amplitude::new(flipped), 1e-10));
    }

    #[test]
    fn audit_examples() {
        let cfg = QfiConfig::default();
        let trig = builtin_trig();
        let recs = audit_scan(&trig, &Estimator::mle_theta(), &[10], &[0.0, FRAC_PI_4], &cfg, &AuditOptions::default()).unwrap();
        assert_eq!(recs[0].scaled_variance(), 0.0);
        assert!(recs[0].violated_unbiased && recs[0].holds_biased);
        assert_eq!(recs[0].biased_bound, 0.0);
        assert!(recs[1].bias.abs() < 1e-15);

        let flip = builtin_flip();
        let grid = crate::models::grid(0.0, 1.0, 11);
        let opts = AuditOptions {
            ych_eps: Some(0.05),
            purification_thetap: Some(0.5),
        };
        let recs = audit_scan(&flip, &Estimator::mle_q(), &[10], &grid, &cfg, &opts).unwrap();
        for r in &recs {
            assert!(!r.violated_unbiased && r.holds_biased, "{r:?}");
            let interior = r.theta > 0.0 && r.theta < 1.0;
            assert_eq!(r.violated_unbiased_f2, !interior, "{r:?}");
            assert!(r.ych.unwrap().unbiased.holds(1e-12));
            assert!(r.purification.unwrap().holds(1e-12));
        }
        assert!(audit_scan(&flip, &Estimator::mle_theta(), &[10], &grid, &cfg, &opts).is_err());
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let e = Estimator::mle_theta();
        let exact = exact_stats(&e, 20, 0.4).unwrap();
        let mc = monte_carlo_stats(&e, 20, 0.4, 200_000, &mut rng).unwrap();
        assert!((mc.mean - exact.mean).abs() < 5.0 * mc.mean_stderr);
        assert!((mc.variance - exact.variance).abs() < 0.02 * exact.variance);
    }
}
