//! Dense complex Hermitian linear algebra for small dimensions.
//!
//! Everything here operates on `nalgebra::DMatrix<Complex<f64>>`. The
//! validated wrappers ([`HermitianOperator`], [`DensityOperator`]) carry the
//! structural invariants so the downstream modules never re-check them.

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Per-entry tolerance for `H[j][k] == conj(H[k][j])`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Trace deviation allowed for a density operator.
pub const TRACE_TOL: f64 = 1e-12;
/// Eigenvalues in `[-PSD_TOL, 0)` are treated as round-off and clamped.
pub const PSD_TOL: f64 = 1e-12;
/// Relative rank threshold: `tau = RANK_REL_TOL * max(lambda_max, 1)`.
pub const RANK_REL_TOL: f64 = 1e-12;
/// Components below this modulus are skipped when fixing eigenvector phases.
const PHASE_MIN_MODULUS: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumlinError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("empty matrix")]
    Empty,

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("not Hermitian: max |H[j][k] - conj(H[k][j])| = {max_asymmetry:.3e} at ({row}, {col})")]
    NotHermitian {
        max_asymmetry: f64,
        row: usize,
        col: usize,
    },

    #[error("trace is {trace}, expected 1")]
    InvalidTrace { trace: f64 },

    #[error("not positive semi-definite: eigenvalue {eigenvalue:.3e}")]
    NotPsd { eigenvalue: f64 },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("Schatten norm requires p >= 1, got {0}")]
    InvalidSchattenOrder(f64),
}

pub type Result<T> = std::result::Result<T, NumlinError>;

/// A validated Hermitian matrix. Entries are exactly Hermitian after
/// construction (the input is symmetrized once it passes the tolerance check).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    mat: CMatrix,
}

impl HermitianOperator {
    pub fn new(mat: CMatrix) -> Result<Self> {
        Self::with_tolerance(mat, HERMITIAN_TOL)
    }

    pub fn with_tolerance(mat: CMatrix, tol: f64) -> Result<Self> {
        check_square_finite(&mat)?;
        let (max_asymmetry, row, col) = max_asymmetry(&mat);
        if max_asymmetry > tol {
            return Err(NumlinError::NotHermitian {
                max_asymmetry,
                row,
                col,
            });
        }
        let sym = (&mat + mat.adjoint()) * C64::new(0.5, 0.0);
        Ok(Self { mat: sym })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        let mut mat = CMatrix::zeros(d, d);
        for (j, &x) in diag.iter().enumerate() {
            mat[(j, j)] = C64::new(x, 0.0);
        }
        Self::new(mat)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|z| z.re).sum()
    }

    /// True when every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|j| (0..d).all(|k| j == k || self.mat[(j, k)] == C64::new(0.0, 0.0)))
    }

    pub fn real_diagonal(&self) -> Vec<f64> {
        self.mat.diagonal().iter().map(|z| z.re).collect()
    }
}

/// A Hermitian, unit-trace, positive semi-definite operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    op: HermitianOperator,
}

impl DensityOperator {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        let trace = op.trace();
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(NumlinError::InvalidTrace { trace });
        }
        let decomp = eigh(&op, None);
        let min = decomp.eigenvalues()[0];
        if min < -PSD_TOL {
            return Err(NumlinError::NotPsd { eigenvalue: min });
        }
        Ok(Self { op })
    }

    pub fn from_diagonal(probs: &[f64]) -> Result<Self> {
        Self::new(HermitianOperator::from_real_diagonal(probs)?)
    }

    pub fn op(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }
}

/// Eigensystem of a Hermitian operator, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    /// Columns are the orthonormal eigenvectors, in eigenvalue order.
    eigenvectors: CMatrix,
    rank_tol: f64,
    kernel: Vec<usize>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, j: usize) -> nalgebra::DVector<C64> {
        self.eigenvectors.column(j).into_owned()
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    /// Indices `k` with `lambda_k <= tau`.
    pub fn kernel_indices(&self) -> &[usize] {
        &self.kernel
    }

    pub fn in_kernel(&self, j: usize) -> bool {
        self.kernel.contains(&j)
    }

    pub fn rank(&self) -> usize {
        self.dim() - self.kernel.len()
    }

    /// Matrix elements `<e_j| X |e_k>`.
    pub fn to_eigenbasis(&self, x: &CMatrix) -> CMatrix {
        self.eigenvectors.adjoint() * x * &self.eigenvectors
    }

    /// Inverse of [`Self::to_eigenbasis`].
    pub fn from_eigenbasis(&self, x: &CMatrix) -> CMatrix {
        &self.eigenvectors * x * self.eigenvectors.adjoint()
    }

    /// `sum_j f(lambda_j) |e_j><e_j|`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let d = self.dim();
        let mut diag = CMatrix::zeros(d, d);
        for (j, &l) in self.eigenvalues.iter().enumerate() {
            diag[(j, j)] = C64::new(f(l), 0.0);
        }
        self.from_eigenbasis(&diag)
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.apply_fn(|l| l)
    }
}

/// Default rank tolerance for a spectrum whose largest eigenvalue is `max_eig`.
pub fn default_rank_tol(max_eig: f64) -> f64 {
    RANK_REL_TOL * max_eig.max(1.0)
}

/// Hermitian eigendecomposition with deterministic ordering.
///
/// Eigenvalues are sorted ascending. Each eigenvector is phase-normalized so
/// that its first component with modulus above 1e-8 is real and positive.
/// Runs of (numerically) equal eigenvalues are ordered by the position of
/// that first component, then lexicographically by component moduli.
/// `rank_tol = None` selects [`default_rank_tol`].
pub fn eigh(h: &HermitianOperator, rank_tol: Option<f64>) -> SpectralDecomposition {
    let d = h.dim();
    let eig = h.matrix().clone().symmetric_eigen();
    let mut pairs: Vec<(f64, nalgebra::DVector<C64>)> = (0..d)
        .map(|j| {
            let mut v = eig.eigenvectors.column(j).into_owned();
            normalize_phase(&mut v);
            (eig.eigenvalues[j], v)
        })
        .collect();

    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let scale = pairs
        .iter()
        .map(|p| p.0.abs())
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let tie_tol = 1e-12 * scale;
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && pairs[end].0 - pairs[end - 1].0 <= tie_tol {
            end += 1;
        }
        if end - start > 1 {
            pairs[start..end].sort_by(|a, b| tie_key_cmp(&a.1, &b.1));
        }
        start = end;
    }

    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut eigenvectors = CMatrix::zeros(d, d);
    for (j, (_, v)) in pairs.iter().enumerate() {
        eigenvectors.set_column(j, v);
    }
    let max_eig = eigenvalues.last().copied().unwrap_or(0.0);
    let tau = rank_tol.unwrap_or_else(|| default_rank_tol(max_eig));
    let kernel = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l <= tau)
        .map(|(j, _)| j)
        .collect();
    SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        rank_tol: tau,
        kernel,
    }
}

fn normalize_phase(v: &mut nalgebra::DVector<C64>) {
    if let Some(c) = v.iter().find(|c| c.norm() > PHASE_MIN_MODULUS).copied() {
        let phase = c.conj() / c.norm();
        *v *= phase;
    }
}

fn first_significant(v: &nalgebra::DVector<C64>) -> usize {
    v.iter()
        .position(|c| c.norm() > PHASE_MIN_MODULUS)
        .unwrap_or(v.len())
}

fn tie_key_cmp(a: &nalgebra::DVector<C64>, b: &nalgebra::DVector<C64>) -> std::cmp::Ordering {
    first_significant(a).cmp(&first_significant(b)).then_with(|| {
        for (x, y) in a.iter().zip(b.iter()) {
            let ord = y.norm().total_cmp(&x.norm());
            if ord != std::cmp::Ordering::Equal {
                return ord;
            }
        }
        std::cmp::Ordering::Equal
    })
}

/// Principal square root of a density operator. Eigenvalues at or below the
/// rank tolerance are set to zero before taking roots.
pub fn mat_sqrt(rho: &DensityOperator) -> HermitianOperator {
    let decomp = eigh(rho.op(), None);
    sqrt_from_decomp(&decomp)
}

pub(crate) fn sqrt_from_decomp(decomp: &SpectralDecomposition) -> HermitianOperator {
    let tau = decomp.rank_tol();
    let m = decomp.apply_fn(|l| if l <= tau { 0.0 } else { l.sqrt() });
    HermitianOperator {
        mat: (&m + m.adjoint()) * C64::new(0.5, 0.0),
    }
}

/// Checked variant of [`mat_sqrt`] for raw Hermitian input: rejects
/// eigenvalues below `-1e-12`.
pub fn mat_sqrt_psd(h: &HermitianOperator) -> Result<HermitianOperator> {
    let decomp = eigh(h, None);
    let min = decomp.eigenvalues()[0];
    if min < -PSD_TOL {
        return Err(NumlinError::NotPsd { eigenvalue: min });
    }
    Ok(sqrt_from_decomp(&decomp))
}

pub fn singular_values(x: &CMatrix) -> Vec<f64> {
    x.clone().singular_values().iter().copied().collect()
}

/// Schatten-p norm `(sum_i s_i^p)^(1/p)`; `p = inf` gives the operator norm.
pub fn schatten_norm(x: &CMatrix, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(NumlinError::InvalidSchattenOrder(p));
    }
    for (idx, z) in x.iter().enumerate() {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(NumlinError::NonFinite {
                row: idx % x.nrows(),
                col: idx / x.nrows(),
            });
        }
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let sv = singular_values(x);
    if p.is_infinite() {
        return Ok(sv.iter().copied().fold(0.0, f64::max));
    }
    if p == 1.0 {
        return Ok(sv.iter().sum());
    }
    if p == 2.0 {
        return Ok(sv.iter().map(|s| s * s).sum::<f64>().sqrt());
    }
    Ok(sv.iter().map(|s| s.powf(p)).sum::<f64>().powf(1.0 / p))
}

/// `tr(X^dagger X)`, the squared Hilbert-Schmidt norm from entries.
pub fn frobenius_sq(x: &CMatrix) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Uhlmann fidelity `|| sqrt(rho) sqrt(sigma) ||_1`.
///
/// Commuting diagonal inputs take the exact path `sum_j sqrt(l_j m_j)`.
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(NumlinError::DimensionMismatch(rho.dim(), sigma.dim()));
    }
    if rho.op().is_diagonal() && sigma.op().is_diagonal() {
        return Ok(bhattacharyya(
            &rho.op().real_diagonal(),
            &sigma.op().real_diagonal(),
        ));
    }
    Ok(fidelity_general(rho, sigma))
}

/// Fidelity through the singular values of `sqrt(rho) sqrt(sigma)`, without
/// the diagonal shortcut.
pub fn fidelity_general(rho: &DensityOperator, sigma: &DensityOperator) -> f64 {
    let a = mat_sqrt(rho);
    let b = mat_sqrt(sigma);
    let prod = a.matrix() * b.matrix();
    singular_values(&prod).iter().sum()
}

/// Bhattacharyya coefficient `sum_x sqrt(p(x) q(x))`; negative round-off
/// entries count as zero.
pub fn bhattacharyya(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| (a.max(0.0) * b.max(0.0)).sqrt())
        .sum()
}

/// Squared Bures distance `2 (1 - F)`, clamped to `[0, 2]`.
pub fn bures_distance_sq(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    let f = fidelity(rho, sigma)?;
    Ok((2.0 * (1.0 - f)).clamp(0.0, 2.0))
}

fn check_square_finite(mat: &CMatrix) -> Result<()> {
    if mat.nrows() != mat.ncols() {
        return Err(NumlinError::NotSquare {
            rows: mat.nrows(),
            cols: mat.ncols(),
        });
    }
    if mat.nrows() == 0 {
        return Err(NumlinError::Empty);
    }
    for j in 0..mat.nrows() {
        for k in 0..mat.ncols() {
            let z = mat[(j, k)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(NumlinError::NonFinite { row: j, col: k });
            }
        }
    }
    Ok(())
}

fn max_asymmetry(mat: &CMatrix) -> (f64, usize, usize) {
    let d = mat.nrows();
    let mut worst = (0.0, 0, 0);
    for j in 0..d {
        for k in j..d {
            let diff = (mat[(j, k)] - mat[(k, j)].conj()).norm();
            if diff > worst.0 {
                worst = (diff, j, k);
            }
        }
    }
    worst
}

/// Largest entry modulus.
pub fn max_abs(x: &CMatrix) -> f64 {
    x.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> HermitianOperator {
        HermitianOperator::from_real_diagonal(v).unwrap()
    }

    #[test]
    fn eigh_diagonal_flip_state() {
        let d = eigh(&diag(&[0.7, 0.3]), Some(1e-12));
        assert_eq!(d.eigenvalues(), &[0.3, 0.7]);
        assert!(d.kernel_indices().is_empty());
        assert_eq!(d.rank(), 2);
    }

    #[test]
    fn eigh_pure_state_kernel() {
        let d = eigh(&diag(&[1.0, 0.0]), Some(1e-12));
        assert_eq!(d.eigenvalues(), &[0.0, 1.0]);
        assert_eq!(d.kernel_indices(), &[0]);
        // kernel vector is |1>
        assert!((d.eigenvector(0)[1] - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn eigh_degenerate_ordering_is_deterministic() {
        let d = eigh(&diag(&[0.5, 0.5]), None);
        assert!((d.eigenvector(0)[0].re - 1.0).abs() < 1e-14);
        assert!((d.eigenvector(1)[1].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        let err = HermitianOperator::new(m).unwrap_err();
        match err {
            NumlinError::NotHermitian { max_asymmetry, .. } => assert_eq!(max_asymmetry, 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_density() {
        assert!(matches!(
            DensityOperator::from_diagonal(&[0.6, 0.6]),
            Err(NumlinError::InvalidTrace { .. })
        ));
        assert!(matches!(
            DensityOperator::from_diagonal(&[1.1, -0.1]),
            Err(NumlinError::NotPsd { .. })
        ));
        // round-off negatives are tolerated
        assert!(DensityOperator::from_diagonal(&[1.0 + 5e-13, -5e-13]).is_ok());
    }

    #[test]
    fn sqrt_examples() {
        let r = DensityOperator::from_diagonal(&[0.25, 0.75]).unwrap();
        let s = mat_sqrt(&r);
        assert!((s.matrix()[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((s.matrix()[(1, 1)].re - 0.75f64.sqrt()).abs() < 1e-15);

        let half = DensityOperator::from_diagonal(&[0.5, 0.5]).unwrap();
        let s = mat_sqrt(&half);
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.matrix()[(0, 0)].re - r2).abs() < 1e-15);
        assert!((s.matrix()[(1, 1)].re - r2).abs() < 1e-15);

        let plus = CMatrix::from_element(2, 2, C64::new(0.5, 0.0));
        let plus = DensityOperator::new(HermitianOperator::new(plus.clone()).unwrap()).unwrap();
        let s = mat_sqrt(&plus);
        assert!(max_abs(&(s.matrix() - plus.matrix())) < 1e-12);
    }

    #[test]
    fn sqrt_rejects_negative() {
        let h = diag(&[1.5, -0.5]);
        assert!(matches!(mat_sqrt_psd(&h), Err(NumlinError::NotPsd { .. })));
    }

    #[test]
    fn schatten_examples() {
        let m = diag(&[3.0, 4.0]).into_matrix();
        assert!((schatten_norm(&m, 2.0).unwrap() - 5.0).abs() < 1e-12);
        let m = diag(&[3.0, -4.0]).into_matrix();
        assert!((schatten_norm(&m, 1.0).unwrap() - 7.0).abs() < 1e-12);
        let z = CMatrix::zeros(3, 3);
        for p in [1.0, 1.5, 2.0, 7.0] {
            assert_eq!(schatten_norm(&z, p).unwrap(), 0.0);
        }
        assert!(matches!(
            schatten_norm(&z, 0.5),
            Err(NumlinError::InvalidSchattenOrder(_))
        ));
    }

    #[test]
    fn fidelity_examples() {
        let a = DensityOperator::from_diagonal(&[0.8, 0.2]).unwrap();
        let b = DensityOperator::from_diagonal(&[0.5, 0.5]).unwrap();
        assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let z = DensityOperator::from_diagonal(&[1.0, 0.0]).unwrap();
        let o = DensityOperator::from_diagonal(&[0.0, 1.0]).unwrap();
        assert_eq!(fidelity(&z, &o).unwrap(), 0.0);
        let oracle = (0.8f64 * 0.5).sqrt() + (0.2f64 * 0.5).sqrt();
        assert!((fidelity(&a, &b).unwrap() - oracle).abs() < 1e-15);
        assert!((fidelity_general(&a, &b) - oracle).abs() < 1e-12);
        assert!((oracle - 0.948_683_298_050_513_8).abs() < 1e-15);
    }

    #[test]
    fn bures_examples() {
        let a = DensityOperator::from_diagonal(&[0.8, 0.2]).unwrap();
        let b = DensityOperator::from_diagonal(&[0.5, 0.5]).unwrap();
        assert_eq!(bures_distance_sq(&a, &a).unwrap(), 0.0);
        let z = DensityOperator::from_diagonal(&[1.0, 0.0]).unwrap();
        let o = DensityOperator::from_diagonal(&[0.0, 1.0]).unwrap();
        assert_eq!(bures_distance_sq(&z, &o).unwrap(), 2.0);
        let closed = 2.0 * (1.0 - (0.8f64 * 0.5).sqrt() - (0.2f64 * 0.5).sqrt());
        assert!((bures_distance_sq(&a, &b).unwrap() - closed).abs() < 1e-15);
        assert!((closed - 0.102_633_403_898_972_4).abs() < 1e-15);
    }
}
