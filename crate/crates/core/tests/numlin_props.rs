use nalgebra::DMatrix;
use proptest::prelude::*;
use qcrb::numlin::{
    bhattacharyya, eigh, fidelity, fidelity_general, frobenius_sq, mat_sqrt, schatten_norm, CMatrix,
    DensityOperator, HermitianOperator, C64,
};

fn complex_matrix_of(d: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), d * d)
        .prop_map(move |v| DMatrix::from_iterator(d, d, v.into_iter().map(|(r, i)| C64::new(r, i))))
}

fn complex_matrix(max_dim: usize) -> impl Strategy<Value = CMatrix> {
    (2..=max_dim).prop_flat_map(complex_matrix_of)
}

fn hermitian(max_dim: usize) -> impl Strategy<Value = HermitianOperator> {
    complex_matrix(max_dim).prop_map(|a| {
        let h = (&a + a.adjoint()) * C64::new(0.5, 0.0);
        HermitianOperator::new(h).unwrap()
    })
}

/// `A A^dag / tr`, optionally with some directions projected out so the
/// state is rank deficient.
fn density(max_dim: usize) -> impl Strategy<Value = DensityOperator> {
    (2..=max_dim).prop_flat_map(density_of)
}

fn density_of(d: usize) -> impl Strategy<Value = DensityOperator> {
    (complex_matrix_of(d), 0usize..3).prop_map(|(a, drop)| {
        let d = a.nrows();
        let mut a = a;
        for k in 0..drop.min(d - 1) {
            a.column_mut(k).fill(C64::new(0.0, 0.0));
        }
        let m = &a * a.adjoint();
        let tr: f64 = (0..d).map(|i| m[(i, i)].re).sum();
        let m = m / C64::new(tr, 0.0);
        DensityOperator::new(HermitianOperator::with_tolerance(m, 1e-12).unwrap()).unwrap()
    })
}

fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn eigh_reconstructs_and_is_orthonormal(h in hermitian(8)) {
        let d = h.dim();
        let dec = eigh(&h, None);
        let u = dec.eigenvectors();
        let scale = 1.0 + h.matrix().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let err = frobenius_sq(&(dec.reconstruct() - h.matrix())).sqrt();
        prop_assert!(err < 1e-12 * scale * d as f64, "reconstruction {}", err);
        let orth = frobenius_sq(&(u.adjoint() * u - identity(d))).sqrt();
        prop_assert!(orth < 1e-12 * d as f64, "orthonormality {}", orth);
        let ev = dec.eigenvalues();
        prop_assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        let tr: f64 = ev.iter().sum();
        prop_assert!((tr - h.trace()).abs() < 1e-12 * scale * d as f64);
    }

    #[test]
    fn density_spectrum_is_a_distribution(rho in density(8)) {
        let dec = eigh(rho.op(), None);
        let sum: f64 = dec.eigenvalues().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(dec.eigenvalues().iter().all(|&l| l >= -1e-12));
        let s = mat_sqrt(&rho);
        let back = s.matrix() * s.matrix();
        prop_assert!(frobenius_sq(&(back - rho.matrix())).sqrt() < 1e-10);
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded((rho, sigma) in (2usize..=6).prop_flat_map(|d| (density_of(d), density_of(d)))) {
        let a = fidelity(&rho, &sigma).unwrap();
        let b = fidelity(&sigma, &rho).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
        prop_assert!((-1e-12..=1.0 + 1e-10).contains(&a));
        prop_assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn commuting_fidelity_is_bhattacharyya(
        (p, q) in (2usize..=8).prop_flat_map(|d| (
            prop::collection::vec(0.0..1.0f64, d),
            prop::collection::vec(0.0..1.0f64, d),
        ))
    ) {
        let norm = |v: &[f64]| {
            let s: f64 = v.iter().sum::<f64>().max(1e-300);
            v.iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let (p, q) = (norm(&p), norm(&q));
        prop_assume!(p.iter().sum::<f64>() > 0.5 && q.iter().sum::<f64>() > 0.5);
        let rho = DensityOperator::from_diagonal(&p).unwrap();
        let sigma = DensityOperator::from_diagonal(&q).unwrap();
        let bc: f64 = p.iter().zip(&q).map(|(a, b)| (a * b).sqrt()).sum();
        prop_assert!((bhattacharyya(&p, &q) - bc).abs() < 1e-12);
        prop_assert!((fidelity(&rho, &sigma).unwrap() - bc).abs() < 1e-12);
        prop_assert!((fidelity_general(&rho, &sigma) - bc).abs() < 1e-7);
    }

    #[test]
    fn schatten_two_is_frobenius(x in complex_matrix(8)) {
        let trace: f64 = (x.adjoint() * &x).diagonal().iter().map(|z| z.re).sum();
        let s2 = schatten_norm(&x, 2.0).unwrap();
        prop_assert!((s2 - trace.sqrt()).abs() < 1e-10);
        let s1 = schatten_norm(&x, 1.0).unwrap();
        let sinf = schatten_norm(&x, f64::INFINITY).unwrap();
        prop_assert!(sinf <= s2 + 1e-12 && s2 <= s1 + 1e-12);
    }
}
