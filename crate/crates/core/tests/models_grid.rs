use qcrb::models::{builtin_flip, builtin_trig, eigencurves, from_spec, grid, EntrySpec, ModelSpec, ParametricModel, SpecKind};
use qcrb::numlin::{eigh, max_abs, CMatrix};

fn entry(re: &str, im: &str) -> EntrySpec {
    EntrySpec {
        re: re.into(),
        im: im.into(),
    }
}

/// `diag(cos^2, sin^2)` conjugated by a fixed real rotation, so the
/// eigenbasis is not the computational one.
fn rotated_trig() -> ParametricModel {
    let (c, s) = (0.3f64.cos(), 0.3f64.sin());
    let (cc, ss, cs) = (c * c, s * s, c * s);
    let d0 = format!("{cc} * cos(theta)^2 + {ss} * sin(theta)^2");
    let d1 = format!("{ss} * cos(theta)^2 + {cc} * sin(theta)^2");
    let off = format!("{cs} * cos(2 * theta)");
    from_spec(&ModelSpec {
        name: "rotated_trig".into(),
        dim: 2,
        domain: [0.0, std::f64::consts::FRAC_PI_2],
        kind: SpecKind::Dense,
        eigenvalues: None,
        entries: Some(vec![
            vec![entry(&d0, "0"), entry(&off, "0")],
            vec![entry(&off, "0"), entry(&d1, "0")],
        ]),
    })
    .unwrap()
}

/// Bloch vector of length 0.8 rotating in the x-z plane with a phase.
fn mixed_rotor() -> ParametricModel {
    from_spec(&ModelSpec {
        name: "rotor".into(),
        dim: 2,
        domain: [0.0, 3.0],
        kind: SpecKind::Dense,
        eigenvalues: None,
        entries: Some(vec![
            vec![entry("(1 + 0.8 * cos(theta)) / 2", "0"), entry("0.4 * sin(theta)", "0.1")],
            vec![entry("0.4 * sin(theta)", "-0.1"), entry("(1 - 0.8 * cos(theta)) / 2", "0")],
        ]),
    })
    .unwrap()
}

fn fd_drho(m: &ParametricModel, t: f64, h: f64) -> CMatrix {
    let (lo, hi) = m.domain();
    let r = |x: f64| m.rho_at(x).unwrap().matrix().clone();
    let c = |k: f64| nalgebra::Complex::new(k, 0.0);
    if t - 2.0 * h >= lo && t + 2.0 * h <= hi {
        (r(t - 2.0 * h) - r(t - h) * c(8.0) + r(t + h) * c(8.0) - r(t + 2.0 * h)) / c(12.0 * h)
    } else {
        let s = if t + 4.0 * h <= hi { 1.0 } else { -1.0 };
        let p = |k: f64| r(t + s * k * h);
        (p(0.0) * c(-25.0) + p(1.0) * c(48.0) - p(2.0) * c(36.0) + p(3.0) * c(16.0) - p(4.0) * c(3.0))
            / c(12.0 * s * h)
    }
}

fn check_grid(m: &ParametricModel, drho_tol: f64) {
    let (lo, hi) = m.domain();
    for t in grid(lo, hi, 1001) {
        let rho = m.rho_at(t).unwrap();
        let dec = eigh(rho.op(), None);
        let tr: f64 = dec.eigenvalues().iter().sum();
        assert!((tr - 1.0).abs() < 1e-12, "{} trace at {t}", m.name());
        assert!(dec.eigenvalues()[0] >= -1e-12, "{} psd at {t}", m.name());

        let err = max_abs(&(fd_drho(m, t, 1e-3) - m.drho_at(t).unwrap().matrix()));
        assert!(err < drho_tol, "{} drho at {t}: {err}", m.name());

        let curves = eigencurves(m, t).unwrap();
        let s: f64 = curves.curves.iter().map(|c| c.value).sum();
        let s1: f64 = curves.curves.iter().map(|c| c.d1).sum();
        assert!((s - 1.0).abs() < 1e-9, "{} curve sum at {t}", m.name());
        assert!(s1.abs() < 1e-7, "{} curve derivative sum at {t}: {s1}", m.name());
    }
}

#[test]
fn builtins_on_fine_grid() {
    check_grid(&builtin_flip(), 1e-10);
    check_grid(&builtin_trig(), 1e-10);
}

#[test]
fn dense_specs_on_fine_grid() {
    check_grid(&rotated_trig(), 1e-7);
    check_grid(&mixed_rotor(), 1e-7);
}

#[test]
fn diagonal_specs_match_builtins() {
    let pairs = [
        (
            from_spec(&ModelSpec::diagonal("t", [0.0, std::f64::consts::FRAC_PI_2], &["cos(theta)^2", "sin(theta)^2"])).unwrap(),
            builtin_trig(),
        ),
        (
            from_spec(&ModelSpec::diagonal("f", [0.0, 1.0], &["1 - theta", "theta"])).unwrap(),
            builtin_flip(),
        ),
    ];
    for (spec, b) in &pairs {
        let (lo, hi) = b.domain();
        for t in grid(lo, hi, 101) {
            let d = max_abs(&(spec.rho_at(t).unwrap().matrix() - b.rho_at(t).unwrap().matrix()));
            let dd = max_abs(&(spec.drho_at(t).unwrap().matrix() - b.drho_at(t).unwrap().matrix()));
            assert!(d < 1e-12 && dd < 1e-12, "{} at {t}", b.name());
        }
    }
}

#[test]
fn numeric_curves_follow_rotated_spectrum() {
    let m = rotated_trig();
    for t in [0.0, 0.2, 0.7, 1.3] {
        let at = eigencurves(&m, t).unwrap();
        let mut vals: Vec<(f64, f64, f64)> = at.curves.iter().map(|c| (c.value, c.d1, c.d2)).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (s, c) = (t.sin(), t.cos());
        let mut want = [(c * c, -(2.0 * t).sin(), -2.0 * (2.0 * t).cos()), (s * s, (2.0 * t).sin(), 2.0 * (2.0 * t).cos())];
        want.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (g, w) in vals.iter().zip(&want) {
            assert!((g.0 - w.0).abs() < 1e-10, "t={t}");
            assert!((g.1 - w.1).abs() < 1e-6, "t={t}: {} vs {}", g.1, w.1);
            assert!((g.2 - w.2).abs() < 1e-4, "t={t}: {} vs {}", g.2, w.2);
        }
    }
}
