use nalgebra::DMatrix;
use proptest::prelude::*;
use suot_core::bures::sample_spd;
use suot_core::spd::*;

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn spd_strategy() -> impl Strategy<Value = SpdMatrix> {
    (1usize..=5, 0.1f64..1.2, any::<u64>()).prop_map(|(d, s, seed)| sample_spd(d, s, seed).unwrap())
}

fn spd_pair() -> impl Strategy<Value = (SpdMatrix, SpdMatrix)> {
    (1usize..=5, 0.1f64..1.2, any::<u64>()).prop_map(|(d, s, seed)| {
        (
            sample_spd(d, s, seed).unwrap(),
            sample_spd(d, s, seed.wrapping_add(1)).unwrap(),
        )
    })
}

fn sym_strategy(d: usize) -> impl Strategy<Value = SymMatrix> {
    proptest::collection::vec(-2.0f64..2.0, d * d)
        .prop_map(move |v| SymMatrix::from_row_slice(d, &v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eig_reconstructs(m in (1usize..=6).prop_flat_map(sym_strategy)) {
        let e = eig(&m).unwrap();
        let back = e.reconstruct();
        prop_assert!((back.as_matrix() - m.as_matrix()).norm() <= 1e-13 * m.as_matrix().norm().max(1.0));
        let d = m.dim();
        let ortho = e.vectors.transpose() * &e.vectors - DMatrix::identity(d, d);
        prop_assert!(ortho.norm() <= 1e-13);
        for w in e.values.as_slice().windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        for k in 0..d {
            let col = e.vectors.column(k);
            if let Some(first) = col.iter().find(|v| v.abs() > 1e-14) {
                prop_assert!(*first > 0.0);
            }
        }
    }

    #[test]
    fn sqrt_and_inverse_roots(a in spd_strategy()) {
        let s = sqrt_spd(&a).unwrap();
        prop_assert!(rel(&(s.as_matrix() * s.as_matrix()), a.as_matrix()) <= 1e-9);
        let lhs = inv_sqrt_spd(&a).unwrap();
        let rhs = inv_spd(&s).unwrap();
        prop_assert!(rel(lhs.as_matrix(), rhs.as_matrix()) <= 1e-9);
        let inv = inv_spd(&a).unwrap();
        let d = a.dim();
        prop_assert!((inv.as_matrix() * a.as_matrix() - DMatrix::identity(d, d)).norm() <= 1e-9);
    }

    #[test]
    fn lyapunov_residual(b in spd_strategy(), seed in any::<u64>()) {
        let d = b.dim();
        let a = SymMatrix::from_matrix(sample_spd(d, 0.8, seed).unwrap().as_matrix() - DMatrix::identity(d, d)).unwrap();
        let x = lyapunov_solve(&b, &a).unwrap();
        let res = x.as_matrix() * b.as_matrix() + b.as_matrix() * x.as_matrix() - a.as_matrix();
        prop_assert!(res.norm() <= 1e-9 * a.as_matrix().norm().max(1e-300));
    }

    #[test]
    fn lyapunov_trace_identity(s in spd_strategy(), seed in any::<u64>()) {
        let d = s.dim();
        let a = SymMatrix::from_matrix(sample_spd(d, 0.8, seed).unwrap().as_matrix() * 2.0 - DMatrix::identity(d, d)).unwrap();
        let x = lyapunov_solve(&sqrt_spd(&s).unwrap(), &a).unwrap();
        let lhs = trace(&x);
        let rhs = 0.5 * (inv_sqrt_spd(&s).unwrap().as_matrix() * a.as_matrix()).trace();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn logdet_directional_derivative(a in spd_strategy(), seed in any::<u64>()) {
        let d = a.dim();
        let bm = sample_spd(d, 0.5, seed).unwrap().as_matrix() - DMatrix::identity(d, d);
        let t = 1e-6;
        let plus = SpdMatrix::from_matrix(a.as_matrix() + &bm * t).unwrap();
        let minus = SpdMatrix::from_matrix(a.as_matrix() - &bm * t).unwrap();
        let fd = (logdet(&plus).unwrap() - logdet(&minus).unwrap()) / (2.0 * t);
        let ih = inv_sqrt_spd(&a).unwrap();
        let exact = (ih.as_matrix() * &bm * ih.as_matrix()).trace();
        prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0));
    }

    #[test]
    fn trace_lemma((a, b) in spd_pair()) {
        let lhs = sqrt_product(&a, &b).unwrap().trace();
        let ah = sqrt_spd(&a).unwrap();
        let inner = SpdMatrix::from_matrix(ah.as_matrix() * b.as_matrix() * ah.as_matrix()).unwrap();
        let rhs = trace(&sqrt_spd(&inner).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn sqrt_product_squares_back((a, b) in spd_pair()) {
        let r = sqrt_product(&a, &b).unwrap();
        let ab = a.as_matrix() * b.as_matrix();
        prop_assert!(rel(&(&r * &r), &ab) <= 1e-9);
    }

    #[test]
    fn clamp_lands_in_box(a in spd_strategy(), rho in 1.01f64..5.0) {
        let c = clamp_to_box(&a, rho).unwrap();
        prop_assert!(in_box(&c, rho));
        if in_box(&a, rho) {
            prop_assert!(rel(c.as_matrix(), a.as_matrix()) <= 1e-12);
        }
    }

    #[test]
    fn expm_spectrum(m in (1usize..=5).prop_flat_map(sym_strategy)) {
        let e = eig(&m).unwrap();
        let x = expm_sym(&m).unwrap();
        let ex = eig(x.as_sym()).unwrap();
        for (l, v) in e.values.iter().zip(ex.values.iter()) {
            prop_assert!((l.exp() - v).abs() <= 1e-10 * v.max(1.0));
        }
    }
}

// A 3×3 case where the QR iteration alone stops with an off-diagonal near 2e-10.
#[test]
fn eig_is_accurate_to_rounding() {
    let m = SymMatrix::from_row_slice(
        3,
        &[
            0.968006059810851, -0.5259263347138983, 0.9637036476236696,
            -0.5259263347138983, 0.40173954477921076, 1.5436219216794607,
            0.9637036476236696, 1.5436219216794607, -1.259721041304302,
        ],
    )
    .unwrap();
    let e = eig(&m).unwrap();
    assert!((e.reconstruct().as_matrix() - m.as_matrix()).norm() <= 1e-14 * m.as_matrix().norm());

    let doubled = SymMatrix::from_matrix(DMatrix::identity(4, 4) * 2.0).unwrap();
    assert_eq!(eig(&doubled).unwrap().values.as_slice(), &[2.0; 4]);
}
