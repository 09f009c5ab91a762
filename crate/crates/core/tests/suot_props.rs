use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use suot_core::bures::*;
use suot_core::gaussian::*;
use suot_core::oracle::*;
use suot_core::spd::*;
use suot_core::suot::*;
use suot_core::SuotError;

fn pair(d: usize, s: f64, seed: u64) -> (SpdMatrix, SpdMatrix) {
    (
        sample_spd(d, s, seed).unwrap(),
        sample_spd(d, s, seed.wrapping_add(1)).unwrap(),
    )
}

fn pair_strategy(max_d: usize) -> impl Strategy<Value = (SpdMatrix, SpdMatrix)> {
    (1usize..=max_d, 0.1f64..0.8, any::<u64>()).prop_map(|(d, s, seed)| pair(d, s, seed))
}

fn tau_strategy() -> impl Strategy<Value = f64> {
    (-2.0f64..2.0).prop_map(|e| 10f64.powf(e))
}

fn unit_dir(d: usize, seed: u64) -> SymMatrix {
    let m = sample_spd(d, 0.7, seed).unwrap();
    let x = m.as_matrix() - DMatrix::identity(d, d);
    let n = x.norm().max(1e-3);
    SymMatrix::from_matrix(x / n).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

fn neg_trace_root(s: &SpdMatrix, tau: f64) -> f64 {
    let d = s.dim();
    let m = s.as_matrix() * s.as_matrix() + s.as_matrix() * (2.0 * tau);
    let m = SpdMatrix::from_matrix(m + DMatrix::zeros(d, d)).unwrap();
    -trace(&sqrt_spd(&m).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cost_below_w2((a, b) in pair_strategy(5), tau in tau_strategy()) {
        let c = suot_cost_centered(&a, &b, tau).unwrap();
        let w = w2_squared_cov(&a, &b).unwrap();
        prop_assert!(c >= 0.0);
        prop_assert!(c <= w + 1e-10 * w.max(1.0));
    }

    #[test]
    fn cost_nondecreasing_in_tau((a, b) in pair_strategy(4)) {
        let grid = [1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0, 1e3];
        let costs: Vec<f64> = grid.iter().map(|&t| suot_cost_centered(&a, &b, t).unwrap()).collect();
        for w in costs.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12 * w[1].abs().max(1.0));
        }
    }

    #[test]
    fn tau_limits((a, b) in (1usize..=4, 0.1f64..0.5, any::<u64>()).prop_map(|(d, s, seed)| pair(d, s, seed))) {
        // The endpoint gaps scale with the spectrum, so keep the spread moderate.
        let gap = (a.as_matrix() - b.as_matrix()).norm();
        prop_assume!(gap > 1e-3);
        let grid = [1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0, 1e3];
        let xs: Vec<SpdMatrix> = grid.iter().map(|&t| relaxed_covariance(&a, &b, t).unwrap()).collect();
        let to_b: Vec<f64> = xs.iter().map(|x| (x.as_matrix() - b.as_matrix()).norm()).collect();
        let to_a: Vec<f64> = xs.iter().map(|x| (x.as_matrix() - a.as_matrix()).norm()).collect();
        prop_assert!(to_b[0] <= 1e-2 * gap);
        prop_assert!(to_a[grid.len() - 1] <= 1e-2 * gap);
        for k in 1..grid.len() {
            prop_assert!(to_b[k] > to_b[k - 1]);
            prop_assert!(to_a[k] < to_a[k - 1]);
        }
    }

    #[test]
    fn joint_covariance_is_psd((a, b) in pair_strategy(4), tau in tau_strategy()) {
        let plan = solve_suot(&GaussianMeasure::centered(a), &GaussianMeasure::centered(b.clone()), tau).unwrap();
        let joint = plan.joint_covariance(&b);
        let e = joint.clone().symmetric_eigen();
        let min = e.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= -1e-9 * joint.norm());
        let d = b.dim();
        let lower = joint.view((d, d), (d, d)).into_owned();
        prop_assert!((lower - b.as_matrix()).norm() <= 1e-12 * b.as_matrix().norm());
    }

    #[test]
    fn cost_matches_mass_formula(
        (a, b) in pair_strategy(3),
        tau in tau_strategy(),
        mass in 0.2f64..4.0,
        shift in -1.0f64..1.0,
    ) {
        let d = a.dim();
        let alpha = GaussianMeasure::new(mass, DVector::from_element(d, shift), a).unwrap();
        let beta = GaussianMeasure::centered(b);
        let plan = solve_suot(&alpha, &beta, tau).unwrap();
        let expected = tau * mass * (1.0 - (-plan.upsilon / tau).exp());
        prop_assert!((plan.cost - expected).abs() <= 1e-10 * expected.abs().max(1.0));
        prop_assert!((plan.m_pi - mass * (-plan.upsilon / tau).exp()).abs() <= 1e-12 * mass);
    }

    #[test]
    fn mean_part_is_the_optimal_shift(
        (a, b) in pair_strategy(3),
        tau in tau_strategy(),
        seed in any::<u64>(),
    ) {
        let d = a.dim();
        let ma = DVector::from_fn(d, |i, _| ((seed >> (i * 8)) & 0xff) as f64 / 64.0 - 2.0);
        let mb = DVector::from_fn(d, |i, _| ((seed >> (i * 8 + 32)) & 0xff) as f64 / 64.0 - 2.0);
        let centered = solve_suot(&GaussianMeasure::centered(a.clone()), &GaussianMeasure::centered(b.clone()), tau).unwrap();
        let plan = solve_suot(
            &GaussianMeasure::new(1.0, ma.clone(), a.clone()).unwrap(),
            &GaussianMeasure::new(1.0, mb.clone(), b.clone()).unwrap(),
            tau,
        ).unwrap();
        let ainv = inv_spd(&a).unwrap();
        let direct = |t: &DVector<f64>| {
            let u = t - &mb;
            let v = t - &ma;
            u.dot(&u) + 0.5 * tau * (ainv.as_matrix() * &v).dot(&v)
        };
        let shift = plan.upsilon - centered.upsilon;
        let value = direct(&plan.a_x);
        prop_assert!((shift - value).abs() <= 1e-9 * value.max(1.0));
        let m = mean_weight_matrix(&a, tau).unwrap();
        let diff = &ma - &mb;
        prop_assert!(((m.as_matrix() * &diff).dot(&diff) - value).abs() <= 1e-9 * value.max(1.0));
        for k in 0..d {
            let mut e = DVector::zeros(d);
            e[k] = 1e-4;
            let fd = (direct(&(&plan.a_x + &e)) - direct(&(&plan.a_x - &e))) / 2e-4;
            prop_assert!(fd.abs() <= 1e-7 * (1.0 + value));
        }
        let em = eig(&m).unwrap();
        prop_assert!(em.min() >= -1e-12);
    }

    #[test]
    fn gradient_matches_directional_fd(
        (a, b) in pair_strategy(5),
        tau in tau_strategy(),
        seed in any::<u64>(),
    ) {
        let g = suot_gradient(&a, &b, tau).unwrap();
        let cost = |s: &SpdMatrix| suot_cost_centered(&a, s, tau);
        let scale = 1.0 + suot_cost_centered(&a, &b, tau).unwrap();
        for k in 0..5u64 {
            let x = unit_dir(b.dim(), seed.wrapping_add(k));
            let fd = fd_directional_derivative(cost, &b, &x, 1e-5).unwrap();
            let exact = tangent_inner(&b, &g, &x);
            prop_assert!(
                (fd - exact).abs() <= 1e-5 * exact.abs().max(1e-3 * scale),
                "fd {} exact {}", fd, exact
            );
        }
    }

    #[test]
    fn gradient_vanishes_at_alpha(a in (1usize..=5, 0.1f64..0.8, any::<u64>()).prop_map(|(d, s, seed)| sample_spd(d, s, seed).unwrap()), tau in tau_strategy()) {
        let g = suot_gradient(&a, &a, tau).unwrap();
        prop_assert!(tangent_norm(&a, &g) <= 1e-7);
    }

    #[test]
    fn fd_step_halving_agrees((a, b) in pair_strategy(4), tau in tau_strategy(), seed in any::<u64>()) {
        let x = unit_dir(b.dim(), seed);
        let cost = |s: &SpdMatrix| suot_cost_centered(&a, s, tau);
        let d1 = fd_directional_derivative(cost, &b, &x, 1e-4).unwrap();
        let d2 = fd_directional_derivative(cost, &b, &x, 5e-5).unwrap();
        let scale = 1.0 + suot_cost_centered(&a, &b, tau).unwrap();
        prop_assert!((d1 - d2).abs() <= 1e-6 * d2.abs().max(1e-3 * scale));
    }

    #[test]
    fn entropic_converges_linearly((a, b) in pair_strategy(4), tau in tau_strategy()) {
        let base = relaxed_covariance(&a, &b, tau).unwrap();
        let mut gaps = Vec::new();
        for delta in [1e-6, 1e-4, 1e-2] {
            match solve_entropic_suot(&a, &b, tau, delta) {
                Ok((x, _)) => gaps.push((x.as_matrix() - base.as_matrix()).norm()),
                Err(SuotError::DeltaTooLarge { .. }) => break,
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            }
        }
        prop_assert!(gaps.len() >= 2);
        for w in gaps.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        let slope_small = gaps[0] / 1e-6;
        let slope_mid = gaps[1] / 1e-4;
        prop_assert!((slope_small - slope_mid).abs() <= 0.05 * slope_mid.max(1e-12));
    }

    #[test]
    fn entropic_delta_guard((a, b) in pair_strategy(3), tau in tau_strategy(), delta in (-3.0f64..1.5).prop_map(|e| 10f64.powf(e))) {
        let sbh = sqrt_spd(&b).unwrap();
        match solve_entropic_suot(&a, &b, tau, delta) {
            Ok((x, k)) => {
                let xh = sqrt_spd(&x).unwrap();
                let sv = (sbh.as_matrix() * xh.as_matrix()).singular_values();
                let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
                prop_assert!(min >= delta / 4.0 - 1e-12);
                let d = b.dim();
                let expected = xh.as_matrix() * sbh.as_matrix() - DMatrix::identity(d, d) * (delta / 4.0);
                prop_assert!((k - &expected).norm() <= 1e-10 * expected.norm().max(1.0));
            }
            Err(SuotError::DeltaTooLarge { delta: dl, min_singular_value }) => {
                prop_assert_eq!(dl, delta);
                prop_assert!(min_singular_value < delta / 4.0);
            }
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        }
    }

    #[test]
    fn root_trace_midpoint_convexity(seed in any::<u64>(), d in 1usize..=4, tau in tau_strategy(), rho in 1.5f64..6.0) {
        let s1 = clamp_to_box(&sample_spd(d, 0.8, seed).unwrap(), rho).unwrap();
        let s2 = clamp_to_box(&sample_spd(d, 0.8, seed.wrapping_add(3)).unwrap(), rho).unwrap();
        let mid = SpdMatrix::from_matrix((s1.as_matrix() + s2.as_matrix()) * 0.5).unwrap();
        let gap = 0.5 * (neg_trace_root(&s1, tau) + neg_trace_root(&s2, tau)) - neg_trace_root(&mid, tau);
        let coef = tau * tau / (rho * rho + 2.0 * tau * rho).powf(1.5);
        let dist = (s1.as_matrix() - s2.as_matrix()).norm_squared();
        prop_assert!(gap >= coef * dist / 8.0 - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn brute_force_agrees_in_2d(s in 0.1f64..0.8, seed in any::<u64>(), tau in prop::sample::select(vec![0.1, 1.0, 10.0])) {
        let (a, b) = pair(2, s, seed);
        let closed = suot_cost_centered(&a, &b, tau).unwrap();
        let x = relaxed_covariance(&a, &b, tau).unwrap();
        let (bx, bv) = brute_force_suot(&a, &b, tau, DEFAULT_RESTARTS, seed).unwrap();
        prop_assert!(rel_err(closed, bv) <= 1e-4);
        prop_assert!((bx.as_matrix() - x.as_matrix()).norm() <= 1e-3 * x.as_matrix().norm());
        prop_assert!(bv >= closed - 1e-9 * closed.max(1e-12));
    }

    #[test]
    fn brute_force_is_seed_stable(s in 0.1f64..0.8, seed in any::<u64>(), tau in prop::sample::select(vec![0.1, 1.0, 10.0])) {
        let (a, b) = pair(3, s, seed);
        let (_, v1) = brute_force_suot(&a, &b, tau, 4, seed).unwrap();
        let (_, v2) = brute_force_suot(&a, &b, tau, 4, seed.wrapping_add(1000)).unwrap();
        prop_assert!(rel_err(v1, v2) <= 1e-5);
    }
}

#[test]
fn scalar_stationary_value_matches_golden_section() {
    for &u in &[0.01f64, 0.1, 0.5, 1.0, 5.0, 100.0] {
        for &tau in &[0.01f64, 0.1, 1.0, 10.0, 100.0] {
            let closed = (1.0 + (1.0 + 2.0 * u * tau).sqrt()) / (2.0 * u);
            let diff = |x: f64, y: f64| (x - y) * (u * (x + y) - 2.0) - tau * ((x - y) / y).ln_1p();
            let hi = 10.0 * (1.0 + tau) / u + 10.0;
            let v = golden_section_argmin_by(diff, 1e-12, hi, 0.0);
            assert!(rel_err(v, closed) <= 1e-8, "u={u} tau={tau}: {v} vs {closed}");
        }
    }
}

#[test]
fn transported_mass_matches_golden_section() {
    for &mass in &[1.0f64, 2.5] {
        for &ups in &[0.0f64, 0.01, 0.5, 1.0, 3.0, 10.0] {
            for &tau in &[0.1, 1.0, 10.0] {
                let closed = mass * (-ups / tau).exp();
                let diff = |x: f64, y: f64| {
                    (x - y) * (ups + tau * (x / mass).ln() - tau) + tau * y * ((x - y) / y).ln_1p()
                };
                let m = golden_section_argmin_by(diff, 0.0, mass, 0.0);
                assert!(rel_err(m, closed) <= 1e-8, "m={mass} ups={ups} tau={tau}: {m} vs {closed}");
            }
        }
    }
}

#[test]
fn scalar_gradient_matches_fd() {
    let a = SpdMatrix::from_diagonal(&[1.0]).unwrap();
    let cost = |b: f64| suot_cost_centered(&a, &SpdMatrix::from_diagonal(&[b]).unwrap(), 2.0).unwrap();
    let h = 1e-5;
    let dcost = (cost(4.0 + h) - cost(4.0 - h)) / (2.0 * h);
    // Along the retraction (1+t)²·4 the chain rule gives d/dt = 8·dcost.
    let g = suot_gradient(&a, &SpdMatrix::from_diagonal(&[4.0]).unwrap(), 2.0).unwrap();
    let inner = tangent_inner(&SpdMatrix::from_diagonal(&[4.0]).unwrap(), &g, &SymMatrix::identity(1));
    assert!(rel_err(inner, 8.0 * dcost) <= 1e-7, "{inner} vs {}", 8.0 * dcost);
}

#[test]
fn saturation_keeps_cost_finite() {
    let a = SpdMatrix::identity(2);
    let alpha = GaussianMeasure::new(2.0, DVector::from_element(2, 0.0), a.clone()).unwrap();
    let beta = GaussianMeasure::new(1.0, DVector::from_element(2, 500.0), a).unwrap();
    let plan = solve_suot(&alpha, &beta, 1e-2).unwrap();
    assert!(plan.saturated);
    assert_eq!(plan.m_pi, 0.0);
    assert!((plan.cost - 2e-2).abs() <= 1e-15);
}
