//! Algebraic properties of the bases and the profile estimator, checked on
//! randomly generated inputs.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use randcoef::basis::build_raw_basis;
use randcoef::estimator::{evaluate_b, fit_with_solver, linspace, profile_fit, FitOptions};
use randcoef::{BasisFamily, BasisSpec, Domain, EvalGrid, ProfileSolver, SampleData, SieveModel};

fn random_sample(seed: u64, n: usize, p: usize, q: usize) -> SampleData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: DMatrix<f64> = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
    let z: Option<DMatrix<f64>> =
        (q > 0).then(|| DMatrix::from_fn(n, q, |_, _| rng.random_range(0.0..3.0)));
    let y = DVector::from_fn(n, |i, _| {
        let x0: f64 = x[(i, 0)];
        let mut v =
            1.0 - x0 + x0 * x0.powi(2) * 1.5 + 0.3 * rng.random_range(-1.0..1.0) * (1.0 + x0.abs());
        if p > 1 {
            v += x[(i, 1)] * (x0.exp() - 1.0);
        }
        if let Some(z) = &z {
            v += 0.4 * z[(i, 0)];
        }
        v
    });
    SampleData::new(y, x, z).unwrap()
}

fn family(b: bool) -> BasisFamily {
    if b {
        BasisFamily::Bspline
    } else {
        BasisFamily::Polynomial
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constrained_columns_satisfy_moments(seed in any::<u64>(), n in 40usize..250, p in 1usize..=2, k in 1usize..=5, fam in any::<bool>()) {
        let data = random_sample(seed, n, p, 0);
        let model = SieveModel::for_data(family(fam), k, &data).unwrap();
        let bases = model.build_bases(&data).unwrap();
        for basis in &bases.slope {
            let psi = basis.eval(&data.x).unwrap();
            let target = basis.constraints.target.unwrap();
            for c in 0..psi.ncols() {
                let col = psi.column(c);
                let scale = col.amax();
                prop_assert!(col.mean().abs() <= 1e-10 * scale);
                for m in (0..p).filter(|&m| m != target) {
                    prop_assert!(col.component_mul(&data.x.column(m)).mean().abs() <= 1e-10 * scale);
                }
            }
        }
    }

    #[test]
    fn refitting_fitted_values_is_idempotent(seed in any::<u64>(), p in 1usize..=2, k in 1usize..=4, q in 0usize..=1) {
        let data = random_sample(seed, 200, p, q);
        let model = SieveModel::for_data(BasisFamily::Polynomial, k, &data).unwrap();
        let (design, _) = model.build(&data).unwrap();
        let opts = FitOptions::default();
        let solver = ProfileSolver::new(&design, &opts).unwrap();
        let fit = fit_with_solver(&solver, &design, k, &design.y, &opts).unwrap();
        let refit = fit_with_solver(&solver, &design, k, &fit.fitted, &opts).unwrap();
        prop_assert!((&refit.delta_hat - &fit.delta_hat).amax() <= 1e-8 * fit.delta_hat.amax().max(1.0));
        prop_assert!((&refit.pi_hat - &fit.pi_hat).amax() <= 1e-8 * fit.pi_hat.amax().max(1.0));
        prop_assert!(refit.residuals.amax() <= 1e-8 * fit.fitted.amax());
    }

    #[test]
    fn response_scaling_is_equivariant(seed in any::<u64>(), c in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0]) {
        let data = random_sample(seed, 150, 1, 0);
        let model = SieveModel::for_data(BasisFamily::Polynomial, 3, &data).unwrap();
        let (design, _) = model.build(&data).unwrap();
        let scaled = SampleData::new(&data.y * c, data.x.clone(), None).unwrap();
        let (design_c, _) = model.build(&scaled).unwrap();
        let a = profile_fit(&design, 3).unwrap();
        let b = profile_fit(&design_c, 3).unwrap();
        for k in 0..a.delta_hat.len() {
            prop_assert!((b.delta_hat[k] - c * a.delta_hat[k]).abs() <= 1e-9 * a.delta_hat.amax().max(1.0) * c.abs());
            prop_assert!((b.std_errors[k] - c.abs() * a.std_errors[k]).abs() <= 1e-9 * a.std_errors[k].max(1e-12) * c.abs());
        }
    }

    #[test]
    fn covariance_is_symmetric_psd(seed in any::<u64>(), p in 1usize..=2, k in 1usize..=4) {
        let data = random_sample(seed, 180, p, 0);
        let model = SieveModel::for_data(BasisFamily::Bspline, k, &data).unwrap();
        let (design, _) = model.build(&data).unwrap();
        let fit = profile_fit(&design, k).unwrap();
        let v = &fit.vcov_delta;
        prop_assert!((v - v.transpose()).amax() <= 1e-12 * v.amax());
        let eig = v.clone().symmetric_eigen();
        prop_assert!(eig.eigenvalues.min() >= -1e-12 * v.amax());
    }

    #[test]
    fn row_order_does_not_matter(seed in any::<u64>(), p in 1usize..=2) {
        let data = random_sample(seed, 120, p, 1);
        let mut rows: Vec<usize> = (0..120).collect();
        rows.reverse();
        rows.swap(3, 77);
        let permuted = data.subset(&rows);
        let model = SieveModel::for_data(BasisFamily::Polynomial, 3, &data).unwrap();
        let a = profile_fit(&model.build(&data).unwrap().0, 3).unwrap();
        let b = profile_fit(&model.build(&permuted).unwrap().0, 3).unwrap();
        prop_assert!((&a.delta_hat - &b.delta_hat).amax() <= 1e-9 * a.delta_hat.amax().max(1.0));
        prop_assert!((&a.std_errors - &b.std_errors).amax() <= 1e-9 * a.std_errors.amax());
    }
}

/// Polynomials and splines without interior knots span the same space, so
/// the estimates may not depend on which parameterization is used.
#[test]
fn basis_reparameterization_invariance() {
    for (seed, p) in [(1u64, 1usize), (2, 2), (3, 1)] {
        for k in 1..=3 {
            let data = random_sample(seed, 200, p, 0);
            let poly = SieveModel::for_data(BasisFamily::Polynomial, k, &data).unwrap();
            let spl = SieveModel::for_data(BasisFamily::Bspline, k, &data).unwrap();
            let (dp, bp) = poly.build(&data).unwrap();
            let (ds, bs) = spl.build(&data).unwrap();
            let fp = profile_fit(&dp, k).unwrap();
            let fs = profile_fit(&ds, k).unwrap();
            assert!((&fp.delta_hat - &fs.delta_hat).amax() < 1e-8, "p={p} k={k}");
            assert!((&fp.fitted - &fs.fitted).amax() < 1e-8);
            let axis = linspace(-0.9, 0.9, 21);
            let grid = if p == 1 {
                EvalGrid::univariate(&axis)
            } else {
                EvalGrid::product2(&axis[..7])
            };
            let ep = evaluate_b(&fp, &bp, &grid).unwrap();
            let es = evaluate_b(&fs, &bs, &grid).unwrap();
            for (a, b) in ep.aggregate.iter().zip(&es.aggregate) {
                for (u, v) in a.iter().zip(b) {
                    assert!((u - v).abs() < 1e-7);
                }
            }
        }
    }
}

/// Naive recursive Cox–de Boor definition.
fn cox_de_boor(t: &[f64], i: usize, d: usize, x: f64, right_end: bool) -> f64 {
    if d == 0 {
        let inside = t[i] <= x && x < t[i + 1];
        // Close the last nonempty span on the right.
        let last = right_end
            && x == t[i + 1]
            && t[i] < t[i + 1]
            && t[i + 1..].iter().all(|&v| v == t[i + 1]);
        return if inside || last { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let den1 = t[i + d] - t[i];
    if den1 > 0.0 {
        v += (x - t[i]) / den1 * cox_de_boor(t, i, d - 1, x, right_end);
    }
    let den2 = t[i + d + 1] - t[i + 1];
    if den2 > 0.0 {
        v += (t[i + d + 1] - x) / den2 * cox_de_boor(t, i + 1, d - 1, x, right_end);
    }
    v
}

#[test]
fn bsplines_match_recursive_definition_and_sum_to_one() {
    let domain = Domain::new(-0.5, 2.0).unwrap();
    for spec in [
        BasisSpec::bspline(1, domain).unwrap(),
        BasisSpec::bspline(3, domain).unwrap(),
        BasisSpec::bspline(6, domain).unwrap(),
        BasisSpec::bspline_with_knots(vec![0.0, 0.1, 1.5], 2, domain).unwrap(),
    ] {
        let d = spec.degree;
        let mut t = vec![domain.lo; d + 1];
        t.extend_from_slice(&spec.knots);
        t.extend(std::iter::repeat_n(domain.hi, d + 1));
        let nb = t.len() - d - 1;
        let xs = linspace(domain.lo, domain.hi, 57);
        let raw = build_raw_basis(&spec, &xs).unwrap();
        assert_eq!(raw.ncols(), nb - 1);
        for (r, &x) in xs.iter().enumerate() {
            let all: Vec<f64> = (0..nb).map(|i| cox_de_boor(&t, i, d, x, true)).collect();
            assert!((all.iter().sum::<f64>() - 1.0).abs() < 1e-12, "x={x}");
            for c in 0..raw.ncols() {
                assert!((raw[(r, c)] - all[c + 1]).abs() < 1e-12, "x={x} c={c}");
            }
        }
    }
}

#[test]
fn polynomial_columns_are_powers() {
    let spec = BasisSpec::polynomial(4, Domain::new(-2.0, 2.0).unwrap()).unwrap();
    let raw = build_raw_basis(&spec, &[-1.5, 0.5, 2.0]).unwrap();
    for (r, x) in [-1.5f64, 0.5, 2.0].iter().enumerate() {
        for k in 0..4 {
            assert!((raw[(r, k)] - x.powi(k as i32 + 1)).abs() < 1e-14);
        }
    }
}
