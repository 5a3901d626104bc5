//! Independent oracles for the structured kernels, schemes and harness.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use tfde::all_at_once::interpolate_bilinear;
use tfde::harness::{
    compute_err, dump_matrices, read_csv, run_experiment, write_csv, DumpConfig, ExperimentConfig, Mode, SchemeTag,
};
use tfde::krylov::bicgstab;
use tfde::linalg::{band_truncate, read_dense, BandedMatrix, DenseAssemble, DenseLu, LowerHessenbergToeplitz};
use tfde::weights::{untempered_weights, TemperedWeights};
use tfde::{
    build_mesh, catalog, coarse_initial_guess, liess_run, newton_solve, nlies_step_run, precond_build, AllAtOnceSystem,
    Mesh, NewtonConfig, ProblemSpec, SchemeOptions,
};

/// `(-1)^k C(α, k)` as a direct product `Π_{m<k} (m - α) / (m + 1)`.
fn binomial_product(alpha: f64, k: usize) -> f64 {
    (0..k).map(|m| (m as f64 - alpha) / (m as f64 + 1.0)).product()
}

/// Tempered weights straight from the closed form.
fn tempered_oracle(alpha: f64, lambda: f64, h: f64, k_max: usize) -> Vec<f64> {
    let hl = h * lambda;
    (0..=k_max)
        .map(|k| match k {
            0 => hl.exp(),
            1 => -alpha - hl.exp() * (1.0 - (-hl).exp()).powf(alpha),
            _ => binomial_product(alpha, k) * (-(k as f64 - 1.0) * hl).exp(),
        })
        .collect()
}

/// `A` assembled entry by entry from its defining formula.
fn operator_oracle(spec: &ProblemSpec, mesh: &Mesh) -> DMatrix<f64> {
    let n = mesh.interior();
    let (h, tau, alpha) = (mesh.h(), mesh.tau(), spec.alpha);
    let g = tempered_oracle(alpha, spec.lambda, h, n);
    let w1 = tau / h.powf(alpha);
    let w2 = if spec.lambda == 0.0 { 0.0 } else { alpha * spec.lambda.powf(alpha - 1.0) * tau / h };
    let gm = |i: usize, j: usize| if i + 1 >= j { g[i + 1 - j] } else { 0.0 };
    DMatrix::from_fn(n, n, |i, j| {
        let x = mesh.x(i + 1);
        let (dp, dm) = ((spec.d_plus)(x), (spec.d_minus)(x));
        let id = if i == j { 1.0 } else { 0.0 };
        let b = if i == j {
            1.0
        } else if i == j + 1 {
            -1.0
        } else {
            0.0
        };
        id - w1 * (dp * gm(i, j) + dm * gm(j, i)) + w2 * (dp - dm) * b
    })
}

fn block_oracle(a: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut big = DMatrix::zeros(n * m, n * m);
    for b in 0..m {
        big.view_mut((b * n, b * n), (n, n)).copy_from(a);
        if b > 0 {
            for i in 0..n {
                big[(b * n + i, (b - 1) * n + i)] = -1.0;
            }
        }
    }
    big
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[test]
fn plain_weights_match_product_formula() {
    let g = untempered_weights(1.1, 64).unwrap();
    for (k, &gk) in g.iter().enumerate() {
        let exact = binomial_product(1.1, k);
        assert!((gk - exact).abs() <= 1e-13 * exact.abs(), "k = {k}");
    }
}

#[test]
fn plain_weights_match_log_domain_formula() {
    for alpha in [1.05, 1.5, 1.95] {
        let g = untempered_weights(alpha, 256).unwrap();
        for k in 2..=256 {
            let log_mag: f64 = (0..k).map(|m| (m as f64 - alpha).abs().ln() - (m as f64 + 1.0).ln()).sum();
            let exact = log_mag.exp();
            assert!((g[k] - exact).abs() <= 1e-12 * exact, "alpha {alpha}, k {k}");
        }
    }
}

#[test]
fn tempered_weights_match_closed_form() {
    for (alpha, lambda, h) in [(1.5, 1.0, 0.1), (1.1, 10.0, 2f64.powi(-10)), (1.9, 5.0, 2f64.powi(-4))] {
        let w = TemperedWeights::new(alpha, lambda, h, 200).unwrap();
        let o = tempered_oracle(alpha, lambda, h, 200);
        for (k, (a, b)) in w.as_slice().iter().zip(&o).enumerate() {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{alpha} {lambda} {h} k={k}: {a} vs {b}");
        }
    }
}

#[test]
fn toeplitz_unit_vectors() {
    let w = TemperedWeights::new(1.5, 2.0, 0.05, 10).unwrap();
    let g = LowerHessenbergToeplitz::from_weights(w.as_slice(), 10);
    let mut e1 = vec![0.0; 10];
    e1[0] = 1.0;
    let col = g.matvec(&e1, false).unwrap();
    let row = g.matvec(&e1, true).unwrap();
    for i in 0..10 {
        assert!((col[i] - w.get(i + 1)).abs() < 1e-15);
    }
    assert!((row[0] - w.get(1)).abs() < 1e-15);
    assert!((row[1] - w.get(0)).abs() < 1e-15);
    assert!(row[2..].iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn toeplitz_matvec_vs_triple_loop() {
    let n = 64;
    let w = TemperedWeights::new(1.5, 5.0, 2f64.powi(-6), n).unwrap();
    let g = LowerHessenbergToeplitz::from_weights(w.as_slice(), n);
    let mut rng = StdRng::seed_from_u64(7);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for transpose in [false, true] {
        let fast = g.matvec(&x, transpose).unwrap();
        let slow: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| if transpose { g.entry(j, i) } else { g.entry(i, j) } * x[j]).sum())
            .collect();
        assert!(max_abs_diff(&fast, &slow) <= 1e-12 * inf_norm(&slow));
    }
}

#[test]
fn truncation_keeps_weights_in_band() {
    let n = 40;
    let w = TemperedWeights::new(1.5, 0.0, 2f64.powi(-7), n).unwrap();
    let g = LowerHessenbergToeplitz::from_weights(w.as_slice(), n);
    let t = band_truncate(&g, 8).unwrap();
    for i in 0..n {
        for j in 0..n {
            let expected = if i + 1 >= j && i + 1 - j <= 8 { w.get(i + 1 - j) } else { 0.0 };
            assert_eq!(t.get(i, j), expected, "({i}, {j})");
        }
    }
    assert_eq!(band_truncate(&g, n).unwrap().to_dense(n).unwrap(), g.to_dense(n).unwrap());
}

#[test]
fn laplacian_banded_vs_dense() {
    let n = 300;
    let a = BandedMatrix::tridiag(n, -1.0, 2.0, -1.0);
    let b = vec![1.0; n];
    let x = a.factor().unwrap().solve(&b).unwrap();
    let dense = DenseLu::new(a.to_dense(n).unwrap()).unwrap().solve(&b).unwrap();
    assert!(max_abs_diff(&x, &dense) <= 1e-12 * inf_norm(&dense));
}

#[test]
fn truncated_operator_solve_residual() {
    let spec = catalog("example1").unwrap();
    let mesh = build_mesh(&spec, 129, 8).unwrap();
    let op = tfde::SpaceOperator::assemble(&spec, &mesh).unwrap();
    let a = op.banded(8).unwrap();
    let mut rng = StdRng::seed_from_u64(3);
    let b: Vec<f64> = (0..a.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = a.factor().unwrap().solve(&b).unwrap();
    let r: Vec<f64> = a.matvec(&x).unwrap().iter().zip(&b).map(|(ax, bi)| ax - bi).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm(&r) <= 1e-12 * norm(&b));
}

#[test]
fn operator_matches_index_loop() {
    let spec = catalog("example1").unwrap().with_order(1.7, 2.0);
    let mesh = build_mesh(&spec, 8, 4).unwrap();
    let op = tfde::SpaceOperator::assemble(&spec, &mesh).unwrap();
    let dense = op.to_dense(64).unwrap();
    let oracle = operator_oracle(&spec, &mesh);
    assert!((dense - &oracle).amax() <= 1e-13);

    let mut rng = StdRng::seed_from_u64(11);
    let x: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = op.matvec(&x).unwrap();
    let yo = &oracle * DVector::from_column_slice(&x);
    assert!(max_abs_diff(&y, yo.as_slice()) <= 1e-13);
}

#[test]
fn equal_coefficients_drop_advection() {
    let one: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(|_| 1.0);
    let spec = catalog("example1").unwrap().with_order(1.5, 3.0).with_coefficients(one.clone(), one);
    let mesh = build_mesh(&spec, 16, 4).unwrap();
    let op = tfde::SpaceOperator::assemble(&spec, &mesh).unwrap();
    let w = op.weights();
    let a = op.to_dense(64).unwrap();
    // no B contribution: A is symmetric
    assert!((&a - a.transpose()).amax() < 1e-15);
    assert!((a[(0, 0)] - (1.0 - 2.0 * op.w1() * w.get(1))).abs() < 1e-14);
}

#[test]
fn single_step_linearised_vs_dense_solve() {
    let spec = catalog("example1").unwrap();
    let mesh = build_mesh(&spec, 4, 1).unwrap();
    let sol = liess_run(&spec, &mesh, &SchemeOptions::default()).unwrap();
    let a = operator_oracle(&spec, &mesh);
    let rhs: Vec<f64> = (1..4)
        .map(|i| {
            let x = mesh.x(i);
            let u = (spec.u0)(x);
            u + mesh.tau() * spec.f(u, x, 0.0)
        })
        .collect();
    let exact = a.lu().solve(&DVector::from_vec(rhs)).unwrap();
    assert!(max_abs_diff(sol.interior(1), exact.as_slice()) <= 1e-12);
}

#[test]
fn zero_data_gives_zero_solution() {
    let spec = catalog("example2").unwrap().without_source().with_initial(Arc::new(|_| 0.0));
    let mesh = build_mesh(&spec, 16, 16).unwrap();
    for sol in [
        liess_run(&spec, &mesh, &SchemeOptions::default()).unwrap(),
        nlies_step_run(&spec, &mesh, &SchemeOptions::default()).unwrap(),
    ] {
        assert!(sol.values().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn linear_source_needs_one_newton_correction_per_step() {
    let spec = catalog("example1_literal").unwrap();
    let mesh = build_mesh(&spec, 32, 8).unwrap();
    let opts = SchemeOptions { solver: tfde::schemes::LinearSolverChoice::Dense, ..Default::default() };
    let (sol, stats) = tfde::schemes::nlies_step_run_with_stats(&spec, &mesh, &opts).unwrap();
    // the second pass only confirms a zero correction
    assert!(stats.newton_iterations.iter().all(|&k| k <= 2));
    // the first correction already solves (A + 2τ I) u^j = u^{j-1}
    let mut a = operator_oracle(&spec, &mesh);
    for i in 0..a.nrows() {
        a[(i, i)] += 2.0 * mesh.tau();
    }
    let lu = a.lu();
    for j in 1..=mesh.m {
        let exact = lu.solve(&DVector::from_column_slice(sol.interior(j - 1))).unwrap();
        assert!(max_abs_diff(sol.interior(j), exact.as_slice()) <= 1e-12);
    }
}

#[test]
fn stepped_and_all_at_once_agree_small() {
    let spec = catalog("example2").unwrap();
    let mesh = build_mesh(&spec, 8, 8).unwrap();
    let stepped = nlies_step_run(&spec, &mesh, &SchemeOptions::default()).unwrap();
    let sys = AllAtOnceSystem::new(&spec, &mesh).unwrap();
    let (sol, _) = newton_solve(&sys, &NewtonConfig::default()).unwrap();
    assert!(sol.max_diff(&stepped).unwrap() <= 1e-10);
}

#[test]
fn residual_vanishes_at_stepped_solution() {
    let spec = catalog("example1").unwrap().with_order(1.3, 1.0);
    let mesh = build_mesh(&spec, 16, 16).unwrap();
    let stepped = nlies_step_run(&spec, &mesh, &SchemeOptions::default()).unwrap();
    let sys = AllAtOnceSystem::new(&spec, &mesh).unwrap();
    let f = sys.residual(&stepped.stacked()).unwrap();
    assert!(inf_norm(&f) <= 1e-10);
}

#[test]
fn residual_and_jacobian_vs_dense_blocks() {
    let spec = catalog("example2").unwrap().with_order(1.4, 2.0);
    let mesh = build_mesh(&spec, 8, 8).unwrap();
    let sys = AllAtOnceSystem::new(&spec, &mesh).unwrap();
    let big = block_oracle(&operator_oracle(&spec, &mesh), mesh.m);
    let nodes = mesh.interior_nodes();
    let n = nodes.len();
    let mut rng = StdRng::seed_from_u64(5);
    let u: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(0.0..1.0)).collect();

    let mut expected = (&big * DVector::from_column_slice(&u)).as_slice().to_vec();
    for k in 0..sys.dim() {
        let (j, i) = (k / n, k % n);
        expected[k] -= mesh.tau() * spec.f(u[k], nodes[i], mesh.t(j + 1));
        if j == 0 {
            expected[k] -= (spec.u0)(nodes[i]);
        }
    }
    assert!(max_abs_diff(&sys.residual(&u).unwrap(), &expected) <= 1e-12);

    let mut jac = big.clone();
    for k in 0..sys.dim() {
        jac[(k, k)] -= mesh.tau() * (-1.0 + 2.0 * u[k]);
    }
    assert!((sys.dense_jacobian(Some(&u), 1024).unwrap() - &jac).amax() <= 1e-12);
    let x: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let jx = &jac * DVector::from_column_slice(&x);
    assert!(max_abs_diff(&sys.jacobian_apply(&u, &x).unwrap(), jx.as_slice()) <= 1e-12);
}

#[test]
fn jacobian_without_source_is_block_operator() {
    let spec = catalog("example1").unwrap().without_source();
    let mesh = build_mesh(&spec, 10, 6).unwrap();
    let sys = AllAtOnceSystem::new(&spec, &mesh).unwrap();
    let mut rng = StdRng::seed_from_u64(9);
    let u: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    assert_eq!(sys.jacobian_apply(&u, &x).unwrap(), sys.apply_operator(&x).unwrap());
}

#[test]
fn jacobian_matches_finite_differences() {
    let spec = catalog("example2").unwrap();
    let mesh = build_mesh(&spec, 8, 8).unwrap();
    let sys = AllAtOnceSystem::new(&spec, &mesh).unwrap();
    let mut rng = StdRng::seed_from_u64(13);
    let u: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let x: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let eps = 1e-6;
    let plus: Vec<f64> = u.iter().zip(&x).map(|(a, b)| a + eps * b).collect();
    let minus: Vec<f64> = u.iter().zip(&x).map(|(a, b)| a - eps * b).collect();
    let (fp, fm) = (sys.residual(&plus).unwrap(), sys.residual(&minus).unwrap());
    let fd: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
    let jx = sys.jacobian_apply(&u, &x).unwrap();
    assert!(max_abs_diff(&jx, &fd) <= 1e-6 * inf_norm(&jx));
}

#[test]
fn preconditioner_vs_dense_block_solve() {
    let spec = catalog("example1").unwrap().with_order(1.6, 1.0);
    let mesh = build_mesh(&spec, 12, 12).unwrap();
    let sys = AllAtOnceSystem::new(&spec, &mesh).unwrap();
    let p = precond_build(&sys, 8).unwrap();
    let dense = p.to_dense(1024).unwrap();
    let mut rng = StdRng::seed_from_u64(17);
    let r: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z = p.apply(&r).unwrap();
    let exact = dense.lu().solve(&DVector::from_column_slice(&r)).unwrap();
    assert!(max_abs_diff(&z, exact.as_slice()) <= 1e-10 * inf_norm(exact.as_slice()));

    let back = p.apply(&p.multiply(&r).unwrap()).unwrap();
    assert!(max_abs_diff(&back, &r) <= 1e-10);
}

#[test]
fn full_band_preconditioner_is_the_operator() {
    let spec = catalog("example1").unwrap().without_source();
    let mesh = build_mesh(&spec, 16, 16).unwrap();
    let sys = AllAtOnceSystem::new(&spec, &mesh).unwrap();
    let p = precond_build(&sys, sys.block()).unwrap();
    assert!((p.to_dense(1024).unwrap() - sys.dense_jacobian(None, 1024).unwrap()).amax() < 1e-15);

    let b: Vec<f64> = (0..sys.dim()).map(|k| (k as f64 * 0.37).cos()).collect();
    let apply = |x: &[f64], y: &mut [f64]| y.copy_from_slice(&sys.apply_operator(x).unwrap());
    let pc = |r: &[f64], z: &mut [f64]| p.apply_into(r, z);
    let (_, rep) = bicgstab(&apply, Some(&pc), &b, 1e-10, 100);
    assert!(rep.converged());
    assert!(rep.iterations <= 2.0, "{}", rep.iterations);
}

#[test]
fn bicgstab_spd_tridiagonal_vs_dense() {
    let n = 60;
    let a = BandedMatrix::tridiag(n, -1.0, 2.5, -1.0);
    let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    let apply = |x: &[f64], y: &mut [f64]| y.copy_from_slice(&a.matvec(x).unwrap());
    let tol = 1e-10;
    let (x, rep) = bicgstab(&apply, None, &b, tol, 500);
    assert!(rep.converged());
    let exact = DenseLu::new(a.to_dense(n).unwrap()).unwrap().solve(&b).unwrap();
    // κ(A) ≤ 4.5 / 0.5
    let kappa = 9.0;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = x.iter().zip(&exact).map(|(p, q)| p - q).collect();
    assert!(norm(&diff) <= tol * kappa * norm(&exact));
}

#[test]
fn preconditioned_jacobian_solve_is_short() {
    let spec = catalog("example1").unwrap().with_order(1.1, 0.0);
    let mesh = build_mesh(&spec, 65, 65).unwrap();
    let sys = AllAtOnceSystem::new(&spec, &mesh).unwrap();
    let u = coarse_initial_guess(&spec, &mesh, 16, 16).unwrap();
    let rhs: Vec<f64> = sys.residual(&u).unwrap().iter().map(|v| -v).collect();
    let p = precond_build(&sys, 8).unwrap();
    let u_ref = &u;
    let apply = |x: &[f64], y: &mut [f64]| y.copy_from_slice(&sys.jacobian_apply(u_ref, x).unwrap());
    let pc = |r: &[f64], z: &mut [f64]| p.apply_into(r, z);
    let (_, rep) = bicgstab(&apply, Some(&pc), &rhs, 1e-6, 1000);
    assert!(rep.converged());
    assert!(rep.iterations <= 15.0, "{}", rep.iterations);
}

#[test]
fn coarse_guess_on_its_own_mesh() {
    let spec = catalog("example1").unwrap();
    let mesh = build_mesh(&spec, 16, 16).unwrap();
    let sol = liess_run(&spec, &mesh, &SchemeOptions::default()).unwrap();
    assert_eq!(coarse_initial_guess(&spec, &mesh, 16, 16).unwrap(), sol.stacked());
}

#[test]
fn bilinear_midpoints() {
    let spec = catalog("example2").unwrap();
    let coarse = build_mesh(&spec, 4, 4).unwrap();
    let sol = liess_run(&spec, &coarse, &SchemeOptions::default()).unwrap();
    let fine = build_mesh(&spec, 8, 8).unwrap();
    let out = interpolate_bilinear(&sol, &fine);
    let n = fine.interior();
    for (ci, cj) in [(0, 0), (1, 2), (3, 3)] {
        let (fi, fj) = (2 * ci + 1, 2 * cj + 1);
        let v = out[(fj - 1) * n + (fi - 1)];
        let mean = 0.25 * (sol.get(ci, cj) + sol.get(ci + 1, cj) + sol.get(ci, cj + 1) + sol.get(ci + 1, cj + 1));
        assert!((v - mean).abs() < 1e-15, "cell ({ci}, {cj})");
    }
    // coinciding nodes are copied
    assert_eq!(out[(4 - 1) * n + (2 - 1)], sol.get(1, 2));
}

#[test]
fn nested_error_uses_coinciding_nodes() {
    let spec = catalog("example2").unwrap();
    let coarse = liess_run(&spec, &build_mesh(&spec, 8, 8).unwrap(), &SchemeOptions::default()).unwrap();
    let fine = liess_run(&spec, &build_mesh(&spec, 16, 16).unwrap(), &SchemeOptions::default()).unwrap();
    let mut expected: f64 = 0.0;
    for j in 0..=8 {
        for i in 0..=8 {
            expected = expected.max((coarse.get(i, j) - fine.get(2 * i, 2 * j)).abs());
        }
    }
    assert_eq!(compute_err(&coarse, &fine).unwrap(), expected);
}

#[test]
fn scheme_gap_is_first_order_in_time() {
    let spec = catalog("example2").unwrap().with_order(1.5, 1.0);
    let opts = SchemeOptions::default();
    let gaps: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&m| {
            let mesh = build_mesh(&spec, 128, m).unwrap();
            compute_err(&liess_run(&spec, &mesh, &opts).unwrap(), &nlies_step_run(&spec, &mesh, &opts).unwrap())
                .unwrap()
        })
        .collect();
    for w in gaps.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 1.0).abs() <= 0.15, "{gaps:?}");
    }
}

#[test]
fn wider_band_never_needs_more_inner_iterations() {
    let spec = catalog("example1").unwrap().with_order(1.1, 0.0);
    let mesh = build_mesh(&spec, 129, 129).unwrap();
    let sys = AllAtOnceSystem::new(&spec, &mesh).unwrap();
    let iter2: Vec<f64> = [4, 8, 16]
        .iter()
        .map(|&ell| newton_solve(&sys, &NewtonConfig { ell, ..Default::default() }).unwrap().1.iter2)
        .collect();
    assert!(iter2.windows(2).all(|w| w[1] <= w[0]), "{iter2:?}");
}

fn dump_pair(spec: ProblemSpec, size: usize, ell: usize) -> (String, String) {
    let dir = tempfile::tempdir().unwrap();
    let (jac, pre) = (dir.path().join("j.txt"), dir.path().join("p.txt"));
    let mut cfg = DumpConfig::new(spec, size);
    cfg.ell = ell;
    dump_matrices(&cfg, &jac, Some(&pre)).unwrap();
    (std::fs::read_to_string(jac).unwrap(), std::fs::read_to_string(pre).unwrap())
}

#[test]
fn dump_dimensions() {
    let (jac, pre) = dump_pair(catalog("example2").unwrap(), 9, 8);
    for text in [&jac, &pre] {
        let m = read_dense(text.as_bytes()).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (72, 72));
        assert_eq!(text.lines().count(), 72);
    }
}

#[test]
fn dump_without_source_is_block_operator() {
    let spec = catalog("example1").unwrap().without_source();
    let (jac, _) = dump_pair(spec.clone(), 9, 4);
    let mesh = build_mesh(&spec, 9, 9).unwrap();
    let sys = AllAtOnceSystem::new(&spec, &mesh).unwrap();
    let dumped = read_dense(jac.as_bytes()).unwrap();
    assert_eq!(dumped, sys.dense_jacobian(None, 1024).unwrap());
}

#[test]
fn full_band_dump_files_identical() {
    let (jac, pre) = dump_pair(catalog("example1").unwrap().without_source(), 9, 8);
    assert_eq!(jac, pre);
}

#[test]
fn dump_respects_cap() {
    let mut cfg = DumpConfig::new(catalog("example1").unwrap(), 40);
    cfg.cap = 32;
    let dir = tempfile::tempdir().unwrap();
    let err = dump_matrices(&cfg, &dir.path().join("j.txt"), None).unwrap_err();
    assert!(matches!(err, tfde::TfdeError::Resource(_)));
}

#[test]
fn csv_round_trip_of_real_table() {
    let cfg = ExperimentConfig {
        problem: "example2".into(),
        alphas: vec![1.3],
        lambdas: vec![0.0, 2.0],
        mode: Mode::Table2,
        sizes: Some(vec![8, 16]),
        reference: Some(32),
        schemes: Some(vec![SchemeTag::Lies, SchemeTag::AllAtOnce]),
        ..Default::default()
    };
    let rows = run_experiment(&cfg).unwrap().rows;
    assert_eq!(rows.len(), 8);
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("problem,alpha,lambda,M,N,scheme,err,order,iter1,iter2,time_s,status\n"));
    assert_eq!(read_csv(&buf[..]).unwrap(), rows);
}

#[test]
fn sweeps_are_deterministic() {
    let cfg = ExperimentConfig {
        problem: "example1".into(),
        alphas: vec![1.5, 1.9],
        lambdas: vec![1.0],
        mode: Mode::Table2,
        sizes: Some(vec![8, 16]),
        reference: Some(32),
        schemes: Some(vec![SchemeTag::Nlies, SchemeTag::AllAtOnce]),
        ..Default::default()
    };
    let strip = |mut rows: Vec<tfde::harness::ErrorTableRow>| {
        rows.iter_mut().for_each(|r| r.time_s = None);
        rows
    };
    let a = strip(run_experiment(&cfg).unwrap().rows);
    let b = strip(run_experiment(&cfg).unwrap().rows);
    assert_eq!(a, b);
}

#[test]
fn non_nested_sizes_fail_per_cell() {
    let cfg = ExperimentConfig {
        problem: "example2".into(),
        mode: Mode::Table2,
        sizes: Some(vec![8, 12]),
        reference: Some(32),
        schemes: Some(vec![SchemeTag::Lies]),
        ..Default::default()
    };
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.failures(), 1);
    assert!(res.rows[0].status == "ok" && res.rows[1].status.starts_with("error"));
}

#[test]
fn config_rejects_coarse_reference() {
    let cfg = ExperimentConfig { mode: Mode::Table2, sizes: Some(vec![64]), reference: Some(32), ..Default::default() };
    assert!(matches!(run_experiment(&cfg), Err(tfde::TfdeError::Config(_))));
}
