//! Randomized invariants over spectral quadruples drawn from a seeded generator.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dirac_inverse::direct::{spectral_data_square, weyl_from_quadruple};
use dirac_inverse::fixtures::{e2_quadruple, gaussian_matrix, random_spectral_quadruple};
use dirac_inverse::numerics::{hermitian_eigenvalues, hermitian_part, inverse, norm2};
use dirac_inverse::potential::{Grid, PotentialEvaluator};
use dirac_inverse::quadruple::{
    classify, from_parametrization, from_realization, identity_residual, identity_scale, normalize, AdmissibleParam,
    Quadruple,
};
use dirac_inverse::realization::{
    check_gn, minimal_reduction, minimality_check, similarity_transform, transfer_discrepancy, Realization,
};
use dirac_inverse::riccati::{solve_stabilizing, verify_solution};
use dirac_inverse::stability_lab::{perturb_quadruple_experiment, PerturbationMode, PerturbationSpec};
use dirac_inverse::{ComplexMatrix, ToleranceConfig, C64};

const DIMS: [(usize, usize); 4] = [(1, 1), (2, 1), (1, 2), (2, 2)];

fn draw(seed: u64, n: usize, dims: usize) -> Quadruple {
    let (m1, m2) = DIMS[dims];
    random_spectral_quadruple(&mut ChaCha8Rng::seed_from_u64(seed), n, m1, m2)
}

fn well_conditioned(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n) * C64::new(2.0, 0.0) + gaussian_matrix(rng, n, n) * C64::new(0.5 / n as f64, 0.0)
}

fn sup_v(a: &PotentialEvaluator, b: &PotentialEvaluator, xs: &[f64]) -> f64 {
    let va = a.sample(xs).unwrap();
    let vb = b.sample(xs).unwrap();
    va.iter().zip(&vb).map(|(x, y)| norm2(&(x - y))).fold(0.0, f64::max)
}

fn recover(r: &Realization, tol: &ToleranceConfig) -> Quadruple {
    let sol = solve_stabilizing(r, tol).unwrap();
    from_realization(r, &sol, tol).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn forwarded_quadruples_recover_inverse_gramian(seed in any::<u64>(), n in 1usize..=5, dims in 0usize..4) {
        let tol = ToleranceConfig::default();
        let q = draw(seed, n, dims);
        let r = weyl_from_quadruple(&q, &tol).unwrap();
        let sol = solve_stabilizing(&r, &tol).unwrap();
        prop_assert!(sol.passes(&tol), "{sol:?}");
        prop_assert!(sol.positive());
        let s0_inv = inverse(q.s0()).unwrap();
        prop_assert!(norm2(&(&sol.x - &s0_inv)) <= 1e-7 * norm2(&s0_inv));
        let back = from_realization(&r, &sol, &tol).unwrap();
        prop_assert!(identity_residual(&back) <= 1e-10 * identity_scale(&back));
    }

    #[test]
    fn stabilizing_solution_is_unique_among_hermitian_candidates(seed in any::<u64>(), n in 1usize..=3, dims in 0usize..4) {
        // X + t Z with Hermitian Z is never a second stabilizing solution
        let tol = ToleranceConfig::default();
        let r = weyl_from_quadruple(&draw(seed, n, dims), &tol).unwrap();
        let x = solve_stabilizing(&r, &tol).unwrap().x;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let z = hermitian_part(&gaussian_matrix(&mut rng, n, n));
        for t in [1e-3, 1e-1, 1.0] {
            let other = &x + &z * C64::new(t, 0.0);
            let check = verify_solution(&r, &other).unwrap();
            prop_assert!(!check.passes(&tol));
        }
    }

    #[test]
    fn similarity_leaves_the_potential_unchanged(seed in any::<u64>(), n in 1usize..=4, dims in 0usize..4) {
        let tol = ToleranceConfig::default();
        let q = draw(seed, n, dims);
        let r = weyl_from_quadruple(&q, &tol).unwrap();
        let t = well_conditioned(&mut ChaCha8Rng::seed_from_u64(seed ^ 1), n);
        let (rt, _) = similarity_transform(&r, &t).unwrap();
        prop_assert!(transfer_discrepancy(&r, &rt).unwrap() <= 1e-10);
        let a = PotentialEvaluator::new(recover(&r, &tol), &tol).unwrap();
        let b = PotentialEvaluator::new(recover(&rt, &tol), &tol).unwrap();
        let xs = Grid::new(0.0, 10.0, 0.25).unwrap().points();
        prop_assert!(sup_v(&a, &b, &xs) <= 1e-8);
    }

    #[test]
    fn reduction_removes_an_uncontrollable_state(seed in any::<u64>(), n in 1usize..=4, dims in 0usize..4) {
        let tol = ToleranceConfig::default();
        let r = weyl_from_quadruple(&draw(seed, n, dims), &tol).unwrap();
        let (m1, m2) = (r.m1(), r.m2());
        let mut a = ComplexMatrix::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n)).copy_from(r.a());
        a[(n, n)] = C64::new(0.5, -3.0);
        let mut b = ComplexMatrix::zeros(n + 1, m1);
        b.view_mut((0, 0), (n, m1)).copy_from(r.b());
        let mut c = ComplexMatrix::from_element(m2, n + 1, C64::new(1.0, 0.0));
        c.view_mut((0, 0), (m2, n)).copy_from(r.c());
        let big = Realization::new(a, b, c).unwrap();
        prop_assert_eq!(minimality_check(&big, &tol), (false, true));
        let small = minimal_reduction(&big, &tol);
        prop_assert_eq!(small.n(), n);
        prop_assert!(transfer_discrepancy(&big, &small).unwrap() <= 1e-10);
    }

    #[test]
    fn weyl_functions_are_strictly_proper_and_contractive(seed in any::<u64>(), n in 1usize..=4, dims in 0usize..4) {
        let tol = ToleranceConfig::default();
        let r = weyl_from_quadruple(&draw(seed, n, dims), &tol).unwrap();
        let cert = check_gn(&r, &tol).unwrap();
        prop_assert!(cert.in_gn, "{cert:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        for _ in 0..8 {
            let z = C64::new(rng.random_range(-10.0..10.0), rng.random_range(0.0..10.0));
            prop_assert!(norm2(&r.evaluate(z, &tol).unwrap()) <= 1.0 + 1e-12);
        }
        let far = [1e4, 1e6].map(|y| y * norm2(&r.evaluate(C64::new(0.0, y), &tol).unwrap()));
        prop_assert!(far[1] <= 2.0 * far[0] + 1e-12, "|phi(iy)| must decay like 1/y: {far:?}");
    }

    #[test]
    fn parametrization_is_always_admissible(seed in any::<u64>(), n in 1usize..=5, dims in 0usize..4) {
        let tol = ToleranceConfig::default();
        let (m1, m2) = DIMS[dims];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gaussian_matrix(&mut rng, n, n);
        let p = AdmissibleParam {
            h: hermitian_part(&gaussian_matrix(&mut rng, n, n)),
            s0: &g * g.adjoint() + ComplexMatrix::identity(n, n),
            theta1: gaussian_matrix(&mut rng, n, m1),
            theta2: gaussian_matrix(&mut rng, n, m2),
        };
        let q = from_parametrization(&p, &tol).unwrap();
        prop_assert!(identity_residual(&q) <= 1e-12 * identity_scale(&q));
        prop_assert!(classify(&q, &tol).unwrap().admissible);
    }

    #[test]
    fn normalization_preserves_the_potential(seed in any::<u64>(), n in 1usize..=4, dims in 0usize..4) {
        let tol = ToleranceConfig::default();
        let q = draw(seed, n, dims);
        let qn = normalize(&q, &tol).unwrap();
        prop_assert!(norm2(&(qn.s0() - ComplexMatrix::identity(n, n))) <= 1e-12);
        let a = PotentialEvaluator::new(q, &tol).unwrap();
        let b = PotentialEvaluator::new(qn, &tol).unwrap();
        let xs: Vec<f64> = (0..512).map(|k| 10.0 * k as f64 / 511.0).collect();
        prop_assert!(sup_v(&a, &b, &xs) <= 1e-9);
    }

    #[test]
    fn kernel_paths_agree(seed in any::<u64>(), n in 1usize..=3, dims in 0usize..4) {
        let tol = ToleranceConfig::default();
        let ev = PotentialEvaluator::new(draw(seed, n, dims), &tol).unwrap();
        for x in [0.5, 1.0, 2.0, 5.0] {
            let s = ev.s_of_x(x).unwrap();
            let s_quad = ev.s_quadrature(x).unwrap();
            prop_assert!(norm2(&(&s - &s_quad)) <= 1e-8 * norm2(&s));
            // the S path solves with S(x), whose conditioning grows with x
            let eig = hermitian_eigenvalues(&hermitian_part(&s));
            let (lo, hi) = (eig[0], eig[n - 1]);
            let l = ev.lambda(x).unwrap();
            let bound = 1e-12 * (hi / lo) * norm2(&l).powi(2) / lo;
            let v = ev.evaluate_v(x).unwrap();
            prop_assert!(norm2(&(&v - ev.evaluate_v_via_s(x).unwrap())) <= bound.max(1e-10 * norm2(&v)));
            prop_assert!(ev.s_node_residual(x).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn spectral_density_is_positive_and_tends_to_identity(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=2) {
        let tol = ToleranceConfig::default();
        let q = random_spectral_quadruple(&mut ChaCha8Rng::seed_from_u64(seed), n, m, m);
        let sd = spectral_data_square(&q, &tol).unwrap();
        prop_assert!(sd.bound_states.is_empty());
        for t in [-7.0, -1.0, 0.0, 0.5, 3.0] {
            let rho = sd.density(t).unwrap();
            prop_assert!(hermitian_eigenvalues(&hermitian_part(&rho))[0] >= -1e-12);
        }
        // |G - I| <= |th1 + th2| |th1| / (t - |beta|), and rho = G^H G
        let t = 1e7;
        let e = norm2(&(&sd.th1_tilde + &sd.th2_tilde)) * norm2(&sd.th1_tilde) / (t - norm2(&sd.beta_tilde));
        let far = sd.density(t).unwrap();
        prop_assert!(e < 1e-2);
        prop_assert!(norm2(&(far - ComplexMatrix::identity(m, m))) <= 2.0 * e + e * e + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4, ..ProptestConfig::default() })]

    #[test]
    fn quadruple_sweeps_are_reproducible_and_exact(seed in any::<u64>()) {
        let tol = ToleranceConfig::default();
        let spec = PerturbationSpec {
            mode: PerturbationMode::Quadruple,
            deltas: vec![1e-2, 1e-3],
            samples_per_delta: 4,
            seed,
            grid: "0:10:0.1".parse().unwrap(),
        };
        let q = e2_quadruple();
        let a = perturb_quadruple_experiment(&q, &spec, &tol).unwrap();
        let b = perturb_quadruple_experiment(&q, &spec, &tol).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.max_identity_residual <= 1e-12);
        for row in &a.rows {
            prop_assert_eq!(row.accepted + row.rejected, 4);
        }
    }
}
