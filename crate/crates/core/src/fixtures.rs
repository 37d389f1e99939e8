//! Reference quadruples and random spectral quadruples for tests and
//! experiments.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::numerics::{
    eigenvalues, hermitian_eigenvalues, hermitian_part, scalar, solve_sylvester, ComplexMatrix, ToleranceConfig, C64,
};
use crate::quadruple::{classify, Quadruple};
use crate::direct::weyl_from_quadruple;
use crate::realization::{minimality_check, Realization};

fn sq(alpha: C64, s0: f64, t1: f64, t2: f64) -> Quadruple {
    Quadruple::new(scalar(alpha), scalar(C64::new(s0, 0.0)), scalar(C64::new(t1, 0.0)), scalar(C64::new(t2, 0.0)))
        .expect("scalar quadruple")
}

/// `(0, 1, 1, 1)`: `v(x) = -2i / (1 + 2x)`.
pub fn w1_quadruple() -> Quadruple {
    sq(C64::new(0.0, 0.0), 1.0, 1.0, 1.0)
}

/// `(1, 1, 1, -1)`: one bound state at `t = 1`.
pub fn w2_quadruple() -> Quadruple {
    sq(C64::new(1.0, 0.0), 1.0, 1.0, -1.0)
}

/// `(-i, 1, 1, sqrt 3)`.
pub fn e2_quadruple() -> Quadruple {
    sq(C64::new(0.0, -1.0), 1.0, 1.0, 3f64.sqrt())
}

fn scalar_realization(a: C64, b: C64, c: C64) -> Realization {
    Realization::new(scalar(a), scalar(b), scalar(c)).expect("scalar realization")
}

/// `{-i, 1, -i}`: `phi(z) = -i / (z + i)`.
pub fn w1_realization() -> Realization {
    scalar_realization(C64::new(0.0, -1.0), C64::new(1.0, 0.0), C64::new(0.0, -1.0))
}

/// `{-2i, 1, -i sqrt 3}`.
pub fn e2_realization() -> Realization {
    scalar_realization(C64::new(0.0, -2.0), C64::new(1.0, 0.0), C64::new(0.0, -(3f64.sqrt())))
}

/// `{1 - i, 1, i}`.
pub fn w2_realization() -> Realization {
    scalar_realization(C64::new(1.0, -1.0), C64::new(1.0, 0.0), C64::new(0.0, 1.0))
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// Random spectral quadruple with `sigma(alpha)` at least 0.1 below the real axis.
///
/// `alpha` is a unitary conjugate of a diagonal with well separated real parts
/// plus a small Gaussian part; separation keeps the Gramian `S0` well
/// conditioned even for a single column in `theta2`. `S0` solves
/// `alpha S0 - S0 alpha^H = i (theta1 theta1^H - theta2 theta2^H)`, i.e.
/// `S0 = \int_0^\infty e^{-i alpha t} (theta2 theta2^H - theta1 theta1^H) e^{i alpha^H t} dt`,
/// which is positive when `theta1` is small against `theta2`.
///
/// Panics if no acceptable draw is found in 10 000 attempts.
pub fn random_spectral_quadruple<R: Rng + ?Sized>(rng: &mut R, n: usize, m1: usize, m2: usize) -> Quadruple {
    let tol = ToleranceConfig::default();
    for attempt in 0..10_000 {
        let diag = ComplexMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(3.0 * i as f64 - 1.5 * (n as f64 - 1.0), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let mut d = diag;
        for i in 0..n {
            d[(i, i)] += C64::new(rng.random_range(-0.5..0.5), -rng.random_range(0.5..1.5));
        }
        let u = gaussian_matrix(rng, n, n).qr().q();
        let g = gaussian_matrix(rng, n, n) * C64::new(0.2 / (n as f64).sqrt(), 0.0);
        let alpha = &u * (d + g) * u.adjoint();
        if !eigenvalues(&alpha).is_ok_and(|ev| ev.iter().all(|l| l.im < -0.1)) {
            continue;
        }
        let theta2 = gaussian_matrix(rng, n, m2) * C64::new(1.0 / (m2 as f64).sqrt(), 0.0);
        let small = 0.5 * 0.9f64.powi(attempt / 10);
        let theta1 = gaussian_matrix(rng, n, m1) * C64::new(small / (m1 as f64).sqrt(), 0.0);
        let k = (&theta1 * theta1.adjoint() - &theta2 * theta2.adjoint()) * C64::new(0.0, 1.0);
        let Ok(s0) = solve_sylvester(&alpha, &(-alpha.adjoint()), &k, 1e-10) else {
            continue;
        };
        let s0 = hermitian_part(&s0);
        let eig = hermitian_eigenvalues(&s0);
        let (lo, hi) = (eig[0], eig[n - 1]);
        if !(lo > 0.0 && hi / lo < 1e3) {
            continue;
        }
        let Ok(q) = Quadruple::new(alpha, s0, theta1, theta2) else {
            continue;
        };
        if !classify(&q, &tol).map(|c| c.spectral).unwrap_or(false) {
            continue;
        }
        // the forward realization must be minimal with room to spare
        let strict = ToleranceConfig { rank_rtol: 1e3 * tol.rank_rtol, ..tol };
        if weyl_from_quadruple(&q, &tol).is_ok_and(|r| minimality_check(&r, &strict) == (true, true)) {
            return q;
        }
    }
    panic!("no spectral quadruple drawn for n={n}, m1={m1}, m2={m2}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_quadruples_are_spectral() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tol = ToleranceConfig::default();
        for n in 1..=6 {
            for (m1, m2) in [(1, 1), (2, 1), (1, 3), (2, 2)] {
                let q = random_spectral_quadruple(&mut rng, n, m1, m2);
                let cl = classify(&q, &tol).unwrap();
                assert!(cl.spectral, "n={n} m1={m1} m2={m2}: {cl:?}");
                assert!(cl.max_im_sigma_alpha < -0.1);
            }
        }
    }

    #[test]
    fn references_are_spectral() {
        let tol = ToleranceConfig::default();
        for q in [w1_quadruple(), w2_quadruple(), e2_quadruple()] {
            assert!(classify(&q, &tol).unwrap().spectral);
        }
    }
}
