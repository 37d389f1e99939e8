use super::{ensure_square, ComplexMatrix, ComplexSchur, NumericsError, C64};

/// Solve `A X + X B = C` (Bartels–Stewart on complex Schur forms).
///
/// Fails with [`NumericsError::Singular`] when some `lambda_i(A) + mu_j(B)`
/// is below `sep_tol` times the coefficient scale.
pub fn solve_sylvester(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    c: &ComplexMatrix,
    sep_tol: f64,
) -> Result<ComplexMatrix, NumericsError> {
    let n = ensure_square(a)?;
    let m = ensure_square(b)?;
    if c.shape() != (n, m) {
        return Err(NumericsError::DimensionMismatch(format!(
            "Sylvester right-hand side must be {n}x{m}, got {:?}",
            c.shape()
        )));
    }
    if n == 0 || m == 0 {
        return Ok(c.clone());
    }
    let sa = ComplexSchur::new(a)?;
    let sb = ComplexSchur::new(b)?;
    let scale = sa.t.iter().chain(sb.t.iter()).map(|z| z.norm()).fold(1.0, f64::max);
    let (ta, tb) = (&sa.t, &sb.t);
    let f = sa.q.adjoint() * c * &sb.q;
    let mut y = ComplexMatrix::zeros(n, m);
    for j in 0..m {
        // (TA + tb_jj I) y_j = f_j - sum_{k<j} y_k tb_kj
        let mut rhs: Vec<C64> = (0..n).map(|i| f[(i, j)]).collect();
        for k in 0..j {
            let t = tb[(k, j)];
            if t != C64::new(0.0, 0.0) {
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r -= y[(i, k)] * t;
                }
            }
        }
        let mu = tb[(j, j)];
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for k in i + 1..n {
                acc -= ta[(i, k)] * y[(k, j)];
            }
            let d = ta[(i, i)] + mu;
            if d.norm() <= sep_tol * scale {
                return Err(NumericsError::Singular(format!(
                    "Sylvester operator nearly singular (|lambda + mu| = {:e})",
                    d.norm()
                )));
            }
            y[(i, j)] = acc / d;
        }
    }
    Ok(&sa.q * y * sb.q.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{max_abs_diff, norm2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_lyapunov_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rand_mat = |r: usize, c: usize| {
            ComplexMatrix::from_fn(r, c, |_, _| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            })
        };
        let a = rand_mat(4, 4) - ComplexMatrix::identity(4, 4) * C64::new(3.0, 0.0);
        let b = rand_mat(3, 3) - ComplexMatrix::identity(3, 3) * C64::new(3.0, 0.0);
        let c = rand_mat(4, 3);
        let x = solve_sylvester(&a, &b, &c, 1e-12).unwrap();
        let resid = &a * &x + &x * &b - &c;
        assert!(norm2(&resid) < 1e-12 * norm2(&c).max(1.0));
    }

    #[test]
    fn singular_operator_detected() {
        let a = ComplexMatrix::from_element(1, 1, C64::new(0.0, 1.0));
        let b = ComplexMatrix::from_element(1, 1, C64::new(0.0, -1.0));
        let c = ComplexMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        assert!(solve_sylvester(&a, &b, &c, 1e-12).is_err());
    }

    #[test]
    fn scalar_case() {
        let a = ComplexMatrix::from_element(1, 1, C64::new(2.0, 0.0));
        let b = ComplexMatrix::from_element(1, 1, C64::new(3.0, 0.0));
        let c = ComplexMatrix::from_element(1, 1, C64::new(10.0, 0.0));
        let x = solve_sylvester(&a, &b, &c, 1e-12).unwrap();
        assert!(max_abs_diff(&x, &ComplexMatrix::from_element(1, 1, C64::new(2.0, 0.0))) < 1e-15);
    }
}
