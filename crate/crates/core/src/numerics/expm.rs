//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (degrees 3, 5, 7, 9 and 13, Higham 2005), plus Van Loan block integrals.

use super::{ensure_square, solve, ComplexMatrix, NumericsError, C64};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Beyond this many squarings the scaled result cannot be represented anyway.
const MAX_SQUARINGS: i32 = 1100;

fn one_norm(m: &ComplexMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `exp(M)` for a square complex matrix.
pub fn mat_exp(m: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    let n = ensure_square(m)?;
    let ident = ComplexMatrix::identity(n, n);
    if n == 0 {
        return Ok(ident);
    }
    if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(NumericsError::OutOfRange("non-finite matrix entry".into()));
    }
    let norm = one_norm(m);
    if norm == 0.0 {
        return Ok(ident);
    }

    for (degree, theta) in THETA {
        if norm <= theta {
            let coeffs: &[f64] = match degree {
                3 => &PADE_3,
                5 => &PADE_5,
                7 => &PADE_7,
                _ => &PADE_9,
            };
            return pade_low(m, coeffs, &ident).and_then(|r| check_finite(r, norm));
        }
    }

    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    if s > MAX_SQUARINGS {
        return Err(NumericsError::ExpOverflow { norm });
    }
    let scaled = m * re(2f64.powi(-s));
    let mut r = pade_13(&scaled, &ident)?;
    for _ in 0..s {
        r = &r * &r;
        if r.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(NumericsError::ExpOverflow { norm });
        }
    }
    check_finite(r, norm)
}

fn check_finite(r: ComplexMatrix, norm: f64) -> Result<ComplexMatrix, NumericsError> {
    if r.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(r)
    } else {
        Err(NumericsError::ExpOverflow { norm })
    }
}

fn pade_low(
    a: &ComplexMatrix,
    b: &[f64],
    ident: &ComplexMatrix,
) -> Result<ComplexMatrix, NumericsError> {
    let a2 = a * a;
    let mut odd = ident * re(b[1]);
    let mut even = ident * re(b[0]);
    let mut power = ident.clone();
    for k in 1..b.len() / 2 {
        power = &power * &a2;
        even += &power * re(b[2 * k]);
        odd += &power * re(b[2 * k + 1]);
    }
    let u = a * odd;
    rational(&u, &even)
}

fn pade_13(a: &ComplexMatrix, ident: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    let b = PADE_13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * re(b[13]) + &a4 * re(b[11]) + &a2 * re(b[9]))
        + &a6 * re(b[7])
        + &a4 * re(b[5])
        + &a2 * re(b[3])
        + ident * re(b[1]);
    let u = a * inner_u;
    let v = &a6 * (&a6 * re(b[12]) + &a4 * re(b[10]) + &a2 * re(b[8]))
        + &a6 * re(b[6])
        + &a4 * re(b[4])
        + &a2 * re(b[2])
        + ident * re(b[0]);
    rational(&u, &v)
}

// (V - U)^{-1} (V + U)
fn rational(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    solve(&(v - u), &(v + u))
}

/// Blocks of `exp(x [[F, G], [0, H]])`: returns `(e^{Fx}, V(x), e^{Hx})` with
/// `V(x) = \int_0^x e^{F(x-s)} G e^{Hs} ds`.
pub fn block_exp_parts(
    f: &ComplexMatrix,
    g: &ComplexMatrix,
    h: &ComplexMatrix,
    x: f64,
) -> Result<(ComplexMatrix, ComplexMatrix, ComplexMatrix), NumericsError> {
    let n = ensure_square(f)?;
    if ensure_square(h)? != n || g.shape() != (n, n) {
        return Err(NumericsError::DimensionMismatch(format!(
            "block integral needs F, G, H of order {n}; got G {:?}, H {:?}",
            g.shape(),
            h.shape()
        )));
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(NumericsError::OutOfRange(format!(
            "integration length must be finite and non-negative, got {x}"
        )));
    }
    let mut big = ComplexMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(f);
    big.view_mut((0, n), (n, n)).copy_from(g);
    big.view_mut((n, n), (n, n)).copy_from(h);
    let e = mat_exp(&(big * re(x)))?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
        e.view((n, n), (n, n)).into_owned(),
    ))
}

/// `V(x) = \int_0^x e^{F(x-s)} G e^{Hs} ds` as the off-diagonal block of the
/// exponential of the block upper-triangular generator.
pub fn block_exp_integral(
    f: &ComplexMatrix,
    g: &ComplexMatrix,
    h: &ComplexMatrix,
    x: f64,
) -> Result<ComplexMatrix, NumericsError> {
    block_exp_parts(f, g, h, x).map(|(_, v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::max_abs_diff;

    fn real(rows: usize, cols: usize, data: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_row_slice(rows, cols, &data.iter().map(|&x| re(x)).collect::<Vec<_>>())
    }

    #[test]
    fn exp_of_zero_is_identity_exactly() {
        let e = mat_exp(&ComplexMatrix::zeros(2, 2)).unwrap();
        assert_eq!(e, ComplexMatrix::identity(2, 2));
    }

    #[test]
    fn nilpotent_series_truncates() {
        let e = mat_exp(&real(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap();
        assert!(max_abs_diff(&e, &real(2, 2, &[1.0, 1.0, 0.0, 1.0])) < 1e-15);
    }

    #[test]
    fn rotation_generator() {
        let e = mat_exp(&real(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap();
        let (s, c) = 1f64.sin_cos();
        assert!(max_abs_diff(&e, &real(2, 2, &[c, s, -s, c])) < 1e-15);
    }

    #[test]
    fn large_norm_scalar_matches_libm() {
        for &x in &[-30.0, -3.0, 0.3, 7.5, 40.0, 600.0] {
            let e = mat_exp(&real(1, 1, &[x])).unwrap()[(0, 0)];
            assert!((e.re / x.exp() - 1.0).abs() < 1e-13, "x = {x}");
        }
        let z = C64::new(0.5, 12.0);
        let e = mat_exp(&ComplexMatrix::from_element(1, 1, z)).unwrap()[(0, 0)];
        assert!((e - z.exp()).norm() / z.exp().norm() < 1e-13);
    }

    #[test]
    fn overflow_is_reported() {
        let err = mat_exp(&real(1, 1, &[1e6])).unwrap_err();
        assert!(matches!(err, NumericsError::ExpOverflow { .. }));
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(
            mat_exp(&ComplexMatrix::zeros(2, 3)),
            Err(NumericsError::NotSquare { .. })
        ));
    }

    #[test]
    fn block_integral_scalar_examples() {
        let zero = real(1, 1, &[0.0]);
        let v = block_exp_integral(&zero, &real(1, 1, &[1.0]), &zero, 2.0).unwrap();
        assert!((v[(0, 0)] - re(2.0)).norm() < 1e-15);

        // antiderivative: 3 e^{-2} (e^4 - 1) / 4
        let v = block_exp_integral(&real(1, 1, &[-2.0]), &real(1, 1, &[3.0]), &real(1, 1, &[2.0]), 1.0)
            .unwrap();
        let expected = 3.0 * (-2f64).exp() * (4f64.exp() - 1.0) / 4.0;
        assert!((v[(0, 0)].re - expected).abs() < 1e-13);
        assert!((expected - 5.4403).abs() < 1e-4);

        let v = block_exp_integral(&real(1, 1, &[1.0]), &real(1, 1, &[5.0]), &real(1, 1, &[-4.0]), 0.0)
            .unwrap();
        assert_eq!(v[(0, 0)], re(0.0));
    }

    #[test]
    fn block_integral_rejects_bad_input() {
        let z = ComplexMatrix::zeros(1, 1);
        assert!(block_exp_integral(&z, &z, &z, -1.0).is_err());
        assert!(block_exp_integral(&z, &ComplexMatrix::zeros(2, 2), &z, 1.0).is_err());
    }
}
