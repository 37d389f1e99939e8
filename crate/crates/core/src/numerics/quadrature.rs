use super::{ComplexMatrix, NumericsError, C64};

const INITIAL_PANELS: usize = 16;
const MAX_DEPTH: usize = 40;

fn frob(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Adaptive Simpson quadrature of a matrix-valued integrand on `[a, b]`.
///
/// The interval is first split into a fixed number of panels; each panel is
/// refined until the Richardson error estimate falls below its share of
/// `rtol * |rough integral|` (Frobenius norm).
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, rtol: f64) -> Result<ComplexMatrix, NumericsError>
where
    F: Fn(f64) -> Result<ComplexMatrix, NumericsError>,
{
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(NumericsError::OutOfRange(format!("bad quadrature interval [{a}, {b}]")));
    }
    let fa = f(a)?;
    if b == a {
        return Ok(fa * C64::new(0.0, 0.0));
    }
    let h = (b - a) / INITIAL_PANELS as f64;
    let nodes: Vec<f64> = (0..=2 * INITIAL_PANELS).map(|k| a + 0.5 * h * k as f64).collect();
    let (rows, cols) = fa.shape();
    let mut values = Vec::with_capacity(nodes.len());
    values.push(fa);
    for &x in &nodes[1..] {
        values.push(f(x)?);
    }
    let panels: Vec<(f64, f64, ComplexMatrix)> = (0..INITIAL_PANELS)
        .map(|p| {
            let (x0, x2) = (nodes[2 * p], nodes[2 * p + 2]);
            let s = simpson(&values[2 * p], &values[2 * p + 1], &values[2 * p + 2], x2 - x0);
            (x0, x2, s)
        })
        .collect();
    let rough = panels
        .iter()
        .fold(ComplexMatrix::zeros(rows, cols), |acc, p| acc + &p.2);
    let abs_tol = (rtol * frob(&rough)).max(f64::MIN_POSITIVE);
    let mut total = ComplexMatrix::zeros(rows, cols);
    for (p, (x0, x2, whole)) in panels.into_iter().enumerate() {
        total += refine(
            &f,
            x0,
            x2,
            &values[2 * p],
            &values[2 * p + 1],
            &values[2 * p + 2],
            whole,
            abs_tol / INITIAL_PANELS as f64,
            0,
        )?;
    }
    Ok(total)
}

fn simpson(fa: &ComplexMatrix, fm: &ComplexMatrix, fb: &ComplexMatrix, width: f64) -> ComplexMatrix {
    (fa + fm * C64::new(4.0, 0.0) + fb) * C64::new(width / 6.0, 0.0)
}

#[allow(clippy::too_many_arguments)]
fn refine<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: &ComplexMatrix,
    fm: &ComplexMatrix,
    fb: &ComplexMatrix,
    whole: ComplexMatrix,
    tol: f64,
    depth: usize,
) -> Result<ComplexMatrix, NumericsError>
where
    F: Fn(f64) -> Result<ComplexMatrix, NumericsError>,
{
    let m = 0.5 * (a + b);
    let flm = f(0.5 * (a + m))?;
    let frm = f(0.5 * (m + b))?;
    let left = simpson(fa, &flm, fm, m - a);
    let right = simpson(fm, &frm, fb, b - m);
    let diff = &left + &right - &whole;
    let err = frob(&diff);
    if err <= 15.0 * tol {
        return Ok(left + right + diff / C64::new(15.0, 0.0));
    }
    if depth >= MAX_DEPTH {
        return Err(NumericsError::Quadrature { a, b });
    }
    let l = refine(f, a, m, fa, &flm, fm, left, 0.5 * tol, depth + 1)?;
    let r = refine(f, m, b, fm, &frm, fb, right, 0.5 * tol, depth + 1)?;
    Ok(l + r)
}
