//! Complex Schur decomposition `M = Q T Q^H` and eigenvalue reordering.
//!
//! Reduction to Hessenberg form by Householder reflections, then implicit
//! single-shift QR with Wilkinson shifts. Active 2x2 windows are split in
//! closed form, which keeps exactly-defective blocks (nilpotent Riccati
//! pencils) exact instead of smearing them to `O(sqrt(eps))`.

use super::{ensure_square, ComplexMatrix, NumericsError, C64};

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

#[derive(Debug, Clone)]
pub struct ComplexSchur {
    /// Unitary Schur vectors.
    pub q: ComplexMatrix,
    /// Upper-triangular Schur factor.
    pub t: ComplexMatrix,
}

/// Unitary 2x2 rotation `[[c, s], [-conj(s), c]]` with real `c`.
#[derive(Debug, Clone, Copy)]
struct Rotation {
    c: f64,
    s: C64,
}

impl Rotation {
    /// Rotation mapping `[x; y]` to `[r; 0]`.
    fn zeroing(x: C64, y: C64) -> Self {
        if y == C64::new(0.0, 0.0) {
            return Self { c: 1.0, s: C64::new(0.0, 0.0) };
        }
        if x == C64::new(0.0, 0.0) {
            return Self { c: 0.0, s: C64::new(1.0, 0.0) };
        }
        let nx = x.norm();
        let norm = nx.hypot(y.norm());
        Self {
            c: nx / norm,
            s: (x / nx) * y.conj() / norm,
        }
    }

    /// Rows `k, k+1` of `m` (columns `from..`) become `G [row_k; row_k1]`.
    fn rows(&self, m: &mut ComplexMatrix, k: usize, from: usize) {
        for j in from..m.ncols() {
            let a = m[(k, j)];
            let b = m[(k + 1, j)];
            m[(k, j)] = a * self.c + self.s * b;
            m[(k + 1, j)] = -self.s.conj() * a + b * self.c;
        }
    }

    /// Columns `k, k+1` of `m` (rows `..to`) become `[col_k, col_k1] G^H`.
    fn cols(&self, m: &mut ComplexMatrix, k: usize, to: usize) {
        for i in 0..to {
            let p = m[(i, k)];
            let q = m[(i, k + 1)];
            m[(i, k)] = p * self.c + self.s.conj() * q;
            m[(i, k + 1)] = -self.s * p + q * self.c;
        }
    }
}

/// Apply the similarity `T <- G^H T G`, `Q <- Q G` where `G` is the unitary
/// matrix with first column `v / |v|` acting on indices `k, k+1`.
fn apply_basis_change(t: &mut ComplexMatrix, q: &mut ComplexMatrix, k: usize, v: (C64, C64)) {
    let nv = v.0.norm().hypot(v.1.norm());
    if nv == 0.0 {
        return;
    }
    let g1 = (v.0 / nv, v.1 / nv);
    let g2 = (-g1.1.conj(), g1.0.conj());
    let n = t.ncols();
    for j in 0..n {
        let a = t[(k, j)];
        let b = t[(k + 1, j)];
        t[(k, j)] = g1.0.conj() * a + g1.1.conj() * b;
        t[(k + 1, j)] = g2.0.conj() * a + g2.1.conj() * b;
    }
    for i in 0..n {
        let a = t[(i, k)];
        let b = t[(i, k + 1)];
        t[(i, k)] = a * g1.0 + b * g1.1;
        t[(i, k + 1)] = a * g2.0 + b * g2.1;
    }
    for i in 0..q.nrows() {
        let a = q[(i, k)];
        let b = q[(i, k + 1)];
        q[(i, k)] = a * g1.0 + b * g1.1;
        q[(i, k + 1)] = a * g2.0 + b * g2.1;
    }
}

fn cabs1(z: C64) -> f64 {
    z.re.abs() + z.im.abs()
}

/// Eigenvalues of `[[a, b], [c, d]]` without cancellation, as `(first, second)`.
fn eig2(a: C64, b: C64, c: C64, d: C64) -> (C64, C64) {
    let p = (a - d) * 0.5;
    let bc = b * c;
    let mut r = (p * p + bc).sqrt();
    if (p + r).norm() < (p - r).norm() {
        r = -r;
    }
    let mu1 = p + r;
    let mu2 = if mu1 == C64::new(0.0, 0.0) { C64::new(0.0, 0.0) } else { -bc / mu1 };
    (d + mu1, d + mu2)
}

/// Eigenvalue of the trailing 2x2 block closest to its last diagonal entry.
fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let (l1, l2) = eig2(a, b, c, d);
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

impl ComplexSchur {
    pub fn new(m: &ComplexMatrix) -> Result<Self, NumericsError> {
        let n = ensure_square(m)?;
        if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(NumericsError::OutOfRange("non-finite matrix entry".into()));
        }
        let mut t = m.clone();
        let mut q = ComplexMatrix::identity(n, n);
        if n > 1 {
            hessenberg(&mut t, &mut q);
            qr_iterate(&mut t, &mut q)?;
        }
        // Clean the strictly lower triangle.
        for j in 0..n {
            for i in j + 1..n {
                t[(i, j)] = C64::new(0.0, 0.0);
            }
        }
        Ok(Self { q, t })
    }

    pub fn order(&self) -> usize {
        self.t.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        (0..self.order()).map(|i| self.t[(i, i)]).collect()
    }

    /// Swap diagonal entries `k` and `k+1` by a unitary similarity.
    pub fn swap_adjacent(&mut self, k: usize) {
        let t11 = self.t[(k, k)];
        let t22 = self.t[(k + 1, k + 1)];
        let t12 = self.t[(k, k + 1)];
        let v = (t12, t22 - t11);
        if v.0.norm() == 0.0 && v.1.norm() == 0.0 {
            return;
        }
        apply_basis_change(&mut self.t, &mut self.q, k, v);
        self.t[(k + 1, k)] = C64::new(0.0, 0.0);
        self.t[(k, k)] = t22;
        self.t[(k + 1, k + 1)] = t11;
    }

    /// Move the eigenvalues currently at positions `wanted` (in that order) to
    /// the leading diagonal positions, preserving the relative order of the rest.
    pub fn reorder(&mut self, wanted: &[usize]) {
        let n = self.order();
        let mut labels: Vec<usize> = (0..n).collect();
        for (target, &label) in wanted.iter().enumerate() {
            let pos = labels
                .iter()
                .position(|&l| l == label)
                .expect("reorder index out of range");
            assert!(pos >= target, "duplicate index in reorder request");
            for j in (target..pos).rev() {
                self.swap_adjacent(j);
                labels.swap(j, j + 1);
            }
        }
    }

    /// Leading `k` Schur vectors.
    pub fn leading_basis(&self, k: usize) -> ComplexMatrix {
        self.q.columns(0, k).into_owned()
    }
}

fn hessenberg(h: &mut ComplexMatrix, q: &mut ComplexMatrix) {
    let n = h.nrows();
    for k in 0..n.saturating_sub(2) {
        let mut v: Vec<C64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let alpha = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if alpha == 0.0 {
            continue;
        }
        let x0 = v[0];
        let phase = if x0.norm() == 0.0 { C64::new(1.0, 0.0) } else { x0 / x0.norm() };
        v[0] += phase * alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        // H <- P H with P = I - beta v v^H on rows k+1..
        for j in 0..n {
            let mut dot = C64::new(0.0, 0.0);
            for (idx, vi) in v.iter().enumerate() {
                dot += vi.conj() * h[(k + 1 + idx, j)];
            }
            dot *= beta;
            for (idx, vi) in v.iter().enumerate() {
                h[(k + 1 + idx, j)] -= vi * dot;
            }
        }
        // H <- H P, Q <- Q P on columns k+1..
        for m in [&mut *h, &mut *q] {
            for i in 0..n {
                let mut dot = C64::new(0.0, 0.0);
                for (idx, vi) in v.iter().enumerate() {
                    dot += m[(i, k + 1 + idx)] * vi;
                }
                dot *= beta;
                for (idx, vi) in v.iter().enumerate() {
                    m[(i, k + 1 + idx)] -= dot * vi.conj();
                }
            }
        }
        for i in k + 2..n {
            h[(i, k)] = C64::new(0.0, 0.0);
        }
    }
}

fn qr_iterate(h: &mut ComplexMatrix, q: &mut ComplexMatrix) -> Result<(), NumericsError> {
    let n = h.nrows();
    let ulp = f64::EPSILON;
    let safe_min = f64::MIN_POSITIVE;
    let small = safe_min * (n as f64 / ulp);
    let max_iter = MAX_SWEEPS_PER_EIGENVALUE * n.max(10);
    let mut total = 0usize;
    let mut since_deflation = 0usize;
    let mut hi = n - 1;

    while hi > 0 {
        // Locate the top of the active unreduced block.
        let mut l = hi;
        while l > 0 {
            let sub = cabs1(h[(l, l - 1)]);
            if sub <= small {
                break;
            }
            let mut tst = cabs1(h[(l - 1, l - 1)]) + cabs1(h[(l, l)]);
            if tst == 0.0 {
                if l >= 2 {
                    tst += cabs1(h[(l - 1, l - 2)]);
                }
                if l < hi {
                    tst += cabs1(h[(l + 1, l)]);
                }
            }
            if sub <= ulp * tst {
                // Ahues & Tisseur deflation test.
                let up = cabs1(h[(l - 1, l)]);
                let ab = sub.max(up);
                let ba = sub.min(up);
                let dd = cabs1(h[(l - 1, l - 1)] - h[(l, l)]);
                let aa = cabs1(h[(l, l)]).max(dd);
                let bb = cabs1(h[(l, l)]).min(dd);
                let s = aa + ab;
                if ba * (ab / s) <= small.max(ulp * (bb * (aa / s))) {
                    break;
                }
            }
            l -= 1;
        }
        if l > 0 {
            h[(l, l - 1)] = C64::new(0.0, 0.0);
        }

        if l == hi {
            hi -= 1;
            since_deflation = 0;
            continue;
        }

        if l + 1 == hi {
            // Closed-form split of a 2x2 window.
            let (a, b, c, d) = (h[(l, l)], h[(l, hi)], h[(hi, l)], h[(hi, hi)]);
            let (lambda, _) = eig2(a, b, c, d);
            let v1 = (b, lambda - a);
            let v2 = (lambda - d, c);
            let v = if v1.0.norm().hypot(v1.1.norm()) >= v2.0.norm().hypot(v2.1.norm()) {
                v1
            } else {
                v2
            };
            apply_basis_change(h, q, l, v);
            h[(hi, l)] = C64::new(0.0, 0.0);
            hi = l.saturating_sub(1);
            if l == 0 {
                break;
            }
            since_deflation = 0;
            continue;
        }

        total += 1;
        since_deflation += 1;
        if total > max_iter {
            return Err(NumericsError::NoConvergence { iterations: total });
        }

        let shift = if since_deflation % 11 == 10 {
            // Exceptional shift to break cycles.
            h[(hi, hi)] + C64::new(0.75 * cabs1(h[(hi, hi - 1)]), 0.0)
        } else {
            wilkinson_shift(
                h[(hi - 1, hi - 1)],
                h[(hi - 1, hi)],
                h[(hi, hi - 1)],
                h[(hi, hi)],
            )
        };

        let mut x = h[(l, l)] - shift;
        let mut y = h[(l + 1, l)];
        for k in l..hi {
            let rot = Rotation::zeroing(x, y);
            let from = if k > l { k - 1 } else { l };
            rot.rows(h, k, from);
            rot.cols(h, k, (k + 3).min(hi + 1));
            rot.cols(q, k, n);
            if k > l {
                h[(k + 1, k - 1)] = C64::new(0.0, 0.0);
            }
            if k + 1 < hi {
                x = h[(k + 1, k)];
                y = h[(k + 2, k)];
            }
        }
    }
    Ok(())
}

/// Eigenvalue region used for invariant-subspace selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigenRegion {
    /// `Re(lambda) <= atol`.
    ClosedLeftHalfPlane { atol: f64 },
    /// `Im(lambda) <= atol`.
    ClosedLowerHalfPlane { atol: f64 },
}

/// Where an eigenvalue sits relative to an [`EigenRegion`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionClass {
    Interior,
    Boundary,
    Exterior,
}

impl EigenRegion {
    pub fn classify(&self, z: C64) -> RegionClass {
        let (coord, atol) = match *self {
            Self::ClosedLeftHalfPlane { atol } => (z.re, atol),
            Self::ClosedLowerHalfPlane { atol } => (z.im, atol),
        };
        if coord < -atol {
            RegionClass::Interior
        } else if coord <= atol {
            RegionClass::Boundary
        } else {
            RegionClass::Exterior
        }
    }
}

/// Orthonormal basis (`order x k`) of a `k`-dimensional invariant subspace of
/// `m` whose eigenvalues lie in `region`. Interior eigenvalues are taken first,
/// then boundary ones in Schur order.
pub fn ordered_invariant_subspace(
    m: &ComplexMatrix,
    region: EigenRegion,
    k: usize,
) -> Result<ComplexMatrix, NumericsError> {
    let n = ensure_square(m)?;
    if k > n {
        return Err(NumericsError::OutOfRange(format!(
            "subspace dimension {k} exceeds matrix order {n}"
        )));
    }
    let mut schur = ComplexSchur::new(m)?;
    let eigs = schur.eigenvalues();
    let mut picked: Vec<usize> = eigs
        .iter()
        .enumerate()
        .filter(|(_, &z)| region.classify(z) == RegionClass::Interior)
        .map(|(i, _)| i)
        .collect();
    picked.extend(
        eigs.iter()
            .enumerate()
            .filter(|(_, &z)| region.classify(z) == RegionClass::Boundary)
            .map(|(i, _)| i),
    );
    if picked.len() < k {
        return Err(NumericsError::Selection {
            wanted: k,
            available: picked.len(),
            eigenvalues: eigs,
        });
    }
    picked.truncate(k);
    schur.reorder(&picked);
    Ok(schur.leading_basis(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{max_abs_diff, norm2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn real(rows: usize, cols: usize, data: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_row_slice(
            rows,
            cols,
            &data.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>(),
        )
    }

    fn random(n: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn check_decomposition(m: &ComplexMatrix, s: &ComplexSchur) {
        let n = m.nrows();
        let recon = &s.q * &s.t * s.q.adjoint();
        let scale = norm2(m).max(1.0);
        assert!(max_abs_diff(&recon, m) < 1e-12 * scale * n as f64);
        let unit = s.q.adjoint() * &s.q;
        assert!(max_abs_diff(&unit, &ComplexMatrix::identity(n, n)) < 1e-13 * n as f64);
        for j in 0..n {
            for i in j + 1..n {
                assert_eq!(s.t[(i, j)], C64::new(0.0, 0.0));
            }
        }
    }

    fn span_contains(basis: &ComplexMatrix, v: &ComplexMatrix) -> f64 {
        let proj = basis * (basis.adjoint() * v);
        norm2(&(v - proj)) / norm2(v)
    }

    #[test]
    fn random_matrices_decompose() {
        for (n, seed) in [(1, 1), (2, 2), (3, 3), (5, 4), (8, 5), (16, 6), (30, 7)] {
            let m = random(n, seed);
            let s = ComplexSchur::new(&m).unwrap();
            check_decomposition(&m, &s);
        }
    }

    #[test]
    fn reorder_preserves_decomposition() {
        let m = random(7, 11);
        let mut s = ComplexSchur::new(&m).unwrap();
        let before = s.eigenvalues();
        s.reorder(&[6, 2, 4]);
        check_decomposition(&m, &s);
        let after = s.eigenvalues();
        assert!((after[0] - before[6]).norm() < 1e-12);
        assert!((after[1] - before[2]).norm() < 1e-12);
        assert!((after[2] - before[4]).norm() < 1e-12);
    }

    #[test]
    fn diagonal_selection() {
        let m = real(2, 2, &[-1.0, 0.0, 0.0, 2.0]);
        let y = ordered_invariant_subspace(&m, EigenRegion::ClosedLeftHalfPlane { atol: 1e-8 }, 1)
            .unwrap();
        assert!(span_contains(&y, &real(2, 1, &[1.0, 0.0])) < 1e-14);
    }

    #[test]
    fn nilpotent_pencil_selects_kernel() {
        let m = real(2, 2, &[-1.0, 1.0, -1.0, 1.0]);
        let s = ComplexSchur::new(&m).unwrap();
        assert!(s.eigenvalues().iter().all(|z| z.norm() < 1e-15));
        let y = ordered_invariant_subspace(&m, EigenRegion::ClosedLeftHalfPlane { atol: 1e-8 }, 1)
            .unwrap();
        assert!(span_contains(&y, &real(2, 1, &[1.0, 1.0])) < 1e-15);
    }

    #[test]
    fn hyperbolic_selection() {
        let m = real(2, 2, &[-2.0, 1.0, -3.0, 2.0]);
        let y = ordered_invariant_subspace(&m, EigenRegion::ClosedLeftHalfPlane { atol: 1e-8 }, 1)
            .unwrap();
        assert!(span_contains(&y, &real(2, 1, &[1.0, 1.0])) < 1e-14);
    }

    #[test]
    fn selection_failure_lists_eigenvalues() {
        let m = real(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let err = ordered_invariant_subspace(&m, EigenRegion::ClosedLeftHalfPlane { atol: 1e-8 }, 1)
            .unwrap_err();
        match err {
            NumericsError::Selection { eigenvalues, available, .. } => {
                assert_eq!(available, 0);
                assert_eq!(eigenvalues.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invariance_residual_random() {
        for seed in 0..20 {
            let m = random(6, 100 + seed);
            let s = ComplexSchur::new(&m).unwrap();
            let k = s
                .eigenvalues()
                .iter()
                .filter(|z| z.re <= 1e-8)
                .count();
            let y = ordered_invariant_subspace(&m, EigenRegion::ClosedLeftHalfPlane { atol: 1e-8 }, k)
                .unwrap();
            let resid = &m * &y - &y * (y.adjoint() * &m * &y);
            assert!(norm2(&resid) <= 1e-10 * norm2(&m));
        }
    }
}
