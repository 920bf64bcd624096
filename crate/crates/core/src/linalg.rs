//! Dense complex linear algebra used throughout: SVD rank decisions,
//! nullspaces, least squares, eigenvalues.

use nalgebra::{Schur, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{cone, czero, lit, to_f64, CMat, CVec, Real, C};

// nalgebra's SVD returns wrong factors on some rank-deficient inputs; faer's
// is used instead, in double precision whatever `T` is.
struct ThinSvd<T: Real> {
    u: CMat<T>,
    /// Descending.
    s: Vec<T>,
    v: CMat<T>,
}

fn thin_svd<T: Real>(m: &CMat<T>) -> Result<ThinSvd<T>> {
    let (r, c) = m.shape();
    let a = faer::Mat::<faer::c64>::from_fn(r, c, |i, j| {
        let z = m[(i, j)];
        faer::c64::new(to_f64(z.re), to_f64(z.im))
    });
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let back = |x: faer::MatRef<'_, faer::c64>| {
        CMat::<T>::from_fn(x.nrows(), x.ncols(), |i, j| {
            let z = x[(i, j)];
            C::new(lit(z.re), lit(z.im))
        })
    };
    let s = svd.S().column_vector().iter().map(|z| lit(z.re)).collect();
    Ok(ThinSvd {
        u: back(svd.U()),
        s,
        v: back(svd.V()),
    })
}

/// Singular values in descending order.
pub fn singular_values<T: Real>(m: &CMat<T>) -> Vec<T> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let (r, c) = m.shape();
    let a = faer::Mat::<faer::c64>::from_fn(r, c, |i, j| {
        let z = m[(i, j)];
        faer::c64::new(to_f64(z.re), to_f64(z.im))
    });
    match a.singular_values() {
        Ok(s) => s.into_iter().map(lit).collect(),
        Err(_) => vec![lit::<T>(f64::NAN); r.min(c)],
    }
}

/// Number of singular values above `rel * σ_max`.
pub fn numeric_rank<T: Real>(m: &CMat<T>, rel: T) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&smax) if smax > T::zero() => s.iter().filter(|&&x| x > rel * smax).count(),
        _ => 0,
    }
}

/// Nullspace of `m` with relative threshold `rel * σ_max`.
///
/// Returns an orthonormal basis together with the full singular-value
/// profile (padded with zeros up to the number of columns).
pub fn nullspace<T: Real>(m: &CMat<T>, rel: T) -> (Vec<CVec<T>>, Vec<T>) {
    let n = m.ncols();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    // A wide matrix gives a thin V; pad with zero rows so V is square.
    let padded = if m.nrows() < n {
        let mut p = CMat::<T>::from_element(n, n, czero());
        p.rows_mut(0, m.nrows()).copy_from(m);
        p
    } else {
        m.clone()
    };
    let Ok(svd) = thin_svd(&padded) else {
        return (Vec::new(), vec![lit::<T>(f64::NAN); n]);
    };
    let smax = svd.s.iter().copied().fold(T::zero(), |p, q| p.max(q));
    let cut = rel * smax;
    let basis = svd
        .s
        .iter()
        .enumerate()
        .filter(|&(_, &s)| s <= cut || smax == T::zero())
        .map(|(i, _)| svd.v.column(i).into_owned())
        .collect();
    (basis, svd.s)
}

/// Minimum-norm least-squares solution of `a x = b`; singular values below
/// `rel * σ_max` are treated as zero.
pub fn lstsq<T: Real>(a: &CMat<T>, b: &CVec<T>, rel: T) -> Result<CVec<T>> {
    if a.ncols() == 0 {
        return Ok(CVec::<T>::zeros(0));
    }
    let svd = thin_svd(a)?;
    let smax = svd.s.iter().copied().fold(T::zero(), |p, q| p.max(q));
    let ub = svd.u.adjoint() * b;
    let mut y = CVec::<T>::zeros(svd.s.len());
    for (i, &s) in svd.s.iter().enumerate() {
        if s > rel * smax && s > T::zero() {
            y[i] = ub[i] / C::new(s, T::zero());
        }
    }
    Ok(&svd.v * y)
}

/// All eigenvalues of a general complex square matrix.
pub fn eigenvalues<T: Real>(m: &CMat<T>) -> Result<Vec<C<T>>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let eps = T::default_epsilon();
    let schur = Schur::try_new(m.clone(), eps, 100_000)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Ascending eigenvalues of a Hermitian matrix (only the lower triangle is read).
pub fn hermitian_eigenvalues<T: Real>(m: &CMat<T>) -> Vec<T> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<T> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// `m^p` for a Hermitian positive semidefinite `m`.
pub fn psd_power<T: Real>(m: &CMat<T>, p: T) -> CMat<T> {
    let eig = SymmetricEigen::new(m.clone());
    let d = eig
        .eigenvalues
        .map(|x| C::new(x.max(T::zero()).powf(p), T::zero()));
    let q = &eig.eigenvectors;
    q * CMat::from_diagonal(&d) * q.adjoint()
}

pub fn inverse<T: Real>(m: &CMat<T>) -> Result<CMat<T>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "cannot invert a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular matrix".into()))
}

/// Smallest singular value (0 for empty input).
pub fn min_singular_value<T: Real>(m: &CMat<T>) -> T {
    singular_values(m).last().copied().unwrap_or(T::zero())
}

/// Incrementally built orthonormal basis (modified Gram–Schmidt with one
/// re-orthogonalization pass).
#[derive(Clone, Debug)]
pub struct OrthoBasis<T: Real> {
    vecs: Vec<CVec<T>>,
    rel: T,
}

impl<T: Real> OrthoBasis<T> {
    pub fn new(rel: T) -> Self {
        Self {
            vecs: Vec::new(),
            rel,
        }
    }

    pub fn dim(&self) -> usize {
        self.vecs.len()
    }

    pub fn vectors(&self) -> &[CVec<T>] {
        &self.vecs
    }

    /// Adds `v` if its component orthogonal to the current span exceeds
    /// `rel * ‖v‖`; returns whether the dimension grew.
    pub fn push(&mut self, v: &CVec<T>) -> bool {
        let norm = v.norm();
        self.push_above(v, self.rel * norm)
    }

    /// Adds `v` if its component orthogonal to the current span exceeds the
    /// absolute `cutoff`.
    pub fn push_above(&mut self, v: &CVec<T>, cutoff: T) -> bool {
        if v.norm() == T::zero() {
            return false;
        }
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &self.vecs {
                let c = q.dotc(&r);
                r.axpy(-c, q, cone());
            }
        }
        let rn = r.norm();
        if rn > cutoff {
            self.vecs.push(r / C::new(rn, T::zero()));
            true
        } else {
            false
        }
    }

    /// Squared norm of the component of `v` orthogonal to the span.
    pub fn residual_sq(&self, v: &CVec<T>) -> T {
        let mut r = v.clone();
        for q in &self.vecs {
            let c = q.dotc(&r);
            r.axpy(-c, q, cone());
        }
        r.norm_squared()
    }
}

/// Default relative rank threshold for nullspace decisions.
pub fn default_null_rel<T: Real>() -> T {
    lit(1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cplx;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat<f64> {
        CMat::from_fn(r, c, |_, _| cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn unitary(rng: &mut ChaCha8Rng, n: usize) -> CMat<f64> {
        random(rng, n, n).qr().q()
    }

    #[test]
    fn singular_values_of_a_constructed_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = [3.0, 1.5, 0.25, 0.0];
        let (u, v) = (unitary(&mut rng, 6), unitary(&mut rng, 4));
        let mut d = CMat::<f64>::zeros(6, 4);
        for (i, &x) in s.iter().enumerate() {
            d[(i, i)] = cplx(x, 0.0);
        }
        let m = &u * d * v.adjoint();
        let got = singular_values(&m);
        assert_eq!(got.len(), 4);
        for (g, e) in got.iter().zip(s) {
            assert!((g - e).abs() < 1e-12, "{got:?}");
        }
        assert_eq!(numeric_rank(&m, 1e-10), 3);
    }

    #[test]
    fn least_squares_on_consistent_rank_deficient_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..200 {
            let (m, n) = (4 + trial % 13, 2 + trial % 5);
            let r = 1 + trial % n;
            let a = random(&mut rng, m, r) * random(&mut rng, r, n);
            let x0 = random(&mut rng, n, 1).column(0).into_owned();
            let b = &a * &x0;
            let x = lstsq(&a, &b, 1e-12).unwrap();
            let res = (&a * &x - &b).norm() / b.norm();
            assert!(res < 1e-12, "trial {trial}: residual {res:e}");
        }
    }

    #[test]
    fn least_squares_returns_the_minimum_norm_solution() {
        // a = [1 1], b = 2: minimum-norm solution is (1, 1).
        let a = CMat::from_row_slice(1, 2, &[cplx(1.0, 0.0), cplx(1.0, 0.0)]);
        let b = CVec::from_vec(vec![cplx(2.0, 0.0)]);
        let x = lstsq(&a, &b, 1e-12).unwrap();
        assert!((x[0] - cplx(1.0, 0.0)).norm() < 1e-14);
        assert!((x[1] - cplx(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn nullspace_is_orthonormal_and_annihilated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (m, n, r) in [(3, 5, 2), (6, 4, 1), (2, 6, 2), (5, 5, 5)] {
            let a = random(&mut rng, m, r) * random(&mut rng, r, n);
            let (basis, profile) = nullspace(&a, 1e-10);
            assert_eq!(basis.len(), n - r);
            assert_eq!(profile.len(), n);
            for (i, v) in basis.iter().enumerate() {
                assert!((&a * v).norm() < 1e-12);
                for (j, w) in basis.iter().enumerate() {
                    let g = v.dotc(w);
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((g - cplx(e, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn psd_power_square_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&mut rng, 4, 4);
        let p = &x * x.adjoint();
        let r = psd_power(&p, 0.5);
        assert!((&r * &r - &p).norm() < 1e-12);
        let ri = psd_power(&p, -0.5);
        assert!((&r * &ri - CMat::<f64>::identity(4, 4)).norm() < 1e-10);
    }

    #[test]
    fn eigenvalues_of_a_triangular_matrix() {
        let m = CMat::<f64>::from_row_slice(
            3,
            3,
            &[
                cplx(1.0, 0.0),
                cplx(5.0, 1.0),
                cplx(2.0, 0.0),
                cplx(0.0, 0.0),
                cplx(0.0, 2.0),
                cplx(1.0, 1.0),
                cplx(0.0, 0.0),
                cplx(0.0, 0.0),
                cplx(-3.0, 0.0),
            ],
        );
        let mut ev = eigenvalues(&m).unwrap();
        ev.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        let want = [cplx(-3.0, 0.0), cplx(0.0, 2.0), cplx(1.0, 0.0)];
        for (g, w) in ev.iter().zip(want) {
            assert!((g - w).norm() < 1e-12);
        }
    }

    #[test]
    fn ortho_basis_rejects_dependent_vectors() {
        let mut b = OrthoBasis::<f64>::new(1e-10);
        let e1 = CVec::from_vec(vec![cplx(1.0, 0.0), cplx(0.0, 0.0)]);
        let e2 = CVec::from_vec(vec![cplx(1.0, 1.0), cplx(0.0, 3.0)]);
        assert!(b.push(&e1));
        assert!(b.push(&e2));
        assert!(!b.push(&(&e1 * cplx(2.0, -1.0) + &e2)));
        assert_eq!(b.dim(), 2);
        assert!(b.residual_sq(&e2) < 1e-24);
    }
}
