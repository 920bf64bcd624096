//! The twin system, the coupling maps `E_ab`, and equivalence of systems.
//!
//! Coordinates: the basis of `V̂_a = V*_{a^{-1}}` is the conjugate-dual basis
//! of `V_{a^{-1}}`, so `Ĥ_ba` is the conjugate transpose of `H_{a^{-1} b^{-1}}`
//! and a form `B_a` acts as its Gram matrix `V_a -> V̂_{a^{-1}}`.

use crate::error::{Error, Result};
use crate::free_group::{cancels, inv, Letter};
use crate::linalg::{min_singular_value, nullspace};
use crate::scalar::{ci, creal, czero, fnorm, lit, max_norm, unvec, zeros, CMat, Real, C};
use crate::system::{MatrixSystem, NormalizedSystem, Tuple};
use crate::tolerances::Tolerances;

/// Raw twin: `n̂_a = n_{a^{-1}}`, `Ĥ_ba = (H_{a^{-1} b^{-1}})^H`.
pub fn twin_system<T: Real>(sys: &MatrixSystem<T>) -> MatrixSystem<T> {
    let al = sys.alphabet().clone();
    let dims: Vec<usize> = al.letters().map(|a| sys.dim(inv(a))).collect();
    MatrixSystem::from_fn(al, dims, |b, a| {
        if cancels(b, a) {
            None
        } else {
            Some(sys.h(inv(a), inv(b)).adjoint())
        }
    })
    .expect("twin of a valid system is valid")
}

/// Twin of a normalized system, with its own independently normalized forms.
pub fn twin<T: Real>(nsys: &NormalizedSystem<T>) -> Result<NormalizedSystem<T>> {
    twin_system(&nsys.system).normalize()
}

/// Coupling maps `E_ab = Σ_{c ≠ a, b^{-1}} Ĥ_{a c^{-1}} B_c H_cb : V_b -> V̂_a`,
/// stored at index `a * 2k + b`.
pub fn e_maps<T: Real>(orig: &NormalizedSystem<T>, tw: &NormalizedSystem<T>) -> Vec<CMat<T>> {
    let l = orig.letters();
    let mut out = Vec::with_capacity(l * l);
    for a in 0..l {
        for b in 0..l {
            let mut acc = zeros(tw.dims()[a], orig.dims()[b]);
            if !cancels(a, b) {
                for c in 0..l {
                    if c == a || c == inv(b) {
                        continue;
                    }
                    acc += tw.h(a, inv(c)) * orig.b(c) * orig.h(c, b);
                }
            }
            out.push(acc);
        }
    }
    out
}

/// `max_ab ‖E*_{b^{-1}a^{-1}} − E_ab‖ / max ‖E‖`.
pub fn e_symmetry_residual<T: Real>(e: &[CMat<T>], letters: usize) -> T {
    let scale = max_norm(e);
    if scale == T::zero() {
        return T::zero();
    }
    let mut worst = T::zero();
    for a in 0..letters {
        for b in 0..letters {
            let lhs = e[inv(b) * letters + inv(a)].adjoint();
            worst = worst.max(fnorm(&(lhs - &e[a * letters + b])));
        }
    }
    worst / scale
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EquivalenceStatus {
    Equivalent,
    Inequivalent,
    Undecided,
}

#[derive(Clone, Debug)]
pub struct EquivalenceResult<T: Real> {
    pub status: EquivalenceStatus,
    /// Representative intertwiner `J_a : V_a -> V♯_a` when the solution space is one-dimensional.
    pub k: Option<Tuple<T>>,
    pub solution_space_dim: usize,
    /// Smallest singular values of the constraint matrix (ascending, at most 6).
    pub smallest_singular_values: Vec<T>,
    pub diagnostic: Option<String>,
}

/// Solves `H♯_ba J_a = J_b H_ba` for all `(b, a)`.
pub fn solve_equivalence<T: Real>(
    s1: &MatrixSystem<T>,
    s2: &MatrixSystem<T>,
    tol: &Tolerances,
) -> Result<EquivalenceResult<T>> {
    if s1.letters() != s2.letters() {
        return Err(Error::Alphabet(format!(
            "alphabets have {} and {} letters",
            s1.letters(),
            s2.letters()
        )));
    }
    let l = s1.letters();
    let mut off = vec![0usize];
    for a in 0..l {
        off.push(off[a] + s2.dim(a) * s1.dim(a));
    }
    let ncols = off[l];
    let nrows: usize = (0..l)
        .flat_map(|a| (0..l).map(move |b| (a, b)))
        .filter(|&(a, b)| !cancels(b, a))
        .map(|(a, b)| s2.dim(b) * s1.dim(a))
        .sum();
    let mut m = zeros::<T>(nrows, ncols);
    let mut row = 0;
    for a in 0..l {
        for b in 0..l {
            if cancels(b, a) {
                continue;
            }
            let r = s2.dim(b) * s1.dim(a);
            // vec(H♯ J_a) = (I ⊗ H♯) vec J_a ;  vec(J_b H) = (H^T ⊗ I) vec J_b
            let left = CMat::<T>::identity(s1.dim(a), s1.dim(a)).kronecker(s2.h(b, a));
            let right = s1.h(b, a).transpose().kronecker(&CMat::<T>::identity(s2.dim(b), s2.dim(b)));
            {
                let mut v = m.view_mut((row, off[a]), (r, off[a + 1] - off[a]));
                v += &left;
            }
            {
                let mut v = m.view_mut((row, off[b]), (r, off[b + 1] - off[b]));
                v -= &right;
            }
            row += r;
        }
    }
    let (basis, profile) = nullspace(&m, lit(tol.null_rel));
    let mut smallest: Vec<T> = profile.iter().rev().take(6).copied().collect();
    smallest.truncate(6);
    let dim = basis.len();
    let dims_match = (0..l).all(|a| s1.dim(a) == s2.dim(a));
    let mut res = EquivalenceResult {
        status: EquivalenceStatus::Inequivalent,
        k: None,
        solution_space_dim: dim,
        smallest_singular_values: smallest,
        diagnostic: None,
    };
    match dim {
        0 => {}
        1 => {
            let v = &basis[0];
            let k: Tuple<T> = (0..l)
                .map(|a| unvec(&v.as_slice()[off[a]..off[a + 1]], s2.dim(a), s1.dim(a)))
                .collect();
            let k = fix_phase(k);
            if !dims_match {
                res.status = EquivalenceStatus::Undecided;
                res.diagnostic = Some("intertwiner exists but letter dimensions differ".into());
                res.k = Some(k);
                return Ok(res);
            }
            let scale = max_norm(&k);
            let invertible = k
                .iter()
                .all(|m| min_singular_value(m) > lit::<T>(tol.inv) * scale);
            if invertible {
                res.status = EquivalenceStatus::Equivalent;
            } else {
                res.status = EquivalenceStatus::Undecided;
                res.diagnostic = Some("one-dimensional intertwiner space with a singular block".into());
            }
            res.k = Some(k);
        }
        _ => {
            res.status = EquivalenceStatus::Undecided;
            res.diagnostic = Some(format!(
                "intertwiner space has dimension {dim}; irreducible systems allow at most 1"
            ));
        }
    }
    Ok(res)
}

/// Unit-norm representative with a deterministic phase: the sum of all
/// entries (or the first sizable entry) is made real positive.
fn fix_phase<T: Real>(k: Tuple<T>) -> Tuple<T> {
    let norm = crate::scalar::tuple_norm(&k);
    if norm == T::zero() {
        return k;
    }
    let mut z: C<T> = k.iter().flat_map(|m| m.iter().copied()).fold(czero(), |p, q| p + q);
    if crate::scalar::cabs(z) < lit::<T>(1e-6) * norm {
        z = k
            .iter()
            .flat_map(|m| m.iter().copied())
            .find(|q| crate::scalar::cabs(*q) > lit::<T>(1e-6) * norm)
            .unwrap_or(creal(T::one()));
    }
    let phase = z.conj() / creal(crate::scalar::cabs(z) * norm);
    k.into_iter().map(|m| m * phase).collect()
}

/// Which addend of `K_a = ½(K_a + K*_{a^{-1}}) + i·(K_a − K*_{a^{-1}})/(2i)` was kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KBranch {
    Hermitian,
    SkewHermitian,
}

/// Equivalence tuple with `K*_a = K_{a^{-1}}`, scaled so that `K_a* B̂_a K_a = B_a`.
#[derive(Clone, Debug)]
pub struct SymmetricK<T: Real> {
    pub k: Tuple<T>,
    pub branch: KBranch,
    /// `max_a ‖K*_a − K_{a^{-1}}‖ / max ‖K‖`.
    pub symmetry_residual: T,
    /// `max_a ‖K*_a B̂_a K_a − B_a‖ / ‖B‖`.
    pub unitarity_residual: T,
    pub unitary: bool,
}

/// Symmetrizes an equivalence `V_a -> V̂_a` and rescales it to be unitary
/// for the forms `(B_a)` and `(B̂_a)`.
pub fn symmetrize_and_unitarize_k<T: Real>(
    k: &[CMat<T>],
    orig: &NormalizedSystem<T>,
    tw: &NormalizedSystem<T>,
    tol: &Tolerances,
) -> Result<SymmetricK<T>> {
    let l = k.len();
    let half = creal(lit::<T>(0.5));
    let herm: Tuple<T> = (0..l).map(|a| (&k[a] + k[inv(a)].adjoint()) * half).collect();
    let skew: Tuple<T> = (0..l)
        .map(|a| (&k[a] - k[inv(a)].adjoint()) * (half / ci::<T>()))
        .collect();
    let (hn, sn) = (crate::scalar::tuple_norm(&herm), crate::scalar::tuple_norm(&skew));
    if hn == T::zero() && sn == T::zero() {
        return Err(Error::Rejected("both symmetrized addends of K vanish".into()));
    }
    let (sym, branch) = if hn >= sn {
        (herm, KBranch::Hermitian)
    } else {
        (skew, KBranch::SkewHermitian)
    };
    let sym = fix_sign(sym);
    unitarize_k(sym, branch, orig, tw, tol)
}

/// Rescales a symmetric `K` by the positive scalar best matching
/// `K* B̂ K = B`, then reports the residual.
pub fn unitarize_k<T: Real>(
    k: Tuple<T>,
    branch: KBranch,
    orig: &NormalizedSystem<T>,
    tw: &NormalizedSystem<T>,
    tol: &Tolerances,
) -> Result<SymmetricK<T>> {
    let l = k.len();
    let pulled: Tuple<T> = (0..l).map(|a| k[a].adjoint() * tw.b(a) * &k[a]).collect();
    let num: T = (0..l)
        .map(|a| pulled[a].dotc(orig.b(a)).re)
        .fold(T::zero(), |p, q| p + q);
    let den: T = pulled.iter().map(|m| m.norm_squared()).fold(T::zero(), |p, q| p + q);
    if den == T::zero() || num <= T::zero() {
        return Err(Error::Numerical("pulled-back form is not positive".into()));
    }
    let c = num / den;
    let s = creal(c.sqrt());
    let k: Tuple<T> = k.into_iter().map(|m| m * s).collect();
    let bnorm = crate::scalar::tuple_norm(&orig.forms);
    let unitarity_residual = (0..l)
        .map(|a| fnorm(&(k[a].adjoint() * tw.b(a) * &k[a] - orig.b(a))))
        .fold(T::zero(), |p, q| p.max(q))
        / bnorm;
    let kscale = max_norm(&k);
    let symmetry_residual = (0..l)
        .map(|a| fnorm(&(k[a].adjoint() - &k[inv(a)])))
        .fold(T::zero(), |p, q| p.max(q))
        / kscale;
    Ok(SymmetricK {
        k,
        branch,
        symmetry_residual,
        unitarity_residual,
        unitary: unitarity_residual <= lit(tol.residual.max(1e-9)),
    })
}

fn fix_sign<T: Real>(k: Tuple<T>) -> Tuple<T> {
    let norm = crate::scalar::tuple_norm(&k);
    let z: C<T> = k.iter().flat_map(|m| m.iter().copied()).fold(czero(), |p, q| p + q);
    let pick = if crate::scalar::cabs(z) > lit::<T>(1e-6) * norm {
        z
    } else {
        k.iter()
            .flat_map(|m| m.iter().copied())
            .find(|q| crate::scalar::cabs(*q) > lit::<T>(1e-6) * norm)
            .unwrap_or(creal(T::one()))
    };
    let key = if pick.re.abs() > lit::<T>(1e-9) * crate::scalar::cabs(pick) {
        pick.re
    } else {
        pick.im
    };
    if key < T::zero() {
        k.into_iter().map(|m| -m).collect()
    } else {
        k
    }
}

/// Everything derived from a normalized system and its twin.
#[derive(Clone, Debug)]
pub struct TwinPackage<T: Real> {
    pub original: NormalizedSystem<T>,
    pub twin: NormalizedSystem<T>,
    /// `E_ab` at index `a * 2k + b`.
    pub e: Vec<CMat<T>>,
    pub equivalence: EquivalenceResult<T>,
    pub k: Option<SymmetricK<T>>,
}

impl<T: Real> TwinPackage<T> {
    pub fn build(nsys: &NormalizedSystem<T>, tol: &Tolerances) -> Result<Self> {
        let tw = twin(nsys)?;
        let e = e_maps(nsys, &tw);
        let equivalence = solve_equivalence(&nsys.system, &tw.system, tol)?;
        let k = match (&equivalence.status, &equivalence.k) {
            (EquivalenceStatus::Equivalent, Some(k)) => {
                Some(symmetrize_and_unitarize_k(k, nsys, &tw, tol)?)
            }
            _ => None,
        };
        Ok(Self {
            original: nsys.clone(),
            twin: tw,
            e,
            equivalence,
            k,
        })
    }

    pub fn letters(&self) -> usize {
        self.original.letters()
    }

    /// `E_ab : V_b -> V̂_a`.
    pub fn e(&self, a: Letter, b: Letter) -> &CMat<T> {
        &self.e[a * self.letters() + b]
    }

    /// `sqrt(Σ ‖E_ab‖²)`.
    pub fn e_norm(&self) -> T {
        crate::scalar::tuple_norm(&self.e)
    }

    pub fn equivalent(&self) -> bool {
        self.equivalence.status == EquivalenceStatus::Equivalent
    }

    /// Same package with the twin forms multiplied by `s`; `E` is unchanged
    /// and `K` is re-unitarized against the new forms.
    pub fn with_twin_form_scale(&self, s: T, tol: &Tolerances) -> Result<Self> {
        let mut out = self.clone();
        out.twin = self.twin.with_form_scale(s);
        if let Some(k) = &self.k {
            out.k = Some(unitarize_k(k.k.clone(), k.branch, &out.original, &out.twin, tol)?);
        }
        Ok(out)
    }
}
