//! Matrix systems `(V_a, H_ba)`, the transfer operator on form tuples, and
//! normalization to spectral radius one with the positive fixed tuple `(B_a)`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::free_group::{cancels, inv, Alphabet, Letter};
use crate::linalg::{eigenvalues, hermitian_eigenvalues, lstsq, nullspace, OrthoBasis};
use crate::scalar::{
    czero, eye, herm_part, lit, tuple_norm, unvec, vec_of, zeros, CMat, CVec, Real, C,
};
use crate::tolerances::Tolerances;

/// A tuple of matrices indexed by letter (forms, equivalences, Q maps, ...).
pub type Tuple<T> = Vec<CMat<T>>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// `dims` has the wrong length or a zero entry.
    Dimension,
    /// A block has a shape other than `n_b × n_a`.
    Shape,
    /// A nonzero block sits at a pair with `ba = e`.
    NonzeroAtCancellation,
    /// A block contains NaN or infinity.
    NonFinite,
    /// A block references a letter outside the alphabet.
    UnknownLetter,
    /// Every block is zero.
    AllZero,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// `(b, a)` for block-level problems.
    pub location: Option<(Letter, Letter)>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Unvalidated system data: absent blocks are zero, shapes are not trusted.
#[derive(Clone, Debug)]
pub struct SystemSpec<T: Real> {
    pub alphabet: Alphabet,
    pub dims: Vec<usize>,
    /// `(b, a) -> H_ba`, a map from `V_a` to `V_b`.
    pub blocks: BTreeMap<(Letter, Letter), CMat<T>>,
}

impl<T: Real> SystemSpec<T> {
    /// Lists every violation of the matrix-system rules (empty = valid).
    pub fn validate(&self) -> Vec<Violation> {
        let al = &self.alphabet;
        let l = al.size();
        let mut out = Vec::new();
        if self.dims.len() != l {
            out.push(Violation {
                kind: ViolationKind::Dimension,
                location: None,
                message: format!("expected {} letter dimensions, got {}", l, self.dims.len()),
            });
            return out;
        }
        for a in al.letters() {
            if self.dims[a] == 0 {
                out.push(Violation {
                    kind: ViolationKind::Dimension,
                    location: None,
                    message: format!("letter {} has dimension 0", al.letter_name(a)),
                });
            }
        }
        let mut any_nonzero = false;
        for (&(b, a), m) in &self.blocks {
            if a >= l || b >= l {
                out.push(Violation {
                    kind: ViolationKind::UnknownLetter,
                    location: Some((b, a)),
                    message: format!("block ({b},{a}) references a letter outside the alphabet"),
                });
                continue;
            }
            let key = format!("{}|{}", al.letter_name(b), al.letter_name(a));
            if m.nrows() != self.dims[b] || m.ncols() != self.dims[a] {
                out.push(Violation {
                    kind: ViolationKind::Shape,
                    location: Some((b, a)),
                    message: format!(
                        "H[{key}] is {}x{} but dims require {}x{}",
                        m.nrows(),
                        m.ncols(),
                        self.dims[b],
                        self.dims[a]
                    ),
                });
            }
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                out.push(Violation {
                    kind: ViolationKind::NonFinite,
                    location: Some((b, a)),
                    message: format!("H[{key}] has non-finite entries"),
                });
                continue;
            }
            let nonzero = m.iter().any(|z| *z != czero());
            if cancels(b, a) && nonzero {
                out.push(Violation {
                    kind: ViolationKind::NonzeroAtCancellation,
                    location: Some((b, a)),
                    message: format!("H[{key}] is nonzero but ba = e forces H_ba = 0"),
                });
            }
            any_nonzero |= nonzero && !cancels(b, a);
        }
        if !any_nonzero {
            out.push(Violation {
                kind: ViolationKind::AllZero,
                location: None,
                message: "all H_ba are zero".into(),
            });
        }
        out
    }

    pub fn build(&self) -> Result<MatrixSystem<T>> {
        let v = self.validate();
        if !v.is_empty() {
            let msgs: Vec<String> = v.iter().map(|x| x.message.clone()).collect();
            return Err(Error::InvalidSystem(msgs.join("; ")));
        }
        MatrixSystem::from_fn(self.alphabet.clone(), self.dims.clone(), |b, a| {
            self.blocks.get(&(b, a)).cloned()
        })
    }
}

/// A validated matrix system with dense block storage.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixSystem<T: Real> {
    alphabet: Alphabet,
    dims: Vec<usize>,
    h: Vec<CMat<T>>,
}

/// Outcome of the path-span irreducibility test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Irreducibility {
    Irreducible,
    Reducible,
    Undecided,
}

impl<T: Real> MatrixSystem<T> {
    /// Builds a system from a block function; `None` means a zero block.
    pub fn from_fn(
        alphabet: Alphabet,
        dims: Vec<usize>,
        mut f: impl FnMut(Letter, Letter) -> Option<CMat<T>>,
    ) -> Result<Self> {
        let l = alphabet.size();
        if dims.len() != l {
            return Err(Error::Shape(format!(
                "expected {l} dimensions, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidSystem("zero-dimensional letter space".into()));
        }
        let mut h = Vec::with_capacity(l * l);
        let mut any = false;
        for b in 0..l {
            for a in 0..l {
                let m = match f(b, a) {
                    Some(m) => m,
                    None => zeros(dims[b], dims[a]),
                };
                if m.nrows() != dims[b] || m.ncols() != dims[a] {
                    return Err(Error::Shape(format!(
                        "H[{}|{}] is {}x{}, expected {}x{}",
                        alphabet.letter_name(b),
                        alphabet.letter_name(a),
                        m.nrows(),
                        m.ncols(),
                        dims[b],
                        dims[a]
                    )));
                }
                let nonzero = m.iter().any(|z| *z != czero());
                if cancels(b, a) && nonzero {
                    return Err(Error::InvalidSystem(format!(
                        "H[{}|{}] must vanish (ba = e)",
                        alphabet.letter_name(b),
                        alphabet.letter_name(a)
                    )));
                }
                any |= nonzero;
                h.push(m);
            }
        }
        if !any {
            return Err(Error::Degenerate);
        }
        Ok(Self { alphabet, dims, h })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn letters(&self) -> usize {
        self.alphabet.size()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, a: Letter) -> usize {
        self.dims[a]
    }

    /// `H_ba : V_a -> V_b`.
    #[inline]
    pub fn h(&self, b: Letter, a: Letter) -> &CMat<T> {
        &self.h[b * self.letters() + a]
    }

    pub fn to_spec(&self) -> SystemSpec<T> {
        let mut blocks = BTreeMap::new();
        for b in self.alphabet.letters() {
            for a in self.alphabet.letters() {
                if !cancels(b, a) {
                    blocks.insert((b, a), self.h(b, a).clone());
                }
            }
        }
        SystemSpec {
            alphabet: self.alphabet.clone(),
            dims: self.dims.clone(),
            blocks,
        }
    }

    /// Every block multiplied by the real factor `s`.
    pub fn scaled(&self, s: T) -> Self {
        let f = C::new(s, T::zero());
        Self {
            alphabet: self.alphabet.clone(),
            dims: self.dims.clone(),
            h: self.h.iter().map(|m| m * f).collect(),
        }
    }

    /// Applies `J_b H_ba J_a^{-1}` for invertible `J` (a change of basis).
    pub fn conjugated(&self, j: &[CMat<T>], j_inv: &[CMat<T>]) -> Result<Self> {
        Self::from_fn(self.alphabet.clone(), self.dims.clone(), |b, a| {
            if cancels(b, a) {
                None
            } else {
                Some(&j[b] * self.h(b, a) * &j_inv[a])
            }
        })
    }

    /// Validation of an already-built system (always empty unless blocks
    /// were made non-finite after construction).
    pub fn validate(&self) -> Vec<Violation> {
        self.to_spec().validate()
    }

    /// `(Σ_b H_ba^H t_b H_ba)_a`.
    pub fn transfer_apply(&self, t: &[CMat<T>]) -> Result<Tuple<T>> {
        self.check_tuple(t)?;
        let l = self.letters();
        Ok((0..l)
            .map(|a| {
                let mut acc = zeros(self.dims[a], self.dims[a]);
                for b in 0..l {
                    if cancels(b, a) {
                        continue;
                    }
                    let h = self.h(b, a);
                    acc += h.adjoint() * &t[b] * h;
                }
                acc
            })
            .collect())
    }

    fn check_tuple(&self, t: &[CMat<T>]) -> Result<()> {
        if t.len() != self.letters() {
            return Err(Error::Shape(format!(
                "tuple has {} entries, expected {}",
                t.len(),
                self.letters()
            )));
        }
        for (a, m) in t.iter().enumerate() {
            if m.nrows() != self.dims[a] || m.ncols() != self.dims[a] {
                return Err(Error::Shape(format!(
                    "tuple entry {a} is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    self.dims[a],
                    self.dims[a]
                )));
            }
        }
        Ok(())
    }

    /// Offsets of the per-letter blocks in the vectorized tuple space.
    pub fn tuple_offsets(&self) -> Vec<usize> {
        let mut off = vec![0];
        for &n in &self.dims {
            off.push(off.last().unwrap() + n * n);
        }
        off
    }

    /// Matrix of the transfer operator on column-stacked tuples.
    pub fn transfer_matrix(&self) -> CMat<T> {
        let off = self.tuple_offsets();
        let n = *off.last().unwrap();
        let mut m = zeros(n, n);
        let l = self.letters();
        for a in 0..l {
            for b in 0..l {
                if cancels(b, a) {
                    continue;
                }
                let h = self.h(b, a);
                // vec(H^H t H) = (H^T ⊗ H^H) vec(t)
                let blk = h.transpose().kronecker(&h.adjoint());
                let mut view = m.view_mut((off[a], off[b]), (blk.nrows(), blk.ncols()));
                view += &blk;
            }
        }
        m
    }

    pub fn transfer_spectrum(&self) -> Result<Vec<C<T>>> {
        eigenvalues(&self.transfer_matrix())
    }

    /// Spectral radius of the transfer operator.
    pub fn spectral_radius_t(&self) -> Result<T> {
        if self.h.iter().all(|m| m.iter().all(|z| *z == czero())) {
            return Err(Error::Degenerate);
        }
        let ev = self.transfer_spectrum()?;
        Ok(ev.iter().map(|z| crate::scalar::cabs(*z)).fold(T::zero(), |a, b| a.max(b)))
    }

    /// Path-span (density) test: for every pair `(a, b)` the span of all
    /// path products `V_a -> V_b` (identity included when `a = b`) must be
    /// the whole space of maps.
    pub fn irreducibility(&self) -> Irreducibility {
        let l = self.letters();
        let rel: T = lit(1e-9);
        let mut spans: Vec<OrthoBasis<T>> = Vec::with_capacity(l * l);
        let mut mats: Vec<Vec<CMat<T>>> = Vec::with_capacity(l * l);
        for b in 0..l {
            for a in 0..l {
                let mut ob = OrthoBasis::new(rel);
                let mut ms = Vec::new();
                if a == b {
                    let i = eye::<T>(self.dims[a]);
                    ob.push(&vec_of(&i));
                    ms.push(i);
                }
                spans.push(ob);
                mats.push(ms);
            }
        }
        let full = |b: usize, a: usize| self.dims[b] * self.dims[a];
        let l_max: usize = self.dims.iter().map(|n| n * n).sum::<usize>() + l;
        for _round in 0..l_max {
            let mut grew = false;
            for b in 0..l {
                for a in 0..l {
                    if spans[b * l + a].dim() == full(b, a) {
                        continue;
                    }
                    let mut new_mats = Vec::new();
                    for c in 0..l {
                        if cancels(b, c) {
                            continue;
                        }
                        let h = self.h(b, c);
                        for m in &mats[c * l + a] {
                            let p = h * m;
                            if spans[b * l + a].push(&vec_of(&p)) {
                                new_mats.push(p);
                                grew = true;
                            }
                        }
                    }
                    mats[b * l + a].extend(new_mats);
                }
            }
            if !grew {
                let all_full = (0..l).all(|b| (0..l).all(|a| spans[b * l + a].dim() == full(b, a)));
                return if all_full {
                    Irreducibility::Irreducible
                } else {
                    Irreducibility::Reducible
                };
            }
        }
        Irreducibility::Undecided
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducibility() == Irreducibility::Irreducible
    }

    /// Scales to transfer radius one and computes the positive fixed tuple.
    pub fn normalize(&self) -> Result<NormalizedSystem<T>> {
        self.normalize_with(&Tolerances::for_scalar::<T>())
    }

    pub fn normalize_with(&self, tol: &Tolerances) -> Result<NormalizedSystem<T>> {
        let spectrum = self.transfer_spectrum()?;
        let rho = spectrum
            .iter()
            .map(|z| crate::scalar::cabs(*z))
            .fold(T::zero(), |a, b| a.max(b));
        if rho == T::zero() {
            return Err(Error::Degenerate);
        }
        let near_one = spectrum
            .iter()
            .filter(|z| crate::scalar::cabs(**z / C::new(rho, T::zero()) - C::new(T::one(), T::zero())) < lit(1e-6))
            .count();
        if near_one != 1 {
            return Err(Error::NotSimple(near_one));
        }
        let sys = self.scaled(T::one() / rho.sqrt());
        let (b, method, iterations) = sys.fixed_tuple(tol)?;
        let total_dim: usize = sys.dims.iter().sum();
        let b = sys.refine_fixed_tuple(normalize_trace(b, total_dim))?;
        let bnorm = tuple_norm(&b);
        let min_ev = b
            .iter()
            .map(|m| hermitian_eigenvalues(m)[0])
            .fold(T::max_value().unwrap_or(lit(f64::MAX)), |x, y| x.min(y));
        if min_ev <= lit::<T>(tol.pd) * bnorm {
            return Err(Error::NotPositiveDefinite(crate::scalar::to_f64(min_ev / bnorm)));
        }
        let residual = compatibility_residual(&sys, &b)?;
        if residual > lit(tol.fix) {
            return Err(Error::Numerical(format!(
                "fixed-point residual {:.3e} above tolerance",
                crate::scalar::to_f64(residual)
            )));
        }
        let rho_certificate = sys.spectral_radius_t()?;
        let irreducible = sys.is_irreducible();
        Ok(NormalizedSystem {
            system: sys,
            forms: b,
            rho_certificate,
            original_rho: rho,
            irreducible,
            method,
            iterations,
        })
    }

    /// Fixed point of `T` (assumed to have radius one): lazy power
    /// iteration from the identity tuple with a geometric (Aitken-type)
    /// extrapolation step, falling back to a direct nullspace solve.
    fn fixed_tuple(&self, tol: &Tolerances) -> Result<(Tuple<T>, FixedPointMethod, usize)> {
        let total_dim: usize = self.dims.iter().sum();
        let half = C::new(lit::<T>(0.5), T::zero());
        let target: T = lit(tol.fix * 0.05);
        let mut x: Tuple<T> = self.dims.iter().map(|&n| eye(n)).collect();
        let mut prev_step: Option<T> = None;
        let mut prev_x: Option<Tuple<T>> = None;
        for it in 1..=10_000usize {
            let tx = self.transfer_apply(&x)?;
            let next: Tuple<T> = x
                .iter()
                .zip(&tx)
                .map(|(a, b)| herm_part(&((a + b) * half)))
                .collect();
            let next = normalize_trace(next, total_dim);
            let step = tuple_dist(&next, &x);
            if compatibility_residual(self, &next)? <= target {
                return Ok((next, FixedPointMethod::PowerIteration, it));
            }
            if let (Some(ps), Some(_)) = (prev_step, prev_x.as_ref()) {
                let r = step / ps;
                if it % 8 == 0 && r < lit(0.999) && r > T::zero() {
                    let f = C::new(r / (T::one() - r), T::zero());
                    let extra: Tuple<T> = next
                        .iter()
                        .zip(&x)
                        .map(|(n, o)| herm_part(&(n + (n - o) * f)))
                        .collect();
                    let extra = normalize_trace(extra, total_dim);
                    let res_e = compatibility_residual(self, &extra)?;
                    if res_e <= target {
                        return Ok((extra, FixedPointMethod::Extrapolated, it));
                    }
                    if res_e < compatibility_residual(self, &next)? {
                        prev_x = Some(x);
                        x = extra;
                        prev_step = Some(step);
                        continue;
                    }
                }
            }
            prev_step = Some(step);
            prev_x = Some(x);
            x = next;
        }
        Ok((self.direct_fixed_tuple(tol)?, FixedPointMethod::DirectSolve, 10_000))
    }

    /// Iterative refinement: least-squares corrections `(T − I)δ = x − T x`,
    /// kept while they reduce the residual.
    fn refine_fixed_tuple(&self, mut x: Tuple<T>) -> Result<Tuple<T>> {
        let total_dim: usize = self.dims.iter().sum();
        let n = self.tuple_offsets().last().copied().unwrap();
        let m = self.transfer_matrix() - eye::<T>(n);
        let mut res = compatibility_residual(self, &x)?;
        for _ in 0..3 {
            let tx = self.transfer_apply(&x)?;
            let r: Vec<C<T>> = x
                .iter()
                .zip(&tx)
                .flat_map(|(a, b)| vec_of(&(a - b)).iter().copied().collect::<Vec<_>>())
                .collect();
            let delta = lstsq(&m, &CVec::from_vec(r), lit(1e-13))?;
            let d = self.unvec_tuple_raw(&delta);
            let cand: Tuple<T> = x.iter().zip(&d).map(|(a, b)| herm_part(&(a + b))).collect();
            let cand = normalize_trace(cand, total_dim);
            let cres = compatibility_residual(self, &cand)?;
            if cres >= res {
                break;
            }
            x = cand;
            res = cres;
        }
        Ok(x)
    }

    fn unvec_tuple_raw(&self, v: &CVec<T>) -> Tuple<T> {
        let off = self.tuple_offsets();
        (0..self.letters())
            .map(|a| unvec(&v.as_slice()[off[a]..off[a + 1]], self.dims[a], self.dims[a]))
            .collect()
    }

    fn direct_fixed_tuple(&self, tol: &Tolerances) -> Result<Tuple<T>> {
        let m = self.transfer_matrix() - eye::<T>(self.tuple_offsets().last().copied().unwrap());
        let (basis, _) = nullspace(&m, lit(tol.null_rel));
        let v = basis
            .first()
            .ok_or_else(|| Error::Numerical("transfer operator has no fixed vector".into()))?;
        Ok(self.unvec_tuple(v))
    }

    fn unvec_tuple(&self, v: &CVec<T>) -> Tuple<T> {
        let off = self.tuple_offsets();
        let mut t: Tuple<T> = (0..self.letters())
            .map(|a| unvec(&v.as_slice()[off[a]..off[a + 1]], self.dims[a], self.dims[a]))
            .collect();
        let tr: C<T> = t.iter().map(|m| m.trace()).fold(czero(), |p, q| p + q);
        if crate::scalar::cabs(tr) > T::zero() {
            let phase = tr.conj() / C::new(crate::scalar::cabs(tr), T::zero());
            for m in t.iter_mut() {
                *m = herm_part(&(&*m * phase));
            }
        }
        t
    }
}

/// How the fixed tuple was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixedPointMethod {
    PowerIteration,
    Extrapolated,
    DirectSolve,
}

/// A system scaled to transfer radius one with its positive fixed tuple.
#[derive(Clone, Debug)]
pub struct NormalizedSystem<T: Real> {
    pub system: MatrixSystem<T>,
    /// `B_a`, normalized so that `Σ tr B_a = Σ n_a`.
    pub forms: Tuple<T>,
    /// Transfer spectral radius of the scaled system (≈ 1).
    pub rho_certificate: T,
    /// Transfer spectral radius of the input before scaling.
    pub original_rho: T,
    pub irreducible: bool,
    pub method: FixedPointMethod,
    pub iterations: usize,
}

impl<T: Real> NormalizedSystem<T> {
    pub fn h(&self, b: Letter, a: Letter) -> &CMat<T> {
        self.system.h(b, a)
    }

    pub fn b(&self, a: Letter) -> &CMat<T> {
        &self.forms[a]
    }

    pub fn dims(&self) -> &[usize] {
        self.system.dims()
    }

    pub fn letters(&self) -> usize {
        self.system.letters()
    }

    pub fn alphabet(&self) -> &Alphabet {
        self.system.alphabet()
    }

    pub fn compatibility_residual(&self) -> T {
        compatibility_residual(&self.system, &self.forms).unwrap_or(T::max_value().unwrap())
    }

    /// Same system with the forms multiplied by a positive scalar.
    pub fn with_form_scale(&self, s: T) -> Self {
        let mut out = self.clone();
        let f = C::new(s, T::zero());
        for m in out.forms.iter_mut() {
            *m *= f;
        }
        out
    }

    /// `B_a`-norm of `v ∈ V_a`.
    pub fn form_norm(&self, a: Letter, v: &CVec<T>) -> T {
        v.dotc(&(&self.forms[a] * v)).re.max(T::zero()).sqrt()
    }
}

/// `max_a ‖B_a − (TB)_a‖ / ‖B‖`.
pub fn compatibility_residual<T: Real>(sys: &MatrixSystem<T>, b: &[CMat<T>]) -> Result<T> {
    let tb = sys.transfer_apply(b)?;
    let scale = tuple_norm(b);
    if scale == T::zero() {
        return Ok(T::zero());
    }
    Ok(crate::scalar::max_diff(b, &tb) / scale)
}

fn tuple_dist<T: Real>(a: &[CMat<T>], b: &[CMat<T>]) -> T {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_squared())
        .fold(T::zero(), |p, q| p + q)
        .sqrt()
}

fn normalize_trace<T: Real>(t: Tuple<T>, total_dim: usize) -> Tuple<T> {
    let tr: T = t.iter().map(|m| m.trace().re).fold(T::zero(), |p, q| p + q);
    if tr == T::zero() {
        return t;
    }
    let f = C::new(lit::<T>(total_dim as f64) / tr, T::zero());
    t.into_iter().map(|m| m * f).collect()
}

/// Letter indices grouped into inverse pairs `(a, a^{-1})` with `a` a generator.
pub fn letter_pairs(al: &Alphabet) -> Vec<(Letter, Letter)> {
    al.generators().map(|a| (a, inv(a))).collect()
}
