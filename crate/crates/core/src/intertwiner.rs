//! The intertwiner `J` from a representation to its twin, its closed-form
//! inverse, the unitarity identities, the general family of intertwiners,
//! the splitting of the equivalent case and the finite-rank check.

use crate::coefficients::{canonicalize_block, translate_columns, EdgeBasis};
use crate::error::{Error, Result};
use crate::free_group::{inv, Letter, Word};
use crate::linalg::{eigenvalues, inverse, psd_power, singular_values, OrthoBasis};
use crate::scalar::{cabs, ci, cone, creal, czero, eye, fnorm, lit, max_norm, to_f64, zeros, CMat, Real, C};
use crate::spectral::SpectralReport;
use crate::system::{NormalizedSystem, Tuple};
use crate::tolerances::Tolerances;
use crate::twin::{e_maps, TwinPackage};

/// Operator on multiplicative functions given edgewise:
/// `μ[x, x·a, v] ↦ ν[x, x·a, X_a v] + ν[x·a, x, Y_a v]`.
///
/// `X_a : V_a → W_a` and `Y_a : V_a → W_{a^{-1}}`, where `W` is the target
/// system. On the pair `{a, a^{-1}}` it acts by the block matrix
/// `[[X_a, Y_{a^{-1}}], [Y_a, X_{a^{-1}}]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeOperator<T: Real> {
    pub x: Tuple<T>,
    pub y: Tuple<T>,
}

impl<T: Real> EdgeOperator<T> {
    pub fn identity(dims: &[usize]) -> Self {
        Self {
            x: dims.iter().map(|&n| eye(n)).collect(),
            y: (0..dims.len()).map(|a| zeros(dims[inv(a)], dims[a])).collect(),
        }
    }

    /// Pure relabelling `μ[x, x·a, v] ↦ ν[x, x·a, X_a v]`.
    pub fn diagonal(x: Tuple<T>) -> Self {
        let y = (0..x.len()).map(|a| zeros(x[inv(a)].nrows(), x[a].ncols())).collect();
        Self { x, y }
    }

    pub fn letters(&self) -> usize {
        self.x.len()
    }

    /// Block matrix on `V_a ⊕ V_{a^{-1}}` for the pair of `a`.
    pub fn pair_block(&self, a: Letter) -> CMat<T> {
        let b = inv(a);
        let (ra, rb) = (self.x[a].nrows(), self.x[b].nrows());
        let (ca, cb) = (self.x[a].ncols(), self.x[b].ncols());
        let mut m = zeros(ra + rb, ca + cb);
        m.view_mut((0, 0), (ra, ca)).copy_from(&self.x[a]);
        m.view_mut((0, ca), (ra, cb)).copy_from(&self.y[b]);
        m.view_mut((ra, 0), (rb, ca)).copy_from(&self.y[a]);
        m.view_mut((ra, ca), (rb, cb)).copy_from(&self.x[b]);
        m
    }

    /// `self ∘ first`.
    pub fn after(&self, first: &Self) -> Self {
        let l = self.letters();
        let x = (0..l)
            .map(|a| &self.x[a] * &first.x[a] + &self.y[inv(a)] * &first.y[a])
            .collect();
        let y = (0..l)
            .map(|a| &self.y[a] * &first.x[a] + &self.x[inv(a)] * &first.y[a])
            .collect();
        Self { x, y }
    }

    pub fn scaled(&self, s: C<T>) -> Self {
        Self {
            x: self.x.iter().map(|m| m * s).collect(),
            y: self.y.iter().map(|m| m * s).collect(),
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self {
            x: self.x.iter().zip(&other.x).map(|(p, q)| p + q).collect(),
            y: self.y.iter().zip(&other.y).map(|(p, q)| p + q).collect(),
        }
    }

    /// Largest per-pair block distance.
    pub fn distance(&self, other: &Self) -> T {
        (0..self.letters())
            .filter(|a| a % 2 == 0)
            .map(|a| fnorm(&(self.pair_block(a) - other.pair_block(a))))
            .fold(T::zero(), |p, q| p.max(q))
    }

    /// Matrix `W_N → W_N` (target coordinates), canonicalized in `target`.
    pub fn w_matrix(
        &self,
        target: &NormalizedSystem<T>,
        from: &EdgeBasis,
        to: &EdgeBasis,
        within: Option<&Word>,
    ) -> Result<CMat<T>> {
        self.apply_columns(target, from, &eye(from.dim()), to, within)
    }

    /// The operator applied to each column of `m` (coordinates in `from`).
    pub fn apply_columns(
        &self,
        target: &NormalizedSystem<T>,
        from: &EdgeBasis,
        m: &CMat<T>,
        to: &EdgeBasis,
        within: Option<&Word>,
    ) -> Result<CMat<T>> {
        let mut terms = Vec::with_capacity(2 * from.keys.len());
        for (i, k) in from.keys.iter().enumerate() {
            let a = k.last().unwrap();
            let rows = from.rows(i, m);
            if rows.iter().all(|z| *z == czero()) {
                continue;
            }
            terms.push((k.parent(), a, &self.x[a] * &rows));
            terms.push((k.clone(), inv(a), &self.y[a] * &rows));
        }
        let blocks = canonicalize_block(target, terms, from.depth, within)?;
        to.assemble(&blocks, m.ncols())
    }
}

/// Unitarity identities linking `(Q, B)` and `(Q̂, B̂)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InverseRelations<T: Real> {
    /// `Q̂_a Q_a + B̂_{a^{-1}} B_a = I`.
    pub left_inverse: T,
    /// `B̂_a Q_a = −Q̂_{a^{-1}} B_a`.
    pub cross: T,
    /// `Q_{a^{-1}} B̂_a = −B_a Q̂_a`.
    pub cross_adjoint: T,
}

impl<T: Real> InverseRelations<T> {
    pub fn max(&self) -> T {
        self.left_inverse.max(self.cross).max(self.cross_adjoint)
    }
}

/// The intertwiner of a class AI or BI system with its twin.
#[derive(Clone, Debug)]
pub struct Intertwiner<T: Real> {
    /// Package with the twin forms rescaled to the closed-form inverse.
    pub package: TwinPackage<T>,
    pub q: Tuple<T>,
    pub q_hat: Tuple<T>,
    /// Factor applied to the twin forms.
    pub twin_form_scale: T,
    /// `max_a ‖t B̂_a − (B_{a^{-1}} + Q_a B_a^{-1} Q_a^*)^{-1}‖ / ‖B̂‖` after the fit.
    pub form_fit_residual: T,
    pub op: EdgeOperator<T>,
    /// Closed-form inverse, from the twin back to the original system.
    pub inverse: EdgeOperator<T>,
    /// Largest relative distance between closed-form and numeric pair inverses.
    pub inverse_residual: T,
    pub relations: InverseRelations<T>,
}

fn j_operator<T: Real>(q: &[CMat<T>], b: &[CMat<T>], lambda: T) -> EdgeOperator<T> {
    let s = creal(lambda);
    EdgeOperator {
        x: q.iter().map(|m| m * (-s)).collect(),
        y: b.iter().map(|m| m * s).collect(),
    }
}

/// Assembles `J` and its inverse from a classification with a `Q` tuple.
pub fn build_j<T: Real>(report: &SpectralReport<T>, tol: &Tolerances) -> Result<Intertwiner<T>> {
    let q = report
        .q
        .as_ref()
        .ok_or_else(|| Error::Missing("no Q tuple: the class has no intertwiner with the twin".into()))?
        .q
        .clone();
    let pkg0 = &report.package;
    let orig = &pkg0.original;
    let l = orig.letters();
    let b_inv: Tuple<T> = (0..l).map(|a| inverse(orig.b(a))).collect::<Result<_>>()?;
    let closed: Tuple<T> = (0..l)
        .map(|a| inverse(&(orig.b(inv(a)) + &q[a] * &b_inv[a] * q[a].adjoint())))
        .collect::<Result<_>>()?;
    let num: T = (0..l)
        .map(|a| pkg0.twin.b(a).dotc(&closed[a]).re)
        .fold(T::zero(), |p, r| p + r);
    let den: T = (0..l)
        .map(|a| pkg0.twin.b(a).norm_squared())
        .fold(T::zero(), |p, r| p + r);
    if num <= T::zero() {
        return Err(Error::Numerical("closed-form twin forms are not aligned with the twin forms".into()));
    }
    let t = num / den;
    let package = pkg0.with_twin_form_scale(t, tol)?;
    let tw = &package.twin;
    let form_fit_residual = (0..l)
        .map(|a| fnorm(&(tw.b(a) - &closed[a])))
        .fold(T::zero(), |p, r| p.max(r))
        / max_norm(&closed);
    let q_hat: Tuple<T> = (0..l).map(|a| &b_inv[a] * q[a].adjoint() * tw.b(a)).collect();
    let op = j_operator(&q, &orig.forms, T::one());
    let inverse_op = j_operator(&q_hat, &tw.forms, T::one());
    let mut inverse_residual = T::zero();
    for a in (0..l).filter(|a| a % 2 == 0) {
        let numeric = inverse(&op.pair_block(a))?;
        let closed_block = inverse_op.pair_block(a);
        let r = fnorm(&(&numeric - &closed_block)) / fnorm(&numeric);
        inverse_residual = inverse_residual.max(r);
    }
    let relations = inverse_relations(&q, &q_hat, orig, tw);
    Ok(Intertwiner {
        package,
        q,
        q_hat,
        twin_form_scale: t,
        form_fit_residual,
        op,
        inverse: inverse_op,
        inverse_residual,
        relations,
    })
}

/// Residuals of the three identities, each relative to the largest term.
pub fn inverse_relations<T: Real>(
    q: &[CMat<T>],
    q_hat: &[CMat<T>],
    orig: &NormalizedSystem<T>,
    tw: &NormalizedSystem<T>,
) -> InverseRelations<T> {
    let l = q.len();
    let mut r = InverseRelations {
        left_inverse: T::zero(),
        cross: T::zero(),
        cross_adjoint: T::zero(),
    };
    for a in 0..l {
        let b = inv(a);
        let id = eye::<T>(q[a].ncols());
        r.left_inverse = r
            .left_inverse
            .max(fnorm(&(&q_hat[a] * &q[a] + tw.b(b) * orig.b(a) - &id)));
        let lhs = tw.b(a) * &q[a];
        let rhs = &q_hat[b] * orig.b(a);
        r.cross = r.cross.max(fnorm(&(&lhs + &rhs)) / fnorm(&lhs).max(fnorm(&rhs)).max(lit(1e-300)));
        let lhs = &q[b] * tw.b(a);
        let rhs = orig.b(a) * &q_hat[a];
        r.cross_adjoint = r
            .cross_adjoint
            .max(fnorm(&(&lhs + &rhs)) / fnorm(&lhs).max(fnorm(&rhs)).max(lit(1e-300)));
    }
    r
}

/// Residuals of `J` on the finite-dimensional spaces `W_N`.
#[derive(Clone, Debug, PartialEq)]
pub struct WReport<T: Real> {
    pub depth: usize,
    /// `‖M^* Ĝ M − G‖ / ‖G‖` for the matrix `M` of `J` on `W_N`.
    pub isometry: T,
    /// `tr(M^* Ĝ M) / tr(G)`.
    pub scale: T,
    /// Largest `‖J π(y) f − π̂(y) J f‖ / ‖f‖` over generators and basis vectors.
    pub intertwining: T,
    /// Same quantity for deepening by one level (well-definedness).
    pub deepening: T,
}

/// Largest number of dense matrix entries a `W_N` check may allocate.
pub const W_ENTRY_BUDGET: usize = 1 << 24;

fn guard(cols: usize, rows: usize) -> Result<()> {
    if cols.saturating_mul(rows) > W_ENTRY_BUDGET {
        return Err(Error::Budget(format!(
            "a {rows}x{cols} operator matrix exceeds the memory budget"
        )));
    }
    Ok(())
}

/// Largest `‖d_j‖ / ‖e_j‖` over the columns of `diff`, in form norms.
fn column_residual<T: Real>(
    out_basis: &EdgeBasis,
    out_sys: &NormalizedSystem<T>,
    in_norms: &[T],
    diff: &CMat<T>,
) -> T {
    out_basis
        .column_norms(out_sys, diff)
        .into_iter()
        .zip(in_norms)
        .map(|(d, n)| d / *n)
        .fold(T::zero(), |p, q| p.max(q))
}

/// Checks that an edge operator from `src` to `dst` is well defined on `W_N`
/// and commutes with all generators; returns the isometry data as well.
pub fn check_operator<T: Real>(
    op: &EdgeOperator<T>,
    src: &NormalizedSystem<T>,
    dst: &NormalizedSystem<T>,
    depth: usize,
) -> Result<WReport<T>> {
    let al = src.alphabet();
    let w_in = EdgeBasis::new(al, src.dims(), depth, None);
    let w_out = EdgeBasis::new(al, dst.dims(), depth, None);
    let w_in1 = EdgeBasis::new(al, src.dims(), depth + 1, None);
    let w_out1 = EdgeBasis::new(al, dst.dims(), depth + 1, None);
    guard(w_in.dim(), w_out1.dim())?;
    let m = op.w_matrix(dst, &w_in, &w_out, None)?;
    let g = w_in.gram(src);
    let pulled = m.adjoint() * w_out.weight_rows(dst, &m, |b| b.clone());
    let isometry = fnorm(&(&pulled - &g)) / fnorm(&g);
    let scale = pulled.trace().re / g.trace().re;
    let in_norms: Vec<T> = (0..g.nrows()).map(|j| g[(j, j)].re.sqrt()).collect();
    let id = eye::<T>(w_in.dim());
    let mut intertwining = T::zero();
    for y in al.letters() {
        let yw = Word::letter(y);
        let moved = translate_columns(src, &yw, &w_in, &id, &w_in1)?;
        let lhs = op.apply_columns(dst, &w_in1, &moved, &w_out1, None)?;
        let rhs = translate_columns(dst, &yw, &w_out, &m, &w_out1)?;
        intertwining = intertwining.max(column_residual(&w_out1, dst, &in_norms, &(lhs - rhs)));
    }
    let e = Word::identity();
    let deeper = translate_columns(src, &e, &w_in, &id, &w_in1)?;
    let lhs = op.apply_columns(dst, &w_in1, &deeper, &w_out1, None)?;
    let rhs = translate_columns(dst, &e, &w_out, &m, &w_out1)?;
    let deepening = column_residual(&w_out1, dst, &in_norms, &(lhs - rhs));
    Ok(WReport {
        depth,
        isometry,
        scale,
        intertwining,
        deepening,
    })
}

impl<T: Real> Intertwiner<T> {
    pub fn original(&self) -> &NormalizedSystem<T> {
        &self.package.original
    }

    pub fn twin(&self) -> &NormalizedSystem<T> {
        &self.package.twin
    }

    /// Isometry and intertwining of `J` on `W_N`.
    pub fn verify_w(&self, depth: usize) -> Result<WReport<T>> {
        check_operator(&self.op, self.original(), self.twin(), depth)
    }

    /// `Ê_ab = Σ_{c ≠ a, b^{-1}} H_{a c^{-1}} B̂_c Ĥ_cb`, at index `a * 2k + b`.
    pub fn e_hat(&self) -> Vec<CMat<T>> {
        e_maps(self.twin(), self.original())
    }

    /// Largest residual of the telescoped identity
    /// `H_w Q̂_{a_1} − Q̂_{a_{n+1}} Ĥ_w + Σ_j H_{..} Ê_{a_{j+1} a_j} Ĥ_{..} = 0`
    /// over reduced words `a_1 … a_{n+1}` of length `2..=max_len`.
    pub fn fin_residual(&self, max_len: usize) -> T {
        let orig = self.original();
        let tw = self.twin();
        let l = orig.letters();
        let eh = self.e_hat();
        let mut worst = T::zero();
        for len in 2..=max_len.max(2) {
            for w in orig.alphabet().sphere(len) {
                let s = w.letters();
                let steps = len - 1;
                let h_chain = |from: usize, to: usize| -> CMat<T> {
                    // H_{s[to] s[to-1]} ⋯ H_{s[from+1] s[from]}
                    let mut m = eye::<T>(orig.dims()[s[from]]);
                    for j in from..to {
                        m = orig.h(s[j + 1], s[j]) * m;
                    }
                    m
                };
                let hh_chain = |from: usize, to: usize| -> CMat<T> {
                    let mut m = eye::<T>(tw.dims()[s[from]]);
                    for j in from..to {
                        m = tw.h(s[j + 1], s[j]) * m;
                    }
                    m
                };
                let mut acc = h_chain(0, steps) * &self.q_hat[s[0]] - &self.q_hat[s[steps]] * hh_chain(0, steps);
                for j in 0..steps {
                    acc += h_chain(j + 1, steps) * &eh[s[j + 1] * l + s[j]] * hh_chain(0, j);
                }
                worst = worst.max(fnorm(&acc));
            }
        }
        worst
    }

    /// Member `λ·J + i c·𝒦` of the intertwiner family, with its intertwining
    /// residual on `W_2`. `c ≠ 0` needs the equivalence `K`.
    pub fn family_member(&self, lambda: T, c: T) -> Result<(EdgeOperator<T>, T)> {
        if lambda <= T::zero() {
            return Err(Error::Rejected("λ must be positive".into()));
        }
        let mut op = j_operator(&self.q, &self.original().forms, lambda);
        if c != T::zero() {
            let k = self.package.k.as_ref().ok_or_else(|| {
                Error::Rejected("twins are inequivalent: Y_a must be λB_a and c must vanish".into())
            })?;
            op = op.plus(&EdgeOperator::diagonal(k.k.clone()).scaled(ci::<T>() * creal(c)));
        }
        let r = check_operator(&op, self.original(), self.twin(), 2)?;
        Ok((op, r.intertwining))
    }

    /// Splits the equivalent case into the two eigenspaces of `𝒥`.
    pub fn split(&self, tol: &Tolerances) -> Result<SplitReport<T>> {
        split(self, tol)
    }
}

/// Data of the splitting `π = π_+ ⊕ π_-`.
#[derive(Clone, Debug)]
pub struct SplitReport<T: Real> {
    pub c: T,
    /// Imaginary part of `i(λ_+ + λ_-)`, which must vanish.
    pub c_imag: T,
    pub lambda_plus: C<T>,
    pub lambda_minus: C<T>,
    /// Largest spread of an eigenvalue cluster around its mean.
    pub cluster_spread: T,
    /// `max ||λ_±| − 1|`.
    pub unimodularity: T,
    /// `|λ_+ λ_- + 1|`.
    pub vieta: T,
    /// Largest `‖M² + icM − I‖` over pairs, `M = 𝒦^{-1} J`.
    pub quadratic: T,
    /// Fitted `λ` in `J^{-1} = λ 𝒦^{-1} J 𝒦^{-1} + ic 𝒦^{-1}` and its residual.
    pub lambda_fit: T,
    pub lambda_fit_residual: T,
    pub p_plus: EdgeOperator<T>,
    pub p_minus: EdgeOperator<T>,
    /// Ranks of `P_±` summed over the pair blocks.
    pub rank_plus: usize,
    pub rank_minus: usize,
    pub pair_dim: usize,
    pub idempotency: T,
    pub orthogonality: T,
    pub completeness: T,
    /// `‖G P − P^* G‖ / ‖G‖` on `W_2`.
    pub self_adjointness: T,
    /// Largest `‖P_± π(y) f − π(y) P_± f‖ / ‖f‖` on `W_2`.
    pub commutation: T,
}

fn split<T: Real>(j: &Intertwiner<T>, tol: &Tolerances) -> Result<SplitReport<T>> {
    let k = j
        .package
        .k
        .as_ref()
        .ok_or_else(|| Error::Missing("splitting needs the equivalence K".into()))?;
    let orig = j.original();
    let l = orig.letters();
    let k_op = EdgeOperator::diagonal(k.k.clone());
    let k_inv: Tuple<T> = k.k.iter().map(inverse).collect::<Result<_>>()?;
    let k_inv_op = EdgeOperator::diagonal(k_inv);
    let m = k_inv_op.after(&j.op);
    let pairs: Vec<Letter> = (0..l).filter(|a| a % 2 == 0).collect();
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for &a in &pairs {
        for z in eigenvalues(&m.pair_block(a))? {
            if z.re > T::zero() {
                plus.push(z);
            } else {
                minus.push(z);
            }
        }
    }
    if plus.is_empty() || minus.is_empty() {
        return Err(Error::Numerical(
            "the pair blocks of K^-1 J do not have two eigenvalue clusters".into(),
        ));
    }
    let mean = |v: &[C<T>]| v.iter().fold(czero::<T>(), |p, q| p + q) / creal(lit::<T>(v.len() as f64));
    let (lp, lm) = (mean(&plus), mean(&minus));
    let cluster_spread = plus
        .iter()
        .map(|z| cabs(*z - lp))
        .chain(minus.iter().map(|z| cabs(*z - lm)))
        .fold(T::zero(), |p, q| p.max(q));
    let cz = ci::<T>() * (lp + lm);
    let c = cz.re;
    if c.abs() >= lit(2.0) {
        return Err(Error::Numerical(format!("|c| = {} is not below 2", to_f64(c.abs()))));
    }
    let unimodularity = (cabs(lp) - T::one()).abs().max((cabs(lm) - T::one()).abs());
    let vieta = cabs(lp * lm + cone());
    let icm = ci::<T>() * creal(c);
    let mut quadratic = T::zero();
    for &a in &pairs {
        let mb = m.pair_block(a);
        let id = eye::<T>(mb.nrows());
        quadratic = quadratic.max(fnorm(&(&mb * &mb + &mb * icm - id)));
    }
    // J^{-1} against 𝒦^{-1} J 𝒦^{-1}, per pair.
    let kjk = k_inv_op.after(&j.op).after(&k_inv_op);
    let (mut num, mut den) = (czero::<T>(), T::zero());
    for &a in &pairs {
        let target = j.inverse.pair_block(a) - k_inv_op.pair_block(a) * icm;
        let basis = kjk.pair_block(a);
        num += basis.dotc(&target);
        den += basis.norm_squared();
    }
    let lambda_fit = (num / creal(den)).re;
    let mut lambda_fit_residual = T::zero();
    for &a in &pairs {
        let lhs = j.inverse.pair_block(a);
        let rhs = kjk.pair_block(a) * creal(lambda_fit) + k_inv_op.pair_block(a) * icm;
        lambda_fit_residual = lambda_fit_residual.max(fnorm(&(&lhs - &rhs)) / fnorm(&lhs));
    }
    // J̃ = (2/√(4−c²))(J + (ic/2)𝒦) squares to the identity after 𝒦^{-1}.
    let s = lit::<T>(2.0) / (lit::<T>(4.0) - c * c).sqrt();
    let j_tilde = j.op.plus(&k_op.scaled(icm * creal(lit(0.5)))).scaled(creal(s));
    let jj = k_inv_op.after(&j_tilde);
    let id = EdgeOperator::identity(orig.dims());
    let half = creal(lit::<T>(0.5));
    let p_plus = id.plus(&jj).scaled(half);
    let p_minus = id.plus(&jj.scaled(-cone::<T>())).scaled(half);
    let (mut idempotency, mut orthogonality, mut completeness) = (T::zero(), T::zero(), T::zero());
    let (mut rank_plus, mut rank_minus, mut pair_dim) = (0, 0, 0);
    let rel = lit::<T>(tol.null_rel);
    for &a in &pairs {
        let pp = p_plus.pair_block(a);
        let pm = p_minus.pair_block(a);
        let n = pp.nrows();
        pair_dim += n;
        idempotency = idempotency
            .max(fnorm(&(&pp * &pp - &pp)))
            .max(fnorm(&(&pm * &pm - &pm)));
        orthogonality = orthogonality.max(fnorm(&(&pp * &pm))).max(fnorm(&(&pm * &pp)));
        completeness = completeness.max(fnorm(&(&pp + &pm - eye::<T>(n))));
        rank_plus += crate::linalg::numeric_rank(&pp, rel);
        rank_minus += crate::linalg::numeric_rank(&pm, rel);
    }
    let w = check_operator(&p_plus, orig, orig, 2)?;
    let wm = check_operator(&p_minus, orig, orig, 2)?;
    let al = orig.alphabet();
    let b2 = EdgeBasis::new(al, orig.dims(), 2, None);
    let g = b2.gram(orig);
    let mp = p_plus.w_matrix(orig, &b2, &b2, None)?;
    let self_adjointness = fnorm(&(&g * &mp - mp.adjoint() * &g)) / fnorm(&g);
    Ok(SplitReport {
        c,
        c_imag: cz.im,
        lambda_plus: lp,
        lambda_minus: lm,
        cluster_spread,
        unimodularity,
        vieta,
        quadratic,
        lambda_fit,
        lambda_fit_residual,
        p_plus,
        p_minus,
        rank_plus,
        rank_minus,
        pair_dim,
        idempotency,
        orthogonality,
        completeness,
        self_adjointness,
        commutation: w.intertwining.max(wm.intertwining),
    })
}

/// Numeric rank of `π̂(1_b) J π(1_a)` on `W_n` for a range of depths.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteRankProfile {
    pub a: Letter,
    pub b: Letter,
    /// `(n, rank)` for each depth.
    pub ranks: Vec<(usize, usize)>,
    /// Hilbert–Schmidt norm per depth.
    pub hs_norms: Vec<f64>,
    /// Leading singular values per depth.
    pub singular_values: Vec<Vec<f64>>,
    /// `dim V̂_b`.
    pub bound: usize,
}

impl FiniteRankProfile {
    pub fn constant(&self) -> bool {
        self.ranks.windows(2).all(|w| w[0].1 == w[1].1)
    }

    pub fn within_bound(&self) -> bool {
        self.ranks.iter().all(|&(_, r)| r <= self.bound)
    }
}

/// Absolute singular-value cutoff for the rank of the restricted operator;
/// `J` is isometric so all singular values are at most one.
pub const FINITE_RANK_CUTOFF: f64 = 1e-8;

pub fn finite_rank_check<T: Real>(
    j: &Intertwiner<T>,
    a: Letter,
    b: Letter,
    depths: std::ops::RangeInclusive<usize>,
) -> Result<FiniteRankProfile> {
    if a == b {
        return Err(Error::Rejected("finite-rank check needs two distinct letters".into()));
    }
    let orig = j.original();
    let tw = j.twin();
    let (ca, cb) = (Word::letter(a), Word::letter(b));
    let mut ranks = Vec::new();
    let mut hs_norms = Vec::new();
    let mut svs = Vec::new();
    for n in depths {
        let from = EdgeBasis::new(orig.alphabet(), orig.dims(), n, Some(&ca));
        let to = EdgeBasis::new(tw.alphabet(), tw.dims(), n, Some(&cb));
        guard(from.dim(), to.dim())?;
        let m = j.op.w_matrix(tw, &from, &to, Some(&cb))?;
        // Orthonormal coordinates on both sides.
        let half = to.weight_rows(tw, &m, |b| psd_power(b, lit(0.5)));
        let orth = from
            .weight_rows(orig, &half.transpose(), |b| psd_power(&b.transpose(), lit(-0.5)))
            .transpose();
        let cutoff = lit::<T>(FINITE_RANK_CUTOFF);
        let mut basis = OrthoBasis::new(cutoff);
        for c in 0..orth.ncols() {
            basis.push_above(&orth.column(c).into_owned(), cutoff);
        }
        let q = CMat::from_columns(basis.vectors());
        let sv: Vec<f64> = if basis.dim() == 0 {
            Vec::new()
        } else {
            singular_values(&(q.adjoint() * &orth)).into_iter().map(to_f64).collect()
        };
        let rank = sv.iter().filter(|&&s| s > FINITE_RANK_CUTOFF).count();
        hs_norms.push(to_f64(orth.norm()));
        svs.push(sv);
        ranks.push((n, rank));
    }
    Ok(FiniteRankProfile {
        a,
        b,
        ranks,
        hs_norms,
        singular_values: svs,
        bound: tw.dims()[b],
    })
}

/// Pairs `(a, b)` of distinct letters.
pub fn ordered_pairs(letters: usize) -> Vec<(Letter, Letter)> {
    (0..letters)
        .flat_map(|a| (0..letters).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect()
}
