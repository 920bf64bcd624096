//! The block transfer matrix `𝒟`, its eigenvalue-1 data, the trace
//! conditions, the Q-tuple equation and the AI/AII/BI/BII classification.

use std::fmt;

use crate::error::{Error, Result};
use crate::free_group::{cancels, inv};
use crate::linalg::{eigenvalues, inverse, lstsq, singular_values};
use crate::scalar::{
    creal, czero, eye, fnorm, lit, sandwich, to_f64, tuple_norm, unvec, vec_of, zeros, CMat, CVec,
    Real, C,
};
use crate::system::{NormalizedSystem, Tuple};
use crate::tolerances::Tolerances;
use crate::twin::{e_symmetry_residual, TwinPackage};

/// Dense `𝒟` with its block layout. Group `g ∈ 0..4` holds, for each letter
/// `b`, a matrix of shape `(n̂_b, n̂_b)`, `(n_b, n̂_b)`, `(n̂_b, n_b)` or
/// `(n_b, n_b)` respectively, column-stacked.
#[derive(Clone, Debug)]
pub struct DMatrix<T: Real> {
    pub mat: CMat<T>,
    /// `offsets[g][b]`, plus `offsets[g][2k]` = end of group `g`.
    pub offsets: Vec<Vec<usize>>,
    pub shapes: Vec<Vec<(usize, usize)>>,
}

/// Nonzero block pattern: `(row group, column group, X, Y)` with the block
/// for letters `(a, b)` realizing `S ↦ X_ab S Y_ab^H`.
#[derive(Clone, Copy)]
enum Factor {
    H,
    Hhat,
    E,
}

const PATTERN: [(usize, usize, Factor, Factor); 9] = [
    (0, 0, Factor::Hhat, Factor::Hhat),
    (0, 1, Factor::E, Factor::Hhat),
    (0, 2, Factor::Hhat, Factor::E),
    (0, 3, Factor::E, Factor::E),
    (1, 1, Factor::H, Factor::Hhat),
    (1, 3, Factor::H, Factor::E),
    (2, 2, Factor::Hhat, Factor::H),
    (2, 3, Factor::E, Factor::H),
    (3, 3, Factor::H, Factor::H),
];

/// Whether block `(i, j)` (0-based groups) is structurally nonzero.
pub fn block_is_structural(i: usize, j: usize) -> bool {
    PATTERN.iter().any(|&(r, c, _, _)| r == i && c == j)
}

impl<T: Real> DMatrix<T> {
    pub fn side(&self) -> usize {
        self.mat.nrows()
    }

    pub fn letters(&self) -> usize {
        self.shapes[0].len()
    }

    /// Submatrix for `(group i, letter a)` × `(group j, letter b)`.
    pub fn block(&self, i: usize, a: usize, j: usize, b: usize) -> CMat<T> {
        let (r0, r1) = (self.offsets[i][a], self.offsets[i][a + 1]);
        let (c0, c1) = (self.offsets[j][b], self.offsets[j][b + 1]);
        self.mat.view((r0, c0), (r1 - r0, c1 - c0)).into_owned()
    }

    /// Diagonal group block `D_gg`.
    pub fn group_block(&self, g: usize) -> CMat<T> {
        let l = self.letters();
        let (s, e) = (self.offsets[g][0], self.offsets[g][l]);
        self.mat.view((s, s), (e - s, e - s)).into_owned()
    }

    /// Group range `[start, end)` in the full index space.
    pub fn group_range(&self, g: usize) -> (usize, usize) {
        (self.offsets[g][0], self.offsets[g][self.letters()])
    }

    /// Stacks a per-letter matrix tuple into the coordinates of group `g`.
    pub fn stack_group(&self, g: usize, t: &[CMat<T>]) -> CVec<T> {
        let mut out = Vec::new();
        for m in t {
            out.extend_from_slice(m.as_slice());
        }
        CVec::from_vec(out).rows(0, self.group_range(g).1 - self.group_range(g).0).into_owned()
    }

    pub fn unstack_group(&self, g: usize, v: &[C<T>]) -> Tuple<T> {
        let base = self.offsets[g][0];
        (0..self.letters())
            .map(|b| {
                let (r, c) = self.shapes[g][b];
                unvec(&v[self.offsets[g][b] - base..self.offsets[g][b + 1] - base], r, c)
            })
            .collect()
    }
}

/// Assembles `𝒟` from a twin package.
pub fn build_d<T: Real>(pkg: &TwinPackage<T>) -> Result<DMatrix<T>> {
    let l = pkg.letters();
    let n = pkg.original.dims();
    let nh = pkg.twin.dims();
    let shapes: Vec<Vec<(usize, usize)>> = vec![
        (0..l).map(|b| (nh[b], nh[b])).collect(),
        (0..l).map(|b| (n[b], nh[b])).collect(),
        (0..l).map(|b| (nh[b], n[b])).collect(),
        (0..l).map(|b| (n[b], n[b])).collect(),
    ];
    let mut offsets = Vec::new();
    let mut o = 0;
    for g in &shapes {
        let mut row = Vec::with_capacity(l + 1);
        for &(r, c) in g {
            row.push(o);
            o += r * c;
        }
        row.push(o);
        offsets.push(row);
    }
    let mut mat = zeros::<T>(o, o);
    let pick = |f: Factor, a: usize, b: usize| -> &CMat<T> {
        match f {
            Factor::H => pkg.original.h(a, b),
            Factor::Hhat => pkg.twin.h(a, b),
            Factor::E => pkg.e(a, b),
        }
    };
    for &(i, j, xf, yf) in &PATTERN {
        for a in 0..l {
            for b in 0..l {
                if cancels(a, b) {
                    continue;
                }
                let (x, y) = (pick(xf, a, b), pick(yf, a, b));
                let blk = sandwich(x, y);
                let (ra, ca) = shapes[i][a];
                let (rb, cb) = shapes[j][b];
                if blk.nrows() != ra * ca || blk.ncols() != rb * cb {
                    return Err(Error::Shape(format!(
                        "D block ({},{}),({},{}) is {}x{}, expected {}x{}",
                        i + 1,
                        a,
                        j + 1,
                        b,
                        blk.nrows(),
                        blk.ncols(),
                        ra * ca,
                        rb * cb
                    )));
                }
                mat.view_mut((offsets[i][a], offsets[j][b]), (ra * ca, rb * cb))
                    .copy_from(&blk);
            }
        }
    }
    Ok(DMatrix {
        mat,
        offsets,
        shapes,
    })
}

/// Eigenvalue-1 analysis of `𝒟`.
#[derive(Clone, Debug)]
pub struct EigenOne<T: Real> {
    pub rho_d: T,
    pub mult_one: usize,
    pub dim_one: usize,
    /// Distance from 1 to the nearest eigenvalue outside the cluster.
    pub gap: T,
    pub ill_conditioned: bool,
    /// Smallest singular values of `𝒟 − I`, ascending (at most 8).
    pub singular_profile: Vec<T>,
    /// Candidate values of `d` when a singular value falls in the ambiguity band.
    pub d_candidates: Vec<usize>,
    /// Eigenvalue-1 multiplicity within each diagonal group block.
    pub group_mult: [usize; 4],
}

/// Eigenvalue data from the diagonal group blocks (𝒟 is block upper
/// triangular, so its spectrum is their union) and `d` from the SVD of `𝒟 − I`.
pub fn eigen_one<T: Real>(d: &DMatrix<T>, tol: &Tolerances) -> Result<EigenOne<T>> {
    let mut spectrum = Vec::new();
    let mut group_mult = [0usize; 4];
    let delta: T = lit(tol.cluster);
    let one = creal(T::one());
    for (g, gm) in group_mult.iter_mut().enumerate() {
        let ev = eigenvalues(&d.group_block(g))?;
        *gm = ev.iter().filter(|z| crate::scalar::cabs(**z - one) < delta).count();
        spectrum.extend(ev);
    }
    eigen_one_from(&d.mat, &spectrum, group_mult, tol)
}

/// Same analysis using the eigenvalues of the full dense matrix.
pub fn eigen_one_dense<T: Real>(mat: &CMat<T>, tol: &Tolerances) -> Result<EigenOne<T>> {
    let ev = eigenvalues(mat)?;
    eigen_one_from(mat, &ev, [0; 4], tol)
}

fn eigen_one_from<T: Real>(
    mat: &CMat<T>,
    spectrum: &[C<T>],
    group_mult: [usize; 4],
    tol: &Tolerances,
) -> Result<EigenOne<T>> {
    let delta: T = lit(tol.cluster);
    let one = creal(T::one());
    let rho_d = spectrum.iter().map(|z| crate::scalar::cabs(*z)).fold(T::zero(), |a, b| a.max(b));
    let mult_one = spectrum.iter().filter(|z| crate::scalar::cabs(**z - one) < delta).count();
    let gap = spectrum
        .iter()
        .map(|z| crate::scalar::cabs(*z - one))
        .filter(|&x| x >= delta)
        .fold(T::max_value().unwrap(), |a, b| a.min(b));
    let ill_conditioned = gap < lit::<T>(10.0) * delta;
    let side = mat.nrows();
    let sv = singular_values(&(mat - eye::<T>(side)));
    let smax = sv.first().copied().unwrap_or(T::zero());
    let cut = delta * smax;
    let dim_one = sv.iter().filter(|&&s| s <= cut).count();
    let band = sv
        .iter()
        .filter(|&&s| s > cut && s <= lit::<T>(100.0) * cut)
        .count();
    let mut d_candidates = vec![dim_one];
    for extra in 1..=band {
        d_candidates.push(dim_one + extra);
    }
    let singular_profile: Vec<T> = sv.iter().rev().take(8).copied().collect();
    Ok(EigenOne {
        rho_d,
        mult_one,
        dim_one,
        gap,
        ill_conditioned,
        singular_profile,
        d_candidates,
        group_mult,
    })
}

/// Both trace sums of the `d ≥ 3` criterion.
#[derive(Clone, Debug)]
pub struct TraceCondition<T: Real> {
    /// `Σ_{a,b} tr(K_a⁻¹ E_ab B̂_{b⁻¹} H_ab* B_a)`.
    pub value: C<T>,
    /// `Σ |individual trace terms|`, the scale `value` is compared with.
    pub scale: T,
    /// `Σ_{a,b} tr(Ĥ_ab B_{b⁻¹} K_{b⁻¹}⁻¹ E_ab* B̂_a)`.
    pub twin_value: C<T>,
    pub twin_scale: T,
    pub vanishes: bool,
    pub twin_vanishes: bool,
}

pub fn trace_condition<T: Real>(pkg: &TwinPackage<T>, tol: &Tolerances) -> Result<TraceCondition<T>> {
    let k = pkg
        .k
        .as_ref()
        .ok_or_else(|| Error::Missing("equivalence tuple K (twins inequivalent)".into()))?;
    let l = pkg.letters();
    let kinv: Tuple<T> = k.k.iter().map(inverse).collect::<Result<_>>()?;
    let o = &pkg.original;
    let t = &pkg.twin;
    let (mut value, mut scale) = (czero::<T>(), T::zero());
    let (mut twin_value, mut twin_scale) = (czero::<T>(), T::zero());
    for a in 0..l {
        for b in 0..l {
            if cancels(a, b) {
                continue;
            }
            let x = (&kinv[a] * pkg.e(a, b) * t.b(inv(b)) * o.h(a, b).adjoint() * o.b(a)).trace();
            value += x;
            scale += crate::scalar::cabs(x);
            let y = (t.h(a, b) * o.b(inv(b)) * &kinv[inv(b)] * pkg.e(a, b).adjoint() * t.b(a)).trace();
            twin_value += y;
            twin_scale += crate::scalar::cabs(y);
        }
    }
    let thr: T = lit(tol.trace);
    Ok(TraceCondition {
        value,
        scale,
        twin_value,
        twin_scale,
        vanishes: crate::scalar::cabs(value) <= thr * scale,
        twin_vanishes: crate::scalar::cabs(twin_value) <= thr * twin_scale,
    })
}

/// Solution of `Ĥ_ab Q_b + E_ab = Q_a H_ab`, antisymmetrized.
#[derive(Clone, Debug)]
pub struct QTuple<T: Real> {
    /// `Q_a : V_a -> V̂_a`.
    pub q: Tuple<T>,
    /// `max_ab ‖Ĥ_ab Q_b + E_ab − Q_a H_ab‖`-based residual relative to `‖E‖`.
    pub residual: T,
    /// `max_a ‖Q*_a + Q_{a⁻¹}‖ / max ‖Q‖`.
    pub antisymmetry_residual: T,
}

#[derive(Clone, Debug)]
pub struct QAttempt<T: Real> {
    pub q: Option<QTuple<T>>,
    /// Least-squares residual `‖C x − r‖ / ‖E‖` before antisymmetrization.
    pub ls_residual: T,
}

/// Relative residual of the Q-equation over all letter pairs:
/// `sqrt(Σ ‖Ĥ_ab Q_b + E_ab − Q_a H_ab‖²) / ‖E‖`.
pub fn q_equation_residual<T: Real>(pkg: &TwinPackage<T>, q: &[CMat<T>]) -> T {
    let l = pkg.letters();
    let mut acc = T::zero();
    for a in 0..l {
        for b in 0..l {
            let r = pkg.twin.h(a, b) * &q[b] + pkg.e(a, b) - &q[a] * pkg.original.h(a, b);
            acc += r.norm_squared();
        }
    }
    let en = pkg.e_norm();
    if en == T::zero() {
        acc.sqrt()
    } else {
        acc.sqrt() / en
    }
}

pub fn solve_q<T: Real>(pkg: &TwinPackage<T>, tol: &Tolerances) -> Result<QAttempt<T>> {
    let l = pkg.letters();
    let n = pkg.original.dims();
    let nh = pkg.twin.dims();
    let mut off = vec![0usize];
    for a in 0..l {
        off.push(off[a] + nh[a] * n[a]);
    }
    let rows: usize = (0..l)
        .flat_map(|a| (0..l).map(move |b| nh[a] * n[b]))
        .sum();
    let mut m = zeros::<T>(rows, off[l]);
    let mut rhs = Vec::with_capacity(rows);
    let mut r0 = 0;
    for a in 0..l {
        for b in 0..l {
            let r = nh[a] * n[b];
            // vec(Ĥ_ab Q_b) = (I ⊗ Ĥ_ab) vec Q_b ; vec(Q_a H_ab) = (H_ab^T ⊗ I) vec Q_a
            let left = CMat::<T>::identity(n[b], n[b]).kronecker(pkg.twin.h(a, b));
            let right = pkg
                .original
                .h(a, b)
                .transpose()
                .kronecker(&CMat::<T>::identity(nh[a], nh[a]));
            {
                let mut v = m.view_mut((r0, off[b]), (r, off[b + 1] - off[b]));
                v += &left;
            }
            {
                let mut v = m.view_mut((r0, off[a]), (r, off[a + 1] - off[a]));
                v -= &right;
            }
            rhs.extend(vec_of(pkg.e(a, b)).iter().map(|z| -*z));
            r0 += r;
        }
    }
    let rhs = CVec::from_vec(rhs);
    let x = lstsq(&m, &rhs, lit(1e-12))?;
    let en = pkg.e_norm();
    let scale = if en == T::zero() { T::one() } else { en };
    let ls_residual = (&m * &x - &rhs).norm() / scale;
    let q: Tuple<T> = (0..l)
        .map(|a| unvec(&x.as_slice()[off[a]..off[a + 1]], nh[a], n[a]))
        .collect();
    if ls_residual >= lit(tol.residual) {
        return Ok(QAttempt { q: None, ls_residual });
    }
    let half = creal(lit::<T>(0.5));
    let q: Tuple<T> = (0..l).map(|a| (&q[a] - q[inv(a)].adjoint()) * half).collect();
    let residual = q_equation_residual(pkg, &q);
    let qscale = crate::scalar::max_norm(&q).max(lit(1e-300));
    let antisymmetry_residual = (0..l)
        .map(|a| fnorm(&(q[a].adjoint() + &q[inv(a)])))
        .fold(T::zero(), |p, v| p.max(v))
        / qscale;
    if residual >= lit(tol.residual) {
        return Ok(QAttempt { q: None, ls_residual });
    }
    Ok(QAttempt {
        q: Some(QTuple {
            q,
            residual,
            antisymmetry_residual,
        }),
        ls_residual,
    })
}

/// Residuals `‖D_ii U_i − U_i‖ / ‖U_i‖` for the four diagonal eigenvectors
/// `U_1 = (B_{a⁻¹})`, `U_2 = (K_a⁻¹ B_{a⁻¹})`, `U_3 = (B_{a⁻¹} K_{a⁻¹}⁻¹)`, `U_4 = (B̂_{a⁻¹})`.
pub fn diag_eigvec_check<T: Real>(pkg: &TwinPackage<T>, d: &DMatrix<T>) -> Result<[T; 4]> {
    let us = diag_eigvecs(pkg)?;
    let mut out = [T::zero(); 4];
    for g in 0..4 {
        out[g] = group_eig_residual(d, g, &us[g]);
    }
    Ok(out)
}

/// The tuples `U_1..U_4` of [`diag_eigvec_check`].
pub fn diag_eigvecs<T: Real>(pkg: &TwinPackage<T>) -> Result<[Tuple<T>; 4]> {
    let k = pkg
        .k
        .as_ref()
        .ok_or_else(|| Error::Missing("equivalence tuple K (twins inequivalent)".into()))?;
    let l = pkg.letters();
    let kinv: Tuple<T> = k.k.iter().map(inverse).collect::<Result<_>>()?;
    let o = &pkg.original;
    let u1: Tuple<T> = (0..l).map(|a| o.b(inv(a)).clone()).collect();
    let u2: Tuple<T> = (0..l).map(|a| &kinv[a] * o.b(inv(a))).collect();
    let u3: Tuple<T> = (0..l).map(|a| o.b(inv(a)) * &kinv[inv(a)]).collect();
    let u4: Tuple<T> = (0..l).map(|a| pkg.twin.b(inv(a)).clone()).collect();
    Ok([u1, u2, u3, u4])
}

/// `‖D_gg u − u‖ / ‖u‖` for a tuple in group `g`.
pub fn group_eig_residual<T: Real>(d: &DMatrix<T>, g: usize, u: &[CMat<T>]) -> T {
    let v = d.stack_group(g, u);
    let dv = d.group_block(g) * &v;
    let n = v.norm();
    if n == T::zero() {
        return T::zero();
    }
    (dv - &v).norm() / n
}

/// For a solved Q: the vector `((B̂_{b⁻¹} Q_b*)_b, (Q_b B̂_{b⁻¹})_b, (B̂_{b⁻¹})_b)`
/// must be fixed by `𝒟` with the first group deleted. Returns the relative residual.
pub fn q_eigvec_residual<T: Real>(pkg: &TwinPackage<T>, d: &DMatrix<T>, q: &[CMat<T>]) -> T {
    let l = pkg.letters();
    let t = &pkg.twin;
    let g2: Tuple<T> = (0..l).map(|b| t.b(inv(b)) * q[b].adjoint()).collect();
    let g3: Tuple<T> = (0..l).map(|b| &q[b] * t.b(inv(b))).collect();
    let g4: Tuple<T> = (0..l).map(|b| t.b(inv(b)).clone()).collect();
    let (s, e) = (d.group_range(1).0, d.group_range(3).1);
    let mut v = Vec::with_capacity(e - s);
    v.extend(d.stack_group(1, &g2).iter().copied());
    v.extend(d.stack_group(2, &g3).iter().copied());
    v.extend(d.stack_group(3, &g4).iter().copied());
    let v = CVec::from_vec(v);
    let sub = d.mat.view((s, s), (e - s, e - s));
    let r = sub * &v - &v;
    r.norm() / v.norm()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClassLabel {
    AI,
    AII,
    BI,
    BII,
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassLabel::AI => "AI",
            ClassLabel::AII => "AII",
            ClassLabel::BI => "BI",
            ClassLabel::BII => "BII",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Monotony,
    Duplicity,
    OdditySplit,
    Undecided,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Monotony => "monotony",
            Verdict::Duplicity => "duplicity",
            Verdict::OdditySplit => "oddity-split",
            Verdict::Undecided => "undecided",
        })
    }
}

/// Label and growth exponent from twin (in)equivalence and `d`.
pub fn label_for(equivalent: bool, mult_one: usize, d: usize) -> Option<(ClassLabel, u32)> {
    match (equivalent, mult_one, d) {
        (false, 2, 2) => Some((ClassLabel::AI, 1)),
        (false, 2, 1) => Some((ClassLabel::AII, 2)),
        (true, 4, 4) => Some((ClassLabel::BI, 1)),
        (true, 4, 3) => Some((ClassLabel::BII, 2)),
        (true, 4, 2) => Some((ClassLabel::BII, 3)),
        _ => None,
    }
}

pub fn verdict_for(label: ClassLabel) -> Verdict {
    match label {
        ClassLabel::AI => Verdict::Duplicity,
        ClassLabel::BI => Verdict::OdditySplit,
        ClassLabel::AII | ClassLabel::BII => Verdict::Monotony,
    }
}

/// Full spectral classification of one normalized system.
#[derive(Clone, Debug)]
pub struct SpectralReport<T: Real> {
    pub package: TwinPackage<T>,
    pub d_side: usize,
    pub eigen: EigenOne<T>,
    pub twins_equivalent: bool,
    pub class_label: Option<ClassLabel>,
    pub predicted_exponent: Option<u32>,
    /// Labels compatible with each candidate `d` when the rank decision is ambiguous.
    pub candidate_labels: Vec<ClassLabel>,
    pub trace: Option<TraceCondition<T>>,
    pub q: Option<QTuple<T>>,
    pub q_ls_residual: T,
    pub q_eigvec_residual: Option<T>,
    pub diag_residuals: Option<[T; 4]>,
    pub e_symmetry_residual: T,
    pub verdict: Verdict,
    pub diagnostics: Vec<String>,
}

impl<T: Real> SpectralReport<T> {
    pub fn rho_d(&self) -> T {
        self.eigen.rho_d
    }
    pub fn mult_one(&self) -> usize {
        self.eigen.mult_one
    }
    pub fn dim_one(&self) -> usize {
        self.eigen.dim_one
    }
}

/// Runs the whole spectral pipeline on a normalized system.
pub fn classify<T: Real>(nsys: &NormalizedSystem<T>, tol: &Tolerances) -> Result<SpectralReport<T>> {
    let pkg = TwinPackage::build(nsys, tol)?;
    classify_package(pkg, tol)
}

pub fn classify_package<T: Real>(pkg: TwinPackage<T>, tol: &Tolerances) -> Result<SpectralReport<T>> {
    let mut diagnostics = Vec::new();
    let d = build_d(&pkg)?;
    let eigen = eigen_one(&d, tol)?;
    let equivalent = pkg.equivalent();
    if let Some(msg) = &pkg.equivalence.diagnostic {
        diagnostics.push(format!("equivalence: {msg}"));
    }
    if !pkg.original.irreducible {
        diagnostics.push("system failed the irreducibility test".into());
    }
    if eigen.ill_conditioned {
        diagnostics.push(format!(
            "ill-conditioned cluster: gap {:.3e} below 10·δ",
            to_f64(eigen.gap)
        ));
    }
    if (eigen.rho_d - T::one()).abs() > lit(1e-8) {
        diagnostics.push(format!("spectral radius of D is {:.12}", to_f64(eigen.rho_d)));
    }
    let attempt = solve_q(&pkg, tol)?;
    let trace = if equivalent {
        Some(trace_condition(&pkg, tol)?)
    } else {
        None
    };
    let diag_residuals = if equivalent {
        Some(diag_eigvec_check(&pkg, &d)?)
    } else {
        None
    };
    let q_eigvec_residual = attempt
        .q
        .as_ref()
        .map(|q| q_eigvec_residual(&pkg, &d, &q.q));
    let labelled = label_for(equivalent, eigen.mult_one, eigen.dim_one);
    let candidate_labels: Vec<ClassLabel> = eigen
        .d_candidates
        .iter()
        .filter_map(|&dd| label_for(equivalent, eigen.mult_one, dd).map(|x| x.0))
        .collect();
    let mut verdict = Verdict::Undecided;
    let (mut class_label, mut predicted_exponent) = (None, None);
    match labelled {
        None => diagnostics.push(format!(
            "no class for (equivalent = {equivalent}, mult_one = {}, d = {})",
            eigen.mult_one, eigen.dim_one
        )),
        Some((label, exp)) => {
            class_label = Some(label);
            predicted_exponent = Some(exp);
            let q_ok = attempt.q.is_some();
            let expect_q = matches!(label, ClassLabel::AI | ClassLabel::BI);
            let mut consistent = true;
            if q_ok != expect_q {
                consistent = false;
                diagnostics.push(format!(
                    "class {label} but Q-equation {} (residual {:.3e})",
                    if q_ok { "solvable" } else { "unsolvable" },
                    to_f64(attempt.ls_residual)
                ));
            }
            if let Some(tc) = &trace {
                let expect_vanish = eigen.dim_one >= 3;
                if tc.vanishes != expect_vanish {
                    consistent = false;
                    diagnostics.push(format!(
                        "trace condition {} but d = {}",
                        if tc.vanishes { "vanishes" } else { "is nonzero" },
                        eigen.dim_one
                    ));
                }
                if tc.vanishes != tc.twin_vanishes {
                    diagnostics.push("the two trace sums disagree on vanishing".into());
                }
            }
            if eigen.d_candidates.len() > 1 {
                consistent = false;
                diagnostics.push(format!(
                    "rank decision ambiguous: d ∈ {:?}",
                    eigen.d_candidates
                ));
            }
            if consistent && pkg.original.irreducible && !eigen.ill_conditioned {
                verdict = verdict_for(label);
            }
        }
    }
    let e_sym = e_symmetry_residual(&pkg.e, pkg.letters());
    Ok(SpectralReport {
        d_side: d.side(),
        eigen,
        twins_equivalent: equivalent,
        class_label,
        predicted_exponent,
        candidate_labels,
        trace,
        q: attempt.q,
        q_ls_residual: attempt.ls_residual,
        q_eigvec_residual,
        diag_residuals,
        e_symmetry_residual: e_sym,
        verdict,
        diagnostics,
        package: pkg,
    })
}

/// Norm helper used by reports: `‖E‖` of a package.
pub fn e_norm<T: Real>(pkg: &TwinPackage<T>) -> T {
    tuple_norm(&pkg.e)
}

#[cfg(test)]
mod tests {
    #[test]
    fn reports_are_thread_safe() {
        fn is_send<X: Send + Sync>() {}
        is_send::<super::SpectralReport<f64>>();
        is_send::<super::SpectralReport<f32>>();
    }

    use super::*;

    #[test]
    fn pattern_is_block_upper_triangular() {
        for i in 0..4 {
            for j in 0..i {
                assert!(!block_is_structural(i, j));
            }
        }
        assert!(block_is_structural(0, 3));
        assert!(!block_is_structural(1, 2));
    }

    #[test]
    fn labels_follow_the_table() {
        assert_eq!(label_for(false, 2, 2), Some((ClassLabel::AI, 1)));
        assert_eq!(label_for(false, 2, 1), Some((ClassLabel::AII, 2)));
        assert_eq!(label_for(true, 4, 4), Some((ClassLabel::BI, 1)));
        assert_eq!(label_for(true, 4, 3), Some((ClassLabel::BII, 2)));
        assert_eq!(label_for(true, 4, 2), Some((ClassLabel::BII, 3)));
        assert_eq!(label_for(true, 4, 1), None);
        assert_eq!(label_for(false, 4, 2), None);
        let _ = czero::<f64>();
    }
}
