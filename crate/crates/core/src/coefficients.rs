//! Multiplicative functions on the Cayley tree: evaluation, canonical
//! coordinates, inner products, the regular and indicator actions, and
//! sphere sums of squared matrix coefficients.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::free_group::{cancels, inv, Letter, Word};
use crate::scalar::{czero, lit, to_f64, CMat, CVec, Real, C};
use crate::system::NormalizedSystem;
use crate::twin::{e_maps, twin_system};

/// The elementary function `μ[x, x·a, v]` with `v ∈ V_a`.
#[derive(Clone, Debug, PartialEq)]
pub struct Elementary<T: Real> {
    pub x: Word,
    pub a: Letter,
    pub v: CVec<T>,
}

impl<T: Real> Elementary<T> {
    pub fn new(x: Word, a: Letter, v: CVec<T>) -> Self {
        Self { x, a, v }
    }

    /// The edge endpoint `x·a`.
    pub fn head(&self) -> Word {
        self.x.mul_letter(self.a)
    }

    /// Smallest depth at which the function has canonical coordinates.
    pub fn min_depth(&self) -> usize {
        self.x.len().min(self.head().len())
    }
}

/// Canonical depth-`N` coordinates: one vector in `V_a` per boundary edge
/// `(x, x·a)` with `|x| = N`, keyed by the word `x·a`; absent keys are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplicativeFunction<T: Real> {
    depth: usize,
    coeffs: BTreeMap<Word, CVec<T>>,
}

impl<T: Real> MultiplicativeFunction<T> {
    pub fn zero(depth: usize) -> Self {
        Self {
            depth,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn coeffs(&self) -> &BTreeMap<Word, CVec<T>> {
        &self.coeffs
    }

    pub fn get(&self, key: &Word) -> Option<&CVec<T>> {
        self.coeffs.get(key)
    }

    /// Adds `v` to the coefficient of edge `key` (`|key| = depth + 1`).
    pub fn add(&mut self, key: Word, v: &CVec<T>) {
        debug_assert_eq!(key.len(), self.depth + 1);
        match self.coeffs.get_mut(&key) {
            Some(c) => *c += v,
            None => {
                self.coeffs.insert(key, v.clone());
            }
        }
    }

    pub fn scaled(&self, s: C<T>) -> Self {
        Self {
            depth: self.depth,
            coeffs: self.coeffs.iter().map(|(k, v)| (k.clone(), v * s)).collect(),
        }
    }

    /// `self + s · other` (both at the same depth).
    pub fn axpy(&self, s: C<T>, other: &Self) -> Result<Self> {
        if self.depth != other.depth {
            return Err(Error::Shape(format!(
                "depths {} and {} differ",
                self.depth, other.depth
            )));
        }
        let mut out = self.clone();
        for (k, v) in &other.coeffs {
            out.add(k.clone(), &(v * s));
        }
        Ok(out)
    }

    /// Depth-0 coordinates `(v_a)_a` if the function lives at depth 0.
    pub fn to_w0(&self, ns: &NormalizedSystem<T>) -> Option<Vec<CVec<T>>> {
        if self.depth != 0 {
            return None;
        }
        Some(
            (0..ns.letters())
                .map(|a| {
                    self.coeffs
                        .get(&Word::letter(a))
                        .cloned()
                        .unwrap_or_else(|| CVec::zeros(ns.dims()[a]))
                })
                .collect(),
        )
    }

    pub fn from_w0(v: &[CVec<T>]) -> Self {
        let mut f = Self::zero(0);
        for (a, va) in v.iter().enumerate() {
            f.coeffs.insert(Word::letter(a), va.clone());
        }
        f
    }
}

/// Value of `μ[x, x·a, v]` at the vertex `y`.
pub fn mu_eval<T: Real>(
    ns: &NormalizedSystem<T>,
    x: &Word,
    a: Letter,
    v: &CVec<T>,
    y: &Word,
) -> CVec<T> {
    let w = x.mul_letter(a).inverse().mul(y);
    let letters = w.letters();
    if letters.is_empty() {
        return v.clone();
    }
    let last = *letters.last().unwrap();
    if letters[0] == inv(a) {
        return CVec::zeros(ns.dims()[last]);
    }
    let mut val = ns.h(letters[0], a) * v;
    for p in letters.windows(2) {
        val = ns.h(p[1], p[0]) * val;
    }
    val
}

/// Propagates one elementary function to its depth-`n` coordinates,
/// optionally keeping only edges inside the cone `within`.
fn spread<T: Real>(
    ns: &NormalizedSystem<T>,
    term: &Elementary<T>,
    n: usize,
    within: Option<&Word>,
    out: &mut MultiplicativeFunction<T>,
) -> Result<()> {
    let head = term.head();
    if n < term.min_depth() {
        return Err(Error::Rejected(format!(
            "depth {n} is below the minimal canonical depth {} of the term",
            term.min_depth()
        )));
    }
    let keep = |w: &Word| within.is_none_or(|c| w.starts_with(c));
    let reaches = |w: &Word| within.is_none_or(|c| w.starts_with(c) || c.starts_with(w));
    if head.len() == n + 1 && head.len() == term.x.len() + 1 {
        if keep(&head) {
            out.add(head, &term.v);
        }
        return Ok(());
    }
    let l = ns.letters();
    let mut stack: Vec<(Word, Letter, CVec<T>)> = vec![(head, term.a, term.v.clone())];
    while let Some((u, p, val)) = stack.pop() {
        for d in 0..l {
            if cancels(d, p) {
                continue;
            }
            let next = u.mul_letter(d);
            let away = next.len() > u.len();
            let nv = ns.h(d, p) * &val;
            if away {
                if next.len() == n + 1 {
                    if keep(&next) {
                        out.add(next, &nv);
                    }
                    continue;
                }
                if !reaches(&next) {
                    continue;
                }
            }
            stack.push((next, d, nv));
        }
    }
    Ok(())
}

/// Canonical depth-`n` coordinates of a finite sum of elementary functions.
pub fn canonicalize<T: Real>(
    ns: &NormalizedSystem<T>,
    terms: &[Elementary<T>],
    n: usize,
) -> Result<MultiplicativeFunction<T>> {
    let mut f = MultiplicativeFunction::zero(n);
    for t in terms {
        spread(ns, t, n, None, &mut f)?;
    }
    Ok(f)
}

/// Like [`canonicalize`], keeping only edges inside the cone `Γ(cone)`.
pub fn canonicalize_within<T: Real>(
    ns: &NormalizedSystem<T>,
    terms: &[Elementary<T>],
    n: usize,
    cone: &Word,
) -> Result<MultiplicativeFunction<T>> {
    let mut f = MultiplicativeFunction::zero(n);
    for t in terms {
        spread(ns, t, n, Some(cone), &mut f)?;
    }
    Ok(f)
}

/// Minimal-depth coordinates of a single elementary function.
pub fn elementary<T: Real>(
    ns: &NormalizedSystem<T>,
    x: Word,
    a: Letter,
    v: CVec<T>,
) -> MultiplicativeFunction<T> {
    let t = Elementary::new(x, a, v);
    let n = t.min_depth();
    canonicalize(ns, &[t], n).expect("minimal depth is valid")
}

/// The elementary terms a canonical function is the sum of.
pub fn terms_of<T: Real>(f: &MultiplicativeFunction<T>) -> Vec<Elementary<T>> {
    f.coeffs
        .iter()
        .map(|(k, v)| Elementary::new(k.parent(), k.last().unwrap(), v.clone()))
        .collect()
}

/// Re-expresses `f` at a larger depth.
pub fn deepen<T: Real>(
    ns: &NormalizedSystem<T>,
    f: &MultiplicativeFunction<T>,
    n: usize,
) -> Result<MultiplicativeFunction<T>> {
    if n < f.depth {
        return Err(Error::Rejected(format!(
            "cannot lower depth {} to {n}",
            f.depth
        )));
    }
    let mut cur = f.clone();
    while cur.depth < n {
        let mut next = MultiplicativeFunction::zero(cur.depth + 1);
        for (k, v) in &cur.coeffs {
            let a = k.last().unwrap();
            for b in 0..ns.letters() {
                if cancels(b, a) {
                    continue;
                }
                next.coeffs.insert(k.mul_letter(b), ns.h(b, a) * v);
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// `⟨f, g⟩ = Σ_edges B_a(f(xa), g(xa))` at a common depth.
pub fn inner_product<T: Real>(
    ns: &NormalizedSystem<T>,
    f: &MultiplicativeFunction<T>,
    g: &MultiplicativeFunction<T>,
) -> Result<C<T>> {
    let n = f.depth.max(g.depth);
    let (f, g) = (deepen(ns, f, n)?, deepen(ns, g, n)?);
    let mut acc = czero();
    for (k, fv) in &f.coeffs {
        if let Some(gv) = g.coeffs.get(k) {
            let a = k.last().unwrap();
            acc += fv.dotc(&(ns.b(a) * gv));
        }
    }
    Ok(acc)
}

pub fn norm_sq<T: Real>(ns: &NormalizedSystem<T>, f: &MultiplicativeFunction<T>) -> T {
    inner_product(ns, f, f).map(|z| z.re).unwrap_or(T::zero())
}

/// `π(y) f`, at depth `depth(f) + |y|`.
pub fn act<T: Real>(
    ns: &NormalizedSystem<T>,
    y: &Word,
    f: &MultiplicativeFunction<T>,
) -> Result<MultiplicativeFunction<T>> {
    let terms: Vec<Elementary<T>> = terms_of(f)
        .into_iter()
        .map(|t| Elementary::new(y.mul(&t.x), t.a, t.v))
        .collect();
    canonicalize(ns, &terms, f.depth + y.len())
}

/// `1_{Γ(x)} f` for the boundary cylinder of `x`, at depth `max(N, |x| − 1)`.
pub fn act_indicator<T: Real>(
    ns: &NormalizedSystem<T>,
    x: &Word,
    f: &MultiplicativeFunction<T>,
) -> Result<MultiplicativeFunction<T>> {
    let n = f.depth.max(x.len().saturating_sub(1));
    let g = deepen(ns, f, n)?;
    Ok(MultiplicativeFunction {
        depth: n,
        coeffs: g
            .coeffs
            .into_iter()
            .filter(|(k, _)| k.starts_with(x))
            .collect(),
    })
}

/// Series `s_n = Σ_{|x| = n} |⟨v, π(x) w⟩|²`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSeries<T: Real> {
    pub s: Vec<T>,
    pub v_norm: T,
    pub w_norm: T,
    /// Set when the enumeration stopped early because of the work budget.
    pub truncated: bool,
    pub requested_nmax: usize,
}

impl<T: Real> CoefficientSeries<T> {
    pub fn nmax(&self) -> usize {
        self.s.len().saturating_sub(1)
    }

    /// Haagerup bound `(n+1)² ‖v‖² ‖w‖²`.
    pub fn haagerup_bound(&self, n: usize) -> T {
        let m: T = lit(((n + 1) * (n + 1)) as f64);
        m * self.v_norm * self.v_norm * self.w_norm * self.w_norm
    }

    /// First `n` with `s_n` above the Haagerup bound (relative slack 1e-9).
    pub fn haagerup_violation(&self) -> Option<usize> {
        self.s.iter().enumerate().find_map(|(n, &s)| {
            let b = self.haagerup_bound(n);
            (s > b * lit(1.0 + 1e-9) + lit(1e-14)).then_some(n)
        })
    }
}

/// Default work budget for sphere sums (tree nodes × dim²).
pub const DEFAULT_BUDGET: f64 = 4.0e7;

/// Precomputed data for the depth-0 recursion.
struct W0Data<T: Real> {
    l: usize,
    h: Vec<CMat<T>>,
    /// `H_{ba}^H`.
    h_adj: Vec<CMat<T>>,
    /// `E_ab^H`.
    e_adj: Vec<CMat<T>>,
    /// `g_a = Σ_{d ≠ a⁻¹} H_{da}^H B_d w_d`.
    g: Vec<CVec<T>>,
    w: Vec<CVec<T>>,
}

impl<T: Real> W0Data<T> {
    fn new(ns: &NormalizedSystem<T>, w: &[CVec<T>]) -> Self {
        let l = ns.letters();
        let raw_twin = twin_system(&ns.system);
        // E only needs H and B; the twin's own forms are irrelevant here.
        let twin_like = NormalizedSystem {
            system: raw_twin,
            forms: Vec::new(),
            rho_certificate: ns.rho_certificate,
            original_rho: ns.original_rho,
            irreducible: ns.irreducible,
            method: ns.method,
            iterations: 0,
        };
        let e = e_maps(ns, &twin_like);
        let mut h = Vec::with_capacity(l * l);
        let mut h_adj = Vec::with_capacity(l * l);
        for b in 0..l {
            for a in 0..l {
                h.push(ns.h(b, a).clone());
                h_adj.push(ns.h(b, a).adjoint());
            }
        }
        let e_adj = e.iter().map(|m| m.adjoint()).collect();
        let g = (0..l)
            .map(|a| {
                let mut acc = CVec::zeros(ns.dims()[a]);
                for d in 0..l {
                    if cancels(d, a) {
                        continue;
                    }
                    acc += ns.h(d, a).adjoint() * (ns.b(d) * &w[d]);
                }
                acc
            })
            .collect();
        Self {
            l,
            h,
            h_adj,
            e_adj,
            g,
            w: w.to_vec(),
        }
    }

    #[inline]
    fn h(&self, b: Letter, a: Letter) -> &CMat<T> {
        &self.h[b * self.l + a]
    }

    #[inline]
    fn h_adj(&self, b: Letter, a: Letter) -> &CMat<T> {
        &self.h_adj[b * self.l + a]
    }

    #[inline]
    fn e_adj(&self, a: Letter, b: Letter) -> &CMat<T> {
        &self.e_adj[a * self.l + b]
    }

    /// `⟨v, π(y) w⟩` from the state at the last letter of `y`.
    #[inline]
    fn value(&self, last: Letter, alpha: &CVec<T>, delta: &CVec<T>) -> C<T> {
        alpha.dotc(&self.g[last]) + delta.dotc(&self.w[inv(last)])
    }

    /// State `(α, δ)` after the first letter `y1`.
    fn start(&self, ns: &NormalizedSystem<T>, v: &[CVec<T>], y1: Letter) -> (CVec<T>, CVec<T>) {
        let mut delta = CVec::zeros(ns.dims()[inv(y1)]);
        for (c, vc) in v.iter().enumerate() {
            if c == y1 {
                continue;
            }
            delta += self.h_adj(c, inv(y1)) * (ns.b(c) * vc);
        }
        (v[y1].clone(), delta)
    }

    fn step(&self, last: Letter, next: Letter, alpha: &CVec<T>, delta: &CVec<T>) -> (CVec<T>, CVec<T>) {
        let nd = self.h_adj(inv(last), inv(next)) * delta + self.e_adj(inv(last), inv(next)) * alpha;
        let na = self.h(next, last) * alpha;
        (na, nd)
    }

    fn dfs(&self, m: usize, nmax: usize, last: Letter, alpha: &CVec<T>, delta: &CVec<T>, out: &mut [T]) {
        out[m] += self.value(last, alpha, delta).norm_sqr();
        if m == nmax {
            return;
        }
        for next in 0..self.l {
            if cancels(next, last) {
                continue;
            }
            let (na, nd) = self.step(last, next, alpha, delta);
            self.dfs(m + 1, nmax, next, &na, &nd, out);
        }
    }
}

/// `⟨v, w⟩` for depth-0 coordinate tuples.
pub fn w0_inner<T: Real>(ns: &NormalizedSystem<T>, v: &[CVec<T>], w: &[CVec<T>]) -> C<T> {
    v.iter()
        .enumerate()
        .map(|(a, va)| va.dotc(&(ns.b(a) * &w[a])))
        .fold(czero(), |p, q| p + q)
}

/// `⟨v, π(y) w⟩` for depth-0 vectors, by running the path recursion along `y`.
pub fn w0_coefficient<T: Real>(
    ns: &NormalizedSystem<T>,
    v: &[CVec<T>],
    w: &[CVec<T>],
    y: &Word,
) -> C<T> {
    if y.is_identity() {
        return w0_inner(ns, v, w);
    }
    let data = W0Data::new(ns, w);
    let ls = y.letters();
    let (mut alpha, mut delta) = data.start(ns, v, ls[0]);
    for p in ls.windows(2) {
        let (na, nd) = data.step(p[0], p[1], &alpha, &delta);
        alpha = na;
        delta = nd;
    }
    data.value(*ls.last().unwrap(), &alpha, &delta)
}

/// Largest `n ≤ nmax` whose cumulative enumeration cost fits the budget.
pub fn affordable_nmax(letters: usize, max_dim: usize, nmax: usize, budget: f64) -> usize {
    let mut nodes = 1.0f64;
    let mut sphere = 1.0f64;
    let cost_per = (max_dim * max_dim).max(1) as f64;
    for n in 1..=nmax {
        sphere *= if n == 1 { letters as f64 } else { (letters - 1) as f64 };
        nodes += sphere;
        if nodes * cost_per > budget {
            return n - 1;
        }
    }
    nmax
}

/// Sphere sums for depth-0 vectors by depth-first enumeration, parallel
/// over the first letter with an ordered reduction.
pub fn sphere_sums_w0<T: Real>(
    ns: &NormalizedSystem<T>,
    v: &[CVec<T>],
    w: &[CVec<T>],
    nmax: usize,
    budget: f64,
) -> CoefficientSeries<T> {
    let max_dim = ns.dims().iter().copied().max().unwrap_or(1);
    let reach = affordable_nmax(ns.letters(), max_dim, nmax, budget);
    let data = W0Data::new(ns, w);
    let mut s = vec![T::zero(); reach + 1];
    s[0] = w0_inner(ns, v, w).norm_sqr();
    if reach >= 1 {
        let partials: Vec<Vec<T>> = (0..ns.letters())
            .into_par_iter()
            .map(|y1| {
                let mut out = vec![T::zero(); reach + 1];
                let (alpha, delta) = data.start(ns, v, y1);
                data.dfs(1, reach, y1, &alpha, &delta, &mut out);
                out
            })
            .collect();
        for p in &partials {
            for (acc, x) in s.iter_mut().zip(p) {
                *acc += *x;
            }
        }
    }
    CoefficientSeries {
        s,
        v_norm: w0_inner(ns, v, v).re.max(T::zero()).sqrt(),
        w_norm: w0_inner(ns, w, w).re.max(T::zero()).sqrt(),
        truncated: reach < nmax,
        requested_nmax: nmax,
    }
}

/// Sphere sums for arbitrary canonical functions. Depth-0 inputs use the
/// depth-first recursion; deeper inputs are expanded into translates of
/// depth-0 functions and each coefficient is evaluated along its word.
pub fn sphere_sums<T: Real>(
    ns: &NormalizedSystem<T>,
    f: &MultiplicativeFunction<T>,
    g: &MultiplicativeFunction<T>,
    nmax: usize,
    budget: f64,
) -> Result<CoefficientSeries<T>> {
    if let (Some(v), Some(w)) = (f.to_w0(ns), g.to_w0(ns)) {
        return Ok(sphere_sums_w0(ns, &v, &w, nmax, budget));
    }
    let tf = terms_of(f);
    let tg = terms_of(g);
    let max_dim = ns.dims().iter().copied().max().unwrap_or(1);
    let per_word = (tf.len() * tg.len()).max(1) as f64 * (f.depth() + g.depth() + nmax + 1) as f64;
    let reach = affordable_nmax(ns.letters(), max_dim, nmax, budget / per_word);
    let basis_vec = |t: &Elementary<T>| -> Vec<CVec<T>> {
        (0..ns.letters())
            .map(|c| {
                if c == t.a {
                    t.v.clone()
                } else {
                    CVec::zeros(ns.dims()[c])
                }
            })
            .collect()
    };
    let vf: Vec<(Word, Vec<CVec<T>>)> = tf.iter().map(|t| (t.x.inverse(), basis_vec(t))).collect();
    let vg: Vec<(Word, Vec<CVec<T>>)> = tg.iter().map(|t| (t.x.clone(), basis_vec(t))).collect();
    let al = ns.alphabet().clone();
    let mut s = Vec::with_capacity(reach + 1);
    for n in 0..=reach {
        let words: Vec<Word> = al.sphere(n).collect();
        let partial: Vec<T> = words
            .par_iter()
            .map(|y| {
                let mut acc = czero::<T>();
                for (xi_inv, vi) in &vf {
                    for (xj, wj) in &vg {
                        let z = xi_inv.mul(y).mul(xj);
                        acc += w0_coefficient(ns, vi, wj, &z);
                    }
                }
                acc.norm_sqr()
            })
            .collect();
        s.push(partial.into_iter().fold(T::zero(), |p, q| p + q));
    }
    Ok(CoefficientSeries {
        s,
        v_norm: norm_sq(ns, f).sqrt(),
        w_norm: norm_sq(ns, g).sqrt(),
        truncated: reach < nmax,
        requested_nmax: nmax,
    })
}

/// `⟨f, π(y) g⟩` by canonicalization at the minimal common depth
/// `max(depth f, |y| + depth g)`; independent of the recursion above.
pub fn coefficient_dense<T: Real>(
    ns: &NormalizedSystem<T>,
    f: &MultiplicativeFunction<T>,
    y: &Word,
    g: &MultiplicativeFunction<T>,
) -> Result<C<T>> {
    let pg = act(ns, y, g)?;
    inner_product(ns, f, &pg)
}

/// Least-squares growth exponent of a series.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentFit {
    /// `slope + 1` clamped to `[1, 3]`.
    pub p_hat: f64,
    pub raw: f64,
    pub n0: usize,
    pub nmax: usize,
    /// Standard error of the slope.
    pub slope_stderr: f64,
    /// Coefficient of determination of the log-log fit.
    pub r_squared: f64,
}

/// Default burn-in of the exponent fit.
pub const FIT_BURN_IN: usize = 3;

/// Slope of `log s_n` against `log n` over `n ∈ [n0, nmax]`, plus one.
pub fn exponent_fit<T: Real>(series: &CoefficientSeries<T>, n0: usize) -> Result<ExponentFit> {
    let nmax = series.nmax();
    if nmax < n0 + 5 {
        return Err(Error::Rejected(format!(
            "series too short for the fit: nmax = {nmax}, need at least {}",
            n0 + 5
        )));
    }
    let pts: Vec<(f64, f64)> = (n0.max(1)..=nmax)
        .filter_map(|n| {
            let s = to_f64(series.s[n]);
            (s > 0.0).then(|| ((n as f64).ln(), s.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return Err(Error::Rejected("series is zero on the fit window".into()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let sse: f64 = pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum();
    let slope_stderr = if pts.len() > 2 {
        (sse / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let raw = slope + 1.0;
    Ok(ExponentFit {
        p_hat: raw.clamp(1.0, 3.0),
        raw,
        n0,
        nmax,
        slope_stderr,
        r_squared,
    })
}

/// `‖φ_ε‖² ≈ Σ_{n ≤ nmax} s_n e^{−εn}` with the Haagerup tail bound.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiEps {
    pub eps: f64,
    pub partial: f64,
    /// Upper bound on the omitted tail `Σ_{n > nmax} (n+1)² e^{−εn} ‖v‖²‖w‖²`.
    pub tail_bound: f64,
    /// Whether the tail bound is below `1e-6` of the partial sum.
    pub adequate: bool,
    /// Smallest cutoff that would make the truncation adequate.
    pub required_nmax: usize,
}

pub fn phi_eps<T: Real>(series: &CoefficientSeries<T>, eps: f64) -> PhiEps {
    let norms = to_f64(series.v_norm).powi(2) * to_f64(series.w_norm).powi(2);
    let partial: f64 = series
        .s
        .iter()
        .enumerate()
        .map(|(n, &s)| to_f64(s) * (-eps * n as f64).exp())
        .sum();
    let tail = |from: usize| -> f64 {
        let mut acc = 0.0;
        let mut n = from;
        loop {
            let t = ((n + 1) * (n + 1)) as f64 * (-eps * n as f64).exp() * norms;
            acc += t;
            if (t < 1e-18 * acc.max(1e-300) && n > from + 10) || n > from + 1_000_000 {
                break;
            }
            n += 1;
        }
        acc
    };
    let tail_bound = tail(series.nmax() + 1);
    let mut required = series.nmax();
    while tail(required + 1) >= 1e-6 * partial.max(f64::MIN_POSITIVE) && required < 100_000 {
        required += 1;
    }
    PhiEps {
        eps,
        partial,
        tail_bound,
        adequate: tail_bound < 1e-6 * partial,
        required_nmax: required,
    }
}

/// Finite-horizon probe of the good vector bound.
#[derive(Clone, Debug, PartialEq)]
pub struct GvbProbe {
    pub sup: f64,
    /// Mean of the last third over the mean of the middle third.
    pub growth_ratio: f64,
    pub plausible: bool,
    /// Always true: a finite horizon cannot certify a uniform bound.
    pub heuristic: bool,
}

pub fn good_vector_probe<T: Real>(series: &CoefficientSeries<T>) -> GvbProbe {
    let s: Vec<f64> = series.s.iter().map(|&x| to_f64(x)).collect();
    let sup = s.iter().copied().fold(0.0, f64::max);
    let len = s.len();
    let third = (len / 3).max(1);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    let last = mean(&s[len.saturating_sub(third)..]);
    let middle = mean(&s[len.saturating_sub(2 * third)..len.saturating_sub(third)]);
    let growth_ratio = if middle > 0.0 { last / middle } else { f64::INFINITY };
    GvbProbe {
        sup,
        growth_ratio,
        plausible: growth_ratio <= 1.25,
        heuristic: true,
    }
}

/// Block-valued elementary terms `μ[x, x·a, V]`: the columns of `V` are
/// vectors in `V_a`, one per column of the operator being assembled.
pub type BlockTerm<T> = (Word, Letter, CMat<T>);

fn merge<T: Real>(map: &mut BTreeMap<(Word, Letter), CMat<T>>, key: (Word, Letter), m: CMat<T>) {
    match map.get_mut(&key) {
        Some(acc) => *acc += m,
        None => {
            map.insert(key, m);
        }
    }
}

/// Depth-`n` coordinates of block-valued terms. Propagation states with the
/// same vertex and incoming letter are merged, so the cost is bounded by the
/// number of tree edges visited rather than by the number of terms.
pub fn canonicalize_block<T: Real>(
    ns: &NormalizedSystem<T>,
    terms: Vec<BlockTerm<T>>,
    n: usize,
    within: Option<&Word>,
) -> Result<BTreeMap<Word, CMat<T>>> {
    let keep = |w: &Word| within.is_none_or(|c| w.starts_with(c));
    let reaches = |w: &Word| within.is_none_or(|c| w.starts_with(c) || c.starts_with(w));
    let mut out: BTreeMap<Word, CMat<T>> = BTreeMap::new();
    let add_out = |out: &mut BTreeMap<Word, CMat<T>>, k: Word, m: CMat<T>| match out.get_mut(&k) {
        Some(acc) => *acc += m,
        None => {
            out.insert(k, m);
        }
    };
    // Inward states are keyed by decreasing length, outward by increasing.
    let mut inward: BTreeMap<(std::cmp::Reverse<usize>, Word, Letter), CMat<T>> = BTreeMap::new();
    let mut outward: BTreeMap<(Word, Letter), CMat<T>> = BTreeMap::new();
    for (x, a, v) in terms {
        let head = x.mul_letter(a);
        let min_depth = x.len().min(head.len());
        if n < min_depth {
            return Err(Error::Rejected(format!(
                "depth {n} is below the minimal canonical depth {min_depth} of a term"
            )));
        }
        if head.len() > x.len() {
            if head.len() == n + 1 {
                if keep(&head) {
                    add_out(&mut out, head, v);
                }
            } else if reaches(&head) {
                merge(&mut outward, (head, a), v);
            }
        } else {
            let key = (std::cmp::Reverse(head.len()), head, a);
            match inward.get_mut(&key) {
                Some(acc) => *acc += v,
                None => {
                    inward.insert(key, v);
                }
            }
        }
    }
    let l = ns.letters();
    while let Some(((_, u, p), val)) = inward.pop_first() {
        for d in 0..l {
            if cancels(d, p) {
                continue;
            }
            let next = u.mul_letter(d);
            let nv = ns.h(d, p) * &val;
            if next.len() < u.len() {
                let key = (std::cmp::Reverse(next.len()), next, d);
                match inward.get_mut(&key) {
                    Some(acc) => *acc += nv,
                    None => {
                        inward.insert(key, nv);
                    }
                }
            } else if next.len() == n + 1 {
                if keep(&next) {
                    add_out(&mut out, next, nv);
                }
            } else if reaches(&next) {
                merge(&mut outward, (next, d), nv);
            }
        }
    }
    // Outward states only spawn longer states, so shortest-first is safe.
    let mut by_len: BTreeMap<usize, Vec<((Word, Letter), CMat<T>)>> = BTreeMap::new();
    for (k, v) in outward {
        by_len.entry(k.0.len()).or_default().push((k, v));
    }
    while let Some((_, level)) = by_len.pop_first() {
        let mut next_level: BTreeMap<(Word, Letter), CMat<T>> = BTreeMap::new();
        for ((u, p), val) in level {
            for d in 0..l {
                if cancels(d, p) {
                    continue;
                }
                let next = u.mul_letter(d);
                let nv = ns.h(d, p) * &val;
                if next.len() == n + 1 {
                    if keep(&next) {
                        add_out(&mut out, next, nv);
                    }
                } else if reaches(&next) {
                    merge(&mut next_level, (next, d), nv);
                }
            }
        }
        for (k, v) in next_level {
            let len = k.0.len();
            let bucket = by_len.entry(len).or_default();
            match bucket.iter_mut().find(|(kk, _)| *kk == k) {
                Some((_, acc)) => *acc += v,
                None => bucket.push((k, v)),
            }
        }
    }
    Ok(out)
}

/// Ordered coordinates of `W_N` (optionally restricted to a cone): the edge
/// keys `x·a` with `|x| = N`, each carrying a block of `dim V_a` entries.
#[derive(Clone, Debug)]
pub struct EdgeBasis {
    pub depth: usize,
    pub keys: Vec<Word>,
    pub offsets: Vec<usize>,
    index: std::collections::HashMap<Word, usize>,
}

impl EdgeBasis {
    pub fn new(alphabet: &crate::free_group::Alphabet, dims: &[usize], depth: usize, cone: Option<&Word>) -> Self {
        let keys: Vec<Word> = alphabet
            .sphere(depth + 1)
            .filter(|w| cone.is_none_or(|c| w.starts_with(c)))
            .collect();
        let mut offsets = Vec::with_capacity(keys.len() + 1);
        offsets.push(0);
        for k in &keys {
            offsets.push(offsets.last().unwrap() + dims[k.last().unwrap()]);
        }
        let index = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        Self {
            depth,
            keys,
            offsets,
            index,
        }
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn position(&self, key: &Word) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Column selector block for key `i`: `dim V_a × dim W_N`.
    pub fn selector<T: Real>(&self, i: usize) -> CMat<T> {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        let mut m = CMat::zeros(hi - lo, self.dim());
        for r in 0..hi - lo {
            m[(r, lo + r)] = crate::scalar::cone();
        }
        m
    }

    /// Rows of `m` belonging to key `i`.
    pub fn rows<T: Real>(&self, i: usize, m: &CMat<T>) -> CMat<T> {
        m.rows(self.offsets[i], self.offsets[i + 1] - self.offsets[i]).into_owned()
    }

    /// `f(B_a)` applied blockwise to the rows of `m`, for a function of a
    /// positive matrix such as a power.
    pub fn weight_rows<T: Real>(
        &self,
        ns: &NormalizedSystem<T>,
        m: &CMat<T>,
        f: impl Fn(&CMat<T>) -> CMat<T>,
    ) -> CMat<T> {
        let fb: Vec<CMat<T>> = (0..ns.letters()).map(|a| f(ns.b(a))).collect();
        let mut out = m.clone();
        for (i, k) in self.keys.iter().enumerate() {
            let o = self.offsets[i];
            let n = self.offsets[i + 1] - o;
            let w = &fb[k.last().unwrap()] * m.rows(o, n);
            out.rows_mut(o, n).copy_from(&w);
        }
        out
    }

    /// Form norms of the columns of `m`.
    pub fn column_norms<T: Real>(&self, ns: &NormalizedSystem<T>, m: &CMat<T>) -> Vec<T> {
        let gm = self.weight_rows(ns, m, |b| b.clone());
        (0..m.ncols())
            .map(|j| m.column(j).dotc(&gm.column(j)).re.max(T::zero()).sqrt())
            .collect()
    }

    /// Block-diagonal Gram matrix of the form.
    pub fn gram<T: Real>(&self, ns: &NormalizedSystem<T>) -> CMat<T> {
        let mut g = CMat::zeros(self.dim(), self.dim());
        for (i, k) in self.keys.iter().enumerate() {
            let b = ns.b(k.last().unwrap());
            let o = self.offsets[i];
            g.view_mut((o, o), b.shape()).copy_from(b);
        }
        g
    }

    /// Stacks a block-valued result into a `dim W_N × cols` matrix; keys
    /// outside the basis are reported as an error.
    pub fn assemble<T: Real>(&self, blocks: &BTreeMap<Word, CMat<T>>, cols: usize) -> Result<CMat<T>> {
        let mut m = CMat::zeros(self.dim(), cols);
        for (k, b) in blocks {
            let i = self
                .position(k)
                .ok_or_else(|| Error::Shape(format!("edge {k} is outside the basis")))?;
            m.view_mut((self.offsets[i], 0), b.shape()).copy_from(b);
        }
        Ok(m)
    }

    pub fn coords<T: Real>(&self, f: &MultiplicativeFunction<T>) -> Result<CVec<T>> {
        if f.depth() != self.depth {
            return Err(Error::Shape(format!(
                "function depth {} differs from basis depth {}",
                f.depth(),
                self.depth
            )));
        }
        let mut v = CVec::zeros(self.dim());
        for (k, c) in f.coeffs() {
            let i = self
                .position(k)
                .ok_or_else(|| Error::Shape(format!("edge {k} is outside the basis")))?;
            v.rows_mut(self.offsets[i], c.len()).copy_from(c);
        }
        Ok(v)
    }

    pub fn function<T: Real>(&self, v: &CVec<T>) -> MultiplicativeFunction<T> {
        let mut f = MultiplicativeFunction::zero(self.depth);
        for (i, k) in self.keys.iter().enumerate() {
            let c = v.rows(self.offsets[i], self.offsets[i + 1] - self.offsets[i]).into_owned();
            if c.iter().any(|z| *z != czero()) {
                f.add(k.clone(), &c);
            }
        }
        f
    }
}

/// Matrix of `π(y) : W_N → W_{N+|y|}` in edge coordinates.
pub fn translation_matrix<T: Real>(
    ns: &NormalizedSystem<T>,
    y: &Word,
    from: &EdgeBasis,
    to: &EdgeBasis,
) -> Result<CMat<T>> {
    let terms = from
        .keys
        .iter()
        .enumerate()
        .map(|(i, k)| (y.mul(&k.parent()), k.last().unwrap(), from.selector(i)))
        .collect();
    let blocks = canonicalize_block(ns, terms, to.depth, None)?;
    to.assemble(&blocks, from.dim())
}

/// `π(y)` applied to each column of `m` (coordinates in `from`).
pub fn translate_columns<T: Real>(
    ns: &NormalizedSystem<T>,
    y: &Word,
    from: &EdgeBasis,
    m: &CMat<T>,
    to: &EdgeBasis,
) -> Result<CMat<T>> {
    let terms = from
        .keys
        .iter()
        .enumerate()
        .map(|(i, k)| (y.mul(&k.parent()), k.last().unwrap(), from.rows(i, m)))
        .collect();
    let blocks = canonicalize_block(ns, terms, to.depth, None)?;
    to.assemble(&blocks, m.ncols())
}
