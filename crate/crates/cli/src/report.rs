//! The classification report and the pipeline that fills it.

use freerep_core::coefficients::{elementary, exponent_fit, sphere_sums, sphere_sums_w0, DEFAULT_BUDGET, FIT_BURN_IN};
use freerep_core::generate::rng;
use freerep_core::intertwiner::{build_j, finite_rank_check, ordered_pairs};
use freerep_core::scalar::cplx;
use freerep_core::spectral::classify;
use freerep_core::{CVec, CoefficientSeries, Error, MultiplicativeFunction, NormalizedSystem, SpectralReport, Tolerances, Verdict};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = include_str!("../schema/report.schema.json");

pub const NORMALIZATION: &str = "rho_T = 1, B_a = sum_b H_ba^* B_b H_ba, sum_a tr B_a = sum_a n_a";

/// Depth of the `W_N` isometry and intertwining checks in reports.
pub const W_DEPTH: usize = 2;
/// Longest word in the telescoped identity check.
pub const FIN_LENGTH: usize = 4;
pub const FINITE_RANK_DEPTHS: std::ops::RangeInclusive<usize> = 2..=4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub tool: String,
    pub version: String,
    pub label: Option<String>,
    pub seed: u64,
    pub normalization: Normalization,
    #[serde(rename = "rho_T")]
    pub rho_t: f64,
    #[serde(rename = "rho_D")]
    pub rho_d: f64,
    pub mult_one: usize,
    pub dim_one: usize,
    pub twins_equivalent: bool,
    pub class: Option<String>,
    pub predicted_exponent: Option<u32>,
    pub verdict: String,
    pub trace_condition: Option<TraceJson>,
    pub residuals: Residuals,
    pub measured_exponent: Option<Measured>,
    pub tolerances: TolerancesJson,
    /// Set when an enumeration or operator check hit its budget.
    pub partial: bool,
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub convention: String,
    pub original_rho: f64,
    pub method: String,
    pub iterations: usize,
    pub irreducible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceJson {
    pub value: [f64; 2],
    pub scale: f64,
    pub vanishes: bool,
    pub twin_value: [f64; 2],
    pub twin_vanishes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Residuals {
    pub compatibility: f64,
    pub e_symmetry: f64,
    pub q: Option<f64>,
    pub qq_antisymmetry: Option<f64>,
    pub q_least_squares: f64,
    pub q_eigenvector: Option<f64>,
    pub diagonal_eigenvectors: Option<[f64; 4]>,
    pub inverse: Option<f64>,
    pub inverse_relations: Option<f64>,
    pub fin: Option<f64>,
    pub isometry: Option<f64>,
    pub intertwining: Option<f64>,
    pub split: Option<SplitJson>,
    pub finite_rank: Vec<FiniteRankJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitJson {
    pub c: f64,
    pub lambda_plus: [f64; 2],
    pub lambda_minus: [f64; 2],
    pub unimodularity: f64,
    pub vieta: f64,
    pub projections: f64,
    pub commutation: f64,
    pub rank_plus: usize,
    pub rank_minus: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteRankJson {
    pub a: String,
    pub b: String,
    pub ranks: Vec<usize>,
    pub bound: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measured {
    pub p_hat: f64,
    pub raw: f64,
    pub fit_window: [usize; 2],
    pub r_squared: f64,
    pub vector: String,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesJson {
    pub fix: f64,
    pub pd: f64,
    pub null_rel: f64,
    pub inv: f64,
    pub cluster: f64,
    pub residual: f64,
    pub trace: f64,
}

impl From<&Tolerances> for TolerancesJson {
    fn from(t: &Tolerances) -> Self {
        Self {
            fix: t.fix,
            pd: t.pd,
            null_rel: t.null_rel,
            inv: t.inv,
            cluster: t.cluster,
            residual: t.residual,
            trace: t.trace,
        }
    }
}

/// Vector whose sphere sums give the measured exponent.
#[derive(Clone, Debug, PartialEq)]
pub enum Probe {
    /// Random vector in `⊕_a V_a` drawn from the seed.
    SeededW0,
    /// First basis vector on an edge `"x|y"` with `y = x·a`.
    Edge(String),
}

#[derive(Clone, Debug)]
pub struct Options {
    pub tol: Tolerances,
    pub nmax: usize,
    pub seed: u64,
    pub probe: Probe,
}

fn pair(z: freerep_core::Complex) -> [f64; 2] {
    [z.re, z.im]
}

/// Random vector in `⊕_a V_a` drawn from `seed`, used for the measured exponent.
pub fn seeded_w0(ns: &NormalizedSystem, seed: u64) -> Vec<CVec> {
    let mut r = rng(seed);
    ns.dims()
        .iter()
        .map(|&n| CVec::from_fn(n, |_, _| cplx(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)))
        .collect()
}

fn spectral_part(ns: &NormalizedSystem, rep: &SpectralReport) -> Residuals {
    Residuals {
        compatibility: ns.compatibility_residual(),
        e_symmetry: rep.e_symmetry_residual,
        q: rep.q.as_ref().map(|q| q.residual),
        qq_antisymmetry: rep.q.as_ref().map(|q| q.antisymmetry_residual),
        q_least_squares: rep.q_ls_residual,
        q_eigenvector: rep.q_eigvec_residual,
        diagonal_eigenvectors: rep.diag_residuals,
        inverse: None,
        inverse_relations: None,
        fin: None,
        isometry: None,
        intertwining: None,
        split: None,
        finite_rank: Vec::new(),
    }
}

/// Runs the full pipeline on a normalized system.
pub fn build_report(ns: &NormalizedSystem, label: Option<String>, opts: &Options) -> Result<ReportFile, Error> {
    let tol = &opts.tol;
    let rep = classify(ns, tol)?;
    let mut diagnostics = rep.diagnostics.clone();
    let mut partial = false;
    let mut residuals = spectral_part(ns, &rep);
    let mut failed = Vec::new();
    fn gate(name: &str, value: f64, bound: f64, failed: &mut Vec<String>) {
        if value.is_nan() || value > bound {
            failed.push(format!("{name} residual {value:.2e} above {bound:.1e}"));
        }
    }

    if rep.q.is_some() {
        let j = build_j(&rep, tol)?;
        residuals.inverse = Some(j.inverse_residual);
        residuals.inverse_relations = Some(j.relations.max());
        residuals.fin = Some(j.fin_residual(FIN_LENGTH));
        match j.verify_w(W_DEPTH) {
            Ok(w) => {
                residuals.isometry = Some(w.isometry);
                residuals.intertwining = Some(w.intertwining.max(w.deepening));
            }
            Err(Error::Budget(m)) => {
                partial = true;
                diagnostics.push(format!("W check skipped: {m}"));
            }
            Err(e) => return Err(e),
        }
        if rep.twins_equivalent {
            let s = j.split(tol)?;
            residuals.split = Some(SplitJson {
                c: s.c,
                lambda_plus: pair(s.lambda_plus),
                lambda_minus: pair(s.lambda_minus),
                unimodularity: s.unimodularity,
                vieta: s.vieta,
                projections: s.idempotency.max(s.orthogonality).max(s.completeness),
                commutation: s.commutation,
                rank_plus: s.rank_plus,
                rank_minus: s.rank_minus,
            });
        }
        let al = ns.alphabet();
        for (a, b) in ordered_pairs(ns.letters()) {
            match finite_rank_check(&j, a, b, FINITE_RANK_DEPTHS) {
                Ok(p) => {
                    if !(p.constant() && p.within_bound()) {
                        failed.push(format!(
                            "finite-rank profile for ({}, {}) is {:?}",
                            al.letter_name(a),
                            al.letter_name(b),
                            p.ranks
                        ));
                    }
                    residuals.finite_rank.push(FiniteRankJson {
                        a: al.letter_name(a),
                        b: al.letter_name(b),
                        ranks: p.ranks.iter().map(|r| r.1).collect(),
                        bound: p.bound,
                    });
                }
                Err(Error::Budget(m)) => {
                    partial = true;
                    diagnostics.push(format!("finite-rank check skipped: {m}"));
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }

    let r = tol.residual;
    gate("compatibility", residuals.compatibility, tol.fix, &mut failed);
    gate("E symmetry", residuals.e_symmetry, r, &mut failed);
    for (name, v) in [
        ("Q", residuals.q),
        ("qq antisymmetry", residuals.qq_antisymmetry),
        ("inverse", residuals.inverse),
        ("inverse relations", residuals.inverse_relations),
        ("fin", residuals.fin),
        ("isometry", residuals.isometry),
        ("intertwining", residuals.intertwining),
    ] {
        if let Some(v) = v {
            gate(name, v, r, &mut failed);
        }
    }
    if let Some(s) = &residuals.split {
        gate("split", s.unimodularity.max(s.vieta).max(s.projections), r, &mut failed);
        gate("split commutation", s.commutation, r, &mut failed);
    }

    let measured = measure(ns, opts, &mut partial)?;
    let mut verdict = rep.verdict;
    if !failed.is_empty() {
        verdict = Verdict::Undecided;
        diagnostics.extend(failed);
    }
    let t = rep.trace.as_ref();
    Ok(ReportFile {
        tool: "freerep".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        label,
        seed: opts.seed,
        normalization: Normalization {
            convention: NORMALIZATION.into(),
            original_rho: ns.original_rho,
            method: format!("{:?}", ns.method),
            iterations: ns.iterations,
            irreducible: ns.irreducible,
        },
        rho_t: ns.rho_certificate,
        rho_d: rep.rho_d(),
        mult_one: rep.mult_one(),
        dim_one: rep.dim_one(),
        twins_equivalent: rep.twins_equivalent,
        class: rep.class_label.map(|c| c.to_string()),
        predicted_exponent: rep.predicted_exponent,
        verdict: verdict.to_string(),
        trace_condition: t.map(|t| TraceJson {
            value: pair(t.value),
            scale: t.scale,
            vanishes: t.vanishes,
            twin_value: pair(t.twin_value),
            twin_vanishes: t.twin_vanishes,
        }),
        residuals,
        measured_exponent: measured,
        tolerances: tol.into(),
        partial,
        diagnostics,
    })
}

/// Elementary function `μ[x, x·a, e_1]` for the edge `"x|y"`.
pub fn edge_vector(ns: &NormalizedSystem, edge: &str) -> Result<MultiplicativeFunction, Error> {
    let al = ns.alphabet();
    let (x, y) = edge
        .split_once('|')
        .ok_or_else(|| Error::Parse(format!("edge {edge:?} is not of the form \"x|y\"")))?;
    let (x, y) = (al.parse_word(x)?, al.parse_word(y)?);
    let a = al
        .letters()
        .find(|&a| x.mul_letter(a) == y)
        .ok_or_else(|| Error::Parse(format!("{edge:?} is not an edge of the Cayley tree")))?;
    let mut v = CVec::zeros(ns.dims()[a]);
    v[0] = cplx(1.0, 0.0);
    Ok(elementary(ns, x, a, v))
}

/// Sphere sums `s_n` of the chosen probe vector.
pub fn probe_series(ns: &NormalizedSystem, opts: &Options) -> Result<(CoefficientSeries, String), Error> {
    match &opts.probe {
        Probe::SeededW0 => {
            let v = seeded_w0(ns, opts.seed);
            let s = sphere_sums_w0(ns, &v, &v, opts.nmax, DEFAULT_BUDGET);
            Ok((s, format!("seeded W0 vector, seed {}", opts.seed)))
        }
        Probe::Edge(edge) => {
            let f = edge_vector(ns, edge)?;
            let s = sphere_sums(ns, &f, &f, opts.nmax, DEFAULT_BUDGET)?;
            Ok((s, format!("edge {edge}")))
        }
    }
}

fn measure(ns: &NormalizedSystem, opts: &Options, partial: &mut bool) -> Result<Option<Measured>, Error> {
    if opts.nmax < FIT_BURN_IN + 5 {
        return Ok(None);
    }
    let (s, vector) = probe_series(ns, opts)?;
    *partial |= s.truncated;
    let Ok(fit) = exponent_fit(&s, FIT_BURN_IN) else {
        return Ok(None);
    };
    Ok(Some(Measured {
        p_hat: fit.p_hat,
        raw: fit.raw,
        fit_window: [fit.n0, fit.nmax],
        r_squared: fit.r_squared,
        vector,
        truncated: s.truncated,
    }))
}
