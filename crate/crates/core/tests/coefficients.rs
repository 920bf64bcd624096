use freerep_core::coefficients::{
    act, act_indicator, canonicalize, canonicalize_block, coefficient_dense, deepen, elementary,
    exponent_fit, good_vector_probe, inner_product, mu_eval, norm_sq, phi_eps, sphere_sums,
    sphere_sums_w0, terms_of, translate_columns, translation_matrix, w0_coefficient, EdgeBasis,
    Elementary, FIT_BURN_IN,
};
use freerep_core::generate::{isotropic, random_dims, random_system, rng};
use freerep_core::scalar::cplx;
use freerep_core::{
    inv, Alphabet, CMat, CVec, CoefficientSeries, Complex, MatrixSystem,
    MultiplicativeFunction, NormalizedSystem, Word,
};
use rand::Rng;

fn s0() -> NormalizedSystem {
    isotropic::<f64>(2).normalize().unwrap()
}

fn one() -> CVec {
    CVec::from_element(1, cplx(1.0, 0.0))
}

fn w(s: &str) -> Word {
    Alphabet::standard(2).parse_word(s).unwrap()
}

fn random_vec<R: Rng>(r: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| cplx(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5))
}

fn random_ns(seed: u64, k: usize, max_dim: usize) -> NormalizedSystem {
    let mut r = rng(seed);
    let dims = random_dims(&mut r, k, max_dim);
    let sys: MatrixSystem = random_system(&mut r, k, &dims, true);
    sys.normalize().unwrap()
}

fn series(s: Vec<f64>) -> CoefficientSeries {
    CoefficientSeries {
        s,
        v_norm: 1.0,
        w_norm: 1.0,
        truncated: false,
        requested_nmax: 0,
    }
}

/// Value of a canonical function at a vertex beyond its depth, by following
/// the path from the depth-`N` edge.
fn eval_canonical(ns: &NormalizedSystem, f: &MultiplicativeFunction, y: &Word) -> CVec {
    let n = f.depth();
    let key = y.prefix(n + 1);
    let Some(c) = f.get(&key) else {
        return CVec::zeros(ns.dims()[y.last().unwrap()]);
    };
    let ls = y.letters();
    let mut val = c.clone();
    for i in n + 1..ls.len() {
        val = ns.h(ls[i], ls[i - 1]) * val;
    }
    val
}

#[test]
fn elementary_values() {
    let ns = s0();
    let a = 0;
    assert_eq!(mu_eval(&ns, &Word::identity(), a, &one(), &w("a")), one());
    let v = mu_eval(&ns, &Word::identity(), a, &one(), &w("ab"));
    assert!((v[0] - cplx(1.0 / 3f64.sqrt(), 0.0)).norm() < 1e-13, "{}", v[0]);
    // going back through the edge gives zero
    assert_eq!(mu_eval(&ns, &Word::identity(), a, &one(), &w("a^-1"))[0], cplx(0.0, 0.0));

    let r = random_ns(41, 2, 3);
    let mut g = rng(42);
    let v = random_vec(&mut g, r.dims()[a]);
    let at_e = mu_eval(&r, &w("a^-1"), a, &v, &Word::identity());
    assert_eq!(at_e, v);
    let at_a = mu_eval(&r, &w("a^-1"), a, &v, &w("a"));
    assert!((at_a - r.h(a, a) * &v).norm() < 1e-14);
}

#[test]
fn canonical_coordinates_of_elementary_functions() {
    let ns = random_ns(43, 2, 3);
    let mut g = rng(44);
    let a = 0;
    let v = random_vec(&mut g, ns.dims()[a]);
    let t = Elementary::new(Word::identity(), a, v.clone());
    let f0 = canonicalize(&ns, std::slice::from_ref(&t), 0).unwrap();
    assert_eq!(f0.coeffs().len(), 1);
    assert_eq!(f0.get(&w("a")), Some(&v));
    let f1 = canonicalize(&ns, &[t], 1).unwrap();
    assert_eq!(f1.coeffs().len(), 3);
    for b in 0..4 {
        if b == inv(a) {
            continue;
        }
        let key = Word::letter(a).mul_letter(b);
        assert!((f1.get(&key).unwrap() - ns.h(b, a) * &v).norm() < 1e-14);
    }

    let s = s0();
    let f = canonicalize(&s, &[Elementary::new(w("a^-1"), 0, one())], 0).unwrap();
    assert_eq!(f.coeffs().len(), 3);
    for c in 0..4 {
        let key = Word::letter(c);
        if c == 1 {
            assert!(f.get(&key).is_none());
        } else {
            assert!((f.get(&key).unwrap()[0] - cplx(1.0 / 3f64.sqrt(), 0.0)).norm() < 1e-13);
        }
    }
}

#[test]
fn canonicalization_matches_pointwise_evaluation() {
    let ns = random_ns(45, 2, 2);
    let mut g = rng(46);
    let al = ns.alphabet().clone();
    let terms: Vec<Elementary<f64>> = [("a^-1 b", 2), ("", 1), ("b a", 1), ("b^-1", 3), ("a b^-1 a^-1", 2)]
        .iter()
        .map(|&(x, a)| {
            let x = al.parse_word(x).unwrap();
            Elementary::new(x, a, random_vec(&mut g, ns.dims()[a]))
        })
        .collect();
    let depth = terms.iter().map(|t| t.min_depth()).max().unwrap();
    for n in depth..depth + 2 {
        let f = canonicalize(&ns, &terms, n).unwrap();
        for y in al.sphere(n + 3) {
            let want = terms
                .iter()
                .map(|t| mu_eval(&ns, &t.x, t.a, &t.v, &y))
                .fold(CVec::zeros(ns.dims()[y.last().unwrap()]), |p, q| p + q);
            assert!((eval_canonical(&ns, &f, &y) - want).norm() < 1e-12, "{y}");
        }
    }
}

#[test]
fn block_canonicalization_matches_columnwise() {
    let ns = random_ns(47, 2, 2);
    let mut g = rng(48);
    let al = ns.alphabet().clone();
    let cols = 3;
    let specs = [("a^-1 b", 2), ("", 1), ("b a", 1), ("b^-1", 3), ("b a", 1)];
    let blocks: Vec<(Word, usize, CMat)> = specs
        .iter()
        .map(|&(x, a)| {
            let m = CMat::from_fn(ns.dims()[a], cols, |_, _| {
                cplx(g.random::<f64>() - 0.5, g.random::<f64>() - 0.5)
            });
            (al.parse_word(x).unwrap(), a, m)
        })
        .collect();
    for (n, cone) in [(3, None), (3, Some(w("b"))), (4, Some(w("b a")))] {
        let got = canonicalize_block(&ns, blocks.clone(), n, cone.as_ref()).unwrap();
        for j in 0..cols {
            let terms: Vec<Elementary<f64>> = blocks
                .iter()
                .map(|(x, a, m)| Elementary::new(x.clone(), *a, m.column(j).into_owned()))
                .collect();
            let f = canonicalize(&ns, &terms, n).unwrap();
            for (k, v) in f.coeffs() {
                let inside = cone.as_ref().is_none_or(|c| k.starts_with(c));
                match got.get(k) {
                    Some(b) if inside => assert!((b.column(j) - v).norm() < 1e-12),
                    None if inside => assert!(v.norm() < 1e-12),
                    Some(_) => panic!("edge {k} outside the cone"),
                    None => {}
                }
            }
        }
    }
}

#[test]
fn endpoint_inner_products() {
    let ns = s0();
    let f = elementary(&ns, Word::identity(), 0, one());
    let ip = inner_product(&ns, &f, &f).unwrap();
    assert!((ip - cplx(1.0, 0.0)).norm() < 1e-14);
    let g = act(&ns, &w("a^-1"), &f).unwrap();
    let ip = inner_product(&ns, &f, &g).unwrap();
    assert!((ip - cplx(1.0 / 3f64.sqrt(), 0.0)).norm() < 1e-14);
    // disjoint half-trees
    let p = elementary(&ns, w("a"), 0, one());
    let q = elementary(&ns, w("b"), 2, one());
    assert_eq!(inner_product(&ns, &p, &q).unwrap(), cplx(0.0, 0.0));
}

#[test]
fn inner_products_do_not_depend_on_depth() {
    let ns = random_ns(49, 3, 2);
    let mut g = rng(50);
    let al = ns.alphabet().clone();
    let f = canonicalize(&ns, &[Elementary::new(al.parse_word("a b").unwrap(), 4, random_vec(&mut g, ns.dims()[4]))], 2).unwrap();
    let h = canonicalize(&ns, &[Elementary::new(Word::identity(), 0, random_vec(&mut g, ns.dims()[0]))], 0).unwrap();
    let base = inner_product(&ns, &f, &h).unwrap();
    for n in 3..5 {
        let fd = deepen(&ns, &f, n).unwrap();
        let hd = deepen(&ns, &h, n).unwrap();
        assert!((inner_product(&ns, &fd, &hd).unwrap() - base).norm() < 1e-12);
    }
}

#[test]
fn group_action_is_unitary_and_multiplicative() {
    let ns = random_ns(51, 2, 3);
    let mut g = rng(52);
    let f = canonicalize(
        &ns,
        &[
            Elementary::new(Word::identity(), 0, random_vec(&mut g, ns.dims()[0])),
            Elementary::new(w("b"), 3, random_vec(&mut g, ns.dims()[3])),
        ],
        1,
    )
    .unwrap();
    assert_eq!(act(&ns, &Word::identity(), &f).unwrap(), f);
    let n = norm_sq(&ns, &f);
    for y in ["a b", "b^-1 a^-1 a^-1", "a^-1"] {
        let pf = act(&ns, &w(y), &f).unwrap();
        assert!((norm_sq(&ns, &pf) - n).abs() < 1e-10 * n);
    }
    let (x, y) = (w("a b"), w("b a^-1"));
    let lhs = act(&ns, &x, &act(&ns, &y, &f).unwrap()).unwrap();
    let rhs = act(&ns, &x.mul(&y), &f).unwrap();
    let d = lhs.axpy(cplx(-1.0, 0.0), &deepen(&ns, &rhs, lhs.depth()).unwrap()).unwrap();
    assert!(norm_sq(&ns, &d) < 1e-20);

    let s = s0();
    let e = elementary(&s, Word::identity(), 0, one());
    assert!((norm_sq(&s, &act(&s, &w("a b"), &e).unwrap()) - 1.0).abs() < 1e-14);
}

#[test]
fn indicator_action() {
    let ns = random_ns(53, 2, 2);
    let mut g = rng(54);
    let f = elementary(&ns, Word::identity(), 2, random_vec(&mut g, ns.dims()[2]));
    let cut = act_indicator(&ns, &w("a"), &f).unwrap();
    assert!(cut.coeffs().is_empty());
    // the indicators of the 2k first-letter cones split any function
    let h = canonicalize(
        &ns,
        &[
            Elementary::new(Word::identity(), 0, random_vec(&mut g, ns.dims()[0])),
            Elementary::new(w("a^-1"), 0, random_vec(&mut g, ns.dims()[0])),
        ],
        1,
    )
    .unwrap();
    let mut sum = MultiplicativeFunction::zero(1);
    let mut parts = 0.0;
    for c in 0..4 {
        let p = act_indicator(&ns, &Word::letter(c), &h).unwrap();
        parts += norm_sq(&ns, &p);
        sum = sum.axpy(cplx(1.0, 0.0), &p).unwrap();
    }
    let d = sum.axpy(cplx(-1.0, 0.0), &h).unwrap();
    assert!(norm_sq(&ns, &d) < 1e-24);
    assert!((parts - norm_sq(&ns, &h)).abs() < 1e-12);
    // idempotent
    let once = act_indicator(&ns, &w("b a"), &h).unwrap();
    assert_eq!(act_indicator(&ns, &w("b a"), &once).unwrap(), once);
}

#[test]
fn endpoint_sphere_sums() {
    let ns = s0();
    let f = elementary(&ns, Word::identity(), 0, one());
    let s = sphere_sums(&ns, &f, &f, 12, 1e9).unwrap();
    assert!((s.s[0] - 1.0).abs() < 1e-12);
    assert!((s.s[1] - 2.0 / 3.0).abs() < 1e-12);
    assert!(s.haagerup_violation().is_none());
    let fit = exponent_fit(&s, FIT_BURN_IN).unwrap();
    assert!((fit.p_hat - 3.0).abs() <= 0.3, "{fit:?}");
}

#[test]
fn sphere_sums_match_dense_coefficients() {
    for (seed, k) in [(55, 2), (56, 3)] {
        let ns = random_ns(seed, k, 2);
        let mut g = rng(seed + 100);
        let v: Vec<CVec> = ns.dims().iter().map(|&n| random_vec(&mut g, n)).collect();
        let wv: Vec<CVec> = ns.dims().iter().map(|&n| random_vec(&mut g, n)).collect();
        let nmax = if k == 2 { 5 } else { 3 };
        let fast = sphere_sums_w0(&ns, &v, &wv, nmax, 1e9);
        let f = MultiplicativeFunction::from_w0(&v);
        let h = MultiplicativeFunction::from_w0(&wv);
        for n in 0..=nmax {
            let dense: f64 = ns
                .alphabet()
                .sphere(n)
                .map(|y| {
                    let c = coefficient_dense(&ns, &f, &y, &h).unwrap();
                    let c2 = w0_coefficient(&ns, &v, &wv, &y);
                    assert!((c - c2).norm() < 1e-12 * (1.0 + c.norm()));
                    c.norm_sqr()
                })
                .sum();
            assert!((fast.s[n] - dense).abs() < 1e-10 * (1.0 + dense), "n = {n}");
        }
    }
}

#[test]
fn deeper_functions_use_the_translate_expansion() {
    let ns = random_ns(57, 2, 2);
    let mut g = rng(58);
    let f = canonicalize(&ns, &[Elementary::new(w("b"), 0, random_vec(&mut g, ns.dims()[0]))], 1).unwrap();
    let h = elementary(&ns, Word::identity(), 3, random_vec(&mut g, ns.dims()[3]));
    let s = sphere_sums(&ns, &f, &h, 4, 1e9).unwrap();
    for n in 0..=4 {
        let dense: f64 = ns
            .alphabet()
            .sphere(n)
            .map(|y| coefficient_dense(&ns, &f, &y, &h).unwrap().norm_sqr())
            .sum();
        assert!((s.s[n] - dense).abs() < 1e-10 * (1.0 + dense));
    }
}

#[test]
fn budget_truncates_the_series() {
    let ns = s0();
    let f = elementary(&ns, Word::identity(), 0, one());
    let s = sphere_sums(&ns, &f, &f, 12, 1000.0).unwrap();
    assert!(s.truncated);
    assert!(s.nmax() < 12);
    assert_eq!(s.requested_nmax, 12);
}

#[test]
fn synthetic_exponent_fits() {
    let flat = series(vec![2.0; 13]);
    assert!((exponent_fit(&flat, FIT_BURN_IN).unwrap().p_hat - 1.0).abs() < 1e-12);
    let quad = series((0..13).map(|n| 0.7 * (n * n) as f64).collect());
    let fit = exponent_fit(&quad, FIT_BURN_IN).unwrap();
    assert!((fit.p_hat - 3.0).abs() < 1e-12);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
    let lin = series((0..13).map(|n| 5.0 * n as f64).collect());
    assert!((exponent_fit(&lin, FIT_BURN_IN).unwrap().p_hat - 2.0).abs() < 1e-12);
    let steep = series((0..13).map(|n| (n as f64).powi(4)).collect());
    let fit = exponent_fit(&steep, FIT_BURN_IN).unwrap();
    assert_eq!(fit.p_hat, 3.0);
    assert!((fit.raw - 5.0).abs() < 1e-12);
    assert!(exponent_fit(&series(vec![1.0; 7]), FIT_BURN_IN).is_err());
}

#[test]
fn good_vector_probe_on_synthetic_and_generated_series() {
    assert!(good_vector_probe(&series(vec![1.5; 13])).plausible);
    assert!(!good_vector_probe(&series((0..13).map(|n| (n * n) as f64).collect())).plausible);
    let ns = s0();
    let f = elementary(&ns, Word::identity(), 0, one());
    let s = sphere_sums(&ns, &f, &f, 12, 1e9).unwrap();
    let probe = good_vector_probe(&s);
    assert!(!probe.plausible, "{probe:?}");
    assert!(probe.heuristic);
}

#[test]
fn phi_eps_truncation() {
    let s = series(vec![1.0; 11]);
    let p = phi_eps(&s, 2.0);
    let exact: f64 = (0..=10).map(|n| (-2.0 * n as f64).exp()).sum();
    assert!((p.partial - exact).abs() < 1e-14);
    assert!(p.adequate);
    let small = phi_eps(&s, 0.05);
    assert!(!small.adequate);
    assert!(small.required_nmax > 10);
    let again = phi_eps(&series(vec![1.0; small.required_nmax + 1]), 0.05);
    assert!(again.tail_bound < 1e-6 * again.partial * 1.0001 || again.adequate);
}

#[test]
fn edge_basis_round_trip_and_gram() {
    let ns = random_ns(59, 2, 3);
    let mut g = rng(60);
    let f = canonicalize(
        &ns,
        &[
            Elementary::new(w("a^-1"), 2, random_vec(&mut g, ns.dims()[2])),
            Elementary::new(w("b"), 0, random_vec(&mut g, ns.dims()[0])),
        ],
        2,
    )
    .unwrap();
    let basis = EdgeBasis::new(ns.alphabet(), ns.dims(), 2, None);
    assert_eq!(basis.keys.len(), 36);
    let c = basis.coords(&f).unwrap();
    assert_eq!(basis.function(&c), f);
    let gram = basis.gram(&ns);
    let ip: Complex = c.dotc(&(&gram * &c));
    assert!((ip.re - norm_sq(&ns, &f)).abs() < 1e-12);
    assert!(basis.coords(&deepen(&ns, &f, 3).unwrap()).is_err());
}

#[test]
fn translation_matrices_agree_with_the_action() {
    let ns = random_ns(61, 2, 2);
    let mut g = rng(62);
    let from = EdgeBasis::new(ns.alphabet(), ns.dims(), 1, None);
    let y = w("b a^-1");
    let to = EdgeBasis::new(ns.alphabet(), ns.dims(), 1 + y.len(), None);
    let t = translation_matrix(&ns, &y, &from, &to).unwrap();
    let f = canonicalize(&ns, &[Elementary::new(w("a"), 2, random_vec(&mut g, ns.dims()[2]))], 1).unwrap();
    let pf = act(&ns, &y, &f).unwrap();
    let c = from.coords(&f).unwrap();
    assert!((&t * &c - to.coords(&pf).unwrap()).norm() < 1e-12);
    let m = CMat::from_fn(from.dim(), 2, |_, _| cplx(g.random::<f64>(), g.random::<f64>()));
    let cols = translate_columns(&ns, &y, &from, &m, &to).unwrap();
    assert!((cols - &t * &m).norm() < 1e-12);
    // unitarity in the form
    let (gf, gt) = (from.gram(&ns), to.gram(&ns));
    assert!((t.adjoint() * gt * &t - gf).norm() < 1e-10);
}

#[test]
fn terms_recover_the_function() {
    let ns = random_ns(63, 2, 2);
    let mut g = rng(64);
    let f = canonicalize(&ns, &[Elementary::new(w("a^-1 b"), 2, random_vec(&mut g, ns.dims()[2]))], 2).unwrap();
    let back = canonicalize(&ns, &terms_of(&f), 2).unwrap();
    assert_eq!(back, f);
}
