use freerep_core::generate::{isotropic, random_system, relabeled, rng};
use freerep_core::scalar::cplx;
use freerep_core::twin::{
    e_maps, e_symmetry_residual, solve_equivalence, symmetrize_and_unitarize_k, twin, twin_system,
    EquivalenceStatus, KBranch,
};
use freerep_core::{inv, CMat, MatrixSystem, NormalizedSystem, Tolerances};

fn s0() -> NormalizedSystem {
    isotropic::<f64>(2).normalize().unwrap()
}

#[test]
fn twin_of_the_endpoint_system_is_itself() {
    let ns = s0();
    let tw = twin(&ns).unwrap();
    for a in 0..4 {
        assert!((tw.b(a)[(0, 0)] - cplx(1.0, 0.0)).norm() < 1e-12);
        for b in 0..4 {
            assert!((tw.h(b, a) - ns.h(b, a)).norm() < 1e-15);
        }
    }
}

#[test]
fn twin_swaps_dimensions_of_inverse_letters() {
    let mut r = rng(21);
    let sys: MatrixSystem = random_system(&mut r, 2, &[2, 3, 1, 2], true);
    let tw = twin_system(&sys);
    assert_eq!(tw.dims(), &[3, 2, 2, 1]);
}

#[test]
fn twin_is_an_involution_up_to_equivalence() {
    let tol = Tolerances::default();
    let mut r = rng(22);
    for _ in 0..5 {
        let sys: MatrixSystem = random_system(&mut r, 2, &[2, 1, 2, 2], true);
        let ns = sys.normalize().unwrap();
        let tt = twin(&twin(&ns).unwrap()).unwrap();
        let eq = solve_equivalence(&ns.system, &tt.system, &tol).unwrap();
        assert_eq!(eq.status, EquivalenceStatus::Equivalent);
        assert_eq!(eq.solution_space_dim, 1);
    }
}

/// `E_ab` summed straight from the original data, with `Ĥ_{ac⁻¹} = H_{c a⁻¹}^H`.
fn e_oracle(ns: &NormalizedSystem, a: usize, b: usize) -> CMat {
    let l = ns.letters();
    let mut acc = CMat::zeros(ns.dims()[inv(a)], ns.dims()[b]);
    if b == inv(a) {
        return acc;
    }
    for c in 0..l {
        if c == a || c == inv(b) {
            continue;
        }
        acc += ns.h(c, inv(a)).adjoint() * ns.b(c) * ns.h(c, b);
    }
    acc
}

#[test]
fn endpoint_coupling_maps() {
    let ns = s0();
    let tw = twin(&ns).unwrap();
    let e = e_maps(&ns, &tw);
    for a in 0..4 {
        for b in 0..4 {
            let want = if b == inv(a) { 0.0 } else { 2.0 / 3.0 };
            assert!((e[a * 4 + b][(0, 0)] - cplx(want, 0.0)).norm() < 1e-12, "E_{a}{b}");
        }
    }
}

#[test]
fn coupling_maps_match_direct_summation_and_symmetry() {
    let mut r = rng(23);
    for k in [2, 3] {
        let dims: Vec<usize> = (0..2 * k).map(|i| 1 + i % 3).collect();
        let sys: MatrixSystem = random_system(&mut r, k, &dims, true);
        let ns = sys.normalize().unwrap();
        let tw = twin(&ns).unwrap();
        let e = e_maps(&ns, &tw);
        let l = 2 * k;
        for a in 0..l {
            for b in 0..l {
                let want = e_oracle(&ns, a, b);
                assert!((&e[a * l + b] - &want).norm() < 1e-12);
                let mirror = e_oracle(&ns, inv(b), inv(a)).adjoint();
                assert!((&mirror - &want).norm() < 1e-12);
            }
        }
        assert!(e_symmetry_residual(&e, l) < 1e-12);
    }
}

#[test]
fn equivalence_examples() {
    let tol = Tolerances::default();
    let ns = s0();
    let tw = twin(&ns).unwrap();
    let eq = solve_equivalence(&ns.system, &tw.system, &tol).unwrap();
    assert_eq!(eq.status, EquivalenceStatus::Equivalent);
    assert_eq!(eq.solution_space_dim, 1);
    let k = eq.k.unwrap();
    let k0 = k[0][(0, 0)];
    for m in &k {
        assert!((m[(0, 0)] - k0).norm() < 1e-12);
    }

    let mut r = rng(24);
    let sys: MatrixSystem = random_system(&mut r, 2, &[2, 2, 1, 2], true);
    let eq = solve_equivalence(&sys, &sys, &tol).unwrap();
    assert_eq!(eq.status, EquivalenceStatus::Equivalent);
    let k = eq.k.unwrap();
    let s = k[0][(0, 0)];
    for (a, m) in k.iter().enumerate() {
        let n = sys.dims()[a];
        assert!((m - CMat::identity(n, n) * s).norm() < 1e-10);
    }
}

#[test]
fn relabeling_a_scalar_system_breaks_equivalence() {
    let tol = Tolerances::default();
    let mut r = rng(25);
    let sys: MatrixSystem = random_system(&mut r, 2, &[1; 4], true);
    let swapped = relabeled(&sys, &[2, 3, 0, 1]).unwrap();
    let eq = solve_equivalence(&sys, &swapped, &tol).unwrap();
    assert_eq!(eq.status, EquivalenceStatus::Inequivalent);
    assert_eq!(eq.solution_space_dim, 0);
    assert!(relabeled(&sys, &[1, 0, 3, 2]).is_ok());
    assert!(relabeled(&sys, &[0, 2, 1, 3]).is_err());
}

#[test]
fn symmetrizing_k() {
    let tol = Tolerances::default();
    let ns = s0();
    let tw = twin(&ns).unwrap();
    let unit: Vec<CMat> = vec![CMat::from_element(1, 1, cplx(1.0, 0.0)); 4];
    let k = symmetrize_and_unitarize_k(&unit, &ns, &tw, &tol).unwrap();
    assert!(k.unitary);
    assert_eq!(k.branch, KBranch::Hermitian);
    for m in &k.k {
        assert!((m[(0, 0)] - cplx(1.0, 0.0)).norm() < 1e-12);
    }
    for theta in [0.3, 1.1, 2.0, 2.9] {
        let rot: Vec<CMat> = unit.iter().map(|m| m * cplx(f64::cos(theta), f64::sin(theta))).collect();
        let kr = symmetrize_and_unitarize_k(&rot, &ns, &tw, &tol).unwrap();
        let expected = if f64::cos(theta).abs() >= f64::sin(theta).abs() {
            KBranch::Hermitian
        } else {
            KBranch::SkewHermitian
        };
        assert_eq!(kr.branch, expected);
        for (x, y) in kr.k.iter().zip(&k.k) {
            assert!((x - y).norm() < 1e-12, "theta {theta}");
        }
    }
}

#[test]
fn symmetric_k_is_a_fixed_point() {
    let tol = Tolerances::default();
    let mut r = rng(26);
    let sys: MatrixSystem = freerep_core::generate::self_twin(&mut r, 2, 2, true);
    let ns = sys.normalize().unwrap();
    let tw = twin(&ns).unwrap();
    let eq = solve_equivalence(&ns.system, &tw.system, &tol).unwrap();
    let k = symmetrize_and_unitarize_k(&eq.k.unwrap(), &ns, &tw, &tol).unwrap();
    assert!(k.symmetry_residual < 1e-10);
    let again = symmetrize_and_unitarize_k(&k.k, &ns, &tw, &tol).unwrap();
    for (x, y) in again.k.iter().zip(&k.k) {
        assert!((x - y).norm() < 1e-10);
    }
}
