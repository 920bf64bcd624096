use std::collections::BTreeMap;

use freerep_core::generate::{doubled, isotropic, random_dims, random_system, rng};
use freerep_core::scalar::cplx;
use freerep_core::system::{Irreducibility, ViolationKind};
use freerep_core::{Alphabet, CMat, MatrixSystem, SystemSpec};

fn scalar(x: f64) -> CMat {
    CMat::from_element(1, 1, cplx(x, 0.0))
}

fn unscaled_s0() -> MatrixSystem {
    MatrixSystem::from_fn(Alphabet::standard(2), vec![1; 4], |b, a| {
        (b != freerep_core::inv(a)).then(|| scalar(1.0))
    })
    .unwrap()
}

fn ones(l: usize) -> Vec<CMat> {
    vec![scalar(1.0); l]
}

#[test]
fn endpoint_system_is_valid() {
    let s0: MatrixSystem = isotropic(2);
    assert!(s0.validate().is_empty());
    assert!((s0.h(0, 2)[(0, 0)].re - 1.0 / 3f64.sqrt()).abs() < 1e-15);
}

#[test]
fn validation_flags_cancelling_and_misshapen_blocks() {
    let mut blocks = BTreeMap::new();
    blocks.insert((1, 0), scalar(1.0));
    blocks.insert((2, 0), scalar(1.0));
    let spec = SystemSpec {
        alphabet: Alphabet::standard(2),
        dims: vec![1; 4],
        blocks,
    };
    let v = spec.validate();
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].kind, ViolationKind::NonzeroAtCancellation);
    assert!(v[0].message.contains("ba = e"));
    assert!(spec.build().is_err());

    let mut blocks = BTreeMap::new();
    blocks.insert((2, 0), CMat::zeros(2, 1));
    blocks.insert((3, 0), CMat::from_element(2, 2, cplx(1.0, 0.0)));
    let spec = SystemSpec {
        alphabet: Alphabet::standard(2),
        dims: vec![2; 4],
        blocks,
    };
    let kinds: Vec<ViolationKind> = spec.validate().into_iter().map(|v| v.kind).collect();
    assert_eq!(kinds, vec![ViolationKind::Shape]);
}

#[test]
fn validation_flags_empty_and_nonfinite_data() {
    let spec = SystemSpec {
        alphabet: Alphabet::standard(2),
        dims: vec![1; 4],
        blocks: BTreeMap::new(),
    };
    assert_eq!(spec.validate()[0].kind, ViolationKind::AllZero);
    let mut blocks = BTreeMap::new();
    blocks.insert((2, 0), scalar(f64::NAN));
    blocks.insert((3, 0), scalar(1.0));
    let spec = SystemSpec {
        alphabet: Alphabet::standard(2),
        dims: vec![1, 1, 1],
        blocks,
    };
    assert_eq!(spec.validate()[0].kind, ViolationKind::Dimension);
}

#[test]
fn irreducibility_examples() {
    let s0: MatrixSystem = isotropic(2);
    assert_eq!(s0.irreducibility(), Irreducibility::Irreducible);
    assert_eq!(doubled(&s0).irreducibility(), Irreducibility::Reducible);
    let mut r = rng(11);
    for _ in 0..5 {
        let sys: MatrixSystem = random_system(&mut r, 2, &[2; 4], true);
        assert!(sys.is_irreducible());
    }
}

#[test]
fn transfer_operator_examples() {
    let s0: MatrixSystem = isotropic(2);
    let t = s0.transfer_apply(&ones(4)).unwrap();
    for m in &t {
        assert!((m[(0, 0)] - cplx(1.0, 0.0)).norm() < 1e-15);
    }
    let t = unscaled_s0().transfer_apply(&ones(4)).unwrap();
    for m in &t {
        assert!((m[(0, 0)] - cplx(3.0, 0.0)).norm() < 1e-14);
    }
    let mut r = rng(12);
    let sys: MatrixSystem = random_system(&mut r, 2, &[2, 1, 3, 2], true);
    let zero: Vec<CMat> = sys.dims().iter().map(|&n| CMat::zeros(n, n)).collect();
    for m in sys.transfer_apply(&zero).unwrap() {
        assert_eq!(m.norm(), 0.0);
    }
}

#[test]
fn transfer_radius_examples() {
    let s0: MatrixSystem = isotropic(2);
    assert!((s0.spectral_radius_t().unwrap() - 1.0).abs() < 1e-12);
    assert!((unscaled_s0().spectral_radius_t().unwrap() - 3.0).abs() < 1e-12);
}

/// Perron root of the nonnegative matrix `|H_ba|²` by power iteration.
fn perron_root(sys: &MatrixSystem) -> f64 {
    let l = sys.letters();
    let m: Vec<Vec<f64>> = (0..l)
        .map(|a| (0..l).map(|b| sys.h(b, a)[(0, 0)].norm_sqr()).collect())
        .collect();
    let mut x = vec![1.0; l];
    let mut rho = 0.0;
    for _ in 0..5000 {
        let y: Vec<f64> = (0..l).map(|a| (0..l).map(|b| m[a][b] * x[b]).sum()).collect();
        rho = y.iter().cloned().fold(0.0, f64::max);
        x = y.iter().map(|v| v / rho).collect();
    }
    rho
}

#[test]
fn scalar_transfer_radius_matches_perron_root() {
    let mut r = rng(13);
    for _ in 0..10 {
        let sys: MatrixSystem = random_system(&mut r, 2, &[1; 4], true);
        let rho = sys.spectral_radius_t().unwrap();
        assert!((rho - perron_root(&sys)).abs() < 1e-10 * rho);
    }
}

#[test]
fn normalizing_the_unscaled_endpoint_system() {
    let ns = unscaled_s0().normalize().unwrap();
    for a in 0..4 {
        assert!((ns.b(a)[(0, 0)] - cplx(1.0, 0.0)).norm() < 1e-12);
        for b in 0..4 {
            if b != freerep_core::inv(a) {
                assert!((ns.h(b, a)[(0, 0)].re - 1.0 / 3f64.sqrt()).abs() < 1e-12);
            }
        }
    }
    let again = ns.system.normalize().unwrap();
    for a in 0..4 {
        assert!((again.b(a) - ns.b(a)).norm() < 1e-12);
        for b in 0..4 {
            assert!((again.h(b, a) - ns.h(b, a)).norm() < 1e-12);
        }
    }
}

/// Positive fixed tuple of `T` by plain power iteration on trace-normalized tuples.
fn power_fixed_tuple(sys: &MatrixSystem) -> Vec<CMat> {
    let total: f64 = sys.dims().iter().sum::<usize>() as f64;
    let mut t: Vec<CMat> = sys.dims().iter().map(|&n| CMat::identity(n, n)).collect();
    for _ in 0..20000 {
        let next = sys.transfer_apply(&t).unwrap();
        let tr: f64 = next.iter().map(|m| m.trace().re).sum();
        t = next.into_iter().map(|m| m * cplx(total / tr, 0.0)).collect();
    }
    t
}

#[test]
fn normalization_matches_power_iteration() {
    let mut r = rng(14);
    for _ in 0..4 {
        let sys: MatrixSystem = random_system(&mut r, 2, &[2; 4], true);
        let ns = sys.normalize().unwrap();
        assert!(ns.compatibility_residual() < 1e-10);
        assert!((ns.rho_certificate - 1.0).abs() < 1e-8);
        let oracle = power_fixed_tuple(&ns.system);
        for a in 0..4 {
            assert!((ns.b(a) - &oracle[a]).norm() < 1e-8, "letter {a}");
        }
    }
}

#[test]
fn normalization_traces_sum_to_total_dimension() {
    let mut r = rng(15);
    for _ in 0..5 {
        let dims = random_dims(&mut r, 3, 3);
        let sys: MatrixSystem = random_system(&mut r, 3, &dims, true);
        let ns = sys.normalize().unwrap();
        let tr: f64 = (0..6).map(|a| ns.b(a).trace().re).sum();
        assert!((tr - dims.iter().sum::<usize>() as f64).abs() < 1e-10);
    }
}

#[test]
fn reducible_systems_are_reported() {
    let s0: MatrixSystem = isotropic(2);
    let d = doubled(&s0);
    assert!(!d.is_irreducible());
}

#[test]
fn works_in_single_precision() {
    let s0: freerep_core::system::MatrixSystem<f32> = isotropic(2);
    let ns = s0.normalize().unwrap();
    assert!((ns.rho_certificate - 1.0).abs() < 1e-5);
    assert!((ns.b(0)[(0, 0)].re - 1.0).abs() < 1e-5);
}
