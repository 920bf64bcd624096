//! Seeded instance generators: the isotropic endpoint system, random dense
//! systems, self-twin systems and classifier-filtered class exemplars.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::free_group::{cancels, inv, Alphabet, Letter};
use crate::scalar::{cplx, lit, CMat, Real};
use crate::spectral::{classify, ClassLabel, SpectralReport};
use crate::system::{MatrixSystem, NormalizedSystem};
use crate::tolerances::Tolerances;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian<T: Real, R: Rng>(rng: &mut R, rows: usize, cols: usize, complex: bool) -> CMat<T> {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if complex { rng.sample(StandardNormal) } else { 0.0 };
        cplx(re, im)
    })
}

/// `F_k` with every block the scalar `1/√(2k−1)`; for `k = 2` this is the
/// endpoint example with `s_1 = 2/3`.
pub fn isotropic<T: Real>(k: usize) -> MatrixSystem<T> {
    let h: T = T::one() / lit::<T>((2 * k - 1) as f64).sqrt();
    MatrixSystem::from_fn(Alphabet::standard(k), vec![1; 2 * k], |b, a| {
        (!cancels(b, a)).then(|| CMat::from_element(1, 1, cplx(to_f(h), 0.0)))
    })
    .expect("isotropic system is valid")
}

fn to_f<T: Real>(x: T) -> f64 {
    crate::scalar::to_f64(x)
}

/// The endpoint system on `F_2`.
pub fn endpoint_f2<T: Real>() -> MatrixSystem<T> {
    isotropic(2)
}

/// Dense Gaussian blocks with the given dimensions per letter.
pub fn random_system<T: Real, R: Rng>(
    rng: &mut R,
    k: usize,
    dims: &[usize],
    complex: bool,
) -> MatrixSystem<T> {
    MatrixSystem::from_fn(Alphabet::standard(k), dims.to_vec(), |b, a| {
        (!cancels(b, a)).then(|| gaussian(rng, dims[b], dims[a], complex))
    })
    .expect("random system is valid")
}

/// Random dimensions in `1..=max_dim`, one per letter.
pub fn random_dims<R: Rng>(rng: &mut R, k: usize, max_dim: usize) -> Vec<usize> {
    (0..2 * k).map(|_| rng.random_range(1..=max_dim)).collect()
}

/// Self-twin system: `H_{a^{-1} b^{-1}} = H_ba^H` and `n_a = n_{a^{-1}}`.
pub fn self_twin<T: Real, R: Rng>(rng: &mut R, k: usize, n: usize, complex: bool) -> MatrixSystem<T> {
    let l = 2 * k;
    let mut blocks: Vec<Option<CMat<T>>> = vec![None; l * l];
    for a in 0..l {
        for b in 0..l {
            if cancels(b, a) || blocks[b * l + a].is_some() {
                continue;
            }
            let m: CMat<T> = gaussian(rng, n, n, complex);
            blocks[inv(a) * l + inv(b)] = Some(m.adjoint());
            blocks[b * l + a] = Some(m);
        }
    }
    MatrixSystem::from_fn(Alphabet::standard(k), vec![n; l], |b, a| blocks[b * l + a].clone())
        .expect("self-twin system is valid")
}

/// `H_ba ↦ e^{iθ} g_b H_ba g_a^{-1}` for random nonzero scalars `g`.
pub fn phase_gauge<T: Real, R: Rng>(rng: &mut R, sys: &MatrixSystem<T>, theta: f64) -> MatrixSystem<T> {
    let g: Vec<(f64, f64)> = (0..sys.letters())
        .map(|_| {
            let r: f64 = 0.5 + rng.random::<f64>();
            let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            (r, phi)
        })
        .collect();
    let phase = cplx::<T>(theta.cos(), theta.sin());
    MatrixSystem::from_fn(sys.alphabet().clone(), sys.dims().to_vec(), |b, a| {
        if cancels(b, a) {
            return None;
        }
        let (rb, pb) = g[b];
        let (ra, pa) = g[a];
        let s = cplx::<T>((rb / ra) * (pb - pa).cos(), (rb / ra) * (pb - pa).sin());
        Some(sys.h(b, a) * (phase * s))
    })
    .expect("gauge transform is valid")
}

/// Direct sum of a system with itself (reducible by construction).
pub fn doubled<T: Real>(sys: &MatrixSystem<T>) -> MatrixSystem<T> {
    let dims: Vec<usize> = sys.dims().iter().map(|n| 2 * n).collect();
    MatrixSystem::from_fn(sys.alphabet().clone(), dims.clone(), |b, a| {
        if cancels(b, a) {
            return None;
        }
        let h = sys.h(b, a);
        let mut m = CMat::zeros(dims[b], dims[a]);
        m.view_mut((0, 0), h.shape()).copy_from(h);
        m.view_mut(h.shape(), h.shape()).copy_from(h);
        Some(m)
    })
    .expect("direct sum is valid")
}

/// Relabels letters by a permutation that commutes with inversion.
pub fn relabeled<T: Real>(sys: &MatrixSystem<T>, perm: &[Letter]) -> Result<MatrixSystem<T>> {
    if perm.len() != sys.letters() || perm.iter().enumerate().any(|(a, &p)| perm[inv(a)] != inv(p)) {
        return Err(Error::Rejected("permutation must commute with inversion".into()));
    }
    let mut back = vec![0; perm.len()];
    for (a, &p) in perm.iter().enumerate() {
        back[p] = a;
    }
    let dims: Vec<usize> = (0..perm.len()).map(|p| sys.dim(back[p])).collect();
    MatrixSystem::from_fn(sys.alphabet().clone(), dims, |b, a| {
        (!cancels(b, a)).then(|| sys.h(back[b], back[a]).clone())
    })
}

/// A classified instance together with the generator draw that produced it.
#[derive(Clone, Debug)]
pub struct Instance {
    pub label: ClassLabel,
    pub seed: u64,
    pub draw: usize,
    pub system: NormalizedSystem<f64>,
    pub report: SpectralReport<f64>,
}

/// Families searched for each class.
fn candidate(label: ClassLabel, rng: &mut ChaCha8Rng) -> MatrixSystem<f64> {
    match label {
        ClassLabel::AI => {
            let theta = 0.2 + 2.7 * rng.random::<f64>();
            phase_gauge(rng, &isotropic(2), theta)
        }
        ClassLabel::AII => {
            let dims = random_dims(rng, 2, 2);
            random_system(rng, 2, &dims, true)
        }
        ClassLabel::BI | ClassLabel::BII => self_twin(rng, 2, 1, false),
    }
}

/// Draws candidates from a seeded family until `count` of them classify
/// with the requested label and no diagnostics.
pub fn search(label: ClassLabel, seed: u64, count: usize, max_draws: usize) -> Result<Vec<Instance>> {
    let tol = Tolerances::default();
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for draw in 0..max_draws {
        let sys = candidate(label, &mut rng);
        let Ok(ns) = sys.normalize() else { continue };
        let Ok(report) = classify(&ns, &tol) else { continue };
        if report.class_label == Some(label) && report.diagnostics.is_empty() {
            out.push(Instance {
                label,
                seed,
                draw,
                system: ns,
                report,
            });
            if out.len() == count {
                return Ok(out);
            }
        }
    }
    Err(Error::Budget(format!(
        "found {} of {count} {label} instances in {max_draws} draws",
        out.len()
    )))
}
