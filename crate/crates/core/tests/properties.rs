mod common;

use std::sync::Arc;

use grasscub::approx::scale_squared;
use grasscub::design::{energy_and_gradient, wce_squared, DesignEnsemble};
use grasscub::grassmann::{
    geodesic_distance, random_uniform_projector, retract, squared_cosines, tangent_project,
    trace_product, ProjectorPoint,
};
use grasscub::jacobi::{
    bessel_kernel, closed_form_mean, diffusion_kernel, diffusion_kernel_squared,
    power_kernel_expansion, ClosedFormKernel, JacobiBasis, ZonalKernelSpec,
};
use grasscub::rng::stream;
use grasscub::spectral::{casimir_eigenvalue, Partition};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use common::plane_from_spheres;

fn orthogonal(seed: u64, d: usize) -> DMatrix<f64> {
    let mut rng = stream(seed);
    DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal))
        .qr()
        .q()
}

fn unit3(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (n > 1e-3).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

fn vec3() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.0f64..1.0).prop_filter_map("nonzero", unit3)
}

fn min_eigenvalue(kernel: &ZonalKernelSpec, points: &[ProjectorPoint]) -> f64 {
    let n = points.len();
    let g = DMatrix::from_fn(n, n, |i, j| kernel.eval(&points[i], &points[j]));
    g.symmetric_eigenvalues().min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn squared_cosines_are_orthogonally_invariant(seed in 0u64..10_000, d in 4usize..7) {
        let p = random_uniform_projector(d, 2, seed).unwrap();
        let q = random_uniform_projector(d, 2, seed + 1).unwrap();
        let o = orthogonal(seed + 2, d);
        let po = ProjectorPoint::from_matrix(&o * p.matrix() * o.transpose(), 2).unwrap();
        let qo = ProjectorPoint::from_matrix(&o * q.matrix() * o.transpose(), 2).unwrap();
        let (a, b) = (squared_cosines(&p, &q), squared_cosines(&po, &qo));
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn geodesic_distance_is_a_metric(seed in 0u64..10_000) {
        let pts: Vec<_> = (0..3).map(|i| random_uniform_projector(4, 2, 3 * seed + i).unwrap()).collect();
        let d = |i: usize, j: usize| geodesic_distance(&pts[i], &pts[j]);
        prop_assert!(d(0, 1) >= 0.0);
        prop_assert!(d(0, 0) <= 1e-7);
        prop_assert!((d(0, 1) - d(1, 0)).abs() <= 1e-9);
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9);
    }

    #[test]
    fn sphere_pair_planes_match_trace_identity(a in vec3(), b in vec3(), a2 in vec3(), b2 in vec3()) {
        let p = plane_from_spheres(a, b);
        let q = plane_from_spheres(a2, b2);
        let alpha = a[0] * a2[0] + a[1] * a2[1] + a[2] * a2[2];
        let beta = b[0] * b2[0] + b[1] * b2[1] + b[2] * b2[2];
        prop_assert!((trace_product(&p, &q) - (1.0 + alpha * beta)).abs() <= 1e-12);
        let y = squared_cosines(&p, &q);
        let v = y.values();
        prop_assert!((v[0] * v[1] - ((alpha + beta) / 2.0).powi(2)).abs() <= 1e-9);
    }

    #[test]
    fn eigenvalues_grow_under_containment(a in 0u32..10, b in 0u32..10, da in 0u32..4, db in 0u32..4, d in 4usize..9) {
        let (hi, lo) = (a.max(b), a.min(b));
        let small = Partition::new(vec![hi, lo]).unwrap();
        let big = Partition::new(vec![hi + da + db, lo + db]).unwrap();
        prop_assert!(casimir_eigenvalue(&big, d, 2).unwrap() >= casimir_eigenvalue(&small, d, 2).unwrap());
    }

    #[test]
    fn energy_never_falls_below_the_mean(seed in 0u64..10_000, n in 1usize..25, t in 1u32..5) {
        let pts: Vec<_> = (0..n).map(|i| random_uniform_projector(4, 2, seed * 100 + i as u64).unwrap()).collect();
        let (e, grads) = energy_and_gradient(&pts, t);
        let r0 = closed_form_mean(ClosedFormKernel::PowerRt(t), 4, 2).unwrap();
        prop_assert!(e - r0 >= -1e-12);
        for (g, p) in grads.iter().zip(&pts) {
            prop_assert!(g.tangency_defect(p) <= 1e-12);
        }
    }

    #[test]
    fn retraction_stays_on_the_manifold(seed in 0u64..10_000, step in -2.0f64..2.0) {
        let p = random_uniform_projector(4, 2, seed).unwrap();
        let g = random_uniform_projector(4, 3, seed + 7).unwrap().matrix().clone();
        let x = tangent_project(&p, &g);
        let q = retract(&p, &x, step).unwrap();
        let m = q.matrix();
        prop_assert!((m * m - m).norm() <= 1e-12);
        prop_assert!((m.trace() - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn json_round_trip_is_bit_exact(seed in 0u64..10_000, n in 1usize..20) {
        let pts: Vec<_> = (0..n).map(|i| random_uniform_projector(4, 2, seed * 50 + i as u64).unwrap()).collect();
        let e = DesignEnsemble::equal_weight(4, 2, 2, pts, seed).unwrap();
        let back = DesignEnsemble::from_json_str(&e.to_json_string().unwrap()).unwrap();
        for (a, b) in e.points.iter().zip(&back.points) {
            let (a, b) = (a.to_row_major(), b.to_row_major());
            prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        prop_assert_eq!(e.achieved_wce.to_bits(), back.achieved_wce.to_bits());
        prop_assert!(back.weights.iter().all(|w| *w == 1.0 / n as f64));
    }
}

#[test]
fn kernel_gram_matrices_are_positive_semidefinite() {
    let basis = Arc::new(JacobiBasis::build(4, 2, 8).unwrap());
    let points: Vec<_> = (0..20)
        .map(|i| random_uniform_projector(4, 2, 300 + i).unwrap())
        .collect();
    let kernels = vec![
        ZonalKernelSpec::closed_form(ClosedFormKernel::K1, 4, 2).unwrap(),
        ZonalKernelSpec::closed_form(ClosedFormKernel::K2, 4, 2).unwrap(),
        ZonalKernelSpec::closed_form(ClosedFormKernel::PowerRt(3), 4, 2).unwrap(),
        diffusion_kernel(basis.clone(), scale_squared(2).sqrt()).unwrap(),
        bessel_kernel(basis.clone(), 3.0, 8).unwrap(),
        power_kernel_expansion(basis, 4).unwrap(),
    ];
    for k in &kernels {
        assert!(min_eigenvalue(k, &points) >= -1e-8);
    }
}

#[test]
fn spectral_power_kernel_matches_closed_form_wce() {
    let basis = Arc::new(JacobiBasis::build(4, 2, 6).unwrap());
    for t in 1..=6 {
        let spectral = power_kernel_expansion(basis.clone(), t).unwrap();
        let closed = ZonalKernelSpec::closed_form(ClosedFormKernel::PowerRt(t), 4, 2).unwrap();
        let pts: Vec<_> = (0..30)
            .map(|i| random_uniform_projector(4, 2, 70 * t as u64 + i).unwrap())
            .collect();
        let w = vec![1.0 / 30.0; 30];
        let (a, b) = (
            wce_squared(&pts, &w, &spectral),
            wce_squared(&pts, &w, &closed),
        );
        assert!((a - b).abs() <= 1e-9, "t={t}: {a} vs {b}");
    }
}

#[test]
fn kernel_without_constant_term_has_zero_mean() {
    let basis = Arc::new(JacobiBasis::build(4, 2, 3).unwrap());
    let coeffs = basis
        .partitions()
        .iter()
        .skip(1)
        .map(|p| (p.clone(), 0.5))
        .collect();
    let k = ZonalKernelSpec::spectral(basis, coeffs).unwrap();
    assert_eq!(k.mean(), 0.0);
}

#[test]
fn diffusion_plateau_is_exactly_one() {
    let basis = Arc::new(JacobiBasis::build(4, 2, 8).unwrap());
    for t in 1..=5 {
        let s2 = scale_squared(t);
        let k = diffusion_kernel_squared(basis.clone(), s2).unwrap();
        for (p, c) in k.coefficients().unwrap() {
            let lambda = casimir_eigenvalue(p, 4, 2).unwrap() as f64;
            assert!(lambda < s2);
            if lambda <= s2 / 2.0 {
                assert_eq!(*c, 1.0, "t={t} {p:?}");
            }
        }
    }
}

#[test]
fn uniform_sampling_moments() {
    let n = 40_000;
    let mut mean = DMatrix::<f64>::zeros(4, 4);
    let mut second = 0.0;
    for i in 0..n {
        let p = random_uniform_projector(4, 2, 2 * i).unwrap();
        let q = random_uniform_projector(4, 2, 2 * i + 1).unwrap();
        mean += p.matrix();
        second += trace_product(&p, &q).powi(2);
    }
    mean /= n as f64;
    second /= n as f64;
    let off = (&mean - DMatrix::identity(4, 4) * 0.5).abs().max();
    assert!(off < 0.01, "E[P] deviates by {off}");
    // E tr(PQ)⁴ = 1 + 6/9 + 1/25, so 5 standard errors is about 0.017.
    assert!((second - 10.0 / 9.0).abs() < 0.017, "E tr(PQ)^2 = {second}");
}
