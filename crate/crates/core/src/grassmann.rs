//! Points of the Grassmannian G(k,d) as rank-k orthogonal projectors.
//!
//! A [`ProjectorPoint`] keeps the d×d projector together with an orthonormal
//! d×k frame of its range. The frame makes squared cosines a k×k symmetric
//! eigenproblem, which is what every zonal kernel evaluation needs.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const IDEMPOTENCY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const TANGENCY_TOL: f64 = 1e-10;
pub const EIGENGAP_TOL: f64 = 1e-12;
/// Largest tolerated excursion of a squared cosine outside [0,1] before clamping.
pub const CLAMP_BUDGET: f64 = 1e-9;
const MAX_REDRAWS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorPoint {
    k: usize,
    matrix: DMatrix<f64>,
    frame: DMatrix<f64>,
}

/// Symmetric d×d matrix tangent to G(k,d) at some base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    entries: DMatrix<f64>,
}

/// The k squared cosines of the principal angles, nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredCosines {
    y: Vec<f64>,
}

fn check_dims(d: usize, k: usize) -> Result<()> {
    if d == 0 || k == 0 || k > d {
        return Err(Error::InvalidDimensions {
            d,
            k,
            reason: "need 1 <= k <= d",
        });
    }
    Ok(())
}

/// `F Fᵀ` with exact symmetry.
fn outer_frame(frame: &DMatrix<f64>) -> DMatrix<f64> {
    let d = frame.nrows();
    let k = frame.ncols();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut s = 0.0;
            for c in 0..k {
                s += frame[(i, c)] * frame[(j, c)];
            }
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    m
}

/// Modified Gram–Schmidt, two passes. `None` if the columns are numerically dependent.
pub(crate) fn orthonormalize_columns(cols: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut q = cols.clone();
    let k = q.ncols();
    for c in 0..k {
        let original = q.column(c).norm();
        if original == 0.0 || !original.is_finite() {
            return None;
        }
        for _pass in 0..2 {
            for p in 0..c {
                let r = q.column(p).dot(&q.column(c));
                let prev = q.column(p).clone_owned();
                q.column_mut(c).axpy(-r, &prev, 1.0);
            }
        }
        let norm = q.column(c).norm();
        if norm <= 1e-10 * original {
            return None;
        }
        q.column_mut(c).scale_mut(1.0 / norm);
    }
    Some(q)
}

/// Eigenpairs of a symmetric matrix sorted by decreasing eigenvalue.
fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

impl ProjectorPoint {
    /// Validates `matrix` against the projector invariants.
    pub fn from_matrix(matrix: DMatrix<f64>, k: usize) -> Result<Self> {
        let d = matrix.nrows();
        check_dims(d, k)?;
        if matrix.ncols() != d {
            return Err(Error::NotAProjector {
                k,
                reason: "matrix is not square".into(),
            });
        }
        let asym = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| (matrix[(i, j)] - matrix[(j, i)]).abs())
            .fold(0.0, f64::max);
        if !(asym <= SYMMETRY_TOL) {
            return Err(Error::NotAProjector {
                k,
                reason: format!("asymmetry {asym:e}"),
            });
        }
        let idem = (&matrix * &matrix - &matrix).amax();
        if !(idem <= IDEMPOTENCY_TOL) {
            return Err(Error::NotAProjector {
                k,
                reason: format!("idempotency defect {idem:e}"),
            });
        }
        let trace_err = (matrix.trace() - k as f64).abs();
        if !(trace_err <= TRACE_TOL) {
            return Err(Error::NotAProjector {
                k,
                reason: format!("trace defect {trace_err:e}"),
            });
        }
        let (_, vectors) = sorted_eigen(&matrix);
        let frame = vectors.columns(0, k).into_owned();
        Ok(Self { k, matrix, frame })
    }

    /// Projector onto the span of an orthonormal d×k frame.
    pub fn from_frame(frame: DMatrix<f64>) -> Result<Self> {
        let (d, k) = frame.shape();
        check_dims(d, k)?;
        let gram = frame.transpose() * &frame;
        let defect = (gram - DMatrix::<f64>::identity(k, k)).amax();
        if defect > 1e-10 {
            return Err(Error::NotAProjector {
                k,
                reason: format!("frame not orthonormal ({defect:e})"),
            });
        }
        let matrix = outer_frame(&frame);
        Ok(Self { k, matrix, frame })
    }

    /// Row-major entries, as stored in design files.
    pub fn from_row_major(d: usize, k: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(Error::Format(format!(
                "expected {} entries, found {}",
                d * d,
                entries.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(d, d, entries), k)
    }

    /// The coordinate projector onto span{e_1, …, e_k}.
    pub fn coordinate(d: usize, k: usize) -> Result<Self> {
        check_dims(d, k)?;
        let frame = DMatrix::from_fn(d, k, |r, c| if r == c { 1.0 } else { 0.0 });
        Self::from_frame(frame)
    }

    pub fn d(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let d = self.d();
        (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| self.matrix[(i, j)])
            .collect()
    }

    /// I − P, a point of G(d−k, d).
    pub fn complement(&self) -> Result<Self> {
        let d = self.d();
        let m = DMatrix::<f64>::identity(d, d) - &self.matrix;
        Self::from_matrix(m, d - self.k)
    }

    /// Orthonormal frame taken greedily from the columns of P, in column order.
    /// For coordinate projectors this is the set of coordinate vectors.
    fn column_frame(&self) -> DMatrix<f64> {
        let d = self.d();
        let mut chosen: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(self.k);
        for c in 0..d {
            if chosen.len() == self.k {
                break;
            }
            let mut v = self.matrix.column(c).clone_owned();
            let original = v.norm();
            if original < 1e-8 {
                continue;
            }
            for _pass in 0..2 {
                for q in &chosen {
                    let r = q.dot(&v);
                    v.axpy(-r, q, 1.0);
                }
            }
            let n = v.norm();
            if n > 1e-6 * original.max(1e-3) {
                chosen.push(v / n);
            }
        }
        if chosen.len() < self.k {
            return self.frame.clone();
        }
        DMatrix::from_columns(&chosen)
    }
}

/// `tr(PQ)` as the Frobenius inner product of two symmetric matrices.
#[inline]
pub fn trace_product(p: &ProjectorPoint, q: &ProjectorPoint) -> f64 {
    p.matrix
        .as_slice()
        .iter()
        .zip(q.matrix.as_slice())
        .map(|(a, b)| a * b)
        .sum()
}

impl TangentVector {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            entries: DMatrix::zeros(d, d),
        }
    }

    pub(crate) fn from_entries_unchecked(entries: DMatrix<f64>) -> Self {
        Self { entries }
    }

    /// Wraps `entries` after checking tangency at `base`.
    pub fn at(base: &ProjectorPoint, entries: DMatrix<f64>) -> Result<Self> {
        let v = Self { entries };
        let defect = v.tangency_defect(base);
        if defect > TANGENCY_TOL {
            return Err(Error::InvalidParameter(format!(
                "not tangent (defect {defect:e})"
            )));
        }
        Ok(v)
    }

    /// max(‖PXP‖_max, ‖(I−P)X(I−P)‖_max).
    pub fn tangency_defect(&self, base: &ProjectorPoint) -> f64 {
        let d = base.d();
        let p = &base.matrix;
        let q = DMatrix::<f64>::identity(d, d) - p;
        let a = (p * &self.entries * p).amax();
        let b = (&q * &self.entries * &q).amax();
        a.max(b)
    }

    /// Frobenius inner product, the embedding metric.
    pub fn inner(&self, other: &TangentVector) -> f64 {
        self.entries.dot(&other.entries)
    }

    pub fn norm(&self) -> f64 {
        self.entries.norm()
    }
}

impl SquaredCosines {
    pub fn values(&self) -> &[f64] {
        &self.y
    }

    /// Clamps raw values to [0,1] and sorts them nonincreasing.
    pub fn from_raw(mut y: Vec<f64>) -> Self {
        debug_assert!(
            y.iter()
                .all(|v| *v >= -CLAMP_BUDGET && *v <= 1.0 + CLAMP_BUDGET),
            "{y:?}"
        );
        for v in y.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        y.sort_by(|a, b| b.total_cmp(a));
        Self { y }
    }

    pub fn sum(&self) -> f64 {
        self.y.iter().sum()
    }

    /// Principal angles θ_i = arccos(√y_i).
    pub fn angles(&self) -> Vec<f64> {
        self.y.iter().map(|v| v.sqrt().acos()).collect()
    }
}

/// Spectral truncation of a symmetric matrix onto its top-k eigenspace.
pub fn project_to_grassmannian(m: &DMatrix<f64>, k: usize) -> Result<ProjectorPoint> {
    let d = m.nrows();
    check_dims(d, k)?;
    let sym = (m + m.transpose()) * 0.5;
    let (values, vectors) = sorted_eigen(&sym);
    if k < d {
        let gap = values[k - 1] - values[k];
        if !(gap > EIGENGAP_TOL) {
            return Err(Error::EigengapTooSmall { k, gap });
        }
    }
    ProjectorPoint::from_frame(vectors.columns(0, k).into_owned())
}

fn normal_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    std_dev: f64,
) -> DMatrix<f64> {
    // column-major fill order is part of the reproducibility contract
    DMatrix::from_fn(rows, cols, |_, _| {
        std_dev * rng.sample::<f64, _>(StandardNormal)
    })
}

/// Uniform point of G(k,d) drawn from an existing stream.
pub fn random_uniform_projector_from<R: Rng + ?Sized>(
    rng: &mut R,
    d: usize,
    k: usize,
) -> Result<ProjectorPoint> {
    if d < 2 || k == 0 || k >= d {
        return Err(Error::InvalidDimensions {
            d,
            k,
            reason: "need d >= 2 and 1 <= k <= d-1",
        });
    }
    for _ in 0..MAX_REDRAWS {
        let z = normal_matrix(rng, d, k, 1.0);
        if let Some(frame) = orthonormalize_columns(&z) {
            return ProjectorPoint::from_frame(frame);
        }
    }
    Err(Error::RankDeficient {
        attempts: MAX_REDRAWS,
    })
}

/// Uniform point of G(k,d): projector onto the span of a d×k standard Gaussian matrix.
pub fn random_uniform_projector(d: usize, k: usize, seed: u64) -> Result<ProjectorPoint> {
    random_uniform_projector_from(&mut rng::stream(seed), d, k)
}

pub fn gaussian_perturbed_projector_from<R: Rng + ?Sized>(
    rng: &mut R,
    base: &ProjectorPoint,
    variance: f64,
) -> Result<ProjectorPoint> {
    if !(variance > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "variance must be positive, got {variance}"
        )));
    }
    let d = base.d();
    let frame = base.column_frame();
    for _ in 0..MAX_REDRAWS {
        let z = normal_matrix(rng, d, d, variance.sqrt());
        // (B + Z)F = F + ZF; for a coordinate base these are the first k columns of B + Z
        let cols = &frame + &z * &frame;
        if let Some(q) = orthonormalize_columns(&cols) {
            return ProjectorPoint::from_frame(q);
        }
    }
    Err(Error::RankDeficient {
        attempts: MAX_REDRAWS,
    })
}

/// Projector onto the orthonormalized columns of (B + Z)F, where Z has i.i.d.
/// N(0, variance) entries and F spans the range of B.
pub fn gaussian_perturbed_projector(
    base: &ProjectorPoint,
    variance: f64,
    seed: u64,
) -> Result<ProjectorPoint> {
    gaussian_perturbed_projector_from(&mut rng::stream(seed), base, variance)
}

/// Squared cosines of the principal angles between `p` and `q`.
///
/// Uses the k×k compression Fᵀ Q F of PQP onto the frame of P; it carries
/// the same nonzero spectrum.
pub fn squared_cosines(p: &ProjectorPoint, q: &ProjectorPoint) -> SquaredCosines {
    debug_assert_eq!(p.d(), q.d());
    let k = p.k.min(q.k);
    if p.k == 2 && q.k == 2 {
        // closed-form 2×2 symmetric eigenvalues of (Fᵀ G)(Gᵀ F)
        let m = p.frame.transpose() * &q.frame;
        let a = m[(0, 0)] * m[(0, 0)] + m[(0, 1)] * m[(0, 1)];
        let c = m[(1, 0)] * m[(1, 0)] + m[(1, 1)] * m[(1, 1)];
        let b = m[(0, 0)] * m[(1, 0)] + m[(0, 1)] * m[(1, 1)];
        let mean = 0.5 * (a + c);
        let r = (0.5 * (a - c)).hypot(b);
        // product of eigenvalues is det(m)^2, which avoids cancellation in the small one
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let big = mean + r;
        let small = if big > 0.0 { det * det / big } else { 0.0 };
        return SquaredCosines::from_raw(vec![big, small]);
    }
    let m = p.frame.transpose() * &q.frame;
    let s = &m * m.transpose();
    let (values, _) = sorted_eigen(&s);
    SquaredCosines::from_raw(values.into_iter().take(k).collect())
}

/// Reference route: the k largest eigenvalues of the d×d symmetric matrix PQP.
pub fn squared_cosines_pqp(p: &ProjectorPoint, q: &ProjectorPoint) -> SquaredCosines {
    let m = &p.matrix * &q.matrix * &p.matrix;
    let sym = (&m + m.transpose()) * 0.5;
    let (values, _) = sorted_eigen(&sym);
    SquaredCosines::from_raw(values.into_iter().take(p.k.min(q.k)).collect())
}

/// ρ(P,Q) = sqrt(Σ θ_i²).
pub fn geodesic_distance(p: &ProjectorPoint, q: &ProjectorPoint) -> f64 {
    squared_cosines(p, q)
        .angles()
        .iter()
        .map(|t| t * t)
        .sum::<f64>()
        .sqrt()
}

/// X = PG(I−P) + (I−P)GP.
pub fn tangent_project(p: &ProjectorPoint, g: &DMatrix<f64>) -> TangentVector {
    let pm = &p.matrix;
    let pg = pm * g;
    let gp = g * pm;
    let pgp = &pg * pm;
    let x = pg + gp - pgp * 2.0;
    let sym = (&x + x.transpose()) * 0.5;
    TangentVector { entries: sym }
}

/// Spectral projection of P + step·X back onto G(k,d).
pub fn retract(p: &ProjectorPoint, x: &TangentVector, step: f64) -> Result<ProjectorPoint> {
    if step == 0.0 {
        return Ok(p.clone());
    }
    let m = &p.matrix + &x.entries * step;
    project_to_grassmannian(&m, p.k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn diag(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(values))
    }

    fn span(d: usize, cols: &[usize]) -> ProjectorPoint {
        let frame = DMatrix::from_fn(d, cols.len(), |r, c| if r == cols[c] { 1.0 } else { 0.0 });
        ProjectorPoint::from_frame(frame).unwrap()
    }

    #[test]
    fn projection_of_projector_is_identity() {
        let p = random_uniform_projector(5, 2, 3).unwrap();
        let q = project_to_grassmannian(p.matrix(), 2).unwrap();
        assert!((q.matrix() - p.matrix()).amax() < 1e-12);
    }

    #[test]
    fn projection_truncates_diagonal() {
        let q = project_to_grassmannian(&diag(&[3.0, 2.0, 1.0, 0.0]), 2).unwrap();
        assert!((q.matrix() - diag(&[1.0, 1.0, 0.0, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn projection_rejects_degenerate_gap() {
        let err = project_to_grassmannian(&diag(&[3.0, 1.0, 1.0, 0.0]), 2).unwrap_err();
        assert!(matches!(err, Error::EigengapTooSmall { k: 2, .. }));
    }

    #[test]
    fn small_tangent_perturbation_tracks_rotation() {
        // rotate span{e1,e2} by angle a in the (e2,e3) plane: exact geodesic
        let p = span(4, &[0, 1]);
        let a: f64 = 1e-3;
        let mut frame = DMatrix::zeros(4, 2);
        frame[(0, 0)] = 1.0;
        frame[(1, 1)] = a.cos();
        frame[(2, 1)] = a.sin();
        let exact = ProjectorPoint::from_frame(frame).unwrap();
        // tangent of the rotation at P: e2 e3ᵀ + e3 e2ᵀ
        let mut x = DMatrix::zeros(4, 4);
        x[(1, 2)] = 1.0;
        x[(2, 1)] = 1.0;
        let m = p.matrix() + &x * a;
        let q = project_to_grassmannian(&m, 2).unwrap();
        assert!((q.matrix() - p.matrix()).norm() < 2e-3);
        assert!((q.matrix() - exact.matrix()).norm() < 1e-5);
    }

    #[test]
    fn random_projectors_satisfy_invariants() {
        for seed in 0..50 {
            let p = random_uniform_projector(6, 3, seed).unwrap();
            let m = p.matrix();
            assert!((m * m - m).amax() < IDEMPOTENCY_TOL);
            assert!((m.trace() - 3.0).abs() < TRACE_TOL);
            assert_eq!(m, &m.transpose());
        }
        assert!(random_uniform_projector(4, 4, 0).is_err());
        assert!(random_uniform_projector(1, 1, 0).is_err());
    }

    #[test]
    fn seeds_reproduce_draws() {
        let a = random_uniform_projector(4, 2, 11).unwrap();
        let b = random_uniform_projector(4, 2, 11).unwrap();
        let c = random_uniform_projector(4, 2, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn tiny_perturbation_returns_base() {
        let base = ProjectorPoint::coordinate(4, 2).unwrap();
        let p = gaussian_perturbed_projector(&base, 1e-16, 5).unwrap();
        assert!((p.matrix() - base.matrix()).amax() < 1e-6);
        assert!(gaussian_perturbed_projector(&base, 0.0, 5).is_err());
    }

    #[test]
    fn column_frame_of_coordinate_projector() {
        let base = ProjectorPoint::coordinate(4, 2).unwrap();
        let f = base.column_frame();
        assert_eq!(
            f,
            DMatrix::from_fn(4, 2, |r, c| if r == c { 1.0 } else { 0.0 })
        );
    }

    #[test]
    fn cosines_of_special_pairs() {
        let p = span(4, &[0, 1]);
        assert_eq!(squared_cosines(&p, &p).values(), &[1.0, 1.0]);
        let comp = p.complement().unwrap();
        let y = squared_cosines(&p, &comp);
        assert!(y.values().iter().all(|v| v.abs() < 1e-15));
        let q = span(4, &[0, 2]);
        let y = squared_cosines(&p, &q);
        assert!((y.values()[0] - 1.0).abs() < 1e-15 && y.values()[1].abs() < 1e-15);
    }

    #[test]
    fn cosines_agree_with_pqp_route() {
        for seed in 0..40 {
            let p = random_uniform_projector(5, 2, seed).unwrap();
            let q = random_uniform_projector(5, 2, seed + 1000).unwrap();
            let a = squared_cosines(&p, &q);
            let b = squared_cosines_pqp(&p, &q);
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-12);
            }
            assert!((a.sum() - trace_product(&p, &q)).abs() < 1e-10);
        }
        for seed in 0..10 {
            let p = random_uniform_projector(7, 3, seed).unwrap();
            let q = random_uniform_projector(7, 3, seed + 99).unwrap();
            let a = squared_cosines(&p, &q);
            let b = squared_cosines_pqp(&p, &q);
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distance_between_complements() {
        let p = random_uniform_projector(4, 2, 1).unwrap();
        let comp = p.complement().unwrap();
        let rho = geodesic_distance(&p, &comp);
        assert!((rho - 2f64.sqrt() * FRAC_PI_2).abs() < 1e-7);
        assert!(geodesic_distance(&p, &p) < 1e-7);
    }

    #[test]
    fn tangent_projection_kills_block_diagonal() {
        let p = random_uniform_projector(4, 2, 2).unwrap();
        assert!(tangent_project(&p, p.matrix()).entries().amax() < 1e-14);
        assert!(
            tangent_project(&p, &DMatrix::identity(4, 4))
                .entries()
                .amax()
                < 1e-14
        );
    }

    #[test]
    fn retract_zero_step_and_trace() {
        let p = random_uniform_projector(4, 2, 3).unwrap();
        let g = DMatrix::from_fn(4, 4, |i, j| {
            ((i * 7 + j * 3) % 5) as f64 + ((j * 7 + i * 3) % 5) as f64
        });
        let x = tangent_project(&p, &g);
        assert!(x.tangency_defect(&p) < 1e-12);
        assert_eq!(retract(&p, &x, 0.0).unwrap(), p);
        let q = retract(&p, &x, 0.05).unwrap();
        assert!((q.matrix().trace() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn row_major_round_trip_is_bit_exact() {
        let p = random_uniform_projector(4, 2, 8).unwrap();
        let back = ProjectorPoint::from_row_major(4, 2, &p.to_row_major()).unwrap();
        assert_eq!(back.matrix(), p.matrix());
        assert!(ProjectorPoint::from_row_major(4, 2, &[0.0; 15]).is_err());
        assert!(ProjectorPoint::from_row_major(4, 2, &[0.0; 16]).is_err());
    }
}
