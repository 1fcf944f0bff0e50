//! Generalized Jacobi polynomials φ_π for the weight w_{k/2, d/2} and their
//! normalizers c_π = dim H_π.
//!
//! Each φ_π is stored in the *generator* basis
//! g_μ(y) = q_{μ1}(y1) q_{μ2}(y2) + q_{μ2}(y1) q_{μ1}(y2) (one term when μ1 = μ2),
//! with q_n the orthonormal one-variable Jacobi polynomials. The generators
//! are triangular against the monomial symmetric functions m_μ, so
//! Gram–Schmidt over them in partition order spans the same flags as over
//! m_μ while staying well conditioned up to degree 14 and beyond.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::onedim::JacobiWeight1d;
use super::quadrature::{ordered_simplex_quadrature, SimplexRule, WeightDensity};
use crate::error::{Error, Result};
use crate::spectral::{enumerate_partitions, Partition, PartitionBound};

const INTEGRALITY_TOL: f64 = 1e-6;
const COEFFICIENT_BASIS: &str = "symmetrized-orthonormal-jacobi-products";

/// Polynomial in the monomial symmetric basis m_π of m ≤ 2 variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymmetricPolynomial {
    pub m: usize,
    pub coeffs: BTreeMap<Partition, f64>,
}

impl SymmetricPolynomial {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(m: usize, value: f64) -> Self {
        let mut p = Self::new(m);
        p.coeffs.insert(Partition::empty(), value);
        p
    }

    /// (y_1 + … + y_m)^n expanded; used for trace moments.
    pub fn power_sum_power(m: usize, n: u32) -> Self {
        let mut p = Self::new(m);
        if m == 1 {
            p.coeffs.insert(Partition::new(vec![n]).unwrap(), 1.0);
            return p;
        }
        for i in 0..=n {
            let j = n - i;
            if i < j {
                continue;
            }
            p.coeffs
                .insert(Partition::new(vec![i, j]).unwrap(), binomial(n, i));
        }
        p
    }

    pub fn add_term(&mut self, p: Partition, c: f64) {
        *self.coeffs.entry(p).or_insert(0.0) += c;
    }

    /// Largest |π| with a nonzero coefficient.
    pub fn degree(&self) -> u32 {
        self.coeffs
            .iter()
            .filter(|(_, c)| **c != 0.0)
            .map(|(p, _)| p.size())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .map(|(p, c)| c * monomial_symmetric(p, y))
            .sum()
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// m_π(y) for one or two variables.
pub fn monomial_symmetric(p: &Partition, y: &[f64]) -> f64 {
    let (a, b) = (p.part(0) as i32, p.part(1) as i32);
    match y {
        [y1] => {
            if p.len() > 1 {
                0.0
            } else {
                y1.powi(a)
            }
        }
        [y1, y2] => {
            if a == b {
                y1.powi(a) * y2.powi(a)
            } else {
                y1.powi(a) * y2.powi(b) + y1.powi(b) * y2.powi(a)
            }
        }
        _ => panic!("monomial_symmetric supports one or two variables"),
    }
}

/// ∫ poly dν for the normalized weight measure ν of `rule`.
pub fn weighted_moment(poly: &SymmetricPolynomial, rule: &SimplexRule) -> Result<f64> {
    let degree = poly.degree();
    if degree > rule.degree {
        return Err(Error::DegreeOverflow {
            degree,
            capacity: rule.degree,
        });
    }
    let m = rule.density.m;
    Ok(rule.integrate_normalized(|y| poly.eval(&y[..m])))
}

#[derive(Debug, Clone)]
pub struct JacobiBasis {
    d: usize,
    k: usize,
    max_degree: u32,
    quadrature_degree: u32,
    one_dim: JacobiWeight1d,
    partitions: Vec<Partition>,
    index: HashMap<Partition, usize>,
    /// phi[i][j]: coefficient of generator j in φ_i (j ≤ i).
    phi: Vec<Vec<f64>>,
    c: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BasisFile {
    d: usize,
    k: usize,
    max_degree: u32,
    quadrature_degree: u32,
    coefficient_basis: String,
    partitions: Vec<Partition>,
    phi: Vec<Vec<f64>>,
    c: Vec<f64>,
}

impl JacobiBasis {
    /// Gram–Schmidt in partition order, two passes, under the normalized weight.
    pub fn build(d: usize, k: usize, max_degree: u32) -> Result<Self> {
        if !(1..=2).contains(&k) {
            return Err(Error::UnsupportedArity(k));
        }
        let density = WeightDensity::grassmannian(d, k)?;
        let quadrature_degree = 2 * max_degree + 4;
        let rule = ordered_simplex_quadrature(&density, quadrature_degree)?;
        let partitions = enumerate_partitions(k, PartitionBound::Size(max_degree))?;
        let mut basis = Self::skeleton(d, k, max_degree, quadrature_degree, density, partitions);
        let n = basis.partitions.len();

        let sqrt_w: Vec<f64> = rule.normalized_weights().iter().map(|w| w.sqrt()).collect();
        let mut scratch = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(rule.len()); n];
        for (y, sw) in rule.nodes.iter().zip(&sqrt_w) {
            basis.generator_values(&y[..k], &mut scratch);
            for (col, g) in cols.iter_mut().zip(&scratch) {
                col.push(sw * g);
            }
        }

        let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut t: Vec<Vec<f64>> = Vec::with_capacity(n);
        for (i, mut v) in cols.into_iter().enumerate() {
            let mut coef = vec![0.0; i + 1];
            coef[i] = 1.0;
            for _pass in 0..2 {
                for (j, qj) in q.iter().enumerate() {
                    let r = dot(qj, &v);
                    axpy(-r, qj, &mut v);
                    for (cc, tj) in coef.iter_mut().zip(&t[j]) {
                        *cc -= r * tj;
                    }
                }
            }
            let norm = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            coef.iter_mut().for_each(|x| *x /= norm);
            q.push(v);
            t.push(coef);
        }

        let ones = vec![1.0; k];
        basis.generator_values(&ones, &mut scratch);
        for (i, coef) in t.into_iter().enumerate() {
            let at_one: f64 = coef.iter().zip(&scratch).map(|(a, b)| a * b).sum();
            let c = at_one * at_one;
            let p = &basis.partitions[i];
            if (c - c.round()).abs() > INTEGRALITY_TOL || c.round() < 1.0 {
                return Err(Error::NormalizationNotIntegral {
                    partition: p.clone(),
                    value: c,
                });
            }
            basis
                .phi
                .push(coef.into_iter().map(|x| x / at_one).collect());
            basis.c.push(c);
        }
        Ok(basis)
    }

    fn skeleton(
        d: usize,
        k: usize,
        max_degree: u32,
        quadrature_degree: u32,
        density: WeightDensity,
        partitions: Vec<Partition>,
    ) -> Self {
        let index = partitions
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, p)| (p, i))
            .collect();
        Self {
            d,
            k,
            max_degree,
            quadrature_degree,
            one_dim: density.one_variable_factor(),
            partitions,
            index,
            phi: Vec::new(),
            c: Vec::new(),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn quadrature_degree(&self) -> u32 {
        self.quadrature_degree
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn index_of(&self, p: &Partition) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn c(&self, p: &Partition) -> Option<f64> {
        self.index_of(p).map(|i| self.c[i])
    }

    pub fn c_values(&self) -> &[f64] {
        &self.c
    }

    /// Coefficients of φ_i in the generator basis.
    pub fn phi_coefficients(&self, i: usize) -> &[f64] {
        &self.phi[i]
    }

    /// The weight measure the basis is orthogonal for.
    pub fn density(&self) -> WeightDensity {
        WeightDensity::grassmannian(self.d, self.k).expect("validated at construction")
    }

    /// Values of every generator at y (length k).
    pub fn generator_values(&self, y: &[f64], out: &mut Vec<f64>) {
        let n = self.max_degree as usize + 1;
        out.clear();
        match y {
            [y1] => {
                out.resize(n, 0.0);
                self.one_dim.eval_orthonormal(*y1, out);
            }
            [y1, y2] => {
                let mut q1 = vec![0.0; n];
                let mut q2 = vec![0.0; n];
                self.one_dim.eval_orthonormal(*y1, &mut q1);
                self.one_dim.eval_orthonormal(*y2, &mut q2);
                out.extend(self.partitions.iter().map(|p| {
                    let (a, b) = (p.part(0) as usize, p.part(1) as usize);
                    if a == b {
                        q1[a] * q2[a]
                    } else {
                        q1[a] * q2[b] + q1[b] * q2[a]
                    }
                }));
            }
            _ => panic!("expected {} squared cosines, got {}", self.k, y.len()),
        }
    }

    /// φ_π(y), or None when π is not in the basis.
    pub fn eval_phi(&self, p: &Partition, y: &[f64]) -> Option<f64> {
        let i = self.index_of(p)?;
        let mut g = Vec::new();
        self.generator_values(y, &mut g);
        Some(self.phi[i].iter().zip(&g).map(|(a, b)| a * b).sum())
    }

    /// φ_π(y) for every partition of the basis, in basis order.
    pub fn eval_all(&self, y: &[f64]) -> Vec<f64> {
        let mut g = Vec::new();
        self.generator_values(y, &mut g);
        self.phi
            .iter()
            .map(|row| row.iter().zip(&g).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Generator coefficients of Σ_i a_i φ_i.
    pub fn combine(&self, terms: &[(usize, f64)]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for &(i, a) in terms {
            for (o, p) in out.iter_mut().zip(&self.phi[i]) {
                *o += a * p;
            }
        }
        out
    }

    /// Evaluates a combination produced by [`Self::combine`].
    pub fn eval_combined(&self, coefficients: &[f64], y: &[f64], scratch: &mut Vec<f64>) -> f64 {
        self.generator_values(y, scratch);
        coefficients
            .iter()
            .zip(scratch.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// φ_π expanded in monomial symmetric functions. Conditioning degrades with degree.
    pub fn to_monomial(&self, p: &Partition) -> Option<SymmetricPolynomial> {
        let i = self.index_of(p)?;
        let powers = self
            .one_dim
            .orthonormal_power_coefficients(self.max_degree as usize);
        let mut out = SymmetricPolynomial::new(self.k);
        for (j, &a) in self.phi[i].iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let g = &self.partitions[j];
            let (u, v) = (g.part(0) as usize, g.part(1) as usize);
            if self.k == 1 {
                for (e, c) in powers[u].iter().enumerate() {
                    out.add_term(Partition::new(vec![e as u32]).unwrap(), a * c);
                }
                continue;
            }
            // q_u(y1) q_v(y2) (+ swap) collected onto m_(e1,e2), e1 ≥ e2
            let scale = if u == v { 1.0 } else { 2.0 };
            for (e1, c1) in powers[u].iter().enumerate() {
                for (e2, c2) in powers[v].iter().enumerate() {
                    let (hi, lo) = (e1.max(e2) as u32, e1.min(e2) as u32);
                    // m_(hi,lo) contains y1^e1 y2^e2 once; the symmetrized product
                    // contributes c1 c2 to both orders, a diagonal term twice when u ≠ v
                    let w = if hi == lo { scale } else { scale / 2.0 };
                    out.add_term(Partition::new(vec![hi, lo]).unwrap(), a * c1 * c2 * w);
                }
            }
        }
        Some(out)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = BasisFile {
            d: self.d,
            k: self.k,
            max_degree: self.max_degree,
            quadrature_degree: self.quadrature_degree,
            coefficient_basis: COEFFICIENT_BASIS.to_string(),
            partitions: self.partitions.clone(),
            phi: self.phi.clone(),
            c: self.c.clone(),
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file: BasisFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        if file.coefficient_basis != COEFFICIENT_BASIS {
            return Err(Error::Format(format!(
                "unknown coefficient basis {}",
                file.coefficient_basis
            )));
        }
        let density = WeightDensity::grassmannian(file.d, file.k)?;
        let expected = enumerate_partitions(file.k, PartitionBound::Size(file.max_degree))?;
        if expected != file.partitions
            || file.phi.len() != expected.len()
            || file.c.len() != expected.len()
        {
            return Err(Error::Format(
                "basis partitions do not match max_degree".into(),
            ));
        }
        if file
            .phi
            .iter()
            .enumerate()
            .any(|(i, row)| row.len() != i + 1)
        {
            return Err(Error::Format(
                "basis coefficient rows must be triangular".into(),
            ));
        }
        let mut basis = Self::skeleton(
            file.d,
            file.k,
            file.max_degree,
            file.quadrature_degree,
            density,
            file.partitions,
        );
        basis.phi = file.phi;
        basis.c = file.c;
        Ok(basis)
    }

    /// Loads `path` when it holds a basis for (d, k) of degree ≥ `max_degree`, otherwise builds and writes it.
    pub fn load_or_build(path: &Path, d: usize, k: usize, max_degree: u32) -> Result<Self> {
        if path.exists() {
            if let Ok(b) = Self::load_json(path) {
                if b.d == d && b.k == k && b.max_degree >= max_degree {
                    return Ok(b);
                }
            }
        }
        let b = Self::build(d, k, max_degree)?;
        b.save_json(path)?;
        Ok(b)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(parts: &[u32]) -> Partition {
        Partition::new(parts.to_vec()).unwrap()
    }

    #[test]
    fn g24_low_degree_normalizers() {
        let b = JacobiBasis::build(4, 2, 3).unwrap();
        assert_eq!(b.c(&Partition::empty()).unwrap(), 1.0);
        assert!((b.c(&p(&[1])).unwrap() - 9.0).abs() < 1e-9);
        assert!((b.c(&p(&[1, 1])).unwrap() - 10.0).abs() < 1e-9);
        assert!((b.c(&p(&[2])).unwrap() - 25.0).abs() < 1e-9);
    }

    #[test]
    fn phi_one_is_trace_minus_one() {
        let b = JacobiBasis::build(4, 2, 2).unwrap();
        for y in [[0.3, 0.1], [0.9, 0.5], [1.0, 1.0], [0.2, 0.0]] {
            let v = b.eval_phi(&p(&[1]), &y).unwrap();
            assert!((v - (y[0] + y[1] - 1.0)).abs() < 1e-12);
        }
        let mono = b.to_monomial(&p(&[1])).unwrap();
        assert!((mono.coeffs[&p(&[1])] - 1.0).abs() < 1e-12);
        assert!((mono.coeffs[&Partition::empty()] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_value_and_orthogonality() {
        let b = JacobiBasis::build(4, 2, 10).unwrap();
        let rule = ordered_simplex_quadrature(&b.density(), 40).unwrap();
        let values: Vec<Vec<f64>> = rule.nodes.iter().map(|y| b.eval_all(y)).collect();
        for i in 0..b.len() {
            let one = b.eval_all(&[1.0, 1.0])[i];
            assert!((one - 1.0).abs() < 1e-12);
            for j in 0..i {
                let s: f64 = values
                    .iter()
                    .zip(rule.normalized_weights())
                    .map(|(v, w)| w * v[i] * v[j])
                    .sum();
                assert!(
                    s.abs() < 1e-10,
                    "{} {} {s}",
                    b.partitions[i],
                    b.partitions[j]
                );
            }
        }
    }

    #[test]
    fn projective_space_normalizers() {
        // G(1,3) is RP²: dim H_(n) = 4n + 1
        let b = JacobiBasis::build(3, 1, 8).unwrap();
        for n in 0..=8u32 {
            let c = b.c(&Partition::new(vec![n]).unwrap()).unwrap();
            assert!((c - (4 * n + 1) as f64).abs() < 1e-8, "n={n} c={c}");
        }
    }

    #[test]
    fn moments_of_trace() {
        let w = WeightDensity::grassmannian(4, 2).unwrap();
        let rule = ordered_simplex_quadrature(&w, 6).unwrap();
        assert!(
            (weighted_moment(&SymmetricPolynomial::constant(2, 1.0), &rule).unwrap() - 1.0).abs()
                < 1e-15
        );
        let tr = SymmetricPolynomial::power_sum_power(2, 1);
        assert!((weighted_moment(&tr, &rule).unwrap() - 1.0).abs() < 1e-14);
        let tr2 = SymmetricPolynomial::power_sum_power(2, 2);
        assert!((weighted_moment(&tr2, &rule).unwrap() - 10.0 / 9.0).abs() < 1e-14);
        let tr8 = SymmetricPolynomial::power_sum_power(2, 8);
        assert!(matches!(
            weighted_moment(&tr8, &rule),
            Err(Error::DegreeOverflow {
                degree: 8,
                capacity: 6
            })
        ));
    }

    #[test]
    fn leading_coefficient_is_nonzero() {
        let b = JacobiBasis::build(4, 2, 5).unwrap();
        for part in b.partitions() {
            let mono = b.to_monomial(part).unwrap();
            assert_eq!(mono.degree(), part.size(), "{part}");
            assert!(mono.coeffs[part].abs() > 1e-8);
            // monomial form agrees with generator form
            for y in [[0.7, 0.2], [0.4, 0.35]] {
                let a = mono.eval(&y);
                let g = b.eval_phi(part, &y).unwrap();
                assert!((a - g).abs() < 1e-8 * (1.0 + g.abs()), "{part}: {a} vs {g}");
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.json");
        let b = JacobiBasis::load_or_build(&path, 4, 2, 4).unwrap();
        let again = JacobiBasis::load_json(&path).unwrap();
        assert_eq!(again.partitions(), b.partitions());
        assert_eq!(again.c_values(), b.c_values());
        let y = [0.6, 0.25];
        assert_eq!(again.eval_all(&y), b.eval_all(&y));
    }
}
