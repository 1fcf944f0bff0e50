//! Zonal kernels: spectral sums Σ r_π K_π and closed forms in tr(PQ).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::basis::JacobiBasis;
use super::quadrature::{ordered_simplex_quadrature, WeightDensity};
use crate::error::{Error, Result};
use crate::grassmann::{squared_cosines, trace_product, ProjectorPoint};
use crate::spectral::{casimir_eigenvalue, enumerate_partitions, Partition, PartitionBound};

const MEAN_TOL: f64 = 1e-12;
const MEAN_START_DEGREE: u32 = 16;
const MEAN_MAX_DEGREE: u32 = 1024;

/// Smooth cutoff: 1 on [0, 1/2], 0 on [1, ∞).
pub fn cutoff_h(x: f64) -> f64 {
    if x <= 0.5 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        let e = (3.0 - 4.0 * x) / (2.0 - 6.0 * x + 4.0 * x * x);
        1.0 / (1.0 + e.exp())
    }
}

/// Shi(x) = ∫₀ˣ sinh(t)/t dt by its power series.
pub fn shi(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x; // x^{2n+1}/(2n+1)!
    let mut sum = 0.0;
    for n in 0..200 {
        let k = (2 * n + 1) as f64;
        let add = term / k;
        sum += add;
        if add.abs() <= 1e-17 * sum.abs() {
            break;
        }
        term *= x2 / ((k + 1.0) * (k + 2.0));
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosedFormKernel {
    /// sqrt((2 − τ)³) + 2τ
    K1,
    /// exp(τ − 2)
    K2,
    /// τ^t
    PowerRt(u32),
}

impl ClosedFormKernel {
    /// Value as a function of τ = tr(PQ).
    #[inline]
    pub fn eval_trace(self, tau: f64) -> f64 {
        match self {
            ClosedFormKernel::K1 => {
                let r = (2.0 - tau).max(0.0);
                r * r.sqrt() + 2.0 * tau
            }
            ClosedFormKernel::K2 => (tau - 2.0).exp(),
            ClosedFormKernel::PowerRt(t) => tau.powi(t as i32),
        }
    }

    pub fn name(self) -> String {
        match self {
            ClosedFormKernel::K1 => "K1".into(),
            ClosedFormKernel::K2 => "K2".into(),
            ClosedFormKernel::PowerRt(t) => format!("R{t}"),
        }
    }
}

impl fmt::Display for ClosedFormKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone)]
pub enum KernelForm {
    Spectral {
        basis: Arc<JacobiBasis>,
        /// r_π for the retained partitions, in basis order.
        coefficients: Vec<(Partition, f64)>,
        /// Generator coefficients of Σ r_π c_π φ_π.
        combined: Vec<f64>,
    },
    ClosedForm {
        kind: ClosedFormKernel,
        d: usize,
        k: usize,
    },
}

/// A zonal kernel together with its double mean r₀ = ∫∫ K dμ dμ.
#[derive(Debug, Clone)]
pub struct ZonalKernelSpec {
    form: KernelForm,
    mean: f64,
    tail_bound: Option<f64>,
}

impl ZonalKernelSpec {
    /// Σ r_π K_π over the given partitions; every r_π must be nonnegative.
    pub fn spectral(basis: Arc<JacobiBasis>, coefficients: Vec<(Partition, f64)>) -> Result<Self> {
        let mut terms = Vec::with_capacity(coefficients.len());
        let mut mean = 0.0;
        for (p, r) in &coefficients {
            if !(*r >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "negative spectral coefficient {r} at {p}"
                )));
            }
            let i = basis.index_of(p).ok_or(Error::BasisTooShallow {
                required: p.size(),
                available: basis.max_degree(),
            })?;
            if p.is_empty() {
                mean = *r;
            }
            terms.push((i, r * basis.c_values()[i]));
        }
        let combined = basis.combine(&terms);
        Ok(Self {
            form: KernelForm::Spectral {
                basis,
                coefficients,
                combined,
            },
            mean,
            tail_bound: None,
        })
    }

    pub fn closed_form(kind: ClosedFormKernel, d: usize, k: usize) -> Result<Self> {
        let mean = closed_form_mean(kind, d, k)?;
        Ok(Self {
            form: KernelForm::ClosedForm { kind, d, k },
            mean,
            tail_bound: None,
        })
    }

    pub fn form(&self) -> &KernelForm {
        &self.form
    }

    /// r₀ = ∫∫ K dμ dμ.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Estimated mass Σ c_π r_π of the truncated terms (Bessel kernels only).
    pub fn tail_bound(&self) -> Option<f64> {
        self.tail_bound
    }

    pub fn coefficients(&self) -> Option<&[(Partition, f64)]> {
        match &self.form {
            KernelForm::Spectral { coefficients, .. } => Some(coefficients),
            KernelForm::ClosedForm { .. } => None,
        }
    }

    pub fn coefficient(&self, p: &Partition) -> Option<f64> {
        self.coefficients()?
            .iter()
            .find(|(q, _)| q == p)
            .map(|(_, r)| *r)
    }

    /// (d, k) of the underlying Grassmannian.
    pub fn dims(&self) -> (usize, usize) {
        match &self.form {
            KernelForm::Spectral { basis, .. } => (basis.d(), basis.k()),
            KernelForm::ClosedForm { d, k, .. } => (*d, *k),
        }
    }

    pub fn closed_form_kind(&self) -> Option<ClosedFormKernel> {
        match &self.form {
            KernelForm::ClosedForm { kind, .. } => Some(*kind),
            KernelForm::Spectral { .. } => None,
        }
    }

    pub fn eval(&self, p: &ProjectorPoint, q: &ProjectorPoint) -> f64 {
        match &self.form {
            KernelForm::ClosedForm { kind, .. } => kind.eval_trace(trace_product(p, q)),
            KernelForm::Spectral { .. } => self.eval_cosines(squared_cosines(p, q).values()),
        }
    }

    /// Value at a pair with squared cosines `y` (nonincreasing, length k).
    pub fn eval_cosines(&self, y: &[f64]) -> f64 {
        match &self.form {
            KernelForm::ClosedForm { kind, .. } => kind.eval_trace(y.iter().sum()),
            KernelForm::Spectral {
                basis, combined, ..
            } => {
                let mut scratch = Vec::new();
                basis.eval_combined(combined, y, &mut scratch)
            }
        }
    }

    /// K(P,P), the same for every P.
    pub fn diagonal(&self) -> f64 {
        match &self.form {
            KernelForm::ClosedForm { kind, k, .. } => kind.eval_trace(*k as f64),
            KernelForm::Spectral {
                basis,
                coefficients,
                ..
            } => coefficients
                .iter()
                .map(|(p, r)| r * basis.c(p).expect("checked at construction"))
                .sum(),
        }
    }
}

pub fn eval_kernel(spec: &ZonalKernelSpec, p: &ProjectorPoint, q: &ProjectorPoint) -> f64 {
    spec.eval(p, q)
}

pub fn kernel_mean(spec: &ZonalKernelSpec) -> f64 {
    spec.mean()
}

/// ∫ g(y_1 + … + y_k) dν(y), doubling the quadrature degree until two successive
/// values agree to 1e-12, then once more.
pub fn closed_form_mean(kind: ClosedFormKernel, d: usize, k: usize) -> Result<f64> {
    let density = WeightDensity::grassmannian(d, k)?;
    let f = |y: &[f64; 2]| kind.eval_trace(y[..k].iter().sum());
    let start = match kind {
        ClosedFormKernel::PowerRt(t) => MEAN_START_DEGREE.max(2 * t),
        _ => MEAN_START_DEGREE,
    };
    let mut degree = start;
    let mut prev = ordered_simplex_quadrature(&density, degree)?.integrate_normalized(f);
    let mut last_change = f64::INFINITY;
    while degree < MEAN_MAX_DEGREE {
        degree *= 2;
        let cur = ordered_simplex_quadrature(&density, degree)?.integrate_normalized(f);
        last_change = (cur - prev).abs();
        if last_change <= MEAN_TOL * cur.abs().max(1.0) {
            return Ok(ordered_simplex_quadrature(&density, 2 * degree)?.integrate_normalized(f));
        }
        prev = cur;
    }
    Err(Error::QuadratureNotConverged { last_change })
}

/// Partitions π with λ(π) < bound, i.e. h(λ/bound) > 0 for the cutoff.
fn partitions_below(d: usize, k: usize, bound: f64) -> Result<Vec<Partition>> {
    let max = bound.ceil() as i64 - 1;
    if max < 0 {
        return Ok(Vec::new());
    }
    enumerate_partitions(k, PartitionBound::Eigenvalue { d, max })
}

/// K_t = Σ h(λ(π)/t²) K_π.
pub fn diffusion_kernel(basis: Arc<JacobiBasis>, t_scale: f64) -> Result<ZonalKernelSpec> {
    if !(t_scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "diffusion scale must be positive, got {t_scale}"
        )));
    }
    diffusion_kernel_squared(basis, t_scale * t_scale)
}

/// Same as [`diffusion_kernel`] with the squared scale given directly, so integral s² stay exact.
pub fn diffusion_kernel_squared(basis: Arc<JacobiBasis>, s2: f64) -> Result<ZonalKernelSpec> {
    if !(s2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "squared diffusion scale must be positive, got {s2}"
        )));
    }
    let (d, k) = (basis.d(), basis.k());
    let parts = partitions_below(d, k, s2)?;
    require_depth(&basis, &parts)?;
    let mut coefficients = Vec::new();
    for p in parts {
        let r = cutoff_h(casimir_eigenvalue(&p, d, k)? as f64 / s2);
        if r > 0.0 {
            coefficients.push((p, r));
        }
    }
    sort_by_basis(&basis, &mut coefficients);
    ZonalKernelSpec::spectral(basis, coefficients)
}

fn require_depth(basis: &JacobiBasis, parts: &[Partition]) -> Result<()> {
    let required = parts.iter().map(Partition::size).max().unwrap_or(0);
    if required > basis.max_degree() {
        return Err(Error::BasisTooShallow {
            required,
            available: basis.max_degree(),
        });
    }
    Ok(())
}

fn sort_by_basis(basis: &JacobiBasis, coefficients: &mut [(Partition, f64)]) {
    coefficients.sort_by_key(|(p, _)| basis.index_of(p));
}

/// Σ_{|π| ≤ truncation} (1+λ(π))^{−s} K_π with a tail estimate.
///
/// The tail assumes the per-degree mass Σ_{|π|=j} c_π (1+λ)^{−s} decays like
/// j^{−p}, p = 2s − k(d−k) + 1, anchored at the last retained degree.
pub fn bessel_kernel(
    basis: Arc<JacobiBasis>,
    s: f64,
    truncation_degree: u32,
) -> Result<ZonalKernelSpec> {
    let (d, k) = (basis.d(), basis.k());
    let dim = (k * (d - k)) as f64;
    if !(s > dim / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "Bessel order s = {s} must exceed k(d-k)/2 = {}",
            dim / 2.0
        )));
    }
    if truncation_degree > basis.max_degree() {
        return Err(Error::BasisTooShallow {
            required: truncation_degree,
            available: basis.max_degree(),
        });
    }
    let parts = enumerate_partitions(k, PartitionBound::Size(truncation_degree))?;
    let mut coefficients = Vec::with_capacity(parts.len());
    let mut last_degree_mass = 0.0;
    for p in parts {
        let r = (1.0 + casimir_eigenvalue(&p, d, k)? as f64).powf(-s);
        if p.size() == truncation_degree {
            last_degree_mass += r * basis.c(&p).expect("within max_degree");
        }
        coefficients.push((p, r));
    }
    let mut spec = ZonalKernelSpec::spectral(basis, coefficients)?;
    let j = truncation_degree.max(1) as f64;
    let p_exp = 2.0 * s - dim + 1.0;
    spec.tail_bound = Some(last_degree_mass * j / (p_exp - 1.0));
    Ok(spec)
}

/// Spectral expansion of τ^t: r_π = ∫ τ^t φ_π dν for |π| ≤ t.
pub fn power_kernel_expansion(basis: Arc<JacobiBasis>, t: u32) -> Result<ZonalKernelSpec> {
    if t > basis.max_degree() {
        return Err(Error::BasisTooShallow {
            required: t,
            available: basis.max_degree(),
        });
    }
    let k = basis.k();
    let rule = ordered_simplex_quadrature(&basis.density(), 2 * t + 8)?;
    let parts = enumerate_partitions(k, PartitionBound::Size(t))?;
    let values: Vec<(f64, Vec<f64>)> = rule
        .nodes
        .iter()
        .map(|y| {
            let tau: f64 = y[..k].iter().sum();
            (tau.powi(t as i32), basis.eval_all(&y[..k]))
        })
        .collect();
    let mut coefficients = Vec::with_capacity(parts.len());
    for p in parts {
        let i = basis.index_of(&p).expect("within max_degree");
        let r: f64 = values
            .iter()
            .zip(rule.normalized_weights())
            .map(|((f, phi), w)| w * f * phi[i])
            .collect::<crate::sum::DdSum>()
            .value();
        // zero in exact arithmetic below the noise floor is clamped
        coefficients.push((p, r.max(0.0)));
    }
    ZonalKernelSpec::spectral(basis, coefficients)
}
