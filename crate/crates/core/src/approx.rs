//! Kernel approximation σ(f)(Q) = Σ_j ω_j f(P_j) K_s(P_j, Q) from design samples.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::design::DesignEnsemble;
use crate::error::{Error, Result};
use crate::grassmann::{
    gaussian_perturbed_projector_from, random_uniform_projector_from, squared_cosines,
};
use crate::grassmann::{trace_product, ProjectorPoint};
use crate::jacobi::{diffusion_kernel_squared, ClosedFormKernel, JacobiBasis, ZonalKernelSpec};
use crate::rng::{derive_seed, stream};
use crate::spectral::{enumerate_partitions, PartitionBound};

/// s² = 2(t² + 3t + 3 + (−1)^t).
pub fn scale_squared(t: u32) -> f64 {
    let t = t as i64;
    let sign = if t % 2 == 0 { 1 } else { -1 };
    (2 * (t * t + 3 * t + 3 + sign)) as f64
}

/// σ built from a design of strength 2t.
#[derive(Debug, Clone)]
pub struct ApproxModel {
    design: Arc<DesignEnsemble>,
    t: u32,
    scale: f64,
    kernel: ZonalKernelSpec,
    /// ω_j f(P_j).
    weighted_values: Vec<f64>,
}

impl ApproxModel {
    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn kernel(&self) -> &ZonalKernelSpec {
        &self.kernel
    }

    pub fn design(&self) -> &DesignEnsemble {
        &self.design
    }

    /// K_s(P_j, Q) for every design point.
    pub fn kernel_row(&self, q: &ProjectorPoint) -> Vec<f64> {
        self.design
            .points
            .iter()
            .map(|p| self.kernel.eval_cosines(squared_cosines(p, q).values()))
            .collect()
    }

    pub fn evaluate(&self, q: &ProjectorPoint) -> f64 {
        self.apply_row(&self.kernel_row(q))
    }

    fn apply_row(&self, row: &[f64]) -> f64 {
        self.weighted_values
            .iter()
            .zip(row)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Same design and kernel, different samples.
    pub fn with_function<F: Fn(&ProjectorPoint) -> f64>(&self, f: F) -> Self {
        let weighted_values = self
            .design
            .points
            .iter()
            .zip(&self.design.weights)
            .map(|(p, w)| w * f(p))
            .collect();
        Self {
            weighted_values,
            ..self.clone()
        }
    }
}

/// Smallest basis degree covering all π with λ(π) < s².
fn required_degree(d: usize, k: usize, s2: f64) -> Result<u32> {
    let max = s2.ceil() as i64 - 1;
    Ok(
        enumerate_partitions(k, PartitionBound::Eigenvalue { d, max })?
            .iter()
            .map(|p| p.size())
            .max()
            .unwrap_or(0),
    )
}

/// Model with s = sqrt(2(t²+3t+3+(−1)^t)) and coefficients h(λ(π)/s²) over λ(π) < s².
pub fn build_model<F: Fn(&ProjectorPoint) -> f64>(
    f: F,
    design: Arc<DesignEnsemble>,
    t: u32,
) -> Result<ApproxModel> {
    if design.t != 2 * t {
        return Err(Error::StrengthMismatch {
            expected: 2 * t,
            found: design.t,
        });
    }
    let s2 = scale_squared(t);
    let degree = required_degree(design.d, design.k, s2)?;
    let basis = Arc::new(JacobiBasis::build(design.d, design.k, degree)?);
    let kernel = diffusion_kernel_squared(basis, s2)?;
    let weighted_values = design
        .points
        .iter()
        .zip(&design.weights)
        .map(|(p, w)| w * f(p))
        .collect();
    Ok(ApproxModel {
        design,
        t,
        scale: s2.sqrt(),
        kernel,
        weighted_values,
    })
}

pub fn evaluate_model(model: &ApproxModel, q: &ProjectorPoint) -> f64 {
    model.evaluate(q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CloudTag {
    Uniform,
    Perturbed { variance: f64 },
}

#[derive(Debug, Clone)]
pub struct SampleCloud {
    pub points: Vec<ProjectorPoint>,
    pub tags: Vec<CloudTag>,
    pub seed: u64,
}

impl SampleCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, tag: CloudTag) -> usize {
        self.tags.iter().filter(|t| **t == tag).count()
    }
}

pub const CLOUD_UNIFORM: usize = 25_000;
pub const CLOUD_PERTURBED: [(f64, usize); 2] = [(0.15, 12_500), (0.5, 12_500)];

/// 25 000 uniform points plus 12 500 perturbations of `base` at each of the variances 0.15 and 0.5.
pub fn build_error_sample_cloud(base: &ProjectorPoint, seed: u64) -> Result<SampleCloud> {
    build_sample_cloud(base, CLOUD_UNIFORM, &CLOUD_PERTURBED, seed)
}

/// Each block draws from its own stream, so block sizes do not shift the other blocks.
pub fn build_sample_cloud(
    base: &ProjectorPoint,
    uniform: usize,
    perturbed: &[(f64, usize)],
    seed: u64,
) -> Result<SampleCloud> {
    let (d, k) = (base.d(), base.k());
    let mut points = Vec::with_capacity(uniform + perturbed.iter().map(|p| p.1).sum::<usize>());
    let mut tags = Vec::with_capacity(points.capacity());
    let mut rng = stream(derive_seed(seed, 0));
    for _ in 0..uniform {
        points.push(random_uniform_projector_from(&mut rng, d, k)?);
        tags.push(CloudTag::Uniform);
    }
    for (block, &(variance, count)) in perturbed.iter().enumerate() {
        let mut rng = stream(derive_seed(seed, block as u64 + 1));
        for _ in 0..count {
            points.push(gaussian_perturbed_projector_from(&mut rng, base, variance)?);
            tags.push(CloudTag::Perturbed { variance });
        }
    }
    if points.is_empty() {
        return Err(Error::InvalidParameter(
            "sample cloud must be nonempty".into(),
        ));
    }
    Ok(SampleCloud { points, tags, seed })
}

/// max over the cloud of |f(Q) − σ(Q)|.
pub fn sup_error<F: Fn(&ProjectorPoint) -> f64 + Sync>(
    model: &ApproxModel,
    f: F,
    cloud: &SampleCloud,
) -> f64 {
    cloud
        .points
        .par_iter()
        .map(|q| (f(q) - model.evaluate(q)).abs())
        .reduce(|| 0.0, f64::max)
}

/// Target function evaluated on the cloud.
pub type TestFn<'a> = dyn Fn(&ProjectorPoint) -> f64 + Sync + 'a;

/// Sup errors of several models sharing one design and kernel, one kernel row per cloud point.
pub fn sup_errors_shared(models: &[(&ApproxModel, &TestFn<'_>)], cloud: &SampleCloud) -> Vec<f64> {
    let Some((first, _)) = models.first() else {
        return Vec::new();
    };
    assert!(models
        .iter()
        .all(|(m, _)| Arc::ptr_eq(&m.design, &first.design) && m.t == first.t));
    cloud
        .points
        .par_iter()
        .map(|q| {
            let row = first.kernel_row(q);
            models
                .iter()
                .map(|(m, f)| (f(q) - m.apply_row(&row)).abs())
                .collect::<Vec<_>>()
        })
        .reduce(
            || vec![0.0; models.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect(),
        )
}

/// f₁ = K₁(I₂, ·) and f₂ = K₂(I₂, ·) on G(k,d) with I₂ the coordinate projector.
pub fn test_function(
    kind: ClosedFormKernel,
    base: &ProjectorPoint,
) -> impl Fn(&ProjectorPoint) -> f64 + Sync + '_ {
    move |p| kind.eval_trace(trace_product(base, p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxRecord {
    pub function: String,
    pub t: u32,
    pub s: f64,
    pub n: usize,
    pub sup_error: f64,
    pub cloud_seed: u64,
}

/// Sup errors of σ for f₁ and f₂ at each t, using the design of strength 2t.
pub fn experiment_fig3(
    t_range: &[u32],
    designs: &[Arc<DesignEnsemble>],
    seed: u64,
) -> Result<Vec<ApproxRecord>> {
    let mut out = Vec::new();
    let mut cloud: Option<SampleCloud> = None;
    for &t in t_range {
        let design = designs
            .iter()
            .find(|e| e.t == 2 * t)
            .cloned()
            .ok_or(Error::MissingDesign { t: 2 * t })?;
        let base = ProjectorPoint::coordinate(design.d, design.k)?;
        if cloud.is_none() {
            cloud = Some(build_error_sample_cloud(&base, seed)?);
        }
        let cloud = cloud.as_ref().expect("built above");
        let f1 = test_function(ClosedFormKernel::K1, &base);
        let f2 = test_function(ClosedFormKernel::K2, &base);
        let m1 = build_model(&f1, design.clone(), t)?;
        let m2 = m1.with_function(&f2);
        let errs = sup_errors_shared(&[(&m1, &f1), (&m2, &f2)], cloud);
        for (name, e) in ["f1", "f2"].iter().zip(errs) {
            out.push(ApproxRecord {
                function: name.to_string(),
                t,
                s: m1.scale(),
                n: design.n(),
                sup_error: e,
                cloud_seed: seed,
            });
        }
    }
    Ok(out)
}

pub fn write_fig3_csv<W: Write>(records: &[ApproxRecord], mut out: W) -> Result<()> {
    writeln!(out, "function,t,s,n,sup_error,cloud_seed")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{:e},{}",
            r.function, r.t, r.s, r.n, r.sup_error, r.cloud_seed
        )?;
    }
    Ok(())
}
