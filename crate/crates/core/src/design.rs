//! Cubatures and t-designs: worst-case error, the power-kernel energy, and a
//! Riemannian Polak–Ribière+ conjugate gradient solver.
//!
//! For equal weights and R_t(P,Q) = tr(PQ)^t the squared worst-case error is
//! E − r₀(R_t) with E = n⁻² Σ_{i,j} tr(P_iP_j)^t. Near the target this gap is
//! around 1e-14 while E is O(1), so pair sums are kept as double-double and
//! the gap is formed as (S − n²r₀)/n² before any division.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::{
    project_to_grassmannian, random_uniform_projector, random_uniform_projector_from,
};
use crate::grassmann::{retract, tangent_project};
use crate::grassmann::{squared_cosines, ProjectorPoint, TangentVector};
use crate::jacobi::{ClosedFormKernel, JacobiBasis, ZonalKernelSpec};
use crate::rng::{derive_seed, stream};
use crate::spectral::Partition;
use crate::sum::DdSum;

pub const SCHEMA_VERSION: u32 = 1;
/// Reported squared errors are clamped from below at this floor.
pub const WCE_SQUARED_FLOOR: f64 = -1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub restarts: usize,
    /// First trial step of the first line search; `None` means 1/(2tn).
    pub initial_step: Option<f64>,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Steepest-descent restart when ⟨g, p⟩ > −threshold·‖g‖‖p‖.
    pub restart_threshold: f64,
    pub target_wce: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            restarts: 4,
            initial_step: None,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            restart_threshold: 1e-8,
            target_wce: 1e-7,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("solver config: {what}")));
        if self.max_iterations == 0 || self.restarts == 0 || self.max_backtracks == 0 {
            return bad("iteration, restart and backtrack counts must be positive");
        }
        if let Some(s) = self.initial_step {
            if !(s > 0.0) {
                return bad("initial step must be positive");
            }
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("Armijo parameter must lie in (0,1)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtracking factor must lie in (0,1)");
        }
        if !(self.restart_threshold > 0.0 && self.target_wce > 0.0) {
            return bad("restart threshold and target must be positive");
        }
        Ok(())
    }
}

/// Projectors packed so that tr(PQ) = ⟨u_P, w_Q⟩ with u = (diag, upper) and w = (diag, 2·upper).
#[derive(Debug, Clone)]
pub struct PackedProjectors {
    d: usize,
    m: usize,
    u: Vec<f64>,
    w: Vec<f64>,
}

impl PackedProjectors {
    pub fn new(points: &[ProjectorPoint]) -> Self {
        let d = points.first().map_or(0, ProjectorPoint::d);
        let m = d * (d + 1) / 2;
        let mut u = Vec::with_capacity(points.len() * m);
        let mut w = Vec::with_capacity(points.len() * m);
        for p in points {
            let a = p.matrix();
            for i in 0..d {
                u.push(a[(i, i)]);
                w.push(a[(i, i)]);
            }
            for i in 0..d {
                for j in i + 1..d {
                    u.push(a[(i, j)]);
                    w.push(2.0 * a[(i, j)]);
                }
            }
        }
        Self { d, m, u, w }
    }

    pub fn len(&self) -> usize {
        self.u.len().checked_div(self.m).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn trace(&self, i: usize, j: usize) -> f64 {
        let a = &self.u[i * self.m..(i + 1) * self.m];
        let b = &self.w[j * self.m..(j + 1) * self.m];
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[inline]
    fn row(&self, j: usize) -> &[f64] {
        &self.u[j * self.m..(j + 1) * self.m]
    }

    fn unpack(&self, g: &[f64]) -> DMatrix<f64> {
        let d = self.d;
        let mut out = DMatrix::zeros(d, d);
        for i in 0..d {
            out[(i, i)] = g[i];
        }
        let mut idx = d;
        for i in 0..d {
            for j in i + 1..d {
                out[(i, j)] = g[idx];
                out[(j, i)] = g[idx];
                idx += 1;
            }
        }
        out
    }
}

/// Σ_i ω_i² K_ii + 2 Σ_{i<j} ω_iω_j K_ij with exact products, rows reduced in order.
fn quadratic_form<F>(n: usize, weights: &[f64], kernel: F) -> DdSum
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let rows: Vec<DdSum> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut off = DdSum::new();
            for (j, &w) in weights.iter().enumerate().skip(i + 1) {
                off.add_product(w, kernel(i, j));
            }
            let mut row = off.scale(2.0);
            row.add_product(weights[i], kernel(i, i));
            row.scale(weights[i])
        })
        .collect();
    let mut total = DdSum::new();
    for r in &rows {
        total.merge(r);
    }
    total
}

/// wce² = r₀ − 2r₀ Σω_j + Σ_{i,j} ω_iω_j K(P_i,P_j), clamped below at −1e-13.
pub fn wce_squared(points: &[ProjectorPoint], weights: &[f64], kernel: &ZonalKernelSpec) -> f64 {
    assert_eq!(points.len(), weights.len());
    let r0 = kernel.mean();
    let mut total = DdSum::new();
    total.add(r0);
    let wsum: DdSum = weights.iter().copied().collect();
    total.merge(&wsum.scale(-2.0 * r0));
    let quad = match kernel.closed_form_kind() {
        Some(kind) => {
            let packed = PackedProjectors::new(points);
            quadratic_form(points.len(), weights, |i, j| {
                kind.eval_trace(packed.trace(i, j))
            })
        }
        None => quadratic_form(points.len(), weights, |i, j| {
            kernel.eval(&points[i], &points[j])
        }),
    };
    total.merge(&quad);
    total.value().max(WCE_SQUARED_FLOOR)
}

/// Power-kernel pair sums for n equal-weight points.
struct PowerEnergy {
    t: u32,
    n2: f64,
    /// n²·r₀(R_t) as an exact product.
    floor: DdSum,
}

impl PowerEnergy {
    fn new(t: u32, n: usize, r0: f64) -> Self {
        let n2 = (n * n) as f64;
        let mut floor = DdSum::new();
        floor.add_product(n2, r0);
        Self { t, n2, floor }
    }

    /// S = Σ_{i,j} tr_ij^t over the upper triangle.
    fn sum(&self, packed: &PackedProjectors) -> DdSum {
        let n = packed.len();
        let t = self.t as i32;
        let rows: Vec<DdSum> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut off = DdSum::new();
                for j in i + 1..n {
                    off.add(packed.trace(i, j).powi(t));
                }
                let mut row = off.scale(2.0);
                row.add(packed.trace(i, i).powi(t));
                row
            })
            .collect();
        let mut s = DdSum::new();
        for r in &rows {
            s.merge(r);
        }
        s
    }

    /// S and the packed rows Σ_j tr_ij^{t−1} P_j.
    fn sum_and_rows(&self, packed: &PackedProjectors) -> (DdSum, Vec<Vec<f64>>) {
        let n = packed.len();
        let m = packed.m;
        let t = self.t as i32;
        let rows: Vec<(DdSum, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut s = DdSum::new();
                let mut g = vec![0.0; m];
                for j in 0..n {
                    let tr = packed.trace(i, j);
                    let p1 = tr.powi(t - 1);
                    s.add(p1 * tr);
                    for (gk, uk) in g.iter_mut().zip(packed.row(j)) {
                        *gk += p1 * uk;
                    }
                }
                (s, g)
            })
            .collect();
        let mut total = DdSum::new();
        let mut grads = Vec::with_capacity(n);
        for (s, g) in rows {
            total.merge(&s);
            grads.push(g);
        }
        (total, grads)
    }

    fn gap(&self, s: &DdSum) -> f64 {
        s.minus(&self.floor) / self.n2
    }

    /// Riemannian gradient of E = S/n² at every point.
    fn gradient(
        &self,
        points: &[ProjectorPoint],
        packed: &PackedProjectors,
        rows: &[Vec<f64>],
    ) -> Vec<DMatrix<f64>> {
        let scale = 2.0 * self.t as f64 / self.n2;
        points
            .iter()
            .zip(rows)
            .map(|(p, g)| {
                tangent_project(p, &(packed.unpack(g) * scale))
                    .entries()
                    .clone()
            })
            .collect()
    }
}

/// E = n⁻² Σ_{i,j} tr(P_iP_j)^t and its Riemannian gradient.
pub fn energy_and_gradient(points: &[ProjectorPoint], t: u32) -> (f64, Vec<TangentVector>) {
    let n = points.len();
    let pe = PowerEnergy::new(t.max(1), n, 0.0);
    let packed = PackedProjectors::new(points);
    let (s, rows) = pe.sum_and_rows(&packed);
    let grads = pe
        .gradient(points, &packed, &rows)
        .into_iter()
        .map(TangentVector::from_entries_unchecked)
        .collect();
    (s.value() / pe.n2, grads)
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub iterations: usize,
    pub wce: f64,
    pub reached_target: bool,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub reached_target: bool,
    pub target_wce: f64,
    /// Squared-error gap E − r₀ after every iteration of the returned run.
    pub trace: Vec<f64>,
    pub runs: Vec<RunSummary>,
}

impl SolveReport {
    /// `TargetNotReached` when the returned ensemble misses the target.
    pub fn check(&self, ensemble: &DesignEnsemble) -> Result<()> {
        if self.reached_target {
            Ok(())
        } else {
            Err(Error::TargetNotReached {
                achieved: ensemble.achieved_wce,
                target: self.target_wce,
            })
        }
    }
}

struct CgRun {
    points: Vec<ProjectorPoint>,
    gap: f64,
    trace: Vec<f64>,
    iterations: usize,
}

fn retract_all(
    points: &[ProjectorPoint],
    dir: &[DMatrix<f64>],
    alpha: f64,
) -> Result<Vec<ProjectorPoint>> {
    points
        .iter()
        .zip(dir)
        .map(|(p, x)| retract(p, &TangentVector::from_entries_unchecked(x.clone()), alpha))
        .collect()
}

fn transport(points: &[ProjectorPoint], v: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    points
        .iter()
        .zip(v)
        .map(|(p, x)| tangent_project(p, x).entries().clone())
        .collect()
}

/// Energy sum and Riemannian gradient at one configuration.
struct Evaluated {
    points: Vec<ProjectorPoint>,
    s: DdSum,
    g: Vec<DMatrix<f64>>,
}

fn evaluate(pe: &PowerEnergy, points: Vec<ProjectorPoint>) -> Evaluated {
    let packed = PackedProjectors::new(&points);
    let (s, rows) = pe.sum_and_rows(&packed);
    let g = pe.gradient(&points, &packed, &rows);
    Evaluated { points, s, g }
}

/// Spread of E under re-rounding the same subspaces; off-manifold rounding moves
/// E by a few 1e-16, which hides Armijo decreases near the target.
const NOISE_REFRESH: usize = 200;
/// A run stops once the gap has not dropped by 1% over this many iterations.
const STALL_WINDOW: usize = 1500;

fn rounding_noise(pe: &PowerEnergy, points: &[ProjectorPoint], s: &DdSum) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut current = points.to_vec();
    for _ in 0..3 {
        current = current
            .iter()
            .map(|p| project_to_grassmannian(p.matrix(), p.k()))
            .collect::<Result<Vec<_>>>()?;
        let s2 = pe.sum(&PackedProjectors::new(&current));
        worst = worst.max((s2.minus(s) / pe.n2).abs());
    }
    Ok((4.0 * worst).max(1e-18))
}

struct Trial {
    alpha: f64,
    eval: Evaluated,
    /// E(α) − E(0).
    change: f64,
    /// Directional derivative at α along the transported direction.
    slope: f64,
}

fn run_cg(
    points: Vec<ProjectorPoint>,
    t: u32,
    r0: f64,
    config: &SolverConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<CgRun> {
    let n = points.len();
    let pe = PowerEnergy::new(t, n, r0);
    let mut cur = evaluate(&pe, points);
    let mut noise = rounding_noise(&pe, &cur.points, &cur.s)?;
    let mut gap = pe.gap(&cur.s);
    let mut trace = vec![gap];
    let mut dir: Vec<DMatrix<f64>> = cur.g.iter().map(|x| -x).collect();
    let mut prev: Option<(f64, f64)> = None; // (step, slope)
    let target2 = config.target_wce * config.target_wce;
    let first_step = config
        .initial_step
        .unwrap_or(1.0 / (2.0 * t as f64 * n as f64));
    // steepest-descent restarts reuse the last accepted step, not the tiny first one
    let mut last_step: Option<f64> = None;
    let mut iterations = 0;
    let (mut mark, mut mark_at) = (gap, 0);

    while iterations < config.max_iterations && gap > target2 {
        if iterations - mark_at >= STALL_WINDOW {
            break;
        }
        iterations += 1;
        if iterations % NOISE_REFRESH == 0 {
            noise = rounding_noise(&pe, &cur.points, &cur.s)?;
        }
        let gnorm2 = inner(&cur.g, &cur.g);
        if gnorm2 == 0.0 {
            break;
        }
        let mut slope = inner(&cur.g, &dir);
        let mut steepest = false;
        if !(slope < -config.restart_threshold * (gnorm2 * inner(&dir, &dir)).sqrt()) {
            dir = cur.g.iter().map(|x| -x).collect();
            slope = -gnorm2;
            steepest = true;
        }
        let alpha0 = match prev {
            Some((a, sp)) => a * sp / slope,
            None => last_step.unwrap_or(first_step),
        };

        let trial = |alpha: f64| -> Result<Trial> {
            let eval = evaluate(&pe, retract_all(&cur.points, &dir, alpha)?);
            let moved = transport(&eval.points, &dir);
            let slope_at = inner(&eval.g, &moved);
            let change = eval.s.minus(&cur.s) / pe.n2;
            Ok(Trial {
                alpha,
                eval,
                change,
                slope: slope_at,
            })
        };
        // sufficient decrease on function values, or its derivative-based
        // (trapezoid) estimate once the change is below the rounding noise
        let acceptable = |c: &Trial| {
            let bound = config.armijo * c.alpha * slope;
            c.change <= bound || (c.change <= noise && 0.5 * c.alpha * (slope + c.slope) <= bound)
        };
        let estimate = |c: &Trial| {
            if c.change.abs() > noise {
                c.change
            } else {
                0.5 * c.alpha * (slope + c.slope)
            }
        };

        let t0 = trial(alpha0)?;
        // secant root of φ', kept within a factor of α0
        let curvature = t0.slope - slope;
        let a1 = if curvature > 0.0 {
            (alpha0 * -slope / curvature).clamp(alpha0 * 1e-3, alpha0 * 10.0)
        } else {
            alpha0 * 10.0
        };
        let mut best = acceptable(&t0).then_some(t0);
        if (a1 - alpha0).abs() > 1e-3 * alpha0 {
            let t1 = trial(a1)?;
            if acceptable(&t1) && best.as_ref().is_none_or(|b| estimate(&t1) < estimate(b)) {
                best = Some(t1);
            }
        }
        if best.is_none() {
            let mut alpha = alpha0.min(a1);
            for _ in 0..config.max_backtracks {
                alpha *= config.backtrack;
                let c = trial(alpha)?;
                if acceptable(&c) {
                    best = Some(c);
                    break;
                }
            }
        }
        let Some(step) = best else {
            if steepest || prev.is_none() {
                break;
            }
            // retry this iteration along steepest descent
            dir = cur.g.iter().map(|x| -x).collect();
            prev = None;
            continue;
        };

        let next = step.eval;
        let g_old = transport(&next.points, &cur.g);
        let dir_old = transport(&next.points, &dir);
        let y: Vec<DMatrix<f64>> = next.g.iter().zip(&g_old).map(|(a, b)| a - b).collect();
        let beta = (inner(&next.g, &y) / gnorm2).max(0.0);
        dir = next
            .g
            .iter()
            .zip(&dir_old)
            .map(|(gn, d)| d * beta - gn)
            .collect();
        prev = Some((step.alpha, slope));
        last_step = Some(step.alpha);
        cur = next;
        gap = pe.gap(&cur.s);
        trace.push(gap);
        if gap < 0.99 * mark {
            (mark, mark_at) = (gap, iterations);
        }
        progress(iterations, gap);
    }
    Ok(CgRun {
        points: cur.points,
        gap,
        trace,
        iterations,
    })
}

/// Equal-weight t-design of n points by Riemannian CG on the power-kernel energy.
///
/// Restarts run from independent uniform initializations until one reaches
/// the target; otherwise the best run is returned with `reached_target` false.
pub fn solve_design(
    d: usize,
    k: usize,
    t: u32,
    n: usize,
    config: &SolverConfig,
) -> Result<(DesignEnsemble, SolveReport)> {
    solve_design_with_progress(d, k, t, n, config, &mut |_, _, _| {})
}

/// [`solve_design`] reporting (restart, iteration, E − r₀) after every iteration.
pub fn solve_design_with_progress(
    d: usize,
    k: usize,
    t: u32,
    n: usize,
    config: &SolverConfig,
    progress: &mut dyn FnMut(usize, usize, f64),
) -> Result<(DesignEnsemble, SolveReport)> {
    if n == 0 || t == 0 {
        return Err(Error::InvalidParameter(
            "solve_design needs n >= 1 and t >= 1".into(),
        ));
    }
    config.validate()?;
    let kernel = ZonalKernelSpec::closed_form(ClosedFormKernel::PowerRt(t), d, k)?;
    let r0 = kernel.mean();
    let mut best: Option<CgRun> = None;
    let mut runs = Vec::new();
    for r in 0..config.restarts {
        let seed = derive_seed(config.seed, r as u64);
        let mut rng = stream(seed);
        let start = (0..n)
            .map(|_| random_uniform_projector_from(&mut rng, d, k))
            .collect::<Result<Vec<_>>>()?;
        let run = run_cg(start, t, r0, config, &mut |i, gap| progress(r, i, gap))?;
        let wce = run.gap.max(0.0).sqrt();
        let reached = wce <= config.target_wce;
        runs.push(RunSummary {
            seed,
            iterations: run.iterations,
            wce,
            reached_target: reached,
        });
        if best.as_ref().is_none_or(|b| run.gap < b.gap) {
            best = Some(run);
        }
        if reached {
            break;
        }
    }
    let best = best.expect("at least one restart");
    finish_run(d, k, t, best, config, config.seed, 0, runs)
}

/// Continues the CG iteration from an existing equal-weight design.
///
/// A single run is made; the reported iteration count includes the start's.
pub fn refine_design(
    start: &DesignEnsemble,
    config: &SolverConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<(DesignEnsemble, SolveReport)> {
    config.validate()?;
    let (d, k, t) = (start.d, start.k, start.t);
    let n = start.n();
    if start.weights.iter().any(|&w| w != 1.0 / n as f64) {
        return Err(Error::InvalidParameter(
            "refine_design needs equal weights".into(),
        ));
    }
    let kernel = ZonalKernelSpec::closed_form(ClosedFormKernel::PowerRt(t), d, k)?;
    let run = run_cg(start.points.clone(), t, kernel.mean(), config, progress)?;
    let wce = run.gap.max(0.0).sqrt();
    let runs = vec![RunSummary {
        seed: start.seed,
        iterations: run.iterations,
        wce,
        reached_target: wce <= config.target_wce,
    }];
    finish_run(d, k, t, run, config, start.seed, start.iterations, runs)
}

#[allow(clippy::too_many_arguments)]
fn finish_run(
    d: usize,
    k: usize,
    t: u32,
    best: CgRun,
    config: &SolverConfig,
    seed: u64,
    prior_iterations: usize,
    runs: Vec<RunSummary>,
) -> Result<(DesignEnsemble, SolveReport)> {
    let mut ensemble = DesignEnsemble::equal_weight(d, k, t, best.points, seed)?;
    ensemble.solver_config = Some(*config);
    ensemble.iterations = prior_iterations + best.iterations;
    ensemble.energy_history_len = best.trace.len();
    let reached_target = ensemble.achieved_wce <= config.target_wce;
    Ok((
        ensemble,
        SolveReport {
            reached_target,
            target_wce: config.target_wce,
            trace: best.trace,
            runs,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct DesignEnsemble {
    pub d: usize,
    pub k: usize,
    pub t: u32,
    pub points: Vec<ProjectorPoint>,
    pub weights: Vec<f64>,
    /// Worst-case error for Pol_t under R_t, recomputed from points and weights.
    pub achieved_wce: f64,
    pub seed: u64,
    pub solver_config: Option<SolverConfig>,
    pub iterations: usize,
    pub energy_history_len: usize,
}

#[derive(Serialize, Deserialize)]
struct DesignFile {
    schema_version: u32,
    d: usize,
    k: usize,
    t: u32,
    n: usize,
    weights: Vec<f64>,
    points: Vec<Vec<f64>>,
    achieved_wce: f64,
    seed: u64,
    solver_config: Option<SolverConfig>,
    #[serde(default)]
    iterations: usize,
    #[serde(default)]
    energy_history_len: usize,
}

impl DesignEnsemble {
    /// Weights 1/n.
    pub fn equal_weight(
        d: usize,
        k: usize,
        t: u32,
        points: Vec<ProjectorPoint>,
        seed: u64,
    ) -> Result<Self> {
        let n = points.len();
        Self::weighted(d, k, t, points, vec![1.0 / n as f64; n], seed)
    }

    /// Positive weights summing to one within 1e-14.
    pub fn weighted(
        d: usize,
        k: usize,
        t: u32,
        points: Vec<ProjectorPoint>,
        weights: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidParameter(
                "need one weight per point and at least one point".into(),
            ));
        }
        if points.iter().any(|p| p.d() != d || p.k() != k) {
            return Err(Error::InvalidDimensions {
                d,
                k,
                reason: "point dimensions differ from the ensemble",
            });
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        let total: DdSum = weights.iter().copied().collect();
        if (total.value() - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidParameter(format!(
                "weights sum to {}",
                total.value()
            )));
        }
        let mut e = Self {
            d,
            k,
            t,
            points,
            weights,
            achieved_wce: 0.0,
            seed,
            solver_config: None,
            iterations: 0,
            energy_history_len: 0,
        };
        e.achieved_wce = e.recompute_wce()?;
        Ok(e)
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    /// sqrt(max(0, wce²)) for Pol_t under R_t.
    pub fn recompute_wce(&self) -> Result<f64> {
        let kernel =
            ZonalKernelSpec::closed_form(ClosedFormKernel::PowerRt(self.t.max(1)), self.d, self.k)?;
        Ok(wce_squared(&self.points, &self.weights, &kernel)
            .max(0.0)
            .sqrt())
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = DesignFile {
            schema_version: SCHEMA_VERSION,
            d: self.d,
            k: self.k,
            t: self.t,
            n: self.n(),
            weights: self.weights.clone(),
            points: self
                .points
                .iter()
                .map(ProjectorPoint::to_row_major)
                .collect(),
            achieved_wce: self.achieved_wce,
            seed: self.seed,
            solver_config: self.solver_config,
            iterations: self.iterations,
            energy_history_len: self.energy_history_len,
        };
        let mut s = serde_json::to_string(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: DesignFile = serde_json::from_str(s)?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported schema_version {}",
                f.schema_version
            )));
        }
        if f.points.len() != f.n || f.weights.len() != f.n || f.n == 0 {
            return Err(Error::Format(format!(
                "n = {} but {} points and {} weights",
                f.n,
                f.points.len(),
                f.weights.len()
            )));
        }
        let points = f
            .points
            .iter()
            .map(|row| ProjectorPoint::from_row_major(f.d, f.k, row))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Format(format!("invalid point: {e}")))?;
        if f.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Format("weights must be positive".into()));
        }
        Ok(Self {
            d: f.d,
            k: f.k,
            t: f.t,
            points,
            weights: f.weights,
            achieved_wce: f.achieved_wce,
            seed: f.seed,
            solver_config: f.solver_config,
            iterations: f.iterations,
            energy_history_len: f.energy_history_len,
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    /// max over probes and 1 ≤ |π| ≤ t of |Σ_j ω_j K_π(Q,P_j)| / c_π.
    pub max_violation: f64,
    pub worst_partition: Option<Partition>,
    pub wce_squared: f64,
    pub probes: usize,
}

impl VerifyReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

/// Checks Σ_j ω_j K_π(Q,P_j) = 0 for 1 ≤ |π| ≤ t at random probes Q.
pub fn verify_cubature(
    ensemble: &DesignEnsemble,
    t: u32,
    basis: &JacobiBasis,
    probes: usize,
    seed: u64,
) -> Result<VerifyReport> {
    if basis.max_degree() < t {
        return Err(Error::BasisTooShallow {
            required: t,
            available: basis.max_degree(),
        });
    }
    if basis.d() != ensemble.d || basis.k() != ensemble.k {
        return Err(Error::InvalidDimensions {
            d: ensemble.d,
            k: ensemble.k,
            reason: "basis built for other dimensions",
        });
    }
    let checked: Vec<usize> = basis
        .partitions()
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_empty() && p.size() <= t)
        .map(|(i, _)| i)
        .collect();
    let mut max_violation = 0.0;
    let mut worst = None;
    for probe in 0..probes {
        let q = random_uniform_projector(ensemble.d, ensemble.k, derive_seed(seed, probe as u64))?;
        let mut sums = vec![DdSum::new(); checked.len()];
        for (p, w) in ensemble.points.iter().zip(&ensemble.weights) {
            let phi = basis.eval_all(squared_cosines(&q, p).values());
            for (acc, &i) in sums.iter_mut().zip(&checked) {
                acc.add_product(*w, phi[i]);
            }
        }
        for (acc, &i) in sums.iter().zip(&checked) {
            let v = acc.value().abs();
            if v > max_violation {
                max_violation = v;
                worst = Some(basis.partitions()[i].clone());
            }
        }
    }
    let kernel =
        ZonalKernelSpec::closed_form(ClosedFormKernel::PowerRt(t.max(1)), ensemble.d, ensemble.k)?;
    let wce2 = wce_squared(&ensemble.points, &ensemble.weights, &kernel);
    Ok(VerifyReport {
        max_violation,
        worst_partition: worst,
        wce_squared: wce2,
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::tangent_project;

    fn pair_design() -> Vec<ProjectorPoint> {
        let p = random_uniform_projector(4, 2, 11).unwrap();
        let q = p.complement().unwrap();
        vec![p, q]
    }

    #[test]
    fn single_point_r1() {
        let k = ZonalKernelSpec::closed_form(ClosedFormKernel::PowerRt(1), 4, 2).unwrap();
        for seed in 0..3 {
            let p = random_uniform_projector(4, 2, seed).unwrap();
            assert!((wce_squared(&[p], &[1.0], &k) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn complementary_pair_is_a_one_design() {
        let k = ZonalKernelSpec::closed_form(ClosedFormKernel::PowerRt(1), 4, 2).unwrap();
        assert!(wce_squared(&pair_design(), &[0.5, 0.5], &k).abs() < 1e-15);
    }

    #[test]
    fn packed_trace_matches_matrix_trace() {
        let pts: Vec<_> = (0..4)
            .map(|s| random_uniform_projector(5, 2, s).unwrap())
            .collect();
        let packed = PackedProjectors::new(&pts);
        for i in 0..4 {
            for j in 0..4 {
                let tr = crate::grassmann::trace_product(&pts[i], &pts[j]);
                assert!((packed.trace(i, j) - tr).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_point_gradient_vanishes() {
        let p = random_uniform_projector(4, 2, 5).unwrap();
        let (e, g) = energy_and_gradient(&[p], 3);
        assert!((e - 8.0).abs() < 1e-13);
        assert!(g[0].norm() < 1e-13);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pts: Vec<_> = (0..7)
            .map(|s| random_uniform_projector(4, 2, 100 + s).unwrap())
            .collect();
        let t = 3;
        let (_, grad) = energy_and_gradient(&pts, t);
        let mut rng = stream(9);
        for _ in 0..5 {
            let dirs: Vec<DMatrix<f64>> = pts
                .iter()
                .map(|p| {
                    let z =
                        crate::grassmann::random_uniform_projector_from(&mut rng, 4, 2).unwrap();
                    tangent_project(p, z.matrix()).entries().clone()
                })
                .collect();
            let h = 1e-5;
            let plus = retract_all(&pts, &dirs, h).unwrap();
            let minus = retract_all(&pts, &dirs, -h).unwrap();
            let fd =
                (energy_and_gradient(&plus, t).0 - energy_and_gradient(&minus, t).0) / (2.0 * h);
            let analytic: f64 = grad
                .iter()
                .zip(&dirs)
                .map(|(g, x)| g.entries().dot(x))
                .sum();
            assert!(
                (fd - analytic).abs() <= 1e-6 * analytic.abs(),
                "{fd} {analytic}"
            );
        }
    }

    #[test]
    fn energy_bounded_below_by_mean() {
        let r0 = crate::jacobi::closed_form_mean(ClosedFormKernel::PowerRt(4), 4, 2).unwrap();
        for seed in 0..5 {
            let pts: Vec<_> = (0..6)
                .map(|s| random_uniform_projector(4, 2, seed * 10 + s).unwrap())
                .collect();
            assert!(energy_and_gradient(&pts, 4).0 - r0 >= -1e-12);
        }
    }

    #[test]
    fn solves_small_one_design_deterministically() {
        let config = SolverConfig {
            seed: 3,
            ..SolverConfig::default()
        };
        let (a, report) = solve_design(4, 2, 1, 3, &config).unwrap();
        assert!(report.reached_target, "{:?}", report.runs);
        assert!(a.achieved_wce <= 1e-7);
        for w in report.trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let (b, _) = solve_design(4, 2, 1, 3, &config).unwrap();
        assert_eq!(a.to_json_string().unwrap(), b.to_json_string().unwrap());
    }

    #[test]
    fn refine_continues_a_truncated_run() {
        let short = SolverConfig {
            seed: 5,
            restarts: 1,
            max_iterations: 2,
            ..SolverConfig::default()
        };
        let (start, report) = solve_design(4, 2, 2, 15, &short).unwrap();
        assert!(!report.reached_target);
        let (done, report) =
            refine_design(&start, &SolverConfig::default(), &mut |_, _| {}).unwrap();
        assert!(report.reached_target, "{:?}", report.runs);
        assert!(done.iterations > start.iterations);
        assert_eq!(done.seed, start.seed);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let e = DesignEnsemble::equal_weight(4, 2, 1, pair_design(), 0).unwrap();
        let s = e.to_json_string().unwrap();
        let back = DesignEnsemble::from_json_str(&s).unwrap();
        for (p, q) in e.points.iter().zip(&back.points) {
            assert_eq!(p.to_row_major(), q.to_row_major());
        }
        assert_eq!(back.to_json_string().unwrap(), s);
        assert!(DesignEnsemble::from_json_str(&s[..s.len() / 2]).is_err());
    }

    #[test]
    fn verify_pair_and_negative_control() {
        let basis = JacobiBasis::build(4, 2, 3).unwrap();
        let e = DesignEnsemble::equal_weight(4, 2, 1, pair_design(), 0).unwrap();
        let rep = verify_cubature(&e, 1, &basis, 5, 1).unwrap();
        assert!(rep.max_violation < 1e-14, "{rep:?}");
        let single = DesignEnsemble::equal_weight(
            4,
            2,
            1,
            vec![random_uniform_projector(4, 2, 2).unwrap()],
            0,
        )
        .unwrap();
        let rep = verify_cubature(&single, 1, &basis, 5, 1).unwrap();
        assert!(rep.max_violation > 0.1);
    }
}
