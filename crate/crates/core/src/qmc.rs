//! Integration experiments: design error curves against random baselines.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{wce_squared, DesignEnsemble};
use crate::error::{Error, Result};
use crate::grassmann::{random_uniform_projector_from, trace_product};
use crate::jacobi::{shi, ClosedFormKernel, ZonalKernelSpec};
use crate::rng::{derive_seed, stream};

/// Default solver target; design errors below it are not trustworthy.
pub const DESIGN_ACCURACY_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Design,
    RandomMean,
    RandomQ10,
    RandomQ90,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Design => "design",
            Family::RandomMean => "random-mean",
            Family::RandomQ10 => "random-q10",
            Family::RandomQ90 => "random-q90",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub family: Family,
    pub kernel: String,
    pub t: Option<u32>,
    pub n: usize,
    /// wce for designs and quantiles, root of the mean squared wce for `RandomMean`.
    pub error: f64,
    pub trials: Option<usize>,
    /// Design error at or below the accuracy the design was solved to.
    pub at_accuracy_floor: bool,
}

/// G(2,4) closed forms: CK₁ = 2 + (74/75)√2 − (2/5) ln(1+√2), CK₂ = e⁻¹ Shi(1).
pub fn g24_closed_form_constant(kind: ClosedFormKernel) -> Option<f64> {
    match kind {
        ClosedFormKernel::K1 => {
            Some(2.0 + 74.0 / 75.0 * 2f64.sqrt() - 0.4 * (1.0 + 2f64.sqrt()).ln())
        }
        ClosedFormKernel::K2 => Some((-1f64).exp() * shi(1.0)),
        ClosedFormKernel::PowerRt(_) => None,
    }
}

/// Aborts when the quadrature mean of a G(2,4) kernel disagrees with its closed form by more than 1e-6.
pub fn check_kernel_constant(kernel: &ZonalKernelSpec) -> Result<()> {
    if kernel.dims() != (4, 2) {
        return Ok(());
    }
    let Some(exact) = kernel.closed_form_kind().and_then(g24_closed_form_constant) else {
        return Ok(());
    };
    let diff = (kernel.mean() - exact).abs();
    if diff > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "kernel mean {} differs from its closed form {exact} by {diff:e}",
            kernel.mean()
        )));
    }
    Ok(())
}

/// Monte Carlo estimate of ∫∫ g(tr PQ) over independent uniform pairs: (mean, standard error).
pub fn monte_carlo_kernel_mean(
    kind: ClosedFormKernel,
    d: usize,
    k: usize,
    pairs: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    const CHUNK: usize = 100_000;
    let chunks = pairs.div_ceil(CHUNK);
    let parts: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<(f64, f64, usize)> {
            let mut rng = stream(derive_seed(seed, c as u64));
            let m = CHUNK.min(pairs - c * CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..m {
                let p = random_uniform_projector_from(&mut rng, d, k)?;
                let q = random_uniform_projector_from(&mut rng, d, k)?;
                let v = kind.eval_trace(trace_product(&p, &q));
                s += v;
                s2 += v * v;
            }
            Ok((s, s2, m))
        })
        .collect::<Result<_>>()?;
    let (s, s2, m) = parts
        .iter()
        .fold((0.0, 0.0, 0usize), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let m = m as f64;
    let mean = s / m;
    let var = (s2 / m - mean * mean).max(0.0) * m / (m - 1.0);
    Ok((mean, (var / m).sqrt()))
}

/// wce per design, flagged when at or below the accuracy the design was solved to.
pub fn design_wce_curve(
    designs: &[DesignEnsemble],
    kernel: &ZonalKernelSpec,
    name: &str,
) -> Vec<ErrorRecord> {
    designs
        .iter()
        .map(|e| {
            let error = wce_squared(&e.points, &e.weights, kernel).max(0.0).sqrt();
            let floor = e
                .solver_config
                .map_or(DESIGN_ACCURACY_FLOOR, |c| c.target_wce);
            ErrorRecord {
                family: Family::Design,
                kernel: name.to_string(),
                t: Some(e.t),
                n: e.n(),
                error,
                trials: None,
                at_accuracy_floor: error <= floor,
            }
        })
        .collect()
}

/// n ↦ E wce² = (K(P,P) − r₀)/n for i.i.d. uniform points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedWce {
    pub numerator: f64,
}

impl ExpectedWce {
    pub fn squared(&self, n: usize) -> f64 {
        self.numerator / n as f64
    }
}

pub fn random_expected_wce(kernel: &ZonalKernelSpec) -> Result<ExpectedWce> {
    let diag = kernel.diagonal();
    let (d, k) = kernel.dims();
    let mut rng = stream(0x00D1_A600);
    for _ in 0..4 {
        let p = random_uniform_projector_from(&mut rng, d, k)?;
        if (kernel.eval(&p, &p) - diag).abs() > 1e-9 * diag.abs().max(1.0) {
            return Err(Error::NonConstantDiagonal);
        }
    }
    Ok(ExpectedWce {
        numerator: diag - kernel.mean(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomBaseline {
    pub n: usize,
    pub trials: usize,
    pub mean_wce_squared: f64,
    pub q10: f64,
    pub q90: f64,
    /// Per-trial wce² in trial order.
    pub samples: Vec<f64>,
}

impl RandomBaseline {
    pub fn records(&self, kernel: &str) -> Vec<ErrorRecord> {
        let rec = |family, error| ErrorRecord {
            family,
            kernel: kernel.to_string(),
            t: None,
            n: self.n,
            error,
            trials: Some(self.trials),
            at_accuracy_floor: false,
        };
        vec![
            rec(Family::RandomMean, self.mean_wce_squared.max(0.0).sqrt()),
            rec(Family::RandomQ10, self.q10),
            rec(Family::RandomQ90, self.q90),
        ]
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `trials` independent n-point uniform configurations with equal weights.
pub fn simulate_random_baseline(
    kernel: &ZonalKernelSpec,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<RandomBaseline> {
    if trials < 30 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "random baseline needs n >= 1 and trials >= 30, got n={n}, trials={trials}"
        )));
    }
    let (d, k) = kernel.dims();
    let weights = vec![1.0 / n as f64; n];
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<f64> {
            let mut rng = stream(derive_seed(seed, trial as u64));
            let pts = (0..n)
                .map(|_| random_uniform_projector_from(&mut rng, d, k))
                .collect::<Result<Vec<_>>>()?;
            Ok(wce_squared(&pts, &weights, kernel))
        })
        .collect::<Result<_>>()?;
    let mean: f64 = samples.iter().sum::<f64>() / trials as f64;
    let mut wce: Vec<f64> = samples.iter().map(|s| s.max(0.0).sqrt()).collect();
    wce.sort_by(f64::total_cmp);
    Ok(RandomBaseline {
        n,
        trials,
        mean_wce_squared: mean,
        q10: quantile(&wce, 0.1),
        q90: quantile(&wce, 0.9),
        samples,
    })
}

/// Least-squares slope of log(error) against log(n) over records with n in `n_range` and error > 1e-12.
pub fn slope_fit(records: &[ErrorRecord], n_range: (usize, usize)) -> Result<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.n >= n_range.0 && r.n <= n_range.1 && r.error > 1e-12)
        .map(|r| ((r.n as f64).ln(), r.error.ln()))
        .collect();
    fit_loglog(&pts)
}

/// Least-squares slope through (log x, log y) pairs.
pub fn fit_loglog(pts: &[(f64, f64)]) -> Result<f64> {
    if pts.len() < 3 {
        return Err(Error::TooFewPoints { found: pts.len() });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

pub fn write_records_csv<W: Write>(records: &[ErrorRecord], mut out: W) -> Result<()> {
    writeln!(out, "family,kernel,t,n,error,trials")?;
    for r in records {
        let t = r.t.map(|t| t.to_string()).unwrap_or_default();
        let trials = r.trials.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{:e},{}",
            r.family, r.kernel, t, r.n, r.error, trials
        )?;
    }
    Ok(())
}

/// Design curves for every kernel, plus random baselines at the design sizes when `random` is given.
pub fn integration_experiment(
    designs: &[DesignEnsemble],
    kernels: &[(String, ZonalKernelSpec)],
    random: Option<(usize, u64)>,
) -> Result<Vec<ErrorRecord>> {
    let mut out = Vec::new();
    for (name, kernel) in kernels {
        check_kernel_constant(kernel)?;
        out.extend(design_wce_curve(designs, kernel, name));
        if let Some((trials, seed)) = random {
            for e in designs {
                let base = simulate_random_baseline(
                    kernel,
                    e.n(),
                    trials,
                    derive_seed(seed, e.n() as u64),
                )?;
                out.extend(base.records(name));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::random_uniform_projector;

    fn k1() -> ZonalKernelSpec {
        ZonalKernelSpec::closed_form(ClosedFormKernel::K1, 4, 2).unwrap()
    }

    #[test]
    fn expected_wce_numerators() {
        let e1 = random_expected_wce(&k1()).unwrap();
        assert!((e1.numerator - 0.957_192_0).abs() < 1e-7);
        let k2 = ZonalKernelSpec::closed_form(ClosedFormKernel::K2, 4, 2).unwrap();
        assert!((random_expected_wce(&k2).unwrap().numerator - 0.611_059_2).abs() < 1e-7);
    }

    #[test]
    fn constants_agree_with_quadrature() {
        check_kernel_constant(&k1()).unwrap();
        let exact = g24_closed_form_constant(ClosedFormKernel::K1).unwrap();
        assert!((exact - 3.042_808_0).abs() < 1e-7);
    }

    #[test]
    fn pair_design_k1_error() {
        let p = random_uniform_projector(4, 2, 1).unwrap();
        let q = p.complement().unwrap();
        let e = DesignEnsemble::equal_weight(4, 2, 1, vec![p, q], 0).unwrap();
        let rec = design_wce_curve(&[e], &k1(), "K1");
        let ck1 = g24_closed_form_constant(ClosedFormKernel::K1).unwrap();
        let expected = -ck1 + 0.25 * (4.0 * 2.0 + 2.0 * 8f64.sqrt());
        assert!((rec[0].error - expected.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_point_trials_are_identical() {
        let b = simulate_random_baseline(&k1(), 1, 30, 5).unwrap();
        let first = b.samples[0];
        assert!(b.samples.iter().all(|s| (s - first).abs() < 1e-13));
        assert!((first - 0.957_192_0).abs() < 1e-6);
    }

    #[test]
    fn exact_power_law_slope() {
        let recs: Vec<_> = [10usize, 100, 1000, 5000]
            .iter()
            .map(|&n| ErrorRecord {
                family: Family::Design,
                kernel: "x".into(),
                t: None,
                n,
                error: (n as f64).powf(-0.875),
                trials: None,
                at_accuracy_floor: false,
            })
            .collect();
        assert!((slope_fit(&recs, (1, 10_000)).unwrap() + 0.875).abs() < 1e-12);
        assert!(matches!(
            slope_fit(&recs[..2], (1, 10_000)),
            Err(Error::TooFewPoints { found: 2 })
        ));
    }

    #[test]
    fn csv_layout() {
        let rec = ErrorRecord {
            family: Family::RandomQ10,
            kernel: "K2".into(),
            t: None,
            n: 10,
            error: 0.5,
            trials: Some(100),
            at_accuracy_floor: false,
        };
        let mut buf = Vec::new();
        write_records_csv(&[rec], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "family,kernel,t,n,error,trials\nrandom-q10,K2,,10,5e-1,100\n"
        );
    }
}
