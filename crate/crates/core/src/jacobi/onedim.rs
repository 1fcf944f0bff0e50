//! One-variable Jacobi polynomials on [0,1] for the weight y^a (1−y)^b.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiWeight1d {
    pub a: f64,
    pub b: f64,
}

impl JacobiWeight1d {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > -1.0 && b > -1.0) {
            return Err(Error::InvalidParameter(format!(
                "Jacobi exponents must exceed -1, got a={a}, b={b}"
            )));
        }
        Ok(Self { a, b })
    }

    /// ∫₀¹ y^a (1−y)^b dy.
    pub fn mass(&self) -> f64 {
        (libm::lgamma(self.a + 1.0) + libm::lgamma(self.b + 1.0)
            - libm::lgamma(self.a + self.b + 2.0))
        .exp()
    }

    /// Monic recurrence p_{n+1} = (y − A_n) p_n − B_n p_{n−1}, returns (A_n, B_n); B_0 = 0.
    pub fn recurrence(&self, n: usize) -> (f64, f64) {
        // on [-1,1] the weight is (1-x)^al (1+x)^be with al = b, be = a
        let (al, be) = (self.b, self.a);
        let nf = n as f64;
        let s = 2.0 * nf + al + be;
        let alpha_x = if n == 0 {
            (be - al) / (al + be + 2.0)
        } else {
            (be * be - al * al) / (s * (s + 2.0))
        };
        let beta_x = match n {
            0 => 0.0,
            1 => 4.0 * (1.0 + al) * (1.0 + be) / ((2.0 + al + be).powi(2) * (3.0 + al + be)),
            _ => {
                4.0 * nf * (nf + al) * (nf + be) * (nf + al + be) / (s * s * (s + 1.0) * (s - 1.0))
            }
        };
        ((1.0 + alpha_x) / 2.0, beta_x / 4.0)
    }

    /// Orthonormal polynomials q_0..=q_n at y for the normalized weight (q_0 = 1).
    pub fn eval_orthonormal(&self, y: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        out[0] = 1.0;
        let mut prev = 0.0;
        let mut prev_sqrt_b = 0.0;
        for n in 0..out.len() - 1 {
            let (a_n, _) = self.recurrence(n);
            let (_, b_next) = self.recurrence(n + 1);
            let sb = b_next.sqrt();
            let next = ((y - a_n) * out[n] - prev_sqrt_b * prev) / sb;
            prev = out[n];
            prev_sqrt_b = sb;
            out[n + 1] = next;
        }
    }

    /// Power-basis coefficients of q_0..=q_n; row i holds q_i.
    pub fn orthonormal_power_coefficients(&self, n: usize) -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> = vec![vec![1.0]];
        for m in 0..n {
            let (a_m, b_m) = self.recurrence(m);
            let (_, b_next) = self.recurrence(m + 1);
            let sb_next = b_next.sqrt();
            let sb = b_m.sqrt();
            let mut next = vec![0.0; m + 2];
            for (j, c) in rows[m].iter().enumerate() {
                next[j + 1] += c;
                next[j] -= a_m * c;
            }
            if m > 0 {
                for (j, c) in rows[m - 1].iter().enumerate() {
                    next[j] -= sb * c;
                }
            }
            for c in next.iter_mut() {
                *c /= sb_next;
            }
            rows.push(next);
        }
        rows
    }

    /// Gauss–Jacobi rule with `n` nodes (Golub–Welsch), weights normalized to sum 1.
    pub fn gauss_rule(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        assert!(n > 0);
        let mut j = DMatrix::zeros(n, n);
        for i in 0..n {
            j[(i, i)] = self.recurrence(i).0;
            if i + 1 < n {
                let off = self.recurrence(i + 1).1.sqrt();
                j[(i, i + 1)] = off;
                j[(i + 1, i)] = off;
            }
        }
        let eig = SymmetricEigen::new(j);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        // polish nodes with Newton steps on q_n
        let mut q = vec![0.0; n + 1];
        for pair in pairs.iter_mut() {
            for _ in 0..3 {
                let (val, der) = self.value_and_derivative(pair.0, n);
                if der != 0.0 {
                    pair.0 -= val / der;
                }
            }
            // Christoffel weight 1 / Σ q_i(y)²
            self.eval_orthonormal(pair.0, &mut q[..n]);
            pair.1 = 1.0 / q[..n].iter().map(|v| v * v).sum::<f64>();
        }
        pairs.into_iter().unzip()
    }

    fn value_and_derivative(&self, y: f64, n: usize) -> (f64, f64) {
        // q_n and q_n' through the differentiated recurrence
        let mut p_prev = 0.0;
        let mut p = 1.0;
        let mut d_prev = 0.0;
        let mut d = 0.0;
        let mut prev_sb = 0.0;
        for m in 0..n {
            let (a_m, _) = self.recurrence(m);
            let sb = self.recurrence(m + 1).1.sqrt();
            let p_next = ((y - a_m) * p - prev_sb * p_prev) / sb;
            let d_next = (p + (y - a_m) * d - prev_sb * d_prev) / sb;
            p_prev = p;
            p = p_next;
            d_prev = d;
            d = d_next;
            prev_sb = sb;
        }
        (p, d)
    }
}
