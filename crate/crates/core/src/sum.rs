//! Compensated accumulation.
//!
//! Worst-case errors near 1e-7 are the square root of an energy gap near
//! 1e-14 that is computed as the difference of two O(1) numbers, so every
//! energy-like sum in the crate goes through [`DdSum`].

/// Running sum kept as an unevaluated pair `hi + lo` (double-double style).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DdSum {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bp = s - a;
    let err = (a - (s - bp)) + (b - bp);
    (s, err)
}

impl DdSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        self.hi = s;
        self.lo += e;
    }

    /// Adds the exact product a·b.
    #[inline]
    pub fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let e = a.mul_add(b, -p);
        self.add(p);
        self.lo += e;
    }

    /// Adds another pair without losing its low part.
    pub fn merge(&mut self, other: &DdSum) {
        self.add(other.hi);
        self.lo += other.lo;
    }

    pub fn scale(&self, factor: f64) -> DdSum {
        let mut out = DdSum::new();
        // exact product of hi via fma
        let p = self.hi * factor;
        let e = self.hi.mul_add(factor, -p);
        out.add(p);
        out.lo += e + self.lo * factor;
        out
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }

    pub fn parts(&self) -> (f64, f64) {
        (self.hi, self.lo)
    }

    /// `self - other`, evaluated without rounding the two sums first.
    pub fn minus(&self, other: &DdSum) -> f64 {
        (self.hi - other.hi) + (self.lo - other.lo)
    }

    /// `self - x` for a plain double.
    pub fn minus_f64(&self, x: f64) -> f64 {
        let (s, e) = two_sum(self.hi, -x);
        s + (e + self.lo)
    }
}

impl std::iter::FromIterator<f64> for DdSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = DdSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of a slice.
pub fn accurate_sum(values: &[f64]) -> f64 {
    values.iter().copied().collect::<DdSum>().value()
}
