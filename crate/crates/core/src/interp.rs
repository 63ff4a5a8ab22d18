//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson slopes).

use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic<T> {
    x: Vec<T>,
    y: Vec<T>,
    slopes: Vec<T>,
}

impl<T: Real> MonotoneCubic<T> {
    /// `x` must be strictly increasing with at least two points.
    pub fn new(x: Vec<T>, y: Vec<T>) -> Self {
        assert_eq!(x.len(), y.len(), "abscissa and ordinate lengths differ");
        assert!(x.len() >= 2, "need at least two points");
        let n = x.len();
        let secants: Vec<T> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut slopes = vec![T::zero(); n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            let (a, b) = (secants[i - 1], secants[i]);
            if a * b <= T::zero() {
                slopes[i] = T::zero();
            } else {
                // weighted harmonic mean (Fritsch–Butland), keeps the interpolant monotone
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let w1 = lit::<T>(2.0) * h1 + h0;
                let w2 = h1 + lit::<T>(2.0) * h0;
                slopes[i] = (w1 + w2) / (w1 / a + w2 / b);
            }
        }
        Self { x, y, slopes }
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn first(&self) -> (T, T) {
        (self.x[0], self.y[0])
    }

    pub fn last(&self) -> (T, T) {
        let n = self.x.len() - 1;
        (self.x[n], self.y[n])
    }

    /// Evaluates inside the tabulated range; outside it the end value is held.
    pub fn eval(&self, t: T) -> T {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.x.partition_point(|&xi| xi <= t) - 1;
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let two: T = lit(2.0);
        let three: T = lit(3.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = three * s2 - two * s3;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.slopes[i] + h01 * self.y[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_nodes_and_lines() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let m = MonotoneCubic::new(x.clone(), y.clone());
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(m.eval(*xi), *yi);
        }
        assert!((m.eval(1.0) - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn preserves_monotonicity(increments in proptest::collection::vec(0.0f64..3.0, 3..20), probe in 0.0f64..1.0) {
            let x: Vec<f64> = (0..increments.len()).map(|i| i as f64).collect();
            let mut y = Vec::with_capacity(increments.len());
            let mut acc = 0.0;
            for d in &increments {
                acc += d;
                y.push(acc);
            }
            let m = MonotoneCubic::new(x.clone(), y);
            let span = x[x.len() - 1];
            let a = probe * span;
            let b = (a + 0.01).min(span);
            prop_assert!(m.eval(b) >= m.eval(a) - 1e-12);
        }
    }
}
