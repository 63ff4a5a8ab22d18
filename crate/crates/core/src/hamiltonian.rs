//! Polynomial potentials, the Hamiltonian `H(q, p) = p²/2 + V(q)` and the
//! critical points of `V`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, tol, Real};

/// Polynomial potential `V(q) = Σ cᵢ qⁱ`, coefficients stored low-to-high degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential<T> {
    coefficients: Vec<T>,
}

impl<T: Real> Potential<T> {
    /// Validated constructor: the degree must be even and at least two, with a
    /// positive leading coefficient, so that `V` grows at least quadratically.
    pub fn new(coefficients: Vec<T>) -> Result<Self> {
        let trimmed = trim(coefficients);
        let degree = trimmed.len().saturating_sub(1);
        if trimmed.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("potential coefficients must be finite".into()));
        }
        if degree < 2 || degree % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "potential degree must be even and >= 2, got {degree}"
            )));
        }
        if trimmed[degree] <= T::zero() {
            return Err(Error::InvalidConfig("leading potential coefficient must be positive".into()));
        }
        Ok(Self { coefficients: trimmed })
    }

    /// Skips the growth checks. Only meant for exercising root finding on
    /// arbitrary polynomials.
    pub fn unchecked(coefficients: Vec<T>) -> Self {
        Self { coefficients: trim(coefficients) }
    }

    /// `(q² − 1)² / 4`.
    pub fn double_well() -> Self {
        Self::new(vec![lit(0.25), T::zero(), lit(-0.5), T::zero(), lit(0.25)]).unwrap()
    }

    /// `q² / 2`.
    pub fn harmonic() -> Self {
        Self::new(vec![T::zero(), T::zero(), lit(0.5)]).unwrap()
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    /// Adds a constant to every coefficient-0 term, i.e. shifts all energies.
    pub fn shifted(&self, offset: T) -> Self {
        let mut c = self.coefficients.clone();
        c[0] = c[0] + offset;
        Self { coefficients: c }
    }

    pub fn eval(&self, q: T) -> T {
        horner(&self.coefficients, q)
    }

    pub fn grad(&self, q: T) -> T {
        let mut acc = T::zero();
        for (i, &c) in self.coefficients.iter().enumerate().skip(1).rev() {
            acc = acc * q + c * lit(i as f64);
        }
        acc
    }

    pub fn curvature(&self, q: T) -> T {
        let mut acc = T::zero();
        for (i, &c) in self.coefficients.iter().enumerate().skip(2).rev() {
            acc = acc * q + c * lit((i * (i - 1)) as f64);
        }
        acc
    }

    /// Coefficients of `V(q) − h` divided by `(q − a)(q − b)`, where `a` and `b`
    /// are roots of `V − h`. The remainder is discarded; it is at the level of
    /// the root error.
    pub fn level_quotient(&self, h: T, a: T, b: T) -> Vec<T> {
        let mut c = self.coefficients.clone();
        c[0] = c[0] - h;
        let c = synthetic_division(&c, a);
        synthetic_division(&c, b)
    }
}

fn trim<T: Real>(mut c: Vec<T>) -> Vec<T> {
    while c.len() > 1 && c.last().is_some_and(|x| x.is_zero()) {
        c.pop();
    }
    if c.is_empty() {
        c.push(T::zero());
    }
    c
}

pub(crate) fn horner<T: Real>(coefficients: &[T], x: T) -> T {
    coefficients.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
}

/// Divides by `(x − root)`, returning the quotient (low-to-high degree).
fn synthetic_division<T: Real>(coefficients: &[T], root: T) -> Vec<T> {
    let n = coefficients.len();
    if n <= 1 {
        return vec![T::zero()];
    }
    let mut quotient = vec![T::zero(); n - 1];
    let mut carry = T::zero();
    for i in (1..n).rev() {
        carry = carry * root + coefficients[i];
        quotient[i - 1] = carry;
    }
    quotient
}

/// A point `(q, p)` of phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasePoint<T> {
    pub q: T,
    pub p: T,
}

impl<T: Real> PhasePoint<T> {
    pub fn new(q: T, p: T) -> Self {
        Self { q, p }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.p.is_finite()
    }
}

/// `H(q, p) = p²/2 + V(q)`.
#[inline]
pub fn hamiltonian<T: Real>(v: &Potential<T>, x: PhasePoint<T>) -> T {
    x.p * x.p * lit(0.5) + v.eval(x.q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Minimum,
    Maximum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPoint<T> {
    pub q: T,
    pub value: T,
    pub kind: CriticalKind,
}

/// Scan window for bracketing the roots of `V'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootScan {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
    pub tolerance: f64,
    pub degenerate_curvature: f64,
}

impl Default for RootScan {
    fn default() -> Self {
        Self { lo: -10.0, hi: 10.0, cells: 10_000, tolerance: 1e-12, degenerate_curvature: 1e-8 }
    }
}

pub fn critical_points<T: Real>(v: &Potential<T>) -> Result<Vec<CriticalPoint<T>>> {
    critical_points_with(v, &RootScan::default())
}

/// All real roots of `V'` inside the scan window, sorted ascending and
/// classified by the sign of `V''`.
pub fn critical_points_with<T: Real>(v: &Potential<T>, scan: &RootScan) -> Result<Vec<CriticalPoint<T>>> {
    let lo: T = lit(scan.lo);
    let width: T = lit(scan.hi - scan.lo);
    let cells = scan.cells.max(1);
    let node = |i: usize| lo + width * lit(i as f64 / cells as f64);

    let mut roots: Vec<T> = Vec::new();
    let mut prev_q = node(0);
    let mut prev_g = v.grad(prev_q);
    if prev_g.is_zero() {
        roots.push(prev_q);
    }
    for i in 1..=cells {
        let q = node(i);
        let g = v.grad(q);
        if g.is_zero() {
            roots.push(q);
        } else if !prev_g.is_zero() && (g > T::zero()) != (prev_g > T::zero()) {
            roots.push(bisect(|x| v.grad(x), prev_q, q, tol(scan.tolerance)));
        }
        prev_q = q;
        prev_g = g;
    }
    if roots.is_empty() {
        return Err(Error::NoRoots);
    }

    roots
        .into_iter()
        .map(|q| {
            let curvature = v.curvature(q);
            if curvature.abs() < lit(scan.degenerate_curvature) {
                return Err(Error::DegenerateCritical { q: to_f64(q), curvature: to_f64(curvature) });
            }
            let kind = if curvature > T::zero() { CriticalKind::Minimum } else { CriticalKind::Maximum };
            Ok(CriticalPoint { q, value: v.eval(q), kind })
        })
        .collect()
}

/// Bisection on a sign change of `f` over `[a, b]`, to absolute width `eps`
/// or until the interval stops shrinking.
pub(crate) fn bisect<T: Real>(f: impl Fn(T) -> T, mut a: T, mut b: T, eps: T) -> T {
    let mut fa = f(a);
    if fa.is_zero() {
        return a;
    }
    if f(b).is_zero() {
        return b;
    }
    for _ in 0..400 {
        let m = (a + b) * lit(0.5);
        if (b - a).abs() <= eps || m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm.is_zero() {
            return m;
        }
        if (fm > T::zero()) == (fa > T::zero()) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    (a + b) * lit(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn double_well_values() {
        let v = Potential::<f64>::double_well();
        assert_eq!(v.eval(0.0), 0.25);
        assert_eq!(v.eval(1.0), 0.0);
        assert_eq!(v.eval(2.0), 2.25);
        assert_eq!(v.grad(1.0), 0.0);
        assert_eq!(v.grad(2.0), 6.0);
    }

    #[test]
    fn hamiltonian_values() {
        let v = Potential::<f64>::double_well();
        assert_eq!(hamiltonian(&v, PhasePoint::new(0.0, 1.0)), 0.75);
        assert_eq!(hamiltonian(&v, PhasePoint::new(1.0, 0.0)), 0.0);
        assert_eq!(hamiltonian(&v, PhasePoint::new(-0.5, 0.0)), 0.140625);
    }

    #[test]
    fn works_in_single_precision() {
        let v = Potential::<f32>::double_well();
        assert_eq!(v.eval(2.0), 2.25);
        let cps = critical_points(&v).unwrap();
        assert_eq!(cps.len(), 3);
        assert!(cps[1].q.abs() < 1e-5);
    }

    #[test]
    fn double_well_critical_points() {
        let cps = critical_points(&Potential::<f64>::double_well()).unwrap();
        let expected = [(-1.0, 0.0, CriticalKind::Minimum), (0.0, 0.25, CriticalKind::Maximum), (1.0, 0.0, CriticalKind::Minimum)];
        assert_eq!(cps.len(), 3);
        for (cp, (q, value, kind)) in cps.iter().zip(expected) {
            assert!((cp.q - q).abs() < 1e-11, "{cp:?}");
            assert!((cp.value - value).abs() < 1e-12);
            assert_eq!(cp.kind, kind);
        }
    }

    #[test]
    fn harmonic_critical_points() {
        let cps = critical_points(&Potential::<f64>::harmonic()).unwrap();
        assert_eq!(cps.len(), 1);
        assert!(cps[0].q.abs() < 1e-12);
        assert_eq!(cps[0].kind, CriticalKind::Minimum);
    }

    #[test]
    fn no_real_roots() {
        // V' = q² + 1
        let v = Potential::<f64>::unchecked(vec![0.0, 1.0, 0.0, 1.0 / 3.0]);
        assert_eq!(critical_points(&v), Err(Error::NoRoots));
    }

    #[test]
    fn degenerate_critical_point_rejected() {
        // V = q⁴: V'' vanishes at the minimum
        let v = Potential::<f64>::new(vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(critical_points(&v), Err(Error::DegenerateCritical { .. })));
    }

    #[test]
    fn invalid_potentials_rejected() {
        assert!(Potential::<f64>::new(vec![0.0, 1.0, 0.0, 1.0]).is_err());
        assert!(Potential::<f64>::new(vec![0.0, 0.0, -1.0]).is_err());
        assert!(Potential::<f64>::new(vec![1.0]).is_err());
        // trailing zeros are trimmed before the degree check
        assert!(Potential::<f64>::new(vec![0.0, 0.0, 0.5, 0.0]).is_ok());
    }

    #[test]
    fn level_quotient_factorizes() {
        let v = Potential::<f64>::double_well();
        let h = 1.0;
        let r = 3f64.sqrt();
        let quotient = v.level_quotient(h, -r, r);
        for &q in &[-1.5, -0.3, 0.0, 0.7, 1.6] {
            let lhs = v.eval(q) - h;
            let rhs = (q - r) * (q + r) * horner(&quotient, q);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn grad_exact_on_a_million_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let coefficients = [0.3, -1.1, 0.7, 0.2, -0.4, 0.05, 0.6];
        let v = Potential::new(coefficients.to_vec()).unwrap();
        for _ in 0..1_000_000 {
            let q: f64 = rng.random_range(-4.0..4.0);
            let exact = analytic_derivative(&coefficients, q);
            let scale: f64 = coefficients.iter().enumerate().skip(1)
                .map(|(i, ci)| (ci * i as f64 * q.powi(i as i32 - 1)).abs()).sum();
            assert!((v.grad(q) - exact).abs() <= 1e-12 * scale, "q = {q}");
        }
    }

    fn central_difference(v: &Potential<f64>, q: f64) -> f64 {
        // fourth-order central stencil
        let step = 1e-3 * q.abs().max(1.0);
        (8.0 * (v.eval(q + step) - v.eval(q - step)) - (v.eval(q + 2.0 * step) - v.eval(q - 2.0 * step))) / (12.0 * step)
    }

    fn analytic_derivative(c: &[f64], q: f64) -> f64 {
        c.iter().enumerate().skip(1).map(|(i, &ci)| ci * i as f64 * q.powi(i as i32 - 1)).sum()
    }

    proptest! {
        #[test]
        fn grad_matches_finite_difference(
            c in proptest::collection::vec(-2.0f64..2.0, 6),
            lead in 0.1f64..2.0,
            q in -3.0f64..3.0,
        ) {
            let mut coefficients = c;
            coefficients.push(lead);
            let v = Potential::new(coefficients).unwrap();
            let fd = central_difference(&v, q);
            let g = v.grad(q);
            prop_assert!((fd - g).abs() <= 1e-8 * g.abs().max(1.0), "fd {fd} vs {g}");
        }

        #[test]
        fn grad_is_exact_derivative(
            c in proptest::collection::vec(-2.0f64..2.0, 4),
            lead in 0.1f64..2.0,
            q in -3.0f64..3.0,
        ) {
            let mut coefficients = c;
            coefficients.push(lead);
            let v = Potential::new(coefficients.clone()).unwrap();
            let exact = analytic_derivative(&coefficients, q);
            let scale: f64 = coefficients.iter().enumerate().skip(1)
                .map(|(i, ci)| (ci * i as f64 * q.powi(i as i32 - 1)).abs()).sum::<f64>().max(1e-300);
            prop_assert!((v.grad(q) - exact).abs() <= 1e-12 * scale);
        }

        #[test]
        fn momentum_reflection(q in -5.0f64..5.0, p in -5.0f64..5.0) {
            let v = Potential::<f64>::double_well();
            prop_assert_eq!(hamiltonian(&v, PhasePoint::new(q, p)), hamiltonian(&v, PhasePoint::new(q, -p)));
            prop_assert_eq!(hamiltonian(&v, PhasePoint::new(q, p)), hamiltonian(&v, PhasePoint::new(-q, p)));
        }
    }
}
