//! Symmetric quadrature on the reference triangle.

use crate::scalar::Real;

/// Quadrature rule on the reference triangle `{(0,0), (1,0), (0,1)}`.
///
/// Points are stored in barycentric coordinates; weights sum to the
/// reference area 1/2.
#[derive(Debug, Clone)]
pub struct TriangleRule<T> {
    pub points: Vec<[T; 3]>,
    pub weights: Vec<T>,
    pub degree: usize,
}

impl<T: Real> TriangleRule<T> {
    /// Seven point rule, exact for polynomials up to degree 5.
    pub fn degree5() -> Self {
        let s15 = 15f64.sqrt();
        let a1 = (6.0 - s15) / 21.0;
        let a2 = (6.0 + s15) / 21.0;
        let w0 = 9.0 / 80.0;
        let w1 = (155.0 - s15) / 2400.0;
        let w2 = (155.0 + s15) / 2400.0;
        let mut points = vec![[T::lit(1.0 / 3.0); 3]];
        let mut weights = vec![T::lit(w0)];
        for (a, w) in [(a1, w1), (a2, w2)] {
            let b = 1.0 - 2.0 * a;
            for p in [[b, a, a], [a, b, a], [a, a, b]] {
                points.push(p.map(T::lit));
                weights.push(T::lit(w));
            }
        }
        Self { points, weights, degree: 5 }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integral of `f` over the reference triangle, `f` taking `(x, y)`.
    pub fn integrate_reference(&self, f: impl Fn(T, T) -> T) -> T {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(l, &w)| w * f(l[1], l[2]))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn weights_positive_and_sum_to_area() {
        let q = TriangleRule::<f64>::degree5();
        assert_eq!(q.len(), 7);
        assert!(q.weights.iter().all(|&w| w > 0.0));
        let s: f64 = q.weights.iter().sum();
        assert!((s - 0.5).abs() < 1e-15);
        for p in &q.points {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_for_monomials_up_to_degree_five() {
        // int_T x^a y^b = a! b! / (a + b + 2)!
        let q = TriangleRule::<f64>::degree5();
        for a in 0..=5u32 {
            for b in 0..=(5 - a) {
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                let got = q.integrate_reference(|x, y| x.powi(a as i32) * y.powi(b as i32));
                assert!((got - exact).abs() < 1e-14 * exact.max(1e-3), "x^{a} y^{b}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn not_exact_at_degree_six() {
        let q = TriangleRule::<f64>::degree5();
        let exact = factorial(6) / factorial(8);
        let got = q.integrate_reference(|x, _| x.powi(6));
        assert!((got - exact).abs() > 1e-8);
    }

    #[test]
    fn single_precision_rule_sums_to_area() {
        let q = TriangleRule::<f32>::degree5();
        let s: f32 = q.weights.iter().sum();
        assert!((s - 0.5).abs() < 1e-6);
    }
}
