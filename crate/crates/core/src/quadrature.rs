//! Gauss–Legendre panels, cumulative integration matrices and small
//! finite-difference/interpolation helpers on non-uniform grids.

use crate::linalg::{Mat2, C64};
use gauss_quad::legendre::GaussLegendre;
use std::ops::Add;

/// Values that can be integrated by the panel rules.
pub trait Integrand: Copy + Add<Output = Self> {
    fn zero() -> Self;
    fn scaled(self, k: f64) -> Self;
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn scaled(self, k: f64) -> Self {
        self * k
    }
}

impl Integrand for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn scaled(self, k: f64) -> Self {
        self * k
    }
}

impl Integrand for Mat2 {
    fn zero() -> Self {
        Mat2::zeros()
    }
    fn scaled(self, k: f64) -> Self {
        self.map(|z| z * k)
    }
}

/// A p-point Gauss–Legendre rule on the unit interval, together with the
/// spectral integration matrix `s[j][k] = ∫₀^{x_j} ℓ_k(x) dx` of its Lagrange
/// basis. With it the running integral of a tabulated function is available
/// at the quadrature nodes themselves, which is what iterated integrals need.
#[derive(Clone, Debug)]
pub struct PanelRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub cumulative: Vec<Vec<f64>>,
}

impl PanelRule {
    pub fn new(p: usize) -> Self {
        let (nodes, weights) = unit_gauss_legendre(p);
        let cumulative = nodes
            .iter()
            .map(|&xj| {
                (0..p)
                    .map(|k| {
                        nodes
                            .iter()
                            .zip(&weights)
                            .map(|(&xq, &wq)| wq * lagrange_basis(&nodes, k, xj * xq))
                            .sum::<f64>()
                            * xj
                    })
                    .collect()
            })
            .collect();
        Self {
            nodes,
            weights,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature nodes mapped into [a, b].
    pub fn points(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(move |&x| a + (b - a) * x)
    }

    pub fn integrate<T: Integrand>(&self, h: f64, values: &[T]) -> T {
        values
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&v, &w)| acc + v.scaled(w * h))
    }

    /// Running integral `start + ∫_a^{x_j} f` at each node, written to `out`;
    /// returns the value at the panel end.
    pub fn cumulate<T: Integrand>(&self, h: f64, start: T, values: &[T], out: &mut [T]) -> T {
        for (row, o) in self.cumulative.iter().zip(out.iter_mut()) {
            *o = row
                .iter()
                .zip(values)
                .fold(start, |acc, (&s, &v)| acc + v.scaled(s * h));
        }
        start + self.integrate(h, values)
    }
}

/// Gauss–Legendre nodes and weights on [0, 1], nodes ascending.
pub fn unit_gauss_legendre(p: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = GaussLegendre::new(p).expect("Gauss-Legendre rule needs at least two nodes");
    let mut pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn lagrange_basis(xs: &[f64], k: usize, x: f64) -> f64 {
    xs.iter()
        .enumerate()
        .filter(|&(m, _)| m != k)
        .map(|(_, &xm)| (x - xm) / (xs[k] - xm))
        .product()
}

/// Lagrange interpolation through `(xs, ys)` evaluated at `x`.
pub fn lagrange_eval<T: Integrand>(xs: &[f64], ys: &[T], x: f64) -> T {
    (0..xs.len()).fold(T::zero(), |acc, k| acc + ys[k].scaled(lagrange_basis(xs, k, x)))
}

/// Weights of the first-derivative stencil at `x0` over the nodes `xs`
/// (Fornberg's recursion, truncated to derivative order one).
pub fn derivative_weights(x0: f64, xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut d = vec![[0.0f64; 2]; n];
    d[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    d[i][k] = c1 * (k as f64 * d[i - 1][k - 1] - c5 * d[i - 1][k]) / c2;
                }
                d[i][0] = -c1 * c5 * d[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                d[j][k] = (c4 * d[j][k] - k as f64 * d[j][k - 1]) / c3;
            }
            d[j][0] = c4 * d[j][0] / c3;
        }
        c1 = c2;
    }
    d.iter().map(|w| w[1]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_integrates_polynomials_exactly() {
        let rule = PanelRule::new(8);
        let vals: Vec<f64> = rule.points(1.0, 3.0).map(|x| x.powi(15)).collect();
        let exact = (3f64.powi(16) - 1.0) / 16.0;
        assert!((rule.integrate(2.0, &vals) - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn cumulative_matrix_reproduces_antiderivative() {
        let rule = PanelRule::new(8);
        let (a, b) = (0.5, 0.75);
        let vals: Vec<f64> = rule.points(a, b).map(|x| x.cos()).collect();
        let mut out = vec![0.0; 8];
        let end = rule.cumulate(b - a, 0.0, &vals, &mut out);
        for (x, v) in rule.points(a, b).zip(&out) {
            assert!((v - (x.sin() - a.sin())).abs() < 1e-12, "{}", v - (x.sin() - a.sin()));
        }
        assert!((end - (b.sin() - a.sin())).abs() < 1e-14);
    }

    #[test]
    fn derivative_stencils() {
        let xs = [0.0, 0.1, 0.25, 0.3, 0.5];
        for &x0 in &[0.0, 0.25, 0.5] {
            let w = derivative_weights(x0, &xs);
            let d: f64 = w.iter().zip(&xs).map(|(w, x)| w * x.powi(4)).sum();
            assert!((d - 4.0 * x0.powi(3)).abs() < 1e-11);
        }
    }

    #[test]
    fn cubic_interpolation_exact_on_cubics() {
        let xs = [0.0, 0.3, 0.7, 1.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x * x * x - x + 1.0).collect();
        let v = lagrange_eval(&xs, &ys, 0.5);
        assert!((v - (0.25 - 0.5 + 1.0)).abs() < 1e-14);
    }
}
