//! Quadrature rules used by the model kernels.

use std::f64::consts::PI;

/// Half-extent of [`normal_rule`] in standard deviations.
const NORMAL_EXTENT: f64 = 8.0;

/// Offsets and weights for `E[f(X)]`, `X ~ N(0, σ²)`, as a composite
/// trapezoid over ±8σ with spacing at most `max_step`. Weights sum to one.
///
/// For integrands analytic in a strip the trapezoid sum converges
/// geometrically, so `max_step` only has to resolve the narrowest feature.
pub fn normal_rule(sigma: f64, max_step: f64) -> (Vec<f64>, Vec<f64>) {
    if sigma <= 0.0 {
        return (vec![0.0], vec![1.0]);
    }
    let step = max_step.min(0.5 * sigma);
    let half = (NORMAL_EXTENT * sigma / step).ceil() as usize;
    let h = NORMAL_EXTENT * sigma / half as f64;
    let nodes: Vec<f64> = (0..=2 * half).map(|j| (j as f64 - half as f64) * h).collect();
    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|u| (-0.5 * (u / sigma) * (u / sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    (nodes, weights)
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `∫_a^∞ f` by mapping `x = a + s·t/(1−t)` onto `t ∈ [0, 1)` and applying
/// two-panel Gauss–Legendre. Suited to integrands decaying like `x⁻²`.
pub fn semi_infinite<F: Fn(f64) -> f64>(f: F, a: f64, s: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let mut total = 0.0;
    for (lo, hi) in [(0.0, 0.5), (0.5, 1.0)] {
        let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (x, w) in nodes.iter().zip(weights) {
            let t = c + r * x;
            let one = 1.0 - t;
            total += w * r * f(a + s * t / one) * s / (one * one);
        }
    }
    total
}
