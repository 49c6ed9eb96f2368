//! Gauss–Legendre rules on `[0, 1]` and collapsed (Duffy) Gauss rules on the
//! reference triangle `{s, t ≥ 0, s + t ≤ 1}`.

use std::f64::consts::PI;

/// Quadrature rule: nodes (1 or 2 coordinates each) with weights.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// `n`-point Gauss–Legendre rule on `[-1, 1]`, exact for degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            // p1 = P_n(z), p0 = P_{n-1}(z)
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss–Legendre rule on `[0, 1]` exact for polynomials of degree `degree`.
pub fn interval_rule(degree: usize) -> Rule {
    let n = (degree + 2) / 2;
    let (x, w) = gauss_legendre(n.max(1));
    Rule {
        nodes: x.iter().map(|&xi| [0.5 * (xi + 1.0), 0.0]).collect(),
        weights: w.iter().map(|&wi| 0.5 * wi).collect(),
    }
}

/// Collapsed Gauss rule on the reference triangle exact for degree `degree`.
/// Weights sum to the reference area 1/2.
pub fn triangle_rule(degree: usize) -> Rule {
    // In collapsed coordinates the integrand gains one degree in the first direction.
    let line = interval_rule(degree + 1);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (a, wa) in line.nodes.iter().zip(&line.weights) {
        for (b, wb) in line.nodes.iter().zip(&line.weights) {
            let s = a[0];
            let t = b[0] * (1.0 - s);
            nodes.push([s, t]);
            weights.push(wa * wb * (1.0 - s));
        }
    }
    Rule { nodes, weights }
}
