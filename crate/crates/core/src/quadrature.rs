//! Gaussian quadrature rules.

use std::f64::consts::PI;

/// Nodes and weights of an interpolatory quadrature rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Integrate `f` over `[a, b]` with a composite Gauss–Legendre rule of
/// `panels` equal panels.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rule: &Rule, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let lo = a + k as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        let s: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum();
        total += s * half;
    }
    total
}

/// Gauss–Hermite rule for the weight `exp(-x^2)` on the real line.
///
/// Positive roots of the orthonormal Hermite polynomial are bracketed by a
/// sign scan and polished with safeguarded Newton steps; the rule is
/// symmetric, so the negative half is mirrored.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1, "quadrature needs at least one node");
    let upper = (2.0 * n as f64 + 1.0).sqrt() + 1.0;
    let step = 0.25 / (2.0 * n as f64).sqrt();
    let mut positive = Vec::with_capacity(n / 2 + 1);
    let mut a = if n % 2 == 1 { step * 0.5 } else { 0.0 };
    let mut fa = hermite_with_derivative(n, a).0;
    while a < upper {
        let b = a + step;
        let fb = hermite_with_derivative(n, b).0;
        if fa == 0.0 || fa.signum() != fb.signum() {
            positive.push(polish_root(n, a, b));
        }
        a = b;
        fa = fb;
    }
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let weight = |z: f64| {
        let (_, d) = hermite_with_derivative(n, z);
        2.0 / (d * d)
    };
    for &z in positive.iter().rev() {
        nodes.push(-z);
        weights.push(weight(z));
    }
    if n % 2 == 1 {
        nodes.push(0.0);
        weights.push(weight(0.0));
    }
    for &z in &positive {
        nodes.push(z);
        weights.push(weight(z));
    }
    assert_eq!(nodes.len(), n, "root scan missed Hermite roots");
    Rule { nodes, weights }
}

// Orthonormal Hermite polynomial of degree n and its derivative.
fn hermite_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

fn polish_root(n: usize, mut lo: f64, mut hi: f64) -> f64 {
    let flo = hermite_with_derivative(n, lo).0;
    let mut z = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, d) = hermite_with_derivative(n, z);
        if f == 0.0 {
            return z;
        }
        if f.signum() == flo.signum() {
            lo = z;
        } else {
            hi = z;
        }
        let mut next = z - f / d;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() <= 4.0 * f64::EPSILON * z.abs().max(1.0) {
            return next;
        }
        z = next;
    }
    z
}

/// `E[f(Z)]` for `Z ~ N(0, 1)` using a Gauss–Hermite rule.
pub fn gaussian_expectation(f: impl Fn(f64) -> f64, rule: &Rule) -> f64 {
    let scale = std::f64::consts::SQRT_2;
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(x, w)| w * f(scale * x))
        .sum::<f64>()
        / PI.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(10);
        let got = integrate(|x| x.powi(18) + 3.0 * x.powi(5), -1.0, 1.0, &rule, 1);
        assert!((got - 2.0 / 19.0).abs() < 1e-14);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn composite_legendre_handles_smooth_integrands() {
        let rule = gauss_legendre(20);
        let got = integrate(f64::exp, 0.0, 3.0, &rule, 4);
        assert!((got - (3.0_f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn hermite_reproduces_gaussian_moments() {
        for &n in &[5, 40, 200, 256] {
            let rule = gauss_hermite(n);
            let mass: f64 = rule.weights.iter().sum();
            assert!((mass - PI.sqrt()).abs() < 1e-12, "n={n} mass={mass}");
            let m2 = gaussian_expectation(|z| z * z, &rule);
            let m4 = gaussian_expectation(|z| z.powi(4), &rule);
            assert!((m2 - 1.0).abs() < 1e-12, "n={n}");
            assert!((m4 - 3.0).abs() < 1e-11, "n={n}");
            assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
