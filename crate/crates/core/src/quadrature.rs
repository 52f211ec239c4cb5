//! Quadrature rules: composite Simpson (with tensor products) and
//! Gauss-Legendre.

/// Composite Simpson weights for `nodes` equispaced points with spacing `h`.
/// `nodes` must be odd and at least 3.
pub fn simpson_weights(nodes: usize, h: f64) -> Vec<f64> {
    assert!(nodes >= 3 && nodes % 2 == 1, "Simpson needs an odd node count ≥ 3");
    (0..nodes)
        .map(|i| {
            let c = if i == 0 || i == nodes - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

/// Composite Simpson on `[a, b]` with `nodes` points.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, nodes: usize) -> f64 {
    let h = (b - a) / (nodes - 1) as f64;
    simpson_weights(nodes, h)
        .iter()
        .enumerate()
        .map(|(i, w)| w * f(a + i as f64 * h))
        .sum()
}

/// Tensor-product composite Simpson over `[-half_width, half_width]^d`.
pub fn simpson_cube(f: impl Fn(&[f64]) -> f64, dim: usize, half_width: f64, nodes: usize) -> f64 {
    let h = 2.0 * half_width / (nodes - 1) as f64;
    let w = simpson_weights(nodes, h);
    let axis: Vec<f64> = (0..nodes).map(|i| -half_width + i as f64 * h).collect();
    let mut idx = vec![0usize; dim];
    let mut z = vec![0.0; dim];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        for (k, &i) in idx.iter().enumerate() {
            z[k] = axis[i];
            weight *= w[i];
        }
        total += weight * f(&z);

        let mut k = 0;
        loop {
            if k == dim {
                return total;
            }
            idx[k] += 1;
            if idx[k] < nodes {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Cumulative integral of equispaced samples: entry `i` approximates
/// `∫_{x_0}^{x_i}`. Even nodes use Simpson panels; odd nodes add the
/// half-panel from the quadratic through the surrounding three samples.
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 3 && n % 2 == 1);
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    let mut i = 0;
    while i + 2 < n {
        let (f0, f1, f2) = (values[i], values[i + 1], values[i + 2]);
        out[i + 1] = acc + h * (5.0 * f0 + 8.0 * f1 - f2) / 12.0;
        acc += h * (f0 + 4.0 * f1 + f2) / 3.0;
        out[i + 2] = acc;
        i += 2;
    }
    out
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(order: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|v| v * half).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x * x + 1.0, 0.0, 2.0, 5);
        assert!((v - (4.0 - 16.0 / 3.0 + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn cube_gaussian_integral() {
        let v = simpson_cube(|z| (-0.5 * (z[0] * z[0] + z[1] * z[1])).exp(), 2, 9.0, 201);
        assert!((v - 2.0 * std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn cumulative_matches_total() {
        let h = 0.01;
        let vals: Vec<f64> = (0..101).map(|i| (i as f64 * h).cos()).collect();
        let cum = cumulative_simpson(&vals, h);
        assert!((cum[100] - 1.0_f64.sin()).abs() < 1e-10);
        assert!((cum[51] - 0.51_f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let (x, w) = gauss_legendre_on(1, 0.0, 2.0);
        assert_eq!((x[0], w[0]), (1.0, 2.0));
    }
}
