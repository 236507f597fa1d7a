//! Quadrature and interpolation grids on [0,1].

/// Gauss–Legendre nodes and weights on [0,1].
///
/// Nodes are found by Newton iteration on the Legendre polynomial with the
/// usual Chebyshev initial guess; exact for polynomials of degree 2n-1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // root of P_n on [-1,1]
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(n, t);
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        // map to [0,1]
        nodes[n - 1 - i] = 0.5 * (t + 1.0);
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_and_deriv(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let p2 = ((2 * k + 1) as f64 * t * p1 - k as f64 * p0) / (k as f64 + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, dp)
}

/// Chebyshev points of the second kind mapped to [0,1], ascending.
pub fn chebyshev_nodes(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|j| 0.5 * (1.0 - (std::f64::consts::PI * j as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// Barycentric weights for Chebyshev points of the second kind.
pub fn chebyshev_bary_weights(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n - 1 {
                w *= 0.5;
            }
            w
        })
        .collect()
}

/// Barycentric interpolation of samples at `nodes` (with weights `w`) to `t`.
pub fn bary_interp(nodes: &[f64], w: &[f64], samples: &[f64], t: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..nodes.len() {
        let d = t - nodes[i];
        if d.abs() < 1e-14 {
            return samples[i];
        }
        let c = w[i] / d;
        num += c * samples[i];
        den += c;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        // int_0^1 t^k dt = 1/(k+1) for k <= 15
        for k in 0..=15usize {
            let got: f64 = x.iter().zip(&w).map(|(t, wi)| wi * t.powi(k as i32)).sum();
            assert!((got - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn gl_weights_sum_to_one() {
        for n in [1, 2, 5, 16, 32] {
            let (_, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn chebyshev_barycentric_reproduces_smooth_function() {
        let n = 24;
        let nodes = chebyshev_nodes(n);
        let w = chebyshev_bary_weights(n);
        let f = |t: f64| (3.0 * t).sin() / (1.0 + t);
        let samples: Vec<f64> = nodes.iter().map(|&t| f(t)).collect();
        for k in 0..50 {
            let t = k as f64 / 49.0;
            let got = bary_interp(&nodes, &w, &samples, t);
            assert!((got - f(t)).abs() < 1e-10);
        }
    }
}
