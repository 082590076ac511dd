//! Scalar special functions and quadrature rules shared across the crate.

use statrs::function::gamma as sf;

pub fn ln_gamma(x: f64) -> f64 {
    sf::ln_gamma(x)
}

pub fn gamma(x: f64) -> f64 {
    sf::gamma(x)
}

/// Euler beta function B(a, b) for positive arguments.
pub fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// Riemann zeta function for real `x > 0`, `x != 1`.
///
/// Uses Borwein's Chebyshev-accelerated alternating series for the Dirichlet
/// eta function; the error decays like (3 + sqrt(8))^-n, so n = 40 terms give
/// full double precision on the whole range used here.
pub fn zeta(x: f64) -> f64 {
    assert!(x > 0.0 && x != 1.0, "zeta: argument {x} out of range");
    let n = 40usize;
    // d_k = n * sum_{i<=k} (n+i-1)! 4^i / ((n-i)! (2i)!)
    let mut d = vec![0.0f64; n + 1];
    let mut term = 1.0f64; // i = 0 term: (n-1)!/(n)!*n = 1 after the leading n
    let mut acc = term;
    d[0] = acc;
    for i in 1..=n {
        // ratio of consecutive summands
        term *= 4.0 * ((n + i - 1) as f64) * ((n - i + 1) as f64)
            / (((2 * i) as f64) * ((2 * i - 1) as f64));
        acc += term;
        d[i] = acc;
    }
    let dn = d[n];
    let mut eta = 0.0;
    let mut sign = 1.0;
    for k in 0..n {
        eta += sign * (d[k] - dn) / ((k + 1) as f64).powf(x);
        sign = -sign;
    }
    eta = -eta / dn;
    eta / (1.0 - 2f64.powf(1.0 - x))
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            pp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / pp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        xs[i] = -x;
        xs[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * pp * pp);
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        xs[n / 2] = 0.0;
    }
    (xs, ws)
}

/// Tanh-sinh (double exponential) nodes and weights on (-1, 1).
///
/// Handles integrable endpoint singularities; `level` 10 gives 2^11 + 1
/// points and full double precision for the kernels used here.
pub fn tanh_sinh(level: u32) -> Vec<(f64, f64)> {
    let half = std::f64::consts::FRAC_PI_2;
    let tmax = 4.0;
    let steps = 1i64 << level;
    let dt = tmax / steps as f64;
    let mut out = Vec::with_capacity((2 * steps + 1) as usize);
    for k in -steps..=steps {
        let t = k as f64 * dt;
        let sh = half * t.sinh();
        let x = sh.tanh();
        let w = half * t.cosh() / sh.cosh().powi(2) * dt;
        if w > 1e-300 && x.abs() < 1.0 {
            out.push((x, w));
        }
    }
    out
}

/// Least-squares slope of y against x with its standard error.
pub fn ls_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let stderr = if x.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, stderr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zeta_known_values() {
        assert_relative_eq!(zeta(2.0), std::f64::consts::PI.powi(2) / 6.0, max_relative = 1e-14);
        assert_relative_eq!(zeta(4.0), std::f64::consts::PI.powi(4) / 90.0, max_relative = 1e-14);
        // mpmath, 30 digits
        assert_relative_eq!(zeta(0.5), -1.46035450880958681289, max_relative = 1e-13);
        assert_relative_eq!(zeta(1.5), 2.61237534868548834335, max_relative = 1e-13);
        assert_relative_eq!(zeta(0.75), -3.44128538694522289440, max_relative = 1e-13);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (xs, ws) = gauss_legendre(16);
        let s: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(20)).sum();
        assert_relative_eq!(s, 2.0 / 21.0, max_relative = 1e-12);
        let total: f64 = ws.iter().sum();
        assert_relative_eq!(total, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn tanh_sinh_endpoint_singularity() {
        // int_-1^1 (1-x)^{-1/2} dx = 2 sqrt 2; endpoint resolution of 1-x in
        // doubles caps the accuracy around 1e-9
        let s: f64 = tanh_sinh(10)
            .iter()
            .map(|&(x, w)| w / (1.0 - x).sqrt())
            .sum();
        assert_relative_eq!(s, 2.0 * 2f64.sqrt(), max_relative = 1e-8);
    }
}
