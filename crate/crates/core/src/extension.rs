//! The s-harmonic extension to the upper half-plane via the Poisson kernel,
//! the weighted Dirichlet-to-Neumann limit, and the far-field envelope of the
//! extended bubble.
//!
//! All quadrature goes through the substitution y = x + t·tanφ, which turns
//! the kernel into p_{N,s} cos^{2s−1}φ dφ on (−π/2, π/2) — independent of t,
//! with an integrable endpoint singularity that tanh-sinh nodes absorb.

use crate::error::{Error, Result};
use crate::math;
use crate::params::{PhysicalParams, SharpConstants};
use std::sync::OnceLock;

fn ts_nodes() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| math::tanh_sinh(9))
}

/// U(x,t) = p_{N,s} ∫ t^{2s} (|x−y|² + t²)^{−(N+2s)/2} u(y) dy, for N = 1.
pub fn poisson_extend(
    u: &dyn Fn(f64) -> f64,
    x: f64,
    t: f64,
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let s = params.s;
    let mut acc = 0.0;
    for &(z, w) in ts_nodes() {
        let phi = half_pi * z;
        acc += w * phi.cos().powf(2.0 * s - 1.0) * u(x + t * phi.tan());
    }
    consts.p_ns * half_pi * acc
}

/// Mass of the Poisson kernel at height t, computed in the y variable with
/// the kernel evaluated explicitly (the exact value is 1 for every t).
pub fn kernel_mass(t: f64, params: &PhysicalParams, consts: &SharpConstants) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let s = params.s;
    let mut acc = 0.0;
    for &(z, w) in ts_nodes() {
        let phi = half_pi * z;
        let y = t * phi.tan();
        let kernel = consts.p_ns * t.powf(2.0 * s) / (y * y + t * t).powf((1.0 + 2.0 * s) / 2.0);
        acc += w * kernel * t / phi.cos().powi(2);
    }
    half_pi * acc
}

/// A trace together with its spatial derivative, both as evaluators.
pub struct Trace<'a> {
    pub value: &'a dyn Fn(f64) -> f64,
    pub deriv: &'a dyn Fn(f64) -> f64,
}

/// −κ_s t^{1−2s} ∂_t U(x,t): differentiation under the integral turns
/// ∂_t into tanφ·u′(x + t·tanφ).
fn weighted_normal_derivative(
    tr: &Trace,
    x: f64,
    t: f64,
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let s = params.s;
    let mut acc = 0.0;
    for &(z, w) in ts_nodes() {
        let phi = half_pi * z;
        acc += w * phi.cos().powf(2.0 * s - 1.0) * phi.tan() * (tr.deriv)(x + t * phi.tan());
    }
    -consts.kappa_s * t.powf(1.0 - 2.0 * s) * consts.p_ns * half_pi * acc
}

fn dtn_attempt(
    tr: &Trace,
    x: f64,
    t0: f64,
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> Result<f64> {
    let f: Vec<f64> = [t0, t0 / 2.0, t0 / 4.0]
        .iter()
        .map(|&t| weighted_normal_derivative(tr, x, t, params, consts))
        .collect();
    let d1 = f[1] - f[0];
    let d2 = f[2] - f[1];
    if d1 * d2 <= 0.0 || d2.abs() >= d1.abs() {
        return Err(Error::Quadrature("dtn_check: non-monotone t-sequence".into()));
    }
    // error expansion carries t^{2−2s} then t²; two Richardson steps at those
    // fixed orders (fixed weights keep the map linear in u)
    let m = 2.0 - 2.0 * params.s;
    let g1 = f[1] + d1 / (2f64.powf(m) - 1.0);
    let g2 = f[2] + d2 / (2f64.powf(m) - 1.0);
    Ok(g2 + (g2 - g1) / (2f64.powi(2) - 1.0))
}

/// Richardson-extrapolated ∂_ν^s u(x) = −κ_s lim_{t→0} t^{1−2s}∂_t U(x,t),
/// with t₀ = 1e−2 · `scale`. On a non-monotone sequence the step is refined
/// once before failing.
pub fn dtn_check(
    tr: &Trace,
    x: f64,
    scale: f64,
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> Result<f64> {
    let t0 = 1e-2 * scale;
    match dtn_attempt(tr, x, t0, params, consts) {
        Ok(v) => Ok(v),
        Err(_) => dtn_attempt(tr, x, t0 / 4.0, params, consts),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnvelopeReport {
    pub lambda: f64,
    pub r: f64,
    pub eta: f64,
    /// min / max over the half-sphere of W(z) / (α λ^{(N−2s)/2} |z|^{−(N−2s)})
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

impl EnvelopeReport {
    pub fn holds(&self) -> bool {
        self.lower_ok && self.upper_ok
    }
}

/// Sample W_{λ,0} on the half-circle |z| = R and compare against the
/// far-field envelope α(1±η) λ^{(N−2s)/2} |z|^{−(N−2s)}.
pub fn decay_envelope(
    lambda: f64,
    r: f64,
    eta: f64,
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> EnvelopeReport {
    let nm2s = params.n as f64 - 2.0 * params.s;
    let ex = nm2s / 2.0;
    let w = |y: f64| consts.alpha_ns * (lambda / (lambda * lambda + y * y)).powf(ex);
    let reference = consts.alpha_ns * lambda.powf(ex) * r.powf(-nm2s);
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max = f64::NEG_INFINITY;
    let m = 9;
    for j in 0..m {
        let theta = 0.05 + (std::f64::consts::PI - 0.1) * j as f64 / (m - 1) as f64;
        let (x, t) = (r * theta.cos(), r * theta.sin());
        let val = poisson_extend(&w, x, t, params, consts);
        let ratio = val / reference;
        ratio_min = ratio_min.min(ratio);
        ratio_max = ratio_max.max(ratio);
    }
    EnvelopeReport {
        lambda,
        r,
        eta,
        ratio_min,
        ratio_max,
        lower_ok: ratio_min >= 1.0 - eta,
        upper_ok: ratio_max <= 1.0 + eta,
    }
}

/// Smallest tested radius (in units of λ) at which the envelope holds.
pub fn envelope_radius(
    lambda: f64,
    eta: f64,
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> Option<f64> {
    const CANDIDATES: [f64; 11] = [1.5, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0, 40.0, 80.0, 160.0, 320.0];
    CANDIDATES
        .iter()
        .map(|&c| c * lambda)
        .find(|&r| decay_envelope(lambda, r, eta, params, consts).holds())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::bubble_1d;
    use crate::params::{make_params, sharp_constants, Flavor};
    use approx::assert_relative_eq;

    fn setup() -> (PhysicalParams, SharpConstants) {
        let p = make_params(1, 0.25, 0.0, Flavor::Spectral).unwrap();
        let c = sharp_constants(&p).unwrap();
        (p, c)
    }

    #[test]
    fn kernel_mass_is_one() {
        let (p, c) = setup();
        for t in [0.1, 1.0, 10.0] {
            assert_relative_eq!(kernel_mass(t, &p, &c), 1.0, max_relative = 1e-8);
        }
        // u = 1 extends to 1
        let one = |_: f64| 1.0;
        assert_relative_eq!(poisson_extend(&one, 0.3, 2.0, &p, &c), 1.0, max_relative = 1e-8);
    }

    #[test]
    fn trace_and_maximum_principle() {
        let (p, c) = setup();
        let w = |y: f64| bubble_1d(1.0, 0.0, y, &p, &c);
        for x in [0.0, 0.5, 2.0] {
            let u = poisson_extend(&w, x, 1e-7, &p, &c);
            assert_relative_eq!(u, w(x), max_relative = 1e-3);
        }
        for &(x, t) in &[(0.0, 0.5), (1.0, 1.0), (3.0, 0.2), (0.0, 5.0)] {
            let u = poisson_extend(&w, x, t, &p, &c);
            assert!(u <= w(x) + 1e-12, "W({x},{t}) = {u} > w = {}", w(x));
            assert!(u <= c.alpha_ns && u >= 0.0);
        }
    }

    #[test]
    fn dtn_reproduces_bubble_power() {
        let (p, c) = setup();
        let val = |y: f64| bubble_1d(1.0, 0.0, y, &p, &c);
        let der = |y: f64| {
            // d/dy alpha (1/(1+y^2))^{1/4}
            -0.5 * y * val(y) / (1.0 + y * y)
        };
        let tr = Trace { value: &val, deriv: &der };
        for x in [0.0, 0.3, 1.0] {
            let got = dtn_check(&tr, x, 1.0, &p, &c).unwrap();
            let want = val(x).powf(p.p);
            assert!((got - want).abs() / want < 1e-3, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn dtn_fourier_oracle() {
        let (p, c) = setup();
        // u = e^{-x^2/2} cos 3x, uhat = sqrt(pi/2)(e^{-(xi-3)^2/2}+e^{-(xi+3)^2/2})
        let val = |y: f64| (-y * y / 2.0).exp() * (3.0 * y).cos();
        let der = |y: f64| (-y * y / 2.0).exp() * (-y * (3.0 * y).cos() - 3.0 * (3.0 * y).sin());
        let tr = Trace { value: &val, deriv: &der };
        let (qs, ws) = math::gauss_legendre(200);
        let oracle = |x: f64| {
            // (1/pi) int_0^inf xi^{2s} uhat(xi) cos(x xi) dxi, truncated at 12
            let mut acc = 0.0;
            for (q, w) in qs.iter().zip(&ws) {
                let xi = 6.0 * (q + 1.0);
                let uhat = (std::f64::consts::PI / 2.0).sqrt()
                    * ((-(xi - 3.0) * (xi - 3.0) / 2.0).exp() + (-(xi + 3.0) * (xi + 3.0) / 2.0).exp());
                acc += 6.0 * w * xi.sqrt() * uhat * (x * xi).cos();
            }
            acc / std::f64::consts::PI
        };
        for x in [0.0, 0.4, 1.1] {
            let got = dtn_check(&tr, x, 0.3, &p, &c).unwrap();
            let want = oracle(x);
            assert!((got - want).abs() / want.abs().max(1.0) < 1e-3, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn dtn_linearity() {
        let (p, c) = setup();
        let v1 = |y: f64| bubble_1d(1.0, 0.0, y, &p, &c);
        let d1 = |y: f64| -0.5 * y * v1(y) / (1.0 + y * y);
        let v2 = |y: f64| (-y * y / 2.0).exp();
        let d2 = |y: f64| -y * (-y * y / 2.0).exp();
        let (a, b) = (1.7, -0.4);
        let vc = |y: f64| a * v1(y) + b * v2(y);
        let dc = |y: f64| a * d1(y) + b * d2(y);
        let x = 0.37;
        let lhs = dtn_check(&Trace { value: &vc, deriv: &dc }, x, 1.0, &p, &c).unwrap();
        let r1 = dtn_check(&Trace { value: &v1, deriv: &d1 }, x, 1.0, &p, &c).unwrap();
        let r2 = dtn_check(&Trace { value: &v2, deriv: &d2 }, x, 1.0, &p, &c).unwrap();
        assert_relative_eq!(lhs, a * r1 + b * r2, max_relative = 1e-8);
    }

    #[test]
    fn envelope_radii_and_scaling() {
        let (p, c) = setup();
        let r_half = envelope_radius(1.0, 0.5, &p, &c).unwrap();
        assert_eq!(r_half, 1.5);
        let r_tight = envelope_radius(1.0, 0.05, &p, &c).unwrap();
        assert!(r_tight > r_half);
        assert_eq!(r_tight, 160.0);
        // exact rescaling: the (lambda=2, R) report equals the (1, R/2) one
        let a = decay_envelope(2.0, 10.0, 0.3, &p, &c);
        let b = decay_envelope(1.0, 5.0, 0.3, &p, &c);
        assert_relative_eq!(a.ratio_min, b.ratio_min, max_relative = 1e-10);
        assert_relative_eq!(a.ratio_max, b.ratio_max, max_relative = 1e-10);
    }
}
