//! Physical parameters and the sharp constants of the problem.
//!
//! Note on the spectral operator: some references write the spectral power as
//! Σ a_i λ_i^{2s} φ_i, which is inconsistent with the s = 1 limit. This crate
//! uses the standard spectral power Σ a_i λ_i^s φ_i throughout.

use crate::error::{Error, Result};
use crate::math;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flavor {
    Spectral,
    Restricted,
}

impl std::str::FromStr for Flavor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spectral" => Ok(Flavor::Spectral),
            "restricted" => Ok(Flavor::Restricted),
            other => Err(Error::InvalidParams(format!("unknown flavor '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub n: u32,
    pub s: f64,
    /// Critical exponent (N+2s)/(N−2s); always recomputed from n, s.
    pub p: f64,
    pub eps: f64,
    pub flavor: Flavor,
}

pub fn make_params(n: u32, s: f64, eps: f64, flavor: Flavor) -> Result<PhysicalParams> {
    if n < 1 {
        return Err(Error::InvalidParams("N must be >= 1".into()));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidParams(format!("s = {s} not in (0,1)")));
    }
    let nf = n as f64;
    if nf <= 2.0 * s {
        return Err(Error::InvalidParams(format!("N > 2s violated (N={n}, s={s})")));
    }
    let p = (nf + 2.0 * s) / (nf - 2.0 * s);
    if !(eps >= 0.0 && eps < p - 1.0) {
        return Err(Error::InvalidParams(format!(
            "eps = {eps} outside [0, p-1) = [0, {})",
            p - 1.0
        )));
    }
    Ok(PhysicalParams { n, s, p, eps, flavor })
}

impl PhysicalParams {
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        make_params(self.n, self.s, eps, self.flavor)
    }
    /// The exponent of the equation actually being solved.
    pub fn q(&self) -> f64 {
        self.p - self.eps
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SharpConstants {
    pub c_ns: f64,
    pub kappa_s: f64,
    pub p_ns: f64,
    pub gamma_ns: f64,
    pub alpha_ns: f64,
    pub s_ns: f64,
    /// c1 = ∫ w_{1,0}^p
    pub c1: f64,
    /// c2 = ((N−2s)/N) ∫w^{p+1} / ∫w^p
    pub c2: f64,
    /// c3 = c1 · gamma_ns
    pub c3: f64,
    /// ∫ w_{1,0}^{p+1}
    pub int_w_p1: f64,
}

/// Surface area of the unit sphere S^{N−1}.
fn sphere_area(n: f64) -> f64 {
    2.0 * std::f64::consts::PI.powf(n / 2.0) / math::gamma(n / 2.0)
}

/// Radial bubble integrals ∫_0^∞ r^{N−1}(1+r²)^{−a} dr by quadrature,
/// via r = tanθ (tanh-sinh absorbs the cos^{2a−N−2}θ endpoint behavior).
fn radial_moment_quad(n: f64, a: f64) -> f64 {
    let quarter = std::f64::consts::FRAC_PI_4;
    math::tanh_sinh(10)
        .iter()
        .map(|&(z, wq)| {
            let th = quarter * (z + 1.0);
            let (sin, cos) = th.sin_cos();
            wq * quarter * sin.powf(n - 1.0) * cos.powf(2.0 * a - n - 1.0)
        })
        .sum()
}

pub fn sharp_constants(params: &PhysicalParams) -> Result<SharpConstants> {
    let n = params.n as f64;
    let s = params.s;
    let p = params.p;
    let pi = std::f64::consts::PI;
    let lg = math::ln_gamma;

    let c_ns = 2f64.powf(2.0 * s) * s * (lg((n + 2.0 * s) / 2.0) - lg(1.0 - s)).exp() / pi.powf(n / 2.0);
    let kappa_s = (lg(s) - lg(1.0 - s)).exp() / 2f64.powf(1.0 - 2.0 * s);
    let p_ns = (lg((n + 2.0 * s) / 2.0) - lg(s)).exp() / pi.powf(n / 2.0);
    let gamma_ns = 2f64.powf(-2.0 * s) * (lg((n - 2.0 * s) / 2.0) - lg(s)).exp() / pi.powf(n / 2.0);
    let alpha_ns = 2f64.powf((n - 2.0 * s) / 2.0)
        * ((n - 2.0 * s) / (4.0 * s) * (lg((n + 2.0 * s) / 2.0) - lg((n - 2.0 * s) / 2.0))).exp();
    let s_ns = 2f64.powf(-s)
        * pi.powf(-s / 2.0)
        * (0.5 * (lg((n - 2.0 * s) / 2.0) - lg((n + 2.0 * s) / 2.0))).exp()
        * ((s / n) * (lg(n) - lg(n / 2.0))).exp();

    let area = sphere_area(n);
    let c1 = alpha_ns.powf(p) * area * 0.5 * math::beta(n / 2.0, s);
    let int_w_p1 = alpha_ns.powf(p + 1.0) * area * 0.5 * math::beta(n / 2.0, n / 2.0);
    let c2 = (n - 2.0 * s) / n * int_w_p1 / c1;
    let c3 = c1 * gamma_ns;

    // Cross-check the Beta reductions against direct radial quadrature.
    let c1_q = alpha_ns.powf(p) * area * radial_moment_quad(n, (n + 2.0 * s) / 2.0);
    let wp1_q = alpha_ns.powf(p + 1.0) * area * radial_moment_quad(n, n);
    if (c1_q - c1).abs() > 1e-8 * c1 || (wp1_q - int_w_p1).abs() > 1e-8 * int_w_p1 {
        return Err(Error::Quadrature(format!(
            "bubble integral cross-check failed: c1 {c1} vs {c1_q}, int w^(p+1) {int_w_p1} vs {wp1_q}"
        )));
    }

    Ok(SharpConstants {
        c_ns,
        kappa_s,
        p_ns,
        gamma_ns,
        alpha_ns,
        s_ns,
        c1,
        c2,
        c3,
        int_w_p1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p14() -> PhysicalParams {
        make_params(1, 0.25, 0.0, Flavor::Spectral).unwrap()
    }

    #[test]
    fn exponent_arithmetic() {
        assert_eq!(p14().p, 3.0);
        let p2 = make_params(2, 0.5, 0.1, Flavor::Spectral).unwrap();
        assert_eq!(p2.p, 3.0);
        assert!(make_params(1, 0.5, 0.0, Flavor::Spectral).is_err());
        assert!(make_params(1, 0.25, 2.0, Flavor::Spectral).is_err());
        assert!(make_params(1, 0.25, 1.99, Flavor::Spectral).is_ok());
    }

    #[test]
    fn constants_against_high_precision_reference() {
        // reference values from a 30-digit arbitrary-precision evaluation
        let c = sharp_constants(&p14()).unwrap();
        assert_relative_eq!(c.c_ns, 0.19947114020071635, max_relative = 1e-12);
        assert_relative_eq!(c.kappa_s, 2.0920992401062033, max_relative = 1e-12);
        assert_relative_eq!(c.p_ns, 0.19068994087545330, max_relative = 1e-12);
        assert_relative_eq!(c.gamma_ns, 0.39894228040143270, max_relative = 1e-12);
        assert_relative_eq!(c.alpha_ns, 0.69136733903629325, max_relative = 1e-12);
        assert_relative_eq!(c.s_ns, 1.08643481121330803, max_relative = 1e-12);
        assert_relative_eq!(c.c1, 1.73300092018477, max_relative = 1e-10);
        assert_relative_eq!(c.c2, 0.20708875647037, max_relative = 1e-10);
        assert_relative_eq!(c.int_w_p1, 0.71777001104613, max_relative = 1e-10);
        assert_eq!(c.c3, c.c1 * c.gamma_ns);
    }

    #[test]
    fn constants_other_params() {
        // kappa_s = 1 at s = 1/2
        let c = sharp_constants(&make_params(2, 0.5, 0.0, Flavor::Spectral).unwrap()).unwrap();
        assert_relative_eq!(c.kappa_s, 1.0, max_relative = 1e-14);
        assert_relative_eq!(c.c_ns, 0.15915494309189535, max_relative = 1e-12);
        assert_relative_eq!(c.alpha_ns, 1.0, max_relative = 1e-14);
        assert_relative_eq!(c.s_ns, 0.75112554446494249, max_relative = 1e-12);
        let c3d = sharp_constants(&make_params(3, 0.5, 0.0, Flavor::Spectral).unwrap()).unwrap();
        assert_relative_eq!(c3d.alpha_ns, 2.0, max_relative = 1e-12);
        assert_relative_eq!(c3d.c2 * 3.0, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn constants_deterministic() {
        let a = sharp_constants(&p14()).unwrap();
        let b = sharp_constants(&p14()).unwrap();
        assert_eq!(a.c1.to_bits(), b.c1.to_bits());
        assert_eq!(a.s_ns.to_bits(), b.s_ns.to_bits());
    }
}
