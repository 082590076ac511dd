//! The bubble family w_{λ,ξ}, the Kelvin transform, the sharp Sobolev
//! quotient, and projected bubbles.

use crate::error::{Error, Result};
use crate::frac_op::FracOp;
use crate::math;
use crate::params::{PhysicalParams, SharpConstants};
use crate::spectral_basis::GridField;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BubbleParams {
    pub lambda: f64,
    pub xi: Vec<f64>,
}

impl BubbleParams {
    pub fn new(lambda: f64, xi: Vec<f64>) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidParams("bubble: lambda must be positive".into()));
        }
        Ok(BubbleParams { lambda, xi })
    }
}

/// w_{λ,ξ}(x) = α_{N,s} (λ/(λ² + |x−ξ|²))^{(N−2s)/2}
pub fn bubble_eval(
    bp: &BubbleParams,
    x: &[f64],
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> f64 {
    let r2: f64 = x.iter().zip(&bp.xi).map(|(a, b)| (a - b) * (a - b)).sum();
    let ex = (params.n as f64 - 2.0 * params.s) / 2.0;
    consts.alpha_ns * (bp.lambda / (bp.lambda * bp.lambda + r2)).powf(ex)
}

/// 1D shortcut used in hot loops.
pub fn bubble_1d(lambda: f64, xi: f64, x: f64, params: &PhysicalParams, consts: &SharpConstants) -> f64 {
    let d = x - xi;
    let ex = (params.n as f64 - 2.0 * params.s) / 2.0;
    consts.alpha_ns * (lambda / (lambda * lambda + d * d)).powf(ex)
}

/// Kelvin transform of w_{1,0} about the sphere of radius λ: w^λ = w_{λ²,0}.
pub fn kelvin(bp: &BubbleParams, lambda_sphere: f64) -> Result<BubbleParams> {
    if bp.xi.iter().any(|&c| c != 0.0) {
        return Err(Error::InvalidParams("kelvin: bubble must be centered at the origin".into()));
    }
    if bp.lambda != 1.0 {
        return Err(Error::InvalidParams("kelvin: transform defined on w_{1,0}".into()));
    }
    BubbleParams::new(lambda_sphere * lambda_sphere, bp.xi.clone())
}

/// Pointwise gap of the Kelvin identity
/// (λ/|x|)^{N−2s} w_{1,0}(λ²x/|x|²) − w_{λ²,0}(x) at a sample point.
pub fn kelvin_identity_gap(
    lambda_sphere: f64,
    x: &[f64],
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> f64 {
    let nm2s = params.n as f64 - 2.0 * params.s;
    let r2: f64 = x.iter().map(|a| a * a).sum();
    let inv: Vec<f64> = x.iter().map(|a| lambda_sphere * lambda_sphere * a / r2).collect();
    let w1 = BubbleParams { lambda: 1.0, xi: vec![0.0; x.len()] };
    let lhs = (lambda_sphere / r2.sqrt()).powf(nm2s) * bubble_eval(&w1, &inv, params, consts);
    let wk = BubbleParams { lambda: lambda_sphere * lambda_sphere, xi: vec![0.0; x.len()] };
    lhs - bubble_eval(&wk, x, params, consts)
}

/// How the part of the input beyond the window is modeled.
#[derive(Debug, Clone, Copy)]
pub enum TailModel {
    /// Compactly supported input: zero outside the window.
    None,
    /// Centered bubble tail w_{λ,0}.
    Bubble { lambda: f64 },
}

/// ∫_T^∞ w_{λ,0}^{p+1} dy by the substitution y = T/v.
fn bubble_tail_p1(t_edge: f64, params: &PhysicalParams, consts: &SharpConstants, lambda: f64) -> f64 {
    let (qs, ws) = math::gauss_legendre(64);
    let bp = BubbleParams { lambda, xi: vec![0.0] };
    let mut acc = 0.0;
    for (q, w) in qs.iter().zip(&ws) {
        let v = 0.5 * (q + 1.0);
        let y = t_edge / v;
        acc += 0.5 * w * bubble_eval(&bp, &[y], params, consts).powf(params.p + 1.0) * t_edge
            / (v * v);
    }
    acc
}

/// ∫_E^∞ u_tail(x_i ± r) r^{−1−2s} dr starting at radius `r0`, with the tail
/// supplied by the bubble evaluator; r = r0/v.
fn tail_kernel_integral(
    xi: f64,
    r0: f64,
    side: f64,
    s: f64,
    params: &PhysicalParams,
    consts: &SharpConstants,
    lambda: f64,
) -> f64 {
    let nodes = math::tanh_sinh(7);
    let bp = BubbleParams { lambda, xi: vec![0.0] };
    let mut acc = 0.0;
    for &(z, w) in &nodes {
        let v = 0.5 * (z + 1.0);
        let y = xi + side * r0 / v;
        acc += 0.5 * w * bubble_eval(&bp, &[y], params, consts) * v.powf(2.0 * s - 1.0);
    }
    r0.powf(-2.0 * s) * acc
}

/// (−Δ)^s u at node i of a uniform window grid, with the exterior supplied by
/// the tail model. Same quadrature as the restricted assembly: quadratic
/// interpolant on the singular cell, exact piecewise-linear moments on the
/// regular cells, analytic-plus-quadrature exterior.
fn frac_apply_point(
    i: usize,
    xs: &[f64],
    u: &[f64],
    h: f64,
    tail: &TailModel,
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> f64 {
    let s = params.s;
    let n = u.len();
    let c = consts.c_ns;
    let eval_outside = |x: f64| match *tail {
        TailModel::None => 0.0,
        TailModel::Bubble { lambda } => bubble_1d(lambda, 0.0, x, params, consts),
    };
    let at = |j: isize| -> f64 {
        if j >= 0 && (j as usize) < n {
            u[j as usize]
        } else {
            eval_outside(xs[0] + j as f64 * h)
        }
    };
    let mut g = 0.0;
    // singular cell
    let um = at(i as isize - 1);
    let up = at(i as isize + 1);
    g += -(um - 2.0 * u[i] + up) * h.powf(-2.0 * s) / (2.0 - 2.0 * s);
    // regular cells inside the window (plus one flanking cell per side)
    let i0 = |r1: f64, r2: f64| (r1.powf(-2.0 * s) - r2.powf(-2.0 * s)) / (2.0 * s);
    let i1 = |r1: f64, r2: f64| {
        if (2.0 * s - 1.0).abs() < 1e-14 {
            (r2 / r1).ln()
        } else {
            (r2.powf(1.0 - 2.0 * s) - r1.powf(1.0 - 2.0 * s)) / (1.0 - 2.0 * s)
        }
    };
    let max_off = i.max(n - 1 - i);
    for off in 1..=max_off {
        for side in [1isize, -1] {
            let jn = i as isize + side * off as isize;
            if side == 1 && jn > n as isize - 1 {
                continue;
            }
            if side == -1 && jn < 0 {
                continue;
            }
            let jf = jn + side;
            let r1 = off as f64 * h;
            let r2 = r1 + h;
            let un = at(jn);
            let uf = at(jf);
            let v0 = i0(r1, r2);
            let v1 = i1(r1, r2);
            g += u[i] * v0 - un * (r2 * v0 - v1) / h - uf * (v1 - r1 * v0) / h;
        }
    }
    // exterior beyond the covered range
    let rr = (n - i) as f64 * h;
    let rl = (i + 1) as f64 * h;
    g += u[i] * (rl.powf(-2.0 * s) + rr.powf(-2.0 * s)) / (2.0 * s);
    if let TailModel::Bubble { lambda } = *tail {
        g -= tail_kernel_integral(xs[i], rr, 1.0, s, params, consts, lambda);
        g -= tail_kernel_integral(xs[i], rl, -1.0, s, params, consts, lambda);
    }
    c * g
}

/// The Sobolev quotient ∥u∥_{p+1} / ∥(−Δ)^{s/2}u∥₂ for a function sampled on
/// a uniform symmetric window, with the exterior described by `tail`.
///
/// The seminorm is computed from the operator-side identity
/// ∥(−Δ)^{s/2}u∥² = ∫ u·(−Δ)^s u: the singular integral for g = (−Δ)^s u is
/// evaluated with the exterior supplied analytically by the tail model, and
/// the tail of ∫ u·g uses the bubble identity (−Δ)^s w = w^p. Direct window
/// truncation of the Gagliardo form stalls: the bubble's H^s tail energy
/// decays only like T^{−1/2}, while u·g decays like |x|^{−2} and localizes.
pub fn sobolev_ratio(
    xs: &[f64],
    u: &[f64],
    tail: &TailModel,
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> Result<f64> {
    let n = xs.len();
    if n < 16 || u.len() != n {
        return Err(Error::InvalidParams("sobolev_ratio: bad window".into()));
    }
    let h = xs[1] - xs[0];
    let t_edge = xs[n - 1];
    if (xs[0] + t_edge).abs() > 1e-10 * t_edge {
        return Err(Error::InvalidParams("sobolev_ratio: window must be symmetric".into()));
    }
    let umax = u.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if matches!(tail, TailModel::None) && (u[0].abs().max(u[n - 1].abs()) > 1e-3 * umax) {
        return Err(Error::InvalidParams(
            "sobolev_ratio: window too small for a compactly supported input".into(),
        ));
    }
    let q1 = params.p + 1.0;
    let trapz = |f: &dyn Fn(usize) -> f64| {
        let mut acc = 0.0;
        for j in 0..n - 1 {
            acc += 0.5 * h * (f(j) + f(j + 1));
        }
        acc
    };
    let mut num_q1 = trapz(&|j| u[j].abs().powf(q1));
    if let TailModel::Bubble { lambda } = *tail {
        num_q1 += 2.0 * bubble_tail_p1(t_edge, params, consts, lambda);
    }
    let g: Vec<f64> = (0..n)
        .map(|i| frac_apply_point(i, xs, u, h, tail, params, consts))
        .collect();
    let mut d = trapz(&|j| u[j] * g[j]);
    if let TailModel::Bubble { lambda } = *tail {
        d += 2.0 * bubble_tail_p1(t_edge, params, consts, lambda);
    }
    if !(d > 0.0) {
        return Err(Error::Quadrature("sobolev_ratio: nonpositive seminorm".into()));
    }
    Ok(num_q1.powf(1.0 / q1) / d.sqrt())
}

/// Solve (−Δ)^s Pw = w_{λ,ξ}^p on the operator's domain with zero boundary
/// data. The returned flag is false when λ is not small relative to
/// dist(ξ, ∂Ω), i.e. outside the expansion regime (a warning, not a failure).
pub fn project_bubble(
    bp: &BubbleParams,
    op: &dyn FracOp,
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> (GridField, bool) {
    let xi = bp.xi[0];
    let rhs: Vec<f64> = op
        .xs()
        .iter()
        .map(|&x| bubble_1d(bp.lambda, xi, x, params, consts).powf(params.p))
        .collect();
    let u = op.solve(&rhs);
    let length = op.domain().diam();
    let dist = xi.min(length - xi);
    let regime_ok = bp.lambda < dist;
    (GridField { values: u, domain: op.domain() }, regime_ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frac_op::SpectralOp;
    use crate::params::{make_params, sharp_constants, Flavor};
    use crate::spectral_basis::ModelDomain;
    use approx::assert_relative_eq;

    fn setup() -> (PhysicalParams, SharpConstants) {
        let p = make_params(1, 0.25, 0.0, Flavor::Spectral).unwrap();
        let c = sharp_constants(&p).unwrap();
        (p, c)
    }

    #[test]
    fn bubble_formula_values() {
        let (p, c) = setup();
        let w1 = BubbleParams::new(1.0, vec![0.0]).unwrap();
        assert_relative_eq!(bubble_eval(&w1, &[0.0], &p, &c), c.alpha_ns, max_relative = 1e-15);
        let w = BubbleParams::new(0.3, vec![0.7]).unwrap();
        assert_relative_eq!(
            bubble_eval(&w, &[0.7], &p, &c),
            c.alpha_ns * 0.3f64.powf(-0.25),
            max_relative = 1e-14
        );
        // |x|^{N-2s} w -> alpha lambda^{(N-2s)/2}
        for big in [1e3, 1e5] {
            let v = bubble_eval(&w1, &[big], &p, &c) * big.powf(0.5);
            assert!((v - c.alpha_ns).abs() / c.alpha_ns < 2.0 / big);
        }
        // radial symmetry
        assert_eq!(
            bubble_eval(&w1, &[0.37], &p, &c).to_bits(),
            bubble_eval(&w1, &[-0.37], &p, &c).to_bits()
        );
    }

    #[test]
    fn kelvin_identity() {
        let (p, c) = setup();
        let w1 = BubbleParams::new(1.0, vec![0.0]).unwrap();
        let k1 = kelvin(&w1, 1.0).unwrap();
        assert_eq!(k1.lambda, 1.0);
        let k2 = kelvin(&w1, 2.0).unwrap();
        assert_eq!(k2.lambda, 4.0);
        for x in [0.3, 1.0, 2.0, 17.0] {
            for ls in [0.5, 1.3, 2.0] {
                let gap = kelvin_identity_gap(ls, &[x], &p, &c);
                assert!(gap.abs() < 1e-12, "x={x} ls={ls}: {gap}");
            }
        }
        // involution: applying with ls then 1/ls returns lambda = 1 overall
        let once = kelvin(&w1, 2.0).unwrap();
        assert_relative_eq!(once.lambda * kelvin(&w1, 0.5).unwrap().lambda, 1.0, max_relative = 1e-14);
        let off = BubbleParams::new(1.0, vec![0.4]).unwrap();
        assert!(kelvin(&off, 2.0).is_err());
    }

    #[test]
    fn bubble_p1_integral_scale_invariant() {
        let (p, c) = setup();
        // int w^{p+1} over R computed as window + analytic tail must not
        // depend on lambda
        let mut vals = Vec::new();
        for lam in [0.5, 1.0, 2.0] {
            let t = 40.0 * lam;
            let n = 2001;
            let h = 2.0 * t / (n - 1) as f64;
            let xs: Vec<f64> = (0..n).map(|j| -t + j as f64 * h).collect();
            let bp = BubbleParams { lambda: lam, xi: vec![0.0] };
            let acc: f64 = xs
                .windows(2)
                .map(|w| {
                    0.5 * h
                        * (bubble_eval(&bp, &[w[0]], &p, &c).powf(4.0)
                            + bubble_eval(&bp, &[w[1]], &p, &c).powf(4.0))
                })
                .sum();
            vals.push(acc + 2.0 * bubble_tail_p1(t, &p, &c, lam));
        }
        for v in &vals {
            assert_relative_eq!(*v, c.int_w_p1, max_relative = 1e-6);
            assert_relative_eq!(*v, vals[0], max_relative = 1e-6);
        }
    }

    #[test]
    fn sobolev_ratio_bubble_and_invariance() {
        let (p, c) = setup();
        let n = 1501;
        let make = |lam: f64| {
            let t = 30.0 * lam;
            let h = 2.0 * t / (n - 1) as f64;
            let xs: Vec<f64> = (0..n).map(|j| -t + j as f64 * h).collect();
            let u: Vec<f64> = xs.iter().map(|&x| bubble_1d(lam, 0.0, x, &p, &c)).collect();
            sobolev_ratio(&xs, &u, &TailModel::Bubble { lambda: lam }, &p, &c).unwrap()
        };
        let r1 = make(1.0);
        assert!((r1 - c.s_ns).abs() / c.s_ns < 0.01, "ratio {r1} vs {}", c.s_ns);
        let r3 = make(3.0);
        assert!((r1 - r3).abs() / r1 < 1e-3, "scale invariance: {r1} vs {r3}");
    }

    #[test]
    fn sobolev_ratio_gaussian_strictly_below() {
        let (p, c) = setup();
        let n = 1201;
        let t = 10.0;
        let h = 2.0 * t / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|j| -t + j as f64 * h).collect();
        let u: Vec<f64> = xs.iter().map(|&x| (-x * x / 2.0).exp()).collect();
        let r = sobolev_ratio(&xs, &u, &TailModel::None, &p, &c).unwrap();
        assert!(r < c.s_ns * 0.999, "gaussian ratio {r} not strictly below {}", c.s_ns);
        // window too small for the same profile
        let xs2: Vec<f64> = (0..101).map(|j| -2.0 + j as f64 * 0.04).collect();
        let u2: Vec<f64> = xs2.iter().map(|&x| (-x * x / 2.0).exp()).collect();
        assert!(sobolev_ratio(&xs2, &u2, &TailModel::None, &p, &c).is_err());
    }

    #[test]
    fn projected_bubble_comparison_and_rate() {
        let (p, c) = setup();
        let d = ModelDomain::interval(1.0, 1024);
        let op = SpectralOp::new(d, p.s).unwrap();
        let bp = BubbleParams::new(0.02, vec![0.5]).unwrap();
        let (pw, ok) = project_bubble(&bp, &op, &p, &c);
        assert!(ok);
        for (j, &x) in op.xs().iter().enumerate() {
            let w = bubble_1d(0.02, 0.5, x, &p, &c);
            assert!(pw.values[j] >= -1e-9, "Pw >= 0 fails at {x}");
            assert!(pw.values[j] <= w + 1e-9, "Pw <= w fails at {x}");
        }
        // ||Pw - w|| at a fixed interior point shrinks like lambda^{(N-2s)/2}
        let probe = (0.25 / d.h()).round() as usize - 1;
        let mut gaps = Vec::new();
        for lam in [0.02, 0.01, 0.005] {
            let (pw, _) = project_bubble(&BubbleParams::new(lam, vec![0.5]).unwrap(), &op, &p, &c);
            let w = bubble_1d(lam, 0.5, op.xs()[probe], &p, &c);
            gaps.push((pw.values[probe] - w).abs());
        }
        let order = (gaps[0] / gaps[1]).log2();
        assert!((order - 0.25).abs() < 0.1, "order {order}");
        // out-of-regime warning
        let (_, ok) = project_bubble(&BubbleParams::new(0.9, vec![0.5]).unwrap(), &op, &p, &c);
        assert!(!ok);
    }
}
