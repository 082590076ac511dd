//! Green's function G, regular part H, Robin function and its gradient, the
//! matrix M, the reduced function Φ_m, and a damped-Newton critical-point
//! finder.
//!
//! Spectral flavor, interval (0, L): the eigen-series Σ φ_k(x)φ_k(y)/λ_k^s
//! is summed in closed form through S_σ(θ) = Σ cos(kθ)/k^σ with σ = 2s,
//!   S_σ(θ) = Γ(1−σ)sin(πσ/2)|θ|^{σ−1}
//!          + 2^σ π^{σ−1} sin(πσ/2) Σ_{n≥0} ζ(2n+1−σ)Γ(2n+1−σ)/(2n)!·(θ/2π)^{2n},
//! a geometrically convergent series for |θ| ≤ π (reflection S_σ(2π−θ) =
//! S_σ(θ) covers the rest). The first term is exactly the free-space kernel
//! γ_{1,s}|x−y|^{2s−1} image, so H and the Robin function come from dropping
//! it — the singularity is never formed as a difference of large numbers.
//!
//! Restricted flavor, interval as the translated ball of radius R = L/2: the
//! regular part has the smooth representation
//!   H(x,y) = (κ/β)[(1−x²)(1−y²)]^s ∫₀¹ ((x−y)²v^{1/β} + (1−x²)(1−y²))^{−1/2} dv
//! on the unit ball (β = 1/2 − s), valid including the diagonal, where it
//! reduces to the Robin function κ(1−x²)^{2s−1}/β exactly.

use crate::error::{Error, Result};
use crate::math;
use crate::params::{Flavor, PhysicalParams, SharpConstants};
use crate::spectral_basis::{GridField, ModelDomain};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const PI: f64 = std::f64::consts::PI;

/// Analytic (non-singular) part of S_σ at reduced angle θ ∈ [0, π].
fn s_sigma_analytic(theta: f64, sigma: f64) -> f64 {
    let k = 2f64.powf(sigma) * PI.powf(sigma - 1.0) * (PI * sigma / 2.0).sin();
    let z = theta / (2.0 * PI);
    let z2 = z * z;
    // g_n = Γ(2n+1−σ)/(2n)! by recurrence
    let mut g = math::gamma(1.0 - sigma);
    let mut pow = 1.0;
    let mut acc = 0.0;
    for n in 0..200 {
        let t = math::zeta(2.0 * n as f64 + 1.0 - sigma) * g * pow;
        acc += t;
        if n > 2 && t.abs() < 1e-17 * acc.abs().max(1.0) {
            break;
        }
        let m = 2.0 * n as f64;
        g *= (m + 2.0 - sigma) * (m + 1.0 - sigma) / ((m + 2.0) * (m + 1.0));
        pow *= z2;
    }
    k * acc
}

/// S_σ(θ) = Σ_{k≥1} cos(kθ)/k^σ for 0 < σ < 1, any θ.
pub fn s_sigma(theta: f64, sigma: f64) -> f64 {
    let mut th = theta.abs() % (2.0 * PI);
    if th > PI {
        th = 2.0 * PI - th;
    }
    let sing = math::gamma(1.0 - sigma) * (PI * sigma / 2.0).sin() * th.powf(sigma - 1.0);
    sing + s_sigma_analytic(th, sigma)
}

/// Spectral Green function on the unit interval (0,1).
fn g_spec_unit(x: f64, y: f64, s: f64) -> f64 {
    let sig = 2.0 * s;
    PI.powf(-sig) * (s_sigma(PI * (x - y), sig) - s_sigma(PI * (x + y), sig))
}

/// Spectral regular part on the unit interval; finite at x = y.
fn h_spec_unit(x: f64, y: f64, s: f64) -> f64 {
    let sig = 2.0 * s;
    let th = PI * (x - y).abs();
    -PI.powf(-sig) * (s_sigma_analytic(th, sig) - s_sigma(PI * (x + y), sig))
}

fn robin_spec_unit(x: f64, s: f64) -> f64 {
    let sig = 2.0 * s;
    PI.powf(-sig) * (s_sigma(2.0 * PI * x, sig) - math::zeta(sig))
}

/// κ of the restricted ball kernel.
fn kappa_ball(s: f64) -> f64 {
    (math::ln_gamma(0.5) - 2.0 * math::ln_gamma(s)).exp() / (2f64.powf(2.0 * s) * PI.sqrt())
}

/// γ_{1,s}, the free-space kernel constant in 1D.
fn gamma_1s(s: f64) -> f64 {
    2f64.powf(-2.0 * s) * (math::ln_gamma((1.0 - 2.0 * s) / 2.0) - math::ln_gamma(s)).exp()
        / PI.sqrt()
}

/// Restricted regular part on the unit ball (−1,1); valid including x = y.
fn h_ball_unit(x: f64, y: f64, s: f64) -> f64 {
    let beta = 0.5 - s;
    let kap = kappa_ball(s);
    let p = (1.0 - x * x) * (1.0 - y * y);
    let d2 = (x - y) * (x - y);
    let (qs, ws) = math::gauss_legendre(64);
    let mut acc = 0.0;
    for (q, w) in qs.iter().zip(&ws) {
        let v = 0.5 * (q + 1.0);
        acc += 0.5 * w / (d2 * v.powf(1.0 / beta) + p).sqrt();
    }
    (kap / beta) * p.powf(s) * acc
}

fn g_ball_unit(x: f64, y: f64, s: f64) -> f64 {
    gamma_1s(s) * (x - y).abs().powf(2.0 * s - 1.0) - h_ball_unit(x, y, s)
}

fn robin_ball_unit(x: f64, s: f64) -> f64 {
    kappa_ball(s) * (1.0 - x * x).powf(2.0 * s - 1.0) / (0.5 - s)
}

/// Analytic Green/Robin evaluation for a flavor on an interval domain.
pub struct GreenFns {
    pub domain: ModelDomain,
    pub flavor: Flavor,
    s: f64,
    length: f64,
}

impl GreenFns {
    pub fn new(domain: ModelDomain, params: &PhysicalParams) -> Result<Self> {
        let length = match domain {
            ModelDomain::Interval { length, .. } => length,
            _ => return Err(Error::Unsupported("greens: interval domains only".into())),
        };
        if params.s >= 0.5 {
            return Err(Error::Unsupported(
                "greens closed forms require s < 1/2 (forced by N > 2s in 1D)".into(),
            ));
        }
        Ok(GreenFns { domain, flavor: params.flavor, s: params.s, length })
    }

    fn check_interior(&self, x: f64) -> Result<()> {
        if !(x > 0.0 && x < self.length) {
            return Err(Error::InvalidParams(format!("point {x} not interior to (0, {})", self.length)));
        }
        Ok(())
    }

    pub fn g(&self, x: f64, y: f64) -> f64 {
        let l = self.length;
        match self.flavor {
            Flavor::Spectral => l.powf(2.0 * self.s - 1.0) * g_spec_unit(x / l, y / l, self.s),
            Flavor::Restricted => {
                let r = l / 2.0;
                r.powf(2.0 * self.s - 1.0) * g_ball_unit((x - r) / r, (y - r) / r, self.s)
            }
        }
    }

    pub fn h_part(&self, x: f64, y: f64) -> f64 {
        let l = self.length;
        match self.flavor {
            Flavor::Spectral => l.powf(2.0 * self.s - 1.0) * h_spec_unit(x / l, y / l, self.s),
            Flavor::Restricted => {
                let r = l / 2.0;
                r.powf(2.0 * self.s - 1.0) * h_ball_unit((x - r) / r, (y - r) / r, self.s)
            }
        }
    }

    /// Robin function H(x, x).
    pub fn robin(&self, x: f64) -> f64 {
        let l = self.length;
        match self.flavor {
            Flavor::Spectral => l.powf(2.0 * self.s - 1.0) * robin_spec_unit(x / l, self.s),
            Flavor::Restricted => {
                let r = l / 2.0;
                r.powf(2.0 * self.s - 1.0) * robin_ball_unit((x - r) / r, self.s)
            }
        }
    }

    /// Full derivative of the Robin map x ↦ H(x, x) (so twice the first-slot
    /// partial, by symmetry of H); centered differences on the closed form.
    pub fn robin_grad(&self, x: f64) -> f64 {
        let hfd = 1e-4 * self.length;
        (self.robin(x + hfd) - self.robin(x - hfd)) / (2.0 * hfd)
    }

    /// First-slot partial ∂₁G(x, y).
    pub fn d1g(&self, x: f64, y: f64) -> f64 {
        let hfd = 1e-4 * self.length;
        (self.g(x + hfd, y) - self.g(x - hfd, y)) / (2.0 * hfd)
    }
}

/// Green function column G(·, y) sampled on the domain grid.
pub fn green(domain: ModelDomain, params: &PhysicalParams, y: f64) -> Result<GridField> {
    let fns = GreenFns::new(domain, params)?;
    fns.check_interior(y)?;
    let values = domain.grid().iter().map(|&x| fns.g(x, y)).collect();
    GridField::new(values, domain)
}

pub fn regular_part(domain: ModelDomain, params: &PhysicalParams, x: f64, y: f64) -> Result<f64> {
    let fns = GreenFns::new(domain, params)?;
    fns.check_interior(x)?;
    fns.check_interior(y)?;
    Ok(fns.h_part(x, y))
}

pub fn robin_grad(domain: ModelDomain, params: &PhysicalParams, x: f64) -> Result<f64> {
    let fns = GreenFns::new(domain, params)?;
    fns.check_interior(x)?;
    Ok(fns.robin_grad(x))
}

/// Tabulated Green data for plotting/inspection.
#[derive(Debug, Clone, Serialize)]
pub struct GreenTable {
    pub flavor: Flavor,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// g[probe][node] = G(x_node, y_probe)
    pub g: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub robin: Vec<f64>,
    pub robin_grad: Vec<f64>,
}

pub const GREEN_TABLE_PROBES: usize = 33;

pub fn build_green_table(domain: ModelDomain, params: &PhysicalParams) -> Result<GreenTable> {
    let fns = GreenFns::new(domain, params)?;
    let l = fns.length;
    let xs = domain.grid();
    let ys: Vec<f64> = (1..=GREEN_TABLE_PROBES)
        .map(|i| i as f64 * l / (GREEN_TABLE_PROBES + 1) as f64)
        .collect();
    let mut g = Vec::with_capacity(ys.len());
    let mut h = Vec::with_capacity(ys.len());
    for &y in &ys {
        g.push(xs.iter().map(|&x| fns.g(x, y)).collect());
        h.push(xs.iter().map(|&x| fns.h_part(x, y)).collect());
    }
    let robin = xs.iter().map(|&x| fns.robin(x)).collect();
    let robin_grad = xs.iter().map(|&x| fns.robin_grad(x)).collect();
    Ok(GreenTable { flavor: params.flavor, xs, ys, g, h, robin, robin_grad })
}

impl GreenTable {
    /// RFC-4180 CSV with columns flavor,x,y,G,H.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "flavor,x,y,G,H")?;
        let tag = match self.flavor {
            Flavor::Spectral => "spectral",
            Flavor::Restricted => "restricted",
        };
        for (iy, &y) in self.ys.iter().enumerate() {
            for (ix, &x) in self.xs.iter().enumerate() {
                writeln!(
                    w,
                    "{tag},{:.16e},{:.16e},{:.16e},{:.16e}",
                    x, y, self.g[iy][ix], self.h[iy][ix]
                )?;
            }
        }
        Ok(())
    }
}

/// Argument of the reduced function Φ_m.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiPoint {
    pub b: Vec<f64>,
    pub x: Vec<f64>,
    pub b0: f64,
}

fn phi_validate(pt: &PhiPoint, fns: &GreenFns) -> Result<()> {
    let m = pt.b.len();
    if m == 0 || pt.x.len() != m {
        return Err(Error::InvalidParams("PhiPoint: b and x must have equal positive length".into()));
    }
    let floor = 1e-3 * fns.length;
    for i in 0..m {
        if pt.b[i] <= 0.0 {
            return Err(Error::InvalidParams("PhiPoint: b_i must be positive".into()));
        }
        if !(pt.x[i] > 0.0 && pt.x[i] < fns.length) {
            return Err(Error::InvalidParams("PhiPoint: x_i must be interior".into()));
        }
        for k in (i + 1)..m {
            if (pt.x[i] - pt.x[k]).abs() < floor {
                return Err(Error::InvalidParams("PhiPoint: peaks closer than separation floor".into()));
            }
        }
    }
    Ok(())
}

pub fn phi_value(pt: &PhiPoint, fns: &GreenFns, consts: &SharpConstants) -> Result<f64> {
    phi_validate(pt, fns)?;
    let m = pt.b.len();
    let mut quad = 0.0;
    for i in 0..m {
        quad += pt.b[i] * pt.b[i] * fns.robin(pt.x[i]);
        for k in 0..m {
            if k != i {
                quad -= pt.b[i] * pt.b[k] * fns.g(pt.x[i], pt.x[k]);
            }
        }
    }
    let logs: f64 = pt.b.iter().map(|b| b.ln()).sum();
    Ok(consts.c1 * quad - consts.c2 * pt.b0 * logs)
}

/// Full gradient in (b₁..b_m, x₁..x_m).
pub fn phi_grad(pt: &PhiPoint, fns: &GreenFns, consts: &SharpConstants) -> Result<Vec<f64>> {
    phi_validate(pt, fns)?;
    let m = pt.b.len();
    let mut grad = vec![0.0; 2 * m];
    for i in 0..m {
        let mut cross = 0.0;
        let mut cross_d = 0.0;
        for k in 0..m {
            if k != i {
                cross += pt.b[k] * fns.g(pt.x[i], pt.x[k]);
                cross_d += pt.b[k] * fns.d1g(pt.x[i], pt.x[k]);
            }
        }
        grad[i] = consts.c1 * (2.0 * pt.b[i] * fns.robin(pt.x[i]) - 2.0 * cross)
            - consts.c2 * pt.b0 / pt.b[i];
        grad[m + i] =
            consts.c1 * (pt.b[i] * pt.b[i] * fns.robin_grad(pt.x[i]) - 2.0 * pt.b[i] * cross_d);
    }
    Ok(grad)
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalPoint {
    pub point: PhiPoint,
    pub grad_inf: f64,
    pub iters: usize,
    /// Hessian inertia (negative, zero, positive eigenvalue counts).
    pub inertia: (usize, usize, usize),
}

fn phi_hessian(pt: &PhiPoint, fns: &GreenFns, consts: &SharpConstants) -> Result<DMatrix<f64>> {
    let m = pt.b.len();
    let dim = 2 * m;
    let mut hess = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let step = if j < m { 1e-6 * pt.b[j].abs().max(1e-3) } else { 1e-6 * fns.length };
        let mut plus = pt.clone();
        let mut minus = pt.clone();
        if j < m {
            plus.b[j] += step;
            minus.b[j] -= step;
        } else {
            plus.x[j - m] += step;
            minus.x[j - m] -= step;
        }
        let gp = phi_grad(&plus, fns, consts)?;
        let gm = phi_grad(&minus, fns, consts)?;
        for i in 0..dim {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    let ht = hess.transpose();
    Ok((hess + ht) * 0.5)
}

/// Damped Newton on ∇Φ = 0 with Armijo backtracking on ‖∇Φ‖².
pub fn phi_critical(
    initial: &PhiPoint,
    fns: &GreenFns,
    consts: &SharpConstants,
) -> Result<CriticalPoint> {
    let mut pt = initial.clone();
    phi_validate(&pt, fns)?;
    let m = pt.b.len();
    let tol = 1e-10;
    for iter in 0..200 {
        let grad = phi_grad(&pt, fns, consts)?;
        let ginf = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if ginf < tol {
            let hess = phi_hessian(&pt, fns, consts)?;
            let eig = hess.symmetric_eigenvalues();
            let scale = eig.iter().fold(0.0f64, |a, &e| a.max(e.abs())).max(1e-300);
            let mut inertia = (0usize, 0usize, 0usize);
            for &e in eig.iter() {
                if e < -1e-8 * scale {
                    inertia.0 += 1;
                } else if e > 1e-8 * scale {
                    inertia.2 += 1;
                } else {
                    inertia.1 += 1;
                }
            }
            return Ok(CriticalPoint { point: pt, grad_inf: ginf, iters: iter, inertia });
        }
        let hess = phi_hessian(&pt, fns, consts)?;
        let g = DVector::from_column_slice(&grad);
        let step = hess
            .lu()
            .solve(&(-&g))
            .ok_or_else(|| Error::Solver("phi Newton: singular Hessian".into()))?;
        let g2 = g.dot(&g);
        let mut t = 1.0;
        let mut advanced = false;
        while t > 1e-12 {
            let mut cand = pt.clone();
            for i in 0..m {
                cand.b[i] += t * step[i];
                cand.x[i] += t * step[m + i];
            }
            if phi_validate(&cand, fns).is_ok() {
                let cg = phi_grad(&cand, fns, consts)?;
                let cg2: f64 = cg.iter().map(|v| v * v).sum();
                if cg2 < (1.0 - 1e-4 * t) * g2 {
                    pt = cand;
                    advanced = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !advanced {
            return Err(Error::NotConverged(format!(
                "phi Newton stalled at iter {iter} with |grad|_inf = {ginf:.3e}"
            )));
        }
    }
    Err(Error::NotConverged("phi Newton: 200 iterations exceeded".into()))
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixM {
    pub m: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

/// The matrix with m_ii = H(x_i, x_i), m_ij = −G(x_i, x_j).
pub fn matrix_m(x: &[f64], fns: &GreenFns) -> Result<MatrixM> {
    let m = x.len();
    if m == 0 {
        return Err(Error::InvalidParams("matrix_m: need at least one point".into()));
    }
    for i in 0..m {
        fns.check_interior(x[i])?;
        for k in (i + 1)..m {
            if (x[i] - x[k]).abs() < 1e-3 * fns.length {
                return Err(Error::InvalidParams("matrix_m: points not distinct".into()));
            }
        }
    }
    let mut mat = DMatrix::zeros(m, m);
    for i in 0..m {
        for k in 0..m {
            mat[(i, k)] = if i == k { fns.robin(x[i]) } else { -fns.g(x[i], x[k]) };
        }
    }
    let mut eigenvalues: Vec<f64> = mat.clone().symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rows = (0..m).map(|i| (0..m).map(|k| mat[(i, k)]).collect()).collect();
    Ok(MatrixM { m: rows, eigenvalues })
}
