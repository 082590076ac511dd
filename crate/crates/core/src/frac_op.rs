//! The fractional Laplacian in both flavors: spectral (diagonal in the
//! Dirichlet eigenbasis) and restricted (singular-integral collocation with
//! zero exterior extension).

use crate::error::{Error, Result};
use crate::math;
use crate::params::PhysicalParams;
use crate::spectral_basis::{Dst1, GridField, ModelDomain, SpectralField};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

fn interval_eigs(domain: &ModelDomain, s: f64) -> Result<Vec<f64>> {
    match *domain {
        ModelDomain::Interval { length, grid_n } => {
            let pi = std::f64::consts::PI;
            Ok((1..=grid_n)
                .map(|k| (k as f64 * pi / length).powi(2).powf(s))
                .collect())
        }
        _ => Err(Error::Unsupported("spectral operator: interval domains only".into())),
    }
}

/// Coefficient-wise multiplication by λ_k^s.
pub fn apply_spectral(a: &SpectralField, s: f64) -> Result<SpectralField> {
    let lam = interval_eigs(&a.domain, s)?;
    let coeffs = a.coeffs.iter().zip(&lam).map(|(c, l)| c * l).collect();
    Ok(SpectralField { coeffs, domain: a.domain })
}

/// Coefficient-wise division by λ_k^s.
pub fn solve_spectral(rhs: &SpectralField, s: f64) -> Result<SpectralField> {
    let lam = interval_eigs(&rhs.domain, s)?;
    let coeffs = rhs.coeffs.iter().zip(&lam).map(|(c, l)| c / l).collect();
    Ok(SpectralField { coeffs, domain: rhs.domain })
}

/// Dense collocation matrix of the restricted operator on an interval (a, b):
/// nodal u maps to ((−Δ)^s u)(x_i) with u ≡ 0 outside (a, b).
#[derive(Debug, Clone)]
pub struct RestrictedMatrix {
    pub mat: DMatrix<f64>,
    pub x: Vec<f64>,
    pub h: f64,
    pub a: f64,
    pub b: f64,
    pub s: f64,
}

/// Assemble the restricted operator on (a, b) with n interior nodes.
///
/// Quadrature: the singular cell [x_i−h, x_i+h] uses the quadratic
/// interpolant through the three neighboring nodes (the P.V. kills the odd
/// term, leaving −u″(x_i)·h^{2−2s}/(2−2s)); regular cells use the exact
/// kernel moments of the piecewise-linear interpolant; the zero exterior
/// contributes the analytic tail c·u_i·((x_i−a)^{−2s}+(b−x_i)^{−2s})/(2s).
/// The assembled matrix is symmetrized.
///
/// Only 0 < s < 1 is required here (no N > 2s constraint): the assembly is
/// meaningful for any order, e.g. the half-Laplacian s = 1/2 in 1D.
pub fn assemble_restricted_interval(a: f64, b: f64, n: usize, s: f64) -> Result<RestrictedMatrix> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidParams(format!("s = {s} not in (0,1)")));
    }
    if !(b > a) || n == 0 {
        return Err(Error::InvalidParams("need b > a and n >= 1".into()));
    }
    let h = (b - a) / (n as f64 + 1.0);
    let x: Vec<f64> = (1..=n).map(|j| a + h * j as f64).collect();
    // c_{1,s}
    let c = 2f64.powf(2.0 * s) * s
        * (math::ln_gamma((1.0 + 2.0 * s) / 2.0) - math::ln_gamma(1.0 - s)).exp()
        / std::f64::consts::PI.sqrt();
    let i0 = |r1: f64, r2: f64| (r1.powf(-2.0 * s) - r2.powf(-2.0 * s)) / (2.0 * s);
    let i1 = |r1: f64, r2: f64| {
        if (2.0 * s - 1.0).abs() < 1e-14 {
            (r2 / r1).ln()
        } else {
            (r2.powf(1.0 - 2.0 * s) - r1.powf(1.0 - 2.0 * s)) / (1.0 - 2.0 * s)
        }
    };
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let xi = x[i];
        let coef = c * h.powf(-2.0 * s) / (2.0 - 2.0 * s);
        if i >= 1 {
            m[(i, i - 1)] -= coef;
        }
        m[(i, i)] += 2.0 * coef;
        if i + 1 < n {
            m[(i, i + 1)] -= coef;
        }
        // cells to the right: [x_jj, x_jj + h] for node index jj = i+1..=n
        // (jj = n is the boundary node, where u = 0)
        for jj in (i + 1)..=n {
            let r1 = (jj - i) as f64 * h;
            let r2 = r1 + h;
            let v0 = i0(r1, r2);
            let v1 = i1(r1, r2);
            m[(i, i)] += c * v0;
            let wl = c * (r2 * v0 - v1) / h;
            let wr = c * (v1 - r1 * v0) / h;
            if jj < n {
                m[(i, jj)] -= wl;
            }
            if jj + 1 < n {
                m[(i, jj + 1)] -= wr;
            }
        }
        // cells to the left, mirrored
        let mut jj: isize = i as isize - 1;
        while jj >= -1 {
            let r1 = (i as isize - jj - 1) as f64 * h;
            if r1 < h / 2.0 {
                jj -= 1;
                continue; // singular cell, already handled
            }
            let r2 = r1 + h;
            let v0 = i0(r1, r2);
            let v1 = i1(r1, r2);
            m[(i, i)] += c * v0;
            let wr = c * (r2 * v0 - v1) / h;
            let wl = c * (v1 - r1 * v0) / h;
            if jj + 1 >= 0 {
                m[(i, (jj + 1) as usize)] -= wr;
            }
            if jj >= 0 {
                m[(i, jj as usize)] -= wl;
            }
            jj -= 1;
        }
        // exterior tail (u = 0 outside)
        m[(i, i)] += c * ((xi - a).powf(-2.0 * s) + (b - xi).powf(-2.0 * s)) / (2.0 * s);
    }
    let mt = m.transpose();
    let m = (m + mt) * 0.5;
    Ok(RestrictedMatrix { mat: m, x, h, a, b, s })
}

/// Assemble from a model domain: the interval (0, L). Rectangles are not
/// supported by the restricted flavor.
pub fn assemble_restricted(domain: &ModelDomain, params: &PhysicalParams) -> Result<RestrictedMatrix> {
    match *domain {
        ModelDomain::Interval { length, grid_n } => {
            assemble_restricted_interval(0.0, length, grid_n, params.s)
        }
        _ => Err(Error::Unsupported("restricted flavor: interval domains only".into())),
    }
}

/// SPD dense solve with residual verification.
pub fn solve_restricted(rm: &RestrictedMatrix, rhs: &GridField) -> Result<GridField> {
    let n = rm.x.len();
    if rhs.values.len() != n {
        return Err(Error::InvalidParams("rhs length mismatch".into()));
    }
    let chol = Cholesky::new(rm.mat.clone())
        .ok_or_else(|| Error::Solver("restricted matrix not SPD".into()))?;
    let b = DVector::from_column_slice(&rhs.values);
    let u = chol.solve(&b);
    let res = (&rm.mat * &u - &b).abs().max();
    let bmax = b.abs().max().max(1e-300);
    if res > 1e-10 * bmax {
        return Err(Error::Solver(format!("restricted solve residual {res:.3e} too large")));
    }
    GridField::new(u.as_slice().to_vec(), rhs.domain)
}

/// Common interface over the two operator flavors on an interval grid, used
/// by the nonlinear solver and the blow-up harness.
pub trait FracOp {
    fn domain(&self) -> ModelDomain;
    /// Physical node coordinates.
    fn xs(&self) -> &[f64];
    fn h(&self) -> f64;
    fn order(&self) -> f64;
    fn apply(&self, u: &[f64]) -> Vec<f64>;
    fn solve(&self, rhs: &[f64]) -> Vec<f64>;
    /// Energy inner product ⟨Au, v⟩ with the h quadrature weight.
    fn inner(&self, u: &[f64], v: &[f64]) -> f64;
    fn energy(&self, u: &[f64]) -> f64 {
        self.inner(u, u)
    }
    fn flavor_norm(&self, u: &[f64]) -> f64 {
        self.energy(u).max(0.0).sqrt()
    }
    /// Principal eigenvalue and L²-normalized positive eigenfunction.
    fn principal(&self) -> (f64, Vec<f64>);
}

pub struct SpectralOp {
    domain: ModelDomain,
    dst: Dst1,
    lam_s: Vec<f64>,
    xs: Vec<f64>,
    h: f64,
    length: f64,
    s: f64,
}

impl SpectralOp {
    pub fn new(domain: ModelDomain, s: f64) -> Result<Self> {
        let lam_s = interval_eigs(&domain, s)?;
        let (length, grid_n) = match domain {
            ModelDomain::Interval { length, grid_n } => (length, grid_n),
            _ => unreachable!(),
        };
        Ok(SpectralOp {
            domain,
            dst: Dst1::new(grid_n),
            lam_s,
            xs: domain.grid(),
            h: domain.h(),
            length,
            s,
        })
    }

    fn analyze_raw(&self, u: &[f64]) -> Vec<f64> {
        let scale = self.h * (2.0 / self.length).sqrt();
        let mut c = self.dst.transform(u);
        for v in &mut c {
            *v *= scale;
        }
        c
    }

    fn synth_raw(&self, a: &[f64]) -> Vec<f64> {
        let scale = (2.0 / self.length).sqrt();
        let mut v = self.dst.transform(a);
        for w in &mut v {
            *w *= scale;
        }
        v
    }
}

impl FracOp for SpectralOp {
    fn domain(&self) -> ModelDomain {
        self.domain
    }
    fn xs(&self) -> &[f64] {
        &self.xs
    }
    fn h(&self) -> f64 {
        self.h
    }
    fn order(&self) -> f64 {
        self.s
    }
    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut a = self.analyze_raw(u);
        for (c, l) in a.iter_mut().zip(&self.lam_s) {
            *c *= l;
        }
        self.synth_raw(&a)
    }
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut a = self.analyze_raw(rhs);
        for (c, l) in a.iter_mut().zip(&self.lam_s) {
            *c /= l;
        }
        self.synth_raw(&a)
    }
    fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let au = self.analyze_raw(u);
        let av = self.analyze_raw(v);
        au.iter()
            .zip(&av)
            .zip(&self.lam_s)
            .map(|((cu, cv), l)| cu * cv * l)
            .sum()
    }
    fn principal(&self) -> (f64, Vec<f64>) {
        let pi = std::f64::consts::PI;
        let scale = (2.0 / self.length).sqrt();
        let phi = self.xs.iter().map(|&x| scale * (pi * x / self.length).sin()).collect();
        ((pi / self.length).powi(2).powf(self.s), phi)
    }
}

pub struct RestrictedOp {
    rm: RestrictedMatrix,
    chol: Cholesky<f64, Dyn>,
    domain: ModelDomain,
}

impl RestrictedOp {
    pub fn new(domain: ModelDomain, params: &PhysicalParams) -> Result<Self> {
        let rm = assemble_restricted(&domain, params)?;
        let chol = Cholesky::new(rm.mat.clone())
            .ok_or_else(|| Error::Solver("restricted matrix not SPD".into()))?;
        Ok(RestrictedOp { rm, chol, domain })
    }

    pub fn from_matrix(rm: RestrictedMatrix, domain: ModelDomain) -> Result<Self> {
        let chol = Cholesky::new(rm.mat.clone())
            .ok_or_else(|| Error::Solver("restricted matrix not SPD".into()))?;
        Ok(RestrictedOp { rm, chol, domain })
    }

    pub fn matrix(&self) -> &RestrictedMatrix {
        &self.rm
    }
}

impl FracOp for RestrictedOp {
    fn domain(&self) -> ModelDomain {
        self.domain
    }
    fn xs(&self) -> &[f64] {
        &self.rm.x
    }
    fn h(&self) -> f64 {
        self.rm.h
    }
    fn order(&self) -> f64 {
        self.rm.s
    }
    fn apply(&self, u: &[f64]) -> Vec<f64> {
        (&self.rm.mat * DVector::from_column_slice(u)).as_slice().to_vec()
    }
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.chol.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec()
    }
    fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let au = &self.rm.mat * DVector::from_column_slice(u);
        self.rm.h * au.dot(&DVector::from_column_slice(v))
    }
    fn principal(&self) -> (f64, Vec<f64>) {
        principal_by_inverse_iteration(&self.rm.mat, &self.chol, self.rm.h)
    }
}

fn principal_by_inverse_iteration(
    mat: &DMatrix<f64>,
    chol: &Cholesky<f64, Dyn>,
    h: f64,
) -> (f64, Vec<f64>) {
    let n = mat.nrows();
    let mut v = DVector::from_element(n, 1.0);
    let mut lam = 0.0;
    for _ in 0..500 {
        let w = chol.solve(&v);
        let norm = w.norm();
        let w = w / norm;
        lam = w.dot(&(mat * &w));
        let delta = (&w - &v).abs().max().min((&w + &v).abs().max());
        v = w;
        if delta < 1e-14 {
            break;
        }
    }
    if v.sum() < 0.0 {
        v = -v;
    }
    let l2 = (h * v.dot(&v)).sqrt();
    (lam, (v / l2).as_slice().to_vec())
}

/// Smallest eigenvalue of an assembled restricted matrix.
pub fn principal_eigenvalue(rm: &RestrictedMatrix) -> Result<f64> {
    let chol = Cholesky::new(rm.mat.clone())
        .ok_or_else(|| Error::Solver("restricted matrix not SPD".into()))?;
    Ok(principal_by_inverse_iteration(&rm.mat, &chol, rm.h).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{make_params, Flavor};
    use crate::spectral_basis::{analyze, GridField};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn spectral_diagonal_action() {
        let d = ModelDomain::interval(1.0, 32);
        let mut a = SpectralField { coeffs: vec![0.0; 32], domain: d };
        a.coeffs[0] = 1.0;
        let b = apply_spectral(&a, 0.5).unwrap();
        assert_relative_eq!(b.coeffs[0], PI, max_relative = 1e-14);

        // semigroup on the diagonal
        let f = GridField::from_fn(d, |x| (x * (1.0 - x)).powi(2)).unwrap();
        let af = analyze(&f, 32).unwrap();
        let once = apply_spectral(&af, 0.5).unwrap();
        let twice = apply_spectral(&apply_spectral(&af, 0.25).unwrap(), 0.25).unwrap();
        for (u, v) in once.coeffs.iter().zip(&twice.coeffs) {
            assert_relative_eq!(u, v, max_relative = 1e-12, epsilon = 1e-14);
        }

        // inverse round trip
        let back = solve_spectral(&once, 0.5).unwrap();
        for (u, v) in back.coeffs.iter().zip(&af.coeffs) {
            assert_relative_eq!(u, v, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn spectral_self_adjoint() {
        let d = ModelDomain::interval(1.0, 64);
        let op = SpectralOp::new(d, 0.25).unwrap();
        let u: Vec<f64> = d.grid().iter().map(|&x| (3.0 * PI * x).sin() + x * (1.0 - x)).collect();
        let v: Vec<f64> = d.grid().iter().map(|&x| (x * PI).sin().powi(2)).collect();
        let h = d.h();
        let lhs: f64 = op.apply(&u).iter().zip(&v).map(|(a, b)| a * b * h).sum();
        let rhs: f64 = op.apply(&v).iter().zip(&u).map(|(a, b)| a * b * h).sum();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
    }

    #[test]
    fn restricted_torsion_profile() {
        // action on (1-x^2)^s is the constant 2^{2s}Γ(1+s)Γ(1/2+s)/Γ(1/2);
        // checked away from the boundary (|x| <= 0.8) where the
        // piecewise-linear collocation resolves the profile
        let s = 0.25;
        let rm = assemble_restricted_interval(-1.0, 1.0, 256, s).unwrap();
        let u: Vec<f64> = rm.x.iter().map(|&x| (1.0 - x * x).powf(s)).collect();
        let v = &rm.mat * DVector::from_column_slice(&u);
        let konst = 2f64.powf(2.0 * s)
            * (math::ln_gamma(1.0 + s) + math::ln_gamma(0.5 + s) - math::ln_gamma(0.5)).exp();
        assert_relative_eq!(konst, 0.88622692545275801, max_relative = 1e-12);
        let max_rel = rm
            .x
            .iter()
            .zip(v.iter())
            .filter(|(x, _)| x.abs() <= 0.8)
            .map(|(_, a)| (a - konst).abs() / konst)
            .fold(0.0f64, f64::max);
        assert!(max_rel < 0.02, "torsion max rel err {max_rel}");
    }

    #[test]
    fn restricted_eigenvalue_half_laplacian() {
        // principal eigenvalue of (-Δ)^{1/2} on (-1,1); literature value
        let lit = 1.157773883;
        let mut vals = Vec::new();
        for n in [128usize, 256, 512] {
            let rm = assemble_restricted_interval(-1.0, 1.0, n, 0.5).unwrap();
            vals.push(principal_eigenvalue(&rm).unwrap());
        }
        let (l1, l2, l3) = (vals[0], vals[1], vals[2]);
        assert!((l3 - lit).abs() / lit < 0.02);
        let alpha = ((l1 - l2) / (l2 - l3)).ln() / 2f64.ln();
        let extrap = l3 + (l3 - l2) / (2f64.powf(alpha) - 1.0);
        assert!((extrap - lit).abs() / lit < 0.005, "extrapolated {extrap}");
    }

    #[test]
    fn restricted_solve_round_trip_and_torsion() {
        let s = 0.25;
        let d = ModelDomain::interval(2.0, 256);
        let params = make_params(1, s, 0.0, Flavor::Restricted).unwrap();
        let rm = assemble_restricted(&d, &params).unwrap();

        // symmetry after assembly
        let asym = (&rm.mat - rm.mat.transpose()).abs().max();
        assert!(asym < 1e-12);

        // round trip through a random-ish field
        let v: Vec<f64> = rm.x.iter().map(|&x| (1.3 * x).sin() * (2.0 - x) * x).collect();
        let av = &rm.mat * DVector::from_column_slice(&v);
        let rhs = GridField::new(av.as_slice().to_vec(), d).unwrap();
        let u = solve_restricted(&rm, &rhs).unwrap();
        let err = u.values.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        assert!(err < 1e-9, "round trip err {err}");

        // rhs = 1 -> torsion profile (domain (0,2) is the translated ball)
        let one = GridField::new(vec![1.0; 256], d).unwrap();
        let u = solve_restricted(&rm, &one).unwrap();
        let konst = 2f64.powf(2.0 * s)
            * (math::ln_gamma(1.0 + s) + math::ln_gamma(0.5 + s) - math::ln_gamma(0.5)).exp();
        let max_rel = rm
            .x
            .iter()
            .zip(&u.values)
            .filter(|(x, _)| (*x - 1.0).abs() <= 0.8)
            .map(|(x, a)| {
                let t = (1.0 - (x - 1.0) * (x - 1.0)).powf(s) / konst;
                (a - t).abs() / t
            })
            .fold(0.0f64, f64::max);
        assert!(max_rel < 0.02, "torsion solve max rel err {max_rel}");

        // zero rhs -> zero
        let zero = GridField::new(vec![0.0; 256], d).unwrap();
        let u = solve_restricted(&rm, &zero).unwrap();
        assert!(u.values.iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn principal_direction_defining_property() {
        let d = ModelDomain::interval(1.0, 64);
        let op = SpectralOp::new(d, 0.25).unwrap();
        let (lam, phi) = op.principal();
        let aphi = op.apply(&phi);
        for (a, p) in aphi.iter().zip(&phi) {
            assert_relative_eq!(*a, lam * p, max_relative = 1e-10, epsilon = 1e-12);
        }

        let params = make_params(1, 0.25, 0.0, Flavor::Restricted).unwrap();
        let rop = RestrictedOp::new(ModelDomain::interval(2.0, 128), &params).unwrap();
        let (lam, phi) = rop.principal();
        let aphi = rop.apply(&phi);
        let mut worst = 0.0f64;
        for (a, p) in aphi.iter().zip(&phi) {
            worst = worst.max((a - lam * p).abs());
        }
        assert!(worst < 1e-8 * lam, "eigen residual {worst}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn restricted_form_nonnegative(vals in proptest::collection::vec(-1.0f64..1.0, 32)) {
            let rm = assemble_restricted_interval(-1.0, 1.0, 32, 0.3).unwrap();
            let v = DVector::from_column_slice(&vals);
            let q = v.dot(&(&rm.mat * &v));
            let scale: f64 = vals.iter().map(|a| a * a).sum();
            prop_assert!(q >= -1e-12 * scale.max(1.0));
        }
    }
}
