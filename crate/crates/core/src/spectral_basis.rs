//! Dirichlet eigenbasis of −Δ on model domains and the transforms between
//! nodal and spectral representations.
//!
//! Grids are interior-uniform: x_j = j·L/(n+1), j = 1..n, with the zero
//! boundary values implicit. On such a grid the discrete sine transform is
//! exactly orthogonal, so analyze/synthesize round-trip exactly and the
//! spectral operator is diagonal.

use crate::error::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelDomain {
    Interval { length: f64, grid_n: usize },
    Rectangle { lengths: (f64, f64), grid_n: (usize, usize) },
}

impl ModelDomain {
    pub fn interval(length: f64, grid_n: usize) -> Self {
        ModelDomain::Interval { length, grid_n }
    }

    pub fn diam(&self) -> f64 {
        match *self {
            ModelDomain::Interval { length, .. } => length,
            ModelDomain::Rectangle { lengths, .. } => lengths.0.hypot(lengths.1),
        }
    }

    pub fn n_total(&self) -> usize {
        match *self {
            ModelDomain::Interval { grid_n, .. } => grid_n,
            ModelDomain::Rectangle { grid_n, .. } => grid_n.0 * grid_n.1,
        }
    }

    /// Grid spacing (per axis for rectangles, which are required uniform-h).
    pub fn h(&self) -> f64 {
        match *self {
            ModelDomain::Interval { length, grid_n } => length / (grid_n + 1) as f64,
            ModelDomain::Rectangle { lengths, grid_n } => lengths.0 / (grid_n.0 + 1) as f64,
        }
    }

    /// Interior grid coordinates along the first axis.
    pub fn grid(&self) -> Vec<f64> {
        match *self {
            ModelDomain::Interval { length, grid_n } => {
                let h = length / (grid_n + 1) as f64;
                (1..=grid_n).map(|j| j as f64 * h).collect()
            }
            ModelDomain::Rectangle { lengths, grid_n } => {
                let h = lengths.0 / (grid_n.0 + 1) as f64;
                (1..=grid_n.0).map(|j| j as f64 * h).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridField {
    pub values: Vec<f64>,
    pub domain: ModelDomain,
}

impl GridField {
    pub fn new(values: Vec<f64>, domain: ModelDomain) -> Result<Self> {
        if values.len() != domain.n_total() {
            return Err(Error::InvalidParams(format!(
                "field length {} does not match domain ({} nodes)",
                values.len(),
                domain.n_total()
            )));
        }
        Ok(GridField { values, domain })
    }

    pub fn from_fn(domain: ModelDomain, f: impl Fn(f64) -> f64) -> Result<Self> {
        match domain {
            ModelDomain::Interval { .. } => {
                let values = domain.grid().into_iter().map(f).collect();
                Ok(GridField { values, domain })
            }
            _ => Err(Error::Unsupported("from_fn: interval domains only".into())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralField {
    pub coeffs: Vec<f64>,
    pub domain: ModelDomain,
}

/// Eigenpair of −Δ with zero Dirichlet data: eigenvalue and an evaluator for
/// the L²-normalized eigenfunction.
pub struct EigenFunction {
    domain: ModelDomain,
    index: Vec<usize>,
}

impl EigenFunction {
    pub fn eval(&self, point: &[f64]) -> f64 {
        match self.domain {
            ModelDomain::Interval { length, .. } => {
                let k = self.index[0] as f64;
                (2.0 / length).sqrt() * (k * std::f64::consts::PI * point[0] / length).sin()
            }
            ModelDomain::Rectangle { lengths, .. } => {
                let (k1, k2) = (self.index[0] as f64, self.index[1] as f64);
                let pi = std::f64::consts::PI;
                (2.0 / lengths.0).sqrt()
                    * (k1 * pi * point[0] / lengths.0).sin()
                    * (2.0 / lengths.1).sqrt()
                    * (k2 * pi * point[1] / lengths.1).sin()
            }
        }
    }
}

pub fn eigenpair(domain: ModelDomain, index: &[usize]) -> Result<(f64, EigenFunction)> {
    let pi = std::f64::consts::PI;
    let lambda = match domain {
        ModelDomain::Interval { length, .. } => {
            if index.len() != 1 || index[0] < 1 {
                return Err(Error::InvalidParams("interval index must be a single k >= 1".into()));
            }
            (index[0] as f64 * pi / length).powi(2)
        }
        ModelDomain::Rectangle { lengths, .. } => {
            if index.len() != 2 || index[0] < 1 || index[1] < 1 {
                return Err(Error::InvalidParams("rectangle index must be (k1, k2) >= 1".into()));
            }
            (index[0] as f64 * pi / lengths.0).powi(2) + (index[1] as f64 * pi / lengths.1).powi(2)
        }
    };
    Ok((
        lambda,
        EigenFunction { domain, index: index.to_vec() },
    ))
}

/// Unnormalized DST-I of length n: S_k = Σ_{j=1}^n f_j sin(πjk/(n+1)),
/// computed through an odd-extended complex FFT of length 2(n+1).
pub struct Dst1 {
    fft: Arc<dyn Fft<f64>>,
    n: usize,
}

impl Dst1 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(2 * (n + 1));
        Dst1 { fft, n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn transform(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n);
        let m = 2 * (self.n + 1);
        let mut buf = vec![Complex { re: 0.0, im: 0.0 }; m];
        for (j, &v) in f.iter().enumerate() {
            buf[j + 1].re = v;
            buf[m - 1 - j].re = -v;
        }
        self.fft.process(&mut buf);
        (1..=self.n).map(|k| -0.5 * buf[k].im).collect()
    }
}

fn interval_of(domain: &ModelDomain) -> Result<(f64, usize)> {
    match *domain {
        ModelDomain::Interval { length, grid_n } => Ok((length, grid_n)),
        _ => Err(Error::Unsupported("transforms: interval domains only".into())),
    }
}

/// Forward transform: a_k = h·√(2/L)·Σ_j f_j φ_k(x_j), truncated to K modes.
pub fn analyze(f: &GridField, k_modes: usize) -> Result<SpectralField> {
    let (length, grid_n) = interval_of(&f.domain)?;
    if k_modes > grid_n {
        return Err(Error::InvalidParams(format!("K = {k_modes} exceeds grid_n = {grid_n}")));
    }
    let h = length / (grid_n + 1) as f64;
    let dst = Dst1::new(grid_n);
    let scale = h * (2.0 / length).sqrt();
    let mut coeffs = dst.transform(&f.values);
    coeffs.truncate(k_modes);
    for c in &mut coeffs {
        *c *= scale;
    }
    Ok(SpectralField { coeffs, domain: f.domain })
}

/// Inverse transform: f(x_j) = √(2/L)·Σ_k a_k sin(kπx_j/L).
pub fn synthesize(a: &SpectralField) -> Result<GridField> {
    let (length, grid_n) = interval_of(&a.domain)?;
    if a.coeffs.len() > grid_n {
        return Err(Error::InvalidParams("more coefficients than grid modes".into()));
    }
    let mut padded = a.coeffs.clone();
    padded.resize(grid_n, 0.0);
    let dst = Dst1::new(grid_n);
    let scale = (2.0 / length).sqrt();
    let mut values = dst.transform(&padded);
    for v in &mut values {
        *v *= scale;
    }
    Ok(GridField { values, domain: a.domain })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const PI: f64 = std::f64::consts::PI;

    fn dom(n: usize) -> ModelDomain {
        ModelDomain::interval(1.0, n)
    }

    #[test]
    fn eigenpairs_interval() {
        let (l1, phi1) = eigenpair(dom(64), &[1]).unwrap();
        assert_relative_eq!(l1, PI * PI, max_relative = 1e-14);
        assert_relative_eq!(phi1.eval(&[0.5]), 2f64.sqrt(), max_relative = 1e-14);
        let (_, phi2) = eigenpair(dom(64), &[2]).unwrap();
        assert!(phi2.eval(&[0.5]).abs() < 1e-14);
    }

    #[test]
    fn eigenpair_rectangle() {
        let d = ModelDomain::Rectangle { lengths: (1.0, 1.0), grid_n: (8, 8) };
        let (l, _) = eigenpair(d, &[1, 1]).unwrap();
        assert_relative_eq!(l, 2.0 * PI * PI, max_relative = 1e-14);
    }

    #[test]
    fn analyze_picks_out_modes() {
        let d = dom(128);
        let f = GridField::from_fn(d, |x| 2f64.sqrt() * (3.0 * PI * x).sin()).unwrap();
        let a = analyze(&f, 128).unwrap();
        for (k, &c) in a.coeffs.iter().enumerate() {
            let expect = if k == 2 { 1.0 } else { 0.0 };
            assert!((c - expect).abs() < 1e-12, "mode {}: {}", k + 1, c);
        }
        let zero = GridField::new(vec![0.0; 128], d).unwrap();
        assert!(analyze(&zero, 128).unwrap().coeffs.iter().all(|&c| c == 0.0));
        assert!(analyze(&f, 129).is_err());
    }

    #[test]
    fn discrete_parseval_and_orthonormality() {
        let d = dom(200);
        let h = d.h();
        let f = GridField::from_fn(d, |x| (PI * x).sin() + 0.3 * (7.0 * PI * x).sin()).unwrap();
        let a = analyze(&f, 200).unwrap();
        let lhs: f64 = f.values.iter().map(|v| v * v * h).sum();
        let rhs: f64 = a.coeffs.iter().map(|c| c * c).sum();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-10);

        let (_, p3) = eigenpair(d, &[3]).unwrap();
        let (_, p5) = eigenpair(d, &[5]).unwrap();
        let xs = d.grid();
        let dot33: f64 = xs.iter().map(|&x| p3.eval(&[x]) * p3.eval(&[x]) * h).sum();
        let dot35: f64 = xs.iter().map(|&x| p3.eval(&[x]) * p5.eval(&[x]) * h).sum();
        assert_relative_eq!(dot33, 1.0, max_relative = 1e-10);
        assert!(dot35.abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(vals in proptest::collection::vec(-10.0f64..10.0, 64)) {
            let d = dom(64);
            let f = GridField::new(vals, d).unwrap();
            let g = synthesize(&analyze(&f, 64).unwrap()).unwrap();
            for (a, b) in f.values.iter().zip(&g.values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
