//! The blow-up laboratory: peak extraction, sweep orchestration, and the
//! asymptotic identities (rate, λ^ε → 1, Green limit, Pohozaev, Φ-criticality)
//! measured along a continuation in ε.

use crate::bubbles::{bubble_1d, project_bubble, BubbleParams};
use crate::error::{Error, Result};
use crate::frac_op::FracOp;
use crate::greens::GreenFns;
use crate::math;
use crate::nonlinear_solver::{solve_subcritical, Init, SolveResult};
use crate::params::{Flavor, PhysicalParams, SharpConstants};
use crate::spectral_basis::GridField;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Peak {
    /// Amplitude-convention scale λ = (α/u(ξ))^{2/(N−2s)} (the paper's
    /// normalization of the bubble family).
    pub lambda_amp: f64,
    /// Scale after Gauss-Newton refinement of the projected-bubble fit in the
    /// flavor norm; first-order accurate where λ_amp carries the O(λ^{(N−2s)/2})
    /// boundary correction.
    pub lambda_fit: f64,
    pub x: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeakDecomposition {
    pub m: usize,
    pub peaks: Vec<Peak>,
    pub residual_fraction: f64,
    /// b_i = (λ_i/λ_1)^{(N−2s)/2}, amplitude convention, peak-sorted.
    pub b: Vec<f64>,
    pub colliding: bool,
}

impl PeakDecomposition {
    /// The harness label: a decomposition explains the field only when the
    /// remainder is small in the flavor norm.
    pub fn bubble_regime(&self) -> bool {
        self.residual_fraction < 0.2
    }
}

fn flavor_norm(op: &dyn FracOp, v: &[f64]) -> f64 {
    op.inner(v, v).max(0.0).sqrt()
}

fn model_field(
    op: &dyn FracOp,
    theta: &[f64], // (log λ_i, ξ_i) interleaved per peak
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> Vec<f64> {
    let mut out = vec![0.0; op.xs().len()];
    for pair in theta.chunks(2) {
        let bp = BubbleParams { lambda: pair[0].exp(), xi: vec![pair[1]] };
        let (pw, _) = project_bubble(&bp, op, params, consts);
        for (o, v) in out.iter_mut().zip(&pw.values) {
            *o += v;
        }
    }
    out
}

/// Detect local maxima, read λ off the amplitudes, then refine (λ_i, ξ_i) by
/// Gauss-Newton on the flavor norm of u − Σ Pw_{λ_i,ξ_i}.
pub fn extract_peaks(
    u: &GridField,
    op: &dyn FracOp,
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> Result<PeakDecomposition> {
    let xs = op.xs();
    let h = op.h();
    let vals = &u.values;
    let n = vals.len();
    let umax = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(umax > 0.0) {
        return Err(Error::InvalidParams("extract_peaks: nonpositive field".into()));
    }
    let ex = 2.0 / (params.n as f64 - 2.0 * params.s);
    let mut raw: Vec<(f64, f64, f64)> = Vec::new(); // (peak value, x, lambda_amp)
    for i in 1..n - 1 {
        if vals[i] > vals[i - 1] && vals[i] >= vals[i + 1] && vals[i] > 0.2 * umax {
            // sub-grid refinement on log u
            let (ym, y0, yp) = (vals[i - 1].ln(), vals[i].ln(), vals[i + 1].ln());
            let a = 0.5 * (yp + ym - 2.0 * y0);
            let bq = 0.5 * (yp - ym);
            let (dt, ypk) = if a < 0.0 {
                let t = (-bq / (2.0 * a)).clamp(-0.5, 0.5);
                (t, y0 + bq * t + a * t * t)
            } else {
                (0.0, y0)
            };
            let upk = ypk.exp();
            raw.push((upk, xs[i] + dt * h, (consts.alpha_ns / upk).powf(ex)));
        }
    }
    if raw.is_empty() {
        return Err(Error::InvalidParams("extract_peaks: no local maximum".into()));
    }
    raw.sort_by(|a, b| b.0.total_cmp(&a.0));
    // collision flagging at d_floor = 10h: keep the taller of any close pair
    let d_floor = 10.0 * h;
    let mut kept: Vec<(f64, f64, f64)> = Vec::new();
    let mut colliding = false;
    for r in raw {
        if kept.iter().any(|k| (k.1 - r.1).abs() < d_floor) {
            colliding = true;
        } else {
            kept.push(r);
        }
    }
    let m = kept.len();
    // Gauss-Newton in (log lambda, xi), FD Jacobian, in the flavor inner product
    let mut theta: Vec<f64> = kept.iter().flat_map(|k| [k.2.ln(), k.1]).collect();
    let unorm = flavor_norm(op, vals);
    let resid = |th: &[f64]| -> (Vec<f64>, f64) {
        let model = model_field(op, th, params, consts);
        let r: Vec<f64> = vals.iter().zip(&model).map(|(a, b)| a - b).collect();
        let nr = flavor_norm(op, &r);
        (r, nr)
    };
    let (mut r, mut rn) = resid(&theta);
    for _ in 0..10 {
        if rn < 1e-12 * unorm {
            break;
        }
        let np = theta.len();
        let deltas: Vec<f64> = theta
            .chunks(2)
            .flat_map(|pair| [1e-4, (1e-2 * pair[0].exp()).max(1e-3 * h)])
            .collect();
        let base = model_field(op, &theta, params, consts);
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(np);
        for j in 0..np {
            let mut th = theta.clone();
            th[j] += deltas[j];
            let pert = model_field(op, &th, params, consts);
            cols.push(
                pert.iter().zip(&base).map(|(a, b)| (a - b) / deltas[j]).collect(),
            );
        }
        // normal equations in the flavor inner product
        let mut a = DMatrix::zeros(np, np);
        let mut g = DVector::zeros(np);
        for j in 0..np {
            for k in j..np {
                let v = op.inner(&cols[j], &cols[k]);
                a[(j, k)] = v;
                a[(k, j)] = v;
            }
            g[j] = op.inner(&cols[j], &r);
        }
        let step = match a.lu().solve(&g) {
            Some(s) => s,
            None => break,
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..6 {
            let cand: Vec<f64> =
                theta.iter().enumerate().map(|(j, &v)| v + t * step[j]).collect();
            let (rc, rcn) = resid(&cand);
            if rcn < rn {
                theta = cand;
                r = rc;
                rn = rcn;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let peaks: Vec<Peak> = kept
        .iter()
        .zip(theta.chunks(2))
        .map(|(k, pair)| Peak { lambda_amp: k.2, lambda_fit: pair[0].exp(), x: pair[1] })
        .collect();
    let nm2s2 = (params.n as f64 - 2.0 * params.s) / 2.0;
    let b: Vec<f64> = peaks.iter().map(|p| (p.lambda_amp / peaks[0].lambda_amp).powf(nm2s2)).collect();
    Ok(PeakDecomposition { m, peaks, residual_fraction: rn / unorm, b, colliding })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub eps: f64,
    pub max_u: f64,
    pub energy: f64,
    pub residual_inf: f64,
    pub newton_iters: usize,
    pub decomposition: PeakDecomposition,
    pub pohozaev_lhs: f64,
    pub pohozaev_rhs: f64,
    pub pohozaev_gap: f64,
    /// max_i |λ_i^ε − 1| (fit convention)
    pub lambda_eps_dist: f64,
    pub green_limit_err: f64,
    /// per-entry eq-con2 residual max_i |b_i²H − Σ_{k≠i} b_i b_k G − (c2/2c1)b0|
    /// with this entry's own b0 = λ_1^{−(N−2s)}ε
    pub con2_residual: f64,
    /// smallest C with u ≤ C·w_{λ,ξ} over the grid
    pub pointwise_c: f64,
    /// log λ_1 vs log ε slope over the entries so far (needs ≥ 2)
    pub rate_so_far: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub flavor: Flavor,
    pub n: u32,
    pub s: f64,
    pub grid_n: usize,
    pub length: f64,
    pub entries: Vec<SweepEntry>,
}

/// Generators that can be paired with the solution in the Pohozaev/Green
/// trace identity.
#[derive(Debug, Clone, Copy)]
pub enum Generator {
    /// v = (x−y)·∇u + (2s/(q−1))u — pins down rates.
    Dilation,
    /// v = u — the identity degenerates to the weak energy identity.
    Identity,
    /// v = ∂_x u — both sides vanish on symmetric data with a centered ball.
    Translation,
}

/// 4th-order centered derivative; first/last two entries are not meaningful.
fn d4(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h);
    }
    d
}

pub fn pohozaev_generator(
    u: &GridField,
    op: &dyn FracOp,
    params: &PhysicalParams,
    center: f64,
    radius: f64,
    gen: Generator,
) -> Result<(f64, f64)> {
    let q = params.q();
    let h = op.h();
    let xs = op.xs();
    let n = xs.len();
    let vals = &u.values;
    let length = op.domain().diam();
    if let Generator::Identity = gen {
        let lhs = op.inner(vals, vals);
        let rhs = h * vals.iter().map(|&v| if v > 0.0 { v.powf(q + 1.0) } else { 0.0 }).sum::<f64>();
        return Ok((lhs, rhs));
    }
    if !(center - radius > 0.0 && center + radius < length) {
        return Err(Error::InvalidParams("pohozaev: ball touches the boundary".into()));
    }
    let au = op.apply(vals);
    let du = d4(vals, h);
    let dau = d4(&au, h);
    let c = 2.0 * params.s / (q - 1.0);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for i in 2..n - 2 {
        let y = xs[i] - center;
        if y.abs() >= radius {
            continue;
        }
        let (v, dnu_v) = match gen {
            Generator::Dilation => (
                y * du[i] + c * vals[i],
                y * dau[i] + 2.0 * params.s * au[i] + c * au[i],
            ),
            Generator::Translation => (du[i], dau[i]),
            Generator::Identity => unreachable!(),
        };
        lhs += -h * (au[i] * v - dnu_v * vals[i]);
        rhs += (q - 1.0) * h * (if vals[i] > 0.0 { vals[i].powf(q) } else { 0.0 }) * v;
    }
    Ok((lhs, rhs))
}

/// Trace form of the Pohozaev/Green identity with the dilation generator.
pub fn pohozaev_residual(
    u: &GridField,
    op: &dyn FracOp,
    params: &PhysicalParams,
    center: f64,
    radius: f64,
) -> Result<(f64, f64)> {
    pohozaev_generator(u, op, params, center, radius, Generator::Dilation)
}

fn green_limit_entry(
    u: &[f64],
    dec: &PeakDecomposition,
    op: &dyn FracOp,
    gf: &GreenFns,
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> f64 {
    let length = op.domain().diam();
    let xs = op.xs();
    let h = op.h();
    let nm2s2 = (params.n as f64 - 2.0 * params.s) / 2.0;
    let lam1 = dec.peaks[0].lambda_fit;
    let r_test = 0.15 * length;
    let mut worst: f64 = 0.0;
    for frac in [0.1, 0.25, 0.75, 0.9] {
        let x = frac * length;
        if dec.peaks.iter().any(|p| (x - p.x).abs() < r_test) {
            continue;
        }
        let i = ((x / h).round() as usize).clamp(1, xs.len()) - 1;
        let lhs = lam1.powf(-nm2s2) * u[i];
        let rhs: f64 = consts.c1
            * dec
                .b
                .iter()
                .zip(&dec.peaks)
                .map(|(b, p)| b * gf.g(xs[i], p.x))
                .sum::<f64>();
        worst = worst.max((lhs - rhs).abs() / rhs.abs());
    }
    worst
}

fn con2_entry(dec: &PeakDecomposition, eps: f64, gf: &GreenFns, params: &PhysicalParams, consts: &SharpConstants) -> f64 {
    let nm2s = params.n as f64 - 2.0 * params.s;
    let b0 = dec.peaks[0].lambda_amp.powf(-nm2s) * eps;
    let target = consts.c2 / (2.0 * consts.c1) * b0;
    let mut worst: f64 = 0.0;
    for i in 0..dec.m {
        let mut cross = 0.0;
        for k in 0..dec.m {
            if k != i {
                cross += dec.b[i] * dec.b[k] * gf.g(dec.peaks[i].x, dec.peaks[k].x);
            }
        }
        let r = dec.b[i] * dec.b[i] * gf.robin(dec.peaks[i].x) - cross - target;
        worst = worst.max(r.abs());
    }
    worst
}

fn pointwise_c(u: &[f64], dec: &PeakDecomposition, xs: &[f64], params: &PhysicalParams, consts: &SharpConstants) -> f64 {
    // single-peak envelope with the nearest peak's scale
    let mut c: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let env: f64 = dec
            .peaks
            .iter()
            .map(|p| bubble_1d(p.lambda_amp, p.x, x, params, consts))
            .fold(0.0, f64::max);
        c = c.max(u[i] / env);
    }
    c
}

/// Full diagnostic sweep: continuation from `eps_start` by `ratio`, stopping
/// when the fitted scale falls under 5 grid cells (the resolution floor).
pub fn run_sweep(
    op: &dyn FracOp,
    params: &PhysicalParams,
    eps_start: f64,
    ratio: f64,
    consts: &SharpConstants,
) -> Result<SweepRecord> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParams("sweep ratio must be in (0,1)".into()));
    }
    let gf = GreenFns::new(op.domain(), params)?;
    let length = op.domain().diam();
    let h = op.h();
    let mut entries: Vec<SweepEntry> = Vec::new();
    let mut eps = eps_start;
    let mut warm: Option<Vec<f64>> = None;
    let mut log_l: Vec<f64> = Vec::new();
    let mut log_e: Vec<f64> = Vec::new();
    loop {
        let pp = params.with_eps(eps)?;
        let sol: SolveResult = match warm.take() {
            None => solve_subcritical(op, &pp, Init::Eigenfunction, &[eps])?.remove(0),
            Some(w) => match solve_subcritical(op, &pp, Init::Field(w.clone()), &[eps]) {
                Ok(mut v) => v.remove(0),
                Err(_) => break, // continuation frontier
            },
        };
        let dec = extract_peaks(&sol.u, op, params, consts)?;
        if dec.peaks[0].lambda_fit < 5.0 * h {
            break; // below the resolution floor: do not record
        }
        let (pl, pr) = pohozaev_residual(&sol.u, op, &pp, 0.5 * length, 0.4 * length)?;
        let lam_dist = dec
            .peaks
            .iter()
            .map(|p| (p.lambda_fit.powf(eps) - 1.0).abs())
            .fold(0.0f64, f64::max);
        log_l.push(dec.peaks[0].lambda_fit.ln());
        log_e.push(eps.ln());
        let rate_so_far = if log_l.len() >= 2 { math::ls_slope(&log_e, &log_l).0 } else { f64::NAN };
        let max_u = sol.u.values.iter().cloned().fold(0.0f64, f64::max);
        entries.push(SweepEntry {
            eps,
            max_u,
            energy: sol.energy,
            residual_inf: sol.residual_inf,
            newton_iters: sol.newton_iters,
            pohozaev_lhs: pl,
            pohozaev_rhs: pr,
            pohozaev_gap: (pl - pr).abs() / pr.abs(),
            lambda_eps_dist: lam_dist,
            green_limit_err: green_limit_entry(&sol.u.values, &dec, op, &gf, params, consts),
            con2_residual: con2_entry(&dec, eps, &gf, params, consts),
            pointwise_c: pointwise_c(&sol.u.values, &dec, op.xs(), params, consts),
            rate_so_far,
            decomposition: dec,
        });
        warm = Some(sol.u.values);
        eps *= ratio;
        if eps < 1e-4 {
            break;
        }
    }
    if entries.is_empty() {
        return Err(Error::Solver("sweep produced no resolved entries".into()));
    }
    Ok(SweepRecord {
        flavor: params.flavor,
        n: params.n,
        s: params.s,
        grid_n: op.domain().n_total(),
        length,
        entries,
    })
}

/// Least-squares slope of log λ_1 against log ε over the last 5 entries.
pub fn rate_fit(record: &SweepRecord) -> Result<(f64, f64)> {
    let tail: Vec<&SweepEntry> = record.entries.iter().rev().take(5).collect();
    if tail.len() < 5 {
        return Err(Error::InvalidParams(format!(
            "rate_fit needs >= 5 entries, got {}",
            record.entries.len()
        )));
    }
    let xs: Vec<f64> = tail.iter().map(|e| e.eps.ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|e| e.decomposition.peaks[0].lambda_fit.ln()).collect();
    Ok(math::ls_slope(&xs, &ys))
}

/// max_i |λ_i^ε − 1| at the smallest ε.
pub fn lambda_eps_check(record: &SweepRecord) -> f64 {
    record.entries.last().map(|e| e.lambda_eps_dist).unwrap_or(f64::NAN)
}

/// Green-limit mismatch at the smallest ε.
pub fn green_limit_check(record: &SweepRecord) -> f64 {
    record.entries.last().map(|e| e.green_limit_err).unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiReport {
    /// b0 = λ_1^{−(N−2s)}ε fitted over the last 3 entries
    pub b0: f64,
    /// ∥∇Φ∥∞ at each entry's measured configuration
    pub grad_inf: Vec<f64>,
    /// per-entry eq-con2 residual
    pub con2: Vec<f64>,
    /// measured λ_1^{N−2s} / (ε·c2 / (2c1·H(x₁,x₁))) at the last entry
    pub lambda_closed_form_ratio: f64,
}

pub fn phi_criticality_check(
    record: &SweepRecord,
    gf: &GreenFns,
    params: &PhysicalParams,
    consts: &SharpConstants,
) -> Result<PhiReport> {
    let nm2s = params.n as f64 - 2.0 * params.s;
    let k = record.entries.len();
    if k < 3 {
        return Err(Error::InvalidParams("phi check needs >= 3 entries".into()));
    }
    let prods: Vec<f64> = record
        .entries
        .iter()
        .map(|e| e.decomposition.peaks[0].lambda_amp.powf(-nm2s) * e.eps)
        .collect();
    let tail = &prods[k - 3..];
    let b0 = tail.iter().sum::<f64>() / 3.0;
    let spread = tail.iter().fold(0.0f64, |a, &v| a.max((v - b0).abs()));
    if spread > 0.5 * b0 {
        return Err(Error::NotConverged(format!("b0 extrapolation unstable: {tail:?}")));
    }
    let mut grad_inf = Vec::with_capacity(k);
    let mut con2 = Vec::with_capacity(k);
    for e in &record.entries {
        let dec = &e.decomposition;
        let pt = crate::greens::PhiPoint {
            b: dec.b.clone(),
            x: dec.peaks.iter().map(|p| p.x).collect(),
            b0: dec.peaks[0].lambda_amp.powf(-nm2s) * e.eps,
        };
        let g = crate::greens::phi_grad(&pt, gf, consts)?;
        grad_inf.push(g.iter().fold(0.0f64, |a, &v| a.max(v.abs())));
        con2.push(e.con2_residual);
    }
    let last = record.entries.last().unwrap();
    let x1 = last.decomposition.peaks[0].x;
    let lam1 = last.decomposition.peaks[0].lambda_amp;
    let closed = last.eps * consts.c2 / (2.0 * consts.c1 * gf.robin(x1));
    Ok(PhiReport {
        b0,
        grad_inf,
        con2,
        lambda_closed_form_ratio: lam1.powf(nm2s) / closed,
    })
}

/// Per-ε CSV rows for plotting.
pub fn write_sweep_csv<W: std::io::Write>(record: &SweepRecord, mut w: W) -> Result<()> {
    writeln!(w, "eps,max_u,lambda_1,x_1,residual_fraction,rate_so_far,con2_residual")?;
    for e in &record.entries {
        let p = &e.decomposition.peaks[0];
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            e.eps, e.max_u, p.lambda_fit, p.x, e.decomposition.residual_fraction, e.rate_so_far, e.con2_residual
        )?;
    }
    Ok(())
}
