//! fraclab — command-line front end. Every verification is a subcommand;
//! outputs are CSV/JSON for external plotting. Exit codes: 0 ok, 1 numerical
//! check failure (under `verify`), 2 usage errors (clap's default).

use clap::{Args, Parser, Subcommand};
use fraclab_core::blowup_lab::{self, SweepRecord};
use fraclab_core::frac_op::{assemble_restricted, FracOp, RestrictedOp, SpectralOp};
use fraclab_core::greens::{build_green_table, phi_critical, GreenFns, PhiPoint};
use fraclab_core::nonlinear_solver::{solve_subcritical, Init, SolveResult};
use fraclab_core::params::{make_params, sharp_constants, Flavor, PhysicalParams};
use fraclab_core::spectral_basis::ModelDomain;
use fraclab_core::suite::{self, CriterionReport};
use serde::Serialize;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "fraclab", version, about = "Blow-up laboratory for the fractional Lane-Emden-Fowler problem")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the sharp constants for (N, s)
    Constants(ConstantsArgs),
    /// Emit the Green-function probe table as CSV
    Green(ProblemArgs),
    /// Bubble-family checks: Sobolev quotient, Kelvin, projected-bubble expansion
    Bubble,
    /// Solve (−Δ)^s u = u^{p−ε} at a single ε
    Solve(SolveArgs),
    /// Full blow-up sweep with diagnostics (JSON + CSV out)
    Sweep(SweepArgs),
    /// Critical points of the reduced function Φ_m
    Phi(PhiArgs),
    /// Run the acceptance suite
    Verify(VerifyArgs),
}

#[derive(Args, Clone, Default)]
struct ProblemArgs {
    /// TOML config file; flags override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dimension N
    #[arg(long)]
    n: Option<u32>,
    /// Fractional order s
    #[arg(long)]
    s: Option<f64>,
    /// Operator flavor: spectral | restricted
    #[arg(long)]
    flavor: Option<String>,
    /// Interval length
    #[arg(long)]
    length: Option<f64>,
    /// Interior grid size
    #[arg(long)]
    grid_n: Option<usize>,
    /// Output path (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ConstantsArgs {
    #[command(flatten)]
    prob: ProblemArgs,
    /// Emit JSON instead of the text table
    #[arg(long)]
    json: bool,
}

#[derive(Args, Clone)]
struct SolveArgs {
    #[command(flatten)]
    prob: ProblemArgs,
    /// Subcritical offset ε
    #[arg(long)]
    eps: Option<f64>,
    /// CSV output path for (x, u)
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// JSON sidecar path for the solve metadata
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[command(flatten)]
    prob: ProblemArgs,
    #[arg(long)]
    eps_start: Option<f64>,
    /// Geometric ratio of the ε schedule
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct PhiArgs {
    #[command(flatten)]
    prob: ProblemArgs,
    /// Peak positions of the starting configuration
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    x: Vec<f64>,
    /// Starting weights b (defaults to 1 per peak)
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    b: Vec<f64>,
    /// The parameter b0 of Φ
    #[arg(long, default_value_t = 1.0)]
    b0: f64,
}

#[derive(Args, Clone)]
struct VerifyArgs {
    /// Reduced suite: skips the two sweeps and the waived asymptotic clauses
    #[arg(long)]
    quick: bool,
    /// Worker-thread cap for independent criteria (default: machine parallelism)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Default, serde::Deserialize)]
struct FileCfg {
    n: Option<u32>,
    s: Option<f64>,
    flavor: Option<String>,
    length: Option<f64>,
    grid_n: Option<usize>,
    eps: Option<f64>,
    eps_start: Option<f64>,
    ratio: Option<f64>,
}

fn load_cfg(path: &Option<PathBuf>) -> Result<FileCfg, String> {
    match path {
        None => Ok(FileCfg::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("config {}: {e}", p.display()))?;
            toml::from_str(&text).map_err(|e| format!("config {}: {e}", p.display()))
        }
    }
}

struct Resolved {
    params: PhysicalParams,
    domain: ModelDomain,
    cfg: FileCfg,
}

fn resolve(prob: &ProblemArgs, eps: f64) -> Result<Resolved, String> {
    let cfg = load_cfg(&prob.config)?;
    let n = prob.n.or(cfg.n).unwrap_or(1);
    let s = prob.s.or(cfg.s).unwrap_or(0.25);
    let flavor_str = prob.flavor.clone().or_else(|| cfg.flavor.clone()).unwrap_or_else(|| "spectral".into());
    let flavor = Flavor::from_str(&flavor_str).map_err(|e| e.to_string())?;
    let length = prob.length.or(cfg.length).unwrap_or(1.0);
    let grid_n = prob.grid_n.or(cfg.grid_n).unwrap_or(1024);
    let params = make_params(n, s, eps, flavor).map_err(|e| e.to_string())?;
    Ok(Resolved { params, domain: ModelDomain::interval(length, grid_n), cfg })
}

fn make_op(r: &Resolved) -> Result<Box<dyn FracOp>, String> {
    match r.params.flavor {
        Flavor::Spectral => Ok(Box::new(SpectralOp::new(r.domain, r.params.s).map_err(|e| e.to_string())?)),
        Flavor::Restricted => {
            let rm = assemble_restricted(&r.domain, &r.params).map_err(|e| e.to_string())?;
            Ok(Box::new(RestrictedOp::from_matrix(rm, r.domain).map_err(|e| e.to_string())?))
        }
    }
}

/// serde_json formatter printing every float at 17 significant digits, so the
/// serialized value round-trips exactly and is byte-stable across runs.
struct F17;

impl serde_json::ser::Formatter for F17 {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + std::io::Write>(&mut self, w: &mut W, value: f32) -> std::io::Result<()> {
        write!(w, "{value:.16e}")
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, F17);
    value.serialize(&mut ser).expect("json serialization");
    out.push(b'\n');
    String::from_utf8(out).expect("json utf8")
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), String> {
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
    }
}

fn cmd_constants(a: &ConstantsArgs) -> Result<(), String> {
    let r = resolve(&a.prob, 0.0)?;
    let c = sharp_constants(&r.params).map_err(|e| e.to_string())?;
    let text = if a.json {
        to_json(&c)
    } else {
        let mut t = format!("N = {}, s = {}, p = {:.16e}\n", r.params.n, r.params.s, r.params.p);
        for (name, v) in [
            ("c_Ns       (eq-frac normalization)", c.c_ns),
            ("kappa_s    (extension normalization)", c.kappa_s),
            ("p_Ns       (Poisson kernel)", c.p_ns),
            ("gamma_Ns   (Green singularity)", c.gamma_ns),
            ("alpha_Ns   (bubble amplitude)", c.alpha_ns),
            ("S_Ns       (sharp Sobolev)", c.s_ns),
            ("c1 = int w^p", c.c1),
            ("c2", c.c2),
            ("c3 = c1 gamma_Ns", c.c3),
            ("int w^{p+1}", c.int_w_p1),
        ] {
            t.push_str(&format!("{name:<40} {v:.16e}\n"));
        }
        t
    };
    emit(&a.prob.out, &text)
}

fn cmd_green(a: &ProblemArgs) -> Result<(), String> {
    let r = resolve(a, 0.0)?;
    let table = build_green_table(r.domain, &r.params).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(|e| e.to_string())?;
    emit(&a.out, &String::from_utf8(buf).expect("csv utf8"))
}

fn cmd_bubble() -> Result<(), String> {
    let rep = suite::criterion_4().map_err(|e| e.to_string())?;
    print_report(&rep, false);
    if rep.clean() {
        Ok(())
    } else {
        std::process::exit(1);
    }
}

#[derive(Serialize)]
struct SolveMeta {
    n: u32,
    s: f64,
    flavor: Flavor,
    length: f64,
    grid_n: usize,
    eps: f64,
    newton_iters: usize,
    residual_inf: f64,
    energy: f64,
    positive: bool,
    max_u: f64,
}

fn cmd_solve(a: &SolveArgs) -> Result<(), String> {
    let r0 = resolve(&a.prob, 0.0)?;
    let eps = a.eps.or(r0.cfg.eps).unwrap_or(0.5);
    let r = resolve(&a.prob, eps)?;
    let op = make_op(&r)?;
    let sol: SolveResult = solve_subcritical(op.as_ref(), &r.params, Init::Eigenfunction, &[eps])
        .map_err(|e| e.to_string())?
        .remove(0);
    let mut csv = String::from("x,u\r\n");
    for (x, u) in op.xs().iter().zip(&sol.u.values) {
        csv.push_str(&format!("{x:.16e},{u:.16e}\r\n"));
    }
    if a.out_csv.is_some() {
        emit(&a.out_csv, &csv)?;
    }
    let meta = SolveMeta {
        n: r.params.n,
        s: r.params.s,
        flavor: r.params.flavor,
        length: r.domain.diam(),
        grid_n: r.domain.n_total(),
        eps,
        newton_iters: sol.newton_iters,
        residual_inf: sol.residual_inf,
        energy: sol.energy,
        positive: sol.positive,
        max_u: sol.u.values.iter().cloned().fold(0.0, f64::max),
    };
    // metadata goes to --out-json if given, otherwise stdout
    emit(&a.out_json, &to_json(&meta))
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), String> {
    let r0 = resolve(&a.prob, 0.0)?;
    let eps_start = a.eps_start.or(r0.cfg.eps_start).unwrap_or(1.0);
    let ratio = a.ratio.or(r0.cfg.ratio).unwrap_or(0.8);
    let r = resolve(&a.prob, eps_start)?;
    let c = sharp_constants(&r.params).map_err(|e| e.to_string())?;
    let op = make_op(&r)?;
    let record: SweepRecord =
        blowup_lab::run_sweep(op.as_ref(), &r.params, eps_start, ratio, &c).map_err(|e| e.to_string())?;
    let mut csv = Vec::new();
    blowup_lab::write_sweep_csv(&record, &mut csv).map_err(|e| e.to_string())?;
    match (&a.out_json, &a.out_csv) {
        (None, None) => emit(&None, &to_json(&record)),
        _ => {
            if a.out_json.is_some() {
                emit(&a.out_json, &to_json(&record))?;
            }
            if a.out_csv.is_some() {
                emit(&a.out_csv, &String::from_utf8(csv).expect("csv utf8"))?;
            }
            Ok(())
        }
    }
}

fn cmd_phi(a: &PhiArgs) -> Result<(), String> {
    let r = resolve(&a.prob, 0.0)?;
    let gf = GreenFns::new(r.domain, &r.params).map_err(|e| e.to_string())?;
    let c = sharp_constants(&r.params).map_err(|e| e.to_string())?;
    let x = if a.x.is_empty() { vec![0.45 * r.domain.diam()] } else { a.x.clone() };
    let b = if a.b.is_empty() { vec![1.0; x.len()] } else { a.b.clone() };
    let start = PhiPoint { b, x, b0: a.b0 };
    let cp = phi_critical(&start, &gf, &c).map_err(|e| e.to_string())?;
    print!("{}", to_json(&cp));
    Ok(())
}

fn print_report(r: &CriterionReport, quick: bool) {
    let shown: Vec<_> = r.checks.iter().filter(|c| !(quick && c.waived)).collect();
    let all_pass = shown.iter().all(|c| c.passed);
    let status = if all_pass { "PASS" } else { "FAIL" };
    println!("criterion {} ({}): {} [{:.1}s]", r.index, r.title, status, r.elapsed_s);
    for c in &r.checks {
        if quick && c.waived {
            println!("    SKIP (waived asymptotic clause): {}", c.name);
        } else if !c.passed {
            let tag = if c.waived { "FAIL (waived at desk scale)" } else { "FAIL" };
            println!("    {tag}: {} — {}", c.name, c.detail);
        }
    }
}

fn cmd_verify(a: &VerifyArgs) -> Result<(), String> {
    let threads = a
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|t| t.get()).unwrap_or(1))
        .max(1);
    type Task = Box<dyn FnOnce() -> Result<Vec<CriterionReport>, String> + Send>;
    let mut tasks: Vec<Task> = vec![
        Box::new(|| suite::criterion_1().map(|r| vec![r]).map_err(|e| e.to_string())),
        Box::new(|| suite::criterion_2().map(|r| vec![r]).map_err(|e| e.to_string())),
        Box::new(|| suite::criterion_3().map(|r| vec![r]).map_err(|e| e.to_string())),
        Box::new(|| suite::criterion_4().map(|r| vec![r]).map_err(|e| e.to_string())),
        Box::new(|| suite::criterion_5().map(|r| vec![r]).map_err(|e| e.to_string())),
    ];
    if a.quick {
        tasks.push(Box::new(|| suite::criterion_8(None).map(|r| vec![r]).map_err(|e| e.to_string())));
    } else {
        tasks.push(Box::new(|| {
            let (c6, record) = suite::criterion_6().map_err(|e| e.to_string())?;
            let c8 = suite::criterion_8(Some(&record)).map_err(|e| e.to_string())?;
            Ok(vec![c6, c8])
        }));
        tasks.push(Box::new(|| suite::criterion_7().map(|r| vec![r]).map_err(|e| e.to_string())));
    }
    // bounded worker pool over a shared queue; output is re-sorted by index
    // so it is independent of thread count
    let queue = std::sync::Mutex::new(tasks.into_iter());
    let results = std::sync::Mutex::new(Vec::<Result<Vec<CriterionReport>, String>>::new());
    std::thread::scope(|scope| {
        for _ in 0..threads.min(7) {
            scope.spawn(|| loop {
                let task = { queue.lock().unwrap().next() };
                match task {
                    Some(t) => {
                        let r = t();
                        results.lock().unwrap().push(r);
                    }
                    None => break,
                }
            });
        }
    });
    let mut reports = Vec::new();
    for r in results.into_inner().unwrap() {
        reports.extend(r?);
    }
    reports.sort_by_key(|r| r.index);
    let mut fail = false;
    for r in &reports {
        let shown_ok = r.checks.iter().filter(|c| !(a.quick && c.waived)).all(|c| c.passed);
        fail |= !shown_ok;
        print_report(r, a.quick);
    }
    if fail {
        std::process::exit(1);
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let r = match &cli.cmd {
        Cmd::Constants(a) => cmd_constants(a),
        Cmd::Green(a) => cmd_green(a),
        Cmd::Bubble => cmd_bubble(),
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Phi(a) => cmd_phi(a),
        Cmd::Verify(a) => cmd_verify(a),
    };
    if let Err(e) = r {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
