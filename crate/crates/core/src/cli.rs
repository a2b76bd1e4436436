//! The `qt` command line: configuration, check suites and JSON reports.
//!
//! Exit codes: 0 when every check passes (for `certify`, when a decision
//! was reached), 1 when a check fails, 2 for usage or configuration errors.

use std::f64::consts::PI;
use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::conformal::{divergence, flow, hemi_map, mobius_ball, tangent_frame, AlgebraElement, BallPoint, Flow, MobiusMap};
use crate::expr::{parse, Expr, Point, Tape};
use crate::functionals::{
    cocycle_defect, curvature_integrals, manufacture, q_bilinear, q_bilinear_paneitz, weak_residuals, CandidateSolution, FunctionalError,
    PrescribedData, Rules,
};
use crate::kwcert::{certify, kw_report_with, observed_order, orbit_derivative_check, CertifyOptions, Outcome, Sampling};
use crate::quadrature::QuadRule;
use crate::sphere::{dot, laplace, paneitz4, ScalarField, SpherePoint};

pub const NODES_RANGE: (usize, usize) = (8, 256);
pub const DEFAULT_NODES: usize = 48;
pub const DEFAULT_ORBIT_NODES: usize = 12;
pub const DEFAULT_CERTIFY_NODES: usize = 8;
pub const DEFAULT_H: f64 = 1e-3;

/// Test functions for the weak formulation. All satisfy the Neumann condition.
pub const WEAK_TEST_FUNCTIONS: [&str; 6] = ["1", "x1", "x1^2", "x1*x2", "x5^2", "x3*x4 + x5^4"];
pub const COCYCLE_TEST_FUNCTIONS: [&str; 3] = ["0.5*x2*x3", "0.3*x1 - 0.2*x4^2", "0.4*x5^2 + 0.1*x1*x3"];

#[derive(Parser, Debug)]
#[command(name = "qt", version, about = "Checks for prescribed Q- and T-curvature on the upper hemisphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Manufactured-solution suite: Gauss-Bonnet-Chern, weak form, cocycle, Kazdan-Warner.
    Verify(Opts),
    /// Search for a nonexistence certificate for (Q, T).
    Certify(Opts),
    /// Gauss-Bonnet-Chern defect.
    Gbc(Opts),
    /// Mobius map anchors, round trip and Liouville equation of the factor.
    MobiusCheck(Opts),
    /// Spectrum of the Laplacian and the Paneitz operator, and the quadratic form.
    PaneitzCheck(Opts),
    /// First variations along a conformal orbit.
    OrbitCheck(Opts),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Verify(_) => "verify",
            Command::Certify(_) => "certify",
            Command::Gbc(_) => "gbc",
            Command::MobiusCheck(_) => "mobius-check",
            Command::PaneitzCheck(_) => "paneitz-check",
            Command::OrbitCheck(_) => "orbit-check",
        }
    }

    fn opts(&self) -> &Opts {
        match self {
            Command::Verify(o)
            | Command::Certify(o)
            | Command::Gbc(o)
            | Command::MobiusCheck(o)
            | Command::PaneitzCheck(o)
            | Command::OrbitCheck(o) => o,
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
struct Opts {
    /// Solution u (hemisphere expression).
    #[arg(long)]
    u: Option<String>,
    /// Q curvature; defaults to the manufactured value.
    #[arg(long)]
    q: Option<String>,
    /// T curvature in x1..x4; defaults to the manufactured value.
    #[arg(long)]
    t: Option<String>,
    /// Mobius parameter a1,a2,a3,a4 with |a| < 1.
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    /// Rotation as i,j,angle triples separated by ';', applied left to right.
    #[arg(long, allow_hyphen_values = true)]
    rot: Option<String>,
    /// Quadrature size N: n_theta = n_t = N, n_psi = 2N.
    #[arg(long)]
    nodes: Option<String>,
    /// Orbit step.
    #[arg(long)]
    h: Option<String>,
    /// Algebra field for orbit-check (J12..J34, X1..X4).
    #[arg(long)]
    field: Option<String>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<String>,
    /// key=value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{source_name}:{line}: {message}")]
    File { source_name: String, line: usize, message: String },
    #[error("--{key}: {message}")]
    Value { key: &'static str, message: String },
    #[error("--{key}: parse error at column {column}: {message}\n  {text}\n  {caret:>width$}", caret = "^", width = column)]
    Expression {
        key: &'static str,
        column: usize,
        message: String,
        text: String,
    },
    #[error("cannot read {0}: {1}")]
    Io(String, String),
}

/// Validated configuration, echoed in the report.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub u: Option<String>,
    pub q: Option<String>,
    pub t: Option<String>,
    pub a: Option<[f64; 4]>,
    pub rot: Vec<(usize, usize, f64)>,
    pub nodes: usize,
    pub h: f64,
    pub field: String,
    pub threads: Option<usize>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    exprs: Exprs,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Exprs {
    u: Option<Expr>,
    q: Option<Expr>,
    t: Option<Expr>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    /// `null` in JSON when not finite.
    pub value: f64,
    pub tol: Option<f64>,
    pub pass: bool,
}

impl Check {
    /// Passes when `|value| <= tol`.
    pub fn small(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tol: Some(tol),
            pass: value.abs() <= tol,
        }
    }

    /// Passes when `value >= tol`.
    pub fn at_least(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tol: Some(tol),
            pass: value >= tol,
        }
    }

    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tol: None,
            pass: true,
        }
    }

    pub fn failed(name: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            value: f64::NAN,
            tol: None,
            pass: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub config: RunConfig,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub seconds: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs `qt` with `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match configure(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qt: {e}");
            return 2;
        }
    };
    let report = match cfg.threads {
        None => execute(&cfg),
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| execute(&cfg)),
            Err(e) => {
                eprintln!("qt: --threads: {e}");
                return 2;
            }
        },
    };
    let json = report.to_json();
    match &cfg.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, json + "\n") {
                eprintln!("qt: cannot write {}: {e}", path.display());
                return 2;
            }
        }
        None => println!("{json}"),
    }
    if report.pass {
        0
    } else {
        1
    }
}

fn configure(command: &Command) -> Result<RunConfig, ConfigError> {
    let flags = command.opts();
    let mut o = match &flags.config {
        Some(path) => read_config(path)?,
        None => Opts::default(),
    };
    macro_rules! over {
        ($($f:ident),*) => { $( if flags.$f.is_some() { o.$f = flags.$f.clone(); } )* };
    }
    over!(u, q, t, a, rot, nodes, h, field, out, threads);
    validate(command.name(), &o)
}

fn read_config(path: &PathBuf) -> Result<Opts, ConfigError> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(name.clone(), e.to_string()))?;
    parse_config(&text, &name)
}

fn parse_config(text: &str, source_name: &str) -> Result<Opts, ConfigError> {
    let mut o = Opts::default();
    for (i, raw) in text.lines().enumerate() {
        let err = |message: String| ConfigError::File {
            source_name: source_name.to_string(),
            line: i + 1,
            message,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, found '{line}'")))?;
        let (k, v) = (k.trim(), Some(v.trim().to_string()));
        match k {
            "u" => o.u = v,
            "q" => o.q = v,
            "t" => o.t = v,
            "a" => o.a = v,
            "rot" => o.rot = v,
            "nodes" => o.nodes = v,
            "h" => o.h = v,
            "field" => o.field = v,
            "threads" => o.threads = v,
            "out" => o.out = v.map(PathBuf::from),
            "config" => return Err(err("nested config files are not supported".into())),
            _ => return Err(err(format!("unknown key '{k}'"))),
        }
    }
    Ok(o)
}

fn expression(key: &'static str, text: &str) -> Result<Expr, ConfigError> {
    parse(text).map_err(|e| ConfigError::Expression {
        key,
        column: e.position + 1,
        message: e.message,
        text: text.to_string(),
    })
}

fn number<T: std::str::FromStr>(key: &'static str, text: &str) -> Result<T, ConfigError> {
    text.trim().parse().map_err(|_| ConfigError::Value {
        key,
        message: format!("not a number: '{text}'"),
    })
}

fn validate(command: &str, o: &Opts) -> Result<RunConfig, ConfigError> {
    let mut exprs = Exprs::default();
    if let Some(s) = &o.u {
        exprs.u = Some(expression("u", s)?);
    }
    if let Some(s) = &o.q {
        exprs.q = Some(expression("q", s)?);
    }
    if let Some(s) = &o.t {
        let e = expression("t", s)?;
        if e.max_axis() == 5 || e.uses_radius() {
            return Err(ConfigError::Value {
                key: "t",
                message: "boundary expressions may reference x1..x4 only".into(),
            });
        }
        exprs.t = Some(e);
    }
    let a = match &o.a {
        None => None,
        Some(s) => {
            let parts: Vec<f64> = s.split(',').map(|p| number("a", p)).collect::<Result<_, _>>()?;
            let a: [f64; 4] = parts.try_into().map_err(|p: Vec<f64>| ConfigError::Value {
                key: "a",
                message: format!("expected 4 components, found {}", p.len()),
            })?;
            let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(n < 1.0) {
                return Err(ConfigError::Value {
                    key: "a",
                    message: format!("|a| = {n} must be < 1"),
                });
            }
            Some(a)
        }
    };
    let mut rot = Vec::new();
    if let Some(s) = &o.rot {
        for triple in s.split(';').filter(|t| !t.trim().is_empty()) {
            let p: Vec<&str> = triple.split(',').collect();
            if p.len() != 3 {
                return Err(ConfigError::Value {
                    key: "rot",
                    message: format!("expected i,j,angle, found '{triple}'"),
                });
            }
            let (i, j): (usize, usize) = (number("rot", p[0])?, number("rot", p[1])?);
            if !(1..=4).contains(&i) || !(1..=4).contains(&j) || i == j {
                return Err(ConfigError::Value {
                    key: "rot",
                    message: format!("plane ({i},{j}) must use two distinct axes in 1..4"),
                });
            }
            rot.push((i, j, number("rot", p[2])?));
        }
    }
    let default_nodes = match command {
        "orbit-check" => DEFAULT_ORBIT_NODES,
        "certify" => DEFAULT_CERTIFY_NODES,
        _ => DEFAULT_NODES,
    };
    let nodes = match &o.nodes {
        None => default_nodes,
        Some(s) => number("nodes", s)?,
    };
    if !(NODES_RANGE.0..=NODES_RANGE.1).contains(&nodes) {
        return Err(ConfigError::Value {
            key: "nodes",
            message: format!("{nodes} outside [{}, {}]", NODES_RANGE.0, NODES_RANGE.1),
        });
    }
    let h = match &o.h {
        None => DEFAULT_H,
        Some(s) => number("h", s)?,
    };
    if !(2e-4..=1e-2).contains(&h.abs()) {
        return Err(ConfigError::Value {
            key: "h",
            message: format!("|h| = {} outside [2e-4, 1e-2]", h.abs()),
        });
    }
    let field = o.field.clone().unwrap_or_else(|| "X1".into());
    if field_element(&field).is_none() {
        return Err(ConfigError::Value {
            key: "field",
            message: format!("unknown field '{field}'"),
        });
    }
    let threads = match &o.threads {
        None => None,
        Some(s) => match number::<usize>("threads", s)? {
            0 => {
                return Err(ConfigError::Value {
                    key: "threads",
                    message: "must be positive".into(),
                })
            }
            k => Some(k),
        },
    };
    if matches!(command, "verify" | "orbit-check") && exprs.u.is_none() {
        return Err(ConfigError::Value {
            key: "u",
            message: format!("required by {command}"),
        });
    }
    if command == "certify" && (exprs.q.is_none() || exprs.t.is_none()) {
        return Err(ConfigError::Value {
            key: if exprs.q.is_none() { "q" } else { "t" },
            message: "certify needs both --q and --t".into(),
        });
    }
    Ok(RunConfig {
        command: command.into(),
        u: o.u.clone(),
        q: o.q.clone(),
        t: o.t.clone(),
        a,
        rot,
        nodes,
        h,
        field,
        threads,
        out: o.out.clone(),
        exprs,
    })
}

fn field_element(name: &str) -> Option<AlgebraElement> {
    (0..AlgebraElement::DIM).find(|&j| AlgebraElement::name(j) == name).map(AlgebraElement::basis)
}

/// Runs the suite for `cfg.command`. Runtime failures become failing checks.
pub fn execute(cfg: &RunConfig) -> Report {
    let start = Instant::now();
    let result = match cfg.command.as_str() {
        "verify" => verify(cfg),
        "certify" => certify_cmd(cfg),
        "gbc" => gbc(cfg),
        "mobius-check" => mobius_check(cfg),
        "paneitz-check" => paneitz_check(cfg),
        "orbit-check" => orbit_check(cfg),
        other => Err(format!("unknown command {other}")),
    };
    let checks = result.unwrap_or_else(|e| {
        eprintln!("qt: {e}");
        vec![Check::failed(format!("error: {e}"))]
    });
    Report {
        command: cfg.command.clone(),
        config: cfg.clone(),
        pass: !checks.is_empty() && checks.iter().all(|c| c.pass),
        checks,
        seconds: start.elapsed().as_secs_f64(),
    }
}

type Suite = Result<Vec<Check>, String>;

fn rules(cfg: &RunConfig) -> Result<Rules, String> {
    Rules::uniform(cfg.nodes).map_err(|e| e.to_string())
}

fn mobius(cfg: &RunConfig) -> Result<Option<MobiusMap>, String> {
    if cfg.a.is_none() && cfg.rot.is_empty() {
        return Ok(None);
    }
    let r = MobiusMap::rotation_from_planes(&cfg.rot).map_err(|e| e.to_string())?;
    MobiusMap::new(cfg.a.unwrap_or([0.0; 4]), r).map(Some).map_err(|e| e.to_string())
}

/// `u` checked for the Neumann condition, and `(Q, T)` from the overrides
/// or by manufacturing. The first check records the Neumann test.
fn solution(cfg: &RunConfig, rules: &Rules, checks: &mut Vec<Check>) -> Result<Option<(Expr, PrescribedData)>, String> {
    let u = cfg.exprs.u.clone().unwrap_or_else(Expr::zero);
    let cand = match CandidateSolution::new(u, rules) {
        Ok(c) => c,
        Err(FunctionalError::NotInH { value, .. }) => {
            checks.push(Check::small("neumann", value, crate::sphere::NEUMANN_TOL));
            return Ok(None);
        }
        Err(e) => return Err(e.to_string()),
    };
    let nd = rules
        .boundary
        .fold_nodes(0.0f64, |_, p, _| Ok(cand.field().normal_derivative_at(p)?.abs()), f64::max)
        .map_err(|e| e.to_string())?;
    checks.push(Check::small("neumann", nd, crate::sphere::NEUMANN_TOL));
    let made = manufacture(&cand);
    let q = cfg.exprs.q.clone().unwrap_or_else(|| made.q.expr().clone());
    let t = cfg.exprs.t.clone().unwrap_or_else(|| made.t.expr().clone());
    let data = PrescribedData::new(q, t).map_err(|e| e.to_string())?;
    Ok(Some((cand.expr().clone(), data)))
}

fn verify(cfg: &RunConfig) -> Suite {
    let rules = rules(cfg)?;
    let mut checks = Vec::new();
    let Some((u, data)) = solution(cfg, &rules, &mut checks)? else {
        return Ok(checks);
    };
    let gbc = crate::functionals::gbc_defect(&u, &data, &rules).map_err(|e| e.to_string())?;
    checks.push(Check::small("gbc_defect", gbc, 1e-7 * 4.0 * PI * PI));
    let vs: Vec<Expr> = WEAK_TEST_FUNCTIONS.iter().map(|s| parse(s).expect("fixed test function")).collect();
    let weak = weak_residuals(&u, &data, &vs, &rules).map_err(|e| e.to_string())?;
    for (s, b) in WEAK_TEST_FUNCTIONS.iter().zip(weak) {
        checks.push(Check::small(format!("weak_residual[{s}]"), b.relative(), 1e-6));
    }
    for s in COCYCLE_TEST_FUNCTIONS {
        let v = parse(s).expect("fixed test function");
        let b = cocycle_defect(&u, &data, &v, &rules).map_err(|e| e.to_string())?;
        checks.push(Check::small(format!("cocycle_defect[{s}]"), b.relative(), 1e-6));
    }
    let kw = kw_report_with(&u, &data, &rules, None).map_err(|e| e.to_string())?;
    for e in &kw.entries {
        checks.push(Check::small(format!("kw[{}]", e.field), e.normalized, 1e-7));
    }
    Ok(checks)
}

fn gbc(cfg: &RunConfig) -> Suite {
    let rules = rules(cfg)?;
    let mut checks = Vec::new();
    let Some((u, data)) = solution(cfg, &rules, &mut checks)? else {
        return Ok(checks);
    };
    let (n, b) = curvature_integrals(&u, &data, &rules).map_err(|e| e.to_string())?;
    checks.push(Check::info("N_Q", n));
    checks.push(Check::info("B_T", b));
    checks.push(Check::small("gbc_defect", n + b - 4.0 * PI * PI, 1e-7 * 4.0 * PI * PI));
    Ok(checks)
}

fn certify_cmd(cfg: &RunConfig) -> Suite {
    let q = cfg.exprs.q.clone().ok_or("missing --q")?;
    let t = cfg.exprs.t.clone().ok_or("missing --t")?;
    let data = PrescribedData::new(q, t).map_err(|e| e.to_string())?;
    let sampling = Sampling::uniform(cfg.nodes).map_err(|e| e.to_string())?;
    let opts = CertifyOptions {
        psi: mobius(cfg)?.map(|m| Arc::new(hemi_map(&m))),
        ..CertifyOptions::default()
    };
    let mut checks = vec![
        Check::info("samples.interior", sampling.interior.len() as f64),
        Check::info("samples.boundary", sampling.boundary.len() as f64),
    ];
    match certify(&data, &sampling, &opts) {
        Err(e) => {
            eprintln!("qt: certify: {e}");
            checks.push(Check::failed(format!("lp_error: {e}")));
        }
        Ok(Outcome::Certificate(c)) => {
            checks.push(Check::info("certificate", 1.0));
            checks.push(Check::info("lp_objective", c.objective));
            for j in 0..AlgebraElement::DIM {
                checks.push(Check::info(format!("c[{}]", AlgebraElement::name(j)), c.c.0[j]));
            }
            let m = &c.fine;
            checks.push(Check::info("fine.scale", m.scale));
            checks.push(Check::at_least("fine.interior_min", m.interior_min, -opts.eps_verify * m.scale));
            checks.push(Check::at_least("fine.boundary_min", m.boundary_min, -opts.eps_verify * m.scale));
            checks.push(Check::at_least("fine.max", m.max, opts.eps_strict * m.scale));
            checks.push(Check::info("fine.samples", (m.interior_samples + m.boundary_samples) as f64));
        }
        Ok(Outcome::NoneFound(n)) => {
            eprintln!("qt: no certificate found ({}); this is inconclusive", n.reason);
            checks.push(Check::info("certificate", 0.0));
            checks.push(Check::info("inconclusive", 1.0));
            checks.push(Check::info("lp_objective", n.objective));
            if let Some(m) = n.fine {
                checks.push(Check::info("fine.interior_min", m.interior_min));
                checks.push(Check::info("fine.boundary_min", m.boundary_min));
                checks.push(Check::info("fine.max", m.max));
            }
        }
    }
    Ok(checks)
}

/// Deterministic sample of `count` nodes of a small rule.
fn sample_points(rule: &QuadRule, count: usize) -> Vec<Point> {
    let stride = (rule.len() / count).max(1);
    (0..count).map(|i| rule.node((i * stride + stride / 2) % rule.len()).0).collect()
}

fn interior_samples(count: usize) -> Vec<Point> {
    sample_points(&QuadRule::hemisphere(5, 5, 10).expect("valid sizes"), count)
}

fn boundary_samples(count: usize) -> Vec<Point> {
    sample_points(&QuadRule::boundary(5, 10).expect("valid sizes"), count)
}

/// `Phi_a(y)` for `|y| = 1`, where it reduces to
/// `((1 - |a|^2) y + 2 (1 + a.y) a) / (1 + 2 a.y + |a|^2)`.
fn sphere_image(a: &[f64; 4], y: &[f64; 4]) -> [f64; 4] {
    let a2: f64 = a.iter().map(|v| v * v).sum();
    let ay: f64 = a.iter().zip(y).map(|(p, q)| p * q).sum();
    std::array::from_fn(|i| ((1.0 - a2) * y[i] + 2.0 * (1.0 + ay) * a[i]) / (1.0 + 2.0 * ay + a2))
}

fn mobius_check(cfg: &RunConfig) -> Suite {
    let m = match mobius(cfg)? {
        Some(m) => m,
        None => MobiusMap::translation([0.0, 0.5, 0.0, 0.0]).expect("valid parameter"),
    };
    let mut checks = Vec::new();
    for sign in [1.0, -1.0] {
        let r = m.rotation();
        let y: [f64; 4] = std::array::from_fn(|i| sign * r[(i, 0)]);
        let want = sphere_image(m.a(), &y);
        let got = mobius_ball(&m, &BallPoint::new([sign, 0.0, 0.0, 0.0]).map_err(|e| e.to_string())?);
        let err = got.coords().iter().zip(&want).fold(0.0f64, |s, (p, q)| s.max((p - q).abs()));
        checks.push(Check::small(if sign > 0.0 { "image[e1]" } else { "image[-e1]" }, err, 1e-14));
    }
    let psi = hemi_map(&m);
    let inner = interior_samples(100);
    let outer = boundary_samples(100);
    let mut trip = 0.0f64;
    let mut rim = 0.0f64;
    for p in inner.iter().chain(&outer) {
        let back = psi.apply_inverse(&psi.apply(p));
        trip = trip.max(back.iter().zip(p).fold(0.0, |s, (x, y)| s.max((x - y).abs())));
    }
    for p in &outer {
        rim = rim.max(psi.apply(p)[4].abs());
    }
    checks.push(Check::small("round_trip", trip, 1e-11));
    checks.push(Check::small("equator_preserved", rim, 1e-12));

    let mut gram = 0.0f64;
    for p in &inner {
        let e2p = (2.0 * psi.factor(p)).exp();
        let jac = psi.jacobian(p).map_err(|e| e.to_string())?;
        let cols = tangent_frame(p).map(|v| -> Point { std::array::from_fn(|k| dot(&jac[k], &v)) });
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { e2p } else { 0.0 };
                gram = gram.max((dot(&cols[i], &cols[j]) - want).abs() / e2p);
            }
        }
    }
    checks.push(Check::small("gram_conformal", gram, 1e-9));

    let pf = ScalarField::new(psi.factor_expr().clone());
    let lp = laplace(&pf);
    let p4 = paneitz4(&pf);
    let liouville = Tape::compile_many(&[p4.expr().clone() + 6.0 - 6.0 * (4.0 * pf.expr().clone()).exp()]);
    let mut worst = 0.0f64;
    for p in &inner {
        worst = worst.max(liouville.eval(p).map_err(|e| e.to_string())?.abs());
    }
    checks.push(Check::small("liouville", worst, 1e-6));
    let (mut n0, mut n1) = (0.0f64, 0.0f64);
    for p in &outer {
        n0 = n0.max(pf.normal_derivative_at(p).map_err(|e| e.to_string())?.abs());
        n1 = n1.max(lp.normal_derivative_at(p).map_err(|e| e.to_string())?.abs());
    }
    checks.push(Check::small("neumann[P]", n0, 1e-6));
    checks.push(Check::small("neumann[lap P]", n1, 1e-6));
    Ok(checks)
}

/// Harmonic homogeneous polynomials of degree 1, 2, 3.
pub const HARMONICS: [(usize, &str); 6] = [
    (1, "x1"),
    (1, "x5"),
    (2, "x1*x2"),
    (2, "x1^2 - x5^2"),
    (3, "x1*x2*x3"),
    (3, "x5^3 - 1.5*x5*(x1^2 + x2^2)"),
];

fn paneitz_check(cfg: &RunConfig) -> Suite {
    let mut checks = Vec::new();
    let pts = interior_samples(50);
    for (k, src) in HARMONICS {
        let f = ScalarField::parse(src).map_err(|e| e.to_string())?;
        let kf = k as f64;
        let (lam, mu) = (-kf * (kf + 3.0), kf * (kf + 1.0) * (kf + 2.0) * (kf + 3.0));
        let (l, p) = (laplace(&f), paneitz4(&f));
        let (mut el, mut ep) = (0.0f64, 0.0f64);
        for x in &pts {
            let v = f.value(x).map_err(|e| e.to_string())?;
            el = el.max((l.value(x).map_err(|e| e.to_string())? - lam * v).abs());
            ep = ep.max((p.value(x).map_err(|e| e.to_string())? - mu * v).abs());
        }
        checks.push(Check::small(format!("laplace[{src}]"), el, 1e-9));
        checks.push(Check::small(format!("paneitz4[{src}]"), ep, 1e-9));
    }
    let rules = rules(cfg)?;
    let u = cfg.exprs.u.clone().unwrap_or_else(|| parse("x5^3").expect("fixed"));
    let v = parse("x1^2").expect("fixed");
    let a = q_bilinear(&u, &v, &rules).map_err(|e| e.to_string())?;
    let b = q_bilinear(&v, &u, &rules).map_err(|e| e.to_string())?;
    let c = q_bilinear_paneitz(&u, &v, &rules).map_err(|e| e.to_string())?;
    checks.push(Check::small("q_symmetry", (a - b).abs() / a.abs().max(1.0), 1e-11));
    checks.push(Check::small("q_forms_agree", (a - c).abs() / a.abs().max(1.0), 1e-7));
    Ok(checks)
}

fn orbit_check(cfg: &RunConfig) -> Suite {
    let rules = rules(cfg)?;
    let mut checks = Vec::new();
    let Some((u, data)) = solution(cfg, &rules, &mut checks)? else {
        return Ok(checks);
    };
    let c = field_element(&cfg.field).ok_or("unknown field")?;

    let step = 1e-3;
    let mut pdot = 0.0f64;
    for p in interior_samples(100) {
        let sp = SpherePoint::new(p).map_err(|e| e.to_string())?;
        let plus = flow(&c, &sp, step).map_err(|e| e.to_string())?.factor;
        let minus = flow(&c, &sp, -step).map_err(|e| e.to_string())?.factor;
        pdot = pdot.max(((plus - minus) / (2.0 * step) - 0.25 * divergence(&c, &sp)).abs());
    }
    checks.push(Check::small("factor_rate", pdot, 1e-5));

    let ut = Tape::compile(&u);
    let fl = Flow::new(&c, cfg.h).map_err(|e| e.to_string())?;
    let d = 1e-4;
    let mut nd = 0.0f64;
    for q in boundary_samples(100) {
        let at = |s: f64| -> Result<f64, String> {
            let x: Point = std::array::from_fn(|k| s.cos() * q[k] + if k == 4 { s.sin() } else { 0.0 });
            let (y, pt) = fl.apply(&x).map_err(|e| e.to_string())?;
            Ok(ut.eval(&y).map_err(|e| e.to_string())? + pt)
        };
        nd = nd.max(((at(d)? - at(-d)?) / (2.0 * d)).abs());
    }
    checks.push(Check::small("orbit_neumann", nd, 1e-5));

    let coarse = orbit_derivative_check(&u, &data, &c, cfg.h, &rules).map_err(|e| e.to_string())?;
    let fine = orbit_derivative_check(&u, &data, &c, cfg.h / 2.0, &rules).map_err(|e| e.to_string())?;
    let scale = coarse.s_u.abs().max(1.0);
    let floor = 1e-8 * scale;
    checks.push(Check::info("S(u)", coarse.s_u));
    for (name, a, b) in [("d1", coarse.d1, fine.d1), ("d2", coarse.d2, fine.d2), ("d3", coarse.d3, fine.d3)] {
        checks.push(Check::info(format!("{name}[h]"), a));
        checks.push(Check::info(format!("{name}[h/2]"), b));
        let order = observed_order(a, b, floor);
        checks.push(Check::at_least(format!("order[{name}]"), order.unwrap_or(f64::INFINITY), 1.9));
    }
    checks.push(Check::small("d3_bound", coarse.d3, 1e-4 * scale));
    Ok(checks)
}
