//! Kazdan-Warner residuals, orbit-derivative checks and the LP search for
//! nonexistence certificates.

mod certify;
pub mod simplex;

use std::sync::Arc;

use thiserror::Error;

pub use certify::{certify, verify_certificate, CertError, Certificate, CertifyOptions, Margins, NoneFound, Outcome, Sampling};

use crate::conformal::{tangent_frame, AlgebraElement, ConformalMap, Flow};
use crate::expr::{EvalError, Expr, Point, Tape, DIM};
use crate::functionals::{PrescribedData, Rules};
use crate::quadrature::{QuadError, QuadRule};
use crate::sphere::{dot, norm};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KwError {
    #[error("vector field {name} is not tangent at {at:?} (defect {defect:e})")]
    NotTangent { name: String, at: Point, defect: f64 },
    #[error("orbit step {0} outside [1e-4, 1e-2]")]
    BadStep(f64),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A boundary-preserving conformal field: an algebra element, or its
/// pushforward by a hemisphere map.
#[derive(Debug, Clone)]
pub enum Field {
    Algebra(AlgebraElement),
    Pushforward { psi: Arc<ConformalMap>, c: AlgebraElement },
}

impl Field {
    pub fn name(&self) -> String {
        match self {
            Field::Algebra(c) => element_name(c),
            Field::Pushforward { c, .. } => format!("Psi_*({})", element_name(c)),
        }
    }

    pub fn at(&self, p: &Point) -> Result<Point, EvalError> {
        match self {
            Field::Algebra(c) => Ok(c.eval(p)),
            Field::Pushforward { psi, c } => crate::conformal::pushforward(psi, c, p),
        }
    }

    /// The ten basis fields, optionally pushed forward by `psi`.
    pub fn basis(psi: Option<&Arc<ConformalMap>>) -> Vec<Field> {
        (0..AlgebraElement::DIM)
            .map(|j| {
                let c = AlgebraElement::basis(j);
                match psi {
                    None => Field::Algebra(c),
                    Some(psi) => Field::Pushforward { psi: psi.clone(), c },
                }
            })
            .collect()
    }
}

fn element_name(c: &AlgebraElement) -> String {
    let nz: Vec<usize> = (0..10).filter(|&j| c.0[j] != 0.0).collect();
    match nz.as_slice() {
        [] => "0".into(),
        [j] if c.0[*j] == 1.0 => AlgebraElement::name(*j),
        _ => nz
            .iter()
            .map(|&j| format!("{}*{}", c.0[j], AlgebraElement::name(j)))
            .collect::<Vec<_>>()
            .join(" + "),
    }
}

/// One Kazdan-Warner identity evaluated by quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct KwResidual {
    pub field: String,
    /// `int X(Q) e^{4u} dV + 4/3 int X(T) e^{3u} dS`.
    pub raw: f64,
    /// `int |X(Q)| e^{4u} + 4/3 int |X(T)| e^{3u} + 1e-300`,
    /// which bounds `|raw|` from above.
    pub normalization: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KwReport {
    pub entries: Vec<KwResidual>,
    pub interior_sizes: (usize, usize, usize),
    pub boundary_sizes: (usize, usize, usize),
}

impl KwReport {
    pub fn max_normalized(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.normalized.abs()))
    }
}

/// Tape with outputs `[u, F, dF/dx1..dF/dx5]`.
fn jet_with_u(u: &Expr, f: &Expr) -> Tape {
    let mut outs = vec![u.clone(), f.clone()];
    outs.extend(f.gradient());
    Tape::compile_many(&outs)
}

const TANGENCY_TOL: f64 = 1e-9;

fn check_tangent(field: &Field, rule: &QuadRule) -> Result<(), KwError> {
    let boundary = rule.domain() == crate::quadrature::Domain::Boundary;
    let step = (rule.len() / 2000).max(1);
    for k in (0..rule.len()).step_by(step) {
        let (p, _) = rule.node(k);
        let x = field.at(&p)?;
        let scale = 1.0 + norm(&x);
        let defect = dot(&x, &p).abs().max(if boundary { x[4].abs() } else { 0.0 });
        if defect > TANGENCY_TOL * scale {
            return Err(KwError::NotTangent {
                name: field.name(),
                at: p,
                defect,
            });
        }
    }
    Ok(())
}

/// Integrates `[X(F) e^{ku}, |X(F)| e^{ku}]` for every field.
fn field_integrals(rule: &QuadRule, tape: &Tape, k: f64, fields: &[Field], boundary: bool) -> Result<Vec<f64>, QuadError> {
    let m = 2 * fields.len();
    rule.integrate_many(m, |pts, out| {
        let mut jet = vec![0.0; pts.len() * (DIM + 2)];
        tape.eval_batch(pts, &mut jet)?;
        for (i, p) in pts.iter().enumerate() {
            let row = &jet[i * (DIM + 2)..(i + 1) * (DIM + 2)];
            let w = (k * row[0]).exp();
            let g: Point = std::array::from_fn(|l| row[2 + l]);
            for (j, f) in fields.iter().enumerate() {
                let x = f.at(p).map_err(|e| (i, e))?;
                let xt = tangential(p, &x, boundary);
                let xf = dot(&xt, &g);
                out[i * m + 2 * j] = xf * w;
                out[i * m + 2 * j + 1] = xf.abs() * w;
            }
        }
        Ok(())
    })
}

/// Projection onto the tangent space of the sphere, and of the equator when
/// `boundary` is set.
fn tangential(p: &Point, v: &Point, boundary: bool) -> Point {
    let mut w = *v;
    if boundary {
        w[4] = 0.0;
    }
    let s = dot(p, &w);
    std::array::from_fn(|i| w[i] - s * p[i])
}

/// Kazdan-Warner residuals of several fields from one pass per rule.
pub fn kw_residuals(u: &Expr, data: &PrescribedData, fields: &[Field], rules: &Rules) -> Result<Vec<KwResidual>, KwError> {
    for f in fields {
        check_tangent(f, &rules.interior)?;
        check_tangent(f, &rules.boundary)?;
    }
    let int = field_integrals(&rules.interior, &jet_with_u(u, data.q.expr()), 4.0, fields, false)?;
    let bd = field_integrals(&rules.boundary, &jet_with_u(u, data.t.expr()), 3.0, fields, true)?;
    Ok(fields
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let raw = int[2 * j] + 4.0 / 3.0 * bd[2 * j];
            let normalization = int[2 * j + 1] + 4.0 / 3.0 * bd[2 * j + 1] + 1e-300;
            KwResidual {
                field: f.name(),
                raw,
                normalization,
                normalized: raw / normalization,
            }
        })
        .collect())
}

pub fn kw_residual(u: &Expr, data: &PrescribedData, field: &Field, rules: &Rules) -> Result<KwResidual, KwError> {
    Ok(kw_residuals(u, data, std::slice::from_ref(field), rules)?.remove(0))
}

/// Residuals for all ten basis fields.
pub fn kw_report(u: &Expr, data: &PrescribedData, rules: &Rules) -> Result<KwReport, KwError> {
    kw_report_with(u, data, rules, None)
}

/// As [`kw_report`], with the basis pushed forward by `psi` when given.
pub fn kw_report_with(u: &Expr, data: &PrescribedData, rules: &Rules, psi: Option<&Arc<ConformalMap>>) -> Result<KwReport, KwError> {
    Ok(KwReport {
        entries: kw_residuals(u, data, &Field::basis(psi), rules)?,
        interior_sizes: rules.interior.sizes(),
        boundary_sizes: rules.boundary.sizes(),
    })
}

/// Geodesic finite-difference step used for derivatives of `u_t`.
pub const ORBIT_STENCIL: f64 = 5e-3;

/// Defects of the first-variation formulas along `u_t = u . phi_t + P_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitDefects {
    pub h: f64,
    /// Centered difference of `N_Q(u_t)` plus `int X(Q) e^{4u}`.
    pub d1: f64,
    /// Centered difference of `B_T(u_t)` plus `int X(T) e^{3u}`.
    pub d2: f64,
    /// Centered difference of `S(u_t)`.
    pub d3: f64,
    /// `S(u)` on the same rule.
    pub s_u: f64,
}

/// Values along the orbit at one time: `(N_Q, B_T, S)`.
fn orbit_values(u: &Tape, q: &Tape, t_tape: &Tape, c: &AlgebraElement, t: f64, rules: &Rules) -> Result<(f64, f64, f64), QuadError> {
    let flow = Flow::new(c, t).map_err(|_| QuadError::InvalidSize(format!("flow time {t}")))?;
    let ut = |x: &Point| -> Result<f64, EvalError> {
        let (y, p) = flow.apply(x).map_err(|_| EvalError::NonFinite)?;
        Ok(u.eval(&y)? + p)
    };
    let int = rules.interior.integrate_many(2, |pts, out| {
        for (i, x) in pts.iter().enumerate() {
            let run = || -> Result<[f64; 2], EvalError> {
                let f0 = ut(x)?;
                let (mut lap, mut grad2) = (0.0, 0.0);
                let d = ORBIT_STENCIL;
                for v in tangent_frame(x) {
                    let at = |s: f64| -> Result<f64, EvalError> {
                        let (sn, cs) = s.sin_cos();
                        ut(&std::array::from_fn(|k| cs * x[k] + sn * v[k]))
                    };
                    let (p1, m1, p2, m2) = (at(d)?, at(-d)?, at(2.0 * d)?, at(-2.0 * d)?);
                    lap += (-p2 + 16.0 * p1 - 30.0 * f0 + 16.0 * m1 - m2) / (12.0 * d * d);
                    let g = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * d);
                    grad2 += g * g;
                }
                Ok([q.eval(x)? * (4.0 * f0).exp(), lap * lap + 2.0 * grad2 + 12.0 * f0])
            };
            out[2 * i..2 * i + 2].copy_from_slice(&run().map_err(|e| (i, e))?);
        }
        Ok(())
    })?;
    let bd = rules.boundary.integrate(|x| Ok(t_tape.eval(x)? * (3.0 * ut(x)?).exp()))?;
    Ok((int[0], bd, int[1]))
}

/// Compares centered differences in `t` at `t = +-h` with the predicted
/// first variations `-int X(Q) e^{4u}`, `-int X(T) e^{3u}` and `0`.
///
/// `u_t` is evaluated at the nodes by flowing them, with `P_t` integrated
/// along the same trajectory; its derivatives come from fourth-order
/// geodesic stencils.
pub fn orbit_derivative_check(u: &Expr, data: &PrescribedData, c: &AlgebraElement, h: f64, rules: &Rules) -> Result<OrbitDefects, KwError> {
    if !(1e-4..=1e-2).contains(&h.abs()) {
        return Err(KwError::BadStep(h));
    }
    let ut = Tape::compile(u);
    let qt = Tape::compile(data.q.expr());
    let tt = Tape::compile(data.t.expr());
    let (np, bp, sp) = orbit_values(&ut, &qt, &tt, c, h, rules)?;
    let (nm, bm, sm) = orbit_values(&ut, &qt, &tt, c, -h, rules)?;
    let (_, _, s0) = orbit_values(&ut, &qt, &tt, c, 0.0, rules)?;
    let kw = kw_residual_parts(u, data, &Field::Algebra(*c), rules)?;
    Ok(OrbitDefects {
        h,
        d1: (np - nm) / (2.0 * h) + kw.0,
        d2: (bp - bm) / (2.0 * h) + kw.1,
        d3: (sp - sm) / (2.0 * h),
        s_u: s0,
    })
}

/// Observed order `log2 |d(h)| / |d(h/2)|`. `None` when both defects are
/// below `floor`, where the ratio only measures rounding noise.
pub fn observed_order(coarse: f64, fine: f64, floor: f64) -> Option<f64> {
    if coarse.abs() <= floor && fine.abs() <= floor {
        return None;
    }
    Some((coarse.abs() / fine.abs()).log2())
}

/// `(int X(Q) e^{4u}, int X(T) e^{3u})` separately.
fn kw_residual_parts(u: &Expr, data: &PrescribedData, field: &Field, rules: &Rules) -> Result<(f64, f64), KwError> {
    let fields = std::slice::from_ref(field);
    let int = field_integrals(&rules.interior, &jet_with_u(u, data.q.expr()), 4.0, fields, false)?;
    let bd = field_integrals(&rules.boundary, &jet_with_u(u, data.t.expr()), 3.0, fields, true)?;
    Ok((int[0], bd[0]))
}
