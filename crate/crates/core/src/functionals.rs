//! Energy functional, curvature integrals and the identities they satisfy
//! on the round hemisphere (`Q_g = 3`, `T_g = 0`).
//!
//! Every integrand is assembled as an expression and all integrals needed by
//! one call are evaluated in a single pass over each rule.

use thiserror::Error;

use crate::expr::{Expr, Tape};
use crate::quadrature::{QuadError, QuadRule, DEFAULT_SIZES};
use crate::sphere::{laplace, paneitz4, ScalarField, NEUMANN_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionalError {
    #[error("field not in H: |du/dnu| = {value:e} at boundary node {node}")]
    NotInH { value: f64, node: usize },
    #[error("boundary data may only use x1..x4")]
    BoundaryUsesX5,
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// A hemisphere rule and an equator rule used together.
#[derive(Debug, Clone)]
pub struct Rules {
    pub interior: QuadRule,
    pub boundary: QuadRule,
}

impl Rules {
    /// `n_theta = n_t = n`, `n_psi = 2n` on both domains.
    pub fn uniform(n: usize) -> Result<Self, QuadError> {
        Ok(Rules {
            interior: QuadRule::hemisphere_n(n)?,
            boundary: QuadRule::boundary_n(n)?,
        })
    }

    pub fn new(n_theta: usize, n_t: usize, n_psi: usize) -> Result<Self, QuadError> {
        Ok(Rules {
            interior: QuadRule::hemisphere(n_theta, n_t, n_psi)?,
            boundary: QuadRule::boundary(n_t, n_psi)?,
        })
    }

    /// Integrates every interior and every boundary expression.
    pub fn integrate(&self, interior: &[Expr], boundary: &[Expr]) -> Result<(Vec<f64>, Vec<f64>), QuadError> {
        let a = if interior.is_empty() {
            Vec::new()
        } else {
            self.interior.integrate_tape(&Tape::compile_many(interior))?
        };
        let b = if boundary.is_empty() {
            Vec::new()
        } else {
            self.boundary.integrate_tape(&Tape::compile_many(boundary))?
        };
        Ok((a, b))
    }
}

impl Default for Rules {
    fn default() -> Self {
        let (a, b, c) = DEFAULT_SIZES;
        Rules::new(a, b, c).expect("default sizes are valid")
    }
}

/// Prescribed curvatures: `Q` on the hemisphere, `T` on the equator.
#[derive(Debug, Clone)]
pub struct PrescribedData {
    pub q: ScalarField,
    pub t: ScalarField,
}

impl PrescribedData {
    pub fn new(q: Expr, t: Expr) -> Result<Self, FunctionalError> {
        if t.max_axis() > 4 {
            return Err(FunctionalError::BoundaryUsesX5);
        }
        Ok(PrescribedData {
            q: ScalarField::new(q),
            t: ScalarField::new(t),
        })
    }

    /// The round background, `Q = 3`, `T = 0`.
    pub fn round() -> Self {
        PrescribedData::new(Expr::constant(3.0), Expr::zero()).unwrap()
    }
}

/// A field checked to satisfy `du/dnu = 0` at every boundary node.
#[derive(Debug, Clone)]
pub struct CandidateSolution {
    u: ScalarField,
}

impl CandidateSolution {
    pub fn new(u: Expr, rules: &Rules) -> Result<Self, FunctionalError> {
        let u = ScalarField::new(u);
        check_h(&u, &rules.boundary)?;
        Ok(CandidateSolution { u })
    }

    pub fn field(&self) -> &ScalarField {
        &self.u
    }

    pub fn expr(&self) -> &Expr {
        self.u.expr()
    }
}

/// Largest `|du/dnu|` over the nodes of a boundary rule must not exceed the
/// Neumann tolerance.
pub fn check_h(u: &ScalarField, boundary: &QuadRule) -> Result<(), FunctionalError> {
    let dn = u.expr().diff(5);
    if dn.as_const() == Some(0.0) {
        return Ok(());
    }
    let tape = Tape::compile(&dn);
    let worst = boundary.fold_nodes(
        (0.0f64, 0usize),
        |k, p, _| Ok((tape.eval(p)?.abs(), k)),
        |a, b| if b.0 > a.0 { b } else { a },
    )?;
    if worst.0 > NEUMANN_TOL {
        return Err(FunctionalError::NotInH {
            value: worst.0,
            node: worst.1,
        });
    }
    Ok(())
}

/// The data `(Q, T)` for which `u` solves the boundary problem:
/// `Q = (P4 u + 6) e^{-4u} / 2` and `T = -d(laplace u)/dnu e^{-3u} / 2`.
pub fn manufacture(u: &CandidateSolution) -> PrescribedData {
    let ue = u.expr();
    let q = (paneitz4(u.field()).expr().clone() + 6.0) * (-4.0 * ue.clone()).exp() * 0.5;
    let t = (laplace(u.field()).expr().diff(5) * (-3.0 * ue.clone()).exp() * 0.5).on_equator();
    PrescribedData::new(q, t).expect("restricted to the equator")
}

/// `<grad f, grad g>` on the unit sphere as an expression.
pub fn grad_dot(f: &Expr, g: &Expr) -> Expr {
    let x = Expr::coords();
    let (gf, gg) = (f.gradient(), g.gradient());
    Expr::dot(&gf, &gg) - Expr::dot(&x, &gf) * Expr::dot(&x, &gg)
}

fn lap(e: &Expr) -> Expr {
    laplace(&ScalarField::new(e.clone())).expr().clone()
}

/// `(N_Q, B_T) = (int Q e^{4u} dV, int T e^{3u} dS)`.
pub fn curvature_integrals(u: &Expr, data: &PrescribedData, rules: &Rules) -> Result<(f64, f64), QuadError> {
    let (a, b) = rules.integrate(
        &[data.q.expr().clone() * (4.0 * u.clone()).exp()],
        &[data.t.expr().clone() * (3.0 * u.clone()).exp()],
    )?;
    Ok((a[0], b[0]))
}

/// `N_Q + B_T - 4 pi^2`.
pub fn gbc_defect(u: &Expr, data: &PrescribedData, rules: &Rules) -> Result<f64, QuadError> {
    let (n, b) = curvature_integrals(u, data, rules)?;
    Ok(n + b - 4.0 * std::f64::consts::PI.powi(2))
}

/// The three interior integrands of `S`.
fn s_integrands(u: &Expr) -> [Expr; 3] {
    let l = lap(u);
    [l.clone() * l, 2.0 * grad_dot(u, u), 12.0 * u.clone()]
}

/// `S(u) = int (laplace u)^2 + 2 int |grad u|^2 + 12 int u`.
pub fn s_functional(u: &Expr, rules: &Rules) -> Result<f64, QuadError> {
    let (a, _) = rules.integrate(&s_integrands(u), &[])?;
    Ok(a.iter().sum())
}

/// `int laplace u laplace v + 2 int <grad u, grad v>`, both over the
/// hemisphere.
pub fn q_bilinear(u: &Expr, v: &Expr, rules: &Rules) -> Result<f64, QuadError> {
    let (a, _) = rules.integrate(&[lap(u) * lap(v) + 2.0 * grad_dot(u, v)], &[])?;
    Ok(a[0])
}

/// The same form written with the Paneitz pair:
/// `int (P4 u) v dV + 2 int_{S^3} (P3 u) v dS`.
pub fn q_bilinear_paneitz(u: &Expr, v: &Expr, rules: &Rules) -> Result<f64, QuadError> {
    let p4 = paneitz4(&ScalarField::new(u.clone())).expr().clone();
    let p3 = 0.5 * lap(u).diff(5);
    let (a, b) = rules.integrate(&[p4 * v.clone()], &[2.0 * p3 * v.clone()])?;
    Ok(a[0] + b[0])
}

/// `I(u) = S(u) - N_Q(u) - 4/3 B_T(u)`.
pub fn energy(u: &Expr, data: &PrescribedData, rules: &Rules) -> Result<f64, QuadError> {
    let (s, n, b) = energy_parts(u, data, rules)?;
    Ok(s - n - 4.0 / 3.0 * b)
}

/// `(S, N_Q, B_T)` from one pass over each rule.
pub fn energy_parts(u: &Expr, data: &PrescribedData, rules: &Rules) -> Result<(f64, f64, f64), QuadError> {
    let mut interior = s_integrands(u).to_vec();
    interior.push(data.q.expr().clone() * (4.0 * u.clone()).exp());
    let (a, b) = rules.integrate(&interior, &[data.t.expr().clone() * (3.0 * u.clone()).exp()])?;
    Ok((a[..3].iter().sum(), a[3], b[0]))
}

/// A sum of integrals that should vanish, with the size of its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Balance {
    pub value: f64,
    /// `max(1, sum of |parts|)`.
    pub scale: f64,
}

impl Balance {
    fn of(parts: &[f64]) -> Self {
        Balance {
            value: parts.iter().sum(),
            scale: parts.iter().map(|p| p.abs()).sum::<f64>().max(1.0),
        }
    }

    pub fn relative(&self) -> f64 {
        self.value.abs() / self.scale
    }
}

fn weak_parts(u: &Expr, data: &PrescribedData, v: &Expr) -> (Vec<Expr>, Vec<Expr>) {
    let interior = vec![
        lap(u) * lap(v),
        2.0 * grad_dot(u, v),
        6.0 * v.clone(),
        -2.0 * data.q.expr().clone() * (4.0 * u.clone()).exp() * v.clone(),
    ];
    let boundary = vec![-2.0 * data.t.expr().clone() * (3.0 * u.clone()).exp() * v.clone()];
    (interior, boundary)
}

/// `int lap u lap v + 2 int <grad u, grad v> + 6 int v
///  - 2 int_{S^3} T e^{3u} v - 2 int Q e^{4u} v`.
pub fn weak_residual(u: &Expr, data: &PrescribedData, v: &Expr, rules: &Rules) -> Result<Balance, QuadError> {
    Ok(weak_residuals(u, data, std::slice::from_ref(v), rules)?[0])
}

/// Residuals against several test functions from one pass per rule.
pub fn weak_residuals(u: &Expr, data: &PrescribedData, vs: &[Expr], rules: &Rules) -> Result<Vec<Balance>, QuadError> {
    let (mut interior, mut boundary) = (Vec::new(), Vec::new());
    for v in vs {
        let (i, b) = weak_parts(u, data, v);
        interior.extend(i);
        boundary.extend(b);
    }
    let (a, b) = rules.integrate(&interior, &boundary)?;
    Ok((0..vs.len())
        .map(|k| {
            let mut parts = a[4 * k..4 * k + 4].to_vec();
            parts.push(b[k]);
            Balance::of(&parts)
        })
        .collect())
}

/// `S(u + v) - S(u) - S~(v)` with
/// `S~(v) = q(v, v) + 4 int Q v e^{4u} + 4 int_{S^3} T v e^{3u}`.
pub fn cocycle_defect(u: &Expr, data: &PrescribedData, v: &Expr, rules: &Rules) -> Result<Balance, QuadError> {
    let w = u.clone() + v.clone();
    let mut interior = s_integrands(&w).to_vec();
    interior.extend(s_integrands(u));
    interior.push(lap(v) * lap(v) + 2.0 * grad_dot(v, v));
    interior.push(4.0 * data.q.expr().clone() * v.clone() * (4.0 * u.clone()).exp());
    let boundary = [4.0 * data.t.expr().clone() * v.clone() * (3.0 * u.clone()).exp()];
    let (a, b) = rules.integrate(&interior, &boundary)?;
    let s_w: f64 = a[..3].iter().sum();
    let s_u: f64 = a[3..6].iter().sum();
    Ok(Balance::of(&[s_w, -s_u, -a[6], -a[7], -b[0]]))
}
