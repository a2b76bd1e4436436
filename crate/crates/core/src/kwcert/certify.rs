//! LP search for an algebra element `c` with `X_c(Q) >= 0` on the
//! hemisphere and `X_c(T) >= 0` on the equator, followed by verification on
//! a denser grid.

use std::sync::Arc;

use thiserror::Error;

use super::simplex::{maximize, LpError};
use crate::conformal::{AlgebraElement, ConformalMap};
use crate::expr::{EvalError, Point, Tape, DIM};
use crate::functionals::PrescribedData;
use crate::quadrature::{QuadError, QuadRule};
use crate::sphere::dot;

const NB: usize = AlgebraElement::DIM;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertError {
    #[error("too few samples: {interior} interior, {boundary} boundary (need 500 and 200)")]
    TooFewSamples { interior: usize, boundary: usize },
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Interior and boundary sample grids (quadrature nodes; weights unused).
#[derive(Debug, Clone)]
pub struct Sampling {
    pub interior: QuadRule,
    pub boundary: QuadRule,
}

impl Sampling {
    /// Grids with `n_theta = n_t = n`, `n_psi = 2n`.
    pub fn uniform(n: usize) -> Result<Self, QuadError> {
        Ok(Sampling {
            interior: QuadRule::hemisphere_n(n)?,
            boundary: QuadRule::boundary_n(n)?,
        })
    }

    /// At least ten times as many nodes on each domain. Interior node counts
    /// grow like `n^4` and boundary counts like `n^3`.
    pub fn denser(&self) -> Result<Self, QuadError> {
        let (_, ni, _) = self.interior.sizes();
        let (_, nb, _) = self.boundary.sizes();
        let scale = |n: usize, root: f64| (n as f64 * 10f64.powf(1.0 / root)).ceil() as usize;
        let interior = QuadRule::hemisphere_n(scale(ni, 4.0))?;
        let boundary = QuadRule::boundary_n(scale(nb, 3.0))?;
        debug_assert!(interior.len() >= 10 * self.interior.len());
        debug_assert!(boundary.len() >= 10 * self.boundary.len());
        Ok(Sampling { interior, boundary })
    }
}

#[derive(Debug, Clone)]
pub struct CertifyOptions {
    /// Conjugating map; the basis becomes `Psi_* B_j`.
    pub psi: Option<Arc<ConformalMap>>,
    pub eps_obj: f64,
    /// Multiplied by the fine-grid scale.
    pub eps_verify: f64,
    pub eps_strict: f64,
    /// Rounds of adding violated fine-grid points and re-solving.
    pub refine_rounds: usize,
    pub cuts_per_round: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            psi: None,
            eps_obj: 1e-6,
            eps_verify: 1e-9,
            eps_strict: 1e-6,
            refine_rounds: 4,
            cuts_per_round: 256,
        }
    }
}

/// Extremes of `X(Q)` and `X(T)` over a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    pub interior_min: f64,
    pub boundary_min: f64,
    /// Largest value over both grids.
    pub max: f64,
    /// `max |X(Q)| + max |X(T)|`.
    pub scale: f64,
    pub interior_argmin: Point,
    pub boundary_argmin: Point,
    pub interior_samples: usize,
    pub boundary_samples: usize,
}

impl Margins {
    pub fn accepts(&self, opts: &CertifyOptions) -> bool {
        let tol = opts.eps_verify * self.scale;
        self.interior_min >= -tol && self.boundary_min >= -tol && self.max > opts.eps_strict * self.scale
    }
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub c: AlgebraElement,
    pub psi: Option<Arc<ConformalMap>>,
    pub objective: f64,
    /// Minima over the LP samples.
    pub coarse_interior_min: f64,
    pub coarse_boundary_min: f64,
    pub fine: Margins,
    pub lp_rows: usize,
    pub refinements: usize,
}

/// No certificate; says nothing about existence.
#[derive(Debug, Clone)]
pub struct NoneFound {
    pub reason: String,
    pub objective: f64,
    pub c: Option<AlgebraElement>,
    pub fine: Option<Margins>,
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Certificate(Certificate),
    NoneFound(NoneFound),
}

/// Evaluates `X_j(F)` for all ten basis fields at sample points, where the
/// sample for grid node `p` is `Psi(p)` and the field is pushed forward.
struct Assembler<'a> {
    psi: Option<&'a ConformalMap>,
    jet: Tape,
    boundary: bool,
}

impl Assembler<'_> {
    /// Row `[X_1(F), ..., X_10(F)]` at the sample belonging to node `p`,
    /// and the sample point.
    fn row(&self, p: &Point) -> Result<([f64; NB], Point), EvalError> {
        let (s, fields) = match self.psi {
            None => (*p, basis_at(p)),
            Some(psi) => {
                let jac = psi.jacobian(p)?;
                let b = basis_at(p);
                let pushed = b.map(|v| std::array::from_fn(|k| dot(&jac[k], &v)));
                (psi.apply(p), pushed)
            }
        };
        let mut g = [0.0; DIM + 1];
        self.jet.eval_into(&s, &mut g)?;
        let grad: Point = std::array::from_fn(|k| g[k + 1]);
        Ok((
            std::array::from_fn(|j| {
                let mut x = fields[j];
                if self.boundary {
                    x[4] = 0.0;
                }
                dot(&x, &grad)
            }),
            s,
        ))
    }

    fn rows(&self, rule: &QuadRule) -> Result<Vec<[f64; NB]>, QuadError> {
        rule.fold_nodes(
            Vec::new(),
            |_, p, _| Ok(vec![self.row(p)?.0]),
            |mut a, b| {
                a.extend(b);
                a
            },
        )
    }
}

fn basis_at(p: &Point) -> [Point; NB] {
    std::array::from_fn(|j| AlgebraElement::basis(j).eval(p))
}

fn jet_tape(f: &crate::sphere::ScalarField) -> Tape {
    let mut outs = vec![f.expr().clone()];
    outs.extend(f.expr().gradient());
    Tape::compile_many(&outs)
}

fn apply(row: &[f64; NB], c: &AlgebraElement) -> f64 {
    row.iter().zip(&c.0).map(|(a, b)| a * b).sum()
}

/// Fine-grid margins of `X_c(Q)` and `X_c(T)`.
pub fn verify_certificate(
    c: &AlgebraElement,
    data: &PrescribedData,
    fine: &Sampling,
    psi: Option<&ConformalMap>,
) -> Result<Margins, QuadError> {
    let int = Assembler {
        psi,
        jet: jet_tape(&data.q),
        boundary: false,
    };
    let bd = Assembler {
        psi,
        jet: jet_tape(&data.t),
        boundary: true,
    };
    // (min, argmin, max, max |.|)
    type Ext = (f64, Point, f64, f64);
    let id: Ext = (f64::INFINITY, [0.0; 5], f64::NEG_INFINITY, 0.0);
    let merge = |a: Ext, b: Ext| -> Ext {
        let (m, arg) = if b.0 < a.0 { (b.0, b.1) } else { (a.0, a.1) };
        (m, arg, a.2.max(b.2), a.3.max(b.3))
    };
    let scan = |asm: &Assembler, rule: &QuadRule| {
        rule.fold_nodes(
            id,
            |_, p, _| {
                let (row, s) = asm.row(p)?;
                let v = apply(&row, c);
                Ok((v, s, v, v.abs()))
            },
            merge,
        )
    };
    let i = scan(&int, &fine.interior)?;
    let b = scan(&bd, &fine.boundary)?;
    Ok(Margins {
        interior_min: i.0,
        boundary_min: b.0,
        max: i.2.max(b.2),
        scale: i.3 + b.3,
        interior_argmin: i.1,
        boundary_argmin: b.1,
        interior_samples: fine.interior.len(),
        boundary_samples: fine.boundary.len(),
    })
}

/// Solves `max g.c  s.t.  rows . c >= 0, |c_j| <= 1` with `c = p - n`,
/// `0 <= p, n <= 1`. Rows are scaled to unit max-norm; zero rows dropped.
fn solve_lp(rows: &[[f64; NB]], g: &[f64; NB]) -> Result<(AlgebraElement, f64), LpError> {
    let kept: Vec<[f64; NB]> = rows
        .iter()
        .filter_map(|r| {
            let m = r.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            (m > 0.0).then(|| r.map(|v| v / m))
        })
        .collect();
    let n = 2 * NB;
    let m = kept.len() + n;
    let mut a = vec![0.0; m * n];
    let mut b = vec![0.0; m];
    for (i, r) in kept.iter().enumerate() {
        for j in 0..NB {
            a[i * n + j] = -r[j];
            a[i * n + NB + j] = r[j];
        }
    }
    for j in 0..n {
        a[(kept.len() + j) * n + j] = 1.0;
        b[kept.len() + j] = 1.0;
    }
    let obj: Vec<f64> = g.iter().copied().chain(g.iter().map(|v| -v)).collect();
    let sol = maximize(&a, &b, &obj)?;
    let c = AlgebraElement(std::array::from_fn(|j| sol.x[j] - sol.x[NB + j]));
    Ok((c, sol.objective))
}

fn mean_row(rows: &[[f64; NB]]) -> [f64; NB] {
    let mut g = [0.0; NB];
    if rows.is_empty() {
        return g;
    }
    for r in rows {
        for j in 0..NB {
            g[j] += r[j];
        }
    }
    g.map(|v| v / rows.len() as f64)
}

/// Searches the algebra for a field with `X(Q) >= 0`, `X(T) >= 0` and not
/// both identically zero, verifying any candidate on `sampling.denser()`.
pub fn certify(data: &PrescribedData, sampling: &Sampling, opts: &CertifyOptions) -> Result<Outcome, CertError> {
    let (ni, nb) = (sampling.interior.len(), sampling.boundary.len());
    if ni < 500 || nb < 200 {
        return Err(CertError::TooFewSamples {
            interior: ni,
            boundary: nb,
        });
    }
    let psi = opts.psi.as_deref();
    let int = Assembler {
        psi,
        jet: jet_tape(&data.q),
        boundary: false,
    };
    let bd = Assembler {
        psi,
        jet: jet_tape(&data.t),
        boundary: true,
    };
    let a_int = int.rows(&sampling.interior)?;
    let a_bd = bd.rows(&sampling.boundary)?;
    let (gi, gb) = (mean_row(&a_int), mean_row(&a_bd));
    let g: [f64; NB] = std::array::from_fn(|j| gi[j] + gb[j]);
    let mut rows: Vec<[f64; NB]> = a_int.iter().chain(&a_bd).copied().collect();
    let fine = sampling.denser()?;

    let mut refinements = 0;
    loop {
        let (c, objective) = solve_lp(&rows, &g)?;
        if !(objective > opts.eps_obj) {
            return Ok(Outcome::NoneFound(NoneFound {
                reason: format!("LP objective {objective:e} <= {:e}", opts.eps_obj),
                objective,
                c: None,
                fine: None,
            }));
        }
        let margins = verify_certificate(&c, data, &fine, psi)?;
        if margins.accepts(opts) {
            let coarse_min = |a: &[[f64; NB]]| a.iter().map(|r| apply(r, &c)).fold(f64::INFINITY, f64::min);
            return Ok(Outcome::Certificate(Certificate {
                c,
                psi: opts.psi.clone(),
                objective,
                coarse_interior_min: coarse_min(&a_int),
                coarse_boundary_min: coarse_min(&a_bd),
                fine: margins,
                lp_rows: rows.len(),
                refinements,
            }));
        }
        let tol = opts.eps_verify * margins.scale;
        let violated = margins.interior_min < -tol || margins.boundary_min < -tol;
        if !violated || refinements == opts.refine_rounds {
            let reason = if violated {
                "candidate violates the sign conditions on the verification grid"
            } else {
                "candidate is trivial on the verification grid"
            };
            return Ok(Outcome::NoneFound(NoneFound {
                reason: reason.into(),
                objective,
                c: Some(c),
                fine: Some(margins),
            }));
        }
        let before = rows.len();
        rows.extend(cuts(&c, &int, &fine.interior, tol, opts.cuts_per_round)?);
        rows.extend(cuts(&c, &bd, &fine.boundary, tol, opts.cuts_per_round)?);
        if rows.len() == before {
            return Err(CertError::Lp(LpError::Numerical("no cutting planes found".into())));
        }
        refinements += 1;
    }
}

/// The most violated fine-grid rows for `c`.
fn cuts(c: &AlgebraElement, asm: &Assembler, rule: &QuadRule, tol: f64, limit: usize) -> Result<Vec<[f64; NB]>, QuadError> {
    let mut bad = rule.fold_nodes(
        Vec::new(),
        |_, p, _| {
            let row = asm.row(p)?.0;
            let v = apply(&row, c);
            Ok(if v < -tol { vec![(v, row)] } else { Vec::new() })
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    )?;
    bad.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(bad.into_iter().take(limit).map(|(_, r)| r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn data(q: &str, t: &str) -> PrescribedData {
        PrescribedData::new(parse(q).unwrap(), parse(t).unwrap()).unwrap()
    }

    #[test]
    fn monotone_data_has_certificate() {
        let out = certify(&data("3 + 0.1*x1", "1"), &Sampling::uniform(6).unwrap(), &CertifyOptions::default()).unwrap();
        let Outcome::Certificate(cert) = out else { panic!("{out:?}") };
        assert!((cert.c.0[6] - 1.0).abs() < 1e-9, "{:?}", cert.c);
        assert!(cert.fine.interior_min >= -1e-9);
        assert!((cert.fine.max - 0.1).abs() < 1e-3);
    }

    #[test]
    fn constant_data_has_none() {
        let out = certify(&data("3", "0"), &Sampling::uniform(6).unwrap(), &CertifyOptions::default()).unwrap();
        assert!(matches!(out, Outcome::NoneFound(_)));
    }

    #[test]
    fn rotation_is_rejected_by_verifier() {
        let fine = Sampling::uniform(8).unwrap();
        let m = verify_certificate(&AlgebraElement::basis(0), &data("3 + 0.1*x1", "1"), &fine, None).unwrap();
        assert!(m.interior_min < 0.0);
        assert!(!m.accepts(&CertifyOptions::default()));
        let z = verify_certificate(&AlgebraElement::gradient(1), &data("3", "0"), &fine, None).unwrap();
        assert_eq!(z.max, 0.0);
        assert!(!z.accepts(&CertifyOptions::default()));
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            certify(&data("3", "0"), &Sampling::uniform(2).unwrap(), &CertifyOptions::default()),
            Err(CertError::TooFewSamples { .. })
        ));
    }
}
