//! Product quadrature on `S^4_+` and on the equator `S^3`.
//!
//! Boundary: Hopf coordinates
//! `w = (cos a cos p1, cos a sin p1, sin a cos p2, sin a sin p2)` with
//! `s = cos 2a` (so `dS = ds dp1 dp2 / 4`), Gauss-Legendre in `s` and periodic
//! trapezoid rules in `p1`, `p2`.
//!
//! Hemisphere: `x = (sin t * w, cos t)` with `dV = sin^3 t dt dS(w)`.
//! Substituting `z = cos t` turns the polar factor into `(1 - z^2) dz` on
//! `[0, 1]`, integrated by Gauss-Legendre, which is exact for polynomials.
//!
//! Rules at the default sizes have tens of millions of nodes, so a
//! [`QuadRule`] stores only the 1-D factors and generates nodes on demand.

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{EvalError, Expr, Point, Tape, BATCH};

/// Default `(n_theta, n_t, n_psi)`.
pub const DEFAULT_SIZES: (usize, usize, usize) = (48, 48, 96);

/// Nodes per leaf of the summation tree.
const LEAF: usize = 4 * BATCH;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Hemisphere,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("invalid rule size: {0}")]
    InvalidSize(String),
    #[error("evaluation failed at node {node} ({point:?}): {source}")]
    Eval {
        node: usize,
        point: Point,
        #[source]
        source: EvalError,
    },
}

/// A product rule, stored as its one-dimensional factors.
#[derive(Debug, Clone)]
pub struct QuadRule {
    domain: Domain,
    n_theta: usize,
    n_t: usize,
    n_psi: usize,
    /// `(cos t, sin t, weight)` including the `(1 - z^2)` factor.
    polar: Vec<(f64, f64, f64)>,
    /// `(cos a, sin a, weight)` including the Jacobian `1/4`.
    hopf: Vec<(f64, f64, f64)>,
    /// `(cos p, sin p)`, uniform in `[0, 2 pi)`.
    psi: Vec<(f64, f64)>,
    psi_weight: f64,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = vec![(0.0, 0.0); n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let dp = legendre(n, x).1;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out[i] = (-x, w);
        out[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        out[n / 2].0 = 0.0;
    }
    out
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

impl QuadRule {
    pub fn hemisphere(n_theta: usize, n_t: usize, n_psi: usize) -> Result<Self, QuadError> {
        if n_theta < 2 {
            return Err(QuadError::InvalidSize(format!("n_theta = {n_theta} < 2")));
        }
        let mut rule = QuadRule::boundary(n_t, n_psi)?;
        rule.domain = Domain::Hemisphere;
        rule.n_theta = n_theta;
        rule.polar = gauss_legendre(n_theta)
            .into_iter()
            .map(|(x, w)| {
                let z = 0.5 * (x + 1.0);
                let sin = (1.0 - z * z).sqrt();
                (z, sin, 0.5 * w * (1.0 - z * z))
            })
            .collect();
        Ok(rule)
    }

    pub fn boundary(n_t: usize, n_psi: usize) -> Result<Self, QuadError> {
        if n_t < 2 {
            return Err(QuadError::InvalidSize(format!("n_t = {n_t} < 2")));
        }
        if n_psi < 4 {
            return Err(QuadError::InvalidSize(format!("n_psi = {n_psi} < 4")));
        }
        let hopf = gauss_legendre(n_t)
            .into_iter()
            .map(|(s, w)| (((1.0 + s) / 2.0).sqrt(), ((1.0 - s) / 2.0).sqrt(), 0.25 * w))
            .collect();
        let step = 2.0 * std::f64::consts::PI / n_psi as f64;
        let psi = (0..n_psi).map(|j| ((j as f64 * step).cos(), (j as f64 * step).sin())).collect();
        Ok(QuadRule {
            domain: Domain::Boundary,
            n_theta: 0,
            n_t,
            n_psi,
            polar: vec![(0.0, 1.0, 1.0)],
            hopf,
            psi,
            psi_weight: step,
        })
    }

    /// Hemisphere rule with `n_theta = n_t = n` and `n_psi = 2n`.
    pub fn hemisphere_n(n: usize) -> Result<Self, QuadError> {
        QuadRule::hemisphere(n, n, 2 * n)
    }

    pub fn boundary_n(n: usize) -> Result<Self, QuadError> {
        QuadRule::boundary(n, 2 * n)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// `(n_theta, n_t, n_psi)`; `n_theta` is 0 for boundary rules.
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.n_theta, self.n_t, self.n_psi)
    }

    pub fn len(&self) -> usize {
        self.polar.len() * self.hopf.len() * self.psi.len() * self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node `k` and its weight. Index order is polar, Hopf, `p1`, `p2`,
    /// with `p2` fastest.
    pub fn node(&self, k: usize) -> (Point, f64) {
        let np = self.psi.len();
        let j2 = k % np;
        let j1 = (k / np) % np;
        let ih = (k / (np * np)) % self.hopf.len();
        let it = k / (np * np * self.hopf.len());
        let (z, st, wt) = self.polar[it];
        let (ca, sa, wa) = self.hopf[ih];
        let (c1, s1) = self.psi[j1];
        let (c2, s2) = self.psi[j2];
        let x = [st * ca * c1, st * ca * s1, st * sa * c2, st * sa * s2, z];
        (x, wt * wa * self.psi_weight * self.psi_weight)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (Point, f64)> + '_ {
        (0..self.len()).map(|k| self.node(k))
    }

    fn fill(&self, start: usize, pts: &mut [Point], w: &mut [f64]) {
        for (i, (p, wi)) in pts.iter_mut().zip(w.iter_mut()).enumerate() {
            (*p, *wi) = self.node(start + i);
        }
    }

    /// Integrates `m` functions at once. `f(points, out)` must fill
    /// `out[k * m + j]` with function `j` at `points[k]`, or return the
    /// offending local index.
    ///
    /// Summation follows a fixed binary tree over node indices, so the
    /// result does not depend on the number of worker threads.
    pub fn integrate_many<F>(&self, m: usize, f: F) -> Result<Vec<f64>, QuadError>
    where
        F: Fn(&[Point], &mut [f64]) -> Result<(), (usize, EvalError)> + Sync,
    {
        self.reduce(0, self.len(), m, &f)
    }

    fn reduce<F>(&self, lo: usize, hi: usize, m: usize, f: &F) -> Result<Vec<f64>, QuadError>
    where
        F: Fn(&[Point], &mut [f64]) -> Result<(), (usize, EvalError)> + Sync,
    {
        let n = hi - lo;
        if n <= LEAF {
            let mut pts = vec![[0.0; 5]; n];
            let mut w = vec![0.0; n];
            self.fill(lo, &mut pts, &mut w);
            let mut vals = vec![0.0; n * m];
            f(&pts, &mut vals).map_err(|(k, source)| QuadError::Eval {
                node: lo + k,
                point: pts[k],
                source,
            })?;
            let mut col = vec![0.0; n];
            return Ok((0..m)
                .map(|j| {
                    for k in 0..n {
                        col[k] = w[k] * vals[k * m + j];
                    }
                    pairwise_sum(&col)
                })
                .collect());
        }
        let mid = lo + n / 2;
        let (a, b) = rayon::join(|| self.reduce(lo, mid, m, f), || self.reduce(mid, hi, m, f));
        let (mut a, b) = (a?, b?);
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
        Ok(a)
    }

    /// `sum w_k f(p_k)` for a pointwise evaluator.
    pub fn integrate<F>(&self, f: F) -> Result<f64, QuadError>
    where
        F: Fn(&Point) -> Result<f64, EvalError> + Sync,
    {
        let v = self.integrate_many(1, |pts, out| {
            for (k, p) in pts.iter().enumerate() {
                out[k] = f(p).map_err(|e| (k, e))?;
            }
            Ok(())
        })?;
        Ok(v[0])
    }

    /// Integrates every output of a compiled tape.
    pub fn integrate_tape(&self, tape: &Tape) -> Result<Vec<f64>, QuadError> {
        self.integrate_many(tape.num_outputs(), |pts, out| tape.eval_batch(pts, out))
    }

    pub fn integrate_expr(&self, e: &Expr) -> Result<f64, QuadError> {
        Ok(self.integrate_tape(&Tape::compile(e))?[0])
    }

    /// Applies `f` to every node in parallel and folds per-node results with
    /// `combine` in index order within leaves and tree order across them.
    pub fn fold_nodes<T, F, C>(&self, identity: T, f: F, combine: C) -> Result<T, QuadError>
    where
        T: Clone + Send + Sync,
        F: Fn(usize, &Point, f64) -> Result<T, EvalError> + Sync,
        C: Fn(T, T) -> T + Sync,
    {
        let leaves = self.len().div_ceil(LEAF);
        let parts: Vec<Result<T, QuadError>> = (0..leaves)
            .into_par_iter()
            .map(|l| {
                let mut acc = identity.clone();
                for k in l * LEAF..((l + 1) * LEAF).min(self.len()) {
                    let (p, w) = self.node(k);
                    let v = f(k, &p, w).map_err(|source| QuadError::Eval { node: k, point: p, source })?;
                    acc = combine(acc, v);
                }
                Ok(acc)
            })
            .collect();
        parts.into_iter().try_fold(identity, |acc, r| Ok(combine(acc, r?)))
    }
}

/// Pairwise sum with an 8-term naive base case.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        v.iter().sum()
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::expr::parse;

    #[test]
    fn legendre_rule_is_exact() {
        for n in [2, 3, 7, 20, 48] {
            let r = gauss_legendre(n);
            assert!((r.iter().map(|x| x.1).sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..2 * n {
                let q: f64 = r.iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} {q} {exact}");
            }
        }
    }

    #[test]
    fn volumes() {
        let h = QuadRule::hemisphere(6, 5, 8).unwrap();
        let b = QuadRule::boundary(5, 8).unwrap();
        assert_eq!(h.len(), 6 * 5 * 64);
        assert_eq!(b.len(), 5 * 64);
        let vh = h.integrate(|_| Ok(1.0)).unwrap();
        let vb = b.integrate(|_| Ok(1.0)).unwrap();
        assert!((vh / (4.0 * PI * PI / 3.0) - 1.0).abs() < 1e-14);
        assert!((vb / (2.0 * PI * PI) - 1.0).abs() < 1e-14);
        for (p, w) in h.nodes() {
            assert!(w > 0.0);
            assert!((p.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(p[4] > 0.0);
        }
        assert!(b.nodes().all(|(p, _)| p[4] == 0.0));
    }

    #[test]
    fn size_validation() {
        assert!(QuadRule::hemisphere(1, 4, 8).is_err());
        assert!(QuadRule::boundary(1, 8).is_err());
        assert!(QuadRule::boundary(4, 3).is_err());
    }

    #[test]
    fn node_error_is_located() {
        let h = QuadRule::hemisphere(4, 4, 8).unwrap();
        let err = h.integrate_expr(&parse("1/(x1 - x1)").unwrap()).unwrap_err();
        assert!(matches!(err, QuadError::Eval { node: 0, .. }));
    }

    #[test]
    fn deterministic_under_thread_count() {
        let h = QuadRule::hemisphere(10, 10, 20).unwrap();
        let e = parse("exp(x5)*cos(x1 + 2*x3)").unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| h.integrate_expr(&e).unwrap());
        let b = three.install(|| h.integrate_expr(&e).unwrap());
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
