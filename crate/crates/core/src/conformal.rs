//! Boundary-preserving conformal maps and vector fields of `S^4_+`.
//!
//! Maps are `Psi = stereo_inv . Phi_a . R . stereo` with `stereo` the
//! projection from the south pole onto the unit ball `B^4` (identity on the
//! equator), `R` a rotation of R^4 and `Phi_a` the ball automorphism with
//! `Phi_a(0) = a`. Vector fields span the algebra of rotations fixing `e5`
//! and the gradient fields `X_i = e_i - x_i x`, `i = 1..4`.

use nalgebra::{Matrix4, Matrix5, Vector4, Vector5};
use thiserror::Error;

use crate::expr::{EvalError, Expr, Point, Tape, DIM};
use crate::sphere::{dot, norm, project_tangent, ScalarField, SpherePoint};

/// Largest `|t|` accepted by [`flow`].
pub const MAX_FLOW_TIME: f64 = 0.5;
/// RK4 step bound.
pub const FLOW_STEP: f64 = 1e-3;
/// Finite-difference step of the flow Jacobian.
pub const JACOBIAN_STEP: f64 = 1e-5;

/// Index pairs of the rotation generators, 1-based, in basis order.
pub const ROTATION_PLANES: [(usize, usize); 6] = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConformalError {
    #[error("point {0:?} too close to the south pole")]
    SouthPole(Point),
    #[error("ball point {0:?} outside the closed unit ball")]
    OutsideBall([f64; 4]),
    #[error("Mobius parameter |a| = {0} must be < 1 - 1e-9")]
    BadParameter(f64),
    #[error("rotation matrix is not orthogonal with determinant +1")]
    NotRotation,
    #[error("rotation plane ({0}, {1}) invalid; need 1 <= i < j <= 4")]
    BadPlane(usize, usize),
    #[error("flow time {0} outside [-0.5, 0.5]")]
    FlowTime(f64),
    #[error("flow left the admissible region at {0:?}")]
    FlowFailed(Point),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Point of the closed unit ball of R^4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallPoint([f64; 4]);

impl BallPoint {
    pub fn new(y: [f64; 4]) -> Result<Self, ConformalError> {
        if norm4(&y) > 1.0 + 1e-12 || y.iter().any(|v| !v.is_finite()) {
            return Err(ConformalError::OutsideBall(y));
        }
        Ok(BallPoint(y))
    }

    pub fn coords(&self) -> &[f64; 4] {
        &self.0
    }
}

fn norm4(y: &[f64; 4]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Stereographic projection `x_bar / (1 + x5)`.
pub fn stereo(p: &SpherePoint) -> Result<BallPoint, ConformalError> {
    let x = p.coords();
    if x[4] <= -1.0 + 1e-9 {
        return Err(ConformalError::SouthPole(*x));
    }
    Ok(BallPoint(stereo_raw(x)))
}

fn stereo_raw(x: &Point) -> [f64; 4] {
    let d = 1.0 + x[4];
    [x[0] / d, x[1] / d, x[2] / d, x[3] / d]
}

/// `(2y, 1 - |y|^2) / (1 + |y|^2)`.
pub fn stereo_inv(y: &BallPoint) -> SpherePoint {
    SpherePoint::normalized(stereo_inv_raw(&y.0)).expect("closed ball maps to the upper hemisphere")
}

fn stereo_inv_raw(y: &[f64; 4]) -> Point {
    let n2: f64 = y.iter().map(|v| v * v).sum();
    let d = 1.0 + n2;
    [2.0 * y[0] / d, 2.0 * y[1] / d, 2.0 * y[2] / d, 2.0 * y[3] / d, (1.0 - n2) / d]
}

/// Ball automorphism `y -> Phi_a(R y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MobiusMap {
    a: [f64; 4],
    rot: Matrix4<f64>,
}

impl MobiusMap {
    pub fn new(a: [f64; 4], rot: Matrix4<f64>) -> Result<Self, ConformalError> {
        let na = norm4(&a);
        if !(na < 1.0 - 1e-9) {
            return Err(ConformalError::BadParameter(na));
        }
        let err = (rot.transpose() * rot - Matrix4::identity()).abs().max();
        if err > 1e-12 || rot.determinant() < 0.0 {
            return Err(ConformalError::NotRotation);
        }
        Ok(MobiusMap { a, rot })
    }

    pub fn identity() -> Self {
        MobiusMap {
            a: [0.0; 4],
            rot: Matrix4::identity(),
        }
    }

    /// `a` with `R = I`.
    pub fn translation(a: [f64; 4]) -> Result<Self, ConformalError> {
        MobiusMap::new(a, Matrix4::identity())
    }

    /// Rotation composed from plane rotations `(i, j, angle)`, applied
    /// left to right. A positive angle turns `e_i` towards `e_j`.
    pub fn rotation_from_planes(planes: &[(usize, usize, f64)]) -> Result<Matrix4<f64>, ConformalError> {
        let mut r = Matrix4::identity();
        for &(i, j, angle) in planes {
            if !(1..=4).contains(&i) || !(1..=4).contains(&j) || i == j {
                return Err(ConformalError::BadPlane(i, j));
            }
            let mut g = Matrix4::identity();
            let (s, c) = angle.sin_cos();
            g[(i - 1, i - 1)] = c;
            g[(j - 1, j - 1)] = c;
            g[(j - 1, i - 1)] = s;
            g[(i - 1, j - 1)] = -s;
            r = g * r;
        }
        Ok(r)
    }

    pub fn a(&self) -> &[f64; 4] {
        &self.a
    }

    pub fn rotation(&self) -> &Matrix4<f64> {
        &self.rot
    }

    pub fn is_identity(&self) -> bool {
        self.a == [0.0; 4] && self.rot == Matrix4::identity()
    }

    fn rotate(&self, y: &[f64; 4]) -> [f64; 4] {
        (self.rot * Vector4::from(*y)).into()
    }

    /// Applied to any point of R^4 where the denominator is nonzero.
    fn apply_raw(&self, y: &[f64; 4]) -> [f64; 4] {
        phi(&self.a, &self.rotate(y))
    }

    /// `R^T Phi_{-a}(y)`, the inverse map.
    fn inverse_raw(&self, y: &[f64; 4]) -> [f64; 4] {
        let b = self.a.map(|v| -v);
        (self.rot.transpose() * Vector4::from(phi(&b, y))).into()
    }

    /// Flat conformal factor `|d(Phi_a R)|` at `y`.
    fn stretch(&self, y: &[f64; 4]) -> f64 {
        let ry = self.rotate(y);
        let a2: f64 = self.a.iter().map(|v| v * v).sum();
        let ay: f64 = self.a.iter().zip(&ry).map(|(p, q)| p * q).sum();
        let y2: f64 = y.iter().map(|v| v * v).sum();
        (1.0 - a2) / (1.0 + 2.0 * ay + a2 * y2)
    }
}

fn phi(a: &[f64; 4], y: &[f64; 4]) -> [f64; 4] {
    let a2: f64 = a.iter().map(|v| v * v).sum();
    let ay: f64 = a.iter().zip(y).map(|(p, q)| p * q).sum();
    let y2: f64 = y.iter().map(|v| v * v).sum();
    let den = 1.0 + 2.0 * ay + a2 * y2;
    let k = 1.0 + 2.0 * ay + y2;
    std::array::from_fn(|i| ((1.0 - a2) * y[i] + k * a[i]) / den)
}

pub fn mobius_ball(m: &MobiusMap, y: &BallPoint) -> BallPoint {
    BallPoint(m.apply_raw(&y.0))
}

/// Symbolic `Phi_a(R y)` for expression components `y`.
fn phi_expr(m: &MobiusMap, y: &[Expr; 4]) -> [Expr; 4] {
    let ry: [Expr; 4] = std::array::from_fn(|i| Expr::sum((0..4).map(|k| m.rot[(i, k)] * y[k].clone())));
    let a2: f64 = m.a.iter().map(|v| v * v).sum();
    let ay = Expr::sum((0..4).map(|i| m.a[i] * ry[i].clone()));
    let y2 = Expr::sum(y.iter().map(|v| v.clone() * v.clone()));
    let den = 1.0 + 2.0 * ay.clone() + a2 * y2.clone();
    let k = 1.0 + 2.0 * ay + y2;
    std::array::from_fn(|i| ((1.0 - a2) * ry[i].clone() + m.a[i] * k.clone()) / den.clone())
}

fn stereo_expr(x: &[Expr; 5]) -> [Expr; 4] {
    let d = 1.0 + x[4].clone();
    std::array::from_fn(|i| x[i].clone() / d.clone())
}

fn stereo_inv_expr(y: &[Expr; 4]) -> [Expr; 5] {
    let n2 = Expr::sum(y.iter().map(|v| v.clone() * v.clone()));
    let d = 1.0 + n2.clone();
    std::array::from_fn(|i| if i < 4 { 2.0 * y[i].clone() / d.clone() } else { (1.0 - n2.clone()) / d.clone() })
}

/// A hemisphere map `Psi` with its inverse and conformal factor, both as
/// point maps and as expressions in the ambient coordinates.
#[derive(Debug, Clone)]
pub struct ConformalMap {
    mobius: MobiusMap,
    forward: [Expr; 5],
    inverse: [Expr; 5],
    factor: Expr,
    jacobian: Tape,
}

pub fn hemi_map(m: &MobiusMap) -> ConformalMap {
    let x = Expr::coords();
    let forward = stereo_inv_expr(&phi_expr(m, &stereo_expr(&x)));
    let inv_mobius = MobiusMap {
        a: [0.0; 4],
        rot: m.rot.transpose(),
    };
    let b = m.a.map(|v| -v);
    let y = stereo_expr(&x);
    let pre = phi_expr(
        &MobiusMap {
            a: b,
            rot: Matrix4::identity(),
        },
        &y,
    );
    let inverse = stereo_inv_expr(&phi_expr(&inv_mobius, &pre));

    let a2: f64 = m.a.iter().map(|v| v * v).sum();
    let rho = |v: &[Expr; 4]| 2.0 / (1.0 + Expr::sum(v.iter().map(|c| c.clone() * c.clone())));
    let img = phi_expr(m, &y);
    let ry: Vec<Expr> = (0..4).map(|i| Expr::sum((0..4).map(|k| m.rot[(i, k)] * y[k].clone()))).collect();
    let ay = Expr::sum((0..4).map(|i| m.a[i] * ry[i].clone()));
    let y2 = Expr::sum(y.iter().map(|v| v.clone() * v.clone()));
    let stretch = (1.0 - a2) / (1.0 + 2.0 * ay + a2 * y2);
    let factor = (rho(&img) * stretch / rho(&y)).ln();

    let jac: Vec<Expr> = forward.iter().flat_map(|f| (1..=DIM).map(move |k| f.diff(k))).collect();
    ConformalMap {
        mobius: m.clone(),
        forward,
        inverse,
        factor,
        jacobian: Tape::compile_many(&jac),
    }
}

impl ConformalMap {
    pub fn mobius(&self) -> &MobiusMap {
        &self.mobius
    }

    /// `Psi(p)` for `p` on the sphere away from the south pole.
    pub fn apply(&self, p: &Point) -> Point {
        stereo_inv_raw(&self.mobius.apply_raw(&stereo_raw(p)))
    }

    pub fn apply_inverse(&self, p: &Point) -> Point {
        stereo_inv_raw(&self.mobius.inverse_raw(&stereo_raw(p)))
    }

    /// Conformal factor `P` with `Psi^* g = e^{2P} g`.
    pub fn factor(&self, p: &Point) -> f64 {
        let y = stereo_raw(p);
        let img = self.mobius.apply_raw(&y);
        let rho = |v: &[f64; 4]| 2.0 / (1.0 + v.iter().map(|c| c * c).sum::<f64>());
        (rho(&img) * self.mobius.stretch(&y) / rho(&y)).ln()
    }

    pub fn forward_exprs(&self) -> &[Expr; 5] {
        &self.forward
    }

    pub fn inverse_exprs(&self) -> &[Expr; 5] {
        &self.inverse
    }

    pub fn factor_expr(&self) -> &Expr {
        &self.factor
    }

    /// Ambient Jacobian `d Psi_k / d x_l` of the component expressions.
    pub fn jacobian(&self, p: &Point) -> Result<[[f64; 5]; 5], EvalError> {
        let mut out = [0.0; 25];
        self.jacobian.eval_into(p, &mut out)?;
        Ok(std::array::from_fn(|k| std::array::from_fn(|l| out[5 * k + l])))
    }

    /// `dPsi_p v`.
    pub fn differential(&self, p: &Point, v: &Point) -> Result<Point, EvalError> {
        let j = self.jacobian(p)?;
        Ok(std::array::from_fn(|k| dot(&j[k], v)))
    }
}

pub fn conformal_factor(psi: &ConformalMap, p: &SpherePoint) -> f64 {
    psi.factor(p.coords())
}

/// Element of the 10-dimensional algebra of boundary-preserving conformal
/// fields, over the basis `J12, J13, J14, J23, J24, J34, X1, X2, X3, X4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraElement(pub [f64; 10]);

impl AlgebraElement {
    pub const DIM: usize = 10;

    pub fn basis(j: usize) -> Self {
        let mut c = [0.0; 10];
        c[j] = 1.0;
        AlgebraElement(c)
    }

    /// The gradient field `X_i`, `i` in `1..=4`.
    pub fn gradient(i: usize) -> Self {
        AlgebraElement::basis(5 + i)
    }

    pub fn coeffs(&self) -> &[f64; 10] {
        &self.0
    }

    pub fn is_rotation(&self) -> bool {
        self.0[6..].iter().all(|&c| c == 0.0)
    }

    pub fn name(j: usize) -> String {
        if j < 6 {
            let (a, b) = ROTATION_PLANES[j];
            format!("J{a}{b}")
        } else {
            format!("X{}", j - 5)
        }
    }

    /// Skew matrix of the rotation part acting on R^5.
    pub fn rotation_matrix(&self) -> Matrix5<f64> {
        let mut m = Matrix5::zeros();
        for (k, &(i, j)) in ROTATION_PLANES.iter().enumerate() {
            m[(j - 1, i - 1)] += self.0[k];
            m[(i - 1, j - 1)] -= self.0[k];
        }
        m
    }

    /// The field at any point of R^5 (tangent when `|x| = 1`).
    pub fn eval(&self, x: &Point) -> Point {
        let mut v = [0.0; 5];
        for (k, &(i, j)) in ROTATION_PLANES.iter().enumerate() {
            let c = self.0[k];
            v[j - 1] += c * x[i - 1];
            v[i - 1] -= c * x[j - 1];
        }
        let s: f64 = (0..4).map(|i| self.0[6 + i] * x[i]).sum();
        for i in 0..4 {
            v[i] += self.0[6 + i];
        }
        for k in 0..5 {
            v[k] -= s * x[k];
        }
        v
    }

    /// Field components as polynomial expressions.
    pub fn exprs(&self) -> [Expr; 5] {
        let x = Expr::coords();
        let s = Expr::sum((0..4).map(|i| self.0[6 + i] * x[i].clone()));
        std::array::from_fn(|k| {
            let mut e = Expr::zero();
            for (m, &(i, j)) in ROTATION_PLANES.iter().enumerate() {
                if j - 1 == k {
                    e = e + self.0[m] * x[i - 1].clone();
                }
                if i - 1 == k {
                    e = e - self.0[m] * x[j - 1].clone();
                }
            }
            if k < 4 {
                e = e + self.0[6 + k];
            }
            e - s.clone() * x[k].clone()
        })
    }

    /// `X(F)` as an expression: the ambient gradient paired with the field.
    pub fn derivative_expr(&self, f: &Expr) -> Expr {
        Expr::dot(&self.exprs(), &f.gradient())
    }

    /// Divergence on the sphere; rotations are Killing.
    pub fn divergence(&self, x: &Point) -> f64 {
        (0..4).map(|i| -4.0 * self.0[6 + i] * x[i]).sum()
    }
}

impl std::ops::Add for AlgebraElement {
    type Output = AlgebraElement;
    fn add(self, o: Self) -> Self {
        AlgebraElement(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }
}

impl std::ops::Mul<AlgebraElement> for f64 {
    type Output = AlgebraElement;
    fn mul(self, c: AlgebraElement) -> AlgebraElement {
        AlgebraElement(c.0.map(|v| self * v))
    }
}

pub fn algebra_eval(c: &AlgebraElement, p: &SpherePoint) -> Point {
    c.eval(p.coords())
}

pub fn divergence(c: &AlgebraElement, p: &SpherePoint) -> f64 {
    c.divergence(p.coords())
}

/// `(Psi_* X)(p) = dPsi_{Psi^{-1}(p)} X(Psi^{-1}(p))`.
pub fn pushforward(psi: &ConformalMap, c: &AlgebraElement, p: &Point) -> Result<Point, EvalError> {
    let q = psi.apply_inverse(p);
    psi.differential(&q, &c.eval(&q))
}

/// `X(f)` at `p` for the pushed-forward field.
pub fn pushforward_derivative(psi: &ConformalMap, c: &AlgebraElement, f: &ScalarField, p: &Point) -> Result<f64, EvalError> {
    let x = pushforward(psi, c, p)?;
    let (_, g) = f.jet(p)?;
    Ok(dot(&x, &g))
}

/// Endpoint of a flow and the conformal factor at the starting point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowResult {
    pub endpoint: SpherePoint,
    pub factor: f64,
}

/// Integrates `x' = X(x)` from `p` for time `t` with renormalized RK4; pure
/// rotations use the exact matrix exponential.
pub fn flow_point(c: &AlgebraElement, p: &Point, t: f64) -> Result<Point, ConformalError> {
    Ok(flow_with_factor(c, p, t)?.0)
}

/// Flow endpoint together with `P_t(p) = 1/4 int_0^t div X(phi_s(p)) ds`,
/// integrated by the same RK4 steps.
pub fn flow_with_factor(c: &AlgebraElement, p: &Point, t: f64) -> Result<(Point, f64), ConformalError> {
    Flow::new(c, t)?.apply(p)
}

/// The time-`t` map of a field, prepared for many starting points.
#[derive(Debug, Clone)]
pub struct Flow {
    c: AlgebraElement,
    t: f64,
    rotation: Option<Matrix5<f64>>,
}

impl Flow {
    pub fn new(c: &AlgebraElement, t: f64) -> Result<Self, ConformalError> {
        if !(t.abs() <= MAX_FLOW_TIME) {
            return Err(ConformalError::FlowTime(t));
        }
        let rotation = c.is_rotation().then(|| (c.rotation_matrix() * t).exp());
        Ok(Flow { c: *c, t, rotation })
    }

    /// `(phi_t(p), P_t(p))`.
    pub fn apply(&self, p: &Point) -> Result<(Point, f64), ConformalError> {
        if let Some(e) = &self.rotation {
            return Ok(((e * Vector5::from(*p)).into(), 0.0));
        }
        let c = &self.c;
        let steps = (self.t.abs() / FLOW_STEP).ceil().max(1.0) as usize;
        let h = self.t / steps as f64;
        let mut x = *p;
        let mut f = 0.0;
        let add = |x: &Point, k: &Point, s: f64| -> Point { std::array::from_fn(|i| x[i] + s * k[i]) };
        for _ in 0..steps {
            let k1 = c.eval(&x);
            let x2 = add(&x, &k1, h / 2.0);
            let k2 = c.eval(&x2);
            let x3 = add(&x, &k2, h / 2.0);
            let k3 = c.eval(&x3);
            let x4 = add(&x, &k3, h);
            let k4 = c.eval(&x4);
            let d = [&x, &x2, &x3, &x4].map(|y| c.divergence(y));
            f += h / 24.0 * (d[0] + 2.0 * d[1] + 2.0 * d[2] + d[3]);
            let next: Point = std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
            let n = norm(&next);
            if !n.is_finite() || n == 0.0 {
                return Err(ConformalError::FlowFailed(x));
            }
            x = next.map(|v| v / n);
        }
        Ok((x, f))
    }
}

/// Orthonormal basis of the tangent space at a unit vector.
pub fn tangent_frame(p: &Point) -> [Point; 4] {
    let mut frame = Vec::with_capacity(4);
    for k in 0..5 {
        let mut e = [0.0; 5];
        e[k] = 1.0;
        let mut v = project_tangent(p, &e);
        for f in &frame {
            let s = dot(&v, f);
            v = std::array::from_fn(|i| v[i] - s * f[i]);
        }
        let n = norm(&v);
        if n > 0.3 {
            frame.push(v.map(|c| c / n));
        }
        if frame.len() == 4 {
            break;
        }
    }
    [frame[0], frame[1], frame[2], frame[3]]
}

/// Flow of `c` for time `t` from `p`, with `P_t(p) = 1/8 log det G` where
/// `G` is the Gram matrix of `d phi_t` on an orthonormal frame, estimated by
/// central differences along geodesics.
pub fn flow(c: &AlgebraElement, p: &SpherePoint, t: f64) -> Result<FlowResult, ConformalError> {
    let x = p.coords();
    let end = flow_point(c, x, t)?;
    let endpoint = SpherePoint::new(end).map_err(|_| ConformalError::FlowFailed(end))?;
    if t == 0.0 {
        return Ok(FlowResult { endpoint, factor: 0.0 });
    }
    let d = JACOBIAN_STEP;
    let (s, co) = d.sin_cos();
    let mut cols = [[0.0; 5]; 4];
    for (col, v) in cols.iter_mut().zip(tangent_frame(x)) {
        let plus: Point = std::array::from_fn(|i| co * x[i] + s * v[i]);
        let minus: Point = std::array::from_fn(|i| co * x[i] - s * v[i]);
        let a = flow_point(c, &plus, t)?;
        let b = flow_point(c, &minus, t)?;
        *col = std::array::from_fn(|i| (a[i] - b[i]) / (2.0 * d));
    }
    let gram = Matrix4::from_fn(|i, j| dot(&cols[i], &cols[j]));
    let det = gram.determinant();
    if !(det > 0.0) {
        return Err(ConformalError::FlowFailed(end));
    }
    Ok(FlowResult {
        endpoint,
        factor: det.ln() / 8.0,
    })
}
