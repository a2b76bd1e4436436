//! Intrinsic calculus on the upper hemisphere `S^4_+` and its equator `S^3`.
//!
//! A field is an [`Expr`] in the ambient coordinates, restricted to the unit
//! sphere. The expression itself serves as the extension off the sphere, so
//! any smooth extension gives the same intrinsic quantities:
//!
//! * the tangential gradient is the projected ambient gradient;
//! * with `E = x . grad` the Euler operator, on `|x| = 1`
//!   `laplace G = flat_laplace G - E(E G) - 3 E G`.
//!
//! The latter avoids substituting `x / |x|` into the field, which keeps
//! iterated operators small.
//!
//! Sign convention: `laplace` has nonpositive spectrum, `laplace(x_i) = -4 x_i`.

use std::sync::OnceLock;

use thiserror::Error;

use crate::expr::{parse, EvalError, Expr, Point, SourceError, Tape, DIM};

/// Tolerance for the Neumann condition `df/dnu = 0` defining the space H.
pub const NEUMANN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point {0:?} is not on the unit sphere")]
    NotUnit(Point),
    #[error("point {0:?} is below the equator")]
    BelowEquator(Point),
    #[error("point {0:?} is not on the equator x5 = 0")]
    OffEquator(Point),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("field not in H: normal derivative {value:e} at {at:?}")]
    NotNeumann { value: f64, at: Point },
}

pub fn norm(x: &Point) -> f64 {
    dot(x, x).sqrt()
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projection `v - <v,p> p` onto the tangent space at the unit vector `p`.
pub fn project_tangent(p: &Point, v: &Point) -> Point {
    let s = dot(p, v);
    std::array::from_fn(|i| v[i] - s * p[i])
}

/// Unit vector of R^5 with `x5 >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint(Point);

impl SpherePoint {
    pub fn new(x: Point) -> Result<Self, GeometryError> {
        if (norm(&x) - 1.0).abs() > 1e-12 {
            return Err(GeometryError::NotUnit(x));
        }
        if x[4] < -1e-12 {
            return Err(GeometryError::BelowEquator(x));
        }
        Ok(SpherePoint(x))
    }

    /// Normalizes `x` first; fails for the zero vector or the lower half.
    pub fn normalized(x: Point) -> Result<Self, GeometryError> {
        let n = norm(&x);
        if n == 0.0 || !n.is_finite() {
            return Err(GeometryError::NotUnit(x));
        }
        SpherePoint::new(x.map(|v| v / n))
    }

    pub fn north_pole() -> Self {
        SpherePoint([0.0, 0.0, 0.0, 0.0, 1.0])
    }

    pub fn coords(&self) -> &Point {
        &self.0
    }
}

/// Unit vector of R^5 with `x5 = 0`, i.e. a point of the equator `S^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint(Point);

impl BoundaryPoint {
    pub fn new(x: Point) -> Result<Self, GeometryError> {
        if (norm(&x) - 1.0).abs() > 1e-12 {
            return Err(GeometryError::NotUnit(x));
        }
        if x[4].abs() > 1e-12 {
            return Err(GeometryError::OffEquator(x));
        }
        Ok(BoundaryPoint(x))
    }

    /// Embeds and normalizes a nonzero vector of R^4.
    pub fn from_r4(y: [f64; 4]) -> Result<Self, GeometryError> {
        let x = [y[0], y[1], y[2], y[3], 0.0];
        let n = norm(&x);
        if n == 0.0 {
            return Err(GeometryError::NotUnit(x));
        }
        BoundaryPoint::new(x.map(|v| v / n))
    }

    pub fn coords(&self) -> &Point {
        &self.0
    }

    pub fn as_sphere_point(&self) -> SpherePoint {
        SpherePoint(self.0)
    }
}

/// A scalar field on the sphere with lazily compiled evaluators.
pub struct ScalarField {
    expr: Expr,
    value: OnceLock<Tape>,
    jet: OnceLock<Tape>,
}

impl Clone for ScalarField {
    fn clone(&self) -> Self {
        ScalarField::new(self.expr.clone())
    }
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField").field("expr", &self.expr).finish()
    }
}

impl From<Expr> for ScalarField {
    fn from(e: Expr) -> Self {
        ScalarField::new(e)
    }
}

impl ScalarField {
    pub fn new(expr: Expr) -> Self {
        ScalarField {
            expr,
            value: OnceLock::new(),
            jet: OnceLock::new(),
        }
    }

    pub fn parse(src: &str) -> Result<Self, SourceError> {
        parse(src).map(ScalarField::new)
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::new(Expr::constant(c))
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn value_tape(&self) -> &Tape {
        self.value.get_or_init(|| Tape::compile(&self.expr))
    }

    /// Tape with outputs `[F, dF/dx1, ..., dF/dx5]`.
    pub fn jet_tape(&self) -> &Tape {
        self.jet.get_or_init(|| {
            let mut outs = vec![self.expr.clone()];
            outs.extend(self.expr.gradient());
            Tape::compile_many(&outs)
        })
    }

    /// Value at a unit vector.
    pub fn value(&self, p: &Point) -> Result<f64, EvalError> {
        self.value_tape().eval(p)
    }

    /// Value and ambient gradient.
    pub fn jet(&self, p: &Point) -> Result<(f64, Point), EvalError> {
        let mut out = [0.0; DIM + 1];
        self.jet_tape().eval_into(p, &mut out)?;
        Ok((out[0], std::array::from_fn(|i| out[i + 1])))
    }

    /// Value and tangential gradient at the unit vector `p`.
    pub fn value_and_grad(&self, p: &Point) -> Result<(f64, Point), EvalError> {
        let (v, g) = self.jet(p)?;
        Ok((v, project_tangent(p, &g)))
    }

    /// `-d F/d x5`, the derivative along the outward normal of the equator.
    pub fn normal_derivative_at(&self, p: &Point) -> Result<f64, EvalError> {
        Ok(-self.jet(p)?.1[4])
    }

    pub fn compile_all(&self) {
        self.value_tape();
        self.jet_tape();
    }
}

/// Tangential gradient `(I - p p^T) grad F(p)`.
pub fn grad(f: &ScalarField, p: &SpherePoint) -> Result<Point, EvalError> {
    Ok(f.value_and_grad(p.coords())?.1)
}

/// Laplace-Beltrami operator of `S^4`, as a new field that can be iterated.
pub fn laplace(f: &ScalarField) -> ScalarField {
    let g = f.expr();
    let eg = euler(g);
    ScalarField::new(g.flat_laplacian() - euler(&eg) - 3.0 * eg)
}

/// `x . grad g`.
fn euler(g: &Expr) -> Expr {
    Expr::sum((1..=DIM).map(|i| Expr::var(i) * g.diff(i)))
}

/// Paneitz operator of the round metric, `laplace^2 - 2 laplace`.
pub fn paneitz4(f: &ScalarField) -> ScalarField {
    let l1 = laplace(f);
    let l2 = laplace(&l1);
    ScalarField::new(l2.expr().clone() - 2.0 * l1.expr().clone())
}

/// Derivative along the outward unit normal `nu = -e5` at an equator point.
pub fn normal_derivative(f: &ScalarField, q: &BoundaryPoint) -> Result<f64, EvalError> {
    f.normal_derivative_at(q.coords())
}

/// Checks the Neumann condition at `q`.
pub fn check_neumann(f: &ScalarField, q: &BoundaryPoint) -> Result<(), FieldError> {
    let d = normal_derivative(f, q)?;
    if d.abs() > NEUMANN_TOL {
        return Err(FieldError::NotNeumann { value: d, at: *q.coords() });
    }
    Ok(())
}

/// Boundary operator `-1/2 d(laplace f)/dnu` for fields of H.
pub fn paneitz3(f: &ScalarField, q: &BoundaryPoint) -> Result<f64, FieldError> {
    check_neumann(f, q)?;
    Ok(-0.5 * normal_derivative(&laplace(f), q)?)
}

/// Derivative of `f` along the tangent field `field` at `p`.
pub fn dirderiv<X>(field: X, f: &ScalarField, p: &SpherePoint) -> Result<f64, EvalError>
where
    X: Fn(&Point) -> Point,
{
    let x = field(p.coords());
    Ok(dot(&x, &grad(f, p)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_points() -> Vec<Point> {
        let raw = [
            [0.3, -0.2, 0.5, 0.1, 0.7],
            [-0.6, 0.4, 0.1, -0.3, 0.2],
            [0.1, 0.1, -0.8, 0.4, 0.3],
            [0.0, 0.0, 0.0, 0.0, 1.0],
        ];
        raw.iter().map(|x| *SpherePoint::normalized(*x).unwrap().coords()).collect()
    }

    fn equator_points() -> Vec<BoundaryPoint> {
        [[1.0, 0.0, 0.0, 0.0], [0.3, -0.4, 0.5, 0.2], [-0.1, 0.7, 0.2, -0.6]]
            .into_iter()
            .map(|y| BoundaryPoint::from_r4(y).unwrap())
            .collect()
    }

    #[test]
    fn point_validation() {
        assert!(SpherePoint::new([1.0, 0.0, 0.0, 0.0, 0.0]).is_ok());
        assert!(SpherePoint::new([0.0, 0.0, 0.0, 0.0, -1.0]).is_err());
        assert!(SpherePoint::new([0.5, 0.0, 0.0, 0.0, 0.5]).is_err());
        assert!(BoundaryPoint::new([0.6, 0.8, 0.0, 0.0, 0.0]).is_ok());
        assert!(BoundaryPoint::new([0.6, 0.0, 0.0, 0.0, 0.8]).is_err());
    }

    #[test]
    fn gradient_of_coordinates() {
        for p in sample_points() {
            let sp = SpherePoint::new(p).unwrap();
            for i in 1..=5 {
                let g = grad(&ScalarField::new(Expr::var(i)), &sp).unwrap();
                for k in 0..5 {
                    let expected = if k + 1 == i { 1.0 } else { 0.0 } - p[i - 1] * p[k];
                    assert!((g[k] - expected).abs() < 1e-14);
                }
                assert!(dot(&g, &p).abs() < 1e-12);
                assert!((dot(&g, &g) - (1.0 - p[i - 1].powi(2))).abs() < 1e-14);
            }
            assert_eq!(grad(&ScalarField::constant(2.0), &sp).unwrap(), [0.0; 5]);
        }
    }

    #[test]
    fn laplace_and_paneitz_low_modes() {
        let x1 = ScalarField::new(Expr::var(1));
        let x1x2 = ScalarField::new(Expr::var(1) * Expr::var(2));
        for p in sample_points() {
            let v1 = p[0];
            let v2 = p[0] * p[1];
            assert!((laplace(&x1).value(&p).unwrap() + 4.0 * v1).abs() < 1e-12);
            assert!((laplace(&x1x2).value(&p).unwrap() + 10.0 * v2).abs() < 1e-12);
            assert!((paneitz4(&x1).value(&p).unwrap() - 24.0 * v1).abs() < 1e-11);
            assert!((paneitz4(&x1x2).value(&p).unwrap() - 120.0 * v2).abs() < 1e-10);
        }
        assert_eq!(laplace(&ScalarField::constant(1.0)).expr(), &Expr::zero());
        assert_eq!(paneitz4(&ScalarField::constant(1.0)).expr(), &Expr::zero());
    }

    #[test]
    fn extension_does_not_matter() {
        let f = crate::expr::parse("exp(0.3*x1)*x5^3 + x2*x4/(2 + x3)").unwrap();
        let a = ScalarField::new(f.clone());
        let b = ScalarField::new(f.homogenize0());
        let c = ScalarField::new(f * crate::expr::parse("r^2").unwrap());
        for p in sample_points() {
            let pa = paneitz4(&a).value(&p).unwrap();
            let pb = paneitz4(&b).value(&p).unwrap();
            let pc = paneitz4(&c).value(&p).unwrap();
            assert!((pa - pb).abs() < 1e-10 * (1.0 + pa.abs()), "{pa} {pb}");
            assert!((pa - pc).abs() < 1e-10 * (1.0 + pa.abs()), "{pa} {pc}");
        }
    }

    #[test]
    fn boundary_operators() {
        let x1 = ScalarField::new(Expr::var(1));
        let x5 = ScalarField::new(Expr::var(5));
        let x5c = ScalarField::new(Expr::var(5).powi(3));
        for q in equator_points() {
            assert!(normal_derivative(&x1, &q).unwrap().abs() < 1e-15);
            assert!((normal_derivative(&x5, &q).unwrap() + 1.0).abs() < 1e-15);
            let d = normal_derivative(&laplace(&x5c), &q).unwrap();
            assert!((d + 6.0).abs() < 1e-12, "{d}");
            assert!((paneitz3(&x5c, &q).unwrap() - 3.0).abs() < 1e-12);
            assert!(paneitz3(&x1, &q).unwrap().abs() < 1e-12);
            assert_eq!(paneitz3(&ScalarField::constant(1.0), &q).unwrap(), 0.0);
            assert!(matches!(paneitz3(&x5, &q), Err(FieldError::NotNeumann { .. })));
        }
    }

    #[test]
    fn directional_derivatives() {
        let x1 = ScalarField::new(Expr::var(1));
        let x3 = ScalarField::new(Expr::var(3));
        let grad_x1 = |p: &Point| -> Point { std::array::from_fn(|k| if k == 0 { 1.0 } else { 0.0 } - p[0] * p[k]) };
        let grad_x2 = |p: &Point| -> Point { std::array::from_fn(|k| if k == 1 { 1.0 } else { 0.0 } - p[1] * p[k]) };
        let rot12 = |p: &Point| -> Point { [-p[1], p[0], 0.0, 0.0, 0.0] };
        for p in sample_points() {
            let sp = SpherePoint::new(p).unwrap();
            assert!((dirderiv(grad_x1, &x1, &sp).unwrap() - (1.0 - p[0] * p[0])).abs() < 1e-14);
            assert!(dirderiv(rot12, &x3, &sp).unwrap().abs() < 1e-15);
            assert!((dirderiv(grad_x2, &x1, &sp).unwrap() + p[0] * p[1]).abs() < 1e-14);
        }
    }
}
