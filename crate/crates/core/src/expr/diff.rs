use std::collections::HashMap;

use super::{BinOp, Expr, Func, Node};

impl Expr {
    /// Exact partial derivative in flat R^5 with respect to `x_axis`.
    ///
    /// The radius symbol is treated as `(x1^2 + ... + x5^2)^(1/2)`, so
    /// `d r / d x_i = x_i / r`. Shared subtrees are differentiated once.
    pub fn diff(&self, axis: usize) -> Expr {
        assert!((1..=super::DIM).contains(&axis), "axis {axis} out of range 1..=5");
        let mut memo = HashMap::new();
        diff_rec(self, axis, &mut memo)
    }

    /// Flat gradient `[d/dx1, ..., d/dx5]`.
    pub fn gradient(&self) -> [Expr; super::DIM] {
        std::array::from_fn(|i| self.diff(i + 1))
    }

    /// Flat Laplacian `sum_i d^2/dx_i^2` in R^5.
    pub fn flat_laplacian(&self) -> Expr {
        Expr::sum((1..=super::DIM).map(|i| self.diff(i).diff(i)))
    }
}

fn diff_rec(e: &Expr, axis: usize, memo: &mut HashMap<*const Node, Expr>) -> Expr {
    if let Some(d) = memo.get(&e.key()) {
        return d.clone();
    }
    let d = match e.node() {
        Node::Const(_) => Expr::zero(),
        Node::Var(a) => {
            if *a == axis {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Radius => Expr::var(axis) / Expr::radius(),
        Node::Unary(f, a) => {
            let da = diff_rec(a, axis, memo);
            if da.as_const() == Some(0.0) {
                Expr::zero()
            } else {
                match f {
                    Func::Neg => -da,
                    Func::Exp => e.clone() * da,
                    Func::Log => da / a.clone(),
                    Func::Sqrt => da / (2.0 * e.clone()),
                    Func::Sin => a.clone().cos() * da,
                    Func::Cos => -(a.clone().sin() * da),
                }
            }
        }
        Node::Binary(op, a, b) => {
            let da = diff_rec(a, axis, memo);
            let db = diff_rec(b, axis, memo);
            match op {
                BinOp::Add => da + db,
                BinOp::Sub => da - db,
                BinOp::Mul => da * b.clone() + a.clone() * db,
                BinOp::Div => {
                    if db.as_const() == Some(0.0) {
                        da / b.clone()
                    } else {
                        // (a' b - a b') / b^2
                        (da * b.clone() - a.clone() * db) / b.clone().powi(2)
                    }
                }
            }
        }
        Node::Pow(a, q) => {
            let da = diff_rec(a, axis, memo);
            if da.as_const() == Some(0.0) {
                Expr::zero()
            } else {
                Expr::constant(q.to_f64()) * Expr::pow(a.clone(), q.minus_one()) * da
            }
        }
    };
    memo.insert(e.key(), d.clone());
    d
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn polynomial_and_exponential_rules() {
        let e = parse("x1^2").unwrap();
        let d = e.diff(1);
        for x in [-1.5, 0.3, 2.0] {
            let p = [x, 0.1, 0.2, 0.3, 0.4];
            assert!((d.eval(&p).unwrap() - 2.0 * x).abs() < 1e-15);
        }
        let e = parse("exp(-4*x1)").unwrap();
        let d = e.diff(1);
        let p = [0.3, 0.0, 0.0, 0.0, 0.0];
        assert!((d.eval(&p).unwrap() + 4.0 * (-1.2f64).exp()).abs() < 1e-15);
        assert_eq!(e.diff(2), Expr::zero());
    }

    #[test]
    fn radius_derivative() {
        let d = Expr::radius().diff(3);
        let p = [0.1, 0.2, 0.6, -0.3, 0.5];
        let r = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((d.eval(&p).unwrap() - 0.6 / r).abs() < 1e-15);
    }

    #[test]
    fn shared_subtrees_stay_shared() {
        // (x1 + x2)^2 repeated many times would explode as a tree.
        let mut e = Expr::var(1) + Expr::var(2);
        for _ in 0..30 {
            e = e.clone() * e.clone();
        }
        let d = e.diff(1);
        assert!(d.dag_size() < 400, "dag size {}", d.dag_size());
    }
}
