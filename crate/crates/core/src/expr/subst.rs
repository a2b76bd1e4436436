use std::collections::HashMap;

use super::{Expr, Node, DIM};

impl Expr {
    /// Substitutes every coordinate `x_i` by `map[i-1]`.
    ///
    /// The radius symbol becomes `(sum_i map_i^2)^(1/2)` so that
    /// `compose(e, m)(x) == e(m(x))`.
    pub fn compose(&self, map: &[Expr; DIM]) -> Expr {
        let radius = Expr::sum(map.iter().map(|m| m.clone().powi(2))).sqrt();
        self.substitute(map, &radius)
    }

    /// Degree-0 homogeneous extension: `homogenize0(e)(x) = e(x / |x|)`.
    ///
    /// Coordinates become `x_i / r` and the radius symbol becomes `1`.
    pub fn homogenize0(&self) -> Expr {
        let r = Expr::radius();
        let map: [Expr; DIM] = std::array::from_fn(|i| Expr::var(i + 1) / r.clone());
        self.substitute(&map, &Expr::one())
    }

    /// Restriction to the equator hyperplane `x5 = 0`.
    pub fn on_equator(&self) -> Expr {
        let map: [Expr; DIM] = std::array::from_fn(|i| if i == 4 { Expr::zero() } else { Expr::var(i + 1) });
        self.compose(&map)
    }

    fn substitute(&self, map: &[Expr; DIM], radius: &Expr) -> Expr {
        let mut memo = HashMap::new();
        subst_rec(self, map, radius, &mut memo)
    }
}

fn subst_rec(e: &Expr, map: &[Expr; DIM], radius: &Expr, memo: &mut HashMap<*const Node, Expr>) -> Expr {
    if let Some(s) = memo.get(&e.key()) {
        return s.clone();
    }
    let s = match e.node() {
        Node::Const(_) => e.clone(),
        Node::Var(a) => map[a - 1].clone(),
        Node::Radius => radius.clone(),
        Node::Unary(f, a) => Expr::unary(*f, subst_rec(a, map, radius, memo)),
        Node::Binary(op, a, b) => {
            let a = subst_rec(a, map, radius, memo);
            let b = subst_rec(b, map, radius, memo);
            Expr::binary(*op, a, b)
        }
        Node::Pow(a, q) => Expr::pow(subst_rec(a, map, radius, memo), *q),
    };
    memo.insert(e.key(), s.clone());
    s
}
