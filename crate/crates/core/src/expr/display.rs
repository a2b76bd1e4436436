use std::fmt;

use super::{Expr, Func, Node};

/// Fully parenthesized output that [`super::parse`] reads back to a
/// structurally equal expression.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "(-{:?})", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Node::Var(a) => write!(f, "x{a}"),
            Node::Radius => f.write_str("r"),
            Node::Unary(Func::Neg, a) => write!(f, "(-{a})"),
            Node::Unary(func, a) => write!(f, "{}({a})", func.name()),
            Node::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Node::Pow(a, q) => {
                if q.is_integer() && q.num() >= 0 {
                    write!(f, "({a})^{}", q.num())
                } else {
                    write!(f, "({a})^({}/{})", q.num(), q.den())
                }
            }
        }
    }
}
