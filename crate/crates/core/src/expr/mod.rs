//! Symbolic scalar expressions over the ambient coordinates `x1..x5` of R^5.
//!
//! Every field used by the toolkit (prescribed curvatures, candidate
//! solutions, conformal factors, test functions) is an [`Expr`] restricted to
//! the sphere. Expressions are immutable, reference counted and cheap to
//! clone; subtrees are shared, so derivatives are DAGs rather than trees.
//!
//! Simplification is limited to constant folding plus the neutral-element
//! rules `x + 0`, `x * 1`, `x * 0`, `x^0` and `x^1`. Correctness is checked by
//! evaluation, never by canonical forms.

mod diff;
mod display;
mod eval;
mod parse;
mod subst;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock, Weak};

pub use eval::{EvalError, Tape, BATCH};
pub use parse::{parse, parse_with_constants, SourceError};

/// Number of ambient coordinates.
pub const DIM: usize = 5;

/// A point of the ambient space R^5.
pub type Point = [f64; DIM];

/// Unary functions of the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Neg,
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
}

impl Func {
    pub(crate) fn name(self) -> &'static str {
        match self {
            Func::Neg => "-",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    fn apply(self, x: f64) -> Option<f64> {
        let y = match self {
            Func::Neg => -x,
            Func::Exp => x.exp(),
            Func::Log if x > 0.0 => x.ln(),
            Func::Log => return None,
            Func::Sqrt if x >= 0.0 => x.sqrt(),
            Func::Sqrt => return None,
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
        };
        y.is_finite().then_some(y)
    }
}

/// Binary operators of the grammar (powers are kept separately).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub(crate) fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

/// Rational exponent `num/den` in lowest terms with `den > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i64,
    den: i64,
}

impl Rational {
    /// Builds `num/den` reduced to lowest terms.
    ///
    /// Panics if `den == 0`.
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "rational exponent with zero denominator");
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i64;
        let sign = if den < 0 { -1 } else { 1 };
        Rational {
            num: sign * num / g.max(1),
            den: sign * den / g.max(1),
        }
    }

    pub const fn integer(n: i64) -> Self {
        Rational { num: n, den: 1 }
    }

    pub fn num(self) -> i64 {
        self.num
    }

    pub fn den(self) -> i64 {
        self.den
    }

    pub fn is_integer(self) -> bool {
        self.den == 1
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `self - 1`, the exponent produced by the power rule.
    pub fn minus_one(self) -> Self {
        Rational::new(self.num - self.den, self.den)
    }

    /// Real power with the sign conventions of odd roots.
    pub(crate) fn pow(self, base: f64) -> Option<f64> {
        if self.num == 0 {
            return Some(1.0);
        }
        if base == 0.0 && self.num < 0 {
            return None;
        }
        let y = if self.den == 1 {
            match i32::try_from(self.num) {
                Ok(n) => base.powi(n),
                Err(_) => base.powf(self.num as f64),
            }
        } else if base >= 0.0 {
            base.powf(self.to_f64())
        } else if self.den % 2 == 1 {
            let mag = (-base).powf(self.to_f64());
            if self.num % 2 == 0 {
                mag
            } else {
                -mag
            }
        } else {
            return None;
        };
        y.is_finite().then_some(y)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Node of an expression DAG.
#[derive(Debug)]
pub enum Node {
    Const(f64),
    /// Ambient coordinate, 1-based axis.
    Var(usize),
    /// The radius symbol `r = |x|`.
    Radius,
    Unary(Func, Expr),
    Binary(BinOp, Expr, Expr),
    Pow(Expr, Rational),
}

/// Immutable, shareable expression.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        match (self.node(), other.node()) {
            (Node::Const(a), Node::Const(b)) => a.to_bits() == b.to_bits(),
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Radius, Node::Radius) => true,
            (Node::Unary(f, a), Node::Unary(g, b)) => f == g && a == b,
            (Node::Binary(o, a1, a2), Node::Binary(p, b1, b2)) => o == p && a1 == b1 && a2 == b2,
            (Node::Pow(a, q), Node::Pow(b, s)) => q == s && a == b,
            _ => false,
        }
    }
}

impl std::fmt::Debug for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Expr({self})")
    }
}

/// Shallow structural key; children are identified by their (interned)
/// addresses, so equal keys mean structurally equal nodes.
#[derive(Hash, PartialEq, Eq)]
enum InternKey {
    Const(u64),
    Var(usize),
    Radius,
    Unary(Func, usize),
    Binary(BinOp, usize, usize),
    Pow(usize, Rational),
}

struct Interner {
    table: HashMap<InternKey, Weak<Node>>,
    prune_at: usize,
}

fn interner() -> &'static Mutex<Interner> {
    static INTERNER: OnceLock<Mutex<Interner>> = OnceLock::new();
    INTERNER.get_or_init(|| {
        Mutex::new(Interner {
            table: HashMap::new(),
            prune_at: 1 << 16,
        })
    })
}

impl Expr {
    /// Hash-consed construction: structurally equal nodes share one
    /// allocation, which lets pointer-keyed memo tables see all sharing.
    fn from_node(node: Node) -> Self {
        let key = match &node {
            Node::Const(c) => InternKey::Const(c.to_bits()),
            Node::Var(a) => InternKey::Var(*a),
            Node::Radius => InternKey::Radius,
            Node::Unary(f, a) => InternKey::Unary(*f, a.key() as usize),
            Node::Binary(o, a, b) => InternKey::Binary(*o, a.key() as usize, b.key() as usize),
            Node::Pow(a, q) => InternKey::Pow(a.key() as usize, *q),
        };
        let mut guard = interner().lock().unwrap_or_else(|e| e.into_inner());
        if let Some(existing) = guard.table.get(&key).and_then(Weak::upgrade) {
            return Expr(existing);
        }
        let arc = Arc::new(node);
        guard.table.insert(key, Arc::downgrade(&arc));
        if guard.table.len() > guard.prune_at {
            guard.table.retain(|_, w| w.strong_count() > 0);
            guard.prune_at = (2 * guard.table.len()).max(1 << 16);
        }
        Expr(arc)
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn key(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    pub fn constant(c: f64) -> Self {
        Expr::from_node(Node::Const(c))
    }

    pub fn zero() -> Self {
        Expr::constant(0.0)
    }

    pub fn one() -> Self {
        Expr::constant(1.0)
    }

    /// Coordinate `x_axis`, `axis` in `1..=5`.
    pub fn var(axis: usize) -> Self {
        assert!((1..=DIM).contains(&axis), "axis {axis} out of range 1..=5");
        Expr::from_node(Node::Var(axis))
    }

    pub fn radius() -> Self {
        Expr::from_node(Node::Radius)
    }

    /// The five coordinate functions.
    pub fn coords() -> [Expr; DIM] {
        std::array::from_fn(|i| Expr::var(i + 1))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn is_const(&self, v: f64) -> bool {
        self.as_const() == Some(v)
    }

    pub fn unary(f: Func, a: Expr) -> Self {
        if let Some(c) = a.as_const() {
            if let Some(v) = f.apply(c) {
                return Expr::constant(v);
            }
        }
        Expr::from_node(Node::Unary(f, a))
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Self {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            let v = match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
            };
            if v.is_finite() && !(op == BinOp::Div && y == 0.0) {
                return Expr::constant(v);
            }
        }
        match op {
            BinOp::Add if a.is_const(0.0) => return b,
            BinOp::Add | BinOp::Sub if b.is_const(0.0) => return a,
            BinOp::Sub if a.is_const(0.0) => return Expr::unary(Func::Neg, b),
            BinOp::Mul if a.is_const(0.0) || b.is_const(0.0) => return Expr::zero(),
            BinOp::Mul if a.is_const(1.0) => return b,
            BinOp::Mul | BinOp::Div if b.is_const(1.0) => return a,
            BinOp::Div if a.is_const(0.0) => return Expr::zero(),
            _ => {}
        }
        Expr::from_node(Node::Binary(op, a, b))
    }

    pub fn pow(base: Expr, q: Rational) -> Self {
        if q.num() == 0 {
            return Expr::one();
        }
        if q == Rational::integer(1) {
            return base;
        }
        if let Some(c) = base.as_const() {
            if let Some(v) = q.pow(c) {
                return Expr::constant(v);
            }
        }
        Expr::from_node(Node::Pow(base, q))
    }

    pub fn powi(self, n: i64) -> Self {
        Expr::pow(self, Rational::integer(n))
    }

    pub fn exp(self) -> Self {
        Expr::unary(Func::Exp, self)
    }

    pub fn ln(self) -> Self {
        Expr::unary(Func::Log, self)
    }

    pub fn sqrt(self) -> Self {
        Expr::unary(Func::Sqrt, self)
    }

    pub fn sin(self) -> Self {
        Expr::unary(Func::Sin, self)
    }

    pub fn cos(self) -> Self {
        Expr::unary(Func::Cos, self)
    }

    /// Sum of a list of expressions, `0` when empty.
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Self {
        terms.into_iter().fold(Expr::zero(), |acc, t| acc + t)
    }

    /// Euclidean inner product of two expression vectors.
    pub fn dot(a: &[Expr], b: &[Expr]) -> Self {
        Expr::sum(a.iter().zip(b).map(|(x, y)| x.clone() * y.clone()))
    }

    /// Number of distinct nodes in the DAG.
    pub fn dag_size(&self) -> usize {
        fn walk(e: &Expr, seen: &mut std::collections::HashSet<*const Node>) {
            if !seen.insert(e.key()) {
                return;
            }
            match e.node() {
                Node::Unary(_, a) | Node::Pow(a, _) => walk(a, seen),
                Node::Binary(_, a, b) => {
                    walk(a, seen);
                    walk(b, seen);
                }
                _ => {}
            }
        }
        let mut seen = std::collections::HashSet::new();
        walk(self, &mut seen);
        seen.len()
    }

    /// Largest variable axis referenced, 0 when none.
    pub fn max_axis(&self) -> usize {
        fn walk(e: &Expr, seen: &mut std::collections::HashSet<*const Node>, best: &mut usize) {
            if !seen.insert(e.key()) {
                return;
            }
            match e.node() {
                Node::Var(a) => *best = (*best).max(*a),
                Node::Unary(_, a) | Node::Pow(a, _) => walk(a, seen, best),
                Node::Binary(_, a, b) => {
                    walk(a, seen, best);
                    walk(b, seen, best);
                }
                _ => {}
            }
        }
        let mut best = 0;
        walk(self, &mut std::collections::HashSet::new(), &mut best);
        best
    }

    /// True when the expression mentions the radius symbol.
    pub fn uses_radius(&self) -> bool {
        fn walk(e: &Expr, seen: &mut std::collections::HashSet<*const Node>) -> bool {
            if !seen.insert(e.key()) {
                return false;
            }
            match e.node() {
                Node::Radius => true,
                Node::Unary(_, a) | Node::Pow(a, _) => walk(a, seen),
                Node::Binary(_, a, b) => walk(a, seen) || walk(b, seen),
                _ => false,
            }
        }
        walk(self, &mut std::collections::HashSet::new())
    }

    /// Evaluates at `p`. Compiles a throwaway [`Tape`]; use a tape directly
    /// for repeated evaluation.
    pub fn eval(&self, p: &Point) -> Result<f64, EvalError> {
        Tape::compile(self).eval(p)
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::constant(c)
    }
}

macro_rules! impl_binop {
    ($tr:ident, $method:ident, $op:expr) => {
        impl std::ops::$tr for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
        impl std::ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::binary($op, self.clone(), rhs.clone())
            }
        }
        impl std::ops::$tr<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::binary($op, self, Expr::constant(rhs))
            }
        }
        impl std::ops::$tr<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, Expr::constant(self), rhs)
            }
        }
    };
}

impl_binop!(Add, add, BinOp::Add);
impl_binop!(Sub, sub, BinOp::Sub);
impl_binop!(Mul, mul, BinOp::Mul);
impl_binop!(Div, div, BinOp::Div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(Func::Neg, self)
    }
}

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(Func::Neg, self.clone())
    }
}
