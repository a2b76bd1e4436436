use std::cell::RefCell;
use std::collections::HashMap;

use thiserror::Error;

use super::{BinOp, Expr, Func, Node, Point, Rational};

/// Domain violation met while evaluating an expression.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of non-positive value {0}")]
    LogDomain(f64),
    #[error("square root of negative value {0}")]
    SqrtDomain(f64),
    #[error("rational power {num}/{den} of negative base {base}")]
    PowDomain { base: f64, num: i64, den: i64 },
    #[error("non-finite intermediate value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Var(usize),
    Radius,
    Unary(Func, u32),
    Binary(BinOp, u32, u32),
    Pow(u32, Rational),
}

#[derive(Hash, PartialEq, Eq)]
enum OpKey {
    Const(u64),
    Var(usize),
    Radius,
    Unary(Func, u32),
    Binary(BinOp, u32, u32),
    Pow(u32, Rational),
}

/// Linearized, common-subexpression-eliminated form of one or more
/// expressions, for repeated evaluation.
///
/// Compilation deduplicates structurally equal subtrees, so derivatives
/// that rebuild the same quotient many times evaluate it once.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<u32>,
}

thread_local! {
    static SCRATCH: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

/// Lanes per block in [`Tape::eval_batch`].
pub const BATCH: usize = 64;

struct Compiler {
    ops: Vec<Op>,
    by_key: HashMap<OpKey, u32>,
    by_ptr: HashMap<*const Node, u32>,
}

impl Compiler {
    fn push(&mut self, op: Op) -> u32 {
        let key = match op {
            Op::Const(c) => OpKey::Const(c.to_bits()),
            Op::Var(a) => OpKey::Var(a),
            Op::Radius => OpKey::Radius,
            Op::Unary(f, a) => OpKey::Unary(f, a),
            Op::Binary(o, a, b) => OpKey::Binary(o, a, b),
            Op::Pow(a, q) => OpKey::Pow(a, q),
        };
        if let Some(&slot) = self.by_key.get(&key) {
            return slot;
        }
        let slot = self.ops.len() as u32;
        self.ops.push(op);
        self.by_key.insert(key, slot);
        slot
    }

    fn visit(&mut self, e: &Expr) -> u32 {
        if let Some(&slot) = self.by_ptr.get(&e.key()) {
            return slot;
        }
        let op = match e.node() {
            Node::Const(c) => Op::Const(*c),
            Node::Var(a) => Op::Var(*a - 1),
            Node::Radius => Op::Radius,
            Node::Unary(f, a) => {
                let a = self.visit(a);
                Op::Unary(*f, a)
            }
            Node::Binary(o, a, b) => {
                let a = self.visit(a);
                let b = self.visit(b);
                Op::Binary(*o, a, b)
            }
            Node::Pow(a, q) => {
                let a = self.visit(a);
                Op::Pow(a, *q)
            }
        };
        let slot = self.push(op);
        self.by_ptr.insert(e.key(), slot);
        slot
    }
}

impl Tape {
    pub fn compile(e: &Expr) -> Tape {
        Tape::compile_many(std::slice::from_ref(e))
    }

    /// One tape with several outputs sharing their common subexpressions.
    pub fn compile_many(exprs: &[Expr]) -> Tape {
        let mut c = Compiler {
            ops: Vec::new(),
            by_key: HashMap::new(),
            by_ptr: HashMap::new(),
        };
        let outputs = exprs.iter().map(|e| c.visit(e)).collect();
        Tape { ops: c.ops, outputs }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Value of the first output.
    pub fn eval(&self, p: &Point) -> Result<f64, EvalError> {
        SCRATCH.with(|s| {
            let mut s = s.borrow_mut();
            self.run(p, &mut s)?;
            Ok(s[self.outputs[0] as usize])
        })
    }

    /// Writes every output into `out` (length must match).
    pub fn eval_into(&self, p: &Point, out: &mut [f64]) -> Result<(), EvalError> {
        assert_eq!(out.len(), self.outputs.len());
        SCRATCH.with(|s| {
            let mut s = s.borrow_mut();
            self.run(p, &mut s)?;
            for (o, &slot) in out.iter_mut().zip(&self.outputs) {
                *o = s[slot as usize];
            }
            Ok(())
        })
    }

    /// Evaluates every output at every point. `out` is laid out point-major:
    /// `out[k * num_outputs + j]` is output `j` at `points[k]`.
    ///
    /// On a domain error, returns the index of the first offending point.
    pub fn eval_batch(&self, points: &[Point], out: &mut [f64]) -> Result<(), (usize, EvalError)> {
        let m = self.outputs.len();
        assert_eq!(out.len(), points.len() * m);
        SCRATCH.with(|s| {
            let mut s = s.borrow_mut();
            s.resize(self.ops.len() * BATCH, 0.0);
            for (c, chunk) in points.chunks(BATCH).enumerate() {
                if self.run_block(chunk, &mut s).is_err() {
                    // Locate the failing point with the scalar path.
                    for (k, p) in chunk.iter().enumerate() {
                        let mut tmp = Vec::new();
                        if let Err(e) = self.run(p, &mut tmp) {
                            return Err((c * BATCH + k, e));
                        }
                    }
                    return Err((c * BATCH, EvalError::NonFinite));
                }
                for k in 0..chunk.len() {
                    let row = &mut out[(c * BATCH + k) * m..(c * BATCH + k + 1) * m];
                    for (o, &slot) in row.iter_mut().zip(&self.outputs) {
                        *o = s[slot as usize * BATCH + k];
                    }
                }
            }
            Ok(())
        })
    }

    fn run_block(&self, pts: &[Point], s: &mut [f64]) -> Result<(), ()> {
        let n = pts.len();
        let mut bad = false;
        for (i, op) in self.ops.iter().enumerate() {
            let (head, tail) = s.split_at_mut(i * BATCH);
            let dst = &mut tail[..n];
            let src = |a: u32| &head[a as usize * BATCH..a as usize * BATCH + n];
            match *op {
                Op::Const(c) => dst.fill(c),
                Op::Var(a) => {
                    for (d, p) in dst.iter_mut().zip(pts) {
                        *d = p[a];
                    }
                }
                Op::Radius => {
                    for (d, p) in dst.iter_mut().zip(pts) {
                        *d = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                    }
                }
                Op::Unary(f, a) => {
                    let x = src(a);
                    match f {
                        Func::Neg => dst.iter_mut().zip(x).for_each(|(d, x)| *d = -x),
                        Func::Exp => dst.iter_mut().zip(x).for_each(|(d, x)| *d = x.exp()),
                        Func::Log => {
                            bad |= x.iter().any(|&x| x <= 0.0);
                            dst.iter_mut().zip(x).for_each(|(d, x)| *d = x.ln())
                        }
                        Func::Sqrt => {
                            bad |= x.iter().any(|&x| x < 0.0);
                            dst.iter_mut().zip(x).for_each(|(d, x)| *d = x.sqrt())
                        }
                        Func::Sin => dst.iter_mut().zip(x).for_each(|(d, x)| *d = x.sin()),
                        Func::Cos => dst.iter_mut().zip(x).for_each(|(d, x)| *d = x.cos()),
                    }
                }
                Op::Binary(o, a, b) => {
                    let (x, y) = (src(a), src(b));
                    let it = dst.iter_mut().zip(x.iter().zip(y));
                    match o {
                        BinOp::Add => it.for_each(|(d, (x, y))| *d = x + y),
                        BinOp::Sub => it.for_each(|(d, (x, y))| *d = x - y),
                        BinOp::Mul => it.for_each(|(d, (x, y))| *d = x * y),
                        BinOp::Div => {
                            bad |= y.iter().any(|&y| y == 0.0);
                            it.for_each(|(d, (x, y))| *d = x / y)
                        }
                    }
                }
                Op::Pow(a, q) => {
                    let x = src(a);
                    if q.is_integer() && q.num() == 2 {
                        dst.iter_mut().zip(x).for_each(|(d, x)| *d = x * x);
                    } else {
                        for (d, &x) in dst.iter_mut().zip(x) {
                            match q.pow(x) {
                                Some(v) => *d = v,
                                None => {
                                    bad = true;
                                    *d = f64::NAN;
                                }
                            }
                        }
                    }
                }
            }
            if bad {
                return Err(());
            }
        }
        // Any overflow shows up as a non-finite value somewhere downstream;
        // checking every slot keeps the batch path as strict as the scalar one.
        if s[..self.ops.len() * BATCH]
            .chunks(BATCH)
            .any(|row| row[..n].iter().any(|v| !v.is_finite()))
        {
            return Err(());
        }
        Ok(())
    }

    fn run(&self, p: &Point, slots: &mut Vec<f64>) -> Result<(), EvalError> {
        slots.clear();
        slots.reserve(self.ops.len());
        let radius = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(a) => p[a],
                Op::Radius => radius,
                Op::Unary(f, a) => {
                    let x = slots[a as usize];
                    match f {
                        Func::Neg => -x,
                        Func::Exp => x.exp(),
                        Func::Log => {
                            if x <= 0.0 {
                                return Err(EvalError::LogDomain(x));
                            }
                            x.ln()
                        }
                        Func::Sqrt => {
                            if x < 0.0 {
                                return Err(EvalError::SqrtDomain(x));
                            }
                            x.sqrt()
                        }
                        Func::Sin => x.sin(),
                        Func::Cos => x.cos(),
                    }
                }
                Op::Binary(o, a, b) => {
                    let (x, y) = (slots[a as usize], slots[b as usize]);
                    match o {
                        BinOp::Add => x + y,
                        BinOp::Sub => x - y,
                        BinOp::Mul => x * y,
                        BinOp::Div => {
                            if y == 0.0 {
                                return Err(EvalError::DivisionByZero);
                            }
                            x / y
                        }
                    }
                }
                Op::Pow(a, q) => {
                    let x = slots[a as usize];
                    match q.pow(x) {
                        Some(v) => v,
                        None if x == 0.0 => return Err(EvalError::DivisionByZero),
                        None if x < 0.0 => {
                            return Err(EvalError::PowDomain {
                                base: x,
                                num: q.num(),
                                den: q.den(),
                            })
                        }
                        None => return Err(EvalError::NonFinite),
                    }
                }
            };
            if !v.is_finite() {
                return Err(EvalError::NonFinite);
            }
            slots.push(v);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn basic_values() {
        let p = [0.0, 0.0, 0.0, 0.0, 2.0];
        assert_eq!(parse("r").unwrap().eval(&p).unwrap(), 2.0);
        let q = [0.6, 0.0, 0.0, 0.0, 0.8];
        let v = parse("x1/(1+x5)").unwrap().eval(&q).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-16);
        let e1 = [1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(parse("exp(x1)").unwrap().eval(&e1).unwrap(), std::f64::consts::E);
    }

    #[test]
    fn domain_errors_are_reported() {
        let o = [0.0; 5];
        assert_eq!(parse("1/x1").unwrap().eval(&o), Err(EvalError::DivisionByZero));
        assert!(matches!(parse("log(x1 - 1)").unwrap().eval(&o), Err(EvalError::LogDomain(_))));
        assert!(matches!(parse("sqrt(x2 - 1)").unwrap().eval(&o), Err(EvalError::SqrtDomain(_))));
        assert!(matches!(
            parse("(x1 - 1)^(1/2)").unwrap().eval(&o),
            Err(EvalError::PowDomain { .. })
        ));
        assert_eq!(parse("exp(exp(x1 + 10))").unwrap().eval(&o), Err(EvalError::NonFinite));
    }

    #[test]
    fn cse_merges_equal_subtrees() {
        let a = parse("(x1 + x2) * (x1 + x2)").unwrap();
        // two structurally equal but separately allocated sums
        assert_eq!(Tape::compile(&a).len(), 4);
    }

    #[test]
    fn batch_matches_scalar() {
        let t = Tape::compile_many(&[
            parse("exp(-x1)*x5^3/(2 + x2)").unwrap(),
            parse("sqrt(r) + cos(x3)^(1/3)").unwrap(),
        ]);
        let pts: Vec<Point> = (0..150)
            .map(|k| {
                let a = k as f64 * 0.01;
                [a, 0.5 - a, a.sin(), 0.2, 1.0 - a]
            })
            .collect();
        let mut out = vec![0.0; 300];
        t.eval_batch(&pts, &mut out).unwrap();
        let mut one = [0.0; 2];
        for (k, p) in pts.iter().enumerate() {
            t.eval_into(p, &mut one).unwrap();
            assert_eq!(&out[2 * k..2 * k + 2], &one);
        }
        let mut bad = pts.clone();
        bad[100][1] = -2.0;
        assert_eq!(t.eval_batch(&bad, &mut out), Err((100, EvalError::DivisionByZero)));
    }

    #[test]
    fn multi_output() {
        let t = Tape::compile_many(&[parse("x1 + x2").unwrap(), parse("x1 * x2").unwrap()]);
        let mut out = [0.0; 2];
        t.eval_into(&[2.0, 3.0, 0.0, 0.0, 0.0], &mut out).unwrap();
        assert_eq!(out, [5.0, 6.0]);
    }
}
