//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := atom ('^' rational)?
//! atom     := number | 'pi' | 'x1'..'x5' | 'r' | func '(' expr ')' | '(' expr ')'
//! func     := 'exp' | 'log' | 'sqrt' | 'sin' | 'cos'
//! rational := integer | '(' integer ('/' integer)? ')'      (integers may be signed)
//! ```
//!
//! `^` binds tighter than unary minus, so `-x5^3` is `-(x5^3)`.

use thiserror::Error;

use super::{BinOp, Expr, Func, Rational};

/// Parse failure with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {position}: {message}")]
pub struct SourceError {
    pub position: usize,
    pub message: String,
}

pub fn parse(src: &str) -> Result<Expr, SourceError> {
    parse_with_constants(src, &[])
}

/// Parses with extra named constants substituted by value, e.g. `("a", 0.25)`.
pub fn parse_with_constants(src: &str, constants: &[(&str, f64)]) -> Result<Expr, SourceError> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
        constants,
    };
    p.skip_ws();
    if p.pos == p.src.len() {
        return Err(p.error_at(0, "empty expression"));
    }
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        let msg = if p.src[p.pos] == b')' {
            "unbalanced ')'".to_string()
        } else {
            format!("unexpected character '{}'", p.src[p.pos] as char)
        };
        return Err(p.error_at(p.pos, msg));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    constants: &'a [(&'a str, f64)],
}

impl Parser<'_> {
    fn error_at(&self, position: usize, message: impl Into<String>) -> SourceError {
        SourceError {
            position: position.min(self.src.len()),
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8, opened_at: usize) -> Result<(), SourceError> {
        if self.eat(c) {
            Ok(())
        } else if self.pos >= self.src.len() {
            Err(self.error_at(opened_at, "unbalanced '(': missing ')'"))
        } else {
            Err(self.error_at(self.pos, format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, SourceError> {
        let mut acc = self.term()?;
        loop {
            if self.eat(b'+') {
                acc = Expr::binary(BinOp::Add, acc, self.term()?);
            } else if self.eat(b'-') {
                acc = Expr::binary(BinOp::Sub, acc, self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, SourceError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(b'*') {
                acc = Expr::binary(BinOp::Mul, acc, self.unary()?);
            } else if self.eat(b'/') {
                acc = Expr::binary(BinOp::Div, acc, self.unary()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, SourceError> {
        if self.eat(b'-') {
            Ok(Expr::unary(Func::Neg, self.unary()?))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, SourceError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let q = self.rational()?;
            Ok(Expr::pow(base, q))
        } else {
            Ok(base)
        }
    }

    fn rational(&mut self) -> Result<Rational, SourceError> {
        let start = self.pos;
        if self.eat(b'(') {
            let num = self.integer()?;
            let den = if self.eat(b'/') { self.integer()? } else { 1 };
            self.expect(b')', start)?;
            if den == 0 {
                return Err(self.error_at(start, "zero denominator in exponent"));
            }
            Ok(Rational::new(num, den))
        } else {
            Ok(Rational::integer(self.integer()?))
        }
    }

    fn integer(&mut self) -> Result<i64, SourceError> {
        let neg = self.eat(b'-');
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error_at(start, "expected integer exponent"));
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'.' | b'e' | b'E') {
            return Err(self.error_at(start, "exponent must be an integer or a ratio (p/q)"));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let v: i64 = text
            .parse()
            .map_err(|_| self.error_at(start, "exponent out of range"))?;
        Ok(if neg { -v } else { v })
    }

    fn number(&mut self) -> Result<Expr, SourceError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(self.error_at(start, "malformed number"));
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Expr::constant)
            .map_err(|_| self.error_at(start, "malformed number"))
    }

    fn atom(&mut self) -> Result<Expr, SourceError> {
        let Some(c) = self.peek() else {
            return Err(self.error_at(self.pos, "unexpected end of input"));
        };
        let start = self.pos;
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            self.expect(b')', start)?;
            return Ok(e);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                self.pos += 1;
            }
            let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let func = match ident {
                "x1" | "x2" | "x3" | "x4" | "x5" => {
                    return Ok(Expr::var((ident.as_bytes()[1] - b'0') as usize));
                }
                "r" => return Ok(Expr::radius()),
                "pi" => return Ok(Expr::constant(std::f64::consts::PI)),
                "exp" => Func::Exp,
                "log" => Func::Log,
                "sqrt" => Func::Sqrt,
                "sin" => Func::Sin,
                "cos" => Func::Cos,
                other => {
                    if let Some((_, v)) = self.constants.iter().find(|(name, _)| *name == other) {
                        return Ok(Expr::constant(*v));
                    }
                    return Err(self.error_at(start, format!("unknown identifier '{other}'")));
                }
            };
            self.skip_ws();
            let open = self.pos;
            if !self.eat(b'(') {
                return Err(self.error_at(open, format!("expected '(' after {ident}")));
            }
            let arg = self.expr()?;
            self.expect(b')', open)?;
            return Ok(Expr::unary(func, arg));
        }
        if c == b')' {
            return Err(self.error_at(start, "unbalanced ')'"));
        }
        Err(self.error_at(start, format!("unexpected character '{}'", c as char)))
    }
}

#[cfg(test)]
mod tests {
    use super::super::Node;
    use super::*;

    #[test]
    fn variables_and_constants() {
        assert_eq!(parse("x1").unwrap(), Expr::var(1));
        assert_eq!(parse("r").unwrap(), Expr::radius());
        assert_eq!(parse("pi").unwrap().as_const(), Some(std::f64::consts::PI));
        assert_eq!(parse("1.5e-3").unwrap().as_const(), Some(1.5e-3));
    }

    #[test]
    fn folded_named_constant() {
        let e = parse_with_constants("3 + 12*a*x1", &[("a", 0.25)]).unwrap();
        let expected = Expr::binary(
            BinOp::Add,
            Expr::constant(3.0),
            Expr::binary(BinOp::Mul, Expr::constant(3.0), Expr::var(1)),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn precedence() {
        // -x5^3 == -(x5^3)
        let e = parse("-x5^3").unwrap();
        assert!(matches!(e.node(), Node::Unary(Func::Neg, _)));
        let p = [0.0, 0.0, 0.0, 0.0, 2.0];
        assert_eq!(e.eval(&p).unwrap(), -8.0);
        assert_eq!(parse("2 + 3*4").unwrap().as_const(), Some(14.0));
        assert_eq!(parse("2^3^").map_err(|e| e.position), Err(3));
        assert_eq!(parse("8^(1/3)").unwrap().as_const(), Some(2.0));
        assert_eq!(parse("2^-1").unwrap().as_const(), Some(0.5));
        assert_eq!(parse("x1 - x2 - x3").unwrap().eval(&[1.0, 2.0, 3.0, 0.0, 0.0]).unwrap(), -4.0);
    }

    #[test]
    fn rejections() {
        let err = parse("x6").unwrap_err();
        assert_eq!(err.position, 0);
        assert!(err.message.contains("x6"));
        assert_eq!(parse("").unwrap_err().position, 0);
        assert_eq!(parse("   ").unwrap_err().position, 0);
        assert_eq!(parse("(x1 + 2").unwrap_err().position, 0);
        assert_eq!(parse("x1 + 2)").unwrap_err().position, 6);
        assert_eq!(parse("exp x1").unwrap_err().position, 4);
        assert!(parse("x1^0.5").is_err());
        assert!(parse("x1^(1/0)").is_err());
        assert_eq!(parse("2 * foo").unwrap_err().position, 4);
    }

    #[test]
    fn print_then_parse() {
        for src in [
            "3 + 0.1*x1",
            "-x5^3 + exp(-4*x1)/(1 + x5)",
            "sqrt(r) * log(2 + x2) - sin(x3)^(3/2) + cos(x4)^(-1)",
            "(x1*x2 - 0.25)^2",
            "-(-x1)",
        ] {
            let e = parse(src).unwrap();
            let again = parse(&e.to_string()).unwrap();
            assert_eq!(e, again, "{src} -> {e}");
        }
    }
}
