//! Parsing, differentiating, substituting and compiling expressions in the
//! ambient coordinates `x1..x5`.
//!
//! ```text
//! cargo run --release --example expressions
//! ```

use qtkw::expr::{parse, Expr, Tape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let f = parse("exp(0.3*x1) * x5^3 - sqrt(1 + x2^2)")?;
    println!("f          = {f}");
    for axis in [1, 2, 5] {
        println!("df/dx{axis}     = {}", f.diff(axis));
    }
    println!("flat lap f = {}", f.flat_laplacian());

    // x5 -> 0 restricts to the equator; homogenize0 makes f constant along rays.
    println!("f|x5=0     = {}", f.on_equator());
    println!("f(x/|x|)   = {}", f.homogenize0());

    let swap = [Expr::var(2), Expr::var(1), Expr::var(3), Expr::var(4), Expr::var(5)];
    println!("f(x2,x1,..) = {}", f.compose(&swap));

    let g = f.gradient();
    let mut outs = vec![f.clone()];
    outs.extend(g);
    let tape = Tape::compile_many(&outs);
    let p = [0.2, -0.4, 0.1, 0.3, (1.0f64 - 0.04 - 0.16 - 0.01 - 0.09).sqrt()];
    let mut jet = [0.0; 6];
    tape.eval_into(&p, &mut jet)?;
    println!("tape: {} ops, value and gradient at p = {jet:.6?}", tape.len());

    match parse("x1 + * x2") {
        Err(e) => println!("parse error at {}: {}", e.position, e.message),
        Ok(_) => unreachable!(),
    }
    match parse("log(x1)")?.eval(&[-1.0, 0.0, 0.0, 0.0, 0.0]) {
        Err(e) => println!("domain error: {e}"),
        Ok(v) => println!("unexpected value {v}"),
    }
    Ok(())
}
