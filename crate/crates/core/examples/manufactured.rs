//! Manufactured solutions: pick `u` with vanishing normal derivative,
//! compute the curvatures `(Q, T)` it solves for, and check the integral
//! identities every solution satisfies.
//!
//! ```text
//! cargo run --release --example manufactured
//! ```

use std::f64::consts::PI;

use qtkw::expr::parse;
use qtkw::functionals::{
    cocycle_defect, curvature_integrals, energy, gbc_defect, manufacture, s_functional, weak_residual, CandidateSolution, Rules,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rules = Rules::uniform(24)?;
    for src in ["x5^3", "0.3*x1 + 0.2*x5^3", "0.2*x1*x2 + 0.1*x5^3"] {
        let u = CandidateSolution::new(parse(src)?, &rules)?;
        let data = manufacture(&u);
        let ue = u.expr();
        let (n, b) = curvature_integrals(ue, &data, &rules)?;
        println!("u = {src}");
        println!("  N_Q = {n:.12}  B_T = {b:.12}  (sum / 4pi^2 = {:.15})", (n + b) / (4.0 * PI * PI));
        println!("  GBC defect {:.2e}", gbc_defect(ue, &data, &rules)?);
        println!("  S(u) = {:.10}  I(u) = {:.10}", s_functional(ue, &rules)?, energy(ue, &data, &rules)?);
        for v in ["x1^2", "x1*x2", "x5^2"] {
            let w = weak_residual(ue, &data, &parse(v)?, &rules)?;
            println!("  weak residual v={v:<6} {:.2e} (scale {:.2})", w.value, w.scale);
        }
        let c = cocycle_defect(ue, &data, &parse("0.5*x2*x3")?, &rules)?;
        println!("  cocycle defect {:.2e}", c.value);
    }
    if let Err(e) = CandidateSolution::new(parse("x5")?, &rules) {
        println!("u = x5 rejected: {e}");
    }
    Ok(())
}
