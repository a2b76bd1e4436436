//! Kazdan-Warner residuals over the ten basis fields for a manufactured
//! solution, and for deliberately corrupted data.
//!
//! ```text
//! cargo run --release --example kazdan_warner
//! ```

use qtkw::expr::parse;
use qtkw::functionals::{manufacture, CandidateSolution, Rules};
use qtkw::kwcert::{kw_report, KwReport};
use qtkw::sphere::ScalarField;

fn print(r: &KwReport) {
    for e in &r.entries {
        println!("  {:<4} raw {:>11.3e}  norm {:>10.3e}  normalized {:>11.3e}", e.field, e.raw, e.normalization, e.normalized);
    }
    println!("  max |normalized| = {:.3e}", r.max_normalized());
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rules = Rules::uniform(24)?;
    let u = CandidateSolution::new(parse("0.3*x1 + 0.2*x5^3")?, &rules)?;
    let mut data = manufacture(&u);
    println!("manufactured data:");
    print(&kw_report(u.expr(), &data, &rules)?);

    data.q = ScalarField::new(data.q.expr().clone() + parse("0.1*x1")?);
    println!("Q + 0.1 x1 (no longer a solution):");
    print(&kw_report(u.expr(), &data, &rules)?);
    Ok(())
}
