//! Product quadrature on the hemisphere and on its boundary three-sphere.
//!
//! ```text
//! cargo run --release --example quadrature
//! ```

use std::f64::consts::PI;

use qtkw::expr::parse;
use qtkw::quadrature::{gauss_legendre, QuadRule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gl = gauss_legendre(4);
    println!("4-point Gauss-Legendre: {gl:.6?}");

    for n in [4, 8, 16, 32] {
        let hemi = QuadRule::hemisphere_n(n)?;
        let bd = QuadRule::boundary_n(n)?;
        let vol = hemi.integrate_expr(&parse("1")?)?;
        let x5 = hemi.integrate_expr(&parse("x5^3")?)?;
        let area = bd.integrate_expr(&parse("1")?)?;
        let x1 = bd.integrate_expr(&parse("x1^4")?)?;
        println!(
            "n={n:>2} nodes={:>8}  |vol - 4pi^2/3|={:.1e}  |int x5^3 - pi^2/6|={:.1e}  |area - 2pi^2|={:.1e}  |int x1^4 - pi^2/4|={:.1e}",
            hemi.len(),
            (vol - 4.0 * PI * PI / 3.0).abs(),
            (x5 - PI * PI / 6.0).abs(),
            (area - 2.0 * PI * PI).abs(),
            (x1 - PI * PI / 4.0).abs(),
        );
    }

    // A non-polynomial integrand converges spectrally.
    let f = parse("exp(x1 + 0.5*x5)")?;
    let reference = QuadRule::hemisphere_n(48)?.integrate_expr(&f)?;
    for n in [4, 8, 12, 16] {
        let v = QuadRule::hemisphere_n(n)?.integrate_expr(&f)?;
        println!("n={n:>2}  int exp(x1 + x5/2) error {:.2e}", (v - reference).abs());
    }
    Ok(())
}
