//! Laplacian, Paneitz operator and boundary operators on the round sphere.
//!
//! ```text
//! cargo run --release --example sphere_operators
//! ```

use qtkw::sphere::{laplace, normal_derivative, paneitz3, paneitz4, BoundaryPoint, ScalarField, SpherePoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = SpherePoint::normalized([0.3, -0.2, 0.5, 0.1, 0.6])?;
    // Restrictions of harmonic polynomials of degree k are eigenfunctions.
    for (k, src) in [(1, "x2"), (2, "x1*x3"), (3, "x5^3 - 1.5*x5*(x1^2 + x2^2)")] {
        let f = ScalarField::parse(src)?;
        let v = f.value(p.coords())?;
        let l = laplace(&f).value(p.coords())? / v;
        let q = paneitz4(&f).value(p.coords())? / v;
        println!("k={k} {src:<28} lap/f = {l:>9.4}  P4/f = {q:>9.4}");
    }

    let u = ScalarField::parse("x5^3")?;
    let lap = laplace(&u);
    println!("lap(x5^3) = {}", lap.expr());
    let q = BoundaryPoint::from_r4([0.5, 0.5, 0.5, 0.5])?;
    println!("du/dnu = {}, d(lap u)/dnu = {}", normal_derivative(&u, &q)?, normal_derivative(&lap, &q)?);
    println!("P3 u = {}", paneitz3(&u, &q)?);

    let bad = ScalarField::parse("x5")?;
    if let Err(e) = paneitz3(&bad, &q) {
        println!("x5 rejected: {e}");
    }
    Ok(())
}
