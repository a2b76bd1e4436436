//! Mobius automorphisms of the ball, the induced hemisphere maps, their
//! conformal factors and pushed-forward fields.
//!
//! ```text
//! cargo run --release --example mobius
//! ```

use qtkw::conformal::{algebra_eval, hemi_map, mobius_ball, pushforward, AlgebraElement, BallPoint, MobiusMap};
use qtkw::sphere::{paneitz4, ScalarField, SpherePoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = MobiusMap::translation([0.0, 0.5, 0.0, 0.0])?;
    for s in [1.0, -1.0] {
        let y = mobius_ball(&m, &BallPoint::new([s, 0.0, 0.0, 0.0])?);
        println!("Phi_a({s:+}e1) = {:?}", y.coords());
    }

    let r = MobiusMap::rotation_from_planes(&[(1, 2, 0.4), (3, 4, -1.1)])?;
    let psi = hemi_map(&MobiusMap::new([0.2, -0.1, 0.3, 0.0], r)?);
    let p = SpherePoint::normalized([0.1, 0.4, -0.3, 0.2, 0.8])?;
    let img = psi.apply(p.coords());
    let back = psi.apply_inverse(&img);
    println!("Psi(p) = {img:.6?}");
    println!("round trip error {:.1e}", back.iter().zip(p.coords()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));

    // The factor P of Psi^* g = e^{2P} g solves P4 P + 6 = 6 e^{4P}.
    let factor = ScalarField::new(psi.factor_expr().clone());
    let lhs = paneitz4(&factor).value(p.coords())? + 6.0;
    let rhs = 6.0 * (4.0 * psi.factor(p.coords())).exp();
    println!("P = {:.6}, Liouville residual {:.1e}", psi.factor(p.coords()), lhs - rhs);

    let q = hemi_map(&m);
    let x1 = AlgebraElement::gradient(1);
    for fixed in [[0.6, 0.8, 0.0, 0.0, 0.0], [-0.6, 0.8, 0.0, 0.0, 0.0]] {
        let v: Vec<String> = pushforward(&q, &x1, &fixed)?.iter().map(|c| format!("{c:.1e}")).collect();
        println!("Psi_*X1 at {fixed:?} = {v:?}");
    }
    println!("X1 at north pole = {:?}", algebra_eval(&x1, &SpherePoint::north_pole()));
    Ok(())
}
