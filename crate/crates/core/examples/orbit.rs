//! Conformal flows and the first variation of the functionals along the
//! orbit `u_t = u o phi_t + P_t`.
//!
//! ```text
//! cargo run --release --example orbit
//! ```

use qtkw::conformal::{divergence, flow, AlgebraElement};
use qtkw::expr::parse;
use qtkw::functionals::{manufacture, CandidateSolution, Rules};
use qtkw::kwcert::{observed_order, orbit_derivative_check};
use qtkw::sphere::SpherePoint;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x1 = AlgebraElement::gradient(1);
    let p = SpherePoint::normalized([0.3, 0.1, -0.2, 0.4, 0.7])?;
    for t in [0.0, 0.1, 0.5] {
        let r = flow(&x1, &p, t)?;
        println!("phi_{t}(p) = {:.6?}  P_t = {:.8}", r.endpoint.coords(), r.factor);
    }
    let h = 1e-3;
    let rate = (flow(&x1, &p, h)?.factor - flow(&x1, &p, -h)?.factor) / (2.0 * h);
    println!("dP/dt at 0: {rate:.10}, div X / 4: {:.10}", divergence(&x1, &p) / 4.0);

    let rules = Rules::uniform(12)?;
    let u = CandidateSolution::new(parse("0.3*x1 + 0.2*x5^3")?, &rules)?;
    let data = manufacture(&u);
    let mut prev = None;
    for h in [4e-3, 2e-3, 1e-3] {
        let d = orbit_derivative_check(u.expr(), &data, &x1, h, &rules)?;
        print!("h={h:.0e}  d1={:>10.3e} d2={:>10.3e} d3={:>10.3e}", d.d1, d.d2, d.d3);
        if let Some((a, b)) = prev {
            let o = |x, y| observed_order(x, y, 1e-8 * d.s_u.abs().max(1.0)).map_or("floor".to_string(), |o| format!("{o:.2}"));
            print!("  orders {} {}", o(a, d.d1), o(b, d.d2));
        }
        println!();
        prev = Some((d.d1, d.d2));
    }
    Ok(())
}
