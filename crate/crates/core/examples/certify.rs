//! Nonexistence certificates: plain, inconclusive, and conjugated by a
//! Mobius map of the hemisphere.
//!
//! ```text
//! cargo run --release --example certify
//! ```

use std::sync::Arc;

use qtkw::conformal::{hemi_map, AlgebraElement, MobiusMap};
use qtkw::expr::parse;
use qtkw::functionals::PrescribedData;
use qtkw::kwcert::{certify, CertifyOptions, Outcome, Sampling};

fn show(label: &str, out: &Outcome) {
    match out {
        Outcome::Certificate(c) => {
            let dir: Vec<String> = (0..AlgebraElement::DIM)
                .filter(|&j| c.c.0[j].abs() > 1e-12)
                .map(|j| format!("{:+.6}*{}", c.c.0[j], AlgebraElement::name(j)))
                .collect();
            println!("{label}: certificate {}", dir.join(" "));
            println!(
                "    fine grid: interior min {:.3e}, boundary min {:.3e}, max {:.6}, {} + {} samples",
                c.fine.interior_min, c.fine.boundary_min, c.fine.max, c.fine.interior_samples, c.fine.boundary_samples
            );
        }
        Outcome::NoneFound(n) => println!("{label}: none found, inconclusive ({})", n.reason),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let coarse = Sampling::uniform(8)?;
    let opts = CertifyOptions::default();

    let monotone = PrescribedData::new(parse("3 + 0.1*x1")?, parse("1")?)?;
    show("Q = 3 + 0.1 x1, T = 1", &certify(&monotone, &coarse, &opts)?);

    let round = PrescribedData::new(parse("3")?, parse("0")?)?;
    show("Q = 3, T = 0", &certify(&round, &coarse, &opts)?);

    // Q = 3 + 0.05 (x1 o Psi^{-1}): monotone only after undoing Psi.
    let psi = Arc::new(hemi_map(&MobiusMap::translation([0.0, 0.5, 0.0, 0.0])?));
    let q = 3.0 + 0.05 * psi.inverse_exprs()[0].clone();
    let conj = PrescribedData::new(q, parse("1")?)?;
    show("conjugated, plain basis", &certify(&conj, &coarse, &opts)?);
    let with_psi = CertifyOptions {
        psi: Some(psi),
        ..CertifyOptions::default()
    };
    show("conjugated, Psi_* basis", &certify(&conj, &coarse, &with_psi)?);
    Ok(())
}
