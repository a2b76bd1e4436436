//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use qtkw::cli::WEAK_TEST_FUNCTIONS;
use qtkw::conformal::{divergence, flow, hemi_map, mobius_ball, AlgebraElement, BallPoint, MobiusMap};
use qtkw::expr::{parse, Expr, Point};
use qtkw::functionals::{
    cocycle_defect, curvature_integrals, gbc_defect, manufacture, weak_residuals, CandidateSolution, PrescribedData, Rules,
};
use qtkw::kwcert::{certify, kw_report, observed_order, orbit_derivative_check, CertifyOptions, Outcome, Sampling};
use qtkw::quadrature::{QuadRule, DEFAULT_SIZES};
use qtkw::sphere::{laplace, paneitz4, ScalarField, SpherePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = (bool, String);

const BATTERY: [&str; 5] = ["0", "0.25*x1", "x5^3", "0.3*x1 + 0.2*x5^3", "0.2*x1*x2 + 0.1*x5^3"];

struct Solution {
    src: &'static str,
    u: Expr,
    data: PrescribedData,
}

fn battery(rules: &Rules) -> Vec<Solution> {
    BATTERY
        .iter()
        .map(|&src| {
            let u = CandidateSolution::new(parse(src).unwrap(), rules).unwrap();
            Solution {
                src,
                data: manufacture(&u),
                u: u.expr().clone(),
            }
        })
        .collect()
}

fn random_sphere_point(rng: &mut ChaCha8Rng, upper: bool) -> Point {
    loop {
        let x: Point = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.2 && n < 1.0 {
            let mut p = x.map(|v| v / n);
            if upper {
                p[4] = p[4].abs().max(1e-3);
                let m = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                p = p.map(|v| v / m);
            }
            return p;
        }
    }
}

fn random_map(rng: &mut ChaCha8Rng, max_a: f64) -> MobiusMap {
    let dir: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = rng.gen_range(0.0..max_a);
    let a = dir.map(|v| r * v / n);
    let planes: Vec<(usize, usize, f64)> = (0..3)
        .map(|_| {
            let i = rng.gen_range(1..=4);
            let j = (i % 4) + 1;
            (i, j, rng.gen_range(-PI..PI))
        })
        .collect();
    MobiusMap::new(a, MobiusMap::rotation_from_planes(&planes).unwrap()).unwrap()
}

fn c1_quadrature() -> Verdict {
    let (nt, nn, np) = DEFAULT_SIZES;
    let hemi = QuadRule::hemisphere(nt, nn, np).unwrap();
    let bd = QuadRule::boundary(nn, np).unwrap();
    let rel = |v: f64, w: f64| (v - w).abs() / w;
    let vol = rel(hemi.integrate_expr(&parse("1").unwrap()).unwrap(), 4.0 * PI * PI / 3.0);
    let area = rel(bd.integrate_expr(&parse("1").unwrap()).unwrap(), 2.0 * PI * PI);
    let m1 = rel(hemi.integrate_expr(&parse("x5").unwrap()).unwrap(), PI * PI / 2.0);
    let m3 = rel(hemi.integrate_expr(&parse("x5^3").unwrap()).unwrap(), PI * PI / 6.0);
    let pass = vol < 1e-12 && area < 1e-12 && m1 < 1e-10 && m3 < 1e-10;
    (pass, format!("rel errors: vol {vol:.1e}, S^3 {area:.1e}, x5 {m1:.1e}, x5^3 {m3:.1e}"))
}

fn c2_spectrum() -> Verdict {
    let harmonics = [
        (1, "x1"),
        (1, "x5"),
        (2, "x1*x2"),
        (2, "x3^2 - x4^2"),
        (2, "x1*x5"),
        (3, "x1*x2*x3"),
        (3, "x5^3 - 1.5*x5*(x1^2 + x2^2)"),
        (3, "x2^3 - 3*x2*x4^2"),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts: Vec<Point> = (0..50).map(|_| random_sphere_point(&mut rng, true)).collect();
    let (mut el, mut ep) = (0.0f64, 0.0f64);
    for (k, src) in harmonics {
        let f = ScalarField::parse(src).unwrap();
        let (l, p) = (laplace(&f), paneitz4(&f));
        let k = k as f64;
        for x in &pts {
            let v = f.value(x).unwrap();
            el = el.max((l.value(x).unwrap() + k * (k + 3.0) * v).abs());
            ep = ep.max((p.value(x).unwrap() - k * (k + 1.0) * (k + 2.0) * (k + 3.0) * v).abs());
        }
    }
    (el < 1e-9 && ep < 1e-9, format!("max pointwise error: laplace {el:.1e}, paneitz {ep:.1e}"))
}

fn c3_mobius() -> Verdict {
    let m = MobiusMap::translation([0.0, 0.5, 0.0, 0.0]).unwrap();
    let mut anchor = 0.0f64;
    for s in [1.0, -1.0] {
        let y = mobius_ball(&m, &BallPoint::new([s, 0.0, 0.0, 0.0]).unwrap());
        let want = [s * 0.6, 0.8, 0.0, 0.0];
        anchor = anchor.max(y.coords().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut trip = 0.0f64;
    for _ in 0..5 {
        let psi = hemi_map(&random_map(&mut rng, 0.9));
        for _ in 0..100 {
            let p = random_sphere_point(&mut rng, true);
            let back = psi.apply_inverse(&psi.apply(&p));
            trip = trip.max(back.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    (anchor < 1e-14 && trip < 1e-11, format!("anchor error {anchor:.1e}, round trip {trip:.1e}"))
}

fn c4_liouville() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut nd) = (0.0f64, 0.0f64);
    for _ in 0..5 {
        let psi = hemi_map(&random_map(&mut rng, 0.6));
        let p = ScalarField::new(psi.factor_expr().clone());
        let l = laplace(&p);
        let lhs = ScalarField::new(paneitz4(&p).expr().clone() + 6.0 - 6.0 * (4.0 * p.expr().clone()).exp());
        for _ in 0..100 {
            let x = random_sphere_point(&mut rng, true);
            worst = worst.max(lhs.value(&x).unwrap().abs());
        }
        for _ in 0..50 {
            let mut q = random_sphere_point(&mut rng, false);
            q[4] = 0.0;
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            let q = q.map(|v| v / n);
            nd = nd.max(p.normal_derivative_at(&q).unwrap().abs());
            nd = nd.max(l.normal_derivative_at(&q).unwrap().abs());
        }
    }
    (worst < 1e-6 && nd < 1e-6, format!("max |P4 P + 6 - 6e^(4P)| {worst:.1e}, max Neumann {nd:.1e}"))
}

fn c5_gbc(rules: &Rules, sols: &[Solution]) -> Verdict {
    let mut worst = 0.0f64;
    for s in sols {
        worst = worst.max(gbc_defect(&s.u, &s.data, rules).unwrap().abs());
    }
    let cubic = &sols[2];
    let (n, b) = curvature_integrals(&cubic.u, &cubic.data, rules).unwrap();
    let split = ((n + 2.0 * PI * PI) / (2.0 * PI * PI)).abs().max(((b - 6.0 * PI * PI) / (6.0 * PI * PI)).abs());
    let tol = 1e-7 * 4.0 * PI * PI;
    (worst < tol && split < 1e-8, format!("max |defect| {worst:.1e} (tol {tol:.1e}), x5^3 split rel error {split:.1e}"))
}

fn c6_weak(rules: &Rules, sols: &[Solution]) -> Verdict {
    let vs: Vec<Expr> = WEAK_TEST_FUNCTIONS.iter().map(|s| parse(s).unwrap()).collect();
    let mut worst = 0.0f64;
    for s in sols {
        for b in weak_residuals(&s.u, &s.data, &vs, rules).unwrap() {
            worst = worst.max(b.relative());
        }
    }
    (worst < 1e-6, format!("max |residual|/scale {worst:.1e} over {} solutions x {} test functions", sols.len(), vs.len()))
}

fn c7_cocycle(rules: &Rules, sols: &[Solution]) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for s in sols {
        for _ in 0..3 {
            let (i, j, k) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4));
            let c: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.5..0.5));
            let v = c[0] * Expr::var(i) * Expr::var(j) + c[1] * Expr::var(k) + c[2] * Expr::var(5).powi(2);
            worst = worst.max(cocycle_defect(&s.u, &s.data, &v, rules).unwrap().relative());
        }
    }
    (worst < 1e-6, format!("max |defect|/scale {worst:.1e} over {} random v", 3 * sols.len()))
}

fn c8_kazdan_warner(rules: &Rules, sols: &[Solution]) -> Verdict {
    let mut worst = 0.0f64;
    for s in sols {
        worst = worst.max(kw_report(&s.u, &s.data, rules).unwrap().max_normalized());
    }
    let generic = &sols[3];
    let mut bad = generic.data.clone();
    bad.q = ScalarField::new(bad.q.expr().clone() + parse("0.1*x1").unwrap());
    let canary = kw_report(&generic.u, &bad, rules).unwrap().max_normalized();
    let q_text = bad.q.expr().to_string();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("canary.json");
    let code = qtkw::cli::run([
        "qt",
        "verify",
        "--u",
        generic.src,
        "--q",
        &q_text,
        "--nodes",
        "16",
        "--out",
        out.to_str().unwrap(),
    ]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let failing = code == 1 && report["pass"] == serde_json::Value::Bool(false);
    (
        worst < 1e-7 && canary > 1e-3 && failing,
        format!("max normalized residual {worst:.1e}; canary {canary:.1e}, report exit {code}"),
    )
}

fn c9_flows(sols: &[Solution]) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = 1e-3;
    let mut rate = 0.0f64;
    for j in 0..AlgebraElement::DIM {
        let c = AlgebraElement::basis(j);
        for _ in 0..10 {
            let p = SpherePoint::new(random_sphere_point(&mut rng, true)).unwrap();
            let d = (flow(&c, &p, h).unwrap().factor - flow(&c, &p, -h).unwrap().factor) / (2.0 * h);
            rate = rate.max((d - 0.25 * divergence(&c, &p)).abs());
        }
    }
    let rules = Rules::uniform(12).unwrap();
    let mut min_order = f64::INFINITY;
    let mut at_floor = 0;
    let mut d3_ratio = 0.0f64;
    let cases = [(1, 6), (3, 6), (3, 8), (4, 7), (2, 0)];
    for (sol, field) in cases {
        let s = &sols[sol];
        let u = CandidateSolution::new(s.u.clone(), &rules).unwrap();
        let data = manufacture(&u);
        let c = AlgebraElement::basis(field);
        let a = orbit_derivative_check(&s.u, &data, &c, 2.0 * h, &rules).unwrap();
        let b = orbit_derivative_check(&s.u, &data, &c, h, &rules).unwrap();
        let scale = b.s_u.abs().max(1.0);
        for (x, y) in [(a.d1, b.d1), (a.d2, b.d2), (a.d3, b.d3)] {
            match observed_order(x, y, 1e-8 * scale) {
                Some(o) => min_order = min_order.min(o),
                None => at_floor += 1,
            }
        }
        d3_ratio = d3_ratio.max(b.d3.abs() / scale);
    }
    (
        rate < 1e-5 && min_order >= 1.9 && d3_ratio <= 1e-4,
        format!(
            "max |dP/dt - div/4| {rate:.1e}; min observed order {min_order:.2} ({at_floor} of {} defects below 1e-8 scale); max |d3|/scale {d3_ratio:.1e} (12-point rules)",
            3 * cases.len()
        ),
    )
}

fn c10_certifier(sols: &[Solution]) -> Verdict {
    let coarse = Sampling::uniform(8).unwrap();
    let opts = CertifyOptions::default();
    let mut notes = Vec::new();

    let a = match certify(&PrescribedData::new(parse("3 + 0.1*x1").unwrap(), parse("1").unwrap()).unwrap(), &coarse, &opts).unwrap() {
        Outcome::Certificate(c) => {
            let x1 = AlgebraElement::gradient(1);
            let dir = c.c.0.iter().zip(&x1.0).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            notes.push(format!("(a) min {:.1e} max {:.6}", c.fine.interior_min, c.fine.max));
            c.fine.interior_min >= -1e-9 && (c.fine.max - 0.1).abs() < 1e-3 && dir < 1e-9
        }
        Outcome::NoneFound(n) => {
            notes.push(format!("(a) none found: {}", n.reason));
            false
        }
    };
    let b = matches!(
        certify(&PrescribedData::new(parse("3").unwrap(), parse("0").unwrap()).unwrap(), &coarse, &opts).unwrap(),
        Outcome::NoneFound(_)
    );
    notes.push(format!("(b) {}", if b { "none found" } else { "unexpected certificate" }));

    let psi = Arc::new(hemi_map(&MobiusMap::translation([0.0, 0.5, 0.0, 0.0]).unwrap()));
    let q = 3.0 + 0.05 * psi.inverse_exprs()[0].clone();
    let conj = PrescribedData::new(q, parse("1").unwrap()).unwrap();
    let with_psi = CertifyOptions {
        psi: Some(psi),
        ..CertifyOptions::default()
    };
    let c = match certify(&conj, &coarse, &with_psi).unwrap() {
        Outcome::Certificate(c) => {
            let dir = c.c.0.iter().zip(&AlgebraElement::gradient(1).0).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            notes.push(format!("(c) Psi_*X1 coefficient error {dir:.1e}, max {:.4}", c.fine.max));
            dir < 1e-9 && c.fine.interior_min >= -1e-9 * c.fine.scale
        }
        Outcome::NoneFound(n) => {
            notes.push(format!("(c) none found: {}", n.reason));
            false
        }
    };
    let mut strict = 0;
    for s in sols {
        if let Outcome::Certificate(_) = certify(&s.data, &coarse, &opts).unwrap() {
            strict += 1;
        }
    }
    notes.push(format!("(d) {strict} certificates for {} solutions", sols.len()));
    (a && b && c && strict == 0, notes.join("; "))
}

fn main() {
    let start = Instant::now();
    let rules = Rules::default();
    let sols = battery(&rules);
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("quadrature anchors", Box::new(c1_quadrature)),
        ("operator spectrum", Box::new(c2_spectrum)),
        ("Mobius anchor and round trip", Box::new(c3_mobius)),
        ("Liouville equation of Mobius factors", Box::new(c4_liouville)),
        ("Gauss-Bonnet-Chern", Box::new(|| c5_gbc(&rules, &sols))),
        ("weak formulation", Box::new(|| c6_weak(&rules, &sols))),
        ("cocycle identity", Box::new(|| c7_cocycle(&rules, &sols))),
        ("Kazdan-Warner residuals", Box::new(|| c8_kazdan_warner(&rules, &sols))),
        ("flow consistency", Box::new(|| c9_flows(&sols))),
        ("certifier", Box::new(|| c10_certifier(&sols))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (pass, detail) = f();
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.1}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of 10 passed in {:.1}s", 10 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
