//! The ball, complement and annulus test functions: values on the support,
//! gradient energies, and the lemma checks.

use conflab::testfn::{
    ball_energy_bound, boundary_profile_f, energy_n_norm, lemma_checks, TestFunction,
};
use conflab::SpherePoint;

fn main() -> conflab::Result<()> {
    let p = SpherePoint::pole(3);
    let annulus = TestFunction::annulus(p.clone(), 0.4, 1.0)?;
    println!("annulus A(p; 0.4, 1.0), support {:?}", annulus.support());
    for psi in [0.1, 0.2, 0.4, 0.7, 1.0, 1.5, 2.0] {
        let (v, d) = annulus.profile(psi);
        println!("  psi = {psi:.1}: phi = {v:.4}, dphi/dpsi = {d:+.4}");
    }
    for r in [0.1, 0.5, 1.0, 1.5] {
        let ball = TestFunction::ball(p.clone(), r)?;
        println!(
            "R = {r}: f(R) = {:.4}, int |grad phi|^3 = {:.4} (bound {:.4})",
            boundary_profile_f(r)?,
            energy_n_norm(&ball),
            ball_energy_bound(3)
        );
    }
    for c in lemma_checks(3)? {
        println!(
            "{:<30} {} {:.10}",
            c.check,
            if c.pass { "ok  " } else { "FAIL" },
            c.value
        );
    }
    Ok(())
}
