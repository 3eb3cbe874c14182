//! The round metric maximises lambda_0 times m(S^n) in its conformal class;
//! 1/mu is the trial function that shows it.

use conflab::families::random_positive_polynomial;
use conflab::functionals::{hersch_check, SolverSettings};
use conflab::ConformalFactor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> conflab::Result<()> {
    let settings = SolverSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut factors = vec![
        ConformalFactor::constant(3, 2.0)?,
        ConformalFactor::two_bubble(3, 2.0)?,
    ];
    for degree in 1..=4 {
        factors.push(random_positive_polynomial(3, degree, &mut rng)?);
    }
    println!(
        "{:<50} {:>8} {:>10} {:>10} {:>10}",
        "factor", "osc", "lambda_0", "normalised", "gap"
    );
    for mu in &factors {
        let r = hersch_check(mu, &settings)?;
        println!(
            "{:<50} {:>8.4} {:>10.6} {:>10.5} {:>10.3e}",
            r.factor, r.relative_oscillation, r.lambda0, r.normalized, r.gap
        );
    }
    println!(
        "round value 0.75 Vol(S^3) = {:.5}",
        0.75 * 2.0 * std::f64::consts::PI.powi(2)
    );
    Ok(())
}
