//! Spectrum of the conformal Laplacian on the round S^3, against the closed
//! form l(l + 2) + 3/4 with multiplicity (l + 1)^2.

use conflab::spectrum::{compute_spectrum, SpectralProblem};
use conflab::ConformalFactor;

fn main() -> conflab::Result<()> {
    let round = ConformalFactor::constant(3, 1.0)?;
    let spectrum = compute_spectrum(&SpectralProblem::new(round, 24)?)?;
    println!("trusted eigenvalues: {}", spectrum.trusted.unwrap_or(0));
    println!("{:>3} {:>22} {:>6} {:>10}", "l", "lambda", "mult", "exact");
    for (l, (value, mult)) in spectrum.distinct(1e-9).into_iter().take(6).enumerate() {
        let exact = (l * (l + 2)) as f64 + 0.75;
        println!("{l:>3} {value:>22.15} {mult:>6} {exact:>10.2}");
    }
    Ok(())
}
