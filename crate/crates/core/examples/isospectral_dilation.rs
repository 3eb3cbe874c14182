//! Pulling the round metric back by a conformal dilation gives an isometric
//! metric, so the spectrum does not move even though mu is far from constant.

use conflab::conformal::measure_m_total;
use conflab::spectrum::{solve_truncated, SpectralProblem};
use conflab::ConformalFactor;

fn main() -> conflab::Result<()> {
    let round = solve_truncated(&SpectralProblem::new(
        ConformalFactor::constant(3, 1.0)?,
        40,
    )?)?
    .expanded();
    for t in [1.5, 3.0, 10.0] {
        let mu = ConformalFactor::dilation(3, t)?;
        let degree = if t > 5.0 { 64 } else { 40 };
        let values = solve_truncated(&SpectralProblem::new(mu.clone(), degree)?)?.expanded();
        let err = values
            .iter()
            .zip(&round)
            .take(10)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "t = {t:>4}: mu in [{:.4}, {:.4}], m(S^3) = {:.4}, max |lambda_k - round| over k < 10 = {err:.2e} (L = {degree})",
            mu.value(-1.0),
            mu.value(1.0),
            measure_m_total(&mu)
        );
    }
    Ok(())
}
