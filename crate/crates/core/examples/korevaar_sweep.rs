//! lambda_k m(S^3) / k^(2/3) over the shipped families, and the volume
//! normalisation lambda_k Vol^(2/3) along the two-bubble family.

use conflab::families::shipped_families;
use conflab::functionals::{sweep, SolverSettings, KOREVAAR_REGRESSION_N3};

fn main() -> conflab::Result<()> {
    let members = shipped_families(3, 0)?;
    let ks: Vec<usize> = (1..=20).collect();
    let rows = sweep(&members, &ks, &SolverSettings::default(), None)?;
    for m in &members {
        let label = m.factor.label();
        let ratios: Vec<f64> = rows
            .iter()
            .filter(|r| r.factor == label)
            .map(|r| r.ratio)
            .collect();
        let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "{label:<52} max ratio {max:>8.3}  at k = 20: {:>8.3}",
            ratios[ratios.len() - 1]
        );
    }
    let best = rows
        .iter()
        .map(|r| r.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    println!("overall max {best:.6}, stored {KOREVAAR_REGRESSION_N3:.6}");
    println!("two-bubble family, lambda_k Vol^(2/3):");
    for r in rows
        .iter()
        .filter(|r| r.family == "twobubble" && [1, 5, 20].contains(&r.k))
    {
        println!(
            "  t = {:<5} k = {:>2}: {:>9.4}",
            r.parameter, r.k, r.volume_normalized
        );
    }
    Ok(())
}
