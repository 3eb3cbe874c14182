//! Upper bounds on lambda_{k-1} from k disjointly supported test functions,
//! next to the Galerkin eigenvalue.

use conflab::functionals::{certify_upper_bound, CertifyOptions};
use conflab::ConformalFactor;

fn main() -> conflab::Result<()> {
    let options = CertifyOptions::default();
    for mu in [
        ConformalFactor::constant(3, 1.0)?,
        ConformalFactor::two_bubble(3, 1.5)?,
    ] {
        println!("{mu}");
        for k in [1, 2, 5, 10] {
            let r = certify_upper_bound(&mu, k, &options)?;
            let worst = r
                .annuli
                .iter()
                .max_by(|a, b| a.quotient.total_cmp(&b.quotient))
                .expect("k >= 1");
            println!(
                "  k = {k:>2}: lambda_{:<2} = {:>9.5} <= {:>10.5}   bound m / k^(2/3) = {:>8.3}   worst annulus r = {:.3}, R = {:.3}",
                r.eigen_index, r.solver_value, r.certified_bound, r.certified_ratio, worst.annulus.inner, worst.annulus.outer
            );
        }
    }
    Ok(())
}
