//! Annuli with pairwise disjoint doublings on the m-measure of a bubble
//! metric, then the k annuli with the smallest doubled volume.

use conflab::cover::{
    decompose, estimate_doubling, reindex_and_select, verify_family, MetricMeasureSpace,
};
use conflab::ConformalFactor;

fn main() -> conflab::Result<()> {
    let mu = ConformalFactor::dilation(3, 2.0)?;
    let space = MetricMeasureSpace::from_factor(&mu, 40, 50, 0)?;
    println!(
        "{} points, m(X) = {:.4}, nu(X) = {:.4}",
        space.len(),
        space.m_total(),
        space.nu_total()
    );
    let doubling = estimate_doubling(&space, 400, 0);
    println!(
        "doubling estimate {:.3} from {} balls",
        doubling.estimate, doubling.balls_used
    );
    let k = 4;
    let family = decompose(&space, k, 0)?;
    let check = verify_family(&space, &family)?;
    println!(
        "c = {:.4}; {} pairs of doubled annuli disjoint",
        family.achieved_c, check.pairs_checked
    );
    let family = reindex_and_select(family, &space, k)?;
    for a in family.selected_annuli() {
        let x = a.annulus.center.coords();
        println!(
            "  centre ({:+.3}, {:+.3}, {:+.3}, {:+.3})  r = {:.3}  R = {:.3}  m(A) = {:.4}  nu(2A) = {:.4}",
            x[0], x[1], x[2], x[3], a.annulus.inner, a.annulus.outer, a.m_mass, a.nu_doubled
        );
    }
    Ok(())
}
