//! Quadrature on the sphere for zonal integrands.
//!
//! Two tools live here. [`QuadratureGrid`] is a Gauss rule in `u = cos phi_1`
//! against the weight `(1 - u^2)^{(n-2)/2}`, exact for polynomials and used
//! wherever integrands are smooth (spectral assembly, total measures). The
//! adaptive panel integrator handles piecewise-smooth profiles such as the
//! test functions, splitting at their kink radii.

use nalgebra::DMatrix;
use once_cell::sync::Lazy;
use statrs::function::gamma::ln_gamma;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::sphere::sphere_volume;

/// Three-term recurrence of the polynomials orthonormal on `[-1, 1]` with
/// respect to `(1 - u^2)^a`, `a > -1`.
#[derive(Debug, Clone)]
pub struct SymmetricJacobi {
    exponent: f64,
    /// `sqrt(beta_k)` for `k = 1, 2, ...` (index 0 unused).
    sqrt_beta: Vec<f64>,
    p0: f64,
}

impl SymmetricJacobi {
    pub fn new(exponent: f64, max_degree: usize) -> Self {
        assert!(exponent > -1.0, "Jacobi exponent must exceed -1");
        let a = exponent;
        let mut sqrt_beta = vec![0.0; max_degree + 2];
        for (k, sb) in sqrt_beta.iter_mut().enumerate().skip(1) {
            let kf = k as f64;
            let beta = if k == 1 {
                1.0 / (2.0 * a + 3.0)
            } else {
                kf * (kf + 2.0 * a) / (4.0 * (kf + a) * (kf + a) - 1.0)
            };
            *sb = beta.sqrt();
        }
        Self {
            exponent,
            sqrt_beta,
            p0: 1.0 / weight_mass(a).sqrt(),
        }
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Values and first derivatives of `p_0, ..., p_degree` at `u`.
    pub fn eval(&self, u: f64, degree: usize, values: &mut [f64], derivs: &mut [f64]) {
        values[0] = self.p0;
        derivs[0] = 0.0;
        if degree == 0 {
            return;
        }
        let (mut pm, mut dm) = (0.0, 0.0);
        for k in 0..degree {
            let (p, d) = (values[k], derivs[k]);
            let sb_k = self.sqrt_beta[k];
            let sb_next = self.sqrt_beta[k + 1];
            values[k + 1] = (u * p - sb_k * pm) / sb_next;
            derivs[k + 1] = (p + u * d - sb_k * dm) / sb_next;
            pm = p;
            dm = d;
        }
    }

    fn eval_top(&self, u: f64, degree: usize) -> (f64, f64, f64) {
        // returns (p_degree, p_degree', sum_{k<degree} p_k^2)
        let (mut p, mut d) = (self.p0, 0.0);
        let (mut pm, mut dm) = (0.0, 0.0);
        let mut sum = 0.0;
        for k in 0..degree {
            sum += p * p;
            let sb_k = self.sqrt_beta[k];
            let sb_next = self.sqrt_beta[k + 1];
            let pn = (u * p - sb_k * pm) / sb_next;
            let dn = (p + u * d - sb_k * dm) / sb_next;
            pm = p;
            dm = d;
            p = pn;
            d = dn;
        }
        (p, d, sum)
    }
}

/// `int_{-1}^{1} (1 - u^2)^a du = sqrt(pi) Gamma(a + 1) / Gamma(a + 3/2)`.
pub fn weight_mass(a: f64) -> f64 {
    (0.5 * PI.ln() + ln_gamma(a + 1.0) - ln_gamma(a + 1.5)).exp()
}

type Rule = Arc<(Vec<f64>, Vec<f64>)>;

static RULES: Lazy<Mutex<HashMap<(u64, usize), Rule>>> = Lazy::new(|| Mutex::new(HashMap::new()));

/// Gauss rule for `int_{-1}^{1} f(u) (1 - u^2)^a du` with `order` nodes.
/// Nodes come from the Golub-Welsch eigenproblem, are polished by Newton
/// steps on the recurrence, and weights use the Christoffel formula.
/// Rules are memoised per `(a, order)`.
pub fn gauss_jacobi_symmetric(a: f64, order: usize) -> Rule {
    let key = (a.to_bits(), order);
    if let Some(rule) = RULES.lock().expect("quadrature cache").get(&key) {
        return rule.clone();
    }
    let rule = Arc::new(compute_rule(a, order));
    RULES
        .lock()
        .expect("quadrature cache")
        .insert(key, rule.clone());
    rule
}

fn compute_rule(a: f64, order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let rec = SymmetricJacobi::new(a, order);
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        jacobi[(k, k - 1)] = rec.sqrt_beta[k];
        jacobi[(k - 1, k)] = rec.sqrt_beta[k];
    }
    let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let mut weights = Vec::with_capacity(order);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, d, _) = rec.eval_top(*x, order);
            if d == 0.0 {
                break;
            }
            let step = p / d;
            *x -= step;
            if step.abs() < 1e-17 {
                break;
            }
        }
        let (_, _, sum) = rec.eval_top(*x, order);
        weights.push(1.0 / sum);
    }
    // symmetrise against round-off
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -x;
        nodes[j] = x;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss rule in `u = cos phi_1` for zonal integrals over `S^n`:
/// `int_{S^n} f dnu = Vol(S^{n-1}) sum_i w_i f(u_i)`.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub dimension: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `Vol(S^{n-1})`, the integral over the angles `phi_2, ..., phi_n`.
    pub angular: f64,
}

impl QuadratureGrid {
    /// Polynomial degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        2 * self.nodes.len() - 1
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `int_{S^n} f(x^0) dnu`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.angular
            * self
                .nodes
                .iter()
                .zip(&self.weights)
                .map(|(&u, &w)| w * f(u))
                .sum::<f64>()
    }
}

/// Gauss grid with `order` nodes in `u`; `order >= 2`.
pub fn build_quadrature(n: usize, order: usize) -> Result<QuadratureGrid> {
    if n < 3 {
        return Err(Error::Dimension(n));
    }
    if order < 2 {
        return Err(Error::Config(format!("quadrature order {order} < 2")));
    }
    let rule = gauss_jacobi_symmetric((n as f64 - 2.0) / 2.0, order);
    Ok(QuadratureGrid {
        dimension: n,
        nodes: rule.0.clone(),
        weights: rule.1.clone(),
        angular: sphere_volume(n - 1),
    })
}

/// Grid of `order` nodes that must integrate degree `degree` exactly.
pub fn build_quadrature_exact(n: usize, order: usize, degree: usize) -> Result<QuadratureGrid> {
    if 2 * order < degree + 1 {
        return Err(Error::Config(format!(
            "quadrature order {order} is exact only to degree {}, {degree} requested",
            2 * order.max(1) - 1
        )));
    }
    build_quadrature(n, order)
}

const PANEL_ORDER: usize = 20;
const MAX_PANELS: usize = 4000;

fn panel(rule: &(Vec<f64>, Vec<f64>), f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * rule
        .0
        .iter()
        .zip(&rule.1)
        .map(|(x, w)| w * f(c + h * x))
        .sum::<f64>()
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn split(
    rule: &(Vec<f64>, Vec<f64>),
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    whole: f64,
) -> [Piece; 2] {
    let m = 0.5 * (a + b);
    let (l, r) = (panel(rule, f, a, m), panel(rule, f, m, b));
    let error = (l + r - whole).abs();
    [
        Piece {
            a,
            b: m,
            value: l,
            error: 0.5 * error,
        },
        Piece {
            a: m,
            b,
            value: r,
            error: 0.5 * error,
        },
    ]
}

/// Adaptive Gauss-Legendre integral of `f` on `[a, b]`, with the interval
/// pre-split at `breaks` (kinks of a piecewise-smooth integrand). The panel
/// with the largest error estimate is bisected until the summed estimate
/// drops below `rel_tol` times the integral of `|f|`, or the panel budget
/// runs out.
pub fn integrate_adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    rel_tol: f64,
) -> f64 {
    adaptive(f, a, b, breaks, rel_tol).0
}

/// As [`integrate_adaptive`], but `None` when the error estimate stays
/// above `max(rel_tol, 1e-9)` relative, as for a divergent integral.
pub fn integrate_adaptive_checked(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    rel_tol: f64,
) -> Option<f64> {
    let (value, error, scale) = adaptive(f, a, b, breaks, rel_tol);
    (value.is_finite() && error <= rel_tol.max(1e-9) * scale).then_some(value)
}

fn adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    rel_tol: f64,
) -> (f64, f64, f64) {
    let rule = gauss_jacobi_symmetric(0.0, PANEL_ORDER);
    let mut cuts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    cuts.extend(inner);
    cuts.push(b);
    let mut pieces = Vec::new();
    for w in cuts.windows(2) {
        let h = (w[1] - w[0]) / 4.0;
        for i in 0..4 {
            let lo = w[0] + h * i as f64;
            let hi = if i == 3 { w[1] } else { lo + h };
            let whole = panel(&rule, &f, lo, hi);
            pieces.extend(split(&rule, &f, lo, hi, whole));
        }
    }
    loop {
        let scale: f64 = pieces.iter().map(|p| p.value.abs()).sum();
        let error: f64 = pieces.iter().map(|p| p.error).sum();
        if error <= rel_tol * scale || pieces.len() >= MAX_PANELS || !error.is_finite() {
            let value = pieces.iter().map(|p| p.value).sum();
            return (value, error, scale);
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let p = pieces.swap_remove(worst);
        // below this width further bisection only shuffles round-off
        if p.b - p.a <= 1e-12 * (b - a) {
            pieces.push(p);
            let value = pieces.iter().map(|p| p.value).sum();
            let scale: f64 = pieces.iter().map(|p| p.value.abs()).sum();
            return (value, error, scale);
        }
        pieces.extend(split(&rule, &f, p.a, p.b, p.value));
    }
}

/// Default relative tolerance for sphere integrals.
pub const INTEGRAL_TOL: f64 = 1e-13;

/// `int_{S^n} f(d(p, x)) dnu = Vol(S^{n-1}) int_0^pi f(psi) sin^{n-1} psi dpsi`
/// for a function of the distance to some centre.
pub fn zonal_integral(n: usize, f: impl Fn(f64) -> f64, breaks: &[f64]) -> f64 {
    let e = (n - 1) as i32;
    sphere_volume(n - 1)
        * integrate_adaptive(
            |psi| f(psi) * psi.sin().powi(e),
            0.0,
            PI,
            breaks,
            INTEGRAL_TOL,
        )
}

/// [`zonal_integral`] that reports a divergent or unresolved integral as
/// `None`.
pub fn zonal_integral_checked(n: usize, f: impl Fn(f64) -> f64, breaks: &[f64]) -> Option<f64> {
    let e = (n - 1) as i32;
    integrate_adaptive_checked(
        |psi| f(psi) * psi.sin().powi(e),
        0.0,
        PI,
        breaks,
        INTEGRAL_TOL,
    )
    .map(|v| v * sphere_volume(n - 1))
}

/// Inner nodes used for the azimuthal average in [`bizonal_integral`].
pub const BIZONAL_INNER_ORDER: usize = 96;

/// `int_{S^n} g(d(q, x)) h(x.p) dnu` where `q` sits at angle `alpha` from
/// `p`: `g` is zonal about `q`, `h` is zonal about `p`. The inner average over
/// the `S^{n-1}` of directions around `q` reduces to a Gauss-Jacobi rule in
/// `s` with weight `(1 - s^2)^{(n-3)/2}` times `Vol(S^{n-2})`.
pub fn bizonal_integral(
    n: usize,
    alpha: f64,
    g: impl Fn(f64) -> f64,
    h: impl Fn(f64) -> f64,
    breaks: &[f64],
) -> f64 {
    let e = (n - 1) as i32;
    let rule = gauss_jacobi_symmetric((n as f64 - 3.0) / 2.0, BIZONAL_INNER_ORDER);
    let inner_scale = sphere_volume(n - 2);
    let (sa, ca) = alpha.sin_cos();
    integrate_adaptive(
        |psi| {
            let gv = g(psi);
            if gv == 0.0 {
                return 0.0;
            }
            let (sp, cp) = psi.sin_cos();
            let avg: f64 = rule
                .0
                .iter()
                .zip(&rule.1)
                .map(|(s, w)| w * h((ca * cp + sa * sp * s).clamp(-1.0, 1.0)))
                .sum();
            gv * inner_scale * avg * sp.powi(e)
        },
        0.0,
        PI,
        breaks,
        INTEGRAL_TOL,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Composite Simpson on a fine mesh; independent of the Gauss machinery.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for i in 1..m {
            s += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn legendre_rule_matches_tables() {
        let rule = gauss_jacobi_symmetric(0.0, 3);
        assert_relative_eq!(rule.0[2], 0.7745966692414834, epsilon = 1e-15);
        assert_relative_eq!(rule.1[0], 5.0 / 9.0, epsilon = 1e-14);
        assert_relative_eq!(rule.1[1], 8.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn chebyshev_first_kind_rule() {
        // a = -1/2: equal weights pi/N at cos((2i-1) pi / 2N)
        let rule = gauss_jacobi_symmetric(-0.5, 7);
        for (i, (x, w)) in rule.0.iter().zip(&rule.1).enumerate() {
            let expect = -((2 * i + 1) as f64 * PI / 14.0).cos();
            assert!((x - expect).abs() < 1e-14);
            assert!((w - PI / 7.0).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_volume_and_moments() {
        for n in 3..=6 {
            let grid = build_quadrature(n, 16).unwrap();
            assert_relative_eq!(
                grid.integrate(|_| 1.0),
                sphere_volume(n),
                max_relative = 1e-13
            );
            assert!(grid.integrate(|u| u).abs() < 1e-13);
        }
        let grid = build_quadrature(3, 16).unwrap();
        assert_relative_eq!(grid.integrate(|_| 1.0), 19.739208802178716, epsilon = 1e-12);
        let second = grid.integrate(|u| u * u);
        let oracle =
            4.0 * PI * simpson(|phi| phi.cos().powi(2) * phi.sin().powi(2), 0.0, PI, 20000);
        assert_relative_eq!(second, 2.0 * PI * PI / 4.0, max_relative = 1e-13);
        assert_relative_eq!(second, oracle, max_relative = 1e-10);
    }

    #[test]
    fn grid_exactness_contract() {
        let grid = build_quadrature(4, 10).unwrap();
        assert_eq!(grid.exact_degree(), 19);
        // u^18 moment against the closed form Beta integral
        let exact = sphere_volume(3) * (ln_gamma(9.5) + ln_gamma(2.0) - ln_gamma(11.5)).exp();
        assert_relative_eq!(grid.integrate(|u| u.powi(18)), exact, max_relative = 1e-12);
        assert!(build_quadrature_exact(3, 4, 9).is_err());
        assert!(build_quadrature_exact(3, 5, 9).is_ok());
        assert!(build_quadrature(3, 1).is_err());
        assert!(build_quadrature(2, 8).is_err());
    }

    #[test]
    fn adaptive_handles_kinks_and_peaks() {
        let v = integrate_adaptive(|x| (x - 0.3).abs(), 0.0, 1.0, &[0.3], 1e-14);
        assert_relative_eq!(v, 0.5 * (0.09 + 0.49), max_relative = 1e-14);
        let t: f64 = 10.0;
        let v = integrate_adaptive(
            |u| t * t / (t * t * (1.0 + u) + 1.0 - u).powi(2),
            -1.0,
            1.0,
            &[],
            1e-14,
        );
        assert_relative_eq!(v, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn bizonal_reduces_to_zonal_on_axis() {
        let g = |psi: f64| psi.cos().powi(2) + 0.1;
        let h = |u: f64| 1.0 + 0.5 * u;
        let on_axis = bizonal_integral(3, 0.0, g, h, &[]);
        let direct = zonal_integral(3, |psi| g(psi) * h(psi.cos()), &[]);
        assert_relative_eq!(on_axis, direct, max_relative = 1e-12);
        // h linear in x.p averages to h(cos alpha cos psi); check off-axis too
        let alpha = 0.9;
        let off = bizonal_integral(4, alpha, g, h, &[]);
        let expect = zonal_integral(4, |psi| g(psi) * h(alpha.cos() * psi.cos()), &[]);
        assert_relative_eq!(off, expect, max_relative = 1e-12);
    }
}
