//! Lipschitz test functions on balls, ball complements and annuli.
//!
//! Each function is a profile `F(psi)` of the distance `psi = d(p, x)` to a
//! centre `p`. On the ball `B(p, 2R)` the ball function is `x_p . theta_{p,t}`
//! with `t = tan R`, which sends `B(p, 2R)` onto the hemisphere around `p`:
//!
//! ```text
//! F(psi) = (t^2 (1 + cos psi) - (1 - cos psi)) / (t^2 (1 + cos psi) + (1 - cos psi))
//! ```
//!
//! The complement function uses `-x_p . theta_{p,tau}` with `tau = tan(r/4)`
//! outside `B(p, r/2)`, and the annulus function is their product.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::conformal::ZonalFunction;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_adaptive, zonal_integral, INTEGRAL_TOL};
use crate::sphere::{geodesic_distance, sphere_volume, SpherePoint};

/// Geodesic annulus `A(p; r, R) = {x : r <= d(p, x) < R}`; an outer radius
/// of `pi` or more takes in everything beyond `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub center: SpherePoint,
    pub inner: f64,
    pub outer: f64,
}

impl Annulus {
    pub fn new(center: SpherePoint, inner: f64, outer: f64) -> Result<Self> {
        if !(inner >= 0.0 && inner < outer && outer <= PI + 1e-9) {
            return Err(Error::OutOfRange(format!(
                "annulus radii r = {inner}, R = {outer}"
            )));
        }
        Ok(Self {
            center,
            inner,
            outer,
        })
    }

    pub fn ball(center: SpherePoint, radius: f64) -> Result<Self> {
        Self::new(center, 0.0, radius)
    }

    /// `2A = A(p; r/2, 2R)`, outer radius capped at `pi`.
    pub fn doubled(&self) -> Annulus {
        Annulus {
            center: self.center.clone(),
            inner: 0.5 * self.inner,
            outer: (2.0 * self.outer).min(PI),
        }
    }

    pub fn contains_distance(&self, d: f64) -> bool {
        d >= self.inner && (d < self.outer || self.outer >= PI)
    }

    pub fn contains(&self, x: &SpherePoint) -> bool {
        self.contains_distance(geodesic_distance(&self.center, x))
    }
}

/// `t = sqrt((1 - cos 2R) / (1 + cos 2R)) = tan R`, the dilation that maps
/// `B(p, 2R)` onto `B(p, pi/2)`.
pub fn t_of_r(outer: f64) -> Result<f64> {
    if !(outer > 0.0 && outer < FRAC_PI_2) {
        return Err(Error::OutOfRange(format!("R = {outer} outside (0, pi/2)")));
    }
    Ok(outer.tan())
}

/// `tau = tan(r/4)`, the dilation that maps `B(p, r/2)` onto `B(p, pi/2)`.
pub fn tau_of_r(inner: f64) -> Result<f64> {
    if !(inner > 0.0 && inner < PI) {
        return Err(Error::OutOfRange(format!("r = {inner} outside (0, pi)")));
    }
    Ok((inner / 4.0).tan())
}

/// Value of the ball function on `dB(p, R)`:
/// `f(R) = (2 cos R + 1) / (2 cos^2 R + 2 cos R + 1)`.
pub fn boundary_profile_f(outer: f64) -> Result<f64> {
    if !(outer > 0.0 && outer < FRAC_PI_2) {
        return Err(Error::OutOfRange(format!("R = {outer} outside (0, pi/2)")));
    }
    let c = outer.cos();
    Ok((2.0 * c + 1.0) / (2.0 * c * c + 2.0 * c + 1.0))
}

/// `x_p . theta_{p,t}` as a function of `psi` (value, d/dpsi).
fn dilated_height(t: f64, psi: f64) -> (f64, f64) {
    let (s, c) = psi.sin_cos();
    let a = t * t * (1.0 + c);
    let b = 1.0 - c;
    let d = a + b;
    ((a - b) / d, -4.0 * t * t * s / (d * d))
}

/// Which of the three constructions a [`TestFunction`] is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Ball,
    Complement,
    Annulus,
}

/// Outer cutoff factor: the ball function, or `1` when `R >= pi/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Outer {
    Dilated { t: f64, edge: f64 },
    Flat,
}

/// Inner cutoff factor: the complement function, or `1` when `r = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Inner {
    Dilated { tau: f64, edge: f64 },
    Flat,
}

impl Outer {
    fn eval(&self, psi: f64) -> (f64, f64) {
        match *self {
            Outer::Flat => (1.0, 0.0),
            Outer::Dilated { edge, .. } if psi >= edge => (0.0, 0.0),
            Outer::Dilated { t, .. } => {
                let (v, d) = dilated_height(t, psi);
                (v.clamp(0.0, 1.0), d)
            }
        }
    }
}

impl Inner {
    fn eval(&self, psi: f64) -> (f64, f64) {
        match *self {
            Inner::Flat => (1.0, 0.0),
            Inner::Dilated { edge, .. } if psi < edge => (0.0, 0.0),
            Inner::Dilated { tau, .. } => {
                let (v, d) = dilated_height(tau, psi);
                ((-v).clamp(0.0, 1.0), -d)
            }
        }
    }
}

/// A test function centred at `p`, with analytic profile and slope.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub kind: TestKind,
    pub center: SpherePoint,
    pub inner: f64,
    pub outer: f64,
    outer_factor: Outer,
    inner_factor: Inner,
}

impl TestFunction {
    /// `phi_{p,R}`, supported in `B(p, 2R)`. For `R >= pi/2` the cutoff is
    /// dropped and the function is `1`.
    pub fn ball(center: SpherePoint, outer: f64) -> Result<Self> {
        let outer_factor = outer_cutoff(outer)?;
        Ok(Self {
            kind: TestKind::Ball,
            center,
            inner: 0.0,
            outer,
            outer_factor,
            inner_factor: Inner::Flat,
        })
    }

    /// `phi-bar_{p,r}`, vanishing on `B(p, r/2)`.
    pub fn complement(center: SpherePoint, inner: f64) -> Result<Self> {
        let inner_factor = inner_cutoff(inner)?;
        Ok(Self {
            kind: TestKind::Complement,
            center,
            inner,
            outer: PI,
            outer_factor: Outer::Flat,
            inner_factor,
        })
    }

    /// `phi_{p,r,R} = phi_{p,R} phi-bar_{p,r}`, supported in `A(p; r/2, 2R)`.
    /// `r = 0` gives the ball function.
    pub fn annulus(center: SpherePoint, inner: f64, outer: f64) -> Result<Self> {
        if !(inner < outer) {
            return Err(Error::OutOfRange(format!(
                "annulus radii r = {inner}, R = {outer}"
            )));
        }
        let inner_factor = if inner == 0.0 {
            Inner::Flat
        } else {
            inner_cutoff(inner)?
        };
        Ok(Self {
            kind: TestKind::Annulus,
            center,
            inner,
            outer,
            outer_factor: outer_cutoff(outer)?,
            inner_factor,
        })
    }

    pub fn for_annulus(a: &Annulus) -> Result<Self> {
        Self::annulus(a.center.clone(), a.inner, a.outer)
    }

    /// Dilation parameter `t` of the outer factor, if present.
    pub fn t(&self) -> Option<f64> {
        match self.outer_factor {
            Outer::Dilated { t, .. } => Some(t),
            Outer::Flat => None,
        }
    }

    /// Dilation parameter `tau` of the inner factor, if present.
    pub fn tau(&self) -> Option<f64> {
        match self.inner_factor {
            Inner::Dilated { tau, .. } => Some(tau),
            Inner::Flat => None,
        }
    }

    /// `(F(psi), F'(psi))`.
    pub fn profile(&self, psi: f64) -> (f64, f64) {
        let (a, da) = self.outer_factor.eval(psi);
        if a == 0.0 {
            return (0.0, 0.0);
        }
        let (b, db) = self.inner_factor.eval(psi);
        (a * b, da * b + a * db)
    }

    pub fn eval(&self, x: &SpherePoint) -> f64 {
        self.profile(geodesic_distance(&self.center, x)).0
    }

    /// Support `[lo, hi)` in the distance variable.
    pub fn support(&self) -> (f64, f64) {
        let lo = match self.inner_factor {
            Inner::Dilated { edge, .. } => edge,
            Inner::Flat => 0.0,
        };
        let hi = match self.outer_factor {
            Outer::Dilated { edge, .. } => edge,
            Outer::Flat => PI,
        };
        (lo, hi)
    }
}

fn outer_cutoff(outer: f64) -> Result<Outer> {
    if !(outer > 0.0) {
        return Err(Error::OutOfRange(format!("R = {outer} must be positive")));
    }
    if outer >= FRAC_PI_2 {
        return Ok(Outer::Flat);
    }
    Ok(Outer::Dilated {
        t: t_of_r(outer)?,
        edge: 2.0 * outer,
    })
}

fn inner_cutoff(inner: f64) -> Result<Inner> {
    Ok(Inner::Dilated {
        tau: tau_of_r(inner)?,
        edge: 0.5 * inner,
    })
}

impl ZonalFunction for TestFunction {
    fn value(&self, phi: f64) -> f64 {
        self.profile(phi).0
    }
    fn slope(&self, phi: f64) -> f64 {
        self.profile(phi).1
    }
    fn kinks(&self) -> Vec<f64> {
        let (lo, hi) = self.support();
        [lo, hi]
            .into_iter()
            .filter(|&k| k > 0.0 && k < PI)
            .collect()
    }
}

/// `phi_{p,R}(x)`.
pub fn phi_ball(p: &SpherePoint, outer: f64, x: &SpherePoint) -> Result<f64> {
    Ok(TestFunction::ball(p.clone(), outer)?.eval(x))
}

/// `phi-bar_{p,r}(x)`.
pub fn phi_complement(p: &SpherePoint, inner: f64, x: &SpherePoint) -> Result<f64> {
    Ok(TestFunction::complement(p.clone(), inner)?.eval(x))
}

/// `phi_{p,r,R}(x)`.
pub fn phi_annulus(p: &SpherePoint, inner: f64, outer: f64, x: &SpherePoint) -> Result<f64> {
    Ok(TestFunction::annulus(p.clone(), inner, outer)?.eval(x))
}

/// `|grad phi|_g` at `x`, which for a radial profile is `|F'(d(p, x))|`.
pub fn grad_norm(tf: &TestFunction, x: &SpherePoint) -> f64 {
    tf.profile(geodesic_distance(&tf.center, x)).1.abs()
}

/// `int_{S^n} |grad phi|^n dnu`, the conformally invariant gradient energy.
pub fn energy_n_norm(tf: &TestFunction) -> f64 {
    let n = tf.center.dim();
    let e = n as i32;
    zonal_integral(n, |psi| tf.profile(psi).1.abs().powi(e), &tf.kinks())
}

/// `int_{S^n} |grad phi|^2 dnu`.
pub fn energy_dirichlet(tf: &TestFunction) -> f64 {
    let n = tf.center.dim();
    zonal_integral(n, |psi| tf.profile(psi).1.powi(2), &tf.kinks())
}

/// `int_{-1}^{1} t^2 / (t^2 (1 + u) + 1 - u)^2 du`, evaluated by quadrature;
/// the gradient-energy estimate reduces the ball energy to this integral.
pub fn inner_gradient_integral(t: f64) -> f64 {
    let t2 = t * t;
    integrate_adaptive(
        |u| {
            let d = t2 * (1.0 + u) + 1.0 - u;
            t2 / (d * d)
        },
        -1.0,
        1.0,
        &[],
        INTEGRAL_TOL,
    )
}

/// The bound `4^n 2^{1-2n} Vol(S^{n-1}) = 2 Vol(S^{n-1})` on the ball energy.
pub fn ball_energy_bound(n: usize) -> f64 {
    2.0 * sphere_volume(n - 1)
}

/// Outcome of one numerical check of the test-function lemmas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub check: String,
    pub n: usize,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

fn check(name: &str, n: usize, value: f64, bound: f64, pass: bool) -> LemmaCheck {
    LemmaCheck {
        check: name.to_string(),
        n,
        value,
        bound,
        pass,
    }
}

/// Grid checks of the test-function lemmas on `S^n`:
///
/// * `f(R)` strictly increasing on a 1000-point grid of `(0, pi/2)`, with
///   `f(0+) = 3/5`;
/// * `phi_{p,R} >= 3/5` on `B(p, R)` and `phi_{p,r,R} >= 9/25` on `A(p; r, R)`;
/// * the inner gradient integral equals `1/2` for `t` in `{0.1, 1, 10}`;
/// * `int |grad phi_{p,R}|^n dnu <= 2 Vol(S^{n-1})` across an `R` grid.
pub fn lemma_checks(n: usize) -> Result<Vec<LemmaCheck>> {
    let p = SpherePoint::pole(n);
    let mut out = Vec::new();

    let grid: Vec<f64> = (1..1000).map(|i| FRAC_PI_2 * i as f64 / 1000.0).collect();
    let values = grid
        .iter()
        .map(|&r| boundary_profile_f(r))
        .collect::<Result<Vec<_>>>()?;
    let step = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    out.push(check("f_increasing_min_step", n, step, 0.0, step > 0.0));
    let f0 = boundary_profile_f(1e-7)?;
    out.push(check("f_at_zero", n, f0, 0.6, (f0 - 0.6).abs() <= 1e-6));

    let radii: Vec<f64> = (1..40).map(|i| FRAC_PI_2 * i as f64 / 40.0).collect();
    let mut ball_min = f64::INFINITY;
    for &outer in &radii {
        let tf = TestFunction::ball(p.clone(), outer)?;
        for i in 0..400 {
            ball_min = ball_min.min(tf.profile(outer * i as f64 / 400.0).0);
        }
    }
    out.push(check("ball_min_on_B", n, ball_min, 0.6, ball_min >= 0.6));

    let mut annulus_min = f64::INFINITY;
    for (a, &inner) in radii.iter().enumerate() {
        let outers = radii[a + 1..].iter().copied().chain([2.0, 2.8, PI]);
        for outer in outers {
            let tf = TestFunction::annulus(p.clone(), inner, outer)?;
            for i in 0..200 {
                annulus_min =
                    annulus_min.min(tf.profile(inner + (outer - inner) * i as f64 / 200.0).0);
            }
        }
    }
    out.push(check(
        "annulus_min_on_A",
        n,
        annulus_min,
        0.36,
        annulus_min >= 0.36,
    ));

    for t in [0.1, 1.0, 10.0] {
        let v = inner_gradient_integral(t);
        out.push(check(
            &format!("inner_gradient_integral_t{t}"),
            n,
            v,
            0.5,
            (v - 0.5).abs() <= 1e-10,
        ));
    }

    let bound = ball_energy_bound(n);
    let mut worst: f64 = 0.0;
    for &outer in &radii {
        worst = worst.max(energy_n_norm(&TestFunction::ball(p.clone(), outer)?));
    }
    out.push(check("ball_energy_max", n, worst, bound, worst <= bound));
    Ok(out)
}
