//! Conformal factors `mu` (with `g~ = mu^{4/(n-2)} g`), their measures, and
//! Rayleigh quotients of the conformal Laplacian of `g~`.
//!
//! Every `g~` quantity is pushed to the round metric through the conformal
//! law: the `g~`-energy of `f` equals the round energy of `mu f`, so `R_{g~}`
//! never has to be formed. The one exception is
//! [`conformal_energy_tilde_side`], which builds the `g~` side on purpose so
//! the law itself can be checked.

use serde::{Deserialize, Serialize};
use std::cell::Cell;
use std::f64::consts::PI;
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::quadrature::{build_quadrature, zonal_integral, zonal_integral_checked};
use crate::sphere::SpherePoint;

/// `c_n = (n-2) / (4(n-1))` and the round scalar curvature `R_g = n(n-1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureConstants {
    pub n: usize,
    pub c_n: f64,
    pub scalar_curvature: f64,
}

impl CurvatureConstants {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Dimension(n));
        }
        let nf = n as f64;
        Ok(Self {
            n,
            c_n: (nf - 2.0) / (4.0 * (nf - 1.0)),
            scalar_curvature: nf * (nf - 1.0),
        })
    }

    /// `c_n R_g = n(n-2)/4`, the potential term of the round conformal Laplacian.
    pub fn potential(&self) -> f64 {
        let nf = self.n as f64;
        nf * (nf - 2.0) / 4.0
    }

    /// Exponent `4/(n-2)` of the metric and of the measure `m`.
    pub fn metric_exponent(&self) -> f64 {
        4.0 / (self.n as f64 - 2.0)
    }

    /// Exponent `2n/(n-2)` of the volume form of `g~`.
    pub fn volume_exponent(&self) -> f64 {
        2.0 * self.n as f64 / (self.n as f64 - 2.0)
    }
}

/// One dilation pullback factor, centred at the pole (or its antipode).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    pub t: f64,
    #[serde(default)]
    pub antipodal: bool,
}

/// Zonal profile of a conformal factor, as a function of `u = x.pole`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// Product of dilation factors `omega_t(+-u)`.
    Bubbles {
        bubbles: Vec<Bubble>,
    },
    /// `sum_i coeffs[i] u^i`.
    Polynomial {
        coeffs: Vec<f64>,
    },
}

pub const DEFAULT_FLOOR: f64 = 1e-8;
const MEASURE_ORDER: usize = 256;
const CHECK_ORDER: usize = 256;
const CHECK_ANGLES: usize = 2001;

/// A positive zonal conformal factor on `S^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalFactor {
    n: usize,
    pole: SpherePoint,
    profile: Profile,
    scale: f64,
    floor: f64,
}

impl ConformalFactor {
    pub fn new(n: usize, profile: Profile) -> Result<Self> {
        Self::build(n, SpherePoint::pole(n), profile, 1.0, DEFAULT_FLOOR)
    }

    fn build(
        n: usize,
        pole: SpherePoint,
        profile: Profile,
        scale: f64,
        floor: f64,
    ) -> Result<Self> {
        CurvatureConstants::new(n)?;
        if pole.dim() != n {
            return Err(Error::Arity {
                expected: n + 1,
                found: pole.coords().len(),
            });
        }
        match &profile {
            Profile::Bubbles { bubbles }
                if bubbles.iter().any(|b| !(b.t > 0.0 && b.t.is_finite())) =>
            {
                return Err(Error::OutOfRange(
                    "bubble parameter t must be positive".into(),
                ));
            }
            Profile::Polynomial { coeffs } if coeffs.is_empty() => {
                return Err(Error::Config(
                    "polynomial profile needs coefficients".into(),
                ));
            }
            _ => {}
        }
        if !(floor > 0.0) || !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::OutOfRange(format!("scale {scale} / floor {floor}")));
        }
        let factor = Self {
            n,
            pole,
            profile,
            scale,
            floor,
        };
        let min = factor
            .check_nodes()
            .fold(f64::INFINITY, |m, u| m.min(factor.value(u)));
        if !(min >= floor) {
            return Err(Error::FactorFloor { floor, min });
        }
        Ok(factor)
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(n, Profile::Constant { value })
    }

    /// The pullback factor of the dilation `theta_{pole,t}`.
    pub fn dilation(n: usize, t: f64) -> Result<Self> {
        Self::bubbles(
            n,
            vec![Bubble {
                t,
                antipodal: false,
            }],
        )
    }

    pub fn bubbles(n: usize, bubbles: Vec<Bubble>) -> Result<Self> {
        Self::new(n, Profile::Bubbles { bubbles })
    }

    /// Product of dilation factors concentrating at both poles.
    pub fn two_bubble(n: usize, t: f64) -> Result<Self> {
        Self::bubbles(
            n,
            vec![
                Bubble {
                    t,
                    antipodal: false,
                },
                Bubble { t, antipodal: true },
            ],
        )
    }

    pub fn polynomial(n: usize, coeffs: Vec<f64>) -> Result<Self> {
        Self::new(n, Profile::Polynomial { coeffs })
    }

    pub fn with_pole(self, pole: SpherePoint) -> Result<Self> {
        Self::build(self.n, pole, self.profile, self.scale, self.floor)
    }

    pub fn with_floor(self, floor: f64) -> Result<Self> {
        Self::build(self.n, self.pole, self.profile, self.scale, floor)
    }

    /// `c mu`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::build(
            self.n,
            self.pole.clone(),
            self.profile.clone(),
            self.scale * c,
            self.floor,
        )
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn pole(&self) -> &SpherePoint {
        &self.pole
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn constants(&self) -> CurvatureConstants {
        CurvatureConstants::new(self.n).expect("validated at construction")
    }

    pub fn is_constant(&self) -> bool {
        match &self.profile {
            Profile::Constant { .. } => true,
            Profile::Bubbles { bubbles } => bubbles.iter().all(|b| b.t == 1.0),
            Profile::Polynomial { coeffs } => coeffs.iter().skip(1).all(|&c| c == 0.0),
        }
    }

    /// Degree in `u` when the profile is a polynomial.
    pub fn polynomial_degree(&self) -> Option<usize> {
        match &self.profile {
            Profile::Constant { .. } => Some(0),
            Profile::Bubbles { bubbles } if bubbles.iter().all(|b| b.t == 1.0) => Some(0),
            Profile::Bubbles { .. } => None,
            Profile::Polynomial { coeffs } => Some(coeffs.len() - 1),
        }
    }

    /// `mu` as a function of `u = x.pole`.
    pub fn value(&self, u: f64) -> f64 {
        self.derivatives(u).0
    }

    /// `(mu, d mu/du, d^2 mu/du^2)`.
    pub fn derivatives(&self, u: f64) -> (f64, f64, f64) {
        let (v, d1, d2) = match &self.profile {
            Profile::Constant { value } => (*value, 0.0, 0.0),
            Profile::Polynomial { coeffs } => {
                let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
                for &c in coeffs.iter().rev() {
                    d2 = d2 * u + 2.0 * d1;
                    d1 = d1 * u + v;
                    v = v * u + c;
                }
                (v, d1, d2)
            }
            Profile::Bubbles { bubbles } => {
                // log-derivative form of a product
                let e = (self.n as f64 - 2.0) / 2.0;
                let (mut logv, mut g, mut h) = (0.0, 0.0, 0.0);
                for b in bubbles {
                    let sign = if b.antipodal { -1.0 } else { 1.0 };
                    let x = sign * u;
                    let t2 = b.t * b.t;
                    let d = (1.0 + t2) + (t2 - 1.0) * x;
                    logv += e * (2.0 * b.t / d).ln();
                    let lg = -e * (t2 - 1.0) / d * sign;
                    g += lg;
                    // (omega''/omega) - (omega'/omega)^2 = e (t^2-1)^2 / d^2
                    h += e * (t2 - 1.0) * (t2 - 1.0) / (d * d);
                }
                let v = logv.exp();
                (v, v * g, v * (g * g + h))
            }
        };
        (self.scale * v, self.scale * d1, self.scale * d2)
    }

    /// `(mu, d mu / d phi)` at polar angle `phi` from the pole.
    pub fn at_angle(&self, phi: f64) -> (f64, f64) {
        let (s, c) = phi.sin_cos();
        let (v, d1, _) = self.derivatives(c);
        (v, -s * d1)
    }

    /// Density of `m = mu^{4/(n-2)} dnu` at `u`.
    pub fn measure_density(&self, u: f64) -> f64 {
        self.value(u).powf(self.constants().metric_exponent())
    }

    /// Density of `nu~ = mu^{2n/(n-2)} dnu` at `u`.
    pub fn volume_density(&self, u: f64) -> f64 {
        self.value(u).powf(self.constants().volume_exponent())
    }

    /// Round Laplacian of the zonal function `mu`: `(1-u^2) mu'' - n u mu'`.
    pub fn laplacian(&self, u: f64) -> f64 {
        let (_, d1, d2) = self.derivatives(u);
        (1.0 - u * u) * d2 - self.n as f64 * u * d1
    }

    fn check_nodes(&self) -> impl Iterator<Item = f64> {
        let grid = build_quadrature(self.n, CHECK_ORDER).expect("n >= 3");
        let angles = (0..CHECK_ANGLES).map(|i| (PI * i as f64 / (CHECK_ANGLES - 1) as f64).cos());
        grid.nodes.into_iter().chain(angles)
    }

    /// `(max mu - min mu) / max mu` over the validation grid.
    pub fn relative_oscillation(&self) -> f64 {
        let (lo, hi) = self
            .check_nodes()
            .map(|u| self.value(u))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        (hi - lo) / hi
    }

    /// Short identifier used in result tables.
    pub fn label(&self) -> String {
        let body = match &self.profile {
            Profile::Constant { value } => format!("const({})", value),
            Profile::Bubbles { bubbles } => {
                let parts: Vec<String> = bubbles
                    .iter()
                    .map(|b| format!("{}{}", if b.antipodal { "-" } else { "+" }, b.t))
                    .collect();
                format!("bubbles({})", parts.join(" "))
            }
            Profile::Polynomial { coeffs } => {
                let parts: Vec<String> = coeffs.iter().map(|c| format!("{c:.6}")).collect();
                format!("poly({})", parts.join(" "))
            }
        };
        if self.scale == 1.0 {
            body
        } else {
            format!("{}*{}", self.scale, body)
        }
    }
}

impl fmt::Display for ConformalFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} on S^{}", self.label(), self.n)
    }
}

/// A Lipschitz function of the polar angle `phi` from a fixed centre.
pub trait ZonalFunction {
    fn value(&self, phi: f64) -> f64;
    /// Derivative in `phi` (one-sided at kinks).
    fn slope(&self, phi: f64) -> f64;
    /// Angles where the profile is not smooth.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// A polynomial in `u = cos phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonalPolynomial(pub Vec<f64>);

impl ZonalFunction for ZonalPolynomial {
    fn value(&self, phi: f64) -> f64 {
        let u = phi.cos();
        self.0.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    fn slope(&self, phi: f64) -> f64 {
        let (s, u) = phi.sin_cos();
        let du = self
            .0
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, &c)| acc * u + i as f64 * c);
        -s * du
    }
}

/// `c f`.
pub struct Scaled<F>(pub f64, pub F);

impl<F: ZonalFunction> ZonalFunction for Scaled<F> {
    fn value(&self, phi: f64) -> f64 {
        self.0 * self.1.value(phi)
    }
    fn slope(&self, phi: f64) -> f64 {
        self.0 * self.1.slope(phi)
    }
    fn kinks(&self) -> Vec<f64> {
        self.1.kinks()
    }
}

/// `f / mu`, with `f` zonal about the factor's pole.
pub struct OverFactor<'a, F> {
    pub f: F,
    pub factor: &'a ConformalFactor,
}

impl<F: ZonalFunction> ZonalFunction for OverFactor<'_, F> {
    fn value(&self, phi: f64) -> f64 {
        self.f.value(phi) / self.factor.at_angle(phi).0
    }
    fn slope(&self, phi: f64) -> f64 {
        let (m, dm) = self.factor.at_angle(phi);
        (self.f.slope(phi) * m - self.f.value(phi) * dm) / (m * m)
    }
    fn kinks(&self) -> Vec<f64> {
        self.f.kinks()
    }
}

/// The constant function `1`.
pub struct One;

impl ZonalFunction for One {
    fn value(&self, _: f64) -> f64 {
        1.0
    }
    fn slope(&self, _: f64) -> f64 {
        0.0
    }
}

/// `1 / mu`, the trial function of the extremality argument for `lambda_0`.
pub fn reciprocal(factor: &ConformalFactor) -> OverFactor<'_, One> {
    OverFactor { f: One, factor }
}

const LIPSCHITZ_LIMIT: f64 = 1e12;

fn guarded<'a, F: ZonalFunction>(
    f: &'a F,
    integrand: impl Fn(f64, f64, f64) -> f64 + 'a,
) -> (impl Fn(f64) -> f64 + 'a, Rc<Cell<bool>>) {
    let bad = Rc::new(Cell::new(false));
    let flag = bad.clone();
    (
        move |phi: f64| {
            let (v, d) = (f.value(phi), f.slope(phi));
            if !(v.is_finite() && d.is_finite() && d.abs() < LIPSCHITZ_LIMIT) {
                flag.set(true);
                return 0.0;
            }
            integrand(phi, v, d)
        },
        bad,
    )
}

fn checked_energy(e: Option<f64>, bad: bool) -> Result<f64> {
    match e {
        Some(e) if !bad => Ok(e),
        Some(_) => Err(Error::InvalidTestFunction(
            "profile or derivative unbounded at a sampled node".into(),
        )),
        None => Err(Error::InvalidTestFunction(
            "energy integral does not converge".into(),
        )),
    }
}

/// `int_{S^n} |grad(mu f)|^2 + c_n R_g (mu f)^2 dnu`, which by the conformal
/// law equals the `g~`-energy of `f`. Angles of `f` are measured from the
/// factor's pole.
pub fn conformal_energy<F: ZonalFunction>(f: &F, factor: &ConformalFactor) -> Result<f64> {
    let pot = factor.constants().potential();
    let (integrand, bad) = guarded(f, |phi, v, d| {
        let (m, dm) = factor.at_angle(phi);
        let g = dm * v + m * d;
        let w = m * v;
        g * g + pot * w * w
    });
    let e = zonal_integral_checked(factor.dim(), integrand, &f.kinks());
    checked_energy(e, bad.get())
}

/// The same energy assembled on the `g~` side:
/// `int |grad~ f|^2_{g~} + c_n R_{g~} f^2 dnu~` with
/// `|grad~ f|^2 = mu^{-4/(n-2)} |grad f|^2`,
/// `c_n R_{g~} = mu^{-(n+2)/(n-2)} (-Delta_g + c_n R_g) mu` and
/// `dnu~ = mu^{2n/(n-2)} dnu`.
pub fn conformal_energy_tilde_side<F: ZonalFunction>(
    f: &F,
    factor: &ConformalFactor,
) -> Result<f64> {
    let c = factor.constants();
    let nf = factor.dim() as f64;
    let (integrand, bad) = guarded(f, |phi, v, d| {
        let u = phi.cos();
        let mu = factor.value(u);
        let grad2 = mu.powf(-c.metric_exponent()) * d * d;
        let box_mu = -factor.laplacian(u) + c.potential() * mu;
        let curvature = mu.powf(-(nf + 2.0) / (nf - 2.0)) * box_mu;
        (grad2 + curvature * v * v) * mu.powf(c.volume_exponent())
    });
    let e = zonal_integral_checked(factor.dim(), integrand, &f.kinks());
    checked_energy(e, bad.get())
}

/// `int_{S^n} f^2 dnu~ = int f^2 mu^{2n/(n-2)} dnu`.
pub fn tilde_norm_squared<F: ZonalFunction>(f: &F, factor: &ConformalFactor) -> f64 {
    zonal_integral(
        factor.dim(),
        |phi| {
            let v = f.value(phi);
            v * v * factor.volume_density(phi.cos())
        },
        &f.kinks(),
    )
}

/// `int_{S^n} phi^2 dm = int phi^2 mu^{4/(n-2)} dnu`; equals
/// [`tilde_norm_squared`] of `phi / mu`.
pub fn m_norm_squared<F: ZonalFunction>(phi: &F, factor: &ConformalFactor) -> f64 {
    zonal_integral(
        factor.dim(),
        |a| {
            let v = phi.value(a);
            v * v * factor.measure_density(a.cos())
        },
        &phi.kinks(),
    )
}

/// Rayleigh quotient of `f` for the conformal Laplacian of `g~`.
pub fn rayleigh_quotient<F: ZonalFunction>(f: &F, factor: &ConformalFactor) -> Result<f64> {
    let denom = tilde_norm_squared(f, factor);
    if !(denom > 0.0) {
        return Err(Error::DegenerateTestFunction);
    }
    Ok(conformal_energy(f, factor)? / denom)
}

/// `m(S^n) = int mu^{4/(n-2)} dnu`.
pub fn measure_m_total(factor: &ConformalFactor) -> f64 {
    let grid = build_quadrature(factor.dim(), MEASURE_ORDER).expect("n >= 3");
    grid.integrate(|u| factor.measure_density(u))
}

/// `Vol(S^n, g~) = int mu^{2n/(n-2)} dnu`.
pub fn volume_total(factor: &ConformalFactor) -> f64 {
    let grid = build_quadrature(factor.dim(), MEASURE_ORDER).expect("n >= 3");
    grid.integrate(|u| factor.volume_density(u))
}
