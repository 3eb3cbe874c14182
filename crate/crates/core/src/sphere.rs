//! Exact geometry of the round sphere `S^n`.
//!
//! Points are unit vectors of `R^{n+1}`. Stereographic projection from a
//! base point `p` lands in the hyperplane `L_p = {x : x.p = 0}`, written in a
//! fixed orthonormal frame of `L_p`; for `p = e_0` that frame is
//! `e_1, ..., e_n`, so coordinates agree with the usual `x' / (1 - x^0)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-12;

/// A point of `S^n`, stored as its `n + 1` Cartesian coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpherePoint(Vec<f64>);

impl SpherePoint {
    /// Wraps coordinates that already have unit norm (within `1e-12`).
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Arity {
                expected: 2,
                found: coords.len(),
            });
        }
        let norm = norm(&coords);
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnit(norm));
        }
        Ok(Self(coords))
    }

    /// Projects arbitrary nonzero coordinates onto the sphere.
    pub fn normalized(mut coords: Vec<f64>) -> Result<Self> {
        let norm = norm(&coords);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NotUnit(norm));
        }
        coords.iter_mut().for_each(|c| *c /= norm);
        Self::new(coords)
    }

    /// The `i`-th standard basis vector of `R^{n+1}`.
    pub fn basis(n: usize, i: usize) -> Self {
        let mut coords = vec![0.0; n + 1];
        coords[i] = 1.0;
        Self(coords)
    }

    /// The north pole `e_0`.
    pub fn pole(n: usize) -> Self {
        Self::basis(n, 0)
    }

    /// Sphere dimension `n` (one less than the number of coordinates).
    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &SpherePoint) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn antipode(&self) -> Self {
        Self(self.0.iter().map(|c| -c).collect())
    }

    fn check_same_dim(&self, other: &SpherePoint) -> Result<()> {
        if self.0.len() != other.0.len() {
            return Err(Error::Arity {
                expected: self.0.len(),
                found: other.0.len(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for SpherePoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SpherePoint> for Vec<f64> {
    fn from(p: SpherePoint) -> Vec<f64> {
        p.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `Vol(S^n) = 2 pi^{(n+1)/2} / Gamma((n+1)/2)`, by the two-step recurrence
/// `Vol(S^n) = 2 pi Vol(S^{n-2}) / (n - 1)`.
pub fn sphere_volume(n: usize) -> f64 {
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI * sphere_volume(n - 2) / (n as f64 - 1.0),
    }
}

/// Geodesic distance `arccos(x.y)`, evaluated as `2 atan2(|x-y|, |x+y|)`
/// so that it stays accurate near 0 and pi.
pub fn geodesic_distance(x: &SpherePoint, y: &SpherePoint) -> f64 {
    raw_distance(x.coords(), y.coords())
}

pub(crate) fn raw_distance(x: &[f64], y: &[f64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Orthonormal frame of `L_p`, obtained by Gram-Schmidt on the standard
/// basis with the coordinate most aligned with `p` left out.
pub fn tangent_frame(p: &SpherePoint) -> Vec<Vec<f64>> {
    let dim = p.coords().len();
    let skip = (0..dim)
        .max_by(|&a, &b| p.0[a].abs().total_cmp(&p.0[b].abs()))
        .unwrap_or(0);
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(dim - 1);
    for i in (0..dim).filter(|&i| i != skip) {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        // two passes keep the frame orthonormal to round-off
        for _ in 0..2 {
            let c = dot(&v, p.coords());
            v.iter_mut().zip(p.coords()).for_each(|(a, b)| *a -= c * b);
            for f in &frame {
                let c = dot(&v, f);
                v.iter_mut().zip(f).for_each(|(a, b)| *a -= c * b);
            }
        }
        let nv = norm(&v);
        v.iter_mut().for_each(|a| *a /= nv);
        frame.push(v);
    }
    frame
}

/// Stereographic projection `sigma_p(x)` from the base point `p`, in the
/// coordinates of [`tangent_frame`].
pub fn stereo_project(p: &SpherePoint, x: &SpherePoint) -> Result<Vec<f64>> {
    p.check_same_dim(x)?;
    let diff2: f64 = p.0.iter().zip(&x.0).map(|(a, b)| (a - b) * (a - b)).sum();
    if diff2.sqrt() < UNIT_TOL {
        return Err(Error::PoleSingularity);
    }
    // 1 - x.p = |x - p|^2 / 2 for unit vectors
    let denom = 0.5 * diff2;
    Ok(tangent_frame(p)
        .iter()
        .map(|f| dot(f, x.coords()) / denom)
        .collect())
}

/// Inverse stereographic projection `sigma_p^{-1}(y)`.
pub fn stereo_unproject(p: &SpherePoint, y: &[f64]) -> Result<SpherePoint> {
    if y.len() != p.dim() {
        return Err(Error::Arity {
            expected: p.dim(),
            found: y.len(),
        });
    }
    let s = dot(y, y);
    let mut coords: Vec<f64> = p.0.iter().map(|c| c * (s - 1.0) / (s + 1.0)).collect();
    for (f, yi) in tangent_frame(p).iter().zip(y) {
        let scale = 2.0 * yi / (s + 1.0);
        coords
            .iter_mut()
            .zip(f)
            .for_each(|(c, fi)| *c += scale * fi);
    }
    SpherePoint::normalized(coords)
}

/// The conformal dilation `theta_{p,t} = sigma_p^{-1} . delta_t . sigma_p`,
/// evaluated through its closed form, which is regular at both `p` and `-p`.
pub fn conformal_dilation(p: &SpherePoint, t: f64, x: &SpherePoint) -> Result<SpherePoint> {
    p.check_same_dim(x)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::OutOfRange(format!("dilation parameter t = {t}")));
    }
    let x0 = x.dot(p);
    let t2 = t * t;
    let denom = t2 * (1.0 + x0) + (1.0 - x0);
    let along = (t2 * (1.0 + x0) - (1.0 - x0)) / denom;
    let across = 2.0 * t / denom;
    let coords =
        p.0.iter()
            .zip(&x.0)
            .map(|(pi, xi)| along * pi + across * (xi - x0 * pi))
            .collect();
    SpherePoint::normalized(coords)
}

/// `omega^{4/(n-2)}` for the pullback `theta_{p,t}^* g = omega^{4/(n-2)} g`,
/// as a function of `u = x.p`: `4 t^2 / ((1 - u) + t^2 (1 + u))^2`.
pub fn dilation_weight(t: f64, u: f64) -> f64 {
    let d = (1.0 - u) + t * t * (1.0 + u);
    4.0 * t * t / (d * d)
}

/// The positive conformal factor `omega` of the dilation `theta_{p,t}` at `x`.
pub fn dilation_conformal_factor(p: &SpherePoint, t: f64, x: &SpherePoint) -> Result<f64> {
    p.check_same_dim(x)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::OutOfRange(format!("dilation parameter t = {t}")));
    }
    let n = p.dim() as f64;
    Ok(dilation_weight(t, x.dot(p)).powf((n - 2.0) / 4.0))
}

/// Hyperspherical coordinates `(phi_1, ..., phi_n)` to a point of `S^n`,
/// with `x^0 = cos phi_1`.
pub fn spherical_to_cartesian(angles: &[f64]) -> Result<SpherePoint> {
    let n = angles.len();
    if n == 0 {
        return Err(Error::Arity {
            expected: 1,
            found: 0,
        });
    }
    let mut coords = Vec::with_capacity(n + 1);
    let mut sin_prod = 1.0;
    for &a in angles {
        coords.push(sin_prod * a.cos());
        sin_prod *= a.sin();
    }
    coords.push(sin_prod);
    SpherePoint::normalized(coords)
}

/// Point at polar angle `angle` from `pole`, in the direction of the unit
/// tangent vector `dir` (given in the coordinates of [`tangent_frame`]).
pub fn point_at(pole: &SpherePoint, frame: &[Vec<f64>], angle: f64, dir: &[f64]) -> SpherePoint {
    let (s, c) = angle.sin_cos();
    let mut coords: Vec<f64> = pole.0.iter().map(|p| c * p).collect();
    for (f, d) in frame.iter().zip(dir) {
        coords
            .iter_mut()
            .zip(f)
            .for_each(|(x, fi)| *x += s * d * fi);
    }
    SpherePoint::normalized(coords).expect("point_at: nonzero combination")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut impl Rng, n: usize) -> SpherePoint {
        loop {
            let v: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = norm(&v);
            if r > 0.1 && r < 1.0 {
                return SpherePoint::normalized(v).unwrap();
            }
        }
    }

    fn pt(c: &[f64]) -> SpherePoint {
        SpherePoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn rejects_non_unit() {
        assert!(matches!(
            SpherePoint::new(vec![1.0, 1.0, 0.0, 0.0]),
            Err(Error::NotUnit(_))
        ));
    }

    #[test]
    fn volumes() {
        assert_abs_diff_eq!(sphere_volume(2), 4.0 * PI, epsilon = 1e-14);
        assert_abs_diff_eq!(sphere_volume(3), 2.0 * PI * PI, epsilon = 1e-13);
        assert_abs_diff_eq!(sphere_volume(4), 8.0 * PI * PI / 3.0, epsilon = 1e-13);
    }

    #[test]
    fn distance_examples() {
        let p = SpherePoint::pole(3);
        assert_eq!(geodesic_distance(&p, &p), 0.0);
        assert_abs_diff_eq!(geodesic_distance(&p, &p.antipode()), PI, epsilon = 1e-15);
        let e1 = SpherePoint::basis(3, 1);
        assert_abs_diff_eq!(geodesic_distance(&p, &e1), PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn distance_is_a_metric_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let (a, b, c) = (
                random_point(&mut rng, 3),
                random_point(&mut rng, 3),
                random_point(&mut rng, 3),
            );
            let ab = geodesic_distance(&a, &b);
            assert_abs_diff_eq!(ab, geodesic_distance(&b, &a), epsilon = 1e-15);
            assert_abs_diff_eq!(ab, a.dot(&b).clamp(-1.0, 1.0).acos(), epsilon = 1e-7);
            assert!(ab <= geodesic_distance(&a, &c) + geodesic_distance(&c, &b) + 1e-12);
        }
    }

    #[test]
    fn stereo_examples() {
        let p = SpherePoint::pole(3);
        assert_eq!(stereo_project(&p, &p.antipode()).unwrap(), vec![0.0; 3]);
        let y = stereo_project(&p, &SpherePoint::basis(3, 1)).unwrap();
        assert_abs_diff_eq!(y.as_slice(), [1.0, 0.0, 0.0].as_slice(), epsilon = 1e-15);
        let y = stereo_project(&p, &pt(&[0.6, 0.8, 0.0, 0.0])).unwrap();
        assert_abs_diff_eq!(y.as_slice(), [2.0, 0.0, 0.0].as_slice(), epsilon = 1e-14);
        assert!(matches!(
            stereo_project(&p, &p),
            Err(Error::PoleSingularity)
        ));
    }

    #[test]
    fn unproject_examples() {
        let p = SpherePoint::pole(3);
        let back = |y: &[f64]| stereo_unproject(&p, y).unwrap();
        assert_abs_diff_eq!(
            back(&[0.0; 3]).coords(),
            p.antipode().coords(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            back(&[1.0, 0.0, 0.0]).coords(),
            [0.0, 1.0, 0.0, 0.0].as_slice(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            back(&[2.0, 0.0, 0.0]).coords(),
            [0.6, 0.8, 0.0, 0.0].as_slice(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn stereo_round_trip_general_base_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3, 4] {
            let p = random_point(&mut rng, n);
            for _ in 0..1000 {
                let x = random_point(&mut rng, n);
                let y = stereo_project(&p, &x).unwrap();
                let z = stereo_unproject(&p, &y).unwrap();
                for (a, b) in x.coords().iter().zip(z.coords()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dilation_examples() {
        let p = SpherePoint::pole(3);
        let e1 = SpherePoint::basis(3, 1);
        let x = conformal_dilation(&p, 2.0, &e1).unwrap();
        assert_abs_diff_eq!(x.coords(), [0.6, 0.8, 0.0, 0.0].as_slice(), epsilon = 1e-15);
        let x = conformal_dilation(&p, 1e9, &e1).unwrap();
        assert_abs_diff_eq!(x.coords(), p.coords(), epsilon = 1e-8);
        let y = conformal_dilation(&p, 1.0, &x).unwrap();
        assert_abs_diff_eq!(y.coords(), x.coords(), epsilon = 1e-15);
        // fixes both poles
        assert_abs_diff_eq!(
            conformal_dilation(&p, 3.0, &p).unwrap().coords(),
            p.coords()
        );
        let q = p.antipode();
        assert_abs_diff_eq!(
            conformal_dilation(&p, 3.0, &q).unwrap().coords(),
            q.coords()
        );
        assert!(conformal_dilation(&p, 0.0, &e1).is_err());
    }

    #[test]
    fn dilation_matches_stereographic_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_point(&mut rng, 3);
        for _ in 0..200 {
            let x = random_point(&mut rng, 3);
            let t = rng.gen_range(0.2..5.0);
            let y: Vec<f64> = stereo_project(&p, &x)
                .unwrap()
                .iter()
                .map(|v| t * v)
                .collect();
            let via = stereo_unproject(&p, &y).unwrap();
            let closed = conformal_dilation(&p, t, &x).unwrap();
            for (a, b) in via.coords().iter().zip(closed.coords()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dilation_group_law_and_level_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_point(&mut rng, 4);
        for _ in 0..500 {
            let x = random_point(&mut rng, 4);
            let (s, t) = (rng.gen_range(0.1..4.0), rng.gen_range(0.1..4.0));
            let twice = conformal_dilation(&p, t, &conformal_dilation(&p, s, &x).unwrap()).unwrap();
            let once = conformal_dilation(&p, t * s, &x).unwrap();
            for (a, b) in twice.coords().iter().zip(once.coords()) {
                assert!((a - b).abs() < 1e-12);
            }
            // image distance is a function of the source distance alone
            let d = geodesic_distance(&p, &x);
            let partner = point_at(&p, &tangent_frame(&p), d, &{
                let mut v = vec![0.0; 4];
                v[0] = 1.0;
                v
            });
            let lhs = geodesic_distance(&p, &conformal_dilation(&p, t, &x).unwrap());
            let rhs = geodesic_distance(&p, &conformal_dilation(&p, t, &partner).unwrap());
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn dilation_factor_examples() {
        let p = SpherePoint::pole(3);
        let q = p.antipode();
        let e1 = SpherePoint::basis(3, 1);
        assert_abs_diff_eq!(dilation_conformal_factor(&p, 1.0, &e1).unwrap(), 1.0);
        let w = dilation_conformal_factor(&p, 3.0, &q).unwrap();
        assert_abs_diff_eq!(w.powi(4), 9.0, epsilon = 1e-13);
    }

    #[test]
    fn dilation_factor_is_metric_stretch() {
        // |d theta| along a meridian equals omega^{2/(n-2)}, checked by finite differences
        let p = SpherePoint::pole(3);
        let frame = tangent_frame(&p);
        let dir = [1.0, 0.0, 0.0];
        let t = 2.5;
        for &a in &[0.3, 1.0, 2.0, 2.8] {
            let h = 1e-6;
            let x1 = point_at(&p, &frame, a - h, &dir);
            let x2 = point_at(&p, &frame, a + h, &dir);
            let stretch = geodesic_distance(
                &conformal_dilation(&p, t, &x1).unwrap(),
                &conformal_dilation(&p, t, &x2).unwrap(),
            ) / (2.0 * h);
            let omega = dilation_conformal_factor(&p, t, &point_at(&p, &frame, a, &dir)).unwrap();
            assert!(
                (stretch - omega.powf(2.0)).abs() < 1e-6,
                "{stretch} vs {}",
                omega * omega
            );
        }
    }

    #[test]
    fn spherical_coordinates() {
        assert_abs_diff_eq!(
            spherical_to_cartesian(&[0.0; 3]).unwrap().coords(),
            SpherePoint::pole(3).coords()
        );
        assert_abs_diff_eq!(
            spherical_to_cartesian(&[PI, 0.0, 0.0]).unwrap().coords(),
            [-1.0, 0.0, 0.0, 0.0].as_slice(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            spherical_to_cartesian(&[PI / 2.0, 0.0, 0.0])
                .unwrap()
                .coords(),
            [0.0, 1.0, 0.0, 0.0].as_slice(),
            epsilon = 1e-15
        );
        let x = spherical_to_cartesian(&[0.7, 1.1, 4.0]).unwrap();
        assert_abs_diff_eq!(x.coords()[0], 0.7f64.cos(), epsilon = 1e-15);
    }
}
