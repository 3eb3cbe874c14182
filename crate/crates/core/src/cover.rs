//! Annuli decompositions of finite metric measure spaces on `S^n`.
//!
//! [`decompose`] searches for `2k` annuli `A_j = A(p_j; r_j, R_j)` whose
//! doublings `2A_j = A(p_j; r_j/2, 2R_j)` are pairwise disjoint and which
//! each carry `m(A_j) >= c m(X) / k`. The search is heuristic; what it
//! returns is always re-checked by [`verify_family`], which only looks at
//! the raw weights and coordinates.
//!
//! Disjointness is certified for the continuous annuli on the sphere, not
//! only for the sample points: for centres at distance `delta`, the pairs
//! `(d(x,p), d(x,q))` fill exactly the rectangle
//! `|s - t| <= delta <= s + t <= 2 pi - delta`, so two doubled annuli are
//! disjoint iff their radius boxes are separated along `s + t` or `t - s`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::conformal::ConformalFactor;
use crate::error::{Error, Result};
use crate::quadrature::build_quadrature;
use crate::sphere::{raw_distance, sphere_volume, tangent_frame, SpherePoint};
use crate::testfn::Annulus;

/// Slack required by the continuous disjointness test.
pub const DISJOINT_MARGIN: f64 = 1e-9;
/// Offset added to the last included distance when closing an annulus.
const RADIUS_PAD: f64 = 1e-9;
const MAX_CENTERS: usize = 600;
const DENSITY_CENTERS: usize = 100;
const INNER_LEVELS: usize = 24;
const C_START: f64 = 0.5;
const C_STEP: f64 = 0.7;
const BISECTIONS: usize = 6;
const GREEDY_WINDOW: usize = 48;
const C_MIN: f64 = 1e-4;
const RESTARTS: usize = 10;
const TRIANGLE_TOL: f64 = 1e-12;

/// Points on `S^n` with two weightings: `m` (the measure being decomposed)
/// and `nu` (round volume).
#[derive(Debug, Clone)]
pub struct MetricMeasureSpace {
    n: usize,
    coords: Vec<f64>,
    m_weights: Vec<f64>,
    nu_weights: Vec<f64>,
}

impl MetricMeasureSpace {
    pub fn new(
        points: Vec<SpherePoint>,
        m_weights: Vec<f64>,
        nu_weights: Vec<f64>,
    ) -> Result<Self> {
        let n = points
            .first()
            .map(|p| p.dim())
            .ok_or_else(|| Error::Config("empty point set".into()))?;
        if m_weights.len() != points.len() || nu_weights.len() != points.len() {
            return Err(Error::Arity {
                expected: points.len(),
                found: m_weights.len().min(nu_weights.len()),
            });
        }
        let mut coords = Vec::with_capacity(points.len() * (n + 1));
        for p in &points {
            if p.dim() != n {
                return Err(Error::Arity {
                    expected: n + 1,
                    found: p.coords().len(),
                });
            }
            coords.extend_from_slice(p.coords());
        }
        let space = Self {
            n,
            coords,
            m_weights,
            nu_weights,
        };
        space.validate()?;
        Ok(space)
    }

    fn validate(&self) -> Result<()> {
        let finite_nonneg = |w: &f64| w.is_finite() && *w >= 0.0;
        if !self.m_weights.iter().all(finite_nonneg) || !self.nu_weights.iter().all(finite_nonneg) {
            return Err(Error::Config(
                "weights must be finite and non-negative".into(),
            ));
        }
        if !(self.m_total() > 0.0) {
            return Err(Error::Config("total m-mass must be positive".into()));
        }
        Ok(())
    }

    /// Discretisation of `m = mu^{4/(n-2)} dnu`: Gauss nodes in `u` about the
    /// factor's pole, each ring carrying `directions` points on the
    /// `S^{n-1}` of directions (a Fibonacci lattice for `n = 3`, Gaussian
    /// samples otherwise), randomly rotated per ring.
    pub fn from_factor(
        factor: &ConformalFactor,
        rings: usize,
        directions: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = factor.dim();
        if rings < 2 || directions == 0 {
            return Err(Error::Config(format!(
                "cloud needs rings >= 2 and directions >= 1, got {rings} x {directions}"
            )));
        }
        let grid = build_quadrature(n, rings)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = direction_set(n, directions, &mut rng);
        let pole = factor.pole();
        let frame = tangent_frame(pole);
        let mut coords = Vec::with_capacity(rings * directions * (n + 1));
        let mut m_weights = Vec::with_capacity(rings * directions);
        let mut nu_weights = Vec::with_capacity(rings * directions);
        for (&u, &w) in grid.nodes.iter().zip(&grid.weights) {
            let rot = random_rotation(n, &mut rng);
            let s = (1.0 - u * u).max(0.0).sqrt();
            let nu = w * grid.angular / directions as f64;
            let m = nu * factor.measure_density(u);
            for dir in &base {
                let rotated = &rot * nalgebra::DVector::from_column_slice(dir);
                let mut x: Vec<f64> = pole.coords().iter().map(|c| c * u).collect();
                for (e, r) in frame.iter().zip(rotated.iter()) {
                    for (xi, ei) in x.iter_mut().zip(e) {
                        *xi += s * r * ei;
                    }
                }
                let p = SpherePoint::normalized(x)?;
                coords.extend_from_slice(p.coords());
                m_weights.push(m);
                nu_weights.push(nu);
            }
        }
        let space = Self {
            n,
            coords,
            m_weights,
            nu_weights,
        };
        space.validate()?;
        Ok(space)
    }

    /// `count` independent uniform points with equal weights summing to
    /// `Vol(S^n)` for both measures.
    pub fn uniform_sample(n: usize, count: usize, seed: u64) -> Result<Self> {
        if n < 3 {
            return Err(Error::Dimension(n));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..count)
            .map(|_| gaussian_point(n + 1, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let w = sphere_volume(n) / count as f64;
        Self::new(points, vec![w; count], vec![w; count])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.m_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m_weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * (self.n + 1)..(i + 1) * (self.n + 1)]
    }

    pub fn sphere_point(&self, i: usize) -> SpherePoint {
        SpherePoint::normalized(self.point(i).to_vec()).expect("stored points are unit")
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            raw_distance(self.point(i), self.point(j))
        }
    }

    pub fn m_weights(&self) -> &[f64] {
        &self.m_weights
    }

    pub fn nu_weights(&self) -> &[f64] {
        &self.nu_weights
    }

    pub fn m_total(&self) -> f64 {
        self.m_weights.iter().sum()
    }

    pub fn nu_total(&self) -> f64 {
        self.nu_weights.iter().sum()
    }

    /// Spot-checks symmetry, the zero diagonal and the triangle inequality on
    /// `samples` random triples.
    pub fn check_metric(&self, samples: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = self.len();
        for _ in 0..samples {
            let (a, b, c) = (
                rng.gen_range(0..len),
                rng.gen_range(0..len),
                rng.gen_range(0..len),
            );
            let (ab, bc, ac) = (
                self.distance(a, b),
                self.distance(b, c),
                self.distance(a, c),
            );
            if self.distance(a, a) != 0.0 || ab != self.distance(b, a) {
                return Err(Error::Invariant(format!(
                    "distance not symmetric at ({a}, {b})"
                )));
            }
            if ac > ab + bc + TRIANGLE_TOL {
                return Err(Error::Invariant(format!(
                    "triangle inequality fails at ({a}, {b}, {c})"
                )));
            }
        }
        Ok(())
    }

    /// Non-atomicity proxy: every single m-weight is at most `m(X)/(8k)`.
    pub fn check_non_atomic(&self, k: usize) -> Result<()> {
        let max_atom = self.m_weights.iter().copied().fold(0.0, f64::max);
        let limit = self.m_total() / (8.0 * k as f64);
        if max_atom > limit {
            return Err(Error::MeasureConcentrated { max_atom, limit });
        }
        Ok(())
    }

    /// Indices sorted by distance from point `c`, with the distances.
    fn sorted_from(&self, c: usize) -> Vec<(f64, usize)> {
        let mut d: Vec<(f64, usize)> = (0..self.len()).map(|i| (self.distance(c, i), i)).collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d
    }

    /// `(m(A), nu(A))` summed over the points in index order.
    pub fn annulus_masses(&self, a: &Annulus) -> (f64, f64) {
        let c = a.center.coords();
        let (mut m, mut nu) = (0.0, 0.0);
        for i in 0..self.len() {
            if a.contains_distance(raw_distance(c, self.point(i))) {
                m += self.m_weights[i];
                nu += self.nu_weights[i];
            }
        }
        (m, nu)
    }

    fn membership(&self, a: &Annulus) -> Vec<u64> {
        let mut bits = vec![0u64; self.len().div_ceil(64)];
        let c = a.center.coords();
        for i in 0..self.len() {
            if a.contains_distance(raw_distance(c, self.point(i))) {
                bits[i / 64] |= 1 << (i % 64);
            }
        }
        bits
    }
}

fn gaussian_point(dim: usize, rng: &mut ChaCha8Rng) -> Result<SpherePoint> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-12 {
            return SpherePoint::normalized(v);
        }
    }
}

fn direction_set(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if n == 3 {
        // Fibonacci lattice on S^2
        let golden = PI * (3.0 - 5f64.sqrt());
        (0..count)
            .map(|i| {
                let z = 1.0 - (2 * i + 1) as f64 / count as f64;
                let r = (1.0 - z * z).sqrt();
                let th = golden * i as f64;
                vec![r * th.cos(), r * th.sin(), z]
            })
            .collect()
    } else {
        (0..count)
            .map(|_| {
                gaussian_point(n, rng)
                    .expect("nonzero sample")
                    .coords()
                    .to_vec()
            })
            .collect()
    }
}

/// Haar-ish random orthogonal matrix from the QR factorisation of a
/// Gaussian matrix.
fn random_rotation(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for i in 0..dim {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    q
}

/// Radius interval `[lo, hi)` of a doubled annulus; `hi >= pi` means the
/// annulus reaches the antipode.
fn doubled_interval(a: &Annulus) -> (f64, f64) {
    let d = a.doubled();
    (d.inner, d.outer)
}

/// Exact disjointness of the continuous sets `{lo1 <= d(x,p) < hi1}` and
/// `{lo2 <= d(x,q) < hi2}` on the sphere, with a safety margin.
pub fn intervals_disjoint(lo1: f64, hi1: f64, lo2: f64, hi2: f64, delta: f64) -> bool {
    let eps = DISJOINT_MARGIN;
    hi1 + hi2 + eps <= delta
        || lo1 + lo2 >= 2.0 * PI - delta + eps
        || lo2 >= hi1 + delta + eps
        || lo1 >= hi2 + delta + eps
}

/// Whether the doublings of `a` and `b` are disjoint as subsets of `S^n`.
pub fn doubled_disjoint(a: &Annulus, b: &Annulus) -> bool {
    let (lo1, hi1) = doubled_interval(a);
    let (lo2, hi2) = doubled_interval(b);
    let delta = raw_distance(a.center.coords(), b.center.coords());
    intervals_disjoint(lo1, hi1, lo2, hi2, delta)
}

/// One annulus of a family with its certification numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedAnnulus {
    pub annulus: Annulus,
    /// `m(A_j)` summed from the point weights.
    pub m_mass: f64,
    /// `nu(2A_j)` summed from the point weights.
    pub nu_doubled: f64,
}

/// `2k` annuli with pairwise disjoint doublings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusFamily {
    pub k: usize,
    pub annuli: Vec<CertifiedAnnulus>,
    /// `min_j m(A_j) k / m(X)`.
    pub achieved_c: f64,
    pub m_total: f64,
    pub nu_total: f64,
    /// Indices of the `k` annuli kept after [`reindex_and_select`].
    #[serde(default)]
    pub selected: Vec<usize>,
    pub seed: u64,
}

impl AnnulusFamily {
    pub fn selected_annuli(&self) -> impl Iterator<Item = &CertifiedAnnulus> {
        self.selected.iter().map(|&i| &self.annuli[i])
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    /// Position in the centre list.
    slot: usize,
    inner: f64,
    outer: f64,
    footprint: f64,
}

impl Candidate {
    fn doubled(&self) -> (f64, f64) {
        (self.inner / 2.0, (2.0 * self.outer).min(PI))
    }
}

struct CenterProfile {
    dists: Vec<f64>,
    m_prefix: Vec<f64>,
    nu_prefix: Vec<f64>,
}

impl CenterProfile {
    fn new(space: &MetricMeasureSpace, index: usize) -> Self {
        let sorted = space.sorted_from(index);
        let mut m_prefix = vec![0.0];
        let mut nu_prefix = vec![0.0];
        for &(_, i) in &sorted {
            m_prefix.push(m_prefix.last().unwrap() + space.m_weights[i]);
            nu_prefix.push(nu_prefix.last().unwrap() + space.nu_weights[i]);
        }
        Self {
            dists: sorted.into_iter().map(|(d, _)| d).collect(),
            m_prefix,
            nu_prefix,
        }
    }

    /// Number of points with distance `< r`.
    fn below(&self, r: f64) -> usize {
        self.dists.partition_point(|&d| d < r)
    }

    /// Smallest annulus `[inner, R)` about this centre with m-mass `>= target`.
    fn candidate(&self, slot: usize, inner: f64, target: f64) -> Option<Candidate> {
        let start = self.below(inner);
        let base = self.m_prefix[start];
        let last = self.m_prefix.partition_point(|&s| s < base + target);
        if last >= self.m_prefix.len() {
            return None;
        }
        let outer = (self.dists[last - 1] + RADIUS_PAD).min(PI);
        if outer <= inner {
            return None;
        }
        let end = if outer >= PI {
            self.dists.len()
        } else {
            self.below(outer)
        };
        if self.m_prefix[end] - base < target {
            return None;
        }
        let d_lo = self.below(inner / 2.0);
        let d_hi = if 2.0 * outer >= PI {
            self.dists.len()
        } else {
            self.below(2.0 * outer)
        };
        Some(Candidate {
            slot,
            inner,
            outer,
            footprint: self.nu_prefix[d_hi] - self.nu_prefix[d_lo],
        })
    }
}

fn candidate_centers(space: &MetricMeasureSpace, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let len = space.len();
    let mut chosen = Vec::new();
    let mut is_chosen = vec![false; len];
    // density peaks: m relative to nu
    let density = |i: usize| {
        let nu = space.nu_weights[i];
        if nu > 0.0 {
            space.m_weights[i] / nu
        } else {
            space.m_weights[i]
        }
    };
    let mut by_density: Vec<usize> = (0..len).filter(|&i| space.m_weights[i] > 0.0).collect();
    by_density.sort_by(|&a, &b| density(b).total_cmp(&density(a)).then(a.cmp(&b)));
    for &i in by_density.iter().take(DENSITY_CENTERS.min(len)) {
        is_chosen[i] = true;
        chosen.push(i);
    }
    // farthest-point sampling for coverage
    let budget = MAX_CENTERS.min(len);
    let mut nearest = vec![f64::INFINITY; len];
    let mut next = rng.gen_range(0..len);
    while chosen.len() < budget {
        if !is_chosen[next] {
            is_chosen[next] = true;
            chosen.push(next);
        }
        for (i, best) in nearest.iter_mut().enumerate() {
            *best = best.min(space.distance(next, i));
        }
        let far = (0..len)
            .filter(|&i| !is_chosen[i])
            .max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(b.cmp(&a)));
        match far {
            Some(f) => next = f,
            None => break,
        }
    }
    chosen
}

fn inner_radii() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((1..=INNER_LEVELS).map(|s| PI * 2f64.powf(-(s as f64) / 2.0)))
        .collect()
}

struct Search<'a> {
    profiles: Vec<CenterProfile>,
    center_dist: Vec<Vec<f64>>,
    radii: Vec<f64>,
    space: &'a MetricMeasureSpace,
}

impl Search<'_> {
    fn compatible(&self, a: &Candidate, b: &Candidate) -> bool {
        if a.slot == b.slot {
            return false;
        }
        let (lo1, hi1) = a.doubled();
        let (lo2, hi2) = b.doubled();
        intervals_disjoint(lo1, hi1, lo2, hi2, self.center_dist[a.slot][b.slot])
    }

    fn candidates(&self, target: f64, want: usize) -> Vec<Candidate> {
        let mut out: Vec<Candidate> = self
            .profiles
            .iter()
            .enumerate()
            .flat_map(|(slot, p)| {
                self.radii
                    .iter()
                    .filter_map(move |&r| p.candidate(slot, r, target))
            })
            .collect();
        out.sort_by(|a, b| {
            a.footprint
                .total_cmp(&b.footprint)
                .then(a.slot.cmp(&b.slot))
                .then(a.inner.total_cmp(&b.inner))
        });
        // 2k disjoint doublings have total footprint at most nu(X)
        if let Some(min) = out.first().map(|c| c.footprint) {
            let cap = self.space.nu_total() - (want as f64 - 1.0) * min;
            out.retain(|c| c.footprint <= cap * (1.0 + 1e-12));
        }
        out
    }

    /// Greedy independent set: among the smallest-footprint live candidates,
    /// take the one that blocks the fewest others.
    fn greedy(
        &self,
        candidates: &[Candidate],
        want: usize,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Option<Vec<usize>> {
        let mut picked = Vec::with_capacity(want);
        let mut alive: Vec<usize> = (0..candidates.len()).collect();
        let mut rng = rng;
        while picked.len() < want {
            if alive.len() < want - picked.len() {
                return None;
            }
            let mut scored: Vec<(usize, usize)> = alive
                .iter()
                .take(GREEDY_WINDOW)
                .map(|&c| {
                    let blocked = alive
                        .iter()
                        .filter(|&&o| o != c && !self.compatible(&candidates[c], &candidates[o]))
                        .count();
                    (blocked, c)
                })
                .collect();
            scored.sort();
            let choice = match rng.as_deref_mut() {
                Some(r) => scored[r.gen_range(0..scored.len().min(3))].1,
                None => scored[0].1,
            };
            picked.push(choice);
            alive.retain(|&o| o != choice && self.compatible(&candidates[choice], &candidates[o]));
        }
        Some(picked)
    }

    fn attempt(&self, c: f64, k: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Candidate>> {
        let want = 2 * k;
        let target = c * self.space.m_total() / k as f64;
        let candidates = self.candidates(target, want);
        if candidates.len() < want {
            return None;
        }
        let mut found = self.greedy(&candidates, want, None);
        for _ in 0..RESTARTS {
            if found.is_some() {
                break;
            }
            found = self.greedy(&candidates, want, Some(rng));
        }
        found.map(|idx| idx.into_iter().map(|i| candidates[i].clone()).collect())
    }
}

/// Searches for `2k` annuli with pairwise disjoint doublings and a large
/// common mass share: the share `c` is lowered geometrically until a
/// greedy packing exists, then refined by bisection. Deterministic in `seed`.
pub fn decompose(space: &MetricMeasureSpace, k: usize, seed: u64) -> Result<AnnulusFamily> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    space.check_non_atomic(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = candidate_centers(space, &mut rng);
    let profiles: Vec<CenterProfile> = centers
        .iter()
        .map(|&c| CenterProfile::new(space, c))
        .collect();
    let center_dist = centers
        .iter()
        .map(|&a| centers.iter().map(|&b| space.distance(a, b)).collect())
        .collect();
    let search = Search {
        profiles,
        center_dist,
        radii: inner_radii(),
        space,
    };
    let mut hi = C_START / C_STEP;
    let mut c = C_START;
    let mut best = None;
    while c >= C_MIN {
        if let Some(found) = search.attempt(c, k, &mut rng) {
            best = Some((c, found));
            break;
        }
        hi = c;
        c *= C_STEP;
    }
    let Some((mut lo, mut chosen)) = best else {
        return Err(Error::DecompositionNotFound(format!(
            "no {} annuli with disjoint doublings and mass share >= {C_MIN:e} m(X)/k among {} centres",
            2 * k,
            centers.len()
        )));
    };
    for _ in 0..BISECTIONS {
        let mid = (lo * hi).sqrt();
        match search.attempt(mid, k, &mut rng) {
            Some(found) => {
                lo = mid;
                chosen = found;
            }
            None => hi = mid,
        }
    }
    let annuli = chosen
        .iter()
        .map(|c| Annulus::new(space.sphere_point(centers[c.slot]), c.inner, c.outer))
        .collect::<Result<Vec<_>>>()?;
    let family = certify(space, k, annuli, seed)?;
    verify_family(space, &family)?;
    Ok(family)
}

fn certify(
    space: &MetricMeasureSpace,
    k: usize,
    annuli: Vec<Annulus>,
    seed: u64,
) -> Result<AnnulusFamily> {
    let m_total = space.m_total();
    let annuli: Vec<CertifiedAnnulus> = annuli
        .into_iter()
        .map(|a| {
            let m_mass = space.annulus_masses(&a).0;
            let nu_doubled = space.annulus_masses(&a.doubled()).1;
            CertifiedAnnulus {
                annulus: a,
                m_mass,
                nu_doubled,
            }
        })
        .collect();
    let achieved_c = annuli
        .iter()
        .map(|a| a.m_mass * k as f64 / m_total)
        .fold(f64::INFINITY, f64::min);
    Ok(AnnulusFamily {
        k,
        annuli,
        achieved_c,
        m_total,
        nu_total: space.nu_total(),
        selected: Vec::new(),
        seed,
    })
}

/// Outcome of [`verify_family`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub pairs_checked: usize,
    pub min_mass_share: f64,
    pub max_overlap_points: usize,
}

/// Independent re-check of a family against the raw space: `2k` annuli,
/// doublings pairwise disjoint both as point sets (bitset intersection) and
/// as continuous sets, stored masses equal to re-summed ones, and every
/// `m(A_j) >= achieved_c m(X) / k` with `achieved_c > 0`.
pub fn verify_family(space: &MetricMeasureSpace, family: &AnnulusFamily) -> Result<Verification> {
    let fail = |msg: String| Err(Error::Certification(msg));
    if family.annuli.len() != 2 * family.k {
        return fail(format!(
            "{} annuli for k = {}",
            family.annuli.len(),
            family.k
        ));
    }
    let doubled: Vec<Vec<u64>> = family
        .annuli
        .iter()
        .map(|a| space.membership(&a.annulus.doubled()))
        .collect();
    let mut pairs = 0;
    for i in 0..doubled.len() {
        for j in i + 1..doubled.len() {
            pairs += 1;
            let overlap: u32 = doubled[i]
                .iter()
                .zip(&doubled[j])
                .map(|(a, b)| (a & b).count_ones())
                .sum();
            if overlap > 0 {
                return fail(format!("doubled annuli {i} and {j} share {overlap} points"));
            }
            if !doubled_disjoint(&family.annuli[i].annulus, &family.annuli[j].annulus) {
                return fail(format!(
                    "doubled annuli {i} and {j} intersect on the sphere"
                ));
            }
        }
    }
    let m_total = space.m_total();
    if m_total != family.m_total {
        return fail(format!(
            "m(X) = {m_total} but family records {}",
            family.m_total
        ));
    }
    if !(family.achieved_c > 0.0) {
        return fail(format!(
            "achieved_c = {} is not positive",
            family.achieved_c
        ));
    }
    let mut min_share = f64::INFINITY;
    for (j, a) in family.annuli.iter().enumerate() {
        let m = space.annulus_masses(&a.annulus).0;
        let nu = space.annulus_masses(&a.annulus.doubled()).1;
        if m != a.m_mass || nu != a.nu_doubled {
            return fail(format!(
                "annulus {j}: stored masses ({}, {}) differ from ({m}, {nu})",
                a.m_mass, a.nu_doubled
            ));
        }
        let share = m * family.k as f64 / m_total;
        if share < family.achieved_c {
            return fail(format!(
                "annulus {j}: m(A) = {m} below {}",
                family.achieved_c * m_total / family.k as f64
            ));
        }
        min_share = min_share.min(share);
    }
    Ok(Verification {
        pairs_checked: pairs,
        min_mass_share: min_share,
        max_overlap_points: 0,
    })
}

/// Stable sort by `nu(2A_j)` and keep the first `k`, each of which must
/// satisfy `nu(2A_j) <= nu(X)/k`.
pub fn reindex_and_select(
    mut family: AnnulusFamily,
    space: &MetricMeasureSpace,
    k: usize,
) -> Result<AnnulusFamily> {
    if family.annuli.len() < k || k == 0 {
        return Err(Error::Config(format!(
            "cannot select {k} of {} annuli",
            family.annuli.len()
        )));
    }
    family
        .annuli
        .sort_by(|a, b| a.nu_doubled.total_cmp(&b.nu_doubled));
    let bound = space.nu_total() / k as f64;
    for (j, a) in family.annuli.iter().take(k).enumerate() {
        if a.nu_doubled > bound {
            return Err(Error::Invariant(format!(
                "selected annulus {j} has nu(2A) = {} > nu(X)/k = {bound}",
                a.nu_doubled
            )));
        }
    }
    family.selected = (0..k).collect();
    Ok(family)
}

fn ball_nu(profile: &CenterProfile, r: f64) -> (usize, f64) {
    let i = if r >= PI {
        profile.dists.len()
    } else {
        profile.below(r)
    };
    (i, profile.nu_prefix[i])
}

/// Smaller balls are dominated by the sampling pattern of the cloud.
pub const DOUBLING_MIN_POINTS: usize = 50;

/// Doubling ratio estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub estimate: f64,
    pub balls_used: usize,
}

/// `max nu(B(p, 2r)) / nu(B(p, r))` over `samples` random centres and radii,
/// counting only balls `B(p, r)` with at least [`DOUBLING_MIN_POINTS`] points.
pub fn estimate_doubling(space: &MetricMeasureSpace, samples: usize, seed: u64) -> DoublingReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut estimate: f64 = 0.0;
    let mut used = 0;
    for _ in 0..samples {
        let profile = CenterProfile::new(space, rng.gen_range(0..space.len()));
        let r = (rng.gen_range((0.01f64).ln()..PI.ln())).exp();
        let (count, small) = ball_nu(&profile, r);
        if count < DOUBLING_MIN_POINTS || !(small > 0.0) {
            continue;
        }
        let (_, big) = ball_nu(&profile, 2.0 * r);
        estimate = estimate.max(big / small);
        used += 1;
    }
    DoublingReport {
        estimate,
        balls_used: used,
    }
}

/// Greedy half-radius cover counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    pub max_count: usize,
    pub mean_count: f64,
    pub trials: usize,
    /// `4^n`.
    pub bound: usize,
}

/// For random balls `B(p, r)`, covers the contained points greedily by balls
/// of radius `r/2` centred at points within `3r/2` of `p`, and reports the
/// largest number of balls needed.
pub fn covering_number_check(
    space: &MetricMeasureSpace,
    trials: usize,
    seed: u64,
) -> CoveringReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = Vec::with_capacity(trials);
    for _ in 0..trials {
        let p = rng.gen_range(0..space.len());
        let r = rng.gen_range(0.1..1.2);
        let inside: Vec<usize> = (0..space.len())
            .filter(|&i| space.distance(p, i) < r)
            .collect();
        if inside.is_empty() {
            continue;
        }
        let mut centres: Vec<usize> = (0..space.len())
            .filter(|&i| space.distance(p, i) < 1.5 * r)
            .collect();
        centres.shuffle(&mut rng);
        let covers: Vec<Vec<usize>> = centres
            .iter()
            .map(|&c| {
                (0..inside.len())
                    .filter(|&j| space.distance(c, inside[j]) < r / 2.0)
                    .collect()
            })
            .collect();
        let mut covered = vec![false; inside.len()];
        let mut left = inside.len();
        let mut used = 0;
        while left > 0 {
            let (best, gain) = covers
                .iter()
                .enumerate()
                .map(|(i, cov)| (i, cov.iter().filter(|&&j| !covered[j]).count()))
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .expect("the ball centre is a candidate");
            if gain == 0 {
                break;
            }
            for &j in &covers[best] {
                if !covered[j] {
                    covered[j] = true;
                    left -= 1;
                }
            }
            used += 1;
        }
        counts.push(used);
    }
    CoveringReport {
        max_count: counts.iter().copied().max().unwrap_or(0),
        mean_count: counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64,
        trials: counts.len(),
        bound: 4usize.pow(space.dim() as u32),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfn::Annulus;

    fn uniform_cloud() -> MetricMeasureSpace {
        MetricMeasureSpace::from_factor(&ConformalFactor::constant(3, 1.0).unwrap(), 40, 50, 7)
            .unwrap()
    }

    #[test]
    fn cloud_weights_reproduce_volume() {
        let x = uniform_cloud();
        assert_eq!(x.len(), 2000);
        assert!((x.nu_total() - sphere_volume(3)).abs() < 1e-10);
        assert!((x.m_total() - sphere_volume(3)).abs() < 1e-10);
        x.check_metric(2000, 1).unwrap();
        let mu = ConformalFactor::constant(3, 2.0).unwrap();
        let y = MetricMeasureSpace::from_factor(&mu, 40, 50, 7).unwrap();
        assert!((y.m_total() - 16.0 * sphere_volume(3)).abs() < 1e-9);
        let z = MetricMeasureSpace::from_factor(
            &ConformalFactor::polynomial(4, vec![2.0, 1.0]).unwrap(),
            30,
            40,
            3,
        )
        .unwrap();
        assert!((z.nu_total() - sphere_volume(4)).abs() < 1e-10);
    }

    #[test]
    fn disjointness_criterion_matches_brute_force() {
        // brute force over points on a great circle through p and q and
        // random points elsewhere
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let probe: Vec<SpherePoint> = (0..20000)
            .map(|_| gaussian_point(4, &mut rng).unwrap())
            .collect();
        let p = SpherePoint::pole(3);
        for _ in 0..300 {
            let q = gaussian_point(4, &mut rng).unwrap();
            let a = Annulus::new(
                p.clone(),
                rng.gen_range(0.0..1.5),
                rng.gen_range(1.5..3.2f64).min(PI),
            )
            .unwrap();
            let (r2, big) = (rng.gen_range(0.0..2.5), rng.gen_range(0.05..1.5));
            let b = Annulus::new(q.clone(), r2, (r2 + big).min(PI)).unwrap();
            if doubled_disjoint(&a, &b) {
                let (da, db) = (a.doubled(), b.doubled());
                assert!(probe.iter().all(|x| !(da.contains(x) && db.contains(x))));
            }
        }
    }

    #[test]
    fn disjointness_is_tight() {
        // two balls of doubled radius 0.5 at distance 1 touch
        assert!(!intervals_disjoint(0.0, 0.5, 0.0, 0.5, 1.0));
        assert!(intervals_disjoint(0.0, 0.5, 0.0, 0.5, 1.0 + 1e-6));
        // ball inside a hole
        assert!(intervals_disjoint(0.0, 0.2, 0.5, PI, 0.29));
        assert!(!intervals_disjoint(0.0, 0.2, 0.5, PI, 0.31));
        // two complements of caps around nearly antipodal centres
        assert!(intervals_disjoint(2.0, PI, 2.0, PI, 2.4));
        assert!(!intervals_disjoint(2.0, PI, 2.0, PI, 2.2));
    }

    #[test]
    fn uniform_k1_gives_two_annuli() {
        let x = uniform_cloud();
        let family = decompose(&x, 1, 5).unwrap();
        assert_eq!(family.annuli.len(), 2);
        let check = verify_family(&x, &family).unwrap();
        assert_eq!(check.pairs_checked, 1);
        assert!(family.achieved_c > 0.0);
        for a in &family.annuli {
            assert!(a.m_mass >= family.achieved_c * x.m_total() - 1e-12);
        }
        let sel = reindex_and_select(family.clone(), &x, 1).unwrap();
        let smaller = family
            .annuli
            .iter()
            .map(|a| a.nu_doubled)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(sel.annuli[sel.selected[0]].nu_doubled, smaller);
    }

    #[test]
    fn decomposition_is_deterministic() {
        let x = uniform_cloud();
        assert_eq!(decompose(&x, 4, 9).unwrap(), decompose(&x, 4, 9).unwrap());
    }

    #[test]
    fn two_cap_measure_puts_annuli_in_caps() {
        let mu = ConformalFactor::two_bubble(3, 4.0).unwrap();
        let x = MetricMeasureSpace::from_factor(&mu, 48, 60, 1).unwrap();
        let family = decompose(&x, 4, 2).unwrap();
        verify_family(&x, &family).unwrap();
        let sel = reindex_and_select(family, &x, 4).unwrap();
        assert_eq!(sel.selected.len(), 4);
    }

    #[test]
    fn single_atom_is_rejected() {
        let x = uniform_cloud();
        let mut m = vec![0.0; x.len()];
        m[17] = 1.0;
        let points: Vec<SpherePoint> = (0..x.len()).map(|i| x.sphere_point(i)).collect();
        let atom = MetricMeasureSpace::new(points, m, x.nu_weights().to_vec()).unwrap();
        assert!(matches!(
            decompose(&atom, 1, 0),
            Err(Error::MeasureConcentrated { .. })
        ));
    }

    #[test]
    fn verifier_rejects_tampering() {
        let x = uniform_cloud();
        let mut family = decompose(&x, 2, 3).unwrap();
        let mut bad = family.clone();
        bad.annuli[0].m_mass *= 1.5;
        assert!(verify_family(&x, &bad).is_err());
        let mut overlap = family.clone();
        overlap.annuli[1].annulus = overlap.annuli[0].annulus.clone();
        assert!(verify_family(&x, &overlap).is_err());
        family.annuli.pop();
        assert!(verify_family(&x, &family).is_err());
    }

    #[test]
    fn achieved_c_trend_in_k() {
        // monotone along 1, 2, 4, 8; at 16 the share rises again on this
        // cloud (cap packings are not monotone in the count), so it is only
        // bounded by the k = 4 value
        let x = uniform_cloud();
        let cs: Vec<f64> = [1, 2, 4, 8, 16]
            .iter()
            .map(|&k| decompose(&x, k, 4).unwrap().achieved_c)
            .collect();
        for w in cs[..4].windows(2) {
            assert!(w[1] <= w[0], "{cs:?}");
        }
        assert!(cs[4] <= cs[2], "{cs:?}");
        assert!(cs[4] >= 0.01, "{cs:?}");
    }

    #[test]
    fn doubling_estimates() {
        let x = MetricMeasureSpace::from_factor(
            &ConformalFactor::constant(3, 1.0).unwrap(),
            64,
            128,
            2,
        )
        .unwrap();
        let report = estimate_doubling(&x, 400, 1);
        assert!(report.balls_used > 100);
        assert!(report.estimate <= 8.0 * 1.15, "{report:?}");
        // a single tight cluster saturates: large balls gain nothing
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cluster: Vec<SpherePoint> = (0..200)
            .map(|_| {
                let mut v = vec![1.0, 0.0, 0.0, 0.0];
                for c in v.iter_mut().skip(1) {
                    *c = 1e-3 * rng.sample::<f64, _>(StandardNormal);
                }
                SpherePoint::normalized(v).unwrap()
            })
            .collect();
        let one = MetricMeasureSpace::new(cluster, vec![1.0; 200], vec![1.0; 200]).unwrap();
        let r = estimate_doubling(&one, 200, 2);
        assert!(r.estimate < 1.5 && r.estimate >= 1.0, "{r:?}");
    }

    #[test]
    fn two_far_clusters_break_doubling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut points = Vec::new();
        let mut w = Vec::new();
        for (centre, count) in [(1.0, 60usize), (-1.0, 3000)] {
            for _ in 0..count {
                let mut v = vec![centre, 0.0, 0.0, 0.0];
                for c in v.iter_mut().skip(1) {
                    *c = 1e-3 * rng.sample::<f64, _>(StandardNormal);
                }
                points.push(SpherePoint::normalized(v).unwrap());
                w.push(1.0);
            }
        }
        let x = MetricMeasureSpace::new(points, w.clone(), w).unwrap();
        let r = estimate_doubling(&x, 3000, 1);
        assert!(r.estimate > 8.0, "{r:?}");
    }

    #[test]
    fn covering_counts_stay_below_bound() {
        let x = uniform_cloud();
        let report = covering_number_check(&x, 30, 3);
        assert!(report.trials > 0);
        assert!(report.max_count >= 1);
        assert!(report.max_count <= report.bound, "{report:?}");
        assert_eq!(report.bound, 64);
    }
}
