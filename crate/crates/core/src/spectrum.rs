//! Spectrum of the conformal Laplacian of `g~ = mu^{4/(n-2)} g` for zonal `mu`.
//!
//! With `v = mu f` the eigenproblem becomes the round-metric pencil
//!
//! ```text
//! (-Delta_g + c_n R_g) v = lambda mu^{4/(n-2)} v,
//! ```
//!
//! which decouples over the degree `j` of the spherical-harmonic component on
//! the `S^{n-1}` of directions around the pole. In block `j` the trial space
//! is `sin^j(phi_1) q(cos phi_1)` with `q` a polynomial of degree `<= L - j`,
//! expanded in the polynomials orthonormal for `(1 - u^2)^{(n-2)/2 + j}`; the
//! mass matrix is then the identity when `mu` is constant.
//!
//! Eigenvalues are indexed from 0 and counted with multiplicity: block `j`
//! contributes each of its values `dim H_j(S^{n-1})` times.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{ConformalFactor, CurvatureConstants};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_jacobi_symmetric, SymmetricJacobi};

/// Change between truncations `L` and `L + TRUST_STEP` below which an
/// eigenvalue counts as converged.
pub const TRUST_TOL: f64 = 1e-7;
pub const TRUST_STEP: usize = 8;

/// Galerkin truncation of the conformal eigenproblem for one factor.
#[derive(Debug, Clone)]
pub struct SpectralProblem {
    pub factor: ConformalFactor,
    /// Maximal polynomial degree `L` in `u`.
    pub degree: usize,
    /// Highest harmonic block `J` (defaults to `L`).
    pub max_block: usize,
    quad_order: Option<usize>,
}

impl SpectralProblem {
    pub fn new(factor: ConformalFactor, degree: usize) -> Result<Self> {
        let problem = Self {
            factor,
            degree,
            max_block: degree,
            quad_order: None,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_max_block(mut self, max_block: usize) -> Result<Self> {
        self.max_block = max_block;
        self.validate()?;
        Ok(self)
    }

    pub fn with_quad_order(mut self, order: usize) -> Result<Self> {
        self.quad_order = Some(order);
        self.validate()?;
        Ok(self)
    }

    /// Quadrature nodes per block; `4L + 8` unless overridden.
    pub fn quad_order(&self) -> usize {
        self.quad_order.unwrap_or(4 * self.degree + 8)
    }

    pub fn dim(&self) -> usize {
        self.factor.dim()
    }

    fn weight_degree(&self) -> usize {
        let exponent = self.factor.constants().metric_exponent();
        match self.factor.polynomial_degree() {
            Some(d) if exponent.fract() == 0.0 => d * exponent as usize,
            _ => 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.degree < 4 {
            return Err(Error::Config(format!("truncation L = {} < 4", self.degree)));
        }
        if self.max_block > self.degree {
            return Err(Error::Config(format!(
                "block range J = {} exceeds L = {}",
                self.max_block, self.degree
            )));
        }
        let need = 2 * self.degree + self.weight_degree() + 2;
        if self.quad_order() < need {
            return Err(Error::Config(format!(
                "quadrature order {} below the required {need}",
                self.quad_order()
            )));
        }
        Ok(())
    }

    /// The same problem at truncation `degree + extra` (blocks and default
    /// quadrature grow with it).
    pub fn refined(&self, extra: usize) -> Self {
        Self {
            factor: self.factor.clone(),
            degree: self.degree + extra,
            max_block: self.max_block + extra,
            quad_order: self.quad_order.map(|q| q + 4 * extra),
        }
    }
}

/// `dim` of the degree-`l` spherical harmonics on `S^d`:
/// `C(l+d, d) - C(l+d-2, d)`.
pub fn harmonic_dimension(d: usize, l: usize) -> usize {
    fn binom(a: usize, b: usize) -> usize {
        if b > a {
            return 0;
        }
        let b = b.min(a - b);
        (0..b).fold(1usize, |acc, i| acc * (a - i) / (i + 1))
    }
    binom(l + d, d) - if l >= 2 { binom(l + d - 2, d) } else { 0 }
}

/// Closed-form spectrum of the round conformal Laplacian on `S^n`:
/// `l(l+n-1) + n(n-2)/4` with multiplicity `dim H_l(S^n)`, `l = 0..=degree`.
pub fn round_box_eigenvalues(n: usize, degree: usize) -> Result<Vec<(f64, usize)>> {
    let c = CurvatureConstants::new(n)?;
    Ok((0..=degree)
        .map(|l| {
            let lf = l as f64;
            (
                lf * (lf + n as f64 - 1.0) + c.potential(),
                harmonic_dimension(n, l),
            )
        })
        .collect())
}

/// Stiffness and mass matrices of block `j`.
pub fn assemble_block(problem: &SpectralProblem, j: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    assemble_with_order(problem, j, problem.quad_order())
}

fn assemble_with_order(
    problem: &SpectralProblem,
    j: usize,
    order: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if j > problem.max_block {
        return Err(Error::Config(format!(
            "block {j} beyond J = {}",
            problem.max_block
        )));
    }
    let n = problem.dim();
    let nf = n as f64;
    let jf = j as f64;
    let size = problem.degree - j + 1;
    let a = (nf - 2.0) / 2.0 + jf;
    let basis = SymmetricJacobi::new(a, size);
    let rule = gauss_jacobi_symmetric(a - 1.0, order);
    let pot = problem.factor.constants().potential();
    let centrifugal = jf * (jf + nf - 2.0);

    let q = rule.0.len();
    let mut vals = DMatrix::<f64>::zeros(q, size);
    let mut ders = DMatrix::<f64>::zeros(q, size);
    let mut w_grad = vec![0.0; q];
    let mut w_cross = vec![0.0; q];
    let mut w_pot = vec![0.0; q];
    let mut w_mass = vec![0.0; q];
    let mut pv = vec![0.0; size];
    let mut pd = vec![0.0; size];
    for (i, (&u, &w)) in rule.0.iter().zip(&rule.1).enumerate() {
        basis.eval(u, size - 1, &mut pv, &mut pd);
        for b in 0..size {
            vals[(i, b)] = pv[b];
            ders[(i, b)] = pd[b];
        }
        let s2 = 1.0 - u * u;
        w_grad[i] = w * s2 * s2;
        w_cross[i] = -w * jf * u * s2;
        w_pot[i] = w * (jf * jf * u * u + centrifugal + pot * s2);
        w_mass[i] = w * s2 * problem.factor.measure_density(u);
    }
    let scaled = |weights: &[f64], m: &DMatrix<f64>| {
        let mut out = m.clone();
        for (i, &w) in weights.iter().enumerate() {
            out.row_mut(i).scale_mut(w);
        }
        out
    };
    let cross = ders.transpose() * scaled(&w_cross, &vals);
    let mut stiffness = ders.transpose() * scaled(&w_grad, &ders) + &cross + cross.transpose();
    stiffness += vals.transpose() * scaled(&w_pot, &vals);
    let mass = vals.transpose() * scaled(&w_mass, &vals);
    let stiffness = (&stiffness + stiffness.transpose()) * 0.5;
    let mass = (&mass + mass.transpose()) * 0.5;
    Ok((stiffness, mass))
}

fn reduce(
    stiffness: &DMatrix<f64>,
    mass: &DMatrix<f64>,
) -> Option<(SymmetricEigen<f64, nalgebra::Dyn>, DMatrix<f64>)> {
    let chol = Cholesky::new(mass.clone())?;
    let l = chol.l();
    let x = l.solve_lower_triangular(stiffness)?;
    let c = l.solve_lower_triangular(&x.transpose())?;
    let c = (&c + c.transpose()) * 0.5;
    Some((SymmetricEigen::new(c), l))
}

/// Ascending eigenvalues of the symmetric-definite pencil `(S, M)`.
///
/// The pencil is reduced by Cholesky to `L^{-1} S L^{-T}` and solved densely;
/// each eigenvalue is then replaced by the Rayleigh quotient of its
/// eigenvector in the original coordinates. The dense solver's error scales
/// with the norm of the reduced matrix, which is large when `mu` varies a
/// lot; the quotient's error is quadratic in the eigenvector error instead.
pub fn solve_block(stiffness: &DMatrix<f64>, mass: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(solve_block_with_vectors(stiffness, mass)?.0)
}

/// Eigenpairs of the pencil; eigenvectors are the columns of the matrix,
/// `M`-orthonormal up to rounding, in ascending eigenvalue order.
pub fn solve_block_with_vectors(
    stiffness: &DMatrix<f64>,
    mass: &DMatrix<f64>,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (eig, l) = reduce(stiffness, mass).ok_or(Error::NotPositiveDefinite { block: 0 })?;
    let lt = l.transpose();
    let vectors = lt
        .solve_upper_triangular(&eig.eigenvectors)
        .ok_or(Error::NotPositiveDefinite { block: 0 })?;
    let sv = stiffness * &vectors;
    let mv = mass * &vectors;
    let mut pairs: Vec<(f64, usize)> = (0..vectors.ncols())
        .map(|i| {
            let v = vectors.column(i);
            (v.dot(&sv.column(i)) / v.dot(&mv.column(i)), i)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut sorted = DMatrix::<f64>::zeros(vectors.nrows(), pairs.len());
    for (col, &(_, i)) in pairs.iter().enumerate() {
        sorted.set_column(col, &vectors.column(i));
    }
    Ok((pairs.iter().map(|p| p.0).collect(), sorted))
}

/// One eigenvalue of one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEntry {
    pub value: f64,
    pub multiplicity: usize,
    pub block: usize,
}

/// Sorted spectrum with multiplicities and block provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub n: usize,
    pub entries: Vec<SpectralEntry>,
    pub truncation: usize,
    pub quad_order: usize,
    /// Number of leading eigenvalues (with multiplicity) that are converged;
    /// `None` when no refinement check was made.
    pub trusted: Option<usize>,
}

impl SpectrumResult {
    /// Eigenvalues repeated by multiplicity.
    pub fn expanded(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.value, e.multiplicity))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Consecutive values within `tol` merged into `(value, total multiplicity)`.
    pub fn distinct(&self, tol: f64) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for e in &self.entries {
            match out.last_mut() {
                Some((v, m)) if (e.value - *v).abs() <= tol * v.abs().max(1.0) => {
                    *m += e.multiplicity
                }
                _ => out.push((e.value, e.multiplicity)),
            }
        }
        out
    }

    /// First index (with multiplicity) of each entry.
    pub fn start_indices(&self) -> Vec<usize> {
        self.entries
            .iter()
            .scan(0, |acc, e| {
                let k = *acc;
                *acc += e.multiplicity;
                Some(k)
            })
            .collect()
    }
}

/// Merges per-block eigenvalues into a globally sorted spectrum; ties go to
/// the lower block.
pub fn merge_spectrum(
    n: usize,
    blocks: Vec<(usize, Vec<f64>)>,
    truncation: usize,
    quad_order: usize,
) -> SpectrumResult {
    let mut entries: Vec<SpectralEntry> = blocks
        .into_iter()
        .flat_map(|(j, values)| {
            let mult = harmonic_dimension(n - 1, j);
            values.into_iter().map(move |value| SpectralEntry {
                value,
                multiplicity: mult,
                block: j,
            })
        })
        .collect();
    entries.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.block.cmp(&b.block)));
    SpectrumResult {
        n,
        entries,
        truncation,
        quad_order,
        trusted: None,
    }
}

fn solve_one_block(problem: &SpectralProblem, j: usize) -> Result<Vec<f64>> {
    let mut order = problem.quad_order();
    for attempt in 0..2 {
        let (s, m) = assemble_with_order(problem, j, order)?;
        match solve_block(&s, &m) {
            Ok(v) => return Ok(v),
            Err(Error::NotPositiveDefinite { .. }) if attempt == 0 => order *= 2,
            Err(Error::NotPositiveDefinite { .. }) => {
                return Err(Error::NotPositiveDefinite { block: j })
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

/// All block eigenvalues at the problem's truncation, without a convergence
/// check.
pub fn solve_truncated(problem: &SpectralProblem) -> Result<SpectrumResult> {
    let blocks = (0..=problem.max_block)
        .into_par_iter()
        .map(|j| solve_one_block(problem, j).map(|v| (j, v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge_spectrum(
        problem.dim(),
        blocks,
        problem.degree,
        problem.quad_order(),
    ))
}

/// Spectrum at truncation `L` with the trusted range set by comparison
/// against `L + 8`.
pub fn compute_spectrum(problem: &SpectralProblem) -> Result<SpectrumResult> {
    let mut coarse = solve_truncated(problem)?;
    let fine = solve_truncated(&problem.refined(TRUST_STEP))?;
    let (a, b) = (coarse.expanded(), fine.expanded());
    let trusted = a
        .iter()
        .zip(&b)
        .take_while(|(x, y)| (*x - *y).abs() < TRUST_TOL * x.abs().max(1.0))
        .count();
    coarse.trusted = Some(trusted);
    Ok(coarse)
}

/// `lambda_k`, counted from 0 with multiplicity.
pub fn lambda_k(result: &SpectrumResult, k: usize) -> Result<f64> {
    let limit = result.trusted.unwrap_or_else(|| result.len());
    if k >= limit {
        return Err(Error::TruncationInsufficient { k, trusted: limit });
    }
    let mut seen = 0;
    for e in &result.entries {
        seen += e.multiplicity;
        if k < seen {
            return Ok(e.value);
        }
    }
    unreachable!("k below total multiplicity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Number of pencil eigenvalues below `sigma`, from the inertia of
    /// `S - sigma M` (count of negative pivots in an LDL^T sweep).
    fn count_below(s: &DMatrix<f64>, m: &DMatrix<f64>, sigma: f64) -> usize {
        let mut a = s - m * sigma;
        let n = a.nrows();
        let mut negative = 0;
        for k in 0..n {
            let pivot = a[(k, k)];
            if pivot < 0.0 {
                negative += 1;
            }
            for i in k + 1..n {
                let f = a[(i, k)] / pivot;
                for j in k + 1..n {
                    a[(i, j)] -= f * a[(k, j)];
                }
            }
        }
        negative
    }

    fn bisect_eigenvalue(
        s: &DMatrix<f64>,
        m: &DMatrix<f64>,
        index: usize,
        lo: f64,
        hi: f64,
    ) -> f64 {
        let (mut lo, mut hi) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count_below(s, m, mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * shift
    }

    #[test]
    fn harmonic_dimensions() {
        assert_eq!(
            (0..5).map(|l| harmonic_dimension(2, l)).collect::<Vec<_>>(),
            [1, 3, 5, 7, 9]
        );
        assert_eq!(
            (0..5).map(|l| harmonic_dimension(3, l)).collect::<Vec<_>>(),
            [1, 4, 9, 16, 25]
        );
        assert_eq!(harmonic_dimension(4, 2), 14);
    }

    #[test]
    fn round_box_examples() {
        let ev = round_box_eigenvalues(3, 2).unwrap();
        assert_eq!(ev, vec![(0.75, 1), (3.75, 4), (8.75, 9)]);
        assert!(round_box_eigenvalues(2, 2).is_err());
    }

    #[test]
    fn diagonal_and_identity_pencils() {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0]));
        assert_eq!(solve_block(&s, &m).unwrap(), vec![0.5, 1.0]);
        let sym = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let v = solve_block(&sym, &DMatrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[1], 3.0, epsilon = 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            solve_block(&sym, &bad),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn random_pencil_matches_inertia_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let s = {
            let a = DMatrix::<f64>::from_fn(20, 20, |_, _| rng.gen_range(-1.0..1.0));
            (&a + a.transpose()) * 0.5
        };
        let m = random_spd(&mut rng, 20, 0.5);
        let (values, vectors) = solve_block_with_vectors(&s, &m).unwrap();
        let bound = 1e4;
        for (i, &v) in values.iter().enumerate() {
            let oracle = bisect_eigenvalue(&s, &m, i, -bound, bound);
            assert!((v - oracle).abs() < 1e-9, "{i}: {v} vs {oracle}");
            let x = vectors.column(i);
            let resid = (&s * x - &m * x * v).norm();
            assert!(resid <= 1e-9 * s.norm());
        }
    }

    #[test]
    fn round_blocks_reproduce_closed_form() {
        for n in [3, 4, 5] {
            let problem =
                SpectralProblem::new(ConformalFactor::constant(n, 1.0).unwrap(), 10).unwrap();
            let pot = (n * (n - 2)) as f64 / 4.0;
            for j in [0, 1, 4, 10] {
                let (s, m) = assemble_block(&problem, j).unwrap();
                assert!((&s - s.transpose()).amax() <= 1e-13);
                assert!((&m - DMatrix::identity(m.nrows(), m.ncols())).amax() < 1e-12);
                let values = solve_block(&s, &m).unwrap();
                for (i, v) in values.iter().enumerate() {
                    let l = (j + i) as f64;
                    assert_abs_diff_eq!(*v, l * (l + n as f64 - 1.0) + pot, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn one_by_one_block() {
        let problem = SpectralProblem::new(ConformalFactor::constant(3, 1.0).unwrap(), 4).unwrap();
        let (s, m) = assemble_block(&problem, 4).unwrap();
        assert_eq!(s.nrows(), 1);
        let (s0, m0) = assemble_block(&problem, 0).unwrap();
        let v = solve_block(
            &s0.view((0, 0), (1, 1)).into_owned(),
            &m0.view((0, 0), (1, 1)).into_owned(),
        )
        .unwrap();
        assert_abs_diff_eq!(v[0], 0.75, epsilon = 1e-13);
        let v = solve_block(&s, &m).unwrap();
        assert_abs_diff_eq!(v[0], 4.0 * 6.0 + 0.75, epsilon = 1e-10);
    }

    #[test]
    fn merged_round_spectrum() {
        let problem = SpectralProblem::new(ConformalFactor::constant(3, 1.0).unwrap(), 6).unwrap();
        let result = solve_truncated(&problem).unwrap();
        let distinct = result.distinct(1e-9);
        let expect = [(0.75, 1), (3.75, 4), (8.75, 9), (15.75, 16)];
        for (got, want) in distinct.iter().zip(expect) {
            assert_abs_diff_eq!(got.0, want.0, epsilon = 1e-10);
            assert_eq!(got.1, want.1);
        }
        assert_abs_diff_eq!(lambda_k(&result, 0).unwrap(), 0.75, epsilon = 1e-12);
        for k in 1..=4 {
            assert_abs_diff_eq!(lambda_k(&result, k).unwrap(), 3.75, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_block_merge_is_identity() {
        let merged = merge_spectrum(3, vec![(0, vec![1.0, 2.0, 5.0])], 4, 24);
        assert_eq!(merged.expanded(), vec![1.0, 2.0, 5.0]);
    }

    #[test]
    fn homothety_scaling() {
        let base = solve_truncated(
            &SpectralProblem::new(ConformalFactor::constant(3, 1.0).unwrap(), 8).unwrap(),
        )
        .unwrap();
        let scaled = solve_truncated(
            &SpectralProblem::new(ConformalFactor::constant(3, 2.0).unwrap(), 8).unwrap(),
        )
        .unwrap();
        for (a, b) in base.expanded().iter().zip(scaled.expanded()) {
            assert!((a / 16.0 - b).abs() <= 1e-14 * a);
        }
        assert_abs_diff_eq!(lambda_k(&scaled, 0).unwrap(), 0.75 / 16.0, epsilon = 1e-15);
    }

    #[test]
    fn dilation_is_isospectral() {
        let mu = ConformalFactor::dilation(3, 2.0).unwrap();
        let result = compute_spectrum(&SpectralProblem::new(mu, 32).unwrap()).unwrap();
        let round = [0.75, 3.75, 3.75, 3.75, 3.75, 8.75];
        for (k, want) in round.iter().enumerate() {
            assert_abs_diff_eq!(lambda_k(&result, k).unwrap(), *want, epsilon = 1e-6);
        }
    }

    #[test]
    fn trusted_range_is_enforced() {
        let mu = ConformalFactor::two_bubble(3, 3.0).unwrap();
        let result = compute_spectrum(&SpectralProblem::new(mu, 8).unwrap()).unwrap();
        let trusted = result.trusted.unwrap();
        assert!(trusted < result.len());
        assert!(matches!(
            lambda_k(&result, trusted),
            Err(Error::TruncationInsufficient { .. })
        ));
    }

    #[test]
    fn problem_validation() {
        let mu = ConformalFactor::constant(3, 1.0).unwrap();
        assert!(SpectralProblem::new(mu.clone(), 3).is_err());
        assert!(SpectralProblem::new(mu.clone(), 6)
            .unwrap()
            .with_max_block(7)
            .is_err());
        assert!(SpectralProblem::new(mu.clone(), 6)
            .unwrap()
            .with_quad_order(10)
            .is_err());
        let poly = ConformalFactor::polynomial(3, vec![2.0, 0.5, 0.5]).unwrap();
        // mu^4 has degree 8: need 2L + 8 + 2
        assert!(SpectralProblem::new(poly.clone(), 6)
            .unwrap()
            .with_quad_order(21)
            .is_err());
        assert!(SpectralProblem::new(poly, 6)
            .unwrap()
            .with_quad_order(22)
            .is_ok());
    }
}
