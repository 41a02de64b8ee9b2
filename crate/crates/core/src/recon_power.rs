//! Tikhonov reconstruction of power densities with the oracle β protocol.
//!
//! The regularizer is `‖Lᵀh‖² = hᵀMh` with `M = LLᵀ`. In whitened coordinates
//! `g = Lᵀh` the normal equations read `(B + β)g = L⁻¹KᵀI` with
//! `B = L⁻¹KᵀKL⁻ᵀ`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cg::{pcg, CgOptions};
use crate::cholesky::CholeskyFactor;
use crate::error::{invalid, AetError, Result};
use crate::field::NodalField;
use crate::forward::ForwardMatrix;
use crate::sparse::{norm2, SparseSymmetricMatrix};

/// Relative residual required of the normal equations.
pub const NORMAL_EQUATION_TOLERANCE: f64 = 1e-8;
/// Search interval for `log₁₀(β/λ_max)`, with `λ_max` the top eigenvalue of `B`.
pub const LOG_BETA_RANGE: (f64, f64) = (-8.0, 2.0);
/// The search stops once the bracket spans less than this factor.
pub const BRACKET_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, PartialEq)]
pub struct TikhonovResult {
    pub h: NodalField,
    pub beta: f64,
    /// `‖Kh − I‖₂`.
    pub residual: f64,
    /// `‖Lᵀh‖₂ = ‖h‖_M`.
    pub regularizer: f64,
    /// True when β came from [`optimal_beta_search`].
    pub optimal: bool,
    /// `‖(KᵀK + βM)h − KᵀI‖ / ‖KᵀI‖`.
    pub normal_residual: f64,
    pub cg_iterations: usize,
}

fn check_inputs(k: &ForwardMatrix, data: &[f64], beta: f64, n: usize) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return invalid(format!("beta must be positive and finite, got {beta}"));
    }
    if data.len() != k.rows() {
        return Err(AetError::Shape(format!("data has {} entries, operator has {} rows", data.len(), k.rows())));
    }
    if n != k.cols() {
        return Err(AetError::Shape(format!("mass matrix has dimension {n}, operator has {} columns", k.cols())));
    }
    Ok(())
}

fn normal_residual(k: &ForwardMatrix, mass: &SparseSymmetricMatrix, data: &[f64], beta: f64, h: &[f64]) -> f64 {
    let rhs = k.apply_transpose(data);
    let mut lhs = k.apply_transpose(&k.apply(h));
    let mh = mass.mul_vec(h);
    lhs.iter_mut().zip(&mh).zip(&rhs).for_each(|((l, m), r)| *l += beta * m - r);
    let scale = norm2(&rhs);
    if scale == 0.0 {
        norm2(&lhs)
    } else {
        norm2(&lhs) / scale
    }
}

fn finish(
    k: &ForwardMatrix,
    mass: &SparseSymmetricMatrix,
    data: &[f64],
    beta: f64,
    h: Vec<f64>,
    cg_iterations: usize,
) -> TikhonovResult {
    let kh = k.apply(&h);
    let residual = kh.iter().zip(data).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let regularizer = mass.quadratic_form(&h).max(0.0).sqrt();
    let normal_residual = normal_residual(k, mass, data, beta, &h);
    TikhonovResult {
        h: NodalField::new(h),
        beta,
        residual,
        regularizer,
        optimal: false,
        normal_residual,
        cg_iterations,
    }
}

/// Minimizer of `½‖Kh − I‖² + (β/2)hᵀMh` by M-preconditioned conjugate gradients
/// on the normal equations.
pub fn tikhonov_solve(
    k: &ForwardMatrix,
    data: &[f64],
    beta: f64,
    mass: &SparseSymmetricMatrix,
    mass_factor: &CholeskyFactor,
) -> Result<TikhonovResult> {
    check_inputs(k, data, beta, mass.dim())?;
    let rhs = k.apply_transpose(data);
    let opts = CgOptions {
        tol: 1e-10,
        max_iters: 20 * k.cols().max(50),
        allow_early_stop: false,
    };
    let outcome = pcg(
        |v| {
            let mut y = k.apply_transpose(&k.apply(v));
            let mv = mass.mul_vec(v);
            y.iter_mut().zip(&mv).for_each(|(a, b)| *a += beta * b);
            y
        },
        |r| mass_factor.solve(r),
        &rhs,
        opts,
    )?;
    let result = finish(k, mass, data, beta, outcome.x, outcome.iterations);
    if result.normal_residual > NORMAL_EQUATION_TOLERANCE {
        return Err(AetError::NoConvergence {
            what: "tikhonov normal equations",
            iterations: outcome.iterations,
            residual: result.normal_residual,
        });
    }
    Ok(result)
}

/// Eigendecomposition `B = VΛVᵀ` of the whitened normal operator; solves for any
/// β and data vector in `O(N²)`.
#[derive(Debug, Clone)]
pub struct SpectralTikhonov {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

/// Whitened data `Vᵀ L⁻¹ KᵀI`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    coefficients: DVector<f64>,
    data: Vec<f64>,
}

impl SpectralTikhonov {
    pub fn new(k: &ForwardMatrix, mass_factor: &CholeskyFactor) -> Result<Self> {
        let n = k.cols();
        if mass_factor.dim() != n {
            return Err(AetError::Shape(format!("mass factor has dimension {}, operator has {n} columns", mass_factor.dim())));
        }
        let rows = k.rows();
        // Column r of `d` is L⁻¹ K_rᵀ, so B = d dᵀ.
        let mut d = DMatrix::<f64>::zeros(n, rows);
        d.as_mut_slice()
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(r, col)| col.copy_from_slice(&mass_factor.solve_l(k.row(r))));
        let b = &d * d.transpose();
        drop(d);
        let eig = b.symmetric_eigen();
        Ok(Self {
            values: eig.eigenvalues.map(|v| v.max(0.0)),
            vectors: eig.eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `λ_max(B) = ‖KL⁻ᵀ‖²`, the unit of relative β; 1 for a zero operator.
    pub fn scale(&self) -> f64 {
        let top = self.values.max();
        if top > 0.0 {
            top
        } else {
            1.0
        }
    }

    /// Eigenvalues of `B`, the squared singular values of `KL⁻ᵀ`.
    pub fn eigenvalues(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn project(&self, k: &ForwardMatrix, mass_factor: &CholeskyFactor, data: &[f64]) -> Result<SpectralData> {
        if data.len() != k.rows() {
            return Err(AetError::Shape(format!("data has {} entries, operator has {} rows", data.len(), k.rows())));
        }
        let b = DVector::from_vec(mass_factor.solve_l(&k.apply_transpose(data)));
        Ok(SpectralData {
            coefficients: self.vectors.tr_mul(&b),
            data: data.to_vec(),
        })
    }

    /// Whitened coefficients `VᵀLᵀh` of a nodal field.
    pub fn whiten(&self, mass_factor: &CholeskyFactor, h: &[f64]) -> DVector<f64> {
        self.vectors.tr_mul(&DVector::from_vec(mass_factor.apply_lt(h)))
    }

    fn coefficients(&self, data: &SpectralData, beta: f64) -> DVector<f64> {
        data.coefficients.zip_map(&self.values, |b, l| b / (l + beta))
    }

    /// `‖h_β − h*‖_M` given the whitened `h*`.
    pub fn m_error(&self, data: &SpectralData, beta: f64, target: &DVector<f64>) -> f64 {
        (self.coefficients(data, beta) - target).norm()
    }

    pub fn solve(
        &self,
        k: &ForwardMatrix,
        mass: &SparseSymmetricMatrix,
        mass_factor: &CholeskyFactor,
        data: &SpectralData,
        beta: f64,
    ) -> Result<TikhonovResult> {
        check_inputs(k, &data.data, beta, mass.dim())?;
        let g = &self.vectors * self.coefficients(data, beta);
        let h = mass_factor.solve_lt(g.as_slice());
        let result = finish(k, mass, &data.data, beta, h, 0);
        if result.normal_residual > NORMAL_EQUATION_TOLERANCE {
            return Err(AetError::NoConvergence {
                what: "spectral tikhonov solve",
                iterations: 0,
                residual: result.normal_residual,
            });
        }
        Ok(result)
    }
}

/// One evaluated point of the β search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaProbe {
    pub log_beta: f64,
    pub error: f64,
}

/// Outcome of the oracle β search.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSearch {
    pub result: TikhonovResult,
    /// `β*/λ_max`.
    pub relative_beta: f64,
    /// `‖h_β* − h*‖_M / ‖h*‖_M`.
    pub relative_error: f64,
    pub at_lower_bound: bool,
    pub probes: Vec<BetaProbe>,
}

/// Golden-section minimization of `f` on `[lo, hi]` until the bracket is narrower
/// than `width`; returns the best evaluated point and all probes.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, width: f64) -> (BetaProbe, Vec<BetaProbe>) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut probes = Vec::new();
    let mut eval = |x: f64, probes: &mut Vec<BetaProbe>| {
        let e = f(x);
        probes.push(BetaProbe { log_beta: x, error: e });
        e
    };
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = eval(x1, &mut probes);
    let mut f2 = eval(x2, &mut probes);
    while b - a > width {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = eval(x1, &mut probes);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = eval(x2, &mut probes);
        }
    }
    // Endpoints of the final bracket; `a == lo` exactly when the left end never moved.
    eval(a, &mut probes);
    eval(b, &mut probes);
    let best = *probes
        .iter()
        .min_by(|p, q| p.error.total_cmp(&q.error).then(p.log_beta.total_cmp(&q.log_beta)))
        .expect("at least two probes");
    (best, probes)
}

/// β* minimizing `‖h_β − h*‖_M` over `log₁₀(β/λ_max) ∈ [−8, 2]`.
pub fn optimal_beta_search(
    spectral: &SpectralTikhonov,
    k: &ForwardMatrix,
    mass: &SparseSymmetricMatrix,
    mass_factor: &CholeskyFactor,
    data: &[f64],
    h_true: &NodalField,
) -> Result<BetaSearch> {
    optimal_beta_search_in(spectral, k, mass, mass_factor, data, h_true, LOG_BETA_RANGE)
}

/// [`optimal_beta_search`] over a custom `log₁₀(β/λ_max)` bracket.
pub fn optimal_beta_search_in(
    spectral: &SpectralTikhonov,
    k: &ForwardMatrix,
    mass: &SparseSymmetricMatrix,
    mass_factor: &CholeskyFactor,
    data: &[f64],
    h_true: &NodalField,
    log_range: (f64, f64),
) -> Result<BetaSearch> {
    let (lo, hi) = log_range;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(AetError::InvalidInput(format!("invalid beta bracket [{lo}, {hi}]")));
    }
    if h_true.len() != k.cols() {
        return Err(AetError::Shape(format!("true field has {} values, operator has {} columns", h_true.len(), k.cols())));
    }
    let projected = spectral.project(k, mass_factor, data)?;
    let target = spectral.whiten(mass_factor, h_true.values());
    let scale = spectral.scale();
    let (best, probes) = golden_section(
        |x| spectral.m_error(&projected, scale * 10f64.powf(x), &target),
        lo,
        hi,
        BRACKET_FACTOR.log10(),
    );
    let relative_beta = 10f64.powf(best.log_beta);
    let mut result = spectral.solve(k, mass, mass_factor, &projected, scale * relative_beta)?;
    result.optimal = true;
    let reference = target.norm();
    Ok(BetaSearch {
        relative_error: if reference > 0.0 { best.error / reference } else { best.error },
        at_lower_bound: best.log_beta == lo,
        relative_beta,
        result,
        probes,
    })
}

/// `‖a − b‖_M / ‖b‖_M`.
pub fn relative_m_error(mass: &SparseSymmetricMatrix, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    (mass.quadratic_form(&d).max(0.0) / mass.quadratic_form(b)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::largest_eigenvalue;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diagonal_operator(k: &[f64]) -> ForwardMatrix {
        let n = k.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in k.iter().enumerate() {
            data[i * n + i] = *v;
        }
        ForwardMatrix::from_rows(n, n, 1.0, n, data, "diag").unwrap()
    }

    fn random_operator(rows: usize, cols: usize, seed: u64) -> ForwardMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        ForwardMatrix::from_rows(rows, cols, 1.0, rows, data, "random").unwrap()
    }

    fn spd_mass(n: usize) -> SparseSymmetricMatrix {
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            dense[i * n + i] = 2.0 + 0.1 * i as f64;
            if i + 1 < n {
                dense[i * n + i + 1] = 0.5;
                dense[(i + 1) * n + i] = 0.5;
            }
        }
        SparseSymmetricMatrix::from_dense(n, &dense).unwrap()
    }

    #[test]
    fn diagonal_case_matches_scalar_formula() {
        let kd = [3.0, 1.0, 0.5, 0.1];
        let k = diagonal_operator(&kd);
        let m = SparseSymmetricMatrix::identity(4);
        let f = crate::cholesky::cholesky_factor(&m, 0.0).unwrap();
        let data = [1.0, -2.0, 0.5, 4.0];
        let beta = 0.3;
        let r = tikhonov_solve(&k, &data, beta, &m, &f).unwrap();
        let spectral = SpectralTikhonov::new(&k, &f).unwrap();
        let s = spectral.solve(&k, &m, &f, &spectral.project(&k, &f, &data).unwrap(), beta).unwrap();
        for j in 0..4 {
            let expect = kd[j] * data[j] / (kd[j] * kd[j] + beta);
            assert!((r.h.values()[j] - expect).abs() < 1e-10);
            assert!((s.h.values()[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_beta_drives_the_solution_to_zero() {
        let k = random_operator(30, 12, 1);
        let m = spd_mass(12);
        let f = crate::cholesky::cholesky_factor(&m, 0.0).unwrap();
        let data: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let beta = 1e12 * k.frobenius().powi(2);
        let r = tikhonov_solve(&k, &data, beta, &m, &f).unwrap();
        assert!(r.regularizer <= 1e-6 * norm2(&k.apply_transpose(&data)));
    }

    #[test]
    fn nonpositive_beta_is_rejected() {
        let k = diagonal_operator(&[1.0, 2.0]);
        let m = SparseSymmetricMatrix::identity(2);
        let f = crate::cholesky::cholesky_factor(&m, 0.0).unwrap();
        assert!(tikhonov_solve(&k, &[1.0, 1.0], 0.0, &m, &f).is_err());
        assert!(tikhonov_solve(&k, &[1.0, 1.0], -1.0, &m, &f).is_err());
    }

    #[test]
    fn spectral_and_cg_solutions_agree() {
        let k = random_operator(40, 15, 2);
        let m = spd_mass(15);
        let f = crate::cholesky::cholesky_factor(&m, 0.0).unwrap();
        let data: Vec<f64> = (0..40).map(|i| (0.3 * i as f64).cos()).collect();
        let spectral = SpectralTikhonov::new(&k, &f).unwrap();
        let projected = spectral.project(&k, &f, &data).unwrap();
        for beta in [1e-3, 0.1, 10.0] {
            let a = tikhonov_solve(&k, &data, beta, &m, &f).unwrap();
            let b = spectral.solve(&k, &m, &f, &projected, beta).unwrap();
            assert!(relative_m_error(&m, a.h.values(), b.h.values()) < 1e-8);
            assert!(a.normal_residual <= NORMAL_EQUATION_TOLERANCE);
        }
    }

    #[test]
    fn noiseless_diagonal_search_stops_at_the_lower_bound() {
        let kd: Vec<f64> = (0..10).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let k = diagonal_operator(&kd);
        let m = SparseSymmetricMatrix::identity(10);
        let f = crate::cholesky::cholesky_factor(&m, 0.0).unwrap();
        let h_true = NodalField::new((0..10).map(|i| 1.0 + 0.1 * i as f64).collect());
        let data = k.apply(h_true.values());
        let spectral = SpectralTikhonov::new(&k, &f).unwrap();
        let projected = spectral.project(&k, &f, &data).unwrap();
        let target = spectral.whiten(&f, h_true.values());
        let errors: Vec<f64> = (-8..=2).rev().map(|e| spectral.m_error(&projected, 10f64.powi(e), &target)).collect();
        assert!(errors.windows(2).all(|w| w[1] < w[0]));
        let search = optimal_beta_search(&spectral, &k, &m, &f, &data, &h_true).unwrap();
        assert!(search.at_lower_bound);
        assert_eq!(search.relative_beta, 1e-8);
        assert!(search.result.optimal);
    }

    #[test]
    fn noisy_search_finds_the_grid_minimum() {
        let k = random_operator(60, 20, 5);
        let m = spd_mass(20);
        let f = crate::cholesky::cholesky_factor(&m, 0.0).unwrap();
        let h_true = NodalField::new((0..20).map(|i| (0.4 * i as f64).sin()).collect());
        let mut data = k.apply(h_true.values());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scale = norm2(&data) / (data.len() as f64).sqrt();
        data.iter_mut().for_each(|v| *v += 0.3 * scale * rng.random_range(-1.0..1.0));
        let spectral = SpectralTikhonov::new(&k, &f).unwrap();
        let search = optimal_beta_search(&spectral, &k, &m, &f, &data, &h_true).unwrap();
        assert!(!search.at_lower_bound);
        let projected = spectral.project(&k, &f, &data).unwrap();
        let target = spectral.whiten(&f, h_true.values());
        let scan_best = (0..=2000)
            .map(|i| -8.0 + 10.0 * i as f64 / 2000.0)
            .map(|x| spectral.m_error(&projected, spectral.scale() * 10f64.powf(x), &target))
            .fold(f64::INFINITY, f64::min);
        let found = spectral.m_error(&projected, search.result.beta, &target);
        assert!(found <= scan_best * (1.0 + 1e-3), "{found} vs {scan_best}");
    }

    #[test]
    fn noise_raises_the_optimal_beta() {
        // Ill-posed: singular values decay to 1e-5.
        let kd: Vec<f64> = (0..20).map(|i| 10f64.powf(-(i as f64) / 4.0)).collect();
        let k = diagonal_operator(&kd);
        let m = spd_mass(20);
        let f = crate::cholesky::cholesky_factor(&m, 0.0).unwrap();
        let h_true = NodalField::new((0..20).map(|i| (0.25 * i as f64).cos()).collect());
        let clean = k.apply(h_true.values());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise: Vec<f64> = (0..clean.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scale = 1e-3 * norm2(&clean) / norm2(&noise);
        let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(c, e)| c + scale * e).collect();
        let spectral = SpectralTikhonov::new(&k, &f).unwrap();
        let a = optimal_beta_search(&spectral, &k, &m, &f, &clean, &h_true).unwrap();
        let b = optimal_beta_search(&spectral, &k, &m, &f, &noisy, &h_true).unwrap();
        assert!(b.result.beta > a.result.beta, "{} vs {}", b.result.beta, a.result.beta);
    }

    #[test]
    fn resolvent_norm_is_bounded_by_inverse_beta() {
        let k = random_operator(25, 10, 8);
        let m = spd_mass(10);
        let f = crate::cholesky::cholesky_factor(&m, 0.0).unwrap();
        for beta in [1e-4, 1e-1, 10.0] {
            // (KᵀK + βM)⁻¹ in the M inner product, symmetrized as Lᵀ(·)L.
            let apply = |v: &[f64]| {
                let rhs = f.apply_l(v);
                let opts = CgOptions { tol: 1e-12, max_iters: 1000, allow_early_stop: false };
                let x = pcg(
                    |x| {
                        let mut y = k.apply_transpose(&k.apply(x));
                        let mx = m.mul_vec(x);
                        y.iter_mut().zip(&mx).for_each(|(a, b)| *a += beta * b);
                        y
                    },
                    |r| f.solve(r),
                    &rhs,
                    opts,
                )
                .unwrap()
                .x;
                f.apply_lt(&x)
            };
            let top = largest_eigenvalue(apply, 10, 1e-12).unwrap();
            assert!(top <= (1.0 + 1e-6) / beta, "beta {beta}: {top}");
        }
    }

    #[test]
    fn golden_section_finds_a_parabola_minimum() {
        let (best, probes) = golden_section(|x| (x - 0.3).powi(2), -2.0, 2.0, 1e-4);
        assert!((best.log_beta - 0.3).abs() < 1e-4);
        assert!(probes.len() < 40);
    }
}
