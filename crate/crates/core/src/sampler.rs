//! Random structured sound speeds: two band-limited random fields, each cut
//! at a quantile over a control region, differenced into `s ∈ {−1, 0, 1}`.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{AetError, Result};
use crate::grid::CartesianGrid;
use crate::io::write_pgm;
use crate::wave::{SoundSpeedField, SpeedLabel, DEFAULT_SPEED_BOUND};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerParams {
    /// Spectral cutoff `f₀`.
    pub f0: f64,
    /// Half-width `ℓ` of the spectral grid `[−ℓ, ℓ]²`.
    pub ell: f64,
    /// Amplitude at `ξ = 0`.
    pub c0: f64,
    /// Amplitude of the power law.
    pub c1: f64,
    /// Grid side `N` (odd, so that `ξ = 0` is a grid point).
    pub n: usize,
    pub beta0: f64,
    pub beta1: f64,
    /// Target below-cut fraction over the control region.
    pub gamma_cut: f64,
    /// Control-region radius relative to the radius of Ω.
    pub u_radius_ratio: f64,
    /// Relative perturbation scale `μ`.
    pub mu: f64,
    pub seed: u64,
    /// Draw separate phases for the two exponents instead of sharing one draw.
    pub independent_phases: bool,
    /// Optional Gaussian smoothing width of `s`, in Ω units.
    pub mollifier_width: Option<f64>,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            f0: 20.0,
            ell: 25.0,
            c0: 0.5,
            c1: 1.0,
            n: 129,
            beta0: 3.3,
            beta1: 2.8,
            gamma_cut: 0.35,
            u_radius_ratio: 0.8,
            mu: 0.05,
            seed: 0,
            independent_phases: false,
            mollifier_width: None,
        }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AetError::InvalidInput(m));
        if !(self.gamma_cut > 0.0 && self.gamma_cut < 1.0) {
            return bad(format!("gamma_cut must lie in (0,1), got {}", self.gamma_cut));
        }
        if !(self.beta0 > self.beta1 && self.beta1 > 0.0) && self.beta0 != self.beta1 {
            return bad(format!("need beta0 > beta1 > 0, got {} and {}", self.beta0, self.beta1));
        }
        if !(self.ell > 0.0) || !(self.f0 > 0.0) || self.f0 >= self.ell * 2f64.sqrt() {
            return bad(format!("need 0 < f0 < ell·√2, got f0 = {}, ell = {}", self.f0, self.ell));
        }
        if self.n < 3 || self.n % 2 == 0 {
            return bad(format!("grid side must be odd and at least 3, got {}", self.n));
        }
        if !(self.u_radius_ratio > 0.0) || !(self.mu >= 0.0) {
            return bad("control radius must be positive and mu nonnegative".into());
        }
        if let Some(w) = self.mollifier_width {
            if !(w > 0.0) {
                return bad(format!("mollifier width must be positive, got {w}"));
            }
        }
        Ok(())
    }

    /// `ξ_j = ℓ(2j/(N−1) − 1)`, zero-based `j`.
    pub fn xi(&self, j: usize) -> f64 {
        self.ell * (2.0 * j as f64 / (self.n - 1) as f64 - 1.0)
    }
}

/// Uniform phases on `(−π, π]`, row-major `N×N`.
pub fn draw_phases(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n * n).map(|_| -rng.random_range(-PI..PI)).collect()
}

/// `q_jk = |F⁻¹ v|` with `v_jk = V_β(ξ_jk; θ_jk)`; the inverse transform carries `1/N²`.
pub fn spectral_field(params: &SamplerParams, beta: f64, phases: &[f64]) -> Result<Vec<f64>> {
    let n = params.n;
    if phases.len() != n * n {
        return Err(AetError::Shape(format!("{} phases for a {n}x{n} grid", phases.len())));
    }
    if let Some(t) = phases.iter().find(|t| !(**t > -PI && **t <= PI)) {
        return Err(AetError::InvalidInput(format!("phase {t} outside (−π, π]")));
    }
    let mut data: Vec<Complex<f64>> = Vec::with_capacity(n * n);
    for k in 0..n {
        for j in 0..n {
            let r = params.xi(j).hypot(params.xi(k));
            let v = if r == 0.0 || (j == n / 2 && k == n / 2) {
                Complex::new(params.c0, 0.0)
            } else if r < params.f0 {
                let th = phases[k * n + j];
                Complex::from_polar(params.c1 * r.powf(-beta / 2.0), -th)
            } else {
                Complex::new(0.0, 0.0)
            };
            data.push(v);
        }
    }
    // Centered layout: the shift to DFT order only modulates the output, so
    // magnitudes do not depend on it; shift anyway for a conventional transform.
    let mut shifted = vec![Complex::new(0.0, 0.0); n * n];
    let c = n / 2;
    for k in 0..n {
        for j in 0..n {
            shifted[((k + n - c) % n) * n + (j + n - c) % n] = data[k * n + j];
        }
    }
    fft2_inverse(&mut shifted, n);
    let scale = 1.0 / (n * n) as f64;
    Ok(shifted.iter().map(|z| z.norm() * scale).collect())
}

fn fft2_inverse(data: &mut [Complex<f64>], n: usize) {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(n);
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for j in 0..n {
        for k in 0..n {
            col[k] = data[k * n + j];
        }
        fft.process(&mut col);
        for k in 0..n {
            data[k * n + j] = col[k];
        }
    }
}

/// Forward 2D DFT (unnormalized), used for spectral diagnostics.
pub fn fft2_forward(values: &[f64], n: usize) -> Vec<Complex<f64>> {
    let mut data: Vec<Complex<f64>> = values.iter().map(|v| Complex::new(*v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for j in 0..n {
        for k in 0..n {
            col[k] = data[k * n + j];
        }
        fft.process(&mut col);
        for k in 0..n {
            data[k * n + j] = col[k];
        }
    }
    data
}

/// Cut height `r` minimizing `|γ − #{q_J < r}/|J||`; among minimizers the
/// smallest candidate value is taken.
pub fn quantile_cut(field: &[f64], region: &[usize], gamma_cut: f64) -> Result<f64> {
    if region.is_empty() {
        return Err(AetError::InvalidInput("quantile region is empty".into()));
    }
    let mut vals: Vec<f64> = region.iter().map(|&i| field[i]).collect();
    vals.sort_by(f64::total_cmp);
    let n = vals.len() as f64;
    let mut best = (f64::INFINITY, vals[0]);
    let mut i = 0;
    while i < vals.len() {
        // With r = vals[i], exactly `i` values lie strictly below.
        let err = (gamma_cut - i as f64 / n).abs();
        if err < best.0 {
            best = (err, vals[i]);
        }
        let v = vals[i];
        while i < vals.len() && vals[i] == v {
            i += 1;
        }
    }
    // Above the maximum every value counts.
    let top = vals[vals.len() - 1];
    if (gamma_cut - 1.0).abs() < best.0 {
        best = ((gamma_cut - 1.0).abs(), top + top.abs().max(1.0) * 1e-12);
    }
    Ok(best.1)
}

/// Indices `k·N + j` whose ξ-point lies in the control disk.
pub fn control_region(params: &SamplerParams, wave_half_width: f64, omega_radius: f64) -> Vec<usize> {
    let n = params.n;
    let radius_xi = params.u_radius_ratio * omega_radius * params.ell / wave_half_width;
    let mut out = Vec::new();
    for k in 0..n {
        for j in 0..n {
            if params.xi(j).hypot(params.xi(k)) < radius_xi {
                out.push(k * n + j);
            }
        }
    }
    out
}

/// `s_jk ∈ {−1, 0, 1}` on the ξ grid, mapped onto `[−L, L]²` by scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureField {
    n: usize,
    ell: f64,
    values: Vec<f64>,
    /// Below-cut fractions achieved over the control region for the two exponents.
    pub achieved_fractions: [f64; 2],
    pub region_size: usize,
}

impl StructureField {
    pub fn new(n: usize, ell: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(AetError::Shape(format!("{} structure values for {n}x{n}", values.len())));
        }
        Ok(Self {
            n,
            ell,
            values,
            achieved_fractions: [f64::NAN; 2],
            region_size: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bilinear interpolant at a wave-grid point `(x, y) ∈ [−L, L]²`.
    pub fn evaluate(&self, x: f64, y: f64, wave_half_width: f64) -> f64 {
        let n = self.n;
        let to_index = |v: f64| {
            let xi = v * self.ell / wave_half_width;
            ((xi + self.ell) / (2.0 * self.ell) * (n - 1) as f64).clamp(0.0, (n - 1) as f64)
        };
        let (fx, fy) = (to_index(x), to_index(y));
        let ix = (fx.floor() as usize).min(n - 2);
        let iy = (fy.floor() as usize).min(n - 2);
        let (tx, ty) = (fx - ix as f64, fy - iy as f64);
        let v = |j: usize, k: usize| self.values[k * n + j];
        (1.0 - tx) * (1.0 - ty) * v(ix, iy)
            + tx * (1.0 - ty) * v(ix + 1, iy)
            + (1.0 - tx) * ty * v(ix, iy + 1)
            + tx * ty * v(ix + 1, iy + 1)
    }

    /// Gaussian smoothing with standard deviation `width` (in wave-grid units).
    pub fn mollified(&self, width: f64, wave_half_width: f64) -> Self {
        let n = self.n;
        let h = 2.0 * wave_half_width / (n - 1) as f64;
        let s = width / h;
        let radius = (4.0 * s).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius).map(|d| (-(d * d) as f64 / (2.0 * s * s)).exp()).collect();
        let pass = |src: &[f64], horizontal: bool| {
            let mut out = vec![0.0; n * n];
            for k in 0..n {
                for j in 0..n {
                    let (mut acc, mut wsum) = (0.0, 0.0);
                    for (o, w) in kernel.iter().enumerate() {
                        let d = o as isize - radius;
                        let (jj, kk) = if horizontal { (j as isize + d, k as isize) } else { (j as isize, k as isize + d) };
                        if jj >= 0 && kk >= 0 && (jj as usize) < n && (kk as usize) < n {
                            acc += w * src[kk as usize * n + jj as usize];
                            wsum += w;
                        }
                    }
                    out[k * n + j] = acc / wsum;
                }
            }
            out
        };
        let values = pass(&pass(&self.values, true), false);
        Self {
            values,
            ..self.clone()
        }
    }

    /// Grayscale image with `−1 ↦ 0`, `1 ↦ 255`, top row = largest `y`.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let n = self.n;
        let flipped: Vec<f64> = (0..n).rev().flat_map(|k| self.values[k * n..(k + 1) * n].to_vec()).collect();
        write_pgm(path, n, n, &flipped, -1.0, 1.0)
    }
}

/// One realization of `s` for the wave grid half-width `L` and Ω radius.
pub fn sample_structure(params: &SamplerParams, wave_half_width: f64, omega_radius: f64) -> Result<StructureField> {
    params.validate()?;
    let n = params.n;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let theta0 = draw_phases(n, &mut rng);
    let theta1 = if params.independent_phases {
        draw_phases(n, &mut rng)
    } else {
        theta0.clone()
    };
    let region = control_region(params, wave_half_width, omega_radius);
    let threshold = |beta: f64, phases: &[f64]| -> Result<(Vec<f64>, f64)> {
        let q = spectral_field(params, beta, phases)?;
        let r = quantile_cut(&q, &region, params.gamma_cut)?;
        let below = region.iter().filter(|&&i| q[i] < r).count() as f64 / region.len() as f64;
        Ok((q.iter().map(|v| if *v < r { 1.0 } else { 0.0 }).collect(), below))
    };
    let (q0, f0) = threshold(params.beta0, &theta0)?;
    let (q1, f1) = threshold(params.beta1, &theta1)?;
    let mut s = StructureField::new(n, params.ell, q0.iter().zip(&q1).map(|(a, b)| a - b).collect())?;
    s.achieved_fractions = [f0, f1];
    s.region_size = region.len();
    if let Some(w) = params.mollifier_width {
        s = s.mollified(w, wave_half_width);
    }
    Ok(s)
}

/// Disk-shaped inclusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Disk {
    /// `D = B_{1/4}((0, 3/8))`.
    pub const INCLUSION: Disk = Disk {
        center: [0.0, 0.375],
        radius: 0.25,
    };

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.center[0]).hypot(y - self.center[1]) < self.radius
    }
}

/// Background and inclusion speeds relative to the background.
pub const C_BACKGROUND: f64 = 1.0;
pub const C_INCLUSION: f64 = 1.10;

/// `c(x) = (c_bg + χ_D(x)(c_incl − c_bg))(1 + μ s(x))` on the wave grid.
pub fn build_sound_speed(
    structure: Option<&StructureField>,
    inclusion: Disk,
    c_bg: f64,
    c_incl: f64,
    mu: f64,
    grid: &CartesianGrid,
) -> Result<SoundSpeedField> {
    if !(c_bg > 0.0 && c_incl > 0.0) {
        return Err(AetError::InvalidInput(format!("speeds must be positive, got {c_bg} and {c_incl}")));
    }
    let l = grid.half_width();
    let values = grid.sample(|x, y| {
        let base = if inclusion.contains(x, y) { c_incl } else { c_bg };
        let s = structure.map_or(0.0, |s| s.evaluate(x, y, l));
        base * (1.0 + mu * s)
    });
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(AetError::InvalidInput(format!("sound speed {v} at grid index {i} is not positive")));
    }
    SoundSpeedField::new(grid, values, DEFAULT_SPEED_BOUND, SpeedLabel::True)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> SamplerParams {
        SamplerParams {
            n,
            ..Default::default()
        }
    }

    #[test]
    fn delta_spectrum_gives_constant_field() {
        let p = SamplerParams { c1: 0.0, ..small(33) };
        let q = spectral_field(&p, 3.0, &vec![0.0; 33 * 33]).unwrap();
        let expect = 0.5 / (33.0 * 33.0);
        assert!(q.iter().all(|v| (v - expect).abs() < 1e-15));
    }

    #[test]
    fn quantile_examples() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_cut(&v, &[0, 1, 2, 3], 0.5).unwrap(), 3.0);
        assert!(quantile_cut(&v, &[0, 1, 2, 3], 0.0).unwrap() <= 1.0);
        assert!(quantile_cut(&v, &[], 0.5).is_err());
        let r = quantile_cut(&v, &[0, 1, 2, 3], 1.0).unwrap();
        assert!(r > 4.0);
        // Ties among the data.
        let t = [1.0, 1.0, 1.0, 2.0];
        assert_eq!(quantile_cut(&t, &[0, 1, 2, 3], 0.5).unwrap(), 2.0);
    }

    #[test]
    fn equal_exponents_give_zero_structure() {
        let p = SamplerParams {
            beta0: 3.0,
            beta1: 3.0,
            ..small(65)
        };
        let s = sample_structure(&p, 1.6, 1.0).unwrap();
        assert!(s.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn structure_takes_three_values_and_is_deterministic() {
        let p = SamplerParams { seed: 11, ..small(65) };
        let a = sample_structure(&p, 1.6, 1.0).unwrap();
        let b = sample_structure(&p, 1.6, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|v| [-1.0, 0.0, 1.0].contains(v)));
        assert!(a.values().iter().any(|v| *v != 0.0));
        let c = sample_structure(&SamplerParams { seed: 12, ..p }, 1.6, 1.0).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn sound_speed_formula() {
        let grid = CartesianGrid::new(1.6, 1.1, 65).unwrap();
        let c = build_sound_speed(None, Disk::INCLUSION, 1.0, 1.1, 0.0, &grid).unwrap();
        let at = |x: f64, y: f64| grid.interpolate(c.values(), x, y).unwrap();
        assert_eq!(at(-0.8, -0.8), 1.0);
        assert!((at(0.0, 0.375) - 1.1).abs() < 1e-12);
        let minus = StructureField::new(5, 25.0, vec![-1.0; 25]).unwrap();
        let c = build_sound_speed(Some(&minus), Disk::INCLUSION, 1.0, 1.1, 0.05, &grid).unwrap();
        assert!((at_field(&grid, &c, -0.8, -0.8) - 0.95).abs() < 1e-12);
        assert!(build_sound_speed(Some(&minus), Disk::INCLUSION, 1.0, 1.1, 1.0, &grid).is_err());
    }

    fn at_field(grid: &CartesianGrid, c: &SoundSpeedField, x: f64, y: f64) -> f64 {
        grid.interpolate(c.values(), x, y).unwrap()
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(SamplerParams { gamma_cut: 1.0, ..small(33) }.validate().is_err());
        assert!(SamplerParams { n: 32, ..small(33) }.validate().is_err());
        assert!(SamplerParams { f0: 40.0, ..small(33) }.validate().is_err());
        assert!(SamplerParams { beta0: 2.0, ..small(33) }.validate().is_err());
        assert!(small(33).validate().is_ok());
    }
}
