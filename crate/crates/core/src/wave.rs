//! Explicit leapfrog solver for `p_tt − c²Δp = S` on a Cartesian grid,
//! sampled onto mesh nodes at uniform times. Outgoing waves leave through a
//! first-order one-way condition on the outer edge; an optional quadratic
//! damping sponge acts outside `[−L′, L′]²`.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{AetError, Result};
use crate::grid::{CartesianGrid, GridToMesh};
use crate::io::{header_value, parse_header, read_binary, write_binary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedLabel {
    True,
    Assumed,
}

/// Sound speed on the wave grid, constrained to `[λ, 1/λ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundSpeedField {
    points: usize,
    half_width: f64,
    values: Vec<f64>,
    lower_bound: f64,
    label: SpeedLabel,
}

/// Default admissibility bound `λ`: speeds must lie in `[0.5, 2]`.
pub const DEFAULT_SPEED_BOUND: f64 = 0.5;

impl SoundSpeedField {
    pub fn new(grid: &CartesianGrid, values: Vec<f64>, lower_bound: f64, label: SpeedLabel) -> Result<Self> {
        Self::from_parts(grid.points(), grid.half_width(), values, lower_bound, label)
    }

    pub fn constant(grid: &CartesianGrid, c: f64, label: SpeedLabel) -> Result<Self> {
        Self::new(grid, vec![c; grid.len()], DEFAULT_SPEED_BOUND, label)
    }

    fn from_parts(points: usize, half_width: f64, values: Vec<f64>, lower_bound: f64, label: SpeedLabel) -> Result<Self> {
        if !(lower_bound > 0.0 && lower_bound < 1.0) {
            return Err(AetError::InvalidInput(format!("speed bound must be in (0,1), got {lower_bound}")));
        }
        if values.len() != points * points {
            return Err(AetError::Shape(format!(
                "{} speed values for a {points}x{points} grid",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v >= lower_bound && v <= 1.0 / lower_bound))
        {
            return Err(AetError::InvalidInput(format!(
                "sound speed {v} at grid index {i} outside the admissible range [{lower_bound}, {}]",
                1.0 / lower_bound
            )));
        }
        Ok(Self {
            points,
            half_width,
            values,
            lower_bound,
            label,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn label(&self) -> SpeedLabel {
        self.label
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn matches(&self, grid: &CartesianGrid) -> bool {
        self.points == grid.points() && (self.half_width - grid.half_width()).abs() < 1e-12
    }

    /// Grid-L² distance `h·‖c₁ − c₂‖₂` (proxy for `‖c̃ − c‖_{L²}`).
    pub fn distance(&self, other: &Self) -> Result<f64> {
        if self.points != other.points || self.half_width != other.half_width {
            return Err(AetError::Shape("sound speeds live on different grids".into()));
        }
        let h = 2.0 * self.half_width / (self.points - 1) as f64;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        Ok(h * s.sqrt())
    }

    /// Copy with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64, label: SpeedLabel) -> Result<Self> {
        Self::from_parts(
            self.points,
            self.half_width,
            self.values.iter().map(|v| v * factor).collect(),
            self.lower_bound,
            label,
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_binary(
            path,
            &format!("c N={} L={}", self.points, self.half_width),
            &self.values,
        )
    }

    pub fn read(path: &Path, label: SpeedLabel) -> Result<Self> {
        let (header, values) = read_binary(path)?;
        let map = parse_header(path, &header, "c")?;
        let n: usize = header_value(path, &map, "N")?;
        let l: f64 = header_value(path, &map, "L")?;
        Self::from_parts(n, l, values, DEFAULT_SPEED_BOUND, label)
    }
}

/// Transducer layout and pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    /// Number of transducer positions, uniformly spaced in angle.
    pub count: usize,
    /// Angular span of each transducer along the circle.
    pub arc_degrees: f64,
    /// Point sources per transducer, fired in phase.
    pub points_per_transducer: usize,
    /// Radius of the circle carrying the transducers.
    pub radius: f64,
    /// Center frequency of the pulse (wavelength `c/frequency`).
    pub frequency: f64,
    /// Amplitude of the whole transducer (split over its point sources).
    pub amplitude: f64,
    /// Angle of transducer 0, radians.
    pub angle_offset: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            count: 36,
            arc_degrees: 10.0,
            points_per_transducer: 9,
            radius: 1.0,
            frequency: 5.0,
            amplitude: DEFAULT_AMPLITUDE,
            angle_offset: 0.0,
        }
    }
}

/// Transducer amplitude giving peak pressures of order one inside the unit disk.
pub const DEFAULT_AMPLITUDE: f64 = 10.0;

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || self.points_per_transducer == 0 {
            return Err(AetError::InvalidInput("source count and points per transducer must be positive".into()));
        }
        if !(self.frequency > 0.0) || !(self.radius > 0.0) || !(self.arc_degrees >= 0.0) {
            return Err(AetError::InvalidInput("source frequency, radius and arc must be positive".into()));
        }
        Ok(())
    }

    /// Center angle of transducer `index`.
    pub fn angle(&self, index: usize) -> f64 {
        self.angle_offset + 2.0 * PI * index as f64 / self.count as f64
    }

    /// Point-source positions of transducer `index`.
    pub fn points(&self, index: usize) -> Vec<[f64; 2]> {
        let center = self.angle(index);
        let span = self.arc_degrees.to_radians();
        let k = self.points_per_transducer;
        (0..k)
            .map(|j| {
                let a = if k == 1 {
                    center
                } else {
                    center + span * (j as f64 / (k - 1) as f64 - 0.5)
                };
                [self.radius * a.cos(), self.radius * a.sin()]
            })
            .collect()
    }

    /// Single-cycle sine burst under a Hann window, supported on `[0, 1/frequency]`.
    pub fn pulse(&self, t: f64) -> f64 {
        let duration = 1.0 / self.frequency;
        if !(0.0..=duration).contains(&t) {
            return 0.0;
        }
        let phase = 2.0 * PI * self.frequency * t;
        self.amplitude * phase.sin() * 0.5 * (1.0 - phase.cos())
    }

    pub fn pulse_duration(&self) -> f64 {
        1.0 / self.frequency
    }
}

/// Time stepping and absorbing-layer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveSettings {
    /// Solver time step.
    pub dt: f64,
    /// Solver steps between recorded samples.
    pub stride: usize,
    /// Index of the last recorded sample (`records + 1` samples in total).
    pub records: usize,
    /// Peak damping rate at the outer edge of the sponge.
    pub damping: f64,
}

/// Default peak damping rate of the sponge layer. The one-way outer boundary
/// alone keeps late interior energy near the free-space level; any positive
/// sponge rate at width 0.5 raises it.
pub const DEFAULT_DAMPING: f64 = 0.0;

/// The leapfrog stability bound used as the admissible step, `0.5·h/(√2·max c)`.
pub fn stable_dt(grid: &CartesianGrid, c_max: f64) -> f64 {
    0.5 * grid.spacing() / (2f64.sqrt() * c_max)
}

/// Default final time `3·(2L′)/min c`.
pub fn default_final_time(grid: &CartesianGrid, c_min: f64) -> f64 {
    3.0 * 2.0 * grid.inner_half_width() / c_min
}

impl WaveSettings {
    /// `records` uniform samples over `[0, t_final]` with the largest stable solver step.
    pub fn new(grid: &CartesianGrid, c_max: f64, t_final: f64, records: usize) -> Result<Self> {
        if !(t_final > 0.0) || records == 0 {
            return Err(AetError::InvalidInput(format!(
                "need T > 0 and at least one record, got T = {t_final}, records = {records}"
            )));
        }
        let dt_record = t_final / records as f64;
        let stride = (dt_record / stable_dt(grid, c_max)).ceil().max(1.0) as usize;
        Ok(Self {
            dt: dt_record / stride as f64,
            stride,
            records,
            damping: DEFAULT_DAMPING,
        })
    }

    pub fn record_dt(&self) -> f64 {
        self.dt * self.stride as f64
    }

    pub fn final_time(&self) -> f64 {
        self.record_dt() * self.records as f64
    }
}

/// Nodal pressure at uniform times `t_i = i·Δt`, `i = 0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveRecord {
    source: usize,
    dt: f64,
    nodes: usize,
    values: Vec<f64>,
}

impl WaveRecord {
    pub fn new(source: usize, dt: f64, nodes: usize, values: Vec<f64>) -> Result<Self> {
        if nodes == 0 || values.len() % nodes != 0 || values.is_empty() {
            return Err(AetError::Shape(format!(
                "{} values do not form whole rows of {nodes} nodes",
                values.len()
            )));
        }
        Ok(Self {
            source,
            dt,
            nodes,
            values,
        })
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    /// Number of samples, `m + 1`.
    pub fn samples(&self) -> usize {
        self.values.len() / self.nodes
    }

    pub fn final_time(&self) -> f64 {
        self.dt * (self.samples() - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.dt * i as f64
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.nodes..(i + 1) * self.nodes]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn same_discretization(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.samples() == other.samples()
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt.abs().max(other.dt.abs())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_binary(
            path,
            &format!(
                "wave m={} n={} dt={} src={}",
                self.samples() - 1,
                self.nodes,
                self.dt,
                self.source
            ),
            &self.values,
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (header, values) = read_binary(path)?;
        let map = parse_header(path, &header, "wave")?;
        let m: usize = header_value(path, &map, "m")?;
        let n: usize = header_value(path, &map, "n")?;
        let dt: f64 = header_value(path, &map, "dt")?;
        let src: usize = header_value(path, &map, "src")?;
        if values.len() != (m + 1) * n {
            return Err(AetError::Format {
                path: path.to_path_buf(),
                msg: format!("expected {} values, found {}", (m + 1) * n, values.len()),
            });
        }
        Self::new(src, dt, n, values)
    }
}

/// Per-grid-point damping rate: zero inside `[−L′, L′]²`, quadratic in the
/// penetration depth into the layer.
pub fn damping_profile(grid: &CartesianGrid, peak: f64) -> Vec<f64> {
    let width = grid.half_width() - grid.inner_half_width();
    let inner = grid.inner_half_width();
    grid.sample(|x, y| {
        let dx = (x.abs() - inner).max(0.0) / width;
        let dy = (y.abs() - inner).max(0.0) / width;
        peak * (dx * dx + dy * dy)
    })
}

/// Runs one transducer and samples `p` through `to_mesh` at every recorded time.
pub fn simulate_wave(
    grid: &CartesianGrid,
    c: &SoundSpeedField,
    sources: &SourceConfig,
    source_index: usize,
    settings: &WaveSettings,
    to_mesh: &GridToMesh,
) -> Result<WaveRecord> {
    simulate_wave_with(grid, c, sources, source_index, settings, |p, out| {
        out.resize(0, 0.0);
        out.extend(to_mesh.apply(p));
    })
}

/// Leapfrog core; `sample` receives the full grid field at each recorded time
/// and pushes the values to keep.
pub fn simulate_wave_with<F>(
    grid: &CartesianGrid,
    c: &SoundSpeedField,
    sources: &SourceConfig,
    source_index: usize,
    settings: &WaveSettings,
    mut sample: F,
) -> Result<WaveRecord>
where
    F: FnMut(&[f64], &mut Vec<f64>),
{
    sources.validate()?;
    if !c.matches(grid) {
        return Err(AetError::Shape("sound speed grid does not match the wave grid".into()));
    }
    if source_index >= sources.count {
        return Err(AetError::InvalidInput(format!(
            "source index {source_index} out of range for {} transducers",
            sources.count
        )));
    }
    let bound = stable_dt(grid, c.max());
    if !(settings.dt > 0.0) || settings.dt > bound * (1.0 + 1e-12) {
        return Err(AetError::Cfl { dt: settings.dt, bound });
    }
    if settings.stride == 0 || settings.records == 0 {
        return Err(AetError::InvalidInput("stride and record count must be positive".into()));
    }
    let n = grid.points();
    let h = grid.spacing();
    let dt = settings.dt;
    let injections: Vec<([usize; 4], [f64; 4])> = sources
        .points(source_index)
        .into_iter()
        .map(|[x, y]| grid.stencil(x, y))
        .collect::<Result<_>>()?;
    let point_weight = dt * dt / (h * h * injections.len() as f64);
    let courant: Vec<f64> = c.values().iter().map(|v| v * v * dt * dt / (h * h)).collect();
    let alpha = damping_profile(grid, settings.damping);
    let inv_denominator: Vec<f64> = alpha.iter().map(|a| 1.0 / (1.0 + a * dt)).collect();
    let lag: Vec<f64> = alpha.iter().map(|a| 1.0 - a * dt).collect();

    let mur: Vec<f64> = c
        .values()
        .iter()
        .map(|v| (v * dt - h) / (v * dt + h))
        .collect();
    let mut prev = vec![0.0; grid.len()];
    let mut cur = vec![0.0; grid.len()];
    let mut next = vec![0.0; grid.len()];
    let mut out = Vec::new();
    let mut buf = Vec::new();
    sample(&cur, &mut buf);
    let nodes = buf.len();
    out.extend_from_slice(&buf);
    let total_steps = settings.stride * settings.records;
    for step in 0..total_steps {
        let t = step as f64 * dt;
        for iy in 1..n - 1 {
            let row = iy * n;
            for ix in 1..n - 1 {
                let k = row + ix;
                let lap = cur[k - 1] + cur[k + 1] + cur[k - n] + cur[k + n] - 4.0 * cur[k];
                next[k] = (2.0 * cur[k] - lag[k] * prev[k] + courant[k] * lap) * inv_denominator[k];
            }
        }
        let s = sources.pulse(t);
        if s != 0.0 {
            for (idx, w) in &injections {
                for q in 0..4 {
                    next[idx[q]] += w[q] * s * point_weight * inv_denominator[idx[q]];
                }
            }
        }
        mur_edges(&mut next, &cur, n, &mur);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        if (step + 1) % settings.stride == 0 {
            sample(&cur, &mut buf);
            out.extend_from_slice(&buf);
        }
    }
    WaveRecord::new(source_index, settings.record_dt(), nodes, out)
}

/// First-order one-way condition `p_t + c ∂_ν p = 0` on the outer edges,
/// given the interior update of `next` and the previous level `cur`.
fn mur_edges(next: &mut [f64], cur: &[f64], n: usize, coef: &[f64]) {
    for i in 1..n - 1 {
        for (b, inner) in [
            (i, i + n),
            (i + (n - 1) * n, i + (n - 2) * n),
            (i * n, i * n + 1),
            (i * n + n - 1, i * n + n - 2),
        ] {
            next[b] = cur[inner] + coef[b] * (next[inner] - cur[b]);
        }
    }
    for (corner, a, b) in [
        (0, 1, n),
        (n - 1, n - 2, 2 * n - 1),
        ((n - 1) * n, (n - 2) * n, (n - 1) * n + 1),
        (n * n - 1, n * n - 2, (n - 1) * n - 1),
    ] {
        next[corner] = 0.5 * (next[a] + next[b]);
    }
}

/// `sup_t ‖p̃(·,t) − p(·,t)‖₂` over nodal values.
pub fn wave_discrepancy(p_true: &WaveRecord, p_assumed: &WaveRecord) -> Result<f64> {
    if !p_true.same_discretization(p_assumed) {
        return Err(AetError::Shape("wave records have different discretizations".into()));
    }
    Ok((0..p_true.samples())
        .map(|i| {
            p_true
                .row(i)
                .iter()
                .zip(p_assumed.row(i))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_setup(points: usize) -> (CartesianGrid, SoundSpeedField) {
        let grid = CartesianGrid::new(1.6, 1.1, points).unwrap();
        let c = SoundSpeedField::constant(&grid, 1.0, SpeedLabel::True).unwrap();
        (grid, c)
    }

    /// Records the full grid at each sample.
    fn full_grid(p: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(p);
    }

    #[test]
    fn zero_pulse_gives_zero_record() {
        let (grid, c) = small_setup(41);
        let src = SourceConfig {
            amplitude: 0.0,
            count: 4,
            ..Default::default()
        };
        let settings = WaveSettings::new(&grid, 1.0, 1.0, 10).unwrap();
        let rec = simulate_wave_with(&grid, &c, &src, 1, &settings, full_grid).unwrap();
        assert_eq!(rec.samples(), 11);
        assert!(rec.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_initial_data_and_uniform_times() {
        let (grid, c) = small_setup(41);
        let src = SourceConfig { count: 4, ..Default::default() };
        let settings = WaveSettings::new(&grid, 1.0, 2.0, 20).unwrap();
        let rec = simulate_wave_with(&grid, &c, &src, 0, &settings, full_grid).unwrap();
        assert!(rec.row(0).iter().all(|v| *v == 0.0));
        assert!((rec.final_time() - 2.0).abs() < 1e-12);
        assert!((rec.time(7) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let (grid, c) = small_setup(41);
        let src = SourceConfig { count: 4, ..Default::default() };
        let mut settings = WaveSettings::new(&grid, 1.0, 1.0, 10).unwrap();
        settings.dt = 1.01 * stable_dt(&grid, 1.0);
        assert!(matches!(
            simulate_wave_with(&grid, &c, &src, 0, &settings, full_grid),
            Err(AetError::Cfl { .. })
        ));
    }

    #[test]
    fn source_outside_grid_is_rejected() {
        let (grid, c) = small_setup(41);
        let src = SourceConfig {
            count: 4,
            radius: 2.0,
            ..Default::default()
        };
        let settings = WaveSettings::new(&grid, 1.0, 1.0, 10).unwrap();
        assert!(matches!(
            simulate_wave_with(&grid, &c, &src, 0, &settings, full_grid),
            Err(AetError::OutsideGrid { .. })
        ));
    }

    #[test]
    fn linear_in_source_amplitude() {
        let (grid, c) = small_setup(61);
        let base = SourceConfig { count: 6, ..Default::default() };
        let scaled = SourceConfig {
            amplitude: base.amplitude * 2.5,
            ..base.clone()
        };
        let settings = WaveSettings::new(&grid, 1.0, 1.5, 15).unwrap();
        let a = simulate_wave_with(&grid, &c, &base, 2, &settings, full_grid).unwrap();
        let b = simulate_wave_with(&grid, &c, &scaled, 2, &settings, full_grid).unwrap();
        let peak = a.max_abs();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((2.5 * x - y).abs() <= 1e-10 * 2.5 * peak);
        }
    }

    #[test]
    fn discrepancy_is_symmetric_and_zero_on_self() {
        let r1 = WaveRecord::new(0, 0.1, 2, vec![0.0, 0.0, 1.0, 2.0, 0.5, 0.5]).unwrap();
        let r2 = WaveRecord::new(0, 0.1, 2, vec![0.0, 0.0, 1.0, 1.0, 0.5, 2.5]).unwrap();
        assert_eq!(wave_discrepancy(&r1, &r1).unwrap(), 0.0);
        assert_eq!(wave_discrepancy(&r1, &r2).unwrap(), wave_discrepancy(&r2, &r1).unwrap());
        assert!((wave_discrepancy(&r1, &r2).unwrap() - 2.0).abs() < 1e-15);
        let r3 = WaveRecord::new(0, 0.2, 2, vec![0.0; 6]).unwrap();
        assert!(wave_discrepancy(&r1, &r3).is_err());
    }

    #[test]
    fn speed_field_admissibility() {
        let grid = CartesianGrid::new(1.6, 1.1, 11).unwrap();
        assert!(SoundSpeedField::constant(&grid, 0.4, SpeedLabel::True).is_err());
        assert!(SoundSpeedField::constant(&grid, 2.1, SpeedLabel::True).is_err());
        assert!(SoundSpeedField::new(&grid, vec![1.0; 5], 0.5, SpeedLabel::True).is_err());
        let c = SoundSpeedField::constant(&grid, 1.0, SpeedLabel::Assumed).unwrap();
        let c2 = c.scaled(1.1, SpeedLabel::True).unwrap();
        let expect = grid.spacing() * 0.1 * (grid.len() as f64).sqrt();
        assert!((c.distance(&c2).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn record_file_round_trip() {
        let rec = WaveRecord::new(3, 0.25, 2, vec![0.0, 0.0, 1.5, -2.0]).unwrap();
        let dir = std::env::temp_dir().join(format!("aet-wave-{}", std::process::id()));
        let path = dir.join("w.bin");
        rec.write(&path).unwrap();
        assert_eq!(WaveRecord::read(&path).unwrap(), rec);
        let _ = std::fs::remove_dir_all(dir);
    }
}
