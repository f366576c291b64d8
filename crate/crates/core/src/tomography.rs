//! Characteristic-function readout, Wigner reconstruction and joint quadrature distributions.
//!
//! Readout grids are indexed by the SDF displacement β; the sampled value is χ(2β).
//! Single-mode grids cover the complex β plane (axis1 = Re β, axis2 = Im β).
//! Two-mode grids cover real (β₁, β₂) with arguments χ(2iβ₁e^{iφ₁}, 2iβ₂e^{iφ₂}).

use std::f64::consts::PI;
use std::fmt::Write as _;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, partial_trace, QuantumState, Subsystem, Warned};
use crate::linalg::{CMat, C64, I, ZERO};

/// Periodic sample axis: `coord(k) = min + k·(max − min)/points`, endpoint excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        let a = Axis { min, max, points };
        a.validate()?;
        Ok(a)
    }

    /// Symmetric axis with the origin at index `points/2`.
    pub fn centered(half_width: f64, points: usize) -> Result<Self> {
        Self::new(-half_width, half_width, points)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(Error::InvalidArgument(format!(
                "axis needs finite min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.points < 8 || !self.points.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "axis needs an even point count >= 8, got {}",
                self.points
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / self.points as f64
    }

    pub fn coord(&self, k: usize) -> f64 {
        self.min + k as f64 * self.step()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.coord(k)).collect()
    }

    /// Index closest to `x`, clamped to the axis.
    pub fn nearest(&self, x: f64) -> usize {
        let k = ((x - self.min) / self.step()).round();
        k.clamp(0.0, (self.points - 1) as f64) as usize
    }
}

trait FiniteValue {
    fn finite(&self) -> bool;
}

impl FiniteValue for f64 {
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

impl FiniteValue for C64 {
    fn finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Sampled surface; `values[[i, j]]` sits at `(axis1.coord(i), axis2.coord(j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D<T = f64> {
    pub axis1: Axis,
    pub axis2: Axis,
    pub values: Array2<T>,
}

#[allow(private_bounds)]
impl<T: FiniteValue> Grid2D<T> {
    pub fn new(axis1: Axis, axis2: Axis, values: Array2<T>) -> Result<Self> {
        axis1.validate()?;
        axis2.validate()?;
        if values.dim() != (axis1.points, axis2.points) {
            return Err(Error::InvalidDimension(format!(
                "grid values {:?} do not match axes ({}, {})",
                values.dim(),
                axis1.points,
                axis2.points
            )));
        }
        if !values.iter().all(|v| v.finite()) {
            return Err(Error::Numerical("grid contains non-finite values".into()));
        }
        Ok(Grid2D {
            axis1,
            axis2,
            values,
        })
    }
}

impl<T> Grid2D<T> {
    pub fn cell_area(&self) -> f64 {
        self.axis1.step() * self.axis2.step()
    }

    /// Indices on the outermost ring.
    fn ring(&self) -> impl Iterator<Item = (usize, usize)> {
        let (p1, p2) = (self.axis1.points, self.axis2.points);
        (0..p1)
            .flat_map(move |i| (0..p2).map(move |j| (i, j)))
            .filter(move |&(i, j)| i == 0 || j == 0 || i == p1 - 1 || j == p2 - 1)
    }

    fn csv_header(&self, names: [&str; 3], units: [&str; 3]) -> String {
        let mut s = String::new();
        for (tag, name, unit, a) in [
            ("axis1", names[0], units[0], &self.axis1),
            ("axis2", names[1], units[1], &self.axis2),
        ] {
            let _ = writeln!(
                s,
                "# {tag}: {name} min={} max={} points={} step={} unit={unit}",
                a.min,
                a.max,
                a.points,
                a.step()
            );
        }
        let _ = writeln!(s, "# values: {} unit={}", names[2], units[2]);
        s
    }
}

impl Grid2D<f64> {
    pub fn integral(&self) -> f64 {
        self.values.sum() * self.cell_area()
    }

    pub fn max_abs_diff(&self, other: &Grid2D<f64>) -> Result<f64> {
        if self.values.dim() != other.values.dim() {
            return Err(Error::InvalidDimension("grid shapes differ".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Coordinates of the largest value.
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = (0, 0);
        let mut v = f64::NEG_INFINITY;
        for ((i, j), &x) in self.values.indexed_iter() {
            if x > v {
                v = x;
                best = (i, j);
            }
        }
        (self.axis1.coord(best.0), self.axis2.coord(best.1))
    }

    /// Density integrated over the other axis; `axis` is 0 or 1.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        match axis {
            0 => self
                .values
                .rows()
                .into_iter()
                .map(|r| r.sum() * self.axis2.step())
                .collect(),
            _ => self
                .values
                .columns()
                .into_iter()
                .map(|c| c.sum() * self.axis1.step())
                .collect(),
        }
    }

    pub fn to_csv(&self, names: [&str; 3], units: [&str; 3]) -> String {
        let mut s = self.csv_header(names, units);
        let _ = writeln!(s, "{},{},{}", names[0], names[1], names[2]);
        for ((i, j), v) in self.values.indexed_iter() {
            let _ = writeln!(s, "{},{},{}", self.axis1.coord(i), self.axis2.coord(j), v);
        }
        s
    }
}

impl Grid2D<C64> {
    pub fn to_csv(&self, names: [&str; 3], units: [&str; 3]) -> String {
        let mut s = self.csv_header(names, units);
        let _ = writeln!(s, "{},{},re,im", names[0], names[1]);
        for ((i, j), v) in self.values.indexed_iter() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                self.axis1.coord(i),
                self.axis2.coord(j),
                v.re,
                v.im
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutSettings {
    pub beta_max: f64,
    pub points: usize,
    /// Shots per grid point and per quadrature of χ; 0 means exact.
    pub shots: u64,
    pub zero_pad_factor: usize,
    pub phi1: f64,
    pub phi2: f64,
}

impl Default for ReadoutSettings {
    fn default() -> Self {
        ReadoutSettings {
            beta_max: 3.0,
            points: 32,
            shots: 200,
            zero_pad_factor: 4,
            phi1: 0.0,
            phi2: 0.0,
        }
    }
}

impl ReadoutSettings {
    pub fn exact() -> Self {
        ReadoutSettings {
            shots: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_max > 0.0 && self.beta_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta_max must be > 0, got {}",
                self.beta_max
            )));
        }
        if self.zero_pad_factor < 1 {
            return Err(Error::InvalidArgument(
                "zero_pad_factor must be >= 1".into(),
            ));
        }
        if !(self.phi1.is_finite() && self.phi2.is_finite()) {
            return Err(Error::InvalidArgument(
                "quadrature phases must be finite".into(),
            ));
        }
        self.axis().map(|_| ())
    }

    pub fn axis(&self) -> Result<Axis> {
        Axis::centered(self.beta_max, self.points)
    }
}

/// Modes only, with any qubit traced out.
fn motional_part(state: &QuantumState) -> Result<QuantumState> {
    let modes = state.layout.mode_slots();
    if modes.len() == state.layout.slots().len() {
        Ok(state.clone())
    } else {
        partial_trace(state, &modes)
    }
}

fn mode_dims(state: &QuantumState) -> Vec<usize> {
    state
        .layout
        .slots()
        .iter()
        .map(|s| match s {
            Subsystem::Mode(n) => *n,
            Subsystem::Qubit => 2,
        })
        .collect()
}

fn truncation_note(beta: C64, n: usize, out: &mut Vec<String>) {
    if beta.norm_sqr() > n as f64 / 2.0 {
        out.push(format!(
            "|beta|^2 = {:.3} exceeds cutoff/2 = {:.1}; displacement is truncated",
            beta.norm_sqr(),
            n as f64 / 2.0
        ));
    }
}

/// A[i₂, j₂] = Σ ρ[(i₁,i₂),(j₁,j₂)]·D₁[j₁, i₁].
fn contract_first(rho: &CMat, n1: usize, n2: usize, d1: &CMat) -> CMat {
    let mut a = CMat::zeros((n2, n2));
    for i1 in 0..n1 {
        for j1 in 0..n1 {
            let d = d1[[j1, i1]];
            if d == ZERO {
                continue;
            }
            for i2 in 0..n2 {
                let row = i1 * n2 + i2;
                for j2 in 0..n2 {
                    a[[i2, j2]] += rho[[row, j1 * n2 + j2]] * d;
                }
            }
        }
    }
    a
}

fn trace_product(a: &CMat, d: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += a[[i, j]] * d[[j, i]];
        }
    }
    acc
}

/// Two-mode χ(β₁, β₂) = Tr[ρ D₁(β₁) D₂(β₂)]; a qubit slot is traced out first.
pub fn char_function(state: &QuantumState, beta1: C64, beta2: C64) -> Result<Warned<C64>> {
    let m = motional_part(state)?;
    let dims = mode_dims(&m);
    let [n1, n2] = dims[..] else {
        return Err(Error::Layout(format!(
            "characteristic function needs two modes, got {}",
            dims.len()
        )));
    };
    let mut warnings = Vec::new();
    truncation_note(beta1, n1, &mut warnings);
    truncation_note(beta2, n2, &mut warnings);
    let a = contract_first(&m.rho, n1, n2, &hilbert::displacement_matrix(beta1, n1));
    let value = trace_product(&a, &hilbert::displacement_matrix(beta2, n2));
    Ok(Warned { value, warnings })
}

/// Single-mode χ(β) = Tr[ρ D(β)].
pub fn char_function_single(state: &QuantumState, beta: C64) -> Result<Warned<C64>> {
    let m = single_mode(state)?;
    let n = m.dim();
    let mut warnings = Vec::new();
    truncation_note(beta, n, &mut warnings);
    let value = trace_product(&m.rho, &hilbert::displacement_matrix(beta, n));
    Ok(Warned { value, warnings })
}

fn single_mode(state: &QuantumState) -> Result<QuantumState> {
    let m = motional_part(state)?;
    if m.layout.slots().len() != 1 {
        return Err(Error::Layout("expected a single-mode state".into()));
    }
    Ok(m)
}

/// Exact χ on the readout grid.
pub fn exact_readout(state: &QuantumState, settings: &ReadoutSettings) -> Result<Grid2D<C64>> {
    settings.validate()?;
    let axis = settings.axis()?;
    let m = motional_part(state)?;
    let dims = mode_dims(&m);
    let b = axis.coords();
    let p = axis.points;
    let mut values = Array2::zeros((p, p));
    match dims[..] {
        [n] => {
            for (i, &br) in b.iter().enumerate() {
                for (j, &bi) in b.iter().enumerate() {
                    let d = hilbert::displacement_matrix(C64::new(2.0 * br, 2.0 * bi), n);
                    values[[i, j]] = trace_product(&m.rho, &d);
                }
            }
        }
        [n1, n2] => {
            let e1 = I * C64::from_polar(2.0, settings.phi1);
            let e2 = I * C64::from_polar(2.0, settings.phi2);
            let d2: Vec<CMat> = b
                .iter()
                .map(|&x| hilbert::displacement_matrix(e2 * x, n2))
                .collect();
            for (i, &x1) in b.iter().enumerate() {
                let a = contract_first(&m.rho, n1, n2, &hilbert::displacement_matrix(e1 * x1, n1));
                for (j, d) in d2.iter().enumerate() {
                    values[[i, j]] = trace_product(&a, d);
                }
            }
        }
        _ => {
            return Err(Error::Layout(format!(
                "readout needs one or two modes, got {}",
                dims.len()
            )));
        }
    }
    Grid2D::new(axis, axis, values)
}

fn estimate(value: f64, shots: u64, rng: &mut ChaCha8Rng) -> f64 {
    let p = (0.5 * (1.0 + value)).clamp(0.0, 1.0);
    let k = Binomial::new(shots, p)
        .expect("probability clamped to [0,1]")
        .sample(rng);
    2.0 * k as f64 / shots as f64 - 1.0
}

/// Adds projection noise: each point's Re and Im parts become means of `shots` ±1 outcomes.
///
/// Point (i, j) draws from its own stream `i·points + j`, so results do not depend on
/// evaluation order.
pub fn add_projection_noise(exact: &Grid2D<C64>, shots: u64, seed: u64) -> Grid2D<C64> {
    if shots == 0 {
        return exact.clone();
    }
    let p2 = exact.axis2.points;
    let mut out = exact.clone();
    for ((i, j), v) in out.values.indexed_iter_mut() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((i * p2 + j) as u64);
        let re = estimate(v.re, shots, &mut rng);
        let im = estimate(v.im, shots, &mut rng);
        *v = C64::new(re, im);
    }
    out
}

/// χ samples as the SDF readout would report them.
pub fn simulate_readout(
    state: &QuantumState,
    settings: &ReadoutSettings,
    seed: u64,
) -> Result<Grid2D<C64>> {
    let exact = exact_readout(state, settings)?;
    Ok(add_projection_noise(&exact, settings.shots, seed))
}

/// Removes a constant offset from Re χ (estimated on the outer ring) and rescales χ(0,0) to 1.
pub fn subtract_offset(samples: &Grid2D<C64>) -> Grid2D<C64> {
    let ring: Vec<f64> = samples.ring().map(|ij| samples.values[ij].re).collect();
    let offset = ring.iter().sum::<f64>() / ring.len() as f64;
    let mut out = samples.clone();
    out.values.mapv_inplace(|z| C64::new(z.re - offset, z.im));
    let origin = out.values[[out.axis1.points / 2, out.axis2.points / 2]].re;
    if origin.abs() > f64::EPSILON {
        out.values.mapv_inplace(|z| z / origin);
    }
    out
}

fn signed_to_fft(s: isize, n: usize) -> usize {
    s.rem_euclid(n as isize) as usize
}

/// 2-D DFT of the samples zero-padded by `pad`, origin at index points/2.
/// `inverse[k]` picks e^{+2πi…} along axis k.
fn padded_transform(samples: &Grid2D<C64>, pad: usize, inverse: [bool; 2]) -> Array2<C64> {
    let (m1, m2) = (samples.axis1.points, samples.axis2.points);
    let (n1, n2) = (m1 * pad, m2 * pad);
    let mut buf = Array2::<Complex<f64>>::zeros((n1, n2));
    for ((i, j), &v) in samples.values.indexed_iter() {
        let a = signed_to_fft(i as isize - (m1 / 2) as isize, n1);
        let b = signed_to_fft(j as isize - (m2 / 2) as isize, n2);
        buf[[a, b]] = v;
    }
    let mut planner = FftPlanner::<f64>::new();
    let plan = |n: usize, inv: bool, planner: &mut FftPlanner<f64>| {
        if inv {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        }
    };
    let f2 = plan(n2, inverse[1], &mut planner);
    for mut row in buf.rows_mut() {
        let mut v = row.to_vec();
        f2.process(&mut v);
        row.iter_mut().zip(v).for_each(|(r, x)| *r = x);
    }
    let f1 = plan(n1, inverse[0], &mut planner);
    for mut col in buf.columns_mut() {
        let mut v = col.to_vec();
        f1.process(&mut v);
        col.iter_mut().zip(v).for_each(|(r, x)| *r = x);
    }
    buf
}

fn normalization_note(total: f64, out: &mut Vec<String>) {
    if (total - 1.0).abs() > 0.05 {
        out.push(format!(
            "reconstruction integrates to {total:.4}, off by more than 5%"
        ));
    }
}

/// W(α) from single-mode samples χ(2β), zero-padded FFT.
/// Output axis1 = Re α, axis2 = Im α; ∫W d²α = 1 and vacuum peaks at 2/π.
pub fn wigner_from_samples(samples: &Grid2D<C64>, pad: usize) -> Result<Warned<Grid2D>> {
    if pad < 1 {
        return Err(Error::InvalidArgument(
            "zero_pad_factor must be >= 1".into(),
        ));
    }
    let (d1, d2) = (samples.axis1.step(), samples.axis2.step());
    let (n1, n2) = (samples.axis1.points * pad, samples.axis2.points * pad);
    // e^{4i(α_i β_r − α_r β_i)}: Re β pairs with Im α (+), Im β with Re α (−)
    let f = padded_transform(samples, pad, [true, false]);
    let da_i = PI / (2.0 * n1 as f64 * d1);
    let da_r = PI / (2.0 * n2 as f64 * d2);
    let ax_r = Axis::centered(0.5 * n2 as f64 * da_r, n2)?;
    let ax_i = Axis::centered(0.5 * n1 as f64 * da_i, n1)?;
    let scale = 4.0 / (PI * PI) * d1 * d2;
    let values = Array2::from_shape_fn((n2, n1), |(jr, ji)| {
        let a = signed_to_fft(jr as isize - (n2 / 2) as isize, n2);
        let b = signed_to_fft(ji as isize - (n1 / 2) as isize, n1);
        f[[b, a]].re * scale
    });
    let grid = Grid2D::new(ax_r, ax_i, values)?;
    let mut warnings = Vec::new();
    normalization_note(grid.integral(), &mut warnings);
    Ok(Warned {
        value: grid,
        warnings,
    })
}

/// Reconstructed single-mode Wigner function.
pub fn wigner(
    state: &QuantumState,
    settings: &ReadoutSettings,
    seed: u64,
) -> Result<Warned<Grid2D>> {
    let m = single_mode(state)?;
    let samples = simulate_readout(&m, settings, seed)?;
    wigner_from_samples(&samples, settings.zero_pad_factor)
}

/// Most negative value tolerated before clipping counts as a reconstruction failure.
pub const NEGATIVITY_TOL: f64 = -1e-3;

/// P(x_{φ₁}, x_{φ₂}) from two-mode samples, zero-padded FFT.
///
/// Values above −1e−3 are clipped to zero and the grid renormalized. Deeper negativity is an
/// error for exact samples; with projection noise (`noisy`) it is clipped with a warning.
pub fn joint_from_samples(
    samples: &Grid2D<C64>,
    pad: usize,
    noisy: bool,
) -> Result<Warned<Grid2D>> {
    if pad < 1 {
        return Err(Error::InvalidArgument(
            "zero_pad_factor must be >= 1".into(),
        ));
    }
    let (d1, d2) = (samples.axis1.step(), samples.axis2.step());
    let (n1, n2) = (samples.axis1.points * pad, samples.axis2.points * pad);
    let f = padded_transform(samples, pad, [false, false]);
    let dx1 = PI / (std::f64::consts::SQRT_2 * n1 as f64 * d1);
    let dx2 = PI / (std::f64::consts::SQRT_2 * n2 as f64 * d2);
    let ax1 = Axis::centered(0.5 * n1 as f64 * dx1, n1)?;
    let ax2 = Axis::centered(0.5 * n2 as f64 * dx2, n2)?;
    let scale = 2.0 / (PI * PI) * d1 * d2;
    let mut values = Array2::from_shape_fn((n1, n2), |(i, j)| {
        let a = signed_to_fft(i as isize - (n1 / 2) as isize, n1);
        let b = signed_to_fft(j as isize - (n2 / 2) as isize, n2);
        f[[a, b]].re * scale
    });
    let mut warnings = Vec::new();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < NEGATIVITY_TOL {
        if !noisy {
            return Err(Error::Reconstruction(format!(
                "joint distribution reaches {min:.3e}, below the clipping tolerance {NEGATIVITY_TOL:.0e}"
            )));
        }
        warnings.push(format!(
            "projection noise drove P down to {min:.3e}; clipped"
        ));
    }
    let raw = values.sum() * dx1 * dx2;
    normalization_note(raw, &mut warnings);
    values.mapv_inplace(|v| v.max(0.0));
    let total = values.sum() * dx1 * dx2;
    if total <= 0.0 {
        return Err(Error::Reconstruction(
            "joint distribution has no positive mass".into(),
        ));
    }
    values.mapv_inplace(|v| v / total);
    Ok(Warned {
        value: Grid2D::new(ax1, ax2, values)?,
        warnings,
    })
}

/// Reconstructed joint quadrature distribution of a two-mode state.
pub fn joint_distribution(
    state: &QuantumState,
    settings: &ReadoutSettings,
    seed: u64,
) -> Result<Warned<Grid2D>> {
    let samples = simulate_readout(state, settings, seed)?;
    joint_from_samples(&samples, settings.zero_pad_factor, settings.shots > 0)
}

/// Radius of the maximum of the angularly averaged profile of a centered grid.
pub fn donut_radius(w: &Grid2D) -> Result<f64> {
    let dr = w.axis1.step().min(w.axis2.step());
    let reach = [w.axis1.min, w.axis1.max, w.axis2.min, w.axis2.max]
        .iter()
        .map(|x| x.abs())
        .fold(f64::INFINITY, f64::min);
    let bins = (reach / dr).floor() as usize;
    if bins < 3 {
        return Err(Error::Range("grid too coarse for a radial profile".into()));
    }
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for ((i, j), &v) in w.values.indexed_iter() {
        let r = w.axis1.coord(i).hypot(w.axis2.coord(j));
        let k = (r / dr).round() as usize;
        if k < bins {
            sum[k] += v;
            count[k] += 1;
        }
    }
    let profile: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| s / c.max(1) as f64)
        .collect();
    let (k, _) = profile
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
        );
    if k == bins - 1 {
        return Err(Error::Range(format!(
            "radial profile peaks at the grid edge (r = {:.3})",
            k as f64 * dr
        )));
    }
    let left = if k == 0 { profile[1] } else { profile[k - 1] };
    let (c, right) = (profile[k], profile[k + 1]);
    let curv = left - 2.0 * c + right;
    let offset = if curv.abs() > 0.0 {
        0.5 * (left - right) / curv
    } else {
        0.0
    };
    Ok(((k as f64 + offset.clamp(-0.5, 0.5)) * dr).max(0.0))
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// W(α) evaluated term by term in the Fock basis.
pub fn wigner_fock(state: &QuantumState, axis_re: Axis, axis_im: Axis) -> Result<Grid2D> {
    let m = single_mode(state)?;
    let n = m.dim();
    let lf = ln_factorials(n);
    let values = Array2::from_shape_fn((axis_re.points, axis_im.points), |(i, j)| {
        let alpha = C64::new(axis_re.coord(i), axis_im.coord(j));
        let r2 = alpha.norm_sqr();
        let x = 4.0 * r2;
        let gauss = (-2.0 * r2).exp();
        let mut w = 0.0;
        for d in 0..n {
            if d > 0 && r2 == 0.0 {
                break;
            }
            let lag = hilbert::laguerre_all(n - 1 - d, d as f64, x);
            let mut acc = ZERO;
            for (k, l) in lag.iter().enumerate() {
                let mag = (0.5 * (lf[k] - lf[k + d])
                    + if d > 0 {
                        d as f64 * (2.0 * r2.sqrt()).ln()
                    } else {
                        0.0
                    })
                .exp();
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                acc += m.rho[[k + d, k]] * (sign * mag * l);
            }
            // (2α*)^d phase
            let phase = C64::from_polar(1.0, -(d as f64) * alpha.arg());
            let term = (acc * phase).re;
            w += if d == 0 { term } else { 2.0 * term };
        }
        2.0 / PI * gauss * w
    });
    Grid2D::new(axis_re, axis_im, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{canonical_state, SpaceLayout, StateKind};
    use approx::assert_abs_diff_eq;

    fn two_mode_vacuum(n: usize) -> QuantumState {
        let v = canonical_state(StateKind::Vacuum, n).unwrap();
        v.tensor(&v).unwrap()
    }

    #[test]
    fn vacuum_characteristic_function() {
        let s = two_mode_vacuum(8);
        let b1 = C64::new(0.3, -0.4);
        let b2 = C64::new(-0.7, 0.2);
        let chi = char_function(&s, b1, b2).unwrap().value;
        let expect = (-(b1.norm_sqr() + b2.norm_sqr()) / 2.0).exp();
        assert_abs_diff_eq!(chi.re, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(chi.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fock_one_characteristic_function() {
        let f = canonical_state(StateKind::Fock(1), 10).unwrap();
        let v = canonical_state(StateKind::Vacuum, 4).unwrap();
        let s = f.tensor(&v).unwrap();
        let b = C64::new(0.8, 0.5);
        let chi = char_function(&s, b, ZERO).unwrap().value;
        let r2 = b.norm_sqr();
        assert_abs_diff_eq!(chi.re, (1.0 - r2) * (-r2 / 2.0).exp(), epsilon = 1e-12);
    }

    #[test]
    fn qubit_is_traced_before_chi() {
        let v = two_mode_vacuum(5);
        let q = QuantumState::from_parts(
            SpaceLayout::qubit_two_modes(5, 5).unwrap(),
            crate::linalg::kron(
                &ndarray::arr2(&[[crate::linalg::ONE, ZERO], [ZERO, ZERO]]),
                &v.rho,
            ),
        )
        .unwrap();
        let a = char_function(&q, C64::new(0.2, 0.0), C64::new(0.0, 0.1))
            .unwrap()
            .value;
        let b = char_function(&v, C64::new(0.2, 0.0), C64::new(0.0, 0.1))
            .unwrap()
            .value;
        assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn large_argument_warns() {
        let s = two_mode_vacuum(4);
        assert!(!char_function(&s, C64::new(3.0, 0.0), ZERO)
            .unwrap()
            .warnings
            .is_empty());
    }

    #[test]
    fn exact_readout_matches_point_evaluation() {
        let s = two_mode_vacuum(6);
        let set = ReadoutSettings {
            points: 8,
            phi1: 0.3,
            phi2: -1.1,
            ..ReadoutSettings::exact()
        };
        let g = simulate_readout(&s, &set, 1).unwrap();
        let b = g.axis1.coords();
        for (i, j) in [(0, 0), (3, 5), (7, 2)] {
            let z = char_function(
                &s,
                2.0 * I * C64::from_polar(b[i], 0.3),
                2.0 * I * C64::from_polar(b[j], -1.1),
            )
            .unwrap()
            .value;
            assert_abs_diff_eq!((g.values[[i, j]] - z).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn noise_is_reproducible_and_bounded() {
        let s = canonical_state(StateKind::Vacuum, 10).unwrap();
        let set = ReadoutSettings {
            points: 8,
            ..ReadoutSettings::default()
        };
        let a = simulate_readout(&s, &set, 3).unwrap();
        let b = simulate_readout(&s, &set, 3).unwrap();
        assert_eq!(a, b);
        assert!(a
            .values
            .iter()
            .all(|z| z.re.abs() <= 1.0 && z.im.abs() <= 1.0));
        assert_eq!(a.values[[4, 4]].re, 1.0);
    }

    #[test]
    fn offset_is_removed() {
        let s = canonical_state(StateKind::Vacuum, 10).unwrap();
        let exact = exact_readout(&s, &ReadoutSettings::exact()).unwrap();
        let cleaned = subtract_offset(&exact);
        for (a, b) in exact.values.iter().zip(cleaned.values.iter()) {
            assert!((a - b).norm() < 1e-6);
        }
        let mut shifted = exact.clone();
        shifted.values.mapv_inplace(|z| z + 0.05);
        let back = subtract_offset(&shifted);
        assert_abs_diff_eq!(back.values[[16, 16]].re, 1.0, epsilon = 1e-12);
        assert!((back.values[[0, 0]].re).abs() < 1e-3);
    }

    #[test]
    fn vacuum_wigner_peak() {
        let s = canonical_state(StateKind::Vacuum, 12).unwrap();
        let w = wigner(&s, &ReadoutSettings::exact(), 0).unwrap();
        assert!(w.warnings.is_empty());
        let (x, y) = w.value.argmax();
        assert_abs_diff_eq!(x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y, 0.0, epsilon = 1e-12);
        let peak = w.value.values[[w.value.axis1.points / 2, w.value.axis2.points / 2]];
        assert!((peak - 2.0 / PI).abs() < 0.03 * 2.0 / PI);
        assert_abs_diff_eq!(w.value.integral(), 1.0, epsilon = 0.02);
    }

    #[test]
    fn fock_one_wigner_dip() {
        let s = canonical_state(StateKind::Fock(1), 12).unwrap();
        let w = wigner(&s, &ReadoutSettings::exact(), 0).unwrap().value;
        let c = w.values[[w.axis1.points / 2, w.axis2.points / 2]];
        assert!((c + 2.0 / PI).abs() < 0.05 * 2.0 / PI, "W(0) = {c}");
    }

    #[test]
    fn coherent_wigner_peak_location() {
        let s = canonical_state(StateKind::Coherent(C64::new(2.0, 0.0)), 30).unwrap();
        let w = wigner(&s, &ReadoutSettings::exact(), 0).unwrap().value;
        let (x, y) = w.argmax();
        assert!((x - 2.0).abs() <= w.axis1.step());
        assert!(y.abs() <= w.axis2.step());
    }

    #[test]
    fn fft_and_fock_wigner_agree() {
        let s = canonical_state(StateKind::Coherent(C64::new(0.8, -0.9)), 12).unwrap();
        let w = wigner(&s, &ReadoutSettings::exact(), 0).unwrap().value;
        let direct = wigner_fock(&s, w.axis1, w.axis2).unwrap();
        assert!(w.max_abs_diff(&direct).unwrap() < 0.02);
    }

    #[test]
    fn vacuum_joint_distribution() {
        let s = two_mode_vacuum(10);
        let p = joint_distribution(&s, &ReadoutSettings::exact(), 0).unwrap();
        assert!(p.warnings.is_empty(), "{:?}", p.warnings);
        let m = p.value.marginal(0);
        let x = p.value.axis1.coords();
        let dx = p.value.axis1.step();
        let var: f64 = m.iter().zip(&x).map(|(q, x)| q * x * x * dx).sum();
        assert_abs_diff_eq!(var, 0.5, epsilon = 0.01);
    }

    #[test]
    fn donut_of_opposite_mixture() {
        let s =
            canonical_state(StateKind::OppositeCoherentMixture(C64::new(3.0, 0.0)), 40).unwrap();
        let set = ReadoutSettings {
            points: 64,
            ..ReadoutSettings::exact()
        };
        let w = wigner(&s, &set, 0).unwrap().value;
        let r = donut_radius(&w).unwrap();
        assert!((r - 3.0).abs() <= w.axis1.step(), "r = {r}");
    }

    #[test]
    fn vacuum_donut_is_centered() {
        let s = canonical_state(StateKind::Vacuum, 12).unwrap();
        let w = wigner(&s, &ReadoutSettings::exact(), 0).unwrap().value;
        assert!(donut_radius(&w).unwrap() < w.axis1.step());
    }

    #[test]
    fn csv_has_axis_header() {
        let s = canonical_state(StateKind::Vacuum, 4).unwrap();
        let set = ReadoutSettings {
            points: 8,
            ..ReadoutSettings::exact()
        };
        let g = exact_readout(&s, &set).unwrap();
        let csv = g.to_csv(["re_beta", "im_beta", "chi"], ["1", "1", "1"]);
        assert!(csv.starts_with("# axis1: re_beta min=-3 max=3 points=8"));
        assert_eq!(csv.lines().count(), 4 + 64);
    }

    #[test]
    fn axis_rejects_odd_points() {
        assert!(Axis::new(-1.0, 1.0, 9).is_err());
        assert!(Axis::new(1.0, -1.0, 8).is_err());
    }
}
