//! Write, read and full-cycle kernels of the memory.
//!
//! The write kernel maps the input field onto the spin coherence and the
//! read kernel maps the (reflected) coherence back onto the output field.
//! Inside pulse `n` (0-based `k`, offset `s` from the pulse start) both are
//! a phase times a Bessel profile of the pulse area still to come (write)
//! or already elapsed (read):
//!
//! ```text
//! G_ab(t, z) = exp(-i r) J0(2 sqrt(z r)),   r = (N - k) T0 - s
//! G_ba(t, z) = exp(-i r) J0(2 sqrt(z r)),   r = k T0 + s
//! ```
//!
//! Evaluating through the pulse index keeps every argument of order `N T0`
//! even when the absolute times are of order `N T`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::bessel::{j0, j0_sqrt_arg};
use crate::error::{Error, Result};
use crate::profiles::PulseTrainProfile;
use crate::quadrature::GaussLegendre;

pub const DEFAULT_QUADRATURE_NODES: usize = 256;
pub const MIN_QUADRATURE_NODES: usize = 16;
/// Node doubling may move a kernel value by at most this fraction of its scale.
pub const QUADRATURE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MediumParams {
    length: f64,
}

impl MediumParams {
    pub fn new(length: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::param(
                "length",
                format!("optical depth must be finite and positive, got {length}"),
            ));
        }
        Ok(Self { length })
    }

    pub fn length(&self) -> f64 {
        self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemoryConfig {
    pub profile: PulseTrainProfile,
    pub medium: MediumParams,
    pub phase_shifters: bool,
    quadrature_nodes: usize,
}

impl MemoryConfig {
    pub fn new(
        profile: PulseTrainProfile,
        medium: MediumParams,
        phase_shifters: bool,
        quadrature_nodes: usize,
    ) -> Result<Self> {
        if quadrature_nodes < MIN_QUADRATURE_NODES {
            return Err(Error::param(
                "quadrature_nodes",
                format!("need at least {MIN_QUADRATURE_NODES}, got {quadrature_nodes}"),
            ));
        }
        Ok(Self {
            profile,
            medium,
            phase_shifters,
            quadrature_nodes,
        })
    }

    /// Default resolution, shifters off.
    pub fn with_defaults(profile: PulseTrainProfile, medium: MediumParams) -> Self {
        Self {
            profile,
            medium,
            phase_shifters: false,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        }
    }

    pub fn quadrature_nodes(&self) -> usize {
        self.quadrature_nodes
    }

    pub fn length(&self) -> f64 {
        self.medium.length()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let tw = self.profile.train_duration();
        if !(0.0..=tw).contains(&t) {
            return Err(Error::Domain(format!("time {t} outside [0, {tw}]")));
        }
        Ok(())
    }

    fn check_depth(&self, z: f64) -> Result<()> {
        let l = self.length();
        if !(0.0..=l).contains(&z) {
            return Err(Error::Domain(format!("depth {z} outside [0, {l}]")));
        }
        Ok(())
    }
}

fn phase_bessel(area: f64, z: f64) -> Complex64 {
    Complex64::from_polar(1.0, -area) * j0_sqrt_arg(z * area)
}

pub fn write_kernel(cfg: &MemoryConfig, t: f64, z: f64) -> Result<Complex64> {
    cfg.check_time(t)?;
    match cfg.profile.locate(t) {
        Some((k, s)) => write_kernel_in_pulse(cfg, k, s, z),
        None => {
            cfg.check_depth(z)?;
            Ok(Complex64::new(0.0, 0.0))
        }
    }
}

pub fn read_kernel(cfg: &MemoryConfig, t: f64, z: f64) -> Result<Complex64> {
    cfg.check_time(t)?;
    match cfg.profile.locate(t) {
        Some((k, s)) => read_kernel_in_pulse(cfg, k, s, z),
        None => {
            cfg.check_depth(z)?;
            Ok(Complex64::new(0.0, 0.0))
        }
    }
}

fn check_pulse_point(cfg: &MemoryConfig, k: usize, s: f64) -> Result<()> {
    let p = &cfg.profile;
    if k >= p.n_pulses() {
        return Err(Error::Index { index: k, len: p.n_pulses() });
    }
    if !(0.0..=p.pulse_duration()).contains(&s) {
        return Err(Error::Domain(format!("offset {s} outside [0, {}]", p.pulse_duration())));
    }
    Ok(())
}

/// [`write_kernel`] at offset `s` into pulse `k` (0-based). Long trains put
/// absolute times where a double resolves only ~1e-10, so this form keeps
/// full precision.
pub fn write_kernel_in_pulse(cfg: &MemoryConfig, k: usize, s: f64, z: f64) -> Result<Complex64> {
    check_pulse_point(cfg, k, s)?;
    cfg.check_depth(z)?;
    let p = &cfg.profile;
    let remaining = (p.n_pulses() - k) as f64 * p.pulse_duration() - s;
    Ok(phase_bessel(remaining.max(0.0), z))
}

pub fn read_kernel_in_pulse(cfg: &MemoryConfig, k: usize, s: f64, z: f64) -> Result<Complex64> {
    check_pulse_point(cfg, k, s)?;
    cfg.check_depth(z)?;
    Ok(phase_bessel(k as f64 * cfg.profile.pulse_duration() + s, z))
}

fn amplitude_integral(rule: &GaussLegendre, length: f64, a: f64, b: f64) -> f64 {
    rule.integrate(0.0, length, |z| j0_sqrt_arg(a * z) * j0_sqrt_arg(b * z))
}

/// The real full-cycle kernel `G(t, t')` with the linearized pulse area
/// `(T0/T) t`. Each call also evaluates the integral on twice the nodes
/// and fails if the two disagree by more than the tolerance (scale `L`).
pub fn amplitude_kernel(cfg: &MemoryConfig, t: f64, tp: f64) -> Result<f64> {
    cfg.check_time(t)?;
    cfg.check_time(tp)?;
    let p = &cfg.profile;
    if p.locate(t).is_none() || p.locate(tp).is_none() {
        return Ok(0.0);
    }
    let slope = p.pulse_duration() / p.period();
    let (a, b) = (slope * t, slope * tp);
    let l = cfg.length();
    if a == 0.0 && b == 0.0 {
        return Ok(l);
    }
    let n = cfg.quadrature_nodes();
    let coarse = amplitude_integral(&GaussLegendre::new(n), l, a, b);
    let fine = amplitude_integral(&GaussLegendre::new(2 * n), l, a, b);
    let change = (fine - coarse).abs() / l;
    if change > QUADRATURE_TOLERANCE {
        return Err(Error::Quadrature {
            change,
            tolerance: QUADRATURE_TOLERANCE,
        });
    }
    Ok(coarse)
}

/// `K(t, t') = exp(-i (T0/T)(t + t')) G(t, t')`.
pub fn full_kernel(cfg: &MemoryConfig, t: f64, tp: f64) -> Result<Complex64> {
    let g = amplitude_kernel(cfg, t, tp)?;
    let slope = cfg.profile.pulse_duration() / cfg.profile.period();
    Ok(Complex64::from_polar(g, -slope * (t + tp)))
}

/// Coherence written by an input field, `b(z) = -i ∫ G_ab(t, z) a(t) dt`,
/// integrated pulse by pulse with `nodes` Gauss points per pulse. `input`
/// receives the pulse index (0-based) and the offset inside that pulse.
pub fn write_convolution<F>(cfg: &MemoryConfig, z: f64, nodes: usize, input: F) -> Result<Complex64>
where
    F: Fn(usize, f64) -> Complex64,
{
    cfg.check_depth(z)?;
    let p = &cfg.profile;
    let t0 = p.pulse_duration();
    let (s, w) = GaussLegendre::new(nodes).on_interval(0.0, t0);
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..p.n_pulses() {
        for (si, wi) in s.iter().zip(&w) {
            let remaining = (p.n_pulses() - k) as f64 * t0 - si;
            acc += phase_bessel(remaining, z) * input(k, *si) * *wi;
        }
    }
    Ok(Complex64::new(0.0, -1.0) * acc)
}

/// Depth profiles of every pulse cell, sampled on a Gauss–Legendre depth
/// grid. Row `m` holds the pulse-area average over `[m T0, (m+1) T0]` of
/// `J0(2 sqrt(z x))`, and of the same function times `exp(-i x)`.
///
/// These are the Galerkin envelope of the exact pulse-area kernel; every
/// envelope-level matrix in the crate is a weighted product of two rows.
#[derive(Debug, Clone)]
pub struct PulseCellProfiles {
    pulse_duration: f64,
    z: Vec<f64>,
    weights: Vec<f64>,
    real: Vec<Vec<f64>>,
    phased: Vec<Vec<Complex64>>,
}

impl PulseCellProfiles {
    pub fn new(n_cells: usize, pulse_duration: f64, length: f64, depth_nodes: usize) -> Self {
        let cells: Vec<usize> = (0..n_cells).collect();
        Self::for_cells(&cells, pulse_duration, length, depth_nodes)
    }

    /// Profiles of selected cells only; row `i` describes cell `cells[i]`.
    pub fn for_cells(cells: &[usize], pulse_duration: f64, length: f64, depth_nodes: usize) -> Self {
        let (z, weights) = GaussLegendre::new(depth_nodes).on_interval(0.0, length);
        let sub = sub_cell_nodes(length, pulse_duration);
        let (u, uw) = GaussLegendre::new(sub).on_interval(0.0, 1.0);
        let rows: Vec<(Vec<f64>, Vec<Complex64>)> = cells
            .par_iter()
            .map(|&m| {
                let xs: Vec<f64> = u.iter().map(|ui| (m as f64 + ui) * pulse_duration).collect();
                let phases: Vec<Complex64> = xs
                    .iter()
                    .zip(&uw)
                    .map(|(x, w)| Complex64::from_polar(*w, -x))
                    .collect();
                let mut re = Vec::with_capacity(z.len());
                let mut ph = Vec::with_capacity(z.len());
                for zq in &z {
                    let mut r = 0.0;
                    let mut c = Complex64::new(0.0, 0.0);
                    for ((x, w), e) in xs.iter().zip(&uw).zip(&phases) {
                        let j = j0(2.0 * (zq * x).sqrt());
                        r += w * j;
                        c += e * j;
                    }
                    re.push(r);
                    ph.push(c);
                }
                (re, ph)
            })
            .collect();
        let (real, phased) = rows.into_iter().unzip();
        Self {
            pulse_duration,
            z,
            weights,
            real,
            phased,
        }
    }

    pub fn for_config(cfg: &MemoryConfig) -> Self {
        Self::new(
            cfg.profile.n_pulses(),
            cfg.profile.pulse_duration(),
            cfg.length(),
            cfg.quadrature_nodes(),
        )
    }

    pub fn n_cells(&self) -> usize {
        self.real.len()
    }

    pub fn pulse_duration(&self) -> f64 {
        self.pulse_duration
    }

    pub fn depth_nodes(&self) -> &[f64] {
        &self.z
    }

    pub fn depth_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn real_row(&self, m: usize) -> &[f64] {
        &self.real[m]
    }

    pub fn phased_row(&self, m: usize) -> &[Complex64] {
        &self.phased[m]
    }

    /// `T0 ∫ b_m(z) b_k(z) dz`.
    pub fn real_product(&self, m: usize, k: usize) -> f64 {
        let (a, b) = (&self.real[m], &self.real[k]);
        self.pulse_duration
            * self
                .weights
                .iter()
                .zip(a.iter().zip(b))
                .map(|(w, (x, y))| w * x * y)
                .sum::<f64>()
    }

    /// `T0 ∫ c_m(z) c_k(z) dz`, no conjugation.
    pub fn phased_product(&self, m: usize, k: usize) -> Complex64 {
        let (a, b) = (&self.phased[m], &self.phased[k]);
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| x * y * *w)
            .sum::<Complex64>()
            * self.pulse_duration
    }

    /// `T0 ∫ c_m(z) conj(c_k(z)) dz`.
    pub fn hermitian_product(&self, m: usize, k: usize) -> Complex64 {
        let (a, b) = (&self.phased[m], &self.phased[k]);
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| x * y.conj() * *w)
            .sum::<Complex64>()
            * self.pulse_duration
    }
}

/// Gauss points per pulse cell: the Bessel argument advances by at most
/// `2 sqrt(L T0)` and the phase by `T0` across one cell.
pub(crate) fn sub_cell_nodes(length: f64, pulse_duration: f64) -> usize {
    8 + (2.0 * (length * pulse_duration).sqrt() + pulse_duration).ceil() as usize
}
