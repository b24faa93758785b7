//! Homodyne noise spectra after the memory and per-supermode squeezing.
//!
//! Spectra are normalized to shot noise (`S = 1`). The local oscillator has
//! the driving profile, so only the envelope samples enter.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::memory::{full_cycle_transform, EnvelopeField, FullCycle};
use crate::schmidt::SchmidtModes;
use crate::spopo_source::{SpopoSource, SupermodeBasis};

pub const DEFAULT_SPECTRUM_POINTS: usize = 2000;
/// Comb lines spanned by the default frequency window, centered on zero.
pub const DEFAULT_SPECTRUM_LINES: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Input,
    Output,
}

/// Strictly increasing, finite angular frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    omega: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::param("omega", "frequency grid is empty"));
        }
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::param("omega", "frequency grid has non-finite points"));
        }
        if omega.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("omega", "frequency grid must be strictly increasing"));
        }
        Ok(Self { omega })
    }

    /// `points` evenly spaced frequencies covering `lines` comb spacings
    /// `2 pi / T`, centered on zero.
    pub fn comb_window(period: f64, lines: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::param("points", "need at least two frequencies"));
        }
        if !(lines.is_finite() && lines > 0.0) {
            return Err(Error::param("lines", format!("must be positive, got {lines}")));
        }
        let spacing = 2.0 * PI / period;
        let lo = -0.5 * lines * spacing;
        let step = lines * spacing / (points - 1) as f64;
        Self::new((0..points).map(|i| lo + step * i as f64).collect())
    }

    pub fn default_for(period: f64) -> Result<Self> {
        Self::comb_window(period, DEFAULT_SPECTRUM_LINES, DEFAULT_SPECTRUM_POINTS)
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSpectrum {
    pub stage: Stage,
    pub omega: Vec<f64>,
    pub values: Vec<f64>,
}

impl NoiseSpectrum {
    /// Indices of interior local minima.
    pub fn local_minima(&self) -> Vec<usize> {
        let v = &self.values;
        (1..v.len().saturating_sub(1))
            .filter(|&i| v[i] < v[i - 1] && v[i] <= v[i + 1])
            .collect()
    }
}

fn check_pulses(modes: &SchmidtModes, src: &SpopoSource) -> Result<()> {
    let (a, b) = (src.n_pulses(), modes.profile().n_pulses());
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, actual: b });
    }
    Ok(())
}

fn check_retained(modes: &SchmidtModes, retained: usize) -> Result<()> {
    if retained > modes.count() {
        return Err(Error::Index {
            index: retained,
            len: modes.count() + 1,
        });
    }
    Ok(())
}

/// `A_ij = T0 sum_{m,k} exp(-kT |m - k|) phi_i(t_m) phi_j(t_k)` for the
/// leading `retained` modes.
pub fn coupling_matrix(modes: &SchmidtModes, src: &SpopoSource, retained: usize) -> Result<DMatrix<f64>> {
    check_pulses(modes, src)?;
    check_retained(modes, retained)?;
    let u = modes.unit_vectors().columns(0, retained);
    let e = src.correlation_matrix();
    Ok(u.transpose() * e * u)
}

/// Output spectrum with ideal phase shifters and the leading `retained`
/// Schmidt modes.
///
/// Writing `g_i(w) = sum_m u_i[m] exp(i m T w)`, the double sum over pulse
/// pairs collapses to `g^T (S A S) conj(g)` with `S = diag(s)`, which is
/// real because `S A S` is real symmetric.
pub fn output_spectrum(
    modes: &SchmidtModes,
    src: &SpopoSource,
    grid: &FrequencyGrid,
    retained: usize,
) -> Result<NoiseSpectrum> {
    let a = coupling_matrix(modes, src, retained)?;
    let s = &modes.singular_values()[..retained];
    let sas = DMatrix::from_fn(retained, retained, |i, j| s[i] * s[j] * a[(i, j)]);
    let u = modes.unit_vectors();
    let n = src.n_pulses();
    let period = src.profile().period();
    let prefactor = src.kappa_t() / (2.0 * n as f64);
    let values = grid
        .omega()
        .par_iter()
        .map(|&w| {
            let theta = period * w;
            let phases: Vec<Complex64> = (0..n).map(|m| Complex64::from_polar(1.0, m as f64 * theta)).collect();
            let g = DVector::from_fn(retained, |i, _| {
                u.column(i).iter().zip(&phases).map(|(x, p)| p * *x).sum::<Complex64>()
            });
            let mut quad = 0.0;
            for i in 0..retained {
                for j in 0..retained {
                    quad += sas[(i, j)] * (g[i] * g[j].conj()).re;
                }
            }
            1.0 - prefactor * quad
        })
        .collect();
    Ok(NoiseSpectrum {
        stage: Stage::Output,
        omega: grid.omega().to_vec(),
        values,
    })
}

/// Output spectrum obtained by pushing the pulse-pair correlator through
/// the shifted full-cycle transform column by column,
/// `S = 1 + 4 sum cos((m-k) T w) C_out[m][k]`. Independent of the
/// coupling-matrix factorization; used as a cross-check.
pub fn propagated_output_spectrum(cycle: &FullCycle, src: &SpopoSource, grid: &FrequencyGrid) -> Result<NoiseSpectrum> {
    let p = *cycle.profile();
    let n = p.n_pulses();
    if n != src.n_pulses() {
        return Err(Error::DimensionMismatch {
            expected: src.n_pulses(),
            actual: n,
        });
    }
    let mut t = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let mut amps = vec![Complex64::new(0.0, 0.0); n];
        amps[k] = Complex64::new(1.0, 0.0);
        let out = full_cycle_transform(&EnvelopeField::new(p, amps)?, cycle, true)?;
        for (m, a) in out.amplitudes().iter().enumerate() {
            t[(m, k)] = a.re;
        }
    }
    let c_in = DMatrix::from_fn(n, n, |a, b| {
        crate::spopo_source::input_pulse_correlator(src, a + 1, b + 1).expect("indices in range")
    });
    let c_out = &t * c_in * t.transpose();
    let period = p.period();
    let values = grid
        .omega()
        .iter()
        .map(|&w| {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += ((a as f64 - b as f64) * period * w).cos() * c_out[(a, b)];
                }
            }
            1.0 + 4.0 * s
        })
        .collect();
    Ok(NoiseSpectrum {
        stage: Stage::Output,
        omega: grid.omega().to_vec(),
        values,
    })
}

/// `f_k = (sum_i s_i C_ik^2)^2` with `C_ik = sum_m T0 phi_i(t_m) L_k(t_m)`.
pub fn squeezing_transfer(modes: &SchmidtModes, basis: &SupermodeBasis, k: usize) -> Result<f64> {
    let n = modes.profile().n_pulses();
    if basis.n_pulses() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: basis.n_pulses(),
        });
    }
    let l = basis.unit_vector(k)?;
    let u = modes.unit_vectors();
    let mut acc = 0.0;
    for (i, s) in modes.singular_values().iter().enumerate() {
        let c = u.column(i).dot(&l);
        acc += s * c * c;
    }
    Ok(acc * acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupermodeSqueezing {
    /// 1-based supermode index.
    pub mode: usize,
    pub input_db: f64,
    pub transfer: f64,
    pub output_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SqueezingReport {
    pub rows: Vec<SupermodeSqueezing>,
}

/// Maps input squeezing through the memory: the normally ordered variance
/// of each supermode is scaled by `f_k` while shot noise is untouched, so
/// `S_out = 1 + f_k (S_in - 1)`.
pub fn supermode_squeezing_report(modes: &SchmidtModes, basis: &SupermodeBasis, input_db: &[f64]) -> Result<SqueezingReport> {
    if input_db.len() != basis.count() {
        return Err(Error::DimensionMismatch {
            expected: basis.count(),
            actual: input_db.len(),
        });
    }
    if let Some(bad) = input_db.iter().find(|d| !(d.is_finite() && **d <= 0.0)) {
        return Err(Error::Domain(format!(
            "input squeezing must be finite and at most 0 dB, got {bad}"
        )));
    }
    let rows = input_db
        .iter()
        .enumerate()
        .map(|(k, &db)| {
            let transfer = squeezing_transfer(modes, basis, k)?;
            let s_in = 10f64.powf(db / 10.0);
            let s_out = 1.0 + transfer * (s_in - 1.0);
            Ok(SupermodeSqueezing {
                mode: k + 1,
                input_db: db,
                transfer,
                output_db: 10.0 * s_out.log10(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SqueezingReport { rows })
}
