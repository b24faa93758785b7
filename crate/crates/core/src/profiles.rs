//! Rectangular pulse-train geometry and the Raman-validity diagnostic.
//!
//! Times are dimensionless throughout. A train of `N` pulses of duration
//! `T0` repeats with period `T`; pulse `n` (1-based) occupies
//! `[(n-1) T, (n-1) T + T0]`, closed on both ends.

use serde::Serialize;

use crate::error::{Error, Result};

/// Default threshold below which the neglected two-photon detuning term
/// is no longer considered small.
pub const DEFAULT_VALIDITY_THRESHOLD: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PulseTrainProfile {
    n_pulses: usize,
    pulse_duration: f64,
    period: f64,
}

impl PulseTrainProfile {
    pub fn new(n_pulses: usize, pulse_duration: f64, period: f64) -> Result<Self> {
        if n_pulses == 0 {
            return Err(Error::param("n_pulses", "must be at least 1"));
        }
        if !(pulse_duration.is_finite() && pulse_duration > 0.0) {
            return Err(Error::param(
                "pulse_duration",
                format!("must be finite and positive, got {pulse_duration}"),
            ));
        }
        if !(period.is_finite() && period >= pulse_duration) {
            return Err(Error::param(
                "period",
                format!("must be finite and at least the pulse duration {pulse_duration}, got {period}"),
            ));
        }
        Ok(Self {
            n_pulses,
            pulse_duration,
            period,
        })
    }

    pub fn n_pulses(&self) -> usize {
        self.n_pulses
    }

    pub fn pulse_duration(&self) -> f64 {
        self.pulse_duration
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// `T_W = (N - 1) T + T0`.
    pub fn train_duration(&self) -> f64 {
        (self.n_pulses - 1) as f64 * self.period + self.pulse_duration
    }

    /// Total driven time `N T0`, which is also the full pulse area.
    pub fn pulse_area(&self) -> f64 {
        self.n_pulses as f64 * self.pulse_duration
    }

    /// Start time of pulse `n`, 1-based.
    pub fn pulse_start(&self, n: usize) -> Result<f64> {
        if n == 0 || n > self.n_pulses {
            return Err(Error::Index {
                index: n,
                len: self.n_pulses + 1,
            });
        }
        Ok((n - 1) as f64 * self.period)
    }

    /// Locates `t` inside the train: the 0-based index of the pulse that
    /// contains it and the offset from that pulse's start. `None` in gaps
    /// and outside the train.
    pub fn locate(&self, t: f64) -> Option<(usize, f64)> {
        if !(t >= 0.0) || t > self.train_duration() {
            return None;
        }
        let mut k = (t / self.period).floor() as usize;
        if k >= self.n_pulses {
            k = self.n_pulses - 1;
        }
        let offset = t - k as f64 * self.period;
        if offset <= self.pulse_duration {
            return Some((k, offset.max(0.0)));
        }
        // Rounding in the division can place `t` one period too late.
        if k + 1 < self.n_pulses {
            let next = t - (k + 1) as f64 * self.period;
            if next >= -1e-12 * self.period && next <= 0.0 {
                return Some((k + 1, 0.0));
            }
        }
        None
    }
}

/// The driving profile `F(t)`: 1 inside a pulse, 0 otherwise.
pub fn comb_profile(p: &PulseTrainProfile, t: f64) -> f64 {
    if p.locate(t).is_some() {
        1.0
    } else {
        0.0
    }
}

/// `Q(0, t)`, the driven time elapsed by `t`, in closed form.
pub fn integrated_profile(p: &PulseTrainProfile, t: f64) -> Result<f64> {
    let tw = p.train_duration();
    if !(0.0..=tw).contains(&t) {
        return Err(Error::Domain(format!(
            "integrated profile needs 0 <= t <= {tw}, got {t}"
        )));
    }
    let k = ((t / p.period).floor() as usize).min(p.n_pulses - 1);
    let partial = (t - k as f64 * p.period).clamp(0.0, p.pulse_duration);
    Ok(k as f64 * p.pulse_duration + partial)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalParams {
    /// Single-photon detuning over the optical coherence decay rate.
    pub detuning_ratio: f64,
    pub dipole_scale: f64,
    /// Cell length in optical wavelengths.
    pub cell_wavelengths: f64,
}

impl PhysicalParams {
    pub fn new(detuning_ratio: f64, dipole_scale: f64, cell_wavelengths: f64) -> Result<Self> {
        for (name, v) in [
            ("detuning_ratio", detuning_ratio),
            ("dipole_scale", dipole_scale),
            ("cell_wavelengths", cell_wavelengths),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be finite and positive, got {v}")));
            }
        }
        Ok(Self {
            detuning_ratio,
            dipole_scale,
            cell_wavelengths,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RamanValidity {
    pub ratio: f64,
    pub threshold: f64,
    /// Set when the ratio falls below the threshold.
    pub warning: bool,
}

pub fn raman_validity_ratio(phys: &PhysicalParams) -> RamanValidity {
    raman_validity_with_threshold(phys, DEFAULT_VALIDITY_THRESHOLD)
}

pub fn raman_validity_with_threshold(phys: &PhysicalParams, threshold: f64) -> RamanValidity {
    let ratio = phys.detuning_ratio / phys.dipole_scale * phys.cell_wavelengths;
    RamanValidity {
        ratio,
        threshold,
        warning: ratio < threshold,
    }
}
