//! Statistics of the squeezed pulse train from a synchronously pumped OPO
//! below threshold: pulse-pair correlator, input spectrum and supermodes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::profiles::PulseTrainProfile;
use crate::spectra::{FrequencyGrid, NoiseSpectrum, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpopoSource {
    kappa_t: f64,
    profile: PulseTrainProfile,
}

impl SpopoSource {
    /// `kappa_t` is the cavity linewidth times the repetition period. Zero is
    /// allowed and describes an unsqueezed (shot-noise) train.
    pub fn new(kappa_t: f64, profile: PulseTrainProfile) -> Result<Self> {
        if !(kappa_t.is_finite() && kappa_t >= 0.0) {
            return Err(Error::param("kappa_t", format!("must be finite and non-negative, got {kappa_t}")));
        }
        Ok(Self { kappa_t, profile })
    }

    pub fn kappa_t(&self) -> f64 {
        self.kappa_t
    }

    pub fn profile(&self) -> &PulseTrainProfile {
        &self.profile
    }

    pub fn n_pulses(&self) -> usize {
        self.profile.n_pulses()
    }

    /// `E[m][k] = exp(-kT |m - k|)`.
    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        let n = self.n_pulses();
        let decay: Vec<f64> = (0..n).map(|d| (-self.kappa_t * d as f64).exp()).collect();
        DMatrix::from_fn(n, n, |m, k| decay[m.abs_diff(k)])
    }
}

/// Normally ordered Y-quadrature correlator between pulses `n` and `n'`
/// (1-based): `-(kT / 8N) exp(-kT |n - n'|)`.
pub fn input_pulse_correlator(src: &SpopoSource, n: usize, np: usize) -> Result<f64> {
    let len = src.n_pulses();
    for idx in [n, np] {
        if idx == 0 || idx > len {
            return Err(Error::Index { index: idx, len: len + 1 });
        }
    }
    let kt = src.kappa_t;
    Ok(-kt / (8.0 * len as f64) * (-kt * n.abs_diff(np) as f64).exp())
}

/// `S_in(w) = 1 - (kT/2N) [N + 2 sum_{d>=1} (N-d) exp(-kT d) cos(d T w)]`.
pub fn input_spectrum(src: &SpopoSource, grid: &FrequencyGrid) -> NoiseSpectrum {
    let n = src.n_pulses();
    let kt = src.kappa_t;
    let period = src.profile.period();
    let weights: Vec<f64> = (1..n).map(|d| (n - d) as f64 * (-kt * d as f64).exp()).collect();
    let values = grid
        .omega()
        .iter()
        .map(|&w| {
            let theta = period * w;
            let off: f64 = weights.iter().enumerate().map(|(i, c)| c * ((i + 1) as f64 * theta).cos()).sum();
            1.0 - kt / (2.0 * n as f64) * (n as f64 + 2.0 * off)
        })
        .collect();
    NoiseSpectrum {
        stage: Stage::Input,
        omega: grid.omega().to_vec(),
        values,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SupermodeKind {
    /// Hermite–Gauss functions of the pulse index.
    Hermite { center: f64, width: f64 },
    /// Eigenvectors of the pulse correlation matrix.
    Empirical { eigenvalues: Vec<f64> },
}

/// Supermode functions sampled on the pulse grid, orthonormal under the
/// weight `T0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupermodeBasis {
    kind: SupermodeKind,
    pulse_duration: f64,
    /// Unit vectors (weight 1) as columns.
    vectors: DMatrix<f64>,
}

impl SupermodeBasis {
    pub fn kind(&self) -> &SupermodeKind {
        &self.kind
    }

    pub fn count(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn n_pulses(&self) -> usize {
        self.vectors.nrows()
    }

    /// `L_k(t_m)`.
    pub fn function(&self, k: usize) -> Result<Vec<f64>> {
        let scale = 1.0 / self.pulse_duration.sqrt();
        Ok(self.unit_vector(k)?.iter().map(|v| v * scale).collect())
    }

    /// `sqrt(T0) L_k`, a unit vector.
    pub fn unit_vector(&self, k: usize) -> Result<DVector<f64>> {
        if k >= self.count() {
            return Err(Error::Index { index: k, len: self.count() });
        }
        Ok(self.vectors.column(k).into_owned())
    }

    pub fn unit_vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }
}

/// Overlaps `sum_m T0 L_j(t_m) L'_k(t_m)` between two bases on one grid.
pub fn basis_overlap(a: &SupermodeBasis, b: &SupermodeBasis) -> Result<DMatrix<f64>> {
    if a.n_pulses() != b.n_pulses() {
        return Err(Error::DimensionMismatch {
            expected: a.n_pulses(),
            actual: b.n_pulses(),
        });
    }
    Ok(a.vectors.transpose() * &b.vectors)
}

fn hermite_functions(x: f64, count: usize) -> Vec<f64> {
    // Normalized Hermite functions by their three-term recurrence, which
    // stays bounded where the polynomials themselves would overflow.
    let mut out = Vec::with_capacity(count);
    let mut prev = 0.0;
    let mut cur = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    for k in 0..count {
        out.push(cur);
        let kf = (k + 1) as f64;
        let next = (2.0 / kf).sqrt() * x * cur - ((kf - 1.0) / kf).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    out
}

/// The first `count` Hermite–Gauss supermodes of the envelope, centered on
/// the middle pulse with `width` measured in pulses, orthonormalized on the
/// grid by modified Gram–Schmidt.
pub fn hermite_supermodes(p: &PulseTrainProfile, width: f64, count: usize) -> Result<SupermodeBasis> {
    let n = p.n_pulses();
    if count > n {
        return Err(Error::param("count", format!("{count} supermodes requested for {n} pulses")));
    }
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::param("width", format!("must be finite and positive, got {width}")));
    }
    let center = (n as f64 - 1.0) / 2.0;
    let samples: Vec<Vec<f64>> = (0..n).map(|m| hermite_functions((m as f64 - center) / width, count)).collect();
    let mut vectors = DMatrix::zeros(n, count);
    for k in 0..count {
        let mut v = DVector::from_fn(n, |m, _| samples[m][k]);
        let raw = v.norm();
        for j in 0..k {
            let q = vectors.column(j);
            let c = q.dot(&v);
            v.axpy(-c, &q, 1.0);
        }
        let norm = v.norm();
        if !(norm > 1e-10 * raw) {
            return Err(Error::Consistency(format!(
                "Hermite supermode {k} is numerically dependent on lower modes at width {width}"
            )));
        }
        vectors.set_column(k, &(v / norm));
    }
    Ok(SupermodeBasis {
        kind: SupermodeKind::Hermite { center, width },
        pulse_duration: p.pulse_duration(),
        vectors,
    })
}

/// Leading `count` eigenvectors of the pulse correlation matrix, in
/// descending eigenvalue order with the first nonzero sample positive.
pub fn empirical_supermodes(src: &SpopoSource, count: usize) -> Result<SupermodeBasis> {
    let n = src.n_pulses();
    if count > n {
        return Err(Error::param("count", format!("{count} supermodes requested for {n} pulses")));
    }
    let eig = SymmetricEigen::try_new(src.correlation_matrix(), 1e-15, 10_000)
        .ok_or_else(|| Error::Eigen("correlation matrix eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut vectors = DMatrix::zeros(n, count);
    let mut eigenvalues = Vec::with_capacity(count);
    for (col, &idx) in order.iter().take(count).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let peak = v.amax();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * peak) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        vectors.set_column(col, &v);
        eigenvalues.push(eig.eigenvalues[idx]);
    }
    Ok(SupermodeBasis {
        kind: SupermodeKind::Empirical { eigenvalues },
        pulse_duration: src.profile.pulse_duration(),
        vectors,
    })
}

/// Eigenvalues of the correlation matrix, descending.
pub fn correlation_spectrum(src: &SpopoSource) -> Vec<f64> {
    let mut ev: Vec<f64> = src.correlation_matrix().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Hermite width (in pulses) whose lowest mode best overlaps the leading
/// empirical supermode, by golden-section search on a log scale.
pub fn matched_hermite_width(src: &SpopoSource) -> Result<f64> {
    let lead = empirical_supermodes(src, 1)?.unit_vector(0)?;
    let n = src.n_pulses();
    let overlap = |log_w: f64| -> f64 {
        hermite_supermodes(&src.profile, log_w.exp(), 1)
            .map(|b| b.vectors.column(0).dot(&lead).abs())
            .unwrap_or(0.0)
    };
    let (mut lo, mut hi) = (0.25f64.ln(), (4.0 * n as f64).ln());
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (overlap(a), overlap(b));
    for _ in 0..80 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = overlap(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = overlap(a);
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
