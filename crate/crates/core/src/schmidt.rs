//! Envelope discretization of the full-cycle kernel and its Schmidt modes.
//!
//! The kernel is projected onto one basis function per pulse (the pulse-cell
//! profiles of [`PulseCellProfiles`]). The resulting matrix is a Gram matrix
//! of depth profiles whose eigenvalues lie in `[0, 1]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::{MemoryConfig, PulseCellProfiles, QUADRATURE_TOLERANCE};
use crate::profiles::PulseTrainProfile;

/// Eigenvalues below this are treated as a broken matrix rather than rounding.
pub const NEGATIVE_EIGENVALUE_LIMIT: f64 = -1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeMatrix {
    profile: PulseTrainProfile,
    entries: DMatrix<f64>,
}

impl EnvelopeMatrix {
    /// Wraps an externally built matrix. It must be square, sized to the
    /// profile and symmetric.
    pub fn from_matrix(profile: PulseTrainProfile, entries: DMatrix<f64>) -> Result<Self> {
        let n = profile.n_pulses();
        if entries.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: entries.nrows(),
            });
        }
        if entries.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: entries.ncols(),
            });
        }
        let asym = asymmetry(&entries);
        if asym > 1e-12 * entries.amax().max(1.0) {
            return Err(Error::Consistency(format!(
                "envelope matrix is not symmetric (max |M - M^T| = {asym:e})"
            )));
        }
        Ok(Self { profile, entries })
    }

    pub fn profile(&self) -> &PulseTrainProfile {
        &self.profile
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.entries.nrows()
    }
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Builds `M[m][k] = T0 ∫ b_m(z) b_k(z) dz` from the pulse-cell profiles.
///
/// A handful of entries spread over the matrix are recomputed with twice
/// the depth nodes; if any moves by more than the tolerance relative to
/// `T0 L` (the bound on every entry) the build fails.
pub fn build_envelope_matrix(cfg: &MemoryConfig) -> Result<EnvelopeMatrix> {
    let cells = PulseCellProfiles::for_config(cfg);
    let entries = envelope_from_cells(&cells);
    check_depth_convergence(cfg, &entries)?;
    Ok(EnvelopeMatrix {
        profile: cfg.profile,
        entries,
    })
}

pub(crate) fn envelope_from_cells(cells: &PulseCellProfiles) -> DMatrix<f64> {
    let n = cells.n_cells();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = cells.real_product(i, j);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn check_depth_convergence(cfg: &MemoryConfig, entries: &DMatrix<f64>) -> Result<()> {
    let n = cfg.profile.n_pulses();
    let mut probe = vec![0, n / 2, n - 1];
    probe.dedup();
    let fine = PulseCellProfiles::for_cells(
        &probe,
        cfg.profile.pulse_duration(),
        cfg.length(),
        2 * cfg.quadrature_nodes(),
    );
    let scale = cfg.profile.pulse_duration() * cfg.length();
    let mut change: f64 = 0.0;
    for (a, &i) in probe.iter().enumerate() {
        for (b, &j) in probe.iter().enumerate() {
            change = change.max((fine.real_product(a, b) - entries[(i, j)]).abs() / scale);
        }
    }
    if change > QUADRATURE_TOLERANCE {
        return Err(Error::Quadrature {
            change,
            tolerance: QUADRATURE_TOLERANCE,
        });
    }
    Ok(())
}

/// Schmidt decomposition of the envelope kernel.
///
/// `singular_values[i]` is the `i`-th eigenvalue of the envelope matrix in
/// descending order. Mode samples are `phi_i(t_m) = u_i[m] / sqrt(T0)` for
/// unit eigenvectors `u_i`, so that `sum_m phi_i phi_j T0 = delta_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtModes {
    profile: PulseTrainProfile,
    singular_values: Vec<f64>,
    vectors: DMatrix<f64>,
    clipped: f64,
}

impl SchmidtModes {
    pub fn profile(&self) -> &PulseTrainProfile {
        &self.profile
    }

    pub fn count(&self) -> usize {
        self.singular_values.len()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Magnitude of the most negative eigenvalue clipped to zero.
    pub fn clipped(&self) -> f64 {
        self.clipped
    }

    /// Unit eigenvectors as columns.
    pub fn unit_vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn unit_vector(&self, i: usize) -> Result<DVector<f64>> {
        self.check_index(i)?;
        Ok(self.vectors.column(i).into_owned())
    }

    /// `phi_i(t_m)` for every pulse.
    pub fn mode(&self, i: usize) -> Result<Vec<f64>> {
        self.check_index(i)?;
        let scale = 1.0 / self.profile.pulse_duration().sqrt();
        Ok(self.vectors.column(i).iter().map(|u| u * scale).collect())
    }

    /// `sqrt(T/T0) phi_i(t_m)`, normalized over the full train duration.
    pub fn envelope_mode(&self, i: usize) -> Result<Vec<f64>> {
        let p = &self.profile;
        let scale = (p.period() / p.pulse_duration()).sqrt();
        Ok(self.mode(i)?.into_iter().map(|v| v * scale).collect())
    }

    /// Keeps the leading `r` modes.
    pub fn truncated(&self, r: usize) -> Result<Self> {
        if r > self.count() {
            return Err(Error::Index {
                index: r,
                len: self.count() + 1,
            });
        }
        Ok(Self {
            profile: self.profile,
            singular_values: self.singular_values[..r].to_vec(),
            vectors: self.vectors.columns(0, r).into_owned(),
            clipped: self.clipped,
        })
    }

    /// `sum_i s_i u_i u_i^T`, the envelope matrix restricted to these modes.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(&self.singular_values));
        &self.vectors * s * self.vectors.transpose()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.count() {
            return Err(Error::Index {
                index: i,
                len: self.count(),
            });
        }
        Ok(())
    }
}

pub fn schmidt_decompose(m: &EnvelopeMatrix) -> Result<SchmidtModes> {
    let n = m.dimension();
    let eig = SymmetricEigen::try_new(m.entries.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Eigen(format!("symmetric eigensolver did not converge on a {n}x{n} matrix")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut singular_values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    let mut clipped: f64 = 0.0;
    for (col, &idx) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[idx];
        if !lambda.is_finite() {
            return Err(Error::Eigen(format!("non-finite eigenvalue {lambda}")));
        }
        if lambda < NEGATIVE_EIGENVALUE_LIMIT {
            return Err(Error::Consistency(format!(
                "envelope matrix has eigenvalue {lambda:e}; it should be positive semidefinite"
            )));
        }
        if lambda < 0.0 {
            clipped = clipped.max(-lambda);
        }
        singular_values.push(lambda.max(0.0));
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let peak = v.amax();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * peak) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        vectors.set_column(col, &v);
    }
    Ok(SchmidtModes {
        profile: m.profile,
        singular_values,
        vectors,
        clipped,
    })
}

/// Zero-frequency component of mode `i`,
/// `(1/sqrt(T_W)) sum_m T0 phi_i(t_m) exp(i m T0)`. The phase factor is
/// dropped when `with_phase` is false, which is what ideal phase shifters
/// see.
pub fn mode_zero_frequency(modes: &SchmidtModes, i: usize, with_phase: bool) -> Result<Complex64> {
    let phi = modes.mode(i)?;
    let p = modes.profile();
    let t0 = p.pulse_duration();
    let sum: Complex64 = phi
        .iter()
        .enumerate()
        .map(|(m, v)| {
            let angle = if with_phase { m as f64 * t0 } else { 0.0 };
            Complex64::from_polar(t0 * v, angle)
        })
        .sum();
    Ok(sum / p.train_duration().sqrt())
}
