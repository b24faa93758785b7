//! Full write–store–read cycle on pulse envelopes, and writing efficiency.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{MemoryConfig, PulseCellProfiles};
use crate::profiles::PulseTrainProfile;
use crate::schmidt::{envelope_from_cells, schmidt_decompose, EnvelopeMatrix, SchmidtModes};

/// Efficiencies above this are reported capped and flagged.
pub const EFFICIENCY_CAP: f64 = 1.02;
/// Trains this long or longer are outside the regime the envelope model
/// was validated for.
pub const VALIDITY_PULSE_LIMIT: usize = 1000;

/// One complex amplitude per pulse, each carrying weight `T0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeField {
    profile: PulseTrainProfile,
    amplitudes: Vec<Complex64>,
}

impl EnvelopeField {
    pub fn new(profile: PulseTrainProfile, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != profile.n_pulses() {
            return Err(Error::DimensionMismatch {
                expected: profile.n_pulses(),
                actual: amplitudes.len(),
            });
        }
        Ok(Self { profile, amplitudes })
    }

    pub fn zeros(profile: PulseTrainProfile) -> Self {
        Self {
            profile,
            amplitudes: vec![Complex64::new(0.0, 0.0); profile.n_pulses()],
        }
    }

    /// `a = X + iY`.
    pub fn from_quadratures(profile: PulseTrainProfile, x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: y.len(),
            });
        }
        Self::new(profile, x.iter().zip(y).map(|(a, b)| Complex64::new(*a, *b)).collect())
    }

    pub fn profile(&self) -> &PulseTrainProfile {
        &self.profile
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn x(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.re).collect()
    }

    pub fn y(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.im).collect()
    }

    /// `T0 sum |a_m|^2`.
    pub fn norm_sqr(&self) -> f64 {
        self.profile.pulse_duration() * self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>()
    }

    /// Time reversal on the pulse grid, pulse `k` to pulse `N-1-k`.
    pub fn reversed(&self) -> Self {
        let mut amplitudes = self.amplitudes.clone();
        amplitudes.reverse();
        Self {
            profile: self.profile,
            amplitudes,
        }
    }
}

/// Everything the full-cycle transform needs: the Schmidt modes of the
/// phase-compensated kernel and the phase-bearing kernel used when the
/// phase shifters are absent.
///
/// The phase-bearing kernel mixes quadratures and is complex symmetric, so
/// it cannot be rebuilt from the real modes and is carried alongside them.
#[derive(Debug, Clone)]
pub struct FullCycle {
    modes: SchmidtModes,
    envelope: EnvelopeMatrix,
    phased: DMatrix<Complex64>,
}

impl FullCycle {
    pub fn modes(&self) -> &SchmidtModes {
        &self.modes
    }

    pub fn envelope(&self) -> &EnvelopeMatrix {
        &self.envelope
    }

    pub fn phased(&self) -> &DMatrix<Complex64> {
        &self.phased
    }

    pub fn profile(&self) -> &PulseTrainProfile {
        self.modes.profile()
    }

    /// Keeps the leading `r` Schmidt modes for the shifted transform.
    pub fn truncated(&self, r: usize) -> Result<Self> {
        Ok(Self {
            modes: self.modes.truncated(r)?,
            envelope: self.envelope.clone(),
            phased: self.phased.clone(),
        })
    }
}

pub fn full_cycle(cfg: &MemoryConfig) -> Result<FullCycle> {
    // The doubling check lives in the envelope builder; run it once.
    let envelope = crate::schmidt::build_envelope_matrix(cfg)?;
    let cells = PulseCellProfiles::for_config(cfg);
    let n = cells.n_cells();
    let mut phased = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        for j in 0..=i {
            let v = cells.phased_product(i, j);
            phased[(i, j)] = v;
            phased[(j, i)] = v;
        }
    }
    let modes = schmidt_decompose(&envelope)?;
    Ok(FullCycle {
        modes,
        envelope,
        phased,
    })
}

/// Output envelope after writing, storage and backward readout.
///
/// With shifters the output is `a_out = -sum_i s_i u_i u_i^T R a_in`, where
/// `R` reverses the pulse order; X and Y evolve separately. Without them the
/// phase-bearing kernel replaces the real one.
pub fn full_cycle_transform(input: &EnvelopeField, cycle: &FullCycle, shifters: bool) -> Result<EnvelopeField> {
    let n = cycle.profile().n_pulses();
    if input.amplitudes.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: input.amplitudes.len(),
        });
    }
    let rev = DVector::from_iterator(n, input.amplitudes.iter().rev().copied());
    let out = if shifters {
        let u = cycle.modes.unit_vectors();
        let s = cycle.modes.singular_values();
        let u_c = u.map(|v| Complex64::new(v, 0.0));
        let mut coeff = u_c.transpose() * rev;
        for (c, si) in coeff.iter_mut().zip(s) {
            *c *= -si;
        }
        u_c * coeff
    } else {
        -(&cycle.phased * rev)
    };
    EnvelopeField::new(*cycle.profile(), out.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WritingEfficiency {
    /// Reported value, capped at [`EFFICIENCY_CAP`].
    pub value: f64,
    pub raw: f64,
    pub capped: bool,
}

/// `E = (1/(T0 N)) sum_i s_i |sum_m T0 phi_i(t_m) exp(i m T0)|^2`; the phase
/// factor is absent with shifters.
pub fn writing_efficiency(modes: &SchmidtModes, p: &PulseTrainProfile, shifters: bool) -> Result<WritingEfficiency> {
    if modes.profile() != p {
        return Err(Error::Consistency(
            "Schmidt modes were built for a different pulse train".into(),
        ));
    }
    let t0 = p.pulse_duration();
    let n = p.n_pulses();
    let mut raw = 0.0;
    for (i, s) in modes.singular_values().iter().enumerate() {
        let phi = modes.mode(i)?;
        let proj: Complex64 = phi
            .iter()
            .enumerate()
            .map(|(m, v)| Complex64::from_polar(t0 * v, if shifters { 0.0 } else { m as f64 * t0 }))
            .sum();
        raw += s * proj.norm_sqr();
    }
    raw /= t0 * n as f64;
    Ok(WritingEfficiency {
        value: raw.min(EFFICIENCY_CAP),
        raw,
        capped: raw > EFFICIENCY_CAP,
    })
}

/// `(1/N) v^H M v` with `v_m = exp(i m T0)` (all ones with shifters): the
/// same quantity as [`writing_efficiency`] without the eigendecomposition.
pub fn envelope_efficiency(m: &EnvelopeMatrix, shifters: bool) -> f64 {
    let n = m.dimension();
    let t0 = m.profile().pulse_duration();
    let v: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(1.0, if shifters { 0.0 } else { k as f64 * t0 }))
        .collect();
    let e = m.entries();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += v[i].conj() * e[(i, j)] * v[j];
        }
    }
    acc.re / n as f64
}

/// Fraction of a flat input stored in the medium, with the intra-pulse
/// phase kept exact rather than sampled once per pulse.
pub fn flat_input_efficiency(cfg: &MemoryConfig, shifters: bool) -> f64 {
    let cells = PulseCellProfiles::for_config(cfg);
    let n = cells.n_cells();
    let w = cells.depth_weights();
    let mut acc = 0.0;
    for q in 0..w.len() {
        let sum: Complex64 = if shifters {
            Complex64::new((0..n).map(|m| cells.real_row(m)[q]).sum(), 0.0)
        } else {
            (0..n).map(|m| cells.phased_row(m)[q]).sum()
        };
        acc += w[q] * sum.norm_sqr();
    }
    cells.pulse_duration() * acc / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyRow {
    pub n_pulses: usize,
    pub length: f64,
    pub shifters: bool,
    pub efficiency: f64,
    pub within_validity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyScan {
    pub rows: Vec<EfficiencyRow>,
}

impl EfficiencyScan {
    pub fn for_length(&self, length: f64) -> Vec<EfficiencyRow> {
        self.rows.iter().filter(|r| r.length == length).copied().collect()
    }
}

/// Efficiency over a grid of depths and train lengths.
///
/// Uses the quadratic form of [`envelope_efficiency`], accumulated as
/// prefix sums over one table of cell profiles per depth, so every train
/// length costs one pass over the depth nodes.
pub fn efficiency_scan(
    lengths: &[f64],
    n_values: &[usize],
    pulse_duration: f64,
    period: f64,
    shifters: bool,
    depth_nodes: usize,
) -> Result<EfficiencyScan> {
    if lengths.is_empty() {
        return Err(Error::param("lengths", "need at least one optical depth"));
    }
    if n_values.is_empty() {
        return Err(Error::param("n_values", "need at least one train length"));
    }
    let n_max = *n_values.iter().max().expect("non-empty");
    if n_values.contains(&0) {
        return Err(Error::param("n_values", "train lengths must be at least 1"));
    }
    PulseTrainProfile::new(n_max, pulse_duration, period)?;
    for &l in lengths {
        crate::kernels::MediumParams::new(l)?;
    }
    // Validates the node count the same way every other entry point does.
    MemoryConfig::new(
        PulseTrainProfile::new(1, pulse_duration, period)?,
        crate::kernels::MediumParams::new(lengths[0])?,
        shifters,
        depth_nodes,
    )?;

    let per_length: Vec<Vec<f64>> = lengths
        .par_iter()
        .map(|&l| {
            let cells = PulseCellProfiles::new(n_max, pulse_duration, l, depth_nodes);
            let w = cells.depth_weights();
            let mut wanted = vec![false; n_max + 1];
            for &n in n_values {
                wanted[n] = true;
            }
            let mut value_at = vec![0.0; n_max + 1];
            let mut acc = vec![Complex64::new(0.0, 0.0); w.len()];
            for m in 0..n_max {
                let v = Complex64::from_polar(1.0, if shifters { 0.0 } else { m as f64 * pulse_duration });
                for (a, b) in acc.iter_mut().zip(cells.real_row(m)) {
                    *a += v * b;
                }
                let count = m + 1;
                if wanted[count] {
                    let s: f64 = w.iter().zip(&acc).map(|(wq, a)| wq * a.norm_sqr()).sum();
                    value_at[count] = pulse_duration * s / count as f64;
                }
            }
            n_values.iter().map(|&n| value_at[n]).collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(lengths.len() * n_values.len());
    for (l, values) in lengths.iter().zip(per_length) {
        for (&n, efficiency) in n_values.iter().zip(values) {
            rows.push(EfficiencyRow {
                n_pulses: n,
                length: *l,
                shifters,
                efficiency,
                within_validity: n < VALIDITY_PULSE_LIMIT,
            });
        }
    }
    Ok(EfficiencyScan { rows })
}

/// Envelope matrix built straight from a cell table, for callers that
/// already hold one.
pub fn envelope_matrix_from_cells(profile: PulseTrainProfile, cells: &PulseCellProfiles) -> Result<EnvelopeMatrix> {
    EnvelopeMatrix::from_matrix(profile, envelope_from_cells(cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::MediumParams;
    use crate::schmidt::build_envelope_matrix;
    use proptest::prelude::*;

    fn cfg(n: usize, t0: f64, t: f64, l: f64) -> MemoryConfig {
        MemoryConfig::with_defaults(
            PulseTrainProfile::new(n, t0, t).unwrap(),
            MediumParams::new(l).unwrap(),
        )
    }

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn field_validates_length() {
        let p = PulseTrainProfile::new(3, 0.1, 1.0).unwrap();
        assert!(EnvelopeField::new(p, vec![cx(1.0, 0.0); 2]).is_err());
        assert!(EnvelopeField::from_quadratures(p, &[1.0; 3], &[0.0; 2]).is_err());
        let f = EnvelopeField::from_quadratures(p, &[1.0, 2.0, 3.0], &[0.0, -1.0, 0.5]).unwrap();
        assert_eq!(f.x(), vec![1.0, 2.0, 3.0]);
        assert_eq!(f.y(), vec![0.0, -1.0, 0.5]);
        assert_eq!(f.reversed().x(), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn paper_efficiency_without_shifters() {
        let c = cfg(90, 0.1, 10_000.0, 10.0);
        let m = build_envelope_matrix(&c).unwrap();
        let modes = schmidt_decompose(&m).unwrap();
        let e = writing_efficiency(&modes, &c.profile, false).unwrap();
        assert!((e.value - 0.9).abs() <= 0.05, "{e:?}");
        assert!(!e.capped);
        assert!((e.raw - envelope_efficiency(&m, false)).abs() < 1e-12);
        let with = writing_efficiency(&modes, &c.profile, true).unwrap();
        assert!((with.raw - envelope_efficiency(&m, true)).abs() < 1e-12);
        assert!(with.raw > e.raw);
    }

    #[test]
    fn envelope_and_exact_phase_agree_closely() {
        let c = cfg(90, 0.1, 10_000.0, 10.0);
        let m = build_envelope_matrix(&c).unwrap();
        assert!((flat_input_efficiency(&c, true) - envelope_efficiency(&m, true)).abs() < 1e-12);
        assert!((flat_input_efficiency(&c, false) - envelope_efficiency(&m, false)).abs() < 0.01);
    }

    #[test]
    fn efficiency_rejects_foreign_modes() {
        let modes = schmidt_decompose(&build_envelope_matrix(&cfg(4, 0.1, 1.0, 2.0)).unwrap()).unwrap();
        let other = PulseTrainProfile::new(4, 0.1, 2.0).unwrap();
        assert!(matches!(writing_efficiency(&modes, &other, false), Err(Error::Consistency(_))));
    }

    #[test]
    fn zero_singular_values_give_zero_efficiency() {
        let p = PulseTrainProfile::new(3, 0.1, 1.0).unwrap();
        let m = EnvelopeMatrix::from_matrix(p, DMatrix::zeros(3, 3)).unwrap();
        let modes = schmidt_decompose(&m).unwrap();
        assert_eq!(writing_efficiency(&modes, &p, false).unwrap().raw, 0.0);
    }

    #[test]
    fn oversized_efficiency_is_capped_and_flagged() {
        let p = PulseTrainProfile::new(2, 0.1, 1.0).unwrap();
        let m = EnvelopeMatrix::from_matrix(p, DMatrix::from_element(2, 2, 0.6)).unwrap();
        let modes = schmidt_decompose(&m).unwrap();
        let e = writing_efficiency(&modes, &p, true).unwrap();
        assert!(e.capped && e.value == EFFICIENCY_CAP && e.raw > EFFICIENCY_CAP);
    }

    #[test]
    fn scan_matches_direct_evaluation() {
        let ns = [1, 2, 7, 30];
        let scan = efficiency_scan(&[3.0, 10.0], &ns, 0.1, 10_000.0, false, 256).unwrap();
        assert_eq!(scan.rows.len(), 8);
        for row in &scan.rows {
            let m = build_envelope_matrix(&cfg(row.n_pulses, 0.1, 10_000.0, row.length)).unwrap();
            assert!((row.efficiency - envelope_efficiency(&m, false)).abs() < 1e-12);
            assert!(row.within_validity);
        }
        let one = &scan.for_length(10.0)[0];
        let m = build_envelope_matrix(&cfg(1, 0.1, 10_000.0, 10.0)).unwrap();
        assert!((one.efficiency - m.entries()[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn scan_validates_inputs_and_tags_long_trains() {
        assert!(efficiency_scan(&[], &[1], 0.1, 1.0, false, 64).is_err());
        assert!(efficiency_scan(&[1.0], &[], 0.1, 1.0, false, 64).is_err());
        assert!(efficiency_scan(&[1.0], &[0], 0.1, 1.0, false, 64).is_err());
        assert!(efficiency_scan(&[1.0], &[1], 0.1, 1.0, false, 4).is_err());
        let scan = efficiency_scan(&[1.0], &[999, 1000], 0.001, 1.0, true, 64).unwrap();
        assert!(scan.rows[0].within_validity && !scan.rows[1].within_validity);
    }

    #[test]
    fn deeper_media_reach_higher_plateaus() {
        let ns: Vec<usize> = (1..=300).collect();
        let scan = efficiency_scan(&[10.0, 30.0, 50.0], &ns, 0.1, 10_000.0, false, 256).unwrap();
        let peak = |l: f64| scan.for_length(l).iter().map(|r| r.efficiency).fold(0.0, f64::max);
        assert!(peak(10.0) < peak(30.0) && peak(30.0) < peak(50.0));
    }

    #[test]
    fn shifted_transform_on_reversed_mode() {
        let c = cfg(30, 0.1, 10_000.0, 10.0);
        let cycle = full_cycle(&c).unwrap();
        let phi: Vec<Complex64> = cycle.modes().mode(0).unwrap().iter().map(|v| cx(*v, 0.0)).collect();
        let input = EnvelopeField::new(c.profile, phi.clone()).unwrap().reversed();
        let out = full_cycle_transform(&input, &cycle, true).unwrap();
        let s1 = cycle.modes().singular_values()[0];
        for (o, p) in out.amplitudes().iter().zip(&phi) {
            assert!((o + p * s1).norm() < 1e-10);
        }
        assert!((out.norm_sqr() / input.norm_sqr() - s1 * s1).abs() < 1e-10);
    }

    #[test]
    fn zero_in_zero_out_and_length_checked() {
        let c = cfg(5, 0.1, 1.0, 2.0);
        let cycle = full_cycle(&c).unwrap();
        for shifters in [true, false] {
            let out = full_cycle_transform(&EnvelopeField::zeros(c.profile), &cycle, shifters).unwrap();
            assert!(out.amplitudes().iter().all(|a| a.norm() == 0.0));
        }
        let wrong = EnvelopeField::zeros(PulseTrainProfile::new(4, 0.1, 1.0).unwrap());
        assert!(full_cycle_transform(&wrong, &cycle, true).is_err());
    }

    #[test]
    fn quadratures_mix_only_without_shifters() {
        let c = cfg(20, 0.1, 10_000.0, 10.0);
        let cycle = full_cycle(&c).unwrap();
        let y: Vec<f64> = (0..20).map(|m| ((m as f64) * 0.3).sin() + 1.0).collect();
        let input = EnvelopeField::from_quadratures(c.profile, &[0.0; 20], &y).unwrap();
        let shifted = full_cycle_transform(&input, &cycle, true).unwrap();
        assert!(shifted.x().iter().all(|v| *v == 0.0));
        let bare = full_cycle_transform(&input, &cycle, false).unwrap();
        let leak: f64 = bare.x().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(leak > 1e-2, "{leak}");
    }

    #[test]
    fn schmidt_basis_is_diagonalized() {
        let c = cfg(25, 0.1, 10_000.0, 10.0);
        let cycle = full_cycle(&c).unwrap();
        let modes = cycle.modes();
        let n = 25;
        let t0 = 0.1;
        let mut t = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let phi = modes.mode(j).unwrap();
            let input = EnvelopeField::new(c.profile, phi.iter().map(|v| cx(*v, 0.0)).collect()).unwrap().reversed();
            let out = full_cycle_transform(&input, &cycle, true).unwrap();
            for i in 0..n {
                let phi_i = modes.mode(i).unwrap();
                t[(i, j)] = out.amplitudes().iter().zip(&phi_i).map(|(a, p)| a.re * p * t0).sum();
            }
        }
        let want = -DMatrix::from_diagonal(&DVector::from_column_slice(modes.singular_values()));
        assert!((t - want).amax() < 1e-10);
    }

    #[test]
    fn truncated_cycle_uses_fewer_modes() {
        let c = cfg(20, 0.1, 10_000.0, 10.0);
        let cycle = full_cycle(&c).unwrap();
        let t = cycle.truncated(0).unwrap();
        let input = EnvelopeField::new(c.profile, vec![cx(1.0, 0.0); 20]).unwrap();
        let out = full_cycle_transform(&input, &t, true).unwrap();
        assert!(out.norm_sqr() == 0.0);
        let m = envelope_matrix_from_cells(c.profile, &PulseCellProfiles::for_config(&c)).unwrap();
        assert_eq!(m.entries(), cycle.envelope().entries());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn transform_is_contractive(seed in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 12), shifters in any::<bool>()) {
            let c = cfg(12, 0.15, 5.0, 6.0);
            let cycle = full_cycle(&c).unwrap();
            let input = EnvelopeField::new(c.profile, seed.iter().map(|(a, b)| cx(*a, *b)).collect()).unwrap();
            let out = full_cycle_transform(&input, &cycle, shifters).unwrap();
            // Without shifters the phased kernel is still a contraction.
            let smax = if shifters { cycle.modes().singular_values()[0] } else { 1.0 };
            prop_assert!(out.norm_sqr() <= input.norm_sqr() * smax * smax * (1.0 + 1e-9) + 1e-15);
        }
    }
}
