//! Direct integration of the coupled field/spin equations, as an
//! independent check on the analytic kernels.
//!
//! In the retarded frame the pair reads
//!
//! ```text
//! da/dz = -i F b - i beta a
//! db/dx = -i F b - i F a
//! ```
//!
//! on the rectangle `x in [0, X]`, `z in [0, L]`. The box scheme below works
//! on cells of that rectangle: `a` crosses each cell upward in `z`, `b`
//! crosses it forward in `x`, and both equations are enforced at the cell
//! center with trapezoidal averages. This is second order and conserves the
//! discrete flux `dx |a|^2 + dz |b|^2` exactly, so the excitation budget is a
//! check on round-off and on the bookkeeping rather than a tolerance.
//!
//! Between pulses `F = 0` freezes both fields in this frame, so only driven
//! time is integrated; [`integrate_write_through_gaps`] marches through the
//! gaps instead and exists to confirm that.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{
    read_kernel, read_kernel_in_pulse, write_convolution, write_kernel, write_kernel_in_pulse, MediumParams,
    MemoryConfig,
};
use crate::memory::{full_cycle, full_cycle_transform, EnvelopeField};
use crate::profiles::{comb_profile, PulseTrainProfile};
use crate::quadrature::GaussLegendre;

pub const DEFAULT_DEPTH_CELLS: usize = 200;
pub const DEFAULT_PULSE_CELLS: usize = 50;
/// A budget off by more than this fraction means the march went wrong.
pub const BUDGET_LIMIT: f64 = 1e-4;
pub const EQUIVALENCE_THRESHOLD: f64 = 1e-3;
pub const MIN_CONVERGENCE_RATIO: f64 = 2.0;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Cell counts of the solver mesh: `depth_cells` across the medium and
/// `pulse_cells` across each pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SolverGrid {
    depth_cells: usize,
    pulse_cells: usize,
}

impl Default for SolverGrid {
    fn default() -> Self {
        Self {
            depth_cells: DEFAULT_DEPTH_CELLS,
            pulse_cells: DEFAULT_PULSE_CELLS,
        }
    }
}

impl SolverGrid {
    pub fn new(depth_cells: usize, pulse_cells: usize) -> Result<Self> {
        if depth_cells == 0 {
            return Err(Error::param("depth_cells", "need at least one depth cell"));
        }
        if pulse_cells == 0 {
            return Err(Error::param("pulse_cells", "need at least one cell per pulse"));
        }
        Ok(Self {
            depth_cells,
            pulse_cells,
        })
    }

    pub fn depth_cells(&self) -> usize {
        self.depth_cells
    }

    pub fn pulse_cells(&self) -> usize {
        self.pulse_cells
    }

    pub fn dz(&self, length: f64) -> f64 {
        length / self.depth_cells as f64
    }

    pub fn dtau(&self, pulse_duration: f64) -> f64 {
        pulse_duration / self.pulse_cells as f64
    }

    /// Both steps halved.
    pub fn refined(&self) -> Self {
        Self {
            depth_cells: 2 * self.depth_cells,
            pulse_cells: 2 * self.pulse_cells,
        }
    }
}

/// Field samples resolved inside each pulse: `pulse_cells` cell averages
/// per pulse, pulse after pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseResolvedField {
    profile: PulseTrainProfile,
    pulse_cells: usize,
    values: Vec<Complex64>,
}

impl PulseResolvedField {
    pub fn new(profile: PulseTrainProfile, pulse_cells: usize, values: Vec<Complex64>) -> Result<Self> {
        let expected = profile.n_pulses() * pulse_cells;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            profile,
            pulse_cells,
            values,
        })
    }

    /// Constant within each pulse.
    pub fn from_envelope(field: &EnvelopeField, pulse_cells: usize) -> Self {
        let values = field
            .amplitudes()
            .iter()
            .flat_map(|a| std::iter::repeat_n(*a, pulse_cells))
            .collect();
        Self {
            profile: *field.profile(),
            pulse_cells,
            values,
        }
    }

    pub fn profile(&self) -> &PulseTrainProfile {
        &self.profile
    }

    pub fn pulse_cells(&self) -> usize {
        self.pulse_cells
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Per-pulse averages.
    pub fn envelope(&self) -> EnvelopeField {
        let p = self.pulse_cells as f64;
        let amps = self
            .values
            .chunks(self.pulse_cells)
            .map(|c| c.iter().sum::<Complex64>() / p)
            .collect();
        EnvelopeField::new(self.profile, amps).expect("chunk count equals pulse count")
    }

    /// `dtau sum |a|^2`.
    pub fn flux(&self) -> f64 {
        let dtau = self.profile.pulse_duration() / self.pulse_cells as f64;
        dtau * self.values.iter().map(|a| a.norm_sqr()).sum::<f64>()
    }
}

/// Spin coherence on the centers of equal depth cells covering `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumState {
    length: f64,
    values: Vec<Complex64>,
}

impl MediumState {
    pub fn new(length: f64, values: Vec<Complex64>) -> Result<Self> {
        MediumParams::new(length)?;
        if values.is_empty() {
            return Err(Error::param("values", "medium state needs at least one depth cell"));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::param("values", "medium state has non-finite samples"));
        }
        Ok(Self { length, values })
    }

    pub fn empty(length: f64, cells: usize) -> Result<Self> {
        Self::new(length, vec![ZERO; cells])
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn dz(&self) -> f64 {
        self.length / self.values.len() as f64
    }

    /// Center of depth cell `j`.
    pub fn depth(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dz()
    }

    /// `z -> L - z`.
    pub fn reflected(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        Self {
            length: self.length,
            values,
        }
    }

    /// `dz sum |b|^2`, the stored excitation.
    pub fn excitation(&self) -> f64 {
        self.dz() * self.values.iter().map(|b| b.norm_sqr()).sum::<f64>()
    }
}

/// Flux accounting of one march: what came in (field plus initial
/// coherence) against what left (transmitted field) and what stayed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcitationBudget {
    pub input: f64,
    pub stored: f64,
    pub transmitted: f64,
    /// `|input - stored - transmitted| / input`.
    pub relative_violation: f64,
    /// The same balance restricted to `[0, z_j]`, worst over all `j`.
    pub worst_slice_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WriteOutcome {
    pub state: MediumState,
    pub transmitted: PulseResolvedField,
    pub budget: ExcitationBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadOutcome {
    pub output: PulseResolvedField,
    pub residual: MediumState,
    pub budget: ExcitationBudget,
}

/// One box-scheme cell as a linear map `(A, B) -> (A', B')`.
#[derive(Clone, Copy)]
struct CellMap {
    aa: Complex64,
    ab: Complex64,
    ba: Complex64,
    bb: Complex64,
}

impl CellMap {
    fn new(coupling: f64, dx: f64, dz: f64, beta: f64) -> Self {
        let i = Complex64::new(0.0, 1.0);
        if coupling == 0.0 && beta == 0.0 {
            let one = Complex64::new(1.0, 0.0);
            return Self { aa: one, ab: ZERO, ba: ZERO, bb: one };
        }
        let p = coupling * dz / 2.0;
        let q = coupling * dx / 2.0;
        let alpha = i * (beta * dz / 2.0);
        let one = Complex64::new(1.0, 0.0);
        let det = (one + alpha) * (one + i * q) + p * q;
        Self {
            aa: ((one + i * q) * (one - alpha) - p * q) / det,
            ab: -2.0 * i * p / det,
            ba: -2.0 * i * q / det,
            bb: ((one + alpha) * (one - i * q) - p * q) / det,
        }
    }
}

struct March {
    transmitted: Vec<Complex64>,
    /// `dx sum |a|^2` through each depth level `0..=depth_cells`.
    level_flux: Vec<f64>,
}

/// Marches every time cell through the medium. `maps[i]` is the cell map
/// for time cell `i`; `b` holds the coherence per depth cell and is updated
/// in place.
fn march(a_in: &[Complex64], maps: &[CellMap], b: &mut [Complex64], dx: f64) -> March {
    let mut transmitted = Vec::with_capacity(a_in.len());
    let mut level_flux = vec![0.0; b.len() + 1];
    for (a0, map) in a_in.iter().zip(maps) {
        let mut a = *a0;
        level_flux[0] += dx * a.norm_sqr();
        for (j, bj) in b.iter_mut().enumerate() {
            let a_next = map.aa * a + map.ab * *bj;
            *bj = map.ba * a + map.bb * *bj;
            a = a_next;
            level_flux[j + 1] += dx * a.norm_sqr();
        }
        transmitted.push(a);
    }
    March {
        transmitted,
        level_flux,
    }
}

fn budget(before: &[Complex64], after: &[Complex64], m: &March, dz: f64) -> ExcitationBudget {
    let field_in = m.level_flux[0];
    let field_out = *m.level_flux.last().expect("at least one level");
    let mut initial = 0.0;
    let mut stored = 0.0;
    let mut worst: f64 = 0.0;
    let total_in = field_in + dz * before.iter().map(|b| b.norm_sqr()).sum::<f64>();
    let scale = if total_in > 0.0 { total_in } else { 1.0 };
    for j in 0..before.len() {
        initial += dz * before[j].norm_sqr();
        stored += dz * after[j].norm_sqr();
        let slice = (field_in + initial - m.level_flux[j + 1] - stored).abs() / scale;
        worst = worst.max(slice);
    }
    ExcitationBudget {
        input: total_in,
        stored,
        transmitted: field_out,
        relative_violation: (total_in - stored - field_out).abs() / scale,
        worst_slice_violation: worst,
    }
}

fn check_budget(b: &ExcitationBudget) -> Result<()> {
    let violation = b.relative_violation.max(b.worst_slice_violation);
    if !(violation <= BUDGET_LIMIT) {
        return Err(Error::Instability { violation });
    }
    Ok(())
}

fn check_field(field: &PulseResolvedField, cfg: &MemoryConfig, grid: &SolverGrid) -> Result<()> {
    if field.profile != cfg.profile {
        return Err(Error::Consistency("input field belongs to a different pulse train".into()));
    }
    if field.pulse_cells != grid.pulse_cells {
        return Err(Error::DimensionMismatch {
            expected: grid.pulse_cells,
            actual: field.pulse_cells,
        });
    }
    Ok(())
}

/// Pulse area at the center of every time cell.
fn cell_areas(p: &PulseTrainProfile, grid: &SolverGrid) -> Vec<f64> {
    let dx = grid.dtau(p.pulse_duration());
    (0..p.n_pulses() * grid.pulse_cells).map(|i| (i as f64 + 0.5) * dx).collect()
}

/// Writing stage from an empty medium. With `cfg.phase_shifters` the input
/// first passes an ideal shifter that cancels the drive phase still to be
/// accumulated.
pub fn integrate_write(input: &PulseResolvedField, cfg: &MemoryConfig, grid: &SolverGrid) -> Result<WriteOutcome> {
    integrate_write_with_shift(input, cfg, grid, 0.0)
}

/// [`integrate_write`] with the small two-photon detuning term restored.
pub fn integrate_write_with_shift(
    input: &PulseResolvedField,
    cfg: &MemoryConfig,
    grid: &SolverGrid,
    raman_shift: f64,
) -> Result<WriteOutcome> {
    check_field(input, cfg, grid)?;
    let p = &cfg.profile;
    let dx = grid.dtau(p.pulse_duration());
    let dz = grid.dz(cfg.length());
    let area = p.pulse_area();
    let a_in: Vec<Complex64> = if cfg.phase_shifters {
        input
            .values
            .iter()
            .zip(cell_areas(p, grid))
            .map(|(a, x)| a * Complex64::from_polar(1.0, area - x))
            .collect()
    } else {
        input.values.clone()
    };
    let maps = vec![CellMap::new(1.0, dx, dz, raman_shift); a_in.len()];
    let mut b = vec![ZERO; grid.depth_cells];
    let m = march(&a_in, &maps, &mut b, dx);
    let budget = budget(&vec![ZERO; grid.depth_cells], &b, &m, dz);
    check_budget(&budget)?;
    Ok(WriteOutcome {
        state: MediumState::new(cfg.length(), b)?,
        transmitted: PulseResolvedField::new(*p, grid.pulse_cells, m.transmitted)?,
        budget,
    })
}

/// Writing stage marched through the dead time between pulses as well. The
/// gap must be a whole number of time cells.
pub fn integrate_write_through_gaps(
    input: &PulseResolvedField,
    cfg: &MemoryConfig,
    grid: &SolverGrid,
) -> Result<WriteOutcome> {
    check_field(input, cfg, grid)?;
    let p = &cfg.profile;
    let dx = grid.dtau(p.pulse_duration());
    let dz = grid.dz(cfg.length());
    let gap = (p.period() - p.pulse_duration()) / dx;
    let gap_cells = gap.round();
    if (gap - gap_cells).abs() > 1e-6 {
        return Err(Error::param(
            "period",
            "the gap between pulses must be a whole number of time cells",
        ));
    }
    let gap_cells = gap_cells as usize;
    let per_period = grid.pulse_cells + gap_cells;
    let total = (p.n_pulses() - 1) * per_period + grid.pulse_cells;
    let mut a_in = Vec::with_capacity(total);
    let mut maps = Vec::with_capacity(total);
    let mut driven_index = Vec::with_capacity(input.values.len());
    let driven = CellMap::new(1.0, dx, dz, 0.0);
    let idle = CellMap::new(0.0, dx, dz, 0.0);
    for i in 0..total {
        let k = i / per_period;
        let r = i % per_period;
        let centre = k as f64 * p.period() + (r as f64 + 0.5) * dx;
        if comb_profile(p, centre) == 1.0 && r < grid.pulse_cells {
            let idx = k * grid.pulse_cells + r;
            let a = input.values[idx];
            a_in.push(if cfg.phase_shifters {
                let x = (idx as f64 + 0.5) * dx;
                a * Complex64::from_polar(1.0, p.pulse_area() - x)
            } else {
                a
            });
            maps.push(driven);
            driven_index.push(i);
        } else {
            a_in.push(ZERO);
            maps.push(idle);
        }
    }
    let mut b = vec![ZERO; grid.depth_cells];
    let m = march(&a_in, &maps, &mut b, dx);
    let budget = budget(&vec![ZERO; grid.depth_cells], &b, &m, dz);
    check_budget(&budget)?;
    let transmitted = driven_index.iter().map(|&i| m.transmitted[i]).collect();
    Ok(WriteOutcome {
        state: MediumState::new(cfg.length(), b)?,
        transmitted: PulseResolvedField::new(*p, grid.pulse_cells, transmitted)?,
        budget,
    })
}

/// Backward readout: the stored coherence is reflected in depth and the
/// medium is driven again with no signal input. With `cfg.phase_shifters`
/// the emitted field passes an ideal shifter that removes the drive phase.
pub fn integrate_read(state: &MediumState, cfg: &MemoryConfig, grid: &SolverGrid) -> Result<ReadOutcome> {
    integrate_read_with_shift(state, cfg, grid, 0.0)
}

pub fn integrate_read_with_shift(
    state: &MediumState,
    cfg: &MemoryConfig,
    grid: &SolverGrid,
    raman_shift: f64,
) -> Result<ReadOutcome> {
    if state.values.len() != grid.depth_cells {
        return Err(Error::DimensionMismatch {
            expected: grid.depth_cells,
            actual: state.values.len(),
        });
    }
    if (state.length - cfg.length()).abs() > 1e-12 * cfg.length() {
        return Err(Error::Consistency("medium state has a different length".into()));
    }
    let p = &cfg.profile;
    let dx = grid.dtau(p.pulse_duration());
    let dz = grid.dz(cfg.length());
    let cells = p.n_pulses() * grid.pulse_cells;
    let before = state.reflected().values;
    let mut b = before.clone();
    let maps = vec![CellMap::new(1.0, dx, dz, raman_shift); cells];
    let m = march(&vec![ZERO; cells], &maps, &mut b, dx);
    let budget = budget(&before, &b, &m, dz);
    check_budget(&budget)?;
    let output = if cfg.phase_shifters {
        m.transmitted
            .iter()
            .zip(cell_areas(p, grid))
            .map(|(a, x)| a * Complex64::from_polar(1.0, x))
            .collect()
    } else {
        m.transmitted
    };
    Ok(ReadOutcome {
        output: PulseResolvedField::new(*p, grid.pulse_cells, output)?,
        residual: MediumState::new(cfg.length(), b)?,
        budget,
    })
}

/// Coherence predicted by the write kernel for a field constant within each
/// pulse, at the depth-cell centers of `grid`.
pub fn kernel_written_state(input: &EnvelopeField, cfg: &MemoryConfig, grid: &SolverGrid) -> Result<MediumState> {
    let p = &cfg.profile;
    let nodes = 8 + (2.0 * (cfg.length() * p.pulse_duration()).sqrt()).ceil() as usize + 4;
    let amps = input.amplitudes();
    let dz = grid.dz(cfg.length());
    let area = p.pulse_area();
    let t0 = p.pulse_duration();
    let shifters = cfg.phase_shifters;
    let values = (0..grid.depth_cells)
        .into_par_iter()
        .map(|j| {
            let z = (j as f64 + 0.5) * dz;
            write_convolution(cfg, z, nodes, |k, s| {
                let a = amps[k];
                if shifters {
                    a * Complex64::from_polar(1.0, area - (k as f64 * t0 + s))
                } else {
                    a
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MediumState::new(cfg.length(), values)
}

fn relative_l2(got: &[Complex64], want: &[Complex64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = want.iter().map(|b| b.norm_sqr()).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceCase {
    pub n_pulses: usize,
    pub length: f64,
    /// Stored coherence against the write-kernel convolution, flat input.
    pub write_error: f64,
    /// Write then read against the envelope full-cycle transform, random input.
    pub chain_error: f64,
    pub refined_write_error: f64,
    pub refined_chain_error: f64,
    /// Smaller of the two error ratios coarse/refined.
    pub convergence_ratio: f64,
    pub budget_violation: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub threshold: f64,
    pub min_convergence_ratio: f64,
    pub seed: u64,
    pub pulse_duration: f64,
    pub period: f64,
    pub grid: SolverGrid,
    pub cases: Vec<EquivalenceCase>,
    pub max_error: f64,
    pub worst_convergence_ratio: f64,
    pub passed: bool,
}

pub const EQUIVALENCE_PULSES: [usize; 3] = [1, 5, 20];
pub const EQUIVALENCE_LENGTHS: [f64; 2] = [2.0, 10.0];

/// Runs the direct integrator against the kernels over a small sweep of
/// train lengths and depths, at `grid` and at `grid.refined()`.
///
/// Pulse duration, period and quadrature nodes come from `cfg`; the sweep
/// always runs without phase shifters, the case where the drive phase is
/// fully exercised. Failing cases are recorded, not raised.
pub fn kernel_equivalence_report(cfg: &MemoryConfig, grid: &SolverGrid, seed: u64) -> Result<EquivalenceReport> {
    let t0 = cfg.profile.pulse_duration();
    let period = cfg.profile.period();
    let mut points = Vec::new();
    for &n in &EQUIVALENCE_PULSES {
        for &l in &EQUIVALENCE_LENGTHS {
            points.push((n, l));
        }
    }
    let cases = points
        .par_iter()
        .enumerate()
        .map(|(idx, &(n, l))| {
            let case_cfg = MemoryConfig::new(
                PulseTrainProfile::new(n, t0, period)?,
                MediumParams::new(l)?,
                false,
                cfg.quadrature_nodes(),
            )?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(idx as u64));
            let random: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            run_case(&case_cfg, grid, &random)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_error = cases
        .iter()
        .map(|c| c.write_error.max(c.chain_error))
        .fold(0.0, f64::max);
    let worst_ratio = cases.iter().map(|c| c.convergence_ratio).fold(f64::INFINITY, f64::min);
    Ok(EquivalenceReport {
        threshold: EQUIVALENCE_THRESHOLD,
        min_convergence_ratio: MIN_CONVERGENCE_RATIO,
        seed,
        pulse_duration: t0,
        period,
        grid: *grid,
        passed: cases.iter().all(|c| c.passed),
        cases,
        max_error,
        worst_convergence_ratio: worst_ratio,
    })
}

fn run_case(cfg: &MemoryConfig, grid: &SolverGrid, random: &[Complex64]) -> Result<EquivalenceCase> {
    let p = cfg.profile;
    let flat = EnvelopeField::new(p, vec![Complex64::new(1.0, 0.0); p.n_pulses()])?;
    let random = EnvelopeField::new(p, random.to_vec())?;
    let cycle = full_cycle(cfg)?;
    let chain_ref = full_cycle_transform(&random, &cycle, false)?;

    let errors = |g: &SolverGrid| -> Result<(f64, f64, f64)> {
        let want = kernel_written_state(&flat, cfg, g)?;
        let got = integrate_write(&PulseResolvedField::from_envelope(&flat, g.pulse_cells), cfg, g)?;
        let write_error = relative_l2(got.state.values(), want.values());
        let stored = integrate_write(&PulseResolvedField::from_envelope(&random, g.pulse_cells), cfg, g)?;
        let read = integrate_read(&stored.state, cfg, g)?;
        let chain_error = relative_l2(read.output.envelope().amplitudes(), chain_ref.amplitudes());
        let violation = got
            .budget
            .relative_violation
            .max(stored.budget.relative_violation)
            .max(read.budget.relative_violation);
        Ok((write_error, chain_error, violation))
    };
    let (write_error, chain_error, v1) = errors(grid)?;
    let (refined_write_error, refined_chain_error, v2) = errors(&grid.refined())?;
    let ratio = |coarse: f64, fine: f64| if fine > 0.0 { coarse / fine } else { f64::INFINITY };
    let convergence_ratio = ratio(write_error, refined_write_error).min(ratio(chain_error, refined_chain_error));
    let passed = write_error <= EQUIVALENCE_THRESHOLD
        && chain_error <= EQUIVALENCE_THRESHOLD
        && convergence_ratio >= MIN_CONVERGENCE_RATIO;
    Ok(EquivalenceCase {
        n_pulses: p.n_pulses(),
        length: cfg.length(),
        write_error,
        chain_error,
        refined_write_error,
        refined_chain_error,
        convergence_ratio,
        budget_violation: v1.max(v2),
        passed,
    })
}

/// Worst mismatch between the write kernel at the reversed time and the
/// read kernel, over `samples` random times (inside pulses) crossed with
/// `samples` random depths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReversalDefect {
    pub samples: usize,
    pub seed: u64,
    /// Times carried as (pulse, offset), reversed exactly.
    pub pulse_coordinates: f64,
    /// Times carried as absolute doubles, reversed as `T_W - t`. Limited by
    /// the resolution of a double at `T_W`.
    pub absolute_time: f64,
}

pub fn time_reversal_defect(cfg: &MemoryConfig, samples: usize, seed: u64) -> Result<ReversalDefect> {
    if samples == 0 {
        return Err(Error::param("samples", "need at least one sample"));
    }
    let p = &cfg.profile;
    let t0 = p.pulse_duration();
    let tw = p.train_duration();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times: Vec<(usize, f64)> = (0..samples)
        .map(|_| (rng.random_range(0..p.n_pulses()), rng.random_range(0.0..=t0)))
        .collect();
    let depths: Vec<f64> = (0..samples).map(|_| rng.random_range(0.0..=cfg.length())).collect();
    let rows = times
        .par_iter()
        .map(|&(k, s)| {
            let t = p.pulse_start(k + 1)? + s;
            let mut worst = (0.0f64, 0.0f64);
            for &z in &depths {
                let exact = write_kernel_in_pulse(cfg, p.n_pulses() - 1 - k, t0 - s, z)? - read_kernel_in_pulse(cfg, k, s, z)?;
                let absolute = write_kernel(cfg, (tw - t).max(0.0), z)? - read_kernel(cfg, t.min(tw), z)?;
                worst = (worst.0.max(exact.norm()), worst.1.max(absolute.norm()));
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReversalDefect {
        samples,
        seed,
        pulse_coordinates: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        absolute_time: rows.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}

/// Depth profile of pulse cell `m` (no phase) at arbitrary depths, for
/// preparing single-mode coherences.
pub fn cell_profile_at(m: usize, pulse_duration: f64, z: f64) -> f64 {
    let rule = GaussLegendre::new(24);
    rule.integrate(0.0, 1.0, |u| crate::bessel::j0(2.0 * (z * (m as f64 + u) * pulse_duration).sqrt()))
}

/// Matrix of the shifted chain on the pulse grid, column `k` being the
/// averaged output for a unit input in pulse `k`. Expensive; meant for
/// small trains in tests.
pub fn chain_matrix(cfg: &MemoryConfig, grid: &SolverGrid) -> Result<DMatrix<Complex64>> {
    let p = cfg.profile;
    let n = p.n_pulses();
    let mut out = DMatrix::from_element(n, n, ZERO);
    for k in 0..n {
        let mut amps = vec![ZERO; n];
        amps[k] = Complex64::new(1.0, 0.0);
        let field = EnvelopeField::new(p, amps)?;
        let w = integrate_write(&PulseResolvedField::from_envelope(&field, grid.pulse_cells), cfg, grid)?;
        let r = integrate_read(&w.state, cfg, grid)?;
        for (m, a) in r.output.envelope().amplitudes().iter().enumerate() {
            out[(m, k)] = *a;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(n: usize, t0: f64, t: f64, l: f64, shifters: bool) -> MemoryConfig {
        MemoryConfig::new(
            PulseTrainProfile::new(n, t0, t).unwrap(),
            MediumParams::new(l).unwrap(),
            shifters,
            256,
        )
        .unwrap()
    }

    fn flat(p: PulseTrainProfile, cells: usize) -> PulseResolvedField {
        let f = EnvelopeField::new(p, vec![Complex64::new(1.0, 0.0); p.n_pulses()]).unwrap();
        PulseResolvedField::from_envelope(&f, cells)
    }

    #[test]
    fn grid_validation_and_steps() {
        assert!(SolverGrid::new(0, 5).is_err());
        assert!(SolverGrid::new(5, 0).is_err());
        let g = SolverGrid::default();
        assert!((g.dz(10.0) - 0.05).abs() < 1e-15);
        assert!((g.dtau(0.1) - 0.002).abs() < 1e-15);
        assert_eq!(g.refined().depth_cells(), 400);
    }

    #[test]
    fn zero_input_writes_nothing_and_reads_nothing() {
        let c = cfg(3, 0.1, 1.0, 2.0, false);
        let g = SolverGrid::new(40, 10).unwrap();
        let zero = PulseResolvedField::new(c.profile, 10, vec![ZERO; 30]).unwrap();
        let w = integrate_write(&zero, &c, &g).unwrap();
        assert!(w.state.values().iter().all(|b| *b == ZERO));
        let r = integrate_read(&MediumState::empty(2.0, 40).unwrap(), &c, &g).unwrap();
        assert!(r.output.values().iter().all(|a| *a == ZERO));
    }

    #[test]
    fn budget_closes_to_round_off() {
        let c = cfg(20, 0.1, 10_000.0, 10.0, false);
        let g = SolverGrid::default();
        let w = integrate_write(&flat(c.profile, 50), &c, &g).unwrap();
        assert!(w.budget.relative_violation < 1e-12, "{:?}", w.budget);
        assert!(w.budget.worst_slice_violation < 1e-12);
        assert!((w.budget.input - 2.0).abs() < 1e-12);
        assert!((w.state.excitation() - w.budget.stored).abs() < 1e-15);
        let r = integrate_read(&w.state, &c, &g).unwrap();
        assert!(r.budget.relative_violation < 1e-12);
        assert!((r.output.flux() - r.budget.transmitted).abs() < 1e-12);
    }

    #[test]
    fn flat_write_matches_kernel_convolution() {
        for (n, l) in [(1, 2.0), (5, 10.0), (20, 10.0)] {
            let c = cfg(n, 0.1, 10_000.0, l, false);
            let g = SolverGrid::default();
            let w = integrate_write(&flat(c.profile, 50), &c, &g).unwrap();
            let f = EnvelopeField::new(c.profile, vec![Complex64::new(1.0, 0.0); n]).unwrap();
            let want = kernel_written_state(&f, &c, &g).unwrap();
            let err = relative_l2(w.state.values(), want.values());
            assert!(err < 1e-3, "N={n} L={l}: {err:e}");
        }
    }

    #[test]
    fn shifted_chain_matches_real_envelope_kernel() {
        let c = cfg(6, 0.2, 1.0, 5.0, true);
        let g = SolverGrid::new(200, 40).unwrap();
        let m = chain_matrix(&c, &g).unwrap();
        let cycle = full_cycle(&c).unwrap();
        let e = cycle.envelope().entries();
        let n = 6;
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for k in 0..n {
                // Unit input in pulse k arrives as column N-1-k of -M.
                let want = -e[(a, n - 1 - k)];
                worst = worst.max((m[(a, k)] - Complex64::new(want, 0.0)).norm());
            }
        }
        assert!(worst < 1e-3 * e.amax(), "{worst:e}");
    }

    #[test]
    fn dead_time_skipping_is_exact() {
        let c = cfg(4, 0.1, 0.3, 3.0, false);
        let g = SolverGrid::new(60, 10).unwrap();
        let amps: Vec<Complex64> = (0..40).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let input = PulseResolvedField::new(c.profile, 10, amps).unwrap();
        let skip = integrate_write(&input, &c, &g).unwrap();
        let full = integrate_write_through_gaps(&input, &c, &g).unwrap();
        for (a, b) in skip.state.values().iter().zip(full.state.values()) {
            assert!((a - b).norm() <= 1e-12);
        }
        for (a, b) in skip.transmitted.values().iter().zip(full.transmitted.values()) {
            assert!((a - b).norm() <= 1e-12);
        }
        let odd = cfg(4, 0.1, 0.3333, 3.0, false);
        let input = PulseResolvedField::new(odd.profile, 10, vec![ZERO; 40]).unwrap();
        assert!(integrate_write_through_gaps(&input, &odd, &g).is_err());
    }

    #[test]
    fn single_mode_coherence_reads_out_as_that_mode() {
        let c = cfg(12, 0.1, 10_000.0, 10.0, true);
        let g = SolverGrid::default();
        let cycle = full_cycle(&c).unwrap();
        let u1 = cycle.modes().unit_vector(0).unwrap();
        let dz = g.dz(10.0);
        let b: Vec<Complex64> = (0..g.depth_cells())
            .map(|j| {
                let z = (j as f64 + 0.5) * dz;
                let v: f64 = (0..12).map(|k| u1[k] * cell_profile_at(k, 0.1, z)).sum();
                Complex64::new(v, 0.0)
            })
            .collect();
        let r = integrate_read(&MediumState::new(10.0, b).unwrap(), &c, &g).unwrap();
        let out = r.output.envelope();
        // Expected: -i (M u1)_m / T0 = -i s1 u1[m] / T0.
        let s1 = cycle.modes().singular_values()[0];
        let want: Vec<Complex64> = u1.iter().map(|u| Complex64::new(0.0, -s1 * u / 0.1)).collect();
        let err = relative_l2(out.amplitudes(), &want);
        assert!(err < 1e-2, "{err:e}");
    }

    #[test]
    fn small_raman_shift_perturbs_linearly() {
        let c = cfg(5, 0.1, 10_000.0, 5.0, false);
        let g = SolverGrid::new(100, 20).unwrap();
        let input = flat(c.profile, 20);
        let base = integrate_write(&input, &c, &g).unwrap();
        let d1 = integrate_write_with_shift(&input, &c, &g, 1e-4).unwrap();
        let d2 = integrate_write_with_shift(&input, &c, &g, 2e-4).unwrap();
        let e1 = relative_l2(d1.state.values(), base.state.values());
        let e2 = relative_l2(d2.state.values(), base.state.values());
        assert!(e1 < 1e-3 && e1 > 0.0);
        assert!((e2 / e1 - 2.0).abs() < 1e-2, "{}", e2 / e1);
        assert!(d2.budget.relative_violation < 1e-12);
    }

    #[test]
    fn equivalence_report_passes_and_is_deterministic() {
        let c = cfg(1, 0.1, 10_000.0, 10.0, false);
        let g = SolverGrid::default();
        let a = kernel_equivalence_report(&c, &g, 7).unwrap();
        assert_eq!(a.cases.len(), 6);
        assert!(a.passed, "{:#?}", a.cases);
        let first = a.cases.iter().find(|x| x.n_pulses == 1 && x.length == 2.0).unwrap();
        assert!(first.write_error <= 1e-3 && first.chain_error <= 1e-3);
        let b = kernel_equivalence_report(&c, &g, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reversal_identity_in_pulse_coordinates() {
        let c = cfg(90, 0.1, 10_000.0, 10.0, false);
        let d = time_reversal_defect(&c, 50, 3).unwrap();
        assert!(d.pulse_coordinates <= 1e-12, "{d:?}");
        assert!(d.absolute_time <= 1e-8, "{d:?}");
        let short = cfg(5, 0.5, 0.75, 3.0, false);
        assert!(time_reversal_defect(&short, 40, 1).unwrap().absolute_time <= 1e-12);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let c = cfg(3, 0.1, 1.0, 2.0, false);
        let g = SolverGrid::new(10, 5).unwrap();
        let wrong_cells = flat(c.profile, 4);
        assert!(integrate_write(&wrong_cells, &c, &g).is_err());
        let other = flat(PulseTrainProfile::new(2, 0.1, 1.0).unwrap(), 5);
        assert!(integrate_write(&other, &c, &g).is_err());
        assert!(integrate_read(&MediumState::empty(2.0, 11).unwrap(), &c, &g).is_err());
        assert!(integrate_read(&MediumState::empty(3.0, 10).unwrap(), &c, &g).is_err());
        assert!(MediumState::new(1.0, vec![Complex64::new(f64::NAN, 0.0)]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn oracle_is_linear(
            x in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3),
            y in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3),
            alpha in -2.0f64..2.0, beta in -2.0f64..2.0,
        ) {
            let c = cfg(3, 0.2, 1.0, 4.0, false);
            let g = SolverGrid::new(30, 8).unwrap();
            let to_field = |v: &Vec<(f64, f64)>| {
                let e = EnvelopeField::new(c.profile, v.iter().map(|(a, b)| Complex64::new(*a, *b)).collect()).unwrap();
                PulseResolvedField::from_envelope(&e, 8)
            };
            let (fx, fy) = (to_field(&x), to_field(&y));
            let mix: Vec<Complex64> = fx.values().iter().zip(fy.values()).map(|(a, b)| a * alpha + b * beta).collect();
            let fm = PulseResolvedField::new(c.profile, 8, mix).unwrap();
            let (bx, by, bm) = (
                integrate_write(&fx, &c, &g).unwrap(),
                integrate_write(&fy, &c, &g).unwrap(),
                integrate_write(&fm, &c, &g).unwrap(),
            );
            for j in 0..30 {
                let want = bx.state.values()[j] * alpha + by.state.values()[j] * beta;
                prop_assert!((bm.state.values()[j] - want).norm() <= 1e-10);
            }
        }
    }
}
