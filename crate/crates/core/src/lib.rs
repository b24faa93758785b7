//! Raman quantum memory driven by a periodic train of pulses, stored
//! signal being the multimode squeezed output of a synchronously pumped
//! optical parametric oscillator.
//!
//! The memory is described by its discrete pulse-to-pulse kernel: one cell
//! per pulse, Schmidt decomposed into storage modes with efficiencies in
//! `[0, 1]`. From those modes the crate derives writing efficiencies, the
//! retrieved noise spectrum and the squeezing left in each supermode.
//! [`oracle`] integrates the underlying equations directly and checks the
//! kernels against them.

pub mod bessel;
pub mod error;
pub mod kernels;
pub mod memory;
pub mod oracle;
pub mod profiles;
pub mod quadrature;
pub mod schmidt;
pub mod spectra;
pub mod spopo_source;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use kernels::{MediumParams, MemoryConfig};
pub use memory::{full_cycle, full_cycle_transform, writing_efficiency, EnvelopeField, FullCycle};
pub use oracle::{kernel_equivalence_report, SolverGrid};
pub use profiles::{PhysicalParams, PulseTrainProfile};
pub use schmidt::{build_envelope_matrix, schmidt_decompose, EnvelopeMatrix, SchmidtModes};
pub use spectra::{output_spectrum, FrequencyGrid, NoiseSpectrum, Stage};
pub use spopo_source::{SpopoSource, SupermodeBasis};
