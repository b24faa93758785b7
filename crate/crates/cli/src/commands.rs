use serde::Serialize;

use combmem::kernels::{MediumParams, MemoryConfig};
use combmem::memory::efficiency_scan;
use combmem::schmidt::{build_envelope_matrix, mode_zero_frequency, schmidt_decompose, SchmidtModes};
use combmem::spectra::{output_spectrum, supermode_squeezing_report, FrequencyGrid, NoiseSpectrum, SqueezingReport};
use combmem::spopo_source::{empirical_supermodes, hermite_supermodes, input_spectrum, SupermodeBasis};

use crate::config::{RunConfig, StageArg, SupermodeKindArg};
use crate::error::CliError;
use crate::output::{gnuplot, num, Artifacts, Table};

/// Singular values at or above this count as near-unit storage modes.
pub const STRONG_MODE_THRESHOLD: f64 = 0.9;

pub fn memory_config(cfg: &RunConfig, shifters: bool) -> combmem::Result<MemoryConfig> {
    MemoryConfig::new(cfg.profile(), MediumParams::new(cfg.length)?, shifters, cfg.quadrature_nodes)
}

pub fn schmidt_modes(cfg: &RunConfig) -> combmem::Result<SchmidtModes> {
    schmidt_decompose(&build_envelope_matrix(&memory_config(cfg, cfg.phase_shifters)?)?)
}

pub fn frequency_grid(cfg: &RunConfig) -> combmem::Result<FrequencyGrid> {
    FrequencyGrid::comb_window(cfg.period, cfg.spectrum.lines, cfg.spectrum.points)
}

#[derive(Serialize)]
struct EigenSummary<'a> {
    n_pulses: usize,
    pulse_duration: f64,
    period: f64,
    length: f64,
    quadrature_nodes: usize,
    strong_threshold: f64,
    strong_modes: usize,
    clipped: f64,
    singular_values: &'a [f64],
}

pub fn eigen(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let modes = schmidt_modes(cfg)?;
    let n = cfg.n_pulses;
    let mut header: Vec<String> = vec![
        "mode [index]".into(),
        "s [1]".into(),
        "phi_w0_shifted [1]".into(),
        "phi_w0_phased_re [1]".into(),
        "phi_w0_phased_im [1]".into(),
    ];
    header.extend((1..=n).map(|m| format!("phi_t{m} [tau^-1/2]")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::new(&header_refs);
    for i in 0..modes.count() {
        let shifted = mode_zero_frequency(&modes, i, false)?;
        let phased = mode_zero_frequency(&modes, i, true)?;
        let mut row = vec![
            (i + 1).to_string(),
            num(modes.singular_values()[i]),
            num(shifted.re),
            num(phased.re),
            num(phased.im),
        ];
        row.extend(modes.mode(i)?.into_iter().map(num));
        table.row(row);
    }
    let s = modes.singular_values();
    let summary = EigenSummary {
        n_pulses: n,
        pulse_duration: cfg.pulse_duration,
        period: cfg.period,
        length: cfg.length,
        quadrature_nodes: cfg.quadrature_nodes,
        strong_threshold: STRONG_MODE_THRESHOLD,
        strong_modes: s.iter().filter(|&&v| v >= STRONG_MODE_THRESHOLD).count(),
        clipped: modes.clipped(),
        singular_values: s,
    };
    let mut out = Artifacts::default();
    out.add("eigen.csv", table.finish());
    out.add_json("eigen.json", &summary)?;
    out.add(
        "eigen.gp",
        gnuplot(
            "eigen.csv",
            "Schmidt singular values",
            "mode index",
            "s_i",
            "set xrange [0:21]\nset yrange [0:1.05]\nplot datafile using 1:2 with linespoints pt 7 title 's_i'",
        ),
    );
    Ok(out)
}

pub fn efficiency(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let scan = efficiency_scan(
        &cfg.lengths,
        &cfg.n_range.values(),
        cfg.pulse_duration,
        cfg.period,
        cfg.phase_shifters,
        cfg.quadrature_nodes,
    )?;
    let mut table = Table::new(&["N [pulses]", "L [optical depth]", "shifters", "efficiency [1]"]);
    for r in &scan.rows {
        table.row([r.n_pulses.to_string(), num(r.length), r.shifters.to_string(), num(r.efficiency)]);
    }
    let lengths: Vec<String> = cfg.lengths.iter().map(|l| num(*l)).collect();
    let body = format!(
        "Ls = '{}'\nplot for [i=1:words(Ls)] datafile using 1:(($2 == word(Ls, i) + 0) ? $4 : 1/0) with lines title 'L = '.word(Ls, i)",
        lengths.join(" ")
    );
    let mut out = Artifacts::default();
    out.add("efficiency.csv", table.finish());
    out.add(
        "efficiency.gp",
        gnuplot("efficiency.csv", "Writing efficiency", "N (pulses)", "efficiency", &body),
    );
    Ok(out)
}

/// The input spectrum, or the retrieved one. Retrieval assumes ideal phase
/// shifters whatever `phase_shifters` says: without them the quadratures
/// mix and no single homodyne spectrum describes the output.
pub fn spectrum_for(cfg: &RunConfig, stage: StageArg) -> Result<NoiseSpectrum, CliError> {
    let grid = frequency_grid(cfg)?;
    let src = cfg.source();
    Ok(match stage {
        StageArg::In => input_spectrum(&src, &grid),
        StageArg::Out => {
            let modes = schmidt_decompose(&build_envelope_matrix(&memory_config(cfg, true)?)?)?;
            output_spectrum(&modes, &src, &grid, cfg.retained)?
        }
    })
}

pub fn spectrum(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let spec = spectrum_for(cfg, cfg.stage)?;
    let tag = match cfg.stage {
        StageArg::In => "in",
        StageArg::Out => "out",
    };
    let mut table = Table::new(&["omega [rad/tau]", "S [shot noise]"]);
    for (w, s) in spec.omega.iter().zip(&spec.values) {
        table.row([num(*w), num(*s)]);
    }
    let csv = format!("spectrum_{tag}.csv");
    let body = format!(
        "T = {}\nset xlabel 'omega T / 2 pi'\nplot datafile using ($1 * T / (2 * pi)):2 with lines title 'S_{tag}'",
        num(cfg.period)
    );
    let mut out = Artifacts::default();
    out.add(csv.clone(), table.finish());
    out.add(
        format!("spectrum_{tag}.gp"),
        gnuplot(&csv, "Homodyne noise spectrum", "omega", "S / shot noise", &body),
    );
    Ok(out)
}

pub fn supermode_basis(cfg: &RunConfig, count: usize) -> combmem::Result<SupermodeBasis> {
    match cfg.supermodes.kind {
        SupermodeKindArg::Hermite => hermite_supermodes(&cfg.profile(), cfg.supermodes.width, count),
        SupermodeKindArg::Empirical => empirical_supermodes(&cfg.source(), count),
    }
}

pub fn squeezing_for(cfg: &RunConfig) -> Result<SqueezingReport, CliError> {
    let input_db = cfg
        .input_db
        .as_ref()
        .ok_or_else(|| CliError::Usage("squeezing needs input values: pass --input-db or set input_db".into()))?;
    let basis = supermode_basis(cfg, input_db.len())?;
    let modes = schmidt_decompose(&build_envelope_matrix(&memory_config(cfg, true)?)?)?;
    Ok(supermode_squeezing_report(&modes, &basis, input_db)?)
}

pub fn squeezing(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let report = squeezing_for(cfg)?;
    let mut table = Table::new(&["mode [index]", "input_db [dB]", "transfer [1]", "output_db [dB]"]);
    for r in &report.rows {
        table.row([r.mode.to_string(), num(r.input_db), num(r.transfer), num(r.output_db)]);
    }
    let mut out = Artifacts::default();
    out.add("squeezing.csv", table.finish());
    out.add_json("squeezing.json", &report)?;
    out.add(
        "squeezing.gp",
        gnuplot(
            "squeezing.csv",
            "Squeezing per supermode",
            "supermode",
            "dB",
            "set style data histogram\nset style fill solid 0.6\nplot datafile using 2:xtic(1) title 'input', '' using 4 title 'restored'",
        ),
    );
    Ok(out)
}
