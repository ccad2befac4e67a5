//! Command-line front end: parse arguments, load or synthesize recipes,
//! run simulations, tomography, sweeps, and calibration fits, and emit
//! plot-ready CSV plus human-readable reports.
//!
//! Exit-code contract (stable): 0 success, 1 usage error, 2 parse or
//! content error in an input file, 3 threshold failure (reports are
//! still written), 4 I/O failure. The `GRATESTACK_OUT` environment
//! variable, when set and non-empty, overrides the output directory
//! given on the command line.

use crate::grating::{
    calibrate_index_modulation, coupling_strength, detuning_slope, diffraction_efficiency,
    fwhm_selectivity, record, Material, PhaseConvention,
};
use crate::lm_basis::{ConeBasis, SuperpositionState};
use crate::presets;
use crate::recipe::{self, RecipeDoc, RecipeError};
use crate::stack::{permutation_recipe, recipe_operator, verify_recipe, StackRecipe, TargetGate};
use crate::tomography::{
    emit_report, fit_calibration, run_tomography, FitResult, ImperfectionModel, TomographyError,
    TomographyTable,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Errors surfaced to the user, each mapped to a stable exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flag value or unusable combination of arguments.
    #[error("{0}")]
    Usage(String),
    /// An input file parsed or validated incorrectly.
    #[error("{0}")]
    Parse(String),
    /// A quality threshold was not met; reports are still written.
    #[error("{0}")]
    Threshold(String),
    /// Reading or writing a file failed.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// The process exit code this error class maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Threshold(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<RecipeError> for CliError {
    fn from(e: RecipeError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<TomographyError> for CliError {
    fn from(e: TomographyError) -> Self {
        match e {
            TomographyError::Nonconvergent { .. } => CliError::Threshold(e.to_string()),
            other => CliError::Parse(other.to_string()),
        }
    }
}

/// Parse a length with an optional `nm`, `um`, or `mm` suffix; a bare
/// number (or a trailing `m`) is metres.
pub fn parse_length(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let (digits, scale) = if let Some(p) = t.strip_suffix("nm") {
        (p, 1e-9)
    } else if let Some(p) = t.strip_suffix("um") {
        (p, 1e-6)
    } else if let Some(p) = t.strip_suffix("mm") {
        (p, 1e-3)
    } else if let Some(p) = t.strip_suffix('m') {
        (p, 1.0)
    } else {
        (t, 1.0)
    };
    let value: f64 = digits.trim().parse().map_err(|_| {
        format!("cannot parse `{s}` as a length (examples: 532nm, 1.2um, 0.5mm, 0.0005)")
    })?;
    if !value.is_finite() {
        return Err(format!("length `{s}` must be finite"));
    }
    Ok(value * scale)
}

/// Parse an angle with an optional `deg` or `mrad` suffix; a bare number
/// (or a trailing `rad`) is radians.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let (digits, scale) = if let Some(p) = t.strip_suffix("mrad") {
        (p, 1e-3)
    } else if let Some(p) = t.strip_suffix("rad") {
        (p, 1.0)
    } else if let Some(p) = t.strip_suffix("deg") {
        (p, std::f64::consts::PI / 180.0)
    } else {
        (t, 1.0)
    };
    let value: f64 = digits.trim().parse().map_err(|_| {
        format!("cannot parse `{s}` as an angle (examples: 4.41deg, 2.4mrad, 0.077)")
    })?;
    if !value.is_finite() {
        return Err(format!("angle `{s}` must be finite"));
    }
    Ok(value * scale)
}

/// Top-level command line.
#[derive(Debug, Parser)]
#[command(
    name = "gratestack",
    version,
    about = "Design and analyze stacked volume-hologram couplers for plane-wave mode logic"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// The available subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a recipe realizing a named gate or a permutation matrix.
    Synthesize(SynthesizeArgs),
    /// Apply a recipe's operator to a basis state and print the output.
    Simulate(SimulateArgs),
    /// Simulate detector tomography of a recipe and report the table.
    Tomography(TomographyArgs),
    /// Sweep one grating parameter and emit an efficiency CSV.
    Sweep(SweepArgs),
    /// Fit a tied imperfection model to a measured tomography table.
    Calibrate(CalibrateArgs),
    /// Check a recipe against its declared target gate.
    Verify(VerifyArgs),
}

/// Geometry of the mode basis and the recording, for commands that build
/// gratings from scratch.
#[derive(Debug, Args)]
pub struct GeometryArgs {
    /// Number of signal modes on the cone.
    #[arg(long, default_value_t = 4)]
    pub dimension: usize,
    /// Vacuum wavelength (suffixes: nm, um, mm; bare = metres).
    #[arg(long, value_parser = parse_length, default_value = "532nm")]
    pub wavelength: f64,
    /// Plate thickness (suffixes: nm, um, mm; bare = metres).
    #[arg(long, value_parser = parse_length, default_value = "1.64mm")]
    pub thickness: f64,
    /// Background refractive index of the recording medium.
    #[arg(long, default_value_t = 1.49)]
    pub base_index: f64,
    /// Signal-cone half-angle (suffixes: deg, mrad; bare = radians).
    #[arg(long, value_parser = parse_angle, default_value = "4.41deg")]
    pub signal_cone: f64,
    /// Reference-cone half-angle (suffixes: deg, mrad; bare = radians).
    #[arg(long, value_parser = parse_angle, default_value = "23.61deg")]
    pub reference_cone: f64,
}

impl GeometryArgs {
    fn basis(&self) -> Result<ConeBasis, CliError> {
        ConeBasis::new(
            self.dimension,
            self.signal_cone,
            self.reference_cone,
            TAU / self.wavelength,
        )
        .map_err(|e| CliError::Usage(e.to_string()))
    }
}

/// Where the recipe comes from: a file on disk or a bundled preset.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct RecipeSource {
    /// Recipe file to load.
    #[arg(long)]
    pub recipe: Option<PathBuf>,
    /// Bundled configuration to load instead (available: paper-cnot).
    #[arg(long)]
    pub preset: Option<String>,
}

/// Optional overrides applied to a loaded recipe before it is built.
#[derive(Debug, Args, Default)]
pub struct OverrideArgs {
    /// Override the recipe's wavelength (suffixes: nm, um, mm).
    #[arg(long, value_parser = parse_length)]
    pub wavelength: Option<f64>,
    /// Override the recipe's plate thickness (suffixes: nm, um, mm).
    #[arg(long, value_parser = parse_length)]
    pub thickness: Option<f64>,
    /// Override the recipe's index modulation depth.
    #[arg(long)]
    pub delta_n: Option<f64>,
    /// Override the recipe's background refractive index.
    #[arg(long)]
    pub base_index: Option<f64>,
    /// Override the recipe's reference-cone half-angle (deg, mrad).
    #[arg(long, value_parser = parse_angle)]
    pub reference_cone: Option<f64>,
}

/// Pick which off-Bragg phase convention the coupler matrices use.
#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ConventionArg {
    /// Quarter-turn phase on the cross coupling (always unitary).
    Physical,
    /// Real couplings (exact for fully switched plates).
    Ideal,
}

impl From<ConventionArg> for PhaseConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Physical => PhaseConvention::Physical,
            ConventionArg::Ideal => PhaseConvention::Ideal,
        }
    }
}

/// Arguments of `synthesize`.
#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// Gate to realize: cnot, x, swap, identity, or the path of a
    /// permutation-matrix CSV (a 1 in row r, column c sends input mode
    /// c to output mode r; the matrix size sets the dimension).
    #[arg(long)]
    pub target: String,
    /// Name recorded in the recipe (defaults to the gate name).
    #[arg(long)]
    pub name: Option<String>,
    /// Output directory for the recipe file.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub geometry: GeometryArgs,
}

/// Arguments of `simulate`.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: RecipeSource,
    #[command(flatten)]
    pub overrides: OverrideArgs,
    /// Input mode label (e.g. S3). Omit to print the intensity map of
    /// every signal input.
    #[arg(long)]
    pub input: Option<String>,
    /// Coupler phase convention.
    #[arg(long, value_enum, default_value_t = ConventionArg::Physical)]
    pub convention: ConventionArg,
}

/// Arguments of `tomography`.
#[derive(Debug, Args)]
pub struct TomographyArgs {
    #[command(flatten)]
    pub source: RecipeSource,
    #[command(flatten)]
    pub overrides: OverrideArgs,
    /// Measured tomography CSV to calibrate the imperfection model
    /// against before simulating. Defaults to the bundled measured
    /// table when --preset paper-cnot is used.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Output directory for the report files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Arguments of `sweep`.
#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Parameter to sweep.
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// First parameter value (units as for the parameter).
    #[arg(long, allow_hyphen_values = true)]
    pub start: String,
    /// Last parameter value (inclusive).
    #[arg(long, allow_hyphen_values = true)]
    pub stop: String,
    /// Number of samples, endpoints included.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub steps: u64,
    /// Index modulation depth of the swept grating (default: calibrated
    /// for 88% on-Bragg efficiency at the given geometry).
    #[arg(long)]
    pub delta_n: Option<f64>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
}

/// Sweepable grating parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    /// Plate thickness; values take nm/um/mm suffixes.
    #[value(name = "thickness")]
    Thickness,
    /// Index modulation depth; values are bare numbers.
    #[value(name = "delta_n", alias = "delta-n")]
    DeltaN,
    /// In-plane angular offset from the recorded signal direction;
    /// values take deg/mrad suffixes.
    #[value(name = "detuning_angle", alias = "detuning-angle")]
    DetuningAngle,
}

/// Arguments of `calibrate`.
#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub source: RecipeSource,
    #[command(flatten)]
    pub overrides: OverrideArgs,
    /// Measured tomography CSV to fit. Defaults to the bundled measured
    /// table when --preset paper-cnot is used.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Output directory for the fit report files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Arguments of `verify`.
#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub source: RecipeSource,
    #[command(flatten)]
    pub overrides: OverrideArgs,
    /// Minimum acceptable process fidelity.
    #[arg(long, default_value_t = 0.99)]
    pub threshold: f64,
    /// Output directory for the verification report.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Run a parsed command line to completion.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synthesize(args) => cmd_synthesize(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Tomography(args) => cmd_tomography(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Calibrate(args) => cmd_calibrate(&args),
        Command::Verify(args) => cmd_verify(&args),
    }
}

// ---------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------

/// Resolve the output directory: `GRATESTACK_OUT` (when set and
/// non-empty) overrides the command-line value.
fn resolve_out_dir(flag: &Path) -> PathBuf {
    resolve_out_dir_from(flag, std::env::var("GRATESTACK_OUT").ok().as_deref())
}

fn resolve_out_dir_from(flag: &Path, env: Option<&str>) -> PathBuf {
    match env {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.to_path_buf(),
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn write_out(dir: &Path, file: &str, content: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(file);
    fs::write(&path, content)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Keep recipe and report file names portable.
fn sanitize_name(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect();
    if s.is_empty() {
        "recipe".to_string()
    } else {
        s
    }
}

fn preset_doc(name: &str) -> Result<RecipeDoc, CliError> {
    match name {
        "paper-cnot" => {
            let text = recipe::emit(&presets::reference_cnot());
            Ok(recipe::parse(&text).expect("bundled recipe is well formed"))
        }
        other => Err(CliError::Usage(format!(
            "unknown preset `{other}`; available presets: paper-cnot"
        ))),
    }
}

fn apply_overrides(doc: &mut RecipeDoc, o: &OverrideArgs) {
    if let Some(v) = o.wavelength {
        doc.wavelength_m = v;
    }
    if let Some(v) = o.thickness {
        doc.thickness_m = v;
    }
    if let Some(v) = o.delta_n {
        doc.index_modulation = v;
    }
    if let Some(v) = o.base_index {
        doc.base_index = v;
    }
    if let Some(v) = o.reference_cone {
        doc.reference_cone_rad = v;
    }
}

fn load_recipe(source: &RecipeSource, overrides: &OverrideArgs) -> Result<StackRecipe, CliError> {
    let mut doc = match (&source.recipe, &source.preset) {
        (Some(path), None) => {
            let text = read_file(path)?;
            recipe::parse(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => preset_doc(name)?,
        _ => {
            return Err(CliError::Usage(
                "exactly one of --recipe and --preset is required".to_string(),
            ))
        }
    };
    apply_overrides(&mut doc, overrides);
    doc.build().map_err(CliError::from)
}

fn load_table(path: &Path) -> Result<TomographyTable, CliError> {
    let text = read_file(path)?;
    TomographyTable::from_csv(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// The measured table a table-consuming command should use: an explicit
/// --table wins; the paper-cnot preset falls back to its bundled table.
fn resolve_table(
    source: &RecipeSource,
    table: Option<&Path>,
    command: &str,
) -> Result<TomographyTable, CliError> {
    match table {
        Some(path) => load_table(path),
        None if source.preset.as_deref() == Some("paper-cnot") => {
            Ok(presets::measured_cnot_table())
        }
        None => Err(CliError::Usage(format!(
            "{command} needs --table (only --preset paper-cnot bundles one)"
        ))),
    }
}

fn target_images(recipe: &StackRecipe) -> Option<Vec<usize>> {
    recipe.target().map(|t| match t {
        TargetGate::Permutation(images) => images.clone(),
    })
}

// ---------------------------------------------------------------------
// synthesize
// ---------------------------------------------------------------------

/// Images of the named built-in gates, or `None` for unknown names.
fn named_gate_images(name: &str, n: usize) -> Option<Result<Vec<usize>, CliError>> {
    match name {
        "identity" => Some(Ok((0..n).collect())),
        "x" => Some(if n >= 2 {
            let mut images: Vec<usize> = (0..n).collect();
            images.swap(n - 2, n - 1);
            Ok(images)
        } else {
            Err(CliError::Usage(format!(
                "target `x` needs at least two modes, got dimension {n}"
            )))
        }),
        "swap" => Some(if n == 4 {
            Ok(vec![0, 2, 1, 3])
        } else {
            Err(CliError::Usage(format!(
                "target `swap` is a two-qubit gate and needs dimension 4, got {n}"
            )))
        }),
        "cnot" => Some(if n == 4 {
            Ok(vec![0, 1, 3, 2])
        } else {
            Err(CliError::Usage(format!(
                "target `cnot` is a two-qubit gate and needs dimension 4, got {n}"
            )))
        }),
        _ => None,
    }
}

/// Read a permutation matrix from CSV text: square, entries 0/1, one 1
/// per row and per column. Returns the image of each input mode.
fn permutation_matrix_images(text: &str) -> Result<Vec<usize>, CliError> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    CliError::Parse(format!(
                        "line {}: `{}` is not a number",
                        no + 1,
                        cell.trim()
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        rows.push((no + 1, row));
    }
    let n = rows.len();
    if n == 0 {
        return Err(CliError::Parse("permutation matrix is empty".to_string()));
    }
    for (no, row) in &rows {
        if row.len() != n {
            return Err(CliError::Parse(format!(
                "line {no}: expected {n} columns to match {n} rows, found {}",
                row.len()
            )));
        }
        for &v in row {
            if v != 0.0 && v != 1.0 {
                return Err(CliError::Parse(format!(
                    "line {no}: not a permutation matrix, entry {v} is neither 0 nor 1"
                )));
            }
        }
    }
    let mut images = vec![usize::MAX; n];
    for (r, (no, row)) in rows.iter().enumerate() {
        let ones: Vec<usize> = (0..n).filter(|&c| row[c] == 1.0).collect();
        if ones.len() != 1 {
            return Err(CliError::Parse(format!(
                "line {no}: not a permutation matrix, row has {} ones instead of 1",
                ones.len()
            )));
        }
        let c = ones[0];
        if images[c] != usize::MAX {
            return Err(CliError::Parse(format!(
                "line {no}: not a permutation matrix, column {} selected twice",
                c + 1
            )));
        }
        images[c] = r;
    }
    Ok(images)
}

fn cmd_synthesize(args: &SynthesizeArgs) -> Result<(), CliError> {
    let (default_name, images, dimension) =
        match named_gate_images(&args.target, args.geometry.dimension) {
            Some(result) => (args.target.clone(), result?, args.geometry.dimension),
            None => {
                let path = Path::new(&args.target);
                if !path.exists() {
                    return Err(CliError::Usage(format!(
                    "unknown gate name `{}` (not one of cnot, x, swap, identity, and no such file)",
                    args.target
                )));
                }
                let images = permutation_matrix_images(&read_file(path)?)?;
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "permutation".to_string());
                let n = images.len();
                (stem, images, n)
            }
        };
    let name = sanitize_name(args.name.as_deref().unwrap_or(&default_name));

    let basis = ConeBasis::new(
        dimension,
        args.geometry.signal_cone,
        args.geometry.reference_cone,
        TAU / args.geometry.wavelength,
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let recipe = permutation_recipe(
        name.clone(),
        &basis,
        &images,
        args.geometry.thickness,
        args.geometry.base_index,
        args.geometry.wavelength,
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;

    let out_dir = resolve_out_dir(&args.out);
    let path = write_out(&out_dir, &format!("{name}.grs"), &recipe::emit(&recipe))?;

    let count = recipe.grating_count();
    let total_mm = count as f64 * recipe.thickness() * 1e3;
    println!("gratings: {count}");
    println!("total thickness: {total_mm:.2} mm");
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let recipe = load_recipe(&args.source, &args.overrides)?;
    let op = recipe_operator(&recipe, args.convention.into())
        .map_err(|e| CliError::Parse(e.to_string()))?;
    let basis = recipe.basis();
    let labels = basis.labels();

    match &args.input {
        Some(label) => {
            let index = basis.index_of_label(label).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown mode label `{label}`; available: {}",
                    labels.join(", ")
                ))
            })?;
            let out = op
                .apply(&SuperpositionState::basis_state(basis.clone(), index))
                .map_err(|e| CliError::Parse(e.to_string()))?;
            println!("input {label}");
            println!(
                "{:>6} {:>11} {:>11} {:>11}",
                "mode", "re", "im", "intensity"
            );
            for (mode, amp) in labels.iter().zip(out.amplitudes()) {
                println!(
                    "{mode:>6} {:>11.6} {:>11.6} {:>11.6}",
                    amp.re,
                    amp.im,
                    amp.norm_sqr()
                );
            }
        }
        None => {
            println!("intensity map (rows: signal inputs, columns: output modes)");
            print!("{:>6}", "input");
            for label in &labels {
                print!(" {label:>10}");
            }
            println!();
            for (i, label) in labels.iter().enumerate().take(basis.dimension()) {
                let out = op
                    .apply(&SuperpositionState::basis_state(basis.clone(), i))
                    .map_err(|e| CliError::Parse(e.to_string()))?;
                print!("{label:>6}");
                for amp in out.amplitudes() {
                    print!(" {:>10.6}", amp.norm_sqr());
                }
                println!();
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// tomography and calibrate
// ---------------------------------------------------------------------

fn calibration_text(recipe: &StackRecipe, fit: &FitResult) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "calibration fit (recipe: {})", recipe.name());
    let p = &fit.params;
    let _ = writeln!(text, "efficiency_a: {:.6}", p.efficiency_a);
    let _ = writeln!(text, "efficiency_b: {:.6}", p.efficiency_b);
    let _ = writeln!(text, "detuning_a1: {:.6}", p.detuning_a1);
    let _ = writeln!(text, "detuning_a2: {:.6}", p.detuning_a2);
    let _ = writeln!(text, "detuning_b_park: {:.6}", p.detuning_b_park);
    let _ = writeln!(text, "detuning_b_residual: {:.6}", p.detuning_b_residual);
    let _ = writeln!(text, "transmission: {:.6}", p.transmission);
    let _ = writeln!(text, "residual: {:.6e}", fit.residual);
    text
}

fn cmd_tomography(args: &TomographyArgs) -> Result<(), CliError> {
    let recipe = load_recipe(&args.source, &args.overrides)?;
    let out_dir = resolve_out_dir(&args.out);
    let base = sanitize_name(recipe.name());
    let images = target_images(&recipe);

    // Decide the imperfection model: fit one when a measured table is
    // available, otherwise take the recipe's own efficiency overrides.
    let has_table = args.table.is_some() || args.source.preset.as_deref() == Some("paper-cnot");
    let (model, fit_text) = if has_table {
        let measured = resolve_table(&args.source, args.table.as_deref(), "tomography")?;
        match fit_calibration(&measured, &recipe) {
            Ok(fit) => {
                let text = calibration_text(&recipe, &fit);
                (fit.model, Some(text))
            }
            Err(TomographyError::Nonconvergent {
                residual,
                threshold,
            }) => {
                // Threshold failure: echo the measured table so a report
                // is still written, then fail with exit code 3.
                let report = emit_report(&measured, images.as_deref())?;
                let note = format!(
                    "calibration did not converge: residual {residual:.6} exceeds {threshold}\n"
                );
                write_out(&out_dir, &format!("{base}_tomography.csv"), &report.csv)?;
                write_out(
                    &out_dir,
                    &format!("{base}_tomography.txt"),
                    &format!("{note}\n{}", report.text),
                )?;
                print!("{}", report.text);
                return Err(CliError::Threshold(note.trim_end().to_string()));
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        (ImperfectionModel::from_recipe(&recipe), None)
    };

    let table = run_tomography(&recipe, &model)?;
    let report = emit_report(&table, images.as_deref())?;
    let mut text = String::new();
    if let Some(fit) = &fit_text {
        text.push_str(fit);
        text.push('\n');
    }
    text.push_str(&report.text);

    let csv_path = write_out(&out_dir, &format!("{base}_tomography.csv"), &report.csv)?;
    let txt_path = write_out(&out_dir, &format!("{base}_tomography.txt"), &text)?;
    print!("{text}");
    eprintln!("wrote {}", csv_path.display());
    eprintln!("wrote {}", txt_path.display());
    Ok(())
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<(), CliError> {
    let recipe = load_recipe(&args.source, &args.overrides)?;
    let out_dir = resolve_out_dir(&args.out);
    let base = sanitize_name(recipe.name());
    let measured = resolve_table(&args.source, args.table.as_deref(), "calibrate")?;

    match fit_calibration(&measured, &recipe) {
        Ok(fit) => {
            let text = calibration_text(&recipe, &fit);
            let fitted = run_tomography(&recipe, &fit.model)?;
            write_out(&out_dir, &format!("{base}_calibration.txt"), &text)?;
            let csv_path = write_out(&out_dir, &format!("{base}_fit.csv"), &fitted.to_csv())?;
            print!("{text}");
            eprintln!("wrote {}", csv_path.display());
            Ok(())
        }
        Err(TomographyError::Nonconvergent {
            residual,
            threshold,
        }) => {
            let text = format!(
                "calibration fit (recipe: {})\ndid not converge: residual {residual:.6} exceeds {threshold}\n",
                recipe.name()
            );
            write_out(&out_dir, &format!("{base}_calibration.txt"), &text)?;
            print!("{text}");
            Err(CliError::Threshold(format!(
                "calibration did not converge: residual {residual:.6} exceeds {threshold}"
            )))
        }
        Err(e) => Err(e.into()),
    }
}

// ---------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let g = &args.geometry;
    let basis = g.basis()?;
    let signal = basis.signal(0);
    let reference = basis.reference(0);

    // The reference grating every sweep derives from. Its modulation
    // defaults to the depth that reaches 88% efficiency on Bragg.
    let delta_n = match args.delta_n {
        Some(v) => v,
        None => calibrate_index_modulation(
            signal,
            reference,
            g.thickness,
            g.wavelength,
            g.base_index,
            0.88,
        )
        .map_err(|e| CliError::Usage(e.to_string()))?,
    };
    let material = Material::new(delta_n, g.base_index, "swept")
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let grating = record(signal, reference, g.thickness, &material, g.wavelength)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let nu_base = coupling_strength(&grating);

    let parse_value = |label: &str, raw: &str| -> Result<f64, CliError> {
        let parsed = match args.param {
            SweepParam::Thickness => parse_length(raw),
            SweepParam::DetuningAngle => parse_angle(raw),
            SweepParam::DeltaN => raw
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("cannot parse `{raw}` as a number")),
        };
        parsed.map_err(|e| CliError::Usage(format!("--{label}: {e}")))
    };
    let start = parse_value("start", &args.start)?;
    let stop = parse_value("stop", &args.stop)?;

    let header = match args.param {
        SweepParam::Thickness => "thickness_m",
        SweepParam::DeltaN => "delta_n",
        SweepParam::DetuningAngle => "detuning_rad",
    };
    let slope = detuning_slope(&grating, signal.polar_angle());

    let mut csv = String::new();
    let _ = writeln!(csv, "{header},efficiency");
    let steps = args.steps;
    for i in 0..steps {
        let value = start + (stop - start) * i as f64 / (steps - 1) as f64;
        let eta = match args.param {
            SweepParam::Thickness => diffraction_efficiency(nu_base * value / g.thickness, 0.0),
            SweepParam::DeltaN => diffraction_efficiency(nu_base * value / delta_n, 0.0),
            SweepParam::DetuningAngle => diffraction_efficiency(nu_base, slope * value),
        };
        let _ = writeln!(csv, "{value},{eta:.9}");
    }
    print!("{csv}");

    match args.param {
        SweepParam::Thickness => {
            let quarter_wave = g.thickness * FRAC_PI_2 / nu_base;
            eprintln!(
                "first efficiency maximum (quarter-wave coupling) at thickness {quarter_wave} m"
            );
        }
        SweepParam::DetuningAngle => match fwhm_selectivity(&grating) {
            Ok(width) => eprintln!("fwhm {width} rad"),
            Err(e) => eprintln!("fwhm unavailable: {e}"),
        },
        SweepParam::DeltaN => {}
    }
    Ok(())
}

// ---------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------

fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let recipe = load_recipe(&args.source, &args.overrides)?;
    let out_dir = resolve_out_dir(&args.out);
    let base = sanitize_name(recipe.name());

    let verdict =
        verify_recipe(&recipe, args.threshold).map_err(|e| CliError::Parse(e.to_string()))?;
    let text = format!(
        "recipe: {}\ngratings: {}\nfidelity: {:.6}\nthreshold: {:.6}\npassed: {}\n",
        recipe.name(),
        recipe.grating_count(),
        verdict.fidelity,
        args.threshold,
        verdict.passed
    );
    write_out(&out_dir, &format!("{base}_verify.txt"), &text)?;
    print!("{text}");
    if verdict.passed {
        Ok(())
    } else {
        Err(CliError::Threshold(format!(
            "fidelity {:.6} below threshold {:.6}",
            verdict.fidelity, args.threshold
        )))
    }
}
