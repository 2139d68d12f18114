//! Command-line driver: validate spectral files, synthesize potentials,
//! run forward/inverse scattering, evaluate conserved integrals, apply the
//! mKdV flow, and build immersed surfaces with geometry reports.
//!
//! Exit codes: 0 success, 1 validation or parameter error, 2 numerical
//! non-convergence, 3 I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

use solsphere::error::Error;
use solsphere::spectral::EPS_REAL_NUMERIC;
use solsphere::{kruskal, marchenko, reflectionless, scattering, weierstrass};
use solsphere::{GridPotential, SpectralData, UniformGrid};

#[derive(Parser)]
#[command(name = "solsphere", version, about = "Soliton spheres from 1-D Dirac spectral data")]
struct Cli {
    /// Scale quality-gate tolerances: `strict` tightens them by 10x.
    #[arg(long, global = true, value_enum, default_value_t = TolProfile::Default)]
    tol_profile: TolProfile,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum TolProfile {
    Default,
    Strict,
}

impl TolProfile {
    fn scale(self) -> f64 {
        match self {
            TolProfile::Default => 1.0,
            TolProfile::Strict => 0.1,
        }
    }
}

#[derive(Args)]
struct GridArgs {
    /// Half-width of the symmetric x-interval.
    #[arg(long, default_value_t = 20.0)]
    xmax: f64,
    /// Number of grid nodes (>= 2).
    #[arg(long, default_value_t = 1025)]
    nx: usize,
}

impl GridArgs {
    fn grid(&self) -> Result<UniformGrid, Error> {
        if self.nx < 2 {
            return Err(Error::Parameter(format!("--nx must be at least 2, got {}", self.nx)));
        }
        if !(self.xmax > 0.0) {
            return Err(Error::Parameter(format!("--xmax must be positive, got {}", self.xmax)));
        }
        Ok(UniformGrid::symmetric(self.xmax, self.nx))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a spectral file against the admissibility conditions.
    Validate { spec: PathBuf },
    /// Synthesize the reflectionless potential of a spectral file.
    Potential {
        spec: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Output potential table (two columns: x, U).
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Forward scattering on a potential table: reflection coefficient on a
    /// k-grid plus the discrete spectrum, written as a spectral file.
    Scatter {
        table: PathBuf,
        /// Largest |k| sampled.
        #[arg(long, default_value_t = 8.0)]
        kmax: f64,
        /// Sample spacing in k.
        #[arg(long, default_value_t = 0.0625)]
        dk: f64,
        /// Output spectral file (reflection table lands next to it).
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Recover a potential from a spectral file through the Marchenko
    /// integral equations.
    Invert {
        spec: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Drop a reflection table whose largest modulus is below this
        /// threshold; pure point data admits a stable mirror extension.
        #[arg(long, default_value_t = 1e-6)]
        reflection_floor: f64,
        /// Output potential table.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Conserved Kruskal integrals, direct quadrature against trace formula.
    Kruskal {
        spec: PathBuf,
        /// Highest order to evaluate.
        #[arg(long, default_value_t = 4)]
        max_n: usize,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Apply the m-th mKdV flow for time t to the spectral data.
    Flow {
        spec: PathBuf,
        /// Flow index (1 is the mKdV flow itself).
        #[arg(short, long, default_value_t = 1)]
        m: u32,
        /// Flow time.
        #[arg(short, long)]
        t: f64,
        /// Output spectral file.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Build the immersed sphere of a coefficient vector over the kernel
    /// levels of a spectral file.
    Surface {
        spec: PathBuf,
        /// Coefficients "re,im;re,im;..." of psi_1..psi_L, psi*_1..psi*_L.
        #[arg(long)]
        coeffs: String,
        #[command(flatten)]
        grid: GridArgs,
        /// Number of y-samples around the cylinder.
        #[arg(long, default_value_t = 128)]
        ny: usize,
        /// Write the mesh as a Wavefront OBJ file.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// End circles tighter than this are welded shut in the OBJ mesh.
        #[arg(long, default_value_t = 1e-3)]
        weld_tol: f64,
        /// Write the geometry report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 3,
        Error::Numerical(_) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let scale = cli.tol_profile.scale();
    match cli.command {
        Command::Validate { spec } => cmd_validate(&spec),
        Command::Potential { spec, grid, output } => cmd_potential(&spec, &grid, &output),
        Command::Scatter { table, kmax, dk, output } => {
            cmd_scatter(&table, kmax, dk, &output, scale)
        }
        Command::Invert { spec, grid, reflection_floor, output } => {
            cmd_invert(&spec, &grid, reflection_floor * scale, &output)
        }
        Command::Kruskal { spec, max_n, grid } => cmd_kruskal(&spec, max_n, &grid, scale),
        Command::Flow { spec, m, t, output } => cmd_flow(&spec, m, t, &output),
        Command::Surface { spec, coeffs, grid, ny, output, weld_tol, report } => cmd_surface(
            &spec,
            &coeffs,
            &grid,
            ny,
            output.as_deref(),
            weld_tol,
            report.as_deref(),
            scale,
        ),
    }
}

fn load_spec(path: &std::path::Path) -> Result<SpectralData, Error> {
    let data = SpectralData::load(path)?;
    let report = data.validate(EPS_REAL_NUMERIC)?;
    if !report.is_valid() {
        let summary: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::InvalidData(summary.join("; ")));
    }
    Ok(data)
}

fn cmd_validate(spec: &std::path::Path) -> Result<(), Error> {
    let data = SpectralData::load(spec)?;
    let report = data.validate(EPS_REAL_NUMERIC)?;
    if report.is_valid() {
        println!(
            "valid: {} poles, reflection {}",
            data.poles.len(),
            if data.is_reflectionless() { "none" } else { "table" }
        );
        Ok(())
    } else {
        for v in &report.violations {
            println!("violation: {v}");
        }
        Err(Error::InvalidData(format!("{} violation(s)", report.violations.len())))
    }
}

fn cmd_potential(
    spec: &std::path::Path,
    grid: &GridArgs,
    output: &std::path::Path,
) -> Result<(), Error> {
    let data = load_spec(spec)?;
    let u = reflectionless::potential_from_data(&data, &grid.grid()?)?;
    u.save(output)?;
    println!("wrote {} nodes, max |U| = {:.6e}", u.grid.n, u.max_abs());
    Ok(())
}

#[derive(Serialize)]
struct ScatterSummary {
    n_bound_states: usize,
    max_reflection_modulus: f64,
    max_unitarity_defect: f64,
}

fn cmd_scatter(
    table: &std::path::Path,
    kmax: f64,
    dk: f64,
    output: &std::path::Path,
    scale: f64,
) -> Result<(), Error> {
    if !(dk > 0.0 && kmax > dk) {
        return Err(Error::Parameter(format!("need 0 < --dk < --kmax, got dk = {dk}, kmax = {kmax}")));
    }
    let u = GridPotential::load(table)?;
    // sample at half-integer multiples of dk: uniform, symmetric, avoids k = 0
    let n_side = (kmax / dk - 0.5).floor() as i64;
    let k_grid: Vec<f64> = (-n_side - 1..=n_side).map(|i| (i as f64 + 0.5) * dk).collect();
    let report = scattering::scattering_coefficients(&u, &k_grid)?;
    let discrete = scattering::discrete_spectrum(&u, scattering::SearchBox::standard(&u))?;

    let defect = report.max_unitarity_defect();
    if defect > 1e-6 * scale {
        return Err(Error::Numerical(format!(
            "unitarity defect {defect:.3e} exceeds {:.1e}",
            1e-6 * scale
        )));
    }
    let reflection: Vec<solsphere::ReflectionSample> = report
        .k_grid
        .iter()
        .zip(report.reflection())
        .map(|(&k, value)| solsphere::ReflectionSample { k, value })
        .collect();
    let max_r = reflection.iter().fold(0.0f64, |m, s| m.max(s.value.norm()));
    let data = SpectralData {
        poles: discrete.iter().map(|b| b.kappa).collect(),
        normings: discrete.iter().map(|b| b.lambda).collect(),
        reflection: Some(marchenko::symmetrized_table(&reflection)),
    };
    data.save(output)?;
    let summary = ScatterSummary {
        n_bound_states: discrete.len(),
        max_reflection_modulus: max_r,
        max_unitarity_defect: defect,
    };
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serialization"));
    Ok(())
}

fn cmd_invert(
    spec: &std::path::Path,
    grid: &GridArgs,
    reflection_floor: f64,
    output: &std::path::Path,
) -> Result<(), Error> {
    let mut data = load_spec(spec)?;
    if let Some(table) = &data.reflection {
        let max_r = table.iter().fold(0.0f64, |m, s| m.max(s.value.norm()));
        if max_r < reflection_floor {
            data.reflection = None;
        }
    }
    let x_grid = grid.grid()?;
    let kernel = marchenko::build_kernel(&data, &marchenko::standard_z_grid(&x_grid))?;
    let u = marchenko::recover_potential(&kernel, &x_grid)?;
    u.save(output)?;
    println!("wrote {} nodes, max |U| = {:.6e}", u.grid.n, u.max_abs());
    Ok(())
}

fn cmd_kruskal(
    spec: &std::path::Path,
    max_n: usize,
    grid: &GridArgs,
    scale: f64,
) -> Result<(), Error> {
    let data = load_spec(spec)?;
    let u = reflectionless::potential_from_data(&data, &grid.grid()?)?;
    let report = kruskal::report(&u, &data, max_n)?;
    let residual = report.max_residual();
    if residual > 1e-5 * scale {
        return Err(Error::Numerical(format!(
            "direct and trace-formula values disagree by {residual:.3e}"
        )));
    }
    println!("{}", report.to_json());
    Ok(())
}

fn cmd_flow(
    spec: &std::path::Path,
    m: u32,
    t: f64,
    output: &std::path::Path,
) -> Result<(), Error> {
    let data = load_spec(spec)?;
    let flowed = data.mkdv_deform(m, t)?;
    flowed.save(output)?;
    println!("applied flow m = {m}, t = {t:.6e} to {} poles", flowed.poles.len());
    Ok(())
}

fn parse_coeffs(text: &str) -> Result<Vec<Complex64>, Error> {
    text.split(';')
        .map(|pair| {
            let parts: Vec<&str> = pair.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(Error::Parameter(format!(
                    "coefficient `{pair}` is not of the form re,im"
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("not a number: `{s}`")))
            };
            Ok(Complex64::new(parse(parts[0])?, parse(parts[1])?))
        })
        .collect()
}

#[derive(Serialize)]
struct SurfaceReport {
    is_revolution: bool,
    geometry: weierstrass::GeometryReport,
}

#[allow(clippy::too_many_arguments)]
fn cmd_surface(
    spec: &std::path::Path,
    coeffs: &str,
    grid: &GridArgs,
    ny: usize,
    output: Option<&std::path::Path>,
    weld_tol: f64,
    report_path: Option<&std::path::Path>,
    scale: f64,
) -> Result<(), Error> {
    if ny < 8 {
        return Err(Error::Parameter(format!("--ny must be at least 8, got {ny}")));
    }
    let data = load_spec(spec)?;
    let coeffs = parse_coeffs(coeffs)?;
    let x_grid = grid.grid()?;
    let psi = weierstrass::build_spinor(&data, &x_grid, ny, &coeffs)?;
    let surface = weierstrass::immerse(&psi, (0.0, 0.0))?;
    let geometry = weierstrass::geometry_report(&data, &psi, &surface);
    if geometry.dirac_residual > weierstrass::ODE_RES_TOL * scale {
        return Err(Error::Numerical(format!(
            "sampled Dirac residual {:.3e} exceeds {:.1e}",
            geometry.dirac_residual,
            weierstrass::ODE_RES_TOL * scale
        )));
    }
    let report = SurfaceReport {
        is_revolution: weierstrass::is_revolution(&coeffs, data.kernel_dimension())?,
        geometry,
    };
    if let Some(path) = output {
        weierstrass::export_obj(&surface, path, weld_tol)?;
    }
    let json = serde_json::to_string_pretty(&report).expect("report serialization");
    if let Some(path) = report_path {
        std::fs::write(path, &json)?;
    }
    println!("{json}");
    Ok(())
}
