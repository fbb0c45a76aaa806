//! Command-line front end: config files, pipeline orchestration, report
//! and plot-table emission. Everything here is deterministic: the same
//! config produces bit-identical output files.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::core::io::{load_operator, save_operator};
use crate::core::{BoundaryControl, DiscreteOperator, Grid, HermitianPotential, Role};
use crate::error::{Error, Result};
use crate::factorization::{
    factorize_cholesky_nest, factorize_formula, model_control_operator, orthogonalizer,
    orthogonalizer_consistency,
};
use crate::forward::{cross_validate_solvers, solve_goursat_kernel, solve_wave_fd};
use crate::nest_diagonal::{eikonal_diagonalization_gap, make_partition, refining_schedule};
use crate::operators::{
    assemble_control_from_kernel, compute_connecting, DEFAULT_RANK_TOL,
};
use crate::wave_model::{
    assemble_model_operator, assemble_q, build_pipeline_level,
    recover_potential, verify_conditions, PipelineLevel, DEFAULT_MARGIN_FRACTION,
};

#[derive(Parser)]
#[command(name = "waveband", version, about = "Boundary-control wave-model pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Route {
    Cholesky,
    Formula,
}

impl Route {
    fn as_str(self) -> &'static str {
        match self {
            Route::Cholesky => "cholesky",
            Route::Formula => "formula",
        }
    }
}

#[derive(Subcommand)]
pub enum Command {
    /// Simulate the boundary-control wave system with the FD scheme.
    Forward {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also compare against the kernel representation at h and h/2.
        #[arg(long)]
        cross_validate: bool,
    },
    /// Solve the Goursat problem for the transmutation kernel; export W.
    Kernel {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Assemble the connecting operator C = W* W and export it.
    Connect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Triangular factorization C = V* V along the delayed-control nest.
    Factorize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Route::Cholesky)]
        route: Route,
    },
    /// Recover the potential from the connecting operator.
    Recover {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Route::Cholesky)]
        route: Route,
    },
    /// Run the condition checks over a refinement sequence.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Comma-separated time-step counts, overriding [verify].levels.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<usize>,
    },
    /// Simulate, recover, and compare against the input potential.
    Roundtrip {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Route::Cholesky)]
        route: Route,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridSection,
    pub potential: PotentialSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub connecting: ConnectingSection,
    #[serde(default)]
    pub recover: RecoverSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_steps: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_channels")]
    pub n_channels: usize,
    /// Spatial coverage; defaults to the horizon (the causal minimum).
    pub x_max: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    /// Builtin grammar: `zero`, `const:<c>`, `bump:<amp>,<center>,<width>`,
    /// `diag:<c1>,...,<cn>`, `hbump:<amp>,<center>,<width>`, `file:<path>`.
    pub spec: String,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    /// `sin` (half-period sine) or `poly` (t^2 (T - t)).
    pub profile: String,
    pub channel: usize,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection { profile: "sin".into(), channel: 0 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConnectingSection {
    /// `simulate` (kernel route from the potential) or `file`.
    pub source: String,
    pub file: Option<PathBuf>,
}

impl Default for ConnectingSection {
    fn default() -> Self {
        ConnectingSection { source: "simulate".into(), file: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverSection {
    pub margin_fraction: f64,
}

impl Default for RecoverSection {
    fn default() -> Self {
        RecoverSection { margin_fraction: DEFAULT_MARGIN_FRACTION }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Time-step counts of the refinement sequence (two or more).
    pub levels: Vec<usize>,
    /// Nest partition counts for the eikonal table.
    pub partitions: Vec<usize>,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection { levels: Vec::new(), partitions: vec![32, 64] }
    }
}

fn default_horizon() -> f64 {
    1.0
}

fn default_channels() -> usize {
    1
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Grid(_)
        | Error::Dimension(_)
        | Error::Coverage(_)
        | Error::Parse(_)
        | Error::Io(_) => 2,
        Error::RecoveryRejected { .. } => 4,
        _ => 3,
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("WAVEBAND_THREADS") {
        if let Ok(k) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }
    let result = match cli.command {
        Command::Forward { config, out, cross_validate } => {
            cmd_forward(&config, &out, cross_validate)
        }
        Command::Kernel { config, out } => cmd_kernel(&config, &out),
        Command::Connect { config, out } => cmd_connect(&config, &out),
        Command::Factorize { config, out, route } => cmd_factorize(&config, &out, route),
        Command::Recover { config, out, route } => cmd_recover(&config, &out, route),
        Command::Verify { config, out, levels } => cmd_verify(&config, &out, &levels),
        Command::Roundtrip { config, out, route } => cmd_roundtrip(&config, &out, route),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn make_grid(cfg: &Config) -> Result<Grid> {
    let x_max = cfg.grid.x_max.unwrap_or(cfg.grid.horizon);
    Grid::with_horizon(cfg.grid.n_steps, cfg.grid.horizon, cfg.grid.n_channels, x_max)
}

fn make_potential(cfg: &Config, grid: &Grid) -> Result<HermitianPotential> {
    HermitianPotential::builtin(
        &cfg.potential.spec,
        grid.n_channels(),
        grid.h(),
        grid.x_steps(),
    )
}

fn make_control(cfg: &Config, grid: &Grid) -> Result<BoundaryControl> {
    let t = grid.horizon();
    match cfg.control.profile.as_str() {
        "sin" => BoundaryControl::scalar_profile(grid, cfg.control.channel, true, move |s| {
            (PI * s / t).sin()
        }),
        "poly" => BoundaryControl::scalar_profile(grid, cfg.control.channel, true, move |s| {
            s * s * (t - s)
        }),
        other => Err(Error::Config(format!("unknown control profile '{other}'"))),
    }
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("report serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Connecting operator from the configured source, with the constant
/// `omega` when the kernel was computed on the way.
fn load_connecting(cfg: &Config, grid: &Grid) -> Result<(DiscreteOperator, Option<f64>)> {
    match cfg.connecting.source.as_str() {
        "simulate" => {
            let pot = make_potential(cfg, grid)?;
            let kernel = solve_goursat_kernel(&pot, grid)?;
            let w = assemble_control_from_kernel(&kernel, grid)?;
            let c = compute_connecting(&w)?;
            Ok((c, Some(kernel.omega())))
        }
        "file" => {
            let path = cfg.connecting.file.as_ref().ok_or_else(|| {
                Error::Config("connecting.source = \"file\" needs connecting.file".into())
            })?;
            let op = load_operator(path)?;
            if op.matrix.nrows() != grid.dim() || (op.h - grid.h()).abs() > 1.0e-12 * grid.h() {
                return Err(Error::Dimension(format!(
                    "connecting operator from {} does not live on the configured grid",
                    path.display()
                )));
            }
            let dev = crate::linalg::hermitian_deviation(&op.matrix);
            if dev > 1.0e-8 * crate::linalg::spectral_norm(&op.matrix).max(1.0) {
                return Err(Error::Numerical(format!(
                    "imported connecting operator is not Hermitian (deviation {dev:.3e})"
                )));
            }
            let c = DiscreteOperator::new(
                crate::linalg::hermitian_part(&op.matrix),
                op.h,
                op.n,
                Role::C,
            )?;
            Ok((c, None))
        }
        other => Err(Error::Config(format!("unknown connecting source '{other}'"))),
    }
}

fn factorize_by_route(
    c: &DiscreteOperator,
    grid: &Grid,
    route: Route,
) -> Result<(DiscreteOperator, Option<f64>)> {
    match route {
        Route::Cholesky => factorize_cholesky_nest(c, grid),
        Route::Formula => {
            let schedule = refining_schedule(grid, 6)?;
            Ok((factorize_formula(c, grid, &schedule, DEFAULT_RANK_TOL)?, None))
        }
    }
}

#[derive(Serialize)]
struct ForwardSummary {
    n_steps: usize,
    h: f64,
    n_channels: usize,
    light_cone_leak: f64,
    cross_validation: Option<crate::forward::CrossValidationReport>,
}

fn cmd_forward(config: &Path, out: &Path, cross_validate: bool) -> Result<()> {
    let cfg = load_config(config)?;
    let grid = make_grid(&cfg)?;
    let pot = make_potential(&cfg, &grid)?;
    let control = make_control(&cfg, &grid)?;
    let field = solve_wave_fd(&pot, &control, &grid)?;
    prepare_out(out)?;
    std::fs::write(out.join("wave_field.csv"), field.export_csv(None))?;
    let cross_validation = if cross_validate {
        Some(cross_validate_solvers(&pot, &control, &grid)?)
    } else {
        None
    };
    write_json(
        &out.join("forward.json"),
        &ForwardSummary {
            n_steps: grid.n_steps(),
            h: grid.h(),
            n_channels: grid.n_channels(),
            light_cone_leak: field.light_cone_leak(),
            cross_validation,
        },
    )
}

#[derive(Serialize)]
struct KernelSummary {
    omega: f64,
    max_neighbor_jump: f64,
    diagonal_trace_check: f64,
}

fn cmd_kernel(config: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let grid = make_grid(&cfg)?;
    let pot = make_potential(&cfg, &grid)?;
    let kernel = solve_goursat_kernel(&pot, &grid)?;
    let w = assemble_control_from_kernel(&kernel, &grid)?;
    prepare_out(out)?;
    save_operator(&w, &out.join("control_operator.csv"))?;
    // ||w(T, T) + (1/2) int_0^T q|| as a cheap self-check on the Goursat data.
    let m = grid.n_steps();
    let mut half_int = crate::linalg::CMatrix::zeros(grid.n_channels(), grid.n_channels());
    for i in 0..m {
        half_int += (pot.node(i) + pot.node(i + 1)) * crate::linalg::cr(grid.h() / 4.0);
    }
    let trace_check = (kernel.at_nodes(m, m) + half_int).norm();
    write_json(
        &out.join("kernel.json"),
        &KernelSummary {
            omega: kernel.omega(),
            max_neighbor_jump: kernel.max_neighbor_jump(),
            diagonal_trace_check: trace_check,
        },
    )
}

#[derive(Serialize)]
struct ConnectSummary {
    dim: usize,
    hermitian_deviation: f64,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
}

fn cmd_connect(config: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let grid = make_grid(&cfg)?;
    let (c, _) = load_connecting(&cfg, &grid)?;
    let (_, evals) = crate::linalg::hermitian_eigen(&c.matrix)?;
    prepare_out(out)?;
    save_operator(&c, &out.join("connecting_operator.csv"))?;
    write_json(
        &out.join("connect.json"),
        &ConnectSummary {
            dim: c.matrix.nrows(),
            hermitian_deviation: crate::linalg::hermitian_deviation(&c.matrix),
            min_eigenvalue: evals[0],
            max_eigenvalue: evals[evals.len() - 1],
        },
    )
}

#[derive(Serialize)]
struct FactorizeSummary {
    route: &'static str,
    relative_residual: f64,
    ridge: Option<f64>,
}

fn cmd_factorize(config: &Path, out: &Path, route: Route) -> Result<()> {
    let cfg = load_config(config)?;
    let grid = make_grid(&cfg)?;
    let (c, _) = load_connecting(&cfg, &grid)?;
    let (v, ridge) = factorize_by_route(&c, &grid, route)?;
    let residual =
        (v.matrix.adjoint() * &v.matrix - &c.matrix).norm() / c.matrix.norm().max(1.0e-300);
    prepare_out(out)?;
    save_operator(&v, &out.join("factor.csv"))?;
    write_json(
        &out.join("factorize.json"),
        &FactorizeSummary { route: route.as_str(), relative_residual: residual, ridge },
    )
}

#[derive(Serialize)]
struct RecoverSummary {
    route: &'static str,
    margin: f64,
    interior_slots: (usize, usize),
    offdiag_mass: f64,
    hermiticity_dev: f64,
    presym_deviation: f64,
    ridge: Option<f64>,
}

fn margin_of(cfg: &Config, grid: &Grid) -> f64 {
    (cfg.recover.margin_fraction * grid.horizon()).max(4.0 * grid.h())
}

fn cmd_recover(config: &Path, out: &Path, route: Route) -> Result<()> {
    let cfg = load_config(config)?;
    let grid = make_grid(&cfg)?;
    let (c, _) = load_connecting(&cfg, &grid)?;
    let (v, ridge) = factorize_by_route(&c, &grid, route)?;
    let wt = model_control_operator(&v, &grid)?;
    let model = assemble_model_operator(&wt, &grid)?;
    let q = assemble_q(&model, &grid)?;
    let (qhat, report) = recover_potential(&q, &grid, margin_of(&cfg, &grid))?;
    prepare_out(out)?;
    qhat.save(&out.join("recovered_potential.csv"))?;
    write_json(
        &out.join("recover.json"),
        &RecoverSummary {
            route: route.as_str(),
            margin: report.margin,
            interior_slots: report.interior,
            offdiag_mass: report.offdiag_mass,
            hermiticity_dev: report.hermiticity_dev,
            presym_deviation: qhat.presym_deviation,
            ridge,
        },
    )
}

#[derive(Serialize)]
struct EikonalEntry {
    partition: usize,
    delta: f64,
    gap: f64,
}

#[derive(Serialize)]
struct VerifySummary {
    levels: Vec<usize>,
    conditions: crate::wave_model::ConditionsReport,
    eikonal: Vec<EikonalEntry>,
    orthogonalizer_gap: f64,
}

fn build_levels(cfg: &Config, counts: &[usize]) -> Result<Vec<PipelineLevel>> {
    use rayon::prelude::*;
    counts
        .par_iter()
        .map(|&n_steps| {
            let x_max = cfg.grid.x_max.unwrap_or(cfg.grid.horizon);
            let grid =
                Grid::with_horizon(n_steps, cfg.grid.horizon, cfg.grid.n_channels, x_max)?;
            let pot = make_potential(cfg, &grid)?;
            build_pipeline_level(&pot, &grid)
        })
        .collect()
}

fn cmd_verify(config: &Path, out: &Path, level_flag: &[usize]) -> Result<()> {
    let cfg = load_config(config)?;
    let counts: Vec<usize> = if level_flag.is_empty() {
        cfg.verify.levels.clone()
    } else {
        level_flag.to_vec()
    };
    if counts.len() < 2 {
        return Err(Error::Config(
            "verification needs two or more refinement levels".into(),
        ));
    }
    if cfg.connecting.source != "simulate" {
        return Err(Error::Config(
            "verification re-simulates each level; set connecting.source = \"simulate\"".into(),
        ));
    }
    let levels = build_levels(&cfg, &counts)?;
    let conditions = verify_conditions(&levels)?;

    let fine = levels.last().unwrap();
    let mut eikonal = Vec::new();
    for &p in &cfg.verify.partitions {
        let part = make_partition(&fine.grid, p)?;
        let gap = eikonal_diagonalization_gap(&fine.w, &fine.grid, &part)?;
        eikonal.push(EikonalEntry { partition: p, delta: fine.grid.horizon() / p as f64, gap });
    }

    // Horizon-consistency of the orthogonalizer: same step, half the horizon.
    let short_grid = Grid::new(
        fine.grid.n_steps() / 2,
        fine.grid.h(),
        fine.grid.n_channels(),
        fine.grid.x_max(),
    )?;
    let short_pot = make_potential(&cfg, &fine.grid)?;
    let short = build_pipeline_level(&short_pot, &short_grid)?;
    let (v_fine, _) = factorize_cholesky_nest(&fine.c, &fine.grid)?;
    let (v_short, _) = factorize_cholesky_nest(&short.c, &short_grid)?;
    let phi_fine = orthogonalizer(&fine.w, &v_fine, &fine.grid)?;
    let phi_short = orthogonalizer(&short.w, &v_short, &short_grid)?;
    let orthogonalizer_gap = orthogonalizer_consistency(&phi_short, &phi_fine)?;

    prepare_out(out)?;
    let mut table = String::from("n_steps,level,delta,dev_from_reflection,sigma_min,bound,diff_from_prev\n");
    for (lev, &n_steps) in levels.iter().zip(&counts) {
        for (i, row) in lev.diagonal.levels.iter().enumerate() {
            table.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                n_steps,
                i,
                row.delta,
                row.dev_from_reflection,
                row.sigma_min,
                row.bound.map_or(String::new(), |b| b.to_string()),
                row.diff_from_prev.map_or(String::new(), |d| d.to_string()),
            ));
        }
    }
    std::fs::write(out.join("diagonal_convergence.csv"), table)?;
    let mut etable = String::from("partition,delta,gap\n");
    for e in &eikonal {
        etable.push_str(&format!("{},{},{}\n", e.partition, e.delta, e.gap));
    }
    std::fs::write(out.join("eikonal.csv"), etable)?;
    write_json(
        &out.join("verify.json"),
        &VerifySummary { levels: counts, conditions, eikonal, orthogonalizer_gap },
    )
}

#[derive(Serialize)]
struct RoundtripSummary {
    route: &'static str,
    margin: f64,
    interior_slots: (usize, usize),
    offdiag_mass: f64,
    hermiticity_dev: f64,
    rel_interior_error: f64,
    max_interior_error: f64,
    omega: Option<f64>,
}

fn cmd_roundtrip(config: &Path, out: &Path, route: Route) -> Result<()> {
    let cfg = load_config(config)?;
    let grid = make_grid(&cfg)?;
    let pot = make_potential(&cfg, &grid)?;
    let kernel = solve_goursat_kernel(&pot, &grid)?;
    let w = assemble_control_from_kernel(&kernel, &grid)?;
    let c = compute_connecting(&w)?;
    let (v, _) = factorize_by_route(&c, &grid, route)?;
    let wt = model_control_operator(&v, &grid)?;
    let model = assemble_model_operator(&wt, &grid)?;
    let q = assemble_q(&model, &grid)?;
    let (qhat, report) = recover_potential(&q, &grid, margin_of(&cfg, &grid))?;
    let h = grid.h();
    let reference = |tau: f64| pot.half_node((2.0 * tau / h).round() as usize);
    let rel = qhat.rel_l2_error_against(&reference);
    let max_err = qhat.max_error_against(&reference);
    prepare_out(out)?;
    qhat.save(&out.join("recovered_potential.csv"))?;
    write_json(
        &out.join("roundtrip.json"),
        &RoundtripSummary {
            route: route.as_str(),
            margin: report.margin,
            interior_slots: report.interior,
            offdiag_mass: report.offdiag_mass,
            hermiticity_dev: report.hermiticity_dev,
            rel_interior_error: rel,
            max_interior_error: max_err,
            omega: Some(kernel.omega()),
        },
    )
}
