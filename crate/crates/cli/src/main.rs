use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rotgp::expansion::{expansion_residuals, solve_grid, ExpansionSet};
use rotgp::gpe::{init_trial, minimize, optimal_tau, MinimizeOptions, MinimizerResult, TrapSpec};
use rotgp::grid::{read_snapshot, write_snapshot};
use rotgp::kv;
use rotgp::rescale::{align_phase, blowup_record, rescale, BlowupRecord};
use rotgp::sweep::{emit_report, fit_power_law, read_csv, run_sweep, strip_fields, write_plots, PowerLawFit, SweepConfig};
use rotgp::townes::lift_to_grid;
use rotgp::vortex::{self, VortexReport};
use rotgp::{Error, Grid2D, Result, Townes};

/// Ground states of attractive Bose gases in a rotating
/// quadratic-plus-quartic trap.
#[derive(Parser)]
#[command(name = "rotgp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the Townes profile and print its constants.
    Townes,
    /// Minimize the energy for one trap.
    Minimize(MinimizeArgs),
    /// Run a full sweep a -> a* and write the report.
    Sweep(SweepArgs),
    /// Solve the correction problems, optionally against a snapshot.
    Expand(ExpandArgs),
    /// Scan a snapshot for phase singularities.
    Vortex(VortexArgs),
    /// Rewrite plot files and the fit from a stored sweep.csv.
    Report(ReportArgs),
}

#[derive(Args)]
struct TrapArgs {
    /// Coupling as a fraction of a*.
    #[arg(long)]
    fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    c0: f64,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// Fixed rotation speed instead of the schedule C0 (a* - a)^(-beta).
    #[arg(long)]
    omega: Option<f64>,
}

impl TrapArgs {
    fn trap(&self, a_star: f64) -> Result<TrapSpec> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::Config(format!("fraction {} is outside (0, 1)", self.fraction)));
        }
        let a = self.fraction * a_star;
        match self.omega {
            Some(w) => TrapSpec::with_omega(a, w, a_star),
            None => TrapSpec::from_schedule(self.c0, self.beta, a, a_star),
        }
    }
}

#[derive(Args)]
struct MinimizeArgs {
    #[command(flatten)]
    trap: TrapArgs,
    #[arg(long = "L", default_value_t = 4.0)]
    half_extent: f64,
    #[arg(long = "N", default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    #[arg(long, default_value_t = 20_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// Write the minimizer here.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `outdir` from the configuration.
    #[arg(long)]
    outdir: Option<PathBuf>,
}

#[derive(Args)]
struct ExpandArgs {
    /// Direction of x0 in radians; ignored with --snapshot.
    #[arg(long, default_value_t = 0.0)]
    angle: f64,
    /// Minimizer to compare against the expansion.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

#[derive(Args)]
struct VortexArgs {
    snapshot: PathBuf,
    /// Modulus threshold relative to max|u|.
    #[arg(long, default_value_t = vortex::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Print every nonzero winding.
    #[arg(long)]
    list: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Stored sweep.csv.
    input: PathBuf,
    /// Where the plot files go; defaults to the directory of the input.
    #[arg(long)]
    outdir: Option<PathBuf>,
}

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

fn blowup_kv(b: &BlowupRecord) -> String {
    kv::render([
        ("theta", f(b.theta)),
        ("sup_dist", f(b.sup_dist)),
        ("l2_dist", f(b.l2_dist)),
        ("eps_ratio", f(b.eps_ratio)),
        ("mu_eps_sq", f(b.mu_eps_sq)),
        ("eps_bar_ratio", f(b.eps_bar_ratio)),
        ("max_point_ratio", f(b.max_point_ratio)),
    ])
}

fn vortex_kv(r: &VortexReport, half_cell: f64) -> String {
    kv::render([
        ("threshold", f(r.threshold)),
        ("n_vortices", r.vortices.len().to_string()),
        ("n_vortices_inner", r.count_within(2.0, half_cell).to_string()),
        ("unreliable_cells", r.unreliable_cells.to_string()),
        ("vortex_free_radius", f(r.vortex_free_radius)),
        ("scan_radius", f(r.scan_radius)),
        ("min_modulus_ratio", f(r.min_modulus_ratio)),
    ])
}

fn fit_kv(fit: &PowerLawFit, beta: f64, target: f64) -> String {
    kv::render([
        ("fit_points", fit.points.to_string()),
        ("fit_slope", f(fit.slope)),
        ("fit_expected_slope", f(0.5 - beta)),
        ("fit_r_squared", f(fit.r_squared)),
        ("fit_prefactor", f(fit.prefactor)),
        ("fit_expected_prefactor", f(target)),
    ])
}

fn cmd_townes() -> Result<()> {
    let t = Townes::solve()?;
    print!("{}", t.constants.to_key_values());
    Ok(())
}

fn cmd_minimize(args: &MinimizeArgs) -> Result<()> {
    let t = Townes::solve()?;
    let c = &t.constants;
    let trap = args.trap.trap(c.a_star)?;
    let grid = Grid2D::new(args.half_extent, args.n)?;
    let tau = optimal_tau(&trap, c.lambda).min(0.5 / grid.spacing());
    let init = init_trial(&grid, &trap, &t.profile, [1.0, 0.0], tau)?;
    let opts = MinimizeOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        seed: args.seed,
        restarts: args.restarts,
        ..MinimizeOptions::default()
    };
    let res = minimize(&trap, &init, &opts)?;
    println!("a={}", f(trap.a()));
    println!("omega={}", f(trap.omega()));
    print!("{}", res.to_key_values());
    match blowup_record(&res, &trap, &t) {
        Ok(b) => print!("{}", blowup_kv(&b)),
        Err(e) => log::warn!("{e}"),
    }
    print!("{}", vortex_kv(&vortex::scan(&res.field, vortex::DEFAULT_THRESHOLD), 0.5 * grid.spacing()));
    if let Some(path) = &args.snapshot {
        write_snapshot(path, &res.field, trap.a(), trap.omega())?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => SweepConfig::from_file(p)?,
        None => SweepConfig::default(),
    };
    if let Some(o) = &args.outdir {
        cfg.outdir = o.clone();
    }
    let t = Townes::solve()?;
    let c = &t.constants;
    let mut records = run_sweep(&cfg, &t)?;
    if !cfg.snapshots {
        strip_fields(&mut records);
    }
    emit_report(&records, c.a_star, &cfg.outdir)?;
    let ok = records.iter().filter(|r| r.is_ok()).count();
    println!("points={}", records.len());
    println!("ok={ok}");
    println!("outdir={}", cfg.outdir.display());
    match fit_power_law(&records, c.a_star) {
        Ok(fit) => print!("{}", fit_kv(&fit, cfg.beta, 2.0 * cfg.c0 * c.lambda * c.lambda / c.a_star)),
        Err(e) => log::warn!("{e}"),
    }
    Ok(())
}

fn cmd_expand(args: &ExpandArgs) -> Result<()> {
    let t = Townes::solve()?;
    let snap = args.snapshot.as_deref().map(read_snapshot).transpose()?;
    let (x0, fit) = match &snap {
        Some(s) => {
            let trap = TrapSpec::with_omega(s.a, s.omega, t.constants.a_star)?;
            let res = MinimizerResult::from_field(&s.field, &trap)?;
            let r = res.x_a[0].hypot(res.x_a[1]);
            if !(r > 0.0) {
                return Err(Error::Numerical("maximum point at the origin; no direction x0".into()));
            }
            ([res.x_a[0] / r, res.x_a[1] / r], Some((res, trap)))
        }
        None => ([args.angle.cos(), args.angle.sin()], None),
    };
    let set = ExpansionSet::compute(&t, &solve_grid(), x0)?;
    println!("x0_1={}", f(x0[0]));
    println!("x0_2={}", f(x0[1]));
    print!(
        "{}",
        kv::render([
            ("psi1_solvability_1", f(set.psi1_solvability[0])),
            ("psi1_solvability_2", f(set.psi1_solvability[1])),
            ("psi2_solvability_1", f(set.psi2_solvability[0])),
            ("psi2_solvability_2", f(set.psi2_solvability[1])),
            ("phi_solvability", f(set.phi_solvability)),
            ("q_phi_inner", f(set.q_phi_inner)),
            ("psi1_residual", f(set.residuals[0])),
            ("psi2_residual", f(set.residuals[1])),
            ("phi_residual", f(set.residuals[2])),
        ])
    );
    if let Some((res, trap)) = fit {
        let b = blowup_record(&res, &trap, &t)?;
        let eps_bar = b.eps_bar;
        let nu = rescale(&res.field, res.x_a, eps_bar, trap.omega(), eps_bar * trap.a().sqrt())?;
        let q = lift_to_grid(&t.profile, nu.grid(), [0.0, 0.0])?;
        let (_, nu) = align_phase(&nu, &q)?;
        print!("{}", expansion_residuals(&nu, &set, trap.omega(), eps_bar)?.to_key_values());
    }
    Ok(())
}

fn cmd_vortex(args: &VortexArgs) -> Result<()> {
    let snap = read_snapshot(&args.snapshot)?;
    let report = vortex::scan(&snap.field, args.threshold);
    print!("{}", vortex_kv(&report, 0.5 * snap.field.grid().spacing()));
    if args.list {
        for (c, w) in &report.vortices {
            println!("vortex={} {} {w}", f(c[0]), f(c[1]));
        }
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let records = read_csv(&args.input)?;
    let outdir = match &args.outdir {
        Some(o) => o.clone(),
        None => args.input.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    std::fs::create_dir_all(&outdir).map_err(|e| Error::Io {
        path: outdir.clone(),
        source: e,
    })?;
    let t = Townes::solve()?;
    let c = &t.constants;
    write_plots(&records, c.a_star, &outdir)?;
    println!("points={}", records.len());
    if let Some(first) = records.first() {
        match fit_power_law(&records, c.a_star) {
            Ok(fit) => print!(
                "{}",
                fit_kv(&fit, first.beta, 2.0 * first.c0 * c.lambda * c.lambda / c.a_star)
            ),
            Err(e) => log::warn!("{e}"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out = match &cli.command {
        Command::Townes => cmd_townes(),
        Command::Minimize(a) => cmd_minimize(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Expand(a) => cmd_expand(a),
        Command::Vortex(a) => cmd_vortex(a),
        Command::Report(a) => cmd_report(a),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
