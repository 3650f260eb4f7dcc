//! Parameter sweeps `a ↗ a*`: per-point minimization, blow-up diagnostics,
//! expansion residuals and vortex scan, aggregated into CSV and plot files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expansion::{expansion_residuals, solve_grid, ExpansionSet};
use crate::gpe::{init_trial, minimize, optimal_tau, MinimizeOptions, MinimizerResult, TrapSpec};
use crate::grid::{write_snapshot, ComplexField2D, Grid2D};
use crate::kv;
use crate::rescale::{align_phase, blowup_record, predicted_eps, rescale, warm_start, BlowupRecord};
use crate::townes::{lift_to_grid, Townes};
use crate::vortex;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub c0: f64,
    pub beta: f64,
    /// `a / a*`, strictly increasing in `(0, 1)`.
    pub fractions: Vec<f64>,
    pub grid_l: f64,
    /// One entry, or one per fraction.
    pub grid_n: Vec<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub outdir: PathBuf,
    pub seed: u64,
    pub restarts: usize,
    pub warm_start: bool,
    pub expansion: bool,
    pub snapshots: bool,
    pub vortex_threshold: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            c0: 1.0,
            beta: 0.0,
            fractions: vec![0.80, 0.85, 0.90, 0.94],
            grid_l: 4.0,
            grid_n: vec![256],
            tol: 1e-7,
            max_iter: 20_000,
            outdir: PathBuf::from("sweep-out"),
            seed: 0,
            restarts: 1,
            warm_start: true,
            expansion: true,
            snapshots: true,
            vortex_threshold: vortex::DEFAULT_THRESHOLD,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

impl SweepConfig {
    /// Parses `key = value` text. Missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let map = kv::parse(text)?;
        let mut c = SweepConfig::default();
        for (k, v) in &map {
            match k.as_str() {
                "c0" => c.c0 = parse_num(k, v)?,
                "beta" => c.beta = parse_num(k, v)?,
                "fractions" => c.fractions = parse_list(k, v)?,
                "grid.L" => c.grid_l = parse_num(k, v)?,
                "grid.N" => c.grid_n = parse_list(k, v)?,
                "tol" => c.tol = parse_num(k, v)?,
                "max_iter" => c.max_iter = parse_num(k, v)?,
                "outdir" => c.outdir = PathBuf::from(v.trim()),
                "seed" => c.seed = parse_num(k, v)?,
                "restarts" => c.restarts = parse_num(k, v)?,
                "warm_start" => c.warm_start = parse_bool(k, v)?,
                "expansion" => c.expansion = parse_bool(k, v)?,
                "snapshots" => c.snapshots = parse_bool(k, v)?,
                "vortex.threshold" => c.vortex_threshold = parse_num(k, v)?,
                _ => return Err(Error::Config(format!("unknown key '{k}'"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::Config(format!("c0 must be positive, got {}", self.c0)));
        }
        if !(0.0..0.5).contains(&self.beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1/2), got {}", self.beta)));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return Err(Error::Config(format!("fraction {f} is outside (0, 1)")));
        }
        if self.fractions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("fractions must be strictly increasing".into()));
        }
        if self.grid_n.is_empty() || (self.grid_n.len() != 1 && self.grid_n.len() != self.fractions.len()) {
            return Err(Error::Config(format!(
                "grid.N needs one entry or one per fraction, got {}",
                self.grid_n.len()
            )));
        }
        for &n in &self.grid_n {
            Grid2D::new(self.grid_l, n)?;
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.vortex_threshold >= 0.0 && self.vortex_threshold < 1.0) {
            return Err(Error::Config(format!(
                "vortex.threshold must lie in [0, 1), got {}",
                self.vortex_threshold
            )));
        }
        Ok(())
    }

    /// Conditions that are legal but leave part of the analysis without a
    /// theoretical basis.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.beta >= 1.0 / 6.0 {
            w.push(format!(
                "beta = {} >= 1/6: the vortex-free region estimate does not apply",
                self.beta
            ));
        }
        w
    }

    pub fn grid_for(&self, index: usize) -> Result<Grid2D> {
        let n = if self.grid_n.len() == 1 { self.grid_n[0] } else { self.grid_n[index] };
        Grid2D::new(self.grid_l, n)
    }

    fn minimize_options(&self) -> MinimizeOptions {
        MinimizeOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            restarts: self.restarts,
            seed: self.seed,
            ..MinimizeOptions::default()
        }
    }
}

/// One sweep point. Numeric fields are NaN when the stage producing them
/// failed; `status` is `ok` or the first error.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub fraction: f64,
    pub a: f64,
    pub beta: f64,
    pub c0: f64,
    pub omega: f64,
    pub status: String,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub energy: f64,
    pub covariant_kinetic: f64,
    pub trap: f64,
    pub interaction: f64,
    pub mu: f64,
    pub eps_a: f64,
    pub eps_bar: f64,
    pub abs_x_a: f64,
    pub x_a1: f64,
    pub x_a2: f64,
    pub theta: f64,
    pub sup_dist: f64,
    pub l2_dist: f64,
    pub eps_ratio: f64,
    pub mu_eps_sq: f64,
    pub eps_bar_ratio: f64,
    pub max_point_ratio: f64,
    /// `I / (a* - a)^{1/2-β}` divided by `2C0λ²/a*`.
    pub energy_ratio: f64,
    pub r0: f64,
    pub r1: f64,
    pub r_im: f64,
    pub im_ratio: f64,
    pub n_vortices: usize,
    /// Nonzero windings meeting `|x| <= 2`.
    pub n_vortices_inner: usize,
    pub vortex_free_radius: f64,
    pub min_modulus_ratio: f64,
    /// The minimizer; absent for rows read back from CSV.
    pub field: Option<ComplexField2D>,
}

/// Column order of `sweep.csv`.
pub const CSV_COLUMNS: [&str; 35] = [
    "fraction",
    "a",
    "beta",
    "c0",
    "omega",
    "status",
    "converged",
    "iterations",
    "residual",
    "energy",
    "covariant_kinetic",
    "trap",
    "interaction",
    "mu",
    "eps_a",
    "eps_bar",
    "abs_x_a",
    "x_a1",
    "x_a2",
    "theta",
    "sup_dist",
    "l2_dist",
    "eps_ratio",
    "mu_eps_sq",
    "eps_bar_ratio",
    "max_point_ratio",
    "energy_ratio",
    "r0",
    "r1",
    "r_im",
    "im_ratio",
    "n_vortices",
    "n_vortices_inner",
    "vortex_free_radius",
    "min_modulus_ratio",
];

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.16e}")
    }
}

impl SweepRecord {
    fn empty(cfg: &SweepConfig, fraction: f64, a_star: f64) -> Self {
        let nan = f64::NAN;
        SweepRecord {
            fraction,
            a: fraction * a_star,
            beta: cfg.beta,
            c0: cfg.c0,
            omega: nan,
            status: "ok".into(),
            converged: false,
            iterations: 0,
            residual: nan,
            energy: nan,
            covariant_kinetic: nan,
            trap: nan,
            interaction: nan,
            mu: nan,
            eps_a: nan,
            eps_bar: nan,
            abs_x_a: nan,
            x_a1: nan,
            x_a2: nan,
            theta: nan,
            sup_dist: nan,
            l2_dist: nan,
            eps_ratio: nan,
            mu_eps_sq: nan,
            eps_bar_ratio: nan,
            max_point_ratio: nan,
            energy_ratio: nan,
            r0: nan,
            r1: nan,
            r_im: nan,
            im_ratio: nan,
            n_vortices: 0,
            n_vortices_inner: 0,
            vortex_free_radius: nan,
            min_modulus_ratio: nan,
            field: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn csv_row(&self) -> Vec<String> {
        let mut row = vec![
            fmt(self.fraction),
            fmt(self.a),
            fmt(self.beta),
            fmt(self.c0),
            fmt(self.omega),
            self.status.clone(),
            self.converged.to_string(),
            self.iterations.to_string(),
        ];
        row.extend(
            [
                self.residual,
                self.energy,
                self.covariant_kinetic,
                self.trap,
                self.interaction,
                self.mu,
                self.eps_a,
                self.eps_bar,
                self.abs_x_a,
                self.x_a1,
                self.x_a2,
                self.theta,
                self.sup_dist,
                self.l2_dist,
                self.eps_ratio,
                self.mu_eps_sq,
                self.eps_bar_ratio,
                self.max_point_ratio,
                self.energy_ratio,
                self.r0,
                self.r1,
                self.r_im,
                self.im_ratio,
            ]
            .map(fmt),
        );
        row.push(self.n_vortices.to_string());
        row.push(self.n_vortices_inner.to_string());
        row.push(fmt(self.vortex_free_radius));
        row.push(fmt(self.min_modulus_ratio));
        row
    }

    fn from_csv_row(row: &csv::StringRecord) -> Result<Self> {
        if row.len() != CSV_COLUMNS.len() {
            return Err(Error::Parse(format!(
                "expected {} columns, found {}",
                CSV_COLUMNS.len(),
                row.len()
            )));
        }
        let f = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| Error::Parse(format!("column {}: bad number '{}'", CSV_COLUMNS[i], &row[i])))
        };
        let u = |i: usize| -> Result<usize> {
            row[i]
                .parse()
                .map_err(|_| Error::Parse(format!("column {}: bad integer '{}'", CSV_COLUMNS[i], &row[i])))
        };
        Ok(SweepRecord {
            fraction: f(0)?,
            a: f(1)?,
            beta: f(2)?,
            c0: f(3)?,
            omega: f(4)?,
            status: row[5].to_string(),
            converged: row[6] == *"true",
            iterations: u(7)?,
            residual: f(8)?,
            energy: f(9)?,
            covariant_kinetic: f(10)?,
            trap: f(11)?,
            interaction: f(12)?,
            mu: f(13)?,
            eps_a: f(14)?,
            eps_bar: f(15)?,
            abs_x_a: f(16)?,
            x_a1: f(17)?,
            x_a2: f(18)?,
            theta: f(19)?,
            sup_dist: f(20)?,
            l2_dist: f(21)?,
            eps_ratio: f(22)?,
            mu_eps_sq: f(23)?,
            eps_bar_ratio: f(24)?,
            max_point_ratio: f(25)?,
            energy_ratio: f(26)?,
            r0: f(27)?,
            r1: f(28)?,
            r_im: f(29)?,
            im_ratio: f(30)?,
            n_vortices: u(31)?,
            n_vortices_inner: u(32)?,
            vortex_free_radius: f(33)?,
            min_modulus_ratio: f(34)?,
            field: None,
        })
    }

    fn fill_minimizer(&mut self, res: &MinimizerResult) {
        self.converged = res.converged;
        self.iterations = res.iterations;
        self.residual = res.residual;
        self.energy = res.energy.total;
        self.covariant_kinetic = res.energy.covariant_kinetic;
        self.trap = res.energy.trap;
        self.interaction = res.energy.interaction;
        self.mu = res.mu;
        self.eps_a = res.eps_a;
        self.eps_bar = res.eps_bar.unwrap_or(f64::NAN);
        self.x_a1 = res.x_a[0];
        self.x_a2 = res.x_a[1];
        self.abs_x_a = res.x_a[0].hypot(res.x_a[1]);
    }

    fn fill_blowup(&mut self, b: &BlowupRecord) {
        self.theta = b.theta;
        self.sup_dist = b.sup_dist;
        self.l2_dist = b.l2_dist;
        self.eps_ratio = b.eps_ratio;
        self.mu_eps_sq = b.mu_eps_sq;
        self.eps_bar_ratio = b.eps_bar_ratio;
        self.max_point_ratio = b.max_point_ratio;
    }
}

/// Everything one sweep point needs from its predecessor for a warm start.
struct Previous {
    field: ComplexField2D,
    x_a: [f64; 2],
    eps_a: f64,
    trap: TrapSpec,
}

fn run_point(
    cfg: &SweepConfig,
    townes: &Townes,
    index: usize,
    prev: Option<&Previous>,
) -> (SweepRecord, Option<Previous>) {
    let c = &townes.constants;
    let fraction = cfg.fractions[index];
    let mut rec = SweepRecord::empty(cfg, fraction, c.a_star);
    let mut next = None;
    if let Err(e) = point_stages(cfg, townes, index, prev, &mut rec, &mut next) {
        log::warn!("sweep point a/a* = {fraction}: {e}");
        rec.status = e.to_string();
    }
    (rec, next)
}

fn point_stages(
    cfg: &SweepConfig,
    townes: &Townes,
    index: usize,
    prev: Option<&Previous>,
    rec: &mut SweepRecord,
    next: &mut Option<Previous>,
) -> Result<()> {
    let c = &townes.constants;
    let trap = TrapSpec::from_schedule(cfg.c0, cfg.beta, rec.a, c.a_star)?;
    rec.omega = trap.omega();
    let grid = cfg.grid_for(index)?;
    let init = match prev {
        Some(p) if cfg.warm_start && p.field.grid() == &grid => {
            let ratio = predicted_eps(&p.trap, c.lambda) / predicted_eps(&trap, c.lambda);
            warm_start(&p.field, p.x_a, p.eps_a, p.eps_a / ratio, p.trap.omega(), trap.omega())?
        }
        _ => {
            let tau = optimal_tau(&trap, c.lambda).min(0.5 / grid.spacing());
            init_trial(&grid, &trap, &townes.profile, [1.0, 0.0], tau)?
        }
    };
    let res = minimize(&trap, &init, &cfg.minimize_options())?;
    rec.fill_minimizer(&res);
    rec.field = Some(res.field.clone());
    *next = Some(Previous {
        field: res.field.clone(),
        x_a: res.x_a,
        eps_a: res.eps_a,
        trap,
    });
    let da = c.a_star - trap.a();
    rec.energy_ratio = res.energy.total / da.powf(0.5 - cfg.beta) / (2.0 * cfg.c0 * c.lambda.powi(2) / c.a_star);

    let scan = vortex::scan(&res.field, cfg.vortex_threshold);
    rec.n_vortices = scan.vortices.len();
    rec.n_vortices_inner = scan.count_within(2.0, 0.5 * grid.spacing());
    rec.vortex_free_radius = scan.vortex_free_radius;
    rec.min_modulus_ratio = scan.min_modulus_ratio;

    let blow = blowup_record(&res, &trap, townes)?;
    rec.fill_blowup(&blow);

    if cfg.expansion {
        let eps_bar = blow.eps_bar;
        let r = blow.abs_x_a();
        if !(r > 0.0) {
            return Err(Error::Numerical("maximum point at the origin; no direction x0".into()));
        }
        let x0 = [res.x_a[0] / r, res.x_a[1] / r];
        let set = ExpansionSet::compute(townes, &solve_grid(), x0)?;
        let nu = rescale(&res.field, res.x_a, eps_bar, trap.omega(), eps_bar * trap.a().sqrt())?;
        let q = lift_to_grid(&townes.profile, nu.grid(), [0.0, 0.0])?;
        let (_, nu) = align_phase(&nu, &q)?;
        let er = expansion_residuals(&nu, &set, trap.omega(), eps_bar)?;
        rec.r0 = er.r0;
        rec.r1 = er.r1;
        rec.r_im = er.r_im;
        rec.im_ratio = er.im_ratio;
    }
    Ok(())
}

/// Runs every sweep point in `a` order. Stage failures are recorded in the
/// row's `status` and do not stop the sweep.
pub fn run_sweep(cfg: &SweepConfig, townes: &Townes) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    for w in cfg.warnings() {
        log::warn!("{w}");
    }
    if cfg.warm_start {
        let mut out = Vec::with_capacity(cfg.fractions.len());
        let mut prev: Option<Previous> = None;
        for i in 0..cfg.fractions.len() {
            let (rec, next) = run_point(cfg, townes, i, prev.as_ref());
            if next.is_some() {
                prev = next;
            }
            out.push(rec);
        }
        Ok(out)
    } else {
        Ok((0..cfg.fractions.len())
            .into_par_iter()
            .map(|i| run_point(cfg, townes, i, None).0)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    /// Least-squares slope of `log I` against `log(a* - a)`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `I / (a* - a)^{1/2-β}` at the point closest to `a*`.
    pub prefactor: f64,
    pub points: usize,
}

/// Least squares `y = slope·x + intercept` with the coefficient of
/// determination.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// Fits `I ∝ (a* - a)^s` over the rows that completed.
pub fn fit_power_law(records: &[SweepRecord], a_star: f64) -> Result<PowerLawFit> {
    let rows: Vec<&SweepRecord> = records
        .iter()
        .filter(|r| r.is_ok() && r.converged && r.energy > 0.0)
        .collect();
    if rows.len() < 3 {
        return Err(Error::Numerical(format!(
            "power-law fit needs at least 3 converged points, got {}",
            rows.len()
        )));
    }
    let x: Vec<f64> = rows.iter().map(|r| (a_star - r.a).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.energy.ln()).collect();
    let (slope, intercept, r_squared) = fit_line(&x, &y);
    let last = rows
        .iter()
        .max_by(|p, q| p.a.total_cmp(&q.a))
        .expect("non-empty");
    let prefactor = last.energy / (a_star - last.a).powf(0.5 - last.beta);
    Ok(PowerLawFit {
        slope,
        intercept,
        r_squared,
        prefactor,
        points: rows.len(),
    })
}

/// Names of the plot-data files written by [`emit_report`].
pub const PLOT_FILES: [&str; 4] = [
    "energy_vs_gap.dat",
    "profile_distance.dat",
    "max_point.dat",
    "vortex_radius.dat",
];

pub fn write_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(CSV_COLUMNS).map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record(r.csv_row()).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rd.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::Parse(format!("{}: unexpected header", path.display())));
    }
    rd.records()
        .map(|row| SweepRecord::from_csv_row(&row.map_err(|e| csv_err(path, e))?))
        .collect()
}

fn write_xy(path: &Path, rows: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let mut text = String::new();
    for (x, y) in rows {
        text.push_str(&format!("{} {}\n", fmt(x), fmt(y)));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the plot-data files for `records` into `outdir`.
pub fn write_plots(records: &[SweepRecord], a_star: f64, outdir: &Path) -> Result<()> {
    write_xy(&outdir.join(PLOT_FILES[0]), records.iter().map(|r| (a_star - r.a, r.energy)))?;
    write_xy(&outdir.join(PLOT_FILES[1]), records.iter().map(|r| (r.a, r.sup_dist)))?;
    write_xy(&outdir.join(PLOT_FILES[2]), records.iter().map(|r| (r.a, r.max_point_ratio)))?;
    write_xy(&outdir.join(PLOT_FILES[3]), records.iter().map(|r| (r.a, r.vortex_free_radius)))?;
    Ok(())
}

/// Writes `sweep.csv`, one snapshot per row that kept its field, and the
/// plot-data files.
pub fn emit_report(records: &[SweepRecord], a_star: f64, outdir: &Path) -> Result<()> {
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    write_csv(records, &outdir.join("sweep.csv"))?;
    for (i, r) in records.iter().enumerate() {
        if let Some(field) = &r.field {
            let name = format!("snapshot_{i:02}_a{:.4}.txt", r.fraction);
            write_snapshot(outdir.join(name), field, r.a, r.omega)?;
        }
    }
    write_plots(records, a_star, outdir)
}

/// Drops the fields from `records` when snapshots are disabled.
pub fn strip_fields(records: &mut [SweepRecord]) {
    for r in records {
        r.field = None;
    }
}
