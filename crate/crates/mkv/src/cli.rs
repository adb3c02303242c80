//! `mkv` command line.
//!
//! Exit codes: 0 success, 1 assumption or verification failure (a `diagnosis.json` is
//! written next to `manifest.json`), 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mkv_core::fokker_planck::{solve_nfpe, FpeConfig};
use mkv_core::kato::{kato_functional, lpq_norm, QuadratureOptions, SpaceTimeField};
use mkv_core::measures::{dphi_metric, MASS_TOL};
use mkv_core::mkv::{freeze, picard_observe, psi, seed_flow, ScenarioConfig};
use mkv_core::parametrix::{heat_kernel, CoefficientField};
use mkv_core::particles::{empirical_to_measure, simulate, ParticleConfig, Smoothing};
use mkv_core::scenarios::{build, Example3, ScenarioSpec, LIBRARY};
use mkv_core::{Error, Measure, MeasureFlow};
use serde::Serialize;
use serde_json::{json, Value};

use crate::formats;
use crate::manifest::{category, sha256_hex, Diagnosis, RunManifest, RunStatus};
use crate::suites::{self, Suite};

/// Default output root when neither `--out` nor `MKV_DATA_DIR` is given.
pub const DEFAULT_ROOT: &str = "mkv-out";

#[derive(Debug, Parser, Serialize)]
#[command(name = "mkv", version, about = "Parametrix heat kernels, measure-flow fixed points and their cross-checks")]
pub struct Cli {
    /// Output directory for this run [default: <data dir>/<command>].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root for default output directories.
    #[arg(long, global = true, env = "MKV_DATA_DIR", default_value = DEFAULT_ROOT)]
    pub data_dir: PathBuf,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Command tolerance: kernel mass check, Picard residual, Example 3 residuals.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case", tag = "command")]
pub enum Command {
    /// Heat kernel of the equation frozen along the seed flow.
    Kernel(KernelArgs),
    /// Damped Picard iteration of ψ.
    Fixpoint(ScenarioArg),
    /// Interacting-particle simulation.
    Particles(ParticlesArgs),
    /// Nonlinear Fokker–Planck solve.
    Nfpe(NfpeArgs),
    /// Kato functional and localized norm of the drift frozen along the seed flow.
    Norms(NormsArgs),
    /// Verification suites.
    Verify(VerifyArgs),
    /// The two fixed points [W] and [2W] of Example 3.
    Example3,
    /// Shipped scenario library.
    Scenarios {
        #[command(subcommand)]
        action: ScenariosAction,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Kernel(_) => "kernel",
            Command::Fixpoint(_) => "fixpoint",
            Command::Particles(_) => "particles",
            Command::Nfpe(_) => "nfpe",
            Command::Norms(_) => "norms",
            Command::Verify(_) => "verify",
            Command::Example3 => "example3",
            Command::Scenarios { .. } => "scenarios",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ScenarioArg {
    /// Scenario JSON file, or a library name.
    #[arg(long, default_value = "constant")]
    pub scenario: String,
}

#[derive(Debug, Args, Serialize)]
pub struct KernelArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArg,
    /// MKVG kernel path (relative to the working directory) [default: <out>/kernel.mkvg].
    #[arg(long)]
    pub kernel_out: Option<PathBuf>,
    /// Start points, comma separated, `d` coordinates each [default: origin].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Vec<f64>,
    /// Output times, comma separated [default: scenario times].
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingArg {
    Histogram,
    Kde,
}

#[derive(Debug, Args, Serialize)]
pub struct ParticlesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArg,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Step bound.
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    #[arg(long, value_enum, default_value = "histogram")]
    pub smoothing: SmoothingArg,
    /// KDE bandwidth [default: two cell widths].
    #[arg(long)]
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct NfpeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArg,
    /// Cells per axis [default: scenario grid].
    #[arg(long)]
    pub cells: Option<usize>,
    /// Step bound.
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct NormsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scenario: ScenarioArg,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Time horizon T.
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    /// Space index p [default: the scenario's drift class].
    #[arg(long)]
    pub p: Option<f64>,
    /// Time index q [default: the scenario's drift class].
    #[arg(long)]
    pub q: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "trivial")]
    pub suite: Suite,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case", tag = "action")]
pub enum ScenariosAction {
    /// Names, descriptions and assumption matrix.
    List,
    /// Resolved defaults of one scenario.
    Show { name: String },
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
    Verification { message: String, details: Value },
    Io(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Core(e) if category(e.kind) == "usage" => 2,
            _ => 1,
        }
    }

    fn diagnosis(&self) -> Diagnosis {
        match self {
            Failure::Usage(m) => Diagnosis::new("usage", m.clone(), Value::Null),
            Failure::Core(e) => Diagnosis::from_error(e),
            Failure::Verification { message, details } => Diagnosis::new("verification_failed", message.clone(), details.clone()),
            Failure::Io(e) => Diagnosis::new("io", format!("{e:#}"), Value::Null),
        }
    }
}

type Outcome = Result<(), Failure>;

/// Per-run state: output directory and the manifest being filled in.
struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    /// Path for an output file in the run directory, recorded in the manifest.
    fn output(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.dir.join(name)
    }

    fn external(&mut self, path: &Path) -> PathBuf {
        self.manifest.outputs.push(path.display().to_string());
        path.to_path_buf()
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Outcome {
        let path = self.output(name);
        let text = crate::json::to_string(value).map_err(anyhow::Error::from)?;
        std::fs::write(&path, text).map_err(|e| Failure::Io(anyhow::Error::from(e).context(format!("write {}", path.display()))))
    }

    fn write_flow(&mut self, flow: &MeasureFlow) -> Outcome {
        let p = self.output("flow.mkvg");
        formats::write_path(&p, |w| formats::write_flow(w, flow))?;
        formats::flow_csv(&self.output("flow.csv"), flow)?;
        Ok(())
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let start = Instant::now();
    let command = cli.command.name();
    let dir = cli.out.clone().unwrap_or_else(|| cli.data_dir.join(command));
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("mkv: cannot create output directory {}: {e}", dir.display());
        return 1;
    }
    // A diagnosis left by an earlier failed run in the same directory would be stale.
    let _ = std::fs::remove_file(dir.join(crate::manifest::DIAGNOSIS_FILE));
    let mut run = Run { dir, manifest: RunManifest::new(command) };
    run.manifest.config = json!({ "args": &cli });
    let result = configure_threads(cli.threads).and_then(|()| dispatch(&cli, &mut run));
    let code = match &result {
        Ok(()) => 0,
        Err(f) => f.exit_code(),
    };
    if let Err(f) = &result {
        let diag = f.diagnosis();
        eprintln!("mkv {command}: {}: {}", diag.category, diag.message);
        if let Err(e) = diag.write(&run.dir) {
            eprintln!("mkv: {e:#}");
        }
        run.manifest.outputs.push(crate::manifest::DIAGNOSIS_FILE.into());
        run.manifest.diagnosis = Some(diag);
        run.manifest.status = if code == 2 { RunStatus::UsageError } else { RunStatus::Failed };
    }
    run.manifest.wallclock_ms = start.elapsed().as_secs_f64() * 1e3;
    if let Err(e) = run.manifest.write(&run.dir) {
        eprintln!("mkv: {e:#}");
        return code.max(1);
    }
    code
}

fn configure_threads(threads: Option<usize>) -> Outcome {
    match threads {
        None => Ok(()),
        Some(0) => Err(Failure::Usage("--threads must be at least 1".into())),
        Some(n) => {
            // A second call in one process keeps the first pool; only tests do that.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli, run: &mut Run) -> Outcome {
    match &cli.command {
        Command::Kernel(a) => cmd_kernel(cli, a, run),
        Command::Fixpoint(a) => cmd_fixpoint(cli, a, run),
        Command::Particles(a) => cmd_particles(cli, a, run),
        Command::Nfpe(a) => cmd_nfpe(cli, a, run),
        Command::Norms(a) => cmd_norms(cli, a, run),
        Command::Verify(a) => cmd_verify(a, run),
        Command::Example3 => cmd_example3(cli, run),
        Command::Scenarios { action } => cmd_scenarios(action, run),
    }
}

/// Reads a scenario file; a missing file falls back to the library name (`constant.json` → `constant`).
pub fn load_spec(arg: &str) -> Result<ScenarioSpec, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{arg}: {e}")))?;
        return serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{arg}: {e}")));
    }
    let name = arg.strip_suffix(".json").unwrap_or(arg);
    let name = Path::new(name).file_name().and_then(|s| s.to_str()).unwrap_or(name);
    if LIBRARY.iter().any(|e| e.name == name) {
        Ok(ScenarioSpec::named(name))
    } else {
        Err(Failure::Usage(format!("'{arg}' is neither a scenario file nor a library scenario")))
    }
}

/// Loads, seeds and builds the scenario, recording it in the manifest.
fn scenario(cli: &Cli, arg: &ScenarioArg, run: &mut Run) -> Result<(ScenarioSpec, ScenarioConfig), Failure> {
    let mut spec = load_spec(&arg.scenario)?;
    if cli.seed.is_some() {
        spec.seed = cli.seed;
    }
    let canonical = serde_json::to_vec(&spec).map_err(anyhow::Error::from)?;
    run.manifest.scenario_hash = Some(sha256_hex(&canonical));
    run.manifest.config["scenario"] = serde_json::to_value(&spec).map_err(anyhow::Error::from)?;
    let sc = build(&spec)?;
    run.manifest.seed = Some(sc.seed);
    Ok((spec, sc))
}

fn frozen_field(sc: &ScenarioConfig) -> Result<CoefficientField, Failure> {
    Ok(freeze(sc.model.as_ref(), &seed_flow(sc)?, &sc.grid)?)
}

fn tol_or(cli: &Cli, default: f64) -> Result<f64, Failure> {
    match cli.tol {
        Some(t) if !(t > 0.0 && t.is_finite()) => Err(Failure::Usage(format!("--tol {t} must be positive"))),
        Some(t) => Ok(t),
        None => Ok(default),
    }
}

fn cmd_kernel(cli: &Cli, a: &KernelArgs, run: &mut Run) -> Outcome {
    let (_, sc) = scenario(cli, &a.scenario, run)?;
    let tol = tol_or(cli, MASS_TOL)?;
    let d = sc.grid.dim();
    let xs = if a.x.is_empty() { vec![0.0; d] } else { a.x.clone() };
    if xs.len() % d != 0 {
        return Err(Failure::Usage(format!("--x needs a multiple of {d} coordinates")));
    }
    let ts = if a.times.is_empty() { sc.times.clone() } else { a.times.clone() };
    if ts.is_empty() || ts[0] <= 0.0 || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Failure::Usage("--times must be positive and increasing".into()));
    }
    let field = frozen_field(&sc)?;
    let k = heat_kernel(&field, &sc.grid, 0.0, &ts, &xs, &sc.series)?;
    let path = match &a.kernel_out {
        Some(p) => run.external(p),
        None => run.output("kernel.mkvg"),
    };
    formats::write_path(&path, |w| formats::write_kernel(w, &k))?;
    formats::kernel_csv(&run.output("kernel.csv"), &k)?;
    let masses: Vec<Vec<f64>> = (0..ts.len()).map(|ti| (0..k.n_x()).map(|xi| k.mass(ti, xi)).collect()).collect();
    let worst = masses.iter().flatten().map(|m| (m - 1.0).abs()).fold(0.0, f64::max);
    let pass = worst <= tol;
    let report = json!({ "s": k.s, "t_nodes": k.t_nodes, "x_points": k.x_points, "masses": masses, "mass_tol": tol, "max_mass_defect": worst, "mass_check": pass, "series": k.report });
    run.write_json("kernel.json", &report)?;
    println!("kernel: {} times × {} start points on {:?} cells, max |mass − 1| = {worst:.3e}, written to {}", ts.len(), k.n_x(), sc.grid.cells, path.display());
    if !pass {
        return Err(Failure::Verification { message: format!("kernel mass defect {worst:.3e} exceeds {tol:.1e}"), details: report });
    }
    Ok(())
}

fn cmd_fixpoint(cli: &Cli, a: &ScenarioArg, run: &mut Run) -> Outcome {
    let (_, mut sc) = scenario(cli, a, run)?;
    sc.picard.tol_dphi = tol_or(cli, sc.picard.tol_dphi)?;
    let start = Instant::now();
    let (mu0, _) = psi(&sc, &seed_flow(&sc)?)?;
    let mut rows = Vec::new();
    let trace = picard_observe(&sc, mu0, &mut |k, r| {
        let ms = start.elapsed().as_secs_f64() * 1e3;
        eprintln!("iteration {k}: d_φ residual {r:.3e}");
        rows.push((k, r, ms));
    })?;
    run.write_flow(&trace.final_flow)?;
    formats::trace_csv(&run.output("trace.csv"), &rows)?;
    let warnings: Vec<&String> = trace.reports.iter().flat_map(|r| &r.warnings).collect();
    let report = json!({ "iterations": trace.residuals.len(), "residuals": trace.residuals, "converged": trace.converged, "tol_dphi": sc.picard.tol_dphi, "damping": sc.picard.damping, "warnings": warnings });
    run.write_json("fixpoint.json", &report)?;
    let last = trace.residuals.last().copied().unwrap_or(f64::NAN);
    println!("fixpoint: {} iterations, final residual {last:.3e}, converged {}", trace.residuals.len(), trace.converged);
    if !trace.converged {
        return Err(Failure::Verification { message: format!("Picard residual {last:.3e} above {:.1e} after {} iterations", sc.picard.tol_dphi, trace.residuals.len()), details: report });
    }
    Ok(())
}

fn cmd_particles(cli: &Cli, a: &ParticlesArgs, run: &mut Run) -> Outcome {
    let (_, sc) = scenario(cli, &a.scenario, run)?;
    let pc = ParticleConfig { n: a.n, dt: a.dt, seed: sc.seed, ..ParticleConfig::default() };
    let cloud = simulate(&sc, &pc)?;
    let smoothing = match a.smoothing {
        SmoothingArg::Histogram => Smoothing::Histogram,
        SmoothingArg::Kde => Smoothing::Kde { bandwidth: a.bandwidth.unwrap_or(2.0 * sc.grid.min_h()) },
    };
    formats::snapshots_csv(&run.output("snapshots.csv"), &cloud)?;
    let flow = empirical_to_measure(&cloud, &sc.grid, smoothing, sc.weight)?;
    run.write_flow(&flow)?;
    let moments: Vec<Value> = (0..cloud.times.len())
        .map(|k| {
            let (m, v): (Vec<f64>, Vec<f64>) = (0..cloud.dim).map(|ax| cloud.moments(k, ax)).unzip();
            json!({ "t": cloud.times[k], "mean": m, "variance": v })
        })
        .collect();
    run.write_json("particles.json", &json!({ "n": cloud.n, "dt": a.dt, "seed": sc.seed, "smoothing": smoothing, "moments": moments }))?;
    println!("particles: {} particles, {} snapshots", cloud.n, cloud.times.len());
    Ok(())
}

fn cmd_nfpe(cli: &Cli, a: &NfpeArgs, run: &mut Run) -> Outcome {
    let (_, sc) = scenario(cli, &a.scenario, run)?;
    if a.cells.is_some_and(|c| c < 4) {
        return Err(Failure::Usage("--cells must be at least 4".into()));
    }
    let sol = solve_nfpe(&sc, &FpeConfig { cells: a.cells, dt: a.dt, ..FpeConfig::default() })?;
    run.write_flow(&sol.flow)?;
    run.write_json("nfpe.json", &sol.report)?;
    println!("nfpe: {} steps, mass drift {:.2e}, max CFL {:.3}", sol.report.steps, sol.report.mass_drift, sol.report.max_cfl);
    Ok(())
}

fn cmd_norms(cli: &Cli, a: &NormsArgs, run: &mut Run) -> Outcome {
    let (_, sc) = scenario(cli, &a.scenario, run)?;
    let field = frozen_field(&sc)?;
    let d = sc.grid.dim();
    let p = a.p.unwrap_or(field.reg.p);
    let q = a.q.unwrap_or(field.reg.q);
    let b_abs = if sc.model.drift_free() {
        SpaceTimeField::zero(d)
    } else {
        let f = field.clone();
        SpaceTimeField::new(d, move |t, x| {
            let mut o = [0.0; 2];
            f.drift(t, x, &mut o[..d]);
            o[..d].iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .with_support(sc.grid.lo.clone(), sc.grid.hi.clone())
    };
    let opts = QuadratureOptions::default();
    let kato = kato_functional(&b_abs, a.beta, a.horizon, &opts)?;
    let lpq = lpq_norm(&b_abs, p, q, a.horizon, &opts)?;
    let index = d as f64 / p + 2.0 / q;
    let report = json!({ "beta": a.beta, "T": a.horizon, "kato": kato, "p": p, "q": q, "lpq": lpq, "index": index, "index_condition": index < 1.0 });
    run.write_json("norms.json", &report)?;
    println!("norms: K^{}(T = {}) = {:.6e}, ‖|b|‖ in L^{p}_{q} = {lpq:.6e}, d/p + 2/q = {index:.3}", a.beta, a.horizon, kato.value);
    Ok(())
}

fn cmd_verify(a: &VerifyArgs, run: &mut Run) -> Outcome {
    let report = suites::run(a.suite, &mut |c| println!("{} {}: {} [{:.0} ms]", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail, c.elapsed_ms));
    run.write_json("verify.json", &report)?;
    println!("verify {:?}: {} passed, {} failed", a.suite, report.passed, report.failed);
    if !report.all_pass() {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(Failure::Verification { message: format!("{} check(s) failed", failed.len()), details: json!({ "failed": failed }) });
    }
    Ok(())
}

fn cmd_example3(cli: &Cli, run: &mut Run) -> Outcome {
    let tol = tol_or(cli, 1e-3)?;
    let mut spec = ScenarioSpec::named("example3");
    spec.seed = cli.seed;
    run.manifest.scenario_hash = Some(sha256_hex(&serde_json::to_vec(&spec).map_err(anyhow::Error::from)?));
    let sc = build(&spec)?;
    run.manifest.seed = Some(sc.seed);
    let e = Example3::new();
    let flow = |scale: f64| -> Result<MeasureFlow, Failure> {
        let ms = sc.times.iter().map(|t| Measure::gaussian_on_grid(&sc.grid, &[0.0], scale * t)).collect();
        Ok(MeasureFlow::new(sc.times.clone(), ms, sc.weight, true)?)
    };
    let (w, w2) = (flow(1.0)?, flow(4.0)?);
    let r1 = dphi_metric(&psi(&sc, &w)?.0, &w)?;
    let r2 = dphi_metric(&psi(&sc, &w2)?.0, &w2)?;
    let gap = dphi_metric(&w, &w2)?;
    let pass = r1 <= tol && r2 <= tol && gap >= 0.1;
    println!("c1 = {:.6}", e.c1);
    println!("c2 = {:.6}", e.c2);
    println!("lambda1 = {:.6}", e.lambda1);
    println!("lambda2 = {:.6}", e.lambda2);
    println!("residual [W] = {r1:.3e}");
    println!("residual [2W] = {r2:.3e}");
    println!("d_phi([W], [2W]) = {gap:.6}");
    let report = json!({ "c1": e.c1, "c2": e.c2, "lambda1": e.lambda1, "lambda2": e.lambda2, "residual_w": r1, "residual_2w": r2, "dphi": gap, "tol": tol, "pass": pass });
    run.write_json("example3.json", &report)?;
    if !pass {
        return Err(Failure::Verification { message: "Example 3 fixed points not reproduced".into(), details: report });
    }
    Ok(())
}

fn cmd_scenarios(action: &ScenariosAction, run: &mut Run) -> Outcome {
    match action {
        ScenariosAction::List => {
            println!("{:<10} {:<4} {:<4} {:<4} {:<4} {:<4} description", "name", "A0", "A1", "A2", "A3", "A4");
            for e in LIBRARY {
                let a = e.assumptions;
                println!("{:<10} {:<4} {:<4} {:<4} {:<4} {:<4} {}", e.name, a[0], a[1], a[2], a[3], a[4], e.doc);
            }
            run.write_json("scenarios.json", &LIBRARY)
        }
        ScenariosAction::Show { name } => {
            let entry = LIBRARY.iter().find(|e| e.name == name).ok_or_else(|| Failure::Usage(format!("unknown scenario '{name}'")))?;
            let sc = build(&ScenarioSpec::named(name))?;
            let shown = json!({
                "entry": entry,
                "dim": sc.grid.dim(),
                "grid": sc.grid,
                "times": sc.times,
                "initial": sc.xi,
                "weight": sc.weight,
                "series": sc.series,
                "picard": sc.picard,
                "seed": sc.seed,
                "regularity": sc.model.regularity(),
            });
            println!("{}", crate::json::to_string(&shown).map_err(anyhow::Error::from)?);
            run.write_json("scenario.json", &shown)
        }
    }
}
