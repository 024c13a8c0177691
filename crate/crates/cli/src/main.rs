mod config;

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use solenoid_core::multiplicity::{detail_multiplicity, induced_multiplicity, MultFn};
use solenoid_core::pathspace::{consistency_residual, filter_weight, sample_words, PathMeasure, PointFn};
use solenoid_core::solenoid::{lift_to_martingale, omega_compat_residual, radon_nikodym_residual, OmegaFamily};
use solenoid_core::transfer::{
    prf_residual, solve_perron_op, strong_invariance_residual, strongly_invariant_measure, MeasureVector, StepFunction,
    TransferOp, Weight, DEFAULT_TOL,
};
use solenoid_core::wavelet::{cascade_product, scaling_residual, Filter, FreqGrid};
use solenoid_core::{Error as CoreError, System};

use config::{Loaded, Ref, WeightMode};

const THREADS_ENV: &str = "SOLENOID_KIT_THREADS";
const CHECK_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "solenoid-kit", version, about = "Transfer operator and solenoid experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (overrides the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance (overrides the config's `tol`).
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Leading eigendata of a transfer operator.
    Perron(Common),
    /// Residuals of the invariant suite for a filter pair.
    Check(Common),
    /// Cascade product for the scaling function on a frequency grid.
    Cascade(Common),
    /// Sample words from a path-space measure.
    Pathsim(Common),
    /// Induced and detail multiplicities.
    Multiplicity(Common),
    /// Level norms of a lifted martingale.
    Solenoid(Common),
}

/// A failed numerical check or non-convergence (exit code 2).
#[derive(Debug)]
struct MathFailure(String);

impl fmt::Display for MathFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for MathFailure {}

fn is_numerical(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::NoConvergence { .. }
            | CoreError::ZeroWeight
            | CoreError::NotHarmonic(_)
            | CoreError::DominationFailure(_)
            | CoreError::ZeroMass
            | CoreError::DeadEnd(_)
            | CoreError::NegativeDetail(_)
            | CoreError::QuadratureUnderresolved(_)
            | CoreError::NotPsd { .. }
            | CoreError::NotCoarsenable { .. }
    )
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<MathFailure>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return if is_numerical(e) { 2 } else { 1 };
        }
    }
    1
}

struct Ctx {
    loaded: Loaded,
    out: PathBuf,
    seed: u64,
    tol: Option<f64>,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self> {
        let loaded = Loaded::read(&common.config)?;
        let out = common
            .out
            .clone()
            .or_else(|| loaded.config.output.as_ref().map(|o| loaded.base.join(o)))
            .unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let seed = common.seed.unwrap_or(loaded.config.seed);
        let tol = common.tol.or(loaded.config.tol);
        Ok(Self { loaded, out, seed, tol })
    }

    fn system(&self) -> Result<System> {
        let spec = self.loaded.require(&Some(self.loaded.config.system.clone()), "system")?;
        Ok(System::new(spec)?)
    }

    fn step(
        &self,
        sys: &System,
        r: &Option<Ref<solenoid_core::transfer::StepFunctionJson>>,
        what: &str,
    ) -> Result<Option<StepFunction>> {
        self.loaded
            .resolve(r, what)?
            .map(|j| StepFunction::from_json(sys, &j).with_context(|| format!("invalid `{what}`")))
            .transpose()
    }

    fn filter(&self) -> Result<Option<Filter>> {
        self.loaded
            .resolve(&self.loaded.config.filter, "filter")?
            .map(|j| Filter::from_json(&j).context("invalid `filter`"))
            .transpose()
    }

    fn m0(&self, sys: &System) -> Result<StepFunction> {
        if let Some(m0) = self.step(sys, &self.loaded.config.m0, "m0")? {
            return Ok(m0);
        }
        let filter = self.filter()?.context("config needs `filter` or `m0`")?;
        let level = match &filter {
            Filter::Step { m0, .. } => self.loaded.config.filter_level.max(m0.resolution()),
            Filter::Coeffs(_) => self.loaded.config.filter_level,
        };
        filter.to_step(sys, level).context("filter does not fit the system")
    }

    fn family(&self, sys: &System) -> Result<OmegaFamily> {
        let m0 = self.m0(sys)?;
        let h = match self.step(sys, &self.loaded.config.h, "h")? {
            Some(h) => h,
            None => StepFunction::ones(sys, 1)?,
        };
        let mu = match self.loaded.resolve(&self.loaded.config.mu, "mu")? {
            Some(j) => MeasureVector::from_json(sys, &j).context("invalid `mu`")?,
            None => strongly_invariant_measure(sys, self.loaded.config.resolution)?,
        };
        Ok(OmegaFamily::new(m0, h, mu)?)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.out.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn csv_writer(&self, name: &str) -> Result<csv::Writer<fs::File>> {
        let path = self.out.join(name);
        csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))
    }
}

fn cmd_perron(ctx: &Ctx) -> Result<()> {
    let sys = ctx.system()?;
    let cfg = &ctx.loaded.config;
    let (op, res) = if let Some(w) = ctx.step(&sys, &cfg.weight, "weight")? {
        let res = w.resolution();
        (TransferOp::Weighted(Weight::new(w).context("invalid `weight`")?), res)
    } else if cfg.filter.is_some() || cfg.m0.is_some() {
        let m0 = ctx.m0(&sys)?;
        let res = cfg.resolution.max(m0.resolution());
        (TransferOp::Filter(m0), res)
    } else {
        (TransferOp::Normalized, cfg.resolution)
    };
    let data = solve_perron_op(&op, &sys, res, ctx.tol.unwrap_or(DEFAULT_TOL), cfg.maxit)?;
    let report = data.report();
    ctx.write_json("perron.json", &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

#[derive(Serialize)]
struct CheckLine {
    name: &'static str,
    value: f64,
    tol: f64,
    pass: bool,
}

#[derive(Serialize)]
struct CheckReport {
    tol: f64,
    pass: bool,
    checks: Vec<CheckLine>,
}

fn test_functions(sys: &System, resolution: u32) -> Result<Vec<StepFunction>> {
    let mut fs = vec![StepFunction::ones(sys, 1)?];
    for c in 0..sys.cells(resolution)?.len() {
        fs.push(StepFunction::indicator(sys, resolution, c)?);
    }
    Ok(fs)
}

fn cmd_check(ctx: &Ctx) -> Result<()> {
    let sys = ctx.system()?;
    let cfg = &ctx.loaded.config;
    let tol = ctx.tol.unwrap_or(CHECK_TOL);
    let fam = ctx.family(&sys)?;
    let fs = test_functions(&sys, cfg.resolution)?;

    let mut compat = 0.0f64;
    let mut rn = 0.0f64;
    for f in &fs {
        for n in 0..=cfg.depth {
            compat = compat.max(omega_compat_residual(&fam, f, n)?);
            rn = rn.max(radon_nikodym_residual(&fam, f, n)?);
        }
    }
    let base = PathMeasure::from_family(&fam, &sys.point_from_letters(&[]))?;
    let mut path = 0.0f64;
    for c in 0..sys.cells(cfg.resolution)?.len() {
        let p = base.with_start(sys.representative_letters(cfg.resolution, c)?)?;
        for len in 0..cfg.path_depth {
            for w in p.words(len) {
                path = path.max(consistency_residual(&p, &w)?);
            }
        }
    }
    let values = [
        ("strong_invariance", strong_invariance_residual(fam.mu())?),
        ("prf", prf_residual(fam.m0(), fam.h())?),
        ("omega_compat", compat),
        ("radon_nikodym", rn),
        ("path_consistency", path),
    ];
    let checks: Vec<CheckLine> =
        values.into_iter().map(|(name, value)| CheckLine { name, value, tol, pass: value <= tol }).collect();
    let pass = checks.iter().all(|c| c.pass);
    for c in &checks {
        println!("{:<18} {:>12.3e}  tol {:.0e}  {}", c.name, c.value, c.tol, if c.pass { "ok" } else { "FAILED" });
    }
    ctx.write_json("check.json", &CheckReport { tol, pass, checks })?;
    if !pass {
        return Err(MathFailure("one or more checks exceeded tolerance".into()).into());
    }
    Ok(())
}

#[derive(Serialize)]
struct CascadeReport {
    #[serde(rename = "N")]
    n: u32,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "T")]
    half_range: f64,
    #[serde(rename = "M")]
    samples: usize,
    scaling_residual: f64,
}

fn cmd_cascade(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.loaded.config;
    let filter = ctx.filter()?.context("config is missing `filter`")?;
    let grid = cfg.grid.map_or((8.0, 2048), |g| (g.half_range, g.samples));
    let grid = FreqGrid::new(grid.0, grid.1)?;
    let approx = cascade_product(&filter, cfg.depth, grid)?;
    let mut w = ctx.csv_writer("cascade.csv")?;
    w.write_record(["x", "re", "im"])?;
    for row in approx.csv_rows() {
        w.serialize(row)?;
    }
    w.flush()?;
    let report = CascadeReport {
        n: filter.scale(),
        k: cfg.depth,
        half_range: grid.half_range,
        samples: grid.samples,
        scaling_residual: scaling_residual(&approx, &filter),
    };
    ctx.write_json("cascade.json", &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

#[derive(Serialize)]
struct PathSummary {
    n: usize,
    samples: usize,
    seed: u64,
    mean: f64,
    stderr: f64,
    first_step_frequencies: Vec<f64>,
}

fn cmd_pathsim(ctx: &Ctx) -> Result<()> {
    let sys = ctx.system()?;
    let cfg = &ctx.loaded.config;
    let filter = ctx.filter()?;
    let pointwise = match cfg.weight_mode {
        WeightMode::Pointwise => true,
        WeightMode::Step => false,
        WeightMode::Auto => matches!(filter, Some(Filter::Coeffs(_))) && sys.is_circle() && cfg.m0.is_none(),
    };
    let w = if let Some(w) = ctx.step(&sys, &cfg.weight, "weight")? {
        PointFn::Step(w)
    } else if pointwise {
        PointFn::FilterWeight(filter.context("pointwise weights need a `filter`")?)
    } else {
        PointFn::Step(filter_weight(&ctx.m0(&sys)?)?)
    };
    let h = ctx.step(&sys, &cfg.h, "h")?.map_or(PointFn::Const(1.0), PointFn::Step);
    let f = ctx.step(&sys, &cfg.observable, "observable")?.map_or_else(|| h.clone(), PointFn::Step);
    let start = cfg.start.clone().unwrap_or_else(|| sys.point_from_letters(&[]));
    let p = PathMeasure::new(&sys, w, h, &start)?;

    let words = sample_words(&p, cfg.steps, cfg.samples, ctx.seed)?;
    let mut values = Vec::with_capacity(words.len());
    let mut csv = ctx.csv_writer("pathsim.csv")?;
    csv.write_record(["path", "word", "endpoint_value"])?;
    for (i, word) in words.iter().enumerate() {
        let v = p.endpoint_value(word, &f)?;
        let text = word.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ");
        csv.serialize((i, text, v))?;
        values.push(v);
    }
    csv.flush()?;

    let count = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / count;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0).max(1.0);
    let branches = p.kernel()?.probs.len();
    let mut hits = vec![0usize; branches];
    for w in words.iter().filter(|w| !w.is_empty()) {
        hits[w[0]] += 1;
    }
    let first = hits.iter().map(|&c| c as f64 / count).collect();
    let summary = PathSummary {
        n: cfg.steps,
        samples: cfg.samples,
        seed: ctx.seed,
        mean,
        stderr: (var / count).sqrt(),
        first_step_frequencies: first,
    };
    ctx.write_json("pathsim.json", &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

#[derive(Serialize)]
struct MultReport {
    input: solenoid_core::multiplicity::MultFnJson,
    induced: solenoid_core::multiplicity::MultFnJson,
    detail: solenoid_core::multiplicity::MultFnJson,
}

fn cmd_multiplicity(ctx: &Ctx) -> Result<()> {
    let sys = ctx.system()?;
    let json = ctx.loaded.require(&ctx.loaded.config.multiplicity, "multiplicity")?;
    let m = MultFn::from_json(&sys, &json)?;
    let induced = induced_multiplicity(&m)?;
    let detail = detail_multiplicity(&m)?;
    let mut csv = ctx.csv_writer("multiplicity.csv")?;
    csv.write_record(["cell", "m", "induced", "detail"])?;
    for (i, ((a, b), c)) in m.values().iter().zip(induced.values()).zip(detail.values()).enumerate() {
        csv.write_record([i.to_string(), a.to_string(), b.to_string(), c.to_string()])?;
    }
    csv.flush()?;
    let report = MultReport { input: m.to_json(), induced: induced.to_json(), detail: detail.to_json() };
    ctx.write_json("multiplicity.json", &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn ref_name<T>(r: &Option<Ref<T>>) -> String {
    match r {
        Some(Ref::Path(p)) => p.clone(),
        Some(Ref::Inline(_)) => "inline".into(),
        None => "default".into(),
    }
}

fn cmd_solenoid(ctx: &Ctx) -> Result<()> {
    let sys = ctx.system()?;
    let cfg = &ctx.loaded.config;
    let fam = ctx.family(&sys)?;
    let xi = match ctx.step(&sys, &cfg.xi, "xi")? {
        Some(xi) => xi,
        None => StepFunction::constant(&sys, 1, Complex64::new(1.0, 0.0))?,
    };
    let m = lift_to_martingale(&fam, &xi, cfg.lift_level, cfg.depth.max(cfg.lift_level))?;
    let norms = m.level_norms()?;
    let mut csv = ctx.csv_writer("solenoid.csv")?;
    csv.write_record(["level", "resolution", "norm_sq"])?;
    for (n, (level, norm)) in m.levels().iter().zip(&norms).enumerate() {
        csv.serialize((n, level.resolution(), norm))?;
    }
    csv.flush()?;
    let m0_ref = if cfg.m0.is_some() { ref_name(&cfg.m0) } else { ref_name(&cfg.filter) };
    ctx.write_json("martingale.json", &m.to_json(&m0_ref, &ref_name(&cfg.h)))?;
    let residual = m.compatibility_residual()?;
    println!("{}", serde_json::json!({ "K": m.depth(), "norms": norms, "compatibility_residual": residual }));
    let tol = ctx.tol.unwrap_or(CHECK_TOL);
    if residual > tol {
        return Err(MathFailure(format!("compatibility residual {residual:e} exceeds {tol:e}")).into());
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let (common, f): (&Common, fn(&Ctx) -> Result<()>) = match &cli.command {
        Command::Perron(c) => (c, cmd_perron),
        Command::Check(c) => (c, cmd_check),
        Command::Cascade(c) => (c, cmd_cascade),
        Command::Pathsim(c) => (c, cmd_pathsim),
        Command::Multiplicity(c) => (c, cmd_multiplicity),
        Command::Solenoid(c) => (c, cmd_solenoid),
    };
    let ctx = Ctx::new(common)?;
    f(&ctx)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    #[test]
    fn exit_codes_follow_error_kind() {
        let e: anyhow::Error = CoreError::NoConvergence { maxit: 1, residual: 1.0 }.into();
        assert_eq!(exit_code(&e), 2);
        let e: anyhow::Error = CoreError::InvalidSystem("x".into()).into();
        assert_eq!(exit_code(&e), 1);
        let e = anyhow::Error::from(MathFailure("bad".into())).context("while checking");
        assert_eq!(exit_code(&e), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), 1);
    }

    #[test]
    fn config_paths_resolve_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("sys.json"), r#"{"type":"circle","N":3}"#).unwrap();
        fs::write(dir.path().join("cfg.json"), r#"{"system":"sys.json"}"#).unwrap();
        let loaded = Loaded::read(&dir.path().join("cfg.json")).unwrap();
        let spec = loaded.require(&Some(loaded.config.system.clone()), "system").unwrap();
        assert_eq!(spec, solenoid_core::SystemSpec::CircleMapN { n: 3 });
        assert!(Path::new(&loaded.base).ends_with(dir.path().file_name().unwrap()));
    }
}
