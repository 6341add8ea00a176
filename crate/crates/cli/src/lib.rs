//! Command-line front end. [`run`] takes the argument list and returns the exit
//! code with the bytes destined for stdout, so tests can drive it in-process.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use backbif::bifcoeffs::{classify, coefficients, CoeffOptions};
use backbif::continuation::{fold_points, trace, TraceOptions};
use backbif::models::{check_params, UserModel};
use backbif::recipes::{self, RecipeReport};
use backbif::steadystate::{self, Stability};
use backbif::{builtin, ngm, verify, Error, ModelSystem, ParamMap};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "backbif", version, about = "Bifurcation analysis of epidemic models at R0 = 1")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// R0, the F and V matrices and DFE stability.
    R0(Common),
    /// Centre-manifold coefficients a, b, c, d, e and the classification.
    Coeffs {
        #[command(flatten)]
        common: Common,
        /// First solve R0 = 1 in alpha1.
        #[arg(long)]
        locate: bool,
    },
    /// Steady states with stability.
    Steady(Common),
    /// Continuation branch in alpha1 from a positive steady state.
    Branch {
        #[command(flatten)]
        common: Common,
        /// Index into the positive steady states (ordered as `steady` prints them).
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Initial direction of alpha1 along the branch.
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        direction: f64,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
    },
    /// Built-in parameter constructions: theorem2, theorem4, continuum.
    Recipe {
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Random search for hepc3d points with R0 = 1, a = 0 and c > 0.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
    },
    /// Acceptance suites by name, or `all`.
    Verify {
        suite: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args, Default)]
struct Common {
    /// Built-in model id or path to a JSON model description.
    #[arg(long)]
    model: Option<String>,
    /// Parameter assignment `name=value` (repeatable).
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Flat `key=value` file with parameters and any of the options below.
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    alpha1: Option<String>,
    #[arg(long)]
    alpha2: Option<String>,
    /// Parameter range `lo:hi` for alpha1.
    #[arg(long, allow_hyphen_values = true)]
    range: Option<String>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<String>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads for sweeps and steady-state searches.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    tol_a: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Process result: exit code, stdout bytes and a message for stderr.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

impl Outcome {
    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            stdout: Vec::new(),
            stderr: msg.into(),
        }
    }
    fn failure(msg: impl Into<String>) -> Self {
        Self {
            code: 1,
            stdout: Vec::new(),
            stderr: msg.into(),
        }
    }
}

/// Failure class of a command: bad input (exit 2) or a failed computation or check (exit 1).
enum Fail {
    Usage(String),
    Check(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownParam(_)
            | Error::MissingParam(_)
            | Error::Inadmissible(_)
            | Error::UnknownModel(_)
            | Error::Parse(_)
            | Error::Io(_)
            | Error::Dimension { .. }
            | Error::InvalidBifurcationParam(_) => Fail::Usage(e.to_string()),
            _ => Fail::Check(e.to_string()),
        }
    }
}

type CmdResult = Result<(i32, Vec<u8>, String), Fail>;

/// Resolved run configuration: flags override the config file.
struct RunConfig {
    model: Arc<dyn ModelSystem>,
    params: ParamMap,
    alpha1: Option<String>,
    alpha2: Option<String>,
    range: Option<(f64, f64)>,
    out: Option<String>,
    format: Option<Format>,
    jobs: Option<usize>,
    tol_a: Option<f64>,
}

const CONFIG_KEYS: [&str; 8] = ["model", "alpha1", "alpha2", "range", "format", "jobs", "tol_a", "seed"];

fn parse_kv(s: &str) -> Result<(String, String), Fail> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Fail::Usage(format!("expected key=value, got `{s}`")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse_f64(key: &str, v: &str) -> Result<f64, Fail> {
    v.parse()
        .map_err(|_| Fail::Usage(format!("`{key}`: `{v}` is not a number")))
}

fn parse_range(s: &str) -> Result<(f64, f64), Fail> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| Fail::Usage(format!("range must be lo:hi, got `{s}`")))?;
    let (lo, hi) = (parse_f64("range", lo)?, parse_f64("range", hi)?);
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Fail::Usage(format!("range {lo}:{hi} is empty")));
    }
    Ok((lo, hi))
}

fn load_model(id: &str) -> Result<Arc<dyn ModelSystem>, Fail> {
    if id.ends_with(".json") || Path::new(id).is_file() {
        return Ok(Arc::new(UserModel::load(Path::new(id))?));
    }
    Ok(builtin(id)?)
}

fn resolve(c: &Common, need_model: bool) -> Result<Option<RunConfig>, Fail> {
    let mut file: BTreeMap<String, String> = BTreeMap::new();
    let mut file_params: Vec<(String, String)> = Vec::new();
    if let Some(path) = &c.config {
        let text = fs::read_to_string(path).map_err(|e| Fail::Usage(format!("{path}: {e}")))?;
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = parse_kv(line)?;
            if CONFIG_KEYS.contains(&k.as_str()) {
                file.insert(k, v);
            } else {
                file_params.push((k, v));
            }
        }
    }
    let pick = |flag: &Option<String>, key: &str| flag.clone().or_else(|| file.get(key).cloned());
    let Some(model_id) = pick(&c.model, "model") else {
        return if need_model {
            Err(Fail::Usage("--model is required".into()))
        } else {
            Ok(None)
        };
    };
    let model = load_model(&model_id)?;
    let names = model.param_names().clone();
    let mut values: Vec<Option<f64>> = match model.default_params() {
        Some(d) => d.into_iter().map(Some).collect(),
        None => vec![None; names.len()],
    };
    let flag_params = c.params.iter().map(|s| parse_kv(s)).collect::<Result<Vec<_>, _>>()?;
    for (k, v) in file_params.iter().chain(&flag_params) {
        let i = names
            .iter()
            .position(|n| n == k)
            .ok_or_else(|| Fail::Usage(Error::UnknownParam(k.clone()).to_string()))?;
        values[i] = Some(parse_f64(k, v)?);
    }
    let values = names
        .iter()
        .zip(values)
        .map(|(n, v)| v.ok_or_else(|| Fail::Usage(Error::MissingParam(n.clone()).to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let params = ParamMap::new(names, values)?;
    let num = |flag: Option<f64>, key: &str| -> Result<Option<f64>, Fail> {
        match (flag, file.get(key)) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(s)) => parse_f64(key, s).map(Some),
            _ => Ok(None),
        }
    };
    let format = match (c.format, file.get("format").map(String::as_str)) {
        (Some(f), _) => Some(f),
        (None, Some("json")) => Some(Format::Json),
        (None, Some("csv")) => Some(Format::Csv),
        (None, Some(other)) => return Err(Fail::Usage(format!("unknown format `{other}`"))),
        _ => None,
    };
    Ok(Some(RunConfig {
        model,
        params,
        alpha1: pick(&c.alpha1, "alpha1"),
        alpha2: pick(&c.alpha2, "alpha2"),
        range: pick(&c.range, "range").map(|r| parse_range(&r)).transpose()?,
        out: c.out.clone(),
        format,
        jobs: num(c.jobs.map(|j| j as f64), "jobs")?.map(|j| j as usize),
        tol_a: num(c.tol_a, "tol_a")?,
    }))
}

/// Options for commands with fixed models (recipe, sweep, verify); model and
/// parameter settings are rejected rather than ignored.
struct Loose {
    out: Option<String>,
    format: Option<Format>,
    jobs: Option<usize>,
    seed: u64,
}

fn loose(c: &Common) -> Result<Loose, Fail> {
    if c.model.is_some() || !c.params.is_empty() {
        return Err(Fail::Usage("this command takes no --model or --param".into()));
    }
    let (mut format, mut jobs, mut seed) = (c.format, c.jobs, c.seed);
    if let Some(path) = &c.config {
        let text = fs::read_to_string(path).map_err(|e| Fail::Usage(format!("{path}: {e}")))?;
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = parse_kv(line)?;
            match k.as_str() {
                "seed" => seed = seed.or(Some(parse_f64(&k, &v)? as u64)),
                "jobs" => jobs = jobs.or(Some(parse_f64(&k, &v)? as usize)),
                "format" => {
                    let f = match v.as_str() {
                        "json" => Format::Json,
                        "csv" => Format::Csv,
                        _ => return Err(Fail::Usage(format!("unknown format `{v}`"))),
                    };
                    format = format.or(Some(f));
                }
                _ => return Err(Fail::Usage(format!("`{k}` is not accepted by this command"))),
            }
        }
    }
    Ok(Loose {
        out: c.out.clone(),
        format,
        jobs,
        seed: seed.unwrap_or(0),
    })
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn require<'a>(v: &'a Option<String>, flag: &str) -> Result<&'a str, Fail> {
    v.as_deref()
        .ok_or_else(|| Fail::Usage(format!("--{flag} is required")))
}

fn cmd_r0(cfg: &RunConfig) -> CmdResult {
    let m = cfg.model.as_ref();
    check_params(m, &cfg.params)?;
    let rep = ngm::r0(m, &cfg.params)?;
    let stability = ngm::dfe_stability(m, &cfg.params)?;
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "model": m.id(),
        "params": to_value(&cfg.params),
        "r0": rep.r0,
        "F": to_value(&rep).get("F").cloned(),
        "V": to_value(&rep).get("V").cloned(),
        "dfe": rep.dfe,
        "spectrum": to_value(&rep).get("dfe_eigenvalues").cloned(),
        "stability": to_value(&stability),
    });
    Ok((0, pretty(&v), String::new()))
}

fn cmd_coeffs(cfg: &RunConfig, locate: bool) -> CmdResult {
    let m = cfg.model.as_ref();
    let a1 = require(&cfg.alpha1, "alpha1")?;
    let a2 = require(&cfg.alpha2, "alpha2")?;
    check_params(m, &cfg.params)?;
    let params = if locate {
        recipes::solve_threshold(m, &cfg.params, a1)?
    } else {
        cfg.params.clone()
    };
    let mut opts = CoeffOptions::default();
    if let Some(t) = cfg.tol_a {
        opts.tol_a = t;
    }
    let co = coefficients(m, &params, a1, a2, opts)?;
    let (class, code, msg) = match classify(&co) {
        Ok(c) => (to_value(&c), 0, String::new()),
        Err(e) => (Value::Null, 1, e.to_string()),
    };
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "model": m.id(),
        "params": to_value(&params),
        "coefficients": to_value(&co),
        "classification": class,
    });
    Ok((code, pretty(&v), msg))
}

fn stability_name(s: Stability) -> String {
    to_value(&s).as_str().map(String::from).unwrap_or_default()
}

fn cmd_steady(cfg: &RunConfig) -> CmdResult {
    let m = cfg.model.as_ref();
    check_params(m, &cfg.params)?;
    let states = steadystate::enumerate(m, &cfg.params)?;
    if cfg.format == Some(Format::Csv) {
        let mut out = format!("# backbif steady v{SCHEMA_VERSION} model={}\n", m.id()).into_bytes();
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header: Vec<String> = m.state_names().to_vec();
        header.extend(["positive", "stability", "max_re"].map(String::from));
        w.write_record(&header).map_err(|e| Fail::Check(e.to_string()))?;
        for s in &states {
            let mut rec: Vec<String> = s.x.iter().map(|v| format!("{v:.12e}")).collect();
            rec.push(s.is_positive().to_string());
            rec.push(stability_name(s.stability));
            rec.push(format!("{:.12e}", s.max_real_eigenvalue()));
            w.write_record(&rec).map_err(|e| Fail::Check(e.to_string()))?;
        }
        w.flush().map_err(|e| Fail::Check(e.to_string()))?;
        drop(w);
        return Ok((0, out, String::new()));
    }
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "model": m.id(),
        "params": to_value(&cfg.params),
        "states": to_value(&states),
    });
    Ok((0, pretty(&v), String::new()))
}

fn cmd_branch(cfg: &RunConfig, start: usize, direction: f64, max_steps: usize) -> CmdResult {
    let m = cfg.model.as_ref();
    let a1 = require(&cfg.alpha1, "alpha1")?;
    check_params(m, &cfg.params)?;
    cfg.params.index_of(a1)?;
    let positive: Vec<_> = steadystate::enumerate(m, &cfg.params)?
        .into_iter()
        .filter(|s| s.is_positive())
        .collect();
    let first = positive.get(start).ok_or_else(|| {
        Fail::Check(format!(
            "no positive steady state #{start} ({} found)",
            positive.len()
        ))
    })?;
    let opts = TraceOptions {
        direction: direction.signum(),
        range: cfg.range,
        max_steps,
        ..TraceOptions::default()
    };
    let branch = trace(m, &cfg.params, a1, first, opts)?;
    if cfg.format == Some(Format::Json) {
        let folds = fold_points(m, &branch)?;
        let v = json!({"branch": to_value(&branch), "folds": to_value(&folds)});
        return Ok((0, pretty(&v), String::new()));
    }
    let mut out = Vec::new();
    branch.write_csv(&mut out)?;
    Ok((0, out, String::new()))
}

fn continuum_report() -> Result<RecipeReport, Fail> {
    let m = builtin("hepc3d-truncated")?;
    let base = m.defaults().ok_or_else(|| Fail::Check("no defaults".into()))?;
    let g = |n: &str| base.get(n);
    let (b, c) = (g("b")?, g("c")?);
    let p = base
        .with("r_I", c * g("r_T")? / (b + c))?
        .with("delta", b * g("rho")? * g("R_star")? / (b + c))?;
    let grid = recipes::continuum_grid(&p, 50)?;
    Ok(recipes::truncated_continuum_verify(&p, &grid))
}

fn cmd_recipe(name: &str, c: &Common) -> CmdResult {
    let Loose { out, format, .. } = loose(c)?;
    let rep = match name {
        "theorem2" => recipes::theorem2_construct(),
        "theorem4" => recipes::theorem4_construct(),
        "continuum" => continuum_report()?,
        other => {
            return Err(Fail::Usage(format!(
                "unknown recipe `{other}` (theorem2, theorem4, continuum)"
            )))
        }
    };
    let code = if rep.passed { 0 } else { 1 };
    let json = pretty(&to_value(&rep));
    match (out, format) {
        // report to the file, summary table to stdout
        (Some(path), _) => {
            fs::write(&path, json).map_err(|e| Fail::Usage(format!("{path}: {e}")))?;
            Ok((code, rep.summary_table().into_bytes(), String::new()))
        }
        (None, Some(Format::Json)) => Ok((code, json, String::new())),
        (None, _) => Ok((code, rep.summary_table().into_bytes(), String::new())),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

fn cmd_sweep(c: &Common, draws: usize) -> CmdResult {
    let Loose { format, seed, .. } = loose(c)?;
    let rows = recipes::hepc_c_sweep(draws, seed);
    let found = rows.iter().filter(|r| r.is_candidate()).count();
    let reached = rows.iter().filter(|r| r.status == "ok").count();
    let note = format!("{reached} of {draws} draws reached a = 0; {found} with c > 0");
    if format == Some(Format::Json) {
        let v = json!({
            "schema_version": SCHEMA_VERSION,
            "seed": seed,
            "draws": draws,
            "reached": reached,
            "candidates": found,
            "rows": to_value(&rows),
        });
        return Ok((0, pretty(&v), note));
    }
    let mut out = format!("# backbif sweep v{SCHEMA_VERSION} model=hepc3d seed={seed}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let names = builtin("hepc3d")?.param_names().clone();
        let mut header = vec!["draw".to_string(), "status".into(), "F".into()];
        header.extend(names.iter().cloned());
        header.extend(["coef_c", "coef_c3", "coef_c2", "coef_e"].map(String::from));
        w.write_record(&header).map_err(|e| Fail::Check(e.to_string()))?;
        for r in &rows {
            let mut rec = vec![r.draw.to_string(), r.status.clone(), format!("{:.12e}", r.f)];
            match &r.params {
                Some(p) => rec.extend(p.values().iter().map(|v| format!("{v:.12e}"))),
                None => rec.extend(names.iter().map(|_| String::new())),
            }
            rec.extend([opt(r.c), opt(r.c3), opt(r.c2), opt(r.e)]);
            w.write_record(&rec).map_err(|e| Fail::Check(e.to_string()))?;
        }
        w.flush().map_err(|e| Fail::Check(e.to_string()))?;
    }
    Ok((0, out, note))
}

fn cmd_verify(suite: &str, c: &Common) -> CmdResult {
    let Loose { format, seed, .. } = loose(c)?;
    let ids: Vec<u8> = if suite == "all" {
        verify::SUITES.iter().map(|(i, _)| *i).collect()
    } else {
        vec![verify::suite_id(suite).ok_or_else(|| {
            let names: Vec<&str> = verify::SUITES.iter().map(|(_, n)| *n).collect();
            Fail::Usage(format!("unknown suite `{suite}` ({}, all)", names.join(", ")))
        })?]
    };
    let outcomes = ids
        .iter()
        .map(|&i| verify::run(i, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let code = if outcomes.iter().all(|o| o.pass) { 0 } else { 1 };
    if format == Some(Format::Json) {
        return Ok((code, pretty(&to_value(&outcomes)), String::new()));
    }
    let mut text = String::new();
    for o in &outcomes {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        text.push_str(&format!("[{tag}] {:>2} {}: {}\n", o.id, o.name, o.summary));
        for d in &o.details {
            text.push_str(&format!("       {d}\n"));
        }
    }
    Ok((code, text.into_bytes(), String::new()))
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Fail> {
    match jobs {
        Some(0) => Err(Fail::Usage("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Fail::Check(e.to_string())),
        None => Ok(f()),
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    let need = |c: &Common| resolve(c, true).map(|r| r.expect("model required"));
    match cmd {
        Command::R0(c) => {
            let cfg = need(&c)?;
            finish(&cfg.out, with_jobs(cfg.jobs, || cmd_r0(&cfg))?)
        }
        Command::Coeffs { common, locate } => {
            let cfg = need(&common)?;
            finish(&cfg.out, with_jobs(cfg.jobs, || cmd_coeffs(&cfg, locate))?)
        }
        Command::Steady(c) => {
            let cfg = need(&c)?;
            finish(&cfg.out, with_jobs(cfg.jobs, || cmd_steady(&cfg))?)
        }
        Command::Branch {
            common,
            start,
            direction,
            max_steps,
        } => {
            let cfg = need(&common)?;
            finish(
                &cfg.out,
                with_jobs(cfg.jobs, || cmd_branch(&cfg, start, direction, max_steps))?,
            )
        }
        Command::Recipe { name, common } => {
            let jobs = loose(&common)?.jobs;
            with_jobs(jobs, || cmd_recipe(&name, &common))?
        }
        Command::Sweep { common, draws } => {
            let Loose { out, jobs, .. } = loose(&common)?;
            finish(&out, with_jobs(jobs, || cmd_sweep(&common, draws))?)
        }
        Command::Verify { suite, common } => {
            let Loose { out, jobs, .. } = loose(&common)?;
            finish(&out, with_jobs(jobs, || cmd_verify(&suite, &common))?)
        }
    }
}

/// Writes the payload to `out` when given; stdout then stays empty.
fn finish(out: &Option<String>, res: Result<(i32, Vec<u8>, String), Fail>) -> CmdResult {
    let (code, bytes, msg) = res?;
    match out {
        Some(path) => {
            fs::write(path, &bytes).map_err(|e| Fail::Usage(format!("{path}: {e}")))?;
            Ok((code, Vec::new(), msg))
        }
        None => Ok((code, bytes, msg)),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                Outcome {
                    code,
                    stdout: text.into_bytes(),
                    stderr: String::new(),
                }
            } else {
                Outcome::usage(text)
            };
        }
    };
    match dispatch(cli.command) {
        Ok((code, stdout, stderr)) => Outcome {
            code,
            stdout,
            stderr,
        },
        Err(Fail::Usage(m)) => Outcome::usage(m),
        Err(Fail::Check(m)) => Outcome::failure(m),
    }
}
