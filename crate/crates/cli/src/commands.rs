use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use youngreg::averaging::{argmax_cell, estimate_averaging_constant};
use youngreg::dyadic::{build_dyadic_table, StreamingDyadic, Truncation};
use youngreg::fbm::{sample_path, HurstParams};
use youngreg::mollify::{mollifier, mollifier_names};
use youngreg::oscillatory::eval_y;
use youngreg::path::fmt_f64;
use youngreg::solver::{
    convergence_experiment, flow_jacobian, flow_lipschitz_estimate, solve_young_ode, SolveConfig,
    SolveStatus,
};
use youngreg::stats::{exp_moment_check, k_vs_q_regression, moment_check, KvsQConfig, MomentSetup};
use youngreg::{FourierVectorField, Frequency, SampledPath};

use crate::error::CliError;
use crate::output::{create, preamble, sidecar, write_json};
use crate::registry::{flag, Command, Context, Flag, Kind, Outcome};

pub static REGISTRY: &[&dyn Command] = &[
    &SampleFbm, &EvalY, &EstimateK, &Stats, &Solve, &Flow, &Converge, &Moments,
];

fn decode<T: for<'de> Deserialize<'de>>(config: &Value) -> Result<T, CliError> {
    Ok(serde_json::from_value(config.clone())?)
}

fn defaults_of<T: Serialize>(value: T) -> Value {
    serde_json::to_value(value).expect("config structs serialize")
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

const PATH_FLAGS: [Flag; 5] = [
    flag("H", Kind::Float, "Hurst index in (0, 1)"),
    flag("d", Kind::Int, "Path dimension"),
    flag("depth", Kind::Int, "Grid depth; the path has 2^depth steps"),
    flag("seed", Kind::Int, "Random seed"),
    flag(
        "path",
        Kind::Text,
        "Read the path from this CSV instead of sampling",
    ),
];

const TRUNCATION_FLAGS: [Flag; 4] = [
    flag("n-max", Kind::Int, "Finest dyadic level"),
    flag("m-max", Kind::Int, "Finest frequency lattice refinement"),
    flag("omega-max", Kind::Float, "Time-frequency radius"),
    flag("xi-max", Kind::Float, "Space-frequency radius"),
];

fn with(base: &[Flag], extra: &[Flag]) -> Vec<Flag> {
    base.iter().chain(extra).copied().collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct PathSource {
    #[serde(rename = "H")]
    hurst: f64,
    d: Option<usize>,
    depth: u32,
    seed: u64,
    path: Option<PathBuf>,
}

impl Default for PathSource {
    fn default() -> Self {
        Self {
            hurst: 0.5,
            d: None,
            depth: 10,
            seed: 0,
            path: None,
        }
    }
}

impl PathSource {
    fn dim(&self, fallback: usize) -> usize {
        self.d.unwrap_or(fallback)
    }

    fn load(&self, dim: usize) -> Result<SampledPath, CliError> {
        let path = match &self.path {
            Some(file) => SampledPath::read_csv(BufReader::new(std::fs::File::open(file)?))?,
            None => sample_path(&HurstParams::new(self.hurst, dim, self.depth, self.seed)?)?,
        };
        if path.dim() != dim {
            return Err(usage(format!(
                "path has dimension {}, expected {dim}",
                path.dim()
            )));
        }
        Ok(path)
    }
}

fn split_path(config: &Value) -> Result<(PathSource, Value), CliError> {
    let Value::Object(map) = config else {
        return Err(usage("config must be an object"));
    };
    let keys = ["H", "d", "depth", "seed", "path"];
    let (src, rest): (serde_json::Map<_, _>, serde_json::Map<_, _>) = map
        .clone()
        .into_iter()
        .partition(|(k, _)| keys.contains(&k.as_str()));
    Ok((decode(&Value::Object(src))?, Value::Object(rest)))
}

fn merge(a: Value, b: Value) -> Value {
    match (a, b) {
        (Value::Object(mut x), Value::Object(y)) => {
            x.extend(y);
            Value::Object(x)
        }
        (x, _) => x,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct TruncationArgs {
    n_max: u32,
    m_max: u32,
    omega_max: f64,
    xi_max: f64,
}

impl From<Truncation> for TruncationArgs {
    fn from(t: Truncation) -> Self {
        Self {
            n_max: t.n_max,
            m_max: t.m_max,
            omega_max: t.omega_max,
            xi_max: t.xi_max,
        }
    }
}

impl From<&TruncationArgs> for Truncation {
    fn from(t: &TruncationArgs) -> Self {
        Truncation::new(t.n_max, t.m_max, t.omega_max, t.xi_max)
    }
}

fn out_path(out: &Option<PathBuf>) -> Option<&Path> {
    out.as_deref()
}

// ---------------------------------------------------------------- sample-fbm

struct SampleFbm;

impl Command for SampleFbm {
    fn name(&self) -> &'static str {
        "sample-fbm"
    }
    fn about(&self) -> &'static str {
        "Sample a fractional Brownian path and write it as CSV"
    }
    fn flags(&self) -> Vec<Flag> {
        with(&PATH_FLAGS[..4], &[flag("out", Kind::Text, "Output CSV")])
    }
    fn defaults(&self) -> Value {
        merge(
            defaults_of(PathSource {
                d: Some(1),
                ..Default::default()
            }),
            json!({ "out": null }),
        )
    }
    fn run(&self, config: Value, ctx: &Context) -> Result<Outcome, CliError> {
        let (src, rest) = split_path(&config)?;
        let out: Option<PathBuf> = decode(&rest["out"])?;
        let path = src.load(src.dim(1))?;
        if let Some(file) = out_path(&out) {
            let mut w = create(file)?;
            path.write_csv(&mut w, "w", &preamble(self.name(), &config, ctx.version))?;
            w.flush()?;
        }
        let end: Vec<String> = path
            .value(path.n_grid())
            .iter()
            .map(|v| fmt_f64(*v))
            .collect();
        Ok(Outcome {
            summary: format!(
                "sample-fbm: H={} d={} points={} w(1)=[{}]{}",
                src.hurst,
                path.dim(),
                path.n_grid() + 1,
                end.join(","),
                written(&out)
            ),
            numerical_failure: false,
        })
    }
}

fn written(out: &Option<PathBuf>) -> String {
    out.as_ref()
        .map(|p| format!(" -> {}", p.display()))
        .unwrap_or_default()
}

// -------------------------------------------------------------------- eval-y

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct EvalYArgs {
    s: f64,
    t: f64,
    omega: f64,
    xi: Vec<f64>,
    out: Option<PathBuf>,
}

struct EvalY;

impl Command for EvalY {
    fn name(&self) -> &'static str {
        "eval-y"
    }
    fn about(&self) -> &'static str {
        "Evaluate the oscillatory integral Y over [s, t] along a path"
    }
    fn flags(&self) -> Vec<Flag> {
        with(
            &PATH_FLAGS,
            &[
                flag("s", Kind::Float, "Interval start"),
                flag("t", Kind::Float, "Interval end"),
                flag("omega", Kind::Float, "Time frequency"),
                flag(
                    "xi",
                    Kind::FloatList,
                    "Space frequency, one entry per dimension",
                ),
                flag("out", Kind::Text, "Output JSON"),
            ],
        )
    }
    fn defaults(&self) -> Value {
        merge(
            defaults_of(PathSource::default()),
            defaults_of(EvalYArgs {
                s: 0.0,
                t: 1.0,
                omega: 0.0,
                xi: vec![1.0],
                out: None,
            }),
        )
    }
    fn run(&self, config: Value, ctx: &Context) -> Result<Outcome, CliError> {
        let (src, rest) = split_path(&config)?;
        let args: EvalYArgs = decode(&rest)?;
        let path = src.load(src.dim(args.xi.len()))?;
        let y = eval_y(
            &path,
            args.s,
            args.t,
            &Frequency::new(args.omega, args.xi.clone())?,
        )?;
        let result = json!({
            "re": y.value.re,
            "im": y.value.im,
            "abs": y.value.norm(),
            "abs_error_bound": y.abs_error_bound,
            "interval_length": args.t - args.s,
        });
        if let Some(file) = out_path(&args.out) {
            write_json(file, self.name(), &config, ctx.version, &result)?;
        }
        Ok(Outcome {
            summary: format!(
                "eval-y: Y = {} {} {}i |Y| = {} (error bound {}){}",
                fmt_f64(y.value.re),
                if y.value.im.is_sign_negative() {
                    '-'
                } else {
                    '+'
                },
                fmt_f64(y.value.im.abs()),
                fmt_f64(y.value.norm()),
                fmt_f64(y.abs_error_bound),
                written(&args.out)
            ),
            numerical_failure: false,
        })
    }
}

// ---------------------------------------------------------------- estimate-k

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct EstimateKArgs {
    alpha: f64,
    gamma: Option<f64>,
    #[serde(flatten)]
    truncation: TruncationArgs,
    table: Option<PathBuf>,
    budget: u64,
    out: Option<PathBuf>,
}

struct EstimateK;

impl Command for EstimateK {
    fn name(&self) -> &'static str {
        "estimate-k"
    }
    fn about(&self) -> &'static str {
        "Estimate the averaging constant of a path on a truncated dyadic lattice"
    }
    fn flags(&self) -> Vec<Flag> {
        let mut f = with(&PATH_FLAGS, &TRUNCATION_FLAGS);
        f.extend([
            flag("alpha", Kind::Float, "Regularity index, > -1/(2H)"),
            flag(
                "gamma",
                Kind::Float,
                "Hölder exponent (default 5/8 + H alpha/4)",
            ),
            flag(
                "table",
                Kind::Text,
                "Also write the dyadic Y table (binary) here",
            ),
            flag("budget", Kind::Int, "Entry budget for the table"),
            flag("out", Kind::Text, "Output JSON"),
        ]);
        f
    }
    fn defaults(&self) -> Value {
        merge(
            defaults_of(PathSource {
                d: Some(1),
                ..Default::default()
            }),
            defaults_of(EstimateKArgs {
                alpha: -0.6,
                gamma: None,
                truncation: Truncation::default().into(),
                table: None,
                budget: 50_000_000,
                out: None,
            }),
        )
    }
    fn run(&self, config: Value, ctx: &Context) -> Result<Outcome, CliError> {
        let (src, rest) = split_path(&config)?;
        let args: EstimateKArgs = decode(&rest)?;
        if args.alpha.is_nan() || args.alpha <= -1.0 / (2.0 * src.hurst) {
            return Err(usage(format!("alpha = {} must exceed -1/(2H)", args.alpha)));
        }
        let gamma = args.gamma.unwrap_or(0.625 + src.hurst * args.alpha / 4.0);
        let path = src.load(src.dim(1))?;
        let truncation = Truncation::from(&args.truncation);
        let (estimate, argmax) = match &args.table {
            Some(file) => {
                let table = build_dyadic_table(&path, truncation, args.budget as usize)?;
                let mut w = create(file)?;
                table.write_binary(&mut w)?;
                w.flush()?;
                (
                    estimate_averaging_constant(&table, args.alpha, gamma),
                    argmax_cell(&table, args.alpha, gamma),
                )
            }
            None => {
                let source = StreamingDyadic::new(&path, truncation)?;
                (
                    estimate_averaging_constant(&source, args.alpha, gamma),
                    argmax_cell(&source, args.alpha, gamma),
                )
            }
        };
        let result = json!({
            "estimate": estimate,
            "argmax": argmax.map(|(freq, n, k, ratio)| json!({
                "omega": freq.omega, "xi": freq.xi, "level": n, "cell": k, "ratio": ratio,
            })),
        });
        if let Some(file) = out_path(&args.out) {
            write_json(file, self.name(), &config, ctx.version, &result)?;
        }
        Ok(Outcome {
            summary: format!(
                "estimate-k: K = {} (alpha={} gamma={} n_max={}){}",
                fmt_f64(estimate.k),
                args.alpha,
                gamma,
                truncation.n_max,
                written(&args.out)
            ),
            numerical_failure: !estimate.k.is_finite(),
        })
    }
}

// --------------------------------------------------------------------- stats

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct StatsArgs {
    #[serde(rename = "H")]
    hurst: f64,
    depth: u32,
    seed: u64,
    alpha: f64,
    gamma: Option<f64>,
    lambda: f64,
    n_train: u64,
    n_test: u64,
    margin: f64,
    #[serde(flatten)]
    truncation: TruncationArgs,
    out: Option<PathBuf>,
}

struct Stats;

impl Command for Stats {
    fn name(&self) -> &'static str {
        "stats"
    }
    fn about(&self) -> &'static str {
        "Per-path R, S, Q and K over an fBm ensemble, with a calibrated K <= C(1+Q) check"
    }
    fn flags(&self) -> Vec<Flag> {
        let mut f = with(&PATH_FLAGS[..1], &PATH_FLAGS[2..4]);
        f.extend(TRUNCATION_FLAGS);
        f.extend([
            flag("alpha", Kind::Float, "Regularity index, > -1/(2H)"),
            flag(
                "gamma",
                Kind::Float,
                "Hölder exponent (default 5/8 + H alpha/4)",
            ),
            flag("lambda", Kind::Float, "Exponential weight in (0, 1/4)"),
            flag("n-train", Kind::Int, "Paths used to calibrate C"),
            flag("n-test", Kind::Int, "Held-out paths"),
            flag(
                "margin",
                Kind::Float,
                "Calibration margin applied to the largest training ratio",
            ),
            flag(
                "out",
                Kind::Text,
                "Output CSV (a JSON summary is written beside it)",
            ),
        ]);
        f
    }
    fn defaults(&self) -> Value {
        defaults_of(StatsArgs {
            hurst: 0.5,
            depth: 10,
            seed: 0,
            alpha: -0.8,
            gamma: None,
            lambda: 0.1,
            n_train: 20,
            n_test: 30,
            margin: 1.1,
            truncation: Truncation::new(8, 2, 16.0, 16.0).into(),
            out: None,
        })
    }
    fn run(&self, config: Value, ctx: &Context) -> Result<Outcome, CliError> {
        let args: StatsArgs = decode(&config)?;
        let cfg = KvsQConfig {
            hurst: args.hurst,
            alpha: args.alpha,
            gamma: args.gamma,
            lambda: args.lambda,
            n_train: args.n_train as usize,
            n_test: args.n_test as usize,
            depth: args.depth,
            truncation: (&args.truncation).into(),
            calibration_margin: args.margin,
            seed: args.seed,
        };
        cfg.validate()?;
        let report = k_vs_q_regression(&cfg)?;
        if let Some(file) = out_path(&args.out) {
            let mut w = create(file)?;
            report.write_csv(&mut w, &preamble(self.name(), &config, ctx.version))?;
            w.flush()?;
            write_json(&sidecar(file), self.name(), &config, ctx.version, &report)?;
        }
        Ok(Outcome {
            summary: format!(
                "stats: {} paths, C = {}, held-out violations {}/{}{}",
                report.records.len(),
                fmt_f64(report.c),
                report.violations,
                args.n_test,
                written(&args.out)
            ),
            numerical_failure: false,
        })
    }
}

// --------------------------------------------------------------------- solve

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct SolverArgs {
    field: Option<PathBuf>,
    x0: Vec<f64>,
    alpha: Option<f64>,
    gamma: f64,
    step_safety: f64,
    picard_tol: f64,
    max_picard: u64,
    k: Option<f64>,
}

impl Default for SolverArgs {
    fn default() -> Self {
        let d = SolveConfig::default();
        Self {
            field: None,
            x0: vec![],
            alpha: None,
            gamma: d.gamma,
            step_safety: d.step_safety,
            picard_tol: d.picard_tol,
            max_picard: d.max_picard as u64,
            k: None,
        }
    }
}

const SOLVER_FLAGS: [Flag; 8] = [
    flag("field", Kind::Text, "Drift field JSON"),
    flag("x0", Kind::FloatList, "Initial point (default: origin)"),
    flag(
        "alpha",
        Kind::Float,
        "Regularity index (default 4(gamma - 5/8)/H)",
    ),
    flag(
        "gamma",
        Kind::Float,
        "Hölder exponent of theta, in (1/2, 1]",
    ),
    flag(
        "step-safety",
        Kind::Float,
        "Fraction of the contraction window used",
    ),
    flag("picard-tol", Kind::Float, "Picard stopping tolerance"),
    flag("max-picard", Kind::Int, "Picard iteration cap per window"),
    flag(
        "k",
        Kind::Float,
        "Use this averaging constant instead of estimating it",
    ),
];

/// Field, path, initial point and solver settings shared by solve, flow and converge.
struct Problem {
    field: FourierVectorField,
    path: SampledPath,
    x0: Vec<f64>,
    cfg: SolveConfig,
}

fn problem(config: &Value, extra: &[&str]) -> Result<(Problem, Value), CliError> {
    let (src, rest) = split_path(config)?;
    let Value::Object(map) = rest else {
        unreachable!()
    };
    let (own, other): (serde_json::Map<_, _>, serde_json::Map<_, _>) = map
        .into_iter()
        .partition(|(k, _)| !extra.contains(&k.as_str()));
    let args: SolverArgs = decode(&Value::Object(own))?;
    let field_file = args
        .field
        .as_ref()
        .ok_or_else(|| usage("--field is required"))?;
    let field = FourierVectorField::load(field_file)?;
    let dim = field.dim();
    if src.dim(dim) != dim {
        return Err(usage(format!(
            "--d {} does not match the field dimension {dim}",
            src.dim(dim)
        )));
    }
    let x0 = if args.x0.is_empty() {
        vec![0.0; dim]
    } else {
        args.x0.clone()
    };
    if x0.len() != dim {
        return Err(usage(format!(
            "x0 has {} entries, the field has dimension {dim}",
            x0.len()
        )));
    }
    let path = src.load(dim)?;
    let cfg = SolveConfig {
        alpha: args.alpha.unwrap_or(4.0 * (args.gamma - 0.625) / src.hurst),
        gamma: args.gamma,
        step_safety: args.step_safety,
        picard_tol: args.picard_tol,
        max_picard: args.max_picard as usize,
        k_override: args.k,
        ..SolveConfig::default()
    };
    cfg.validate()?;
    Ok((
        Problem {
            field,
            path,
            x0,
            cfg,
        },
        Value::Object(other),
    ))
}

fn solver_defaults(extra: Value) -> Value {
    merge(
        merge(
            defaults_of(PathSource {
                depth: 12,
                ..Default::default()
            }),
            defaults_of(SolverArgs::default()),
        ),
        extra,
    )
}

struct Solve;

impl Command for Solve {
    fn name(&self) -> &'static str {
        "solve"
    }
    fn about(&self) -> &'static str {
        "Solve the averaged Young ODE for theta = x - w along one path"
    }
    fn flags(&self) -> Vec<Flag> {
        let mut f = with(&PATH_FLAGS, &SOLVER_FLAGS);
        f.push(flag(
            "out",
            Kind::Text,
            "Output CSV (diagnostics JSON is written beside it)",
        ));
        f
    }
    fn defaults(&self) -> Value {
        solver_defaults(json!({ "out": null }))
    }
    fn run(&self, config: Value, ctx: &Context) -> Result<Outcome, CliError> {
        let (p, rest) = problem(&config, &["out"])?;
        let out: Option<PathBuf> = decode(&rest["out"])?;
        let sol = solve_young_ode(&p.field, &p.path, &p.x0, &p.cfg)?;
        let x = sol.solution(&p.path)?;
        if let Some(file) = out_path(&out) {
            let mut w = create(file)?;
            for line in preamble(self.name(), &config, ctx.version) {
                writeln!(w, "# {line}")?;
            }
            let d = x.dim();
            let names: Vec<String> = (1..=d)
                .map(|i| format!("theta{i}"))
                .chain((1..=d).map(|i| format!("x{i}")))
                .collect();
            writeln!(w, "t,{}", names.join(","))?;
            for k in 0..=x.n_grid() {
                let row: Vec<String> = sol
                    .theta
                    .value(k)
                    .iter()
                    .chain(x.value(k))
                    .map(|v| fmt_f64(*v))
                    .collect();
                writeln!(w, "{},{}", fmt_f64(x.time(k)), row.join(","))?;
            }
            w.flush()?;
            let diagnostics = json!({
                "status": sol.status,
                "k_estimate": sol.k_estimate,
                "holder_gamma_norm": sol.holder_gamma_norm,
                "step_norm": sol.step_norm,
                "window_steps": sol.window_steps,
                "total_picard_iters": sol.total_picard_iters(),
                "alpha": p.cfg.alpha,
                "per_window": sol.per_window,
            });
            write_json(
                &sidecar(file),
                self.name(),
                &config,
                ctx.version,
                &diagnostics,
            )?;
        }
        Ok(Outcome {
            summary: format!(
                "solve: status={} windows={} K={} |theta|_gamma={}{}",
                status_name(sol.status),
                sol.per_window.len(),
                fmt_f64(sol.k_estimate),
                fmt_f64(sol.holder_gamma_norm),
                written(&out)
            ),
            numerical_failure: sol.status != SolveStatus::Converged,
        })
    }
}

fn status_name(s: SolveStatus) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

// ---------------------------------------------------------------------- flow

struct Flow;

impl Command for Flow {
    fn name(&self) -> &'static str {
        "flow"
    }
    fn about(&self) -> &'static str {
        "Flow Jacobian along one path and a Lipschitz estimate over starting points"
    }
    fn flags(&self) -> Vec<Flag> {
        let mut f = with(&PATH_FLAGS, &SOLVER_FLAGS);
        f.extend([
            flag(
                "x0-grid",
                Kind::FloatLists,
                "Starting points for the Lipschitz estimate, e.g. `0,0;0.1,0`",
            ),
            flag(
                "out",
                Kind::Text,
                "Output CSV of the Jacobian (report JSON is written beside it)",
            ),
        ]);
        f
    }
    fn defaults(&self) -> Value {
        solver_defaults(json!({ "x0-grid": null, "out": null }))
    }
    fn run(&self, config: Value, ctx: &Context) -> Result<Outcome, CliError> {
        let (p, rest) = problem(&config, &["x0-grid", "out"])?;
        let out: Option<PathBuf> = decode(&rest["out"])?;
        let grid: Option<Vec<Vec<f64>>> = decode(&rest["x0-grid"])?;
        let (sol, jac) = flow_jacobian(&p.field, &p.path, &p.x0, &p.cfg)?;
        let lipschitz = match &grid {
            Some(g) => Some(flow_lipschitz_estimate(&p.field, &p.path, g, &p.cfg)?),
            None => None,
        };
        let sup = jac.sup_operator_norm();
        if let Some(file) = out_path(&out) {
            let mut w = create(file)?;
            for line in preamble(self.name(), &config, ctx.version) {
                writeln!(w, "# {line}")?;
            }
            let d = jac.dim;
            let names: Vec<String> = (1..=d)
                .flat_map(|i| (1..=d).map(move |j| format!("D{i}{j}")))
                .collect();
            writeln!(w, "t,{}", names.join(","))?;
            for k in 0..=jac.n_grid {
                let row: Vec<String> = jac.at(k).iter().map(|v| fmt_f64(*v)).collect();
                writeln!(
                    w,
                    "{},{}",
                    fmt_f64(k as f64 / jac.n_grid as f64),
                    row.join(",")
                )?;
            }
            w.flush()?;
            let report = json!({
                "status": sol.status,
                "k_estimate": sol.k_estimate,
                "jacobian_sup": sup,
                "lipschitz": lipschitz,
            });
            write_json(&sidecar(file), self.name(), &config, ctx.version, &report)?;
        }
        let lip = lipschitz
            .map(|l| {
                format!(
                    " finite-difference Lipschitz={}",
                    fmt_f64(l.finite_difference)
                )
            })
            .unwrap_or_default();
        Ok(Outcome {
            summary: format!(
                "flow: status={} sup|D|={}{lip}{}",
                status_name(sol.status),
                fmt_f64(sup),
                written(&out)
            ),
            numerical_failure: sol.status != SolveStatus::Converged,
        })
    }
}

// ------------------------------------------------------------------ converge

struct Converge;

impl Command for Converge {
    fn name(&self) -> &'static str {
        "converge"
    }
    fn about(&self) -> &'static str {
        "Solve with mollified drifts and report convergence to the unmollified solution"
    }
    fn flags(&self) -> Vec<Flag> {
        let mut f = with(&PATH_FLAGS, &SOLVER_FLAGS);
        f.extend([
            flag("scheme", Kind::Text, "Mollifier name"),
            flag(
                "n-list",
                Kind::IntList,
                "Mollification levels, e.g. `1,2,4,8`",
            ),
            flag("out", Kind::Text, "Output JSON"),
        ]);
        f
    }
    fn defaults(&self) -> Value {
        solver_defaults(json!({ "scheme": "power", "n-list": [1, 2, 4, 8, 16], "out": null }))
    }
    fn run(&self, config: Value, ctx: &Context) -> Result<Outcome, CliError> {
        let (p, rest) = problem(&config, &["scheme", "n-list", "out"])?;
        let name: String = decode(&rest["scheme"])?;
        let n_list: Vec<u32> = decode(&rest["n-list"])?;
        let out: Option<PathBuf> = decode(&rest["out"])?;
        let scheme = mollifier(&name).ok_or_else(|| {
            usage(format!(
                "unknown scheme `{name}`; known: {}",
                mollifier_names().join(", ")
            ))
        })?;
        let report = convergence_experiment(&p.field, &p.path, &p.x0, scheme, &n_list, &p.cfg)?;
        if let Some(file) = out_path(&out) {
            write_json(file, self.name(), &config, ctx.version, &report)?;
        }
        let last = report.rows.last();
        let failed = report.base_status != SolveStatus::Converged
            || report
                .rows
                .iter()
                .any(|r| r.status != SolveStatus::Converged);
        Ok(Outcome {
            summary: format!(
                "converge: scheme={} rows={} final sup diff={}{}",
                report.scheme,
                report.rows.len(),
                last.map(|r| fmt_f64(r.sup_diff))
                    .unwrap_or_else(|| "n/a".into()),
                written(&out)
            ),
            numerical_failure: failed,
        })
    }
}

// ------------------------------------------------------------------- moments

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct MomentsArgs {
    #[serde(rename = "H")]
    hurst: f64,
    d: Option<usize>,
    depth: u32,
    seed: u64,
    omega: f64,
    xi: Vec<f64>,
    s: f64,
    t: f64,
    p: u32,
    n: u64,
    lambda: Option<f64>,
    n_list: Option<Vec<u64>>,
    out: Option<PathBuf>,
}

struct Moments;

impl Command for Moments {
    fn name(&self) -> &'static str {
        "moments"
    }
    fn about(&self) -> &'static str {
        "Monte-Carlo moments of Y over fBm paths, with the closed form where one exists"
    }
    fn flags(&self) -> Vec<Flag> {
        with(
            &PATH_FLAGS[..4],
            &[
                flag("omega", Kind::Float, "Time frequency"),
                flag("xi", Kind::FloatList, "Space frequency"),
                flag("s", Kind::Float, "Interval start"),
                flag("t", Kind::Float, "Interval end"),
                flag("p", Kind::Int, "Moment order: estimates E|Y|^(2p)"),
                flag("n", Kind::Int, "Number of sample paths"),
                flag(
                    "lambda",
                    Kind::Float,
                    "Also estimate the exponential moment at this weight",
                ),
                flag(
                    "n-list",
                    Kind::IntList,
                    "Sample counts for the exponential moment (default: n)",
                ),
                flag("out", Kind::Text, "Output JSON"),
            ],
        )
    }
    fn defaults(&self) -> Value {
        defaults_of(MomentsArgs {
            hurst: 0.5,
            d: None,
            depth: 10,
            seed: 0,
            omega: 0.0,
            xi: vec![1.0],
            s: 0.0,
            t: 1.0,
            p: 1,
            n: 1000,
            lambda: None,
            n_list: None,
            out: None,
        })
    }
    fn run(&self, config: Value, ctx: &Context) -> Result<Outcome, CliError> {
        let args: MomentsArgs = decode(&config)?;
        let setup = MomentSetup {
            hurst: args.hurst,
            dim: args.d.unwrap_or(args.xi.len()),
            omega: args.omega,
            xi: args.xi.clone(),
            s: args.s,
            t: args.t,
            depth: args.depth,
            seed: args.seed,
        };
        setup.validate()?;
        let report = moment_check(&setup, args.p, args.n as usize)?;
        let exponential = match args.lambda {
            Some(lambda) => {
                let counts: Vec<usize> = args
                    .n_list
                    .clone()
                    .unwrap_or(vec![args.n])
                    .into_iter()
                    .map(|n| n as usize)
                    .collect();
                Some(exp_moment_check(&setup, lambda, &counts)?)
            }
            None => None,
        };
        let result = json!({
            "moment": report,
            "mc_estimate": report.estimate.mean,
            "mc_se": report.estimate.se,
            "exact": report.exact,
            "exponential": exponential,
        });
        if let Some(file) = out_path(&args.out) {
            write_json(file, self.name(), &config, ctx.version, &result)?;
        }
        let exact = report
            .exact
            .map(|e| {
                format!(
                    " exact={} z={:.3}",
                    fmt_f64(e),
                    report.z_score.unwrap_or(f64::NAN)
                )
            })
            .unwrap_or_default();
        Ok(Outcome {
            summary: format!(
                "moments: E|Y|^{} = {} +/- {}{exact}{}",
                2 * args.p,
                fmt_f64(report.estimate.mean),
                fmt_f64(report.estimate.se),
                written(&args.out)
            ),
            numerical_failure: false,
        })
    }
}
