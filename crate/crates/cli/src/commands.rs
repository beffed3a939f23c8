use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ot_core::disintegration::{disintegrate, reassemble, Axis};
use ot_core::foliation::{build_counterexample, check_metric_foliation, check_mmf, continuity_modulus, FoliatedSpace};
use ot_core::interpolation::{
    check_constant_speed, check_cyclical_monotonicity, dyadic_interpolation_with, glue, InterpolationConfig, PairSampling,
    DEFAULT_DEPTH_CAP,
};
use ot_core::mass;
use ot_core::measures::same_space;
use ot_core::metric_space::{euclidean, squared_euclidean};
use ot_core::solver::{solve_kantorovich, verify_plan, w1_dual, wasserstein, wasserstein_euclidean};
use ot_core::transport_class::{class_distance, equivalent_by_disintegration, solve_mk_in_class_with, MkConfig, TransportClass, DEFAULT_SEARCH_CAP};
use ot_core::{CostMatrix, DiscreteMeasure, OtError, QuotientSpace, Space, TransportPlan};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bundle::{Kind, LoadError, ProblemBundle};
use crate::schema::{self, Scope};

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Load(#[from] LoadError),
    #[error("{0}")]
    Core(#[from] OtError),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 0 ok, 2 infeasible, 3 invalid input, 4 resource limit, 64 usage.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(OtError::Infeasible(_) | OtError::InfeasibleClass(_)) => 2,
            CliError::Core(OtError::ResourceLimit(_)) => 4,
            CliError::Usage(_) => 64,
            _ => 3,
        }
    }
}

/// `@name`, `file.json` or `file.json#name`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityRef {
    pub path: Option<String>,
    pub name: Option<String>,
}

impl FromStr for EntityRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(name) = s.strip_prefix('@') {
            return match name {
                "" => Err("empty entity name".into()),
                _ => Ok(EntityRef { path: None, name: Some(name.into()) }),
            };
        }
        match s.rsplit_once('#') {
            Some((p, n)) if !p.is_empty() && !n.is_empty() => Ok(EntityRef { path: Some(p.into()), name: Some(n.into()) }),
            Some(_) => Err(format!("malformed reference '{s}'")),
            None if s.is_empty() => Err("empty path".into()),
            None => Ok(EntityRef { path: Some(s.into()), name: None }),
        }
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.path, &self.name) {
            (Some(p), Some(n)) => write!(f, "{p}#{n}"),
            (Some(p), None) => f.write_str(p),
            (None, Some(n)) => write!(f, "@{n}"),
            (None, None) => f.write_str("?"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ot", version, about = "Exact discrete optimal transport, disintegration and transport classes")]
pub struct Cli {
    #[command(flatten)]
    pub options: Options,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Options {
    /// Tolerance for floating-point checks [default: 1e-9]
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Seed for randomised pair sampling
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dyadic depth k for `interpolate`
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Largest accepted depth [default: 6]
    #[arg(long, global = true)]
    pub depth_cap: Option<usize>,
    /// Largest support searched by `mk-class` [default: 12]
    #[arg(long, global = true)]
    pub search_cap: Option<usize>,
    /// Extra bundle files whose entities can be named as @name
    #[arg(long = "bundle", global = true, value_name = "FILE")]
    pub bundles: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    First,
    Second,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Axis {
        match a {
            AxisArg::First => Axis::First,
            AxisArg::Second => Axis::Second,
        }
    }
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Optimal plan between two measures
    Solve {
        #[arg(long)]
        mu: EntityRef,
        #[arg(long)]
        nu: EntityRef,
        /// Dense header-free CSV; defaults to d^p on a shared or Euclidean space
        #[arg(long)]
        cost: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// W_p distance
    Wasserstein {
        #[arg(long)]
        mu: EntityRef,
        #[arg(long)]
        nu: EntityRef,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Kantorovich potential for W_1
    Dual {
        #[arg(long)]
        mu: EntityRef,
        #[arg(long)]
        nu: EntityRef,
    },
    /// Marginal and conditionals of a plan
    Disintegrate {
        #[arg(long)]
        plan: EntityRef,
        #[arg(long, value_enum, default_value_t = AxisArg::First)]
        axis: AxisArg,
    },
    /// Plan from a marginal and conditionals
    Reassemble {
        /// Output of `disintegrate` (report or bare outputs object)
        #[arg(long, conflicts_with_all = ["marginal", "map"])]
        from: Option<PathBuf>,
        #[arg(long, requires = "map")]
        marginal: Option<EntityRef>,
        #[arg(long, requires = "marginal")]
        map: Option<EntityRef>,
        #[arg(long, value_enum)]
        axis: Option<AxisArg>,
    },
    /// Compare the transport classes of two plans
    Class {
        #[arg(long, num_args = 1, required = true)]
        plan: Vec<EntityRef>,
    },
    /// Cheapest plan in a transport class
    MkClass {
        #[arg(long)]
        mu: EntityRef,
        #[arg(long)]
        lambda: EntityRef,
        #[arg(long)]
        cost: PathBuf,
    },
    /// Glue two plans along their shared marginal
    Glue {
        #[arg(long, num_args = 1, required = true)]
        plan: Vec<EntityRef>,
    },
    /// Dyadic displacement interpolation between two Euclidean measures
    Interpolate {
        #[arg(long)]
        mu0: EntityRef,
        #[arg(long)]
        mu1: EntityRef,
        /// Verify constant speed and cyclical monotonicity
        #[arg(long)]
        check: bool,
        /// Sample this many support pairs per coupling instead of all
        #[arg(long, requires = "check")]
        sample_pairs: Option<usize>,
        /// Write frames as CSV rows `t,label,coordinates...,weight`
        #[arg(long)]
        frames_csv: Option<PathBuf>,
    },
    /// Metric-foliation and W_2 = d* checks for a partitioned space
    FoliationCheck {
        #[arg(long)]
        space: EntityRef,
        #[arg(long)]
        partition: EntityRef,
        #[arg(long)]
        measure: EntityRef,
    },
    /// Discontinuous family of conditionals on a grid of n points
    Counterexample {
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Write the modulus table as CSV rows `y,y_prime,w2,gap`
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Wasserstein { .. } => "wasserstein",
            Command::Dual { .. } => "dual",
            Command::Disintegrate { .. } => "disintegrate",
            Command::Reassemble { .. } => "reassemble",
            Command::Class { .. } => "class",
            Command::MkClass { .. } => "mk-class",
            Command::Glue { .. } => "glue",
            Command::Interpolate { .. } => "interpolate",
            Command::FoliationCheck { .. } => "foliation-check",
            Command::Counterexample { .. } => "counterexample",
        }
    }

    fn refs(&self) -> Vec<&EntityRef> {
        match self {
            Command::Solve { mu, nu, .. } | Command::Wasserstein { mu, nu, .. } | Command::Dual { mu, nu } => vec![mu, nu],
            Command::Disintegrate { plan, .. } => vec![plan],
            Command::Reassemble { marginal, map, .. } => marginal.iter().chain(map.iter()).collect(),
            Command::Class { plan } | Command::Glue { plan } => plan.iter().collect(),
            Command::MkClass { mu, lambda, .. } => vec![mu, lambda],
            Command::Interpolate { mu0, mu1, .. } => vec![mu0, mu1],
            Command::FoliationCheck { space, partition, measure } => vec![space, partition, measure],
            Command::Counterexample { .. } => vec![],
        }
    }
}

impl Command {
    /// The command with file locations removed: files contribute through
    /// their bytes, so moving an input does not change the digest.
    fn canonical(&self) -> Command {
        let mut c = self.clone();
        let strip = |r: &mut EntityRef| {
            if r.name.is_some() {
                r.path = None;
            }
        };
        match &mut c {
            Command::Solve { mu, nu, cost, .. } => {
                strip(mu);
                strip(nu);
                *cost = cost.as_ref().map(|_| PathBuf::new());
            }
            Command::Wasserstein { mu, nu, .. } | Command::Dual { mu, nu } => {
                strip(mu);
                strip(nu);
            }
            Command::Disintegrate { plan, .. } => strip(plan),
            Command::Reassemble { from, marginal, map, .. } => {
                *from = from.as_ref().map(|_| PathBuf::new());
                marginal.iter_mut().chain(map.iter_mut()).for_each(strip);
            }
            Command::Class { plan } | Command::Glue { plan } => plan.iter_mut().for_each(strip),
            Command::MkClass { mu, lambda, cost } => {
                strip(mu);
                strip(lambda);
                *cost = PathBuf::new();
            }
            Command::Interpolate { mu0, mu1, frames_csv, .. } => {
                strip(mu0);
                strip(mu1);
                *frames_csv = None;
            }
            Command::FoliationCheck { space, partition, measure } => {
                strip(space);
                strip(partition);
                strip(measure);
            }
            Command::Counterexample { csv, .. } => *csv = None,
        }
        c
    }
}

impl Cli {
    /// Files to load: `--bundle` files, then every referenced file, once each.
    pub fn input_paths(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let refs = self.command.refs().into_iter().filter_map(|r| r.path.clone());
        for p in self.options.bundles.iter().cloned().chain(refs) {
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    /// SHA-256 over the input bytes and the effective settings.
    pub digest: String,
    pub outputs: Value,
    pub checks: Vec<CheckResult>,
    /// Wall time; reported on stderr, never serialised.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Settings {
    tol: f64,
    seed: u64,
    depth: Option<usize>,
    depth_cap: usize,
    search_cap: usize,
}

struct Runner<'a> {
    bundle: &'a ProblemBundle,
    settings: Settings,
    hasher: Sha256,
    checks: Vec<CheckResult>,
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

impl<'a> Runner<'a> {
    fn read(&mut self, path: &std::path::Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        self.hasher.update(Sha256::digest(&bytes));
        Ok(bytes)
    }

    fn check(&mut self, name: &str, passed: bool, detail: Value) {
        self.checks.push(CheckResult { name: name.into(), passed, detail });
    }

    fn name(&self, kind: Kind, r: &EntityRef) -> Result<String, CliError> {
        let b = self.bundle;
        match (&r.path, &r.name) {
            (_, Some(n)) => {
                let origin = b.origin(kind, n).ok_or_else(|| CliError::Invalid(format!("no {kind} named '{n}' ({r})")))?;
                match &r.path {
                    Some(p) if p != origin => Err(CliError::Invalid(format!("{kind} '{n}' is not defined in {p}"))),
                    _ => Ok(n.clone()),
                }
            }
            (Some(p), None) => match b.names_from(kind, p).as_slice() {
                [one] => Ok(one.to_string()),
                [] => Err(CliError::Invalid(format!("{p} holds no {kind}"))),
                many => Err(CliError::Invalid(format!("{p} holds {} {kind}s; write {p}#name", many.len()))),
            },
            (None, None) => Err(CliError::Invalid("empty reference".into())),
        }
    }

    fn measure(&self, r: &EntityRef) -> Result<&'a DiscreteMeasure, CliError> {
        let n = self.name(Kind::Measure, r)?;
        Ok(&self.bundle.measures[&n])
    }

    fn plan(&self, r: &EntityRef) -> Result<&'a TransportPlan, CliError> {
        let n = self.name(Kind::Plan, r)?;
        Ok(&self.bundle.plans[&n])
    }

    fn two_plans(&self, refs: &[EntityRef]) -> Result<(&'a TransportPlan, &'a TransportPlan), CliError> {
        match refs {
            [a, b] => Ok((self.plan(a)?, self.plan(b)?)),
            _ => Err(CliError::Usage(format!("expected exactly two --plan arguments, got {}", refs.len()))),
        }
    }

    fn cost_csv(&mut self, path: &std::path::Path, rows: usize, cols: usize) -> Result<CostMatrix, CliError> {
        let text = String::from_utf8(self.read(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let mut m = Vec::new();
        for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row = line
                .split(',')
                .enumerate()
                .map(|(col, f)| {
                    f.trim().parse::<f64>().map_err(|_| {
                        CliError::Invalid(format!("{}:{}:{}: not a number: '{}'", path.display(), ln + 1, col + 1, f.trim()))
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            m.push(row);
        }
        if m.len() != rows || m.iter().any(|r| r.len() != cols) {
            return Err(CliError::Invalid(format!("{}: expected a {rows}x{cols} matrix", path.display())));
        }
        Ok(CostMatrix::from_rows(m)?)
    }
}

fn metric_cost(a: &Space, b: &Space, p: f64) -> Result<CostMatrix, CliError> {
    if same_space(a, b) {
        return Ok(CostMatrix::metric_power(a, p)?);
    }
    match (a.coords(), b.coords()) {
        (Some(x), Some(y)) => Ok(CostMatrix::from_fn(x.len(), y.len(), |i, j| euclidean(&x[i], &y[j]).powf(p))?),
        _ => Err(CliError::Invalid("no --cost given and the measures share neither a space nor coordinates".into())),
    }
}

fn labelled<T: Serialize>(space: &Space, values: &[T]) -> Value {
    let mut m = Map::new();
    for (i, v) in values.iter().enumerate() {
        m.insert(space.label(i).to_string(), json!(v));
    }
    Value::Object(m)
}

/// Dispatches one command against a loaded bundle.
pub fn run_command(bundle: &ProblemBundle, command: &Command, options: &Options) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let c = &bundle.config;
    let settings = Settings {
        tol: options.tol.or(c.tol).unwrap_or(DEFAULT_TOL),
        seed: options.seed.or(c.seed).unwrap_or(0),
        depth: options.depth.or(c.depth),
        depth_cap: options.depth_cap.or(c.depth_cap).unwrap_or(DEFAULT_DEPTH_CAP),
        search_cap: options.search_cap.or(c.search_cap).unwrap_or(DEFAULT_SEARCH_CAP),
    };
    if !(settings.tol >= 0.0 && settings.tol.is_finite()) {
        return Err(CliError::Invalid(format!("tolerance must be finite and non-negative, got {}", settings.tol)));
    }
    let mut hasher = Sha256::new();
    for d in bundle.source_digests() {
        hasher.update(d);
    }
    hasher.update(format!("{:?}|{settings:?}", command.canonical()).as_bytes());
    let mut r = Runner { bundle, settings, hasher, checks: Vec::new() };
    let outputs = dispatch(&mut r, command)?;
    Ok(RunReport {
        command: command.name().into(),
        digest: hex::encode(r.hasher.finalize()),
        outputs,
        checks: r.checks,
        elapsed: start.elapsed(),
    })
}

fn dispatch(r: &mut Runner, command: &Command) -> Result<Value, CliError> {
    let tol = r.settings.tol;
    match command {
        Command::Solve { mu, nu, cost, p } => {
            let (mu, nu) = (r.measure(mu)?, r.measure(nu)?);
            let c = match cost {
                Some(path) => r.cost_csv(path, mu.space().len(), nu.space().len())?,
                None => metric_cost(mu.space(), nu.space(), *p)?,
            };
            let rep = solve_kantorovich(mu, nu, &c)?;
            let check = verify_plan(&rep.plan, mu, nu);
            r.check("marginals", check.passed(), json!({ "rows": check.row_violations.len(), "columns": check.column_violations.len() }));
            let potentials = rep.potentials.as_ref().map(|(u, v)| json!({ "u": labelled(mu.space(), u), "v": labelled(nu.space(), v) }));
            Ok(json!({
                "plan": schema::plan_json(&rep.plan),
                "cost": rep.cost,
                "exact_cost": schema::mass_json(&rep.plan.exact_cost(&c)),
                "iterations": rep.iterations,
                "potentials": potentials,
            }))
        }
        Command::Wasserstein { mu, nu, p } => {
            let (mu, nu) = (r.measure(mu)?, r.measure(nu)?);
            let d = if same_space(mu.space(), nu.space()) { wasserstein(mu, nu, *p)? } else { wasserstein_euclidean(mu, nu, *p)? };
            Ok(json!({ "p": p, "distance": d }))
        }
        Command::Dual { mu, nu } => {
            let (mu, nu) = (r.measure(mu)?, r.measure(nu)?);
            let d = w1_dual(mu, nu)?;
            let gap = (d.primal - d.value).abs();
            r.check("strong_duality", gap <= tol * d.primal.max(1.0), json!({ "gap": gap }));
            r.check("lipschitz", d.lipschitz_excess <= tol, json!({ "excess": d.lipschitz_excess }));
            Ok(json!({
                "potential": labelled(mu.space(), &d.potential),
                "value": d.value,
                "primal": d.primal,
                "lipschitz_excess": d.lipschitz_excess,
            }))
        }
        Command::Disintegrate { plan, axis } => {
            let plan = r.plan(plan)?;
            let (m, f) = disintegrate(plan, (*axis).into());
            Ok(json!({
                "axis": axis.to_possible_value().map(|v| v.get_name().to_string()),
                "marginal": schema::measure_json(&m),
                "target": schema::space_json(f.target()),
                "conditionals": schema::conditionals_json(&f),
            }))
        }
        Command::Reassemble { from, marginal, map, axis } => {
            let (m, f, axis) = match (from, marginal, map) {
                (Some(path), _, _) => {
                    let bytes = r.read(path)?;
                    let file = path.display().to_string();
                    let v: Value = serde_json::from_slice(&bytes)
                        .map_err(|e| LoadError { file: file.clone(), pointer: String::new(), message: format!("invalid JSON: {e}") })?;
                    let (v, base) = match v.get("outputs") {
                        Some(o) => (o.clone(), "/outputs"),
                        None => (v, ""),
                    };
                    let scope = Scope { file, ..Default::default() };
                    let mv = v.get("marginal").ok_or_else(|| scope.err(base, "missing field 'marginal'"))?;
                    let m = schema::parse_measure(mv, &format!("{base}/marginal"), &scope)?;
                    let f = schema::parse_conditionals(&v, m.space().clone(), base, &scope)?;
                    let stored = match v.get("axis").and_then(Value::as_str) {
                        Some("second") => AxisArg::Second,
                        _ => AxisArg::First,
                    };
                    (m, f, axis.unwrap_or(stored))
                }
                (None, Some(m), Some(f)) => {
                    let m = r.measure(m)?.clone();
                    let f = r.bundle.maps[&r.name(Kind::Map, f)?].clone();
                    (m, f, axis.unwrap_or(AxisArg::First))
                }
                _ => return Err(CliError::Usage("reassemble needs --from, or --marginal with --map".into())),
            };
            let plan = reassemble(&m, &f)?;
            let plan = if axis == AxisArg::Second { plan.transpose() } else { plan };
            let back = if axis == AxisArg::Second { plan.second_marginal() } else { plan.first_marginal() };
            r.check("marginal", back == m, Value::Null);
            Ok(json!({ "plan": schema::plan_json(&plan) }))
        }
        Command::Class { plan } => {
            let (a, b) = r.two_plans(plan)?;
            let equivalent = equivalent_by_disintegration(a, b)?;
            let (ca, cb) = (TransportClass::of_plan(a)?, TransportClass::of_plan(b)?);
            let distance = class_distance(ca.lambda(), cb.lambda()).ok();
            Ok(json!({
                "equivalent": equivalent,
                "lambda_a": schema::lambda_json(ca.lambda()),
                "lambda_b": schema::lambda_json(cb.lambda()),
                "class_distance": distance,
            }))
        }
        Command::MkClass { mu, lambda, cost } => {
            let mu = r.measure(mu)?;
            let l = &r.bundle.lambdas[&r.name(Kind::Lambda, lambda)?];
            let target = l.target_space().ok_or_else(|| CliError::Invalid("empty measure over measures".into()))?.clone();
            let c = r.cost_csv(cost, mu.space().len(), target.len())?;
            let cfg = MkConfig { search_cap: r.settings.search_cap, ..Default::default() };
            let sol = solve_mk_in_class_with(&c, mu, l, &cfg)?;
            r.check("relaxation_bound", sol.relaxation_bound <= sol.cost + tol * sol.cost.abs().max(1.0), json!({
                "bound": sol.relaxation_bound,
                "cost": sol.cost,
            }));
            Ok(json!({
                "target": schema::space_json(&target),
                "conditionals": schema::conditionals_json(&sol.map),
                "assignment": labelled(mu.space(), &sol.assignment),
                "cost": sol.cost,
                "exact_cost": schema::mass_json(&sol.exact_cost),
                "relaxation_bound": sol.relaxation_bound,
                "nodes": sol.nodes,
                "plan": schema::plan_json(&sol.plan(mu)?),
            }))
        }
        Command::Glue { plan } => {
            let (a, b) = r.two_plans(plan)?;
            let g = glue(a, b)?;
            let [x, y, z] = g.spaces();
            r.check("marginal_12", g.marginal(0, 1) == *a, Value::Null);
            r.check("marginal_23", g.marginal(1, 2) == *b, Value::Null);
            let mass: Vec<Vec<Vec<Value>>> = (0..x.len())
                .map(|i| (0..y.len()).map(|j| (0..z.len()).map(|k| schema::mass_json(g.get(i, j, k))).collect()).collect())
                .collect();
            Ok(json!({
                "spaces": [schema::space_json(x), schema::space_json(y), schema::space_json(z)],
                "mass": mass,
            }))
        }
        Command::Interpolate { mu0, mu1, check, sample_pairs, frames_csv } => {
            let (mu0, mu1) = (r.measure(mu0)?, r.measure(mu1)?);
            let depth = r.settings.depth.ok_or_else(|| CliError::Usage("interpolate needs --depth".into()))?;
            let cfg = InterpolationConfig { depth_cap: r.settings.depth_cap, ..Default::default() };
            let path = dyadic_interpolation_with(mu0, mu1, depth, &cfg)?;
            if *check {
                let rep = check_constant_speed(&path)?;
                r.check(
                    "constant_speed",
                    rep.max_deviation <= tol && rep.additivity_max_deviation <= tol,
                    json!({
                        "total": rep.total,
                        "max_deviation": rep.max_deviation,
                        "additivity_max_deviation": rep.additivity_max_deviation,
                        "failing_pair": rep.failing_pair,
                    }),
                );
                let sampling = match sample_pairs {
                    Some(count) => PairSampling::Random { count: *count, seed: r.settings.seed },
                    None => PairSampling::All,
                };
                let (mut worst, mut pairs, mut passed) = (0.0f64, 0usize, true);
                for i in 0..path.len() - 1 {
                    let (a, b) = (&path.measures[i], &path.measures[i + 1]);
                    let (ca, cb) = (a.space().coords().unwrap_or_default(), b.space().coords().unwrap_or_default());
                    let c = CostMatrix::from_fn(ca.len(), cb.len(), |x, y| squared_euclidean(&ca[x], &cb[y]))?;
                    let rep = check_cyclical_monotonicity(&path.coupling(i, i + 1), &c, sampling)?;
                    worst = worst.max(rep.max_excess);
                    pairs += rep.pairs_checked;
                    passed &= rep.max_excess <= tol * c.max_entry().max(1.0);
                }
                r.check("cyclical_monotonicity", passed, json!({ "pairs_checked": pairs, "max_excess": worst }));
            }
            if let Some(out) = frames_csv {
                let mut csv = String::new();
                for (t, m) in path.times.iter().zip(&path.measures) {
                    let coords = m.space().coords().unwrap_or_default();
                    for i in m.support() {
                        let xs: Vec<String> = coords[i].iter().map(|x| x.to_string()).collect();
                        csv.push_str(&format!("{},{},{},{}\n", mass::format(t), m.space().label(i), xs.join(","), mass::format(m.weight(i))));
                    }
                }
                std::fs::write(out, csv).map_err(io_err(out))?;
            }
            let frames: Vec<Value> = path
                .times
                .iter()
                .zip(&path.measures)
                .map(|(t, m)| json!({ "t": schema::mass_json(t), "measure": schema::measure_json(m) }))
                .collect();
            let trajectories: Vec<Value> = path
                .trajectories
                .iter()
                .map(|tr| json!({ "weight": schema::mass_json(&tr.weight), "points": path.trajectory_coords(tr) }))
                .collect();
            Ok(json!({ "depth": path.depth, "frames": frames, "trajectories": trajectories }))
        }
        Command::FoliationCheck { space, partition, measure } => {
            let space = r.bundle.spaces[&r.name(Kind::Space, space)?].clone();
            let part = &r.bundle.partitions[&r.name(Kind::Partition, partition)?];
            if part.space.as_ref().is_some_and(|s| !same_space(s, &space)) {
                return Err(CliError::Invalid("the partition is declared on a different space".into()));
            }
            let mu = r.measure(measure)?;
            if !same_space(mu.space(), &space) {
                return Err(CliError::Invalid("the measure lives on a different space".into()));
            }
            let q = QuotientSpace::from_label_partition(space.clone(), &part.classes)?;
            let mf = check_metric_foliation(&q);
            let violations: Vec<Value> = mf
                .violations
                .iter()
                .map(|v| {
                    json!({
                        "point": space.label(v.point),
                        "from": q.class_name(v.from),
                        "to": q.class_name(v.to),
                        "point_distance": v.point_distance,
                        "set_distance": v.set_distance,
                    })
                })
                .collect();
            let fs = FoliatedSpace::from_measure(mu.clone(), q.clone())?;
            let mmf = check_mmf(&fs)?;
            let mmf_ok = mmf.max_deviation <= tol * space.max_distance().max(1.0);
            r.check("metric_foliation", mf.passed(), json!({ "violations": violations.len() }));
            r.check("mmf", mmf_ok, json!({ "max_deviation": mmf.max_deviation }));
            let pairs: Vec<Value> = mmf
                .pairs
                .iter()
                .map(|p| json!({ "y": q.class_name(p.y), "z": q.class_name(p.z), "w2": p.w2, "dstar": p.dstar }))
                .collect();
            Ok(json!({
                "metric_foliation": { "passed": mf.passed(), "max_deviation": mf.max_deviation, "violations": violations },
                "mmf": { "passed": mmf_ok, "max_deviation": mmf.max_deviation },
                "pairs": pairs,
                "dstar_triangle_violations": q.dstar_triangle_violations(tol).len(),
            }))
        }
        Command::Counterexample { n, csv } => {
            let ce = build_counterexample(*n)?;
            let rows = continuity_modulus(&ce.family())?;
            let k = ce.nearest_to_one();
            let top = ce.measures.len() - 1;
            let w = wasserstein(&ce.measures[k], &ce.measures[top], 2.0)?;
            let table: Vec<Value> = rows
                .iter()
                .map(|row| {
                    json!({
                        "y": schema::mass_json(&ce.params[row.i]),
                        "y_prime": schema::mass_json(&ce.params[row.j]),
                        "w2": row.w2,
                        "gap": row.gap,
                    })
                })
                .collect();
            if let Some(out) = csv {
                let mut text = String::from("y,y_prime,w2,gap\n");
                for row in &rows {
                    text.push_str(&format!(
                        "{},{},{},{}\n",
                        mass::format(&ce.params[row.i]),
                        mass::format(&ce.params[row.j]),
                        row.w2,
                        row.gap
                    ));
                }
                std::fs::write(out, text).map_err(io_err(out))?;
            }
            Ok(json!({
                "n": n,
                "nearest_parameter": schema::mass_json(&ce.params[k]),
                "w2_squared_to_limit_measure": w * w,
                "limit_value": schema::mass_json(&ot_core::foliation::Counterexample::limit_value()),
                "modulus": table,
            }))
        }
    }
}
