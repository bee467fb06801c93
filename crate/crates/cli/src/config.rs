//! Experiment configuration: presets, `key = value` files and flag overrides,
//! merged into one resolved map and then parsed into typed settings.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use langevin_mh::harness::{InitialPolicy, Method, StudyModel, StudyState};
use langevin_mh::{InertialModel, OverdampedState, PhaseState, PotentialKind, PotentialModel};

use crate::error::{CliError, CliResult};
use crate::presets;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Trajectory,
    Converge,
    Ergodicity,
    RejectRate,
}

impl Command {
    pub fn tag(self) -> &'static str {
        match self {
            Command::Trajectory => "trajectory",
            Command::Converge => "converge",
            Command::Ergodicity => "ergodicity",
            Command::RejectRate => "reject-rate",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Every key a configuration may set.
pub const KEYS: &[&str] = &[
    "experiment",
    "potential",
    "coefficients",
    "dimension",
    "beta",
    "gamma",
    "mass",
    "method",
    "T",
    "h",
    "hs",
    "fine_ratio",
    "realizations",
    "n_steps",
    "x0",
    "q0",
    "p0",
    "initial",
    "energy_bound",
    "seed",
    "threads",
    "out",
    "zero_noise",
    "bins",
];

/// Keys left out of the provenance header because they cannot change results.
const UNRECORDED: &[&str] = &["threads", "out"];

/// Settings given on the command line; each overrides the file and preset.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<String>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub realizations: Option<usize>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub set: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    Fixed(StudyState),
    Equilibrium,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: Command,
    pub resolved: BTreeMap<String, String>,
    pub model: StudyModel,
    pub methods: Vec<Method>,
    pub horizon: Option<f64>,
    pub h: Option<f64>,
    pub step_sizes: Vec<f64>,
    pub fine_ratio: Option<usize>,
    pub realizations: usize,
    pub n_steps: Option<usize>,
    pub start: Option<Start>,
    pub energy_bound: Option<f64>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub zero_noise: bool,
    pub bins: usize,
}

impl ExperimentConfig {
    /// `# langevin-mh <command> key=value ...` over every result-relevant key.
    pub fn header(&self) -> String {
        let body: Vec<String> = self
            .resolved
            .iter()
            .filter(|(k, _)| !UNRECORDED.contains(&k.as_str()))
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!("# langevin-mh {} {}", self.command, body.join(" "))
    }

    pub fn method(&self) -> Method {
        self.methods[0]
    }

    pub fn initial_policy(&self) -> InitialPolicy {
        match &self.start {
            Some(Start::Fixed(s)) => InitialPolicy::Fixed(s.clone()),
            _ => InitialPolicy::Equilibrium,
        }
    }

    pub fn fixed_start(&self) -> CliResult<&StudyState> {
        match &self.start {
            Some(Start::Fixed(s)) => Ok(s),
            _ => Err(CliError::config(format!("{} needs a fixed start (x0, or q0 and p0)", self.command))),
        }
    }

    pub fn require_h(&self) -> CliResult<f64> {
        self.h.ok_or_else(|| missing("h"))
    }

    pub fn require_n_steps(&self) -> CliResult<usize> {
        self.n_steps.ok_or_else(|| missing("n_steps"))
    }

    pub fn require_horizon(&self) -> CliResult<f64> {
        self.horizon.ok_or_else(|| missing("T"))
    }
}

fn missing(key: &str) -> CliError {
    CliError::config(format!("missing required key `{key}`"))
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("line {}: expected `key = value`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn read_config_file(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// `key=value` from a `--set` argument.
pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn normalize(value: &str) -> String {
    value.split_whitespace().collect::<Vec<_>>().join("")
}

/// Merges preset, file and overrides, then parses and validates for `command`.
pub fn resolve(command: Command, o: &Overrides) -> CliResult<ExperimentConfig> {
    let file = match &o.config {
        Some(p) => read_config_file(p)?,
        None => Vec::new(),
    };
    let experiment = o
        .experiment
        .clone()
        .or_else(|| file.iter().rev().find(|(k, _)| k == "experiment").map(|(_, v)| v.clone()));

    let mut map = BTreeMap::new();
    if let Some(name) = &experiment {
        let preset = presets::find(name).ok_or_else(|| {
            CliError::config(format!("unknown experiment {name:?}; known: {}", presets::names().join(", ")))
        })?;
        if preset.command != command {
            return Err(CliError::config(format!(
                "experiment {name} belongs to `{}`, not `{command}`",
                preset.command
            )));
        }
        for (k, v) in preset.entries {
            map.insert(k.to_string(), v.to_string());
        }
        map.insert("experiment".into(), name.clone());
    }
    for (k, v) in file.iter().chain(&o.set) {
        map.insert(k.clone(), normalize(v));
    }
    if let Some(e) = &experiment {
        map.insert("experiment".into(), e.clone());
    }
    if let Some(s) = o.seed {
        map.insert("seed".into(), s.to_string());
    }
    if let Some(r) = o.realizations {
        map.insert("realizations".into(), r.to_string());
    }
    if let Some(t) = o.threads {
        map.insert("threads".into(), t.to_string());
    }
    if let Some(p) = &o.out {
        map.insert("out".into(), p.display().to_string());
    }
    map.entry("seed".into()).or_insert_with(|| "0".into());
    if let Some(bad) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(CliError::config(format!("unknown key `{bad}`")));
    }
    parse(command, map)
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    fn f64(&self, key: &str) -> CliResult<Option<f64>> {
        self.raw(key).map(|v| parse_real(key, v)).transpose()
    }

    fn usize(&self, key: &str) -> CliResult<Option<usize>> {
        self.raw(key)
            .map(|v| v.parse::<usize>().map_err(|_| CliError::config(format!("`{key}`: {v:?} is not a count"))))
            .transpose()
    }

    fn list(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        self.raw(key).map(|v| parse_real_list(key, v)).transpose()
    }
}

/// A real number, also accepting `2^k`.
pub fn parse_real(key: &str, v: &str) -> CliResult<f64> {
    let bad = || CliError::config(format!("`{key}`: {v:?} is not a number"));
    let x = match v.strip_prefix("2^") {
        Some(exp) => 2f64.powi(exp.parse::<i32>().map_err(|_| bad())?),
        None => v.parse::<f64>().map_err(|_| bad())?,
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad())
    }
}

/// Comma-separated reals; an item `2^a..2^b` expands to every power of two
/// between the exponents, in the given order.
pub fn parse_real_list(key: &str, v: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for item in v.split(',').filter(|s| !s.is_empty()) {
        match item.split_once("..") {
            Some((a, b)) => {
                let exp = |s: &str| {
                    s.strip_prefix("2^")
                        .and_then(|e| e.parse::<i32>().ok())
                        .ok_or_else(|| CliError::config(format!("`{key}`: range ends must look like 2^k, got {s:?}")))
                };
                let (ea, eb) = (exp(a)?, exp(b)?);
                if ea >= eb {
                    out.extend((eb..=ea).rev().map(|k| 2f64.powi(k)));
                } else {
                    out.extend((ea..=eb).map(|k| 2f64.powi(k)));
                }
            }
            None => out.push(parse_real(key, item)?),
        }
    }
    Ok(out)
}

fn broadcast(key: &str, v: Vec<f64>, n: usize) -> CliResult<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; n]),
        len if len == n => Ok(v),
        len => Err(CliError::config(format!("`{key}` has {len} entries, dimension is {n}"))),
    }
}

fn parse(command: Command, map: BTreeMap<String, String>) -> CliResult<ExperimentConfig> {
    let r = Reader { map: &map };
    let dimension = r.usize("dimension")?.unwrap_or(1);
    let potential = match r.raw("potential").ok_or_else(|| missing("potential"))? {
        "zero" => PotentialKind::Zero,
        "quadratic" => PotentialKind::Quadratic,
        "quartic" => PotentialKind::Quartic,
        "polynomial" => PotentialKind::Polynomial(r.list("coefficients")?.ok_or_else(|| missing("coefficients"))?),
        other => return Err(CliError::config(format!("unknown potential {other:?}"))),
    };
    if r.raw("coefficients").is_some() && !matches!(potential, PotentialKind::Polynomial(_)) {
        return Err(CliError::config("`coefficients` only applies to potential = polynomial"));
    }
    let beta = r.f64("beta")?.ok_or_else(|| missing("beta"))?;
    let base = PotentialModel::new(potential, dimension, beta)?;

    let methods = r
        .raw("method")
        .ok_or_else(|| missing("method"))?
        .split(',')
        .map(|m| m.parse::<Method>().map_err(CliError::from))
        .collect::<CliResult<Vec<Method>>>()?;
    if methods.is_empty() {
        return Err(missing("method"));
    }
    let inertial = methods[0].is_inertial();
    if methods.iter().any(|m| m.is_inertial() != inertial) {
        return Err(CliError::config("cannot mix overdamped and inertial methods"));
    }
    if command != Command::Trajectory && methods.len() != 1 {
        return Err(CliError::config(format!("{command} runs exactly one method")));
    }

    let model = if inertial {
        let gamma = r.f64("gamma")?.ok_or_else(|| missing("gamma"))?;
        let mass = broadcast("mass", r.list("mass")?.unwrap_or_else(|| vec![1.0]), dimension)?;
        StudyModel::Inertial(InertialModel::new(base, gamma, mass)?)
    } else {
        for k in ["gamma", "mass", "q0", "p0"] {
            if r.raw(k).is_some() {
                return Err(CliError::config(format!("`{k}` only applies to inertial methods")));
            }
        }
        StudyModel::Overdamped(base)
    };

    let fixed = if inertial {
        if r.raw("x0").is_some() {
            return Err(CliError::config("inertial methods start from q0 and p0, not x0"));
        }
        match (r.list("q0")?, r.list("p0")?) {
            (Some(q), Some(p)) => Some(StudyState::Phase(PhaseState::new(
                broadcast("q0", q, dimension)?,
                broadcast("p0", p, dimension)?,
            ))),
            (None, None) => None,
            _ => return Err(CliError::config("q0 and p0 must be given together")),
        }
    } else {
        r.list("x0")?
            .map(|x| broadcast("x0", x, dimension).map(|x| StudyState::Overdamped(OverdampedState::new(x))))
            .transpose()?
    };
    let start = match r.raw("initial") {
        Some("equilibrium") => Some(Start::Equilibrium),
        Some("fixed") => Some(Start::Fixed(
            fixed.ok_or_else(|| CliError::config("initial = fixed needs x0 (or q0 and p0)"))?,
        )),
        Some(other) => return Err(CliError::config(format!("initial must be fixed or equilibrium, got {other:?}"))),
        None => fixed.map(Start::Fixed),
    };

    let zero_noise = match r.raw("zero_noise") {
        None | Some("false") => false,
        Some("true") => true,
        Some(other) => return Err(CliError::config(format!("zero_noise must be true or false, got {other:?}"))),
    };
    let seed = r
        .raw("seed")
        .unwrap_or("0")
        .parse::<u64>()
        .map_err(|_| CliError::config("`seed` must be an unsigned integer"))?;

    let cfg = ExperimentConfig {
        command,
        model,
        methods,
        horizon: r.f64("T")?,
        h: r.f64("h")?,
        step_sizes: r.list("hs")?.unwrap_or_default(),
        fine_ratio: r.usize("fine_ratio")?,
        realizations: r.usize("realizations")?.unwrap_or(10_000),
        n_steps: r.usize("n_steps")?,
        start,
        energy_bound: r.f64("energy_bound")?,
        seed,
        threads: r.usize("threads")?,
        out: r.raw("out").map(PathBuf::from),
        zero_noise,
        bins: r.usize("bins")?.unwrap_or(100),
        resolved: map.clone(),
    };
    validate(&cfg)?;
    Ok(cfg)
}

/// Checks the fields `command` needs before anything runs.
fn validate(c: &ExperimentConfig) -> CliResult<()> {
    let positive = |key: &str, v: f64| {
        if v > 0.0 {
            Ok(())
        } else {
            Err(CliError::config(format!("`{key}` must be positive")))
        }
    };
    if c.threads == Some(0) {
        return Err(CliError::config("`threads` must be at least 1"));
    }
    if c.zero_noise && c.command != Command::Trajectory {
        return Err(CliError::config("zero_noise only applies to trajectory"));
    }
    match c.command {
        Command::Trajectory | Command::Ergodicity => {
            positive("h", c.require_h()?)?;
            if c.require_n_steps()? == 0 {
                return Err(CliError::config("`n_steps` must be at least 1"));
            }
            c.fixed_start()?;
            if c.command == Command::Trajectory && c.model.dimension() != 1 {
                return Err(CliError::config("trajectory output is one-dimensional"));
            }
            if c.command == Command::Ergodicity && c.bins == 0 {
                return Err(CliError::config("`bins` must be at least 1"));
            }
        }
        Command::Converge | Command::RejectRate => {
            if c.step_sizes.is_empty() {
                return Err(missing("hs"));
            }
            for h in &c.step_sizes {
                positive("hs", *h)?;
            }
            if c.start.is_none() {
                return Err(CliError::config("set initial = equilibrium, or give a fixed start"));
            }
            if c.realizations < 2 {
                return Err(CliError::config("`realizations` must be at least 2"));
            }
            if c.command == Command::Converge {
                positive("T", c.require_horizon()?)?;
            } else if c.require_n_steps()? == 0 {
                return Err(CliError::config("`n_steps` must be at least 1"));
            }
        }
    }
    Ok(())
}
