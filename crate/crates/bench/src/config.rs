//! Experiment config files: a flat key-value format with one global section
//! followed by `[solver NAME]` sections.
//!
//! Grammar, line by line: `#` starts a comment (whole line or trailing),
//! blank lines are skipped, `[solver NAME]` opens a solver section, and
//! everything else must be `key = value`. The `experiment` key selects the
//! problem family and installs its default parameters; later keys override
//! them. Unknown keys are errors so typos cannot silently fall back to
//! defaults.
//!
//! Global keys: `experiment` (ncpd | nmf | matrec | inexact_rgd |
//! stiefel_proxgrad), `name` (output file prefix), `trials`, `base_seed`,
//! `output_dir`, `timing` (wall | none), and the problem parameters
//! `rows`, `cols`, `rank`, `measurements`, `dims` (three integers),
//! `cp_rank`, `inner`, `l1_weight`, `nonneg`.
//!
//! Solver keys: `kind` (tbmm | block_pgd | niht | rgd; defaults to the
//! section name's prefix), `max_iters`, `step` (`constant A` |
//! `linesearch GAMMA RHO` | `theorem M2`), `lambda` (`lipschitz SAFETY` |
//! `fixed V1 V2 ...`), `subproblem` (`exact` | `inexact TOL0 BUDGET`),
//! `noise` (`none` | `grad C`), `time_limit`, `stationarity_tol`.

use std::path::{Path, PathBuf};

use tbmm::solvers::{LambdaMode, NoiseMode, SolverConfig, StepMode, SubproblemMode};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Ncpd,
    Nmf,
    Matrec,
    InexactRgd,
    StiefelProxgrad,
}

impl ExperimentKind {
    pub fn token(self) -> &'static str {
        match self {
            ExperimentKind::Ncpd => "ncpd",
            ExperimentKind::Nmf => "nmf",
            ExperimentKind::Matrec => "matrec",
            ExperimentKind::InexactRgd => "inexact_rgd",
            ExperimentKind::StiefelProxgrad => "stiefel_proxgrad",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ncpd" => ExperimentKind::Ncpd,
            "nmf" => ExperimentKind::Nmf,
            "matrec" => ExperimentKind::Matrec,
            "inexact_rgd" => ExperimentKind::InexactRgd,
            "stiefel_proxgrad" => ExperimentKind::StiefelProxgrad,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Tbmm,
    BlockPgd,
    Niht,
    Rgd,
}

impl SolverKind {
    pub fn token(self) -> &'static str {
        match self {
            SolverKind::Tbmm => "tbmm",
            SolverKind::BlockPgd => "block_pgd",
            SolverKind::Niht => "niht",
            SolverKind::Rgd => "rgd",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "tbmm" => SolverKind::Tbmm,
            "block_pgd" => SolverKind::BlockPgd,
            "niht" => SolverKind::Niht,
            "rgd" => SolverKind::Rgd,
            _ => return None,
        })
    }

    /// Section names like `rgd_c10` imply their kind by prefix.
    fn from_section_name(name: &str) -> Option<Self> {
        for kind in [
            SolverKind::BlockPgd,
            SolverKind::Tbmm,
            SolverKind::Niht,
            SolverKind::Rgd,
        ] {
            if name == kind.token() || name.starts_with(&format!("{}_", kind.token())) {
                return Some(kind);
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimingMode {
    /// Record wall-clock elapsed seconds per iteration.
    Wall,
    /// Write elapsed_s as zero so repeated runs are byte-identical.
    None,
}

/// Problem parameters. Which fields matter depends on the experiment; the
/// rest keep their defaults and are ignored by the problem constructor.
#[derive(Debug, Clone)]
pub struct ProblemParams {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub measurements: usize,
    pub dims: (usize, usize, usize),
    pub cp_rank: usize,
    pub inner: usize,
    pub l1_weight: f64,
    pub nonneg: bool,
}

#[derive(Debug, Clone)]
pub struct SolverEntry {
    pub name: String,
    pub kind: SolverKind,
    pub config: SolverConfig,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Output file prefix, e.g. `matrec` gives `matrec_tbmm_trial0.csv`.
    pub name: String,
    pub params: ProblemParams,
    pub solvers: Vec<SolverEntry>,
    pub trials: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub timing: TimingMode,
}

impl ExperimentConfig {
    /// Family defaults: the parameter values used throughout the recorded
    /// experiments. Solvers start empty.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let params = match experiment {
            ExperimentKind::Matrec => ProblemParams {
                rows: 50,
                cols: 12,
                rank: 3,
                measurements: 450,
                dims: (0, 0, 0),
                cp_rank: 0,
                inner: 0,
                l1_weight: 0.0,
                nonneg: false,
            },
            ExperimentKind::InexactRgd => ProblemParams {
                measurements: 300,
                ..Self::defaults(ExperimentKind::Matrec).params
            },
            ExperimentKind::Ncpd => ProblemParams {
                rows: 0,
                cols: 0,
                rank: 2,
                measurements: 0,
                dims: (50, 40, 30),
                cp_rank: 10,
                inner: 0,
                l1_weight: 1e-2,
                nonneg: false,
            },
            ExperimentKind::Nmf => ProblemParams {
                rows: 50,
                cols: 40,
                rank: 5,
                measurements: 0,
                dims: (0, 0, 0),
                cp_rank: 0,
                inner: 10,
                l1_weight: 1e-2,
                nonneg: false,
            },
            ExperimentKind::StiefelProxgrad => ProblemParams {
                rows: 30,
                cols: 5,
                rank: 0,
                measurements: 0,
                dims: (0, 0, 0),
                cp_rank: 0,
                inner: 0,
                l1_weight: 1e-2,
                nonneg: false,
            },
        };
        ExperimentConfig {
            experiment,
            name: experiment.token().to_string(),
            params,
            solvers: Vec::new(),
            trials: 10,
            base_seed: 2024,
            output_dir: PathBuf::from("out"),
            timing: TimingMode::Wall,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials < 1 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        if self.solvers.is_empty() {
            return Err(ConfigError::Invalid("no solver sections".into()));
        }
        let mut names = std::collections::HashSet::new();
        for entry in &self.solvers {
            if !names.insert(entry.name.as_str()) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate solver section [solver {}]",
                    entry.name
                )));
            }
            let ok = match entry.kind {
                SolverKind::Tbmm => true,
                SolverKind::BlockPgd => !matches!(
                    self.experiment,
                    ExperimentKind::StiefelProxgrad
                ),
                // Both need the sensing operator of the recovery family.
                SolverKind::Niht | SolverKind::Rgd => matches!(
                    self.experiment,
                    ExperimentKind::Matrec | ExperimentKind::InexactRgd
                ),
            };
            if !ok {
                return Err(ConfigError::Invalid(format!(
                    "solver {} ({}) does not apply to experiment {}",
                    entry.name,
                    entry.kind.token(),
                    self.experiment.token()
                )));
            }
            if !matches!(entry.config.noise, NoiseMode::None) && entry.kind != SolverKind::Rgd {
                return Err(ConfigError::Invalid(format!(
                    "solver {}: gradient noise is only meaningful for rgd",
                    entry.name
                )));
            }
        }
        Ok(())
    }
}

pub fn parse_file(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_str(&text, &path.display().to_string())
}

/// Lines of (line number, content) with comments and blanks stripped.
fn meaningful_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(idx, raw)| {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            None
        } else {
            Some((idx + 1, line))
        }
    })
}

pub fn parse_str(text: &str, path: &str) -> Result<ExperimentConfig, ConfigError> {
    let err = |line: usize, msg: String| ConfigError::Parse {
        path: path.to_string(),
        line,
        msg,
    };

    // The experiment key decides the defaults, so find it first.
    let mut experiment = None;
    for (line, content) in meaningful_lines(text) {
        if content.starts_with('[') {
            break;
        }
        if let Some((key, value)) = split_kv(content) {
            if key == "experiment" {
                if experiment.is_some() {
                    return Err(err(line, "experiment set twice".into()));
                }
                experiment = Some(ExperimentKind::parse(value).ok_or_else(|| {
                    err(line, format!("unknown experiment {value:?}"))
                })?);
            }
        }
    }
    let experiment = experiment.ok_or_else(|| {
        ConfigError::Invalid(format!("{path}: missing experiment key"))
    })?;
    let mut cfg = ExperimentConfig::defaults(experiment);

    struct Pending {
        name: String,
        kind: Option<SolverKind>,
        config: SolverConfig,
    }
    let finish = |p: Pending| -> Result<SolverEntry, ConfigError> {
        let kind = p.kind.ok_or_else(|| {
            ConfigError::Invalid(format!(
                "{path}: solver section [{}] has no recognizable kind; add a kind key",
                p.name
            ))
        })?;
        Ok(SolverEntry {
            name: p.name,
            kind,
            config: p.config,
        })
    };

    // Section being filled, or None while in the global section.
    let mut current: Option<Pending> = None;
    for (line, content) in meaningful_lines(text) {
        if let Some(inner) = content.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| err(line, format!("unterminated section {content:?}")))?
                .trim();
            let name = inner
                .strip_prefix("solver")
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| {
                    err(line, format!("expected [solver NAME], got [{inner}]"))
                })?;
            if let Some(done) = current.take() {
                cfg.solvers.push(finish(done)?);
            }
            current = Some(Pending {
                name: name.to_string(),
                kind: SolverKind::from_section_name(name),
                config: SolverConfig::default(),
            });
            continue;
        }
        let (key, value) =
            split_kv(content).ok_or_else(|| err(line, format!("expected key = value, got {content:?}")))?;
        match current.as_mut() {
            None => apply_global(&mut cfg, key, value).map_err(|m| err(line, m))?,
            Some(entry) => {
                if key == "kind" {
                    entry.kind = Some(
                        SolverKind::parse(value)
                            .ok_or_else(|| err(line, format!("unknown solver kind {value:?}")))?,
                    );
                } else {
                    apply_solver(&mut entry.config, key, value).map_err(|m| err(line, m))?;
                }
            }
        }
    }
    if let Some(done) = current.take() {
        cfg.solvers.push(finish(done)?);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn split_kv(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim(), v.trim()))
}

fn apply_global(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "experiment" => {} // consumed by the first pass
        "name" => cfg.name = value.to_string(),
        "trials" => cfg.trials = parse_num(key, value)?,
        "base_seed" => cfg.base_seed = parse_num(key, value)?,
        "output_dir" => cfg.output_dir = PathBuf::from(value),
        "timing" => {
            cfg.timing = match value {
                "wall" => TimingMode::Wall,
                "none" => TimingMode::None,
                _ => return Err(format!("timing must be wall or none, got {value:?}")),
            }
        }
        "rows" => cfg.params.rows = parse_num(key, value)?,
        "cols" => cfg.params.cols = parse_num(key, value)?,
        "rank" => cfg.params.rank = parse_num(key, value)?,
        "measurements" => cfg.params.measurements = parse_num(key, value)?,
        "dims" => {
            let parts: Vec<usize> = value
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| parse_num("dims", s))
                .collect::<Result<_, _>>()?;
            if parts.len() != 3 {
                return Err(format!("dims needs three integers, got {value:?}"));
            }
            cfg.params.dims = (parts[0], parts[1], parts[2]);
        }
        "cp_rank" => cfg.params.cp_rank = parse_num(key, value)?,
        "inner" => cfg.params.inner = parse_num(key, value)?,
        "l1_weight" => cfg.params.l1_weight = parse_num(key, value)?,
        "nonneg" => {
            cfg.params.nonneg = match value {
                "true" => true,
                "false" => false,
                _ => return Err(format!("nonneg must be true or false, got {value:?}")),
            }
        }
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

fn apply_solver(sc: &mut SolverConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "max_iters" => sc.max_iters = parse_num(key, value)?,
        "step" => {
            let t: Vec<&str> = value.split_whitespace().collect();
            sc.step_mode = match t.as_slice() {
                ["constant", a] => StepMode::Constant(parse_num("step", a)?),
                ["linesearch", g, r] => StepMode::LineSearch {
                    gamma: parse_num("step", g)?,
                    rho: parse_num("step", r)?,
                },
                ["theorem", m2] => StepMode::TheoremRate {
                    m2: parse_num("step", m2)?,
                },
                _ => return Err(format!("bad step value {value:?}")),
            };
        }
        "lambda" => {
            let t: Vec<&str> = value.split_whitespace().collect();
            sc.lambda_mode = match t.as_slice() {
                ["lipschitz", s] => LambdaMode::FromLipschitz {
                    safety: parse_num("lambda", s)?,
                },
                ["fixed", rest @ ..] if !rest.is_empty() => LambdaMode::Fixed(
                    rest.iter()
                        .map(|v| parse_num("lambda", v))
                        .collect::<Result<_, _>>()?,
                ),
                _ => return Err(format!("bad lambda value {value:?}")),
            };
        }
        "subproblem" => {
            let t: Vec<&str> = value.split_whitespace().collect();
            sc.subproblem_mode = match t.as_slice() {
                ["exact"] => SubproblemMode::Exact,
                ["inexact", tol0, budget] => SubproblemMode::Inexact {
                    tol0: parse_num("subproblem", tol0)?,
                    budget: parse_num("subproblem", budget)?,
                },
                _ => return Err(format!("bad subproblem value {value:?}")),
            };
        }
        "noise" => {
            let t: Vec<&str> = value.split_whitespace().collect();
            sc.noise = match t.as_slice() {
                ["none"] => NoiseMode::None,
                ["grad", c] => NoiseMode::GradNoise {
                    c: parse_num("noise", c)?,
                },
                _ => return Err(format!("bad noise value {value:?}")),
            };
        }
        "time_limit" => sc.time_limit = Some(parse_num(key, value)?),
        "stationarity_tol" => sc.stationarity_tol = Some(parse_num(key, value)?),
        _ => return Err(format!("unknown solver key {key:?}")),
    }
    Ok(())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse {key} value {value:?}"))
}
