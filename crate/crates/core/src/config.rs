//! Run configuration files.
//!
//! The format is sectioned `key = value` text. Lists are comma separated, points are `x, y`,
//! and `#` or `;` start a comment, either on its own line or after whitespace following a value.
//!
//! ```text
//! [run]
//! master_seed = 7            # default 0
//! seeds = 50                 # seeds per cell, default 10
//! alpha = 0.1                # consistency sharpness
//! tau = 1.0                  # softmax temperature
//! presets = noisy, oracle    # required, names of [wam.*] sections
//! strategies = single, consensus
//! candidates = 1, 8
//! output_dir = out/noisy     # optional
//! experiments = separability # optional
//!
//! [wam.noisy]
//! formulation = joint        # joint | inverse
//! pred_noise_std = 0.05
//! bias = 0                   # one number, or one entry per latent coordinate
//! collapse = off             # off | on_stall
//! stall_threshold = 1e-6     # with on_stall
//! stall_persistence = 2      # with on_stall
//! policy_noise_std = 0.3
//! value_noise_std = 0.05
//! value_miscalibration = 1
//! competence = 0.6
//! competence_spread = 0.3
//! error_coupling = 2
//!
//! [task.reach_a]
//! family = point_reach       # point_reach | push_block | stall_trap
//! goal = 1.5, 0.5            # required
//! start = 0, 0
//! init_spread = 0.2
//! success_radius = 0.15
//! horizon = 40
//! control_horizon = 1
//! latent_dim = 16
//! noise_std = 0.01
//! dt = 0.1
//! max_speed = 1
//! arena = 2.5
//! block_start = 0.5, 0       # push_block
//! contact_radius = 0.25      # push_block
//! damping = 0.2              # push_block
//! stall_center = 0.6, 0.4    # stall_trap
//! stall_radius = 0.3         # stall_trap
//! stall_factor = 0           # stall_trap
//! ```
//!
//! Omitted model keys take the oracle values and omitted task keys the point-reach defaults.
//! Unknown sections and keys are rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use crate::consistency::ConsistencyConfig;
use crate::envs::{Family, TaskSpec, Vec2};
use crate::error::{Error, Result};
use crate::harness::{fingerprint_bytes, SuiteGrid};
use crate::selection::{Strategy, DEFAULT_TAU};
use crate::wam::{Bias, CollapseMode, Formulation, WamSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Experiment {
    Separability,
    Collapse,
    Utility,
    Scaling,
    Mitigation,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Separability,
        Experiment::Collapse,
        Experiment::Utility,
        Experiment::Scaling,
        Experiment::Mitigation,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Separability => "separability",
            Experiment::Collapse => "collapse",
            Experiment::Utility => "utility",
            Experiment::Scaling => "scaling",
            Experiment::Mitigation => "mitigation",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
            Error::config(format!(
                "unknown experiment `{s}`; expected one of {}",
                names.join(", ")
            ))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub tasks: Vec<TaskSpec>,
    /// Every `[wam.*]` section, in declaration order.
    pub wam_presets: Vec<(String, WamSpec)>,
    /// Presets the suite runs, in the order listed under `[run]`.
    pub presets: Vec<String>,
    pub strategies: Vec<Strategy>,
    pub candidates: Vec<usize>,
    pub tau: f64,
    pub consistency: ConsistencyConfig,
    pub seeds: u64,
    pub master_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub experiments: Vec<Experiment>,
    /// SHA-256 of the configuration bytes.
    pub fingerprint: String,
}

/// Command-line replacements for `[run]` values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub master_seed: Option<u64>,
    pub seeds: Option<u64>,
    pub strategies: Option<Vec<Strategy>>,
    pub candidates: Option<Vec<usize>>,
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
}

const RUN_KEYS: &[&str] = &[
    "master_seed",
    "seeds",
    "alpha",
    "tau",
    "presets",
    "strategies",
    "candidates",
    "output_dir",
    "experiments",
];
const WAM_KEYS: &[&str] = &[
    "formulation",
    "pred_noise_std",
    "bias",
    "collapse",
    "stall_threshold",
    "stall_persistence",
    "policy_noise_std",
    "value_noise_std",
    "value_miscalibration",
    "competence",
    "competence_spread",
    "error_coupling",
];
const TASK_KEYS: &[&str] = &[
    "family",
    "goal",
    "start",
    "init_spread",
    "success_radius",
    "horizon",
    "control_horizon",
    "latent_dim",
    "noise_std",
    "dt",
    "max_speed",
    "arena",
    "block_start",
    "contact_radius",
    "damping",
    "stall_center",
    "stall_radius",
    "stall_factor",
];

/// One parsed section with a way back to source lines for diagnostics.
struct Section<'a> {
    name: String,
    values: BTreeMap<String, String>,
    doc: &'a Doc<'a>,
}

struct Doc<'a> {
    origin: &'a str,
    text: &'a str,
}

impl Doc<'_> {
    /// 1-based line of `key` inside `[section]`, or of the section header when `key` is `None`.
    fn line_of(&self, section: &str, key: Option<&str>) -> Option<usize> {
        let mut current = None;
        for (i, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if let Some(rest) = line.strip_prefix('[') {
                current = rest.strip_suffix(']').map(str::trim);
                if key.is_none() && current == Some(section) {
                    return Some(i + 1);
                }
                continue;
            }
            if let (Some(k), Some(s)) = (key, current) {
                if s == section && line.split(['=', ':']).next().map(str::trim) == Some(k) {
                    return Some(i + 1);
                }
            }
        }
        None
    }

    fn error(&self, section: &str, key: Option<&str>, msg: impl fmt::Display) -> Error {
        let at = match self.line_of(section, key) {
            Some(l) => format!("{}:{l}", self.origin),
            None => self.origin.to_string(),
        };
        let field = match key {
            Some(k) => format!("[{section}] {k}"),
            None => format!("[{section}]"),
        };
        Error::Config(format!("{at}: {field}: {msg}"))
    }
}

impl<'a> Section<'a> {
    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for k in self.values.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(self.doc.error(&self.name, Some(k), "unknown key"));
            }
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>().map_err(|_| {
                    self.doc
                        .error(&self.name, Some(key), format!("expected {what}, got `{v}`"))
                })
            })
            .transpose()
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        match self.parse::<f64>(key, "a number")? {
            Some(v) if !v.is_finite() => Err(self.doc.error(&self.name, Some(key), "must be finite")),
            v => Ok(v),
        }
    }

    fn list<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| {
                split_list(v)
                    .map(|item| {
                        item.parse::<T>().map_err(|_| {
                            self.doc
                                .error(&self.name, Some(key), format!("expected {what}, got `{item}`"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    fn point(&self, key: &str) -> Result<Option<Vec2>> {
        match self.list::<f64>(key, "a number")? {
            None => Ok(None),
            Some(v) if v.len() == 2 && v.iter().all(|x| x.is_finite()) => Ok(Some([v[0], v[1]])),
            Some(_) => Err(self.doc.error(&self.name, Some(key), "expected a point `x, y`")),
        }
    }

    fn require<T>(&self, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| self.doc.error(&self.name, Some(key), "required key is missing"))
    }
}

fn strip_comment(v: &str) -> &str {
    let cut = v
        .char_indices()
        .find(|&(i, c)| (c == '#' || c == ';') && (i == 0 || v[..i].ends_with(char::is_whitespace)))
        .map_or(v.len(), |(i, _)| i);
    v[..cut].trim()
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let text =
            std::str::from_utf8(&bytes).map_err(|_| Error::Config(format!("{}: not valid UTF-8", path.display())))?;
        Self::parse(text, &path.display().to_string())
    }

    /// Parses configuration text; `origin` names the source in diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let doc = Doc { origin, text };
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("{origin}:{}: {}", e.line, e.msg)))?;

        let mut run = None;
        let mut wams = vec![];
        let mut tasks = vec![];
        let mut seen = BTreeSet::new();
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::Config(format!("{origin}: key `{k}` appears before any section")));
                }
                continue;
            };
            let name = name.trim().to_string();
            if !seen.insert(name.clone()) {
                return Err(doc.error(&name, None, "duplicate section"));
            }
            let mut values = BTreeMap::new();
            for (k, v) in props.iter() {
                if values
                    .insert(k.trim().to_string(), strip_comment(v).to_string())
                    .is_some()
                {
                    return Err(doc.error(&name, Some(k.trim()), "duplicate key"));
                }
            }
            let section = Section {
                name: name.clone(),
                values,
                doc: &doc,
            };
            if name == "run" {
                run = Some(section);
            } else if let Some(id) = name.strip_prefix("wam.") {
                wams.push((id.to_string(), section));
            } else if let Some(id) = name.strip_prefix("task.") {
                tasks.push((id.to_string(), section));
            } else {
                return Err(doc.error(
                    &name,
                    None,
                    "unknown section; expected [run], [wam.<name>] or [task.<id>]",
                ));
            }
        }

        let run = run.ok_or_else(|| Error::Config(format!("{origin}: missing [run] section")))?;
        let wam_presets = wams
            .iter()
            .map(|(id, s)| Ok((id.clone(), parse_wam(s)?)))
            .collect::<Result<Vec<_>>>()?;
        let tasks = tasks
            .iter()
            .map(|(id, s)| parse_task(id, s))
            .collect::<Result<Vec<_>>>()?;
        if tasks.is_empty() {
            return Err(Error::Config(format!("{origin}: no [task.<id>] sections")));
        }

        run.check_keys(RUN_KEYS)?;
        let presets: Vec<String> = run.require("presets", run.list("presets", "a preset name")?)?;
        for p in &presets {
            if !wam_presets.iter().any(|(n, _)| n == p) {
                return Err(run.doc.error(
                    "run",
                    Some("presets"),
                    format!("preset `{p}` is not defined by any [wam.{p}] section"),
                ));
            }
        }
        let alpha = run.number("alpha")?.unwrap_or(crate::consistency::DEFAULT_ALPHA);
        let consistency = ConsistencyConfig::with_alpha(alpha).map_err(|e| run.doc.error("run", Some("alpha"), e))?;
        let cfg = RunConfig {
            tasks,
            wam_presets,
            presets,
            strategies: run
                .list("strategies", "a strategy name")?
                .unwrap_or(vec![Strategy::Single]),
            candidates: run.list("candidates", "a positive integer")?.unwrap_or(vec![1]),
            tau: run.number("tau")?.unwrap_or(DEFAULT_TAU),
            consistency,
            seeds: run.parse("seeds", "a positive integer")?.unwrap_or(10),
            master_seed: run.parse("master_seed", "an unsigned integer")?.unwrap_or(0),
            output_dir: run.raw("output_dir").filter(|s| !s.is_empty()).map(PathBuf::from),
            experiments: run.list("experiments", "an experiment name")?.unwrap_or_default(),
            fingerprint: fingerprint_bytes(text.as_bytes()),
        };
        cfg.grid().map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.master_seed {
            self.master_seed = s;
        }
        if let Some(s) = o.seeds {
            self.seeds = s;
        }
        if let Some(s) = &o.strategies {
            self.strategies = s.clone();
        }
        if let Some(c) = &o.candidates {
            self.candidates = c.clone();
        }
        if let Some(a) = o.alpha {
            self.consistency = ConsistencyConfig::with_alpha(a)?;
        }
        if let Some(t) = o.tau {
            self.tau = t;
        }
        self.grid().map(|_| ())
    }

    pub fn preset(&self, name: &str) -> Option<&WamSpec> {
        self.wam_presets.iter().find(|(n, _)| n == name).map(|(_, w)| w)
    }

    /// The suite grid described by `[run]`, validated.
    pub fn grid(&self) -> Result<SuiteGrid> {
        let presets = self
            .presets
            .iter()
            .map(|p| {
                self.preset(p)
                    .map(|w| (p.clone(), w.clone()))
                    .ok_or_else(|| Error::config(format!("preset `{p}` is not defined")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ids = BTreeSet::new();
        for t in &self.tasks {
            if !ids.insert(&t.task_id) {
                return Err(Error::config(format!("duplicate task id `{}`", t.task_id)));
            }
        }
        let grid = SuiteGrid {
            tasks: self.tasks.clone(),
            presets,
            strategies: dedup(&self.strategies),
            candidates: dedup(&self.candidates),
            tau: self.tau,
            consistency: self.consistency,
            seeds: self.seeds,
            master_seed: self.master_seed,
        };
        grid.validate()?;
        Ok(grid)
    }
}

/// Candidate counts swept by the scaling experiment.
pub const SCALING_CANDIDATES: [usize; 4] = [1, 2, 4, 8];

impl RunConfig {
    /// The grid one experiment runs. Scaling sweeps [`SCALING_CANDIDATES`]; every other
    /// experiment gets the single-strategy baseline added when the config leaves it out.
    pub fn experiment_grid(&self, e: Experiment) -> Result<SuiteGrid> {
        let mut g = self.grid()?;
        match e {
            Experiment::Scaling => {
                if !g.strategies.contains(&Strategy::ConsistencyConsensus) {
                    return Err(Error::config("the scaling experiment needs the consensus strategy"));
                }
                g.candidates = SCALING_CANDIDATES.to_vec();
            }
            Experiment::Mitigation if g.strategies.iter().all(|&s| s == Strategy::Single) => {
                return Err(Error::config(
                    "the mitigation experiment needs a strategy besides single",
                ));
            }
            _ => {}
        }
        if e != Experiment::Scaling && !g.strategies.contains(&Strategy::Single) {
            g.strategies.insert(0, Strategy::Single);
        }
        Ok(g)
    }
}

fn dedup<T: Ord + Copy>(xs: &[T]) -> Vec<T> {
    let mut seen = BTreeSet::new();
    xs.iter().copied().filter(|x| seen.insert(*x)).collect()
}

fn parse_wam(s: &Section<'_>) -> Result<WamSpec> {
    s.check_keys(WAM_KEYS)?;
    let base = WamSpec::oracle();
    let formulation = match s.raw("formulation") {
        None | Some("joint") => Formulation::JointPrediction,
        Some("inverse") => Formulation::InverseDynamics,
        Some(other) => {
            return Err(s.doc.error(
                &s.name,
                Some("formulation"),
                format!("expected joint or inverse, got `{other}`"),
            ))
        }
    };
    let bias = match s.list::<f64>("bias", "a number")? {
        None => Bias::Zero,
        Some(v) if v.len() == 1 && v[0] == 0.0 => Bias::Zero,
        Some(v) if v.len() == 1 => Bias::Constant(v[0]),
        Some(v) => Bias::Vector(v),
    };
    let threshold = s.number("stall_threshold")?;
    let persistence: Option<usize> = s.parse("stall_persistence", "a positive integer")?;
    let collapse = match s.raw("collapse") {
        None | Some("off") => {
            if threshold.is_some() || persistence.is_some() {
                return Err(s
                    .doc
                    .error(&s.name, Some("collapse"), "stall settings given but collapse is off"));
            }
            CollapseMode::Off
        }
        Some("on_stall") => CollapseMode::OnStall {
            threshold: s.require("stall_threshold", threshold)?,
            persistence: s.require("stall_persistence", persistence)?,
        },
        Some(other) => {
            return Err(s.doc.error(
                &s.name,
                Some("collapse"),
                format!("expected off or on_stall, got `{other}`"),
            ))
        }
    };
    let wam = WamSpec {
        formulation,
        bias,
        collapse,
        pred_noise_std: s.number("pred_noise_std")?.unwrap_or(base.pred_noise_std),
        policy_noise_std: s.number("policy_noise_std")?.unwrap_or(base.policy_noise_std),
        value_noise_std: s.number("value_noise_std")?.unwrap_or(base.value_noise_std),
        value_miscalibration: s.number("value_miscalibration")?.unwrap_or(base.value_miscalibration),
        competence: s.number("competence")?.unwrap_or(base.competence),
        competence_spread: s.number("competence_spread")?.unwrap_or(base.competence_spread),
        error_coupling: s.number("error_coupling")?.unwrap_or(base.error_coupling),
    };
    wam.validate(None).map_err(|e| s.doc.error(&s.name, None, e))?;
    Ok(wam)
}

fn parse_task(id: &str, s: &Section<'_>) -> Result<TaskSpec> {
    s.check_keys(TASK_KEYS)?;
    let goal = s.require("goal", s.point("goal")?)?;
    let base = TaskSpec::point_reach(id, goal);
    let family_name = s.raw("family").unwrap_or("point_reach");
    let only = |keys: &[&str], family: &str| -> Result<()> {
        for k in keys {
            if s.raw(k).is_some() {
                return Err(s.doc.error(&s.name, Some(k), format!("not a {family} setting")));
            }
        }
        Ok(())
    };
    const PUSH: &[&str] = &["block_start", "contact_radius", "damping"];
    const STALL: &[&str] = &["stall_center", "stall_radius", "stall_factor"];
    let family = match family_name {
        "point_reach" => {
            only(PUSH, family_name)?;
            only(STALL, family_name)?;
            Family::PointReach
        }
        "push_block" => {
            only(STALL, family_name)?;
            Family::PushBlock {
                block_start: s.require("block_start", s.point("block_start")?)?,
                contact_radius: s.number("contact_radius")?.unwrap_or(0.25),
                damping: s.number("damping")?.unwrap_or(0.2),
            }
        }
        "stall_trap" => {
            only(PUSH, family_name)?;
            Family::StallTrap {
                center: s.require("stall_center", s.point("stall_center")?)?,
                radius: s.require("stall_radius", s.number("stall_radius")?)?,
                factor: s.number("stall_factor")?.unwrap_or(0.0),
            }
        }
        other => {
            return Err(s.doc.error(
                &s.name,
                Some("family"),
                format!("expected point_reach, push_block or stall_trap, got `{other}`"),
            ))
        }
    };
    let task = TaskSpec {
        family,
        start: s.point("start")?.unwrap_or(base.start),
        init_spread: s.number("init_spread")?.unwrap_or(base.init_spread),
        success_radius: s.number("success_radius")?.unwrap_or(base.success_radius),
        episode_horizon: s
            .parse("horizon", "a positive integer")?
            .unwrap_or(base.episode_horizon),
        control_horizon: s
            .parse("control_horizon", "a positive integer")?
            .unwrap_or(base.control_horizon),
        latent_dim: s.parse("latent_dim", "a positive integer")?.unwrap_or(base.latent_dim),
        noise_std: s.number("noise_std")?.unwrap_or(base.noise_std),
        dt: s.number("dt")?.unwrap_or(base.dt),
        max_speed: s.number("max_speed")?.unwrap_or(base.max_speed),
        arena: s.number("arena")?.unwrap_or(base.arena),
        ..base
    };
    task.validate().map_err(|e| s.doc.error(&s.name, None, e))?;
    Ok(task)
}
