//! Flat `key = value` run configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use simpleq::observables::ObservableSettings;
use simpleq::potentials::{ExplicitSolutionSpec, PotentialSpec, PotentialTable};
use simpleq::solver::{logspace, Scheme, SolverConfig, SweepOptions};
use simpleq::{Error, Result};

/// Every key the parser understands.
pub const KNOWN_KEYS: &[&str] = &[
    "mode",
    "potential",
    "amp",
    "width",
    "b",
    "c",
    "explicit-e",
    "unproven-region",
    "table",
    "e",
    "e-min",
    "e-max",
    "e-steps",
    "e-spacing",
    "rho",
    "grid-n",
    "r-max",
    "scheme",
    "tol",
    "inner-tol",
    "max-iter",
    "inner-max-iter",
    "fallback",
    "fd",
    "fd-step",
    "warm-start",
    "observables",
    "audit",
    "a0",
    "seed",
    "audit-samples",
    "momentum-points",
    "decay-extension",
    "out",
    "format",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Solve,
    Sweep,
    Invert,
    Observables,
    Audit,
    ValidateExplicit,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Sweep => "sweep",
            Mode::Invert => "invert",
            Mode::Observables => "observables",
            Mode::Audit => "audit",
            Mode::ValidateExplicit => "validate-explicit",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "solve" => Ok(Mode::Solve),
            "sweep" => Ok(Mode::Sweep),
            "invert" => Ok(Mode::Invert),
            "observables" => Ok(Mode::Observables),
            "audit" => Ok(Mode::Audit),
            "validate-explicit" => Ok(Mode::ValidateExplicit),
            other => Err(format!(
                "unknown mode '{other}' (expected solve, sweep, invert, observables, audit or validate-explicit)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRange {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
    pub spacing: Spacing,
}

impl EnergyRange {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        match self.spacing {
            Spacing::Log => logspace(self.min, self.max, self.steps),
            Spacing::Linear => (0..self.steps)
                .map(|i| self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64)
                .collect(),
        }
    }
}

/// What the run holds fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Energy(f64),
    Energies(EnergyRange),
    Density(f64),
}

impl Target {
    /// Smallest energy the grid has to resolve, when known up front.
    pub fn e_min(&self) -> Option<f64> {
        match self {
            Target::Energy(e) => Some(*e),
            Target::Energies(r) => Some(r.min),
            Target::Density(_) => None,
        }
    }
}

/// A potential as given in the configuration. Tables are read in [`PotentialInput::resolve`].
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialInput {
    Spec(PotentialSpec),
    Table(PathBuf),
}

impl PotentialInput {
    pub fn resolve(&self) -> Result<PotentialSpec> {
        match self {
            PotentialInput::Spec(s) => Ok(s.clone()),
            PotentialInput::Table(path) => Ok(PotentialSpec::Tabulated {
                source: path.display().to_string(),
                table: PotentialTable::read(path)?,
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub potential: PotentialInput,
    pub target: Target,
    pub solver: SolverConfig,
    pub sweep: SweepOptions,
    pub observables: ObservableSettings,
    /// Add per-row observables to a sweep.
    pub sweep_observables: bool,
    /// Add per-row bound audits to a sweep.
    pub sweep_audit: bool,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    /// The effective keys, for the report metadata.
    pub echo: BTreeMap<String, String>,
}

fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('_', "-")
}

/// Split `key = value` lines, dropping `#` comments and blank lines.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => {
                out.push((normalize_key(k), v.trim().to_string()));
            }
            _ => errors.push(format!("line {}: expected key = value, got '{line}'", i + 1)),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(Error::ConfigList(errors))
    }
}

/// Parse and validate a configuration file's text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    RunConfig::from_pairs(parse_pairs(text)?)
}

struct Fields {
    map: BTreeMap<String, String>,
    used: BTreeSet<String>,
    errors: Vec<String>,
}

impl Fields {
    fn has(&self, k: &str) -> bool {
        self.map.contains_key(k)
    }

    fn raw(&mut self, k: &str) -> Option<String> {
        let v = self.map.get(k).cloned();
        if v.is_some() {
            self.used.insert(k.to_string());
        }
        v
    }

    fn parsed<T: FromStr>(&mut self, k: &str, what: &str) -> Option<T> {
        let raw = self.raw(k)?;
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(format!("{k}: expected {what}, got '{raw}'"));
                None
            }
        }
    }

    fn f64(&mut self, k: &str) -> Option<f64> {
        let v: f64 = self.parsed(k, "a number")?;
        if v.is_finite() {
            Some(v)
        } else {
            self.errors.push(format!("{k}: expected a finite number, got {v}"));
            None
        }
    }

    fn positive(&mut self, k: &str) -> Option<f64> {
        let v = self.f64(k)?;
        if v > 0.0 {
            Some(v)
        } else {
            self.errors.push(format!("{k}: must be positive, got {v}"));
            None
        }
    }

    fn usize(&mut self, k: &str) -> Option<usize> {
        self.parsed(k, "a non-negative integer")
    }

    fn bool(&mut self, k: &str) -> Option<bool> {
        let raw = self.raw(k)?;
        match raw.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Some(true),
            "false" | "no" | "off" | "0" => Some(false),
            _ => {
                self.errors.push(format!("{k}: expected true or false, got '{raw}'"));
                None
            }
        }
    }

    fn require(&mut self, k: &str, context: &str) -> Option<f64> {
        if !self.has(k) {
            self.errors.push(format!("missing required key '{k}' for {context}"));
            return None;
        }
        self.positive(k)
    }
}

impl RunConfig {
    /// Build a configuration from `(key, value)` pairs; later pairs override earlier ones.
    ///
    /// All problems are collected into one [`Error::ConfigList`].
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut f = Fields {
            map: BTreeMap::new(),
            used: BTreeSet::new(),
            errors: Vec::new(),
        };
        for (k, v) in pairs {
            f.map.insert(normalize_key(k.as_ref()), v.as_ref().trim().to_string());
        }
        for k in f.map.keys() {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                f.errors.push(format!("unknown key '{k}'"));
            }
        }

        let mode = match f.raw("mode") {
            None => {
                f.errors.push("missing required key 'mode'".into());
                None
            }
            Some(m) => match m.parse::<Mode>() {
                Ok(m) => Some(m),
                Err(e) => {
                    f.errors.push(e);
                    None
                }
            },
        };

        let target = mode.and_then(|m| read_target(&mut f, m));
        let potential = mode.and_then(|m| read_potential(&mut f, m, target.as_ref()));

        let mut solver = SolverConfig::default();
        solver.grid.n = f.usize("grid-n");
        solver.grid.r_max = f.positive("r-max");
        if let Some(s) = f.raw("scheme") {
            match s.parse::<Scheme>() {
                Ok(s) => solver.scheme = s,
                Err(e) => f.errors.push(format!("scheme: {e}")),
            }
        }
        if let Some(t) = f.positive("tol") {
            solver.outer_tol = t;
        }
        if let Some(t) = f.positive("inner-tol") {
            solver.inner.tol = t;
        }
        if let Some(m) = f.usize("max-iter") {
            solver.max_outer = m;
        }
        if let Some(m) = f.usize("inner-max-iter") {
            solver.inner.max_iter = m;
        }
        if let Some(b) = f.bool("fallback") {
            solver.fallback = b;
        }
        if let Err(e) = solver.validate() {
            f.errors.push(e.to_string());
        }

        let mut sweep = SweepOptions::default();
        let mut sweep_observables = false;
        let mut sweep_audit = false;
        if mode == Some(Mode::Sweep) {
            if let Some(b) = f.bool("fd") {
                sweep.finite_differences = b;
            }
            if let Some(h) = f.positive("fd-step") {
                sweep.fd_step = h;
            }
            if let Some(b) = f.bool("warm-start") {
                sweep.warm_start = b;
            }
            sweep_observables = f.bool("observables").unwrap_or(true);
            sweep_audit = f.bool("audit").unwrap_or(false);
        }

        let mut observables = ObservableSettings::default();
        observables.a0 = f.positive("a0");
        if let Some(s) = f.parsed::<u64>("seed", "a non-negative integer") {
            observables.audit_seed = s;
        }
        if let Some(n) = f.usize("audit-samples") {
            observables.audit_samples = n;
        }
        if let Some(n) = f.usize("momentum-points") {
            if n < 2 {
                f.errors.push(format!("momentum-points: need at least 2, got {n}"));
            }
            observables.momentum_points = n;
        }
        if let Some(n) = f.usize("decay-extension") {
            if n < 1 {
                f.errors.push("decay-extension: must be at least 1".into());
            }
            observables.decay_extension = n;
        }

        let out = f.raw("out").map(PathBuf::from);
        let format = match f.raw("format") {
            None => OutputFormat::Csv,
            Some(s) => s.parse().unwrap_or_else(|e| {
                f.errors.push(e);
                OutputFormat::Csv
            }),
        };

        if let Some(m) = mode {
            let unused: Vec<String> = f
                .map
                .keys()
                .filter(|k| KNOWN_KEYS.contains(&k.as_str()) && !f.used.contains(*k))
                .cloned()
                .collect();
            for k in unused {
                f.errors.push(format!("key '{k}' is not used by mode {m} with this potential"));
            }
        }

        if !f.errors.is_empty() {
            return Err(Error::ConfigList(f.errors));
        }
        Ok(RunConfig {
            mode: mode.expect("mode checked"),
            potential: potential.expect("potential checked"),
            target: target.expect("target checked"),
            solver,
            sweep,
            observables,
            sweep_observables,
            sweep_audit,
            out,
            format,
            echo: f.map,
        })
    }

    /// The configuration file text plus command-line overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = match path {
            Some(p) => parse_pairs(&std::fs::read_to_string(p)?)?,
            None => Vec::new(),
        };
        pairs.extend(overrides.iter().map(|(k, v)| (normalize_key(k), v.clone())));
        Self::from_pairs(pairs)
    }
}

fn read_target(f: &mut Fields, mode: Mode) -> Option<Target> {
    let ctx = format!("mode {mode}");
    match mode {
        Mode::Solve | Mode::Audit | Mode::ValidateExplicit => f.require("e", &ctx).map(Target::Energy),
        Mode::Invert => f.require("rho", &ctx).map(Target::Density),
        Mode::Observables => match (f.has("e"), f.has("rho")) {
            (true, false) => f.positive("e").map(Target::Energy),
            (false, true) => f.positive("rho").map(Target::Density),
            (true, true) => {
                f.raw("e");
                f.raw("rho");
                f.errors.push("mode observables takes either e or rho, not both".into());
                None
            }
            (false, false) => {
                f.errors.push("missing required key 'e' or 'rho' for mode observables".into());
                None
            }
        },
        Mode::Sweep => {
            let range = ["e-min", "e-max", "e-steps"].iter().any(|k| f.has(k));
            if f.has("e") && !range {
                return f.positive("e").map(|e| {
                    Target::Energies(EnergyRange {
                        min: e,
                        max: e,
                        steps: 1,
                        spacing: Spacing::Log,
                    })
                });
            }
            if f.has("e") {
                f.raw("e");
                f.errors.push("mode sweep takes either e or e-min/e-max/e-steps, not both".into());
            }
            let min = f.require("e-min", &ctx);
            let max = f.require("e-max", &ctx);
            let steps = if f.has("e-steps") {
                f.usize("e-steps")
            } else {
                f.errors.push(format!("missing required key 'e-steps' for {ctx}"));
                None
            };
            let spacing = match f.raw("e-spacing").as_deref().map(str::to_ascii_lowercase) {
                None => Spacing::Log,
                Some(s) if s == "log" => Spacing::Log,
                Some(s) if s == "linear" => Spacing::Linear,
                Some(s) => {
                    f.errors.push(format!("e-spacing: expected log or linear, got '{s}'"));
                    Spacing::Log
                }
            };
            let (min, max, steps) = (min?, max?, steps?);
            if steps == 0 {
                f.errors.push("e-steps must be at least 1".into());
                return None;
            }
            if steps > 1 && !(max > min) {
                f.errors.push(format!("e-max ({max}) must exceed e-min ({min})"));
                return None;
            }
            if steps == 1 && max != min {
                f.errors.push("e-steps = 1 needs e-min = e-max".into());
                return None;
            }
            Some(Target::Energies(EnergyRange {
                min,
                max,
                steps,
                spacing,
            }))
        }
    }
}

fn read_potential(f: &mut Fields, mode: Mode, target: Option<&Target>) -> Option<PotentialInput> {
    let kind = f.raw("potential").map(|s| s.to_ascii_lowercase());
    let kind = match (mode, kind) {
        (Mode::ValidateExplicit, None) => "explicit".to_string(),
        (Mode::ValidateExplicit, Some(k)) if k != "explicit" => {
            f.errors.push(format!("mode validate-explicit needs the explicit potential, got '{k}'"));
            return None;
        }
        (_, Some(k)) => k,
        (_, None) => {
            f.errors.push(format!("missing required key 'potential' for mode {mode}"));
            return None;
        }
    };
    match kind.as_str() {
        "gaussian" => {
            let amp = f.require("amp", "potential gaussian");
            let width = f.require("width", "potential gaussian");
            Some(PotentialInput::Spec(PotentialSpec::Gaussian {
                amplitude: amp?,
                width: width?,
            }))
        }
        "explicit" => {
            let b = f.require("b", "potential explicit");
            let c = f.require("c", "potential explicit");
            let unproven = f.bool("unproven-region").unwrap_or(false);
            let e = if mode == Mode::ValidateExplicit {
                if f.has("explicit-e") {
                    f.raw("explicit-e");
                    f.errors.push("mode validate-explicit takes the explicit energy from 'e'".into());
                }
                match target {
                    Some(Target::Energy(e)) => Some(*e),
                    _ => None,
                }
            } else if f.has("explicit-e") {
                f.positive("explicit-e")
            } else if let Some(Target::Energy(e)) = target {
                Some(*e)
            } else {
                f.errors.push(format!(
                    "missing required key 'explicit-e' for the explicit potential in mode {mode}"
                ));
                None
            };
            let (b, c, e) = (b?, c?, e?);
            let spec = if unproven {
                ExplicitSolutionSpec::with_unproven_region(b, c, e)
            } else {
                ExplicitSolutionSpec::new(b, c, e)
            };
            match spec {
                Ok(s) => Some(PotentialInput::Spec(PotentialSpec::Explicit(s))),
                Err(err) => {
                    f.errors.push(err.to_string());
                    None
                }
            }
        }
        "table" | "tabulated" => match f.raw("table") {
            Some(p) => Some(PotentialInput::Table(PathBuf::from(p))),
            None => {
                f.errors.push("missing required key 'table' for potential table".into());
                None
            }
        },
        other => {
            f.errors.push(format!(
                "unknown potential '{other}' (expected gaussian, explicit or table)"
            ));
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(Error::ConfigList(v)) => v,
            other => panic!("expected a list of errors, got {other:?}"),
        }
    }

    #[test]
    fn gaussian_solve() {
        let c = parse_config("mode=solve\npotential=gaussian\namp=1\nwidth=1\ne=0.01").unwrap();
        assert_eq!(c.mode, Mode::Solve);
        assert_eq!(c.target, Target::Energy(0.01));
        assert_eq!(
            c.potential,
            PotentialInput::Spec(PotentialSpec::Gaussian {
                amplitude: 1.0,
                width: 1.0
            })
        );
    }

    #[test]
    fn missing_keys_are_all_listed() {
        let errs = errors("mode=solve");
        assert!(errs.iter().any(|e| e.contains("'e'")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("'potential'")), "{errs:?}");
    }

    #[test]
    fn validate_explicit_defaults_potential() {
        let c = parse_config("mode=validate-explicit\nb=1\nc=0.5\ne=1").unwrap();
        match c.potential {
            PotentialInput::Spec(PotentialSpec::Explicit(s)) => {
                assert_eq!((s.b, s.c, s.e), (1.0, 0.5, 1.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn comments_overrides_and_types() {
        let text = "# header\nmode = sweep # trailing\npotential=gaussian\namp=1\nwidth=1\n\
                    e-min=1e-3\ne-max=1e-1\ne-steps=5\n";
        let mut pairs = parse_pairs(text).unwrap();
        pairs.push(("e_steps".into(), "7".into()));
        let c = RunConfig::from_pairs(pairs).unwrap();
        match c.target {
            Target::Energies(r) => {
                assert_eq!(r.steps, 7);
                assert_eq!(r.values().len(), 7);
            }
            other => panic!("{other:?}"),
        }

        let errs = errors("mode=solve\npotential=gaussian\namp=x\nwidth=1\ne=1\ncolour=blue\ngrid-n=-3");
        assert!(errs.iter().any(|e| e.contains("amp")));
        assert!(errs.iter().any(|e| e.contains("unknown key 'colour'")));
        assert!(errs.iter().any(|e| e.contains("grid-n")));
    }

    #[test]
    fn irrelevant_keys_rejected() {
        let errs = errors("mode=solve\npotential=gaussian\namp=1\nwidth=1\ne=1\nrho=0.1\nb=2");
        assert!(errs.iter().any(|e| e.contains("'rho'")));
        assert!(errs.iter().any(|e| e.contains("'b'")));
    }

    #[test]
    fn explicit_condition_is_checked() {
        let errs = errors("mode=validate-explicit\nb=1\nc=0.5\ne=0.5");
        assert!(errs.iter().any(|e| e.contains("7/9") || e.contains("below")), "{errs:?}");
    }

    #[test]
    fn malformed_line() {
        assert!(matches!(parse_pairs("mode solve"), Err(Error::ConfigList(_))));
    }
}
