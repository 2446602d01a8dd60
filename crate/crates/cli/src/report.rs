//! Run dispatch and CSV/JSON report emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};
use simpleq::observables::{
    bound_audit, compute_observables, sweep_audit, AuditRow, BoundAudit, ObservableReport, Relation,
    RowKind,
};
use simpleq::potentials::{Potential, PotentialSpec};
use simpleq::radial::{make_grid, RadialGrid};
use simpleq::solver::{
    prepare_potential, rho_prime, solve_fixed_e, solve_fixed_rho, sweep_with, SolutionState,
};
use simpleq::{Error, Result};

use crate::config::{Mode, OutputFormat, RunConfig, Target};

pub const SCHEMA_VERSION: u32 = 1;

/// Columns of the sweep table, in order.
pub const SWEEP_COLUMNS: &[&str] = &[
    "e",
    "rho",
    "rho_prime_analytic",
    "rho_prime_fd",
    "e_rho",
    "convexity_indicator",
    "eta",
    "eta_bogolyubov",
    "lhy_ratio",
    "beta",
    "decay_measured",
    "decay_predicted",
    "rho_prime_rel_diff",
    "rho_prime_denominator",
    "rho_second",
    "e_rho_increasing",
    "gas_parameter",
    "eta_ratio",
    "decay_exponent",
    "tan_ratio_min",
    "tan_ratio_max",
    "regime",
    "normalization_residual",
    "constraint_residual",
    "pde_residual",
    "iterations",
    "scheme_used",
    "error",
];

pub const SOLVE_COLUMNS: &[&str] = &[
    "e",
    "rho",
    "rho_prime_analytic",
    "rho_prime_denominator",
    "e_rho",
    "rho_int_u",
    "u_max",
    "pde_residual",
    "constraint_residual",
    "normalization_residual",
    "tail_mass",
    "radicand_min",
    "nonpositive_rho_u_hat",
    "iterations",
    "inner_iterations",
    "scheme_requested",
    "scheme_used",
    "scheme_agreement",
    "fallback",
];

pub const INVERT_COLUMNS: &[&str] = &[
    "rho_target",
    "e",
    "rho",
    "rho_rel_error",
    "bracket_lo",
    "bracket_hi",
    "evaluations",
    "multiplicity",
    "rho_prime_analytic",
    "e_rho",
    "normalization_residual",
    "constraint_residual",
    "pde_residual",
    "scheme_used",
];

pub const OBSERVABLE_COLUMNS: &[&str] = &[
    "e",
    "rho",
    "a0",
    "gas_parameter",
    "eta",
    "eta_bogolyubov",
    "eta_ratio",
    "eta_from_s",
    "eta_s_residual",
    "depletion_denominator",
    "lhy_ratio",
    "leading_ratio",
    "beta",
    "beta_upper",
    "decay_exponent",
    "decay_amplitude_fit",
    "decay_measured",
    "decay_predicted",
    "tan_constant",
    "tan_k_min",
    "tan_k_max",
    "tan_nodes",
    "tan_ratio_min",
    "tan_ratio_max",
    "negative_momentum_samples",
];

pub const AUDIT_COLUMNS: &[&str] = &[
    "e", "name", "formula", "relation", "tolerance", "lhs", "rhs", "margin", "pass", "kind", "note",
];

pub const MOMENTUM_COLUMNS: &[&str] = &["k", "m", "k4m", "tan_ratio"];

pub const PROFILE_COLUMNS: &[&str] = &["r", "u", "k", "rho_u_hat"];

/// Tolerances asserted by the explicit-solution validation.
pub const EXPLICIT_U_TOL: f64 = 1e-4;
pub const EXPLICIT_RHO_TOL: f64 = 1e-6;
pub const EXPLICIT_TRANSFORM_TOL: f64 = 1e-6;
pub const EXPLICIT_BETA_TOL: f64 = 1e-6;
/// Nodes of the extended grid used for the explicit `u*u` check; its periodic
/// images fall off like `(r/r_ext)⁴`.
pub const EXPLICIT_CONV_NODES: usize = 1 << 18;

/// Format with 17 significant digits.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    pub fn to_field(&self) -> String {
        match self {
            Cell::Num(x) => format_number(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    /// Numbers become decimal strings so no digits are lost by JSON readers.
    pub fn to_json(&self) -> Value {
        match self {
            Cell::Num(x) => Value::String(format_number(*x)),
            Cell::Int(i) => json!(i),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<Option<usize>> for Cell {
    fn from(x: Option<usize>) -> Self {
        x.map_or(Cell::Empty, |x| Cell::Int(x as i64))
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<Option<bool>> for Cell {
    fn from(b: Option<bool>) -> Self {
        b.map_or(Cell::Empty, Cell::Bool)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.into())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<Option<String>> for Cell {
    fn from(s: Option<String>) -> Self {
        s.map_or(Cell::Empty, Cell::Text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// The cells of one column.
    pub fn get(&self, name: &str) -> Option<Vec<&Cell>> {
        let j = self.column(name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        let ser = |e: csv::Error| Error::Serialize(e.to_string());
        w.write_record(&self.columns).map_err(ser)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_field)).map_err(ser)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serialize(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "columns": self.columns,
            "rows": self.rows.iter().map(|r| r.iter().map(Cell::to_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridInfo {
    pub n: usize,
    pub r_max: f64,
    pub dr: f64,
    pub dk: f64,
}

impl GridInfo {
    fn of(g: &RadialGrid) -> Self {
        Self {
            n: g.n(),
            r_max: g.r_max(),
            dr: g.dr(),
            dk: g.dk(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Metadata {
    pub mode: Mode,
    pub config: BTreeMap<String, String>,
    pub potential: String,
    pub grid: Option<GridInfo>,
    pub e_star: Option<f64>,
    pub e_large: Option<f64>,
    pub l1: Option<f64>,
    pub a0: Option<f64>,
    pub version: String,
    pub started_unix: f64,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub metadata: Metadata,
    pub table: Table,
    pub audit: Option<Table>,
    /// Per-state series (momentum distributions, profiles), each written to its own file.
    pub series: Vec<Table>,
    pub warnings: Vec<String>,
    /// Asserted checks that failed.
    pub failures: Vec<String>,
    pub exit_code: i32,
}

impl ReportBundle {
    pub fn to_json(&self) -> Value {
        let m = &self.metadata;
        json!({
            "schema_version": SCHEMA_VERSION,
            "metadata": {
                "mode": m.mode.as_str(),
                "config": m.config,
                "potential": m.potential,
                "grid": m.grid.as_ref().map(|g| json!({
                    "n": g.n,
                    "r_max": format_number(g.r_max),
                    "dr": format_number(g.dr),
                    "dk": format_number(g.dk),
                })),
                "e_star": m.e_star.map(format_number),
                "e_large": m.e_large.map(format_number),
                "l1": m.l1.map(format_number),
                "a0": m.a0.map(format_number),
                "version": m.version,
                "started_unix": m.started_unix,
                "wall_time_seconds": m.wall_time_seconds,
            },
            "table": self.table.to_json(),
            "audit": self.audit.as_ref().map(Table::to_json),
            "series": self.series.iter().map(Table::to_json).collect::<Vec<_>>(),
            "warnings": self.warnings,
            "status": {
                "exit_code": self.exit_code,
                "failures": self.failures,
            },
        })
    }
}

/// Append `w` unless it is already present.
pub fn push_warning(list: &mut Vec<String>, w: impl Into<String>) {
    let w = w.into();
    if !list.contains(&w) {
        list.push(w);
    }
}

struct Context {
    warnings: Vec<String>,
    failures: Vec<String>,
    error_code: Option<i32>,
    grid: Option<GridInfo>,
    potential: Option<Arc<Potential>>,
    a0: Option<f64>,
}

impl Context {
    fn warn_all<'a>(&mut self, ws: impl IntoIterator<Item = &'a String>) {
        for w in ws {
            push_warning(&mut self.warnings, w.clone());
        }
    }

    fn use_potential(&mut self, p: &Arc<Potential>) {
        self.grid = Some(GridInfo::of(p.grid()));
        self.warn_all(p.warnings());
        self.potential = Some(p.clone());
    }

    fn record_audit(&mut self, audit: &BoundAudit) {
        for r in audit.asserted_failures() {
            let at = audit.e.map(|e| format!(" at e = {e}")).unwrap_or_default();
            self.failures.push(format!(
                "{}{at}: {} (lhs {}, rhs {})",
                r.name, r.formula, r.lhs, r.rhs
            ));
        }
    }
}

fn audit_table(audits: &[BoundAudit]) -> Table {
    let mut t = Table::new("audit", AUDIT_COLUMNS);
    for a in audits {
        for r in &a.rows {
            t.push(audit_cells(a.e, r));
        }
    }
    t
}

fn audit_cells(e: Option<f64>, r: &AuditRow) -> Vec<Cell> {
    let (rel, tol) = match r.relation {
        Relation::AtMost => ("at_most", None),
        Relation::AtLeast => ("at_least", None),
        Relation::Within(t) => ("within", Some(t)),
    };
    let kind = match r.kind {
        RowKind::Asserted => "asserted",
        RowKind::ReportOnly => "report_only",
    };
    vec![
        e.into(),
        r.name.as_str().into(),
        r.formula.as_str().into(),
        rel.into(),
        tol.into(),
        r.lhs.into(),
        r.rhs.into(),
        r.margin.into(),
        r.pass.into(),
        kind.into(),
        r.note.clone().into(),
    ]
}

fn series_key(e: f64) -> String {
    format!("e{e:.6e}")
}

fn momentum_table(obs: &ObservableReport) -> Table {
    let mut t = Table::new(format!("momentum_{}", series_key(obs.e)), MOMENTUM_COLUMNS);
    for s in &obs.momentum_samples {
        t.push(vec![s.k.into(), s.m.into(), s.k4m.into(), s.tan_ratio.into()]);
    }
    t
}

fn profile_table(st: &SolutionState) -> Table {
    let mut t = Table::new(format!("profile_{}", series_key(st.e)), PROFILE_COLUMNS);
    let g = st.grid();
    for j in 0..g.n() {
        t.push(vec![
            g.radii()[j].into(),
            st.u.values()[j].into(),
            g.wavenumbers()[j].into(),
            st.rho_u_hat.values()[j].into(),
        ]);
    }
    t
}

fn observable_cells(o: &ObservableReport) -> Vec<Cell> {
    let tan = o.tan_window;
    vec![
        o.e.into(),
        o.rho.into(),
        o.a0.into(),
        o.gas_parameter.into(),
        o.eta.into(),
        o.eta_bogolyubov.into(),
        o.eta.map(|x| x / o.eta_bogolyubov).into(),
        o.eta_from_s.into(),
        o.eta_s_residual.into(),
        o.denominator.into(),
        o.lhy_ratio.into(),
        o.leading_ratio.into(),
        o.beta.into(),
        o.beta_upper.into(),
        o.decay.exponent.into(),
        o.decay.amplitude_fit.into(),
        o.decay.measured.into(),
        o.decay.predicted.into(),
        o.tan_constant.into(),
        tan.map(|t| t.k_min).into(),
        tan.map(|t| t.k_max).into(),
        tan.map(|t| t.nodes).into(),
        tan.map(|t| t.ratio_min).into(),
        tan.map(|t| t.ratio_max).into(),
        o.negative_momentum_samples.into(),
    ]
}

/// `ℓ¹` norm of `v`, from a provisional sampling, to place a density target.
fn provisional_l1(spec: &PotentialSpec) -> Result<f64> {
    let ls = spec.length_scale();
    let grid = make_grid(4095, 200.0 * ls)?;
    Ok(Potential::build(spec.clone(), grid)?.l1())
}

fn solve_target(config: &RunConfig, spec: &PotentialSpec, cx: &mut Context) -> Result<(SolutionState, Option<Vec<Cell>>)> {
    match config.target {
        Target::Energy(e) => {
            let pot = prepare_potential(spec, e, &config.solver)?;
            cx.use_potential(&pot);
            Ok((solve_fixed_e(&pot, e, &config.solver)?, None))
        }
        Target::Density(rho) => {
            // The root lies in [ρ‖v‖₁/4, ρ‖v‖₁/2]; leave room for widening below.
            let e_min = rho * provisional_l1(spec)? / 8.0;
            let pot = prepare_potential(spec, e_min, &config.solver)?;
            cx.use_potential(&pot);
            let sol = solve_fixed_rho(&pot, rho, &config.solver)?;
            let st = &sol.state;
            let rp = rho_prime(st, config.observables.inner)?;
            let cells = vec![
                rho.into(),
                st.e.into(),
                st.rho.into(),
                ((st.rho - rho) / rho).abs().into(),
                sol.bracket.0.into(),
                sol.bracket.1.into(),
                sol.evaluations.into(),
                sol.multiplicity.into(),
                rp.value.into(),
                (st.e * st.rho).into(),
                st.residuals.normalization_residual.into(),
                st.residuals.constraint_residual.into(),
                st.residuals.pde_residual.into(),
                st.scheme_used.to_string().into(),
            ];
            Ok((sol.state, Some(cells)))
        }
        Target::Energies(_) => Err(Error::Config("a single state was expected".into())),
    }
}

fn run_solve(config: &RunConfig, spec: &PotentialSpec, cx: &mut Context) -> Result<(Table, Option<Table>, Vec<Table>)> {
    let (st, _) = solve_target(config, spec, cx)?;
    cx.warn_all(&st.warnings);
    let rp = rho_prime(&st, config.observables.inner)?;
    let r = st.residuals;
    let mut t = Table::new("solve", SOLVE_COLUMNS);
    t.push(vec![
        st.e.into(),
        st.rho.into(),
        rp.value.into(),
        rp.denominator.into(),
        (st.e * st.rho).into(),
        (st.rho * st.int_u).into(),
        st.u.values().iter().fold(0.0f64, |m, x| m.max(*x)).into(),
        r.pde_residual.into(),
        r.constraint_residual.into(),
        r.normalization_residual.into(),
        r.tail_mass.into(),
        r.radicand_min.into(),
        st.nonpositive_rho_u_hat.into(),
        st.iterations.into(),
        st.inner_iterations.into(),
        st.scheme_requested.to_string().into(),
        st.scheme_used.to_string().into(),
        st.scheme_agreement.into(),
        st.fallback.clone().into(),
    ]);
    Ok((t, None, vec![profile_table(&st)]))
}

fn run_invert(config: &RunConfig, spec: &PotentialSpec, cx: &mut Context) -> Result<(Table, Option<Table>, Vec<Table>)> {
    let (st, cells) = solve_target(config, spec, cx)?;
    cx.warn_all(&st.warnings);
    let mut t = Table::new("invert", INVERT_COLUMNS);
    t.push(cells.expect("density target"));
    Ok((t, None, vec![profile_table(&st)]))
}

fn observables_for(config: &RunConfig, st: &SolutionState, cx: &mut Context) -> Result<ObservableReport> {
    let mut settings = config.observables.clone();
    if settings.a0.is_none() {
        settings.a0 = cx.a0;
    }
    let obs = compute_observables(st, &settings)?;
    cx.a0 = Some(obs.a0);
    cx.warn_all(&obs.warnings.iter().map(|w| format!("e = {}: {w}", st.e)).collect::<Vec<_>>());
    Ok(obs)
}

fn run_observables(config: &RunConfig, spec: &PotentialSpec, cx: &mut Context) -> Result<(Table, Option<Table>, Vec<Table>)> {
    let (st, _) = solve_target(config, spec, cx)?;
    cx.warn_all(&st.warnings);
    let obs = observables_for(config, &st, cx)?;
    let mut t = Table::new("observables", OBSERVABLE_COLUMNS);
    t.push(observable_cells(&obs));
    Ok((t, None, vec![momentum_table(&obs)]))
}

fn run_audit(config: &RunConfig, spec: &PotentialSpec, cx: &mut Context) -> Result<(Table, Option<Table>, Vec<Table>)> {
    let (st, _) = solve_target(config, spec, cx)?;
    cx.warn_all(&st.warnings);
    let audit = bound_audit(&st, &config.observables);
    cx.record_audit(&audit);
    Ok((audit_table(std::slice::from_ref(&audit)), None, Vec::new()))
}

fn run_sweep(config: &RunConfig, spec: &PotentialSpec, cx: &mut Context) -> Result<(Table, Option<Table>, Vec<Table>)> {
    let range = match &config.target {
        Target::Energies(r) => *r,
        _ => return Err(Error::Config("mode sweep needs an energy range".into())),
    };
    let energies = range.values();
    let pot = prepare_potential(spec, range.min, &config.solver)?;
    cx.use_potential(&pot);
    if config.sweep_observables && config.observables.a0.is_none() {
        cx.a0 = Some(pot.scattering_length()?);
    }

    let mut per_row: BTreeMap<u64, ObservableReport> = BTreeMap::new();
    let mut audits: Vec<BoundAudit> = Vec::new();
    let mut series = Vec::new();
    let mut late_warnings = Vec::new();
    let record = sweep_with(&pot, &energies, &config.solver, config.sweep, |st, _row| {
        if config.sweep_observables {
            match observables_for(config, st, cx) {
                Ok(obs) => {
                    series.push(momentum_table(&obs));
                    per_row.insert(st.e.to_bits(), obs);
                }
                Err(err) => late_warnings.push(format!("e = {}: observables failed: {err}", st.e)),
            }
        }
        if config.sweep_audit {
            audits.push(bound_audit(st, &config.observables));
        }
    })?;
    cx.warn_all(&late_warnings);
    cx.warn_all(&record.warnings);

    let mut t = Table::new("sweep", SWEEP_COLUMNS);
    for row in &record.rows {
        let obs = per_row.get(&row.e.to_bits());
        let summary = row.summary.as_ref();
        let rel_diff = match (row.rho_prime_analytic, row.rho_prime_fd) {
            (Some(a), Some(f)) => Some(((a - f) / f).abs()),
            _ => None,
        };
        t.push(vec![
            row.e.into(),
            row.rho.into(),
            row.rho_prime_analytic.into(),
            row.rho_prime_fd.into(),
            row.e_rho.into(),
            row.convexity_indicator.into(),
            obs.and_then(|o| o.eta).into(),
            obs.map(|o| o.eta_bogolyubov).into(),
            obs.map(|o| o.lhy_ratio).into(),
            obs.map(|o| o.beta).into(),
            obs.map(|o| o.decay.measured).into(),
            obs.and_then(|o| o.decay.predicted).into(),
            rel_diff.into(),
            row.rho_prime_denominator.into(),
            row.rho_second.into(),
            row.e_rho_increasing.into(),
            obs.map(|o| o.gas_parameter).into(),
            obs.and_then(|o| o.eta.map(|x| x / o.eta_bogolyubov)).into(),
            obs.map(|o| o.decay.exponent).into(),
            obs.and_then(|o| o.tan_window.map(|w| w.ratio_min)).into(),
            obs.and_then(|o| o.tan_window.map(|w| w.ratio_max)).into(),
            row.regime.as_str().into(),
            summary.map(|s| s.residuals.normalization_residual).into(),
            summary.map(|s| s.residuals.constraint_residual).into(),
            summary.map(|s| s.residuals.pde_residual).into(),
            summary.map(|s| s.iterations).into(),
            summary.map(|s| s.scheme_used.to_string()).into(),
            row.error.clone().into(),
        ]);
        if let (Some(code), None) = (row.error_code, cx.error_code) {
            cx.error_code = Some(code);
        }
        if let Some(err) = &row.error {
            cx.failures.push(format!("sweep row e = {} failed: {err}", row.e));
        }
    }

    let sweep_rows = sweep_audit(&record);
    cx.record_audit(&sweep_rows);
    for a in &audits {
        cx.record_audit(a);
    }
    audits.insert(0, sweep_rows);
    Ok((t, Some(audit_table(&audits)), series))
}

fn max_rel_error(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    pairs.fold(0.0f64, |m, (got, want)| m.max(((got - want) / want).abs()))
}

fn run_validate_explicit(config: &RunConfig, spec: &PotentialSpec, cx: &mut Context) -> Result<(Table, Option<Table>, Vec<Table>)> {
    let ex = match spec {
        PotentialSpec::Explicit(s) => *s,
        _ => return Err(Error::Config("validate-explicit needs the explicit potential".into())),
    };
    let (st, _) = solve_target(config, spec, cx)?;
    cx.warn_all(&st.warnings);
    let g = st.grid().clone();

    let u_err = g
        .radii()
        .iter()
        .zip(st.u.values())
        .fold(0.0f64, |m, (r, u)| m.max((u - ex.u(*r)).abs()));
    let rho_err = ((st.rho - ex.rho()) / ex.rho()).abs();
    let u_hat = st.u_hat();
    let uh_err = max_rel_error(
        g.wavenumbers()
            .iter()
            .zip(&u_hat)
            .filter(|(k, _)| **k >= 0.1 && **k <= 10.0)
            .map(|(k, uh)| (*uh, ex.u_hat(*k))),
    );
    let factor = (EXPLICIT_CONV_NODES / (g.n() + 1)).max(config.observables.decay_extension);
    let uu = st.u_conv_u_extended(factor)?;
    let uu_err = max_rel_error(g.radii().iter().zip(&uu).map(|(r, x)| (*x, ex.u_conv_u(*r))));
    let beta = simpleq::observables::beta_moment(&st);
    let rp = rho_prime(&st, config.observables.inner)?;

    let checks = BoundAudit {
        e: Some(st.e),
        rows: vec![
            AuditRow::new("explicit_u", "max |u − c/(1+b²r²)²|", u_err, 0.0, Relation::Within(EXPLICIT_U_TOL), RowKind::Asserted),
            AuditRow::new("explicit_rho", "|ρ − b³/(cπ²)| / ρ", rho_err, 0.0, Relation::Within(EXPLICIT_RHO_TOL), RowKind::Asserted),
            AuditRow::new(
                "explicit_u_hat",
                "max |û − (π²c/b³)e^{−k/b}| / û over 0.1 ≤ k ≤ 10",
                uh_err,
                0.0,
                Relation::Within(EXPLICIT_TRANSFORM_TOL),
                RowKind::Asserted,
            ),
            AuditRow::new(
                "explicit_u_conv_u",
                "max |u*u − 2π²c²/(b³(4+b²r²)²)| / (u*u)",
                uu_err,
                0.0,
                Relation::Within(EXPLICIT_TRANSFORM_TOL),
                RowKind::Asserted,
            ),
            AuditRow::new("explicit_beta", "β = 6(2e − b²)/b²", beta, ex.beta(), Relation::Within(EXPLICIT_BETA_TOL), RowKind::Asserted),
        ],
    };
    cx.record_audit(&checks);
    let bounds = bound_audit(&st, &config.observables);
    cx.record_audit(&bounds);

    let mut t = Table::new(
        "validate_explicit",
        &[
            "b",
            "c",
            "e",
            "rho",
            "rho_exact",
            "rho_rel_error",
            "u_max_error",
            "u_hat_max_rel_error",
            "u_conv_u_max_rel_error",
            "beta",
            "beta_exact",
            "rho_prime_analytic",
            "normalization_residual",
            "pde_residual",
            "iterations",
            "scheme_used",
            "pass",
        ],
    );
    t.push(vec![
        ex.b.into(),
        ex.c.into(),
        st.e.into(),
        st.rho.into(),
        ex.rho().into(),
        rho_err.into(),
        u_err.into(),
        uh_err.into(),
        uu_err.into(),
        beta.into(),
        ex.beta().into(),
        rp.value.into(),
        st.residuals.normalization_residual.into(),
        st.residuals.pde_residual.into(),
        st.iterations.into(),
        st.scheme_used.to_string().into(),
        checks.all_asserted_pass().into(),
    ]);
    let mut profile = profile_table(&st);
    profile.columns.push("u_exact".into());
    for (row, r) in profile.rows.iter_mut().zip(g.radii()) {
        row.push(ex.u(*r).into());
    }
    Ok((t, Some(audit_table(&[checks, bounds])), vec![profile]))
}

/// Execute a validated configuration.
///
/// Errors from the computation are returned as `Err`; asserted checks that
/// fail are reported in the bundle with exit code 4.
pub fn run(config: &RunConfig) -> Result<ReportBundle> {
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let spec = config.potential.resolve()?;
    let mut cx = Context {
        warnings: Vec::new(),
        failures: Vec::new(),
        error_code: None,
        grid: None,
        potential: None,
        a0: config.observables.a0,
    };
    let (table, audit, series) = match config.mode {
        Mode::Solve => run_solve(config, &spec, &mut cx)?,
        Mode::Sweep => run_sweep(config, &spec, &mut cx)?,
        Mode::Invert => run_invert(config, &spec, &mut cx)?,
        Mode::Observables => run_observables(config, &spec, &mut cx)?,
        Mode::Audit => run_audit(config, &spec, &mut cx)?,
        Mode::ValidateExplicit => run_validate_explicit(config, &spec, &mut cx)?,
    };
    let exit_code = match cx.error_code {
        Some(c) => c,
        None if !cx.failures.is_empty() => 4,
        None => 0,
    };
    let pot = cx.potential.as_ref();
    Ok(ReportBundle {
        metadata: Metadata {
            mode: config.mode,
            config: config.echo.clone(),
            potential: spec.to_string(),
            grid: cx.grid.clone(),
            e_star: pot.map(|p| p.e_star()),
            e_large: pot.map(|p| p.e_large()),
            l1: pot.map(|p| p.l1()),
            a0: cx.a0,
            version: simpleq::VERSION.to_string(),
            started_unix,
            wall_time_seconds: started.elapsed().as_secs_f64(),
        },
        table,
        audit,
        series,
        warnings: cx.warnings,
        failures: cx.failures,
        exit_code,
    })
}

/// One-line summary for the log.
pub fn summary_line(bundle: &ReportBundle) -> String {
    format!(
        "{}: {} rows, {} warnings, {} failures, exit {}",
        bundle.metadata.mode,
        bundle.table.rows.len(),
        bundle.warnings.len(),
        bundle.failures.len(),
        bundle.exit_code
    )
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text)?;
    written.push(path);
    Ok(())
}

/// Render the bundle for standard output: the primary table, or the whole bundle as JSON.
pub fn render(bundle: &ReportBundle, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => bundle.table.to_csv(),
        OutputFormat::Json => serde_json::to_string_pretty(&bundle.to_json())
            .map(|s| s + "\n")
            .map_err(|e| Error::Serialize(e.to_string())),
    }
}

/// Write the bundle into directory `out`, one file per table plus `metadata.json`.
pub fn emit(bundle: &ReportBundle, format: OutputFormat, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let json_text = |v: &Value| {
        serde_json::to_string_pretty(v)
            .map(|s| s + "\n")
            .map_err(|e| Error::Serialize(e.to_string()))
    };
    match format {
        OutputFormat::Csv => {
            write(out.join(format!("{}.csv", bundle.table.name)), &bundle.table.to_csv()?, &mut written)?;
            if let Some(a) = &bundle.audit {
                write(out.join("audit.csv"), &a.to_csv()?, &mut written)?;
            }
            for s in &bundle.series {
                write(out.join(format!("{}.csv", s.name)), &s.to_csv()?, &mut written)?;
            }
            let mut meta = bundle.to_json();
            if let Some(obj) = meta.as_object_mut() {
                obj.remove("table");
                obj.remove("audit");
                obj.remove("series");
            }
            write(out.join("metadata.json"), &json_text(&meta)?, &mut written)?;
        }
        OutputFormat::Json => {
            write(out.join("report.json"), &json_text(&bundle.to_json())?, &mut written)?;
            for s in &bundle.series {
                write(out.join(format!("{}.json", s.name)), &json_text(&s.to_json())?, &mut written)?;
            }
        }
    }
    Ok(written)
}
