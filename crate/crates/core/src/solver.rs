//! Self-consistent solution of
//!
//! ```text
//! (−Δ + 4e + v) u = v + 2eρ u*u,    2e/ρ = ∫(1−u)v
//! ```
//!
//! at fixed `e`, its inversion at fixed `ρ`, continuation sweeps, and the
//! derivatives `ρ′` and `u′`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::observables::Denominator;
use crate::operators::{
    solve_spectral, LinearSolveReport, LinearSolveSettings, OperatorContext, Resolvent,
};
use crate::potentials::{Potential, PotentialSpec};
use crate::radial::{extrapolate_to_zero, make_grid, RadialField, RadialGrid, Space, TailHint};

/// Smallest grid the solver accepts.
pub const MIN_GRID_NODES: usize = 16;
/// Smallest grid chosen automatically.
pub const AUTO_MIN_NODES: usize = 4095;
/// Smallest automatic `r_max`, in potential length scales.
pub const AUTO_MIN_RANGES: f64 = 100.0;
/// Relative slack on `0 ≤ u ≤ 1` at the nodes.
pub const U_RANGE_SLACK: f64 = 1e-9;
/// Required `|ρ∫u − 1|`.
pub const NORMALIZATION_TOL: f64 = 1e-6;
/// Required relative constraint residual.
pub const CONSTRAINT_TOL: f64 = 1e-8;
/// Required relative PDE residual.
pub const PDE_TOL: f64 = 1e-7;
/// Required L^∞ agreement between the two schemes.
pub const SCHEME_AGREEMENT_TOL: f64 = 1e-6;
/// Appended to invariant failures that usually mean too coarse or too short a grid.
pub const UNDER_RESOLVED_HINT: &str =
    "the grid is probably under-resolved (raise grid-n so that Δr ≪ the potential width, and r-max to ~40/√e)";
/// Magnitude below which a negative `ρû` is treated as round-off.
pub const RHO_U_HAT_FLOOR: f64 = 1e-12;
/// Number of low wavenumbers (minus one) used to extrapolate to `k = 0`.
pub const ZERO_MODE_DEGREE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    RealSpaceMonotone,
    FourierSelfConsistent,
    CrossValidated,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::RealSpaceMonotone => "real_space_monotone",
            Scheme::FourierSelfConsistent => "fourier_self_consistent",
            Scheme::CrossValidated => "cross_validated",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "real_space_monotone" | "monotone" => Ok(Scheme::RealSpaceMonotone),
            "fourier_self_consistent" | "fourier" => Ok(Scheme::FourierSelfConsistent),
            "cross_validated" | "cross" => Ok(Scheme::CrossValidated),
            other => Err(Error::config(format!(
                "unknown scheme '{other}' (expected real_space_monotone, fourier_self_consistent or cross_validated)"
            ))),
        }
    }
}

/// Grid overrides; unset fields are chosen from the energy and the potential.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct GridSettings {
    pub n: Option<usize>,
    pub r_max: Option<f64>,
}

impl GridSettings {
    /// `(n, r_max)` for solves down to `e_min`.
    ///
    /// Automatic choices: `r_max = 40/√e_min` (forty healing lengths), but at
    /// least a hundred potential length scales so that the lowest wavenumbers
    /// resolve `Ŝ` near `k = 0`; and the smallest `n` with `n+1` a power of two,
    /// `n ≥ 4095` and `Δr` at most a tenth of the potential's length scale.
    pub fn resolve(&self, e_min: f64, length_scale: f64) -> Result<(usize, f64)> {
        let r_max = match self.r_max {
            Some(r) => r,
            None => (40.0 / e_min.sqrt()).max(AUTO_MIN_RANGES * length_scale),
        };
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::config(format!("r_max must be positive, got {r_max}")));
        }
        let n = match self.n {
            Some(n) => n,
            None => {
                let want = (r_max / (0.1 * length_scale)).ceil() as usize;
                want.max(AUTO_MIN_NODES + 1).next_power_of_two() - 1
            }
        };
        if n < MIN_GRID_NODES {
            return Err(Error::config(format!(
                "grid-n = {n} is below the minimum of {MIN_GRID_NODES}"
            )));
        }
        Ok((n, r_max))
    }

    pub fn grid(&self, e_min: f64, length_scale: f64) -> Result<Arc<RadialGrid>> {
        let (n, r_max) = self.resolve(e_min, length_scale)?;
        make_grid(n, r_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SolverConfig {
    pub grid: GridSettings,
    /// Relative change in `u` and `ρ` between outer iterations at which a solve stops.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub scheme: Scheme,
    pub inner: LinearSolveSettings,
    /// Retry with the monotone scheme when the Fourier iteration fails.
    pub fallback: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid: GridSettings::default(),
            outer_tol: 1e-10,
            max_outer: 2000,
            scheme: Scheme::FourierSelfConsistent,
            inner: LinearSolveSettings::default(),
            fallback: true,
        }
    }
}

impl SolverConfig {
    /// Inner tolerance actually used by solves inside the outer iteration.
    ///
    /// Kept at least a hundred times below the outer tolerance.
    pub fn effective_inner(&self) -> LinearSolveSettings {
        LinearSolveSettings {
            tol: self.inner.tol.min(self.outer_tol * 1e-2),
            ..self.inner
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tol.is_finite() && self.outer_tol > 0.0) {
            return Err(Error::config(format!(
                "outer tolerance must be positive, got {}",
                self.outer_tol
            )));
        }
        if self.max_outer == 0 {
            return Err(Error::config("max_outer must be at least 1"));
        }
        if !(self.outer_tol > 10.0 * self.effective_inner().tol) {
            return Err(Error::config("outer tolerance must exceed 10× the inner tolerance"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Residuals {
    /// `‖(−Δ+4e+v)u − v − 2eρ u*u‖₂ / ‖v‖₂`.
    pub pde_residual: f64,
    /// `|2e/ρ − ∫(1−u)v| / (2e/ρ)`.
    pub constraint_residual: f64,
    /// `|ρ∫u − 1|` with `∫u = û(0)`.
    pub normalization_residual: f64,
    /// `∫u` beyond the box: `û(0)` minus the box sum.
    pub tail_mass: f64,
    /// Smallest radicand `(κ²+1)² − (ρ/2e)Ŝ` over the grid.
    pub radicand_min: f64,
}

/// A converged solution at one energy.
#[derive(Debug, Clone)]
pub struct SolutionState {
    pub e: f64,
    pub rho: f64,
    potential: Arc<Potential>,
    /// `u` at the nodes, continued as `r⁻⁴` past the last node.
    pub u: RadialField,
    /// `ρû(k)`.
    pub rho_u_hat: RadialField,
    /// `S = (1−u)v`.
    pub s: RadialField,
    /// `Ŝ`, including the far field of `v`.
    pub s_hat: RadialField,
    /// `∫u`, from the transform at `k → 0`.
    pub int_u: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub scheme_requested: Scheme,
    pub scheme_used: Scheme,
    pub fallback: Option<String>,
    /// L^∞ distance between the two schemes, when both ran.
    pub scheme_agreement: Option<f64>,
    /// Nodes at which a monotone iterate decreased.
    pub monotone_violations: Option<usize>,
    /// Grid wavenumbers where `ρû` is negative beyond round-off and the tail cut.
    pub nonpositive_rho_u_hat: usize,
    pub warnings: Vec<String>,
    frak: OnceLock<Arc<FrakCache>>,
}

/// `𝔎_e` context and `𝔎_e v`, shared by everything that needs them.
#[derive(Debug)]
pub struct FrakCache {
    pub ctx: OperatorContext,
    /// `𝔎_e v`.
    pub kv: Vec<f64>,
    pub kv_report: LinearSolveReport,
    /// `u*u`.
    pub uu: Vec<f64>,
    pub(crate) denominator: OnceLock<Arc<Denominator>>,
}

impl SolutionState {
    pub fn potential(&self) -> &Arc<Potential> {
        &self.potential
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.u.grid()
    }

    /// `û(k) = ρû/ρ`.
    pub fn u_hat(&self) -> Vec<f64> {
        self.rho_u_hat.values().iter().map(|x| x / self.rho).collect()
    }

    /// `u*u`.
    pub fn u_conv_u(&self) -> Vec<f64> {
        let uh = self.u_hat();
        let sq: Vec<f64> = uh.iter().map(|x| x * x).collect();
        self.grid().inverse(&sq)
    }

    /// `ρû` recomputed by the closed form on a grid `factor` times longer with
    /// the same spacing, `S` being continued by `v` past the box.
    pub fn extended_rho_u_hat(&self, factor: usize) -> Result<(Arc<RadialGrid>, Vec<f64>)> {
        let grid = self.grid();
        let ext = grid.extended(factor)?;
        let n = grid.n();
        let s: Vec<f64> = ext
            .radii()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if i < n {
                    self.s.values()[i]
                } else {
                    self.potential.spec().profile(*r)
                }
            })
            .collect();
        let s_hat = ext.forward(&s);
        let cf = closed_form_rho_u_hat(&s_hat, self.rho, self.e, ext.wavenumbers())?;
        Ok((ext, cf.rho_u_hat))
    }

    /// `u*u` at the nodes, evaluated on the extended grid so the periodic
    /// images of the `r⁻⁴` tail sit `factor` times further away.
    pub fn u_conv_u_extended(&self, factor: usize) -> Result<Vec<f64>> {
        let (ext, ruh) = self.extended_rho_u_hat(factor)?;
        let sq: Vec<f64> = ruh.iter().map(|x| (x / self.rho).powi(2)).collect();
        let mut uu = ext.inverse(&sq);
        uu.truncate(self.grid().n());
        Ok(uu)
    }

    /// `𝔎_e` at this state together with `𝔎_e v`, solved once.
    pub fn frak(&self, settings: LinearSolveSettings) -> Result<Arc<FrakCache>> {
        if let Some(c) = self.frak.get() {
            return Ok(c.clone());
        }
        let ctx = OperatorContext::new(self.e, self.potential.clone())?
            .with_rho_u_hat(self.rho_u_hat.clone())?
            .with_settings(settings);
        let (kv, rep) = solve_spectral(
            Resolvent::FrakKe,
            self.potential.v_hat().values(),
            &ctx,
            None,
            true,
        )?;
        if !rep.converged {
            return Err(Error::NonConvergence {
                what: "𝔎_e v".into(),
                iterations: rep.iterations,
                last: rep.final_residual,
                history: vec![],
            });
        }
        let cache = Arc::new(FrakCache {
            ctx,
            kv,
            kv_report: rep,
            uu: self.u_conv_u(),
            denominator: OnceLock::new(),
        });
        Ok(self.frak.get_or_init(|| cache).clone())
    }

    /// The bracket `2e/‖v‖₁ ≤ ρ ≤ 4e/‖v‖₁`.
    pub fn density_bracket(&self) -> (f64, f64) {
        let l1 = self.potential.l1();
        (2.0 * self.e / l1, 4.0 * self.e / l1)
    }
}

#[derive(Debug, Clone)]
pub struct ClosedForm {
    pub rho_u_hat: Vec<f64>,
    pub radicand_min: f64,
    pub nonpositive: usize,
}

/// `ρû(k) = κ²+1 − √((κ²+1)² − (ρ/2e) Ŝ(k))`, `κ = k/(2√e)`.
///
/// Written as `σ/((κ²+1) + √rad)` to avoid cancellation. Radicands down to
/// `−1e−12 (κ²+1)²` are clamped to zero; anything more negative is an error.
pub fn closed_form_rho_u_hat(s_hat: &[f64], rho: f64, e: f64, k: &[f64]) -> Result<ClosedForm> {
    let mut out = Vec::with_capacity(k.len());
    let mut radicand_min = f64::INFINITY;
    let mut nonpositive = 0;
    for (sh, k) in s_hat.iter().zip(k) {
        let a = k * k / (4.0 * e) + 1.0;
        let sigma = rho / (2.0 * e) * sh;
        let mut rad = a * a - sigma;
        radicand_min = radicand_min.min(rad);
        if rad < 0.0 {
            if rad >= -1e-12 * a * a {
                rad = 0.0;
            } else {
                return Err(Error::Radicand { k: *k, value: rad });
            }
        }
        let ruh = sigma / (a + rad.sqrt());
        if ruh <= 0.0 {
            nonpositive += 1;
        }
        out.push(ruh);
    }
    Ok(ClosedForm {
        rho_u_hat: out,
        radicand_min,
        nonpositive,
    })
}

/// `Ŝ` and `Ŝ(0)` for `S = (1−u)v`, with the far field of `v`.
fn source_transform(potential: &Potential, u: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let grid = potential.grid();
    let v = potential.samples().values();
    let s: Vec<f64> = v.iter().zip(u).map(|(v, u)| (1.0 - u) * v).collect();
    let mut s_hat = grid.forward(&s);
    if let Some(far) = potential.far_hat() {
        for (a, b) in s_hat.iter_mut().zip(far) {
            *a += b;
        }
    }
    let s0 = grid.integrate_position(&s) + potential.far_mass();
    (s, s_hat, s0)
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let scale = new.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    new.iter()
        .zip(old)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}

struct RawSolution {
    rho: f64,
    u: Vec<f64>,
    iterations: usize,
    inner_iterations: usize,
    monotone_violations: Option<usize>,
}

/// One application of the closed-form map: `ρ(u)` and the `u` it produces.
fn fourier_map(potential: &Potential, e: f64, u: &[f64]) -> Result<(f64, Vec<f64>)> {
    let grid = potential.grid();
    let (_, s_hat, s0) = source_transform(potential, u);
    let rho = 2.0 * e / s0;
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invariant(
            format!("∫(1−u)v ≤ 0: the iterate exceeds 1 where v lives; {UNDER_RESOLVED_HINT}"),
        ));
    }
    let cf = closed_form_rho_u_hat(&s_hat, rho, e, grid.wavenumbers())?;
    let mut u_new = grid.inverse(&cf.rho_u_hat);
    for x in u_new.iter_mut() {
        *x /= rho;
    }
    Ok((rho, u_new))
}

/// `û` at the smallest grid wavenumber.
fn lowest_mode(grid: &RadialGrid, u: &[f64]) -> f64 {
    let k = grid.wavenumbers()[0];
    4.0 * PI * grid.dr() / k
        * grid
            .radii()
            .iter()
            .zip(u)
            .map(|(r, u)| r * u * (k * r).sin())
            .sum::<f64>()
}

/// Smallest relaxation factor of the Fourier iteration.
const FOURIER_ALPHA_MIN: f64 = 1.0 / 1024.0;
/// Number of past residuals kept for Anderson mixing.
const ANDERSON_DEPTH: usize = 5;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least-squares coefficients `γ` minimizing `‖f − Σγᵢ dfᵢ‖₂`.
fn anderson_coefficients(df: &[Vec<f64>], f: &[f64]) -> Option<Vec<f64>> {
    let m = df.len();
    let mut a = vec![vec![0.0; m + 1]; m];
    for i in 0..m {
        for j in 0..=i {
            let x = dot(&df[i], &df[j]);
            a[i][j] = x;
            a[j][i] = x;
        }
        a[i][m] = dot(&df[i], f);
    }
    let trace: f64 = (0..m).map(|i| a[i][i]).sum();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1e-12 * trace;
    }
    // Gaussian elimination with partial pivoting on the small system.
    for c in 0..m {
        let p = (c..m).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        a.swap(c, p);
        if a[c][c].abs() <= f64::MIN_POSITIVE {
            return None;
        }
        for r in c + 1..m {
            let k = a[r][c] / a[c][c];
            for j in c..=m {
                a[r][j] -= k * a[c][j];
            }
        }
    }
    let mut g = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| a[i][j] * g[j]).sum();
        g[i] = (a[i][m] - s) / a[i][i];
    }
    g.iter().all(|x| x.is_finite()).then_some(g)
}

/// Fixed-point iteration of the closed-form map `u ↦ F(u)` with Anderson
/// mixing over the last few residuals `F(u) − u`.
///
/// When `F` cannot be evaluated at a mixed point (a negative radicand, or
/// `∫(1−u)v ≤ 0`), the history is dropped and a relaxed step
/// `u + α(F(u) − u)` is retaken from the last good point with `α` halved.
fn fourier_iteration(
    potential: &Potential,
    e: f64,
    config: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<RawSolution> {
    let n = potential.grid().n();
    let mut u = match warm {
        Some(w) if w.len() == n => w.to_vec(),
        _ => vec![0.0; n],
    };
    let mut alpha = 1.0f64;
    let mut rho_prev = f64::NAN;
    let mut good: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut last: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut df: Vec<Vec<f64>> = Vec::new();
    let mut dg: Vec<Vec<f64>> = Vec::new();
    let mut best = f64::INFINITY;
    let mut history = Vec::new();
    for it in 1..=config.max_outer {
        let (rho, g) = match fourier_map(potential, e, &u) {
            Ok(x) => x,
            Err(err) => match &good {
                Some((u0, g0)) if alpha > FOURIER_ALPHA_MIN => {
                    alpha = (alpha * 0.5).max(FOURIER_ALPHA_MIN);
                    debug!("Fourier step rejected ({err}); α → {alpha}");
                    df.clear();
                    dg.clear();
                    last = None;
                    u = u0.iter().zip(g0).map(|(u, g)| u + alpha * (g - u)).collect();
                    continue;
                }
                _ => return Err(err),
            },
        };
        let f: Vec<f64> = g.iter().zip(&u).map(|(g, u)| g - u).collect();
        let du = relative_change(&g, &u);
        let drho = ((rho - rho_prev) / rho).abs();
        let change = if drho.is_nan() { du.max(1.0) } else { du.max(drho) };
        history.push(change);
        if !change.is_finite() {
            break;
        }
        if change <= config.outer_tol {
            let (_, _, s0) = source_transform(potential, &g);
            return Ok(RawSolution {
                rho: 2.0 * e / s0,
                u: g,
                iterations: it,
                inner_iterations: 0,
                monotone_violations: None,
            });
        }
        if change > 1e3 * best {
            // Mixing has gone astray; restart it from here.
            df.clear();
            dg.clear();
            last = None;
        }
        best = best.min(change);
        rho_prev = rho;
        if let Some((f0, g0)) = last.take() {
            df.push(f.iter().zip(&f0).map(|(a, b)| a - b).collect());
            dg.push(g.iter().zip(&g0).map(|(a, b)| a - b).collect());
            if df.len() > ANDERSON_DEPTH {
                df.remove(0);
                dg.remove(0);
            }
        }
        let mut next: Vec<f64> = u.iter().zip(&f).map(|(u, f)| u + alpha * f).collect();
        if !df.is_empty() {
            if let Some(gamma) = anderson_coefficients(&df, &f) {
                for ((gi, dfi), dgi) in gamma.iter().zip(&df).zip(&dg) {
                    for j in 0..n {
                        // du = dg − df
                        next[j] -= gi * ((dgi[j] - dfi[j]) + alpha * dfi[j]);
                    }
                }
            } else {
                df.clear();
                dg.clear();
            }
        }
        good = Some((u, g.clone()));
        last = Some((f, g));
        u = next;
    }
    Err(Error::NonConvergence {
        what: "Fourier self-consistent iteration".into(),
        iterations: history.len(),
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

fn monotone_iteration(potential: &Arc<Potential>, e: f64, config: &SolverConfig) -> Result<RawSolution> {
    let grid = potential.grid().clone();
    let n = grid.n();
    let ctx = OperatorContext::new(e, potential.clone())?.with_settings(config.effective_inner());
    let inner_fail = |what: &str, rep: &LinearSolveReport| Error::NonConvergence {
        what: what.into(),
        iterations: rep.iterations,
        last: rep.final_residual,
        history: vec![],
    };
    let (u1, rep) = solve_spectral(Resolvent::Ke, potential.v_hat().values(), &ctx, None, true)?;
    if !rep.converged {
        return Err(inner_fail("K_e v in the monotone scheme", &rep));
    }
    let mut inner = rep.iterations;
    let mut u = vec![0.0; n];
    let mut rho = 2.0 * e / potential.solver_mass();
    let mut w: Option<Vec<f64>> = None;
    let mut violations = 0usize;
    let mut low = 0.0;
    let mut history = Vec::new();
    for it in 1..=config.max_outer {
        let uh = grid.forward(&u);
        let uu_hat: Vec<f64> = uh.iter().map(|x| x * x).collect();
        let (wn, rep) = if it == 1 {
            (vec![0.0; n], None)
        } else {
            let (wn, rep) = solve_spectral(Resolvent::Ke, &uu_hat, &ctx, w.as_deref(), true)?;
            (wn, Some(rep))
        };
        if let Some(rep) = rep {
            if !rep.converged {
                return Err(inner_fail("K_e(u*u) in the monotone scheme", &rep));
            }
            inner += rep.iterations;
        }
        let u_new: Vec<f64> = u1.iter().zip(&wn).map(|(a, b)| a + 2.0 * e * rho * b).collect();
        let scale = u_new.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        violations += u_new
            .iter()
            .zip(&u)
            .filter(|(a, b)| **a < **b - 1e-12 * scale)
            .count();
        let (_, _, s0) = source_transform(potential, &u_new);
        let rho_new = 2.0 * e / s0;
        // ∫u is carried by the far tail, which fills in last.
        let low_new = lowest_mode(&grid, &u_new);
        let dlow = ((low_new - low) / low_new).abs();
        low = low_new;
        let change = relative_change(&u_new, &u)
            .max(((rho_new - rho) / rho_new).abs())
            .max(dlow);
        history.push(change);
        u = u_new;
        rho = rho_new;
        w = Some(wn);
        if !change.is_finite() {
            break;
        }
        // The iteration contracts linearly, slowly for strong potentials; the
        // distance to the limit is about change·q/(1−q).
        let q = match history.len() {
            n if n >= 2 => (change / history[n - 2]).clamp(0.0, 1.0 - 1e-9),
            _ => 0.0,
        };
        if change <= config.outer_tol && change * q / (1.0 - q) <= config.outer_tol {
            debug!("monotone scheme converged in {it} outer / {inner} inner iterations");
            return Ok(RawSolution {
                rho,
                u,
                iterations: it,
                inner_iterations: inner,
                monotone_violations: Some(violations),
            });
        }
    }
    Err(Error::NonConvergence {
        what: "real-space monotone iteration".into(),
        iterations: history.len(),
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// Assemble a state from a converged `(ρ, u)` and check its invariants.
fn finish(
    potential: &Arc<Potential>,
    e: f64,
    raw: RawSolution,
    requested: Scheme,
    used: Scheme,
) -> Result<SolutionState> {
    let grid = potential.grid().clone();
    let k = grid.wavenumbers();
    let RawSolution {
        rho,
        u,
        iterations,
        inner_iterations,
        monotone_violations,
    } = raw;
    let (s, s_hat, s0) = source_transform(potential, &u);
    let radicand_min = k
        .iter()
        .zip(&s_hat)
        .map(|(k, sh)| {
            let a = k * k / (4.0 * e) + 1.0;
            a * a - rho / (2.0 * e) * sh
        })
        .fold(f64::INFINITY, f64::min);
    // ρû of this u, consistent with either scheme.
    let u_hat_box = grid.forward(&u);
    let rho_u_hat: Vec<f64> = u_hat_box.iter().map(|x| rho * x).collect();
    // Cutting the r⁻⁴ tail at the box edge perturbs the box transform by up
    // to 4πρR u(R)/k²; negative values within that, or round-off, are not counted.
    let tail = 4.0 * PI * rho * grid.r_max() * u[u.len() - 1].abs();
    let nonpositive = rho_u_hat
        .iter()
        .zip(k)
        .filter(|(x, k)| **x < -(RHO_U_HAT_FLOOR + tail / (*k * *k)))
        .count();
    let int_u = extrapolate_to_zero(k, &u_hat_box, ZERO_MODE_DEGREE);
    let box_int = grid.integrate_position(&u);

    // PDE residual in transform space.
    let v = potential.samples().values();
    let vu: Vec<f64> = v.iter().zip(&u).map(|(v, u)| v * u).collect();
    let vu_hat = grid.forward(&vu);
    let v_hat = potential.v_hat().values();
    let res: Vec<f64> = (0..grid.n())
        .map(|j| {
            let uh = u_hat_box[j];
            (k[j] * k[j] + 4.0 * e) * uh + vu_hat[j] - v_hat[j] - 2.0 * e * rho * uh * uh
        })
        .collect();
    let pde = (grid.inner_frequency(&res, &res) / grid.inner_frequency(v_hat, v_hat)).sqrt();
    let constraint = ((2.0 * e / rho - s0) / (2.0 * e / rho)).abs();
    let residuals = Residuals {
        pde_residual: pde,
        constraint_residual: constraint,
        normalization_residual: (rho * int_u - 1.0).abs(),
        tail_mass: int_u - box_int,
        radicand_min,
    };
    let mut warnings = Vec::new();
    if nonpositive > 0 {
        warnings.push(format!("ρû < 0 beyond its error estimate at {nonpositive} wavenumbers"));
    }
    if let Some(v) = monotone_violations {
        if v > 0 {
            warnings.push(format!("monotone iterates decreased at {v} node visits"));
        }
    }
    let l1 = potential.l1();
    if rho > 4.0 * e / l1 * (1.0 + 1e-12) {
        warnings.push(format!(
            "ρ = {rho} exceeds 4e/‖v‖₁ = {}; expected when a₀ < ‖v‖₁/(8π), see the audit",
            4.0 * e / l1
        ));
    }
    if grid.dr() > potential.length_scale() {
        warnings.push(format!(
            "Δr = {} exceeds the potential length scale {}",
            grid.dr(),
            potential.length_scale()
        ));
    }
    let state = SolutionState {
        e,
        rho,
        potential: potential.clone(),
        u: RadialField::new(grid.clone(), u, Space::Position)?.with_tail(TailHint::InverseQuartic),
        rho_u_hat: RadialField::new(grid.clone(), rho_u_hat, Space::Frequency)?,
        s: RadialField::new(grid.clone(), s, Space::Position)?,
        s_hat: RadialField::new(grid.clone(), s_hat, Space::Frequency)?,
        int_u,
        residuals,
        iterations,
        inner_iterations,
        scheme_requested: requested,
        scheme_used: used,
        fallback: None,
        scheme_agreement: None,
        monotone_violations,
        nonpositive_rho_u_hat: nonpositive,
        warnings,
        frak: OnceLock::new(),
    };
    check_invariants(&state)?;
    Ok(state)
}

/// Hard invariants of a converged state.
pub fn check_invariants(state: &SolutionState) -> Result<()> {
    let r = &state.residuals;
    let a = |x: f64| (x.abs().max(1.0)) * 1e-12;
    if r.radicand_min < -1e-12 {
        let k = state.grid().wavenumbers();
        let idx = k
            .iter()
            .zip(state.s_hat.values())
            .map(|(k, sh)| {
                let a = k * k / (4.0 * state.e) + 1.0;
                a * a - state.rho / (2.0 * state.e) * sh
            })
            .enumerate()
            .fold((0, f64::INFINITY), |m, (i, x)| if x < m.1 { (i, x) } else { m })
            .0;
        return Err(Error::Radicand {
            k: k[idx],
            value: r.radicand_min,
        });
    }
    let umin = state.u.values().iter().fold(f64::INFINITY, |m, x| m.min(*x));
    let umax = state.u.values().iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
    if umin < -U_RANGE_SLACK || umax > 1.0 + U_RANGE_SLACK {
        return Err(Error::invariant(format!(
            "u leaves [0, 1]: min {umin:e}, max {umax}; {UNDER_RESOLVED_HINT}"
        )));
    }
    if !(r.normalization_residual <= NORMALIZATION_TOL) {
        return Err(Error::invariant(format!(
            "ρ∫u − 1 = {:e} exceeds {NORMALIZATION_TOL:e}; {UNDER_RESOLVED_HINT}",
            r.normalization_residual
        )));
    }
    if !(r.constraint_residual <= CONSTRAINT_TOL) {
        return Err(Error::invariant(format!(
            "constraint residual {:e} exceeds {CONSTRAINT_TOL:e}",
            r.constraint_residual
        )));
    }
    let (lo, _) = state.density_bracket();
    if state.rho < lo - a(lo) {
        return Err(Error::invariant(format!(
            "ρ = {} below 2e/‖v‖₁ = {lo}",
            state.rho
        )));
    }
    if !(r.pde_residual <= PDE_TOL) {
        return Err(Error::invariant(format!(
            "PDE residual {:e} exceeds {PDE_TOL:e}; {UNDER_RESOLVED_HINT}",
            r.pde_residual
        )));
    }
    let ruh_max = state
        .rho_u_hat
        .values()
        .iter()
        .fold(f64::NEG_INFINITY, |m, x| m.max(*x));
    if ruh_max >= 1.0 {
        return Err(Error::invariant(format!("ρû reaches {ruh_max} ≥ 1 on the grid")));
    }
    Ok(())
}

/// Solve at fixed `e` on the potential's grid.
pub fn solve_fixed_e(potential: &Arc<Potential>, e: f64, config: &SolverConfig) -> Result<SolutionState> {
    solve_fixed_e_from(potential, e, config, None)
}

/// [`solve_fixed_e`] with an initial guess for the Fourier iteration.
pub fn solve_fixed_e_from(
    potential: &Arc<Potential>,
    e: f64,
    config: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<SolutionState> {
    config.validate()?;
    if !(e.is_finite() && e > 0.0) {
        return Err(Error::config(format!("e must be positive, got {e}")));
    }
    if potential.grid().n() < MIN_GRID_NODES {
        return Err(Error::config(format!(
            "grid has {} nodes, below the minimum of {MIN_GRID_NODES}",
            potential.grid().n()
        )));
    }
    match config.scheme {
        Scheme::RealSpaceMonotone => {
            let raw = monotone_iteration(potential, e, config)?;
            finish(potential, e, raw, config.scheme, Scheme::RealSpaceMonotone)
        }
        Scheme::FourierSelfConsistent => match fourier_iteration(potential, e, config, warm) {
            Ok(raw) => finish(potential, e, raw, config.scheme, Scheme::FourierSelfConsistent),
            Err(err) if config.fallback && !matches!(err, Error::Config(_)) => {
                let note = format!("Fourier iteration failed ({err}); fell back to the monotone scheme");
                warn!("{note}");
                let retry = monotone_iteration(potential, e, config)
                    .and_then(|raw| finish(potential, e, raw, config.scheme, Scheme::RealSpaceMonotone));
                match retry {
                    Ok(mut st) => {
                        st.warnings.push(note.clone());
                        st.fallback = Some(note);
                        Ok(st)
                    }
                    Err(second) => {
                        // The first failure is the more informative one.
                        warn!("monotone fallback also failed: {second}");
                        Err(err)
                    }
                }
            }
            Err(err) => Err(err),
        },
        Scheme::CrossValidated => {
            let fourier = fourier_iteration(potential, e, config, warm)?;
            let mono = monotone_iteration(potential, e, config)?;
            let dist = fourier
                .u
                .iter()
                .zip(&mono.u)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let drho = ((fourier.rho - mono.rho) / mono.rho).abs();
            if dist > SCHEME_AGREEMENT_TOL || drho > SCHEME_AGREEMENT_TOL {
                return Err(Error::invariant(format!(
                    "schemes disagree: ‖Δu‖∞ = {dist:e}, Δρ/ρ = {drho:e}"
                )));
            }
            let violations = mono.monotone_violations;
            let inner = mono.inner_iterations;
            let mut st = finish(potential, e, fourier, config.scheme, Scheme::CrossValidated)?;
            st.scheme_agreement = Some(dist.max(drho));
            st.monotone_violations = violations;
            st.inner_iterations = inner;
            Ok(st)
        }
    }
}

/// Sample `spec` on the automatic (or overridden) grid for energies down to `e_min`.
pub fn prepare_potential(spec: &PotentialSpec, e_min: f64, config: &SolverConfig) -> Result<Arc<Potential>> {
    let grid = config.grid.grid(e_min, spec.length_scale())?;
    Ok(Arc::new(Potential::build(spec.clone(), grid)?))
}

/// Result of [`solve_fixed_rho`].
#[derive(Debug)]
pub struct FixedRhoSolution {
    pub state: SolutionState,
    pub bracket: (f64, f64),
    pub evaluations: usize,
    /// Roots found by scanning when the bracket was not monotone.
    pub multiplicity: Option<usize>,
}

/// Find `e` with `ρ(e) = rho_target` inside `[ρ‖v‖₁/4, ρ‖v‖₁/2]`.
pub fn solve_fixed_rho(
    potential: &Arc<Potential>,
    rho_target: f64,
    config: &SolverConfig,
) -> Result<FixedRhoSolution> {
    if !(rho_target.is_finite() && rho_target > 0.0) {
        return Err(Error::config(format!("ρ must be positive, got {rho_target}")));
    }
    let l1 = potential.l1();
    let (e_lo, e_hi) = (rho_target * l1 / 4.0, rho_target * l1 / 2.0);
    let mut evaluations = 0;
    let mut warm: Option<Vec<f64>> = None;
    let mut eval = |e: f64, warm: &mut Option<Vec<f64>>| -> Result<SolutionState> {
        evaluations += 1;
        let st = solve_fixed_e_from(potential, e, config, warm.as_deref())?;
        *warm = Some(st.u.values().to_vec());
        Ok(st)
    };
    let mut s_lo = eval(e_lo, &mut warm)?;
    let mut s_hi = eval(e_hi, &mut warm)?;
    let mut f_lo = s_lo.rho - rho_target;
    let mut f_hi = s_hi.rho - rho_target;
    let mut widened = None;
    // ρ can exceed 4e/‖v‖₁ for strong potentials, putting the root below the
    // nominal bracket; walk the lower end down (and the upper end up) by halves.
    let (mut e_lo_w, mut e_hi_w) = (e_lo, e_hi);
    for _ in 0..60 {
        if f_lo > 0.0 && f_hi > 0.0 {
            e_hi_w = e_lo_w;
            s_hi = s_lo;
            f_hi = f_lo;
            e_lo_w *= 0.5;
            s_lo = eval(e_lo_w, &mut warm)?;
            f_lo = s_lo.rho - rho_target;
        } else if f_lo < 0.0 && f_hi < 0.0 {
            e_lo_w = e_hi_w;
            s_lo = s_hi;
            f_lo = f_hi;
            e_hi_w *= 2.0;
            s_hi = eval(e_hi_w, &mut warm)?;
            f_hi = s_hi.rho - rho_target;
        } else {
            break;
        }
        widened = Some((e_lo_w, e_hi_w));
    }
    let (e_lo, e_hi) = (e_lo_w, e_hi_w);
    let rtol = 1e-8;
    let done = |st: &SolutionState| ((st.rho - rho_target) / rho_target).abs() <= rtol;
    if done(&s_lo) || done(&s_hi) {
        let state = if done(&s_lo) { s_lo } else { s_hi };
        drop(eval);
        return Ok(FixedRhoSolution {
            state,
            bracket: (e_lo, e_hi),
            evaluations,
            multiplicity: None,
        });
    }
    let (mut a, mut fa, mut b, mut fb, mut multiplicity) = if f_lo < 0.0 && f_hi > 0.0 {
        (e_lo, f_lo, e_hi, f_hi, None)
    } else {
        // Not straddling: scan for sign changes.
        let m = 32;
        let mut pts = vec![(e_lo, f_lo)];
        for i in 1..m {
            let e = e_lo + (e_hi - e_lo) * i as f64 / m as f64;
            let st = eval(e, &mut warm)?;
            pts.push((e, st.rho - rho_target));
        }
        pts.push((e_hi, f_hi));
        let changes: Vec<usize> = (0..pts.len() - 1)
            .filter(|&i| pts[i].1.signum() != pts[i + 1].1.signum())
            .collect();
        if changes.is_empty() {
            return Err(Error::NonConvergence {
                what: format!("density inversion: no sign change of ρ(e) − {rho_target} in the bracket"),
                iterations: evaluations,
                last: f_lo.abs().min(f_hi.abs()) / rho_target,
                history: pts.iter().map(|p| p.1).collect(),
            });
        }
        let i = changes[0];
        (pts[i].0, pts[i].1, pts[i + 1].0, pts[i + 1].1, Some(changes.len()))
    };
    if fa > 0.0 {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    // Illinois false position.
    let mut side = 0i32;
    for _ in 0..100 {
        let c = (a * fb - b * fa) / (fb - fa);
        let st = eval(c, &mut warm)?;
        let fc = st.rho - rho_target;
        if done(&st) {
            if multiplicity.is_some_and(|m| m > 1) {
                warn!("ρ(e) = {rho_target} has {} roots in the bracket", multiplicity.unwrap_or(0));
            }
            let mut state = st;
            if let Some((a, b)) = widened {
                state.warnings.push(format!(
                    "root outside [ρ‖v‖₁/4, ρ‖v‖₁/2]; bracket widened to [{a}, {b}]"
                ));
            }
            if let Some(m) = multiplicity {
                state.warnings.push(format!(
                    "ρ(e) was not monotone over the bracket; {m} sign change(s) found by scanning"
                ));
            }
            drop(eval);
            return Ok(FixedRhoSolution {
                state,
                bracket: (e_lo, e_hi),
                evaluations,
                multiplicity: multiplicity.take(),
            });
        }
        if fc < 0.0 {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::NonConvergence {
        what: "density inversion".into(),
        iterations: evaluations,
        last: f64::NAN,
        history: vec![],
    })
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RhoPrime {
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
}

/// `ρ′` from `(e/ρ)ρ′ = (1 + ρ∫(𝔎v)(ρu*u − 2u)) / (1 − ρ²∫(𝔎v)u*u)`.
pub fn rho_prime(state: &SolutionState, settings: LinearSolveSettings) -> Result<RhoPrime> {
    let cache = state.frak(settings)?;
    let grid = state.grid();
    let rho = state.rho;
    let u = state.u.values();
    let q: Vec<f64> = cache.uu.iter().zip(u).map(|(uu, u)| rho * uu - 2.0 * u).collect();
    let numerator = 1.0 + rho * grid.inner(&cache.kv, &q);
    let denominator = 1.0 - rho * rho * grid.inner(&cache.kv, &cache.uu);
    if !(denominator > 0.0) {
        return Err(Error::invariant(format!(
            "ρ′ denominator 1 − ρ²∫(𝔎v)u*u = {denominator} is not positive"
        )));
    }
    Ok(RhoPrime {
        value: rho / state.e * numerator / denominator,
        numerator,
        denominator,
    })
}

#[derive(Debug, Clone)]
pub struct UPrime {
    pub field: RadialField,
    /// `|ρ/e + (ρ²/2e)∫u′v − ρ′| / |ρ′|`.
    pub constraint_residual: f64,
    /// `∫u′`, from the transform at `k → 0`.
    pub integral: f64,
    /// `|∫u′ + ρ′/ρ²| / (ρ′/ρ²)`.
    pub normalization_residual: f64,
    pub report: LinearSolveReport,
}

/// `u′ = 𝔎_e(−4u + 2ρ u*u + 2eρ′ u*u)`.
pub fn u_prime(state: &SolutionState, rho_prime: f64, settings: LinearSolveSettings) -> Result<UPrime> {
    let cache = state.frak(settings)?;
    let grid = state.grid();
    let (rho, e) = (state.rho, state.e);
    let psi: Vec<f64> = state
        .u
        .values()
        .iter()
        .zip(&cache.uu)
        .map(|(u, uu)| -4.0 * u + 2.0 * rho * uu + 2.0 * e * rho_prime * uu)
        .collect();
    let psi_hat = grid.forward(&psi);
    let (up, report) = solve_spectral(Resolvent::FrakKe, &psi_hat, &cache.ctx, None, false)?;
    if !report.converged {
        return Err(Error::NonConvergence {
            what: "𝔎_e solve for u′".into(),
            iterations: report.iterations,
            last: report.final_residual,
            history: vec![],
        });
    }
    let int_vup = grid.inner(&up, state.potential.samples().values());
    let constraint = (rho / e + rho * rho / (2.0 * e) * int_vup - rho_prime).abs() / rho_prime.abs();
    let up_hat = grid.forward(&up);
    let integral = extrapolate_to_zero(grid.wavenumbers(), &up_hat, ZERO_MODE_DEGREE);
    let target = -rho_prime / (rho * rho);
    Ok(UPrime {
        field: RadialField::new(grid.clone(), up, Space::Position)?,
        constraint_residual: constraint,
        integral,
        normalization_residual: ((integral - target) / target).abs(),
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `e < e_⋆`.
    ProvenSmall,
    /// `e > 2³‖v‖₂⁴/π⁴`.
    ProvenLarge,
    /// Between the two thresholds, where monotonicity is not proven.
    Unproven,
}

impl Regime {
    pub fn of(potential: &Potential, e: f64) -> Self {
        if e < potential.e_star() {
            Regime::ProvenSmall
        } else if e > potential.e_large() {
            Regime::ProvenLarge
        } else {
            Regime::Unproven
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::ProvenSmall => "proven_small_e",
            Regime::ProvenLarge => "proven_large_e",
            Regime::Unproven => "outside proven monotonicity regime",
        }
    }
}

/// Compact per-state numbers kept in a sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StateSummary {
    pub residuals: Residuals,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub scheme_used: Scheme,
    pub fallback: Option<String>,
    pub scheme_agreement: Option<f64>,
    pub u_max: f64,
    pub int_u: f64,
}

impl From<&SolutionState> for StateSummary {
    fn from(s: &SolutionState) -> Self {
        Self {
            residuals: s.residuals,
            iterations: s.iterations,
            inner_iterations: s.inner_iterations,
            scheme_used: s.scheme_used,
            fallback: s.fallback.clone(),
            scheme_agreement: s.scheme_agreement,
            u_max: s.u.values().iter().fold(0.0f64, |m, x| m.max(*x)),
            int_u: s.int_u,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepRow {
    pub e: f64,
    pub rho: Option<f64>,
    pub rho_prime_analytic: Option<f64>,
    pub rho_prime_denominator: Option<f64>,
    pub rho_prime_fd: Option<f64>,
    pub e_rho: Option<f64>,
    pub rho_second: Option<f64>,
    /// `2ρ′² − ρρ″`.
    pub convexity_indicator: Option<f64>,
    pub regime: Regime,
    /// `eρ` exceeds the previous successful row.
    pub e_rho_increasing: Option<bool>,
    pub summary: Option<StateSummary>,
    pub error: Option<String>,
    /// Exit code of the error, if any.
    pub error_code: Option<i32>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepRecord {
    pub potential: String,
    pub grid_n: usize,
    pub grid_r_max: f64,
    pub e_star: f64,
    pub e_large: f64,
    pub config: SolverConfig,
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SweepOptions {
    /// Compute `ρ′` by centered differences as well.
    pub finite_differences: bool,
    /// Relative step `δ/e` for the differences.
    pub fd_step: f64,
    /// Initialize each Fourier solve from the previous row.
    pub warm_start: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            finite_differences: true,
            fd_step: 1e-4,
            warm_start: true,
        }
    }
}

/// Solve along an increasing list of energies on one grid.
pub fn sweep(
    potential: &Arc<Potential>,
    e_values: &[f64],
    config: &SolverConfig,
    options: SweepOptions,
) -> Result<SweepRecord> {
    sweep_with(potential, e_values, config, options, |_, _| {})
}

/// [`sweep`], calling `visit` on every converged state before it is dropped.
pub fn sweep_with<F>(
    potential: &Arc<Potential>,
    e_values: &[f64],
    config: &SolverConfig,
    options: SweepOptions,
    mut visit: F,
) -> Result<SweepRecord>
where
    F: FnMut(&SolutionState, &SweepRow),
{
    config.validate()?;
    if e_values.is_empty() {
        return Err(Error::config("sweep needs at least one energy"));
    }
    if let Some(w) = e_values.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::config(format!(
            "sweep energies must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    let inner = config.effective_inner();
    let mut rows = Vec::with_capacity(e_values.len());
    let mut warnings = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    for &e in e_values {
        let regime = Regime::of(potential, e);
        let mut row = SweepRow {
            e,
            rho: None,
            rho_prime_analytic: None,
            rho_prime_denominator: None,
            rho_prime_fd: None,
            e_rho: None,
            rho_second: None,
            convexity_indicator: None,
            regime,
            e_rho_increasing: None,
            summary: None,
            error: None,
            error_code: None,
        };
        let guess = if options.warm_start { warm.as_deref() } else { None };
        let outcome = (|| -> Result<SolutionState> {
            let st = solve_fixed_e_from(potential, e, config, guess)?;
            row.rho = Some(st.rho);
            row.e_rho = Some(e * st.rho);
            row.summary = Some(StateSummary::from(&st));
            let rp = rho_prime(&st, inner)?;
            row.rho_prime_analytic = Some(rp.value);
            row.rho_prime_denominator = Some(rp.denominator);
            if options.finite_differences {
                let d = options.fd_step * e;
                let w = Some(st.u.values());
                let plus = solve_fixed_e_from(potential, e + d, config, w)?;
                let minus = solve_fixed_e_from(potential, e - d, config, w)?;
                row.rho_prime_fd = Some((plus.rho - minus.rho) / (2.0 * d));
            }
            Ok(st)
        })();
        match outcome {
            Ok(st) => {
                if options.warm_start {
                    warm = Some(st.u.values().to_vec());
                }
                for w in &st.warnings {
                    warnings.push(format!("e = {e}: {w}"));
                }
                visit(&st, &row);
            }
            Err(err) => {
                warn!("sweep row e = {e} failed: {err}");
                row.error_code = Some(err.exit_code());
                row.error = Some(err.to_string());
            }
        }
        rows.push(row);
    }
    // eρ monotonicity, against the previous successful row.
    let mut last: Option<f64> = None;
    for row in rows.iter_mut() {
        if let Some(er) = row.e_rho {
            if let Some(prev) = last {
                let inc = er > prev;
                row.e_rho_increasing = Some(inc);
                if !inc {
                    warnings.push(format!("eρ(e) failed to increase at e = {}", row.e));
                }
            }
            last = Some(er);
        }
    }
    // ρ″ by the three-point nonuniform difference of the analytic ρ′.
    if rows.len() < 3 {
        warnings.push("insufficient rows for convexity (need at least 3)".into());
    } else {
        for i in 1..rows.len() - 1 {
            let (p, c, nx) = (&rows[i - 1], &rows[i], &rows[i + 1]);
            if let (Some(f0), Some(f1), Some(f2), Some(rho), Some(rp)) = (
                p.rho_prime_analytic,
                c.rho_prime_analytic,
                nx.rho_prime_analytic,
                c.rho,
                c.rho_prime_analytic,
            ) {
                let h1 = c.e - p.e;
                let h2 = nx.e - c.e;
                let d = -h2 / (h1 * (h1 + h2)) * f0 + (h2 - h1) / (h1 * h2) * f1
                    + h1 / (h2 * (h1 + h2)) * f2;
                rows[i].rho_second = Some(d);
                rows[i].convexity_indicator = Some(2.0 * rp * rp - rho * d);
            }
        }
    }
    for row in &rows {
        if row.regime == Regime::Unproven && row.rho.is_some() {
            warnings.push(format!("e = {}: {}", row.e, Regime::Unproven.as_str()));
        }
    }
    let grid = potential.grid();
    Ok(SweepRecord {
        potential: potential.spec().to_string(),
        grid_n: grid.n(),
        grid_r_max: grid.r_max(),
        e_star: potential.e_star(),
        e_large: potential.e_large(),
        config: *config,
        rows,
        warnings,
    })
}

/// `logspace(a, b, m)` inclusive of both ends.
pub fn logspace(a: f64, b: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    let mut out: Vec<f64> = (0..m)
        .map(|i| (la + (lb - la) * i as f64 / (m - 1) as f64).exp())
        .collect();
    out[0] = a;
    out[m - 1] = b;
    out
}

/// `√2 π³ / ‖v‖₁²` for a given `‖v‖₁`.
pub fn e_star_for(l1: f64) -> f64 {
    2f64.sqrt() * PI.powi(3) / (l1 * l1)
}
