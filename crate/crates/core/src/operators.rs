//! The resolvents `G_e`, `K_e`, `𝔜_e` and `𝔎_e`.
//!
//! `G_e = (−Δ+4e)⁻¹` and `𝔜_e = (−Δ+4e(1−C_{ρu}))⁻¹` are Fourier multipliers.
//! `K_e = (−Δ+v+4e)⁻¹` and `𝔎_e = (−Δ+v+4e(1−C_{ρu}))⁻¹` add the potential as a
//! pointwise product. `M + v` is self-adjoint and positive in the transform
//! inner product, so they are inverted by conjugate gradients on `ŵ`,
//! preconditioned by the multiplier `M`.

use std::f64::consts::PI;
use std::sync::Arc;

use log::warn;

use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::radial::{make_grid, RadialField, RadialGrid, Space};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LinearSolveSettings {
    /// Relative L² forward residual at which a solve stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LinearSolveSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LinearSolveReport {
    pub iterations: usize,
    /// `‖M w + v w − ψ‖₂ / ‖ψ‖₂` for the returned `w`.
    pub final_residual: f64,
    pub converged: bool,
    /// Nodes more negative than the clamping slack on a non-negative source.
    pub negative_nodes: usize,
}

/// Values below this magnitude on a non-negative source are clamped to zero.
pub const POSITIVITY_SLACK: f64 = 1e-10;

/// Everything needed to apply the resolvents at one energy.
#[derive(Debug, Clone)]
pub struct OperatorContext {
    e: f64,
    potential: Arc<Potential>,
    grid: Arc<RadialGrid>,
    settings: LinearSolveSettings,
    ge_multiplier: Vec<f64>,
    rho_u_hat: Option<RadialField>,
    ye_multiplier: Option<Vec<f64>>,
    bound_shortfalls: usize,
}

impl OperatorContext {
    /// Context for `G_e` and `K_e`.
    pub fn new(e: f64, potential: Arc<Potential>) -> Result<Self> {
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::config(format!("e must be positive, got {e}")));
        }
        let grid = potential.grid().clone();
        let ge_multiplier = grid.wavenumbers().iter().map(|k| k * k + 4.0 * e).collect();
        Ok(Self {
            e,
            potential,
            grid,
            settings: LinearSolveSettings::default(),
            ge_multiplier,
            rho_u_hat: None,
            ye_multiplier: None,
            bound_shortfalls: 0,
        })
    }

    /// Add `ρû` so that `𝔜_e` and `𝔎_e` become available.
    ///
    /// Fails if the multiplier `k² + 4e(1−ρû(k))` is not positive somewhere.
    /// Nodes where it falls below `√(8e) k` are counted in
    /// [`OperatorContext::bound_shortfalls`].
    pub fn with_rho_u_hat(mut self, rho_u_hat: RadialField) -> Result<Self> {
        rho_u_hat.expect_space(Space::Frequency)?;
        if !rho_u_hat.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch("ρû lives on another grid".into()));
        }
        let e = self.e;
        let floor = (8.0 * e).sqrt();
        let mut m = Vec::with_capacity(self.grid.n());
        let mut shortfalls = 0;
        for (k, ruh) in self.grid.wavenumbers().iter().zip(rho_u_hat.values()) {
            let mk = k * k + 4.0 * e * (1.0 - ruh);
            if !(mk > 0.0) {
                return Err(Error::invariant(format!(
                    "𝔜_e multiplier k² + 4e(1−ρû) = {mk:e} is not positive at k = {k:e}"
                )));
            }
            if mk < floor * k * (1.0 - 1e-12) {
                shortfalls += 1;
            }
            m.push(mk);
        }
        if shortfalls > 0 {
            warn!("𝔜_e multiplier below √(8e)k at {shortfalls} wavenumbers");
        }
        self.rho_u_hat = Some(rho_u_hat);
        self.ye_multiplier = Some(m);
        self.bound_shortfalls = shortfalls;
        Ok(self)
    }

    pub fn with_settings(mut self, settings: LinearSolveSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    pub fn potential(&self) -> &Arc<Potential> {
        &self.potential
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn settings(&self) -> LinearSolveSettings {
        self.settings
    }

    pub fn rho_u_hat(&self) -> Option<&RadialField> {
        self.rho_u_hat.as_ref()
    }

    /// `k² + 4e(1−ρû(k))` on the grid, if `ρû` is present.
    pub fn ye_multiplier(&self) -> Option<&[f64]> {
        self.ye_multiplier.as_deref()
    }

    pub fn bound_shortfalls(&self) -> usize {
        self.bound_shortfalls
    }

    fn ye(&self) -> Result<&[f64]> {
        self.ye_multiplier
            .as_deref()
            .ok_or_else(|| Error::config("𝔜_e needs ρû in the operator context"))
    }

    fn check_field(&self, psi: &RadialField) -> Result<()> {
        psi.expect_space(Space::Position)?;
        if !psi.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch(
                "field and potential live on different grids".into(),
            ));
        }
        Ok(())
    }
}

/// `G_e ψ`, the multiplier `1/(k²+4e)`.
pub fn apply_ge(psi: &RadialField, e: f64) -> Result<RadialField> {
    psi.expect_space(Space::Position)?;
    let grid = psi.grid();
    let mut h = grid.forward(psi.values());
    for (h, k) in h.iter_mut().zip(grid.wavenumbers()) {
        *h /= k * k + 4.0 * e;
    }
    RadialField::new(grid.clone(), grid.inverse(&h), Space::Position)
}

/// `𝔜_e ψ`, the multiplier `1/(k²+4e(1−ρû))`.
pub fn apply_ye(psi: &RadialField, ctx: &OperatorContext) -> Result<RadialField> {
    ctx.check_field(psi)?;
    let m = ctx.ye()?;
    let grid = &ctx.grid;
    let mut h = grid.forward(psi.values());
    for (h, m) in h.iter_mut().zip(m) {
        *h /= m;
    }
    let out = grid.inverse(&h);
    if psi.values().iter().all(|v| *v >= 0.0) {
        let worst = out.iter().fold(0.0f64, |a, v| a.min(*v));
        if worst < -POSITIVITY_SLACK {
            warn!("𝔜_e of a non-negative field dips to {worst:e}; the grid may be under-resolved");
        }
    }
    RadialField::new(grid.clone(), out, Space::Position)
}

/// `K_e ψ`.
pub fn apply_ke(
    psi: &RadialField,
    ctx: &OperatorContext,
) -> Result<(RadialField, LinearSolveReport)> {
    ctx.check_field(psi)?;
    let source = ctx.grid.forward(psi.values());
    let nonneg = psi.values().iter().all(|v| *v >= 0.0);
    let (w, rep) = conjugate_gradient(ctx, &ctx.ge_multiplier, &source, None, nonneg);
    Ok((RadialField::new(ctx.grid.clone(), w, Space::Position)?, rep))
}

/// `𝔎_e ψ`.
pub fn apply_frak_ke(
    psi: &RadialField,
    ctx: &OperatorContext,
) -> Result<(RadialField, LinearSolveReport)> {
    ctx.check_field(psi)?;
    let m = ctx.ye()?;
    let source = ctx.grid.forward(psi.values());
    let nonneg = psi.values().iter().all(|v| *v >= 0.0);
    let (w, rep) = conjugate_gradient(ctx, m, &source, None, nonneg);
    Ok((RadialField::new(ctx.grid.clone(), w, Space::Position)?, rep))
}

/// Which resolvent a spectral solve inverts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolvent {
    /// `K_e`.
    Ke,
    /// `𝔎_e`.
    FrakKe,
}

/// Solve with a source given by its transform, optionally warm-started.
///
/// Used for the potential itself, whose transform carries the part of `v`
/// beyond the box.
pub fn solve_spectral(
    which: Resolvent,
    source_hat: &[f64],
    ctx: &OperatorContext,
    guess: Option<&[f64]>,
    nonneg: bool,
) -> Result<(Vec<f64>, LinearSolveReport)> {
    let m = match which {
        Resolvent::Ke => ctx.ge_multiplier.as_slice(),
        Resolvent::FrakKe => ctx.ye()?,
    };
    Ok(conjugate_gradient(ctx, m, source_hat, guess, nonneg))
}

/// `K_e v` or `𝔎_e v`, with the far field of `v` in the source.
pub fn resolvent_of_potential(
    which: Resolvent,
    ctx: &OperatorContext,
) -> Result<(RadialField, LinearSolveReport)> {
    let source = ctx.potential.v_hat().values().to_vec();
    let (w, rep) = solve_spectral(which, &source, ctx, None, true)?;
    Ok((RadialField::new(ctx.grid.clone(), w, Space::Position)?, rep))
}

fn conjugate_gradient(
    ctx: &OperatorContext,
    m: &[f64],
    source_hat: &[f64],
    guess: Option<&[f64]>,
    nonneg: bool,
) -> (Vec<f64>, LinearSolveReport) {
    let grid = &ctx.grid;
    let v = ctx.potential.samples().values();
    let settings = ctx.settings;
    let n = grid.n();
    let dot = |a: &[f64], b: &[f64]| grid.inner_frequency(a, b);
    let source_norm = dot(source_hat, source_hat).sqrt();
    if source_norm == 0.0 {
        return (
            vec![0.0; n],
            LinearSolveReport {
                iterations: 0,
                final_residual: 0.0,
                converged: true,
                negative_nodes: 0,
            },
        );
    }
    // (M + v) applied to a transform.
    let apply = |x_hat: &[f64]| -> Vec<f64> {
        let x = grid.inverse(x_hat);
        let vx: Vec<f64> = v.iter().zip(&x).map(|(v, x)| v * x).collect();
        let mut out = grid.forward(&vx);
        for j in 0..n {
            out[j] += m[j] * x_hat[j];
        }
        out
    };
    let true_residual = |x_hat: &[f64]| -> Vec<f64> {
        let ax = apply(x_hat);
        source_hat.iter().zip(&ax).map(|(b, a)| b - a).collect()
    };
    let mut x_hat = match guess {
        Some(g) if g.len() == n => grid.forward(g),
        _ => vec![0.0; n],
    };
    let mut r = true_residual(&x_hat);
    let mut iterations = 0;
    let mut residual = dot(&r, &r).sqrt() / source_norm;
    'outer: while residual > settings.tol && iterations < settings.max_iter && residual.is_finite() {
        let mut z: Vec<f64> = r.iter().zip(m).map(|(r, m)| r / m).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        loop {
            let q = apply(&p);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                break 'outer;
            }
            let alpha = rz / pq;
            for j in 0..n {
                x_hat[j] += alpha * p[j];
                r[j] -= alpha * q[j];
            }
            iterations += 1;
            residual = dot(&r, &r).sqrt() / source_norm;
            if residual <= settings.tol || iterations >= settings.max_iter || !residual.is_finite() {
                break;
            }
            for j in 0..n {
                z[j] = r[j] / m[j];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for j in 0..n {
                p[j] = z[j] + beta * p[j];
            }
        }
        // The recurrence drifts from the true residual; restart from the true one.
        r = true_residual(&x_hat);
        residual = dot(&r, &r).sqrt() / source_norm;
    }
    let mut w = grid.inverse(&x_hat);
    let mut negative_nodes = 0;
    if nonneg {
        for x in w.iter_mut() {
            if *x < 0.0 {
                if *x >= -POSITIVITY_SLACK {
                    *x = 0.0;
                } else {
                    negative_nodes += 1;
                }
            }
        }
        if negative_nodes > 0 {
            warn!("resolvent of a non-negative source is negative at {negative_nodes} nodes");
        }
    }
    (
        w,
        LinearSolveReport {
            iterations,
            final_residual: residual,
            converged: residual <= settings.tol,
            negative_nodes,
        },
    )
}

/// `|∫φ 𝔎_eψ − ∫ψ 𝔎_eφ| / max(|∫φ 𝔎_eψ|, ε)`.
pub fn symmetry_check(phi: &RadialField, psi: &RadialField, ctx: &OperatorContext) -> Result<f64> {
    let (kpsi, r1) = apply_frak_ke(psi, ctx)?;
    let (kphi, r2) = apply_frak_ke(phi, ctx)?;
    for r in [r1, r2] {
        if !r.converged {
            return Err(Error::NonConvergence {
                what: "𝔎_e solve in the symmetry check".into(),
                iterations: r.iterations,
                last: r.final_residual,
                history: vec![],
            });
        }
    }
    let grid = &ctx.grid;
    let a = grid.inner(phi.values(), kpsi.values());
    let b = grid.inner(psi.values(), kphi.values());
    Ok((a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
}

/// `a₀` from `∫v φ = −4π a₀ + ∫v` with `φ = K_e v`, extrapolated linearly in
/// `√e` from two small energies.
pub fn resolvent_scattering_length(potential: &Potential, energies: [f64; 2]) -> Result<f64> {
    let ls = potential.length_scale();
    let mut a = [0.0; 2];
    for (slot, &e) in a.iter_mut().zip(&energies) {
        let r_max = 40.0 / e.sqrt();
        let want = (r_max / (0.1 * ls)).ceil() as usize;
        let n = want.next_power_of_two().max(4096) - 1;
        let grid = make_grid(n, r_max)?;
        let v = Arc::new(potential.resampled(grid)?);
        let ctx = OperatorContext::new(e, v.clone())?.with_settings(LinearSolveSettings {
            tol: 1e-12,
            ..Default::default()
        });
        let (phi, rep) = resolvent_of_potential(Resolvent::Ke, &ctx)?;
        if !rep.converged {
            return Err(Error::NonConvergence {
                what: "K_e v".into(),
                iterations: rep.iterations,
                last: rep.final_residual,
                history: vec![],
            });
        }
        let g = v.grid();
        let vphi = g.inner(v.samples().values(), phi.values());
        *slot = (v.solver_mass() - vphi) / (4.0 * PI);
    }
    let (s1, s2) = (energies[0].sqrt(), energies[1].sqrt());
    Ok((a[0] * s2 - a[1] * s1) / (s2 - s1))
}
