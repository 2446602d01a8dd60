//! Radial grids and the 3D Fourier transform of spherically symmetric functions.
//!
//! A grid of `n` interior nodes on `(0, r_max)` is paired with the wavenumbers
//! `k_j = j π / r_max`. The forward transform
//! `f̂(k) = (4π/k) ∫ r sin(kr) f(r) dr` and its inverse
//! `f(r) = (1/(2π² r)) ∫ k sin(kr) f̂(k) dk` are both evaluated with the
//! trapezoid rule, which turns each of them into a type-I discrete sine
//! transform. The pair is exactly invertible and Plancherel holds exactly
//! between the two trapezoid sums.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustdct::{Dst1, DctPlanner};

use crate::error::{Error, Result};

/// Radial sampling in position space together with its conjugate wavenumbers.
pub struct RadialGrid {
    n: usize,
    r_max: f64,
    dr: f64,
    dk: f64,
    r: Vec<f64>,
    k: Vec<f64>,
    dst: Arc<dyn Dst1<f64>>,
}

impl fmt::Debug for RadialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialGrid")
            .field("n", &self.n)
            .field("r_max", &self.r_max)
            .finish()
    }
}

/// Build a grid with `n` interior nodes on `(0, r_max)`.
pub fn make_grid(n: usize, r_max: f64) -> Result<Arc<RadialGrid>> {
    if n == 0 {
        return Err(Error::config("grid needs at least one node"));
    }
    if !(r_max.is_finite() && r_max > 0.0) {
        return Err(Error::config(format!("r_max must be positive, got {r_max}")));
    }
    let dr = r_max / (n as f64 + 1.0);
    if dr < 1e-12 * r_max.max(1.0) || dr < f64::MIN_POSITIVE * 1e6 {
        return Err(Error::config(format!(
            "grid spacing {dr:e} is too small for n = {n}, r_max = {r_max}"
        )));
    }
    let dk = PI / r_max;
    let r = (1..=n).map(|j| j as f64 * dr).collect();
    let k = (1..=n).map(|j| j as f64 * dk).collect();
    let dst = DctPlanner::new().plan_dst1(n);
    Ok(Arc::new(RadialGrid {
        n,
        r_max,
        dr,
        dk,
        r,
        k,
        dst,
    }))
}

impl RadialGrid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn dk(&self) -> f64 {
        self.dk
    }

    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    /// Two grids are interchangeable when their nodes coincide exactly.
    pub fn same_as(&self, other: &RadialGrid) -> bool {
        std::ptr::eq(self, other) || (self.n == other.n && self.r_max == other.r_max)
    }

    /// A grid with the same spacing reaching `factor` times as far.
    pub fn extended(&self, factor: usize) -> Result<Arc<RadialGrid>> {
        let factor = factor.max(1);
        make_grid(factor * (self.n + 1) - 1, factor as f64 * self.r_max)
    }

    fn dst_in_place(&self, buf: &mut [f64]) {
        self.dst.process_dst1(buf);
    }

    /// Raw forward transform of position samples to wavenumber samples.
    pub fn forward(&self, f: &[f64]) -> Vec<f64> {
        debug_assert_eq!(f.len(), self.n);
        let mut buf: Vec<f64> = f.iter().zip(&self.r).map(|(f, r)| f * r).collect();
        self.dst_in_place(&mut buf);
        let c = 4.0 * PI * self.dr;
        for (b, k) in buf.iter_mut().zip(&self.k) {
            *b *= c / k;
        }
        buf
    }

    /// Raw inverse transform of wavenumber samples to position samples.
    pub fn inverse(&self, fh: &[f64]) -> Vec<f64> {
        debug_assert_eq!(fh.len(), self.n);
        let mut buf: Vec<f64> = fh.iter().zip(&self.k).map(|(f, k)| f * k).collect();
        self.dst_in_place(&mut buf);
        let c = self.dk / (2.0 * PI * PI);
        for (b, r) in buf.iter_mut().zip(&self.r) {
            *b *= c / r;
        }
        buf
    }

    /// Wavenumber samples of the sum `Σ_i r_i f_i sin(k_j r_i)` over an arbitrary
    /// set of radii `r_i = i Δr` with `i > n`, folded back onto this grid.
    ///
    /// `sin(π i j / (n+1))` has period `2(n+1)` in `i` and is odd about
    /// `n+1`, so the far samples reduce to one transform of length `n`. The
    /// result equals the transform on an extended grid of the same spacing,
    /// sampled at this grid's wavenumbers.
    pub fn forward_far<F: FnMut(usize) -> Option<f64>>(&self, mut far: F) -> Vec<f64> {
        let period = 2 * (self.n + 1);
        let mut fold = vec![0.0; period];
        let mut i = self.n + 1;
        while let Some(value) = far(i) {
            fold[i % period] += i as f64 * self.dr * value;
            i += 1;
        }
        let mut buf: Vec<f64> = (1..=self.n).map(|m| fold[m] - fold[period - m]).collect();
        self.dst_in_place(&mut buf);
        let c = 4.0 * PI * self.dr;
        for (b, k) in buf.iter_mut().zip(&self.k) {
            *b *= c / k;
        }
        buf
    }

    /// `∫ f d³x` by the trapezoid rule (the endpoints contribute zero).
    pub fn integrate_position(&self, f: &[f64]) -> f64 {
        4.0 * PI * self.dr * f.iter().zip(&self.r).map(|(f, r)| f * r * r).sum::<f64>()
    }

    /// `∫ f g d³x`, the inner product under which the transforms are unitary.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        4.0 * PI
            * self.dr
            * f.iter()
                .zip(g)
                .zip(&self.r)
                .map(|((f, g), r)| f * g * r * r)
                .sum::<f64>()
    }

    /// `(2π)⁻³ ∫ f̂ d³k` by the trapezoid rule on the wavenumber grid.
    pub fn integrate_frequency(&self, fh: &[f64]) -> f64 {
        self.dk / (2.0 * PI * PI) * fh.iter().zip(&self.k).map(|(f, k)| f * k * k).sum::<f64>()
    }

    /// `(2π)⁻³ ∫ f̂ ĝ d³k`.
    pub fn inner_frequency(&self, fh: &[f64], gh: &[f64]) -> f64 {
        self.dk / (2.0 * PI * PI)
            * fh.iter()
                .zip(gh)
                .zip(&self.k)
                .map(|((f, g), k)| f * g * k * k)
                .sum::<f64>()
    }

    /// `(2π)⁻³ ∫ f̂ d³k` with endpoint-corrected quadrature on `[0, k_n]` and a
    /// power-law estimate of the remainder beyond `k_n`. The integrand `k² f̂`
    /// is taken to vanish at `k = 0`, which holds whenever `f̂` is `o(k⁻²)` there.
    pub fn integrate_frequency_high_order(&self, fh: &[f64]) -> f64 {
        let mut g = Vec::with_capacity(self.n + 1);
        g.push(0.0);
        g.extend(fh.iter().zip(&self.k).map(|(f, k)| f * k * k));
        let body = gregory(&g, self.dk);
        let tail = power_law_tail(&self.k, &g[1..]);
        (body + tail) / (2.0 * PI * PI)
    }
}

/// Gregory quadrature of equally spaced samples `y_0 … y_m` with spacing `h`.
///
/// Trapezoid rule plus endpoint corrections through fifth differences; exact
/// for polynomials of degree ≤ 5.
pub fn gregory(y: &[f64], h: f64) -> f64 {
    let m = y.len();
    if m < 2 {
        return 0.0;
    }
    let trap = h * (y.iter().sum::<f64>() - 0.5 * (y[0] + y[m - 1]));
    let order = (m - 1).min(5);
    if order == 0 {
        return trap;
    }
    const COEF: [f64; 5] = [
        -1.0 / 12.0,
        -1.0 / 24.0,
        -19.0 / 720.0,
        -3.0 / 160.0,
        -863.0 / 60480.0,
    ];
    let head = forward_differences(&y[..=order]);
    let tail_slice: Vec<f64> = y[m - 1 - order..].iter().rev().copied().collect();
    let back = forward_differences(&tail_slice);
    let mut corr = 0.0;
    for p in 1..=order {
        // ∇^p y_m = (−1)^p Δ^p of the reversed tail; the Gregory terms are
        // c_p (∇^p y_m − (−1)^p Δ^p y_0).
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        corr += COEF[p - 1] * sign * (back[p] + head[p]);
    }
    trap + h * corr
}

fn forward_differences(y: &[f64]) -> Vec<f64> {
    let mut out = vec![y[0]];
    let mut cur = y.to_vec();
    while cur.len() > 1 {
        cur = cur.windows(2).map(|w| w[1] - w[0]).collect();
        out.push(cur[0]);
    }
    out
}

/// `∫_{x_last}^∞ g` assuming `g ~ A x^{-p}` fitted through the last two samples.
/// Returns zero when the samples do not decay faster than `1/x`.
pub fn power_law_tail(x: &[f64], g: &[f64]) -> f64 {
    let m = x.len();
    if m < 2 {
        return 0.0;
    }
    let (x1, x2) = (x[m - 2], x[m - 1]);
    let (g1, g2) = (g[m - 2], g[m - 1]);
    if g2 == 0.0 {
        return 0.0;
    }
    if g1 == 0.0 || g1.signum() != g2.signum() {
        return 0.0;
    }
    let p = -(g2 / g1).ln() / (x2 / x1).ln();
    if !(p > 1.0 + 1e-9) {
        return 0.0;
    }
    x2 * g2 / (p - 1.0)
}

/// Value at `k = 0` of the polynomial through the first `degree + 1` samples.
///
/// Used for zero-mode quantities such as `f̂(0) = ∫f` when `f` has a slowly
/// decaying tail that a position-space sum would truncate.
pub fn extrapolate_to_zero(x: &[f64], y: &[f64], degree: usize) -> f64 {
    let m = (degree + 1).min(x.len());
    // Neville's algorithm at x = 0.
    let mut p: Vec<f64> = y[..m].to_vec();
    for level in 1..m {
        for i in 0..m - level {
            let (xi, xj) = (x[i], x[i + level]);
            p[i] = (xj * p[i] - xi * p[i + 1]) / (xj - xi);
        }
    }
    p[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Position,
    Frequency,
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Space::Position => "position",
            Space::Frequency => "frequency",
        })
    }
}

/// How to continue a field past the last node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailHint {
    /// Linear ramp to zero at `r_max`, zero beyond.
    Zero,
    /// `f(r) = f(r_n) (r_n / r)⁴`, the decay of a solution `u`.
    InverseQuartic,
}

/// Samples of a spherically symmetric function on a [`RadialGrid`].
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    space: Space,
    tail: TailHint,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>, space: Space) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.n
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invariant(format!(
                "non-finite {space} sample at index {i}"
            )));
        }
        Ok(Self {
            grid,
            values,
            space,
            tail: TailHint::Zero,
        })
    }

    pub fn zeros(grid: Arc<RadialGrid>, space: Space) -> Self {
        let n = grid.n;
        Self {
            grid,
            values: vec![0.0; n],
            space,
            tail: TailHint::Zero,
        }
    }

    /// Sample `f` at the nodes of `space`.
    pub fn from_fn(grid: Arc<RadialGrid>, space: Space, f: impl Fn(f64) -> f64) -> Result<Self> {
        let nodes = match space {
            Space::Position => grid.radii(),
            Space::Frequency => grid.wavenumbers(),
        };
        let values = nodes.iter().map(|&x| f(x)).collect();
        Self::new(grid, values, space)
    }

    pub fn with_tail(mut self, tail: TailHint) -> Self {
        self.tail = tail;
        self
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn tail(&self) -> TailHint {
        self.tail
    }

    pub fn nodes(&self) -> &[f64] {
        match self.space {
            Space::Position => self.grid.radii(),
            Space::Frequency => self.grid.wavenumbers(),
        }
    }

    pub(crate) fn expect_space(&self, expected: Space) -> Result<()> {
        if self.space == expected {
            Ok(())
        } else {
            Err(Error::WrongSpace {
                expected,
                found: self.space,
            })
        }
    }

    pub(crate) fn expect_same_grid(&self, other: &RadialField) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(n = {}, r_max = {}) vs (n = {}, r_max = {})",
                self.grid.n, self.grid.r_max, other.grid.n, other.grid.r_max
            )))
        }
    }

    /// Pointwise map, keeping grid and space.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            space: self.space,
            tail: TailHint::Zero,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn fourier_radial(f: &RadialField) -> Result<RadialField> {
    f.expect_space(Space::Position)?;
    RadialField::new(f.grid.clone(), f.grid.forward(&f.values), Space::Frequency)
}

pub fn inverse_fourier_radial(fh: &RadialField) -> Result<RadialField> {
    fh.expect_space(Space::Frequency)?;
    RadialField::new(fh.grid.clone(), fh.grid.inverse(&fh.values), Space::Position)
}

/// `f * g` through the product of transforms.
pub fn convolve(f: &RadialField, g: &RadialField) -> Result<RadialField> {
    f.expect_space(Space::Position)?;
    g.expect_space(Space::Position)?;
    f.expect_same_grid(g)?;
    let grid = &f.grid;
    let fh = grid.forward(&f.values);
    let gh = grid.forward(&g.values);
    let prod: Vec<f64> = fh.iter().zip(&gh).map(|(a, b)| a * b).collect();
    RadialField::new(grid.clone(), grid.inverse(&prod), Space::Position)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Moments {
    pub m0: f64,
    pub m2: f64,
    pub m4: f64,
    /// `(p, ‖f‖_p)` in request order; `p = ∞` gives the maximum modulus.
    pub lp_norms: Vec<(f64, f64)>,
}

impl Moments {
    pub fn lp(&self, p: f64) -> Option<f64> {
        self.lp_norms.iter().find(|(q, _)| *q == p).map(|(_, n)| *n)
    }
}

pub fn moments(f: &RadialField, p_list: &[f64]) -> Result<Moments> {
    f.expect_space(Space::Position)?;
    let grid = &f.grid;
    let v = &f.values;
    let r = grid.radii();
    let m0 = grid.integrate_position(v);
    let r2: Vec<f64> = v.iter().zip(r).map(|(f, r)| f * r * r).collect();
    let m2 = grid.integrate_position(&r2);
    let r4: Vec<f64> = r2.iter().zip(r).map(|(f, r)| f * r * r).collect();
    let m4 = grid.integrate_position(&r4);
    let lp_norms = p_list
        .iter()
        .map(|&p| (p, lp_norm(grid, v, p)))
        .collect();
    Ok(Moments {
        m0,
        m2,
        m4,
        lp_norms,
    })
}

pub(crate) fn lp_norm(grid: &RadialGrid, v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return v.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    let pw: Vec<f64> = v.iter().map(|x| x.abs().powf(p)).collect();
    grid.integrate_position(&pw).powf(1.0 / p)
}

/// Interpolated value of `f` at radius (or wavenumber) `x ≥ 0`.
///
/// Cubic Lagrange through the four surrounding nodes, with the samples
/// mirrored evenly through the origin. Past the last node the field's
/// [`TailHint`] decides the continuation.
pub fn evaluate(f: &RadialField, x: f64) -> f64 {
    let h = match f.space {
        Space::Position => f.grid.dr,
        Space::Frequency => f.grid.dk,
    };
    let n = f.grid.n;
    let vals = &f.values;
    let x = x.abs();
    let last = n as f64 * h;
    if x >= last {
        let fl = vals[n - 1];
        if x == last {
            return fl;
        }
        return match f.tail {
            TailHint::InverseQuartic => fl * (last / x).powi(4),
            TailHint::Zero => {
                let end = last + h;
                if x >= end {
                    0.0
                } else {
                    fl * (end - x) / h
                }
            }
        };
    }
    let s = x / h;
    let j = s.floor() as i64;
    if (s - j as f64).abs() < 1e-14 && j >= 1 {
        return vals[(j - 1) as usize];
    }
    // Node index m ↔ coordinate m·h; values at m ≤ 0 mirror to −m, m = 0 is
    // not a node so it is skipped when choosing the stencil.
    let sample = |m: i64| -> f64 {
        let idx = m.unsigned_abs() as usize;
        let idx = idx.min(n);
        vals[idx - 1]
    };
    let mut stencil: Vec<i64> = Vec::with_capacity(4);
    let mut lo = j - 1;
    let mut hi = j + 2;
    if hi > n as i64 {
        let shift = hi - n as i64;
        lo -= shift;
        hi = n as i64;
    }
    let mut m = lo;
    while stencil.len() < 4 && m <= hi + 2 {
        if m != 0 {
            stencil.push(m);
        }
        m += 1;
    }
    let mut acc = 0.0;
    for (a, &ma) in stencil.iter().enumerate() {
        let xa = ma as f64;
        let mut w = 1.0;
        for (b, &mb) in stencil.iter().enumerate() {
            if a != b {
                let xb = mb as f64;
                w *= (s - xb) / (xa - xb);
            }
        }
        acc += w * sample(ma);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn small_grid_matches_definition() {
        let g = make_grid(4, 5.0).unwrap();
        assert_eq!(g.radii(), &[1.0, 2.0, 3.0, 4.0]);
        for (j, k) in g.wavenumbers().iter().enumerate() {
            assert!((k - (j as f64 + 1.0) * PI / 5.0).abs() < 1e-15);
        }
        let g = make_grid(4096, 40.0).unwrap();
        assert!((g.dr() - 40.0 / 4097.0).abs() < 1e-16);
        assert!((g.wavenumbers()[0] - PI / 40.0).abs() < 1e-16);
        assert!(make_grid(0, 1.0).is_err());
        assert!(make_grid(10, 0.0).is_err());
        assert!(make_grid(10, -1.0).is_err());
    }

    #[test]
    fn gaussian_transform_and_round_trip() {
        let g = make_grid(2047, 20.0).unwrap();
        let f = RadialField::from_fn(g.clone(), Space::Position, |r| (-r * r).exp()).unwrap();
        let fh = fourier_radial(&f).unwrap();
        for (k, v) in g.wavenumbers().iter().zip(fh.values()).take(400) {
            let exact = PI.powf(1.5) * (-k * k / 4.0).exp();
            assert!((v - exact).abs() < 1e-12, "k={k}: {v} vs {exact}");
        }
        let back = inverse_fourier_radial(&fh).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-3));
        }
    }

    #[test]
    fn plancherel_is_exact_between_trapezoid_sums() {
        let g = make_grid(1023, 15.0).unwrap();
        let f = RadialField::from_fn(g.clone(), Space::Position, |r| {
            (-r * r / 2.0).exp() * (1.0 + r)
        })
        .unwrap();
        let fh = fourier_radial(&f).unwrap();
        let lhs = g.inner(f.values(), f.values());
        let rhs = g.inner_frequency(fh.values(), fh.values());
        assert!(rel(lhs, rhs) < 1e-12);
    }

    #[test]
    fn gaussian_convolution_doubles_variance() {
        let g = make_grid(2047, 20.0).unwrap();
        let f = RadialField::from_fn(g.clone(), Space::Position, |r| (-r * r).exp()).unwrap();
        let c = convolve(&f, &f).unwrap();
        // e^{-r²} * e^{-r²} = (π/2)^{3/2} e^{-r²/2}
        for (r, v) in g.radii().iter().zip(c.values()).take(600) {
            let exact = (PI / 2.0).powf(1.5) * (-r * r / 2.0).exp();
            assert!((v - exact).abs() < 1e-12, "r={r}");
        }
        let h = RadialField::from_fn(g.clone(), Space::Position, |r| (-2.0 * r).exp()).unwrap();
        let a = convolve(&f, &h).unwrap();
        let b = convolve(&h, &f).unwrap();
        assert_eq!(a.values(), b.values());
        let zero = RadialField::zeros(g.clone(), Space::Position);
        assert!(convolve(&f, &zero).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn explicit_pair_transforms() {
        let (b, c) = (1.0, 0.5);
        let g = make_grid(16383, 400.0).unwrap();
        let uh = RadialField::from_fn(g.clone(), Space::Frequency, |k| {
            PI * PI * c / (b * b * b) * (-k / b).exp()
        })
        .unwrap();
        let u = inverse_fourier_radial(&uh).unwrap();
        for (r, v) in g.radii().iter().zip(u.values()).take(2000) {
            let exact = c / (1.0 + b * b * r * r).powi(2);
            assert!((v - exact).abs() < 1e-9, "r={r}: {v} vs {exact}");
        }
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let g1 = make_grid(32, 4.0).unwrap();
        let g2 = make_grid(31, 4.0).unwrap();
        let a = RadialField::zeros(g1.clone(), Space::Position);
        let b = RadialField::zeros(g2, Space::Position);
        assert!(matches!(convolve(&a, &b), Err(Error::GridMismatch(_))));
        let fh = RadialField::zeros(g1, Space::Frequency);
        assert!(matches!(
            fourier_radial(&fh),
            Err(Error::WrongSpace { .. })
        ));
        assert!(matches!(
            inverse_fourier_radial(&a),
            Err(Error::WrongSpace { .. })
        ));
    }

    #[test]
    fn gaussian_moments() {
        let g = make_grid(4095, 12.0).unwrap();
        let f = RadialField::from_fn(g.clone(), Space::Position, |r| (-r * r).exp()).unwrap();
        let m = moments(&f, &[1.0, 2.0, f64::INFINITY]).unwrap();
        assert!(rel(m.m0, PI.powf(1.5)) < 1e-12);
        assert!(rel(m.m2, 1.5 * PI.powf(1.5)) < 1e-12);
        assert!(rel(m.m4, 3.75 * PI.powf(1.5)) < 1e-12);
        assert!(rel(m.lp(1.0).unwrap(), m.m0) < 1e-14);
        assert!(rel(m.lp(2.0).unwrap(), (PI / 2.0).powf(0.75)) < 1e-12);
        assert!(rel(m.lp(f64::INFINITY).unwrap(), (-g.dr() * g.dr()).exp()) < 1e-15);
        let z = moments(&RadialField::zeros(g, Space::Position), &[1.0, 2.0]).unwrap();
        assert_eq!((z.m0, z.m2, z.m4), (0.0, 0.0, 0.0));
        assert_eq!(z.lp(2.0), Some(0.0));
    }

    #[test]
    fn evaluate_nodes_between_and_beyond() {
        let g = make_grid(1023, 40.0).unwrap();
        let u = RadialField::from_fn(g.clone(), Space::Position, |r| 0.5 / (1.0 + r * r).powi(2))
            .unwrap()
            .with_tail(TailHint::InverseQuartic);
        for j in [0usize, 1, 10, 500, 1022] {
            assert_eq!(evaluate(&u, g.radii()[j]), u.values()[j]);
        }
        assert!((evaluate(&u, 0.5) - 0.5 / 1.25f64.powi(2)).abs() < 1e-6);
        assert!((evaluate(&u, 0.0) - 0.5).abs() < 1e-4);
        let last = g.radii()[1022];
        let far = evaluate(&u, 2.0 * last);
        assert!(rel(far, u.values()[1022] / 16.0) < 1e-14);
        let z = RadialField::zeros(g.clone(), Space::Position);
        assert_eq!(evaluate(&z, 3.3), 0.0);
        assert_eq!(evaluate(&z, 100.0), 0.0);
    }

    #[test]
    fn gregory_is_exact_for_low_degree_polynomials() {
        let h = 0.1;
        for deg in 0..=5 {
            let y: Vec<f64> = (0..=40).map(|i| (i as f64 * h).powi(deg)).collect();
            let exact = (40.0 * h).powi(deg + 1) / (deg as f64 + 1.0);
            let got = gregory(&y, h);
            assert!(rel(got, exact) < 1e-12, "degree {deg}: {got} vs {exact}");
        }
    }

    #[test]
    fn zero_extrapolation_recovers_polynomial_intercept() {
        let x: Vec<f64> = (1..=10).map(|j| j as f64 * 0.05).collect();
        let y: Vec<f64> = x.iter().map(|x| 1.5 - 2.0 * x + x.powi(3) - 0.3 * x.powi(6)).collect();
        assert!((extrapolate_to_zero(&x, &y, 6) - 1.5).abs() < 1e-11);
    }

    #[test]
    fn far_fold_matches_extended_grid() {
        let g = make_grid(63, 8.0).unwrap();
        let ext = g.extended(4).unwrap();
        let f = |r: f64| 1.0 / (1.0 + r.powi(6));
        let full = ext.forward(&ext.radii().iter().map(|&r| f(r)).collect::<Vec<_>>());
        let boxed = g.forward(&g.radii().iter().map(|&r| f(r)).collect::<Vec<_>>());
        let limit = ext.n();
        let dr = g.dr();
        let far = g.forward_far(|i| (i <= limit).then(|| f(i as f64 * dr)));
        for j in 0..g.n() {
            let want = full[4 * (j + 1) - 1];
            assert!((boxed[j] + far[j] - want).abs() < 1e-12 * want.abs().max(1e-3));
        }
    }

    #[test]
    fn depletion_integral_quadrature() {
        let g = make_grid(4095, 40.0).unwrap();
        let f: Vec<f64> = g
            .wavenumbers()
            .iter()
            .map(|k| {
                // (k²+1)/√((k²+1)²−1) − 1 without the cancellation
                let q = k * (k * k + 2.0).sqrt();
                1.0 / (q * (k * k + 1.0 + q))
            })
            .collect();
        let got = g.integrate_frequency_high_order(&f);
        let want = 1.0 / (3.0 * PI * PI * 2f64.sqrt());
        assert!(rel(got, want) < 1e-6, "{got} vs {want}");
        assert!(rel(g.integrate_frequency(&f), want) > 1e-6);
    }
}
