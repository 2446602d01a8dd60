//! Scattering length against an independent Numerov shooting of `w″ = v w`.

use simpleq::potentials::{scattering_length_of, PotentialSpec};

/// `a₀ = r − w/w′` past the range of `v`, Numerov with step `h` out to `r_end`.
fn numerov_a0(v: impl Fn(f64) -> f64, r_end: f64, steps: usize) -> f64 {
    let h = r_end / steps as f64;
    let f = |r: f64| 1.0 - h * h * v(r) / 12.0;
    let mut w_prev = 0.0;
    // w = r + v(0)r³/6 + O(r⁵) near the origin.
    let mut w = h + v(0.0) * h.powi(3) / 6.0;
    for i in 1..steps {
        let r = i as f64 * h;
        let next = (2.0 * w * (1.0 + 5.0 * h * h * v(r) / 12.0) - w_prev * f(r - h)) / f(r + h);
        w_prev = w;
        w = next;
    }
    let slope = (w - w_prev) / h;
    r_end - w / slope
}

fn extrapolated(v: impl Fn(f64) -> f64 + Copy, r_end: f64) -> f64 {
    let a: Vec<f64> = [250, 500, 1000].iter().map(|n| numerov_a0(v, r_end, *n)).collect();
    // Fourth-order error: two Richardson steps agree when the sequence is asymptotic.
    let r1 = (16.0 * a[1] - a[0]) / 15.0;
    let r2 = (16.0 * a[2] - a[1]) / 15.0;
    assert!((r1 - r2).abs() < 1e-10, "Numerov sequence not asymptotic: {r1} {r2}");
    r2
}

#[test]
fn gaussian_scattering_length_matches_numerov() {
    for (amp, width) in [(1.0, 1.0), (10.0, 1.0), (0.5, 2.0)] {
        let want = extrapolated(|r: f64| amp * (-(r / width).powi(2)).exp(), 10.0 * width);
        let got = scattering_length_of(&PotentialSpec::Gaussian { amplitude: amp, width }).unwrap();
        assert!(((got - want) / want).abs() < 1e-8, "gaussian({amp}, {width}): {got} vs {want}");
    }
}

#[test]
fn scattering_length_scales_inversely_with_range() {
    let a = scattering_length_of(&PotentialSpec::Gaussian {
        amplitude: 1.0,
        width: 1.0,
    })
    .unwrap();
    // λ²v(λr) with λ = 2.
    let b = scattering_length_of(&PotentialSpec::Gaussian {
        amplitude: 4.0,
        width: 0.5,
    })
    .unwrap();
    assert!((b - a / 2.0).abs() < 1e-9 * a);
}
