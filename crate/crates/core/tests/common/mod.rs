//! Independent reference values used by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Green function of the flat unit 2-torus at displacement `(x, y)`.
///
/// Starts from the lattice sum `Σ_{k≠0} cos(2πk·d) / (4π²|k|²)` and sums the
/// first index in closed form,
/// `Σ_j cos(2πjx)/(j² + a²) = (π/a) cosh(πa(1-2x)) / sinh(πa)` for `x ∈ [0,1]`,
/// which leaves a series in the second index decaying like `e^{-2πk min(x, 1-x)}`.
pub fn torus2_green(x: f64, y: f64) -> f64 {
    let wrap = |v: f64| v - v.floor();
    let (mut x, mut y) = (wrap(x), wrap(y));
    let dist = |v: f64| v.min(1.0 - v);
    if dist(x) < dist(y) {
        std::mem::swap(&mut x, &mut y);
    }
    assert!(dist(x) > 1e-3, "oracle needs a displacement away from the origin");
    // k2 = 0: Σ_{j≠0} cos(2πjx)/j² = 2π²(x² - x + 1/6)
    let mut s = 2.0 * PI * PI * (x * x - x + 1.0 / 6.0);
    let u = 1.0 - 2.0 * x;
    for k in 1..100_000 {
        let a = PI * k as f64;
        let ratio = ((a * (u - 1.0)).exp() + (-a * (u + 1.0)).exp()) / (1.0 - (-2.0 * a).exp());
        let term = 2.0 * (2.0 * PI * k as f64 * y).cos() * PI / k as f64 * ratio;
        s += term;
        if ratio < 1e-18 {
            break;
        }
    }
    s / (4.0 * PI * PI)
}

/// Heat kernel `p_t` on the flat unit torus of any dimension by direct
/// summation over images, with `∂_t = Δ`.
pub fn torus_heat_images(t: f64, d: &[f64]) -> f64 {
    // terms beyond n² > 160 t are below e^{-40}
    let reach = (160.0 * t).sqrt().ceil() as i64 + 2;
    d.iter()
        .map(|&v| {
            (-reach..=reach)
                .map(|n| {
                    let s = v + n as f64;
                    (-s * s / (4.0 * t)).exp()
                })
                .sum::<f64>()
                / (4.0 * PI * t).sqrt()
        })
        .product()
}

/// Epstein zeta value `Σ_{k∈Z²∖0} |k|⁻⁴ = 4 ζ(2) β(2)`, with Catalan's
/// constant `β(2)`.
pub fn epstein_square_lattice_s2() -> f64 {
    let catalan = 0.915_965_594_177_219_015_054_603_514_932_384_110_774;
    4.0 * (PI * PI / 6.0) * catalan
}

/// Kolmogorov-Smirnov statistic of `samples` against the uniform
/// distribution on `[lo, hi]`.
pub fn ks_uniform(samples: &mut [f64], lo: f64, hi: f64) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 99% critical value of the one-sample KS statistic.
pub fn ks_critical_99(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}
