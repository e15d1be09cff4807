//! Invariant suites over the kernels, transport and regularization, as run by
//! `coulomb verify`. Each check records the measured value, the threshold and
//! the relation between them.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::green_quadrature::{green_weak_identity_check, integrate_against_green, TestFunction};
use crate::manifold::{build_gauss_grid, build_gauss_grid_sized, build_grid, geodesic_distance, sample_uniform, ManifoldId, ManifoldPoint, QuadratureGrid};
use crate::measure::DiscreteMeasure;
use crate::quadrature::adaptive_simpson;
use crate::regularize::{offdiagonal_kernel_margin, verify_distance_to_regularized, verify_energy_comparison};
use crate::rng::RngState;
use crate::spectral::SpectralModel;
use crate::transport::{
    energy_of_difference, verify_distance_energy_comparison, w1_dual_certificate, w1_exact, w1_same_support, EnergyMethod,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Relation {
    AtMost(f64),
    AtLeast(f64),
    Within(f64, f64),
    /// Reported only.
    Info,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub relation: Relation,
}

impl Check {
    pub fn new(suite: &'static str, name: impl Into<String>, value: f64, relation: Relation) -> Self {
        Check {
            suite,
            name: name.into(),
            value,
            relation,
        }
    }

    pub fn passed(&self) -> bool {
        match self.relation {
            Relation::AtMost(b) => self.value <= b,
            Relation::AtLeast(b) => self.value >= b,
            Relation::Within(lo, hi) => self.value >= lo && self.value <= hi,
            Relation::Info => true,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = match self.relation {
            Relation::AtMost(b) => format!("<= {b:.3e}"),
            Relation::AtLeast(b) => format!(">= {b:.3e}"),
            Relation::Within(lo, hi) => format!("in [{lo}, {hi}]"),
            Relation::Info => "(info)".to_string(),
        };
        let status = match (self.relation, self.passed()) {
            (Relation::Info, _) => "info",
            (_, true) => "ok",
            (_, false) => "FAIL",
        };
        write!(f, "{:<5} {:<11} {:<52} {:>12.4e} {}", status, self.suite, self.name, self.value, rel)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Spectral,
    Transport,
    Regularize,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Vec<Suite>> {
        match s {
            "spectral" => Some(vec![Suite::Spectral]),
            "transport" => Some(vec![Suite::Transport]),
            "regularize" => Some(vec![Suite::Regularize]),
            "all" => Some(vec![Suite::Spectral, Suite::Transport, Suite::Regularize]),
            _ => None,
        }
    }
}

/// The grid on which heat-kernel masses and semigroup integrals are taken:
/// the 64-lattice on `T²`, a 32-lattice on `T³`, 32×32 Gauss nodes on the
/// sphere.
pub fn heat_grid(m: ManifoldId) -> Result<QuadratureGrid> {
    match m {
        ManifoldId::Torus2 => build_grid(m, 64),
        ManifoldId::Torus3 => build_grid(m, 32),
        ManifoldId::Sphere2 => build_gauss_grid_sized(32, 32),
    }
}

fn random_pairs(m: ManifoldId, count: usize, min_distance: f64, rng: &mut RngState) -> Vec<(ManifoldPoint, ManifoldPoint)> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = sample_uniform(m, rng);
        let y = sample_uniform(m, rng);
        if geodesic_distance(m, &x, &y) >= min_distance {
            out.push((x, y));
        }
    }
    out
}

fn max_over<T: Sync, F: Fn(&T) -> Result<f64> + Sync + Send>(items: &[T], f: F) -> Result<f64> {
    let v = items.par_iter().map(f).collect::<Result<Vec<f64>>>()?;
    Ok(v.into_iter().fold(0.0, f64::max))
}

/// Heat kernel and Green function invariants on one manifold.
pub fn spectral_suite(sm: &SpectralModel, rng: &mut RngState) -> Result<Vec<Check>> {
    let m = sm.manifold();
    let s = "spectral";
    let mut out = Vec::new();
    let grid = heat_grid(m)?;

    let pairs = random_pairs(m, 1000, 0.0, rng);
    let asym = max_over(&pairs, |(x, y)| {
        let mut worst: f64 = 0.0;
        for t in [0.003, 0.05, 0.5] {
            worst = worst.max((sm.heat_kernel(t, x, y)?.value - sm.heat_kernel(t, y, x)?.value).abs());
            worst = worst.max((sm.regularized_green(t, x, y)?.value - sm.regularized_green(t, y, x)?.value).abs());
        }
        Ok(worst.max((sm.green_value(x, y) - sm.green_value(y, x)).abs()))
    })?;
    out.push(Check::new(s, format!("{m}: symmetry p_t, G, G_t (1000 pairs)"), asym, Relation::AtMost(0.0)));

    let xs: Vec<ManifoldPoint> = (0..4).map(|_| sample_uniform(m, rng)).collect();
    let mut mass_err: f64 = 0.0;
    for t in [0.01, 0.1, 1.0] {
        for x in &xs {
            let mass: f64 = grid
                .nodes
                .par_iter()
                .zip(&grid.weights)
                .map(|(y, w)| w * sm.heat_kernel(t, x, y).map(|k| k.value).unwrap_or(f64::NAN))
                .sum();
            mass_err = mass_err.max((mass - 1.0).abs());
        }
    }
    out.push(Check::new(s, format!("{m}: mass |∫p_t dπ - 1| ({} nodes)", grid.len()), mass_err, Relation::AtMost(1e-8)));

    let mut semi: f64 = 0.0;
    let times = [0.01, 0.05, 0.1];
    for &(x, y) in pairs.iter().take(3) {
        for &t in &times {
            for &u in &times {
                let conv: f64 = grid
                    .nodes
                    .par_iter()
                    .zip(&grid.weights)
                    .map(|(z, w)| {
                        w * sm.heat_kernel(t, &x, z).map(|k| k.value).unwrap_or(f64::NAN)
                            * sm.heat_kernel(u, z, &y).map(|k| k.value).unwrap_or(f64::NAN)
                    })
                    .sum();
                let direct = sm.heat_kernel(t + u, &x, &y)?.value;
                let err = (conv - direct).abs();
                semi = if err.is_nan() { f64::INFINITY } else { semi.max(err) };
            }
        }
    }
    out.push(Check::new(s, format!("{m}: semigroup |p_t*p_s - p_(t+s)|"), semi, Relation::AtMost(1e-6)));

    let unif = max_over(&pairs[..100], |(x, y)| Ok((sm.heat_kernel(10.0, x, y)?.value - 1.0).abs()))?;
    out.push(Check::new(s, format!("{m}: uniformity |p_10 - 1|"), unif, Relation::AtMost(1e-10)));

    let neg = max_over(&pairs[..200], |(x, y)| {
        let mut worst: f64 = 0.0;
        for t in [1e-3, 0.02, 0.3] {
            let k = sm.heat_kernel(t, x, y)?;
            worst = worst.max(-(k.value + k.truncation_bound));
        }
        Ok(worst)
    })?;
    out.push(Check::new(s, format!("{m}: positivity -(p_t + bound)"), neg, Relation::AtMost(1e-12)));

    if m.is_torus() {
        let gap = max_over(&pairs[..200], |(x, y)| {
            let mut worst: f64 = 0.0;
            for t in [1e-3, 0.01, 0.1, 1.0] {
                let a = sm.heat_kernel_eigen(t, x, y)?;
                let b = sm.heat_kernel_images(t, x, y)?;
                let excess = (a.value - b.value).abs() - a.truncation_bound - b.truncation_bound - 1e-12 * a.value.abs();
                worst = worst.max(excess);
            }
            Ok(worst)
        })?;
        out.push(Check::new(s, format!("{m}: eigen vs image sums beyond bounds"), gap, Relation::AtMost(1e-12)));
    }

    // large-time decay at the spectral gap
    let big_t = 0.5;
    let diag_max = xs
        .iter()
        .map(|x| sm.heat_kernel(big_t, x, x).map(|k| k.value))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut decay: f64 = f64::NEG_INFINITY;
    for sdt in [0.05, 0.2] {
        let bound = (-sm.spectral_gap() * sdt).exp() * (diag_max - 1.0);
        let sup = max_over(&pairs[..100], |(x, y)| Ok((sm.heat_kernel(big_t + sdt, x, y)?.value - 1.0).abs()))?;
        decay = decay.max(sup - bound);
    }
    out.push(Check::new(s, format!("{m}: gap decay sup|p_(T+s)-1| - bound"), decay, Relation::AtMost(1e-12)));

    // Green function
    let ggrid = green_grid(m)?;
    let zm = max_over(&xs[..3], |x| Ok(integrate_against_green(sm, x, |_| 1.0, &ggrid).abs()))?;
    out.push(Check::new(s, format!("{m}: Green zero mean |∫G dπ|"), zm, Relation::AtMost(1e-6)));

    let mut weak: f64 = 0.0;
    for f in TestFunction::standard_set(m) {
        weak = weak.max(green_weak_identity_check(sm, &f, &xs[0], &ggrid));
    }
    out.push(Check::new(s, format!("{m}: weak identity ∫GΔf = -f + ∫f"), weak, Relation::AtMost(1e-5)));

    let sep = random_pairs(m, 100, 0.1 * m.diameter(), rng);
    let rep = max_over(&sep, |(x, y)| {
        let integral = green_heat_integral(sm, x, y)?;
        Ok((integral - sm.green_value(x, y)).abs())
    })?;
    out.push(Check::new(s, format!("{m}: G vs ∫(p_t - 1)dt (100 pairs)"), rep, Relation::AtMost(1e-6)));

    let small = max_over(&sep, |(x, y)| {
        let t = 1e-4;
        let gt = sm.regularized_green(t, x, y)?;
        Ok((gt.value - sm.green_value(x, y)).abs() - 2.0 * t - gt.truncation_bound)
    })?;
    out.push(Check::new(s, format!("{m}: |G_1e-4 - G| - 2e-4"), small, Relation::AtMost(1e-12)));

    let far = max_over(&sep, |(x, y)| Ok(sm.regularized_green(10.0, x, y)?.value.abs()))?;
    out.push(Check::new(s, format!("{m}: |G_10|"), far, Relation::AtMost(1e-8)));
    Ok(out)
}

/// Grid for the singularity-corrected Green quadratures.
pub fn green_grid(m: ManifoldId) -> Result<QuadratureGrid> {
    match m {
        ManifoldId::Torus2 => build_grid(m, 64),
        ManifoldId::Torus3 => build_grid(m, 32),
        ManifoldId::Sphere2 => build_gauss_grid(48),
    }
}

/// `∫₀^∞ (p_t(x, y) - 1) dt` for `x ≠ y`: below `t₀ = d²/160` the kernel is
/// under `e^{-40}` times its scale and the integrand is `-1`; adaptive
/// Simpson in `√t` on `[t₀, T]`; the closed tail `∫_T^∞ = G_{T/2}(x, y)`.
pub fn green_heat_integral(sm: &SpectralModel, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
    let big_t: f64 = 0.25;
    let r = geodesic_distance(sm.manifold(), x, y);
    let t0 = (r * r / 160.0).min(big_t);
    let f = |s: f64| 2.0 * s * (sm.heat_kernel(s * s, x, y).map(|k| k.value).unwrap_or(f64::NAN) - 1.0);
    let head = -t0 + adaptive_simpson(&f, t0.sqrt(), big_t.sqrt(), 1e-10, 40);
    let tail = sm.regularized_green(0.5 * big_t, x, y)?.value;
    Ok(head + tail)
}

/// Metric axioms, duality gaps and the distance/energy comparisons.
pub fn transport_suite(models: &[SpectralModel], rng: &mut RngState) -> Result<Vec<Check>> {
    let s = "transport";
    let mut out = Vec::new();
    for sm in models {
        let m = sm.manifold();
        // a fixed universe of 30 atoms, random weightings on it
        let universe: Vec<ManifoldPoint> = (0..30).map(|_| sample_uniform(m, rng)).collect();
        let rand_measure = |rng: &mut RngState| {
            let w: Vec<f64> = (0..universe.len()).map(|_| rng.random_range(0.0..1.0)).collect();
            let total: f64 = w.iter().sum();
            DiscreteMeasure::new(m, universe.clone(), w.iter().map(|v| v / total).collect()).expect("valid")
        };
        let mut tri: f64 = 0.0;
        let mut sym: f64 = 0.0;
        let mut ident: f64 = 0.0;
        let mut gap: f64 = 0.0;
        for _ in 0..200 {
            let (a, b, c) = (rand_measure(rng), rand_measure(rng), rand_measure(rng));
            let (ab, plan) = w1_exact(&a, &b)?;
            let (ba, _) = w1_exact(&b, &a)?;
            let (bc, _) = w1_exact(&b, &c)?;
            let (ac, _) = w1_exact(&a, &c)?;
            tri = tri.max(ac - ab - bc);
            sym = sym.max((ab - ba).abs());
            ident = ident.max(w1_exact(&a, &a)?.0.abs());
            let cert = w1_dual_certificate(&a, &b, &plan)?;
            gap = gap.max(cert.duality_gap.abs()).max(cert.lipschitz_excess);
        }
        out.push(Check::new(s, format!("{m}: triangle excess (200 triples)"), tri, Relation::AtMost(1e-9)));
        out.push(Check::new(s, format!("{m}: symmetry |W(a,b) - W(b,a)|"), sym, Relation::AtMost(1e-9)));
        out.push(Check::new(s, format!("{m}: W(a,a)"), ident, Relation::AtMost(1e-9)));
        out.push(Check::new(s, format!("{m}: duality gap and Lipschitz excess"), gap, Relation::AtMost(1e-9)));

        if m != ManifoldId::Torus3 {
            let res = if m == ManifoldId::Sphere2 { 24 } else { 48 };
            let rep = verify_distance_energy_comparison(sm, 100, res, rng)?;
            out.push(Check::new(s, format!("{m}: max W₁/√E (100 density pairs)"), rep.worst_ratio, Relation::AtMost(1.02)));
            out.push(Check::new(
                s,
                format!("{m}: max (1/2)W₁(μ,π)²/H(μ)"),
                rep.worst_energy_ratio,
                Relation::AtMost(1.02),
            ));
        }
    }
    // single-mode closed form on T²
    if let Some(sm) = models.iter().find(|sm| sm.manifold() == ManifoldId::Torus2) {
        let grid = build_grid(ManifoldId::Torus2, 64)?;
        let rho: Vec<f64> = grid.nodes.iter().map(|p| 1.0 + 0.5 * (2.0 * PI * p.coords[0]).cos()).collect();
        let mu = DiscreteMeasure::from_density(&grid, &rho, 1e-8)?;
        let pi = DiscreteMeasure::from_grid(&grid);
        let e = energy_of_difference(sm, &mu, &pi, EnergyMethod::Fourier { cutoff: 32 })?;
        let exact = 1.0 / (32.0 * PI * PI);
        out.push(Check::new(s, "torus2: single-mode E relative error", (e / exact - 1.0).abs(), Relation::AtMost(0.02)));
        let w = w1_same_support(ManifoldId::Torus2, &grid.nodes, &mu.weights, &pi.weights)?;
        out.push(Check::new(s, "torus2: single-mode W₁/√E", w / exact.sqrt(), Relation::AtMost(1.02)));
    }
    Ok(out)
}

/// Off-diagonal and diagonal behavior of `G_t`, the distance of `R_t` to the
/// empirical measure, and the energy comparison.
pub fn regularize_suite(models: &[SpectralModel], rng: &mut RngState) -> Result<Vec<Check>> {
    let s = "regularize";
    let mut out = Vec::new();
    let t_grid = [1e-3, 3e-3, 0.01, 0.03, 0.1];
    for sm in models {
        let m = sm.manifold();
        let margin = offdiagonal_kernel_margin(sm, 1000, &t_grid, rng)?;
        out.push(Check::new(s, format!("{m}: min (G - G_t) + 2t (1000 pairs x 5 t)"), margin, Relation::AtLeast(-1e-8)));
        let rep = verify_energy_comparison(sm, 10, &[8, 16], None, rng)?;
        let off = rep.rows.iter().map(|r| r.offdiagonal_margin).fold(f64::INFINITY, f64::min);
        out.push(Check::new(s, format!("{m}: Σ(G - G_t)/n² + t over configurations"), off, Relation::AtLeast(-1e-10)));
        out.push(Check::new(s, format!("{m}: fitted comparison constant"), rep.fitted_c, Relation::Info));
        match m.dimension() {
            2 => {
                out.push(Check::new(
                    s,
                    format!("{m}: sup_t G_t(x,x) + log(t)/4π"),
                    rep.diagonal_sup,
                    Relation::AtMost(f64::MAX),
                ));
                if m.is_torus() {
                    out.push(Check::new(s, format!("{m}: spread of diagonal sup over x"), rep.diagonal_spread, Relation::AtMost(1e-10)));
                }
            }
            _ => out.push(Check::new(s, format!("{m}: sup_t G_t(x,x)√t"), rep.diagonal_sup, Relation::AtMost(f64::MAX))),
        }
        if m == ManifoldId::Torus2 {
            let dist = verify_distance_to_regularized(sm, 8, 10, &[2.5e-4, 5e-4, 1e-3, 2e-3], 64, rng)?;
            out.push(Check::new(s, "torus2: max W₁(R_t,i_n)/√t", dist.fitted_c, Relation::AtMost(2.05)));
            out.push(Check::new(s, "torus2: log-log slope, t in [2.5e-4, 2e-3]", dist.slope, Relation::Within(0.45, 0.55)));
            let wide = verify_distance_to_regularized(sm, 8, 10, &[1e-3, 4e-3, 0.016, 0.064], 64, rng)?;
            out.push(Check::new(s, "torus2: log-log slope, t in [1e-3, 0.064]", wide.slope, Relation::Info));
        }
    }
    Ok(out)
}

/// Run the named suites on the given models.
pub fn run_suites(suites: &[Suite], models: &[SpectralModel], rng: &mut RngState) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for suite in suites {
        match suite {
            Suite::Spectral => {
                for sm in models {
                    out.extend(spectral_suite(sm, rng)?);
                }
            }
            Suite::Transport => out.extend(transport_suite(models, rng)?),
            Suite::Regularize => out.extend(regularize_suite(models, rng)?),
        }
    }
    Ok(out)
}
