//! Heat-kernel regularization of empirical measures: `R_t` replaces each atom
//! `δ_x` by `p_t(x, ·) π`. Also the numerical checks of its distance bound
//! and of the energy comparison with `H_n`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gas::{hamiltonian, ParticleConfiguration, Potential};
use crate::manifold::{build_gauss_grid, build_grid, GridKind, ManifoldId, ManifoldPoint, QuadratureGrid};
use crate::measure::DiscreteMeasure;
use crate::rng::RngState;
use crate::spectral::SpectralModel;
use crate::transport::w1_exact;

const MASS_TOL: f64 = 1e-6;

/// `R_t` of a configuration, optionally discretized on a grid.
#[derive(Clone, Debug)]
pub struct RegularizedMeasure {
    pub centers: Vec<ManifoldPoint>,
    pub t: f64,
    pub grid_measure: Option<DiscreteMeasure>,
}

/// Discretize `(1/n) Σ p_t(x_i, ·) π` on `grid`. Weights are renormalized if
/// the raw mass is within `1e-6` of one; a larger deviation means the grid or
/// the eigen cutoff cannot resolve this `t`.
pub fn regularize(sm: &SpectralModel, centers: &[ManifoldPoint], t: f64, grid: &QuadratureGrid) -> Result<RegularizedMeasure> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::NonPositiveTime(t));
    }
    if centers.is_empty() {
        return Err(Error::InvalidArgument("nothing to regularize".into()));
    }
    if grid.manifold != sm.manifold() {
        return Err(Error::InvalidArgument("grid and spectral model disagree on the manifold".into()));
    }
    let density = if grid.kind == GridKind::Lattice {
        lattice_density(sm, centers, t, grid.resolution)?
    } else {
        pointwise_density(sm, centers, t, grid)?
    };
    let mut weights: Vec<f64> = density.iter().zip(&grid.weights).map(|(r, w)| r * w).collect();
    let mass: f64 = weights.iter().sum();
    if (mass - 1.0).abs() >= MASS_TOL || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::MassDeviation { mass, t, tol: MASS_TOL });
    }
    // negative roundoff far in the tails
    weights.iter_mut().for_each(|w| *w = w.max(0.0) / mass);
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(RegularizedMeasure {
        centers: centers.to_vec(),
        t,
        grid_measure: Some(DiscreteMeasure {
            manifold: grid.manifold,
            atoms: grid.nodes.clone(),
            weights,
            lattice: Some(grid.resolution).filter(|_| grid.kind == GridKind::Lattice),
        }),
    })
}

/// Torus lattice: the heat kernel factorizes over coordinates, so per center
/// only `d · res` one-dimensional factors are needed.
fn lattice_density(sm: &SpectralModel, centers: &[ManifoldPoint], t: f64, res: usize) -> Result<Vec<f64>> {
    let d = sm.manifold().dimension();
    let total = res.pow(d as u32);
    let n = centers.len() as f64;
    let mut density = vec![0.0; total];
    for x in centers {
        let mut factors = vec![vec![0.0; res]; d];
        for (c, f) in factors.iter_mut().enumerate() {
            for (j, v) in f.iter_mut().enumerate() {
                *v = sm.torus_heat_factor(t, j as f64 / res as f64 - x.coords[c])?.0;
            }
        }
        density.par_iter_mut().enumerate().for_each(|(idx, out)| {
            let mut rest = idx;
            let mut p = 1.0;
            for f in &factors {
                p *= f[rest % res];
                rest /= res;
            }
            *out += p / n;
        });
    }
    Ok(density)
}

fn pointwise_density(sm: &SpectralModel, centers: &[ManifoldPoint], t: f64, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    let n = centers.len() as f64;
    grid.nodes
        .par_iter()
        .map(|y| {
            let mut acc = 0.0;
            for x in centers {
                acc += sm.heat_kernel(t, x, y)?.value;
            }
            Ok(acc / n)
        })
        .collect()
}

/// `H(R_t(x⃗)) = (1/n²) Σ_{i<j} G_t(x_i, x_j) + (1/2n²) Σ_i G_t(x_i, x_i)
/// + (1/n) Σ_i (P_t V)(x_i)`, in closed form. Finite even when points
/// coincide.
pub fn regularized_energy(sm: &SpectralModel, points: &[ManifoldPoint], t: f64, pot: Option<&Potential>) -> Result<f64> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty configuration".into()));
    }
    let nf = n as f64;
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut acc = 0.5 * sm.regularized_green(t, &points[i], &points[i])?.value;
            for j in i + 1..n {
                acc += sm.regularized_green(t, &points[i], &points[j])?.value;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let pair: f64 = rows.iter().sum();
    let v: f64 = pot.map_or(0.0, |p| points.iter().map(|x| p.heat_smoothed(t, x)).sum());
    Ok(pair / (nf * nf) + v / nf)
}

/// Default grid for resolving `R_t` on `m`: lattice of the given resolution on
/// tori, Gauss product grid on the sphere.
pub fn regularization_grid(m: ManifoldId, resolution: usize) -> Result<QuadratureGrid> {
    match m {
        ManifoldId::Sphere2 => build_gauss_grid(resolution),
        _ => build_grid(m, resolution),
    }
}

/// Outcome of [`verify_distance_to_regularized`].
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceReport {
    pub t_list: Vec<f64>,
    /// Trial-averaged `W₁(R_t, i_n)` per `t`.
    pub mean_w1: Vec<f64>,
    /// Least-squares slope of `log mean_w1` against `log t`.
    pub slope: f64,
    /// `max W₁ / √t` over trials and times: the fitted constant.
    pub fitted_c: f64,
    /// Grid mesh, the discretization slack on every `W₁`.
    pub mesh: f64,
}

pub fn loglog_slope(t: &[f64], v: &[f64]) -> f64 {
    let xs: Vec<f64> = t.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `W₁(R_t(x⃗), i_n(x⃗))` for `trials` configurations of `n` uniform points,
/// computed exactly against the grid discretization of `R_t`.
pub fn verify_distance_to_regularized(
    sm: &SpectralModel,
    n: usize,
    trials: usize,
    t_list: &[f64],
    resolution: usize,
    rng: &mut RngState,
) -> Result<DistanceReport> {
    if t_list.len() < 2 || t_list.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument("need at least two positive times".into()));
    }
    let m = sm.manifold();
    let grid = regularization_grid(m, resolution)?;
    let configs: Vec<ParticleConfiguration> = (0..trials)
        .map(|_| ParticleConfiguration::sample_uniform(m, n, rng))
        .collect::<Result<_>>()?;
    let mut sums = vec![0.0; t_list.len()];
    let mut fitted_c: f64 = 0.0;
    for cfg in &configs {
        let emp = cfg.empirical_measure();
        for (k, &t) in t_list.iter().enumerate() {
            let reg = regularize(sm, &cfg.points, t, &grid)?;
            let (w, _) = w1_exact(&emp, reg.grid_measure.as_ref().expect("grid measure"))?;
            sums[k] += w;
            fitted_c = fitted_c.max(w / t.sqrt());
        }
    }
    let mean_w1: Vec<f64> = sums.iter().map(|s| s / trials as f64).collect();
    Ok(DistanceReport {
        slope: loglog_slope(t_list, &mean_w1),
        t_list: t_list.to_vec(),
        mean_w1,
        fitted_c,
        mesh: grid.mesh,
    })
}

/// One `(n, t)` cell of [`verify_energy_comparison`].
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyComparisonRow {
    pub manifold: ManifoldId,
    pub n: usize,
    pub t: f64,
    /// Largest `H(R_t) - H_n - t + (1/8πn) log t` (dimension 2) or
    /// `H(R_t) - H_n - t` (dimension 3) over the trials.
    pub deficit: f64,
    /// `deficit · n` in dimension 2, `deficit · n · t^{d/2-1}` otherwise.
    pub fitted_c: f64,
    /// `min Σ_{i<j}(G - G_t)(x_i, x_j) / n² + t` over trials; must be `≥ 0`.
    pub offdiagonal_margin: f64,
}

/// Outcome of [`verify_energy_comparison`].
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyComparisonReport {
    pub rows: Vec<EnergyComparisonRow>,
    /// Max of `fitted_c` over the rows.
    pub fitted_c: f64,
    /// `sup_t G_t(x, x) + (1/4π) log t` (dimension 2) or `sup_t G_t(x, x) √t`
    /// (dimension 3) over `t ∈ [1e-4, 1]`.
    pub diagonal_sup: f64,
    /// Spread of `diagonal_sup` across sample points.
    pub diagonal_spread: f64,
}

/// Diagonal profile `sup_{t ∈ [1e-4, 1]}` of the normalized `G_t(x, x)`.
pub fn diagonal_profile(sm: &SpectralModel, x: &ManifoldPoint) -> Result<f64> {
    let d = sm.manifold().dimension();
    let mut sup = f64::NEG_INFINITY;
    for k in 0..=40 {
        let t = 10f64.powf(-4.0 + 0.1 * k as f64);
        let g = sm.regularized_green(t, x, x)?.value;
        let v = if d == 2 { g + t.ln() / (4.0 * PI) } else { g * t.sqrt() };
        sup = sup.max(v);
    }
    Ok(sup)
}

/// Energy comparison on random collision-free configurations at the times
/// `t = 1/n` and `t = n^{-2/d}`.
pub fn verify_energy_comparison(
    sm: &SpectralModel,
    trials: usize,
    n_list: &[usize],
    pot: Option<&Potential>,
    rng: &mut RngState,
) -> Result<EnergyComparisonReport> {
    let m = sm.manifold();
    let d = m.dimension();
    let mut rows = Vec::new();
    for &n in n_list {
        let nf = n as f64;
        let mut ts = vec![1.0 / nf, nf.powf(-2.0 / d as f64)];
        ts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let configs: Vec<ParticleConfiguration> = (0..trials)
            .map(|_| ParticleConfiguration::sample_uniform(m, n, rng))
            .collect::<Result<_>>()?;
        for &t in &ts {
            let mut deficit = f64::NEG_INFINITY;
            let mut margin = f64::INFINITY;
            for cfg in &configs {
                let hn = hamiltonian(sm, cfg, pot);
                let hr = regularized_energy(sm, &cfg.points, t, pot)?;
                let mut def = hr - hn - t;
                if d == 2 {
                    def += t.ln() / (8.0 * PI * nf);
                }
                deficit = deficit.max(def);
                let mut off = 0.0;
                for i in 0..n {
                    for j in i + 1..n {
                        off += sm.green_value(&cfg.points[i], &cfg.points[j]) - sm.regularized_green(t, &cfg.points[i], &cfg.points[j])?.value;
                    }
                }
                margin = margin.min(off / (nf * nf) + t);
            }
            let scale = if d == 2 { nf } else { nf * t.powf(d as f64 / 2.0 - 1.0) };
            rows.push(EnergyComparisonRow {
                manifold: m,
                n,
                t,
                deficit,
                fitted_c: (deficit * scale).max(0.0),
                offdiagonal_margin: margin,
            });
        }
    }
    let mut profile = Vec::new();
    for _ in 0..10 {
        let x = crate::manifold::sample_uniform(m, rng);
        profile.push(diagonal_profile(sm, &x)?);
    }
    let hi = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = profile.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(EnergyComparisonReport {
        fitted_c: rows.iter().map(|r| r.fitted_c).fold(0.0, f64::max),
        rows,
        diagonal_sup: hi,
        diagonal_spread: hi - lo,
    })
}

/// `min (G - G_t)(x, y) + 2t` over `pairs` random pairs and each `t`.
pub fn offdiagonal_kernel_margin(sm: &SpectralModel, pairs: usize, t_list: &[f64], rng: &mut RngState) -> Result<f64> {
    let m = sm.manifold();
    let pts: Vec<(ManifoldPoint, ManifoldPoint)> = (0..pairs)
        .map(|_| (crate::manifold::sample_uniform(m, rng), crate::manifold::sample_uniform(m, rng)))
        .collect();
    let mut worst = f64::INFINITY;
    for &t in t_list {
        let w = pts
            .par_iter()
            .map(|(x, y)| -> Result<f64> { Ok(sm.green_value(x, y) - sm.regularized_green(t, x, y)?.value + 2.0 * t) })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        worst = worst.min(w);
    }
    Ok(worst)
}

/// Rows of the verification CSV: `manifold,n,t,deficit,fitted_C,slope`.
pub fn write_report_csv<W: std::io::Write>(
    mut w: W,
    energy: &EnergyComparisonReport,
    distance: Option<&DistanceReport>,
) -> Result<()> {
    writeln!(w, "manifold,n,t,deficit,fitted_C,slope")?;
    let slope = distance.map_or(String::new(), |d| format!("{:.6}", d.slope));
    for r in &energy.rows {
        writeln!(w, "{},{},{:.6e},{:.6e},{:.6e},{}", r.manifold, r.n, r.t, r.deficit, r.fitted_c, slope)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::sample_uniform;

    #[test]
    fn mass_and_uniform_limit() {
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let grid = build_grid(ManifoldId::Torus2, 32).unwrap();
        let x = ManifoldPoint::torus2(0.3, 0.8);
        let raw = lattice_density(&sm, &[x], 0.01, 32).unwrap();
        let mass: f64 = raw.iter().zip(&grid.weights).map(|(r, w)| r * w).sum();
        assert!((mass - 1.0).abs() < 1e-8);
        let r = regularize(&sm, &[x, ManifoldPoint::torus2(0.1, 0.1)], 10.0, &grid).unwrap();
        let mu = r.grid_measure.unwrap();
        let w0 = 1.0 / grid.len() as f64;
        assert!(mu.weights.iter().all(|w| (w / w0 - 1.0).abs() < 1e-8));
    }

    #[test]
    fn union_is_mixture() {
        let sm = SpectralModel::new(ManifoldId::Sphere2);
        let grid = build_gauss_grid(12).unwrap();
        let mut rng = RngState::from_seed(1);
        let a: Vec<ManifoldPoint> = (0..3).map(|_| sample_uniform(ManifoldId::Sphere2, &mut rng)).collect();
        let b: Vec<ManifoldPoint> = (0..2).map(|_| sample_uniform(ManifoldId::Sphere2, &mut rng)).collect();
        let both: Vec<ManifoldPoint> = a.iter().chain(&b).cloned().collect();
        let ra = pointwise_density(&sm, &a, 0.05, &grid).unwrap();
        let rb = pointwise_density(&sm, &b, 0.05, &grid).unwrap();
        let rab = pointwise_density(&sm, &both, 0.05, &grid).unwrap();
        for k in 0..grid.len() {
            assert!((rab[k] - (3.0 * ra[k] + 2.0 * rb[k]) / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn under_resolved_time_is_an_error() {
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let grid = build_grid(ManifoldId::Torus2, 4).unwrap();
        let x = ManifoldPoint::torus2(0.1, 0.2);
        assert!(matches!(regularize(&sm, &[x], 1e-4, &grid), Err(Error::MassDeviation { .. })));
    }

    #[test]
    fn single_particle_energy_is_half_diagonal() {
        let sm = SpectralModel::new(ManifoldId::Torus3);
        let x = ManifoldPoint::torus3(0.2, 0.4, 0.9);
        let h = regularized_energy(&sm, &[x], 0.03, None).unwrap();
        assert_eq!(h, 0.5 * sm.regularized_green(0.03, &x, &x).unwrap().value);
    }

    #[test]
    fn large_time_energy_vanishes() {
        let mut rng = RngState::from_seed(2);
        for m in ManifoldId::ALL {
            let sm = SpectralModel::new(m);
            let cfg = ParticleConfiguration::sample_uniform(m, 5, &mut rng).unwrap();
            assert!(regularized_energy(&sm, &cfg.points, 10.0, None).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn collisions_are_smoothed() {
        let sm = SpectralModel::new(ManifoldId::Sphere2);
        let p = ManifoldPoint::sphere(0.0, 0.6, 0.8);
        let q = ManifoldPoint::sphere(1.0, 0.0, 0.0);
        let cfg = ParticleConfiguration::new(ManifoldId::Sphere2, vec![p, p, q]).unwrap();
        assert_eq!(hamiltonian(&sm, &cfg, None), f64::INFINITY);
        assert!(regularized_energy(&sm, &cfg.points, 0.01, None).unwrap().is_finite());
    }

    #[test]
    fn diagonal_decreases_in_t() {
        for m in ManifoldId::ALL {
            let sm = SpectralModel::new(m);
            let x = match m {
                ManifoldId::Sphere2 => ManifoldPoint::sphere(0.0, 0.0, 1.0),
                _ => ManifoldPoint::torus3(0.1, 0.2, 0.3),
            };
            let mut prev = f64::INFINITY;
            for k in 0..30 {
                let t = 10f64.powf(-4.0 + 0.15 * k as f64);
                let g = sm.regularized_green(t, &x, &x).unwrap().value;
                assert!(g <= prev + 1e-12, "{m} t={t}");
                prev = g;
            }
        }
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let t = [0.001, 0.01, 0.1];
        let v: Vec<f64> = t.iter().map(|x: &f64| 3.0 * x.powf(0.7)).collect();
        assert!((loglog_slope(&t, &v) - 0.7).abs() < 1e-12);
    }
}
