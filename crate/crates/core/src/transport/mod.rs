//! Wasserstein-1 distances between discrete measures, Kantorovich duality
//! certificates, and the Green energy distance `√E(μ - ν)`.

mod simplex;
mod sinkhorn;

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

pub use sinkhorn::EntropicBracket;

use crate::error::{Error, Result};
use crate::manifold::{build_grid, geodesic_distance, ManifoldId, ManifoldPoint, QuadratureGrid};
pub use crate::measure::DiscreteMeasure;
use crate::measure::green_bilinear;
use crate::rng::RngState;
use crate::spectral::SpectralModel;

/// Atoms per side above which the dense exact solver refuses to run.
pub const EXACT_SIZE_CAP: usize = 5000;

/// Sparse coupling: `(source index, sink index, mass)` triples.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub flows: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

impl TransportPlan {
    /// Write the plan as CSV with header `source,sink,mass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "source,sink,mass")?;
        for (i, j, f) in &self.flows {
            writeln!(w, "{i},{j},{f:.17e}")?;
        }
        Ok(())
    }

    /// Largest deviation of the plan's marginals from those of `mu`, `nu`.
    pub fn marginal_error(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        let mut rows = vec![0.0; mu.len()];
        let mut cols = vec![0.0; nu.len()];
        for &(i, j, f) in &self.flows {
            rows[i] += f;
            cols[j] += f;
        }
        let r = rows.iter().zip(&mu.weights).map(|(a, b)| (a - b).abs());
        let c = cols.iter().zip(&nu.weights).map(|(a, b)| (a - b).abs());
        r.chain(c).fold(0.0, f64::max)
    }
}

/// Dense row-major matrix of geodesic distances.
pub fn cost_matrix(m: ManifoldId, xs: &[ManifoldPoint], ys: &[ManifoldPoint]) -> Vec<f64> {
    let cols = ys.len();
    let mut out = vec![0.0; xs.len() * cols];
    out.par_chunks_mut(cols.max(1))
        .zip(xs.par_iter())
        .for_each(|(row, x)| {
            for (c, y) in row.iter_mut().zip(ys) {
                *c = geodesic_distance(m, x, y);
            }
        });
    out
}

fn check_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.manifold != nu.manifold {
        return Err(Error::InvalidArgument(format!(
            "measures live on different manifolds ({} vs {})",
            mu.manifold, nu.manifold
        )));
    }
    Ok(())
}

fn exact_solve(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(simplex::SimplexSolution, Vec<f64>)> {
    check_pair(mu, nu)?;
    if mu.len() > EXACT_SIZE_CAP || nu.len() > EXACT_SIZE_CAP {
        return Err(Error::SizeCap {
            rows: mu.len(),
            cols: nu.len(),
            cap: EXACT_SIZE_CAP,
        });
    }
    let cost = cost_matrix(mu.manifold, &mu.atoms, &nu.atoms);
    let sol = simplex::solve(&mu.weights, &nu.weights, &cost)?;
    Ok((sol, cost))
}

/// Exact `W₁(μ, ν)` under the geodesic distance, with an optimal plan.
pub fn w1_exact(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(f64, TransportPlan)> {
    let (sol, _) = exact_solve(mu, nu)?;
    let plan = TransportPlan {
        flows: sol.flows,
        cost: sol.cost,
    };
    Ok((plan.cost, plan))
}

/// `W₁` between two weightings of one atom set. Mass shared by both stays
/// in place (optimal for any metric cost), so only the positive and negative
/// parts of `a - b` enter the solver.
pub fn w1_same_support(m: ManifoldId, atoms: &[ManifoldPoint], a: &[f64], b: &[f64]) -> Result<f64> {
    let mut src = Vec::new();
    let mut snk = Vec::new();
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        let d = x - y;
        if d > 0.0 {
            src.push((k, d));
        } else if d < 0.0 {
            snk.push((k, -d));
        }
    }
    let ms: f64 = src.iter().map(|p| p.1).sum();
    let mt: f64 = snk.iter().map(|p| p.1).sum();
    if src.is_empty() || snk.is_empty() || ms <= 0.0 {
        return Ok(0.0);
    }
    if src.len() > EXACT_SIZE_CAP || snk.len() > EXACT_SIZE_CAP {
        return Err(Error::SizeCap {
            rows: src.len(),
            cols: snk.len(),
            cap: EXACT_SIZE_CAP,
        });
    }
    let xs: Vec<ManifoldPoint> = src.iter().map(|p| atoms[p.0]).collect();
    let ys: Vec<ManifoldPoint> = snk.iter().map(|p| atoms[p.0]).collect();
    let wa: Vec<f64> = src.iter().map(|p| p.1 / ms).collect();
    let wb: Vec<f64> = snk.iter().map(|p| p.1 / mt).collect();
    let cost = cost_matrix(m, &xs, &ys);
    let sol = simplex::solve(&wa, &wb, &cost)?;
    Ok(0.5 * (ms + mt) * sol.cost)
}

/// Outcome of checking a plan against Kantorovich-Rubinstein duality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualCertificate {
    /// Plan cost minus the dual value `∫ f dμ - ∫ f dν`.
    pub duality_gap: f64,
    pub dual_value: f64,
    pub plan_cost: f64,
    /// `max (f(a) - f(b) - d(a, b))` over all atom pairs; `≤ 0` when `f` is
    /// 1-Lipschitz.
    pub lipschitz_excess: f64,
}

/// Certify `plan` by an optimal 1-Lipschitz potential.
///
/// Dual potentials are recovered from the optimal spanning-tree basis of the
/// exact solver, checked for feasibility, and pushed through the c-transform
/// `f(z) = min_j (d(z, y_j) + ψ_j)`, which is 1-Lipschitz by construction and
/// still attains the optimum. The gap of an optimal plan is zero up to
/// rounding; a suboptimal plan shows its excess cost.
pub fn w1_dual_certificate(mu: &DiscreteMeasure, nu: &DiscreteMeasure, plan: &TransportPlan) -> Result<DualCertificate> {
    let marg = plan.marginal_error(mu, nu);
    if marg > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "plan marginals deviate by {marg:e}"
        )));
    }
    let (sol, cost) = exact_solve(mu, nu)?;
    let m = nu.len();
    let mut worst: f64 = 0.0;
    for i in 0..mu.len() {
        for j in 0..m {
            worst = worst.max(sol.row_potential[i] - sol.col_potential[j] - cost[i * m + j]);
        }
    }
    if worst > 1e-9 {
        return Err(Error::InfeasibleDual(format!(
            "recovered potentials violate the cost bound by {worst:e}"
        )));
    }
    let manifold = mu.manifold;
    let psi = &sol.col_potential;
    let f = |z: &ManifoldPoint| {
        nu.atoms
            .iter()
            .zip(psi)
            .map(|(y, p)| geodesic_distance(manifold, z, y) + p)
            .fold(f64::INFINITY, f64::min)
    };
    let all: Vec<ManifoldPoint> = mu.atoms.iter().chain(&nu.atoms).copied().collect();
    let values: Vec<f64> = all.iter().map(f).collect();
    let mut excess = f64::NEG_INFINITY;
    for (a, fa) in all.iter().zip(&values) {
        for (b, fb) in all.iter().zip(&values) {
            excess = excess.max(fa - fb - geodesic_distance(manifold, a, b));
        }
    }
    if excess > 1e-12 {
        return Err(Error::InfeasibleDual(format!(
            "c-transform is not 1-Lipschitz (excess {excess:e})"
        )));
    }
    let k = mu.len();
    let dual_value = mu.weights.iter().zip(&values[..k]).map(|(w, v)| w * v).sum::<f64>()
        - nu.weights.iter().zip(&values[k..]).map(|(w, v)| w * v).sum::<f64>();
    let plan_cost: f64 = plan
        .flows
        .iter()
        .map(|&(i, j, f)| f * geodesic_distance(manifold, &mu.atoms[i], &nu.atoms[j]))
        .sum();
    Ok(DualCertificate {
        duality_gap: plan_cost - dual_value,
        dual_value,
        plan_cost,
        lipschitz_excess: excess,
    })
}

/// `W₁(μ, ρ π)` with `ρ π` discretized on `grid` (`ρ ≡ 1` if omitted), and the
/// discretization error bound `grid.mesh`.
pub fn w1_to_equilibrium(mu: &DiscreteMeasure, grid: &QuadratureGrid, rho: Option<&[f64]>) -> Result<(f64, f64)> {
    let target = match rho {
        Some(r) => DiscreteMeasure::from_density(grid, r, 1e-8)?,
        None => DiscreteMeasure::from_grid(grid),
    };
    let (v, _) = w1_exact(mu, &target)?;
    Ok((v, grid.mesh))
}

/// Entropic bracket `[lower, upper] ∋ W₁(μ, ν)` from Sinkhorn at temperature
/// `epsilon`.
pub fn w1_entropic(mu: &DiscreteMeasure, nu: &DiscreteMeasure, epsilon: f64) -> Result<EntropicBracket> {
    check_pair(mu, nu)?;
    let cost = cost_matrix(mu.manifold, &mu.atoms, &nu.atoms);
    sinkhorn::bracket(&mu.weights, &nu.weights, &cost, epsilon, 1e-9, 200_000)
}

/// How `E(μ - ν)` is evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnergyMethod {
    /// Torus only: `Σ_{0<|k|∞≤K} |μ̂(k) - ν̂(k)|² / (4π²|k|²)`.
    Fourier { cutoff: usize },
    /// `ΣΣ s_i s_j G(x_i, x_j)` for the signed measure `s = μ - ν`.
    DoubleSum { exclude_diagonal: bool },
}

/// `E(μ - ν) = ∫∫ G d(μ-ν) d(μ-ν)`.
pub fn energy_of_difference(sm: &SpectralModel, mu: &DiscreteMeasure, nu: &DiscreteMeasure, method: EnergyMethod) -> Result<f64> {
    check_pair(mu, nu)?;
    let value = match method {
        EnergyMethod::Fourier { cutoff } => {
            if !sm.manifold().is_torus() {
                return Err(Error::InvalidArgument("the Fourier path needs a torus".into()));
            }
            fourier_energy(sm.manifold().dimension(), mu, nu, cutoff)
        }
        EnergyMethod::DoubleSum { exclude_diagonal } => {
            let (atoms, s, lattice) = signed_difference(mu, nu);
            green_bilinear(sm, &atoms, &s, &s, lattice, exclude_diagonal)
        }
    };
    if value < -1e-9 {
        return Err(Error::NegativeEnergy(value));
    }
    Ok(value)
}

/// The energy distance `√E(μ - ν)` (negative rounding noise clamps to 0).
pub fn energy_distance(sm: &SpectralModel, mu: &DiscreteMeasure, nu: &DiscreteMeasure, method: EnergyMethod) -> Result<f64> {
    Ok(energy_of_difference(sm, mu, nu, method)?.max(0.0).sqrt())
}

fn signed_difference(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> (Vec<ManifoldPoint>, Vec<f64>, Option<usize>) {
    if mu.atoms == nu.atoms {
        let s = mu.weights.iter().zip(&nu.weights).map(|(a, b)| a - b).collect();
        let lattice = if mu.lattice == nu.lattice { mu.lattice } else { None };
        return (mu.atoms.clone(), s, lattice);
    }
    let atoms = mu.atoms.iter().chain(&nu.atoms).copied().collect();
    let s = mu.weights.iter().copied().chain(nu.weights.iter().map(|w| -w)).collect();
    (atoms, s, None)
}

fn fourier_energy(d: usize, mu: &DiscreteMeasure, nu: &DiscreteMeasure, cutoff: usize) -> f64 {
    let k = cutoff as i64;
    let side = (2 * k + 1) as usize;
    let atoms: Vec<(&ManifoldPoint, f64)> = mu
        .atoms
        .iter()
        .zip(mu.weights.iter().copied())
        .chain(nu.atoms.iter().zip(nu.weights.iter().map(|w| -w)))
        .collect();
    // per-atom phase tables e^{-2πi k x_c}, k ∈ [-K, K]
    let phases: Vec<Vec<(f64, f64)>> = atoms
        .iter()
        .map(|(p, _)| {
            let mut t = Vec::with_capacity(d * side);
            for c in 0..d {
                for kk in -k..=k {
                    let a = -2.0 * PI * kk as f64 * p.coords[c];
                    t.push((a.cos(), a.sin()));
                }
            }
            t
        })
        .collect();
    let total = side.pow(d as u32);
    (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut rest = idx;
            let mut ks = [0i64; 3];
            let mut norm2 = 0i64;
            for kc in ks.iter_mut().take(d) {
                *kc = (rest % side) as i64 - k;
                rest /= side;
                norm2 += *kc * *kc;
            }
            if norm2 == 0 {
                return 0.0;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for ((_, w), tab) in atoms.iter().zip(&phases) {
                let (mut pr, mut pi) = (1.0, 0.0);
                for c in 0..d {
                    let (cr, ci) = tab[c * side + (ks[c] + k) as usize];
                    let nr = pr * cr - pi * ci;
                    pi = pr * ci + pi * cr;
                    pr = nr;
                }
                re += w * pr;
                im += w * pi;
            }
            (re * re + im * im) / (4.0 * PI * PI * norm2 as f64)
        })
        .sum()
}

/// Mean-field energy `H(μ) = (1/2) E(μ - π)` of a density discretized on a
/// torus lattice, via the Fourier path at the grid's Nyquist cutoff.
pub fn smooth_energy(sm: &SpectralModel, mu: &DiscreteMeasure) -> Result<f64> {
    let res = mu
        .lattice
        .ok_or_else(|| Error::InvalidArgument("smooth_energy needs a lattice measure".into()))?;
    let grid = build_grid(mu.manifold, res)?;
    let pi = DiscreteMeasure::from_grid(&grid);
    Ok(0.5 * energy_of_difference(sm, mu, &pi, EnergyMethod::Fourier { cutoff: res / 2 })?)
}

/// Random smooth positive density on the grid: a low-frequency trigonometric
/// (torus) or degree-≤2 polynomial (sphere) perturbation of 1, clipped below
/// at 0.05 and renormalized.
pub fn random_smooth_density(grid: &QuadratureGrid, rng: &mut RngState) -> Vec<f64> {
    let m = grid.manifold;
    let raw: Vec<f64> = match m {
        ManifoldId::Sphere2 => {
            let lin: [f64; 3] = [rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)];
            let mut q = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in a..3 {
                    let v = rng.random_range(-0.6..0.6);
                    q[a][b] = v;
                    q[b][a] = v;
                }
            }
            let tr = (q[0][0] + q[1][1] + q[2][2]) / 3.0;
            (0..3).for_each(|a| q[a][a] -= tr);
            grid.nodes
                .iter()
                .map(|p| {
                    let u = p.coords;
                    let mut v = 1.0 + lin[0] * u[0] + lin[1] * u[1] + lin[2] * u[2];
                    for a in 0..3 {
                        for b in 0..3 {
                            v += q[a][b] * u[a] * u[b];
                        }
                    }
                    v
                })
                .collect()
        }
        _ => {
            let d = m.dimension();
            let mut modes = Vec::new();
            let range = -2i32..=2;
            let mut push = |k: [i32; 3], rng: &mut RngState| {
                modes.push((k, rng.random_range(-0.3..0.3), rng.random_range(0.0..2.0 * PI)));
            };
            for a in range.clone() {
                for b in range.clone() {
                    let c_range = if d == 3 { -2..=2 } else { 0..=0 };
                    for c in c_range {
                        let k = [a, b, c];
                        // one representative of each ±k pair
                        if k > [0, 0, 0] {
                            push(k, rng);
                        }
                    }
                }
            }
            grid.nodes
                .iter()
                .map(|p| {
                    let mut v = 1.0;
                    for (k, amp, phase) in &modes {
                        let arg = k[0] as f64 * p.coords[0] + k[1] as f64 * p.coords[1] + k[2] as f64 * p.coords[2];
                        v += amp * (2.0 * PI * arg + phase).cos();
                    }
                    v
                })
                .collect()
        }
    };
    let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.05)).collect();
    let mass: f64 = clipped.iter().zip(&grid.weights).map(|(r, w)| r * w).sum();
    clipped.iter().map(|r| r / mass).collect()
}

/// One random pair of the distance/energy comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonRow {
    pub w1: f64,
    pub energy_distance: f64,
    /// `W₁(μ, π)` and `H(μ)` for the first density of the pair.
    pub w1_to_uniform: f64,
    pub mean_field_energy: f64,
}

/// Summary of [`verify_distance_energy_comparison`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    /// `max W₁(μ,ν) / √E(μ-ν)`.
    pub worst_ratio: f64,
    /// `max (1/2)W₁(μ,π)² / H(μ)`.
    pub worst_energy_ratio: f64,
    pub rows: Vec<ComparisonRow>,
}

/// Compare `W₁(μ, ν)` with `√E(μ - ν)`, and `(1/2)W₁(μ, π)²` with `H(μ)`, over
/// random pairs of smooth grid densities.
pub fn verify_distance_energy_comparison(
    sm: &SpectralModel,
    trials: usize,
    resolution: usize,
    rng: &mut RngState,
) -> Result<ComparisonReport> {
    let m = sm.manifold();
    let grid = build_grid(m, resolution)?;
    let uniform = DiscreteMeasure::from_grid(&grid);
    let method = if m.is_torus() {
        EnergyMethod::Fourier { cutoff: resolution / 2 }
    } else {
        EnergyMethod::DoubleSum { exclude_diagonal: true }
    };
    let densities: Vec<(Vec<f64>, Vec<f64>)> = (0..trials)
        .map(|_| (random_smooth_density(&grid, rng), random_smooth_density(&grid, rng)))
        .collect();
    let rows = densities
        .par_iter()
        .map(|(ra, rb)| -> Result<ComparisonRow> {
            let mu = DiscreteMeasure::from_density(&grid, ra, 1e-8)?;
            let nu = DiscreteMeasure::from_density(&grid, rb, 1e-8)?;
            let w1 = w1_same_support(m, &grid.nodes, &mu.weights, &nu.weights)?;
            let e = energy_distance(sm, &mu, &nu, method)?;
            let w1u = w1_same_support(m, &grid.nodes, &mu.weights, &uniform.weights)?;
            let h = 0.5 * energy_of_difference(sm, &mu, &uniform, method)?;
            Ok(ComparisonRow {
                w1,
                energy_distance: e,
                w1_to_uniform: w1u,
                mean_field_energy: h,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst_ratio = rows.iter().map(|r| r.w1 / r.energy_distance).fold(0.0, f64::max);
    let worst_energy_ratio = rows
        .iter()
        .map(|r| 0.5 * r.w1_to_uniform * r.w1_to_uniform / r.mean_field_energy)
        .fold(0.0, f64::max);
    Ok(ComparisonReport {
        worst_ratio,
        worst_energy_ratio,
        rows,
    })
}
