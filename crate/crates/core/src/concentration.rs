//! Concentration bounds for the empirical measure of the gas, the
//! equilibrium measure with an external potential, Monte Carlo tail
//! estimates, and the partition-function lower bound at tiny `n`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::{run_chain, GibbsParams, ParticleConfiguration, Potential};
use crate::green_quadrature::{integrate_against_green, integrate_with_singular_point};
use crate::manifold::{GridKind, ManifoldId, ManifoldPoint, QuadratureGrid};
use crate::measure::{lattice_green_table, DiscreteMeasure};
use crate::regularize::{verify_distance_to_regularized, verify_energy_comparison};
use crate::rng::RngState;
use crate::spectral::SpectralModel;
use crate::transport::{smooth_energy, w1_exact};

/// Default coefficient of the `β log(n)/n` term in dimension 2.
pub const LOG_TERM_CONSTANT: f64 = 1.0 / (8.0 * PI);

/// Exponent of the concentration bound `-βr²/4 + c_log β log(n)/n + Cβ/n`
/// in dimension 2, `-βr²/4 + Cβ/n^{2/d}` otherwise.
pub fn theorem1_exponent(n: usize, beta: f64, r: f64, dimension: usize, log_term_constant: f64, fitted_c: f64) -> f64 {
    let nf = n as f64;
    let main = -beta * r * r / 4.0;
    if dimension == 2 {
        main + log_term_constant * beta * nf.ln() / nf + fitted_c * beta / nf
    } else {
        main + fitted_c * beta / nf.powf(2.0 / dimension as f64)
    }
}

/// Upper bound on `P(W₁(i_n, π) ≥ r)` for the gas without potential. May
/// exceed one, in which case it says nothing.
pub fn theorem1_bound(n: usize, beta: f64, r: f64, dimension: usize, log_term_constant: f64, fitted_c: f64) -> f64 {
    theorem1_exponent(n, beta, r, dimension, log_term_constant, fitted_c).exp()
}

/// The bound with an external potential: the exponent gains `n D(μ_eq‖π)`.
pub fn theorem2_bound(n: usize, beta: f64, r: f64, dimension: usize, entropy: f64, fitted_c: f64) -> f64 {
    (theorem1_exponent(n, beta, r, dimension, LOG_TERM_CONSTANT, fitted_c) + n as f64 * entropy).exp()
}

/// Inputs of the general concentration inequality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParameters {
    pub n: usize,
    pub beta: f64,
    pub dimension: usize,
    /// Energy comparison defect: `H_n ≥ H(R(x⃗)) - a_n`.
    pub a_n: f64,
    /// Distance defect: `W₁(R(x⃗), i_n(x⃗)) ≤ b_n`.
    pub b_n: f64,
    /// `∫ H_n dμ_eq^{⊗n}`.
    pub e_n: f64,
    /// `H(μ_eq)`.
    pub e: f64,
    pub entropy: f64,
    pub fitted_c: f64,
}

/// Exponent `-β r²/4 + n D + β(e_n - e) + β a_n + β b_n²/2`, i.e. the general
/// inequality with `f(r) = r²/2`.
pub fn general_bound_exponent(bp: &BoundParameters, r: f64) -> f64 {
    let f = |s: f64| 0.5 * s * s;
    -bp.beta * 2.0 * f(r / 2.0)
        + bp.n as f64 * bp.entropy
        + bp.beta * (bp.e_n - bp.e)
        + bp.beta * bp.a_n
        + bp.beta * f(bp.b_n)
}

pub fn general_bound_assembly(bp: &BoundParameters, r: f64) -> f64 {
    general_bound_exponent(bp, r).exp()
}

/// Constants entering the concentration bounds, fitted from the regularization
/// checks: `a_n` constant `c_a`, distance constant `c_b`, and the combined
/// `C = 1 + c_a + c_b²/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedConstant {
    pub c_a: f64,
    pub c_b: f64,
    pub c: f64,
}

/// Fit the bound constant for `m` at the sizes `n_list`, using the time
/// schedule `t = n^{-2/d}` (and `t = 1/n`).
pub fn fit_theorem_constant(
    sm: &SpectralModel,
    n_list: &[usize],
    trials: usize,
    pot: Option<&Potential>,
    resolution: usize,
    rng: &mut RngState,
) -> Result<FittedConstant> {
    let d = sm.manifold().dimension();
    let energy = verify_energy_comparison(sm, trials, n_list, pot, rng)?;
    let mut c_b: f64 = 0.0;
    for &n in n_list {
        let t = (n as f64).powf(-2.0 / d as f64);
        let rep = verify_distance_to_regularized(sm, n, trials, &[t, 0.5 * t], resolution, rng)?;
        // W₁ ≤ c_b √t at the schedule time; fitted_c is max W₁/√t
        c_b = c_b.max(rep.fitted_c + rep.mesh / t.sqrt());
    }
    let c_a = energy.fitted_c;
    Ok(FittedConstant {
        c_a,
        c_b,
        c: 1.0 + c_a + 0.5 * c_b * c_b,
    })
}

/// Equilibrium density `ρ = 1 + ΔV` on a grid, with its relative entropy.
#[derive(Clone, Debug)]
pub struct EquilibriumMeasure {
    pub density: Vec<f64>,
    /// `D(μ_eq‖π) = ∫ ρ log ρ dπ`.
    pub entropy: f64,
    pub measure: DiscreteMeasure,
}

/// Minimizer of `H(μ) = (1/2)∫∫G dμdμ + ∫V dμ` in the full-support regime:
/// the first-order condition `∫G(·,y)dμ(y) + V = const` gives `ρ = 1 + ΔV`.
pub fn equilibrium_measure(m: ManifoldId, pot: Option<&Potential>, grid: &QuadratureGrid) -> Result<EquilibriumMeasure> {
    if let Some(p) = pot {
        p.check(m)?;
    }
    if grid.manifold != m {
        return Err(Error::InvalidArgument("grid lives on another manifold".into()));
    }
    let density: Vec<f64> = grid
        .nodes
        .iter()
        .map(|x| 1.0 + pot.map_or(0.0, |p| p.laplacian(x)))
        .collect();
    let min = density.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < 0.0 {
        return Err(Error::NegativeEquilibrium { min_density: min });
    }
    let entropy: f64 = density
        .iter()
        .zip(&grid.weights)
        .map(|(r, w)| if *r > 0.0 { w * r * r.ln() } else { 0.0 })
        .sum();
    let measure = DiscreteMeasure::from_density(grid, &density, 1e-8)?;
    Ok(EquilibriumMeasure {
        density,
        entropy: entropy.max(0.0),
        measure,
    })
}

/// Spread `max - min` of `∫G(x,y)ρ(y)dπ(y) + V(x)` over `samples` grid nodes
/// (evenly strided). Zero for the exact equilibrium.
pub fn euler_lagrange_residual(
    sm: &SpectralModel,
    pot: Option<&Potential>,
    grid: &QuadratureGrid,
    samples: usize,
) -> Result<f64> {
    // ρ = 1 + ΔV in closed form, so the integrand is exact between nodes
    let rho = |y: &ManifoldPoint| 1.0 + pot.map_or(0.0, |p| p.laplacian(y));
    let stride = (grid.len() / samples.max(1)).max(1);
    let xs: Vec<ManifoldPoint> = grid.nodes.iter().step_by(stride).cloned().collect();
    let vals: Vec<f64> = xs
        .par_iter()
        .map(|x| integrate_against_green(sm, x, rho, grid) + pot.map_or(0.0, |p| p.value(x)))
        .collect();
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(hi - lo)
}

/// Wilson score interval for `k` successes in `n` trials at 95%.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = k as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt();
    // the limits are exactly 0 and 1 at the extremes; avoid rounding residue
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k >= n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Potential scale reduction factor over equal-length sequences.
pub fn r_hat(sequences: &[Vec<f64>]) -> f64 {
    let m = sequences.len();
    let len = sequences.iter().map(|s| s.len()).min().unwrap_or(0);
    if m < 2 || len < 2 {
        return f64::NAN;
    }
    let l = len as f64;
    let means: Vec<f64> = sequences.iter().map(|s| s[..len].iter().sum::<f64>() / l).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = l / (m as f64 - 1.0) * means.iter().map(|v| (v - grand).powi(2)).sum::<f64>();
    let w = sequences
        .iter()
        .zip(&means)
        .map(|(s, mu)| s[..len].iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (l - 1.0))
        .sum::<f64>()
        / m as f64;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((l - 1.0) / l * w + b / l) / w).sqrt()
}

/// One `(n, β, r)` cell of a concentration experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub manifold: ManifoldId,
    pub n: usize,
    pub beta: f64,
    pub r: f64,
    pub bound_fitted: f64,
    pub bound_c1: f64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub flags: String,
}

/// Outcome of [`estimate_tail`] for one `(n, β)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    /// `W₁(i_n, μ_eq)` at the final state of each chain (grid value).
    pub w1: Vec<f64>,
    /// Mesh of the grid: `|W₁ - grid value| ≤ mesh`.
    pub mesh: f64,
    pub r_hat: f64,
    pub mean_acceptance: f64,
    pub step: f64,
    pub chains: usize,
    pub sweeps: usize,
    pub seed: u64,
}

impl TailEstimate {
    /// `(p̂, ci_lo, ci_hi)` at radius `r`. The lower limit counts only chains
    /// whose bracket lies entirely above `r`, the upper limit every chain
    /// whose bracket reaches `r`.
    pub fn exceedance(&self, r: f64) -> (f64, f64, f64) {
        let n = self.w1.len();
        let hits = self.w1.iter().filter(|w| **w >= r).count();
        let sure = self.w1.iter().filter(|w| **w - self.mesh >= r).count();
        let maybe = self.w1.iter().filter(|w| **w + self.mesh >= r).count();
        (hits as f64 / n as f64, wilson_interval(sure, n).0, wilson_interval(maybe, n).1)
    }

    pub fn mixed(&self) -> bool {
        !(self.r_hat > 1.1)
    }
}

/// Run `chains` independent chains from uniform starts and record
/// `W₁(i_n, μ_eq)` at each final state. Chain `c` uses stream `c` of `rng`,
/// so results do not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn estimate_tail(
    sm: &SpectralModel,
    params: &GibbsParams,
    chains: usize,
    sweeps: usize,
    burn_in: usize,
    grid: &QuadratureGrid,
    equilibrium: &DiscreteMeasure,
    rng: &RngState,
) -> Result<TailEstimate> {
    params.validate()?;
    if chains == 0 || sweeps < 2 {
        return Err(Error::InvalidArgument("need at least one chain and two sweeps".into()));
    }
    let m = sm.manifold();
    let runs: Vec<(f64, Vec<f64>, f64, f64)> = (0..chains)
        .into_par_iter()
        .map(|c| -> Result<_> {
            let mut r = rng.split(c as u64);
            let init = ParticleConfiguration::sample_uniform(m, params.n, &mut r)?;
            let run = run_chain(sm, params, &init, burn_in, sweeps, &mut r)?;
            let (w, _) = w1_exact(&run.configuration.empirical_measure(), equilibrium)?;
            Ok((w, run.stats.energy_trace, run.stats.acceptance_rate, run.step))
        })
        .collect::<Result<_>>()?;
    let groups = 4.min(chains);
    let mut seqs = vec![vec![0.0; sweeps]; groups];
    let mut counts = vec![0usize; groups];
    for (c, run) in runs.iter().enumerate() {
        let g = c % groups;
        counts[g] += 1;
        for (k, e) in run.1.iter().enumerate() {
            seqs[g][k] += e;
        }
    }
    for (s, n) in seqs.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= *n as f64);
    }
    Ok(TailEstimate {
        w1: runs.iter().map(|r| r.0).collect(),
        mesh: grid.mesh,
        r_hat: r_hat(&seqs),
        mean_acceptance: runs.iter().map(|r| r.2).sum::<f64>() / chains as f64,
        step: runs.iter().map(|r| r.3).sum::<f64>() / chains as f64,
        chains,
        sweeps,
        seed: rng.seed(),
    })
}

/// Result of [`partition_lower_bound_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionCheck {
    pub n: usize,
    pub beta: f64,
    /// Tensor-grid quadrature with coincident nodes dropped.
    pub z_naive: f64,
    /// Quadrature with the integrable singularity of `e^{-βH_n}` at
    /// coincident points resolved by a polar rule (`n = 2` only).
    pub z_corrected: Option<f64>,
    /// `exp(-β e_n - n D(μ_eq‖π))`.
    pub lower_bound: f64,
    pub e_n: f64,
    pub entropy: f64,
}

impl PartitionCheck {
    /// The quadrature value compared against the bound.
    pub fn z(&self) -> f64 {
        self.z_corrected.unwrap_or(self.z_naive)
    }

    pub fn holds(&self) -> bool {
        self.z() >= self.lower_bound
    }
}

pub const PARTITION_RESOLUTION_CAP: usize = 32;

/// `Z_n = ∫ e^{-β H_n} dπ^{⊗n}` at `n ∈ {2, 3}` on a torus lattice, against
/// `exp(-β e_n - n D(μ_eq‖π))`.
pub fn partition_lower_bound_check(
    sm: &SpectralModel,
    n: usize,
    beta: f64,
    pot: Option<&Potential>,
    grid: &QuadratureGrid,
) -> Result<PartitionCheck> {
    let m = sm.manifold();
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidArgument(format!("partition check supports n = 2 or 3, got {n}")));
    }
    if grid.kind != GridKind::Lattice || grid.manifold != m {
        return Err(Error::InvalidArgument("partition check needs a torus lattice of the same manifold".into()));
    }
    if grid.resolution > PARTITION_RESOLUTION_CAP {
        return Err(Error::InvalidArgument(format!(
            "partition check resolution {} exceeds the cap {}",
            grid.resolution, PARTITION_RESOLUTION_CAP
        )));
    }
    if n == 3 && pot.is_some() {
        return Err(Error::InvalidArgument("n = 3 is supported without potential only".into()));
    }
    let res = grid.resolution;
    let d = m.dimension();
    let total = grid.len();
    let nf = n as f64;
    let table = lattice_green_table(sm, res);
    let weight = |delta: usize| (-beta * table[delta] / (nf * nf)).exp();

    let (z_naive, z_corrected) = match (n, pot) {
        (2, None) => {
            // translation invariance: fix x₁ at the origin
            let naive: f64 = (1..total).map(weight).sum::<f64>() / total as f64;
            let origin = grid.nodes[0];
            let corrected = integrate_with_singular_point(
                m,
                &origin,
                |y| {
                    let g = sm.green_value(&origin, y);
                    if g == f64::INFINITY {
                        0.0
                    } else {
                        (-beta * g / 4.0).exp()
                    }
                },
                grid,
            );
            (naive, Some(corrected))
        }
        (2, Some(p)) => {
            let v: Vec<f64> = grid.nodes.iter().map(|x| (-beta * p.value(x) / 2.0).exp()).collect();
            let naive: f64 = (0..total)
                .into_par_iter()
                .map(|i| {
                    let mut acc = 0.0;
                    for j in 0..total {
                        if j != i {
                            acc += weight(crate::measure::lattice_difference(i, j, res, d)) * v[j];
                        }
                    }
                    v[i] * acc
                })
                .sum::<f64>()
                / (total * total) as f64;
            let corrected: f64 = grid
                .nodes
                .par_iter()
                .map(|x| {
                    let inner = integrate_with_singular_point(
                        m,
                        x,
                        |y| {
                            let g = sm.green_value(x, y);
                            if g == f64::INFINITY {
                                0.0
                            } else {
                                (-beta * (g / 4.0 + p.value(y) / 2.0)).exp()
                            }
                        },
                        grid,
                    );
                    (-beta * p.value(x) / 2.0).exp() * inner
                })
                .sum::<f64>()
                / total as f64;
            (naive, Some(corrected))
        }
        _ => {
            // n = 3 without potential: fix x₁ at the origin
            let naive: f64 = (1..total)
                .into_par_iter()
                .map(|a| {
                    let mut acc = 0.0;
                    for b in 1..total {
                        if b != a {
                            let gab = table[crate::measure::lattice_difference(a, b, res, d)];
                            acc += (-beta * (table[a] + table[b] + gab) / 9.0).exp();
                        }
                    }
                    acc
                })
                .sum::<f64>()
                / (total * total) as f64;
            (naive, None)
        }
    };

    let eq = equilibrium_measure(m, pot, grid)?;
    let e_n = match pot {
        None => 0.0,
        Some(p) => {
            // ∫H_n dμ_eq^{⊗n} = ((n-1)/2n) ∫∫G dμ_eq dμ_eq + ∫V dμ_eq
            let gg = 2.0 * smooth_energy(sm, &eq.measure)?;
            (nf - 1.0) / (2.0 * nf) * gg + eq.measure.integrate(|x| p.value(x))
        }
    };
    Ok(PartitionCheck {
        n,
        beta,
        z_naive,
        z_corrected,
        lower_bound: (-beta * e_n - nf * eq.entropy).exp(),
        e_n,
        entropy: eq.entropy,
    })
}
