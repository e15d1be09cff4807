//! The n-particle Coulomb energy, external potentials, the mean-field energy
//! of discrete measures, and a Metropolis sampler for the Gibbs measure
//! `dP_n ∝ e^{-β H_n} dπ^{⊗n}`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{propose_lattice_move, propose_move, sample_uniform, ManifoldId, ManifoldPoint};
use crate::measure::{green_bilinear, DiscreteMeasure};
use crate::rng::RngState;
use crate::spectral::SpectralModel;

/// External potentials with closed-form Laplacians. Each non-constant
/// potential is a single Laplace eigenfunction, so `Δ V = -λ (V - mean)` and
/// heat smoothing acts as `P_t V = mean + e^{-λt}(V - mean)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    /// `V ≡ amplitude`.
    Constant { amplitude: f64 },
    /// `V(x) = amplitude · cos(2π · mode · x₁)` on a torus.
    Cosine {
        amplitude: f64,
        #[serde(default = "default_mode")]
        mode: u32,
    },
    /// `V(u) = amplitude · u₃` on the sphere (a degree-1 harmonic).
    Zonal { amplitude: f64 },
}

fn default_mode() -> u32 {
    1
}

impl Potential {
    pub fn check(&self, m: ManifoldId) -> Result<()> {
        match self {
            Potential::Cosine { mode, .. } if !m.is_torus() || *mode == 0 => Err(Error::InvalidArgument(
                "cosine potentials need a torus and mode >= 1".into(),
            )),
            Potential::Zonal { .. } if m != ManifoldId::Sphere2 => {
                Err(Error::InvalidArgument("zonal potentials live on sphere2".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: &ManifoldPoint) -> f64 {
        match *self {
            Potential::Constant { amplitude } => amplitude,
            Potential::Cosine { amplitude, mode } => amplitude * (2.0 * PI * mode as f64 * x.coords[0]).cos(),
            Potential::Zonal { amplitude } => amplitude * x.coords[2],
        }
    }

    /// The Laplace eigenvalue of the non-constant part.
    pub fn eigenvalue(&self) -> f64 {
        match *self {
            Potential::Constant { .. } => 0.0,
            Potential::Cosine { mode, .. } => 4.0 * PI * PI * (mode * mode) as f64,
            Potential::Zonal { .. } => 8.0 * PI,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Potential::Constant { amplitude } => amplitude,
            _ => 0.0,
        }
    }

    pub fn laplacian(&self, x: &ManifoldPoint) -> f64 {
        -self.eigenvalue() * (self.value(x) - self.mean())
    }

    /// Upper bound on `|ΔV|`.
    pub fn c2_bound(&self) -> f64 {
        match *self {
            Potential::Constant { .. } => 0.0,
            Potential::Cosine { amplitude, .. } | Potential::Zonal { amplitude } => self.eigenvalue() * amplitude.abs(),
        }
    }

    /// `(P_t V)(x) = ∫ V dμ_x^t`.
    pub fn heat_smoothed(&self, t: f64, x: &ManifoldPoint) -> f64 {
        self.mean() + (-self.eigenvalue() * t).exp() * (self.value(x) - self.mean())
    }
}

/// `n` particles on a manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleConfiguration {
    pub manifold: ManifoldId,
    pub points: Vec<ManifoldPoint>,
}

impl ParticleConfiguration {
    pub fn new(manifold: ManifoldId, points: Vec<ManifoldPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a configuration needs n >= 2 particles, got {}",
                points.len()
            )));
        }
        Ok(ParticleConfiguration { manifold, points })
    }

    /// Draw from `π^{⊗n}`, re-drawing exact duplicates.
    pub fn sample_uniform(manifold: ManifoldId, n: usize, rng: &mut RngState) -> Result<Self> {
        let mut points: Vec<ManifoldPoint> = Vec::with_capacity(n);
        while points.len() < n {
            let p = sample_uniform(manifold, rng);
            if !points.contains(&p) {
                points.push(p);
            }
        }
        ParticleConfiguration::new(manifold, points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn empirical_measure(&self) -> DiscreteMeasure {
        DiscreteMeasure::empirical(self.manifold, &self.points).expect("configuration is nonempty")
    }
}

/// `H_n = (1/n²) Σ_{i<j} G(x_i, x_j) + (1/n) Σ V(x_i)`; `+∞` on collisions.
pub fn hamiltonian(sm: &SpectralModel, cfg: &ParticleConfiguration, pot: Option<&Potential>) -> f64 {
    let n = cfg.len();
    let nf = n as f64;
    let mut pair = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let g = sm.green_value(&cfg.points[i], &cfg.points[j]);
            if g == f64::INFINITY {
                return f64::INFINITY;
            }
            pair += g;
        }
    }
    let v: f64 = pot.map_or(0.0, |p| cfg.points.iter().map(|x| p.value(x)).sum());
    pair / (nf * nf) + v / nf
}

/// `H(μ) = (1/2) ∫∫ G dμ dμ + ∫ V dμ` for a discrete measure. Coincident
/// atoms (including each atom with itself) give `+∞` unless
/// `exclude_diagonal` is set, in which case those terms are dropped: the
/// quadrature of the off-diagonal integral for grid discretizations of smooth
/// densities.
pub fn mean_field_energy(sm: &SpectralModel, mu: &DiscreteMeasure, pot: Option<&Potential>, exclude_diagonal: bool) -> Result<f64> {
    let sum: f64 = mu.weights.iter().sum();
    if (sum - 1.0).abs() > 1e-10 {
        return Err(Error::WeightSum { sum, tol: 1e-10 });
    }
    let pair = green_bilinear(sm, &mu.atoms, &mu.weights, &mu.weights, mu.lattice, exclude_diagonal);
    let v = pot.map_or(0.0, |p| mu.integrate(|x| p.value(x)));
    Ok(0.5 * pair + v)
}

/// Parameters of the Gibbs measure and its sampler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsParams {
    pub beta: f64,
    pub n: usize,
    /// Proposal scale (geodesic standard deviation).
    pub step: f64,
    pub potential: Option<Potential>,
}

impl GibbsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {}", self.step)));
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument("n must be at least 2".into()));
        }
        Ok(())
    }
}

/// Acceptance counters and the per-sweep energy trace.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub accepted: u64,
    pub proposed: u64,
    pub acceptance_rate: f64,
    pub energy_trace: Vec<f64>,
    pub sweeps: u64,
}

impl ChainStats {
    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        if accepted {
            self.accepted += 1;
        }
        self.acceptance_rate = self.accepted as f64 / self.proposed as f64;
    }
}

/// Proposal mechanism of a chain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProposalKind {
    /// Wrapped Gaussian on the torus, exponential-map Gaussian on the sphere.
    Continuous,
    /// Random walk on the nodes of a torus lattice.
    Lattice { resolution: usize },
}

/// A Metropolis chain with a cached pair-interaction matrix, so one
/// single-particle update costs `O(n)` kernel evaluations.
pub struct GibbsChain<'a> {
    sm: &'a SpectralModel,
    params: GibbsParams,
    proposal: ProposalKind,
    points: Vec<ManifoldPoint>,
    pair: Vec<f64>,
    v: Vec<f64>,
    energy: f64,
    row: Vec<f64>,
    pub stats: ChainStats,
}

impl<'a> GibbsChain<'a> {
    pub fn new(sm: &'a SpectralModel, params: GibbsParams, cfg: &ParticleConfiguration, proposal: ProposalKind) -> Result<Self> {
        params.validate()?;
        if cfg.len() != params.n {
            return Err(Error::InvalidArgument(format!(
                "configuration has {} particles, parameters say {}",
                cfg.len(),
                params.n
            )));
        }
        if let Some(p) = &params.potential {
            p.check(cfg.manifold)?;
        }
        if let ProposalKind::Lattice { .. } = proposal {
            if !cfg.manifold.is_torus() {
                return Err(Error::InvalidArgument("lattice proposals need a torus".into()));
            }
        }
        let n = cfg.len();
        let mut pair = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let g = sm.green_value(&cfg.points[i], &cfg.points[j]);
                pair[i * n + j] = g;
                pair[j * n + i] = g;
            }
        }
        let v: Vec<f64> = cfg
            .points
            .iter()
            .map(|x| params.potential.map_or(0.0, |p| p.value(x)))
            .collect();
        let energy = hamiltonian(sm, cfg, params.potential.as_ref());
        if !energy.is_finite() {
            return Err(Error::InvalidArgument("initial configuration has colliding particles".into()));
        }
        Ok(GibbsChain {
            sm,
            params,
            proposal,
            points: cfg.points.clone(),
            pair,
            v,
            energy,
            row: vec![0.0; n],
            stats: ChainStats::default(),
        })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn step(&self) -> f64 {
        self.params.step
    }

    pub fn points(&self) -> &[ManifoldPoint] {
        &self.points
    }

    pub fn configuration(&self) -> ParticleConfiguration {
        ParticleConfiguration {
            manifold: self.sm.manifold(),
            points: self.points.clone(),
        }
    }

    fn propose(&self, i: usize, rng: &mut RngState) -> ManifoldPoint {
        let m = self.sm.manifold();
        match self.proposal {
            ProposalKind::Continuous => propose_move(m, &self.points[i], self.params.step, rng),
            ProposalKind::Lattice { resolution } => propose_lattice_move(m, &self.points[i], self.params.step, resolution, rng),
        }
    }

    /// `ΔH_n` for moving particle `i` to `y`, filling the row cache.
    fn delta(&mut self, i: usize, y: &ManifoldPoint) -> f64 {
        let n = self.points.len();
        let nf = n as f64;
        let mut d = 0.0;
        for j in 0..n {
            if j == i {
                self.row[j] = 0.0;
                continue;
            }
            let g = self.sm.green_value(y, &self.points[j]);
            if g == f64::INFINITY {
                return f64::INFINITY;
            }
            self.row[j] = g;
            d += g - self.pair[i * n + j];
        }
        let dv = self.params.potential.map_or(0.0, |p| p.value(y) - self.v[i]);
        d / (nf * nf) + dv / nf
    }

    fn commit(&mut self, i: usize, y: ManifoldPoint, delta: f64) {
        let n = self.points.len();
        for j in 0..n {
            if j != i {
                self.pair[i * n + j] = self.row[j];
                self.pair[j * n + i] = self.row[j];
            }
        }
        if let Some(p) = &self.params.potential {
            self.v[i] = p.value(&y);
        }
        self.points[i] = y;
        self.energy += delta;
    }

    /// One Metropolis update of particle `i`. Returns whether it moved.
    pub fn update(&mut self, i: usize, rng: &mut RngState) -> bool {
        let y = self.propose(i, rng);
        let delta = self.delta(i, &y);
        // collisions are always rejected; β = 0 accepts everything else
        let accept = if delta == f64::INFINITY {
            false
        } else if self.params.beta == 0.0 || delta <= 0.0 {
            true
        } else {
            let u: f64 = rng.random();
            u < (-self.params.beta * delta).exp()
        };
        if accept {
            self.commit(i, y, delta);
        }
        self.stats.record(accept);
        accept
    }

    /// `n` single-particle updates in index order, then one trace entry.
    pub fn sweep(&mut self, rng: &mut RngState) {
        for i in 0..self.points.len() {
            self.update(i, rng);
        }
        self.stats.sweeps += 1;
        self.stats.energy_trace.push(self.energy);
    }

    /// Burn-in with step adaptation toward acceptance 0.3 ± 0.1 (checked every
    /// 10 sweeps). The step is frozen and the statistics are reset afterwards.
    pub fn burn_in(&mut self, sweeps: usize, rng: &mut RngState) {
        let max_step = self.sm.manifold().diameter();
        let mut window = (0u64, 0u64);
        for s in 0..sweeps {
            let before = (self.stats.accepted, self.stats.proposed);
            self.sweep(rng);
            window.0 += self.stats.accepted - before.0;
            window.1 += self.stats.proposed - before.1;
            if (s + 1) % 10 == 0 {
                let rate = window.0 as f64 / window.1.max(1) as f64;
                if rate > 0.4 {
                    self.params.step = (self.params.step * 1.25).min(max_step);
                } else if rate < 0.2 {
                    self.params.step = (self.params.step * 0.8).max(1e-5);
                }
                window = (0, 0);
            }
        }
        self.stats = ChainStats::default();
        // keep the cached energy honest after many increments
        self.energy = hamiltonian(self.sm, &self.configuration(), self.params.potential.as_ref());
    }
}

/// One sweep from `cfg`, as a pure function.
pub fn metropolis_sweep(
    sm: &SpectralModel,
    params: &GibbsParams,
    cfg: &ParticleConfiguration,
    rng: &mut RngState,
) -> Result<(ParticleConfiguration, ChainStats)> {
    let mut chain = GibbsChain::new(sm, *params, cfg, ProposalKind::Continuous)?;
    chain.sweep(rng);
    Ok((chain.configuration(), chain.stats))
}

/// Compare incremental `ΔH_n` with full recomputation over 100 proposals
/// (each followed by the usual accept/reject). Returns the largest
/// discrepancy.
pub fn incremental_energy_check(sm: &SpectralModel, params: &GibbsParams, cfg: &ParticleConfiguration, rng: &mut RngState) -> Result<f64> {
    let mut chain = GibbsChain::new(sm, *params, cfg, ProposalKind::Continuous)?;
    let pot = params.potential;
    let mut worst: f64 = 0.0;
    let n = cfg.len();
    for _ in 0..100 {
        let i = rng.random_range(0..n);
        let y = chain.propose(i, rng);
        let inc = chain.delta(i, &y);
        let before = chain.configuration();
        let mut after = before.clone();
        after.points[i] = y;
        let full = hamiltonian(sm, &after, pot.as_ref()) - hamiltonian(sm, &before, pot.as_ref());
        if inc.is_finite() || full.is_finite() {
            worst = worst.max((inc - full).abs());
        }
        let u: f64 = rng.random();
        if inc.is_finite() && (inc <= 0.0 || u < (-params.beta * inc).exp()) {
            chain.commit(i, y, inc);
        }
    }
    Ok(worst)
}

/// Result of [`run_chain`].
#[derive(Clone, Debug)]
pub struct ChainRun {
    pub configuration: ParticleConfiguration,
    pub stats: ChainStats,
    pub step: f64,
}

/// Burn in (with step tuning), then run `sweeps` recorded sweeps.
pub fn run_chain(
    sm: &SpectralModel,
    params: &GibbsParams,
    init: &ParticleConfiguration,
    burn_in: usize,
    sweeps: usize,
    rng: &mut RngState,
) -> Result<ChainRun> {
    let mut chain = GibbsChain::new(sm, *params, init, ProposalKind::Continuous)?;
    chain.burn_in(burn_in, rng);
    for _ in 0..sweeps {
        chain.sweep(rng);
    }
    Ok(ChainRun {
        configuration: chain.configuration(),
        step: chain.step(),
        stats: chain.stats,
    })
}

/// Self-describing chain checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainCheckpoint {
    pub manifold: ManifoldId,
    pub n: usize,
    pub beta: f64,
    pub seed: u64,
    pub sweeps: u64,
    pub step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Potential>,
    pub points: Vec<Vec<f64>>,
    /// Generator stream and word position (decimal string) for exact resume.
    pub rng_stream: u64,
    pub rng_word_pos: String,
    pub acceptance_rate: f64,
    pub energy: f64,
}

impl ChainCheckpoint {
    /// Snapshot of `chain` after `sweeps` sweeps, with the generator state
    /// needed to continue it exactly.
    pub fn capture(chain: &GibbsChain<'_>, rng: &RngState, sweeps: u64) -> Self {
        let m = chain.sm.manifold();
        let (seed, stream, word_pos) = rng.position();
        ChainCheckpoint {
            manifold: m,
            n: chain.points.len(),
            beta: chain.params.beta,
            seed,
            sweeps,
            step: chain.params.step,
            potential: chain.params.potential,
            points: chain.points.iter().map(|p| p.as_slice(m).to_vec()).collect(),
            rng_stream: stream,
            rng_word_pos: word_pos.to_string(),
            acceptance_rate: chain.stats.acceptance_rate,
            energy: chain.energy,
        }
    }

    pub fn params(&self) -> GibbsParams {
        GibbsParams {
            beta: self.beta,
            n: self.n,
            step: self.step,
            potential: self.potential,
        }
    }

    pub fn configuration(&self) -> Result<ParticleConfiguration> {
        let pts = self
            .points
            .iter()
            .map(|c| self.manifold.point(c))
            .collect::<Result<Vec<_>>>()?;
        if pts.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "checkpoint lists {} points for n = {}",
                pts.len(),
                self.n
            )));
        }
        ParticleConfiguration::new(self.manifold, pts)
    }

    pub fn rng(&self) -> Result<RngState> {
        let pos: u128 = self
            .rng_word_pos
            .parse()
            .map_err(|_| Error::InvalidArgument("bad rng_word_pos in checkpoint".into()))?;
        Ok(RngState::restore(self.seed, self.rng_stream, pos))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collision_is_infinite() {
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let p = ManifoldPoint::torus2(0.2, 0.3);
        let cfg = ParticleConfiguration::new(ManifoldId::Torus2, vec![p, ManifoldPoint::torus2(0.5, 0.5), p]).unwrap();
        assert_eq!(hamiltonian(&sm, &cfg, None), f64::INFINITY);
    }

    #[test]
    fn constant_potential_shifts_energy() {
        let sm = SpectralModel::new(ManifoldId::Sphere2);
        let mut rng = RngState::from_seed(1);
        let pot = Potential::Constant { amplitude: 1.75 };
        for _ in 0..100 {
            let cfg = ParticleConfiguration::sample_uniform(ManifoldId::Sphere2, 5, &mut rng).unwrap();
            let a = hamiltonian(&sm, &cfg, None);
            let b = hamiltonian(&sm, &cfg, Some(&pot));
            assert!((b - a - 1.75).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_invariance() {
        let sm = SpectralModel::new(ManifoldId::Torus3);
        let mut rng = RngState::from_seed(2);
        let cfg = ParticleConfiguration::sample_uniform(ManifoldId::Torus3, 6, &mut rng).unwrap();
        let mut rev = cfg.clone();
        rev.points.reverse();
        let a = hamiltonian(&sm, &cfg, None);
        let b = hamiltonian(&sm, &rev, None);
        assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
    }

    #[test]
    fn beta_zero_accepts_everything() {
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let mut rng = RngState::from_seed(3);
        let cfg = ParticleConfiguration::sample_uniform(ManifoldId::Torus2, 4, &mut rng).unwrap();
        let params = GibbsParams {
            beta: 0.0,
            n: 4,
            step: 0.2,
            potential: None,
        };
        let mut chain = GibbsChain::new(&sm, params, &cfg, ProposalKind::Continuous).unwrap();
        for _ in 0..1000 {
            chain.sweep(&mut rng);
        }
        assert_eq!(chain.stats.acceptance_rate, 1.0);
        assert_eq!(chain.stats.proposed, 4000);
    }

    #[test]
    fn incremental_matches_full() {
        let mut rng = RngState::from_seed(4);
        for m in ManifoldId::ALL {
            let sm = SpectralModel::new(m);
            let cfg = ParticleConfiguration::sample_uniform(m, 8, &mut rng).unwrap();
            let pot = match m {
                ManifoldId::Sphere2 => Potential::Zonal { amplitude: 0.3 },
                _ => Potential::Cosine { amplitude: 0.2, mode: 1 },
            };
            let params = GibbsParams {
                beta: 64.0,
                n: 8,
                step: 0.1,
                potential: Some(pot),
            };
            assert!(incremental_energy_check(&sm, &params, &cfg, &mut rng).unwrap() < 1e-10);
        }
    }

    #[test]
    fn near_collision_is_consistent() {
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let cfg = ParticleConfiguration::new(
            ManifoldId::Torus2,
            vec![
                ManifoldPoint::torus2(0.3, 0.3),
                ManifoldPoint::torus2(0.3 + 1e-6, 0.3),
                ManifoldPoint::torus2(0.7, 0.1),
            ],
        )
        .unwrap();
        let params = GibbsParams {
            beta: 9.0,
            n: 3,
            step: 0.05,
            potential: None,
        };
        let mut rng = RngState::from_seed(5);
        let h = hamiltonian(&sm, &cfg, None);
        assert!(h.is_finite());
        assert!(incremental_energy_check(&sm, &params, &cfg, &mut rng).unwrap() < 1e-10);
    }

    #[test]
    fn potential_laplacian_matches_finite_differences() {
        let h = 1e-4;
        let pot = Potential::Cosine { amplitude: 0.7, mode: 2 };
        let x = (0.37, 0.12);
        let v = |a: f64, b: f64| pot.value(&ManifoldPoint::torus2(a, b));
        let fd = (v(x.0 + h, x.1) + v(x.0 - h, x.1) + v(x.0, x.1 + h) + v(x.0, x.1 - h) - 4.0 * v(x.0, x.1)) / (h * h);
        assert!((fd - pot.laplacian(&ManifoldPoint::torus2(x.0, x.1))).abs() < 1e-4 * pot.c2_bound().max(1.0));
        // sphere: Laplace-Beltrami of the restriction of u₃ via a tangent
        // finite difference on two great circles through the point
        let zonal = Potential::Zonal { amplitude: 1.3 };
        let p = ManifoldPoint::sphere(0.3, -0.4, 0.5);
        let u = p.coords;
        let e1 = {
            let mut e = [u[1], -u[0], 0.0];
            let n = (e[0] * e[0] + e[1] * e[1]).sqrt();
            e.iter_mut().for_each(|c| *c /= n);
            e
        };
        let e2 = [u[1] * e1[2] - u[2] * e1[1], u[2] * e1[0] - u[0] * e1[2], u[0] * e1[1] - u[1] * e1[0]];
        let r0 = crate::manifold::SPHERE_RADIUS;
        let th = 1e-3;
        let mut lap = 0.0;
        for e in [e1, e2] {
            let at = |s: f64| {
                let q = ManifoldPoint::sphere(
                    u[0] * s.cos() + e[0] * s.sin(),
                    u[1] * s.cos() + e[1] * s.sin(),
                    u[2] * s.cos() + e[2] * s.sin(),
                );
                zonal.value(&q)
            };
            lap += (at(th) + at(-th) - 2.0 * at(0.0)) / (th * r0).powi(2);
        }
        assert!((lap - zonal.laplacian(&p)).abs() < 1e-4 * zonal.c2_bound());
    }

    #[test]
    fn potential_config_json() {
        let p: Potential = serde_json::from_str(r#"{"type": "cosine", "amplitude": 0.01}"#).unwrap();
        assert_eq!(p, Potential::Cosine { amplitude: 0.01, mode: 1 });
        assert!(serde_json::from_str::<Potential>(r#"{"type": "cosine", "amp": 0.01}"#).is_err());
    }

    #[test]
    fn checkpoint_resumes_exactly() {
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let params = GibbsParams {
            beta: 25.0,
            n: 5,
            step: 0.2,
            potential: Some(Potential::Cosine { amplitude: 0.3, mode: 1 }),
        };
        let mut rng = RngState::from_seed(44).split(3);
        let init = ParticleConfiguration::sample_uniform(ManifoldId::Torus2, 5, &mut rng).unwrap();
        let mut chain = GibbsChain::new(&sm, params, &init, ProposalKind::Continuous).unwrap();
        for _ in 0..10 {
            chain.sweep(&mut rng);
        }
        let text = serde_json::to_string(&ChainCheckpoint::capture(&chain, &rng, 10)).unwrap();
        for _ in 0..10 {
            chain.sweep(&mut rng);
        }
        let ck: ChainCheckpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(ck.sweeps, 10);
        let mut rng2 = ck.rng().unwrap();
        let mut resumed = GibbsChain::new(&sm, ck.params(), &ck.configuration().unwrap(), ProposalKind::Continuous).unwrap();
        for _ in 0..10 {
            resumed.sweep(&mut rng2);
        }
        assert_eq!(chain.points(), resumed.points());
    }
}
