//! Spectral models of the Laplace-Beltrami operator on the supported
//! manifolds, and evaluators for the heat kernel `p_t`, the zero-mean Green
//! function `G` and the heat-regularized Green function `G_t`.
//!
//! Torus kernels factor over coordinates, so the heat kernel is a product of
//! one-dimensional theta functions, each evaluated either by its eigen-series
//! `Σ_k e^{-4π²k²t} cos(2πku)` or by its image sum
//! `Σ_m (4πt)^{-1/2} e^{-(u+m)²/4t}`. The Green function is split at a time
//! `T` into `∫_0^T (p_t - 1) dt`, integrated image by image in closed form,
//! and the eigen tail `Σ_{k≠0} e^{-λ_k T} cos(2πk·u)/λ_k`.
//!
//! Sphere kernels are Legendre series `Σ_ℓ (2ℓ+1) c_ℓ P_ℓ(cos θ)` with
//! eigenvalues `λ_ℓ = 4π ℓ(ℓ+1)`; the sphere Green function also has the
//! closed form `-(1/4π)(2 log sin(θ/2) + 1)`.
//!
//! Every evaluation returns a [`KernelValue`] carrying a bound on the omitted
//! series tail.

use std::f64::consts::PI;
use std::io::{Read, Write};

use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};
use crate::manifold::{torus_displacement, ManifoldId, ManifoldPoint, SPHERE_RADIUS};
use crate::quadrature::{exp_integral_e1, legendre_table};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Target size of neglected series tails.
const TAIL_TARGET: f64 = 1e-17;
/// Split time of the torus Green function.
const EWALD_TIME: f64 = 0.02;
/// Fourier box of the torus Green eigen tail at the split time.
const EWALD_MODES: usize = 8;
/// Image terms with `r²/4T` above this are dropped.
const IMAGE_CUTOFF_EXPONENT: f64 = 42.0;

pub const DEFAULT_TORUS_CUTOFF: usize = 64;
pub const DEFAULT_SPHERE_CUTOFF: usize = 640;
pub const DEFAULT_TORUS_CROSSOVER: f64 = 0.05;
pub const DEFAULT_SPHERE_CROSSOVER: f64 = 0.02;

/// A kernel value and a rigorous bound on its series truncation error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub truncation_bound: f64,
}

impl KernelValue {
    fn new(value: f64, truncation_bound: f64) -> Self {
        KernelValue {
            value,
            truncation_bound,
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.value == f64::INFINITY
    }
}

/// Truncated eigen-data for one manifold.
///
/// For tori the table holds the one-dimensional eigenvalues `4π²j²`,
/// `j = 0..=cutoff` (the d-dimensional ones are sums of these); for the sphere
/// it holds `λ_ℓ = 4πℓ(ℓ+1)`, `ℓ = 0..=cutoff`.
#[derive(Clone, Debug)]
pub struct SpectralModel {
    manifold: ManifoldId,
    eigen_cutoff: usize,
    crossover_time: f64,
    eigenvalues: Vec<f64>,
    /// Torus only: `Π mult(j_i) · e^{-λ_j T}/λ_j` on the box `{0..=8}^d`.
    green_tail_weights: Vec<f64>,
    /// Torus only: `G(x, y) + σ(d(x, y))` as `y → x`.
    green_regular: f64,
}

pub fn analytic_eigenvalues(m: ManifoldId, cutoff: usize) -> Vec<f64> {
    (0..=cutoff)
        .map(|j| {
            let j = j as f64;
            match m {
                ManifoldId::Torus2 | ManifoldId::Torus3 => 4.0 * PI * PI * j * j,
                ManifoldId::Sphere2 => 4.0 * PI * j * (j + 1.0),
            }
        })
        .collect()
}

impl SpectralModel {
    pub fn new(m: ManifoldId) -> Self {
        let (cutoff, crossover) = match m {
            ManifoldId::Sphere2 => (DEFAULT_SPHERE_CUTOFF, DEFAULT_SPHERE_CROSSOVER),
            _ => (DEFAULT_TORUS_CUTOFF, DEFAULT_TORUS_CROSSOVER),
        };
        Self::with_params(m, cutoff, crossover).expect("default parameters are valid")
    }

    pub fn with_params(m: ManifoldId, eigen_cutoff: usize, crossover_time: f64) -> Result<Self> {
        Self::from_eigenvalues(m, analytic_eigenvalues(m, eigen_cutoff), crossover_time)
    }

    /// Build a model from an explicit eigenvalue table (e.g. one loaded from
    /// disk). The table is used as-is; no consistency check is made against
    /// the analytic values.
    pub fn from_eigenvalues(m: ManifoldId, eigenvalues: Vec<f64>, crossover_time: f64) -> Result<Self> {
        if eigenvalues.len() < 2 {
            return Err(Error::EigenTable("need at least two eigenvalues".into()));
        }
        if m.is_torus() && eigenvalues.len() <= EWALD_MODES {
            return Err(Error::EigenTable(format!(
                "torus tables need cutoff >= {EWALD_MODES}"
            )));
        }
        if !(crossover_time > 0.0) {
            return Err(Error::NonPositiveTime(crossover_time));
        }
        let mut sm = SpectralModel {
            manifold: m,
            eigen_cutoff: eigenvalues.len() - 1,
            crossover_time,
            eigenvalues,
            green_tail_weights: Vec::new(),
            green_regular: 0.0,
        };
        if m.is_torus() {
            sm.green_tail_weights = sm.torus_tail_weights(EWALD_TIME);
            sm.green_regular = sm.torus_green_regular();
        } else {
            sm.green_regular = (2.0 * SPHERE_RADIUS).ln() / (2.0 * PI) - 1.0 / (4.0 * PI);
        }
        Ok(sm)
    }

    pub fn manifold(&self) -> ManifoldId {
        self.manifold
    }

    pub fn eigen_cutoff(&self) -> usize {
        self.eigen_cutoff
    }

    pub fn crossover_time(&self) -> f64 {
        self.crossover_time
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Smallest nonzero eigenvalue of the full Laplacian.
    pub fn spectral_gap(&self) -> f64 {
        self.eigenvalues[1]
    }

    // ------------------------------------------------------------------
    // heat kernel
    // ------------------------------------------------------------------

    pub fn heat_kernel(&self, t: f64, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<KernelValue> {
        check_time(t)?;
        Ok(match self.manifold {
            ManifoldId::Sphere2 => self.sphere_series(x, y, |l| (-self.eigenvalues[l] * t).exp(), 4.0 * PI * t, 0),
            _ => {
                if t >= self.crossover_time {
                    self.torus_heat(t, x, y, true)
                } else {
                    self.torus_heat(t, x, y, false)
                }
            }
        })
    }

    /// Torus heat kernel forced through the eigen-series in every factor.
    pub fn heat_kernel_eigen(&self, t: f64, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<KernelValue> {
        check_time(t)?;
        match self.manifold {
            ManifoldId::Sphere2 => self.heat_kernel(t, x, y),
            _ => Ok(self.torus_heat(t, x, y, true)),
        }
    }

    /// Torus heat kernel forced through the image sum in every factor.
    pub fn heat_kernel_images(&self, t: f64, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<KernelValue> {
        check_time(t)?;
        match self.manifold {
            ManifoldId::Sphere2 => Err(Error::InvalidArgument(
                "image sums are only available on the torus".into(),
            )),
            _ => Ok(self.torus_heat(t, x, y, false)),
        }
    }

    /// One coordinate factor of the torus heat kernel at displacement `u`,
    /// with the representation chosen by the crossover time.
    pub fn torus_heat_factor(&self, t: f64, u: f64) -> Result<(f64, f64)> {
        check_time(t)?;
        if t >= self.crossover_time {
            Ok(self.theta_eigen(u.abs(), t))
        } else {
            Ok(theta_images(u.abs(), t))
        }
    }

    fn torus_heat(&self, t: f64, x: &ManifoldPoint, y: &ManifoldPoint, eigen: bool) -> KernelValue {
        let d = self.manifold.dimension();
        let u = abs_displacement(d, x, y);
        let mut approx = 1.0;
        let mut upper = 1.0;
        for &ui in u.iter().take(d) {
            let (v, b) = if eigen {
                self.theta_eigen(ui, t)
            } else {
                theta_images(ui, t)
            };
            approx *= v;
            upper *= v.abs() + b;
        }
        KernelValue::new(approx, (upper - approx.abs()).max(0.0))
    }

    /// `Σ_{|j|≤K} e^{-4π²j²t} cos(2πju)` with the cutoff chosen for a
    /// negligible tail, capped by the table size.
    fn theta_eigen(&self, u: f64, t: f64) -> (f64, f64) {
        let a = 4.0 * PI * PI * t;
        let wanted = ((TAIL_TARGET.recip().ln() / a).sqrt().ceil() as usize) + 1;
        let k_max = wanted.min(self.eigen_cutoff);
        let c1 = (2.0 * PI * u).cos();
        let mut prev = 1.0;
        let mut cur = c1;
        let mut sum = 1.0;
        for j in 1..=k_max {
            if j > 1 {
                let next = 2.0 * c1 * cur - prev;
                prev = cur;
                cur = next;
            }
            sum += 2.0 * (-self.eigenvalues[j] * t).exp() * cur;
        }
        (sum, 2.0 * gaussian_tail(a, k_max))
    }

    // ------------------------------------------------------------------
    // Green function
    // ------------------------------------------------------------------

    /// Zero-mean Green function. Coincident points return `+∞`.
    pub fn green(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> KernelValue {
        match self.manifold {
            ManifoldId::Sphere2 => {
                let half_chord = 0.5 * chord(x, y);
                if half_chord == 0.0 {
                    return KernelValue::new(f64::INFINITY, 0.0);
                }
                KernelValue::new(-(2.0 * half_chord.ln() + 1.0) / (4.0 * PI), 0.0)
            }
            _ => self.torus_green(x, y),
        }
    }

    /// Plain `f64` Green evaluation for hot loops.
    #[inline]
    pub fn green_value(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> f64 {
        self.green(x, y).value
    }

    /// Sphere Green function by its truncated Legendre series, for cross
    /// checking the closed form.
    pub fn green_series(&self, x: &ManifoldPoint, y: &ManifoldPoint, degree: usize) -> f64 {
        let c = x.coords[0] * y.coords[0] + x.coords[1] * y.coords[1] + x.coords[2] * y.coords[2];
        let mut p = Vec::new();
        legendre_table(degree, c.clamp(-1.0, 1.0), &mut p);
        (1..=degree)
            .map(|l| (2.0 * l as f64 + 1.0) * p[l] / self.eigenvalues[l])
            .sum()
    }

    /// `lim_{y→x} [G(x, y) - σ(d(x, y))]`, where `σ(r) = -(1/2π) log r` in
    /// dimension 2 and `σ(r) = 1/(4πr)` in dimension 3. Independent of `x` on
    /// the supported (homogeneous) manifolds.
    pub fn green_regular_part(&self) -> f64 {
        self.green_regular
    }

    fn torus_green(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> KernelValue {
        let d = self.manifold.dimension();
        let u = abs_displacement(d, x, y);
        let r0 = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        if r0 == 0.0 {
            return KernelValue::new(f64::INFINITY, 0.0);
        }
        let (images, img_bound) = image_sum(d, &u, EWALD_TIME, |r| green_image(d, r, EWALD_TIME), false);
        let tail = self.fourier_sum(&u, &self.green_tail_weights, EWALD_MODES);
        KernelValue::new(images - EWALD_TIME + tail, img_bound + self.fourier_tail_bound(EWALD_TIME, EWALD_MODES))
    }

    fn torus_green_regular(&self) -> f64 {
        let d = self.manifold.dimension();
        let zero = [0.0; 3];
        let (images, _) = image_sum(d, &zero, EWALD_TIME, |r| green_image(d, r, EWALD_TIME), false);
        let center = if d == 2 {
            ((4.0 * EWALD_TIME).ln() - EULER_GAMMA) / (4.0 * PI)
        } else {
            -1.0 / (4.0 * PI.powf(1.5) * EWALD_TIME.sqrt())
        };
        center + images - EWALD_TIME + self.fourier_sum(&zero, &self.green_tail_weights, EWALD_MODES)
    }

    // ------------------------------------------------------------------
    // regularized Green function
    // ------------------------------------------------------------------

    /// `G_t(x, y) = ∫∫ G dμ_x^t dμ_y^t = Σ_{λ>0} e^{-2tλ} e(x)e(y)/λ`. Finite on
    /// the diagonal.
    pub fn regularized_green(&self, t: f64, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<KernelValue> {
        check_time(t)?;
        Ok(match self.manifold {
            ManifoldId::Sphere2 => {
                self.sphere_series(x, y, |l| (-2.0 * t * self.eigenvalues[l]).exp() / self.eigenvalues[l], 8.0 * PI * t, 1)
            }
            _ => self.torus_regularized_green(t, x, y),
        })
    }

    fn torus_regularized_green(&self, t: f64, x: &ManifoldPoint, y: &ManifoldPoint) -> KernelValue {
        let d = self.manifold.dimension();
        let u = abs_displacement(d, x, y);
        if 2.0 * t >= EWALD_TIME {
            let a = 8.0 * PI * PI * t;
            let wanted = ((TAIL_TARGET.recip().ln() / a).sqrt().ceil() as usize) + 1;
            let k = wanted.min(self.eigen_cutoff);
            let weights = self.torus_weights(2.0 * t, k);
            let v = self.fourier_sum(&u, &weights, k);
            return KernelValue::new(v, self.fourier_tail_bound(2.0 * t, k));
        }
        let (images, img_bound) = image_sum(
            d,
            &u,
            EWALD_TIME,
            |r| regularized_image(d, r, 2.0 * t, EWALD_TIME),
            true,
        );
        let tail = self.fourier_sum(&u, &self.green_tail_weights, EWALD_MODES);
        KernelValue::new(
            images - (EWALD_TIME - 2.0 * t) + tail,
            img_bound + self.fourier_tail_bound(EWALD_TIME, EWALD_MODES),
        )
    }

    // ------------------------------------------------------------------
    // shared series machinery
    // ------------------------------------------------------------------

    /// Weights `Π mult(j_i) e^{-λ_j s}/λ_j` on `{0..=k}^d \ {0}`.
    fn torus_weights(&self, s: f64, k: usize) -> Vec<f64> {
        let d = self.manifold.dimension();
        let side = k + 1;
        let total = side.pow(d as u32);
        let mut w = vec![0.0; total];
        for (idx, slot) in w.iter_mut().enumerate().skip(1) {
            let mut rest = idx;
            let mut lam = 0.0;
            let mut mult = 1.0;
            for _ in 0..d {
                let j = rest % side;
                rest /= side;
                lam += self.eigenvalues[j];
                if j > 0 {
                    mult *= 2.0;
                }
            }
            *slot = mult * (-lam * s).exp() / lam;
        }
        w
    }

    fn torus_tail_weights(&self, s: f64) -> Vec<f64> {
        self.torus_weights(s, EWALD_MODES)
    }

    /// `Σ_j W[j] Π cos(2π j_i u_i)` over the box `{0..=k}^d`.
    fn fourier_sum(&self, u: &[f64; 3], weights: &[f64], k: usize) -> f64 {
        let d = self.manifold.dimension();
        let side = k + 1;
        let mut cos_tab = [[0.0f64; 80]; 3];
        assert!(side <= 80, "fourier box too large");
        for i in 0..d {
            let c1 = (2.0 * PI * u[i]).cos();
            cos_tab[i][0] = 1.0;
            if side > 1 {
                cos_tab[i][1] = c1;
            }
            for j in 2..side {
                cos_tab[i][j] = 2.0 * c1 * cos_tab[i][j - 1] - cos_tab[i][j - 2];
            }
        }
        let mut sum = 0.0;
        if d == 2 {
            for j1 in 0..side {
                let row = &weights[j1 * side..(j1 + 1) * side];
                let mut inner = 0.0;
                for (j0, w) in row.iter().enumerate() {
                    inner += w * cos_tab[0][j0];
                }
                sum += inner * cos_tab[1][j1];
            }
        } else {
            for j2 in 0..side {
                for j1 in 0..side {
                    let base = (j2 * side + j1) * side;
                    let row = &weights[base..base + side];
                    let mut inner = 0.0;
                    for (j0, w) in row.iter().enumerate() {
                        inner += w * cos_tab[0][j0];
                    }
                    sum += inner * cos_tab[1][j1] * cos_tab[2][j2];
                }
            }
        }
        sum
    }

    /// Bound on `Σ_{|k|∞>K} e^{-λ_k s}/λ_k` using `λ_k ≥ 4π²(K+1)²` there.
    fn fourier_tail_bound(&self, s: f64, k: usize) -> f64 {
        let d = self.manifold.dimension() as i32;
        let a = 4.0 * PI * PI * s;
        let full = 1.0 + 2.0 * gaussian_tail(a, 0);
        let outer = 2.0 * gaussian_tail(a, k);
        let lam_min = 4.0 * PI * PI * ((k + 1) * (k + 1)) as f64;
        d as f64 * outer * full.powi(d - 1) / lam_min
    }

    /// Legendre series `Σ_{ℓ=ℓ₀}^{L} (2ℓ+1) c_ℓ P_ℓ(cos θ)` where
    /// `|c_ℓ| ≤ e^{-a ℓ(ℓ+1)}/λ_ℓ^{[ℓ₀=1]}`; `L` grows until the tail bound
    /// falls below `TAIL_TARGET` or the table ends.
    fn sphere_series<F: Fn(usize) -> f64>(
        &self,
        x: &ManifoldPoint,
        y: &ManifoldPoint,
        coeff: F,
        a: f64,
        start: usize,
    ) -> KernelValue {
        let mut degree = self.eigen_cutoff;
        for l in 1..self.eigen_cutoff {
            if sphere_tail(a, l, start) < TAIL_TARGET {
                degree = l;
                break;
            }
        }
        let c = x.coords[0] * y.coords[0] + x.coords[1] * y.coords[1] + x.coords[2] * y.coords[2];
        let c = c.clamp(-1.0, 1.0);
        let mut p0 = 1.0;
        let mut p1 = c;
        let mut sum = if start == 0 { 1.0 } else { 0.0 };
        for l in 1..=degree {
            if l > 1 {
                let lf = l as f64;
                let p2 = ((2.0 * lf - 1.0) * c * p1 - (lf - 1.0) * p0) / lf;
                p0 = p1;
                p1 = p2;
            }
            sum += (2.0 * l as f64 + 1.0) * coeff(l) * p1;
        }
        KernelValue::new(sum, sphere_tail(a, degree, start))
    }

    // ------------------------------------------------------------------
    // eigen table I/O
    // ------------------------------------------------------------------

    /// Write the eigenvalue table: `b"SPEC1"`, `u32` manifold code, `u32`
    /// cutoff, then `cutoff + 1` little-endian `f64` eigenvalues.
    pub fn dump_eigen_table<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(EIGEN_MAGIC)?;
        w.write_all(&self.manifold.code().to_le_bytes())?;
        w.write_all(&(self.eigen_cutoff as u32).to_le_bytes())?;
        for v in &self.eigenvalues {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load_eigen_table<R: Read>(mut r: R, crossover_time: Option<f64>) -> Result<SpectralModel> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != EIGEN_MAGIC {
            return Err(Error::EigenTable("bad magic, expected SPEC1".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let code = u32::from_le_bytes(word);
        let m = ManifoldId::from_code(code)
            .ok_or_else(|| Error::EigenTable(format!("unknown manifold code {code}")))?;
        r.read_exact(&mut word)?;
        let cutoff = u32::from_le_bytes(word) as usize;
        if cutoff > 1 << 20 {
            return Err(Error::EigenTable(format!("implausible cutoff {cutoff}")));
        }
        let mut values = Vec::with_capacity(cutoff + 1);
        let mut buf = [0u8; 8];
        for _ in 0..=cutoff {
            r.read_exact(&mut buf)
                .map_err(|_| Error::EigenTable("truncated eigenvalue array".into()))?;
            values.push(f64::from_le_bytes(buf));
        }
        let crossover = crossover_time.unwrap_or(match m {
            ManifoldId::Sphere2 => DEFAULT_SPHERE_CROSSOVER,
            _ => DEFAULT_TORUS_CROSSOVER,
        });
        SpectralModel::from_eigenvalues(m, values, crossover)
    }
}

const EIGEN_MAGIC: &[u8; 5] = b"SPEC1";

/// Componentwise `|min-image displacement|`. Torus kernels are even in each
/// coordinate, and working with absolute values makes evaluation exactly
/// symmetric in its two arguments.
#[inline]
fn abs_displacement(d: usize, x: &ManifoldPoint, y: &ManifoldPoint) -> [f64; 3] {
    let mut u = torus_displacement(d, x, y);
    u.iter_mut().for_each(|c| *c = c.abs());
    u
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTime(t))
    }
}

/// Euclidean chord between two unit vectors.
#[inline]
fn chord(x: &ManifoldPoint, y: &ManifoldPoint) -> f64 {
    let a = x.coords[0] - y.coords[0];
    let b = x.coords[1] - y.coords[1];
    let c = x.coords[2] - y.coords[2];
    (a * a + b * b + c * c).sqrt()
}

/// `Σ_{j>K} e^{-a j²}` bounded by `e^{-a(K+1)²} / (1 - e^{-a(2K+3)})`.
fn gaussian_tail(a: f64, k: usize) -> f64 {
    let k1 = (k + 1) as f64;
    let first = (-a * k1 * k1).exp();
    let ratio = (-a * (2.0 * k1 + 1.0)).exp();
    if ratio >= 1.0 {
        f64::INFINITY
    } else {
        first / (1.0 - ratio)
    }
}

/// Bound on `Σ_{ℓ>L} (2ℓ+1) e^{-aℓ(ℓ+1)} / λ_ℓ^{[start=1]}`.
fn sphere_tail(a: f64, l: usize, start: usize) -> f64 {
    let l1 = (l + 1) as f64;
    if (2.0 * l1 + 1.0).powi(2) * a <= 2.0 {
        return f64::INFINITY;
    }
    // f decreasing from L+1: Σ_{ℓ≥L+1} f ≤ f(L+1) + ∫_{L+1}^∞ f
    let e = (-a * l1 * (l1 + 1.0)).exp();
    let raw = (2.0 * l1 + 1.0) * e + e / a;
    if start == 1 {
        raw / (4.0 * PI * l1 * (l1 + 1.0))
    } else {
        raw
    }
}

/// One-dimensional periodic heat kernel by images, with a tail bound.
fn theta_images(u: f64, t: f64) -> (f64, f64) {
    let norm = (4.0 * PI * t).sqrt().recip();
    let mut sum = 0.0;
    let reach = ((4.0 * t * 45.0).sqrt() + 1.0).ceil() as i64;
    let m_max = reach.max(2);
    for m in -m_max..=m_max {
        let r = u + m as f64;
        sum += norm * (-r * r / (4.0 * t)).exp();
    }
    // |u + m| ≥ |m| - 1/2 beyond the window
    let s = m_max as f64 + 0.5;
    let first = (-s * s / (4.0 * t)).exp();
    let ratio = (-(2.0 * s + 1.0) / (4.0 * t)).exp();
    let bound = 2.0 * norm * first / (1.0 - ratio);
    (sum, bound)
}

/// `∫_0^T (4πs)^{-d/2} e^{-r²/4s} ds`.
#[inline]
fn green_image(d: usize, r: f64, big_t: f64) -> f64 {
    if d == 2 {
        exp_integral_e1(r * r / (4.0 * big_t)) / (4.0 * PI)
    } else {
        erfc(r / (2.0 * big_t.sqrt())) / (4.0 * PI * r)
    }
}

/// `∫_{s0}^{T} (4πs)^{-d/2} e^{-r²/4s} ds`, finite at `r = 0`.
#[inline]
fn regularized_image(d: usize, r: f64, s0: f64, big_t: f64) -> f64 {
    if d == 2 {
        if r == 0.0 {
            return (big_t / s0).ln() / (4.0 * PI);
        }
        let a = r * r / (4.0 * big_t);
        let b = r * r / (4.0 * s0);
        if b < 1e-6 {
            // E1(a) - E1(b) = log(b/a) - (b - a) + O(b²)
            return ((b / a).ln() - (b - a)) / (4.0 * PI);
        }
        (exp_integral_e1(a) - exp_integral_e1(b)) / (4.0 * PI)
    } else {
        let lim = 2.0 * (s0.sqrt().recip() - big_t.sqrt().recip()) / (4.0 * PI).powf(1.5);
        if r < 1e-7 {
            return lim;
        }
        (erf(r / (2.0 * s0.sqrt())) - erf(r / (2.0 * big_t.sqrt()))) / (4.0 * PI * r)
    }
}

/// Sum `f(|u + m|)` over images `m ∈ {-2..2}^d`, skipping terms whose
/// Gaussian factor `e^{-r²/4T}` is below `e^{-42}`. A term at `r = 0` is
/// skipped unless `include_zero` is set (the regularized images are finite
/// there). Returns the sum and a tail bound.
fn image_sum<F: Fn(f64) -> f64>(d: usize, u: &[f64; 3], big_t: f64, f: F, include_zero: bool) -> (f64, f64) {
    let r_cut2 = IMAGE_CUTOFF_EXPONENT * 4.0 * big_t;
    let mut sum = 0.0;
    let mut dropped = 0usize;
    let range = -2i32..=2;
    let mut visit = |m: [i32; 3]| {
        let mut r2 = 0.0;
        for i in 0..d {
            let v = u[i] + m[i] as f64;
            r2 += v * v;
        }
        if r2 == 0.0 && !include_zero {
            return;
        }
        if r2 > r_cut2 {
            dropped += 1;
            return;
        }
        sum += f(r2.sqrt());
    };
    if d == 2 {
        for a in range.clone() {
            for b in range.clone() {
                visit([a, b, 0]);
            }
        }
    } else {
        for a in range.clone() {
            for b in range.clone() {
                for c in range.clone() {
                    visit([a, b, c]);
                }
            }
        }
    }
    // each dropped or out-of-window term has r² > r_cut2 (the window edge sits
    // at r ≥ 2.5, which also exceeds r_cut2 for T ≤ 0.037)
    let r_cut = r_cut2.sqrt();
    let per_term = f(r_cut).abs();
    let outside = (5f64.powi(d as i32) * 50.0) * per_term;
    (sum, dropped as f64 * per_term + outside)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_grid, sample_uniform};
    use crate::rng::RngState;

    /// Truncated lattice sum `Σ_{0<|k|∞≤K} (-1)^{k₁+k₂} / (4π²|k|²)`.
    fn checkerboard_lattice_sum(k: i64) -> f64 {
        let mut s = 0.0;
        for a in -k..=k {
            for b in -k..=k {
                if a == 0 && b == 0 {
                    continue;
                }
                let sign = if (a + b).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                s += sign / (4.0 * PI * PI * (a * a + b * b) as f64);
            }
        }
        s
    }

    #[test]
    fn green_at_half_diagonal_matches_lattice_sum() {
        let s200 = checkerboard_lattice_sum(200);
        let s400 = checkerboard_lattice_sum(400);
        // box-truncated alternating sums converge like 1/K²; Richardson
        let extrapolated = (4.0 * s400 - s200) / 3.0;
        assert!((s400 - s200).abs() < 1e-5);
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let g = sm.green(&ManifoldPoint::torus2(0.0, 0.0), &ManifoldPoint::torus2(0.5, 0.5));
        assert!((g.value - extrapolated).abs() < 1e-8, "{} vs {}", g.value, extrapolated);
        assert!(g.truncation_bound < 1e-12);
    }

    #[test]
    fn green_regular_part_is_limit() {
        for m in ManifoldId::ALL {
            let sm = SpectralModel::new(m);
            let mut rng = RngState::from_seed(4);
            let x = sample_uniform(m, &mut rng);
            let r = 1e-5;
            let y = match m {
                ManifoldId::Sphere2 => {
                    // rotate by a small angle around an axis orthogonal to x
                    let a = x.coords;
                    let mut v = [a[1], -a[0], 0.0];
                    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
                    v.iter_mut().for_each(|c| *c /= n);
                    let th = r / SPHERE_RADIUS;
                    ManifoldPoint::sphere(
                        a[0] * th.cos() + v[0] * th.sin(),
                        a[1] * th.cos() + v[1] * th.sin(),
                        a[2] * th.cos() + v[2] * th.sin(),
                    )
                }
                ManifoldId::Torus2 => ManifoldPoint::torus2(x.coords[0] + r, x.coords[1]),
                ManifoldId::Torus3 => ManifoldPoint::torus3(x.coords[0] + r, x.coords[1], x.coords[2]),
            };
            let g = sm.green_value(&x, &y);
            let sing = if m.dimension() == 2 { -r.ln() / (2.0 * PI) } else { 1.0 / (4.0 * PI * r) };
            let tol = if m.dimension() == 2 { 1e-8 } else { 1e-6 };
            assert!((g - sing - sm.green_regular_part()).abs() < tol, "{m}: {}", g - sing);
        }
    }

    #[test]
    fn sphere_closed_form_matches_series() {
        let sm = SpectralModel::new(ManifoldId::Sphere2);
        let mut rng = RngState::from_seed(8);
        for _ in 0..20 {
            let x = sample_uniform(ManifoldId::Sphere2, &mut rng);
            let y = sample_uniform(ManifoldId::Sphere2, &mut rng);
            let closed = sm.green_value(&x, &y);
            // Cesàro-free check: average the partial sums over two consecutive
            // degrees to damp the O(ℓ^{-3/2}) oscillation
            let a = sm.green_series(&x, &y, 600);
            let b = sm.green_series(&x, &y, 601);
            assert!((closed - 0.5 * (a + b)).abs() < 2e-4, "{closed} vs {a}");
        }
    }

    #[test]
    fn heat_kernel_rejects_nonpositive_time() {
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let x = ManifoldPoint::torus2(0.1, 0.2);
        assert!(sm.heat_kernel(0.0, &x, &x).is_err());
        assert!(sm.heat_kernel(-1.0, &x, &x).is_err());
        assert!(sm.regularized_green(0.0, &x, &x).is_err());
    }

    #[test]
    fn large_time_heat_kernel_is_uniform() {
        let mut rng = RngState::from_seed(2);
        for m in ManifoldId::ALL {
            let sm = SpectralModel::new(m);
            for _ in 0..20 {
                let x = sample_uniform(m, &mut rng);
                let y = sample_uniform(m, &mut rng);
                let p = sm.heat_kernel(10.0, &x, &y).unwrap();
                assert!((p.value - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn short_time_diagonal_leading_term() {
        // image oracle with m ∈ {-2..2}²
        let t: f64 = 0.005;
        let mut oracle = 0.0;
        for a in -2..=2 {
            for b in -2..=2 {
                let r2 = (a * a + b * b) as f64;
                oracle += (-r2 / (4.0 * t)).exp() / (4.0 * PI * t);
            }
        }
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let x = ManifoldPoint::torus2(0.3, 0.7);
        let p = sm.heat_kernel(t, &x, &x).unwrap();
        assert!((p.value - oracle).abs() < 1e-12);
        let lead = 1.0 / (4.0 * PI * t);
        assert!((p.value - lead).abs() / lead < 0.01);
    }

    #[test]
    fn eigen_and_image_paths_agree() {
        let mut rng = RngState::from_seed(12);
        for m in [ManifoldId::Torus2, ManifoldId::Torus3] {
            let sm = SpectralModel::new(m);
            for &t in &[1e-3, 3e-3, 0.01, 0.05, 0.2, 1.0] {
                for _ in 0..10 {
                    let x = sample_uniform(m, &mut rng);
                    let y = sample_uniform(m, &mut rng);
                    let a = sm.heat_kernel_eigen(t, &x, &y).unwrap();
                    let b = sm.heat_kernel_images(t, &x, &y).unwrap();
                    let slack = a.truncation_bound + b.truncation_bound + 1e-12 * a.value.abs().max(1.0);
                    assert!((a.value - b.value).abs() <= slack, "t={t}: {} vs {}", a.value, b.value);
                }
            }
        }
    }

    #[test]
    fn heat_kernel_mass_on_grid() {
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let grid = build_grid(ManifoldId::Torus2, 64).unwrap();
        let x = ManifoldPoint::torus2(0.123, 0.456);
        for &t in &[0.01, 0.1, 1.0] {
            let mass = grid.integrate(|y| sm.heat_kernel(t, &x, y).unwrap().value);
            assert!((mass - 1.0).abs() < 1e-8, "t={t}: {mass}");
        }
    }

    #[test]
    fn green_symmetric() {
        let mut rng = RngState::from_seed(21);
        for m in ManifoldId::ALL {
            let sm = SpectralModel::new(m);
            for _ in 0..1000 {
                let x = sample_uniform(m, &mut rng);
                let y = sample_uniform(m, &mut rng);
                assert_eq!(sm.green_value(&x, &y), sm.green_value(&y, &x));
            }
        }
    }

    #[test]
    fn green_diagonal_is_infinite() {
        for m in ManifoldId::ALL {
            let sm = SpectralModel::new(m);
            let mut rng = RngState::from_seed(1);
            let x = sample_uniform(m, &mut rng);
            assert!(sm.green(&x, &x).is_infinite());
            assert!(sm.regularized_green(0.01, &x, &x).unwrap().value.is_finite());
        }
    }

    #[test]
    fn regularized_green_limits() {
        let mut rng = RngState::from_seed(5);
        for m in ManifoldId::ALL {
            let sm = SpectralModel::new(m);
            for _ in 0..30 {
                let x = sample_uniform(m, &mut rng);
                let y = sample_uniform(m, &mut rng);
                let big = sm.regularized_green(10.0, &x, &y).unwrap();
                assert!(big.value.abs() < 1e-8);
                if crate::manifold::geodesic_distance(m, &x, &y) > 0.1 {
                    let g = sm.green_value(&x, &y);
                    let gt = sm.regularized_green(1e-4, &x, &y).unwrap();
                    assert!((g - gt.value).abs() <= 2e-4 + gt.truncation_bound + 1e-12, "{m}");
                }
            }
        }
    }

    #[test]
    fn regularized_green_branches_agree_at_split() {
        // both torus branches evaluate G_t; compare just below and above 2t = T
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let x = ManifoldPoint::torus2(0.1, 0.2);
        let y = ManifoldPoint::torus2(0.35, 0.9);
        let t = EWALD_TIME / 2.0;
        let below = sm.regularized_green(t * (1.0 - 1e-9), &x, &y).unwrap().value;
        let above = sm.regularized_green(t, &x, &y).unwrap().value;
        assert!((below - above).abs() < 1e-9);
        let d_below = sm.regularized_green(t * (1.0 - 1e-9), &x, &x).unwrap().value;
        let d_above = sm.regularized_green(t, &x, &x).unwrap().value;
        assert!((d_below - d_above).abs() < 1e-8);
        let sm3 = SpectralModel::new(ManifoldId::Torus3);
        let x3 = ManifoldPoint::torus3(0.1, 0.2, 0.3);
        let y3 = ManifoldPoint::torus3(0.4, 0.8, 0.9);
        for (a, b) in [(&x3, &y3), (&x3, &x3)] {
            let lo = sm3.regularized_green(t * (1.0 - 1e-9), a, b).unwrap().value;
            let hi = sm3.regularized_green(t, a, b).unwrap().value;
            assert!((lo - hi).abs() < 1e-8, "{lo} vs {hi}");
        }
    }

    #[test]
    fn eigen_table_round_trip() {
        let sm = SpectralModel::new(ManifoldId::Sphere2);
        let mut buf = Vec::new();
        sm.dump_eigen_table(&mut buf).unwrap();
        assert_eq!(&buf[..5], b"SPEC1");
        assert_eq!(u32::from_le_bytes(buf[5..9].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 5 + 4 + 4 + 8 * (sm.eigen_cutoff() + 1));
        let back = SpectralModel::load_eigen_table(&buf[..], None).unwrap();
        assert_eq!(back.eigenvalues(), sm.eigenvalues());
        assert!(SpectralModel::load_eigen_table(&buf[..20], None).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(SpectralModel::load_eigen_table(&bad[..], None).is_err());
    }
}
