//! The supported compact manifolds, all normalized to unit volume.
//!
//! * `Torus2`, `Torus3`: the flat torus `[0,1)^d` with Lebesgue measure.
//! * `Sphere2`: the round sphere of radius `1/(2√π)`, so that its area is 1.
//!   Points are stored as unit direction vectors; the radius enters only
//!   through the geometry.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::rng::RngState;

/// Radius of the unit-area sphere.
pub const SPHERE_RADIUS: f64 = 0.282_094_791_773_878_14; // 1/(2√π)

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldId {
    Torus2,
    Torus3,
    Sphere2,
}

impl ManifoldId {
    pub const ALL: [ManifoldId; 3] = [ManifoldId::Torus2, ManifoldId::Torus3, ManifoldId::Sphere2];

    pub fn dimension(self) -> usize {
        match self {
            ManifoldId::Torus2 | ManifoldId::Sphere2 => 2,
            ManifoldId::Torus3 => 3,
        }
    }

    /// Number of stored coordinates per point.
    pub fn coord_len(self) -> usize {
        match self {
            ManifoldId::Torus2 => 2,
            ManifoldId::Torus3 | ManifoldId::Sphere2 => 3,
        }
    }

    pub fn is_torus(self) -> bool {
        !matches!(self, ManifoldId::Sphere2)
    }

    pub fn name(self) -> &'static str {
        match self {
            ManifoldId::Torus2 => "torus2",
            ManifoldId::Torus3 => "torus3",
            ManifoldId::Sphere2 => "sphere2",
        }
    }

    /// Integer code used in binary file headers.
    pub fn code(self) -> u32 {
        match self {
            ManifoldId::Torus2 => 0,
            ManifoldId::Torus3 => 1,
            ManifoldId::Sphere2 => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<ManifoldId> {
        match code {
            0 => Some(ManifoldId::Torus2),
            1 => Some(ManifoldId::Torus3),
            2 => Some(ManifoldId::Sphere2),
            _ => None,
        }
    }

    /// Largest possible geodesic distance.
    pub fn diameter(self) -> f64 {
        match self {
            ManifoldId::Torus2 => 0.5 * 2f64.sqrt(),
            ManifoldId::Torus3 => 0.5 * 3f64.sqrt(),
            ManifoldId::Sphere2 => PI * SPHERE_RADIUS,
        }
    }

    /// Validate and normalize raw coordinates into a point.
    pub fn point(self, coords: &[f64]) -> Result<ManifoldPoint> {
        if coords.len() != self.coord_len() {
            return Err(Error::InvalidArgument(format!(
                "{} points need {} coordinates, got {}",
                self.name(),
                self.coord_len(),
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        Ok(match self {
            ManifoldId::Torus2 => ManifoldPoint::torus2(coords[0], coords[1]),
            ManifoldId::Torus3 => ManifoldPoint::torus3(coords[0], coords[1], coords[2]),
            ManifoldId::Sphere2 => {
                let n = (coords[0] * coords[0] + coords[1] * coords[1] + coords[2] * coords[2]).sqrt();
                if n == 0.0 {
                    return Err(Error::InvalidArgument("zero direction vector".into()));
                }
                ManifoldPoint::sphere(coords[0], coords[1], coords[2])
            }
        })
    }
}

impl fmt::Display for ManifoldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ManifoldId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "torus2" => Ok(ManifoldId::Torus2),
            "torus3" => Ok(ManifoldId::Torus3),
            "sphere2" => Ok(ManifoldId::Sphere2),
            other => Err(Error::InvalidArgument(format!(
                "unknown manifold '{other}' (valid: torus2, torus3, sphere2)"
            ))),
        }
    }
}

/// A point in chart coordinates. Torus points use the first `d` entries
/// (reduced into `[0,1)`); sphere points are unit 3-vectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPoint {
    pub coords: [f64; 3],
}

#[inline]
fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[inline]
fn min_image(d: f64) -> f64 {
    d - d.round()
}

impl ManifoldPoint {
    pub fn torus2(x: f64, y: f64) -> Self {
        ManifoldPoint {
            coords: [wrap_unit(x), wrap_unit(y), 0.0],
        }
    }

    pub fn torus3(x: f64, y: f64, z: f64) -> Self {
        ManifoldPoint {
            coords: [wrap_unit(x), wrap_unit(y), wrap_unit(z)],
        }
    }

    pub fn sphere(x: f64, y: f64, z: f64) -> Self {
        let n = (x * x + y * y + z * z).sqrt();
        ManifoldPoint {
            coords: [x / n, y / n, z / n],
        }
    }

    pub fn as_slice(&self, m: ManifoldId) -> &[f64] {
        &self.coords[..m.coord_len()]
    }
}

/// Minimal-image displacement `y - x` on a torus, each entry in `[-1/2, 1/2]`.
#[inline]
pub fn torus_displacement(d: usize, x: &ManifoldPoint, y: &ManifoldPoint) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..d {
        out[i] = min_image(y.coords[i] - x.coords[i]);
    }
    out
}

#[inline]
fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Angle between two unit vectors, accurate near 0 and π.
#[inline]
pub fn sphere_angle(x: &ManifoldPoint, y: &ManifoldPoint) -> f64 {
    let c = cross3(&x.coords, &y.coords);
    dot3(&c, &c).sqrt().atan2(dot3(&x.coords, &y.coords))
}

/// Riemannian distance.
pub fn geodesic_distance(m: ManifoldId, x: &ManifoldPoint, y: &ManifoldPoint) -> f64 {
    match m {
        ManifoldId::Torus2 | ManifoldId::Torus3 => {
            let d = torus_displacement(m.dimension(), x, y);
            dot3(&d, &d).sqrt()
        }
        ManifoldId::Sphere2 => SPHERE_RADIUS * sphere_angle(x, y),
    }
}

/// Draw a point from the normalized volume measure.
pub fn sample_uniform(m: ManifoldId, rng: &mut RngState) -> ManifoldPoint {
    match m {
        ManifoldId::Torus2 => ManifoldPoint::torus2(rng.random(), rng.random()),
        ManifoldId::Torus3 => ManifoldPoint::torus3(rng.random(), rng.random(), rng.random()),
        ManifoldId::Sphere2 => loop {
            let g: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            let n2 = dot3(&g, &g);
            if n2 > 1e-24 {
                break ManifoldPoint::sphere(g[0], g[1], g[2]);
            }
        },
    }
}

/// Symmetric random-walk proposal. On the torus each coordinate receives an
/// independent `N(0, step²)` increment (wrapped); on the sphere an isotropic
/// tangent Gaussian of geodesic scale `step` is pushed through the exact
/// exponential map.
pub fn propose_move(m: ManifoldId, x: &ManifoldPoint, step: f64, rng: &mut RngState) -> ManifoldPoint {
    match m {
        ManifoldId::Torus2 | ManifoldId::Torus3 => {
            let mut c = x.coords;
            for v in c.iter_mut().take(m.dimension()) {
                let g: f64 = rng.sample(StandardNormal);
                *v = wrap_unit(*v + step * g);
            }
            ManifoldPoint { coords: c }
        }
        ManifoldId::Sphere2 => {
            let g: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            sphere_exp_map(x, &g, step / SPHERE_RADIUS)
        }
    }
}

/// Move along the great circle in the tangent direction obtained by projecting
/// `g` onto `T_x S²`, by the angle `scale · |proj g|`.
fn sphere_exp_map(x: &ManifoldPoint, g: &[f64; 3], scale: f64) -> ManifoldPoint {
    let u = &x.coords;
    let gu = dot3(g, u);
    let v = [g[0] - gu * u[0], g[1] - gu * u[1], g[2] - gu * u[2]];
    let vn = dot3(&v, &v).sqrt();
    let theta = scale * vn;
    if theta == 0.0 || vn == 0.0 {
        return *x;
    }
    let (s, c) = theta.sin_cos();
    ManifoldPoint::sphere(
        c * u[0] + s * v[0] / vn,
        c * u[1] + s * v[1] / vn,
        c * u[2] + s * v[2] / vn,
    )
}

/// Proposal restricted to the nodes of a `resolution`-lattice on the torus:
/// each coordinate moves by `round(N(0, step²)·resolution)` lattice steps.
/// The offset law is symmetric, so the chain targets the lattice-restricted
/// Gibbs measure.
pub fn propose_lattice_move(
    m: ManifoldId,
    x: &ManifoldPoint,
    step: f64,
    resolution: usize,
    rng: &mut RngState,
) -> ManifoldPoint {
    assert!(m.is_torus(), "lattice proposals exist only on the torus");
    let r = resolution as f64;
    let mut c = x.coords;
    for v in c.iter_mut().take(m.dimension()) {
        let g: f64 = rng.sample(StandardNormal);
        let k = (g * step * r).round();
        let idx = ((*v * r).round() + k).rem_euclid(r);
        *v = idx / r;
    }
    ManifoldPoint { coords: c }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    /// Regular torus lattice with `resolution^d` nodes at `i / resolution`.
    Lattice,
    /// Fibonacci spiral with `resolution²` equal-weight nodes.
    Fibonacci,
    /// Gauss-Legendre in `z` times `2·resolution` equispaced longitudes.
    GaussProduct,
}

/// A discretization of the volume measure: nodes, nonnegative weights summing
/// to one, and the mesh (sup over the manifold of the distance to the nearest
/// node).
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    pub manifold: ManifoldId,
    pub kind: GridKind,
    pub resolution: usize,
    pub nodes: Vec<ManifoldPoint>,
    pub weights: Vec<f64>,
    pub mesh: f64,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(&ManifoldPoint) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    /// Index of the node nearest to `x`.
    pub fn nearest_node(&self, x: &ManifoldPoint) -> usize {
        if self.kind == GridKind::Lattice {
            let r = self.resolution as f64;
            let d = self.manifold.dimension();
            let mut idx = 0usize;
            for i in (0..d).rev() {
                let k = ((x.coords[i] * r).round() as usize) % self.resolution;
                idx = idx * self.resolution + k;
            }
            return idx;
        }
        let mut best = (f64::INFINITY, 0);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = geodesic_distance(self.manifold, x, n);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

/// Build the default grid for `m`: a lattice on tori, a Fibonacci lattice on
/// the sphere.
pub fn build_grid(m: ManifoldId, resolution: usize) -> Result<QuadratureGrid> {
    if resolution < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    match m {
        ManifoldId::Torus2 | ManifoldId::Torus3 => Ok(torus_lattice(m, resolution)),
        ManifoldId::Sphere2 => Ok(fibonacci_sphere(resolution)),
    }
}

/// Gauss-Legendre product grid on the sphere with `resolution` latitudes and
/// `2·resolution` longitudes; exact for spherical polynomials of degree below
/// `2·resolution`.
pub fn build_gauss_grid(resolution: usize) -> Result<QuadratureGrid> {
    build_gauss_grid_sized(resolution, 2 * resolution)
}

/// Gauss-Legendre product grid with `n_lat` latitudes and `n_lon` equispaced
/// longitudes; exact for degree below `min(2·n_lat, n_lon)`.
pub fn build_gauss_grid_sized(n_lat: usize, n_lon: usize) -> Result<QuadratureGrid> {
    if n_lat < 2 || n_lon < 2 {
        return Err(Error::InvalidArgument(format!(
            "gauss grid needs at least 2x2 nodes, got {n_lat}x{n_lon}"
        )));
    }
    let (z, wz) = gauss_legendre(n_lat);
    let mut nodes = Vec::with_capacity(n_lat * n_lon);
    let mut weights = Vec::with_capacity(n_lat * n_lon);
    for (zi, wi) in z.iter().zip(&wz) {
        let s = (1.0 - zi * zi).max(0.0).sqrt();
        for j in 0..n_lon {
            let phi = 2.0 * PI * (j as f64 + 0.5) / n_lon as f64;
            nodes.push(ManifoldPoint::sphere(s * phi.cos(), s * phi.sin(), *zi));
            weights.push(0.5 * wi / n_lon as f64);
        }
    }
    let mesh = estimate_mesh(ManifoldId::Sphere2, &nodes);
    Ok(QuadratureGrid {
        manifold: ManifoldId::Sphere2,
        kind: GridKind::GaussProduct,
        resolution: n_lat,
        nodes,
        weights,
        mesh,
    })
}

fn torus_lattice(m: ManifoldId, resolution: usize) -> QuadratureGrid {
    let d = m.dimension();
    let total = resolution.pow(d as u32);
    let r = resolution as f64;
    let mut nodes = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rest = idx;
        let mut c = [0.0; 3];
        for v in c.iter_mut().take(d) {
            *v = (rest % resolution) as f64 / r;
            rest /= resolution;
        }
        nodes.push(ManifoldPoint { coords: c });
    }
    QuadratureGrid {
        manifold: m,
        kind: GridKind::Lattice,
        resolution,
        nodes,
        weights: vec![1.0 / total as f64; total],
        mesh: 0.5 * (d as f64).sqrt() / r,
    }
}

fn fibonacci_sphere(resolution: usize) -> QuadratureGrid {
    let n = resolution * resolution;
    let golden = PI * (3.0 - 5f64.sqrt());
    let nodes: Vec<ManifoldPoint> = (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let s = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            ManifoldPoint::sphere(s * phi.cos(), s * phi.sin(), z)
        })
        .collect();
    let mesh = estimate_mesh(ManifoldId::Sphere2, &nodes);
    QuadratureGrid {
        manifold: ManifoldId::Sphere2,
        kind: GridKind::Fibonacci,
        resolution,
        nodes,
        weights: vec![1.0 / n as f64; n],
        mesh,
    }
}

/// Max nearest-node distance over 10⁴ uniform samples (fixed seed).
fn estimate_mesh(m: ManifoldId, nodes: &[ManifoldPoint]) -> f64 {
    let mut rng = RngState::from_seed(0x6d65_7368);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let p = sample_uniform(m, &mut rng);
        let near = nodes
            .iter()
            .map(|q| geodesic_distance(m, &p, q))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(near);
    }
    worst
}
