//! Weighted point clouds and Green-kernel double sums over them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{GridKind, ManifoldId, ManifoldPoint, QuadratureGrid};
use crate::spectral::SpectralModel;

const WEIGHT_TOL: f64 = 1e-10;

/// A probability measure with finitely many atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    pub manifold: ManifoldId,
    pub atoms: Vec<ManifoldPoint>,
    pub weights: Vec<f64>,
    /// Set when the atoms are exactly the nodes of a torus lattice of this
    /// resolution, in grid order. Enables displacement-table kernels.
    pub lattice: Option<usize>,
}

impl DiscreteMeasure {
    pub fn new(manifold: ManifoldId, atoms: Vec<ManifoldPoint>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("measure has no atoms".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::WeightSum { sum, tol: WEIGHT_TOL });
        }
        Ok(DiscreteMeasure {
            manifold,
            atoms,
            weights,
            lattice: None,
        })
    }

    /// Empirical measure `(1/n) Σ δ_{x_i}`.
    pub fn empirical(manifold: ManifoldId, atoms: &[ManifoldPoint]) -> Result<Self> {
        let n = atoms.len();
        if n == 0 {
            return Err(Error::InvalidArgument("measure has no atoms".into()));
        }
        Ok(DiscreteMeasure {
            manifold,
            atoms: atoms.to_vec(),
            weights: vec![1.0 / n as f64; n],
            lattice: None,
        })
    }

    /// The grid's own discretization of the volume measure.
    pub fn from_grid(grid: &QuadratureGrid) -> Self {
        DiscreteMeasure {
            manifold: grid.manifold,
            atoms: grid.nodes.clone(),
            weights: grid.weights.clone(),
            lattice: lattice_of(grid),
        }
    }

    /// Discretization of `ρ dπ` on a grid: weights `w_k ρ_k`. The density must
    /// be nonnegative and integrate to one within `tol`; the weights are then
    /// renormalized exactly.
    pub fn from_density(grid: &QuadratureGrid, density: &[f64], tol: f64) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::InvalidArgument("density length differs from grid size".into()));
        }
        if density.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("density must be finite and nonnegative".into()));
        }
        let mut weights: Vec<f64> = density.iter().zip(&grid.weights).map(|(r, w)| r * w).collect();
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::WeightSum { sum, tol });
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(DiscreteMeasure {
            manifold: grid.manifold,
            atoms: grid.nodes.clone(),
            weights,
            lattice: lattice_of(grid),
        })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn integrate<F: Fn(&ManifoldPoint) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    pub fn to_file(&self) -> MeasureFile {
        MeasureFile {
            manifold: Some(self.manifold),
            coords: self.atoms.iter().map(|p| p.as_slice(self.manifold).to_vec()).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn from_file(file: &MeasureFile, fallback: Option<ManifoldId>) -> Result<Self> {
        let m = file
            .manifold
            .or(fallback)
            .ok_or_else(|| Error::InvalidArgument("measure file names no manifold".into()))?;
        let atoms = file
            .coords
            .iter()
            .map(|c| m.point(c))
            .collect::<Result<Vec<_>>>()?;
        DiscreteMeasure::new(m, atoms, file.weights.clone())
    }
}

/// JSON layout of a measure: `{"manifold": "torus2", "coords": [[x, y], ...],
/// "weights": [...]}`; `manifold` may be omitted and supplied externally.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifold: Option<ManifoldId>,
    pub coords: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

fn lattice_of(grid: &QuadratureGrid) -> Option<usize> {
    (grid.kind == GridKind::Lattice).then_some(grid.resolution)
}

/// `G` on the displacement lattice `{0..res}^d / res`, flattened with the first
/// coordinate fastest. The zero displacement holds `+∞`.
pub fn lattice_green_table(sm: &SpectralModel, res: usize) -> Vec<f64> {
    let m = sm.manifold();
    assert!(m.is_torus());
    let d = m.dimension();
    let total = res.pow(d as u32);
    let origin = m.point(&vec![0.0; d]).expect("origin is valid");
    (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut rest = idx;
            let mut c = [0.0; 3];
            for v in c.iter_mut().take(d) {
                *v = (rest % res) as f64 / res as f64;
                rest /= res;
            }
            sm.green_value(&origin, &ManifoldPoint { coords: c })
        })
        .collect()
}

/// Index of the lattice displacement `j - i` for flattened lattice indices.
#[inline]
pub(crate) fn lattice_difference(i: usize, j: usize, res: usize, d: usize) -> usize {
    let (mut a, mut b) = (i, j);
    let mut out = 0;
    let mut stride = 1;
    for _ in 0..d {
        let ai = a % res;
        let bi = b % res;
        a /= res;
        b /= res;
        out += ((bi + res - ai) % res) * stride;
        stride *= res;
    }
    out
}

/// `Σ_{i,j} s_i t_j G(x_i, x_j)` over one atom set. With `exclude_diagonal`,
/// pairs of coincident atoms are skipped; otherwise any such pair with
/// nonzero weights makes the sum `+∞`.
pub fn green_bilinear(
    sm: &SpectralModel,
    atoms: &[ManifoldPoint],
    s: &[f64],
    t: &[f64],
    lattice: Option<usize>,
    exclude_diagonal: bool,
) -> f64 {
    let n = atoms.len();
    if let Some(res) = lattice.filter(|_| sm.manifold().is_torus()) {
        let d = sm.manifold().dimension();
        let table = lattice_green_table(sm, res);
        let diag_hit = (0..n).any(|i| s[i] != 0.0 && t[i] != 0.0);
        if diag_hit && !exclude_diagonal {
            return f64::INFINITY;
        }
        return (0..n)
            .into_par_iter()
            .map(|i| {
                if s[i] == 0.0 {
                    return 0.0;
                }
                let mut acc = 0.0;
                for j in 0..n {
                    if j != i && t[j] != 0.0 {
                        acc += t[j] * table[lattice_difference(i, j, res, d)];
                    }
                }
                s[i] * acc
            })
            .sum();
    }
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            if s[i] == 0.0 {
                return 0.0;
            }
            let mut acc = 0.0;
            for j in 0..n {
                if t[j] == 0.0 {
                    continue;
                }
                let g = sm.green_value(&atoms[i], &atoms[j]);
                if g == f64::INFINITY {
                    if exclude_diagonal {
                        continue;
                    }
                    return f64::INFINITY;
                }
                acc += t[j] * g;
            }
            s[i] * acc
        })
        .collect();
    rows.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::build_grid;

    #[test]
    fn rejects_bad_weights() {
        let p = ManifoldPoint::torus2(0.1, 0.2);
        assert!(matches!(
            DiscreteMeasure::new(ManifoldId::Torus2, vec![p, p], vec![0.5, 0.6]),
            Err(Error::WeightSum { .. })
        ));
        assert!(DiscreteMeasure::new(ManifoldId::Torus2, vec![p], vec![f64::NAN]).is_err());
        assert!(DiscreteMeasure::new(ManifoldId::Torus2, vec![p, p], vec![0.5]).is_err());
    }

    #[test]
    fn lattice_table_path_matches_direct_sum() {
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let grid = build_grid(ManifoldId::Torus2, 8).unwrap();
        let n = grid.len();
        let s: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let t: Vec<f64> = (0..n).map(|i| ((i * 3) % 4) as f64).collect();
        let fast = green_bilinear(&sm, &grid.nodes, &s, &t, Some(8), true);
        let slow = green_bilinear(&sm, &grid.nodes, &s, &t, None, true);
        assert!((fast - slow).abs() < 1e-10 * slow.abs().max(1.0));
        assert_eq!(green_bilinear(&sm, &grid.nodes, &s, &t, Some(8), false), f64::INFINITY);
    }

    #[test]
    fn file_round_trip() {
        let mu = DiscreteMeasure::new(
            ManifoldId::Torus2,
            vec![ManifoldPoint::torus2(0.0, 0.0), ManifoldPoint::torus2(0.5, 0.0)],
            vec![0.5, 0.5],
        )
        .unwrap();
        let json = serde_json::to_string(&mu.to_file()).unwrap();
        let back: MeasureFile = serde_json::from_str(&json).unwrap();
        assert_eq!(DiscreteMeasure::from_file(&back, None).unwrap(), mu);
    }
}
