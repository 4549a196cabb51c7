//! Weighted within transformations and alternating projections.
//!
//! The residual projection M̃v = v − D(D′ΩD)⁻¹D′Ωv is never materialized.
//! One weighted within transformation removes the Ω-weighted cell mean of a
//! single fixed-effect dimension; cycling the active dimensions until the
//! iterate stops moving converges to the joint projection (von
//! Neumann–Halperin). Cell means average over all rows sharing a level, i.e.
//! over the index the level does not pin down.

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// Convergence controls for the alternating projections.
#[derive(Debug, Clone, Copy)]
pub struct MapSettings {
    /// Max-abs change of the iterate between full sweeps, relative to
    /// max(1, ‖v‖∞) of the input vector.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for MapSettings {
    fn default() -> Self {
        MapSettings {
            tol: 1e-8,
            max_sweeps: 10_000,
        }
    }
}

/// Per-level accumulators for one set of weights.
///
/// The Σω per level is fixed across sweeps and columns, so it is validated
/// and stored once; only Σωv changes while projecting.
pub struct GroupSums<'d> {
    ds: &'d PanelDataset,
    w: &'d [f64],
    /// Per dim: Σω by level.
    sum_w: Vec<Vec<f64>>,
    /// Scratch: Σωv by level, reused across dims/columns.
    scratch: Vec<f64>,
}

impl<'d> GroupSums<'d> {
    pub fn new(ds: &'d PanelDataset, w: &'d [f64]) -> Result<GroupSums<'d>> {
        assert_eq!(w.len(), ds.n_rows());
        let fe = ds.fe();
        let mut sum_w = Vec::with_capacity(fe.dims().len());
        let mut max_levels = 0;
        for d in 0..fe.dims().len() {
            let mut acc = vec![0.0; fe.count(d)];
            for (r, &code) in fe.codes(d).iter().enumerate() {
                acc[code as usize] += w[r];
            }
            if let Some(level) = acc.iter().position(|&s| s <= 0.0) {
                return Err(Error::ZeroWeightLevel {
                    dim: fe.dims()[d],
                    level,
                });
            }
            max_levels = max_levels.max(acc.len());
            sum_w.push(acc);
        }
        Ok(GroupSums {
            ds,
            w,
            sum_w,
            scratch: vec![0.0; max_levels],
        })
    }

    /// Subtract the Ω-weighted cell mean of `dim_idx` from `v`, in place.
    fn sweep_dim(&mut self, dim_idx: usize, v: &mut [f64]) {
        let codes = self.ds.fe().codes(dim_idx);
        let sums = &mut self.scratch[..self.sum_w[dim_idx].len()];
        sums.fill(0.0);
        for (r, &code) in codes.iter().enumerate() {
            sums[code as usize] += self.w[r] * v[r];
        }
        let sum_w = &self.sum_w[dim_idx];
        for (s, &t) in sums.iter_mut().zip(sum_w) {
            *s /= t;
        }
        for (r, &code) in codes.iter().enumerate() {
            v[r] -= sums[code as usize];
        }
    }

    /// Project `v` onto the orthogonal complement of the dummy span, in place.
    fn project_in_place(&mut self, v: &mut [f64], settings: MapSettings) -> Result<()> {
        let k = self.ds.fe().dims().len();
        if k == 1 {
            // A single projection is idempotent: one transformation is exact.
            self.sweep_dim(0, v);
            return Ok(());
        }
        let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let threshold = settings.tol * scale;
        let mut prev = v.to_vec();
        let mut delta = f64::INFINITY;
        for _sweep in 0..settings.max_sweeps {
            for d in 0..k {
                self.sweep_dim(d, v);
            }
            delta = v
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if delta < threshold {
                return Ok(());
            }
            prev.copy_from_slice(v);
        }
        Err(Error::ProjectionNoConvergence {
            sweeps: settings.max_sweeps,
            delta,
        })
    }
}

/// One weighted within transformation of `v` for a single dimension.
pub fn within_transform(
    ds: &PanelDataset,
    dim_idx: usize,
    v: &[f64],
    w: &[f64],
) -> Result<Vec<f64>> {
    let mut sums = GroupSums::new(ds, w)?;
    let mut out = v.to_vec();
    sums.sweep_dim(dim_idx, &mut out);
    Ok(out)
}

/// M̃v by alternating projections over all active dimensions.
pub fn map_project(
    ds: &PanelDataset,
    v: &[f64],
    w: &[f64],
    settings: MapSettings,
) -> Result<Vec<f64>> {
    let mut sums = GroupSums::new(ds, w)?;
    let mut out = v.to_vec();
    sums.project_in_place(&mut out, settings)?;
    Ok(out)
}

/// Columnwise [`map_project`] of a row-major n × k matrix, sharing the
/// per-level weight sums across columns.
pub fn map_project_columns(
    ds: &PanelDataset,
    m: &[f64],
    k: usize,
    w: &[f64],
    settings: MapSettings,
) -> Result<Vec<f64>> {
    let n = ds.n_rows();
    assert_eq!(m.len(), n * k);
    let mut sums = GroupSums::new(ds, w)?;
    let mut out = m.to_vec();
    let mut col = vec![0.0; n];
    for c in 0..k {
        for r in 0..n {
            col[r] = m[r * k + c];
        }
        sums.project_in_place(&mut col, settings)?;
        for r in 0..n {
            out[r * k + c] = col[r];
        }
    }
    Ok(out)
}
