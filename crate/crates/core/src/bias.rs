//! Incidental-parameter bias corrections for the structural coefficients.
//!
//! The analytical correction subtracts estimated leading bias terms of
//! orders 1/I, 1/J, and (with pair effects) 1/T from the coefficient vector;
//! the 1/T term carries a bandwidth-truncated spectral part that picks up
//! the feedback from predetermined regressors. The split-panel jackknife
//! recombines half-panel estimates to cancel the same leading terms, at the
//! price of a homogeneity assumption that can be checked with a Wald test.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::link::link_eval;
use crate::mle::FitResult;
use crate::num::chi_square_sf;
use crate::panel::{FeDim, Margin, PanelDataset};

/// Estimated bias components for the coefficient correction.
#[derive(Debug, Clone)]
pub struct AbcTerms {
    pub b1: DVector<f64>,
    pub b2: DVector<f64>,
    /// Present only under the three-way layout.
    pub b3: Option<DVector<f64>>,
    pub w_hat: DMatrix<f64>,
    pub bandwidth: usize,
}

/// Panel dimension a jackknife split runs along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitDim {
    Exporter,
    Importer,
    Time,
}

impl SplitDim {
    fn margin(&self) -> Margin {
        match self {
            SplitDim::Exporter => Margin::Exporter,
            SplitDim::Importer => Margin::Importer,
            SplitDim::Time => Margin::Time,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SplitDim::Exporter => "I",
            SplitDim::Importer => "J",
            SplitDim::Time => "T",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    First,
    Second,
}

/// Label sets of the two half panels along one dimension.
///
/// Labels are sorted; the first half takes the first ⌊n/2⌋ levels and the
/// second half the last ⌊n/2⌋, so with an odd extent the middle level sits
/// in neither half.
#[derive(Debug, Clone)]
pub struct SplitScheme {
    pub dim: SplitDim,
    pub half_a: Vec<i64>,
    pub half_b: Vec<i64>,
}

pub fn split_scheme(ds: &PanelDataset, dim: SplitDim) -> SplitScheme {
    let labels = ds.labels(dim.margin());
    let half = labels.len() / 2;
    SplitScheme {
        dim,
        half_a: labels[..half].to_vec(),
        half_b: labels[labels.len() - half..].to_vec(),
    }
}

/// Restrict the dataset to one half of a split.
///
/// For time splits of a lagged dataset, rows whose predecessor period falls
/// outside the half are dropped as well, so each half panel is
/// self-contained.
pub fn split_half(ds: &PanelDataset, scheme: &SplitScheme, which: Half) -> Result<PanelDataset> {
    let labels = match which {
        Half::First => &scheme.half_a,
        Half::Second => &scheme.half_b,
    };
    let set: std::collections::HashSet<i64> = labels.iter().copied().collect();
    let keep: Vec<usize> = ds
        .rows()
        .iter()
        .enumerate()
        .filter(|(_, o)| {
            let label = match scheme.dim {
                SplitDim::Exporter => o.i,
                SplitDim::Importer => o.j,
                SplitDim::Time => o.t,
            };
            let mut ok = set.contains(&label);
            if ok && scheme.dim == SplitDim::Time && ds.lag_col().is_some() {
                ok = set.contains(&(o.t - 1));
            }
            ok
        })
        .map(|(r, _)| r)
        .collect();
    if keep.is_empty() {
        return Err(Error::Invalid(format!(
            "empty half panel along {}",
            scheme.dim.label()
        )));
    }
    Ok(ds.subset(&keep))
}

/// Split-panel jackknife recombination: (K+1)·full − Σ over split dimensions
/// of the mean of the two half-panel estimates.
///
/// `estimate` maps a half panel to the target vector (coefficients or
/// average partial effects); the half fits run in parallel.
pub fn spj_correct<F>(
    ds: &PanelDataset,
    dims: &[SplitDim],
    full: &[f64],
    estimate: F,
) -> Result<Vec<f64>>
where
    F: Fn(&PanelDataset) -> Result<Vec<f64>> + Sync,
{
    let halves = spj_half_estimates(ds, dims, estimate)?;
    Ok(spj_recombine(full, &halves))
}

/// (K+1)·full − Σ_d mean(halves), computed as full + Σ_d (full − mean) so
/// that identical half estimates return the full estimate bit-exactly.
pub(crate) fn spj_recombine(full: &[f64], halves: &[(SplitDim, Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let mut out = full.to_vec();
    for (_, a, b) in halves {
        for (k, o) in out.iter_mut().enumerate() {
            *o += full[k] - 0.5 * (a[k] + b[k]);
        }
    }
    out
}

/// Per-dimension half-panel estimates `(dim, first, second)`.
pub fn spj_half_estimates<F>(
    ds: &PanelDataset,
    dims: &[SplitDim],
    estimate: F,
) -> Result<Vec<(SplitDim, Vec<f64>, Vec<f64>)>>
where
    F: Fn(&PanelDataset) -> Result<Vec<f64>> + Sync,
{
    let jobs: Vec<(SplitDim, Half)> = dims
        .iter()
        .flat_map(|d| [(*d, Half::First), (*d, Half::Second)])
        .collect();
    let results: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|(dim, half)| {
            let scheme = split_scheme(ds, *dim);
            let part = split_half(ds, &scheme, *half)?;
            estimate(&part).map_err(|e| Error::HalfPanel {
                which: format!(
                    "{}/2 ({})",
                    dim.label(),
                    match half {
                        Half::First => "first",
                        Half::Second => "second",
                    }
                ),
                source: Box::new(e),
            })
        })
        .collect();
    let mut out = Vec::with_capacity(dims.len());
    let mut iter = results.into_iter();
    for dim in dims {
        let a = iter.next().unwrap()?;
        let b = iter.next().unwrap()?;
        out.push((*dim, a, b));
    }
    Ok(out)
}

/// Wald statistic for equality of two half-panel coefficient vectors.
#[derive(Debug, Clone)]
pub struct WaldResult {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
}

pub fn wald_homogeneity(
    beta_a: &[f64],
    cov_a: &DMatrix<f64>,
    beta_b: &[f64],
    cov_b: &DMatrix<f64>,
) -> Result<WaldResult> {
    let p = beta_a.len();
    assert_eq!(beta_b.len(), p);
    let d = DVector::from_iterator(p, beta_a.iter().zip(beta_b).map(|(a, b)| a - b));
    let pooled = cov_a + cov_b;
    let inv = pooled.try_inverse().ok_or_else(|| Error::Singular {
        context: "pooled half-panel covariance".into(),
    })?;
    let statistic = (d.transpose() * inv * &d)[(0, 0)];
    Ok(WaldResult {
        statistic,
        p_value: chi_square_sf(statistic, p),
        dof: p,
    })
}

struct CellSums {
    num: Vec<DVector<f64>>,
    den: Vec<f64>,
}

impl CellSums {
    fn new(levels: usize, p: usize) -> CellSums {
        CellSums {
            num: vec![DVector::zeros(p); levels],
            den: vec![0.0; levels],
        }
    }

    /// −(1/(2·levels)) Σ_cells num/den.
    fn reduce(&self) -> DVector<f64> {
        let p = self.num.first().map_or(0, |v| v.len());
        let mut acc = DVector::zeros(p);
        let mut cells = 0usize;
        for (num, &den) in self.num.iter().zip(&self.den) {
            if den > 0.0 {
                acc += num / den;
                cells += 1;
            }
        }
        acc * (-0.5 / cells.max(1) as f64)
    }
}

/// Shared accumulation for the 1/I and 1/J terms: cell sums of
/// H·∂²F·(M̃X) over ω within each level of `dim_idx`.
fn symmetric_term(
    fit: &FitResult,
    dim_idx: usize,
    h_d2f: &[f64],
) -> DVector<f64> {
    let ds = &fit.dataset;
    let p = ds.n_regressors();
    let fe = ds.fe();
    let mut sums = CellSums::new(fe.count(dim_idx), p);
    for (r, &code) in fe.codes(dim_idx).iter().enumerate() {
        let c = code as usize;
        let xr = &fit.mx[r * p..(r + 1) * p];
        for a in 0..p {
            sums.num[c][a] += h_d2f[r] * xr[a];
        }
        sums.den[c] += fit.omega[r];
    }
    sums.reduce()
}

/// Pair-level term with the bandwidth-truncated spectral part.
///
/// Each pair cell contributes
/// (Σ_t ω)⁻¹ [ Σ_t H·∂²F·(M̃X) + 2 Σ_{l≤L} c_l Σ_{t>l} ∂ℓ_{t−l} ω_t (M̃X)_t ],
/// where the per-lag factor is `T/(T−L)` for the coefficient correction.
fn pair_term(fit: &FitResult, h_d2f: &[f64], dl: &[f64], bandwidth: usize) -> DVector<f64> {
    let ds = &fit.dataset;
    let p = ds.n_regressors();
    let fe = ds.fe();
    let pair_idx = fe
        .position(FeDim::Pair)
        .expect("pair dimension required for the 1/T term");
    let t_extent = ds.extents().2 as f64;

    let mut sums = CellSums::new(fe.count(pair_idx), p);
    for (r, &code) in fe.codes(pair_idx).iter().enumerate() {
        let c = code as usize;
        let xr = &fit.mx[r * p..(r + 1) * p];
        for a in 0..p {
            sums.num[c][a] += h_d2f[r] * xr[a];
        }
        sums.den[c] += fit.omega[r];
    }

    if bandwidth > 0 {
        // Rows are sorted by (i, j, t), so each pair is a contiguous run;
        // lag lookups still go through the period label to respect gaps.
        let mut by_pair: HashMap<u32, Vec<usize>> = HashMap::new();
        for (r, &code) in fe.codes(pair_idx).iter().enumerate() {
            by_pair.entry(code).or_default().push(r);
        }
        let factor = t_extent / (t_extent - bandwidth as f64);
        for (&code, rows) in &by_pair {
            let c = code as usize;
            let t_of: HashMap<i64, usize> = rows.iter().map(|&r| (ds.rows()[r].t, r)).collect();
            for l in 1..=bandwidth {
                for &r in rows {
                    let t = ds.rows()[r].t;
                    if let Some(&r_lag) = t_of.get(&(t - l as i64)) {
                        let xr = &fit.mx[r * p..(r + 1) * p];
                        let scale = 2.0 * factor * dl[r_lag] * fit.omega[r];
                        for a in 0..p {
                            sums.num[c][a] += scale * xr[a];
                        }
                    }
                }
            }
        }
    }
    sums.reduce()
}

fn link_hd2f_dl(fit: &FitResult) -> (Vec<f64>, Vec<f64>) {
    let cols = link_eval(
        fit.link,
        &fit.eta,
        fit.dataset.y(),
        fit.controls.weight_mode,
    );
    let h_d2f: Vec<f64> = cols.h.iter().zip(&cols.d2f).map(|(h, d)| h * d).collect();
    (h_d2f, cols.dl)
}

/// Bias terms for the three-way layout.
pub fn abc_terms(fit: &FitResult, bandwidth: usize) -> Result<AbcTerms> {
    let fe = fit.dataset.fe();
    if !fe.is_three_way() {
        return Err(Error::Invalid(
            "three-way correction requires the {it, jt, ij} layout".into(),
        ));
    }
    let (h_d2f, dl) = link_hd2f_dl(fit);
    let jt = fe.position(FeDim::ImporterTime).unwrap();
    let it = fe.position(FeDim::ExporterTime).unwrap();
    Ok(AbcTerms {
        b1: symmetric_term(fit, jt, &h_d2f),
        b2: symmetric_term(fit, it, &h_d2f),
        b3: Some(pair_term(fit, &h_d2f, &dl, bandwidth)),
        w_hat: fit.w_hat.clone(),
        bandwidth,
    })
}

/// Bias terms for the two-way layout (no 1/T component).
pub fn abc_terms_twoway(fit: &FitResult) -> Result<AbcTerms> {
    let fe = fit.dataset.fe();
    if !fe.is_two_way() {
        return Err(Error::Invalid(
            "two-way correction requires the {it, jt} layout".into(),
        ));
    }
    let (h_d2f, _) = link_hd2f_dl(fit);
    let jt = fe.position(FeDim::ImporterTime).unwrap();
    let it = fe.position(FeDim::ExporterTime).unwrap();
    Ok(AbcTerms {
        b1: symmetric_term(fit, jt, &h_d2f),
        b2: symmetric_term(fit, it, &h_d2f),
        b3: None,
        w_hat: fit.w_hat.clone(),
        bandwidth: 0,
    })
}

/// Analytically corrected coefficients:
/// β̃ = β̂ − Ŵ⁻¹B̂₁/I − Ŵ⁻¹B̂₂/J − Ŵ⁻¹B̂₃/T.
pub fn abc_correct_beta(fit: &FitResult, terms: &AbcTerms) -> Result<Vec<f64>> {
    let (i, j, t) = fit.dataset.extents();
    let w_inv = terms
        .w_hat
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular {
            context: "coefficient information matrix".into(),
        })?;
    let mut bias = &w_inv * &terms.b1 / i as f64 + &w_inv * &terms.b2 / j as f64;
    if let Some(b3) = &terms.b3 {
        bias += &w_inv * b3 / t as f64;
    }
    Ok(fit
        .beta
        .iter()
        .zip(bias.iter())
        .map(|(b, c)| b - c)
        .collect())
}
