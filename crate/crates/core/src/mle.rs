//! Maximum likelihood estimation with pseudo-demeaning.
//!
//! The Newton-Raphson loop tracks only the coefficient vector and the linear
//! predictor. Each iteration projects the working response and the regressors
//! off the fixed-effect span with the alternating projections, solves the
//! weighted least-squares step
//! Δβ = ((M̃X)′Ω̂(M̃X))⁻¹ (M̃X)′Ω̂(M̃ν̂), and updates
//! η ← η + ν̂ − M̃ν̂ + M̃X·Δβ. Deviance is kept non-increasing by halving the
//! full direction when a step overshoots.

use nalgebra::{DMatrix, DVector};

use crate::demean::{map_project, map_project_columns, MapSettings};
use crate::error::{Error, Result};
use crate::link::{deviance, link_eval, LinkFamily, WeightMode};
use crate::num::collinear_column;
use crate::panel::{FeDim, PanelDataset};

/// Estimation controls.
#[derive(Debug, Clone, Copy)]
pub struct FitControls {
    /// Sup-norm tolerance on the coefficient step.
    pub tol_beta: f64,
    /// Relative deviance-change tolerance.
    pub tol_deviance: f64,
    /// Tolerance of the inner alternating projections.
    pub tol_inner: f64,
    pub max_newton: usize,
    pub step_halving_max: usize,
    pub max_sweeps: usize,
    pub weight_mode: WeightMode,
}

impl Default for FitControls {
    fn default() -> Self {
        FitControls {
            tol_beta: 1e-8,
            tol_deviance: 1e-10,
            tol_inner: 1e-9,
            max_newton: 100,
            step_halving_max: 10,
            max_sweeps: 100_000,
            weight_mode: WeightMode::Table,
        }
    }
}

impl FitControls {
    pub(crate) fn map_settings(&self) -> MapSettings {
        MapSettings {
            tol: self.tol_inner,
            max_sweeps: self.max_sweeps,
        }
    }
}

/// Rows and levels removed by separation screening.
#[derive(Debug, Clone, Default)]
pub struct ScreenReport {
    /// Indices into the input dataset of the retained rows.
    pub kept_rows: Vec<usize>,
    pub rows_dropped: usize,
    /// Per dimension: number of perfectly classified levels removed.
    pub levels_dropped: Vec<(FeDim, usize)>,
    pub passes: usize,
}

impl ScreenReport {
    pub fn total_levels_dropped(&self) -> usize {
        self.levels_dropped.iter().map(|(_, c)| c).sum()
    }
}

/// Recovered fixed-effect values for one dimension.
#[derive(Debug, Clone)]
pub struct FeValues {
    pub dim: FeDim,
    pub values: Vec<f64>,
}

/// Converged fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta: Vec<f64>,
    /// Per-dimension fixed-effect values; dimensions after the first are
    /// centered, with the removed means folded into the first.
    pub fe: Vec<FeValues>,
    /// Linear predictor per retained row.
    pub eta: Vec<f64>,
    /// Working weights at convergence.
    pub omega: Vec<f64>,
    /// (1/n)·Σ ω (M̃X)(M̃X)′ at convergence.
    pub w_hat: DMatrix<f64>,
    /// Ŵ⁻¹ / n.
    pub beta_cov: DMatrix<f64>,
    pub deviance: f64,
    pub n: usize,
    pub dropped: ScreenReport,
    pub link: LinkFamily,
    pub controls: FitControls,
    /// Screened dataset the fit refers to.
    pub dataset: PanelDataset,
    /// M̃X at convergence, row-major n × p.
    pub mx: Vec<f64>,
    pub iterations: usize,
}

impl FitResult {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.beta.len())
            .map(|k| self.beta_cov[(k, k)].max(0.0).sqrt())
            .collect()
    }
}

/// Iteratively remove fixed-effect levels whose outcomes are all zero or all
/// one, together with their rows, until none remain.
///
/// Such levels push the corresponding fixed effect to ±∞ and carry no
/// information about the coefficients.
pub fn screen_separation(ds: &PanelDataset) -> Result<(PanelDataset, ScreenReport)> {
    let n = ds.n_rows();
    let fe = ds.fe();
    let k = fe.dims().len();
    let mut keep = vec![true; n];
    let mut levels_dropped: Vec<(FeDim, usize)> = fe.dims().iter().map(|d| (*d, 0)).collect();
    let mut passes = 0;
    loop {
        passes += 1;
        let mut changed = false;
        for d in 0..k {
            let count = fe.count(d);
            let mut rows_in = vec![0usize; count];
            let mut ones = vec![0usize; count];
            for (r, &code) in fe.codes(d).iter().enumerate() {
                if keep[r] {
                    rows_in[code as usize] += 1;
                    if ds.y()[r] == 1.0 {
                        ones[code as usize] += 1;
                    }
                }
            }
            let mut degenerate = vec![false; count];
            let mut dim_drops = 0;
            for l in 0..count {
                if rows_in[l] > 0 && (ones[l] == 0 || ones[l] == rows_in[l]) {
                    degenerate[l] = true;
                    dim_drops += 1;
                }
            }
            if dim_drops > 0 {
                changed = true;
                levels_dropped[d].1 += dim_drops;
                for (r, &code) in fe.codes(d).iter().enumerate() {
                    if keep[r] && degenerate[code as usize] {
                        keep[r] = false;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let kept_rows: Vec<usize> = (0..n).filter(|&r| keep[r]).collect();
    if kept_rows.is_empty() {
        return Err(Error::NoIdentifiableSample);
    }
    let report = ScreenReport {
        rows_dropped: n - kept_rows.len(),
        kept_rows: kept_rows.clone(),
        levels_dropped,
        passes,
    };
    let screened = if report.rows_dropped == 0 {
        ds.clone()
    } else {
        ds.subset(&kept_rows)
    };
    Ok((screened, report))
}

// Null-model start: η⁰ must lie in the span of [X, D] because the η update
// only ever adds in-space directions; a constant is in the dummy span of
// every supported layout. A per-row start correlated with y would leave a
// spurious out-of-space component in η for good.
fn initial_eta(ds: &PanelDataset, link: LinkFamily) -> Vec<f64> {
    let mean = ds.y().iter().sum::<f64>() / ds.n_rows() as f64;
    let eta0 = link.inverse(mean).clamp(-3.0, 3.0);
    vec![eta0; ds.n_rows()]
}

/// Fit the model by Newton-Raphson with pseudo-demeaning.
///
/// Separation screening is applied internally; the returned fit carries the
/// screened dataset and the screening report.
pub fn fit_mle(ds: &PanelDataset, link: LinkFamily, controls: &FitControls) -> Result<FitResult> {
    let (ds, report) = screen_separation(ds)?;
    fit_mle_screened(ds, link, controls, report)
}

pub(crate) fn fit_mle_screened(
    ds: PanelDataset,
    link: LinkFamily,
    controls: &FitControls,
    report: ScreenReport,
) -> Result<FitResult> {
    let n = ds.n_rows();
    let p = ds.n_regressors();
    if p == 0 {
        return Err(Error::Invalid("at least one regressor required".into()));
    }
    let y = ds.y();
    let x = ds.x();
    let map = controls.map_settings();

    let mut beta = vec![0.0; p];
    let mut eta = initial_eta(&ds, link);
    let mut dev = deviance(link, &eta, y);
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;

    for iter in 1..=controls.max_newton {
        iterations = iter;
        let cols = link_eval(link, &eta, y, controls.weight_mode);
        let m_nu = map_project(&ds, &cols.nu, &cols.omega, map)?;
        let m_x = map_project_columns(&ds, x, p, &cols.omega, map)?;

        // Weighted normal equations on the projected regressors; the
        // unprojected column norms serve as the collinearity yardstick.
        let mut g = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DVector::<f64>::zeros(p);
        let mut x_scale = vec![0.0; p];
        for r in 0..n {
            let w = cols.omega[r];
            let xr = &m_x[r * p..(r + 1) * p];
            let x_raw = &x[r * p..(r + 1) * p];
            for a in 0..p {
                rhs[a] += w * xr[a] * m_nu[r];
                x_scale[a] += w * x_raw[a] * x_raw[a];
                for b in a..p {
                    g[(a, b)] += w * xr[a] * xr[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                g[(a, b)] = g[(b, a)];
            }
        }
        if let Some(col) = collinear_column(&g, 1e-10, &x_scale) {
            return Err(Error::Collinear {
                name: ds.x_names()[col].clone(),
            });
        }
        let chol = g.clone().cholesky().ok_or_else(|| Error::Singular {
            context: "projected normal equations".into(),
        })?;
        let dbeta = chol.solve(&rhs);

        // Full Newton direction on η: fixed-effect part plus coefficient part.
        let mut direction = vec![0.0; n];
        for r in 0..n {
            let xr = &m_x[r * p..(r + 1) * p];
            let mut dx = 0.0;
            for a in 0..p {
                dx += xr[a] * dbeta[a];
            }
            direction[r] = (cols.nu[r] - m_nu[r]) + dx;
        }

        if direction.iter().any(|d| !d.is_finite()) {
            return Err(Error::NoConvergence {
                iterations: iter,
                delta: f64::INFINITY,
                deviance: dev,
            });
        }

        let mut scale = 1.0;
        let mut eta_new: Vec<f64>;
        let mut dev_new: f64;
        let mut halvings = 0;
        loop {
            eta_new = eta
                .iter()
                .zip(&direction)
                .map(|(e, d)| e + scale * d)
                .collect();
            dev_new = deviance(link, &eta_new, y);
            if dev_new <= dev * (1.0 + 1e-12) + 1e-12 {
                break;
            }
            halvings += 1;
            if halvings > controls.step_halving_max {
                if dev_new - dev <= 1e-8 * dev.abs().max(1.0) {
                    break;
                }
                return Err(Error::NoConvergence {
                    iterations: iter,
                    delta: last_step,
                    deviance: dev,
                });
            }
            scale *= 0.5;
        }

        for (b, d) in beta.iter_mut().zip(dbeta.iter()) {
            *b += scale * d;
        }
        last_step = dbeta.iter().fold(0.0f64, |m, d| m.max((scale * d).abs()));
        let dev_change = (dev - dev_new).abs();
        eta = eta_new;
        let converged =
            last_step < controls.tol_beta && dev_change < controls.tol_deviance * dev_new.max(1.0);
        dev = dev_new;
        if converged {
            return finalize_fit(ds, link, controls, report, beta, iterations);
        }
    }
    Err(Error::NoConvergence {
        iterations,
        delta: last_step,
        deviance: dev,
    })
}

/// Build the reported fit at the converged β.
///
/// The fixed effects, η, weights, information matrix, and deviance are all
/// evaluated at the offset refit around β̂, so the reported deviance is
/// exactly −2Σℓ at (β, fe) and η decomposes into the reported effects.
fn finalize_fit(
    ds: PanelDataset,
    link: LinkFamily,
    controls: &FitControls,
    report: ScreenReport,
    beta: Vec<f64>,
    iterations: usize,
) -> Result<FitResult> {
    let n = ds.n_rows();
    let p = ds.n_regressors();
    let (fe, eta) = refit_fixed_effects_offset(&ds, link, &beta, controls.tol_beta.min(1e-8))?;
    let cols = link_eval(link, &eta, ds.y(), controls.weight_mode);
    let dev = deviance(link, &eta, ds.y());
    let m_x = map_project_columns(&ds, ds.x(), p, &cols.omega, controls.map_settings())?;
    let mut w_hat = DMatrix::<f64>::zeros(p, p);
    for r in 0..n {
        let w = cols.omega[r];
        let xr = &m_x[r * p..(r + 1) * p];
        for a in 0..p {
            for b in a..p {
                w_hat[(a, b)] += w * xr[a] * xr[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            w_hat[(a, b)] = w_hat[(b, a)];
        }
    }
    w_hat /= n as f64;
    let beta_cov = beta_covariance_from_w(&w_hat, n)?;
    Ok(FitResult {
        beta,
        fe,
        eta,
        omega: cols.omega,
        w_hat,
        beta_cov,
        deviance: dev,
        n,
        dropped: report,
        link,
        controls: *controls,
        dataset: ds,
        mx: m_x,
        iterations,
    })
}

/// Ŵ⁻¹/n with the sample size of the fit.
pub fn beta_covariance(fit: &FitResult) -> Result<DMatrix<f64>> {
    beta_covariance_from_w(&fit.w_hat, fit.n)
}

pub(crate) fn beta_covariance_from_w(w_hat: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let inv = w_hat.clone().try_inverse().ok_or_else(|| Error::Singular {
        context: "coefficient information matrix".into(),
    })?;
    Ok(inv / n as f64)
}

/// Maximize the likelihood over the fixed effects only, holding X·β as an
/// offset. Returns per-dimension level values and the implied η.
///
/// Blockwise Newton over dimensions: within a dimension the levels are
/// disjoint, so each sweep applies one exact diagonal Newton step per level.
pub fn refit_fixed_effects_offset(
    ds: &PanelDataset,
    link: LinkFamily,
    beta: &[f64],
    tol: f64,
) -> Result<(Vec<FeValues>, Vec<f64>)> {
    let n = ds.n_rows();
    let p = ds.n_regressors();
    assert_eq!(beta.len(), p);
    for b in beta {
        if !b.is_finite() {
            return Err(Error::Invalid("non-finite coefficient in offset refit".into()));
        }
    }
    let fe = ds.fe();
    let k = fe.dims().len();
    let y = ds.y();

    let mut offset = vec![0.0; n];
    for r in 0..n {
        let xr = ds.x_row(r);
        offset[r] = xr.iter().zip(beta).map(|(x, b)| x * b).sum();
    }
    let mut values: Vec<Vec<f64>> = (0..k).map(|d| vec![0.0; fe.count(d)]).collect();
    let mut eta = offset.clone();

    const MAX_SWEEPS: usize = 10_000;
    const STEP_CAP: f64 = 2.0;
    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut max_step = 0.0f64;
        for d in 0..k {
            let cols = link_eval(link, &eta, y, WeightMode::Table);
            let count = fe.count(d);
            let mut num = vec![0.0; count];
            let mut den = vec![0.0; count];
            for (r, &code) in fe.codes(d).iter().enumerate() {
                num[code as usize] += cols.dl[r];
                den[code as usize] += cols.omega[r];
            }
            let mut steps = vec![0.0; count];
            for l in 0..count {
                let s = num[l] / den[l];
                if !s.is_finite() {
                    // Weights underflowed: a level is running off to ±∞.
                    return Err(Error::NoConvergence {
                        iterations: 0,
                        delta: f64::INFINITY,
                        deviance: deviance(link, &eta, y),
                    });
                }
                let s = s.clamp(-STEP_CAP, STEP_CAP);
                steps[l] = s;
                values[d][l] += s;
                max_step = max_step.max(s.abs());
            }
            for (r, &code) in fe.codes(d).iter().enumerate() {
                eta[r] += steps[code as usize];
            }
        }
        if max_step < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: MAX_SWEEPS,
            delta: f64::NAN,
            deviance: deviance(link, &eta, y),
        });
    }

    // Reported normalization: dimensions after the first are centered, with
    // the removed means folded into the first dimension. η is unchanged.
    if k > 1 {
        let mut shift = 0.0;
        for values_d in values.iter_mut().skip(1) {
            let m = values_d.iter().sum::<f64>() / values_d.len() as f64;
            for v in values_d.iter_mut() {
                *v -= m;
            }
            shift += m;
        }
        for v in values[0].iter_mut() {
            *v += shift;
        }
    }

    let out = fe
        .dims()
        .iter()
        .zip(values)
        .map(|(dim, values)| FeValues { dim: *dim, values })
        .collect();
    Ok((out, eta))
}
