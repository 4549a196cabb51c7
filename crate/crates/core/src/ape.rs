//! Average partial effects, their corrections, and covariance estimators.
//!
//! A partial effect is evaluated per observation: the derivative of the
//! response probability for continuous regressors, the counterfactual
//! contrast F|₁ − F|₀ for binary ones (the row's own η shifted, fixed
//! effects held fixed). Long-run effects replace F with the stationary
//! probability F̃ = F|_{y₋=0} / (1 − Δʸ), which feeds the state dependence
//! through.
//!
//! All quantities can be evaluated at any parameter vector via
//! [`Evaluation`]; corrected effects are evaluated at bias-corrected
//! coefficients with the fixed effects re-optimized around them.

use nalgebra::DMatrix;

use crate::demean::{map_project_columns, MapSettings};
use crate::error::{Error, Result};
use crate::link::{link_eval, LinkCols, LinkFamily, WeightMode};
use crate::mle::{refit_fixed_effects_offset, FitResult};
use crate::panel::{FeDim, PanelDataset, RegressorKind};

/// Covariance estimator variant.
///
/// `General` keeps the plain sample form; `Independence` exploits that the
/// three effect sequences are mutually independent, which sharpens the
/// finite-sample behaviour and is the default in the simulation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovVariant {
    General,
    Independence,
}

/// Model quantities evaluated at one parameter vector.
pub struct Evaluation<'d> {
    pub ds: &'d PanelDataset,
    pub link: LinkFamily,
    pub weight_mode: WeightMode,
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
    pub cols: LinkCols,
    /// M̃X at these weights, row-major n × p.
    pub mx: Vec<f64>,
    map: MapSettings,
}

impl<'d> Evaluation<'d> {
    /// Evaluate at explicit (β, η).
    pub fn at_params(
        ds: &'d PanelDataset,
        link: LinkFamily,
        weight_mode: WeightMode,
        beta: Vec<f64>,
        eta: Vec<f64>,
        map: MapSettings,
    ) -> Result<Evaluation<'d>> {
        assert_eq!(eta.len(), ds.n_rows());
        assert_eq!(beta.len(), ds.n_regressors());
        let cols = link_eval(link, &eta, ds.y(), weight_mode);
        let mx = map_project_columns(ds, ds.x(), ds.n_regressors(), &cols.omega, map)?;
        Ok(Evaluation {
            ds,
            link,
            weight_mode,
            beta,
            eta,
            cols,
            mx,
            map,
        })
    }

    /// Evaluate at the converged fit.
    pub fn from_fit(fit: &'d FitResult) -> Evaluation<'d> {
        let cols = link_eval(fit.link, &fit.eta, fit.dataset.y(), fit.controls.weight_mode);
        Evaluation {
            ds: &fit.dataset,
            link: fit.link,
            weight_mode: fit.controls.weight_mode,
            beta: fit.beta.clone(),
            eta: fit.eta.clone(),
            cols,
            mx: fit.mx.clone(),
            map: fit.controls.map_settings(),
        }
    }

    /// Evaluate at a coefficient vector, re-optimizing the fixed effects
    /// around it (offset refit).
    pub fn with_refit(
        ds: &'d PanelDataset,
        link: LinkFamily,
        weight_mode: WeightMode,
        beta: Vec<f64>,
        map: MapSettings,
    ) -> Result<Evaluation<'d>> {
        let (_, eta) = refit_fixed_effects_offset(ds, link, &beta, 1e-10)?;
        Evaluation::at_params(ds, link, weight_mode, beta, eta, map)
    }

    /// Same parameters with the lag contribution removed from η
    /// (counterfactual y₋ = 0 on every row).
    pub fn with_lag_zeroed(&self) -> Result<Evaluation<'d>> {
        let lag = self
            .ds
            .lag_col()
            .ok_or_else(|| Error::Invalid("dataset has no lag column".into()))?;
        let b = self.beta[lag];
        let eta0: Vec<f64> = (0..self.ds.n_rows())
            .map(|r| self.eta[r] - b * self.ds.x_row(r)[lag])
            .collect();
        Evaluation::at_params(
            self.ds,
            self.link,
            self.weight_mode,
            self.beta.clone(),
            eta0,
            self.map,
        )
    }

    fn n(&self) -> usize {
        self.ds.n_rows()
    }

    /// (1/n)·Σ ω (M̃X)(M̃X)′ at these parameters.
    pub fn w_hat(&self) -> DMatrix<f64> {
        let (n, p) = (self.n(), self.ds.n_regressors());
        let mut w = DMatrix::zeros(p, p);
        for r in 0..n {
            let xr = &self.mx[r * p..(r + 1) * p];
            let wt = self.cols.omega[r];
            for a in 0..p {
                for b in a..p {
                    w[(a, b)] += wt * xr[a] * xr[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                w[(a, b)] = w[(b, a)];
            }
        }
        w / n as f64
    }
}

/// One partial-effect target.
#[derive(Debug, Clone)]
pub struct ApeTarget {
    pub col: usize,
    pub name: String,
    pub kind: RegressorKind,
    pub longrun: bool,
}

/// Partial-effect estimates with the per-row caches the corrections and the
/// covariance need.
pub struct ApeSet {
    pub targets: Vec<ApeTarget>,
    /// δ̂ per target.
    pub estimates: Vec<f64>,
    /// Per-row Δ, row-major n × m.
    pub delta: Vec<f64>,
    /// ∂Δ/∂η.
    pub ddelta: Vec<f64>,
    /// ∂²Δ/∂η².
    pub d2delta: Vec<f64>,
    /// Σ over rows of (∂Δ/∂β − (P̃X)·∂ηΔ′), p × m.
    gamma_base: DMatrix<f64>,
    pub cov: Option<DMatrix<f64>>,
    pub variant: Option<CovVariant>,
}

impl ApeSet {
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.cov.as_ref().map(|c| {
            (0..self.targets.len())
                .map(|k| c[(k, k)].max(0.0).sqrt())
                .collect()
        })
    }
}

/// Stationary-probability evaluation g(a) = F(a) / (1 − F(a+b) + F(a)) with
/// derivatives in `a` and in the state-dependence coefficient `b`.
struct Stationary {
    g: f64,
    g1: f64,
    g2: f64,
    g3: f64,
    dg_db: f64,
    dg1_db: f64,
    /// 1 − Δʸ, the long-run denominator.
    denom: f64,
}

fn stationary(link: LinkFamily, a: f64, b: f64) -> Stationary {
    let u = link.cdf(a);
    let u1 = link.density(a);
    let u2 = link.density_deriv(a);
    let u3 = link.density_deriv2(a);
    if b == 0.0 {
        // Exact limit: the two counterfactual states coincide and F̃ ≡ F.
        return Stationary {
            g: u,
            g1: u1,
            g2: u2,
            g3: u3,
            dg_db: u * u1,
            dg1_db: -u1 * u1 + u * u2 + 2.0 * u1 * u1,
            denom: 1.0,
        };
    }
    let v = link.cdf(a + b);
    let v1 = link.density(a + b);
    let v2 = link.density_deriv(a + b);
    let v3 = link.density_deriv2(a + b);
    let w = 1.0 - v + u;
    let w1 = u1 - v1;
    let w2 = u2 - v2;
    let w3 = u3 - v3;
    let g = u / w;
    let g1 = u1 / w - u * w1 / (w * w);
    let g2 = u2 / w - 2.0 * u1 * w1 / (w * w) + 2.0 * u * w1 * w1 / (w * w * w) - u * w2 / (w * w);
    let g3 = u3 / w - 3.0 * u2 * w1 / (w * w) + 6.0 * u1 * w1 * w1 / (w * w * w)
        - 3.0 * u1 * w2 / (w * w)
        - 6.0 * u * w1 * w1 * w1 / (w * w * w * w)
        + 6.0 * u * w1 * w2 / (w * w * w)
        - u * w3 / (w * w);
    // ∂w/∂b = −v1, ∂w1/∂b = −v2.
    let dg_db = u * v1 / (w * w);
    let dg1_db = (-u1 * v1 + u * v2) / (w * w) + 2.0 * (u1 * w - u * w1) * v1 / (w * w * w);
    Stationary {
        g,
        g1,
        g2,
        g3,
        dg_db,
        dg1_db,
        denom: w,
    }
}

struct TargetEval {
    delta: f64,
    ddelta: f64,
    d2delta: f64,
    /// ∂Δ/∂β holding the fixed effects fixed (η moves through x′β).
    dbeta: Vec<f64>,
}

fn eval_direct(
    link: LinkFamily,
    beta: &[f64],
    x: &[f64],
    eta: f64,
    k: usize,
    kind: RegressorKind,
) -> TargetEval {
    let p = beta.len();
    match kind {
        RegressorKind::Continuous => {
            let df = link.density(eta);
            let d2f = link.density_deriv(eta);
            let d3f = link.density_deriv2(eta);
            let mut dbeta = vec![0.0; p];
            for (m, xm) in x.iter().enumerate() {
                dbeta[m] = beta[k] * d2f * xm;
            }
            dbeta[k] += df;
            TargetEval {
                delta: beta[k] * df,
                ddelta: beta[k] * d2f,
                d2delta: beta[k] * d3f,
                dbeta,
            }
        }
        RegressorKind::Binary | RegressorKind::Lag => {
            let e1 = eta + beta[k] * (1.0 - x[k]);
            let e0 = eta - beta[k] * x[k];
            let (f1, f0) = (link.cdf(e1), link.cdf(e0));
            let (d1, d0) = (link.density(e1), link.density(e0));
            let mut dbeta = vec![0.0; p];
            for (m, xm) in x.iter().enumerate() {
                dbeta[m] = (d1 - d0) * xm;
            }
            // The k-th counterfactuals replace x_k by 1 and 0.
            dbeta[k] = d1;
            TargetEval {
                delta: f1 - f0,
                ddelta: d1 - d0,
                d2delta: link.density_deriv(e1) - link.density_deriv(e0),
                dbeta,
            }
        }
    }
}

fn eval_longrun(
    link: LinkFamily,
    beta: &[f64],
    x: &[f64],
    eta: f64,
    k: usize,
    kind: RegressorKind,
    lag: usize,
) -> (TargetEval, f64) {
    let p = beta.len();
    let b = beta[lag];
    let a = eta - b * x[lag];
    match kind {
        RegressorKind::Continuous => {
            let s = stationary(link, a, b);
            let mut dbeta = vec![0.0; p];
            for (m, xm) in x.iter().enumerate() {
                if m != lag {
                    dbeta[m] = beta[k] * s.g2 * xm;
                }
            }
            dbeta[k] += s.g1;
            dbeta[lag] = beta[k] * s.dg1_db;
            (
                TargetEval {
                    delta: beta[k] * s.g1,
                    ddelta: beta[k] * s.g2,
                    d2delta: beta[k] * s.g3,
                    dbeta,
                },
                s.denom,
            )
        }
        RegressorKind::Binary | RegressorKind::Lag => {
            let s1 = stationary(link, a + beta[k] * (1.0 - x[k]), b);
            let s0 = stationary(link, a - beta[k] * x[k], b);
            let mut dbeta = vec![0.0; p];
            for (m, xm) in x.iter().enumerate() {
                if m != lag && m != k {
                    dbeta[m] = (s1.g1 - s0.g1) * xm;
                }
            }
            dbeta[k] = s1.g1;
            dbeta[lag] = s1.dg_db - s0.dg_db;
            (
                TargetEval {
                    delta: s1.g - s0.g,
                    ddelta: s1.g1 - s0.g1,
                    d2delta: s1.g2 - s0.g2,
                    dbeta,
                },
                s1.denom.min(s0.denom),
            )
        }
    }
}

fn build_set(eval: &Evaluation, targets: Vec<ApeTarget>) -> Result<ApeSet> {
    let ds = eval.ds;
    let (n, p, m) = (ds.n_rows(), ds.n_regressors(), targets.len());
    let mut delta = vec![0.0; n * m];
    let mut ddelta = vec![0.0; n * m];
    let mut d2delta = vec![0.0; n * m];
    let mut gamma_base = DMatrix::zeros(p, m);
    let mut bad_denoms = 0usize;
    let mut first_bad: Option<usize> = None;
    const EPS_DENOM: f64 = 1e-8;

    for r in 0..n {
        let x = ds.x_row(r);
        let eta = eval.eta[r];
        for (c, tg) in targets.iter().enumerate() {
            let (te, denom) = if tg.longrun {
                let lag = ds.lag_col().expect("long-run targets need a lag column");
                eval_longrun(eval.link, &eval.beta, x, eta, tg.col, tg.kind, lag)
            } else {
                (eval_direct(eval.link, &eval.beta, x, eta, tg.col, tg.kind), 1.0)
            };
            if denom <= EPS_DENOM {
                bad_denoms += 1;
                if first_bad.is_none() {
                    first_bad = Some(r);
                }
            }
            delta[r * m + c] = te.delta;
            ddelta[r * m + c] = te.ddelta;
            d2delta[r * m + c] = te.d2delta;
            let mxr = &eval.mx[r * p..(r + 1) * p];
            for a in 0..p {
                let px = x[a] - mxr[a];
                gamma_base[(a, c)] += te.dbeta[a] - px * te.ddelta;
            }
        }
    }
    if bad_denoms > 0 {
        let o = ds.rows()[first_bad.unwrap()];
        return Err(Error::LongRunDenominator {
            count: bad_denoms,
            i: o.i,
            j: o.j,
            t: o.t,
        });
    }
    let estimates = (0..m)
        .map(|c| (0..n).map(|r| delta[r * m + c]).sum::<f64>() / n as f64)
        .collect();
    Ok(ApeSet {
        targets,
        estimates,
        delta,
        ddelta,
        d2delta,
        gamma_base,
        cov: None,
        variant: None,
    })
}

/// Direct average partial effects for every regressor.
pub fn ape_direct(eval: &Evaluation) -> Result<ApeSet> {
    let ds = eval.ds;
    let targets = (0..ds.n_regressors())
        .map(|k| ApeTarget {
            col: k,
            name: ds.x_names()[k].clone(),
            kind: ds.x_kinds()[k],
            longrun: false,
        })
        .collect();
    build_set(eval, targets)
}

/// Long-run average partial effects for every regressor except the lag.
pub fn ape_longrun(eval: &Evaluation) -> Result<ApeSet> {
    let ds = eval.ds;
    let lag = ds
        .lag_col()
        .ok_or_else(|| Error::Invalid("long-run effects require a lag column".into()))?;
    let targets = (0..ds.n_regressors())
        .filter(|&k| k != lag)
        .map(|k| ApeTarget {
            col: k,
            name: ds.x_names()[k].clone(),
            kind: ds.x_kinds()[k],
            longrun: true,
        })
        .collect();
    build_set(eval, targets)
}

fn cell_sums_signed(
    counts: usize,
    codes: &[u32],
    m: usize,
    numer: impl Fn(usize, usize) -> f64,
    weight: &[f64],
) -> Vec<f64> {
    // Σ_cells [Σ_rows numer] / [Σ_rows ω], scaled by 1/(2·cells).
    let mut num = vec![0.0; counts * m];
    let mut den = vec![0.0; counts];
    for (r, &code) in codes.iter().enumerate() {
        let cell = code as usize;
        for c in 0..m {
            num[cell * m + c] += numer(r, c);
        }
        den[cell] += weight[r];
    }
    let mut acc = vec![0.0; m];
    for cell in 0..counts {
        if den[cell] > 0.0 {
            for c in 0..m {
                acc[c] += num[cell * m + c] / den[cell];
            }
        }
    }
    for a in &mut acc {
        *a *= 0.5 / counts as f64;
    }
    acc
}

/// Estimated bias components of the partial-effect correction.
#[derive(Debug, Clone)]
pub struct ApeAbcTerms {
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    /// Present only under the three-way layout.
    pub b3: Option<Vec<f64>>,
    pub bandwidth: usize,
}

/// Analytically corrected partial effects δ̃ = δ̂ − B̂₁ᵟ/I − B̂₂ᵟ/J − B̂₃ᵟ/T.
///
/// All inputs must already be evaluated at bias-corrected coefficients with
/// re-optimized fixed effects.
pub fn ape_abc_correct(set: &ApeSet, eval: &Evaluation, bandwidth: usize) -> Result<Vec<f64>> {
    let terms = ape_abc_terms(set, eval, bandwidth)?;
    let (i_n, j_n, t_n) = eval.ds.extents();
    Ok(set
        .estimates
        .iter()
        .enumerate()
        .map(|(c, d)| {
            let mut out = d - terms.b1[c] / i_n as f64 - terms.b2[c] / j_n as f64;
            if let Some(b3) = &terms.b3 {
                out -= b3[c] / t_n as f64;
            }
            out
        })
        .collect())
}

/// Bias components for the partial effects.
///
/// The pair term carries the spectral part with per-lag factor T/(T−l)
/// applied to M̃Ψ; it is active only when a lag column is present and the
/// bandwidth is positive.
pub fn ape_abc_terms(set: &ApeSet, eval: &Evaluation, bandwidth: usize) -> Result<ApeAbcTerms> {
    let ds = eval.ds;
    let fe = ds.fe();
    let three_way = fe.is_three_way();
    if !three_way && !fe.is_two_way() {
        return Err(Error::Invalid(
            "partial-effect correction requires the {it, jt} or {it, jt, ij} layout".into(),
        ));
    }
    let (n, m) = (ds.n_rows(), set.targets.len());
    let t_n = ds.extents().2;

    // Ψ = ∂ηΔ / ω and its projection split.
    let mut psi = vec![0.0; n * m];
    for r in 0..n {
        for c in 0..m {
            psi[r * m + c] = set.ddelta[r * m + c] / eval.cols.omega[r];
        }
    }
    let mpsi = map_project_columns(ds, &psi, m, &eval.cols.omega, eval.map)?;
    let ppsi: Vec<f64> = psi
        .iter()
        .zip(&mpsi)
        .map(|(full, proj)| full - proj)
        .collect();

    let h_d2f: Vec<f64> = eval
        .cols
        .h
        .iter()
        .zip(&eval.cols.d2f)
        .map(|(h, d)| h * d)
        .collect();
    let core = |r: usize, c: usize| -h_d2f[r] * ppsi[r * m + c] + set.d2delta[r * m + c];

    let jt = fe.position(FeDim::ImporterTime).unwrap();
    let it = fe.position(FeDim::ExporterTime).unwrap();
    let b1 = cell_sums_signed(fe.count(jt), fe.codes(jt), m, core, &eval.cols.omega);
    let b2 = cell_sums_signed(fe.count(it), fe.codes(it), m, core, &eval.cols.omega);

    let mut b3_out = None;
    if three_way {
        let pair = fe.position(FeDim::Pair).unwrap();
        let counts = fe.count(pair);
        let codes = fe.codes(pair);
        let mut num = vec![0.0; counts * m];
        let mut den = vec![0.0; counts];
        for (r, &code) in codes.iter().enumerate() {
            let cell = code as usize;
            for c in 0..m {
                num[cell * m + c] += core(r, c);
            }
            den[cell] += eval.cols.omega[r];
        }
        if bandwidth > 0 && ds.lag_col().is_some() {
            let mut by_pair: std::collections::HashMap<u32, Vec<usize>> = Default::default();
            for (r, &code) in codes.iter().enumerate() {
                by_pair.entry(code).or_default().push(r);
            }
            let t_f = t_n as f64;
            for (&code, rows) in &by_pair {
                let cell = code as usize;
                let t_of: std::collections::HashMap<i64, usize> =
                    rows.iter().map(|&r| (ds.rows()[r].t, r)).collect();
                for l in 1..=bandwidth {
                    let factor = t_f / (t_f - l as f64);
                    for &r in rows {
                        if let Some(&r_lag) = t_of.get(&(ds.rows()[r].t - l as i64)) {
                            let scale = 2.0 * factor * eval.cols.dl[r_lag] * eval.cols.omega[r];
                            for c in 0..m {
                                num[cell * m + c] += scale * mpsi[r * m + c];
                            }
                        }
                    }
                }
            }
        }
        let mut b3 = vec![0.0; m];
        for cell in 0..counts {
            if den[cell] > 0.0 {
                for c in 0..m {
                    b3[c] += num[cell * m + c] / den[cell];
                }
            }
        }
        for b in &mut b3 {
            *b *= 0.5 / counts as f64;
        }
        b3_out = Some(b3);
    }
    Ok(ApeAbcTerms {
        b1,
        b2,
        b3: b3_out,
        bandwidth,
    })
}

/// Covariance estimator for the effects in `set`, stored on the set and
/// returned.
///
/// The general variant is (v₁ + v₂ + v₃)/n² with v₁ the outer product of the
/// summed centered effects, v₂ the influence outer products, and v₃ the
/// within-pair forward cross term (present only for three-way layouts with a
/// lag). The independence variant replaces v₁ with the structured sums over
/// cells sharing an effect.
pub fn ape_covariance(
    set: &mut ApeSet,
    eval: &Evaluation,
    variant: CovVariant,
) -> Result<DMatrix<f64>> {
    let ds = eval.ds;
    let (n, p, m) = (ds.n_rows(), ds.n_regressors(), set.targets.len());
    let fe = ds.fe();

    // Centered per-row effects.
    let mut dbar = vec![0.0; n * m];
    for r in 0..n {
        for c in 0..m {
            dbar[r * m + c] = set.delta[r * m + c] - set.estimates[c];
        }
    }

    // Per-row influence Γ of the parameter estimates.
    let w_hat = eval.w_hat();
    let w_inv = w_hat.try_inverse().ok_or_else(|| Error::Singular {
        context: "coefficient information matrix".into(),
    })?;
    // Ā′ Ŵ⁻¹, m × p.
    let a_winv = (set.gamma_base.transpose() / n as f64) * &w_inv;
    let mut psi = vec![0.0; n * m];
    for r in 0..n {
        for c in 0..m {
            psi[r * m + c] = set.ddelta[r * m + c] / eval.cols.omega[r];
        }
    }
    let mpsi = map_project_columns(ds, &psi, m, &eval.cols.omega, eval.map)?;
    let mut gamma = vec![0.0; n * m];
    for r in 0..n {
        let mxr = &eval.mx[r * p..(r + 1) * p];
        let score = eval.cols.omega[r] * eval.cols.nu[r];
        for c in 0..m {
            let mut v = 0.0;
            for a in 0..p {
                v += a_winv[(c, a)] * mxr[a];
            }
            let p_psi = psi[r * m + c] - mpsi[r * m + c];
            gamma[r * m + c] = v * score + p_psi * eval.cols.dl[r];
        }
    }

    let mut v = DMatrix::<f64>::zeros(m, m);

    match variant {
        CovVariant::General => {
            let mut total = vec![0.0; m];
            for r in 0..n {
                for c in 0..m {
                    total[c] += dbar[r * m + c];
                }
            }
            for a in 0..m {
                for b in 0..m {
                    v[(a, b)] += total[a] * total[b];
                }
            }
        }
        CovVariant::Independence => {
            let it = fe.position(FeDim::ExporterTime).ok_or_else(|| {
                Error::Invalid("independence variant requires exporter-time effects".into())
            })?;
            let jt = fe.position(FeDim::ImporterTime).ok_or_else(|| {
                Error::Invalid("independence variant requires importer-time effects".into())
            })?;
            // Full double sum within (i, t) cells.
            add_cell_outer(&mut v, fe.count(it), fe.codes(it), &dbar, m, true);
            // Off-diagonal double sum within (j, t) cells.
            add_cell_outer(&mut v, fe.count(jt), fe.codes(jt), &dbar, m, false);
            if let Some(pair) = fe.position(FeDim::Pair) {
                add_cell_outer(&mut v, fe.count(pair), fe.codes(pair), &dbar, m, false);
            }
        }
    }

    // v₂.
    for r in 0..n {
        for a in 0..m {
            for b in 0..m {
                v[(a, b)] += gamma[r * m + a] * gamma[r * m + b];
            }
        }
    }

    // v₃: forward cross term within pairs, active with a lag under pair
    // effects.
    if ds.lag_col().is_some() {
        if let Some(pair) = fe.position(FeDim::Pair) {
            let counts = fe.count(pair);
            let mut rows_by_pair: Vec<Vec<usize>> = vec![Vec::new(); counts];
            for (r, &code) in fe.codes(pair).iter().enumerate() {
                rows_by_pair[code as usize].push(r);
            }
            for rows in &rows_by_pair {
                // Rows are time-sorted within a pair; suffix sums of Γ.
                let mut suffix = vec![0.0; m];
                for &r in rows.iter().rev() {
                    for a in 0..m {
                        for b in 0..m {
                            v[(a, b)] += 2.0 * dbar[r * m + a] * suffix[b];
                        }
                    }
                    for (c, s) in suffix.iter_mut().enumerate() {
                        *s += gamma[r * m + c];
                    }
                }
            }
        }
    }

    v /= (n * n) as f64;
    // Symmetrize: the cross term is asymmetric in finite samples.
    let vt = v.transpose();
    v = (v + vt) * 0.5;
    set.cov = Some(v.clone());
    set.variant = Some(variant);
    Ok(v)
}

fn add_cell_outer(
    v: &mut DMatrix<f64>,
    counts: usize,
    codes: &[u32],
    dbar: &[f64],
    m: usize,
    include_diagonal: bool,
) {
    let mut sums = vec![0.0; counts * m];
    for (r, &code) in codes.iter().enumerate() {
        let cell = code as usize;
        for c in 0..m {
            sums[cell * m + c] += dbar[r * m + c];
        }
    }
    for cell in 0..counts {
        let s = &sums[cell * m..(cell + 1) * m];
        for a in 0..m {
            for b in 0..m {
                v[(a, b)] += s[a] * s[b];
            }
        }
    }
    if !include_diagonal {
        for (r, _) in codes.iter().enumerate() {
            for a in 0..m {
                for b in 0..m {
                    v[(a, b)] -= dbar[r * m + a] * dbar[r * m + b];
                }
            }
        }
    }
}

/// Split-panel jackknife for partial effects: identical recombination to the
/// coefficient case with an effect estimator in place of the fit.
pub fn ape_spj_correct<F>(
    ds: &PanelDataset,
    dims: &[crate::bias::SplitDim],
    full: &[f64],
    estimate: F,
) -> Result<Vec<f64>>
where
    F: Fn(&PanelDataset) -> Result<Vec<f64>> + Sync,
{
    crate::bias::spj_correct(ds, dims, full, estimate)
}
