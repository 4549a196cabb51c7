//! Simulation designs and the replication harness.
//!
//! Outcomes are generated from a probit threshold model with exporter-time,
//! importer-time, and (for three-way designs) pair effects, a persistent
//! AR(1) regressor that loads on the same effects, and optionally a lagged
//! outcome. Each replication runs on its own deterministic random stream,
//! so campaigns reproduce bit-identically at any thread count.

use rayon::prelude::*;

use crate::ape::{ape_abc_correct, ape_covariance, ape_direct, ape_longrun, CovVariant, Evaluation};
use crate::bias::{abc_correct_beta, abc_terms, abc_terms_twoway, spj_half_estimates, SplitDim};
use crate::error::{Error, Result};
use crate::link::LinkFamily;
use crate::mle::{beta_covariance_from_w, fit_mle, FitControls, FitResult};
use crate::panel::{FeDim, ObsIndex, PanelDataset, RegressorKind};
use crate::rng::{standard_normal, stream_rng};

/// Simulation design family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgpKind {
    Dynamic3way,
    Dynamic2way,
    Static3way,
}

impl DgpKind {
    pub fn label(&self) -> &'static str {
        match self {
            DgpKind::Dynamic3way => "dynamic3way",
            DgpKind::Dynamic2way => "dynamic2way",
            DgpKind::Static3way => "static3way",
        }
    }

    fn has_lag(&self) -> bool {
        !matches!(self, DgpKind::Static3way)
    }

    fn three_way(&self) -> bool {
        !matches!(self, DgpKind::Dynamic2way)
    }
}

/// Data-generating process parameters.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    pub kind: DgpKind,
    /// Countries per side (pairs include i = j).
    pub n: usize,
    /// Estimation periods; dynamic designs draw one extra initial period.
    pub t: usize,
    pub beta_y: f64,
    pub beta_z: f64,
    /// AR(1) coefficient of the persistent regressor.
    pub ar_coef: f64,
    /// Innovation variance of the persistent regressor.
    pub innovation_var: f64,
    pub seed: u64,
}

impl DgpSpec {
    pub fn new(kind: DgpKind, n: usize, t: usize, seed: u64) -> DgpSpec {
        DgpSpec {
            kind,
            n,
            t,
            beta_y: 0.5,
            beta_z: 1.0,
            ar_coef: 0.5,
            innovation_var: 0.5,
            seed,
        }
    }

    /// Effect standard deviation: variance 1/24 with three-way effects,
    /// 1/16 with two.
    pub fn fe_sd(&self) -> f64 {
        if self.kind.three_way() {
            (1.0 / 24.0f64).sqrt()
        } else {
            (1.0 / 16.0f64).sqrt()
        }
    }
}

/// True targets of one realized panel.
///
/// Partial effects are stored per row so that bias can be measured against
/// the estimator's own (screened) sample.
#[derive(Debug, Clone)]
pub struct TrueTargets {
    pub beta: Vec<f64>,
    /// Per-row direct effects, row-major n × p (column order matches the
    /// dataset's regressors).
    pub ape_direct_rows: Vec<f64>,
    /// Per-row long-run effects for the non-lag column (dynamic designs).
    pub ape_longrun_rows: Option<Vec<f64>>,
}

impl TrueTargets {
    /// Mean direct effect of column `k` over the selected rows.
    pub fn ape_direct_mean(&self, k: usize, p: usize, rows: &[usize]) -> f64 {
        rows.iter().map(|&r| self.ape_direct_rows[r * p + k]).sum::<f64>() / rows.len() as f64
    }

    pub fn ape_longrun_mean(&self, rows: &[usize]) -> Option<f64> {
        self.ape_longrun_rows
            .as_ref()
            .map(|lr| rows.iter().map(|&r| lr[r]).sum::<f64>() / rows.len() as f64)
    }
}

/// One simulated panel and its target values.
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub dataset: PanelDataset,
    pub truth: TrueTargets,
}

/// Generate one panel from the design; `rep` selects the random stream.
pub fn simulate(spec: &DgpSpec, rep: u64) -> SimulatedPanel {
    let mut rng = stream_rng(spec.seed, rep);
    let n = spec.n;
    let t_n = spec.t;
    let three_way = spec.kind.three_way();
    let dynamic = spec.kind.has_lag();
    let fe_sd = spec.fe_sd();
    let innov_sd = spec.innovation_var.sqrt();
    // Dynamic designs need period 0 effects for the initial condition.
    let t0 = usize::from(dynamic);
    let periods = t_n + t0;

    let mut lambda = vec![0.0; n * periods];
    for v in &mut lambda {
        *v = fe_sd * standard_normal(&mut rng);
    }
    let mut psi = vec![0.0; n * periods];
    for v in &mut psi {
        *v = fe_sd * standard_normal(&mut rng);
    }
    let mut mu = vec![0.0; n * n];
    if three_way {
        for v in &mut mu {
            *v = fe_sd * standard_normal(&mut rng);
        }
    }

    let p = if dynamic { 2 } else { 1 };
    let n_rows = n * n * t_n;
    let mut rows = Vec::with_capacity(n_rows);
    let mut y_out = Vec::with_capacity(n_rows);
    let mut x_out = Vec::with_capacity(n_rows * p);
    let mut eta_true = Vec::with_capacity(n_rows);
    let mut lag_true = Vec::with_capacity(n_rows);

    for i in 0..n {
        for j in 0..n {
            let mu_ij = if three_way { mu[i * n + j] } else { 0.0 };
            let mut z = standard_normal(&mut rng);
            let mut y_prev = if dynamic {
                // Initial condition uses period-0 effects and no lag term.
                let eta0 = spec.beta_z * z + psi[j * periods] + lambda[i * periods] + mu_ij;
                let eps0 = standard_normal(&mut rng);
                f64::from(eta0 >= eps0)
            } else {
                0.0
            };
            for t in 1..=t_n {
                let pt = t0 + t - 1;
                let (lam, ps) = (lambda[i * periods + pt], psi[j * periods + pt]);
                z = spec.ar_coef * z + ps + lam + mu_ij + innov_sd * standard_normal(&mut rng);
                let lag_term = if dynamic { spec.beta_y * y_prev } else { 0.0 };
                let eta = lag_term + spec.beta_z * z + ps + lam + mu_ij;
                let eps = standard_normal(&mut rng);
                let y = f64::from(eta >= eps);
                rows.push(ObsIndex {
                    i: i as i64 + 1,
                    j: j as i64 + 1,
                    t: t as i64,
                });
                if dynamic {
                    x_out.push(y_prev);
                }
                x_out.push(z);
                y_out.push(y);
                eta_true.push(eta);
                lag_true.push(y_prev);
                if dynamic {
                    y_prev = y;
                }
            }
        }
    }

    // Canonical (i, j, t) order: regroup the per-pair time series.
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.sort_by_key(|&r| rows[r]);
    let rows_s: Vec<ObsIndex> = order.iter().map(|&r| rows[r]).collect();
    let y_s: Vec<f64> = order.iter().map(|&r| y_out[r]).collect();
    let mut x_s = Vec::with_capacity(n_rows * p);
    for &r in &order {
        x_s.extend_from_slice(&x_out[r * p..(r + 1) * p]);
    }
    let eta_s: Vec<f64> = order.iter().map(|&r| eta_true[r]).collect();
    let lag_s: Vec<f64> = order.iter().map(|&r| lag_true[r]).collect();

    let dims: Vec<FeDim> = if three_way {
        vec![FeDim::ExporterTime, FeDim::ImporterTime, FeDim::Pair]
    } else {
        vec![FeDim::ExporterTime, FeDim::ImporterTime]
    };
    let (names, kinds, lag_col, beta_true) = if dynamic {
        (
            vec!["y_lag".to_string(), "z".to_string()],
            vec![RegressorKind::Lag, RegressorKind::Continuous],
            Some(0),
            vec![spec.beta_y, spec.beta_z],
        )
    } else {
        (
            vec!["z".to_string()],
            vec![RegressorKind::Continuous],
            None,
            vec![spec.beta_z],
        )
    };
    let dataset =
        PanelDataset::from_parts(rows_s, y_s, x_s, p, names, kinds, lag_col, &dims);

    let truth = true_targets(spec, &eta_s, &lag_s, &beta_true, dynamic);
    SimulatedPanel { dataset, truth }
}

/// Per-row true effects on the realized panel at the design parameters
/// (probit).
fn true_targets(
    spec: &DgpSpec,
    eta: &[f64],
    lag: &[f64],
    beta: &[f64],
    dynamic: bool,
) -> TrueTargets {
    let link = LinkFamily::Probit;
    let n = eta.len();
    if !dynamic {
        let rows = eta.iter().map(|&e| spec.beta_z * link.density(e)).collect();
        return TrueTargets {
            beta: beta.to_vec(),
            ape_direct_rows: rows,
            ape_longrun_rows: None,
        };
    }
    let b = spec.beta_y;
    let mut direct = Vec::with_capacity(n * 2);
    let mut longrun = Vec::with_capacity(n);
    for (&e, &l) in eta.iter().zip(lag) {
        let a = e - b * l;
        direct.push(link.cdf(a + b) - link.cdf(a));
        direct.push(spec.beta_z * link.density(e));
        // d/dz of F(a)/(1 − F(a+b) + F(a)).
        let (u, u1) = (link.cdf(a), link.density(a));
        let (v, v1) = (link.cdf(a + b), link.density(a + b));
        let w = 1.0 - v + u;
        let w1 = u1 - v1;
        longrun.push(spec.beta_z * (u1 / w - u * w1 / (w * w)));
    }
    TrueTargets {
        beta: beta.to_vec(),
        ape_direct_rows: direct,
        ape_longrun_rows: Some(longrun),
    }
}

/// Estimators a campaign can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Mle,
    Abc { bandwidth: usize },
    Spj,
}

impl EstimatorKind {
    pub fn label(&self) -> String {
        match self {
            EstimatorKind::Mle => "MLE".into(),
            EstimatorKind::Abc { bandwidth } => format!("ABC ({bandwidth})"),
            EstimatorKind::Spj => "SPJ".into(),
        }
    }
}

/// Campaign controls.
#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub estimators: Vec<EstimatorKind>,
    pub replications: usize,
    pub link: LinkFamily,
    pub controls: FitControls,
    pub cov_variant: CovVariant,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            estimators: vec![
                EstimatorKind::Mle,
                EstimatorKind::Abc { bandwidth: 1 },
                EstimatorKind::Spj,
            ],
            replications: 200,
            link: LinkFamily::Probit,
            controls: FitControls::default(),
            cov_variant: CovVariant::Independence,
        }
    }
}

/// What a cell of the report measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Coefficient,
    ApeDirect,
    ApeLongRun,
}

impl TargetKind {
    pub fn label(&self) -> &'static str {
        match self {
            TargetKind::Coefficient => "coef",
            TargetKind::ApeDirect => "ape",
            TargetKind::ApeLongRun => "ape-lr",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TargetId {
    pub kind: TargetKind,
    pub name: String,
}

/// Aggregated statistics for one estimator × target.
#[derive(Debug, Clone)]
pub struct McCell {
    pub estimator: EstimatorKind,
    pub target: TargetId,
    /// 100·(mean estimate − mean truth)/mean truth.
    pub bias_pct: f64,
    /// 100·SD(estimate)/mean truth.
    pub sd_pct: f64,
    /// Bias over mean standard error.
    pub bias_se: f64,
    /// Mean standard error over SD(estimate).
    pub se_sd: f64,
    /// Share of nominal 95% intervals covering the truth.
    pub coverage: f64,
    pub replications: usize,
}

/// Campaign report.
#[derive(Debug, Clone)]
pub struct McReport {
    pub spec: DgpSpec,
    pub cells: Vec<McCell>,
    pub replications: usize,
    pub failures: Vec<(usize, String)>,
    /// Minimum eigenvalue of the effect covariance relative to its trace,
    /// over all replications (diagnostic for positive semidefiniteness).
    pub min_cov_eigen_ratio: f64,
}

impl McReport {
    pub fn cell(&self, estimator: EstimatorKind, kind: TargetKind, name: &str) -> Option<&McCell> {
        self.cells.iter().find(|c| {
            c.estimator == estimator && c.target.kind == kind && c.target.name == name
        })
    }
}

struct RepOutcome {
    /// estimates[e][k], se[e][k] for targets k.
    estimates: Vec<Vec<f64>>,
    ses: Vec<Vec<f64>>,
    truths: Vec<f64>,
    min_eigen_ratio: f64,
}

fn target_list(spec: &DgpSpec, ds: &PanelDataset) -> Vec<TargetId> {
    let mut out = Vec::new();
    for name in ds.x_names() {
        out.push(TargetId {
            kind: TargetKind::Coefficient,
            name: name.clone(),
        });
    }
    for name in ds.x_names() {
        out.push(TargetId {
            kind: TargetKind::ApeDirect,
            name: name.clone(),
        });
    }
    if spec.kind.has_lag() {
        for (k, name) in ds.x_names().iter().enumerate() {
            if Some(k) != ds.lag_col() {
                out.push(TargetId {
                    kind: TargetKind::ApeLongRun,
                    name: name.clone(),
                });
            }
        }
    }
    out
}

/// Stack the true targets, averaging effects over the estimation rows.
fn truth_vector(truth: &TrueTargets, p: usize, kept_rows: &[usize]) -> Vec<f64> {
    let mut v = truth.beta.clone();
    for k in 0..p {
        v.push(truth.ape_direct_mean(k, p, kept_rows));
    }
    if let Some(lr) = truth.ape_longrun_mean(kept_rows) {
        v.push(lr);
    }
    v
}

/// Coefficients, direct effects, and (dynamic) long-run effects stacked into
/// one vector, with standard errors; used per estimator and per half panel.
///
/// `zero_row_scale` is the retained fraction of the pre-screening sample:
/// rows removed by separation screening carry their limiting zero partial
/// effect, so effect estimates (and their standard errors) shrink by the
/// retained fraction when averaged over the full sample.
fn stack_estimates(
    fit: &FitResult,
    eval: &Evaluation,
    dynamic: bool,
    cov_variant: CovVariant,
    corrected_beta: Option<&[f64]>,
    abc_bandwidth: Option<usize>,
    zero_row_scale: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let beta = corrected_beta.map(|b| b.to_vec()).unwrap_or_else(|| eval.beta.clone());
    let w_hat = eval.w_hat();
    let beta_cov = beta_covariance_from_w(&w_hat, fit.n)?;
    let mut est = beta.clone();
    let mut se: Vec<f64> = (0..beta.len())
        .map(|k| beta_cov[(k, k)].max(0.0).sqrt())
        .collect();

    let mut direct = ape_direct(eval)?;
    let direct_est = match abc_bandwidth {
        Some(l) => ape_abc_correct(&direct, eval, l)?,
        None => direct.estimates.clone(),
    };
    let cov = ape_covariance(&mut direct, eval, cov_variant)?;
    for (k, d) in direct_est.iter().enumerate() {
        est.push(d * zero_row_scale);
        se.push(cov[(k, k)].max(0.0).sqrt() * zero_row_scale);
    }

    if dynamic {
        let mut lr = ape_longrun(eval)?;
        let lr_est = match abc_bandwidth {
            Some(l) => ape_abc_correct(&lr, eval, l)?,
            None => lr.estimates.clone(),
        };
        let lr_cov = ape_covariance(&mut lr, eval, cov_variant)?;
        for (k, d) in lr_est.iter().enumerate() {
            est.push(d * zero_row_scale);
            se.push(lr_cov[(k, k)].max(0.0).sqrt() * zero_row_scale);
        }
    }
    Ok((est, se))
}

fn min_eigen_ratio(cov: &nalgebra::DMatrix<f64>) -> f64 {
    let trace = cov.trace().max(1e-300);
    cov.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &e| m.min(e / trace))
}

fn run_replication(spec: &DgpSpec, cfg: &CampaignConfig, rep: usize) -> Result<RepOutcome> {
    let sim = simulate(spec, rep as u64);
    let dynamic = spec.kind.has_lag();
    let three_way = spec.kind.three_way();

    let fit = fit_mle(&sim.dataset, cfg.link, &cfg.controls)?;
    // Bias is measured against the truth on the estimator's own sample.
    let truths = truth_vector(
        &sim.truth,
        sim.dataset.n_regressors(),
        &fit.dropped.kept_rows,
    );
    let eval = Evaluation::from_fit(&fit);

    // Track covariance definiteness on the MLE direct-effect covariance.
    let mut probe = ape_direct(&eval)?;
    let probe_cov = ape_covariance(&mut probe, &eval, cfg.cov_variant)?;
    let min_eigen = min_eigen_ratio(&probe_cov);

    let mut estimates = Vec::with_capacity(cfg.estimators.len());
    let mut ses = Vec::with_capacity(cfg.estimators.len());
    let mut mle_stack: Option<(Vec<f64>, Vec<f64>)> = None;

    for estimator in &cfg.estimators {
        match estimator {
            EstimatorKind::Mle => {
                let (est, se) = stack_estimates(&fit, &eval, dynamic, cfg.cov_variant, None, None)?;
                mle_stack = Some((est.clone(), se.clone()));
                estimates.push(est);
                ses.push(se);
            }
            EstimatorKind::Abc { bandwidth } => {
                let terms = if three_way {
                    abc_terms(&fit, *bandwidth)?
                } else {
                    abc_terms_twoway(&fit)?
                };
                let beta_c = abc_correct_beta(&fit, &terms)?;
                let eval_c = Evaluation::with_refit(
                    &fit.dataset,
                    cfg.link,
                    cfg.controls.weight_mode,
                    beta_c.clone(),
                    cfg.controls.map_settings(),
                )?;
                let (est, se) = stack_estimates(
                    &fit,
                    &eval_c,
                    dynamic,
                    cfg.cov_variant,
                    Some(&beta_c),
                    Some(*bandwidth),
                )?;
                estimates.push(est);
                ses.push(se);
            }
            EstimatorKind::Spj => {
                let dims: &[SplitDim] = if three_way {
                    &[SplitDim::Exporter, SplitDim::Importer, SplitDim::Time]
                } else {
                    &[SplitDim::Exporter, SplitDim::Importer]
                };
                let (full, full_se) = match &mle_stack {
                    Some(s) => s.clone(),
                    None => {
                        let s = stack_estimates(&fit, &eval, dynamic, cfg.cov_variant, None, None)?;
                        s
                    }
                };
                let link = cfg.link;
                let controls = cfg.controls;
                let halves = spj_half_estimates(&sim.dataset, dims, |half| {
                    let hfit = fit_mle(half, link, &controls)?;
                    let heval = Evaluation::from_fit(&hfit);
                    let mut est = hfit.beta.clone();
                    let d = ape_direct(&heval)?;
                    est.extend_from_slice(&d.estimates);
                    if dynamic {
                        let lr = ape_longrun(&heval)?;
                        est.extend_from_slice(&lr.estimates);
                    }
                    Ok(est)
                })?;
                let est = crate::bias::spj_recombine(&full, &halves);
                estimates.push(est);
                ses.push(full_se);
            }
        }
    }
    Ok(RepOutcome {
        estimates,
        ses,
        truths,
        min_eigen_ratio: min_eigen,
    })
}

/// Run the campaign; replication failures are recorded and excluded.
pub fn run_campaign(spec: &DgpSpec, cfg: &CampaignConfig) -> Result<McReport> {
    if cfg.replications == 0 {
        return Err(Error::Invalid("at least one replication required".into()));
    }
    // Target names come from a cheap probe simulation.
    let probe = simulate(spec, 0);
    let targets = target_list(spec, &probe.dataset);
    drop(probe);

    let outcomes: Vec<(usize, Result<RepOutcome>)> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| (rep, run_replication(spec, cfg, rep)))
        .collect();

    let mut failures = Vec::new();
    let mut ok = Vec::new();
    let mut min_eigen = f64::INFINITY;
    for (rep, res) in outcomes {
        match res {
            Ok(o) => {
                min_eigen = min_eigen.min(o.min_eigen_ratio);
                ok.push(o);
            }
            Err(e) => failures.push((rep, e.to_string())),
        }
    }
    if ok.is_empty() {
        return Err(Error::Invalid("every replication failed".into()));
    }

    let mut cells = Vec::new();
    for (e_idx, estimator) in cfg.estimators.iter().enumerate() {
        for (t_idx, target) in targets.iter().enumerate() {
            let ests: Vec<f64> = ok.iter().map(|o| o.estimates[e_idx][t_idx]).collect();
            let ses: Vec<f64> = ok.iter().map(|o| o.ses[e_idx][t_idx]).collect();
            let truths: Vec<f64> = ok.iter().map(|o| o.truths[t_idx]).collect();
            let r = ests.len() as f64;
            let mean_est = ests.iter().sum::<f64>() / r;
            let mean_truth = truths.iter().sum::<f64>() / r;
            let mean_se = ses.iter().sum::<f64>() / r;
            let sd = if ests.len() > 1 {
                let var = ests
                    .iter()
                    .map(|e| (e - mean_est) * (e - mean_est))
                    .sum::<f64>()
                    / (r - 1.0);
                var.sqrt()
            } else {
                f64::NAN
            };
            let bias = mean_est - mean_truth;
            let covered = ests
                .iter()
                .zip(&ses)
                .zip(&truths)
                .filter(|((e, s), t)| (*e - **t).abs() <= 1.959963984540054 * **s)
                .count();
            cells.push(McCell {
                estimator: *estimator,
                target: target.clone(),
                bias_pct: 100.0 * bias / mean_truth,
                sd_pct: 100.0 * sd / mean_truth,
                bias_se: bias / mean_se,
                se_sd: mean_se / sd,
                coverage: covered as f64 / r,
                replications: ests.len(),
            });
        }
    }
    Ok(McReport {
        spec: spec.clone(),
        cells,
        replications: cfg.replications,
        failures,
        min_cov_eigen_ratio: min_eigen,
    })
}
