//! Shared oracles for integration tests: a brute-force dense MLE over all
//! dummy variables and the explicit residual projection, both independent of
//! the pseudo-demeaning code paths they check.

use glmfe::link::{deviance, link_eval, LinkFamily, WeightMode};
use glmfe::mle::{fit_mle, screen_separation, FitControls};
use glmfe::panel::{add_lag_column, build_dataset, DatasetOptions, FeDim, PanelDataset, RawObs};
use glmfe::rng::{standard_normal, stream_rng, uniform_open01};
use nalgebra::{DMatrix, DVector};

/// Full design [X | D]: regressors followed by one dummy block per active
/// dimension, no levels dropped.
pub fn dense_design(ds: &PanelDataset) -> DMatrix<f64> {
    let n = ds.n_rows();
    let p = ds.n_regressors();
    let fe = ds.fe();
    let total: usize = p + (0..fe.dims().len()).map(|d| fe.count(d)).sum::<usize>();
    let mut z = DMatrix::zeros(n, total);
    for r in 0..n {
        for k in 0..p {
            z[(r, k)] = ds.x_row(r)[k];
        }
        let mut offset = p;
        for d in 0..fe.dims().len() {
            z[(r, offset + fe.codes(d)[r] as usize)] = 1.0;
            offset += fe.count(d);
        }
    }
    z
}

fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-12;
    svd.pseudo_inverse(eps).expect("pseudo-inverse")
}

/// Explicit residual projection I − D(D′ΩD)⁺D′Ω at the given weights.
pub fn dense_residual_projection(ds: &PanelDataset, omega: &[f64]) -> DMatrix<f64> {
    let n = ds.n_rows();
    let p = ds.n_regressors();
    let z = dense_design(ds);
    let d = z.columns(p, z.ncols() - p).into_owned();
    let om = DMatrix::from_diagonal(&DVector::from_column_slice(omega));
    let dtod = d.transpose() * &om * &d;
    let inv = pseudo_inverse(&dtod);
    DMatrix::identity(n, n) - &d * inv * d.transpose() * om
}

pub struct DenseFit {
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
    pub deviance: f64,
    /// β-block of the pseudo-inverse information.
    pub beta_cov: DMatrix<f64>,
    pub omega: Vec<f64>,
}

/// Brute-force MLE over (β, all fixed effects) by Fisher scoring with a
/// pseudo-inverse step and step halving.
pub fn dense_mle(ds: &PanelDataset, link: LinkFamily) -> DenseFit {
    let n = ds.n_rows();
    let p = ds.n_regressors();
    let y = ds.y();
    let z = dense_design(ds);
    let total = z.ncols();
    let mut theta = DVector::<f64>::zeros(total);
    let mut eta = vec![0.0; n];
    let mut dev = deviance(link, &eta, y);
    let mut fisher_inv = DMatrix::<f64>::zeros(total, total);
    for iter in 0..300 {
        let cols = link_eval(link, &eta, y, WeightMode::Table);
        let score = z.transpose() * DVector::from_column_slice(&cols.dl);
        let mut ztoz = DMatrix::<f64>::zeros(total, total);
        for r in 0..n {
            let w = cols.omega[r];
            for a in 0..total {
                let za = z[(r, a)];
                if za == 0.0 {
                    continue;
                }
                for b in a..total {
                    ztoz[(a, b)] += w * za * z[(r, b)];
                }
            }
        }
        for a in 0..total {
            for b in 0..a {
                ztoz[(a, b)] = ztoz[(b, a)];
            }
        }
        fisher_inv = pseudo_inverse(&ztoz);
        let step = &fisher_inv * score;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &theta + &step * scale;
            let eta_c: Vec<f64> = (0..n)
                .map(|r| {
                    let mut e = 0.0;
                    for a in 0..total {
                        e += z[(r, a)] * cand[a];
                    }
                    e
                })
                .collect();
            let dev_c = deviance(link, &eta_c, y);
            if dev_c <= dev * (1.0 + 1e-12) + 1e-12 {
                theta = cand;
                eta = eta_c;
                dev = dev_c;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        assert!(accepted, "dense oracle step rejected at iteration {iter}");
        let applied = step.amax() * scale;
        if applied < 1e-11 {
            break;
        }
    }
    let cols = link_eval(link, &eta, y, WeightMode::Table);
    DenseFit {
        beta: theta.as_slice()[..p].to_vec(),
        eta,
        deviance: dev,
        beta_cov: fisher_inv.view((0, 0), (p, p)).into_owned(),
        omega: cols.omega,
    }
}

pub fn three_way_dims() -> Vec<FeDim> {
    vec![FeDim::ExporterTime, FeDim::ImporterTime, FeDim::Pair]
}

pub fn two_way_dims() -> Vec<FeDim> {
    vec![FeDim::ExporterTime, FeDim::ImporterTime]
}

/// Random tiny panel with one continuous regressor (optionally also a binary
/// one), screened and verified to fit under both links. Dynamic panels carry
/// the lag in front.
pub fn tiny_panel_with(
    i_n: i64,
    j_n: i64,
    t_n: i64,
    dims: &[FeDim],
    dynamic: bool,
    binary_col: bool,
    seed: u64,
) -> PanelDataset {
    'seeds: for attempt in 0..2000 {
        let mut rng = stream_rng(seed.wrapping_add(attempt), 17);
        let t_start = if dynamic { 0 } else { 1 };
        let mut raws = Vec::new();
        for i in 1..=i_n {
            for j in 1..=j_n {
                if i == j {
                    continue;
                }
                for t in t_start..=t_n {
                    let lam = 0.2 * standard_normal(&mut rng);
                    let psi = 0.2 * standard_normal(&mut rng);
                    let mu = 0.2 * standard_normal(&mut rng);
                    let x1 = 0.7 * standard_normal(&mut rng) + 0.3 * (lam + psi);
                    let x2 = f64::from(uniform_open01(&mut rng) < 0.4);
                    let eta = 0.5 * x1 + 0.6 * if binary_col { x2 } else { 0.0 }
                        + lam
                        + psi
                        + mu;
                    let eps = standard_normal(&mut rng);
                    let mut x = vec![x1];
                    if binary_col {
                        x.push(x2);
                    }
                    raws.push(RawObs {
                        i,
                        j,
                        t,
                        y: f64::from(eta >= eps),
                        x,
                    });
                }
            }
        }
        let mut names = vec!["x1".to_string()];
        if binary_col {
            names.push("x2".to_string());
        }
        let options = DatasetOptions::new(dims.to_vec()).x_names(names);
        let base = match build_dataset(&raws, &options) {
            Ok(d) => d,
            Err(_) => continue,
        };
        let candidate = if dynamic {
            match add_lag_column(&base) {
                Ok(d) => d,
                Err(_) => continue,
            }
        } else {
            base
        };
        let Ok((screened, _)) = screen_separation(&candidate) else {
            continue;
        };
        // Whatever survives screening is a legitimate estimation sample; it
        // only needs to be nontrivial along every margin.
        let (ei, ej, et) = screened.extents();
        if screened.n_rows() < 16 || ei < 2 || ej < 2 || et < 2 {
            continue;
        }
        for (link, eta_cap) in [(LinkFamily::Logit, 6.0), (LinkFamily::Probit, 4.0)] {
            match fit_mle(&screened, link, &FitControls::default()) {
                // Interior solution with moderate predictors: keeps the
                // working weights bounded away from zero so the dense and
                // iterative routes agree to tight tolerances.
                Ok(fit)
                    if fit.deviance > 0.1 * fit.n as f64
                        && fit.eta.iter().all(|e| e.abs() < eta_cap) => {}
                _ => continue 'seeds,
            }
        }
        return screened;
    }
    panic!("no well-posed tiny panel for {i_n}x{j_n}x{t_n}");
}

pub fn tiny_panel(
    i_n: i64,
    j_n: i64,
    t_n: i64,
    dims: &[FeDim],
    dynamic: bool,
    seed: u64,
) -> PanelDataset {
    tiny_panel_with(i_n, j_n, t_n, dims, dynamic, false, seed)
}
