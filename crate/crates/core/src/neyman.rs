//! Closed-form variance example with grouped effects.
//!
//! Normal data with additive exporter-time, importer-time, and pair means
//! admit an exact expected value for the within-residual variance estimator,
//! E[β̂]/β⁰ = (I−1)(J−1)(T−1)/(IJT), which makes the bias structure and both
//! corrections checkable without any simulation noise. The two-way case
//! drops every term that involves T.

use crate::error::{Error, Result};

/// Error-component layout of the variance example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeymanLayout {
    TwoWay,
    ThreeWay,
}

/// Exact relative biases (E[estimator]/β⁰ − 1).
#[derive(Debug, Clone, Copy)]
pub struct NeymanBias {
    pub mle: f64,
    pub abc: f64,
    pub spj: f64,
}

/// Closed-form relative biases of the uncorrected, analytically corrected,
/// and split-panel-jackknife variance estimators.
pub fn neyman_expected_bias(layout: NeymanLayout, i: usize, j: usize, t: usize) -> NeymanBias {
    let (i, j, t) = (i as f64, j as f64, t as f64);
    match layout {
        NeymanLayout::ThreeWay => {
            let mle_factor = (i - 1.0) * (j - 1.0) * (t - 1.0) / (i * j * t);
            NeymanBias {
                mle: mle_factor - 1.0,
                abc: mle_factor * (1.0 + 1.0 / i + 1.0 / j + 1.0 / t) - 1.0,
                spj: -1.0 / (i * t) - 1.0 / (j * t) - 1.0 / (i * j) + 2.0 / (i * j * t),
            }
        }
        NeymanLayout::TwoWay => {
            let mle_factor = (i - 1.0) * (j - 1.0) / (i * j);
            NeymanBias {
                mle: mle_factor - 1.0,
                abc: mle_factor * (1.0 + 1.0 / i + 1.0 / j) - 1.0,
                spj: -1.0 / (i * j),
            }
        }
    }
}

/// Analytically corrected point estimate: β̂·(1 + 1/I + 1/J [+ 1/T]).
pub fn neyman_corrections(
    beta_hat: f64,
    layout: NeymanLayout,
    i: usize,
    j: usize,
    t: usize,
) -> f64 {
    match layout {
        NeymanLayout::ThreeWay => {
            beta_hat * (1.0 + 1.0 / i as f64 + 1.0 / j as f64 + 1.0 / t as f64)
        }
        NeymanLayout::TwoWay => beta_hat * (1.0 + 1.0 / i as f64 + 1.0 / j as f64),
    }
}

/// Uncorrected variance estimate from a balanced I × J × T array of normal
/// outcomes: the mean squared within-transformed value.
///
/// `data[(i*J + j)*T + t]` holds observation (i, j, t). The three-way
/// transformation removes the eight nested means
/// z − z̄_ij· − z̄_·jt − z̄_i·t + z̄_··t + z̄_·j· + z̄_i·· − z̄_···;
/// the two-way version uses z − z̄_·jt − z̄_i·t + z̄_··t.
pub fn neyman_variance_fit(
    data: &[f64],
    layout: NeymanLayout,
    i_n: usize,
    j_n: usize,
    t_n: usize,
) -> Result<f64> {
    if data.len() != i_n * j_n * t_n {
        return Err(Error::Invalid(format!(
            "balanced panel required: {} values for {}x{}x{}",
            data.len(),
            i_n,
            j_n,
            t_n
        )));
    }
    let idx = |i: usize, j: usize, t: usize| (i * j_n + j) * t_n + t;
    let (inf, jnf, tnf) = (i_n as f64, j_n as f64, t_n as f64);

    let mut m_ij = vec![0.0; i_n * j_n];
    let mut m_jt = vec![0.0; j_n * t_n];
    let mut m_it = vec![0.0; i_n * t_n];
    let mut m_t = vec![0.0; t_n];
    let mut m_j = vec![0.0; j_n];
    let mut m_i = vec![0.0; i_n];
    let mut m_all = 0.0;
    for i in 0..i_n {
        for j in 0..j_n {
            for t in 0..t_n {
                let z = data[idx(i, j, t)];
                m_ij[i * j_n + j] += z;
                m_jt[j * t_n + t] += z;
                m_it[i * t_n + t] += z;
                m_t[t] += z;
                m_j[j] += z;
                m_i[i] += z;
                m_all += z;
            }
        }
    }
    for v in &mut m_ij {
        *v /= tnf;
    }
    for v in &mut m_jt {
        *v /= inf;
    }
    for v in &mut m_it {
        *v /= jnf;
    }
    for v in &mut m_t {
        *v /= inf * jnf;
    }
    for v in &mut m_j {
        *v /= inf * tnf;
    }
    for v in &mut m_i {
        *v /= jnf * tnf;
    }
    m_all /= inf * jnf * tnf;

    let mut ss = 0.0;
    for i in 0..i_n {
        for j in 0..j_n {
            for t in 0..t_n {
                let z = data[idx(i, j, t)];
                let resid = match layout {
                    NeymanLayout::ThreeWay => {
                        z - m_ij[i * j_n + j] - m_jt[j * t_n + t] - m_it[i * t_n + t]
                            + m_t[t]
                            + m_j[j]
                            + m_i[i]
                            - m_all
                    }
                    NeymanLayout::TwoWay => z - m_jt[j * t_n + t] - m_it[i * t_n + t] + m_t[t],
                };
                ss += resid * resid;
            }
        }
    }
    Ok(ss / (inf * jnf * tnf))
}
