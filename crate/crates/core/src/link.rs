//! Probit and logit link families.
//!
//! [`link_eval`] produces every per-observation quantity the estimator and
//! the corrections consume: the response probability F, its first three
//! derivatives in the linear predictor, the working response ν, the ratio H,
//! the working weight ω, and the score ∂ℓ. Probabilities are clamped to
//! `[EPS_PROB, 1 - EPS_PROB]` before entering logs or ratios so that probit
//! tails cannot underflow into NaN.

use crate::num::{normal_cdf, normal_pdf, normal_quantile};

/// Probability clamp applied before logs and ratios.
pub const EPS_PROB: f64 = 1e-15;

/// Floor on the density to keep ν finite in extreme tails.
const EPS_DENSITY: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkFamily {
    Logit,
    Probit,
}

/// Choice of working weight ω.
///
/// `Table` uses the expected-information weights (probit ω = H·∂F, logit
/// ω = ∂F). `ScoreScale` sets ω = ∂F for both families. The two coincide for
/// logit; `Table` is the default throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightMode {
    #[default]
    Table,
    ScoreScale,
}

/// Per-observation link quantities, one entry per row.
#[derive(Debug, Clone, Default)]
pub struct LinkCols {
    /// Response probability F(η).
    pub f: Vec<f64>,
    /// ∂F/∂η.
    pub df: Vec<f64>,
    /// ∂²F/∂η².
    pub d2f: Vec<f64>,
    /// ∂³F/∂η³.
    pub d3f: Vec<f64>,
    /// Working response ν = (y − F)/∂F.
    pub nu: Vec<f64>,
    /// H ratio: 1 for logit, ∂F/(F(1−F)) for probit.
    pub h: Vec<f64>,
    /// Working weight ω.
    pub omega: Vec<f64>,
    /// Score ∂ℓ/∂η.
    pub dl: Vec<f64>,
}

impl LinkFamily {
    /// F(η), clamped away from 0 and 1.
    #[inline]
    pub fn cdf(&self, eta: f64) -> f64 {
        let f = match self {
            LinkFamily::Logit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            LinkFamily::Probit => normal_cdf(eta),
        };
        f.clamp(EPS_PROB, 1.0 - EPS_PROB)
    }

    /// ∂F/∂η, floored away from zero.
    #[inline]
    pub fn density(&self, eta: f64) -> f64 {
        let d = match self {
            LinkFamily::Logit => {
                let f = self.cdf(eta);
                f * (1.0 - f)
            }
            LinkFamily::Probit => normal_pdf(eta),
        };
        d.max(EPS_DENSITY)
    }

    /// ∂²F/∂η².
    #[inline]
    pub fn density_deriv(&self, eta: f64) -> f64 {
        match self {
            LinkFamily::Logit => {
                let f = self.cdf(eta);
                self.density(eta) * (1.0 - 2.0 * f)
            }
            LinkFamily::Probit => -eta * self.density(eta),
        }
    }

    /// ∂³F/∂η³.
    #[inline]
    pub fn density_deriv2(&self, eta: f64) -> f64 {
        match self {
            LinkFamily::Logit => {
                let f = self.cdf(eta);
                let d = self.density(eta);
                let c = 1.0 - 2.0 * f;
                d * (c * c - 2.0 * d)
            }
            LinkFamily::Probit => (eta * eta - 1.0) * self.density(eta),
        }
    }

    /// Inverse of F.
    #[inline]
    pub fn inverse(&self, p: f64) -> f64 {
        let p = p.clamp(EPS_PROB, 1.0 - EPS_PROB);
        match self {
            LinkFamily::Logit => (p / (1.0 - p)).ln(),
            LinkFamily::Probit => normal_quantile(p),
        }
    }

    /// H at η.
    #[inline]
    pub fn h(&self, eta: f64) -> f64 {
        match self {
            LinkFamily::Logit => 1.0,
            LinkFamily::Probit => {
                let f = self.cdf(eta);
                self.density(eta) / (f * (1.0 - f))
            }
        }
    }

    /// Working weight ω at η.
    #[inline]
    pub fn weight(&self, eta: f64, mode: WeightMode) -> f64 {
        match (self, mode) {
            (LinkFamily::Logit, _) | (LinkFamily::Probit, WeightMode::ScoreScale) => {
                self.density(eta)
            }
            (LinkFamily::Probit, WeightMode::Table) => self.h(eta) * self.density(eta),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LinkFamily::Logit => "logit",
            LinkFamily::Probit => "probit",
        }
    }
}

/// Evaluate all link quantities elementwise.
///
/// Panics if `eta` and `y` differ in length; `eta` must be finite.
pub fn link_eval(link: LinkFamily, eta: &[f64], y: &[f64], mode: WeightMode) -> LinkCols {
    assert_eq!(eta.len(), y.len());
    let n = eta.len();
    let mut cols = LinkCols {
        f: Vec::with_capacity(n),
        df: Vec::with_capacity(n),
        d2f: Vec::with_capacity(n),
        d3f: Vec::with_capacity(n),
        nu: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
        omega: Vec::with_capacity(n),
        dl: Vec::with_capacity(n),
    };
    for r in 0..n {
        let e = eta[r];
        debug_assert!(e.is_finite(), "non-finite linear predictor");
        let f = link.cdf(e);
        let df = link.density(e);
        let d2f = link.density_deriv(e);
        let d3f = link.density_deriv2(e);
        let nu = (y[r] - f) / df;
        let h = link.h(e);
        let omega = link.weight(e, mode);
        let dl = match link {
            LinkFamily::Logit => y[r] - f,
            LinkFamily::Probit => h * (y[r] - f),
        };
        cols.f.push(f);
        cols.df.push(df);
        cols.d2f.push(d2f);
        cols.d3f.push(d3f);
        cols.nu.push(nu);
        cols.h.push(h);
        cols.omega.push(omega);
        cols.dl.push(dl);
    }
    cols
}

/// Log-likelihood contribution of one observation.
#[inline]
pub fn log_lik(link: LinkFamily, eta: f64, y: f64) -> f64 {
    let f = link.cdf(eta);
    y * f.ln() + (1.0 - y) * (1.0 - f).ln()
}

/// Deviance −2·Σ ℓ over rows.
pub fn deviance(link: LinkFamily, eta: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for (e, yy) in eta.iter().zip(y) {
        s += log_lik(link, *e, *yy);
    }
    -2.0 * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logit_at_zero() {
        let cols = link_eval(LinkFamily::Logit, &[0.0], &[1.0], WeightMode::Table);
        assert_abs_diff_eq!(cols.f[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(cols.df[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(cols.d2f[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn probit_at_zero() {
        let cols = link_eval(LinkFamily::Probit, &[0.0], &[0.0], WeightMode::Table);
        assert_abs_diff_eq!(cols.f[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(cols.df[0], 0.3989422804014327, epsilon = 1e-12);
        assert_abs_diff_eq!(cols.d2f[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn probit_density_matches_finite_difference() {
        let link = LinkFamily::Probit;
        let h = 1e-6;
        let fd = (link.cdf(1.0 + h) - link.cdf(1.0 - h)) / (2.0 * h);
        assert_abs_diff_eq!(link.density(1.0), fd, epsilon = 1e-6);
    }

    #[test]
    fn second_derivative_identities_hold_exactly() {
        for eta in [-3.0, -1.0, 0.0, 0.7, 2.5] {
            let logit = LinkFamily::Logit;
            let lhs = logit.density_deriv(eta);
            let rhs = logit.density(eta) * (1.0 - 2.0 * logit.cdf(eta));
            assert_eq!(lhs, rhs);

            let probit = LinkFamily::Probit;
            assert_eq!(probit.density_deriv(eta), -eta * probit.density(eta));
        }
    }

    #[test]
    fn nu_times_density_recovers_residual() {
        for link in [LinkFamily::Logit, LinkFamily::Probit] {
            for (eta, y) in [(0.3, 1.0), (-2.0, 0.0), (1.5, 0.0)] {
                let cols = link_eval(link, &[eta], &[y], WeightMode::Table);
                assert_abs_diff_eq!(cols.nu[0] * cols.df[0], y - cols.f[0], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn weight_modes_agree_for_logit_only() {
        let eta = 0.8;
        let logit = LinkFamily::Logit;
        assert_eq!(
            logit.weight(eta, WeightMode::Table),
            logit.weight(eta, WeightMode::ScoreScale)
        );
        let probit = LinkFamily::Probit;
        assert!(
            (probit.weight(eta, WeightMode::Table) - probit.weight(eta, WeightMode::ScoreScale))
                .abs()
                > 1e-3
        );
    }

    #[test]
    fn inverse_round_trips() {
        for link in [LinkFamily::Logit, LinkFamily::Probit] {
            for p in [0.1, 0.25, 0.5, 0.9] {
                assert_abs_diff_eq!(link.cdf(link.inverse(p)), p, epsilon = 1e-10);
            }
        }
    }
}
