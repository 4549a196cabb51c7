//! Probit and logit models with high-dimensional two- and three-way fixed
//! effects on network panels (exporter × importer × time), estimated by
//! Newton-Raphson with pseudo-demeaning, together with analytical and
//! split-panel-jackknife corrections for the incidental parameter bias of
//! coefficients and average partial effects.
//!
//! The crate is organized around a few building blocks:
//!
//! - [`panel`]: the panel data model, link families, and lag construction;
//! - [`demean`]: weighted within transformations and the alternating
//!   projections that apply the residual projection without materializing
//!   dummy matrices;
//! - [`mle`]: the maximum likelihood estimator, separation screening, and
//!   fixed-effect recovery at a fixed coefficient vector;
//! - [`bias`]: analytical and split-panel-jackknife corrections for the
//!   structural coefficients, plus the Wald homogeneity test;
//! - [`ape`]: direct and long-run average partial effects, their analytical
//!   corrections, and covariance estimators;
//! - [`mc`]: simulation designs and a replication harness producing
//!   bias/coverage reports;
//! - [`neyman`]: a closed-form variance example used as an exact oracle for
//!   the bias structure.

pub mod ape;
pub mod bias;
pub mod demean;
pub mod error;
pub mod link;
pub mod mc;
pub mod mle;
pub mod neyman;
pub mod num;
pub mod panel;
pub mod rng;
#[cfg(test)]
pub(crate) mod testkit;

pub use ape::{
    ape_abc_correct, ape_abc_terms, ape_covariance, ape_direct, ape_longrun, ape_spj_correct,
    ApeAbcTerms, ApeSet, ApeTarget, CovVariant, Evaluation,
};
pub use bias::{
    abc_correct_beta, abc_terms, abc_terms_twoway, spj_correct, split_half, split_scheme,
    wald_homogeneity, AbcTerms, Half, SplitDim, SplitScheme, WaldResult,
};
pub use error::{Error, Result};
pub use link::{link_eval, LinkCols, LinkFamily, WeightMode};
pub use mc::{run_campaign, simulate, CampaignConfig, DgpKind, DgpSpec, EstimatorKind, McReport};
pub use mle::{
    beta_covariance, fit_mle, refit_fixed_effects_offset, screen_separation, FeValues,
    FitControls, FitResult, ScreenReport,
};
pub use neyman::{neyman_corrections, neyman_expected_bias, neyman_variance_fit, NeymanBias};
pub use panel::{
    build_dataset, DatasetOptions, FeDim, FeLayout, ObsIndex, PanelDataset, RawObs, RegressorKind,
};
