//! Panel data model for (exporter, importer, time) network panels.
//!
//! A [`PanelDataset`] owns the observation index, the binary outcome, the
//! regressor matrix (row-major), and a [`FeLayout`] mapping every row to a
//! dense level code in each active fixed-effect dimension. Datasets are
//! immutable after construction; all transformations (lagging, screening,
//! splitting) build new datasets.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Fixed-effect grouping dimensions.
///
/// `ExporterTime`/`ImporterTime`/`Pair` form the three-way layout;
/// `Exporter`/`Importer`/`Time` support the additive one-way-per-margin
/// layout used by legacy gravity specifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeDim {
    ExporterTime,
    ImporterTime,
    Pair,
    Exporter,
    Importer,
    Time,
}

impl FeDim {
    fn key(&self, obs: &ObsIndex) -> (i64, i64) {
        match self {
            FeDim::ExporterTime => (obs.i, obs.t),
            FeDim::ImporterTime => (obs.j, obs.t),
            FeDim::Pair => (obs.i, obs.j),
            FeDim::Exporter => (obs.i, i64::MIN),
            FeDim::Importer => (obs.j, i64::MIN),
            FeDim::Time => (obs.t, i64::MIN),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FeDim::ExporterTime => "it",
            FeDim::ImporterTime => "jt",
            FeDim::Pair => "ij",
            FeDim::Exporter => "i",
            FeDim::Importer => "j",
            FeDim::Time => "t",
        }
    }
}

impl fmt::Display for FeDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One observation's position in the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObsIndex {
    pub i: i64,
    pub j: i64,
    pub t: i64,
}

/// Regressor type, which selects the partial-effect formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressorKind {
    Continuous,
    Binary,
    /// Lagged outcome: always treated as binary.
    Lag,
}

/// Active fixed-effect dimensions with dense per-row level codes.
#[derive(Debug, Clone)]
pub struct FeLayout {
    dims: Vec<FeDim>,
    /// Per dim, per row: dense level code in `[0, count)`.
    codes: Vec<Vec<u32>>,
    counts: Vec<usize>,
}

impl FeLayout {
    fn build(dims: &[FeDim], rows: &[ObsIndex]) -> FeLayout {
        let mut codes = Vec::with_capacity(dims.len());
        let mut counts = Vec::with_capacity(dims.len());
        for dim in dims {
            let mut map: HashMap<(i64, i64), u32> = HashMap::new();
            let mut col = Vec::with_capacity(rows.len());
            for obs in rows {
                let next = map.len() as u32;
                let code = *map.entry(dim.key(obs)).or_insert(next);
                col.push(code);
            }
            counts.push(map.len());
            codes.push(col);
        }
        FeLayout {
            dims: dims.to_vec(),
            codes,
            counts,
        }
    }

    pub fn dims(&self) -> &[FeDim] {
        &self.dims
    }

    /// Dense level codes of `dim` (one per row).
    pub fn codes(&self, dim_idx: usize) -> &[u32] {
        &self.codes[dim_idx]
    }

    /// Number of levels of `dim`.
    pub fn count(&self, dim_idx: usize) -> usize {
        self.counts[dim_idx]
    }

    pub fn position(&self, dim: FeDim) -> Option<usize> {
        self.dims.iter().position(|d| *d == dim)
    }

    /// True for the {it, jt, ij} layout.
    pub fn is_three_way(&self) -> bool {
        self.dims.len() == 3
            && self.position(FeDim::ExporterTime).is_some()
            && self.position(FeDim::ImporterTime).is_some()
            && self.position(FeDim::Pair).is_some()
    }

    /// True for the {it, jt} layout.
    pub fn is_two_way(&self) -> bool {
        self.dims.len() == 2
            && self.position(FeDim::ExporterTime).is_some()
            && self.position(FeDim::ImporterTime).is_some()
    }
}

/// Raw input row for [`build_dataset`].
#[derive(Debug, Clone)]
pub struct RawObs {
    pub i: i64,
    pub j: i64,
    pub t: i64,
    pub y: f64,
    pub x: Vec<f64>,
}

/// Construction options for [`build_dataset`].
#[derive(Debug, Clone)]
pub struct DatasetOptions {
    /// Drop rows with `i == j`.
    pub no_self_flows: bool,
    /// Active fixed-effect dimensions, in sweep order.
    pub fe_dims: Vec<FeDim>,
    /// Regressor names; defaults to `x1..xp` when empty.
    pub x_names: Vec<String>,
    /// Explicit regressor kinds; detected from the data when `None`
    /// (binary iff the observed support is contained in {0, 1}).
    pub x_kinds: Option<Vec<RegressorKind>>,
}

impl DatasetOptions {
    pub fn new(fe_dims: Vec<FeDim>) -> Self {
        DatasetOptions {
            no_self_flows: false,
            fe_dims,
            x_names: Vec::new(),
            x_kinds: None,
        }
    }

    pub fn no_self_flows(mut self, yes: bool) -> Self {
        self.no_self_flows = yes;
        self
    }

    pub fn x_names(mut self, names: Vec<String>) -> Self {
        self.x_names = names;
        self
    }

    pub fn x_kinds(mut self, kinds: Vec<RegressorKind>) -> Self {
        self.x_kinds = Some(kinds);
        self
    }
}

/// Immutable panel dataset.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    rows: Vec<ObsIndex>,
    y: Vec<f64>,
    /// Row-major n × p regressor matrix.
    x: Vec<f64>,
    p: usize,
    x_names: Vec<String>,
    x_kinds: Vec<RegressorKind>,
    lag_col: Option<usize>,
    fe: FeLayout,
    balanced: bool,
}

impl PanelDataset {
    pub(crate) fn from_parts(
        rows: Vec<ObsIndex>,
        y: Vec<f64>,
        x: Vec<f64>,
        p: usize,
        x_names: Vec<String>,
        x_kinds: Vec<RegressorKind>,
        lag_col: Option<usize>,
        fe_dims: &[FeDim],
    ) -> PanelDataset {
        let fe = FeLayout::build(fe_dims, &rows);
        let balanced = is_balanced(&rows);
        PanelDataset {
            rows,
            y,
            x,
            p,
            x_names,
            x_kinds,
            lag_col,
            fe,
            balanced,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_regressors(&self) -> usize {
        self.p
    }

    pub fn rows(&self) -> &[ObsIndex] {
        &self.rows
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Row-major regressor matrix (n × p).
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_row(&self, r: usize) -> &[f64] {
        &self.x[r * self.p..(r + 1) * self.p]
    }

    /// Copy of regressor column `k`.
    pub fn x_col(&self, k: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.x[r * self.p + k]).collect()
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn x_kinds(&self) -> &[RegressorKind] {
        &self.x_kinds
    }

    pub fn lag_col(&self) -> Option<usize> {
        self.lag_col
    }

    pub fn fe(&self) -> &FeLayout {
        &self.fe
    }

    pub fn balanced(&self) -> bool {
        self.balanced
    }

    /// Distinct exporter / importer / period counts.
    pub fn extents(&self) -> (usize, usize, usize) {
        let mut is: Vec<i64> = self.rows.iter().map(|o| o.i).collect();
        let mut js: Vec<i64> = self.rows.iter().map(|o| o.j).collect();
        let mut ts: Vec<i64> = self.rows.iter().map(|o| o.t).collect();
        for v in [&mut is, &mut js, &mut ts] {
            v.sort_unstable();
            v.dedup();
        }
        (is.len(), js.len(), ts.len())
    }

    /// Sorted distinct labels along one margin.
    pub fn labels(&self, margin: Margin) -> Vec<i64> {
        let mut v: Vec<i64> = self
            .rows
            .iter()
            .map(|o| match margin {
                Margin::Exporter => o.i,
                Margin::Importer => o.j,
                Margin::Time => o.t,
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// New dataset restricted to the selected rows (fixed-effect codes are
    /// rebuilt dense).
    pub(crate) fn subset(&self, keep: &[usize]) -> PanelDataset {
        let rows: Vec<ObsIndex> = keep.iter().map(|&r| self.rows[r]).collect();
        let y: Vec<f64> = keep.iter().map(|&r| self.y[r]).collect();
        let mut x = Vec::with_capacity(keep.len() * self.p);
        for &r in keep {
            x.extend_from_slice(self.x_row(r));
        }
        PanelDataset::from_parts(
            rows,
            y,
            x,
            self.p,
            self.x_names.clone(),
            self.x_kinds.clone(),
            self.lag_col,
            &self.fe.dims().to_vec(),
        )
    }

    /// Map from (i, j, t) to row index.
    pub(crate) fn row_index(&self) -> HashMap<ObsIndex, usize> {
        self.rows
            .iter()
            .enumerate()
            .map(|(r, o)| (*o, r))
            .collect()
    }
}

/// Panel margins used for splitting and label queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Margin {
    Exporter,
    Importer,
    Time,
}

fn is_balanced(rows: &[ObsIndex]) -> bool {
    let mut pairs: Vec<(i64, i64)> = rows.iter().map(|o| (o.i, o.j)).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let mut ts: Vec<i64> = rows.iter().map(|o| o.t).collect();
    ts.sort_unstable();
    ts.dedup();
    pairs.len() * ts.len() == rows.len()
}

/// Validate, deduplicate, and assemble a dataset from raw rows.
///
/// Rows are sorted by (i, j, t); level codes follow first appearance in that
/// canonical order, so the result is independent of input permutation.
pub fn build_dataset(raw: &[RawObs], options: &DatasetOptions) -> Result<PanelDataset> {
    if raw.is_empty() {
        return Err(Error::Invalid("no input rows".into()));
    }
    if options.fe_dims.is_empty() {
        return Err(Error::Invalid("at least one fixed-effect dimension required".into()));
    }
    let p = raw[0].x.len();
    let x_names: Vec<String> = if options.x_names.is_empty() {
        (1..=p).map(|k| format!("x{k}")).collect()
    } else {
        if options.x_names.len() != p {
            return Err(Error::Invalid(format!(
                "{} regressor names for {} columns",
                options.x_names.len(),
                p
            )));
        }
        options.x_names.clone()
    };

    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by_key(|&r| (raw[r].i, raw[r].j, raw[r].t));

    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut x = Vec::with_capacity(raw.len() * p);
    let mut last: Option<ObsIndex> = None;
    for &r in &order {
        let obs = &raw[r];
        if obs.x.len() != p {
            return Err(Error::Invalid(format!(
                "row ({}, {}, {}) has {} regressors, expected {}",
                obs.i,
                obs.j,
                obs.t,
                obs.x.len(),
                p
            )));
        }
        if options.no_self_flows && obs.i == obs.j {
            continue;
        }
        let idx = ObsIndex {
            i: obs.i,
            j: obs.j,
            t: obs.t,
        };
        if last == Some(idx) {
            return Err(Error::DuplicateObs {
                i: obs.i,
                j: obs.j,
                t: obs.t,
            });
        }
        last = Some(idx);
        if obs.y != 0.0 && obs.y != 1.0 {
            return Err(Error::NonBinaryOutcome {
                i: obs.i,
                j: obs.j,
                t: obs.t,
                y: obs.y,
            });
        }
        for (k, v) in obs.x.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteRegressor {
                    name: x_names[k].clone(),
                    i: obs.i,
                    j: obs.j,
                    t: obs.t,
                });
            }
        }
        rows.push(idx);
        y.push(obs.y);
        x.extend_from_slice(&obs.x);
    }
    if rows.is_empty() {
        return Err(Error::Invalid("all rows excluded by construction".into()));
    }

    let x_kinds = match &options.x_kinds {
        Some(kinds) => {
            if kinds.len() != p {
                return Err(Error::Invalid(format!(
                    "{} regressor kinds for {} columns",
                    kinds.len(),
                    p
                )));
            }
            kinds.clone()
        }
        None => detect_kinds(&x, rows.len(), p),
    };

    Ok(PanelDataset::from_parts(
        rows,
        y,
        x,
        p,
        x_names,
        x_kinds,
        None,
        &options.fe_dims,
    ))
}

fn detect_kinds(x: &[f64], n: usize, p: usize) -> Vec<RegressorKind> {
    (0..p)
        .map(|k| {
            let binary = (0..n).all(|r| {
                let v = x[r * p + k];
                v == 0.0 || v == 1.0
            });
            if binary {
                RegressorKind::Binary
            } else {
                RegressorKind::Continuous
            }
        })
        .collect()
}

/// Prepend the lagged outcome as the first regressor column.
///
/// A row survives only if the same pair was observed in the immediately
/// preceding period; everything else is dropped, which reproduces the usual
/// sample-size reduction between static and dynamic specifications.
pub fn add_lag_column(ds: &PanelDataset) -> Result<PanelDataset> {
    let index = ds.row_index();
    let p = ds.p;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (r, obs) in ds.rows.iter().enumerate() {
        let prev = ObsIndex {
            i: obs.i,
            j: obs.j,
            t: obs.t - 1,
        };
        if let Some(&rp) = index.get(&prev) {
            rows.push(*obs);
            y.push(ds.y[r]);
            x.push(ds.y[rp]);
            x.extend_from_slice(ds.x_row(r));
        }
    }
    if rows.is_empty() {
        return Err(Error::NoLaggedRows);
    }
    let mut names = Vec::with_capacity(p + 1);
    names.push("y_lag".to_string());
    names.extend_from_slice(&ds.x_names);
    let mut kinds = Vec::with_capacity(p + 1);
    kinds.push(RegressorKind::Lag);
    kinds.extend_from_slice(&ds.x_kinds);
    Ok(PanelDataset::from_parts(
        rows,
        y,
        x,
        p + 1,
        names,
        kinds,
        Some(0),
        &ds.fe.dims().to_vec(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(i: i64, j: i64, t: i64, y: f64, x: &[f64]) -> RawObs {
        RawObs {
            i,
            j,
            t,
            y,
            x: x.to_vec(),
        }
    }

    fn three_way_dims() -> Vec<FeDim> {
        vec![FeDim::ExporterTime, FeDim::ImporterTime, FeDim::Pair]
    }

    #[test]
    fn self_flows_are_excluded_when_flagged() {
        let rows = vec![
            raw(1, 1, 1, 1.0, &[0.1]),
            raw(1, 2, 1, 0.0, &[0.2]),
            raw(2, 1, 1, 1.0, &[0.3]),
            raw(2, 2, 1, 0.0, &[0.4]),
        ];
        let ds = build_dataset(
            &rows,
            &DatasetOptions::new(three_way_dims()).no_self_flows(true),
        )
        .unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.rows()[0], ObsIndex { i: 1, j: 2, t: 1 });
        assert_eq!(ds.rows()[1], ObsIndex { i: 2, j: 1, t: 1 });
    }

    #[test]
    fn duplicate_rows_are_rejected_with_identification() {
        let rows = vec![raw(1, 2, 1, 1.0, &[0.0]), raw(1, 2, 1, 0.0, &[1.0])];
        let err = build_dataset(&rows, &DatasetOptions::new(three_way_dims())).unwrap_err();
        match err {
            Error::DuplicateObs { i: 1, j: 2, t: 1 } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_binary_outcome_rejected() {
        let rows = vec![raw(1, 2, 1, 0.5, &[0.0])];
        assert!(matches!(
            build_dataset(&rows, &DatasetOptions::new(three_way_dims())),
            Err(Error::NonBinaryOutcome { .. })
        ));
    }

    #[test]
    fn non_finite_regressor_rejected() {
        let rows = vec![raw(1, 2, 1, 0.0, &[f64::NAN])];
        assert!(matches!(
            build_dataset(&rows, &DatasetOptions::new(three_way_dims())),
            Err(Error::NonFiniteRegressor { .. })
        ));
    }

    #[test]
    fn level_counts_on_small_balanced_panel() {
        // 3 countries, 2 periods, no self flows: 6 directed pairs.
        let mut rows = Vec::new();
        for i in 1..=3 {
            for j in 1..=3 {
                for t in 1..=2 {
                    rows.push(raw(i, j, t, f64::from((i + j + t) % 2 == 0), &[0.5]));
                }
            }
        }
        let ds = build_dataset(
            &rows,
            &DatasetOptions::new(three_way_dims()).no_self_flows(true),
        )
        .unwrap();
        assert_eq!(ds.n_rows(), 12);
        let fe = ds.fe();
        assert_eq!(fe.count(fe.position(FeDim::ExporterTime).unwrap()), 6);
        assert_eq!(fe.count(fe.position(FeDim::ImporterTime).unwrap()), 6);
        assert_eq!(fe.count(fe.position(FeDim::Pair).unwrap()), 6);
        assert!(ds.balanced());
    }

    #[test]
    fn construction_is_order_insensitive() {
        let mut rows = Vec::new();
        for i in 1..=3 {
            for j in 1..=2 {
                for t in 1..=3 {
                    rows.push(raw(i, j + 10, t, f64::from(i == j), &[i as f64 * 0.1]));
                }
            }
        }
        let a = build_dataset(&rows, &DatasetOptions::new(three_way_dims())).unwrap();
        rows.reverse();
        let b = build_dataset(&rows, &DatasetOptions::new(three_way_dims())).unwrap();
        assert_eq!(a.rows(), b.rows());
        assert_eq!(a.y(), b.y());
        assert_eq!(a.x(), b.x());
        for d in 0..3 {
            assert_eq!(a.fe().count(d), b.fe().count(d));
            assert_eq!(a.fe().codes(d), b.fe().codes(d));
        }
    }

    #[test]
    fn lag_follows_the_outcome_path() {
        let rows = vec![
            raw(1, 2, 1, 0.0, &[0.1]),
            raw(1, 2, 2, 1.0, &[0.2]),
            raw(1, 2, 3, 1.0, &[0.3]),
        ];
        let ds = build_dataset(&rows, &DatasetOptions::new(vec![FeDim::Pair])).unwrap();
        let lagged = add_lag_column(&ds).unwrap();
        assert_eq!(lagged.n_rows(), 2);
        assert_eq!(lagged.rows()[0].t, 2);
        assert_eq!(lagged.x_row(0)[0], 0.0);
        assert_eq!(lagged.rows()[1].t, 3);
        assert_eq!(lagged.x_row(1)[0], 1.0);
        assert_eq!(lagged.lag_col(), Some(0));
        assert_eq!(lagged.x_kinds()[0], RegressorKind::Lag);
    }

    #[test]
    fn gap_in_periods_drops_both_rows() {
        let rows = vec![raw(1, 2, 1, 0.0, &[0.1]), raw(1, 2, 3, 1.0, &[0.3])];
        let ds = build_dataset(&rows, &DatasetOptions::new(vec![FeDim::Pair])).unwrap();
        assert!(matches!(add_lag_column(&ds), Err(Error::NoLaggedRows)));
    }

    #[test]
    fn lag_row_count_on_balanced_panel() {
        // N = 3 pairs? No: 3 exporters x 3 importers with self flows = 9 pairs
        // would be 27 rows; the stated case is 18 rows = 6 pairs x 3 periods.
        let mut rows = Vec::new();
        for i in 1..=3 {
            for j in 1..=3 {
                if i == j {
                    continue;
                }
                for t in 1..=3 {
                    rows.push(raw(i, j, t, f64::from((i + j + t) % 2 == 0), &[0.0]));
                }
            }
        }
        assert_eq!(rows.len(), 18);
        let ds = build_dataset(&rows, &DatasetOptions::new(three_way_dims())).unwrap();
        let lagged = add_lag_column(&ds).unwrap();
        assert_eq!(lagged.n_rows(), 12);
    }

    #[test]
    fn lagging_twice_drops_each_pairs_second_period() {
        let mut rows = Vec::new();
        for pair in 0..4 {
            for t in 1..=5 {
                rows.push(raw(pair, pair + 10, t, f64::from((pair + t) % 2 == 0), &[0.0]));
            }
        }
        let ds = build_dataset(&rows, &DatasetOptions::new(vec![FeDim::Pair])).unwrap();
        let once = add_lag_column(&ds).unwrap();
        let twice = add_lag_column(&once).unwrap();
        // 4 pairs lose exactly one more period each.
        assert_eq!(once.n_rows() - twice.n_rows(), 4);
    }

    #[test]
    fn binary_kind_detection() {
        let rows = vec![
            raw(1, 2, 1, 0.0, &[0.0, 0.3]),
            raw(1, 2, 2, 1.0, &[1.0, -0.7]),
        ];
        let ds = build_dataset(&rows, &DatasetOptions::new(vec![FeDim::Pair])).unwrap();
        assert_eq!(ds.x_kinds()[0], RegressorKind::Binary);
        assert_eq!(ds.x_kinds()[1], RegressorKind::Continuous);
    }
}
