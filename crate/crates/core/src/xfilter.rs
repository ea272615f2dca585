//! Run-level crossfilter: AND-combined interval and category filters over
//! parameter and metric dimensions, plus brushed histograms.
//!
//! Tables are immutable and columnar. Queries take the row's filters as
//! arguments, so one table can serve any number of independent rows.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::metrics::{RunRecord, RunSummary};
use crate::par::{self, Parallelism};
use crate::params::ParamValue;
use crate::ticks;
use crate::{Error, Result};

pub const DEFAULT_BINS: usize = 20;
const SCAN_CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionKind {
    Numeric,
    Integer,
    Categorical,
}

#[derive(Debug, Clone)]
enum Column {
    /// NaN marks a run without a value.
    Numeric(Vec<f64>),
    /// Codes index `categories`; `u32::MAX` marks a missing value.
    Categorical { categories: Vec<String>, codes: Vec<u32> },
}

#[derive(Debug, Clone)]
pub struct Dimension {
    pub name: String,
    pub kind: DimensionKind,
    column: Column,
}

/// Summary of a dimension for clients choosing filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionInfo {
    pub name: String,
    pub kind: DimensionKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    /// Closed interval; `lo > hi` matches nothing.
    Range([f64; 2]),
    OneOf(Vec<String>),
}

/// One analysis row: its filters are ANDed and affect only this row.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RowGroup {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_id: Option<String>,
    #[serde(default)]
    pub filters: BTreeMap<String, Predicate>,
}

impl RowGroup {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, dim: &str, p: Predicate) -> Self {
        self.filters.insert(dim.to_string(), p);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub dimension: String,
    pub kind: DimensionKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    pub full_counts: Vec<u64>,
    pub filtered_counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingRun {
    pub run_index: u32,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Table {
    runs: Vec<u32>,
    seeds: Vec<Vec<u64>>,
    dims: Vec<Dimension>,
    mode: Parallelism,
}

/// Per-run row input. Parameters keep their wire type; metrics are reals.
struct RowIn<'a> {
    run_index: u32,
    seeds: &'a [u64],
    params: &'a BTreeMap<String, ParamValue>,
    metrics: &'a BTreeMap<String, f64>,
}

pub fn load_table(summaries: &[RunSummary]) -> Result<Table> {
    build(
        summaries
            .iter()
            .map(|s| RowIn { run_index: s.run_index, seeds: &s.seeds, params: &s.assignment, metrics: &s.metrics })
            .collect(),
    )
}

pub fn load_records(records: &[RunRecord]) -> Result<Table> {
    build(
        records
            .iter()
            .map(|r| RowIn { run_index: r.run_index, seeds: &r.seeds, params: &r.params, metrics: &r.metrics })
            .collect(),
    )
}

fn build(mut rows: Vec<RowIn<'_>>) -> Result<Table> {
    rows.sort_by_key(|r| r.run_index);
    if let Some(w) = rows.windows(2).find(|w| w[0].run_index == w[1].run_index) {
        return Err(Error::DuplicateRun(w[0].run_index));
    }
    let n = rows.len();
    // Parameter kinds: any text makes a dimension categorical, any real makes it numeric.
    let mut param_kinds: BTreeMap<&str, DimensionKind> = BTreeMap::new();
    for r in &rows {
        for (k, v) in r.params {
            let this = match v {
                ParamValue::Int(_) => DimensionKind::Integer,
                ParamValue::Num(_) => DimensionKind::Numeric,
                ParamValue::Text(_) => DimensionKind::Categorical,
            };
            let e = param_kinds.entry(k).or_insert(this);
            *e = match (*e, this) {
                (DimensionKind::Categorical, _) | (_, DimensionKind::Categorical) => DimensionKind::Categorical,
                (DimensionKind::Numeric, _) | (_, DimensionKind::Numeric) => DimensionKind::Numeric,
                _ => DimensionKind::Integer,
            };
        }
    }
    let metric_names: BTreeSet<&str> = rows.iter().flat_map(|r| r.metrics.keys().map(String::as_str)).collect();

    let mut dims = Vec::new();
    for (name, kind) in param_kinds {
        let column = if kind == DimensionKind::Categorical {
            let cats: BTreeSet<String> = rows.iter().filter_map(|r| r.params.get(name)).map(|v| v.to_string()).collect();
            let categories: Vec<String> = cats.into_iter().collect();
            let codes = rows
                .iter()
                .map(|r| match r.params.get(name) {
                    Some(v) => categories.binary_search(&v.to_string()).expect("collected above") as u32,
                    None => u32::MAX,
                })
                .collect();
            Column::Categorical { categories, codes }
        } else {
            Column::Numeric(rows.iter().map(|r| r.params.get(name).and_then(ParamValue::as_f64).unwrap_or(f64::NAN)).collect())
        };
        dims.push(Dimension { name: name.to_string(), kind, column });
    }
    for name in metric_names {
        if dims.iter().any(|d| d.name == name) {
            continue;
        }
        let col = rows.iter().map(|r| r.metrics.get(name).copied().unwrap_or(f64::NAN)).collect();
        dims.push(Dimension { name: name.to_string(), kind: DimensionKind::Numeric, column: Column::Numeric(col) });
    }
    debug_assert!(dims.iter().all(|d| match &d.column {
        Column::Numeric(v) => v.len() == n,
        Column::Categorical { codes, .. } => codes.len() == n,
    }));
    Ok(Table {
        runs: rows.iter().map(|r| r.run_index).collect(),
        seeds: rows.iter().map(|r| r.seeds.to_vec()).collect(),
        dims,
        mode: Parallelism::Auto,
    })
}

enum Compiled<'a> {
    Range(&'a [f64], f64, f64),
    Set(&'a [u32], Vec<bool>),
    Values(&'a [f64], Vec<f64>),
}

impl Compiled<'_> {
    #[inline]
    fn test(&self, i: usize) -> bool {
        match self {
            Compiled::Range(col, lo, hi) => {
                let v = col[i];
                v >= *lo && v <= *hi
            }
            Compiled::Set(codes, allowed) => allowed.get(codes[i] as usize).copied().unwrap_or(false),
            Compiled::Values(col, wanted) => wanted.contains(&col[i]),
        }
    }
}

impl Table {
    pub fn with_parallelism(mut self, mode: Parallelism) -> Self {
        self.mode = mode;
        self
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn run_indices(&self) -> &[u32] {
        &self.runs
    }

    pub fn dimension(&self, name: &str) -> Result<&Dimension> {
        self.dims.iter().find(|d| d.name == name).ok_or_else(|| Error::UnknownDimension(name.to_string()))
    }

    pub fn dimension_names(&self) -> Vec<&str> {
        self.dims.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn dimensions(&self) -> Vec<DimensionInfo> {
        self.dims
            .iter()
            .map(|d| match &d.column {
                Column::Numeric(v) => DimensionInfo {
                    name: d.name.clone(),
                    kind: d.kind,
                    extent: extent(v).map(|(a, b)| [a, b]),
                    categories: None,
                },
                Column::Categorical { categories, .. } => DimensionInfo {
                    name: d.name.clone(),
                    kind: d.kind,
                    extent: None,
                    categories: Some(categories.clone()),
                },
            })
            .collect()
    }

    /// Numeric value of run at table position `pos`.
    pub fn numeric(&self, dim: &str, pos: usize) -> Result<Option<f64>> {
        match &self.dimension(dim)?.column {
            Column::Numeric(v) => Ok(Some(v[pos]).filter(|x| !x.is_nan())),
            Column::Categorical { .. } => Ok(None),
        }
    }

    fn compile<'a>(&'a self, row: &'a RowGroup, skip: Option<&str>) -> Result<Vec<Compiled<'a>>> {
        let mut out = Vec::new();
        for (name, pred) in &row.filters {
            let dim = self.dimension(name)?;
            if Some(name.as_str()) == skip {
                continue;
            }
            out.push(match (&dim.column, pred) {
                (Column::Numeric(col), Predicate::Range([lo, hi])) => Compiled::Range(col, *lo, *hi),
                (Column::Categorical { categories, codes }, Predicate::OneOf(vals)) => {
                    Compiled::Set(codes, categories.iter().map(|c| vals.contains(c)).collect())
                }
                (Column::Numeric(col), Predicate::OneOf(vals)) => {
                    // Exact-value selection, e.g. integer parameters picked from a list.
                    Compiled::Values(col, vals.iter().filter_map(|s| s.parse().ok()).collect())
                }
                (Column::Categorical { .. }, Predicate::Range(_)) => {
                    return Err(Error::Validation(vec![format!("dimension {name}: range filter on a categorical dimension")]));
                }
            });
        }
        Ok(out)
    }

    fn mask(&self, row: &RowGroup, skip: Option<&str>) -> Result<Vec<bool>> {
        let preds = self.compile(row, skip)?;
        let n = self.len();
        let chunks = n.div_ceil(SCAN_CHUNK);
        let parts = par::map_range(chunks, self.mode, |c| {
            let range = c * SCAN_CHUNK..((c + 1) * SCAN_CHUNK).min(n);
            range.map(|i| preds.iter().all(|p| p.test(i))).collect::<Vec<bool>>()
        });
        Ok(parts.concat())
    }

    /// Run indices passing every predicate of `row`, ascending.
    pub fn apply_filters(&self, row: &RowGroup) -> Result<Vec<u32>> {
        let m = self.mask(row, None)?;
        Ok(self.runs.iter().zip(m).filter(|(_, k)| *k).map(|(r, _)| *r).collect())
    }

    pub fn list_matching_runs(&self, row: &RowGroup) -> Result<Vec<MatchingRun>> {
        let m = self.mask(row, None)?;
        Ok((0..self.len())
            .filter(|&i| m[i])
            .map(|i| MatchingRun { run_index: self.runs[i], seeds: self.seeds[i].clone() })
            .collect())
    }

    /// Histogram of `dim` over all runs and over the row's matches, ignoring the
    /// row's own filter on `dim`.
    pub fn histogram(&self, row: &RowGroup, dim: &str, bins: usize) -> Result<Histogram> {
        let d = self.dimension(dim)?;
        let m = self.mask(row, Some(dim))?;
        match &d.column {
            Column::Numeric(col) => {
                let edges = ticks::nice_edges(extent(col), bins);
                let nb = edges.len() - 1;
                let mut full = vec![0u64; nb];
                let mut filtered = vec![0u64; nb];
                for (i, &v) in col.iter().enumerate() {
                    if let Some(b) = bin_of(&edges, v) {
                        full[b] += 1;
                        if m[i] {
                            filtered[b] += 1;
                        }
                    }
                }
                Ok(Histogram {
                    dimension: dim.to_string(),
                    kind: d.kind,
                    edges: Some(edges),
                    categories: None,
                    full_counts: full,
                    filtered_counts: filtered,
                })
            }
            Column::Categorical { categories, codes } => {
                let mut full = vec![0u64; categories.len()];
                let mut filtered = vec![0u64; categories.len()];
                for (i, &c) in codes.iter().enumerate() {
                    if let Some(slot) = full.get_mut(c as usize) {
                        *slot += 1;
                        if m[i] {
                            filtered[c as usize] += 1;
                        }
                    }
                }
                Ok(Histogram {
                    dimension: dim.to_string(),
                    kind: d.kind,
                    edges: None,
                    categories: Some(categories.clone()),
                    full_counts: full,
                    filtered_counts: filtered,
                })
            }
        }
    }
}

fn extent(col: &[f64]) -> Option<(f64, f64)> {
    col.iter().filter(|v| !v.is_nan()).fold(None, |acc, &v| match acc {
        None => Some((v, v)),
        Some((a, b)) => Some((a.min(v), b.max(v))),
    })
}

/// Bins are half-open `[e_i, e_{i+1})` except the last, which is closed.
pub fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let nb = edges.len().checked_sub(1)?;
    if nb == 0 || v.is_nan() || v < edges[0] || v > edges[nb] {
        return None;
    }
    let k = edges.partition_point(|&e| e <= v);
    Some(k.saturating_sub(1).min(nb - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: u32, jitter: i64, order: &str, usage: f64) -> RunRecord {
        RunRecord {
            run_index: i,
            seeds: vec![i as u64 * 10, i as u64 * 10 + 1],
            params: [
                ("ingredient.a.nb_jitter".to_string(), ParamValue::Int(jitter)),
                ("global.ingredient_order".to_string(), ParamValue::Text(order.into())),
            ]
            .into(),
            metrics: [("usage".to_string(), usage)].into(),
            distances: BTreeMap::new(),
        }
    }

    fn table() -> Table {
        load_records(&[
            rec(2, 50, "by_radius_desc", 1.0),
            rec(0, 5, "random_interleave", 0.5),
            rec(1, 500, "by_radius_desc", 0.9),
        ])
        .unwrap()
    }

    #[test]
    fn registers_dimensions() {
        let t = table();
        assert_eq!(t.dimension("ingredient.a.nb_jitter").unwrap().kind, DimensionKind::Integer);
        assert_eq!(t.dimension("global.ingredient_order").unwrap().kind, DimensionKind::Categorical);
        assert_eq!(t.run_indices(), &[0, 1, 2]);
        assert!(matches!(t.dimension("nope"), Err(Error::UnknownDimension(_))));
    }

    #[test]
    fn duplicate_runs_rejected() {
        assert!(matches!(load_records(&[rec(1, 5, "x", 1.0), rec(1, 6, "x", 1.0)]), Err(Error::DuplicateRun(1))));
    }

    #[test]
    fn and_semantics() {
        let t = table();
        assert_eq!(t.apply_filters(&RowGroup::new()).unwrap(), vec![0, 1, 2]);
        let row = RowGroup::new()
            .with("usage", Predicate::Range([0.8, 1.0]))
            .with("global.ingredient_order", Predicate::OneOf(vec!["by_radius_desc".into()]));
        assert_eq!(t.apply_filters(&row).unwrap(), vec![1, 2]);
        let row = row.with("ingredient.a.nb_jitter", Predicate::Range([100.0, 50.0]));
        assert!(t.apply_filters(&row).unwrap().is_empty());
        let bad = RowGroup::new().with("missing", Predicate::Range([0.0, 1.0]));
        assert!(matches!(t.apply_filters(&bad), Err(Error::UnknownDimension(_))));
    }

    #[test]
    fn histogram_excludes_own_filter() {
        let t = table();
        let row = RowGroup::new().with("usage", Predicate::Range([1.0, 1.0]));
        let h = t.histogram(&row, "usage", 5).unwrap();
        assert_eq!(h.full_counts, h.filtered_counts);
        assert_eq!(h.full_counts.iter().sum::<u64>(), 3);
        let j = t.histogram(&row, "ingredient.a.nb_jitter", 5).unwrap();
        assert_eq!(j.filtered_counts.iter().sum::<u64>(), 1);
        let c = t.histogram(&row, "global.ingredient_order", 5).unwrap();
        assert_eq!(c.full_counts, vec![2, 1]);
        assert_eq!(c.filtered_counts, vec![1, 0]);
    }

    #[test]
    fn empty_table_histograms_are_zero() {
        let t = load_records(&[]).unwrap();
        assert!(t.is_empty());
        assert!(t.apply_filters(&RowGroup::new()).unwrap().is_empty());
    }

    #[test]
    fn last_bin_is_closed() {
        let e = [0.0, 0.5, 1.0];
        assert_eq!(bin_of(&e, 0.0), Some(0));
        assert_eq!(bin_of(&e, 0.5), Some(1));
        assert_eq!(bin_of(&e, 1.0), Some(1));
        assert_eq!(bin_of(&e, 1.1), None);
    }

    #[test]
    fn predicate_wire_format() {
        let p: Predicate = serde_json::from_str(r#"{"range":[0,1]}"#).unwrap();
        assert_eq!(p, Predicate::Range([0.0, 1.0]));
        let p: Predicate = serde_json::from_str(r#"{"one_of":["a"]}"#).unwrap();
        assert_eq!(p, Predicate::OneOf(vec!["a".into()]));
    }
}
