//! Derived per-output metrics and their seed-averaged run summaries.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::engine::PackingOutput;
use crate::geom::min_image_distance;
use crate::params::{Assignment, ParamValue};
use crate::recipe::{PackingVolume, VolumeMode};
use crate::sampler::RunConfig;
use crate::{Error, Result};

pub const USAGE: &str = "usage";
pub const SPACE_OCCUPANCY: &str = "space_occupancy";
pub const RUNTIME: &str = "runtime";
pub const DISTANCE_AVG: &str = "distance_avg";

/// Mean pairwise distances between ingredient types, indexed in `names`
/// order. `None` marks an undefined entry (an empty type, or a type paired
/// with itself that has a single instance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl DistanceMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        self.values[i][j]
    }

    /// Upper-triangle entries keyed `distance_avg.<a>.<b>`.
    pub fn entries(&self) -> BTreeMap<String, Option<f64>> {
        let mut out = BTreeMap::new();
        for i in 0..self.names.len() {
            for j in i..self.names.len() {
                out.insert(format!("{DISTANCE_AVG}.{}.{}", self.names[i], self.names[j]), self.values[i][j]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMetrics {
    pub space_occupancy: BTreeMap<String, f64>,
    pub usage: BTreeMap<String, f64>,
    pub distance_matrix: DistanceMatrix,
    pub runtime_seconds: f64,
}

impl OutputMetrics {
    pub fn compute(out: &PackingOutput, volume: &PackingVolume) -> Self {
        OutputMetrics {
            space_occupancy: space_occupancy(out, volume),
            usage: usage(out),
            distance_matrix: distance_matrix(out, volume),
            runtime_seconds: out.runtime_seconds,
        }
    }

    /// Scalar metrics by dimension name: totals plus per-ingredient entries.
    pub fn scalars(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert(SPACE_OCCUPANCY.to_string(), self.space_occupancy.values().sum());
        for (k, v) in &self.space_occupancy {
            m.insert(format!("{SPACE_OCCUPANCY}.{k}"), *v);
        }
        for (k, v) in &self.usage {
            m.insert(format!("{USAGE}.{k}"), *v);
        }
        m.insert(RUNTIME.to_string(), self.runtime_seconds);
        m
    }
}

/// Fraction of the volume (area, surface) covered by each ingredient type.
pub fn space_occupancy(out: &PackingOutput, volume: &PackingVolume) -> BTreeMap<String, f64> {
    let measure = volume.measure();
    let mut m: BTreeMap<String, f64> = out.requested_counts.keys().map(|k| (k.clone(), 0.0)).collect();
    for inst in &out.instances {
        let r = inst.radius;
        let covered = match volume.mode {
            VolumeMode::Box3d => 4.0 / 3.0 * PI * r * r * r,
            // A sphere of radius r centred on the surface cuts a cap of area
            // 2πR²(1 - cos θ) with cos θ = 1 - r²/2R², i.e. exactly πr².
            VolumeMode::Plane2d | VolumeMode::SphereSurface => PI * r * r,
        };
        *m.entry(inst.ingredient.clone()).or_insert(0.0) += covered;
    }
    m.values_mut().for_each(|v| *v /= measure);
    m
}

/// Placed over requested per ingredient; 1 when nothing was requested.
pub fn usage(out: &PackingOutput) -> BTreeMap<String, f64> {
    out.requested_counts
        .iter()
        .map(|(k, &req)| {
            let placed = out.placed_counts.get(k).copied().unwrap_or(0);
            let u = if req == 0 { 1.0 } else { placed as f64 / req as f64 };
            (k.clone(), u)
        })
        .collect()
}

/// Usage over all ingredients together.
pub fn total_usage(out: &PackingOutput) -> f64 {
    let req: u64 = out.requested_counts.values().map(|&c| c as u64).sum();
    let placed: u64 = out.placed_counts.values().map(|&c| c as u64).sum();
    if req == 0 {
        1.0
    } else {
        placed as f64 / req as f64
    }
}

/// Ordered-pair mean distance between every pair of ingredient types,
/// summed in instance order. Minimum-image distances when periodic.
pub fn distance_matrix(out: &PackingOutput, volume: &PackingVolume) -> DistanceMatrix {
    let names: Vec<String> = out.requested_counts.keys().cloned().collect();
    let groups: Vec<Vec<[f64; 3]>> = names
        .iter()
        .map(|n| out.instances_of(n).map(|i| i.position).collect())
        .collect();
    let period = volume.period();
    let k = names.len();
    let mut values = vec![vec![None; k]; k];
    for a in 0..k {
        for b in a..k {
            let (ga, gb) = (&groups[a], &groups[b]);
            let mut sum = 0.0;
            let mut pairs = 0u64;
            for (i, p) in ga.iter().enumerate() {
                for (j, q) in gb.iter().enumerate() {
                    if a == b && i == j {
                        continue;
                    }
                    sum += min_image_distance(*p, *q, &period);
                    pairs += 1;
                }
            }
            let v = (pairs > 0).then(|| sum / pairs as f64);
            values[a][b] = v;
            values[b][a] = v;
        }
    }
    DistanceMatrix { names, values }
}

/// Seed-averaged metrics of one run, the atomic unit of filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_index: u32,
    pub assignment: Assignment,
    pub seeds: Vec<u64>,
    /// Mean of each scalar metric over the run's seeds.
    pub metrics: BTreeMap<String, f64>,
    pub distance_avg: DistanceMatrix,
    pub per_seed: Vec<OutputMetrics>,
}

fn bounded_mean(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Rounding can push the mean of identical values one ulp outside them.
    mean.clamp(lo, hi)
}

/// Averages per-seed metrics already computed for `run_cfg`.
pub fn summarize_metrics(run_cfg: &RunConfig, per_seed: Vec<OutputMetrics>, total_usages: &[f64]) -> RunSummary {
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (m, &u) in per_seed.iter().zip(total_usages) {
        for (k, v) in m.scalars() {
            columns.entry(k).or_default().push(v);
        }
        columns.entry(USAGE.to_string()).or_default().push(u);
    }
    let metrics = columns.into_iter().map(|(k, v)| (k, bounded_mean(&v))).collect();

    let names = per_seed.first().map(|m| m.distance_matrix.names.clone()).unwrap_or_default();
    let k = names.len();
    let mut values = vec![vec![None; k]; k];
    for (a, row) in values.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            let present: Vec<f64> = per_seed.iter().filter_map(|m| m.distance_matrix.values[a][b]).collect();
            if !present.is_empty() {
                *cell = Some(bounded_mean(&present));
            }
        }
    }
    RunSummary {
        run_index: run_cfg.run_index,
        assignment: run_cfg.assignment.clone(),
        seeds: run_cfg.seeds.clone(),
        metrics,
        distance_avg: DistanceMatrix { names, values },
        per_seed,
    }
}

pub fn summarize_run(outputs: &[PackingOutput], run_cfg: &RunConfig, volume: &PackingVolume) -> Result<RunSummary> {
    if let Some(o) = outputs.iter().find(|o| o.config_ref.run_index != run_cfg.run_index) {
        return Err(Error::MismatchedRun(run_cfg.run_index, o.config_ref.run_index));
    }
    let per_seed = outputs.iter().map(|o| OutputMetrics::compute(o, volume)).collect();
    let totals: Vec<f64> = outputs.iter().map(total_usage).collect();
    Ok(summarize_metrics(run_cfg, per_seed, &totals))
}

/// One line of `runs.jsonl`: a flat object with `run_index`, `seeds`, every
/// sampled parameter path, every scalar metric, and `distance_avg.<a>.<b>`
/// entries (null when undefined).
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_index: u32,
    pub seeds: Vec<u64>,
    pub params: Assignment,
    pub metrics: BTreeMap<String, f64>,
    pub distances: BTreeMap<String, Option<f64>>,
}

pub fn is_param_key(k: &str) -> bool {
    k.starts_with("global.") || k.starts_with("ingredient.")
}

impl From<&RunSummary> for RunRecord {
    fn from(s: &RunSummary) -> Self {
        RunRecord {
            run_index: s.run_index,
            seeds: s.seeds.clone(),
            params: s.assignment.clone(),
            metrics: s.metrics.clone(),
            distances: s.distance_avg.entries(),
        }
    }
}

impl RunRecord {
    pub fn to_value(&self) -> Value {
        let mut m = Map::new();
        m.insert("run_index".into(), Value::from(self.run_index));
        m.insert("seeds".into(), Value::from(self.seeds.clone()));
        for (k, v) in &self.params {
            m.insert(k.clone(), serde_json::to_value(v).expect("param values serialize"));
        }
        for (k, v) in &self.metrics {
            m.insert(k.clone(), serde_json::to_value(v).expect("f64 serializes"));
        }
        for (k, v) in &self.distances {
            m.insert(k.clone(), serde_json::to_value(v).expect("f64 serializes"));
        }
        Value::Object(m)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_value()).expect("Value serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(line).map_err(Error::from_json)?;
        Self::from_value(v)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let schema = |m: &str| Error::SchemaViolation(m.to_string());
        let Value::Object(obj) = v else {
            return Err(schema("run record must be an object"));
        };
        let mut rec = RunRecord {
            run_index: 0,
            seeds: Vec::new(),
            params: Assignment::new(),
            metrics: BTreeMap::new(),
            distances: BTreeMap::new(),
        };
        let mut have_index = false;
        for (k, v) in obj {
            match k.as_str() {
                "run_index" => {
                    rec.run_index = v
                        .as_u64()
                        .and_then(|x| u32::try_from(x).ok())
                        .ok_or_else(|| schema("run_index must be a u32"))?;
                    have_index = true;
                }
                "seeds" => {
                    rec.seeds = serde_json::from_value(v).map_err(|_| schema("seeds must be u64 values"))?;
                }
                _ if is_param_key(&k) => {
                    let pv: ParamValue =
                        serde_json::from_value(v).map_err(|_| schema("parameter values must be scalars"))?;
                    rec.params.insert(k, pv);
                }
                _ if k.starts_with(DISTANCE_AVG) => {
                    rec.distances.insert(k, v.as_f64());
                }
                _ => {
                    let x = v.as_f64().ok_or_else(|| schema("metric values must be numbers"))?;
                    rec.metrics.insert(k, x);
                }
            }
        }
        if !have_index {
            return Err(schema("run record without run_index"));
        }
        Ok(rec)
    }
}
