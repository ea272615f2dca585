//! Experiment setup: parameter specifications, even-lattice and uniform
//! sampling, and the deterministic N×R job matrix.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::params::{Assignment, ParamKind, ParamPath, ParamValue};
use crate::recipe::{parse_recipe, Recipe};
use crate::rng::{below, derive_seed, engine_rng, stream_seed, unit_f64};
use crate::{canonical, Error, Result};

pub const DEFAULT_LATTICE_CAP: usize = 100_000;
pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_DENSITY_DIMS: [u32; 3] = [16, 16, 16];

const SHUFFLE_STREAM: u64 = 1;
const UNIFORM_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Domain {
    Interval(Interval),
    Values(ValueSet),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueSet {
    pub values: Vec<ParamValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `k` evenly spaced values including both interval endpoints.
    Even(u32),
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpec {
    pub target: String,
    pub kind: ParamKind,
    pub domain: Domain,
    pub method: Method,
}

impl ParameterSpec {
    pub fn even(target: &str, kind: ParamKind, lo: f64, hi: f64, k: u32) -> Self {
        ParameterSpec {
            target: target.into(),
            kind,
            domain: Domain::Interval(Interval { lo, hi }),
            method: Method::Even(k),
        }
    }

    pub fn uniform(target: &str, kind: ParamKind, lo: f64, hi: f64) -> Self {
        ParameterSpec {
            target: target.into(),
            kind,
            domain: Domain::Interval(Interval { lo, hi }),
            method: Method::UniformRandom,
        }
    }

    pub fn categorical(target: &str, values: &[&str], method: Method) -> Self {
        ParameterSpec {
            target: target.into(),
            kind: ParamKind::Categorical,
            domain: Domain::Values(ValueSet {
                values: values.iter().map(|v| ParamValue::Text(v.to_string())).collect(),
            }),
            method,
        }
    }

    fn violations(&self, recipe: &Recipe, out: &mut Vec<String>) {
        let t = &self.target;
        let path = match ParamPath::parse(t).and_then(|p| p.resolve(recipe).map(|_| p)) {
            Ok(p) => p,
            Err(Error::Validation(v)) => {
                out.extend(v);
                return;
            }
            Err(e) => {
                out.push(e.to_string());
                return;
            }
        };
        let natural = path.kind();
        let compatible = match (natural, self.kind) {
            (a, b) if a == b => true,
            // Integer-valued sampling of a real-valued field is fine.
            (ParamKind::Numeric, ParamKind::Integer) => true,
            _ => false,
        };
        if !compatible {
            out.push(format!("{t}: kind {:?} does not fit a {natural:?} field", self.kind));
        }
        if let Method::Even(k) = self.method {
            if k < 2 {
                out.push(format!("{t}: even sampling needs at least 2 steps"));
            }
        }
        match &self.domain {
            Domain::Interval(iv) => {
                if self.kind == ParamKind::Categorical {
                    out.push(format!("{t}: categorical parameters need a value set"));
                }
                if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo <= iv.hi) {
                    out.push(format!("{t}: interval needs lo <= hi"));
                }
                if self.kind == ParamKind::Integer && iv.lo.ceil() > iv.hi.floor() {
                    out.push(format!("{t}: interval contains no integer"));
                }
            }
            Domain::Values(set) => {
                if set.values.is_empty() {
                    out.push(format!("{t}: value set is empty"));
                }
                for v in &set.values {
                    let ok = match self.kind {
                        ParamKind::Categorical => match (v.as_text(), path.categories()) {
                            (Some(s), Some(allowed)) => allowed.contains(&s),
                            _ => false,
                        },
                        ParamKind::Integer => matches!(v, ParamValue::Int(_)),
                        ParamKind::Numeric => v.as_f64().is_some(),
                    };
                    if !ok {
                        out.push(format!("{t}: value `{v}` is not a valid {:?} value", self.kind));
                    }
                }
            }
        }
    }

    /// Values this spec contributes to the even lattice.
    fn lattice_values(&self) -> Vec<ParamValue> {
        match (&self.domain, self.method) {
            (Domain::Values(set), _) => {
                let mut out: Vec<ParamValue> = Vec::new();
                for v in &set.values {
                    if !out.contains(v) {
                        out.push(v.clone());
                    }
                }
                out
            }
            (Domain::Interval(iv), Method::Even(k)) => {
                let k = k.max(2);
                let step = (iv.hi - iv.lo) / (k - 1) as f64;
                let raw = (0..k).map(|i| {
                    if i == k - 1 {
                        iv.hi
                    } else {
                        iv.lo + i as f64 * step
                    }
                });
                match self.kind {
                    ParamKind::Integer => {
                        let mut out: Vec<ParamValue> = Vec::new();
                        for x in raw {
                            let v = ParamValue::Int(x.round() as i64);
                            if !out.contains(&v) {
                                out.push(v);
                            }
                        }
                        out
                    }
                    _ => raw.map(ParamValue::Num).collect(),
                }
            }
            (Domain::Interval(iv), Method::UniformRandom) => vec![ParamValue::Num(iv.lo)],
        }
    }

    fn draw<R: rand::RngCore>(&self, rng: &mut R) -> ParamValue {
        match &self.domain {
            Domain::Values(set) => set.values[below(rng, set.values.len() as u64) as usize].clone(),
            Domain::Interval(iv) => match self.kind {
                ParamKind::Integer => {
                    let lo = iv.lo.ceil() as i64;
                    let hi = iv.hi.floor() as i64;
                    ParamValue::Int(lo + below(rng, (hi - lo + 1) as u64) as i64)
                }
                _ => ParamValue::Num(iv.lo + (iv.hi - iv.lo) * unit_f64(rng)),
            },
        }
    }
}

/// Full Cartesian product of even-sampled specs. The first spec varies
/// slowest, like nested loops written in spec order.
pub fn expand_even(specs: &[ParameterSpec]) -> Result<Vec<Assignment>> {
    expand_even_capped(specs, DEFAULT_LATTICE_CAP)
}

pub fn expand_even_capped(specs: &[ParameterSpec], cap: usize) -> Result<Vec<Assignment>> {
    let axes: Vec<Vec<ParamValue>> = specs.iter().map(|s| s.lattice_values()).collect();
    let size = axes.iter().map(|a| a.len() as u128).product::<u128>();
    if size > cap as u128 {
        return Err(Error::ComboExplosion { size, cap });
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..size {
        let a: Assignment = specs
            .iter()
            .zip(&axes)
            .zip(&idx)
            .map(|((s, vals), &i)| (s.target.clone(), vals[i].clone()))
            .collect();
        out.push(a);
        // Odometer increment, last axis fastest.
        for d in (0..axes.len()).rev() {
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(out)
}

/// `n` independent uniform draws over every spec's domain.
pub fn sample_uniform(specs: &[ParameterSpec], n: usize, rng_seed: u64) -> Vec<Assignment> {
    let mut rng = engine_rng(rng_seed);
    (0..n)
        .map(|_| {
            specs
                .iter()
                .map(|s| (s.target.clone(), s.draw(&mut rng)))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub recipe: Recipe,
    pub specs: Vec<ParameterSpec>,
    pub n_configs: u32,
    pub r_seeds: u32,
    pub base_seed: u64,
    pub output_location: String,
    /// Voxels per axis of the run density volumes (z is forced to 1 for planes).
    pub density_dims: [u32; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_index: u32,
    pub assignment: Assignment,
    pub seeds: Vec<u64>,
}

/// Recipe embedded in an experiment document, or a path to a recipe file
/// relative to the document.
#[derive(Deserialize)]
#[serde(untagged)]
enum RecipeSource {
    Path(String),
    Inline(Box<serde_json::Value>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentDocIn {
    format_version: u32,
    recipe: RecipeSource,
    #[serde(default)]
    specs: Vec<ParameterSpec>,
    n_configs: u32,
    r_seeds: u32,
    #[serde(default)]
    base_seed: u64,
    #[serde(default)]
    output_location: String,
    #[serde(default)]
    density_dims: Option<[u32; 3]>,
}

#[derive(Serialize)]
struct ExperimentDocOut<'a> {
    format_version: u32,
    recipe: &'a Recipe,
    specs: &'a [ParameterSpec],
    n_configs: u32,
    r_seeds: u32,
    base_seed: u64,
    output_location: &'a str,
    density_dims: [u32; 3],
}

impl ExperimentConfig {
    pub fn new(recipe: Recipe, specs: Vec<ParameterSpec>, n_configs: u32, r_seeds: u32) -> Self {
        ExperimentConfig {
            recipe,
            specs,
            n_configs,
            r_seeds,
            base_seed: 0,
            output_location: String::new(),
            density_dims: DEFAULT_DENSITY_DIMS,
        }
    }

    pub fn with_base_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn total_jobs(&self) -> u64 {
        self.n_configs as u64 * self.r_seeds as u64
    }

    fn even_specs(&self) -> Vec<ParameterSpec> {
        self.specs
            .iter()
            .filter(|s| matches!(s.method, Method::Even(_)))
            .cloned()
            .collect()
    }

    fn uniform_specs(&self) -> Vec<ParameterSpec> {
        self.specs
            .iter()
            .filter(|s| s.method == Method::UniformRandom)
            .cloned()
            .collect()
    }

    fn lattice_size(&self) -> u128 {
        self.even_specs()
            .iter()
            .map(|s| s.lattice_values().len() as u128)
            .product()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out: Vec<String> = crate::recipe::validate_recipe(&self.recipe)
            .into_iter()
            .map(|v| format!("recipe: {v}"))
            .collect();
        if self.n_configs < 1 {
            out.push("n_configs must be >= 1".into());
        }
        if self.r_seeds < 1 {
            out.push("r_seeds must be >= 1".into());
        }
        if self.density_dims.iter().any(|&d| d < 1) {
            out.push("density_dims must be >= 1 on every axis".into());
        }
        let mut targets = BTreeSet::new();
        for s in &self.specs {
            if !targets.insert(s.target.as_str()) {
                out.push(format!("{}: sampled more than once", s.target));
            }
            s.violations(&self.recipe, &mut out);
        }
        if out.is_empty() && self.specs.iter().any(|s| matches!(s.method, Method::Even(_))) {
            let size = self.lattice_size();
            if (self.n_configs as u128) > size {
                out.push(format!(
                    "n_configs = {} exceeds the even-sampling lattice size {size}",
                    self.n_configs
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Parses an experiment document. A string `recipe` is a path resolved
    /// against `base_dir`.
    pub fn from_document(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let doc: ExperimentDocIn = canonical::from_str(text)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::SchemaViolation(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        let recipe = match doc.recipe {
            RecipeSource::Inline(v) => {
                let r: Recipe = serde_json::from_value(*v).map_err(Error::from_json)?;
                r.validate()?;
                r
            }
            RecipeSource::Path(p) => {
                let path = match base_dir {
                    Some(dir) => dir.join(&p),
                    None => Path::new(&p).to_path_buf(),
                };
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                parse_recipe(&text)?
            }
        };
        let cfg = ExperimentConfig {
            recipe,
            specs: doc.specs,
            n_configs: doc.n_configs,
            r_seeds: doc.r_seeds,
            base_seed: doc.base_seed,
            output_location: doc.output_location,
            density_dims: doc.density_dims.unwrap_or(DEFAULT_DENSITY_DIMS),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_document(&text, path.parent())
    }
}

/// Self-contained canonical experiment document (recipe embedded).
pub fn export_experiment(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    Ok(canonical::to_string_pretty(&ExperimentDocOut {
        format_version: FORMAT_VERSION,
        recipe: &cfg.recipe,
        specs: &cfg.specs,
        n_configs: cfg.n_configs,
        r_seeds: cfg.r_seeds,
        base_seed: cfg.base_seed,
        output_location: &cfg.output_location,
        density_dims: cfg.density_dims,
    }))
}

/// Parameter assignments of the N runs.
///
/// Even specs form the lattice; when it has more than N points a shuffled
/// prefix (seeded by `base_seed`) is kept in lattice order. Uniform specs are
/// drawn once per retained lattice point.
pub fn sample_assignments(cfg: &ExperimentConfig) -> Result<Vec<Assignment>> {
    let n = cfg.n_configs as usize;
    let even = cfg.even_specs();
    let mut lattice = if even.is_empty() {
        vec![Assignment::new(); n]
    } else {
        expand_even(&even)?
    };
    if lattice.len() > n {
        let mut order: Vec<usize> = (0..lattice.len()).collect();
        let mut rng = engine_rng(stream_seed(cfg.base_seed, SHUFFLE_STREAM));
        for i in (1..order.len()).rev() {
            let j = below(&mut rng, i as u64 + 1) as usize;
            order.swap(i, j);
        }
        let mut keep: Vec<usize> = order[..n].to_vec();
        keep.sort_unstable();
        lattice = keep.into_iter().map(|i| std::mem::take(&mut lattice[i])).collect();
    }
    let uniform = cfg.uniform_specs();
    if !uniform.is_empty() {
        let draws = sample_uniform(&uniform, n, stream_seed(cfg.base_seed, UNIFORM_STREAM));
        for (a, d) in lattice.iter_mut().zip(draws) {
            a.extend(d);
        }
    }
    Ok(lattice)
}

/// The N run configurations, each with R distinct derived seeds.
pub fn build_job_matrix(cfg: &ExperimentConfig) -> Result<Vec<RunConfig>> {
    cfg.validate()?;
    let assignments = sample_assignments(cfg)?;
    Ok(assignments
        .into_iter()
        .enumerate()
        .map(|(i, assignment)| {
            let mut seeds: Vec<u64> = Vec::with_capacity(cfg.r_seeds as usize);
            for j in 0..cfg.r_seeds as u64 {
                let mut s = derive_seed(cfg.base_seed, i as u64, j);
                // 64-bit collisions are astronomically rare; resolve them deterministically.
                while seeds.contains(&s) {
                    s = crate::rng::splitmix64(s);
                }
                seeds.push(s);
            }
            RunConfig {
                run_index: i as u32,
                assignment,
                seeds,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recipe::parse_recipe;

    fn recipe() -> Recipe {
        parse_recipe(
            r#"{"name": "p", "volume": {"mode": "plane2d", "extents": [60, 60, 0]},
                "defaults": {"grid_spacing": 1},
                "ingredients": [{"name": "s", "radius": 5, "count": 40}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn even_lattice_with_categorical_axis() {
        let specs = vec![
            ParameterSpec::even("ingredient.s.radius", ParamKind::Numeric, 0.0, 1.0, 3),
            ParameterSpec::categorical("global.point_selection", &["random", "ordered"], Method::Even(2)),
        ];
        let l = expand_even(&specs).unwrap();
        assert_eq!(l.len(), 6);
        let radii: BTreeSet<String> = l.iter().map(|a| a["ingredient.s.radius"].to_string()).collect();
        assert_eq!(radii, ["0", "0.5", "1"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn two_step_even_hits_both_endpoints() {
        let specs = vec![ParameterSpec::even("ingredient.s.nb_jitter", ParamKind::Integer, 5.0, 500.0, 2)];
        let l = expand_even(&specs).unwrap();
        let v: Vec<_> = l.iter().map(|a| a["ingredient.s.nb_jitter"].clone()).collect();
        assert_eq!(v, vec![ParamValue::Int(5), ParamValue::Int(500)]);
    }

    #[test]
    fn integer_even_values_are_rounded_and_deduplicated() {
        let specs = vec![ParameterSpec::even("ingredient.s.count", ParamKind::Integer, 0.0, 2.0, 5)];
        let v: Vec<_> = expand_even(&specs).unwrap().into_iter().map(|a| a["ingredient.s.count"].clone()).collect();
        // 0, 0.5, 1, 1.5, 2 round half away from zero to 0, 1, 1, 2, 2.
        assert_eq!(v, vec![ParamValue::Int(0), ParamValue::Int(1), ParamValue::Int(2)]);
    }

    #[test]
    fn oversized_lattice_is_refused() {
        let specs = vec![
            ParameterSpec::even("ingredient.s.radius", ParamKind::Numeric, 1.0, 2.0, 1000),
            ParameterSpec::even("ingredient.s.jitter_max", ParamKind::Numeric, 0.0, 2.0, 1000),
        ];
        assert!(matches!(expand_even(&specs), Err(Error::ComboExplosion { size: 1_000_000, .. })));
        assert_eq!(expand_even_capped(&specs[..1], 10).unwrap_err().to_string(),
            "even sampling lattice has 1000 points, above the cap of 10");
    }

    #[test]
    fn uniform_sampling_edge_cases() {
        let degenerate = vec![ParameterSpec::uniform("ingredient.s.jitter_max", ParamKind::Numeric, 0.0, 0.0)];
        assert_eq!(sample_uniform(&degenerate, 1, 9)[0]["ingredient.s.jitter_max"], ParamValue::Num(0.0));

        let unit = vec![ParameterSpec::uniform("ingredient.s.jitter_max", ParamKind::Numeric, 0.0, 1.0)];
        let draws = sample_uniform(&unit, 1000, 2024);
        let mean = draws.iter().map(|a| a["ingredient.s.jitter_max"].as_f64().unwrap()).sum::<f64>() / 1000.0;
        assert!((mean - 0.5).abs() < 0.03, "mean {mean}");
        assert_eq!(draws, sample_uniform(&unit, 1000, 2024));
    }

    #[test]
    fn integer_uniform_covers_inclusive_range() {
        let spec = vec![ParameterSpec::uniform("ingredient.s.count", ParamKind::Integer, 10.0, 12.0)];
        let seen: BTreeSet<i64> = sample_uniform(&spec, 200, 1)
            .iter()
            .map(|a| match a["ingredient.s.count"] {
                ParamValue::Int(i) => i,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(seen, [10, 11, 12].into_iter().collect());
    }

    #[test]
    fn job_matrix_shape_and_determinism() {
        let cfg = ExperimentConfig::new(
            recipe(),
            vec![
                ParameterSpec::even("ingredient.s.nb_jitter", ParamKind::Integer, 5.0, 500.0, 5),
                ParameterSpec::even("ingredient.s.rejection_threshold", ParamKind::Integer, 30.0, 300.0, 2),
            ],
            10,
            5,
        );
        let jobs = build_job_matrix(&cfg).unwrap();
        assert_eq!(jobs.len(), 10);
        assert_eq!(jobs.iter().map(|r| r.seeds.len()).sum::<usize>(), 50);
        for r in &jobs {
            let distinct: BTreeSet<_> = r.seeds.iter().collect();
            assert_eq!(distinct.len(), 5);
            assert_eq!(r.assignment.len(), 2);
        }
        assert_eq!(
            serde_json::to_string(&jobs).unwrap(),
            serde_json::to_string(&build_job_matrix(&cfg).unwrap()).unwrap()
        );
    }

    #[test]
    fn single_job_without_specs() {
        let cfg = ExperimentConfig::new(recipe(), vec![], 1, 1);
        let jobs = build_job_matrix(&cfg).unwrap();
        assert_eq!(jobs.len(), 1);
        assert!(jobs[0].assignment.is_empty());
    }

    #[test]
    fn truncated_lattice_is_a_seeded_subset() {
        let specs = vec![
            ParameterSpec::even("ingredient.s.nb_jitter", ParamKind::Integer, 5.0, 500.0, 10),
            ParameterSpec::even("ingredient.s.rejection_threshold", ParamKind::Integer, 30.0, 300.0, 10),
        ];
        let full = expand_even(&specs).unwrap();
        let cfg = ExperimentConfig::new(recipe(), specs, 10, 1).with_base_seed(3);
        let picked = sample_assignments(&cfg).unwrap();
        assert_eq!(picked.len(), 10);
        let positions: Vec<usize> = picked.iter().map(|a| full.iter().position(|f| f == a).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "kept in lattice order");
        let other = sample_assignments(&cfg.clone().with_base_seed(4)).unwrap();
        assert_ne!(picked, other);
    }

    #[test]
    fn mixed_specs_draw_uniform_values_per_lattice_point() {
        let cfg = ExperimentConfig::new(
            recipe(),
            vec![
                ParameterSpec::even("ingredient.s.nb_jitter", ParamKind::Integer, 5.0, 500.0, 4),
                ParameterSpec::uniform("ingredient.s.jitter_max", ParamKind::Numeric, 0.0, 2.0),
            ],
            4,
            2,
        );
        let a = sample_assignments(&cfg).unwrap();
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|x| x.len() == 2));
        let too_many = ExperimentConfig { n_configs: 5, ..cfg };
        assert!(matches!(build_job_matrix(&too_many), Err(Error::Validation(_))));
    }

    #[test]
    fn export_round_trips_and_refuses_invalid() {
        let cfg = ExperimentConfig::new(
            recipe(),
            vec![ParameterSpec::even("ingredient.s.nb_jitter", ParamKind::Integer, 5.0, 500.0, 5)],
            5,
            3,
        )
        .with_base_seed(77);
        let doc = export_experiment(&cfg).unwrap();
        let back = ExperimentConfig::from_document(&doc, None).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(export_experiment(&back).unwrap(), doc);

        let bad = ExperimentConfig { r_seeds: 0, ..cfg };
        assert!(matches!(export_experiment(&bad), Err(Error::Validation(_))));
    }

    #[test]
    fn spec_kind_must_fit_the_field() {
        let cfg = ExperimentConfig::new(
            recipe(),
            vec![ParameterSpec::even("ingredient.s.count", ParamKind::Numeric, 1.0, 5.0, 3)],
            3,
            1,
        );
        assert!(cfg.validate().is_err());
    }
}
