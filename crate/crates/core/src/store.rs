//! On-disk experiment layout.
//!
//! ```text
//! <root>/recipes/<name>.json
//! <root>/experiments/<id>/experiment.json
//! <root>/experiments/<id>/recipe.json
//! <root>/experiments/<id>/runs/run_<n>/output_<r>.json
//! <root>/experiments/<id>/runs.jsonl
//! <root>/experiments/<id>/density/run_<n>/{volume.bin, proj_{x,y,z}.pgm, proj_{x,y,z}.json}
//! <root>/experiments/<id>/state/{running, failed, wallclock.jsonl}
//! ```
//!
//! Everything outside `state/` is a pure function of the experiment document.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::canonical;
use crate::density::{self, Axis, DensityVolume};
use crate::engine::PackingOutput;
use crate::metrics::RunRecord;
use crate::recipe::{parse_recipe, Recipe};
use crate::sampler::{export_experiment, ExperimentConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Created,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub id: String,
    pub status: Status,
    pub completed_jobs: u64,
    pub total_jobs: u64,
    pub progress: f64,
}

/// First 16 hex digits of the SHA-256 of the exported document.
pub fn experiment_id(cfg: &ExperimentConfig) -> Result<String> {
    Ok(content_id(export_experiment(cfg)?.as_bytes()))
}

fn content_id(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Write via a sibling temp file and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.{}.{n}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Like [`write_atomic`] but refuses to replace a file with different bytes.
pub fn write_once(path: &Path, bytes: &[u8]) -> Result<()> {
    match fs::read(path) {
        Ok(existing) if existing == bytes => Ok(()),
        Ok(_) => Err(Error::Conflict { path: path.to_path_buf() }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => write_atomic(path, bytes),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path.display().to_string())
        } else {
            Error::io(path, e)
        }
    })
}

fn valid_id(id: &str) -> bool {
    id.len() == 16 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["experiments", "recipes"] {
            let d = root.join(sub);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn experiment_dir(&self, id: &str) -> PathBuf {
        self.root.join("experiments").join(id)
    }

    pub fn run_dir(&self, id: &str, run: u32) -> PathBuf {
        self.experiment_dir(id).join("runs").join(format!("run_{run}"))
    }

    pub fn output_path(&self, id: &str, run: u32, seed_index: u32) -> PathBuf {
        self.run_dir(id, run).join(format!("output_{seed_index}.json"))
    }

    pub fn runs_table_path(&self, id: &str) -> PathBuf {
        self.experiment_dir(id).join("runs.jsonl")
    }

    pub fn density_dir(&self, id: &str, run: u32) -> PathBuf {
        self.experiment_dir(id).join("density").join(format!("run_{run}"))
    }

    pub fn state_dir(&self, id: &str) -> PathBuf {
        self.experiment_dir(id).join("state")
    }

    fn require(&self, id: &str) -> Result<PathBuf> {
        let dir = self.experiment_dir(id);
        if valid_id(id) && dir.join("experiment.json").is_file() {
            Ok(dir)
        } else {
            Err(Error::NotFound(format!("experiment {id}")))
        }
    }

    pub fn exists(&self, id: &str) -> bool {
        self.require(id).is_ok()
    }

    /// Writes `experiment.json` and `recipe.json`; saving the same config again is a no-op.
    pub fn save_experiment(&self, cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
        cfg.validate()?;
        let doc = export_experiment(cfg)?;
        let id = content_id(doc.as_bytes());
        let dir = self.experiment_dir(&id);
        write_once(&dir.join("experiment.json"), doc.as_bytes())?;
        write_once(&dir.join("recipe.json"), cfg.recipe.to_json().as_bytes())?;
        self.status(&id)
    }

    pub fn load_experiment(&self, id: &str) -> Result<ExperimentConfig> {
        let dir = self.require(id)?;
        ExperimentConfig::from_document(&read_text(&dir.join("experiment.json"))?, Some(&dir))
    }

    pub fn list_experiments(&self) -> Result<Vec<ExperimentRecord>> {
        let dir = self.root.join("experiments");
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| self.exists(n))
            .collect();
        ids.sort();
        ids.iter().map(|id| self.status(id)).collect()
    }

    /// Number of output files present.
    pub fn completed_jobs(&self, id: &str) -> u64 {
        let runs = self.experiment_dir(id).join("runs");
        let Ok(entries) = fs::read_dir(runs) else { return 0 };
        entries
            .filter_map(|e| e.ok())
            .filter_map(|e| fs::read_dir(e.path()).ok())
            .flat_map(|d| d.filter_map(|e| e.ok()))
            .filter(|e| {
                let n = e.file_name();
                let n = n.to_string_lossy();
                n.starts_with("output_") && n.ends_with(".json")
            })
            .count() as u64
    }

    pub fn status(&self, id: &str) -> Result<ExperimentRecord> {
        let cfg = self.load_experiment(id)?;
        let total = cfg.total_jobs();
        let completed = self.completed_jobs(id).min(total);
        let state = self.state_dir(id);
        let status = if state.join("failed").exists() {
            Status::Failed
        } else if state.join("running").exists() {
            Status::Running
        } else if completed == total && self.runs_table_path(id).is_file() {
            Status::Done
        } else if completed > 0 {
            Status::Running
        } else {
            Status::Created
        };
        Ok(ExperimentRecord {
            id: id.to_string(),
            status,
            completed_jobs: completed,
            total_jobs: total,
            progress: if total == 0 { 0.0 } else { completed as f64 / total as f64 },
        })
    }

    pub fn mark_running(&self, id: &str) -> Result<()> {
        self.require(id)?;
        let state = self.state_dir(id);
        let _ = fs::remove_file(state.join("failed"));
        write_atomic(&state.join("running"), b"")
    }

    pub fn mark_finished(&self, id: &str, failure: Option<&str>) -> Result<()> {
        let state = self.state_dir(id);
        if let Some(msg) = failure {
            write_atomic(&state.join("failed"), msg.as_bytes())?;
        }
        match fs::remove_file(state.join("running")) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(Error::io(state.join("running"), e)),
        }
    }

    pub fn failure_message(&self, id: &str) -> Option<String> {
        fs::read_to_string(self.state_dir(id).join("failed")).ok()
    }

    pub fn save_output(&self, id: &str, run: u32, seed_index: u32, out: &PackingOutput) -> Result<()> {
        self.require(id)?;
        write_once(&self.output_path(id, run, seed_index), canonical::to_string_pretty(out).as_bytes())
    }

    pub fn load_output(&self, id: &str, run: u32, seed_index: u32) -> Result<PackingOutput> {
        self.require(id)?;
        canonical::from_str(&read_text(&self.output_path(id, run, seed_index))?)
    }

    /// Rewrites `runs.jsonl`, one record per line in run order.
    pub fn write_runs_table(&self, id: &str, records: &[RunRecord]) -> Result<()> {
        self.require(id)?;
        let mut sorted: Vec<&RunRecord> = records.iter().collect();
        sorted.sort_by_key(|r| r.run_index);
        let mut text = String::new();
        for r in sorted {
            text.push_str(&r.to_json_line());
            text.push('\n');
        }
        write_atomic(&self.runs_table_path(id), text.as_bytes())
    }

    pub fn read_runs_table(&self, id: &str) -> Result<Vec<RunRecord>> {
        self.require(id)?;
        read_text(&self.runs_table_path(id))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(RunRecord::from_json_line)
            .collect()
    }

    /// Writes the volume and its three combined-channel projections.
    pub fn save_density(&self, id: &str, run: u32, vol: &DensityVolume) -> Result<()> {
        self.require(id)?;
        let dir = self.density_dir(id, run);
        write_atomic(&dir.join("volume.bin"), &density::encode_volume(vol))?;
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let img = density::project(vol, axis);
            write_atomic(&dir.join(format!("proj_{}.pgm", axis.name())), &img.to_pgm())?;
            let side = canonical::to_string_pretty(&img.sidecar(vol.dims));
            write_atomic(&dir.join(format!("proj_{}.json", axis.name())), side.as_bytes())?;
        }
        Ok(())
    }

    pub fn load_density(&self, id: &str, run: u32) -> Result<DensityVolume> {
        self.require(id)?;
        let path = self.density_dir(id, run).join("volume.bin");
        let bytes = fs::read(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::NotFound(path.display().to_string())
            } else {
                Error::io(&path, e)
            }
        })?;
        density::decode_volume(&bytes)
    }

    /// Appends a line of non-canonical timing data under `state/`.
    pub fn append_wallclock(&self, id: &str, line: &str) -> Result<()> {
        use std::io::Write;
        let dir = self.state_dir(id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("wallclock.jsonl");
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
    }

    pub fn recipe_path(&self, name: &str) -> PathBuf {
        self.root.join("recipes").join(format!("{name}.json"))
    }

    /// Stores a validated recipe under its name, replacing any previous version.
    pub fn save_recipe(&self, recipe: &Recipe) -> Result<()> {
        recipe.validate()?;
        if recipe.name.contains(['/', '\\']) || recipe.name.starts_with('.') {
            return Err(Error::Validation(vec![format!("recipe name {:?} is not a valid file name", recipe.name)]));
        }
        write_atomic(&self.recipe_path(&recipe.name), recipe.to_json().as_bytes())
    }

    pub fn load_recipe(&self, name: &str) -> Result<Recipe> {
        parse_recipe(&read_text(&self.recipe_path(name))?)
    }

    pub fn list_recipes(&self) -> Result<Vec<Recipe>> {
        let dir = self.root.join("recipes");
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths.iter().map(|p| parse_recipe(&read_text(p)?)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recipe::{Ingredient, PackingVolume};

    fn cfg(seed: u64) -> ExperimentConfig {
        let recipe = Recipe::new(
            "demo",
            PackingVolume::plane2d(100.0, 100.0),
            2.0,
            vec![Ingredient::new("sphere", 5.0, 10)],
        );
        ExperimentConfig::new(recipe, vec![], 1, 2).with_base_seed(seed)
    }

    #[test]
    fn save_is_idempotent_and_content_addressed() {
        let tmp = tempfile::tempdir().unwrap();
        let store = Store::open(tmp.path()).unwrap();
        let a = store.save_experiment(&cfg(1)).unwrap();
        let b = store.save_experiment(&cfg(1)).unwrap();
        assert_eq!(a.id, b.id);
        assert_eq!(a.id.len(), 16);
        assert_eq!(a.status, Status::Created);
        let c = store.save_experiment(&cfg(2)).unwrap();
        assert_ne!(a.id, c.id);
        assert_eq!(store.list_experiments().unwrap().len(), 2);
        assert_eq!(store.load_experiment(&a.id).unwrap(), cfg(1));
    }

    #[test]
    fn outputs_round_trip_and_conflict() {
        let tmp = tempfile::tempdir().unwrap();
        let store = Store::open(tmp.path()).unwrap();
        let c = cfg(1);
        let id = store.save_experiment(&c).unwrap().id;
        let out = crate::engine::pack(&c.recipe, &Default::default(), 9).unwrap();
        store.save_output(&id, 0, 0, &out).unwrap();
        store.save_output(&id, 0, 0, &out).unwrap();
        assert_eq!(store.load_output(&id, 0, 0).unwrap(), out);
        let st = store.status(&id).unwrap();
        assert_eq!((st.status, st.progress), (Status::Running, 0.5));
        let mut other = out.clone();
        other.seed += 1;
        assert!(matches!(store.save_output(&id, 0, 0, &other), Err(Error::Conflict { .. })));
        assert!(matches!(store.load_output(&id, 0, 1), Err(Error::NotFound(_))));
        assert!(matches!(store.load_output("0123456789abcdef", 0, 0), Err(Error::NotFound(_))));
    }

    #[test]
    fn recipes_directory() {
        let tmp = tempfile::tempdir().unwrap();
        let store = Store::open(tmp.path()).unwrap();
        store.save_recipe(&cfg(0).recipe).unwrap();
        assert_eq!(store.list_recipes().unwrap(), vec![cfg(0).recipe]);
        assert_eq!(store.load_recipe("demo").unwrap().name, "demo");
    }
}
