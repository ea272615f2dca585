//! Executes an experiment's job matrix: packing, metrics, density volumes and
//! the run-level metrics table.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crate::density::{self, DensityVolume};
use crate::engine::{pack, PackingOutput};
use crate::metrics::{summarize_run, RunRecord, RunSummary};
use crate::par::{self, Parallelism};
use crate::sampler::{build_job_matrix, ExperimentConfig, RunConfig};
use crate::store::Store;
use crate::Result;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub parallelism: Parallelism,
    /// Incremented once per finished job.
    pub progress: Option<Arc<AtomicUsize>>,
}

impl RunOptions {
    pub fn new(parallelism: Parallelism) -> Self {
        RunOptions { parallelism, progress: None }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    pub outputs: Vec<PackingOutput>,
    pub summary: RunSummary,
    pub density: DensityVolume,
}

#[derive(Debug, Clone)]
pub struct JobTiming {
    pub run_index: u32,
    pub seed_index: u32,
    pub wall_seconds: f64,
}

struct Job<'a> {
    run: &'a RunConfig,
    seed_index: u32,
}

fn execute<F>(cfg: &ExperimentConfig, opts: &RunOptions, on_output: F) -> Result<(Vec<RunResult>, Vec<JobTiming>)>
where
    F: Fn(u32, u32, &PackingOutput) -> Result<()> + Sync + Send,
{
    cfg.validate()?;
    let matrix = build_job_matrix(cfg)?;
    let jobs: Vec<Job> = matrix
        .iter()
        .flat_map(|run| (0..run.seeds.len() as u32).map(move |seed_index| Job { run, seed_index }))
        .collect();
    let done = par::map(&jobs, opts.parallelism, |job| -> Result<(PackingOutput, f64)> {
        let t = Instant::now();
        let seed = job.run.seeds[job.seed_index as usize];
        let mut out = pack(&cfg.recipe, &job.run.assignment, seed)?;
        out.config_ref.run_index = job.run.run_index;
        on_output(job.run.run_index, job.seed_index, &out)?;
        if let Some(p) = &opts.progress {
            p.fetch_add(1, Ordering::Relaxed);
        }
        Ok((out, t.elapsed().as_secs_f64()))
    });
    let mut timings = Vec::with_capacity(jobs.len());
    let mut outputs: Vec<Vec<PackingOutput>> = matrix.iter().map(|r| Vec::with_capacity(r.seeds.len())).collect();
    for ((job, res), slot) in jobs.iter().zip(done).zip(
        matrix
            .iter()
            .enumerate()
            .flat_map(|(i, r)| std::iter::repeat_n(i, r.seeds.len())),
    ) {
        let (out, wall) = res?;
        timings.push(JobTiming { run_index: job.run.run_index, seed_index: job.seed_index, wall_seconds: wall });
        outputs[slot].push(out);
    }

    let dims = cfg.density_dims.map(|d| d as usize);
    let volume = &cfg.recipe.volume;
    let runs: Vec<(RunConfig, Vec<PackingOutput>)> = matrix.into_iter().zip(outputs).collect();
    let results = par::map(&runs, opts.parallelism, |(rc, outs)| -> Result<RunResult> {
        let summary = summarize_run(outs, rc, volume)?;
        let vols: Vec<DensityVolume> = outs.iter().map(|o| density::voxelize(o, volume, dims)).collect();
        let density = density::average_volumes(&vols)?;
        Ok(RunResult { config: rc.clone(), outputs: outs.clone(), summary, density })
    });
    Ok((results.into_iter().collect::<Result<Vec<_>>>()?, timings))
}

/// Runs every job in memory without touching disk.
pub fn run_in_memory(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<RunResult>> {
    execute(cfg, opts, |_, _, _| Ok(())).map(|(r, _)| r)
}

/// Runs a saved experiment and writes outputs, densities and `runs.jsonl`.
/// Existing output files must match the recomputed bytes.
pub fn run_experiment(store: &Store, id: &str, opts: &RunOptions) -> Result<Vec<RunSummary>> {
    let cfg = store.load_experiment(id)?;
    store.mark_running(id)?;
    let res = (|| -> Result<Vec<RunSummary>> {
        let (results, timings) = execute(&cfg, opts, |run, seed_index, out| store.save_output(id, run, seed_index, out))?;
        for r in &results {
            store.save_density(id, r.config.run_index, &r.density)?;
        }
        let records: Vec<RunRecord> = results.iter().map(|r| RunRecord::from(&r.summary)).collect();
        store.write_runs_table(id, &records)?;
        for t in &timings {
            let line = serde_json::json!({
                "run_index": t.run_index,
                "seed_index": t.seed_index,
                "wall_seconds": t.wall_seconds,
            });
            store.append_wallclock(id, &line.to_string())?;
        }
        Ok(results.into_iter().map(|r| r.summary).collect())
    })();
    match &res {
        Ok(_) => store.mark_finished(id, None)?,
        Err(e) => store.mark_finished(id, Some(&e.to_string()))?,
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamKind;
    use crate::recipe::{Ingredient, PackingVolume, Recipe};
    use crate::sampler::ParameterSpec;
    use crate::store::Status;

    fn cfg() -> ExperimentConfig {
        let recipe = Recipe::new("r", PackingVolume::plane2d(60.0, 60.0), 2.0, vec![Ingredient::new("s", 5.0, 8)]);
        let spec = ParameterSpec::even("ingredient.s.nb_jitter", ParamKind::Integer, 1.0, 20.0, 2);
        let mut c = ExperimentConfig::new(recipe, vec![spec], 2, 3).with_base_seed(5);
        c.density_dims = [8, 8, 1];
        c
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let a = run_in_memory(&cfg(), &RunOptions::new(Parallelism::Sequential)).unwrap();
        let b = run_in_memory(&cfg(), &RunOptions::new(Parallelism::Threads(3))).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.outputs, y.outputs);
            assert_eq!(x.summary, y.summary);
            assert_eq!(x.density, y.density);
        }
        assert!(a.iter().all(|r| r.outputs.iter().all(|o| o.config_ref.run_index == r.config.run_index)));
    }

    #[test]
    fn stored_run_reaches_done_and_reruns_cleanly() {
        let tmp = tempfile::tempdir().unwrap();
        let store = Store::open(tmp.path()).unwrap();
        let id = store.save_experiment(&cfg()).unwrap().id;
        let progress = Arc::new(AtomicUsize::new(0));
        let opts = RunOptions { parallelism: Parallelism::Auto, progress: Some(progress.clone()) };
        run_experiment(&store, &id, &opts).unwrap();
        assert_eq!(progress.load(Ordering::Relaxed), 6);
        let st = store.status(&id).unwrap();
        assert_eq!((st.status, st.completed_jobs), (Status::Done, 6));
        let first = std::fs::read(store.runs_table_path(&id)).unwrap();
        run_experiment(&store, &id, &RunOptions::default()).unwrap();
        assert_eq!(std::fs::read(store.runs_table_path(&id)).unwrap(), first);
        assert_eq!(store.read_runs_table(&id).unwrap().len(), 2);
        assert!(store.density_dir(&id, 1).join("proj_z.pgm").is_file());
    }
}
