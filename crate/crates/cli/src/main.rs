use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use packlab_cli::filter::parse_row;
use packlab_core::par::Parallelism;
use packlab_core::recipe::parse_recipe;
use packlab_core::runner::{run_experiment, RunOptions};
use packlab_core::sampler::{export_experiment, ExperimentConfig};
use packlab_core::store::Store;
use packlab_core::xfilter;
use packlab_service::AppState;

const DEFAULT_DATA_DIR: &str = "packlab-data";

#[derive(Parser)]
#[command(name = "pack", version, about = "Set up, run and analyze loose-packing experiments")]
struct Cli {
    /// Data directory holding experiments/ and recipes/.
    /// Falls back to the experiment's output_location, then ./packlab-data.
    #[arg(long, global = true, env = "PACKLAB_DATA")]
    data: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and save a recipe and/or an experiment document.
    Setup {
        #[arg(long)]
        recipe: Option<PathBuf>,
        #[arg(long)]
        experiment: Option<PathBuf>,
    },
    /// Run an experiment given its id or document path (saving it first).
    Run {
        #[arg(long)]
        experiment: String,
        /// Worker threads; defaults to the number of logical cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print the run metrics table, or answer a filter query.
    #[command(after_help = "FILTERS:\n  name=[lo,hi]   closed interval on a numeric dimension\n  name={a,b}     set of values on a categorical dimension\n  Repeated --filter flags are combined with AND.")]
    Analyze {
        #[arg(long)]
        experiment: String,
        #[arg(long = "filter")]
        filters: Vec<String>,
        /// List the matching runs with their seeds.
        #[arg(long)]
        list: bool,
        /// Print a histogram of this dimension for the filtered row.
        #[arg(long)]
        hist: Option<String>,
        #[arg(long, default_value_t = xfilter::DEFAULT_BINS)]
        bins: usize,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Print the self-contained experiment document.
    Export {
        #[arg(long)]
        experiment: String,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of static files served for non-API paths.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn data_dir(flag: &Option<PathBuf>, cfg: Option<(&ExperimentConfig, &Path)>) -> PathBuf {
    if let Some(d) = flag {
        return d.clone();
    }
    match cfg {
        Some((c, base)) if !c.output_location.is_empty() => base.join(&c.output_location),
        _ => PathBuf::from(DEFAULT_DATA_DIR),
    }
}

/// `arg` is either a path to an experiment document or a stored id.
fn resolve_experiment(data: &Option<PathBuf>, arg: &str) -> Result<(Store, String)> {
    let path = Path::new(arg);
    if path.is_file() {
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = ExperimentConfig::load(path).with_context(|| format!("loading {arg}"))?;
        let store = Store::open(data_dir(data, Some((&cfg, base))))?;
        let rec = store.save_experiment(&cfg)?;
        return Ok((store, rec.id));
    }
    let store = Store::open(data_dir(data, None))?;
    if !store.exists(arg) {
        bail!("{arg} is neither an experiment file nor a stored experiment id in {}", store.root().display());
    }
    Ok((store, arg.to_string()))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Setup { recipe, experiment } => {
            if recipe.is_none() && experiment.is_none() {
                bail!("nothing to set up: pass --recipe and/or --experiment");
            }
            if let Some(path) = recipe {
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let r = parse_recipe(&text).with_context(|| format!("invalid recipe {}", path.display()))?;
                let store = Store::open(data_dir(&cli.data, None))?;
                store.save_recipe(&r)?;
                println!("recipe {} ok", r.name);
            }
            if let Some(path) = experiment {
                let arg = path.to_string_lossy().into_owned();
                if !path.is_file() {
                    bail!("{arg}: no such file");
                }
                let (store, id) = resolve_experiment(&cli.data, &arg)?;
                let st = store.status(&id)?;
                println!("{id}");
                eprintln!("experiment saved: {} jobs, status {:?}", st.total_jobs, st.status);
            }
            Ok(())
        }
        Command::Run { experiment, jobs } => {
            let (store, id) = resolve_experiment(&cli.data, &experiment)?;
            let opts = RunOptions::new(Parallelism::from_jobs(jobs));
            let summaries = run_experiment(&store, &id, &opts)?;
            println!("{id}");
            eprintln!(
                "{} runs, {} outputs written to {}",
                summaries.len(),
                store.completed_jobs(&id),
                store.experiment_dir(&id).display()
            );
            Ok(())
        }
        Command::Analyze { experiment, filters, list, hist, bins, json } => {
            let (store, id) = resolve_experiment(&cli.data, &experiment)?;
            let records = store
                .read_runs_table(&id)
                .with_context(|| format!("experiment {id} has no results; run it first"))?;
            let table = xfilter::load_records(&records)?;
            let row = parse_row(&filters)?;
            if let Some(dim) = hist {
                let h = table.histogram(&row, &dim, bins)?;
                if json {
                    println!("{}", serde_json::to_string_pretty(&h)?);
                } else {
                    print_histogram(&h);
                }
            } else if list {
                let runs = table.list_matching_runs(&row)?;
                if json {
                    println!("{}", serde_json::to_string_pretty(&runs)?);
                } else {
                    for r in runs {
                        let seeds: Vec<String> = r.seeds.iter().map(|s| s.to_string()).collect();
                        println!("{}\t{}", r.run_index, seeds.join(","));
                    }
                }
            } else {
                let keep = table.apply_filters(&row)?;
                let shown: Vec<_> = records.iter().filter(|r| keep.binary_search(&r.run_index).is_ok()).collect();
                if json {
                    let v: Vec<_> = shown.iter().map(|r| r.to_value()).collect();
                    println!("{}", serde_json::to_string_pretty(&v)?);
                } else {
                    print_metrics(&shown);
                }
            }
            Ok(())
        }
        Command::Export { experiment, output } => {
            let (store, id) = resolve_experiment(&cli.data, &experiment)?;
            let doc = export_experiment(&store.load_experiment(&id)?)?;
            match output {
                Some(p) => std::fs::write(&p, doc).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{doc}"),
            }
            Ok(())
        }
        Command::Serve { port, host, static_dir, jobs } => {
            tracing_subscriber::fmt().with_writer(std::io::stderr).init();
            let store = Store::open(data_dir(&cli.data, None))?;
            let mut state = AppState::new(store, Parallelism::from_jobs(jobs));
            if let Some(dir) = static_dir {
                state = state.with_static_dir(dir);
            }
            let addr: SocketAddr = format!("{host}:{port}").parse().context("invalid --host/--port")?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(packlab_service::serve(addr, state))?;
            Ok(())
        }
    }
}

fn print_metrics(records: &[&packlab_core::metrics::RunRecord]) {
    let Some(first) = records.first() else {
        println!("(no matching runs)");
        return;
    };
    let params: Vec<&String> = first.params.keys().collect();
    let metrics: Vec<&String> = first.metrics.keys().filter(|k| !k.contains('.')).collect();
    let mut header = vec!["run".to_string()];
    header.extend(params.iter().map(|s| s.to_string()));
    header.extend(metrics.iter().map(|s| s.to_string()));
    println!("{}", header.join("\t"));
    for r in records {
        let mut cells = vec![r.run_index.to_string()];
        cells.extend(params.iter().map(|k| r.params.get(*k).map(|v| v.to_string()).unwrap_or_default()));
        cells.extend(metrics.iter().map(|k| r.metrics.get(*k).map(|v| format!("{v:.6}")).unwrap_or_default()));
        println!("{}", cells.join("\t"));
    }
}

fn print_histogram(h: &xfilter::Histogram) {
    println!("{}\tfiltered\tall", h.dimension);
    if let Some(edges) = &h.edges {
        for (i, w) in edges.windows(2).enumerate() {
            let close = if i + 2 == edges.len() { "]" } else { ")" };
            println!("[{}, {}{close}\t{}\t{}", w[0], w[1], h.filtered_counts[i], h.full_counts[i]);
        }
    } else if let Some(cats) = &h.categories {
        for (i, c) in cats.iter().enumerate() {
            println!("{c}\t{}\t{}", h.filtered_counts[i], h.full_counts[i]);
        }
    }
}
