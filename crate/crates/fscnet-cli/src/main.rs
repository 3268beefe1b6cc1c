//! Command-line driver: single runs, multi-seed sweeps, ablation grids,
//! and markdown reports.
//!
//! Progress goes to standard error; CSV results go to files under the
//! output directory; only the `report` subcommand writes to standard
//! output (its markdown document).

use clap::{Args, Parser, Subcommand};
use fscnet::baselines::{run_ewc, run_finetune, run_replay_only, run_si};
use fscnet::data::{
    data_dir_from_env, load_cifar10, load_mnist, retrieval_instructions, split_tasks, TaskSplit,
    CIFAR_FILES, MNIST_FILES,
};
use fscnet::metrics::AccuracyMatrix;
use fscnet::protocol::{run_sequence, FscConfig};
use fscnet::records::{config_hash, RunRecord, CSV_HEADER};
use fscnet::stats::{mean_std_ci, paired_t};
use fscnet::{FscError, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "fscnet", version, about = "Dual-network continual learning experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One seeded run of one method; writes a single-row CSV.
    Run(RunArgs),
    /// Multi-seed runs plus an aggregate statistics block.
    Sweep(SweepArgs),
    /// One of the predefined ablation grids over the given seeds.
    Ablate(AblateArgs),
    /// Markdown summary tables recomputed from result CSVs.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// mnist or cifar10
    #[arg(long, default_value = "mnist")]
    dataset: String,
    /// Directory holding mnist/ and cifar10/ raw files
    /// (falls back to $FSCNET_DATA_DIR).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Where result CSVs are written.
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// Config override, repeatable: --set key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// fscnet, finetune, replay, ewc, or si
    #[arg(long, default_value = "fscnet")]
    method: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "fscnet")]
    method: String,
    /// Comma list and/or inclusive ranges: "42,43" or "42-46".
    #[arg(long, default_value = "42-44")]
    seeds: String,
    /// Parallel worker slots.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    /// lambda_consol, buffer_size, clamp, arch, or components.
    #[arg(long)]
    ablate: String,
    #[arg(long, default_value = "42")]
    seeds: String,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Result CSVs produced by run/sweep/ablate.
    #[arg(required = true)]
    csvs: Vec<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Ablate(a) => cmd_ablate(a),
        Cmd::Report(a) => cmd_report(a),
    }
}

/// Parse "42,43" / "42-46" / mixes of both.
fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((lo, hi)) = part.split_once('-') {
            let lo: u64 = lo.trim().parse().map_err(|_| bad_seed(part))?;
            let hi: u64 = hi.trim().parse().map_err(|_| bad_seed(part))?;
            if hi < lo {
                return Err(bad_seed(part));
            }
            seeds.extend(lo..=hi);
        } else {
            seeds.push(part.parse().map_err(|_| bad_seed(part))?);
        }
    }
    if seeds.is_empty() {
        return Err(FscError::Parameter(format!("no seeds in {spec:?}")));
    }
    Ok(seeds)
}

fn bad_seed(part: &str) -> FscError {
    FscError::Parameter(format!("bad seed spec {part:?}"))
}

fn build_config(set: &[String]) -> Result<FscConfig> {
    let mut cfg = FscConfig::default();
    for kv in set {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            FscError::Parameter(format!("--set expects key=value, got {kv:?}"))
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn resolve_data_dir(flag: &Option<PathBuf>) -> Result<PathBuf> {
    flag.clone()
        .or_else(data_dir_from_env)
        .ok_or_else(|| {
            FscError::Parameter(
                "no data directory: pass --data-dir or set FSCNET_DATA_DIR".into(),
            )
        })
}

fn load_tasks(dataset: &str, data_dir: &Path) -> Result<Vec<TaskSplit>> {
    let (sub, files): (&str, &[&str]) = match dataset {
        "mnist" => ("mnist", &MNIST_FILES),
        "cifar10" => ("cifar10", &CIFAR_FILES),
        other => {
            return Err(FscError::Parameter(format!(
                "unknown dataset {other:?} (mnist or cifar10)"
            )))
        }
    };
    let dir = data_dir.join(sub);
    for f in files {
        if !dir.join(f).exists() {
            return Err(FscError::Parameter(format!(
                "missing {}:\n{}",
                dir.join(f).display(),
                retrieval_instructions(sub)
            )));
        }
    }
    let (train, test) = match dataset {
        "mnist" => load_mnist(&dir)?,
        _ => load_cifar10(&dir)?,
    };
    split_tasks(&std::sync::Arc::new(train), &std::sync::Arc::new(test))
}

const METHODS: [&str; 5] = ["fscnet", "finetune", "replay", "ewc", "si"];

fn validate_method(method: &str) -> Result<()> {
    if METHODS.contains(&method) {
        Ok(())
    } else {
        Err(FscError::Parameter(format!(
            "unknown method {method:?} (fscnet, finetune, replay, ewc, si)"
        )))
    }
}

/// Execute one method at one seed. Methods without a slow network return
/// the same matrix for both slots.
fn run_method(
    method: &str,
    cfg: &FscConfig,
    tasks: &[TaskSplit],
) -> Result<(AccuracyMatrix, AccuracyMatrix)> {
    match method {
        "fscnet" => {
            let (_, m1, m2) = run_sequence(cfg, tasks)?;
            Ok((m1, m2))
        }
        "finetune" => {
            let m = run_finetune(cfg, tasks)?;
            Ok((m.clone(), m))
        }
        "replay" => {
            let m = run_replay_only(cfg, tasks)?;
            Ok((m.clone(), m))
        }
        "ewc" => {
            let m = run_ewc(cfg, tasks, cfg.ewc_strength)?;
            Ok((m.clone(), m))
        }
        "si" => {
            let m = run_si(cfg, tasks, cfg.si_strength, cfg.si_damping)?;
            Ok((m.clone(), m))
        }
        other => Err(FscError::Parameter(format!(
            "unknown method {other:?} (fscnet, finetune, replay, ewc, si)"
        ))),
    }
}

/// One full seeded run, timed, as a RunRecord. `label` is what lands in
/// the CSV method column (ablations use decorated labels).
fn run_labelled(
    label: &str,
    method: &str,
    dataset: &str,
    cfg: &FscConfig,
    seed: u64,
    tasks: &[TaskSplit],
) -> Result<RunRecord> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let hash = config_hash(&cfg.canonical(label, dataset));
    eprintln!("[{label} seed {seed}] starting");
    let t0 = Instant::now();
    let (m1, m2) = run_method(method, &cfg, tasks)?;
    let wall = t0.elapsed().as_secs_f64();
    let rec = RunRecord::from_matrices(
        seed,
        label,
        dataset,
        cfg.lambda_consol,
        &m1,
        &m2,
        hash,
        wall,
    )?;
    eprintln!(
        "[{label} seed {seed}] done in {wall:.1}s: retention nn1 {:.2} nn2 {:.2}, forgetting nn1 {:.2} nn2 {:.2}",
        rec.retention_nn1, rec.retention_nn2, rec.forgetting_nn1, rec.forgetting_nn2
    );
    Ok(rec)
}

/// A job in a sweep/ablate grid: label, underlying method, config, seed.
struct Job {
    label: String,
    method: String,
    cfg: FscConfig,
    seed: u64,
}

/// Run jobs over `jobs` worker threads; results come back in job order.
fn run_jobs(jobs: Vec<Job>, dataset: &str, tasks: &[TaskSplit], workers: usize) -> Result<Vec<RunRecord>> {
    let workers = workers.max(1).min(jobs.len().max(1));
    if workers == 1 {
        return jobs
            .iter()
            .map(|j| run_labelled(&j.label, &j.method, dataset, &j.cfg, j.seed, tasks))
            .collect();
    }
    let next = Mutex::new(0usize);
    let results: Vec<Mutex<Option<Result<RunRecord>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("queue lock");
                    let i = *n;
                    *n += 1;
                    i
                };
                if i >= jobs.len() {
                    break;
                }
                let j = &jobs[i];
                let r = run_labelled(&j.label, &j.method, dataset, &j.cfg, j.seed, tasks);
                *results[i].lock().expect("result lock") = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().expect("result lock").expect("worker filled"))
        .collect()
}

fn write_csv(path: &Path, records: &[RunRecord], trailer: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out.push_str(trailer);
    std::fs::write(path, out)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    validate_method(&a.method)?;
    let cfg = build_config(&a.common.set)?;
    let data_dir = resolve_data_dir(&a.common.data_dir)?;
    let tasks = load_tasks(&a.common.dataset, &data_dir)?;
    let rec = run_labelled(&a.method, &a.method, &a.common.dataset, &cfg, a.seed, &tasks)?;
    let path = a.common.out_dir.join(format!(
        "run_{}_{}_seed{}.csv",
        a.method, a.common.dataset, a.seed
    ));
    write_csv(&path, std::slice::from_ref(&rec), "")?;
    Ok(())
}

/// Aggregate statistics appended to sweep CSVs as `#` comment lines.
fn aggregate_block(records: &[RunRecord]) -> Result<String> {
    let nn1: Vec<f64> = records.iter().map(|r| r.retention_nn1).collect();
    let nn2: Vec<f64> = records.iter().map(|r| r.retention_nn2).collect();
    let fg2: Vec<f64> = records.iter().map(|r| r.forgetting_nn2).collect();
    let mut out = format!("# aggregate seeds={}\n", records.len());
    for (name, vals) in [
        ("retention_nn1", &nn1),
        ("retention_nn2", &nn2),
        ("forgetting_nn2", &fg2),
    ] {
        let (mean, std, lo, hi) = mean_std_ci(vals, 0.95)?;
        out.push_str(&format!(
            "# {name}: mean={mean:.2} std={std:.2} ci95=[{lo:.2},{hi:.2}]\n"
        ));
    }
    let t = paired_t(&nn2, &nn1)?;
    out.push_str(&format!(
        "# paired_t retention nn2 vs nn1: t={:.3} p={:.4} mean_diff={:.2} cohen_d={:.3}\n",
        t.t, t.p, t.mean_diff, t.cohen_d
    ));
    Ok(out)
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let seeds = parse_seeds(&a.seeds)?;
    if seeds.len() < 2 {
        return Err(FscError::Parameter(
            "sweep needs >= 2 seeds for statistics".into(),
        ));
    }
    validate_method(&a.method)?;
    let cfg = build_config(&a.common.set)?;
    let data_dir = resolve_data_dir(&a.common.data_dir)?;
    let tasks = load_tasks(&a.common.dataset, &data_dir)?;
    let jobs: Vec<Job> = seeds
        .iter()
        .map(|&seed| Job {
            label: a.method.clone(),
            method: a.method.clone(),
            cfg: cfg.clone(),
            seed,
        })
        .collect();
    let records = run_jobs(jobs, &a.common.dataset, &tasks, a.jobs)?;
    let trailer = aggregate_block(&records)?;
    eprint!("{trailer}");
    let path = a
        .common
        .out_dir
        .join(format!("sweep_{}_{}.csv", a.method, a.common.dataset));
    write_csv(&path, &records, &trailer)
}

/// The ablation grids. Each returns (label, method, cfg) triples.
fn ablation_grid(axis: &str, base: &FscConfig) -> Result<Vec<(String, String, FscConfig)>> {
    let fs = |cfg: FscConfig, label: String| (label, "fscnet".to_string(), cfg);
    let grid = match axis {
        "lambda_consol" => [0.0, 0.3, 0.5, 1.0]
            .iter()
            .map(|&l| {
                let mut c = base.clone();
                c.lambda_consol = l;
                fs(c, "fscnet".into())
            })
            .collect(),
        "buffer_size" => [50usize, 100, 200, 500]
            .iter()
            .map(|&b| {
                let mut c = base.clone();
                c.buffer_per_task = b;
                fs(c, format!("fscnet[buffer={b}]"))
            })
            .collect(),
        "clamp" => [true, false]
            .iter()
            .map(|&on| {
                let mut c = base.clone();
                c.clamp = on;
                fs(c, format!("fscnet[clamp={}]", if on { "on" } else { "off" }))
            })
            .collect(),
        "arch" => ["simple", "deep"]
            .iter()
            .map(|&v| {
                let mut c = base.clone();
                c.set("arch", v).expect("valid arch");
                fs(c, format!("fscnet[arch={v}]"))
            })
            .collect(),
        "components" => {
            let mut g = vec![fs(base.clone(), "fscnet".into())];
            let mut noc = base.clone();
            noc.consolidation_epochs = 0;
            g.push(fs(noc, "fscnet[no-consolidation]".into()));
            let mut nob = base.clone();
            nob.buffer_per_task = 0;
            nob.p_replay = 0.0;
            g.push(fs(nob, "fscnet[no-buffer]".into()));
            // NN1 with replay but no slow network at all
            g.push(("nn1-only".into(), "replay".into(), base.clone()));
            g
        }
        other => {
            return Err(FscError::Parameter(format!(
                "unknown ablation axis {other:?} (lambda_consol, buffer_size, clamp, arch, components)"
            )))
        }
    };
    Ok(grid)
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let seeds = parse_seeds(&a.seeds)?;
    let base = build_config(&a.common.set)?;
    let grid = ablation_grid(&a.ablate, &base)?;
    let data_dir = resolve_data_dir(&a.common.data_dir)?;
    let tasks = load_tasks(&a.common.dataset, &data_dir)?;
    let jobs: Vec<Job> = grid
        .iter()
        .flat_map(|(label, method, cfg)| {
            seeds.iter().map(|&seed| Job {
                label: label.clone(),
                method: method.clone(),
                cfg: cfg.clone(),
                seed,
            })
        })
        .collect();
    let records = run_jobs(jobs, &a.common.dataset, &tasks, a.jobs)?;
    let path = a
        .common
        .out_dir
        .join(format!("ablate_{}_{}.csv", a.ablate, a.common.dataset));
    write_csv(&path, &records, "")
}

fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| FscError::Format {
        file: path.display().to_string(),
        offset: 0,
        detail: format!("cannot read: {e}"),
    })?;
    let mut records = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == CSV_HEADER {
            continue;
        }
        records.push(RunRecord::parse_csv_row(line).map_err(|e| FscError::Format {
            file: path.display().to_string(),
            offset: 0,
            detail: format!("{e}"),
        })?);
    }
    if records.is_empty() {
        return Err(FscError::Format {
            file: path.display().to_string(),
            offset: 0,
            detail: "no data rows".into(),
        });
    }
    Ok(records)
}

fn mean_std(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let mut all: Vec<(PathBuf, Vec<RunRecord>)> = Vec::new();
    for path in &a.csvs {
        all.push((path.clone(), read_records(path)?));
    }
    // group: dataset -> (method, lambda, hash) -> records
    type Key = (String, String, String);
    let mut datasets: BTreeMap<String, BTreeMap<Key, Vec<&RunRecord>>> = BTreeMap::new();
    for (_, recs) in &all {
        for r in recs {
            datasets
                .entry(r.dataset.clone())
                .or_default()
                .entry((r.method.clone(), format!("{}", r.lambda_consol), r.config_hash.clone()))
                .or_default()
                .push(r);
        }
    }
    let mut out = String::from("# FSC-Net results report\n");
    for (dataset, groups) in &datasets {
        out.push_str(&format!("\n## Dataset: {dataset}\n\n"));
        out.push_str(
            "| method | lambda_consol | seeds | retention_nn1 | retention_nn2 | forgetting_nn1 | forgetting_nn2 | config |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for ((method, lambda, hash), recs) in groups {
            let col = |f: &dyn Fn(&RunRecord) -> f64| {
                let vals: Vec<f64> = recs.iter().map(|r| f(r)).collect();
                let (m, s) = mean_std(&vals);
                format!("{m:.2} ± {s:.2}")
            };
            out.push_str(&format!(
                "| {method} | {lambda} | {} | {} | {} | {} | {} | {hash} |\n",
                recs.len(),
                col(&|r| r.retention_nn1),
                col(&|r| r.retention_nn2),
                col(&|r| r.forgetting_nn1),
                col(&|r| r.forgetting_nn2),
            ));
        }
        // paired comparison when both networks are real (fscnet rows)
        for ((method, lambda, _), recs) in groups {
            if method == "fscnet" && recs.len() >= 2 {
                let nn1: Vec<f64> = recs.iter().map(|r| r.retention_nn1).collect();
                let nn2: Vec<f64> = recs.iter().map(|r| r.retention_nn2).collect();
                if let Ok(t) = paired_t(&nn2, &nn1) {
                    out.push_str(&format!(
                        "\nPaired t (retention NN2 − NN1, λ_consol={lambda}, n={}): t={:.3}, p={:.4}, Δ={:.2}pp, d={:.3}\n",
                        recs.len(),
                        t.t,
                        t.p,
                        t.mean_diff,
                        t.cohen_d
                    ));
                }
            }
        }
    }
    out.push_str("\n## Provenance\n\n");
    for (path, recs) in &all {
        let mut seeds: Vec<u64> = recs.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        let mut hashes: Vec<&str> = recs.iter().map(|r| r.config_hash.as_str()).collect();
        hashes.sort_unstable();
        hashes.dedup();
        out.push_str(&format!(
            "- `{}`: {} rows, seeds {:?}, config hashes {:?}\n",
            path.display(),
            recs.len(),
            seeds,
            hashes
        ));
    }
    print!("{out}");
    Ok(())
}
