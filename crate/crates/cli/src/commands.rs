use crate::experiment::{ExperimentFile, PlannedRun};
use crate::{CompareArgs, EvalArgs, Failure, PlotArgs, TrainArgs, EXIT_OK, EXIT_RUN_FAILURE};
use anyhow::{anyhow, Context};
use serde::Serialize;
use stagerl_core::agents::Checkpoint;
use stagerl_core::harness::{
    self, moving_average, read_episodes_csv, read_summary, train_observed, EvalResult, SUMMARY_JSON,
};
use stagerl_core::RunSummary;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Outcome of one grid cell.
#[derive(Debug)]
pub struct RunReport {
    pub label: String,
    pub dir: PathBuf,
    pub result: Result<RunSummary, String>,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        matches!(&self.result, Ok(s) if s.failed.is_none())
    }

    fn line(&self) -> String {
        match &self.result {
            Ok(s) => {
                let e_start = s.e_start.map_or("-".to_string(), |e| e.to_string());
                let stdev = s.v_stdev.map_or("-".to_string(), |v| format!("{v:.3}"));
                let eval = s.eval.map_or("-".to_string(), |e| format!("{:.3}", e.success_rate));
                let status = s.failed.as_deref().map_or(String::new(), |f| format!(" FAILED: {f}"));
                format!(
                    "{}: e_start={e_start} mean_reward={:.3} v_stdev={stdev} mean_steps={:.2} eval_success={eval}{status}",
                    self.label, s.mean_reward, s.mean_steps
                )
            }
            Err(e) => format!("{}: ERROR: {e}", self.label),
        }
    }
}

/// Trains every planned run below `root`, `jobs` at a time.
pub fn run_experiment(runs: Vec<PlannedRun>, root: &Path, jobs: usize, progress: usize) -> Vec<RunReport> {
    let next = AtomicUsize::new(0);
    let reports = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(runs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(run) = runs.get(i) else { break };
                let dir = root.join(&run.label);
                let mut config = run.config.clone();
                config.output_dir = Some(dir.clone());
                let label = run.label.clone();
                let result = train_observed(&config, |r| {
                    if progress > 0 && r.episode % progress == 0 {
                        eprintln!(
                            "{label}: episode {} reward {:.3} steps {} success {}",
                            r.episode, r.reward, r.steps, r.success
                        );
                    }
                })
                .map(|out| out.summary)
                .map_err(|e| e.to_string());
                let report = RunReport { label, dir, result };
                println!("{}", report.line());
                reports.lock().expect("no poisoned lock").push((i, report));
            });
        }
    });
    let mut reports = reports.into_inner().expect("no poisoned lock");
    reports.sort_by_key(|(i, _)| *i);
    reports.into_iter().map(|(_, r)| r).collect()
}

pub(crate) fn train(args: &TrainArgs) -> Result<i32, Failure> {
    let file = ExperimentFile::load(&args.config, &args.overrides).map_err(Failure::usage)?;
    let runs = file.plan().map_err(Failure::usage)?;
    let root = args.output_root.join(&file.run.name);
    let reports = run_experiment(runs, &root, args.jobs as usize, args.progress);
    let failed = reports.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", reports.len());
        return Ok(EXIT_RUN_FAILURE);
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct EvalOutput<'a> {
    checkpoint: &'a Path,
    seed: u64,
    #[serde(flatten)]
    result: EvalResult,
}

pub(crate) fn eval(args: &EvalArgs) -> Result<i32, Failure> {
    let ckpt = Checkpoint::load(&args.checkpoint).map_err(Failure::usage)?;
    let seed = args.seed.unwrap_or(ckpt.seed);
    let (arm, reward) = (ckpt.arm.clone(), ckpt.reward.clone());
    let mut agent = ckpt.into_agent().map_err(Failure::usage)?;
    let result = harness::evaluate(agent.as_mut(), &arm, &reward, seed, args.trials as usize).map_err(Failure::run)?;
    println!(
        "success_rate={:.4} mean_reward={:.4} mean_steps={:.2} trials={}",
        result.success_rate, result.mean_reward, result.mean_steps, result.trials
    );
    let out = args
        .output
        .clone()
        .unwrap_or_else(|| args.checkpoint.with_file_name("eval.json"));
    let json = serde_json::to_string_pretty(&EvalOutput {
        checkpoint: &args.checkpoint,
        seed,
        result,
    })
    .expect("eval output serializes");
    std::fs::write(&out, json + "\n")
        .with_context(|| format!("writing {}", out.display()))
        .map_err(Failure::run)?;
    Ok(EXIT_OK)
}

/// Run directories named on the command line, expanding parents of runs.
fn expand_run_dirs(paths: &[PathBuf]) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for p in paths {
        if p.join(SUMMARY_JSON).exists() || !p.is_dir() {
            out.push(p.clone());
            continue;
        }
        let mut children: Vec<PathBuf> = std::fs::read_dir(p)
            .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
            .unwrap_or_default();
        children.retain(|c| c.join(SUMMARY_JSON).exists());
        children.sort();
        if children.is_empty() {
            out.push(p.clone());
        } else {
            out.extend(children);
        }
    }
    out
}

pub(crate) fn compare(args: &CompareArgs) -> Result<i32, Failure> {
    let mut summaries = Vec::new();
    let mut invalid = Vec::new();
    for dir in expand_run_dirs(&args.runs) {
        match read_summary(&dir.join(SUMMARY_JSON)) {
            Ok(s) => summaries.push(s),
            Err(e) => invalid.push((dir.display().to_string(), e.to_string())),
        }
    }
    let mut table = harness::compare(&summaries);
    for (label, reason) in &invalid {
        table.push_invalid(label, reason);
    }
    let root = &args.output_root;
    std::fs::create_dir_all(root)
        .with_context(|| format!("creating {}", root.display()))
        .map_err(Failure::run)?;
    let write = |name: &str, body: String| {
        let path = root.join(name);
        std::fs::write(&path, body)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::run)
    };
    write("table.csv", table.to_csv())?;
    let text = table.to_text();
    write("table.txt", text.clone())?;
    print!("{text}");
    if !invalid.is_empty() {
        eprintln!("{} run(s) had unreadable summaries", invalid.len());
        return Ok(EXIT_RUN_FAILURE);
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct PlotRow {
    episode: usize,
    reward: f64,
    steps: f64,
}

/// Name of the series file written into each run directory.
pub fn plot_file_name(window: usize) -> String {
    format!("plot_w{window}.csv")
}

pub(crate) fn plot_data(args: &PlotArgs) -> Result<i32, Failure> {
    let window = args.window as usize;
    for dir in &args.runs {
        let records = read_episodes_csv(&dir.join(harness::EPISODES_CSV)).map_err(Failure::usage)?;
        if window > records.len() {
            return Err(Failure::usage(anyhow!(
                "{}: window {window} exceeds run length {}",
                dir.display(),
                records.len()
            )));
        }
        let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
        let steps: Vec<f64> = records.iter().map(|r| r.steps as f64).collect();
        let rewards = moving_average(&rewards, window).map_err(Failure::usage)?;
        let steps = moving_average(&steps, window).map_err(Failure::usage)?;
        let path = dir.join(plot_file_name(window));
        let mut w = csv::Writer::from_path(&path)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::run)?;
        for (i, (reward, steps)) in rewards.into_iter().zip(steps).enumerate() {
            w.serialize(PlotRow {
                episode: i + window,
                reward,
                steps,
            })
            .map_err(Failure::run)?;
        }
        w.flush().map_err(Failure::run)?;
        println!("{}", path.display());
    }
    Ok(EXIT_OK)
}
