use std::path::{Path, PathBuf};

use clap::Args;
use surprise_rl::harness::{final_window, smooth, MetricsLog, WindowSummary};

use crate::{CliResult, Failure};

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Run directories, each holding a metrics.csv.
    #[arg(required = true, num_args = 2..)]
    runs: Vec<PathBuf>,
    /// Number of trailing evaluations to average.
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Exponential smoothing weight in [0, 1).
    #[arg(long, default_value_t = 0.5)]
    smoothing: f64,
    /// Long-format CSV of the smoothed curves; defaults to comparison.csv next
    /// to the first run directory.
    #[arg(long)]
    csv: Option<PathBuf>,
}

struct Run {
    label: String,
    log: MetricsLog,
    summary: WindowSummary,
}

fn label(dir: &Path) -> String {
    dir.file_name()
        .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn load(dir: &Path, window: usize, smoothing: f64) -> CliResult<Run> {
    let path = dir.join("metrics.csv");
    if !path.is_file() {
        return Err(Failure::Usage(format!("no metrics.csv in {}", dir.display())));
    }
    let log = MetricsLog::read(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let summary =
        final_window(&log, window, smoothing).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(Run {
        label: label(dir),
        log,
        summary,
    })
}

fn write_long(path: &Path, runs: &[Run], smoothing: f64) -> CliResult {
    let io = |e: csv::Error| Failure::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["run", "update", "steps", "split", "score", "smoothed"])
        .map_err(io)?;
    for run in runs {
        let evals: Vec<_> = run.log.evaluations().collect();
        let train: Vec<f64> = evals.iter().map(|e| e.1).collect();
        let test: Vec<f64> = evals.iter().map(|e| e.2).collect();
        for (split, raw) in [("train", &train), ("test", &test)] {
            for ((rec, _, _), (score, smoothed)) in evals.iter().zip(raw.iter().zip(smooth(raw, smoothing))) {
                w.write_record([
                    run.label.as_str(),
                    &rec.update.to_string(),
                    &rec.steps.to_string(),
                    split,
                    &score.to_string(),
                    &smoothed.to_string(),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush()
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

pub fn run(args: CompareArgs) -> CliResult {
    if args.window == 0 {
        return Err(Failure::Usage("--window must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&args.smoothing) {
        return Err(Failure::Usage("--smoothing must lie in [0, 1)".into()));
    }
    let runs = args
        .runs
        .iter()
        .map(|dir| load(dir, args.window, args.smoothing))
        .collect::<CliResult<Vec<_>>>()?;

    let width = runs.iter().map(|r| r.label.len()).max().unwrap_or(3).max(3);
    println!(
        "{:<width$}  {:>5}  {:>8}  {:>8}  {:>8}",
        "run", "evals", "train", "test", "gap"
    );
    for r in &runs {
        let s = r.summary;
        println!(
            "{:<width$}  {:>5}  {:>8.3}  {:>8.3}  {:>8.3}",
            r.label, s.evaluations, s.train, s.test, s.gap
        );
    }

    let out = args.csv.clone().unwrap_or_else(|| {
        args.runs[0]
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("comparison.csv")
    });
    write_long(&out, &runs, args.smoothing)?;
    println!("curves written to {}", out.display());
    Ok(())
}
