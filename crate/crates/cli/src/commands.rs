use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use adl::oracle::{compare_traces, delayed_replay, sync_ga_sgd};
use adl::scheduler::run as run_schedule;
use adl::staleness::{
    averaged_los, constant_lr, constant_lr_gradient_bound, ergodic_gradient_bound,
    one_step_descent_bound, rational_to_f64, staleness_factor, total_averaged_los, BoundInputs,
};
use adl::trace::{RunSummary, RunTrace};
use adl::Error;

use crate::config::{ExperimentConfig, Mode, TraceLevel};
use crate::{BoundSchedule, BoundsArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

/// Exit code for an error reached before or during computation.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parse(_) | Error::Domain(_) | Error::Dimension(_) | Error::Csv(_) => {
            EXIT_USAGE
        }
        Error::Divergence(_) => EXIT_DIVERGED,
        Error::Protocol(_) | Error::Comparison(_) | Error::Io(_) => EXIT_FAILURE,
    }
}

fn fail(context: &str, err: &Error) -> u8 {
    eprintln!("adl: {context}: {err}");
    exit_code(err)
}

pub fn run(config_path: &Path) -> u8 {
    let cfg = match ExperimentConfig::load(config_path) {
        Ok(cfg) => cfg,
        // an unreadable config is a usage error, not a runtime failure
        Err(Error::Io(e)) => {
            eprintln!("adl: {}: {e}", config_path.display());
            return EXIT_USAGE;
        }
        Err(e) => return fail(&config_path.display().to_string(), &e),
    };
    if cfg.trace_level == TraceLevel::Ticks && matches!(cfg.mode, Mode::SyncGa | Mode::DelayedReplay) {
        eprintln!("adl: invalid configuration: trace_level = \"ticks\" needs an adl-* mode");
        return EXIT_USAGE;
    }
    let train = match cfg.train_config() {
        Ok(t) => t,
        Err(e) => return fail("config", &e),
    };
    let data = match cfg.dataset() {
        Ok(d) => d,
        Err(e) => return fail("data", &e),
    };
    if train.sgd.momentum != 0.0 || train.sgd.weight_decay != 0.0 {
        eprintln!("adl: note: momentum or weight decay is enabled; the convergence bounds assume plain SGD");
    }

    let started = Instant::now();
    let result = match cfg.mode {
        Mode::AdlClocked | Mode::AdlParallel => run_schedule(&train, &data),
        Mode::SyncGa => sync_ga_sgd(&train, &data),
        Mode::DelayedReplay => delayed_replay(&train, &data),
    };
    let elapsed = started.elapsed().as_secs_f64();
    let trace = match result {
        Ok(t) => t,
        Err(e) => return fail("run", &e),
    };

    let splits = if cfg.mode == Mode::SyncGa { 1 } else { train.splits() };
    let summary = RunSummary::new(&trace, splits, train.accumulation, elapsed);
    let out_dir = cfg.output_dir(config_path);
    if let Err(e) = write_outputs(&out_dir, &cfg, &trace, &summary) {
        return fail(&out_dir.display().to_string(), &e);
    }
    print!("{summary}");
    println!("output = {}", out_dir.display());
    if trace.diverged {
        eprintln!(
            "adl: divergence after {} complete updates; partial trace written",
            trace.records.len()
        );
        return EXIT_DIVERGED;
    }
    EXIT_OK
}

fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    trace: &RunTrace,
    summary: &RunSummary,
) -> adl::Result<()> {
    fs::create_dir_all(dir)?;
    trace.write_csv(BufWriter::new(File::create(dir.join("trace.csv"))?))?;
    let mode = match cfg.mode {
        Mode::AdlClocked => "adl-clocked",
        Mode::AdlParallel => "adl-parallel",
        Mode::SyncGa => "sync-ga",
        Mode::DelayedReplay => "delayed-replay",
    };
    let mut text = format!("mode = {mode}\n");
    if cfg.train.momentum != 0.0 || cfg.train.weight_decay != 0.0 {
        text.push_str("# momentum or weight decay enabled: outside the plain-SGD bound assumptions\n");
    }
    text.push_str(&summary.to_string());
    fs::write(dir.join("summary.txt"), text)?;
    if cfg.trace_level == TraceLevel::Ticks {
        trace.write_events_csv(BufWriter::new(File::create(dir.join("events.csv"))?))?;
    }
    Ok(())
}

pub fn staleness_table(splits: u64, accumulation: &[u64]) -> u8 {
    if splits == 0 || accumulation.contains(&0) {
        eprintln!("adl: K and every M must be at least 1");
        return EXIT_USAGE;
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["module".to_string()];
    header.extend(accumulation.iter().map(|m| format!("M={m}")));
    rows.push(header);
    for k in 1..=splits {
        let mut row = vec![k.to_string()];
        for &m in accumulation {
            match averaged_los(splits, k, m) {
                Ok(r) => row.push(r.to_string()),
                Err(e) => return fail("staleness", &e),
            }
        }
        rows.push(row);
    }
    let mut total = vec!["sum".to_string()];
    for &m in accumulation {
        match total_averaged_los(splits, m) {
            Ok(r) => total.push(r.to_string()),
            Err(e) => return fail("staleness", &e),
        }
    }
    rows.push(total);

    let columns = rows[0].len();
    let widths: Vec<usize> = (0..columns)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    println!("# averaged level of staleness per module, K = {splits}");
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:>w$}"))
            .collect();
        println!("{}", cells.join("  ").trim_end());
    }
    println!(
        "# note: module 1 at M=1 has delay 2(K-1) = {}; counting the delay as 2K gives {}",
        2 * (splits - 1),
        2 * splits
    );
    EXIT_OK
}

fn show(x: f64) -> String {
    format!("{x}")
}

pub fn bounds(args: &BoundsArgs) -> u8 {
    if args.staleness_sum.is_none() && args.splits.is_none() {
        eprintln!("adl: bounds needs --staleness-sum or --K");
        return EXIT_USAGE;
    }
    if args.accumulation.is_empty() {
        eprintln!("adl: bounds needs at least one --M value");
        return EXIT_USAGE;
    }
    for (i, &m) in args.accumulation.iter().enumerate() {
        if i > 0 {
            println!();
        }
        if let Err(e) = bounds_report(args, m) {
            return fail("bounds", &e);
        }
    }
    EXIT_OK
}

fn bounds_report(args: &BoundsArgs, accumulation: u64) -> adl::Result<()> {
    let (staleness_sum, exact) = match (args.staleness_sum, args.splits) {
        (Some(sum), _) => (sum, None),
        (None, Some(k)) => {
            let r = total_averaged_los(k, accumulation)?;
            (rational_to_f64(r), Some(r))
        }
        (None, None) => unreachable!("checked by caller"),
    };
    let mut inputs = BoundInputs {
        lr: 0.0,
        grad_norm_sq: args.grad_norm_sq.unwrap_or(0.0),
        grad_bound: args.grad_bound,
        lipschitz: args.lipschitz,
        accumulation,
        staleness_sum,
        updates: args.updates,
        initial_gap: args.initial_gap,
        epsilon: args.epsilon,
    };
    let balanced = constant_lr(&inputs)?;
    let balanced_bound = constant_lr_gradient_bound(&inputs)?;
    let lr = args.lr.unwrap_or(balanced.lr);
    if !(lr >= 0.0) {
        return Err(Error::Domain(format!("learning rate {lr} is negative")));
    }
    inputs.lr = lr;

    println!("M = {accumulation}");
    match exact {
        Some(r) => println!("staleness_sum = {r} ({})", show(staleness_sum)),
        None => println!("staleness_sum = {}", show(staleness_sum)),
    }
    println!(
        "staleness_factor = {}",
        show(staleness_factor(accumulation, staleness_sum))
    );
    let admissible = args.lipschitz * lr <= 1.0;
    println!(
        "lr = {}  L*lr = {}{}",
        show(lr),
        show(args.lipschitz * lr),
        if admissible { "" } else { "  VIOLATION: L*lr > 1" }
    );
    match (args.grad_norm_sq, admissible) {
        (None, _) => println!("descent_bound = n/a (needs --grad-norm-sq)"),
        (Some(_), false) => println!("descent_bound = n/a (L*lr > 1)"),
        (Some(_), true) => println!("descent_bound = {}", show(one_step_descent_bound(&inputs)?)),
    }
    if admissible && lr > 0.0 {
        let schedule: Vec<f64> = (0..args.updates)
            .map(|s| match args.schedule {
                BoundSchedule::Constant => lr,
                BoundSchedule::Harmonic => lr / (s + 1) as f64,
            })
            .collect();
        println!(
            "ergodic_bound = {}",
            show(ergodic_gradient_bound(&inputs, &schedule)?)
        );
    } else {
        println!("ergodic_bound = n/a (needs 0 < L*lr <= 1)");
    }
    println!(
        "balanced_lr = {}{}",
        show(balanced.lr),
        if balanced.admissible { "" } else { "  VIOLATION: L*lr > 1" }
    );
    println!("balanced_bound = {}", show(balanced_bound));
    Ok(())
}

pub fn compare(a: &Path, b: &Path, tol: f64) -> u8 {
    let load = |path: &Path| -> adl::Result<RunTrace> { RunTrace::read_csv(File::open(path)?) };
    let (ta, tb) = match (load(a), load(b)) {
        (Ok(ta), Ok(tb)) => (ta, tb),
        (Err(e), _) => {
            eprintln!("adl: {}: {e}", a.display());
            return EXIT_USAGE;
        }
        (_, Err(e)) => {
            eprintln!("adl: {}: {e}", b.display());
            return EXIT_USAGE;
        }
    };
    match compare_traces(&ta, &tb, tol) {
        Ok(report) => {
            println!("{report}");
            if report.pass {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(Error::Comparison(msg)) => {
            println!("result = fail ({msg})");
            EXIT_FAILURE
        }
        Err(e) => fail("compare", &e),
    }
}
