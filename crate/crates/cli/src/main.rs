//! Runs timed workloads against the tree variants and emits one CSV row per
//! trial (or per configuration with `--summary`).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use batree::workload::{self, BenchVariant, Distribution, Mix, QueryKind, TrialStats, WorkloadConfig};
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl From<Switch> for bool {
    fn from(s: Switch) -> bool {
        s == Switch::On
    }
}

#[derive(Parser, Debug)]
#[command(name = "batree", version, about = "Throughput and propagation metrics for the balanced augmented tree")]
struct Args {
    /// Variants to run, comma separated: bat, bat-del, bat-eagerdel, unbalanced-baseline.
    #[arg(long, value_delimiter = ',', default_value = "bat")]
    variant: Vec<BenchVariant>,

    /// Worker thread counts to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    threads: Vec<usize>,

    /// Keys are drawn from [0, max-key).
    #[arg(long, default_value_t = 100_000)]
    max_key: u64,

    /// Width of each range query.
    #[arg(long, default_value_t = 100)]
    rq_size: u64,

    /// Insert, delete, find and query percentages as i:d:f:q.
    #[arg(long, default_value = "50:50:0:0")]
    mix: Mix,

    /// What the query share runs: range, rank or select.
    #[arg(long, default_value = "range")]
    query_kind: QueryKind,

    /// Key distribution: uniform, zipf, zipf:<theta> or sorted.
    #[arg(long, default_value = "uniform")]
    dist: Distribution,

    /// Length of each timed trial.
    #[arg(long, default_value_t = 1.0)]
    seconds: f64,

    /// Trials per configuration.
    #[arg(long, default_value_t = 3)]
    trials: usize,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Fill half the key range before timing.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    prefill: Switch,

    /// Emit one averaged row per configuration instead of one per trial.
    #[arg(long)]
    summary: bool,

    /// Write CSV here instead of standard output.
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Pin worker threads to cores.
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pin: Switch,

    /// Time one operation in this many.
    #[arg(long, default_value_t = 64)]
    latency_every: u64,
}

impl Args {
    fn configs(&self) -> Vec<WorkloadConfig> {
        let mut out = Vec::new();
        for &variant in &self.variant {
            for &threads in &self.threads {
                out.push(WorkloadConfig {
                    variant,
                    threads,
                    max_key: self.max_key,
                    rq_size: self.rq_size,
                    mix: self.mix,
                    query: self.query_kind,
                    dist: self.dist,
                    seconds: self.seconds,
                    trials: self.trials,
                    seed: self.seed,
                    prefill: self.prefill.into(),
                    pin: self.pin.into(),
                    latency_every: self.latency_every,
                });
            }
        }
        out
    }
}

fn run(args: &Args) -> Result<Vec<TrialStats>, String> {
    let configs = args.configs();
    for cfg in &configs {
        cfg.validate().map_err(|e| format!("invalid configuration: {e}"))?;
    }
    let mut rows = Vec::new();
    for cfg in &configs {
        let mut trials = Vec::with_capacity(cfg.trials);
        for i in 0..cfg.trials {
            let t = workload::run_trial(cfg, i).map_err(|e| e.to_string())?;
            eprintln!(
                "{} threads={} trial={i}: {} ops/s, {} nodes/propagate, height {}",
                cfg.variant,
                cfg.threads,
                workload::sig6(t.metrics.throughput),
                workload::sig6(t.metrics.avg_nodes_per_propagate),
                t.metrics.height
            );
            trials.push(t);
        }
        if args.summary {
            rows.extend(workload::summarize(&trials));
        } else {
            rows.extend(trials);
        }
    }
    Ok(rows)
}

fn emit(args: &Args, rows: &[TrialStats]) -> Result<(), String> {
    match &args.csv {
        Some(path) => {
            let fail = |e: &dyn std::fmt::Display| format!("cannot write {}: {e}", path.display());
            let file = File::create(path).map_err(|e| fail(&e))?;
            let mut out = BufWriter::new(file);
            workload::write_csv(&mut out, rows).map_err(|e| fail(&e))?;
            out.flush().map_err(|e| fail(&e))
        }
        None => {
            let stdout = io::stdout();
            workload::write_csv(stdout.lock(), rows).map_err(|e| format!("cannot write to standard output: {e}"))
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args).and_then(|rows| emit(&args, &rows)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_library() {
        let args = Args::parse_from(["batree"]);
        let cfg = &args.configs()[0];
        let d = WorkloadConfig::default();
        assert_eq!(cfg.max_key, d.max_key);
        assert_eq!(cfg.trials, d.trials);
        assert_eq!(cfg.seconds, d.seconds);
        assert_eq!(cfg.mix, d.mix);
        assert_eq!(cfg.prefill, d.prefill);
        assert_eq!(cfg.pin, d.pin);
    }

    #[test]
    fn lists_expand_to_every_combination() {
        let args = Args::parse_from(["batree", "--variant", "bat,unbalanced-baseline", "--threads", "1,2,4"]);
        let cfgs = args.configs();
        assert_eq!(cfgs.len(), 6);
        assert_eq!(cfgs[5].variant, BenchVariant::UnbalancedBaseline);
        assert_eq!(cfgs[5].threads, 4);
    }

    #[test]
    fn value_syntax() {
        let args = Args::parse_from([
            "batree",
            "--mix",
            "10-10-40-40",
            "--dist",
            "zipf:0.99",
            "--prefill",
            "off",
            "--pin",
            "on",
        ]);
        assert_eq!(args.mix, Mix::new(10, 10, 40, 40));
        assert_eq!(args.dist, Distribution::Zipf(0.99));
        assert!(!bool::from(args.prefill));
        assert!(bool::from(args.pin));
        assert!(Args::try_parse_from(["batree", "--variant", "avl"]).is_err());
        assert!(Args::try_parse_from(["batree", "--prefill", "maybe"]).is_err());
    }
}
