use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use driftlab::plan::Plan;
use driftlab::report::fmt_alpha;
use driftlab::run;
use driftlab_core::strategies::DetectorKind;
use driftlab_core::synth::SynthKind;

/// Label-free drift detection experiments.
#[derive(Parser)]
#[command(name = "driftlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic stream (CSV) and its drift schedule.
    Synth {
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run every strategy of a plan and write its reports.
    Run {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Calibrate a detector's alpha on the plan's validation range.
    Calibrate {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        strategy: Detector,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Friedman,
    Mixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum Detector {
    Udd,
    Kswin,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("driftlab: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> driftlab::Result<()> {
    match cmd {
        Command::Synth { kind, out, seed } => {
            let kind = match kind {
                Kind::Friedman => SynthKind::Friedman,
                Kind::Mixed => SynthKind::Mixed,
            };
            let (csv, schedule) = run::cmd_synth(kind, &out, seed)?;
            println!("{}\n{}", csv.display(), schedule.display());
        }
        Command::Run { plan } => {
            let plan = Plan::load(&plan)?;
            let outcome = run::cmd_run(&plan)?;
            print!("{}", driftlab::report::results_csv(&outcome.rows)?);
            for (label, r) in outcome.detection_reports()? {
                let mtd = r.mtd.map_or_else(|| "-".to_string(), |m| format!("{m:.1}"));
                println!("{label}: MTD {mtd} FAC {} MDC {}", r.fac, r.mdc);
            }
            println!("reports written to {}", outcome.out_dir.display());
        }
        Command::Calibrate { plan, strategy } => {
            let plan = Plan::load(&plan)?;
            let kind = match strategy {
                Detector::Udd => DetectorKind::Udd,
                Detector::Kswin => DetectorKind::Kswin,
            };
            let cal = run::cmd_calibrate(&plan, kind)?;
            let note = if cal.fallback {
                " (default: no grid value detected a change)"
            } else {
                ""
            };
            println!("alpha = {}{note}", fmt_alpha(cal.alpha));
            println!("alpha,detections");
            for (a, n) in &cal.counts {
                println!("{},{n}", fmt_alpha(*a));
            }
        }
    }
    Ok(())
}
