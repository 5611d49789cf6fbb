//! Command-line surface for the impact pipeline: ingest, segment, measure,
//! fit, report, plus synthetic tape generation and oracle checks.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "impactlab", version, about = "Metaorder impact measurement pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Input tape (CSV or binary; auto-detected unless --format is given).
    #[arg(long)]
    input: PathBuf,
    /// Force the input format.
    #[arg(long, value_parser = ["csv", "binary"])]
    format: Option<String>,
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Output directory (falls back to $IMPACTLAB_OUT, then ".").
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel stages; 0 uses all cores. Outputs are
    /// identical for any worker count.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl OutArgs {
    fn dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            std::env::var_os("IMPACTLAB_OUT")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."))
        })
    }
}

#[derive(Args, Clone)]
struct SegArgs {
    /// Inactivity threshold in seconds.
    #[arg(long, default_value_t = 3600.0)]
    t_inact: f64,
    /// Keep mean-reverting round-trip metaorders instead of dropping them.
    #[arg(long)]
    keep_mean_reverting: bool,
    /// Leave direction-reversing trades unassigned instead of opening a new
    /// metaorder with them.
    #[arg(long)]
    reversal_unassigned: bool,
}

impl SegArgs {
    fn config(&self) -> impactlab::segmenter::SegmentationConfig {
        impactlab::segmenter::SegmentationConfig {
            t_inact_secs: self.t_inact,
            drop_mean_reverting: !self.keep_mean_reverting,
            reversal_starts_new: !self.reversal_unassigned,
        }
    }
}

#[derive(Args, Clone)]
struct BinArgs {
    /// Volume bins per decade for the peak curve.
    #[arg(long, default_value_t = 8)]
    bins_per_decade: usize,
    /// Participation-rate bins per decade for the surface.
    #[arg(long, default_value_t = 4)]
    muv_bins_per_decade: usize,
    /// Minimum population per reported bin or cell.
    #[arg(long, default_value_t = 50)]
    n_min: usize,
}

#[derive(Args, Clone)]
struct IsolationArgs {
    /// Minimum own share of the signed window imbalance.
    #[arg(long, default_value_t = 0.75)]
    threshold: f64,
    /// Window length in units of the metaorder duration.
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
}

impl IsolationArgs {
    fn config(&self) -> impactlab::impact::IsolationConfig {
        impactlab::impact::IsolationConfig {
            threshold: self.threshold,
            horizon_mult: self.horizon,
        }
    }
}

#[derive(Args, Clone)]
struct EventStudyArgs {
    /// Pre-window length in units of T.
    #[arg(long, default_value_t = 1.0)]
    pre: f64,
    /// Post-window length in units of T.
    #[arg(long, default_value_t = 10.0)]
    post: f64,
    /// Grid points across the execution phase.
    #[arg(long, default_value_t = 21)]
    points: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a tape and write its binary twin plus an ingest report.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Reconstruct metaorders and export the metaorder table.
    Segment {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        seg: SegArgs,
    },
    /// Impact summaries, the peak-impact curve and its power-law fit.
    Impact {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        seg: SegArgs,
        #[command(flatten)]
        bins: BinArgs,
        /// Also bin in-trajectory samples at volume r*|Q|.
        #[arg(long)]
        in_trajectory: bool,
    },
    /// Daily liquidity series and the Gaussian fit of the Y-ratio.
    Yratio {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        seg: SegArgs,
    },
    /// Execution-impact surface over volume and participation rate.
    Surface {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        seg: SegArgs,
        #[command(flatten)]
        bins: BinArgs,
    },
    /// Event-study curves (unconditioned, trend-conditioned, isolation).
    Eventstudy {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        seg: SegArgs,
        #[command(flatten)]
        es: EventStudyArgs,
        #[command(flatten)]
        isolation: IsolationArgs,
        /// Minimum metaorders per reported bucket.
        #[arg(long, default_value_t = 50)]
        n_min: usize,
    },
    /// Partition metaorders into isolated / informed / excluded.
    Isolate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        seg: SegArgs,
        #[command(flatten)]
        isolation: IsolationArgs,
    },
    /// Metaorder sign autocorrelation and its power-law decay fit.
    Acf {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        seg: SegArgs,
        #[arg(long, default_value_t = 100)]
        max_lag: usize,
        /// Lag fit range.
        #[arg(long, default_value_t = 1)]
        fit_lo: usize,
        #[arg(long, default_value_t = 100)]
        fit_hi: usize,
    },
    /// Generate a synthetic tape plus ground truth from a scenario file.
    Synth {
        /// Scenario JSON; omitted fields take defaults.
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        out: OutArgs,
        /// Tape output format.
        #[arg(long, default_value = "binary", value_parser = ["csv", "binary"])]
        format: String,
    },
    /// Run the full measurement pipeline and write the fit manifest.
    Pipeline {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        seg: SegArgs,
        #[command(flatten)]
        bins: BinArgs,
        #[command(flatten)]
        es: EventStudyArgs,
        #[command(flatten)]
        isolation: IsolationArgs,
        /// Hill-estimator volume threshold in BTC.
        #[arg(long, default_value_t = 10.0)]
        hill_threshold: f64,
        /// ACF maximum lag.
        #[arg(long, default_value_t = 100)]
        max_lag: usize,
    },
    /// Naive reference statistics from a tape and its ground-truth labels.
    Oracle {
        #[command(flatten)]
        input: InputArgs,
        /// Ground-truth CSV (trade_id, metaorder_id).
        #[arg(long)]
        ground_truth: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, not usage errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::classify_exit(&err))
        }
    }
}
