//! Command implementations. Every command loads the tape, runs its stages
//! inside a worker pool of the requested size, and writes plot-ready CSV and
//! JSON artifacts into the output directory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use impactlab::estimators::{fit_gaussian, hill_tail, sign_acf};
use impactlab::export;
use impactlab::impact::{
    self, daily_liquidity_series, event_study, fit_peak_curve, impact_paths, impact_surface,
    peak_impact_curve, select_isolated, BucketSpec, EventStudyConfig, LogBins, SurfaceBinning,
};
use impactlab::segmenter::{
    active_metaorder_series, child_count_table, execution_profile, segment, MetaOrder,
};
use impactlab::synthgen::{self, GroundTruth, SyntheticScenario};
use impactlab::tape::{
    daily_aggregates, parse_binary, parse_csv, write_binary, write_csv, CsvSchema, ParsedTape,
    Tape, TapeIndex, VolEstimator,
};

use crate::manifest::{EstimatorRecord, Manifest};
use crate::{Command, EventStudyArgs, InputArgs, IsolationArgs, OutArgs, SegArgs};

/// Map an error chain onto the documented exit codes: 2 for data problems,
/// 3 for anything internal.
pub fn classify_exit(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<impactlab::tape::TapeError>()
            || cause.is::<impactlab::synthgen::ScenarioError>()
            || cause.is::<impactlab::segmenter::SegmenterError>()
            || cause.is::<impactlab::impact::ImpactError>()
            || cause.is::<impactlab::estimators::EstimatorError>()
            || cause.is::<impactlab::synthgen::OracleError>()
            || cause.is::<std::io::Error>()
        {
            return 2;
        }
    }
    3
}

fn load_tape(args: &InputArgs) -> Result<ParsedTape> {
    let path = &args.input;
    let mut file = BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    );
    let format = match args.format.as_deref() {
        Some(f) => f.to_string(),
        None => {
            let mut magic = [0u8; 4];
            let n = file.read(&mut magic)?;
            // Rewind by reopening; BufReader over File keeps this cheap.
            file = BufReader::new(File::open(path)?);
            if n == 4 && &magic == b"IMPT" {
                "binary".to_string()
            } else {
                "csv".to_string()
            }
        }
    };
    let parsed = match format.as_str() {
        "binary" => parse_binary(file)?,
        _ => parse_csv(file, &CsvSchema::default())?,
    };
    Ok(parsed)
}

fn out_file(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| {
        format!("creating {}", path.display())
    })?))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut f = out_file(dir, name)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if workers == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")?;
    pool.install(f)
}

fn segment_nonempty(tape: &Tape, seg: &SegArgs) -> Result<Vec<MetaOrder>> {
    let metaorders = segment(tape, &seg.config());
    if metaorders.is_empty() {
        bail!(anyhow::Error::from(impactlab::impact::ImpactError::EmptyInput)
            .context("no metaorders in tape"));
    }
    Ok(metaorders)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { input, out } => cmd_ingest(&input, &out),
        Command::Segment { input, out, seg } => in_pool(out.workers, || {
            let parsed = load_tape(&input)?;
            let metaorders = segment_nonempty(&parsed.tape, &seg)?;
            let dir = out.dir();
            let mut f = out_file(&dir, "metaorders.csv")?;
            export::write_metaorders(&mut f, &metaorders, &parsed.tape)?;
            let table = child_count_table(&metaorders).context("stage child_count_table")?;
            let mut f = out_file(&dir, "child_counts.csv")?;
            export::write_child_counts(&mut f, &table)?;
            println!("segmented {} metaorders from {} trades", metaorders.len(), parsed.tape.len());
            Ok(())
        }),
        Command::Impact {
            input,
            out,
            seg,
            bins,
            in_trajectory,
        } => in_pool(out.workers, || {
            let parsed = load_tape(&input)?;
            let tape = &parsed.tape;
            let metaorders = segment_nonempty(tape, &seg)?;
            let index = TapeIndex::new(tape);
            let summaries = impact::summarize_all(tape, &index, &metaorders);
            let binning = LogBins {
                bins_per_decade: bins.bins_per_decade,
                n_min: bins.n_min,
            };
            let paths = if in_trajectory {
                impact_paths(tape, &metaorders, 41)
            } else {
                Vec::new()
            };
            let curve = peak_impact_curve(&summaries, &paths, binning, in_trajectory)
                .context("stage peak_impact_curve")?;
            let fit = fit_peak_curve(&curve).context("stage peak_curve_fit")?;
            let dir = out.dir();
            let mut f = out_file(&dir, "impact_summaries.csv")?;
            export::write_summaries(&mut f, &summaries)?;
            let mut f = out_file(&dir, "peak_curve.csv")?;
            export::write_peak_curve(&mut f, &curve)?;
            write_json(&dir, "peak_fit.json", &EstimatorRecord::power_law(&fit, &curve))?;
            println!(
                "peak impact: delta = {:.4} +- {:.4}, prefactor = {:.4e}",
                fit.exponent, fit.exponent_stderr, fit.prefactor
            );
            Ok(())
        }),
        Command::Yratio { input, out, seg } => in_pool(out.workers, || {
            let parsed = load_tape(&input)?;
            let tape = &parsed.tape;
            let metaorders = segment_nonempty(tape, &seg)?;
            let index = TapeIndex::new(tape);
            let summaries = impact::summarize_all(tape, &index, &metaorders);
            // Single-print metaorders measure an identically zero peak on a
            // trade tape; the prefactor series runs on multi-fill ones.
            let multi: Vec<_> = summaries
                .iter()
                .filter(|s| s.n_children >= 2)
                .cloned()
                .collect();
            let daily = daily_aggregates(tape, VolEstimator::CloseToClose5Min)
                .context("stage daily_aggregates")?;
            let series = daily_liquidity_series(&multi, &daily, tape.meta());
            let ratios: Vec<f64> = series.iter().filter_map(|d| d.y_ratio).collect();
            let dir = out.dir();
            let mut f = out_file(&dir, "daily_liquidity.csv")?;
            export::write_daily_liquidity(&mut f, &series)?;
            let fit = fit_gaussian(&ratios).context("stage y_ratio_gaussian")?;
            write_json(&dir, "yratio_fit.json", &EstimatorRecord::gaussian(&fit))?;
            println!(
                "Y-ratio over {} days: mean {:.3}, std {:.3}, KS {:.3}",
                fit.n, fit.mean, fit.std, fit.ks_distance
            );
            Ok(())
        }),
        Command::Surface {
            input,
            out,
            seg,
            bins,
        } => in_pool(out.workers, || {
            let parsed = load_tape(&input)?;
            let tape = &parsed.tape;
            let metaorders = segment_nonempty(tape, &seg)?;
            let index = TapeIndex::new(tape);
            let summaries = impact::summarize_all(tape, &index, &metaorders);
            let surface = impact_surface(
                &summaries,
                &metaorders,
                tape,
                &index,
                SurfaceBinning {
                    q_bins_per_decade: bins.bins_per_decade,
                    muv_bins_per_decade: bins.muv_bins_per_decade,
                    n_min: bins.n_min,
                },
            );
            let dir = out.dir();
            let mut f = out_file(&dir, "impact_surface.csv")?;
            export::write_surface(&mut f, &surface)?;
            let fit = surface.fit_exponents().context("stage surface_fit")?;
            write_json(&dir, "surface_fit.json", &fit)?;
            println!(
                "surface: delta = {:.4}, delta' = {:.4} over {} cells",
                fit.delta, fit.delta_prime, fit.n_cells
            );
            Ok(())
        }),
        Command::Eventstudy {
            input,
            out,
            seg,
            es,
            isolation,
            n_min,
        } => in_pool(out.workers, || {
            let parsed = load_tape(&input)?;
            let tape = &parsed.tape;
            let metaorders = segment_nonempty(tape, &seg)?;
            let index = TapeIndex::new(tape);
            let cfg = event_config(&es, n_min);
            let mut curves = Vec::new();
            curves.extend(event_study(&metaorders, tape, &index, &BucketSpec::All, &cfg));
            curves.extend(event_study(&metaorders, tape, &index, &BucketSpec::TrendRegime, &cfg));
            curves.extend(event_study(
                &metaorders,
                tape,
                &index,
                &BucketSpec::Isolation(isolation.config()),
                &cfg,
            ));
            let dir = out.dir();
            let mut f = out_file(&dir, "event_study.csv")?;
            export::write_event_study(&mut f, &curves)?;
            println!("event study: {} buckets", curves.len());
            Ok(())
        }),
        Command::Isolate {
            input,
            out,
            seg,
            isolation,
        } => in_pool(out.workers, || {
            let parsed = load_tape(&input)?;
            let tape = &parsed.tape;
            let metaorders = segment_nonempty(tape, &seg)?;
            let index = TapeIndex::new(tape);
            let labels = select_isolated(&metaorders, tape, &index, &isolation.config());
            let dir = out.dir();
            let mut f = out_file(&dir, "isolation.csv")?;
            writeln!(f, "metaorder_id,label")?;
            for (m, label) in metaorders.iter().zip(&labels) {
                writeln!(f, "{},{}", m.id, label.as_str())?;
            }
            let isolated = labels
                .iter()
                .filter(|l| **l == impact::IsolationLabel::Isolated)
                .count();
            println!(
                "isolated {} of {} metaorders ({:.1}%)",
                isolated,
                metaorders.len(),
                100.0 * isolated as f64 / metaorders.len() as f64
            );
            Ok(())
        }),
        Command::Acf {
            input,
            out,
            seg,
            max_lag,
            fit_lo,
            fit_hi,
        } => in_pool(out.workers, || {
            let parsed = load_tape(&input)?;
            let metaorders = segment_nonempty(&parsed.tape, &seg)?;
            let signs: Vec<i8> = metaorders.iter().map(|m| m.sign).collect();
            let fit = sign_acf(&signs, max_lag, (fit_lo, fit_hi)).context("stage sign_acf")?;
            let dir = out.dir();
            let mut f = out_file(&dir, "sign_acf.csv")?;
            writeln!(f, "lag,correlation")?;
            for (lag, c) in fit.lags.iter().zip(&fit.values) {
                writeln!(f, "{},{}", lag, export::fmt(*c))?;
            }
            write_json(&dir, "acf_fit.json", &EstimatorRecord::acf(&fit))?;
            match fit.gamma {
                Some(g) => println!("sign ACF decay gamma = {g:.4}"),
                None => println!("sign ACF decay fit unavailable"),
            }
            Ok(())
        }),
        Command::Synth {
            scenario,
            out,
            format,
        } => cmd_synth(&scenario, &out, &format),
        Command::Pipeline {
            input,
            out,
            seg,
            bins,
            es,
            isolation,
            hill_threshold,
            max_lag,
        } => in_pool(out.workers, || {
            cmd_pipeline(&input, &out, &seg, &bins, &es, &isolation, hill_threshold, max_lag)
        }),
        Command::Oracle {
            input,
            ground_truth,
            out,
        } => in_pool(out.workers, || {
            let parsed = load_tape(&input)?;
            let tape = &parsed.tape;
            let file = File::open(&ground_truth)
                .with_context(|| format!("opening {}", ground_truth.display()))?;
            let gt = GroundTruth::read_csv(tape, BufReader::new(file))?;
            let stats = synthgen::brute_force_stats(tape, &gt, &[], 100.min(gt.metaorders.len().saturating_sub(1)), 3600.0)?;
            let dir = out.dir();
            let mut f = out_file(&dir, "oracle_summaries.csv")?;
            export::write_summaries(&mut f, &stats.summaries)?;
            let mut f = out_file(&dir, "oracle_acf.csv")?;
            writeln!(f, "lag,correlation")?;
            for (i, c) in stats.sign_acf.iter().enumerate() {
                writeln!(f, "{},{}", i + 1, export::fmt(*c))?;
            }
            println!(
                "oracle: {} ground-truth metaorders on {} trades",
                stats.summaries.len(),
                tape.len()
            );
            Ok(())
        }),
    }
}

fn event_config(es: &EventStudyArgs, n_min: usize) -> EventStudyConfig {
    EventStudyConfig {
        pre_mult: es.pre,
        post_mult: es.post,
        n_exec_points: es.points,
        n_min,
    }
}

fn cmd_ingest(input: &InputArgs, out: &OutArgs) -> Result<()> {
    let parsed = load_tape(input)?;
    let dir = out.dir();
    let mut f = out_file(&dir, "tape.bin")?;
    write_binary(&parsed.tape, &mut f)?;
    let daily = if parsed.tape.is_empty() {
        Vec::new()
    } else {
        daily_aggregates(&parsed.tape, VolEstimator::CloseToClose5Min)?
    };
    let mut f = out_file(&dir, "daily_aggregates.csv")?;
    export::write_daily_aggregates(&mut f, &daily, parsed.tape.meta())?;
    #[derive(serde::Serialize)]
    struct IngestReport<'a> {
        rows: usize,
        reorder_warnings: usize,
        quote_warnings: usize,
        days: usize,
        instrument: &'a str,
        price_exponent: i8,
        volume_exponent: i8,
    }
    write_json(
        &dir,
        "ingest_report.json",
        &IngestReport {
            rows: parsed.report.rows,
            reorder_warnings: parsed.report.reorder_warnings,
            quote_warnings: parsed.report.quote_warnings,
            days: daily.len(),
            instrument: &parsed.tape.meta().instrument,
            price_exponent: parsed.tape.meta().price_exponent,
            volume_exponent: parsed.tape.meta().volume_exponent,
        },
    )?;
    println!(
        "ingested {} rows ({} reorder warnings, {} quote warnings) over {} days",
        parsed.report.rows,
        parsed.report.reorder_warnings,
        parsed.report.quote_warnings,
        daily.len()
    );
    Ok(())
}

fn cmd_synth(scenario_path: &PathBuf, out: &OutArgs, format: &str) -> Result<()> {
    let text = std::fs::read_to_string(scenario_path)
        .with_context(|| format!("reading {}", scenario_path.display()))?;
    let scenario: SyntheticScenario = serde_json::from_str(&text)
        .map_err(|e| anyhow!(impactlab::synthgen::ScenarioError::InvalidField {
            field: "scenario",
            message: e.to_string(),
        }))?;
    let (tape, gt) = synthgen::generate(&scenario)?;
    let dir = out.dir();
    match format {
        "csv" => {
            let mut f = out_file(&dir, "tape.csv")?;
            write_csv(&tape, &mut f)?;
        }
        _ => {
            let mut f = out_file(&dir, "tape.bin")?;
            write_binary(&tape, &mut f)?;
        }
    }
    let mut f = out_file(&dir, "ground_truth.csv")?;
    gt.write_csv(&tape, &mut f)?;
    let mut f = out_file(&dir, "planted_days.csv")?;
    writeln!(f, "day_index,sigma_impact,sigma_noise,y_coef,y_tilde")?;
    for d in &gt.days {
        writeln!(
            f,
            "{},{},{},{},{}",
            d.day_index,
            export::fmt(d.sigma_impact),
            export::fmt(d.sigma_noise),
            export::fmt(d.y_coef),
            export::fmt(d.y_tilde)
        )?;
    }
    println!(
        "generated {} trades, {} metaorders, {} days",
        tape.len(),
        gt.metaorders.len(),
        gt.days.len()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_pipeline(
    input: &InputArgs,
    out: &OutArgs,
    seg: &SegArgs,
    bins: &crate::BinArgs,
    es: &EventStudyArgs,
    isolation: &IsolationArgs,
    hill_threshold: f64,
    max_lag: usize,
) -> Result<()> {
    let dir = out.dir();
    let parsed = load_tape(input).context("stage ingest")?;
    let tape = &parsed.tape;
    if tape.is_empty() {
        bail!(anyhow::Error::from(impactlab::impact::ImpactError::EmptyInput)
            .context("stage ingest: no metaorders (empty tape)"));
    }

    let metaorders = segment_nonempty(tape, seg).context("stage segment")?;
    let index = TapeIndex::new(tape);
    let summaries = impact::summarize_all(tape, &index, &metaorders);
    let mut f = out_file(&dir, "metaorders.csv")?;
    export::write_metaorders(&mut f, &metaorders, tape)?;
    let mut f = out_file(&dir, "impact_summaries.csv")?;
    export::write_summaries(&mut f, &summaries)?;

    let binning = LogBins {
        bins_per_decade: bins.bins_per_decade,
        n_min: bins.n_min,
    };
    let curve = peak_impact_curve(&summaries, &[], binning, false).context("stage peak_curve")?;
    let peak_fit = fit_peak_curve(&curve).context("stage peak_fit")?;
    let mut f = out_file(&dir, "peak_curve.csv")?;
    export::write_peak_curve(&mut f, &curve)?;
    let paths = impact_paths(tape, &metaorders, 41);
    let traj_curve = peak_impact_curve(&summaries, &paths, binning, true).ok();
    if let Some(c) = &traj_curve {
        let mut f = out_file(&dir, "peak_curve_in_trajectory.csv")?;
        export::write_peak_curve(&mut f, c)?;
    }
    let traj_fit = traj_curve.as_ref().and_then(|c| fit_peak_curve(c).ok());

    let daily = daily_aggregates(tape, VolEstimator::CloseToClose5Min).context("stage daily")?;
    let mut f = out_file(&dir, "daily_aggregates.csv")?;
    export::write_daily_aggregates(&mut f, &daily, tape.meta())?;
    // Single-print metaorders measure an identically zero peak; the daily
    // prefactor series runs on multi-fill metaorders.
    let multi: Vec<_> = summaries
        .iter()
        .filter(|s| s.n_children >= 2)
        .cloned()
        .collect();
    let liquidity = daily_liquidity_series(&multi, &daily, tape.meta());
    let mut f = out_file(&dir, "daily_liquidity.csv")?;
    export::write_daily_liquidity(&mut f, &liquidity)?;
    let ratios: Vec<f64> = liquidity.iter().filter_map(|d| d.y_ratio).collect();
    let gaussian = fit_gaussian(&ratios).ok();

    let surface = impact_surface(
        &summaries,
        &metaorders,
        tape,
        &index,
        SurfaceBinning {
            q_bins_per_decade: bins.bins_per_decade,
            muv_bins_per_decade: bins.muv_bins_per_decade,
            n_min: bins.n_min,
        },
    );
    let mut f = out_file(&dir, "impact_surface.csv")?;
    export::write_surface(&mut f, &surface)?;
    let surface_fit = surface.fit_exponents().ok();

    let signs: Vec<i8> = metaorders.iter().map(|m| m.sign).collect();
    let acf = if signs.len() > max_lag {
        sign_acf(&signs, max_lag, (1, max_lag)).ok()
    } else {
        None
    };
    if let Some(a) = &acf {
        let mut f = out_file(&dir, "sign_acf.csv")?;
        writeln!(f, "lag,correlation")?;
        for (lag, c) in a.lags.iter().zip(&a.values) {
            writeln!(f, "{},{}", lag, export::fmt(*c))?;
        }
    }

    let volumes: Vec<f64> = summaries.iter().map(|s| s.q_btc).collect();
    let hill = hill_tail(&volumes, hill_threshold).ok();

    let labels = select_isolated(&metaorders, tape, &index, &isolation.config());
    let mut f = out_file(&dir, "isolation.csv")?;
    writeln!(f, "metaorder_id,label")?;
    for (m, label) in metaorders.iter().zip(&labels) {
        writeln!(f, "{},{}", m.id, label.as_str())?;
    }

    let cfg = event_config(es, bins.n_min);
    let mut curves = Vec::new();
    curves.extend(event_study(&metaorders, tape, &index, &BucketSpec::All, &cfg));
    curves.extend(event_study(&metaorders, tape, &index, &BucketSpec::TrendRegime, &cfg));
    curves.extend(event_study(
        &metaorders,
        tape,
        &index,
        &BucketSpec::Isolation(isolation.config()),
        &cfg,
    ));
    let mut f = out_file(&dir, "event_study.csv")?;
    export::write_event_study(&mut f, &curves)?;

    let table = child_count_table(&metaorders).context("stage child_counts")?;
    let mut f = out_file(&dir, "child_counts.csv")?;
    export::write_child_counts(&mut f, &table)?;
    if let Ok(profile) = execution_profile(&metaorders, tape, 41) {
        let mut f = out_file(&dir, "execution_profile.csv")?;
        export::write_execution_profile(&mut f, &profile)?;
    }
    if let Ok(active) = active_metaorder_series(&metaorders, tape.meta(), 3600.0) {
        let mut f = out_file(&dir, "active_series.csv")?;
        writeln!(f, "t,n_buy,n_sell,mu_buy,mu_sell")?;
        for (i, (nb, ns, rb, rs)) in active.points.iter().enumerate() {
            writeln!(
                f,
                "{},{},{},{},{}",
                active.grid_time(i),
                nb,
                ns,
                export::fmt(*rb),
                export::fmt(*rs)
            )?;
        }
    }

    let manifest = Manifest::build(
        tape,
        &parsed.report,
        &metaorders,
        &daily,
        &curve,
        &peak_fit,
        traj_fit.as_ref(),
        gaussian.as_ref(),
        surface_fit.as_ref(),
        acf.as_ref(),
        hill.as_ref(),
        &labels,
    );
    write_json(&dir, "manifest.json", &manifest)?;
    println!(
        "pipeline complete: {} trades, {} metaorders, delta = {:.4}",
        tape.len(),
        metaorders.len(),
        peak_fit.exponent
    );
    Ok(())
}
