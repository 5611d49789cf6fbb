//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `--nocapture` to see them). Quantitative
//! criteria run against the synthetic generator with planted parameters;
//! oracle criteria compare the pipeline against naive reference
//! implementations. Tests share a lock so runtime budgets are measured
//! without interference.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use impactlab::estimators::{fit_gaussian, hill_tail, sign_acf};
use impactlab::impact::{
    self, daily_liquidity_series, event_study, fit_peak_curve, impact_paths, impact_surface,
    peak_impact_curve, BucketSpec, EventStudyConfig, ImpactSummary, IsolationConfig, LogBins,
    SurfaceBinning,
};
use impactlab::segmenter::{child_count_table, segment, MetaOrder, SegmentationConfig};
use impactlab::synthgen::{
    generate, naive_active_counts, naive_imbalance, naive_sign_acf, ChildSchedule, ImpactLaw,
    SignMode, SyntheticScenario,
};
use impactlab::tape::{
    daily_aggregates, parse_binary, write_binary, Tape, TapeIndex, TimeWindow, VolEstimator,
    NS_PER_SEC,
};

static GATE: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn pass(criterion: u32, details: String) {
    println!("PASS criterion {criterion:02}: {details}");
}

fn no_drop() -> SegmentationConfig {
    SegmentationConfig {
        drop_mean_reverting: false,
        ..SegmentationConfig::default()
    }
}

/// Planted trades grouped per metaorder, as sorted trade-id lists.
fn planted_groups(tape: &Tape, labels: &[Option<u64>], n_meta: usize) -> Vec<Vec<u64>> {
    let mut groups = vec![Vec::new(); n_meta];
    for (t, label) in tape.trades().iter().zip(labels) {
        if let Some(id) = label {
            groups[*id as usize].push(t.trade_id);
        }
    }
    groups.retain(|g| !g.is_empty());
    groups
}

fn recovered_groups(tape: &Tape, metaorders: &[MetaOrder], n_traders: u32) -> Vec<Vec<u64>> {
    metaorders
        .iter()
        .filter(|m| m.trader_id.0 < n_traders)
        .map(|m| {
            m.child_trades
                .iter()
                .map(|&i| tape.trades()[i].trade_id)
                .collect()
        })
        .collect()
}

/// Criterion 1: on 50 generated scenarios with inter-metaorder gaps at least
/// twice the inactivity threshold, segmentation recovers the planted labels
/// exactly, in under 10 seconds of segmentation time.
#[test]
fn criterion_01_segmentation_oracle() {
    let _g = serial();
    let mut seg_time = Duration::ZERO;
    let mut total_planted = 0usize;
    for k in 0..50u64 {
        let scenario = SyntheticScenario {
            seed: 9_000 + k,
            n_traders: 20,
            metaorders_per_trader: 50 + ((k * 97) % 451) as u32, // 1000..10020 metaorders
            child_count_mix: [0.3, 0.4, 0.2, 0.1],
            size_lognormal: (2.0, 1.0),
            duration_lognormal: (4.0, 0.8),
            background_trades_per_day: 300.0,
            background_pad_secs: 3_600.0,
            ..SyntheticScenario::default()
        };
        assert!(scenario.min_gap_secs >= 2.0 * 3600.0);
        let (tape, gt) = generate(&scenario).unwrap();
        let started = Instant::now();
        let metaorders = segment(&tape, &no_drop());
        seg_time += started.elapsed();

        let planted: BTreeSet<Vec<u64>> =
            planted_groups(&tape, &gt.labels, gt.metaorders.len()).into_iter().collect();
        let recovered: BTreeSet<Vec<u64>> =
            recovered_groups(&tape, &metaorders, scenario.n_traders).into_iter().collect();
        // Exact set equality is precision = recall = 1.0.
        assert_eq!(recovered, planted, "scenario seed {}", scenario.seed);
        total_planted += planted.len();
    }
    assert!(
        seg_time < Duration::from_secs(10),
        "segmentation took {seg_time:?}"
    );
    pass(
        1,
        format!(
            "segmentation recovered {total_planted} planted metaorders exactly across 50 scenarios in {seg_time:.2?}"
        ),
    );
}

/// Shared scenario for the square-root recovery and trajectory identity:
/// planted delta = 0.5, Y0 = 0.9, 1e5 metaorders over four decades of volume.
/// Arrivals are sparse and the flow decay short so residual whale flow does
/// not contaminate small-volume bins through the concave response.
fn square_root_scenario(noise: f64) -> SyntheticScenario {
    SyntheticScenario {
        seed: 20_210,
        n_traders: 50,
        metaorders_per_trader: 2_000,
        min_gap_secs: 600_000.0,
        mean_extra_gap_secs: 150_000.0,
        size_lognormal: (2.0, 1.5),
        duration_lognormal: (4.0, 0.7),
        schedule: ChildSchedule::Linear { time_jitter: 0.3 },
        child_count_mix: [0.0, 0.0, 0.0, 1.0],
        bucket4_min_children: 120,
        max_children: 200,
        impact: ImpactLaw {
            y0: 0.9,
            sigma_y: 0.0,
            delta: 0.5,
            impact_sigma_per_sqrt_day: 0.03,
            noise_sigma_per_sqrt_day: noise,
            pi_permanent: 0.0,
            decay_horizon_mult: 0.5,
        },
        signs: SignMode::Independent,
        base_daily_volume: 10_000.0,
        background_trades_per_day: 0.0,
        spread_frac: None,
        ..SyntheticScenario::default()
    }
}

/// Criterion 2: fitted delta in [0.45, 0.55] and prefactor within 10% of the
/// planted value over at least 3 decades of volume, in under 2 minutes.
#[test]
fn criterion_02_square_root_recovery() {
    let _g = serial();
    let started = Instant::now();
    let scenario = square_root_scenario(0.01);
    let (tape, gt) = generate(&scenario).unwrap();
    assert!(gt.metaorders.len() >= 100_000);
    let metaorders = segment(&tape, &no_drop());
    let index = TapeIndex::new(&tape);
    let summaries = impact::summarize_all(&tape, &index, &metaorders);
    let curve = peak_impact_curve(&summaries, &[], LogBins::default(), false).unwrap();
    let fit = fit_peak_curve(&curve).unwrap();
    let elapsed = started.elapsed();

    let planted_prefactor =
        scenario.impact.impact_sigma_per_sqrt_day * scenario.impact.y0
            / scenario.base_daily_volume.sqrt();
    let decades =
        (curve.points.last().unwrap().center / curve.points[0].center).log10();
    let prefactor_err = (fit.prefactor - planted_prefactor).abs() / planted_prefactor;
    assert!(
        (0.45..=0.55).contains(&fit.exponent),
        "delta {} outside [0.45, 0.55]",
        fit.exponent
    );
    assert!(
        prefactor_err <= 0.10,
        "prefactor {} vs planted {planted_prefactor} ({prefactor_err:.3} relative)",
        fit.prefactor
    );
    assert!(decades >= 3.0, "curve spans only {decades:.2} decades");
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    pass(
        2,
        format!(
            "delta = {:.4}, prefactor off by {:.2}% over {:.1} decades in {:.1?}",
            fit.exponent,
            100.0 * prefactor_err,
            decades,
            elapsed
        ),
    );
}

/// Criterion 3: with the diffusive noise off, trajectory samples at fraction
/// r match the peak-impact curve at volume r*Q within 5% for r >= 0.1.
#[test]
fn criterion_03_trajectory_identity() {
    let _g = serial();
    let scenario = square_root_scenario(0.0);
    let (tape, _gt) = generate(&scenario).unwrap();
    let metaorders = segment(&tape, &no_drop());
    let index = TapeIndex::new(&tape);
    let summaries = impact::summarize_all(&tape, &index, &metaorders);
    let curve = peak_impact_curve(&summaries, &[], LogBins::default(), false).unwrap();
    let paths = impact_paths(&tape, &metaorders, 41);

    let lo = curve.points[0].center;
    let hi = curve.points.last().unwrap().center;
    let mut worst: (f64, f64) = (0.0, 1.0); // (|ratio-1|, r)
    let mut checked = 0usize;
    // Group by r across the population; within-support volumes only.
    let n_points = 41;
    for k in 4..n_points {
        let r = k as f64 / (n_points - 1) as f64;
        if r < 0.1 {
            continue;
        }
        let mut measured_sum = 0.0;
        let mut expected_sum = 0.0;
        for p in &paths {
            let v = r * p.q_btc;
            if v < lo || v > hi {
                continue;
            }
            measured_sum += p.samples[k].impact;
            expected_sum += curve.eval(v).unwrap();
        }
        assert!(expected_sum > 0.0);
        let ratio = measured_sum / expected_sum;
        assert!(
            (ratio - 1.0).abs() <= 0.05,
            "r = {r}: trajectory/peak-curve ratio {ratio}"
        );
        if (ratio - 1.0).abs() > worst.0 {
            worst = ((ratio - 1.0).abs(), r);
        }
        checked += 1;
    }
    assert!(checked >= 30);
    pass(
        3,
        format!(
            "trajectory identity holds at {checked} volume fractions; worst deviation {:.2}% at r = {}",
            100.0 * worst.0,
            worst.1
        ),
    );
}

/// Criterion 4: 300 synthetic days with planted Y0 = 0.9, Sigma_Y = 0.35
/// recover a Gaussian Y-ratio with mean and std within 0.05 and KS < 0.05.
#[test]
fn criterion_04_y_ratio_recovery() {
    let _g = serial();
    let scenario = SyntheticScenario {
        seed: 4_040,
        n_traders: 25,
        metaorders_per_trader: 1_220,
        min_gap_secs: 7_200.0,
        mean_extra_gap_secs: 14_400.0,
        size_lognormal: (1.95, 0.5),
        duration_lognormal: (3.0, 0.3),
        child_count_mix: [0.0, 0.6, 0.4, 0.0],
        impact: ImpactLaw {
            y0: 0.9,
            sigma_y: 0.35,
            delta: 0.5,
            impact_sigma_per_sqrt_day: 0.03,
            noise_sigma_per_sqrt_day: 0.03,
            pi_permanent: 0.0,
            decay_horizon_mult: 0.5,
        },
        signs: SignMode::Independent,
        base_daily_volume: 10_000.0,
        background_trades_per_day: 2_000.0,
        background_volume_lognormal: (1.21, 0.8),
        background_decay_secs: 1.0,
        spread_frac: None,
        ..SyntheticScenario::default()
    };
    let (tape, _gt) = generate(&scenario).unwrap();
    let metaorders = segment(&tape, &no_drop());
    let index = TapeIndex::new(&tape);
    let summaries = impact::summarize_all(&tape, &index, &metaorders);
    // Single-print metaorders measure an identically zero peak on a trade
    // tape, so the prefactor statistics run on multi-fill metaorders.
    let multi: Vec<ImpactSummary> = summaries
        .into_iter()
        .filter(|s| s.n_children >= 2)
        .collect();
    let daily = daily_aggregates(&tape, VolEstimator::CloseToClose5Min).unwrap();
    let series = daily_liquidity_series(&multi, &daily, tape.meta());
    let ratios: Vec<f64> = series.iter().filter_map(|d| d.y_ratio).collect();
    assert!(ratios.len() >= 300, "only {} days with Y-ratios", ratios.len());
    let fit = fit_gaussian(&ratios).unwrap();
    assert!(
        (fit.mean - 0.9).abs() <= 0.05,
        "Y-ratio mean {} vs planted 0.9",
        fit.mean
    );
    assert!(
        (fit.std - 0.35).abs() <= 0.05,
        "Y-ratio std {} vs planted 0.35",
        fit.std
    );
    assert!(fit.ks_distance < 0.05, "KS distance {}", fit.ks_distance);
    pass(
        4,
        format!(
            "Y-ratio over {} days: mean {:.3} (planted 0.9), std {:.3} (planted 0.35), KS {:.3}",
            ratios.len(),
            fit.mean,
            fit.std,
            fit.ks_distance
        ),
    );
}

/// Criterion 5: with full decay and independent signs the isolated bucket's
/// post-window impact falls below 0.1 of its peak; with long-memory signs
/// the informed bucket retains more than 0.5 of its peak.
#[test]
fn criterion_05_isolation_decomposition() {
    let _g = serial();
    let study_cfg = EventStudyConfig {
        pre_mult: 1.0,
        post_mult: 10.0,
        n_exec_points: 21,
        n_min: 50,
    };

    // Sparse, independent flow: isolated metaorders decay to nothing.
    let isolated_scenario = SyntheticScenario {
        seed: 5_050,
        n_traders: 20,
        metaorders_per_trader: 100,
        min_gap_secs: 36_000.0,
        mean_extra_gap_secs: 18_000.0,
        size_lognormal: (3.0, 1.0),
        duration_lognormal: (4.5, 0.5),
        child_count_mix: [0.0, 0.3, 0.4, 0.3],
        impact: ImpactLaw {
            sigma_y: 0.0,
            noise_sigma_per_sqrt_day: 0.01,
            pi_permanent: 0.0,
            decay_horizon_mult: 3.0,
            ..ImpactLaw::default()
        },
        signs: SignMode::Independent,
        background_trades_per_day: 2_000.0,
        background_volume_lognormal: (-4.0, 0.5),
        spread_frac: None,
        ..SyntheticScenario::default()
    };
    let (tape, _) = generate(&isolated_scenario).unwrap();
    let metaorders = segment(&tape, &no_drop());
    let index = TapeIndex::new(&tape);
    let curves = event_study(
        &metaorders,
        &tape,
        &index,
        &BucketSpec::Isolation(IsolationConfig::default()),
        &study_cfg,
    );
    let isolated = curves
        .iter()
        .find(|c| c.bucket == "isolated")
        .expect("isolated bucket populated");
    let iso_peak = isolated.peak_level();
    let iso_perm = isolated.permanent_level();
    assert!(iso_peak > 0.0);
    assert!(
        iso_perm.abs() < 0.1 * iso_peak,
        "isolated post-window impact {iso_perm} vs peak {iso_peak}"
    );

    // Clustered long-memory flow with slow mechanical relaxation: the
    // informed bucket keeps most of its impact through the post window.
    let informed_scenario = SyntheticScenario {
        seed: 5_151,
        n_traders: 40,
        metaorders_per_trader: 250,
        min_gap_secs: 36_000.0,
        mean_extra_gap_secs: 9_000.0,
        size_lognormal: (3.0, 0.5),
        duration_lognormal: (4.5, 0.3),
        child_count_mix: [0.0, 0.3, 0.4, 0.3],
        impact: ImpactLaw {
            sigma_y: 0.0,
            noise_sigma_per_sqrt_day: 0.01,
            pi_permanent: 0.0,
            decay_horizon_mult: 30.0,
            ..ImpactLaw::default()
        },
        signs: SignMode::LongMemory { gamma: 0.4 },
        background_trades_per_day: 2_000.0,
        background_volume_lognormal: (-4.0, 0.5),
        spread_frac: None,
        ..SyntheticScenario::default()
    };
    let (tape, _) = generate(&informed_scenario).unwrap();
    let metaorders = segment(&tape, &no_drop());
    let index = TapeIndex::new(&tape);
    let curves = event_study(
        &metaorders,
        &tape,
        &index,
        &BucketSpec::Isolation(IsolationConfig::default()),
        &study_cfg,
    );
    let informed = curves
        .iter()
        .find(|c| c.bucket == "informed")
        .expect("informed bucket populated");
    let inf_peak = informed.peak_level();
    let inf_perm = informed.permanent_level();
    assert!(inf_peak > 0.0);
    assert!(
        inf_perm > 0.5 * inf_peak,
        "informed post-window impact {inf_perm} vs peak {inf_peak}"
    );
    pass(
        5,
        format!(
            "isolated perm/peak = {:.3} (n = {}), informed perm/peak = {:.3} (n = {})",
            iso_perm / iso_peak,
            isolated.n,
            inf_perm / inf_peak,
            informed.n
        ),
    );
}

/// Criterion 6: with independent signs the fitted execution-speed exponent
/// is null, and the surface keyed on global imbalance collapses onto one
/// square root within 10% per cell.
#[test]
fn criterion_06_surface_null_and_imbalance_collapse() {
    let _g = serial();
    let scenario = SyntheticScenario {
        seed: 6_060,
        n_traders: 50,
        metaorders_per_trader: 600,
        min_gap_secs: 150_000.0,
        mean_extra_gap_secs: 37_500.0,
        size_lognormal: (2.0, 0.5),
        duration_lognormal: (4.5, 0.9),
        child_count_mix: [0.0, 0.0, 0.3, 0.7],
        bucket4_min_children: 10,
        max_children: 40,
        impact: ImpactLaw {
            sigma_y: 0.0,
            noise_sigma_per_sqrt_day: 0.0005,
            pi_permanent: 0.0,
            decay_horizon_mult: 0.5,
            ..ImpactLaw::default()
        },
        signs: SignMode::Independent,
        background_trades_per_day: 2_000.0,
        background_volume_lognormal: (0.4, 0.8),
        background_balanced: true,
        background_decay_secs: 1.0,
        spread_frac: None,
        ..SyntheticScenario::default()
    };
    let (tape, _) = generate(&scenario).unwrap();
    let metaorders = segment(&tape, &no_drop());
    let index = TapeIndex::new(&tape);
    let summaries = impact::summarize_all(&tape, &index, &metaorders);
    // Execution impact is only meaningful across multi-fill metaorders.
    let pairs: Vec<(ImpactSummary, MetaOrder)> = summaries
        .into_iter()
        .zip(metaorders)
        .filter(|(s, _)| s.n_children >= 2)
        .collect();
    let (multi, metas): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let surface = impact_surface(
        &multi,
        &metas,
        &tape,
        &index,
        SurfaceBinning {
            q_bins_per_decade: 4,
            muv_bins_per_decade: 4,
            n_min: 120,
        },
    );
    let fit = surface.fit_exponents().unwrap();
    assert!(
        fit.delta_prime.abs() <= 0.1,
        "delta_prime {} outside [-0.1, 0.1]",
        fit.delta_prime
    );

    // Global-imbalance collapse: one square root fits every cell to 10%.
    let points = surface.imbalance_points();
    assert!(points.len() >= 10, "only {} usable cells", points.len());
    let log_c: f64 = points
        .iter()
        .map(|(imb, exec, w)| w * (exec.ln() - 0.5 * imb.ln()))
        .sum::<f64>()
        / points.iter().map(|p| p.2).sum::<f64>();
    let c = log_c.exp();
    let mut worst = 0.0f64;
    for (imb, exec, _) in &points {
        let predicted = c * imb.sqrt();
        let dev = (exec - predicted).abs() / predicted;
        worst = worst.max(dev);
        assert!(
            dev <= 0.10,
            "cell at imbalance {imb}: exec {exec} vs sqrt-collapse {predicted} ({:.1}% off)",
            100.0 * dev
        );
    }
    pass(
        6,
        format!(
            "delta_prime = {:.4} over {} cells; imbalance collapse worst cell off by {:.2}%",
            fit.delta_prime,
            fit.n_cells,
            100.0 * worst
        ),
    );
}

/// Criterion 7: estimators equal their naive oracles; the Hill estimator
/// recovers a planted Pareto tail index.
#[test]
fn criterion_07_estimator_oracles() {
    let _g = serial();
    let scenario = SyntheticScenario {
        seed: 7_070,
        n_traders: 20,
        metaorders_per_trader: 60,
        child_count_mix: [0.3, 0.4, 0.2, 0.1],
        background_trades_per_day: 800.0,
        ..SyntheticScenario::default()
    };
    let (tape, _) = generate(&scenario).unwrap();
    let metaorders = segment(&tape, &no_drop());
    let index = TapeIndex::new(&tape);

    // Windowed imbalance: prefix sums equal full rescans exactly.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    let (t_lo, t_hi) = tape.time_range().unwrap();
    for _ in 0..200 {
        let a = rng.gen_range(t_lo..t_hi);
        let b = rng.gen_range(a..=t_hi);
        let w = TimeWindow::new(a, b);
        assert_eq!(
            impact::market_imbalance(&tape, &index, w),
            naive_imbalance(&tape, w)
        );
    }

    // Active-count series equals the interval-overlap oracle exactly.
    let series =
        impactlab::segmenter::active_metaorder_series(&metaorders, tape.meta(), 137.0).unwrap();
    let naive = naive_active_counts(
        &metaorders,
        series.t0,
        series.resolution_ns,
        series.points.len(),
    );
    for (i, (&(nb, ns, _, _), &(eb, es))) in series.points.iter().zip(&naive).enumerate() {
        assert_eq!((nb, ns), (eb, es), "active counts differ at grid {i}");
    }

    // Sign ACF equals the direct-sum definition to 1e-12 at n = 1000.
    let signs: Vec<i8> = metaorders.iter().take(1_000).map(|m| m.sign).collect();
    assert_eq!(signs.len(), 1_000);
    let acf = sign_acf(&signs, 100, (1, 100)).unwrap();
    let brute = naive_sign_acf(&signs, 100);
    for (lag, (a, b)) in acf.values.iter().zip(&brute).enumerate() {
        assert!((a - b).abs() < 1e-12, "ACF lag {}: {a} vs {b}", lag + 1);
    }

    // Hill estimator on simulated Pareto(alpha = 1.5).
    let pareto = rand_distr::Pareto::new(1.0, 1.5).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(78);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| rand_distr::Distribution::sample(&pareto, &mut rng))
        .collect();
    let tail = hill_tail(&draws, 1.0).unwrap();
    assert!(
        (tail.hill_alpha - 1.5).abs() <= 0.05,
        "hill alpha {}",
        tail.hill_alpha
    );
    pass(
        7,
        format!(
            "imbalance and active counts exact; ACF within 1e-12; Hill alpha {:.3} vs planted 1.5",
            tail.hill_alpha
        ),
    );
}

/// Criterion 8: the full CLI pipeline produces byte-identical outputs for
/// worker counts 1 and 8.
#[test]
fn criterion_08_worker_determinism() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let scenario_path = dir.path().join("scenario.json");
    let scenario = SyntheticScenario {
        seed: 8_080,
        n_traders: 12,
        metaorders_per_trader: 40,
        child_count_mix: [0.2, 0.4, 0.3, 0.1],
        background_trades_per_day: 1_000.0,
        ..SyntheticScenario::default()
    };
    std::fs::write(&scenario_path, serde_json::to_string(&scenario).unwrap()).unwrap();

    let bin = env!("CARGO_BIN_EXE_impactlab");
    let run = |args: &[&str]| {
        let out = std::process::Command::new(bin).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    let synth_dir = dir.path().join("synth");
    run(&[
        "synth",
        "--scenario",
        scenario_path.to_str().unwrap(),
        "--out",
        synth_dir.to_str().unwrap(),
    ]);
    let tape_path = synth_dir.join("tape.bin");
    let out1 = dir.path().join("w1");
    let out8 = dir.path().join("w8");
    for (workers, out) in [("1", &out1), ("8", &out8)] {
        run(&[
            "pipeline",
            "--input",
            tape_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            workers,
            "--n-min",
            "10",
        ]);
    }

    let mut names: Vec<String> = std::fs::read_dir(&out1)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.len() >= 10, "pipeline wrote only {names:?}");
    let mut bytes = 0usize;
    for name in &names {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out8.join(name)).unwrap();
        assert_eq!(a, b, "output {name} differs between worker counts");
        bytes += a.len();
    }
    pass(
        8,
        format!(
            "{} pipeline artifacts ({} bytes) byte-identical for workers 1 and 8",
            names.len(),
            bytes
        ),
    );
}

/// Peak resident set in GiB; falls back to the current RSS (read right
/// after the allocation-heavy phase) on kernels without VmHWM.
fn resident_gib() -> Option<(f64, &'static str)> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let mut rss = None;
    for line in status.lines() {
        let parse = |rest: &str| -> Option<f64> {
            rest.trim().trim_end_matches("kB").trim().parse().ok()
        };
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            return Some((parse(rest)? / 1024.0 / 1024.0, "VmHWM"));
        }
        if let Some(rest) = line.strip_prefix("VmRSS:") {
            rss = parse(rest);
        }
    }
    rss.map(|kb| (kb / 1024.0 / 1024.0, "VmRSS"))
}

/// Criterion 9: ingest + segment + impact summaries on a 10M-trade tape in
/// under 60 seconds and under 4 GiB resident memory.
#[test]
fn criterion_09_ten_million_trade_budget() {
    let _g = serial();
    let scenario = SyntheticScenario {
        seed: 9_090,
        n_traders: 100,
        metaorders_per_trader: 10_800,
        min_gap_secs: 7_200.0,
        mean_extra_gap_secs: 3_600.0,
        size_lognormal: (2.0, 1.0),
        duration_lognormal: (4.0, 0.8),
        child_count_mix: [0.0, 0.2, 0.4, 0.4],
        bucket4_min_children: 10,
        max_children: 20,
        impact: ImpactLaw {
            noise_sigma_per_sqrt_day: 0.01,
            sigma_y: 0.0,
            ..ImpactLaw::default()
        },
        background_trades_per_day: 0.0,
        spread_frac: None,
        ..SyntheticScenario::default()
    };
    let bytes = {
        let (tape, _gt) = generate(&scenario).unwrap();
        assert!(
            tape.len() >= 10_000_000,
            "tape has only {} trades",
            tape.len()
        );
        let mut bytes = Vec::with_capacity(8 + tape.len() * 64);
        write_binary(&tape, &mut bytes).unwrap();
        bytes
    };

    let started = Instant::now();
    let parsed = parse_binary(bytes.as_slice()).unwrap();
    drop(bytes);
    let tape = parsed.tape;
    let metaorders = segment(&tape, &no_drop());
    let index = TapeIndex::new(&tape);
    let summaries = impact::summarize_all(&tape, &index, &metaorders);
    let elapsed = started.elapsed();

    assert!(summaries.len() >= 1_000_000);
    assert!(
        elapsed < Duration::from_secs(60),
        "ingest + segment + summaries took {elapsed:?}"
    );
    let resident = resident_gib();
    if let Some((gib, _)) = resident {
        assert!(gib < 4.0, "resident memory {gib:.2} GiB");
    }
    pass(
        9,
        format!(
            "{} trades -> {} metaorders in {:.1?}, resident {}",
            tape.len(),
            summaries.len(),
            elapsed,
            resident.map_or("unavailable".to_string(), |(g, k)| format!("{g:.2} GiB ({k})"))
        ),
    );
}

/// Criterion 10: a scenario with the 61/29/6.5/3.5% child-count mix
/// reproduces the histogram within 1%, and long-memory signs fit gamma
/// within 0.1 of the planted 0.4.
#[test]
fn criterion_10_descriptive_statistics() {
    let _g = serial();
    let scenario = SyntheticScenario {
        seed: 1_010,
        n_traders: 50,
        metaorders_per_trader: 2_000,
        size_lognormal: (2.0, 1.0),
        duration_lognormal: (4.0, 0.8),
        child_count_mix: [0.61, 0.29, 0.065, 0.035],
        signs: SignMode::LongMemory { gamma: 0.4 },
        impact: ImpactLaw {
            noise_sigma_per_sqrt_day: 0.01,
            sigma_y: 0.0,
            ..ImpactLaw::default()
        },
        background_trades_per_day: 0.0,
        spread_frac: None,
        ..SyntheticScenario::default()
    };
    let (tape, gt) = generate(&scenario).unwrap();
    assert!(gt.metaorders.len() >= 100_000);
    let metaorders = segment(&tape, &no_drop());
    assert_eq!(metaorders.len(), gt.metaorders.len());

    let table = child_count_table(&metaorders).unwrap();
    for (i, planted) in scenario.child_count_mix.iter().enumerate() {
        assert!(
            (table.fractions[i] - planted).abs() <= 0.01,
            "bucket {i}: {} vs planted {planted}",
            table.fractions[i]
        );
    }

    // Long-memory decay fit on a dedicated, larger sign scenario: the
    // sample ACF of a long-memory sequence is noisy and its largest lags
    // carry a finite-sample bias, so the gamma fit runs on 4e5 metaorder
    // signs over lags 1..50.
    let sign_scenario = SyntheticScenario {
        seed: 1_011,
        n_traders: 50,
        metaorders_per_trader: 8_000,
        size_lognormal: (2.0, 1.0),
        child_count_mix: [1.0, 0.0, 0.0, 0.0],
        signs: SignMode::LongMemory { gamma: 0.4 },
        impact: ImpactLaw {
            noise_sigma_per_sqrt_day: 0.01,
            sigma_y: 0.0,
            ..ImpactLaw::default()
        },
        background_trades_per_day: 0.0,
        spread_frac: None,
        ..SyntheticScenario::default()
    };
    let (tape, gt) = generate(&sign_scenario).unwrap();
    assert!(gt.metaorders.len() >= 400_000);
    let sign_metaorders = segment(&tape, &no_drop());
    assert_eq!(sign_metaorders.len(), gt.metaorders.len());
    let signs: Vec<i8> = sign_metaorders.iter().map(|m| m.sign).collect();
    let acf = sign_acf(&signs, 100, (1, 50)).unwrap();
    let gamma = acf.gamma.expect("decay fit");
    assert!(
        (gamma - 0.4).abs() <= 0.1,
        "gamma {gamma} vs planted 0.4"
    );
    pass(
        10,
        format!(
            "child-count mix {:.3?} vs planted {:?}; gamma = {gamma:.3} over {} signs",
            table.fractions,
            scenario.child_count_mix,
            signs.len()
        ),
    );
}

/// Planted-law recovery across the (delta, Y0) grid, at reduced population:
/// every fitted value stays within the square-root-recovery tolerances.
#[test]
fn planted_grid_recovery() {
    let _g = serial();
    let mut results = Vec::new();
    for (i, &delta) in [0.4, 0.5, 0.6].iter().enumerate() {
        for (j, &y0) in [0.5, 0.9, 1.5].iter().enumerate() {
            let mut scenario = square_root_scenario(0.005);
            scenario.seed = 31_000 + (i * 3 + j) as u64;
            scenario.metaorders_per_trader = 200; // 1e4 metaorders per cell
            scenario.impact.delta = delta;
            scenario.impact.y0 = y0;
            let (tape, _) = generate(&scenario).unwrap();
            let metaorders = segment(&tape, &no_drop());
            let index = TapeIndex::new(&tape);
            let summaries = impact::summarize_all(&tape, &index, &metaorders);
            let curve = peak_impact_curve(&summaries, &[], LogBins::default(), false).unwrap();
            let fit = fit_peak_curve(&curve).unwrap();
            let planted_prefactor = scenario.impact.impact_sigma_per_sqrt_day * y0
                / scenario.base_daily_volume.powf(delta);
            let prefactor_err = (fit.prefactor - planted_prefactor).abs() / planted_prefactor;
            assert!(
                (fit.exponent - delta).abs() <= 0.05,
                "planted ({delta}, {y0}): fitted delta {}",
                fit.exponent
            );
            assert!(
                prefactor_err <= 0.10,
                "planted ({delta}, {y0}): prefactor off {:.1}%",
                100.0 * prefactor_err
            );
            results.push(format!("({delta},{y0})->{:.3}", fit.exponent));
        }
    }
    println!("PASS planted-grid: {}", results.join(" "));
}

/// The binary written by one run parses back everywhere the pipeline needs
/// it; exercised here so the acceptance binary also covers the ingest path
/// end to end through the CLI.
#[test]
fn ingest_csv_error_paths_exit_codes() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_impactlab");

    // Duplicate trade id: exit code 2, message names the line.
    let bad = dir.path().join("bad.csv");
    let mut f = std::fs::File::create(&bad).unwrap();
    writeln!(f, "timestamp,trade_id,aggressor_id,passive_id,side,price,volume,best_bid,best_ask").unwrap();
    writeln!(f, "1000,5,7,,B,100,1,,").unwrap();
    writeln!(f, "2000,5,7,,B,100,1,,").unwrap();
    drop(f);
    let out = std::process::Command::new(bin)
        .args(["ingest", "--input", bad.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line"), "stderr: {stderr}");

    // Usage error: exit code 1.
    let out = std::process::Command::new(bin)
        .args(["ingest", "--no-such-flag"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Valid CSV ingests with a zero-warning report and a binary twin that
    // reparses identically.
    let good = dir.path().join("good.csv");
    let mut f = std::fs::File::create(&good).unwrap();
    writeln!(f, "timestamp,trade_id,aggressor_id,passive_id,side,price,volume,best_bid,best_ask").unwrap();
    for k in 0..100 {
        writeln!(f, "{},{},7,,B,100.5,2,,", 1_000 + k * NS_PER_SEC, k + 1).unwrap();
    }
    drop(f);
    let out_dir = dir.path().join("ok");
    let out = std::process::Command::new(bin)
        .args(["ingest", "--input", good.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("ingest_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["rows"], 100);
    assert_eq!(report["reorder_warnings"], 0);
    let reparsed = parse_binary(std::fs::File::open(out_dir.join("tape.bin")).unwrap()).unwrap();
    assert_eq!(reparsed.tape.len(), 100);
}

// Smaller deterministic check kept alongside the suite: same seed and
// scenario produce identical artifacts through the CLI synth path.
#[test]
fn synth_cli_is_deterministic_per_seed() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_impactlab");
    let scenario = SyntheticScenario {
        seed: 314,
        n_traders: 6,
        metaorders_per_trader: 25,
        ..SyntheticScenario::default()
    };
    let path = dir.path().join("s.json");
    std::fs::write(&path, serde_json::to_string(&scenario).unwrap()).unwrap();
    let run = |out: &Path| {
        let st = std::process::Command::new(bin)
            .args(["synth", "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(st.success());
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&a);
    run(&b);
    for name in ["tape.bin", "ground_truth.csv", "planted_days.csv"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name} differs across runs"
        );
    }

    // A different seed produces a different tape.
    let mut other = scenario;
    other.seed = 315;
    std::fs::write(&path, serde_json::to_string(&other).unwrap()).unwrap();
    let c = dir.path().join("c");
    run(&c);
    assert_ne!(
        std::fs::read(a.join("tape.bin")).unwrap(),
        std::fs::read(c.join("tape.bin")).unwrap()
    );
}
