//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion; exits non-zero if any criterion fails.
//!
//! `cargo test -p cellflow-core --test acceptance`

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use cellflow::analysis::{burst_threshold, classification_report, kmeans, label_bursts, rmse};
use cellflow::dataset::Target;
use cellflow::experiment::{
    classify_sessions, label_synthetic, run, run_forecast, write_report, ClassifyConfig, ExperimentConfig,
    ForecastReport, Replication, SynthKind, SynthSpec,
};
use cellflow::features::{bin_packets, pro_pad, zero_fraction, zero_pad};
use cellflow::ingest::{Direction, LabeledPacket};
use cellflow::lstm::{grad_check, HeadKind, Network};
use cellflow::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    o.detail = format!("{} [{:.1}s]", o.detail, took.as_secs_f64());
    if let Some(limit) = limit {
        if took > limit {
            o.pass = false;
            o.detail = format!("{} exceeds {}s limit", o.detail, limit.as_secs());
        }
    }
    o
}

// Criterion 1

fn random_window(rng: &mut ChaCha8Rng, steps: usize, input: usize) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..steps)
        .map(|_| (0..input).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

fn gradients() -> Outcome {
    let mut worst = 0.0f64;
    let mut runs = 0;
    for seed in 0..25u64 {
        for kind in [HeadKind::Regression, HeadKind::Softmax4] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = Network::init_uniform(3, 4, kind, &mut rng);
            let window = random_window(&mut rng, 5, 3);
            let target = match kind {
                HeadKind::Regression => Target::Value(rng.random_range(-1.0..1.0)),
                HeadKind::Softmax4 => Target::Class(rng.random_range(0..4)),
            };
            worst = worst.max(grad_check(&net, &window, target, 1e-5).unwrap());
            runs += 1;
        }
    }
    outcome(worst < 1e-4, format!("{runs} checks, max relative error {worst:.3e} (< 1e-4)"))
}

// Criterion 2

fn naive_rmse(p: &[f64], a: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..p.len() {
        total += (p[i] - a[i]).powi(2);
    }
    (total / p.len() as f64).sqrt()
}

fn naive_report(p: &[bool], a: &[bool]) -> [f64; 4] {
    let count = |want_p: bool, want_a: bool| p.iter().zip(a).filter(|&(&x, &y)| x == want_p && y == want_a).count() as f64;
    let (tp, fp, fn_, tn) = (count(true, true), count(true, false), count(false, true), count(false, false));
    let precision = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
    let recall = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    [(tp + tn) / p.len() as f64, precision, recall, f1]
}

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        let scale = 10f64.powi(rng.random_range(-2..4));
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0) * scale).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0) * scale).collect();

        let r = rmse(&p, &a).unwrap();
        worst = worst.max((r - naive_rmse(&p, &a)).abs() / r.max(1.0));

        let t = burst_threshold(&a).unwrap();
        let mean = a.iter().fold(0.0, |s, v| s + v) / n as f64;
        worst = worst.max((t - mean).abs() / t.max(1.0));

        let pl = label_bursts(&p, t);
        let al = label_bursts(&a, t);
        let naive_labels: Vec<bool> = a.iter().map(|&v| v > mean).collect();
        if al != naive_labels {
            return outcome(false, "burst labels disagree with strict > mean");
        }
        let rep = classification_report(&pl, &al).unwrap();
        let naive = naive_report(&pl, &al);
        for (x, y) in [rep.accuracy, rep.precision, rep.recall, rep.f1].iter().zip(naive) {
            worst = worst.max((x - y).abs());
        }
    }
    outcome(worst <= 1e-12, format!("1000 instances, max deviation {worst:.3e} (<= 1e-12)"))
}

// Criterion 3

fn partition_inertia(points: &[Vec<f64>], labels: &[usize], k: usize) -> Option<f64> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for d in 0..dim {
            sums[l][d] += p[d];
        }
    }
    if counts.contains(&0) {
        return None;
    }
    let mut total = 0.0;
    for (p, &l) in points.iter().zip(labels) {
        for d in 0..dim {
            let c = sums[l][d] / counts[l] as f64;
            total += (p[d] - c) * (p[d] - c);
        }
    }
    Some(total)
}

fn brute_force_optimum(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    for code in 0..k.pow(n as u32) {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % k;
            c /= k;
        }
        if let Some(v) = partition_inertia(points, &labels, k) {
            best = best.min(v);
        }
    }
    best
}

fn curated_suite() -> Vec<(Vec<Vec<f64>>, usize)> {
    let p = |v: &[(f64, f64)]| v.iter().map(|&(x, y)| vec![x, y]).collect::<Vec<_>>();
    vec![
        (p(&[(0.0, 0.0), (0.0, 1.0), (10.0, 10.0), (10.0, 11.0)]), 2),
        (p(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]), 3),
        (p(&[(0.0, 0.0), (1.0, 1.0), (10.0, 0.0), (11.0, 1.0), (0.0, 10.0), (1.0, 11.0)]), 3),
        (p(&[(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (8.0, 8.0), (8.5, 8.0), (8.0, 8.5), (-9.0, 4.0), (-9.5, 4.5)]), 3),
        (p(&[(1.0, 1.0), (2.0, 1.0), (1.0, 2.0), (2.0, 2.0), (9.0, 9.0), (10.0, 9.0), (9.0, 10.0)]), 2),
        (vec![vec![0.0], vec![1.0], vec![2.0], vec![10.0], vec![11.0], vec![30.0]], 3),
        (vec![vec![3.0, 1.0, 0.0], vec![3.0, 1.0, 0.0], vec![0.0, 4.0, 4.0], vec![0.5, 4.0, 4.0]], 2),
        (p(&[(0.0, 0.0), (0.0, 1.0), (10.0, 10.0), (10.0, 11.0)]), 1),
    ]
}

/// Instances with a Lloyd fixed point worse than the optimum that k-means++
/// can land in: {(0,0),(0,2)} vs {(5,0),(5,2),(20,1)} has inertia 154
/// against the optimum 29.
fn local_optimum_suite() -> Vec<(Vec<Vec<f64>>, usize)> {
    let p = |v: &[(f64, f64)]| v.iter().map(|&(x, y)| vec![x, y]).collect::<Vec<_>>();
    vec![(p(&[(0.0, 0.0), (0.0, 2.0), (5.0, 0.0), (5.0, 2.0), (20.0, 1.0)]), 2)]
}

fn monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0])
}

fn kmeans_optimality() -> Outcome {
    let mut runs = 0;
    for (i, (points, k)) in curated_suite().iter().enumerate() {
        let optimum = brute_force_optimum(points, *k);
        for seed in 0..20 {
            let r = kmeans(points, *k, seed, 100).unwrap();
            runs += 1;
            if (r.inertia - optimum).abs() > 1e-9 || !monotone(&r.inertia_trace) {
                return outcome(false, format!("curated #{i} seed {seed}: inertia {} vs optimum {optimum}", r.inertia));
            }
        }
    }
    let mut documented = 0;
    for (i, (points, k)) in local_optimum_suite().iter().enumerate() {
        let optimum = brute_force_optimum(points, *k);
        for seed in 0..20 {
            let r = kmeans(points, *k, seed, 100).unwrap();
            runs += 1;
            if r.inertia < optimum - 1e-9 || !monotone(&r.inertia_trace) {
                return outcome(false, format!("local-optimum #{i} seed {seed}: inertia {} vs optimum {optimum}", r.inertia));
            }
            documented += usize::from(r.inertia > optimum + 1e-9);
        }
    }
    let first = kmeans(&curated_suite()[0].0, 2, 0, 100).unwrap();
    if first.inertia != 1.0 {
        return outcome(false, format!("4-point example inertia {} != 1.0", first.inertia));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut local = 0;
    let random = 500;
    for seed in 0..random {
        let n = rng.random_range(1..=8usize);
        let k = rng.random_range(1..=3usize.min(n));
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        let optimum = brute_force_optimum(&points, k);
        let r = kmeans(&points, k, seed, 100).unwrap();
        runs += 1;
        if r.inertia < optimum - 1e-9 || !monotone(&r.inertia_trace) {
            return outcome(false, format!("random instance {seed}: inertia {} below optimum {optimum}", r.inertia));
        }
        if r.inertia > optimum + 1e-9 {
            local += 1;
        }
    }
    outcome(
        true,
        format!(
            "{runs} runs; curated suite optimal, inertia monotone; documented local optimum hit by {documented}/20 seeds; {local}/{random} random instances at a local optimum (>= bound holds)"
        ),
    )
}

// Criteria 4 and 5

fn bursty_packets(seed: u64) -> Vec<LabeledPacket> {
    label_synthetic(&SynthSpec::bundled().generate(seed).unwrap())
}

fn forecast(rep: Replication, packets: &[LabeledPacket], seed: u64) -> ForecastReport {
    let cfg = ExperimentConfig::for_replication(rep, seed);
    run_forecast(&rep.plan(cfg.max_run).unwrap(), packets, &cfg).unwrap()
}

fn flatline_and_nonzero(seed: u64) -> (Outcome, Option<ForecastReport>) {
    let packets = bursty_packets(seed);
    let flat = forecast(Replication::Lstm1x60, &packets, seed);
    let nonzero = forecast(Replication::NonZero1x10, &packets, seed);
    let improvement = 1.0 - nonzero.evaluation.test_rmse / nonzero.evaluation.baseline_rmse;
    let pass = flat.zero_fraction >= 0.8 && flat.evaluation.variance_ratio() < 0.1 && improvement >= 0.1;
    let detail = format!(
        "zero bins {:.1}%; 1x60 prediction/target variance {:.4} (< 0.1); nonzero-1x10 test RMSE {:.3} vs mean predictor {:.3}, {:.1}% lower (>= 10%)",
        100.0 * flat.zero_fraction,
        flat.evaluation.variance_ratio(),
        nonzero.evaluation.test_rmse,
        nonzero.evaluation.baseline_rmse,
        100.0 * improvement
    );
    (outcome(pass, detail), Some(nonzero))
}

fn burst_baselines(nonzero: Option<&ForecastReport>) -> Outcome {
    let Some(r) = nonzero.map(|r| &r.evaluation) else {
        return outcome(false, "no nonzero-1x10 run");
    };
    let f1 = r.burst.report.f1;
    outcome(
        f1 > r.all_positive_f1 && f1 > r.all_negative_f1,
        format!(
            "burst F1 {f1:.3} vs all-positive {:.3}, all-negative {:.3} (threshold {:.2})",
            r.all_positive_f1, r.all_negative_f1, r.burst.threshold
        ),
    )
}

// Criterion 6

fn classification() -> Outcome {
    let spec = SynthSpec {
        kind: SynthKind::Mixed,
        duration: 12_000.0,
        session_len: 60.0,
    };
    let trace = spec.generate(11).unwrap();
    let report = classify_sessions(&trace, &ClassifyConfig::with_seed(11)).unwrap();
    outcome(
        trace.sessions.len() >= 200 && report.accuracy >= 0.6,
        format!(
            "{} sessions ({} held out), {} test windows, accuracy {:.3} (>= 0.6, chance 0.25)",
            trace.sessions.len(),
            report.test_sessions,
            report.test_windows,
            report.accuracy
        ),
    )
}

// Criteria 7 and 9

fn traces() -> Vec<(String, Vec<LabeledPacket>)> {
    let mut out = Vec::new();
    let kinds = [
        SynthKind::Bursty,
        SynthKind::Mixed,
        SynthKind::App(cellflow::synth::App::Surfing),
        SynthKind::App(cellflow::synth::App::VoiceCall),
        SynthKind::App(cellflow::synth::App::VideoCall),
        SynthKind::App(cellflow::synth::App::Streaming),
    ];
    for kind in kinds {
        for seed in 0..3 {
            let spec = SynthSpec {
                kind,
                duration: 900.0,
                session_len: 60.0,
            };
            out.push((format!("{kind}/{seed}"), label_synthetic(&spec.generate(seed).unwrap())));
        }
    }
    out
}

fn padding_contracts(traces: &[(String, Vec<LabeledPacket>)]) -> Outcome {
    let mut compared = 0;
    for (name, packets) in traces {
        let bins = bin_packets(packets, 1.0).unwrap();
        let zero = zero_pad(&bins, 1.0).unwrap();
        let dense = zero.windows(2).all(|w| w[1].bin_index == w[0].bin_index + 1)
            && zero.first().map(|b| b.bin_index) == Some(0);
        if !dense {
            return outcome(false, format!("{name}: zero_pad output has missing indices"));
        }
        let long_gap = bins.windows(2).any(|w| w[1].bin_index - w[0].bin_index - 1 > 2);
        if long_gap {
            compared += 1;
            let pro = pro_pad(&bins, 1.0, 2).unwrap();
            if zero_fraction(&pro) >= zero_fraction(&zero) {
                return outcome(
                    false,
                    format!("{name}: pro {} not below zero {}", zero_fraction(&pro), zero_fraction(&zero)),
                );
            }
        }
    }
    outcome(
        true,
        format!("{} traces dense under zero_pad; pro_pad lower zero fraction on all {compared} with gaps > 2", traces.len()),
    )
}

fn conservation(traces: &[(String, Vec<LabeledPacket>)]) -> Outcome {
    let mut checks = 0;
    for (name, packets) in traces {
        let total = |dir: Direction| {
            packets
                .iter()
                .filter(|p| p.direction == dir)
                .fold((0u64, 0u64), |(c, b), p| (c + 1, b + p.length()))
        };
        let (uc, ub) = total(Direction::Uplink);
        let (dc, db) = total(Direction::Downlink);
        for size in [1.0, 3.0, 30.0, 60.0] {
            for bins in [bin_packets(packets, size).unwrap(), zero_pad(&bin_packets(packets, size).unwrap(), size).unwrap()] {
                let sum = bins.iter().fold((0, 0, 0, 0), |s, b| {
                    (s.0 + b.uplink_count, s.1 + b.uplink_bytes, s.2 + b.downlink_count, s.3 + b.downlink_bytes)
                });
                checks += 1;
                if sum != (uc, ub, dc, db) {
                    return outcome(false, format!("{name} at {size}s: {sum:?} != {:?}", (uc, ub, dc, db)));
                }
            }
        }
    }
    outcome(true, format!("{checks} (trace, bin size, padding) combinations conserve counts and bytes"))
}

// Criterion 8

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let names: BTreeSet<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.into_iter().map(|n| (n.clone(), fs::read(dir.join(&n)).unwrap())).collect()
}

fn determinism() -> Outcome {
    let spec = SynthSpec {
        duration: 1200.0,
        ..SynthSpec::bundled()
    };
    let root = tempfile::tempdir().unwrap();
    let mut compared = 0;
    for rep in Replication::ALL {
        let mut outputs = Vec::new();
        for attempt in 0..2 {
            let packets = label_synthetic(&spec.generate(5).unwrap());
            let mut cfg = ExperimentConfig::with_seed(5);
            cfg.train.hidden_size = 6;
            cfg.train.epochs = 2;
            let report = run(rep, &packets, &cfg).unwrap();
            let dir = root.path().join(format!("{rep}-{attempt}"));
            write_report(&dir, rep, 5, &report).unwrap();
            outputs.push(files(&dir));
        }
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            return outcome(false, format!("{rep}: outputs differ between runs"));
        }
        compared += outputs[0].len();
    }
    outcome(true, format!("{} presets, {compared} files identical across reruns", Replication::ALL.len()))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 gradient check", timed(Some(Duration::from_secs(60)), gradients)));
    results.push(("2 metric oracles", timed(None, metrics)));
    results.push(("3 k-means optimality", timed(None, kmeans_optimality)));

    let start = Instant::now();
    let (mut flat, nonzero) = flatline_and_nonzero(7);
    let took = start.elapsed();
    flat.detail = format!("{} [{:.1}s]", flat.detail, took.as_secs_f64());
    if took > Duration::from_secs(600) {
        flat.pass = false;
    }
    results.push(("4 flatline bias / nonzero improvement", flat));
    results.push(("5 burst F1 beats baselines", burst_baselines(nonzero.as_ref())));
    results.push(("6 application classification", timed(Some(Duration::from_secs(300)), classification)));

    let traces = traces();
    results.push(("7 padding contracts", timed(None, || padding_contracts(&traces))));
    results.push(("8 end-to-end determinism", timed(None, determinism)));
    results.push(("9 conservation", timed(None, || conservation(&traces))));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
