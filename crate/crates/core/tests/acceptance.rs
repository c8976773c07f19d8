//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if any fail.

mod common;

use std::time::{Duration, Instant};

use fedsense::experiment::{
    emit_report, nearest_rank, run_both, Cell, Experiment, ExperimentConfig, ExperimentReport,
    MetricName, ReportFiles, Role, Scenario,
};
use fedsense::features::{
    decision_metric, eigenvalues_hermitian, extract_features, ComplexMatrix, FeatureParams,
};
use fedsense::federation::{blend, idw_weights, own_weight, FusionPolicy};
use fedsense::model::{init_random, stratified_k_fold, MlpCoefficients};
use fedsense::seed::{derive_seed, rng};
use fedsense::signal::{apply_channel, generate_noise, generate_signal, Label, Topology};
use rand::Rng;

const SEEDS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: u32, name: &str, limit: Duration, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = run();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let pass = out.pass && in_time;
    println!(
        "criterion {id:>2} [{}] {name}: {} ({:.1}s of {}s{})",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", over time" }
    );
    pass
}

fn eigen_oracle() -> Outcome {
    let mut r = rng(derive_seed(0, "acceptance/eigen"));
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let n = 1 + i % 4;
        let m = common::random_hermitian(&mut r, n);
        let got = eigenvalues_hermitian(&m).unwrap();
        let want = common::eigenvalues_by_charpoly(&m);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    let eye = eigenvalues_hermitian(&ComplexMatrix::identity(8)).unwrap();
    let ones = eye.len() == 8 && eye.iter().all(|&v| (v - 1.0).abs() <= 1e-12);
    let t = decision_metric(&eye).unwrap();
    Outcome {
        pass: worst <= 1e-8 && ones && (t - 1.0).abs() <= 1e-12,
        detail: format!("max |jacobi - charpoly| = {worst:.2e} (tol 1e-8), identity ones = {ones}, T(I8) = {t}"),
    }
}

fn gradient_check() -> Outcome {
    let mut r = rng(derive_seed(0, "acceptance/gradient"));
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let dim = r.random_range(1..=12);
        let model = common::random_model(&mut r, dim);
        let size = r.random_range(1..=16);
        let batch = common::random_batch(&mut r, dim, size);
        let analytic = model.gradient(&batch).unwrap().to_flat();
        let numeric = common::finite_difference_gradient(&model, &batch, 1e-6);
        for (a, n) in analytic.iter().zip(&numeric) {
            let denom = a.abs().max(n.abs()).max(1e-6);
            worst = worst.max((a - n).abs() / denom);
        }
    }
    Outcome {
        pass: worst < 1e-4,
        detail: format!("max relative error {worst:.2e} over 100 draws (tol 1e-4)"),
    }
}

fn feature_separation() -> Outcome {
    let params = FeatureParams { n: 1024, l: 8, ..FeatureParams::default() };
    let len = params.n * params.l;
    let base = derive_seed(0, "acceptance/separation");
    let mut noise_t = Vec::new();
    let mut signal_t = Vec::new();
    for i in 0..100u64 {
        let noise = generate_noise(len, 0.0, derive_seed(base, &format!("noise/{i}"))).unwrap();
        noise_t.push(extract_features(&noise, &params).unwrap().metric_t);
        let tx = generate_signal(len, 10.0, 40, derive_seed(base, &format!("tx/{i}"))).unwrap();
        let rx = apply_channel(&tx, 1.0, 2.0, 0.0, derive_seed(base, &format!("rx/{i}"))).unwrap();
        signal_t.push(extract_features(&rx, &params).unwrap().metric_t);
    }
    let mut sorted = noise_t.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = nearest_rank(&sorted, 95.0);
    let rate = |v: &[f64]| v.iter().filter(|&&t| t > threshold).count() as f64 / v.len() as f64;
    let (pd, pfa) = (rate(&signal_t), rate(&noise_t));
    Outcome {
        pass: pd >= 0.9 && pfa <= 0.1,
        detail: format!("SNR 10 dB, 200 frames: pd {pd:.3} (>= 0.9), pfa {pfa:.3} (<= 0.1)"),
    }
}

/// Deprived-sensor and whole-cell figures of one seed at the desk operating point.
struct SeedRun {
    ref_pd: f64,
    ref_pfa: f64,
    fed_pd: f64,
    fed_pfa: f64,
    f1_k1: f64,
    f1_k3: f64,
}

fn mean_f1(report: &ExperimentReport, neighbors: usize) -> f64 {
    let values: Vec<f64> = report
        .units
        .iter()
        .filter(|u| u.cell.neighbors == Some(neighbors))
        .filter_map(|u| u.counts.metrics().f1)
        .collect();
    values.iter().sum::<f64>() / values.len() as f64
}

fn desk_runs() -> Vec<SeedRun> {
    let policy = FusionPolicy::default();
    let headline = Cell::federated(policy.idw_exponent, policy.neighbor_count);
    (1..=SEEDS)
        .map(|seed| {
            let cfg = ExperimentConfig { seed, ..ExperimentConfig::default() };
            let exp = Experiment::prepare(&cfg).unwrap();
            let reference = exp.reference().unwrap();
            let federated = exp.federated().unwrap();
            let dep = |r: &ExperimentReport, c: Cell, m| r.mean(c, Role::Deprived, m).unwrap();
            SeedRun {
                ref_pd: dep(&reference, Cell::REFERENCE, MetricName::Pd),
                ref_pfa: dep(&reference, Cell::REFERENCE, MetricName::Pfa),
                fed_pd: dep(&federated, headline, MetricName::Pd),
                fed_pfa: dep(&federated, headline, MetricName::Pfa),
                f1_k1: mean_f1(&federated, 1),
                f1_k3: mean_f1(&federated, 3),
            }
        })
        .collect()
}

fn fl_rescue(runs: &[SeedRun]) -> Outcome {
    let gains: Vec<f64> = runs.iter().map(|r| r.fed_pd - r.ref_pd).collect();
    let improved = gains.iter().filter(|&&g| g > 0.0).count();
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    let ref_mean = runs.iter().map(|r| r.ref_pd).sum::<f64>() / runs.len() as f64;
    let fed_mean = runs.iter().map(|r| r.fed_pd).sum::<f64>() / runs.len() as f64;
    Outcome {
        pass: improved >= 9 && mean >= 0.15,
        detail: format!(
            "deprived pd {ref_mean:.3} -> {fed_mean:.3}; improved in {improved}/{SEEDS} seeds (>= 9), mean gain {mean:.3} (>= 0.15)"
        ),
    }
}

fn false_alarm_cost(runs: &[SeedRun]) -> Outcome {
    let n = runs.len() as f64;
    let pd_gain = runs.iter().map(|r| r.fed_pd - r.ref_pd).sum::<f64>() / n;
    let pfa_rise = runs.iter().map(|r| r.fed_pfa - r.ref_pfa).sum::<f64>() / n;
    let ref_pfa = runs.iter().map(|r| r.ref_pfa).sum::<f64>() / n;
    let fed_pfa = runs.iter().map(|r| r.fed_pfa).sum::<f64>() / n;
    Outcome {
        pass: pfa_rise <= 3.0 * pd_gain,
        detail: format!(
            "deprived pfa {ref_pfa:.3} -> {fed_pfa:.3}; increase {pfa_rise:+.3} <= 3 x pd gain {pd_gain:.3}"
        ),
    }
}

fn neighbor_effect(runs: &[SeedRun]) -> Outcome {
    let wins = runs.iter().filter(|r| r.f1_k3 >= r.f1_k1).count();
    let diffs: Vec<String> = runs.iter().map(|r| format!("{:+.3}", r.f1_k3 - r.f1_k1)).collect();
    Outcome {
        pass: wins >= 8,
        detail: format!("F1(k=3) >= F1(k=1) in {wins}/{SEEDS} seeds (>= 8); diffs [{}]", diffs.join(" ")),
    }
}

fn idw_spread() -> Outcome {
    let mut wins = 0;
    let mut diffs = Vec::new();
    for seed in 1..=SEEDS {
        let cfg = ExperimentConfig {
            seed,
            topology: Topology::uniform_range(),
            idw_exponents: vec![0.0, 3.0],
            neighbor_counts: vec![3],
            ..ExperimentConfig::default()
        };
        let report = Experiment::prepare(&cfg).unwrap().federated().unwrap();
        let w0 = report.f1_spread(Cell::federated(0.0, 3)).unwrap();
        let w3 = report.f1_spread(Cell::federated(3.0, 3)).unwrap();
        if w3 >= w0 {
            wins += 1;
        }
        diffs.push(format!("{:+.3}", w3 - w0));
    }
    Outcome {
        pass: wins >= 7,
        detail: format!("width(p=3) >= width(p=0) in {wins}/{SEEDS} seeds (>= 7); diffs [{}]", diffs.join(" ")),
    }
}

fn weighting_units() -> Outcome {
    let mut r = rng(derive_seed(0, "acceptance/weighting"));
    let mut failures = Vec::new();
    for _ in 0..1000 {
        let k = r.random_range(1..=6);
        let d: Vec<f64> = (0..k).map(|_| r.random_range(0.1..20.0)).collect();
        let p = r.random_range(0.0..4.0);
        let w = idw_weights(&d, p).unwrap();
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            failures.push("sum");
        }
        let scale = r.random_range(0.01..100.0);
        let scaled: Vec<f64> = d.iter().map(|x| x * scale).collect();
        let ws = idw_weights(&scaled, p).unwrap();
        if w.iter().zip(&ws).any(|(a, b)| (a - b).abs() > 1e-12) {
            failures.push("scale");
        }
        let uniform = idw_weights(&d, 0.0).unwrap();
        if uniform.iter().any(|&u| (u - 1.0 / k as f64).abs() > 1e-12) {
            failures.push("p=0");
        }
    }
    let policy = FusionPolicy::default();
    if own_weight(0, &policy, Some(1.0)).unwrap() != 0.8 {
        failures.push("w_own start");
    }
    if own_weight(policy.rounds - 1, &policy, Some(1.0)).unwrap() != 0.99 {
        failures.push("w_own end");
    }
    for _ in 0..1000 {
        let dim = r.random_range(1..=6);
        let own = init_random(dim, r.random()).unwrap();
        let k = r.random_range(1..=4);
        let others: Vec<MlpCoefficients> = (0..k).map(|_| init_random(dim, r.random()).unwrap()).collect();
        let w = idw_weights(&(0..k).map(|_| r.random_range(0.5..10.0)).collect::<Vec<_>>(), 2.0).unwrap();
        let w_own = r.random_range(0.0..=1.0);
        let terms: Vec<(&MlpCoefficients, f64)> = others.iter().zip(w.iter().copied()).collect();
        let out = blend(&own, w_own, &terms).unwrap().to_flat();
        let flats: Vec<Vec<f64>> = std::iter::once(&own).chain(&others).map(|m| m.to_flat()).collect();
        for (i, v) in out.iter().enumerate() {
            let lo = flats.iter().map(|f| f[i]).fold(f64::INFINITY, f64::min);
            let hi = flats.iter().map(|f| f[i]).fold(f64::NEG_INFINITY, f64::max);
            if *v < lo - 1e-12 || *v > hi + 1e-12 {
                failures.push("convexity");
                break;
            }
        }
    }
    failures.dedup();
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "IDW sum/uniform/scale on 1000 draws, w_own 0.8 -> 0.99 exact, 1000 convex blends".into()
        } else {
            format!("violations: {}", failures.join(", "))
        },
    }
}

fn kfold_balance() -> Outcome {
    let mut r = rng(derive_seed(0, "acceptance/kfold"));
    let mut bad = 0;
    for case in 0..1000u64 {
        let k = r.random_range(2..=10);
        let pos = r.random_range(k..=k + 60);
        let neg = r.random_range(k..=k + 60);
        let mut labels: Vec<Label> = (0..pos + neg).map(|i| Label::from_bool(i < pos)).collect();
        rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut r);
        let folds = stratified_k_fold(&labels, k, case).unwrap();
        let mut seen = vec![0u32; labels.len()];
        let mut ok = folds.len() == k;
        for f in &folds {
            for &i in &f.test {
                seen[i] += 1;
            }
            let mut all: Vec<usize> = f.train.iter().chain(&f.test).copied().collect();
            all.sort_unstable();
            ok &= all == (0..labels.len()).collect::<Vec<_>>();
            for (class, total) in [(Label::SignalPresent, pos), (Label::NoiseOnly, neg)] {
                let count = f.test.iter().filter(|&&i| labels[i] == class).count() as f64;
                ok &= (count - total as f64 / k as f64).abs() <= 1.0;
            }
        }
        ok &= seen.iter().all(|&c| c == 1);
        if !ok {
            bad += 1;
        }
    }
    Outcome {
        pass: bad == 0,
        detail: format!("{bad} of 1000 random label sets violate partition or balance"),
    }
}

fn determinism() -> Outcome {
    let cfg = ExperimentConfig::default();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let (reference, federated) = run_both(&cfg).unwrap();
        emit_report(&reference, dir.path(), false).unwrap();
        emit_report(&federated, dir.path(), false).unwrap();
    }
    let mut compared = 0;
    let mut differing = Vec::new();
    for scenario in [Scenario::Reference, Scenario::Federated] {
        let [a, b] = [0, 1].map(|i| ReportFiles::new(dirs[i].path(), scenario));
        for (x, y) in [(&a.report, &b.report), (&a.cdf, &b.cdf), (&a.units, &b.units)] {
            compared += 1;
            if std::fs::read(x).unwrap() != std::fs::read(y).unwrap() {
                differing.push(x.file_name().unwrap().to_string_lossy().into_owned());
            }
        }
    }
    Outcome {
        pass: differing.is_empty(),
        detail: format!("{compared} CSVs compared across two runs, differing: [{}]", differing.join(", ")),
    }
}

fn main() {
    let s = Duration::from_secs;
    let mut results = vec![
        check(1, "eigen oracle", s(10), eigen_oracle),
        check(2, "gradient check", s(10), gradient_check),
        check(3, "feature separation", s(60), feature_separation),
    ];
    let start = Instant::now();
    let runs = desk_runs();
    let shared = start.elapsed();
    let budget = s(600).saturating_sub(shared);
    results.push(check(4, "FL rescue", budget, || fl_rescue(&runs)));
    results.push(check(5, "false-alarm cost", budget, || false_alarm_cost(&runs)));
    results.push(check(6, "neighbour count", budget, || neighbor_effect(&runs)));
    println!("             (criteria 4-6 share {:.1}s of desk runs)", shared.as_secs_f64());
    results.push(check(7, "IDW spread", s(600), idw_spread));
    results.push(check(8, "weighting units", s(10), weighting_units));
    results.push(check(9, "stratified k-fold", s(10), kfold_balance));
    results.push(check(10, "determinism", s(600), determinism));
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
