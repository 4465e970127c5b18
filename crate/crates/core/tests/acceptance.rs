//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p gated-depth --test acceptance`.

use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gated_depth::classic::{baseline_estimate, build_section_table, BaselineOptions, SectionTable};
use gated_depth::dataset::{prefilter, split, standardize_all, standardize_triple, RawDataset, StandardizedSample};
use gated_depth::eval::{compare_estimators, BaselineEstimator, BinnedError, NetworkEstimator};
use gated_depth::gating::{slice_support, SliceConfig};
use gated_depth::nn::grid::{grid_search, GridDataset, GridOptions, GridSpec};
use gated_depth::nn::model::init_params;
use gated_depth::nn::probe::{count_probe_triples, is_probe_triple, PROBE_TRIPLE_COUNT};
use gated_depth::nn::train::{train, TrainConfig};
use gated_depth::nn::{predict_depth, Activation, NetworkArch, NetworkModel};
use gated_depth::scene::{
    generate_dataset, AlphaRange, CalibrationReference, NoiseModel, RangeDistribution, Sample, ScenePoint, Simulator,
};
use gated_depth::VariantTag;

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

fn simulator() -> Simulator {
    Simulator::calibrated(SliceConfig::automotive_preset(), 0.0, 200.0, CalibrationReference::BrightestPlateau)
        .unwrap()
}

fn preset_table() -> SectionTable {
    build_section_table(&SliceConfig::automotive_preset()).unwrap()
}

fn support_reproduction() -> Outcome {
    let expected = [(3.0, 72.0), (18.0, 123.0), (57.0, 176.0)];
    let got: Vec<(f64, f64)> = SliceConfig::automotive_preset().iter().map(slice_support).collect();
    let pass = got
        .iter()
        .zip(expected)
        .all(|(g, e)| (g.0 - e.0).abs() <= 1.0 && (g.1 - e.1).abs() <= 1.0);
    let text: Vec<String> = got.iter().map(|(a, b)| format!("({a:.2}, {b:.2})")).collect();
    outcome(pass, format!("supports {}", text.join(" ")))
}

fn section_count() -> Outcome {
    let table = preset_table();
    // The span where the first and last slices overlap: slice 3 opens, slice 1 closes.
    let slices = SliceConfig::automotive_preset();
    let (lo, hi) = (slice_support(&slices[2]).0, slice_support(&slices[0]).1);
    let mid: Vec<usize> = table.overlapping(lo, hi).map(|s| s.estimators.len()).collect();
    let pass = table.len() == 9 && !mid.is_empty() && mid.iter().all(|&n| n == 2);
    outcome(pass, format!("{} sections, estimators in {lo:.2}-{hi:.2} m: {mid:?}", table.len()))
}

fn baseline_noiseless_sweep() -> Outcome {
    let sim = simulator();
    let table = preset_table();
    let est = BaselineEstimator {
        table: &table,
        options: BaselineOptions::default(),
    };
    let mut samples = vec![];
    for &alpha in &[0.25, 0.5, 0.9] {
        for i in 0..=160 {
            let r = 20.0 + 0.5 * i as f64;
            let point = ScenePoint::new(r, alpha).unwrap();
            samples.push(sim.simulate_triple(point, &NoiseModel::noiseless(), i).unwrap());
        }
    }
    let cmp = compare_estimators(&[&est], &samples, 5.0).unwrap();
    let report = &cmp.reports[0];
    let Some(binned) = &report.binned else {
        return outcome(false, "no estimates");
    };
    let worst = binned.bins.iter().map(|b| b.mae).fold(0.0, f64::max);
    outcome(
        worst < 1.0,
        format!("worst bin MAE {worst:.3} m over {} bins, coverage {:.2}", binned.bins.len(), report.coverage),
    )
}

/// Shared training run for the end-to-end criteria.
struct EndToEnd {
    nn: BinnedError,
    baseline: BinnedError,
    epochs: usize,
    seconds: f64,
}

fn end_to_end() -> &'static EndToEnd {
    static CELL: OnceLock<EndToEnd> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let sim = simulator();
        let ranges = RangeDistribution::Uniform { lo: 10.0, hi: 100.0 };
        let alphas = AlphaRange::new(0.05, 0.9).unwrap();
        let train_raw = generate_dataset(100_000, &ranges, alphas, &sim, &NoiseModel::new(2.0, 1001).unwrap()).unwrap();
        let test = generate_dataset(20_000, &ranges, alphas, &sim, &NoiseModel::new(2.0, 2002).unwrap()).unwrap();

        let kept = prefilter(&RawDataset::new(train_raw, "synthetic"));
        let data = standardize_all(&kept.samples).unwrap();
        let (tr, val) = split(&data, 0.8, 3003).unwrap();
        let arch = NetworkArch::new(vec![40], Activation::Relu).unwrap();
        let cfg = TrainConfig::for_variant(VariantTag::Dataset3, 4004);
        let (model, history) = train(&tr, &val, &arch, &cfg).unwrap();

        let table = preset_table();
        let nn = NetworkEstimator { model: &model };
        let base = BaselineEstimator {
            table: &table,
            options: BaselineOptions::default(),
        };
        let cmp = compare_estimators(&[&nn, &base], &test, 5.0).unwrap();
        EndToEnd {
            nn: cmp.reports[0].binned.clone().unwrap(),
            baseline: cmp.reports[1].binned.clone().unwrap(),
            epochs: history.epochs.len(),
            seconds: start.elapsed().as_secs_f64(),
        }
    })
}

fn nn_relative_accuracy() -> Outcome {
    let e = end_to_end();
    let bins: Vec<_> = e.nn.bins_within(25.0, 80.0).collect();
    let worst = bins.iter().max_by(|a, b| a.rel_mae.total_cmp(&b.rel_mae)).unwrap();
    outcome(
        bins.len() == 11 && worst.rel_mae <= 0.05,
        format!(
            "worst relative MAE {:.2}% at {} m over {} bins ({} epochs, {:.0} s)",
            100.0 * worst.rel_mae,
            worst.center,
            bins.len(),
            e.epochs,
            e.seconds
        ),
    )
}

fn nn_beats_baseline() -> Outcome {
    let e = end_to_end();
    let mut worse = vec![];
    let mut rows = vec![];
    for b in e.nn.bins_within(25.0, 50.0) {
        match e.baseline.bin_at(b.center) {
            Some(base) => {
                rows.push(format!("{}: {:.2}/{:.2}", b.center, b.mae, base.mae));
                if b.mae > base.mae {
                    worse.push(b.center);
                }
            }
            None => rows.push(format!("{}: {:.2}/-", b.center, b.mae)),
        }
    }
    outcome(worse.is_empty() && rows.len() == 5, format!("nn/baseline MAE {}", rows.join(", ")))
}

/// Sign pattern of every relu pre-activation and residual in a batch.
fn kink_pattern(model: &NetworkModel, batch: &[StandardizedSample]) -> Vec<bool> {
    let relu = model.arch().activation() == Activation::Relu;
    let mut out = vec![];
    for s in batch {
        let trace = model.forward_trace(&s.x);
        if relu {
            for layer in &trace.pre_activations[..trace.pre_activations.len() - 1] {
                out.extend(layer.iter().map(|&z| z > 0.0));
            }
        }
        out.push(trace.output > s.r);
    }
    out
}

fn batch_loss(model: &NetworkModel, batch: &[StandardizedSample]) -> f64 {
    model.mae(batch).unwrap()
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let layouts = [vec![], vec![4], vec![6, 3], vec![5, 4, 3]];
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    for trial in 0..20 {
        let act = Activation::ALL[trial % 3];
        let arch = NetworkArch::new(layouts[trial % layouts.len()].clone(), act).unwrap();
        let mut model = init_params(&arch, trial as u64);
        let params: Vec<f64> = (0..arch.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        model.set_flat_params(&params).unwrap();
        let batch: Vec<StandardizedSample> = (0..1 + trial % 7)
            .map(|_| StandardizedSample {
                x: [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
                r: rng.gen_range(-2.0..2.0),
            })
            .collect();
        let analytic = model.backward(&batch).unwrap().flat();
        let base_pattern = kink_pattern(&model, &batch);
        for (i, &a) in analytic.iter().enumerate() {
            let mut plus = params.clone();
            plus[i] += h;
            let mut minus = params.clone();
            minus[i] -= h;
            let mut mp = model.clone();
            mp.set_flat_params(&plus).unwrap();
            let mut mm = model.clone();
            mm.set_flat_params(&minus).unwrap();
            if kink_pattern(&mp, &batch) != base_pattern || kink_pattern(&mm, &batch) != base_pattern {
                skipped += 1;
                continue;
            }
            let numeric = (batch_loss(&mp, &batch) - batch_loss(&mm, &batch)) / (2.0 * h);
            let scale = a.abs().max(numeric.abs());
            // Coordinates with no gradient on either side have nothing to compare.
            let err = if scale < 1e-8 { (a - numeric).abs() } else { (a - numeric).abs() / scale };
            worst = worst.max(err);
            checked += 1;
        }
    }
    outcome(
        worst < 1e-4 && checked > 0,
        format!("max relative error {worst:.2e} over {checked} coordinates ({skipped} at kinks)"),
    )
}

fn probe_count() -> Outcome {
    // Independent formulation of the probe predicate.
    let oracle = |s: [u8; 3]| {
        let mut v = s;
        v.sort_unstable();
        let middle_is_strict_min = s[1] == v[0] && s[0] != v[0] && s[2] != v[0];
        v[2] <= 249 && (v[2] as i32 - v[0] as i32) >= 7 && !middle_is_strict_min
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let disagreements = (0..100_000)
        .filter(|_| {
            let s: [u8; 3] = rng.gen();
            oracle(s) != is_probe_triple(s)
        })
        .count();
    let n = count_probe_triples();
    let in_range = (7_000_000..=9_000_000).contains(&n);
    outcome(
        in_range && n == PROBE_TRIPLE_COUNT && disagreements == 0,
        format!("{n} valid triples (pinned {PROBE_TRIPLE_COUNT}, required 7e6..9e6), {disagreements} predicate mismatches"),
    )
}

fn invariance_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let arch = NetworkArch::new(vec![8, 4], Activation::Tanh).unwrap();
    let mut model = init_params(&arch, 1);
    let params: Vec<f64> = (0..arch.param_count()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    model.set_flat_params(&params).unwrap();

    // (a) affine invariance of prediction
    let mut affine_cases = 0;
    let mut affine_worst: f64 = 0.0;
    while affine_cases < 10_000 {
        let s: [u8; 3] = [rng.gen_range(0..=120), rng.gen_range(0..=120), rng.gen_range(0..=120)];
        let a = rng.gen_range(1..=2u32);
        let b = rng.gen_range(0..=10u32);
        let t = s.map(|v| (a * v as u32 + b) as u8);
        let (Some(p), Some(q)) = (predict_depth(&model, s), predict_depth(&model, t)) else { continue };
        affine_worst = affine_worst.max((p - q).abs());
        affine_cases += 1;
    }

    // (b) baseline scale invariance, on triples whose lit slices stay lit
    let sim = simulator();
    let table = preset_table();
    let opts = BaselineOptions::default();
    let mut scale_cases = 0;
    let mut scale_worst: f64 = 0.0;
    for i in 0..2000 {
        let r = 20.0 + 100.0 * i as f64 / 2000.0;
        let clean = sim.expected_gray(ScenePoint::new(r, rng.gen_range(0.1..1.0)).unwrap()).unwrap();
        let k = rng.gen_range(1.0..3.0);
        let scaled = clean.map(|v| v * k);
        if clean.iter().any(|&v| v > 0.0 && v < opts.dark_floor) {
            continue;
        }
        let (Some(p), Some(q)) = (baseline_estimate(&clean, &table, &opts), baseline_estimate(&scaled, &table, &opts))
        else {
            continue;
        };
        scale_worst = scale_worst.max((p - q).abs());
        scale_cases += 1;
    }

    // (c) prefilter idempotence
    let raw: Vec<Sample> = (0..20_000).map(|_| Sample::new(rng.gen(), rng.gen_range(1.0..150.0))).collect();
    let once = prefilter(&RawDataset::new(raw, "random"));
    let idempotent = prefilter(&once) == once;

    // (d) z-score moments
    let mut moment_worst: f64 = 0.0;
    for _ in 0..10_000 {
        let s = [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)];
        let z = standardize_triple(s).unwrap();
        let m = (z[0] + z[1] + z[2]) / 3.0;
        let sd = (z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 2.0).sqrt();
        moment_worst = moment_worst.max(m.abs()).max((sd - 1.0).abs());
    }

    let pass = affine_worst <= 1e-9 && scale_cases > 1000 && scale_worst <= 1e-9 && idempotent && moment_worst <= 1e-9;
    outcome(
        pass,
        format!(
            "affine {affine_worst:.1e} m, scale {scale_worst:.1e} m over {scale_cases}, idempotent {idempotent}, moments {moment_worst:.1e}"
        ),
    )
}

fn determinism() -> Outcome {
    let sim = simulator();
    let ranges = RangeDistribution::Uniform { lo: 10.0, hi: 100.0 };
    let alphas = AlphaRange::new(0.05, 0.9).unwrap();
    let raw = generate_dataset(3000, &ranges, alphas, &sim, &NoiseModel::new(2.0, 8).unwrap()).unwrap();
    let data = standardize_all(&prefilter(&RawDataset::new(raw, "d")).samples).unwrap();
    let (tr, val) = split(&data, 0.8, 9).unwrap();

    let arch = NetworkArch::new(vec![40], Activation::Relu).unwrap();
    let mut cfg = TrainConfig::for_variant(VariantTag::Dataset3, 10);
    cfg.max_epochs = 15;
    let run_train = || {
        let (model, history) = train(&tr, &val, &arch, &cfg).unwrap();
        let mut bytes = vec![];
        model.write_to(&mut bytes).unwrap();
        history.write_csv(&mut bytes).unwrap();
        bytes
    };

    let grid = GridSpec {
        learning_rates: vec![0.01, 0.001],
        batch_sizes: vec![16, 64],
        hidden_layouts: vec![vec![10], vec![20, 10]],
        activations: vec![Activation::Relu],
    };
    let datasets = vec![GridDataset {
        name: "dataset3".into(),
        train: tr.clone(),
        val: val.clone(),
    }];
    let mut opts = GridOptions::new(11);
    opts.max_epochs = 5;
    let run_grid = || {
        let report = grid_search(&datasets, &grid, &opts).unwrap();
        let mut bytes = vec![];
        report.write_results_csv(&mut bytes).unwrap();
        report.write_ranking_csv(&mut bytes).unwrap();
        bytes
    };

    let train_same = run_train() == run_train();
    let grid_same = run_grid() == run_grid();
    outcome(train_same && grid_same, format!("train identical {train_same}, grid identical {grid_same}"))
}

fn grid_cardinality() -> Outcome {
    let n = GridSpec::full().configs().len();
    outcome(n == 720, format!("{n} configurations"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    // Accept and ignore libtest flags such as `--nocapture` or filters.
    let criteria: [Criterion; 10] = [
        ("slice supports", support_reproduction),
        ("section table", section_count),
        ("baseline noiseless sweep", baseline_noiseless_sweep),
        ("network relative accuracy 25-80 m", nn_relative_accuracy),
        ("network vs baseline 25-50 m", nn_beats_baseline),
        ("gradient check", gradient_check),
        ("probe triple count", probe_count),
        ("invariances", invariance_suite),
        ("determinism", determinism),
        ("grid cardinality", grid_cardinality),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<36} {}  {} [{:.1} s]",
            i + 1,
            name,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
