//! One function per subcommand. Each writes its outputs under the output
//! directory plus a `<command>.manifest` that doubles as a config file for
//! rerunning the same step.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use gated_depth::dataset::{build_dataset_with_report, prefilter_with_report, standardize_all};
use gated_depth::eval::{compare_estimators, BaselineEstimator, NetworkEstimator};
use gated_depth::gating::linspace_step;
use gated_depth::nn::grid::{grid_search, GridDataset, GridOptions, GridSpec};
use gated_depth::nn::probe::probe_learned_function;
use gated_depth::nn::train::train;
use gated_depth::raster::{read_pgm8, write_depth_csv, write_pgm8};
use gated_depth::scene::{generate_dataset, ramp_scene};
use gated_depth::{
    build_section_table, load_samples, render_depth_map, rip, slice_support, split, write_samples, Atmosphere,
    DatasetVariant, DepthEstimator, Error, NetworkModel, Raster, RunConfig, SectionTable, SliceImageSet,
    StandardizedSample, VariantTag,
};

use crate::error::{CliError, CliResult};
use crate::{
    Cli, Command, DepthmapArgs, EstimatorKind, EvalArgs, GlobalOpts, GridArgs, GridKind, PredictArgs,
    PreprocessArgs, ProbeArgs, RipArgs, SceneKind, SimulateArgs, TrainArgs,
};

pub fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = load_config(&cli.global)?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let outputs = match &cli.command {
        Command::Rip(a) => rip_cmd(&cfg, a)?,
        Command::Simulate(a) => simulate(&cfg, a)?,
        Command::Preprocess(a) => preprocess(&cfg, a)?,
        Command::Train(a) => train_cmd(&cfg, a)?,
        Command::Gridsearch(a) => gridsearch(&cfg, a)?,
        Command::Predict(a) => predict(&cfg, a)?,
        Command::Depthmap(a) => depthmap(&cfg, a)?,
        Command::Eval(a) => eval(&cfg, a)?,
        Command::Probe(a) => probe(&cfg, a)?,
        Command::Sections(_) => sections(&cfg)?,
    };
    write_manifest(&cfg, cli.command.name(), &outputs)
}

fn load_config(g: &GlobalOpts) -> CliResult<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            Error::Io { .. } => CliError::from(e),
            other => CliError::Usage(format!("config {other}")),
        })?,
        None => RunConfig::default(),
    };
    for kv in &g.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())
            .map_err(|e| CliError::Usage(format!("--set {kv}: {e}")))?;
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &g.output_dir {
        cfg.output_dir = dir.clone();
    }
    cfg.validate().map_err(|e| CliError::Usage(format!("config: {e}")))?;
    Ok(cfg)
}

fn write_manifest(cfg: &RunConfig, command: &str, outputs: &[PathBuf]) -> CliResult<()> {
    let path = cfg.output_dir.join(format!("{command}.manifest"));
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let names: Vec<String> = outputs.iter().map(|p| p.display().to_string()).collect();
    write_with(&path, |w| {
        writeln!(w, "# command: {command}")?;
        writeln!(w, "# version: {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(w, "# config_hash: {}", cfg.hash_hex())?;
        writeln!(w, "# seed: {}", cfg.seed)?;
        writeln!(w, "# timestamp_unix: {timestamp}")?;
        writeln!(w, "# outputs: {}", names.join(" "))?;
        write!(w, "{cfg}")
    })?;
    Ok(())
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> CliResult<PathBuf> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn out_path(cfg: &RunConfig, explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cfg.output_dir.join(default_name))
}

fn rip_cmd(cfg: &RunConfig, a: &RipArgs) -> CliResult<Vec<PathBuf>> {
    if !(a.step_m > 0.0 && a.r_max_m > a.step_m) {
        return Err(CliError::Usage("need 0 < --step-m < --r-max-m".into()));
    }
    let atmo = Atmosphere::new(1.0, cfg.extinction_per_m)?;
    let grid = linspace_step(a.step_m, a.r_max_m, a.step_m);
    let mut outputs = vec![];
    for (i, slice) in cfg.slice_configs()?.iter().enumerate() {
        let profile = rip(slice, &atmo, &grid, a.irradiance)?;
        let path = cfg.output_dir.join(format!("rip_slice{}.csv", i + 1));
        outputs.push(write_with(&path, |w| profile.write_csv(w))?);
        let (lo, hi) = slice_support(slice);
        println!("slice{} support {lo:.2} .. {hi:.2} m", i + 1);
    }
    Ok(outputs)
}

fn simulate(cfg: &RunConfig, a: &SimulateArgs) -> CliResult<Vec<PathBuf>> {
    let sim = cfg.simulator()?;
    let noise = cfg.noise(&a.stream)?;
    if a.scene == SceneKind::Samples {
        let n = a.samples.unwrap_or(cfg.scene_samples);
        let samples = generate_dataset(n, &cfg.range_distribution(), cfg.alpha_range()?, &sim, &noise)?;
        let path = out_path(cfg, &a.out, "samples.csv");
        write_samples(&path, &samples)?;
        println!("{n} samples -> {}", path.display());
        return Ok(vec![path]);
    }
    if a.width == 0 || a.height == 0 {
        return Err(CliError::Usage("--width and --height must be >= 1".into()));
    }
    let depth = match a.scene {
        SceneKind::Ramp => ramp_scene(a.width, a.height, a.r_lo_m, a.r_hi_m),
        _ => Raster::filled(a.width, a.height, a.r_lo_m),
    };
    let alpha = Raster::filled(a.width, a.height, a.alpha);
    let set = sim.render_slices(&depth, &alpha, &noise)?;
    let mut outputs = vec![];
    for (i, img) in set.slices.iter().enumerate() {
        let path = cfg.output_dir.join(format!("slice{}.pgm", i + 1));
        write_pgm8(&path, img)?;
        outputs.push(path);
    }
    let truth = cfg.output_dir.join("depth_truth.csv");
    write_depth_csv(&truth, &depth)?;
    outputs.push(truth);
    println!("{}x{} scene -> {}", a.width, a.height, cfg.output_dir.display());
    Ok(outputs)
}

fn preprocess(cfg: &RunConfig, a: &PreprocessArgs) -> CliResult<Vec<PathBuf>> {
    let tag: VariantTag = match &a.variant {
        Some(v) => v.parse().map_err(|e: Error| CliError::Usage(format!("--variant: {e}")))?,
        None => cfg.variant,
    };
    let raw = load_samples(&a.input)?;
    let (kept, pre) = prefilter_with_report(&raw);
    let (built, report) = build_dataset_with_report(&kept, &DatasetVariant::new(tag));
    let path = out_path(cfg, &a.out, &format!("{tag}.csv"));
    write_samples(&path, &built.samples)?;
    let report_path = path.with_extension("report.txt");
    write_with(&report_path, |w| write!(w, "# prefilter\n{pre}# {tag}\n{report}"))?;
    println!("{} -> {} samples ({tag}) -> {}", raw.len(), built.len(), path.display());
    Ok(vec![path, report_path])
}

fn standardized(path: &Path) -> CliResult<Vec<StandardizedSample>> {
    let data = load_samples(path)?;
    standardize_all(&data.samples).map_err(|e| match e {
        Error::DegenerateSample => CliError::Compute(format!(
            "{}: a triple has zero spread; run `preprocess` on it first",
            path.display()
        )),
        other => other.into(),
    })
}

fn train_cmd(cfg: &RunConfig, a: &TrainArgs) -> CliResult<Vec<PathBuf>> {
    let data = standardized(&a.input)?;
    let (tr, val) = split(&data, cfg.train_fraction, cfg.stage_seed("split"))?;
    let (model, history) = train(&tr, &val, &cfg.arch()?, &cfg.train_config())?;
    let path = out_path(cfg, &a.out, "model.txt");
    model.save(&path)?;
    let hist = write_with(&path.with_extension("history.csv"), |w| history.write_csv(w))?;
    println!(
        "best validation MAE {:.4} m at epoch {} of {} -> {}",
        history.best_val_mae(),
        history.best_epoch,
        history.epochs.len(),
        path.display()
    );
    Ok(vec![path, hist])
}

fn gridsearch(cfg: &RunConfig, a: &GridArgs) -> CliResult<Vec<PathBuf>> {
    let mut datasets = vec![];
    for path in &a.input {
        let data = standardized(path)?;
        let (train, val) = split(&data, cfg.train_fraction, cfg.stage_seed("split"))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        datasets.push(GridDataset { name, train, val });
    }
    let grid = match a.grid {
        GridKind::Full => GridSpec::full(),
        GridKind::Config => GridSpec {
            learning_rates: vec![cfg.learning_rate],
            batch_sizes: vec![cfg.batch_size],
            hidden_layouts: vec![cfg.hidden.clone()],
            activations: vec![cfg.activation],
        },
    };
    let mut opts = GridOptions::new(cfg.stage_seed("grid"));
    opts.max_epochs = a.max_epochs.unwrap_or(cfg.max_epochs);
    opts.patience = a.patience.unwrap_or(cfg.patience);
    let report = grid_search(&datasets, &grid, &opts)?;
    let results = write_with(&cfg.output_dir.join("grid_results.csv"), |w| report.write_results_csv(w))?;
    let ranking = write_with(&cfg.output_dir.join("grid_ranking.csv"), |w| report.write_ranking_csv(w))?;
    let best = report.best();
    println!(
        "{} runs; best lr {} batch {} {}",
        report.runs.len(),
        best.learning_rate,
        best.batch_size,
        best.arch
    );
    Ok(vec![results, ranking])
}

fn load_model(path: &Option<PathBuf>) -> CliResult<NetworkModel> {
    let path = path
        .as_ref()
        .ok_or_else(|| CliError::Usage("the network estimator needs --model FILE (from `train`)".into()))?;
    Ok(NetworkModel::load(path)?)
}

/// Runs `f` with the requested estimator.
fn with_estimator<T>(
    cfg: &RunConfig,
    kind: EstimatorKind,
    model: &Option<PathBuf>,
    f: impl FnOnce(&dyn DepthEstimator) -> CliResult<T>,
) -> CliResult<T> {
    match kind {
        EstimatorKind::Network => {
            let model = load_model(model)?;
            f(&NetworkEstimator { model: &model })
        }
        EstimatorKind::Baseline => {
            let table = section_table(cfg)?;
            f(&BaselineEstimator {
                table: &table,
                options: cfg.baseline_options(),
            })
        }
    }
}

fn section_table(cfg: &RunConfig) -> CliResult<SectionTable> {
    Ok(build_section_table(&cfg.slice_configs()?)?)
}

fn parse_triple(text: &str) -> CliResult<[u8; 3]> {
    let bad = || CliError::Usage(format!("--triple expects three integers 0-255 like `120,80,10`, got `{text}`"));
    let parts: Vec<u8> = text
        .split(',')
        .map(|p| p.trim().parse::<u8>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    parts.try_into().map_err(|_| bad())
}

fn fmt_estimate(r: Option<f64>) -> String {
    r.map_or_else(|| "invalid".to_string(), |r| format!("{r:.4}"))
}

fn predict(cfg: &RunConfig, a: &PredictArgs) -> CliResult<Vec<PathBuf>> {
    let triples = a.triple.iter().map(|t| parse_triple(t)).collect::<CliResult<Vec<_>>>()?;
    if triples.is_empty() && a.input.is_none() {
        return Err(CliError::Usage("give --triple S1,S2,S3 or --input FILE".into()));
    }
    with_estimator(cfg, a.estimator, &a.model, |est| {
        for s in &triples {
            println!("{},{},{} {}", s[0], s[1], s[2], fmt_estimate(est.estimate(*s)));
        }
        let Some(input) = &a.input else {
            return Ok(vec![]);
        };
        let data = load_samples(input)?;
        let path = cfg.output_dir.join("predictions.csv");
        write_with(&path, |w| {
            writeln!(w, "s1,s2,s3,r,r_hat")?;
            for s in &data.samples {
                let r_hat = est.estimate(s.s).map_or_else(|| "nan".to_string(), |r| r.to_string());
                writeln!(w, "{},{},{},{},{r_hat}", s.s[0], s.s[1], s.s[2], s.r)?;
            }
            Ok(())
        })?;
        println!("{} predictions -> {}", data.len(), path.display());
        Ok(vec![path])
    })
}

fn depthmap(cfg: &RunConfig, a: &DepthmapArgs) -> CliResult<Vec<PathBuf>> {
    let imgs = [read_pgm8(&a.slices[0])?, read_pgm8(&a.slices[1])?, read_pgm8(&a.slices[2])?];
    let set = SliceImageSet::new(imgs, None)
        .map_err(|e| CliError::Usage(format!("slice images must share dimensions: {e}")))?;
    let map = with_estimator(cfg, a.estimator, &a.model, |est| Ok(render_depth_map(est, &set)))?;
    let path = out_path(cfg, &a.out, "depth.pgm");
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        map.write_csv(&path)?;
    } else {
        map.write_pgm16(&path)?;
    }
    let valid = map.valid_mask().iter().filter(|v| **v).count();
    let (w, h) = map.dims();
    println!("{w}x{h} depth map, {valid} valid pixels -> {}", path.display());
    Ok(vec![path])
}

fn eval(cfg: &RunConfig, a: &EvalArgs) -> CliResult<Vec<PathBuf>> {
    let test = load_samples(&a.test)?;
    let table = section_table(cfg)?;
    let base = BaselineEstimator {
        table: &table,
        options: cfg.baseline_options(),
    };
    let model = a.model.as_ref().map(NetworkModel::load).transpose()?;
    let net = model.as_ref().map(|m| NetworkEstimator { model: m });
    let mut estimators: Vec<&dyn DepthEstimator> = vec![];
    if let Some(n) = &net {
        estimators.push(n);
    }
    estimators.push(&base);
    let cmp = compare_estimators(&estimators, &test.samples, cfg.eval_bin_width_m)?;
    let path = write_with(&cfg.output_dir.join("comparison.csv"), |w| cmp.write_csv(w))?;
    for r in &cmp.reports {
        let overall = r.binned.as_ref().map(|b| {
            let n = b.total_count() as f64;
            b.bins.iter().map(|x| x.mae * x.count as f64).sum::<f64>() / n
        });
        println!("{:<9} coverage {:.3} mae {}", r.name, r.coverage, fmt_estimate(overall));
    }
    Ok(vec![path])
}

fn probe(cfg: &RunConfig, a: &ProbeArgs) -> CliResult<Vec<PathBuf>> {
    if !(a.bin_width_m > 0.0 && a.bin_width_m.is_finite()) {
        return Err(CliError::Usage("--bin-width-m must be > 0".into()));
    }
    let model = NetworkModel::load(&a.model)?;
    let table = probe_learned_function(&model, a.bin_width_m);
    let path = write_with(&cfg.output_dir.join("probe.csv"), |w| table.write_csv(w))?;
    println!("{} triples in {} bins -> {}", table.evaluated, table.bins.len(), path.display());
    Ok(vec![path])
}

fn sections(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let table = section_table(cfg)?;
    let path = write_with(&cfg.output_dir.join("sections.csv"), |w| table.write_csv(w))?;
    let mut text = vec![];
    table.write_csv(&mut text).map_err(|e| CliError::io(&path, e))?;
    print!("{}", String::from_utf8_lossy(&text));
    Ok(vec![path])
}
