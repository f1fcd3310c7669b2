//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use scenaug::eval::{
    few_shot_eval, linear_eval, stability, stratified_split, zero_shot, MetricsReport,
};
use scenaug::expert::{augment_combined, augment_con, augment_vr, sample_views_seeded, VrParams};
use scenaug::ingest::{build_labeled_dataset, parse_scenario_unchecked, serialize_scenario_lines, LabeledDataset};
use scenaug::raster::{encode_grids, rasterize, render_png, GridSequence};
use scenaug::rng;
use scenaug::ssl::mlp::Mlp;
use scenaug::ssl::{embed_dataset, train, EmbeddingMode, Model, Variant};
use scenaug::synth::{suite, SuiteSpec};
use scenaug::{Error, Scenario};

use crate::config::RunConfig;
use crate::files::{self, Outputs};
use crate::{AblateArgs, AugmentArgs, AugmentMode, Cli, Command, EvalArgs, Failure, IngestArgs, MineArgs, RasterizeArgs, SynthArgs, Task, TrainArgs};

type Result<T> = std::result::Result<T, Failure>;

pub fn run(cli: &Cli, out: &mut Outputs) -> Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let config = config.resolve()?;
    match &cli.command {
        Command::Synth(a) => synth(a, cli.seed, config, out),
        Command::Ingest(a) => ingest(a, out),
        Command::MineLabels(a) => mine_labels(a, &config, out),
        Command::Augment(a) => augment(a, &config, out),
        Command::Rasterize(a) => rasterize_cmd(a, &config, out),
        Command::Train(a) => train_cmd(a, config, out),
        Command::Eval(a) => eval(a, &config, out),
        Command::AblateVr(a) => ablate_vr(a, config, out),
    }
}

fn required<'a>(flag: Option<&'a PathBuf>, fallback: Option<&'a PathBuf>, name: &str) -> Result<&'a Path> {
    flag.or(fallback)
        .map(PathBuf::as_path)
        .ok_or_else(|| Failure::Usage(format!("--{name} is required (or set it in the config)")))
}

fn synth(a: &SynthArgs, seed_flag: Option<u64>, config: RunConfig, out: &mut Outputs) -> Result<()> {
    let mut spec = config.synth;
    if let Some(path) = &a.spec {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        spec = serde_json::from_str::<SuiteSpec>(&text).map_err(|e| Error::Schema {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if let Some(seed) = seed_flag {
            spec.seed = seed;
        }
    }
    if let Some(count) = a.count {
        spec.count = count;
    }
    let generated = suite(&spec)?;
    let scenarios: Vec<Scenario> = generated.into_iter().map(|g| g.scenario).collect();
    let labels = build_labeled_dataset(&scenarios, &config.label_config())?;
    out.write(&a.out.join("scenarios.jsonl"), serialize_scenario_lines(&scenarios).as_bytes())?;
    out.write(&a.out.join("labels.jsonl"), labels.to_jsonl().as_bytes())?;
    println!("{} scenarios, {} classes", scenarios.len(), labels.n_classes());
    Ok(())
}

fn ingest(a: &IngestArgs, out: &mut Outputs) -> Result<()> {
    let docs = files::documents(&a.input)?;
    let mut valid = Vec::new();
    let mut entries = Vec::new();
    for doc in &docs {
        match parse_scenario_unchecked(doc.text.as_bytes()) {
            Ok(s) => {
                let report = s.validate();
                let errors: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
                entries.push(json!({"source": doc.source, "id": s.id, "valid": errors.is_empty(), "errors": errors}));
                if errors.is_empty() {
                    valid.push(s);
                }
            }
            Err(e) => entries.push(json!({"source": doc.source, "id": null, "valid": false, "errors": [e.to_string()]})),
        }
    }
    let n_invalid = docs.len() - valid.len();
    let report = json!({"documents": docs.len(), "valid": valid.len(), "invalid": n_invalid, "entries": entries});
    let report_path = a.out.join("report.json");
    out.write(&report_path, format!("{}\n", serde_json::to_string_pretty(&report).expect("json")).as_bytes())?;
    if n_invalid > 0 {
        out.keep(&report_path);
        return Err(Failure::Core(Error::Argument(format!(
            "{n_invalid} of {} documents failed validation; see {}",
            docs.len(),
            report_path.display()
        ))));
    }
    out.write(&a.out.join("scenarios.jsonl"), serialize_scenario_lines(&valid).as_bytes())?;
    println!("{} scenarios valid", valid.len());
    Ok(())
}

fn mine_labels(a: &MineArgs, config: &RunConfig, out: &mut Outputs) -> Result<()> {
    let scenarios = files::read_scenarios(&a.input)?;
    let labels = build_labeled_dataset(&scenarios, &config.label_config())?;
    out.write(&a.out, labels.to_jsonl().as_bytes())?;
    println!("{} scenarios, {} classes", scenarios.len(), labels.n_classes());
    Ok(())
}

fn vr_params(a: &AugmentArgs, config: &RunConfig, scenario: &Scenario) -> scenaug::Result<VrParams> {
    let mut r = rng::derive(config.seed, &[b"augment", scenario.id.as_bytes()]);
    let sampled = config.policy.vr_ranges.sample(&mut r);
    VrParams::new(a.alpha.unwrap_or(sampled.alpha), a.distance.unwrap_or(sampled.distance))
}

/// Augmented outputs of one scenario with their render suffixes.
fn augment_one(a: &AugmentArgs, config: &RunConfig, s: &Scenario) -> scenaug::Result<Vec<(&'static str, Scenario)>> {
    Ok(match a.mode {
        AugmentMode::Con => vec![("aug", augment_con(s)?)],
        AugmentMode::Vr => vec![("aug", augment_vr(s, &vr_params(a, config, s)?)?)],
        AugmentMode::Combined => vec![("aug", augment_combined(s, &vr_params(a, config, s)?)?)],
        AugmentMode::Policy => {
            let (mut va, mut vb) = sample_views_seeded(s, &config.policy)?;
            va.id = format!("{}:a", s.id);
            vb.id = format!("{}:b", s.id);
            vec![("a", va), ("b", vb)]
        }
    })
}

fn augment(a: &AugmentArgs, config: &RunConfig, out: &mut Outputs) -> Result<()> {
    let scenarios = files::read_scenarios(&a.input)?;
    let augmented: Vec<Vec<(&str, Scenario)>> = scenarios
        .par_iter()
        .map(|s| augment_one(a, config, s))
        .collect::<scenaug::Result<_>>()?;
    let flat: Vec<Scenario> = augmented.iter().flatten().map(|(_, s)| s.clone()).collect();
    out.write(&a.out, serialize_scenario_lines(&flat).as_bytes())?;
    if let Some(dir) = &a.render_dir {
        out.dir(dir)?;
        let stage = dir.join(".partial");
        out.dir(&stage)?;
        let rendered: Vec<Vec<PathBuf>> = scenarios
            .par_iter()
            .zip(&augmented)
            .map(|(s, views)| {
                let stem = files::file_stem(&s.id);
                let mut paths = render_png(&rasterize(s, &config.grid)?, &stage, &format!("{stem}_orig"))?;
                for (suffix, v) in views {
                    paths.extend(render_png(&rasterize(v, &config.grid)?, &stage, &format!("{stem}_{suffix}"))?);
                }
                Ok(paths)
            })
            .collect::<scenaug::Result<_>>()?;
        for p in rendered.iter().flatten() {
            let target = dir.join(p.file_name().expect("rendered file"));
            std::fs::rename(p, &target).map_err(|e| Error::io(&target, e))?;
            out.adopt(&target);
        }
        std::fs::remove_dir(&stage).map_err(|e| Error::io(&stage, e))?;
    }
    println!("{} scenarios augmented ({} outputs)", scenarios.len(), flat.len());
    Ok(())
}

fn rasterize_all(scenarios: &[Scenario], config: &RunConfig) -> scenaug::Result<Vec<GridSequence>> {
    scenarios.par_iter().map(|s| rasterize(s, &config.grid)).collect()
}

fn rasterize_cmd(a: &RasterizeArgs, config: &RunConfig, out: &mut Outputs) -> Result<()> {
    let scenarios = files::read_scenarios(&a.input)?;
    let grids = rasterize_all(&scenarios, config)?;
    out.write(&a.out, &encode_grids(&grids)?)?;
    println!("{} grid sequences", grids.len());
    Ok(())
}

fn train_cmd(a: &TrainArgs, mut config: RunConfig, out: &mut Outputs) -> Result<()> {
    let data = required(a.data.as_ref(), config.data.as_ref(), "data")?;
    let scenarios = files::read_scenarios(data)?;
    if let Some(o) = a.objective {
        config.train.objective = o;
    }
    if let Some(e) = a.epochs {
        config.train.epochs = e;
    }
    let recipe = a.variant.recipe(&config.policy, &config.base_aug);
    let outcome = train(&scenarios, &recipe, &config.train)?;
    out.write(&a.out.join("model.exmd"), &outcome.model.to_bytes())?;
    out.write(&a.out.join("loss.csv"), outcome.loss_csv().as_bytes())?;
    if let (Some(first), Some(last)) = (outcome.epoch_losses.first(), outcome.epoch_losses.last()) {
        println!("{} epochs, loss {first:.4} -> {last:.4}", outcome.epoch_losses.len());
    }
    Ok(())
}

fn labeled_data(data: &Path, labels: &Path) -> Result<(Vec<Scenario>, LabeledDataset, Vec<usize>)> {
    let scenarios = files::read_scenarios(data)?;
    let dataset = files::read_labels(labels)?;
    let ids = files::aligned_labels(&scenarios, &dataset)?;
    Ok((scenarios, dataset, ids))
}

fn eval(a: &EvalArgs, config: &RunConfig, out: &mut Outputs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let data = required(a.data.as_ref(), config.data.as_ref(), "data")?;
    let labels_path = required(a.labels.as_ref(), config.labels_path.as_ref(), "labels")?;
    let (scenarios, dataset, labels) = labeled_data(data, labels_path)?;
    let e = &config.eval;
    let experiment = a.experiment.clone().unwrap_or_else(|| {
        a.model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let mut report = MetricsReport::new(experiment, config.seed);
    let h = embed_dataset(&model, &scenarios, &config.grid, EmbeddingMode::Representation)?;
    let split = stratified_split(&labels, e.test_fraction, config.seed);
    let mut tasks = a.tasks.clone();
    tasks.sort_unstable();
    tasks.dedup();
    for task in tasks {
        match task {
            Task::Zeroshot => {
                let k = e.clusters.unwrap_or(dataset.n_classes()).min(scenarios.len());
                report.acc = Some(zero_shot(h.view(), &labels, k, e.linkage)?.acc);
            }
            Task::Linear => {
                report.linear_acc = Some(linear_eval(h.view(), &labels, &split, &e.linear)?.accuracy);
            }
            Task::Fewshot => {
                let grids = rasterize_all(&scenarios, config)?;
                let refs: Vec<&GridSequence> = grids.iter().collect();
                let inputs = model.inputs(&refs)?;
                let scratch: Mlp<f32> = Mlp::new(&model.encoder.dims(), &mut rng::derive(config.seed, &[b"scratch encoder"]));
                for &fraction in &e.few_shot_fractions {
                    let pre = few_shot_eval(&model.encoder, inputs.view(), &labels, fraction, &e.few_shot)?;
                    let base = few_shot_eval(&scratch, inputs.view(), &labels, fraction, &e.few_shot)?;
                    report.few_shot.insert(format!("{fraction}"), pre.accuracy);
                    report.few_shot.insert(format!("{fraction}_scratch"), base.accuracy);
                }
            }
            Task::Stability => {
                let ks: Vec<usize> = e.stability_ks.iter().copied().filter(|&k| k < scenarios.len()).collect();
                report.stability = stability(h.view(), &scenarios, &ks, &config.grid)?;
            }
        }
    }
    out.write(&a.out, report.to_json().as_bytes())?;
    print!("{}", report.to_json());
    Ok(())
}

const VR_KEYS: [&str; 4] = ["d_min", "d_max", "alpha_min", "alpha_max"];

/// Parses `key=v1,v2;key=...` into axes.
fn parse_grid(spec: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let mut axes: Vec<(String, Vec<f64>)> = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("grid axis `{part}` is not key=values")))?;
        let key = key.trim();
        if !VR_KEYS.contains(&key) {
            return Err(Failure::Usage(format!("unknown grid key `{key}`; expected one of {VR_KEYS:?}")));
        }
        if axes.iter().any(|(k, _)| k == key) {
            return Err(Failure::Usage(format!("grid key `{key}` given twice")));
        }
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("`{v}` is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        axes.push((key.to_string(), values));
    }
    if axes.is_empty() {
        return Err(Failure::Usage("empty parameter grid".into()));
    }
    Ok(axes)
}

/// Cartesian product with the first axis varying fastest.
fn grid_points(axes: &[(String, Vec<f64>)]) -> Vec<Vec<(String, f64)>> {
    let mut points: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for (key, values) in axes {
        points = values
            .iter()
            .flat_map(|&v| points.iter().map(move |p| {
                let mut p = p.clone();
                p.push((key.clone(), v));
                p
            }))
            .collect();
    }
    points
}

fn ablate_vr(a: &AblateArgs, mut config: RunConfig, out: &mut Outputs) -> Result<()> {
    let axes = parse_grid(&a.grid)?;
    let data = required(a.data.as_ref(), config.data.as_ref(), "data")?;
    let labels_path = required(a.labels.as_ref(), config.labels_path.as_ref(), "labels")?;
    let (scenarios, dataset, labels) = labeled_data(data, labels_path)?;
    if let Some(o) = a.objective {
        config.train.objective = o;
    }
    if let Some(e) = a.epochs {
        config.train.epochs = e;
    }
    let k = config.eval.clusters.unwrap_or(dataset.n_classes()).min(scenarios.len());
    let mut table = String::from("d_min,d_max,alpha_min,alpha_max,acc\n");
    for point in grid_points(&axes) {
        let mut policy = config.policy;
        for (key, v) in &point {
            let r = &mut policy.vr_ranges;
            match key.as_str() {
                "d_min" => r.d_min = *v,
                "d_max" => r.d_max = *v,
                "alpha_min" => r.alpha_min = *v,
                _ => r.alpha_max = *v,
            }
        }
        policy.validate()?;
        let recipe = Variant::ExAgt.recipe(&policy, &config.base_aug);
        let outcome = train(&scenarios, &recipe, &config.train)?;
        let h = embed_dataset(&outcome.model, &scenarios, &config.grid, EmbeddingMode::Representation)?;
        let acc = zero_shot(h.view(), &labels, k, config.eval.linkage)?.acc;
        let r = policy.vr_ranges;
        writeln!(table, "{},{},{},{},{acc:.6}", r.d_min, r.d_max, r.alpha_min, r.alpha_max).expect("string write");
    }
    if let Some(path) = &a.out {
        out.write(path, table.as_bytes())?;
    }
    print!("{table}");
    Ok(())
}
