use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use handfield::fusion::{fuse_measured, resample_bspline};
use handfield::hand_model::{generate_reference_trajectories, monte_carlo_expand};
use handfield::metrics::{evaluate_frames, summarize_visibility, EvaluationBlock, MeanStd};
use handfield::placement::{pso_optimize, PreparedDataset};
use handfield::sensor_sim::{ground_truth_at, simulate_sensor};
use handfield::visibility::raytrace as trace_visibility;
use handfield::{io, HandModel, Layout, MetricValue, PoseDataset, SensorPlacement};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{write_json, PipelineConfig, Seeds};
use crate::{open_input, CliError, EvaluateArgs, FovChoice, FuseArgs, GenerateArgs, OptimizeArgs, RaytraceArgs, SimulateArgs};

/// Sidecar written next to every CSV artifact as `<file>.meta.json`.
#[derive(Serialize)]
struct Meta<'a> {
    artifact: String,
    command: &'static str,
    config_hash: &'a str,
    seeds: Seeds,
    inputs: Vec<String>,
    #[serde(flatten)]
    details: Value,
}

struct Context {
    config: PipelineConfig,
    hash: String,
}

impl Context {
    fn new(config: PipelineConfig) -> Result<Self, CliError> {
        config.validate()?;
        let hash = config.hash();
        Ok(Self { config, hash })
    }

    fn meta(&self, command: &'static str, artifact: &Path, inputs: &[&Path], details: Value) -> Meta<'_> {
        Meta {
            artifact: file_name(artifact),
            command,
            config_hash: &self.hash,
            seeds: self.config.seeds(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            details,
        }
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes a CSV through `body` and its metadata sidecar.
fn write_artifact(
    path: &Path,
    meta: &Meta<'_>,
    body: impl FnOnce(&mut dyn Write) -> handfield::Result<()>,
) -> Result<(), CliError> {
    let fail = |e: handfield::Error| CliError::data(format!("{}: {e}", path.display()));
    let mut w = io::create(path).map_err(fail)?;
    body(&mut w).map_err(fail)?;
    w.flush().map_err(|e| fail(e.into()))?;
    write_json(&meta_path(path), meta)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

fn read_dataset(path: &Path) -> Result<PoseDataset, CliError> {
    let frames = io::read_frames(open_input(path)?)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    if frames.is_empty() {
        return Err(CliError::data(format!("{}: dataset has no frames", path.display())));
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(PoseDataset::from_frames(frames, &stem))
}

fn print_metric(label: &str, m: &MetricValue) {
    println!(
        "{label}: score {:.6} tiers {:?} over {} frames",
        m.score, m.tier_counts, m.frame_count
    );
}

pub fn generate(mut config: PipelineConfig, args: GenerateArgs) -> Result<(), CliError> {
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(n) = args.samples {
        config.samples_per_frame = n as usize;
    }
    let ctx = Context::new(config)?;
    let cfg = &ctx.config;
    let model = HandModel::new(cfg.model.dims, cfg.model.bounds)?;
    let trajectories = generate_reference_trajectories(&model, &cfg.trajectories)?;
    create_dir(&args.out_dir)?;

    let mut listed = Vec::new();
    for t in &trajectories {
        let path = args.out_dir.join(format!("{}.csv", t.name()));
        let meta = ctx.meta("generate", &path, &[], json!({ "trajectory": t.name(), "frames": t.len() }));
        write_artifact(&path, &meta, |w| io::write_frames(w, &t.frames))?;
        listed.push(json!({ "trajectory": t.name(), "file": file_name(&path), "frames": t.len() }));
    }

    let expanded = monte_carlo_expand(&model, &trajectories, cfg.samples_per_frame, &cfg.perturbation, cfg.seed)?;
    let path = args.out_dir.join("poses.csv");
    let meta = ctx.meta(
        "generate",
        &path,
        &[],
        json!({ "frames": expanded.len(), "samples_per_frame": cfg.samples_per_frame }),
    );
    write_artifact(&path, &meta, |w| io::write_frames(w, &expanded.frames))?;

    let provenance = json!({
        "config_hash": ctx.hash,
        "seed": cfg.seed,
        "samples_per_frame": cfg.samples_per_frame,
        "trajectories": listed,
        "monte_carlo": {
            "file": "poses.csv",
            "frames": expanded.len(),
            "runs": expanded.provenance_runs(),
        },
    });
    write_json(&args.out_dir.join("provenance.json"), &provenance)?;
    println!(
        "wrote {} trajectories and {} Monte Carlo frames to {}",
        trajectories.len(),
        expanded.len(),
        args.out_dir.display()
    );
    Ok(())
}

pub fn optimize(mut config: PipelineConfig, args: OptimizeArgs) -> Result<(), CliError> {
    let swarm = &mut config.swarm;
    if let Some(s) = args.seed {
        swarm.seed = s;
    }
    if let Some(n) = args.particles {
        swarm.particles = n;
    }
    if let Some(n) = args.iterations {
        swarm.iterations = n;
    }
    let ctx = Context::new(config)?;
    let cfg = &ctx.config;
    let dataset = read_dataset(&args.dataset)?;
    let prepared = PreparedDataset::new(&dataset)?;
    let score = |layout: &Layout| prepared.metric(&layout.placements(), &cfg.optimization_fov, &cfg.visibility, cfg.swarm.metric);

    if let Some(choice) = &args.layout {
        let layout = choice.load()?;
        let metric = score(&layout);
        print_metric(&format!("layout {choice}"), &metric);
        if let Some(out) = &args.out {
            let mut layout = layout.with_metric(&metric);
            layout.seed = Some(cfg.swarm.seed);
            layout.config_hash = Some(ctx.hash.clone());
            write_json(out, &layout)?;
        }
        return Ok(());
    }

    let Some(out) = &args.out else {
        return Err(CliError::usage("optimize needs --out unless --layout is given"));
    };
    let result = pso_optimize(&prepared, &cfg.optimization_fov, &cfg.visibility, &cfg.swarm)?;
    print_metric("initial layout", &score(&Layout::initial()));
    print_metric("optimized layout", &result.metric);

    let mut layout = Layout::from_placements(&result.placements).with_metric(&result.metric);
    layout.seed = Some(cfg.swarm.seed);
    layout.config_hash = Some(ctx.hash.clone());
    write_json(out, &layout)?;

    let trace = args.trace.clone().unwrap_or_else(|| out.with_extension("trace.csv"));
    let meta = ctx.meta(
        "optimize",
        &trace,
        &[&args.dataset],
        json!({ "iterations": result.trace.len(), "final_score": result.metric.score }),
    );
    write_artifact(&trace, &meta, |w| io::write_trace(w, &result.trace))
}

pub fn simulate(mut config: PipelineConfig, args: SimulateArgs) -> Result<(), CliError> {
    if let Some(s) = args.seed {
        config.sensor.seed = s;
    }
    if let Some(choice) = args.layout {
        config.layout = choice;
    }
    config.disabled_sensors.extend(&args.disabled);
    config.disabled_sensors.sort_unstable();
    config.disabled_sensors.dedup();
    let ctx = Context::new(config)?;
    let cfg = &ctx.config;
    let layout = cfg.layout.load()?;
    let active: Vec<_> = layout
        .sensors
        .iter()
        .filter(|s| !cfg.disabled_sensors.contains(&s.id))
        .collect();
    if active.is_empty() {
        return Err(CliError::usage("every sensor of the layout is disabled"));
    }
    let dataset = read_dataset(&args.dataset)?;
    create_dir(&args.out_dir)?;

    let mut streams = Vec::with_capacity(active.len());
    for s in active {
        let stream = simulate_sensor(&dataset, s.id, &s.placement, &cfg.sensor)?;
        let path = args.out_dir.join(format!("s{}.csv", s.id));
        let meta = ctx.meta(
            "simulate",
            &path,
            &[&args.dataset],
            json!({ "sensor_id": s.id, "placement": s.placement, "samples": stream.frames.len() }),
        );
        write_artifact(&path, &meta, |w| io::write_stream(w, &stream))?;
        let vis = summarize_visibility(&stream.annotations)?;
        println!(
            "sensor {}: {} samples, visibility {:.3} ± {:.3}",
            s.id,
            stream.frames.len(),
            vis.mean,
            vis.std
        );
        streams.push(stream);
    }

    let path = args.out_dir.join("annotations.csv");
    let ids: Vec<u32> = streams.iter().map(|s| s.sensor_id).collect();
    let meta = ctx.meta(
        "simulate",
        &path,
        &[&args.dataset],
        json!({ "sensors": ids, "disabled_sensors": cfg.disabled_sensors }),
    );
    let refs: Vec<_> = streams.iter().collect();
    write_artifact(&path, &meta, |w| io::write_annotations(w, &refs))
}

pub fn fuse(mut config: PipelineConfig, args: FuseArgs) -> Result<(), CliError> {
    if let Some(choice) = args.layout {
        config.layout = choice;
    }
    let ctx = Context::new(config)?;
    let cfg = &ctx.config;
    let layout = cfg.layout.load()?;
    let streams = args
        .streams
        .iter()
        .map(|p| io::read_stream(open_input(p)?).map_err(|e| CliError::data(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    let placements: BTreeMap<u32, SensorPlacement> = layout.sensors.iter().map(|s| (s.id, s.placement)).collect();
    let fused = fuse_measured(&streams, &placements, &cfg.fusion)?;

    let present: BTreeSet<u32> = streams.iter().map(|s| s.sensor_id).collect();
    let missing: Vec<u32> = placements.keys().filter(|id| !present.contains(id)).copied().collect();
    // Share of fused ticks at which each layout sensor sees the hand.
    let mut coverage: BTreeMap<u32, f64> = missing.iter().map(|&id| (id, 0.0)).collect();
    for s in &streams {
        let r = resample_bspline(s, cfg.fusion.rate_hz, fused.epoch_us, cfg.fusion.gap_limit_us())?;
        let seen = r.frames.iter().filter(|f| !f.is_missing()).count();
        coverage.insert(s.sensor_id, seen as f64 / fused.frames.len().max(1) as f64);
    }
    let predicted = fused.predicted_only.iter().filter(|&&p| p).count();
    let inputs: Vec<&Path> = args.streams.iter().map(PathBuf::as_path).collect();
    let meta = ctx.meta(
        "fuse",
        &args.out,
        &inputs,
        json!({
            "sensors": present,
            "missing_sensors": missing,
            "sensor_populated_fraction": coverage,
            "ticks": fused.frames.len(),
            "predicted_only_ticks": predicted,
            "epoch_us": fused.epoch_us,
            "period_us": fused.period_us,
        }),
    );
    write_artifact(&args.out, &meta, |w| io::write_fused(w, &fused))?;
    println!(
        "fused {} streams into {} ticks ({} prediction-only)",
        streams.len(),
        fused.frames.len(),
        predicted
    );
    Ok(())
}

pub fn raytrace(mut config: PipelineConfig, args: RaytraceArgs) -> Result<(), CliError> {
    if let Some(choice) = args.layout {
        config.layout = choice;
    }
    let ctx = Context::new(config)?;
    let cfg = &ctx.config;
    let layout = cfg.layout.load()?;
    let dataset = read_dataset(&args.dataset)?;
    let (fov, fov_name) = match args.fov {
        FovChoice::Optimization => (cfg.optimization_fov, "optimization"),
        FovChoice::Sensing => (cfg.sensor.fov, "sensing"),
    };
    let sensors: Vec<(u32, SensorPlacement)> = layout.sensors.iter().map(|s| (s.id, s.placement)).collect();
    let reports = trace_visibility(&dataset.frames, &sensors, &fov, &cfg.visibility)?;
    let scores: Vec<u32> = reports.iter().map(|r| r.score).collect();
    let metric = MetricValue::from_scores(&scores, sensors.len(), cfg.swarm.metric);
    print_metric(&format!("layout {}", cfg.layout), &metric);
    let meta = ctx.meta(
        "raytrace",
        &args.out,
        &[&args.dataset],
        json!({ "layout": cfg.layout, "fov": fov_name, "metric": metric }),
    );
    write_artifact(&args.out, &meta, |w| io::write_visibility_reports(w, &reports))
}

#[derive(Serialize)]
struct Report<'a> {
    config_hash: &'a str,
    seeds: Seeds,
    inputs: BTreeMap<&'static str, String>,
    /// Configuration, then motion.
    blocks: BTreeMap<String, BTreeMap<String, EvaluationBlock>>,
    /// Configuration, then motion, then sensor id.
    visibility: BTreeMap<String, BTreeMap<String, BTreeMap<u32, MeanStd>>>,
    predicted_only_fraction: f64,
    /// Per layout sensor, from the fused stream's sidecar.
    sensor_populated_fraction: BTreeMap<u32, f64>,
    notes: Vec<String>,
}

pub fn evaluate(config: PipelineConfig, args: EvaluateArgs) -> Result<(), CliError> {
    let ctx = Context::new(config)?;
    let cfg = &ctx.config;
    let (fused, predicted) =
        io::read_fused(open_input(&args.fused)?).map_err(|e| CliError::data(format!("{}: {e}", args.fused.display())))?;
    if fused.is_empty() {
        return Err(CliError::data(format!("{}: no fused frames", args.fused.display())));
    }
    let truth = read_dataset(&args.truth)?;
    let truth_frames: Vec<_> = fused.iter().map(|f| ground_truth_at(&truth, f.timestamp_us)).collect();
    let block = evaluate_frames(&fused, &truth_frames, &cfg.joints)?;

    let configuration = args.configuration.clone().unwrap_or_else(|| ctx.hash[..12].to_string());
    let motion = args.motion.clone().unwrap_or_else(|| truth.name().to_string());
    let mut notes = Vec::new();
    let mut sensor_populated_fraction = BTreeMap::new();

    let mut inputs = BTreeMap::from([
        ("fused", args.fused.display().to_string()),
        ("truth", args.truth.display().to_string()),
    ]);
    let mut per_sensor = BTreeMap::new();
    if let Some(path) = &args.annotations {
        inputs.insert("annotations", path.display().to_string());
        let rows = io::read_annotations(open_input(path)?).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let mut grouped: BTreeMap<u32, Vec<i8>> = BTreeMap::new();
        for (_, id, rate) in rows {
            grouped.entry(id).or_default().push(rate);
        }
        for (id, rates) in grouped {
            per_sensor.insert(id, summarize_visibility(&rates)?);
        }
    }

    if let Ok(text) = std::fs::read_to_string(meta_path(&args.fused)) {
        let meta: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::data(format!("{}: {e}", meta_path(&args.fused).display())))?;
        if let Some(missing) = meta["missing_sensors"].as_array().filter(|m| !m.is_empty()) {
            let ids: Vec<String> = missing.iter().map(Value::to_string).collect();
            notes.push(format!("layout sensors without a stream: {}", ids.join(", ")));
        }
        if let Some(map) = meta["sensor_populated_fraction"].as_object() {
            for (id, v) in map {
                if let (Ok(id), Some(v)) = (id.parse(), v.as_f64()) {
                    sensor_populated_fraction.insert(id, v);
                }
            }
        }
        if !sensor_populated_fraction.is_empty() {
            let mean = sensor_populated_fraction.values().sum::<f64>() / sensor_populated_fraction.len() as f64;
            if mean < 1.0 {
                notes.push(format!(
                    "sensors populated in {:.1}% of fused ticks on average across the layout",
                    100.0 * mean
                ));
            }
        }
    }
    if block.populated_fraction < 1.0 {
        notes.push(format!(
            "hand fully populated in {:.1}% of fused frames",
            100.0 * block.populated_fraction
        ));
    }
    let predicted_only_fraction = predicted.iter().filter(|&&p| p).count() as f64 / predicted.len() as f64;

    let report = Report {
        config_hash: &ctx.hash,
        seeds: cfg.seeds(),
        inputs,
        blocks: BTreeMap::from([(configuration.clone(), BTreeMap::from([(motion.clone(), block)]))]),
        visibility: BTreeMap::from([(configuration, BTreeMap::from([(motion, per_sensor)]))]),
        predicted_only_fraction,
        sensor_populated_fraction,
        notes,
    };
    write_json(&args.out, &report)?;
    for (name, b) in &report.blocks {
        for (motion, block) in b {
            println!(
                "{name}/{motion}: {} frames, {:.1}% populated",
                block.frames,
                100.0 * block.populated_fraction
            );
        }
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    Ok(())
}
