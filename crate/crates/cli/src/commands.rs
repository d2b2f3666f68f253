//! Subcommand bodies.

use std::path::Path;

use hyperseg_core::features::{tessellate_extract, tessellation_layout, Backbone, FactorMode, ToyVggConfig};
use hyperseg_core::image_io::{load_frame, load_mask};
use hyperseg_core::interaction::ClickSimParams;
use hyperseg_core::trainer::{evaluate, write_synthetic_dataset, Dataset, Model, OptimizerKind, TrainConfig};
use hyperseg_core::tucker::{depth_tucker, reconstruct, CompressionPlan};
use hyperseg_core::Tensor;
use hyperseg_service::ServiceConfig;
use serde::Serialize;

use hyperseg_cli::features_file::{parse_ranks, parse_size, FeatureManifest};
use crate::{BackboneArgs, CliError, CompressReportArgs, EvalArgs, ExtractArgs, ServeArgs, SimulateClicksArgs, SynthDataArgs, TrainArgs};

type Result<T> = std::result::Result<T, CliError>;

fn usage(e: hyperseg_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} is not a directory", path.display())))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn backbone(args: &BackboneArgs) -> Result<Backbone> {
    match &args.backbone {
        Some(dir) => {
            require_dir(dir, "backbone")?;
            Ok(Backbone::load(dir)?)
        }
        None => {
            let (w, h) = parse_size(&args.tile).map_err(usage)?;
            Ok(Backbone::toy_vgg(&ToyVggConfig {
                seed: args.backbone_seed,
                input_width: w,
                input_height: h,
                ..ToyVggConfig::default()
            })
            .map_err(usage)?)
        }
    }
}

pub fn extract(args: ExtractArgs) -> Result<()> {
    require_file(&args.image, "image")?;
    let backbone = backbone(&args.backbone)?;
    let taps = backbone.tap_depths();
    let plan = if args.raw {
        CompressionPlan::full(&taps)?
    } else {
        parse_ranks(&args.ranks, &taps).map_err(usage)?
    };
    let frame = load_frame(&args.image)?;
    let (w, h) = (frame.shape()[1], frame.shape()[2]);
    let (grid, shape) = tessellation_layout(w, h, &backbone, &plan)?;
    log::info!(
        "{w}x{h} frame, {}x{} tiles of {}x{}: {} tiles (T={}), padded {}x{}",
        grid.cols,
        grid.rows,
        grid.tile_width,
        grid.tile_height,
        grid.tile_count(),
        grid.tile_count(),
        grid.padded_width,
        grid.padded_height
    );
    if args.layout_only {
        return print_json(&serde_json::json!({ "grid": grid, "shape": shape }));
    }
    let out = args.out.expect("required unless layout_only");
    let mode = if args.raw { FactorMode::Passthrough } else { FactorMode::PerImage };
    let (stack, factors) = tessellate_extract(&frame, &backbone, &plan, &mode)?;
    for f in &factors {
        log::info!("{}: rank {} of {}, energy retained {:.6}", f.source_layer, f.rank(), f.original_depth(), f.energy_retained);
    }
    stack.features.save(&out)?;
    let manifest = FeatureManifest {
        shape: stack.features.shape().to_vec(),
        layers: plan.per_layer_ranks.clone(),
        compressed: !args.raw,
        grid,
        provenance: stack.provenance,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&FeatureManifest::path_for(&out), &text)
}

#[derive(Serialize)]
struct LayerReport {
    layer: String,
    depth: usize,
    rank: usize,
    squared_error: f64,
    relative_squared_error: f64,
    discarded_sigma_energy: f64,
    energy_retained: f64,
}

#[derive(Serialize)]
struct CompressReport {
    plan: String,
    original_depth: usize,
    compressed_depth: usize,
    layers: Vec<LayerReport>,
}

pub fn compress_report(args: CompressReportArgs) -> Result<()> {
    require_file(&args.features, "feature file")?;
    let features = Tensor::load(&args.features)?;
    if features.rank() != 3 {
        return Err(CliError::Runtime(format!("features {:?} are not [D, W, H]", features.shape())));
    }
    let manifest_path = FeatureManifest::path_for(&args.features);
    let layers = if manifest_path.is_file() {
        let text = std::fs::read_to_string(&manifest_path)
            .map_err(|e| CliError::Runtime(format!("reading {}: {e}", manifest_path.display())))?;
        let m = FeatureManifest::parse(&text)?;
        if m.shape != features.shape() {
            return Err(CliError::Runtime(format!("manifest shape {:?} differs from features {:?}", m.shape, features.shape())));
        }
        m.layers
    } else {
        vec![("features".to_string(), features.shape()[0])]
    };
    let plan = parse_ranks(&args.ranks, &layers).map_err(usage)?;
    let plane = features.shape()[1] * features.shape()[2];
    let mut start = 0;
    let mut reports = Vec::new();
    for ((layer, depth), (_, rank)) in layers.iter().zip(&plan.per_layer_ranks) {
        let mut shape = features.shape().to_vec();
        shape[0] = *depth;
        let c = Tensor::new(shape, features.data()[start * plane..(start + depth) * plane].to_vec())?;
        start += depth;
        let t = depth_tucker(&c, *rank, layer)?;
        let back = reconstruct(&t.core, &t.factor)?;
        let squared_error: f64 = c.data().iter().zip(back.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let total: f64 = c.data().iter().map(|a| a * a).sum();
        reports.push(LayerReport {
            layer: layer.clone(),
            depth: *depth,
            rank: *rank,
            squared_error,
            relative_squared_error: if total > 0.0 { squared_error / total } else { 0.0 },
            discarded_sigma_energy: t.discarded_energy(),
            energy_retained: t.factor.energy_retained,
        });
    }
    print_json(&CompressReport {
        plan: plan.id(),
        original_depth: features.shape()[0],
        compressed_depth: plan.total_compressed_depth(),
        layers: reports,
    })
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            require_file(path, "config")?;
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
            TrainConfig::parse(&text).map_err(usage)?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = args.steps {
        config.steps = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = &args.optimizer {
        config.optimizer = match v.as_str() {
            "sgd" => OptimizerKind::Sgd,
            "adam" => OptimizerKind::Adam,
            _ => return Err(CliError::Usage(format!("unknown optimizer {v:?}, expected sgd or adam"))),
        };
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.num_scenes {
        config.num_scenes = v;
    }
    if let Some(v) = args.num_heads {
        config.num_heads = v;
    }
    config.validate().map_err(usage)?;
    let (model, report, manifest) = hyperseg_core::trainer::train(config)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(format!("creating {}: {e}", args.out.display())))?;
    model.save(&args.out, &manifest)?;
    log::info!("checkpoint written to {}", args.out.display());
    print_json(&serde_json::json!({
        "initial_loss": report.initial_loss(),
        "final_loss": report.final_loss(),
        "loss_curve": report.loss_curve,
    }))
}

pub fn eval(args: EvalArgs) -> Result<()> {
    require_dir(&args.checkpoint, "checkpoint")?;
    require_dir(&args.data, "dataset")?;
    if args.clicks < 2 {
        return Err(CliError::Usage("--clicks needs at least one click of each polarity".into()));
    }
    let (model, _) = Model::load(&args.checkpoint)?;
    let dataset = Dataset::open(&args.data)?;
    let report = evaluate(&model, &dataset, args.clicks, args.seed)?;
    let text = report.to_json();
    match &args.out {
        Some(path) => write_text(path, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

pub fn simulate_clicks(args: SimulateClicksArgs) -> Result<()> {
    require_file(&args.gt, "ground truth")?;
    let gt = load_mask(&args.gt)?;
    let clicks = hyperseg_core::interaction::simulate_clicks(&gt, args.seed, args.pos, args.neg, &ClickSimParams::default())
        .map_err(|e| match e {
            hyperseg_core::Error::Argument(_) => usage(e),
            e => e.into(),
        })?;
    println!("{}", clicks.to_json());
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    for c in &args.checkpoint {
        require_dir(c, "checkpoint")?;
    }
    let addr: std::net::SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad host or port: {e}")))?;
    let state = hyperseg_service::build_state(&ServiceConfig {
        store: args.store,
        checkpoints: args.checkpoint,
        memory_budget: args.memory_budget,
        rank_by_clicks: args.rank_by_clicks,
    })?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime
        .block_on(hyperseg_service::serve(state, addr, |a| log::info!("listening on http://{a}"), async {
            let _ = tokio::signal::ctrl_c().await;
        }))
        .map_err(|e| CliError::Runtime(format!("server: {e}")))
}

pub fn synth_data(args: SynthDataArgs) -> Result<()> {
    let size = args.size.as_deref().map(parse_size).transpose().map_err(usage)?;
    if args.scenes == 0 {
        return Err(CliError::Usage("--scenes must be positive".into()));
    }
    write_synthetic_dataset(&args.out, args.scenes, args.seed, size)?;
    log::info!("{} scenes written to {}", args.scenes, args.out.display());
    Ok(())
}
