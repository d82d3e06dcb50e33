use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ichloc_core::bayes::{optimize_detector, OptimizationResult, SearchSpace};
use ichloc_core::io::{
    read_boxes, read_detections, read_json, read_matrix_auto, write_atomic, write_detections, write_json,
    write_matrix, MatrixFormat,
};
use ichloc_core::metrics::{match_all, report, ReportJson};
use ichloc_core::mil::{
    activation_map_from_features, attention_map_from_weights, bag_accuracy, gated_attention_weights, load_bag,
    load_head_params, save_bag, save_head_params, train_mil_head, EmbeddingBag, TrainConfig,
};
use ichloc_core::morph::{DetectorConfig, Footprint};
use ichloc_core::pipeline::{assemble_scenes, detect_all, dice_objective, load_map_dir};
use ichloc_core::synth::{generate_bags, write_scene_dir, BagConfig, SceneConfig};
use ichloc_core::windowing::{
    build_input_channels_with, compute_channel_stats, compute_stats, ChannelStats, StandardizationStats, WindowSpec,
};
use ichloc_core::{Error, Matrix};

use crate::args::{
    AttendArgs, DetectArgs, EvaluateArgs, Head, OptimizeArgs, SynthArgs, TrainHeadArgs, WindowArgs,
};
use crate::error::{usage, CliResult};

pub const WINDOWS: [WindowSpec; 2] = [WindowSpec::BRAIN, WindowSpec::SUBDURAL];

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    Ok(())
}

/// A single matrix file, or every matrix in a directory sorted by name.
pub fn load_maps(path: &Path) -> CliResult<Vec<(String, Matrix)>> {
    if path.is_dir() {
        return Ok(load_map_dir(path)?);
    }
    if !path.exists() {
        let source = std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory");
        return Err(Error::Io { path: path.to_path_buf(), source }.into());
    }
    let m = read_matrix_auto(path)?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(vec![(id, m)])
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let mut cfg: SceneConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => SceneConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    create_dir(&args.out)?;
    let scenes = write_scene_dir(&args.out, &cfg, args.count)?;
    let boxes: usize = scenes.iter().map(|s| s.boxes.len()).sum();
    println!("wrote {} scenes with {boxes} boxes to {}", scenes.len(), args.out.display());

    if args.bags_pos + args.bags_neg > 0 {
        let mut bag_cfg: BagConfig = match &args.bag_config {
            Some(p) => read_json(p)?,
            None => BagConfig::default(),
        };
        if let Some(seed) = args.seed {
            bag_cfg.seed = seed;
        }
        let dir = args.out.join("bags");
        create_dir(&dir)?;
        let bags = generate_bags(&bag_cfg, args.bags_pos, args.bags_neg)?;
        for (i, b) in bags.iter().enumerate() {
            save_bag(&b.bag, Some(b.label), dir.join(format!("bag_{i:05}.amap")))?;
        }
        println!("wrote {} bags to {}", bags.len(), dir.display());
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum StatsFile {
    Global(StandardizationStats),
    PerChannel([StandardizationStats; 3]),
}

impl From<&StatsFile> for ChannelStats {
    fn from(s: &StatsFile) -> Self {
        match s {
            StatsFile::Global(g) => ChannelStats::Global(*g),
            StatsFile::PerChannel(c) => ChannelStats::PerChannel(*c),
        }
    }
}

pub fn window(args: &WindowArgs) -> CliResult<()> {
    window_dir(&args.input, &args.out, args.stats.as_deref(), args.per_channel, WINDOWS)
}

/// Writes one `(3 rows) x cols` stacked matrix per input: raw, first window
/// and second window channels top to bottom. Statistics computed from the
/// inputs are saved as `stats.json` next to the outputs.
pub fn window_dir(
    input: &Path,
    out: &Path,
    stats_path: Option<&Path>,
    per_channel: bool,
    windows: [WindowSpec; 2],
) -> CliResult<()> {
    for w in &windows {
        w.validate()?;
    }
    let inputs = load_maps(input)?;
    let stats = match stats_path {
        Some(p) => read_json::<StatsFile>(p)?,
        None => {
            let data: Vec<Matrix> = inputs.iter().map(|(_, m)| m.clone()).collect();
            if data.is_empty() {
                return Err(usage(format!("no input matrices in {}", input.display())));
            }
            if per_channel {
                StatsFile::PerChannel(compute_channel_stats(&data, windows)?)
            } else {
                StatsFile::Global(compute_stats(&data)?)
            }
        }
    };
    create_dir(out)?;
    let channel_stats = ChannelStats::from(&stats);
    inputs.par_iter().try_for_each(|(id, hu)| -> CliResult<()> {
        let channels = build_input_channels_with(hu, channel_stats, windows)?;
        let (rows, cols) = hu.dims();
        let data: Vec<f64> = channels.iter().flat_map(|c| c.as_slice().iter().copied()).collect();
        let stacked = Matrix::new(3 * rows, cols, data)?;
        write_matrix(&stacked, out.join(format!("{id}.amap")), MatrixFormat::Amap)?;
        Ok(())
    })?;
    if stats_path.is_none() {
        write_json(&out.join("stats.json"), &stats)?;
    }
    println!("windowed {} slices into {}", inputs.len(), out.display());
    Ok(())
}

pub fn attend(args: &AttendArgs) -> CliResult<()> {
    let (bag, _) = load_bag(&args.bag)?;
    let map = match args.head {
        Head::Pooling => activation_map_from_features(&bag, args.rows, args.cols)?,
        Head::Attention => {
            let dir = args.params.as_ref().ok_or_else(|| usage("--params is required for the attention head"))?;
            let (p, _) = load_head_params(dir)?;
            let a = gated_attention_weights(&bag, &p)?;
            attention_map_from_weights(&a, bag.grid(), args.rows, args.cols)?
        }
    };
    write_matrix(map.matrix(), &args.out, MatrixFormat::from_path(&args.out).unwrap_or(MatrixFormat::Amap))?;
    Ok(())
}

fn load_labelled_bags(dir: &Path) -> CliResult<Vec<(EmbeddingBag, bool)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "amap"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| match load_bag(p)? {
            (bag, Some(label)) => Ok((bag, label)),
            (_, None) => Err(usage(format!("bag {} has no label", p.display()))),
        })
        .collect()
}

#[derive(Serialize)]
struct TrainingSummary {
    bags: usize,
    train_accuracy: f64,
    pos_weight: f64,
    loss_history: Vec<f64>,
    config: TrainConfig,
}

pub fn train_head(args: &TrainHeadArgs) -> CliResult<()> {
    let data = load_labelled_bags(&args.bags)?;
    if data.is_empty() {
        return Err(usage(format!("no bags in {}", args.bags.display())));
    }
    let mut cfg = TrainConfig::default();
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.hidden {
        cfg.hidden_dim = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    let out = train_mil_head(&data, &cfg)?;
    let acc = bag_accuracy(&data, &out.params, &out.head)?;
    save_head_params(&out.params, &out.head, &args.out)?;
    let summary = TrainingSummary {
        bags: data.len(),
        train_accuracy: acc,
        pos_weight: out.pos_weight,
        loss_history: out.loss_history,
        config: cfg,
    };
    write_json(&args.out.join("training.json"), &summary)?;
    println!("trained on {} bags, training accuracy {:.2}%", data.len(), acc * 100.0);
    Ok(())
}

pub fn read_detector_config(path: &Path) -> CliResult<DetectorConfig> {
    let cfg: DetectorConfig = read_json(path)?;
    cfg.params
        .validate()
        .and_then(|_| cfg.footprint().map(|_| ()))
        .map_err(|e| Error::Format {
            path: path.to_path_buf(),
            location: "parameters".into(),
            message: e.to_string(),
        })?;
    Ok(cfg)
}

pub fn detect(args: &DetectArgs) -> CliResult<()> {
    let cfg = read_detector_config(&args.params)?;
    let maps = load_maps(&args.maps)?;
    let dets = detect_all(&maps, &cfg)?;
    write_detections(&dets, &args.out)?;
    println!("{} detections in {} maps", dets.len(), maps.len());
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let dets = read_detections(&args.detections)?;
    let boxes = read_boxes(&args.boxes)?;
    let per_slice = match_all(&dets, &boxes);
    let total = per_slice.iter().map(|(_, c)| *c).sum();
    let rep = ReportJson::from(&report(total));
    match &args.out {
        Some(p) => write_json(p, &rep)?,
        None => println!("{}", serde_json::to_string_pretty(&rep).expect("report serializes")),
    }
    if let Some(p) = &args.per_slice {
        let mut csv = String::from("slice_id,tp,fp,fn\n");
        for (id, c) in &per_slice {
            csv.push_str(&format!("{id},{},{},{}\n", c.tp, c.fp, c.fn_));
        }
        write_atomic(p, csv.as_bytes())?;
    }
    Ok(())
}

pub fn history_csv(result: &OptimizationResult, space: &SearchSpace) -> String {
    let names: Vec<&str> = space.dims.iter().map(|d| d.name.as_str()).collect();
    let mut out = format!("iteration,{},dice\n", names.join(","));
    for t in &result.history {
        let values: Vec<String> = t.point.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{},{},{}\n", t.iteration, values.join(","), t.objective));
    }
    out
}

pub fn read_space(path: Option<&Path>) -> CliResult<SearchSpace> {
    let space = match path {
        Some(p) => {
            let s: SearchSpace = read_json(p)?;
            s.validate().map_err(|e| Error::Format {
                path: p.to_path_buf(),
                location: "dims".into(),
                message: e.to_string(),
            })?;
            s
        }
        None => SearchSpace::detector_default(),
    };
    if space.len() != 3 {
        return Err(usage(format!("detector search space needs 3 dimensions (h, T, d), got {}", space.len())));
    }
    Ok(space)
}

/// Optimizes over the given scenes; returns the best detector config.
pub fn run_optimization(
    scenes: &[ichloc_core::synth::Scene],
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    footprint: Footprint,
    out_dir: &Path,
) -> CliResult<DetectorConfig> {
    if budget < 5 {
        return Err(usage(format!("budget must be at least 5, got {budget}")));
    }
    let result = optimize_detector(dice_objective(scenes, footprint), space, budget, seed)?;
    if result.best.failed {
        return Err(Error::Numerical("every optimization trial failed".into()).into());
    }
    create_dir(out_dir)?;
    write_atomic(&out_dir.join("history.csv"), history_csv(&result, space).as_bytes())?;
    let params = ichloc_core::DetectorParams::from_point(&result.best.point)?;
    let cfg = DetectorConfig::new(params, footprint);
    write_json(&out_dir.join("best_params.json"), &cfg)?;
    println!(
        "best dice {:.4} at h={} T={} d={} (trial {})",
        result.best.objective, params.h, params.t, params.d, result.best.iteration
    );
    Ok(cfg)
}

pub fn optimize(args: &OptimizeArgs) -> CliResult<()> {
    if args.budget < 5 {
        return Err(usage(format!("budget must be at least 5, got {}", args.budget)));
    }
    let space = read_space(args.space.as_deref())?;
    let footprint = Footprint::new(args.footprint_radius)?;
    let boxes = read_boxes(&args.boxes)?;
    let scenes = assemble_scenes(load_maps(&args.maps)?, &boxes);
    if scenes.is_empty() {
        return Err(usage(format!("no maps in {}", args.maps.display())));
    }
    run_optimization(&scenes, &space, args.budget, args.seed, footprint, &args.out)?;
    Ok(())
}
