//! End-to-end pipeline driven by a single JSON config.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use ichloc_core::io::{read_boxes, read_detections, read_json, write_detections, write_json};
use ichloc_core::metrics::{match_all, report, ReportJson};
use ichloc_core::morph::{DetectorConfig, Footprint};
use ichloc_core::pipeline::{assemble_scenes, detect_all, split_indices, DEFAULT_TUNING_RATIO};
use ichloc_core::windowing::WindowSpec;
use ichloc_core::{DetectorParams, Error};

use crate::args::{Head, RunArgs};
use crate::commands::{load_maps, read_space, run_optimization, window_dir, WINDOWS};
use crate::error::{usage, CliResult};

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKeyword {
    /// Tune on the tuning split, report on the rest.
    Optimize,
    /// Published optimum of the configured head.
    Published,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DetectorChoice {
    Fixed(DetectorParams),
    Keyword(DetectorKeyword),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    #[serde(default = "default_budget")]
    pub budget: usize,
    pub space: Option<PathBuf>,
    #[serde(default = "default_ratio")]
    pub tuning_ratio: f64,
}

fn default_budget() -> usize {
    60
}

fn default_ratio() -> f64 {
    DEFAULT_TUNING_RATIO
}

fn default_radius() -> usize {
    1
}

fn default_head() -> Head {
    Head::Pooling
}

/// Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// HU slices to window; the stage is skipped when absent.
    pub hu_dir: Option<PathBuf>,
    pub windows: Option<[WindowSpec; 2]>,
    /// Standardization statistics; computed from `hu_dir` when absent.
    pub stats: Option<PathBuf>,
    #[serde(default)]
    pub per_channel_stats: bool,
    #[serde(default = "default_head")]
    pub head: Head,
    /// Likelihood maps, one per slice.
    pub maps_dir: Option<PathBuf>,
    pub boxes: Option<PathBuf>,
    /// Precomputed detections; the detection stage is skipped when given.
    pub detections: Option<PathBuf>,
    pub detector: Option<DetectorChoice>,
    pub optimize: Option<OptimizeSection>,
    #[serde(default = "default_radius")]
    pub footprint_radius: usize,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

enum Plan {
    Fixed(DetectorParams),
    Optimize(OptimizeSection),
}

impl PipelineConfig {
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.hu_dir);
        fix(&mut self.stats);
        fix(&mut self.maps_dir);
        fix(&mut self.boxes);
        fix(&mut self.detections);
        fix(&mut self.out_dir);
        if let Some(o) = &mut self.optimize {
            fix(&mut o.space);
        }
    }

    fn plan(&self) -> CliResult<Plan> {
        match (&self.detector, &self.optimize) {
            (Some(DetectorChoice::Fixed(_)), Some(_)) => Err(usage(
                "config gives both fixed detector parameters and an optimize section",
            )),
            (Some(DetectorChoice::Keyword(DetectorKeyword::Published)), Some(_)) => Err(usage(
                "config asks for published parameters and also has an optimize section",
            )),
            (Some(DetectorChoice::Fixed(p)), None) => Ok(Plan::Fixed(*p)),
            (Some(DetectorChoice::Keyword(DetectorKeyword::Published)), None) => Ok(Plan::Fixed(match self.head {
                Head::Pooling => DetectorParams::POOLING,
                Head::Attention => DetectorParams::ATTENTION,
            })),
            (Some(DetectorChoice::Keyword(DetectorKeyword::Optimize)), o) | (None, o @ Some(_)) => {
                Ok(Plan::Optimize(o.clone().unwrap_or(OptimizeSection {
                    budget: default_budget(),
                    space: None,
                    tuning_ratio: default_ratio(),
                })))
            }
            (None, None) => Err(usage("config needs `detector` (parameters, \"published\" or \"optimize\")")),
        }
    }
}

pub fn load_config(args: &RunArgs) -> CliResult<PipelineConfig> {
    let mut cfg: PipelineConfig = read_json(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    cfg.resolve_paths(base);
    if let Some(p) = &args.maps {
        cfg.maps_dir = Some(p.clone());
    }
    if let Some(p) = &args.boxes {
        cfg.boxes = Some(p.clone());
    }
    if let Some(p) = &args.out {
        cfg.out_dir = Some(p.clone());
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(b) = args.budget {
        match &mut cfg.optimize {
            Some(o) => o.budget = b,
            None if matches!(cfg.detector, Some(DetectorChoice::Keyword(DetectorKeyword::Optimize))) => {
                cfg.optimize = Some(OptimizeSection {
                    budget: b,
                    space: None,
                    tuning_ratio: default_ratio(),
                })
            }
            None => {}
        }
    }
    Ok(cfg)
}

pub fn run(args: &RunArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    let plan = cfg.plan()?;
    let out = cfg.out_dir.clone().ok_or_else(|| usage("config needs `out_dir` (or --out)"))?;
    let footprint = Footprint::new(cfg.footprint_radius)?;
    let boxes_path = cfg.boxes.as_ref().ok_or_else(|| usage("config needs `boxes` (or --boxes)"))?;
    std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;

    if let Some(hu) = &cfg.hu_dir {
        window_dir(
            hu,
            &out.join("windowed"),
            cfg.stats.as_deref(),
            cfg.per_channel_stats,
            cfg.windows.unwrap_or(WINDOWS),
        )?;
    }

    let boxes = read_boxes(boxes_path)?;
    let (detections, evaluated_boxes) = if let Some(dpath) = &cfg.detections {
        (read_detections(dpath)?, boxes)
    } else {
        let maps_dir = cfg.maps_dir.as_ref().ok_or_else(|| usage("config needs `maps_dir` or `detections`"))?;
        let maps = load_maps(maps_dir)?;
        match plan {
            Plan::Fixed(params) => {
                let dc = DetectorConfig::new(params, footprint);
                write_json(&out.join("params.json"), &dc)?;
                (detect_all(&maps, &dc)?, boxes)
            }
            Plan::Optimize(section) => {
                let space = read_space(section.space.as_deref())?;
                let (tune_ix, test_ix) = split_indices(maps.len(), section.tuning_ratio, cfg.seed)?;
                if tune_ix.is_empty() || test_ix.is_empty() {
                    return Err(usage(format!(
                        "tuning ratio {} leaves an empty split of {} maps",
                        section.tuning_ratio,
                        maps.len()
                    )));
                }
                let tune_maps: Vec<_> = tune_ix.iter().map(|&i| maps[i].clone()).collect();
                let test_maps: Vec<_> = test_ix.iter().map(|&i| maps[i].clone()).collect();
                let tune_scenes = assemble_scenes(tune_maps, &boxes);
                let dc = run_optimization(&tune_scenes, &space, section.budget, cfg.seed, footprint, &out.join("optimize"))?;
                write_json(&out.join("params.json"), &dc)?;
                let test_ids: std::collections::BTreeSet<&str> = test_maps.iter().map(|(id, _)| id.as_str()).collect();
                let test_boxes = boxes.iter().filter(|b| test_ids.contains(b.slice_id.as_str())).cloned().collect();
                write_json(&out.join("test_slices.json"), &test_ids)?;
                (detect_all(&test_maps, &dc)?, test_boxes)
            }
        }
    };

    if cfg.detections.is_none() {
        write_detections(&detections, out.join("detections.json"))?;
    }
    let per_slice = match_all(&detections, &evaluated_boxes);
    let rep = ReportJson::from(&report(per_slice.iter().map(|(_, c)| *c).sum()));
    write_json(&out.join("report.json"), &rep)?;
    println!("{}", serde_json::to_string_pretty(&rep).map_err(|e| Error::Numerical(e.to_string()))?);
    Ok(())
}
