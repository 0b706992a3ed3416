use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Serialize;

use roigrasp::anchor_codec::{build_anchor_grid, AnchorSpec};
use roigrasp::assignment::{select_execution_grasp, EXECUTION_SCORE_THRESH};
use roigrasp::dataset_io::{augment as augment_scene, load_scene, read_id_list, scale_scene, write_dataset, SceneAnnotation};
use roigrasp::depth_grasp::{grasp_pose, DepthMap, Intrinsics};
use roigrasp::geometry::{AxisAlignedBox, OrientedRect};
use roigrasp::metrics::{evaluate, parse_detection_file, write_detection_file, ApMode, DetectionRecord, EvalConfig};
use roigrasp::suppression::{nms_box_indices, nms_grasp_indices, ScoredBox};
use roigrasp::synth::{write_synthetic_dataset, SynthConfig, SynthError};

use crate::failure::{CmdResult, Failure, InputContext};
use crate::{ApModeArg, AnchorsArgs, AugmentArgs, EvalArgs, Grasp3dArgs, NmsArgs, SynthArgs};

fn read_text(path: &Path) -> CmdResult<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).input()
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).input()?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display())).input()
}

fn read_detections(path: &Path) -> CmdResult<Vec<DetectionRecord>> {
    parse_detection_file(&read_text(path)?).map_err(|e| Failure::input(e).context(path.display().to_string()))
}

/// Loads the scenes listed in `index` in parallel, sorted by image id.
fn load_scenes(root: &Path, index: &Path) -> CmdResult<Vec<SceneAnnotation>> {
    let ids = read_id_list(index)?;
    let mut scenes = ids
        .par_iter()
        .map(|id| load_scene(root, id))
        .collect::<Result<Vec<_>, _>>()?;
    scenes.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(scenes)
}

/// Grasp NMS inside each detection, then per-class box NMS per image.
/// Survivors keep their input order.
fn suppress(dets: Vec<DetectionRecord>, grasp_thresh: Option<f64>, box_thresh: Option<f64>) -> Vec<DetectionRecord> {
    let mut dets: Vec<DetectionRecord> = dets
        .into_iter()
        .map(|mut d| {
            if let Some(t) = grasp_thresh {
                let mut keep = nms_grasp_indices(&d.grasps, t);
                keep.sort_unstable();
                d.grasps = keep.into_iter().map(|i| d.grasps[i]).collect();
            }
            d
        })
        .collect();
    let Some(t) = box_thresh else { return dets };
    let mut by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (n, d) in dets.iter().enumerate() {
        by_image.entry(d.image_id.as_str()).or_default().push(n);
    }
    let mut keep = vec![false; dets.len()];
    for members in by_image.values() {
        let boxes: Vec<ScoredBox> = members
            .iter()
            .map(|&n| ScoredBox {
                bbox: dets[n].bbox,
                category: dets[n].category.clone(),
                score: dets[n].score,
            })
            .collect();
        for k in nms_box_indices(&boxes, t) {
            keep[members[k]] = true;
        }
    }
    let mut n = 0;
    dets.retain(|_| {
        n += 1;
        keep[n - 1]
    });
    dets
}

#[derive(Serialize)]
struct Report<'a> {
    mr0: f64,
    mr_minus1: f64,
    lamr: f64,
    map: f64,
    per_class_ap: &'a BTreeMap<String, f64>,
    n_images: usize,
    n_gt: usize,
    n_detections: usize,
    config: &'a EvalConfig,
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    let index = a.index.clone().unwrap_or_else(|| a.gt.join("index"));
    let scenes = load_scenes(&a.gt, &index)?;
    let mut dets = read_detections(&a.dets)?;
    if a.index.is_some() {
        // A split scores only its own images.
        let ids: BTreeSet<&str> = scenes.iter().map(|s| s.image_id.as_str()).collect();
        dets.retain(|d| ids.contains(d.image_id.as_str()));
    }
    let dets = suppress(dets, a.nms_grasp, a.nms_box);
    let cfg = EvalConfig {
        box_iou_thresh: a.box_iou_thresh,
        jaccard_thresh: a.jaccard_thresh,
        angle_thresh: a.angle_thresh,
        ignore_hard: a.ignore_hard,
        score_floor: a.score_floor,
        ap_mode: match a.ap_mode {
            ApModeArg::AllPoint => ApMode::AllPoint,
            ApModeArg::ElevenPoint => ApMode::ElevenPoint,
        },
    };
    let r = evaluate(&dets, &scenes, &cfg)?;
    let report = Report {
        mr0: r.mr0,
        mr_minus1: r.mr_minus1,
        lamr: r.lamr,
        map: r.map,
        per_class_ap: &r.per_class_ap,
        n_images: r.curve.n_images,
        n_gt: r.curve.n_gt,
        n_detections: dets.len(),
        config: &cfg,
    };
    let mut text = serde_json::to_string_pretty(&report).input()?;
    text.push('\n');
    write_text(&a.out.join("report"), &text)?;

    let mut csv = csv::Writer::from_writer(Vec::new());
    for p in &r.curve.points {
        csv.serialize(p).input()?;
    }
    let csv = String::from_utf8(csv.into_inner().input()?).input()?;
    write_text(&a.out.join("curve.csv"), &csv)?;
    println!(
        "mr0 {:.4}  mr-1 {:.4}  lamr {:.4}  mAP {:.4}  ({} images, {} objects)",
        r.mr0, r.mr_minus1, r.lamr, r.map, r.curve.n_images, r.curve.n_gt
    );
    Ok(())
}

pub fn synth(a: &SynthArgs) -> CmdResult {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => serde_json::from_str(&read_text(p)?)
            .with_context(|| format!("parsing {}", p.display()))
            .input()?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    write_synthetic_dataset(&a.out, &cfg).map_err(|e| match e {
        SynthError::PlacementFailed { .. } => Failure::domain(e),
        _ => Failure::input(e),
    })?;
    println!("wrote {} scenes to {}", cfg.n_scenes, a.out.display());
    Ok(())
}

pub fn nms(a: &NmsArgs) -> CmdResult {
    let dets = read_detections(&a.dets)?;
    let before = dets.len();
    let kept = suppress(dets, Some(a.nms_grasp), Some(a.nms_box));
    write_text(&a.out, &write_detection_file(&kept))?;
    println!("kept {} of {before} detections", kept.len());
    Ok(())
}

#[derive(Serialize)]
struct PoseLine<'a> {
    image_id: &'a str,
    detection: usize,
    category: &'a str,
    score: f64,
    grasp: OrientedRect,
    pixel: (usize, usize),
    point: [f64; 3],
    normal: [f64; 3],
}

fn depth_path(dir: &Path, image_id: &str) -> CmdResult<PathBuf> {
    ["png", "txt"]
        .iter()
        .map(|ext| dir.join(format!("{image_id}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| Failure::input(anyhow!("no depth map for image '{image_id}' in {}", dir.display())))
}

pub fn grasp3d(a: &Grasp3dArgs) -> CmdResult {
    let dets = read_detections(&a.dets)?;
    let intr: Intrinsics = serde_json::from_str(&read_text(&a.intrinsics)?)
        .with_context(|| format!("parsing {}", a.intrinsics.display()))
        .input()?;
    let mut by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (n, d) in dets.iter().enumerate() {
        by_image.entry(d.image_id.as_str()).or_default().push(n);
    }
    let groups: Vec<(&str, Vec<usize>)> = by_image.into_iter().collect();
    let per_image: Vec<Vec<String>> = groups
        .par_iter()
        .map(|(id, members)| {
            let path = depth_path(&a.depth_dir, id)?;
            let depth = DepthMap::load(&path, intr).map_err(|e| Failure::from(e).context(path.display().to_string()))?;
            let mut lines = Vec::new();
            for &n in members {
                let d = &dets[n];
                let grasp = if a.nearest_center {
                    select_execution_grasp(d, EXECUTION_SCORE_THRESH)
                } else {
                    d.top1_grasp().map(|g| g.rect)
                };
                let Some(grasp) = grasp else { continue };
                let pose = grasp_pose(&grasp, &depth, a.radius).map_err(|e| {
                    Failure::from(e).context(format!("image '{id}', detection {n} ({})", d.category))
                })?;
                let line = PoseLine {
                    image_id: id,
                    detection: n,
                    category: &d.category,
                    score: d.score,
                    grasp,
                    pixel: pose.pixel,
                    point: pose.point,
                    normal: pose.normal,
                };
                lines.push(serde_json::to_string(&line).input()?);
            }
            Ok(lines)
        })
        .collect::<CmdResult<_>>()?;
    let mut out = String::new();
    let mut count = 0;
    for line in per_image.into_iter().flatten() {
        out.push_str(&line);
        out.push('\n');
        count += 1;
    }
    write_text(&a.out, &out)?;
    println!("wrote {count} grasp poses");
    Ok(())
}

pub fn augment(a: &AugmentArgs) -> CmdResult {
    let scenes = load_scenes(&a.gt, &a.gt.join("index"))?;
    let out: Vec<SceneAnnotation> = scenes
        .par_iter()
        .map(|s| {
            let s = match a.transform {
                Some(t) => augment_scene(s, t),
                None => s.clone(),
            };
            match a.short_side {
                Some(side) => scale_scene(&s, side),
                None => Ok(s),
            }
        })
        .collect::<Result<_, _>>()?;
    write_dataset(&a.out, &out)?;
    println!("wrote {} scenes to {}", out.len(), a.out.display());
    Ok(())
}

pub fn anchors(a: &AnchorsArgs) -> CmdResult {
    let [x0, y0, x1, y1] = a.roi[..] else {
        return Err(Failure::input(anyhow!("--roi takes four values")));
    };
    let roi = AxisAlignedBox::new(x0, y0, x1, y1).input()?;
    let spec = AnchorSpec::new(a.grid_w, a.grid_h, a.k, a.anchor_size).input()?;
    let grid = build_anchor_grid(roi, spec).input()?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["anchor", "i", "j", "m", "x", "y", "w", "h", "theta"]).input()?;
    for j in 0..a.grid_h {
        for i in 0..a.grid_w {
            for m in 0..a.k {
                let n = grid.flat_index(i, j, m);
                let r = grid.anchors()[n];
                csv.serialize((n, i, j, m, r.x(), r.y(), r.w(), r.h(), r.theta())).input()?;
            }
        }
    }
    let bytes = csv.into_inner().input()?;
    match &a.out {
        Some(p) => write_text(p, &String::from_utf8(bytes).input()?),
        None => std::io::stdout().write_all(&bytes).input(),
    }
}
