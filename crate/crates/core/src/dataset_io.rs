//! Multi-object grasp annotations: parsing, validation, writing and
//! geometric augmentation.
//!
//! A scene is stored as two documents. The grasp document holds one grasp per
//! line as ten whitespace-separated tokens, `x1 y1 x2 y2 x3 y3 x4 y4 flag index`,
//! where `flag` is `0` (easy) or `1` (hard) and `index` names the owning object.
//! The object document is a JSON record
//! `{image_id, width, height, objects: [{index, category, bbox}]}`.
//!
//! On disk a dataset root contains an `index` file listing image ids, one per
//! line, and an `annotations/` directory with `<image_id>.objects` and
//! `<image_id>.grasp` pairs.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{vertices_to_rect, AxisAlignedBox, OrientedRect, QuadVertices, DEFAULT_RECT_TOL};

/// Shorter image side after resizing.
pub const DEFAULT_SHORT_SIDE: f64 = 600.0;
pub const HIRES_SHORT_SIDE: f64 = 800.0;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("object document: {0}")]
    ObjectDoc(String),
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<DatasetError>,
    },
}

impl DatasetError {
    fn in_file(self, path: &Path) -> Self {
        DatasetError::InFile {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspAnnotation {
    pub rect: OrientedRect,
    pub hard: bool,
    pub owner_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub index: u32,
    pub category: String,
    pub bbox: AxisAlignedBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    pub objects: Vec<ObjectAnnotation>,
    pub grasps: Vec<GraspAnnotation>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDoc {
    image_id: String,
    width: f64,
    height: f64,
    objects: Vec<ObjectAnnotation>,
}

impl SceneAnnotation {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |msg: String| Err(DatasetError::Validation(format!("{}: {msg}", self.image_id)));
        if !(self.width.is_finite() && self.width > 0.0 && self.height.is_finite() && self.height > 0.0) {
            return bad(format!("image size {}x{} must be positive", self.width, self.height));
        }
        let mut seen = BTreeSet::new();
        for o in &self.objects {
            if o.index < 1 {
                return bad("object index must be at least 1".into());
            }
            if !seen.insert(o.index) {
                return bad(format!("duplicate object index {}", o.index));
            }
            let b = &o.bbox;
            if b.x_min() < 0.0 || b.y_min() < 0.0 || b.x_max() > self.width || b.y_max() > self.height {
                return bad(format!("object {} box {:?} leaves the image", o.index, b.to_array()));
            }
        }
        for (n, g) in self.grasps.iter().enumerate() {
            if !seen.contains(&g.owner_index) {
                return bad(format!("grasp {} references missing object {}", n + 1, g.owner_index));
            }
            let (x, y) = g.rect.center();
            if x < 0.0 || y < 0.0 || x > self.width || y > self.height {
                return bad(format!("grasp {} center ({x}, {y}) lies outside the image", n + 1));
            }
        }
        Ok(())
    }

    pub fn object(&self, index: u32) -> Option<&ObjectAnnotation> {
        self.objects.iter().find(|o| o.index == index)
    }

    /// Grasps owned by the object with the given index.
    pub fn grasps_of(&self, index: u32) -> impl Iterator<Item = &GraspAnnotation> {
        self.grasps.iter().filter(move |g| g.owner_index == index)
    }
}

fn parse_grasp_line(line: &str, line_no: usize) -> Result<GraspAnnotation, DatasetError> {
    let err = |message: String| DatasetError::Parse { line: line_no, message };
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 10 {
        return Err(err(format!("expected 10 fields, found {}", tokens.len())));
    }
    let mut coords = [0.0; 8];
    for (slot, tok) in coords.iter_mut().zip(&tokens[..8]) {
        *slot = tok
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| err(format!("bad coordinate '{tok}'")))?;
    }
    let hard = match tokens[8] {
        "0" => false,
        "1" => true,
        other => return Err(err(format!("flag must be 0 or 1, found '{other}'"))),
    };
    let owner_index: u32 = tokens[9]
        .parse()
        .map_err(|_| err(format!("bad object index '{}'", tokens[9])))?;
    let rect = vertices_to_rect(&QuadVertices::from_flat(coords), DEFAULT_RECT_TOL)
        .map_err(|e| DatasetError::Validation(format!("line {line_no}: {e}")))?;
    Ok(GraspAnnotation {
        rect,
        hard,
        owner_index,
    })
}

/// Parses the grasp document alone; blank lines and `#` comments are skipped.
pub fn parse_grasp_doc(grasp_doc: &str) -> Result<Vec<GraspAnnotation>, DatasetError> {
    grasp_doc
        .lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| parse_grasp_line(l, i + 1))
        .collect()
}

pub fn parse_scene(object_doc: &str, grasp_doc: &str) -> Result<SceneAnnotation, DatasetError> {
    let doc: ObjectDoc = serde_json::from_str(object_doc).map_err(|e| DatasetError::ObjectDoc(e.to_string()))?;
    let scene = SceneAnnotation {
        image_id: doc.image_id,
        width: doc.width,
        height: doc.height,
        objects: doc.objects,
        grasps: parse_grasp_doc(grasp_doc)?,
    };
    scene.validate()?;
    Ok(scene)
}

/// Formats one grasp in the ten-token line grammar (without newline).
pub fn format_grasp_line(g: &GraspAnnotation) -> String {
    let mut line = String::new();
    for v in g.rect.vertices().flat() {
        write!(line, "{v} ").unwrap();
    }
    write!(line, "{} {}", u8::from(g.hard), g.owner_index).unwrap();
    line
}

/// Serializes a scene to `(object_doc, grasp_doc)`. Output is deterministic.
pub fn write_scene(s: &SceneAnnotation) -> (String, String) {
    let doc = ObjectDoc {
        image_id: s.image_id.clone(),
        width: s.width,
        height: s.height,
        objects: s.objects.clone(),
    };
    let mut object_doc = serde_json::to_string_pretty(&doc).expect("object doc serializes");
    object_doc.push('\n');
    let mut grasp_doc = String::new();
    for g in &s.grasps {
        grasp_doc.push_str(&format_grasp_line(g));
        grasp_doc.push('\n');
    }
    (object_doc, grasp_doc)
}

/// Rigid image transforms used for augmentation. Rotations are
/// counterclockwise as displayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    HFlip,
    Rot90,
    Rot180,
    Rot270,
}

impl Transform {
    pub const ALL: [Transform; 4] = [Transform::HFlip, Transform::Rot90, Transform::Rot180, Transform::Rot270];

    pub fn name(&self) -> &'static str {
        match self {
            Transform::HFlip => "hflip",
            Transform::Rot90 => "rot90",
            Transform::Rot180 => "rot180",
            Transform::Rot270 => "rot270",
        }
    }

    fn map_point(&self, p: (f64, f64), w: f64, h: f64) -> (f64, f64) {
        match self {
            Transform::HFlip => (w - p.0, p.1),
            Transform::Rot90 => (p.1, w - p.0),
            Transform::Rot180 => (w - p.0, h - p.1),
            Transform::Rot270 => (h - p.1, p.0),
        }
    }

    fn map_angle(&self, theta: f64) -> f64 {
        match self {
            Transform::HFlip => -theta,
            Transform::Rot90 => theta - 90.0,
            Transform::Rot180 => theta,
            Transform::Rot270 => theta + 90.0,
        }
    }

    fn map_size(&self, w: f64, h: f64) -> (f64, f64) {
        match self {
            Transform::HFlip | Transform::Rot180 => (w, h),
            Transform::Rot90 | Transform::Rot270 => (h, w),
        }
    }
}

impl FromStr for Transform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Transform::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown transform '{s}', expected one of hflip, rot90, rot180, rot270"))
    }
}

pub fn augment(s: &SceneAnnotation, t: Transform) -> SceneAnnotation {
    let (w, h) = (s.width, s.height);
    let objects = s
        .objects
        .iter()
        .map(|o| {
            let b = &o.bbox;
            let p = t.map_point((b.x_min(), b.y_min()), w, h);
            let q = t.map_point((b.x_max(), b.y_max()), w, h);
            let bbox = AxisAlignedBox::new(p.0.min(q.0), p.1.min(q.1), p.0.max(q.0), p.1.max(q.1))
                .expect("rigid transform keeps boxes non-degenerate");
            ObjectAnnotation {
                bbox,
                ..o.clone()
            }
        })
        .collect();
    let grasps = s
        .grasps
        .iter()
        .map(|g| {
            let r = &g.rect;
            let (x, y) = t.map_point(r.center(), w, h);
            let rect = OrientedRect::new(x, y, r.w(), r.h(), t.map_angle(r.theta()))
                .expect("rigid transform keeps rectangles valid");
            GraspAnnotation { rect, ..g.clone() }
        })
        .collect();
    let (width, height) = t.map_size(w, h);
    SceneAnnotation {
        image_id: s.image_id.clone(),
        width,
        height,
        objects,
        grasps,
    }
}

/// Uniformly rescales a scene so its shorter image side equals `short_side`.
pub fn scale_scene(s: &SceneAnnotation, short_side: f64) -> Result<SceneAnnotation, DatasetError> {
    if !(short_side.is_finite() && short_side > 0.0) {
        return Err(DatasetError::Validation(format!("short side {short_side} must be positive")));
    }
    let min_side = s.width.min(s.height);
    let f = |v: f64| v * short_side / min_side;
    let objects = s
        .objects
        .iter()
        .map(|o| {
            let b = &o.bbox;
            ObjectAnnotation {
                bbox: AxisAlignedBox::new(f(b.x_min()), f(b.y_min()), f(b.x_max()), f(b.y_max()))
                    .expect("positive scale keeps boxes valid"),
                ..o.clone()
            }
        })
        .collect();
    let grasps = s
        .grasps
        .iter()
        .map(|g| {
            let r = &g.rect;
            GraspAnnotation {
                rect: OrientedRect::new(f(r.x()), f(r.y()), f(r.w()), f(r.h()), r.theta())
                    .expect("positive scale keeps rectangles valid"),
                ..g.clone()
            }
        })
        .collect();
    Ok(SceneAnnotation {
        image_id: s.image_id.clone(),
        width: f(s.width),
        height: f(s.height),
        objects,
        grasps,
    })
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), DatasetError> {
    fs::write(path, contents).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a list of image ids, one per line.
pub fn read_id_list(path: &Path) -> Result<Vec<String>, DatasetError> {
    Ok(read(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

pub fn annotation_paths(root: &Path, image_id: &str) -> (PathBuf, PathBuf) {
    let dir = root.join("annotations");
    (dir.join(format!("{image_id}.objects")), dir.join(format!("{image_id}.grasp")))
}

pub fn load_scene(root: &Path, image_id: &str) -> Result<SceneAnnotation, DatasetError> {
    let (obj_path, grasp_path) = annotation_paths(root, image_id);
    let object_doc = read(&obj_path)?;
    let grasp_doc = read(&grasp_path)?;
    let doc: ObjectDoc = serde_json::from_str(&object_doc)
        .map_err(|e| DatasetError::ObjectDoc(e.to_string()).in_file(&obj_path))?;
    let grasps = parse_grasp_doc(&grasp_doc).map_err(|e| e.in_file(&grasp_path))?;
    let scene = SceneAnnotation {
        image_id: doc.image_id,
        width: doc.width,
        height: doc.height,
        objects: doc.objects,
        grasps,
    };
    if scene.image_id != image_id {
        return Err(DatasetError::Validation(format!(
            "image_id '{}' does not match file name '{image_id}'",
            scene.image_id
        ))
        .in_file(&obj_path));
    }
    scene.validate().map_err(|e| e.in_file(&obj_path))?;
    Ok(scene)
}

/// Loads every scene listed in `<root>/index`, in index order.
pub fn load_dataset(root: &Path) -> Result<Vec<SceneAnnotation>, DatasetError> {
    load_dataset_with_index(root, &root.join("index"))
}

pub fn load_dataset_with_index(root: &Path, index: &Path) -> Result<Vec<SceneAnnotation>, DatasetError> {
    read_id_list(index)?
        .iter()
        .map(|id| load_scene(root, id))
        .collect()
}

/// Writes scenes and the `index` file under `root`, creating directories.
pub fn write_dataset(root: &Path, scenes: &[SceneAnnotation]) -> Result<(), DatasetError> {
    let ann = root.join("annotations");
    fs::create_dir_all(&ann).map_err(|source| DatasetError::Io { path: ann.clone(), source })?;
    let mut index = String::new();
    for s in scenes {
        let (obj, grasp) = write_scene(s);
        let (obj_path, grasp_path) = annotation_paths(root, &s.image_id);
        write(&obj_path, &obj)?;
        write(&grasp_path, &grasp)?;
        index.push_str(&s.image_id);
        index.push('\n');
    }
    write(&root.join("index"), &index)
}
