//! On-disk formats.
//!
//! - Cloud files: headerless little-endian `f32` records `(x, y, z, intensity)`, 16 bytes each.
//! - Label files: JSON `{frame_id, boxes: [{center, size, yaw, class, score?, provenance}]}`,
//!   written canonically (sorted keys, floats rounded to 6 significant digits).
//! - Manifests: JSON list of entries; relative paths resolve against the manifest's directory.
//! - GT databases: `index.json` plus one cloud file per entry under `entries/`.

use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::augment::{GtDatabase, GtEntry};
use crate::error::{Error, Result};
use crate::types::{
    Box3D, DatasetManifest, Domain, Frame, FrameSource, LabeledBox, ManifestEntry, Point, PointCloud, Provenance,
};

pub const RECORD_BYTES: usize = 16;

pub fn encode_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * RECORD_BYTES);
    for p in cloud.iter() {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_cloud(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("length {} is not a multiple of {RECORD_BYTES} bytes", bytes.len()),
        });
    }
    let mut points = Vec::with_capacity(bytes.len() / RECORD_BYTES);
    for (i, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().expect("4-byte slice")) as f64;
        let p = Point::new(f(0), f(1), f(2), f(3));
        if !p.is_finite() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("non-finite value in record {i}"),
            });
        }
        points.push(p);
    }
    Ok(PointCloud::new(points))
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cloud(&bytes, path)
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_bytes(path, &encode_cloud(cloud))
}

/// `x` rounded to 6 significant digits.
pub fn round6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn num(x: f64) -> Value {
    // -0.0 and 0.0 print differently; keep one spelling
    let r = round6(x);
    json!(if r == 0.0 { 0.0 } else { r })
}

/// Whether scores are required on every box (prediction files) or only on pseudo labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    GroundTruth,
    Predictions,
}

pub fn labels_to_json(frame_id: &str, boxes: &[LabeledBox]) -> Value {
    let boxes: Vec<Value> = boxes
        .iter()
        .map(|b| {
            let mut m = Map::new();
            m.insert("center".into(), Value::Array(b.bbox.center.iter().map(|v| num(*v)).collect()));
            m.insert("size".into(), Value::Array(b.bbox.size.iter().map(|v| num(*v)).collect()));
            m.insert("yaw".into(), num(b.bbox.yaw));
            m.insert("class".into(), json!(b.class));
            if let Some(s) = b.score {
                m.insert("score".into(), num(s));
            }
            m.insert("provenance".into(), serde_json::to_value(b.provenance).expect("enum serializes"));
            Value::Object(m)
        })
        .collect();
    json!({ "frame_id": frame_id, "boxes": boxes })
}

pub fn encode_labels(frame_id: &str, boxes: &[LabeledBox]) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&labels_to_json(frame_id, boxes)).expect("value serializes");
    out.push(b'\n');
    out
}

struct Validator<'a> {
    path: &'a Path,
}

impl Validator<'_> {
    fn err(&self, json_path: &str, message: impl Into<String>) -> Error {
        Error::Schema {
            path: self.path.to_path_buf(),
            json_path: json_path.to_string(),
            message: message.into(),
        }
    }

    fn object<'v>(&self, v: &'v Value, at: &str, allowed: &[&str], required: &[&str]) -> Result<&'v Map<String, Value>> {
        let m = v.as_object().ok_or_else(|| self.err(at, "expected an object"))?;
        if let Some(k) = m.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(self.err(&format!("{at}.{k}"), "unknown key"));
        }
        if let Some(k) = required.iter().find(|k| !m.contains_key(**k)) {
            return Err(self.err(&format!("{at}.{k}"), "missing required key"));
        }
        Ok(m)
    }

    fn number(&self, v: &Value, at: &str) -> Result<f64> {
        v.as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| self.err(at, "expected a finite number"))
    }

    fn vec3(&self, v: &Value, at: &str) -> Result<[f64; 3]> {
        let a = v.as_array().ok_or_else(|| self.err(at, "expected an array of 3 numbers"))?;
        if a.len() != 3 {
            return Err(self.err(at, format!("expected 3 numbers, found {}", a.len())));
        }
        let mut out = [0.0; 3];
        for (i, x) in a.iter().enumerate() {
            out[i] = self.number(x, &format!("{at}[{i}]"))?;
        }
        Ok(out)
    }

    fn string<'v>(&self, v: &'v Value, at: &str) -> Result<&'v str> {
        v.as_str().ok_or_else(|| self.err(at, "expected a string"))
    }

    fn labeled_box(&self, v: &Value, at: &str, kind: LabelKind) -> Result<LabeledBox> {
        let m = self.object(
            v,
            at,
            &["center", "size", "yaw", "class", "score", "provenance"],
            &["center", "size", "yaw", "class", "provenance"],
        )?;
        let center = self.vec3(&m["center"], &format!("{at}.center"))?;
        let size = self.vec3(&m["size"], &format!("{at}.size"))?;
        for (i, s) in size.iter().enumerate() {
            if *s <= 0.0 {
                return Err(self.err(&format!("{at}.size[{i}]"), "must be > 0"));
            }
        }
        let yaw = self.number(&m["yaw"], &format!("{at}.yaw"))?;
        let class = self.string(&m["class"], &format!("{at}.class"))?;
        if class.is_empty() {
            return Err(self.err(&format!("{at}.class"), "must be non-empty"));
        }
        let provenance = match self.string(&m["provenance"], &format!("{at}.provenance"))? {
            "real" => Provenance::Real,
            "pseudo" => Provenance::Pseudo,
            other => return Err(self.err(&format!("{at}.provenance"), format!("expected real or pseudo, found `{other}`"))),
        };
        let score = match m.get("score") {
            None => None,
            Some(s) => {
                let s = self.number(s, &format!("{at}.score"))?;
                if !(0.0..=1.0).contains(&s) {
                    return Err(self.err(&format!("{at}.score"), "must lie in [0, 1]"));
                }
                Some(s)
            }
        };
        let needs_score = kind == LabelKind::Predictions || provenance == Provenance::Pseudo;
        match (needs_score, score.is_some()) {
            (true, false) => return Err(self.err(&format!("{at}.score"), "required for pseudo labels and predictions")),
            (false, true) => return Err(self.err(&format!("{at}.score"), "only allowed on pseudo labels and predictions")),
            _ => {}
        }
        let bbox = Box3D::new(center, size, yaw).map_err(|e| self.err(at, e.to_string()))?;
        Ok(LabeledBox {
            bbox,
            class: class.to_string(),
            score,
            provenance,
        })
    }
}

/// Validates and parses a label document. Returns the frame id and the boxes in file order.
pub fn decode_labels(bytes: &[u8], path: &Path, kind: LabelKind) -> Result<(String, Vec<LabeledBox>)> {
    let v: Value = serde_json::from_slice(bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let val = Validator { path };
    let m = val.object(&v, "$", &["frame_id", "boxes"], &["frame_id", "boxes"])?;
    let frame_id = val.string(&m["frame_id"], "$.frame_id")?.to_string();
    let arr = m["boxes"].as_array().ok_or_else(|| val.err("$.boxes", "expected an array"))?;
    let boxes = arr
        .iter()
        .enumerate()
        .map(|(i, b)| val.labeled_box(b, &format!("$.boxes[{i}]"), kind))
        .collect::<Result<Vec<_>>>()?;
    Ok((frame_id, boxes))
}

pub fn read_labels(path: &Path, kind: LabelKind) -> Result<(String, Vec<LabeledBox>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_labels(&bytes, path, kind)
}

pub fn write_labels(path: &Path, frame_id: &str, boxes: &[LabeledBox]) -> Result<()> {
    write_bytes(path, &encode_labels(frame_id, boxes))
}

pub fn read_frame(cloud_path: &Path, label_path: &Path, domain: Domain) -> Result<Frame> {
    let cloud = read_cloud(cloud_path)?;
    let (id, labels) = read_labels(label_path, LabelKind::GroundTruth)?;
    Ok(Frame::new(id, cloud, labels, domain))
}

pub fn write_frame(frame: &Frame, cloud_path: &Path, label_path: &Path) -> Result<()> {
    write_cloud(cloud_path, &frame.cloud)?;
    write_labels(label_path, &frame.id, &frame.labels)
}

/// Reads the frame behind a manifest entry; the label file's id must match the entry.
pub fn read_entry(entry: &ManifestEntry) -> Result<Frame> {
    let frame = read_frame(&entry.cloud, &entry.labels, entry.domain)?;
    if frame.id != entry.id {
        return Err(Error::Schema {
            path: entry.labels.clone(),
            json_path: "$.frame_id".into(),
            message: format!("expected `{}`, found `{}`", entry.id, frame.id),
        });
    }
    Ok(frame)
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Loads a manifest, resolving relative paths and rejecting duplicate ids.
/// File existence is checked separately by [`DatasetManifest::check_files`].
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut entries: Vec<ManifestEntry> = serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let dir = manifest_dir(path);
    for e in &mut entries {
        e.cloud = normalize_path(&dir.join(&e.cloud));
        e.labels = normalize_path(&dir.join(&e.labels));
    }
    let m = DatasetManifest::new(entries);
    m.check_unique_ids()?;
    Ok(m)
}

/// Absolute form of `p` with `.` and `..` resolved lexically (symlinks are not followed).
pub fn normalize_path(p: &Path) -> PathBuf {
    let abs = std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let mut out = PathBuf::new();
    for c in abs.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

/// Paths are stored relative to the manifest's directory, so datasets can be moved as a tree.
pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    manifest.check_unique_ids()?;
    let dir = normalize_path(&manifest_dir(path));
    let rel = |p: &Path| {
        let abs = normalize_path(p);
        pathdiff::diff_paths(&abs, &dir).unwrap_or(abs)
    };
    let entries: Vec<ManifestEntry> = manifest
        .entries
        .iter()
        .map(|e| ManifestEntry {
            cloud: rel(&e.cloud),
            labels: rel(&e.labels),
            ..e.clone()
        })
        .collect();
    let mut out = serde_json::to_vec_pretty(&entries)?;
    out.push(b'\n');
    write_bytes(path, &out)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    write_bytes(path, &out)
}

/// Frames of a manifest, read from disk on access.
#[derive(Debug, Clone)]
pub struct ManifestFrames {
    pub entries: Vec<ManifestEntry>,
}

impl ManifestFrames {
    pub fn new<'a>(entries: impl IntoIterator<Item = &'a ManifestEntry>) -> Self {
        Self {
            entries: entries.into_iter().cloned().collect(),
        }
    }
}

impl FrameSource for ManifestFrames {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn frame(&self, index: usize) -> Result<Frame> {
        let e = self
            .entries
            .get(index)
            .ok_or_else(|| Error::InvalidArgument(format!("frame index {index} out of bounds")))?;
        read_entry(e)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GtIndexEntry {
    class: String,
    points: PathBuf,
    size: [f64; 3],
    source_center: [f64; 3],
    source_size: [f64; 3],
    source_yaw: f64,
    frame_id: String,
}

pub fn write_gt_database(dir: &Path, db: &GtDatabase) -> Result<()> {
    let mut index = Vec::with_capacity(db.len());
    for (i, e) in db.entries.iter().enumerate() {
        let rel = PathBuf::from("entries").join(format!("{i:06}.bin"));
        write_cloud(&dir.join(&rel), &e.points)?;
        index.push(GtIndexEntry {
            class: e.class.clone(),
            points: rel,
            size: e.size,
            source_center: e.source_box.center,
            source_size: e.source_box.size,
            source_yaw: e.source_box.yaw,
            frame_id: e.frame_id.clone(),
        });
    }
    write_json(&dir.join("index.json"), &index)
}

pub fn read_gt_database(dir: &Path) -> Result<GtDatabase> {
    let path = dir.join("index.json");
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let index: Vec<GtIndexEntry> = serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let entries = index
        .into_iter()
        .map(|g| {
            Ok(GtEntry {
                points: read_cloud(&dir.join(&g.points))?,
                source_box: Box3D::new(g.source_center, g.source_size, g.source_yaw)?,
                class: g.class,
                size: g.size,
                frame_id: g.frame_id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GtDatabase { entries })
}
