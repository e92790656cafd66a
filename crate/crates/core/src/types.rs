//! Domain types shared by every stage of the pipeline.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single LiDAR return in the sensor-centred frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }
}

impl From<Vec<Point>> for PointCloud {
    fn from(points: Vec<Point>) -> Self {
        Self { points }
    }
}

impl FromIterator<Point> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        Self {
            points: iter.into_iter().collect(),
        }
    }
}

/// Wraps an angle into (-π, π].
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(TAU);
    if wrapped > PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

/// Oriented 3D box. `size` is (length, width, height); length runs along the heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
}

impl Box3D {
    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64) -> Result<Self> {
        let b = Self {
            center,
            size,
            yaw: normalize_angle(yaw),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center.iter().all(|c| c.is_finite()) || !self.yaw.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite box {self:?}")));
        }
        if !self.size.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "box size must be strictly positive, got {:?}",
                self.size
            )));
        }
        Ok(())
    }

    /// Same box with length and width grown by `margin` on every side.
    pub fn enlarged(&self, margin: f64) -> Self {
        Self {
            size: [
                self.size[0] + 2.0 * margin,
                self.size[1] + 2.0 * margin,
                self.size[2],
            ],
            ..*self
        }
    }

    /// Coordinates of `p` in the box frame (origin at the centre, x along the heading).
    pub fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        [c * dx + s * dy, -s * dx + c * dy, p[2] - self.center[2]]
    }

    pub fn to_world(&self, local: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [
            self.center[0] + c * local[0] - s * local[1],
            self.center[1] + s * local[0] + c * local[1],
            self.center[2] + local[2],
        ]
    }

    /// Inclusive 3D containment, widened by `tolerance` on every face.
    pub fn contains(&self, p: [f64; 3], tolerance: f64) -> bool {
        let l = self.to_local(p);
        (0..3).all(|i| l[i].abs() <= 0.5 * self.size[i] + tolerance)
    }

    /// Inclusive footprint containment, ignoring z.
    pub fn contains_bev(&self, p: [f64; 2], tolerance: f64) -> bool {
        let l = self.to_local([p[0], p[1], self.center[2]]);
        l[0].abs() <= 0.5 * self.size[0] + tolerance && l[1].abs() <= 0.5 * self.size[1] + tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBox {
    pub bbox: Box3D,
    pub class: String,
    pub score: Option<f64>,
    pub provenance: Provenance,
}

impl LabeledBox {
    pub fn real(bbox: Box3D, class: impl Into<String>) -> Self {
        Self {
            bbox,
            class: class.into(),
            score: None,
            provenance: Provenance::Real,
        }
    }

    pub fn pseudo(bbox: Box3D, class: impl Into<String>, score: f64) -> Self {
        Self {
            bbox,
            class: class.into(),
            score: Some(score),
            provenance: Provenance::Pseudo,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidArgument(format!("score {s} outside [0, 1]")));
            }
        }
        if self.provenance == Provenance::Pseudo && self.score.is_none() {
            return Err(Error::InvalidArgument("pseudo label without score".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Source => "source",
            Domain::Target => "target",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: String,
    pub cloud: PointCloud,
    pub labels: Vec<LabeledBox>,
    pub domain: Domain,
}

impl Frame {
    pub fn new(id: impl Into<String>, cloud: PointCloud, labels: Vec<LabeledBox>, domain: Domain) -> Self {
        Self {
            id: id.into(),
            cloud,
            labels,
            domain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Labeled,
    Unlabeled,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub cloud: PathBuf,
    pub labels: PathBuf,
    pub domain: Domain,
    #[serde(default)]
    pub split: SplitTag,
}

/// Ordered list of frames on disk. Order is load-bearing: splits are defined by ordinal index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn with_split(&self, tag: SplitTag) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == tag)
    }

    pub fn check_unique_ids(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        Ok(())
    }

    /// Every referenced file must exist; all missing paths are reported at once.
    pub fn check_files(&self) -> Result<()> {
        let missing: Vec<PathBuf> = self
            .entries
            .iter()
            .flat_map(|e| [&e.cloud, &e.labels])
            .filter(|p| !p.is_file())
            .cloned()
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingFiles { missing })
        }
    }
}

/// Root of every random draw. Identical seed and inputs give identical outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Independent sub-seed for stream `index`.
    pub fn child(self, index: u64) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019))))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random-access collection of frames, either resident or loaded on demand.
pub trait FrameSource: Sync {
    fn len(&self) -> usize;

    fn frame(&self, index: usize) -> Result<Frame>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FrameSource for [Frame] {
    fn len(&self) -> usize {
        <[Frame]>::len(self)
    }

    fn frame(&self, index: usize) -> Result<Frame> {
        self.get(index)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("frame index {index} out of bounds")))
    }
}

impl FrameSource for Vec<Frame> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn frame(&self, index: usize) -> Result<Frame> {
        self.as_slice().frame(index)
    }
}

/// One element of a mixing stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub index: usize,
    pub frame: Frame,
    pub mixed: bool,
    /// Ids of the frames this emission was built from, in mixing order.
    pub parents: Vec<String>,
    /// Mask statistics, for MixUp emissions.
    pub mixup: Option<crate::mixup::MixUpStats>,
}
