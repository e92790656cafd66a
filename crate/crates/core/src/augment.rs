//! World-frame augmentations, intensity normalisation and ground-truth sampling.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DetectionRange;
use crate::error::{Error, Result};
use crate::geom::{bev_range, boxes_collide, rotate_about_origin};
use crate::types::{normalize_angle, Box3D, Frame, LabeledBox, Point, PointCloud, Provenance, Seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Master switch for the per-frame chain (crop, GT sampling, flip/rotate/scale).
    pub enabled: bool,
    /// Probability of flipping, drawn independently for each axis.
    pub flip_probability: f64,
    /// Rotation angle is uniform in [-rotation_range, rotation_range].
    pub rotation_range: f64,
    pub scale_range: [f64; 2],
    pub gt_sample_max_per_class: usize,
    pub gt_sample_attempts: usize,
    /// Pasted objects are placed with |x|, |y| below this limit...
    pub gt_sample_xy_limit: f64,
    /// ...and at least this far from the sensor.
    pub gt_sample_min_range: f64,
    /// Raw intensity span of each domain, mapped onto [0, 1] at load time.
    pub source_intensity: [f64; 2],
    pub target_intensity: [f64; 2],
    pub range: DetectionRange,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            flip_probability: 0.5,
            rotation_range: FRAC_PI_4,
            scale_range: [0.95, 1.05],
            gt_sample_max_per_class: 10,
            gt_sample_attempts: 10,
            gt_sample_xy_limit: 40.0,
            gt_sample_min_range: 3.0,
            source_intensity: [0.0, 255.0],
            target_intensity: [0.0, 1.0],
            range: DetectionRange::default(),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("augment.{m}")));
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return bad("flip_probability must lie in [0, 1]");
        }
        if !(self.rotation_range >= 0.0) {
            return bad("rotation_range must be >= 0");
        }
        if !(self.scale_range[0] > 0.0 && self.scale_range[0] <= self.scale_range[1]) {
            return bad("scale_range must satisfy 0 < lo <= hi");
        }
        if !(self.gt_sample_xy_limit > 0.0) || !(self.gt_sample_min_range >= 0.0) {
            return bad("gt_sample placement limits must be positive");
        }
        for span in [self.source_intensity, self.target_intensity] {
            if !(span[0] < span[1]) {
                return bad("intensity spans must satisfy lo < hi");
            }
        }
        self.range.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipAxis {
    /// Mirror across the x-axis: y → −y.
    X,
    /// Mirror across the y-axis: x → −x.
    Y,
}

fn map_frame(frame: &Frame, point: impl Fn(&Point) -> Point, bbox: impl Fn(&Box3D) -> Box3D) -> Frame {
    Frame {
        id: frame.id.clone(),
        cloud: frame.cloud.iter().map(point).collect(),
        labels: frame
            .labels
            .iter()
            .map(|l| LabeledBox {
                bbox: bbox(&l.bbox),
                ..l.clone()
            })
            .collect(),
        domain: frame.domain,
    }
}

pub fn world_flip(frame: &Frame, axis: FlipAxis) -> Frame {
    match axis {
        FlipAxis::X => map_frame(
            frame,
            |p| Point { y: -p.y, ..*p },
            |b| Box3D {
                center: [b.center[0], -b.center[1], b.center[2]],
                yaw: normalize_angle(-b.yaw),
                ..*b
            },
        ),
        FlipAxis::Y => map_frame(
            frame,
            |p| Point { x: -p.x, ..*p },
            |b| Box3D {
                center: [-b.center[0], b.center[1], b.center[2]],
                yaw: normalize_angle(PI - b.yaw),
                ..*b
            },
        ),
    }
}

pub fn world_rotate(frame: &Frame, angle: f64) -> Frame {
    map_frame(
        frame,
        |p| {
            let [x, y] = rotate_about_origin(p.xy(), angle);
            Point { x, y, ..*p }
        },
        |b| {
            let [x, y] = rotate_about_origin([b.center[0], b.center[1]], angle);
            Box3D {
                center: [x, y, b.center[2]],
                yaw: normalize_angle(b.yaw + angle),
                ..*b
            }
        },
    )
}

pub fn world_scale(frame: &Frame, s: f64) -> Result<Frame> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidArgument(format!("scale factor must be > 0, got {s}")));
    }
    Ok(map_frame(
        frame,
        |p| Point {
            x: p.x * s,
            y: p.y * s,
            z: p.z * s,
            intensity: p.intensity,
        },
        |b| Box3D {
            center: b.center.map(|c| c * s),
            size: b.size.map(|d| d * s),
            yaw: b.yaw,
        },
    ))
}

/// Maps intensities linearly from [in_min, in_max] onto [0, 1], clamping outliers.
pub fn normalize_intensity(frame: &Frame, in_min: f64, in_max: f64) -> Result<Frame> {
    if !(in_min < in_max) {
        return Err(Error::InvalidArgument(format!(
            "intensity span must satisfy min < max, got [{in_min}, {in_max}]"
        )));
    }
    let span = in_max - in_min;
    let mut out = frame.clone();
    for p in &mut out.cloud.points {
        p.intensity = ((p.intensity - in_min) / span).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Random flip per axis, then rotation, then scaling.
pub fn random_world_augment(frame: &Frame, cfg: &AugmentConfig, seed: Seed) -> Result<Frame> {
    let mut rng = seed.rng();
    let mut out = frame.clone();
    for axis in [FlipAxis::X, FlipAxis::Y] {
        if rng.gen_bool(cfg.flip_probability) {
            out = world_flip(&out, axis);
        }
    }
    let angle = if cfg.rotation_range > 0.0 {
        rng.gen_range(-cfg.rotation_range..=cfg.rotation_range)
    } else {
        0.0
    };
    out = world_rotate(&out, angle);
    let s = rng.gen_range(cfg.scale_range[0]..=cfg.scale_range[1]);
    world_scale(&out, s)
}

/// One stored object: its points in the box frame (centre at the origin, heading along +x).
#[derive(Debug, Clone, PartialEq)]
pub struct GtEntry {
    pub class: String,
    pub points: PointCloud,
    pub size: [f64; 3],
    /// Pose the object was cut from; its z-centre is reused when pasting.
    pub source_box: Box3D,
    pub frame_id: String,
}

impl GtEntry {
    pub fn canonical_box(&self) -> Box3D {
        Box3D {
            center: [0.0; 3],
            size: self.size,
            yaw: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GtDatabase {
    pub entries: Vec<GtEntry>,
}

impl GtDatabase {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn classes(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            by_class.entry(e.class.as_str()).or_default().push(i);
        }
        by_class
    }
}

fn extract_entries(frame: &Frame) -> Vec<GtEntry> {
    frame
        .labels
        .iter()
        .filter(|l| l.provenance == Provenance::Real)
        .map(|l| {
            let points = frame
                .cloud
                .iter()
                .filter(|p| l.bbox.contains([p.x, p.y, p.z], 0.0))
                .map(|p| {
                    let [x, y, z] = l.bbox.to_local([p.x, p.y, p.z]);
                    Point::new(x, y, z, p.intensity)
                })
                .collect();
            GtEntry {
                class: l.class.clone(),
                points,
                size: l.bbox.size,
                source_box: l.bbox,
                frame_id: frame.id.clone(),
            }
        })
        .collect()
}

/// One entry per real label, in frame order then label order.
pub fn build_gt_database(frames: &[Frame]) -> GtDatabase {
    let per_frame: Vec<Vec<GtEntry>> = frames.par_iter().map(extract_entries).collect();
    GtDatabase {
        entries: per_frame.into_iter().flatten().collect(),
    }
}

/// Containment tolerance used when clearing scene points under a pasted object.
const PASTE_TOLERANCE: f64 = 1e-6;

/// Pastes up to `gt_sample_max_per_class` stored objects per class at random collision-free
/// poses. Scene points under a pasted box are removed first, so the box holds exactly
/// the stored object points.
pub fn gt_sample(frame: &Frame, db: &GtDatabase, cfg: &AugmentConfig, seed: Seed) -> Frame {
    let mut out = frame.clone();
    if cfg.gt_sample_max_per_class == 0 || db.is_empty() {
        return out;
    }
    let mut rng = seed.rng();
    let mut occupied: Vec<Box3D> = out.labels.iter().map(|l| l.bbox).collect();
    for (class, indices) in db.classes() {
        let k = cfg.gt_sample_max_per_class.min(indices.len());
        for pick in sample(&mut rng, indices.len(), k).into_iter() {
            let entry = &db.entries[indices[pick]];
            if entry.is_empty() {
                continue;
            }
            let placed = (0..cfg.gt_sample_attempts).find_map(|_| {
                let x = rng.gen_range(-cfg.gt_sample_xy_limit..=cfg.gt_sample_xy_limit);
                let y = rng.gen_range(-cfg.gt_sample_xy_limit..=cfg.gt_sample_xy_limit);
                let yaw = normalize_angle(rng.gen_range(-PI..PI));
                if bev_range([x, y]) < cfg.gt_sample_min_range {
                    return None;
                }
                let candidate = Box3D {
                    center: [x, y, entry.source_box.center[2]],
                    size: entry.size,
                    yaw,
                };
                (!occupied.iter().any(|o| boxes_collide(o, &candidate))).then_some(candidate)
            });
            let Some(bbox) = placed else {
                log::debug!("gt_sample: no free pose for a `{class}` object in {}", frame.id);
                continue;
            };
            out.cloud
                .points
                .retain(|p| !bbox.contains([p.x, p.y, p.z], PASTE_TOLERANCE));
            out.cloud.points.extend(entry.points.iter().map(|p| {
                let [x, y, z] = bbox.to_world([p.x, p.y, p.z]);
                Point::new(x, y, z, p.intensity)
            }));
            out.labels.push(LabeledBox::real(bbox, class));
            occupied.push(bbox);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::oracle_boxes_collide;
    use crate::types::Domain;

    fn frame(points: Vec<Point>, labels: Vec<LabeledBox>) -> Frame {
        Frame::new("f", PointCloud::new(points), labels, Domain::Target)
    }

    fn car(x: f64, y: f64, yaw: f64) -> LabeledBox {
        LabeledBox::real(Box3D::new([x, y, 0.8], [4.0, 2.0, 1.6], yaw).unwrap(), "car")
    }

    fn pairwise(frame: &Frame) -> Vec<f64> {
        let p = &frame.cloud.points;
        let mut d = Vec::new();
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                d.push(((p[i].x - p[j].x).powi(2) + (p[i].y - p[j].y).powi(2) + (p[i].z - p[j].z).powi(2)).sqrt());
            }
        }
        d
    }

    fn scattered(n: usize, seed: u64) -> Frame {
        let mut rng = Seed(seed).rng();
        let pts = (0..n)
            .map(|_| {
                Point::new(
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-2.0..3.0),
                    rng.gen_range(0.0..1.0),
                )
            })
            .collect();
        frame(pts, vec![car(5.0, 5.0, 0.3)])
    }

    #[test]
    fn flip_examples() {
        let f = frame(vec![Point::new(1.0, 2.0, 0.0, 0.4)], vec![car(3.0, 1.0, FRAC_PI_4)]);
        let fx = world_flip(&f, FlipAxis::X);
        assert_eq!(fx.cloud.points[0], Point::new(1.0, -2.0, 0.0, 0.4));
        assert!((fx.labels[0].bbox.yaw + FRAC_PI_4).abs() < 1e-15);
        assert_eq!(fx.labels[0].bbox.center, [3.0, -1.0, 0.8]);
        for axis in [FlipAxis::X, FlipAxis::Y] {
            let back = world_flip(&world_flip(&f, axis), axis);
            assert_eq!(back.cloud, f.cloud);
            assert!((back.labels[0].bbox.yaw - f.labels[0].bbox.yaw).abs() < 1e-15);
        }
        let fy = world_flip(&f, FlipAxis::Y);
        assert_eq!(fy.cloud.points[0], Point::new(-1.0, 2.0, 0.0, 0.4));
        assert!((fy.labels[0].bbox.yaw - 3.0 * FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn flip_moves_heading_with_points() {
        // A point one metre ahead of the box stays one metre ahead after the flip.
        let b = car(10.0, 4.0, 0.6);
        let ahead = b.bbox.to_world([1.0, 0.0, 0.0]);
        let f = frame(vec![Point::new(ahead[0], ahead[1], ahead[2], 0.0)], vec![b]);
        for axis in [FlipAxis::X, FlipAxis::Y] {
            let g = world_flip(&f, axis);
            let p = g.cloud.points[0];
            let local = g.labels[0].bbox.to_local([p.x, p.y, p.z]);
            assert!((local[0] - 1.0).abs() < 1e-12 && local[1].abs() < 1e-12, "{axis:?}: {local:?}");
        }
    }

    #[test]
    fn rotate_examples() {
        let f = frame(vec![Point::new(1.0, 0.0, 0.0, 0.1)], vec![car(2.0, 0.0, 0.0)]);
        let r = world_rotate(&f, std::f64::consts::FRAC_PI_2);
        assert!(r.cloud.points[0].x.abs() < 1e-15 && (r.cloud.points[0].y - 1.0).abs() < 1e-15);
        assert!((r.labels[0].bbox.yaw - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(world_rotate(&f, 0.0), f);
    }

    #[test]
    fn isometries_preserve_distances() {
        let f = scattered(60, 1);
        let before = pairwise(&f);
        for g in [world_rotate(&f, 1.234), world_flip(&f, FlipAxis::X), world_flip(&f, FlipAxis::Y)] {
            for (a, b) in before.iter().zip(pairwise(&g)) {
                assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }
        }
        let s = world_scale(&f, 2.0).unwrap();
        for (a, b) in before.iter().zip(pairwise(&s)) {
            assert!((2.0 * a - b).abs() <= 1e-9 * b.max(1.0));
        }
    }

    #[test]
    fn scale_examples() {
        let f = scattered(30, 2);
        assert_eq!(world_scale(&f, 1.0).unwrap(), f);
        let round = world_scale(&world_scale(&f, 1.7).unwrap(), 1.0 / 1.7).unwrap();
        for (a, b) in f.cloud.iter().zip(round.cloud.iter()) {
            assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9 && (a.z - b.z).abs() < 1e-9);
        }
        assert!(world_scale(&f, 0.0).is_err());
        assert!(world_scale(&f, -1.0).is_err());
    }

    #[test]
    fn intensity_examples() {
        let f = frame(
            vec![
                Point::new(0.0, 0.0, 0.0, 255.0),
                Point::new(0.0, 0.0, 0.0, 0.0),
                Point::new(0.0, 0.0, 0.0, 127.5),
                Point::new(0.0, 0.0, 0.0, 300.0),
            ],
            vec![],
        );
        let n = normalize_intensity(&f, 0.0, 255.0).unwrap();
        let i: Vec<f64> = n.cloud.iter().map(|p| p.intensity).collect();
        assert_eq!(i, vec![1.0, 0.0, 0.5, 1.0]);
        assert_eq!(normalize_intensity(&n, 0.0, 1.0).unwrap(), n);
        assert!(normalize_intensity(&f, 1.0, 1.0).is_err());
    }

    #[test]
    fn gt_database_counts_and_roundtrip() {
        let b = car(10.0, -3.0, 0.4);
        let mut pts: Vec<Point> = (0..50)
            .map(|i| {
                let u = -1.9 + 3.8 * (i as f64 / 49.0);
                let v = -0.9 + 1.8 * ((i * 7 % 50) as f64 / 49.0);
                let w = -0.7 + 1.4 * ((i * 13 % 50) as f64 / 49.0);
                let [x, y, z] = b.bbox.to_world([u, v, w]);
                Point::new(x, y, z, 0.6)
            })
            .collect();
        pts.push(Point::new(-20.0, 0.0, 0.0, 0.1));
        let f = frame(pts.clone(), vec![b.clone()]);
        let db = build_gt_database(std::slice::from_ref(&f));
        assert_eq!(db.len(), 1);
        let e = &db.entries[0];
        assert_eq!(e.points.len(), 50);
        for p in e.points.iter() {
            assert!(e.canonical_box().contains([p.x, p.y, p.z], 1e-6));
        }
        for (orig, stored) in pts.iter().zip(e.points.iter()) {
            let back = b.bbox.to_world([stored.x, stored.y, stored.z]);
            assert!((back[0] - orig.x).abs() < 1e-6 && (back[1] - orig.y).abs() < 1e-6 && (back[2] - orig.z).abs() < 1e-6);
        }
        assert!(build_gt_database(&[frame(pts, vec![])]).is_empty());
    }

    #[test]
    fn gt_sampling_is_collision_free_and_conserves_points() {
        let objects: Vec<Frame> = (0..6)
            .map(|k| {
                let b = car(8.0 + 6.0 * k as f64, 2.0, 0.2 * k as f64);
                let pts = (0..20 + k)
                    .map(|i| {
                        let [x, y, z] = b.bbox.to_world([-1.5 + 0.1 * i as f64, 0.3, 0.1]);
                        Point::new(x, y, z, 0.7)
                    })
                    .collect();
                frame(pts, vec![b])
            })
            .collect();
        let db = build_gt_database(&objects);
        let cfg = AugmentConfig {
            gt_sample_max_per_class: 4,
            ..Default::default()
        };
        for s in 0..20 {
            let scene = scattered(500, 100 + s);
            let out = gt_sample(&scene, &db, &cfg, Seed(s));
            let boxes: Vec<Box3D> = out.labels.iter().map(|l| l.bbox).collect();
            for i in 0..boxes.len() {
                for j in i + 1..boxes.len() {
                    assert!(oracle_boxes_collide(&boxes[i], &boxes[j]).1 < 1e-9);
                }
            }
            for pasted in &out.labels[scene.labels.len()..] {
                let inside = out
                    .cloud
                    .iter()
                    .filter(|p| pasted.bbox.contains([p.x, p.y, p.z], 1e-6))
                    .count();
                let matching = db
                    .entries
                    .iter()
                    .any(|e| e.points.len() == inside && e.size == pasted.bbox.size);
                assert!(matching, "pasted box holds {inside} points");
            }
        }
        let off = AugmentConfig {
            gt_sample_max_per_class: 0,
            ..Default::default()
        };
        let scene = scattered(40, 9);
        assert_eq!(gt_sample(&scene, &db, &off, Seed(0)), scene);
    }

    #[test]
    fn random_augment_is_seeded() {
        let f = scattered(50, 4);
        let cfg = AugmentConfig::default();
        assert_eq!(
            random_world_augment(&f, &cfg, Seed(8)).unwrap(),
            random_world_augment(&f, &cfg, Seed(8)).unwrap()
        );
    }
}
