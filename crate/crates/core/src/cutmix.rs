//! Cross-domain region mixing.
//!
//! A bird's-eye-view rectangle is cut around a random point `c_T` of a labeled
//! target frame. A source point `c_S` at (approximately) the same range as
//! `c_T` is chosen, the rectangle is carried about the sensor origin onto the
//! bearing of `c_S`, and the source contents under the carried rectangle are
//! replaced by the cut target contents:
//!
//! ```text
//! points = concat(M ⊙ source_points, (1 - M) ⊙ target_points)
//! boxes  = concat(M ⊙ source_boxes,  (1 - M) ⊙ target_boxes)
//! ```
//!
//! Rotation about the origin is the rigid motion that moves `c_T` onto the
//! bearing of `c_S` while keeping every point's range, so the ring pattern of
//! the cut region is preserved. Boxes belong to the region iff their centre does.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{azimuth, bev_range, rotate_about_origin, BevRect};
use crate::types::{normalize_angle, Emission, Frame, FrameSource, LabeledBox, Point, PointCloud, Seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutMixConfig {
    pub apply_probability: f64,
    pub half_extent_min: f64,
    pub half_extent_max: f64,
    /// Allowed |range(c_S) - range(c_T)| in metres before doubling.
    pub range_tolerance: f64,
    pub max_center_retries: u32,
    /// When set, the non-mixed branch emits a random source frame half of the time.
    pub include_source_on_skip: bool,
    /// Stream length; defaults to the number of target frames.
    pub emissions: Option<usize>,
}

impl Default for CutMixConfig {
    fn default() -> Self {
        Self {
            apply_probability: 0.5,
            half_extent_min: 10.0,
            half_extent_max: 40.0,
            range_tolerance: 1.0,
            max_center_retries: 4,
            include_source_on_skip: false,
            emissions: None,
        }
    }
}

impl CutMixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(Error::Config(format!(
                "cutmix.apply_probability must lie in [0, 1], got {}",
                self.apply_probability
            )));
        }
        if !(self.half_extent_min > 0.0 && self.half_extent_min <= self.half_extent_max) {
            return Err(Error::Config(format!(
                "cutmix half extents must satisfy 0 < min <= max, got [{}, {}]",
                self.half_extent_min, self.half_extent_max
            )));
        }
        if !(self.range_tolerance >= 0.0) {
            return Err(Error::Config("cutmix.range_tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

/// The cut rectangle and the target point it was anchored at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutRegion {
    pub center_point: Point,
    pub rect: BevRect,
}

/// Picks `c_T` uniformly among target points and draws independent half extents.
/// The rectangle's u-axis points radially away from the sensor.
pub fn sample_cut_region(target: &Frame, cfg: &CutMixConfig, seed: Seed) -> Result<CutRegion> {
    if target.cloud.is_empty() {
        return Err(Error::Empty("target cloud"));
    }
    let mut rng = seed.rng();
    let c = target.cloud.points[rng.gen_range(0..target.cloud.len())];
    let hx = rng.gen_range(cfg.half_extent_min..=cfg.half_extent_max);
    let hy = rng.gen_range(cfg.half_extent_min..=cfg.half_extent_max);
    Ok(CutRegion {
        center_point: c,
        rect: BevRect::new(c.xy(), [hx, hy], azimuth(c.xy())),
    })
}

/// Chooses `c_S` uniformly among source points whose range is within tolerance of `c_T`'s,
/// doubling the tolerance up to `max_center_retries` times.
pub fn match_source_center(source: &Frame, c_t: &Point, cfg: &CutMixConfig, seed: Seed) -> Result<Point> {
    if source.cloud.is_empty() {
        return Err(Error::Empty("source cloud"));
    }
    let target_range = bev_range(c_t.xy());
    let offsets: Vec<f64> = source
        .cloud
        .iter()
        .map(|p| (bev_range(p.xy()) - target_range).abs())
        .collect();
    let mut rng = seed.rng();
    let mut tolerance = cfg.range_tolerance;
    for attempt in 0..=cfg.max_center_retries {
        if attempt > 0 {
            tolerance *= 2.0;
        }
        let candidates: Vec<usize> = offsets
            .iter()
            .enumerate()
            .filter(|(_, d)| **d <= tolerance)
            .map(|(i, _)| i)
            .collect();
        if !candidates.is_empty() {
            return Ok(source.cloud.points[candidates[rng.gen_range(0..candidates.len())]]);
        }
    }
    Err(Error::NoMatchingRange {
        range: target_range,
        tolerance,
    })
}

/// Rotation that carries the cut region from `c_T`'s bearing onto `c_S`'s.
pub fn transport_angle(region: &CutRegion, c_s: &Point) -> f64 {
    azimuth(c_s.xy()) - azimuth(region.center_point.xy())
}

fn rotate_point(p: &Point, angle: f64) -> Point {
    let [x, y] = rotate_about_origin(p.xy(), angle);
    Point { x, y, ..*p }
}

fn rotate_label(l: &LabeledBox, angle: f64) -> LabeledBox {
    let [x, y] = rotate_about_origin([l.bbox.center[0], l.bbox.center[1]], angle);
    let mut out = l.clone();
    out.bbox.center = [x, y, l.bbox.center[2]];
    out.bbox.yaw = normalize_angle(l.bbox.yaw + angle);
    out
}

/// Inpaints the target contents of `region` into `source` at the bearing of `c_s`.
pub fn point_cutmix(source: &Frame, target: &Frame, region: &CutRegion, c_s: &Point) -> Frame {
    let angle = transport_angle(region, c_s);
    let footprint = region.rect.rotated_about_origin(angle);

    let mut points: Vec<Point> = source
        .cloud
        .iter()
        .filter(|p| !footprint.contains(p.xy()))
        .copied()
        .collect();
    points.extend(
        target
            .cloud
            .iter()
            .filter(|p| region.rect.contains(p.xy()))
            .map(|p| rotate_point(p, angle)),
    );

    let mut labels: Vec<LabeledBox> = source
        .labels
        .iter()
        .filter(|l| !footprint.contains([l.bbox.center[0], l.bbox.center[1]]))
        .cloned()
        .collect();
    labels.extend(
        target
            .labels
            .iter()
            .filter(|l| region.rect.contains([l.bbox.center[0], l.bbox.center[1]]))
            .map(|l| rotate_label(l, angle)),
    );

    Frame {
        id: format!("{}+{}", source.id, target.id),
        cloud: PointCloud::new(points),
        labels,
        domain: target.domain,
    }
}

/// Seeded stream of stage-one samples. Emission `i` is built around target frame
/// `i mod len(targets)`; the source frame is drawn at random.
pub struct CutMixBatch<'a, S: ?Sized, T: ?Sized> {
    sources: &'a S,
    targets: &'a T,
    cfg: CutMixConfig,
    seed: Seed,
}

pub fn cutmix_batch<'a, S, T>(sources: &'a S, targets: &'a T, cfg: &CutMixConfig, seed: Seed) -> Result<CutMixBatch<'a, S, T>>
where
    S: FrameSource + ?Sized,
    T: FrameSource + ?Sized,
{
    cfg.validate()?;
    if sources.is_empty() {
        return Err(Error::Empty("source set"));
    }
    if targets.is_empty() {
        return Err(Error::Empty("target set"));
    }
    Ok(CutMixBatch {
        sources,
        targets,
        cfg: cfg.clone(),
        seed,
    })
}

impl<'a, S, T> CutMixBatch<'a, S, T>
where
    S: FrameSource + ?Sized,
    T: FrameSource + ?Sized,
{
    pub fn default_len(&self) -> usize {
        self.cfg.emissions.unwrap_or_else(|| self.targets.len())
    }

    /// Emission `index`, independent of every other index.
    pub fn emission(&self, index: usize) -> Result<Emission> {
        let seed = self.seed.child(index as u64);
        let target = self.targets.frame(index % self.targets.len())?;
        let mixed = seed.child(0).rng().gen_bool(self.cfg.apply_probability);
        if !mixed {
            let mut rng = seed.child(4).rng();
            let frame = if self.cfg.include_source_on_skip && rng.gen_bool(0.5) {
                self.sources.frame(rng.gen_range(0..self.sources.len()))?
            } else {
                target
            };
            return Ok(Emission {
                index,
                parents: vec![frame.id.clone()],
                frame,
                mixed: false,
                mixup: None,
            });
        }
        let source = self
            .sources
            .frame(seed.child(1).rng().gen_range(0..self.sources.len()))?;
        let region = sample_cut_region(&target, &self.cfg, seed.child(2))?;
        let c_s = match_source_center(&source, &region.center_point, &self.cfg, seed.child(3))?;
        Ok(Emission {
            index,
            frame: point_cutmix(&source, &target, &region, &c_s),
            mixed: true,
            parents: vec![source.id, target.id],
            mixup: None,
        })
    }

    /// Emissions `0..count` in order; failed emissions are logged and skipped.
    pub fn iter(&self, count: usize) -> impl Iterator<Item = Emission> + '_ {
        (0..count).filter_map(move |i| match self.emission(i) {
            Ok(e) => Some(e),
            Err(err) => {
                warn!("cutmix emission {i} skipped: {err}");
                None
            }
        })
    }
}
