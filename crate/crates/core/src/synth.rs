//! Synthetic LiDAR scans of cuboid scenes.
//!
//! Two beam models reproduce the sensor gap between a 64-beam scanner with a
//! narrow elevation fan and a 32-beam scanner with a wide one. Rays are cast
//! from the sensor against oriented cuboids (slab test in each box frame) and a
//! flat ground plane at z = 0.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{bev_range, boxes_collide};
use crate::types::{normalize_angle, Box3D, Domain, Frame, LabeledBox, Point, PointCloud, Seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamModel {
    pub n_beams: usize,
    /// Elevation fan in degrees; beams are spaced uniformly, both endpoints included.
    pub elevation_min: f64,
    pub elevation_max: f64,
    pub azimuth_step: f64,
    pub sensor_height: f64,
    pub max_range: f64,
    pub dropout_probability: f64,
    /// Raw intensity units per unit of reflectance.
    pub intensity_scale: f64,
}

impl Default for BeamModel {
    fn default() -> Self {
        Self::thirty_two_beam()
    }
}

impl BeamModel {
    pub fn sixty_four_beam() -> Self {
        Self {
            n_beams: 64,
            elevation_min: -18.0,
            elevation_max: 2.0,
            azimuth_step: 0.5,
            sensor_height: 1.8,
            max_range: 70.0,
            dropout_probability: 0.05,
            intensity_scale: 255.0,
        }
    }

    pub fn thirty_two_beam() -> Self {
        Self {
            n_beams: 32,
            elevation_min: -30.0,
            elevation_max: 10.0,
            intensity_scale: 1.0,
            ..Self::sixty_four_beam()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.n_beams >= 1
            && self.elevation_min < self.elevation_max
            && self.azimuth_step > 0.0
            && self.sensor_height > 0.0
            && self.max_range > 0.0
            && (0.0..1.0).contains(&self.dropout_probability)
            && self.intensity_scale > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid beam model {self:?}")))
        }
    }

    /// Beam elevations in degrees, ascending.
    pub fn elevations(&self) -> Vec<f64> {
        if self.n_beams == 1 {
            return vec![self.elevation_min];
        }
        let step = (self.elevation_max - self.elevation_min) / (self.n_beams - 1) as f64;
        (0..self.n_beams)
            .map(|i| self.elevation_min + step * i as f64)
            .collect()
    }

    pub fn azimuths(&self) -> Vec<f64> {
        let n = (360.0 / self.azimuth_step).round() as usize;
        (0..n).map(|i| i as f64 * self.azimuth_step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub bbox: Box3D,
    pub class: String,
}

/// Ground plane at z = 0 plus non-overlapping cuboids inside `[-extent, extent]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub extent: f64,
    pub objects: Vec<SceneObject>,
}

/// Objects are kept this far from the sensor so it never sits inside one.
pub const SENSOR_CLEARANCE: f64 = 4.0;

/// Mean (length, width, height) and uniform jitter per class.
fn class_size(class: &str) -> ([f64; 3], [f64; 3]) {
    match class {
        "pedestrian" => ([0.8, 0.7, 1.75], [0.15, 0.1, 0.1]),
        "cyclist" => ([1.8, 0.6, 1.7], [0.2, 0.1, 0.1]),
        "truck" => ([8.0, 2.6, 3.2], [1.0, 0.2, 0.3]),
        _ => ([4.5, 1.9, 1.6], [0.4, 0.15, 0.15]),
    }
}

fn reflectance(class: Option<&str>) -> f64 {
    match class {
        None => 0.1,
        Some("car") => 0.8,
        Some("pedestrian") => 0.5,
        Some("cyclist") => 0.6,
        Some(_) => 0.7,
    }
}

pub fn default_class_mix() -> BTreeMap<String, f64> {
    [("car", 0.7), ("pedestrian", 0.2), ("cyclist", 0.1)]
        .into_iter()
        .map(|(c, w)| (c.to_string(), w))
        .collect()
}

/// Rejection-samples up to `n_objects` non-colliding cuboids resting on the ground.
pub fn generate_scene(extent: f64, n_objects: usize, class_mix: &BTreeMap<String, f64>, seed: Seed) -> Result<SceneSpec> {
    if !(extent > SENSOR_CLEARANCE) {
        return Err(Error::InvalidArgument(format!("scene extent must exceed {SENSOR_CLEARANCE} m")));
    }
    let total: f64 = class_mix.values().sum();
    if n_objects > 0 && !(total > 0.0) {
        return Err(Error::InvalidArgument("class mix has no positive weight".into()));
    }
    let mut rng = seed.rng();
    let mut objects: Vec<SceneObject> = Vec::with_capacity(n_objects);
    let budget = 50 * n_objects;
    let mut attempts = 0;
    while objects.len() < n_objects && attempts < budget {
        attempts += 1;
        let mut pick = rng.gen_range(0.0..total);
        let class = class_mix
            .iter()
            .find(|(_, w)| {
                pick -= **w;
                pick < 0.0
            })
            .map(|(c, _)| c.clone())
            .unwrap_or_else(|| class_mix.keys().next_back().cloned().unwrap_or_default());
        let (mean, jitter) = class_size(&class);
        let size: [f64; 3] = std::array::from_fn(|i| mean[i] + rng.gen_range(-jitter[i]..=jitter[i]));
        let x = rng.gen_range(-extent..=extent);
        let y = rng.gen_range(-extent..=extent);
        let yaw = normalize_angle(rng.gen_range(-PI..PI));
        if bev_range([x, y]) < SENSOR_CLEARANCE + 0.5 * size[0].hypot(size[1]) {
            continue;
        }
        let bbox = Box3D {
            center: [x, y, 0.5 * size[2]],
            size,
            yaw,
        };
        if objects.iter().any(|o| boxes_collide(&o.bbox, &bbox)) {
            continue;
        }
        objects.push(SceneObject { bbox, class });
    }
    if objects.len() < n_objects {
        log::info!("generate_scene: placed {} of {n_objects} objects", objects.len());
    }
    Ok(SceneSpec { extent, objects })
}

/// Entry distance of the ray `origin + t·dir` into `b`, if it enters from outside.
fn ray_box(origin: [f64; 3], dir: [f64; 3], b: &Box3D) -> Option<f64> {
    let o = b.to_local(origin);
    let (s, c) = b.yaw.sin_cos();
    let d = [c * dir[0] + s * dir[1], -s * dir[0] + c * dir[1], dir[2]];
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for i in 0..3 {
        let half = 0.5 * b.size[i];
        if d[i].abs() < 1e-15 {
            if o[i].abs() > half {
                return None;
            }
            continue;
        }
        let t1 = (-half - o[i]) / d[i];
        let t2 = (half - o[i]) / d[i];
        t_near = t_near.max(t1.min(t2));
        t_far = t_far.min(t1.max(t2));
    }
    (t_near <= t_far && t_near > 0.0).then_some(t_near)
}

/// Casts every beam × azimuth ray. Labels are the scene objects hit at least once.
pub fn render_scan(scene: &SceneSpec, beams: &BeamModel, seed: Seed) -> Result<Frame> {
    beams.validate()?;
    let mut rng = seed.rng();
    let origin = [0.0, 0.0, beams.sensor_height];
    let mut points = Vec::new();
    let mut hit = vec![false; scene.objects.len()];
    let azimuths: Vec<(f64, f64)> = beams.azimuths().iter().map(|a| a.to_radians().sin_cos()).collect();
    for elevation in beams.elevations() {
        let (se, ce) = elevation.to_radians().sin_cos();
        for &(sa, ca) in &azimuths {
            let dir = [ce * ca, ce * sa, se];
            let mut best: Option<(f64, Option<usize>)> = None;
            if se < 0.0 {
                best = Some((-beams.sensor_height / se, None));
            }
            for (k, obj) in scene.objects.iter().enumerate() {
                if let Some(t) = ray_box(origin, dir, &obj.bbox) {
                    if best.map_or(true, |(bt, _)| t < bt) {
                        best = Some((t, Some(k)));
                    }
                }
            }
            let dropped = beams.dropout_probability > 0.0 && rng.gen_bool(beams.dropout_probability);
            let Some((t, object)) = best else { continue };
            if t > beams.max_range || dropped {
                continue;
            }
            let class = object.map(|k| scene.objects[k].class.as_str());
            let intensity = reflectance(class) * beams.intensity_scale;
            match object {
                Some(k) => {
                    hit[k] = true;
                    points.push(Point::new(origin[0] + t * dir[0], origin[1] + t * dir[1], origin[2] + t * dir[2], intensity));
                }
                None => points.push(Point::new(t * dir[0], t * dir[1], 0.0, intensity)),
            }
        }
    }
    let labels = scene
        .objects
        .iter()
        .zip(&hit)
        .filter(|(_, h)| **h)
        .map(|(o, _)| LabeledBox::real(o.bbox, o.class.clone()))
        .collect();
    Ok(Frame::new("scan", PointCloud::new(points), labels, Domain::Target))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub scenes: usize,
    pub objects_per_scene: usize,
    pub extent: f64,
    pub class_mix: BTreeMap<String, f64>,
    pub source: BeamModel,
    pub target: BeamModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            scenes: 20,
            objects_per_scene: 15,
            extent: 50.0,
            class_mix: default_class_mix(),
            source: BeamModel::sixty_four_beam(),
            target: BeamModel::thirty_two_beam(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.target.validate()?;
        if !(self.extent > SENSOR_CLEARANCE) {
            return Err(Error::Config(format!("synth.extent must exceed {SENSOR_CLEARANCE}")));
        }
        Ok(())
    }
}

/// Source (64-beam) and target (32-beam) frames from independently drawn scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    pub source: Vec<Frame>,
    pub target: Vec<Frame>,
}

/// Frame `index` of one domain. Each domain draws its own scenes from `seed`.
pub fn render_domain_frame(cfg: &SynthConfig, domain: Domain, index: usize, seed: Seed) -> Result<Frame> {
    let (beams, prefix, stream) = match domain {
        Domain::Source => (&cfg.source, "src", 0),
        Domain::Target => (&cfg.target, "tgt", 1),
    };
    let s = seed.child(stream).child(index as u64);
    let scene = generate_scene(cfg.extent, cfg.objects_per_scene, &cfg.class_mix, s.child(0))?;
    let mut frame = render_scan(&scene, beams, s.child(1))?;
    frame.id = format!("{prefix}_{index:06}");
    frame.domain = domain;
    Ok(frame)
}

pub fn make_domain_pair(cfg: &SynthConfig, seed: Seed) -> Result<DomainPair> {
    cfg.validate()?;
    if cfg.scenes == 0 {
        return Err(Error::InvalidArgument("scene count must be >= 1".into()));
    }
    let render = |domain: Domain| -> Result<Vec<Frame>> {
        (0..cfg.scenes)
            .into_par_iter()
            .map(|i| render_domain_frame(cfg, domain, i, seed))
            .collect()
    };
    Ok(DomainPair {
        source: render(Domain::Source)?,
        target: render(Domain::Target)?,
    })
}

/// Stand-in for a teacher detector: perturbs ground truth into scored pseudo labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionNoise {
    pub center_sigma: f64,
    pub size_sigma: f64,
    pub yaw_sigma: f64,
    pub miss_rate: f64,
    pub max_false_positives: usize,
    pub true_score: [f64; 2],
    pub false_score: [f64; 2],
    pub extent: f64,
}

impl Default for DetectionNoise {
    fn default() -> Self {
        Self {
            center_sigma: 0.2,
            size_sigma: 0.05,
            yaw_sigma: 0.05,
            miss_rate: 0.1,
            max_false_positives: 3,
            true_score: [0.35, 1.0],
            false_score: [0.0, 0.5],
            extent: 50.0,
        }
    }
}

pub fn simulate_detections(frame: &Frame, noise: &DetectionNoise, seed: Seed) -> Result<Vec<LabeledBox>> {
    let gauss = |sigma: f64| Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()));
    let (dc, ds, dy) = (gauss(noise.center_sigma)?, gauss(noise.size_sigma)?, gauss(noise.yaw_sigma)?);
    let mut rng = seed.rng();
    let mut out = Vec::new();
    for l in &frame.labels {
        if rng.gen_bool(noise.miss_rate) {
            continue;
        }
        let b = &l.bbox;
        let center = [b.center[0] + dc.sample(&mut rng), b.center[1] + dc.sample(&mut rng), b.center[2]];
        let size = b.size.map(|s| (s * (1.0 + ds.sample(&mut rng))).max(0.1));
        let score = rng.gen_range(noise.true_score[0]..=noise.true_score[1]);
        out.push(LabeledBox::pseudo(Box3D::new(center, size, b.yaw + dy.sample(&mut rng))?, l.class.clone(), score));
    }
    let n_fp = rng.gen_range(0..=noise.max_false_positives);
    for _ in 0..n_fp {
        let x = rng.gen_range(-noise.extent..=noise.extent);
        let y = rng.gen_range(-noise.extent..=noise.extent);
        let (mean, _) = class_size("car");
        let score = rng.gen_range(noise.false_score[0]..=noise.false_score[1]);
        let bbox = Box3D::new([x, y, 0.5 * mean[2]], mean, rng.gen_range(-PI..PI))?;
        out.push(LabeledBox::pseudo(bbox, "car", score));
    }
    out.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
    Ok(out)
}
