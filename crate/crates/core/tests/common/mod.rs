//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use pointmix::geom::BevRect;
use pointmix::synth::SceneSpec;
use pointmix::{Box3D, Domain, Frame, LabeledBox, Point, PointCloud};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_box(rng: &mut ChaCha8Rng, extent: f64) -> Box3D {
    let size = [rng.gen_range(0.5..6.0), rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0)];
    Box3D::new(
        [rng.gen_range(-extent..extent), rng.gen_range(-extent..extent), 0.5 * size[2]],
        size,
        rng.gen_range(-3.2..3.2),
    )
    .unwrap()
}

/// Points uniform over a disc of radius `extent`, plus real boxes.
pub fn random_frame(rng: &mut ChaCha8Rng, id: &str, domain: Domain, n_points: usize, n_boxes: usize, extent: f64) -> Frame {
    let points = (0..n_points)
        .map(|_| {
            let r = extent * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            Point::new(r * a.cos(), r * a.sin(), rng.gen_range(-2.0..3.0), rng.gen())
        })
        .collect();
    let labels = (0..n_boxes).map(|_| LabeledBox::real(random_box(rng, extent * 0.7), "car")).collect();
    Frame::new(id, PointCloud::new(points), labels, domain)
}

/// Corners of a BEV rectangle, computed from its centre, half extents and rotation.
pub fn rect_corners(r: &BevRect) -> [[f64; 2]; 4] {
    let (s, c) = r.rotation.sin_cos();
    let [hx, hy] = r.half_extent;
    [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)].map(|(a, b)| {
        let (u, v) = (a * hx, b * hy);
        [r.center[0] + c * u - s * v, r.center[1] + s * u + c * v]
    })
}

pub fn box_corners(b: &Box3D) -> [[f64; 2]; 4] {
    rect_corners(&BevRect::new([b.center[0], b.center[1]], [0.5 * b.size[0], 0.5 * b.size[1]], b.yaw))
}

/// Point-in-convex-polygon by edge cross products. `None` inside the ±`band` boundary zone.
pub fn in_convex(poly: &[[f64; 2]], p: [f64; 2], band: f64) -> Option<bool> {
    let n = poly.len();
    // orientation-agnostic: all signs equal means inside
    let mut pos = true;
    let mut neg = true;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
        let len = ex.hypot(ey);
        let d = (ex * (p[1] - a[1]) - ey * (p[0] - a[0])) / len;
        if d.abs() <= band {
            return None;
        }
        pos &= d > 0.0;
        neg &= d < 0.0;
    }
    Some(pos || neg)
}

pub fn bev_range(p: &Point) -> f64 {
    p.x.hypot(p.y)
}

/// Distance from `p` to the surface of `b` when `p` lies within `tol` of the box; `None` otherwise.
pub fn surface_distance(b: &Box3D, p: [f64; 3], tol: f64) -> Option<f64> {
    let (s, c) = b.yaw.sin_cos();
    let (dx, dy, dz) = (p[0] - b.center[0], p[1] - b.center[1], p[2] - b.center[2]);
    let local = [c * dx + s * dy, -s * dx + c * dy, dz];
    let mut excess = f64::NEG_INFINITY;
    for i in 0..3 {
        excess = excess.max(local[i].abs() - 0.5 * b.size[i]);
    }
    (excess <= tol).then_some(excess.abs())
}

/// Whether a rendered point sits on the ground or on a scene cuboid face within `tol`.
pub fn on_scene_surface(scene: &SceneSpec, p: &Point, tol: f64) -> bool {
    if p.z.abs() <= tol {
        return true;
    }
    scene
        .objects
        .iter()
        .any(|o| surface_distance(&o.bbox, [p.x, p.y, p.z], tol).is_some_and(|d| d <= tol))
}

/// Greedy centre-distance matching written out directly: predictions by descending score
/// (stable), each taking the closest free GT within `threshold`. Returns TP flags.
pub fn oracle_matches(preds: &[([f64; 2], f64)], gts: &[[f64; 2]], threshold: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].1.partial_cmp(&preds[a].1).unwrap());
    let mut taken = vec![false; gts.len()];
    let mut flags = Vec::new();
    for i in order {
        let (p, _) = preds[i];
        let mut choice = None;
        let mut best = f64::INFINITY;
        for (j, g) in gts.iter().enumerate() {
            let d = ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt();
            if !taken[j] && d <= threshold && d < best {
                best = d;
                choice = Some(j);
            }
        }
        if let Some(j) = choice {
            taken[j] = true;
        }
        flags.push(choice.is_some());
    }
    flags
}

/// 101-point AP with 0.1 recall/precision clipping, from TP flags in rank order.
pub fn oracle_ap(flags: &[bool], n_gt: usize) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    let mut tp = 0.0;
    let mut rec = Vec::new();
    let mut prec = Vec::new();
    for (k, f) in flags.iter().enumerate() {
        if *f {
            tp += 1.0;
        }
        rec.push(tp / n_gt as f64);
        prec.push(tp / (k + 1) as f64);
    }
    let mut total = 0.0;
    for g in 11..=100 {
        let r = g as f64 / 100.0;
        let value = if r < rec[0] {
            prec[0]
        } else if r > *rec.last().unwrap() {
            0.0
        } else {
            let mut j = 0;
            while j + 1 < rec.len() && rec[j + 1] <= r {
                j += 1;
            }
            if j + 1 == rec.len() {
                prec[j]
            } else {
                prec[j] + (prec[j + 1] - prec[j]) * (r - rec[j]) / (rec[j + 1] - rec[j])
            }
        };
        total += (value - 0.1).max(0.0);
    }
    total / 90.0 / 0.9
}

pub fn bits(f: &Frame) -> Vec<u64> {
    let mut out = Vec::new();
    for p in f.cloud.iter() {
        out.extend([p.x, p.y, p.z, p.intensity].map(f64::to_bits));
    }
    for l in &f.labels {
        out.extend(l.bbox.center.map(f64::to_bits));
        out.extend(l.bbox.size.map(f64::to_bits));
        out.push(l.bbox.yaw.to_bits());
        out.push(l.score.unwrap_or(-1.0).to_bits());
    }
    out
}
