//! Intra-domain scene mixing of a real-labeled and a pseudo-labeled target frame.
//!
//! Each frame is subsampled by a shuffle-then-take mask so that the kept
//! fractions sum to one, `|P=1|/|P| + |Q=1|/|Q| = 1`, which keeps the point
//! density of the merged scene close to either input. Before merging, pseudo
//! boxes that collide with a real box are dropped together with the pseudo
//! points around them; the real box and its points take their place.

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::boxes_collide;
use crate::types::{Emission, Frame, FrameSource, LabeledBox, Point, PointCloud, Provenance, Seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum LambdaPolicy {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
}

impl LambdaPolicy {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LambdaPolicy::Fixed(l) => (0.0..=1.0).contains(&l),
            LambdaPolicy::Uniform { lo, hi } => (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid mixup lambda policy {self:?}")))
        }
    }

    pub fn draw(&self, seed: Seed) -> f64 {
        match *self {
            LambdaPolicy::Fixed(l) => l,
            LambdaPolicy::Uniform { lo, hi } => seed.rng().gen_range(lo..=hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixUpConfig {
    pub apply_probability: f64,
    pub lambda: LambdaPolicy,
    pub score_threshold: f64,
    /// Footprint enlargement (m) used for real/pseudo collisions and for scrubbing nearby pseudo points.
    pub collision_margin: f64,
    /// Pseudo boxes left with fewer points after subsampling are dropped. 0 disables the filter.
    pub min_points_per_pseudo_box: usize,
    /// Stream length; defaults to the number of pseudo-labeled frames.
    pub emissions: Option<usize>,
}

impl Default for MixUpConfig {
    fn default() -> Self {
        Self {
            apply_probability: 0.5,
            lambda: LambdaPolicy::Fixed(0.5),
            score_threshold: 0.3,
            collision_margin: 0.0,
            min_points_per_pseudo_box: 0,
            emissions: None,
        }
    }
}

impl MixUpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(Error::Config(format!(
                "mixup.apply_probability must lie in [0, 1], got {}",
                self.apply_probability
            )));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::Config(format!(
                "mixup.score_threshold must lie in [0, 1], got {}",
                self.score_threshold
            )));
        }
        if !(self.collision_margin >= 0.0) {
            return Err(Error::Config("mixup.collision_margin must be >= 0".into()));
        }
        self.lambda.validate()
    }
}

/// Keeps predictions scoring at least `threshold`, in their original order.
pub fn filter_pseudo_labels(predictions: &[LabeledBox], threshold: f64) -> Result<Vec<LabeledBox>> {
    let mut kept = Vec::new();
    for (index, p) in predictions.iter().enumerate() {
        if p.provenance != Provenance::Pseudo {
            return Err(Error::NotPseudo { index });
        }
        let score = p.score.ok_or(Error::MissingScore { index })?;
        if score >= threshold {
            kept.push(p.clone());
        }
    }
    Ok(kept)
}

/// Selection counts for the two masks: `round(λ·n_l)` and `n_u − round(λ·n_u)`.
pub fn mask_counts(n_labeled: usize, n_unlabeled: usize, lambda: f64) -> (usize, usize) {
    let p = (lambda * n_labeled as f64).round() as usize;
    let q = n_unlabeled - ((lambda * n_unlabeled as f64).round() as usize).min(n_unlabeled);
    (p.min(n_labeled), q)
}

fn shuffle_take(n: usize, k: usize, seed: Seed) -> Vec<bool> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed.rng());
    let mut mask = vec![false; n];
    for &i in &order[..k] {
        mask[i] = true;
    }
    mask
}

/// Point-selection masks P (labeled frame) and Q (pseudo frame).
pub fn sample_point_masks(n_labeled: usize, n_unlabeled: usize, lambda: f64, seed: Seed) -> Result<(Vec<bool>, Vec<bool>)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let (kp, kq) = mask_counts(n_labeled, n_unlabeled, lambda);
    Ok((
        shuffle_take(n_labeled, kp, seed.child(0)),
        shuffle_take(n_unlabeled, kq, seed.child(1)),
    ))
}

/// Drops pseudo boxes that collide with any real box (footprints grown by `margin`), and
/// masks out pseudo points inside the grown footprint of every dropped box.
pub fn resolve_collisions(
    real_boxes: &[LabeledBox],
    pseudo_boxes: &[LabeledBox],
    pseudo_points: &PointCloud,
    margin: f64,
) -> (Vec<LabeledBox>, Vec<bool>) {
    let real: Vec<_> = real_boxes.iter().map(|r| r.bbox.enlarged(margin)).collect();
    let mut kept = Vec::with_capacity(pseudo_boxes.len());
    let mut dropped = Vec::new();
    for p in pseudo_boxes {
        let grown = p.bbox.enlarged(margin);
        if real.iter().any(|r| boxes_collide(r, &grown)) {
            dropped.push(grown);
        } else {
            kept.push(p.clone());
        }
    }
    let point_mask = pseudo_points
        .iter()
        .map(|pt| !dropped.iter().any(|d| d.contains_bev(pt.xy(), 0.0)))
        .collect();
    (kept, point_mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixUpStats {
    pub lambda: f64,
    /// Points taken from the labeled frame.
    pub labeled_points: usize,
    /// Pseudo-frame points left after collision scrubbing, before subsampling.
    pub pseudo_candidates: usize,
    /// Points taken from the pseudo frame.
    pub pseudo_points: usize,
    pub dropped_pseudo_boxes: usize,
}

/// Mixes with an explicit `lambda`; [`point_mixup`] draws it from the config policy.
pub fn mix_with_lambda(labeled: &Frame, pseudo: &Frame, lambda: f64, cfg: &MixUpConfig, seed: Seed) -> Result<(Frame, MixUpStats)> {
    let (kept_pseudo, survive) = resolve_collisions(&labeled.labels, &pseudo.labels, &pseudo.cloud, cfg.collision_margin);
    let survivors: Vec<Point> = pseudo
        .cloud
        .iter()
        .zip(&survive)
        .filter(|(_, keep)| **keep)
        .map(|(p, _)| *p)
        .collect();
    let (p_mask, q_mask) = sample_point_masks(labeled.cloud.len(), survivors.len(), lambda, seed)?;

    let mut points: Vec<Point> = labeled
        .cloud
        .iter()
        .zip(&p_mask)
        .filter(|(_, m)| **m)
        .map(|(p, _)| *p)
        .collect();
    let labeled_points = points.len();
    points.extend(survivors.iter().zip(&q_mask).filter(|(_, m)| **m).map(|(p, _)| *p));
    let pseudo_points = points.len() - labeled_points;

    let mut pseudo_labels = kept_pseudo;
    if cfg.min_points_per_pseudo_box > 0 {
        pseudo_labels.retain(|l| {
            points.iter().filter(|p| l.bbox.contains([p.x, p.y, p.z], 0.0)).count() >= cfg.min_points_per_pseudo_box
        });
    }
    let stats = MixUpStats {
        lambda,
        labeled_points,
        pseudo_candidates: survivors.len(),
        pseudo_points,
        dropped_pseudo_boxes: pseudo.labels.len() - pseudo_labels.len(),
    };
    let mut labels = labeled.labels.clone();
    labels.extend(pseudo_labels);
    let frame = Frame {
        id: format!("{}~{}", labeled.id, pseudo.id),
        cloud: PointCloud::new(points),
        labels,
        domain: labeled.domain,
    };
    Ok((frame, stats))
}

pub fn point_mixup(labeled: &Frame, pseudo: &Frame, cfg: &MixUpConfig, seed: Seed) -> Result<Frame> {
    point_mixup_with_stats(labeled, pseudo, cfg, seed).map(|(f, _)| f)
}

pub fn point_mixup_with_stats(labeled: &Frame, pseudo: &Frame, cfg: &MixUpConfig, seed: Seed) -> Result<(Frame, MixUpStats)> {
    cfg.lambda.validate()?;
    let lambda = cfg.lambda.draw(seed.child(0));
    mix_with_lambda(labeled, pseudo, lambda, cfg, seed.child(1))
}

/// Seeded stream of stage-two samples. Emission `i` is built around pseudo frame
/// `i mod len(pseudo)`; the labeled partner is drawn at random.
pub struct MixUpBatch<'a, L: ?Sized, P: ?Sized> {
    labeled: &'a L,
    pseudo: &'a P,
    cfg: MixUpConfig,
    seed: Seed,
}

pub fn mixup_batch<'a, L, P>(labeled: &'a L, pseudo: &'a P, cfg: &MixUpConfig, seed: Seed) -> Result<MixUpBatch<'a, L, P>>
where
    L: FrameSource + ?Sized,
    P: FrameSource + ?Sized,
{
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::Empty("labeled set"));
    }
    if pseudo.is_empty() {
        return Err(Error::Empty("pseudo-labeled set"));
    }
    Ok(MixUpBatch {
        labeled,
        pseudo,
        cfg: cfg.clone(),
        seed,
    })
}

impl<'a, L, P> MixUpBatch<'a, L, P>
where
    L: FrameSource + ?Sized,
    P: FrameSource + ?Sized,
{
    pub fn default_len(&self) -> usize {
        self.cfg.emissions.unwrap_or_else(|| self.pseudo.len())
    }

    pub fn emission(&self, index: usize) -> Result<Emission> {
        let seed = self.seed.child(index as u64);
        let mixed = seed.child(0).rng().gen_bool(self.cfg.apply_probability);
        if !mixed {
            let n_l = self.labeled.len();
            let pick = seed.child(4).rng().gen_range(0..n_l + self.pseudo.len());
            let frame = if pick < n_l {
                self.labeled.frame(pick)?
            } else {
                self.pseudo.frame(pick - n_l)?
            };
            return Ok(Emission {
                index,
                parents: vec![frame.id.clone()],
                frame,
                mixed: false,
                mixup: None,
            });
        }
        let pseudo = self.pseudo.frame(index % self.pseudo.len())?;
        let labeled = self
            .labeled
            .frame(seed.child(1).rng().gen_range(0..self.labeled.len()))?;
        let (frame, stats) = point_mixup_with_stats(&labeled, &pseudo, &self.cfg, seed.child(2))?;
        Ok(Emission {
            index,
            frame,
            mixed: true,
            parents: vec![labeled.id, pseudo.id],
            mixup: Some(stats),
        })
    }

    pub fn iter(&self, count: usize) -> impl Iterator<Item = Emission> + '_ {
        (0..count).filter_map(move |i| match self.emission(i) {
            Ok(e) => Some(e),
            Err(err) => {
                warn!("mixup emission {i} skipped: {err}");
                None
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::oracle_boxes_collide;
    use crate::types::{Box3D, Domain};

    fn pseudo(score: f64) -> LabeledBox {
        LabeledBox::pseudo(Box3D::new([0.0; 3], [1.0; 3], 0.0).unwrap(), "car", score)
    }

    fn box2x1(x: f64) -> Box3D {
        Box3D::new([x, 0.0, 0.0], [2.0, 1.0, 1.5], 0.0).unwrap()
    }

    #[test]
    fn score_filter_examples() {
        let preds = vec![pseudo(0.9), pseudo(0.2)];
        assert_eq!(filter_pseudo_labels(&preds, 0.3).unwrap(), vec![pseudo(0.9)]);
        assert_eq!(filter_pseudo_labels(&preds, 0.0).unwrap(), preds);
        let with_one = vec![pseudo(1.0), pseudo(0.99)];
        assert_eq!(filter_pseudo_labels(&with_one, 1.0).unwrap(), vec![pseudo(1.0)]);
    }

    #[test]
    fn score_filter_errors() {
        let mut p = pseudo(0.5);
        p.score = None;
        assert!(matches!(filter_pseudo_labels(&[p], 0.3), Err(Error::MissingScore { index: 0 })));
        let real = LabeledBox::real(Box3D::new([0.0; 3], [1.0; 3], 0.0).unwrap(), "car");
        assert!(matches!(filter_pseudo_labels(&[pseudo(0.5), real], 0.3), Err(Error::NotPseudo { index: 1 })));
    }

    fn ones(m: &[bool]) -> usize {
        m.iter().filter(|b| **b).count()
    }

    #[test]
    fn mask_examples() {
        let (p, q) = sample_point_masks(40, 30, 1.0, Seed(1)).unwrap();
        assert!(p.iter().all(|b| *b));
        assert!(q.iter().all(|b| !*b));

        let (p, q) = sample_point_masks(1000, 1000, 0.5, Seed(2)).unwrap();
        assert_eq!((ones(&p), ones(&q)), (500, 500));
        assert_eq!(ones(&p) as f64 / 1000.0 + ones(&q) as f64 / 1000.0, 1.0);

        let (p, q) = sample_point_masks(10, 7, 0.3, Seed(3)).unwrap();
        assert_eq!((ones(&p), ones(&q)), (3, 5));
        let sum: f64 = 3.0 / 10.0 + 5.0 / 7.0;
        assert!((sum - 1.0).abs() <= 1.0 / 7.0);
    }

    #[test]
    fn masks_are_seeded_subsets() {
        let a = sample_point_masks(200, 150, 0.4, Seed(5)).unwrap();
        assert_eq!(a, sample_point_masks(200, 150, 0.4, Seed(5)).unwrap());
        assert_ne!(a, sample_point_masks(200, 150, 0.4, Seed(6)).unwrap());
        assert!(sample_point_masks(1, 1, 1.2, Seed(0)).is_err());
    }

    #[test]
    fn collisions_no_overlap() {
        let real = vec![LabeledBox::real(box2x1(0.0), "car")];
        let ps = vec![LabeledBox::pseudo(box2x1(10.0), "car", 0.8)];
        let cloud = PointCloud::new(vec![Point::new(10.0, 0.0, 0.0, 0.1), Point::new(0.0, 0.0, 0.0, 0.1)]);
        let (kept, mask) = resolve_collisions(&real, &ps, &cloud, 0.0);
        assert_eq!(kept, ps);
        assert_eq!(mask, vec![true, true]);
    }

    #[test]
    fn collisions_identical_box() {
        let real = vec![LabeledBox::real(box2x1(0.0), "car")];
        let ps = vec![LabeledBox::pseudo(box2x1(0.0), "car", 0.8)];
        let cloud = PointCloud::new(vec![Point::new(0.5, 0.2, 0.0, 0.1), Point::new(5.0, 0.0, 0.0, 0.1)]);
        let (kept, mask) = resolve_collisions(&real, &ps, &cloud, 0.0);
        assert!(kept.is_empty());
        assert_eq!(mask, vec![false, true]);
    }

    #[test]
    fn collisions_hand_case() {
        let real = vec![LabeledBox::real(box2x1(0.0), "car")];
        let ps = vec![LabeledBox::pseudo(box2x1(0.5), "car", 0.8)];
        let (_, area) = oracle_boxes_collide(&real[0].bbox, &ps[0].bbox);
        assert!((area - 1.5).abs() < 1e-12);
        let cloud = PointCloud::new(vec![Point::new(1.3, 0.0, 0.0, 0.1), Point::new(3.0, 0.0, 0.0, 0.1)]);
        let (kept, mask) = resolve_collisions(&real, &ps, &cloud, 0.0);
        assert!(kept.is_empty());
        assert_eq!(mask, vec![false, true]);
    }

    #[test]
    fn margin_widens_collision() {
        let real = vec![LabeledBox::real(box2x1(0.0), "car")];
        let ps = vec![LabeledBox::pseudo(box2x1(2.2), "car", 0.8)];
        let cloud = PointCloud::new(vec![Point::new(3.35, 0.0, 0.0, 0.1)]);
        assert_eq!(resolve_collisions(&real, &ps, &cloud, 0.0).0.len(), 1);
        let (kept, mask) = resolve_collisions(&real, &ps, &cloud, 0.2);
        assert!(kept.is_empty());
        assert_eq!(mask, vec![false]);
    }

    fn grid_frame(id: &str, n: usize, offset: f64, labels: Vec<LabeledBox>) -> Frame {
        let pts = (0..n)
            .map(|i| Point::new(offset + (i % 40) as f64, (i / 40) as f64, 0.0, 0.3))
            .collect();
        Frame::new(id, PointCloud::new(pts), labels, Domain::Target)
    }

    #[test]
    fn lambda_one_keeps_labeled_cloud() {
        let l = grid_frame("l", 100, 0.0, vec![LabeledBox::real(box2x1(-20.0), "car")]);
        let p = grid_frame("p", 80, 100.0, vec![LabeledBox::pseudo(box2x1(-30.0), "car", 0.7)]);
        let cfg = MixUpConfig {
            lambda: LambdaPolicy::Fixed(1.0),
            ..Default::default()
        };
        let out = point_mixup(&l, &p, &cfg, Seed(4)).unwrap();
        assert_eq!(out.cloud, l.cloud);
        assert_eq!(out.labels, vec![l.labels[0].clone(), p.labels[0].clone()]);
    }

    #[test]
    fn equal_halves_conserve_count() {
        let l = grid_frame("l", 1000, 0.0, vec![LabeledBox::real(box2x1(-20.0), "car")]);
        let p = grid_frame("p", 1000, 100.0, vec![LabeledBox::pseudo(box2x1(-30.0), "truck", 0.7)]);
        let (out, stats) = mix_with_lambda(&l, &p, 0.5, &MixUpConfig::default(), Seed(9)).unwrap();
        assert_eq!(out.cloud.len(), 1000);
        assert_eq!((stats.labeled_points, stats.pseudo_points), (500, 500));
        assert_eq!(out.labels.len(), 2);
    }

    #[test]
    fn real_box_replaces_colliding_pseudo() {
        let l = grid_frame("l", 50, 10.0, vec![LabeledBox::real(box2x1(0.0), "car")]);
        let p = Frame::new(
            "p",
            PointCloud::new(vec![Point::new(1.3, 0.0, 0.0, 0.2), Point::new(3.0, 0.0, 0.0, 0.2)]),
            vec![LabeledBox::pseudo(box2x1(0.5), "car", 0.9)],
            Domain::Target,
        );
        let cfg = MixUpConfig {
            lambda: LambdaPolicy::Fixed(0.0),
            ..Default::default()
        };
        let (out, stats) = mix_with_lambda(&l, &p, 0.0, &cfg, Seed(1)).unwrap();
        assert_eq!(out.labels, l.labels);
        assert_eq!(stats.dropped_pseudo_boxes, 1);
        assert_eq!(out.cloud.points, vec![Point::new(3.0, 0.0, 0.0, 0.2)]);
    }

    #[test]
    fn min_points_filter_only_touches_pseudo() {
        let l = grid_frame("l", 40, 0.0, vec![LabeledBox::real(box2x1(-50.0), "car")]);
        let p = grid_frame("p", 40, 100.0, vec![LabeledBox::pseudo(box2x1(-30.0), "car", 0.9)]);
        let cfg = MixUpConfig {
            min_points_per_pseudo_box: 1,
            ..Default::default()
        };
        let out = point_mixup(&l, &p, &cfg, Seed(2)).unwrap();
        assert_eq!(out.labels, l.labels);
    }

    #[test]
    fn batch_extremes() {
        let labeled = vec![grid_frame("l0", 60, 0.0, vec![]), grid_frame("l1", 60, 5.0, vec![])];
        let pseudo = vec![grid_frame("p0", 60, 50.0, vec![]), grid_frame("p1", 60, 70.0, vec![])];
        let never = MixUpConfig {
            apply_probability: 0.0,
            ..Default::default()
        };
        let b = mixup_batch(&labeled, &pseudo, &never, Seed(1)).unwrap();
        for e in b.iter(30) {
            assert!(!e.mixed);
            assert!(labeled.contains(&e.frame) || pseudo.contains(&e.frame));
        }
        let always = MixUpConfig {
            apply_probability: 1.0,
            ..Default::default()
        };
        let b = mixup_batch(&labeled, &pseudo, &always, Seed(1)).unwrap();
        assert!(b.iter(30).all(|e| e.mixed && e.mixup.is_some()));
    }

    #[test]
    fn lambda_policy_uniform_bounds() {
        let pol = LambdaPolicy::Uniform { lo: 0.4, hi: 0.6 };
        for i in 0..200 {
            let l = pol.draw(Seed(i));
            assert!((0.4..=0.6).contains(&l));
        }
        assert!(LambdaPolicy::Uniform { lo: 0.7, hi: 0.6 }.validate().is_err());
        assert!(LambdaPolicy::Fixed(1.1).validate().is_err());
    }
}
