//! Labeled/unlabeled split construction and detection-range cropping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DatasetManifest, Domain, Frame, SplitTag};

/// Tags every `round(1/fraction)`-th target frame (starting at index 0) as labeled
/// and the rest as unlabeled. Order is preserved.
pub fn make_ssda_split(manifest: &DatasetManifest, fraction: f64) -> Result<DatasetManifest> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if manifest.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    if let Some(e) = manifest.entries.iter().find(|e| e.domain != Domain::Target) {
        return Err(Error::NotTargetDomain {
            id: e.id.clone(),
            domain: e.domain.to_string(),
        });
    }
    let stride = split_stride(fraction);
    let entries = manifest
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut e = e.clone();
            e.split = if i % stride == 0 {
                SplitTag::Labeled
            } else {
                SplitTag::Unlabeled
            };
            e
        })
        .collect();
    Ok(DatasetManifest::new(entries))
}

pub fn split_stride(fraction: f64) -> usize {
    ((1.0 / fraction).round() as usize).max(1)
}

/// Axis-aligned crop volume: |x|, |y| <= `xy_limit`, `z_min` <= z <= `z_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRange {
    pub xy_limit: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for DetectionRange {
    fn default() -> Self {
        Self {
            xy_limit: 54.0,
            z_min: -5.0,
            z_max: 4.8,
        }
    }
}

impl DetectionRange {
    pub fn validate(&self) -> Result<()> {
        if !(self.xy_limit > 0.0) || !(self.z_min < self.z_max) {
            return Err(Error::InvalidArgument(format!("invalid detection range {self:?}")));
        }
        Ok(())
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        p[0].abs() <= self.xy_limit
            && p[1].abs() <= self.xy_limit
            && p[2] >= self.z_min
            && p[2] <= self.z_max
    }
}

/// Keeps points inside the range volume and boxes whose centre is inside it.
pub fn crop_to_range(frame: &Frame, xy_limit: f64, z_min: f64, z_max: f64) -> Frame {
    let range = DetectionRange {
        xy_limit,
        z_min,
        z_max,
    };
    crop(frame, &range)
}

pub fn crop(frame: &Frame, range: &DetectionRange) -> Frame {
    Frame {
        id: frame.id.clone(),
        cloud: frame
            .cloud
            .iter()
            .filter(|p| range.contains([p.x, p.y, p.z]))
            .copied()
            .collect(),
        labels: frame
            .labels
            .iter()
            .filter(|l| range.contains(l.bbox.center))
            .cloned()
            .collect(),
        domain: frame.domain,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Box3D, LabeledBox, ManifestEntry, Point, PointCloud};

    fn manifest(n: usize, domain: Domain) -> DatasetManifest {
        DatasetManifest::new(
            (0..n)
                .map(|i| ManifestEntry {
                    id: format!("f{i:05}"),
                    cloud: format!("{i}.bin").into(),
                    labels: format!("{i}.json").into(),
                    domain,
                    split: SplitTag::None,
                })
                .collect(),
        )
    }

    fn labeled_count(m: &DatasetManifest) -> usize {
        m.with_split(SplitTag::Labeled).count()
    }

    #[test]
    fn published_split_counts() {
        let m = manifest(28130, Domain::Target);
        for (fraction, expected) in [(0.01, 282), (0.05, 1407), (0.10, 2813), (0.20, 5626), (1.0, 28130)] {
            assert_eq!(labeled_count(&make_ssda_split(&m, fraction).unwrap()), expected);
        }
        let split = make_ssda_split(&m, 0.01).unwrap();
        let idx: Vec<usize> = split
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == SplitTag::Labeled)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(idx[0], 0);
        assert_eq!(idx[1], 100);
        assert_eq!(*idx.last().unwrap(), 28100);
    }

    #[test]
    fn full_fraction_labels_everything() {
        let split = make_ssda_split(&manifest(10, Domain::Target), 1.0).unwrap();
        assert_eq!(labeled_count(&split), 10);
        assert_eq!(split.with_split(SplitTag::Unlabeled).count(), 0);
    }

    #[test]
    fn half_fraction_on_seven() {
        let split = make_ssda_split(&manifest(7, Domain::Target), 0.5).unwrap();
        let tags: Vec<bool> = split.entries.iter().map(|e| e.split == SplitTag::Labeled).collect();
        assert_eq!(tags, vec![true, false, true, false, true, false, true]);
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            make_ssda_split(&DatasetManifest::default(), 0.1),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            make_ssda_split(&manifest(3, Domain::Source), 0.1),
            Err(Error::NotTargetDomain { .. })
        ));
        assert!(make_ssda_split(&manifest(3, Domain::Target), 0.0).is_err());
        assert!(make_ssda_split(&manifest(3, Domain::Target), 1.5).is_err());
    }

    #[test]
    fn split_preserves_order_and_partitions() {
        let m = manifest(137, Domain::Target);
        let split = make_ssda_split(&m, 0.2).unwrap();
        assert_eq!(split, make_ssda_split(&m, 0.2).unwrap());
        for (a, b) in m.entries.iter().zip(&split.entries) {
            assert_eq!(a.id, b.id);
            assert_ne!(b.split, SplitTag::None);
        }
    }

    fn frame(points: Vec<Point>, centers: &[[f64; 3]]) -> Frame {
        Frame::new(
            "f",
            PointCloud::new(points),
            centers
                .iter()
                .map(|c| LabeledBox::real(Box3D::new(*c, [1.0, 1.0, 1.0], 0.0).unwrap(), "car"))
                .collect(),
            Domain::Target,
        )
    }

    #[test]
    fn crop_boundary_is_inclusive() {
        let f = frame(
            vec![Point::new(60.0, 0.0, 0.0, 0.1), Point::new(54.0, -54.0, 0.0, 0.2)],
            &[],
        );
        let out = crop_to_range(&f, 54.0, -5.0, 4.8);
        assert_eq!(out.cloud.points, vec![Point::new(54.0, -54.0, 0.0, 0.2)]);
    }

    #[test]
    fn crop_inside_is_identity_and_idempotent() {
        let f = frame(
            vec![Point::new(1.0, 2.0, 0.0, 0.1), Point::new(-3.0, 4.0, 1.0, 0.2)],
            &[[1.0, 1.0, 0.5]],
        );
        let once = crop_to_range(&f, 54.0, -5.0, 4.8);
        assert_eq!(once, f);
        assert_eq!(crop_to_range(&once, 54.0, -5.0, 4.8), once);
    }

    #[test]
    fn crop_drops_box_by_centre() {
        let f = frame(vec![Point::new(10.0, 0.0, 4.5, 0.1)], &[[10.0, 0.0, 4.9]]);
        let out = crop_to_range(&f, 54.0, -5.0, 4.8);
        assert_eq!(out.cloud.len(), 1);
        assert!(out.labels.is_empty());
    }
}
