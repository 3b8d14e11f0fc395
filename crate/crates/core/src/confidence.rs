//! Per-step confidence sources for the trust estimator.
//!
//! Pose steadiness is computed from body keypoints. Smartphone usage and eye
//! contact come from classifiers upstream; here they are replaced by scripted,
//! piecewise-constant streams behind the [`ConfidenceProvider`] trait.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trust::Confidences;

/// Keypoints per detected pose.
pub const NUM_KEYPOINTS: usize = 17;

/// Fluctuation sensitivity used in the driving simulations.
pub const DEFAULT_FLUCTUATION_SENSITIVITY: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfidenceError {
    #[error("expected {expected} keypoints, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("degenerate bounding box with dimensions ({0}, {1})")]
    DegenerateBbox(f64, f64),
    #[error("fluctuation sensitivity must be positive, got {0}")]
    Sensitivity(f64),
    #[error("invalid script: {0}")]
    Script(String),
}

/// Absolute pose keypoints with the enclosing bounding box, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseKeypoints {
    points: Vec<Vector2<f64>>,
    bbox_origin: Vector2<f64>,
    bbox_dims: Vector2<f64>,
}

impl PoseKeypoints {
    pub fn new(
        points: Vec<Vector2<f64>>,
        bbox_origin: Vector2<f64>,
        bbox_dims: Vector2<f64>,
    ) -> Result<Self, ConfidenceError> {
        if points.len() != NUM_KEYPOINTS {
            return Err(ConfidenceError::Shape {
                expected: NUM_KEYPOINTS,
                got: points.len(),
            });
        }
        if !(bbox_dims.x > 0.0 && bbox_dims.y > 0.0) {
            return Err(ConfidenceError::DegenerateBbox(bbox_dims.x, bbox_dims.y));
        }
        Ok(Self {
            points,
            bbox_origin,
            bbox_dims,
        })
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }
}

/// Keypoints expressed relative to the bounding box, in box units.
pub fn relative_keypoints(pose: &PoseKeypoints) -> Vec<Vector2<f64>> {
    pose.points
        .iter()
        .map(|p| (p - pose.bbox_origin).component_div(&pose.bbox_dims))
        .collect()
}

/// Steadiness confidence between two consecutive relative poses.
///
/// Inversely proportional to the summed keypoint displacement and saturated
/// to `[0, 1]`. A pose that did not move at all scores 1.
pub fn fluctuation_confidence(
    now: &[Vector2<f64>],
    prev: &[Vector2<f64>],
    sensitivity: f64,
) -> Result<f64, ConfidenceError> {
    if !(sensitivity > 0.0) {
        return Err(ConfidenceError::Sensitivity(sensitivity));
    }
    for got in [now.len(), prev.len()] {
        if got != NUM_KEYPOINTS {
            return Err(ConfidenceError::Shape {
                expected: NUM_KEYPOINTS,
                got,
            });
        }
    }
    let deviation: f64 = now.iter().zip(prev).map(|(a, b)| (a - b).norm()).sum();
    if deviation == 0.0 {
        return Ok(1.0);
    }
    Ok((sensitivity * NUM_KEYPOINTS as f64 / deviation).clamp(0.0, 1.0))
}

/// Tracks the previous relative pose of one pedestrian.
#[derive(Debug, Clone)]
pub struct PoseFluctuationTracker {
    sensitivity: f64,
    prev: Option<Vec<Vector2<f64>>>,
}

impl PoseFluctuationTracker {
    pub fn new(sensitivity: f64) -> Result<Self, ConfidenceError> {
        if !(sensitivity > 0.0) {
            return Err(ConfidenceError::Sensitivity(sensitivity));
        }
        Ok(Self {
            sensitivity,
            prev: None,
        })
    }

    /// Feed the next pose. Returns `None` on the first pose.
    pub fn push(&mut self, pose: &PoseKeypoints) -> Result<Option<f64>, ConfidenceError> {
        let rel = relative_keypoints(pose);
        let out = match &self.prev {
            Some(prev) => Some(fluctuation_confidence(&rel, prev, self.sensitivity)?),
            None => None,
        };
        self.prev = Some(rel);
        Ok(out)
    }
}

/// One constant segment of a confidence script, covering steps
/// `first..=last`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub first: u64,
    pub last: u64,
    pub c_sm: f64,
    pub c_eye: f64,
    pub c_fluc: f64,
}

/// Piecewise-constant confidence stream. Steps not covered by any entry are
/// unobserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ScriptEntry>", into = "Vec<ScriptEntry>")]
pub struct ConfidenceScript {
    entries: Vec<ScriptEntry>,
}

impl ConfidenceScript {
    pub fn new(entries: Vec<ScriptEntry>) -> Result<Self, ConfidenceError> {
        for (i, e) in entries.iter().enumerate() {
            if e.first > e.last {
                return Err(ConfidenceError::Script(format!(
                    "entry {i}: first step {} is after last step {}",
                    e.first, e.last
                )));
            }
            for (name, c) in [("c_sm", e.c_sm), ("c_eye", e.c_eye), ("c_fluc", e.c_fluc)] {
                if !(0.0..=1.0).contains(&c) {
                    return Err(ConfidenceError::Script(format!(
                        "entry {i}: {name} = {c} is outside [0, 1]"
                    )));
                }
            }
        }
        for (i, pair) in entries.windows(2).enumerate() {
            if pair[1].first <= pair[0].last {
                return Err(ConfidenceError::Script(format!(
                    "entry {} overlaps or precedes entry {i}",
                    i + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    /// Confidences scripted for `step`, or `None` when the pedestrian is not
    /// observed at that step.
    pub fn confidences_at(&self, step: u64) -> Option<Confidences> {
        let idx = self.entries.partition_point(|e| e.last < step);
        self.entries
            .get(idx)
            .filter(|e| e.first <= step)
            .map(|e| Confidences {
                c_sm: e.c_sm,
                c_eye: e.c_eye,
                c_fluc: e.c_fluc,
            })
    }
}

impl TryFrom<Vec<ScriptEntry>> for ConfidenceScript {
    type Error = ConfidenceError;

    fn try_from(v: Vec<ScriptEntry>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ConfidenceScript> for Vec<ScriptEntry> {
    fn from(s: ConfidenceScript) -> Self {
        s.entries
    }
}

/// Source of per-step confidences for one pedestrian.
pub trait ConfidenceProvider {
    /// `None` means the pedestrian was not observed at `step`.
    fn confidences(&mut self, step: u64) -> Option<Confidences>;
}

impl ConfidenceProvider for ConfidenceScript {
    fn confidences(&mut self, step: u64) -> Option<Confidences> {
        self.confidences_at(step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pose_with(points: Vec<Vector2<f64>>, origin: Vector2<f64>, dims: Vector2<f64>) -> PoseKeypoints {
        PoseKeypoints::new(points, origin, dims).unwrap()
    }

    #[test]
    fn relative_keypoints_examples() {
        let origin = Vector2::new(10.0, 20.0);
        let dims = Vector2::new(40.0, 80.0);
        let mut pts = vec![origin; NUM_KEYPOINTS];
        pts[1] = origin + dims;
        pts[2] = Vector2::new(30.0, 60.0);
        let rel = relative_keypoints(&pose_with(pts, origin, dims));
        assert_eq!(rel[0], Vector2::new(0.0, 0.0));
        assert_eq!(rel[1], Vector2::new(1.0, 1.0));
        assert_eq!(rel[2], Vector2::new(0.5, 0.5));
    }

    #[test]
    fn pose_validation() {
        let o = Vector2::zeros();
        assert!(matches!(
            PoseKeypoints::new(vec![o; 16], o, Vector2::new(1.0, 1.0)),
            Err(ConfidenceError::Shape { .. })
        ));
        assert!(matches!(
            PoseKeypoints::new(vec![o; 17], o, Vector2::new(0.0, 1.0)),
            Err(ConfidenceError::DegenerateBbox(..))
        ));
    }

    #[test]
    fn fluctuation_examples() {
        let f = 0.25;
        let a = vec![Vector2::new(0.3, 0.4); NUM_KEYPOINTS];
        assert_eq!(fluctuation_confidence(&a, &a, f).unwrap(), 1.0);

        let shifted: Vec<_> = a.iter().map(|p| p + Vector2::new(f, 0.0)).collect();
        assert_abs_diff_eq!(fluctuation_confidence(&shifted, &a, f).unwrap(), 1.0, epsilon = 1e-12);

        let shifted2: Vec<_> = a.iter().map(|p| p + Vector2::new(0.0, 2.0 * f)).collect();
        assert_abs_diff_eq!(fluctuation_confidence(&shifted2, &a, f).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn fluctuation_errors() {
        let a = vec![Vector2::zeros(); NUM_KEYPOINTS];
        let short = vec![Vector2::zeros(); 3];
        assert!(matches!(
            fluctuation_confidence(&a, &short, 0.25),
            Err(ConfidenceError::Shape { .. })
        ));
        assert!(matches!(
            fluctuation_confidence(&a, &a, 0.0),
            Err(ConfidenceError::Sensitivity(_))
        ));
    }

    #[test]
    fn tracker_skips_first_pose() {
        let dims = Vector2::new(10.0, 20.0);
        let p0 = pose_with(vec![Vector2::new(1.0, 1.0); 17], Vector2::zeros(), dims);
        let p1 = pose_with(vec![Vector2::new(1.0, 1.0); 17], Vector2::zeros(), dims);
        let mut t = PoseFluctuationTracker::new(DEFAULT_FLUCTUATION_SENSITIVITY).unwrap();
        assert_eq!(t.push(&p0).unwrap(), None);
        assert_eq!(t.push(&p1).unwrap(), Some(1.0));
    }

    fn entry(first: u64, last: u64, c: (f64, f64, f64)) -> ScriptEntry {
        ScriptEntry {
            first,
            last,
            c_sm: c.0,
            c_eye: c.1,
            c_fluc: c.2,
        }
    }

    #[test]
    fn script_lookup() {
        let s = ConfidenceScript::new(vec![entry(0, 10, (0.9, 0.1, 0.3))]).unwrap();
        let c = s.confidences_at(5).unwrap();
        assert_eq!((c.c_sm, c.c_eye, c.c_fluc), (0.9, 0.1, 0.3));
        assert_eq!(s.confidences_at(11), None);
    }

    #[test]
    fn script_switches_at_boundary() {
        let s = ConfidenceScript::new(vec![
            entry(0, 4, (0.9, 0.1, 0.3)),
            entry(5, 9, (0.1, 0.8, 0.9)),
        ])
        .unwrap();
        assert_eq!(s.confidences_at(4).unwrap().c_sm, 0.9);
        assert_eq!(s.confidences_at(5).unwrap().c_sm, 0.1);
    }

    #[test]
    fn script_gap_is_unobserved() {
        let s = ConfidenceScript::new(vec![
            entry(0, 2, (0.9, 0.1, 0.3)),
            entry(6, 9, (0.1, 0.8, 0.9)),
        ])
        .unwrap();
        assert!(s.confidences_at(4).is_none());
        assert!(s.confidences_at(6).is_some());
    }

    #[test]
    fn script_validation() {
        assert!(ConfidenceScript::new(vec![entry(0, 5, (0.1, 0.1, 0.1)), entry(5, 6, (0.1, 0.1, 0.1))]).is_err());
        assert!(ConfidenceScript::new(vec![entry(3, 2, (0.1, 0.1, 0.1))]).is_err());
        assert!(ConfidenceScript::new(vec![entry(0, 2, (1.1, 0.1, 0.1))]).is_err());
    }

    fn rel_pose() -> impl Strategy<Value = Vec<Vector2<f64>>> {
        proptest::collection::vec((0.0..1.0f64, 0.0..1.0f64), NUM_KEYPOINTS)
            .prop_map(|v| v.into_iter().map(|(x, y)| Vector2::new(x, y)).collect())
    }

    proptest! {
        #[test]
        fn relative_keypoints_translation_invariant(
            pts in proptest::collection::vec((-100.0..100.0f64, -100.0..100.0f64), NUM_KEYPOINTS),
            shift in (-50.0..50.0f64, -50.0..50.0f64),
        ) {
            let pts: Vec<_> = pts.into_iter().map(|(x, y)| Vector2::new(x, y)).collect();
            let origin = Vector2::new(-3.0, 7.0);
            let dims = Vector2::new(40.0, 90.0);
            let shift = Vector2::new(shift.0, shift.1);
            let a = relative_keypoints(&pose_with(pts.clone(), origin, dims));
            let b = relative_keypoints(&pose_with(pts.iter().map(|p| p + shift).collect(), origin + shift, dims));
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).norm() < 1e-9);
            }
        }

        #[test]
        fn fluctuation_symmetric_and_bounded(a in rel_pose(), b in rel_pose(), f in 0.001..1.0f64) {
            let ab = fluctuation_confidence(&a, &b, f).unwrap();
            let ba = fluctuation_confidence(&b, &a, f).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn fluctuation_scales_with_sensitivity(a in rel_pose(), b in rel_pose()) {
            // Small sensitivities keep both ratios below saturation.
            let dev: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).norm()).sum();
            prop_assume!(dev > 1e-3);
            let f = dev / (4.0 * NUM_KEYPOINTS as f64);
            let c1 = fluctuation_confidence(&a, &b, f).unwrap();
            let c2 = fluctuation_confidence(&a, &b, 2.0 * f).unwrap();
            prop_assert!((c2 - 2.0 * c1).abs() < 1e-12);
        }
    }
}
