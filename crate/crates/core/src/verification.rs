//! Distance-based IoU verification.
//!
//! Matched IoUs are scaled by a factor combining how well the detection covers
//! the ground truth with how close the object is to the ego vehicle: a poorly
//! covered object nearby is penalized more than the same error far away.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::clear::FrameTally;
use crate::error::Error;
use crate::geometry::{cover, normalized_distance, EvaluationRange};
use crate::scenario::{DetectionFrame, Frame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationConfig {
    /// Minimum cover `mC` in (0, 1); anything at or below scores 0.
    pub min_cover: f64,
    /// Over-detection tolerance `oT` > 1; oversizing up to this is not penalized.
    pub over_tolerance: f64,
    /// Maximum over-detection `mO` > `oT`, where the score reaches 0.
    pub max_over: f64,
    pub range: EvaluationRange,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            min_cover: 0.5,
            over_tolerance: 1.5,
            max_over: 3.0,
            range: EvaluationRange::default(),
        }
    }
}

impl VerificationConfig {
    pub fn new(min_cover: f64, over_tolerance: f64, max_over: f64, range: EvaluationRange) -> Result<Self, Error> {
        if !(0.0 < min_cover && min_cover < 1.0 && 1.0 < over_tolerance && over_tolerance < max_over) {
            return Err(Error::Config(format!(
                "verification needs 0 < mC < 1 < oT < mO, got mC={min_cover} oT={over_tolerance} mO={max_over}"
            )));
        }
        Ok(Self {
            min_cover,
            over_tolerance,
            max_over,
            range,
        })
    }
}

/// Safety function of the cover ratio.
pub fn f_s(c: f64, cfg: &VerificationConfig) -> f64 {
    let mc = cfg.min_cover;
    let ot = cfg.over_tolerance;
    let mo = cfg.max_over;
    if c > mc && c <= 1.0 {
        (1.0 + mc + (1.0 - mc) * (PI * (c - 0.5)).sin()) / 2.0
    } else if c > 1.0 && c <= ot {
        1.0
    } else if c > ot && c <= mo {
        (1.0 + (PI / (mo - ot) * (c - ot)).cos()) / 2.0
    } else {
        0.0
    }
}

/// Combines a score `x` with a normalized distance `y`; maps `[0,1]²` onto `[-1,1]`.
pub fn g(x: f64, y: f64) -> f64 {
    x - (1.0 - x) * (1.0 - y)
}

/// Distance-based precision factor in `[0, 1]`.
pub fn f_v(c: f64, d_norm: f64, cfg: &VerificationConfig) -> f64 {
    (g(f_s(c, cfg), d_norm) + 1.0) / 2.0
}

/// Returns a copy of `tally` whose matched IoUs are multiplied by `f_v`.
/// Counts are left untouched; the distance is measured from the ego to the
/// ground-truth center.
pub fn scale_matched_ious(
    tally: &FrameTally,
    frame: &Frame,
    detections: &DetectionFrame,
    cfg: &VerificationConfig,
) -> FrameTally {
    let ego = frame.ego.position();
    let mut out = tally.clone();
    for m in &mut out.matches {
        let gt = &frame.objects[m.gt_index].bbox;
        let det = &detections.detections[m.detection_index].bbox;
        let factor = f_v(cover(det, gt), normalized_distance(ego, gt.center(), &cfg.range), cfg);
        m.iou *= factor;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clear::assign_frame;
    use crate::geometry::OrientedBox;
    use crate::scenario::{ClassLabel, Detection, EgoState, ObjectState};
    use proptest::prelude::*;

    fn cfg() -> VerificationConfig {
        VerificationConfig::default()
    }

    #[test]
    fn f_s_examples() {
        assert!((f_s(1.0, &cfg()) - 1.0).abs() < 1e-12);
        assert_eq!(f_s(0.3, &cfg()), 0.0);
        assert_eq!(f_s(0.5, &cfg()), 0.0);
        let expected = (1.5 + 0.5 * (0.25 * PI).sin()) / 2.0;
        assert!((f_s(0.75, &cfg()) - expected).abs() < 1e-12);
        assert!((f_s(0.75, &cfg()) - 0.92678).abs() < 1e-4);
        assert!((f_s(2.25, &cfg()) - 0.5).abs() < 1e-12);
        assert_eq!(f_s(3.5, &cfg()), 0.0);
        assert_eq!(f_s(1.2, &cfg()), 1.0);
    }

    #[test]
    fn f_s_continuity_at_boundaries() {
        let c = cfg();
        let eps = 1e-10;
        for b in [1.0, c.over_tolerance, c.max_over] {
            assert!((f_s(b - eps, &c) - f_s(b + eps, &c)).abs() < 1e-9, "jump at {b}");
        }
        // intentional jump at mC
        assert!((f_s(0.5 + eps, &c) - 0.75).abs() < 1e-9);
    }

    #[test]
    fn g_examples() {
        for y in [0.0, 0.3, 1.0] {
            assert_eq!(g(1.0, y), 1.0);
        }
        assert_eq!(g(0.0, 0.0), -1.0);
        assert_eq!(g(0.5, 0.5), 0.25);
    }

    #[test]
    fn f_v_examples() {
        assert_eq!(f_v(1.0, 0.1, &cfg()), 1.0);
        assert_eq!(f_v(1.0, 0.9, &cfg()), 1.0);
        assert_eq!(f_v(0.2, 0.0, &cfg()), 0.0);
        assert_eq!(f_v(0.2, 1.0, &cfg()), 0.5);
    }

    #[test]
    fn invalid_config() {
        let r = EvaluationRange::default();
        assert!(VerificationConfig::new(1.0, 1.5, 3.0, r).is_err());
        assert!(VerificationConfig::new(0.5, 0.9, 3.0, r).is_err());
        assert!(VerificationConfig::new(0.5, 1.5, 1.5, r).is_err());
        assert!(VerificationConfig::new(0.5, 1.5, 3.0, r).is_ok());
    }

    fn frame_with(gt: OrientedBox, det: OrientedBox) -> (Frame, DetectionFrame, FrameTally) {
        let frame = Frame {
            index: 0,
            timestamp: 0.0,
            ego: EgoState {
                bbox: OrientedBox::new(0.0, 0.0, 4.5, 1.8, 0.0).unwrap(),
                speed: 0.0,
            },
            objects: vec![ObjectState {
                id: "a".into(),
                class: ClassLabel::Car,
                bbox: gt,
                velocity: [0.0, 0.0],
            }],
        };
        let dets = DetectionFrame {
            index: 0,
            detections: vec![Detection {
                bbox: det,
                class: ClassLabel::Car,
                score: 1.0,
                track_id: None,
                timestamp: 0.0,
            }],
        };
        let tally = assign_frame(0, &frame.objects, &dets.detections, 0.5);
        (frame, dets, tally)
    }

    #[test]
    fn exact_detection_unchanged() {
        let b = OrientedBox::new(10.0, 0.0, 4.0, 2.0, 0.0).unwrap();
        let (frame, dets, tally) = frame_with(b, b);
        let scaled = scale_matched_ious(&tally, &frame, &dets, &cfg());
        assert_eq!(scaled, tally);
    }

    #[test]
    fn scaling_multiplies_iou() {
        // detection covers 0.75 of the object at 20 m
        let gt = OrientedBox::new(20.0, 0.0, 4.0, 2.0, 0.0).unwrap();
        let det = OrientedBox::new(19.5, 0.0, 3.0, 2.0, 0.0).unwrap();
        let (frame, dets, tally) = frame_with(gt, det);
        let scaled = scale_matched_ious(&tally, &frame, &dets, &cfg());
        let expected = tally.matches[0].iou * f_v(0.75, 0.2, &cfg());
        assert!((scaled.matches[0].iou - expected).abs() < 1e-12);
        assert_eq!(scaled.misses, tally.misses);
        assert_eq!(scaled.false_positives, tally.false_positives);
    }

    proptest! {
        #[test]
        fn f_s_in_unit_interval(c in 0.0..5.0f64) {
            let v = f_s(c, &cfg());
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn f_s_monotone_branches(a in 0.5..1.0f64, b in 0.5..1.0f64, p in 1.5..3.0f64, q in 1.5..3.0f64) {
            let c = cfg();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(f_s(lo, &c) <= f_s(hi, &c) + 1e-12);
            let (lo, hi) = if p < q { (p, q) } else { (q, p) };
            prop_assert!(f_s(lo, &c) + 1e-12 >= f_s(hi, &c));
        }

        #[test]
        fn f_v_bounded_and_monotone_in_distance(c in 0.0..4.0f64, d1 in 0.0..1.0f64, d2 in 0.0..1.0f64) {
            let cf = cfg();
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            let a = f_v(c, lo, &cf);
            let b = f_v(c, hi, &cf);
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(a <= b + 1e-12);
        }
    }
}
