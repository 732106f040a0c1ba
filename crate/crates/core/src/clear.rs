//! Frame matching and the classic detection/tracking scores (precision, recall,
//! mAP and the CLEAR metrics MODA, MODP, MOTA, MOTP).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_matching;
use crate::error::Error;
use crate::geometry::{center_distance, iou};
use crate::scenario::{ClassLabel, Detection, ObjectState, PerceptionLog, Scenario};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// A ground-truth object paired with a detection.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchPair {
    pub gt_index: usize,
    pub gt_id: String,
    pub detection_index: usize,
    /// Possibly scaled by the distance-based verification.
    pub iou: f64,
    /// Center-to-center ground-plane distance, m.
    pub center_distance: f64,
    pub track_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameTally {
    pub frame_index: u64,
    pub matches: Vec<MatchPair>,
    pub misses: usize,
    pub false_positives: usize,
    pub mismatches: usize,
    pub gt_count: usize,
}

/// Track id each ground-truth object was matched to, keyed by object id.
pub type TrackAssignment = BTreeMap<String, String>;

impl FrameTally {
    pub fn mapped_count(&self) -> usize {
        self.matches.len()
    }

    pub fn is_matched(&self, gt_id: &str) -> bool {
        self.matches.iter().any(|m| m.gt_id == gt_id)
    }

    pub fn track_assignment(&self) -> TrackAssignment {
        self.matches
            .iter()
            .filter_map(|m| m.track_id.clone().map(|t| (m.gt_id.clone(), t)))
            .collect()
    }

    pub fn moda(&self) -> Option<f64> {
        (self.gt_count > 0).then(|| 1.0 - (self.misses + self.false_positives) as f64 / self.gt_count as f64)
    }

    pub fn mota(&self) -> Option<f64> {
        (self.gt_count > 0)
            .then(|| 1.0 - (self.misses + self.false_positives + self.mismatches) as f64 / self.gt_count as f64)
    }

    pub fn modp(&self) -> Option<f64> {
        (!self.matches.is_empty())
            .then(|| self.matches.iter().map(|m| m.iou).sum::<f64>() / self.matches.len() as f64)
    }

    pub fn motp(&self) -> Option<f64> {
        (!self.matches.is_empty())
            .then(|| self.matches.iter().map(|m| m.center_distance).sum::<f64>() / self.matches.len() as f64)
    }
}

fn iou_matrix(gt: &[ObjectState], det: &[Detection]) -> Vec<f64> {
    gt.iter()
        .flat_map(|g| det.iter().map(move |d| iou(&d.bbox, &g.bbox)))
        .collect()
}

/// Optimal one-to-one matching of one frame, without mismatch counting.
pub fn assign_frame(frame_index: u64, gt: &[ObjectState], det: &[Detection], iou_threshold: f64) -> FrameTally {
    let weights = iou_matrix(gt, det);
    let pairs = max_weight_matching(&weights, gt.len(), det.len(), iou_threshold);
    let matches: Vec<MatchPair> = pairs
        .into_iter()
        .map(|(gi, di)| MatchPair {
            gt_index: gi,
            gt_id: gt[gi].id.clone(),
            detection_index: di,
            iou: weights[gi * det.len() + di],
            center_distance: center_distance(&gt[gi].bbox, &det[di].bbox),
            track_id: det[di].track_id.clone(),
        })
        .collect();
    FrameTally {
        frame_index,
        misses: gt.len() - matches.len(),
        false_positives: det.len() - matches.len(),
        mismatches: 0,
        gt_count: gt.len(),
        matches,
    }
}

/// Counts objects matched in the previous frame whose track id changed.
pub fn count_mismatches(tally: &FrameTally, previous: &TrackAssignment) -> usize {
    tally
        .matches
        .iter()
        .filter(|m| match (&m.track_id, previous.get(&m.gt_id)) {
            (Some(now), Some(before)) => now != before,
            _ => false,
        })
        .count()
}

pub fn match_frame(
    frame_index: u64,
    gt: &[ObjectState],
    det: &[Detection],
    iou_threshold: f64,
    previous: Option<&TrackAssignment>,
) -> FrameTally {
    let mut tally = assign_frame(frame_index, gt, det, iou_threshold);
    if let Some(prev) = previous {
        tally.mismatches = count_mismatches(&tally, prev);
    }
    tally
}

/// Matches every frame of a scenario. Frames are assigned independently
/// (in parallel with the `parallel` feature); mismatches are counted in a
/// sequential sweep afterwards.
pub fn tally_scenario(scenario: &Scenario, log: &PerceptionLog, iou_threshold: f64) -> Vec<FrameTally> {
    let assign = |(f, d): (&crate::scenario::Frame, &crate::scenario::DetectionFrame)| {
        assign_frame(f.index, &f.objects, &d.detections, iou_threshold)
    };
    #[cfg(feature = "parallel")]
    let mut tallies: Vec<FrameTally> = {
        use rayon::prelude::*;
        scenario.frames.par_iter().zip(log.frames.par_iter()).map(assign).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let mut tallies: Vec<FrameTally> = scenario.frames.iter().zip(log.frames.iter()).map(assign).collect();

    let mut previous = TrackAssignment::new();
    for t in &mut tallies {
        t.mismatches = count_mismatches(t, &previous);
        previous = t.track_assignment();
    }
    tallies
}

/// Scenario-cumulative MODA; `None` when the scenario has no ground truth.
pub fn moda(tallies: &[FrameTally]) -> Option<f64> {
    let g: usize = tallies.iter().map(|t| t.gt_count).sum();
    let errors: usize = tallies.iter().map(|t| t.misses + t.false_positives).sum();
    (g > 0).then(|| 1.0 - errors as f64 / g as f64)
}

pub fn mota(tallies: &[FrameTally]) -> Option<f64> {
    let g: usize = tallies.iter().map(|t| t.gt_count).sum();
    let errors: usize = tallies
        .iter()
        .map(|t| t.misses + t.false_positives + t.mismatches)
        .sum();
    (g > 0).then(|| 1.0 - errors as f64 / g as f64)
}

/// Mean per-frame IoU, averaged over the frames that have at least one match.
pub fn modp(tallies: &[FrameTally]) -> Option<f64> {
    let per_frame: Vec<f64> = tallies.iter().filter_map(FrameTally::modp).collect();
    (!per_frame.is_empty()).then(|| per_frame.iter().sum::<f64>() / per_frame.len() as f64)
}

/// Mean center distance over all matches of the scenario, m.
pub fn motp(tallies: &[FrameTally]) -> Option<f64> {
    let mapped: usize = tallies.iter().map(FrameTally::mapped_count).sum();
    let dist: f64 = tallies
        .iter()
        .flat_map(|t| &t.matches)
        .map(|m| m.center_distance)
        .sum();
    (mapped > 0).then(|| dist / mapped as f64)
}

/// Lower and upper threshold of the linear normalization ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationThresholds {
    lower: f64,
    upper: f64,
}

impl NormalizationThresholds {
    /// Thresholds mapping MOTP in meters: 0.8 m (a VRU step width) and 2.5 m.
    pub const MOTP: NormalizationThresholds = NormalizationThresholds { lower: 0.8, upper: 2.5 };

    pub fn new(lower: f64, upper: f64) -> Result<Self, Error> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::Config(format!(
                "normalization thresholds need T_l < T_u, got {lower} and {upper}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }
}

/// 1 below `T_l`, 0 above `T_u`, linear in between.
pub fn f_norm(x: f64, th: &NormalizationThresholds) -> f64 {
    if x < th.lower {
        1.0
    } else if x <= th.upper {
        1.0 - (x - th.lower) / (th.upper - th.lower)
    } else {
        0.0
    }
}

/// MOTP mapped so that larger means safer.
pub fn motp_s(motp_value: f64, th: &NormalizationThresholds) -> f64 {
    f_norm(motp_value, th)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub mean_average_precision: Option<f64>,
}

/// Precision and recall from the frame tallies, mAP from score-ranked detections.
pub fn precision_recall_map(
    tallies: &[FrameTally],
    scenario: &Scenario,
    log: &PerceptionLog,
    iou_threshold: f64,
) -> DetectionScores {
    let tp: usize = tallies.iter().map(FrameTally::mapped_count).sum();
    let fp: usize = tallies.iter().map(|t| t.false_positives).sum();
    let g: usize = tallies.iter().map(|t| t.gt_count).sum();
    DetectionScores {
        precision: (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64),
        recall: (g > 0).then(|| tp as f64 / g as f64),
        mean_average_precision: mean_average_precision(scenario, log, iou_threshold),
    }
}

/// Area under the precision/recall curve with all-point interpolation.
pub fn average_precision(is_tp_ranked: &[bool], gt_total: usize) -> f64 {
    if gt_total == 0 {
        return 0.0;
    }
    let mut recalls = Vec::with_capacity(is_tp_ranked.len());
    let mut precisions = Vec::with_capacity(is_tp_ranked.len());
    let mut tp = 0usize;
    for (k, &hit) in is_tp_ranked.iter().enumerate() {
        if hit {
            tp += 1;
        }
        recalls.push(tp as f64 / gt_total as f64);
        precisions.push(tp as f64 / (k + 1) as f64);
    }
    // monotone precision envelope from the right
    for i in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[i] = precisions[i].max(precisions[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recalls.iter().zip(&precisions) {
        if *r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
    }
    ap
}

/// Per-class average precision (greedy score-ordered matching per class),
/// averaged over the classes present in the ground truth.
pub fn mean_average_precision(scenario: &Scenario, log: &PerceptionLog, iou_threshold: f64) -> Option<f64> {
    let mut gt_per_class: BTreeMap<ClassLabel, usize> = BTreeMap::new();
    for o in scenario.frames.iter().flat_map(|f| &f.objects) {
        *gt_per_class.entry(o.class).or_default() += 1;
    }
    if gt_per_class.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for (&class, &gt_total) in &gt_per_class {
        // (score, frame position, detection index)
        let mut ranked: Vec<(f64, usize, usize)> = log
            .frames
            .iter()
            .enumerate()
            .flat_map(|(fi, f)| {
                f.detections
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| d.class == class)
                    .map(move |(di, d)| (d.score, fi, di))
            })
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut taken: Vec<Vec<bool>> = scenario.frames.iter().map(|f| vec![false; f.objects.len()]).collect();
        let hits: Vec<bool> = ranked
            .iter()
            .map(|&(_, fi, di)| {
                let det = &log.frames[fi].detections[di];
                let frame = &scenario.frames[fi];
                let best = frame
                    .objects
                    .iter()
                    .enumerate()
                    .filter(|(gi, o)| o.class == class && !taken[fi][*gi])
                    .map(|(gi, o)| (gi, iou(&det.bbox, &o.bbox)))
                    .filter(|&(_, v)| v >= iou_threshold)
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
                match best {
                    Some((gi, _)) => {
                        taken[fi][gi] = true;
                        true
                    }
                    None => false,
                }
            })
            .collect();
        sum += average_precision(&hits, gt_total);
    }
    Some(sum / gt_per_class.len() as f64)
}
