//! Safety scores and the end-to-end scenario evaluation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clear::{self, motp_s, DetectionScores, FrameTally};
use crate::config::EvaluationConfig;
use crate::error::{Error, Result};
use crate::relevance::{assess_frame, BrakingModel, CriticalityRecord, FrameCriticality};
use crate::scenario::{Frame, PerceptionLog, Scenario};
use crate::timing::{perception_times, time_factor, weighted_perception_time, PerceptionTiming, TimeFactor};
use crate::verification::scale_matched_ious;

/// Weights of detection and tracking safety; they sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    w_d: f64,
    w_t: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self { w_d: 0.5, w_t: 0.5 }
    }
}

impl MetricWeights {
    pub const DETECTION_ONLY: MetricWeights = MetricWeights { w_d: 1.0, w_t: 0.0 };

    pub fn new(w_d: f64, w_t: f64) -> Result<Self> {
        let unit = |w: f64| (0.0..=1.0).contains(&w);
        if !(unit(w_d) && unit(w_t) && (w_d + w_t - 1.0).abs() <= 1e-12) {
            return Err(Error::Config(format!(
                "weights must lie in [0, 1] and sum to 1, got w_D={w_d} w_T={w_t}"
            )));
        }
        Ok(Self { w_d, w_t })
    }

    pub fn w_d(&self) -> f64 {
        self.w_d
    }

    pub fn w_t(&self) -> f64 {
        self.w_t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Scenario-wide CLEAR values, worst frame relevance factor.
    #[default]
    Cumulative,
    /// Per-frame scores with the frame's own relevance factor, averaged.
    PerFrameMean,
}

/// `f_t * f_c * (MODA + MODP) / 2` with MODA clamped to `[0, 1]`.
pub fn detection_safety(moda: f64, modp: f64, f_c: f64, f_t: f64) -> f64 {
    f_t * f_c * (moda.clamp(0.0, 1.0) + modp.clamp(0.0, 1.0)) / 2.0
}

/// `f_t * f_c * (MOTA + MOTP_s) / 2` with MOTA clamped to `[0, 1]`.
pub fn tracking_safety(mota: f64, motp_s: f64, f_c: f64, f_t: f64) -> f64 {
    f_t * f_c * (mota.clamp(0.0, 1.0) + motp_s.clamp(0.0, 1.0)) / 2.0
}

pub fn safety_score(s_d: f64, s_t: f64, w: &MetricWeights) -> f64 {
    w.w_d * s_d + w.w_t * s_t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyLabel {
    Insufficient,
    Bad,
    Good,
    VeryGood,
    Excellent,
}

impl SafetyLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SafetyLabel::Insufficient => "insufficient",
            SafetyLabel::Bad => "bad",
            SafetyLabel::Good => "good",
            SafetyLabel::VeryGood => "very good",
            SafetyLabel::Excellent => "excellent",
        }
    }
}

impl fmt::Display for SafetyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bands: `[0, 0.2]`, `(0.2, 0.4]`, `(0.4, 0.6]`, `(0.6, 0.8]`, `(0.8, 1]`.
pub fn classify(s: f64) -> SafetyLabel {
    if s <= 0.2 {
        SafetyLabel::Insufficient
    } else if s <= 0.4 {
        SafetyLabel::Bad
    } else if s <= 0.6 {
        SafetyLabel::Good
    } else if s <= 0.8 {
        SafetyLabel::VeryGood
    } else {
        SafetyLabel::Excellent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBreakdown {
    pub index: u64,
    pub timestamp: f64,
    pub gt: usize,
    pub tp: usize,
    pub fp: usize,
    pub misses: usize,
    pub mismatches: usize,
    /// Mean verified IoU of the frame's matches.
    pub modp: Option<f64>,
    pub motp: Option<f64>,
    pub critical: usize,
    pub missed_critical: usize,
    pub f_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub scenario: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub map: Option<f64>,
    pub moda: Option<f64>,
    pub modp: Option<f64>,
    pub mota: Option<f64>,
    pub motp: Option<f64>,
    pub motp_s: Option<f64>,
    pub f_c: f64,
    pub f_t: f64,
    pub t_dw: Option<f64>,
    pub braking_time: f64,
    pub time_ramp_degenerate: bool,
    pub s_d: Option<f64>,
    pub s_t: Option<f64>,
    pub s: Option<f64>,
    pub label: Option<SafetyLabel>,
    pub weights: MetricWeights,
    pub frames: Vec<FrameBreakdown>,
    pub timings: Vec<PerceptionTiming>,
    pub critical: Vec<CriticalityRecord>,
    pub warnings: Vec<String>,
}

fn check_alignment(scenario: &Scenario, log: &PerceptionLog) -> Result<()> {
    if scenario.frames.len() != log.frames.len() {
        return Err(Error::input(
            scenario.meta.name.clone(),
            format!(
                "frame count mismatch: scenario has {}, log has {}",
                scenario.frames.len(),
                log.frames.len()
            ),
        ));
    }
    for (f, d) in scenario.frames.iter().zip(&log.frames) {
        if f.index != d.index {
            return Err(Error::input(
                scenario.meta.name.clone(),
                format!("log frame {} does not line up with scenario frame {}", d.index, f.index),
            ));
        }
    }
    Ok(())
}

fn mean_speed(frames: &[Frame]) -> f64 {
    if frames.is_empty() {
        return 0.0;
    }
    frames.iter().map(|f| f.ego.speed).sum::<f64>() / frames.len() as f64
}

fn assess_all(
    scenario: &Scenario,
    tallies: &[FrameTally],
    env: &crate::scenario::EnvironmentParams,
    cfg: &EvaluationConfig,
) -> Result<Vec<FrameCriticality>> {
    let assess = |(f, t): (&Frame, &FrameTally)| assess_frame(f, t, env, &cfg.relevance);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        scenario.frames.par_iter().zip(tallies.par_iter()).map(assess).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        scenario.frames.iter().zip(tallies.iter()).map(assess).collect()
    }
}

fn per_frame_scores(
    tallies: &[FrameTally],
    scaled: &[FrameTally],
    criticality: &[FrameCriticality],
    f_t: f64,
    cfg: &EvaluationConfig,
) -> Option<(f64, f64)> {
    let mut sum_d = 0.0;
    let mut sum_t = 0.0;
    let mut n = 0usize;
    for ((raw, sc), crit) in tallies.iter().zip(scaled).zip(criticality) {
        let (Some(moda), Some(mota)) = (raw.moda(), raw.mota()) else {
            continue;
        };
        let modp = sc.modp().unwrap_or(0.0);
        let motp = raw.motp().map_or(0.0, |m| motp_s(m, &cfg.motp));
        sum_d += detection_safety(moda, modp, crit.relevance_factor, f_t);
        sum_t += tracking_safety(mota, motp, crit.relevance_factor, f_t);
        n += 1;
    }
    (n > 0).then(|| (sum_d / n as f64, sum_t / n as f64))
}

/// Runs matching, IoU verification, CLEAR, collision relevance, perception
/// time and aggregation for one scenario and its perception log.
pub fn evaluate_scenario(scenario: &Scenario, log: &PerceptionLog, cfg: &EvaluationConfig) -> Result<SafetyReport> {
    check_alignment(scenario, log)?;
    let env = cfg.environment.apply(&scenario.environment);
    env.validate().map_err(Error::Config)?;
    let mut warnings: Vec<String> = scenario.warnings.iter().chain(&log.warnings).cloned().collect();

    let tallies = clear::tally_scenario(scenario, log, cfg.iou_threshold);
    let scaled: Vec<FrameTally> = if cfg.verification_enabled {
        tallies
            .iter()
            .zip(&scenario.frames)
            .zip(&log.frames)
            .map(|((t, f), d)| scale_matched_ious(t, f, d, &cfg.verification))
            .collect()
    } else {
        tallies.clone()
    };

    let criticality = assess_all(scenario, &tallies, &env, cfg)?;
    let f_c = criticality.iter().map(|c| c.relevance_factor).fold(1.0, f64::min);

    let timings = perception_times(scenario, log, &tallies, &criticality);
    for t in timings.iter().filter(|t| t.t_d.is_none()) {
        warnings.push(format!(
            "object '{}' became critical but was never perceived; left out of the perception time",
            t.object_id
        ));
    }
    let t_d: Vec<f64> = timings.iter().filter_map(|t| t.t_d).collect();
    let t_dw = weighted_perception_time(&t_d, cfg.time.weighting);
    let braking = BrakingModel::new(mean_speed(&scenario.frames), env.brake_deceleration())?;
    let f_t = match t_dw {
        Some(t) => time_factor(t, braking.braking_time, cfg.time.lower),
        None => TimeFactor {
            value: 1.0,
            degenerate: false,
        },
    };
    if f_t.degenerate {
        warnings.push(format!(
            "braking time {:.3} s does not exceed T_l; the time factor is a step",
            braking.braking_time
        ));
    }

    let DetectionScores {
        precision,
        recall,
        mean_average_precision,
    } = clear::precision_recall_map(&tallies, scenario, log, cfg.iou_threshold);
    let moda = clear::moda(&tallies);
    let mota = clear::mota(&tallies);
    let modp = clear::modp(&scaled);
    let motp = clear::motp(&tallies);
    let motp_s_value = motp.map(|m| motp_s(m, &cfg.motp));

    let mut weights = cfg.weights;
    if weights.w_t > 0.0 && !log.has_track_ids() {
        warnings.push("perception log has no track ids; tracking weight set to 0".to_string());
        weights = MetricWeights::DETECTION_ONLY;
    }

    let (s_d, s_t) = match cfg.mode {
        AggregationMode::Cumulative => match (moda, mota) {
            (Some(moda), Some(mota)) => (
                Some(detection_safety(moda, modp.unwrap_or(0.0), f_c, f_t.value)),
                Some(tracking_safety(mota, motp_s_value.unwrap_or(0.0), f_c, f_t.value)),
            ),
            _ => (None, None),
        },
        AggregationMode::PerFrameMean => match per_frame_scores(&tallies, &scaled, &criticality, f_t.value, cfg) {
            Some((d, t)) => (Some(d), Some(t)),
            None => (None, None),
        },
    };
    if scenario.gt_count() == 0 {
        warnings.push("scenario has no ground-truth objects; no safety score".to_string());
    }
    let s = match (s_d, s_t) {
        (Some(d), Some(t)) => Some(safety_score(d, t, &weights)),
        _ => None,
    };

    let frames = tallies
        .iter()
        .zip(&scaled)
        .zip(&criticality)
        .zip(&scenario.frames)
        .map(|(((raw, sc), crit), f)| FrameBreakdown {
            index: raw.frame_index,
            timestamp: f.timestamp,
            gt: raw.gt_count,
            tp: raw.mapped_count(),
            fp: raw.false_positives,
            misses: raw.misses,
            mismatches: raw.mismatches,
            modp: sc.modp(),
            motp: raw.motp(),
            critical: crit.critical_ids.len(),
            missed_critical: crit.records.iter().filter(|r| r.undetected).count(),
            f_c: crit.relevance_factor,
        })
        .collect();

    Ok(SafetyReport {
        scenario: scenario.meta.name.clone(),
        precision,
        recall,
        map: mean_average_precision,
        moda,
        modp,
        mota,
        motp,
        motp_s: motp_s_value,
        f_c,
        f_t: f_t.value,
        t_dw,
        braking_time: braking.braking_time,
        time_ramp_degenerate: f_t.degenerate,
        s_d,
        s_t,
        label: s.map(classify),
        s,
        weights,
        frames,
        timings,
        critical: criticality.into_iter().flat_map(|c| c.records).collect(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::OrientedBox;
    use crate::scenario::{ClassLabel, EgoState, EnvironmentParams, ObjectState, ScenarioMeta};
    use proptest::prelude::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn score_examples() {
        assert_eq!(detection_safety(1.0, 1.0, 1.0, 1.0), 1.0);
        assert_eq!(detection_safety(0.9, 0.8, 0.0, 1.0), 0.0);
        assert!(approx(detection_safety(0.7, 0.5, 0.9, 1.0), 0.54));
        assert_eq!(tracking_safety(1.0, 1.0, 1.0, 1.0), 1.0);
        assert_eq!(tracking_safety(0.9, 0.9, 1.0, 0.0), 0.0);
        assert!(approx(tracking_safety(0.6, 0.8, 1.0, 1.0), 0.7));
        assert_eq!(detection_safety(-3.0, 0.4, 1.0, 1.0), 0.2);
    }

    #[test]
    fn weighted_score() {
        let w = MetricWeights::new(0.5, 0.5).unwrap();
        assert!(approx(safety_score(0.42, 0.53, &w), 0.475));
        assert_eq!(safety_score(0.3, 0.9, &MetricWeights::DETECTION_ONLY), 0.3);
        assert!(MetricWeights::new(0.6, 0.6).is_err());
        assert!(MetricWeights::new(1.2, -0.2).is_err());
    }

    #[test]
    fn classification_bands() {
        assert_eq!(classify(0.47), SafetyLabel::Good);
        assert_eq!(classify(0.0), SafetyLabel::Insufficient);
        assert_eq!(classify(0.8), SafetyLabel::VeryGood);
        assert_eq!(classify(0.8 + 1e-9), SafetyLabel::Excellent);
        assert_eq!(classify(0.2), SafetyLabel::Insufficient);
        assert_eq!(classify(1.0), SafetyLabel::Excellent);
    }

    fn scenario(objects: Vec<ObjectState>) -> Scenario {
        let frames = (0..5)
            .map(|i| Frame {
                index: i,
                timestamp: i as f64 * 0.1,
                ego: EgoState {
                    bbox: OrientedBox::new(i as f64, 0.0, 4.5, 1.8, 0.0).unwrap(),
                    speed: 10.0,
                },
                objects: objects
                    .iter()
                    .map(|o| ObjectState {
                        bbox: o.bbox.with_center([o.bbox.center_x + i as f64 * o.velocity[0] * 0.1, o.bbox.center_y]),
                        ..o.clone()
                    })
                    .collect(),
            })
            .collect();
        Scenario {
            meta: ScenarioMeta {
                name: "unit".into(),
                frame_rate_hz: 10.0,
            },
            environment: EnvironmentParams::default(),
            frames,
            warnings: vec![],
        }
    }

    fn car(id: &str, x: f64, y: f64, vx: f64) -> ObjectState {
        ObjectState {
            id: id.into(),
            class: ClassLabel::Car,
            bbox: OrientedBox::new(x, y, 4.0, 1.8, 0.0).unwrap(),
            velocity: [vx, 0.0],
        }
    }

    #[test]
    fn perfect_perception_is_excellent() {
        let sc = scenario(vec![car("a", 30.0, 0.0, 10.0), car("b", 20.0, 3.5, 12.0)]);
        let r = evaluate_scenario(&sc, &PerceptionLog::mirror_of(&sc), &EvaluationConfig::default()).unwrap();
        assert_eq!(r.s, Some(1.0));
        assert_eq!(r.label, Some(SafetyLabel::Excellent));
        assert_eq!(r.precision, Some(1.0));
        assert_eq!(r.recall, Some(1.0));
    }

    #[test]
    fn far_miss_beats_near_miss() {
        let dropped = |sc: &Scenario, id: &str| {
            let mut log = PerceptionLog::mirror_of(sc);
            for (f, d) in sc.frames.iter().zip(&mut log.frames) {
                let k = f.objects.iter().position(|o| o.id == id).unwrap();
                d.detections.remove(k);
            }
            log
        };
        let far = scenario(vec![car("a", 30.0, 3.5, 10.0), car("x", 80.0, 0.0, 0.0)]);
        let near = scenario(vec![car("a", 30.0, 3.5, 10.0), car("x", 12.0, 0.0, 0.0)]);
        let cfg = EvaluationConfig::default();
        let s_far = evaluate_scenario(&far, &dropped(&far, "x"), &cfg).unwrap().s.unwrap();
        let s_near = evaluate_scenario(&near, &dropped(&near, "x"), &cfg).unwrap().s.unwrap();
        assert!(s_far > s_near, "{s_far} vs {s_near}");
    }

    #[test]
    fn empty_ground_truth_has_no_score() {
        let sc = scenario(vec![]);
        let r = evaluate_scenario(&sc, &PerceptionLog::empty_for(&sc), &EvaluationConfig::default()).unwrap();
        assert_eq!(r.s, None);
        assert_eq!(r.moda, None);
        assert_eq!(r.label, None);
    }

    #[test]
    fn missing_track_ids_drop_tracking_weight() {
        let sc = scenario(vec![car("a", 30.0, 3.5, 10.0)]);
        let mut log = PerceptionLog::mirror_of(&sc);
        for d in log.frames.iter_mut().flat_map(|f| &mut f.detections) {
            d.track_id = None;
        }
        let r = evaluate_scenario(&sc, &log, &EvaluationConfig::default()).unwrap();
        assert_eq!(r.weights, MetricWeights::DETECTION_ONLY);
        assert_eq!(r.s, r.s_d);
        assert!(r.warnings.iter().any(|w| w.contains("track ids")));
    }

    #[test]
    fn frame_count_mismatch_is_input_error() {
        let sc = scenario(vec![car("a", 30.0, 3.5, 10.0)]);
        let mut log = PerceptionLog::mirror_of(&sc);
        log.frames.pop();
        let err = evaluate_scenario(&sc, &log, &EvaluationConfig::default()).unwrap_err();
        assert!(!err.is_config());
    }

    proptest! {
        #[test]
        fn classify_is_monotone(a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(classify(lo) <= classify(hi));
        }

        #[test]
        fn scores_in_unit_interval(moda in -5.0..1.0f64, modp in 0.0..1.0f64, fc in 0.0..1.0f64, ft in 0.0..1.0f64, wd in 0.0..1.0f64) {
            let sd = detection_safety(moda, modp, fc, ft);
            let st = tracking_safety(moda, modp, fc, ft);
            let w = MetricWeights::new(wd, 1.0 - wd).unwrap();
            let s = safety_score(sd, st, &w);
            prop_assert!((0.0..=1.0).contains(&sd));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
        }
    }
}
