//! Perception time of safety-critical objects and the resulting time factor.
//!
//! The perception time of an object is the delay between it first entering the
//! safety-critical area and its first matched detection. Objects perceived
//! before they become critical get negative times.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clear::{f_norm, FrameTally, NormalizationThresholds};
use crate::error::Error;
use crate::relevance::FrameCriticality;
use crate::scenario::{PerceptionLog, Scenario};

pub const DEFAULT_TIME_LOWER: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionTiming {
    pub object_id: String,
    /// First frame timestamp at which the object is critical, s.
    pub t_enter: f64,
    /// Earliest matched detection timestamp; `None` when never perceived.
    pub t_perceive: Option<f64>,
    /// `t_perceive - t_enter`; `None` stands for an object that was never perceived.
    pub t_d: Option<f64>,
}

/// How the sum in the weighted mean is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeWeighting {
    /// Divide by the number of objects.
    #[default]
    Count,
    /// Divide by the sum of the weights (1 or 2).
    WeightSum,
}

/// One timing per object that is critical in at least one frame, ordered by
/// first entry (ties in frame object order).
pub fn perception_times(
    scenario: &Scenario,
    log: &PerceptionLog,
    tallies: &[FrameTally],
    criticality: &[FrameCriticality],
) -> Vec<PerceptionTiming> {
    let mut first_seen: BTreeMap<&str, f64> = BTreeMap::new();
    for (t, dets) in tallies.iter().zip(&log.frames) {
        for m in &t.matches {
            let ts = dets.detections[m.detection_index].timestamp;
            first_seen
                .entry(m.gt_id.as_str())
                .and_modify(|v| *v = v.min(ts))
                .or_insert(ts);
        }
    }

    let mut timings: Vec<PerceptionTiming> = Vec::new();
    for (frame, crit) in scenario.frames.iter().zip(criticality) {
        for obj in &frame.objects {
            if !crit.critical_ids.contains(&obj.id) || timings.iter().any(|t| t.object_id == obj.id) {
                continue;
            }
            let t_perceive = first_seen.get(obj.id.as_str()).copied();
            timings.push(PerceptionTiming {
                object_id: obj.id.clone(),
                t_enter: frame.timestamp,
                t_perceive,
                t_d: t_perceive.map(|p| p - frame.timestamp),
            });
        }
    }
    timings
}

/// Weighted mean perception time: times above the plain mean count double.
/// `None` for an empty input.
pub fn weighted_perception_time(t_d: &[f64], weighting: TimeWeighting) -> Option<f64> {
    if t_d.is_empty() {
        return None;
    }
    let mean = t_d.iter().sum::<f64>() / t_d.len() as f64;
    let mut sum = 0.0;
    let mut weights = 0.0;
    for &t in t_d {
        let w = if t <= mean { 1.0 } else { 2.0 };
        sum += w * t;
        weights += w;
    }
    let m = match weighting {
        TimeWeighting::Count => t_d.len() as f64,
        TimeWeighting::WeightSum => weights,
    };
    Some(sum / m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeFactor {
    pub value: f64,
    /// Set when the braking time does not exceed the lower threshold and the
    /// ramp collapses to a step.
    pub degenerate: bool,
}

/// `f_norm(t_dw)` between `lower` and the braking time.
pub fn time_factor(t_dw: f64, braking_time: f64, lower: f64) -> TimeFactor {
    match NormalizationThresholds::new(lower, braking_time) {
        Ok(th) => TimeFactor {
            value: f_norm(t_dw, &th),
            degenerate: false,
        },
        Err(_) => TimeFactor {
            value: if t_dw <= lower { 1.0 } else { 0.0 },
            degenerate: true,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeConfig {
    pub lower: f64,
    pub weighting: TimeWeighting,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            lower: DEFAULT_TIME_LOWER,
            weighting: TimeWeighting::Count,
        }
    }
}

impl TimeConfig {
    pub fn new(lower: f64, weighting: TimeWeighting) -> Result<Self, Error> {
        if !(lower >= 0.0 && lower.is_finite()) {
            return Err(Error::Config(format!("time.T_l must be non-negative, got {lower}")));
        }
        Ok(Self { lower, weighting })
    }
}
