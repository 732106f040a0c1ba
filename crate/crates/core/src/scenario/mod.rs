//! Ground-truth scenarios, ego odometry, environment parameters and perception logs.

mod io;
pub mod kitti;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{OrientedBox, Point};

pub use io::{
    load_perception_log, load_scenario, parse_perception_log, parse_scenario, perception_log_to_string,
    scenario_to_string, write_perception_log, write_scenario,
};

pub const DEFAULT_FRAME_RATE_HZ: f64 = 10.0;
pub const GRAVITY: f64 = 9.81;
/// Ego footprint used when a scenario does not give one, m.
pub const DEFAULT_EGO_LENGTH: f64 = 4.8;
pub const DEFAULT_EGO_WIDTH: f64 = 1.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Car,
    Van,
    Truck,
    Pedestrian,
    Cyclist,
    Tram,
    Misc,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 7] = [
        ClassLabel::Car,
        ClassLabel::Van,
        ClassLabel::Truck,
        ClassLabel::Pedestrian,
        ClassLabel::Cyclist,
        ClassLabel::Tram,
        ClassLabel::Misc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Car => "car",
            ClassLabel::Van => "van",
            ClassLabel::Truck => "truck",
            ClassLabel::Pedestrian => "pedestrian",
            ClassLabel::Cyclist => "cyclist",
            ClassLabel::Tram => "tram",
            ClassLabel::Misc => "misc",
        }
    }

    /// Case-insensitive lookup; `None` for labels outside the known set.
    pub fn parse(label: &str) -> Option<Self> {
        let lower = label.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|c| c.as_str() == lower)
    }

    /// Lookup that maps unknown labels to [`ClassLabel::Misc`].
    pub fn parse_or_misc(label: &str) -> Self {
        Self::parse(label).unwrap_or(ClassLabel::Misc)
    }

    pub fn category(self) -> Category {
        match self {
            ClassLabel::Pedestrian | ClassLabel::Cyclist => Category::Vru,
            _ => Category::CrumpleZone,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Road-user category deciding which impact-speed thresholds apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    /// Vulnerable road users: pedestrians and cyclists.
    Vru,
    /// Road users protected by a crumple zone.
    CrumpleZone,
}

/// A ground-truth road user in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectState {
    pub id: String,
    pub class: ClassLabel,
    pub bbox: OrientedBox,
    /// Ground-plane velocity in m/s.
    pub velocity: Point,
}

impl ObjectState {
    pub fn category(&self) -> Category {
        self.class.category()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoState {
    pub bbox: OrientedBox,
    /// Speed along the heading, m/s.
    pub speed: f64,
}

impl EgoState {
    pub fn position(&self) -> Point {
        self.bbox.center()
    }

    pub fn yaw(&self) -> f64 {
        self.bbox.yaw
    }

    pub fn velocity(&self) -> Point {
        let h = self.bbox.heading();
        [self.speed * h[0], self.speed * h[1]]
    }
}

/// Parameters of the safety-distance model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssParams {
    /// Response time, s.
    pub response_time: f64,
    pub accel_max: f64,
    pub brake_min: f64,
    pub brake_max: f64,
    pub lat_accel_max: f64,
    pub lat_brake_min: f64,
    /// Lateral fluctuation margin, m.
    pub lat_fluctuation: f64,
}

impl Default for RssParams {
    fn default() -> Self {
        Self {
            response_time: 0.5,
            accel_max: 2.0,
            brake_min: 4.0,
            brake_max: 8.0,
            lat_accel_max: 1.0,
            lat_brake_min: 1.0,
            lat_fluctuation: 0.2,
        }
    }
}

impl RssParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("a_accel_max", self.accel_max),
            ("a_brake_min", self.brake_min),
            ("a_brake_max", self.brake_max),
            ("a_lat_accel_max", self.lat_accel_max),
            ("a_lat_brake_min", self.lat_brake_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.response_time >= 0.0 && self.response_time.is_finite()) {
            return Err(format!("rho must be non-negative, got {}", self.response_time));
        }
        if !(self.lat_fluctuation >= 0.0 && self.lat_fluctuation.is_finite()) {
            return Err(format!("mu_lat must be non-negative, got {}", self.lat_fluctuation));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentParams {
    /// Tyre-road friction coefficient.
    pub friction: f64,
    pub gravity: f64,
    /// Explicit braking deceleration; `friction * gravity` when unset.
    pub brake_override: Option<f64>,
    pub rss: RssParams,
}

impl Default for EnvironmentParams {
    fn default() -> Self {
        Self {
            friction: 0.8,
            gravity: GRAVITY,
            brake_override: None,
            rss: RssParams::default(),
        }
    }
}

impl EnvironmentParams {
    /// Weather-dependent braking deceleration of the ego vehicle, m/s².
    pub fn brake_deceleration(&self) -> f64 {
        self.brake_override.unwrap_or(self.friction * self.gravity)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.friction > 0.0 && self.friction <= 1.5) {
            return Err(format!("mu must be in (0, 1.5], got {}", self.friction));
        }
        if !(self.gravity > 0.0) {
            return Err(format!("g must be positive, got {}", self.gravity));
        }
        if let Some(a) = self.brake_override {
            if !(a > 0.0 && a.is_finite()) {
                return Err(format!("a_brake must be positive, got {a}"));
            }
        }
        self.rss.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u64,
    /// Seconds.
    pub timestamp: f64,
    pub ego: EgoState,
    pub objects: Vec<ObjectState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMeta {
    pub name: String,
    pub frame_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub meta: ScenarioMeta,
    pub environment: EnvironmentParams,
    pub frames: Vec<Frame>,
    /// Non-fatal notes collected during ingestion.
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn gt_count(&self) -> usize {
        self.frames.iter().map(|f| f.objects.len()).sum()
    }

    /// Mean of the frame-to-frame intervals, or the nominal period for single-frame scenarios.
    pub fn frame_period(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(first), Some(last)) if self.frames.len() > 1 => {
                (last.timestamp - first.timestamp) / (self.frames.len() - 1) as f64
            }
            _ => 1.0 / self.meta.frame_rate_hz,
        }
    }
}

/// One object reported by the perception system under test.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: OrientedBox,
    pub class: ClassLabel,
    pub score: f64,
    pub track_id: Option<String>,
    /// Wall-clock instant the detection was emitted, s.
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub index: u64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionLog {
    pub frames: Vec<DetectionFrame>,
    /// Set when at least one detection lacked `t_detect` and got its frame timestamp.
    pub inferred_timestamps: bool,
    pub warnings: Vec<String>,
}

impl PerceptionLog {
    /// Log of a system that never reports anything.
    pub fn empty_for(scenario: &Scenario) -> Self {
        Self {
            frames: scenario
                .frames
                .iter()
                .map(|f| DetectionFrame {
                    index: f.index,
                    detections: Vec::new(),
                })
                .collect(),
            inferred_timestamps: false,
            warnings: Vec::new(),
        }
    }

    /// Log reproducing every ground-truth box exactly, with object ids as track ids.
    pub fn mirror_of(scenario: &Scenario) -> Self {
        Self {
            frames: scenario
                .frames
                .iter()
                .map(|f| DetectionFrame {
                    index: f.index,
                    detections: f
                        .objects
                        .iter()
                        .map(|o| Detection {
                            bbox: o.bbox,
                            class: o.class,
                            score: 1.0,
                            track_id: Some(o.id.clone()),
                            timestamp: f.timestamp,
                        })
                        .collect(),
                })
                .collect(),
            inferred_timestamps: false,
            warnings: Vec::new(),
        }
    }

    pub fn has_track_ids(&self) -> bool {
        self.frames
            .iter()
            .flat_map(|f| &f.detections)
            .any(|d| d.track_id.is_some())
    }

    pub fn detection_count(&self) -> usize {
        self.frames.iter().map(|f| f.detections.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories() {
        assert_eq!(ClassLabel::Pedestrian.category(), Category::Vru);
        assert_eq!(ClassLabel::Cyclist.category(), Category::Vru);
        for c in [ClassLabel::Car, ClassLabel::Van, ClassLabel::Truck, ClassLabel::Tram, ClassLabel::Misc] {
            assert_eq!(c.category(), Category::CrumpleZone);
        }
    }

    #[test]
    fn class_parsing() {
        assert_eq!(ClassLabel::parse("Truck"), Some(ClassLabel::Truck));
        assert_eq!(ClassLabel::parse("DontCare"), None);
        assert_eq!(ClassLabel::parse_or_misc("bus"), ClassLabel::Misc);
    }

    #[test]
    fn braking_from_friction() {
        let mut env = EnvironmentParams::default();
        assert!((env.brake_deceleration() - 0.8 * 9.81).abs() < 1e-12);
        env.brake_override = Some(5.0);
        assert_eq!(env.brake_deceleration(), 5.0);
        env.friction = 0.0;
        assert!(env.validate().is_err());
    }
}
