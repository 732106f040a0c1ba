//! Collision relevance of missed objects.
//!
//! Ego and ground-truth objects are extrapolated at constant velocity over the
//! ego braking horizon. An object whose longitudinal and lateral clearances to
//! the ego both fall below the RSS safety distances at some step is critical.
//! Critical objects the perception system missed are rated by the approximate
//! impact speed of a hypothetical collision and their road-user category.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};

use serde::{Deserialize, Serialize};

use crate::clear::FrameTally;
use crate::error::Error;
use crate::geometry::{normalize_angle, Point};
use crate::scenario::{Category, EgoState, EnvironmentParams, Frame, ObjectState, RssParams};

pub const DEFAULT_PREDICTION_STEP: f64 = 0.1;
/// Buffer applied to the braking time to get the prediction horizon.
pub const HORIZON_BUFFER: f64 = 1.1;
/// Below this speed an object's heading is taken from its box instead of its motion.
const STATIONARY_SPEED: f64 = 0.1;

/// Ego braking time and prediction horizon for the current speed and braking deceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrakingModel {
    pub v0: f64,
    pub deceleration: f64,
    pub braking_time: f64,
    pub horizon: f64,
}

impl BrakingModel {
    pub fn new(v0: f64, deceleration: f64) -> Result<Self, Error> {
        if !(v0 >= 0.0 && v0.is_finite()) {
            return Err(Error::Config(format!("ego speed must be non-negative, got {v0}")));
        }
        if !(deceleration > 0.0 && deceleration.is_finite()) {
            return Err(Error::Config(format!("braking deceleration must be positive, got {deceleration}")));
        }
        let braking_time = v0 / deceleration;
        Ok(Self {
            v0,
            deceleration,
            braking_time,
            horizon: HORIZON_BUFFER * braking_time,
        })
    }

    pub fn for_frame(frame: &Frame, env: &EnvironmentParams) -> Result<Self, Error> {
        Self::new(frame.ego.speed, env.brake_deceleration())
    }
}

/// Minimal safe distance between a rear and a front vehicle driving the same direction.
pub fn rss_longitudinal_same(v_rear: f64, v_front: f64, p: &RssParams) -> f64 {
    let rho = p.response_time;
    let v_rho = v_rear + rho * p.accel_max;
    let d = v_rear * rho + 0.5 * p.accel_max * rho * rho + v_rho * v_rho / (2.0 * p.brake_min)
        - v_front * v_front / (2.0 * p.brake_max);
    d.max(0.0)
}

/// Minimal safe distance between two vehicles approaching each other.
pub fn rss_longitudinal_opposite(v1: f64, v2_abs: f64, p: &RssParams) -> f64 {
    let rho = p.response_time;
    let a = p.accel_max;
    let b = p.brake_min;
    let v1_rho = v1 + rho * a;
    let v2_rho = v2_abs + rho * a;
    let d = (2.0 * v1 + rho * a) * rho / 2.0
        + v1_rho * v1_rho / (2.0 * b)
        + (2.0 * v2_abs + rho * a) * rho / 2.0
        + v2_rho * v2_rho / (2.0 * b);
    d.max(0.0)
}

/// Minimal safe lateral distance between object 1 (left) and object 2 (right).
///
/// Lateral velocities are signed with positive pointing right, i.e. from 1 towards 2.
/// The braking terms carry the sign of the velocity after the response time,
/// so objects moving apart only need the fluctuation margin.
pub fn rss_lateral(v1_lat: f64, v2_lat: f64, p: &RssParams) -> f64 {
    let rho = p.response_time;
    let a = p.lat_accel_max;
    let b = p.lat_brake_min;
    let v1_rho = v1_lat + rho * a;
    let v2_rho = v2_lat - rho * a;
    let travel_1 = (2.0 * v1_lat + rho * a) * rho / 2.0 + v1_rho * v1_rho.abs() / (2.0 * b);
    let travel_2 = (2.0 * v2_lat - rho * a) * rho / 2.0 + v2_rho * v2_rho.abs() / (2.0 * b);
    p.lat_fluctuation + (travel_1 - travel_2).max(0.0)
}

/// RSS parameters with the minimal braking capped by the road-surface deceleration.
pub fn effective_rss(env: &EnvironmentParams) -> RssParams {
    RssParams {
        brake_min: env.rss.brake_min.min(env.brake_deceleration()),
        ..env.rss
    }
}

/// Constant-velocity extrapolation of the ego and every object of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Offsets from the frame timestamp, s.
    pub offsets: Vec<f64>,
    pub ego: Vec<Point>,
    /// Indexed like `frame.objects`, then by step.
    pub objects: Vec<Vec<Point>>,
}

fn advance(p: Point, v: Point, t: f64) -> Point {
    [p[0] + v[0] * t, p[1] + v[1] * t]
}

pub fn predict_positions(frame: &Frame, braking: &BrakingModel, dt: f64) -> Prediction {
    assert!(dt > 0.0, "prediction step must be positive");
    let steps = if braking.horizon > 0.0 {
        (braking.horizon / dt - 1e-9).ceil().max(0.0) as usize
    } else {
        0
    };
    let offsets: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let ego_v = frame.ego.velocity();
    let ego_p = frame.ego.position();
    Prediction {
        ego: offsets.iter().map(|&t| advance(ego_p, ego_v, t)).collect(),
        objects: frame
            .objects
            .iter()
            .map(|o| offsets.iter().map(|&t| advance(o.bbox.center(), o.velocity, t)).collect())
            .collect(),
        offsets,
    }
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Safety-distance check for one object at one pair of predicted positions.
///
/// Clearances are measured edge to edge in the ego frame. The longitudinal
/// formula follows the sign of the object's velocity along the ego heading.
pub fn violates_safety_distance(ego: &EgoState, ego_pos: Point, obj: &ObjectState, obj_pos: Point, p: &RssParams) -> bool {
    let heading = ego.bbox.heading();
    let left = [-heading[1], heading[0]];
    let rel = [obj_pos[0] - ego_pos[0], obj_pos[1] - ego_pos[1]];
    let lon = dot(rel, heading);
    let lat = dot(rel, left);

    let lon_gap = (lon.abs() - 0.5 * ego.bbox.length - obj.bbox.half_extent_along(heading)).max(0.0);
    let lat_gap = (lat.abs() - 0.5 * ego.bbox.width - obj.bbox.half_extent_along(left)).max(0.0);

    let v0 = ego.speed;
    let v_lon = dot(obj.velocity, heading);
    let v_left = dot(obj.velocity, left);

    let d_long = match (lon >= 0.0, v_lon >= 0.0) {
        (true, true) => rss_longitudinal_same(v0, v_lon, p),
        (true, false) => rss_longitudinal_opposite(v0, -v_lon, p),
        (false, true) => rss_longitudinal_same(v_lon, v0, p),
        // behind and driving away
        (false, false) => 0.0,
    };
    // rightward-positive lateral speeds; the ego keeps its lane
    let d_lat = if lat >= 0.0 {
        rss_lateral(-v_left, 0.0, p)
    } else {
        rss_lateral(0.0, -v_left, p)
    };
    lon_gap < d_long && lat_gap < d_lat
}

/// Ids of the objects that violate the safety distances at any prediction step.
pub fn mark_critical(frame: &Frame, prediction: &Prediction, p: &RssParams) -> BTreeSet<String> {
    frame
        .objects
        .iter()
        .zip(&prediction.objects)
        .filter(|(obj, path)| {
            path.iter()
                .zip(&prediction.ego)
                .any(|(&op, &ep)| violates_safety_distance(&frame.ego, ep, obj, op, p))
        })
        .map(|(obj, _)| obj.id.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionGeometry {
    HeadOn,
    RearEnd,
    SideOn,
    Diagonal,
}

/// Impact-speed cut points (m/s) separating the four severity classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityThresholds {
    pub vru: [f64; 3],
    pub crumple_zone: [f64; 3],
}

impl Default for SeverityThresholds {
    fn default() -> Self {
        Self {
            // roughly 10 / 25 / 55 km/h and 15 / 50 / 80 km/h
            vru: [2.8, 6.9, 15.3],
            crumple_zone: [4.2, 13.9, 22.2],
        }
    }
}

impl SeverityThresholds {
    pub fn new(vru: [f64; 3], crumple_zone: [f64; 3]) -> Result<Self, Error> {
        for (name, cuts) in [("vru", vru), ("crumple", crumple_zone)] {
            let ascending = cuts[0] > 0.0 && cuts[0] < cuts[1] && cuts[1] < cuts[2] && cuts[2].is_finite();
            if !ascending {
                return Err(Error::Config(format!(
                    "severity.{name} must be strictly ascending positive speeds, got {cuts:?}"
                )));
            }
        }
        Ok(Self { vru, crumple_zone })
    }

    pub fn for_category(&self, category: Category) -> &[f64; 3] {
        match category {
            Category::Vru => &self.vru,
            Category::CrumpleZone => &self.crumple_zone,
        }
    }
}

/// Collision score for an impact speed: 0.9 (almost no effect), 0.75 (minor
/// injuries), 0.5 (serious injuries) or 0 (likely fatal).
pub fn severity_score(impact_speed: f64, category: Category, th: &SeverityThresholds) -> f64 {
    let cuts = th.for_category(category);
    if impact_speed < cuts[0] {
        0.9
    } else if impact_speed < cuts[1] {
        0.75
    } else if impact_speed < cuts[2] {
        0.5
    } else {
        0.0
    }
}

pub fn collision_geometry(heading_difference: f64) -> CollisionGeometry {
    let d = normalize_angle(heading_difference).abs();
    if d < FRAC_PI_4 {
        CollisionGeometry::RearEnd
    } else if d > 3.0 * FRAC_PI_4 {
        CollisionGeometry::HeadOn
    } else if (d - 0.5 * PI).abs() <= FRAC_PI_8 {
        CollisionGeometry::SideOn
    } else {
        CollisionGeometry::Diagonal
    }
}

fn object_heading(obj: &ObjectState) -> f64 {
    let speed = obj.velocity[0].hypot(obj.velocity[1]);
    if speed > STATIONARY_SPEED {
        obj.velocity[1].atan2(obj.velocity[0])
    } else {
        obj.bbox.yaw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactEstimate {
    pub geometry: CollisionGeometry,
    /// Magnitude of the relative velocity, m/s.
    pub impact_speed: f64,
    pub severity: f64,
}

pub fn impact_severity(ego: &EgoState, obj: &ObjectState, th: &SeverityThresholds) -> ImpactEstimate {
    let ve = ego.velocity();
    let impact_speed = (ve[0] - obj.velocity[0]).hypot(ve[1] - obj.velocity[1]);
    ImpactEstimate {
        geometry: collision_geometry(object_heading(obj) - ego.yaw()),
        impact_speed,
        severity: severity_score(impact_speed, obj.category(), th),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityRecord {
    pub frame_index: u64,
    pub object_id: String,
    pub critical: bool,
    pub undetected: bool,
    pub geometry: CollisionGeometry,
    pub impact_speed: f64,
    /// Present only for critical objects the perception system missed.
    pub severity: Option<f64>,
}

/// Worst (smallest) severity among missed critical objects; 1 when there is none.
pub fn frame_relevance_factor(records: &[CriticalityRecord]) -> f64 {
    records
        .iter()
        .filter(|r| r.critical && r.undetected)
        .filter_map(|r| r.severity)
        .fold(1.0, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameCriticality {
    pub frame_index: u64,
    pub braking: BrakingModel,
    pub critical_ids: BTreeSet<String>,
    pub records: Vec<CriticalityRecord>,
    pub relevance_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelevanceConfig {
    pub prediction_step: f64,
    pub thresholds: SeverityThresholds,
}

impl Default for RelevanceConfig {
    fn default() -> Self {
        Self {
            prediction_step: DEFAULT_PREDICTION_STEP,
            thresholds: SeverityThresholds::default(),
        }
    }
}

/// Criticality of every object in a frame; "undetected" means not matched in `tally`.
pub fn assess_frame(
    frame: &Frame,
    tally: &FrameTally,
    env: &EnvironmentParams,
    cfg: &RelevanceConfig,
) -> Result<FrameCriticality, Error> {
    let braking = BrakingModel::for_frame(frame, env)?;
    let rss = effective_rss(env);
    let prediction = predict_positions(frame, &braking, cfg.prediction_step);
    let critical_ids = mark_critical(frame, &prediction, &rss);
    let records: Vec<CriticalityRecord> = frame
        .objects
        .iter()
        .filter(|o| critical_ids.contains(&o.id))
        .map(|o| {
            let undetected = !tally.is_matched(&o.id);
            let impact = impact_severity(&frame.ego, o, &cfg.thresholds);
            CriticalityRecord {
                frame_index: frame.index,
                object_id: o.id.clone(),
                critical: true,
                undetected,
                geometry: impact.geometry,
                impact_speed: impact.impact_speed,
                severity: undetected.then_some(impact.severity),
            }
        })
        .collect();
    Ok(FrameCriticality {
        frame_index: frame.index,
        braking,
        relevance_factor: frame_relevance_factor(&records),
        critical_ids,
        records,
    })
}
