//! Browser bindings for three interactive views: box overlap, the detection
//! quality curves and the safety distances.

use perception_safety::geometry::{area, intersection_polygon, EvaluationRange, OrientedBox};
use perception_safety::relevance::{
    effective_rss, rss_lateral, rss_longitudinal_opposite, rss_longitudinal_same, BrakingModel,
};
use perception_safety::scenario::EnvironmentParams;
use perception_safety::verification::{f_s, f_v, VerificationConfig};
use perception_safety::{cover, iou};
use wasm_bindgen::prelude::*;

fn js_err(e: perception_safety::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Overlap of a detection box with a ground-truth box.
#[wasm_bindgen]
pub struct Overlap {
    iou: f64,
    cover: f64,
    intersection_area: f64,
    polygon: Vec<f64>,
}

#[wasm_bindgen]
impl Overlap {
    #[wasm_bindgen(getter)]
    pub fn iou(&self) -> f64 {
        self.iou
    }

    #[wasm_bindgen(getter)]
    pub fn cover(&self) -> f64 {
        self.cover
    }

    #[wasm_bindgen(getter, js_name = intersectionArea)]
    pub fn intersection_area(&self) -> f64 {
        self.intersection_area
    }

    /// Intersection polygon as flat `[x0, y0, x1, y1, ...]`.
    #[wasm_bindgen(getter)]
    pub fn polygon(&self) -> Vec<f64> {
        self.polygon.clone()
    }
}

fn overlap_of(d: &OrientedBox, g: &OrientedBox) -> Overlap {
    let polygon = intersection_polygon(d, g);
    Overlap {
        iou: iou(d, g),
        cover: cover(d, g),
        intersection_area: polygon_area(&polygon),
        polygon: polygon.into_iter().flatten().collect(),
    }
}

fn polygon_area(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn overlap(
    dx: f64,
    dy: f64,
    dl: f64,
    dw: f64,
    dyaw: f64,
    gx: f64,
    gy: f64,
    gl: f64,
    gw: f64,
    gyaw: f64,
) -> Result<Overlap, JsError> {
    let d = OrientedBox::new(dx, dy, dl, dw, dyaw).map_err(js_err)?;
    let g = OrientedBox::new(gx, gy, gl, gw, gyaw).map_err(js_err)?;
    Ok(overlap_of(&d, &g))
}

/// Corners of a box as flat `[x0, y0, ..., x3, y3]`, for drawing.
#[wasm_bindgen]
pub fn corners(x: f64, y: f64, l: f64, w: f64, yaw: f64) -> Result<Vec<f64>, JsError> {
    let b = OrientedBox::new(x, y, l, w, yaw).map_err(js_err)?;
    Ok(b.corners().into_iter().flatten().collect())
}

#[wasm_bindgen(js_name = boxArea)]
pub fn box_area(l: f64, w: f64) -> Result<f64, JsError> {
    Ok(area(&OrientedBox::new(0.0, 0.0, l, w, 0.0).map_err(js_err)?))
}

fn verification_config(min_cover: f64, over_tolerance: f64, max_over: f64) -> perception_safety::Result<VerificationConfig> {
    VerificationConfig::new(min_cover, over_tolerance, max_over, EvaluationRange::new(100.0)?)
}

fn samples(n: usize, max: f64) -> impl Iterator<Item = f64> {
    let step = if n > 1 { max / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| i as f64 * step)
}

/// `f_s` sampled at `n` evenly spaced cover values in `[0, c_max]`.
#[wasm_bindgen(js_name = coverScoreCurve)]
pub fn cover_score_curve(
    min_cover: f64,
    over_tolerance: f64,
    max_over: f64,
    c_max: f64,
    n: usize,
) -> Result<Vec<f64>, JsError> {
    let cfg = verification_config(min_cover, over_tolerance, max_over).map_err(js_err)?;
    Ok(samples(n, c_max).map(|c| f_s(c, &cfg)).collect())
}

/// `f_v` for a fixed cover, sampled at `n` normalized distances in `[0, 1]`.
#[wasm_bindgen(js_name = verificationCurve)]
pub fn verification_curve(
    c: f64,
    min_cover: f64,
    over_tolerance: f64,
    max_over: f64,
    n: usize,
) -> Result<Vec<f64>, JsError> {
    let cfg = verification_config(min_cover, over_tolerance, max_over).map_err(js_err)?;
    Ok(samples(n, 1.0).map(|d| f_v(c, d, &cfg)).collect())
}

/// Safety distances between the ego vehicle and one other road user.
#[wasm_bindgen]
pub struct SafetyDistances {
    same_direction: f64,
    opposite_direction: f64,
    lateral: f64,
    deceleration: f64,
    braking_time: f64,
    horizon: f64,
}

#[wasm_bindgen]
impl SafetyDistances {
    #[wasm_bindgen(getter, js_name = sameDirection)]
    pub fn same_direction(&self) -> f64 {
        self.same_direction
    }

    #[wasm_bindgen(getter, js_name = oppositeDirection)]
    pub fn opposite_direction(&self) -> f64 {
        self.opposite_direction
    }

    #[wasm_bindgen(getter)]
    pub fn lateral(&self) -> f64 {
        self.lateral
    }

    #[wasm_bindgen(getter)]
    pub fn deceleration(&self) -> f64 {
        self.deceleration
    }

    #[wasm_bindgen(getter, js_name = brakingTime)]
    pub fn braking_time(&self) -> f64 {
        self.braking_time
    }

    #[wasm_bindgen(getter)]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

fn distances(
    ego_speed: f64,
    other_speed: f64,
    closing_lateral_speed: f64,
    friction: f64,
    response_time: f64,
) -> perception_safety::Result<SafetyDistances> {
    if !(friction > 0.0 && response_time >= 0.0) {
        return Err(perception_safety::Error::Config(format!(
            "friction must be positive and response time non-negative, got {friction} and {response_time}"
        )));
    }
    let mut env = EnvironmentParams {
        friction,
        ..EnvironmentParams::default()
    };
    env.rss.response_time = response_time;
    let rss = effective_rss(&env);
    let braking = BrakingModel::new(ego_speed, env.brake_deceleration())?;
    Ok(SafetyDistances {
        // ego drives behind the other road user
        same_direction: rss_longitudinal_same(ego_speed, other_speed, &rss),
        opposite_direction: rss_longitudinal_opposite(ego_speed, other_speed.abs(), &rss),
        // ego on the left, the other one to its right drifting towards it
        lateral: rss_lateral(0.0, -closing_lateral_speed, &rss),
        deceleration: braking.deceleration,
        braking_time: braking.braking_time,
        horizon: braking.horizon,
    })
}

#[wasm_bindgen(js_name = safetyDistances)]
pub fn safety_distances(
    ego_speed: f64,
    other_speed: f64,
    closing_lateral_speed: f64,
    friction: f64,
    response_time: f64,
) -> Result<SafetyDistances, JsError> {
    distances(ego_speed, other_speed, closing_lateral_speed, friction, response_time).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_boxes() {
        let o = overlap(0.0, 0.0, 4.0, 2.0, 0.3, 0.0, 0.0, 4.0, 2.0, 0.3).unwrap();
        assert_eq!(o.iou(), 1.0);
        assert_eq!(o.cover(), 1.0);
        assert!((o.intersection_area() - 8.0).abs() < 1e-9);
        assert_eq!(o.polygon().len(), 8);
    }

    #[test]
    fn half_shifted_boxes() {
        let o = overlap(1.0, 0.0, 2.0, 2.0, 0.0, 0.0, 0.0, 2.0, 2.0, 0.0).unwrap();
        assert!((o.iou() - 1.0 / 3.0).abs() < 1e-12);
        assert!((o.cover() - 0.5).abs() < 1e-12);
        assert!((o.intersection_area() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_boxes_have_no_polygon() {
        let o = overlap(10.0, 0.0, 2.0, 2.0, 0.0, 0.0, 0.0, 2.0, 2.0, 0.0).unwrap();
        assert_eq!(o.iou(), 0.0);
        assert!(o.polygon().is_empty());
    }

    #[test]
    fn corner_list() {
        let c = corners(0.0, 0.0, 4.0, 2.0, 0.0).unwrap();
        assert_eq!(c.len(), 8);
        assert!(c.chunks(2).all(|p| p[0].abs() == 2.0 && p[1].abs() == 1.0));
    }

    #[test]
    fn curves_have_requested_length_and_shape() {
        let fs = cover_score_curve(0.5, 1.5, 3.0, 4.0, 81).unwrap();
        assert_eq!(fs.len(), 81);
        assert_eq!(fs[0], 0.0);
        // c = 1 sits at index 20
        assert!((fs[20] - 1.0).abs() < 1e-12);
        assert_eq!(*fs.last().unwrap(), 0.0);

        let fv = verification_curve(0.75, 0.5, 1.5, 3.0, 11).unwrap();
        assert_eq!(fv.len(), 11);
        assert!(fv.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn distances_match_core_formulas() {
        let d = distances(20.0, 10.0, 0.0, 0.8, 1.0).unwrap();
        assert!(d.same_direction() > 0.0);
        assert!(d.opposite_direction() > d.same_direction());
        assert!((d.deceleration() - 0.8 * 9.81).abs() < 1e-9);
        assert!((d.horizon() - 1.1 * d.braking_time()).abs() < 1e-12);
        // both at rest: each may drift 1 m towards the other within the response time
        assert!((d.lateral() - 2.2).abs() < 1e-12);
    }

    #[test]
    fn wet_road_needs_more_distance() {
        let dry = distances(25.0, 15.0, 0.5, 0.9, 0.5).unwrap();
        let wet = distances(25.0, 15.0, 0.5, 0.2, 0.5).unwrap();
        assert!(wet.same_direction() > dry.same_direction());
        assert!(wet.braking_time() > dry.braking_time());
    }

    #[test]
    fn invalid_inputs_are_errors() {
        assert!(distances(10.0, 10.0, 0.0, 0.0, 0.5).is_err());
        assert!(distances(-1.0, 10.0, 0.0, 0.8, 0.5).is_err());
        assert!(verification_config(1.5, 1.5, 3.0).is_err());
    }
}
