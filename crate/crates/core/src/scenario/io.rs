//! Line-delimited JSON ingestion and serialization.
//!
//! Scenario file: the first non-empty line is a header
//! `{"meta": {...}, "environment": {...}}`, every following line is one frame.
//! Perception log: one `{"index": .., "detections": [..]}` object per line.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    ClassLabel, Detection, DetectionFrame, EgoState, EnvironmentParams, Frame, ObjectState, PerceptionLog, RssParams,
    Scenario, ScenarioMeta, DEFAULT_EGO_LENGTH, DEFAULT_EGO_WIDTH, DEFAULT_FRAME_RATE_HZ,
};
use crate::error::{Error, Result};
use crate::geometry::OrientedBox;

/// Allowed relative deviation of a frame interval from the first one.
const FRAME_RATE_TOLERANCE: f64 = 0.01;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    meta: MetaRecord,
    #[serde(default)]
    environment: EnvironmentRecord,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaRecord {
    name: String,
    #[serde(default = "default_frame_rate")]
    frame_rate_hz: f64,
}

fn default_frame_rate() -> f64 {
    DEFAULT_FRAME_RATE_HZ
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EnvironmentRecord {
    mu: f64,
    g: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    a_brake: Option<f64>,
    rho: f64,
    a_accel_max: f64,
    a_brake_min: f64,
    a_brake_max: f64,
    a_lat_accel_max: f64,
    a_lat_brake_min: f64,
    mu_lat: f64,
}

impl Default for EnvironmentRecord {
    fn default() -> Self {
        EnvironmentRecord::from(&EnvironmentParams::default())
    }
}

impl From<&EnvironmentParams> for EnvironmentRecord {
    fn from(env: &EnvironmentParams) -> Self {
        Self {
            mu: env.friction,
            g: env.gravity,
            a_brake: env.brake_override,
            rho: env.rss.response_time,
            a_accel_max: env.rss.accel_max,
            a_brake_min: env.rss.brake_min,
            a_brake_max: env.rss.brake_max,
            a_lat_accel_max: env.rss.lat_accel_max,
            a_lat_brake_min: env.rss.lat_brake_min,
            mu_lat: env.rss.lat_fluctuation,
        }
    }
}

impl From<&EnvironmentRecord> for EnvironmentParams {
    fn from(r: &EnvironmentRecord) -> Self {
        Self {
            friction: r.mu,
            gravity: r.g,
            brake_override: r.a_brake,
            rss: RssParams {
                response_time: r.rho,
                accel_max: r.a_accel_max,
                brake_min: r.a_brake_min,
                brake_max: r.a_brake_max,
                lat_accel_max: r.a_lat_accel_max,
                lat_brake_min: r.a_lat_brake_min,
                lat_fluctuation: r.mu_lat,
            },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    ego: EgoRecord,
    #[serde(default)]
    objects: Vec<ObjectRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EgoRecord {
    x: f64,
    y: f64,
    yaw: f64,
    v: f64,
    #[serde(default = "default_ego_length")]
    l: f64,
    #[serde(default = "default_ego_width")]
    w: f64,
}

fn default_ego_length() -> f64 {
    DEFAULT_EGO_LENGTH
}

fn default_ego_width() -> f64 {
    DEFAULT_EGO_WIDTH
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectRecord {
    id: IdRepr,
    class: ClassLabel,
    x: f64,
    y: f64,
    yaw: f64,
    l: f64,
    w: f64,
    vx: f64,
    vy: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogFrameRecord {
    index: u64,
    #[serde(default)]
    detections: Vec<DetectionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    x: f64,
    y: f64,
    yaw: f64,
    l: f64,
    w: f64,
    class: String,
    score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    track_id: Option<IdRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_detect: Option<f64>,
}

/// Identifiers may be written as strings or integers.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum IdRepr {
    Int(i64),
    Str(String),
}

impl IdRepr {
    fn into_string(self) -> String {
        match self {
            IdRepr::Int(i) => i.to_string(),
            IdRepr::Str(s) => s,
        }
    }
}

fn parse_line<T: DeserializeOwned>(line: &str, location: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(line);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { String::new() } else { format!(", field {path}") };
        Error::input(format!("{location}{field}"), e.into_inner().to_string())
    })
}

fn make_box(x: f64, y: f64, l: f64, w: f64, yaw: f64, location: &str) -> Result<OrientedBox> {
    OrientedBox::new(x, y, l, w, yaw).map_err(|e| Error::input(location, e.to_string()))
}

fn non_empty_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    parse_scenario(&read_file(path)?, &path.display().to_string())
}

/// Parses and validates scenario text. `source` prefixes error locations.
pub fn parse_scenario(text: &str, source: &str) -> Result<Scenario> {
    let mut lines = non_empty_lines(text);
    let (header_line, header_text) = lines
        .next()
        .ok_or_else(|| Error::input(source, "empty scenario file"))?;
    let header: HeaderRecord = parse_line(header_text, &format!("{source} line {header_line} (header)"))?;
    let environment = EnvironmentParams::from(&header.environment);
    environment
        .validate()
        .map_err(|m| Error::input(format!("{source} line {header_line}, field environment"), m))?;
    if !(header.meta.frame_rate_hz > 0.0 && header.meta.frame_rate_hz.is_finite()) {
        return Err(Error::input(
            format!("{source} line {header_line}, field meta.frame_rate_hz"),
            "frame rate must be positive",
        ));
    }
    let period = 1.0 / header.meta.frame_rate_hz;

    let mut warnings = Vec::new();
    let mut frames: Vec<Frame> = Vec::new();
    for (line_no, line) in lines {
        let loc = format!("{source} line {line_no}");
        let rec: FrameRecord = parse_line(line, &loc)?;
        let loc = format!("{loc} (frame {})", rec.index);

        if let Some(prev) = frames.last() {
            if rec.index <= prev.index {
                return Err(Error::input(
                    format!("{loc}, field index"),
                    format!("non-increasing frame index at frame {}", rec.index),
                ));
            }
        }
        let timestamp = rec.t.unwrap_or(rec.index as f64 * period);
        if !timestamp.is_finite() {
            return Err(Error::input(format!("{loc}, field t"), "non-finite timestamp"));
        }
        if let Some(prev) = frames.last() {
            if timestamp <= prev.timestamp {
                return Err(Error::input(
                    format!("{loc}, field t"),
                    format!("non-monotonic timestamps at frame {}", rec.index),
                ));
            }
        }

        let e = &rec.ego;
        if !(e.v >= 0.0 && e.v.is_finite()) {
            return Err(Error::input(
                format!("{loc}, field ego.v"),
                format!("ego speed must be non-negative, got {}", e.v),
            ));
        }
        let ego = EgoState {
            bbox: make_box(e.x, e.y, e.l, e.w, e.yaw, &format!("{loc}, field ego"))?,
            speed: e.v,
        };

        let mut seen = HashSet::new();
        let mut objects = Vec::with_capacity(rec.objects.len());
        for (i, o) in rec.objects.into_iter().enumerate() {
            let oloc = format!("{loc}, field objects[{i}]");
            let id = o.id.into_string();
            if !seen.insert(id.clone()) {
                return Err(Error::input(
                    format!("{oloc}.id"),
                    format!("duplicate object id '{id}' in frame {}", rec.index),
                ));
            }
            if id.eq_ignore_ascii_case("ego") {
                warnings.push(format!("frame {}: object 'ego' excluded from evaluation", rec.index));
                continue;
            }
            if !(o.vx.is_finite() && o.vy.is_finite()) {
                return Err(Error::input(format!("{oloc}.vx"), "non-finite velocity"));
            }
            objects.push(ObjectState {
                id,
                class: o.class,
                bbox: make_box(o.x, o.y, o.l, o.w, o.yaw, &oloc)?,
                velocity: [o.vx, o.vy],
            });
        }

        frames.push(Frame {
            index: rec.index,
            timestamp,
            ego,
            objects,
        });
    }

    check_frame_rate(&frames, source)?;
    let nominal = frames_rate_deviation(&frames, period);
    if let Some(actual) = nominal {
        warnings.push(format!(
            "declared frame rate {:.3} Hz differs from timestamps ({actual:.3} Hz); timestamps are used",
            header.meta.frame_rate_hz
        ));
    }

    Ok(Scenario {
        meta: ScenarioMeta {
            name: header.meta.name,
            frame_rate_hz: header.meta.frame_rate_hz,
        },
        environment,
        frames,
        warnings,
    })
}

fn check_frame_rate(frames: &[Frame], source: &str) -> Result<()> {
    if frames.len() < 3 {
        return Ok(());
    }
    let reference = frames[1].timestamp - frames[0].timestamp;
    for pair in frames.windows(2).skip(1) {
        let dt = pair[1].timestamp - pair[0].timestamp;
        if (dt - reference).abs() > FRAME_RATE_TOLERANCE * reference {
            return Err(Error::input(
                format!("{source} (frame {}), field t", pair[1].index),
                format!(
                    "irregular frame interval at frame {}: {dt:.6} s vs {reference:.6} s",
                    pair[1].index
                ),
            ));
        }
    }
    Ok(())
}

/// Frame rate implied by the timestamps when it disagrees with the declared one.
fn frames_rate_deviation(frames: &[Frame], period: f64) -> Option<f64> {
    if frames.len() < 2 {
        return None;
    }
    let first = &frames[0];
    let last = &frames[frames.len() - 1];
    let steps = (last.index - first.index) as f64;
    let actual = (last.timestamp - first.timestamp) / steps;
    ((actual - period).abs() > FRAME_RATE_TOLERANCE * period).then(|| 1.0 / actual)
}

pub fn load_perception_log(path: impl AsRef<Path>, scenario: &Scenario) -> Result<PerceptionLog> {
    let path = path.as_ref();
    parse_perception_log(&read_file(path)?, &path.display().to_string(), scenario)
}

/// Parses a perception log and aligns it frame by frame with `scenario`.
pub fn parse_perception_log(text: &str, source: &str, scenario: &Scenario) -> Result<PerceptionLog> {
    let mut frames = Vec::with_capacity(scenario.frames.len());
    let mut inferred_timestamps = false;
    let mut unknown_classes: Vec<String> = Vec::new();

    for (pos, (line_no, line)) in non_empty_lines(text).enumerate() {
        let loc = format!("{source} line {line_no}");
        let rec: LogFrameRecord = parse_line(line, &loc)?;
        let Some(gt_frame) = scenario.frames.get(pos) else {
            return Err(Error::input(
                loc,
                format!(
                    "frame count mismatch: log has more frames than the scenario ({})",
                    scenario.frames.len()
                ),
            ));
        };
        if rec.index != gt_frame.index {
            return Err(Error::input(
                format!("{loc}, field index"),
                format!("frame index {} does not align with scenario frame {}", rec.index, gt_frame.index),
            ));
        }

        let mut detections = Vec::with_capacity(rec.detections.len());
        for (i, d) in rec.detections.into_iter().enumerate() {
            let dloc = format!("{loc} (frame {}), field detections[{i}]", rec.index);
            if !(0.0..=1.0).contains(&d.score) {
                return Err(Error::input(format!("{dloc}.score"), format!("score {} outside [0, 1]", d.score)));
            }
            let class = match ClassLabel::parse(&d.class) {
                Some(c) => c,
                None => {
                    if !unknown_classes.contains(&d.class) {
                        unknown_classes.push(d.class.clone());
                    }
                    ClassLabel::Misc
                }
            };
            let timestamp = match d.t_detect {
                Some(t) if t.is_finite() => t,
                Some(_) => return Err(Error::input(format!("{dloc}.t_detect"), "non-finite timestamp")),
                None => {
                    inferred_timestamps = true;
                    gt_frame.timestamp
                }
            };
            detections.push(Detection {
                bbox: make_box(d.x, d.y, d.l, d.w, d.yaw, &dloc)?,
                class,
                score: d.score,
                track_id: d.track_id.map(IdRepr::into_string),
                timestamp,
            });
        }
        frames.push(DetectionFrame {
            index: rec.index,
            detections,
        });
    }

    if frames.len() != scenario.frames.len() {
        return Err(Error::input(
            source,
            format!(
                "frame count mismatch: log has {} frames, scenario has {}",
                frames.len(),
                scenario.frames.len()
            ),
        ));
    }

    let mut warnings = Vec::new();
    if !unknown_classes.is_empty() {
        warnings.push(format!("unknown class labels mapped to misc: {}", unknown_classes.join(", ")));
    }
    if inferred_timestamps {
        warnings.push("detections without t_detect use their frame timestamp".to_string());
    }
    Ok(PerceptionLog {
        frames,
        inferred_timestamps,
        warnings,
    })
}

fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("records serialize to JSON")
}

pub fn write_scenario(scenario: &Scenario, mut out: impl Write) -> std::io::Result<()> {
    out.write_all(scenario_to_string(scenario).as_bytes())
}

pub fn scenario_to_string(scenario: &Scenario) -> String {
    let header = HeaderRecord {
        meta: MetaRecord {
            name: scenario.meta.name.clone(),
            frame_rate_hz: scenario.meta.frame_rate_hz,
        },
        environment: EnvironmentRecord::from(&scenario.environment),
    };
    let mut s = to_line(&header);
    s.push('\n');
    for f in &scenario.frames {
        let b = &f.ego.bbox;
        let rec = FrameRecord {
            index: f.index,
            t: Some(f.timestamp),
            ego: EgoRecord {
                x: b.center_x,
                y: b.center_y,
                yaw: b.yaw,
                v: f.ego.speed,
                l: b.length,
                w: b.width,
            },
            objects: f
                .objects
                .iter()
                .map(|o| ObjectRecord {
                    id: IdRepr::Str(o.id.clone()),
                    class: o.class,
                    x: o.bbox.center_x,
                    y: o.bbox.center_y,
                    yaw: o.bbox.yaw,
                    l: o.bbox.length,
                    w: o.bbox.width,
                    vx: o.velocity[0],
                    vy: o.velocity[1],
                })
                .collect(),
        };
        s.push_str(&to_line(&rec));
        s.push('\n');
    }
    s
}

pub fn write_perception_log(log: &PerceptionLog, mut out: impl Write) -> std::io::Result<()> {
    out.write_all(perception_log_to_string(log).as_bytes())
}

pub fn perception_log_to_string(log: &PerceptionLog) -> String {
    let mut s = String::new();
    for f in &log.frames {
        let rec = LogFrameRecord {
            index: f.index,
            detections: f
                .detections
                .iter()
                .map(|d| DetectionRecord {
                    x: d.bbox.center_x,
                    y: d.bbox.center_y,
                    yaw: d.bbox.yaw,
                    l: d.bbox.length,
                    w: d.bbox.width,
                    class: d.class.as_str().to_string(),
                    score: d.score,
                    track_id: d.track_id.clone().map(IdRepr::Str),
                    t_detect: Some(d.timestamp),
                })
                .collect(),
        };
        s.push_str(&to_line(&rec));
        s.push('\n');
    }
    s
}
